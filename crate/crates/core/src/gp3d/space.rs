//! Discrete 3D spaces carrying the rotating GP functional.
//!
//! A space fixes a primary representation (the optimization variable), a
//! weighted inner product on it, and a map to physical nodal values where the
//! quartic term is evaluated by quadrature.

use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::discretization::{
    CartesianGrid3D, CartesianOperator, ChannelOperator, ComplexField3D, KineticSolver, RadialGrid,
    ScalarField2D, TrapSpec,
};
use crate::error::{Error, Result};

use super::vortex::{detect_vortices_cartesian, detect_vortices_cylindrical, VortexReport};

const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };

pub trait GpSpace: Sync {
    /// Number of complex unknowns in the primary representation.
    fn len(&self) -> usize;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Number of physical nodes.
    fn node_len(&self) -> usize;

    /// Shape tag attached to fields in the primary representation.
    fn dims(&self) -> [usize; 3];

    fn trap(&self) -> &TrapSpec;

    /// `Re ⟨a, b⟩` in the primary inner product.
    fn dot(&self, a: &[Complex64], b: &[Complex64]) -> f64;

    /// Full complex `⟨a, b⟩`.
    fn cdot(&self, a: &[Complex64], b: &[Complex64]) -> Complex64;

    /// `out = (-Δ - Ω L_z + V) x`.
    fn apply_h0(&self, omega: f64, x: &[Complex64], out: &mut [Complex64]);

    /// `out = L_z x`.
    fn apply_lz(&self, x: &[Complex64], out: &mut [Complex64]);

    /// Physical nodal values of `x`.
    fn to_nodes(&self, x: &[Complex64], nodes: &mut [Complex64]);

    /// Adjoint of [`GpSpace::to_nodes`] with respect to the node and primary
    /// weights, so that the gradient of `Σ_nodes ν |ψ|⁴` is `2 from_nodes(|ψ|²ψ)`.
    fn from_nodes(&self, nodes: &[Complex64], out: &mut [Complex64]);

    /// Quadrature weights of the nodes.
    fn node_weights(&self) -> &[f64];

    /// Approximate inverse of `(α + kinetic part)` applied to `r`.
    fn precondition(&self, r: &[Complex64], alpha: f64, out: &mut [Complex64]);

    fn name(&self) -> &'static str;

    /// Radial and axial half-extents of the box.
    fn extent(&self) -> (f64, f64);

    /// Field with nodal values `f(x, y, z)`, in the primary representation.
    fn sample_fn(&self, f: &mut dyn FnMut(f64, f64, f64) -> Complex64) -> Vec<Complex64>;

    /// The state `f(r, z) e^{inφ}` for a channel orbital on `grid`.
    fn channel_state(&self, grid: &RadialGrid, n: i64, f: &ScalarField2D) -> Result<Vec<Complex64>>;

    /// Number of `z` slices available to [`GpSpace::detect_vortices`].
    fn z_slices(&self) -> usize;

    fn detect_vortices(&self, x: &[Complex64], z_index: usize, amplitude_floor: f64) -> Result<VortexReport>;
}

/// Cell-centered Cartesian grid with zero Dirichlet ghosts.
pub struct CartesianSpace {
    pub grid: CartesianGrid3D,
    trap: TrapSpec,
    op: CartesianOperator,
    weights: Vec<f64>,
}

impl CartesianSpace {
    pub fn new(grid: &CartesianGrid3D, trap: &TrapSpec) -> Result<Self> {
        trap.validate()?;
        Ok(CartesianSpace {
            grid: grid.clone(),
            trap: *trap,
            op: CartesianOperator::new(grid, trap),
            weights: vec![grid.cell_volume(); grid.len()],
        })
    }

    pub fn check(&self, psi: &ComplexField3D) -> Result<()> {
        if psi.dims != self.grid.n || psi.values.len() != self.grid.len() {
            return Err(Error::shape(format!(
                "field dims {:?} do not match grid {:?}",
                psi.dims, self.grid.n
            )));
        }
        Ok(())
    }
}

impl GpSpace for CartesianSpace {
    fn len(&self) -> usize {
        self.grid.len()
    }

    fn node_len(&self) -> usize {
        self.grid.len()
    }

    fn dims(&self) -> [usize; 3] {
        self.grid.n
    }

    fn trap(&self) -> &TrapSpec {
        &self.trap
    }

    fn dot(&self, a: &[Complex64], b: &[Complex64]) -> f64 {
        let mut acc = 0.0;
        for k in 0..a.len() {
            acc += a[k].re * b[k].re + a[k].im * b[k].im;
        }
        acc * self.grid.cell_volume()
    }

    fn cdot(&self, a: &[Complex64], b: &[Complex64]) -> Complex64 {
        let mut acc = ZERO;
        for k in 0..a.len() {
            acc += a[k].conj() * b[k];
        }
        acc * self.grid.cell_volume()
    }

    fn apply_h0(&self, omega: f64, x: &[Complex64], out: &mut [Complex64]) {
        self.op.apply(omega, 0.0, x, out);
    }

    fn apply_lz(&self, x: &[Complex64], out: &mut [Complex64]) {
        self.op.apply_lz(x, out);
    }

    fn to_nodes(&self, x: &[Complex64], nodes: &mut [Complex64]) {
        nodes.copy_from_slice(x);
    }

    fn from_nodes(&self, nodes: &[Complex64], out: &mut [Complex64]) {
        out.copy_from_slice(nodes);
    }

    fn node_weights(&self) -> &[f64] {
        &self.weights
    }

    fn precondition(&self, r: &[Complex64], alpha: f64, out: &mut [Complex64]) {
        let kd = self.op.kinetic_diag();
        let v = self.op.potential();
        for k in 0..r.len() {
            out[k] = r[k] / (alpha + kd + v[k]);
        }
    }

    fn name(&self) -> &'static str {
        "cartesian"
    }

    fn extent(&self) -> (f64, f64) {
        let h = self.grid.half_extent;
        (h[0].min(h[1]), h[2])
    }

    fn sample_fn(&self, f: &mut dyn FnMut(f64, f64, f64) -> Complex64) -> Vec<Complex64> {
        ComplexField3D::from_cartesian_fn(&self.grid, f).values
    }

    fn channel_state(&self, grid: &RadialGrid, n: i64, f: &ScalarField2D) -> Result<Vec<Complex64>> {
        grid.check(f)?;
        Ok(self.sample_fn(&mut |x, y, z| {
            let r = x.hypot(y);
            let amp = grid.sample(&f.values, r, z);
            Complex64::from_polar(amp, n as f64 * y.atan2(x))
        }))
    }

    fn z_slices(&self) -> usize {
        self.grid.n[2]
    }

    fn detect_vortices(&self, x: &[Complex64], z_index: usize, amplitude_floor: f64) -> Result<VortexReport> {
        detect_vortices_cartesian(&self.grid, x, z_index, amplitude_floor)
    }
}

/// `(r, z)` grid times a uniform azimuthal grid, with `ψ = Σ_m c_m(r, z) e^{imφ}`
/// for `|m| ≤ m_max` as the primary representation.
///
/// Each Fourier mode is acted on by the exact channel operator, so any
/// channel orbital `f e^{inφ}` is represented without error and has the same
/// discrete energy as in the channel module. The quartic term is evaluated
/// on `n_phi ≥ 4 m_max + 1` azimuthal nodes, which integrates `|ψ|⁴` exactly
/// in `φ` for band-limited fields.
pub struct CylindricalSpace {
    pub grid: RadialGrid,
    pub m_max: usize,
    pub n_phi: usize,
    trap: TrapSpec,
    ops: Vec<ChannelOperator>,
    kinetic: KineticSolver,
    node_weights: Vec<f64>,
    fft_inv: Arc<dyn Fft<f64>>,
    fft_fwd: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for CylindricalSpace {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CylindricalSpace")
            .field("nr", &self.grid.nr)
            .field("nz", &self.grid.nz)
            .field("m_max", &self.m_max)
            .field("n_phi", &self.n_phi)
            .finish()
    }
}

/// Smallest power of two that is at least `4 m_max + 1` and at least 8.
pub fn default_n_phi(m_max: usize) -> usize {
    (4 * m_max + 1).max(8).next_power_of_two()
}

impl CylindricalSpace {
    pub fn new(grid: &RadialGrid, trap: &TrapSpec, m_max: usize) -> Result<Self> {
        Self::with_n_phi(grid, trap, m_max, default_n_phi(m_max))
    }

    pub fn with_n_phi(grid: &RadialGrid, trap: &TrapSpec, m_max: usize, n_phi: usize) -> Result<Self> {
        trap.validate()?;
        if n_phi < 2 * m_max + 1 {
            return Err(Error::config(format!(
                "n_phi = {n_phi} cannot resolve angular modes up to {m_max}"
            )));
        }
        let ops = (0..=m_max)
            .map(|m| ChannelOperator::new(grid, trap, m as f64))
            .collect::<Result<Vec<_>>>()?;
        let mut node_weights = Vec::with_capacity(grid.len() * n_phi);
        for &w in grid.weights() {
            for _ in 0..n_phi {
                node_weights.push(w / n_phi as f64);
            }
        }
        let mut planner = FftPlanner::new();
        Ok(CylindricalSpace {
            grid: grid.clone(),
            m_max,
            n_phi,
            trap: *trap,
            ops,
            kinetic: KineticSolver::new(grid),
            node_weights,
            fft_inv: planner.plan_fft_inverse(n_phi),
            fft_fwd: planner.plan_fft_forward(n_phi),
        })
    }

    #[inline]
    pub fn modes(&self) -> usize {
        2 * self.m_max + 1
    }

    /// Angular momentum of mode slot `mi`.
    #[inline]
    pub fn m_of(&self, mi: usize) -> i64 {
        mi as i64 - self.m_max as i64
    }

    #[inline]
    fn slot(&self, m: i64) -> usize {
        (m + self.m_max as i64) as usize
    }

    fn block(&self) -> usize {
        self.grid.len()
    }

    /// Coefficients of the channel state `f e^{inφ}`.
    pub fn embed_channel(&self, n: i64, f: &ScalarField2D) -> Result<Vec<Complex64>> {
        self.grid.check(f)?;
        if n.unsigned_abs() as usize > self.m_max {
            return Err(Error::domain(format!(
                "angular momentum {n} exceeds the space's m_max = {}",
                self.m_max
            )));
        }
        let mut c = vec![ZERO; self.len()];
        let b = self.block();
        let s = self.slot(n);
        for (k, &v) in f.values.iter().enumerate() {
            c[s * b + k] = Complex64::new(v, 0.0);
        }
        Ok(c)
    }

    /// Fourier coefficients of a nodal field, truncated to `|m| ≤ m_max`.
    pub fn from_node_values(&self, nodes: &[Complex64]) -> Vec<Complex64> {
        let mut c = vec![ZERO; self.len()];
        self.from_nodes(nodes, &mut c);
        c
    }

    /// Nodal field from a function of `(r, φ, z)`.
    pub fn sample_nodes(&self, mut f: impl FnMut(f64, f64, f64) -> Complex64) -> Vec<Complex64> {
        let mut nodes = Vec::with_capacity(self.node_len());
        for &z in self.grid.z_nodes() {
            for &r in self.grid.r_nodes() {
                for k in 0..self.n_phi {
                    nodes.push(f(r, self.phi(k), z));
                }
            }
        }
        nodes
    }

    #[inline]
    pub fn phi(&self, k: usize) -> f64 {
        2.0 * std::f64::consts::PI * k as f64 / self.n_phi as f64
    }

    /// `Σ_m |c_m|²` per `(r, z)` node, which is the azimuthal mean of `|ψ|²`.
    pub fn axial_density(&self, c: &[Complex64]) -> Vec<f64> {
        let b = self.block();
        let mut rho = vec![0.0; b];
        for mi in 0..self.modes() {
            for k in 0..b {
                rho[k] += c[mi * b + k].norm_sqr();
            }
        }
        rho
    }

    /// Norm squared carried by each mode, indexed by slot.
    pub fn mode_weights(&self, c: &[Complex64]) -> Vec<(i64, f64)> {
        let b = self.block();
        let w = self.grid.weights();
        (0..self.modes())
            .map(|mi| {
                let s: f64 = (0..b).map(|k| w[k] * c[mi * b + k].norm_sqr()).sum();
                (self.m_of(mi), s)
            })
            .collect()
    }

    /// `(x, y, ψ)` on the polar mesh of slice `z_index`, ring by ring.
    pub fn slice(&self, c: &[Complex64], z_index: usize) -> Result<Vec<(f64, f64, Complex64)>> {
        if c.len() != self.len() {
            return Err(Error::shape("field length does not match the space"));
        }
        if z_index >= self.grid.nz {
            return Err(Error::domain(format!("z index {z_index} outside 0..{}", self.grid.nz)));
        }
        let mut nodes = vec![ZERO; self.node_len()];
        self.to_nodes(c, &mut nodes);
        let (nr, np) = (self.grid.nr, self.n_phi);
        let mut out = Vec::with_capacity(nr * np);
        for (i, &r) in self.grid.r_nodes().iter().enumerate() {
            for k in 0..np {
                let phi = self.phi(k);
                out.push((r * phi.cos(), r * phi.sin(), nodes[(z_index * nr + i) * np + k]));
            }
        }
        Ok(out)
    }
}

impl GpSpace for CylindricalSpace {
    fn len(&self) -> usize {
        self.modes() * self.block()
    }

    fn node_len(&self) -> usize {
        self.block() * self.n_phi
    }

    fn dims(&self) -> [usize; 3] {
        [self.grid.nr, self.grid.nz, self.modes()]
    }

    fn trap(&self) -> &TrapSpec {
        &self.trap
    }

    fn dot(&self, a: &[Complex64], b: &[Complex64]) -> f64 {
        let w = self.grid.weights();
        let bl = self.block();
        let mut acc = 0.0;
        for mi in 0..self.modes() {
            let off = mi * bl;
            for k in 0..bl {
                let (x, y) = (a[off + k], b[off + k]);
                acc += w[k] * (x.re * y.re + x.im * y.im);
            }
        }
        acc
    }

    fn cdot(&self, a: &[Complex64], b: &[Complex64]) -> Complex64 {
        let w = self.grid.weights();
        let bl = self.block();
        let mut acc = ZERO;
        for mi in 0..self.modes() {
            let off = mi * bl;
            for k in 0..bl {
                acc += a[off + k].conj() * b[off + k] * w[k];
            }
        }
        acc
    }

    fn apply_h0(&self, omega: f64, x: &[Complex64], out: &mut [Complex64]) {
        let bl = self.block();
        for mi in 0..self.modes() {
            let m = self.m_of(mi);
            let op = &self.ops[m.unsigned_abs() as usize];
            let range = mi * bl..(mi + 1) * bl;
            op.apply_complex(&x[range.clone()], -omega * m as f64, &mut out[range]);
        }
    }

    fn apply_lz(&self, x: &[Complex64], out: &mut [Complex64]) {
        let bl = self.block();
        for mi in 0..self.modes() {
            let m = self.m_of(mi) as f64;
            for k in mi * bl..(mi + 1) * bl {
                out[k] = x[k] * m;
            }
        }
    }

    fn to_nodes(&self, x: &[Complex64], nodes: &mut [Complex64]) {
        let bl = self.block();
        let np = self.n_phi;
        nodes.iter_mut().for_each(|v| *v = ZERO);
        for mi in 0..self.modes() {
            let m = self.m_of(mi);
            let k = m.rem_euclid(np as i64) as usize;
            let off = mi * bl;
            for p in 0..bl {
                nodes[p * np + k] = x[off + p];
            }
        }
        let mut scratch = vec![ZERO; self.fft_inv.get_inplace_scratch_len()];
        self.fft_inv.process_with_scratch(nodes, &mut scratch);
    }

    fn from_nodes(&self, nodes: &[Complex64], out: &mut [Complex64]) {
        let bl = self.block();
        let np = self.n_phi;
        let mut buf = nodes.to_vec();
        let mut scratch = vec![ZERO; self.fft_fwd.get_inplace_scratch_len()];
        self.fft_fwd.process_with_scratch(&mut buf, &mut scratch);
        let scale = 1.0 / np as f64;
        for mi in 0..self.modes() {
            let m = self.m_of(mi);
            let k = m.rem_euclid(np as i64) as usize;
            let off = mi * bl;
            for p in 0..bl {
                out[off + p] = buf[p * np + k] * scale;
            }
        }
    }

    fn node_weights(&self) -> &[f64] {
        &self.node_weights
    }

    fn precondition(&self, r: &[Complex64], alpha: f64, out: &mut [Complex64]) {
        let bl = self.block();
        let mut re = vec![0.0; bl];
        let mut im = vec![0.0; bl];
        let mut ure = vec![0.0; bl];
        let mut uim = vec![0.0; bl];
        let mut scratch = Vec::new();
        for mi in 0..self.modes() {
            let m = self.m_of(mi) as f64;
            let off = mi * bl;
            for k in 0..bl {
                re[k] = r[off + k].re;
                im[k] = r[off + k].im;
            }
            self.kinetic.solve(m * m, alpha, &re, &mut ure, &mut scratch);
            self.kinetic.solve(m * m, alpha, &im, &mut uim, &mut scratch);
            for k in 0..bl {
                out[off + k] = Complex64::new(ure[k], uim[k]);
            }
        }
    }

    fn name(&self) -> &'static str {
        "cylindrical"
    }

    fn extent(&self) -> (f64, f64) {
        (self.grid.r_max, self.grid.z_max)
    }

    fn sample_fn(&self, f: &mut dyn FnMut(f64, f64, f64) -> Complex64) -> Vec<Complex64> {
        let nodes = self.sample_nodes(|r, phi, z| f(r * phi.cos(), r * phi.sin(), z));
        self.from_node_values(&nodes)
    }

    fn channel_state(&self, grid: &RadialGrid, n: i64, f: &ScalarField2D) -> Result<Vec<Complex64>> {
        if grid.same_shape(&self.grid) && grid.r_max == self.grid.r_max && grid.z_max == self.grid.z_max {
            self.embed_channel(n, f)
        } else {
            let g = grid.resample(f, &self.grid)?;
            self.embed_channel(n, &g)
        }
    }

    fn z_slices(&self) -> usize {
        self.grid.nz
    }

    fn detect_vortices(&self, x: &[Complex64], z_index: usize, amplitude_floor: f64) -> Result<VortexReport> {
        let mut nodes = vec![ZERO; self.node_len()];
        self.to_nodes(x, &mut nodes);
        detect_vortices_cylindrical(self, &nodes, z_index, amplitude_floor)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{channel_energy, ChannelContext};

    #[test]
    fn node_transform_round_trip_and_parseval() {
        let g = RadialGrid::new(4.0, 3.0, 16, 16).unwrap();
        let s = CylindricalSpace::new(&g, &TrapSpec::harmonic(), 3).unwrap();
        let c: Vec<Complex64> = (0..s.len())
            .map(|k| Complex64::new((k as f64 * 0.37).sin(), (k as f64 * 0.11).cos()))
            .collect();
        let mut nodes = vec![ZERO; s.node_len()];
        s.to_nodes(&c, &mut nodes);
        let back = s.from_node_values(&nodes);
        for (a, b) in c.iter().zip(&back) {
            assert!((a - b).norm() < 1e-12);
        }
        let nodal: f64 = nodes.iter().zip(s.node_weights()).map(|(v, w)| w * v.norm_sqr()).sum();
        assert!((nodal - s.dot(&c, &c)).abs() < 1e-10 * nodal);
    }

    #[test]
    fn embedded_channel_energy_matches() {
        let g = RadialGrid::new(6.0, 5.0, 32, 32).unwrap();
        let t = TrapSpec::harmonic();
        let s = CylindricalSpace::new(&g, &t, 4).unwrap();
        let ctx = ChannelContext::new(&g, &t).unwrap();
        let f = ctx.initial_orbital(10.0, 2.0);
        let c = s.embed_channel(2, &f).unwrap();
        let mut hc = vec![ZERO; s.len()];
        s.apply_h0(0.5, &c, &mut hc);
        let quad = s.dot(&c, &hc);
        let expect = channel_energy(&g, &t, 0.0, 2.0, &f).unwrap() - 0.5 * 2.0;
        assert!((quad - expect).abs() < 1e-12);
        let mut lz = vec![ZERO; s.len()];
        s.apply_lz(&c, &mut lz);
        assert!((s.dot(&c, &lz) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn h0_is_hermitian_in_both_spaces() {
        let g = RadialGrid::new(4.0, 3.0, 16, 16).unwrap();
        let t = TrapSpec::harmonic();
        let s = CylindricalSpace::new(&g, &t, 2).unwrap();
        let a: Vec<Complex64> = (0..s.len()).map(|k| Complex64::new((k as f64).sin(), (k as f64 * 0.3).cos())).collect();
        let b: Vec<Complex64> = (0..s.len()).map(|k| Complex64::new((k as f64 * 0.7).cos(), (k as f64 * 1.3).sin())).collect();
        let mut ha = vec![ZERO; s.len()];
        let mut hb = vec![ZERO; s.len()];
        s.apply_h0(1.1, &a, &mut ha);
        s.apply_h0(1.1, &b, &mut hb);
        let lhs = s.cdot(&a, &hb);
        let rhs = s.cdot(&ha, &b);
        assert!((lhs - rhs).norm() < 1e-10 * lhs.norm());

        let cg = CartesianGrid3D::cube(8, 2.0).unwrap();
        let cs = CartesianSpace::new(&cg, &t).unwrap();
        let a: Vec<Complex64> = (0..cs.len()).map(|k| Complex64::new((k as f64).sin(), (k as f64 * 0.3).cos())).collect();
        let b: Vec<Complex64> = (0..cs.len()).map(|k| Complex64::new((k as f64 * 0.7).cos(), (k as f64 * 1.3).sin())).collect();
        let mut ha = vec![ZERO; cs.len()];
        let mut hb = vec![ZERO; cs.len()];
        cs.apply_h0(1.1, &a, &mut ha);
        cs.apply_h0(1.1, &b, &mut hb);
        let lhs = cs.cdot(&a, &hb);
        let rhs = cs.cdot(&ha, &b);
        assert!((lhs - rhs).norm() < 1e-10 * lhs.norm());
    }

    #[test]
    fn rejects_too_few_azimuthal_nodes() {
        let g = RadialGrid::new(4.0, 3.0, 16, 16).unwrap();
        assert!(CylindricalSpace::with_n_phi(&g, &TrapSpec::harmonic(), 8, 12).is_err());
    }
}
