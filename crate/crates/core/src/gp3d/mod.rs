//! Full rotating GP functional over complex 3D fields.
//!
//! `E[ψ] = ⟨ψ, (-Δ - Ω L_z + V) ψ⟩ + 4πg ∫|ψ|⁴` with `‖ψ‖ = 1`. Minimization
//! runs on any [`GpSpace`]; the cylindrical space is the production backend.

pub mod space;
pub mod vortex;

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

pub use space::{default_n_phi, CartesianSpace, CylindricalSpace, GpSpace};
pub use vortex::{
    detect_vortices_cartesian, detect_vortices_cylindrical, loop_winding, Vortex, VortexReport,
    DEFAULT_AMPLITUDE_FLOOR,
};

use crate::channel::{LineModel, NORM_TOL};
use crate::discretization::{ComplexField3D, RadialGrid, ScalarField2D};
use crate::dm::DmState;
use crate::error::{BestIterate, Error, Result};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const I: Complex64 = Complex64::new(0.0, 1.0);

#[derive(Debug, Clone)]
pub struct GpOptions {
    /// Stop once `‖H₀ψ + 8πg|ψ|²ψ - μψ‖ ≤ tol · |μ|`.
    pub tol: f64,
    /// Total iteration budget per start.
    pub max_iter: usize,
    /// Iterations given to every start before only the best are continued.
    /// Zero runs every start on the full budget.
    pub screen_iter: usize,
    /// Number of starts continued after screening.
    pub finalists: usize,
    /// Stop when the energy dropped by less than `stall_rel · |E|` over
    /// the last `stall_window` steps.
    pub stall_window: usize,
    pub stall_rel: f64,
    pub record_trace: bool,
}

impl Default for GpOptions {
    fn default() -> Self {
        GpOptions {
            tol: 1e-6,
            max_iter: 20_000,
            screen_iter: 300,
            finalists: 2,
            stall_window: 100,
            stall_rel: 1e-12,
            record_trace: false,
        }
    }
}

/// A labelled starting field in the primary representation of a space.
#[derive(Debug, Clone)]
pub struct GpInit {
    pub label: String,
    pub psi: Vec<Complex64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct GpResult {
    pub backend: String,
    pub omega: f64,
    pub g: f64,
    #[serde(skip)]
    pub psi: ComplexField3D,
    pub energy: f64,
    pub mu: f64,
    /// `∫|ψ|⁴` on the node quadrature.
    pub quartic: f64,
    pub residual: f64,
    pub lz_mean: f64,
    pub lz_variance: f64,
    /// Vortices on the central `z` slice.
    pub vortices: Vec<Vortex>,
    pub vortex_skipped: usize,
    pub init_label: String,
    pub iterations: usize,
    pub converged: bool,
    #[serde(skip)]
    pub energy_trace: Vec<f64>,
}

impl GpResult {
    pub fn total_winding(&self) -> i32 {
        self.vortices.iter().map(|v| v.winding).sum()
    }
}

fn check_params(space: &dyn GpSpace, omega: f64, g: f64) -> Result<()> {
    if !(g >= 0.0) || !g.is_finite() {
        return Err(Error::domain(format!("coupling g must be nonnegative (got {g})")));
    }
    space.trap().check_omega(omega)
}

fn check_len(space: &dyn GpSpace, psi: &[Complex64]) -> Result<()> {
    if psi.len() != space.len() {
        return Err(Error::shape(format!(
            "field has {} values, {} space expects {}",
            psi.len(),
            space.name(),
            space.len()
        )));
    }
    Ok(())
}

fn quartic_sum(nu: &[f64], nodes: &[Complex64]) -> f64 {
    nodes.iter().zip(nu).map(|(v, w)| w * v.norm_sqr() * v.norm_sqr()).sum()
}

/// Returns `(energy, ∫|ψ|⁴)`.
pub fn gp_energy_parts(space: &dyn GpSpace, omega: f64, g: f64, psi: &[Complex64]) -> Result<(f64, f64)> {
    check_params(space, omega, g)?;
    check_len(space, psi)?;
    let n2 = space.dot(psi, psi);
    if (n2 - 1.0).abs() > NORM_TOL {
        return Err(Error::domain(format!("field is not normalized (‖ψ‖² = {n2})")));
    }
    let mut h = vec![ZERO; space.len()];
    space.apply_h0(omega, psi, &mut h);
    let quad = space.cdot(psi, &h);
    if quad.im.abs() > 1e-10 * quad.norm().max(f64::MIN_POSITIVE) {
        return Err(Error::domain(format!(
            "one-body energy has imaginary part {:.3e}",
            quad.im
        )));
    }
    let mut nodes = vec![ZERO; space.node_len()];
    space.to_nodes(psi, &mut nodes);
    let quartic = quartic_sum(space.node_weights(), &nodes);
    Ok((quad.re + 4.0 * PI * g * quartic, quartic))
}

pub fn gp_energy(space: &dyn GpSpace, omega: f64, g: f64, psi: &[Complex64]) -> Result<f64> {
    Ok(gp_energy_parts(space, omega, g, psi)?.0)
}

/// `μ = E + 4πg ∫|ψ|⁴`.
pub fn gp_mu(result: &GpResult, g: f64) -> f64 {
    result.energy + 4.0 * PI * g * result.quartic
}

/// `‖H₀ψ + 8πg|ψ|²ψ - μψ‖` at the stored field.
pub fn gp_residual(space: &dyn GpSpace, omega: f64, g: f64, result: &GpResult) -> Result<f64> {
    check_params(space, omega, g)?;
    check_len(space, &result.psi.values)?;
    let mut work = Workspace::new(space);
    let x = &result.psi.values;
    space.apply_h0(omega, x, &mut work.hx);
    space.to_nodes(x, &mut work.nodes);
    Ok(work.residual(space, g, x).1)
}

/// `(⟨L_z⟩, ⟨L_z²⟩ - ⟨L_z⟩²)`, with the variance clamped at zero.
pub fn lz_statistics(space: &dyn GpSpace, psi: &[Complex64]) -> Result<(f64, f64)> {
    check_len(space, psi)?;
    let n2 = space.dot(psi, psi);
    if !(n2 > 0.0) {
        return Err(Error::domain("zero field has no angular momentum statistics"));
    }
    let mut l = vec![ZERO; space.len()];
    space.apply_lz(psi, &mut l);
    let mean = space.cdot(psi, &l);
    if mean.im.abs() > 1e-10 * n2.max(mean.norm()) {
        return Err(Error::domain(format!(
            "⟨L_z⟩ has imaginary part {:.3e}",
            mean.im
        )));
    }
    let mean = mean.re / n2;
    let second = space.dot(&l, &l) / n2;
    Ok((mean, (second - mean * mean).max(0.0)))
}

struct Workspace {
    hx: Vec<Complex64>,
    nodes: Vec<Complex64>,
    grad: Vec<Complex64>,
    cubic: Vec<Complex64>,
}

impl Workspace {
    fn new(space: &dyn GpSpace) -> Self {
        Workspace {
            hx: vec![ZERO; space.len()],
            nodes: vec![ZERO; space.node_len()],
            grad: vec![ZERO; space.len()],
            cubic: vec![ZERO; space.node_len()],
        }
    }

    /// Fills `grad` with the residual `H₀x + 8πg|x|²x - μx`; returns `(μ, ‖residual‖)`.
    fn residual(&mut self, space: &dyn GpSpace, g: f64, x: &[Complex64]) -> (f64, f64) {
        let c8 = 8.0 * PI * g;
        for (c, v) in self.cubic.iter_mut().zip(&self.nodes) {
            *c = v * v.norm_sqr();
        }
        space.from_nodes(&self.cubic, &mut self.grad);
        for (gk, hk) in self.grad.iter_mut().zip(&self.hx) {
            *gk = hk + *gk * c8;
        }
        let mu = space.dot(x, &self.grad);
        for (gk, xk) in self.grad.iter_mut().zip(x) {
            *gk -= xk * mu;
        }
        (mu, space.dot(&self.grad, &self.grad).sqrt())
    }
}

/// Outcome of one gradient-flow run.
struct Flow {
    x: Vec<Complex64>,
    energy: f64,
    quartic: f64,
    mu: f64,
    residual: f64,
    iterations: usize,
    converged: bool,
    trace: Vec<f64>,
}

fn axpy_project(space: &dyn GpSpace, x: &[Complex64], v: &mut [Complex64]) {
    let a = space.dot(x, v);
    let ix: Vec<Complex64> = x.iter().map(|c| c * I).collect();
    let b = space.dot(&ix, v);
    for k in 0..v.len() {
        v[k] -= x[k] * a + ix[k] * b;
    }
}

/// Preconditioned nonlinear conjugate gradient on the unit sphere, the
/// accelerated form of the normalized gradient flow. The energy along each
/// retraction `(x + τd)/‖x + τd‖` is an explicit rational function of `τ`,
/// so every accepted step lowers the energy.
fn flow(space: &dyn GpSpace, omega: f64, g: f64, mut x: Vec<Complex64>, budget: usize, iter0: usize, opts: &GpOptions) -> Flow {
    let len = space.len();
    let nu = space.node_weights();
    let c4 = 4.0 * PI * g;
    let mut work = Workspace::new(space);
    let mut z = vec![ZERO; len];
    let mut z_prev = vec![ZERO; len];
    let mut r_prev = vec![ZERO; len];
    let mut d = vec![ZERO; len];
    let mut hd = vec![ZERO; len];
    let mut dnodes = vec![ZERO; space.node_len()];
    let mut history: Vec<f64> = Vec::new();
    let mut trace = Vec::new();
    let mut have_dir = false;
    let mut tau_hint = 1.0f64;
    let mut stalls = 0usize;

    let refresh = |x: &[Complex64], work: &mut Workspace| -> f64 {
        space.apply_h0(omega, x, &mut work.hx);
        space.to_nodes(x, &mut work.nodes);
        space.dot(x, &work.hx) + c4 * quartic_sum(nu, &work.nodes)
    };
    let mut energy = refresh(&x, &mut work);
    if opts.record_trace {
        trace.push(energy);
    }
    let mut iterations = 0;
    for it in 0..budget {
        iterations = it;
        let (mu, res) = work.residual(space, g, &x);
        if res <= opts.tol * mu.abs() {
            break;
        }
        history.push(energy);
        let w = opts.stall_window;
        if w > 0 && history.len() > w {
            let old = history[history.len() - 1 - w];
            if old - energy <= opts.stall_rel * energy.abs() {
                break;
            }
        }
        space.precondition(&work.grad, mu.abs().max(1.0), &mut z);
        axpy_project(space, &x, &mut z);
        let mut beta = 0.0;
        if have_dir {
            let denom = space.dot(&r_prev, &z_prev);
            if denom > 0.0 {
                let dz: Vec<Complex64> = z.iter().zip(&z_prev).map(|(a, b)| a - b).collect();
                let num = space.dot(&work.grad, &dz);
                beta = (num / denom).max(0.0);
            }
        }
        for k in 0..len {
            d[k] = -z[k] + d[k] * beta;
        }
        axpy_project(space, &x, &mut d);
        if space.dot(&d, &work.grad) >= 0.0 {
            for k in 0..len {
                d[k] = -z[k];
            }
        }
        r_prev.copy_from_slice(&work.grad);
        z_prev.copy_from_slice(&z);

        space.apply_h0(omega, &d, &mut hd);
        space.to_nodes(&d, &mut dnodes);
        let mut q = [0.0; 5];
        for k in 0..dnodes.len() {
            let (a, b) = (work.nodes[k], dnodes[k]);
            let p = a.norm_sqr();
            let qq = 2.0 * (a.re * b.re + a.im * b.im);
            let s = b.norm_sqr();
            let wk = nu[k];
            q[0] += wk * p * p;
            q[1] += wk * 2.0 * p * qq;
            q[2] += wk * (qq * qq + 2.0 * p * s);
            q[3] += wk * 2.0 * qq * s;
            q[4] += wk * s * s;
        }
        let line = LineModel::from_parts(
            space.dot(&x, &work.hx),
            space.dot(&x, &hd),
            space.dot(&d, &hd),
            space.dot(&d, &d),
            c4,
            q,
        );
        let (tau, e_new) = line.minimize(tau_hint);
        if !(e_new < energy) || tau == 0.0 {
            if have_dir {
                have_dir = false;
                d.iter_mut().for_each(|v| *v = ZERO);
                continue;
            }
            stalls += 1;
            if stalls > 3 {
                break;
            }
            tau_hint *= 0.1;
            continue;
        }
        stalls = 0;
        tau_hint = tau;
        have_dir = true;
        let norm = line.norm(tau);
        for k in 0..len {
            x[k] = (x[k] + d[k] * tau) / norm;
            work.hx[k] = (work.hx[k] + hd[k] * tau) / norm;
        }
        for k in 0..dnodes.len() {
            work.nodes[k] = (work.nodes[k] + dnodes[k] * tau) / norm;
        }
        energy = e_new;
        if it % 50 == 49 {
            let n2 = space.dot(&x, &x).sqrt();
            x.iter_mut().for_each(|v| *v /= n2);
            energy = refresh(&x, &mut work);
        }
        if opts.record_trace {
            trace.push(energy);
        }
        iterations = it + 1;
    }
    let n2 = space.dot(&x, &x).sqrt();
    x.iter_mut().for_each(|v| *v /= n2);
    refresh(&x, &mut work);
    let quartic = quartic_sum(nu, &work.nodes);
    let (_, residual) = work.residual(space, g, &x);
    let quad = space.dot(&x, &work.hx);
    let energy = quad + c4 * quartic;
    let mu = energy + c4 * quartic;
    Flow {
        x,
        energy,
        quartic,
        mu,
        residual,
        iterations: iter0 + iterations,
        converged: residual <= opts.tol * mu.abs(),
        trace,
    }
}

fn into_result(space: &dyn GpSpace, omega: f64, g: f64, label: &str, f: Flow) -> Result<GpResult> {
    let (lz_mean, lz_variance) = lz_statistics(space, &f.x)?;
    let report = space.detect_vortices(&f.x, space.z_slices() / 2, DEFAULT_AMPLITUDE_FLOOR)?;
    Ok(GpResult {
        backend: space.name().to_string(),
        omega,
        g,
        psi: ComplexField3D {
            dims: space.dims(),
            values: f.x,
        },
        energy: f.energy,
        mu: f.mu,
        quartic: f.quartic,
        residual: f.residual,
        lz_mean,
        lz_variance,
        vortices: report.vortices,
        vortex_skipped: report.skipped,
        init_label: label.to_string(),
        iterations: f.iterations,
        converged: f.converged,
        energy_trace: f.trace,
    })
}

fn by_energy(a: &(String, Flow), b: &(String, Flow)) -> std::cmp::Ordering {
    a.1.energy.total_cmp(&b.1.energy).then_with(|| a.0.cmp(&b.0))
}

/// Multi-start minimization; returns the lowest-energy converged result.
///
/// Every start gets `screen_iter` steps, then the `finalists` lowest are
/// continued on the rest of the budget. Ties are broken by label.
pub fn gp_minimize(space: &dyn GpSpace, omega: f64, g: f64, inits: &[GpInit], opts: &GpOptions) -> Result<GpResult> {
    check_params(space, omega, g)?;
    if inits.is_empty() {
        return Err(Error::config("at least one initial field is required"));
    }
    let mut starts = Vec::with_capacity(inits.len());
    for init in inits {
        check_len(space, &init.psi)?;
        let n2 = space.dot(&init.psi, &init.psi);
        if !(n2 > 0.0) || !n2.is_finite() {
            return Err(Error::config(format!("initial field '{}' has zero norm", init.label)));
        }
        let s = n2.sqrt();
        starts.push((init.label.clone(), init.psi.iter().map(|v| v / s).collect::<Vec<_>>()));
    }
    let screen = if opts.screen_iter == 0 || opts.screen_iter >= opts.max_iter {
        opts.max_iter
    } else {
        opts.screen_iter
    };
    let mut runs: Vec<(String, Flow)> = starts
        .into_par_iter()
        .map(|(label, x)| {
            let f = flow(space, omega, g, x, screen, 0, opts);
            (label, f)
        })
        .collect();
    runs.sort_by(by_energy);
    if screen < opts.max_iter {
        let keep = opts.finalists.max(1);
        let (head, tail) = runs.split_at(keep.min(runs.len()));
        let tail: Vec<(String, Flow)> = tail.iter().filter(|r| r.1.converged).map(|(l, f)| (l.clone(), clone_flow(f))).collect();
        let mut cont: Vec<(String, Flow)> = head
            .par_iter()
            .map(|(label, f)| {
                if f.converged {
                    return (label.clone(), clone_flow(f));
                }
                let mut next = flow(space, omega, g, f.x.clone(), opts.max_iter - screen, f.iterations, opts);
                if opts.record_trace {
                    let mut t = f.trace.clone();
                    t.extend(next.trace.drain(..).skip(1));
                    next.trace = t;
                }
                (label.clone(), next)
            })
            .collect();
        cont.extend(tail);
        runs = cont;
        runs.sort_by(by_energy);
    }
    if let Some(pos) = runs.iter().position(|r| r.1.converged) {
        let (label, f) = runs.swap_remove(pos);
        return into_result(space, omega, g, &label, f);
    }
    let (label, f) = runs.swap_remove(0);
    let best = into_result(space, omega, g, &label, f)?;
    Err(Error::NotConverged {
        solver: "GP minimizer",
        iterations: best.iterations,
        residual: best.residual,
        best: Some(Box::new(BestIterate::Gp(best))),
    })
}

fn clone_flow(f: &Flow) -> Flow {
    Flow {
        x: f.x.clone(),
        energy: f.energy,
        quartic: f.quartic,
        mu: f.mu,
        residual: f.residual,
        iterations: f.iterations,
        converged: f.converged,
        trace: f.trace.clone(),
    }
}

/// Rotating-frame Thomas–Fermi data used to shape the starting fields.
struct Envelope {
    g: f64,
    omega: f64,
    mu: f64,
    radial: f64,
    axial: f64,
    trap: crate::discretization::TrapSpec,
    tf: bool,
}

impl Envelope {
    fn new(space: &dyn GpSpace, omega: f64, g: f64) -> Self {
        let trap = *space.trap();
        let (rmax, zmax) = space.extent();
        let veff = |r: f64, z: f64| trap.value(r, z) - 0.25 * omega * omega * r * r;
        let (nr, nz) = (200usize, 200usize);
        let (dr, dz) = (rmax / nr as f64, 2.0 * zmax / nz as f64);
        let mut cells = Vec::with_capacity(nr * nz);
        for j in 0..nz {
            let z = -zmax + (j as f64 + 0.5) * dz;
            for i in 0..nr {
                let r = (i as f64 + 0.5) * dr;
                cells.push((veff(r, z), 2.0 * PI * r * dr * dz));
            }
        }
        let c8 = 8.0 * PI * g;
        let vmin = cells.iter().map(|c| c.0).fold(f64::INFINITY, f64::min);
        let mut env = Envelope {
            g,
            omega,
            mu: vmin,
            radial: 1.0,
            axial: 1.0,
            trap,
            tf: false,
        };
        if g > 0.0 {
            let mass = |mu: f64| cells.iter().map(|(v, w)| w * (mu - v).max(0.0) / c8).sum::<f64>();
            let (mut lo, mut hi) = (vmin, vmin + 1.0);
            let mut ok = true;
            while mass(hi) < 1.0 {
                hi = vmin + 2.0 * (hi - vmin);
                if hi - vmin > 1e12 {
                    ok = false;
                    break;
                }
            }
            if ok {
                for _ in 0..100 {
                    let mid = 0.5 * (lo + hi);
                    if mass(mid) < 1.0 {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                env.mu = hi;
                let reach = |f: &dyn Fn(f64) -> f64, max: f64| {
                    let mut best = 0.0;
                    for k in 0..=400 {
                        let t = max * k as f64 / 400.0;
                        if f(t) <= hi {
                            best = t;
                        }
                    }
                    best
                };
                env.radial = reach(&|r| veff(r, 0.0), rmax);
                env.axial = reach(&|z| veff(0.0, z), zmax);
                env.tf = env.radial >= 1.5;
            }
        }
        env
    }

    fn veff(&self, r: f64, z: f64) -> f64 {
        self.trap.value(r, z) - 0.25 * self.omega * self.omega * r * r
    }

    fn gaussian(&self, r: f64, z: f64) -> f64 {
        let sr = (0.5 * self.radial).max(1.0);
        let sz = (0.5 * self.axial).max(1.0);
        (-0.5 * (r * r / (sr * sr) + z * z / (sz * sz))).exp()
    }

    fn amplitude(&self, r: f64, z: f64) -> f64 {
        if self.tf {
            ((self.mu - self.veff(r, z)).max(0.0) / (8.0 * PI * self.g)).sqrt()
        } else {
            self.gaussian(r, z)
        }
    }

    fn healing(&self) -> f64 {
        1.0 / self.mu.abs().max(1.0).sqrt()
    }
}

fn vortex_factor(x: f64, y: f64, x0: f64, y0: f64, xi: f64) -> Complex64 {
    let (dx, dy) = (x - x0, y - y0);
    Complex64::new(dx, dy) / (dx * dx + dy * dy + xi * xi).sqrt()
}

/// A channel orbital used as a starting field.
pub struct ChannelSeed<'a> {
    pub grid: &'a RadialGrid,
    pub n: i64,
    pub orbital: &'a ScalarField2D,
}

/// The standard multi-start set: a positive Gaussian, a Thomas–Fermi profile
/// with an off-center vortex, `m`-fold vortex imprints for `m = 1..4`, the
/// given channel state, a seeded random-phase field and, when a DM state is
/// given, the coherent superposition `Σ √λ_j f_j e^{i n_j φ + iθ_j}`.
pub fn standard_inits(
    space: &dyn GpSpace,
    omega: f64,
    g: f64,
    seed: u64,
    channel: Option<ChannelSeed<'_>>,
    dm: Option<&DmState>,
) -> Result<Vec<GpInit>> {
    check_params(space, omega, g)?;
    let env = Envelope::new(space, omega, g);
    let xi = env.healing();
    let mut out = Vec::new();
    out.push(GpInit {
        label: "gaussian".into(),
        psi: space.sample_fn(&mut |x, y, z| Complex64::new(env.gaussian(x.hypot(y), z), 0.0)),
    });
    let x0 = 0.3 * env.radial.max(1.0);
    out.push(GpInit {
        label: "tf_vortex".into(),
        psi: space.sample_fn(&mut |x, y, z| vortex_factor(x, y, x0, 0.0, xi) * env.amplitude(x.hypot(y), z)),
    });
    for m in 1..=4usize {
        let ring = if m == 1 { 0.0 } else { 0.4 * env.radial.max(1.0) };
        let centers: Vec<(f64, f64)> = (0..m)
            .map(|j| {
                let a = 2.0 * PI * j as f64 / m as f64;
                (ring * a.cos(), ring * a.sin())
            })
            .collect();
        out.push(GpInit {
            label: format!("imprint_m{m}"),
            psi: space.sample_fn(&mut |x, y, z| {
                let mut v = Complex64::new(env.amplitude(x.hypot(y), z), 0.0);
                for &(cx, cy) in &centers {
                    v *= vortex_factor(x, y, cx, cy, xi);
                }
                v
            }),
        });
    }
    if let Some(c) = channel {
        out.push(GpInit {
            label: format!("channel_n{}", c.n),
            psi: space.channel_state(c.grid, c.n, c.orbital)?,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let coeffs: Vec<Complex64> = (0..=6)
        .map(|_| Complex64::from_polar(rng.random::<f64>(), 2.0 * PI * rng.random::<f64>()))
        .collect();
    let rr = env.radial.max(1.0);
    out.push(GpInit {
        label: format!("random_seed{seed}"),
        psi: space.sample_fn(&mut |x, y, z| {
            let r = x.hypot(y);
            let e = Complex64::new(x, y) / rr;
            let mut acc = ZERO;
            let mut pow = Complex64::new(1.0, 0.0);
            for c in &coeffs {
                acc += c * pow;
                pow *= e;
            }
            acc * env.amplitude(r, z)
        }),
    });
    if let Some(dm) = dm {
        let mut psi = vec![ZERO; space.len()];
        let mut used = 0;
        for (ch, &lambda) in dm.channels.iter().zip(&dm.occupations) {
            if lambda <= 0.0 {
                continue;
            }
            let theta = 2.0 * PI * rng.random::<f64>();
            if let Ok(state) = space.channel_state(&dm.grid, ch.n as i64, &ch.orbital) {
                let c = Complex64::from_polar(lambda.sqrt(), theta);
                for (p, s) in psi.iter_mut().zip(&state) {
                    *p += c * s;
                }
                used += 1;
            }
        }
        if used > 0 {
            out.push(GpInit {
                label: "dm_coherent".into(),
                psi,
            });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{ChannelContext, ChannelOptions};
    use crate::discretization::{CartesianGrid3D, TrapSpec};

    fn cyl(m_max: usize) -> (RadialGrid, CylindricalSpace) {
        let g = RadialGrid::new(6.0, 6.0, 48, 48).unwrap();
        let s = CylindricalSpace::new(&g, &TrapSpec::harmonic(), m_max).unwrap();
        (g, s)
    }

    fn normalized(space: &dyn GpSpace, mut v: Vec<Complex64>) -> Vec<Complex64> {
        let n = space.dot(&v, &v).sqrt();
        v.iter_mut().for_each(|c| *c /= n);
        v
    }

    #[test]
    fn oscillator_gaussian_energy() {
        let cg = CartesianGrid3D::cube(40, 6.0).unwrap();
        let cs = CartesianSpace::new(&cg, &TrapSpec::harmonic()).unwrap();
        let psi = normalized(&cs, cs.sample_fn(&mut |x, y, z| Complex64::new((-(x * x + y * y + z * z) / 2.0).exp(), 0.0)));
        let e = gp_energy(&cs, 0.0, 0.0, &psi).unwrap();
        assert!((e - 3.0).abs() < 0.03, "{e}");
        let (_, s) = cyl(2);
        let psi = normalized(&s, s.sample_fn(&mut |x, y, z| Complex64::new((-(x * x + y * y + z * z) / 2.0).exp(), 0.0)));
        let e = gp_energy(&s, 0.0, 0.0, &psi).unwrap();
        assert!((e - 3.0).abs() < 0.01, "{e}");
    }

    #[test]
    fn unnormalized_field_is_rejected() {
        let (_, s) = cyl(1);
        let psi = vec![Complex64::new(1.0, 0.0); s.len()];
        assert!(matches!(gp_energy(&s, 0.0, 1.0, &psi), Err(Error::Domain(_))));
    }

    #[test]
    fn channel_state_in_cartesian_box_matches_channel_energy() {
        let grid = RadialGrid::new(6.0, 6.0, 96, 96).unwrap();
        let t = TrapSpec::harmonic();
        let ctx = ChannelContext::new(&grid, &t).unwrap();
        let ch = ctx.minimize(10.0, 1.0, &ChannelOptions::default()).unwrap();
        let cg = CartesianGrid3D::cube(48, 6.0).unwrap();
        let cs = CartesianSpace::new(&cg, &t).unwrap();
        let psi = normalized(&cs, cs.channel_state(&grid, 1, &ch.orbital).unwrap());
        let e = gp_energy(&cs, 0.5, 10.0, &psi).unwrap();
        let expect = ch.energy - 0.5;
        assert!((e - expect).abs() < 0.01 * expect.abs(), "{e} vs {expect}");
    }

    #[test]
    fn winding_one_energy_shifts_with_rotation() {
        let (_, s) = cyl(2);
        let psi = normalized(&s, s.sample_fn(&mut |x, y, z| Complex64::new(x, y) * (-(x * x + y * y + z * z) / 2.0).exp()));
        let e0 = gp_energy(&s, 0.0, 5.0, &psi).unwrap();
        let e1 = gp_energy(&s, 1.0, 5.0, &psi).unwrap();
        assert!((e1 - e0 + 1.0).abs() < 1e-10);
        let cg = CartesianGrid3D::cube(32, 6.0).unwrap();
        let cs = CartesianSpace::new(&cg, &TrapSpec::harmonic()).unwrap();
        let psi = normalized(&cs, cs.sample_fn(&mut |x, y, z| Complex64::new(x, y) * (-(x * x + y * y + z * z) / 2.0).exp()));
        let d = gp_energy(&cs, 1.0, 5.0, &psi).unwrap() - gp_energy(&cs, 0.0, 5.0, &psi).unwrap();
        assert!((d + 1.0).abs() < 0.05, "{d}");
    }

    #[test]
    fn lz_statistics_cases() {
        let (_, s) = cyl(3);
        let eig = s.sample_fn(&mut |x, y, z| Complex64::new(x, y).powi(2) * (-(x * x + y * y + z * z) / 2.0).exp());
        let (m, v) = lz_statistics(&s, &eig).unwrap();
        assert!((m - 2.0).abs() < 1e-10 && v < 1e-10);
        let real = s.sample_fn(&mut |x, y, z| Complex64::new((x + 0.5 * y) * (-(x * x + y * y + z * z) / 2.0).exp(), 0.0));
        let (m, v) = lz_statistics(&s, &real).unwrap();
        assert!(m.abs() < 1e-10 && v > 0.5);
        let a = normalized(&s, s.sample_fn(&mut |x, y, z| Complex64::new((-(x * x + y * y + z * z) / 2.0).exp(), 0.0)));
        let b = normalized(&s, eig);
        let sup: Vec<Complex64> = a.iter().zip(&b).map(|(p, q)| p + q).collect();
        let (m, v) = lz_statistics(&s, &sup).unwrap();
        assert!((m - 1.0).abs() < 1e-10 && (v - 1.0).abs() < 1e-10, "{m} {v}");

        let cg = CartesianGrid3D::cube(40, 6.0).unwrap();
        let cs = CartesianSpace::new(&cg, &TrapSpec::harmonic()).unwrap();
        let e = cs.sample_fn(&mut |x, y, z| Complex64::new(x, y).powi(2) * (-(x * x + y * y + z * z) / 2.0).exp());
        let (m, v) = lz_statistics(&cs, &e).unwrap();
        assert!((m - 2.0).abs() < 0.1 && v < 0.01, "{m} {v}");
    }

    #[test]
    fn minimizer_at_rest_matches_channel_ground() {
        let (grid, s) = cyl(3);
        let t = TrapSpec::harmonic();
        let ctx = ChannelContext::new(&grid, &t).unwrap();
        let ch = ctx.minimize(10.0, 0.0, &ChannelOptions::default()).unwrap();
        let inits = standard_inits(&s, 0.0, 10.0, 7, None, None).unwrap();
        let res = gp_minimize(&s, 0.0, 10.0, &inits, &GpOptions::default()).unwrap();
        assert!(res.converged);
        assert!((res.energy - ch.energy).abs() < 1e-6 * ch.energy, "{} vs {}", res.energy, ch.energy);
        assert!(res.lz_mean.abs() < 1e-6);
        assert!(res.vortices.is_empty());
        assert!(res.residual <= 1e-6 * res.mu.abs());
        assert_eq!(gp_mu(&res, 10.0), res.mu);
        let r = gp_residual(&s, 0.0, 10.0, &res).unwrap();
        assert!((r - res.residual).abs() < 1e-12);
    }

    #[test]
    fn energy_trace_is_monotone() {
        let (_, s) = cyl(4);
        let inits = standard_inits(&s, 0.8, 50.0, 1, None, None).unwrap();
        let opts = GpOptions {
            record_trace: true,
            screen_iter: 0,
            max_iter: 400,
            ..Default::default()
        };
        let res = match gp_minimize(&s, 0.8, 50.0, &inits[1..2], &opts) {
            Ok(r) => r,
            Err(Error::NotConverged { best: Some(b), .. }) => match *b {
                BestIterate::Gp(r) => r,
                _ => unreachable!(),
            },
            Err(e) => panic!("{e}"),
        };
        for w in res.energy_trace.windows(2) {
            assert!(w[1] <= w[0] + 1e-12 * w[0].abs(), "{} > {}", w[1], w[0]);
        }
    }

    #[test]
    fn rotation_sign_symmetry() {
        let (_, s) = cyl(4);
        let run = |om: f64| {
            let inits = standard_inits(&s, om, 20.0, 3, None, None).unwrap();
            gp_minimize(&s, om, 20.0, &inits, &GpOptions::default()).unwrap().energy
        };
        let (a, b) = (run(0.7), run(-0.7));
        assert!((a - b).abs() < 1e-6 * a.abs(), "{a} {b}");
    }

    #[test]
    fn residual_of_random_field_is_large() {
        let (_, s) = cyl(2);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let v = normalized(&s, (0..s.len()).map(|_| Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)).collect());
        let (energy, quartic) = gp_energy_parts(&s, 0.3, 1.0, &v).unwrap();
        let res = GpResult {
            backend: "cylindrical".into(),
            omega: 0.3,
            g: 1.0,
            psi: ComplexField3D { dims: s.dims(), values: v },
            energy,
            mu: energy + 4.0 * PI * quartic,
            quartic,
            residual: 0.0,
            lz_mean: 0.0,
            lz_variance: 0.0,
            vortices: Vec::new(),
            vortex_skipped: 0,
            init_label: "random".into(),
            iterations: 0,
            converged: false,
            energy_trace: Vec::new(),
        };
        assert!(gp_residual(&s, 0.3, 1.0, &res).unwrap() > 1.0);
    }

    #[test]
    fn omega_beyond_critical_is_rejected() {
        let (_, s) = cyl(1);
        assert!(matches!(standard_inits(&s, 2.0, 1.0, 0, None, None), Err(Error::Config(_))));
    }
}
