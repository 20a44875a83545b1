//! Grids, quadrature, trap potentials and discrete one-body operators.
//!
//! Two representations are supported:
//!
//! * a cell-centered `(r, z)` half-plane grid ([`RadialGrid`]) on which the
//!   angular-momentum channel operator `-Δ_r - ∂_z² + n²/r² + V` acts, and
//! * a cell-centered Cartesian grid ([`CartesianGrid3D`]) carrying the full
//!   rotating operator `-Δ - Ω L_z + V`.
//!
//! All stencils are second order. The radial stencil is written in flux form
//! so that it is symmetric under the weighted inner product
//! `⟨f, g⟩ = Σ w_ij f_ij g_ij` with `w_ij = 2π r_i Δr Δz`.

use std::f64::consts::PI;
use std::fmt::Write as _;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Axially symmetric power-law trap `V(r, z) = a r^s + b |z|^p + offset`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrapSpec {
    pub radial_coeff: f64,
    pub s: f64,
    pub axial_coeff: f64,
    pub p: f64,
    #[serde(default)]
    pub offset: f64,
}

impl TrapSpec {
    pub fn new(radial_coeff: f64, s: f64, axial_coeff: f64, p: f64, offset: f64) -> Result<Self> {
        let trap = TrapSpec {
            radial_coeff,
            s,
            axial_coeff,
            p,
            offset,
        };
        trap.validate()?;
        Ok(trap)
    }

    /// `V = r² + z²`, the isotropic oscillator in trap units.
    pub fn harmonic() -> Self {
        TrapSpec {
            radial_coeff: 1.0,
            s: 2.0,
            axial_coeff: 1.0,
            p: 2.0,
            offset: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.radial_coeff, self.s, self.axial_coeff, self.p, self.offset]
            .iter()
            .all(|x| x.is_finite());
        if !finite {
            return Err(Error::config("trap: all parameters must be finite"));
        }
        if self.radial_coeff <= 0.0 {
            return Err(Error::config("trap.radial_coeff: must be positive"));
        }
        if self.axial_coeff <= 0.0 {
            return Err(Error::config("trap.axial_coeff: must be positive"));
        }
        if self.s < 2.0 {
            return Err(Error::config(format!(
                "trap.s: radial exponent {} must be at least 2",
                self.s
            )));
        }
        if self.p <= 0.0 {
            return Err(Error::config(format!(
                "trap.p: axial exponent {} must be positive",
                self.p
            )));
        }
        if self.offset < 0.0 {
            return Err(Error::config("trap.offset: must be nonnegative"));
        }
        Ok(())
    }

    #[inline]
    pub fn value(&self, r: f64, z: f64) -> f64 {
        self.radial_coeff * pow_fast(r.abs(), self.s)
            + self.axial_coeff * pow_fast(z.abs(), self.p)
            + self.offset
    }

    /// Largest rotation speed for which `-Δ - Ω L_z + V` stays bounded below.
    pub fn critical_omega(&self) -> f64 {
        if self.s > 2.0 {
            f64::INFINITY
        } else {
            2.0 * self.radial_coeff.sqrt()
        }
    }

    /// Rejects rotation speeds at or beyond the critical one.
    pub fn check_omega(&self, omega: f64) -> Result<()> {
        let oc = self.critical_omega();
        if !omega.is_finite() || omega.abs() >= oc {
            return Err(Error::config(format!(
                "omega {omega} is not below the critical angular velocity {oc} of the trap; \
                 the rotating one-body operator is unbounded below there"
            )));
        }
        Ok(())
    }

    /// Exponent of the channel-gap decay bound, `-(2/s)(2 + 2/s + 1/p)`.
    pub fn gap_decay_exponent(&self) -> f64 {
        -(2.0 / self.s) * (2.0 + 2.0 / self.s + 1.0 / self.p)
    }
}

#[inline]
fn pow_fast(x: f64, e: f64) -> f64 {
    if e == 2.0 {
        x * x
    } else if e == 4.0 {
        let x2 = x * x;
        x2 * x2
    } else if e == 1.0 {
        x
    } else {
        x.powf(e)
    }
}

pub fn trap_value(trap: &TrapSpec, r: f64, z: f64) -> f64 {
    trap.value(r, z)
}

pub fn critical_omega(trap: &TrapSpec) -> f64 {
    trap.critical_omega()
}

/// Cell-centered grid on `[0, r_max] × [-z_max, z_max]`.
///
/// Field values are stored row-major with `z` as the row index:
/// `k = j * nr + i`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RadialGrid {
    pub nr: usize,
    pub nz: usize,
    pub r_max: f64,
    pub z_max: f64,
    pub dr: f64,
    pub dz: f64,
    #[serde(skip)]
    r: Vec<f64>,
    #[serde(skip)]
    z: Vec<f64>,
    #[serde(skip)]
    weights: Vec<f64>,
}

pub const MIN_GRID_POINTS: usize = 16;

impl RadialGrid {
    pub fn new(r_max: f64, z_max: f64, nr: usize, nz: usize) -> Result<Self> {
        if !(r_max > 0.0 && r_max.is_finite()) || !(z_max > 0.0 && z_max.is_finite()) {
            return Err(Error::config(format!(
                "grid: extents must be positive (r_max={r_max}, z_max={z_max})"
            )));
        }
        if nr < MIN_GRID_POINTS || nz < MIN_GRID_POINTS {
            return Err(Error::config(format!(
                "grid: need at least {MIN_GRID_POINTS} points per axis (nr={nr}, nz={nz})"
            )));
        }
        let dr = r_max / nr as f64;
        let dz = 2.0 * z_max / nz as f64;
        let r: Vec<f64> = (0..nr).map(|i| (i as f64 + 0.5) * dr).collect();
        let z: Vec<f64> = (0..nz).map(|j| -z_max + (j as f64 + 0.5) * dz).collect();
        let mut weights = Vec::with_capacity(nr * nz);
        for _ in 0..nz {
            for &ri in &r {
                weights.push(2.0 * PI * ri * dr * dz);
            }
        }
        Ok(RadialGrid {
            nr,
            nz,
            r_max,
            z_max,
            dr,
            dz,
            r,
            z,
            weights,
        })
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.nr * self.nz
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize) -> usize {
        j * self.nr + i
    }

    pub fn r_nodes(&self) -> &[f64] {
        &self.r
    }

    pub fn z_nodes(&self) -> &[f64] {
        &self.z
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Total measure `π r_max² · 2 z_max`, which the weights reproduce exactly.
    pub fn volume(&self) -> f64 {
        2.0 * PI * self.r_max * self.r_max * self.z_max
    }

    /// Same extents, every spacing halved.
    pub fn refined(&self) -> RadialGrid {
        RadialGrid::new(self.r_max, self.z_max, 2 * self.nr, 2 * self.nz)
            .expect("refining a valid grid")
    }

    pub fn same_shape(&self, other: &RadialGrid) -> bool {
        self.nr == other.nr && self.nz == other.nz
    }

    pub fn check(&self, field: &ScalarField2D) -> Result<()> {
        if field.nr != self.nr || field.nz != self.nz || field.values.len() != self.len() {
            return Err(Error::shape(format!(
                "field is {}x{} but grid is {}x{}",
                field.nr, field.nz, self.nr, self.nz
            )));
        }
        Ok(())
    }

    pub fn potential(&self, trap: &TrapSpec) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.len());
        for &zj in &self.z {
            for &ri in &self.r {
                v.push(trap.value(ri, zj));
            }
        }
        v
    }

    /// Weighted inner product `Σ w f g`.
    #[inline]
    pub fn dot(&self, f: &[f64], g: &[f64]) -> f64 {
        weighted_dot(&self.weights, f, g)
    }

    pub fn norm_sq(&self, f: &[f64]) -> f64 {
        self.dot(f, f)
    }

    /// Bilinear interpolation of a grid field at `(r, z)`; zero outside the box.
    pub fn sample(&self, values: &[f64], r: f64, z: f64) -> f64 {
        let r = r.abs();
        if r >= self.r_max || z.abs() >= self.z_max {
            return 0.0;
        }
        let u = (r / self.dr - 0.5).max(0.0);
        let v = (z + self.z_max) / self.dz - 0.5;
        let (i0, fu) = split_index(u);
        let (j0, fv) = split_index(v);
        let at = |i: isize, j: isize| -> f64 {
            // Dirichlet ghosts mirror with a sign change.
            let (mut sign, mut ii, mut jj) = (1.0, i, j);
            if ii >= self.nr as isize {
                ii = 2 * self.nr as isize - 1 - ii;
                sign = -sign;
            }
            if jj < 0 {
                jj = -1 - jj;
                sign = -sign;
            } else if jj >= self.nz as isize {
                jj = 2 * self.nz as isize - 1 - jj;
                sign = -sign;
            }
            sign * values[jj as usize * self.nr + ii as usize]
        };
        let f00 = at(i0, j0);
        let f10 = at(i0 + 1, j0);
        let f01 = at(i0, j0 + 1);
        let f11 = at(i0 + 1, j0 + 1);
        (1.0 - fu) * (1.0 - fv) * f00 + fu * (1.0 - fv) * f10 + (1.0 - fu) * fv * f01 + fu * fv * f11
    }

    /// Resamples a field from `self` onto `target`.
    pub fn resample(&self, field: &ScalarField2D, target: &RadialGrid) -> Result<ScalarField2D> {
        self.check(field)?;
        let mut out = ScalarField2D::zeros(target);
        for (j, &zj) in target.z.iter().enumerate() {
            for (i, &ri) in target.r.iter().enumerate() {
                out.values[j * target.nr + i] = self.sample(&field.values, ri, zj);
            }
        }
        Ok(out)
    }
}

fn split_index(u: f64) -> (isize, f64) {
    let i = u.floor();
    (i as isize, u - i)
}

#[inline]
pub fn weighted_dot(w: &[f64], f: &[f64], g: &[f64]) -> f64 {
    debug_assert_eq!(w.len(), f.len());
    debug_assert_eq!(w.len(), g.len());
    let mut acc = 0.0;
    for k in 0..w.len() {
        acc += w[k] * f[k] * g[k];
    }
    acc
}

pub fn make_radial_grid(r_max: f64, z_max: f64, nr: usize, nz: usize) -> Result<RadialGrid> {
    RadialGrid::new(r_max, z_max, nr, nz)
}

/// Real field on a [`RadialGrid`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalarField2D {
    pub nr: usize,
    pub nz: usize,
    pub values: Vec<f64>,
}

impl ScalarField2D {
    pub fn zeros(grid: &RadialGrid) -> Self {
        ScalarField2D {
            nr: grid.nr,
            nz: grid.nz,
            values: vec![0.0; grid.len()],
        }
    }

    pub fn from_fn(grid: &RadialGrid, mut f: impl FnMut(f64, f64) -> f64) -> Self {
        let mut values = Vec::with_capacity(grid.len());
        for &zj in grid.z_nodes() {
            for &ri in grid.r_nodes() {
                values.push(f(ri, zj));
            }
        }
        ScalarField2D {
            nr: grid.nr,
            nz: grid.nz,
            values,
        }
    }

    pub fn from_values(grid: &RadialGrid, values: Vec<f64>) -> Result<Self> {
        let field = ScalarField2D {
            nr: grid.nr,
            nz: grid.nz,
            values,
        };
        grid.check(&field)?;
        if field.values.iter().any(|v| !v.is_finite()) {
            return Err(Error::domain("field contains non-finite values"));
        }
        Ok(field)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    /// Scales to unit weighted norm; fails on the zero field.
    pub fn normalize(&mut self, grid: &RadialGrid) -> Result<f64> {
        let n2 = grid.norm_sq(&self.values);
        if !(n2 > 0.0) || !n2.is_finite() {
            return Err(Error::domain("cannot normalize a zero or non-finite field"));
        }
        let s = 1.0 / n2.sqrt();
        self.values.iter_mut().for_each(|v| *v *= s);
        Ok(n2.sqrt())
    }

    /// CSV matrix (row = z index, column = r index) with a metadata header line.
    pub fn to_csv(&self, grid: &RadialGrid, label: &str) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "# {label} nr={} nz={} r_max={} z_max={} dr={} dz={}",
            grid.nr, grid.nz, grid.r_max, grid.z_max, grid.dr, grid.dz
        );
        for j in 0..self.nz {
            let row = &self.values[j * self.nr..(j + 1) * self.nr];
            let line: Vec<String> = row.iter().map(|v| format!("{v:e}")).collect();
            out.push_str(&line.join(","));
            out.push('\n');
        }
        out
    }
}

pub fn integrate(grid: &RadialGrid, field: &ScalarField2D) -> Result<f64> {
    grid.check(field)?;
    Ok(grid
        .weights()
        .iter()
        .zip(&field.values)
        .map(|(w, f)| w * f)
        .sum())
}

/// Precomputed stencil of `-Δ_r - ∂_z² + n²/r² + V` on a [`RadialGrid`].
///
/// The `r = 0` face has zero flux because `r_{-1/2} = 0`; the ghost value there
/// never enters. Outer faces use odd mirroring (homogeneous Dirichlet).
#[derive(Debug, Clone)]
pub struct ChannelOperator {
    nr: usize,
    nz: usize,
    n: f64,
    inv_dz2: f64,
    lower: Vec<f64>,
    upper: Vec<f64>,
    diag: Vec<f64>,
}

impl ChannelOperator {
    pub fn new(grid: &RadialGrid, trap: &TrapSpec, n: f64) -> Result<Self> {
        if !(n >= 0.0) || !n.is_finite() {
            return Err(Error::domain(format!(
                "angular momentum must be nonnegative (got {n})"
            )));
        }
        let radial = RadialStencil::new(grid);
        let inv_dz2 = 1.0 / (grid.dz * grid.dz);
        let mut diag = Vec::with_capacity(grid.len());
        for (j, &zj) in grid.z_nodes().iter().enumerate() {
            let axial = if j == 0 || j + 1 == grid.nz { 3.0 } else { 2.0 } * inv_dz2;
            for (i, &ri) in grid.r_nodes().iter().enumerate() {
                diag.push(radial.diag[i] + axial + n * n / (ri * ri) + trap.value(ri, zj));
            }
        }
        Ok(ChannelOperator {
            nr: grid.nr,
            nz: grid.nz,
            n,
            inv_dz2,
            lower: radial.lower,
            upper: radial.upper,
            diag,
        })
    }

    pub fn n(&self) -> f64 {
        self.n
    }

    pub fn len(&self) -> usize {
        self.nr * self.nz
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `out = (H_n + extra) f`, with `extra` an optional multiplicative potential.
    pub fn apply(&self, f: &[f64], extra: Option<&[f64]>, out: &mut [f64]) {
        let (nr, nz) = (self.nr, self.nz);
        debug_assert_eq!(f.len(), nr * nz);
        debug_assert_eq!(out.len(), nr * nz);
        let c = self.inv_dz2;
        for j in 0..nz {
            let row = j * nr;
            for i in 0..nr {
                let k = row + i;
                let mut acc = self.diag[k] * f[k];
                if let Some(e) = extra {
                    acc += e[k] * f[k];
                }
                if i > 0 {
                    acc += self.lower[i] * f[k - 1];
                }
                if i + 1 < nr {
                    acc += self.upper[i] * f[k + 1];
                }
                if j > 0 {
                    acc -= c * f[k - nr];
                }
                if j + 1 < nz {
                    acc -= c * f[k + nr];
                }
                out[k] = acc;
            }
        }
    }

    /// Complex variant of [`ChannelOperator::apply`] with an extra diagonal shift.
    pub fn apply_complex(&self, f: &[Complex64], shift: f64, out: &mut [Complex64]) {
        let (nr, nz) = (self.nr, self.nz);
        let c = self.inv_dz2;
        for j in 0..nz {
            let row = j * nr;
            for i in 0..nr {
                let k = row + i;
                let mut acc = f[k] * (self.diag[k] + shift);
                if i > 0 {
                    acc += f[k - 1] * self.lower[i];
                }
                if i + 1 < nr {
                    acc += f[k + 1] * self.upper[i];
                }
                if j > 0 {
                    acc -= f[k - nr] * c;
                }
                if j + 1 < nz {
                    acc -= f[k + nr] * c;
                }
                out[k] = acc;
            }
        }
    }

    pub fn apply_vec(&self, f: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; f.len()];
        self.apply(f, None, &mut out);
        out
    }
}

/// Radial flux-form coefficients shared by the operator and the fast solver.
#[derive(Debug, Clone)]
struct RadialStencil {
    lower: Vec<f64>,
    upper: Vec<f64>,
    diag: Vec<f64>,
}

impl RadialStencil {
    fn new(grid: &RadialGrid) -> Self {
        let nr = grid.nr;
        let dr2 = grid.dr * grid.dr;
        let mut lower = vec![0.0; nr];
        let mut upper = vec![0.0; nr];
        let mut diag = vec![0.0; nr];
        for i in 0..nr {
            let ri = grid.r[i];
            let rp = ri + 0.5 * grid.dr;
            let rm = ri - 0.5 * grid.dr;
            let cp = rp / (ri * dr2);
            let cm = rm / (ri * dr2);
            lower[i] = -cm;
            upper[i] = -cp;
            diag[i] = cp + cm;
            if i + 1 == nr {
                diag[i] += cp;
            }
        }
        lower[0] = 0.0;
        RadialStencil { lower, upper, diag }
    }
}

pub fn apply_h0_channel(
    grid: &RadialGrid,
    trap: &TrapSpec,
    n: f64,
    f: &ScalarField2D,
) -> Result<ScalarField2D> {
    grid.check(f)?;
    let op = ChannelOperator::new(grid, trap, n)?;
    let mut out = ScalarField2D::zeros(grid);
    op.apply(&f.values, None, &mut out.values);
    Ok(out)
}

/// Direct solver for `(α + K_m) u = b` with `K_m = -Δ_r + m²/r² - ∂_z²`.
///
/// The axial stencil is diagonalized by cell-centered sine modes; what remains
/// is one tridiagonal radial solve per axial mode.
#[derive(Debug, Clone)]
pub struct KineticSolver {
    nr: usize,
    nz: usize,
    inv_r2: Vec<f64>,
    radial: RadialStencil,
    sine: Vec<f64>,
    lambda_z: Vec<f64>,
}

impl KineticSolver {
    pub fn new(grid: &RadialGrid) -> Self {
        let nz = grid.nz;
        let mut sine = vec![0.0; nz * nz];
        let mut lambda_z = vec![0.0; nz];
        for k in 0..nz {
            let q = (k + 1) as f64;
            let scale = if k + 1 == nz {
                (1.0 / nz as f64).sqrt()
            } else {
                (2.0 / nz as f64).sqrt()
            };
            for j in 0..nz {
                sine[k * nz + j] = scale * (q * PI * (j as f64 + 0.5) / nz as f64).sin();
            }
            lambda_z[k] = (2.0 - 2.0 * (q * PI / nz as f64).cos()) / (grid.dz * grid.dz);
        }
        KineticSolver {
            nr: grid.nr,
            nz,
            inv_r2: grid.r.iter().map(|r| 1.0 / (r * r)).collect(),
            radial: RadialStencil::new(grid),
            sine,
            lambda_z,
        }
    }

    /// Solves `(α + K_m) u = b`; `scratch` must hold `2 nr nz` values.
    pub fn solve(&self, m2: f64, alpha: f64, b: &[f64], u: &mut [f64], scratch: &mut Vec<f64>) {
        let (nr, nz) = (self.nr, self.nz);
        scratch.clear();
        scratch.resize(2 * nr * nz, 0.0);
        let (bhat, work) = scratch.split_at_mut(nr * nz);
        for k in 0..nz {
            let dst = &mut bhat[k * nr..(k + 1) * nr];
            for j in 0..nz {
                let s = self.sine[k * nz + j];
                let src = &b[j * nr..(j + 1) * nr];
                for i in 0..nr {
                    dst[i] += s * src[i];
                }
            }
        }
        for k in 0..nz {
            let shift = alpha + self.lambda_z[k];
            let rhs = &mut bhat[k * nr..(k + 1) * nr];
            let cp = &mut work[k * nr..(k + 1) * nr];
            // Thomas algorithm; the matrix is strictly diagonally dominant.
            let mut denom = self.radial.diag[0] + shift + m2 * self.inv_r2[0];
            cp[0] = self.radial.upper[0] / denom;
            rhs[0] /= denom;
            for i in 1..nr {
                let d = self.radial.diag[i] + shift + m2 * self.inv_r2[i];
                denom = d - self.radial.lower[i] * cp[i - 1];
                cp[i] = if i + 1 < nr { self.radial.upper[i] / denom } else { 0.0 };
                rhs[i] = (rhs[i] - self.radial.lower[i] * rhs[i - 1]) / denom;
            }
            for i in (0..nr - 1).rev() {
                rhs[i] -= cp[i] * rhs[i + 1];
            }
        }
        u.iter_mut().for_each(|x| *x = 0.0);
        for j in 0..nz {
            let dst = &mut u[j * nr..(j + 1) * nr];
            for k in 0..nz {
                let s = self.sine[k * nz + j];
                let src = &bhat[k * nr..(k + 1) * nr];
                for i in 0..nr {
                    dst[i] += s * src[i];
                }
            }
        }
    }
}

/// Cell-centered Cartesian grid centered at the origin; the rotation axis is `z`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CartesianGrid3D {
    pub n: [usize; 3],
    pub half_extent: [f64; 3],
    pub spacing: [f64; 3],
    #[serde(skip)]
    coords: [Vec<f64>; 3],
}

impl CartesianGrid3D {
    pub fn new(n: [usize; 3], half_extent: [f64; 3]) -> Result<Self> {
        for a in 0..3 {
            if n[a] < 4 {
                return Err(Error::config(format!("cartesian grid: axis {a} needs at least 4 points")));
            }
            if !(half_extent[a] > 0.0 && half_extent[a].is_finite()) {
                return Err(Error::config(format!("cartesian grid: axis {a} extent must be positive")));
            }
        }
        let spacing = [0, 1, 2].map(|a| 2.0 * half_extent[a] / n[a] as f64);
        let coords = [0, 1, 2].map(|a| {
            (0..n[a])
                .map(|k| -half_extent[a] + (k as f64 + 0.5) * spacing[a])
                .collect::<Vec<_>>()
        });
        Ok(CartesianGrid3D {
            n,
            half_extent,
            spacing,
            coords,
        })
    }

    pub fn cube(n: usize, half_extent: f64) -> Result<Self> {
        Self::new([n; 3], [half_extent; 3])
    }

    pub fn len(&self) -> usize {
        self.n[0] * self.n[1] * self.n[2]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn cell_volume(&self) -> f64 {
        self.spacing[0] * self.spacing[1] * self.spacing[2]
    }

    pub fn coords(&self, axis: usize) -> &[f64] {
        &self.coords[axis]
    }

    #[inline]
    pub fn index(&self, ix: usize, iy: usize, iz: usize) -> usize {
        (iz * self.n[1] + iy) * self.n[0] + ix
    }

    pub fn potential(&self, trap: &TrapSpec) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.len());
        for &z in &self.coords[2] {
            for &y in &self.coords[1] {
                for &x in &self.coords[0] {
                    v.push(trap.value((x * x + y * y).sqrt(), z));
                }
            }
        }
        v
    }
}

/// Complex field on a 3D grid; `dims` follows the owning space's layout.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexField3D {
    pub dims: [usize; 3],
    pub values: Vec<Complex64>,
}

impl ComplexField3D {
    pub fn zeros(dims: [usize; 3]) -> Self {
        ComplexField3D {
            dims,
            values: vec![Complex64::new(0.0, 0.0); dims[0] * dims[1] * dims[2]],
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn from_cartesian_fn(
        grid: &CartesianGrid3D,
        mut f: impl FnMut(f64, f64, f64) -> Complex64,
    ) -> Self {
        let mut values = Vec::with_capacity(grid.len());
        for &z in grid.coords(2) {
            for &y in grid.coords(1) {
                for &x in grid.coords(0) {
                    values.push(f(x, y, z));
                }
            }
        }
        ComplexField3D {
            dims: grid.n,
            values,
        }
    }
}

/// Rotating one-body operator on a Cartesian grid with zero Dirichlet ghosts.
#[derive(Debug, Clone)]
pub struct CartesianOperator {
    n: [usize; 3],
    inv_h2: [f64; 3],
    inv_2h: [f64; 3],
    x: Vec<f64>,
    y: Vec<f64>,
    potential: Vec<f64>,
}

impl CartesianOperator {
    pub fn new(grid: &CartesianGrid3D, trap: &TrapSpec) -> Self {
        CartesianOperator {
            n: grid.n,
            inv_h2: grid.spacing.map(|h| 1.0 / (h * h)),
            inv_2h: grid.spacing.map(|h| 0.5 / h),
            x: grid.coords(0).to_vec(),
            y: grid.coords(1).to_vec(),
            potential: grid.potential(trap),
        }
    }

    /// `out = (-Δ + V + shift) ψ - Ω L_z ψ`.
    pub fn apply(&self, omega: f64, shift: f64, psi: &[Complex64], out: &mut [Complex64]) {
        let [nx, ny, nz] = self.n;
        let sx = 1;
        let sy = nx;
        let sz = nx * ny;
        let zero = Complex64::new(0.0, 0.0);
        let diag0 = 2.0 * (self.inv_h2[0] + self.inv_h2[1] + self.inv_h2[2]);
        for iz in 0..nz {
            for iy in 0..ny {
                let y = self.y[iy];
                for ix in 0..nx {
                    let x = self.x[ix];
                    let k = (iz * ny + iy) * nx + ix;
                    let xm = if ix > 0 { psi[k - sx] } else { zero };
                    let xp = if ix + 1 < nx { psi[k + sx] } else { zero };
                    let ym = if iy > 0 { psi[k - sy] } else { zero };
                    let yp = if iy + 1 < ny { psi[k + sy] } else { zero };
                    let zm = if iz > 0 { psi[k - sz] } else { zero };
                    let zp = if iz + 1 < nz { psi[k + sz] } else { zero };
                    let lap = psi[k] * diag0
                        - (xm + xp) * self.inv_h2[0]
                        - (ym + yp) * self.inv_h2[1]
                        - (zm + zp) * self.inv_h2[2];
                    let dx = (xp - xm) * self.inv_2h[0];
                    let dy = (yp - ym) * self.inv_2h[1];
                    // L_z ψ = -i (x ∂_y - y ∂_x) ψ
                    let lz = (dy * x - dx * y) * Complex64::new(0.0, -1.0);
                    out[k] = lap + psi[k] * (self.potential[k] + shift) - lz * omega;
                }
            }
        }
    }

    /// `out = L_z ψ` with centered differences.
    pub fn apply_lz(&self, psi: &[Complex64], out: &mut [Complex64]) {
        let [nx, ny, nz] = self.n;
        let zero = Complex64::new(0.0, 0.0);
        for iz in 0..nz {
            for iy in 0..ny {
                let y = self.y[iy];
                for ix in 0..nx {
                    let x = self.x[ix];
                    let k = (iz * ny + iy) * nx + ix;
                    let xm = if ix > 0 { psi[k - 1] } else { zero };
                    let xp = if ix + 1 < nx { psi[k + 1] } else { zero };
                    let ym = if iy > 0 { psi[k - nx] } else { zero };
                    let yp = if iy + 1 < ny { psi[k + nx] } else { zero };
                    let dx = (xp - xm) * self.inv_2h[0];
                    let dy = (yp - ym) * self.inv_2h[1];
                    out[k] = (dy * x - dx * y) * Complex64::new(0.0, -1.0);
                }
            }
        }
    }

    pub fn potential(&self) -> &[f64] {
        &self.potential
    }

    /// Diagonal of the kinetic stencil, used as a crude preconditioner shift.
    pub fn kinetic_diag(&self) -> f64 {
        2.0 * (self.inv_h2[0] + self.inv_h2[1] + self.inv_h2[2])
    }
}

pub fn apply_h0_cartesian(
    grid: &CartesianGrid3D,
    trap: &TrapSpec,
    omega: f64,
    psi: &ComplexField3D,
) -> Result<ComplexField3D> {
    trap.check_omega(omega)?;
    if psi.dims != grid.n || psi.values.len() != grid.len() {
        return Err(Error::shape(format!(
            "field dims {:?} do not match grid {:?}",
            psi.dims, grid.n
        )));
    }
    let op = CartesianOperator::new(grid, trap);
    let mut out = ComplexField3D::zeros(grid.n);
    op.apply(omega, 0.0, &psi.values, &mut out.values);
    Ok(out)
}
