//! Angular-momentum channel functional.
//!
//! For `ψ = f(r, z) e^{inφ}` the GP energy reduces to
//! `E_n[f] = ∫ |∂_r f|² + |∂_z f|² + (n²/r²) f² + V f² + 4πg f⁴` over
//! `2π r dr dz`. Minimization keeps `f ≥ 0` and `∫ f² = 1`.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::Serialize;

use crate::discretization::{ChannelOperator, KineticSolver, RadialGrid, ScalarField2D, TrapSpec};
use crate::error::{BestIterate, Error, Result};
use crate::linalg::{lobpcg_lowest, LobpcgOptions};

/// Normalization slack accepted by the energy evaluators.
pub const NORM_TOL: f64 = 1e-6;

#[derive(Debug, Clone)]
pub struct ChannelOptions {
    /// Stop once `‖H_f f - μ̃ f‖ ≤ tol · |μ̃|`.
    pub tol: f64,
    pub max_iter: usize,
    /// Starting orbital on the same grid; overrides the Thomas–Fermi guess.
    pub init: Option<ScalarField2D>,
    /// Keep the energy after every accepted step.
    pub record_trace: bool,
}

impl Default for ChannelOptions {
    fn default() -> Self {
        ChannelOptions {
            tol: 1e-6,
            max_iter: 50_000,
            init: None,
            record_trace: false,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ChannelResult {
    pub n: f64,
    pub g: f64,
    pub energy: f64,
    pub mu_tilde: f64,
    /// `∫ f⁴` on the grid quadrature.
    pub quartic: f64,
    #[serde(skip)]
    pub orbital: ScalarField2D,
    pub iterations: usize,
    pub residual: f64,
    #[serde(skip)]
    pub energy_trace: Vec<f64>,
}

/// Reusable per-grid state: the fast kinetic solver and the potential.
#[derive(Debug, Clone)]
pub struct ChannelContext {
    pub grid: RadialGrid,
    pub trap: TrapSpec,
    pub kinetic: KineticSolver,
}

impl ChannelContext {
    pub fn new(grid: &RadialGrid, trap: &TrapSpec) -> Result<Self> {
        trap.validate()?;
        Ok(ChannelContext {
            grid: grid.clone(),
            trap: *trap,
            kinetic: KineticSolver::new(grid),
        })
    }

    pub fn operator(&self, n: f64) -> Result<ChannelOperator> {
        ChannelOperator::new(&self.grid, &self.trap, n)
    }

    /// Thomas–Fermi-like start `max(0, μ₀ - V - n²/r²)^{1/2}`, or `r^n` times a Gaussian.
    pub fn initial_orbital(&self, g: f64, n: f64) -> ScalarField2D {
        let grid = &self.grid;
        if g > 0.0 {
            if let Some(f) = thomas_fermi_orbital(grid, &self.trap, g, n) {
                return f;
            }
        }
        gaussian_orbital(grid, n)
    }

    pub fn minimize(&self, g: f64, n: f64, opts: &ChannelOptions) -> Result<ChannelResult> {
        check_params(g, n)?;
        let op = self.operator(n)?;
        let grid = &self.grid;
        let mut f = match &opts.init {
            Some(init) => {
                grid.check(init)?;
                let mut f = init.clone();
                f.values.iter_mut().for_each(|v| *v = v.abs());
                if f.normalize(grid).is_err() {
                    self.initial_orbital(g, n)
                } else {
                    f
                }
            }
            None => self.initial_orbital(g, n),
        };
        if f.normalize(grid).is_err() {
            f = gaussian_orbital(grid, n);
        }
        if g == 0.0 {
            self.minimize_linear(&op, n, f, opts)
        } else {
            self.minimize_nonlinear(&op, g, n, f, opts)
        }
    }

    fn minimize_linear(
        &self,
        op: &ChannelOperator,
        n: f64,
        f: ScalarField2D,
        opts: &ChannelOptions,
    ) -> Result<ChannelResult> {
        let grid = &self.grid;
        let mut scratch = Vec::new();
        // Eigen tolerance in absolute terms; the ground energy is O(1)-O(100).
        let eig_tol = (opts.tol * 1e-2).min(1e-8);
        let res = lobpcg_lowest(
            |x: &[f64], y: &mut [f64]| op.apply(x, None, y),
            |r: &[f64], theta: f64, y: &mut [f64]| {
                self.kinetic.solve(n * n, theta.abs().max(1.0), r, y, &mut scratch)
            },
            grid.weights(),
            f.values,
            &LobpcgOptions {
                tol: eig_tol,
                max_iter: opts.max_iter.min(20_000),
            },
        );
        let (vector, iterations) = match res {
            Ok(r) => (r.vector, r.iterations),
            Err(Error::NotConverged {
                iterations,
                residual,
                best: Some(b),
                ..
            }) => {
                let vec = match *b {
                    BestIterate::Eigen { vector, .. } => vector,
                    _ => unreachable!("eigensolver returns eigen iterates"),
                };
                let best = self.finish(op, 0.0, n, vec, iterations, Vec::new());
                if best.residual <= opts.tol * best.mu_tilde.abs() {
                    return Ok(best);
                }
                return Err(Error::NotConverged {
                    solver: "channel eigensolver",
                    iterations,
                    residual,
                    best: Some(Box::new(BestIterate::Channel(best))),
                });
            }
            Err(e) => return Err(e),
        };
        let mut out = self.finish(op, 0.0, n, vector, iterations, Vec::new());
        if opts.record_trace {
            out.energy_trace = vec![out.energy];
        }
        Ok(out)
    }

    /// Preconditioned nonlinear conjugate gradient on the unit sphere.
    ///
    /// Each step moves along the retraction `(f + τ d) / ‖f + τ d‖`; the energy
    /// along that curve is an explicit rational function of `τ`, so the line
    /// search is exact and every accepted step lowers the energy.
    fn minimize_nonlinear(
        &self,
        op: &ChannelOperator,
        g: f64,
        n: f64,
        f0: ScalarField2D,
        opts: &ChannelOptions,
    ) -> Result<ChannelResult> {
        let grid = &self.grid;
        let w = grid.weights();
        let len = grid.len();
        let c4 = 4.0 * PI * g;
        let mut f = f0.values;
        let mut af = vec![0.0; len];
        let mut ad = vec![0.0; len];
        let mut r = vec![0.0; len];
        let mut z = vec![0.0; len];
        let mut z_prev = vec![0.0; len];
        let mut r_prev = vec![0.0; len];
        let mut d = vec![0.0; len];
        let mut scratch = Vec::new();
        let mut have_dir = false;
        let mut trace = Vec::new();
        let mut tau_hint = 1.0f64;
        let mut best_res = f64::INFINITY;
        let mut stalls = 0usize;

        op.apply(&f, None, &mut af);
        let mut energy = channel_energy_parts(w, &f, &af, c4).0;
        if opts.record_trace {
            trace.push(energy);
        }
        for it in 0..opts.max_iter {
            // Residual of the Euler–Lagrange equation at f.
            let mut mu = 0.0;
            for k in 0..len {
                let hf = af[k] + 2.0 * c4 * f[k] * f[k] * f[k];
                r[k] = hf;
                mu += w[k] * f[k] * hf;
            }
            let mut res2 = 0.0;
            for k in 0..len {
                r[k] -= mu * f[k];
                res2 += w[k] * r[k] * r[k];
            }
            let res = res2.sqrt();
            best_res = best_res.min(res);
            if res <= opts.tol * mu.abs() {
                let mut out = self.finish(op, g, n, f, it, trace);
                out.iterations = it;
                return Ok(out);
            }
            self.kinetic
                .solve(n * n, mu.abs().max(1.0), &r, &mut z, &mut scratch);
            let zf = dot(w, &z, &f);
            for k in 0..len {
                z[k] -= zf * f[k];
            }
            let mut beta = 0.0;
            if have_dir {
                let denom = dot(w, &r_prev, &z_prev);
                if denom > 0.0 {
                    let mut num = 0.0;
                    for k in 0..len {
                        num += w[k] * r[k] * (z[k] - z_prev[k]);
                    }
                    beta = (num / denom).max(0.0);
                }
            }
            for k in 0..len {
                d[k] = -z[k] + beta * d[k];
            }
            let df = dot(w, &d, &f);
            for k in 0..len {
                d[k] -= df * f[k];
            }
            if dot(w, &d, &r) >= 0.0 {
                for k in 0..len {
                    d[k] = -z[k];
                }
            }
            r_prev.copy_from_slice(&r);
            z_prev.copy_from_slice(&z);

            op.apply(&d, None, &mut ad);
            let line = LineModel::new(w, &f, &af, &d, &ad, c4);
            let (tau, e_new) = line.minimize(tau_hint);
            if !(e_new < energy) || tau == 0.0 {
                if have_dir {
                    // Drop conjugacy and retry with the preconditioned gradient.
                    have_dir = false;
                    for v in d.iter_mut() {
                        *v = 0.0;
                    }
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
            let norm = line.norm(tau);
            let mut flipped = false;
            for k in 0..len {
                let v = (f[k] + tau * d[k]) / norm;
                if v < 0.0 {
                    flipped = true;
                }
                f[k] = v.abs();
            }
            if flipped {
                op.apply(&f, None, &mut af);
                energy = channel_energy_parts(w, &f, &af, c4).0;
                have_dir = false;
                for v in d.iter_mut() {
                    *v = 0.0;
                }
            } else {
                for k in 0..len {
                    af[k] = (af[k] + tau * ad[k]) / norm;
                }
                energy = e_new;
                have_dir = true;
                // Refresh the recurrence for A f occasionally.
                if it % 50 == 49 {
                    op.apply(&f, None, &mut af);
                    energy = channel_energy_parts(w, &f, &af, c4).0;
                }
            }
            if opts.record_trace {
                trace.push(energy);
            }
        }
        let out = self.finish(op, g, n, f, opts.max_iter, trace);
        if out.residual <= opts.tol * out.mu_tilde.abs() {
            return Ok(out);
        }
        Err(Error::NotConverged {
            solver: "channel minimizer",
            iterations: opts.max_iter,
            residual: out.residual.min(best_res),
            best: Some(Box::new(BestIterate::Channel(out))),
        })
    }

    /// Assembles a result from an orbital, recomputing all derived numbers.
    fn finish(
        &self,
        op: &ChannelOperator,
        g: f64,
        n: f64,
        vector: Vec<f64>,
        iterations: usize,
        energy_trace: Vec<f64>,
    ) -> ChannelResult {
        let grid = &self.grid;
        let mut orbital = ScalarField2D {
            nr: grid.nr,
            nz: grid.nz,
            values: vector,
        };
        // The ground state has one sign; fix it to nonnegative.
        let s: f64 = orbital.values.iter().sum();
        if s < 0.0 {
            orbital.values.iter_mut().for_each(|v| *v = -*v);
        }
        orbital.values.iter_mut().for_each(|v| *v = v.max(0.0));
        let _ = orbital.normalize(grid);
        let mut af = vec![0.0; grid.len()];
        op.apply(&orbital.values, None, &mut af);
        let (energy, quartic) = channel_energy_parts(grid.weights(), &orbital.values, &af, 4.0 * PI * g);
        let mu_tilde = energy + 4.0 * PI * g * quartic;
        let residual = residual_norm(grid, &orbital.values, &af, g, mu_tilde);
        ChannelResult {
            n,
            g,
            energy,
            mu_tilde,
            quartic,
            orbital,
            iterations,
            residual,
            energy_trace,
        }
    }
}

fn check_params(g: f64, n: f64) -> Result<()> {
    if !(g >= 0.0) || !g.is_finite() {
        return Err(Error::domain(format!("coupling g must be nonnegative (got {g})")));
    }
    if !(n >= 0.0) || !n.is_finite() {
        return Err(Error::domain(format!(
            "angular momentum must be nonnegative (got {n})"
        )));
    }
    Ok(())
}

#[inline]
fn dot(w: &[f64], a: &[f64], b: &[f64]) -> f64 {
    crate::discretization::weighted_dot(w, a, b)
}

/// Returns `(⟨f, A f⟩ + c4 ∫f⁴, ∫f⁴)`.
fn channel_energy_parts(w: &[f64], f: &[f64], af: &[f64], c4: f64) -> (f64, f64) {
    let mut quad = 0.0;
    let mut quartic = 0.0;
    for k in 0..f.len() {
        quad += w[k] * f[k] * af[k];
        let f2 = f[k] * f[k];
        quartic += w[k] * f2 * f2;
    }
    (quad + c4 * quartic, quartic)
}

fn residual_norm(grid: &RadialGrid, f: &[f64], af: &[f64], g: f64, mu: f64) -> f64 {
    let w = grid.weights();
    let c8 = 8.0 * PI * g;
    let mut acc = 0.0;
    for k in 0..f.len() {
        let r = af[k] + c8 * f[k] * f[k] * f[k] - mu * f[k];
        acc += w[k] * r * r;
    }
    acc.sqrt()
}

/// Energy along `τ ↦ (f + τ d)/‖f + τ d‖` for tangent `d`.
///
/// `q` holds the coefficients of the quartic integral of `f + τ d` as a
/// polynomial in `τ`.
pub(crate) struct LineModel {
    a_ff: f64,
    a_fd: f64,
    a_dd: f64,
    dd: f64,
    c4: f64,
    q: [f64; 5],
}

impl LineModel {
    pub(crate) fn from_parts(a_ff: f64, a_fd: f64, a_dd: f64, dd: f64, c4: f64, q: [f64; 5]) -> Self {
        LineModel {
            a_ff,
            a_fd,
            a_dd,
            dd,
            c4,
            q,
        }
    }

    fn new(w: &[f64], f: &[f64], af: &[f64], d: &[f64], ad: &[f64], c4: f64) -> Self {
        let mut a_ff = 0.0;
        let mut a_fd = 0.0;
        let mut a_dd = 0.0;
        let mut dd = 0.0;
        let mut q = [0.0; 5];
        for k in 0..f.len() {
            let (fk, dk, wk) = (f[k], d[k], w[k]);
            a_ff += wk * fk * af[k];
            a_fd += wk * fk * ad[k];
            a_dd += wk * dk * ad[k];
            dd += wk * dk * dk;
            let f2 = fk * fk;
            let d2 = dk * dk;
            q[0] += wk * f2 * f2;
            q[1] += wk * 4.0 * f2 * fk * dk;
            q[2] += wk * 6.0 * f2 * d2;
            q[3] += wk * 4.0 * fk * d2 * dk;
            q[4] += wk * d2 * d2;
        }
        LineModel {
            a_ff,
            a_fd,
            a_dd,
            dd,
            c4,
            q,
        }
    }

    pub(crate) fn norm(&self, tau: f64) -> f64 {
        (1.0 + tau * tau * self.dd).sqrt()
    }

    pub(crate) fn energy(&self, tau: f64) -> f64 {
        let n2 = 1.0 + tau * tau * self.dd;
        let quad = self.a_ff + 2.0 * tau * self.a_fd + tau * tau * self.a_dd;
        let q = self.q;
        let quartic = q[0] + tau * (q[1] + tau * (q[2] + tau * (q[3] + tau * q[4])));
        quad / n2 + self.c4 * quartic / (n2 * n2)
    }

    /// Bracket then golden-section search on `τ ≥ 0`.
    pub(crate) fn minimize(&self, hint: f64) -> (f64, f64) {
        let e0 = self.energy(0.0);
        let mut a = 0.0;
        let mut b = hint.max(1e-12);
        let mut eb = self.energy(b);
        // Shrink until the first probe improves on τ = 0.
        let mut shrinks = 0;
        while !(eb < e0) && shrinks < 60 {
            b *= 0.25;
            eb = self.energy(b);
            shrinks += 1;
        }
        if !(eb < e0) {
            return (0.0, e0);
        }
        // Expand while the energy keeps dropping.
        let mut c = 2.0 * b;
        let mut ec = self.energy(c);
        let mut grows = 0;
        while ec < eb && grows < 60 {
            a = b;
            b = c;
            eb = ec;
            c *= 2.0;
            ec = self.energy(c);
            grows += 1;
        }
        // Minimum bracketed in [a, c] with interior point b.
        let gr = 0.5 * (5f64.sqrt() - 1.0);
        let (mut lo, mut hi) = (a, c);
        let mut x1 = hi - gr * (hi - lo);
        let mut x2 = lo + gr * (hi - lo);
        let mut e1 = self.energy(x1);
        let mut e2 = self.energy(x2);
        for _ in 0..80 {
            if (hi - lo) <= 1e-10 * hi.abs().max(1e-12) {
                break;
            }
            if e1 < e2 {
                hi = x2;
                x2 = x1;
                e2 = e1;
                x1 = hi - gr * (hi - lo);
                e1 = self.energy(x1);
            } else {
                lo = x1;
                x1 = x2;
                e1 = e2;
                x2 = lo + gr * (hi - lo);
                e2 = self.energy(x2);
            }
        }
        let mut best = (b, eb);
        for cand in [(x1, e1), (x2, e2)] {
            if cand.1 < best.1 {
                best = cand;
            }
        }
        best
    }
}

fn gaussian_orbital(grid: &RadialGrid, n: f64) -> ScalarField2D {
    // log-space keeps r^n finite for large n.
    let peak = if n > 0.0 { 0.5 * n * n.ln() - 0.5 * n } else { 0.0 };
    let mut f = ScalarField2D::from_fn(grid, |r, z| {
        let lg = if n > 0.0 { n * r.ln() } else { 0.0 };
        (lg - 0.5 * (r * r + z * z) - peak).exp()
    });
    if f.normalize(grid).is_err() {
        f = ScalarField2D::from_fn(grid, |_, _| 1.0);
        let _ = f.normalize(grid);
    }
    f
}

fn thomas_fermi_orbital(grid: &RadialGrid, trap: &TrapSpec, g: f64, n: f64) -> Option<ScalarField2D> {
    let veff: Vec<f64> = {
        let mut v = grid.potential(trap);
        for j in 0..grid.nz {
            for (i, &r) in grid.r_nodes().iter().enumerate() {
                v[j * grid.nr + i] += n * n / (r * r);
            }
        }
        v
    };
    let w = grid.weights();
    let c8 = 8.0 * PI * g;
    let mass = |mu: f64| -> f64 {
        veff.iter()
            .zip(w)
            .map(|(v, wk)| wk * (mu - v).max(0.0) / c8)
            .sum()
    };
    let vmin = veff.iter().cloned().fold(f64::INFINITY, f64::min);
    let mut lo = vmin;
    let mut hi = vmin + 1.0;
    let mut grow = 0;
    while mass(hi) < 1.0 {
        hi = vmin + 2.0 * (hi - vmin);
        grow += 1;
        if grow > 200 {
            return None;
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mass(mid) < 1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let mu = hi;
    let values: Vec<f64> = veff.iter().map(|v| ((mu - v).max(0.0) / c8).sqrt()).collect();
    let support = values.iter().filter(|&&v| v > 0.0).count();
    if support < 8 {
        return None;
    }
    let mut f = ScalarField2D {
        nr: grid.nr,
        nz: grid.nz,
        values,
    };
    f.normalize(grid).ok()?;
    Some(f)
}

/// `∫ [|∇f|² + (n²/r²) f² + V f² + 4πg f⁴]` for a normalized channel orbital.
pub fn channel_energy(
    grid: &RadialGrid,
    trap: &TrapSpec,
    g: f64,
    n: f64,
    f: &ScalarField2D,
) -> Result<f64> {
    check_params(g, n)?;
    grid.check(f)?;
    let norm = grid.norm_sq(&f.values);
    if (norm - 1.0).abs() > NORM_TOL {
        return Err(Error::domain(format!(
            "channel orbital must be normalized (‖f‖² = {norm})"
        )));
    }
    let op = ChannelOperator::new(grid, trap, n)?;
    let af = op.apply_vec(&f.values);
    Ok(channel_energy_parts(grid.weights(), &f.values, &af, 4.0 * PI * g).0)
}

pub fn channel_minimize(
    grid: &RadialGrid,
    trap: &TrapSpec,
    g: f64,
    n: f64,
    opts: &ChannelOptions,
) -> Result<ChannelResult> {
    ChannelContext::new(grid, trap)?.minimize(g, n, opts)
}

/// `μ̃_n = E_n + 4πg ∫ f⁴`.
pub fn channel_mu(result: &ChannelResult) -> f64 {
    result.energy + 4.0 * PI * result.g * result.quartic
}

/// Weighted norm of `(-Δ_r - ∂_z² + n²/r² + V + 8πg f²) f - μ̃ f`.
pub fn channel_residual(grid: &RadialGrid, trap: &TrapSpec, g: f64, result: &ChannelResult) -> Result<f64> {
    grid.check(&result.orbital)?;
    let op = ChannelOperator::new(grid, trap, result.n)?;
    let f = &result.orbital.values;
    let af = op.apply_vec(f);
    let (energy, quartic) = channel_energy_parts(grid.weights(), f, &af, 4.0 * PI * g);
    let mu = energy + 4.0 * PI * g * quartic;
    Ok(residual_norm(grid, f, &af, g, mu))
}

/// Channel results for consecutive integer `n = 0, 1, ...`.
#[derive(Debug, Clone, Serialize)]
pub struct ChannelScan {
    pub g: f64,
    pub results: Vec<ChannelResult>,
    /// False when the scan stopped at a cap before the growth rule was met.
    pub bracketed: bool,
}

impl ChannelScan {
    pub fn energies(&self) -> Vec<f64> {
        self.results.iter().map(|r| r.energy).collect()
    }

    /// `argmin_n (E_n - n Ω)` and the minimum; ties go to the smaller `n`.
    pub fn best_symmetric(&self, omega: f64) -> (usize, f64) {
        let mut best = (0usize, f64::INFINITY);
        for (k, r) in self.results.iter().enumerate() {
            let v = r.energy - r.n * omega.abs();
            if v < best.1 - 1e-12 * v.abs().max(1.0) {
                best = (k, v);
            }
        }
        best
    }

    /// True when the minimizing `n` is not the last one computed.
    pub fn brackets_minimum(&self, omega: f64) -> bool {
        let (k, _) = self.best_symmetric(omega);
        k + 1 < self.results.len()
    }
}

/// Computes `n = 0..=n_max`, independently and in parallel.
pub fn channel_scan(
    grid: &RadialGrid,
    trap: &TrapSpec,
    g: f64,
    n_max: usize,
    opts: &ChannelOptions,
) -> Result<ChannelScan> {
    let ctx = ChannelContext::new(grid, trap)?;
    let results: Vec<Result<ChannelResult>> = (0..=n_max)
        .into_par_iter()
        .map(|n| ctx.minimize(g, n as f64, opts))
        .collect();
    let results = results.into_iter().collect::<Result<Vec<_>>>()?;
    Ok(ChannelScan {
        g,
        results,
        bracketed: true,
    })
}

/// Growth reference for the stopping rule: `Ω_c`, or `2|Ω|` when `Ω_c = ∞`.
pub fn growth_reference(trap: &TrapSpec, omega: f64) -> f64 {
    let oc = trap.critical_omega();
    if oc.is_finite() {
        oc
    } else {
        2.0 * omega.abs()
    }
}

/// Increases `n` until `E_n - nΩ` has risen three times in a row and
/// `μ̃_n ≥ 0.9 n ω`, or `n_cap` is reached.
///
/// `warm` optionally supplies starting orbitals per `n`.
pub fn channel_scan_adaptive(
    ctx: &ChannelContext,
    g: f64,
    omega: f64,
    n_cap: usize,
    opts: &ChannelOptions,
    warm: Option<&[ScalarField2D]>,
) -> Result<ChannelScan> {
    let omega_ref = growth_reference(&ctx.trap, omega);
    let mut results: Vec<ChannelResult> = Vec::new();
    let mut rises = 0usize;
    let mut bracketed = false;
    for n in 0..=n_cap {
        let mut o = opts.clone();
        if let Some(w) = warm.and_then(|w| w.get(n)) {
            o.init = Some(w.clone());
        } else if let Some(prev) = results.last() {
            // The previous orbital is a decent start for n.
            o.init = Some(prev.orbital.clone());
        }
        let r = ctx.minimize(g, n as f64, &o)?;
        if let Some(prev) = results.last() {
            let vp = prev.energy - prev.n * omega.abs();
            let vn = r.energy - r.n * omega.abs();
            if vn > vp {
                rises += 1;
            } else {
                rises = 0;
            }
        }
        let grown = r.mu_tilde >= 0.9 * n as f64 * omega_ref;
        results.push(r);
        if rises >= 3 && grown {
            bracketed = true;
            break;
        }
    }
    Ok(ChannelScan {
        g,
        results,
        bracketed,
    })
}
