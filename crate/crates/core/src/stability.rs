//! Instability of vortex channel states and the bounds behind it.
//!
//! For a channel state `φ = f_n e^{inφ}` the second variation of the GP
//! functional in a direction `w ⟂ φ` is
//! `Q(w) = ⟨w, H₀ + 16πg f_n² - μ̃_n + n|Ω| w⟩ + 8πg Re ∫ φ*² w²`.
//! A negative value shows the channel state is not a GP minimizer.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::Serialize;
use statrs::function::gamma::ln_gamma;

use crate::channel::{ChannelContext, ChannelOptions, ChannelResult};
use crate::discretization::{ChannelOperator, RadialGrid, ScalarField2D, TrapSpec};
use crate::error::{Error, Result};

/// Trial lengths searched by default.
pub const DEFAULT_L_GRID: [f64; 7] = [1.0, 2.0, 4.0, 8.0, 16.0, 32.0, 64.0];

/// `T_r = ⟨w₁, -Δ w₁⟩` for the radial bump `w₁ = √(5/π) (1 - r²)²`.
pub const TRIAL_RADIAL_KINETIC: f64 = 20.0 / 3.0;

/// Cutoff of the axial profile in units of `L`.
const AXIAL_CUTOFF: f64 = 4.0;

/// `√π Γ(n + ½) / (n Γ(n))`, valid for `n ≥ 1`.
pub fn c_constant_upper(n: f64) -> Result<f64> {
    if !(n > 0.0) || !n.is_finite() {
        return Err(Error::domain(format!("c_n needs n > 0 (got {n})")));
    }
    Ok(PI.sqrt() / n * (ln_gamma(n + 0.5) - ln_gamma(n)).exp())
}

/// The closed form used for `0 < n ≤ 1`,
/// `(2^{-n} ((2-n)/n)^{n/2} π csc(nπ/2) / ((2-n) Γ(n)))^{1/n}`.
pub fn c_constant_lower(n: f64) -> Result<f64> {
    if !(n > 0.0) || !(n < 2.0) {
        return Err(Error::domain(format!("lower branch of c_n needs 0 < n < 2 (got {n})")));
    }
    let ln = -n * 2f64.ln() + 0.5 * n * ((2.0 - n) / n).ln() + PI.ln()
        - (0.5 * n * PI).sin().ln()
        - (2.0 - n).ln()
        - ln_gamma(n);
    Ok((ln / n).exp())
}

/// `c_n` on its two branches, joined at `n = 1`.
pub fn c_constant(n: f64) -> Result<f64> {
    if !(n > 0.0) || !n.is_finite() {
        return Err(Error::domain(format!("c_n needs n > 0 (got {n})")));
    }
    if n >= 1.0 {
        c_constant_upper(n)
    } else {
        c_constant_lower(n)
    }
}

/// `j_n(r) = ∫ f² dz` at the radial nodes.
pub fn j_profile(grid: &RadialGrid, f: &ScalarField2D) -> Result<Vec<f64>> {
    grid.check(f)?;
    let mut j = vec![0.0; grid.nr];
    for row in f.values.chunks(grid.nr) {
        for (ji, v) in j.iter_mut().zip(row) {
            *ji += v * v * grid.dz;
        }
    }
    Ok(j)
}

/// `inf_{|z| ≥ R} V - μ̃` over the grid nodes.
pub fn delta_n(grid: &RadialGrid, trap: &TrapSpec, mu_tilde: f64, radius: f64) -> Result<f64> {
    let mut best = f64::INFINITY;
    for &z in grid.z_nodes() {
        if z.abs() < radius {
            continue;
        }
        for &r in grid.r_nodes() {
            best = best.min(trap.value(r, z) - mu_tilde);
        }
    }
    if best.is_infinite() {
        return Err(Error::domain(format!(
            "no grid nodes with |z| ≥ {radius}; enlarge z_max"
        )));
    }
    Ok(best)
}

/// Smallest grid `|z|` for which `delta_n` is positive, with that value.
pub fn delta_radius(grid: &RadialGrid, trap: &TrapSpec, mu_tilde: f64) -> Result<(f64, f64)> {
    let mut zs: Vec<f64> = grid.z_nodes().iter().map(|z| z.abs()).collect();
    zs.sort_by(f64::total_cmp);
    zs.dedup();
    for &r in &zs {
        let d = delta_n(grid, trap, mu_tilde, r)?;
        if d > 0.0 {
            return Ok((r, d));
        }
    }
    Err(Error::domain(format!(
        "V - μ̃ stays nonpositive on every |z| shell of the grid (μ̃ = {mu_tilde}); enlarge z_max"
    )))
}

#[derive(Debug, Clone, Serialize)]
pub struct BoundCheck {
    pub passed: bool,
    /// Left side of the bound.
    pub value: f64,
    /// Right side, including the grid factor.
    pub bound: f64,
    /// `ln(bound / value)`; nonnegative when the check passes.
    pub log_margin: f64,
}

impl BoundCheck {
    fn new(value: f64, bound: f64) -> Self {
        BoundCheck {
            passed: value <= bound,
            value,
            bound,
            log_margin: bound.ln() - value.ln(),
        }
    }

    fn from_logs(ln_value: f64, ln_bound: f64) -> Self {
        BoundCheck {
            passed: ln_value <= ln_bound,
            value: ln_value.exp(),
            bound: ln_bound.exp(),
            log_margin: ln_bound - ln_value,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct LemmaReport {
    pub n: f64,
    pub g: f64,
    pub mu_tilde: f64,
    /// The `1 + 5Δr` slack applied to both checked bounds.
    pub grid_factor: f64,
    /// `max f² ≤ μ̃ / (8πg)`.
    pub sup_bound: BoundCheck,
    /// `max r^{-2n} j_n ≤ (2 c_n² μ̃)^n max j_n`.
    pub moment_bound: BoundCheck,
    /// Ingredients of the axial-tail bound on `max j_n`, which carries an
    /// unspecified constant and is not checked.
    pub tail_radius: Option<f64>,
    pub tail_delta: Option<f64>,
    pub j_max: f64,
    pub j_max_core: f64,
}

/// Checks the pointwise bounds on a converged channel minimizer.
pub fn lemma_bound_report(grid: &RadialGrid, trap: &TrapSpec, result: &ChannelResult) -> Result<LemmaReport> {
    let g = result.g;
    if !(g > 0.0) {
        return Err(Error::domain("the sup bound divides by g and needs g > 0"));
    }
    let f = &result.orbital;
    grid.check(f)?;
    let n = result.n;
    let mu = result.mu_tilde;
    let factor = 1.0 + 5.0 * grid.dr;
    let f2max = f.values.iter().fold(0.0f64, |m, v| m.max(v * v));
    let sup_bound = BoundCheck::new(f2max, factor * mu / (8.0 * PI * g));

    let j = j_profile(grid, f)?;
    let j_max = j.iter().cloned().fold(0.0f64, f64::max);
    let r = grid.r_nodes();
    let ln_lhs = j
        .iter()
        .zip(r)
        .filter(|(v, _)| **v > 0.0)
        .map(|(v, ri)| v.ln() - 2.0 * n * ri.ln())
        .fold(f64::NEG_INFINITY, f64::max);
    let ln_rhs = if n > 0.0 {
        let c = c_constant(n)?;
        n * (2.0 * c * c * mu).ln() + j_max.ln() + factor.ln()
    } else {
        j_max.ln() + factor.ln()
    };
    let moment_bound = BoundCheck::from_logs(ln_lhs, ln_rhs);

    let (tail_radius, tail_delta) = match delta_radius(grid, trap, mu) {
        Ok((rr, d)) => (Some(rr), Some(d)),
        Err(_) => (None, None),
    };
    Ok(LemmaReport {
        n,
        g,
        mu_tilde: mu,
        grid_factor: factor,
        sup_bound,
        moment_bound,
        tail_radius,
        tail_delta,
        j_max,
        j_max_core: tail_radius.map_or(f64::NAN, |rr| 4.0 * rr * f2max),
    })
}

/// Radial bump `√(5/π) (1 - r²)²` on the unit disk.
fn bump(r: f64) -> f64 {
    if r >= 1.0 {
        0.0
    } else {
        let s = 1.0 - r * r;
        (5.0 / PI).sqrt() * s * s
    }
}

/// Gaussian cut off at `|t| = 4` and shifted to vanish there.
fn axial_profile(t: f64) -> f64 {
    if t.abs() >= AXIAL_CUTOFF {
        0.0
    } else {
        (-0.5 * t * t).exp() - (-0.5 * AXIAL_CUTOFF * AXIAL_CUTOFF).exp()
    }
}

#[derive(Debug, Clone)]
pub struct Trial {
    pub field: ScalarField2D,
    /// Angular winding of the trial direction.
    pub m: i64,
    /// `(2 c_n² μ̃)^{1/2}`; the radial support is `1 / scale`.
    pub scale: f64,
    pub l_trial: f64,
}

/// `w = k w₁(k r) L^{-1/2} v(z/L)` with `k = (2 c_n² μ̃_n)^{1/2}`, normalized
/// on the grid and carrying the winding `m`.
pub fn build_trial(grid: &RadialGrid, n: f64, mu_tilde: f64, l_trial: f64, m: i64) -> Result<Trial> {
    if !(n >= 1.0) {
        return Err(Error::domain(format!("the trial direction needs n ≥ 1 (got {n})")));
    }
    if !(l_trial >= 1.0) || !l_trial.is_finite() {
        return Err(Error::domain(format!("trial length must be ≥ 1 (got {l_trial})")));
    }
    if !(mu_tilde > 0.0) {
        return Err(Error::domain(format!("trial scale needs μ̃ > 0 (got {mu_tilde})")));
    }
    let c = c_constant(n)?;
    let k = (2.0 * c * c * mu_tilde).sqrt();
    let support = 1.0 / k;
    if support < 3.0 * grid.dr {
        return Err(Error::domain(format!(
            "trial support radius {support:.4} spans fewer than 3 radial cells; refine the grid"
        )));
    }
    if 0.5 * l_trial < grid.dz {
        return Err(Error::domain("trial length is below the axial spacing"));
    }
    let mut field = ScalarField2D::from_fn(grid, |r, z| k * bump(k * r) * axial_profile(z / l_trial) / l_trial.sqrt());
    field.normalize(grid)?;
    Ok(Trial {
        field,
        m,
        scale: k,
        l_trial,
    })
}

/// The second variation at `channel` in the direction `w e^{imφ}`.
///
/// For `m = n` the `f_n` component of `w` is removed first so that the
/// direction is orthogonal to the channel state, and the phase-sensitive
/// term is included; for `m ≠ n` it integrates to zero over `φ`.
pub fn q_form(
    grid: &RadialGrid,
    trap: &TrapSpec,
    omega: f64,
    channel: &ChannelResult,
    w: &ScalarField2D,
    m: i64,
) -> Result<f64> {
    let f = &channel.orbital;
    grid.check(f)?;
    grid.check(w)?;
    let g = channel.g;
    let n = channel.n;
    let mut wv = w.values.clone();
    let same = (m as f64 - n).abs() < 1e-12;
    if same {
        let p = grid.dot(&wv, &f.values) / grid.norm_sq(&f.values);
        for (a, b) in wv.iter_mut().zip(&f.values) {
            *a -= p * b;
        }
    }
    let nw = grid.norm_sq(&wv);
    if !(nw > 0.0) {
        return Err(Error::domain("trial direction vanishes after orthogonalization"));
    }
    let s = nw.sqrt();
    wv.iter_mut().for_each(|v| *v /= s);
    let op = ChannelOperator::new(grid, trap, m.unsigned_abs() as f64)?;
    let extra: Vec<f64> = f.values.iter().map(|v| 16.0 * PI * g * v * v).collect();
    let mut aw = vec![0.0; wv.len()];
    op.apply(&wv, Some(&extra), &mut aw);
    let mut q = grid.dot(&wv, &aw) - omega * m as f64 - channel.mu_tilde + n * omega.abs();
    if same {
        let wts = grid.weights();
        let cross: f64 = (0..wv.len())
            .map(|k| wts[k] * f.values[k] * f.values[k] * wv[k] * wv[k])
            .sum();
        q += 8.0 * PI * g * cross;
    }
    Ok(q)
}

#[derive(Debug, Clone, Serialize)]
pub struct StabilityReport {
    pub n: f64,
    pub g: f64,
    pub omega: f64,
    pub mu_tilde: f64,
    pub c_n: f64,
    /// Trial length giving the lowest `Q`.
    pub l_trial: f64,
    pub q_value: f64,
    pub unstable: bool,
    pub m: i64,
    /// `(L, Q)` for every trial length that could be built.
    pub q_by_l: Vec<(f64, f64)>,
    pub lemma_checks: Option<LemmaReport>,
}

#[derive(Debug, Clone, Serialize)]
pub struct StabilityScan {
    pub omega: f64,
    pub g: f64,
    pub reports: Vec<StabilityReport>,
    pub first_unstable: Option<f64>,
}

/// Minimizes each channel in `n_list`, then `Q` over the trial lengths.
///
/// Channels are solved in order with warm starts from the previous `n`.
pub fn instability_scan(
    ctx: &ChannelContext,
    omega: f64,
    g: f64,
    n_list: &[usize],
    l_grid: &[f64],
    m: i64,
    opts: &ChannelOptions,
) -> Result<StabilityScan> {
    ctx.trap.check_omega(omega)?;
    if n_list.is_empty() || l_grid.is_empty() {
        return Err(Error::config("instability scan needs at least one n and one trial length"));
    }
    if n_list.contains(&0) {
        return Err(Error::domain("the trial direction needs n ≥ 1"));
    }
    let mut channels: Vec<ChannelResult> = Vec::with_capacity(n_list.len());
    for &n in n_list {
        let mut o = opts.clone();
        if o.init.is_none() {
            o.init = channels.last().map(|c: &ChannelResult| c.orbital.clone());
        }
        channels.push(ctx.minimize(g, n as f64, &o)?);
    }
    let grid = &ctx.grid;
    let trap = &ctx.trap;
    let reports = channels
        .par_iter()
        .map(|ch| -> Result<StabilityReport> {
            let mut q_by_l = Vec::new();
            for &l in l_grid {
                let trial = match build_trial(grid, ch.n, ch.mu_tilde, l, m) {
                    Ok(t) => t,
                    Err(Error::Domain(_)) => continue,
                    Err(e) => return Err(e),
                };
                q_by_l.push((l, q_form(grid, trap, omega, ch, &trial.field, m)?));
            }
            let (l_trial, q_value) = q_by_l
                .iter()
                .cloned()
                .fold((f64::NAN, f64::INFINITY), |best, cur| if cur.1 < best.1 { cur } else { best });
            Ok(StabilityReport {
                n: ch.n,
                g,
                omega,
                mu_tilde: ch.mu_tilde,
                c_n: c_constant(ch.n)?,
                l_trial,
                q_value,
                unstable: q_value < 0.0,
                m,
                q_by_l,
                lemma_checks: if g > 0.0 { Some(lemma_bound_report(grid, trap, ch)?) } else { None },
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let first_unstable = reports.iter().find(|r| r.unstable).map(|r| r.n);
    Ok(StabilityScan {
        omega,
        g,
        reports,
        first_unstable,
    })
}

/// `max_{0 ≤ n < N} (E_N - E_n) / (N - n)`: for `|Ω|` above this value no
/// channel with angular momentum below `N` can beat channel `N`.
pub fn critical_omega_bound(channel_energies: &[f64], big_n: usize) -> Result<f64> {
    if big_n == 0 || big_n >= channel_energies.len() {
        return Err(Error::domain(format!(
            "N must satisfy 1 ≤ N < {} (got {big_n})",
            channel_energies.len()
        )));
    }
    let en = channel_energies[big_n];
    Ok((0..big_n)
        .map(|n| (en - channel_energies[n]) / (big_n - n) as f64)
        .fold(f64::NEG_INFINITY, f64::max))
}

#[cfg(test)]
mod tests {
    use super::*;

    // High-precision reference values of c_n.
    const C_QUARTER: f64 = 3.707518936179808886;
    const C_HALF: f64 = 2.418399152312290467;
    const C_THREE_QUARTERS: f64 = 1.869312902150669405;
    const C_THREE: f64 = 0.9817477042468103870;
    const C_TEN: f64 = 0.5535393641535147091;
    const C_HUNDRED: f64 = 0.1770239676964386470;

    #[test]
    fn c_constant_reference_values() {
        assert!((c_constant_upper(1.0).unwrap() - PI / 2.0).abs() < 1e-12);
        assert!((c_constant_lower(1.0).unwrap() - PI / 2.0).abs() < 1e-12);
        assert!((c_constant(2.0).unwrap() - 3.0 * PI / 8.0).abs() < 1e-12);
        assert!((c_constant(1.5).unwrap() - 4.0 / 3.0).abs() < 1e-12);
        for (n, want) in [(0.25, C_QUARTER), (0.5, C_HALF), (0.75, C_THREE_QUARTERS), (3.0, C_THREE), (10.0, C_TEN), (100.0, C_HUNDRED)] {
            let got = c_constant(n).unwrap();
            assert!((got - want).abs() < 1e-11 * want, "n={n}: {got} vs {want}");
        }
        assert!((10.0 * c_constant(100.0).unwrap() - PI.sqrt()).abs() <= 0.01);
        assert!(c_constant(0.0).is_err());
        assert!(c_constant(-1.0).is_err());
    }

    #[test]
    fn branches_meet_continuously() {
        let below = c_constant(1.0 - 1e-9).unwrap();
        let above = c_constant(1.0 + 1e-9).unwrap();
        assert!((below - above).abs() < 1e-7);
        assert!((c_constant_lower(1.0).unwrap() - c_constant_upper(1.0).unwrap()).abs() < 1e-10);
    }

    #[test]
    fn j_profile_of_separable_field() {
        let grid = RadialGrid::new(5.0, 5.0, 40, 40).unwrap();
        let mut f = ScalarField2D::from_fn(&grid, |r, z| (-(r * r) / 2.0).exp() * (-(z * z) / 2.0).exp());
        f.normalize(&grid).unwrap();
        let j = j_profile(&grid, &f).unwrap();
        let total: f64 = j.iter().zip(grid.r_nodes()).map(|(v, r)| 2.0 * PI * r * grid.dr * v).sum();
        assert!((total - 1.0).abs() < 1e-10);
        // j must be proportional to u(r)².
        let ratio0 = j[0] / (-(grid.r_nodes()[0].powi(2))).exp();
        for (i, &r) in grid.r_nodes().iter().enumerate().take(20) {
            assert!((j[i] / (-(r * r)).exp() - ratio0).abs() < 1e-10 * ratio0);
        }
    }

    #[test]
    fn delta_radius_on_the_axis() {
        let grid = RadialGrid::new(4.0, 6.0, 16, 120).unwrap();
        let (r, d) = delta_radius(&grid, &TrapSpec::harmonic(), 9.0).unwrap();
        assert!(r > 3.0 && r < 3.0 + grid.dz + 1e-12, "{r}");
        assert!(d > 0.0 && d < 0.5, "{d}");
        assert!(delta_n(&grid, &TrapSpec::harmonic(), 9.0, 7.0).is_err());
        assert!(delta_n(&grid, &TrapSpec::harmonic(), -1.0, 2.0).unwrap() > 0.0);
    }

    #[test]
    fn trial_is_normalized_and_scaled() {
        let grid = RadialGrid::new(6.0, 12.0, 240, 96).unwrap();
        let a = build_trial(&grid, 2.0, 5.0, 1.0, 0).unwrap();
        let b = build_trial(&grid, 2.0, 20.0, 3.0, 0).unwrap();
        assert!((grid.norm_sq(&a.field.values) - 1.0).abs() < 1e-8);
        assert!((grid.norm_sq(&b.field.values) - 1.0).abs() < 1e-8);
        assert!((a.scale / b.scale - 0.5).abs() < 1e-12);
        let reach = |t: &Trial| {
            grid.r_nodes()
                .iter()
                .enumerate()
                .filter(|(i, _)| t.field.values[grid.index(*i, grid.nz / 2)] > 0.0)
                .map(|(_, r)| *r)
                .fold(0.0, f64::max)
        };
        assert!(reach(&a) <= 1.0 / a.scale && reach(&a) > 1.0 / a.scale - 2.0 * grid.dr);
        assert!(build_trial(&grid, 0.5, 5.0, 1.0, 0).is_err());
        assert!(build_trial(&grid, 2.0, 5.0, 0.5, 0).is_err());
    }

    #[test]
    fn critical_omega_bound_cases() {
        let e: Vec<f64> = (0..8).map(|n| 2.0 * n as f64 + 3.0).collect();
        for n in 1..8 {
            assert!((critical_omega_bound(&e, n).unwrap() - 2.0).abs() < 1e-12);
        }
        // Increasing slopes put the maximum on the last quotient, decreasing
        // slopes on the first.
        let convex: Vec<f64> = (0..6).map(|n| (n * n) as f64 + 0.3 * n as f64).collect();
        let concave: Vec<f64> = (0..6).map(|n| (n as f64 + 1.0).sqrt()).collect();
        for big in 1..6 {
            for (list, at) in [(&convex, big - 1), (&concave, 0)] {
                let brute = (0..big)
                    .map(|n| (list[big] - list[n]) / (big - n) as f64)
                    .fold(f64::NEG_INFINITY, f64::max);
                let got = critical_omega_bound(list, big).unwrap();
                assert_eq!(got, brute);
                let want = (list[big] - list[at]) / (big - at) as f64;
                assert!((got - want).abs() < 1e-14);
            }
        }
        assert_eq!(critical_omega_bound(&e, 1).unwrap(), e[1] - e[0]);
        assert!(critical_omega_bound(&e, 0).is_err());
        assert!(critical_omega_bound(&e, 8).is_err());
    }
}
