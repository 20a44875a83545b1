//! `(Ω, g)` sweeps comparing the density-matrix and GP minima, and the
//! symmetry-breaking region where they separate.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{channel_scan_adaptive, ChannelContext, ChannelOptions, ChannelScan};
use crate::discretization::{RadialGrid, ScalarField2D, TrapSpec};
use crate::dm::{dm_energy, dm_minimize_with, DmChannel, DmOptions, DmState, RANK_THRESHOLD};
use crate::error::{BestIterate, Error, Result};
use crate::gp3d::{gp_minimize, standard_inits, ChannelSeed, CylindricalSpace, GpOptions, GpResult};

/// Grid selection. Fixed values win; anything left out is derived per point
/// from the rotating Thomas–Fermi estimate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridSettings {
    pub r_max: Option<f64>,
    pub z_max: Option<f64>,
    pub nr: Option<usize>,
    pub nz: Option<usize>,
    /// The Thomas–Fermi cloud may fill at most this fraction of the box.
    pub tf_fraction: f64,
    pub min_r_max: f64,
    pub min_z_max: f64,
    pub max_dr: f64,
    pub max_dz: f64,
    /// Radial cells per healing length `1/√μ`.
    pub cells_per_healing: f64,
}

impl Default for GridSettings {
    fn default() -> Self {
        GridSettings {
            r_max: None,
            z_max: None,
            nr: None,
            nz: None,
            tf_fraction: 0.6,
            min_r_max: 6.0,
            min_z_max: 5.0,
            max_dr: 0.2,
            max_dz: 0.4,
            cells_per_healing: 1.25,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    pub tol_abs: f64,
    pub tol_rel: f64,
    /// A DM state counts as certified when `gap ≤ certify_rel · |E|`.
    pub certify_rel: f64,
    pub channel_tol: f64,
    pub dm_tol: f64,
    pub gp_tol: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            tol_abs: 1e-3,
            tol_rel: 1e-4,
            certify_rel: 1e-5,
            channel_tol: 1e-6,
            dm_tol: 1e-6,
            gp_tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverSettings {
    pub n_cap: usize,
    pub dm_max_iter: usize,
    pub gp_max_iter: usize,
    pub gp_screen_iter: usize,
    pub gp_finalists: usize,
    /// Angular modes kept beyond the largest occupied channel.
    pub m_margin: usize,
    pub m_min: usize,
    /// Hard ceiling on the angular cutoff; `None` means unlimited.
    pub m_cap: Option<usize>,
    /// Skip the 3D minimization (the channel value still bounds `E^GP`).
    pub skip_gp3d: bool,
}

impl Default for SolverSettings {
    fn default() -> Self {
        SolverSettings {
            n_cap: 200,
            dm_max_iter: 500,
            gp_max_iter: 2000,
            gp_screen_iter: 200,
            gp_finalists: 2,
            m_margin: 4,
            m_min: 8,
            m_cap: None,
            skip_gp3d: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScanConfig {
    #[serde(default = "TrapSpec::harmonic")]
    pub trap: TrapSpec,
    pub omega_list: Vec<f64>,
    pub g_list: Vec<f64>,
    #[serde(default)]
    pub grids: GridSettings,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub solvers: SolverSettings,
    #[serde(default)]
    pub seed: u64,
}

impl ScanConfig {
    pub fn new(omega_list: Vec<f64>, g_list: Vec<f64>) -> Self {
        ScanConfig {
            trap: TrapSpec::harmonic(),
            omega_list,
            g_list,
            grids: GridSettings::default(),
            tolerances: Tolerances::default(),
            solvers: SolverSettings::default(),
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.trap.validate()?;
        if self.omega_list.is_empty() || self.g_list.is_empty() {
            return Err(Error::config("omega_list and g_list must be nonempty"));
        }
        for &om in &self.omega_list {
            if !(om >= 0.0) {
                return Err(Error::config(format!("omega values must be ≥ 0 (got {om})")));
            }
            self.trap.check_omega(om)?;
        }
        for &g in &self.g_list {
            if !(g > 0.0 && g.is_finite()) {
                return Err(Error::config(format!("g values must be positive (got {g})")));
            }
        }
        let t = &self.tolerances;
        for (name, v) in [
            ("tol_abs", t.tol_abs),
            ("tol_rel", t.tol_rel),
            ("certify_rel", t.certify_rel),
            ("channel_tol", t.channel_tol),
            ("dm_tol", t.dm_tol),
            ("gp_tol", t.gp_tol),
        ] {
            if !(v > 0.0) {
                return Err(Error::config(format!("tolerance {name} must be positive")));
            }
        }
        let gs = &self.grids;
        if !(gs.tf_fraction > 0.0 && gs.tf_fraction <= 1.0) {
            return Err(Error::config("tf_fraction must lie in (0, 1]"));
        }
        if !(gs.max_dr > 0.0 && gs.max_dz > 0.0 && gs.cells_per_healing > 0.0) {
            return Err(Error::config("grid spacings must be positive"));
        }
        Ok(())
    }
}

/// Rotating-frame Thomas–Fermi estimate of a cloud.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TfEstimate {
    pub mu: f64,
    pub radius: f64,
    pub half_height: f64,
}

/// Solves `∫ max(μ - V + Ω²r²/4, 0) / (8πg) = 1` for `μ` by bisection.
pub fn tf_estimate(trap: &TrapSpec, omega: f64, g: f64) -> Result<TfEstimate> {
    trap.check_omega(omega)?;
    if !(g > 0.0) {
        return Err(Error::domain("Thomas–Fermi estimate needs g > 0"));
    }
    let veff = |r: f64, z: f64| trap.value(r, z) - 0.25 * omega * omega * r * r;
    let reach = |mu: f64, f: &dyn Fn(f64) -> f64| {
        let mut x = 1.0;
        while f(x) <= mu || f(2.0 * x) <= f(x) {
            x *= 2.0;
            if x > 1e8 {
                break;
            }
        }
        let (mut lo, mut hi) = (0.0, x);
        for _ in 0..100 {
            let mid = 0.5 * (lo + hi);
            if f(mid) <= mu {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        hi
    };
    const CELLS: usize = 240;
    let mass = |mu: f64| {
        let rr = reach(mu, &|r| veff(r, 0.0));
        let zz = reach(mu, &|z| veff(0.0, z));
        let (dr, dz) = (rr / CELLS as f64, 2.0 * zz / CELLS as f64);
        let mut s = 0.0;
        for i in 0..CELLS {
            let r = (i as f64 + 0.5) * dr;
            for j in 0..CELLS {
                let z = -zz + (j as f64 + 0.5) * dz;
                s += (mu - veff(r, z)).max(0.0) * r;
            }
        }
        (2.0 * std::f64::consts::PI * s * dr * dz / (8.0 * std::f64::consts::PI * g), rr, zz)
    };
    let mut lo = trap.offset;
    let mut hi = trap.offset + 1.0;
    while mass(hi).0 < 1.0 {
        lo = hi;
        hi = trap.offset + 2.0 * (hi - trap.offset);
        if hi > 1e12 {
            return Err(Error::domain("Thomas–Fermi bisection failed to bracket μ"));
        }
    }
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        if mass(mid).0 < 1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let (_, radius, half_height) = mass(hi);
    Ok(TfEstimate { mu: hi, radius, half_height })
}

/// The grid used at `(Ω, g)` under `settings`.
pub fn auto_grid(trap: &TrapSpec, omega: f64, g: f64, settings: &GridSettings) -> Result<RadialGrid> {
    let tf = tf_estimate(trap, omega, g)?;
    let r_max = settings
        .r_max
        .unwrap_or_else(|| (tf.radius / settings.tf_fraction).max(settings.min_r_max));
    let z_max = settings
        .z_max
        .unwrap_or_else(|| (tf.half_height / settings.tf_fraction).max(settings.min_z_max));
    let healing = 1.0 / tf.mu.max(1e-12).sqrt();
    let dr = settings.max_dr.min(healing / settings.cells_per_healing);
    let nr = settings.nr.unwrap_or_else(|| ((r_max / dr).ceil() as usize).max(16));
    let nz = settings
        .nz
        .unwrap_or_else(|| (((2.0 * z_max / settings.max_dz).ceil() as usize).max(16) + 1) & !1);
    RadialGrid::new(r_max, z_max, nr, nz)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum XiStatus {
    Member,
    NotMember,
    /// The DM gap was not certified, so no decision is made.
    Indeterminate,
}

/// One `(Ω, g)` row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhasePoint {
    pub omega: f64,
    pub g: f64,
    pub e_dm: f64,
    pub dm_gap: f64,
    pub dm_rank: usize,
    /// `min_n (E_n - nΩ)`.
    pub e_gp_channel: f64,
    pub n_star: usize,
    pub e_gp_3d: f64,
    pub lz_variance: f64,
    pub in_xi: bool,
    /// `min(e_gp_3d, e_gp_channel) - e_dm`.
    pub margin: f64,
    pub xi_status: XiStatus,
    pub dm_iterations: usize,
    pub dm_certified: bool,
    pub gp_converged: bool,
    /// GP residual relative to `|μ|`.
    pub gp_residual_rel: f64,
    pub gp_init: String,
    pub gp_vortices: usize,
    pub gp_winding: i32,
    pub r_max: f64,
    pub z_max: f64,
    pub nr: usize,
    pub nz: usize,
    pub m_max: usize,
    /// Empty on success; otherwise the first solver failure at this point.
    pub error: String,
}

impl PhasePoint {
    fn empty(omega: f64, g: f64, grid: Option<&RadialGrid>) -> Self {
        PhasePoint {
            omega,
            g,
            e_dm: f64::NAN,
            dm_gap: f64::NAN,
            dm_rank: 0,
            e_gp_channel: f64::NAN,
            n_star: 0,
            e_gp_3d: f64::NAN,
            lz_variance: f64::NAN,
            in_xi: false,
            margin: f64::NAN,
            xi_status: XiStatus::Indeterminate,
            dm_iterations: 0,
            dm_certified: false,
            gp_converged: false,
            gp_residual_rel: f64::NAN,
            gp_init: String::new(),
            gp_vortices: 0,
            gp_winding: 0,
            r_max: grid.map_or(f64::NAN, |g| g.r_max),
            z_max: grid.map_or(f64::NAN, |g| g.z_max),
            nr: grid.map_or(0, |g| g.nr),
            nz: grid.map_or(0, |g| g.nz),
            m_max: 0,
            error: String::new(),
        }
    }

    /// Upper bound on `E^GP` from the better of the two symmetric-or-not
    /// minimizations.
    pub fn e_gp_upper(&self) -> f64 {
        if self.e_gp_3d.is_nan() {
            self.e_gp_channel
        } else {
            self.e_gp_3d.min(self.e_gp_channel)
        }
    }
}

/// Membership decision plus the flag raised when the DM state is uncertified.
pub fn xi_decision(point: &PhasePoint, tol_abs: f64, tol_rel: f64, certify_rel: f64) -> XiStatus {
    if !(point.dm_gap <= certify_rel * point.e_dm.abs()) || !point.margin.is_finite() {
        return XiStatus::Indeterminate;
    }
    let thr = tol_abs.max(tol_rel * point.e_dm.abs());
    if point.margin > thr && point.dm_rank >= 2 {
        XiStatus::Member
    } else {
        XiStatus::NotMember
    }
}

/// True iff the energy margin clears the tolerance, the DM state has rank at
/// least two and its duality gap is certified.
pub fn xi_membership(point: &PhasePoint, tol_abs: f64, tol_rel: f64) -> bool {
    xi_decision(point, tol_abs, tol_rel, Tolerances::default().certify_rel) == XiStatus::Member
}

#[derive(Debug, Clone, Serialize)]
pub struct PhaseDiagram {
    pub trap: TrapSpec,
    /// Rows sorted by `(omega, g)`.
    pub points: Vec<PhasePoint>,
    pub settings: ScanConfig,
    pub seed: u64,
}

impl PhaseDiagram {
    pub fn point(&self, omega: f64, g: f64) -> Option<&PhasePoint> {
        self.points.iter().find(|p| p.omega == omega && p.g == g)
    }

    pub fn members(&self) -> impl Iterator<Item = &PhasePoint> {
        self.points.iter().filter(|p| p.in_xi)
    }

    /// JSON metadata written next to the CSV table.
    pub fn metadata(&self) -> PhaseMetadata {
        PhaseMetadata {
            trap: self.trap,
            critical_omega: self.trap.critical_omega(),
            settings: self.settings.clone(),
            seed: self.seed,
            rows: self.points.len(),
            members: self.members().count(),
            failures: self.points.iter().filter(|p| !p.error.is_empty()).count(),
        }
    }

    /// Rows violating `e_dm ≤ e_gp_3d + tol` or `e_gp_3d ≤ e_gp_channel + tol`.
    pub fn ordering_violations(&self, tol: f64) -> Vec<&PhasePoint> {
        self.points
            .iter()
            .filter(|p| !(p.e_dm <= p.e_gp_upper() + tol) || p.e_gp_3d > p.e_gp_channel + tol)
            .collect()
    }

    /// Interior points of a `g` column where `e_dm` or the GP upper bound
    /// fails midpoint concavity by more than `slack`. Only exact midpoints of
    /// neighbouring scan values are tested.
    pub fn concavity_violations(&self, slack: f64) -> Vec<(f64, f64, &'static str)> {
        let mut out = Vec::new();
        let mut cols: BTreeMap<u64, Vec<&PhasePoint>> = BTreeMap::new();
        for p in &self.points {
            cols.entry(p.omega.to_bits()).or_default().push(p);
        }
        for col in cols.values() {
            for w in col.windows(3) {
                let (a, b, c) = (w[0], w[1], w[2]);
                let t = (b.g - a.g) / (c.g - a.g);
                for (name, f) in [
                    ("e_dm", (|p: &PhasePoint| p.e_dm) as fn(&PhasePoint) -> f64),
                    ("e_gp", |p: &PhasePoint| p.e_gp_upper()),
                ] {
                    let chord = (1.0 - t) * f(a) + t * f(c);
                    if f(b) < chord - slack {
                        out.push((b.omega, b.g, name));
                    }
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct PhaseMetadata {
    pub trap: TrapSpec,
    pub critical_omega: f64,
    pub settings: ScanConfig,
    pub seed: u64,
    pub rows: usize,
    pub members: usize,
    pub failures: usize,
}

/// State carried from one `g` to the next within an `Ω` column.
struct Warm {
    grid: RadialGrid,
    orbitals: Vec<ScalarField2D>,
    occupations: Vec<(usize, f64)>,
}

fn point_seed(seed: u64, i: usize, j: usize) -> u64 {
    // splitmix64 finalizer over the point index
    let mut z = seed ^ ((i as u64) << 32 | j as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Runs the channel scan, DM and GP minimizations at every `(Ω, g)`.
///
/// Columns of fixed `Ω` run in parallel; within a column `g` ascends and each
/// point warm-starts from the previous one. Solver failures are recorded in
/// the row and the scan continues.
pub fn scan(config: &ScanConfig) -> Result<PhaseDiagram> {
    config.validate()?;
    let mut omegas = config.omega_list.clone();
    omegas.sort_by(f64::total_cmp);
    omegas.dedup();
    let mut gs = config.g_list.clone();
    gs.sort_by(f64::total_cmp);
    gs.dedup();
    let columns: Vec<Vec<PhasePoint>> = omegas
        .par_iter()
        .enumerate()
        .map(|(i, &omega)| {
            let mut warm: Option<Warm> = None;
            gs.iter()
                .enumerate()
                .map(|(j, &g)| {
                    let seed = point_seed(config.seed, i, j);
                    let (p, w) = scan_point(config, omega, g, seed, warm.take());
                    warm = w;
                    p
                })
                .collect()
        })
        .collect();
    Ok(PhaseDiagram {
        trap: config.trap,
        points: columns.into_iter().flatten().collect(),
        settings: config.clone(),
        seed: config.seed,
    })
}

fn scan_point(config: &ScanConfig, omega: f64, g: f64, seed: u64, warm: Option<Warm>) -> (PhasePoint, Option<Warm>) {
    let grid = match auto_grid(&config.trap, omega, g, &config.grids) {
        Ok(gr) => gr,
        Err(e) => {
            let mut p = PhasePoint::empty(omega, g, None);
            p.error = e.to_string();
            return (p, None);
        }
    };
    let mut p = PhasePoint::empty(omega, g, Some(&grid));
    match solve_point(config, omega, g, seed, &grid, warm.as_ref(), &mut p) {
        Ok(w) => (p, Some(w)),
        Err(e) => {
            if p.error.is_empty() {
                p.error = e.to_string();
            }
            (p, warm)
        }
    }
}

fn solve_point(
    config: &ScanConfig,
    omega: f64,
    g: f64,
    seed: u64,
    grid: &RadialGrid,
    warm: Option<&Warm>,
    p: &mut PhasePoint,
) -> Result<Warm> {
    let tol = &config.tolerances;
    let st = &config.solvers;
    let ctx = ChannelContext::new(grid, &config.trap)?;
    let warm_orbitals: Option<Vec<ScalarField2D>> = match warm {
        Some(w) => Some(
            w.orbitals
                .iter()
                .map(|f| w.grid.resample(f, grid))
                .collect::<Result<Vec<_>>>()?,
        ),
        None => None,
    };
    let copts = ChannelOptions { tol: tol.channel_tol, ..Default::default() };
    let scan = channel_scan_adaptive(&ctx, g, omega, st.n_cap, &copts, warm_orbitals.as_deref())?;
    let (n_star, e_ch) = scan.best_symmetric(omega);
    p.n_star = scan.results[n_star].n as usize;
    p.e_gp_channel = e_ch;

    let init = dm_init(grid, &config.trap, omega, g, &scan, warm)?;
    let dopts = DmOptions {
        tol: tol.dm_tol,
        max_iter: st.dm_max_iter,
        n_cap: st.n_cap,
        init: Some(init),
        ..Default::default()
    };
    let dm = match dm_minimize_with(&ctx, omega, g, &dopts) {
        Ok(d) => d,
        Err(Error::NotConverged { best: Some(b), solver, iterations, residual }) => match *b {
            BestIterate::Dm(d) => {
                p.error = format!("{solver} stopped after {iterations} iterations (gap {residual:.3e})");
                d
            }
            other => {
                return Err(Error::NotConverged { solver, iterations, residual, best: Some(Box::new(other)) })
            }
        },
        Err(e) => return Err(e),
    };
    p.e_dm = dm.energy;
    p.dm_gap = dm.duality_gap;
    p.dm_rank = dm.rank();
    p.dm_iterations = dm.iterations;
    p.dm_certified = dm.duality_gap <= tol.certify_rel * dm.energy.abs();

    let next = Warm {
        grid: grid.clone(),
        orbitals: scan.results.iter().map(|r| r.orbital.clone()).collect(),
        occupations: dm.channel_occupations(),
    };

    let n_top = dm.channels.iter().map(|c| c.n).max().unwrap_or(0).max(p.n_star);
    let mut m_max = (n_top + st.m_margin).max(st.m_min);
    if let Some(cap) = st.m_cap {
        m_max = m_max.min(cap.max(p.n_star));
    }
    p.m_max = m_max;
    if !st.skip_gp3d {
        let gp = run_gp(config, omega, g, seed, grid, &scan, n_star, &dm, m_max);
        match gp {
            Ok(r) => fill_gp(p, &r),
            Err(Error::NotConverged { best: Some(b), .. }) => {
                if let BestIterate::Gp(r) = *b {
                    fill_gp(p, &r);
                }
            }
            Err(e) => {
                if p.error.is_empty() {
                    p.error = e.to_string();
                }
            }
        }
    }
    p.margin = p.e_gp_upper() - p.e_dm;
    p.xi_status = xi_decision(p, tol.tol_abs, tol.tol_rel, tol.certify_rel);
    p.in_xi = p.xi_status == XiStatus::Member;
    Ok(next)
}

#[allow(clippy::too_many_arguments)]
fn run_gp(
    config: &ScanConfig,
    omega: f64,
    g: f64,
    seed: u64,
    grid: &RadialGrid,
    scan: &ChannelScan,
    k_star: usize,
    dm: &DmState,
    m_max: usize,
) -> Result<GpResult> {
    let space = CylindricalSpace::new(grid, &config.trap, m_max)?;
    let best = &scan.results[k_star];
    let inits = standard_inits(
        &space,
        omega,
        g,
        seed,
        Some(ChannelSeed { grid, n: best.n as i64, orbital: &best.orbital }),
        Some(dm),
    )?;
    let opts = GpOptions {
        tol: config.tolerances.gp_tol,
        max_iter: config.solvers.gp_max_iter,
        screen_iter: config.solvers.gp_screen_iter,
        finalists: config.solvers.gp_finalists,
        ..Default::default()
    };
    gp_minimize(&space, omega, g, &inits, &opts)
}

fn fill_gp(p: &mut PhasePoint, r: &GpResult) {
    p.e_gp_3d = r.energy;
    p.lz_variance = r.lz_variance;
    p.gp_converged = r.converged;
    p.gp_residual_rel = r.residual / r.mu.abs();
    p.gp_init = r.init_label.clone();
    p.gp_vortices = r.vortices.len();
    p.gp_winding = r.total_winding();
}

/// Starting density matrix: the lower-energy of the best symmetric channel
/// and the previous point's occupations carried onto this point's orbitals.
fn dm_init(grid: &RadialGrid, trap: &TrapSpec, omega: f64, g: f64, scan: &ChannelScan, warm: Option<&Warm>) -> Result<DmState> {
    let rank_one = DmState::from_channel_scan(grid, trap, omega, g, scan);
    let Some(w) = warm else { return Ok(rank_one) };
    let mut channels = Vec::new();
    let mut occ = Vec::new();
    for &(n, l) in &w.occupations {
        if l <= RANK_THRESHOLD {
            continue;
        }
        if let Some(r) = scan.results.iter().find(|r| r.n as usize == n) {
            channels.push(DmChannel { n, orbital: r.orbital.clone() });
            occ.push(l);
        }
    }
    if channels.is_empty() {
        return Ok(rank_one);
    }
    let total: f64 = occ.iter().sum();
    let mut carried = rank_one.clone();
    carried.channels = channels;
    carried.occupations = occ.iter().map(|l| l / total).collect();
    let e_carried = dm_energy(&carried)?;
    let e_one = dm_energy(&rank_one)?;
    Ok(if e_carried < e_one { carried } else { rank_one })
}

/// Consecutive channel gaps `E_{n+1} - E_n` for `n = 0, 1, 2`.
#[derive(Debug, Clone, Serialize)]
pub struct GapRow {
    pub g: f64,
    pub energies: [f64; 4],
    pub gaps: [f64; 3],
    /// The same gaps in the rotating frame, `E_{n+1} - E_n - Ω`.
    pub rotating_gaps: [f64; 3],
}

#[derive(Debug, Clone, Serialize)]
pub struct GapDecayTable {
    pub omega: f64,
    pub trap: TrapSpec,
    pub rows: Vec<GapRow>,
    /// Predicted power of `g` in the decay of the gaps, up to a log.
    pub exponent: f64,
    /// Every gap is nonincreasing along increasing `g`.
    pub monotone: bool,
}

/// Channel gaps along `g_list` (sorted ascending) on a fixed grid.
pub fn gap_decay_table(trap: &TrapSpec, omega: f64, g_list: &[f64], grid: &RadialGrid) -> Result<GapDecayTable> {
    trap.check_omega(omega)?;
    let mut gs = g_list.to_vec();
    if gs.iter().any(|g| !(*g >= 0.0)) {
        return Err(Error::config("g values must be nonnegative"));
    }
    gs.sort_by(f64::total_cmp);
    let ctx = ChannelContext::new(grid, trap)?;
    let opts = ChannelOptions::default();
    let rows = gs
        .par_iter()
        .map(|&g| {
            let mut energies = [0.0; 4];
            for (n, e) in energies.iter_mut().enumerate() {
                *e = ctx.minimize(g, n as f64, &opts)?.energy;
            }
            let gaps = [energies[1] - energies[0], energies[2] - energies[1], energies[3] - energies[2]];
            Ok(GapRow { g, energies, gaps, rotating_gaps: gaps.map(|d| d - omega) })
        })
        .collect::<Result<Vec<_>>>()?;
    let monotone = rows.windows(2).all(|w| (0..3).all(|k| w[1].gaps[k] <= w[0].gaps[k]));
    Ok(GapDecayTable { omega, trap: *trap, rows, exponent: trap.gap_decay_exponent(), monotone })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tf_estimate_matches_harmonic_closed_form() {
        // μ^{5/2} = 15 g (1 - Ω²/4) for V = r² + z² with an 8πg TF density
        for (om, g) in [(0.0, 100.0), (1.0, 50.0), (1.9, 1000.0)] {
            let tf = tf_estimate(&TrapSpec::harmonic(), om, g).unwrap();
            let a: f64 = 1.0 - om * om / 4.0;
            let mu = (15.0 * g * a).powf(0.4);
            assert!((tf.mu - mu).abs() < 2e-3 * mu, "{om} {g}: {} vs {mu}", tf.mu);
            assert!((tf.radius - (mu / a).sqrt()).abs() < 1e-6 * tf.radius);
            assert!((tf.half_height - mu.sqrt()).abs() < 1e-6 * tf.half_height);
        }
    }

    #[test]
    fn auto_grid_honours_fixed_values() {
        let s = GridSettings { nr: Some(20), nz: Some(18), r_max: Some(5.0), ..Default::default() };
        let gr = auto_grid(&TrapSpec::harmonic(), 0.5, 10.0, &s).unwrap();
        assert_eq!((gr.nr, gr.nz, gr.r_max), (20, 18, 5.0));
        assert!(gr.z_max >= 5.0);
    }

    fn row(margin: f64, rank: usize, gap: f64) -> PhasePoint {
        let mut p = PhasePoint::empty(1.0, 10.0, None);
        p.e_dm = 10.0;
        p.dm_gap = gap;
        p.dm_rank = rank;
        p.margin = margin;
        p
    }

    #[test]
    fn xi_rule() {
        assert_eq!(xi_decision(&row(0.1, 2, 1e-6), 1e-3, 1e-4, 1e-5), XiStatus::Member);
        assert_eq!(xi_decision(&row(0.1, 1, 1e-6), 1e-3, 1e-4, 1e-5), XiStatus::NotMember);
        assert_eq!(xi_decision(&row(5e-4, 3, 1e-6), 1e-3, 1e-4, 1e-5), XiStatus::NotMember);
        assert_eq!(xi_decision(&row(0.1, 2, 1e-2), 1e-3, 1e-4, 1e-5), XiStatus::Indeterminate);
        assert!(!xi_membership(&row(0.1, 2, 1e-2), 1e-3, 1e-4));
    }

    #[test]
    fn config_rejects_supercritical_omega() {
        let c = ScanConfig::new(vec![2.0], vec![1.0]);
        assert!(c.validate().is_err());
        let c = ScanConfig::new(vec![0.5], vec![0.0]);
        assert!(c.validate().is_err());
    }

    #[test]
    fn small_scan_is_ordered_and_symmetric() {
        let mut c = ScanConfig::new(vec![0.5, 0.0], vec![1.0, 0.1]);
        c.grids = GridSettings { nr: Some(24), nz: Some(24), ..Default::default() };
        let d = scan(&c).unwrap();
        let keys: Vec<(f64, f64)> = d.points.iter().map(|p| (p.omega, p.g)).collect();
        assert_eq!(keys, vec![(0.0, 0.1), (0.0, 1.0), (0.5, 0.1), (0.5, 1.0)]);
        for p in &d.points {
            assert!(p.error.is_empty(), "{}", p.error);
            assert!(!p.in_xi);
            assert!(p.dm_certified);
            assert!(p.margin.abs() < 1e-3, "margin {}", p.margin);
        }
        assert!(d.ordering_violations(1e-3).is_empty());
    }
}
