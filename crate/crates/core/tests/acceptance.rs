//! End-to-end acceptance run. Prints one PASS/FAIL line per criterion and
//! exits nonzero if any fails. Artifacts land in the cargo target tmpdir.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rotgas::channel::{channel_energy, channel_mu, channel_residual, ChannelContext, ChannelOptions, ChannelResult};
use rotgas::discretization::{apply_h0_channel, RadialGrid, TrapSpec};
use rotgas::gp3d::{gp_energy, gp_minimize, gp_mu, gp_residual, standard_inits, ChannelSeed, CylindricalSpace, GpOptions, GpSpace};
use rotgas::io::{to_csv_bytes, to_json_bytes, write_atomic};
use rotgas::phase::{scan, GridSettings, PhaseDiagram, PhasePoint, ScanConfig};
use rotgas::stability::{c_constant, c_constant_lower, c_constant_upper, instability_scan, lemma_bound_report, DEFAULT_L_GRID};
use rotgas::toy::{bosonic_ground, bosonic_hamiltonian, build_modes, dense_ground, one_rdm, toy_point, FockBasis, ToyReport};
use serde::{Deserialize, Serialize};

const SEED: u64 = 20240917;
const OMEGAS: [f64; 5] = [0.0, 0.5, 1.0, 1.5, 1.9];
const GS: [f64; 5] = [0.1, 1.0, 10.0, 100.0, 1000.0];

/// Grid and channel range for the instability certificate.
const STAB_R_MAX: f64 = 16.0;
const STAB_Z_MAX: f64 = 8.0;
const STAB_NR: usize = 320;
const STAB_NZ: usize = 64;
const STAB_N_LIST: [usize; 8] = [1, 2, 4, 8, 16, 32, 64, 128];

struct Outcome {
    id: u32,
    pass: bool,
    detail: String,
}

struct Suite {
    results: Vec<Outcome>,
    artifacts: Vec<(String, Vec<u8>)>,
}

impl Suite {
    fn record(&mut self, id: u32, pass: bool, detail: String) {
        println!("criterion {id:>2} {}: {detail}", if pass { "PASS" } else { "FAIL" });
        self.results.push(Outcome { id, pass, detail });
    }

    fn artifact(&mut self, name: &str, bytes: Vec<u8>) {
        self.artifacts.push((name.to_string(), bytes));
    }
}

fn harmonic() -> TrapSpec {
    TrapSpec::harmonic()
}

fn quartic(grid: &RadialGrid, f: &[f64]) -> f64 {
    grid.weights().iter().zip(f).map(|(w, v)| w * v.powi(4)).sum()
}

fn criterion_1(s: &mut Suite) {
    let grid = RadialGrid::new(8.0, 8.0, 192, 192).unwrap();
    let ctx = ChannelContext::new(&grid, &harmonic()).unwrap();
    let opts = ChannelOptions::default();
    let mut worst = 0.0f64;
    let mut slowest = 0.0f64;
    for n in 0..=5 {
        let t = Instant::now();
        let r = ctx.minimize(0.0, n as f64, &opts).unwrap();
        slowest = slowest.max(t.elapsed().as_secs_f64());
        let exact = 2.0 * n as f64 + 3.0;
        worst = worst.max((r.energy - exact).abs() / exact);
    }
    s.record(
        1,
        worst <= 5e-3 && slowest < 30.0,
        format!("max relative error {worst:.2e} (limit 5e-3), slowest channel {slowest:.1} s (limit 30 s)"),
    );
}

fn channel_at(grid: &RadialGrid, g: f64, n: usize, tol: f64) -> ChannelResult {
    let ctx = ChannelContext::new(grid, &harmonic()).unwrap();
    ctx.minimize(g, n as f64, &ChannelOptions { tol, ..Default::default() }).unwrap()
}

/// `μ` from the nonlinear Rayleigh quotient and from `E + 4πg∫|ψ|⁴`, with
/// every term recomputed from the field on the shared quadrature.
fn criterion_2(s: &mut Suite, gp_point: &GpCheck) {
    let grid = RadialGrid::new(8.0, 6.0, 64, 96).unwrap();
    let g = 100.0;
    let mut worst = 0.0f64;
    for n in [0, 1, 2] {
        let r = channel_at(&grid, g, n, 1e-7);
        let f = &r.orbital;
        let e = channel_energy(&grid, &harmonic(), g, n as f64, f).unwrap();
        let q = quartic(&grid, &f.values);
        let hf = apply_h0_channel(&grid, &harmonic(), n as f64, f).unwrap();
        let mu_rq = grid.dot(&f.values, &hf.values) + 8.0 * PI * g * q;
        let mu_id = e + 4.0 * PI * g * q;
        worst = worst.max((mu_rq - mu_id).abs() / mu_rq.abs());
        worst = worst.max((channel_mu(&r) - mu_id).abs() / mu_rq.abs());
    }
    let gp_dev = gp_point.mu_identity;
    s.record(
        2,
        worst <= 1e-12 && gp_dev <= 1e-12,
        format!("channel max relative deviation {worst:.1e}, 3D {gp_dev:.1e} (limit 1e-12)"),
    );
}

fn criterion_3(s: &mut Suite, gp_point: &GpCheck) {
    let grid = RadialGrid::new(8.0, 6.0, 64, 96).unwrap();
    let mut worst = 0.0f64;
    for (g, n) in [(10.0, 0), (100.0, 0), (100.0, 1), (100.0, 3)] {
        let r = channel_at(&grid, g, n, 1e-6);
        let res = channel_residual(&grid, &harmonic(), g, &r).unwrap();
        worst = worst.max(res / r.mu_tilde.abs());
    }
    let pass = worst <= 1e-6 && gp_point.residual_rel <= 1e-6;
    s.record(
        3,
        pass,
        format!(
            "channel max residual/|μ̃| {worst:.2e}; 3D minimizer at (Ω={}, g={}) residual/|μ| {:.2e} (limit 1e-6)",
            gp_point.omega, gp_point.g, gp_point.residual_rel
        ),
    );
}

fn criterion_4(s: &mut Suite) {
    let grid = RadialGrid::new(8.0, 6.0, 64, 96).unwrap();
    let (g, h) = (10.0, 0.1);
    let mut worst = 0.0f64;
    for n in [0, 1] {
        let plus = channel_at(&grid, g + h, n, 1e-7);
        let minus = channel_at(&grid, g - h, n, 1e-7);
        let mid = channel_at(&grid, g, n, 1e-7);
        let fd = (plus.energy - minus.energy) / (2.0 * h);
        let exact = 4.0 * PI * mid.quartic;
        worst = worst.max((fd - exact).abs() / exact);
    }
    s.record(4, worst <= 1e-3, format!("max relative mismatch {worst:.2e} (limit 1e-3)"));
}

fn criteria_5_6(s: &mut Suite, d: &PhaseDiagram, secs: f64) {
    let mut bad = Vec::new();
    let mut zero_col = 0.0f64;
    for p in &d.points {
        let chain = p.e_dm <= p.e_gp_3d + 1e-3 && p.e_gp_3d <= p.e_gp_channel + 1e-2;
        if !chain || !p.error.is_empty() {
            bad.push(format!("({}, {})", p.omega, p.g));
        }
        if p.omega == 0.0 {
            zero_col = zero_col.max((p.e_gp_upper() - p.e_dm).abs());
        }
    }
    let worst_gap = d.points.iter().map(|p| p.dm_gap / p.e_dm.abs()).fold(0.0f64, f64::max);
    let worst_iter = d.points.iter().map(|p| p.dm_iterations).max().unwrap_or(0);
    let members: Vec<String> = d.members().map(|p| format!("({}, {})", p.omega, p.g)).collect();
    s.record(
        5,
        bad.is_empty() && zero_col <= 1e-3 && d.points.len() == 25,
        format!(
            "{} points in {secs:.0} s, ordering violations {:?}, Ω=0 column max |E^GP - E^DM| {zero_col:.1e}; Ξ members {}",
            d.points.len(),
            bad,
            members.join(" ")
        ),
    );
    let uncert: Vec<String> = d.points.iter().filter(|p| !(p.dm_gap <= 1e-5 * p.e_dm.abs()) || p.dm_iterations > 500).map(|p| format!("({}, {})", p.omega, p.g)).collect();
    s.record(
        6,
        uncert.is_empty(),
        format!("max relative duality gap {worst_gap:.1e}, max Frank–Wolfe iterations {worst_iter}; uncertified {uncert:?}"),
    );
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
struct BrokenPoint {
    omega: f64,
    g: f64,
    e_dm: f64,
    e_gp_upper: f64,
    margin: f64,
    dm_rank: usize,
    lz_variance: f64,
    refined_e_dm: f64,
    refined_e_gp_upper: f64,
}

struct GpCheck {
    omega: f64,
    g: f64,
    residual_rel: f64,
    mu_identity: f64,
}

fn golden_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests").join("golden")
}

/// Loads frozen data, or freezes `fresh` when no file exists yet.
fn golden<T: Serialize + for<'a> Deserialize<'a>>(name: &str, fresh: &T) -> (T, bool) {
    let path = golden_dir().join(name);
    match std::fs::read(&path) {
        Ok(bytes) => (serde_json::from_slice(&bytes).expect("golden file parses"), false),
        Err(_) => {
            write_atomic(&path, &to_json_bytes(fresh).unwrap()).unwrap();
            (serde_json::from_slice(&to_json_bytes(fresh).unwrap()).unwrap(), true)
        }
    }
}

fn close(a: f64, b: f64, rel: f64) -> bool {
    (a - b).abs() <= rel * a.abs().max(b.abs()).max(1e-300)
}

fn qualifies(p: &PhasePoint) -> bool {
    (1.0..=1.9).contains(&p.omega)
        && (10.0..=1000.0).contains(&p.g)
        && p.margin >= 1e-2
        && p.dm_rank >= 2
        && p.lz_variance >= 0.01
        && p.gp_converged
        && p.dm_certified
}

fn criterion_7(s: &mut Suite, d: &PhaseDiagram) -> Option<(BrokenPoint, GpCheck)> {
    let Some(p) = d.points.iter().find(|p| qualifies(p)) else {
        s.record(7, false, "no scanned point meets margin ≥ 1e-2, rank ≥ 2 and lz_variance ≥ 0.01".into());
        return None;
    };
    let mut cfg = d.settings.clone();
    cfg.omega_list = vec![p.omega];
    cfg.g_list = vec![p.g];
    cfg.grids = GridSettings {
        r_max: Some(p.r_max),
        z_max: Some(p.z_max),
        nr: Some(2 * p.nr),
        nz: Some(2 * p.nz),
        ..d.settings.grids.clone()
    };
    cfg.solvers.gp_max_iter = cfg.solvers.gp_max_iter.max(4000);
    let fine = scan(&cfg).unwrap();
    let f = &fine.points[0];
    let shift_dm = (f.e_dm - p.e_dm).abs();
    let shift_gp = (f.e_gp_upper() - p.e_gp_upper()).abs();
    let fresh = BrokenPoint {
        omega: p.omega,
        g: p.g,
        e_dm: p.e_dm,
        e_gp_upper: p.e_gp_upper(),
        margin: p.margin,
        dm_rank: p.dm_rank,
        lz_variance: p.lz_variance,
        refined_e_dm: f.e_dm,
        refined_e_gp_upper: f.e_gp_upper(),
    };
    let refined_ok = shift_dm <= 0.3 * p.margin && shift_gp <= 0.3 * p.margin;
    let (frozen, created) = golden("symmetry_breaking.json", &fresh);
    let matches = frozen.omega == fresh.omega
        && frozen.g == fresh.g
        && frozen.dm_rank == fresh.dm_rank
        && close(frozen.e_dm, fresh.e_dm, 1e-7)
        && close(frozen.e_gp_upper, fresh.e_gp_upper, 1e-7)
        && close(frozen.margin, fresh.margin, 1e-4);
    s.record(
        7,
        refined_ok && matches,
        format!(
            "point (Ω={}, g={}): margin {:.4}, rank {}, lz_variance {:.3}; doubled grid shifts E^DM by {shift_dm:.2e}, E^GP by {shift_gp:.2e} (limit {:.2e}); golden {}",
            p.omega,
            p.g,
            p.margin,
            p.dm_rank,
            p.lz_variance,
            0.3 * p.margin,
            if created { "frozen now" } else if matches { "matches" } else { "MISMATCH" }
        ),
    );
    let check = gp_check(&d.settings, p);
    Some((fresh, check))
}

/// Re-solves the 3D problem at a scanned point and recomputes `μ` and the
/// residual from the returned field.
fn gp_check(cfg: &ScanConfig, p: &PhasePoint) -> GpCheck {
    let grid = RadialGrid::new(p.r_max, p.z_max, p.nr, p.nz).unwrap();
    let ctx = ChannelContext::new(&grid, &cfg.trap).unwrap();
    let scan1 = rotgas::channel::channel_scan_adaptive(&ctx, p.g, p.omega, cfg.solvers.n_cap, &ChannelOptions::default(), None).unwrap();
    let (k, _) = scan1.best_symmetric(p.omega);
    let init = rotgas::dm::DmState::from_channel_scan(&grid, &cfg.trap, p.omega, p.g, &scan1);
    let dm = rotgas::dm::dm_minimize_with(&ctx, p.omega, p.g, &rotgas::dm::DmOptions { init: Some(init), ..Default::default() }).unwrap();
    let space = CylindricalSpace::new(&grid, &cfg.trap, p.m_max).unwrap();
    let best = &scan1.results[k];
    let inits = standard_inits(
        &space,
        p.omega,
        p.g,
        SEED,
        Some(ChannelSeed { grid: &grid, n: best.n as i64, orbital: &best.orbital }),
        Some(&dm),
    )
    .unwrap();
    let opts = GpOptions { max_iter: 20_000, ..Default::default() };
    let r = gp_minimize(&space, p.omega, p.g, &inits, &opts).unwrap();
    let psi = &r.psi.values;
    let e = gp_energy(&space, p.omega, p.g, psi).unwrap();
    let mut nodes = vec![num_complex::Complex64::new(0.0, 0.0); space.node_len()];
    space.to_nodes(psi, &mut nodes);
    let q: f64 = nodes.iter().zip(space.node_weights()).map(|(v, w)| w * v.norm_sqr().powi(2)).sum();
    let mut h = vec![num_complex::Complex64::new(0.0, 0.0); space.len()];
    space.apply_h0(p.omega, psi, &mut h);
    let mu_rq = space.dot(psi, &h) + 8.0 * PI * p.g * q;
    let mu_id = e + 4.0 * PI * p.g * q;
    let dev = ((mu_rq - mu_id).abs().max((gp_mu(&r, p.g) - mu_id).abs())) / mu_rq.abs();
    let res = gp_residual(&space, p.omega, p.g, &r).unwrap();
    GpCheck { omega: p.omega, g: p.g, residual_rel: res / mu_rq.abs(), mu_identity: dev }
}

fn criterion_8(s: &mut Suite, point: Option<&BrokenPoint>) {
    let Some(p) = point else {
        s.record(8, false, "no located point from criterion 7".into());
        return;
    };
    let grid = RadialGrid::new(STAB_R_MAX, STAB_Z_MAX, STAB_NR, STAB_NZ).unwrap();
    let ctx = ChannelContext::new(&grid, &harmonic()).unwrap();
    let sc = instability_scan(&ctx, p.omega, p.g, &STAB_N_LIST, &DEFAULT_L_GRID, 0, &ChannelOptions::default()).unwrap();
    let qs: Vec<String> = sc.reports.iter().map(|r| format!("n={} Q={:.3e} (L={})", r.n, r.q_value, r.l_trial)).collect();
    s.artifact("stability.json", to_json_bytes(&sc).unwrap());
    s.record(
        8,
        sc.first_unstable.is_some(),
        format!("at (Ω={}, g={}): first unstable n = {:?}; {}", p.omega, p.g, sc.first_unstable, qs.join(", ")),
    );
}

fn criterion_9(s: &mut Suite) {
    let up = c_constant_upper(1.0).unwrap();
    let lo = c_constant_lower(1.0).unwrap();
    let cont = (up - lo).abs().max((up - PI / 2.0).abs()).max((lo - PI / 2.0).abs());
    let large = (10.0 * c_constant(100.0).unwrap() - PI.sqrt()).abs();
    let c2 = (c_constant(2.0).unwrap() - 3.0 * PI / 8.0).abs();
    s.record(
        9,
        cont <= 1e-10 && large <= 0.01 && c2 <= 1e-12,
        format!("branch mismatch at n=1 {cont:.1e}; |√100 c_100 - √π| = {large:.2e}; |c_2 - 3π/8| = {c2:.1e}"),
    );
}

fn criterion_10(s: &mut Suite) {
    let grid = RadialGrid::new(8.0, 6.0, 64, 96).unwrap();
    let mut lines = Vec::new();
    let mut ok = true;
    for n in [1, 2, 3] {
        let r = channel_at(&grid, 100.0, n, 1e-7);
        let rep = lemma_bound_report(&grid, &harmonic(), &r).unwrap();
        ok &= rep.sup_bound.passed && rep.moment_bound.passed;
        lines.push(format!(
            "n={n}: sup margin {:.3}, moment margin {:.3}",
            rep.sup_bound.log_margin, rep.moment_bound.log_margin
        ));
    }
    s.record(10, ok, format!("log margins {}", lines.join("; ")));
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
struct ToyGap {
    particles: usize,
    modes: usize,
    omega: f64,
    coupling: f64,
    e_bose: f64,
    e_abs: f64,
    gap: f64,
}

const TOY_OMEGAS: [f64; 7] = [0.0, 0.4, 0.8, 1.2, 1.6, 1.8, 2.0];
const TOY_COUPLINGS: [f64; 4] = [0.1, 1.0, 10.0, 100.0];

fn toy_scan() -> Vec<ToyReport> {
    let modes = build_modes(3).unwrap();
    let mut out = Vec::new();
    for &om in &TOY_OMEGAS {
        for &c in &TOY_COUPLINGS {
            out.push(toy_point(2, &modes, om, c).unwrap());
        }
    }
    out
}

fn criterion_11(s: &mut Suite) {
    let modes = build_modes(3).unwrap();
    let basis = FockBasis::new(2, 3).unwrap();
    let reports = toy_scan();
    let mut dense_dev = 0.0f64;
    let mut order_ok = true;
    let mut rdm_dev = 0.0f64;
    for r in &reports {
        let op = bosonic_hamiltonian(&basis, &modes, r.omega, r.coupling).unwrap();
        let dense = dense_ground(&op).unwrap();
        let it = bosonic_ground(2, &modes, r.omega, r.coupling).unwrap();
        dense_dev = dense_dev.max((it.energy - dense).abs());
        order_ok &= r.e_abs <= r.e_bose + 1e-12;
        let rdm = one_rdm(&it.vector, &it.basis).unwrap();
        let ev = rdm.symmetric_eigenvalues();
        let sum: f64 = ev.iter().sum();
        rdm_dev = rdm_dev.max((sum - 1.0).abs());
        for &l in ev.iter() {
            if !(-1e-12..=1.0 + 1e-12).contains(&l) {
                rdm_dev = rdm_dev.max(1.0);
            }
        }
    }
    let located = reports.iter().find(|r| r.gap >= 1e-6).map(|r| ToyGap {
        particles: r.particles,
        modes: r.modes,
        omega: r.omega,
        coupling: r.coupling,
        e_bose: r.e_bose,
        e_abs: r.e_abs,
        gap: r.gap,
    });
    let (gap_ok, gap_note) = match &located {
        Some(fresh) => {
            let (frozen, created) = golden("toy_gap.json", fresh);
            let m = frozen.omega == fresh.omega
                && frozen.coupling == fresh.coupling
                && close(frozen.e_bose, fresh.e_bose, 1e-10)
                && close(frozen.e_abs, fresh.e_abs, 1e-10);
            (
                m,
                format!(
                    "gap point (Ω={}, c={}) gap {:.4e}, golden {}",
                    fresh.omega,
                    fresh.coupling,
                    fresh.gap,
                    if created { "frozen now" } else if m { "matches" } else { "MISMATCH" }
                ),
            )
        }
        None => (false, "no scanned point with gap ≥ 1e-6".into()),
    };
    s.artifact("toy.csv", to_csv_bytes(&reports.iter().map(ToyRow::from).collect::<Vec<_>>()).unwrap());
    s.record(
        11,
        dense_dev <= 1e-10 && order_ok && rdm_dev <= 1e-12 && gap_ok,
        format!(
            "{} points: iterative vs dense max {dense_dev:.1e}; E_abs ≤ E_bose everywhere: {order_ok}; 1-RDM deviation {rdm_dev:.1e}; {gap_note}",
            reports.len()
        ),
    );
}

#[derive(Serialize)]
struct ToyRow {
    omega: f64,
    coupling: f64,
    e_bose: f64,
    e_abs: f64,
    gap: f64,
}

impl From<&ToyReport> for ToyRow {
    fn from(r: &ToyReport) -> Self {
        ToyRow { omega: r.omega, coupling: r.coupling, e_bose: r.e_bose, e_abs: r.e_abs, gap: r.gap }
    }
}

fn small_artifacts() -> Vec<u8> {
    let mut c = ScanConfig::new(vec![0.5, 1.0], vec![1.0, 10.0]);
    c.seed = SEED;
    c.grids = GridSettings { nr: Some(24), nz: Some(24), ..Default::default() };
    let d = scan(&c).unwrap();
    let mut bytes = to_csv_bytes(&d.points).unwrap();
    bytes.extend(to_json_bytes(&d.metadata()).unwrap());
    bytes.extend(to_csv_bytes(&toy_scan().iter().map(ToyRow::from).collect::<Vec<_>>()).unwrap());
    bytes
}

fn criterion_12(s: &mut Suite, started: Instant) {
    let a = small_artifacts();
    let b = small_artifacts();
    let rerun_same = a == b;

    let root = PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("acceptance");
    let current = root.join("current");
    let previous = root.join("previous");
    let _ = std::fs::remove_dir_all(&previous);
    if current.exists() {
        std::fs::rename(&current, &previous).unwrap();
    }
    let mut differing = Vec::new();
    let mut compared = 0;
    for (name, bytes) in &s.artifacts {
        write_atomic(&current.join(name), bytes).unwrap();
        if let Ok(old) = std::fs::read(previous.join(name)) {
            compared += 1;
            if &old != bytes {
                differing.push(name.clone());
            }
        }
    }
    let elapsed = started.elapsed().as_secs_f64();
    let cores = std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1);
    let previous_note = if compared == 0 {
        "no previous run to compare against; artifacts stored".to_string()
    } else {
        format!("{compared} artifacts compared with the previous run, differing: {differing:?}")
    };
    s.record(
        12,
        rerun_same && differing.is_empty() && elapsed < 1800.0,
        format!(
            "in-process rerun byte-identical: {rerun_same}; {previous_note}; suite time {elapsed:.0} s on {cores} core(s) (limit 1800 s)"
        ),
    );
}

fn main() {
    let started = Instant::now();
    let mut s = Suite { results: Vec::new(), artifacts: Vec::new() };

    criterion_1(&mut s);
    criterion_4(&mut s);
    criterion_9(&mut s);
    criterion_10(&mut s);
    criterion_11(&mut s);

    let mut cfg = ScanConfig::new(OMEGAS.to_vec(), GS.to_vec());
    cfg.seed = SEED;
    let t = Instant::now();
    let d = scan(&cfg).unwrap();
    let scan_secs = t.elapsed().as_secs_f64();
    s.artifact("phase.csv", to_csv_bytes(&d.points).unwrap());
    s.artifact("phase.json", to_json_bytes(&d.metadata()).unwrap());
    criteria_5_6(&mut s, &d, scan_secs);

    let located = criterion_7(&mut s, &d);
    let (point, check) = match located {
        Some((p, c)) => (Some(p), Some(c)),
        None => (None, None),
    };
    let check = check.unwrap_or_else(|| {
        let p = d.points.iter().filter(|p| p.gp_converged && p.lz_variance > 0.0).last().unwrap_or(&d.points[0]);
        gp_check(&d.settings, p)
    });
    criterion_2(&mut s, &check);
    criterion_3(&mut s, &check);
    criterion_8(&mut s, point.as_ref());
    criterion_12(&mut s, started);

    s.results.sort_by_key(|o| o.id);
    println!();
    println!("summary:");
    for o in &s.results {
        println!("  criterion {:>2}: {}", o.id, if o.pass { "PASS" } else { "FAIL" });
    }
    let failed: Vec<u32> = s.results.iter().filter(|o| !o.pass).map(|o| o.id).collect();
    if !failed.is_empty() {
        for o in s.results.iter().filter(|o| !o.pass) {
            eprintln!("criterion {} failed: {}", o.id, o.detail);
        }
        std::process::exit(1);
    }
}
