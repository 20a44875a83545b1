//! Subcommand drivers. Each writes its artifacts into the output directory
//! and embeds the resolved config and seed in its JSON summary.

use std::path::Path;

use rotgas::channel::{channel_scan, channel_scan_adaptive, ChannelContext, ChannelOptions};
use rotgas::dm::{dm_density_bound, dm_minimize_with, DmOptions, DmState};
use rotgas::gp3d::{gp_minimize, standard_inits, ChannelSeed, CylindricalSpace, GpOptions, GpSpace};
use rotgas::io::{write_csv, write_json};
use rotgas::phase::{scan, ScanConfig};
use rotgas::stability::instability_scan;
use rotgas::toy::{toy_point, ModeSet, ToyReport};
use rotgas::Result;
use serde::Serialize;

use crate::config::{ChannelConfig, DmConfig, Gp3dConfig, StabilityConfig, ToyConfig};

#[derive(Serialize)]
struct Summary<'a, C: Serialize, R: Serialize> {
    subcommand: &'a str,
    version: &'a str,
    seed: u64,
    config: &'a C,
    result: R,
}

fn summary<C: Serialize, R: Serialize>(out: &Path, name: &str, seed: u64, config: &C, result: R) -> Result<()> {
    let s = Summary { subcommand: name, version: env!("CARGO_PKG_VERSION"), seed, config, result };
    write_json(&out.join(format!("{name}.json")), &s)
}

#[derive(Serialize)]
struct ChannelRow {
    g: f64,
    n: usize,
    energy: f64,
    rotating_energy: f64,
    mu_tilde: f64,
    quartic: f64,
    residual: f64,
    iterations: usize,
}

#[derive(Serialize)]
struct ChannelBest {
    g: f64,
    n_star: usize,
    rotating_energy: f64,
}

pub fn channel(cfg: &ChannelConfig, out: &Path) -> Result<()> {
    let grid = cfg.grid.build()?;
    let opts = ChannelOptions { tol: cfg.tol, ..Default::default() };
    let mut rows = Vec::new();
    let mut best = Vec::new();
    for &g in &cfg.g_list {
        let s = channel_scan(&grid, &cfg.trap, g, cfg.n_max, &opts)?;
        let (k, e) = s.best_symmetric(cfg.omega);
        best.push(ChannelBest { g, n_star: s.results[k].n as usize, rotating_energy: e });
        for r in &s.results {
            rows.push(ChannelRow {
                g,
                n: r.n as usize,
                energy: r.energy,
                rotating_energy: r.energy - r.n * cfg.omega,
                mu_tilde: r.mu_tilde,
                quartic: r.quartic,
                residual: r.residual,
                iterations: r.iterations,
            });
        }
    }
    write_csv(&out.join("channel.csv"), &rows)?;
    summary(out, "channel", cfg.seed, cfg, best)
}

fn channel_start(ctx: &ChannelContext, omega: f64, g: f64, n_cap: usize) -> Result<rotgas::channel::ChannelScan> {
    channel_scan_adaptive(ctx, g, omega, n_cap, &ChannelOptions::default(), None)
}

#[derive(Serialize)]
struct DmSummary {
    energy: f64,
    duality_gap: f64,
    relative_gap: f64,
    rank: usize,
    n_star: usize,
    e_star: f64,
    degenerate: bool,
    iterations: usize,
    occupations: Vec<(usize, f64)>,
    density_bound_holds: bool,
    density_bound_ratio: f64,
}

#[derive(Serialize)]
struct TraceRow {
    iteration: usize,
    energy: f64,
    gap: f64,
}

fn run_dm(ctx: &ChannelContext, omega: f64, g: f64, scan_n_cap: usize, opts: DmOptions) -> Result<(DmState, rotgas::channel::ChannelScan)> {
    let s = channel_start(ctx, omega, g, scan_n_cap)?;
    let init = DmState::from_channel_scan(&ctx.grid, &ctx.trap, omega, g, &s);
    let dm = dm_minimize_with(ctx, omega, g, &DmOptions { init: Some(init), ..opts })?;
    Ok((dm, s))
}

pub fn dm(cfg: &DmConfig, out: &Path) -> Result<()> {
    let grid = cfg.grid.build()?;
    let ctx = ChannelContext::new(&grid, &cfg.trap)?;
    let opts = DmOptions { tol: cfg.tol, max_iter: cfg.max_iter, n_cap: cfg.n_cap, ..Default::default() };
    let (dm, _) = run_dm(&ctx, cfg.omega, cfg.g, cfg.n_cap, opts)?;
    let (holds, ratio) = dm_density_bound(&dm)?;
    let trace: Vec<TraceRow> = dm
        .energy_trace
        .iter()
        .zip(&dm.gap_trace)
        .enumerate()
        .map(|(iteration, (&energy, &gap))| TraceRow { iteration, energy, gap })
        .collect();
    write_csv(&out.join("dm_trace.csv"), &trace)?;
    let s = DmSummary {
        energy: dm.energy,
        duality_gap: dm.duality_gap,
        relative_gap: dm.duality_gap / dm.energy.abs(),
        rank: dm.rank(),
        n_star: dm.n_star,
        e_star: dm.e_star,
        degenerate: dm.degenerate,
        iterations: dm.iterations,
        occupations: dm.channel_occupations(),
        density_bound_holds: holds,
        density_bound_ratio: ratio,
    };
    summary(out, "dm", cfg.seed, cfg, s)
}

#[derive(Serialize)]
struct SliceRow {
    x: f64,
    y: f64,
    density: f64,
    phase: f64,
}

#[derive(Serialize)]
struct ModeRow {
    m: i64,
    weight: f64,
}

pub fn gp3d(cfg: &Gp3dConfig, out: &Path) -> Result<()> {
    let grid = cfg.grid.build()?;
    let ctx = ChannelContext::new(&grid, &cfg.trap)?;
    let (dm, s) = if cfg.with_dm {
        let (d, s) = run_dm(&ctx, cfg.omega, cfg.g, 200, DmOptions::default())?;
        (Some(d), s)
    } else {
        (None, channel_start(&ctx, cfg.omega, cfg.g, 200)?)
    };
    let (k, _) = s.best_symmetric(cfg.omega);
    let best = &s.results[k];
    let n_top = dm
        .as_ref()
        .and_then(|d| d.channels.iter().map(|c| c.n).max())
        .unwrap_or(0)
        .max(best.n as usize);
    let m_max = cfg.m_max.unwrap_or((n_top + 4).max(8));
    let space = CylindricalSpace::new(&grid, &cfg.trap, m_max)?;
    let seed_state = if (best.n as usize) <= m_max {
        Some(ChannelSeed { grid: &grid, n: best.n as i64, orbital: &best.orbital })
    } else {
        None
    };
    let inits = standard_inits(&space, cfg.omega, cfg.g, cfg.seed, seed_state, dm.as_ref())?;
    let opts = GpOptions {
        tol: cfg.tol,
        max_iter: cfg.max_iter,
        screen_iter: cfg.screen_iter,
        finalists: cfg.finalists,
        ..Default::default()
    };
    let r = gp_minimize(&space, cfg.omega, cfg.g, &inits, &opts)?;
    if cfg.dump_slices {
        let rows: Vec<SliceRow> = space
            .slice(&r.psi.values, space.z_slices() / 2)?
            .into_iter()
            .map(|(x, y, v)| SliceRow { x, y, density: v.norm_sqr(), phase: v.arg() })
            .collect();
        write_csv(&out.join("gp3d_slice.csv"), &rows)?;
        let modes: Vec<ModeRow> = space
            .mode_weights(&r.psi.values)
            .into_iter()
            .map(|(m, weight)| ModeRow { m, weight })
            .collect();
        write_csv(&out.join("gp3d_modes.csv"), &modes)?;
    }
    #[derive(Serialize)]
    struct GpSummary<'a> {
        m_max: usize,
        n_phi: usize,
        channel_n_star: usize,
        channel_energy: f64,
        dm_energy: Option<f64>,
        #[serde(flatten)]
        result: &'a rotgas::gp3d::GpResult,
    }
    let res = GpSummary {
        m_max,
        n_phi: space.n_phi,
        channel_n_star: best.n as usize,
        channel_energy: best.energy - best.n * cfg.omega,
        dm_energy: dm.as_ref().map(|d| d.energy),
        result: &r,
    };
    summary(out, "gp3d", cfg.seed, cfg, res)
}

#[derive(Serialize)]
struct StabilityRow {
    n: f64,
    mu_tilde: f64,
    c_n: f64,
    l_trial: f64,
    q_value: f64,
    unstable: bool,
}

pub fn stability(cfg: &StabilityConfig, out: &Path) -> Result<()> {
    let grid = cfg.grid.build()?;
    let ctx = ChannelContext::new(&grid, &cfg.trap)?;
    let opts = ChannelOptions { tol: cfg.tol, ..Default::default() };
    let mut n_list = cfg.n_list.clone();
    n_list.sort_unstable();
    n_list.dedup();
    let sc = instability_scan(&ctx, cfg.omega, cfg.g, &n_list, &cfg.l_grid, cfg.m, &opts)?;
    let rows: Vec<StabilityRow> = sc
        .reports
        .iter()
        .map(|r| StabilityRow {
            n: r.n,
            mu_tilde: r.mu_tilde,
            c_n: r.c_n,
            l_trial: r.l_trial,
            q_value: r.q_value,
            unstable: r.unstable,
        })
        .collect();
    write_csv(&out.join("stability.csv"), &rows)?;
    summary(out, "stability", cfg.seed, cfg, &sc)
}

pub fn phase(cfg: &ScanConfig, out: &Path) -> Result<()> {
    let d = scan(cfg)?;
    write_csv(&out.join("phase.csv"), &d.points)?;
    summary(out, "phase", cfg.seed, cfg, d.metadata())
}

#[derive(Serialize)]
struct ToyRow {
    omega: f64,
    coupling: f64,
    e_bose: f64,
    e_abs: f64,
    gap: f64,
    sector_label: String,
    symmetric_weight: f64,
    rdm_top: f64,
}

pub fn toy(cfg: &ToyConfig, out: &Path) -> Result<()> {
    let modes = match (&cfg.momenta, cfg.modes) {
        (Some(m), _) => ModeSet::from_momenta(m)?,
        (None, Some(k)) => rotgas::toy::build_modes(k)?,
        (None, None) => rotgas::toy::build_modes(3)?,
    };
    let mut reports: Vec<ToyReport> = Vec::new();
    for &omega in &cfg.omega_list {
        for &c in &cfg.coupling_list {
            reports.push(toy_point(cfg.particles, &modes, omega, c)?);
        }
    }
    let rows: Vec<ToyRow> = reports
        .iter()
        .map(|r| ToyRow {
            omega: r.omega,
            coupling: r.coupling,
            e_bose: r.e_bose,
            e_abs: r.e_abs,
            gap: r.gap,
            sector_label: format!("{:?}", r.sector_label),
            symmetric_weight: r.symmetric_weight,
            rdm_top: r.rdm_eigenvalues.first().copied().unwrap_or(f64::NAN),
        })
        .collect();
    write_csv(&out.join("toy.csv"), &rows)?;
    summary(out, "toy", cfg.seed, cfg, &reports)
}
