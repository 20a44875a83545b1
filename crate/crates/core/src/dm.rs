//! Density-matrix functional `Tr[H₀ γ] + 4πg ∫ρ_γ²` over unit-trace `γ ≥ 0`.
//!
//! `γ` is stored as a list of real channel orbitals `f_j(r, z) e^{i n_j φ}` with
//! occupations `λ_j`. Every Frank–Wolfe atom is the ground state of the
//! axially symmetric operator `H₀ + 8πgρ` in some channel, so this form is
//! closed under the iteration. Optimality is certified by the duality gap
//! `E(γ) - (e* - 4πg∫ρ²)`, where `e*` is the lowest eigenvalue of
//! `H₀ + 8πgρ` over all channels.

use std::f64::consts::PI;

use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;
use serde::Serialize;

use crate::channel::{ChannelContext, ChannelScan};
use crate::discretization::{ChannelOperator, RadialGrid, ScalarField2D, TrapSpec};
use crate::error::{BestIterate, Error, Result};
use crate::linalg::{lobpcg_lowest, simplex_kkt_residual, simplex_qp, LobpcgOptions};

/// Occupations below this count as empty when reporting the rank.
pub const RANK_THRESHOLD: f64 = 1e-6;
/// Two channel eigenvalues closer than this are reported as degenerate.
pub const TIE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Serialize)]
pub struct DmChannel {
    pub n: usize,
    #[serde(skip)]
    pub orbital: ScalarField2D,
}

#[derive(Debug, Clone, Serialize)]
pub struct DmState {
    pub omega: f64,
    pub g: f64,
    pub channels: Vec<DmChannel>,
    pub occupations: Vec<f64>,
    pub energy: f64,
    pub duality_gap: f64,
    /// Lowest eigenvalue of `H₀ + 8πgρ` at this state's density.
    pub e_star: f64,
    pub n_star: usize,
    /// True when another channel tied with `n_star` within [`TIE_TOL`].
    pub degenerate: bool,
    pub iterations: usize,
    #[serde(skip)]
    pub energy_trace: Vec<f64>,
    #[serde(skip)]
    pub gap_trace: Vec<f64>,
    #[serde(skip)]
    pub grid: RadialGrid,
    #[serde(skip)]
    pub trap: TrapSpec,
}

#[derive(Debug, Clone)]
pub struct DmOptions {
    /// Stop once `duality_gap ≤ tol · |E|`.
    pub tol: f64,
    pub max_iter: usize,
    /// Residual contract for every channel eigensolve.
    pub eig_tol: f64,
    /// Largest angular momentum the linearized search may reach.
    pub n_cap: usize,
    /// Initial channels scanned before adaptive extension.
    pub n_initial: usize,
    pub init: Option<DmState>,
}

impl Default for DmOptions {
    fn default() -> Self {
        DmOptions {
            tol: 1e-6,
            max_iter: 500,
            eig_tol: 1e-8,
            n_cap: 200,
            n_initial: 8,
            init: None,
        }
    }
}

/// Lowest eigenpair of `H₀ + 8πgρ` across channels.
#[derive(Debug, Clone)]
pub struct LinearizedGround {
    pub n: usize,
    pub orbital: ScalarField2D,
    /// Eigenvalue including the rotation shift `-Ωn`.
    pub value: f64,
    pub degenerate: bool,
    /// `(n, eigenvalue - Ωn)` for every channel examined.
    pub per_channel: Vec<(usize, f64)>,
}

/// Channel eigensolver with a per-`n` warm-start cache.
pub struct LinearizedSolver<'a> {
    ctx: &'a ChannelContext,
    omega: f64,
    g: f64,
    eig_tol: f64,
    n_cap: usize,
    operators: Vec<Option<ChannelOperator>>,
    cache: Vec<Option<Vec<f64>>>,
}

impl<'a> LinearizedSolver<'a> {
    pub fn new(ctx: &'a ChannelContext, omega: f64, g: f64, eig_tol: f64, n_cap: usize) -> Self {
        LinearizedSolver {
            ctx,
            omega,
            g,
            eig_tol,
            n_cap,
            operators: vec![None; n_cap + 1],
            cache: vec![None; n_cap + 1],
        }
    }

    fn operator(&mut self, n: usize) -> Result<()> {
        if self.operators[n].is_none() {
            self.operators[n] = Some(self.ctx.operator(n as f64)?);
        }
        Ok(())
    }

    pub fn seed(&mut self, n: usize, vector: &[f64]) {
        if n <= self.n_cap {
            self.cache[n] = Some(vector.to_vec());
        }
    }

    /// Solves channels `ns` at the potential `8πgρ` (parallel, ordered).
    fn solve_many(&mut self, ns: &[usize], extra: &[f64]) -> Result<Vec<(usize, f64, Vec<f64>)>> {
        for &n in ns {
            self.operator(n)?;
        }
        let ctx = self.ctx;
        let grid = &ctx.grid;
        let eig_tol = self.eig_tol;
        let jobs: Vec<(usize, &ChannelOperator, Vec<f64>)> = ns
            .iter()
            .map(|&n| {
                let start = self.cache[n]
                    .clone()
                    .unwrap_or_else(|| ctx.initial_orbital(self.g, n as f64).values);
                (n, self.operators[n].as_ref().expect("operator built"), start)
            })
            .collect();
        let out: Vec<Result<(usize, f64, Vec<f64>)>> = jobs
            .into_par_iter()
            .map(|(n, op, start)| {
                let mut scratch = Vec::new();
                let m2 = (n * n) as f64;
                let res = lobpcg_lowest(
                    |x: &[f64], y: &mut [f64]| op.apply(x, Some(extra), y),
                    |r: &[f64], theta: f64, y: &mut [f64]| {
                        ctx.kinetic.solve(m2, theta.abs().max(1.0), r, y, &mut scratch)
                    },
                    grid.weights(),
                    start,
                    &LobpcgOptions {
                        tol: eig_tol,
                        max_iter: 3000,
                    },
                );
                match res {
                    Ok(r) => Ok((n, r.value, r.vector)),
                    Err(Error::NotConverged {
                        iterations,
                        residual,
                        ..
                    }) => Err(Error::NotConverged {
                        solver: "linearized channel eigensolver",
                        iterations,
                        residual,
                        best: None,
                    }),
                    Err(e) => Err(e),
                }
            })
            .collect();
        let mut results = Vec::with_capacity(ns.len());
        for r in out {
            let (n, value, mut vector) = r?;
            // Ground states have one sign.
            if vector.iter().sum::<f64>() < 0.0 {
                vector.iter_mut().for_each(|v| *v = -*v);
            }
            self.cache[n] = Some(vector.clone());
            results.push((n, value, vector));
        }
        Ok(results)
    }

    /// Lowest eigenvalue of `H₀ + 8πgρ` over `n ≥ 0`.
    ///
    /// Channels are added until the shifted eigenvalue has risen three times
    /// in a row past the current minimum and the minimum sits at least three
    /// channels below the top, or the cap is hit.
    pub fn ground(&mut self, rho: &[f64], n_initial: usize) -> Result<LinearizedGround> {
        let c8 = 8.0 * PI * self.g;
        let extra: Vec<f64> = rho.iter().map(|v| c8 * v).collect();
        let mut per_channel: Vec<(usize, f64)> = Vec::new();
        let mut vectors: Vec<Vec<f64>> = Vec::new();
        let mut next = 0usize;
        let mut block = n_initial.max(4).min(self.n_cap + 1);
        loop {
            let hi = (next + block).min(self.n_cap + 1);
            let ns: Vec<usize> = (next..hi).collect();
            for (n, value, vec) in self.solve_many(&ns, &extra)? {
                per_channel.push((n, value - self.omega.abs() * n as f64));
                vectors.push(vec);
            }
            next = hi;
            if next > self.n_cap || bracketed(&per_channel) {
                break;
            }
            block = 4;
        }
        let vmin = per_channel.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
        let ties: Vec<usize> = (0..per_channel.len())
            .filter(|&k| per_channel[k].1 <= vmin + TIE_TOL)
            .collect();
        let k = ties[0];
        Ok(LinearizedGround {
            n: per_channel[k].0,
            orbital: ScalarField2D {
                nr: self.ctx.grid.nr,
                nz: self.ctx.grid.nz,
                values: vectors.swap_remove(k),
            },
            value: per_channel[k].1,
            degenerate: ties.len() > 1,
            per_channel,
        })
    }

    /// Ground state of `H₀ + 8πgρ` in one channel.
    fn channel_ground(&mut self, n: usize, rho: &[f64]) -> Result<(f64, Vec<f64>)> {
        let c8 = 8.0 * PI * self.g;
        let extra: Vec<f64> = rho.iter().map(|v| c8 * v).collect();
        let mut out = self.solve_many(&[n], &extra)?;
        let (_, value, vec) = out.pop().expect("one channel solved");
        Ok((value - self.omega.abs() * n as f64, vec))
    }
}

fn bracketed(per_channel: &[(usize, f64)]) -> bool {
    let len = per_channel.len();
    if len < 4 {
        return false;
    }
    let (kmin, _) = per_channel
        .iter()
        .enumerate()
        .fold((0, f64::INFINITY), |acc, (k, p)| if p.1 < acc.1 { (k, p.1) } else { acc });
    if kmin + 3 >= len {
        return false;
    }
    (len - 3..len).all(|k| per_channel[k].1 > per_channel[k - 1].1)
}

/// Per-channel one-body energies `⟨f, A_n f⟩ - Ωn` with `A_n` the `g = 0` operator.
fn one_body_energy(ops: &mut OperatorCache, n: usize, f: &[f64], w: &[f64], omega: f64) -> Result<f64> {
    let op = ops.get(n)?;
    let af = op.apply_vec(f);
    Ok(crate::discretization::weighted_dot(w, f, &af) - omega.abs() * n as f64)
}

struct OperatorCache<'a> {
    ctx: &'a ChannelContext,
    ops: Vec<Option<ChannelOperator>>,
}

impl<'a> OperatorCache<'a> {
    fn new(ctx: &'a ChannelContext) -> Self {
        OperatorCache { ctx, ops: Vec::new() }
    }

    fn get(&mut self, n: usize) -> Result<&ChannelOperator> {
        if self.ops.len() <= n {
            self.ops.resize(n + 1, None);
        }
        if self.ops[n].is_none() {
            self.ops[n] = Some(self.ctx.operator(n as f64)?);
        }
        Ok(self.ops[n].as_ref().expect("just built"))
    }
}

/// Working representation during minimization: atoms with cached one-body energies.
#[derive(Debug, Clone)]
struct Atom {
    n: usize,
    f: Vec<f64>,
    lambda: f64,
    h: f64,
}

fn density(atoms: &[Atom], len: usize) -> Vec<f64> {
    let mut rho = vec![0.0; len];
    for a in atoms {
        for k in 0..len {
            rho[k] += a.lambda * a.f[k] * a.f[k];
        }
    }
    rho
}

fn total_energy(atoms: &[Atom], rho: &[f64], w: &[f64], g: f64) -> f64 {
    let lin: f64 = atoms.iter().map(|a| a.lambda * a.h).sum();
    lin + 4.0 * PI * g * crate::discretization::weighted_dot(w, rho, rho)
}

/// Replaces the atoms of each channel by the orthonormal eigenbasis of their
/// channel density matrix; `γ`, `ρ` and the energy are unchanged.
fn merge_channels(atoms: Vec<Atom>, w: &[f64], ops: &mut OperatorCache, omega: f64) -> Result<Vec<Atom>> {
    let mut ns: Vec<usize> = atoms.iter().map(|a| a.n).collect();
    ns.sort_unstable();
    ns.dedup();
    let mut out = Vec::new();
    for n in ns {
        let group: Vec<&Atom> = atoms.iter().filter(|a| a.n == n && a.lambda > 0.0).collect();
        if group.is_empty() {
            continue;
        }
        if group.len() == 1 {
            out.push(group[0].clone());
            continue;
        }
        let m = group.len();
        let mut c = DMatrix::<f64>::zeros(m, m);
        for a in 0..m {
            for b in a..m {
                let gab = crate::discretization::weighted_dot(w, &group[a].f, &group[b].f);
                let v = (group[a].lambda * group[b].lambda).sqrt() * gab;
                c[(a, b)] = v;
                c[(b, a)] = v;
            }
        }
        let eig = SymmetricEigen::new(c);
        for k in 0..m {
            let mu = eig.eigenvalues[k];
            if !(mu > 1e-14) {
                continue;
            }
            let len = group[0].f.len();
            let mut f = vec![0.0; len];
            for a in 0..m {
                let coef = group[a].lambda.sqrt() * eig.eigenvectors[(a, k)] / mu.sqrt();
                for (fi, gi) in f.iter_mut().zip(&group[a].f) {
                    *fi += coef * gi;
                }
            }
            let nrm = crate::discretization::weighted_dot(w, &f, &f).sqrt();
            f.iter_mut().for_each(|v| *v /= nrm);
            if f.iter().sum::<f64>() < 0.0 {
                f.iter_mut().for_each(|v| *v = -*v);
            }
            let h = one_body_energy(ops, n, &f, w, omega)?;
            out.push(Atom { n, f, lambda: mu, h });
        }
    }
    let total: f64 = out.iter().map(|a| a.lambda).sum();
    out.iter_mut().for_each(|a| a.lambda /= total);
    Ok(out)
}

/// Optimal occupations for fixed orthonormal-per-channel orbitals.
fn solve_occupations(atoms: &mut Vec<Atom>, w: &[f64], g: f64) -> f64 {
    let m = atoms.len();
    let c: Vec<f64> = atoms.iter().map(|a| a.h).collect();
    let q = coupling_matrix(atoms.iter().map(|a| a.f.as_slice()), m, w, g);
    let x0: Vec<f64> = atoms.iter().map(|a| a.lambda).collect();
    let res = simplex_qp(&c, &q, Some(&x0), 1e-11);
    for (a, &x) in atoms.iter_mut().zip(&res.x) {
        a.lambda = x;
    }
    atoms.retain(|a| a.lambda > 0.0);
    res.kkt_residual
}

fn coupling_matrix<'b>(orbitals: impl Iterator<Item = &'b [f64]>, m: usize, w: &[f64], g: f64) -> DMatrix<f64> {
    let fs: Vec<&[f64]> = orbitals.collect();
    let mut q = DMatrix::<f64>::zeros(m, m);
    for a in 0..m {
        for b in a..m {
            let mut acc = 0.0;
            for k in 0..w.len() {
                acc += w[k] * fs[a][k] * fs[a][k] * fs[b][k] * fs[b][k];
            }
            q[(a, b)] = 4.0 * PI * g * acc;
            q[(b, a)] = q[(a, b)];
        }
    }
    q
}

/// Minimizes the quadratic `F(t) = F(0) + b t + a t²` on `[0, 1]`.
pub fn quadratic_step(a: f64, b: f64) -> f64 {
    if a > 0.0 {
        (-b / (2.0 * a)).clamp(0.0, 1.0)
    } else if b < 0.0 {
        1.0
    } else {
        0.0
    }
}

/// Moves weight `t` from the atoms in `from` to a single new atom.
///
/// Returns the exact line-search step for `ρ_t = ρ + t D` with
/// `D = Λ (u² - ρ_from / Λ)` and linear change `Λ (h_u - h_from / Λ)`.
fn transfer_step(atoms: &[Atom], from: &[usize], u: &[f64], h_u: f64, rho: &[f64], w: &[f64], g: f64) -> (f64, f64) {
    let lam: f64 = from.iter().map(|&k| atoms[k].lambda).sum();
    let lin_from: f64 = from.iter().map(|&k| atoms[k].lambda * atoms[k].h).sum();
    let len = rho.len();
    let mut rd = 0.0;
    let mut dd = 0.0;
    for k in 0..len {
        let mut rf = 0.0;
        for &a in from {
            rf += atoms[a].lambda * atoms[a].f[k] * atoms[a].f[k];
        }
        let d = lam * u[k] * u[k] - rf;
        rd += w[k] * rho[k] * d;
        dd += w[k] * d * d;
    }
    let c4 = 4.0 * PI * g;
    let b = (lam * h_u - lin_from) + 2.0 * c4 * rd;
    let a = c4 * dd;
    let t = quadratic_step(a, b);
    (t, b * t + a * t * t)
}

fn apply_transfer(atoms: &mut Vec<Atom>, from: &[usize], n: usize, u: Vec<f64>, h_u: f64, t: f64) {
    let lam: f64 = from.iter().map(|&k| atoms[k].lambda).sum();
    for &k in from {
        atoms[k].lambda *= 1.0 - t;
    }
    atoms.push(Atom {
        n,
        f: u,
        lambda: t * lam,
        h: h_u,
    });
    atoms.retain(|a| a.lambda > 0.0);
}

fn check_g(g: f64) -> Result<()> {
    if !(g > 0.0) || !g.is_finite() {
        return Err(Error::config(format!(
            "dm minimization needs g > 0 (got {g}); at g = 0 the minimizer is not unique \
             and the problem is a plain eigenvalue problem"
        )));
    }
    Ok(())
}

/// Frank–Wolfe minimization with per-channel relaxation and exact occupation solves.
pub fn dm_minimize(grid: &RadialGrid, trap: &TrapSpec, omega: f64, g: f64, opts: &DmOptions) -> Result<DmState> {
    let ctx = ChannelContext::new(grid, trap)?;
    dm_minimize_with(&ctx, omega, g, opts)
}

pub fn dm_minimize_with(ctx: &ChannelContext, omega: f64, g: f64, opts: &DmOptions) -> Result<DmState> {
    check_g(g)?;
    ctx.trap.check_omega(omega)?;
    if omega < 0.0 {
        return Err(Error::config("dm minimization expects omega ≥ 0; the energy is even in omega"));
    }
    let grid = &ctx.grid;
    let w = grid.weights();
    let len = grid.len();
    let mut ops = OperatorCache::new(ctx);
    let mut lin = LinearizedSolver::new(ctx, omega, g, opts.eig_tol, opts.n_cap);

    let mut atoms: Vec<Atom> = Vec::new();
    if let Some(init) = &opts.init {
        for (ch, &lam) in init.channels.iter().zip(&init.occupations) {
            if !grid.same_shape(&init.grid) || lam <= 0.0 {
                continue;
            }
            let h = one_body_energy(&mut ops, ch.n, &ch.orbital.values, w, omega)?;
            lin.seed(ch.n, &ch.orbital.values);
            atoms.push(Atom {
                n: ch.n,
                f: ch.orbital.values.clone(),
                lambda: lam,
                h,
            });
        }
    }
    if atoms.is_empty() {
        let f = ctx.initial_orbital(g, 0.0).values;
        let h = one_body_energy(&mut ops, 0, &f, w, omega)?;
        atoms.push(Atom { n: 0, f, lambda: 1.0, h });
    }
    let total: f64 = atoms.iter().map(|a| a.lambda).sum();
    atoms.iter_mut().for_each(|a| a.lambda /= total);

    let n_initial = opts
        .n_initial
        .max(atoms.iter().map(|a| a.n + 4).max().unwrap_or(0));
    let mut energy_trace = Vec::new();
    let mut gap_trace = Vec::new();
    let mut best: Option<DmState> = None;

    for it in 0..=opts.max_iter {
        let rho = density(&atoms, len);
        let energy = total_energy(&atoms, &rho, w, g);
        let ground = lin.ground(&rho, n_initial)?;
        let rho2 = crate::discretization::weighted_dot(w, &rho, &rho);
        let gap = (energy - (ground.value - 4.0 * PI * g * rho2)).max(0.0);
        energy_trace.push(energy);
        gap_trace.push(gap);
        let state = build_state(ctx, omega, g, &atoms, energy, gap, &ground, it, &energy_trace, &gap_trace);
        if best.as_ref().is_none_or(|b| gap < b.duality_gap) {
            best = Some(state.clone());
        }
        if gap <= opts.tol * energy.abs() {
            return Ok(state);
        }
        if it == opts.max_iter {
            break;
        }

        // (a) Frank–Wolfe step towards the linearized ground state.
        let h_u = one_body_energy(&mut ops, ground.n, &ground.orbital.values, w, omega)?;
        let all: Vec<usize> = (0..atoms.len()).collect();
        let (t, _) = transfer_step(&atoms, &all, &ground.orbital.values, h_u, &rho, w, g);
        if t > 0.0 {
            apply_transfer(&mut atoms, &all, ground.n, ground.orbital.values.clone(), h_u, t);
        }
        atoms = merge_channels(atoms, w, &mut ops, omega)?;

        // (b) Relax each occupied channel towards its own ground state.
        let mut channels: Vec<usize> = atoms.iter().map(|a| a.n).collect();
        channels.sort_unstable();
        channels.dedup();
        for n in channels {
            let from: Vec<usize> = (0..atoms.len()).filter(|&k| atoms[k].n == n).collect();
            if from.is_empty() {
                continue;
            }
            let rho = density(&atoms, len);
            let (_, u) = lin.channel_ground(n, &rho)?;
            let h_u = one_body_energy(&mut ops, n, &u, w, omega)?;
            let (t, delta) = transfer_step(&atoms, &from, &u, h_u, &rho, w, g);
            if t > 0.0 && delta < 0.0 {
                apply_transfer(&mut atoms, &from, n, u, h_u, t);
                atoms = merge_channels(atoms, w, &mut ops, omega)?;
            }
        }

        // (c) Occupations for the current orbitals; drops empty atoms.
        solve_occupations(&mut atoms, w, g);
        let total: f64 = atoms.iter().map(|a| a.lambda).sum();
        atoms.iter_mut().for_each(|a| a.lambda /= total);
    }
    let best = best.expect("at least one iterate");
    Err(Error::NotConverged {
        solver: "density-matrix Frank-Wolfe",
        iterations: opts.max_iter,
        residual: best.duality_gap,
        best: Some(Box::new(BestIterate::Dm(best))),
    })
}

#[allow(clippy::too_many_arguments)]
fn build_state(
    ctx: &ChannelContext,
    omega: f64,
    g: f64,
    atoms: &[Atom],
    energy: f64,
    gap: f64,
    ground: &LinearizedGround,
    iterations: usize,
    energy_trace: &[f64],
    gap_trace: &[f64],
) -> DmState {
    let mut order: Vec<usize> = (0..atoms.len()).collect();
    order.sort_by(|&a, &b| atoms[a].n.cmp(&atoms[b].n).then(atoms[b].lambda.total_cmp(&atoms[a].lambda)));
    DmState {
        omega,
        g,
        channels: order
            .iter()
            .map(|&k| DmChannel {
                n: atoms[k].n,
                orbital: ScalarField2D {
                    nr: ctx.grid.nr,
                    nz: ctx.grid.nz,
                    values: atoms[k].f.clone(),
                },
            })
            .collect(),
        occupations: order.iter().map(|&k| atoms[k].lambda).collect(),
        energy,
        duality_gap: gap,
        e_star: ground.value,
        n_star: ground.n,
        degenerate: ground.degenerate,
        iterations,
        energy_trace: energy_trace.to_vec(),
        gap_trace: gap_trace.to_vec(),
        grid: ctx.grid.clone(),
        trap: ctx.trap,
    }
}

impl DmState {
    /// Rank-one state built from a channel orbital.
    pub fn rank_one(grid: &RadialGrid, trap: &TrapSpec, omega: f64, g: f64, n: usize, orbital: ScalarField2D) -> Self {
        DmState {
            omega,
            g,
            channels: vec![DmChannel { n, orbital }],
            occupations: vec![1.0],
            energy: f64::NAN,
            duality_gap: f64::NAN,
            e_star: f64::NAN,
            n_star: n,
            degenerate: false,
            iterations: 0,
            energy_trace: Vec::new(),
            gap_trace: Vec::new(),
            grid: grid.clone(),
            trap: *trap,
        }
    }

    /// Rank-one state from the best channel of a scan, which is where the
    /// symmetric GP minimum sits.
    pub fn from_channel_scan(grid: &RadialGrid, trap: &TrapSpec, omega: f64, g: f64, scan: &ChannelScan) -> Self {
        let (k, _) = scan.best_symmetric(omega);
        let r = &scan.results[k];
        Self::rank_one(grid, trap, omega, g, r.n as usize, r.orbital.clone())
    }

    /// Checks trace, positivity, normalization and per-channel orthogonality.
    pub fn validate(&self) -> Result<()> {
        if self.channels.len() != self.occupations.len() || self.channels.is_empty() {
            return Err(Error::domain("density matrix needs one occupation per orbital"));
        }
        if self.occupations.iter().any(|&l| !(l >= 0.0)) {
            return Err(Error::domain("occupations must be nonnegative"));
        }
        let tr: f64 = self.occupations.iter().sum();
        if (tr - 1.0).abs() > 1e-10 {
            return Err(Error::domain(format!("trace must be 1 (got {tr})")));
        }
        for (a, ch) in self.channels.iter().enumerate() {
            self.grid.check(&ch.orbital)?;
            let nrm = self.grid.norm_sq(&ch.orbital.values);
            if (nrm - 1.0).abs() > 1e-10 {
                return Err(Error::domain(format!("orbital {a} is not normalized (‖f‖² = {nrm})")));
            }
            for b in 0..a {
                if self.channels[b].n == ch.n {
                    let ov = self.grid.dot(&self.channels[b].orbital.values, &ch.orbital.values);
                    if ov.abs() > 1e-8 {
                        return Err(Error::domain(format!(
                            "orbitals {b} and {a} share channel n = {} but overlap by {ov:.3e}",
                            ch.n
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn rank(&self) -> usize {
        dm_rank(self, RANK_THRESHOLD)
    }

    /// Occupation summed per channel, ascending in `n`.
    pub fn channel_occupations(&self) -> Vec<(usize, f64)> {
        let mut out: Vec<(usize, f64)> = Vec::new();
        for (ch, &l) in self.channels.iter().zip(&self.occupations) {
            match out.last_mut() {
                Some(last) if last.0 == ch.n => last.1 += l,
                _ => out.push((ch.n, l)),
            }
        }
        out
    }
}

/// `Σ λ_j (⟨f_j, A_{n_j} f_j⟩ - Ω n_j) + 4πg ∫ρ²`.
pub fn dm_energy(state: &DmState) -> Result<f64> {
    state.validate()?;
    let ctx = ChannelContext::new(&state.grid, &state.trap)?;
    let mut ops = OperatorCache::new(&ctx);
    let w = state.grid.weights();
    let mut lin = 0.0;
    for (ch, &l) in state.channels.iter().zip(&state.occupations) {
        lin += l * one_body_energy(&mut ops, ch.n, &ch.orbital.values, w, state.omega)?;
    }
    let rho = dm_density(state)?;
    Ok(lin + 4.0 * PI * state.g * state.grid.dot(&rho.values, &rho.values))
}

/// `ρ = Σ λ_j f_j²`.
pub fn dm_density(state: &DmState) -> Result<ScalarField2D> {
    state.validate()?;
    let mut rho = ScalarField2D::zeros(&state.grid);
    for (ch, &l) in state.channels.iter().zip(&state.occupations) {
        for (r, f) in rho.values.iter_mut().zip(&ch.orbital.values) {
            *r += l * f * f;
        }
    }
    Ok(rho)
}

/// Lowest eigenpair of `H₀ + 8πgρ` over `n ∈ n_range`, ties to the smaller `n`.
pub fn dm_linearized_ground(
    grid: &RadialGrid,
    trap: &TrapSpec,
    omega: f64,
    g: f64,
    rho: &ScalarField2D,
    n_range: std::ops::RangeInclusive<usize>,
) -> Result<LinearizedGround> {
    grid.check(rho)?;
    if rho.values.iter().any(|&v| !(v >= 0.0)) {
        return Err(Error::domain("density must be nonnegative"));
    }
    trap.check_omega(omega)?;
    let ctx = ChannelContext::new(grid, trap)?;
    let (lo, hi) = (*n_range.start(), *n_range.end());
    let mut lin = LinearizedSolver::new(&ctx, omega, g, 1e-8, hi);
    let c8 = 8.0 * PI * g;
    let extra: Vec<f64> = rho.values.iter().map(|v| c8 * v).collect();
    let ns: Vec<usize> = (lo..=hi).collect();
    let solved = lin.solve_many(&ns, &extra)?;
    let per_channel: Vec<(usize, f64)> = solved
        .iter()
        .map(|(n, v, _)| (*n, v - omega.abs() * *n as f64))
        .collect();
    let vmin = per_channel.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
    let ties: Vec<usize> = (0..per_channel.len())
        .filter(|&k| per_channel[k].1 <= vmin + TIE_TOL)
        .collect();
    let k = ties[0];
    Ok(LinearizedGround {
        n: per_channel[k].0,
        orbital: ScalarField2D {
            nr: grid.nr,
            nz: grid.nz,
            values: solved[k].2.clone(),
        },
        value: per_channel[k].1,
        degenerate: ties.len() > 1,
        per_channel,
    })
}

/// Certified gap `E(γ) - (e*(ρ) - 4πg∫ρ²)` with `e*` searched adaptively over `n`.
pub fn dm_duality_gap(state: &DmState) -> Result<f64> {
    let energy = dm_energy(state)?;
    let rho = dm_density(state)?;
    let ctx = ChannelContext::new(&state.grid, &state.trap)?;
    let n_top = state.channels.iter().map(|c| c.n).max().unwrap_or(0);
    let mut lin = LinearizedSolver::new(&ctx, state.omega, state.g, 1e-8, (4 * n_top + 64).max(64));
    for ch in &state.channels {
        lin.seed(ch.n, &ch.orbital.values);
    }
    let ground = lin.ground(&rho.values, n_top + 4)?;
    let rho2 = state.grid.dot(&rho.values, &rho.values);
    Ok((energy - (ground.value - 4.0 * PI * state.g * rho2)).max(0.0))
}

/// Simplex-optimal occupations for fixed orbitals; returns `(λ, KKT residual)`.
pub fn dm_occupations(
    grid: &RadialGrid,
    trap: &TrapSpec,
    channels: &[DmChannel],
    omega: f64,
    g: f64,
) -> Result<(Vec<f64>, f64)> {
    if channels.is_empty() {
        return Err(Error::domain("need at least one orbital"));
    }
    let ctx = ChannelContext::new(grid, trap)?;
    let mut ops = OperatorCache::new(&ctx);
    let w = grid.weights();
    let c: Vec<f64> = channels
        .iter()
        .map(|ch| one_body_energy(&mut ops, ch.n, &ch.orbital.values, w, omega))
        .collect::<Result<_>>()?;
    let q = coupling_matrix(channels.iter().map(|c| c.orbital.values.as_slice()), channels.len(), w, g);
    let res = simplex_qp(&c, &q, None, 1e-12);
    let kkt = simplex_kkt_residual(&c, &q, &res.x);
    Ok((res.x, kkt))
}

/// Number of occupations above `threshold`.
pub fn dm_rank(state: &DmState, threshold: f64) -> usize {
    state.occupations.iter().filter(|&&l| l > threshold).count()
}

/// `max ρ ≤ e*/(8πg) · (1 + 5Δr)`; returns the check and the ratio `max ρ · 8πg / e*`.
pub fn dm_density_bound(state: &DmState) -> Result<(bool, f64)> {
    let rho = dm_density(state)?;
    let max_rho = rho.max_abs();
    let mu = if state.e_star.is_finite() {
        state.e_star
    } else {
        return Err(Error::domain("state carries no linearized eigenvalue"));
    };
    let bound = mu / (8.0 * PI * state.g) * (1.0 + 5.0 * state.grid.dr);
    Ok((max_rho <= bound, max_rho * 8.0 * PI * state.g / mu))
}
