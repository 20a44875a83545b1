//! Few-mode rotating Bose gas: bosonic versus unrestricted ground states.
//!
//! One lowest-Landau-level orbital `φ_m ∝ (x + i y)^{|m|} e^{-r²/2}` per
//! angular momentum `m` (conjugated for `m < 0`), single-particle energies
//! `2(|m| + 1) - Ωm`, and a contact interaction of effective strength
//! `coupling` (not scaled with `N`).

use std::collections::HashMap;
use std::f64::consts::PI;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{BestIterate, Error, Result};
use crate::linalg::{lobpcg_lowest, LobpcgOptions};

/// Largest Hilbert-space dimension the solvers accept.
pub const DIM_CAP: usize = 200_000;

/// Largest dimension handed to the dense eigensolver.
pub const DENSE_CAP: usize = 2_000;

const EIG_TOL: f64 = 1e-9;

/// Radial quadrature cells for the interaction integrals.
const QUAD_CELLS: usize = 20_000;
const QUAD_RMAX: f64 = 10.0;

#[derive(Debug, Clone)]
pub struct ModeSet {
    pub momenta: Vec<i64>,
    pub energies: Vec<f64>,
    /// `V[a,b,c,d] = ∫ conj(φ_a φ_b) φ_c φ_d`, row-major over `M⁴`.
    tensor: Vec<f64>,
}

/// Modes `m = 0..M-1`.
pub fn build_modes(m_count: usize) -> Result<ModeSet> {
    if m_count < 2 {
        return Err(Error::config(format!("need at least 2 modes (got {m_count})")));
    }
    ModeSet::from_momenta(&(0..m_count as i64).collect::<Vec<_>>())
}

/// `∫₀^∞ r^{2s+1} e^{-2r²} dr` by composite Simpson.
fn radial_moment(s: u32) -> f64 {
    let h = QUAD_RMAX / QUAD_CELLS as f64;
    let f = |r: f64| r.powi(2 * s as i32 + 1) * (-2.0 * r * r).exp();
    let mut acc = f(0.0) + f(QUAD_RMAX);
    for k in 1..QUAD_CELLS {
        let wgt = if k % 2 == 1 { 4.0 } else { 2.0 };
        acc += wgt * f(k as f64 * h);
    }
    acc * h / 3.0
}

fn ln_factorial(n: u64) -> f64 {
    (1..=n).map(|k| (k as f64).ln()).sum()
}

impl ModeSet {
    /// One mode per listed angular momentum; the list must not repeat.
    pub fn from_momenta(momenta: &[i64]) -> Result<Self> {
        if momenta.len() < 2 {
            return Err(Error::config("need at least 2 modes"));
        }
        let mut sorted = momenta.to_vec();
        sorted.sort();
        sorted.dedup();
        if sorted.len() != momenta.len() {
            return Err(Error::config("mode angular momenta must be distinct"));
        }
        let mm = momenta.len();
        let energies = momenta.iter().map(|m| 2.0 * (m.unsigned_abs() as f64 + 1.0)).collect();
        let mut moments = HashMap::new();
        let mut tensor = vec![0.0; mm * mm * mm * mm];
        for a in 0..mm {
            for b in 0..mm {
                for c in 0..mm {
                    for d in 0..mm {
                        let (ma, mb, mc, md) = (momenta[a], momenta[b], momenta[c], momenta[d]);
                        if ma + mb != mc + md {
                            continue;
                        }
                        let abs = [ma, mb, mc, md].map(|m| m.unsigned_abs());
                        let s = (abs.iter().sum::<u64>() / 2) as u32;
                        let radial = *moments.entry(s).or_insert_with(|| radial_moment(s));
                        let norm: f64 = abs.iter().map(|&k| ln_factorial(k)).sum::<f64>();
                        // Angular integral 2π over (π²) from the mode norms.
                        tensor[((a * mm + b) * mm + c) * mm + d] = 2.0 * radial / PI * (-0.5 * norm).exp();
                    }
                }
            }
        }
        Ok(ModeSet {
            momenta: momenta.to_vec(),
            energies,
            tensor,
        })
    }

    /// Modes `m = -k..=k`.
    pub fn symmetric(k: usize) -> Result<Self> {
        let k = k as i64;
        Self::from_momenta(&(-k..=k).collect::<Vec<_>>())
    }

    pub fn len(&self) -> usize {
        self.momenta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.momenta.is_empty()
    }

    #[inline]
    pub fn interaction(&self, a: usize, b: usize, c: usize, d: usize) -> f64 {
        let m = self.len();
        self.tensor[((a * m + b) * m + c) * m + d]
    }

    /// `e_k - Ω m_k`.
    pub fn one_body(&self, omega: f64) -> Vec<f64> {
        self.energies
            .iter()
            .zip(&self.momenta)
            .map(|(e, &m)| e - omega * m as f64)
            .collect()
    }

    /// Pairs `(c, d)` grouped by `m_c + m_d`, for enumerating allowed scatterings.
    fn pairs_by_total(&self) -> HashMap<i64, Vec<(usize, usize)>> {
        let mut map: HashMap<i64, Vec<(usize, usize)>> = HashMap::new();
        for a in 0..self.len() {
            for b in 0..self.len() {
                map.entry(self.momenta[a] + self.momenta[b]).or_default().push((a, b));
            }
        }
        map
    }
}

/// Number of ways to put `n` bosons in `m` modes.
pub fn fock_dimension(n: usize, m: usize) -> u128 {
    let (top, k) = ((n + m - 1) as u128, (m - 1).min(n) as u128);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (top - i) / (i + 1);
    }
    acc
}

/// Occupation vectors in lexicographic order.
#[derive(Debug, Clone)]
pub struct FockBasis {
    pub particles: usize,
    pub modes: usize,
    states: Vec<Vec<u8>>,
    index: HashMap<Vec<u8>, usize>,
}

impl FockBasis {
    pub fn new(particles: usize, modes: usize) -> Result<Self> {
        if modes == 0 {
            return Err(Error::config("need at least one mode"));
        }
        if particles > u8::MAX as usize {
            return Err(Error::config("too many particles"));
        }
        let dim = fock_dimension(particles, modes);
        if dim > DIM_CAP as u128 {
            return Err(Error::config(format!(
                "bosonic basis dimension {dim} exceeds the cap {DIM_CAP}"
            )));
        }
        let mut states = Vec::with_capacity(dim as usize);
        let mut cur = vec![0u8; modes];
        fill(&mut states, &mut cur, 0, particles);
        let index = states.iter().enumerate().map(|(i, s)| (s.clone(), i)).collect();
        Ok(FockBasis {
            particles,
            modes,
            states,
            index,
        })
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn state(&self, i: usize) -> &[u8] {
        &self.states[i]
    }

    pub fn index_of(&self, occ: &[u8]) -> Option<usize> {
        self.index.get(occ).copied()
    }
}

fn fill(out: &mut Vec<Vec<u8>>, cur: &mut [u8], k: usize, left: usize) {
    if k + 1 == cur.len() {
        cur[k] = left as u8;
        out.push(cur.to_vec());
        return;
    }
    for v in 0..=left {
        cur[k] = v as u8;
        fill(out, cur, k + 1, left - v);
    }
}

/// Real symmetric sparse matrix stored by rows.
#[derive(Debug, Clone)]
pub struct SparseOperator {
    pub dim: usize,
    rows: Vec<Vec<(usize, f64)>>,
}

impl SparseOperator {
    fn from_maps(maps: Vec<HashMap<usize, f64>>) -> Self {
        let rows = maps
            .into_iter()
            .map(|m| {
                let mut r: Vec<(usize, f64)> = m.into_iter().filter(|(_, v)| *v != 0.0).collect();
                r.sort_by_key(|e| e.0);
                r
            })
            .collect::<Vec<_>>();
        SparseOperator { dim: rows.len(), rows }
    }

    pub fn apply(&self, x: &[f64], y: &mut [f64]) {
        for (yi, row) in y.iter_mut().zip(&self.rows) {
            *yi = row.iter().map(|&(j, v)| v * x[j]).sum();
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        self.rows
            .iter()
            .enumerate()
            .map(|(i, row)| row.iter().find(|e| e.0 == i).map_or(0.0, |e| e.1))
            .collect()
    }

    /// `max |H_ij - H_ji|`.
    pub fn hermiticity_error(&self) -> f64 {
        let mut err = 0.0f64;
        for (i, row) in self.rows.iter().enumerate() {
            for &(j, v) in row {
                let back = self.rows[j].iter().find(|e| e.0 == i).map_or(0.0, |e| e.1);
                err = err.max((v - back).abs());
            }
        }
        err
    }

    pub fn nnz(&self) -> usize {
        self.rows.iter().map(Vec::len).sum()
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.dim, self.dim);
        for (i, row) in self.rows.iter().enumerate() {
            for &(j, v) in row {
                m[(i, j)] += v;
            }
        }
        m
    }
}

/// `Σ (e_k - Ωm_k) n_k + (coupling/2) Σ V_abcd a†_a a†_b a_c a_d` on the Fock basis.
pub fn bosonic_hamiltonian(basis: &FockBasis, modes: &ModeSet, omega: f64, coupling: f64) -> Result<SparseOperator> {
    if basis.modes != modes.len() {
        return Err(Error::shape("basis and mode set disagree on the number of modes"));
    }
    let h1 = modes.one_body(omega);
    let pairs = modes.pairs_by_total();
    let mm = modes.len();
    let mut maps = vec![HashMap::new(); basis.len()];
    for (i, map) in maps.iter_mut().enumerate() {
        let occ = basis.state(i);
        let diag: f64 = occ.iter().zip(&h1).map(|(&n, e)| n as f64 * e).sum();
        *map.entry(i).or_insert(0.0) += diag;
        if coupling == 0.0 {
            continue;
        }
        let mut work = occ.to_vec();
        for c in 0..mm {
            for d in 0..mm {
                // a_c a_d
                let nd = work[d] as f64;
                if nd == 0.0 {
                    continue;
                }
                let mut amp = nd.sqrt();
                work[d] -= 1;
                let nc = work[c] as f64;
                if nc == 0.0 {
                    work[d] += 1;
                    continue;
                }
                amp *= nc.sqrt();
                work[c] -= 1;
                let total = modes.momenta[c] + modes.momenta[d];
                for &(a, b) in &pairs[&total] {
                    let v = modes.interaction(a, b, c, d);
                    if v == 0.0 {
                        continue;
                    }
                    let mut amp2 = amp * (work[b] as f64 + 1.0).sqrt();
                    work[b] += 1;
                    amp2 *= (work[a] as f64 + 1.0).sqrt();
                    work[a] += 1;
                    let j = basis.index_of(&work).expect("particle number is conserved");
                    *map.entry(j).or_insert(0.0) += 0.5 * coupling * v * amp2;
                    work[a] -= 1;
                    work[b] -= 1;
                }
                work[c] += 1;
                work[d] += 1;
            }
        }
    }
    Ok(SparseOperator::from_maps(maps))
}

/// Tensor basis `|k_1 … k_N⟩` of distinguishable particles, mode index of
/// particle `i` at digit `i` (base `M`, particle 0 most significant).
fn digits(mut idx: usize, n: usize, m: usize) -> Vec<usize> {
    let mut d = vec![0; n];
    for i in (0..n).rev() {
        d[i] = idx % m;
        idx /= m;
    }
    d
}

fn undigits(d: &[usize], m: usize) -> usize {
    d.iter().fold(0, |acc, &k| acc * m + k)
}

/// `Σ_i h_i + coupling Σ_{i<j} v_ij` on the full tensor space.
pub fn distinguishable_hamiltonian(particles: usize, modes: &ModeSet, omega: f64, coupling: f64) -> Result<SparseOperator> {
    let m = modes.len();
    let dim = (m as u128).checked_pow(particles as u32).unwrap_or(u128::MAX);
    if dim > DIM_CAP as u128 {
        return Err(Error::config(format!(
            "tensor-space dimension {dim} exceeds the cap {DIM_CAP}"
        )));
    }
    let dim = dim as usize;
    let h1 = modes.one_body(omega);
    let pairs = modes.pairs_by_total();
    let mut maps = vec![HashMap::new(); dim];
    for (idx, map) in maps.iter_mut().enumerate() {
        let ks = digits(idx, particles, m);
        let diag: f64 = ks.iter().map(|&k| h1[k]).sum();
        *map.entry(idx).or_insert(0.0) += diag;
        if coupling == 0.0 {
            continue;
        }
        for i in 0..particles {
            for j in i + 1..particles {
                let (c, d) = (ks[i], ks[j]);
                let total = modes.momenta[c] + modes.momenta[d];
                for &(a, b) in &pairs[&total] {
                    let v = modes.interaction(a, b, c, d);
                    if v == 0.0 {
                        continue;
                    }
                    let mut out = ks.clone();
                    out[i] = a;
                    out[j] = b;
                    *map.entry(undigits(&out, m)).or_insert(0.0) += coupling * v;
                }
            }
        }
    }
    Ok(SparseOperator::from_maps(maps))
}

fn seeded_start(dim: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..dim).map(|_| rng.random::<f64>() - 0.5).collect()
}

/// Lowest eigenpair by LOBPCG from a seeded start.
pub fn lowest_eigenpair(op: &SparseOperator) -> Result<(f64, Vec<f64>)> {
    let w = vec![1.0; op.dim];
    let res = lobpcg_lowest(
        |x: &[f64], y: &mut [f64]| op.apply(x, y),
        |r: &[f64], _theta: f64, y: &mut [f64]| y.copy_from_slice(r),
        &w,
        seeded_start(op.dim, 0x70),
        &LobpcgOptions {
            tol: EIG_TOL,
            max_iter: 20_000,
        },
    );
    match res {
        Ok(r) => Ok((r.value, r.vector)),
        Err(Error::NotConverged {
            iterations,
            residual,
            best: Some(b),
            ..
        }) => Err(Error::NotConverged {
            solver: "toy eigensolver",
            iterations,
            residual,
            best: Some(Box::new(match *b {
                BestIterate::Eigen { value, vector } => BestIterate::Eigen { value, vector },
                other => other,
            })),
        }),
        Err(e) => Err(e),
    }
}

/// Full spectrum by dense diagonalization (the reference oracle).
pub fn dense_spectrum(op: &SparseOperator) -> (Vec<f64>, DMatrix<f64>) {
    let eig = SymmetricEigen::new(op.to_dense());
    (eig.eigenvalues.iter().cloned().collect(), eig.eigenvectors)
}

pub fn dense_ground(op: &SparseOperator) -> Result<f64> {
    if op.dim > DENSE_CAP {
        return Err(Error::config(format!(
            "dense oracle limited to dimension {DENSE_CAP} (got {})",
            op.dim
        )));
    }
    Ok(dense_spectrum(op).0.into_iter().fold(f64::INFINITY, f64::min))
}

#[derive(Debug, Clone)]
pub struct BosonicGround {
    pub energy: f64,
    pub vector: Vec<f64>,
    pub basis: FockBasis,
}

pub fn bosonic_ground(particles: usize, modes: &ModeSet, omega: f64, coupling: f64) -> Result<BosonicGround> {
    check_coupling(coupling)?;
    let basis = FockBasis::new(particles, modes.len())?;
    let op = bosonic_hamiltonian(&basis, modes, omega, coupling)?;
    let (energy, vector) = lowest_eigenpair(&op)?;
    Ok(BosonicGround { energy, vector, basis })
}

fn check_coupling(coupling: f64) -> Result<()> {
    if !(coupling >= 0.0) || !coupling.is_finite() {
        return Err(Error::domain(format!("coupling must be nonnegative (got {coupling})")));
    }
    Ok(())
}

/// Symmetry type of a tensor-space ground vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SectorLabel {
    Symmetric,
    NonSymmetric,
    /// A degenerate ground space mixes both.
    Mixed,
}

#[derive(Debug, Clone, Serialize)]
pub struct AbsoluteGround {
    pub energy: f64,
    pub sector: SectorLabel,
    /// `‖P_sym v‖²` of the ground vector.
    pub symmetric_weight: f64,
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![Vec::new()];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for pos in 0..=p.len() {
            let mut q = p.clone();
            q.insert(pos, n - 1);
            out.push(q);
        }
    }
    out
}

/// `‖P_sym v‖²` for a unit vector of the tensor space.
pub fn symmetric_weight(v: &[f64], particles: usize, m: usize) -> f64 {
    let perms = permutations(particles);
    let inv = 1.0 / perms.len() as f64;
    let mut acc = 0.0;
    for (idx, &x) in v.iter().enumerate() {
        if x == 0.0 {
            continue;
        }
        let ks = digits(idx, particles, m);
        let mut s = 0.0;
        for p in &perms {
            let permuted: Vec<usize> = p.iter().map(|&i| ks[i]).collect();
            s += v[undigits(&permuted, m)];
        }
        // ⟨v, P v⟩ with P the average over permutations.
        acc += x * s * inv;
    }
    let n2: f64 = v.iter().map(|x| x * x).sum();
    acc / n2
}

pub fn absolute_ground(particles: usize, modes: &ModeSet, omega: f64, coupling: f64) -> Result<AbsoluteGround> {
    check_coupling(coupling)?;
    let op = distinguishable_hamiltonian(particles, modes, omega, coupling)?;
    let (energy, vector) = lowest_eigenpair(&op)?;
    let w = symmetric_weight(&vector, particles, modes.len());
    let sector = if w > 1.0 - 1e-8 {
        SectorLabel::Symmetric
    } else if w < 1e-8 {
        SectorLabel::NonSymmetric
    } else {
        SectorLabel::Mixed
    };
    Ok(AbsoluteGround {
        energy,
        sector,
        symmetric_weight: w,
    })
}

/// `Γ_kl = ⟨a†_k a_l⟩ / N` for a normalized Fock-space vector.
pub fn one_rdm(vector: &[f64], basis: &FockBasis) -> Result<DMatrix<f64>> {
    if vector.len() != basis.len() {
        return Err(Error::shape("vector length does not match the basis"));
    }
    if basis.particles == 0 {
        return Err(Error::domain("no particles"));
    }
    let n2: f64 = vector.iter().map(|x| x * x).sum();
    let m = basis.modes;
    let mut g = DMatrix::zeros(m, m);
    let mut work = vec![0u8; m];
    for (i, &x) in vector.iter().enumerate() {
        if x == 0.0 {
            continue;
        }
        let occ = basis.state(i);
        for l in 0..m {
            if occ[l] == 0 {
                continue;
            }
            for k in 0..m {
                work.copy_from_slice(occ);
                let mut amp = (work[l] as f64).sqrt();
                work[l] -= 1;
                amp *= (work[k] as f64 + 1.0).sqrt();
                work[k] += 1;
                let j = basis.index_of(&work).expect("particle number is conserved");
                // ⟨v| a†_k a_l |v⟩ = Σ v_j amp v_i
                g[(k, l)] += vector[j] * amp * x;
            }
        }
    }
    Ok(g / (n2 * basis.particles as f64))
}

/// Ground energies per total angular momentum `L = Σ n_k m_k`.
pub fn sector_energies(particles: usize, modes: &ModeSet, omega: f64, coupling: f64) -> Result<Vec<(i64, f64)>> {
    let basis = FockBasis::new(particles, modes.len())?;
    let op = bosonic_hamiltonian(&basis, modes, omega, coupling)?;
    let mut by_l: HashMap<i64, Vec<usize>> = HashMap::new();
    for i in 0..basis.len() {
        let l: i64 = basis.state(i).iter().zip(&modes.momenta).map(|(&n, &m)| n as i64 * m).sum();
        by_l.entry(l).or_default().push(i);
    }
    let mut keys: Vec<i64> = by_l.keys().copied().collect();
    keys.sort();
    let dense = op.to_dense();
    let mut out = Vec::new();
    for l in keys {
        let idx = &by_l[&l];
        let block = DMatrix::from_fn(idx.len(), idx.len(), |a, b| dense[(idx[a], idx[b])]);
        let e = SymmetricEigen::new(block).eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
        out.push((l, e));
    }
    Ok(out)
}

#[derive(Debug, Clone, Serialize)]
pub struct ToyReport {
    #[serde(rename = "N")]
    pub particles: usize,
    #[serde(rename = "M")]
    pub modes: usize,
    pub momenta: Vec<i64>,
    pub omega: f64,
    pub coupling: f64,
    pub e_bose: f64,
    pub e_abs: f64,
    pub gap: f64,
    pub rdm_eigenvalues: Vec<f64>,
    pub sector_label: SectorLabel,
    pub symmetric_weight: f64,
    pub coupling_note: &'static str,
}

pub const COUPLING_NOTE: &str = "coupling is an effective contact strength, not scaled with particle number";

/// Bosonic and unrestricted ground states at one parameter point.
pub fn toy_point(particles: usize, modes: &ModeSet, omega: f64, coupling: f64) -> Result<ToyReport> {
    let bose = bosonic_ground(particles, modes, omega, coupling)?;
    let abs = absolute_ground(particles, modes, omega, coupling)?;
    let rdm = one_rdm(&bose.vector, &bose.basis)?;
    let mut ev: Vec<f64> = SymmetricEigen::new(rdm).eigenvalues.iter().cloned().collect();
    ev.sort_by(|a, b| b.total_cmp(a));
    Ok(ToyReport {
        particles,
        modes: modes.len(),
        momenta: modes.momenta.clone(),
        omega,
        coupling,
        e_bose: bose.energy,
        e_abs: abs.energy,
        gap: bose.energy - abs.energy,
        rdm_eigenvalues: ev,
        sector_label: abs.sector,
        symmetric_weight: abs.symmetric_weight,
        coupling_note: COUPLING_NOTE,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn factorial(n: u64) -> f64 {
        (1..=n).map(|k| k as f64).product()
    }

    /// Closed form `S! / (π 2^{S+1} √(∏|m_i|!))` with `S = Σ|m_i| / 2`.
    fn tensor_oracle(ms: [i64; 4]) -> f64 {
        if ms[0] + ms[1] != ms[2] + ms[3] {
            return 0.0;
        }
        let abs = ms.map(|m| m.unsigned_abs());
        let s = abs.iter().sum::<u64>() / 2;
        let norm: f64 = abs.iter().map(|&k| factorial(k)).product();
        factorial(s) / (PI * 2f64.powi(s as i32 + 1) * norm.sqrt())
    }

    #[test]
    fn interaction_tensor_matches_closed_form() {
        for modes in [build_modes(4).unwrap(), ModeSet::symmetric(2).unwrap()] {
            let m = modes.len();
            for a in 0..m {
                for b in 0..m {
                    for c in 0..m {
                        for d in 0..m {
                            let ms = [a, b, c, d].map(|k| modes.momenta[k]);
                            let want = tensor_oracle(ms);
                            let got = modes.interaction(a, b, c, d);
                            assert!((got - want).abs() < 1e-12 * want.max(1e-3), "{ms:?}: {got} {want}");
                            assert!((got - modes.interaction(c, d, a, b)).abs() < 1e-12);
                        }
                    }
                }
            }
            for a in 0..m {
                assert!(modes.interaction(a, a, a, a) > 0.0);
            }
        }
    }

    #[test]
    fn selection_rule_for_two_modes() {
        let modes = build_modes(2).unwrap();
        for a in 0..2 {
            for b in 0..2 {
                for c in 0..2 {
                    for d in 0..2 {
                        let v = modes.interaction(a, b, c, d);
                        assert_eq!(v != 0.0, a + b == c + d);
                    }
                }
            }
        }
        assert!(build_modes(1).is_err());
    }

    #[test]
    fn basis_is_lexicographic_and_indexed() {
        let b = FockBasis::new(3, 4).unwrap();
        assert_eq!(b.len() as u128, fock_dimension(3, 4));
        assert_eq!(b.len(), 20);
        for i in 1..b.len() {
            assert!(b.state(i - 1) < b.state(i));
        }
        for i in 0..b.len() {
            assert_eq!(b.index_of(b.state(i)), Some(i));
            assert_eq!(b.state(i).iter().map(|&n| n as usize).sum::<usize>(), 3);
        }
        assert!(FockBasis::new(40, 12).is_err());
    }

    #[test]
    fn noninteracting_ground() {
        let modes = build_modes(4).unwrap();
        let g = bosonic_ground(3, &modes, 0.0, 0.0).unwrap();
        assert!((g.energy - 6.0).abs() < 1e-10);
        let rdm = one_rdm(&g.vector, &g.basis).unwrap();
        assert!((rdm[(0, 0)] - 1.0).abs() < 1e-10);
        let ev = SymmetricEigen::new(rdm).eigenvalues;
        let mut ev: Vec<f64> = ev.iter().cloned().collect();
        ev.sort_by(|a, b| b.total_cmp(a));
        assert!((ev[0] - 1.0).abs() < 1e-10 && ev[1].abs() < 1e-10);
    }

    #[test]
    fn sparse_matches_dense_and_is_symmetric() {
        let modes = build_modes(3).unwrap();
        let basis = FockBasis::new(2, 3).unwrap();
        let op = bosonic_hamiltonian(&basis, &modes, 0.5, 1.0).unwrap();
        assert!(op.hermiticity_error() < 1e-12);
        let g = bosonic_ground(2, &modes, 0.5, 1.0).unwrap();
        assert!((g.energy - dense_ground(&op).unwrap()).abs() < 1e-10);
        let big = build_modes(6).unwrap();
        let basis = FockBasis::new(5, 6).unwrap();
        let op = bosonic_hamiltonian(&basis, &big, 0.9, 2.0).unwrap();
        assert!(basis.len() > 200);
        let it = lowest_eigenpair(&op).unwrap().0;
        assert!((it - dense_ground(&op).unwrap()).abs() < 1e-10);
    }

    #[test]
    fn energy_grows_with_coupling() {
        let modes = build_modes(4).unwrap();
        let mut prev = f64::NEG_INFINITY;
        for c in [0.0, 0.5, 1.0, 2.0, 5.0, 10.0] {
            let e = bosonic_ground(3, &modes, 1.2, c).unwrap().energy;
            assert!(e >= prev - 1e-12);
            prev = e;
        }
    }

    #[test]
    fn sectors_reproduce_ground() {
        let modes = build_modes(4).unwrap();
        let e = bosonic_ground(3, &modes, 1.3, 4.0).unwrap().energy;
        let min = sector_energies(3, &modes, 1.3, 4.0)
            .unwrap()
            .into_iter()
            .map(|s| s.1)
            .fold(f64::INFINITY, f64::min);
        assert!((e - min).abs() < 1e-10);
    }

    #[test]
    fn unrestricted_ground_lies_below_bosonic() {
        let modes = build_modes(3).unwrap();
        for omega in [0.0, 0.8, 1.5, 1.9] {
            for c in [0.0, 1.0, 10.0] {
                let p = toy_point(2, &modes, omega, c).unwrap();
                assert!(p.e_abs <= p.e_bose + 1e-10);
                let s: f64 = p.rdm_eigenvalues.iter().sum();
                assert!((s - 1.0).abs() < 1e-12);
                assert!(p.rdm_eigenvalues.iter().all(|&x| x >= -1e-12 && x <= 1.0 + 1e-12));
            }
        }
        let p = toy_point(2, &modes, 1.8, 10.0).unwrap();
        assert!(p.gap > 1e-6);
        assert_eq!(p.sector_label, SectorLabel::NonSymmetric);
    }

    #[test]
    fn symmetric_modes_give_even_energies() {
        let modes = ModeSet::symmetric(2).unwrap();
        for omega in [0.4, 1.1, 1.7] {
            let a = toy_point(2, &modes, omega, 3.0).unwrap();
            let b = toy_point(2, &modes, -omega, 3.0).unwrap();
            assert!((a.e_bose - b.e_bose).abs() < 1e-10);
            assert!((a.e_abs - b.e_abs).abs() < 1e-10);
        }
    }

    #[test]
    fn symmetric_weight_of_simple_vectors() {
        // |01⟩ + |10⟩ is symmetric, |01⟩ - |10⟩ antisymmetric.
        let m = 2;
        let mut v = vec![0.0; 4];
        v[1] = 1.0;
        v[2] = 1.0;
        assert!((symmetric_weight(&v, 2, m) - 1.0).abs() < 1e-14);
        v[2] = -1.0;
        assert!(symmetric_weight(&v, 2, m).abs() < 1e-14);
        v[2] = 0.0;
        assert!((symmetric_weight(&v, 2, m) - 0.5).abs() < 1e-14);
    }
}
