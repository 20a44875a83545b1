//! Small dense helpers and a single-vector LOBPCG eigensolver.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{BestIterate, Error, Result};

#[derive(Debug, Clone, Copy)]
pub struct LobpcgOptions {
    /// Absolute bound on the weighted residual norm `‖A x - θ x‖`.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for LobpcgOptions {
    fn default() -> Self {
        LobpcgOptions {
            tol: 1e-9,
            max_iter: 4000,
        }
    }
}

#[derive(Debug, Clone)]
pub struct EigenResult {
    pub value: f64,
    /// Unit norm in the weighted inner product.
    pub vector: Vec<f64>,
    pub residual: f64,
    pub iterations: usize,
}

fn wdot(w: &[f64], a: &[f64], b: &[f64]) -> f64 {
    let mut acc = 0.0;
    for k in 0..a.len() {
        acc += w[k] * a[k] * b[k];
    }
    acc
}

fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

fn scale(alpha: f64, x: &mut [f64]) {
    x.iter_mut().for_each(|v| *v *= alpha);
}

/// Lowest eigenpair of a operator symmetric under `⟨a, b⟩ = Σ w a b`.
///
/// `apply(x, y)` writes `A x` into `y`; `precond(r, θ, y)` writes an
/// approximation of `(A - θ)^{-1} r`-like smoothing of the residual.
/// The search space is `{x, T r, p}` with Rayleigh–Ritz in each step.
pub fn lobpcg_lowest<A, P>(
    mut apply: A,
    mut precond: P,
    w: &[f64],
    x0: Vec<f64>,
    opts: &LobpcgOptions,
) -> Result<EigenResult>
where
    A: FnMut(&[f64], &mut [f64]),
    P: FnMut(&[f64], f64, &mut [f64]),
{
    let n = w.len();
    if x0.len() != n {
        return Err(Error::shape(format!(
            "initial vector has length {} but weights have {}",
            x0.len(),
            n
        )));
    }
    let mut x = x0;
    let nx = wdot(w, &x, &x).sqrt();
    if !(nx > 0.0) || !nx.is_finite() {
        return Err(Error::domain("initial eigenvector guess is zero or non-finite"));
    }
    scale(1.0 / nx, &mut x);
    let mut ax = vec![0.0; n];
    apply(&x, &mut ax);
    let mut theta = wdot(w, &x, &ax);
    let mut r = vec![0.0; n];
    let mut p: Option<(Vec<f64>, Vec<f64>)> = None;
    let mut t = vec![0.0; n];
    let mut at = vec![0.0; n];
    let mut best = (f64::INFINITY, theta, x.clone());

    for it in 0..opts.max_iter {
        for k in 0..n {
            r[k] = ax[k] - theta * x[k];
        }
        let res = wdot(w, &r, &r).sqrt();
        if res < best.0 {
            best = (res, theta, x.clone());
        }
        if res <= opts.tol {
            return Ok(EigenResult {
                value: theta,
                vector: x,
                residual: res,
                iterations: it,
            });
        }
        precond(&r, theta, &mut t);
        // Basis vectors and their images, orthonormalized against x first.
        let mut basis: Vec<(Vec<f64>, Vec<f64>)> = vec![(x.clone(), ax.clone())];
        let mut candidates: Vec<Vec<f64>> = vec![t.clone()];
        if let Some((pv, _)) = &p {
            candidates.push(pv.clone());
        }
        for mut c in candidates {
            let c0 = wdot(w, &c, &c).sqrt();
            if !(c0 > 0.0) {
                continue;
            }
            for _pass in 0..2 {
                for (b, _) in &basis {
                    let proj = wdot(w, b, &c);
                    axpy(-proj, b, &mut c);
                }
            }
            let cn = wdot(w, &c, &c).sqrt();
            if cn <= 1e-10 * c0 || !cn.is_finite() {
                continue;
            }
            scale(1.0 / cn, &mut c);
            apply(&c, &mut at);
            basis.push((c, at.clone()));
        }
        let m = basis.len();
        if m == 1 {
            break;
        }
        let mut h = DMatrix::<f64>::zeros(m, m);
        for a in 0..m {
            for b in a..m {
                let v = 0.5 * (wdot(w, &basis[a].0, &basis[b].1) + wdot(w, &basis[b].0, &basis[a].1));
                h[(a, b)] = v;
                h[(b, a)] = v;
            }
        }
        let eig = SymmetricEigen::new(h);
        let mut imin = 0;
        for k in 1..m {
            if eig.eigenvalues[k] < eig.eigenvalues[imin] {
                imin = k;
            }
        }
        let coeffs: Vec<f64> = (0..m).map(|a| eig.eigenvectors[(a, imin)]).collect();
        let mut xn = vec![0.0; n];
        let mut axn = vec![0.0; n];
        let mut pn = vec![0.0; n];
        let mut apn = vec![0.0; n];
        for a in 0..m {
            axpy(coeffs[a], &basis[a].0, &mut xn);
            axpy(coeffs[a], &basis[a].1, &mut axn);
            if a > 0 {
                axpy(coeffs[a], &basis[a].0, &mut pn);
                axpy(coeffs[a], &basis[a].1, &mut apn);
            }
        }
        let nrm = wdot(w, &xn, &xn).sqrt();
        scale(1.0 / nrm, &mut xn);
        scale(1.0 / nrm, &mut axn);
        x = xn;
        ax = axn;
        theta = wdot(w, &x, &ax);
        // Periodically refresh A x to stop drift from the recurrence.
        if it % 20 == 19 {
            apply(&x, &mut ax);
            theta = wdot(w, &x, &ax);
        }
        p = Some((pn, apn));
    }
    apply(&x, &mut ax);
    theta = wdot(w, &x, &ax);
    for k in 0..n {
        r[k] = ax[k] - theta * x[k];
    }
    let res = wdot(w, &r, &r).sqrt();
    if res <= opts.tol {
        return Ok(EigenResult {
            value: theta,
            vector: x,
            residual: res,
            iterations: opts.max_iter,
        });
    }
    let (bres, bval, bvec) = if res < best.0 { (res, theta, x) } else { best };
    Err(Error::NotConverged {
        solver: "lobpcg",
        iterations: opts.max_iter,
        residual: bres,
        best: Some(Box::new(BestIterate::Eigen {
            value: bval,
            vector: bvec,
        })),
    })
}

/// Euclidean projection onto the probability simplex.
pub fn project_simplex(v: &[f64]) -> Vec<f64> {
    let n = v.len();
    if n == 0 {
        return Vec::new();
    }
    let mut u = v.to_vec();
    u.sort_by(|a, b| b.total_cmp(a));
    let mut cumsum = 0.0;
    let mut tau = 0.0;
    for (k, &uk) in u.iter().enumerate() {
        cumsum += uk;
        let t = (cumsum - 1.0) / (k + 1) as f64;
        if uk - t > 0.0 {
            tau = t;
        }
    }
    v.iter().map(|&x| (x - tau).max(0.0)).collect()
}

/// Result of a convex quadratic program over the simplex.
#[derive(Debug, Clone)]
pub struct SimplexQpResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub kkt_residual: f64,
    pub iterations: usize,
}

/// KKT residual of `min cᵀx + xᵀQx` on the simplex at `x`.
///
/// With gradient `∇ = c + 2 Q x` and multiplier `ν = Σ x_a ∇_a`, optimality
/// means `∇_a ≥ ν` everywhere with equality on the support.
pub fn simplex_kkt_residual(c: &[f64], q: &DMatrix<f64>, x: &[f64]) -> f64 {
    let grad = qp_gradient(c, q, x);
    let nu: f64 = x.iter().zip(&grad).map(|(xa, ga)| xa * ga).sum();
    let mut res: f64 = 0.0;
    for a in 0..x.len() {
        let d = grad[a] - nu;
        res = res.max((-d).max(0.0));
        res = res.max(x[a] * d.abs());
    }
    let sum: f64 = x.iter().sum();
    res.max((sum - 1.0).abs()).max(x.iter().fold(0.0f64, |m, &v| m.max(-v)))
}

fn qp_gradient(c: &[f64], q: &DMatrix<f64>, x: &[f64]) -> Vec<f64> {
    let n = c.len();
    (0..n)
        .map(|a| c[a] + 2.0 * (0..n).map(|b| q[(a, b)] * x[b]).sum::<f64>())
        .collect()
}

fn qp_value(c: &[f64], q: &DMatrix<f64>, x: &[f64]) -> f64 {
    let n = c.len();
    let mut v = 0.0;
    for a in 0..n {
        v += c[a] * x[a];
        for b in 0..n {
            v += x[a] * q[(a, b)] * x[b];
        }
    }
    v
}

/// Minimizes `cᵀx + xᵀQx` over the simplex with `Q` symmetric positive semidefinite.
///
/// Accelerated projected gradient with restarts, followed by an exact solve
/// on the detected support to polish the KKT residual.
pub fn simplex_qp(c: &[f64], q: &DMatrix<f64>, x0: Option<&[f64]>, tol: f64) -> SimplexQpResult {
    let n = c.len();
    assert_eq!(q.nrows(), n);
    if n == 1 {
        let x = vec![1.0];
        return SimplexQpResult {
            value: qp_value(c, q, &x),
            kkt_residual: simplex_kkt_residual(c, q, &x),
            x,
            iterations: 0,
        };
    }
    let lip = 2.0 * q.iter().map(|v| v.abs()).fold(0.0f64, f64::max) * n as f64;
    let step = if lip > 0.0 { 1.0 / lip } else { 1.0 };
    let mut x = match x0 {
        Some(v) if v.len() == n => project_simplex(v),
        _ => vec![1.0 / n as f64; n],
    };
    let mut y = x.clone();
    let mut tk = 1.0f64;
    let mut fx = qp_value(c, q, &x);
    let mut iterations = 0;
    let max_iter = 200_000;
    while iterations < max_iter {
        iterations += 1;
        let g = qp_gradient(c, q, &y);
        let trial: Vec<f64> = y.iter().zip(&g).map(|(yi, gi)| yi - step * gi).collect();
        let xn = project_simplex(&trial);
        let fn_ = qp_value(c, q, &xn);
        let tn = 0.5 * (1.0 + (1.0 + 4.0 * tk * tk).sqrt());
        if fn_ > fx {
            // Function-value restart.
            y = x.clone();
            tk = 1.0;
            continue;
        }
        let beta = (tk - 1.0) / tn;
        y = xn.iter().zip(&x).map(|(a, b)| a + beta * (a - b)).collect();
        x = xn;
        fx = fn_;
        tk = tn;
        if iterations % 25 == 0 {
            if let Some(p) = polish_on_support(c, q, &x) {
                if simplex_kkt_residual(c, q, &p) <= tol && qp_value(c, q, &p) <= fx + 1e-14 {
                    x = p;
                    break;
                }
            }
            if simplex_kkt_residual(c, q, &x) <= tol {
                break;
            }
        }
    }
    if let Some(p) = active_set_refine(c, q, &x) {
        if simplex_kkt_residual(c, q, &p) < simplex_kkt_residual(c, q, &x)
            && qp_value(c, q, &p) <= qp_value(c, q, &x) + 1e-13
        {
            x = p;
        }
    }
    SimplexQpResult {
        value: qp_value(c, q, &x),
        kkt_residual: simplex_kkt_residual(c, q, &x),
        x,
        iterations,
    }
}

/// Primal active-set iterations started from the support of `x`.
fn active_set_refine(c: &[f64], q: &DMatrix<f64>, x: &[f64]) -> Option<Vec<f64>> {
    let n = x.len();
    let mut support: Vec<bool> = x.iter().map(|&v| v > 1e-9).collect();
    if !support.iter().any(|&s| s) {
        return None;
    }
    for _ in 0..4 * n + 4 {
        let idx: Vec<usize> = (0..n).filter(|&a| support[a]).collect();
        let sol = solve_on_support(c, q, &idx)?;
        if let Some((pos, _)) = idx
            .iter()
            .enumerate()
            .filter(|(i, _)| sol[*i] < 0.0)
            .min_by(|a, b| sol[a.0].total_cmp(&sol[b.0]))
        {
            support[idx[pos]] = false;
            continue;
        }
        let mut out = vec![0.0; n];
        for (i, &a) in idx.iter().enumerate() {
            out[a] = sol[i];
        }
        let grad = qp_gradient(c, q, &out);
        let nu: f64 = out.iter().zip(&grad).map(|(xa, ga)| xa * ga).sum();
        let worst = (0..n)
            .filter(|&a| !support[a])
            .min_by(|&a, &b| grad[a].total_cmp(&grad[b]));
        match worst {
            Some(a) if grad[a] < nu - 1e-13 => support[a] = true,
            _ => return Some(out),
        }
    }
    None
}

fn solve_on_support(c: &[f64], q: &DMatrix<f64>, idx: &[usize]) -> Option<Vec<f64>> {
    let k = idx.len();
    if k == 0 {
        return None;
    }
    // [2Q_SS 1; 1ᵀ 0] [x_S; -ν] = [-c_S; 1]
    let mut m = DMatrix::<f64>::zeros(k + 1, k + 1);
    let mut rhs = nalgebra::DVector::<f64>::zeros(k + 1);
    for (i, &a) in idx.iter().enumerate() {
        for (j, &b) in idx.iter().enumerate() {
            m[(i, j)] = 2.0 * q[(a, b)];
        }
        m[(i, k)] = 1.0;
        m[(k, i)] = 1.0;
        rhs[i] = -c[a];
    }
    rhs[k] = 1.0;
    let sol = m.lu().solve(&rhs)?;
    if sol.iter().any(|v| !v.is_finite()) {
        return None;
    }
    Some(sol.iter().take(k).cloned().collect())
}

/// Equality-constrained solve on the support of `x`; `None` if infeasible.
fn polish_on_support(c: &[f64], q: &DMatrix<f64>, x: &[f64]) -> Option<Vec<f64>> {
    let idx: Vec<usize> = (0..x.len()).filter(|&a| x[a] > 1e-12).collect();
    let sol = solve_on_support(c, q, &idx)?;
    let mut out = vec![0.0; x.len()];
    for (i, &a) in idx.iter().enumerate() {
        if !(sol[i] >= 0.0) {
            return None;
        }
        out[a] = sol[i];
    }
    Some(out)
}
