//! Smallest eigenpairs of `A u = λ M u` with diagonal `M`.
//!
//! The iterative solver works on the standard form `B = M^-1/2 A M^-1/2`
//! through the shift-invert operator `(B - sI)^-1`, applied with one sparse
//! direct factorization of `A - sM`. A block Krylov-type subspace is grown
//! from operator residuals of the wanted Ritz pairs and restarted thickly.

use faer::linalg::solvers::Solve;
use faer::sparse::linalg::solvers::{Llt, Lu};
use faer::{Mat, Side};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::assembly::OperatorPair;
use crate::error::{Error, Result};
use crate::sparse::CsrMatrix;

/// Largest system accepted by [`dense_oracle`].
pub const DENSE_LIMIT: usize = 2000;

#[derive(Clone, Debug, PartialEq)]
pub struct EigenPair {
    pub lambda: f64,
    /// Coefficients with `‖u‖_M = 1`.
    pub vector: Vec<f64>,
    /// `‖Au − λMu‖₂ / ‖u‖_M`.
    pub residual: f64,
    pub m_norm: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolverOptions {
    pub k: usize,
    pub tol: f64,
    /// Outer iterations (block expansions).
    pub max_iter: usize,
    /// Must lie below the smallest eigenvalue.
    pub shift: f64,
    pub seed: u64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions { k: 1, tol: 1e-10, max_iter: 500, shift: 0.0, seed: 0 }
    }
}

fn check_mass(mass: &[f64]) -> Result<()> {
    match mass.iter().position(|&m| !(m > 0.0)) {
        Some(i) => Err(Error::NonPositiveMass(i)),
        None => Ok(()),
    }
}

/// `B = M^-1/2 A M^-1/2`; `u = M^-1/2 x` maps eigenvectors back.
pub fn to_standard(op: &OperatorPair) -> Result<CsrMatrix> {
    check_mass(&op.mass)?;
    let s: Vec<f64> = op.mass.iter().map(|m| 1.0 / m.sqrt()).collect();
    Ok(op.a.scale_rows_cols(&s, &s))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn axpy(y: &mut [f64], s: f64, x: &[f64]) {
    y.iter_mut().zip(x).for_each(|(yi, xi)| *yi += s * xi);
}

/// Scales so the largest-magnitude entry is positive (lowest index on ties).
fn fix_sign(u: &mut [f64]) {
    let mut best = 0;
    for (i, v) in u.iter().enumerate() {
        if v.abs() > u[best].abs() {
            best = i;
        }
    }
    if u.get(best).is_some_and(|&v| v < 0.0) {
        u.iter_mut().for_each(|v| *v = -*v);
    }
}

/// Builds an eigenpair from a standard-form vector `x`: back-transform,
/// M-normalize, fix the sign, and measure the true residual. For symmetric
/// problems `λ` is the Rayleigh quotient.
fn finish_pair(op: &OperatorPair, x: &[f64], lambda_hint: f64) -> EigenPair {
    let mut u: Vec<f64> = x.iter().zip(&op.mass).map(|(xi, m)| xi / m.sqrt()).collect();
    let mn = u.iter().zip(&op.mass).map(|(ui, m)| ui * ui * m).sum::<f64>().sqrt();
    u.iter_mut().for_each(|v| *v /= mn);
    fix_sign(&mut u);
    let au = op.a.mul_vec(&u);
    let lambda = if op.is_symmetric() { dot(&u, &au) } else { lambda_hint };
    let r: Vec<f64> = au.iter().zip(&u).zip(&op.mass).map(|((a, ui), m)| a - lambda * m * ui).collect();
    EigenPair { lambda, vector: u, residual: norm(&r), m_norm: 1.0 }
}

enum Factor {
    Cholesky(Llt<usize, f64>),
    Lu(Lu<usize, f64>),
}

/// `x ↦ M^1/2 (A − sM)^-1 M^1/2 x`.
struct ShiftInvert {
    factor: Factor,
    sqrt_m: Vec<f64>,
}

impl ShiftInvert {
    fn new(op: &OperatorPair, shift: f64) -> Result<Self> {
        let shifted = op.a.sub_diagonal(&op.mass, shift).to_faer();
        let factor = if op.is_symmetric() {
            match shifted.sp_cholesky(Side::Lower) {
                Ok(llt) => Factor::Cholesky(llt),
                Err(_) => Factor::Lu(shifted.sp_lu().map_err(|e| Error::Factorization(format!("{e:?}")))?),
            }
        } else {
            Factor::Lu(shifted.sp_lu().map_err(|e| Error::Factorization(format!("{e:?}")))?)
        };
        Ok(ShiftInvert { factor, sqrt_m: op.mass.iter().map(|m| m.sqrt()).collect() })
    }

    fn apply(&self, cols: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        let n = self.sqrt_m.len();
        let mut rhs = Mat::<f64>::from_fn(n, cols.len(), |i, j| self.sqrt_m[i] * cols[j][i]);
        match &self.factor {
            Factor::Cholesky(f) => f.solve_in_place(rhs.as_mut()),
            Factor::Lu(f) => f.solve_in_place(rhs.as_mut()),
        }
        let out: Vec<Vec<f64>> = (0..cols.len()).map(|j| (0..n).map(|i| self.sqrt_m[i] * rhs[(i, j)]).collect()).collect();
        if out.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::Factorization("shift hits the spectrum".into()));
        }
        Ok(out)
    }
}

/// Ritz data of the projected operator `H = Vᵀ Op V`, ordered by
/// decreasing real part of `μ` (smallest `λ` first). Coefficient vectors
/// are real: for complex pairs the real and imaginary parts span the
/// invariant plane.
struct Ritz {
    mu: Vec<f64>,
    mu_im: Vec<f64>,
    coef: Vec<Vec<f64>>,
}

fn ritz(h: &[Vec<f64>], symmetric: bool) -> Result<Ritz> {
    let m = h.len();
    let fail = |e| Error::Factorization(format!("projected eigenproblem: {e:?}"));
    if symmetric {
        let hm = Mat::<f64>::from_fn(m, m, |i, j| 0.5 * (h[i][j] + h[j][i]));
        let e = hm.self_adjoint_eigen(Side::Lower).map_err(fail)?;
        let s = e.S().column_vector();
        let u = e.U();
        // Ascending μ from the solver; reverse for smallest λ first.
        let order: Vec<usize> = (0..m).rev().collect();
        Ok(Ritz {
            mu: order.iter().map(|&i| s[i]).collect(),
            mu_im: vec![0.0; m],
            coef: order.iter().map(|&i| (0..m).map(|r| u[(r, i)]).collect()).collect(),
        })
    } else {
        let hm = Mat::<f64>::from_fn(m, m, |i, j| h[i][j]);
        let e = hm.eigen().map_err(fail)?;
        let s = e.S().column_vector();
        let u = e.U();
        let mut order: Vec<usize> = (0..m).collect();
        order.sort_by(|&a, &b| s[b].re.total_cmp(&s[a].re).then(s[a].im.total_cmp(&s[b].im)));
        let coef = order
            .iter()
            .map(|&i| {
                // Rotate so the largest entry is real, then keep the real part.
                let mut best = 0;
                for r in 0..m {
                    if u[(r, i)].norm() > u[(best, i)].norm() {
                        best = r;
                    }
                }
                let ph = u[(best, i)].conj() / u[(best, i)].norm();
                (0..m).map(|r| (u[(r, i)] * ph).re).collect()
            })
            .collect();
        Ok(Ritz { mu: order.iter().map(|&i| s[i].re).collect(), mu_im: order.iter().map(|&i| s[i].im).collect(), coef })
    }
}

fn combine(cols: &[Vec<f64>], c: &[f64]) -> Vec<f64> {
    let mut y = vec![0.0; cols[0].len()];
    for (v, &cj) in cols.iter().zip(c) {
        if cj != 0.0 {
            axpy(&mut y, cj, v);
        }
    }
    y
}

/// Orthogonalizes `x` against `basis` twice (classical Gram–Schmidt);
/// returns the remaining norm.
fn orthogonalize(x: &mut [f64], basis: &[Vec<f64>]) -> f64 {
    for _ in 0..2 {
        let c: Vec<f64> = basis.iter().map(|v| dot(v, x)).collect();
        for (v, cj) in basis.iter().zip(c) {
            axpy(x, -cj, v);
        }
    }
    norm(x)
}

/// Orthonormalizes coefficient columns (Euclidean), dropping dependent ones.
fn orthonormal_columns(cols: Vec<Vec<f64>>) -> Vec<Vec<f64>> {
    let mut out: Vec<Vec<f64>> = Vec::new();
    for mut c in cols {
        let before = norm(&c);
        let after = orthogonalize(&mut c, &out);
        if after > 1e-8 * before {
            c.iter_mut().for_each(|v| *v /= after);
            out.push(c);
        }
    }
    out
}

/// The `k` smallest eigenpairs, ascending, by shift-invert block iteration.
pub fn solve_smallest(op: &OperatorPair, opts: &SolverOptions) -> Result<Vec<EigenPair>> {
    let n = op.len();
    check_mass(&op.mass)?;
    if opts.k == 0 || opts.k > n {
        return Err(Error::InvalidRequest(format!("k = {} for N = {n}", opts.k)));
    }
    if !(opts.tol > 0.0) {
        return Err(Error::InvalidRequest(format!("tol must be positive, got {}", opts.tol)));
    }
    let k = opts.k;
    let symmetric = op.is_symmetric();
    let block = k.max(3).min(n);
    let max_basis = (3 * (k + block)).max(40).min(n);
    let inv = ShiftInvert::new(op, opts.shift)?;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);

    let mut v: Vec<Vec<f64>> = Vec::new();
    let mut w: Vec<Vec<f64>> = Vec::new();
    let mut h: Vec<Vec<f64>> = Vec::new();
    let mut pending: Vec<Vec<f64>> = (0..block).map(|_| (0..n).map(|_| rng.random::<f64>() - 0.5).collect()).collect();
    let mut converged = 0;

    for _iter in 0..opts.max_iter {
        // Orthonormalize the expansion block against the basis.
        let mut fresh: Vec<Vec<f64>> = Vec::new();
        for mut x in pending.drain(..) {
            let mut tries = 0;
            loop {
                let before = norm(&x);
                let all: Vec<Vec<f64>> = v.iter().chain(fresh.iter()).cloned().collect();
                let after = orthogonalize(&mut x, &all);
                if after > 1e-10 * before && after > 0.0 {
                    x.iter_mut().for_each(|e| *e /= after);
                    fresh.push(x);
                    break;
                }
                tries += 1;
                if tries > 3 || v.len() + fresh.len() >= n {
                    break;
                }
                x = (0..n).map(|_| rng.random::<f64>() - 0.5).collect();
            }
        }
        if fresh.is_empty() && v.is_empty() {
            return Err(Error::NoConvergence { iterations: 0, converged: 0, wanted: k });
        }
        let wf = inv.apply(&fresh)?;
        // Extend H = Vᵀ W.
        let old = v.len();
        v.extend(fresh);
        w.extend(wf);
        let m = v.len();
        for row in h.iter_mut() {
            row.resize(m, 0.0);
        }
        h.resize(m, vec![0.0; m]);
        for i in 0..m {
            for j in 0..m {
                if i >= old || j >= old {
                    h[i][j] = dot(&v[i], &w[j]);
                }
            }
        }

        let rz = ritz(&h, symmetric)?;
        let mut residuals: Vec<Vec<f64>> = Vec::new();
        converged = 0;
        let mut pairs = Vec::with_capacity(k);
        for i in 0..m.min(k) {
            let y = combine(&v, &rz.coef[i]);
            let lambda_hint = opts.shift + rz.mu[i] / (rz.mu[i] * rz.mu[i] + rz.mu_im[i] * rz.mu_im[i]);
            let pair = finish_pair(op, &y, lambda_hint);
            if pair.residual <= opts.tol && pair.residual.is_finite() {
                converged += 1;
            }
            pairs.push(pair);
        }
        if converged == k && pairs.len() == k {
            // Ritz vectors of one subspace; re-orthogonalize clusters in M.
            return Ok(finalize(op, pairs));
        }
        if m >= n {
            // Whole space spanned: Ritz pairs are exact up to rounding.
            return Ok(finalize(op, pairs));
        }
        // Expansion: Op-residuals of the first `block` unconverged Ritz pairs.
        for i in 0..m {
            if residuals.len() == block {
                break;
            }
            if i < pairs.len() && pairs[i].residual <= opts.tol {
                continue;
            }
            let y = combine(&v, &rz.coef[i]);
            let mut r = combine(&w, &rz.coef[i]);
            axpy(&mut r, -rz.mu[i], &y);
            residuals.push(r);
        }
        while residuals.len() < block {
            residuals.push((0..n).map(|_| rng.random::<f64>() - 0.5).collect());
        }
        pending = residuals;

        if m + block > max_basis {
            let keep = (k + block).min(m);
            let c = orthonormal_columns(rz.coef[..keep].to_vec());
            v = c.iter().map(|ci| combine(&v, ci)).collect();
            w = c.iter().map(|ci| combine(&w, ci)).collect();
            h = (0..v.len()).map(|i| (0..v.len()).map(|j| dot(&v[i], &w[j])).collect()).collect();
        }
    }
    Err(Error::NoConvergence { iterations: opts.max_iter, converged, wanted: k })
}

/// Sorts ascending and makes near-degenerate symmetric eigenvectors
/// exactly M-orthonormal; signs are re-fixed afterwards.
fn finalize(op: &OperatorPair, mut pairs: Vec<EigenPair>) -> Vec<EigenPair> {
    pairs.sort_by(|a, b| a.lambda.total_cmp(&b.lambda));
    if op.is_symmetric() {
        for i in 1..pairs.len() {
            let (head, tail) = pairs.split_at_mut(i);
            let u = &mut tail[0].vector;
            for p in head.iter() {
                let c: f64 = p.vector.iter().zip(u.iter()).zip(&op.mass).map(|((a, b), m)| a * b * m).sum();
                axpy(u, -c, &p.vector);
            }
            let mn = u.iter().zip(&op.mass).map(|(x, m)| x * x * m).sum::<f64>().sqrt();
            u.iter_mut().for_each(|x| *x /= mn);
            fix_sign(u);
        }
    }
    pairs
}

/// Full dense eigendecomposition of `B`; the first `k` pairs, ascending.
/// Verification oracle for small systems.
pub fn dense_oracle(op: &OperatorPair, k: usize) -> Result<Vec<EigenPair>> {
    let n = op.len();
    if n > DENSE_LIMIT {
        return Err(Error::TooLarge { size: n, limit: DENSE_LIMIT });
    }
    if k == 0 || k > n {
        return Err(Error::InvalidRequest(format!("k = {k} for N = {n}")));
    }
    let b = to_standard(op)?;
    let mut d = Mat::<f64>::zeros(n, n);
    for r in 0..n {
        for (c, val) in b.row(r) {
            d[(r, c)] = val;
        }
    }
    let fail = |e| Error::Factorization(format!("dense eigensolver: {e:?}"));
    let pairs: Vec<EigenPair> = if op.is_symmetric() {
        let e = d.self_adjoint_eigen(Side::Lower).map_err(fail)?;
        let s = e.S().column_vector();
        let u = e.U();
        (0..k)
            .map(|i| {
                let x: Vec<f64> = (0..n).map(|r| u[(r, i)]).collect();
                finish_pair(op, &x, s[i])
            })
            .collect()
    } else {
        let e = d.eigen().map_err(fail)?;
        let s = e.S().column_vector();
        let u = e.U();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| s[a].re.total_cmp(&s[b].re).then(s[a].im.total_cmp(&s[b].im)));
        order[..k]
            .iter()
            .map(|&i| {
                let mut best = 0;
                for r in 0..n {
                    if u[(r, i)].norm() > u[(best, i)].norm() {
                        best = r;
                    }
                }
                let ph = u[(best, i)].conj() / u[(best, i)].norm();
                let x: Vec<f64> = (0..n).map(|r| (u[(r, i)] * ph).re).collect();
                finish_pair(op, &x, s[i].re)
            })
            .collect()
    };
    Ok(finalize(op, pairs))
}

/// `min over signs ‖u − ±v‖_M` for M-normalized vectors.
pub fn m_distance(mass: &[f64], u: &[f64], v: &[f64]) -> f64 {
    let d = |s: f64| u.iter().zip(v).zip(mass).map(|((a, b), m)| (a - s * b).powi(2) * m).sum::<f64>().sqrt();
    d(1.0).min(d(-1.0))
}
