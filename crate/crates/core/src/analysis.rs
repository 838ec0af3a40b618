//! Error measurement against a reference discretization, exponential rate
//! fits, and weighted-seminorm diagnostics.

use std::sync::Arc;

use num_rational::Rational64;
use rayon::prelude::*;

use crate::assembly::{build_dof_map, project_function, DofMap};
use crate::basis::legendre_orthonormal;
use crate::error::{Error, Result};
use crate::faces::{enumerate_faces, Face, FaceSet};
use crate::mesh::{Element, GradedMesh};
use crate::quadrature::{gauss_rule, singular_cell_rule, tensor_rule, QuadratureRule};

/// Mesh, faces and dof layout shared by every solution on that mesh.
#[derive(Clone, Debug)]
pub struct Discretization {
    pub mesh: GradedMesh,
    pub faces: FaceSet,
    pub dofs: DofMap,
}

impl Discretization {
    pub fn new(mesh: GradedMesh) -> Result<Arc<Self>> {
        let faces = enumerate_faces(&mesh)?;
        let dofs = build_dof_map(&mesh);
        Ok(Arc::new(Discretization { mesh, faces, dofs }))
    }
}

/// Parameters a solution was computed with.
#[derive(Clone, Debug, PartialEq)]
pub struct SolutionMeta {
    pub dim: usize,
    pub levels: usize,
    pub slope: Rational64,
    pub p0: usize,
    pub alpha: Rational64,
    pub theta: i32,
    pub penalty: f64,
    pub quad_extra: usize,
    pub shells: usize,
}

#[derive(Clone, Debug)]
pub struct DiscreteSolution {
    pub disc: Arc<Discretization>,
    pub coefficients: Vec<f64>,
    pub lambda: f64,
    pub meta: SolutionMeta,
}

impl DiscreteSolution {
    /// L² projection of `f` (exact for piecewise polynomials of the
    /// element degrees).
    pub fn from_function(disc: Arc<Discretization>, lambda: f64, meta: SolutionMeta, f: impl Fn(&[f64]) -> f64 + Sync) -> Result<Self> {
        let coefficients = project_function(&disc.mesh, &disc.dofs, 2, f)?;
        Ok(DiscreteSolution { disc, coefficients, lambda, meta })
    }

    pub fn dim(&self) -> usize {
        self.disc.mesh.dim
    }

    fn block(&self, element: usize) -> &[f64] {
        &self.coefficients[self.disc.dofs.range(element)]
    }
}

/// Value, gradient and (optionally) Hessian of a local modal expansion at
/// physical point `x` in element `el`. Hessian entries are `[a * d + b]`.
pub struct LocalEval {
    pub value: f64,
    pub grad: [f64; 3],
    pub hess: [f64; 9],
}

pub fn eval_local(el: &Element, dim: usize, coef: &[f64], x: &[f64], want_hess: bool) -> LocalEval {
    let p = el.degree;
    let n1 = p + 1;
    let mut xi = [0.0; 3];
    el.to_reference(x, &mut xi[..dim]);
    let mut v = [[0.0; 32]; 3];
    let mut g = [[0.0; 32]; 3];
    let mut h = [[0.0; 32]; 3];
    for a in 0..dim {
        legendre_orthonormal(p, xi[a], &mut v[a], &mut g[a], &mut h[a]);
    }
    let jac = 2.0 / el.h();
    let mut out = LocalEval { value: 0.0, grad: [0.0; 3], hess: [0.0; 9] };
    let mut idx = [0usize; 3];
    for (i, &c) in coef.iter().enumerate() {
        let mut rem = i;
        for a in (0..dim).rev() {
            idx[a] = rem % n1;
            rem /= n1;
        }
        let f = |a: usize, order: usize| match order {
            0 => v[a][idx[a]],
            1 => g[a][idx[a]],
            _ => h[a][idx[a]],
        };
        let mut val = c;
        for a in 0..dim {
            val *= f(a, 0);
        }
        out.value += val;
        for a in 0..dim {
            let mut gr = c * jac;
            for b in 0..dim {
                gr *= f(b, (a == b) as usize);
            }
            out.grad[a] += gr;
        }
        if want_hess {
            for a in 0..dim {
                for b in 0..dim {
                    let mut hv = c * jac * jac;
                    for e in 0..dim {
                        let order = (a == e) as usize + (b == e) as usize;
                        hv *= f(e, order);
                    }
                    out.hess[a * dim + b] += hv;
                }
            }
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq)]
pub struct Evaluation {
    pub values: Vec<f64>,
    /// Present when requested; one `dim`-vector per point.
    pub gradients: Option<Vec<Vec<f64>>>,
}

/// Point evaluation; each point uses the lowest-id element whose closure
/// contains it.
pub fn evaluate(sol: &DiscreteSolution, points: &[Vec<f64>], gradients: bool) -> Result<Evaluation> {
    let dim = sol.dim();
    let mut values = Vec::with_capacity(points.len());
    let mut grads = Vec::new();
    for x in points {
        let id = sol.disc.mesh.locate_element(x)?;
        let e = eval_local(&sol.disc.mesh.elements[id], dim, sol.block(id), x, false);
        values.push(e.value);
        if gradients {
            grads.push(e.grad[..dim].to_vec());
        }
    }
    Ok(Evaluation { values, gradients: gradients.then_some(grads) })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ErrorNorms {
    pub dg: f64,
    pub l2: f64,
    pub linf: f64,
}

/// For every reference element, the solution-mesh element containing it.
fn containers(sol: &GradedMesh, reference: &GradedMesh) -> Result<Vec<usize>> {
    let dim = sol.dim;
    if reference.dim != dim {
        return Err(Error::NotNested);
    }
    reference
        .elements
        .iter()
        .map(|r| {
            let center: Vec<f64> = (0..dim).map(|a| r.lower[a].to_f64() + 0.5 * r.h()).collect();
            let id = sol.locate_element(&center).map_err(|_| Error::NotNested)?;
            if sol.elements[id].contains_element(r, dim) {
                Ok(id)
            } else {
                Err(Error::NotNested)
            }
        })
        .collect()
}

/// Difference `s·u_sol − Σ c_j u_ref` on the reference mesh; `u_sol` may be a
/// combination of several solutions on the same mesh.
struct Difference<'a> {
    sol_disc: &'a Discretization,
    sol_coef: Vec<f64>,
    reference: &'a DiscreteSolution,
    container: Vec<usize>,
}

impl Difference<'_> {
    fn at(&self, ref_el: usize, x: &[f64]) -> (f64, [f64; 3]) {
        let dim = self.reference.dim();
        let re = &self.reference.disc.mesh.elements[ref_el];
        let se_id = self.container[ref_el];
        let se = &self.sol_disc.mesh.elements[se_id];
        let us = eval_local(se, dim, &self.sol_coef[self.sol_disc.dofs.range(se_id)], x, false);
        let ur = eval_local(re, dim, self.reference.block(ref_el), x, false);
        let mut g = [0.0; 3];
        for a in 0..dim {
            g[a] = us.grad[a] - ur.grad[a];
        }
        (us.value - ur.value, g)
    }

    fn order(&self, ref_el: usize) -> usize {
        let re = &self.reference.disc.mesh.elements[ref_el];
        let se = &self.sol_disc.mesh.elements[self.container[ref_el]];
        re.degree.max(se.degree) + 2
    }
}

/// `(f, g)_{L²}` of a solution-mesh expansion and the reference, on the
/// reference mesh.
fn cross_inner(sol_disc: &Discretization, sol_coef: &[f64], reference: &DiscreteSolution, container: &[usize]) -> Result<f64> {
    let dim = reference.dim();
    let parts: Vec<f64> = reference
        .disc
        .mesh
        .elements
        .par_iter()
        .map(|re| {
            let se = &sol_disc.mesh.elements[container[re.id]];
            let rule = tensor_rule(&gauss_rule(re.degree.max(se.degree) + 2)?, dim);
            let vol = (0.5 * re.h()).powi(dim as i32);
            let mut x = vec![0.0; dim];
            let mut s = 0.0;
            for q in 0..rule.len() {
                re.from_reference(rule.point(q), &mut x);
                let a = eval_local(se, dim, &sol_coef[sol_disc.dofs.range(se.id)], &x, false).value;
                let b = eval_local(re, dim, reference.block(re.id), &x, false).value;
                s += rule.weights[q] * vol * a * b;
            }
            Ok(s)
        })
        .collect::<Result<_>>()?;
    Ok(parts.iter().sum())
}

fn face_points(face: &Face, dim: usize, rule: &QuadratureRule) -> Vec<Vec<f64>> {
    let half = 0.5 * face.size.to_f64();
    (0..rule.len())
        .map(|q| {
            let t = rule.point(q);
            let mut k = 0;
            (0..dim)
                .map(|a| {
                    if a == face.axis {
                        face.lower[a].to_f64()
                    } else {
                        let v = face.lower[a].to_f64() + half * (t[k] + 1.0);
                        k += 1;
                        v
                    }
                })
                .collect()
        })
        .collect()
}

fn norms_of(diff: &Difference) -> Result<ErrorNorms> {
    let reference = diff.reference;
    let mesh = &reference.disc.mesh;
    let dim = mesh.dim;
    // (‖e‖², ‖∇e‖², max|e|) per reference element.
    let vol_parts: Vec<(f64, f64, f64)> = mesh
        .elements
        .par_iter()
        .map(|re| {
            let rule = tensor_rule(&gauss_rule(diff.order(re.id))?, dim);
            let vol = (0.5 * re.h()).powi(dim as i32);
            let mut x = vec![0.0; dim];
            let (mut l2, mut h1, mut mx) = (0.0f64, 0.0f64, 0.0f64);
            for q in 0..rule.len() {
                re.from_reference(rule.point(q), &mut x);
                let (e, g) = diff.at(re.id, &x);
                l2 += rule.weights[q] * vol * e * e;
                h1 += rule.weights[q] * vol * g[..dim].iter().map(|v| v * v).sum::<f64>();
                mx = mx.max(e.abs());
            }
            for corner in 0..(1usize << dim) {
                for (a, xa) in x.iter_mut().enumerate() {
                    *xa = re.lower[a].to_f64() + if corner >> a & 1 == 1 { re.h() } else { 0.0 };
                }
                mx = mx.max(diff.at(re.id, &x).0.abs());
            }
            Ok((l2, h1, mx))
        })
        .collect::<Result<_>>()?;
    let faces: Vec<&Face> = reference.disc.faces.iter().collect();
    let jump_parts: Vec<f64> = faces
        .par_iter()
        .map(|f| {
            let n = diff.order(f.owner).max(f.neighbor.map_or(0, |nb| diff.order(nb)));
            let rule = tensor_rule(&gauss_rule(n)?, dim - 1);
            let w = (0.5 * f.size.to_f64()).powi(dim as i32 - 1);
            let sigma = (f.p_e * f.p_e) as f64 / f.h_e.to_f64();
            let mut s = 0.0;
            for (q, x) in face_points(f, dim, &rule).iter().enumerate() {
                let mut jump = diff.at(f.owner, x).0;
                if let Some(nb) = f.neighbor {
                    jump -= diff.at(nb, x).0;
                }
                s += rule.weights[q] * w * sigma * jump * jump;
            }
            Ok(s)
        })
        .collect::<Result<_>>()?;
    let l2: f64 = vol_parts.iter().map(|p| p.0).sum();
    let h1: f64 = vol_parts.iter().map(|p| p.1).sum();
    let linf = vol_parts.iter().fold(0.0f64, |m, p| m.max(p.2));
    let jump: f64 = jump_parts.iter().sum();
    Ok(ErrorNorms { dg: (l2 + h1 + jump).sqrt(), l2: l2.sqrt(), linf })
}

/// DG, L² and sampled L∞ norms of `sol − ref` on the reference mesh, after
/// flipping `sol` so that `(sol, ref) ≥ 0`.
pub fn error_norms(sol: &DiscreteSolution, reference: &DiscreteSolution) -> Result<ErrorNorms> {
    let container = containers(&sol.disc.mesh, &reference.disc.mesh)?;
    let ip = cross_inner(&sol.disc, &sol.coefficients, reference, &container)?;
    let s = if ip < 0.0 { -1.0 } else { 1.0 };
    let diff = Difference {
        sol_disc: &sol.disc,
        sol_coef: sol.coefficients.iter().map(|c| s * c).collect(),
        reference,
        container,
    };
    norms_of(&diff)
}

/// Errors of the reference vector against its L² projection onto the span
/// of a computed eigencluster (M-orthonormal solutions on one mesh).
pub fn cluster_error_norms(cluster: &[DiscreteSolution], reference: &DiscreteSolution) -> Result<ErrorNorms> {
    let first = cluster.first().ok_or_else(|| Error::InvalidRequest("empty eigencluster".into()))?;
    let container = containers(&first.disc.mesh, &reference.disc.mesh)?;
    let mut combo = vec![0.0; first.coefficients.len()];
    for u in cluster {
        if !Arc::ptr_eq(&u.disc, &first.disc) {
            return Err(Error::InvalidRequest("cluster members must share a mesh".into()));
        }
        let c = cross_inner(&u.disc, &u.coefficients, reference, &container)?;
        combo.iter_mut().zip(&u.coefficients).for_each(|(a, b)| *a += c * b);
    }
    norms_of(&Difference { sol_disc: &first.disc, sol_coef: combo, reference, container })
}

pub fn eigenvalue_error(sol: &DiscreteSolution, reference: &DiscreteSolution) -> f64 {
    (sol.lambda - reference.lambda).abs()
}

/// Index-wise errors of two ascending eigenvalue lists.
pub fn eigenvalue_errors(sol: &[f64], reference: &[f64]) -> Result<Vec<f64>> {
    if sol.len() != reference.len() {
        return Err(Error::IndexMismatch(sol.len(), reference.len()));
    }
    Ok(sol.iter().zip(reference).map(|(a, b)| (a - b).abs()).collect())
}

#[derive(Clone, Debug, PartialEq)]
pub struct StudyRecord {
    pub n: usize,
    pub levels: usize,
    pub lambda: f64,
    pub err_dg: f64,
    pub err_l2: f64,
    pub err_linf: f64,
    pub err_lambda: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ErrorField {
    Dg,
    L2,
    Linf,
    Lambda,
}

impl ErrorField {
    pub const ALL: [ErrorField; 4] = [ErrorField::Dg, ErrorField::L2, ErrorField::Linf, ErrorField::Lambda];

    pub fn column(self) -> &'static str {
        match self {
            ErrorField::Dg => "err_dg",
            ErrorField::L2 => "err_l2",
            ErrorField::Linf => "err_linf",
            ErrorField::Lambda => "err_lambda",
        }
    }

    pub fn of(self, r: &StudyRecord) -> f64 {
        match self {
            ErrorField::Dg => r.err_dg,
            ErrorField::L2 => r.err_l2,
            ErrorField::Linf => r.err_linf,
            ErrorField::Lambda => r.err_lambda,
        }
    }
}

impl std::str::FromStr for ErrorField {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ErrorField::ALL
            .into_iter()
            .find(|f| f.column() == s || f.column().trim_start_matches("err_") == s)
            .ok_or_else(|| Error::InvalidRequest(format!("unknown error field {s:?}")))
    }
}

pub const DEFAULT_PLATEAU: f64 = 1e-11;

/// `ln err ≈ ln C − b N^(1/(d+1))`.
#[derive(Clone, Debug, PartialEq)]
pub struct RateFit {
    pub b: f64,
    pub c: f64,
    pub r_squared: f64,
    pub points_used: usize,
    pub plateau_threshold: f64,
}

/// Least-squares exponential fit over the pre-plateau records: sorted by
/// `N`, errors above `plateau_threshold`, cut at the first record that does
/// not improve on its predecessor by at least 2%.
pub fn fit_rate(records: &[StudyRecord], field: ErrorField, dim: usize, plateau_threshold: f64) -> Result<RateFit> {
    let mut sorted: Vec<&StudyRecord> = records.iter().collect();
    sorted.sort_by(|a, b| {
        a.n.cmp(&b.n)
            .then(a.levels.cmp(&b.levels))
            .then(field.of(a).total_cmp(&field.of(b)))
    });
    let above: Vec<(f64, f64)> = sorted
        .iter()
        .map(|r| (r.n as f64, field.of(r)))
        .filter(|&(_, e)| e > plateau_threshold && e.is_finite())
        .collect();
    let mut used: Vec<(f64, f64)> = Vec::with_capacity(above.len());
    for (n, e) in above {
        if let Some(&(_, prev)) = used.last() {
            if e > 0.98 * prev {
                break;
            }
        }
        used.push((n, e));
    }
    if used.len() < 3 {
        return Err(Error::TooFewPoints(used.len()));
    }
    let power = 1.0 / (dim as f64 + 1.0);
    let xs: Vec<f64> = used.iter().map(|(n, _)| n.powf(power)).collect();
    let ys: Vec<f64> = used.iter().map(|(_, e)| e.ln()).collect();
    let m = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / m;
    let my = ys.iter().sum::<f64>() / m;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_tot: f64 = ys.iter().map(|y| (y - my) * (y - my)).sum();
    let ss_res: f64 = xs.iter().zip(&ys).map(|(x, y)| (y - intercept - slope * x).powi(2)).sum();
    let r_squared = if ss_tot > 0.0 { (1.0 - ss_res / ss_tot).clamp(0.0, 1.0) } else { 1.0 };
    Ok(RateFit { b: -slope, c: intercept.exp(), r_squared, points_used: used.len(), plateau_threshold })
}

/// Multi-indices of order `s` in `dim` variables (unordered derivatives).
fn multi_indices(dim: usize, s: usize) -> Vec<[usize; 3]> {
    let mut out = Vec::new();
    let mut idx = [0usize; 3];
    fn rec(a: usize, dim: usize, left: usize, idx: &mut [usize; 3], out: &mut Vec<[usize; 3]>) {
        if a + 1 == dim {
            idx[a] = left;
            out.push(*idx);
            return;
        }
        for k in (0..=left).rev() {
            idx[a] = k;
            rec(a + 1, dim, left - k, idx, out);
        }
    }
    rec(0, dim, s, &mut idx, &mut out);
    out
}

/// `Σ_{|β|=s} ‖r^(s−γ) ∂^β u‖²_{L²}`; origin elements use the singular rule
/// for the radial weight `r^(2(s−γ))`.
pub fn weighted_seminorm(sol: &DiscreteSolution, gamma: f64, s: usize, shells: usize) -> Result<f64> {
    if s > 2 {
        return Err(Error::InvalidRequest(format!("derivative order {s} > 2")));
    }
    let dim = sol.dim();
    let weight_alpha = 2.0 * (gamma - s as f64);
    if weight_alpha >= dim as f64 {
        return Err(Error::NonIntegrable { alpha: weight_alpha, dim });
    }
    let betas = multi_indices(dim, s);
    let parts: Vec<f64> = sol
        .disc
        .mesh
        .elements
        .par_iter()
        .map(|el| {
            let n = el.degree + 3;
            let rule = if el.touches_origin && weight_alpha != 0.0 {
                let flip: Vec<bool> = (0..dim).map(|a| el.lower[a] < crate::dyadic::Dyadic::ZERO).collect();
                singular_cell_rule(n, dim, weight_alpha, shells)?.reflected(&flip)
            } else {
                tensor_rule(&gauss_rule(n)?, dim)
            };
            let vol = (0.5 * el.h()).powi(dim as i32);
            let mut x = vec![0.0; dim];
            let mut acc = 0.0;
            for q in 0..rule.len() {
                el.from_reference(rule.point(q), &mut x);
                let e = eval_local(el, dim, sol.block(el.id), &x, s == 2);
                let r2: f64 = x.iter().map(|v| v * v).sum();
                let w = if weight_alpha == 0.0 { 1.0 } else { r2.powf(-0.5 * weight_alpha) };
                let mut d2 = 0.0;
                for beta in &betas {
                    let v = match s {
                        0 => e.value,
                        1 => e.grad[beta.iter().position(|&k| k == 1).unwrap()],
                        _ => {
                            let mut ab = beta[..dim].iter().enumerate().flat_map(|(a, &k)| std::iter::repeat_n(a, k));
                            let (a, b) = (ab.next().unwrap(), ab.next().unwrap());
                            e.hess[a * dim + b]
                        }
                    };
                    d2 += v * v;
                }
                acc += rule.weights[q] * vol * w * d2;
            }
            Ok(acc)
        })
        .collect::<Result<_>>()?;
    Ok(parts.iter().sum())
}
