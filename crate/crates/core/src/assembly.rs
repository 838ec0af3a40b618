//! Interior penalty DG operator and diagonal mass matrix.
//!
//! With the orthonormal modal basis, mass and stiffness are exact and
//! separable; only the potential `r^-α` needs volume quadrature. Face
//! terms are integrated on the fine side of every junction.

use std::collections::HashMap;

use num_rational::Rational64;
use num_traits::{ToPrimitive, Zero};
use rayon::prelude::*;

use crate::basis::{ReferenceBasis, Table1d};
use crate::error::{Error, Result};
use crate::faces::{Face, FaceSet};
use crate::mesh::{Element, GradedMesh};
use crate::quadrature::{gauss_rule, singular_cell_rule, tensor_rule, QuadratureRule};
use crate::sparse::{BlockSparse, CsrMatrix};

/// Contiguous per-element coefficient blocks, ordered by element id.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DofMap {
    pub offsets: Vec<usize>,
    pub sizes: Vec<usize>,
    pub n: usize,
}

impl DofMap {
    pub fn range(&self, element: usize) -> std::ops::Range<usize> {
        self.offsets[element]..self.offsets[element] + self.sizes[element]
    }
}

pub fn build_dof_map(mesh: &GradedMesh) -> DofMap {
    let d = mesh.dim as u32;
    let sizes: Vec<usize> = mesh.elements.iter().map(|e| (e.degree + 1).pow(d)).collect();
    let mut offsets = Vec::with_capacity(sizes.len());
    let mut n = 0;
    for s in &sizes {
        offsets.push(n);
        n += s;
    }
    DofMap { offsets, sizes, n }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AssemblyConfig {
    /// 1 symmetric, -1 non-symmetric, 0 incomplete interior penalty.
    pub theta: i32,
    /// Global penalty constant `α₀`.
    pub penalty: f64,
    /// Potential exponent; `V = r^-alpha + potential_shift`.
    pub alpha: Rational64,
    /// Extra Gauss points per direction beyond `p + 1`.
    pub quad_extra: usize,
    /// Dyadic shells on origin elements.
    pub shells: usize,
    pub potential_shift: f64,
}

impl Default for AssemblyConfig {
    fn default() -> Self {
        AssemblyConfig {
            theta: 1,
            penalty: 10.0,
            alpha: Rational64::zero(),
            quad_extra: 2,
            shells: 10,
            potential_shift: 0.0,
        }
    }
}

/// `A u = λ M u` with `M` stored as its diagonal.
#[derive(Clone, Debug)]
pub struct OperatorPair {
    pub a: CsrMatrix,
    pub mass: Vec<f64>,
    pub theta: i32,
    pub penalty: f64,
    pub alpha: Rational64,
}

impl OperatorPair {
    pub fn len(&self) -> usize {
        self.mass.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mass.is_empty()
    }

    pub fn is_symmetric(&self) -> bool {
        self.theta == 1
    }
}

/// `M_ii = (h_K/2)^d` on element `K`'s block.
pub fn assemble_mass(mesh: &GradedMesh, dofs: &DofMap) -> Vec<f64> {
    let mut m = vec![0.0; dofs.n];
    for e in &mesh.elements {
        let v = (0.5 * e.h()).powi(mesh.dim as i32);
        m[dofs.range(e.id)].iter_mut().for_each(|x| *x = v);
    }
    m
}

/// `S[k][l] = ∫_{-1}^{1} L_k' L_l'`, exact with `p + 1` Gauss points.
pub fn stiffness_1d(p: usize) -> Vec<f64> {
    let rule = gauss_rule(p + 1).expect("degree within Gauss range");
    let t = Table1d::new(p, &rule.points);
    let mut s = vec![0.0; (p + 1) * (p + 1)];
    for k in 0..=p {
        for l in 0..=p {
            s[k * (p + 1) + l] = (0..rule.len()).map(|q| rule.weights[q] * t.der(k, q) * t.der(l, q)).sum();
        }
    }
    s
}

/// Element stiffness `∫_K ∇φ_i·∇φ_j = (h/2)^(d-2) Σ_a S ⊗ I`.
fn element_stiffness(basis: &ReferenceBasis, s1: &[f64], h: f64) -> Vec<f64> {
    let nb = basis.size();
    let d = basis.dim;
    let n1 = basis.degree + 1;
    let scale = (0.5 * h).powi(d as i32 - 2);
    let mut k = vec![0.0; nb * nb];
    for (i, ii) in basis.indices.iter().enumerate() {
        for (j, jj) in basis.indices.iter().enumerate() {
            let mut v = 0.0;
            for a in 0..d {
                if (0..d).all(|b| b == a || ii[b] == jj[b]) {
                    v += s1[ii[a] * n1 + jj[a]];
                }
            }
            k[i * nb + j] = scale * v;
        }
    }
    k
}

/// `∫_K r^-α φ_i φ_j`; origin elements use the singular rule reflected so
/// its singular vertex lands on the origin.
fn element_potential(el: &Element, basis: &ReferenceBasis, dim: usize, alpha: f64, cfg: &AssemblyConfig) -> Result<Vec<f64>> {
    let nb = basis.size();
    let vol = (0.5 * el.h()).powi(dim as i32);
    if alpha == 0.0 {
        let mut b = vec![0.0; nb * nb];
        (0..nb).for_each(|i| b[i * nb + i] = vol);
        return Ok(b);
    }
    let n = el.degree + 1 + cfg.quad_extra;
    let rule: QuadratureRule = if el.touches_origin {
        let flip: Vec<bool> = (0..dim).map(|a| el.lower[a] < crate::dyadic::Dyadic::ZERO).collect();
        singular_cell_rule(n, dim, alpha, cfg.shells)?.reflected(&flip)
    } else {
        tensor_rule(&gauss_rule(n)?, dim)
    };
    let pts = rule.point_list();
    let table = basis.eval(&pts);
    let mut x = vec![0.0; dim];
    let wv: Vec<f64> = pts
        .iter()
        .zip(&rule.weights)
        .map(|(xi, w)| {
            el.from_reference(xi, &mut x);
            let r = x.iter().map(|v| v * v).sum::<f64>().sqrt();
            w * vol * r.powf(-alpha)
        })
        .collect();
    let mut b = vec![0.0; nb * nb];
    for i in 0..nb {
        for j in i..nb {
            let v: f64 = (0..rule.len()).map(|q| wv[q] * table.value(i, q) * table.value(j, q)).sum();
            b[i * nb + j] = v;
            b[j * nb + i] = v;
        }
    }
    if b.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteQuadrature(el.id));
    }
    Ok(b)
}

fn alpha_f64(alpha: Rational64) -> f64 {
    alpha.to_f64().unwrap_or(f64::NAN)
}

/// Block-diagonal stiffness plus potential (including the constant shift).
pub fn assemble_volume(mesh: &GradedMesh, dofs: &DofMap, cfg: &AssemblyConfig) -> Result<CsrMatrix> {
    let dim = mesh.dim;
    let alpha = alpha_f64(cfg.alpha);
    if !(0.0..dim as f64).contains(&alpha) {
        return Err(Error::NonIntegrable { alpha, dim });
    }
    let mut bases: HashMap<usize, (ReferenceBasis, Vec<f64>)> = HashMap::new();
    for e in &mesh.elements {
        bases.entry(e.degree).or_insert_with(|| (ReferenceBasis::new(e.degree, dim), stiffness_1d(e.degree)));
    }
    let blocks: Vec<Vec<f64>> = mesh
        .elements
        .par_iter()
        .map(|el| {
            let (basis, s1) = &bases[&el.degree];
            let mut k = element_stiffness(basis, s1, el.h());
            let v = element_potential(el, basis, dim, alpha, cfg)?;
            let nb = basis.size();
            let shift = cfg.potential_shift * (0.5 * el.h()).powi(dim as i32);
            for (i, (kv, vv)) in k.iter_mut().zip(&v).enumerate() {
                *kv += vv;
                if shift != 0.0 && i % (nb + 1) == 0 {
                    *kv += shift;
                }
            }
            Ok(k)
        })
        .collect::<Result<_>>()?;
    let mut acc = BlockSparse::default();
    for (id, b) in blocks.iter().enumerate() {
        acc.add_block(id, id, b);
    }
    Ok(acc.to_csr(&dofs.offsets, &dofs.sizes, dofs.n))
}

/// Face contributions split by term. The full face matrix is
/// `consistency + θ·consistencyᵀ + α₀·penalty`, where
/// `consistency_ij = -∫ ⟨∂_n φ_j⟩ [φ_i]` and `penalty_ij = ∫ p_e²/h_e [φ_j][φ_i]`.
#[derive(Clone, Debug)]
pub struct FaceTerms {
    pub consistency: CsrMatrix,
    pub penalty: CsrMatrix,
}

impl FaceTerms {
    pub fn combine(&self, theta: i32, penalty: f64) -> CsrMatrix {
        self.consistency
            .add_scaled(&self.consistency.transpose(), theta as f64)
            .add_scaled(&self.penalty, penalty)
    }
}

/// Traces on a face for one element: values and normal derivatives
/// (w.r.t. the owner's outward normal) of every basis function.
struct Trace {
    element: usize,
    nb: usize,
    vals: Vec<f64>,
    dn: Vec<f64>,
}

fn face_traces(mesh: &GradedMesh, face: &Face, rule: &QuadratureRule, el: &Element) -> Trace {
    let dim = mesh.dim;
    let basis = ReferenceBasis::new(el.degree, dim);
    let half = 0.5 * face.size.to_f64();
    let mut x = vec![0.0; dim];
    let mut xi = vec![0.0; dim];
    let pts: Vec<Vec<f64>> = (0..rule.len())
        .map(|q| {
            let t = rule.point(q);
            let mut k = 0;
            for (a, xa) in x.iter_mut().enumerate() {
                if a == face.axis {
                    *xa = face.lower[a].to_f64();
                } else {
                    *xa = face.lower[a].to_f64() + half * (t[k] + 1.0);
                    k += 1;
                }
            }
            el.to_reference(&x, &mut xi);
            xi.clone()
        })
        .collect();
    let table = basis.eval(&pts);
    let nb = basis.size();
    let nq = rule.len();
    let dscale = 2.0 / el.h() * face.normal_sign as f64;
    let mut vals = vec![0.0; nb * nq];
    let mut dn = vec![0.0; nb * nq];
    for i in 0..nb {
        for q in 0..nq {
            vals[i * nq + q] = table.value(i, q);
            dn[i * nq + q] = dscale * table.grad(i, q, face.axis);
        }
    }
    Trace { element: el.id, nb, vals, dn }
}

/// Local contributions of one face: `(row element, col element, consistency, penalty)`.
type FaceBlocks = Vec<(usize, usize, Vec<f64>, Vec<f64>)>;

fn face_blocks(mesh: &GradedMesh, face: &Face, quad_extra: usize) -> Result<FaceBlocks> {
    let dim = mesh.dim;
    let n = face.p_e + 1 + quad_extra;
    let rule = tensor_rule(&gauss_rule(n)?, dim - 1);
    let wscale = (0.5 * face.size.to_f64()).powi(dim as i32 - 1);
    let sigma = (face.p_e * face.p_e) as f64 / face.h_e.to_f64();
    let nq = rule.len();

    // Jump sign and average weight per side.
    let mut sides = vec![(face_traces(mesh, face, &rule, &mesh.elements[face.owner]), 1.0, 1.0)];
    if let Some(nb) = face.neighbor {
        sides[0].2 = 0.5;
        sides.push((face_traces(mesh, face, &rule, &mesh.elements[nb]), -1.0, 0.5));
    }
    let mut out = Vec::with_capacity(sides.len() * sides.len());
    for (ti, si, _) in &sides {
        for (tj, sj, aj) in &sides {
            let mut c = vec![0.0; ti.nb * tj.nb];
            let mut p = vec![0.0; ti.nb * tj.nb];
            for i in 0..ti.nb {
                for j in 0..tj.nb {
                    let (mut cv, mut pv) = (0.0, 0.0);
                    for q in 0..nq {
                        let w = rule.weights[q] * wscale;
                        let ji = si * ti.vals[i * nq + q];
                        let jj = sj * tj.vals[j * nq + q];
                        let dj = aj * tj.dn[j * nq + q];
                        cv -= w * dj * ji;
                        pv += w * sigma * ji * jj;
                    }
                    c[i * tj.nb + j] = cv;
                    p[i * tj.nb + j] = pv;
                }
            }
            out.push((ti.element, tj.element, c, p));
        }
    }
    Ok(out)
}

pub fn assemble_face_terms(mesh: &GradedMesh, faces: &FaceSet, dofs: &DofMap, quad_extra: usize) -> Result<FaceTerms> {
    let all: Vec<&Face> = faces.iter().collect();
    let per_face: Vec<FaceBlocks> = all.par_iter().map(|f| face_blocks(mesh, f, quad_extra)).collect::<Result<_>>()?;
    let mut c = BlockSparse::default();
    let mut p = BlockSparse::default();
    for blocks in &per_face {
        for (r, col, cb, pb) in blocks {
            c.add_block(*r, *col, cb);
            p.add_block(*r, *col, pb);
        }
    }
    Ok(FaceTerms {
        consistency: c.to_csr(&dofs.offsets, &dofs.sizes, dofs.n),
        penalty: p.to_csr(&dofs.offsets, &dofs.sizes, dofs.n),
    })
}

pub fn assemble_faces(mesh: &GradedMesh, faces: &FaceSet, dofs: &DofMap, theta: i32, penalty: f64, quad_extra: usize) -> Result<CsrMatrix> {
    Ok(assemble_face_terms(mesh, faces, dofs, quad_extra)?.combine(theta, penalty))
}

pub fn assemble_operator(mesh: &GradedMesh, faces: &FaceSet, dofs: &DofMap, cfg: &AssemblyConfig) -> Result<OperatorPair> {
    if !(-1..=1).contains(&cfg.theta) {
        return Err(Error::InvalidRequest(format!("theta must be -1, 0 or 1, got {}", cfg.theta)));
    }
    if !(cfg.penalty > 0.0) {
        return Err(Error::InvalidRequest(format!("penalty must be positive, got {}", cfg.penalty)));
    }
    let vol = assemble_volume(mesh, dofs, cfg)?;
    let fac = assemble_faces(mesh, faces, dofs, cfg.theta, cfg.penalty, cfg.quad_extra)?;
    Ok(OperatorPair {
        a: vol.add_scaled(&fac, 1.0),
        mass: assemble_mass(mesh, dofs),
        theta: cfg.theta,
        penalty: cfg.penalty,
        alpha: cfg.alpha,
    })
}

/// L² projection of `f` onto the discrete space, element by element, with
/// `p + 1 + extra` Gauss points per direction.
pub fn project_function(mesh: &GradedMesh, dofs: &DofMap, extra: usize, f: impl Fn(&[f64]) -> f64 + Sync) -> Result<Vec<f64>> {
    let dim = mesh.dim;
    let blocks: Vec<Vec<f64>> = mesh
        .elements
        .par_iter()
        .map(|el| {
            let basis = ReferenceBasis::new(el.degree, dim);
            let rule = tensor_rule(&gauss_rule(el.degree + 1 + extra)?, dim);
            let pts = rule.point_list();
            let table = basis.eval(&pts);
            let mut x = vec![0.0; dim];
            let fw: Vec<f64> = pts
                .iter()
                .zip(&rule.weights)
                .map(|(xi, w)| {
                    el.from_reference(xi, &mut x);
                    w * f(&x)
                })
                .collect();
            // The physical volume factor cancels against the mass entry.
            Ok((0..basis.size()).map(|i| (0..rule.len()).map(|q| fw[q] * table.value(i, q)).sum()).collect())
        })
        .collect::<Result<_>>()?;
    let u = blocks.concat();
    debug_assert_eq!(u.len(), dofs.n);
    Ok(u)
}
