//! Gauss–Legendre rules, their tensor products, and composite rules for
//! cells with a singular vertex.

use crate::error::{Error, Result};

pub const MAX_GAUSS_POINTS: usize = 64;

/// Points (flat, `dim` coordinates each) and weights on `[-1, 1]^dim`.
#[derive(Clone, Debug, PartialEq)]
pub struct QuadratureRule {
    pub dim: usize,
    pub points: Vec<f64>,
    pub weights: Vec<f64>,
    /// Per-direction polynomial degree integrated exactly.
    pub exactness: usize,
}

impl QuadratureRule {
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn point(&self, q: usize) -> &[f64] {
        &self.points[q * self.dim..(q + 1) * self.dim]
    }

    pub fn point_list(&self) -> Vec<Vec<f64>> {
        self.points.chunks(self.dim).map(|c| c.to_vec()).collect()
    }

    /// Reflects the given axes, `x -> -x`.
    pub fn reflected(&self, flip: &[bool]) -> QuadratureRule {
        let mut r = self.clone();
        for pt in r.points.chunks_mut(self.dim) {
            for (x, &f) in pt.iter_mut().zip(flip) {
                if f {
                    *x = -*x;
                }
            }
        }
        r
    }

    pub fn integrate(&self, f: impl Fn(&[f64]) -> f64) -> f64 {
        (0..self.len()).map(|q| self.weights[q] * f(self.point(q))).sum()
    }
}

/// `n`-point Gauss–Legendre rule on `[-1, 1]`, nodes ascending.
pub fn gauss_rule(n: usize) -> Result<QuadratureRule> {
    if !(1..=MAX_GAUSS_POINTS).contains(&n) {
        return Err(Error::QuadratureOrder(n));
    }
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let nf = n as f64;
    for i in 0..n.div_ceil(2) {
        // Chebyshev-like initial guess for the i-th largest root.
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, x);
        if d.is_finite() {
            dp = d;
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    Ok(QuadratureRule { dim: 1, points: nodes, weights, exactness: 2 * n - 1 })
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 1..n {
        let kf = k as f64;
        let p2 = ((2.0 * kf + 1.0) * x * p1 - kf * p0) / (kf + 1.0);
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Tensor product of a 1D rule with itself, first axis slowest.
pub fn tensor_rule(rule: &QuadratureRule, dim: usize) -> QuadratureRule {
    let n = rule.len();
    let total = n.pow(dim as u32);
    let mut points = Vec::with_capacity(total * dim);
    let mut weights = Vec::with_capacity(total);
    for i in 0..total {
        let mut rem = i;
        let mut idx = [0usize; 3];
        for a in (0..dim).rev() {
            idx[a] = rem % n;
            rem /= n;
        }
        let mut w = 1.0;
        for &k in idx.iter().take(dim) {
            points.push(rule.points[k]);
            w *= rule.weights[k];
        }
        weights.push(w);
    }
    QuadratureRule { dim, points, weights, exactness: rule.exactness }
}

/// Composite rule on `[-1, 1]^dim` for integrands `r^-alpha g` with `g`
/// smooth and `r` the distance to the vertex `(-1, ..., -1)`.
///
/// In unit coordinates the cell is cut into `shells - 1` dyadic L-shaped
/// shells `[0, 2^-i]^d \ [0, 2^-(i+1)]^d`, each split into `2^d - 1` cubes,
/// plus the corner cube `[0, 2^-(shells-1)]^d`. Every cube carries an
/// `n`-point tensor Gauss rule. The corner-cube weights are scaled by the
/// constant that makes the rule exact for `r^-alpha` itself; by homogeneity
/// that constant does not depend on the cube size. With `shells == 1` the
/// plain tensor Gauss rule is returned. No point touches the vertex.
pub fn singular_cell_rule(n: usize, dim: usize, alpha: f64, shells: usize) -> Result<QuadratureRule> {
    if alpha >= dim as f64 {
        return Err(Error::NonIntegrable { alpha, dim });
    }
    if shells < 1 {
        return Err(Error::Config("singular rule needs at least one shell".into()));
    }
    let base = tensor_rule(&gauss_rule(n)?, dim);
    if shells == 1 {
        return Ok(base);
    }
    let mut points = Vec::new();
    let mut weights = Vec::new();
    let mut corner = vec![0.0; dim];
    for i in 0..shells - 1 {
        let s = 0.5f64.powi(i as i32 + 1);
        for mask in 1..(1usize << dim) {
            for (a, c) in corner.iter_mut().enumerate() {
                *c = if mask >> a & 1 == 1 { s } else { 0.0 };
            }
            push_cube(&base, &corner, s, 1.0, &mut points, &mut weights);
        }
    }
    let inner = 0.5f64.powi(shells as i32 - 1);
    corner.iter_mut().for_each(|c| *c = 0.0);
    let (c0, c1) = corner_correction(&base, dim, alpha)?;
    let start = weights.len();
    push_cube(&base, &corner, inner, 1.0, &mut points, &mut weights);
    for q in 0..base.len() {
        let lin: f64 = base.point(q).iter().map(|z| 0.5 * (z + 1.0)).sum();
        weights[start + q] *= c0 + c1 * lin;
    }
    Ok(QuadratureRule { dim, points, weights, exactness: base.exactness })
}

/// Appends `base` mapped to the unit-coordinate cube `[corner, corner + s]`,
/// expressed back in `xi = 2t - 1`.
fn push_cube(base: &QuadratureRule, corner: &[f64], s: f64, factor: f64, points: &mut Vec<f64>, weights: &mut Vec<f64>) {
    let scale = s.powi(base.dim as i32) * factor;
    for q in 0..base.len() {
        for (a, &z) in base.point(q).iter().enumerate() {
            points.push(2.0 * (corner[a] + 0.5 * s * (z + 1.0)) - 1.0);
        }
        weights.push(base.weights[q] * scale);
    }
}

/// Weight modulation `c0 + c1·Σ_a t_a` on the unit corner cube that makes
/// the tensor Gauss rule exact for `r^-alpha` and `t_a r^-alpha`. Exact
/// values come from the geometric series of dyadic shells (both integrands
/// are homogeneous), with the first shell integrated by a high-order rule on
/// which they are analytic. Smooth factors are then integrated with an
/// error quadratic in the cube size.
fn corner_correction(base: &QuadratureRule, dim: usize, alpha: f64) -> Result<(f64, f64)> {
    if alpha == 0.0 {
        return Ok((1.0, 0.0));
    }
    let f = |t: &[f64]| t.iter().map(|v| v * v).sum::<f64>().sqrt().powf(-alpha);
    let unit = |x: &[f64]| x.iter().map(|v| 0.5 * (v + 1.0)).collect::<Vec<_>>();
    let hi = tensor_rule(&gauss_rule(24)?, dim);
    let (mut s0, mut s1) = (0.0, 0.0);
    for mask in 1..(1usize << dim) {
        let shift = |x: &[f64]| -> Vec<f64> {
            (0..dim).map(|a| 0.5 * (mask >> a & 1) as f64 + 0.25 * (x[a] + 1.0)).collect()
        };
        let w = 0.5f64.powi(2 * dim as i32);
        s0 += w * hi.integrate(|x| f(&shift(x)));
        s1 += w * hi.integrate(|x| {
            let t = shift(x);
            t[0] * f(&t)
        });
    }
    let e0 = s0 / (1.0 - 0.5f64.powf(dim as f64 - alpha));
    let e1 = s1 / (1.0 - 0.5f64.powf(dim as f64 + 1.0 - alpha));
    let vol = 0.5f64.powi(dim as i32);
    let sum_t = |t: &[f64]| t.iter().sum::<f64>();
    let g00 = vol * base.integrate(|x| f(&unit(x)));
    let g01 = vol * base.integrate(|x| {
        let t = unit(x);
        sum_t(&t) * f(&t)
    });
    let g10 = vol * base.integrate(|x| {
        let t = unit(x);
        t[0] * f(&t)
    });
    let g11 = vol * base.integrate(|x| {
        let t = unit(x);
        t[0] * sum_t(&t) * f(&t)
    });
    let det = g00 * g11 - g01 * g10;
    Ok(((e0 * g11 - g01 * e1) / det, (g00 * e1 - g10 * e0) / det))
}
