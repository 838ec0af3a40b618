//! Tensor-product L²-orthonormal Legendre bases on `[-1, 1]^d`.

/// Values, first and second derivatives of the orthonormal Legendre
/// polynomials `L_0..=L_p` at `x`, where `L_k = sqrt((2k+1)/2) P_k`.
pub fn legendre_orthonormal(p: usize, x: f64, vals: &mut [f64], d1: &mut [f64], d2: &mut [f64]) {
    debug_assert!(vals.len() > p && d1.len() > p && d2.len() > p);
    vals[0] = 1.0;
    d1[0] = 0.0;
    d2[0] = 0.0;
    if p >= 1 {
        vals[1] = x;
        d1[1] = 1.0;
        d2[1] = 0.0;
    }
    for k in 1..p {
        let kf = k as f64;
        vals[k + 1] = ((2.0 * kf + 1.0) * x * vals[k] - kf * vals[k - 1]) / (kf + 1.0);
        d1[k + 1] = d1[k - 1] + (2.0 * kf + 1.0) * vals[k];
        d2[k + 1] = d2[k - 1] + (2.0 * kf + 1.0) * d1[k];
    }
    for k in 0..=p {
        let s = ((2 * k + 1) as f64 / 2.0).sqrt();
        vals[k] *= s;
        d1[k] *= s;
        d2[k] *= s;
    }
}

/// 1D tabulation of `L_0..=L_p` at a list of points, laid out `[k * npts + q]`.
#[derive(Clone, Debug)]
pub struct Table1d {
    pub degree: usize,
    pub npts: usize,
    pub vals: Vec<f64>,
    pub d1: Vec<f64>,
    pub d2: Vec<f64>,
}

impl Table1d {
    pub fn new(degree: usize, points: &[f64]) -> Self {
        let n = points.len();
        let mut t = Table1d {
            degree,
            npts: n,
            vals: vec![0.0; (degree + 1) * n],
            d1: vec![0.0; (degree + 1) * n],
            d2: vec![0.0; (degree + 1) * n],
        };
        let mut v = vec![0.0; degree + 1];
        let mut g = vec![0.0; degree + 1];
        let mut h = vec![0.0; degree + 1];
        for (q, &x) in points.iter().enumerate() {
            legendre_orthonormal(degree, x, &mut v, &mut g, &mut h);
            for k in 0..=degree {
                t.vals[k * n + q] = v[k];
                t.d1[k * n + q] = g[k];
                t.d2[k * n + q] = h[k];
            }
        }
        t
    }

    #[inline]
    pub fn val(&self, k: usize, q: usize) -> f64 {
        self.vals[k * self.npts + q]
    }

    #[inline]
    pub fn der(&self, k: usize, q: usize) -> f64 {
        self.d1[k * self.npts + q]
    }

    #[inline]
    pub fn der2(&self, k: usize, q: usize) -> f64 {
        self.d2[k * self.npts + q]
    }
}

/// The space `Q_p([-1,1]^d)` with its lexicographic multi-index table
/// (first axis varies slowest).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ReferenceBasis {
    pub degree: usize,
    pub dim: usize,
    pub indices: Vec<[usize; 3]>,
}

impl ReferenceBasis {
    pub fn new(degree: usize, dim: usize) -> Self {
        let n1 = degree + 1;
        let size = n1.pow(dim as u32);
        let indices = (0..size)
            .map(|i| {
                let mut idx = [0usize; 3];
                let mut rem = i;
                for a in (0..dim).rev() {
                    idx[a] = rem % n1;
                    rem /= n1;
                }
                idx
            })
            .collect();
        ReferenceBasis { degree, dim, indices }
    }

    pub fn size(&self) -> usize {
        self.indices.len()
    }

    /// Values and reference gradients at arbitrary points.
    pub fn eval(&self, points: &[Vec<f64>]) -> BasisTable {
        let nb = self.size();
        let nq = points.len();
        let d = self.dim;
        let p = self.degree;
        let mut values = vec![0.0; nb * nq];
        let mut grads = vec![0.0; nb * nq * d];
        let mut v = vec![vec![0.0; p + 1]; d];
        let mut g = vec![vec![0.0; p + 1]; d];
        let mut h = vec![0.0; p + 1];
        for (q, x) in points.iter().enumerate() {
            for a in 0..d {
                legendre_orthonormal(p, x[a], &mut v[a], &mut g[a], &mut h);
            }
            for (i, idx) in self.indices.iter().enumerate() {
                let mut val = 1.0;
                for a in 0..d {
                    val *= v[a][idx[a]];
                }
                values[i * nq + q] = val;
                for a in 0..d {
                    let mut gr = 1.0;
                    for b in 0..d {
                        gr *= if a == b { g[b][idx[b]] } else { v[b][idx[b]] };
                    }
                    grads[(i * nq + q) * d + a] = gr;
                }
            }
        }
        BasisTable { nb, nq, dim: d, values, grads }
    }
}

/// `values[i][q]` and `grads[i][q][axis]` stored flat.
#[derive(Clone, Debug)]
pub struct BasisTable {
    pub nb: usize,
    pub nq: usize,
    pub dim: usize,
    values: Vec<f64>,
    grads: Vec<f64>,
}

impl BasisTable {
    #[inline]
    pub fn value(&self, i: usize, q: usize) -> f64 {
        self.values[i * self.nq + q]
    }

    #[inline]
    pub fn grad(&self, i: usize, q: usize, axis: usize) -> f64 {
        self.grads[(i * self.nq + q) * self.dim + axis]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::{gauss_rule, tensor_rule};

    #[test]
    fn constant_mode() {
        for d in 2..=3 {
            let b = ReferenceBasis::new(2, d);
            let pts = vec![vec![0.3; d], vec![-0.9; d], vec![1.0; d]];
            let t = b.eval(&pts);
            for q in 0..pts.len() {
                assert!((t.value(0, q) - 2f64.powf(-(d as f64) / 2.0)).abs() < 1e-15);
                for a in 0..d {
                    assert_eq!(t.grad(0, q, a), 0.0);
                }
            }
        }
    }

    #[test]
    fn linear_mode() {
        let (mut v, mut g, mut h) = ([0.0; 2], [0.0; 2], [0.0; 2]);
        legendre_orthonormal(1, 0.4, &mut v, &mut g, &mut h);
        assert!((v[1] - 1.5f64.sqrt() * 0.4).abs() < 1e-15);
        assert!((g[1] - 1.5f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let p = 8;
        let eps = 1e-6;
        let (mut v0, mut g0, mut h0) = (vec![0.0; p + 1], vec![0.0; p + 1], vec![0.0; p + 1]);
        let (mut vp, mut gp, mut hp) = (vec![0.0; p + 1], vec![0.0; p + 1], vec![0.0; p + 1]);
        let (mut vm, mut gm, mut hm) = (vec![0.0; p + 1], vec![0.0; p + 1], vec![0.0; p + 1]);
        for &x in &[-0.7, 0.1, 0.55] {
            legendre_orthonormal(p, x, &mut v0, &mut g0, &mut h0);
            legendre_orthonormal(p, x + eps, &mut vp, &mut gp, &mut hp);
            legendre_orthonormal(p, x - eps, &mut vm, &mut gm, &mut hm);
            for k in 0..=p {
                let fd = (vp[k] - vm[k]) / (2.0 * eps);
                assert!((fd - g0[k]).abs() < 1e-6 * (1.0 + g0[k].abs()));
                let fd2 = (gp[k] - gm[k]) / (2.0 * eps);
                assert!((fd2 - h0[k]).abs() < 1e-5 * (1.0 + h0[k].abs()));
            }
        }
    }

    #[test]
    fn gram_matrix_is_identity() {
        for d in 2..=3 {
            let pmax = if d == 2 { 10 } else { 6 };
            for p in [1, 3, pmax] {
                let b = ReferenceBasis::new(p, d);
                let rule = tensor_rule(&gauss_rule(p + 1).unwrap(), d);
                let t = b.eval(&rule.point_list());
                for i in 0..b.size() {
                    for j in 0..b.size() {
                        let s: f64 = (0..rule.len()).map(|q| rule.weights[q] * t.value(i, q) * t.value(j, q)).sum();
                        let e = if i == j { 1.0 } else { 0.0 };
                        assert!((s - e).abs() < 1e-12, "d={d} p={p} ({i},{j}) {s}");
                    }
                }
            }
        }
    }

    #[test]
    fn lexicographic_indices() {
        let b = ReferenceBasis::new(1, 2);
        assert_eq!(b.indices, vec![[0, 0, 0], [0, 1, 0], [1, 0, 0], [1, 1, 0]]);
        assert_eq!(ReferenceBasis::new(3, 2).size(), 16);
    }
}
