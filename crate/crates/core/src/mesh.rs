//! Geometrically graded tensor-product meshes of `(-1/2, 1/2)^d` refined
//! toward the origin.

use std::collections::HashMap;
use std::io::Write;

use num_rational::Rational64;
use num_traits::{ToPrimitive, Zero};

use crate::dyadic::Dyadic;
use crate::error::{Error, Result};

/// Largest supported spatial dimension.
pub const MAX_DIM: usize = 3;

/// Corner or extent vector; entries beyond the mesh dimension are zero.
pub type Corner = [Dyadic; MAX_DIM];

#[derive(Clone, Debug, PartialEq)]
pub struct Element {
    pub id: usize,
    /// Refinement layer `j` in `1..=levels`; `h = 2^-(j+1)`.
    pub layer: usize,
    pub lower: Corner,
    pub size: Dyadic,
    pub degree: usize,
    pub touches_origin: bool,
}

impl Element {
    pub fn upper(&self, axis: usize) -> Dyadic {
        self.lower[axis] + self.size
    }

    pub fn h(&self) -> f64 {
        self.size.to_f64()
    }

    /// Whether the closed box of `self` contains the closed box of `other`.
    pub fn contains_element(&self, other: &Element, dim: usize) -> bool {
        (0..dim).all(|a| self.lower[a] <= other.lower[a] && other.upper(a) <= self.upper(a))
    }

    /// Closure test in floating point; exact for dyadic inputs.
    pub fn contains_point(&self, x: &[f64]) -> bool {
        x.iter().enumerate().all(|(a, &xa)| {
            let lo = self.lower[a].to_f64();
            lo <= xa && xa <= lo + self.h()
        })
    }

    /// Maps a physical point to reference coordinates in `[-1, 1]^d`.
    pub fn to_reference(&self, x: &[f64], out: &mut [f64]) {
        let h = self.h();
        for (a, (o, &xa)) in out.iter_mut().zip(x).enumerate() {
            *o = 2.0 * (xa - self.lower[a].to_f64()) / h - 1.0;
        }
    }

    pub fn from_reference(&self, xi: &[f64], out: &mut [f64]) {
        let h = self.h();
        for (a, (o, &r)) in out.iter_mut().zip(xi).enumerate() {
            *o = self.lower[a].to_f64() + 0.5 * h * (r + 1.0);
        }
    }

    fn touches_origin_closure(lower: &Corner, size: Dyadic, dim: usize) -> bool {
        (0..dim).all(|a| lower[a] <= Dyadic::ZERO && Dyadic::ZERO <= lower[a] + size)
    }
}

#[derive(Clone, Debug)]
pub struct GradedMesh {
    pub dim: usize,
    pub levels: usize,
    pub ratio: Rational64,
    pub elements: Vec<Element>,
    index: HashMap<(Corner, Dyadic), usize>,
}

/// Half the domain edge, `1/2`.
pub fn half() -> Dyadic {
    Dyadic::pow2_neg(1)
}

pub fn build_graded_mesh(dim: usize, levels: usize, ratio: Rational64) -> Result<GradedMesh> {
    if !(2..=MAX_DIM).contains(&dim) {
        return Err(Error::InvalidDimension(dim));
    }
    if levels < 1 {
        return Err(Error::InvalidLevels(levels));
    }
    if ratio != Rational64::new(1, 2) {
        return Err(Error::UnsupportedRatio(ratio.to_string()));
    }

    let h0 = half();
    let mut cells: Vec<(Corner, Dyadic)> = Vec::new();
    for mask in 0..(1usize << dim) {
        let mut lower = [Dyadic::ZERO; MAX_DIM];
        for (a, l) in lower.iter_mut().enumerate().take(dim) {
            *l = if mask >> a & 1 == 1 { Dyadic::ZERO } else { -h0 };
        }
        cells.push((lower, h0));
    }

    for _ in 0..levels {
        let mut next = Vec::with_capacity(cells.len() + (1 << dim) * ((1 << dim) - 1));
        for (lower, size) in cells {
            if Element::touches_origin_closure(&lower, size, dim) {
                let hs = size.half();
                for mask in 0..(1usize << dim) {
                    let mut child = lower;
                    for (a, c) in child.iter_mut().enumerate().take(dim) {
                        if mask >> a & 1 == 1 {
                            *c = *c + hs;
                        }
                    }
                    next.push((child, hs));
                }
            } else {
                next.push((lower, size));
            }
        }
        cells = next;
    }

    // Deterministic numbering: coarse layers first, then lexicographic corners.
    cells.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));

    let elements: Vec<Element> = cells
        .into_iter()
        .enumerate()
        .map(|(id, (lower, size))| Element {
            id,
            layer: size.exponent() as usize - 1,
            lower,
            size,
            degree: 1,
            touches_origin: Element::touches_origin_closure(&lower, size, dim),
        })
        .collect();

    let index = elements.iter().map(|e| ((e.lower, e.size), e.id)).collect();
    Ok(GradedMesh { dim, levels, ratio, elements, index })
}

/// `p_K = p0 + floor(slope * (levels - j))` for an element in layer `j`.
pub fn degree_for_layer(levels: usize, layer: usize, p0: usize, slope: Rational64) -> usize {
    let steps = Rational64::from_integer((levels - layer) as i64) * slope;
    p0 + steps.floor().to_integer() as usize
}

pub fn assign_degrees(mut mesh: GradedMesh, p0: usize, slope: Rational64) -> Result<GradedMesh> {
    if p0 < 1 {
        return Err(Error::InvalidDegree(format!("p0 must be >= 1, got {p0}")));
    }
    if slope < Rational64::zero() {
        return Err(Error::InvalidDegree(format!("slope must be >= 0, got {slope}")));
    }
    let levels = mesh.levels;
    for e in &mut mesh.elements {
        e.degree = degree_for_layer(levels, e.layer, p0, slope);
    }
    Ok(mesh)
}

impl GradedMesh {
    /// Mesh from explicit cubes covering the domain, numbered in the given
    /// order. Layers follow from the sizes; used for hand-built test meshes.
    pub fn from_cells(dim: usize, cells: Vec<(Corner, Dyadic)>, degree: usize) -> Result<Self> {
        if !(2..=MAX_DIM).contains(&dim) {
            return Err(Error::InvalidDimension(dim));
        }
        let elements: Vec<Element> = cells
            .into_iter()
            .enumerate()
            .map(|(id, (lower, size))| Element {
                id,
                layer: (size.exponent() as usize).saturating_sub(1),
                lower,
                size,
                degree,
                touches_origin: Element::touches_origin_closure(&lower, size, dim),
            })
            .collect();
        let levels = elements.iter().map(|e| e.layer).max().unwrap_or(0).max(1);
        let index = elements.iter().map(|e| ((e.lower, e.size), e.id)).collect();
        Ok(GradedMesh { dim, levels, ratio: Rational64::new(1, 2), elements, index })
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    /// Element with exactly this lower corner and size, if present.
    pub fn find(&self, lower: &Corner, size: Dyadic) -> Option<usize> {
        self.index.get(&(*lower, size)).copied()
    }

    /// Every element gets degree `p`, regardless of layer.
    pub fn with_uniform_degree(mut self, p: usize) -> Self {
        for e in &mut self.elements {
            e.degree = p;
        }
        self
    }

    pub fn min_degree(&self) -> usize {
        self.elements.iter().map(|e| e.degree).min().unwrap_or(0)
    }

    pub fn max_degree(&self) -> usize {
        self.elements.iter().map(|e| e.degree).max().unwrap_or(0)
    }

    /// Id of an element whose closure contains `x`; the smallest id wins on
    /// shared boundaries.
    pub fn locate_element(&self, x: &[f64]) -> Result<usize> {
        if x.len() != self.dim || x.iter().any(|v| !(-0.5..=0.5).contains(v)) {
            return Err(Error::PointOutsideDomain(x.to_vec()));
        }
        self.elements
            .iter()
            .find(|e| e.contains_point(x))
            .map(|e| e.id)
            .ok_or_else(|| Error::PointOutsideDomain(x.to_vec()))
    }

    /// Sum of element volumes, computed exactly.
    pub fn total_volume(&self) -> Dyadic {
        self.elements
            .iter()
            .fold(Dyadic::ZERO, |acc, e| acc + e.size.powi(self.dim as u32))
    }

    /// One element per line: `id layer lower... h p touches_origin`.
    pub fn dump<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        for e in &self.elements {
            write!(w, "{} {}", e.id, e.layer)?;
            for a in 0..self.dim {
                write!(w, " {}", e.lower[a])?;
            }
            writeln!(w, " {} {} {}", e.size, e.degree, e.touches_origin)?;
        }
        Ok(())
    }

    pub fn ratio_f64(&self) -> f64 {
        self.ratio.to_f64().unwrap_or(0.5)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn half_ratio() -> Rational64 {
        Rational64::new(1, 2)
    }

    #[test]
    fn one_level_2d() {
        let m = build_graded_mesh(2, 1, half_ratio()).unwrap();
        assert_eq!(m.len(), 16);
        assert_eq!(m.elements.iter().filter(|e| e.touches_origin).count(), 4);
        assert!(m.elements.iter().all(|e| e.size == Dyadic::pow2_neg(2)));
        assert!(m.elements.iter().all(|e| e.layer == 1));
    }

    #[test]
    fn two_levels_2d() {
        let m = build_graded_mesh(2, 2, half_ratio()).unwrap();
        assert_eq!(m.len(), 28);
        let coarse = m.elements.iter().filter(|e| e.size == Dyadic::pow2_neg(2)).count();
        let fine = m.elements.iter().filter(|e| e.size == Dyadic::pow2_neg(3)).count();
        assert_eq!((coarse, fine), (12, 16));
    }

    #[test]
    fn one_level_3d() {
        let m = build_graded_mesh(3, 1, half_ratio()).unwrap();
        assert_eq!(m.len(), 64);
        assert_eq!(m.elements.iter().filter(|e| e.touches_origin).count(), 8);
    }

    #[test]
    fn element_counts_closed_form() {
        for levels in 1..=6 {
            let m2 = build_graded_mesh(2, levels, half_ratio()).unwrap();
            assert_eq!(m2.len(), 16 + 12 * (levels - 1));
            let m3 = build_graded_mesh(3, levels, half_ratio()).unwrap();
            assert_eq!(m3.len(), 64 + 56 * (levels - 1));
            for m in [&m2, &m3] {
                assert_eq!(m.total_volume(), Dyadic::from_int(1));
                assert_eq!(m.elements.iter().filter(|e| e.touches_origin).count(), 1 << m.dim);
                for e in &m.elements {
                    assert_eq!(e.size, Dyadic::pow2_neg(e.layer as u32 + 1));
                    if e.touches_origin {
                        assert_eq!(e.layer, levels);
                    }
                }
            }
        }
    }

    #[test]
    fn rejects_bad_input() {
        assert!(matches!(build_graded_mesh(1, 2, half_ratio()), Err(Error::InvalidDimension(1))));
        assert!(matches!(build_graded_mesh(4, 2, half_ratio()), Err(Error::InvalidDimension(4))));
        assert!(matches!(build_graded_mesh(2, 0, half_ratio()), Err(Error::InvalidLevels(0))));
        assert!(matches!(
            build_graded_mesh(2, 2, Rational64::new(1, 3)),
            Err(Error::UnsupportedRatio(_))
        ));
    }

    #[test]
    fn degree_law() {
        assert_eq!(degree_for_layer(5, 1, 1, Rational64::new(1, 2)), 3);
        assert_eq!(degree_for_layer(4, 4, 1, Rational64::new(1, 4)), 1);
        let m = build_graded_mesh(2, 4, half_ratio()).unwrap();
        let m = assign_degrees(m, 2, Rational64::zero()).unwrap();
        assert!(m.elements.iter().all(|e| e.degree == 2));
    }

    #[test]
    fn degrees_non_increasing_in_layer() {
        let m = build_graded_mesh(2, 6, half_ratio()).unwrap();
        let m = assign_degrees(m, 1, Rational64::new(1, 3)).unwrap();
        for a in &m.elements {
            for b in &m.elements {
                if a.layer < b.layer {
                    assert!(a.degree >= b.degree);
                }
            }
            if a.touches_origin {
                assert_eq!(a.degree, 1);
            }
        }
        assert!(assign_degrees(m, 0, Rational64::zero()).is_err());
    }

    #[test]
    fn locate_tie_breaks() {
        let m = build_graded_mesh(2, 1, half_ratio()).unwrap();
        let id = m.locate_element(&[0.4, 0.4]).unwrap();
        let e = &m.elements[id];
        assert_eq!(e.lower[0], Dyadic::pow2_neg(2));
        assert_eq!(e.lower[1], Dyadic::pow2_neg(2));
        let origin = m.locate_element(&[0.0, 0.0]).unwrap();
        let first_origin = m.elements.iter().find(|e| e.touches_origin).unwrap().id;
        assert_eq!(origin, first_origin);

        let m2 = build_graded_mesh(2, 2, half_ratio()).unwrap();
        let id = m2.locate_element(&[0.25, 0.1]).unwrap();
        let sharing: Vec<usize> = m2
            .elements
            .iter()
            .filter(|e| e.contains_point(&[0.25, 0.1]))
            .map(|e| e.id)
            .collect();
        assert_eq!(sharing.len(), 2);
        assert_eq!(id, *sharing.iter().min().unwrap());
        assert!(matches!(m2.locate_element(&[0.6, 0.0]), Err(Error::PointOutsideDomain(_))));
    }

    #[test]
    fn dump_format() {
        let m = build_graded_mesh(2, 1, half_ratio()).unwrap();
        let mut out = Vec::new();
        m.dump(&mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        let first = text.lines().next().unwrap();
        assert_eq!(first, "0 1 -1/2 -1/2 1/4 1 false");
        assert_eq!(text.lines().count(), 16);
    }
}
