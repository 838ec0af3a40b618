//! Integration faces of a graded mesh, including hanging-node sub-faces.

use crate::dyadic::Dyadic;
use crate::error::{Error, Result};
use crate::mesh::{half, Corner, GradedMesh};

/// An integration face. Interior faces carry a `neighbor`; boundary faces
/// do not. The face box is always a full face of `owner`.
#[derive(Clone, Debug, PartialEq)]
pub struct Face {
    pub owner: usize,
    pub neighbor: Option<usize>,
    /// Normal axis.
    pub axis: usize,
    /// Lower corner of the face box; the `axis` entry is the face plane.
    pub lower: Corner,
    /// Edge length of the (d-1)-cube.
    pub size: Dyadic,
    pub h_e: Dyadic,
    pub p_e: usize,
    /// Sign of the owner's outward normal along `axis`.
    pub normal_sign: i8,
}

impl Face {
    pub fn is_boundary(&self) -> bool {
        self.neighbor.is_none()
    }

    /// (d-1)-dimensional measure.
    pub fn measure(&self, dim: usize) -> f64 {
        self.size.to_f64().powi(dim as i32 - 1)
    }
}

#[derive(Clone, Debug, Default)]
pub struct FaceSet {
    pub interior: Vec<Face>,
    pub boundary: Vec<Face>,
}

impl FaceSet {
    pub fn iter(&self) -> impl Iterator<Item = &Face> {
        self.interior.iter().chain(self.boundary.iter())
    }

    pub fn len(&self) -> usize {
        self.interior.len() + self.boundary.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Enumerates conforming faces once, hanging junctions from the fine side,
/// and boundary faces.
pub fn enumerate_faces(mesh: &GradedMesh) -> Result<FaceSet> {
    let dim = mesh.dim;
    let edge = half();
    let mut set = FaceSet::default();

    for el in &mesh.elements {
        let h = el.size;
        for axis in 0..dim {
            for sign in [-1i8, 1] {
                let plane = if sign > 0 { el.upper(axis) } else { el.lower[axis] };
                let mut face_lower = el.lower;
                face_lower[axis] = plane;

                if plane == edge || plane == -edge {
                    set.boundary.push(Face {
                        owner: el.id,
                        neighbor: None,
                        axis,
                        lower: face_lower,
                        size: h,
                        h_e: h,
                        p_e: el.degree,
                        normal_sign: sign,
                    });
                    continue;
                }

                // Same-size neighbour.
                let mut same = el.lower;
                same[axis] = if sign > 0 { plane } else { plane - h };
                if let Some(nb) = mesh.find(&same, h) {
                    if el.id < nb {
                        set.interior.push(Face {
                            owner: el.id,
                            neighbor: Some(nb),
                            axis,
                            lower: face_lower,
                            size: h,
                            h_e: h,
                            p_e: el.degree.max(mesh.elements[nb].degree),
                            normal_sign: sign,
                        });
                    }
                    continue;
                }

                // Coarser neighbour: this element is the fine side.
                let h2 = h.double();
                let mut coarse = [Dyadic::ZERO; 3];
                for b in 0..dim {
                    coarse[b] = if b == axis {
                        if sign > 0 {
                            plane
                        } else {
                            plane - h2
                        }
                    } else {
                        el.lower[b].floor_to(h2)
                    };
                }
                if let Some(nb) = mesh.find(&coarse, h2) {
                    set.interior.push(Face {
                        owner: el.id,
                        neighbor: Some(nb),
                        axis,
                        lower: face_lower,
                        size: h,
                        h_e: h,
                        p_e: el.degree.max(mesh.elements[nb].degree),
                        normal_sign: sign,
                    });
                    continue;
                }

                // Finer neighbours emit the sub-faces themselves.
                let hh = h.half();
                let mut fine = el.lower;
                fine[axis] = if sign > 0 { plane } else { plane - hh };
                if mesh.find(&fine, hh).is_some() {
                    continue;
                }
                return Err(Error::NotOneIrregular { element: el.id, axis });
            }
        }
    }
    Ok(set)
}
