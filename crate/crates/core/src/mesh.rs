//! Triangle meshes with optional per-vertex validity flags.
//!
//! A vertex flagged invalid marks missing scanner data (an eye hole, a
//! dropout). Faces never reference invalid vertices; holes therefore show up
//! as unmeshed patches that survive I/O and registration.

use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::geom::{RigidTransform, Vec3};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum MeshError {
    NonFiniteVertex { index: usize },
    FaceIndexOutOfRange { face: usize },
    FaceReferencesInvalidVertex { face: usize },
    ValidityLengthMismatch,
}

impl fmt::Display for MeshError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MeshError::NonFiniteVertex { index } => {
                write!(f, "vertex {index} has a non-finite coordinate")
            }
            MeshError::FaceIndexOutOfRange { face } => {
                write!(f, "face {face} references a vertex index out of range")
            }
            MeshError::FaceReferencesInvalidVertex { face } => {
                write!(f, "face {face} references an invalid (hole) vertex")
            }
            MeshError::ValidityLengthMismatch => {
                write!(f, "validity flag count does not match vertex count")
            }
        }
    }
}

impl core::error::Error for MeshError {}

/// Immutable triangle mesh in millimeters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TriMesh {
    vertices: Vec<Vec3>,
    faces: Vec<[u32; 3]>,
    /// `None` means every vertex is valid.
    validity: Option<Vec<bool>>,
}

impl TriMesh {
    pub fn new(
        vertices: Vec<Vec3>,
        faces: Vec<[u32; 3]>,
        validity: Option<Vec<bool>>,
    ) -> Result<TriMesh, MeshError> {
        for (i, v) in vertices.iter().enumerate() {
            if !v.is_finite() {
                return Err(MeshError::NonFiniteVertex { index: i });
            }
        }
        if let Some(flags) = &validity {
            if flags.len() != vertices.len() {
                return Err(MeshError::ValidityLengthMismatch);
            }
        }
        let n = vertices.len() as u32;
        for (fi, face) in faces.iter().enumerate() {
            for &idx in face {
                if idx >= n {
                    return Err(MeshError::FaceIndexOutOfRange { face: fi });
                }
                if let Some(flags) = &validity {
                    if !flags[idx as usize] {
                        return Err(MeshError::FaceReferencesInvalidVertex { face: fi });
                    }
                }
            }
        }
        Ok(TriMesh { vertices, faces, validity })
    }

    pub fn vertices(&self) -> &[Vec3] {
        &self.vertices
    }

    pub fn faces(&self) -> &[[u32; 3]] {
        &self.faces
    }

    /// Per-vertex validity flags, if the mesh carries any.
    pub fn validity(&self) -> Option<&[bool]> {
        self.validity.as_deref()
    }

    #[inline]
    pub fn is_vertex_valid(&self, index: usize) -> bool {
        match &self.validity {
            Some(flags) => flags[index],
            None => true,
        }
    }

    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    pub fn face_count(&self) -> usize {
        self.faces.len()
    }

    /// Iterator over valid vertex positions.
    pub fn valid_vertices(&self) -> impl Iterator<Item = Vec3> + '_ {
        self.vertices
            .iter()
            .enumerate()
            .filter(|(i, _)| self.is_vertex_valid(*i))
            .map(|(_, v)| *v)
    }
}

/// Maps every vertex through `t`; faces and validity flags are unchanged.
pub fn apply_transform(mesh: &TriMesh, t: &RigidTransform) -> TriMesh {
    TriMesh {
        vertices: mesh.vertices.iter().map(|&v| t.apply(v)).collect(),
        faces: mesh.faces.clone(),
        validity: mesh.validity.clone(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::{vec3, Mat3};
    use alloc::vec;

    fn tri() -> TriMesh {
        TriMesh::new(
            vec![vec3(0.0, 0.0, 0.0), vec3(1.0, 0.0, 0.0), vec3(0.0, 1.0, 0.0)],
            vec![[0, 1, 2]],
            None,
        )
        .unwrap()
    }

    #[test]
    fn face_index_out_of_range_is_rejected() {
        let err = TriMesh::new(vec![vec3(0.0, 0.0, 0.0)], vec![[0, 0, 1]], None).unwrap_err();
        assert_eq!(err, MeshError::FaceIndexOutOfRange { face: 0 });
    }

    #[test]
    fn face_on_invalid_vertex_is_rejected() {
        let err = TriMesh::new(
            vec![vec3(0.0, 0.0, 0.0), vec3(1.0, 0.0, 0.0), vec3(0.0, 1.0, 0.0)],
            vec![[0, 1, 2]],
            Some(vec![true, false, true]),
        )
        .unwrap_err();
        assert_eq!(err, MeshError::FaceReferencesInvalidVertex { face: 0 });
    }

    #[test]
    fn non_finite_vertex_is_rejected() {
        let err = TriMesh::new(vec![vec3(f64::NAN, 0.0, 0.0)], vec![], None).unwrap_err();
        assert_eq!(err, MeshError::NonFiniteVertex { index: 0 });
    }

    #[test]
    fn identity_transform_is_a_noop() {
        let m = tri();
        assert_eq!(apply_transform(&m, &RigidTransform::IDENTITY), m);
    }

    #[test]
    fn transform_then_inverse_restores_vertices() {
        let m = tri();
        let t = RigidTransform::from_euler_deg(14.0, -6.0, 3.0, vec3(10.0, -4.0, 2.0));
        let back = apply_transform(&apply_transform(&m, &t), &t.inverse());
        for (a, b) in m.vertices().iter().zip(back.vertices()) {
            assert!((*a - *b).norm() < 1e-9);
        }
    }

    #[test]
    fn rigidity_preserves_pairwise_distances() {
        let m = tri();
        let t = RigidTransform::new(Mat3::rot_z(1.1), vec3(5.0, 6.0, 7.0)).unwrap();
        let tm = apply_transform(&m, &t);
        for i in 0..3 {
            for j in 0..3 {
                let d0 = (m.vertices()[i] - m.vertices()[j]).norm();
                let d1 = (tm.vertices()[i] - tm.vertices()[j]).norm();
                assert!((d0 - d1).abs() <= 1e-9 * (1.0 + d0));
            }
        }
    }
}
