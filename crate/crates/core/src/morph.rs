//! Morph generation: depth averaging and model-coefficient averaging.
//!
//! Both operate on registered depth maps, where cellwise blending is
//! meaningful. `alpha` is the transition control: the weight of input `a`,
//! with symmetric morphs at 0.5. No geometric warping happens before depth
//! averaging — mismatched feature positions blur exactly the way the
//! method's known weakness predicts, and the hole policy decides whether a
//! one-sided hole becomes a HOLE (UNION) or copies the valid side
//! (INTERSECT_FILL, which reproduces the socket-rim remnant artifact).

use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::depthmap::DepthMap;
use crate::geom::vec3;
use crate::mesh::TriMesh;
use crate::model::{fit_coefficients, reconstruct, CoefficientVector, ModelError, ShapeModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MorphMethod {
    DepthAverage,
    CoefficientAverage,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HolePolicy {
    /// A cell HOLE in either input is HOLE in the morph (default).
    Union,
    /// A cell HOLE in one input copies the other side's value.
    IntersectFill,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MorphSpec {
    pub method: MorphMethod,
    /// Weight of input `a`, in [0, 1].
    pub alpha: f64,
    pub hole_policy: HolePolicy,
}

impl MorphSpec {
    pub fn depth(alpha: f64, hole_policy: HolePolicy) -> MorphSpec {
        MorphSpec { method: MorphMethod::DepthAverage, alpha, hole_policy }
    }

    pub fn coefficient(alpha: f64) -> MorphSpec {
        MorphSpec { method: MorphMethod::CoefficientAverage, alpha, hole_policy: HolePolicy::Union }
    }

    pub fn validate(&self) -> Result<(), MorphError> {
        if !(0.0..=1.0).contains(&self.alpha) || !self.alpha.is_finite() {
            return Err(MorphError::InvalidAlpha(self.alpha));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum MorphError {
    GridMismatch,
    DegenerateSurface,
    InvalidAlpha(f64),
    MethodMismatch { expected: MorphMethod },
    Model(ModelError),
}

impl fmt::Display for MorphError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MorphError::GridMismatch => write!(f, "inputs are not on the same grid"),
            MorphError::DegenerateSurface => {
                write!(f, "not enough valid cells to form a surface")
            }
            MorphError::InvalidAlpha(a) => write!(f, "alpha {a} outside [0, 1]"),
            MorphError::MethodMismatch { expected } => {
                write!(f, "morph spec method does not match the operation ({expected:?})")
            }
            MorphError::Model(e) => write!(f, "shape model error: {e}"),
        }
    }
}

impl core::error::Error for MorphError {}

impl From<ModelError> for MorphError {
    fn from(e: ModelError) -> Self {
        MorphError::Model(e)
    }
}

/// Cellwise weighted average of two registered depth maps.
///
/// `alpha` of exactly 1 (or 0) returns a copy of the corresponding input,
/// holes included.
pub fn depth_average(a: &DepthMap, b: &DepthMap, spec: &MorphSpec) -> Result<DepthMap, MorphError> {
    spec.validate()?;
    if spec.method != MorphMethod::DepthAverage {
        return Err(MorphError::MethodMismatch { expected: MorphMethod::DepthAverage });
    }
    if !a.same_grid(b) {
        return Err(MorphError::GridMismatch);
    }
    if spec.alpha == 1.0 {
        return Ok(a.clone());
    }
    if spec.alpha == 0.0 {
        return Ok(b.clone());
    }
    let alpha = spec.alpha;
    let cells: Vec<f64> = a
        .cells()
        .iter()
        .zip(b.cells())
        .map(|(&za, &zb)| match (za.is_nan(), zb.is_nan()) {
            (false, false) => alpha * za + (1.0 - alpha) * zb,
            (true, true) => f64::NAN,
            (a_hole, _) => match spec.hole_policy {
                HolePolicy::Union => f64::NAN,
                HolePolicy::IntersectFill => {
                    if a_hole {
                        zb
                    } else {
                        za
                    }
                }
            },
        })
        .collect();
    DepthMap::from_cells(*a.grid(), cells).map_err(|_| MorphError::GridMismatch)
}

/// Coefficient-space morph: fits both faces to the model, blends the
/// coefficient vectors, reconstructs. Returns the morph and its
/// coefficients. Note the endpoints are the model *projections* of the
/// inputs, not the inputs themselves.
pub fn coefficient_average(
    model: &ShapeModel,
    a: &DepthMap,
    b: &DepthMap,
    spec: &MorphSpec,
) -> Result<(DepthMap, CoefficientVector), MorphError> {
    spec.validate()?;
    if spec.method != MorphMethod::CoefficientAverage {
        return Err(MorphError::MethodMismatch { expected: MorphMethod::CoefficientAverage });
    }
    if a.grid() != model.grid() || b.grid() != model.grid() {
        return Err(MorphError::GridMismatch);
    }
    let ca = fit_coefficients(model, a)?;
    let cb = fit_coefficients(model, b)?;
    let cm = ca.blend(&cb, spec.alpha);
    let morph = reconstruct(model, &cm)?;
    Ok((morph, cm))
}

/// Triangulates the valid cells of a depth map back into a mesh: one vertex
/// per valid cell at its center, two triangles per fully valid 2x2 block.
/// HOLE cells produce no geometry.
pub fn morph_to_mesh(map: &DepthMap) -> Result<TriMesh, MorphError> {
    let grid = map.grid();
    let mut index = alloc::vec![u32::MAX; grid.cell_count()];
    let mut vertices = Vec::new();
    for iy in 0..grid.height {
        for ix in 0..grid.width {
            if let Some(z) = map.get(ix, iy) {
                index[iy * grid.width + ix] = vertices.len() as u32;
                vertices.push(vec3(grid.x_of(ix), grid.y_of(iy), z));
            }
        }
    }
    let mut faces = Vec::new();
    for iy in 0..grid.height.saturating_sub(1) {
        for ix in 0..grid.width.saturating_sub(1) {
            let v00 = index[iy * grid.width + ix];
            let v10 = index[iy * grid.width + ix + 1];
            let v01 = index[(iy + 1) * grid.width + ix];
            let v11 = index[(iy + 1) * grid.width + ix + 1];
            if v00 != u32::MAX && v10 != u32::MAX && v01 != u32::MAX && v11 != u32::MAX {
                faces.push([v00, v10, v11]);
                faces.push([v00, v11, v01]);
            }
        }
    }
    if faces.is_empty() {
        return Err(MorphError::DegenerateSurface);
    }
    Ok(TriMesh::new(vertices, faces, None).expect("grid triangulation is valid"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::depthmap::GridSpec;
    use crate::geom::{RigidTransform, Vec3};
    use crate::registration::{rasterize, IntrinsicRegistration};

    fn grid() -> GridSpec {
        GridSpec::new(6, 6, 0.0, 0.0, 1.0, 1.0).unwrap()
    }

    fn map_of(f: impl Fn(usize) -> f64) -> DepthMap {
        let g = grid();
        DepthMap::from_cells(g, (0..g.cell_count()).map(f).collect()).unwrap()
    }

    #[test]
    fn alpha_endpoints_copy_inputs_including_holes() {
        let a = map_of(|i| if i == 7 { f64::NAN } else { i as f64 });
        let b = map_of(|i| if i == 12 { f64::NAN } else { -(i as f64) });
        let spec1 = MorphSpec::depth(1.0, HolePolicy::Union);
        let spec0 = MorphSpec::depth(0.0, HolePolicy::Union);
        assert!(depth_average(&a, &b, &spec1).unwrap().bits_eq(&a));
        assert!(depth_average(&a, &b, &spec0).unwrap().bits_eq(&b));
    }

    #[test]
    fn midpoint_blends_cellwise() {
        let a = map_of(|_| 4.0);
        let b = map_of(|_| 6.0);
        let m = depth_average(&a, &b, &MorphSpec::depth(0.5, HolePolicy::Union)).unwrap();
        assert_eq!(m.get(3, 3), Some(5.0));
    }

    #[test]
    fn union_policy_propagates_holes_intersect_fill_copies() {
        let a = map_of(|i| if i == 10 { f64::NAN } else { 2.0 });
        let b = map_of(|_| 8.0);
        let union = depth_average(&a, &b, &MorphSpec::depth(0.5, HolePolicy::Union)).unwrap();
        assert_eq!(union.get_flat(10), None);
        let fill = depth_average(&a, &b, &MorphSpec::depth(0.5, HolePolicy::IntersectFill)).unwrap();
        assert_eq!(fill.get_flat(10), Some(8.0));
        // both valid: same blend under both policies
        assert_eq!(fill.get_flat(11), Some(5.0));
    }

    #[test]
    fn blend_stays_between_inputs() {
        let a = map_of(|i| (i % 5) as f64);
        let b = map_of(|i| 10.0 - (i % 7) as f64);
        for alpha in [0.25, 0.5, 0.75] {
            let m = depth_average(&a, &b, &MorphSpec::depth(alpha, HolePolicy::Union)).unwrap();
            for i in 0..36 {
                let (za, zb, zm) =
                    (a.get_flat(i).unwrap(), b.get_flat(i).unwrap(), m.get_flat(i).unwrap());
                assert!(zm >= za.min(zb) - 1e-12 && zm <= za.max(zb) + 1e-12);
            }
        }
    }

    #[test]
    fn invalid_alpha_is_rejected() {
        let a = map_of(|_| 1.0);
        let err = depth_average(&a, &a, &MorphSpec::depth(1.5, HolePolicy::Union)).unwrap_err();
        assert!(matches!(err, MorphError::InvalidAlpha(_)));
    }

    #[test]
    fn grid_mismatch_is_rejected() {
        let a = map_of(|_| 1.0);
        let g2 = GridSpec::new(3, 3, 0.0, 0.0, 1.0, 1.0).unwrap();
        let b = DepthMap::from_cells(g2, alloc::vec![1.0; 9]).unwrap();
        assert_eq!(
            depth_average(&a, &b, &MorphSpec::depth(0.5, HolePolicy::Union)).unwrap_err(),
            MorphError::GridMismatch
        );
    }

    #[test]
    fn all_hole_map_is_degenerate() {
        let m = map_of(|_| f64::NAN);
        assert_eq!(morph_to_mesh(&m).unwrap_err(), MorphError::DegenerateSurface);
    }

    #[test]
    fn single_2x2_block_gives_two_triangles() {
        let m = map_of(|i| {
            let (ix, iy) = (i % 6, i / 6);
            if ix <= 1 && iy <= 1 {
                3.0
            } else {
                f64::NAN
            }
        });
        let mesh = morph_to_mesh(&m).unwrap();
        assert_eq!(mesh.face_count(), 2);
        assert_eq!(mesh.vertex_count(), 4);
    }

    #[test]
    fn mesh_roundtrips_through_rasterization() {
        let m = map_of(|i| ((i * 13) % 7) as f64 * 0.5 + 1.0);
        let mesh = morph_to_mesh(&m).unwrap();
        let reg = IntrinsicRegistration {
            transform: RigidTransform::IDENTITY,
            nose_tip: Vec3::ZERO,
            symmetry_residual: 0.0,
            bridge_slope: 0.0,
        };
        let back = rasterize(&mesh, &reg, m.grid()).unwrap();
        for i in 0..m.grid().cell_count() {
            if let Some(z) = back.get_flat(i) {
                assert!((z - m.get_flat(i).unwrap()).abs() <= 1e-6);
            }
        }
    }
}
