//! Core pipeline for probing 3D face recognition with 3D face morphs.
//!
//! The crate covers the full loop at desk scale: deterministic synthetic
//! face surfaces, registration into a nose-based intrinsic frame, depth-map
//! rasterization, a linear PCA shape model, two morph generators (depth
//! averaging and coefficient averaging), two face matchers (a region-fused
//! likelihood-ratio classifier and a shape-descriptor cosine-distance
//! matcher), and the vulnerability metrics (FMR/FNMR/MMPMR/RMMR) used to
//! score morphing attacks against the matchers.
//!
//! Everything is `no_std + alloc` and deterministic: the same inputs produce
//! bit-identical outputs. File formats, CLI and the experiment harness live
//! in the companion `morph3d` crate.

#![no_std]

extern crate alloc;

#[cfg(test)]
extern crate std;

mod fmath;
mod linalg;

pub mod depthmap;
pub mod geom;
pub mod matcher;
pub mod mesh;
pub mod metrics;
pub mod model;
pub mod morph;
pub mod registration;
pub mod synth;

pub use depthmap::{DepthMap, DepthMapError, GridSpec};
pub use geom::{vec3, GeomError, Mat3, RigidTransform, Vec3};
pub use mesh::{apply_transform, MeshError, TriMesh};
