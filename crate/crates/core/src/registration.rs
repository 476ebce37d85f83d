//! Registration of a raw face mesh into the nose-based intrinsic frame,
//! plus rasterization to a depth grid.
//!
//! The intrinsic frame puts the nose tip at the origin, the facial symmetry
//! plane at x = 0, the nose-bridge direction along +y, and z toward the
//! sensor. Once every face sits in this frame, one grid cell addresses the
//! same facial location on every face — the dense correspondence that the
//! shape model and both morph generators rely on.
//!
//! Stages:
//! 1. [`extract_roi`] keeps a sphere around the detected face center.
//! 2. [`find_symmetry_plane`] grid-searches (yaw, roll, lateral offset),
//!    scoring each candidate by the RMS mismatch between a coarse depth
//!    raster and its mirror image. Coarse-to-fine, fully deterministic,
//!    ties broken by the first candidate scanned.
//! 3. [`detect_nose_features`] extracts the symmetry profile, takes the
//!    most protruding point as the tip, and fits the bridge slope above it.
//! 4. [`register`] composes the three into one rigid transform;
//!    [`rasterize`] samples the transformed mesh onto a regular grid by
//!    triangle interpolation. Cells without surface stay HOLE — no
//!    inpainting here; hole handling belongs to the morph generator.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::depthmap::{DepthMap, GridSpec};
use crate::fmath;
use crate::geom::{vec3, Mat3, RigidTransform, Vec3};
use crate::mesh::TriMesh;

#[derive(Debug, Clone, PartialEq)]
pub enum RegistrationError {
    /// No (or too few) vertices survive ROI extraction.
    EmptyRoi,
    /// Symmetry search ended above the rejection residual.
    NoConvergence { residual: f64 },
    /// Symmetry profile has no acceptable protrusion.
    NoNoseFound,
    /// Rasterization covered no grid cell.
    EmptyProjection,
}

impl fmt::Display for RegistrationError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RegistrationError::EmptyRoi => write!(f, "no usable face region in the mesh"),
            RegistrationError::NoConvergence { residual } => {
                write!(f, "symmetry search residual {residual:.3} mm exceeds the reject bound")
            }
            RegistrationError::NoNoseFound => {
                write!(f, "symmetry profile has no nose-like protrusion")
            }
            RegistrationError::EmptyProjection => {
                write!(f, "mesh projects onto no cell of the target grid")
            }
        }
    }
}

impl core::error::Error for RegistrationError {}

/// Free parameters of the registration stages. Defaults are frozen here and
/// surfaced in the harness config.
#[derive(Debug, Clone, PartialEq)]
pub struct RegistrationConfig {
    /// ROI sphere radius around the detected face center, mm.
    pub roi_radius: f64,
    /// Minimum valid ROI vertices below which the input is rejected.
    pub min_roi_points: usize,
    /// Symmetry search bound for yaw and roll, degrees (searched both ways).
    pub yaw_roll_bound_deg: f64,
    /// Symmetry search bound for the lateral plane offset, mm.
    pub offset_bound: f64,
    /// Reject registrations whose final mirror RMS exceeds this, mm.
    pub reject_residual: f64,
    /// Half-width of the profile slab around the symmetry plane, mm.
    pub profile_halfwidth: f64,
    /// Profile bin height, mm.
    pub profile_bin: f64,
    /// Length of the bridge segment fitted above the tip, mm.
    pub bridge_arc: f64,
    /// Minimum protrusion of the tip over its lateral flanks, mm.
    pub prominence_floor: f64,
    /// Lateral offset at which the flanks are probed, mm.
    pub flank_offset: f64,
}

impl Default for RegistrationConfig {
    fn default() -> Self {
        RegistrationConfig {
            roi_radius: 100.0,
            min_roi_points: 300,
            yaw_roll_bound_deg: 30.0,
            offset_bound: 30.0,
            reject_residual: 5.0,
            profile_halfwidth: 2.0,
            profile_bin: 1.0,
            bridge_arc: 30.0,
            prominence_floor: 5.0,
            flank_offset: 15.0,
        }
    }
}

/// The facial symmetry plane: a point on it and its unit normal.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SymmetryPlane {
    pub point: Vec3,
    pub normal: Vec3,
}

/// Result of registering one mesh.
#[derive(Debug, Clone, PartialEq)]
pub struct IntrinsicRegistration {
    /// Raw frame -> intrinsic frame.
    pub transform: RigidTransform,
    /// Detected nose tip in the raw frame.
    pub nose_tip: Vec3,
    /// Final mirror-mismatch RMS of the symmetry search, mm.
    pub symmetry_residual: f64,
    /// Fitted bridge slope before pitch normalization, radians.
    pub bridge_slope: f64,
}

/// Keeps the sphere of vertices around the detected face center; faces that
/// lose a vertex are dropped, validity flags are preserved.
///
/// The face center is found from the frontmost point (max z - the rough
/// pose is assumed to look down +z, which the symmetry search bounds imply
/// anyway): the centroid of valid vertices within 80 mm of it.
pub fn extract_roi(mesh: &TriMesh, cfg: &RegistrationConfig) -> Result<TriMesh, RegistrationError> {
    let mut front: Option<(usize, f64)> = None;
    for (i, v) in mesh.vertices().iter().enumerate() {
        if !mesh.is_vertex_valid(i) {
            continue;
        }
        if front.map_or(true, |(_, z)| v.z > z) {
            front = Some((i, v.z));
        }
    }
    let (front_idx, _) = front.ok_or(RegistrationError::EmptyRoi)?;
    let front_pt = mesh.vertices()[front_idx];

    let mut center = Vec3::ZERO;
    let mut n = 0usize;
    for (i, v) in mesh.vertices().iter().enumerate() {
        if mesh.is_vertex_valid(i) && (*v - front_pt).norm() <= 80.0 {
            center = center + *v;
            n += 1;
        }
    }
    if n == 0 {
        return Err(RegistrationError::EmptyRoi);
    }
    center = center.scale(1.0 / n as f64);

    let r2 = cfg.roi_radius * cfg.roi_radius;
    let keep: Vec<bool> = mesh
        .vertices()
        .iter()
        .map(|v| {
            let d = *v - center;
            d.dot(d) <= r2
        })
        .collect();

    let mut remap = vec![u32::MAX; mesh.vertex_count()];
    let mut vertices = Vec::new();
    let mut validity = Vec::new();
    for (i, v) in mesh.vertices().iter().enumerate() {
        if keep[i] {
            remap[i] = vertices.len() as u32;
            vertices.push(*v);
            validity.push(mesh.is_vertex_valid(i));
        }
    }
    let faces: Vec<[u32; 3]> = mesh
        .faces()
        .iter()
        .filter(|f| f.iter().all(|&v| keep[v as usize]))
        .map(|f| [remap[f[0] as usize], remap[f[1] as usize], remap[f[2] as usize]])
        .collect();

    let valid_count = validity.iter().filter(|v| **v).count();
    if valid_count < cfg.min_roi_points {
        return Err(RegistrationError::EmptyRoi);
    }
    let has_invalid = validity.iter().any(|v| !v);
    Ok(TriMesh::new(vertices, faces, has_invalid.then_some(validity))
        .expect("ROI subset preserves mesh invariants"))
}

/// Coarse scoring raster used inside the symmetry search.
struct CoarseGrid {
    half_x: f64,
    half_y: f64,
    cell: f64,
    nx: usize,
    ny: usize,
    sum: Vec<f64>,
    count: Vec<u32>,
}

impl CoarseGrid {
    fn new() -> CoarseGrid {
        let (half_x, half_y, cell) = (66.0, 81.0, 3.0);
        let nx = (2.0 * half_x / cell) as usize;
        let ny = (2.0 * half_y / cell) as usize;
        CoarseGrid { half_x, half_y, cell, nx, ny, sum: vec![0.0; nx * ny], count: vec![0; nx * ny] }
    }

    fn clear(&mut self) {
        self.sum.iter_mut().for_each(|s| *s = 0.0);
        self.count.iter_mut().for_each(|c| *c = 0);
    }

    #[inline]
    fn bin(&mut self, x: f64, y: f64, z: f64) {
        let fx = (x + self.half_x) / self.cell;
        let fy = (y + self.half_y) / self.cell;
        if fx < 0.0 || fy < 0.0 {
            return;
        }
        let (ix, iy) = (fx as usize, fy as usize);
        if ix >= self.nx || iy >= self.ny {
            return;
        }
        let i = iy * self.nx + ix;
        self.sum[i] += z;
        self.count[i] += 1;
    }

    /// RMS of depth differences between cells and their mirror across
    /// x = offset, linearly interpolated in x. INFINITY when too few cell
    /// pairs overlap.
    fn mirror_rms(&self, offset: f64) -> f64 {
        let mut sq = 0.0;
        let mut n = 0usize;
        let mut valid = 0usize;
        for iy in 0..self.ny {
            let row = iy * self.nx;
            for ix in 0..self.nx {
                let c = self.count[row + ix];
                if c == 0 {
                    continue;
                }
                valid += 1;
                let z = self.sum[row + ix] / c as f64;
                let xc = -self.half_x + (ix as f64 + 0.5) * self.cell;
                let xm = 2.0 * offset - xc;
                let fc = (xm + self.half_x) / self.cell - 0.5;
                if fc < 0.0 || fc >= (self.nx - 1) as f64 {
                    continue;
                }
                let i0 = fc as usize;
                let t = fc - i0 as f64;
                let (c0, c1) = (self.count[row + i0], self.count[row + i0 + 1]);
                if c0 == 0 || c1 == 0 {
                    continue;
                }
                let zm = (self.sum[row + i0] / c0 as f64) * (1.0 - t)
                    + (self.sum[row + i0 + 1] / c1 as f64) * t;
                let d = z - zm;
                sq += d * d;
                n += 1;
            }
        }
        if n < 30 || n * 4 < valid {
            return f64::INFINITY;
        }
        fmath::sqrt(sq / n as f64)
    }
}

/// One coarse-to-fine refinement stage of the symmetry search.
struct SearchStage {
    angle_span: f64,
    angle_step: f64,
    offset_span: f64,
    offset_step: f64,
    point_stride: usize,
}

const SEARCH_STAGES: [SearchStage; 3] = [
    SearchStage { angle_span: f64::INFINITY, angle_step: 5.0, offset_span: f64::INFINITY, offset_step: 6.0, point_stride: 3 },
    SearchStage { angle_span: 5.0, angle_step: 1.0, offset_span: 6.0, offset_step: 1.5, point_stride: 2 },
    SearchStage { angle_span: 1.0, angle_step: 0.2, offset_span: 1.5, offset_step: 0.375, point_stride: 1 },
];

fn axis_candidates(center: f64, span: f64, step: f64, bound: f64) -> Vec<f64> {
    let lo = (center - span).max(-bound);
    let hi = (center + span).min(bound);
    let mut out = Vec::new();
    let n = ((hi - lo) / step + 0.5) as usize;
    for i in 0..=n {
        let v = lo + i as f64 * step;
        if v <= hi + 1e-9 {
            out.push(v);
        }
    }
    out
}

/// Finds the vertical symmetry plane by mirrored-depth RMS over a
/// coarse-to-fine (yaw, roll, lateral offset) grid search. Returns the plane
/// and the final RMS residual in mm.
pub fn find_symmetry_plane(
    roi: &TriMesh,
    cfg: &RegistrationConfig,
) -> Result<(SymmetryPlane, f64), RegistrationError> {
    let points: Vec<Vec3> = roi.valid_vertices().collect();
    if points.is_empty() {
        return Err(RegistrationError::EmptyRoi);
    }
    let mut centroid = Vec3::ZERO;
    for p in &points {
        centroid = centroid + *p;
    }
    centroid = centroid.scale(1.0 / points.len() as f64);
    let centered: Vec<Vec3> = points.iter().map(|p| *p - centroid).collect();

    let mut grid = CoarseGrid::new();
    let mut best = (0.0f64, 0.0f64, 0.0f64); // yaw deg, roll deg, offset mm
    let mut best_score = f64::INFINITY;

    for stage in &SEARCH_STAGES {
        let yaws = axis_candidates(best.0, stage.angle_span, stage.angle_step, cfg.yaw_roll_bound_deg);
        let rolls = axis_candidates(best.1, stage.angle_span, stage.angle_step, cfg.yaw_roll_bound_deg);
        let offsets = axis_candidates(best.2, stage.offset_span, stage.offset_step, cfg.offset_bound);
        let mut stage_best = best;
        let mut stage_score = f64::INFINITY;
        for &yaw in &yaws {
            for &roll in &rolls {
                let align = Mat3::rot_z(fmath::rad(roll))
                    .mul_mat(Mat3::rot_y(fmath::rad(yaw)))
                    .transpose();
                grid.clear();
                let mut i = 0;
                while i < centered.len() {
                    let p = align.mul_vec(centered[i]);
                    grid.bin(p.x, p.y, p.z);
                    i += stage.point_stride;
                }
                for &off in &offsets {
                    let score = grid.mirror_rms(off);
                    if score < stage_score {
                        stage_score = score;
                        stage_best = (yaw, roll, off);
                    }
                }
            }
        }
        if stage_score.is_finite() {
            best = stage_best;
            best_score = stage_score;
        }
    }

    if !best_score.is_finite() || best_score > cfg.reject_residual {
        return Err(RegistrationError::NoConvergence {
            residual: if best_score.is_finite() { best_score } else { f64::INFINITY },
        });
    }

    let normal = Mat3::rot_z(fmath::rad(best.1))
        .mul_mat(Mat3::rot_y(fmath::rad(best.0)))
        .mul_vec(vec3(1.0, 0.0, 0.0));
    let point = centroid + normal.scale(best.2);
    Ok((SymmetryPlane { point, normal }, best_score))
}

/// Rotation that maps the plane normal onto the x axis (the frame the
/// symmetry search scored in).
fn plane_alignment(plane: &SymmetryPlane) -> Mat3 {
    let n = plane.normal;
    let yaw = fmath::asin((-n.z).clamp(-1.0, 1.0));
    let roll = fmath::atan2(n.y, n.x);
    Mat3::rot_z(roll).mul_mat(Mat3::rot_y(yaw)).transpose()
}

struct NoseFeatures {
    tip_raw: Vec3,
    tip_aligned: Vec3,
    bridge_slope: f64,
    align: Mat3,
}

fn detect_nose_features_impl(
    roi: &TriMesh,
    plane: &SymmetryPlane,
    cfg: &RegistrationConfig,
) -> Result<NoseFeatures, RegistrationError> {
    let align = plane_alignment(plane);
    let aligned: Vec<Vec3> =
        roi.valid_vertices().map(|p| align.mul_vec(p - plane.point)).collect();

    // Symmetry profile: mean depth of the slab |x| <= halfwidth, binned in y.
    let mut y_min = f64::INFINITY;
    let mut y_max = f64::NEG_INFINITY;
    for p in &aligned {
        if fmath::abs(p.x) <= cfg.profile_halfwidth {
            y_min = y_min.min(p.y);
            y_max = y_max.max(p.y);
        }
    }
    if !y_min.is_finite() || y_max - y_min < 10.0 * cfg.profile_bin {
        return Err(RegistrationError::NoNoseFound);
    }
    let nbins = ((y_max - y_min) / cfg.profile_bin) as usize + 1;
    let mut sum = vec![0.0; nbins];
    let mut count = vec![0u32; nbins];
    for p in &aligned {
        if fmath::abs(p.x) <= cfg.profile_halfwidth {
            let b = ((p.y - y_min) / cfg.profile_bin) as usize;
            let b = b.min(nbins - 1);
            sum[b] += p.z;
            count[b] += 1;
        }
    }

    // 3-bin count-weighted smoothing; empty bins stay empty.
    let raw: Vec<Option<f64>> = (0..nbins)
        .map(|b| (count[b] > 0).then(|| sum[b] / count[b] as f64))
        .collect();
    let profile: Vec<Option<f64>> = (0..nbins)
        .map(|b| {
            let mut s = 0.0;
            let mut w = 0.0;
            for nb in b.saturating_sub(1)..=(b + 1).min(nbins - 1) {
                if let Some(z) = raw[nb] {
                    let cw = count[nb] as f64;
                    s += z * cw;
                    w += cw;
                }
            }
            raw[b].map(|_| s / w)
        })
        .collect();

    let data_bins: Vec<usize> =
        (0..nbins).filter(|&b| profile[b].is_some()).collect();
    if data_bins.len() < 8 {
        return Err(RegistrationError::NoNoseFound);
    }
    // Most protruding interior bin; the data-range edges cannot host a tip.
    let interior = &data_bins[2..data_bins.len() - 2];
    let mut tip_bin = None;
    let mut tip_z = f64::NEG_INFINITY;
    for &b in interior {
        let z = profile[b].unwrap();
        if z > tip_z {
            tip_z = z;
            tip_bin = Some(b);
        }
    }
    let tip_bin = tip_bin.ok_or(RegistrationError::NoNoseFound)?;

    // Parabolic refinement when both neighbors carry data.
    let bin_y = |b: usize| y_min + (b as f64 + 0.5) * cfg.profile_bin;
    let (mut tip_y, mut tip_depth) = (bin_y(tip_bin), tip_z);
    if tip_bin > 0 && tip_bin + 1 < nbins {
        if let (Some(zl), Some(zr)) = (profile[tip_bin - 1], profile[tip_bin + 1]) {
            let denom = zl - 2.0 * tip_z + zr;
            if fmath::abs(denom) > 1e-12 {
                let shift = (0.5 * (zl - zr) / denom).clamp(-0.5, 0.5);
                tip_y = bin_y(tip_bin) + shift * cfg.profile_bin;
                tip_depth = tip_z - 0.25 * (zl - zr) * shift;
            }
        }
    }

    // The tip must protrude over its lateral flanks; a linear field (any
    // plane) scores zero here.
    let mut flank = [0.0f64; 2];
    let mut flank_n = [0u32; 2];
    for p in &aligned {
        if fmath::abs(p.y - tip_y) <= 3.0 {
            for (side, sign) in [(0usize, -1.0), (1usize, 1.0)] {
                if fmath::abs(p.x - sign * cfg.flank_offset) <= 3.0 {
                    flank[side] += p.z;
                    flank_n[side] += 1;
                }
            }
        }
    }
    if flank_n[0] == 0 || flank_n[1] == 0 {
        return Err(RegistrationError::NoNoseFound);
    }
    let prominence =
        tip_depth - 0.5 * (flank[0] / flank_n[0] as f64 + flank[1] / flank_n[1] as f64);
    if prominence < cfg.prominence_floor {
        return Err(RegistrationError::NoNoseFound);
    }

    // Bridge slope: count-weighted straight-line fit over the profile
    // segment from the tip upward.
    let mut sw = 0.0;
    let mut sy = 0.0;
    let mut sz = 0.0;
    let mut syy = 0.0;
    let mut syz = 0.0;
    let mut nb = 0usize;
    for &b in &data_bins {
        let y = bin_y(b) - tip_y;
        if y < 0.0 || y > cfg.bridge_arc {
            continue;
        }
        let w = count[b] as f64;
        let z = profile[b].unwrap();
        sw += w;
        sy += w * y;
        sz += w * z;
        syy += w * y * y;
        syz += w * y * z;
        nb += 1;
    }
    if nb < 5 {
        return Err(RegistrationError::NoNoseFound);
    }
    let denom = sw * syy - sy * sy;
    if fmath::abs(denom) < 1e-9 {
        return Err(RegistrationError::NoNoseFound);
    }
    let slope = (sw * syz - sy * sz) / denom;
    let bridge_slope = fmath::atan(slope);

    let tip_aligned = vec3(0.0, tip_y, tip_depth);
    let tip_raw = align.transpose().mul_vec(tip_aligned) + plane.point;
    Ok(NoseFeatures { tip_raw, tip_aligned, bridge_slope, align })
}

/// Nose tip (raw frame) and bridge slope (radians) from the symmetry
/// profile.
pub fn detect_nose_features(
    roi: &TriMesh,
    plane: &SymmetryPlane,
    cfg: &RegistrationConfig,
) -> Result<(Vec3, f64), RegistrationError> {
    let nf = detect_nose_features_impl(roi, plane, cfg)?;
    Ok((nf.tip_raw, nf.bridge_slope))
}

/// Full registration: ROI, symmetry plane, nose features, composed into
/// one rigid transform that puts the tip at the origin, the plane at x = 0
/// and the bridge direction along +y.
pub fn register(
    mesh: &TriMesh,
    cfg: &RegistrationConfig,
) -> Result<IntrinsicRegistration, RegistrationError> {
    let roi = extract_roi(mesh, cfg)?;
    let (plane, residual) = find_symmetry_plane(&roi, cfg)?;
    let nf = detect_nose_features_impl(&roi, &plane, cfg)?;

    let pitch_fix = Mat3::rot_x(-nf.bridge_slope);
    let rotation = pitch_fix.mul_mat(nf.align);
    let translation = -rotation.mul_vec(nf.tip_raw);
    let transform = RigidTransform::from_parts(rotation, translation);
    debug_assert!(transform.apply(nf.tip_raw).norm() <= 1e-6);
    let _ = nf.tip_aligned;

    Ok(IntrinsicRegistration {
        transform,
        nose_tip: nf.tip_raw,
        symmetry_residual: residual,
        bridge_slope: nf.bridge_slope,
    })
}

/// Transforms the mesh into the intrinsic frame and samples depth on the
/// grid by triangle interpolation; where several triangles cover a cell the
/// depth closest to the sensor wins. Cells covered by no valid face stay
/// HOLE.
pub fn rasterize(
    mesh: &TriMesh,
    reg: &IntrinsicRegistration,
    grid: &GridSpec,
) -> Result<DepthMap, RegistrationError> {
    let verts: Vec<Vec3> = mesh.vertices().iter().map(|&v| reg.transform.apply(v)).collect();
    let mut map = DepthMap::new_empty(*grid);
    let mut covered = false;

    for face in mesh.faces() {
        let a = verts[face[0] as usize];
        let b = verts[face[1] as usize];
        let c = verts[face[2] as usize];

        let min_x = a.x.min(b.x).min(c.x);
        let max_x = a.x.max(b.x).max(c.x);
        let min_y = a.y.min(b.y).min(c.y);
        let max_y = a.y.max(b.y).max(c.y);

        let ix_lo = fmath::ceil((min_x - grid.origin_x) / grid.spacing_x - 0.5).max(0.0);
        let ix_hi = fmath::floor((max_x - grid.origin_x) / grid.spacing_x - 0.5);
        let iy_lo = fmath::ceil((min_y - grid.origin_y) / grid.spacing_y - 0.5).max(0.0);
        let iy_hi = fmath::floor((max_y - grid.origin_y) / grid.spacing_y - 0.5);
        if ix_hi < ix_lo || iy_hi < iy_lo || ix_lo >= grid.width as f64 || iy_lo >= grid.height as f64 {
            continue;
        }
        let ix_lo = ix_lo as usize;
        let ix_hi = (ix_hi as usize).min(grid.width - 1);
        let iy_lo = iy_lo as usize;
        let iy_hi = (iy_hi as usize).min(grid.height - 1);

        let denom = (b.y - c.y) * (a.x - c.x) + (c.x - b.x) * (a.y - c.y);
        if fmath::abs(denom) < 1e-12 {
            continue;
        }
        for iy in iy_lo..=iy_hi {
            let py = grid.y_of(iy);
            for ix in ix_lo..=ix_hi {
                let px = grid.x_of(ix);
                let wa = ((b.y - c.y) * (px - c.x) + (c.x - b.x) * (py - c.y)) / denom;
                let wb = ((c.y - a.y) * (px - c.x) + (a.x - c.x) * (py - c.y)) / denom;
                let wc = 1.0 - wa - wb;
                if wa < -1e-9 || wb < -1e-9 || wc < -1e-9 {
                    continue;
                }
                let z = wa * a.z + wb * b.z + wc * c.z;
                match map.get(ix, iy) {
                    Some(prev) if prev >= z => {}
                    _ => map.set(ix, iy, z),
                }
                covered = true;
            }
        }
    }

    if !covered {
        return Err(RegistrationError::EmptyProjection);
    }
    Ok(map)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::apply_transform;
    use crate::synth::{build_face_mesh, SampleRealization, SubjectParams};
    use alloc::vec;

    fn sample_face(subject: u32) -> TriMesh {
        let params = SubjectParams::sample(subject, 1234);
        build_face_mesh(&params, &SampleRealization::neutral(false), 2.0, 0.0, 0).mesh
    }

    #[test]
    fn roi_is_translation_invariant() {
        let cfg = RegistrationConfig::default();
        let mesh = sample_face(0);
        let shifted = apply_transform(
            &mesh,
            &RigidTransform::from_euler_deg(0.0, 0.0, 0.0, vec3(500.0, -200.0, 120.0)),
        );
        let roi_a = extract_roi(&mesh, &cfg).unwrap();
        let roi_b = extract_roi(&shifted, &cfg).unwrap();
        assert_eq!(roi_a.vertex_count(), roi_b.vertex_count());
        assert_eq!(roi_a.faces(), roi_b.faces());
    }

    #[test]
    fn sparse_noise_cloud_is_rejected() {
        // 200 scattered points in a 500 mm cube: no dominant cluster.
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let vertices: Vec<Vec3> = (0..200)
            .map(|_| {
                vec3(
                    rng.gen_range(-250.0..250.0),
                    rng.gen_range(-250.0..250.0),
                    rng.gen_range(-250.0..250.0),
                )
            })
            .collect();
        let cloud = TriMesh::new(vertices, vec![], None).unwrap();
        assert_eq!(extract_roi(&cloud, &RegistrationConfig::default()), Err(RegistrationError::EmptyRoi));
    }

    #[test]
    fn symmetric_face_yields_x_axis_plane_normal() {
        let cfg = RegistrationConfig::default();
        let mut params = SubjectParams::sample(3, 77);
        params.cheek_asymmetry = 0.0;
        let mesh = build_face_mesh(&params, &SampleRealization::neutral(false), 2.0, 0.0, 0).mesh;
        let roi = extract_roi(&mesh, &cfg).unwrap();
        let (plane, residual) = find_symmetry_plane(&roi, &cfg).unwrap();
        let angle = fmath::deg(fmath::atan2(
            fmath::hypot(plane.normal.y, plane.normal.z),
            fmath::abs(plane.normal.x),
        ));
        assert!(angle <= 0.5, "plane normal {angle:.2} deg off the x axis");
        assert!(residual <= 0.5, "residual {residual}");
    }

    #[test]
    fn known_yaw_is_recovered_within_a_degree() {
        let cfg = RegistrationConfig::default();
        let mut params = SubjectParams::sample(8, 77);
        params.cheek_asymmetry = 0.0;
        let mesh = build_face_mesh(&params, &SampleRealization::neutral(false), 2.0, 0.0, 0).mesh;
        let yawed = apply_transform(&mesh, &RigidTransform::from_euler_deg(10.0, 0.0, 0.0, Vec3::ZERO));
        let roi = extract_roi(&yawed, &cfg).unwrap();
        let (plane, _) = find_symmetry_plane(&roi, &cfg).unwrap();
        // applied yaw rotates the x axis to the expected normal
        let expected = Mat3::rot_y(fmath::rad(10.0)).mul_vec(vec3(1.0, 0.0, 0.0));
        let dot = fmath::abs(plane.normal.dot(expected)).clamp(-1.0, 1.0);
        let err_deg = fmath::deg(fmath::atan2(fmath::sqrt(1.0 - dot * dot), dot));
        assert!(err_deg <= 1.0, "recovered plane off by {err_deg:.2} deg");
    }

    #[test]
    fn detected_tip_matches_ground_truth_within_2mm() {
        let cfg = RegistrationConfig::default();
        for subject in 0..4u32 {
            let params = SubjectParams::sample(subject, 55);
            let rec = build_face_mesh(&params, &SampleRealization::neutral(false), 2.0, 0.0, 0);
            let roi = extract_roi(&rec.mesh, &cfg).unwrap();
            let (plane, _) = find_symmetry_plane(&roi, &cfg).unwrap();
            let (tip, _slope) = detect_nose_features(&roi, &plane, &cfg).unwrap();
            let err = (tip - rec.truth.nose_tip).norm();
            assert!(err <= 2.0, "subject {subject}: tip error {err:.2} mm");
        }
    }

    #[test]
    fn exaggerated_nose_keeps_tip_location() {
        let cfg = RegistrationConfig::default();
        let mut params = SubjectParams::sample(2, 55);
        params.nose_height = 18.0;
        let rec = build_face_mesh(&params, &SampleRealization::neutral(false), 2.0, 0.0, 0);
        let roi = extract_roi(&rec.mesh, &cfg).unwrap();
        let (plane, _) = find_symmetry_plane(&roi, &cfg).unwrap();
        let (tip, _) = detect_nose_features(&roi, &plane, &cfg).unwrap();
        assert!((tip - rec.truth.nose_tip).norm() <= 2.0);
    }

    #[test]
    fn flat_plane_has_no_nose() {
        let cfg = RegistrationConfig::default();
        let mut vertices = Vec::new();
        let n = 40usize;
        for iy in 0..n {
            for ix in 0..n {
                vertices.push(vec3(ix as f64 * 3.0 - 60.0, iy as f64 * 3.0 - 60.0, 5.0));
            }
        }
        let mut faces = Vec::new();
        for iy in 0..n - 1 {
            for ix in 0..n - 1 {
                let v = (iy * n + ix) as u32;
                faces.push([v, v + 1, v + n as u32 + 1]);
                faces.push([v, v + n as u32 + 1, v + n as u32]);
            }
        }
        let plane_mesh = TriMesh::new(vertices, faces, None).unwrap();
        let roi = extract_roi(&plane_mesh, &cfg).unwrap();
        let res = find_symmetry_plane(&roi, &cfg)
            .and_then(|(plane, _)| detect_nose_features(&roi, &plane, &cfg));
        assert_eq!(res.unwrap_err(), RegistrationError::NoNoseFound);
    }

    #[test]
    fn registered_nose_tip_lands_on_the_origin() {
        let cfg = RegistrationConfig::default();
        let mesh = sample_face(1);
        let reg = register(&mesh, &cfg).unwrap();
        assert!(reg.transform.apply(reg.nose_tip).norm() <= 1e-6);
    }

    #[test]
    fn rasterize_constant_triangle_interpolates_exactly() {
        // One big triangle at z = 3 covering the center of a small grid.
        let tri = TriMesh::new(
            vec![vec3(-20.0, -20.0, 3.0), vec3(20.0, -20.0, 3.0), vec3(0.0, 25.0, 3.0)],
            vec![[0, 1, 2]],
            None,
        )
        .unwrap();
        let reg = IntrinsicRegistration {
            transform: RigidTransform::IDENTITY,
            nose_tip: Vec3::ZERO,
            symmetry_residual: 0.0,
            bridge_slope: 0.0,
        };
        let grid = GridSpec::new(20, 20, -15.0, -15.0, 1.5, 1.5).unwrap();
        let map = rasterize(&tri, &reg, &grid).unwrap();
        let mut seen = 0;
        for iy in 0..20 {
            for ix in 0..20 {
                if let Some(z) = map.get(ix, iy) {
                    assert!((z - 3.0).abs() < 1e-12);
                    seen += 1;
                }
            }
        }
        assert!(seen > 50, "triangle should cover many cells, got {seen}");
    }

    #[test]
    fn rasterize_far_away_mesh_is_empty_projection() {
        let tri = TriMesh::new(
            vec![vec3(500.0, 500.0, 3.0), vec3(520.0, 500.0, 3.0), vec3(500.0, 520.0, 3.0)],
            vec![[0, 1, 2]],
            None,
        )
        .unwrap();
        let reg = IntrinsicRegistration {
            transform: RigidTransform::IDENTITY,
            nose_tip: Vec3::ZERO,
            symmetry_residual: 0.0,
            bridge_slope: 0.0,
        };
        let grid = GridSpec::new(10, 10, -15.0, -15.0, 1.5, 1.5).unwrap();
        assert_eq!(rasterize(&tri, &reg, &grid), Err(RegistrationError::EmptyProjection));
    }
}
