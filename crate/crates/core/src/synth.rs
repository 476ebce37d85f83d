//! Deterministic parametric generator of face-like 3D surfaces.
//!
//! Stands in for real scan corpora at desk scale: a population is a pure
//! function of `(seed, config)`, every sample carries exact ground truth
//! (nose-tip location, applied pose), and the surfaces expose precisely the
//! features the registration stage needs — a vertical symmetry plane, a
//! protruding nose with a bridge, eye sockets that can be punched into
//! holes.
//!
//! A face is a sum of smooth bumps on a lateral grid, so the canonical
//! surface is a heightfield by construction:
//!
//! * an ellipsoidal dome for the head,
//! * a Gaussian ridge for the nose (sharp decay below the tip, slow decay
//!   up the bridge),
//! * a brow ridge, two eye-socket depressions, cheek bumps with a small
//!   left/right asymmetry, lips and a chin bump,
//! * an optional expression warp (mouth/brow region) and white surface
//!   noise per sample.

use alloc::vec::Vec;
use core::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::fmath;
use crate::geom::{vec3, RigidTransform, Vec3};
use crate::mesh::TriMesh;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SynthError {
    InvalidConfig(&'static str),
    UnknownId { subject: u32, sample: u32 },
}

impl fmt::Display for SynthError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SynthError::InvalidConfig(msg) => write!(f, "invalid population config: {msg}"),
            SynthError::UnknownId { subject, sample } => {
                write!(f, "no generated sample with subject {subject}, sample {sample}")
            }
        }
    }
}

impl core::error::Error for SynthError {}

/// Per-subject shape parameters, all in millimeters.
///
/// Generated values stay inside the bounds noted per field; the spread is
/// what separates identities under the matchers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectParams {
    pub subject_id: u32,
    /// Nose ridge amplitude at the tip. 9..18.
    pub nose_height: f64,
    /// Lateral Gaussian width of the ridge. 9..15.
    pub nose_width: f64,
    /// Decay length of the ridge up the bridge. 20..32.
    pub nose_length: f64,
    /// Brow ridge amplitude. 1..5.
    pub brow_prominence: f64,
    /// Eye socket depression depth. 2.5..6.
    pub socket_depth: f64,
    /// Lateral distance from the midline to each socket center. 26..36.
    pub eye_spacing: f64,
    /// Socket Gaussian radius. 8..11.
    pub socket_radius: f64,
    /// Head dome amplitude. 38..55.
    pub dome_height: f64,
    /// Dome lateral radius. 70..95.
    pub dome_radius_x: f64,
    /// Dome vertical radius. 100..135.
    pub dome_radius_y: f64,
    /// Right-minus-left cheek amplitude difference. -0.8..0.8.
    pub cheek_asymmetry: f64,
}

/// Sample-level acquisition nuisance: pose offset, surface noise,
/// expression warp, and whether eye sockets are punched into holes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleNoise {
    /// Max magnitude of each pose angle (yaw/pitch/roll), degrees.
    pub max_rotation_deg: f64,
    /// Max magnitude of each translation component, mm.
    pub max_translation: f64,
    /// Additive white surface noise sigma, mm.
    pub surface_sigma: f64,
    /// Max magnitude of the expression warp, mm.
    pub expression_magnitude: f64,
    /// Punch eye-socket holes into the mesh.
    pub eye_holes: bool,
}

impl SampleNoise {
    pub const ZERO: SampleNoise = SampleNoise {
        max_rotation_deg: 0.0,
        max_translation: 0.0,
        surface_sigma: 0.0,
        expression_magnitude: 0.0,
        eye_holes: false,
    };

    /// Default acquisition profile (the "uncontrolled" analog).
    pub fn default_profile() -> SampleNoise {
        SampleNoise {
            max_rotation_deg: 6.0,
            max_translation: 10.0,
            surface_sigma: 0.06,
            expression_magnitude: 1.5,
            eye_holes: true,
        }
    }

    /// Low-noise capture (the "controlled" analog).
    pub fn controlled_profile() -> SampleNoise {
        SampleNoise {
            max_rotation_deg: 3.0,
            max_translation: 5.0,
            surface_sigma: 0.03,
            expression_magnitude: 0.6,
            eye_holes: true,
        }
    }

    fn validate(&self) -> Result<(), SynthError> {
        if self.surface_sigma < 0.0 || !self.surface_sigma.is_finite() {
            return Err(SynthError::InvalidConfig("surface_sigma must be >= 0"));
        }
        if self.max_rotation_deg < 0.0 || self.max_rotation_deg > 45.0 {
            return Err(SynthError::InvalidConfig("max_rotation_deg must be in [0, 45]"));
        }
        if self.max_translation < 0.0 {
            return Err(SynthError::InvalidConfig("max_translation must be >= 0"));
        }
        if self.expression_magnitude < 0.0 {
            return Err(SynthError::InvalidConfig("expression_magnitude must be >= 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PopulationConfig {
    pub seed: u64,
    pub n_subjects: u32,
    pub samples_per_subject: u32,
    pub noise: SampleNoise,
    /// Lateral vertex spacing of the generated meshes, mm.
    pub mesh_step: f64,
}

impl PopulationConfig {
    pub fn new(seed: u64, n_subjects: u32, samples_per_subject: u32, noise: SampleNoise) -> Self {
        PopulationConfig { seed, n_subjects, samples_per_subject, noise, mesh_step: 2.0 }
    }
}

/// Exact generator-side ground truth for one sample.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleTruth {
    /// Nose tip (apex of the noise-free surface) in the emitted mesh frame.
    pub nose_tip: Vec3,
    /// Pose applied to the canonical surface.
    pub pose: RigidTransform,
    /// Expression warp magnitude actually applied.
    pub expression: f64,
    /// Per-vertex flag: vertex belongs to the face region (within 80 mm of
    /// the nose in the canonical frame).
    pub face_mask: Vec<bool>,
}

#[derive(Debug, Clone)]
pub struct SampleRecord {
    pub subject_id: u32,
    pub sample_id: u32,
    pub mesh: TriMesh,
    pub truth: SampleTruth,
}

#[derive(Debug, Clone)]
pub struct Population {
    pub config: PopulationConfig,
    pub subjects: Vec<SubjectParams>,
    pub records: Vec<SampleRecord>,
}

impl Population {
    pub fn get(&self, subject_id: u32, sample_id: u32) -> Result<&SampleRecord, SynthError> {
        self.records
            .iter()
            .find(|r| r.subject_id == subject_id && r.sample_id == sample_id)
            .ok_or(SynthError::UnknownId { subject: subject_id, sample: sample_id })
    }

    /// Exact generator-side nose tip (mesh frame) and applied pose.
    pub fn ground_truth(
        &self,
        subject_id: u32,
        sample_id: u32,
    ) -> Result<(Vec3, RigidTransform), SynthError> {
        let r = self.get(subject_id, sample_id)?;
        Ok((r.truth.nose_tip, r.truth.pose))
    }
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Stable seed derivation, so per-subject and per-sample streams are
/// independent of generation order.
fn derive_seed(parts: &[u64]) -> u64 {
    let mut h = 0x6A09_E667_F3BC_C909;
    for &p in parts {
        h = splitmix64(h ^ p);
    }
    h
}

fn uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    if hi <= lo {
        lo
    } else {
        rng.gen_range(lo..hi)
    }
}

/// Standard normal via Box-Muller (libm-backed, so bit-stable).
fn gauss(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = 1.0 - rng.gen::<f64>(); // (0, 1]
    let u2: f64 = rng.gen::<f64>();
    fmath::sqrt(-2.0 * fmath::ln(u1)) * fmath::cos(2.0 * fmath::PI * u2)
}

impl SubjectParams {
    /// Draws subject parameters from the documented bounds. The draw order
    /// is part of the determinism contract; do not reorder.
    pub fn sample(subject_id: u32, population_seed: u64) -> SubjectParams {
        let mut rng =
            ChaCha8Rng::seed_from_u64(derive_seed(&[population_seed, 0x51, subject_id as u64]));
        SubjectParams {
            subject_id,
            nose_height: uniform(&mut rng, 9.0, 18.0),
            nose_width: uniform(&mut rng, 9.0, 15.0),
            nose_length: uniform(&mut rng, 20.0, 32.0),
            brow_prominence: uniform(&mut rng, 1.0, 5.0),
            socket_depth: uniform(&mut rng, 2.5, 6.0),
            eye_spacing: uniform(&mut rng, 26.0, 36.0),
            socket_radius: uniform(&mut rng, 8.0, 11.0),
            dome_height: uniform(&mut rng, 38.0, 55.0),
            dome_radius_x: uniform(&mut rng, 70.0, 95.0),
            dome_radius_y: uniform(&mut rng, 100.0, 135.0),
            cheek_asymmetry: uniform(&mut rng, -0.8, 0.8),
        }
    }

    /// Canonical (noise-free, expressionless) surface height at `(x, y)`.
    pub fn surface_z(&self, x: f64, y: f64) -> f64 {
        let rx = x / self.dome_radius_x;
        let ry = (y - 25.0) / self.dome_radius_y;
        let dome = self.dome_height * fmath::exp(-fmath::powf(rx * rx + ry * ry, 1.4));

        let decay = if y >= 0.0 { y / self.nose_length } else { y / 9.0 };
        let nx = x / self.nose_width;
        let nose = self.nose_height * fmath::exp(-nx * nx - decay * decay);

        let by = (y - 40.0) / 9.0;
        let bx = (x / 36.0) * (x / 36.0);
        let brow = self.brow_prominence * fmath::exp(-by * by - bx * bx);

        let socket = |cx: f64| -> f64 {
            let dx = (x - cx) / (1.25 * self.socket_radius);
            let dy = (y - 30.0) / self.socket_radius;
            fmath::exp(-dx * dx - dy * dy)
        };
        let sockets = self.socket_depth * (socket(-self.eye_spacing) + socket(self.eye_spacing));

        let cheek_x = self.eye_spacing + 8.0;
        let cheek = |cx: f64, amp: f64| -> f64 {
            let dx = (x - cx) / 15.0;
            let dy = (y + 18.0) / 17.0;
            amp * fmath::exp(-dx * dx - dy * dy)
        };
        let cheeks = cheek(-cheek_x, 2.5 - 0.5 * self.cheek_asymmetry)
            + cheek(cheek_x, 2.5 + 0.5 * self.cheek_asymmetry);

        let lx = x / 16.0;
        let ly = (y + 34.0) / 6.0;
        let lips = 1.5 * fmath::exp(-lx * lx - ly * ly);

        let cx = x / 13.0;
        let cy = (y + 58.0) / 11.0;
        let chin = 2.2 * fmath::exp(-cx * cx - cy * cy);

        dome + nose + brow - sockets + cheeks + lips + chin
    }

    /// True whether the canonical point `(x, y)` lies inside an eye-socket
    /// hole ellipse.
    pub fn in_eye_hole(&self, x: f64, y: f64) -> bool {
        let check = |cx: f64| -> bool {
            let dx = (x - cx) / (0.85 * self.socket_radius);
            let dy = (y - 30.0) / (0.7 * self.socket_radius);
            dx * dx + dy * dy <= 1.0
        };
        check(-self.eye_spacing) || check(self.eye_spacing)
    }
}

/// Expression warp: a mouth-region bump paired with a weaker opposite brow
/// shift, scaled by `e` (mm).
fn expression_z(x: f64, y: f64, e: f64) -> f64 {
    let mx = x / 18.0;
    let my = (y + 34.0) / 10.0;
    let bx = x / 26.0;
    let by = (y - 43.0) / 9.0;
    e * fmath::exp(-mx * mx - my * my) - 0.55 * e * fmath::exp(-bx * bx - by * by)
}

/// Full (noise-free) surface: canonical shape plus expression warp.
pub fn surface_with_expression(params: &SubjectParams, x: f64, y: f64, expression: f64) -> f64 {
    params.surface_z(x, y) + expression_z(x, y, expression)
}

/// Apex of the noise-free surface along the centerline: the ground-truth
/// nose tip in the canonical frame.
pub fn canonical_nose_tip(params: &SubjectParams, expression: f64) -> Vec3 {
    let z_at = |y: f64| surface_with_expression(params, 0.0, y, expression);
    // coarse scan, then ternary refinement
    let mut best_y = 0.0;
    let mut best_z = f64::NEG_INFINITY;
    let mut y = -20.0;
    while y <= 30.0 {
        let z = z_at(y);
        if z > best_z {
            best_z = z;
            best_y = y;
        }
        y += 0.25;
    }
    let (mut lo, mut hi) = (best_y - 0.5, best_y + 0.5);
    for _ in 0..200 {
        let m1 = lo + (hi - lo) / 3.0;
        let m2 = hi - (hi - lo) / 3.0;
        if z_at(m1) < z_at(m2) {
            lo = m1;
        } else {
            hi = m2;
        }
    }
    let y_tip = 0.5 * (lo + hi);
    vec3(0.0, y_tip, z_at(y_tip))
}

/// Everything that realizes one sample of a subject, minus the white noise.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleRealization {
    pub pose: RigidTransform,
    pub expression: f64,
    pub eye_holes: bool,
}

impl SampleRealization {
    pub fn neutral(eye_holes: bool) -> SampleRealization {
        SampleRealization { pose: RigidTransform::IDENTITY, expression: 0.0, eye_holes }
    }
}

/// Lateral extent of the generated meshes (canonical frame).
const MESH_X_HALF: f64 = 96.0;
const MESH_Y_MIN: f64 = -80.0;
const MESH_Y_MAX: f64 = 116.0;
const FACE_REGION_RADIUS: f64 = 80.0;
const FACE_REGION_CENTER_Y: f64 = 20.0;

/// Builds one sample mesh: heightfield sampling on a regular lateral grid,
/// optional eye holes, white noise from `noise_seed`, then the pose.
pub fn build_face_mesh(
    params: &SubjectParams,
    real: &SampleRealization,
    mesh_step: f64,
    surface_sigma: f64,
    noise_seed: u64,
) -> SampleRecord {
    assert!(mesh_step > 0.0, "mesh_step must be positive");
    let nx = (2.0 * MESH_X_HALF / mesh_step) as usize + 1;
    let ny = ((MESH_Y_MAX - MESH_Y_MIN) / mesh_step) as usize + 1;

    let mut noise_rng = ChaCha8Rng::seed_from_u64(noise_seed);
    let mut vertices = Vec::with_capacity(nx * ny);
    let mut validity = Vec::with_capacity(nx * ny);
    let mut face_mask = Vec::with_capacity(nx * ny);

    for iy in 0..ny {
        let y = MESH_Y_MIN + iy as f64 * mesh_step;
        for ix in 0..nx {
            let x = -MESH_X_HALF + ix as f64 * mesh_step;
            let z = surface_with_expression(params, x, y, real.expression)
                + surface_sigma * gauss(&mut noise_rng);
            vertices.push(vec3(x, y, z));
            validity.push(!(real.eye_holes && params.in_eye_hole(x, y)));
            let dx = x;
            let dy = y - FACE_REGION_CENTER_Y;
            face_mask.push(dx * dx + dy * dy <= FACE_REGION_RADIUS * FACE_REGION_RADIUS);
        }
    }

    let mut faces = Vec::with_capacity(2 * (nx - 1) * (ny - 1));
    for iy in 0..ny - 1 {
        for ix in 0..nx - 1 {
            let v00 = (iy * nx + ix) as u32;
            let v10 = v00 + 1;
            let v01 = v00 + nx as u32;
            let v11 = v01 + 1;
            let all_valid = validity[v00 as usize]
                && validity[v10 as usize]
                && validity[v01 as usize]
                && validity[v11 as usize];
            if all_valid {
                faces.push([v00, v10, v11]);
                faces.push([v00, v11, v01]);
            }
        }
    }

    let has_holes = validity.iter().any(|v| !v);
    let canonical = TriMesh::new(vertices, faces, has_holes.then_some(validity))
        .expect("generated mesh satisfies invariants");
    let mesh = crate::mesh::apply_transform(&canonical, &real.pose);
    let tip_canonical = canonical_nose_tip(params, real.expression);

    SampleRecord {
        subject_id: params.subject_id,
        sample_id: 0,
        mesh,
        truth: SampleTruth {
            nose_tip: real.pose.apply(tip_canonical),
            pose: real.pose,
            expression: real.expression,
            face_mask,
        },
    }
}

/// Generates the full population. Deterministic in `(seed, config)`;
/// per-subject and per-sample randomness is derived from the seed and the
/// ids, never from generation order. Sample 0 of every subject is neutral:
/// identity pose and zero expression (surface noise still applies).
pub fn generate_population(config: &PopulationConfig) -> Result<Population, SynthError> {
    if config.n_subjects < 2 {
        return Err(SynthError::InvalidConfig("need at least 2 subjects"));
    }
    if config.samples_per_subject < 1 {
        return Err(SynthError::InvalidConfig("need at least 1 sample per subject"));
    }
    if !(config.mesh_step > 0.0) || config.mesh_step > 10.0 {
        return Err(SynthError::InvalidConfig("mesh_step must be in (0, 10]"));
    }
    config.noise.validate()?;

    let mut subjects = Vec::with_capacity(config.n_subjects as usize);
    let mut records = Vec::new();
    for subject_id in 0..config.n_subjects {
        let params = SubjectParams::sample(subject_id, config.seed);
        for sample_id in 0..config.samples_per_subject {
            let real = realize_sample(config, subject_id, sample_id);
            let noise_seed =
                derive_seed(&[config.seed, 0xA0, subject_id as u64, sample_id as u64]);
            let mut rec = build_face_mesh(
                &params,
                &real,
                config.mesh_step,
                config.noise.surface_sigma,
                noise_seed,
            );
            rec.sample_id = sample_id;
            records.push(rec);
        }
        subjects.push(params);
    }
    Ok(Population { config: config.clone(), subjects, records })
}

/// Draws the pose/expression realization for `(subject, sample)`.
fn realize_sample(config: &PopulationConfig, subject_id: u32, sample_id: u32) -> SampleRealization {
    let noise = &config.noise;
    if sample_id == 0 {
        return SampleRealization::neutral(noise.eye_holes);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(&[
        config.seed,
        0x5A,
        subject_id as u64,
        sample_id as u64,
    ]));
    let r = noise.max_rotation_deg;
    let yaw = uniform(&mut rng, -r, r);
    let pitch = uniform(&mut rng, -r, r);
    let roll = uniform(&mut rng, -r, r);
    let t = noise.max_translation;
    let tx = uniform(&mut rng, -t, t);
    let ty = uniform(&mut rng, -t, t);
    let tz = uniform(&mut rng, -t, t);
    let e = noise.expression_magnitude;
    let expression = uniform(&mut rng, -e, e);
    SampleRealization {
        pose: RigidTransform::from_euler_deg(yaw, pitch, roll, vec3(tx, ty, tz)),
        expression,
        eye_holes: noise.eye_holes,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn meshes_bitwise_eq(a: &TriMesh, b: &TriMesh) -> bool {
        a.faces() == b.faces()
            && a.validity() == b.validity()
            && a.vertices().len() == b.vertices().len()
            && a.vertices().iter().zip(b.vertices()).all(|(p, q)| {
                p.x.to_bits() == q.x.to_bits()
                    && p.y.to_bits() == q.y.to_bits()
                    && p.z.to_bits() == q.z.to_bits()
            })
    }

    #[test]
    fn same_seed_is_bitwise_identical() {
        let cfg = PopulationConfig::new(7, 3, 2, SampleNoise::default_profile());
        let a = generate_population(&cfg).unwrap();
        let b = generate_population(&cfg).unwrap();
        assert_eq!(a.records.len(), b.records.len());
        for (ra, rb) in a.records.iter().zip(&b.records) {
            assert!(meshes_bitwise_eq(&ra.mesh, &rb.mesh));
            assert_eq!(ra.truth.pose, rb.truth.pose);
        }
    }

    #[test]
    fn zero_noise_makes_samples_of_a_subject_identical() {
        let cfg = PopulationConfig::new(3, 2, 3, SampleNoise::ZERO);
        let pop = generate_population(&cfg).unwrap();
        let base = &pop.get(0, 0).unwrap().mesh;
        for sample in 1..3 {
            assert!(meshes_bitwise_eq(base, &pop.get(0, sample).unwrap().mesh));
        }
    }

    #[test]
    fn zero_noise_sample_pose_is_identity() {
        let cfg = PopulationConfig::new(3, 2, 2, SampleNoise::ZERO);
        let pop = generate_population(&cfg).unwrap();
        let (_, pose) = pop.ground_truth(1, 1).unwrap();
        assert_eq!(pose, RigidTransform::IDENTITY);
    }

    #[test]
    fn nose_tip_is_the_centerline_apex() {
        let params = SubjectParams::sample(4, 99);
        let tip = canonical_nose_tip(&params, 0.0);
        // the apex must beat a dense scan of the centerline
        let mut y = -20.0;
        while y <= 30.0 {
            assert!(params.surface_z(0.0, y) <= tip.z + 1e-9, "surface exceeds tip at y={y}");
            y += 0.05;
        }
        // and protrude over its lateral flanks
        let flank = 0.5
            * (surface_with_expression(&params, 15.0, tip.y, 0.0)
                + surface_with_expression(&params, -15.0, tip.y, 0.0));
        assert!(tip.z - flank > 5.0, "tip must protrude over flanks");
    }

    #[test]
    fn ground_truth_tip_moves_with_the_pose() {
        let cfg = PopulationConfig::new(11, 2, 3, SampleNoise::default_profile());
        let pop = generate_population(&cfg).unwrap();
        let rec = pop.get(1, 2).unwrap();
        let params = &pop.subjects[1];
        let canonical = canonical_nose_tip(params, rec.truth.expression);
        let expected = rec.truth.pose.apply(canonical);
        assert!((rec.truth.nose_tip - expected).norm() < 1e-12);
    }

    #[test]
    fn eye_holes_produce_invalid_vertices_and_no_faces_there() {
        let params = SubjectParams::sample(0, 42);
        let rec = build_face_mesh(&params, &SampleRealization::neutral(true), 2.0, 0.0, 1);
        let validity = rec.mesh.validity().expect("holes requested");
        let holes = validity.iter().filter(|v| !**v).count();
        assert!(holes > 10, "expected punched sockets, got {holes} invalid vertices");
        for face in rec.mesh.faces() {
            for &v in face {
                assert!(validity[v as usize]);
            }
        }
    }

    #[test]
    fn unknown_id_is_reported() {
        let cfg = PopulationConfig::new(1, 2, 1, SampleNoise::ZERO);
        let pop = generate_population(&cfg).unwrap();
        assert_eq!(
            pop.ground_truth(5, 0).unwrap_err(),
            SynthError::UnknownId { subject: 5, sample: 0 }
        );
    }

    #[test]
    fn invalid_config_is_rejected() {
        let cfg = PopulationConfig::new(1, 1, 1, SampleNoise::ZERO);
        assert!(matches!(generate_population(&cfg), Err(SynthError::InvalidConfig(_))));
        let mut cfg = PopulationConfig::new(1, 2, 1, SampleNoise::ZERO);
        cfg.noise.surface_sigma = -1.0;
        assert!(matches!(generate_population(&cfg), Err(SynthError::InvalidConfig(_))));
    }
}
