//! Local-shape-descriptor matcher with cosine distance.
//!
//! Per depth map: smooth, estimate per-cell surface normals and principal
//! curvatures on the grid, reduce them to a shape index (curvedness-
//! weighted) and a normal azimuth, histogram both over a patch tiling,
//! concatenate and l2-normalize. A pair scores `1 - cos(u, v)` in `[0, 2]`
//! — a distance, so smaller means more similar. Training-free.
//!
//! The descriptor is a structural stand-in specified fully here, not a
//! reproduction of any published system.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::MatcherError;
use crate::depthmap::DepthMap;
use crate::fmath;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistanceConfig {
    /// Patch tiling (patches per axis).
    pub patches_x: usize,
    pub patches_y: usize,
    /// Histogram bins per quantity per patch.
    pub bins: usize,
    /// 3x3 validity-weighted smoothing passes before differentiation.
    pub smooth_passes: usize,
    /// Soft knee of the curvedness weight (1/mm): flat, noise-dominated
    /// cells contribute little to the shape-index histogram.
    pub curvedness_knee: f64,
}

impl Default for DistanceConfig {
    fn default() -> Self {
        DistanceConfig {
            patches_x: 6,
            patches_y: 6,
            bins: 8,
            smooth_passes: 2,
            curvedness_knee: 0.02,
        }
    }
}

/// One 3x3 validity-weighted box smoothing pass; holes stay holes.
fn smooth_once(cells: &[f64], w: usize, h: usize) -> Vec<f64> {
    let mut out = vec![f64::NAN; cells.len()];
    for iy in 0..h {
        for ix in 0..w {
            let c = cells[iy * w + ix];
            if c.is_nan() {
                continue;
            }
            let mut sum = 0.0;
            let mut n = 0u32;
            for dy in -1i32..=1 {
                for dx in -1i32..=1 {
                    let (jx, jy) = (ix as i32 + dx, iy as i32 + dy);
                    if jx < 0 || jy < 0 || jx >= w as i32 || jy >= h as i32 {
                        continue;
                    }
                    let z = cells[jy as usize * w + jx as usize];
                    if !z.is_nan() {
                        sum += z;
                        n += 1;
                    }
                }
            }
            out[iy * w + ix] = sum / n as f64;
        }
    }
    out
}

/// Computes the descriptor of a depth map. Errors with
/// [`MatcherError::DegenerateDescriptor`] when no cell yields a usable
/// local frame (an all-HOLE patch set).
pub fn shape_descriptor(map: &DepthMap, cfg: &DistanceConfig) -> Result<Vec<f64>, MatcherError> {
    let grid = map.grid();
    let (w, h) = (grid.width, grid.height);
    if w < 3 || h < 3 || cfg.bins == 0 || cfg.patches_x == 0 || cfg.patches_y == 0 {
        return Err(MatcherError::DegenerateDescriptor);
    }

    let mut cells = map.cells().to_vec();
    for _ in 0..cfg.smooth_passes {
        cells = smooth_once(&cells, w, h);
    }

    let (sx, sy) = (grid.spacing_x, grid.spacing_y);
    let bins = cfg.bins;
    let patch_len = 2 * bins;
    let mut descriptor = vec![0.0; cfg.patches_x * cfg.patches_y * patch_len];
    let mut contributed = false;

    for iy in 1..h - 1 {
        for ix in 1..w - 1 {
            let at = |dx: i32, dy: i32| -> f64 {
                cells[(iy as i32 + dy) as usize * w + (ix as i32 + dx) as usize]
            };
            let z = at(0, 0);
            let (zl, zr, zd, zu) = (at(-1, 0), at(1, 0), at(0, -1), at(0, 1));
            let (zld, zrd, zlu, zru) = (at(-1, -1), at(1, -1), at(-1, 1), at(1, 1));
            if z.is_nan()
                || zl.is_nan()
                || zr.is_nan()
                || zd.is_nan()
                || zu.is_nan()
                || zld.is_nan()
                || zrd.is_nan()
                || zlu.is_nan()
                || zru.is_nan()
            {
                continue;
            }

            let p = (zr - zl) / (2.0 * sx);
            let q = (zu - zd) / (2.0 * sy);
            let r = (zr - 2.0 * z + zl) / (sx * sx);
            let t = (zu - 2.0 * z + zd) / (sy * sy);
            let s = (zru - zrd - zlu + zld) / (4.0 * sx * sy);

            // graph-surface fundamental forms
            let e = 1.0 + p * p;
            let f = p * q;
            let g = 1.0 + q * q;
            let denom = fmath::sqrt(1.0 + p * p + q * q);
            let (ll, mm, nn) = (r / denom, s / denom, t / denom);
            let det = e * g - f * f;
            let mean_curv = (e * nn - 2.0 * f * mm + g * ll) / (2.0 * det);
            let gauss_curv = (ll * nn - mm * mm) / det;
            let disc = fmath::sqrt((mean_curv * mean_curv - gauss_curv).max(0.0));
            let k1 = mean_curv + disc;
            let k2 = mean_curv - disc;

            // shape index in [-1, 1]; umbilic cells take the sign of H
            let shape_index = if disc > 1e-15 {
                (2.0 / fmath::PI) * fmath::atan(mean_curv / disc)
            } else if mean_curv > 0.0 {
                1.0
            } else if mean_curv < 0.0 {
                -1.0
            } else {
                0.0
            };
            let curvedness = fmath::sqrt(0.5 * (k1 * k1 + k2 * k2));
            let curv_weight = curvedness / (curvedness + cfg.curvedness_knee);

            let px = ix * cfg.patches_x / w;
            let py = iy * cfg.patches_y / h;
            let base = (py * cfg.patches_x + px) * patch_len;

            let si_bin = (((shape_index + 1.0) * 0.5 * bins as f64) as usize).min(bins - 1);
            descriptor[base + si_bin] += curv_weight;

            // normal azimuth, weighted by the lateral tilt strength
            let tilt = fmath::hypot(p, q);
            if tilt > 1e-12 {
                let azimuth = fmath::atan2(-q, -p); // lateral part of the normal
                let frac = (azimuth + fmath::PI) / (2.0 * fmath::PI);
                let az_bin = ((frac * bins as f64) as usize).min(bins - 1);
                let weight = tilt / fmath::sqrt(1.0 + tilt * tilt);
                descriptor[base + bins + az_bin] += weight;
            }
            contributed = true;
        }
    }

    if !contributed {
        return Err(MatcherError::DegenerateDescriptor);
    }
    let norm = fmath::sqrt(descriptor.iter().map(|d| d * d).sum::<f64>());
    if norm <= 0.0 {
        return Err(MatcherError::DegenerateDescriptor);
    }
    for d in descriptor.iter_mut() {
        *d /= norm;
    }
    Ok(descriptor)
}

/// `1 - cos(u, v)`, clamped to `[0, 2]`. Inputs need not be normalized.
pub fn cosine_distance(u: &[f64], v: &[f64]) -> f64 {
    debug_assert_eq!(u.len(), v.len());
    let mut dot = 0.0;
    let mut nu = 0.0;
    let mut nv = 0.0;
    for i in 0..u.len() {
        dot += u[i] * v[i];
        nu += u[i] * u[i];
        nv += v[i] * v[i];
    }
    if nu <= 0.0 || nv <= 0.0 {
        return 1.0; // a zero vector carries no direction
    }
    let cos = (dot / (fmath::sqrt(nu) * fmath::sqrt(nv))).clamp(-1.0, 1.0);
    (1.0 - cos).clamp(0.0, 2.0)
}

/// Cosine distance between the shape descriptors of two depth maps on one
/// grid. Scores lie in `[0, 2]`; smaller is more similar.
pub fn score_distance(
    probe: &DepthMap,
    gallery: &DepthMap,
    cfg: &DistanceConfig,
) -> Result<f64, MatcherError> {
    if !probe.same_grid(gallery) {
        return Err(MatcherError::GridMismatch);
    }
    let u = shape_descriptor(probe, cfg)?;
    let v = shape_descriptor(gallery, cfg)?;
    Ok(cosine_distance(&u, &v))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::depthmap::GridSpec;

    fn wavy_map(seed: f64) -> DepthMap {
        let g = GridSpec::new(30, 30, -15.0, -15.0, 1.0, 1.0).unwrap();
        DepthMap::from_fn(g, |x, y| {
            Some(8.0 * fmath::exp(-(x * x + y * y) / (60.0 + seed))
                + fmath::sin(x / (3.0 + seed)) * 0.8)
        })
    }

    #[test]
    fn identical_inputs_score_zero() {
        let m = wavy_map(0.0);
        let s = score_distance(&m, &m, &DistanceConfig::default()).unwrap();
        assert!(s.abs() <= 1e-12, "self distance {s}");
    }

    #[test]
    fn orthogonal_and_negated_fixtures_hit_1_and_2() {
        let u = [1.0, 0.0, 0.0, 0.0];
        let v = [0.0, 1.0, 0.0, 0.0];
        assert!((cosine_distance(&u, &v) - 1.0).abs() < 1e-12);
        let w = [-1.0, 0.0, 0.0, 0.0];
        assert!((cosine_distance(&u, &w) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn different_surfaces_are_farther_than_near_identical_ones() {
        let a = wavy_map(0.0);
        let b = wavy_map(0.15); // slight deformation
        let c = wavy_map(40.0); // very different
        let cfg = DistanceConfig::default();
        let near = score_distance(&a, &b, &cfg).unwrap();
        let far = score_distance(&a, &c, &cfg).unwrap();
        assert!(near < far, "near {near} vs far {far}");
    }

    #[test]
    fn all_hole_map_is_degenerate() {
        let g = GridSpec::new(12, 12, 0.0, 0.0, 1.0, 1.0).unwrap();
        let m = DepthMap::new_empty(g);
        assert_eq!(
            score_distance(&m, &m, &DistanceConfig::default()).unwrap_err(),
            MatcherError::DegenerateDescriptor
        );
    }

    #[test]
    fn holes_shrink_but_do_not_break_the_descriptor() {
        let g = GridSpec::new(30, 30, -15.0, -15.0, 1.0, 1.0).unwrap();
        let m = DepthMap::from_fn(g, |x, y| {
            if x * x + (y - 4.0) * (y - 4.0) < 9.0 {
                None
            } else {
                Some(6.0 * fmath::exp(-(x * x + y * y) / 80.0))
            }
        });
        let d = shape_descriptor(&m, &DistanceConfig::default()).unwrap();
        let norm: f64 = d.iter().map(|x| x * x).sum();
        assert!((norm - 1.0).abs() < 1e-9);
    }

    #[test]
    fn grid_mismatch_is_rejected() {
        let a = wavy_map(0.0);
        let g = GridSpec::new(10, 10, 0.0, 0.0, 1.0, 1.0).unwrap();
        let b = DepthMap::from_fn(g, |_, _| Some(1.0));
        assert_eq!(
            score_distance(&a, &b, &DistanceConfig::default()).unwrap_err(),
            MatcherError::GridMismatch
        );
    }
}
