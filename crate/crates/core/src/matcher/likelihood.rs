//! Region-fused likelihood-ratio matcher.
//!
//! Per rectangular face region: vectorize the depth cells (holes
//! mean-imputed within the region), project through a PCA basis and an LDA
//! map learned from a training population, and model the *feature
//! difference* of a face pair as a zero-mean diagonal Gaussian — one
//! variance set for genuine pairs, one for impostor pairs. A region votes
//! for "same subject" when the log-likelihood ratio of its feature
//! difference clears a per-region threshold calibrated to a standalone FMR
//! target on held-out training impostor pairs. The fused score is the vote
//! count: an integer in `[0, R]` with `R` regions (60 by default).
//!
//! Region rectangles, PCA/LDA dimensions and the per-region FMR target are
//! free parameters; the defaults below are frozen stand-ins, not a
//! reproduction of any published region table.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::MatcherError;
use crate::depthmap::{DepthMap, GridSpec};
use crate::fmath;
use crate::linalg;

/// Region rectangle in grid fractions: `x0, y0` lower-left corner, `w, h`
/// extents, all in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegionRect {
    pub x0: f64,
    pub y0: f64,
    pub w: f64,
    pub h: f64,
}

const fn rect(x0: f64, y0: f64, w: f64, h: f64) -> RegionRect {
    RegionRect { x0, y0, w, h }
}

/// Feature boxes over the default face grid (nose around y-fraction 0.39,
/// eyes 0.56, brow 0.61, mouth 0.20).
const FEATURE_BOXES: [RegionRect; 15] = [
    rect(0.35, 0.30, 0.30, 0.40), // nose, tall
    rect(0.40, 0.32, 0.20, 0.25), // nose, tight
    rect(0.33, 0.15, 0.34, 0.45), // nose + mouth
    rect(0.10, 0.50, 0.80, 0.18), // eye band
    rect(0.12, 0.48, 0.30, 0.22), // left eye
    rect(0.58, 0.48, 0.30, 0.22), // right eye
    rect(0.15, 0.56, 0.70, 0.16), // brow band
    rect(0.20, 0.70, 0.60, 0.25), // forehead
    rect(0.30, 0.08, 0.40, 0.20), // mouth
    rect(0.32, 0.00, 0.36, 0.14), // chin
    rect(0.08, 0.20, 0.30, 0.28), // left cheek
    rect(0.62, 0.20, 0.30, 0.28), // right cheek
    rect(0.375, 0.00, 0.25, 1.00), // center column
    rect(0.25, 0.20, 0.50, 0.60), // center core
    rect(0.20, 0.15, 0.60, 0.65), // face core
];

/// The frozen 60-region layout: whole face, halves, quadrants, overlapping
/// half- and third-windows, plus the feature boxes above.
pub fn default_regions() -> Vec<RegionRect> {
    let mut out = Vec::with_capacity(60);
    out.push(rect(0.0, 0.0, 1.0, 1.0));
    // halves
    out.push(rect(0.0, 0.0, 0.5, 1.0));
    out.push(rect(0.5, 0.0, 0.5, 1.0));
    out.push(rect(0.0, 0.0, 1.0, 0.5));
    out.push(rect(0.0, 0.5, 1.0, 0.5));
    // quadrants
    for &y0 in &[0.0, 0.5] {
        for &x0 in &[0.0, 0.5] {
            out.push(rect(x0, y0, 0.5, 0.5));
        }
    }
    // overlapping half-windows not already covered by the quadrants
    for &(x0, y0) in &[(0.0, 0.25), (0.25, 0.0), (0.25, 0.25), (0.25, 0.5), (0.5, 0.25)] {
        out.push(rect(x0, y0, 0.5, 0.5));
    }
    // horizontal and vertical thirds
    let third = 1.0 / 3.0;
    for i in 0..3 {
        out.push(rect(0.0, i as f64 * third, 1.0, third));
    }
    for i in 0..3 {
        out.push(rect(i as f64 * third, 0.0, third, 1.0));
    }
    // 5x5 overlapping third-windows
    let sixth = 1.0 / 6.0;
    for iy in 0..5 {
        for ix in 0..5 {
            out.push(rect(ix as f64 * sixth, iy as f64 * sixth, third, third));
        }
    }
    out.extend_from_slice(&FEATURE_BOXES);
    debug_assert_eq!(out.len(), 60);
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LikelihoodConfig {
    pub regions: Vec<RegionRect>,
    /// PCA dimension per region (truncated to the data rank).
    pub pca_dim: usize,
    /// LDA dimension per region (truncated to classes - 1).
    pub lda_dim: usize,
    /// Standalone FMR target for each region's vote threshold.
    pub per_region_fmr: f64,
}

impl Default for LikelihoodConfig {
    fn default() -> Self {
        LikelihoodConfig {
            regions: default_regions(),
            pca_dim: 30,
            lda_dim: 5,
            per_region_fmr: 0.25,
        }
    }
}

/// Per-region trained state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct RegionModel {
    /// Flat grid cell indices of the region.
    cells: Vec<u32>,
    /// Per-cell training mean; also the imputation value for holes.
    mean: Vec<f64>,
    /// PCA basis, row-major `pca_dim x cells.len()`.
    pca: Vec<f64>,
    pca_dim: usize,
    /// LDA map, row-major `lda_dim x pca_dim`.
    lda: Vec<f64>,
    lda_dim: usize,
    /// Diagonal variances of genuine / impostor feature differences.
    var_genuine: Vec<f64>,
    var_impostor: Vec<f64>,
    /// LLR vote threshold at the configured standalone FMR.
    vote_threshold: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LikelihoodMatcherModel {
    grid: GridSpec,
    regions: Vec<RegionModel>,
}

impl LikelihoodMatcherModel {
    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    /// Number of regions; fused scores lie in `[0, region_count]`.
    pub fn region_count(&self) -> usize {
        self.regions.len()
    }

    pub fn max_score(&self) -> f64 {
        self.regions.len() as f64
    }
}

/// Per-face LDA features, one vector per region. Extracting these once per
/// face makes pair scoring cheap.
#[derive(Debug, Clone, PartialEq)]
pub struct LikelihoodFeatures {
    per_region: Vec<Vec<f64>>,
}

fn region_cells(grid: &GridSpec, r: &RegionRect) -> Vec<u32> {
    let x_lo = ((r.x0 * grid.width as f64) as usize).min(grid.width - 1);
    let x_hi = (((r.x0 + r.w) * grid.width as f64).round() as usize).clamp(x_lo + 1, grid.width);
    let y_lo = ((r.y0 * grid.height as f64) as usize).min(grid.height - 1);
    let y_hi = (((r.y0 + r.h) * grid.height as f64).round() as usize).clamp(y_lo + 1, grid.height);
    let mut cells = Vec::with_capacity((x_hi - x_lo) * (y_hi - y_lo));
    for iy in y_lo..y_hi {
        for ix in x_lo..x_hi {
            cells.push((iy * grid.width + ix) as u32);
        }
    }
    cells
}

/// Region vector of a face: depth at each region cell, holes replaced by
/// the training mean.
fn region_vector(map: &DepthMap, cells: &[u32], mean: &[f64]) -> Vec<f64> {
    cells
        .iter()
        .enumerate()
        .map(|(j, &cell)| map.get_flat(cell as usize).unwrap_or(mean[j]))
        .collect()
}

/// Trains the matcher on a labeled population.
///
/// Needs at least 2 subjects with at least 2 samples each, on one grid,
/// and the subjects must be disjoint from any later evaluation subjects
/// (the caller's responsibility). When every subject has a third sample,
/// the last sample of each subject is held out to calibrate the per-region
/// vote thresholds; otherwise calibration falls back to in-sample impostor
/// pairs.
pub fn train_likelihood_matcher(
    training: &[(u32, DepthMap)],
    cfg: &LikelihoodConfig,
) -> Result<LikelihoodMatcherModel, MatcherError> {
    if training.is_empty() {
        return Err(MatcherError::InsufficientTraining("empty training set"));
    }
    let grid = *training[0].1.grid();
    if training.iter().any(|(_, m)| *m.grid() != grid) {
        return Err(MatcherError::GridMismatch);
    }
    if cfg.pca_dim == 0 || cfg.lda_dim == 0 || cfg.regions.is_empty() {
        return Err(MatcherError::InsufficientTraining("degenerate matcher config"));
    }

    let mut by_subject: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
    for (i, (subject, _)) in training.iter().enumerate() {
        by_subject.entry(*subject).or_default().push(i);
    }
    if by_subject.len() < 2 {
        return Err(MatcherError::InsufficientTraining("need at least 2 subjects"));
    }
    if by_subject.values().any(|v| v.len() < 2) {
        return Err(MatcherError::InsufficientTraining("every subject needs at least 2 samples"));
    }

    // Split: per subject, hold out the last sample for threshold
    // calibration when at least 3 samples exist.
    let mut stats_idx: Vec<(u32, usize)> = Vec::new();
    let mut calib_idx: Vec<(u32, usize)> = Vec::new();
    for (&subject, samples) in &by_subject {
        if samples.len() >= 3 {
            for &i in &samples[..samples.len() - 1] {
                stats_idx.push((subject, i));
            }
            calib_idx.push((subject, *samples.last().unwrap()));
        } else {
            for &i in samples {
                stats_idx.push((subject, i));
            }
        }
    }
    let calib_ok = calib_idx.iter().map(|(s, _)| *s).collect::<alloc::collections::BTreeSet<_>>().len() >= 2;

    let mut regions = Vec::with_capacity(cfg.regions.len());
    for rect in &cfg.regions {
        let cells = region_cells(&grid, rect);
        let nc = cells.len();

        // per-cell mean over stats samples that observe the cell
        let mut sum = vec![0.0; nc];
        let mut cnt = vec![0u32; nc];
        for (_, i) in &stats_idx {
            let map = &training[*i].1;
            for (j, &cell) in cells.iter().enumerate() {
                if let Some(z) = map.get_flat(cell as usize) {
                    sum[j] += z;
                    cnt[j] += 1;
                }
            }
        }
        let observed_mean: f64 = {
            let (s, c) = sum
                .iter()
                .zip(&cnt)
                .filter(|(_, &c)| c > 0)
                .fold((0.0, 0u32), |(s, n), (v, &c)| (s + v, n + c));
            if c == 0 {
                0.0
            } else {
                s / c as f64
            }
        };
        let mean: Vec<f64> = sum
            .iter()
            .zip(&cnt)
            .map(|(&s, &c)| if c > 0 { s / c as f64 } else { observed_mean })
            .collect();

        // centered stats vectors
        let ns = stats_idx.len();
        let mut x = vec![0.0; ns * nc];
        for (row, (_, i)) in stats_idx.iter().enumerate() {
            let v = region_vector(&training[*i].1, &cells, &mean);
            for j in 0..nc {
                x[row * nc + j] = v[j] - mean[j];
            }
        }

        // PCA via the samples Gram matrix
        let mut gram = vec![0.0; ns * ns];
        for i in 0..ns {
            for j in i..ns {
                let d = linalg::dot(&x[i * nc..(i + 1) * nc], &x[j * nc..(j + 1) * nc]);
                gram[i * ns + j] = d;
                gram[j * ns + i] = d;
            }
        }
        let eig = linalg::sym_eigen(&gram, ns);
        let lambda_floor = 1e-10 * eig.values.first().copied().unwrap_or(0.0).max(1e-30);
        let mut pca_dim = 0;
        let mut pca = Vec::new();
        for k in 0..cfg.pca_dim.min(ns.saturating_sub(1)) {
            let lambda = eig.values[k];
            if lambda <= lambda_floor {
                break;
            }
            let inv_norm = 1.0 / fmath::sqrt(lambda);
            let mut u = vec![0.0; nc];
            for i in 0..ns {
                let w = eig.vectors[k][i] * inv_norm;
                if w != 0.0 {
                    let row = &x[i * nc..(i + 1) * nc];
                    for j in 0..nc {
                        u[j] += w * row[j];
                    }
                }
            }
            linalg::fix_sign(&mut u);
            pca.extend_from_slice(&u);
            pca_dim += 1;
        }
        if pca_dim == 0 {
            return Err(MatcherError::InsufficientTraining("a region has zero variance"));
        }

        // project stats rows into PCA space
        let project = |row: &[f64]| -> Vec<f64> {
            (0..pca_dim).map(|k| linalg::dot(&pca[k * nc..(k + 1) * nc], row)).collect()
        };
        let stats_pca: Vec<Vec<f64>> =
            (0..ns).map(|i| project(&x[i * nc..(i + 1) * nc])).collect();

        // LDA scatter matrices in PCA space
        let d = pca_dim;
        let mut class_members: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
        for (row, (subject, _)) in stats_idx.iter().enumerate() {
            class_members.entry(*subject).or_default().push(row);
        }
        let n_classes = class_members.len();
        let mut overall = vec![0.0; d];
        for v in &stats_pca {
            for j in 0..d {
                overall[j] += v[j];
            }
        }
        for o in overall.iter_mut() {
            *o /= ns as f64;
        }
        let mut sw = vec![0.0; d * d];
        let mut sb = vec![0.0; d * d];
        for members in class_members.values() {
            let mut mu = vec![0.0; d];
            for &row in members {
                for j in 0..d {
                    mu[j] += stats_pca[row][j];
                }
            }
            for m in mu.iter_mut() {
                *m /= members.len() as f64;
            }
            for &row in members {
                for p in 0..d {
                    let dp = stats_pca[row][p] - mu[p];
                    for q in p..d {
                        let dq = stats_pca[row][q] - mu[q];
                        sw[p * d + q] += dp * dq;
                    }
                }
            }
            let w = members.len() as f64;
            for p in 0..d {
                let dp = mu[p] - overall[p];
                for q in p..d {
                    let dq = mu[q] - overall[q];
                    sb[p * d + q] += w * dp * dq;
                }
            }
        }
        for p in 0..d {
            for q in 0..p {
                sw[p * d + q] = sw[q * d + p];
                sb[p * d + q] = sb[q * d + p];
            }
        }
        let sw_scale = 1.0 / (ns - n_classes).max(1) as f64;
        let sb_scale = 1.0 / (n_classes - 1).max(1) as f64;
        for v in sw.iter_mut() {
            *v *= sw_scale;
        }
        for v in sb.iter_mut() {
            *v *= sb_scale;
        }
        let ridge = 1e-9 * (0..d).map(|i| sw[i * d + i]).sum::<f64>() / d as f64 + 1e-12;
        for i in 0..d {
            sw[i * d + i] += ridge;
        }

        // whiten Sw, diagonalize Sb in the whitened space
        let l = linalg::cholesky(&sw, d)
            .ok_or(MatcherError::InsufficientTraining("within-class scatter is singular"))?;
        // M = L^-1 Sb L^-T
        let mut m = vec![0.0; d * d];
        // first B = L^-1 Sb (column by column)
        let mut b_mat = vec![0.0; d * d];
        for col in 0..d {
            let column: Vec<f64> = (0..d).map(|row| sb[row * d + col]).collect();
            let y = linalg::solve_lower(&l, d, &column);
            for row in 0..d {
                b_mat[row * d + col] = y[row];
            }
        }
        // then M^T = L^-1 B^T, i.e. M column by column from rows of B
        for col in 0..d {
            let column: Vec<f64> = (0..d).map(|row| b_mat[col * d + row]).collect();
            let y = linalg::solve_lower(&l, d, &column);
            for row in 0..d {
                m[col * d + row] = y[row];
            }
        }
        // enforce symmetry against rounding
        for p in 0..d {
            for q in (p + 1)..d {
                let avg = 0.5 * (m[p * d + q] + m[q * d + p]);
                m[p * d + q] = avg;
                m[q * d + p] = avg;
            }
        }
        let meig = linalg::sym_eigen(&m, d);
        let lda_dim = cfg.lda_dim.min(n_classes - 1).min(d).max(1);
        let mut lda = Vec::with_capacity(lda_dim * d);
        for k in 0..lda_dim {
            let w = linalg::solve_lower_t(&l, d, &meig.vectors[k]);
            lda.extend_from_slice(&w);
        }

        let to_features = |v_pca: &[f64]| -> Vec<f64> {
            (0..lda_dim).map(|k| linalg::dot(&lda[k * d..(k + 1) * d], v_pca)).collect()
        };
        let stats_feat: Vec<Vec<f64>> = stats_pca.iter().map(|v| to_features(v)).collect();

        // diagonal variances of genuine / impostor feature differences
        let mut var_genuine = vec![0.0; lda_dim];
        let mut var_impostor = vec![0.0; lda_dim];
        let mut n_gen = 0usize;
        let mut n_imp = 0usize;
        for i in 0..ns {
            for j in (i + 1)..ns {
                let same = stats_idx[i].0 == stats_idx[j].0;
                let (acc, n) = if same {
                    (&mut var_genuine, &mut n_gen)
                } else {
                    (&mut var_impostor, &mut n_imp)
                };
                for k in 0..lda_dim {
                    let diff = stats_feat[i][k] - stats_feat[j][k];
                    acc[k] += diff * diff;
                }
                *n += 1;
            }
        }
        if n_gen == 0 || n_imp == 0 {
            return Err(MatcherError::InsufficientTraining("no genuine or impostor pairs"));
        }
        for v in var_genuine.iter_mut() {
            *v = (*v / n_gen as f64).max(1e-12);
        }
        for v in var_impostor.iter_mut() {
            *v = (*v / n_imp as f64).max(1e-12);
        }

        // vote threshold from held-out impostor LLRs at the per-region FMR
        let mut region = RegionModel {
            cells,
            mean,
            pca,
            pca_dim,
            lda,
            lda_dim,
            var_genuine,
            var_impostor,
            vote_threshold: 0.0,
        };
        let calib_llrs: Vec<f64> = if calib_ok {
            let feats: Vec<(u32, Vec<f64>)> = calib_idx
                .iter()
                .map(|(s, i)| (*s, region_features(&region, &training[*i].1)))
                .collect();
            let mut llrs = Vec::new();
            for i in 0..feats.len() {
                for j in (i + 1)..feats.len() {
                    if feats[i].0 != feats[j].0 {
                        llrs.push(region_llr(&region, &feats[i].1, &feats[j].1));
                    }
                }
            }
            llrs
        } else {
            let mut llrs = Vec::new();
            for i in 0..ns {
                for j in (i + 1)..ns {
                    if stats_idx[i].0 != stats_idx[j].0 {
                        llrs.push(llr_of_diff(&region, &stats_feat[i], &stats_feat[j]));
                    }
                }
            }
            llrs
        };
        region.vote_threshold =
            super::calibrate_threshold(&[], &calib_llrs, cfg.per_region_fmr, super::Polarity::Similarity)?;
        regions.push(region);
    }

    Ok(LikelihoodMatcherModel { grid, regions })
}

fn region_features(region: &RegionModel, map: &DepthMap) -> Vec<f64> {
    let nc = region.cells.len();
    let mut v = region_vector(map, &region.cells, &region.mean);
    for j in 0..nc {
        v[j] -= region.mean[j];
    }
    let pca: Vec<f64> = (0..region.pca_dim)
        .map(|k| linalg::dot(&region.pca[k * nc..(k + 1) * nc], &v))
        .collect();
    (0..region.lda_dim)
        .map(|k| linalg::dot(&region.lda[k * region.pca_dim..(k + 1) * region.pca_dim], &pca))
        .collect()
}

fn llr_of_diff(region: &RegionModel, fa: &[f64], fb: &[f64]) -> f64 {
    let mut llr = 0.0;
    for k in 0..region.lda_dim {
        let d = fa[k] - fb[k];
        let vg = region.var_genuine[k];
        let vi = region.var_impostor[k];
        llr += 0.5 * fmath::ln(vi / vg) + 0.5 * d * d * (1.0 / vi - 1.0 / vg);
    }
    llr
}

fn region_llr(region: &RegionModel, fa: &[f64], fb: &[f64]) -> f64 {
    llr_of_diff(region, fa, fb)
}

/// Extracts per-region LDA features for one face; scoring a pair then only
/// needs [`score_features`].
pub fn extract_features(
    model: &LikelihoodMatcherModel,
    map: &DepthMap,
) -> Result<LikelihoodFeatures, MatcherError> {
    if map.grid() != &model.grid {
        return Err(MatcherError::GridMismatch);
    }
    Ok(LikelihoodFeatures {
        per_region: model.regions.iter().map(|r| region_features(r, map)).collect(),
    })
}

/// Fused vote count in `[0, R]` from cached features.
pub fn score_features(
    model: &LikelihoodMatcherModel,
    a: &LikelihoodFeatures,
    b: &LikelihoodFeatures,
) -> f64 {
    let mut votes = 0usize;
    for (region, (fa, fb)) in model.regions.iter().zip(a.per_region.iter().zip(&b.per_region)) {
        if llr_of_diff(region, fa, fb) >= region.vote_threshold {
            votes += 1;
        }
    }
    votes as f64
}

/// Fused vote count for a probe/gallery pair of depth maps. Symmetric in
/// its arguments.
pub fn score_likelihood(
    model: &LikelihoodMatcherModel,
    probe: &DepthMap,
    gallery: &DepthMap,
) -> Result<f64, MatcherError> {
    let fa = extract_features(model, probe)?;
    let fb = extract_features(model, gallery)?;
    Ok(score_features(model, &fa, &fb))
}
