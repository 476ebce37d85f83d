//! Vulnerability metrics: FMR, FNMR, MMPMR, RMMR and score histograms.
//!
//! All rates are plain counting definitions over labeled trial sets, stored
//! as fractions (percent formatting is presentation-layer). MMPMR uses the
//! MinMax reading: per morph, take each contributing subject's best mated
//! score, and the morph succeeds only if the *worst* of those bests still
//! matches at the threshold — a morph must fool the system for both
//! subjects. RMMR(tau) = MMPMR(tau) + FNMR(tau) at the same threshold.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::matcher::Polarity;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum MetricsError {
    EmptyScoreSet,
    MissingMatedSamples { morph_index: usize },
    InvalidRange,
}

impl fmt::Display for MetricsError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MetricsError::EmptyScoreSet => write!(f, "score set is empty"),
            MetricsError::MissingMatedSamples { morph_index } => {
                write!(f, "morph {morph_index} lacks mated scores for a contributing subject")
            }
            MetricsError::InvalidRange => write!(f, "histogram needs bins >= 1 and lo < hi"),
        }
    }
}

impl core::error::Error for MetricsError {}

/// Mated comparison scores of one morph against the samples of its two
/// contributing subjects.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MorphTrial {
    pub mated_a: Vec<f64>,
    pub mated_b: Vec<f64>,
}

/// A labeled set of comparison scores with uniform polarity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialSet {
    pub polarity: Polarity,
    pub genuine: Vec<f64>,
    pub impostor: Vec<f64>,
    pub morphs: Vec<MorphTrial>,
}

/// Fraction of impostor scores that match at `tau`.
pub fn fmr(impostor: &[f64], tau: f64, polarity: Polarity) -> Result<f64, MetricsError> {
    if impostor.is_empty() {
        return Err(MetricsError::EmptyScoreSet);
    }
    let matches = impostor.iter().filter(|&&s| polarity.is_match(s, tau)).count();
    Ok(matches as f64 / impostor.len() as f64)
}

/// Fraction of genuine scores that fail to match at `tau`.
pub fn fnmr(genuine: &[f64], tau: f64, polarity: Polarity) -> Result<f64, MetricsError> {
    if genuine.is_empty() {
        return Err(MetricsError::EmptyScoreSet);
    }
    let non_matches = genuine.iter().filter(|&&s| !polarity.is_match(s, tau)).count();
    Ok(non_matches as f64 / genuine.len() as f64)
}

/// MinMax MMPMR: fraction of morphs whose worst-over-subjects best mated
/// score matches at `tau`.
pub fn mmpmr(morphs: &[MorphTrial], tau: f64, polarity: Polarity) -> Result<f64, MetricsError> {
    if morphs.is_empty() {
        return Err(MetricsError::EmptyScoreSet);
    }
    let mut successes = 0usize;
    for (i, trial) in morphs.iter().enumerate() {
        let best = |scores: &[f64]| -> Result<f64, MetricsError> {
            scores
                .iter()
                .copied()
                .reduce(|a, b| polarity.better(a, b))
                .ok_or(MetricsError::MissingMatedSamples { morph_index: i })
        };
        let best_a = best(&trial.mated_a)?;
        let best_b = best(&trial.mated_b)?;
        if polarity.is_match(polarity.worse(best_a, best_b), tau) {
            successes += 1;
        }
    }
    Ok(successes as f64 / morphs.len() as f64)
}

/// RMMR = MMPMR + FNMR at one threshold. In [0, 2].
pub fn rmmr(mmpmr: f64, fnmr: f64) -> f64 {
    debug_assert!((0.0..=1.0).contains(&mmpmr) && (0.0..=1.0).contains(&fnmr));
    mmpmr + fnmr
}

/// Uniform-bin score histogram over `[lo, hi]`; scores outside the range
/// land in the overflow counter, never in a bin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub lo: f64,
    pub hi: f64,
    pub counts: Vec<u64>,
    pub overflow: u64,
}

pub fn histogram(scores: &[f64], bins: usize, lo: f64, hi: f64) -> Result<Histogram, MetricsError> {
    if bins == 0 || !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
        return Err(MetricsError::InvalidRange);
    }
    let mut counts = vec![0u64; bins];
    let mut overflow = 0u64;
    let scale = bins as f64 / (hi - lo);
    for &s in scores {
        if !s.is_finite() || s < lo || s > hi {
            overflow += 1;
            continue;
        }
        let bin = (((s - lo) * scale) as usize).min(bins - 1);
        counts[bin] += 1;
    }
    Ok(Histogram { lo, hi, counts, overflow })
}

/// All rates of a trial set at one threshold, with score histograms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub threshold: f64,
    pub fmr: f64,
    pub fnmr: f64,
    pub mmpmr: f64,
    pub rmmr: f64,
    pub n_genuine: usize,
    pub n_impostor: usize,
    pub n_morphs: usize,
    pub genuine_hist: Histogram,
    pub impostor_hist: Histogram,
    /// All mated morph comparison scores, pooled.
    pub morph_hist: Histogram,
}

/// Evaluates a trial set at `tau`, histogramming scores over
/// `[range.0, range.1]` with `bins` bins.
pub fn evaluate_trials(
    trials: &TrialSet,
    tau: f64,
    bins: usize,
    range: (f64, f64),
) -> Result<MetricsReport, MetricsError> {
    let fmr = fmr(&trials.impostor, tau, trials.polarity)?;
    let fnmr = fnmr(&trials.genuine, tau, trials.polarity)?;
    let mmpmr = mmpmr(&trials.morphs, tau, trials.polarity)?;
    let morph_scores: Vec<f64> = trials
        .morphs
        .iter()
        .flat_map(|t| t.mated_a.iter().chain(&t.mated_b).copied())
        .collect();
    Ok(MetricsReport {
        threshold: tau,
        fmr,
        fnmr,
        mmpmr,
        rmmr: rmmr(mmpmr, fnmr),
        n_genuine: trials.genuine.len(),
        n_impostor: trials.impostor.len(),
        n_morphs: trials.morphs.len(),
        genuine_hist: histogram(&trials.genuine, bins, range.0, range.1)?,
        impostor_hist: histogram(&trials.impostor, bins, range.0, range.1)?,
        morph_hist: histogram(&morph_scores, bins, range.0, range.1)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn fmr_counts_at_or_above_for_similarity() {
        let imp = [1.0, 2.0, 3.0, 9.0];
        assert_eq!(fmr(&imp, 8.0, Polarity::Similarity).unwrap(), 0.25);
        assert_eq!(fmr(&imp, 10.0, Polarity::Similarity).unwrap(), 0.0);
    }

    #[test]
    fn fnmr_is_the_complement_condition() {
        assert_eq!(fnmr(&[9.0, 10.0], 8.0, Polarity::Similarity).unwrap(), 0.0);
        assert_eq!(fnmr(&[5.0, 9.0], 8.0, Polarity::Similarity).unwrap(), 0.5);
    }

    #[test]
    fn mmpmr_requires_both_subjects_to_match() {
        let both = MorphTrial { mated_a: vec![10.0], mated_b: vec![12.0] };
        let one = MorphTrial { mated_a: vec![10.0], mated_b: vec![5.0] };
        assert_eq!(mmpmr(&[both.clone()], 8.0, Polarity::Similarity).unwrap(), 1.0);
        assert_eq!(mmpmr(&[one], 8.0, Polarity::Similarity).unwrap(), 0.0);
        // best-of-mated per subject: a weak attempt does not spoil a strong one
        let multi = MorphTrial { mated_a: vec![2.0, 11.0], mated_b: vec![9.0] };
        assert_eq!(mmpmr(&[multi], 8.0, Polarity::Similarity).unwrap(), 1.0);
    }

    #[test]
    fn mmpmr_distance_polarity_flips_best_and_worst() {
        // distance: best = min, worst subject = max of bests, match strictly below tau
        let t = MorphTrial { mated_a: vec![0.3, 0.9], mated_b: vec![0.6] };
        assert_eq!(mmpmr(&[t.clone()], 0.7, Polarity::Distance).unwrap(), 1.0);
        assert_eq!(mmpmr(&[t], 0.6, Polarity::Distance).unwrap(), 0.0);
    }

    #[test]
    fn missing_mated_scores_are_an_error() {
        let t = MorphTrial { mated_a: vec![], mated_b: vec![1.0] };
        assert_eq!(
            mmpmr(&[t], 8.0, Polarity::Similarity).unwrap_err(),
            MetricsError::MissingMatedSamples { morph_index: 0 }
        );
    }

    #[test]
    fn rmmr_reproduces_reference_rate_listings() {
        // consistency anchors: reported (MMPMR, FNMR, RMMR) triples
        assert!((rmmr(0.3997, 0.018) - 0.4176).abs() <= 0.0005 + 1e-12);
        assert!((rmmr(0.1348, 0.0259) - 0.1607).abs() <= 0.0005 + 1e-12);
        assert_eq!(rmmr(0.0, 0.0), 0.0);
    }

    #[test]
    fn histogram_counts_and_overflow() {
        let h = histogram(&[5.0], 10, 0.0, 10.0).unwrap();
        assert_eq!(h.counts.iter().sum::<u64>(), 1);
        assert_eq!(h.counts[5], 1);
        let h = histogram(&[-1.0, 11.0, 3.0], 10, 0.0, 10.0).unwrap();
        assert_eq!(h.overflow, 2);
        assert_eq!(h.counts.iter().sum::<u64>(), 1);
        // top edge is inclusive
        let h = histogram(&[10.0], 10, 0.0, 10.0).unwrap();
        assert_eq!(h.counts[9], 1);
    }

    #[test]
    fn invalid_ranges_are_rejected() {
        assert_eq!(histogram(&[1.0], 0, 0.0, 1.0).unwrap_err(), MetricsError::InvalidRange);
        assert_eq!(histogram(&[1.0], 4, 2.0, 2.0).unwrap_err(), MetricsError::InvalidRange);
    }

    #[test]
    fn report_satisfies_the_rmmr_identity() {
        let trials = TrialSet {
            polarity: Polarity::Similarity,
            genuine: vec![9.0, 10.0, 4.0],
            impostor: vec![1.0, 2.0, 8.5],
            morphs: vec![MorphTrial { mated_a: vec![9.0], mated_b: vec![8.0] }],
        };
        let r = evaluate_trials(&trials, 8.0, 20, (0.0, 12.0)).unwrap();
        assert!((r.rmmr - (r.mmpmr + r.fnmr)).abs() < 1e-12);
    }
}
