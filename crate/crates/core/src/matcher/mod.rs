//! Comparison scores, match-decision semantics and threshold calibration
//! shared by both matchers.
//!
//! Score polarity fixes the match condition at a threshold `tau`:
//! similarity scores match **at or above** `tau` (scores below it are
//! non-matches), distance scores match **strictly below** `tau`. The
//! reference operating constants of the systems both matchers re-implement
//! — threshold 8 on a 0..60 vote scale, and 0.71565 on a 0..2 cosine
//! distance scale, each at FMR 0.1% — are recorded as documentation only;
//! re-implemented matchers are always re-calibrated on their own impostor
//! scores.

mod distance;
mod likelihood;

pub use distance::{cosine_distance, score_distance, shape_descriptor, DistanceConfig};
pub use likelihood::{
    default_regions, extract_features, score_features, score_likelihood,
    train_likelihood_matcher, LikelihoodConfig, LikelihoodFeatures, LikelihoodMatcherModel,
    RegionRect,
};

use alloc::string::String;
use core::fmt;

use serde::{Deserialize, Serialize};

/// Reference threshold of the region-fused likelihood system (0..60 votes)
/// at FMR 0.1%. Documentation only — never assumed valid here.
pub const REFERENCE_LIKELIHOOD_THRESHOLD: f64 = 8.0;
/// Reference threshold of the cosine-distance system (0..2) at FMR 0.1%.
/// Documentation only — never assumed valid here.
pub const REFERENCE_DISTANCE_THRESHOLD: f64 = 0.71565;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Polarity {
    /// Larger scores mean more similar.
    Similarity,
    /// Smaller scores mean more similar.
    Distance,
}

impl Polarity {
    /// Match decision at threshold `tau`. A similarity score equal to `tau`
    /// matches; a distance score equal to `tau` does not.
    #[inline]
    pub fn is_match(self, score: f64, tau: f64) -> bool {
        match self {
            Polarity::Similarity => score >= tau,
            Polarity::Distance => score < tau,
        }
    }

    /// The better of two scores under this polarity.
    #[inline]
    pub fn better(self, a: f64, b: f64) -> f64 {
        match self {
            Polarity::Similarity => a.max(b),
            Polarity::Distance => a.min(b),
        }
    }

    /// The worse of two scores under this polarity.
    #[inline]
    pub fn worse(self, a: f64, b: f64) -> f64 {
        match self {
            Polarity::Similarity => a.min(b),
            Polarity::Distance => a.max(b),
        }
    }
}

impl fmt::Display for Polarity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Polarity::Similarity => write!(f, "similarity"),
            Polarity::Distance => write!(f, "distance"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatcherId {
    Likelihood,
    Distance,
}

impl MatcherId {
    pub fn polarity(self) -> Polarity {
        match self {
            MatcherId::Likelihood => Polarity::Similarity,
            MatcherId::Distance => Polarity::Distance,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            MatcherId::Likelihood => "likelihood",
            MatcherId::Distance => "distance",
        }
    }
}

/// One labeled comparison score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRecord {
    pub probe_id: String,
    pub gallery_id: String,
    pub matcher: MatcherId,
    pub polarity: Polarity,
    pub score: f64,
}

impl ScoreRecord {
    /// Builds a record, enforcing the per-matcher score range:
    /// `[0, max_score]` votes for the likelihood matcher, `[0, 2]` for the
    /// distance matcher.
    pub fn new(
        probe_id: String,
        gallery_id: String,
        matcher: MatcherId,
        score: f64,
        max_score: f64,
    ) -> Result<ScoreRecord, MatcherError> {
        if !score.is_finite() || score < 0.0 || score > max_score {
            return Err(MatcherError::ScoreOutOfRange { score, max: max_score });
        }
        Ok(ScoreRecord {
            probe_id,
            gallery_id,
            matcher,
            polarity: matcher.polarity(),
            score,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum MatcherError {
    InsufficientTraining(&'static str),
    GridMismatch,
    DegenerateDescriptor,
    EmptyScoreSet,
    ScoreOutOfRange { score: f64, max: f64 },
}

impl fmt::Display for MatcherError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MatcherError::InsufficientTraining(msg) => write!(f, "insufficient training: {msg}"),
            MatcherError::GridMismatch => write!(f, "depth map is not on the matcher grid"),
            MatcherError::DegenerateDescriptor => {
                write!(f, "descriptor is degenerate (no valid patch)")
            }
            MatcherError::EmptyScoreSet => write!(f, "score set is empty"),
            MatcherError::ScoreOutOfRange { score, max } => {
                write!(f, "score {score} outside [0, {max}]")
            }
        }
    }
}

impl core::error::Error for MatcherError {}

/// Calibrates the decision threshold to a target FMR on impostor scores.
///
/// Similarity: the smallest observed score (or the value just above the
/// maximum) whose FMR is at or below the target. Distance: the largest
/// such value. By minimality/maximality, the next less-strict candidate
/// always exceeds the target. Genuine scores are accepted for symmetry of
/// the call site but do not influence the threshold.
pub fn calibrate_threshold(
    _genuine: &[f64],
    impostor: &[f64],
    target_fmr: f64,
    polarity: Polarity,
) -> Result<f64, MatcherError> {
    if impostor.is_empty() {
        return Err(MatcherError::EmptyScoreSet);
    }
    let n = impostor.len() as f64;
    let mut sorted = impostor.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    sorted.dedup();

    match polarity {
        Polarity::Similarity => {
            // candidates ascending; FMR(tau) = frac(score >= tau) is
            // non-increasing, so take the first feasible candidate.
            for (i, &tau) in sorted.iter().enumerate() {
                // all scores from index i on are >= tau
                let at_or_above = impostor.iter().filter(|&&s| s >= tau).count() as f64;
                let _ = i;
                if at_or_above / n <= target_fmr {
                    return Ok(tau);
                }
            }
            Ok(sorted.last().unwrap().next_up())
        }
        Polarity::Distance => {
            // FMR(tau) = frac(score < tau) is non-decreasing; take the
            // largest feasible candidate, trying just-above-max first.
            let above_max = sorted.last().unwrap().next_up();
            let mut candidates = alloc::vec![above_max];
            candidates.extend(sorted.iter().rev().copied());
            for &tau in &candidates {
                let below = impostor.iter().filter(|&&s| s < tau).count() as f64;
                if below / n <= target_fmr {
                    return Ok(tau);
                }
            }
            // frac(score < min) == 0 <= target, so this is unreachable
            Ok(sorted[0])
        }
    }
}
