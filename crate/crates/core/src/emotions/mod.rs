//! Emotion labels, class distributions, prediction sets, and metrics.

mod csv;

pub use csv::{
    read_prediction_sets, read_predictions, write_prediction_sets, write_predictions,
    PREDICTION_HEADER,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::{Scalar, NUM_CLASSES};

/// The seven emotion classes, in the fixed canonical order used everywhere
/// (index 0 = angry ... index 6 = surprise).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EmotionLabel {
    Angry,
    Disgust,
    Fear,
    Happy,
    Neutral,
    Sad,
    Surprise,
}

impl EmotionLabel {
    pub const ALL: [EmotionLabel; NUM_CLASSES] = [
        EmotionLabel::Angry,
        EmotionLabel::Disgust,
        EmotionLabel::Fear,
        EmotionLabel::Happy,
        EmotionLabel::Neutral,
        EmotionLabel::Sad,
        EmotionLabel::Surprise,
    ];

    /// Canonical index of this label (0..7).
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(idx: usize) -> Result<Self> {
        Self::ALL
            .get(idx)
            .copied()
            .ok_or(Error::DimensionMismatch {
                expected: NUM_CLASSES,
                got: idx,
            })
    }

    pub fn name(self) -> &'static str {
        match self {
            EmotionLabel::Angry => "angry",
            EmotionLabel::Disgust => "disgust",
            EmotionLabel::Fear => "fear",
            EmotionLabel::Happy => "happy",
            EmotionLabel::Neutral => "neutral",
            EmotionLabel::Sad => "sad",
            EmotionLabel::Surprise => "surprise",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .iter()
            .copied()
            .find(|l| l.name() == s)
            .ok_or_else(|| Error::InvalidDistribution(format!("unknown emotion label `{s}`")))
    }
}

impl std::fmt::Display for EmotionLabel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Seven non-negative class scores.
///
/// A distribution is either `normalized` (entries sum to 1 within 1e-6) or
/// a raw score vector, e.g. the output of a weighted average of experts.
/// Both are valid currencies; normalization status is tracked so invariants
/// can be checked where they matter.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassDistribution {
    scores: [Scalar; NUM_CLASSES],
    normalized: bool,
}

/// Tolerance on the unit-sum invariant of a normalized distribution.
pub const NORMALIZED_SUM_TOL: Scalar = 1e-6;

/// Tolerance applied when reading external files: sums within this distance
/// of 1 are renormalized, anything further off is rejected as corrupt.
pub const FILE_SUM_TOL: Scalar = 1e-3;

impl ClassDistribution {
    /// Builds a normalized distribution; the entries must already sum to 1
    /// within [`NORMALIZED_SUM_TOL`].
    pub fn normalized(scores: [Scalar; NUM_CLASSES]) -> Result<Self> {
        Self::check_entries(&scores)?;
        let sum: Scalar = scores.iter().sum();
        if (sum - 1.0).abs() > NORMALIZED_SUM_TOL {
            return Err(Error::InvalidDistribution(format!(
                "scores sum to {sum}, expected 1"
            )));
        }
        Ok(Self {
            scores,
            normalized: true,
        })
    }

    /// Builds a raw (unnormalized) score vector.
    pub fn unnormalized(scores: [Scalar; NUM_CLASSES]) -> Result<Self> {
        Self::check_entries(&scores)?;
        Ok(Self {
            scores,
            normalized: false,
        })
    }

    /// Accepts scores from an external file: renormalizes when the sum is
    /// within [`FILE_SUM_TOL`] of 1, rejects otherwise.
    pub fn from_file_scores(scores: [Scalar; NUM_CLASSES]) -> Result<Self> {
        Self::check_entries(&scores)?;
        let sum: Scalar = scores.iter().sum();
        if (sum - 1.0).abs() > FILE_SUM_TOL {
            return Err(Error::InvalidDistribution(format!(
                "scores sum to {sum}, outside renormalization tolerance"
            )));
        }
        let mut scores = scores;
        for s in &mut scores {
            *s /= sum;
        }
        Ok(Self {
            scores,
            normalized: true,
        })
    }

    /// Uniform distribution (1/7 per class).
    pub fn uniform() -> Self {
        Self {
            scores: [1.0 / NUM_CLASSES as Scalar; NUM_CLASSES],
            normalized: true,
        }
    }

    /// One-hot distribution at `label`.
    pub fn one_hot(label: EmotionLabel) -> Self {
        let mut scores = [0.0; NUM_CLASSES];
        scores[label.index()] = 1.0;
        Self {
            scores,
            normalized: true,
        }
    }

    fn check_entries(scores: &[Scalar; NUM_CLASSES]) -> Result<()> {
        for (i, &s) in scores.iter().enumerate() {
            if !s.is_finite() {
                return Err(Error::InvalidDistribution(format!(
                    "non-finite score {s} at index {i}"
                )));
            }
            if s < 0.0 {
                return Err(Error::InvalidDistribution(format!(
                    "negative score {s} at index {i}"
                )));
            }
        }
        Ok(())
    }

    pub fn scores(&self) -> &[Scalar; NUM_CLASSES] {
        &self.scores
    }

    pub fn score(&self, label: EmotionLabel) -> Scalar {
        self.scores[label.index()]
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    /// Returns a normalized copy (divides by the sum). Errors on a zero sum.
    pub fn renormalized(&self) -> Result<Self> {
        let sum: Scalar = self.scores.iter().sum();
        if sum <= 0.0 {
            return Err(Error::InvalidDistribution(
                "cannot normalize all-zero scores".into(),
            ));
        }
        let mut scores = self.scores;
        for s in &mut scores {
            *s /= sum;
        }
        Ok(Self {
            scores,
            normalized: true,
        })
    }
}

/// Label of the maximal score; ties broken by lowest index.
pub fn argmax_label(dist: &ClassDistribution) -> Result<EmotionLabel> {
    let scores = dist.scores();
    for (i, &s) in scores.iter().enumerate() {
        if !s.is_finite() {
            return Err(Error::InvalidDistribution(format!(
                "non-finite score {s} at index {i}"
            )));
        }
    }
    let mut best = 0usize;
    for i in 1..NUM_CLASSES {
        if scores[i] > scores[best] {
            best = i;
        }
    }
    EmotionLabel::from_index(best)
}

/// Which dataset partition a prediction set belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Valid,
    Test,
    Other,
}

impl Split {
    pub const ALL: [Split; 4] = [Split::Train, Split::Valid, Split::Test, Split::Other];

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Valid => "valid",
            Split::Test => "test",
            Split::Other => "other",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .iter()
            .copied()
            .find(|sp| sp.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown split `{s}`")))
    }
}

impl std::fmt::Display for Split {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// One clip's prediction: a distribution plus an optional gold label.
#[derive(Debug, Clone)]
pub struct PredictionEntry {
    pub clip_id: String,
    pub dist: ClassDistribution,
    pub gold: Option<EmotionLabel>,
}

/// Per-clip predictions for one split, with unique clip ids.
#[derive(Debug, Clone)]
pub struct PredictionSet {
    split: Split,
    entries: Vec<PredictionEntry>,
}

impl PredictionSet {
    pub fn new(split: Split, entries: Vec<PredictionEntry>) -> Result<Self> {
        let mut seen = std::collections::HashSet::new();
        for e in &entries {
            if !seen.insert(e.clip_id.as_str()) {
                return Err(Error::DuplicateClip(e.clip_id.clone()));
            }
        }
        Ok(Self { split, entries })
    }

    pub fn split(&self) -> Split {
        self.split
    }

    pub fn entries(&self) -> &[PredictionEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, clip_id: &str) -> Option<&PredictionEntry> {
        self.entries.iter().find(|e| e.clip_id == clip_id)
    }

    /// Returns the same entries retagged with a different split.
    pub fn with_split(&self, split: Split) -> Self {
        Self {
            split,
            entries: self.entries.clone(),
        }
    }
}

/// Fraction of entries whose argmax matches the gold label.
pub fn accuracy(preds: &PredictionSet) -> Result<Scalar> {
    if preds.is_empty() {
        return Err(Error::EmptyInput("accuracy of an empty set".into()));
    }
    let mut correct = 0usize;
    for e in preds.entries() {
        let gold = e
            .gold
            .ok_or_else(|| Error::MissingGold(e.clip_id.clone()))?;
        if argmax_label(&e.dist)? == gold {
            correct += 1;
        }
    }
    Ok(correct as Scalar / preds.len() as Scalar)
}

/// Gold-by-predicted counts plus row-normalized rates.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfusionMatrix {
    pub counts: [[u64; NUM_CLASSES]; NUM_CLASSES],
    pub row_normalized: [[Scalar; NUM_CLASSES]; NUM_CLASSES],
}

/// Confusion matrix over a prediction set (row = gold, column = predicted).
pub fn confusion(preds: &PredictionSet) -> Result<ConfusionMatrix> {
    if preds.is_empty() {
        return Err(Error::EmptyInput("confusion of an empty set".into()));
    }
    let mut counts = [[0u64; NUM_CLASSES]; NUM_CLASSES];
    for e in preds.entries() {
        let gold = e
            .gold
            .ok_or_else(|| Error::MissingGold(e.clip_id.clone()))?;
        let pred = argmax_label(&e.dist)?;
        counts[gold.index()][pred.index()] += 1;
    }
    let mut row_normalized = [[0.0; NUM_CLASSES]; NUM_CLASSES];
    for g in 0..NUM_CLASSES {
        let total: u64 = counts[g].iter().sum();
        if total > 0 {
            for p in 0..NUM_CLASSES {
                row_normalized[g][p] = counts[g][p] as Scalar / total as Scalar;
            }
        }
    }
    Ok(ConfusionMatrix {
        counts,
        row_normalized,
    })
}
