//! Fan-in of branch outputs into one distribution.

use serde::{Deserialize, Serialize};

use super::ControlError;
use crate::payload::ClassScores;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "strategy", rename_all = "snake_case")]
pub enum AggregationStrategy {
    MajorityVote,
    #[default]
    MeanProbability,
    /// One weight per inbound branch, in inbound-edge order.
    WeightedMean { weights: Vec<f64> },
}

impl AggregationStrategy {
    pub fn validate(&self, branches: Option<usize>) -> Result<(), ControlError> {
        if let AggregationStrategy::WeightedMean { weights } = self {
            if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
                return Err(ControlError::InvalidWeights("weights must be finite and nonnegative".into()));
            }
            if !(weights.iter().sum::<f64>() > 0.0) {
                return Err(ControlError::InvalidWeights("weights must sum to a positive value".into()));
            }
            if let Some(n) = branches {
                if weights.len() != n {
                    return Err(ControlError::InvalidWeights(format!(
                        "{} weights for {n} branches",
                        weights.len()
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn name(&self) -> &'static str {
        match self {
            AggregationStrategy::MajorityVote => "majority_vote",
            AggregationStrategy::MeanProbability => "mean_probability",
            AggregationStrategy::WeightedMean { .. } => "weighted_mean",
        }
    }
}

/// What the aggregator saw and how it decided; goes into the trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregationRecord {
    pub strategy: AggregationStrategy,
    pub branches: Vec<ClassScores>,
    pub result: ClassScores,
    /// Per-class vote counts (majority vote only).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub votes: Option<Vec<usize>>,
    /// Several classes shared the top vote count.
    pub tie: bool,
    /// Element-wise mean of the branches, kept alongside vote shares.
    pub mean_probability: ClassScores,
}

fn weighted(branches: &[ClassScores], weights: &[f64]) -> Result<ClassScores, ControlError> {
    let total: f64 = weights.iter().sum();
    let k = branches[0].len();
    let mut out = vec![0.0; k];
    for (b, w) in branches.iter().zip(weights) {
        for (o, p) in out.iter_mut().zip(b.probs()) {
            *o += w / total * p;
        }
    }
    Ok(ClassScores::from_weights(branches[0].labels().clone(), &out)?)
}

pub fn aggregate(
    strategy: &AggregationStrategy,
    branches: &[ClassScores],
) -> Result<(ClassScores, AggregationRecord), ControlError> {
    if branches.len() < 2 {
        return Err(ControlError::EmptyBranches(branches.len()));
    }
    if branches.iter().any(|b| !b.same_classes(&branches[0])) {
        return Err(ControlError::ClassSetMismatch);
    }
    strategy.validate(Some(branches.len()))?;
    let mean = weighted(branches, &vec![1.0; branches.len()])?;
    let (result, votes, tie) = match strategy {
        AggregationStrategy::MajorityVote => {
            let mut votes = vec![0usize; branches[0].len()];
            for b in branches {
                votes[b.argmax()] += 1;
            }
            let top = *votes.iter().max().expect("at least two classes");
            let tie = votes.iter().filter(|&&v| v == top).count() > 1;
            let shares: Vec<f64> = votes.iter().map(|&v| v as f64).collect();
            let result = ClassScores::from_weights(branches[0].labels().clone(), &shares)?;
            (result, Some(votes), tie)
        }
        AggregationStrategy::MeanProbability => {
            let tie = has_tie(&mean);
            (mean.clone(), None, tie)
        }
        AggregationStrategy::WeightedMean { weights } => {
            let r = weighted(branches, weights)?;
            let tie = has_tie(&r);
            (r, None, tie)
        }
    };
    let record = AggregationRecord {
        strategy: strategy.clone(),
        branches: branches.to_vec(),
        result: result.clone(),
        votes,
        tie,
        mean_probability: mean,
    };
    Ok((result, record))
}

fn has_tie(s: &ClassScores) -> bool {
    let top = s.probs()[s.argmax()];
    s.probs().iter().filter(|&&p| p == top).count() > 1
}
