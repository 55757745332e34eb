//! Probability vectors over small, enumerated supports.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Probabilities closer than this are treated as tied when taking an argmax.
pub const TIE_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DistError {
    #[error("distribution needs a nonempty support")]
    Empty,
    #[error("weight {0} is negative or not finite")]
    BadWeight(f64),
    #[error("weights sum to zero")]
    ZeroMass,
}

/// A normalized probability vector, index-aligned with some enumerated support.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FiniteDistribution(Vec<f64>);

impl FiniteDistribution {
    pub fn uniform(n: usize) -> Self {
        assert!(n > 0, "uniform distribution over an empty support");
        FiniteDistribution(vec![1.0 / n as f64; n])
    }

    pub fn point(n: usize, index: usize) -> Self {
        assert!(index < n);
        let mut p = vec![0.0; n];
        p[index] = 1.0;
        FiniteDistribution(p)
    }

    /// Normalize nonnegative weights.
    pub fn from_weights(weights: Vec<f64>) -> Result<Self, DistError> {
        if weights.is_empty() {
            return Err(DistError::Empty);
        }
        if let Some(&w) = weights.iter().find(|w| !w.is_finite() || **w < 0.0) {
            return Err(DistError::BadWeight(w));
        }
        let total: f64 = weights.iter().sum();
        if total <= 0.0 {
            return Err(DistError::ZeroMass);
        }
        Ok(FiniteDistribution(weights.into_iter().map(|w| w / total).collect()))
    }

    /// Uniform over the indices in `set`.
    pub fn uniform_over(n: usize, set: &[usize]) -> Self {
        let mut w = vec![0.0; n];
        for &i in set {
            w[i] = 1.0;
        }
        Self::from_weights(w).expect("nonempty index set")
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn prob(&self, index: usize) -> f64 {
        self.0[index]
    }

    pub fn probs(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn total(&self) -> f64 {
        self.0.iter().sum()
    }

    pub fn is_normalized(&self, tol: f64) -> bool {
        self.0.iter().all(|p| *p >= 0.0) && (self.total() - 1.0).abs() <= tol
    }

    /// Indices whose probability is within [`TIE_TOLERANCE`] of the maximum.
    pub fn argmax_set(&self) -> Vec<usize> {
        let max = self.0.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        (0..self.0.len())
            .filter(|&i| max - self.0[i] <= TIE_TOLERANCE)
            .collect()
    }

    /// Mixture `(1 - w) * self + w * other`.
    pub fn mix(&self, other: &FiniteDistribution, w: f64) -> FiniteDistribution {
        assert_eq!(self.len(), other.len());
        FiniteDistribution(
            self.0
                .iter()
                .zip(&other.0)
                .map(|(a, b)| (1.0 - w) * a + w * b)
                .collect(),
        )
    }
}
