//! Normalized prior distributions over hypotheses.

use serde::{Deserialize, Serialize};

use crate::error::{EcdError, Result};

/// A normalized probability vector over hypotheses.
///
/// `kosaraju` records whether the weights were lifted by
/// [`Prior::kosaraju`]; the flag travels with the prior so reports can say
/// which distribution a cost was computed under.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prior {
    weights: Vec<f64>,
    kosaraju: bool,
}

impl Prior {
    /// Divides nonnegative weights by their sum.
    pub fn normalize(weights: &[f64]) -> Result<Self> {
        for (index, &value) in weights.iter().enumerate() {
            if !value.is_finite() || value < 0.0 {
                return Err(EcdError::InvalidWeight { index, value });
            }
        }
        let total: f64 = weights.iter().sum();
        if total <= 0.0 {
            return Err(EcdError::DegeneratePrior);
        }
        Ok(Self {
            weights: weights.iter().map(|w| w / total).collect(),
            kosaraju: false,
        })
    }

    pub fn uniform(n: usize) -> Result<Self> {
        Self::normalize(&vec![1.0; n])
    }

    /// Lifts every mass to at least `1/n²` and renormalizes, where `n` is the
    /// number of hypotheses. Intended for unit-cost instances.
    pub fn kosaraju(&self) -> Self {
        let n = self.weights.len() as f64;
        let floor = 1.0 / (n * n);
        let lifted: Vec<f64> = self.weights.iter().map(|&p| p.max(floor)).collect();
        let total: f64 = lifted.iter().sum();
        Self {
            weights: lifted.into_iter().map(|w| w / total).collect(),
            kosaraju: true,
        }
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn is_kosaraju(&self) -> bool {
        self.kosaraju
    }

    pub fn min_positive(&self) -> f64 {
        self.weights
            .iter()
            .copied()
            .filter(|&p| p > 0.0)
            .fold(f64::INFINITY, f64::min)
    }
}

impl std::ops::Index<usize> for Prior {
    type Output = f64;

    fn index(&self, index: usize) -> &f64 {
        &self.weights[index]
    }
}
