//! Confusion matrices and average recalls.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{arg_err, Result};

/// `counts[true][predicted]`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn new(classes: usize) -> Self {
        Self { counts: vec![vec![0; classes]; classes] }
    }

    pub fn from_counts(counts: Vec<Vec<u64>>) -> Result<Self> {
        let n = counts.len();
        if counts.iter().any(|r| r.len() != n) {
            return Err(arg_err!("confusion matrix must be square"));
        }
        Ok(Self { counts })
    }

    pub fn classes(&self) -> usize {
        self.counts.len()
    }

    pub fn record(&mut self, truth: usize, predicted: usize) {
        self.counts[truth][predicted] += 1;
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn support(&self, class: usize) -> u64 {
        self.counts[class].iter().sum()
    }
}

/// Unweighted average recall over classes with support, and overall accuracy.
pub fn uar_war(cm: &ConfusionMatrix) -> Result<(f64, f64)> {
    let total = cm.total();
    if total == 0 {
        return Err(arg_err!("confusion matrix is empty"));
    }
    let mut recall_sum = 0.0;
    let mut present = 0usize;
    let mut correct = 0u64;
    for c in 0..cm.classes() {
        let support = cm.support(c);
        correct += cm.counts[c][c];
        if support == 0 {
            log::warn!("class {c} has no samples and is left out of UAR");
            continue;
        }
        recall_sum += cm.counts[c][c] as f64 / support as f64;
        present += 1;
    }
    Ok((recall_sum / present as f64, correct as f64 / total as f64))
}
