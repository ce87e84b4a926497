use std::collections::HashMap;

use crate::data::UnlabeledDataset;

/// Candidate/residual partition of the target set after voting.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PseudoSplit {
    pub can_idx: Vec<usize>,
    pub y_can: Vec<usize>,
    pub res_idx: Vec<usize>,
}

impl PseudoSplit {
    pub fn is_empty(&self) -> bool {
        self.can_idx.is_empty()
    }
}

/// Strict-majority vote per sample over `predictions[classifier][sample]`.
///
/// A label wins only with more than half of the votes; otherwise `None`.
pub fn majority_vote(predictions: &[Vec<usize>]) -> Vec<Option<usize>> {
    let Some(first) = predictions.first() else {
        return Vec::new();
    };
    let t = predictions.len();
    let mut counts: HashMap<usize, usize> = HashMap::new();
    (0..first.len())
        .map(|j| {
            counts.clear();
            for p in predictions {
                *counts.entry(p[j]).or_default() += 1;
            }
            counts.iter().find(|(_, &c)| 2 * c > t).map(|(&l, _)| l)
        })
        .collect()
}

/// Splits target indices into voted candidates and residuals, keeping order.
pub fn split_by_vote(target: &UnlabeledDataset, votes: &[Option<usize>]) -> PseudoSplit {
    debug_assert_eq!(target.len(), votes.len());
    let mut split = PseudoSplit {
        can_idx: Vec::new(),
        y_can: Vec::new(),
        res_idx: Vec::new(),
    };
    for (i, v) in votes.iter().enumerate() {
        match v {
            Some(l) => {
                split.can_idx.push(i);
                split.y_can.push(*l);
            }
            None => split.res_idx.push(i),
        }
    }
    split
}
