//! Hard majority voting with a fixed member priority for ties.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Ensemble members in descending tie-break priority.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Member {
    Svm,
    Lr,
    Rf,
    Dt,
}

impl Member {
    pub const PRIORITY: [Member; 4] = [Member::Svm, Member::Lr, Member::Rf, Member::Dt];
}

/// Plurality label of `votes`, given in priority order (highest first).
/// Among tied labels, the one proposed by the highest-priority member wins.
pub fn vote(votes: &[usize]) -> Result<usize> {
    if votes.is_empty() {
        return Err(Error::invalid("no votes to combine"));
    }
    let max_label = *votes.iter().max().unwrap();
    let mut tally = vec![0usize; max_label + 1];
    for &v in votes {
        tally[v] += 1;
    }
    let top = *tally.iter().max().unwrap();
    // first proposer in priority order of any top-count label
    Ok(*votes.iter().find(|&&v| tally[v] == top).unwrap())
}

/// Fraction of members voting for each of `n_classes` labels.
pub fn vote_shares(votes: &[usize], n_classes: usize) -> Vec<f64> {
    let mut shares = vec![0.0; n_classes];
    for &v in votes {
        shares[v] += 1.0;
    }
    let n = votes.len().max(1) as f64;
    shares.iter_mut().for_each(|s| *s /= n);
    shares
}
