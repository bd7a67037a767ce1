//! Out-of-bag generalization error with a bias/variance split of the 0/1 loss.
//!
//! Each trial `i` is out of bag in `k_i` replicates. Their votes define a
//! main prediction (majority, ties to `+1`). The trial is *biased* when the
//! main prediction is wrong. Replicate votes that disagree with the main
//! prediction add variance on unbiased trials and remove it on biased ones,
//! so that, per trial, `loss = B + V_u - V_b` holds exactly.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::resampling::ReplicateEnsemble;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerformanceReport {
    /// `1 - epe`.
    pub delta: f64,
    pub epe: f64,
    pub bias: f64,
    /// `variance_unbiased - variance_biased`; may be negative.
    pub variance_net: f64,
    pub variance_unbiased: f64,
    pub variance_biased: f64,
    /// OOB appearances `k_i` of every trial.
    pub coverage: Vec<usize>,
    /// Trials with `k_i = 0`, left out of every average.
    pub uncovered: usize,
    /// Directly averaged OOB misclassification rate (per trial, then over
    /// trials); equals `bias + variance_net` up to rounding.
    pub oob_loss: f64,
}

/// Each trial's OOB votes, in replicate order.
fn votes(ensemble: &ReplicateEnsemble) -> Vec<Vec<i8>> {
    let mut out = vec![Vec::new(); ensemble.plan.n];
    for (rep, preds) in ensemble
        .plan
        .replicates
        .iter()
        .zip(&ensemble.oob_predictions)
    {
        for (&i, &p) in rep.oob.iter().zip(preds) {
            out[i].push(p);
        }
    }
    out
}

fn majority(votes: &[i8]) -> Option<i8> {
    if votes.is_empty() {
        return None;
    }
    let pos = votes.iter().filter(|&&v| v == 1).count();
    Some(if 2 * pos >= votes.len() { 1 } else { -1 })
}

/// Majority vote of each trial's OOB predictions; `None` for trials that were
/// never out of bag.
pub fn main_prediction(ensemble: &ReplicateEnsemble) -> Result<Vec<Option<i8>>> {
    let main: Vec<Option<i8>> = votes(ensemble).iter().map(|v| majority(v)).collect();
    if main.iter().all(Option::is_none) {
        return Err(Error::NoCoverage);
    }
    Ok(main)
}

pub fn bias_variance(ensemble: &ReplicateEnsemble, y: &[i8]) -> Result<PerformanceReport> {
    if y.len() != ensemble.plan.n {
        return Err(Error::DimensionMismatch {
            expected: ensemble.plan.n,
            actual: y.len(),
        });
    }
    let votes = votes(ensemble);
    let coverage: Vec<usize> = votes.iter().map(Vec::len).collect();

    let (mut bias, mut vu, mut vb, mut loss) = (0.0, 0.0, 0.0, 0.0);
    let mut covered = 0usize;
    for (v, &label) in votes.iter().zip(y) {
        let Some(main) = majority(v) else { continue };
        covered += 1;
        let k = v.len() as f64;
        let disagree = v.iter().filter(|&&p| p != main).count() as f64 / k;
        if main != label {
            bias += 1.0;
            vb += disagree;
        } else {
            vu += disagree;
        }
        loss += v.iter().filter(|&&p| p != label).count() as f64 / k;
    }
    if covered == 0 {
        return Err(Error::NoCoverage);
    }
    let c = covered as f64;
    let (bias, vu, vb, loss) = (bias / c, vu / c, vb / c, loss / c);
    let variance_net = vu - vb;
    let epe = bias + variance_net;
    Ok(PerformanceReport {
        delta: 1.0 - epe,
        epe,
        bias,
        variance_net,
        variance_unbiased: vu,
        variance_biased: vb,
        uncovered: coverage.iter().filter(|&&k| k == 0).count(),
        coverage,
        oob_loss: loss,
    })
}
