//! Scoring: absolute relative errors and their Monte-Carlo aggregation.

use std::collections::BTreeMap;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{BranchKey, ConnectedTree, End};
use crate::propagation::{branch_frames, RunEstimates};
use crate::quantize::injectivity_check;
use crate::quantize::QuantizationConfig;
use crate::synth::{CampaignTruth, Instrument};

/// Absolute relative error of a real quantity.
pub fn are_real(estimate: f64, truth: f64) -> Result<f64> {
    if truth == 0.0 {
        return Err(Error::ZeroTruth);
    }
    Ok((estimate - truth).abs() / truth.abs())
}

/// Absolute relative error of a complex quantity: modulus of the difference
/// over modulus of the truth.
pub fn are_complex(estimate: Complex64, truth: Complex64) -> Result<f64> {
    let denom = truth.norm();
    if denom == 0.0 {
        return Err(Error::ZeroTruth);
    }
    Ok((estimate - truth).norm() / denom)
}

fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        f64::NAN
    } else {
        values.iter().sum::<f64>() / values.len() as f64
    }
}

/// Per-branch mean absolute relative errors across runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchScore {
    pub key: BranchKey,
    pub hops: usize,
    pub min_w_spacing: f64,
    pub runs_scored: usize,
    /// Fraction of runs selecting exactly the true bin (absent when the true
    /// parameters were not drawn on the grid).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bin_exact_rate: Option<f64>,
    pub mare_r: f64,
    pub mare_x: f64,
    pub mare_b: f64,
    /// Mean over r/x/b, the headline line-parameter figure.
    pub mare_params: f64,
    /// None marks the pinned anchor-reference VT.
    pub mare_vt_from: Option<f64>,
    pub mare_vt_to: Option<f64>,
    pub mare_ct_from: f64,
    pub mare_ct_to: f64,
    /// Ratio (anchored-frame) MAREs, independent of reference propagation.
    pub mare_ratio_vt: f64,
    pub mare_ratio_ct_local: f64,
    pub mare_ratio_ct_remote: f64,
}

/// Campaign score card.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AreReport {
    pub runs: usize,
    pub branches: Vec<BranchScore>,
    /// Mean over every line-parameter and correction-factor MARE, one weight
    /// per quantity.
    pub mu_mare: f64,
    /// Branches that failed in at least one run, with counts.
    pub failure_counts: BTreeMap<String, usize>,
}

impl AreReport {
    pub fn branch(&self, key: BranchKey) -> Option<&BranchScore> {
        self.branches.iter().find(|b| b.key == key)
    }
}

/// Score per-run estimates against per-run ground truth. `truths` must be
/// parallel to `runs` (the same reference repeated when the ratio errors are
/// held fixed across runs).
pub fn score_runs(
    tree: &ConnectedTree,
    runs: &[RunEstimates],
    truths: &[&CampaignTruth],
    cfg: &QuantizationConfig,
) -> Result<AreReport> {
    if runs.is_empty() {
        return Err(Error::EmptyEnsemble);
    }
    if runs.len() != truths.len() {
        return Err(Error::LengthMismatch(format!(
            "{} runs but {} truth records",
            runs.len(),
            truths.len()
        )));
    }

    let frames = branch_frames(tree);
    let rqm = tree.rqm();
    let rqm_key = tree.branches()[rqm.branch].key();

    let mut scores = Vec::with_capacity(frames.len());
    let mut failure_counts: BTreeMap<String, usize> = BTreeMap::new();
    let mut all_quantity_mares: Vec<f64> = Vec::new();

    for frame in &frames {
        let key = frame.key;
        let local = frame.local_end;
        let remote = local.opposite();

        let mut ares_r = Vec::new();
        let mut ares_x = Vec::new();
        let mut ares_b = Vec::new();
        let mut ares_vt_from = Vec::new();
        let mut ares_vt_to = Vec::new();
        let mut ares_ct_from = Vec::new();
        let mut ares_ct_to = Vec::new();
        let mut ares_g_vt = Vec::new();
        let mut ares_g_ct_local = Vec::new();
        let mut ares_g_ct_remote = Vec::new();
        let mut bin_hits = Vec::new();

        for (run, truth) in runs.iter().zip(truths) {
            if let Some(fail) = run.failures.get(&key) {
                *failure_counts
                    .entry(format!("{key}: {}", fail.message))
                    .or_default() += 1;
            }
            let Some(est) = run.branches.get(&key) else {
                continue;
            };
            let params_true = truth.params[&key];
            ares_r.push(are_real(est.params.r, params_true.r)?);
            ares_x.push(are_real(est.params.x, params_true.x)?);
            if params_true.b != 0.0 {
                ares_b.push(are_real(est.params.b, params_true.b)?);
            }
            if let Some(m_true) = truth.bins.get(&key) {
                bin_hits.push(if est.m_star == *m_true { 1.0 } else { 0.0 });
            }

            let tau = |end: End, kind: Instrument| -> Complex64 {
                truth.ratio_errors[&(key, end, kind)].correction_factor()
            };
            let g_vt = tau(remote, Instrument::Vt) / tau(local, Instrument::Vt);
            let g_ct_local = tau(local, Instrument::Ct) / tau(local, Instrument::Vt);
            let g_ct_remote = tau(remote, Instrument::Ct) / tau(local, Instrument::Vt);
            ares_g_vt.push(are_complex(est.ratios.vt_remote, g_vt)?);
            ares_g_ct_local.push(are_complex(est.ratios.ct_local, g_ct_local)?);
            ares_g_ct_remote.push(are_complex(est.ratios.ct_remote, g_ct_remote)?);

            if let Some(factors) = run.factors.get(&key) {
                for (end, kind, bucket) in [
                    (End::From, Instrument::Vt, &mut ares_vt_from),
                    (End::To, Instrument::Vt, &mut ares_vt_to),
                    (End::From, Instrument::Ct, &mut ares_ct_from),
                    (End::To, Instrument::Ct, &mut ares_ct_to),
                ] {
                    if key == rqm_key && end == rqm.end && kind == Instrument::Vt {
                        continue; // pinned reference
                    }
                    bucket.push(are_complex(factors.at(end, kind), tau(end, kind))?);
                }
            }
        }

        let runs_scored = ares_r.len();
        if runs_scored == 0 {
            // fully failed branch: counted in failure_counts; a score row of
            // NaN means would not even serialize
            continue;
        }
        let mare_r = mean(&ares_r);
        let mare_x = mean(&ares_x);
        let mare_b = if ares_b.is_empty() { 0.0 } else { mean(&ares_b) };
        let anchor_vt = |end: End| key == rqm_key && rqm.end == end;
        let mare_vt_from = (!anchor_vt(End::From)).then(|| mean(&ares_vt_from));
        let mare_vt_to = (!anchor_vt(End::To)).then(|| mean(&ares_vt_to));
        let mare_ct_from = mean(&ares_ct_from);
        let mare_ct_to = mean(&ares_ct_to);

        for m in [Some(mare_r), Some(mare_x), Some(mare_b), mare_vt_from, mare_vt_to, Some(mare_ct_from), Some(mare_ct_to)]
            .into_iter()
            .flatten()
        {
            if m.is_finite() {
                all_quantity_mares.push(m);
            }
        }

        let db = tree.branches()[frame.index].params_db;
        scores.push(BranchScore {
            key,
            hops: frame.hops,
            min_w_spacing: injectivity_check(&db, cfg).min_pairwise_distance,
            runs_scored,
            bin_exact_rate: (!bin_hits.is_empty()).then(|| mean(&bin_hits)),
            mare_r,
            mare_x,
            mare_b,
            mare_params: mean(&[mare_r, mare_x, mare_b]),
            mare_vt_from,
            mare_vt_to,
            mare_ct_from,
            mare_ct_to,
            mare_ratio_vt: mean(&ares_g_vt),
            mare_ratio_ct_local: mean(&ares_g_ct_local),
            mare_ratio_ct_remote: mean(&ares_g_ct_remote),
        });
    }

    scores.sort_by_key(|s| s.key);
    Ok(AreReport {
        runs: runs.len(),
        branches: scores,
        mu_mare: mean(&all_quantity_mares),
        failure_counts,
    })
}
