//! Monte-Carlo campaign runner, sensitivity sweeps, RQM placement ranking,
//! and the split-window consistency check for field data.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{BranchKey, ConnectedTree, End, ItClassSpec, RqmLocation};
use crate::metrics::{score_runs, AreReport};
use crate::propagation::{aggregate_runs, estimate_run, RunEstimates, SystemEstimate};
use crate::quantize::QuantizationConfig;
use crate::seed::{mix, tag};
use crate::synth::{
    synthesize_campaign, BranchMeasurements, CampaignSeeds, CampaignTruth, SynthSpec,
    TrajectoryProfile, MIN_SAMPLES,
};

/// Whether ratio errors persist across the M runs of a campaign (they model
/// a constant physical miscalibration) or are redrawn per run for
/// ensemble-level studies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum RePolicy {
    #[default]
    Fixed,
    PerRun,
}

/// Full specification of a Monte-Carlo campaign.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignConfig {
    pub n: usize,
    pub runs: usize,
    pub noise_sigma: f64,
    pub it_class: ItClassSpec,
    pub rqm_class: ItClassSpec,
    #[serde(default)]
    pub quantization: QuantizationConfig,
    #[serde(default)]
    pub profile: TrajectoryProfile,
    #[serde(default)]
    pub re_policy: RePolicy,
    pub seed: u64,
}

impl CampaignConfig {
    /// Baseline experiment settings: class 0.6 regular ITs, class 0.15 RQM,
    /// 0.03% PMU noise, 600 samples per window.
    pub fn baseline(runs: usize, seed: u64) -> Self {
        Self {
            n: 600,
            runs,
            noise_sigma: 0.0003,
            it_class: crate::grid::it_class("0.6").expect("table entry"),
            rqm_class: crate::grid::it_class("0.15").expect("table entry"),
            quantization: QuantizationConfig::default(),
            profile: TrajectoryProfile::default(),
            re_policy: RePolicy::Fixed,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.runs == 0 {
            return Err(Error::Config("campaign needs at least one run".into()));
        }
        if self.n < MIN_SAMPLES {
            return Err(Error::Config(format!(
                "campaign window of {} samples is below the minimum of {MIN_SAMPLES}",
                self.n
            )));
        }
        if !(self.noise_sigma.is_finite() && self.noise_sigma >= 0.0) {
            return Err(Error::Config(format!(
                "noise sigma must be >= 0, got {}",
                self.noise_sigma
            )));
        }
        self.it_class.validate()?;
        self.rqm_class.validate()?;
        self.quantization.validate()?;
        Ok(())
    }

    fn synth_spec(&self) -> SynthSpec {
        SynthSpec {
            n: self.n,
            it_class: self.it_class,
            rqm_class: self.rqm_class,
            noise_sigma: self.noise_sigma,
            quantization: self.quantization,
            profile: self.profile,
        }
    }

    /// Seeds for run `j`; true parameters are always campaign-fixed, ratio
    /// errors follow the policy, trajectories and noise are fresh per run.
    pub fn run_seeds(&self, run: usize) -> CampaignSeeds {
        let j = run as u64;
        CampaignSeeds {
            params: mix(self.seed, &[tag("true-params")]),
            ratio_errors: match self.re_policy {
                RePolicy::Fixed => mix(self.seed, &[tag("ratio-errors")]),
                RePolicy::PerRun => mix(self.seed, &[tag("ratio-errors"), j]),
            },
            trajectory: mix(self.seed, &[tag("trajectory"), j]),
            noise: mix(self.seed, &[tag("noise"), j]),
        }
    }
}

/// Result of one campaign: score card plus the aggregated system estimate.
#[derive(Debug, Clone)]
pub struct CampaignOutput {
    pub report: AreReport,
    pub estimate: SystemEstimate,
    pub runs: Vec<RunEstimates>,
}

/// Synthesize and estimate M independent windows, then aggregate and score.
/// Deterministic per seed regardless of worker scheduling.
pub fn run_campaign(tree: &ConnectedTree, cfg: &CampaignConfig) -> Result<CampaignOutput> {
    cfg.validate()?;
    let spec = cfg.synth_spec();

    let outcome: Vec<Result<(RunEstimates, CampaignTruth)>> = (0..cfg.runs)
        .into_par_iter()
        .map(|j| {
            let campaign = synthesize_campaign(tree, &spec, cfg.run_seeds(j))?;
            let estimates = estimate_run(tree, &campaign.measurements, &cfg.quantization);
            Ok((estimates, campaign.truth))
        })
        .collect();

    let mut runs = Vec::with_capacity(cfg.runs);
    let mut truths = Vec::with_capacity(cfg.runs);
    for item in outcome {
        let (estimates, truth) = item?;
        runs.push(estimates);
        truths.push(truth);
    }

    let estimate = aggregate_runs(tree, &runs, &cfg.quantization)?;
    let truth_refs: Vec<&CampaignTruth> = truths.iter().collect();
    let report = score_runs(tree, &runs, &truth_refs, &cfg.quantization)?;
    Ok(CampaignOutput {
        report,
        estimate,
        runs,
    })
}

/// Sweep axis for sensitivity studies.
#[derive(Debug, Clone, PartialEq)]
pub enum SweepAxis {
    /// PMU noise levels (fractions, e.g. 0.0001 for 0.01%).
    NoiseSigma(Vec<f64>),
    /// Regular-IT accuracy classes; the RQM class stays fixed.
    ItClass(Vec<(String, ItClassSpec)>),
}

#[derive(Debug, Clone)]
pub struct SweepPoint {
    pub label: String,
    pub output: CampaignOutput,
}

/// One campaign per axis value, all sharing the base seed so comparisons are
/// paired (identical underlying noise draws, scaled per point).
pub fn sweep(tree: &ConnectedTree, base: &CampaignConfig, axis: &SweepAxis) -> Result<Vec<SweepPoint>> {
    let mut points = Vec::new();
    match axis {
        SweepAxis::NoiseSigma(sigmas) => {
            if sigmas.is_empty() {
                return Err(Error::Config("empty sweep value list".into()));
            }
            for &sigma in sigmas {
                let cfg = CampaignConfig {
                    noise_sigma: sigma,
                    ..base.clone()
                };
                points.push(SweepPoint {
                    label: format!("sigma={sigma}"),
                    output: run_campaign(tree, &cfg)?,
                });
            }
        }
        SweepAxis::ItClass(classes) => {
            if classes.is_empty() {
                return Err(Error::Config("empty sweep value list".into()));
            }
            for (label, spec) in classes {
                let cfg = CampaignConfig {
                    it_class: *spec,
                    ..base.clone()
                };
                points.push(SweepPoint {
                    label: format!("class={label}"),
                    output: run_campaign(tree, &cfg)?,
                });
            }
        }
    }
    Ok(points)
}

/// One candidate RQM location with its campaign-level index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlacementEntry {
    pub branch: BranchKey,
    pub end: End,
    pub mu_mare: f64,
    pub rank: usize,
    /// Per-run branch failures under this candidate; nonzero counts mean the
    /// index averaged fewer quantities and deserves scrutiny.
    pub failures: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlacementReport {
    /// All 2·|branches| candidates, best first.
    pub entries: Vec<PlacementEntry>,
    pub best: PlacementEntry,
}

/// Rank every branch end as an RQM location by re-running the full campaign
/// with the anchor moved there. All candidates share the base seed, so they
/// face identical noise and instrument draws.
pub fn rank_rqm_locations(tree: &ConnectedTree, cfg: &CampaignConfig) -> Result<PlacementReport> {
    let mut entries = Vec::with_capacity(2 * tree.branches().len());
    for (idx, branch) in tree.branches().iter().enumerate() {
        for end in [End::From, End::To] {
            let candidate = tree.with_rqm(RqmLocation { branch: idx, end })?;
            let output = run_campaign(&candidate, cfg)?;
            entries.push(PlacementEntry {
                branch: branch.key(),
                end,
                mu_mare: output.report.mu_mare,
                rank: 0,
                failures: output.report.failure_counts.values().sum(),
            });
        }
    }
    entries.sort_by(|a, b| {
        a.mu_mare
            .total_cmp(&b.mu_mare)
            .then_with(|| (a.branch, a.end).cmp(&(b.branch, b.end)))
    });
    for (i, e) in entries.iter_mut().enumerate() {
        e.rank = i + 1;
    }
    let best = entries[0].clone();
    Ok(PlacementReport { entries, best })
}

/// Time-stamped measurement series of one branch, as read from field data.
#[derive(Debug, Clone, PartialEq)]
pub struct TimedBranchMeasurements {
    pub t: Vec<f64>,
    pub meas: BranchMeasurements,
}

impl TimedBranchMeasurements {
    fn subset(&self, indices: &[usize]) -> BranchMeasurements {
        let pick = |v: &Vec<crate::synth::Phasor>| indices.iter().map(|&i| v[i]).collect();
        BranchMeasurements {
            key: self.meas.key,
            v_pq: pick(&self.meas.v_pq),
            v_qp: pick(&self.meas.v_qp),
            i_pq: pick(&self.meas.i_pq),
            i_qp: pick(&self.meas.i_qp),
        }
    }
}

/// How to partition a dataset into the two consistency windows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitRule {
    /// S1 = S2 = the whole dataset (a degenerate self-check).
    Whole,
    /// First half vs second half in time order.
    Halves,
    /// Alternating blocks of the given size.
    AlternatingBlocks { size: usize },
}

impl SplitRule {
    pub fn parse(text: &str) -> Result<Self> {
        match text {
            "all" => Ok(SplitRule::Whole),
            "halves" => Ok(SplitRule::Halves),
            other => {
                if let Some(size) = other.strip_prefix("blocks:") {
                    let size: usize = size
                        .parse()
                        .map_err(|_| Error::Config(format!("bad block size in split rule '{other}'")))?;
                    if size == 0 {
                        return Err(Error::Config("block size must be positive".into()));
                    }
                    Ok(SplitRule::AlternatingBlocks { size })
                } else {
                    Err(Error::Config(format!(
                        "unknown split rule '{other}' (expected all, halves, or blocks:<k>)"
                    )))
                }
            }
        }
    }

    /// Index sets (S1, S2) over `n` time-ordered samples.
    pub fn assign(&self, n: usize) -> (Vec<usize>, Vec<usize>) {
        match self {
            SplitRule::Whole => ((0..n).collect(), (0..n).collect()),
            SplitRule::Halves => ((0..n / 2).collect(), (n / 2..n).collect()),
            SplitRule::AlternatingBlocks { size } => {
                let mut s1 = Vec::new();
                let mut s2 = Vec::new();
                for i in 0..n {
                    if (i / size) % 2 == 0 {
                        s1.push(i);
                    } else {
                        s2.push(i);
                    }
                }
                (s1, s2)
            }
        }
    }
}

/// Per-branch deltas between the two window estimates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldBranchDelta {
    pub key: BranchKey,
    pub m_s1: i32,
    pub m_s2: i32,
    pub bins_match: bool,
    /// |τ̂_S1 − τ̂_S2| per instrument.
    pub delta_vt_from: f64,
    pub delta_vt_to: f64,
    pub delta_ct_from: f64,
    pub delta_ct_to: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldConsistencyReport {
    pub s1: SystemEstimate,
    pub s2: SystemEstimate,
    pub deltas: Vec<FieldBranchDelta>,
}

/// Split the dataset per the rule, run single-window calibration on each
/// side, and compare: consistent instrumentation must reproduce the same
/// parameter bins and nearby correction factors.
pub fn field_consistency(
    tree: &ConnectedTree,
    dataset: &BTreeMap<BranchKey, TimedBranchMeasurements>,
    rule: SplitRule,
    cfg: &QuantizationConfig,
) -> Result<FieldConsistencyReport> {
    for branch in tree.branches() {
        if !dataset.contains_key(&branch.key()) {
            return Err(Error::Data(format!(
                "dataset is missing branch {}",
                branch.key()
            )));
        }
    }

    // All branches must share one time base.
    let mut iter = dataset.values();
    let reference = iter
        .next()
        .ok_or_else(|| Error::Data("empty dataset".into()))?;
    for timed in dataset.values() {
        if timed.t != reference.t {
            return Err(Error::Data(format!(
                "branch {} is not time-aligned with the rest of the dataset",
                timed.meas.key
            )));
        }
    }

    // Time order, stable under duplicate timestamps.
    let mut order: Vec<usize> = (0..reference.t.len()).collect();
    order.sort_by(|&a, &b| reference.t[a].total_cmp(&reference.t[b]));

    let (s1_pos, s2_pos) = rule.assign(order.len());
    let resolve = |positions: &[usize]| -> Vec<usize> {
        positions.iter().map(|&p| order[p]).collect()
    };
    let s1_idx = resolve(&s1_pos);
    let s2_idx = resolve(&s2_pos);
    for (name, idx) in [("S1", &s1_idx), ("S2", &s2_idx)] {
        if idx.len() < MIN_SAMPLES {
            return Err(Error::Data(format!(
                "partition {name} has {} samples, need at least {MIN_SAMPLES}",
                idx.len()
            )));
        }
    }

    let window = |indices: &[usize]| -> BTreeMap<BranchKey, BranchMeasurements> {
        dataset
            .iter()
            .map(|(key, timed)| (*key, timed.subset(indices)))
            .collect()
    };
    let cal1 = crate::propagation::calibrate_tree(tree, &[window(&s1_idx)], cfg)?;
    let cal2 = crate::propagation::calibrate_tree(tree, &[window(&s2_idx)], cfg)?;

    let mut deltas = Vec::new();
    for branch in tree.branches() {
        let key = branch.key();
        let (Some(b1), Some(b2)) = (
            cal1.estimate.branches.get(&key),
            cal2.estimate.branches.get(&key),
        ) else {
            continue;
        };
        deltas.push(FieldBranchDelta {
            key,
            m_s1: b1.m_star,
            m_s2: b2.m_star,
            bins_match: b1.m_star == b2.m_star,
            delta_vt_from: (b1.factors.vt_from - b2.factors.vt_from).norm(),
            delta_vt_to: (b1.factors.vt_to - b2.factors.vt_to).norm(),
            delta_ct_from: (b1.factors.ct_from - b2.factors.ct_from).norm(),
            delta_ct_to: (b1.factors.ct_to - b2.factors.ct_to).norm(),
        });
    }
    deltas.sort_by_key(|d| d.key);

    Ok(FieldConsistencyReport {
        s1: cal1.estimate,
        s2: cal2.estimate,
        deltas,
    })
}
