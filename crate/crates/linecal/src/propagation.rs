//! Tree-wide calibration from a single anchored branch end.
//!
//! Every VT observing the same bus sees the same true voltage, so the ratio
//! of two measured series at a junction estimates the ratio of the two VTs'
//! correction factors. Chaining those bus ratios with each branch's own
//! remote/local VT ratio telescopes the anchor's reference out to every
//! branch of the tree; the accumulated product Λ is the absolute VT factor
//! at a branch's near end, and the branch's own ratios then fix the other
//! three instruments.

use std::collections::BTreeMap;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, FailureClass, Result};
use crate::estimator::{estimate_branch, BranchEstimate, CfrEstimate, CorrectionFactorSet};
use crate::grid::{BranchKey, ConnectedTree, End, LineParams, RqmLocation};
use crate::quantize::{injectivity_check, params_at, QuantizationConfig};
use crate::synth::{BranchMeasurements, Phasor};

/// Denominator samples below this magnitude are skipped.
const RHO_DENOM_FLOOR: f64 = 1e-9;

/// Ratio of the correction factors of two VTs observing the same bus,
/// estimated as the sample mean of the measured voltage ratio.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RhoEstimate {
    pub bus: usize,
    /// Branch whose VT is the reference (toward the anchor).
    pub incoming: BranchKey,
    /// Branch whose VT is being related to the reference.
    pub outgoing: BranchKey,
    /// τ_V(outgoing) / τ_V(incoming)
    pub value: Complex64,
    pub skipped: usize,
}

impl RhoEstimate {
    /// Magnitudes outside this band are flagged as implausible.
    pub const PLAUSIBLE_MAGNITUDE: (f64, f64) = (0.9, 1.1);

    pub fn implausible(&self) -> bool {
        let (lo, hi) = Self::PLAUSIBLE_MAGNITUDE;
        !(lo..=hi).contains(&self.value.norm())
    }
}

/// Mean of `v_incoming[j] / v_outgoing[j]` over up to `limit` samples.
/// Samples with a near-zero denominator are skipped and counted.
pub fn voltage_ratio(
    v_incoming: &[Phasor],
    v_outgoing: &[Phasor],
    limit: Option<usize>,
) -> Result<(Complex64, usize)> {
    let n = v_incoming.len().min(v_outgoing.len());
    let n = limit.map_or(n, |l| l.min(n));
    if n == 0 {
        return Err(Error::AllSamplesSkipped(0));
    }
    let mut sum = Complex64::new(0.0, 0.0);
    let mut used = 0usize;
    for j in 0..n {
        if v_outgoing[j].norm() < RHO_DENOM_FLOOR {
            continue;
        }
        sum += v_incoming[j] / v_outgoing[j];
        used += 1;
    }
    if used == 0 {
        return Err(Error::AllSamplesSkipped(n));
    }
    Ok((sum / used as f64, n - used))
}

/// Static per-branch facts derived from the tree and the anchor location.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BranchFrame {
    pub key: BranchKey,
    /// Index into the tree's branch list.
    pub index: usize,
    /// End facing the anchor; all ratios of this branch are relative to it.
    pub local_end: End,
    pub entry_bus: usize,
    pub exit_bus: usize,
    /// Branch whose VT provides the reference at `entry_bus`.
    pub incoming: BranchKey,
    /// Branches crossed from the anchor bus to `entry_bus`.
    pub hops: usize,
}

/// Orient every branch away from the anchor, in deterministic DFS order
/// (parents always precede children).
pub fn branch_frames(tree: &ConnectedTree) -> Vec<BranchFrame> {
    let rqm = tree.rqm();
    let rqm_key = tree.branches()[rqm.branch].key();
    let rqm_bus = tree.rqm_bus();

    let mut incoming_at: BTreeMap<usize, BranchKey> = BTreeMap::new();
    incoming_at.insert(rqm_bus, rqm_key);
    let mut depth: BTreeMap<usize, usize> = BTreeMap::new();
    depth.insert(rqm_bus, 0);

    let mut frames = Vec::with_capacity(tree.branches().len());
    for step in tree.branch_order_from_rqm() {
        let branch = &tree.branches()[step.branch];
        let key = branch.key();
        let local_end = branch.end_at(step.entry_bus).expect("oriented step");
        let hops = depth[&step.entry_bus];
        frames.push(BranchFrame {
            key,
            index: step.branch,
            local_end,
            entry_bus: step.entry_bus,
            exit_bus: step.exit_bus,
            incoming: incoming_at[&step.entry_bus],
            hops,
        });
        incoming_at.insert(step.exit_bus, key);
        depth.insert(step.exit_bus, hops + 1);
    }
    frames
}

/// Why a branch could not be estimated, with its broad category preserved
/// for exit-code mapping.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchFailure {
    pub class: FailureClass,
    pub message: String,
}

impl BranchFailure {
    pub fn from_error(err: &Error) -> Self {
        Self {
            class: err.class(),
            message: err.to_string(),
        }
    }

    fn data(message: String) -> Self {
        Self {
            class: FailureClass::Data,
            message,
        }
    }
}

impl std::fmt::Display for BranchFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.message)
    }
}

/// Everything estimated from one measurement window (one run).
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunEstimates {
    pub branches: BTreeMap<BranchKey, BranchEstimate>,
    /// Keyed by (bus, outgoing branch); the incoming branch at a bus is unique.
    pub rhos: BTreeMap<(usize, BranchKey), RhoEstimate>,
    /// Absolute VT factor transferred to each branch's local end.
    pub lambdas: BTreeMap<BranchKey, Complex64>,
    /// Per-run absolute factors in file orientation.
    pub factors: BTreeMap<BranchKey, CorrectionFactorSet>,
    pub failures: BTreeMap<BranchKey, BranchFailure>,
}

/// Absolute correction factors of a branch from the transferred reference Λ
/// and the branch's own ratios.
pub fn factors_from_lambda(
    lambda: Complex64,
    ratios: &CfrEstimate,
    local_end: End,
) -> CorrectionFactorSet {
    CorrectionFactorSet::from_local_frame(
        local_end,
        lambda,
        lambda * ratios.vt_remote,
        lambda * ratios.ct_local,
        lambda * ratios.ct_remote,
    )
}

/// Run per-branch estimation plus reference propagation on one window.
/// A branch failure is recorded and poisons only its own subtree.
pub fn estimate_run(
    tree: &ConnectedTree,
    measurements: &BTreeMap<BranchKey, BranchMeasurements>,
    cfg: &QuantizationConfig,
) -> RunEstimates {
    let frames = branch_frames(tree);
    let rqm = tree.rqm();
    let rqm_key = tree.branches()[rqm.branch].key();

    let mut out = RunEstimates::default();

    for frame in &frames {
        let Some(meas) = measurements.get(&frame.key) else {
            out.failures.insert(
                frame.key,
                BranchFailure::data(format!("no measurements for branch {}", frame.key)),
            );
            continue;
        };
        let db = tree.branches()[frame.index].params_db;
        match estimate_branch(meas, &db, cfg, frame.local_end) {
            Ok(est) => {
                out.branches.insert(frame.key, est);
            }
            Err(err) => {
                out.failures.insert(frame.key, BranchFailure::from_error(&err));
            }
        }
        if frame.incoming != frame.key {
            let incoming_meas = measurements.get(&frame.incoming);
            let ratio = incoming_meas.and_then(|inc| {
                let v_in = inc.voltage_at_bus(frame.entry_bus)?;
                let v_out = meas.voltage_at_bus(frame.entry_bus)?;
                Some(voltage_ratio(v_in, v_out, None))
            });
            match ratio {
                Some(Ok((value, skipped))) => {
                    out.rhos.insert(
                        (frame.entry_bus, frame.key),
                        RhoEstimate {
                            bus: frame.entry_bus,
                            incoming: frame.incoming,
                            outgoing: frame.key,
                            value,
                            skipped,
                        },
                    );
                }
                Some(Err(err)) => {
                    out.failures.entry(frame.key).or_insert_with(|| BranchFailure {
                        class: err.class(),
                        message: format!("bus-voltage ratio at bus {}: {err}", frame.entry_bus),
                    });
                }
                None => {
                    out.failures.entry(frame.key).or_insert_with(|| {
                        BranchFailure::data(format!(
                            "no shared bus series at bus {}",
                            frame.entry_bus
                        ))
                    });
                }
            }
        }
    }

    // Reference transfer: the VT factor at the instrument that discovered
    // each bus, walked outward from the anchor.
    let mut vt_abs: BTreeMap<(usize, BranchKey), Complex64> = BTreeMap::new();
    vt_abs.insert((tree.rqm_bus(), rqm_key), Complex64::new(1.0, 0.0));

    for frame in &frames {
        let upstream = vt_abs.get(&(frame.entry_bus, frame.incoming)).copied();
        let Some(upstream) = upstream else {
            out.failures.entry(frame.key).or_insert_with(|| {
                BranchFailure::data(format!("broken reference chain at bus {}", frame.entry_bus))
            });
            continue;
        };
        let lambda = if frame.incoming == frame.key {
            upstream
        } else {
            match out.rhos.get(&(frame.entry_bus, frame.key)) {
                Some(rho) => upstream * rho.value,
                None => continue, // failure already recorded above
            }
        };
        out.lambdas.insert(frame.key, lambda);
        let Some(est) = out.branches.get(&frame.key) else {
            continue; // branch estimate failed; cannot extend the chain here
        };
        let is_anchor_branch = frame.key == rqm_key;
        let local_vt = if is_anchor_branch {
            Complex64::new(1.0, 0.0)
        } else {
            lambda
        };
        out.factors.insert(
            frame.key,
            factors_from_lambda(local_vt, &est.ratios, frame.local_end),
        );
        vt_abs.insert((frame.exit_bus, frame.key), local_vt * est.ratios.vt_remote);
    }

    out
}

/// Campaign-level aggregate of one branch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchCalibration {
    pub key: BranchKey,
    pub local_end: End,
    pub hops: usize,
    pub params: LineParams,
    pub m_star: i32,
    /// Mean correction-factor ratios over runs.
    pub ratios: CfrEstimate,
    /// Mean absolute correction factors over runs; the anchor-end VT of the
    /// anchor branch stays pinned at 1 + j0.
    pub factors: CorrectionFactorSet,
    /// Minimum pairwise distance between bin W values; small spacing marks
    /// branches prone to neighbor-bin selection under noise.
    pub min_w_spacing: f64,
    pub runs_used: usize,
    pub extrapolated_runs: usize,
    pub implausible_runs: usize,
}

/// Campaign-level estimate for the whole tree.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemEstimate {
    pub rqm: RqmLocation,
    #[serde(with = "crate::grid::branch_key_map")]
    pub branches: BTreeMap<BranchKey, BranchCalibration>,
    #[serde(with = "crate::grid::branch_key_map")]
    pub failures: BTreeMap<BranchKey, BranchFailure>,
}

/// Combine per-run estimates into the campaign answer: modal bin, mean
/// ratios, mean factors.
pub fn aggregate_runs(
    tree: &ConnectedTree,
    runs: &[RunEstimates],
    cfg: &QuantizationConfig,
) -> Result<SystemEstimate> {
    if runs.is_empty() {
        return Err(Error::EmptyEnsemble);
    }
    let frames = branch_frames(tree);
    let mut branches = BTreeMap::new();
    let mut failures: BTreeMap<BranchKey, BranchFailure> = BTreeMap::new();

    for frame in &frames {
        let db = tree.branches()[frame.index].params_db;
        let per_run: Vec<&BranchEstimate> = runs
            .iter()
            .filter_map(|r| r.branches.get(&frame.key))
            .collect();
        let with_factors: Vec<&CorrectionFactorSet> = runs
            .iter()
            .filter_map(|r| r.factors.get(&frame.key))
            .collect();
        if per_run.is_empty() || with_factors.is_empty() {
            let detail = runs
                .iter()
                .find_map(|r| r.failures.get(&frame.key).cloned())
                .unwrap_or_else(|| BranchFailure::data("no successful runs".into()));
            failures.insert(frame.key, detail);
            continue;
        }

        // Modal bin; ties prefer smaller |m|, then smaller m.
        let mut counts: BTreeMap<i32, usize> = BTreeMap::new();
        for est in &per_run {
            *counts.entry(est.m_star).or_default() += 1;
        }
        let m_star = counts
            .iter()
            .max_by(|(m1, c1), (m2, c2)| {
                c1.cmp(c2)
                    .then_with(|| (m2.abs(), *m2).cmp(&(m1.abs(), *m1)))
            })
            .map(|(&m, _)| m)
            .unwrap();

        let n_runs = per_run.len() as f64;
        let mean_ratio = |f: fn(&CfrEstimate) -> Complex64| -> Complex64 {
            per_run.iter().map(|e| f(&e.ratios)).sum::<Complex64>() / n_runs
        };
        let n_fact = with_factors.len() as f64;
        let mean_factor = |f: fn(&CorrectionFactorSet) -> Complex64| -> Complex64 {
            with_factors.iter().map(|s| f(s)).sum::<Complex64>() / n_fact
        };

        branches.insert(
            frame.key,
            BranchCalibration {
                key: frame.key,
                local_end: frame.local_end,
                hops: frame.hops,
                params: params_at(&db, cfg, m_star),
                m_star,
                ratios: CfrEstimate {
                    vt_remote: mean_ratio(|g| g.vt_remote),
                    ct_local: mean_ratio(|g| g.ct_local),
                    ct_remote: mean_ratio(|g| g.ct_remote),
                },
                factors: CorrectionFactorSet {
                    vt_from: mean_factor(|s| s.vt_from),
                    vt_to: mean_factor(|s| s.vt_to),
                    ct_from: mean_factor(|s| s.ct_from),
                    ct_to: mean_factor(|s| s.ct_to),
                },
                min_w_spacing: injectivity_check(&db, cfg).min_pairwise_distance,
                runs_used: per_run.len(),
                extrapolated_runs: per_run.iter().filter(|e| e.extrapolated).count(),
                implausible_runs: per_run.iter().filter(|e| e.implausible_ratios).count(),
            },
        );
    }

    Ok(SystemEstimate {
        rqm: tree.rqm(),
        branches,
        failures,
    })
}

/// Output of [`calibrate_tree`]: campaign aggregate plus the per-run detail
/// the scorer consumes.
#[derive(Debug, Clone)]
pub struct TreeCalibration {
    pub estimate: SystemEstimate,
    pub runs: Vec<RunEstimates>,
}

/// Full tree-wide calibration over M measurement windows.
pub fn calibrate_tree(
    tree: &ConnectedTree,
    windows: &[BTreeMap<BranchKey, BranchMeasurements>],
    cfg: &QuantizationConfig,
) -> Result<TreeCalibration> {
    let runs: Vec<RunEstimates> = windows
        .iter()
        .map(|meas| estimate_run(tree, meas, cfg))
        .collect();
    let estimate = aggregate_runs(tree, &runs, cfg)?;
    Ok(TreeCalibration { estimate, runs })
}

/// Mean transferred reference for one branch over runs (empty product = 1
/// for the anchor branch itself).
pub fn mean_lambda(runs: &[RunEstimates], key: BranchKey) -> Result<Complex64> {
    let values: Vec<Complex64> = runs
        .iter()
        .filter_map(|r| r.lambdas.get(&key).copied())
        .collect();
    if values.is_empty() {
        return Err(Error::PathGap {
            what: "transferred reference".into(),
            key: key.to_string(),
        });
    }
    Ok(values.iter().sum::<Complex64>() / values.len() as f64)
}
