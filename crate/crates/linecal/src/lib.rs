//! Joint transmission-line parameter estimation and instrument-transformer
//! calibration from synchrophasor data.
//!
//! A single revenue-quality meter (RQM) at one branch end anchors the
//! estimation. Per branch, an errors-in-variables regression solved by total
//! least squares yields the line parameters (through bounded-variation bin
//! selection) and the correction-factor ratios of the branch's instrument
//! transformers. Shared bus voltages then propagate absolute correction
//! factors across the whole connected tree, and a Monte-Carlo harness scores
//! campaigns, runs sensitivity sweeps, and ranks candidate RQM locations.

pub mod error;
pub mod estimator;
pub mod grid;
pub mod harness;
pub mod io;
pub mod metrics;
pub mod propagation;
pub mod quantize;
pub mod regression;
pub mod seed;
pub mod synth;
pub mod tls;

pub use error::{Error, FailureClass, Result};
pub use estimator::{
    average_anchor_factors, estimate_branch, BranchEstimate, CfrEstimate, CorrectionFactorSet,
};
pub use grid::{
    it_class, sample_ratio_error, Branch, BranchKey, Bus, ConnectedTree, End, ItClassSpec,
    LineParams, PathStep, RatioError, RqmLocation,
};
pub use harness::{
    field_consistency, rank_rqm_locations, run_campaign, sweep, CampaignConfig, CampaignOutput,
    FieldBranchDelta, FieldConsistencyReport, PlacementEntry, PlacementReport, RePolicy,
    SplitRule, SweepAxis, SweepPoint, TimedBranchMeasurements,
};
pub use metrics::{are_complex, are_real, score_runs, AreReport, BranchScore};
pub use propagation::{
    aggregate_runs, branch_frames, calibrate_tree, estimate_run, factors_from_lambda, mean_lambda,
    voltage_ratio, BranchCalibration, BranchFailure, BranchFrame, RhoEstimate, RunEstimates,
    SystemEstimate, TreeCalibration,
};
pub use quantize::{
    injectivity_check, params_at, principal_sqrt, quantize, voltage_transfer_factor,
    BinSelection, InjectivityReport, QuantizationConfig, WEstimate,
};
pub use regression::{build_system, RegressionSystem, ThetaEstimate};
pub use synth::{
    corrupt, generate_trajectories, synthesize_campaign, true_branch_currents, BranchMeasurements,
    BusTrajectory, Campaign, CampaignSeeds, CampaignTruth, Instrument, NoiseConfig, Phasor,
    SynthSpec, TrajectoryProfile,
};
pub use tls::{tls_solve, tls_solve_matrix, TlsSolution, TlsVecSolution};
