//! Per-branch estimation: regression, TLS, bin selection, and
//! correction-factor-ratio back-calculation.
//!
//! The branch's `orientation` end plays the anchored role: all ratios are
//! relative to that end's VT. The first parameter θ₁ = W² is independent of
//! the ratios, so W selects the parameter bin, and the remaining parameters
//! divide out to the three ratios:
//!
//! ```text
//! γ_v_remote = θ̂₂ / Ŵ      γ_i_local = θ̂₃ / (Ŵ·ẑ)      γ_i_remote = θ̂₄ / ẑ
//! ```
//!
//! with ẑ taken from the quantized parameters.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{End, LineParams};
use crate::quantize::{principal_sqrt, quantize, voltage_transfer_factor, QuantizationConfig};
use crate::regression::{build_system, ThetaEstimate};
use crate::synth::{BranchMeasurements, Instrument};
use crate::tls::tls_solve;

/// Correction-factor ratios of one branch, relative to the anchored-end VT.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CfrEstimate {
    /// τ_V(remote) / τ_V(local)
    pub vt_remote: Complex64,
    /// τ_I(local) / τ_V(local)
    pub ct_local: Complex64,
    /// τ_I(remote) / τ_V(local)
    pub ct_remote: Complex64,
}

impl CfrEstimate {
    pub fn unity() -> Self {
        let one = Complex64::new(1.0, 0.0);
        Self {
            vt_remote: one,
            ct_local: one,
            ct_remote: one,
        }
    }

    /// Any ratio magnitude outside this band is physically implausible for
    /// supported IT classes and gets flagged, not rejected.
    pub const PLAUSIBLE_MAGNITUDE: (f64, f64) = (0.8, 1.25);

    pub fn implausible(&self) -> bool {
        let (lo, hi) = Self::PLAUSIBLE_MAGNITUDE;
        [self.vt_remote, self.ct_local, self.ct_remote]
            .iter()
            .any(|g| {
                let m = g.norm();
                !(lo..=hi).contains(&m)
            })
    }
}

/// Full per-branch estimate for one measurement window.
#[derive(Debug, Clone, PartialEq)]
pub struct BranchEstimate {
    pub params: LineParams,
    pub m_star: i32,
    pub ratios: CfrEstimate,
    pub theta: ThetaEstimate,
    pub w_hat: Complex64,
    /// |Ŵ − W(η̂)|: gap between the TLS-derived W and the selected bin's W.
    pub w_mismatch: f64,
    /// Ŵ landed beyond the edge of the bin grid.
    pub extrapolated: bool,
    pub condition_indicator: f64,
    pub implausible_ratios: bool,
}

/// Estimate line parameters and correction-factor ratios of one branch.
pub fn estimate_branch(
    meas: &BranchMeasurements,
    params_db: &LineParams,
    cfg: &QuantizationConfig,
    orientation: End,
) -> Result<BranchEstimate> {
    meas.validate()?;
    cfg.validate()?;

    let system = build_system(meas, orientation)?;
    let sol = tls_solve(&system)?;
    let theta = ThetaEstimate::from_real(&sol.theta_real);

    let w_hat = principal_sqrt(theta.theta[0])?;
    let selection = quantize(&w_hat, params_db, cfg);
    let z_hat = selection.params.series_impedance();

    let ratios = CfrEstimate {
        vt_remote: theta.theta[1] / w_hat.value,
        ct_local: theta.theta[2] / (w_hat.value * z_hat),
        ct_remote: theta.theta[3] / z_hat,
    };

    let w_mismatch = (w_hat.value - voltage_transfer_factor(&selection.params)).norm();
    let implausible_ratios = ratios.implausible();

    Ok(BranchEstimate {
        params: selection.params,
        m_star: selection.m_star,
        ratios,
        theta,
        w_hat: w_hat.value,
        w_mismatch,
        extrapolated: selection.extrapolated,
        condition_indicator: sol.condition_indicator,
        implausible_ratios,
    })
}

/// Absolute correction factors of one branch in its file orientation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorrectionFactorSet {
    pub vt_from: Complex64,
    pub vt_to: Complex64,
    pub ct_from: Complex64,
    pub ct_to: Complex64,
}

impl CorrectionFactorSet {
    pub fn at(&self, end: End, kind: Instrument) -> Complex64 {
        match (end, kind) {
            (End::From, Instrument::Vt) => self.vt_from,
            (End::To, Instrument::Vt) => self.vt_to,
            (End::From, Instrument::Ct) => self.ct_from,
            (End::To, Instrument::Ct) => self.ct_to,
        }
    }

    /// Build from anchored-frame values: the local-end VT factor plus the
    /// three ratios scaled by it.
    pub fn from_local_frame(
        local_end: End,
        vt_local: Complex64,
        vt_remote: Complex64,
        ct_local: Complex64,
        ct_remote: Complex64,
    ) -> Self {
        match local_end {
            End::From => Self {
                vt_from: vt_local,
                vt_to: vt_remote,
                ct_from: ct_local,
                ct_to: ct_remote,
            },
            End::To => Self {
                vt_from: vt_remote,
                vt_to: vt_local,
                ct_from: ct_remote,
                ct_to: ct_local,
            },
        }
    }
}

/// Average per-run ratios of the RQM branch into absolute correction factors.
/// The RQM-end VT is the reference and is pinned to 1 + j0; each remaining
/// factor is the arithmetic mean over runs of the corresponding ratio.
pub fn average_anchor_factors(runs: &[CfrEstimate], rqm_end: End) -> Result<CorrectionFactorSet> {
    if runs.is_empty() {
        return Err(Error::EmptyEnsemble);
    }
    let m = runs.len() as f64;
    let mean = |f: fn(&CfrEstimate) -> Complex64| -> Complex64 {
        runs.iter().map(f).sum::<Complex64>() / m
    };
    Ok(CorrectionFactorSet::from_local_frame(
        rqm_end,
        Complex64::new(1.0, 0.0),
        mean(|g| g.vt_remote),
        mean(|g| g.ct_local),
        mean(|g| g.ct_remote),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{
        it_class, Branch, BranchKey, Bus, ConnectedTree, ItClassSpec, RatioError, RqmLocation,
    };
    use crate::synth::{
        corrupt, synthesize_campaign, CampaignSeeds, NoiseConfig, SynthSpec, TrajectoryProfile,
    };

    fn one_branch_tree(params_db: LineParams) -> ConnectedTree {
        ConnectedTree::new(
            vec![
                Bus {
                    id: 1,
                    name: String::new(),
                },
                Bus {
                    id: 2,
                    name: String::new(),
                },
            ],
            vec![Branch {
                from_bus: 1,
                to_bus: 2,
                params_db,
                params_true: None,
            }],
            RqmLocation {
                branch: 0,
                end: End::From,
            },
        )
        .unwrap()
    }

    fn db() -> LineParams {
        LineParams {
            r: 0.003,
            x: 0.04,
            b: 0.45,
        }
    }

    fn noise_free_campaign(seed: u64) -> crate::synth::Campaign {
        let tree = one_branch_tree(db());
        let spec = SynthSpec {
            n: 60,
            it_class: ItClassSpec::new(0.0, 0.0).unwrap(),
            rqm_class: ItClassSpec::new(0.0, 0.0).unwrap(),
            noise_sigma: 0.0,
            quantization: QuantizationConfig::default(),
            profile: TrajectoryProfile::default(),
        };
        synthesize_campaign(&tree, &spec, CampaignSeeds::from_base(seed)).unwrap()
    }

    #[test]
    fn noise_free_unity_recovers_bin_and_unity_ratios() {
        let campaign = noise_free_campaign(31);
        let key = BranchKey { from: 1, to: 2 };
        let est = estimate_branch(
            &campaign.measurements[&key],
            &db(),
            &QuantizationConfig::default(),
            End::From,
        )
        .unwrap();
        assert_eq!(est.m_star, campaign.truth.bins[&key]);
        let one = Complex64::new(1.0, 0.0);
        assert!((est.ratios.vt_remote - one).norm() < 1e-8);
        assert!((est.ratios.ct_local - one).norm() < 1e-8);
        assert!((est.ratios.ct_remote - one).norm() < 1e-8);
        assert!(!est.implausible_ratios);
        assert!(!est.extrapolated);
    }

    #[test]
    fn single_remote_vt_error_shows_up_as_inverse_ratio() {
        // corrupt only the remote VT, noise-free: the first ratio must equal
        // 1 / alpha within 1e-8
        let campaign = noise_free_campaign(32);
        let key = BranchKey { from: 1, to: 2 };
        let mut meas = campaign.measurements[&key].clone();
        let alpha = RatioError {
            value: Complex64::from_polar(1.01, 0.002),
        };
        meas.v_qp = corrupt(&meas.v_qp, alpha, &NoiseConfig { sigma: 0.0, seed: 0 });

        let est =
            estimate_branch(&meas, &db(), &QuantizationConfig::default(), End::From).unwrap();
        assert_eq!(est.m_star, campaign.truth.bins[&key]);
        let expected = alpha.value.inv();
        assert!(
            (est.ratios.vt_remote - expected).norm() < 1e-8,
            "{} vs {}",
            est.ratios.vt_remote,
            expected
        );
        let one = Complex64::new(1.0, 0.0);
        assert!((est.ratios.ct_local - one).norm() < 1e-8);
        assert!((est.ratios.ct_remote - one).norm() < 1e-8);
    }

    #[test]
    fn common_scale_cancels_in_ratios_and_bin() {
        let campaign = noise_free_campaign(33);
        let key = BranchKey { from: 1, to: 2 };
        let meas = &campaign.measurements[&key];
        let k = Complex64::from_polar(1.37, 0.8);
        let scaled = BranchMeasurements {
            key,
            v_pq: meas.v_pq.iter().map(|s| s * k).collect(),
            v_qp: meas.v_qp.iter().map(|s| s * k).collect(),
            i_pq: meas.i_pq.iter().map(|s| s * k).collect(),
            i_qp: meas.i_qp.iter().map(|s| s * k).collect(),
        };
        let cfg = QuantizationConfig::default();
        let base = estimate_branch(meas, &db(), &cfg, End::From).unwrap();
        let got = estimate_branch(&scaled, &db(), &cfg, End::From).unwrap();
        assert_eq!(got.m_star, base.m_star);
        assert!((got.ratios.vt_remote - base.ratios.vt_remote).norm() < 1e-9);
        assert!((got.ratios.ct_local - base.ratios.ct_local).norm() < 1e-9);
        assert!((got.ratios.ct_remote - base.ratios.ct_remote).norm() < 1e-9);
    }

    #[test]
    fn class_errors_on_every_instrument_recover_all_ratios() {
        // all four instruments off, noise-free; ratios must match truth
        let tree = one_branch_tree(db());
        let spec = SynthSpec {
            n: 60,
            it_class: it_class("0.6").unwrap(),
            rqm_class: it_class("0.15").unwrap(),
            noise_sigma: 0.0,
            quantization: QuantizationConfig::default(),
            profile: TrajectoryProfile::default(),
        };
        let campaign = synthesize_campaign(&tree, &spec, CampaignSeeds::from_base(34)).unwrap();
        let key = BranchKey { from: 1, to: 2 };
        let est = estimate_branch(
            &campaign.measurements[&key],
            &db(),
            &QuantizationConfig::default(),
            End::From,
        )
        .unwrap();

        let tau = |end: End, kind: Instrument| {
            campaign.truth.ratio_errors[&(key, end, kind)].correction_factor()
        };
        let gamma_v = tau(End::To, Instrument::Vt) / tau(End::From, Instrument::Vt);
        let gamma_il = tau(End::From, Instrument::Ct) / tau(End::From, Instrument::Vt);
        let gamma_ir = tau(End::To, Instrument::Ct) / tau(End::From, Instrument::Vt);
        assert_eq!(est.m_star, campaign.truth.bins[&key]);
        assert!((est.ratios.vt_remote - gamma_v).norm() < 1e-8);
        assert!((est.ratios.ct_local - gamma_il).norm() < 1e-8);
        assert!((est.ratios.ct_remote - gamma_ir).norm() < 1e-8);
    }

    #[test]
    fn averaging_identity_and_mean() {
        let g = CfrEstimate {
            vt_remote: Complex64::new(1.01, 0.002),
            ct_local: Complex64::new(0.99, -0.001),
            ct_remote: Complex64::new(1.0, 0.004),
        };
        let one_run = average_anchor_factors(&[g], End::From).unwrap();
        assert_eq!(one_run.vt_to, g.vt_remote);
        assert_eq!(one_run.ct_from, g.ct_local);
        assert_eq!(one_run.vt_from, Complex64::new(1.0, 0.0));

        let many = average_anchor_factors(&[g; 8], End::From).unwrap();
        assert!((many.vt_to - g.vt_remote).norm() < 1e-15);

        assert!(matches!(
            average_anchor_factors(&[], End::From),
            Err(Error::EmptyEnsemble)
        ));
    }

    #[test]
    fn anchored_to_end_maps_into_canonical_frame() {
        let g = CfrEstimate {
            vt_remote: Complex64::new(1.02, 0.0),
            ct_local: Complex64::new(0.98, 0.0),
            ct_remote: Complex64::new(1.01, 0.0),
        };
        let set = average_anchor_factors(&[g], End::To).unwrap();
        assert_eq!(set.vt_to, Complex64::new(1.0, 0.0));
        assert_eq!(set.vt_from, g.vt_remote);
        assert_eq!(set.ct_to, g.ct_local);
        assert_eq!(set.ct_from, g.ct_remote);
    }
}
