//! Assembly of the anchored errors-in-variables system.
//!
//! Per time instant the branch relations reduce to two complex equations in
//! the four parameters `θ = [W², W·γ_v, W·z·γ_i, z·γ_i']`, where the γ are
//! correction-factor ratios relative to the anchored-end VT:
//!
//! ```text
//! [ V_pq  -V_qp  -I_pq   0   ] θ = 0
//! [  0     V_qp   0    -I_qp ] θ = V_pq
//! ```
//!
//! Stacking n instants and expanding to Cartesian coordinates yields the real
//! system `D·θ_real = c` consumed by the TLS solver.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::grid::{End, LineParams};
use crate::quantize::voltage_transfer_factor;
use crate::synth::{BranchMeasurements, MIN_SAMPLES};

/// Real-expanded regression system: `4n × 8` matrix and `4n` right-hand side.
///
/// Rows come in groups of four per instant: the real parts of both complex
/// equations, then their imaginary parts. Columns interleave (Re, Im) per
/// complex parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressionSystem {
    pub d: DMatrix<f64>,
    pub c: DVector<f64>,
    pub n: usize,
}

/// The four complex regression parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThetaEstimate {
    pub theta: [Complex64; 4],
}

impl ThetaEstimate {
    /// Reassemble from the interleaved real vector.
    pub fn from_real(v: &[f64; 8]) -> Self {
        Self {
            theta: [
                Complex64::new(v[0], v[1]),
                Complex64::new(v[2], v[3]),
                Complex64::new(v[4], v[5]),
                Complex64::new(v[6], v[7]),
            ],
        }
    }

    /// Forward model: the θ that exact line parameters and correction-factor
    /// ratios `(γ_v_remote, γ_i_local, γ_i_remote)` would produce.
    pub fn from_line(params: &LineParams, ratios: &[Complex64; 3]) -> Self {
        let w = voltage_transfer_factor(params);
        let z = params.series_impedance();
        Self {
            theta: [w * w, w * ratios[0], w * z * ratios[1], z * ratios[2]],
        }
    }

    pub fn to_real(&self) -> [f64; 8] {
        let t = &self.theta;
        [
            t[0].re, t[0].im, t[1].re, t[1].im, t[2].re, t[2].im, t[3].re, t[3].im,
        ]
    }
}

/// The two complex rows and right-hand sides of every instant, with the
/// `orientation` end of the branch playing the anchored (divided-by) role.
/// When `orientation` is the to end, the measurement roles swap.
pub fn complex_rows(
    meas: &BranchMeasurements,
    orientation: End,
) -> Result<(Vec<[Complex64; 4]>, Vec<Complex64>)> {
    let n = meas.v_pq.len();
    if meas.v_qp.len() != n || meas.i_pq.len() != n || meas.i_qp.len() != n {
        return Err(Error::LengthMismatch(format!(
            "branch {}: series lengths {} / {} / {} / {}",
            meas.key,
            n,
            meas.v_qp.len(),
            meas.i_pq.len(),
            meas.i_qp.len()
        )));
    }

    let (v_local, v_remote, i_local, i_remote) = match orientation {
        End::From => (&meas.v_pq, &meas.v_qp, &meas.i_pq, &meas.i_qp),
        End::To => (&meas.v_qp, &meas.v_pq, &meas.i_qp, &meas.i_pq),
    };

    let zero = Complex64::new(0.0, 0.0);
    let mut rows = Vec::with_capacity(2 * n);
    let mut rhs = Vec::with_capacity(2 * n);
    for t in 0..n {
        rows.push([v_local[t], -v_remote[t], -i_local[t], zero]);
        rhs.push(zero);
        rows.push([zero, v_remote[t], zero, -i_remote[t]]);
        rhs.push(v_local[t]);
    }
    Ok((rows, rhs))
}

/// Build the Cartesian-expanded system from branch measurements.
pub fn build_system(meas: &BranchMeasurements, orientation: End) -> Result<RegressionSystem> {
    let n = meas.v_pq.len();
    if n < MIN_SAMPLES {
        return Err(Error::TooFewSamples {
            got: n,
            min: MIN_SAMPLES,
        });
    }
    let (rows, rhs) = complex_rows(meas, orientation)?;

    let mut d = DMatrix::zeros(4 * n, 8);
    let mut c = DVector::zeros(4 * n);
    for t in 0..n {
        for (eq, (row, w)) in rows[2 * t..2 * t + 2]
            .iter()
            .zip(&rhs[2 * t..2 * t + 2])
            .enumerate()
        {
            // real part of the equation, then imaginary part two rows below
            let re_row = 4 * t + eq;
            let im_row = 4 * t + 2 + eq;
            for (k, u) in row.iter().enumerate() {
                d[(re_row, 2 * k)] = u.re;
                d[(re_row, 2 * k + 1)] = -u.im;
                d[(im_row, 2 * k)] = u.im;
                d[(im_row, 2 * k + 1)] = u.re;
            }
            c[re_row] = w.re;
            c[im_row] = w.im;
        }
    }
    Ok(RegressionSystem { d, c, n })
}

impl RegressionSystem {
    /// Debug dump of the stacked system, one row of `[D | c]` per line.
    pub fn write_csv(&self, path: &std::path::Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let mut header: Vec<String> = (1..=8).map(|k| format!("d{k}")).collect();
        header.push("c".into());
        w.write_record(&header)?;
        for i in 0..self.d.nrows() {
            let mut row: Vec<String> = (0..8).map(|j| self.d[(i, j)].to_string()).collect();
            row.push(self.c[i].to_string());
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Residual of the complex system at a given θ, for oracle checks.
pub fn complex_residual(
    rows: &[[Complex64; 4]],
    rhs: &[Complex64],
    theta: &ThetaEstimate,
) -> Vec<Complex64> {
    rows.iter()
        .zip(rhs)
        .map(|(row, w)| {
            row.iter()
                .zip(&theta.theta)
                .map(|(u, t)| u * t)
                .sum::<Complex64>()
                - w
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::BranchKey;
    use crate::synth::Phasor;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn meas_from(
        v_pq: Vec<Phasor>,
        v_qp: Vec<Phasor>,
        i_pq: Vec<Phasor>,
        i_qp: Vec<Phasor>,
    ) -> BranchMeasurements {
        BranchMeasurements {
            key: BranchKey { from: 1, to: 2 },
            v_pq,
            v_qp,
            i_pq,
            i_qp,
        }
    }

    fn random_meas(n: usize, seed: u64) -> BranchMeasurements {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut series = || {
            (0..n)
                .map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
                .collect::<Vec<_>>()
        };
        meas_from(series(), series(), series(), series())
    }

    #[test]
    fn single_instant_rows_match_the_template() {
        let j = Complex64::new(0.0, 1.0);
        let one = Complex64::new(1.0, 0.0);
        let meas = meas_from(vec![one], vec![one], vec![j], vec![-j]);
        let (rows, rhs) = complex_rows(&meas, End::From).unwrap();
        assert_eq!(rows[0], [one, -one, -j, Complex64::new(0.0, 0.0)]);
        assert_eq!(rows[1], [Complex64::new(0.0, 0.0), one, Complex64::new(0.0, 0.0), j]);
        assert_eq!(rhs[0], Complex64::new(0.0, 0.0));
        assert_eq!(rhs[1], one);
    }

    #[test]
    fn orientation_swap_equals_swapped_series() {
        let meas = random_meas(8, 5);
        let swapped = meas_from(
            meas.v_qp.clone(),
            meas.v_pq.clone(),
            meas.i_qp.clone(),
            meas.i_pq.clone(),
        );
        assert_eq!(
            build_system(&meas, End::To).unwrap(),
            build_system(&swapped, End::From).unwrap()
        );
    }

    #[test]
    fn real_expansion_reproduces_complex_multiplication() {
        let meas = random_meas(8, 9);
        let system = build_system(&meas, End::From).unwrap();
        let (rows, rhs) = complex_rows(&meas, End::From).unwrap();

        let mut rng = ChaCha8Rng::seed_from_u64(33);
        let theta = ThetaEstimate {
            theta: std::array::from_fn(|_| {
                Complex64::new(rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0))
            }),
        };
        let complex_res = complex_residual(&rows, &rhs, &theta);
        let real_res = &system.d * DVector::from_column_slice(&theta.to_real()) - &system.c;

        for t in 0..meas.len() {
            for eq in 0..2 {
                let c = complex_res[2 * t + eq];
                assert!((real_res[4 * t + eq] - c.re).abs() < 1e-12);
                assert!((real_res[4 * t + 2 + eq] - c.im).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn builder_is_measurement_linear() {
        let meas = random_meas(8, 11);
        let k = 1.75;
        let scaled = meas_from(
            meas.v_pq.iter().map(|s| s * k).collect(),
            meas.v_qp.iter().map(|s| s * k).collect(),
            meas.i_pq.iter().map(|s| s * k).collect(),
            meas.i_qp.iter().map(|s| s * k).collect(),
        );
        let base = build_system(&meas, End::From).unwrap();
        let got = build_system(&scaled, End::From).unwrap();
        assert!((got.d - &base.d * k).amax() < 1e-12);
        assert!((got.c - &base.c * k).amax() < 1e-12);
    }

    #[test]
    fn noise_free_campaign_satisfies_forward_model() {
        use crate::grid::{Branch, Bus, ItClassSpec, RqmLocation};
        use crate::quantize::QuantizationConfig;
        use crate::synth::{synthesize_campaign, CampaignSeeds, SynthSpec, TrajectoryProfile};

        let tree = crate::grid::ConnectedTree::new(
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
                params_db: LineParams {
                    r: 0.004,
                    x: 0.05,
                    b: 0.4,
                },
                params_true: None,
            }],
            RqmLocation {
                branch: 0,
                end: End::From,
            },
        )
        .unwrap();
        let spec = SynthSpec {
            n: 24,
            it_class: ItClassSpec::new(0.0, 0.0).unwrap(),
            rqm_class: ItClassSpec::new(0.0, 0.0).unwrap(),
            noise_sigma: 0.0,
            quantization: QuantizationConfig::default(),
            profile: TrajectoryProfile::default(),
        };
        let campaign = synthesize_campaign(&tree, &spec, CampaignSeeds::from_base(21)).unwrap();
        let key = BranchKey { from: 1, to: 2 };
        let meas = &campaign.measurements[&key];
        let params = campaign.truth.params[&key];

        let one = Complex64::new(1.0, 0.0);
        let theta_star = ThetaEstimate::from_line(&params, &[one, one, one]);
        let (rows, rhs) = complex_rows(meas, End::From).unwrap();
        for res in complex_residual(&rows, &rhs, &theta_star) {
            assert!(res.norm() < 1e-12, "forward-model residual {res}");
        }
        // and in the real expansion
        let system = build_system(meas, End::From).unwrap();
        let real_res =
            &system.d * DVector::from_column_slice(&theta_star.to_real()) - &system.c;
        assert!(real_res.amax() < 1e-12);
    }
}
