//! Total least squares.
//!
//! Noise enters both the data matrix and the right-hand side, so the system
//! is solved in the errors-in-variables sense: take the SVD of the augmented
//! matrix `[D | c]` and read the solution off the right singular vector of
//! the smallest singular value.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::regression::RegressionSystem;

/// Degeneracy thresholds. A tie between the two smallest singular values
/// means the data cannot distinguish two perturbation directions; the caller
/// should extend the measurement window rather than accept an arbitrary pick.
const TIE_TOL: f64 = 1e-12;
const NULL_TOL: f64 = 1e-12;
const RANK_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct TlsSolution {
    pub theta_real: [f64; 8],
    pub smallest_singular_value: f64,
    /// Ratio of the two smallest singular values of `[D | c]`; values near 1
    /// signal poor excitation.
    pub condition_indicator: f64,
}

/// Solve the branch regression system.
pub fn tls_solve(system: &RegressionSystem) -> Result<TlsSolution> {
    let sol = tls_solve_matrix(&system.d, &system.c)?;
    let mut theta_real = [0.0; 8];
    theta_real.copy_from_slice(sol.theta.as_slice());
    Ok(TlsSolution {
        theta_real,
        smallest_singular_value: sol.smallest_singular_value,
        condition_indicator: sol.condition_indicator,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct TlsVecSolution {
    pub theta: DVector<f64>,
    pub smallest_singular_value: f64,
    pub condition_indicator: f64,
}

/// TLS for a general overdetermined pair `(d, c)`.
pub fn tls_solve_matrix(d: &DMatrix<f64>, c: &DVector<f64>) -> Result<TlsVecSolution> {
    let rows = d.nrows();
    let cols = d.ncols();
    if c.len() != rows {
        return Err(Error::LengthMismatch(format!(
            "matrix has {rows} rows but rhs has {} entries",
            c.len()
        )));
    }
    if rows < cols + 1 {
        return Err(Error::TooFewSamples {
            got: rows,
            min: cols + 1,
        });
    }

    let mut aug = DMatrix::zeros(rows, cols + 1);
    aug.view_mut((0, 0), (rows, cols)).copy_from(d);
    aug.view_mut((0, cols), (rows, 1)).copy_from(c);

    let svd = aug.svd(false, true);
    let v_t = svd.v_t.as_ref().expect("requested right singular vectors");
    let sigma = &svd.singular_values;

    // nalgebra returns singular values sorted in decreasing order
    let smallest = sigma[cols];
    let next = sigma[cols - 1];
    let largest = sigma[0];

    if next < RANK_TOL * largest.max(1.0) {
        return Err(Error::RankDeficient {
            sigma_max: largest,
            sigma_min: next,
        });
    }
    if next - smallest <= TIE_TOL * largest.max(1.0) {
        return Err(Error::DegenerateTls {
            smallest,
            next,
        });
    }

    let v = v_t.row(cols);
    let pivot = v[cols];
    if pivot.abs() < NULL_TOL {
        return Err(Error::NonGenericTls(pivot.abs()));
    }

    let theta = DVector::from_iterator(cols, (0..cols).map(|k| -v[k] / pivot));
    Ok(TlsVecSolution {
        theta,
        smallest_singular_value: smallest,
        condition_indicator: next / smallest.max(f64::MIN_POSITIVE),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{Branch, Bus, ConnectedTree, End, ItClassSpec, LineParams, RqmLocation};
    use crate::quantize::QuantizationConfig;
    use crate::regression::{build_system, ThetaEstimate};
    use crate::synth::{synthesize_campaign, CampaignSeeds, SynthSpec, TrajectoryProfile};
    use nalgebra::DMatrix;
    use num_complex::Complex64;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn toy_consistent_system() {
        let d = DMatrix::from_column_slice(2, 1, &[1.0, 1.0]);
        let c = DVector::from_column_slice(&[1.0, 1.0]);
        let sol = tls_solve_matrix(&d, &c).unwrap();
        assert!((sol.theta[0] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn underdetermined_shape_is_rejected() {
        let d = DMatrix::from_column_slice(2, 2, &[1.0, 0.0, 0.0, 1.0]);
        let c = DVector::from_column_slice(&[1.0, 1.0]);
        assert!(matches!(
            tls_solve_matrix(&d, &c),
            Err(Error::TooFewSamples { .. })
        ));
    }

    #[test]
    fn rank_deficient_data_is_reported() {
        // identical columns: [D | c] has two vanishing singular values
        let d = DMatrix::from_fn(6, 2, |i, _| i as f64 + 1.0);
        let c = DVector::from_fn(6, |i, _| i as f64 + 1.0);
        assert!(matches!(
            tls_solve_matrix(&d, &c),
            Err(Error::RankDeficient { .. })
        ));
    }

    fn noise_free_system() -> (RegressionSystem, ThetaEstimate) {
        let tree = ConnectedTree::new(
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
                    r: 0.003,
                    x: 0.04,
                    b: 0.45,
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
            n: 60,
            it_class: ItClassSpec::new(0.0, 0.0).unwrap(),
            rqm_class: ItClassSpec::new(0.0, 0.0).unwrap(),
            noise_sigma: 0.0,
            quantization: QuantizationConfig::default(),
            profile: TrajectoryProfile::default(),
        };
        let campaign = synthesize_campaign(&tree, &spec, CampaignSeeds::from_base(2)).unwrap();
        let key = crate::grid::BranchKey { from: 1, to: 2 };
        let system = build_system(&campaign.measurements[&key], End::From).unwrap();
        let one = Complex64::new(1.0, 0.0);
        let theta_star = ThetaEstimate::from_line(&campaign.truth.params[&key], &[one, one, one]);
        (system, theta_star)
    }

    #[test]
    fn exact_data_recovers_exact_parameters() {
        let (system, theta_star) = noise_free_system();
        let sol = tls_solve(&system).unwrap();
        let star = theta_star.to_real();
        for (k, expected) in star.iter().enumerate() {
            let scale = expected.abs().max(1.0);
            assert!(
                (sol.theta_real[k] - expected).abs() / scale < 1e-9,
                "component {k}: {} vs {expected}",
                sol.theta_real[k]
            );
        }
    }

    #[test]
    fn row_group_permutation_leaves_solution_unchanged() {
        let (system, _) = noise_free_system();
        let sol = tls_solve(&system).unwrap();

        // move the last instant's row group to the front
        let rows = system.d.nrows();
        let mut order: Vec<usize> = (rows - 4..rows).collect();
        order.extend(0..rows - 4);
        let d = DMatrix::from_fn(rows, 8, |i, j| system.d[(order[i], j)]);
        let c = DVector::from_fn(rows, |i, _| system.c[order[i]]);
        let permuted = tls_solve_matrix(&d, &c).unwrap();
        for k in 0..8 {
            assert!((permuted.theta[k] - sol.theta_real[k]).abs() < 1e-10);
        }
    }

    #[test]
    fn tls_residual_no_larger_than_ols_residual() {
        // sigma_min([D|c]) is the Frobenius norm of the smallest admissible
        // perturbation; [0 | r_ols] is admissible, so sigma_min <= |r_ols|.
        let mut rng = ChaCha8Rng::seed_from_u64(44);
        for _ in 0..20 {
            let d = DMatrix::from_fn(40, 8, |_, _| rng.random_range(-1.0..1.0));
            let c = DVector::from_fn(40, |_, _| rng.random_range(-1.0..1.0));
            let sol = tls_solve_matrix(&d, &c).unwrap();
            let ols = d.clone().svd(true, true).solve(&c, 1e-14).unwrap();
            let r_ols = (&d * ols - &c).norm();
            assert!(
                sol.smallest_singular_value <= r_ols + 1e-12,
                "{} > {}",
                sol.smallest_singular_value,
                r_ols
            );
        }
    }
}
