//! Line-parameter bin selection.
//!
//! Database values anchor a grid of candidate parameter triplets
//! `r(m) = r†(1+δ_r·m)`, likewise for x and b. Each candidate maps to the
//! complex voltage-transfer factor `W(m) = 1 + (r+jx)·(jb)` of the π-section,
//! and the TLS-estimated W selects the nearest bin. Distinct bins have
//! distinct W whenever r†, x†, b† are nonzero, which is what makes the
//! selection well-posed.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::LineParams;

/// Grid of bounded parameter variations around the database values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct QuantizationConfig {
    pub delta_r: f64,
    pub delta_x: f64,
    pub delta_b: f64,
    pub m_min: i32,
    pub m_max: i32,
}

impl Default for QuantizationConfig {
    fn default() -> Self {
        Self {
            delta_r: 0.01,
            delta_x: 0.01,
            delta_b: 0.01,
            m_min: -30,
            m_max: 30,
        }
    }
}

impl QuantizationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.m_min > self.m_max {
            return Err(Error::Config(format!(
                "empty bin range [{}, {}]",
                self.m_min, self.m_max
            )));
        }
        let m_abs = self.m_min.abs().max(self.m_max.abs()) as f64;
        for (label, delta) in [
            ("delta_r", self.delta_r),
            ("delta_x", self.delta_x),
            ("delta_b", self.delta_b),
        ] {
            if !(delta.is_finite() && delta >= 0.0) {
                return Err(Error::Config(format!("{label} must be >= 0, got {delta}")));
            }
            if delta * m_abs > 0.3 + 1e-12 {
                return Err(Error::Config(format!(
                    "{label} = {delta} with |m| up to {m_abs} exceeds the ±30% variation bound"
                )));
            }
        }
        Ok(())
    }

    pub fn bin_count(&self) -> usize {
        (self.m_max - self.m_min + 1) as usize
    }

    /// Bin indices in tie-break priority order: smaller |m| first, then
    /// smaller m.
    pub fn bins_by_preference(&self) -> Vec<i32> {
        let mut bins: Vec<i32> = (self.m_min..=self.m_max).collect();
        bins.sort_by_key(|&m| (m.abs(), m));
        bins
    }
}

/// Parameters of bin `m`: each component scaled by `(1 + δ·m)`.
pub fn params_at(db: &LineParams, cfg: &QuantizationConfig, m: i32) -> LineParams {
    let f = m as f64;
    LineParams {
        r: db.r * (1.0 + cfg.delta_r * f),
        x: db.x * (1.0 + cfg.delta_x * f),
        b: db.b * (1.0 + cfg.delta_b * f),
    }
}

/// Open-circuit voltage-transfer factor of the π-section:
/// `W = 1 + (r + jx)·(jb) = (1 − x·b) + j·(r·b)`.
pub fn voltage_transfer_factor(params: &LineParams) -> Complex64 {
    Complex64::new(1.0 - params.x * params.b, params.r * params.b)
}

/// TLS-derived estimate of the voltage-transfer factor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WEstimate {
    pub value: Complex64,
}

/// Square root of the first regression parameter, taking the branch with
/// positive real part (the one near 1 + j0 for physical lines).
pub fn principal_sqrt(theta1: Complex64) -> Result<WEstimate> {
    let root = theta1.sqrt();
    if root.re.abs() < 1e-6 {
        return Err(Error::AmbiguousRoot);
    }
    let value = if root.re > 0.0 { root } else { -root };
    Ok(WEstimate { value })
}

/// Outcome of nearest-bin selection.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BinSelection {
    pub params: LineParams,
    pub m_star: i32,
    /// Squared distance |Ŵ − W(m*)|².
    pub distance_sq: f64,
    /// Set when Ŵ landed at a range-boundary bin by more than one inter-bin
    /// spacing, i.e. outside the grid's reach.
    pub extrapolated: bool,
}

/// Select the bin whose W is closest to `w_hat` in squared modulus.
/// Ties break toward smaller |m|, then smaller m.
pub fn quantize(
    w_hat: &WEstimate,
    params_db: &LineParams,
    cfg: &QuantizationConfig,
) -> BinSelection {
    let mut best_m = 0;
    let mut best_d = f64::INFINITY;
    for m in cfg.bins_by_preference() {
        let w = voltage_transfer_factor(&params_at(params_db, cfg, m));
        let d = (w_hat.value - w).norm_sqr();
        if d < best_d {
            best_d = d;
            best_m = m;
        }
    }

    let extrapolated = if best_m == cfg.m_min || best_m == cfg.m_max {
        let inward = if best_m == cfg.m_min { best_m + 1 } else { best_m - 1 };
        if inward >= cfg.m_min && inward <= cfg.m_max && inward != best_m {
            let w_star = voltage_transfer_factor(&params_at(params_db, cfg, best_m));
            let w_in = voltage_transfer_factor(&params_at(params_db, cfg, inward));
            best_d.sqrt() > (w_star - w_in).norm()
        } else {
            false
        }
    } else {
        false
    };

    BinSelection {
        params: params_at(params_db, cfg, best_m),
        m_star: best_m,
        distance_sq: best_d,
        extrapolated,
    }
}

/// Result of the pairwise-distinctness scan over the bin table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InjectivityReport {
    pub injective: bool,
    /// Minimum |W(m1) − W(m2)| over all bin pairs; sizes the noise level the
    /// bin selection can tolerate.
    pub min_pairwise_distance: f64,
}

/// Check that all bins map to pairwise-distinct W values.
pub fn injectivity_check(params_db: &LineParams, cfg: &QuantizationConfig) -> InjectivityReport {
    let ws: Vec<Complex64> = (cfg.m_min..=cfg.m_max)
        .map(|m| voltage_transfer_factor(&params_at(params_db, cfg, m)))
        .collect();
    let mut min_d = f64::INFINITY;
    for i in 0..ws.len() {
        for j in (i + 1)..ws.len() {
            min_d = min_d.min((ws[i] - ws[j]).norm());
        }
    }
    if ws.len() < 2 {
        min_d = 0.0;
    }
    InjectivityReport {
        injective: min_d > 0.0,
        min_pairwise_distance: min_d,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn db() -> LineParams {
        LineParams {
            r: 0.00238,
            x: 0.0315,
            b: 0.3503,
        }
    }

    #[test]
    fn default_grid_has_61_bins_within_the_variation_bound() {
        let cfg = QuantizationConfig::default();
        cfg.validate().unwrap();
        assert_eq!(cfg.bin_count(), 61);
        // delta * m stays within +/-30% at the extremes
        assert!((cfg.delta_r * cfg.m_min as f64).abs() <= 0.3 + 1e-12);
        assert!((cfg.delta_b * cfg.m_max as f64).abs() <= 0.3 + 1e-12);
        // widening the step past the bound must be rejected
        let too_wide = QuantizationConfig {
            delta_x: 0.011,
            ..cfg
        };
        assert!(too_wide.validate().is_err());
    }

    #[test]
    fn transfer_factor_without_shunt_is_one() {
        let p = LineParams {
            r: 0.01,
            x: 0.1,
            b: 0.0,
        };
        assert_eq!(voltage_transfer_factor(&p), Complex64::new(1.0, 0.0));
    }

    #[test]
    fn transfer_factor_direct_arithmetic() {
        let w = voltage_transfer_factor(&db());
        assert_relative_eq!(w.re, 1.0 - 0.0315 * 0.3503, max_relative = 1e-15);
        assert_relative_eq!(w.im, 0.00238 * 0.3503, max_relative = 1e-15);
        // rounded reference values
        assert!((w.re - 0.988966).abs() < 5e-7);
        assert!((w.im - 0.000834).abs() < 5e-7);
    }

    #[test]
    fn doubling_r_doubles_imaginary_part_only() {
        let p = db();
        let p2 = LineParams { r: 2.0 * p.r, ..p };
        let w = voltage_transfer_factor(&p);
        let w2 = voltage_transfer_factor(&p2);
        assert_eq!(w.re, w2.re);
        assert_relative_eq!(w2.im, 2.0 * w.im, max_relative = 1e-15);
    }

    #[test]
    fn sqrt_of_one_is_one() {
        let w = principal_sqrt(Complex64::new(1.0, 0.0)).unwrap();
        assert_eq!(w.value, Complex64::new(1.0, 0.0));
    }

    #[test]
    fn sqrt_selects_positive_real_branch() {
        let root = Complex64::new(0.99, 0.001);
        let w = principal_sqrt(root * root).unwrap();
        assert!((w.value - root).norm() < 1e-14);
        let w_neg = principal_sqrt((-root) * (-root)).unwrap();
        assert!((w_neg.value - root).norm() < 1e-14);
    }

    #[test]
    fn sqrt_rejects_near_imaginary_values() {
        assert!(matches!(
            principal_sqrt(Complex64::new(-1.0, 0.0)),
            Err(Error::AmbiguousRoot)
        ));
        assert!(matches!(
            principal_sqrt(Complex64::new(0.0, 0.0)),
            Err(Error::AmbiguousRoot)
        ));
    }

    #[test]
    fn exact_grid_point_recovers_bin() {
        let cfg = QuantizationConfig::default();
        let w = WEstimate {
            value: voltage_transfer_factor(&params_at(&db(), &cfg, 7)),
        };
        let sel = quantize(&w, &db(), &cfg);
        assert_eq!(sel.m_star, 7);
        assert!(!sel.extrapolated);
        assert!(sel.distance_sq < 1e-28);
    }

    #[test]
    fn perturbation_below_half_spacing_keeps_bin() {
        let cfg = QuantizationConfig::default();
        let report = injectivity_check(&db(), &cfg);
        let half = report.min_pairwise_distance / 2.0;
        for m in [-30, -3, 0, 12, 30] {
            let w0 = voltage_transfer_factor(&params_at(&db(), &cfg, m));
            for angle in [0.0, 1.2, 2.9, 4.4] {
                let w = WEstimate {
                    value: w0 + Complex64::from_polar(0.9 * half, angle),
                };
                assert_eq!(quantize(&w, &db(), &cfg).m_star, m);
            }
        }
    }

    #[test]
    fn zero_shunt_collapses_to_preferred_bin() {
        let cfg = QuantizationConfig::default();
        let p = LineParams {
            r: 0.01,
            x: 0.1,
            b: 0.0,
        };
        let w = WEstimate {
            value: Complex64::new(1.0, 0.0),
        };
        let sel = quantize(&w, &p, &cfg);
        assert_eq!(sel.m_star, 0);
        let report = injectivity_check(&p, &cfg);
        assert!(!report.injective);
        assert_eq!(report.min_pairwise_distance, 0.0);
    }

    #[test]
    fn quantize_after_transfer_factor_is_identity_on_the_grid() {
        let cfg = QuantizationConfig::default();
        for m in cfg.m_min..=cfg.m_max {
            let w = WEstimate {
                value: voltage_transfer_factor(&params_at(&db(), &cfg, m)),
            };
            assert_eq!(quantize(&w, &db(), &cfg).m_star, m);
        }
    }

    #[test]
    fn error_shrinks_as_w_approaches_the_true_bin() {
        let cfg = QuantizationConfig::default();
        let m_true = 9;
        let w_true = voltage_transfer_factor(&params_at(&db(), &cfg, m_true));
        let w_far = voltage_transfer_factor(&params_at(&db(), &cfg, -20));
        let mut last = i32::MAX;
        for k in 0..=10 {
            let f = k as f64 / 10.0;
            let w = WEstimate {
                value: w_far + (w_true - w_far) * f,
            };
            let err = (quantize(&w, &db(), &cfg).m_star - m_true).abs();
            assert!(err <= last, "bin error not monotone at step {k}");
            last = err;
        }
        assert_eq!(last, 0);
    }

    proptest! {
        #[test]
        fn random_positive_triplets_are_injective(
            r in 1e-5f64..0.05,
            x in 1e-4f64..0.3,
            b in 1e-3f64..2.0,
        ) {
            let cfg = QuantizationConfig::default();
            let p = LineParams { r, x, b };
            let report = injectivity_check(&p, &cfg);
            prop_assert!(report.injective);
            prop_assert!(report.min_pairwise_distance > 0.0);
        }
    }
}
