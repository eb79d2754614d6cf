//! Synthetic measurement campaigns.
//!
//! Ground-truth bus voltage trajectories are generated over the tree, branch
//! currents follow from the π-model, and the measured series are obtained by
//! applying each instrument transformer's ratio error plus additive Gaussian
//! PMU noise in Cartesian coordinates.

use std::collections::BTreeMap;

use num_complex::Complex64;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{
    sample_ratio_error, BranchKey, ConnectedTree, End, ItClassSpec, LineParams, RatioError,
};
use crate::quantize::{params_at, QuantizationConfig};
use crate::seed::{mix, tag};

pub type Phasor = Complex64;

/// Minimum samples per campaign: two complex equations per instant against
/// four unknown complex parameters need at least this much stacking.
pub const MIN_SAMPLES: usize = 8;

/// True voltage series of one bus.
#[derive(Debug, Clone, PartialEq)]
pub struct BusTrajectory {
    pub bus: usize,
    pub samples: Vec<Phasor>,
}

/// Measured (post-ratio-error, post-noise) phasor series of one branch.
/// `v_pq`/`i_pq` are taken at the from end, `v_qp`/`i_qp` at the to end.
#[derive(Debug, Clone, PartialEq)]
pub struct BranchMeasurements {
    pub key: BranchKey,
    pub v_pq: Vec<Phasor>,
    pub v_qp: Vec<Phasor>,
    pub i_pq: Vec<Phasor>,
    pub i_qp: Vec<Phasor>,
}

impl BranchMeasurements {
    pub fn len(&self) -> usize {
        self.v_pq.len()
    }

    pub fn is_empty(&self) -> bool {
        self.v_pq.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.v_pq.len();
        if self.v_qp.len() != n || self.i_pq.len() != n || self.i_qp.len() != n {
            return Err(Error::LengthMismatch(format!(
                "branch {}: series lengths {} / {} / {} / {}",
                self.key,
                n,
                self.v_qp.len(),
                self.i_pq.len(),
                self.i_qp.len()
            )));
        }
        if n < MIN_SAMPLES {
            return Err(Error::TooFewSamples {
                got: n,
                min: MIN_SAMPLES,
            });
        }
        Ok(())
    }

    /// Voltage series observed at `bus`, if this branch touches it.
    pub fn voltage_at_bus(&self, bus: usize) -> Option<&[Phasor]> {
        if self.key.from == bus {
            Some(&self.v_pq)
        } else if self.key.to == bus {
            Some(&self.v_qp)
        } else {
            None
        }
    }
}

/// Additive PMU noise: zero-mean Gaussian on real and imaginary parts with
/// standard deviation `sigma` times the nominal magnitude of the series.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseConfig {
    pub sigma: f64,
    pub seed: u64,
}

impl NoiseConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma.is_finite() && self.sigma >= 0.0) {
            return Err(Error::Config(format!("noise sigma must be >= 0, got {}", self.sigma)));
        }
        Ok(())
    }
}

/// Shape of the synthetic operating-point sweep.
///
/// A magnitude ramp plus per-sample jitter, with per-branch angle offsets that
/// swing over the campaign, so successive operating points differ — the
/// excitation the regression needs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrajectoryProfile {
    /// Magnitude ramp endpoints in per-unit.
    pub mag_start: f64,
    pub mag_end: f64,
    /// Amplitude of a slow per-bus magnitude oscillation with random phase
    /// and period; decorrelates bus magnitudes the way independent load
    /// swings do.
    pub mag_oscillation: f64,
    /// Std-dev of per-sample multiplicative magnitude jitter.
    pub mag_jitter: f64,
    /// Per-branch angle offset drawn uniformly from this range (degrees).
    pub angle_offset_min_deg: f64,
    pub angle_offset_max_deg: f64,
    /// Relative amplitude of the slow angle swing over the campaign.
    pub angle_swing: f64,
    /// Std-dev of per-sample angle jitter (degrees).
    pub angle_jitter_deg: f64,
}

impl Default for TrajectoryProfile {
    fn default() -> Self {
        Self {
            mag_start: 0.97,
            mag_end: 1.03,
            mag_oscillation: 0.01,
            mag_jitter: 0.001,
            angle_offset_min_deg: 1.0,
            angle_offset_max_deg: 4.0,
            angle_swing: 0.25,
            angle_jitter_deg: 0.02,
        }
    }
}

/// Two independent standard normal draws keyed by `seed` alone, so noise is a
/// pure function of (stream, sample index).
fn gauss_pair(seed: u64) -> (f64, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a: u64 = rng.random();
    let b: u64 = rng.random();
    // (0, 1] and [0, 1) uniforms from the top 53 bits
    let u1 = 1.0 - (a >> 11) as f64 * (1.0 / 9007199254740992.0);
    let u2 = (b >> 11) as f64 * (1.0 / 9007199254740992.0);
    let radius = (-2.0 * u1.ln()).sqrt();
    let angle = std::f64::consts::TAU * u2;
    (radius * angle.cos(), radius * angle.sin())
}

/// Generate true voltage trajectories for every bus. Deterministic per seed;
/// independent of branch listing order (streams are keyed by bus/branch ids).
pub fn generate_trajectories(
    tree: &ConnectedTree,
    n: usize,
    profile: &TrajectoryProfile,
    seed: u64,
) -> Result<Vec<BusTrajectory>> {
    if n == 0 {
        return Err(Error::TooFewSamples { got: 0, min: 1 });
    }

    // Reference bus: smallest id, so the assignment does not depend on file
    // order or on where the RQM sits.
    let reference = tree.buses().iter().map(|b| b.id).min().unwrap();

    // Per-branch angle structure.
    struct AngleLaw {
        offset_rad: f64,
        cycles: f64,
        phase: f64,
    }
    let mut laws: BTreeMap<usize, AngleLaw> = BTreeMap::new();
    for (idx, branch) in tree.branches().iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(mix(
            seed,
            &[tag("angle-law"), branch.from_bus as u64, branch.to_bus as u64],
        ));
        let offset_deg =
            rng.random_range(profile.angle_offset_min_deg..=profile.angle_offset_max_deg);
        laws.insert(
            idx,
            AngleLaw {
                offset_rad: offset_deg.to_radians(),
                cycles: rng.random_range(1..=3) as f64,
                phase: rng.random_range(0.0..std::f64::consts::TAU),
            },
        );
    }

    // Cumulative base angles by walking the tree away from the reference bus.
    let order = {
        let mut steps = Vec::new();
        let mut visited = std::collections::BTreeSet::new();
        let mut stack = vec![reference];
        visited.insert(reference);
        while let Some(bus) = stack.pop() {
            if let Some(adj) = tree.adjacency(bus) {
                for &(next, branch) in adj {
                    if visited.insert(next) {
                        steps.push((branch, bus, next));
                        stack.push(next);
                    }
                }
            }
        }
        steps
    };

    let ramp = |t: usize| -> f64 {
        if n == 1 {
            1.0
        } else {
            profile.mag_start + (profile.mag_end - profile.mag_start) * t as f64 / (n - 1) as f64
        }
    };

    // Angle of each bus at each instant.
    let mut angles: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
    angles.insert(reference, vec![0.0; n]);
    for (branch, parent, child) in &order {
        let law = &laws[branch];
        let parent_angle = angles[parent].clone();
        let series: Vec<f64> = (0..n)
            .map(|t| {
                let swing = if n == 1 {
                    law.phase.sin()
                } else {
                    (std::f64::consts::TAU * law.cycles * t as f64 / (n - 1) as f64 + law.phase)
                        .sin()
                };
                parent_angle[t] - law.offset_rad * (1.0 + profile.angle_swing * swing)
            })
            .collect();
        angles.insert(*child, series);
    }

    let mut out = Vec::with_capacity(tree.buses().len());
    for bus in tree.buses() {
        let scale_amplitude = 4.0 * profile.mag_jitter;
        let mut rng =
            ChaCha8Rng::seed_from_u64(mix(seed, &[tag("bus-profile"), bus.id as u64]));
        let scale = 1.0 + scale_amplitude * rng.random_range(-1.0..=1.0);
        let osc_cycles = rng.random_range(1..=3) as f64;
        let osc_phase = rng.random_range(0.0..std::f64::consts::TAU);
        let angle_jitter = profile.angle_jitter_deg.to_radians();
        let bus_angles = &angles[&bus.id];
        let samples: Vec<Phasor> = (0..n)
            .map(|t| {
                let (g1, g2) = if profile.mag_jitter > 0.0 || angle_jitter > 0.0 {
                    gauss_pair(mix(seed, &[tag("bus-jitter"), bus.id as u64, t as u64]))
                } else {
                    (0.0, 0.0)
                };
                let osc = if n == 1 {
                    0.0
                } else {
                    profile.mag_oscillation
                        * (std::f64::consts::TAU * osc_cycles * t as f64 / (n - 1) as f64
                            + osc_phase)
                            .sin()
                };
                let mag = (ramp(t) * scale * (1.0 + osc) * (1.0 + profile.mag_jitter * g1))
                    .clamp(0.9, 1.1);
                let ang = bus_angles[t] + angle_jitter * g2;
                Complex64::from_polar(mag, ang)
            })
            .collect();
        out.push(BusTrajectory {
            bus: bus.id,
            samples,
        });
    }
    Ok(out)
}

/// π-model branch currents from the true end voltages:
/// `i_pq = jb·v_p + (v_p − v_q)·y` and `i_qp = jb·v_q − (v_p − v_q)·y`.
pub fn true_branch_currents(
    v_p: Phasor,
    v_q: Phasor,
    params: &LineParams,
) -> Result<(Phasor, Phasor)> {
    if params.r == 0.0 && params.x == 0.0 {
        return Err(Error::SingularLine);
    }
    let y = params.series_admittance();
    let shunt = params.shunt_admittance();
    let drop = (v_p - v_q) * y;
    Ok((shunt * v_p + drop, shunt * v_q - drop))
}

/// Measurement channel of one instrument: multiply by the ratio error, then
/// add Gaussian noise scaled to the series' nominal magnitude (mean |s|).
pub fn corrupt(series: &[Phasor], alpha: RatioError, noise: &NoiseConfig) -> Vec<Phasor> {
    let nominal = nominal_magnitude(series);
    corrupt_stateless(series, alpha, noise.sigma * nominal, noise.seed, 0)
}

/// Mean modulus of a series; the reference base for relative noise.
pub fn nominal_magnitude(series: &[Phasor]) -> f64 {
    if series.is_empty() {
        return 0.0;
    }
    series.iter().map(|s| s.norm()).sum::<f64>() / series.len() as f64
}

/// Stateless core of [`corrupt`]: noise for sample `offset + i` depends only
/// on `(seed, offset + i)`, so corrupting a concatenation equals
/// concatenating corruptions.
pub fn corrupt_stateless(
    series: &[Phasor],
    alpha: RatioError,
    sigma_abs: f64,
    seed: u64,
    offset: usize,
) -> Vec<Phasor> {
    series
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let mut m = alpha.value * s;
            if sigma_abs > 0.0 {
                let (g_re, g_im) = gauss_pair(mix(seed, &[(offset + i) as u64]));
                m += Complex64::new(sigma_abs * g_re, sigma_abs * g_im);
            }
            m
        })
        .collect()
}

/// Which instrument of a branch end.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Instrument {
    Vt,
    Ct,
}

impl std::fmt::Display for Instrument {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Instrument::Vt => write!(f, "vt"),
            Instrument::Ct => write!(f, "ct"),
        }
    }
}

/// Ground truth retained by the synthesizer for scoring and self-checks.
#[derive(Debug, Clone)]
pub struct CampaignTruth {
    pub ratio_errors: BTreeMap<(BranchKey, End, Instrument), RatioError>,
    pub params: BTreeMap<BranchKey, LineParams>,
    /// Bin index of the true parameters when they were drawn on the grid.
    pub bins: BTreeMap<BranchKey, i32>,
    pub trajectories: BTreeMap<usize, Vec<Phasor>>,
    /// Pre-corruption branch currents (i_pq, i_qp).
    pub currents: BTreeMap<BranchKey, (Vec<Phasor>, Vec<Phasor>)>,
}

/// One synthetic measurement campaign: measured series plus ground truth.
#[derive(Debug, Clone)]
pub struct Campaign {
    pub measurements: BTreeMap<BranchKey, BranchMeasurements>,
    pub truth: CampaignTruth,
}

/// Everything that defines a campaign's statistics except the seeds.
#[derive(Debug, Clone)]
pub struct SynthSpec {
    pub n: usize,
    pub it_class: ItClassSpec,
    pub rqm_class: ItClassSpec,
    pub noise_sigma: f64,
    pub quantization: QuantizationConfig,
    pub profile: TrajectoryProfile,
}

/// Seed split for one campaign. Ratio errors and true parameters model a
/// fixed physical state; trajectories and noise vary per data window.
#[derive(Debug, Clone, Copy)]
pub struct CampaignSeeds {
    pub params: u64,
    pub ratio_errors: u64,
    pub trajectory: u64,
    pub noise: u64,
}

impl CampaignSeeds {
    pub fn from_base(seed: u64) -> Self {
        Self {
            params: mix(seed, &[tag("true-params")]),
            ratio_errors: mix(seed, &[tag("ratio-errors")]),
            trajectory: mix(seed, &[tag("trajectory")]),
            noise: mix(seed, &[tag("noise")]),
        }
    }
}

/// Synthesize one campaign over the tree.
///
/// One ratio error per (branch, end, instrument) — four per branch; the RQM
/// end's VT uses the RQM class. Bus-voltage consistency holds by
/// construction: every VT facing the same bus sees the same true trajectory.
pub fn synthesize_campaign(
    tree: &ConnectedTree,
    spec: &SynthSpec,
    seeds: CampaignSeeds,
) -> Result<Campaign> {
    if spec.n < MIN_SAMPLES {
        return Err(Error::TooFewSamples {
            got: spec.n,
            min: MIN_SAMPLES,
        });
    }
    spec.it_class.validate()?;
    spec.rqm_class.validate()?;
    spec.quantization.validate()?;

    let trajectories = generate_trajectories(tree, spec.n, &spec.profile, seeds.trajectory)?;
    let by_bus: BTreeMap<usize, &BusTrajectory> =
        trajectories.iter().map(|t| (t.bus, t)).collect();

    let rqm = tree.rqm();
    let mut measurements = BTreeMap::new();
    let mut truth = CampaignTruth {
        ratio_errors: BTreeMap::new(),
        params: BTreeMap::new(),
        bins: BTreeMap::new(),
        trajectories: trajectories
            .iter()
            .map(|t| (t.bus, t.samples.clone()))
            .collect(),
        currents: BTreeMap::new(),
    };

    for (idx, branch) in tree.branches().iter().enumerate() {
        let key = branch.key();

        // True parameters: explicit ground truth if the tree carries one,
        // otherwise drawn on the quantization grid (fixed per structural seed).
        let (params_true, bin) = match &branch.params_true {
            Some(p) => (*p, None),
            None => {
                let mut rng = ChaCha8Rng::seed_from_u64(mix(
                    seeds.params,
                    &[tag("true-bin"), key.from as u64, key.to as u64],
                ));
                let m = rng.random_range(spec.quantization.m_min..=spec.quantization.m_max);
                (params_at(&branch.params_db, &spec.quantization, m), Some(m))
            }
        };

        let v_p = &by_bus[&branch.from_bus].samples;
        let v_q = &by_bus[&branch.to_bus].samples;
        let mut i_pq = Vec::with_capacity(spec.n);
        let mut i_qp = Vec::with_capacity(spec.n);
        for t in 0..spec.n {
            let (a, b) = true_branch_currents(v_p[t], v_q[t], &params_true)?;
            i_pq.push(a);
            i_qp.push(b);
        }

        let mut alpha = |end: End, kind: Instrument| -> RatioError {
            let class = if idx == rqm.branch && end == rqm.end && kind == Instrument::Vt {
                &spec.rqm_class
            } else {
                &spec.it_class
            };
            let re = sample_ratio_error(
                class,
                mix(
                    seeds.ratio_errors,
                    &[
                        tag("ratio-error"),
                        key.from as u64,
                        key.to as u64,
                        end as u64,
                        kind as u64,
                    ],
                ),
            );
            truth.ratio_errors.insert((key, end, kind), re);
            re
        };

        let a_v_from = alpha(End::From, Instrument::Vt);
        let a_v_to = alpha(End::To, Instrument::Vt);
        let a_i_from = alpha(End::From, Instrument::Ct);
        let a_i_to = alpha(End::To, Instrument::Ct);

        let noise_stream = |end: End, kind: Instrument| -> u64 {
            mix(
                seeds.noise,
                &[
                    tag("pmu-noise"),
                    key.from as u64,
                    key.to as u64,
                    end as u64,
                    kind as u64,
                ],
            )
        };

        let meas = BranchMeasurements {
            key,
            v_pq: corrupt_stateless(
                v_p,
                a_v_from,
                spec.noise_sigma * nominal_magnitude(v_p),
                noise_stream(End::From, Instrument::Vt),
                0,
            ),
            v_qp: corrupt_stateless(
                v_q,
                a_v_to,
                spec.noise_sigma * nominal_magnitude(v_q),
                noise_stream(End::To, Instrument::Vt),
                0,
            ),
            i_pq: corrupt_stateless(
                &i_pq,
                a_i_from,
                spec.noise_sigma * nominal_magnitude(&i_pq),
                noise_stream(End::From, Instrument::Ct),
                0,
            ),
            i_qp: corrupt_stateless(
                &i_qp,
                a_i_to,
                spec.noise_sigma * nominal_magnitude(&i_qp),
                noise_stream(End::To, Instrument::Ct),
                0,
            ),
        };

        truth.params.insert(key, params_true);
        if let Some(m) = bin {
            truth.bins.insert(key, m);
        }
        truth.currents.insert(key, (i_pq, i_qp));
        measurements.insert(key, meas);
    }

    Ok(Campaign {
        measurements,
        truth,
    })
}
