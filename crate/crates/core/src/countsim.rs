//! Seeded Monte Carlo of coincidence counting.
//!
//! Mean coincidences per cell are
//! `pair_rate · T · η_s · η_i · p_joint · drift + accidentals`, with
//! accidentals `R_s · R_i · τ · T` from the uncorrelated singles rates of
//! both arms. Every `(run, theta, projector)` cell draws from its own ChaCha
//! stream keyed by the master seed and the cell index, so results do not
//! depend on thread scheduling.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::io::{self, Write};

use crate::ghost::ResponseCurve;
use crate::{Error, Result};

/// Detection and source parameters. Missing fields take their defaults when
/// deserialized.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CountModel {
    /// Emitted pairs per second.
    pub pair_rate: f64,
    /// Seconds per measurement setting.
    pub integration_time: f64,
    pub eff_signal: f64,
    pub eff_idler: f64,
    /// Coincidence window in seconds.
    pub coincidence_window: f64,
    /// Uncorrelated background counts per second, per arm.
    pub singles_background: f64,
    /// Half-width of the uniform per-run intensity factor `1 ± a`.
    pub drift_amplitude: f64,
}

impl Default for CountModel {
    /// About 1000 coincidences/s at `p_joint = 0.5`, 3 ns window, 1 s per setting.
    fn default() -> Self {
        CountModel {
            pair_rate: 40_000.0,
            integration_time: 1.0,
            eff_signal: 0.25,
            eff_idler: 0.2,
            coincidence_window: 3e-9,
            singles_background: 500.0,
            drift_amplitude: 0.02,
        }
    }
}

impl CountModel {
    /// Ideal detectors, no background, no drift.
    pub fn ideal(pair_rate: f64, integration_time: f64) -> Self {
        CountModel {
            pair_rate,
            integration_time,
            eff_signal: 1.0,
            eff_idler: 1.0,
            coincidence_window: 1e-9,
            singles_background: 0.0,
            drift_amplitude: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let non_neg = [
            ("pair_rate", self.pair_rate),
            ("integration_time", self.integration_time),
            ("singles_background", self.singles_background),
            ("drift_amplitude", self.drift_amplitude),
        ];
        for (name, v) in non_neg {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::InvalidCountModel(format!("{name} must be >= 0")));
            }
        }
        if !(self.coincidence_window > 0.0) {
            return Err(Error::InvalidCountModel(
                "coincidence_window must be > 0".into(),
            ));
        }
        for (name, v) in [
            ("eff_signal", self.eff_signal),
            ("eff_idler", self.eff_idler),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::InvalidCountModel(format!(
                    "{name} must lie in [0, 1]"
                )));
            }
        }
        if self.drift_amplitude >= 1.0 {
            return Err(Error::InvalidCountModel(
                "drift_amplitude must be < 1".into(),
            ));
        }
        Ok(())
    }

    /// Total singles rate of the signal (`idler == false`) or idler arm.
    pub fn singles_rate(&self, idler: bool) -> f64 {
        let eff = if idler {
            self.eff_idler
        } else {
            self.eff_signal
        };
        self.pair_rate * eff + self.singles_background
    }

    /// Rate of detections in one arm whose partner photon is not detected:
    /// background plus pairs that lost the other photon.
    pub fn uncorrelated_rate(&self, idler: bool) -> f64 {
        let (own, other) = if idler {
            (self.eff_idler, self.eff_signal)
        } else {
            (self.eff_signal, self.eff_idler)
        };
        self.pair_rate * own * (1.0 - other) + self.singles_background
    }

    /// Mean accidental coincidences per setting, `R_s · R_i · τ · T` over the
    /// uncorrelated singles rates.
    pub fn accidental_mean(&self) -> f64 {
        self.uncorrelated_rate(false)
            * self.uncorrelated_rate(true)
            * self.coincidence_window
            * self.integration_time
    }

    /// Mean true coincidences per unit joint probability.
    pub fn pair_scale(&self) -> f64 {
        self.pair_rate * self.integration_time * self.eff_signal * self.eff_idler
    }

    /// Mean recorded coincidences for a joint probability and drift factor.
    pub fn expected_counts(&self, p_joint: f64, drift: f64) -> f64 {
        self.pair_scale() * p_joint * drift + self.accidental_mean()
    }
}

fn poisson_draw<R: Rng + ?Sized>(mean: f64, rng: &mut R) -> u64 {
    if !(mean > 0.0) {
        return 0;
    }
    // mean > 0 and finite here, so construction cannot fail
    let dist = Poisson::new(mean).expect("positive finite Poisson mean");
    dist.sample(rng) as u64
}

fn cell_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// One Poisson draw of the coincidence count (no drift).
pub fn simulate_counts(p_joint: f64, model: &CountModel, seed: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    poisson_draw(model.expected_counts(p_joint, 1.0), &mut rng)
}

/// Repeated runs over one response curve.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSet {
    pub label: String,
    pub thetas: Vec<f64>,
    pub n_projectors: usize,
    /// `counts[run][theta_index][projector]`.
    pub counts: Vec<Vec<Vec<u64>>>,
    /// Singles counts per run, `[signal, idler]`.
    pub singles: Vec<[u64; 2]>,
    pub drift_factors: Vec<f64>,
    pub seed: u64,
}

impl RunSet {
    pub fn n_runs(&self) -> usize {
        self.counts.len()
    }
}

/// Simulate `n_runs` repetitions of a full sweep. The curve must hold raw
/// joint probabilities.
pub fn simulate_runs(
    curve: &ResponseCurve,
    model: &CountModel,
    n_runs: usize,
    seed: u64,
) -> Result<RunSet> {
    if n_runs < 2 {
        return Err(Error::TooFewRuns(n_runs));
    }
    model.validate()?;
    let n_theta = curve.points.len();
    let n_proj = curve.dimension();

    // stream 0 drives the per-run drift and singles
    let mut master = cell_rng(seed, 0);
    let a = model.drift_amplitude;
    let drift_factors: Vec<f64> = (0..n_runs)
        .map(|_| {
            if a > 0.0 {
                master.random_range(1.0 - a..=1.0 + a)
            } else {
                1.0
            }
        })
        .collect();
    let singles: Vec<[u64; 2]> = drift_factors
        .iter()
        .map(|&d| {
            let t = model.integration_time;
            [
                poisson_draw(model.singles_rate(false) * t * d, &mut master),
                poisson_draw(model.singles_rate(true) * t * d, &mut master),
            ]
        })
        .collect();

    let cells = n_runs * n_theta * n_proj;
    let flat: Vec<u64> = (0..cells)
        .into_par_iter()
        .map(|idx| {
            let run = idx / (n_theta * n_proj);
            let rest = idx % (n_theta * n_proj);
            let (t, k) = (rest / n_proj, rest % n_proj);
            let p = curve.points[t].raw[k];
            let mut rng = cell_rng(seed, idx as u64 + 1);
            poisson_draw(model.expected_counts(p, drift_factors[run]), &mut rng)
        })
        .collect();

    let counts = flat
        .chunks(n_theta * n_proj)
        .map(|run| run.chunks(n_proj).map(|c| c.to_vec()).collect())
        .collect();

    Ok(RunSet {
        label: curve.label.clone(),
        thetas: curve.thetas(),
        n_projectors: n_proj,
        counts,
        singles,
        drift_factors,
        seed,
    })
}

/// Corrected counts with the same `[run][theta][projector]` layout.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrectedRuns {
    pub values: Vec<Vec<Vec<f64>>>,
}

/// Subtract accidentals, divide by detector efficiencies, clip at zero and,
/// when the model has drift, rescale each run to the mean run total.
pub fn correct_counts(runs: &RunSet, model: &CountModel) -> Result<CorrectedRuns> {
    let eff = model.eff_signal * model.eff_idler;
    if !(eff > 0.0) {
        return Err(Error::ZeroEfficiency);
    }
    let acc = model.accidental_mean();
    let mut values: Vec<Vec<Vec<f64>>> = runs
        .counts
        .iter()
        .map(|run| {
            run.iter()
                .map(|cell| {
                    cell.iter()
                        .map(|&n| ((n as f64 - acc) / eff).max(0.0))
                        .collect()
                })
                .collect()
        })
        .collect();
    if model.drift_amplitude <= 0.0 {
        return Ok(CorrectedRuns { values });
    }
    let totals: Vec<f64> = values
        .iter()
        .map(|run| run.iter().flatten().sum::<f64>())
        .collect();
    let common = totals.iter().sum::<f64>() / totals.len().max(1) as f64;
    for (run, &total) in values.iter_mut().zip(&totals) {
        if total > 0.0 {
            let scale = common / total;
            run.iter_mut().flatten().for_each(|v| *v *= scale);
        }
    }
    Ok(CorrectedRuns { values })
}

/// CSV with columns `run, theta_deg, projector_index, raw, corrected`.
pub fn write_runs_csv<W: Write>(
    runs: &RunSet,
    corrected: &CorrectedRuns,
    mut w: W,
) -> io::Result<()> {
    writeln!(w, "run,theta_deg,projector_index,raw,corrected")?;
    for (r, (raw_run, cor_run)) in runs.counts.iter().zip(&corrected.values).enumerate() {
        for (t, (raw_cell, cor_cell)) in raw_run.iter().zip(cor_run).enumerate() {
            for (k, (raw, cor)) in raw_cell.iter().zip(cor_cell).enumerate() {
                writeln!(w, "{r},{},{k},{raw},{cor}", runs.thetas[t])?;
            }
        }
    }
    Ok(())
}
