//! Nonparametric bootstrap: resample records with replacement, refit, and
//! form basic intervals `[F̂(t) − Q*(hi), F̂(t) − Q*(lo)]` from the quantiles
//! of `F̂*(t) − F̂(t)`.

use log::{debug, warn};
use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::inference::{ConfidenceLevel, IntervalRow, IntervalTable};
use crate::model::{Dataset, DayCdf, Grid};
use crate::rng::stream_rng;
use crate::scalar::Real;
use crate::solver::{fit_npmle, SolverConfig};

/// Largest tolerated fraction of failed replicates.
pub const MAX_FAILURE_FRACTION: f64 = 0.10;

#[derive(Debug, Clone, PartialEq)]
pub struct BootstrapConfig {
    pub b: usize,
    pub seed: u64,
    pub points: Vec<i64>,
    pub level: ConfidenceLevel,
}

impl BootstrapConfig {
    pub fn new(b: usize, seed: u64, points: Vec<i64>) -> Result<Self> {
        let cfg = BootstrapConfig {
            b,
            seed,
            points,
            level: ConfidenceLevel::P95,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.b < 2 {
            return Err(Error::InvalidConfig(format!(
                "bootstrap needs b >= 2, got {}",
                self.b
            )));
        }
        Ok(())
    }
}

/// Replicate `index` under `seed`: `n` records drawn uniformly with replacement.
pub fn resample(data: &Dataset, seed: u64, index: u64) -> Dataset {
    let n = data.len();
    let mut rng = stream_rng(seed, index);
    let idx: Vec<usize> = (0..n).map(|_| rng.gen_range(0..n)).collect();
    data.select(&idx)
}

/// Type-7 quantile of sorted values.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of empty sample");
    let h = (sorted.len() - 1) as f64 * q.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Replicate day-CDF values at `points`, in replicate order; `None` marks a failed fit.
pub fn bootstrap_replicates<T: Real>(
    data: &Dataset,
    grid: &Grid,
    solver: &SolverConfig<T>,
    b: usize,
    seed: u64,
    points: &[i64],
) -> Vec<Option<Vec<f64>>> {
    let mode = data.mode();
    (0..b)
        .into_par_iter()
        .map(|r| {
            let sample = resample(data, seed, r as u64);
            match fit_npmle(&sample, grid, solver) {
                Ok(fit) => {
                    let cdf = DayCdf::for_mode(&fit.mass, grid, mode);
                    Some(
                        points
                            .iter()
                            .map(|&t| cdf.at(t).to_f64().unwrap_or(f64::NAN))
                            .collect(),
                    )
                }
                Err(e) => {
                    debug!("bootstrap replicate {r} failed: {e}");
                    None
                }
            }
        })
        .collect()
}

/// Basic bootstrap intervals around the fit `estimate`.
///
/// The variance column holds `n` times the replicate variance of `F̂*(t)`,
/// on the same scale as the Wald variances.
pub fn bootstrap_ci<T: Real>(
    data: &Dataset,
    grid: &Grid,
    estimate: &DayCdf<T>,
    solver: &SolverConfig<T>,
    config: &BootstrapConfig,
) -> Result<IntervalTable> {
    config.validate()?;
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let reps = bootstrap_replicates(data, grid, solver, config.b, config.seed, &config.points);
    let ok: Vec<&Vec<f64>> = reps.iter().flatten().collect();
    let failed = config.b - ok.len();
    if failed as f64 > MAX_FAILURE_FRACTION * config.b as f64 || ok.len() < 2 {
        return Err(Error::TooManyFailures {
            failed,
            total: config.b,
        });
    }
    if failed > 0 {
        warn!(
            "{failed} of {} bootstrap replicates failed and were dropped",
            config.b
        );
    }
    let (q_lo, q_hi) = config.level.tails();
    let n = data.len() as f64;
    let rows = config
        .points
        .iter()
        .enumerate()
        .map(|(k, &t)| {
            let fhat = estimate.at(t).to_f64().unwrap_or(f64::NAN);
            let mut diffs: Vec<f64> = ok.iter().map(|v| v[k] - fhat).collect();
            diffs.sort_by(f64::total_cmp);
            let raw_lower = fhat - quantile_sorted(&diffs, q_hi);
            let raw_upper = fhat - quantile_sorted(&diffs, q_lo);
            let mean = diffs.iter().sum::<f64>() / diffs.len() as f64;
            let var =
                diffs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (diffs.len() - 1) as f64;
            IntervalRow {
                day: t,
                estimate: fhat,
                lower: raw_lower.clamp(0.0, 1.0),
                upper: raw_upper.clamp(0.0, 1.0),
                raw_lower,
                raw_upper,
                variance: n * var,
            }
        })
        .collect();
    Ok(IntervalTable {
        method: "bootstrap".into(),
        rows,
        failed_replicates: failed,
    })
}
