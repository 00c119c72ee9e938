//! Observed Fisher information on the support of the MLE, the covariance of
//! the fitted distribution function, and Wald intervals.
//!
//! With support points `i_1 < … < i_ℓ`, the free parameters are the masses at
//! `i_1, …, i_{ℓ−1}` (the last is fixed by the sum constraint). The observed
//! information is
//! `f_jk = n⁻¹ Σ_i (w_i(j) − w_i(m))(w_i(k) − w_i(m)) / (Σ_t p_t w_i(t))²`
//! with `m = i_ℓ`, for indicator weights as well as for the doubly censored
//! kernel. `A F⁻¹ Aᵀ`, `A` lower triangular of ones, is the asymptotic
//! covariance of `√n (F̂(i_1), …, F̂(i_{ℓ−1}))`.

use std::io::Write;

use log::warn;
use rayon::prelude::*;

use crate::bootstrap::resample;
use crate::error::{Error, Result};
use crate::linalg::{pseudo_inverse, spd_invert, SymMatrix};
use crate::model::{Dataset, DayCdf, Grid, MassFunction, Mode};
use crate::scalar::Real;
use crate::solver::{fit_npmle, SolverConfig};
use crate::weights::{build_weight_matrix, WeightMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConfidenceLevel {
    P90,
    P95,
    P99,
}

impl ConfidenceLevel {
    pub fn z(self) -> f64 {
        match self {
            ConfidenceLevel::P90 => 1.645,
            ConfidenceLevel::P95 => 1.96,
            ConfidenceLevel::P99 => 2.576,
        }
    }

    /// Lower and upper tail probabilities for quantile-based intervals.
    pub fn tails(self) -> (f64, f64) {
        match self {
            ConfidenceLevel::P90 => (0.05, 0.95),
            ConfidenceLevel::P95 => (0.025, 0.975),
            ConfidenceLevel::P99 => (0.005, 0.995),
        }
    }

    pub fn from_level(level: f64) -> Result<Self> {
        match level {
            l if (l - 0.90).abs() < 1e-9 => Ok(ConfidenceLevel::P90),
            l if (l - 0.95).abs() < 1e-9 => Ok(ConfidenceLevel::P95),
            l if (l - 0.99).abs() < 1e-9 => Ok(ConfidenceLevel::P99),
            other => Err(Error::InvalidConfig(format!(
                "confidence level {other} not one of 0.90, 0.95, 0.99"
            ))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct FisherResult<T> {
    /// Support of the MLE, `i_1 < … < i_ℓ`.
    pub support: Vec<i64>,
    /// `(ℓ−1) × (ℓ−1)` observed information.
    pub fisher: SymMatrix<T>,
    pub inverse: SymMatrix<T>,
    pub cdf_cov: SymMatrix<T>,
    /// `D_0, D_1, …, D_K` from the step extension of the covariance diagonal,
    /// indexed by atom position.
    pub variances: Vec<T>,
    /// The information matrix was singular and a pseudo-inverse was used.
    pub pseudo_inverse: bool,
}

impl<T: Real> FisherResult<T> {
    /// Variance for the day-averaged estimate of `day` (see [`Mode::day_offset`]).
    pub fn day_variance(&self, day: i64, mode: Mode) -> T {
        let k = day - mode.day_offset();
        if k < 0 || k as usize >= self.variances.len() {
            T::zero()
        } else {
            self.variances[k as usize]
        }
    }

    pub fn day_variances(&self, mode: Mode, last_day: i64) -> Vec<T> {
        (1..=last_day).map(|d| self.day_variance(d, mode)).collect()
    }
}

/// Observed information for masses on `support_days`, with denominators
/// `Σ_t p_t w_i(t)` from the dense vector `dense`.
pub fn observed_fisher_on<T: Real>(
    w: &WeightMatrix<T>,
    grid: &Grid,
    dense: &[T],
    support_days: &[i64],
) -> Result<SymMatrix<T>> {
    let l = support_days.len();
    if l < 2 {
        return Err(Error::DegenerateFit(format!(
            "support of size {l} has no free parameters"
        )));
    }
    let idx: Vec<usize> = support_days
        .iter()
        .map(|&d| {
            grid.index_of(d)
                .ok_or_else(|| Error::DegenerateFit(format!("day {d} off grid")))
        })
        .collect::<Result<_>>()?;
    let last = idx[l - 1];
    let free = l - 1;
    let denoms = w.row_dots(dense);
    let mut acc = vec![T::zero(); free * free];
    let mut diff = vec![T::zero(); free];
    for (i, &d) in denoms.iter().enumerate() {
        if !(d > T::zero()) {
            return Err(Error::DegenerateFit(format!(
                "observation {i} has zero fitted likelihood"
            )));
        }
        let wm = w.get(i, last);
        let mut any = false;
        for (a, &k) in idx[..free].iter().enumerate() {
            diff[a] = w.get(i, k) - wm;
            any |= diff[a] != T::zero();
        }
        if !any {
            continue;
        }
        let inv2 = (d * d).recip();
        for a in 0..free {
            if diff[a] == T::zero() {
                continue;
            }
            let da = diff[a] * inv2;
            for b in a..free {
                acc[a * free + b] = acc[a * free + b] + da * diff[b];
            }
        }
    }
    let n = T::from_count(w.n_obs());
    let mut f = SymMatrix::zeros(free);
    for a in 0..free {
        for b in a..free {
            f.set_sym(a, b, acc[a * free + b] / n);
        }
    }
    Ok(f)
}

/// Observed information of a fit, for either censoring mode.
pub fn observed_fisher<T: Real>(
    data: &Dataset,
    grid: &Grid,
    mass: &MassFunction<T>,
) -> Result<SymMatrix<T>> {
    let w = build_weight_matrix(data, grid)?;
    observed_fisher_on(&w, grid, &mass.to_grid_vector(grid), mass.support())
}

pub fn observed_fisher_singly<T: Real>(
    data: &Dataset,
    grid: &Grid,
    mass: &MassFunction<T>,
) -> Result<SymMatrix<T>> {
    if data.mode() != Mode::Single {
        return Err(Error::InvalidConfig("expected singly censored data".into()));
    }
    observed_fisher(data, grid, mass)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FisherAveraging {
    None,
    /// Mean of the observed matrices over `b` resampled and refitted datasets,
    /// evaluated on the original support.
    Bootstrap {
        b: usize,
        seed: u64,
    },
}

#[derive(Debug, Clone)]
pub struct AveragedFisher<T> {
    pub matrix: SymMatrix<T>,
    pub used: usize,
    pub skipped: usize,
}

/// Observed information for doubly censored data, optionally averaged over
/// bootstrap replicates.
pub fn observed_fisher_doubly<T: Real>(
    data: &Dataset,
    grid: &Grid,
    mass: &MassFunction<T>,
    averaging: FisherAveraging,
    solver: &SolverConfig<T>,
) -> Result<AveragedFisher<T>> {
    if data.mode() != Mode::Double {
        return Err(Error::InvalidConfig("expected doubly censored data".into()));
    }
    match averaging {
        FisherAveraging::None => Ok(AveragedFisher {
            matrix: observed_fisher(data, grid, mass)?,
            used: 1,
            skipped: 0,
        }),
        FisherAveraging::Bootstrap { b, seed } => {
            averaged_fisher(data, grid, mass.support(), b, seed, solver)
        }
    }
}

/// Mean observed information over `b` bootstrap refits, on `support_days`.
pub fn averaged_fisher<T: Real>(
    data: &Dataset,
    grid: &Grid,
    support_days: &[i64],
    b: usize,
    seed: u64,
    solver: &SolverConfig<T>,
) -> Result<AveragedFisher<T>> {
    if b == 0 {
        return Err(Error::InvalidConfig(
            "averaging needs at least one replicate".into(),
        ));
    }
    let mats: Vec<Option<SymMatrix<T>>> = (0..b)
        .into_par_iter()
        .map(|r| {
            let sample = resample(data, seed, r as u64);
            let fit = fit_npmle(&sample, grid, solver).ok()?;
            let w = build_weight_matrix(&sample, grid).ok()?;
            observed_fisher_on(&w, grid, &fit.dense, support_days).ok()
        })
        .collect();
    let free = support_days.len().saturating_sub(1);
    let mut sum = vec![T::zero(); free * free];
    let mut used = 0;
    for m in mats.iter().flatten() {
        for (s, &v) in sum.iter_mut().zip(m.entries()) {
            *s = *s + v;
        }
        used += 1;
    }
    let skipped = b - used;
    if used == 0 {
        return Err(Error::TooManyFailures {
            failed: skipped,
            total: b,
        });
    }
    let scale = T::from_count(used);
    let matrix = SymMatrix::from_row_major(free, sum.into_iter().map(|v| v / scale).collect())?;
    Ok(AveragedFisher {
        matrix,
        used,
        skipped,
    })
}

/// `A M Aᵀ` with `A` lower triangular of ones: `(A M Aᵀ)_ij = Σ_{k≤i, l≤j} M_kl`.
pub fn a_transform<T: Real>(m: &SymMatrix<T>) -> SymMatrix<T> {
    let n = m.order();
    // Row prefix sums, then column prefix sums.
    let mut p = vec![T::zero(); n * n];
    for i in 0..n {
        for j in 0..n {
            let up = if i > 0 { p[(i - 1) * n + j] } else { T::zero() };
            p[i * n + j] = up + m.get(i, j);
        }
    }
    let mut out = SymMatrix::zeros(n);
    for i in 0..n {
        let mut acc = T::zero();
        for j in 0..n {
            acc = acc + p[i * n + j];
            out.set(i, j, acc);
        }
    }
    out
}

/// Covariance `A F⁻¹ Aᵀ` of the fitted distribution function at the first
/// `ℓ − 1` support points. Singular information is an error.
pub fn cdf_covariance<T: Real>(fisher: &SymMatrix<T>) -> Result<SymMatrix<T>> {
    let inv = spd_invert(fisher).map_err(|_| {
        Error::DegenerateFit(
            "observed information is singular; use bootstrap intervals instead".into(),
        )
    })?;
    Ok(a_transform(&inv))
}

/// Step extension of the diagonal: `D_k = 0` before `i_1`, `D_{i_j}` on
/// `[i_j, i_{j+1})`, and `0` from `i_ℓ` on. Returns `D_1, …, D_last_day`.
pub fn extend_variances<T: Real>(diag: &[T], support: &[i64], last_day: i64) -> Vec<T> {
    extend_variances_from(diag, support, 1, last_day)
}

/// [`extend_variances`] over the positions `first..=last`.
pub fn extend_variances_from<T: Real>(
    diag: &[T],
    support: &[i64],
    first: i64,
    last: i64,
) -> Vec<T> {
    let l = support.len();
    (first..=last)
        .map(|k| {
            if l < 2 || k < support[0] || k >= support[l - 1] {
                return T::zero();
            }
            let j = support.partition_point(|&s| s <= k) - 1;
            diag[j]
        })
        .collect()
}

/// Full variance analysis from an information matrix on `support`.
pub fn fisher_result_from_matrix<T: Real>(
    fisher: SymMatrix<T>,
    support: &[i64],
    last_day: i64,
) -> FisherResult<T> {
    let (inverse, pseudo) = match spd_invert(&fisher) {
        Ok(inv) => (inv, false),
        Err(_) => {
            warn!(
                "observed information on support {support:?} is singular; using a pseudo-inverse"
            );
            (
                pseudo_inverse(&fisher, T::lit(1e-12).max(T::epsilon() * T::lit(16.0))),
                true,
            )
        }
    };
    let cdf_cov = a_transform(&inverse);
    let variances = extend_variances_from(&cdf_cov.diag(), support, 0, last_day);
    FisherResult {
        support: support.to_vec(),
        fisher,
        inverse,
        cdf_cov,
        variances,
        pseudo_inverse: pseudo,
    }
}

/// Fisher analysis of a fit; a one-point support has zero variance everywhere.
pub fn analyze_fit<T: Real>(
    data: &Dataset,
    grid: &Grid,
    mass: &MassFunction<T>,
) -> Result<FisherResult<T>> {
    let support = mass.support();
    if support.len() < 2 {
        let empty = SymMatrix::zeros(0);
        return Ok(FisherResult {
            support: support.to_vec(),
            fisher: empty.clone(),
            inverse: empty.clone(),
            cdf_cov: empty,
            variances: vec![T::zero(); grid.last() as usize + 1],
            pseudo_inverse: false,
        });
    }
    let f = observed_fisher(data, grid, mass)?;
    Ok(fisher_result_from_matrix(f, support, grid.last()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct IntervalRow {
    pub day: i64,
    pub estimate: f64,
    pub lower: f64,
    pub upper: f64,
    /// Bounds before clipping to `[0, 1]`.
    pub raw_lower: f64,
    pub raw_upper: f64,
    pub variance: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IntervalTable {
    pub method: String,
    pub rows: Vec<IntervalRow>,
    /// Replicates dropped because their fit failed.
    pub failed_replicates: usize,
}

impl IntervalTable {
    pub const HEADER: [&'static str; 6] =
        ["day", "estimate", "lower", "upper", "method", "variance"];

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(out);
        wtr.write_record(Self::HEADER)?;
        for r in &self.rows {
            wtr.write_record([
                r.day.to_string(),
                format!("{:.10}", r.estimate),
                format!("{:.10}", r.lower),
                format!("{:.10}", r.upper),
                self.method.clone(),
                format!("{:.10}", r.variance),
            ])?;
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn row(&self, day: i64) -> Option<&IntervalRow> {
        self.rows.iter().find(|r| r.day == day)
    }
}

/// `F̂(t) ± z σ̂(t) / √n`, clipped to `[0, 1]`; `variances[t − 1]` is `σ̂²(t)`.
pub fn wald_intervals<T: Real>(
    cdf: &DayCdf<T>,
    variances: &[T],
    n: usize,
    points: &[i64],
    level: ConfidenceLevel,
) -> IntervalTable {
    let z = level.z();
    let root_n = (n as f64).sqrt();
    let rows = points
        .iter()
        .map(|&t| {
            let estimate = cdf.at(t).to_f64().unwrap_or(f64::NAN);
            let variance = if t >= 1 && (t as usize) <= variances.len() {
                variances[t as usize - 1]
                    .to_f64()
                    .unwrap_or(f64::NAN)
                    .max(0.0)
            } else {
                0.0
            };
            let half = z * variance.sqrt() / root_n;
            let (raw_lower, raw_upper) = (estimate - half, estimate + half);
            IntervalRow {
                day: t,
                estimate,
                lower: raw_lower.clamp(0.0, 1.0),
                upper: raw_upper.clamp(0.0, 1.0),
                raw_lower,
                raw_upper,
                variance,
            }
        })
        .collect();
    IntervalTable {
        method: "wald".into(),
        rows,
        failed_replicates: 0,
    }
}
