//! Repeated-sampling coverage of the confidence intervals.

use std::io::Write;

use log::debug;
use rayon::prelude::*;

use crate::bootstrap::{bootstrap_ci, BootstrapConfig};
use crate::error::{Error, Result};
use crate::inference::{
    analyze_fit, averaged_fisher, fisher_result_from_matrix, wald_intervals, ConfidenceLevel,
    IntervalTable,
};
use crate::model::{candidate_grid, Dataset, DayCdf, Mode};
use crate::rng::derive_seed;
use crate::simulate::{draw_doubly, draw_singly, true_fbar, ExposureSpec, TruthSpec};
use crate::solver::{fit_npmle, SolverConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CoverageMethod {
    Wald,
    /// Wald intervals with the information averaged over `b` bootstrap refits.
    WaldAveraged {
        b: usize,
    },
    Bootstrap {
        b: usize,
    },
}

impl CoverageMethod {
    pub fn name(self) -> &'static str {
        match self {
            CoverageMethod::Wald => "wald",
            CoverageMethod::WaldAveraged { .. } => "wald-averaged",
            CoverageMethod::Bootstrap { .. } => "bootstrap",
        }
    }
}

#[derive(Debug, Clone)]
pub struct CoverageConfig {
    pub reps: usize,
    pub n: usize,
    pub mode: Mode,
    pub truth: TruthSpec,
    pub exposure: ExposureSpec,
    pub method: CoverageMethod,
    pub days: Vec<i64>,
    pub seed: u64,
    pub level: ConfidenceLevel,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoverageRow {
    pub day: i64,
    pub coverage: f64,
    pub mean_width: f64,
    pub failures: usize,
}

#[derive(Debug, Clone)]
pub struct CoverageReport {
    pub method: String,
    pub rows: Vec<CoverageRow>,
    /// Interval table of every replicate, `None` where the fit failed.
    pub tables: Vec<Option<IntervalTable>>,
}

impl CoverageReport {
    pub const HEADER: [&'static str; 4] = ["day", "coverage", "mean_width", "failures"];

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(out);
        wtr.write_record(Self::HEADER)?;
        for r in &self.rows {
            wtr.write_record([
                r.day.to_string(),
                format!("{:.6}", r.coverage),
                format!("{:.10}", r.mean_width),
                r.failures.to_string(),
            ])?;
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn row(&self, day: i64) -> Option<&CoverageRow> {
        self.rows.iter().find(|r| r.day == day)
    }
}

/// Seed of the dataset drawn for replicate `rep`.
pub fn replicate_seed(master: u64, rep: usize) -> u64 {
    derive_seed(master, rep as u64)
}

/// Draws a dataset of the configured design.
pub fn draw(config: &CoverageConfig, seed: u64) -> Result<Dataset> {
    match config.mode {
        Mode::Single => draw_singly(config.n, &config.truth, &config.exposure, seed),
        Mode::Double => draw_doubly(config.n, &config.truth, &config.exposure, seed),
    }
}

/// Intervals for one dataset with the configured method.
pub fn intervals_for(
    data: &Dataset,
    method: CoverageMethod,
    days: &[i64],
    level: ConfidenceLevel,
    seed: u64,
    solver: &SolverConfig<f64>,
) -> Result<IntervalTable> {
    let grid = candidate_grid(data, None)?;
    let mode = data.mode();
    let fit = fit_npmle(data, &grid, solver)?;
    let cdf = DayCdf::for_mode(&fit.mass, &grid, mode);
    let last = days.iter().copied().max().unwrap_or(1).max(grid.last());
    match method {
        CoverageMethod::Wald => {
            let fr = analyze_fit(data, &grid, &fit.mass)?;
            Ok(wald_intervals(
                &cdf,
                &fr.day_variances(mode, last),
                data.len(),
                days,
                level,
            ))
        }
        CoverageMethod::WaldAveraged { b } => {
            let support = fit.mass.support();
            let variances = if support.len() < 2 {
                vec![0.0; last as usize]
            } else {
                let avg = averaged_fisher(data, &grid, support, b, seed, solver)?;
                if avg.skipped as f64 > 0.1 * b as f64 {
                    return Err(Error::TooManyFailures {
                        failed: avg.skipped,
                        total: b,
                    });
                }
                fisher_result_from_matrix(avg.matrix, support, grid.last())
                    .day_variances(mode, last)
            };
            let mut t = wald_intervals(&cdf, &variances, data.len(), days, level);
            t.method = "wald-averaged".into();
            Ok(t)
        }
        CoverageMethod::Bootstrap { b } => {
            let bc = BootstrapConfig {
                b,
                seed,
                points: days.to_vec(),
                level,
            };
            bootstrap_ci(data, &grid, &cdf, solver, &bc)
        }
    }
}

/// Simulates `reps` datasets and records how often each day's interval
/// contains the true day average.
pub fn run_coverage(config: &CoverageConfig, solver: &SolverConfig<f64>) -> Result<CoverageReport> {
    if config.reps == 0 {
        return Err(Error::InvalidConfig("reps must be >= 1".into()));
    }
    let tables: Vec<Option<IntervalTable>> = (0..config.reps)
        .into_par_iter()
        .map(|rep| {
            let seed = replicate_seed(config.seed, rep);
            let out = draw(config, seed).and_then(|data| {
                intervals_for(
                    &data,
                    config.method,
                    &config.days,
                    config.level,
                    derive_seed(seed, 1),
                    solver,
                )
            });
            match out {
                Ok(t) => Some(t),
                Err(e) => {
                    debug!("coverage replicate {rep} failed: {e}");
                    None
                }
            }
        })
        .collect();
    let failures = tables.iter().filter(|t| t.is_none()).count();
    let ok: Vec<&IntervalTable> = tables.iter().flatten().collect();
    let rows = config
        .days
        .iter()
        .map(|&day| {
            let truth = true_fbar(&config.truth, day);
            let (mut hits, mut width) = (0usize, 0.0);
            for t in &ok {
                let r = t.row(day).expect("requested day present");
                if r.lower <= truth && truth <= r.upper {
                    hits += 1;
                }
                width += r.upper - r.lower;
            }
            let used = ok.len().max(1) as f64;
            CoverageRow {
                day,
                coverage: if ok.is_empty() {
                    f64::NAN
                } else {
                    hits as f64 / used
                },
                mean_width: if ok.is_empty() {
                    f64::NAN
                } else {
                    width / used
                },
                failures,
            }
        })
        .collect();
    Ok(CoverageReport {
        method: config.method.name().into(),
        rows,
        tables,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config(reps: usize, method: CoverageMethod) -> CoverageConfig {
        CoverageConfig {
            reps,
            n: 200,
            mode: Mode::Single,
            truth: TruthSpec::default_weibull(),
            exposure: ExposureSpec::uniform(15).unwrap(),
            method,
            days: (4..=9).collect(),
            seed: 17,
            level: ConfidenceLevel::P95,
        }
    }

    #[test]
    fn single_rep_coverage_is_zero_or_one() {
        let r = run_coverage(&config(1, CoverageMethod::Wald), &SolverConfig::default()).unwrap();
        assert_eq!(r.rows.len(), 6);
        for row in &r.rows {
            assert!(row.coverage == 0.0 || row.coverage == 1.0);
            assert_eq!(row.failures, 0);
        }
    }

    #[test]
    fn report_is_reproducible() {
        let c = config(4, CoverageMethod::Bootstrap { b: 20 });
        let a = run_coverage(&c, &SolverConfig::default()).unwrap();
        let b = run_coverage(&c, &SolverConfig::default()).unwrap();
        assert_eq!(a.rows, b.rows);
        let mut buf = Vec::new();
        a.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("day,coverage,mean_width,failures\n"));
        assert_eq!(text.lines().count(), 7);
    }

    #[test]
    fn averaged_method_runs_on_doubly_data() {
        let mut c = config(2, CoverageMethod::WaldAveraged { b: 5 });
        c.mode = Mode::Double;
        let r = run_coverage(&c, &SolverConfig::default()).unwrap();
        assert_eq!(r.method, "wald-averaged");
        assert!(r.tables.iter().all(|t| t.is_some()));
    }
}
