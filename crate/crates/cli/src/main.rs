//! `npmle`: simulate incubation data, fit the NPMLE, and compute intervals.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use log::{info, warn};

use npmle_core::coverage::{run_coverage, CoverageConfig, CoverageMethod};
use npmle_core::inference::{averaged_fisher, fisher_result_from_matrix};
use npmle_core::io::{
    read_dataset_path, with_file, write_dataset, write_estimate, write_trace, write_truth,
};
use npmle_core::simulate::true_fbar_table;
use npmle_core::{
    analyze_fit, bootstrap_ci, candidate_grid, draw_doubly, draw_singly, fit_npmle, wald_intervals,
    BootstrapConfig, ConfidenceLevel, Dataset, DayCdf, Error, ExposureSpec, Grid, Mode,
    SolverConfigF64, TruthSpec,
};

#[derive(Parser, Debug)]
#[command(
    name = "npmle",
    version,
    about = "Nonparametric incubation time estimation from censored data"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Draw a simulated dataset and its true day averages.
    Simulate(SimulateArgs),
    /// Fit the NPMLE to a data CSV.
    Fit(FitArgs),
    /// Confidence intervals for the fitted day averages.
    Ci(CiArgs),
    /// Coverage of the intervals over repeated simulated datasets.
    Coverage(CoverageArgs),
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum ModeArg {
    Single,
    Double,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Mode {
        match m {
            ModeArg::Single => Mode::Single,
            ModeArg::Double => Mode::Double,
        }
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum ModelArg {
    Weibull,
    Truncexp,
}

#[derive(Args, Debug)]
struct TruthArgs {
    #[arg(long, value_enum, default_value = "weibull")]
    model: ModelArg,
    /// Weibull shape.
    #[arg(long, default_value_t = npmle_core::simulate::WEIBULL_SHAPE)]
    shape: f64,
    /// Weibull rate.
    #[arg(long, default_value_t = npmle_core::simulate::WEIBULL_RATE)]
    rate: f64,
    /// Truncated exponential scale.
    #[arg(long, default_value_t = 6.0)]
    a: f64,
    /// Truncation day of the incubation law.
    #[arg(long, default_value_t = 15)]
    m1: i64,
    /// Longest exposure window; exposure lengths are uniform on 1..=m2.
    #[arg(long, default_value_t = 15)]
    m2: i64,
}

impl TruthArgs {
    fn truth(&self) -> npmle_core::Result<TruthSpec> {
        match self.model {
            ModelArg::Weibull => TruthSpec::weibull(self.shape, self.rate, self.m1),
            ModelArg::Truncexp => TruthSpec::trunc_exp(self.a, self.m1),
        }
    }

    fn exposure(&self) -> npmle_core::Result<ExposureSpec> {
        ExposureSpec::uniform(self.m2)
    }
}

#[derive(Args, Debug)]
struct SimulateArgs {
    #[command(flatten)]
    truth: TruthArgs,
    #[arg(long)]
    n: usize,
    #[arg(long)]
    seed: u64,
    #[arg(long, value_enum, default_value = "single")]
    mode: ModeArg,
    /// Data CSV to write.
    #[arg(long, short)]
    out: PathBuf,
    /// Optional CSV of the true day averages.
    #[arg(long)]
    truth_out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SolverArgs {
    /// Fenchel tolerance.
    #[arg(long, default_value_t = 1e-10)]
    tol: f64,
    #[arg(long, default_value_t = 500)]
    max_iter: usize,
    /// Truncation day; the grid then runs to m1 plus the longest exposure.
    #[arg(long)]
    m1: Option<i64>,
}

impl SolverArgs {
    fn config(&self) -> SolverConfigF64 {
        SolverConfigF64 {
            tol: self.tol,
            max_outer: self.max_iter,
            ..Default::default()
        }
    }
}

#[derive(Args, Debug)]
struct FitArgs {
    #[arg(long, short)]
    input: PathBuf,
    /// Estimate CSV `day,mass,fbar`.
    #[arg(long, short)]
    out: PathBuf,
    /// Iteration table.
    #[arg(long)]
    trace: Option<PathBuf>,
    #[command(flatten)]
    solver: SolverArgs,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum CiMethod {
    Wald,
    Bootstrap,
}

#[derive(Args, Debug)]
struct CiArgs {
    #[arg(long, short)]
    input: PathBuf,
    #[arg(long, short)]
    out: PathBuf,
    #[arg(long, value_enum, default_value = "wald")]
    method: CiMethod,
    /// Days as `a:b` or a comma separated list; defaults to every grid day.
    #[arg(long)]
    points: Option<String>,
    /// Bootstrap replicates, for bootstrap intervals or an averaged information matrix.
    #[arg(long, default_value_t = 1000)]
    b: usize,
    #[arg(long)]
    seed: Option<u64>,
    /// Average the observed information over `b` bootstrap refits.
    #[arg(long)]
    fisher_averaged: bool,
    #[arg(long, default_value_t = 0.95)]
    level: f64,
    #[command(flatten)]
    solver: SolverArgs,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum CoverageMethodArg {
    Wald,
    WaldAveraged,
    Bootstrap,
}

#[derive(Args, Debug)]
struct CoverageArgs {
    #[command(flatten)]
    truth: TruthArgs,
    #[arg(long)]
    n: usize,
    #[arg(long)]
    reps: usize,
    #[arg(long)]
    seed: u64,
    #[arg(long, value_enum, default_value = "single")]
    mode: ModeArg,
    #[arg(long, value_enum, default_value = "wald")]
    method: CoverageMethodArg,
    #[arg(long, default_value_t = 200)]
    b: usize,
    #[arg(long, default_value = "4:9")]
    days: String,
    #[arg(long, default_value_t = 0.95)]
    level: f64,
    #[arg(long, short)]
    out: PathBuf,
}

/// `a:b` (inclusive) or `d1,d2,…`.
fn parse_points(spec: &str) -> npmle_core::Result<Vec<i64>> {
    let spec = spec.trim();
    let bad = |what: &str| Error::InvalidConfig(format!("bad day `{what}` in `{spec}`"));
    let day = |t: &str| t.trim().parse::<i64>().map_err(|_| bad(t));
    let points: Vec<i64> = match spec.split_once(':') {
        Some((a, b)) => (day(a)?..=day(b)?).collect(),
        None => spec
            .split(',')
            .map(day)
            .collect::<npmle_core::Result<_>>()?,
    };
    if points.is_empty() || points.iter().any(|&d| d < 1) {
        return Err(Error::InvalidConfig(format!("no valid days in `{spec}`")));
    }
    Ok(points)
}

fn load(path: &Path, m1: Option<i64>) -> anyhow::Result<(Dataset, Grid)> {
    let data = read_dataset_path(path).with_context(|| format!("reading {}", path.display()))?;
    let grid = candidate_grid(&data, m1)?;
    info!(
        "{} {} records, grid 1..={}",
        data.len(),
        data.mode().as_str(),
        grid.last()
    );
    Ok((data, grid))
}

fn cmd_simulate(args: &SimulateArgs) -> anyhow::Result<()> {
    let truth = args.truth.truth()?;
    let exposure = args.truth.exposure()?;
    let data = match Mode::from(args.mode) {
        Mode::Single => draw_singly(args.n, &truth, &exposure, args.seed)?,
        Mode::Double => draw_doubly(args.n, &truth, &exposure, args.seed)?,
    };
    with_file(&args.out, |w| write_dataset(&data, w))?;
    if let Some(path) = &args.truth_out {
        let table = true_fbar_table(&truth, truth.m1 + exposure.m2);
        with_file(path, |w| write_truth(&table, w))?;
    }
    Ok(())
}

fn cmd_fit(args: &FitArgs) -> anyhow::Result<()> {
    let (data, grid) = load(&args.input, args.solver.m1)?;
    match fit_npmle(&data, &grid, &args.solver.config()) {
        Ok(fit) => {
            let cdf = DayCdf::for_mode(&fit.mass, &grid, data.mode());
            with_file(&args.out, |w| {
                write_estimate(&fit.mass, &cdf, &grid, data.mode(), w)
            })?;
            if let Some(path) = &args.trace {
                with_file(path, |w| write_trace(&fit.trace, w))?;
            }
            info!(
                "mode={} support={:?} criterion={:.10}",
                data.mode().as_str(),
                fit.mass.support(),
                fit.criterion
            );
            Ok(())
        }
        Err(Error::NonConvergence { trace }) => {
            if let Some(path) = &args.trace {
                with_file(path, |w| write_trace(&trace, w))?;
            }
            Err(Error::NonConvergence { trace }.into())
        }
        Err(e) => Err(e.into()),
    }
}

fn cmd_ci(args: &CiArgs) -> anyhow::Result<()> {
    let level = ConfidenceLevel::from_level(args.level)?;
    let (data, grid) = load(&args.input, args.solver.m1)?;
    let solver = args.solver.config();
    let points = match &args.points {
        Some(p) => parse_points(p)?,
        None => grid.points().to_vec(),
    };
    let mode = data.mode();
    let fit = fit_npmle(&data, &grid, &solver)?;
    let cdf = DayCdf::for_mode(&fit.mass, &grid, mode);
    let last = points.iter().copied().max().unwrap_or(1).max(grid.last());
    let needs_seed = || {
        args.seed
            .ok_or_else(|| anyhow!(Error::InvalidConfig("--seed is required".into())))
    };
    let table = match args.method {
        CiMethod::Wald if args.fisher_averaged => {
            let seed = needs_seed()?;
            let support = fit.mass.support();
            let variances = if support.len() < 2 {
                vec![0.0; last as usize]
            } else {
                let avg = averaged_fisher(&data, &grid, support, args.b, seed, &solver)?;
                if avg.skipped > 0 {
                    warn!(
                        "{} of {} refits failed and were skipped",
                        avg.skipped, args.b
                    );
                }
                fisher_result_from_matrix(avg.matrix, support, grid.last())
                    .day_variances(mode, last)
            };
            let mut t = wald_intervals(&cdf, &variances, data.len(), &points, level);
            t.method = "wald-averaged".into();
            t
        }
        CiMethod::Wald => {
            let fr = analyze_fit(&data, &grid, &fit.mass)?;
            if fr.pseudo_inverse {
                warn!("observed information is singular; variances use a pseudo-inverse");
            }
            wald_intervals(
                &cdf,
                &fr.day_variances(mode, last),
                data.len(),
                &points,
                level,
            )
        }
        CiMethod::Bootstrap => {
            let config = BootstrapConfig {
                b: args.b,
                seed: needs_seed()?,
                points,
                level,
            };
            let t = bootstrap_ci(&data, &grid, &cdf, &solver, &config)?;
            if t.failed_replicates > 0 {
                warn!("{} bootstrap replicates failed", t.failed_replicates);
            }
            t
        }
    };
    with_file(&args.out, |w| table.write_csv(w))?;
    Ok(())
}

fn cmd_coverage(args: &CoverageArgs) -> anyhow::Result<()> {
    let method = match args.method {
        CoverageMethodArg::Wald => CoverageMethod::Wald,
        CoverageMethodArg::WaldAveraged => CoverageMethod::WaldAveraged { b: args.b },
        CoverageMethodArg::Bootstrap => CoverageMethod::Bootstrap { b: args.b },
    };
    let config = CoverageConfig {
        reps: args.reps,
        n: args.n,
        mode: args.mode.into(),
        truth: args.truth.truth()?,
        exposure: args.truth.exposure()?,
        method,
        days: parse_points(&args.days)?,
        seed: args.seed,
        level: ConfidenceLevel::from_level(args.level)?,
    };
    let report = run_coverage(&config, &SolverConfigF64::default())?;
    with_file(&args.out, |w| report.write_csv(w))?;
    Ok(())
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<Error>() {
        Some(Error::NonConvergence { .. }) | Some(Error::LineSearchFailure) => 2,
        Some(Error::InvalidRecord { .. })
        | Some(Error::InvalidConfig(_))
        | Some(Error::EmptyDataset)
        | Some(Error::Csv(_)) => 3,
        Some(Error::InfeasibleRecord { .. }) | Some(Error::InfeasiblePoint { .. }) => 4,
        _ => 1,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Simulate(a) => cmd_simulate(a),
        Command::Fit(a) => cmd_fit(a),
        Command::Ci(a) => cmd_ci(a),
        Command::Coverage(a) => cmd_coverage(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn point_lists() {
        assert_eq!(parse_points("3:10").unwrap().len(), 8);
        assert_eq!(parse_points("1, 4,6").unwrap(), vec![1, 4, 6]);
        assert!(parse_points("0:2").is_err());
        assert!(parse_points("x").is_err());
    }

    #[test]
    fn exit_codes() {
        assert_eq!(exit_code(&Error::EmptyDataset.into()), 3);
        assert_eq!(exit_code(&Error::InfeasibleRecord { index: 0 }.into()), 4);
        assert_eq!(exit_code(&anyhow!("other")), 1);
    }

    #[test]
    fn arguments_parse() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }
}
