//! Nonparametric maximum likelihood estimation of incubation time
//! distributions from interval censored exposure and symptom data.
//!
//! Observations are either singly censored, an exposure length `e` and a
//! symptom day `s`, or doubly censored, where the symptom day is only known
//! to lie in a window `(s_l, s_r]`. The estimand is the day-averaged
//! distribution function `F̄(i) = ∫_{i−1}^{i} F(x) dx` on integer days.
//!
//! ```
//! use npmle_core::{candidate_grid, fit_npmle, Dataset, DayCdf, SinglyObs, SolverConfig};
//!
//! let data = Dataset::Single(vec![SinglyObs { e: 2, s: 3 }, SinglyObs { e: 1, s: 5 }]);
//! let grid = candidate_grid(&data, None).unwrap();
//! let fit = fit_npmle::<f64>(&data, &grid, &SolverConfig::default()).unwrap();
//! let cdf = DayCdf::for_mode(&fit.mass, &grid, data.mode());
//! assert!((cdf.at(5) - 1.0).abs() < 1e-9);
//! ```

// Negated comparisons are deliberate: NaN must fail the positivity checks.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bootstrap;
pub mod coverage;
pub mod em;
pub mod error;
pub mod inference;
pub mod io;
pub mod linalg;
pub mod model;
pub mod parametric;
pub mod quadrature;
pub mod rng;
pub mod scalar;
pub mod simulate;
pub mod solver;
pub mod weights;

pub use bootstrap::{bootstrap_ci, resample, BootstrapConfig};
pub use coverage::{run_coverage, CoverageConfig, CoverageMethod, CoverageReport};
pub use em::{fit_em, EmFit};
pub use error::{Error, Result};
pub use inference::{
    analyze_fit, cdf_covariance, extend_variances, observed_fisher, observed_fisher_doubly,
    observed_fisher_singly, wald_intervals, ConfidenceLevel, FisherAveraging, FisherResult,
    IntervalRow, IntervalTable,
};
pub use linalg::{spd_invert, spd_solve, SymMatrix};
pub use model::{
    candidate_grid, cdf_from_mass, validate_dataset, Dataset, DayCdf, DoublyObs, Grid,
    MassFunction, Mode, SinglyObs,
};
pub use parametric::{
    day_band_integral, day_integral, fit_trunc_exp, trunc_exp_loglik, TruncExpFit, TruncExpParams,
};
pub use scalar::Real;
pub use simulate::{draw_doubly, draw_singly, true_fbar, truth_cdf, ExposureSpec, TruthSpec};
pub use solver::{fit_npmle, IterationTrace, NpmleFit, SolverConfig};
pub use weights::{build_weight_matrix, psi_weight, WeightMatrix};

pub type MassFunctionF64 = MassFunction<f64>;
pub type DayCdfF64 = DayCdf<f64>;
pub type WeightMatrixF64 = WeightMatrix<f64>;
pub type SymMatrixF64 = SymMatrix<f64>;
pub type SolverConfigF64 = SolverConfig<f64>;
pub type NpmleFitF64 = NpmleFit<f64>;
pub type FisherResultF64 = FisherResult<f64>;

pub type MassFunctionF32 = MassFunction<f32>;
pub type DayCdfF32 = DayCdf<f32>;
pub type WeightMatrixF32 = WeightMatrix<f32>;
pub type SymMatrixF32 = SymMatrix<f32>;
pub type SolverConfigF32 = SolverConfig<f32>;
pub type NpmleFitF32 = NpmleFit<f32>;
pub type FisherResultF32 = FisherResult<f32>;
