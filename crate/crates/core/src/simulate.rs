//! Simulation of singly and doubly interval censored incubation data.
//!
//! Each record draws an exposure length `E`, an infection time `I ~ U[0, E]`
//! and an incubation time `U ~ F₀` by numeric inversion; the symptom time is
//! `S = I + U`. Singly censored records keep `⌈S⌉`; doubly censored records
//! report a window whose ends are pushed out by up to three days on each side.

use std::fmt;
use std::sync::Arc;

use log::warn;
use rand::Rng;

use crate::error::{Error, Result};
use crate::model::{validate_dataset, Dataset, DoublyObs, SinglyObs};
use crate::parametric::{trunc_exp_cdf, TruncExpParams};
use crate::quadrature::adaptive_simpson;
use crate::rng::stream_rng;

/// Weibull parameters used for the coverage experiments.
pub const WEIBULL_SHAPE: f64 = 3.035;
pub const WEIBULL_RATE: f64 = 0.0026;

#[derive(Clone)]
pub enum Family {
    /// `1 − exp(−rate · x^shape)`, renormalized on `[0, m1]`.
    Weibull { shape: f64, rate: f64 },
    /// `(1 − e^{−x/a}) / (1 − e^{−m1/a})`.
    TruncExp { a: f64 },
    /// Any distribution function with `F(0) = 0` and `F(m1) = 1`.
    Custom(Arc<dyn Fn(f64) -> f64 + Send + Sync>),
}

impl fmt::Debug for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Family::Weibull { shape, rate } => write!(f, "Weibull(shape={shape}, rate={rate})"),
            Family::TruncExp { a } => write!(f, "TruncExp(a={a})"),
            Family::Custom(_) => write!(f, "Custom"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct TruthSpec {
    pub family: Family,
    pub m1: i64,
}

impl TruthSpec {
    pub fn weibull(shape: f64, rate: f64, m1: i64) -> Result<Self> {
        if !(shape > 0.0 && rate > 0.0) {
            return Err(Error::InvalidConfig(
                "Weibull parameters must be positive".into(),
            ));
        }
        Self::checked(Family::Weibull { shape, rate }, m1)
    }

    /// The Weibull truth of the coverage experiments, truncated at day 15.
    pub fn default_weibull() -> Self {
        Self::weibull(WEIBULL_SHAPE, WEIBULL_RATE, 15).expect("valid constants")
    }

    pub fn trunc_exp(a: f64, m1: i64) -> Result<Self> {
        if !(a > 0.0) {
            return Err(Error::InvalidConfig("scale a must be positive".into()));
        }
        Self::checked(Family::TruncExp { a }, m1)
    }

    pub fn custom(cdf: impl Fn(f64) -> f64 + Send + Sync + 'static, m1: i64) -> Result<Self> {
        Self::checked(Family::Custom(Arc::new(cdf)), m1)
    }

    fn checked(family: Family, m1: i64) -> Result<Self> {
        if m1 < 1 {
            return Err(Error::InvalidConfig(
                "truncation day m1 must be >= 1".into(),
            ));
        }
        Ok(TruthSpec { family, m1 })
    }
}

/// Distribution of the exposure length on `1..=m2`.
#[derive(Debug, Clone, PartialEq)]
pub struct ExposureSpec {
    pub m2: i64,
    pub weights: Vec<f64>,
}

impl ExposureSpec {
    pub fn uniform(m2: i64) -> Result<Self> {
        if m2 < 1 {
            return Err(Error::InvalidConfig("m2 must be >= 1".into()));
        }
        Ok(ExposureSpec {
            m2,
            weights: vec![1.0 / m2 as f64; m2 as usize],
        })
    }

    pub fn new(weights: Vec<f64>) -> Result<Self> {
        let total: f64 = weights.iter().sum();
        if weights.is_empty() || weights.iter().any(|w| !(*w >= 0.0)) || (total - 1.0).abs() > 1e-9
        {
            return Err(Error::InvalidConfig(
                "exposure weights must be nonnegative and sum to 1".into(),
            ));
        }
        Ok(ExposureSpec {
            m2: weights.len() as i64,
            weights,
        })
    }

    /// Whether `m2 > m1 / 2`, the support condition that makes every day identifiable.
    pub fn identifiable_for(&self, m1: i64) -> bool {
        2 * self.m2 > m1
    }

    fn draw<R: Rng>(&self, rng: &mut R) -> i64 {
        let u: f64 = rng.gen();
        let mut acc = 0.0;
        for (k, w) in self.weights.iter().enumerate() {
            acc += w;
            if u < acc {
                return k as i64 + 1;
            }
        }
        self.m2
    }
}

pub fn truth_cdf(x: f64, spec: &TruthSpec) -> f64 {
    let m1 = spec.m1 as f64;
    if x <= 0.0 {
        return 0.0;
    }
    if x >= m1 {
        return 1.0;
    }
    match &spec.family {
        Family::Weibull { shape, rate } => {
            -(-rate * x.powf(*shape)).exp_m1() / -(-rate * m1.powf(*shape)).exp_m1()
        }
        Family::TruncExp { a } => trunc_exp_cdf(x, &TruncExpParams { a: *a, m1: spec.m1 }),
        Family::Custom(f) => f(x).clamp(0.0, 1.0),
    }
}

/// `F̄₀(i) = ∫_{i−1}^{i} F₀(x) dx`.
pub fn true_fbar(spec: &TruthSpec, i: i64) -> f64 {
    if i <= 0 {
        0.0
    } else if i > spec.m1 {
        1.0
    } else {
        adaptive_simpson(|x| truth_cdf(x, spec), (i - 1) as f64, i as f64, 1e-10)
    }
}

/// Day-averaged truth for days `1..=last_day`.
pub fn true_fbar_table(spec: &TruthSpec, last_day: i64) -> Vec<(i64, f64)> {
    (1..=last_day).map(|i| (i, true_fbar(spec, i))).collect()
}

/// Inverse of [`truth_cdf`] by bisection to width 1e-12.
pub fn inverse_truth_cdf(u: f64, spec: &TruthSpec) -> f64 {
    let mut lo = 0.0;
    let mut hi = spec.m1 as f64;
    while hi - lo > 1e-12 {
        let mid = 0.5 * (lo + hi);
        if truth_cdf(mid, spec) < u {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Singly censored record from an exposure length and continuous draws of
/// the infection and incubation times.
pub fn singly_record(e: i64, infection: f64, incubation: f64) -> SinglyObs {
    let s = ((infection + incubation).ceil() as i64).max(1);
    SinglyObs { e: e.min(s), s }
}

/// Doubly censored record: `s_r = ⌈S⌉ + right_pad`, `s_l = max(⌊S⌋ − left_pad, 0)`.
pub fn doubly_record(e: i64, symptom: f64, right_pad: i64, left_pad: i64) -> DoublyObs {
    let s_r = (symptom.ceil() as i64).max(1) + right_pad;
    let s_l = (symptom.floor() as i64 - left_pad).max(0);
    // ⌊S⌋ = ⌈S⌉ only for integer S, a null event.
    let s_r = if s_l >= s_r { s_l + 1 } else { s_r };
    DoublyObs { e, s_l, s_r }
}

fn check_design(n: usize, truth: &TruthSpec, exposure: &ExposureSpec) -> Result<()> {
    if n == 0 {
        return Err(Error::InvalidConfig("sample size must be >= 1".into()));
    }
    if !exposure.identifiable_for(truth.m1) {
        warn!(
            "m2={} <= m1/2={}: not every day is identifiable",
            exposure.m2,
            truth.m1 / 2
        );
    }
    Ok(())
}

fn draw_symptom<R: Rng>(
    rng: &mut R,
    truth: &TruthSpec,
    exposure: &ExposureSpec,
) -> (i64, f64, f64) {
    let e = exposure.draw(rng);
    let infection = rng.gen::<f64>() * e as f64;
    let incubation = inverse_truth_cdf(rng.gen::<f64>(), truth);
    (e, infection, incubation)
}

pub fn draw_singly(
    n: usize,
    truth: &TruthSpec,
    exposure: &ExposureSpec,
    seed: u64,
) -> Result<Dataset> {
    check_design(n, truth, exposure)?;
    let mut rng = stream_rng(seed, 0);
    let records = (0..n)
        .map(|_| {
            let (e, infection, incubation) = draw_symptom(&mut rng, truth, exposure);
            singly_record(e, infection, incubation)
        })
        .collect();
    validate_dataset(Dataset::Single(records))
}

pub fn draw_doubly(
    n: usize,
    truth: &TruthSpec,
    exposure: &ExposureSpec,
    seed: u64,
) -> Result<Dataset> {
    check_design(n, truth, exposure)?;
    let mut rng = stream_rng(seed, 0);
    let records = (0..n)
        .map(|_| {
            let (e, infection, incubation) = draw_symptom(&mut rng, truth, exposure);
            let right = rng.gen_range(0..4);
            let left = rng.gen_range(0..4);
            doubly_record(e, infection + incubation, right, left)
        })
        .collect();
    validate_dataset(Dataset::Double(records))
}
