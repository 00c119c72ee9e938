//! Truncated exponential baseline: `F_a(x) = (1 − e^{−x/a}) / (1 − e^{−M1/a})`
//! on `[0, M1]`, with closed-form day integrals and a one-dimensional
//! maximum likelihood fit over `a`.

use crate::error::{Error, Result};
use crate::model::Dataset;
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TruncExpParams<T> {
    pub a: T,
    pub m1: i64,
}

impl<T: Real> TruncExpParams<T> {
    pub fn new(a: T, m1: i64) -> Result<Self> {
        if !(a > T::zero()) || !a.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "scale a={a} must be positive"
            )));
        }
        if m1 < 1 {
            return Err(Error::InvalidConfig(format!(
                "truncation m1={m1} must be >= 1"
            )));
        }
        Ok(TruncExpParams { a, m1 })
    }

    fn normalizer(&self) -> T {
        let m1 = T::from_i64(self.m1).expect("small integer");
        -(-m1 / self.a).exp_m1()
    }
}

pub fn trunc_exp_cdf<T: Real>(x: T, params: &TruncExpParams<T>) -> T {
    let m1 = T::from_i64(params.m1).expect("small integer");
    if x < T::zero() {
        T::zero()
    } else if x > m1 {
        T::one()
    } else {
        -(-x / params.a).exp_m1() / params.normalizer()
    }
}

/// `∫_{k−1}^{k} F_a(s) ds` for an integer day `k`.
pub fn day_integral<T: Real>(k: i64, params: &TruncExpParams<T>) -> T {
    if k <= 0 {
        T::zero()
    } else if k > params.m1 {
        T::one()
    } else {
        // a e^{−k/a}(e^{1/a} − 1) written without overflow for small a.
        let a = params.a;
        let km1 = T::from_i64(k - 1).expect("small integer");
        let tail = -a * (-km1 / a).exp() * (-T::one() / a).exp_m1();
        (T::one() - tail) / params.normalizer()
    }
}

/// `∫_{k−1}^{k} {F_a(s) − F_a(s − e)} ds`.
///
/// For `e ≥ k` the shifted term vanishes and only the first integral remains.
pub fn day_band_integral<T: Real>(k: i64, e: i64, params: &TruncExpParams<T>) -> T {
    let upper = day_integral(k, params);
    if e >= k {
        upper
    } else {
        (upper - day_integral(k - e, params)).max(T::zero())
    }
}

/// `Σ_i log ∫_{s_i−1}^{s_i} {F_a(s) − F_a(s − e_i)} ds`; `−∞` if any term vanishes.
pub fn trunc_exp_loglik<T: Real>(a: T, data: &Dataset, m1: i64) -> Result<T> {
    let records = match data {
        Dataset::Single(r) => r,
        Dataset::Double(_) => {
            return Err(Error::InvalidConfig(
                "parametric fit needs singly censored data".into(),
            ))
        }
    };
    let params = TruncExpParams::new(a, m1)?;
    let mut total = T::zero();
    for obs in records {
        let band = day_band_integral(obs.s, obs.e, &params);
        if !(band > T::zero()) {
            return Ok(T::neg_infinity());
        }
        total = total + band.ln();
    }
    Ok(total)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TruncExpFit<T> {
    pub a_hat: T,
    pub loglik: T,
    /// The maximizer sits on (or within tolerance of) a bracket end.
    pub at_edge: bool,
}

impl<T: Real> TruncExpFit<T> {
    pub fn params(&self, m1: i64) -> TruncExpParams<T> {
        TruncExpParams { a: self.a_hat, m1 }
    }
}

pub const DEFAULT_BRACKET: (f64, f64) = (0.01, 100.0);
const SCAN_POINTS: usize = 50;
const A_TOL: f64 = 1e-8;

/// Maximizes [`trunc_exp_loglik`] over `a` in `bracket`: a log-spaced scan
/// localizes the mode, golden-section search refines it.
pub fn fit_trunc_exp<T: Real>(data: &Dataset, m1: i64, bracket: (T, T)) -> Result<TruncExpFit<T>> {
    let (lo, hi) = bracket;
    if !(lo > T::zero() && hi > lo) {
        return Err(Error::InvalidConfig(
            "bracket must satisfy 0 < lo < hi".into(),
        ));
    }
    let objective = |a: T| trunc_exp_loglik(a, data, m1);
    let ratio = (hi / lo).ln();
    let grid: Vec<T> = (0..SCAN_POINTS)
        .map(|i| {
            let t = T::from_count(i) / T::from_count(SCAN_POINTS - 1);
            if i == SCAN_POINTS - 1 {
                hi
            } else {
                lo * (ratio * t).exp()
            }
        })
        .collect();
    let mut best = 0;
    let mut best_val = T::neg_infinity();
    for (i, &a) in grid.iter().enumerate() {
        let v = objective(a)?;
        if v > best_val {
            best_val = v;
            best = i;
        }
    }
    let mut left = grid[best.saturating_sub(1)];
    let mut right = grid[(best + 1).min(SCAN_POINTS - 1)];

    let inv_phi = T::lit((5f64.sqrt() - 1.0) / 2.0);
    let tol = T::lit(A_TOL);
    let mut x1 = right - inv_phi * (right - left);
    let mut x2 = left + inv_phi * (right - left);
    let mut f1 = objective(x1)?;
    let mut f2 = objective(x2)?;
    while right - left > tol {
        if f1 >= f2 {
            right = x2;
            x2 = x1;
            f2 = f1;
            x1 = right - inv_phi * (right - left);
            f1 = objective(x1)?;
        } else {
            left = x1;
            x1 = x2;
            f1 = f2;
            x2 = left + inv_phi * (right - left);
            f2 = objective(x2)?;
        }
    }
    let mut a_hat = (left + right) * T::lit(0.5);
    let mut loglik = objective(a_hat)?;
    // The scan point can beat the refined interior value when the maximum
    // is on the bracket edge.
    if best_val > loglik {
        a_hat = grid[best];
        loglik = best_val;
    }
    let at_edge = a_hat - lo <= tol * T::lit(10.0) || hi - a_hat <= tol * T::lit(10.0);
    Ok(TruncExpFit {
        a_hat,
        loglik,
        at_edge,
    })
}
