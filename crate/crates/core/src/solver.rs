//! Support reduction algorithm for the nonparametric MLE.
//!
//! The negative normalized log likelihood plus the Lagrange term `Σ p_j − 1`
//! is minimized over the nonnegative cone. Each outer iteration freezes the
//! denominators at the current iterate `p⁰`, minimizes the resulting
//! quadratic model over the cone with an active-set inner loop (adding the
//! steepest off-support point, dropping the most negative mass), and moves
//! towards the quadratic minimizer with an Armijo line search. Iteration
//! stops when the Fenchel conditions hold: all partial derivatives are
//! nonnegative and `⟨p, ∇φ(p)⟩ = 0`.

use std::collections::HashMap;
use std::fmt::Write as _;

use log::{debug, trace};

use crate::error::{Error, Result};
use crate::linalg::{Cholesky, SymMatrix};
use crate::model::{Dataset, Grid, MassFunction};
use crate::scalar::{pairwise_sum, Real};
use crate::weights::{build_weight_matrix, WeightMatrix};

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig<T> {
    /// Tolerance on both Fenchel conditions.
    pub tol: T,
    pub max_outer: usize,
    pub armijo_c: T,
    pub armijo_shrink: T,
    /// A point is added in the inner loop only if the quadratic model's
    /// partial derivative there is below `-inner_tol`.
    pub inner_tol: T,
    /// Day used as the single starting support point; defaults to the grid
    /// point nearest the median symptom day.
    pub initial_point: Option<i64>,
}

impl<T: Real> Default for SolverConfig<T> {
    fn default() -> Self {
        SolverConfig {
            tol: T::lit(1e-10),
            max_outer: 500,
            armijo_c: T::lit(1e-4),
            armijo_shrink: T::lit(0.5),
            inner_tol: T::lit(1e-12),
            initial_point: None,
        }
    }
}

impl<T: Real> SolverConfig<T> {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidConfig(what.to_string()));
        if !(self.tol > T::zero()) {
            return bad("tol must be positive");
        }
        if !(self.armijo_shrink > T::zero() && self.armijo_shrink < T::one()) {
            return bad("armijo_shrink must lie in (0, 1)");
        }
        if !(self.armijo_c > T::zero() && self.armijo_c < T::one()) {
            return bad("armijo_c must lie in (0, 1)");
        }
        if !(self.inner_tol >= T::zero()) {
            return bad("inner_tol must be nonnegative");
        }
        if self.max_outer == 0 {
            return bad("max_outer must be positive");
        }
        Ok(())
    }
}

/// One row of the outer-iteration table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow {
    pub iter: usize,
    pub criterion: f64,
    pub min_grad: f64,
    pub complementarity: f64,
    pub support_size: usize,
    /// Accepted Armijo step length.
    pub step: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct IterationTrace {
    pub rows: Vec<TraceRow>,
}

impl IterationTrace {
    pub const HEADER: &'static str = "iter,criterion,min_grad,complementarity,support_size";

    /// Plain-text table, one comma separated line per outer iteration.
    pub fn to_table(&self) -> String {
        let mut out = String::from(Self::HEADER);
        out.push('\n');
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{:.10},{:.10},{:.10},{}",
                r.iter, r.criterion, r.min_grad, r.complementarity, r.support_size
            );
        }
        out
    }

    /// Criterion values strictly decrease, except possibly at the last row.
    pub fn is_monotone(&self) -> bool {
        let n = self.rows.len();
        self.rows.windows(2).enumerate().all(|(k, w)| {
            if k + 2 == n {
                w[1].criterion <= w[0].criterion
            } else {
                w[1].criterion < w[0].criterion
            }
        })
    }
}

fn denominators<T: Real>(p: &[T], w: &WeightMatrix<T>) -> Result<Vec<T>> {
    let d = w.row_dots(p);
    match d.iter().position(|&x| !(x > T::zero())) {
        Some(index) => Err(Error::InfeasiblePoint { index }),
        None => Ok(d),
    }
}

/// `φ(p) = −n⁻¹ Σ_i log Σ_j p_j w_i(j) + Σ_j p_j − 1`.
pub fn phi<T: Real>(p: &[T], w: &WeightMatrix<T>) -> Result<T> {
    let d = denominators(p, w)?;
    phi_from_denominators(p, &d)
}

fn phi_from_denominators<T: Real>(p: &[T], d: &[T]) -> Result<T> {
    let logs: Vec<T> = d.iter().map(|x| x.ln()).collect();
    let n = T::from_count(d.len());
    Ok(-pairwise_sum(&logs) / n + pairwise_sum(p) - T::one())
}

/// `∂φ/∂p_j = 1 − n⁻¹ Σ_i w_i(j) / Σ_k p_k w_i(k)` over every grid point.
pub fn phi_gradient<T: Real>(p: &[T], w: &WeightMatrix<T>) -> Result<Vec<T>> {
    let d = denominators(p, w)?;
    Ok(gradient_from_denominators(w, &d))
}

fn gradient_from_denominators<T: Real>(w: &WeightMatrix<T>, d: &[T]) -> Vec<T> {
    let mut acc = vec![T::zero(); w.grid_len()];
    for (row, &di) in w.rows().iter().zip(d) {
        let inv = di.recip();
        for &(k, wk) in row {
            acc[k] = acc[k] + wk * inv;
        }
    }
    let n = T::from_count(w.n_obs());
    acc.into_iter().map(|a| T::one() - a / n).collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FenchelResiduals<T> {
    /// `min_j ∂φ/∂p_j` over the full grid.
    pub min_partial: T,
    /// `|Σ_j p_j ∂φ/∂p_j|`.
    pub complementarity: T,
}

impl<T: Real> FenchelResiduals<T> {
    pub fn satisfied(&self, tol: T) -> bool {
        self.min_partial >= -tol && self.complementarity <= tol
    }
}

pub fn fenchel_residuals<T: Real>(p: &[T], w: &WeightMatrix<T>) -> Result<FenchelResiduals<T>> {
    let g = phi_gradient(p, w)?;
    Ok(residuals_from_gradient(p, &g))
}

fn residuals_from_gradient<T: Real>(p: &[T], g: &[T]) -> FenchelResiduals<T> {
    let min_partial = g.iter().copied().fold(T::infinity(), T::min);
    let products: Vec<T> = p.iter().zip(g).map(|(&a, &b)| a * b).collect();
    FenchelResiduals {
        min_partial,
        complementarity: pairwise_sum(&products).abs(),
    }
}

/// Quadratic model of `φ` around `p⁰` over the whole grid:
/// `Q(p) = ½ pᵀ G p − bᵀ p` with
/// `G_kl = n⁻¹ Σ_i w_i(k) w_i(l) / d_i²` and `b_k = 2 n⁻¹ Σ_i w_i(k) / d_i − 1`.
#[derive(Debug, Clone)]
pub struct QuadraticModel<T> {
    gram: SymMatrix<T>,
    lin: Vec<T>,
    // Expansion point and `∇Q(p⁰) = ∇φ(p⁰)`, computed directly. Solving for
    // the step from `p⁰` keeps the rounding error proportional to the step.
    anchor: Vec<T>,
    grad: Vec<T>,
}

impl<T: Real> QuadraticModel<T> {
    pub fn new(w: &WeightMatrix<T>, p0: &[T]) -> Result<Self> {
        let d = denominators(p0, w)?;
        Ok(Self::from_denominators(w, p0, &d))
    }

    fn from_denominators(w: &WeightMatrix<T>, p0: &[T], d: &[T]) -> Self {
        let m = w.grid_len();
        let mut gram = vec![T::zero(); m * m];
        let mut lin = vec![T::zero(); m];
        for (row, &di) in w.rows().iter().zip(d) {
            let inv = di.recip();
            let inv2 = inv * inv;
            for (a, &(k, wk)) in row.iter().enumerate() {
                lin[k] = lin[k] + wk * inv;
                let scaled = wk * inv2;
                for &(l, wl) in &row[a..] {
                    gram[k * m + l] = gram[k * m + l] + scaled * wl;
                }
            }
        }
        let n = T::from_count(w.n_obs());
        let two = T::lit(2.0);
        let mut g = SymMatrix::zeros(m);
        for k in 0..m {
            for l in k..m {
                g.set_sym(k, l, gram[k * m + l] / n);
            }
        }
        let lin = lin.into_iter().map(|b| two * b / n - T::one()).collect();
        let grad = gradient_from_denominators(w, d);
        QuadraticModel {
            gram: g,
            lin,
            anchor: p0.to_vec(),
            grad,
        }
    }

    pub fn gram(&self) -> &SymMatrix<T> {
        &self.gram
    }

    pub fn lin(&self) -> &[T] {
        &self.lin
    }

    /// Unconstrained minimizer of `Q` restricted to `support`.
    pub fn solve_on(&self, support: &[usize]) -> Result<Vec<T>> {
        let g = self.gram.submatrix(support);
        let m = self.lin.len();
        let mut on = vec![false; m];
        for &k in support {
            on[k] = true;
        }
        // G_SS Δ = −∇Q(p⁰)_S + G_{S,S̄} p⁰_S̄
        let rhs: Vec<T> = support
            .iter()
            .map(|&k| {
                (0..m)
                    .filter(|&l| !on[l] && self.anchor[l] != T::zero())
                    .fold(-self.grad[k], |acc, l| {
                        acc + self.gram.get(k, l) * self.anchor[l]
                    })
            })
            .collect();
        match Cholesky::factor(&g) {
            Ok(chol) => {
                let delta = chol.solve(&rhs);
                Ok(support
                    .iter()
                    .zip(delta)
                    .map(|(&k, dk)| self.anchor[k] + dk)
                    .collect())
            }
            Err(_) => Err(Error::RankDeficient {
                support: support.iter().map(|&k| k as i64).collect(),
            }),
        }
    }

    /// `∂Q/∂p_k` at the dense point `p`.
    pub fn partial(&self, p: &[T], k: usize) -> T {
        let m = self.lin.len();
        (0..m).fold(self.grad[k], |acc, l| {
            acc + self.gram.get(k, l) * (p[l] - self.anchor[l])
        })
    }

    pub fn value(&self, p: &[T]) -> T {
        let gp = self.gram.mul_vec(p);
        let quad = p
            .iter()
            .zip(&gp)
            .fold(T::zero(), |acc, (&a, &b)| acc + a * b);
        let lin = p
            .iter()
            .zip(&self.lin)
            .fold(T::zero(), |acc, (&a, &b)| acc + a * b);
        T::lit(0.5) * quad - lin
    }
}

/// Minimizer of the quadratic subproblem on a fixed support, with the
/// denominators taken from the full vector `p0`. Entries may be negative.
pub fn solve_quadratic_subproblem<T: Real>(
    support: &[usize],
    p0: &[T],
    w: &WeightMatrix<T>,
) -> Result<Vec<T>> {
    if support.is_empty() {
        return Err(Error::InvalidConfig("subproblem support is empty".into()));
    }
    QuadraticModel::new(w, p0)?.solve_on(support)
}

/// Grid indices eligible as support points: the first of every group of
/// identical weight columns, skipping columns that are identically zero.
pub fn candidate_columns<T: Real>(w: &WeightMatrix<T>) -> Vec<bool> {
    let m = w.grid_len();
    let mut columns: Vec<Vec<(usize, u64)>> = vec![Vec::new(); m];
    for (i, row) in w.rows().iter().enumerate() {
        for &(k, wk) in row {
            if wk != T::zero() {
                columns[k].push((i, wk.to_f64().unwrap_or(f64::NAN).to_bits()));
            }
        }
    }
    let mut seen: HashMap<&[(usize, u64)], usize> = HashMap::new();
    columns
        .iter()
        .enumerate()
        .map(|(k, col)| !col.is_empty() && *seen.entry(col.as_slice()).or_insert(k) == k)
        .collect()
}

/// Bookkeeping from one inner pass.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct InnerStats {
    pub additions: usize,
    pub removals: usize,
    /// Times the most negative mass after an addition was the added point itself.
    pub removed_just_added: usize,
    pub hit_step_cap: bool,
}

#[derive(Debug, Clone)]
pub struct InnerSolution<T> {
    /// Dense nonnegative masses over the grid.
    pub p: Vec<T>,
    /// Grid indices carrying positive mass, in insertion order.
    pub support: Vec<usize>,
    pub stats: InnerStats,
}

/// Minimizes the quadratic model around `p0` over the nonnegative cone,
/// starting from `start_support`.
pub fn inner_support_loop<T: Real>(
    p0: &[T],
    w: &WeightMatrix<T>,
    start_support: &[usize],
    config: &SolverConfig<T>,
) -> Result<InnerSolution<T>> {
    let model = QuadraticModel::new(w, p0)?;
    let candidates = candidate_columns(w);
    inner_loop_with_model(&model, &candidates, start_support, config.inner_tol)
}

fn inner_loop_with_model<T: Real>(
    model: &QuadraticModel<T>,
    candidates: &[bool],
    start_support: &[usize],
    inner_tol: T,
) -> Result<InnerSolution<T>> {
    let m = candidates.len();
    let mut support: Vec<usize> = Vec::new();
    for &k in start_support {
        if candidates[k] && !support.contains(&k) {
            support.push(k);
        }
    }
    let mut blocked = vec![false; m];
    let mut stats = InnerStats::default();
    let mut x: Vec<T> = Vec::new();
    let mut just_added: Option<usize> = None;
    let max_steps = 20 * m + 100;
    let mut last_positive: Option<(Vec<usize>, Vec<T>)> = None;

    for _ in 0..max_steps {
        // Drop the most negative mass until the solution is positive.
        loop {
            if support.is_empty() {
                x.clear();
                break;
            }
            match model.solve_on(&support) {
                Ok(sol) => x = sol,
                Err(_) => {
                    let k = support.pop().expect("nonempty");
                    trace!("singular normal equations, blocking grid index {k}");
                    blocked[k] = true;
                    just_added = None;
                    continue;
                }
            }
            let worst = x
                .iter()
                .enumerate()
                .filter(|(_, v)| **v <= T::zero())
                .min_by(|a, b| a.1.partial_cmp(b.1).expect("finite masses"))
                .map(|(pos, _)| pos);
            match worst {
                Some(pos) => {
                    let k = support.remove(pos);
                    stats.removals += 1;
                    if just_added == Some(k) {
                        stats.removed_just_added += 1;
                        blocked[k] = true;
                    }
                    just_added = None;
                }
                None => break,
            }
        }
        last_positive = Some((support.clone(), x.clone()));

        let mut dense = vec![T::zero(); m];
        for (&k, &v) in support.iter().zip(&x) {
            dense[k] = v;
        }
        let mut best: Option<(usize, T)> = None;
        for k in 0..m {
            if !candidates[k] || blocked[k] || support.contains(&k) {
                continue;
            }
            let g = model.partial(&dense, k);
            if best.is_none_or(|(_, bg)| g < bg) {
                best = Some((k, g));
            }
        }
        match best {
            Some((k, g)) if g < -inner_tol => {
                support.push(k);
                just_added = Some(k);
                stats.additions += 1;
            }
            _ => {
                if support.is_empty() {
                    return Err(Error::RankDeficient {
                        support: Vec::new(),
                    });
                }
                return Ok(InnerSolution {
                    p: dense,
                    support,
                    stats,
                });
            }
        }
    }

    stats.hit_step_cap = true;
    debug!("inner loop hit its step cap; returning the last positive solution");
    let (support, x) = last_positive.expect("at least one pass");
    if support.is_empty() {
        return Err(Error::RankDeficient {
            support: Vec::new(),
        });
    }
    let mut dense = vec![T::zero(); m];
    for (&k, &v) in support.iter().zip(&x) {
        dense[k] = v;
    }
    Ok(InnerSolution {
        p: dense,
        support,
        stats,
    })
}

#[derive(Debug, Clone)]
pub struct ArmijoStep<T> {
    pub p: Vec<T>,
    pub alpha: T,
    pub value: T,
}

/// Backtracking along `α·target + (1 − α)·p0`, `α ∈ {1, shrink, shrink², …}`,
/// accepting the first `α` with
/// `φ(p') ≤ φ(p0) + c·α·⟨∇φ(p0), target − p0⟩`.
pub fn armijo_search<T: Real>(
    p0: &[T],
    target: &[T],
    w: &WeightMatrix<T>,
    config: &SolverConfig<T>,
) -> Result<ArmijoStep<T>> {
    let d0 = denominators(p0, w)?;
    let phi0 = phi_from_denominators(p0, &d0)?;
    let grad = gradient_from_denominators(w, &d0);
    armijo_with(p0, target, w, config, phi0, &grad, &d0)
}

fn armijo_with<T: Real>(
    p0: &[T],
    target: &[T],
    w: &WeightMatrix<T>,
    config: &SolverConfig<T>,
    phi0: T,
    grad: &[T],
    d0: &[T],
) -> Result<ArmijoStep<T>> {
    if p0 == target {
        return Ok(ArmijoStep {
            p: p0.to_vec(),
            alpha: T::one(),
            value: phi0,
        });
    }
    let dir: Vec<T> = target.iter().zip(p0).map(|(&t, &q)| t - q).collect();
    let terms: Vec<T> = grad.iter().zip(&dir).map(|(&g, &v)| g * v).collect();
    let slope = pairwise_sum(&terms);
    let mass_change = pairwise_sum(&dir);
    // Relative change of each likelihood term along the direction. The
    // decrease is accumulated with log1p so that steps near the optimum are
    // not lost to cancellation in φ(p') − φ(p0).
    let rel: Vec<T> = w
        .row_dots(&dir)
        .iter()
        .zip(d0)
        .map(|(&dd, &d)| dd / d)
        .collect();
    let n = T::from_count(d0.len());
    let min_alpha = T::lit(1e-15);
    let mut alpha = T::one();
    while alpha > min_alpha {
        if rel.iter().all(|&r| T::one() + alpha * r > T::zero()) {
            let logs: Vec<T> = rel.iter().map(|&r| (alpha * r).ln_1p()).collect();
            let change = -pairwise_sum(&logs) / n + alpha * mass_change;
            if change <= config.armijo_c * alpha * slope {
                let p: Vec<T> = if alpha == T::one() {
                    target.to_vec()
                } else {
                    target
                        .iter()
                        .zip(p0)
                        .map(|(&t, &q)| alpha * t + (T::one() - alpha) * q)
                        .collect()
                };
                return Ok(ArmijoStep {
                    p,
                    alpha,
                    value: phi0 + change,
                });
            }
        }
        alpha = alpha * config.armijo_shrink;
    }
    Err(Error::LineSearchFailure)
}

#[derive(Debug, Clone)]
pub struct NpmleFit<T> {
    pub mass: MassFunction<T>,
    /// Dense masses over the grid at termination.
    pub dense: Vec<T>,
    pub trace: IterationTrace,
    pub residuals: FenchelResiduals<T>,
    pub criterion: T,
}

/// Fits the NPMLE of a validated dataset on `grid`.
pub fn fit_npmle<T: Real>(
    data: &Dataset,
    grid: &Grid,
    config: &SolverConfig<T>,
) -> Result<NpmleFit<T>> {
    config.validate()?;
    let w = build_weight_matrix(data, grid)?;
    let start = match config.initial_point {
        Some(day) => grid.index_of(day).ok_or_else(|| {
            Error::InvalidConfig(format!("initial point {day} is not on the grid"))
        })?,
        None => grid.nearest_index(median_symptom_day(data)),
    };
    fit_npmle_weights(&w, grid, config, start)
}

fn median_symptom_day(data: &Dataset) -> f64 {
    let mut days: Vec<i64> = match data {
        Dataset::Single(r) => r.iter().map(|o| o.s).collect(),
        Dataset::Double(r) => r.iter().map(|o| (o.s_l + o.s_r + 1) / 2).collect(),
    };
    days.sort_unstable();
    let n = days.len();
    if n % 2 == 1 {
        days[n / 2] as f64
    } else {
        0.5 * (days[n / 2 - 1] + days[n / 2]) as f64
    }
}

/// Support reduction on a prebuilt weight matrix, starting from the single
/// support point at grid index `start`.
pub fn fit_npmle_weights<T: Real>(
    w: &WeightMatrix<T>,
    grid: &Grid,
    config: &SolverConfig<T>,
    start: usize,
) -> Result<NpmleFit<T>> {
    config.validate()?;
    let m = grid.len();
    if w.grid_len() != m {
        return Err(Error::InvalidConfig(
            "weight matrix and grid disagree".into(),
        ));
    }
    let candidates = candidate_columns(w);
    let mut p0 = vec![T::one() / T::from_count(m); m];
    let mut support = vec![start];
    let mut trace = IterationTrace::default();
    // φ is evaluated once and then carried along by the accepted decrements,
    // which are accurate far below the rounding unit of φ itself.
    let mut phi0 = phi(&p0, w)?;

    for iter in 1..=config.max_outer {
        let d = denominators(&p0, w)?;
        let grad0 = gradient_from_denominators(w, &d);
        let model = QuadraticModel::from_denominators(w, &p0, &d);
        let inner = inner_loop_with_model(&model, &candidates, &support, config.inner_tol)?;

        let step = match armijo_with(&p0, &inner.p, w, config, phi0, &grad0, &d) {
            Ok(step) => step,
            Err(Error::LineSearchFailure) => {
                // Nothing left to gain at working precision: certify whichever
                // of the current iterate and the target passes.
                let here = residuals_from_gradient(&p0, &grad0);
                if here.satisfied(config.tol) {
                    return finish(grid, p0, trace, here, phi0);
                }
                let there = fenchel_residuals(&inner.p, w)?;
                if there.satisfied(config.tol) {
                    let value = phi(&inner.p, w)?;
                    return finish(grid, inner.p, trace, there, value);
                }
                return Err(Error::LineSearchFailure);
            }
            Err(e) => return Err(e),
        };
        p0 = step.p;
        support = inner.support;
        phi0 = step.value;

        let grad = phi_gradient(&p0, w)?;
        let residuals = residuals_from_gradient(&p0, &grad);
        trace.rows.push(TraceRow {
            iter,
            criterion: step.value.to_f64().unwrap_or(f64::NAN),
            min_grad: residuals.min_partial.to_f64().unwrap_or(f64::NAN),
            complementarity: residuals.complementarity.to_f64().unwrap_or(f64::NAN),
            support_size: p0.iter().filter(|&&v| v > T::zero()).count(),
            step: step.alpha.to_f64().unwrap_or(f64::NAN),
        });
        debug!(
            "outer {iter}: phi={} min_grad={} compl={} alpha={}",
            step.value, residuals.min_partial, residuals.complementarity, step.alpha
        );
        if residuals.satisfied(config.tol) {
            return finish(grid, p0, trace, residuals, step.value);
        }
    }
    Err(Error::NonConvergence {
        trace: Box::new(trace),
    })
}

fn finish<T: Real>(
    grid: &Grid,
    dense: Vec<T>,
    trace: IterationTrace,
    residuals: FenchelResiduals<T>,
    criterion: T,
) -> Result<NpmleFit<T>> {
    let mass = MassFunction::from_grid_vector(grid, &dense)?;
    Ok(NpmleFit {
        mass,
        dense,
        trace,
        residuals,
        criterion,
    })
}
