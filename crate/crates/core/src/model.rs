//! Observations, grids and discrete distributions on the integer days.

use log::debug;

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Exposure length and symptom day, both in whole days.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SinglyObs {
    pub e: i64,
    pub s: i64,
}

/// Exposure length and a symptom window `(s_l, s_r]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct DoublyObs {
    pub e: i64,
    pub s_l: i64,
    pub s_r: i64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Mode {
    Single,
    Double,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Single => "single",
            Mode::Double => "double",
        }
    }

    /// Shift between a fitted atom location and the day whose average it estimates.
    ///
    /// In the doubly censored model the kernel integrates a step function with
    /// atoms at the integers `0, 1, …`, so the day average over `[i-1, i]` is
    /// the step function's value at `i - 1`.
    pub fn day_offset(self) -> i64 {
        match self {
            Mode::Single => 0,
            Mode::Double => 1,
        }
    }
}

impl std::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "single" | "singly" => Ok(Mode::Single),
            "double" | "doubly" => Ok(Mode::Double),
            other => Err(Error::InvalidConfig(format!("unknown mode `{other}`"))),
        }
    }
}

/// A homogeneous collection of censored records.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Dataset {
    Single(Vec<SinglyObs>),
    Double(Vec<DoublyObs>),
}

impl Dataset {
    pub fn mode(&self) -> Mode {
        match self {
            Dataset::Single(_) => Mode::Single,
            Dataset::Double(_) => Mode::Double,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            Dataset::Single(r) => r.len(),
            Dataset::Double(r) => r.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn max_exposure(&self) -> i64 {
        match self {
            Dataset::Single(r) => r.iter().map(|o| o.e).max().unwrap_or(0),
            Dataset::Double(r) => r.iter().map(|o| o.e).max().unwrap_or(0),
        }
    }

    /// Largest symptom day (`s`, or `s_r` in doubly mode).
    pub fn max_symptom(&self) -> i64 {
        match self {
            Dataset::Single(r) => r.iter().map(|o| o.s).max().unwrap_or(0),
            Dataset::Double(r) => r.iter().map(|o| o.s_r).max().unwrap_or(0),
        }
    }

    /// Builds a dataset of the same mode from the records at `indices`.
    pub fn select(&self, indices: &[usize]) -> Dataset {
        match self {
            Dataset::Single(r) => Dataset::Single(indices.iter().map(|&i| r[i]).collect()),
            Dataset::Double(r) => Dataset::Double(indices.iter().map(|&i| r[i]).collect()),
        }
    }
}

/// Checks record invariants and applies the usual normalizations.
///
/// Singly censored records with `s < e` get `e := s`, so the likelihood
/// interval becomes `(0, s]`. Doubly censored records with `s_l < 0` are
/// clipped to `s_l = 0`.
pub fn validate_dataset(raw: Dataset) -> Result<Dataset> {
    if raw.is_empty() {
        return Err(Error::EmptyDataset);
    }
    match raw {
        Dataset::Single(records) => {
            let mut out = Vec::with_capacity(records.len());
            for (index, mut obs) in records.into_iter().enumerate() {
                if obs.e < 1 {
                    return Err(invalid(index, format!("exposure e={} must be >= 1", obs.e)));
                }
                if obs.s < 1 {
                    return Err(invalid(
                        index,
                        format!("symptom day s={} must be >= 1", obs.s),
                    ));
                }
                if obs.s < obs.e {
                    debug!(
                        "record {index}: s={} < e={}, exposure clamped to s",
                        obs.s, obs.e
                    );
                    obs.e = obs.s;
                }
                out.push(obs);
            }
            Ok(Dataset::Single(out))
        }
        Dataset::Double(records) => {
            let mut out = Vec::with_capacity(records.len());
            for (index, mut obs) in records.into_iter().enumerate() {
                if obs.e < 1 {
                    return Err(invalid(index, format!("exposure e={} must be >= 1", obs.e)));
                }
                if obs.s_r < 1 {
                    return Err(invalid(
                        index,
                        format!("right bound s_r={} must be >= 1", obs.s_r),
                    ));
                }
                if obs.s_l >= obs.s_r {
                    return Err(invalid(
                        index,
                        format!(
                            "window bounds s_l={} s_r={} need s_l < s_r",
                            obs.s_l, obs.s_r
                        ),
                    ));
                }
                if obs.s_l < 0 {
                    debug!("record {index}: s_l={} clipped to 0", obs.s_l);
                    obs.s_l = 0;
                }
                out.push(obs);
            }
            Ok(Dataset::Double(out))
        }
    }
}

fn invalid(index: usize, reason: String) -> Error {
    Error::InvalidRecord { index, reason }
}

/// Candidate mass points `1..=M`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Grid {
    points: Vec<i64>,
    pub m1: Option<i64>,
    pub m2: Option<i64>,
}

impl Grid {
    /// The contiguous grid `1..=m`.
    pub fn contiguous(m: i64) -> Result<Self> {
        if m < 1 {
            return Err(Error::InvalidConfig(format!("grid size {m} must be >= 1")));
        }
        Ok(Grid {
            points: (1..=m).collect(),
            m1: None,
            m2: None,
        })
    }

    /// The contiguous grid `lo..=hi`, `lo ≥ 0`.
    pub fn range(lo: i64, hi: i64) -> Result<Self> {
        if lo < 0 || hi < lo {
            return Err(Error::InvalidConfig(format!(
                "grid range {lo}..={hi} is empty or negative"
            )));
        }
        Ok(Grid {
            points: (lo..=hi).collect(),
            m1: None,
            m2: None,
        })
    }

    pub fn from_points(points: Vec<i64>) -> Result<Self> {
        if points.is_empty() || points[0] < 0 || points.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidConfig(
                "grid points must be nonnegative and strictly increasing".into(),
            ));
        }
        Ok(Grid {
            points,
            m1: None,
            m2: None,
        })
    }

    pub fn first(&self) -> i64 {
        self.points[0]
    }

    pub fn points(&self) -> &[i64] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn last(&self) -> i64 {
        *self.points.last().expect("grid is nonempty")
    }

    pub fn index_of(&self, day: i64) -> Option<usize> {
        self.points.binary_search(&day).ok()
    }

    /// Index of the grid point closest to `day` (ties go to the smaller point).
    pub fn nearest_index(&self, day: f64) -> usize {
        let mut best = 0;
        for (k, &p) in self.points.iter().enumerate() {
            if (p as f64 - day).abs() < (self.points[best] as f64 - day).abs() {
                best = k;
            }
        }
        best
    }
}

/// Grid of candidate support points for a validated dataset.
///
/// Without `m1` the grid is `1..=max s` (`max s_r` in doubly mode); with `m1`
/// it is `1..=m1 + max e`. Doubly censored grids also hold the atom at `0`,
/// which carries the first day's mass.
pub fn candidate_grid(data: &Dataset, m1: Option<i64>) -> Result<Grid> {
    let upper = match m1 {
        Some(m1) => m1 + data.max_exposure(),
        None => data.max_symptom(),
    };
    let lower = match data.mode() {
        Mode::Single => 1,
        Mode::Double => 0,
    };
    let mut grid = Grid::range(lower, upper)?;
    grid.m1 = m1;
    grid.m2 = Some(data.max_exposure());
    Ok(grid)
}

/// Point masses on integer days.
#[derive(Debug, Clone, PartialEq)]
pub struct MassFunction<T> {
    support: Vec<i64>,
    probs: Vec<T>,
}

impl<T: Real> MassFunction<T> {
    /// Builds a mass function, dropping zero-mass points and renormalizing
    /// when the total drifts from one by more than 1e-12.
    pub fn new(support: Vec<i64>, probs: Vec<T>) -> Result<Self> {
        if support.len() != probs.len() {
            return Err(Error::InvalidConfig(
                "support and probs differ in length".into(),
            ));
        }
        if support.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidConfig(
                "support must be strictly increasing".into(),
            ));
        }
        if probs.iter().any(|p| !(*p >= T::zero()) || !p.is_finite()) {
            return Err(Error::InvalidConfig(
                "probabilities must be finite and nonnegative".into(),
            ));
        }
        let (support, mut probs): (Vec<i64>, Vec<T>) = support
            .into_iter()
            .zip(probs)
            .filter(|(_, p)| *p > T::zero())
            .unzip();
        let total: T = probs.iter().copied().sum();
        if total <= T::zero() {
            return Err(Error::InvalidConfig(
                "mass function has no positive mass".into(),
            ));
        }
        let drift_tol = T::lit(1e-12).max(T::epsilon() * T::lit(8.0));
        if (total - T::one()).abs() > drift_tol {
            for p in &mut probs {
                *p = *p / total;
            }
        }
        Ok(MassFunction { support, probs })
    }

    /// Mass function from a dense vector over the grid points.
    pub fn from_grid_vector(grid: &Grid, p: &[T]) -> Result<Self> {
        if p.len() != grid.len() {
            return Err(Error::InvalidConfig(
                "mass vector length differs from grid".into(),
            ));
        }
        Self::new(grid.points().to_vec(), p.to_vec())
    }

    pub fn support(&self) -> &[i64] {
        &self.support
    }

    pub fn probs(&self) -> &[T] {
        &self.probs
    }

    pub fn mass_at(&self, day: i64) -> T {
        match self.support.binary_search(&day) {
            Ok(k) => self.probs[k],
            Err(_) => T::zero(),
        }
    }

    /// Dense vector of masses over the grid points.
    pub fn to_grid_vector(&self, grid: &Grid) -> Vec<T> {
        grid.points().iter().map(|&d| self.mass_at(d)).collect()
    }

    /// Cumulative mass at or below `day`.
    pub fn cdf(&self, day: i64) -> T {
        self.support
            .iter()
            .zip(&self.probs)
            .take_while(|(&s, _)| s <= day)
            .map(|(_, &p)| p)
            .sum()
    }
}

/// Day-averaged distribution function `F̄(1), …, F̄(M)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DayCdf<T> {
    values: Vec<T>,
}

impl<T: Real> DayCdf<T> {
    pub fn from_values(values: Vec<T>) -> Self {
        DayCdf { values }
    }

    /// Values for days `1..=len`.
    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// `F̄(day)`: zero before day 1, the last value past the end.
    pub fn at(&self, day: i64) -> T {
        if day < 1 {
            T::zero()
        } else {
            let k = (day as usize).min(self.values.len());
            self.values[k - 1]
        }
    }

    /// Day-averaged estimate from a fit in the given mode (see [`Mode::day_offset`]).
    pub fn for_mode(p: &MassFunction<T>, grid: &Grid, mode: Mode) -> Self {
        let offset = mode.day_offset();
        let values = (1..=grid.last()).map(|day| p.cdf(day - offset)).collect();
        DayCdf { values }
    }
}

/// Partial sums of `p` over days `1..=M`, with `M` the last grid point.
pub fn cdf_from_mass<T: Real>(p: &MassFunction<T>, grid: &Grid) -> DayCdf<T> {
    DayCdf::for_mode(p, grid, Mode::Single)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn single(recs: &[(i64, i64)]) -> Dataset {
        Dataset::Single(recs.iter().map(|&(e, s)| SinglyObs { e, s }).collect())
    }

    #[test]
    fn validate_keeps_valid_record() {
        let out = validate_dataset(single(&[(5, 8)])).unwrap();
        assert_eq!(out, single(&[(5, 8)]));
    }

    #[test]
    fn validate_clamps_exposure_when_symptom_precedes_it() {
        let out = validate_dataset(single(&[(5, 2)])).unwrap();
        assert_eq!(out, single(&[(2, 2)]));
    }

    #[test]
    fn validate_clips_negative_left_bound() {
        let raw = Dataset::Double(vec![DoublyObs {
            e: 3,
            s_l: -1,
            s_r: 2,
        }]);
        let out = validate_dataset(raw).unwrap();
        assert_eq!(
            out,
            Dataset::Double(vec![DoublyObs {
                e: 3,
                s_l: 0,
                s_r: 2
            }])
        );
    }

    #[test]
    fn validate_rejects_bad_input() {
        assert!(matches!(
            validate_dataset(single(&[])),
            Err(Error::EmptyDataset)
        ));
        assert!(matches!(
            validate_dataset(single(&[(2, 3), (0, 4)])),
            Err(Error::InvalidRecord { index: 1, .. })
        ));
        assert!(matches!(
            validate_dataset(single(&[(2, 0)])),
            Err(Error::InvalidRecord { index: 0, .. })
        ));
        let bad = Dataset::Double(vec![DoublyObs {
            e: 1,
            s_l: 4,
            s_r: 4,
        }]);
        assert!(matches!(
            validate_dataset(bad),
            Err(Error::InvalidRecord { index: 0, .. })
        ));
    }

    #[test]
    fn cdf_of_single_atom() {
        let grid = Grid::contiguous(5).unwrap();
        let p = MassFunction::new(vec![3], vec![1.0]).unwrap();
        assert_eq!(
            cdf_from_mass(&p, &grid).values(),
            &[0.0, 0.0, 1.0, 1.0, 1.0]
        );
    }

    #[test]
    fn cdf_partial_sums() {
        let grid = Grid::contiguous(10).unwrap();
        let p = MassFunction::new(vec![1, 2], vec![0.25, 0.75]).unwrap();
        let f = cdf_from_mass(&p, &grid);
        assert_eq!(f.at(1), 0.25);
        assert_eq!(f.at(2), 1.0);

        let p = MassFunction::<f64>::new(vec![2, 5, 9], vec![0.2, 0.5, 0.3]).unwrap();
        let f = cdf_from_mass(&p, &grid);
        assert!((f.at(4) - 0.2).abs() < 1e-15);
        assert!((f.at(5) - 0.7).abs() < 1e-14);
        assert!((f.at(9) - 1.0).abs() < 1e-15);
        assert!((f.at(10) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn doubly_day_cdf_is_shifted_step_function() {
        let grid = Grid::contiguous(6).unwrap();
        let p = MassFunction::new(vec![2, 4], vec![0.5, 0.5]).unwrap();
        let f = DayCdf::for_mode(&p, &grid, Mode::Double);
        assert_eq!(f.values(), &[0.0, 0.0, 0.5, 0.5, 1.0, 1.0]);
        let grid = Grid::range(0, 3).unwrap();
        let p = MassFunction::new(vec![0, 2], vec![0.25, 0.75]).unwrap();
        let f = DayCdf::for_mode(&p, &grid, Mode::Double);
        assert_eq!(f.values(), &[0.25, 0.25, 1.0]);
    }

    #[test]
    fn candidate_grid_rules() {
        let data = single(&[(3, 30), (2, 12), (5, 7)]);
        assert_eq!(
            candidate_grid(&data, None).unwrap().points(),
            (1..=30).collect::<Vec<_>>()
        );
        assert_eq!(
            candidate_grid(&single(&[(1, 1)]), None).unwrap().points(),
            &[1]
        );
        let dbl = Dataset::Double(vec![
            DoublyObs {
                e: 2,
                s_l: 3,
                s_r: 12,
            },
            DoublyObs {
                e: 4,
                s_l: 0,
                s_r: 5,
            },
        ]);
        let g = candidate_grid(&dbl, None).unwrap();
        assert_eq!((g.first(), g.last()), (0, 12));
        assert_eq!(candidate_grid(&data, Some(15)).unwrap().last(), 20);
    }

    #[test]
    fn mass_function_prunes_and_renormalizes() {
        let p = MassFunction::new(vec![1, 2, 3], vec![0.5, 0.0, 0.25]).unwrap();
        assert_eq!(p.support(), &[1, 3]);
        assert!((p.probs().iter().sum::<f64>() - 1.0).abs() < 1e-15);
        assert!(MassFunction::new(vec![2, 1], vec![0.5, 0.5]).is_err());
        assert!(MassFunction::new(vec![1], vec![-0.5f64]).is_err());
    }

    fn arb_single() -> impl Strategy<Value = Dataset> {
        prop::collection::vec((1i64..20, 1i64..40), 1..30).prop_map(|v| single(&v))
    }

    proptest! {
        #[test]
        fn validate_is_idempotent(data in arb_single()) {
            let once = validate_dataset(data).unwrap();
            let twice = validate_dataset(once.clone()).unwrap();
            prop_assert_eq!(once, twice);
        }

        #[test]
        fn cdf_ends_at_one_and_is_monotone_in_added_mass(
            masses in prop::collection::vec(0.0f64..1.0, 1..20),
            bump_at in 0usize..20,
            bump in 0.0f64..1.0,
        ) {
            prop_assume!(masses.iter().sum::<f64>() > 1e-6);
            let m = masses.len() as i64;
            let grid = Grid::contiguous(m).unwrap();
            let p = MassFunction::new((1..=m).collect(), masses.clone()).unwrap();
            let f = cdf_from_mass(&p, &grid);
            prop_assert!((f.at(m) - 1.0).abs() < 1e-12);
            prop_assert!(f.values().windows(2).all(|w| w[0] <= w[1] + 1e-15));

            // Unnormalized partial sums never decrease when mass is added.
            let mut bumped = masses.clone();
            let k = bump_at % masses.len();
            bumped[k] += bump;
            let mut acc_a = 0.0;
            let mut acc_b = 0.0;
            for (a, b) in masses.iter().zip(&bumped) {
                acc_a += a;
                acc_b += b;
                prop_assert!(acc_b >= acc_a);
            }
        }
    }
}
