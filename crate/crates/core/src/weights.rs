//! Likelihood weights linking grid masses to observations.
//!
//! Singly censored records contribute `F̄(s) − F̄(s − e)`, i.e. indicator
//! weights on `(s − e, s]`. Doubly censored records contribute the integral
//! `∫_{(s_l, s_r]} {F(u) − F(u − e)} du`, which integration by parts turns
//! into a sum of masses weighted by the piecewise linear kernel [`psi_weight`].

use crate::error::{Error, Result};
use crate::model::{Dataset, Grid};
use crate::scalar::Real;

/// `1` iff `s − e < j ≤ s`.
#[inline]
pub fn indicator_weight(j: i64, e: i64, s: i64) -> u8 {
    u8::from(s - e < j && j <= s)
}

/// Lebesgue weight of an atom at `t` in `∫_{(s_l, s_r]} {F(u) − F(u − e)} du`.
///
/// For `t ≥ 1` this is the four-term kernel with indicators on `(0, bound]`.
/// An atom at `t = 0` (the first day's mass in the doubly censored model)
/// gets the same integral weight, `Σ ± (bound)₊`.
pub fn psi_weight<T: Real>(e: i64, s_l: i64, s_r: i64, t: i64) -> T {
    let term = |bound: i64| if t >= 0 && t <= bound { bound - t } else { 0 };
    let w = term(s_r) - term(s_l) - term(s_r - e) + term(s_l - e);
    T::from_i64(w).expect("small integer")
}

/// Sparse per-observation weights over grid indices.
///
/// Row `i` lists `(k, w_i(grid[k]))` for the grid indices `k` with a nonzero
/// weight, in increasing `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightMatrix<T> {
    grid_len: usize,
    rows: Vec<Vec<(usize, T)>>,
}

impl<T: Real> WeightMatrix<T> {
    /// Builds a matrix from sparse rows, rejecting rows without positive weight.
    pub fn from_rows(grid_len: usize, rows: Vec<Vec<(usize, T)>>) -> Result<Self> {
        for (index, row) in rows.iter().enumerate() {
            if row.iter().any(|&(k, _)| k >= grid_len) {
                return Err(Error::InvalidConfig(format!(
                    "row {index} indexes past the grid"
                )));
            }
            if !row.iter().any(|&(_, w)| w > T::zero()) {
                return Err(Error::InfeasibleRecord { index });
            }
        }
        Ok(WeightMatrix { grid_len, rows })
    }

    pub fn n_obs(&self) -> usize {
        self.rows.len()
    }

    pub fn grid_len(&self) -> usize {
        self.grid_len
    }

    pub fn rows(&self) -> &[Vec<(usize, T)>] {
        &self.rows
    }

    pub fn row(&self, i: usize) -> &[(usize, T)] {
        &self.rows[i]
    }

    /// Weight of observation `i` at grid index `k`.
    pub fn get(&self, i: usize, k: usize) -> T {
        let row = &self.rows[i];
        match row.binary_search_by_key(&k, |&(j, _)| j) {
            Ok(pos) => row[pos].1,
            Err(_) => T::zero(),
        }
    }

    /// `Σ_k p_k w_i(k)` for every observation.
    pub fn row_dots(&self, p: &[T]) -> Vec<T> {
        self.rows
            .iter()
            .map(|row| row.iter().fold(T::zero(), |acc, &(k, w)| acc + w * p[k]))
            .collect()
    }
}

/// Weight matrix of a validated dataset on `grid`.
pub fn build_weight_matrix<T: Real>(data: &Dataset, grid: &Grid) -> Result<WeightMatrix<T>> {
    let points = grid.points();
    let rows = match data {
        Dataset::Single(records) => records
            .iter()
            .map(|o| {
                points
                    .iter()
                    .enumerate()
                    .filter(|&(_, &j)| indicator_weight(j, o.e, o.s) == 1)
                    .map(|(k, _)| (k, T::one()))
                    .collect()
            })
            .collect(),
        Dataset::Double(records) => records
            .iter()
            .map(|o| {
                points
                    .iter()
                    .enumerate()
                    .filter(|&(_, &t)| t < o.s_r)
                    .filter_map(|(k, &t)| {
                        let w: T = psi_weight(o.e, o.s_l, o.s_r, t);
                        (w > T::zero()).then_some((k, w))
                    })
                    .collect()
            })
            .collect(),
    };
    WeightMatrix::from_rows(grid.len(), rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{DoublyObs, SinglyObs};
    use proptest::prelude::*;

    #[test]
    fn indicator_examples() {
        assert_eq!(indicator_weight(3, 5, 6), 1);
        assert_eq!(indicator_weight(1, 5, 6), 0);
        assert_eq!(indicator_weight(7, 5, 6), 0);
    }

    #[test]
    fn psi_examples() {
        assert_eq!(psi_weight::<f64>(10, 2, 5, 1), 3.0);
        assert_eq!(psi_weight::<f64>(10, 2, 5, 4), 1.0);
        assert_eq!(psi_weight::<f64>(10, 2, 5, 5), 0.0);
        assert_eq!(psi_weight::<f64>(1, 4, 5, 3), 0.0);
        // Atom at zero: the whole window when it ends before e.
        assert_eq!(psi_weight::<f64>(10, 2, 5, 0), 3.0);
        assert_eq!(psi_weight::<f64>(1, 0, 1, 0), 1.0);
        assert_eq!(psi_weight::<f64>(2, 3, 5, 0), 0.0);
    }

    #[test]
    fn first_day_window_is_feasible_with_atom_at_zero() {
        let data = Dataset::Double(vec![DoublyObs {
            e: 3,
            s_l: 0,
            s_r: 1,
        }]);
        let grid = Grid::range(0, 4).unwrap();
        let w = build_weight_matrix::<f64>(&data, &grid).unwrap();
        assert_eq!(w.row(0), &[(0, 1.0)]);
    }

    #[test]
    fn singly_rows() {
        let grid = Grid::contiguous(5).unwrap();
        let data = Dataset::Single(vec![SinglyObs { e: 2, s: 3 }, SinglyObs { e: 1, s: 1 }]);
        let w = build_weight_matrix::<f64>(&data, &grid).unwrap();
        assert_eq!(w.row(0), &[(1, 1.0), (2, 1.0)]);
        assert_eq!(w.row(1), &[(0, 1.0)]);
    }

    #[test]
    fn doubly_row() {
        let grid = Grid::contiguous(5).unwrap();
        let data = Dataset::Double(vec![DoublyObs {
            e: 10,
            s_l: 2,
            s_r: 5,
        }]);
        let w = build_weight_matrix::<f64>(&data, &grid).unwrap();
        assert_eq!(w.row(0), &[(0, 3.0), (1, 3.0), (2, 2.0), (3, 1.0)]);
    }

    #[test]
    fn record_outside_grid_is_infeasible() {
        let grid = Grid::contiguous(3).unwrap();
        let data = Dataset::Single(vec![SinglyObs { e: 1, s: 2 }, SinglyObs { e: 1, s: 9 }]);
        assert!(matches!(
            build_weight_matrix::<f64>(&data, &grid),
            Err(Error::InfeasibleRecord { index: 1 })
        ));
    }

    /// `∫_{s_l}^{s_r} {F(u) − F(u − e)} du` for the right-continuous step
    /// function with atoms `p[t-1]` at `t = 1, 2, …`, split at the integers.
    fn window_integral(p: &[f64], first: i64, e: i64, s_l: i64, s_r: i64) -> f64 {
        let step_cdf = |x: i64| -> f64 {
            p.iter()
                .enumerate()
                .filter(|(k, _)| (*k as i64 + first) <= x)
                .map(|(_, v)| v)
                .sum()
        };
        // On (k-1, k) the step function equals its value at k-1.
        (s_l + 1..=s_r)
            .map(|k| step_cdf(k - 1) - step_cdf(k - 1 - e))
            .sum()
    }

    proptest! {
        #[test]
        fn psi_matches_piecewise_integral(
            e in 1i64..15,
            s_l in 0i64..20,
            width in 1i64..10,
            raw in prop::collection::vec(0.0f64..1.0, 1..35),
            first in 0i64..2,
        ) {
            let s_r = s_l + width;
            let total: f64 = raw.iter().sum();
            prop_assume!(total > 1e-9);
            let p: Vec<f64> = raw.iter().map(|x| x / total).collect();
            let via_psi: f64 = p
                .iter()
                .enumerate()
                .map(|(k, &pk)| psi_weight::<f64>(e, s_l, s_r, k as i64 + first) * pk)
                .sum();
            prop_assert!((via_psi - window_integral(&p, first, e, s_l, s_r)).abs() <= 1e-12);
        }

        #[test]
        fn psi_bounds_and_vanishing(e in 1i64..15, s_l in 0i64..20, width in 1i64..10) {
            let s_r = s_l + width;
            for t in 0..=50 {
                let w: f64 = psi_weight(e, s_l, s_r, t);
                prop_assert!(w >= 0.0);
                prop_assert!(w <= (s_r - s_l) as f64);
                if t >= s_r {
                    prop_assert_eq!(w, 0.0);
                }
                if t <= s_l - e {
                    // Both window ends lie past t + e: the kernel cancels.
                    prop_assert_eq!(w, 0.0);
                }
            }
        }

        #[test]
        fn singly_rows_are_contiguous_blocks(
            recs in prop::collection::vec((1i64..10, 1i64..25), 1..20)
        ) {
            let data = Dataset::Single(recs.iter().map(|&(e, s)| SinglyObs { e, s }).collect());
            let grid = Grid::contiguous(25).unwrap();
            let w = build_weight_matrix::<f64>(&data, &grid).unwrap();
            for row in w.rows() {
                prop_assert!(row.iter().all(|&(_, v)| v == 1.0));
                prop_assert!(row.windows(2).all(|p| p[1].0 == p[0].0 + 1));
            }
        }
    }
}
