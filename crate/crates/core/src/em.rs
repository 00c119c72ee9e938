//! Self-consistency (EM) iteration, kept as an independent reference for
//! the support reduction solver. It is slow and not meant for production
//! fits.

use log::warn;

use crate::error::Result;
use crate::model::{Dataset, Grid, MassFunction};
use crate::scalar::Real;
use crate::solver::phi_gradient;
use crate::weights::{build_weight_matrix, WeightMatrix};

/// Masses below this are set to zero and stay there.
const FREEZE: f64 = 1e-15;

/// `p'_j = p_j (1 − ∂φ/∂p_j)`.
pub fn em_step<T: Real>(p: &[T], w: &WeightMatrix<T>) -> Result<Vec<T>> {
    let g = phi_gradient(p, w)?;
    Ok(step_from_gradient(p, &g))
}

fn step_from_gradient<T: Real>(p: &[T], g: &[T]) -> Vec<T> {
    let freeze = T::lit(FREEZE);
    let mut next: Vec<T> = p
        .iter()
        .zip(g)
        .map(|(&pj, &gj)| {
            let v = pj * (T::one() - gj);
            if v < freeze {
                T::zero()
            } else {
                v
            }
        })
        .collect();
    let total: T = next.iter().copied().sum();
    for v in &mut next {
        *v = *v / total;
    }
    next
}

#[derive(Debug, Clone)]
pub struct EmFit<T> {
    pub mass: MassFunction<T>,
    pub dense: Vec<T>,
    pub iterations: usize,
    pub converged: bool,
}

/// Runs EM from the uniform distribution on the grid until every partial
/// derivative is `≥ −tol` and those on the surviving support are within
/// `tol` of zero, or `max_iter` steps have been taken.
pub fn fit_em<T: Real>(data: &Dataset, grid: &Grid, tol: T, max_iter: usize) -> Result<EmFit<T>> {
    let w = build_weight_matrix(data, grid)?;
    fit_em_weights(&w, grid, tol, max_iter)
}

pub fn fit_em_weights<T: Real>(
    w: &WeightMatrix<T>,
    grid: &Grid,
    tol: T,
    max_iter: usize,
) -> Result<EmFit<T>> {
    let m = grid.len();
    let mut p = vec![T::one() / T::from_count(m); m];
    let mut iterations = 0;
    let mut converged = false;
    loop {
        let g = phi_gradient(&p, w)?;
        let min_all = g.iter().copied().fold(T::infinity(), T::min);
        let max_on_support = p
            .iter()
            .zip(&g)
            .filter(|(&pj, _)| pj > T::zero())
            .fold(T::zero(), |acc, (_, &gj)| acc.max(gj.abs()));
        if min_all >= -tol && max_on_support <= tol {
            converged = true;
            break;
        }
        if iterations >= max_iter {
            warn!("EM stopped after {max_iter} iterations without meeting tolerance");
            break;
        }
        p = step_from_gradient(&p, &g);
        iterations += 1;
    }
    let mass = MassFunction::from_grid_vector(grid, &p)?;
    Ok(EmFit {
        mass,
        dense: p,
        iterations,
        converged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::SinglyObs;
    use crate::solver::phi;
    use proptest::prelude::*;

    fn rows(grid_len: usize, rows: Vec<Vec<(usize, f64)>>) -> WeightMatrix<f64> {
        WeightMatrix::from_rows(grid_len, rows).unwrap()
    }

    #[test]
    fn one_step_absorption() {
        let w = rows(2, vec![vec![(0, 1.0)]]);
        assert_eq!(em_step(&[0.5, 0.5], &w).unwrap(), vec![1.0, 0.0]);
    }

    #[test]
    fn optimum_is_a_fixed_point() {
        let mut r = vec![vec![(0, 1.0)]; 3];
        r.push(vec![(1, 1.0)]);
        let w = rows(2, r);
        let p = em_step(&[0.75, 0.25], &w).unwrap();
        assert!((p[0] - 0.75).abs() < 1e-15 && (p[1] - 0.25).abs() < 1e-15);
    }

    #[test]
    fn two_block_step_hits_proportions() {
        let mut r = vec![vec![(0, 1.0)]; 3];
        r.push(vec![(1, 1.0)]);
        let w = rows(2, r);
        let p = em_step(&[0.5, 0.5], &w).unwrap();
        assert!((p[0] - 0.75).abs() < 1e-15 && (p[1] - 0.25).abs() < 1e-15);
    }

    #[test]
    fn fit_all_ones_in_one_step() {
        let data = Dataset::Single(vec![SinglyObs { e: 1, s: 1 }; 4]);
        let grid = Grid::contiguous(1).unwrap();
        let fit = fit_em::<f64>(&data, &grid, 1e-10, 10).unwrap();
        assert!(fit.converged);
        assert!(fit.iterations <= 1);
        assert_eq!(fit.mass.probs(), &[1.0]);
    }

    #[test]
    fn fit_two_blocks_exactly() {
        let mut recs = vec![SinglyObs { e: 1, s: 1 }; 3];
        recs.push(SinglyObs { e: 1, s: 2 });
        let fit = fit_em::<f64>(
            &Dataset::Single(recs),
            &Grid::contiguous(2).unwrap(),
            1e-12,
            100,
        )
        .unwrap();
        assert!(fit.converged);
        assert!((fit.mass.mass_at(1) - 0.75).abs() < 1e-12);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn em_is_monotone_and_conserves_mass(
            recs in prop::collection::vec((1i64..6, 1i64..12), 2..25),
            raw in prop::collection::vec(0.05f64..1.0, 12),
        ) {
            let data = Dataset::Single(recs.iter().map(|&(e, s)| SinglyObs { e, s }).collect());
            let data = crate::model::validate_dataset(data).unwrap();
            let grid = Grid::contiguous(12).unwrap();
            let w = build_weight_matrix::<f64>(&data, &grid).unwrap();
            let total: f64 = raw.iter().sum();
            let mut p: Vec<f64> = raw.iter().map(|x| x / total).collect();
            for _ in 0..150 {
                let next = em_step(&p, &w).unwrap();
                prop_assert!((next.iter().sum::<f64>() - 1.0).abs() < 1e-12);
                prop_assert!(next.iter().all(|&v| v >= 0.0));
                prop_assert!(phi(&next, &w).unwrap() <= phi(&p, &w).unwrap() + 1e-13);
                p = next;
            }
        }
    }
}
