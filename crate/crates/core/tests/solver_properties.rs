use npmle_core::em::fit_em;
use npmle_core::simulate::true_fbar;
use npmle_core::solver::{fenchel_residuals, inner_support_loop, solve_quadratic_subproblem};
use npmle_core::{
    build_weight_matrix, candidate_grid, draw_doubly, draw_singly, fit_npmle, Dataset, DayCdf,
    ExposureSpec, Mode, SolverConfig, TruthSpec,
};

fn exposure() -> ExposureSpec {
    ExposureSpec::uniform(15).unwrap()
}

fn weibull_singly(n: usize, seed: u64) -> Dataset {
    draw_singly(n, &TruthSpec::default_weibull(), &exposure(), seed).unwrap()
}

fn weibull_doubly(n: usize, seed: u64) -> Dataset {
    draw_doubly(n, &TruthSpec::default_weibull(), &exposure(), seed).unwrap()
}

fn sup_dist(a: &DayCdf<f64>, b: &DayCdf<f64>) -> f64 {
    a.values()
        .iter()
        .zip(b.values())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

#[test]
fn agrees_with_em() {
    for seed in 0..3 {
        let data = weibull_singly(200, seed);
        let grid = candidate_grid(&data, None).unwrap();
        let fit = fit_npmle::<f64>(&data, &grid, &SolverConfig::default()).unwrap();
        let em = fit_em::<f64>(&data, &grid, 1e-10, 2_000_000).unwrap();
        assert!(em.converged);
        let a = DayCdf::for_mode(&fit.mass, &grid, Mode::Single);
        let b = DayCdf::for_mode(&em.mass, &grid, Mode::Single);
        assert!(sup_dist(&a, &b) <= 1e-6, "seed {seed}");
    }
}

#[test]
fn doubly_agrees_with_em() {
    let data = weibull_doubly(200, 4);
    let grid = candidate_grid(&data, None).unwrap();
    let fit = fit_npmle::<f64>(&data, &grid, &SolverConfig::default()).unwrap();
    let em = fit_em::<f64>(&data, &grid, 1e-10, 2_000_000).unwrap();
    let a = DayCdf::for_mode(&fit.mass, &grid, Mode::Double);
    let b = DayCdf::for_mode(&em.mass, &grid, Mode::Double);
    assert!(sup_dist(&a, &b) <= 1e-5, "{}", sup_dist(&a, &b));
}

#[test]
fn certificate_and_normalization() {
    for seed in 0..5 {
        for data in [weibull_singly(300, seed), weibull_doubly(300, seed)] {
            let grid = candidate_grid(&data, None).unwrap();
            let fit = fit_npmle::<f64>(&data, &grid, &SolverConfig::default()).unwrap();
            let w = build_weight_matrix(&data, &grid).unwrap();
            let r = fenchel_residuals(&fit.dense, &w).unwrap();
            assert!(r.min_partial >= -1e-10 && r.complementarity <= 1e-10);
            let total: f64 = fit.dense.iter().sum();
            assert!((total - 1.0).abs() <= 1e-10, "{total}");
            assert!(fit.trace.is_monotone());
        }
    }
}

#[test]
fn converged_solution_is_a_subproblem_fixed_point() {
    for seed in 0..5 {
        let data = weibull_singly(300, seed);
        let grid = candidate_grid(&data, None).unwrap();
        let fit = fit_npmle::<f64>(&data, &grid, &SolverConfig::default()).unwrap();
        let w = build_weight_matrix(&data, &grid).unwrap();
        let support: Vec<usize> = (0..grid.len()).filter(|&k| fit.dense[k] > 0.0).collect();
        let q = solve_quadratic_subproblem(&support, &fit.dense, &w).unwrap();
        for (&k, &v) in support.iter().zip(&q) {
            assert!((v - fit.dense[k]).abs() <= 1e-9, "seed {seed} point {k}");
        }
    }
}

#[test]
fn removed_point_is_never_the_one_just_added() {
    let config = SolverConfig::default();
    for seed in 0..10 {
        let data = if seed % 2 == 0 {
            weibull_singly(250, seed)
        } else {
            weibull_doubly(250, seed)
        };
        let grid = candidate_grid(&data, None).unwrap();
        let w = build_weight_matrix(&data, &grid).unwrap();
        let m = grid.len();
        let mut p = vec![1.0 / m as f64; m];
        let mut support = vec![m / 2];
        for _ in 0..6 {
            let sol = inner_support_loop(&p, &w, &support, &config).unwrap();
            assert_eq!(sol.stats.removed_just_added, 0);
            assert!(sol.p.iter().all(|&v| v >= 0.0));
            // Damped step keeps the next denominators positive.
            p = p
                .iter()
                .zip(&sol.p)
                .map(|(a, b)| 0.5 * a + 0.5 * b)
                .collect();
            support = sol.support;
        }
    }
}

#[test]
fn large_sample_consistency() {
    let truth = TruthSpec::default_weibull();
    let data = weibull_singly(10_000, 2024);
    let grid = candidate_grid(&data, None).unwrap();
    let fit = fit_npmle::<f64>(&data, &grid, &SolverConfig::default()).unwrap();
    let cdf = DayCdf::for_mode(&fit.mass, &grid, Mode::Single);
    let worst = (1..=truth.m1)
        .map(|i| (cdf.at(i) - true_fbar(&truth, i)).abs())
        .fold(0.0, f64::max);
    assert!(worst <= 0.03, "max error {worst}");
}

#[test]
fn doubly_large_sample_consistency() {
    let truth = TruthSpec::default_weibull();
    let data = weibull_doubly(10_000, 2025);
    let grid = candidate_grid(&data, None).unwrap();
    let fit = fit_npmle::<f64>(&data, &grid, &SolverConfig::default()).unwrap();
    let cdf = DayCdf::for_mode(&fit.mass, &grid, Mode::Double);
    let worst = (1..=truth.m1)
        .map(|i| (cdf.at(i) - true_fbar(&truth, i)).abs())
        .fold(0.0, f64::max);
    eprintln!("doubly max error {worst}");
    assert!(worst <= 0.05, "max error {worst}");
}

#[test]
fn single_precision_fit() {
    let data = weibull_singly(500, 8);
    let grid = candidate_grid(&data, None).unwrap();
    let cfg32 = SolverConfig::<f32> {
        tol: 1e-4,
        ..Default::default()
    };
    let f32fit = fit_npmle::<f32>(&data, &grid, &cfg32).unwrap();
    let f64fit = fit_npmle::<f64>(&data, &grid, &SolverConfig::default()).unwrap();
    let a = DayCdf::for_mode(&f32fit.mass, &grid, Mode::Single);
    let b = DayCdf::for_mode(&f64fit.mass, &grid, Mode::Single);
    for (x, y) in a.values().iter().zip(b.values()) {
        assert!((*x as f64 - y).abs() < 1e-2);
    }
}
