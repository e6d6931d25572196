mod common;

use nalgebra::DVector;

use common::{normal_equations, random_system, COLS, ROWS};
use xmlc::ensemble::{fit_ridge, RidgeAccumulator, DEFAULT_RIDGE_LAMBDA};

#[test]
fn shipped_default_lambda() {
    assert_eq!(DEFAULT_RIDGE_LAMBDA, 1000.0);
}

#[test]
fn coefficients_match_normal_equations() {
    for seed in 0..50 {
        let (xs, ys) = random_system(seed);
        for lambda in [1e-9, 1.0, 1000.0, 1e12] {
            let model = fit_ridge(&xs, &ys, lambda).unwrap();
            let oracle = normal_equations(&xs, &ys, lambda);
            let ours = DVector::from_iterator(
                COLS + 1,
                std::iter::once(model.intercept).chain(model.coefficients.iter().copied()),
            );
            let rel = (&ours - &oracle).norm() / oracle.norm();
            assert!(rel <= 1e-6, "seed {seed} lambda {lambda}: relative error {rel:e}");
        }
    }
}

#[test]
fn streaming_matches_batch() {
    let (xs, ys) = random_system(99);
    let mut acc = RidgeAccumulator::new(COLS);
    for (x, &y) in xs.iter().zip(&ys) {
        acc.add(x, y);
    }
    assert_eq!(acc.len(), ROWS as u64);
    let streamed = acc.solve(1000.0).unwrap();
    let batch = fit_ridge(&xs, &ys, 1000.0).unwrap();
    assert!((streamed.intercept - batch.intercept).abs() < 1e-9);
    for (a, b) in streamed.coefficients.iter().zip(&batch.coefficients) {
        assert!((a - b).abs() < 1e-9);
    }
}
