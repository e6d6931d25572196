//! Ridge regression with an unpenalized intercept.
//!
//! Samples are folded into running means and centered co-moments one at a
//! time, so fitting needs `O(d^2)` memory regardless of the sample count.
//! The centered system `(C_xx + lambda I) beta = C_xy` is solved by Cholesky
//! factorization and the intercept recovered as `mean_y - beta . mean_x`.

use serde::{Deserialize, Serialize};

pub const DEFAULT_RIDGE_LAMBDA: f64 = 1000.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RidgeModel {
    pub intercept: f64,
    pub coefficients: Vec<f64>,
}

impl RidgeModel {
    pub fn predict(&self, x: &[f64]) -> f64 {
        self.intercept + self.coefficients.iter().zip(x).map(|(b, v)| b * v).sum::<f64>()
    }
}

#[derive(Debug, Clone)]
pub struct RidgeAccumulator {
    dim: usize,
    n: u64,
    mean_x: Vec<f64>,
    mean_y: f64,
    /// Row-major `dim x dim` co-moment of the features.
    cxx: Vec<f64>,
    cxy: Vec<f64>,
    delta: Vec<f64>,
}

impl RidgeAccumulator {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            n: 0,
            mean_x: vec![0.0; dim],
            mean_y: 0.0,
            cxx: vec![0.0; dim * dim],
            cxy: vec![0.0; dim],
            delta: vec![0.0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> u64 {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn add(&mut self, x: &[f64], y: f64) {
        assert_eq!(x.len(), self.dim, "feature dimension mismatch");
        self.n += 1;
        let n = self.n as f64;
        for (d, (&xi, m)) in self.delta.iter_mut().zip(x.iter().zip(&self.mean_x)) {
            *d = xi - m;
        }
        for (m, d) in self.mean_x.iter_mut().zip(&self.delta) {
            *m += d / n;
        }
        let dy = y - self.mean_y;
        self.mean_y += dy / n;
        let ry = y - self.mean_y;
        for i in 0..self.dim {
            let di = self.delta[i];
            let row = &mut self.cxx[i * self.dim..(i + 1) * self.dim];
            for (j, c) in row.iter_mut().enumerate() {
                *c += di * (x[j] - self.mean_x[j]);
            }
            self.cxy[i] += di * ry;
        }
    }

    /// Solves for the ridge coefficients. Fails with a reason when the
    /// penalized system is not positive definite or yields non-finite values.
    pub fn solve(&self, lambda: f64) -> std::result::Result<RidgeModel, String> {
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(format!("ridge strength {lambda} must be finite and >= 0"));
        }
        if self.n == 0 {
            return Err("no training samples".into());
        }
        let d = self.dim;
        let mut a = self.cxx.clone();
        // The co-moment update is symmetric only up to rounding.
        for i in 0..d {
            for j in 0..i {
                let s = 0.5 * (a[i * d + j] + a[j * d + i]);
                a[i * d + j] = s;
                a[j * d + i] = s;
            }
            a[i * d + i] += lambda;
        }
        let mut beta = self.cxy.clone();
        cholesky_solve(&mut a, d, &mut beta)?;
        let intercept = self.mean_y - beta.iter().zip(&self.mean_x).map(|(b, m)| b * m).sum::<f64>();
        if !intercept.is_finite() || beta.iter().any(|b| !b.is_finite()) {
            return Err("solution is not finite".into());
        }
        Ok(RidgeModel {
            intercept,
            coefficients: beta,
        })
    }
}

/// Solves `A x = b` in place for a symmetric positive definite row-major
/// `n x n` matrix. `a` is overwritten by its lower Cholesky factor and `b`
/// by the solution.
pub fn cholesky_solve(a: &mut [f64], n: usize, b: &mut [f64]) -> std::result::Result<(), String> {
    for j in 0..n {
        let mut diag = a[j * n + j];
        for k in 0..j {
            diag -= a[j * n + k] * a[j * n + k];
        }
        if !(diag > 0.0) || !diag.is_finite() {
            return Err(format!("matrix is not positive definite (pivot {j})"));
        }
        let l = diag.sqrt();
        a[j * n + j] = l;
        for i in j + 1..n {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= a[i * n + k] * a[j * n + k];
            }
            a[i * n + j] = s / l;
        }
    }
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s -= a[i * n + k] * b[k];
        }
        b[i] = s / a[i * n + i];
    }
    for i in (0..n).rev() {
        let mut s = b[i];
        for k in i + 1..n {
            s -= a[k * n + i] * b[k];
        }
        b[i] = s / a[i * n + i];
    }
    Ok(())
}

/// Fits a ridge model to in-memory rows.
pub fn fit_ridge(xs: &[Vec<f64>], ys: &[f64], lambda: f64) -> std::result::Result<RidgeModel, String> {
    let dim = xs.first().map_or(0, Vec::len);
    let mut acc = RidgeAccumulator::new(dim);
    for (x, &y) in xs.iter().zip(ys) {
        acc.add(x, y);
    }
    acc.solve(lambda)
}
