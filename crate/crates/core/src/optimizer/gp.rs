//! Exact Gaussian-process regression with an anisotropic squared-exponential
//! kernel on standardized targets.

use std::f64::consts::LN_10;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};

use crate::error::OptimizerError;

pub const BASE_JITTER: f64 = 1e-8;
const MAX_JITTER: f64 = 1e-2;
const LOG_LENGTH_BOUNDS: (f64, f64) = (-2.0 * LN_10, LN_10);
const LOG_SIGNAL_BOUNDS: (f64, f64) = (-2.0 * LN_10, 2.0 * LN_10);

/// Kernel hyperparameters in log space: per-dimension length scales and the
/// signal variance of the standardized targets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GpHyper {
    pub log_length: Vec<f64>,
    pub log_signal: f64,
}

impl GpHyper {
    pub fn isotropic(dim: usize, length: f64) -> Self {
        Self {
            log_length: vec![length.ln(); dim],
            log_signal: 0.0,
        }
    }

    pub fn length_scales(&self) -> Vec<f64> {
        self.log_length.iter().map(|v| v.exp()).collect()
    }

    pub fn signal_variance(&self) -> f64 {
        self.log_signal.exp()
    }

    fn kernel(&self, a: &[f64], b: &[f64]) -> f64 {
        let s: f64 = a
            .iter()
            .zip(b)
            .zip(&self.log_length)
            .map(|((x, y), l)| {
                let d = (x - y) / l.exp();
                d * d
            })
            .sum();
        self.signal_variance() * (-0.5 * s).exp()
    }
}

fn standardize(y: &[f64]) -> (f64, f64, DVector<f64>) {
    let n = y.len() as f64;
    let mean = y.iter().sum::<f64>() / n;
    let var = y.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let std = if var.sqrt() > 1e-12 { var.sqrt() } else { 1.0 };
    (
        mean,
        std,
        DVector::from_iterator(y.len(), y.iter().map(|v| (v - mean) / std)),
    )
}

fn gram(x: &[Vec<f64>], hyper: &GpHyper) -> DMatrix<f64> {
    let n = x.len();
    DMatrix::from_fn(n, n, |i, j| hyper.kernel(&x[i], &x[j]))
}

fn factor(k: &DMatrix<f64>) -> Result<(Cholesky<f64, Dyn>, f64), OptimizerError> {
    let n = k.nrows();
    let mut jitter = BASE_JITTER;
    while jitter <= MAX_JITTER * (1.0 + 1e-9) {
        let kj = k + DMatrix::identity(n, n) * jitter;
        if let Some(c) = kj.cholesky() {
            return Ok((c, jitter));
        }
        jitter *= 10.0;
    }
    Err(OptimizerError::IllConditioned(MAX_JITTER))
}

#[derive(Debug, Clone)]
pub struct Gp {
    x: Vec<Vec<f64>>,
    y_mean: f64,
    y_std: f64,
    hyper: GpHyper,
    jitter: f64,
    chol: Cholesky<f64, Dyn>,
    alpha: DVector<f64>,
}

impl Gp {
    pub fn fit(x: &[Vec<f64>], y: &[f64], hyper: &GpHyper) -> Result<Self, OptimizerError> {
        if x.is_empty() || x.len() != y.len() {
            return Err(OptimizerError::InvalidSpace(
                "GP needs matching, non-empty training data".into(),
            ));
        }
        let (y_mean, y_std, ys) = standardize(y);
        let (chol, jitter) = factor(&gram(x, hyper))?;
        let alpha = chol.solve(&ys);
        Ok(Self {
            x: x.to_vec(),
            y_mean,
            y_std,
            hyper: hyper.clone(),
            jitter,
            chol,
            alpha,
        })
    }

    pub fn hyper(&self) -> &GpHyper {
        &self.hyper
    }

    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    /// Posterior mean and standard deviation in the original target units.
    pub fn predict(&self, q: &[f64]) -> (f64, f64) {
        let ks = DVector::from_iterator(self.x.len(), self.x.iter().map(|xi| self.hyper.kernel(xi, q)));
        let mean = ks.dot(&self.alpha);
        let v = self.chol.l().solve_lower_triangular(&ks).expect("non-singular factor");
        let var = (self.hyper.signal_variance() - v.dot(&v)).max(0.0);
        (self.y_mean + self.y_std * mean, self.y_std * var.sqrt())
    }

    /// Negative log marginal likelihood of standardized targets.
    pub fn neg_log_likelihood(x: &[Vec<f64>], y: &[f64], hyper: &GpHyper) -> Option<f64> {
        let (_, _, ys) = standardize(y);
        let (chol, _) = factor(&gram(x, hyper)).ok()?;
        let alpha = chol.solve(&ys);
        let logdet: f64 = chol.l().diagonal().iter().map(|d| d.ln()).sum();
        Some(0.5 * ys.dot(&alpha) + logdet + 0.5 * x.len() as f64 * (2.0 * std::f64::consts::PI).ln())
    }

    /// Maximum-likelihood hyperparameters by coordinate descent, each
    /// coordinate searched on a coarse grid then refined by golden section.
    pub fn fit_hyper(x: &[Vec<f64>], y: &[f64], init: &GpHyper) -> GpHyper {
        let dim = init.log_length.len();
        let mut h = init.clone();
        let eval = |h: &GpHyper| Self::neg_log_likelihood(x, y, h).unwrap_or(f64::INFINITY);
        let mut best = eval(&h);
        for _sweep in 0..2 {
            for c in 0..=dim {
                let (lo, hi) = if c < dim { LOG_LENGTH_BOUNDS } else { LOG_SIGNAL_BOUNDS };
                let set = |h: &mut GpHyper, v: f64| {
                    if c < dim {
                        h.log_length[c] = v;
                    } else {
                        h.log_signal = v;
                    }
                };
                let grid = 7;
                let step = (hi - lo) / (grid - 1) as f64;
                let mut arg = None;
                for g in 0..grid {
                    let v = lo + step * g as f64;
                    let mut t = h.clone();
                    set(&mut t, v);
                    let f = eval(&t);
                    if f < best {
                        best = f;
                        arg = Some(v);
                    }
                }
                let centre = arg.unwrap_or(if c < dim { h.log_length[c] } else { h.log_signal });
                let (mut a, mut b) = ((centre - step).max(lo), (centre + step).min(hi));
                let phi = 0.5 * (5f64.sqrt() - 1.0);
                for _ in 0..10 {
                    let m1 = b - phi * (b - a);
                    let m2 = a + phi * (b - a);
                    let mut t1 = h.clone();
                    set(&mut t1, m1);
                    let mut t2 = h.clone();
                    set(&mut t2, m2);
                    if eval(&t1) < eval(&t2) {
                        b = m2;
                    } else {
                        a = m1;
                    }
                }
                let mut t = h.clone();
                set(&mut t, 0.5 * (a + b));
                let f = eval(&t);
                if f < best {
                    best = f;
                    h = t;
                } else if let Some(v) = arg {
                    set(&mut h, v);
                }
            }
        }
        h
    }
}

/// Posterior at each query point after maximum-likelihood fitting.
pub fn gp_posterior(
    train_x: &[Vec<f64>],
    train_y: &[f64],
    query: &[Vec<f64>],
) -> Result<Vec<(f64, f64)>, OptimizerError> {
    let dim = train_x.first().map(|p| p.len()).unwrap_or(0);
    let hyper = Gp::fit_hyper(train_x, train_y, &GpHyper::isotropic(dim, 0.3));
    let gp = Gp::fit(train_x, train_y, &hyper)?;
    Ok(query.iter().map(|q| gp.predict(q)).collect())
}
