use rand::Rng;
use statrs::distribution::{Continuous, ContinuousCDF, Normal};

use super::gp::Gp;

/// Expected improvement below `best` for a Gaussian prediction.
pub fn expected_improvement(mean: f64, stddev: f64, best: f64) -> f64 {
    if !(stddev > 0.0) {
        return (best - mean).max(0.0);
    }
    let n = Normal::standard();
    let z = (best - mean) / stddev;
    ((best - mean) * n.cdf(z) + stddev * n.pdf(z)).max(0.0)
}

fn score(gp: &Gp, x: &[f64], best: f64) -> (f64, f64) {
    let (m, s) = gp.predict(x);
    (expected_improvement(m, s, best), s)
}

fn better(a: (f64, f64), b: (f64, f64)) -> bool {
    a.0 > b.0 || (a.0 == b.0 && a.1 > b.1)
}

/// Maximizes EI over the unit cube: random candidates, then coordinate
/// descent from the best few. Ties in EI are broken by larger stddev.
pub fn maximize_ei<R: Rng>(gp: &Gp, best: f64, dim: usize, candidates: usize, rng: &mut R) -> Vec<f64> {
    let mut pool: Vec<(Vec<f64>, (f64, f64))> = (0..candidates)
        .map(|_| {
            let x: Vec<f64> = (0..dim).map(|_| rng.random::<f64>()).collect();
            let s = score(gp, &x, best);
            (x, s)
        })
        .collect();
    pool.sort_by(|a, b| {
        b.1 .0
            .partial_cmp(&a.1 .0)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(b.1 .1.partial_cmp(&a.1 .1).unwrap_or(std::cmp::Ordering::Equal))
    });
    let mut winner = pool[0].clone();
    for (start, s0) in pool.into_iter().take(4) {
        let (x, s) = coordinate_descent(gp, best, start, s0);
        if better(s, winner.1) {
            winner = (x, s);
        }
    }
    winner.0
}

fn coordinate_descent(gp: &Gp, best: f64, mut x: Vec<f64>, mut s: (f64, f64)) -> (Vec<f64>, (f64, f64)) {
    let mut step = 0.05;
    while step > 1e-4 {
        let mut moved = false;
        for d in 0..x.len() {
            for dir in [1.0, -1.0] {
                let mut t = x.clone();
                t[d] = (t[d] + dir * step).clamp(0.0, 1.0);
                let st = score(gp, &t, best);
                if better(st, s) {
                    x = t;
                    s = st;
                    moved = true;
                }
            }
        }
        if !moved {
            step *= 0.5;
        }
    }
    (x, s)
}
