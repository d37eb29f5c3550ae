use rand::seq::SliceRandom;
use rand::Rng;

/// One Latin hypercube sample of `n` points in `[0, 1]^dim`.
pub fn latin_hypercube<R: Rng>(n: usize, dim: usize, rng: &mut R) -> Vec<Vec<f64>> {
    let mut pts = vec![vec![0.0; dim]; n];
    for d in 0..dim {
        let mut perm: Vec<usize> = (0..n).collect();
        perm.shuffle(rng);
        for (i, p) in pts.iter_mut().enumerate() {
            p[d] = (perm[i] as f64 + rng.random::<f64>()) / n as f64;
        }
    }
    pts
}

fn min_distance(pts: &[Vec<f64>]) -> f64 {
    let mut best = f64::INFINITY;
    for i in 0..pts.len() {
        for j in i + 1..pts.len() {
            let d: f64 = pts[i].iter().zip(&pts[j]).map(|(a, b)| (a - b) * (a - b)).sum();
            best = best.min(d);
        }
    }
    best.sqrt()
}

/// Best of `tries` Latin hypercubes under the maximin distance criterion.
pub fn maximin_lhs<R: Rng>(n: usize, dim: usize, tries: usize, rng: &mut R) -> Vec<Vec<f64>> {
    let mut best = latin_hypercube(n, dim, rng);
    let mut score = min_distance(&best);
    for _ in 1..tries {
        let cand = latin_hypercube(n, dim, rng);
        let s = min_distance(&cand);
        if s > score {
            best = cand;
            score = s;
        }
    }
    best
}
