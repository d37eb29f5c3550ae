//! Linearized quantum fluctuations around a stable fixed point.
//!
//! Quadrature conventions: `X = (a + a^dag)/2`, `Y = (a - a^dag)/(2i)`, so a
//! vacuum or coherent input has variance 1/4 per quadrature.
//!
//! Cavity quadratures are ordered `[X0..X3, Y0..Y3]` over the modes
//! `[1cw, 1ccw, 2cw, 2ccw]`. The 16 input quadratures are
//! `[bX0..bX3, bY0..bY3, cX0..cX3, cY0..cY3]`: waveguide inputs `b` then
//! intrinsic-loss inputs `c`. Output quadratures use the cavity ordering.

use nalgebra::{Matrix2, SMatrix};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::FluctuationError;
use crate::model::ModelParams;
use crate::steady::{Mat8, Stability, SteadyState};

pub type Mat8x16 = SMatrix<f64, 8, 16>;
pub type Mat2x16 = SMatrix<f64, 2, 16>;
pub type Mat2x8 = SMatrix<f64, 2, 8>;

/// Variance of a vacuum quadrature.
pub const VACUUM_VARIANCE: f64 = 0.25;

#[derive(Debug, Clone, PartialEq)]
pub struct NoiseTransfer {
    /// Dynamical matrix of the cavity quadrature fluctuations (rad/s).
    pub m: Mat8,
    /// Injection of the 16 input quadratures into the cavity equations.
    pub b: Mat8x16,
    /// DC map from input quadratures to output-waveguide quadratures.
    pub t: Mat8x16,
}

/// Linearized Langevin matrix in the cavity quadrature basis, assembled
/// from the complex fluctuation equations
/// `d(da)/dt = sum_n P_mn da_n + Q_mn da_n^dag`.
pub(crate) fn langevin_matrix(a: &[Complex64; 4], params: &ModelParams) -> Mat8 {
    let r = params.rates();
    let i = Complex64::i();
    let chi = r.chi;
    let mut p = [[Complex64::default(); 4]; 4];
    let mut q = [[Complex64::default(); 4]; 4];
    for (cw, ccw, s) in [(0usize, 1usize, 1.0f64), (1, 0, -1.0)] {
        let (sh, sh_partner) = (cw + 2, ccw + 2);
        p[cw][cw] = -(r.half_width(0) - i * s * r.delta[0]);
        p[cw][ccw] = i * r.beta[0];
        p[cw][sh] = chi * a[cw].conj();
        q[cw][cw] = chi * a[sh];

        p[sh][sh] = -(r.half_width(1) - i * s * r.delta[1]);
        p[sh][sh_partner] = i * r.beta[1];
        p[sh][cw] = -chi * a[cw];
    }
    let mut m = Mat8::zeros();
    for row in 0..4 {
        for col in 0..4 {
            let plus = p[row][col] + q[row][col];
            let minus = p[row][col] - q[row][col];
            m[(row, col)] = plus.re;
            m[(row, 4 + col)] = -minus.im;
            m[(4 + row, col)] = plus.im;
            m[(4 + row, 4 + col)] = minus.re;
        }
    }
    m
}

/// Input injection matrix: `sqrt(kappa)` from waveguide quadratures and
/// `sqrt(gamma)` from loss quadratures.
pub fn input_matrix(params: &ModelParams) -> Mat8x16 {
    let r = params.rates();
    let mut b = Mat8x16::zeros();
    for m in 0..4 {
        let sk = r.kappa_of_mode(m).sqrt();
        let sg = r.gamma_of_mode(m).sqrt();
        b[(m, m)] = sk;
        b[(4 + m, 4 + m)] = sk;
        b[(m, 8 + m)] = sg;
        b[(4 + m, 12 + m)] = sg;
    }
    b
}

/// Dynamical matrix `M` at a stable fixed point.
pub fn linearized_system(steady: &SteadyState, params: &ModelParams) -> Result<Mat8, FluctuationError> {
    if steady.stability != Stability::Stable {
        return Err(FluctuationError::UnstablePoint);
    }
    Ok(langevin_matrix(&steady.amplitudes.a, params))
}

pub(crate) fn transfer_at(a: &[Complex64; 4], params: &ModelParams) -> Result<NoiseTransfer, FluctuationError> {
    let m = langevin_matrix(a, params);
    let eigs = m.complex_eigenvalues();
    let max_abs = eigs.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let min_abs = eigs.iter().map(|z| z.norm()).fold(f64::INFINITY, f64::min);
    if !(min_abs > 1e-13 * max_abs) {
        return Err(FluctuationError::SingularResponse);
    }
    let b = input_matrix(params);
    let x = m.lu().solve(&b).ok_or(FluctuationError::SingularResponse)?;
    let r = params.rates();
    let mut t = Mat8x16::zeros();
    for row in 0..8 {
        let sk = r.kappa_of_mode(row % 4).sqrt();
        t[(row, row)] = 1.0;
        for col in 0..16 {
            // Cavity response is -M^-1 B; output is input minus sqrt(kappa) times it.
            t[(row, col)] += sk * x[(row, col)];
        }
    }
    Ok(NoiseTransfer { m, b, t })
}

/// Zero-frequency input-output map at a stable fixed point.
pub fn input_output_transfer(steady: &SteadyState, params: &ModelParams) -> Result<NoiseTransfer, FluctuationError> {
    if steady.stability != Stability::Stable {
        return Err(FluctuationError::UnstablePoint);
    }
    transfer_at(&steady.amplitudes.a, params)
}

/// Weights of the two differential currents over the 8 output quadratures,
/// linearized around the classical outputs `b_out`.
pub fn detection_rows(b_out: &[Complex64; 4], params: &ModelParams) -> Mat2x8 {
    let a = params.detector_constants();
    let phases = [params.detection.phi1, params.detection.phi2];
    let mut e = Mat2x8::zeros();
    for k in 0..2 {
        let (cw, ccw) = (2 * k, 2 * k + 1);
        let rot = Complex64::from_polar(1.0, -phases[k]);
        let c = b_out[ccw] * rot;
        let d = b_out[cw].conj() * rot;
        let s = -2.0 * a[k];
        e[(k, cw)] = s * c.im;
        e[(k, 4 + cw)] = -s * c.re;
        e[(k, ccw)] = s * d.im;
        e[(k, 4 + ccw)] = s * d.re;
    }
    e
}

/// Classical differential currents `-2 A_k Im(conj(b_cw) b_ccw e^{-i phi_k})`.
pub fn classical_currents(b_out: &[Complex64; 4], params: &ModelParams) -> [f64; 2] {
    let a = params.detector_constants();
    let phases = [params.detection.phi1, params.detection.phi2];
    std::array::from_fn(|k| {
        let rot = Complex64::from_polar(1.0, -phases[k]);
        -2.0 * a[k] * (b_out[2 * k].conj() * b_out[2 * k + 1] * rot).im
    })
}

/// Weights of `di1`, `di2` over the 16 input quadratures (A).
#[derive(Debug, Clone, PartialEq)]
pub struct CurrentCoefficients {
    pub w: Mat2x16,
}

pub fn current_coefficients(
    steady: &SteadyState,
    transfer: &NoiseTransfer,
    params: &ModelParams,
) -> CurrentCoefficients {
    let e = detection_rows(&steady.output_amplitudes, params);
    CurrentCoefficients { w: e * transfer.t }
}

/// Current covariance `(1/4) W W^T` for uncorrelated inputs of variance 1/4.
pub fn current_covariance(coeffs: &CurrentCoefficients) -> Matrix2<f64> {
    let w = &coeffs.w;
    let mut c = w * w.transpose() * VACUUM_VARIANCE;
    let off = 0.5 * (c[(0, 1)] + c[(1, 0)]);
    c[(0, 1)] = off;
    c[(1, 0)] = off;
    c
}

/// Covariance of the 8 output quadratures.
pub fn output_covariance(transfer: &NoiseTransfer) -> Mat8 {
    transfer.t * transfer.t.transpose() * VACUUM_VARIANCE
}

pub fn squeezing_db(variance: f64) -> f64 {
    -10.0 * (variance / VACUUM_VARIANCE).log10()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModeSqueezing {
    pub amplitude_variance: f64,
    pub phase_variance: f64,
    /// Squeezing relative to vacuum (positive means below vacuum noise).
    pub amplitude_db: f64,
    pub phase_db: f64,
    /// Same levels referenced to unit variance, i.e. `-10 log10(Var)`.
    pub amplitude_db_unit_ref: f64,
    pub phase_db_unit_ref: f64,
    /// Determinant of the 2x2 quadrature covariance.
    pub determinant: f64,
    /// True when the classical output vanishes and the canonical X/Y basis
    /// was used instead of amplitude/phase.
    pub degenerate: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SqueezingReport {
    /// Per output mode, in the order `[1cw, 1ccw, 2cw, 2ccw]`.
    pub modes: [ModeSqueezing; 4],
}

impl SqueezingReport {
    pub fn fundamental(&self) -> &ModeSqueezing {
        &self.modes[0]
    }

    pub fn second_harmonic(&self) -> &ModeSqueezing {
        &self.modes[2]
    }
}

pub fn squeezing_levels(steady: &SteadyState, transfer: &NoiseTransfer) -> SqueezingReport {
    let c = output_covariance(transfer);
    let b = &steady.output_amplitudes;
    let scale = steady.amplitudes.b_in.iter().map(|z| z.norm()).fold(1.0, f64::max);
    let modes = std::array::from_fn(|m| {
        let block = Matrix2::new(c[(m, m)], c[(m, 4 + m)], c[(4 + m, m)], c[(4 + m, 4 + m)]);
        let degenerate = b[m].norm() <= 1e-9 * scale;
        let theta = if degenerate { 0.0 } else { b[m].arg() };
        let (s, co) = theta.sin_cos();
        let u = nalgebra::Vector2::new(co, s);
        let v = nalgebra::Vector2::new(-s, co);
        let va = u.dot(&(block * u));
        let vp = v.dot(&(block * v));
        ModeSqueezing {
            amplitude_variance: va,
            phase_variance: vp,
            amplitude_db: squeezing_db(va),
            phase_db: squeezing_db(vp),
            amplitude_db_unit_ref: -10.0 * va.log10(),
            phase_db_unit_ref: -10.0 * vp.log10(),
            determinant: block.determinant(),
            degenerate,
        }
    });
    SqueezingReport { modes }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::DEG_PER_HOUR;
    use crate::steady::{select_operating_point, solve_steady, SolverStrategy, System};
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn operating(p: &ModelParams) -> SteadyState {
        select_operating_point(p, &SolverStrategy::default())
            .unwrap()
            .chosen
            .unwrap()
            .0
    }

    fn linear(p: ModelParams) -> ModelParams {
        let mut p = p;
        p.resonator.chi = 0.0;
        p.resonator.beta1 = 0.0;
        p.resonator.beta2 = 0.0;
        p
    }

    fn sorted(mut v: Vec<Complex64>) -> Vec<Complex64> {
        v.sort_by(|a, b| (a.re, a.im).partial_cmp(&(b.re, b.im)).unwrap());
        v
    }

    #[test]
    fn spectrum_matches_steady_jacobian() {
        for p in [
            ModelParams::tfln_reference()
                .with_drive(0.0, 23.507e-3)
                .with_coupling(1.018e5, 5.462e5),
            ModelParams::tfln_reference()
                .with_drive(1.5e-3, 1.873e-3)
                .with_coupling(4.353e5, 8.769e6)
                .with_omega(50.0 * DEG_PER_HOUR),
        ] {
            let s = operating(&p);
            let m = linearized_system(&s, &p).unwrap();
            let ours = sorted(m.complex_eigenvalues().iter().copied().collect());
            let theirs = sorted(s.jacobian_eigs.clone());
            let scale = ours.iter().map(|z| z.norm()).fold(0.0, f64::max);
            for (a, b) in ours.iter().zip(&theirs) {
                assert!((a - b).norm() <= 1e-10 * scale, "{a} vs {b}");
            }
            let j = System::new(&p).jacobian(&s.x());
            assert!((m + j).amax() <= 1e-12 * j.amax());
        }
    }

    #[test]
    fn linear_matrix_is_block_diagonal_per_harmonic() {
        let p = ModelParams::tfln_reference()
            .with_drive(1e-3, 1e-3)
            .with_coupling(1e6, 1e6);
        let mut p = p;
        p.resonator.chi = 0.0;
        let s = operating(&p);
        let m = linearized_system(&s, &p).unwrap();
        let fund = [0usize, 1, 4, 5];
        let sh = [2usize, 3, 6, 7];
        for i in fund {
            for j in sh {
                assert_eq!(m[(i, j)], 0.0);
                assert_eq!(m[(j, i)], 0.0);
            }
        }
    }

    #[test]
    fn critical_coupling_transfer_blocks() {
        let p = linear(
            ModelParams::tfln_reference()
                .with_drive(1e-6, 1e-6)
                .with_coupling(1e7, 1e6),
        );
        let s = operating(&p);
        let t = input_output_transfer(&s, &p).unwrap().t;
        for row in 0..8 {
            for col in 0..8 {
                assert!(t[(row, col)].abs() < 1e-12);
            }
            let loss_row: f64 = (8..16).map(|c| t[(row, c)] * t[(row, c)]).sum();
            assert_relative_eq!(loss_row.sqrt(), 1.0, max_relative = 1e-12);
        }
    }

    #[test]
    fn passive_network_preserves_vacuum() {
        let p = ModelParams::tfln_reference()
            .with_drive(2e-6, 1e-6)
            .with_coupling(3e6, 4e5)
            .with_omega(1e4 * DEG_PER_HOUR);
        let mut p = p;
        p.resonator.chi = 0.0;
        let s = operating(&p);
        let tr = input_output_transfer(&s, &p).unwrap();
        let c = output_covariance(&tr);
        assert!((c - Mat8::identity() * 0.25).amax() < 1e-8);
        let sq = squeezing_levels(&s, &tr);
        for m in sq.modes {
            assert!(m.amplitude_db.abs() < 1e-7 && m.phase_db.abs() < 1e-7);
        }
    }

    #[test]
    fn unstable_point_is_rejected() {
        let p = ModelParams::tfln_reference()
            .with_drive(0.0, 30e-3)
            .with_coupling(1.018e5, 5.462e5);
        let sols = solve_steady(&p, &SolverStrategy::default()).unwrap();
        let bad = sols.iter().find(|s| s.stability == Stability::Unstable).unwrap();
        assert_eq!(linearized_system(bad, &p), Err(FluctuationError::UnstablePoint));
        assert!(input_output_transfer(bad, &p).is_err());
    }

    #[test]
    fn coefficients_antisymmetric_under_exchange() {
        let p = ModelParams::tfln_reference()
            .with_drive(0.945e-6, 0.0)
            .with_coupling(6.747e6, 6.675e7);
        let s = operating(&p);
        let tr = input_output_transfer(&s, &p).unwrap();
        let w = current_coefficients(&s, &tr, &p).w;
        let swap = |c: usize| {
            let (block, m) = (c / 4, c % 4);
            block * 4 + (m ^ 1)
        };
        let scale = w.amax();
        for k in 0..2 {
            for c in 0..16 {
                assert!((w[(k, c)] + w[(k, swap(c))]).abs() <= 1e-9 * scale);
            }
        }
    }

    #[test]
    fn coefficients_scale_with_responsivity() {
        let p = ModelParams::tfln_reference()
            .with_drive(1.5e-3, 1.873e-3)
            .with_coupling(4.353e5, 8.769e6)
            .with_omega(10.0 * DEG_PER_HOUR);
        let s = operating(&p);
        let tr = input_output_transfer(&s, &p).unwrap();
        let w1 = current_coefficients(&s, &tr, &p).w;
        let mut p2 = p;
        p2.detection.responsivity *= 2.0;
        let w2 = current_coefficients(&s, &tr, &p2).w;
        assert!((w2 - w1 * 2.0).amax() <= 1e-15 * w1.amax());
    }

    #[test]
    fn zero_coefficients_give_zero_covariance() {
        let c = current_covariance(&CurrentCoefficients { w: Mat2x16::zeros() });
        assert_eq!(c, Matrix2::zeros());
    }

    #[test]
    fn monte_carlo_variance_of_first_current() {
        let p = ModelParams::tfln_reference()
            .with_drive(0.0, 23.507e-3)
            .with_coupling(1.018e5, 5.462e5)
            .with_omega(100.0 * DEG_PER_HOUR);
        let s = operating(&p);
        let tr = input_output_transfer(&s, &p).unwrap();
        let cov = current_covariance(&current_coefficients(&s, &tr, &p));
        let e = detection_rows(&s.output_amplitudes, &p);
        let lu = tr.m.lu();
        let normal = Normal::new(0.0, 0.5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 200_000usize;
        let sk: [f64; 8] = std::array::from_fn(|r| p.rates().kappa_of_mode(r % 4).sqrt());
        let (mut s1, mut s2) = (0.0, 0.0);
        for _ in 0..n {
            let u = nalgebra::SVector::<f64, 16>::from_fn(|_, _| normal.sample(&mut rng));
            let x = -lu.solve(&(tr.b * u)).unwrap();
            let out = nalgebra::SVector::<f64, 8>::from_fn(|r, _| u[r] - sk[r] * x[r]);
            let i1 = (e.row(0) * out)[0];
            s1 += i1;
            s2 += i1 * i1;
        }
        let mean = s1 / n as f64;
        let var = (s2 - n as f64 * mean * mean) / (n - 1) as f64;
        let se = cov[(0, 0)] * (2.0 / (n - 1) as f64).sqrt();
        assert!((var - cov[(0, 0)]).abs() <= 3.0 * se, "{var} vs {}", cov[(0, 0)]);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn covariance_is_symmetric_psd(v in proptest::collection::vec(-1e-9f64..1e-9, 32)) {
            let w = Mat2x16::from_row_slice(&v);
            let c = current_covariance(&CurrentCoefficients { w });
            prop_assert_eq!(c[(0, 1)], c[(1, 0)]);
            let eig = c.symmetric_eigen().eigenvalues;
            prop_assert!(eig.min() >= -1e-12 * c.trace());
        }
    }
}
