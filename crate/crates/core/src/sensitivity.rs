//! Mean currents, rotation gradient, Fisher information and minimum
//! detectable rotation for one parameter point.

use nalgebra::{Matrix2, SVector, Vector2};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{EvalError, FluctuationError, SensitivityError};
use crate::fluctuations::{
    classical_currents, current_coefficients, current_covariance, detection_rows, input_output_transfer,
    squeezing_levels, transfer_at, SqueezingReport,
};
use crate::model::{omega_min_from_delta, ModelParams, ResonatorParams, RotationRate};
use crate::steady::{
    energy_defect, refine, select_operating_point, BranchOrigin, SolverStrategy, Stability, SteadyState,
};

/// How the expected photocurrents are formed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum MeanConvention {
    /// Currents from the classical output amplitudes only.
    Classical,
    /// Classical currents plus the linear current response to the coherent
    /// input quadratures, `<i> = i_cl + W u_in`.
    #[default]
    CoherentInput,
}

impl MeanConvention {
    pub fn as_str(&self) -> &'static str {
        match self {
            MeanConvention::Classical => "classical",
            MeanConvention::CoherentInput => "coherent-input",
        }
    }
}

impl std::str::FromStr for MeanConvention {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "classical" => Ok(Self::Classical),
            "coherent-input" => Ok(Self::CoherentInput),
            other => Err(format!("unknown mean convention `{other}`")),
        }
    }
}

/// Classical differential currents `(i1, i2)` from the output amplitudes.
pub fn mean_currents(steady: &SteadyState, params: &ModelParams) -> [f64; 2] {
    classical_currents(&steady.output_amplitudes, params)
}

/// Coherent input quadratures `[Re b_in, Im b_in, 0 (loss inputs)]`.
pub fn coherent_input_vector(params: &ModelParams) -> SVector<f64, 16> {
    let b = params.input_amplitudes();
    let mut u = SVector::<f64, 16>::zeros();
    for m in 0..4 {
        u[m] = b[m].re;
        u[4 + m] = b[m].im;
    }
    u
}

fn means_at(
    a: &[Complex64; 4],
    b_out: &[Complex64; 4],
    params: &ModelParams,
    convention: MeanConvention,
) -> Result<[f64; 2], FluctuationError> {
    let base = classical_currents(b_out, params);
    match convention {
        MeanConvention::Classical => Ok(base),
        MeanConvention::CoherentInput => {
            let t = transfer_at(a, params)?.t;
            let w = detection_rows(b_out, params) * t;
            let extra = w * coherent_input_vector(params);
            Ok([base[0] + extra[0], base[1] + extra[1]])
        }
    }
}

/// Mean currents under the chosen convention.
pub fn mean_currents_with(
    steady: &SteadyState,
    params: &ModelParams,
    convention: MeanConvention,
) -> Result<[f64; 2], FluctuationError> {
    means_at(&steady.amplitudes.a, &steady.output_amplitudes, params, convention)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Gradient {
    /// d<i>/d(delta1) for both currents (A s).
    pub value: [f64; 2],
    /// Step at which the estimate was accepted.
    pub step: f64,
}

const MAX_HALVINGS: usize = 40;

/// Central-difference derivative of the mean currents with respect to the
/// fundamental Sagnac shift, re-solving the followed branch at `delta +- h`
/// and halving `h` until two successive estimates agree to 1e-4.
pub fn current_gradient(
    params: &ModelParams,
    base: &SteadyState,
    h0: f64,
    convention: MeanConvention,
    strategy: &SolverStrategy,
) -> Result<Gradient, SensitivityError> {
    let d0 = params.rotation.delta1;
    let x0 = base.x();
    let scale = x0.norm().max(1.0);
    let at = |d: f64| -> Result<[f64; 2], SensitivityError> {
        let p = params.with_delta1(d);
        let s = refine(&p, &base.amplitudes.a, strategy)?;
        let jump = (s.x() - x0).norm() / scale;
        if jump > 0.1 {
            return Err(SensitivityError::BranchJump { jump });
        }
        Ok(means_at(&s.amplitudes.a, &s.output_amplitudes, &p, convention)?)
    };
    let central = |h: f64| -> Result<Vector2<f64>, SensitivityError> {
        let ip = at(d0 + h)?;
        let im = at(d0 - h)?;
        Ok(Vector2::new((ip[0] - im[0]) / (2.0 * h), (ip[1] - im[1]) / (2.0 * h)))
    };
    let mut h = h0;
    let mut prev = central(h)?;
    for _ in 0..MAX_HALVINGS {
        let half = central(0.5 * h)?;
        let diff = (prev - half).norm();
        if diff <= 1e-4 * half.norm() || (half.norm() == 0.0 && prev.norm() == 0.0) {
            let rich = (half * 4.0 - prev) / 3.0;
            return Ok(Gradient {
                value: [rich[0], rich[1]],
                step: 0.5 * h,
            });
        }
        prev = half;
        h *= 0.5;
    }
    Err(SensitivityError::GradientUnsettled { halvings: MAX_HALVINGS })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Fisher {
    /// Fisher information (s^2).
    pub value: f64,
    /// Covariance was regularized by `1e-12 trace` on the diagonal.
    pub regularized: bool,
    /// A current with exactly zero variance and zero gradient was dropped.
    pub reduced: bool,
}

/// `g^T Sigma^-1 g` with conditioning safeguards.
pub fn fisher_information(g: [f64; 2], cov: &Matrix2<f64>) -> Result<Fisher, SensitivityError> {
    let gv = Vector2::new(g[0], g[1]);
    if gv.norm() == 0.0 {
        return Ok(Fisher {
            value: 0.0,
            regularized: false,
            reduced: false,
        });
    }
    let trace = cov.trace();
    if !(trace > 0.0) || !trace.is_finite() {
        return Err(SensitivityError::SingularCovariance);
    }
    let silent: Vec<usize> = (0..2)
        .filter(|&k| cov[(k, k)] <= 1e-24 * trace && g[k].abs() <= 1e-12 * gv.norm())
        .collect();
    if silent.len() == 1 {
        let k = 1 - silent[0];
        return Ok(Fisher {
            value: g[k] * g[k] / cov[(k, k)],
            regularized: false,
            reduced: true,
        });
    }
    let eig = cov.symmetric_eigen().eigenvalues;
    let (lo, hi) = (eig.min(), eig.max());
    let mut c = *cov;
    let mut regularized = false;
    if !(lo > 0.0) || hi / lo > 1e12 {
        c += Matrix2::identity() * (1e-12 * trace);
        regularized = true;
    }
    let chol = c.cholesky().ok_or(SensitivityError::SingularCovariance)?;
    let value = gv.dot(&chol.solve(&gv));
    if !value.is_finite() {
        return Err(SensitivityError::SingularCovariance);
    }
    Ok(Fisher {
        value,
        regularized,
        reduced: false,
    })
}

/// Cramer-Rao minimum detectable shift and rotation rate.
pub fn mdr(fisher: f64, resonator: &ResonatorParams) -> Result<(f64, RotationRate), SensitivityError> {
    if !(fisher > 0.0) || !fisher.is_finite() {
        return Err(SensitivityError::ZeroInformation);
    }
    let delta_min = 1.0 / fisher.sqrt();
    let rate = omega_min_from_delta(delta_min, resonator).map_err(|_| SensitivityError::ZeroInformation)?;
    Ok((delta_min, rate))
}

fn closed_form(params: &ModelParams, kappa: f64, gamma: f64, flux: f64) -> RotationRate {
    let r = &params.resonator;
    let v = 2f64.sqrt() * r.lambda1 * r.index_n0 * (kappa + gamma).powi(2)
        / (32.0 * std::f64::consts::PI * r.radius * kappa * flux.sqrt());
    RotationRate::from_rad_per_s(v)
}

/// Back-scatter-free linear gyroscope bound at the fundamental, using the
/// configured P1, Qc1 and Qi1.
pub fn linear_mdr_closed_form(params: &ModelParams) -> RotationRate {
    let r = params.rates();
    closed_form(params, r.kappa[0], r.gamma[0], params.photon_fluxes()[0])
}

/// Linear gyroscope at critical coupling driven with the total injected
/// power at the fundamental: the baseline for improvement ratios.
pub fn matched_linear_baseline(params: &ModelParams) -> RotationRate {
    let r = params.rates();
    let flux = params.drive.total_power() / (params.constants.hbar * r.omega[0]);
    closed_form(params, r.gamma[0], r.gamma[0], flux)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalOptions {
    pub strategy: SolverStrategy,
    pub convention: MeanConvention,
    /// Fundamental Sagnac shift at which the Fisher information is taken.
    pub fisher_delta: f64,
    /// Initial finite-difference step; defaults to `1e-3 (kappa1 + gamma1)`.
    pub h0: Option<f64>,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            strategy: SolverStrategy::default(),
            convention: MeanConvention::default(),
            fisher_delta: 0.0,
            h0: None,
        }
    }
}

impl EvalOptions {
    pub fn classical() -> Self {
        Self {
            convention: MeanConvention::Classical,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SteadySummary {
    pub stability: Stability,
    pub max_real_part: f64,
    pub origin: BranchOrigin,
    pub candidates: usize,
    pub stable_candidates: usize,
    pub residual_norm: f64,
    pub amplitudes: [Complex64; 4],
    pub output_amplitudes: [Complex64; 4],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityReport {
    /// Mean currents at the configured rotation rate (A).
    pub mean_currents: [f64; 2],
    pub current_gradient: [f64; 2],
    pub gradient_step: f64,
    pub covariance: [[f64; 2]; 2],
    pub fisher: f64,
    pub fisher_regularized: bool,
    pub fisher_reduced: bool,
    pub delta_min: f64,
    pub omega_min: RotationRate,
    pub squeezing: SqueezingReport,
    pub steady_summary: SteadySummary,
    pub convention: MeanConvention,
    pub fisher_delta: f64,
    pub linear_baseline: RotationRate,
    pub improvement_ratio: f64,
    pub energy_defect: f64,
}

impl SensitivityReport {
    pub fn mdr_deg_per_hour(&self) -> f64 {
        self.omega_min.deg_per_hour
    }

    pub fn covariance_matrix(&self) -> Matrix2<f64> {
        Matrix2::new(
            self.covariance[0][0],
            self.covariance[0][1],
            self.covariance[1][0],
            self.covariance[1][1],
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InfeasibleReason {
    Unstable,
    Marginal,
}

impl InfeasibleReason {
    pub fn as_str(&self) -> &'static str {
        match self {
            InfeasibleReason::Unstable => "unstable",
            InfeasibleReason::Marginal => "marginal",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "lowercase")]
pub enum Evaluation {
    Feasible(Box<SensitivityReport>),
    Infeasible { reason: InfeasibleReason, detail: String },
}

impl Evaluation {
    pub fn report(&self) -> Option<&SensitivityReport> {
        match self {
            Evaluation::Feasible(r) => Some(r),
            Evaluation::Infeasible { .. } => None,
        }
    }

    pub fn is_feasible(&self) -> bool {
        matches!(self, Evaluation::Feasible(_))
    }
}

fn infeasible(params: &ModelParams, candidates: &[SteadyState]) -> Evaluation {
    let stable = candidates.iter().filter(|c| c.stability == Stability::Stable).count();
    let marginal = candidates.iter().any(|c| c.stability == Stability::Marginal);
    if stable > 0 && params.resonator.chi > 0.0 {
        return Evaluation::Infeasible {
            reason: InfeasibleReason::Unstable,
            detail: "no stable fixed point with excited fundamental (below parametric threshold)".into(),
        };
    }
    if marginal {
        return Evaluation::Infeasible {
            reason: InfeasibleReason::Marginal,
            detail: "only marginally stable fixed points".into(),
        };
    }
    Evaluation::Infeasible {
        reason: InfeasibleReason::Unstable,
        detail: format!("none of {} fixed points is stable", candidates.len()),
    }
}

/// Full single-point pipeline: operating point, stability gate, transfer,
/// covariance, gradient, Fisher information, MDR and squeezing.
pub fn evaluate_point(params: &ModelParams, options: &EvalOptions) -> Result<Evaluation, EvalError> {
    params.validate()?;
    let strategy = &options.strategy;
    let fp = params.with_delta1(options.fisher_delta);
    let sel = select_operating_point(&fp, strategy)?;
    let Some((state, origin)) = sel.chosen.clone() else {
        return Ok(infeasible(params, &sel.candidates));
    };

    let transfer = input_output_transfer(&state, &fp)?;
    let coeffs = current_coefficients(&state, &transfer, &fp);
    let cov = current_covariance(&coeffs);

    let r = fp.rates();
    let h0 = options.h0.unwrap_or(1e-3 * (r.kappa[0] + r.gamma[0]));
    let grad = current_gradient(&fp, &state, h0, options.convention, strategy).map_err(EvalError::Gradient)?;
    let fisher = fisher_information(grad.value, &cov).map_err(EvalError::Fisher)?;
    let (delta_min, omega_min) = mdr(fisher.value, &fp.resonator).map_err(EvalError::Fisher)?;
    let squeezing = squeezing_levels(&state, &transfer);

    let mean = if params.rotation.delta1 == 0.0 {
        [0.0, 0.0]
    } else if params.rotation.delta1 == options.fisher_delta {
        mean_currents_with(&state, params, options.convention)?
    } else {
        let s = follow_rotation(params, &state, options.fisher_delta, strategy)?;
        mean_currents_with(&s, params, options.convention)?
    };

    let baseline = matched_linear_baseline(params);
    let summary = SteadySummary {
        stability: state.stability,
        max_real_part: state.max_real_part,
        origin,
        candidates: sel.candidates.len(),
        stable_candidates: sel
            .candidates
            .iter()
            .filter(|c| c.stability == Stability::Stable)
            .count(),
        residual_norm: state.residual_norm,
        amplitudes: state.amplitudes.a,
        output_amplitudes: state.output_amplitudes,
    };
    Ok(Evaluation::Feasible(Box::new(SensitivityReport {
        mean_currents: mean,
        current_gradient: grad.value,
        gradient_step: grad.step,
        covariance: [[cov[(0, 0)], cov[(0, 1)]], [cov[(1, 0)], cov[(1, 1)]]],
        fisher: fisher.value,
        fisher_regularized: fisher.regularized,
        fisher_reduced: fisher.reduced,
        delta_min,
        omega_min,
        squeezing,
        steady_summary: summary,
        convention: options.convention,
        fisher_delta: options.fisher_delta,
        linear_baseline: baseline,
        improvement_ratio: baseline.deg_per_hour / omega_min.deg_per_hour,
        energy_defect: energy_defect(&state, &fp),
    })))
}

/// Steps the Sagnac shift from `from_delta` to the configured value,
/// re-solving along the way.
fn follow_rotation(
    params: &ModelParams,
    start: &SteadyState,
    from_delta: f64,
    strategy: &SolverStrategy,
) -> Result<SteadyState, EvalError> {
    let target = params.rotation.delta1;
    let width = params.rates().half_width(0);
    let steps = (((target - from_delta).abs() / (0.05 * width)).ceil() as usize).clamp(1, 200);
    let mut a = start.amplitudes.a;
    let mut last = start.clone();
    for k in 1..=steps {
        let d = from_delta + (target - from_delta) * k as f64 / steps as f64;
        last = refine(&params.with_delta1(d), &a, strategy)?;
        a = last.amplitudes.a;
    }
    Ok(last)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::DEG_PER_HOUR;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn linear_params(p1: f64, qc1: f64) -> ModelParams {
        let mut p = ModelParams::tfln_reference()
            .with_drive(p1, 0.0)
            .with_coupling(qc1, 1e6);
        p.resonator.chi = 0.0;
        p.resonator.beta1 = 0.0;
        p.resonator.beta2 = 0.0;
        p
    }

    fn report(p: &ModelParams, o: &EvalOptions) -> SensitivityReport {
        match evaluate_point(p, o).unwrap() {
            Evaluation::Feasible(r) => *r,
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn fisher_examples() {
        let c = Matrix2::new(2.0, 0.0, 0.0, 5.0);
        assert_eq!(fisher_information([0.0, 0.0], &c).unwrap().value, 0.0);
        let f = fisher_information([3.0, 4.0], &c).unwrap();
        assert_relative_eq!(f.value, 9.0 / 2.0 + 16.0 / 5.0, max_relative = 1e-14);
        assert!(!f.regularized);
    }

    #[test]
    fn fisher_regularizes_near_singular() {
        let c = Matrix2::new(1.0, 1.0, 1.0, 1.0);
        let f = fisher_information([1.0, -1.0], &c).unwrap();
        assert!(f.regularized);
        assert!(f.value.is_finite());
    }

    #[test]
    fn mdr_examples() {
        let res = ModelParams::tfln_reference().resonator;
        let (d, _) = mdr(1.0, &res).unwrap();
        assert_eq!(d, 1.0);
        assert_eq!(mdr(0.0, &res), Err(SensitivityError::ZeroInformation));
    }

    #[test]
    fn closed_form_examples() {
        let p = linear_params(0.945e-6, 1e7);
        let v = linear_mdr_closed_form(&p).deg_per_hour;
        assert!((v - 87.5).abs() < 0.5, "{v}");
        let mut half = p;
        half.resonator.radius *= 0.5;
        assert_relative_eq!(
            linear_mdr_closed_form(&half).deg_per_hour,
            2.0 * v,
            max_relative = 1e-12
        );
        let c = p.constants.c;
        let n = p.photon_fluxes()[0];
        let alt = 2f64.sqrt() * c * 2.2 / (4.0 * 0.02 * n.sqrt() * 1e7);
        assert_relative_eq!(linear_mdr_closed_form(&p).rad_per_s, alt, max_relative = 1e-12);
    }

    #[test]
    fn engine_matches_closed_form_linear() {
        let o = EvalOptions::classical();
        for (p1, qc) in [(0.945e-6, 5e6), (1e-5, 2e7)] {
            let p = linear_params(p1, qc);
            let r = report(&p, &o);
            let cf = linear_mdr_closed_form(&p).deg_per_hour;
            assert_relative_eq!(r.mdr_deg_per_hour(), cf, max_relative = 1e-6);
        }
    }

    #[test]
    fn quadrupled_flux_halves_mdr() {
        let o = EvalOptions::classical();
        let a = report(&linear_params(1e-6, 4e6), &o).mdr_deg_per_hour();
        let b = report(&linear_params(4e-6, 4e6), &o).mdr_deg_per_hour();
        assert_relative_eq!(a / b, 2.0, max_relative = 1e-6);
    }

    #[test]
    fn zero_rotation_means_are_exactly_zero() {
        let p = ModelParams::tfln_reference()
            .with_drive(0.0, 23.507e-3)
            .with_coupling(1.018e5, 5.462e5);
        let r = report(&p, &EvalOptions::default());
        assert_eq!(r.mean_currents, [0.0, 0.0]);
    }

    #[test]
    fn currents_flip_sign_with_rotation() {
        let p = ModelParams::tfln_reference()
            .with_drive(1.5e-3, 1.873e-3)
            .with_coupling(4.353e5, 8.769e6);
        for conv in [MeanConvention::Classical, MeanConvention::CoherentInput] {
            let o = EvalOptions {
                convention: conv,
                ..EvalOptions::default()
            };
            let a = report(&p.with_omega(100.0 * DEG_PER_HOUR), &o).mean_currents;
            let b = report(&p.with_omega(-100.0 * DEG_PER_HOUR), &o).mean_currents;
            for k in 0..2 {
                assert!(
                    (a[k] + b[k]).abs() <= 1e-8 * a[k].abs().max(1e-30),
                    "{conv:?} {a:?} {b:?}"
                );
            }
        }
    }

    #[test]
    fn gradient_even_in_rotation() {
        let p = ModelParams::tfln_reference()
            .with_drive(0.945e-6, 0.0)
            .with_coupling(6.747e6, 6.675e7);
        let st = SolverStrategy::default();
        let h0 = 1e-3 * (p.rates().kappa[0] + p.rates().gamma[0]);
        let mut g = Vec::new();
        for om in [300.0, -300.0] {
            let q = p.with_omega(om * DEG_PER_HOUR);
            let s = select_operating_point(&q, &st).unwrap().chosen.unwrap().0;
            g.push(
                current_gradient(&q, &s, h0, MeanConvention::CoherentInput, &st)
                    .unwrap()
                    .value,
            );
        }
        for (a, b) in g[0].iter().zip(&g[1]) {
            assert!((a - b).abs() <= 1e-6 * a.abs());
        }
    }

    #[test]
    fn gradient_step_halving_is_stable() {
        let p = ModelParams::tfln_reference()
            .with_drive(0.0, 23.507e-3)
            .with_coupling(1.018e5, 5.462e5);
        let st = SolverStrategy::default();
        let s = select_operating_point(&p, &st).unwrap().chosen.unwrap().0;
        let h0 = 1e-3 * (p.rates().kappa[0] + p.rates().gamma[0]);
        let a = current_gradient(&p, &s, h0, MeanConvention::CoherentInput, &st).unwrap();
        let b = current_gradient(&p, &s, h0 / 2.0, MeanConvention::CoherentInput, &st).unwrap();
        let na = Vector2::new(a.value[0], a.value[1]);
        let nb = Vector2::new(b.value[0], b.value[1]);
        assert!((na - nb).norm() < 1e-4 * nb.norm());
    }

    #[test]
    fn below_threshold_second_harmonic_is_infeasible() {
        let p = ModelParams::tfln_reference()
            .with_drive(0.0, 10e-3)
            .with_coupling(1.018e5, 5.462e5);
        match evaluate_point(&p, &EvalOptions::default()).unwrap() {
            Evaluation::Infeasible { reason, .. } => assert_eq!(reason, InfeasibleReason::Unstable),
            other => panic!("{other:?}"),
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(8))]
        #[test]
        fn detector_constants_cancel(lp in -6.5f64..-5.0, lq in 6.0f64..7.5, scale_ix in 0usize..3) {
            let p = ModelParams::tfln_reference().with_drive(10f64.powf(lp), 0.0).with_coupling(10f64.powf(lq), 6.675e7);
            let o = EvalOptions::default();
            let base = report(&p, &o).mdr_deg_per_hour();
            let mut q = p;
            q.detection.responsivity *= [0.5, 2.0, 10.0][scale_ix];
            let scaled = report(&q, &o).mdr_deg_per_hour();
            prop_assert!((scaled - base).abs() <= 1e-10 * base);
        }
    }
}
