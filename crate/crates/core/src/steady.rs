//! Classical mean-field fixed points, their stability, and critical powers.
//!
//! The four complex amplitudes are expanded into the real vector
//! `[Re a0..a3, Im a0..a3]` in the mode order `[1cw, 1ccw, 2cw, 2ccw]`.
//! The residual map is `F`; the mean-field dynamics are `da/dt = -F(a)`.

use nalgebra::{DMatrix, SMatrix, SVector};
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::SolverError;
use crate::model::{InjectionScheme, ModelParams, ParamKey, Rates};

pub type Vec8 = SVector<f64, 8>;
pub type Mat8 = SMatrix<f64, 8, 8>;

/// Intracavity amplitudes (sqrt photons) together with the input amplitudes
/// (sqrt photons per second) they were computed for.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModeAmplitudes {
    pub a: [Complex64; 4],
    pub b_in: [Complex64; 4],
}

impl ModeAmplitudes {
    pub fn new(a: [Complex64; 4], params: &ModelParams) -> Self {
        Self {
            a,
            b_in: params.input_amplitudes(),
        }
    }

    pub fn to_real(&self) -> Vec8 {
        pack(&self.a)
    }
}

pub fn pack(a: &[Complex64; 4]) -> Vec8 {
    let mut x = Vec8::zeros();
    for m in 0..4 {
        x[m] = a[m].re;
        x[4 + m] = a[m].im;
    }
    x
}

pub fn unpack(x: &Vec8) -> [Complex64; 4] {
    std::array::from_fn(|m| Complex64::new(x[m], x[4 + m]))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stability {
    Stable,
    Unstable,
    Marginal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SteadyState {
    pub amplitudes: ModeAmplitudes,
    pub residual_norm: f64,
    /// Eigenvalues of the dynamical Jacobian `-dF/dx` (rad/s).
    pub jacobian_eigs: Vec<Complex64>,
    pub max_real_part: f64,
    pub stability: Stability,
    pub output_amplitudes: [Complex64; 4],
}

impl SteadyState {
    pub fn x(&self) -> Vec8 {
        self.amplitudes.to_real()
    }

    /// Norm of the fundamental amplitudes relative to the full state.
    pub fn fundamental_fraction(&self) -> f64 {
        let a = &self.amplitudes.a;
        let f = (a[0].norm_sqr() + a[1].norm_sqr()).sqrt();
        let t = a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if t == 0.0 {
            0.0
        } else {
            f / t
        }
    }
}

/// Multi-start Newton settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverStrategy {
    pub random_starts: usize,
    pub seed: u64,
    pub max_iterations: usize,
    /// Residual tolerance relative to `max(1, |sqrt(kappa) b_in|)`.
    pub tolerance: f64,
    pub dedup_tolerance: f64,
    /// Stability margin relative to `kappa1 + gamma1`.
    pub margin_factor: f64,
    /// Number of geometric drive-scale steps used for branch following.
    pub continuation_steps: usize,
}

impl Default for SolverStrategy {
    fn default() -> Self {
        Self {
            random_starts: 16,
            seed: 0,
            max_iterations: 100,
            tolerance: 1e-10,
            dedup_tolerance: 1e-6,
            margin_factor: 1e-6,
            continuation_steps: 40,
        }
    }
}

impl SolverStrategy {
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }
}

/// Precomputed rates and drive terms for one parameter point.
#[derive(Debug, Clone, Copy)]
pub(crate) struct System {
    pub rates: Rates,
    pub sqrt_kappa: [f64; 4],
    /// `sqrt(kappa) * b_in` per mode.
    pub drive: [Complex64; 4],
}

impl System {
    pub fn new(params: &ModelParams) -> Self {
        let rates = params.rates();
        let b = params.input_amplitudes();
        let sqrt_kappa = std::array::from_fn(|m| rates.kappa_of_mode(m).sqrt());
        let drive = std::array::from_fn(|m| b[m] * sqrt_kappa[m]);
        Self {
            rates,
            sqrt_kappa,
            drive,
        }
    }

    pub fn drive_norm(&self) -> f64 {
        self.drive.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn residual(&self, x: &Vec8) -> Vec8 {
        let r = &self.rates;
        let (g1, g2) = (r.half_width(0), r.half_width(1));
        let chi = r.chi;
        let mut f = Vec8::zeros();
        for (m, n, s) in [(0usize, 1usize, 1.0f64), (1, 0, -1.0)] {
            let (p, q) = (m + 2, n + 2);
            let d1 = s * r.delta[0];
            let d2 = s * r.delta[1];
            let (xm, ym, xp, yp) = (x[m], x[4 + m], x[p], x[4 + p]);
            f[m] = g1 * xm + d1 * ym + r.beta[0] * x[4 + n] - chi * (xm * xp + ym * yp) - self.drive[m].re;
            f[4 + m] = g1 * ym - d1 * xm - r.beta[0] * x[n] - chi * (xm * yp - ym * xp) - self.drive[m].im;
            f[p] = g2 * xp + d2 * yp + r.beta[1] * x[4 + q] + 0.5 * chi * (xm * xm - ym * ym) - self.drive[p].re;
            f[4 + p] = g2 * yp - d2 * xp - r.beta[1] * x[q] + chi * xm * ym - self.drive[p].im;
        }
        f
    }

    /// Analytic `dF/dx`.
    pub fn jacobian(&self, x: &Vec8) -> Mat8 {
        let r = &self.rates;
        let (g1, g2) = (r.half_width(0), r.half_width(1));
        let chi = r.chi;
        let mut j = Mat8::zeros();
        for (m, n, s) in [(0usize, 1usize, 1.0f64), (1, 0, -1.0)] {
            let (p, q) = (m + 2, n + 2);
            let d1 = s * r.delta[0];
            let d2 = s * r.delta[1];
            let (xm, ym, xp, yp) = (x[m], x[4 + m], x[p], x[4 + p]);
            let (xm_, ym_, xp_, yp_) = (m, 4 + m, p, 4 + p);

            j[(xm_, xm_)] = g1 - chi * xp;
            j[(xm_, ym_)] = d1 - chi * yp;
            j[(xm_, 4 + n)] = r.beta[0];
            j[(xm_, xp_)] = -chi * xm;
            j[(xm_, yp_)] = -chi * ym;

            j[(ym_, ym_)] = g1 + chi * xp;
            j[(ym_, xm_)] = -d1 - chi * yp;
            j[(ym_, n)] = -r.beta[0];
            j[(ym_, yp_)] = -chi * xm;
            j[(ym_, xp_)] = chi * ym;

            j[(xp_, xp_)] = g2;
            j[(xp_, yp_)] = d2;
            j[(xp_, 4 + q)] = r.beta[1];
            j[(xp_, xm_)] = chi * xm;
            j[(xp_, ym_)] = -chi * ym;

            j[(yp_, yp_)] = g2;
            j[(yp_, xp_)] = -d2;
            j[(yp_, q)] = -r.beta[1];
            j[(yp_, xm_)] = chi * ym;
            j[(yp_, ym_)] = chi * xm;
        }
        j
    }

    pub fn tolerance(&self, strategy: &SolverStrategy) -> f64 {
        strategy.tolerance * self.drive_norm().max(1.0)
    }

    pub fn margin(&self, strategy: &SolverStrategy) -> f64 {
        strategy.margin_factor * (self.rates.kappa[0] + self.rates.gamma[0])
    }

    /// Exact fixed point of the system with the nonlinearity removed.
    pub fn linear_solution(&self) -> Option<Vec8> {
        let mut lin = *self;
        lin.rates.chi = 0.0;
        let j = lin.jacobian(&Vec8::zeros());
        let rhs = -lin.residual(&Vec8::zeros());
        j.lu().solve(&rhs)
    }

    pub fn outputs(&self, b_in: &[Complex64; 4], a: &[Complex64; 4]) -> [Complex64; 4] {
        std::array::from_fn(|m| b_in[m] - self.sqrt_kappa[m] * a[m])
    }
}

/// Residuals `f1..f4` of the steady-state equations for the given state.
pub fn residual(state: &ModeAmplitudes, params: &ModelParams) -> [Complex64; 4] {
    let r = params.rates();
    let a = &state.a;
    let b = &state.b_in;
    let sk: [f64; 4] = std::array::from_fn(|m| r.kappa_of_mode(m).sqrt());
    let i = Complex64::i();
    let g1 = r.half_width(0);
    let g2 = r.half_width(1);
    let (d1, d2) = (r.delta[0], r.delta[1]);
    let chi = r.chi;
    [
        (g1 - i * d1) * a[0] - i * r.beta[0] * a[1] - chi * a[0].conj() * a[2] - sk[0] * b[0],
        (g1 + i * d1) * a[1] - i * r.beta[0] * a[0] - chi * a[1].conj() * a[3] - sk[1] * b[1],
        (g2 - i * d2) * a[2] - i * r.beta[1] * a[3] + 0.5 * chi * a[0] * a[0] - sk[2] * b[2],
        (g2 + i * d2) * a[3] - i * r.beta[1] * a[2] + 0.5 * chi * a[1] * a[1] - sk[3] * b[3],
    ]
}

/// Jacobian of the real-expanded residual with respect to
/// `[Re a0..a3, Im a0..a3]`.
pub fn jacobian(state: &ModeAmplitudes, params: &ModelParams) -> Mat8 {
    System::new(params).jacobian(&state.to_real())
}

/// Classifies the dynamical Jacobian `dg/dx` by its largest real part.
pub fn classify_stability(dynamics: &DMatrix<f64>, margin: f64) -> Result<Stability, SolverError> {
    if !dynamics.is_square() {
        return Err(SolverError::InvalidInput("Jacobian must be square".into()));
    }
    let eigs = dynamics.clone().complex_eigenvalues();
    let max_re = eigs.iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max);
    if !max_re.is_finite() && !eigs.is_empty() {
        return Err(SolverError::Numeric("eigenvalue computation failed".into()));
    }
    Ok(verdict(max_re, margin))
}

fn verdict(max_re: f64, margin: f64) -> Stability {
    if max_re < -margin {
        Stability::Stable
    } else if max_re > margin {
        Stability::Unstable
    } else {
        Stability::Marginal
    }
}

pub(crate) fn dynamics_eigenvalues(j_f: &Mat8) -> Vec<Complex64> {
    (-j_f).complex_eigenvalues().iter().copied().collect()
}

pub(crate) fn build_state(sys: &System, params: &ModelParams, x: &Vec8, strategy: &SolverStrategy) -> SteadyState {
    let a = unpack(x);
    let b_in = params.input_amplitudes();
    let eigs = dynamics_eigenvalues(&sys.jacobian(x));
    let max_re = eigs.iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max);
    let stability = if max_re.is_finite() {
        verdict(max_re, sys.margin(strategy))
    } else {
        Stability::Unstable
    };
    SteadyState {
        amplitudes: ModeAmplitudes { a, b_in },
        residual_norm: sys.residual(x).norm(),
        jacobian_eigs: eigs,
        max_real_part: max_re,
        stability,
        output_amplitudes: sys.outputs(&b_in, &a),
    }
}

/// Result of one damped Newton run.
#[derive(Debug, Clone, PartialEq)]
pub struct NewtonOutcome {
    pub x: Vec8,
    pub converged: bool,
    pub iterations: usize,
    /// Residual norm before each iteration, ending with the final one.
    pub history: Vec<f64>,
}

const POLISH_STEPS: usize = 3;

pub(crate) fn newton(sys: &System, x0: Vec8, strategy: &SolverStrategy) -> NewtonOutcome {
    let tol = sys.tolerance(strategy);
    let mut x = x0;
    let mut f = sys.residual(&x);
    let mut r = f.norm();
    let mut history = vec![r];
    let mut polish = 0;
    for it in 0..strategy.max_iterations {
        if r <= tol {
            // A few extra full steps drive the residual to round-off.
            if polish == POLISH_STEPS {
                return NewtonOutcome {
                    x,
                    converged: true,
                    iterations: it,
                    history,
                };
            }
            polish += 1;
        }
        let Some(dx) = sys.jacobian(&x).lu().solve(&(-f)) else {
            break;
        };
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..30 {
            let xt = x + dx * t;
            let ft = sys.residual(&xt);
            let rt = ft.norm();
            if rt < r {
                x = xt;
                f = ft;
                r = rt;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        history.push(r);
        if !r.is_finite() || (!accepted && polish == 0) {
            break;
        }
        if !accepted {
            return NewtonOutcome {
                x,
                converged: r <= tol,
                iterations: it + 1,
                history,
            };
        }
    }
    NewtonOutcome {
        x,
        converged: r <= tol,
        iterations: history.len() - 1,
        history,
    }
}

/// Damped Newton from a user-supplied guess.
pub fn newton_solve(params: &ModelParams, guess: &[Complex64; 4], strategy: &SolverStrategy) -> NewtonOutcome {
    newton(&System::new(params), pack(guess), strategy)
}

/// Re-solves near a known state and returns it only if Newton converges.
pub fn refine(
    params: &ModelParams,
    guess: &[Complex64; 4],
    strategy: &SolverStrategy,
) -> Result<SteadyState, SolverError> {
    let sys = System::new(params);
    let out = newton(&sys, pack(guess), strategy);
    if out.converged {
        Ok(build_state(&sys, params, &out.x, strategy))
    } else {
        Err(SolverError::NoConvergence {
            starts: 1,
            best_residual: *out.history.last().unwrap_or(&f64::NAN),
        })
    }
}

fn start_scales(sys: &System, linear: &Option<Vec8>) -> [f64; 4] {
    let r = &sys.rates;
    let lin: [f64; 4] = match linear {
        Some(x) => std::array::from_fn(|m| Complex64::new(x[m], x[4 + m]).norm()),
        None => [0.0; 4],
    };
    let mut nl = [0.0; 4];
    if r.chi > 0.0 {
        let pump = sys.drive[2].norm().max(sys.drive[3].norm());
        nl[0] = (2.0 * pump / r.chi).sqrt();
        nl[1] = nl[0];
        nl[2] = r.half_width(0) / r.chi;
        nl[3] = nl[2];
    }
    std::array::from_fn(|m| lin[m].max(nl[m]))
}

fn same_point(x: &Vec8, y: &Vec8, tol: f64) -> bool {
    (x - y).norm() <= tol * x.norm().max(y.norm()).max(1.0)
}

/// All distinct fixed points reachable from the multi-start set.
pub fn solve_steady(params: &ModelParams, strategy: &SolverStrategy) -> Result<Vec<SteadyState>, SolverError> {
    let sys = System::new(params);
    let linear = sys.linear_solution();
    let scales = start_scales(&sys, &linear);

    let mut starts = vec![Vec8::zeros()];
    if let Some(l) = linear {
        starts.push(l);
    }
    for k in 0..strategy.random_starts {
        let mut rng = ChaCha8Rng::seed_from_u64(strategy.seed);
        rng.set_stream(k as u64);
        let mut x = Vec8::zeros();
        for m in 0..4 {
            let re: f64 = StandardNormal.sample(&mut rng);
            let im: f64 = StandardNormal.sample(&mut rng);
            x[m] = re * scales[m];
            x[4 + m] = im * scales[m];
        }
        starts.push(x);
    }

    let mut found: Vec<Vec8> = Vec::new();
    let mut best = f64::INFINITY;
    for s in &starts {
        let out = newton(&sys, *s, strategy);
        best = best.min(*out.history.last().unwrap_or(&f64::INFINITY));
        if !out.converged {
            continue;
        }
        if found.iter().any(|y| same_point(&out.x, y, strategy.dedup_tolerance)) {
            continue;
        }
        found.push(out.x);
    }
    if found.is_empty() {
        return Err(SolverError::NoConvergence {
            starts: starts.len(),
            best_residual: best,
        });
    }
    Ok(found.iter().map(|x| build_state(&sys, params, x, strategy)).collect())
}

/// Whether a fixed point may serve as an operating point. With only the
/// second harmonic driven, states with an empty fundamental carry no
/// fundamental signal and are excluded.
pub fn admissible(state: &SteadyState, params: &ModelParams) -> bool {
    if params.resonator.chi > 0.0 && params.drive.scheme() == InjectionScheme::SecondHarmonic {
        state.fundamental_fraction() > 1e-6
    } else {
        true
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BranchOrigin {
    /// Reached by continuation in drive power from near zero.
    Continuation,
    /// Deterministic pick among stable candidates when continuation fails
    /// to land on one.
    Canonical,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    pub chosen: Option<(SteadyState, BranchOrigin)>,
    pub candidates: Vec<SteadyState>,
}

fn scaled_drive(params: &ModelParams, s: f64) -> ModelParams {
    let mut p = *params;
    p.drive.p1 *= s;
    p.drive.p2 *= s;
    p
}

/// Follows the fixed point connected to the low-power linear solution as
/// both drive powers are ramped from `s0 * P` to `P`.
pub fn follow_drive(params: &ModelParams, s0: f64, strategy: &SolverStrategy) -> Option<SteadyState> {
    let steps = strategy.continuation_steps.max(2);
    let ratio = (1.0 / s0).powf(1.0 / (steps - 1) as f64);
    let mut s = s0;
    let p0 = scaled_drive(params, s);
    let sys0 = System::new(&p0);
    let mut x = newton(&sys0, sys0.linear_solution()?, strategy);
    if !x.converged {
        return None;
    }
    for k in 1..steps {
        let s_next = if k == steps - 1 { 1.0 } else { s * ratio };
        let guess = x.x * (s_next / s).sqrt();
        let pk = scaled_drive(params, s_next);
        let sys = System::new(&pk);
        x = newton(&sys, guess, strategy);
        if !x.converged {
            return None;
        }
        s = s_next;
    }
    let sys = System::new(params);
    Some(build_state(&sys, params, &x.x, strategy))
}

fn canonical_key(s: &SteadyState) -> (f64, f64) {
    let a = &s.amplitudes.a;
    (a[0].re + a[1].re, a[0].re)
}

/// Chooses the operating fixed point: the continuation branch if it is
/// stable and admissible, otherwise the canonical stable admissible state.
pub fn select_operating_point(params: &ModelParams, strategy: &SolverStrategy) -> Result<Selection, SolverError> {
    let candidates = solve_steady(params, strategy)?;
    let usable = |s: &SteadyState| s.stability == Stability::Stable && admissible(s, params);

    if let Some(end) = follow_drive(params, 1e-4, strategy) {
        if usable(&end) {
            let x = end.x();
            let matched = candidates
                .iter()
                .find(|c| same_point(&c.x(), &x, strategy.dedup_tolerance))
                .cloned()
                .unwrap_or(end);
            return Ok(Selection {
                chosen: Some((matched, BranchOrigin::Continuation)),
                candidates,
            });
        }
    }
    let chosen = candidates
        .iter()
        .filter(|c| usable(c))
        .max_by(|a, b| {
            canonical_key(a)
                .partial_cmp(&canonical_key(b))
                .unwrap_or(std::cmp::Ordering::Equal)
        })
        .cloned()
        .map(|s| (s, BranchOrigin::Canonical));
    Ok(Selection { chosen, candidates })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CriticalPower {
    /// Midpoint of the final bracket (W).
    pub pc: f64,
    pub lower: f64,
    pub upper: f64,
    pub stable_below: bool,
    /// Largest dynamical real part at each end of the final bracket.
    pub max_real_lower: f64,
    pub max_real_upper: f64,
}

fn drive_key(scheme: InjectionScheme) -> Result<Option<ParamKey>, SolverError> {
    match scheme {
        InjectionScheme::Fundamental => Ok(Some(ParamKey::P1)),
        InjectionScheme::SecondHarmonic => Ok(Some(ParamKey::P2)),
        InjectionScheme::Dual => Ok(None),
        InjectionScheme::Undriven => Err(SolverError::InvalidInput("critical power needs a driven scheme".into())),
    }
}

fn set_power(template: &ModelParams, scheme: InjectionScheme, power: f64) -> Result<ModelParams, SolverError> {
    let mut p = *template;
    match drive_key(scheme)? {
        Some(ParamKey::P1) => {
            p.drive.p1 = power;
            p.drive.p2 = 0.0;
        }
        Some(_) => {
            p.drive.p1 = 0.0;
            p.drive.p2 = power;
        }
        None => {
            let total = template.drive.total_power();
            if total <= 0.0 {
                return Err(SolverError::InvalidInput("dual scheme needs both powers set".into()));
            }
            p.drive.p1 = template.drive.p1 * power / total;
            p.drive.p2 = template.drive.p2 * power / total;
        }
    }
    Ok(p)
}

/// Stability verdict of the continuation-followed branch at one power.
/// A lost branch counts as not stable.
pub fn branch_verdict(params: &ModelParams, strategy: &SolverStrategy) -> (bool, f64) {
    match follow_drive(params, 1e-3, strategy) {
        Some(s) => (s.stability == Stability::Stable, s.max_real_part),
        None => (false, f64::NAN),
    }
}

/// Bisects the injected power (per port; total for the dual scheme) on the
/// stability verdict of the followed branch to relative 1e-4.
pub fn critical_power(
    template: &ModelParams,
    scheme: InjectionScheme,
    bracket: (f64, f64),
    strategy: &SolverStrategy,
) -> Result<CriticalPower, SolverError> {
    let (mut lo, mut hi) = bracket;
    if !(lo > 0.0 && hi > lo) {
        return Err(SolverError::InvalidInput(format!("bad bracket [{lo:e}, {hi:e}]")));
    }
    let (v_lo, mut re_lo) = branch_verdict(&set_power(template, scheme, lo)?, strategy);
    let (v_hi, mut re_hi) = branch_verdict(&set_power(template, scheme, hi)?, strategy);
    if v_lo == v_hi {
        return Err(SolverError::NoBracket(format!(
            "{} at both {lo:e} W and {hi:e} W",
            if v_lo { "stable" } else { "not stable" }
        )));
    }
    while hi - lo > 1e-4 * hi {
        let mid = 0.5 * (lo + hi);
        let (v, re) = branch_verdict(&set_power(template, scheme, mid)?, strategy);
        if v == v_lo {
            lo = mid;
            re_lo = re;
        } else {
            hi = mid;
            re_hi = re;
        }
    }
    Ok(CriticalPower {
        pc: 0.5 * (lo + hi),
        lower: lo,
        upper: hi,
        stable_below: v_lo,
        max_real_lower: re_lo,
        max_real_upper: re_hi,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<[Complex64; 4]>,
}

impl Trajectory {
    pub fn last(&self) -> &[Complex64; 4] {
        self.states.last().expect("trajectory has at least the initial state")
    }
}

/// Fastest linear rate of the system, used to bound the RK4 step.
pub fn fastest_rate(params: &ModelParams) -> f64 {
    let r = params.rates();
    r.kappa.iter().chain(r.gamma.iter()).copied().fold(0.0, f64::max)
}

const MAX_SAMPLES: usize = 2000;

/// Fixed-step RK4 integration of the noise-free mean-field equations.
pub fn integrate_classical(
    params: &ModelParams,
    initial: &ModeAmplitudes,
    duration: f64,
    dt: f64,
) -> Result<Trajectory, SolverError> {
    let limit = 0.1 / fastest_rate(params);
    if !(dt > 0.0 && dt <= limit * (1.0 + 1e-12)) {
        return Err(SolverError::InvalidInput(format!(
            "dt = {dt:e} s does not resolve the fastest rate (need <= {limit:e} s)"
        )));
    }
    if !(duration >= 0.0) {
        return Err(SolverError::InvalidInput("negative duration".into()));
    }
    let sys = System::new(params);
    let g = |x: &Vec8| -sys.residual(x);
    let steps = (duration / dt).ceil() as usize;
    let stride = steps.div_ceil(MAX_SAMPLES).max(1);
    let mut x = initial.to_real();
    let mut times = vec![0.0];
    let mut states = vec![unpack(&x)];
    for k in 1..=steps {
        let k1 = g(&x);
        let k2 = g(&(x + k1 * (0.5 * dt)));
        let k3 = g(&(x + k2 * (0.5 * dt)));
        let k4 = g(&(x + k3 * dt));
        x += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0);
        let t = k as f64 * dt;
        if !x.iter().all(|v| v.is_finite()) || x.amax() > 1e12 {
            return Err(SolverError::Diverged { time: t });
        }
        if k % stride == 0 || k == steps {
            times.push(t);
            states.push(unpack(&x));
        }
    }
    Ok(Trajectory { times, states })
}

/// Natural-parameter continuation along `grid`, starting from the
/// operating point at the first grid value.
pub fn continue_branch(
    params: &ModelParams,
    key: ParamKey,
    grid: &[f64],
    strategy: &SolverStrategy,
) -> Result<Vec<SteadyState>, SolverError> {
    let Some(&first) = grid.first() else {
        return Ok(Vec::new());
    };
    let mut p = *params;
    key.set(&mut p, first);
    let sel = select_operating_point(&p, strategy)?;
    let start = match sel.chosen {
        Some((s, _)) => s,
        None => sel.candidates[0].clone(),
    };
    let mut branch = vec![start];
    for (i, &v) in grid.iter().enumerate().skip(1) {
        key.set(&mut p, v);
        let prev = branch.last().expect("non-empty").amplitudes.a;
        match refine(&p, &prev, strategy) {
            Ok(s) => branch.push(s),
            Err(_) => return Err(SolverError::BranchLost { index: i, value: v }),
        }
    }
    Ok(branch)
}

/// Power bookkeeping at a fixed point: `(input, output, dissipated)` in W.
pub fn energy_balance(state: &SteadyState, params: &ModelParams) -> (f64, f64, f64) {
    let r = params.rates();
    let hbar = params.constants.hbar;
    let mut pin = 0.0;
    let mut pout = 0.0;
    let mut pdis = 0.0;
    for m in 0..4 {
        let w = r.omega[m / 2];
        pin += hbar * w * state.amplitudes.b_in[m].norm_sqr();
        pout += hbar * w * state.output_amplitudes[m].norm_sqr();
        pdis += hbar * w * r.gamma_of_mode(m) * state.amplitudes.a[m].norm_sqr();
    }
    (pin, pout, pdis)
}

/// Relative energy-balance defect `|in - out - dissipated| / in`.
pub fn energy_defect(state: &SteadyState, params: &ModelParams) -> f64 {
    let (pin, pout, pdis) = energy_balance(state, params);
    if pin == 0.0 {
        (pout + pdis).abs()
    } else {
        (pin - pout - pdis).abs() / pin
    }
}
