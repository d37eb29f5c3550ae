//! Sequential GP-EI minimization over the unit cube, and its mapping onto
//! gyroscope design parameters.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::acquisition::maximize_ei;
use super::gp::{Gp, GpHyper};
use super::lhs::maximin_lhs;
use crate::error::OptimizerError;
use crate::model::{InjectionScheme, ModelParams, ParamKey};
use crate::sensitivity::{evaluate_point, EvalOptions, Evaluation, SensitivityReport};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BayesConfig {
    pub budget: usize,
    pub seed: u64,
    /// Initial design size; `2 dim + 2` when absent.
    pub initial: Option<usize>,
    pub candidates: usize,
    pub refit_every: usize,
    /// Penalty value used while no feasible point has been seen.
    pub default_penalty: f64,
    /// Offset added to the worst feasible objective for infeasible points.
    pub penalty_offset: f64,
}

impl BayesConfig {
    pub fn new(budget: usize, seed: u64) -> Self {
        Self {
            budget,
            seed,
            initial: None,
            candidates: 512,
            refit_every: 5,
            default_penalty: 5.0,
            penalty_offset: 3.0,
        }
    }

    pub fn initial_size(&self, dim: usize) -> usize {
        self.initial.unwrap_or(2 * dim + 2)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub iteration: usize,
    /// Point in unit-cube coordinates.
    pub unit: Vec<f64>,
    /// Objective fed to the surrogate when the point was evaluated.
    pub objective: f64,
    pub feasible: bool,
    /// Best feasible objective so far, if any.
    pub best_so_far: Option<f64>,
    /// Part of the space-filling initial design.
    pub initial: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperRecord {
    pub iteration: usize,
    pub length_scales: Vec<f64>,
    pub signal_variance: f64,
    pub jitter: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizationTrace {
    pub seed: u64,
    pub entries: Vec<TraceEntry>,
    pub hypers: Vec<HyperRecord>,
    /// Index of the best feasible entry.
    pub best: Option<usize>,
}

fn training_targets(raw: &[Option<f64>], cfg: &BayesConfig) -> Vec<f64> {
    let worst = raw.iter().flatten().copied().fold(f64::NEG_INFINITY, f64::max);
    let penalty = if worst.is_finite() {
        worst + cfg.penalty_offset
    } else {
        cfg.default_penalty
    };
    raw.iter().map(|v| v.unwrap_or(penalty)).collect()
}

/// Minimizes `f` over `[0, 1]^dim`; `None` marks an infeasible point.
pub fn bayes_minimize<F>(dim: usize, cfg: &BayesConfig, mut f: F) -> Result<OptimizationTrace, OptimizerError>
where
    F: FnMut(&[f64]) -> Option<f64>,
{
    let n0 = cfg.initial_size(dim);
    if dim == 0 {
        return Err(OptimizerError::InvalidSpace("no free dimensions".into()));
    }
    if cfg.budget < n0 {
        return Err(OptimizerError::InvalidSpace(format!(
            "budget {} below initial design size {n0}",
            cfg.budget
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let design = maximin_lhs(n0, dim, 50, &mut rng);

    let mut xs: Vec<Vec<f64>> = Vec::new();
    let mut raw: Vec<Option<f64>> = Vec::new();
    let mut entries = Vec::new();
    let mut hypers = Vec::new();
    let mut best: Option<(usize, f64)> = None;
    let mut hyper = GpHyper::isotropic(dim, 0.3);
    let mut fitted_at = 0usize;

    let mut record =
        |xs: &mut Vec<Vec<f64>>, raw: &mut Vec<Option<f64>>, x: Vec<f64>, v: Option<f64>, initial: bool| {
            let it = xs.len();
            if let Some(val) = v {
                if best.is_none_or(|(_, b)| val < b) {
                    best = Some((it, val));
                }
            }
            xs.push(x.clone());
            raw.push(v);
            let objective = training_targets(raw, cfg)[it];
            entries.push(TraceEntry {
                iteration: it,
                unit: x,
                objective,
                feasible: v.is_some(),
                best_so_far: best.map(|(_, b)| b),
                initial,
            });
        };

    for x in design {
        let v = f(&x);
        record(&mut xs, &mut raw, x, v, true);
    }
    while xs.len() < cfg.budget {
        let y = training_targets(&raw, cfg);
        if xs.len() - fitted_at >= cfg.refit_every || fitted_at == 0 {
            hyper = Gp::fit_hyper(&xs, &y, &hyper);
            fitted_at = xs.len();
        }
        let gp = Gp::fit(&xs, &y, &hyper)?;
        hypers.push(HyperRecord {
            iteration: xs.len(),
            length_scales: hyper.length_scales(),
            signal_variance: hyper.signal_variance(),
            jitter: gp.jitter(),
        });
        let incumbent = y.iter().copied().fold(f64::INFINITY, f64::min);
        let mut arng = ChaCha8Rng::seed_from_u64(cfg.seed);
        arng.set_stream(xs.len() as u64 + 1);
        let x = maximize_ei(&gp, incumbent, dim, cfg.candidates, &mut arng);
        let v = f(&x);
        record(&mut xs, &mut raw, x, v, false);
    }
    let trace = OptimizationTrace {
        seed: cfg.seed,
        entries,
        hypers,
        best: best.map(|(i, _)| i),
    };
    if trace.best.is_none() {
        return Err(OptimizerError::AllInfeasible(cfg.budget));
    }
    Ok(trace)
}

/// One searched parameter with its bounds (SI units).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Dimension {
    pub key: ParamKey,
    pub lower: f64,
    pub upper: f64,
    pub log: bool,
}

impl Dimension {
    pub fn from_unit(&self, u: f64) -> f64 {
        if self.log {
            10f64.powf(self.lower.log10() + u * (self.upper.log10() - self.lower.log10()))
        } else {
            self.lower + u * (self.upper - self.lower)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchSpace {
    pub base: ModelParams,
    pub scheme: InjectionScheme,
    pub dims: Vec<Dimension>,
}

pub const DEFAULT_POWER_BOUNDS: (f64, f64) = (0.1e-6, 100e-3);
pub const DEFAULT_QC_BOUNDS: (f64, f64) = (1e5, 1e8);

impl SearchSpace {
    /// Default log-scaled bounds for the scheme's free powers and both
    /// coupling quality factors.
    pub fn default_for(base: ModelParams, scheme: InjectionScheme) -> Self {
        let p = |key| Dimension {
            key,
            lower: DEFAULT_POWER_BOUNDS.0,
            upper: DEFAULT_POWER_BOUNDS.1,
            log: true,
        };
        let q = |key| Dimension {
            key,
            lower: DEFAULT_QC_BOUNDS.0,
            upper: DEFAULT_QC_BOUNDS.1,
            log: true,
        };
        let mut dims = match scheme {
            InjectionScheme::Fundamental => vec![p(ParamKey::P1)],
            InjectionScheme::SecondHarmonic => vec![p(ParamKey::P2)],
            InjectionScheme::Dual => vec![p(ParamKey::P1), p(ParamKey::P2)],
            InjectionScheme::Undriven => vec![],
        };
        dims.push(q(ParamKey::Qc1));
        dims.push(q(ParamKey::Qc2));
        Self { base, scheme, dims }
    }

    pub fn validate(&self) -> Result<(), OptimizerError> {
        if self.dims.is_empty() {
            return Err(OptimizerError::InvalidSpace("no dimensions".into()));
        }
        for d in &self.dims {
            if !(d.lower < d.upper) || (d.log && d.lower <= 0.0) {
                return Err(OptimizerError::InvalidSpace(format!(
                    "bad bounds for {}: [{:e}, {:e}]",
                    d.key.name(),
                    d.lower,
                    d.upper
                )));
            }
            let forbidden = matches!(
                (self.scheme, d.key),
                (InjectionScheme::SecondHarmonic, ParamKey::P1) | (InjectionScheme::Fundamental, ParamKey::P2)
            );
            if forbidden {
                return Err(OptimizerError::InvalidSpace(format!(
                    "{} is fixed to zero under the {} scheme",
                    d.key.name(),
                    self.scheme.as_str()
                )));
            }
        }
        Ok(())
    }

    /// Parameters at a unit-cube point, with the scheme constraint applied.
    pub fn params_at(&self, unit: &[f64]) -> ModelParams {
        let mut p = self.base;
        for (d, u) in self.dims.iter().zip(unit) {
            d.key.set(&mut p, d.from_unit(*u));
        }
        match self.scheme {
            InjectionScheme::SecondHarmonic => p.drive.p1 = 0.0,
            InjectionScheme::Fundamental => p.drive.p2 = 0.0,
            _ => {}
        }
        p
    }

    pub fn values_at(&self, unit: &[f64]) -> Vec<f64> {
        self.dims.iter().zip(unit).map(|(d, u)| d.from_unit(*u)).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DesignResult {
    pub trace: OptimizationTrace,
    /// SI parameter values of every trace entry, in dimension order.
    pub points: Vec<Vec<f64>>,
    pub best_params: ModelParams,
    pub best_report: SensitivityReport,
}

/// Minimizes `log10(MDR in deg/h)` over the search space.
pub fn optimize_design(
    space: &SearchSpace,
    cfg: &BayesConfig,
    options: &EvalOptions,
) -> Result<DesignResult, OptimizerError> {
    space.validate()?;
    let objective = |u: &[f64]| -> Option<f64> {
        match evaluate_point(&space.params_at(u), options) {
            Ok(Evaluation::Feasible(r)) => Some(r.omega_min.deg_per_hour.log10()),
            _ => None,
        }
    };
    let trace = bayes_minimize(space.dims.len(), cfg, objective)?;
    let points = trace.entries.iter().map(|e| space.values_at(&e.unit)).collect();
    let best = &trace.entries[trace.best.expect("checked by bayes_minimize")];
    let best_params = space.params_at(&best.unit);
    let best_report = match evaluate_point(&best_params, options) {
        Ok(Evaluation::Feasible(r)) => *r,
        _ => return Err(OptimizerError::AllInfeasible(cfg.budget)),
    };
    Ok(DesignResult {
        trace,
        points,
        best_params,
        best_report,
    })
}
