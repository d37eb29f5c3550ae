//! Plain-text run configuration.
//!
//! ```text
//! # device
//! lambda1 = 1590 nm
//! radius = 20 mm
//! P2 = 23.507 mW
//! Qc1 = 1.018e5
//!
//! [sweep]
//! axis = Omega 0 100 deg_per_hour 11 lin
//! ```
//!
//! Every dimensional value needs a unit. Keys that are not given keep the
//! reference thin-film lithium niobate values.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::path::PathBuf;

use qong_core::model::{nonlinear_coupling, RotationParams};
use qong_core::optimizer::{Axis, AxisScale, Dimension};
use qong_core::{EvalOptions, InjectionScheme, MeanConvention, ModelParams, ParamKey};

use crate::units::{format_quantity, parse_quantity, to_si, Dim, UnitError};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("line {line}: {key}: {source}")]
    Unit {
        line: usize,
        key: String,
        source: UnitError,
    },
    #[error("invalid parameters: {0}")]
    Model(#[from] qong_core::ModelError),
    #[error("{0}")]
    Missing(String),
}

fn syntax(line: usize, message: impl Into<String>) -> ConfigError {
    ConfigError::Syntax {
        line,
        message: message.into(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizeSection {
    pub scheme: InjectionScheme,
    pub budget: usize,
    pub initial: Option<usize>,
    /// Empty means the scheme's default search space.
    pub bounds: Vec<Dimension>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StabilitySection {
    pub scheme: InjectionScheme,
    /// Power bracket in W (total power for the dual scheme).
    pub bracket: (f64, f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub params: ModelParams,
    pub options: EvalOptions,
    pub seed: u64,
    pub out: Option<PathBuf>,
    pub sweep: Vec<Axis>,
    pub optimize: Option<OptimizeSection>,
    pub stability: Option<StabilitySection>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            params: ModelParams::tfln_reference(),
            options: EvalOptions::default(),
            seed: 0,
            out: None,
            sweep: Vec::new(),
            optimize: None,
            stability: None,
        }
    }
}

/// Unit dimension of a sweepable or searchable parameter.
pub fn param_dim(key: ParamKey) -> Dim {
    match key {
        ParamKey::P1 | ParamKey::P2 => Dim::Power,
        ParamKey::Qc1 | ParamKey::Qc2 | ParamKey::Qi1 | ParamKey::Qi2 => Dim::Dimensionless,
        ParamKey::Chi | ParamKey::Beta1 | ParamKey::Beta2 => Dim::Rate,
        ParamKey::Omega => Dim::Rotation,
        ParamKey::Radius => Dim::Length,
        ParamKey::Psi1 | ParamKey::Psi2 => Dim::Angle,
        ParamKey::Responsivity => Dim::Responsivity,
    }
}

#[derive(Clone, Copy, PartialEq)]
enum Section {
    Model,
    Sweep,
    Optimize,
    Stability,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = RunConfig::default();
        let mut section = Section::Model;
        let mut seen: HashSet<(u8, String)> = HashSet::new();
        let mut omega = 0.0;
        let (mut chi2, mut zeta) = (None, None);
        let mut chi_given = false;
        let mut opt_scheme = None;
        let mut opt_budget = None;
        let mut opt_initial = None;
        let mut opt_bounds = Vec::new();
        let mut opt_present = false;
        let mut stab_scheme = None;
        let mut stab_bracket = None;
        let mut stab_present = false;

        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            if let Some(name) = content.strip_prefix('[').and_then(|s| s.strip_suffix(']')) {
                section = match name.trim() {
                    "sweep" => Section::Sweep,
                    "optimize" => {
                        opt_present = true;
                        Section::Optimize
                    }
                    "stability" => {
                        stab_present = true;
                        Section::Stability
                    }
                    other => return Err(syntax(line, format!("unknown section [{other}]"))),
                };
                continue;
            }
            let (key, value) = content
                .split_once('=')
                .map(|(k, v)| (k.trim(), v.trim()))
                .ok_or_else(|| syntax(line, "expected `key = value`"))?;
            let repeatable = matches!((section, key), (Section::Sweep, "axis") | (Section::Optimize, "bound"));
            if !repeatable && !seen.insert((section as u8, key.to_string())) {
                return Err(syntax(line, format!("duplicate key `{key}`")));
            }
            let q = |dim: Dim| {
                parse_quantity(dim, value).map_err(|source| ConfigError::Unit {
                    line,
                    key: key.to_string(),
                    source,
                })
            };
            let int = || {
                value
                    .parse::<u64>()
                    .map_err(|_| syntax(line, format!("{key}: expected a non-negative integer")))
            };
            let scheme = || {
                value
                    .parse::<InjectionScheme>()
                    .map_err(|e| syntax(line, format!("{key}: {e}")))
            };
            let p = &mut cfg.params;
            match (section, key) {
                (Section::Model, "lambda1") => p.resonator.lambda1 = q(Dim::Length)?,
                (Section::Model, "n0") => p.resonator.index_n0 = q(Dim::Dimensionless)?,
                (Section::Model, "radius") => p.resonator.radius = q(Dim::Length)?,
                (Section::Model, "Qi1") => p.resonator.qi1 = q(Dim::Dimensionless)?,
                (Section::Model, "Qi2") => p.resonator.qi2 = q(Dim::Dimensionless)?,
                (Section::Model, "beta1") => p.resonator.beta1 = q(Dim::Rate)?,
                (Section::Model, "beta2") => p.resonator.beta2 = q(Dim::Rate)?,
                (Section::Model, "chi") => {
                    p.resonator.chi = q(Dim::Rate)?;
                    chi_given = true;
                }
                (Section::Model, "chi2") => chi2 = Some((line, q(Dim::Susceptibility)?)),
                (Section::Model, "zeta") => zeta = Some((line, q(Dim::InverseLength)?)),
                (Section::Model, "P1") => p.drive.p1 = q(Dim::Power)?,
                (Section::Model, "P2") => p.drive.p2 = q(Dim::Power)?,
                (Section::Model, "psi1") => p.drive.psi1 = q(Dim::Angle)?,
                (Section::Model, "psi2") => p.drive.psi2 = q(Dim::Angle)?,
                (Section::Model, "Qc1") => p.coupling.qc1 = q(Dim::Dimensionless)?,
                (Section::Model, "Qc2") => p.coupling.qc2 = q(Dim::Dimensionless)?,
                (Section::Model, "Omega") => omega = q(Dim::Rotation)?,
                (Section::Model, "responsivity") => p.detection.responsivity = q(Dim::Responsivity)?,
                (Section::Model, "phi1") => p.detection.phi1 = q(Dim::Angle)?,
                (Section::Model, "phi2") => p.detection.phi2 = q(Dim::Angle)?,
                (Section::Model, "mean_convention") => {
                    cfg.options.convention = value
                        .parse::<MeanConvention>()
                        .map_err(|e| syntax(line, format!("{key}: {e}")))?
                }
                (Section::Model, "fisher_delta") => cfg.options.fisher_delta = q(Dim::Rate)?,
                (Section::Model, "seed") => cfg.seed = int()?,
                (Section::Model, "random_starts") => cfg.options.strategy.random_starts = int()? as usize,
                (Section::Model, "out") => cfg.out = Some(PathBuf::from(value)),
                (Section::Sweep, "axis") => cfg.sweep.push(parse_axis(line, value)?),
                (Section::Optimize, "scheme") => opt_scheme = Some(scheme()?),
                (Section::Optimize, "budget") => opt_budget = Some(int()? as usize),
                (Section::Optimize, "initial") => opt_initial = Some(int()? as usize),
                (Section::Optimize, "bound") => opt_bounds.push(parse_bound(line, value)?),
                (Section::Stability, "scheme") => stab_scheme = Some(scheme()?),
                (Section::Stability, "bracket") => stab_bracket = Some(parse_bracket(line, value)?),
                _ => return Err(syntax(line, format!("unknown key `{key}`"))),
            }
        }

        match (chi2, zeta) {
            (Some((line, _)), Some(_)) | (Some((line, _)), None) | (None, Some((line, _))) if chi_given => {
                return Err(syntax(line, "give either chi or chi2 with zeta, not both"));
            }
            (Some((_, c2)), Some((_, z))) => {
                let p = &mut cfg.params;
                let eps = p.resonator.index_n0 * p.resonator.index_n0;
                p.resonator.chi = nonlinear_coupling(c2, z, p.resonator.radius, p.omega1(), eps, eps, &p.constants);
            }
            (Some((line, _)), None) | (None, Some((line, _))) => {
                return Err(syntax(line, "chi2 and zeta must be given together"));
            }
            (None, None) => {}
        }
        cfg.params.rotation = RotationParams::from_omega(omega, &cfg.params.resonator);
        cfg.options.strategy.seed = cfg.seed;

        if opt_present {
            cfg.optimize = Some(OptimizeSection {
                scheme: opt_scheme.ok_or_else(|| ConfigError::Missing("[optimize] needs `scheme`".into()))?,
                budget: opt_budget.ok_or_else(|| ConfigError::Missing("[optimize] needs `budget`".into()))?,
                initial: opt_initial,
                bounds: opt_bounds,
            });
        }
        if stab_present {
            cfg.stability = Some(StabilitySection {
                scheme: stab_scheme.ok_or_else(|| ConfigError::Missing("[stability] needs `scheme`".into()))?,
                bracket: stab_bracket.ok_or_else(|| ConfigError::Missing("[stability] needs `bracket`".into()))?,
            });
        }
        cfg.params.validate()?;
        Ok(cfg)
    }

    /// Canonical SI text. Parsing it back yields an identical config.
    pub fn to_text(&self) -> String {
        let p = &self.params;
        let r = &p.resonator;
        let mut s = String::new();
        let mut kv = |k: &str, dim: Dim, v: f64| {
            let _ = writeln!(s, "{k} = {}", format_quantity(dim, v));
        };
        kv("lambda1", Dim::Length, r.lambda1);
        kv("n0", Dim::Dimensionless, r.index_n0);
        kv("radius", Dim::Length, r.radius);
        kv("Qi1", Dim::Dimensionless, r.qi1);
        kv("Qi2", Dim::Dimensionless, r.qi2);
        kv("beta1", Dim::Rate, r.beta1);
        kv("beta2", Dim::Rate, r.beta2);
        kv("chi", Dim::Rate, r.chi);
        kv("P1", Dim::Power, p.drive.p1);
        kv("P2", Dim::Power, p.drive.p2);
        kv("psi1", Dim::Angle, p.drive.psi1);
        kv("psi2", Dim::Angle, p.drive.psi2);
        kv("Qc1", Dim::Dimensionless, p.coupling.qc1);
        kv("Qc2", Dim::Dimensionless, p.coupling.qc2);
        kv("Omega", Dim::Rotation, p.rotation.omega);
        kv("responsivity", Dim::Responsivity, p.detection.responsivity);
        kv("phi1", Dim::Angle, p.detection.phi1);
        kv("phi2", Dim::Angle, p.detection.phi2);
        kv("fisher_delta", Dim::Rate, self.options.fisher_delta);
        let _ = writeln!(s, "mean_convention = {}", self.options.convention.as_str());
        let _ = writeln!(s, "seed = {}", self.seed);
        let _ = writeln!(s, "random_starts = {}", self.options.strategy.random_starts);
        if let Some(out) = &self.out {
            let _ = writeln!(s, "out = {}", out.display());
        }
        if !self.sweep.is_empty() {
            s.push_str("\n[sweep]\n");
            for a in &self.sweep {
                let dim = param_dim(a.key);
                let scale = match a.scale {
                    AxisScale::Lin => "lin",
                    AxisScale::Log => "log",
                };
                let _ = writeln!(
                    s,
                    "axis = {} {:e} {:e} {} {} {scale}",
                    a.key.name(),
                    a.min,
                    a.max,
                    unit_token(dim),
                    a.count
                );
            }
        }
        if let Some(o) = &self.optimize {
            s.push_str("\n[optimize]\n");
            let _ = writeln!(s, "scheme = {}", o.scheme.as_str());
            let _ = writeln!(s, "budget = {}", o.budget);
            if let Some(n) = o.initial {
                let _ = writeln!(s, "initial = {n}");
            }
            for d in &o.bounds {
                let _ = writeln!(
                    s,
                    "bound = {} {:e} {:e} {} {}",
                    d.key.name(),
                    d.lower,
                    d.upper,
                    unit_token(param_dim(d.key)),
                    if d.log { "log" } else { "lin" }
                );
            }
        }
        if let Some(st) = &self.stability {
            s.push_str("\n[stability]\n");
            let _ = writeln!(s, "scheme = {}", st.scheme.as_str());
            let _ = writeln!(s, "bracket = {:e} {:e} W", st.bracket.0, st.bracket.1);
        }
        s
    }

    /// Evaluation options with the run seed applied.
    pub fn eval_options(&self) -> EvalOptions {
        let mut o = self.options;
        o.strategy.seed = self.seed;
        o
    }
}

fn unit_token(dim: Dim) -> &'static str {
    match dim {
        Dim::Dimensionless => "-",
        d => d.canonical(),
    }
}

fn param_key(line: usize, name: &str) -> Result<ParamKey, ConfigError> {
    ParamKey::from_name(name).ok_or_else(|| syntax(line, format!("unknown parameter `{name}`")))
}

fn scaled(line: usize, key: ParamKey, number: &str, unit: &str) -> Result<f64, ConfigError> {
    to_si(param_dim(key), number, Some(unit)).map_err(|source| ConfigError::Unit {
        line,
        key: key.name().to_string(),
        source,
    })
}

fn log_flag(line: usize, s: &str) -> Result<bool, ConfigError> {
    match s {
        "lin" => Ok(false),
        "log" => Ok(true),
        other => Err(syntax(line, format!("scale must be lin or log, got `{other}`"))),
    }
}

/// `<param> <min> <max> <unit|-> <count> <lin|log>`
fn parse_axis(line: usize, value: &str) -> Result<Axis, ConfigError> {
    let t: Vec<&str> = value.split_whitespace().collect();
    let [name, min, max, unit, count, scale] = t[..] else {
        return Err(syntax(line, "axis = <param> <min> <max> <unit|-> <count> <lin|log>"));
    };
    let key = param_key(line, name)?;
    let count = count
        .parse::<usize>()
        .map_err(|_| syntax(line, format!("bad point count `{count}`")))?;
    Ok(Axis {
        key,
        min: scaled(line, key, min, unit)?,
        max: scaled(line, key, max, unit)?,
        count,
        scale: if log_flag(line, scale)? {
            AxisScale::Log
        } else {
            AxisScale::Lin
        },
    })
}

/// `<param> <lower> <upper> <unit|-> <lin|log>`
fn parse_bound(line: usize, value: &str) -> Result<Dimension, ConfigError> {
    let t: Vec<&str> = value.split_whitespace().collect();
    let [name, lo, hi, unit, scale] = t[..] else {
        return Err(syntax(line, "bound = <param> <lower> <upper> <unit|-> <lin|log>"));
    };
    let key = param_key(line, name)?;
    Ok(Dimension {
        key,
        lower: scaled(line, key, lo, unit)?,
        upper: scaled(line, key, hi, unit)?,
        log: log_flag(line, scale)?,
    })
}

/// `<lower> <upper> <power unit>`
fn parse_bracket(line: usize, value: &str) -> Result<(f64, f64), ConfigError> {
    let t: Vec<&str> = value.split_whitespace().collect();
    let [lo, hi, unit] = t[..] else {
        return Err(syntax(line, "bracket = <lower> <upper> <unit>"));
    };
    let f = |n| {
        to_si(Dim::Power, n, Some(unit)).map_err(|source| ConfigError::Unit {
            line,
            key: "bracket".into(),
            source,
        })
    };
    Ok((f(lo)?, f(hi)?))
}
