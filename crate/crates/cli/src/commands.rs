use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;

use qong_core::optimizer::{optimize_design, sweep_grid, Axis, BayesConfig, SearchSpace};
use qong_core::sensitivity::{linear_mdr_closed_form, matched_linear_baseline};
use qong_core::steady::{critical_power, CriticalPower};
use qong_core::{
    evaluate_point, EvalError, EvalOptions, Evaluation, InjectionScheme, MeanConvention, ModelParams, OptimizerError,
    ParamKey, SolverError,
};

use crate::config::{ConfigError, RunConfig};
use crate::output::{sweep_csv, trace_csv};
use crate::{FORMAT_VERSION, VERSION};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Evaluate,
    Sweep,
    Optimize,
    Stability,
    LinearBaseline,
}

impl Command {
    pub fn as_str(&self) -> &'static str {
        match self {
            Command::Evaluate => "evaluate",
            Command::Sweep => "sweep",
            Command::Optimize => "optimize",
            Command::Stability => "stability",
            Command::LinearBaseline => "linear-baseline",
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(#[from] ConfigError),
    #[error("evaluation failed: {0}")]
    Eval(#[from] EvalError),
    #[error("steady state: {0}")]
    Solver(#[from] SolverError),
    #[error("optimizer: {0}")]
    Optimizer(#[from] OptimizerError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("{0}")]
    Usage(String),
}

impl CliError {
    /// 2 for a well-formed run that found nothing feasible, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Optimizer(OptimizerError::AllInfeasible(_)) => 2,
            _ => 1,
        }
    }
}

fn unix_time() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

pub fn write_file(dir: &Path, name: &str, contents: &str) -> Result<PathBuf, CliError> {
    let io = |source| CliError::Io {
        path: dir.to_path_buf(),
        source,
    };
    std::fs::create_dir_all(dir).map_err(io)?;
    let path = dir.join(name);
    std::fs::write(&path, contents).map_err(|source| CliError::Io {
        path: path.clone(),
        source,
    })?;
    Ok(path)
}

/// Single-point result. Everything except `timestamp` is a pure function of
/// `config` and `version`.
#[derive(Debug, Clone, Serialize)]
pub struct ResultRecord {
    pub format_version: u32,
    pub version: String,
    pub command: String,
    pub seed: u64,
    pub timestamp: u64,
    pub feasible: bool,
    pub mdr_deg_per_hour: Option<f64>,
    pub params: ModelParams,
    pub options: EvalOptions,
    pub evaluation: Evaluation,
    /// Canonical config that reproduces this record.
    pub config: String,
}

impl ResultRecord {
    fn new(command: Command, cfg: &RunConfig, evaluation: Evaluation) -> Self {
        Self {
            format_version: FORMAT_VERSION,
            version: VERSION.to_string(),
            command: command.as_str().to_string(),
            seed: cfg.seed,
            timestamp: unix_time(),
            feasible: evaluation.is_feasible(),
            mdr_deg_per_hour: evaluation.report().map(|r| r.omega_min.deg_per_hour),
            params: cfg.params,
            options: cfg.eval_options(),
            evaluation,
            config: cfg.to_text(),
        }
    }
}

pub fn evaluate(cfg: &RunConfig) -> Result<ResultRecord, CliError> {
    let e = evaluate_point(&cfg.params, &cfg.eval_options())?;
    Ok(ResultRecord::new(Command::Evaluate, cfg, e))
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepManifest {
    pub format_version: u32,
    pub version: String,
    pub command: String,
    pub seed: u64,
    pub axes: Vec<Axis>,
    pub fixed_params: ModelParams,
    pub options: EvalOptions,
    pub rows: usize,
    pub feasible_rows: usize,
    pub data_file: String,
    pub config: String,
}

pub struct SweepOutput {
    pub csv: String,
    pub manifest: SweepManifest,
}

pub const SWEEP_FILE: &str = "sweep.csv";
pub const SWEEP_MANIFEST: &str = "sweep_manifest.json";

pub fn sweep(cfg: &RunConfig, jobs: usize) -> Result<SweepOutput, CliError> {
    if !(1..=2).contains(&cfg.sweep.len()) {
        return Err(CliError::Usage(format!(
            "[sweep] needs one or two `axis` lines, found {}",
            cfg.sweep.len()
        )));
    }
    let grid = sweep_grid(&cfg.params, &cfg.sweep, jobs, &cfg.eval_options())?;
    let feasible_rows = grid.cells.iter().filter(|c| c.summary.feasible).count();
    Ok(SweepOutput {
        csv: sweep_csv(&grid, cfg.seed),
        manifest: SweepManifest {
            format_version: FORMAT_VERSION,
            version: VERSION.to_string(),
            command: Command::Sweep.as_str().to_string(),
            seed: cfg.seed,
            axes: cfg.sweep.clone(),
            fixed_params: cfg.params,
            options: cfg.eval_options(),
            rows: grid.cells.len(),
            feasible_rows,
            data_file: SWEEP_FILE.to_string(),
            config: cfg.to_text(),
        },
    })
}

pub struct OptimizeOutput {
    pub trace_csv: String,
    pub best: ResultRecord,
    /// Ready-to-run `evaluate` config for the best design.
    pub best_config: String,
}

pub const TRACE_FILE: &str = "trace.csv";
pub const BEST_FILE: &str = "best.json";
pub const BEST_CONFIG: &str = "best.conf";

pub fn optimize(cfg: &RunConfig) -> Result<OptimizeOutput, CliError> {
    let o = cfg
        .optimize
        .as_ref()
        .ok_or_else(|| CliError::Usage("optimize needs an [optimize] section".into()))?;
    let mut space = SearchSpace::default_for(cfg.params, o.scheme);
    if !o.bounds.is_empty() {
        space.dims = o.bounds.clone();
    }
    let mut bayes = BayesConfig::new(o.budget, cfg.seed);
    bayes.initial = o.initial;
    let result = optimize_design(&space, &bayes, &cfg.eval_options())?;
    let keys: Vec<ParamKey> = space.dims.iter().map(|d| d.key).collect();
    let best_cfg = RunConfig {
        params: result.best_params,
        sweep: Vec::new(),
        optimize: None,
        stability: None,
        ..cfg.clone()
    };
    let record = ResultRecord::new(
        Command::Optimize,
        &best_cfg,
        Evaluation::Feasible(Box::new(result.best_report.clone())),
    );
    Ok(OptimizeOutput {
        trace_csv: trace_csv(&result, &keys),
        best: record,
        best_config: best_cfg.to_text(),
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct StabilityRecord {
    pub format_version: u32,
    pub version: String,
    pub command: String,
    pub seed: u64,
    pub timestamp: u64,
    pub scheme: InjectionScheme,
    pub bracket: (f64, f64),
    pub critical_power: CriticalPower,
    pub params: ModelParams,
    pub config: String,
}

pub fn stability(cfg: &RunConfig) -> Result<StabilityRecord, CliError> {
    let s = cfg
        .stability
        .ok_or_else(|| CliError::Usage("stability needs a [stability] section".into()))?;
    let pc = critical_power(&cfg.params, s.scheme, s.bracket, &cfg.eval_options().strategy)?;
    Ok(StabilityRecord {
        format_version: FORMAT_VERSION,
        version: VERSION.to_string(),
        command: Command::Stability.as_str().to_string(),
        seed: cfg.seed,
        timestamp: unix_time(),
        scheme: s.scheme,
        bracket: s.bracket,
        critical_power: pc,
        params: cfg.params,
        config: cfg.to_text(),
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct BaselineRecord {
    pub format_version: u32,
    pub version: String,
    pub command: String,
    pub seed: u64,
    pub timestamp: u64,
    /// Closed-form linear MDR, no back-scattering (deg/h).
    pub closed_form_deg_per_hour: f64,
    /// Full engine with chi = 0 and back-scattering included (deg/h).
    pub engine_deg_per_hour: f64,
    /// Full engine with chi = 0 and no back-scattering (deg/h).
    pub engine_no_backscatter_deg_per_hour: f64,
    /// `engine / closed form`.
    pub ratio: f64,
    pub ratio_no_backscatter: f64,
    /// Closed form at critical coupling for the same power (deg/h).
    pub matched_deg_per_hour: f64,
    pub params: ModelParams,
    pub config: String,
}

fn engine_mdr(p: &ModelParams, options: &EvalOptions) -> Result<f64, CliError> {
    match evaluate_point(p, options)? {
        Evaluation::Feasible(r) => Ok(r.omega_min.deg_per_hour),
        Evaluation::Infeasible { reason, detail } => Err(CliError::Usage(format!(
            "linear engine infeasible ({}): {detail}",
            reason.as_str()
        ))),
    }
}

/// Linear gyroscope at the fundamental: closed form against the full
/// engine with the nonlinearity and second-harmonic drive switched off.
pub fn linear_baseline(cfg: &RunConfig) -> Result<BaselineRecord, CliError> {
    if cfg.params.drive.p1 <= 0.0 {
        return Err(CliError::Usage("linear-baseline needs P1 > 0".into()));
    }
    let mut linear = cfg.params;
    linear.resonator.chi = 0.0;
    linear.drive.p2 = 0.0;
    let mut bare = linear;
    bare.resonator.beta1 = 0.0;
    bare.resonator.beta2 = 0.0;
    let options = EvalOptions {
        convention: MeanConvention::Classical,
        ..cfg.eval_options()
    };
    let closed = linear_mdr_closed_form(&linear).deg_per_hour;
    let engine = engine_mdr(&linear, &options)?;
    let engine_bare = engine_mdr(&bare, &options)?;
    Ok(BaselineRecord {
        format_version: FORMAT_VERSION,
        version: VERSION.to_string(),
        command: Command::LinearBaseline.as_str().to_string(),
        seed: cfg.seed,
        timestamp: unix_time(),
        closed_form_deg_per_hour: closed,
        engine_deg_per_hour: engine,
        engine_no_backscatter_deg_per_hour: engine_bare,
        ratio: engine / closed,
        ratio_no_backscatter: engine_bare / closed,
        matched_deg_per_hour: matched_linear_baseline(&linear).deg_per_hour,
        params: cfg.params,
        config: cfg.to_text(),
    })
}

/// Runs `command`, writes its files under `out` (if any) and returns the
/// text for stdout plus the exit code.
pub fn run(command: Command, cfg: &RunConfig, jobs: usize, out: Option<&Path>) -> Result<(String, i32), CliError> {
    let dir = out.unwrap_or(Path::new("."));
    match command {
        Command::Evaluate => {
            let r = evaluate(cfg)?;
            let json = serde_json::to_string_pretty(&r)?;
            if let Some(d) = out {
                write_file(d, "result.json", &json)?;
            }
            Ok((json, if r.feasible { 0 } else { 2 }))
        }
        Command::Sweep => {
            let s = sweep(cfg, jobs)?;
            let csv = write_file(dir, SWEEP_FILE, &s.csv)?;
            let man = write_file(dir, SWEEP_MANIFEST, &serde_json::to_string_pretty(&s.manifest)?)?;
            Ok((
                format!(
                    "{} rows ({} feasible) -> {} , {}",
                    s.manifest.rows,
                    s.manifest.feasible_rows,
                    csv.display(),
                    man.display()
                ),
                0,
            ))
        }
        Command::Optimize => {
            let o = optimize(cfg)?;
            let json = serde_json::to_string_pretty(&o.best)?;
            write_file(dir, TRACE_FILE, &o.trace_csv)?;
            write_file(dir, BEST_FILE, &json)?;
            write_file(dir, BEST_CONFIG, &o.best_config)?;
            Ok((json, 0))
        }
        Command::Stability => {
            let r = stability(cfg)?;
            let json = serde_json::to_string_pretty(&r)?;
            if let Some(d) = out {
                write_file(d, "stability.json", &json)?;
            }
            Ok((json, 0))
        }
        Command::LinearBaseline => {
            let r = linear_baseline(cfg)?;
            let json = serde_json::to_string_pretty(&r)?;
            if let Some(d) = out {
                write_file(d, "linear_baseline.json", &json)?;
            }
            Ok((json, 0))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::output::read_rows;

    const SH_OPTIMUM: &str = "P2 = 23.507 mW\nQc1 = 1.018e5\nQc2 = 5.462e5\n";

    fn cfg(text: &str) -> RunConfig {
        RunConfig::parse(text).unwrap()
    }

    fn without_timestamp(json: &str) -> serde_json::Value {
        let mut v: serde_json::Value = serde_json::from_str(json).unwrap();
        v.as_object_mut().unwrap().remove("timestamp");
        v
    }

    #[test]
    fn zero_rotation_gives_zero_currents() {
        let r = evaluate(&cfg(&format!("{SH_OPTIMUM}Omega = 0 rad/s\n"))).unwrap();
        assert!(r.feasible);
        assert_eq!(r.evaluation.report().unwrap().mean_currents, [0.0, 0.0]);
    }

    #[test]
    fn below_threshold_exits_two_as_unstable() {
        let c = cfg("P2 = 10 mW\nQc1 = 1.018e5\nQc2 = 5.462e5\n");
        let (json, code) = run(Command::Evaluate, &c, 1, None).unwrap();
        assert_eq!(code, 2);
        let v: serde_json::Value = serde_json::from_str(&json).unwrap();
        assert_eq!(v["feasible"], false);
        assert_eq!(v["evaluation"]["reason"], "unstable");
        assert!(v["mdr_deg_per_hour"].is_null());
    }

    #[test]
    fn evaluate_record_reproduces_from_its_own_config() {
        let tmp = tempfile::tempdir().unwrap();
        let c = cfg(&format!("{SH_OPTIMUM}Omega = 100 deg_per_hour\nseed = 4\n"));
        let (json, code) = run(Command::Evaluate, &c, 1, Some(tmp.path())).unwrap();
        assert_eq!(code, 0);
        assert_eq!(std::fs::read_to_string(tmp.path().join("result.json")).unwrap(), json);
        let first = without_timestamp(&json);
        let again = cfg(first["config"].as_str().unwrap());
        let second = serde_json::to_string_pretty(&evaluate(&again).unwrap()).unwrap();
        assert_eq!(first, without_timestamp(&second));
        assert_eq!(first["seed"], 4);
        assert_eq!(first["format_version"], FORMAT_VERSION);
    }

    #[test]
    fn two_by_two_sweep_and_manifest() {
        let tmp = tempfile::tempdir().unwrap();
        let c = cfg(&format!(
            "{SH_OPTIMUM}seed = 11\n[sweep]\naxis = P2 22 24 mW 2 lin\naxis = Omega 0 100 deg_per_hour 2 lin\n"
        ));
        run(Command::Sweep, &c, 2, Some(tmp.path())).unwrap();
        let csv = std::fs::read_to_string(tmp.path().join(SWEEP_FILE)).unwrap();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 6);
        assert!(lines[0].starts_with("# qong ") && lines[0].contains("seed=11"));
        let (header, rows) = read_rows(&csv);
        assert_eq!(header[..2], ["P2_W".to_string(), "Omega_rad_per_s".to_string()]);
        assert_eq!(rows.len(), 4);
        // Outer axis major.
        assert_eq!(rows[0][0], rows[1][0]);
        assert_ne!(rows[1][0], rows[2][0]);

        let man: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(tmp.path().join(SWEEP_MANIFEST)).unwrap()).unwrap();
        assert_eq!(man["seed"], 11);
        assert_eq!(man["version"], VERSION);
        assert_eq!(man["format_version"], FORMAT_VERSION);
        assert_eq!(man["rows"], 4);
        assert_eq!(man["axes"].as_array().unwrap().len(), 2);

        let rerun = sweep(&cfg(man["config"].as_str().unwrap()), 1).unwrap();
        assert_eq!(rerun.csv, csv);
    }

    #[test]
    fn sweep_needs_one_or_two_axes() {
        assert!(matches!(sweep(&cfg(SH_OPTIMUM), 1), Err(CliError::Usage(_))));
        let three = format!(
            "{SH_OPTIMUM}[sweep]\naxis = P2 22 24 mW 2 lin\naxis = Qc1 1e5 2e5 - 2 lin\naxis = Qc2 5e5 6e5 - 2 lin\n"
        );
        assert!(matches!(sweep(&cfg(&three), 1), Err(CliError::Usage(_))));
    }

    const FUND_CAMPAIGN: &str = "P1 = 1 uW\n[optimize]\nscheme = fundamental\nbudget = 60\n\
        bound = P1 0.5 2 uW log\nbound = Qc1 1e6 1e8 - log\nbound = Qc2 1e6 1e8 - log\n";

    #[test]
    fn budget_equal_to_initial_design_is_pure_space_filling() {
        let text = FUND_CAMPAIGN.replace("budget = 60", "budget = 8");
        let o = optimize(&cfg(&text)).unwrap();
        let (header, rows) = read_rows(&o.trace_csv);
        let c = header.iter().position(|h| h == "initial").unwrap();
        assert_eq!(rows.len(), 8);
        assert!(rows.iter().all(|r| r[c] == "true"));
    }

    #[test]
    fn fundamental_campaign_finds_the_low_power_coupling() {
        let tmp = tempfile::tempdir().unwrap();
        let c = cfg(FUND_CAMPAIGN);
        run(Command::Optimize, &c, 1, Some(tmp.path())).unwrap();
        let trace = std::fs::read_to_string(tmp.path().join(TRACE_FILE)).unwrap();
        let best_conf = std::fs::read_to_string(tmp.path().join(BEST_CONFIG)).unwrap();

        let best = cfg(&best_conf);
        let qc1 = best.params.coupling.qc1;
        assert!((6.747e6 / 3.0..=6.747e6 * 3.0).contains(&qc1), "Qc1 = {qc1:e}");
        assert_eq!(best.params.drive.p2, 0.0);

        let record: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(tmp.path().join(BEST_FILE)).unwrap()).unwrap();
        let again = evaluate(&best).unwrap();
        assert_eq!(again.mdr_deg_per_hour, record["mdr_deg_per_hour"].as_f64());

        let second = optimize(&c).unwrap();
        assert_eq!(second.trace_csv, trace);
        assert_eq!(second.best_config, best_conf);
    }

    #[test]
    fn optimize_needs_its_section() {
        assert!(matches!(optimize(&cfg(SH_OPTIMUM)), Err(CliError::Usage(_))));
    }

    #[test]
    fn stability_record_brackets_the_threshold() {
        let c = cfg(&format!(
            "{SH_OPTIMUM}[stability]\nscheme = second-harmonic\nbracket = 1 30 mW\n"
        ));
        let r = stability(&c).unwrap();
        let pc = r.critical_power;
        assert!(pc.lower <= pc.pc && pc.pc <= pc.upper);
        assert!((pc.pc / 14.05e-3 - 1.0).abs() < 0.2, "Pc = {:e}", pc.pc);
        // The branch followed up from low power loses stability at the threshold.
        assert!(pc.stable_below);
        assert!(pc.max_real_lower < 0.0 && pc.max_real_upper >= 0.0);
        assert!(matches!(stability(&cfg(SH_OPTIMUM)), Err(CliError::Usage(_))));
    }

    #[test]
    fn linear_baseline_near_critical_coupling() {
        let c = cfg("P1 = 0.945 uW\nQc1 = 9.58e6\n");
        let r = linear_baseline(&c).unwrap();
        assert!(
            (r.closed_form_deg_per_hour / 87.5 - 1.0).abs() < 0.01,
            "{}",
            r.closed_form_deg_per_hour
        );
        assert!(
            (r.engine_deg_per_hour / 87.62 - 1.0).abs() <= 0.05,
            "{}",
            r.engine_deg_per_hour
        );
        assert!(
            (r.ratio_no_backscatter - 1.0).abs() < 1e-6,
            "{}",
            r.ratio_no_backscatter
        );
        assert!(r.matched_deg_per_hour <= r.closed_form_deg_per_hour);
    }

    #[test]
    fn linear_baseline_needs_fundamental_power() {
        assert!(matches!(linear_baseline(&cfg(SH_OPTIMUM)), Err(CliError::Usage(_))));
    }

    #[test]
    fn closed_form_is_smallest_at_critical_coupling() {
        let base = cfg("P1 = 0.945 uW\n").params;
        let qi = base.resonator.qi1;
        let scan: Vec<(f64, f64)> = (0..=40)
            .map(|k| {
                let qc = 10f64.powf(6.0 + k as f64 / 20.0);
                let mut p = base;
                p.coupling.qc1 = qc;
                (qc, linear_mdr_closed_form(&p).deg_per_hour)
            })
            .collect();
        let best = scan.iter().min_by(|a, b| a.1.total_cmp(&b.1)).unwrap();
        assert!(
            (best.0 / qi).log10().abs() < 0.5 / 20.0 + 1e-12,
            "argmin Qc {:e}",
            best.0
        );
        let mut p = base;
        p.coupling.qc1 = qi;
        let at_qi = linear_mdr_closed_form(&p).deg_per_hour;
        assert!(scan.iter().all(|s| s.1 >= at_qi * (1.0 - 1e-12)));
    }
}
