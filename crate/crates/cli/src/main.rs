use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use qong_io::{commands, CliError, Command, RunConfig};

#[derive(Parser)]
#[command(
    name = "qong",
    version,
    about = "Quantum-limited sensitivity of chi(2) ring gyroscopes"
)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
    /// Run configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads for sweeps.
    #[arg(long, global = true, default_value_t = 1)]
    jobs: usize,
    /// Overrides the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory; overrides the config `out` key.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Subcommand, Clone, Copy)]
enum Cmd {
    /// Full pipeline at one design point.
    Evaluate,
    /// Grid evaluation over one or two axes.
    Sweep,
    /// Bayesian design optimization.
    Optimize,
    /// Critical power by bisection.
    Stability,
    /// Linear gyroscope: closed form against the engine.
    LinearBaseline,
}

impl From<Cmd> for Command {
    fn from(c: Cmd) -> Self {
        match c {
            Cmd::Evaluate => Command::Evaluate,
            Cmd::Sweep => Command::Sweep,
            Cmd::Optimize => Command::Optimize,
            Cmd::Stability => Command::Stability,
            Cmd::LinearBaseline => Command::LinearBaseline,
        }
    }
}

fn execute(cli: &Cli) -> Result<(String, i32), CliError> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| CliError::Usage("--config FILE is required".into()))?;
    let text = std::fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.clone(),
        source,
    })?;
    let mut cfg = RunConfig::parse(&text)?;
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    let out = cli.out.clone().or_else(|| cfg.out.clone());
    commands::run(cli.command.into(), &cfg, cli.jobs, out.as_deref())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok((text, code)) => {
            let _ = writeln!(std::io::stdout(), "{text}");
            ExitCode::from(code as u8)
        }
        Err(e) => {
            eprintln!("qong: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn exit_code(args: &[&str], config: Option<&str>) -> i32 {
        let tmp = tempfile::tempdir().unwrap();
        let conf = tmp.path().join("run.conf");
        let mut argv = vec!["qong".to_string()];
        argv.extend(args.iter().map(|s| s.to_string()));
        if let Some(text) = config {
            std::fs::write(&conf, text).unwrap();
            argv.push("--config".into());
            argv.push(conf.display().to_string());
        }
        let cli = Cli::try_parse_from(argv).unwrap();
        match execute(&cli) {
            Ok((_, code)) => code,
            Err(e) => e.exit_code(),
        }
    }

    #[test]
    fn exit_codes() {
        let sh = "Qc1 = 1.018e5\nQc2 = 5.462e5\n";
        assert_eq!(exit_code(&["evaluate"], Some(&format!("P2 = 23.507 mW\n{sh}"))), 0);
        assert_eq!(exit_code(&["evaluate"], Some(&format!("P2 = 5 mW\n{sh}"))), 2);
        assert_eq!(exit_code(&["evaluate"], Some("P2 = 5\n")), 1);
        assert_eq!(exit_code(&["evaluate"], Some("P3 = 5 mW\n")), 1);
        assert_eq!(exit_code(&["evaluate"], None), 1);
    }

    #[test]
    fn global_flags_parse_after_the_subcommand() {
        let cli = Cli::try_parse_from(["qong", "sweep", "--config", "a.conf", "--jobs", "8", "--seed", "3"]).unwrap();
        assert!(matches!(cli.command, Cmd::Sweep));
        assert_eq!(cli.jobs, 8);
        assert_eq!(cli.seed, Some(3));
        assert!(Cli::try_parse_from(["qong", "frobnicate"]).is_err());
        assert!(matches!(
            Command::from(Cli::try_parse_from(["qong", "linear-baseline"]).unwrap().command),
            Command::LinearBaseline
        ));
    }

    #[test]
    fn seed_flag_overrides_config() {
        let tmp = tempfile::tempdir().unwrap();
        let conf = tmp.path().join("run.conf");
        std::fs::write(&conf, "P2 = 23.507 mW\nQc1 = 1.018e5\nQc2 = 5.462e5\nseed = 1\n").unwrap();
        let cli =
            Cli::try_parse_from(["qong", "evaluate", "--seed", "42", "--config", conf.to_str().unwrap()]).unwrap();
        let (json, _) = execute(&cli).unwrap();
        let v: serde_json::Value = serde_json::from_str(&json).unwrap();
        assert_eq!(v["seed"], 42);
    }
}
