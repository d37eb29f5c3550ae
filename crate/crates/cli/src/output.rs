use std::fmt::Write as _;

use qong_core::optimizer::{DesignResult, SweepGrid};
use qong_core::ParamKey;

use crate::{FORMAT_VERSION, VERSION};

/// Full-precision CSV number (17 significant digits).
pub fn num(v: f64) -> String {
    format!("{v:.16e}")
}

/// Leading comment line carried by every CSV file.
pub fn provenance_line(seed: u64) -> String {
    format!("# qong {VERSION} format_version={FORMAT_VERSION} seed={seed}\n")
}

pub fn column_name(key: ParamKey) -> String {
    match key.si_unit() {
        "" => key.name().to_string(),
        u => format!("{}_{}", key.name(), u.replace('/', "_per_")),
    }
}

pub const SWEEP_COLUMNS: [&str; 7] = [
    "mdr_deg_per_hour",
    "fisher",
    "i1_mean_A",
    "i2_mean_A",
    "squeezing_db_fund_phase",
    "squeezing_db_sh_amp",
    "feasible",
];

/// Sweep table, outer axis major.
pub fn sweep_csv(grid: &SweepGrid, seed: u64) -> String {
    let mut s = provenance_line(seed);
    let mut header: Vec<String> = grid.axes.iter().map(|a| column_name(a.key)).collect();
    header.extend(SWEEP_COLUMNS.iter().map(|c| c.to_string()));
    s.push_str(&header.join(","));
    s.push('\n');
    for cell in &grid.cells {
        let c = &cell.summary;
        let mut row: Vec<String> = cell.coords.iter().map(|v| num(*v)).collect();
        for v in [
            c.mdr_deg_per_hour,
            c.fisher,
            c.i1_mean,
            c.i2_mean,
            c.squeezing_db_fund_phase,
            c.squeezing_db_sh_amp,
        ] {
            row.push(num(v));
        }
        row.push(c.feasible.to_string());
        s.push_str(&row.join(","));
        s.push('\n');
    }
    s
}

/// Optimization trace: one row per evaluated design.
pub fn trace_csv(result: &DesignResult, keys: &[ParamKey]) -> String {
    let mut s = provenance_line(result.trace.seed);
    let mut header = vec!["iteration".to_string()];
    header.extend(keys.iter().map(|k| column_name(*k)));
    header.extend(["objective", "feasible", "best_so_far", "initial"].map(String::from));
    s.push_str(&header.join(","));
    s.push('\n');
    for (e, point) in result.trace.entries.iter().zip(&result.points) {
        let _ = write!(s, "{}", e.iteration);
        for v in point {
            let _ = write!(s, ",{}", num(*v));
        }
        let _ = writeln!(
            s,
            ",{},{},{},{}",
            num(e.objective),
            e.feasible,
            num(e.best_so_far.unwrap_or(f64::NAN)),
            e.initial
        );
    }
    s
}

/// Parses data rows of a CSV written by this module, skipping the
/// provenance comment and header.
pub fn read_rows(csv: &str) -> (Vec<String>, Vec<Vec<String>>) {
    let mut lines = csv.lines().filter(|l| !l.starts_with('#'));
    let header = lines
        .next()
        .map(|h| h.split(',').map(String::from).collect())
        .unwrap_or_default();
    let rows = lines.map(|l| l.split(',').map(String::from).collect()).collect();
    (header, rows)
}
