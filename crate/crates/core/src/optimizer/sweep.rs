use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::OptimizerError;
use crate::model::{ModelParams, ParamKey};
use crate::sensitivity::{evaluate_point, EvalOptions, Evaluation};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AxisScale {
    Lin,
    Log,
}

/// One sweep axis in SI units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Axis {
    pub key: ParamKey,
    pub min: f64,
    pub max: f64,
    pub count: usize,
    pub scale: AxisScale,
}

impl Axis {
    pub fn validate(&self) -> Result<(), OptimizerError> {
        let name = self.key.name();
        if self.count == 0 {
            return Err(OptimizerError::InvalidAxis(format!("{name}: zero points")));
        }
        if self.count > 1 && !(self.min < self.max) {
            return Err(OptimizerError::InvalidAxis(format!("{name}: min must be below max")));
        }
        if self.scale == AxisScale::Log && self.min <= 0.0 {
            return Err(OptimizerError::InvalidAxis(format!(
                "{name}: log axis needs positive bounds"
            )));
        }
        Ok(())
    }

    pub fn values(&self) -> Vec<f64> {
        if self.count == 1 {
            return vec![self.min];
        }
        let n = (self.count - 1) as f64;
        (0..self.count)
            .map(|i| {
                let t = i as f64 / n;
                match self.scale {
                    AxisScale::Lin => self.min + t * (self.max - self.min),
                    AxisScale::Log => 10f64.powf(self.min.log10() + t * (self.max.log10() - self.min.log10())),
                }
            })
            .collect()
    }
}

/// Per-cell summary written to sweep tables. NaN marks quantities that are
/// undefined at an infeasible cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub mdr_deg_per_hour: f64,
    pub fisher: f64,
    pub i1_mean: f64,
    pub i2_mean: f64,
    pub squeezing_db_fund_phase: f64,
    pub squeezing_db_sh_amp: f64,
    pub feasible: bool,
    pub note: Option<String>,
}

impl CellSummary {
    fn infeasible(note: String) -> Self {
        Self {
            mdr_deg_per_hour: f64::NAN,
            fisher: f64::NAN,
            i1_mean: f64::NAN,
            i2_mean: f64::NAN,
            squeezing_db_fund_phase: f64::NAN,
            squeezing_db_sh_amp: f64::NAN,
            feasible: false,
            note: Some(note),
        }
    }

    pub fn from_evaluation(e: &Result<Evaluation, crate::error::EvalError>) -> Self {
        match e {
            Ok(Evaluation::Feasible(r)) => Self {
                mdr_deg_per_hour: r.omega_min.deg_per_hour,
                fisher: r.fisher,
                i1_mean: r.mean_currents[0],
                i2_mean: r.mean_currents[1],
                squeezing_db_fund_phase: r.squeezing.fundamental().phase_db,
                squeezing_db_sh_amp: r.squeezing.second_harmonic().amplitude_db,
                feasible: true,
                note: None,
            },
            Ok(Evaluation::Infeasible { reason, detail }) => Self::infeasible(format!("{}: {detail}", reason.as_str())),
            Err(err) => Self::infeasible(format!("error: {err}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    /// Axis values of this cell, outer axis first.
    pub coords: Vec<f64>,
    pub summary: CellSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepGrid {
    pub axes: Vec<Axis>,
    /// Cells in outer-axis-major order.
    pub cells: Vec<SweepCell>,
}

impl SweepGrid {
    pub fn shape(&self) -> Vec<usize> {
        self.axes.iter().map(|a| a.count).collect()
    }
}

/// Evaluates every grid point independently on `jobs` worker threads.
/// Output order does not depend on `jobs`.
pub fn sweep_grid(
    base: &ModelParams,
    axes: &[Axis],
    jobs: usize,
    options: &EvalOptions,
) -> Result<SweepGrid, OptimizerError> {
    if axes.is_empty() {
        return Err(OptimizerError::InvalidAxis("at least one axis required".into()));
    }
    for a in axes {
        a.validate()?;
    }
    let values: Vec<Vec<f64>> = axes.iter().map(|a| a.values()).collect();
    let mut coords: Vec<Vec<f64>> = vec![Vec::new()];
    for v in &values {
        coords = coords
            .into_iter()
            .flat_map(|c| {
                v.iter().map(move |x| {
                    let mut c = c.clone();
                    c.push(*x);
                    c
                })
            })
            .collect();
    }
    let run = |c: &Vec<f64>| {
        let mut p = *base;
        for (a, v) in axes.iter().zip(c) {
            a.key.set(&mut p, *v);
        }
        SweepCell {
            coords: c.clone(),
            summary: CellSummary::from_evaluation(&evaluate_point(&p, options)),
        }
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| OptimizerError::InvalidAxis(format!("thread pool: {e}")))?;
    let cells = pool.install(|| coords.par_iter().map(run).collect());
    Ok(SweepGrid {
        axes: axes.to_vec(),
        cells,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn axis_values() {
        let a = Axis {
            key: ParamKey::P2,
            min: 1.0,
            max: 100.0,
            count: 3,
            scale: AxisScale::Log,
        };
        let v = a.values();
        assert!((v[1] - 10.0).abs() < 1e-12);
        let l = Axis {
            scale: AxisScale::Lin,
            ..a
        };
        assert_eq!(l.values(), vec![1.0, 50.5, 100.0]);
        assert!(Axis { count: 0, ..a }.validate().is_err());
        assert!(Axis { min: 0.0, ..a }.validate().is_err());
    }

    #[test]
    fn one_by_one_grid_equals_single_evaluation() {
        let base = ModelParams::tfln_reference()
            .with_drive(0.945e-6, 0.0)
            .with_coupling(6.747e6, 6.675e7);
        let axis = Axis {
            key: ParamKey::P1,
            min: 0.945e-6,
            max: 0.945e-6,
            count: 1,
            scale: AxisScale::Lin,
        };
        let o = EvalOptions::default();
        let g = sweep_grid(&base, &[axis], 1, &o).unwrap();
        assert_eq!(g.cells.len(), 1);
        let direct = CellSummary::from_evaluation(&evaluate_point(&base, &o));
        assert_eq!(g.cells[0].summary, direct);
    }
}
