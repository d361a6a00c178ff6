//! One-parameter sweeps and the two-parameter MSD gain table.

use std::fmt;
use std::str::FromStr;

use gmrflms::analysis::to_db;
use serde::Serialize;

use crate::analyze::analyze;
use crate::error::{ExpError, Result};
use crate::instance::Instance;
use crate::runner::{run_scenario, RunOptions};
use crate::scenario::{ParameterSpec, Scenario, StepSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    Nu,
    Kappa,
    SupportSize,
    Gamma,
    StepSize,
}

impl FromStr for SweepAxis {
    type Err = ExpError;
    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "nu" => Self::Nu,
            "kappa" => Self::Kappa,
            "support_size" => Self::SupportSize,
            "gamma" => Self::Gamma,
            "step_size" => Self::StepSize,
            other => return Err(ExpError::Config(format!("unknown sweep axis `{other}`"))),
        })
    }
}

impl fmt::Display for SweepAxis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Nu => "nu",
            Self::Kappa => "kappa",
            Self::SupportSize => "support_size",
            Self::Gamma => "gamma",
            Self::StepSize => "step_size",
        })
    }
}

/// Copy of `sc` with the axis set to `value`.
///
/// `gamma` changes every threshold; `step_size` changes every algorithm with
/// an explicit step, and rate-matched ones follow their targets.
pub fn apply_axis(sc: &Scenario, axis: SweepAxis, value: f64) -> Result<Scenario> {
    let mut out = sc.clone();
    match axis {
        SweepAxis::Nu => out.noise.nugget = value,
        SweepAxis::Kappa => out.noise.kappa = value,
        SweepAxis::SupportSize => {
            let ParameterSpec::Sparse { support_size, .. } = &mut out.parameter else {
                return Err(ExpError::Config("support_size sweeps need a sparse parameter".into()));
            };
            if value < 0.0 || value.fract() != 0.0 {
                return Err(ExpError::Config(format!("support size must be a whole number, got {value}")));
            }
            *support_size = value as usize;
        }
        SweepAxis::Gamma => {
            for a in out.algorithms.iter_mut() {
                if let Some(t) = a.threshold.as_mut() {
                    *t = t.with_gamma(value)?;
                }
            }
        }
        SweepAxis::StepSize => {
            for a in out.algorithms.iter_mut() {
                if matches!(a.step, StepSpec::Uniform(_) | StepSpec::PerNode(_)) {
                    a.step = StepSpec::Uniform(value);
                }
            }
        }
    }
    out.validate()?;
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRecord {
    pub axis_value: f64,
    pub algorithm: String,
    pub msd_db: f64,
    #[serde(skip)]
    pub msd_db_theory: Option<f64>,
}

/// Steady-state network MSD of every algorithm at each axis value.
///
/// The master seed is shared, so every value sees the same random streams.
pub fn sweep(sc: &Scenario, axis: SweepAxis, values: &[f64], opts: RunOptions) -> Result<Vec<SweepRecord>> {
    let mut out = Vec::new();
    for &value in values {
        let inst = Instance::new(apply_axis(sc, axis, value)?)?;
        let theory = analyze(&inst)?;
        let res = run_scenario(&inst, opts)?;
        for (a, t) in res.algorithms.iter().zip(&theory) {
            out.push(SweepRecord {
                axis_value: value,
                algorithm: a.name.clone(),
                msd_db: a.steady_msd_db(),
                msd_db_theory: t.msd_network.map(to_db),
            });
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GainRecord {
    pub nu: f64,
    pub kappa: f64,
    pub gain_db_sim: f64,
    pub gain_db_theory: f64,
}

/// MSD of `baseline` minus MSD of `reference`, in dB, over a `(ν, κ)` grid.
pub fn gain_table(
    sc: &Scenario,
    reference: &str,
    baseline: &str,
    nu: &[f64],
    kappa: &[f64],
    opts: RunOptions,
) -> Result<Vec<GainRecord>> {
    for name in [reference, baseline] {
        if sc.algorithm(name).is_none() {
            return Err(ExpError::Config(format!("gain table: unknown algorithm `{name}`")));
        }
    }
    let mut out = Vec::new();
    for &k in kappa {
        let at_k = apply_axis(sc, SweepAxis::Kappa, k)?;
        for rec in sweep(&at_k, SweepAxis::Nu, nu, opts)?.chunks(sc.algorithms.len()) {
            let find = |name: &str| rec.iter().find(|r| r.algorithm == name).expect("present");
            let (r, b) = (find(reference), find(baseline));
            let theory = match (r.msd_db_theory, b.msd_db_theory) {
                (Some(rt), Some(bt)) => bt - rt,
                _ => f64::NAN,
            };
            out.push(GainRecord { nu: r.axis_value, kappa: k, gain_db_sim: b.msd_db - r.msd_db, gain_db_theory: theory });
        }
    }
    Ok(out)
}
