//! Built-in experiments, each at full and at desk scale.

use gmrflms::diffusion::CombinationRule;
use gmrflms::sigmodel::ZeroInterval;
use gmrflms::sparsity::ThresholdSpec;
use serde::Serialize;

use crate::error::{ExpError, Result};
use crate::scenario::{
    AlgorithmKind, AlgorithmSpec, NoiseSpec, ParameterSpec, PrecisionKind, RegressorSpec, Scenario,
    StepSpec, TopologySpec, TrackingSpec,
};
use crate::sweep::SweepAxis;

pub const PRESET_NAMES: [&str; 6] = [
    "fig2_comparison",
    "fig3_theory",
    "fig4_gain_sweep",
    "fig5_sparsity_sweep",
    "fig6_sparse_comparison",
    "fig7_tracking",
];

/// Seed of the fixed network layout and regressor powers.
pub const LAYOUT_SEED: u64 = 11;
pub const MASTER_SEED: u64 = 20_240_601;

/// What to do with a preset's scenario.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "experiment", rename_all = "snake_case")]
pub enum Experiment {
    /// Learning curves plus a summary table.
    Curves,
    /// Per-node steady state against theory.
    Theory,
    Gain { reference: String, baseline: String, nu: Vec<f64>, kappa: Vec<f64> },
    Sweep { axis: SweepAxis, values: Vec<f64> },
    Tracking,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Preset {
    pub name: String,
    pub scenario: Scenario,
    pub experiment: Experiment,
    pub note: Option<String>,
}

struct Scale {
    n: usize,
    radius: f64,
    m: usize,
    m_sparse: usize,
    runs: usize,
}

const FULL: Scale = Scale { n: 20, radius: 0.4, m: 10, m_sparse: 50, runs: 100 };
const DESK: Scale = Scale { n: 10, radius: 0.5, m: 5, m_sparse: 20, runs: 50 };

pub const SIGMA2: f64 = 0.0157;
pub const NU: f64 = 0.9;
pub const KAPPA: f64 = 0.1;
pub const MU_GMRF: f64 = 2e-5;
/// Fraction of the mean-stability bound used by the gain sweep reference.
pub const GAIN_BOUND_FRACTION: f64 = 0.01;
pub const MU_SPARSE: f64 = 1.9e-5;
pub const MU_TRACKING: f64 = 2e-4;
pub const POWER_RANGE: [f64; 2] = [0.5, 1.5];

pub const L0_GAMMA: f64 = 1e-4;
pub const L0_BETA: f64 = 50.0;
/// Wider dead zone for tracking, so zeroed components snap to zero quickly.
pub const TRACK_GAMMA: f64 = 1e-3;
pub const TRACK_BETA: f64 = 30.0;
pub const SOFT_GAMMA: f64 = 1e-5;
pub const RWL1_GAMMA: f64 = 1e-5;
pub const RWL1_EPSILON: f64 = 0.01;
pub const GAROTTE_GAMMA: f64 = 1e-3;

fn alg(name: &str, kind: AlgorithmKind, precision: PrecisionKind, step: StepSpec) -> AlgorithmSpec {
    AlgorithmSpec {
        name: name.into(),
        kind,
        precision,
        exchange: CombinationRule::Identity,
        combination: CombinationRule::Uniform,
        step,
        threshold: None,
    }
}

fn sparse_alg(name: &str, kind: AlgorithmKind, mu: f64, threshold: ThresholdSpec) -> AlgorithmSpec {
    AlgorithmSpec { threshold: Some(threshold), ..alg(name, kind, PrecisionKind::Gmrf, StepSpec::Uniform(mu)) }
}

fn matched(name: &str, kind: AlgorithmKind, precision: PrecisionKind) -> AlgorithmSpec {
    alg(name, kind, precision, StepSpec::Match { target: "ATC-GMRF".into() })
}

fn base(name: &str, s: &Scale, m: usize, n_iters: usize, parameter: ParameterSpec) -> Scenario {
    Scenario {
        name: name.into(),
        m_dim: m,
        n_iters,
        n_runs: s.runs,
        steady_window: 200,
        master_seed: MASTER_SEED,
        allow_unstable: false,
        topology: TopologySpec::Random { n_nodes: s.n, radius: s.radius, seed: Some(LAYOUT_SEED) },
        noise: NoiseSpec { sigma2: SIGMA2, nugget: NU, kappa: KAPPA },
        regressors: RegressorSpec { power_range: Some(POWER_RANGE), ..Default::default() },
        parameter,
        algorithms: Vec::new(),
        tracking: None,
    }
}

fn thresholds() -> Result<[(&'static str, ThresholdSpec); 4]> {
    Ok([
        ("l1-ACS", ThresholdSpec::soft(SOFT_GAMMA)?),
        ("rwl1-ACS", ThresholdSpec::reweighted_l1(RWL1_GAMMA, RWL1_EPSILON)?),
        ("G-ACS", ThresholdSpec::garotte(GAROTTE_GAMMA)?),
        ("l0-ACS", ThresholdSpec::l0(L0_GAMMA, L0_BETA)?),
    ])
}

/// Support sizes swept at each scale.
pub fn support_grid(m: usize) -> Vec<f64> {
    let step = if m >= 50 { 4 } else { 2 };
    let mut v: Vec<f64> = (1..=m).step_by(step).map(|s| s as f64 + if m >= 50 { 1.0 } else { 0.0 }).collect();
    v.retain(|s| *s <= m as f64);
    if v.last() != Some(&(m as f64)) {
        v.push(m as f64);
    }
    v
}

pub fn preset(name: &str, desk: bool) -> Result<Preset> {
    let s = if desk { &DESK } else { &FULL };
    let static_theta = ParameterSpec::Static { theta0: None };
    let (scenario, experiment, note) = match name {
        "fig2_comparison" => {
            let mut sc = base(name, s, s.m, 2000, static_theta);
            sc.algorithms = vec![
                matched("LMS", AlgorithmKind::Standalone, PrecisionKind::Agnostic),
                matched("CTA", AlgorithmKind::Cta, PrecisionKind::Agnostic),
                matched("ATC", AlgorithmKind::Atc, PrecisionKind::Agnostic),
                alg("CTA-GMRF", AlgorithmKind::Cta, PrecisionKind::Gmrf, StepSpec::Uniform(MU_GMRF)),
                alg("ATC-GMRF", AlgorithmKind::Atc, PrecisionKind::Gmrf, StepSpec::Uniform(MU_GMRF)),
                matched("Centralized", AlgorithmKind::Centralized, PrecisionKind::Gmrf),
            ];
            (sc, Experiment::Curves, None)
        }
        "fig3_theory" => {
            let mut sc = base(name, s, s.m, 2000, static_theta);
            sc.algorithms = vec![
                alg("ATC-GMRF", AlgorithmKind::Atc, PrecisionKind::Gmrf, StepSpec::Uniform(MU_GMRF)),
                alg("CTA-GMRF", AlgorithmKind::Cta, PrecisionKind::Gmrf, StepSpec::Uniform(MU_GMRF)),
            ];
            (sc, Experiment::Theory, None)
        }
        "fig4_gain_sweep" => {
            let mut sc = base(name, s, s.m, 2000, static_theta);
            let step = StepSpec::BoundFraction { bound_fraction: GAIN_BOUND_FRACTION };
            sc.algorithms = vec![
                alg("ATC-GMRF", AlgorithmKind::Atc, PrecisionKind::Gmrf, step),
                matched("ATC", AlgorithmKind::Atc, PrecisionKind::Agnostic),
            ];
            let experiment = Experiment::Gain {
                reference: "ATC-GMRF".into(),
                baseline: "ATC".into(),
                nu: vec![0.1, 0.3, 0.5, 0.7, 0.9],
                kappa: vec![0.1, 0.5, 1.0],
            };
            (sc, experiment, None)
        }
        "fig5_sparsity_sweep" => {
            let support = if desk { 3 } else { 6 };
            let mut sc = base(name, s, s.m_sparse, 2000, ParameterSpec::Sparse { support_size: support, value: 1.0 });
            sc.algorithms = vec![alg("ATC-GMRF", AlgorithmKind::Atc, PrecisionKind::Gmrf, StepSpec::Uniform(MU_SPARSE))];
            for (label, t) in thresholds()? {
                sc.algorithms.push(sparse_alg(label, AlgorithmKind::Acs, MU_SPARSE, t));
            }
            let experiment = Experiment::Sweep { axis: SweepAxis::SupportSize, values: support_grid(s.m_sparse) };
            (sc, experiment, None)
        }
        "fig6_sparse_comparison" => {
            let support = if desk { 3 } else { 6 };
            let mut sc = base(name, s, s.m_sparse, 2000, ParameterSpec::Sparse { support_size: support, value: 1.0 });
            let l0 = ThresholdSpec::l0(L0_GAMMA, L0_BETA)?;
            sc.algorithms = vec![
                sparse_alg("l0-ACS", AlgorithmKind::Acs, MU_SPARSE, l0),
                sparse_alg("l0-ASC", AlgorithmKind::Asc, MU_SPARSE, l0),
                alg("ATC-GMRF", AlgorithmKind::Atc, PrecisionKind::Gmrf, StepSpec::Uniform(MU_SPARSE)),
            ];
            let note = "The l0 sparse diffusion LMS and projection-based sparse learning baselines \
                        (reported with rho = 2e-3, alpha = 5 and q = 20 hyperslabs) are not implemented; \
                        only the GMRF strategies are compared.";
            (sc, Experiment::Curves, Some(note.to_string()))
        }
        "fig7_tracking" => {
            let m = if desk { s.m } else { s.m_sparse };
            let traced = if desk { 3 } else { 24 };
            let zero = |start, end, component| ZeroInterval { start, end, component };
            let parameter = ParameterSpec::Ar {
                ar_coeff: 0.98,
                drive_mean: 0.01,
                drive_var: 4e-2,
                initial: None,
                zero_intervals: vec![
                    zero(1000, 1600, 0),
                    zero(3100, 3500, 0),
                    zero(1800, 2600, traced),
                    zero(4000, 4700, traced),
                    zero(2200, 3000, 1),
                ],
                random_zero_intervals: None,
            };
            let mut sc = base(name, s, m, 5000, parameter);
            sc.n_runs = 1;
            sc.algorithms =
                vec![sparse_alg("l0-ACS", AlgorithmKind::Acs, MU_TRACKING, ThresholdSpec::l0(TRACK_GAMMA, TRACK_BETA)?)];
            let components = vec![0, traced];
            sc.tracking = Some(TrackingSpec { algorithm: None, run: 0, node: 0, components });
            (sc, Experiment::Tracking, None)
        }
        other => return Err(ExpError::UnknownPreset(other.to_string())),
    };
    let name = if desk { format!("{name}_desk") } else { name.to_string() };
    let scenario = Scenario { name: name.clone(), ..scenario };
    scenario.validate()?;
    Ok(Preset { name, scenario, experiment, note })
}
