//! Steady-state theory for every algorithm of a scenario.

use gmrflms::analysis::{theory_report, TheoryInputs};
use serde::Serialize;

use crate::error::Result;
use crate::instance::{Instance, Plan};
use crate::scenario::{AlgorithmKind, PrecisionKind};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AlgorithmTheory {
    pub name: String,
    pub kind: AlgorithmKind,
    pub step_sizes: Vec<f64>,
    pub step_bounds: Vec<f64>,
    /// Spectral radius of the mean transition matrix.
    pub spectral_radius_h: f64,
    pub block_max_norm_h: f64,
    pub block_norm_imd: f64,
    pub mean_stable: bool,
    pub mean_square_stable: bool,
    /// `None` for thresholded recursions or unstable configurations.
    pub msd_per_node: Option<Vec<f64>>,
    pub msd_network: Option<f64>,
}

/// Small-step theory of centralized LMS: `μ² M g / (1 - (1 - μ t)²)` with
/// `t = Σ b_ii σ²_{u,i}` and `g = Σ σ²_{u,i} (B C B)_ii`.
fn centralized_theory(inst: &Instance, plan: &Plan) -> AlgorithmTheory {
    let b = &plan.precision;
    let bcb = b * inst.model.covariance() * b;
    let n = inst.n_nodes();
    let t: f64 = (0..n).map(|i| b[(i, i)] * inst.stats.power(i)).sum();
    let g: f64 = (0..n).map(|i| bcb[(i, i)] * inst.stats.power(i)).sum();
    let mu = plan.central_step();
    let h = 1.0 - mu * t;
    let stable = h.abs() < 1.0;
    let msd = stable.then(|| mu * mu * inst.m_dim() as f64 * g / (1.0 - h * h));
    AlgorithmTheory {
        name: plan.name.clone(),
        kind: plan.kind,
        step_sizes: vec![mu],
        step_bounds: vec![plan.bounds[0]],
        spectral_radius_h: h.abs(),
        block_max_norm_h: h.abs(),
        block_norm_imd: h.abs(),
        mean_stable: stable,
        mean_square_stable: stable,
        msd_per_node: msd.map(|m| vec![m; n]),
        msd_network: msd,
    }
}

pub fn plan_theory(inst: &Instance, plan: &Plan) -> Result<AlgorithmTheory> {
    if plan.kind == AlgorithmKind::Centralized {
        return Ok(centralized_theory(inst, plan));
    }
    let inputs = TheoryInputs {
        topology: &inst.topology,
        b: &plan.precision,
        c: inst.model.covariance(),
        matrices: &plan.matrices,
        stats: &inst.stats,
        step_sizes: &plan.step_sizes,
    };
    let rep = theory_report(&inputs, plan.precision_kind == PrecisionKind::Gmrf)?;
    let linear = plan.kind.has_theory();
    Ok(AlgorithmTheory {
        name: plan.name.clone(),
        kind: plan.kind,
        step_sizes: plan.step_sizes.iter().copied().collect(),
        step_bounds: rep.step_bounds.clone(),
        spectral_radius_h: rep.spectral_radius_h,
        block_max_norm_h: rep.block_max_norm_h,
        block_norm_imd: rep.block_norm_imd,
        mean_stable: rep.mean_stable,
        mean_square_stable: rep.ms_stable,
        msd_per_node: if linear { rep.msd_per_node } else { None },
        msd_network: if linear { rep.msd_network } else { None },
    })
}

pub fn analyze(inst: &Instance) -> Result<Vec<AlgorithmTheory>> {
    inst.plans.iter().map(|p| plan_theory(inst, p)).collect()
}
