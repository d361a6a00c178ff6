//! Paired Monte Carlo simulation of every configured algorithm.

use std::time::Instant;

use gmrflms::analysis::to_db;
use gmrflms::diffusion::{
    atc_step, centralized_lms_step, cta_step, standalone_lms_step, AlgorithmState, Snapshot,
};
use gmrflms::seeds::{derive_seed, stream, StreamRole};
use gmrflms::sigmodel::draw_regressors_into;
use gmrflms::sparsity::{acs_step, asc_communication_count, asc_step};
use gmrflms::Error as CoreError;
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{ExpError, Result};
use crate::instance::{Instance, Plan};
use crate::scenario::AlgorithmKind;

/// Estimates held by one algorithm during a run.
#[derive(Debug, Clone)]
pub enum EstimatorState {
    Network(AlgorithmState),
    /// Centralized LMS keeps one estimate shared by all nodes.
    Central(DVector<f64>),
}

impl EstimatorState {
    fn new(plan: &Plan, m: usize) -> Self {
        match plan.kind {
            AlgorithmKind::Centralized => Self::Central(DVector::zeros(m)),
            _ => Self::Network(AlgorithmState::zeros(m, plan.step_sizes.clone())),
        }
    }

    pub fn node_estimate(&self, node: usize) -> DVector<f64> {
        match self {
            Self::Network(s) => s.thetas.column(node).into_owned(),
            Self::Central(t) => t.clone(),
        }
    }

    /// `‖θ₀ - θ_i‖²` for node `i`.
    pub fn node_sq_error(&self, node: usize, theta0: &DVector<f64>) -> f64 {
        match self {
            Self::Network(s) => s
                .thetas
                .column(node)
                .iter()
                .zip(theta0.iter())
                .map(|(a, b)| (a - b) * (a - b))
                .sum(),
            Self::Central(t) => (t - theta0).norm_squared(),
        }
    }

    pub fn network_msd(&self, theta0: &DVector<f64>) -> f64 {
        match self {
            Self::Network(s) => s.network_msd(theta0),
            Self::Central(t) => (t - theta0).norm_squared(),
        }
    }
}

/// What an observer sees after every iteration of a run.
pub struct StepView<'a> {
    pub k: usize,
    pub theta0: &'a DVector<f64>,
    pub states: &'a [EstimatorState],
    /// False once an algorithm has diverged in this run.
    pub alive: &'a [bool],
    /// Entries each algorithm transmitted in this iteration.
    pub comm: &'a [usize],
}

fn advance(inst: &Instance, plan: &Plan, state: &mut EstimatorState, data: &Snapshot) -> gmrflms::Result<usize> {
    let topo = &inst.topology;
    let b = &plan.precision;
    match (plan.kind, state) {
        (AlgorithmKind::Centralized, EstimatorState::Central(theta)) => {
            centralized_lms_step(theta, data, b, plan.central_step())?;
        }
        (AlgorithmKind::Atc, EstimatorState::Network(s)) => atc_step(s, &plan.q, &plan.w, data, topo, b)?,
        (AlgorithmKind::Cta, EstimatorState::Network(s)) => cta_step(s, &plan.q, &plan.w, data, topo, b)?,
        (AlgorithmKind::Standalone, EstimatorState::Network(s)) => standalone_lms_step(s, data, topo, b)?,
        (AlgorithmKind::Acs, EstimatorState::Network(s)) => {
            acs_step(s, &plan.q, &plan.w, plan.threshold.as_ref().expect("validated"), data, topo, b)?
        }
        (AlgorithmKind::Asc, EstimatorState::Network(s)) => {
            asc_step(s, &plan.q, &plan.w, plan.threshold.as_ref().expect("validated"), data, topo, b)?;
            return Ok(asc_communication_count(topo, &plan.q, &plan.w, &s.scratch));
        }
        _ => unreachable!("state built from the plan"),
    }
    Ok(plan.dense_comm(topo, inst.m_dim()))
}

/// Simulates run `run` of every algorithm on one shared data stream.
pub fn simulate_run<F>(inst: &Instance, run: usize, mut observe: F) -> Result<()>
where
    F: FnMut(&StepView),
{
    let sc = &inst.scenario;
    let (n, m) = (inst.n_nodes(), inst.m_dim());
    let r = run as u64;
    let mut reg_rng = stream(sc.master_seed, r, StreamRole::Regressors);
    let mut noise_rng = stream(sc.master_seed, r, StreamRole::Noise);
    let mut param_rng = stream(sc.master_seed, r, StreamRole::Parameter);
    let process = inst.parameter_process(&mut param_rng)?;
    let mut theta0 = process.initial().clone();
    let mut states: Vec<EstimatorState> = inst.plans.iter().map(|p| EstimatorState::new(p, m)).collect();
    let mut alive = vec![true; states.len()];
    let mut comm = vec![0usize; states.len()];
    let mut data = Snapshot { u: DMatrix::zeros(n, m), x: DVector::zeros(n) };
    let mut v = DVector::zeros(n);
    for k in 0..sc.n_iters {
        process.step(k, &mut theta0, &mut param_rng);
        draw_regressors_into(&inst.stats, &mut reg_rng, &mut data.u);
        inst.model.sample_into(&mut noise_rng, &mut v);
        data.x.gemv(1.0, &data.u, &theta0, 0.0);
        data.x += &v;
        for (idx, plan) in inst.plans.iter().enumerate() {
            if !alive[idx] {
                comm[idx] = 0;
                continue;
            }
            match advance(inst, plan, &mut states[idx], &data) {
                Ok(c) => comm[idx] = c,
                Err(CoreError::Diverged { .. }) => {
                    alive[idx] = false;
                    comm[idx] = 0;
                }
                Err(e) => return Err(e.into()),
            }
        }
        observe(&StepView { k, theta0: &theta0, states: &states, alive: &alive, comm: &comm });
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AlgorithmResult {
    pub name: String,
    pub kind: AlgorithmKind,
    pub step_sizes: Vec<f64>,
    /// Network MSD per iteration, averaged over non-diverged runs (linear).
    pub msd_curve: Vec<f64>,
    /// Per-node MSD averaged over the steady window and runs (linear).
    pub node_steady: Vec<f64>,
    /// Network MSD averaged over the steady window and runs (linear).
    pub steady_msd: f64,
    pub mean_comm_entries: f64,
    pub dense_comm_entries: usize,
    pub diverged_runs: usize,
}

impl AlgorithmResult {
    pub fn steady_msd_db(&self) -> f64 {
        to_db(self.steady_msd)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrackingTrace {
    pub algorithm: String,
    pub node: usize,
    pub components: Vec<usize>,
    /// `[iteration][component]`.
    pub estimate: Vec<Vec<f64>>,
    pub truth: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunSeeds {
    pub run: usize,
    pub regressors: u64,
    pub noise: u64,
    pub parameter: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunSet {
    pub scenario: String,
    pub n_iters: usize,
    pub n_runs: usize,
    pub algorithms: Vec<AlgorithmResult>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tracking: Option<TrackingTrace>,
    pub wall_clock_s: f64,
    pub seed_trail: Vec<RunSeeds>,
}

impl RunSet {
    pub fn get(&self, name: &str) -> Option<&AlgorithmResult> {
        self.algorithms.iter().find(|a| a.name == name)
    }
}

struct AlgRun {
    curve: Vec<f64>,
    node_window: Vec<f64>,
    comm_sum: f64,
    diverged: bool,
}

struct RunOutcome {
    algs: Vec<AlgRun>,
    trace: Option<TrackingTrace>,
}

fn run_one(inst: &Instance, run: usize) -> Result<RunOutcome> {
    let sc = &inst.scenario;
    let (n, iters, window) = (inst.n_nodes(), sc.n_iters, sc.steady_window);
    let mut algs: Vec<AlgRun> = inst
        .plans
        .iter()
        .map(|_| AlgRun { curve: vec![0.0; iters], node_window: vec![0.0; n], comm_sum: 0.0, diverged: false })
        .collect();
    let tracking = sc.tracking.as_ref().filter(|t| t.run == run);
    let mut trace = tracking.map(|t| {
        let name = t.algorithm.clone().unwrap_or_else(|| inst.plans[0].name.clone());
        TrackingTrace {
            algorithm: name,
            node: t.node,
            components: t.components.clone(),
            estimate: Vec::with_capacity(iters),
            truth: Vec::with_capacity(iters),
        }
    });
    let traced = trace.as_ref().map(|t| inst.plans.iter().position(|p| p.name == t.algorithm).expect("validated"));
    simulate_run(inst, run, |view| {
        for (idx, acc) in algs.iter_mut().enumerate() {
            if !view.alive[idx] {
                acc.diverged = true;
                continue;
            }
            let st = &view.states[idx];
            acc.curve[view.k] = st.network_msd(view.theta0);
            acc.comm_sum += view.comm[idx] as f64;
            if view.k >= iters - window {
                for (i, w) in acc.node_window.iter_mut().enumerate() {
                    *w += st.node_sq_error(i, view.theta0);
                }
            }
        }
        if let (Some(tr), Some(idx)) = (trace.as_mut(), traced) {
            let est = view.states[idx].node_estimate(tr.node);
            tr.estimate.push(tr.components.iter().map(|&c| est[c]).collect());
            tr.truth.push(tr.components.iter().map(|&c| view.theta0[c]).collect());
        }
    })?;
    Ok(RunOutcome { algs, trace })
}

/// Mean of the last `window` entries of a linear-scale MSD trajectory, in dB.
///
/// # Panics
/// If `window` is zero or longer than the trajectory.
pub fn steady_state_msd(trajectory: &[f64], window: usize) -> f64 {
    assert!(window >= 1 && window <= trajectory.len(), "window {window} for {} samples", trajectory.len());
    let tail = &trajectory[trajectory.len() - window..];
    to_db(tail.iter().sum::<f64>() / window as f64)
}

#[derive(Debug, Clone, Copy, Default)]
pub struct RunOptions {
    /// Worker threads; `None` uses every core.
    pub jobs: Option<usize>,
}

/// Runs every Monte Carlo run and averages them in run order.
pub fn run_scenario(inst: &Instance, opts: RunOptions) -> Result<RunSet> {
    let started = Instant::now();
    let sc = &inst.scenario;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.jobs.unwrap_or(0))
        .build()
        .map_err(|e| ExpError::Config(format!("cannot start worker pool: {e}")))?;
    let outcomes: Vec<RunOutcome> =
        pool.install(|| (0..sc.n_runs).into_par_iter().map(|r| run_one(inst, r)).collect::<Result<Vec<_>>>())?;

    let (n, iters, window) = (inst.n_nodes(), sc.n_iters, sc.steady_window);
    let mut algorithms = Vec::with_capacity(inst.plans.len());
    for (idx, plan) in inst.plans.iter().enumerate() {
        let mut curve = vec![0.0; iters];
        let mut node = vec![0.0; n];
        let (mut comm, mut ok, mut diverged) = (0.0, 0usize, 0usize);
        for out in &outcomes {
            let a = &out.algs[idx];
            if a.diverged {
                diverged += 1;
                continue;
            }
            ok += 1;
            curve.iter_mut().zip(&a.curve).for_each(|(c, x)| *c += x);
            node.iter_mut().zip(&a.node_window).for_each(|(c, x)| *c += x);
            comm += a.comm_sum;
        }
        if ok == 0 && !sc.allow_unstable {
            return Err(ExpError::AllRunsDiverged(plan.name.clone()));
        }
        let runs = ok as f64;
        curve.iter_mut().for_each(|c| *c = if ok > 0 { *c / runs } else { f64::NAN });
        node.iter_mut().for_each(|c| *c = if ok > 0 { *c / (runs * window as f64) } else { f64::NAN });
        let tail = &curve[iters - window..];
        let steady_msd = tail.iter().sum::<f64>() / window as f64;
        algorithms.push(AlgorithmResult {
            name: plan.name.clone(),
            kind: plan.kind,
            step_sizes: match plan.kind {
                AlgorithmKind::Centralized => vec![plan.central_step()],
                _ => plan.step_sizes.iter().copied().collect(),
            },
            msd_curve: curve,
            node_steady: node,
            steady_msd,
            mean_comm_entries: if ok > 0 { comm / (runs * iters as f64) } else { 0.0 },
            dense_comm_entries: plan.dense_comm(&inst.topology, inst.m_dim()),
            diverged_runs: diverged,
        });
    }
    let tracking = outcomes.into_iter().find_map(|o| o.trace);
    let seed_trail = (0..sc.n_runs)
        .map(|run| RunSeeds {
            run,
            regressors: derive_seed(sc.master_seed, run as u64, StreamRole::Regressors),
            noise: derive_seed(sc.master_seed, run as u64, StreamRole::Noise),
            parameter: derive_seed(sc.master_seed, run as u64, StreamRole::Parameter),
        })
        .collect();
    Ok(RunSet {
        scenario: sc.name.clone(),
        n_iters: iters,
        n_runs: sc.n_runs,
        algorithms,
        tracking,
        wall_clock_s: started.elapsed().as_secs_f64(),
        seed_trail,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::tests::base;
    use crate::scenario::{StepSpec, TrackingSpec};

    #[test]
    fn steady_state_window() {
        assert!((steady_state_msd(&[0.1; 10], 4) - to_db(0.1)).abs() < 1e-12);
        assert!((steady_state_msd(&[1.0, 2.0, 0.01], 1) - to_db(0.01)).abs() < 1e-12);
        assert!((steady_state_msd(&[5.0, 1.0, 3.0], 2) - to_db(2.0)).abs() < 1e-12);
    }

    #[test]
    #[should_panic]
    fn steady_window_longer_than_trajectory() {
        steady_state_msd(&[1.0], 2);
    }

    #[test]
    fn identical_regardless_of_thread_count() {
        let inst = Instance::new(base()).unwrap();
        let a = run_scenario(&inst, RunOptions { jobs: Some(1) }).unwrap();
        let b = run_scenario(&inst, RunOptions { jobs: Some(3) }).unwrap();
        assert_eq!(a.algorithms, b.algorithms);
    }

    #[test]
    fn dropping_an_algorithm_leaves_the_others_untouched() {
        let mut sc = base();
        sc.algorithms[1].step = StepSpec::Uniform(1e-3);
        sc.algorithms[2].step = StepSpec::Uniform(1e-3);
        sc.algorithms[3].step = StepSpec::Uniform(1e-4);
        let full = run_scenario(&Instance::new(sc.clone()).unwrap(), RunOptions::default()).unwrap();
        sc.algorithms.remove(1);
        let part = run_scenario(&Instance::new(sc).unwrap(), RunOptions::default()).unwrap();
        assert_eq!(full.algorithms[0], part.algorithms[0]);
        assert_eq!(full.algorithms[2].msd_curve, part.algorithms[1].msd_curve);
    }

    #[test]
    fn unstable_steps_are_recorded_as_divergence() {
        let mut sc = base();
        sc.algorithms.truncate(1);
        sc.algorithms[0].step = StepSpec::BoundFraction { bound_fraction: 2.5 };
        sc.allow_unstable = true;
        let res = run_scenario(&Instance::new(sc.clone()).unwrap(), RunOptions::default()).unwrap();
        assert_eq!(res.algorithms[0].diverged_runs, sc.n_runs);
        assert!(res.algorithms[0].steady_msd.is_nan());
    }

    #[test]
    fn learning_curves_decrease_and_trace_is_recorded() {
        let mut sc = base();
        sc.tracking = Some(TrackingSpec { algorithm: None, run: 1, node: 2, components: vec![0, 2] });
        let res = run_scenario(&Instance::new(sc).unwrap(), RunOptions::default()).unwrap();
        for a in &res.algorithms {
            assert_eq!(a.msd_curve.len(), 400);
            assert!(a.steady_msd < 0.05 * a.msd_curve[0], "{}", a.name);
            assert_eq!(a.diverged_runs, 0);
        }
        let tr = res.tracking.as_ref().unwrap();
        assert_eq!(tr.estimate.len(), 400);
        assert_eq!(tr.truth[0].len(), 2);
        assert_eq!(res.get("central").unwrap().dense_comm_entries, 6 * 4);
    }
}
