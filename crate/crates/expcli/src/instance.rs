//! Turns a [`Scenario`] into concrete matrices, step sizes and parameter laws.

use gmrflms::analysis::{
    centralized_rate, match_step_size, monotone_step_limit, transition_core, update_scalars,
};
use gmrflms::diffusion::{
    build_combination, build_exchange, centralized_count, communication_count, CombinationMatrices,
};
use gmrflms::gmrf::GmrfModel;
use gmrflms::graph::NetworkTopology;
use gmrflms::linalg::spectral_radius;
use gmrflms::seeds::{stream, StreamRole};
use gmrflms::sigmodel::{make_sparse_parameter, ParameterProcess, RegressorStats, ZeroInterval};
use gmrflms::sparsity::ThresholdSpec;
use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::error::{ExpError, Result};
use crate::scenario::{AlgorithmKind, ParameterSpec, PrecisionKind, Scenario, StepSpec, TopologySpec};

/// Run index reserved for draws shared by every run (layout, powers, intervals).
pub const SCENARIO_RUN: u64 = u64::MAX;

/// One algorithm, ready to simulate.
#[derive(Debug, Clone)]
pub struct Plan {
    pub name: String,
    pub kind: AlgorithmKind,
    pub precision_kind: PrecisionKind,
    pub precision: DMatrix<f64>,
    /// Linear part of the recursion. Sparse strategies use their ATC skeleton,
    /// stand-alone LMS uses identities.
    pub matrices: CombinationMatrices,
    pub q: DMatrix<f64>,
    pub w: DMatrix<f64>,
    /// Per node; centralized LMS uses the first entry.
    pub step_sizes: DVector<f64>,
    pub threshold: Option<ThresholdSpec>,
    /// Mean-stability bound per node (a single entry for centralized LMS).
    pub bounds: DVector<f64>,
}

impl Plan {
    pub fn central_step(&self) -> f64 {
        self.step_sizes[0]
    }

    /// Entries sent per iteration when every estimate is dense.
    pub fn dense_comm(&self, topology: &NetworkTopology, m_dim: usize) -> usize {
        match self.kind {
            AlgorithmKind::Centralized => centralized_count(topology.n_nodes(), m_dim),
            _ => communication_count(topology, &self.matrices, m_dim),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Instance {
    pub scenario: Scenario,
    pub topology: NetworkTopology,
    pub model: GmrfModel,
    pub stats: RegressorStats,
    pub zero_intervals: Vec<ZeroInterval>,
    pub plans: Vec<Plan>,
}

fn check_bounds(plan: &Plan) -> Result<()> {
    let nodes = if plan.kind == AlgorithmKind::Centralized { 1 } else { plan.step_sizes.len() };
    for node in 0..nodes {
        let (mu, bound) = (plan.step_sizes[node], plan.bounds[node]);
        if !(mu < bound) {
            return Err(ExpError::StepAboveBound { algorithm: plan.name.clone(), node, mu, bound });
        }
    }
    Ok(())
}

/// Convergence rate `ρ(H)` of a plan's mean recursion at the given steps.
pub fn plan_rate(topology: &NetworkTopology, stats: &RegressorStats, plan: &Plan, steps: &DVector<f64>) -> f64 {
    match plan.kind {
        AlgorithmKind::Centralized => centralized_rate(&plan.precision, stats, steps[0]),
        _ => {
            let d = update_scalars(topology, &plan.precision, plan.matrices.s(), stats);
            spectral_radius(&transition_core(plan.matrices.p1(), plan.matrices.p2(), &d, steps))
        }
    }
}

fn central_total(b: &DMatrix<f64>, stats: &RegressorStats) -> f64 {
    (0..stats.n_nodes()).map(|i| b[(i, i)] * stats.power(i)).sum()
}

fn build_topology(sc: &Scenario) -> Result<NetworkTopology> {
    Ok(match &sc.topology {
        TopologySpec::Random { n_nodes, radius, seed } => {
            let mut rng = stream(seed.unwrap_or(sc.master_seed), SCENARIO_RUN, StreamRole::Topology);
            NetworkTopology::random(*n_nodes, *radius, &mut rng)?
        }
        TopologySpec::Explicit(doc) => NetworkTopology::try_from(doc.clone())?,
    })
}

fn layout_seed(sc: &Scenario) -> u64 {
    match &sc.topology {
        TopologySpec::Random { seed: Some(s), .. } => *s,
        _ => sc.master_seed,
    }
}

fn build_stats(sc: &Scenario, n: usize) -> Result<RegressorStats> {
    let r = &sc.regressors;
    let stats = if let Some(p) = r.power {
        RegressorStats::uniform(sc.m_dim, n, p)?
    } else if let Some(ps) = &r.powers {
        if ps.len() != n {
            return Err(ExpError::Config(format!("{} regressor powers for {n} nodes", ps.len())));
        }
        RegressorStats::new(sc.m_dim, ps.clone())?
    } else {
        let [lo, hi] = r.power_range.expect("validated");
        let mut rng = stream(layout_seed(sc), SCENARIO_RUN, StreamRole::RegressorPowers);
        RegressorStats::random(sc.m_dim, n, lo, hi, &mut rng)?
    };
    Ok(stats)
}

fn build_intervals(sc: &Scenario) -> Result<Vec<ZeroInterval>> {
    let ParameterSpec::Ar { zero_intervals, random_zero_intervals, .. } = &sc.parameter else {
        return Ok(Vec::new());
    };
    let mut out = zero_intervals.clone();
    if let Some(rz) = random_zero_intervals {
        if rz.min_len == 0 || rz.min_len > rz.max_len || rz.max_len >= sc.n_iters {
            return Err(ExpError::Config("random_zero_intervals: need 0 < min_len <= max_len < n_iters".into()));
        }
        let components: Vec<usize> = rz.components.clone().unwrap_or_else(|| (0..sc.m_dim).collect());
        let mut rng = stream(sc.master_seed, SCENARIO_RUN, StreamRole::Parameter);
        for &component in &components {
            for _ in 0..rz.count {
                let len = rng.random_range(rz.min_len..=rz.max_len);
                let start = rng.random_range(0..sc.n_iters - len);
                out.push(ZeroInterval { start, end: start + len, component });
            }
        }
    }
    if out.iter().any(|z| z.component >= sc.m_dim || z.end < z.start) {
        return Err(ExpError::Config("zero interval out of range".into()));
    }
    Ok(out)
}

fn build_plan(sc_alg: &crate::scenario::AlgorithmSpec, topology: &NetworkTopology, model: &GmrfModel, stats: &RegressorStats) -> Result<Plan> {
    let n = topology.n_nodes();
    let precision = match sc_alg.precision {
        PrecisionKind::Gmrf => model.precision().clone(),
        PrecisionKind::Agnostic => model.agnostic_precision(),
        PrecisionKind::Identity => DMatrix::identity(n, n),
    };
    let eye = DMatrix::identity(n, n);
    let (q, w) = match sc_alg.kind {
        AlgorithmKind::Standalone | AlgorithmKind::Centralized => (eye.clone(), eye.clone()),
        _ => (build_exchange(topology, sc_alg.exchange), build_combination(topology, sc_alg.combination)),
    };
    let matrices = match sc_alg.kind {
        AlgorithmKind::Cta => CombinationMatrices::cta(topology, q.clone(), w.clone())?,
        _ => CombinationMatrices::atc(topology, q.clone(), w.clone())?,
    };
    let bounds = match sc_alg.kind {
        AlgorithmKind::Centralized => DVector::from_element(1, 2.0 / central_total(&precision, stats)),
        _ => update_scalars(topology, &precision, matrices.s(), stats).map(|d| if d > 0.0 { 2.0 / d } else { f64::INFINITY }),
    };
    Ok(Plan {
        name: sc_alg.name.clone(),
        kind: sc_alg.kind,
        precision_kind: sc_alg.precision,
        precision,
        matrices,
        q,
        w,
        step_sizes: DVector::zeros(n),
        threshold: sc_alg.threshold,
        bounds,
    })
}

impl Instance {
    pub fn new(scenario: Scenario) -> Result<Self> {
        scenario.validate()?;
        let topology = build_topology(&scenario)?;
        let n = topology.n_nodes();
        let ns = scenario.noise;
        let model = GmrfModel::new(&topology, ns.sigma2, ns.nugget, ns.kappa)?;
        let stats = build_stats(&scenario, n)?;
        let zero_intervals = build_intervals(&scenario)?;
        let mut plans = scenario
            .algorithms
            .iter()
            .map(|a| build_plan(a, &topology, &model, &stats))
            .collect::<Result<Vec<_>>>()?;

        // Direct step sizes first, then rate matching against them.
        for (plan, spec) in plans.iter_mut().zip(&scenario.algorithms) {
            plan.step_sizes = match &spec.step {
                StepSpec::Uniform(mu) => DVector::from_element(n, *mu),
                StepSpec::PerNode(v) => DVector::from_column_slice(v),
                StepSpec::BoundFraction { bound_fraction } => match plan.kind {
                    AlgorithmKind::Centralized => DVector::from_element(n, bound_fraction * plan.bounds[0]),
                    _ => &plan.bounds * *bound_fraction,
                },
                StepSpec::Match { .. } => continue,
            };
            if !scenario.allow_unstable {
                check_bounds(plan)?;
            }
        }
        for idx in 0..plans.len() {
            let StepSpec::Match { target } = &scenario.algorithms[idx].step else {
                continue;
            };
            let t = plans.iter().find(|p| &p.name == target).expect("validated");
            let rho = plan_rate(&topology, &stats, t, &t.step_sizes);
            if rho >= 1.0 {
                return Err(gmrflms::Error::Unstable(rho).into());
            }
            let plan = &plans[idx];
            let hi = match plan.kind {
                AlgorithmKind::Centralized => 1.0 / central_total(&plan.precision, &stats),
                _ => monotone_step_limit(&update_scalars(&topology, &plan.precision, plan.matrices.s(), &stats)),
            };
            let mu = match_step_size(rho, hi, |m| plan_rate(&topology, &stats, plan, &DVector::from_element(n, m)))
                .map_err(|e| ExpError::Config(format!("rate matching `{}` to `{target}` failed: {e}", plan.name)))?;
            plans[idx].step_sizes = DVector::from_element(n, mu);
        }

        if !scenario.allow_unstable {
            for plan in &plans {
                check_bounds(plan)?;
            }
        }
        Ok(Self { scenario, topology, model, stats, zero_intervals, plans })
    }

    pub fn n_nodes(&self) -> usize {
        self.topology.n_nodes()
    }

    pub fn m_dim(&self) -> usize {
        self.scenario.m_dim
    }

    /// Parameter law of run `run`, drawing any per-run randomness from `rng`.
    pub fn parameter_process<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<ParameterProcess> {
        let m = self.m_dim();
        Ok(match &self.scenario.parameter {
            ParameterSpec::Static { theta0: Some(v) } => {
                if v.len() != m {
                    return Err(ExpError::Config(format!("theta0 has {} entries, m_dim is {m}", v.len())));
                }
                ParameterProcess::Static { theta0: DVector::from_column_slice(v) }
            }
            ParameterSpec::Static { theta0: None } => {
                ParameterProcess::Static { theta0: DVector::from_fn(m, |_, _| rng.random_range(-1.0..=1.0)) }
            }
            ParameterSpec::Sparse { support_size, value } => {
                ParameterProcess::StaticSparse { theta0: make_sparse_parameter(m, *support_size, *value, rng)? }
            }
            ParameterSpec::Ar { ar_coeff, drive_mean, drive_var, initial, .. } => {
                let init = match initial {
                    Some(v) if v.len() == m => DVector::from_column_slice(v),
                    Some(v) => return Err(ExpError::Config(format!("initial has {} entries, m_dim is {m}", v.len()))),
                    None => DVector::from_element(m, drive_mean / (1.0 - ar_coeff)),
                };
                ParameterProcess::ar_tracking(init, *ar_coeff, *drive_mean, *drive_var, self.zero_intervals.clone())?
            }
        })
    }

    pub fn plan(&self, name: &str) -> Option<&Plan> {
        self.plans.iter().find(|p| p.name == name)
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::scenario::{AlgorithmSpec, NoiseSpec, RegressorSpec};
    use gmrflms::analysis::RATE_TOL;
    use gmrflms::diffusion::CombinationRule;

    pub(crate) fn base() -> Scenario {
        let alg = |name: &str, kind, precision, step| AlgorithmSpec {
            name: name.into(),
            kind,
            precision,
            exchange: CombinationRule::Identity,
            combination: CombinationRule::Uniform,
            step,
            threshold: None,
        };
        Scenario {
            name: "t".into(),
            m_dim: 3,
            n_iters: 400,
            n_runs: 2,
            steady_window: 100,
            master_seed: 5,
            allow_unstable: false,
            topology: TopologySpec::Random { n_nodes: 6, radius: 0.6, seed: Some(1) },
            noise: NoiseSpec { sigma2: 0.05, nugget: 0.9, kappa: 0.1 },
            regressors: RegressorSpec { power_range: Some([0.5, 1.5]), ..Default::default() },
            parameter: ParameterSpec::Static { theta0: None },
            algorithms: vec![
                alg("ATC-GMRF", AlgorithmKind::Atc, PrecisionKind::Gmrf, StepSpec::Uniform(5e-4)),
                alg("CTA", AlgorithmKind::Cta, PrecisionKind::Agnostic, StepSpec::Match { target: "ATC-GMRF".into() }),
                alg("LMS", AlgorithmKind::Standalone, PrecisionKind::Agnostic, StepSpec::Match { target: "ATC-GMRF".into() }),
                alg("central", AlgorithmKind::Centralized, PrecisionKind::Gmrf, StepSpec::Match { target: "ATC-GMRF".into() }),
            ],
            tracking: None,
        }
    }

    #[test]
    fn matched_rates_agree() {
        let inst = Instance::new(base()).unwrap();
        let target = plan_rate(&inst.topology, &inst.stats, &inst.plans[0], &inst.plans[0].step_sizes);
        for p in &inst.plans[1..] {
            let r = plan_rate(&inst.topology, &inst.stats, p, &p.step_sizes);
            assert!((r - target).abs() < RATE_TOL, "{}: {r} vs {target}", p.name);
        }
    }

    #[test]
    fn layout_is_fixed_by_topology_seed() {
        let a = Instance::new(base()).unwrap();
        let mut sc = base();
        sc.master_seed = 77;
        let b = Instance::new(sc).unwrap();
        assert_eq!(a.topology, b.topology);
        assert_eq!(a.stats, b.stats);
    }

    #[test]
    fn step_above_bound_is_refused_unless_allowed() {
        let mut sc = base();
        sc.algorithms[0].step = StepSpec::BoundFraction { bound_fraction: 1.2 };
        sc.algorithms.truncate(1);
        assert!(matches!(Instance::new(sc.clone()), Err(ExpError::StepAboveBound { .. })));
        sc.allow_unstable = true;
        let inst = Instance::new(sc).unwrap();
        assert!((inst.plans[0].step_sizes[0] - 1.2 * inst.plans[0].bounds[0]).abs() < 1e-15);
    }

    #[test]
    fn random_zero_intervals_are_in_range() {
        let mut sc = base();
        sc.parameter = ParameterSpec::Ar {
            ar_coeff: 0.98,
            drive_mean: 0.01,
            drive_var: 0.04,
            initial: None,
            zero_intervals: vec![],
            random_zero_intervals: Some(crate::scenario::RandomZeros { count: 2, min_len: 20, max_len: 50, components: None }),
        };
        let inst = Instance::new(sc).unwrap();
        assert_eq!(inst.zero_intervals.len(), 6);
        for z in &inst.zero_intervals {
            assert!(z.end <= 400 && (20..=50).contains(&(z.end - z.start)));
        }
        let mut rng = stream(1, 0, StreamRole::Parameter);
        let p = inst.parameter_process(&mut rng).unwrap();
        assert!((p.initial()[0] - 0.5).abs() < 1e-12);
    }
}
