//! Thresholding operators and the sparsity-aware ACS/ASC diffusion strategies.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::diffusion::{
    active_links, adapt, check_divergence, combine, data_exchange_count, AlgorithmState, Snapshot,
};
use crate::graph::NetworkTopology;
use crate::{Error, Result};

pub const DEFAULT_EPSILON: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdKind {
    /// LASSO soft threshold.
    Soft,
    ReweightedL1,
    Garotte,
    /// Taylor approximation of the exponential ℓ0 surrogate.
    L0,
}

impl ThresholdKind {
    pub fn label(self) -> &'static str {
        match self {
            Self::Soft => "l1",
            Self::ReweightedL1 => "rwl1",
            Self::Garotte => "garotte",
            Self::L0 => "l0",
        }
    }
}

/// A validated thresholding operator `T_γ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ThresholdDoc", into = "ThresholdDoc")]
pub struct ThresholdSpec {
    kind: ThresholdKind,
    gamma: f64,
    beta: f64,
    epsilon: f64,
}

#[derive(Serialize, Deserialize)]
struct ThresholdDoc {
    kind: ThresholdKind,
    gamma: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    beta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    epsilon: Option<f64>,
}

impl TryFrom<ThresholdDoc> for ThresholdSpec {
    type Error = Error;
    fn try_from(d: ThresholdDoc) -> Result<Self> {
        match d.kind {
            ThresholdKind::L0 => {
                let beta = d.beta.ok_or_else(|| Error::InvalidSpec("l0 threshold needs beta".into()))?;
                Self::l0(d.gamma, beta)
            }
            ThresholdKind::ReweightedL1 => Self::reweighted_l1(d.gamma, d.epsilon.unwrap_or(DEFAULT_EPSILON)),
            kind => Self::new(kind, d.gamma),
        }
    }
}

impl From<ThresholdSpec> for ThresholdDoc {
    fn from(s: ThresholdSpec) -> Self {
        Self {
            kind: s.kind,
            gamma: s.gamma,
            beta: (s.kind == ThresholdKind::L0).then_some(s.beta),
            epsilon: (s.kind == ThresholdKind::ReweightedL1).then_some(s.epsilon),
        }
    }
}

impl ThresholdSpec {
    /// Soft or garotte threshold; the other kinds need their extra parameter.
    pub fn new(kind: ThresholdKind, gamma: f64) -> Result<Self> {
        match kind {
            ThresholdKind::L0 => Err(Error::InvalidSpec("use ThresholdSpec::l0".into())),
            ThresholdKind::ReweightedL1 => Self::reweighted_l1(gamma, DEFAULT_EPSILON),
            _ => {
                check_gamma(gamma)?;
                Ok(Self { kind, gamma, beta: 0.0, epsilon: 0.0 })
            }
        }
    }

    pub fn soft(gamma: f64) -> Result<Self> {
        Self::new(ThresholdKind::Soft, gamma)
    }

    pub fn garotte(gamma: f64) -> Result<Self> {
        Self::new(ThresholdKind::Garotte, gamma)
    }

    pub fn reweighted_l1(gamma: f64, epsilon: f64) -> Result<Self> {
        check_gamma(gamma)?;
        if !(epsilon > 0.0 && epsilon <= 0.1) {
            return Err(Error::InvalidSpec(format!("epsilon must lie in (0, 0.1], got {epsilon}")));
        }
        Ok(Self { kind: ThresholdKind::ReweightedL1, gamma, beta: 0.0, epsilon })
    }

    /// Requires `β < √(1/γ)`, i.e. `γβ² < 1`.
    pub fn l0(gamma: f64, beta: f64) -> Result<Self> {
        check_gamma(gamma)?;
        if !(beta > 0.0 && beta.is_finite()) {
            return Err(Error::InvalidSpec(format!("beta must be positive, got {beta}")));
        }
        if !(gamma * beta * beta < 1.0) {
            return Err(Error::InvalidSpec(format!("l0 needs beta < sqrt(1/gamma), got beta={beta}, gamma={gamma}")));
        }
        Ok(Self { kind: ThresholdKind::L0, gamma, beta, epsilon: 0.0 })
    }

    pub fn kind(&self) -> ThresholdKind {
        self.kind
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn beta(&self) -> Option<f64> {
        (self.kind == ThresholdKind::L0).then_some(self.beta)
    }

    pub fn epsilon(&self) -> Option<f64> {
        (self.kind == ThresholdKind::ReweightedL1).then_some(self.epsilon)
    }

    /// Same operator with a different `γ`, revalidated.
    pub fn with_gamma(&self, gamma: f64) -> Result<Self> {
        match self.kind {
            ThresholdKind::L0 => Self::l0(gamma, self.beta),
            ThresholdKind::ReweightedL1 => Self::reweighted_l1(gamma, self.epsilon),
            k => Self::new(k, gamma),
        }
    }

    /// Scalar `T_γ(x)`.
    pub fn apply_scalar(&self, x: f64) -> f64 {
        let a = x.abs();
        let g = self.gamma;
        match self.kind {
            ThresholdKind::Soft => {
                if a > g {
                    x - g.copysign(x)
                } else {
                    0.0
                }
            }
            ThresholdKind::ReweightedL1 => {
                let y = self.epsilon + a;
                let f = if y <= 1.0 { 1.0 / y } else { 1.0 };
                if a > g * f {
                    x - g.copysign(x)
                } else {
                    0.0
                }
            }
            ThresholdKind::Garotte => {
                if a > g {
                    x - g * g / x
                } else {
                    0.0
                }
            }
            ThresholdKind::L0 => {
                let gb = g * self.beta;
                if a >= 1.0 / self.beta {
                    x
                } else if a > gb {
                    (x - gb.copysign(x)) / (1.0 - g * self.beta * self.beta)
                } else {
                    0.0
                }
            }
        }
    }

    pub fn apply_in_place(&self, xs: &mut [f64]) {
        for x in xs {
            *x = self.apply_scalar(*x);
        }
    }

    /// Largest `|T_γ(x) - x|` over all scalars `x`.
    ///
    /// For the reweighted operator the adaptive threshold zeroes values up to
    /// the root of `x(ε + x) = γ`, which exceeds `γ` itself.
    pub fn max_perturbation(&self) -> f64 {
        let g = self.gamma;
        match self.kind {
            ThresholdKind::Soft | ThresholdKind::Garotte => g,
            ThresholdKind::L0 => g * self.beta,
            ThresholdKind::ReweightedL1 => {
                let e = self.epsilon;
                let root = 0.5 * (-e + (e * e + 4.0 * g).sqrt());
                if root + e <= 1.0 {
                    g.max(root)
                } else {
                    g.max(1.0 - e)
                }
            }
        }
    }
}

fn check_gamma(gamma: f64) -> Result<()> {
    if gamma >= 0.0 && gamma.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidSpec(format!("gamma must be non-negative, got {gamma}")))
    }
}

/// Component-wise `T_γ(x)`.
pub fn apply_threshold(spec: &ThresholdSpec, x: &DVector<f64>) -> DVector<f64> {
    x.map(|v| spec.apply_scalar(v))
}

/// Bound `c₁` on `‖T_γ(x) - x‖₂` for `M`-vectors.
pub fn threshold_bound(spec: &ThresholdSpec, m_dim: usize) -> f64 {
    spec.max_perturbation() * (m_dim as f64).sqrt()
}

/// Indices with `|x_m| > tol`.
pub fn support(x: &[f64], tol: f64) -> Vec<usize> {
    x.iter().enumerate().filter(|(_, v)| v.abs() > tol).map(|(m, _)| m).collect()
}

/// Adapt, combine into `ζ`, then sparsify: `θ_i = T_γ(ζ_i)`.
pub fn acs_step(
    state: &mut AlgorithmState,
    q: &DMatrix<f64>,
    w: &DMatrix<f64>,
    spec: &ThresholdSpec,
    data: &Snapshot,
    topology: &NetworkTopology,
    b: &DMatrix<f64>,
) -> Result<()> {
    check_inputs(state, data, topology, b)?;
    adapt(topology, q, b, data, &state.step_sizes, &state.thetas, &mut state.scratch);
    combine(topology, w, &state.scratch, &mut state.thetas);
    state.scratch.copy_from(&state.thetas);
    spec.apply_in_place(state.thetas.as_mut_slice());
    check_divergence(&state.thetas)
}

/// Adapt, sparsify `ψ` into `ζ`, then combine the sparse vectors.
pub fn asc_step(
    state: &mut AlgorithmState,
    q: &DMatrix<f64>,
    w: &DMatrix<f64>,
    spec: &ThresholdSpec,
    data: &Snapshot,
    topology: &NetworkTopology,
    b: &DMatrix<f64>,
) -> Result<()> {
    check_inputs(state, data, topology, b)?;
    adapt(topology, q, b, data, &state.step_sizes, &state.thetas, &mut state.scratch);
    spec.apply_in_place(state.scratch.as_mut_slice());
    combine(topology, w, &state.scratch, &mut state.thetas);
    check_divergence(&state.thetas)
}

fn check_inputs(state: &AlgorithmState, data: &Snapshot, topology: &NetworkTopology, b: &DMatrix<f64>) -> Result<()> {
    let n = topology.n_nodes();
    if state.n_nodes() != n || data.u.shape() != (n, state.m_dim()) || data.x.len() != n || b.shape() != (n, n) {
        return Err(Error::DimensionMismatch("sparse diffusion inputs disagree".into()));
    }
    Ok(())
}

/// Per-iteration ASC traffic: each node sends only the support of its `ζ_j`.
///
/// `zeta` is the `M×N` matrix of sparsified intermediates (the state's
/// scratch right after [`asc_step`]).
pub fn asc_communication_count(
    topology: &NetworkTopology,
    q: &DMatrix<f64>,
    w: &DMatrix<f64>,
    zeta: &DMatrix<f64>,
) -> usize {
    let m = zeta.nrows();
    let sparse: usize = active_links(topology, w)
        .map(|(j, _)| zeta.column(j).iter().filter(|v| **v != 0.0).count())
        .sum();
    sparse + data_exchange_count(topology, q, m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffusion::{atc_step, build_combination, build_exchange, CombinationRule};
    use crate::gmrf::GmrfModel;
    use crate::sigmodel::{draw_regressors, make_sparse_parameter, observe, RegressorStats};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() < 1e-12
    }

    #[test]
    fn soft_cases() {
        let t = ThresholdSpec::soft(0.5).unwrap();
        assert!(close(t.apply_scalar(1.0), 0.5));
        assert!(close(t.apply_scalar(-1.2), -0.7));
        assert_eq!(t.apply_scalar(0.3), 0.0);
        assert_eq!(t.apply_scalar(0.5), 0.0);
        assert_eq!(t.apply_scalar(-0.5), 0.0);
    }

    #[test]
    fn garotte_cases() {
        let t = ThresholdSpec::garotte(1.0).unwrap();
        assert!(close(t.apply_scalar(2.0), 1.5));
        assert_eq!(t.apply_scalar(0.9), 0.0);
        assert_eq!(t.apply_scalar(1.0), 0.0);
        let x: f64 = 3.7;
        assert!(close(t.apply_scalar(x), x * (1.0 - 1.0 / (x * x))));
    }

    #[test]
    fn l0_cases() {
        let t = ThresholdSpec::l0(1e-4, 50.0).unwrap();
        assert_eq!(t.apply_scalar(0.03), 0.03);
        assert!(close(t.apply_scalar(0.01), 0.005 / 0.75));
        assert!(close(t.apply_scalar(-0.01), -0.005 / 0.75));
        assert_eq!(t.apply_scalar(0.004), 0.0);
        assert_eq!(t.apply_scalar(0.005), 0.0);
        assert_eq!(t.apply_scalar(0.02), 0.02);
        assert!(matches!(ThresholdSpec::l0(1e-4, 100.0), Err(Error::InvalidSpec(_))));
        assert!(matches!(ThresholdSpec::l0(1e-4, 120.0), Err(Error::InvalidSpec(_))));
    }

    #[test]
    fn reweighted_cases() {
        let t = ThresholdSpec::reweighted_l1(0.1, 0.01).unwrap();
        assert_eq!(t.apply_scalar(0.05), 0.0);
        assert!(close(t.apply_scalar(2.0), 1.9));
        assert!(close(t.apply_scalar(-2.0), -1.9));
        assert!(ThresholdSpec::reweighted_l1(0.1, 0.2).is_err());
        assert!(ThresholdSpec::reweighted_l1(0.1, 0.0).is_err());
    }

    #[test]
    fn bounds() {
        assert!(close(threshold_bound(&ThresholdSpec::soft(0.5).unwrap(), 4), 1.0));
        let l0 = ThresholdSpec::l0(1e-4, 50.0).unwrap();
        assert!((threshold_bound(&l0, 50) - 0.005 * 50f64.sqrt()).abs() < 1e-15);
        assert_eq!(threshold_bound(&ThresholdSpec::garotte(0.0).unwrap(), 7), 0.0);
    }

    #[test]
    fn reweighted_perturbation_exceeds_gamma() {
        let t = ThresholdSpec::reweighted_l1(0.1, 0.01).unwrap();
        // 0.15 (0.01 + 0.15) = 0.024 < 0.1, so 0.15 is zeroed.
        assert_eq!(t.apply_scalar(0.15), 0.0);
        assert!(t.max_perturbation() > 0.3);
    }

    #[test]
    fn support_sets() {
        assert!(support(&[0.0; 4], 0.0).is_empty());
        assert_eq!(support(&[0.0, 1.0, -2.0, 0.0], 0.0), vec![1, 2]);
        assert_eq!(support(&[0.1, 1.0], 0.5), vec![1]);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let theta = make_sparse_parameter(50, 6, 1.0, &mut rng).unwrap();
        assert_eq!(support(theta.as_slice(), 0.0).len(), 6);
    }

    #[test]
    fn serde_round_trip_and_validation() {
        let t: ThresholdSpec = serde_json::from_str(r#"{"kind":"l0","gamma":1e-4,"beta":50}"#).unwrap();
        assert_eq!(t, ThresholdSpec::l0(1e-4, 50.0).unwrap());
        let back = serde_json::to_string(&t).unwrap();
        assert_eq!(serde_json::from_str::<ThresholdSpec>(&back).unwrap(), t);
        let r: ThresholdSpec = serde_json::from_str(r#"{"kind":"reweighted_l1","gamma":0.1}"#).unwrap();
        assert_eq!(r.epsilon(), Some(DEFAULT_EPSILON));
        assert!(serde_json::from_str::<ThresholdSpec>(r#"{"kind":"l0","gamma":1e-4}"#).is_err());
        assert!(serde_json::from_str::<ThresholdSpec>(r#"{"kind":"soft","gamma":-1}"#).is_err());
    }

    fn all_kinds(gamma: f64) -> Vec<ThresholdSpec> {
        vec![
            ThresholdSpec::soft(gamma).unwrap(),
            ThresholdSpec::reweighted_l1(gamma, 0.01).unwrap(),
            ThresholdSpec::garotte(gamma).unwrap(),
            ThresholdSpec::l0(gamma, 50.0).unwrap(),
        ]
    }

    struct Rig {
        topo: NetworkTopology,
        b: DMatrix<f64>,
        q: DMatrix<f64>,
        w: DMatrix<f64>,
        data: Vec<Snapshot>,
        init: AlgorithmState,
    }

    fn rig(seed: u64, theta0: Option<DVector<f64>>, noise: bool, iters: usize) -> Rig {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = 6;
        let m = 8;
        let topo = NetworkTopology::random(n, 0.5, &mut rng).unwrap();
        let model = GmrfModel::new(&topo, 0.05, 0.9, 0.1).unwrap();
        let stats = RegressorStats::uniform(m, n, 1.0).unwrap();
        let theta0 = theta0.unwrap_or_else(|| make_sparse_parameter(m, 2, 1.0, &mut rng).unwrap());
        let data = (0..iters)
            .map(|_| {
                let u = draw_regressors(&stats, &mut rng);
                let v = if noise { model.sample_noise(&mut rng) } else { DVector::zeros(n) };
                let x = observe(&theta0, &u, &v).unwrap();
                Snapshot { u, x }
            })
            .collect();
        let thetas = DMatrix::from_fn(m, n, |_, _| rng.random_range(-0.5..0.5));
        Rig {
            q: build_exchange(&topo, CombinationRule::Identity),
            w: build_combination(&topo, CombinationRule::Uniform),
            b: model.precision().clone(),
            topo,
            data,
            init: AlgorithmState::new(thetas, DVector::from_element(n, 0.0005)).unwrap(),
        }
    }

    #[test]
    fn zero_gamma_reduces_to_atc() {
        let r = rig(2, None, true, 50);
        for spec in all_kinds(0.0) {
            let (mut a, mut acs, mut asc) = (r.init.clone(), r.init.clone(), r.init.clone());
            for d in &r.data {
                atc_step(&mut a, &r.q, &r.w, d, &r.topo, &r.b).unwrap();
                acs_step(&mut acs, &r.q, &r.w, &spec, d, &r.topo, &r.b).unwrap();
                asc_step(&mut asc, &r.q, &r.w, &spec, d, &r.topo, &r.b).unwrap();
                assert_eq!(a.thetas, acs.thetas, "{:?}", spec.kind());
                assert_eq!(a.thetas, asc.thetas, "{:?}", spec.kind());
            }
        }
    }

    #[test]
    fn zero_parameter_is_reached_exactly() {
        let r = rig(3, Some(DVector::zeros(8)), false, 3000);
        let spec = ThresholdSpec::soft(1e-3).unwrap();
        let mut st = r.init.clone();
        let mut hit = None;
        for (k, d) in r.data.iter().enumerate() {
            acs_step(&mut st, &r.q, &r.w, &spec, d, &r.topo, &r.b).unwrap();
            if st.thetas.iter().all(|x| *x == 0.0) {
                hit = Some(k);
                break;
            }
        }
        assert!(hit.is_some(), "residual {}", st.thetas.amax());
    }

    #[test]
    fn asc_counts_shrink_with_sparse_estimates() {
        let r = rig(4, Some(DVector::zeros(8)), false, 1);
        let spec = ThresholdSpec::soft(10.0).unwrap();
        let mut st = r.init.clone();
        asc_step(&mut st, &r.q, &r.w, &spec, &r.data[0], &r.topo, &r.b).unwrap();
        let sparse = asc_communication_count(&r.topo, &r.q, &r.w, &st.scratch);
        let dense = crate::diffusion::combination_count(&r.topo, &r.w, 8)
            + data_exchange_count(&r.topo, &r.q, 8);
        assert_eq!(sparse, data_exchange_count(&r.topo, &r.q, 8));
        assert!(sparse < dense);
    }

    proptest! {
        #[test]
        fn operator_invariants(x in -5.0f64..5.0, gamma in 0.0f64..3e-4, kind in 0usize..4) {
            let spec = all_kinds(gamma)[kind];
            let t = spec.apply_scalar(x);
            prop_assert_eq!(spec.apply_scalar(0.0), 0.0);
            prop_assert_eq!(spec.apply_scalar(-x), -t);
            prop_assert!(t == 0.0 || t.signum() == x.signum());
            if spec.kind() != ThresholdKind::ReweightedL1 {
                prop_assert!(t.abs() <= x.abs());
            }
            prop_assert!((t - x).abs() <= spec.max_perturbation() * (1.0 + 1e-12) + 1e-15 * x.abs());
        }

        #[test]
        fn larger_gammas(x in -5.0f64..5.0, gamma in 0.0f64..2.0, eps in 1e-3f64..0.1) {
            for spec in [
                ThresholdSpec::soft(gamma).unwrap(),
                ThresholdSpec::garotte(gamma).unwrap(),
                ThresholdSpec::reweighted_l1(gamma, eps).unwrap(),
            ] {
                let t = spec.apply_scalar(x);
                prop_assert!((t - x).abs() <= spec.max_perturbation() * (1.0 + 1e-12) + 1e-15 * x.abs());
                prop_assert_eq!(spec.apply_scalar(-x), -t);
            }
        }

        #[test]
        fn vanishing_gamma_is_identity(x in -5.0f64..5.0) {
            let x = if x.abs() < 1e-3 { 1e-3 } else { x };
            for spec in all_kinds(1e-12) {
                prop_assert!((spec.apply_scalar(x) - x).abs() < 1e-9);
            }
        }

        #[test]
        fn vector_bound(xs in proptest::collection::vec(-1.0f64..1.0, 1..20), gamma in 0.0f64..3e-4, kind in 0usize..4) {
            let spec = all_kinds(gamma)[kind];
            let x = DVector::from_vec(xs);
            let t = apply_threshold(&spec, &x);
            prop_assert!((t - &x).norm() <= threshold_bound(&spec, x.len()) * (1.0 + 1e-12) + 1e-15 * x.norm());
        }
    }
}
