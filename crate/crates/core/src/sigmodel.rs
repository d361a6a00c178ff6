//! Streaming data of the linear observation model `x_i = u_iᵀθ₀ + v_i`.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// White Gaussian regressors with `R_{u,i} = σ²_{u,i} I_M`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RegressorDoc", into = "RegressorDoc")]
pub struct RegressorStats {
    m_dim: usize,
    per_node_power: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct RegressorDoc {
    m_dim: usize,
    per_node_power: Vec<f64>,
}

impl TryFrom<RegressorDoc> for RegressorStats {
    type Error = Error;
    fn try_from(doc: RegressorDoc) -> Result<Self> {
        Self::new(doc.m_dim, doc.per_node_power)
    }
}

impl From<RegressorStats> for RegressorDoc {
    fn from(s: RegressorStats) -> Self {
        Self { m_dim: s.m_dim, per_node_power: s.per_node_power }
    }
}

impl RegressorStats {
    pub fn new(m_dim: usize, per_node_power: Vec<f64>) -> Result<Self> {
        if m_dim == 0 {
            return Err(Error::InvalidParameter { name: "m_dim", reason: "must be at least 1".into() });
        }
        if let Some(p) = per_node_power.iter().find(|p| !(**p > 0.0 && p.is_finite())) {
            return Err(Error::InvalidParameter {
                name: "regressor power",
                reason: format!("must be positive, got {p}"),
            });
        }
        Ok(Self { m_dim, per_node_power })
    }

    /// Same power at every node.
    pub fn uniform(m_dim: usize, n_nodes: usize, power: f64) -> Result<Self> {
        Self::new(m_dim, vec![power; n_nodes])
    }

    /// Powers drawn uniformly from `[lo, hi]`.
    pub fn random<R: Rng + ?Sized>(m_dim: usize, n_nodes: usize, lo: f64, hi: f64, rng: &mut R) -> Result<Self> {
        if !(lo > 0.0 && hi >= lo) {
            return Err(Error::InvalidParameter {
                name: "power_range",
                reason: format!("need 0 < lo <= hi, got [{lo}, {hi}]"),
            });
        }
        let powers = (0..n_nodes).map(|_| lo + (hi - lo) * rng.random::<f64>()).collect();
        Self::new(m_dim, powers)
    }

    pub fn m_dim(&self) -> usize {
        self.m_dim
    }

    pub fn n_nodes(&self) -> usize {
        self.per_node_power.len()
    }

    pub fn powers(&self) -> &[f64] {
        &self.per_node_power
    }

    pub fn power(&self, i: usize) -> f64 {
        self.per_node_power[i]
    }
}

/// Draws `U[k]`, an `N×M` matrix whose row `i` is `u_iᵀ[k]`.
pub fn draw_regressors<R: Rng + ?Sized>(stats: &RegressorStats, rng: &mut R) -> DMatrix<f64> {
    let mut u = DMatrix::zeros(stats.n_nodes(), stats.m_dim());
    draw_regressors_into(stats, rng, &mut u);
    u
}

/// Fills `u` row by row, so the stream layout does not depend on storage order.
pub fn draw_regressors_into<R: Rng + ?Sized>(stats: &RegressorStats, rng: &mut R, u: &mut DMatrix<f64>) {
    for i in 0..stats.n_nodes() {
        let sd = stats.power(i).sqrt();
        for m in 0..stats.m_dim() {
            u[(i, m)] = sd * rng.sample::<f64, _>(StandardNormal);
        }
    }
}

/// `x = Uθ + v`.
pub fn observe(theta: &DVector<f64>, u: &DMatrix<f64>, v: &DVector<f64>) -> Result<DVector<f64>> {
    if u.ncols() != theta.len() || u.nrows() != v.len() {
        return Err(Error::DimensionMismatch(format!(
            "U is {}x{}, theta has {} entries, v has {}",
            u.nrows(),
            u.ncols(),
            theta.len(),
            v.len()
        )));
    }
    Ok(u * theta + v)
}

/// Component `component` of `θ₀[k]` is forced to zero for `start <= k < end`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ZeroInterval {
    pub start: usize,
    pub end: usize,
    pub component: usize,
}

impl ZeroInterval {
    pub fn contains(&self, k: usize) -> bool {
        (self.start..self.end).contains(&k)
    }
}

/// True parameter `θ₀[k]`.
#[derive(Debug, Clone, PartialEq)]
pub enum ParameterProcess {
    Static { theta0: DVector<f64> },
    /// Static vector with a known number of nonzeros.
    StaticSparse { theta0: DVector<f64> },
    /// `θ₀[k] = a θ₀[k-1] + s[k]`, `s[k] ~ N(drive_mean·1, drive_var·I)`.
    ArTracking {
        initial: DVector<f64>,
        ar_coeff: f64,
        drive_mean: f64,
        drive_var: f64,
        zero_intervals: Vec<ZeroInterval>,
    },
}

impl ParameterProcess {
    pub fn ar_tracking(
        initial: DVector<f64>,
        ar_coeff: f64,
        drive_mean: f64,
        drive_var: f64,
        zero_intervals: Vec<ZeroInterval>,
    ) -> Result<Self> {
        if !(ar_coeff.abs() < 1.0) {
            return Err(Error::InvalidParameter {
                name: "ar_coeff",
                reason: format!("need |a| < 1, got {ar_coeff}"),
            });
        }
        if !(drive_var >= 0.0) {
            return Err(Error::InvalidParameter {
                name: "drive_var",
                reason: format!("must be non-negative, got {drive_var}"),
            });
        }
        if let Some(z) = zero_intervals.iter().find(|z| z.component >= initial.len() || z.end < z.start) {
            return Err(Error::InvalidParameter {
                name: "zero_intervals",
                reason: format!("bad interval {z:?} for dimension {}", initial.len()),
            });
        }
        Ok(Self::ArTracking { initial, ar_coeff, drive_mean, drive_var, zero_intervals })
    }

    pub fn m_dim(&self) -> usize {
        self.initial().len()
    }

    /// `θ₀` before the first iteration.
    pub fn initial(&self) -> &DVector<f64> {
        match self {
            Self::Static { theta0 } | Self::StaticSparse { theta0 } => theta0,
            Self::ArTracking { initial, .. } => initial,
        }
    }

    pub fn support_size(&self) -> usize {
        self.initial().iter().filter(|x| **x != 0.0).count()
    }

    pub fn is_static(&self) -> bool {
        !matches!(self, Self::ArTracking { .. })
    }

    /// Advances `state` (holding `θ₀[k-1]`) to `θ₀[k]`.
    ///
    /// Masked components are zero in the output and the recursion continues
    /// from the masked value, so a component restarts from zero when its
    /// interval ends.
    pub fn step<R: Rng + ?Sized>(&self, k: usize, state: &mut DVector<f64>, rng: &mut R) {
        let Self::ArTracking { ar_coeff, drive_mean, drive_var, zero_intervals, .. } = self else {
            return;
        };
        let sd = drive_var.sqrt();
        for x in state.iter_mut() {
            let s = drive_mean + sd * rng.sample::<f64, _>(StandardNormal);
            *x = ar_coeff * *x + s;
        }
        for z in zero_intervals.iter().filter(|z| z.contains(k)) {
            state[z.component] = 0.0;
        }
    }

    /// Whether component `m` is masked at iteration `k`.
    pub fn is_zeroed(&self, k: usize, m: usize) -> bool {
        match self {
            Self::ArTracking { zero_intervals, .. } => {
                zero_intervals.iter().any(|z| z.component == m && z.contains(k))
            }
            _ => false,
        }
    }
}

/// Functional form of [`ParameterProcess::step`].
pub fn step_parameter<R: Rng + ?Sized>(
    process: &ParameterProcess,
    k: usize,
    prev: &DVector<f64>,
    rng: &mut R,
) -> DVector<f64> {
    let mut next = prev.clone();
    process.step(k, &mut next, rng);
    next
}

/// `support_size` entries equal to `value` at distinct random positions.
pub fn make_sparse_parameter<R: Rng + ?Sized>(
    m_dim: usize,
    support_size: usize,
    value: f64,
    rng: &mut R,
) -> Result<DVector<f64>> {
    if support_size > m_dim {
        return Err(Error::InvalidSupport { support: support_size, dim: m_dim });
    }
    let mut theta = DVector::zeros(m_dim);
    for idx in rand::seq::index::sample(rng, m_dim, support_size) {
        theta[idx] = value;
    }
    Ok(theta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn regressor_rows_have_requested_power() {
        let powers: Vec<f64> = (0..20).map(|i| 0.5 + 0.05 * i as f64).collect();
        let stats = RegressorStats::new(10, powers.clone()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let draws = 10_000;
        let mut s1 = vec![0.0; 20];
        let mut s2 = vec![0.0; 20];
        let mut cross = 0.0;
        let mut u = DMatrix::zeros(20, 10);
        for _ in 0..draws {
            draw_regressors_into(&stats, &mut rng, &mut u);
            for i in 0..20 {
                for m in 0..10 {
                    let x2 = u[(i, m)] * u[(i, m)];
                    s1[i] += x2;
                    s2[i] += x2 * x2;
                }
            }
            cross += u[(0, 0)] * u[(1, 0)];
        }
        let n = (draws * 10) as f64;
        for i in 0..20 {
            let mean = s1[i] / n;
            let se = ((s2[i] / n - mean * mean) / n).sqrt();
            assert!((mean - powers[i]).abs() < 3.0 * se, "node {i}: {mean} vs {}", powers[i]);
        }
        let rho = cross / draws as f64 / (powers[0] * powers[1]).sqrt();
        assert!(rho.abs() < 0.03);
    }

    #[test]
    fn zero_power_rejected() {
        assert!(RegressorStats::new(3, vec![1.0, 0.0]).is_err());
        assert!(RegressorStats::new(0, vec![1.0]).is_err());
    }

    #[test]
    fn serde_validates_powers() {
        let ok: RegressorStats = serde_json::from_str(r#"{"m_dim":2,"per_node_power":[1.0,2.0]}"#).unwrap();
        assert_eq!(ok.powers(), &[1.0, 2.0]);
        assert!(serde_json::from_str::<RegressorStats>(r#"{"m_dim":2,"per_node_power":[-1.0]}"#).is_err());
    }

    #[test]
    fn temporal_whiteness() {
        let stats = RegressorStats::uniform(4, 1, 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let n = 50_000;
        let mut prev = draw_regressors(&stats, &mut rng);
        let (mut s, mut s2) = (0.0, 0.0);
        for _ in 0..n {
            let cur = draw_regressors(&stats, &mut rng);
            let c = prev.row(0).dot(&cur.row(0));
            s += c;
            s2 += c * c;
            prev = cur;
        }
        let mean = s / n as f64;
        let se = ((s2 / n as f64 - mean * mean) / n as f64).sqrt();
        assert!(mean.abs() < 3.0 * se);
    }

    #[test]
    fn observe_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let stats = RegressorStats::uniform(3, 4, 1.0).unwrap();
        let u = draw_regressors(&stats, &mut rng);
        let theta = DVector::from_fn(3, |_, _| rng.random::<f64>());
        let v = DVector::from_fn(4, |_, _| rng.random::<f64>());
        let x = observe(&theta, &u, &v).unwrap();
        assert!((x - &u * &theta - &v).amax() < 1e-15);

        assert_eq!(observe(&DVector::zeros(3), &u, &v).unwrap(), v);
        let eye = DMatrix::identity(3, 3);
        assert_eq!(observe(&theta, &eye, &DVector::zeros(3)).unwrap(), theta);
        assert!(matches!(observe(&theta, &u, &DVector::zeros(2)), Err(Error::DimensionMismatch(_))));
    }

    #[test]
    fn static_process_never_moves() {
        let p = ParameterProcess::Static { theta0: DVector::from_element(3, 0.7) };
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut state = p.initial().clone();
        for k in 0..10 {
            state = step_parameter(&p, k, &state, &mut rng);
        }
        assert_eq!(&state, p.initial());
    }

    #[test]
    fn ar_without_drive_noise_is_deterministic() {
        let p = ParameterProcess::ar_tracking(DVector::from_element(2, 5.0), 0.0, 0.01, 0.0, vec![]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut state = p.initial().clone();
        for k in 1..5 {
            p.step(k, &mut state, &mut rng);
            assert!(state.iter().all(|&x| x == 0.01));
        }
    }

    #[test]
    fn ar_drive_statistics() {
        // One step from zero: θ[1] = s[1] ~ N(0.01, 0.04).
        let p = ParameterProcess::ar_tracking(DVector::zeros(1), 0.98, 0.01, 4e-2, vec![]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let n = 100_000;
        let (mut s, mut s2) = (0.0, 0.0);
        for _ in 0..n {
            let mut st = DVector::zeros(1);
            p.step(1, &mut st, &mut rng);
            s += st[0];
            s2 += st[0] * st[0];
        }
        let mean = s / n as f64;
        let var = s2 / n as f64 - mean * mean;
        assert!((mean - 0.01).abs() < 3.0 * (0.04 / n as f64).sqrt());
        assert!((var - 0.04).abs() < 0.002);

        // Recursion with a = 0.98 and no drive noise.
        let p = ParameterProcess::ar_tracking(DVector::from_element(1, 1.0), 0.98, 0.01, 0.0, vec![]).unwrap();
        let mut st = p.initial().clone();
        p.step(1, &mut st, &mut rng);
        assert!((st[0] - 0.99).abs() < 1e-15);
    }

    #[test]
    fn zero_intervals_mask_and_restart() {
        let z = ZeroInterval { start: 3, end: 6, component: 1 };
        let p = ParameterProcess::ar_tracking(DVector::from_element(2, 1.0), 0.5, 1.0, 0.0, vec![z]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut st = p.initial().clone();
        let mut trail = vec![];
        for k in 1..8 {
            p.step(k, &mut st, &mut rng);
            trail.push(st[1]);
        }
        assert_eq!(&trail[2..5], &[0.0, 0.0, 0.0]);
        assert_eq!(trail[5], 1.0);
        assert!(p.is_zeroed(4, 1) && !p.is_zeroed(6, 1) && !p.is_zeroed(4, 0));
        assert!(ParameterProcess::ar_tracking(DVector::zeros(2), 1.0, 0.0, 0.0, vec![]).is_err());
    }

    #[test]
    fn sparse_parameter_support() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let t = make_sparse_parameter(50, 6, 1.0, &mut rng).unwrap();
        assert_eq!(t.iter().filter(|x| **x == 1.0).count(), 6);
        assert_eq!(t.iter().filter(|x| **x == 0.0).count(), 44);
        assert_eq!(make_sparse_parameter(4, 4, 1.0, &mut rng).unwrap(), DVector::from_element(4, 1.0));
        assert_eq!(make_sparse_parameter(4, 0, 1.0, &mut rng).unwrap(), DVector::zeros(4));
        assert_eq!(
            make_sparse_parameter(4, 5, 1.0, &mut rng),
            Err(Error::InvalidSupport { support: 5, dim: 4 })
        );
    }

    #[test]
    fn same_seed_same_stream() {
        let stats = RegressorStats::uniform(5, 3, 1.2).unwrap();
        let a = draw_regressors(&stats, &mut ChaCha8Rng::seed_from_u64(9));
        let b = draw_regressors(&stats, &mut ChaCha8Rng::seed_from_u64(9));
        assert_eq!(a, b);
    }
}
