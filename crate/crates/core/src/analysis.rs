//! Closed-form mean and mean-square theory of the general diffusion recursion.
//!
//! With `R_{u,i} = σ²_{u,i} I_M`, every `NM×NM` quantity here (`D`, `Ĝ`, `G`,
//! `H`, the steady-state error covariance) is an `N×N` "core" matrix
//! Kronecker-multiplied with `I_M`. The `*_core` functions work on the small
//! matrices; the full-size versions are provided for inspection and for the
//! generic routines that accept arbitrary block matrices.
//!
//! Variance propagation uses the weighting recursion `Σ' = Hᵀ Σ H`, i.e.
//! `vec(Σ') = (Hᵀ ⊗ Hᵀ) vec(Σ)`. Steady-state MSDs are computed from the dual
//! Stein equation `P = Y + H P Hᵀ` with `Y = P̂₂ᵀ M G M P̂₂`, whose solution is
//! the steady-state error covariance; the primal form `Σ = T + Hᵀ Σ H` with
//! `MSD = Tr(Y Σ)` is available as a cross-check.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::Serialize;

use crate::diffusion::CombinationMatrices;
use crate::gmrf::GmrfModel;
use crate::graph::NetworkTopology;
use crate::linalg::{kron_identity, max_abs_diff, spectral_radius};
use crate::sigmodel::{draw_regressors, RegressorStats};
use crate::{Error, Result};

/// Tolerance on `BC - I` before the noise moments are trusted.
pub const CONSISTENCY_TOL: f64 = 1e-6;
/// Largest `NM` for which `N²M² × N²M²` matrices are materialized.
pub const DENSE_CAP: usize = 60;
pub const STEIN_TOL: f64 = 1e-12;
pub const STEIN_MAX_ITERS: usize = 1_000_000;
/// Tolerance on the spectral radius when matching convergence rates.
pub const RATE_TOL: f64 = 1e-4;

fn expand_steps(step_sizes: &DVector<f64>, m: usize) -> DMatrix<f64> {
    DMatrix::from_diagonal(&DVector::from_fn(step_sizes.len() * m, |r, _| step_sizes[r / m]))
}

/// `d_i = Σ_{j∈N_i} s_{j,i} b_{j,j} σ²_{u,j}`, the scalar of block `i` of `D`.
pub fn update_scalars(
    topology: &NetworkTopology,
    b: &DMatrix<f64>,
    s: &DMatrix<f64>,
    stats: &RegressorStats,
) -> DVector<f64> {
    DVector::from_fn(topology.n_nodes(), |i, _| {
        topology
            .spatial_neighborhood(i)
            .iter()
            .map(|&j| s[(j, i)] * b[(j, j)] * stats.power(j))
            .sum()
    })
}

/// `D = E{D[k]}`, block diagonal with blocks `d_i I_M`.
pub fn expected_update_matrix(
    topology: &NetworkTopology,
    b: &DMatrix<f64>,
    s: &DMatrix<f64>,
    stats: &RegressorStats,
) -> DMatrix<f64> {
    let d = update_scalars(topology, b, s, stats);
    kron_identity(&DMatrix::from_diagonal(&d), stats.m_dim())
}

/// The random matrix `D[k]` for one regressor draw `U` (`N×M`).
///
/// Block `i` is `Σ_j s_{j,i} [b_jj u_j u_jᵀ + Σ_{l∈A_j} b_jl (u_l u_jᵀ + u_j u_lᵀ)]`.
pub fn sample_update_matrix(
    topology: &NetworkTopology,
    b: &DMatrix<f64>,
    s: &DMatrix<f64>,
    u: &DMatrix<f64>,
) -> DMatrix<f64> {
    let n = topology.n_nodes();
    let m = u.ncols();
    // Per-potential curvature matrices, shared by every node that weights them.
    let curv: Vec<DMatrix<f64>> = (0..n)
        .map(|j| {
            let uj = u.row(j).transpose();
            let mut c = &uj * uj.transpose() * b[(j, j)];
            for &l in topology.oriented_markov(j) {
                let ul = u.row(l).transpose();
                let cross = &ul * uj.transpose();
                c += (&cross + cross.transpose()) * b[(j, l)];
            }
            c
        })
        .collect();
    let mut d = DMatrix::zeros(n * m, n * m);
    for i in 0..n {
        let mut blk = d.view_mut((i * m, i * m), (m, m));
        for &j in topology.spatial_neighborhood(i) {
            let w = s[(j, i)];
            if w != 0.0 {
                blk += &curv[j] * w;
            }
        }
    }
    d
}

/// `Ĝ` core from the closed-form block expressions.
///
/// Diagonal: `σ²_i [c_ii b_ii² + 2 b_ii Σ_{j∈A_i} b_ij c_ij + Σ_{j,l∈A_i} b_ij b_il c_jl]
/// + c_ii Σ_{j∈A_i} b_ij² σ²_j`.
/// Off-diagonal `(i, l)`: `c_il Σ_{n∈A_i∩A_l} b_in b_ln σ²_n` plus the two
/// indicator terms for `i ∈ A_l` and `l ∈ A_i`.
///
/// Valid for any algorithm precision `b` and any true covariance `c`.
pub fn noise_moment_hat_core(
    topology: &NetworkTopology,
    b: &DMatrix<f64>,
    c: &DMatrix<f64>,
    stats: &RegressorStats,
) -> DMatrix<f64> {
    let n = topology.n_nodes();
    let a = |i: usize| topology.oriented_markov(i);
    let p = |i: usize| stats.power(i);
    let mut g = DMatrix::zeros(n, n);
    for i in 0..n {
        let mut quad = c[(i, i)] * b[(i, i)] * b[(i, i)];
        quad += 2.0 * b[(i, i)] * a(i).iter().map(|&j| b[(i, j)] * c[(i, j)]).sum::<f64>();
        for &j in a(i) {
            for &l in a(i) {
                quad += b[(i, j)] * b[(i, l)] * c[(j, l)];
            }
        }
        let spill: f64 = a(i).iter().map(|&j| b[(i, j)] * b[(i, j)] * p(j)).sum();
        g[(i, i)] = p(i) * quad + c[(i, i)] * spill;
    }
    for i in 0..n {
        for l in 0..n {
            if i == l {
                continue;
            }
            let mut v = 0.0;
            for &nn in a(i) {
                if a(l).binary_search(&nn).is_ok() {
                    v += c[(i, l)] * b[(i, nn)] * b[(l, nn)] * p(nn);
                }
            }
            if a(l).binary_search(&i).is_ok() {
                let inner = b[(i, i)] * c[(i, l)] + a(i).iter().map(|&j| b[(i, j)] * c[(j, l)]).sum::<f64>();
                v += p(i) * b[(i, l)] * inner;
            }
            if a(i).binary_search(&l).is_ok() {
                let inner = b[(l, l)] * c[(i, l)] + a(l).iter().map(|&mm| b[(l, mm)] * c[(i, mm)]).sum::<f64>();
                v += p(l) * b[(i, l)] * inner;
            }
            g[(i, l)] = v;
        }
    }
    g
}

/// `G` core `Sᵀ Ĝ S` without checking that `c` inverts `b`.
///
/// Used for correlation-agnostic algorithms, whose precision deliberately
/// differs from the inverse of the true covariance.
pub fn noise_moment_core_unchecked(
    topology: &NetworkTopology,
    b: &DMatrix<f64>,
    c: &DMatrix<f64>,
    s: &DMatrix<f64>,
    stats: &RegressorStats,
) -> DMatrix<f64> {
    s.transpose() * noise_moment_hat_core(topology, b, c, stats) * s
}

pub fn check_consistency(b: &DMatrix<f64>, c: &DMatrix<f64>) -> Result<()> {
    let n = b.nrows();
    let err = max_abs_diff(&(b * c), &DMatrix::identity(n, n));
    if err > CONSISTENCY_TOL {
        return Err(Error::InconsistentModel(err));
    }
    Ok(())
}

/// `G = E[g gᵀ]` at full `NM×NM` size, for a GMRF-aware algorithm.
pub fn noise_moment_matrix(
    topology: &NetworkTopology,
    b: &DMatrix<f64>,
    c: &DMatrix<f64>,
    s: &DMatrix<f64>,
    stats: &RegressorStats,
) -> Result<DMatrix<f64>> {
    check_consistency(b, c)?;
    Ok(kron_identity(&noise_moment_core_unchecked(topology, b, c, s, stats), stats.m_dim()))
}

/// `H` core `P₂ᵀ (I - diag(μ_i d_i)) P₁ᵀ`.
pub fn transition_core(p1: &DMatrix<f64>, p2: &DMatrix<f64>, d: &DVector<f64>, step_sizes: &DVector<f64>) -> DMatrix<f64> {
    let n = d.len();
    let imd = DMatrix::from_diagonal(&DVector::from_fn(n, |i, _| 1.0 - step_sizes[i] * d[i]));
    p2.transpose() * imd * p1.transpose()
}

/// `H = P̂₂ᵀ (I - M D) P̂₁ᵀ` for an arbitrary `NM×NM` matrix `D`.
pub fn transition_matrix(
    p1: &DMatrix<f64>,
    p2: &DMatrix<f64>,
    d: &DMatrix<f64>,
    step_sizes: &DVector<f64>,
) -> DMatrix<f64> {
    let m = d.nrows() / p1.nrows();
    let mu = expand_steps(step_sizes, m);
    let nm = d.nrows();
    kron_identity(&p2.transpose(), m) * (DMatrix::identity(nm, nm) - mu * d) * kron_identity(&p1.transpose(), m)
}

/// Small-step variance operator `σ ↦ vec(Hᵀ vec⁻¹(σ) H)`.
#[derive(Debug, Clone)]
pub struct ApproxVariance {
    h: DMatrix<f64>,
}

impl ApproxVariance {
    pub fn new(h: DMatrix<f64>) -> Self {
        Self { h }
    }

    pub fn dim(&self) -> usize {
        self.h.nrows() * self.h.nrows()
    }

    pub fn apply(&self, sigma: &DVector<f64>) -> DVector<f64> {
        let n = self.h.nrows();
        let s = DMatrix::from_column_slice(n, n, sigma.as_slice());
        let out = self.h.transpose() * s * &self.h;
        DVector::from_column_slice(out.as_slice())
    }

    /// `Hᵀ ⊗ Hᵀ`, only for `NM ≤ DENSE_CAP`.
    pub fn dense(&self) -> Result<DMatrix<f64>> {
        let nm = self.h.nrows();
        if nm > DENSE_CAP {
            return Err(Error::TooLarge { dim: nm, cap: DENSE_CAP });
        }
        let ht = self.h.transpose();
        Ok(ht.kronecker(&ht))
    }

    /// `ρ(F) = ρ(H)²`.
    pub fn spectral_radius(&self) -> f64 {
        spectral_radius(&self.h).powi(2)
    }
}

/// Monte Carlo estimate of the exact variance matrix with its entrywise standard error.
#[derive(Debug, Clone)]
pub struct ExactVariance {
    pub f: DMatrix<f64>,
    pub std_error: DMatrix<f64>,
    pub n_samples: usize,
}

/// `E[A_k ⊗ A_k]` with `A_k = P̂₁ (I - D[k] M) P̂₂`, expectation over `sample_d`.
pub fn exact_variance_with<F>(
    p1: &DMatrix<f64>,
    p2: &DMatrix<f64>,
    step_sizes: &DVector<f64>,
    m: usize,
    n_samples: usize,
    mut sample_d: F,
) -> Result<ExactVariance>
where
    F: FnMut() -> DMatrix<f64>,
{
    let nm = p1.nrows() * m;
    if nm > DENSE_CAP {
        return Err(Error::TooLarge { dim: nm, cap: DENSE_CAP });
    }
    if n_samples == 0 {
        return Err(Error::InvalidParameter { name: "n_samples", reason: "must be positive".into() });
    }
    let mu = expand_steps(step_sizes, m);
    let pp1 = kron_identity(p1, m);
    let pp2 = kron_identity(p2, m);
    let eye = DMatrix::identity(nm, nm);
    let mut sum = DMatrix::zeros(nm * nm, nm * nm);
    let mut sum_sq = DMatrix::zeros(nm * nm, nm * nm);
    for _ in 0..n_samples {
        let dk = sample_d();
        let a = &pp1 * (&eye - dk * &mu) * &pp2;
        let k = a.kronecker(&a);
        sum_sq += k.map(|x| x * x);
        sum += k;
    }
    let nf = n_samples as f64;
    let f = sum / nf;
    let std_error = DMatrix::from_fn(nm * nm, nm * nm, |r, c| {
        let mean = f[(r, c)];
        ((sum_sq[(r, c)] / nf - mean * mean).max(0.0) / nf).sqrt()
    });
    Ok(ExactVariance { f, std_error, n_samples })
}

/// Exact variance matrix with the fourth-moment term estimated from regressor draws.
pub fn variance_matrix_exact_mc<R: Rng + ?Sized>(
    topology: &NetworkTopology,
    b: &DMatrix<f64>,
    matrices: &CombinationMatrices,
    stats: &RegressorStats,
    step_sizes: &DVector<f64>,
    n_samples: usize,
    rng: &mut R,
) -> Result<ExactVariance> {
    exact_variance_with(matrices.p1(), matrices.p2(), step_sizes, stats.m_dim(), n_samples, || {
        let u = draw_regressors(stats, rng);
        sample_update_matrix(topology, b, matrices.s(), &u)
    })
}

/// Mean-convergence bounds `2 / λ_max(Σ_j s_{j,i} b_jj R_{u,j})`.
pub fn step_size_bounds(
    topology: &NetworkTopology,
    b: &DMatrix<f64>,
    s: &DMatrix<f64>,
    stats: &RegressorStats,
) -> DVector<f64> {
    update_scalars(topology, b, s, stats).map(|d| if d > 0.0 { 2.0 / d } else { f64::INFINITY })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MeanStability {
    /// `‖I - MD‖_{b,∞}`: largest spectral radius over the diagonal blocks.
    pub block_norm_imd: f64,
    pub spectral_radius_h: f64,
    pub mean_stable: bool,
}

/// Verdict `‖I - MD‖_{b,∞} < 1` for a block-diagonal `I - MD`.
pub fn mean_stability_check(i_minus_md: &DMatrix<f64>, h: &DMatrix<f64>, block_dim: usize) -> MeanStability {
    let nb = i_minus_md.nrows() / block_dim;
    let block_norm_imd = (0..nb)
        .map(|i| {
            let blk = i_minus_md.view((i * block_dim, i * block_dim), (block_dim, block_dim)).into_owned();
            let sym = (&blk + blk.transpose()) * 0.5;
            sym.symmetric_eigenvalues().iter().fold(0.0f64, |a, v| a.max(v.abs()))
        })
        .fold(0.0, f64::max);
    MeanStability { block_norm_imd, spectral_radius_h: spectral_radius(h), mean_stable: block_norm_imd < 1.0 }
}

/// Induced block-maximum norm, `max_i Σ_j ‖X_ij‖₂` (exact for scalar blocks).
pub fn block_max_norm(x: &DMatrix<f64>, block_dim: usize) -> f64 {
    let nb = x.nrows() / block_dim;
    (0..nb)
        .map(|i| {
            (0..nb)
                .map(|j| {
                    let blk = x.view((i * block_dim, j * block_dim), (block_dim, block_dim)).into_owned();
                    blk.singular_values().max()
                })
                .sum::<f64>()
        })
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SteinMethod {
    /// Smith doubling: `X ← X + A X Aᵀ`, `A ← A²`.
    Doubling,
    /// Plain fixed point `X ← Q + A X Aᵀ`.
    FixedPoint,
}

#[derive(Debug, Clone)]
pub struct SteinSolution {
    pub x: DMatrix<f64>,
    pub iterations: usize,
    /// `‖X - Q - A X Aᵀ‖_F / ‖Q‖_F`.
    pub residual: f64,
}

fn stein_residual(a: &DMatrix<f64>, q: &DMatrix<f64>, x: &DMatrix<f64>) -> DMatrix<f64> {
    q + a * x * a.transpose() - x
}

/// Solves the Stein equation `X = Q + A X Aᵀ` for `ρ(A) < 1`.
pub fn solve_stein(a: &DMatrix<f64>, q: &DMatrix<f64>, method: SteinMethod) -> Result<SteinSolution> {
    let rho = spectral_radius(a);
    if rho >= 1.0 {
        return Err(Error::Unstable(rho));
    }
    let qn = q.norm();
    if qn == 0.0 {
        return Ok(SteinSolution { x: q.clone(), iterations: 0, residual: 0.0 });
    }
    let (mut x, mut iterations) = match method {
        SteinMethod::Doubling => doubling(a, q)?,
        SteinMethod::FixedPoint => {
            let mut x = q.clone();
            let mut it = 0;
            loop {
                let next = q + a * &x * a.transpose();
                let delta = (&next - &x).norm();
                x = next;
                it += 1;
                if delta <= STEIN_TOL * x.norm() {
                    break;
                }
                if it >= STEIN_MAX_ITERS {
                    return Err(Error::NoConvergence(it));
                }
            }
            (x, it)
        }
    };
    // Iterative refinement: solve for the correction with the residual as source.
    let mut res = stein_residual(a, q, &x);
    for _ in 0..3 {
        if res.norm() <= STEIN_TOL * qn {
            break;
        }
        let (corr, it) = doubling(a, &res)?;
        x += corr;
        iterations += it;
        res = stein_residual(a, q, &x);
    }
    Ok(SteinSolution { residual: res.norm() / qn, x, iterations })
}

fn doubling(a: &DMatrix<f64>, q: &DMatrix<f64>) -> Result<(DMatrix<f64>, usize)> {
    let mut x = q.clone();
    let mut ak = a.clone();
    for it in 1..=64 {
        let inc = &ak * &x * ak.transpose();
        x += &inc;
        if inc.norm() <= 0.25 * STEIN_TOL * x.norm() {
            return Ok((x, it));
        }
        ak = &ak * &ak;
    }
    Err(Error::NoConvergence(64))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MsdTarget {
    Node(usize),
    Network,
}

/// `Y = P̂₂ᵀ M G M P̂₂`, the noise injected per step into the error covariance.
pub fn noise_injection(g: &DMatrix<f64>, p2: &DMatrix<f64>, step_sizes: &DVector<f64>) -> DMatrix<f64> {
    let m = g.nrows() / p2.nrows();
    let mu = expand_steps(step_sizes, m);
    let pp2 = kron_identity(p2, m);
    pp2.transpose() * &mu * g * &mu * pp2
}

/// Steady-state error covariance `P = Y + H P Hᵀ`.
pub fn steady_state_covariance(h: &DMatrix<f64>, y: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    Ok(solve_stein(h, y, SteinMethod::Doubling)?.x)
}

/// Per-node steady-state MSDs (traces of the diagonal blocks of `P`).
pub fn msd_profile(h: &DMatrix<f64>, g: &DMatrix<f64>, p2: &DMatrix<f64>, step_sizes: &DVector<f64>) -> Result<Vec<f64>> {
    let m = h.nrows() / p2.nrows();
    let p = steady_state_covariance(h, &noise_injection(g, p2, step_sizes))?;
    Ok((0..p2.nrows())
        .map(|i| p.view((i * m, i * m), (m, m)).trace())
        .collect())
}

/// Steady-state MSD of one node or of the network average.
pub fn theoretical_msd(
    h: &DMatrix<f64>,
    g: &DMatrix<f64>,
    p2: &DMatrix<f64>,
    step_sizes: &DVector<f64>,
    target: MsdTarget,
) -> Result<f64> {
    let per_node = msd_profile(h, g, p2, step_sizes)?;
    Ok(match target {
        MsdTarget::Node(i) => per_node[i],
        MsdTarget::Network => per_node.iter().sum::<f64>() / per_node.len() as f64,
    })
}

/// Primal route: `Σ = T + Hᵀ Σ H`, `MSD = Tr(Y Σ)`.
pub fn msd_sigma_form(
    h: &DMatrix<f64>,
    g: &DMatrix<f64>,
    p2: &DMatrix<f64>,
    step_sizes: &DVector<f64>,
    weight: &DMatrix<f64>,
) -> Result<f64> {
    let y = noise_injection(g, p2, step_sizes);
    let sigma = solve_stein(&h.transpose(), weight, SteinMethod::Doubling)?.x;
    Ok((y * sigma).trace())
}

/// Weighting `T_i = diag(e_i) ⊗ I_M` (or `I/N` for the network).
pub fn msd_weight(n: usize, m: usize, target: MsdTarget) -> DMatrix<f64> {
    match target {
        MsdTarget::Node(i) => {
            let mut t = DMatrix::zeros(n * m, n * m);
            t.view_mut((i * m, i * m), (m, m)).fill_with_identity();
            t
        }
        MsdTarget::Network => DMatrix::identity(n * m, n * m) / n as f64,
    }
}

/// `rᵀ (I - F)⁻¹ t` by a dense solve.
pub fn msd_dense(f: &DMatrix<f64>, r: &DVector<f64>, t: &DVector<f64>) -> Result<f64> {
    let n = f.nrows();
    let sys = DMatrix::identity(n, n) - f;
    let sol = sys.lu().solve(t).ok_or(Error::Unstable(1.0))?;
    Ok(r.dot(&sol))
}

/// Which variance matrix the report used.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FMode {
    Approx,
    ExactMc,
}

/// Everything needed to evaluate the theory of one algorithm.
#[derive(Debug, Clone, Copy)]
pub struct TheoryInputs<'a> {
    pub topology: &'a NetworkTopology,
    /// Precision the algorithm uses in its gradients.
    pub b: &'a DMatrix<f64>,
    /// True noise covariance.
    pub c: &'a DMatrix<f64>,
    pub matrices: &'a CombinationMatrices,
    pub stats: &'a RegressorStats,
    pub step_sizes: &'a DVector<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct TheoryReport {
    pub m_dim: usize,
    /// Block scalars `d_i` of `D`.
    pub d_core: Vec<f64>,
    #[serde(skip)]
    pub g_core: DMatrix<f64>,
    #[serde(skip)]
    pub h_core: DMatrix<f64>,
    pub f_mode: FMode,
    pub step_bounds: Vec<f64>,
    pub spectral_radius_h: f64,
    pub block_max_norm_h: f64,
    pub block_norm_imd: f64,
    pub msd_per_node: Option<Vec<f64>>,
    pub msd_network: Option<f64>,
    pub mean_stable: bool,
    pub ms_stable: bool,
}

impl TheoryReport {
    pub fn d_matrix(&self) -> DMatrix<f64> {
        kron_identity(&DMatrix::from_diagonal(&DVector::from_column_slice(&self.d_core)), self.m_dim)
    }

    pub fn g_matrix(&self) -> DMatrix<f64> {
        kron_identity(&self.g_core, self.m_dim)
    }

    pub fn h_matrix(&self) -> DMatrix<f64> {
        kron_identity(&self.h_core, self.m_dim)
    }

    pub fn msd_network_db(&self) -> Option<f64> {
        self.msd_network.map(to_db)
    }
}

pub fn to_db(x: f64) -> f64 {
    10.0 * x.log10()
}

/// Mean and mean-square theory with the small-step variance matrix.
///
/// When `checked` is set, `b` must invert `c`; otherwise the noise moments
/// are evaluated for a mismatched (agnostic) precision.
pub fn theory_report(inputs: &TheoryInputs, checked: bool) -> Result<TheoryReport> {
    let TheoryInputs { topology, b, c, matrices, stats, step_sizes } = *inputs;
    if checked {
        check_consistency(b, c)?;
    }
    let m = stats.m_dim();
    let d = update_scalars(topology, b, matrices.s(), stats);
    let g_core = noise_moment_core_unchecked(topology, b, c, matrices.s(), stats);
    let h_core = transition_core(matrices.p1(), matrices.p2(), &d, step_sizes);
    let rho = spectral_radius(&h_core);
    let block_norm_imd = d
        .iter()
        .zip(step_sizes.iter())
        .map(|(d, mu)| (1.0 - mu * d).abs())
        .fold(0.0, f64::max);
    let block_max_norm_h = block_max_norm(&h_core, 1);
    let ms_stable = rho * rho < 1.0;
    let (msd_per_node, msd_network) = if ms_stable {
        let y = noise_injection(&g_core, matrices.p2(), step_sizes);
        let p = steady_state_covariance(&h_core, &y)?;
        let per: Vec<f64> = (0..topology.n_nodes()).map(|i| m as f64 * p[(i, i)]).collect();
        let net = per.iter().sum::<f64>() / per.len() as f64;
        (Some(per), Some(net))
    } else {
        (None, None)
    };
    Ok(TheoryReport {
        m_dim: m,
        d_core: d.iter().copied().collect(),
        step_bounds: d.iter().map(|d| if *d > 0.0 { 2.0 / d } else { f64::INFINITY }).collect(),
        g_core,
        h_core,
        f_mode: FMode::Approx,
        spectral_radius_h: rho,
        block_max_norm_h,
        block_norm_imd,
        msd_per_node,
        msd_network,
        mean_stable: block_norm_imd < 1.0,
        ms_stable,
    })
}

/// Spectral radius of the mean transition matrix for uniform step `mu`.
pub fn diffusion_rate(
    topology: &NetworkTopology,
    b: &DMatrix<f64>,
    matrices: &CombinationMatrices,
    stats: &RegressorStats,
    mu: f64,
) -> f64 {
    let d = update_scalars(topology, b, matrices.s(), stats);
    let steps = DVector::from_element(d.len(), mu);
    spectral_radius(&transition_core(matrices.p1(), matrices.p2(), &d, &steps))
}

/// `|1 - μ Σ_i b_ii σ²_{u,i}|`, the rate of centralized LMS.
pub fn centralized_rate(b: &DMatrix<f64>, stats: &RegressorStats, mu: f64) -> f64 {
    let total: f64 = (0..stats.n_nodes()).map(|i| b[(i, i)] * stats.power(i)).sum();
    (1.0 - mu * total).abs()
}

/// Slowest node of stand-alone LMS: `max_i |1 - μ b_ii σ²_{u,i}|`.
pub fn standalone_rate(b: &DMatrix<f64>, stats: &RegressorStats, mu: f64) -> f64 {
    (0..stats.n_nodes())
        .map(|i| (1.0 - mu * b[(i, i)] * stats.power(i)).abs())
        .fold(0.0, f64::max)
}

/// Bisection for the step size on `(0, hi]` whose rate equals `target`.
///
/// `rate` must be non-increasing on the bracket, which holds for `hi` below
/// `1 / max_i d_i` since the transition matrix is then entrywise non-negative.
pub fn match_step_size(target: f64, hi: f64, rate: impl Fn(f64) -> f64) -> Result<f64> {
    if !(target > 0.0 && target < 1.0) {
        return Err(Error::InvalidParameter { name: "target rate", reason: format!("must lie in (0, 1), got {target}") });
    }
    let (mut lo, mut hi) = (0.0, hi);
    if rate(hi) > target {
        return Err(Error::NoConvergence(0));
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if rate(mid) > target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-15 * hi {
            break;
        }
    }
    let mu = 0.5 * (lo + hi);
    if (rate(mu) - target).abs() > RATE_TOL {
        return Err(Error::NoConvergence(200));
    }
    Ok(mu)
}

/// Largest step keeping `I - μD` entrywise non-negative.
pub fn monotone_step_limit(d: &DVector<f64>) -> f64 {
    1.0 / d.max()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GainPoint {
    pub nu: f64,
    pub kappa: f64,
    pub mu_gmrf: f64,
    pub mu_agnostic: f64,
    pub msd_gmrf: f64,
    pub msd_agnostic: f64,
    /// `10 log10(MSD_agnostic / MSD_GMRF)`.
    pub gain_db: f64,
}

/// Theoretical ATC gain of the GMRF-aware precision over the agnostic one.
///
/// For each `(ν, κ)` the agnostic step size is matched to the convergence
/// rate of the GMRF algorithm run at `mu`.
#[allow(clippy::too_many_arguments)]
pub fn msd_gain_surface(
    topology: &NetworkTopology,
    sigma2: f64,
    stats: &RegressorStats,
    q: &DMatrix<f64>,
    w: &DMatrix<f64>,
    mu: f64,
    nu_grid: &[f64],
    kappa_grid: &[f64],
) -> Result<Vec<GainPoint>> {
    let atc = CombinationMatrices::atc(topology, q.clone(), w.clone())?;
    let n = topology.n_nodes();
    let mut out = Vec::with_capacity(nu_grid.len() * kappa_grid.len());
    for &kappa in kappa_grid {
        for &nu in nu_grid {
            let model = GmrfModel::new(topology, sigma2, nu, kappa)?;
            let b_agn = model.agnostic_precision();
            let steps = DVector::from_element(n, mu);
            let gm = theory_report(
                &TheoryInputs {
                    topology,
                    b: model.precision(),
                    c: model.covariance(),
                    matrices: &atc,
                    stats,
                    step_sizes: &steps,
                },
                true,
            )?;
            let target = gm.spectral_radius_h;
            let d_agn = update_scalars(topology, &b_agn, atc.s(), stats);
            let mu_agn = match_step_size(target, monotone_step_limit(&d_agn), |m| {
                diffusion_rate(topology, &b_agn, &atc, stats, m)
            })?;
            let steps_agn = DVector::from_element(n, mu_agn);
            let ag = theory_report(
                &TheoryInputs {
                    topology,
                    b: &b_agn,
                    c: model.covariance(),
                    matrices: &atc,
                    stats,
                    step_sizes: &steps_agn,
                },
                false,
            )?;
            let (Some(msd_gmrf), Some(msd_agnostic)) = (gm.msd_network, ag.msd_network) else {
                return Err(Error::Unstable(target));
            };
            out.push(GainPoint {
                nu,
                kappa,
                mu_gmrf: mu,
                mu_agnostic: mu_agn,
                msd_gmrf,
                msd_agnostic,
                gain_db: to_db(msd_agnostic) - to_db(msd_gmrf),
            });
        }
    }
    Ok(out)
}
