//! GMRF potential gradients and the diffusion recursions built on them.
//!
//! Estimates are stored as an `M×N` matrix whose column `i` is `θ_i`.
//! Every step is synchronous: all nodes read the iterates of step `k-1`.

use nalgebra::{DMatrix, DVector, DVectorView, DVectorViewMut};
use serde::{Deserialize, Serialize};

use crate::graph::NetworkTopology;
use crate::{Error, Result};

/// Tolerance on the stochasticity constraints of combination matrices.
pub const STOCHASTIC_TOL: f64 = 1e-12;
/// Any estimate entry beyond this magnitude counts as divergence.
pub const DIVERGENCE_LIMIT: f64 = 1e12;

/// One time instant of data: `U[k]` (`N×M`, row `i` is `u_iᵀ`) and `x[k]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub u: DMatrix<f64>,
    pub x: DVector<f64>,
}

impl Snapshot {
    pub fn n_nodes(&self) -> usize {
        self.u.nrows()
    }

    pub fn m_dim(&self) -> usize {
        self.u.ncols()
    }

    fn residual(&self, j: usize, theta: &DVectorView<f64>) -> f64 {
        self.x[j] - self.u.row(j).tr_dot(theta)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CombinationRule {
    Identity,
    Uniform,
    Metropolis,
}

/// Left-stochastic (`Wᵀ1 = 1`) weights supported on the spatial neighbourhoods.
///
/// `uniform` gives `w_{j,i} = 1/|N_i|`; `metropolis` gives
/// `w_{j,i} = 1/(1 + max(deg_i, deg_j))` with the diagonal absorbing the rest.
pub fn build_combination(topology: &NetworkTopology, rule: CombinationRule) -> DMatrix<f64> {
    let n = topology.n_nodes();
    let mut w = DMatrix::zeros(n, n);
    match rule {
        CombinationRule::Identity => w.fill_with_identity(),
        CombinationRule::Uniform => {
            for i in 0..n {
                let nb = topology.spatial_neighborhood(i);
                for &j in nb {
                    w[(j, i)] = 1.0 / nb.len() as f64;
                }
            }
        }
        CombinationRule::Metropolis => {
            let deg = |i: usize| topology.spatial_neighborhood(i).len() - 1;
            for i in 0..n {
                let mut rest = 1.0;
                for &j in topology.spatial_neighborhood(i) {
                    if j != i {
                        let a = 1.0 / (1 + deg(i).max(deg(j))) as f64;
                        w[(j, i)] = a;
                        rest -= a;
                    }
                }
                w[(i, i)] = rest;
            }
        }
    }
    w
}

/// Right-stochastic (`Q1 = 1`) counterpart of [`build_combination`].
pub fn build_exchange(topology: &NetworkTopology, rule: CombinationRule) -> DMatrix<f64> {
    build_combination(topology, rule).transpose()
}

/// The weights `(P₁, S, P₂)` of the general diffusion recursion.
#[derive(Debug, Clone, PartialEq)]
pub struct CombinationMatrices {
    p1: DMatrix<f64>,
    s: DMatrix<f64>,
    p2: DMatrix<f64>,
}

impl CombinationMatrices {
    pub fn new(topology: &NetworkTopology, p1: DMatrix<f64>, s: DMatrix<f64>, p2: DMatrix<f64>) -> Result<Self> {
        check_weights(topology, &p1, "p1", true)?;
        check_weights(topology, &s, "s", false)?;
        check_weights(topology, &p2, "p2", true)?;
        Ok(Self { p1, s, p2 })
    }

    /// `P₁ = I, S = Q, P₂ = W`.
    pub fn atc(topology: &NetworkTopology, q: DMatrix<f64>, w: DMatrix<f64>) -> Result<Self> {
        let n = topology.n_nodes();
        Self::new(topology, DMatrix::identity(n, n), q, w)
    }

    /// `P₁ = W, S = Q, P₂ = I`.
    pub fn cta(topology: &NetworkTopology, q: DMatrix<f64>, w: DMatrix<f64>) -> Result<Self> {
        let n = topology.n_nodes();
        Self::new(topology, w, q, DMatrix::identity(n, n))
    }

    pub fn p1(&self) -> &DMatrix<f64> {
        &self.p1
    }

    pub fn s(&self) -> &DMatrix<f64> {
        &self.s
    }

    pub fn p2(&self) -> &DMatrix<f64> {
        &self.p2
    }
}

/// Checks non-negativity, support on `N_i`, and column sums (`columns`) or row sums.
pub fn check_weights(topology: &NetworkTopology, a: &DMatrix<f64>, name: &str, columns: bool) -> Result<()> {
    let n = topology.n_nodes();
    if a.shape() != (n, n) {
        return Err(Error::InvalidCombination(format!("{name} must be {n}x{n}, got {:?}", a.shape())));
    }
    for i in 0..n {
        let nb = topology.spatial_neighborhood(i);
        for j in 0..n {
            let v = a[(j, i)];
            if !(v >= 0.0) {
                return Err(Error::InvalidCombination(format!("{name}[{j},{i}] = {v} is negative")));
            }
            if v != 0.0 && nb.binary_search(&j).is_err() {
                return Err(Error::InvalidCombination(format!("{name}[{j},{i}] links non-neighbours")));
            }
        }
    }
    for k in 0..n {
        let sum = if columns { a.column(k).sum() } else { a.row(k).sum() };
        if (sum - 1.0).abs() > STOCHASTIC_TOL {
            let what = if columns { "column" } else { "row" };
            return Err(Error::InvalidCombination(format!("{name} {what} {k} sums to {sum}")));
        }
    }
    Ok(())
}

/// Adds `weight · ∇V_j(θ)` to `out`.
///
/// With `e_l = x_l - u_lᵀθ` this is
/// `-(b_jj e_j + Σ_{l∈A_j} b_jl e_l) u_j - Σ_{l∈A_j} b_jl e_j u_l`,
/// where `A_j` holds the Markov neighbours of `j` with larger index.
fn accumulate_gradient(
    j: usize,
    data: &Snapshot,
    theta: &DVectorView<f64>,
    topology: &NetworkTopology,
    b: &DMatrix<f64>,
    weight: f64,
    out: &mut DVectorViewMut<f64>,
) {
    let e_j = data.residual(j, theta);
    let mut coef = b[(j, j)] * e_j;
    for &l in topology.oriented_markov(j) {
        let b_jl = b[(j, l)];
        coef += b_jl * data.residual(l, theta);
        add_row(out, -weight * b_jl * e_j, &data.u, l);
    }
    add_row(out, -weight * coef, &data.u, j);
}

/// `out += alpha · U[row, :]ᵀ`.
fn add_row(out: &mut DVectorViewMut<f64>, alpha: f64, u: &DMatrix<f64>, row: usize) {
    for (m, o) in out.iter_mut().enumerate() {
        *o += alpha * u[(row, m)];
    }
}

/// Stochastic gradient of the potential `V_i(x_i[k]; θ)`.
pub fn potential_gradient(
    i: usize,
    data: &Snapshot,
    theta: &DVector<f64>,
    topology: &NetworkTopology,
    b: &DMatrix<f64>,
) -> Result<DVector<f64>> {
    check_data(data, topology, b, theta.len())?;
    if i >= topology.n_nodes() {
        return Err(Error::DimensionMismatch(format!("node {i} out of range")));
    }
    let mut g = DVector::zeros(theta.len());
    accumulate_gradient(i, data, &theta.as_view(), topology, b, 1.0, &mut g.as_view_mut());
    Ok(g)
}

fn check_data(data: &Snapshot, topology: &NetworkTopology, b: &DMatrix<f64>, m: usize) -> Result<()> {
    let n = topology.n_nodes();
    if data.u.shape() != (n, m) || data.x.len() != n || b.shape() != (n, n) {
        return Err(Error::DimensionMismatch(format!(
            "expected U {n}x{m}, x {n}, B {n}x{n}; got U {:?}, x {}, B {:?}",
            data.u.shape(),
            data.x.len(),
            b.shape()
        )));
    }
    Ok(())
}

/// Per-node estimates plus the intermediate vectors of one strategy instance.
#[derive(Debug, Clone, PartialEq)]
pub struct AlgorithmState {
    /// `M×N`, column `i` is `θ_i[k]`.
    pub thetas: DMatrix<f64>,
    /// `M×N`, the latest `ψ`, `χ` or `ζ`.
    pub scratch: DMatrix<f64>,
    pub step_sizes: DVector<f64>,
}

impl AlgorithmState {
    pub fn new(thetas: DMatrix<f64>, step_sizes: DVector<f64>) -> Result<Self> {
        if thetas.ncols() != step_sizes.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} estimates but {} step sizes",
                thetas.ncols(),
                step_sizes.len()
            )));
        }
        if let Some(mu) = step_sizes.iter().find(|m| !(**m >= 0.0 && m.is_finite())) {
            return Err(Error::InvalidParameter { name: "step_size", reason: format!("got {mu}") });
        }
        let scratch = thetas.clone();
        Ok(Self { thetas, scratch, step_sizes })
    }

    pub fn zeros(m_dim: usize, step_sizes: DVector<f64>) -> Self {
        let n = step_sizes.len();
        Self::new(DMatrix::zeros(m_dim, n), step_sizes).expect("zero state is valid")
    }

    pub fn n_nodes(&self) -> usize {
        self.thetas.ncols()
    }

    pub fn m_dim(&self) -> usize {
        self.thetas.nrows()
    }

    /// `Σ_i ‖θ₀ - θ_i‖² / N`.
    pub fn network_msd(&self, theta0: &DVector<f64>) -> f64 {
        network_msd(&self.thetas, theta0)
    }
}

/// Mean squared deviation across the columns of `thetas`.
pub fn network_msd(thetas: &DMatrix<f64>, theta0: &DVector<f64>) -> f64 {
    let total: f64 = thetas.column_iter().map(|c| (c - theta0).norm_squared()).sum();
    total / thetas.ncols() as f64
}

/// Fails with the first node holding a non-finite or runaway entry.
pub fn check_divergence(thetas: &DMatrix<f64>) -> Result<()> {
    for (node, col) in thetas.column_iter().enumerate() {
        if col.iter().any(|x| !x.is_finite() || x.abs() > DIVERGENCE_LIMIT) {
            return Err(Error::Diverged { node });
        }
    }
    Ok(())
}

/// `dst_i = Σ_{j∈N_i} a_{j,i} src_j`, skipping zero weights.
pub(crate) fn combine(topology: &NetworkTopology, a: &DMatrix<f64>, src: &DMatrix<f64>, dst: &mut DMatrix<f64>) {
    for i in 0..topology.n_nodes() {
        let mut col = dst.column_mut(i);
        col.fill(0.0);
        for &j in topology.spatial_neighborhood(i) {
            let w = a[(j, i)];
            if w != 0.0 {
                col.axpy(w, &src.column(j), 1.0);
            }
        }
    }
}

/// `dst_i = src_i - μ_i Σ_{j∈N_i} s_{j,i} ∇V_j(src_i)`.
pub(crate) fn adapt(
    topology: &NetworkTopology,
    s: &DMatrix<f64>,
    b: &DMatrix<f64>,
    data: &Snapshot,
    step_sizes: &DVector<f64>,
    src: &DMatrix<f64>,
    dst: &mut DMatrix<f64>,
) {
    let m = src.nrows();
    let mut grad = DVector::zeros(m);
    for i in 0..topology.n_nodes() {
        grad.fill(0.0);
        let theta = src.column(i);
        for &j in topology.spatial_neighborhood(i) {
            let w = s[(j, i)];
            if w != 0.0 {
                accumulate_gradient(j, data, &theta, topology, b, w, &mut grad.as_view_mut());
            }
        }
        let mut out = dst.column_mut(i);
        out.copy_from(&theta);
        out.axpy(-step_sizes[i], &grad, 1.0);
    }
}

fn check_state(state: &AlgorithmState, data: &Snapshot, topology: &NetworkTopology, b: &DMatrix<f64>) -> Result<()> {
    if state.n_nodes() != topology.n_nodes() {
        return Err(Error::DimensionMismatch(format!(
            "state has {} nodes, topology {}",
            state.n_nodes(),
            topology.n_nodes()
        )));
    }
    check_data(data, topology, b, state.m_dim())
}

/// Combine with `P₁`, adapt with `S`-weighted gradients, combine with `P₂`.
pub fn general_diffusion_step(
    state: &mut AlgorithmState,
    matrices: &CombinationMatrices,
    data: &Snapshot,
    topology: &NetworkTopology,
    b: &DMatrix<f64>,
) -> Result<()> {
    check_state(state, data, topology, b)?;
    let mut chi = state.thetas.clone();
    combine(topology, &matrices.p1, &state.thetas, &mut chi);
    adapt(topology, &matrices.s, b, data, &state.step_sizes, &chi, &mut state.scratch);
    combine(topology, &matrices.p2, &state.scratch, &mut state.thetas);
    check_divergence(&state.thetas)
}

/// Adapt-then-combine GMRF diffusion LMS.
pub fn atc_step(
    state: &mut AlgorithmState,
    q: &DMatrix<f64>,
    w: &DMatrix<f64>,
    data: &Snapshot,
    topology: &NetworkTopology,
    b: &DMatrix<f64>,
) -> Result<()> {
    check_state(state, data, topology, b)?;
    adapt(topology, q, b, data, &state.step_sizes, &state.thetas, &mut state.scratch);
    combine(topology, w, &state.scratch, &mut state.thetas);
    check_divergence(&state.thetas)
}

/// Combine-then-adapt GMRF diffusion LMS.
pub fn cta_step(
    state: &mut AlgorithmState,
    q: &DMatrix<f64>,
    w: &DMatrix<f64>,
    data: &Snapshot,
    topology: &NetworkTopology,
    b: &DMatrix<f64>,
) -> Result<()> {
    check_state(state, data, topology, b)?;
    combine(topology, w, &state.thetas, &mut state.scratch);
    adapt(topology, q, b, data, &state.step_sizes, &state.scratch, &mut state.thetas);
    check_divergence(&state.thetas)
}

/// Stand-alone LMS: each node adapts on its own potential, no exchange.
///
/// With a diagonal `B` this is `θ_i += μ_i b_ii u_i (x_i - u_iᵀθ_i)`.
pub fn standalone_lms_step(
    state: &mut AlgorithmState,
    data: &Snapshot,
    topology: &NetworkTopology,
    b: &DMatrix<f64>,
) -> Result<()> {
    check_state(state, data, topology, b)?;
    let m = state.m_dim();
    let mut grad = DVector::zeros(m);
    for i in 0..topology.n_nodes() {
        grad.fill(0.0);
        accumulate_gradient(i, data, &state.thetas.column(i), topology, b, 1.0, &mut grad.as_view_mut());
        state.thetas.column_mut(i).axpy(-state.step_sizes[i], &grad, 1.0);
    }
    check_divergence(&state.thetas)
}

/// `θ[k] = θ[k-1] + μ Uᵀ B (x - U θ[k-1])`.
pub fn centralized_lms_step(theta: &mut DVector<f64>, data: &Snapshot, b: &DMatrix<f64>, mu: f64) -> Result<()> {
    let n = data.n_nodes();
    if data.m_dim() != theta.len() || data.x.len() != n || b.shape() != (n, n) {
        return Err(Error::DimensionMismatch("centralized LMS inputs disagree".into()));
    }
    let e = &data.x - &data.u * &*theta;
    let be = b * e;
    theta.gemv_tr(mu, &data.u, &be, 1.0);
    if theta.iter().any(|x| !x.is_finite() || x.abs() > DIVERGENCE_LIMIT) {
        return Err(Error::Diverged { node: 0 });
    }
    Ok(())
}

/// Entries transmitted per iteration by a diffusion strategy.
///
/// Estimate exchange costs `M` scalars per active off-diagonal link of each
/// combination matrix. Gradient evaluation needs `(x_l, u_l)` pairs (`M+1`
/// scalars each): node `i` pulls them from its own `A_i`, and every `j ≠ i`
/// with `s_{j,i} > 0` forwards its own pair plus those of `A_j`.
pub fn communication_count(topology: &NetworkTopology, matrices: &CombinationMatrices, m_dim: usize) -> usize {
    combination_count(topology, &matrices.p1, m_dim)
        + combination_count(topology, &matrices.p2, m_dim)
        + data_exchange_count(topology, &matrices.s, m_dim)
}

pub fn combination_count(topology: &NetworkTopology, a: &DMatrix<f64>, m_dim: usize) -> usize {
    active_links(topology, a).count() * m_dim
}

pub fn data_exchange_count(topology: &NetworkTopology, s: &DMatrix<f64>, m_dim: usize) -> usize {
    let pair = m_dim + 1;
    let mut total = 0;
    for i in 0..topology.n_nodes() {
        if s[(i, i)] != 0.0 {
            total += topology.oriented_markov(i).len() * pair;
        }
    }
    for (j, _) in active_links(topology, s) {
        total += (1 + topology.oriented_markov(j).len()) * pair;
    }
    total
}

/// Off-diagonal `(j, i)` pairs with `j ∈ N_i` and `a_{j,i} > 0`.
pub fn active_links<'a>(
    topology: &'a NetworkTopology,
    a: &'a DMatrix<f64>,
) -> impl Iterator<Item = (usize, usize)> + 'a {
    (0..topology.n_nodes()).flat_map(move |i| {
        topology
            .spatial_neighborhood(i)
            .iter()
            .filter(move |&&j| j != i && a[(j, i)] > 0.0)
            .map(move |&j| (j, i))
    })
}

/// A centralized fusion centre receives `(x_i, u_i)` from every node.
pub fn centralized_count(n_nodes: usize, m_dim: usize) -> usize {
    n_nodes * (m_dim + 1)
}
