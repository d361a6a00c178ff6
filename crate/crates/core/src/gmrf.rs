//! Gaussian Markov random field noise model on a tree-shaped dependency graph.
//!
//! Covariances along dependency edges follow the exponential nugget model
//! `c_ij = σ²·ν·exp(-κ·d_ij)`. The precision matrix is assembled in closed
//! form from those edge covariances (valid because the graph is a forest),
//! and the full covariance is its numeric inverse.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::graph::{Edge, NetworkTopology};
use crate::linalg::max_abs_diff;
use crate::{Error, Result};

/// Structural zeros of the precision matrix.
pub const STRUCTURAL_ZERO_TOL: f64 = 1e-10;
/// Max-abs tolerance on `BC - I` and on the diagonal of `C`.
pub const INVERSE_TOL: f64 = 1e-8;

/// Diagonal variance plus one covariance per dependency edge.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeCovariances {
    pub sigma2: f64,
    pub edges: BTreeMap<Edge, f64>,
}

/// Evaluates the nugget/exponential covariance on every dependency edge.
pub fn build_covariance_edges(
    topology: &NetworkTopology,
    sigma2: f64,
    nugget: f64,
    kappa: f64,
) -> Result<EdgeCovariances> {
    if !(sigma2 > 0.0) || !sigma2.is_finite() {
        return Err(Error::InvalidParameter {
            name: "sigma2",
            reason: format!("must be positive, got {sigma2}"),
        });
    }
    if !(nugget > 0.0 && nugget < 1.0) {
        return Err(Error::InvalidParameter {
            name: "nugget",
            reason: format!("must lie in (0, 1), got {nugget}"),
        });
    }
    if !(kappa >= 0.0) || !kappa.is_finite() {
        return Err(Error::InvalidParameter {
            name: "kappa",
            reason: format!("must be non-negative, got {kappa}"),
        });
    }
    if !topology.is_acyclic_dependency() {
        return Err(Error::CyclicDependency);
    }
    let edges = topology
        .dep_edges()
        .map(|(i, j)| ((i, j), sigma2 * nugget * (-kappa * topology.distance(i, j)).exp()))
        .collect();
    Ok(EdgeCovariances { sigma2, edges })
}

/// Closed-form precision matrix of a tree-structured Gaussian field.
///
/// Off-diagonal entries are `-c_ij / (c_ii c_jj - c_ij²)` on dependency edges.
/// The diagonal collects one correction term per Markov neighbour:
/// `b_ii = 1/c_ii + Σ_{j∈M_i} (c_ij²/c_ii) / (c_ii c_jj - c_ij²)`.
pub fn precision_from_tree_covariance(
    topology: &NetworkTopology,
    cov: &EdgeCovariances,
) -> Result<DMatrix<f64>> {
    if !topology.is_acyclic_dependency() {
        return Err(Error::CyclicDependency);
    }
    let n = topology.n_nodes();
    let s2 = cov.sigma2;
    let mut b = DMatrix::from_diagonal_element(n, n, 1.0 / s2);
    for &(i, j) in cov.edges.keys() {
        if !topology.is_dep_edge(i, j) {
            return Err(Error::InvalidParameter {
                name: "edge_covariances",
                reason: format!("({i}, {j}) is not a dependency edge"),
            });
        }
    }
    for (i, j) in topology.dep_edges() {
        let c = *cov.edges.get(&(i, j)).ok_or_else(|| Error::InvalidParameter {
            name: "edge_covariances",
            reason: format!("missing covariance for edge ({i}, {j})"),
        })?;
        let det = s2 * s2 - c * c;
        if !(det > 0.0) {
            return Err(Error::SingularPair(i, j));
        }
        b[(i, j)] = -c / det;
        b[(j, i)] = -c / det;
        let extra = (c * c / s2) / det;
        b[(i, i)] += extra;
        b[(j, j)] += extra;
    }
    Ok(b)
}

/// `C = B⁻¹` through a Cholesky factorization.
pub fn full_covariance(precision: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    precision
        .clone()
        .cholesky()
        .map(|ch| ch.inverse())
        .ok_or(Error::NotPositiveDefinite)
}

#[derive(Debug, Clone)]
pub struct GmrfModel {
    sigma2: f64,
    nugget: Option<f64>,
    kappa: Option<f64>,
    covariance: DMatrix<f64>,
    precision: DMatrix<f64>,
    chol_factor: DMatrix<f64>,
}

impl GmrfModel {
    /// Builds the field for a topology with an acyclic dependency graph.
    pub fn new(topology: &NetworkTopology, sigma2: f64, nugget: f64, kappa: f64) -> Result<Self> {
        let edges = build_covariance_edges(topology, sigma2, nugget, kappa)?;
        let precision = precision_from_tree_covariance(topology, &edges)?;
        let covariance = full_covariance(&precision)?;
        for i in 0..covariance.nrows() {
            if (covariance[(i, i)] - sigma2).abs() > INVERSE_TOL {
                return Err(Error::InconsistentModel((covariance[(i, i)] - sigma2).abs()));
            }
        }
        let chol_factor = covariance
            .clone()
            .cholesky()
            .ok_or(Error::NotPositiveDefinite)?
            .unpack();
        Ok(Self {
            sigma2,
            nugget: Some(nugget),
            kappa: Some(kappa),
            covariance,
            precision,
            chol_factor,
        })
    }

    /// Uses an explicit covariance matrix; the precision is its numeric inverse.
    pub fn from_covariance(covariance: DMatrix<f64>) -> Result<Self> {
        if !covariance.is_square() {
            return Err(Error::DimensionMismatch("covariance must be square".into()));
        }
        let chol = covariance.clone().cholesky().ok_or(Error::NotPositiveDefinite)?;
        let precision = chol.inverse();
        let sigma2 = covariance.diagonal().max();
        Ok(Self {
            sigma2,
            nugget: None,
            kappa: None,
            chol_factor: chol.unpack(),
            covariance,
            precision,
        })
    }

    pub fn n_nodes(&self) -> usize {
        self.covariance.nrows()
    }

    pub fn sigma2(&self) -> f64 {
        self.sigma2
    }

    pub fn nugget(&self) -> Option<f64> {
        self.nugget
    }

    pub fn kappa(&self) -> Option<f64> {
        self.kappa
    }

    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.covariance
    }

    pub fn precision(&self) -> &DMatrix<f64> {
        &self.precision
    }

    /// Lower-triangular `L` with `L Lᵀ = C`.
    pub fn chol_factor(&self) -> &DMatrix<f64> {
        &self.chol_factor
    }

    /// `diag(1/c_ii)`: the precision a correlation-agnostic node would assume.
    pub fn agnostic_precision(&self) -> DMatrix<f64> {
        DMatrix::from_diagonal(&self.covariance.diagonal().map(|c| 1.0 / c))
    }

    /// Draws one noise vector `v = L z`, `z ~ N(0, I)`.
    pub fn sample_noise<R: Rng + ?Sized>(&self, rng: &mut R) -> DVector<f64> {
        let mut out = DVector::zeros(self.n_nodes());
        self.sample_into(rng, &mut out);
        out
    }

    pub fn sample_into<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut DVector<f64>) {
        let n = self.n_nodes();
        let z = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
        self.chol_factor.mul_to(&z, out);
    }
}

/// Diagnostic summary of how well a model honours the Markov structure.
#[derive(Debug, Clone, PartialEq)]
pub struct MarkovReport {
    /// Largest `|b_ij|` over pairs that are not dependency edges.
    pub max_nonedge_precision: f64,
    /// Largest entry of `|BC - I|`.
    pub max_inverse_residual: f64,
    pub positive_definite: bool,
}

impl MarkovReport {
    pub fn passes(&self) -> bool {
        self.positive_definite
            && self.max_nonedge_precision < STRUCTURAL_ZERO_TOL
            && self.max_inverse_residual < INVERSE_TOL
    }
}

pub fn validate_markov_structure(model: &GmrfModel, topology: &NetworkTopology) -> MarkovReport {
    validate_precision(model.precision(), model.covariance(), topology)
}

/// Same checks on raw matrices, so corrupted precisions can be inspected.
pub fn validate_precision(
    precision: &DMatrix<f64>,
    covariance: &DMatrix<f64>,
    topology: &NetworkTopology,
) -> MarkovReport {
    let n = precision.nrows();
    let mut max_nonedge = 0.0f64;
    for i in 0..n {
        for j in 0..n {
            if i != j && !topology.is_dep_edge(i, j) {
                max_nonedge = max_nonedge.max(precision[(i, j)].abs());
            }
        }
    }
    let residual = max_abs_diff(&(precision * covariance), &DMatrix::identity(n, n));
    let positive_definite =
        precision.clone().cholesky().is_some() && covariance.clone().cholesky().is_some();
    MarkovReport {
        max_nonedge_precision: max_nonedge,
        max_inverse_residual: residual,
        positive_definite,
    }
}
