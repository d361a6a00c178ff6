//! Declarative experiment description, loaded from TOML or JSON.

use std::path::Path;

use gmrflms::diffusion::CombinationRule;
use gmrflms::graph::TopologyDoc;
use gmrflms::sigmodel::ZeroInterval;
use gmrflms::sparsity::ThresholdSpec;
use serde::{Deserialize, Serialize};

use crate::error::{ExpError, Result};

pub const DEFAULT_STEADY_WINDOW: usize = 200;

fn default_window() -> usize {
    DEFAULT_STEADY_WINDOW
}

fn default_one() -> f64 {
    1.0
}

fn identity_rule() -> CombinationRule {
    CombinationRule::Identity
}

fn uniform_rule() -> CombinationRule {
    CombinationRule::Uniform
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    pub m_dim: usize,
    pub n_iters: usize,
    pub n_runs: usize,
    #[serde(default = "default_window")]
    pub steady_window: usize,
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default)]
    pub allow_unstable: bool,
    pub topology: TopologySpec,
    pub noise: NoiseSpec,
    pub regressors: RegressorSpec,
    pub parameter: ParameterSpec,
    pub algorithms: Vec<AlgorithmSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tracking: Option<TrackingSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TopologySpec {
    /// Random geometric graph in the unit square with a random spanning tree
    /// as dependency graph. Without `seed`, the master seed is used.
    Random {
        n_nodes: usize,
        radius: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        seed: Option<u64>,
    },
    Explicit(TopologyDoc),
}

/// Exponential covariance `c_ij = σ² ν exp(-κ d_ij)` on the dependency edges.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSpec {
    pub sigma2: f64,
    pub nugget: f64,
    pub kappa: f64,
}

/// Exactly one of the three fields must be given.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegressorSpec {
    /// Same power at every node.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub power: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub powers: Option<Vec<f64>>,
    /// Powers drawn once per scenario, uniformly in `[lo, hi]`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub power_range: Option<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ParameterSpec {
    /// Fixed `θ₀`; without `theta0`, each run draws it uniformly in `[-1, 1]^M`.
    Static {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        theta0: Option<Vec<f64>>,
    },
    /// `support_size` entries equal to `value` at positions drawn per run.
    Sparse {
        support_size: usize,
        #[serde(default = "default_one")]
        value: f64,
    },
    /// `θ₀[k] = a θ₀[k-1] + s[k]` with components zeroed on intervals.
    Ar {
        ar_coeff: f64,
        drive_mean: f64,
        drive_var: f64,
        /// Defaults to the stationary mean.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        initial: Option<Vec<f64>>,
        #[serde(default, skip_serializing_if = "Vec::is_empty")]
        zero_intervals: Vec<ZeroInterval>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        random_zero_intervals: Option<RandomZeros>,
    },
}

/// Zero intervals drawn once per scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RandomZeros {
    /// Intervals per listed component.
    pub count: usize,
    pub min_len: usize,
    pub max_len: usize,
    /// Defaults to every component.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub components: Option<Vec<usize>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlgorithmKind {
    Atc,
    Cta,
    Acs,
    Asc,
    Standalone,
    Centralized,
}

impl AlgorithmKind {
    pub fn is_sparse(self) -> bool {
        matches!(self, Self::Acs | Self::Asc)
    }

    /// Whether the steady-state theory covers this recursion.
    pub fn has_theory(self) -> bool {
        !self.is_sparse()
    }
}

/// Which precision the algorithm weights its gradients with.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PrecisionKind {
    #[default]
    Gmrf,
    /// `diag(1 / σ²_v)`, i.e. the correlation is ignored.
    Agnostic,
    Identity,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum StepSpec {
    Uniform(f64),
    PerNode(Vec<f64>),
    /// Same convergence rate as the named algorithm.
    Match {
        #[serde(rename = "match")]
        target: String,
    },
    /// `μ_i` as a fraction of the node's mean-stability bound.
    BoundFraction { bound_fraction: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlgorithmSpec {
    pub name: String,
    pub kind: AlgorithmKind,
    #[serde(default)]
    pub precision: PrecisionKind,
    /// Rule for the measurement-exchange matrix `Q`.
    #[serde(default = "identity_rule")]
    pub exchange: CombinationRule,
    /// Rule for the combination matrix `W`.
    #[serde(default = "uniform_rule")]
    pub combination: CombinationRule,
    pub step: StepSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threshold: Option<ThresholdSpec>,
}

/// Estimates of one node to record against the truth, in run `run`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrackingSpec {
    /// Defaults to the first configured algorithm.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub algorithm: Option<String>,
    #[serde(default)]
    pub run: usize,
    #[serde(default)]
    pub node: usize,
    pub components: Vec<usize>,
}

impl Scenario {
    pub fn n_nodes(&self) -> usize {
        match &self.topology {
            TopologySpec::Random { n_nodes, .. } => *n_nodes,
            TopologySpec::Explicit(doc) => doc.positions.len(),
        }
    }

    pub fn algorithm(&self, name: &str) -> Option<&AlgorithmSpec> {
        self.algorithms.iter().find(|a| a.name == name)
    }

    /// Structural checks that need no numerics.
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(ExpError::Config(msg));
        if self.m_dim == 0 {
            return bad("m_dim must be positive".into());
        }
        if self.n_runs == 0 {
            return bad("n_runs must be at least 1".into());
        }
        if self.steady_window == 0 || self.steady_window >= self.n_iters {
            return bad(format!(
                "steady_window ({}) must be positive and below n_iters ({})",
                self.steady_window, self.n_iters
            ));
        }
        if self.algorithms.is_empty() {
            return bad("no algorithms configured".into());
        }
        let n = self.n_nodes();
        for (idx, a) in self.algorithms.iter().enumerate() {
            if self.algorithms[..idx].iter().any(|b| b.name == a.name) {
                return bad(format!("duplicate algorithm name `{}`", a.name));
            }
            if a.kind.is_sparse() != a.threshold.is_some() {
                return bad(format!("`{}`: a threshold is required for acs/asc and only for them", a.name));
            }
            match &a.step {
                StepSpec::Uniform(mu) if !(*mu > 0.0) => return bad(format!("`{}`: step must be positive", a.name)),
                StepSpec::PerNode(v) if v.len() != n || v.iter().any(|m| !(*m > 0.0)) => {
                    return bad(format!("`{}`: need {n} positive per-node steps", a.name))
                }
                StepSpec::Match { target } => match self.algorithm(target) {
                    None => return bad(format!("`{}`: unknown rate-matching target `{target}`", a.name)),
                    Some(t) if matches!(t.step, StepSpec::Match { .. }) => {
                        return bad(format!("`{}`: target `{target}` is itself rate-matched", a.name))
                    }
                    _ => {}
                },
                StepSpec::BoundFraction { bound_fraction } if !(*bound_fraction > 0.0) => {
                    return bad(format!("`{}`: bound_fraction must be positive", a.name))
                }
                _ => {}
            }
            if a.kind == AlgorithmKind::Centralized && matches!(a.step, StepSpec::PerNode(_)) {
                return bad(format!("`{}`: centralized LMS takes a single step size", a.name));
            }
        }
        let given = [
            self.regressors.power.is_some(),
            self.regressors.powers.is_some(),
            self.regressors.power_range.is_some(),
        ];
        if given.iter().filter(|g| **g).count() != 1 {
            return bad("regressors: give exactly one of power, powers, power_range".into());
        }
        if let Some(t) = &self.tracking {
            if let Some(name) = &t.algorithm {
                if self.algorithm(name).is_none() {
                    return bad(format!("tracking: unknown algorithm `{name}`"));
                }
            }
            if t.run >= self.n_runs || t.node >= n || t.components.iter().any(|c| *c >= self.m_dim) {
                return bad("tracking: run, node or component out of range".into());
            }
        }
        if let ParameterSpec::Sparse { support_size, .. } = self.parameter {
            if support_size > self.m_dim {
                return bad(format!("support_size {support_size} exceeds m_dim {}", self.m_dim));
            }
        }
        Ok(())
    }

    pub fn from_toml_str(s: &str) -> Result<Self> {
        let sc: Self = toml::from_str(s).map_err(|e| ExpError::Config(e.to_string()))?;
        sc.validate()?;
        Ok(sc)
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let sc: Self = serde_json::from_str(s).map_err(|e| ExpError::Config(e.to_string()))?;
        sc.validate()?;
        Ok(sc)
    }

    /// Reads a `.json` file as JSON and anything else as TOML.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ExpError::Config(format!("cannot read {}: {e}", path.display())))?;
        if path.extension().is_some_and(|e| e == "json") {
            Self::from_json_str(&text)
        } else {
            Self::from_toml_str(&text)
        }
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| ExpError::Config(e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const EXAMPLE: &str = r#"
name = "small"
m_dim = 2
n_iters = 300
n_runs = 4
master_seed = 9

[topology]
kind = "random"
n_nodes = 5
radius = 0.6

[noise]
sigma2 = 0.1
nugget = 0.9
kappa = 0.1

[regressors]
power_range = [0.5, 1.5]

[parameter]
kind = "static"

[[algorithms]]
name = "ATC-GMRF"
kind = "atc"
step = 0.002

[[algorithms]]
name = "ATC"
kind = "atc"
precision = "agnostic"
step = { match = "ATC-GMRF" }

[[algorithms]]
name = "l0-ACS"
kind = "acs"
step = [0.001, 0.001, 0.001, 0.001, 0.001]
threshold = { kind = "l0", gamma = 1e-4, beta = 50.0 }
"#;

    #[test]
    fn parses_and_round_trips() {
        let sc = Scenario::from_toml_str(EXAMPLE).unwrap();
        assert_eq!(sc.steady_window, DEFAULT_STEADY_WINDOW);
        assert_eq!(sc.algorithms[1].step, StepSpec::Match { target: "ATC-GMRF".into() });
        assert_eq!(sc.algorithms[0].exchange, CombinationRule::Identity);
        assert_eq!(sc.algorithms[0].combination, CombinationRule::Uniform);
        assert!(matches!(sc.algorithms[2].step, StepSpec::PerNode(ref v) if v.len() == 5));
        let again = Scenario::from_toml_str(&sc.to_toml_string().unwrap()).unwrap();
        assert_eq!(again, sc);
        let json = serde_json::to_string(&sc).unwrap();
        assert_eq!(Scenario::from_json_str(&json).unwrap(), sc);
    }

    #[test]
    fn rejects_bad_configs() {
        let cases = [
            ("n_runs = 4", "n_runs = 0"),
            ("n_iters = 300", "n_iters = 200"),
            ("power_range = [0.5, 1.5]", "power_range = [0.5, 1.5]\npower = 1.0"),
            ("step = { match = \"ATC-GMRF\" }", "step = { match = \"nope\" }"),
            ("step = 0.002", "step = -1.0"),
            ("kind = \"static\"", "kind = \"sparse\"\nsupport_size = 3"),
            ("threshold = { kind = \"l0\", gamma = 1e-4, beta = 50.0 }", ""),
            ("threshold = { kind = \"l0\", gamma = 1e-4, beta = 50.0 }", "threshold = { kind = \"l0\", gamma = 1e-2, beta = 50.0 }"),
            ("master_seed = 9", "master_seed = 9\ncolour = 1"),
        ];
        for (from, to) in cases {
            let text = EXAMPLE.replacen(from, to, 1);
            assert!(Scenario::from_toml_str(&text).is_err(), "accepted: {to}");
        }
        // Sparse support within range is fine.
        let ok = EXAMPLE.replacen("kind = \"static\"", "kind = \"sparse\"\nsupport_size = 1", 1);
        assert!(Scenario::from_toml_str(&ok).is_ok());
    }

    #[test]
    fn explicit_topology_parses() {
        let text = EXAMPLE.replacen(
            "kind = \"random\"\nn_nodes = 5\nradius = 0.6",
            "kind = \"explicit\"\npositions = [[0.0, 0.0], [1.0, 0.0], [2.0, 0.0], [3.0, 0.0], [4.0, 0.0]]\ncomm_edges = [[0, 1], [1, 2], [2, 3], [3, 4]]\ndep_edges = [[0, 1]]",
            1,
        );
        let sc = Scenario::from_toml_str(&text).unwrap();
        assert_eq!(sc.n_nodes(), 5);
    }
}
