//! Network topology: the spatial communication graph and the statistical
//! dependency (Markov) graph of the noise field.
//!
//! Node indices are 0-based. Both graphs are undirected; edges are stored
//! normalized as `(min, max)`. The dependency graph must be a subgraph of the
//! communication graph, since a node can only use the raw data of a Markov
//! neighbour that it can actually hear.

use std::collections::BTreeSet;

use petgraph::unionfind::UnionFind;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// An undirected edge between two node indices.
pub type Edge = (usize, usize);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "TopologyDoc", into = "TopologyDoc")]
pub struct NetworkTopology {
    positions: Vec<[f64; 2]>,
    comm_edges: BTreeSet<Edge>,
    dep_edges: BTreeSet<Edge>,
    spatial: Vec<Vec<usize>>,
    markov: Vec<Vec<usize>>,
}

/// On-disk form: positions plus 0-based edge lists.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopologyDoc {
    pub positions: Vec<[f64; 2]>,
    pub comm_edges: Vec<Edge>,
    #[serde(default)]
    pub dep_edges: Vec<Edge>,
}

impl TryFrom<TopologyDoc> for NetworkTopology {
    type Error = Error;

    fn try_from(doc: TopologyDoc) -> Result<Self> {
        Self::new(doc.positions, &doc.comm_edges, &doc.dep_edges)
    }
}

impl From<NetworkTopology> for TopologyDoc {
    fn from(t: NetworkTopology) -> Self {
        Self {
            comm_edges: t.comm_edges.into_iter().collect(),
            dep_edges: t.dep_edges.into_iter().collect(),
            positions: t.positions,
        }
    }
}

fn normalize(n: usize, (a, b): Edge) -> Result<Edge> {
    if a >= n || b >= n || a == b {
        return Err(Error::InvalidEdge(a, b, n));
    }
    Ok((a.min(b), a.max(b)))
}

impl NetworkTopology {
    /// Validates the edge sets and precomputes the neighbourhood lists.
    pub fn new(positions: Vec<[f64; 2]>, comm_edges: &[Edge], dep_edges: &[Edge]) -> Result<Self> {
        let n = positions.len();
        let comm = comm_edges
            .iter()
            .map(|&e| normalize(n, e))
            .collect::<Result<BTreeSet<_>>>()?;
        let dep = dep_edges
            .iter()
            .map(|&e| normalize(n, e))
            .collect::<Result<BTreeSet<_>>>()?;
        if let Some(&(a, b)) = dep.iter().find(|e| !comm.contains(e)) {
            return Err(Error::SubgraphViolation(a, b));
        }

        let mut spatial: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
        for &(a, b) in &comm {
            spatial[a].push(b);
            spatial[b].push(a);
        }
        let mut markov = vec![Vec::new(); n];
        for &(a, b) in &dep {
            markov[a].push(b);
            markov[b].push(a);
        }
        for list in spatial.iter_mut().chain(markov.iter_mut()) {
            list.sort_unstable();
        }

        Ok(Self {
            positions,
            comm_edges: comm,
            dep_edges: dep,
            spatial,
            markov,
        })
    }

    pub fn n_nodes(&self) -> usize {
        self.positions.len()
    }

    pub fn positions(&self) -> &[[f64; 2]] {
        &self.positions
    }

    pub fn comm_edges(&self) -> impl Iterator<Item = Edge> + '_ {
        self.comm_edges.iter().copied()
    }

    pub fn dep_edges(&self) -> impl Iterator<Item = Edge> + '_ {
        self.dep_edges.iter().copied()
    }

    pub fn n_dep_edges(&self) -> usize {
        self.dep_edges.len()
    }

    pub fn is_dep_edge(&self, i: usize, j: usize) -> bool {
        self.dep_edges.contains(&(i.min(j), i.max(j)))
    }

    /// Euclidean distance between two nodes.
    pub fn distance(&self, i: usize, j: usize) -> f64 {
        let [xi, yi] = self.positions[i];
        let [xj, yj] = self.positions[j];
        (xi - xj).hypot(yi - yj)
    }

    /// `N_i`: node `i` together with its communication neighbours, sorted.
    pub fn spatial_neighborhood(&self, i: usize) -> &[usize] {
        &self.spatial[i]
    }

    /// `M_i`: dependency-graph neighbours of `i` (excluding `i`), sorted.
    pub fn markov_neighborhood(&self, i: usize) -> &[usize] {
        &self.markov[i]
    }

    /// `A_i = { j in M_i : j > i }`, the orientation used by the potentials.
    pub fn oriented_markov(&self, i: usize) -> &[usize] {
        let m = &self.markov[i];
        let start = m.partition_point(|&j| j <= i);
        &m[start..]
    }

    /// True iff the communication graph is connected.
    pub fn is_connected(&self) -> bool {
        let n = self.n_nodes();
        if n == 0 {
            return true;
        }
        let mut uf = UnionFind::new(n);
        for &(a, b) in &self.comm_edges {
            uf.union(a, b);
        }
        let root = uf.find(0);
        (1..n).all(|i| uf.find(i) == root)
    }

    /// True iff the dependency edges form a forest.
    pub fn is_acyclic_dependency(&self) -> bool {
        let mut uf = UnionFind::new(self.n_nodes());
        self.dep_edges.iter().all(|&(a, b)| uf.union(a, b))
    }

    /// Random geometric graph in the unit square, redrawn until connected,
    /// with a uniformly random spanning tree of it as the dependency graph.
    pub fn random<R: Rng + ?Sized>(n: usize, radius: f64, rng: &mut R) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidParameter {
                name: "n_nodes",
                reason: "must be positive".into(),
            });
        }
        if !(radius > 0.0) {
            return Err(Error::InvalidParameter {
                name: "radius",
                reason: format!("must be positive, got {radius}"),
            });
        }
        const MAX_ATTEMPTS: usize = 10_000;
        for _ in 0..MAX_ATTEMPTS {
            let positions: Vec<[f64; 2]> = (0..n)
                .map(|_| [rng.random::<f64>(), rng.random::<f64>()])
                .collect();
            let mut comm = Vec::new();
            for i in 0..n {
                for j in i + 1..n {
                    let [xi, yi] = positions[i];
                    let [xj, yj] = positions[j];
                    if (xi - xj).hypot(yi - yj) <= radius {
                        comm.push((i, j));
                    }
                }
            }
            let candidate = Self::new(positions, &comm, &[])?;
            if !candidate.is_connected() {
                continue;
            }
            let tree = candidate.random_spanning_tree(rng);
            return Self::new(candidate.positions, &comm, &tree);
        }
        Err(Error::InvalidParameter {
            name: "radius",
            reason: format!("no connected layout of {n} nodes found with radius {radius}"),
        })
    }

    /// Uniform spanning tree of the communication graph (Aldous-Broder walk).
    /// Assumes the graph is connected.
    pub fn random_spanning_tree<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<Edge> {
        let n = self.n_nodes();
        let mut visited = vec![false; n];
        let mut tree = Vec::with_capacity(n.saturating_sub(1));
        let mut current = rng.random_range(0..n);
        visited[current] = true;
        let mut remaining = n - 1;
        while remaining > 0 {
            let nbrs: Vec<usize> = self.spatial[current]
                .iter()
                .copied()
                .filter(|&j| j != current)
                .collect();
            let next = nbrs[rng.random_range(0..nbrs.len())];
            if !visited[next] {
                visited[next] = true;
                tree.push((current.min(next), current.max(next)));
                remaining -= 1;
            }
            current = next;
        }
        tree
    }
}
