//! Node power profiles and network topology.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Power budget and consumption levels of one node, all in watts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NodePowerProfile {
    pub rho: f64,
    pub listen_cost: f64,
    pub transmit_cost: f64,
}

impl NodePowerProfile {
    pub fn new(rho: f64, listen_cost: f64, transmit_cost: f64) -> Self {
        Self { rho, listen_cost, transmit_cost }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("rho", self.rho),
            ("listen_cost", self.listen_cost),
            ("transmit_cost", self.transmit_cost),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidConfig(format!("{name} must be finite and > 0, got {v}")));
            }
        }
        Ok(())
    }

    pub fn scaled(&self, k: f64) -> Self {
        Self::new(self.rho * k, self.listen_cost * k, self.transmit_cost * k)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Topology {
    Clique(usize),
    Graph { adjacency: Vec<Vec<bool>> },
}

impl Topology {
    pub fn node_count(&self) -> usize {
        match self {
            Topology::Clique(n) => *n,
            Topology::Graph { adjacency } => adjacency.len(),
        }
    }

    /// Row-major grid where each node is adjacent to its up/down/left/right cells.
    pub fn grid(rows: usize, cols: usize) -> Self {
        let n = rows * cols;
        let mut adjacency = vec![vec![false; n]; n];
        for r in 0..rows {
            for c in 0..cols {
                let i = r * cols + c;
                if c + 1 < cols {
                    adjacency[i][i + 1] = true;
                    adjacency[i + 1][i] = true;
                }
                if r + 1 < rows {
                    adjacency[i][i + cols] = true;
                    adjacency[i + cols][i] = true;
                }
            }
        }
        Topology::Graph { adjacency }
    }

    pub fn complete_graph(n: usize) -> Self {
        let adjacency = (0..n).map(|i| (0..n).map(|j| i != j).collect()).collect();
        Topology::Graph { adjacency }
    }

    pub fn is_clique(&self) -> bool {
        match self {
            Topology::Clique(_) => true,
            Topology::Graph { adjacency } => adjacency
                .iter()
                .enumerate()
                .all(|(i, row)| row.iter().enumerate().all(|(j, &a)| a == (i != j))),
        }
    }

    pub fn neighbors(&self, i: usize) -> Vec<usize> {
        match self {
            Topology::Clique(n) => (0..*n).filter(|&j| j != i).collect(),
            Topology::Graph { adjacency } => {
                adjacency[i].iter().enumerate().filter(|(_, &a)| a).map(|(j, _)| j).collect()
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let Topology::Graph { adjacency } = self {
            let n = adjacency.len();
            for (i, row) in adjacency.iter().enumerate() {
                if row.len() != n {
                    return Err(Error::InvalidConfig(format!(
                        "adjacency row {i} has {} entries, expected {n}",
                        row.len()
                    )));
                }
                if row[i] {
                    return Err(Error::InvalidConfig(format!("adjacency has a self-loop at node {i}")));
                }
                for (j, &a) in row.iter().enumerate() {
                    if a != adjacency[j][i] {
                        return Err(Error::InvalidConfig(format!(
                            "adjacency is not symmetric at ({i}, {j})"
                        )));
                    }
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkConfig {
    pub nodes: Vec<NodePowerProfile>,
    pub topology: Topology,
}

impl NetworkConfig {
    pub fn new(nodes: Vec<NodePowerProfile>, topology: Topology) -> Result<Self> {
        let cfg = Self { nodes, topology };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn clique(nodes: Vec<NodePowerProfile>) -> Self {
        let n = nodes.len();
        Self { nodes, topology: Topology::Clique(n) }
    }

    pub fn homogeneous(n: usize, profile: NodePowerProfile) -> Self {
        Self::clique(vec![profile; n])
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        if self.nodes.is_empty() {
            return Err(Error::InvalidConfig("network has no nodes".into()));
        }
        if self.topology.node_count() != self.nodes.len() {
            return Err(Error::InvalidConfig(format!(
                "topology has {} nodes but {} power profiles were given",
                self.topology.node_count(),
                self.nodes.len()
            )));
        }
        for (i, p) in self.nodes.iter().enumerate() {
            p.validate().map_err(|e| Error::InvalidConfig(format!("node {i}: {e}")))?;
        }
        self.topology.validate()
    }

    pub fn require_clique(&self, what: &str) -> Result<()> {
        if self.topology.is_clique() {
            Ok(())
        } else {
            Err(Error::WrongSolver(format!("{what} requires a clique topology")))
        }
    }

    /// Largest listen or transmit cost in the network. Dividing every power by
    /// this makes the numerics independent of the unit scale.
    pub fn reference_power(&self) -> f64 {
        self.nodes
            .iter()
            .map(|p| p.listen_cost.max(p.transmit_cost))
            .fold(0.0, f64::max)
    }

    /// Copy with every power divided by [`Self::reference_power`].
    pub fn normalized(&self) -> NetworkConfig {
        let k = 1.0 / self.reference_power();
        NetworkConfig { nodes: self.nodes.iter().map(|p| p.scaled(k)).collect(), topology: self.topology.clone() }
    }

    pub fn scaled(&self, k: f64) -> NetworkConfig {
        NetworkConfig { nodes: self.nodes.iter().map(|p| p.scaled(k)).collect(), topology: self.topology.clone() }
    }

    pub fn neighbor_lists(&self) -> Vec<Vec<usize>> {
        (0..self.len()).map(|i| self.topology.neighbors(i)).collect()
    }
}
