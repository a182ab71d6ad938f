//! Time-varying undirected interaction graphs.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::NodeId;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TopologyError {
    #[error("edge ({0}, {1}) references a node outside 0..{2}")]
    UnknownNode(NodeId, NodeId, usize),
    #[error("self-loop at node {0}")]
    SelfLoop(NodeId),
    #[error("{0} topology needs at least one edge set")]
    NoEdgeSets(&'static str),
}

/// Undirected edge stored with the smaller id first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(from = "(NodeId, NodeId)", into = "(NodeId, NodeId)")]
pub struct Edge {
    pub a: NodeId,
    pub b: NodeId,
}

impl Edge {
    pub fn new(u: NodeId, v: NodeId) -> Self {
        if u <= v {
            Edge { a: u, b: v }
        } else {
            Edge { a: v, b: u }
        }
    }

    pub fn touches(&self, node: NodeId) -> bool {
        self.a == node || self.b == node
    }

    pub fn other(&self, node: NodeId) -> Option<NodeId> {
        if self.a == node {
            Some(self.b)
        } else if self.b == node {
            Some(self.a)
        } else {
            None
        }
    }
}

impl From<(NodeId, NodeId)> for Edge {
    fn from((u, v): (NodeId, NodeId)) -> Self {
        Edge::new(u, v)
    }
}

impl From<Edge> for (NodeId, NodeId) {
    fn from(e: Edge) -> Self {
        (e.a, e.b)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TopologyMode {
    /// One edge set for every round.
    Static,
    /// Round `k` uses set `k mod len`.
    Periodic,
    /// Round `k` uses set `k`; rounds past the script have no edges.
    Scripted,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TopologySchedule {
    n_nodes: usize,
    mode: TopologyMode,
    sets: Vec<BTreeSet<Edge>>,
}

static NO_EDGES: BTreeSet<Edge> = BTreeSet::new();

impl TopologySchedule {
    pub fn new(
        n_nodes: usize,
        mode: TopologyMode,
        sets: Vec<Vec<Edge>>,
    ) -> Result<Self, TopologyError> {
        let mut checked = Vec::with_capacity(sets.len());
        for set in sets {
            let mut edges = BTreeSet::new();
            for e in set {
                if e.a == e.b {
                    return Err(TopologyError::SelfLoop(e.a));
                }
                if e.b.index() >= n_nodes {
                    return Err(TopologyError::UnknownNode(e.a, e.b, n_nodes));
                }
                edges.insert(e);
            }
            checked.push(edges);
        }
        match mode {
            TopologyMode::Static if checked.is_empty() => checked.push(BTreeSet::new()),
            TopologyMode::Static if checked.len() > 1 => {
                let merged = checked.into_iter().flatten().collect();
                checked = vec![merged];
            }
            TopologyMode::Periodic if checked.is_empty() => {
                return Err(TopologyError::NoEdgeSets("periodic"))
            }
            _ => {}
        }
        Ok(TopologySchedule {
            n_nodes,
            mode,
            sets: checked,
        })
    }

    pub fn fixed(n_nodes: usize, edges: Vec<Edge>) -> Result<Self, TopologyError> {
        Self::new(n_nodes, TopologyMode::Static, vec![edges])
    }

    pub fn ring(n_nodes: usize) -> Self {
        let edges = (0..n_nodes)
            .map(|i| Edge::new(NodeId::from(i), NodeId::from((i + 1) % n_nodes)))
            .filter(|e| e.a != e.b)
            .collect();
        Self::fixed(n_nodes, edges).expect("ring edges are valid")
    }

    pub fn line(n_nodes: usize) -> Self {
        let edges = (1..n_nodes)
            .map(|i| Edge::new(NodeId::from(i - 1), NodeId::from(i)))
            .collect();
        Self::fixed(n_nodes, edges).expect("line edges are valid")
    }

    pub fn complete(n_nodes: usize) -> Self {
        let mut edges = Vec::new();
        for i in 0..n_nodes {
            for j in i + 1..n_nodes {
                edges.push(Edge::new(NodeId::from(i), NodeId::from(j)));
            }
        }
        Self::fixed(n_nodes, edges).expect("complete graph edges are valid")
    }

    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }

    pub fn mode(&self) -> TopologyMode {
        self.mode
    }

    pub fn edge_sets(&self) -> &[BTreeSet<Edge>] {
        &self.sets
    }

    pub fn edges_at(&self, round: u64) -> &BTreeSet<Edge> {
        match self.mode {
            TopologyMode::Static => &self.sets[0],
            TopologyMode::Periodic => &self.sets[(round % self.sets.len() as u64) as usize],
            TopologyMode::Scripted => self.sets.get(round as usize).unwrap_or(&NO_EDGES),
        }
    }

    pub fn is_active(&self, round: u64, edge: Edge) -> bool {
        self.edges_at(round).contains(&edge)
    }

    /// Whether `edge` appears in any round of the schedule.
    pub fn ever_contains(&self, edge: Edge) -> bool {
        self.sets.iter().any(|s| s.contains(&edge))
    }

    pub fn neighbors_at(&self, round: u64, node: NodeId) -> Vec<NodeId> {
        self.edges_at(round)
            .iter()
            .filter_map(|e| e.other(node))
            .collect()
    }

    /// Neighbors of `node` across every scheduled round.
    pub fn all_neighbors(&self, node: NodeId) -> BTreeSet<NodeId> {
        self.sets
            .iter()
            .flatten()
            .filter_map(|e| e.other(node))
            .collect()
    }

    /// Largest node degree in any single scheduled round.
    pub fn max_degree(&self) -> usize {
        self.sets
            .iter()
            .map(|set| {
                let mut degree = vec![0usize; self.n_nodes];
                for e in set {
                    degree[e.a.index()] += 1;
                    degree[e.b.index()] += 1;
                }
                degree.into_iter().max().unwrap_or(0)
            })
            .max()
            .unwrap_or(0)
    }

    fn union_is_connected<'a>(&self, sets: impl Iterator<Item = &'a BTreeSet<Edge>>) -> bool {
        if self.n_nodes <= 1 {
            return true;
        }
        let mut parent: Vec<usize> = (0..self.n_nodes).collect();
        fn find(parent: &mut [usize], mut i: usize) -> usize {
            while parent[i] != i {
                parent[i] = parent[parent[i]];
                i = parent[i];
            }
            i
        }
        let mut components = self.n_nodes;
        for e in sets.flatten() {
            let (ra, rb) = (find(&mut parent, e.a.index()), find(&mut parent, e.b.index()));
            if ra != rb {
                parent[ra] = rb;
                components -= 1;
            }
        }
        components == 1
    }

    /// Checks that every window of `window` consecutive rounds has a
    /// connected edge union. Returns a description of the first failing
    /// window, if any.
    pub fn check_union_connectivity(&self, window: usize) -> Option<String> {
        let window = window.max(1);
        match self.mode {
            TopologyMode::Static => (!self.union_is_connected(self.sets.iter()))
                .then(|| "static topology is not connected".to_string()),
            TopologyMode::Periodic => {
                let len = self.sets.len();
                (0..len).find_map(|start| {
                    let sets = (start..start + window).map(|k| &self.sets[k % len]);
                    (!self.union_is_connected(sets)).then(|| {
                        format!("rounds {start}..{} do not form a connected union", start + window)
                    })
                })
            }
            TopologyMode::Scripted => {
                if self.sets.len() < window {
                    return (!self.union_is_connected(self.sets.iter()))
                        .then(|| "scripted rounds never form a connected union".to_string());
                }
                (0..=self.sets.len() - window).find_map(|start| {
                    let sets = self.sets[start..start + window].iter();
                    (!self.union_is_connected(sets)).then(|| {
                        format!("rounds {start}..{} do not form a connected union", start + window)
                    })
                })
            }
        }
    }
}

/// Topology section of a scenario file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TopologySpec {
    pub mode: TopologyMode,
    /// Edge list for static mode.
    #[serde(default)]
    pub edges: Vec<Edge>,
    /// Edge sets for periodic and scripted modes.
    #[serde(default)]
    pub rounds: Vec<Vec<Edge>>,
    /// Window length for the union-connectivity check.
    #[serde(default = "default_window")]
    pub connectivity_window: usize,
}

fn default_window() -> usize {
    1
}

impl TopologySpec {
    pub fn build(&self, n_nodes: usize) -> Result<TopologySchedule, TopologyError> {
        match self.mode {
            TopologyMode::Static => {
                let mut sets = vec![self.edges.clone()];
                sets.extend(self.rounds.iter().cloned());
                TopologySchedule::new(n_nodes, self.mode, sets)
            }
            _ => TopologySchedule::new(n_nodes, self.mode, self.rounds.clone()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn e(u: u32, v: u32) -> Edge {
        Edge::new(NodeId(u), NodeId(v))
    }

    #[test]
    fn ring_shape() {
        let ring = TopologySchedule::ring(4);
        assert_eq!(ring.edges_at(0).len(), 4);
        assert_eq!(ring.max_degree(), 2);
        assert_eq!(ring.neighbors_at(7, NodeId(0)), vec![NodeId(1), NodeId(3)]);
        assert!(ring.check_union_connectivity(1).is_none());
    }

    #[test]
    fn invalid_edges_rejected() {
        assert_eq!(
            TopologySchedule::fixed(3, vec![e(1, 1)]),
            Err(TopologyError::SelfLoop(NodeId(1)))
        );
        assert!(TopologySchedule::fixed(3, vec![e(0, 3)]).is_err());
        assert!(TopologySchedule::new(3, TopologyMode::Periodic, vec![]).is_err());
    }

    #[test]
    fn periodic_and_scripted_rounds() {
        let periodic =
            TopologySchedule::new(3, TopologyMode::Periodic, vec![vec![e(0, 1)], vec![e(1, 2)]])
                .unwrap();
        assert!(periodic.is_active(0, e(0, 1)));
        assert!(periodic.is_active(3, e(1, 2)));
        assert!(periodic.check_union_connectivity(1).is_some());
        assert!(periodic.check_union_connectivity(2).is_none());
        assert_eq!(periodic.max_degree(), 1);

        let scripted =
            TopologySchedule::new(3, TopologyMode::Scripted, vec![vec![e(0, 1)], vec![e(1, 2)]])
                .unwrap();
        assert!(scripted.is_active(1, e(1, 2)));
        assert!(scripted.edges_at(2).is_empty());
        assert!(scripted.check_union_connectivity(2).is_none());
    }

    #[test]
    fn empty_schedule_is_disconnected() {
        let empty = TopologySchedule::fixed(3, vec![]).unwrap();
        assert_eq!(empty.max_degree(), 0);
        assert!(empty.check_union_connectivity(1).is_some());
    }

    #[test]
    fn spec_parses_edge_pairs() {
        let spec: TopologySpec = toml::from_str(
            "mode = \"periodic\"\nrounds = [[[0, 1]], [[2, 1], [0, 2]]]\nconnectivity_window = 2\n",
        )
        .unwrap();
        let sched = spec.build(3).unwrap();
        assert_eq!(sched.edge_sets()[1].iter().next(), Some(&e(0, 2)));
        assert!(sched.is_active(1, e(1, 2)));
    }
}
