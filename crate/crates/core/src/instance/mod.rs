//! Routing problem instances: parsing, validation, subsampling and synthesis.
//!
//! Instances are immutable once constructed. Node 0 is always the depot,
//! regardless of how the source file orders its rows; customer ids are
//! 1..=n in file order.

mod parse;
mod synth;

pub use parse::{parse_cvrp, parse_solomon, write_cvrp, write_solomon};
pub use synth::{synthetic_cvrp, synthetic_vrptw};

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::path::Path;
use thiserror::Error;

/// Which problem family an instance belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProblemKind {
    Cvrp,
    Vrptw,
}

impl std::fmt::Display for ProblemKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ProblemKind::Cvrp => write!(f, "cvrp"),
            ProblemKind::Vrptw => write!(f, "vrptw"),
        }
    }
}

/// A depot or customer node. For CVRP the window is `[0, +inf)` and the
/// service time is 0.
#[derive(Debug, Clone, PartialEq)]
pub struct Node {
    pub id: usize,
    pub x: f64,
    pub y: f64,
    pub demand: f64,
    pub ready: f64,
    pub due: f64,
    pub service: f64,
}

impl Node {
    /// Window width `l_i - e_i`; infinite for CVRP nodes.
    pub fn window_width(&self) -> f64 {
        self.due - self.ready
    }
}

/// An immutable routing problem: nodes (depot at index 0), vehicle capacity
/// and, for VRPTW, the depot time horizon.
#[derive(Debug, Clone)]
pub struct Instance {
    pub name: String,
    pub kind: ProblemKind,
    pub capacity: f64,
    pub nodes: Vec<Node>,
    /// Vehicle-count header from Solomon files; informational, never enforced.
    pub vehicles: Option<usize>,
    dist: Vec<f64>,
}

#[derive(Debug, Error, PartialEq)]
pub enum InstanceError {
    #[error("missing section or keyword: {0}")]
    MissingSection(String),
    #[error("missing header: {0}")]
    MissingHeader(String),
    #[error("{section} has {found} rows, DIMENSION says {expected}")]
    DimensionMismatch {
        section: String,
        expected: usize,
        found: usize,
    },
    #[error("non-numeric field {field:?} on line {line}")]
    NonNumericField { field: String, line: usize },
    #[error("customer row has {found} fields, expected {expected}")]
    RowArityMismatch { expected: usize, found: usize },
    #[error("customer {customer} has inverted time window [{ready}, {due}]")]
    InvertedTimeWindow {
        customer: usize,
        ready: f64,
        due: f64,
    },
    #[error("customer {customer} window [{ready}, {due}] outside depot horizon [{start}, {end}]")]
    WindowOutsideHorizon {
        customer: usize,
        ready: f64,
        due: f64,
        start: f64,
        end: f64,
    },
    #[error("customer {customer} demand {demand} exceeds capacity {capacity}")]
    DemandExceedsCapacity {
        customer: usize,
        demand: f64,
        capacity: f64,
    },
    #[error("invalid depot row: {0}")]
    InvalidDepot(String),
    #[error("sample size {m} outside 1..={n}")]
    SampleTooLarge { m: usize, n: usize },
    #[error("instance has no customers")]
    NoCustomers,
    #[error("capacity must be positive, got {0}")]
    NonpositiveCapacity(f64),
}

impl Instance {
    /// Validates the invariants shared by every construction path and builds
    /// the distance matrix. `nodes[0]` must already be the depot.
    pub fn new(
        name: String,
        kind: ProblemKind,
        capacity: f64,
        nodes: Vec<Node>,
        vehicles: Option<usize>,
    ) -> Result<Self, InstanceError> {
        if nodes.len() < 2 {
            return Err(InstanceError::NoCustomers);
        }
        if !(capacity > 0.0) {
            return Err(InstanceError::NonpositiveCapacity(capacity));
        }
        let depot = &nodes[0];
        if depot.demand != 0.0 {
            return Err(InstanceError::InvalidDepot(format!(
                "depot demand must be 0, got {}",
                depot.demand
            )));
        }
        for (i, node) in nodes.iter().enumerate() {
            if !(node.x.is_finite() && node.y.is_finite()) {
                return Err(InstanceError::NonNumericField {
                    field: format!("{},{}", node.x, node.y),
                    line: i,
                });
            }
            if node.demand < 0.0 {
                return Err(InstanceError::NonNumericField {
                    field: format!("{}", node.demand),
                    line: i,
                });
            }
            if i > 0 && node.demand > capacity {
                return Err(InstanceError::DemandExceedsCapacity {
                    customer: i,
                    demand: node.demand,
                    capacity,
                });
            }
            if node.ready > node.due {
                return Err(InstanceError::InvertedTimeWindow {
                    customer: i,
                    ready: node.ready,
                    due: node.due,
                });
            }
        }
        if kind == ProblemKind::Vrptw {
            let (start, end) = (depot.ready, depot.due);
            if !(end - start > 0.0) || !end.is_finite() {
                return Err(InstanceError::InvalidDepot(format!(
                    "depot horizon [{start}, {end}] must have positive finite length"
                )));
            }
            for (i, node) in nodes.iter().enumerate().skip(1) {
                if node.ready < start || node.due > end {
                    return Err(InstanceError::WindowOutsideHorizon {
                        customer: i,
                        ready: node.ready,
                        due: node.due,
                        start,
                        end,
                    });
                }
            }
        }
        let dist = build_distance_matrix(&nodes);
        Ok(Instance {
            name,
            kind,
            capacity,
            nodes,
            vehicles,
            dist,
        })
    }

    /// Number of customers (nodes minus the depot).
    pub fn n(&self) -> usize {
        self.nodes.len() - 1
    }

    /// Euclidean distance between node ids, from the precomputed matrix.
    #[inline]
    pub fn dist(&self, a: usize, b: usize) -> f64 {
        self.dist[a * self.nodes.len() + b]
    }

    /// Depot earliest time `S`.
    pub fn horizon_start(&self) -> f64 {
        self.nodes[0].ready
    }

    /// Depot latest time `E`.
    pub fn horizon_end(&self) -> f64 {
        self.nodes[0].due
    }

    /// Time horizon `H = E - S`; infinite for CVRP.
    pub fn horizon(&self) -> f64 {
        self.horizon_end() - self.horizon_start()
    }

    /// Canonical JSON dump (name, kind, capacity, horizon, node array) used
    /// for harness provenance.
    pub fn canonical_json(&self) -> String {
        let dump = InstanceDump::from(self);
        serde_json::to_string_pretty(&dump).expect("instance serializes")
    }
}

fn build_distance_matrix(nodes: &[Node]) -> Vec<f64> {
    let n = nodes.len();
    let mut dist = vec![0.0; n * n];
    for i in 0..n {
        for j in (i + 1)..n {
            let d = ((nodes[i].x - nodes[j].x).powi(2) + (nodes[i].y - nodes[j].y).powi(2)).sqrt();
            dist[i * n + j] = d;
            dist[j * n + i] = d;
        }
    }
    dist
}

/// Serializable image of an [`Instance`] for the canonical JSON dump.
#[derive(Debug, Serialize, Deserialize)]
pub struct InstanceDump {
    pub name: String,
    pub kind: ProblemKind,
    pub capacity: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub horizon: Option<(f64, f64)>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub vehicles: Option<usize>,
    pub nodes: Vec<NodeDump>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct NodeDump {
    pub id: usize,
    pub x: f64,
    pub y: f64,
    pub demand: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ready: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub due: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub service: Option<f64>,
}

impl From<&Instance> for InstanceDump {
    fn from(inst: &Instance) -> Self {
        let vrptw = inst.kind == ProblemKind::Vrptw;
        InstanceDump {
            name: inst.name.clone(),
            kind: inst.kind,
            capacity: inst.capacity,
            horizon: vrptw.then(|| (inst.horizon_start(), inst.horizon_end())),
            vehicles: inst.vehicles,
            nodes: inst
                .nodes
                .iter()
                .map(|n| NodeDump {
                    id: n.id,
                    x: n.x,
                    y: n.y,
                    demand: n.demand,
                    ready: vrptw.then_some(n.ready),
                    due: vrptw.then_some(n.due),
                    service: vrptw.then_some(n.service),
                })
                .collect(),
        }
    }
}

/// Draws `m` customers uniformly without replacement (seeded) and returns a
/// new instance keeping the depot, capacity and horizon. Customer relative
/// order is preserved, so the result is deterministic in `(inst, m, seed)`.
pub fn subsample_instance(inst: &Instance, m: usize, seed: u64) -> Result<Instance, InstanceError> {
    let n = inst.n();
    if m == 0 || m > n {
        return Err(InstanceError::SampleTooLarge { m, n });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked = sample(&mut rng, n, m).into_vec();
    picked.sort_unstable();

    let mut nodes = Vec::with_capacity(m + 1);
    nodes.push(inst.nodes[0].clone());
    for (new_id, idx) in picked.iter().enumerate() {
        let mut node = inst.nodes[idx + 1].clone();
        node.id = new_id + 1;
        nodes.push(node);
    }
    Instance::new(
        format!("{}-sub{}-s{}", inst.name, m, seed),
        inst.kind,
        inst.capacity,
        nodes,
        inst.vehicles,
    )
}

/// Reads an instance file, dispatching on `kind`.
pub fn read_instance(path: &Path, kind: ProblemKind) -> Result<Instance, InstanceError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| InstanceError::MissingSection(format!("{}: {e}", path.display())))?;
    match kind {
        ProblemKind::Cvrp => parse_cvrp(&text),
        ProblemKind::Vrptw => parse_solomon(&text),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy_cvrp() -> Instance {
        let text = "NAME : toy\nTYPE : CVRP\nDIMENSION : 3\nCAPACITY : 10\n\
                    NODE_COORD_SECTION\n1 0 0\n2 0 3\n3 4 0\n\
                    DEMAND_SECTION\n1 0\n2 5\n3 5\nDEPOT_SECTION\n1\n-1\nEOF\n";
        parse_cvrp(text).unwrap()
    }

    #[test]
    fn distance_matrix_is_euclidean() {
        let inst = toy_cvrp();
        assert_eq!(inst.dist(0, 1), 3.0);
        assert_eq!(inst.dist(0, 2), 4.0);
        assert_eq!(inst.dist(1, 2), 5.0);
        assert_eq!(inst.dist(2, 1), 5.0);
    }

    #[test]
    fn subsample_full_keeps_customer_set() {
        let inst = toy_cvrp();
        let sub = subsample_instance(&inst, 2, 3).unwrap();
        assert_eq!(sub.n(), 2);
        let coords: Vec<(f64, f64)> = sub.nodes[1..].iter().map(|n| (n.x, n.y)).collect();
        assert_eq!(coords, vec![(0.0, 3.0), (4.0, 0.0)]);
    }

    #[test]
    fn subsample_is_deterministic_and_seed_sensitive() {
        let inst = synthetic_vrptw(40, 11, true);
        let a = subsample_instance(&inst, 5, 7).unwrap();
        let b = subsample_instance(&inst, 5, 7).unwrap();
        let ids =
            |i: &Instance| -> Vec<(f64, f64)> { i.nodes[1..].iter().map(|n| (n.x, n.y)).collect() };
        assert_eq!(ids(&a), ids(&b));
        // different seeds should pick a different set with overwhelming probability
        let c = subsample_instance(&inst, 5, 8).unwrap();
        assert_ne!(ids(&a), ids(&c));
    }

    #[test]
    fn subsample_rejects_bad_sizes() {
        let inst = toy_cvrp();
        assert!(matches!(
            subsample_instance(&inst, 0, 0),
            Err(InstanceError::SampleTooLarge { .. })
        ));
        assert!(matches!(
            subsample_instance(&inst, 3, 0),
            Err(InstanceError::SampleTooLarge { .. })
        ));
    }

    #[test]
    fn subsample_preserves_relative_order() {
        let inst = synthetic_cvrp(30, 5);
        let sub = subsample_instance(&inst, 10, 2).unwrap();
        // original order is recoverable by coordinates: each picked customer
        // appears in the same relative order as in the source instance
        let mut last = 0usize;
        for node in &sub.nodes[1..] {
            let orig = inst.nodes[1..]
                .iter()
                .position(|n| n.x == node.x && n.y == node.y && n.demand == node.demand)
                .unwrap();
            assert!(orig >= last);
            last = orig;
        }
    }

    #[test]
    fn canonical_json_roundtrips_through_serde() {
        let inst = synthetic_vrptw(12, 3, false);
        let json = inst.canonical_json();
        let dump: InstanceDump = serde_json::from_str(&json).unwrap();
        assert_eq!(dump.nodes.len(), 13);
        assert_eq!(dump.kind, ProblemKind::Vrptw);
        assert!(dump.horizon.is_some());
    }

    #[test]
    fn vrptw_windows_fit_horizon() {
        let inst = synthetic_vrptw(25, 9, true);
        let (s, e) = (inst.horizon_start(), inst.horizon_end());
        for node in &inst.nodes[1..] {
            assert!(s <= node.ready && node.ready <= node.due && node.due <= e);
        }
    }
}
