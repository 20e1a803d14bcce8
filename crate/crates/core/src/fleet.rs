//! Data-center fleet graph and precomputed migration paths.
//!
//! DC indices are zero-based inside the library. Scenario files and error
//! messages use one-based ids.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FleetError {
    #[error("fleet must contain at least one data center")]
    Empty,
    #[error("edge {edge} references data center {dc}, valid ids are 1..={dc_count}")]
    InvalidEdgeEndpoint { edge: usize, dc: usize, dc_count: usize },
    #[error("edge {edge} is a self-loop on data center {dc}")]
    SelfLoop { edge: usize, dc: usize },
    #[error("edge {edge} has negative or non-finite price {price}")]
    NegativePrice { edge: usize, price: f64 },
    #[error("data center {dc} has negative or non-finite physical capacity {capacity}")]
    NegativeCapacity { dc: usize, capacity: f64 },
    #[error("expected {expected} physical capacities, found {found}")]
    CapacityCount { expected: usize, found: usize },
    #[error("fleet graph is disconnected: data center {unreachable} is unreachable from data center 1")]
    DisconnectedGraph { unreachable: usize },
}

/// Undirected fiber link between two DCs with a per-unit-volume price.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub a: usize,
    pub b: usize,
    pub price: f64,
}

impl Edge {
    pub fn other(&self, node: usize) -> usize {
        if node == self.a {
            self.b
        } else {
            self.a
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DataCenterFleet {
    pub dc_count: usize,
    pub edges: Vec<Edge>,
    /// Physical capacity `x_d^max` per DC and time step.
    pub physical_capacity: Vec<f64>,
}

impl DataCenterFleet {
    pub fn new(
        dc_count: usize,
        edges: Vec<Edge>,
        physical_capacity: Vec<f64>,
    ) -> Result<Self, FleetError> {
        let fleet = DataCenterFleet {
            dc_count,
            edges,
            physical_capacity,
        };
        validate_fleet(&fleet)?;
        Ok(fleet)
    }

    fn adjacency(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.dc_count];
        for (k, e) in self.edges.iter().enumerate() {
            adj[e.a].push(k);
            adj[e.b].push(k);
        }
        adj
    }
}

/// Checks the fleet invariants and reports the first violation found.
pub fn validate_fleet(fleet: &DataCenterFleet) -> Result<(), FleetError> {
    let n = fleet.dc_count;
    if n == 0 {
        return Err(FleetError::Empty);
    }
    if fleet.physical_capacity.len() != n {
        return Err(FleetError::CapacityCount {
            expected: n,
            found: fleet.physical_capacity.len(),
        });
    }
    for (d, &c) in fleet.physical_capacity.iter().enumerate() {
        if !(c.is_finite() && c >= 0.0) {
            return Err(FleetError::NegativeCapacity {
                dc: d + 1,
                capacity: c,
            });
        }
    }
    for (k, e) in fleet.edges.iter().enumerate() {
        for dc in [e.a, e.b] {
            if dc >= n {
                return Err(FleetError::InvalidEdgeEndpoint {
                    edge: k + 1,
                    dc: dc + 1,
                    dc_count: n,
                });
            }
        }
        if e.a == e.b {
            return Err(FleetError::SelfLoop {
                edge: k + 1,
                dc: e.a + 1,
            });
        }
        if !(e.price.is_finite() && e.price >= 0.0) {
            return Err(FleetError::NegativePrice {
                edge: k + 1,
                price: e.price,
            });
        }
    }

    let adj = fleet.adjacency();
    let mut seen = vec![false; n];
    let mut stack = vec![0usize];
    seen[0] = true;
    while let Some(u) = stack.pop() {
        for &k in &adj[u] {
            let v = fleet.edges[k].other(u);
            if !seen[v] {
                seen[v] = true;
                stack.push(v);
            }
        }
    }
    if let Some(d) = seen.iter().position(|s| !s) {
        return Err(FleetError::DisconnectedGraph { unreachable: d + 1 });
    }
    Ok(())
}

/// A frozen route between two DCs.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MigrationPath {
    pub source: usize,
    pub target: usize,
    /// Indices into `DataCenterFleet::edges`, in travel order.
    pub edges: Vec<usize>,
    /// Visited nodes including both endpoints.
    pub nodes: Vec<usize>,
    pub base_price: f64,
}

impl MigrationPath {
    fn trivial(dc: usize) -> Self {
        MigrationPath {
            source: dc,
            target: dc,
            edges: Vec::new(),
            nodes: vec![dc],
            base_price: 0.0,
        }
    }
}

#[derive(Debug, Clone)]
struct Label {
    price: f64,
    nodes: Vec<usize>,
    edges: Vec<usize>,
}

impl Label {
    // Cheapest first, then fewest edges, then lexicographically smallest node sequence.
    fn cmp_key(&self, other: &Label) -> Ordering {
        self.price
            .total_cmp(&other.price)
            .then(self.edges.len().cmp(&other.edges.len()))
            .then_with(|| self.nodes.cmp(&other.nodes))
    }
}

/// Minimum-price paths from `source` to every DC with deterministic tie-breaking.
///
/// Dense Dijkstra over `(price, hop count, node sequence)`; this key is
/// monotone under path extension so label-setting stays exact.
pub fn shortest_paths_from(fleet: &DataCenterFleet, source: usize) -> Vec<MigrationPath> {
    let n = fleet.dc_count;
    let adj = fleet.adjacency();
    let mut best: Vec<Option<Label>> = vec![None; n];
    let mut done = vec![false; n];
    best[source] = Some(Label {
        price: 0.0,
        nodes: vec![source],
        edges: Vec::new(),
    });

    for _ in 0..n {
        let mut pick: Option<usize> = None;
        for v in 0..n {
            if done[v] {
                continue;
            }
            if let Some(lv) = &best[v] {
                pick = match pick {
                    Some(u) if best[u].as_ref().unwrap().cmp_key(lv) != Ordering::Greater => Some(u),
                    _ => Some(v),
                };
            }
        }
        let Some(u) = pick else { break };
        done[u] = true;
        let lu = best[u].clone().unwrap();
        for &k in &adj[u] {
            let v = fleet.edges[k].other(u);
            if done[v] {
                continue;
            }
            let mut nodes = lu.nodes.clone();
            nodes.push(v);
            let mut edges = lu.edges.clone();
            edges.push(k);
            let cand = Label {
                price: lu.price + fleet.edges[k].price,
                nodes,
                edges,
            };
            let better = match &best[v] {
                None => true,
                Some(cur) => cand.cmp_key(cur) == Ordering::Less,
            };
            if better {
                best[v] = Some(cand);
            }
        }
    }

    best.into_iter()
        .enumerate()
        .map(|(target, label)| {
            if target == source {
                return MigrationPath::trivial(source);
            }
            let label = label.expect("fleet graph must be connected");
            // Re-sum along the path so base_price is exactly the edge-price sum.
            let base_price = label.edges.iter().map(|&k| fleet.edges[k].price).sum();
            MigrationPath {
                source,
                target,
                edges: label.edges,
                nodes: label.nodes,
                base_price,
            }
        })
        .collect()
}

/// All-pairs path table, indexed `[source][target]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PathTable {
    paths: Vec<Vec<MigrationPath>>,
}

impl PathTable {
    pub fn new(fleet: &DataCenterFleet) -> Self {
        let paths = (0..fleet.dc_count)
            .map(|s| shortest_paths_from(fleet, s))
            .collect();
        PathTable { paths }
    }

    pub fn path(&self, source: usize, target: usize) -> &MigrationPath {
        &self.paths[source][target]
    }

    pub fn price(&self, source: usize, target: usize) -> f64 {
        self.paths[source][target].base_price
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn edge(a: usize, b: usize, price: f64) -> Edge {
        Edge {
            a: a - 1,
            b: b - 1,
            price,
        }
    }

    #[test]
    fn minimal_connected_graph_is_valid() {
        assert!(DataCenterFleet::new(2, vec![edge(1, 2, 1.0)], vec![1.0; 2]).is_ok());
    }

    #[test]
    fn zero_prices_are_allowed() {
        let f = DataCenterFleet::new(3, vec![edge(1, 2, 0.0), edge(1, 3, 0.0)], vec![1.0; 3]);
        assert!(f.is_ok());
    }

    #[test]
    fn unreachable_node_is_reported() {
        let err = DataCenterFleet::new(3, vec![edge(1, 2, 1.0)], vec![1.0; 3]).unwrap_err();
        assert_eq!(err, FleetError::DisconnectedGraph { unreachable: 3 });
    }

    #[test]
    fn bad_edges_are_rejected() {
        let bad_end = DataCenterFleet::new(2, vec![Edge { a: 0, b: 5, price: 1.0 }], vec![1.0; 2]);
        assert!(matches!(bad_end, Err(FleetError::InvalidEdgeEndpoint { dc: 6, .. })));
        let neg = DataCenterFleet::new(2, vec![edge(1, 2, -0.5)], vec![1.0; 2]);
        assert!(matches!(neg, Err(FleetError::NegativePrice { .. })));
        let looped = DataCenterFleet::new(2, vec![edge(1, 2, 1.0), edge(2, 2, 1.0)], vec![1.0; 2]);
        assert!(matches!(looped, Err(FleetError::SelfLoop { dc: 2, .. })));
    }

    #[test]
    fn single_edge_path() {
        let f = DataCenterFleet::new(2, vec![edge(1, 2, 3.0)], vec![1.0; 2]).unwrap();
        let p = shortest_paths_from(&f, 0);
        assert_eq!(p[1].base_price, 3.0);
        assert_eq!(p[1].edges, vec![0]);
    }

    #[test]
    fn triangle_prefers_two_cheap_hops() {
        let f = DataCenterFleet::new(
            3,
            vec![edge(1, 2, 5.0), edge(1, 3, 1.0), edge(3, 2, 1.0)],
            vec![1.0; 3],
        )
        .unwrap();
        let p = shortest_paths_from(&f, 0);
        assert_eq!(p[1].edges, vec![1, 2]);
        assert_eq!(p[1].nodes, vec![0, 2, 1]);
        assert_eq!(p[1].base_price, 2.0);
    }

    #[test]
    fn self_path_is_empty() {
        let f = DataCenterFleet::new(2, vec![edge(1, 2, 3.0)], vec![1.0; 2]).unwrap();
        let p = shortest_paths_from(&f, 0);
        assert!(p[0].edges.is_empty());
        assert_eq!(p[0].base_price, 0.0);
    }

    #[test]
    fn ties_prefer_fewer_edges_then_lexicographic_nodes() {
        // 1-2 direct at price 2 ties with 1-3-2 at 1+1: direct wins on hop count.
        let f = DataCenterFleet::new(
            3,
            vec![edge(1, 3, 1.0), edge(3, 2, 1.0), edge(1, 2, 2.0)],
            vec![1.0; 3],
        )
        .unwrap();
        assert_eq!(shortest_paths_from(&f, 0)[1].nodes, vec![0, 1]);

        // Square with two equal two-hop routes 1-2-4 and 1-3-4: lower node sequence wins.
        let f = DataCenterFleet::new(
            4,
            vec![edge(1, 3, 1.0), edge(3, 4, 1.0), edge(1, 2, 1.0), edge(2, 4, 1.0)],
            vec![1.0; 4],
        )
        .unwrap();
        assert_eq!(shortest_paths_from(&f, 0)[3].nodes, vec![0, 1, 3]);
    }
}
