use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type NodeId = usize;
pub type EdgeId = usize;

/// A node with planar coordinates in domain units.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub id: NodeId,
    pub x: f64,
    pub y: f64,
    pub boundary: bool,
}

/// An undirected edge with length `length` and measure `measure`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub u: NodeId,
    pub v: NodeId,
    pub length: f64,
    pub measure: f64,
}

impl Edge {
    /// The endpoint opposite to `node`.
    pub fn other(&self, node: NodeId) -> NodeId {
        if self.u == node {
            self.v
        } else {
            self.u
        }
    }
}

/// Descriptor of the domain a graph was built from.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct GraphMeta {
    pub domain: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
}

/// Discrete metric measure space: a connected graph whose edges carry a
/// length and a measure, with a marked boundary node set.
///
/// Immutable after construction.
#[derive(Clone, Debug)]
pub struct MetricGraph {
    nodes: Vec<Node>,
    edges: Vec<Edge>,
    adjacency: Vec<Vec<(NodeId, EdgeId)>>,
    boundary: Vec<NodeId>,
    meta: GraphMeta,
}

impl MetricGraph {
    /// Validates the invariants and builds the adjacency index.
    pub fn new(nodes: Vec<Node>, edges: Vec<Edge>, meta: GraphMeta) -> Result<Self> {
        if nodes.is_empty() {
            return Err(Error::InvalidGraph("graph has no nodes".into()));
        }
        for (i, node) in nodes.iter().enumerate() {
            if node.id != i {
                return Err(Error::InvalidGraph(format!(
                    "node ids must be dense 0..n-1, found id {} at position {i}",
                    node.id
                )));
            }
            if !node.x.is_finite() || !node.y.is_finite() {
                return Err(Error::InvalidGraph(format!("node {i} has non-finite coordinates")));
            }
        }
        let n = nodes.len();
        let mut adjacency = vec![Vec::new(); n];
        for (id, e) in edges.iter().enumerate() {
            if e.u >= n || e.v >= n {
                return Err(Error::InvalidGraph(format!("edge {id} references a missing node")));
            }
            if e.u == e.v {
                return Err(Error::InvalidGraph(format!("edge {id} is a loop at node {}", e.u)));
            }
            if !(e.length.is_finite() && e.length > 0.0) {
                return Err(Error::InvalidGraph(format!(
                    "edge {id} has non-positive length {}",
                    e.length
                )));
            }
            if !(e.measure.is_finite() && e.measure > 0.0) {
                return Err(Error::InvalidGraph(format!(
                    "edge {id} has non-positive measure {}",
                    e.measure
                )));
            }
            adjacency[e.u].push((e.v, id));
            adjacency[e.v].push((e.u, id));
        }
        for adj in &mut adjacency {
            adj.sort_unstable();
        }

        // connectivity
        let mut seen = vec![false; n];
        let mut queue = VecDeque::from([0]);
        seen[0] = true;
        let mut count = 1;
        while let Some(x) = queue.pop_front() {
            for &(y, _) in &adjacency[x] {
                if !seen[y] {
                    seen[y] = true;
                    count += 1;
                    queue.push_back(y);
                }
            }
        }
        if count != n {
            return Err(Error::InvalidGraph(format!(
                "graph is disconnected: {count} of {n} nodes reachable from node 0"
            )));
        }

        let boundary = nodes.iter().filter(|v| v.boundary).map(|v| v.id).collect();
        Ok(Self {
            nodes,
            edges,
            adjacency,
            boundary,
            meta,
        })
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn node(&self, id: NodeId) -> &Node {
        &self.nodes[id]
    }

    pub fn edge(&self, id: EdgeId) -> &Edge {
        &self.edges[id]
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    /// Neighbors of `node` as `(neighbor, edge)` pairs sorted by neighbor id.
    pub fn neighbors(&self, node: NodeId) -> &[(NodeId, EdgeId)] {
        &self.adjacency[node]
    }

    /// Boundary node ids in increasing order.
    pub fn boundary_nodes(&self) -> &[NodeId] {
        &self.boundary
    }

    pub fn is_boundary(&self, node: NodeId) -> bool {
        self.nodes[node].boundary
    }

    pub fn meta(&self) -> &GraphMeta {
        &self.meta
    }

    /// Smallest edge id joining `u` and `v`, if any.
    pub fn edge_between(&self, u: NodeId, v: NodeId) -> Option<EdgeId> {
        self.adjacency
            .get(u)?
            .iter()
            .filter(|(w, _)| *w == v)
            .map(|&(_, e)| e)
            .min()
    }

    /// Total measure of the space.
    pub fn total_measure(&self) -> f64 {
        self.edges.iter().map(|e| e.measure).sum()
    }

    /// Midpoint of an edge in planar coordinates.
    pub fn midpoint(&self, edge: EdgeId) -> (f64, f64) {
        let e = &self.edges[edge];
        let (a, b) = (&self.nodes[e.u], &self.nodes[e.v]);
        (0.5 * (a.x + b.x), 0.5 * (a.y + b.y))
    }
}

/// A simple edge chain between two nodes.
///
/// Ordering and equality are structural (node sequence, then edge sequence),
/// which gives deterministic iteration order to curve measures.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Path {
    nodes: Vec<NodeId>,
    edges: Vec<EdgeId>,
}

impl Path {
    /// Builds a path from a node sequence, choosing the smallest edge id
    /// between consecutive nodes.
    pub fn from_nodes(graph: &MetricGraph, nodes: Vec<NodeId>) -> Result<Self> {
        let mut edges = Vec::with_capacity(nodes.len().saturating_sub(1));
        for w in nodes.windows(2) {
            let e = graph.edge_between(w[0], w[1]).ok_or_else(|| {
                Error::InvalidPath(format!("nodes {} and {} are not adjacent", w[0], w[1]))
            })?;
            edges.push(e);
        }
        Self::checked(graph, nodes, edges)
    }

    /// Builds a path from explicit node and edge sequences.
    pub fn from_parts(graph: &MetricGraph, nodes: Vec<NodeId>, edges: Vec<EdgeId>) -> Result<Self> {
        Self::checked(graph, nodes, edges)
    }

    fn checked(graph: &MetricGraph, nodes: Vec<NodeId>, edges: Vec<EdgeId>) -> Result<Self> {
        if nodes.len() < 2 {
            return Err(Error::InvalidPath("a path needs at least one edge".into()));
        }
        if edges.len() + 1 != nodes.len() {
            return Err(Error::InvalidPath("edge count must be node count minus one".into()));
        }
        let n = graph.node_count();
        let mut seen = vec![false; n];
        for &v in &nodes {
            if v >= n {
                return Err(Error::InvalidPath(format!("node {v} does not exist")));
            }
            if seen[v] {
                return Err(Error::InvalidPath(format!("node {v} repeats; paths must be simple")));
            }
            seen[v] = true;
        }
        for (i, &e) in edges.iter().enumerate() {
            let edge = graph
                .edges()
                .get(e)
                .ok_or_else(|| Error::InvalidPath(format!("edge {e} does not exist")))?;
            let (a, b) = (nodes[i], nodes[i + 1]);
            if !((edge.u == a && edge.v == b) || (edge.u == b && edge.v == a)) {
                return Err(Error::InvalidPath(format!("edge {e} does not join {a} and {b}")));
            }
        }
        Ok(Self { nodes, edges })
    }

    /// Trusted constructor for chains produced by shortest-path trees.
    pub(crate) fn from_chain_unchecked(nodes: Vec<NodeId>, edges: Vec<EdgeId>) -> Self {
        debug_assert_eq!(nodes.len(), edges.len() + 1);
        Self { nodes, edges }
    }

    pub fn nodes(&self) -> &[NodeId] {
        &self.nodes
    }

    pub fn edges(&self) -> &[EdgeId] {
        &self.edges
    }

    pub fn source(&self) -> NodeId {
        self.nodes[0]
    }

    pub fn target(&self) -> NodeId {
        self.nodes[self.nodes.len() - 1]
    }

    pub fn len(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }

    /// Sum of member edge lengths.
    pub fn length(&self, graph: &MetricGraph) -> f64 {
        self.edges.iter().map(|&e| graph.edge(e).length).sum()
    }

    /// Orientation with `source() < target()`.
    pub fn canonical(mut self) -> Self {
        if self.source() > self.target() {
            self.nodes.reverse();
            self.edges.reverse();
        }
        self
    }

    /// The subpath made of the first `edges` edges.
    pub fn prefix(&self, edges: usize) -> Self {
        assert!(edges >= 1 && edges <= self.edges.len());
        Self {
            nodes: self.nodes[..=edges].to_vec(),
            edges: self.edges[..edges].to_vec(),
        }
    }

    /// Whether both endpoints are boundary nodes of `graph`.
    pub fn joins_boundary(&self, graph: &MetricGraph) -> bool {
        graph.is_boundary(self.source()) && graph.is_boundary(self.target())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn path3() -> MetricGraph {
        let nodes = (0..3)
            .map(|i| Node {
                id: i,
                x: i as f64,
                y: 0.0,
                boundary: i != 1,
            })
            .collect();
        let edges = vec![
            Edge { u: 0, v: 1, length: 1.0, measure: 1.0 },
            Edge { u: 1, v: 2, length: 1.0, measure: 1.0 },
        ];
        MetricGraph::new(nodes, edges, GraphMeta::default()).unwrap()
    }

    #[test]
    fn rejects_disconnected_and_degenerate_graphs() {
        let nodes: Vec<Node> = (0..3)
            .map(|i| Node { id: i, x: 0.0, y: 0.0, boundary: true })
            .collect();
        let one_edge = vec![Edge { u: 0, v: 1, length: 1.0, measure: 1.0 }];
        assert!(matches!(
            MetricGraph::new(nodes.clone(), one_edge, GraphMeta::default()),
            Err(Error::InvalidGraph(_))
        ));
        let zero_len = vec![
            Edge { u: 0, v: 1, length: 0.0, measure: 1.0 },
            Edge { u: 1, v: 2, length: 1.0, measure: 1.0 },
        ];
        assert!(MetricGraph::new(nodes.clone(), zero_len, GraphMeta::default()).is_err());
        let loop_edge = vec![
            Edge { u: 0, v: 0, length: 1.0, measure: 1.0 },
            Edge { u: 1, v: 2, length: 1.0, measure: 1.0 },
        ];
        assert!(MetricGraph::new(nodes, loop_edge, GraphMeta::default()).is_err());
    }

    #[test]
    fn path_validation() {
        let g = path3();
        let p = Path::from_nodes(&g, vec![2, 1, 0]).unwrap();
        assert_eq!(p.edges(), &[1, 0]);
        assert_eq!(p.length(&g), 2.0);
        let c = p.canonical();
        assert_eq!(c.nodes(), &[0, 1, 2]);
        assert_eq!(c.edges(), &[0, 1]);
        assert!(Path::from_nodes(&g, vec![0, 2]).is_err());
        assert!(Path::from_nodes(&g, vec![0, 1, 0]).is_err());
        assert!(Path::from_nodes(&g, vec![0]).is_err());
        assert!(Path::from_parts(&g, vec![0, 1], vec![1]).is_err());
    }
}
