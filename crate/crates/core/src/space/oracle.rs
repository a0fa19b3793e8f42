//! Shortest-path separation for boundary-to-boundary curve constraints.
//!
//! Searches use the lexicographic key `(sum rho(e) l(e), sum l(e))`, so
//! among paths with equal integral the geometrically shorter one wins;
//! remaining ties go to the smaller predecessor node id.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::space::field::DensityField;
use crate::space::graph::{EdgeId, MetricGraph, NodeId, Path};
use crate::space::integral_unchecked;

/// Bounding function on unordered boundary node pairs.
pub type PairBound<'a> = dyn Fn(NodeId, NodeId) -> f64 + Sync + 'a;

/// A boundary-to-boundary path together with its constraint slack
/// `integral - bound`.
#[derive(Clone, Debug, PartialEq)]
pub struct Violation {
    pub path: Path,
    pub slack: f64,
    pub bound: f64,
}

#[derive(Clone, Copy, Debug)]
struct Item {
    weight: f64,
    length: f64,
    node: NodeId,
}

impl Item {
    fn key_cmp(&self, other: &Self) -> Ordering {
        self.weight
            .total_cmp(&other.weight)
            .then(self.length.total_cmp(&other.length))
    }
}

impl PartialEq for Item {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Item {}

impl PartialOrd for Item {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Item {
    // reversed: BinaryHeap is a max-heap
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .key_cmp(self)
            .then_with(|| other.node.cmp(&self.node))
    }
}

/// Result of a (multi-source) shortest-path search.
#[derive(Clone, Debug)]
pub struct ShortestPathTree {
    pub weight: Vec<f64>,
    pub length: Vec<f64>,
    pred: Vec<Option<(NodeId, EdgeId)>>,
}

impl ShortestPathTree {
    /// Chain from the root of `target`'s search tree to `target`, or `None`
    /// for roots and unreachable nodes.
    pub fn path_to(&self, target: NodeId) -> Option<Path> {
        self.pred[target]?;
        let mut nodes = vec![target];
        let mut edges = Vec::new();
        let mut cur = target;
        while let Some((prev, e)) = self.pred[cur] {
            nodes.push(prev);
            edges.push(e);
            cur = prev;
        }
        nodes.reverse();
        edges.reverse();
        Some(Path::from_chain_unchecked(nodes, edges))
    }
}

/// Shortest paths from `source` under nonnegative `edge_weight`.
pub fn shortest_path_tree(graph: &MetricGraph, edge_weight: &[f64], source: NodeId) -> ShortestPathTree {
    search(graph, edge_weight, &[(source, 0.0)])
}

/// Multi-source search where each root starts at its own offset.
pub(crate) fn search(graph: &MetricGraph, edge_weight: &[f64], roots: &[(NodeId, f64)]) -> ShortestPathTree {
    search_until(graph, edge_weight, roots, &mut |_, _| false)
}

/// Search that stops as soon as `stop(node, weight)` returns true for a
/// freshly settled node. Labels of settled nodes are final.
fn search_until(
    graph: &MetricGraph,
    edge_weight: &[f64],
    roots: &[(NodeId, f64)],
    stop: &mut dyn FnMut(NodeId, f64) -> bool,
) -> ShortestPathTree {
    let n = graph.node_count();
    let mut weight = vec![f64::INFINITY; n];
    let mut length = vec![f64::INFINITY; n];
    let mut pred: Vec<Option<(NodeId, EdgeId)>> = vec![None; n];
    let mut done = vec![false; n];
    let mut heap = BinaryHeap::new();
    for &(r, offset) in roots {
        if offset < weight[r] {
            weight[r] = offset;
            length[r] = 0.0;
            heap.push(Item { weight: offset, length: 0.0, node: r });
        }
    }
    while let Some(item) = heap.pop() {
        let x = item.node;
        if done[x] || item.weight != weight[x] || item.length != length[x] {
            continue;
        }
        done[x] = true;
        if stop(x, weight[x]) {
            break;
        }
        for &(y, e) in graph.neighbors(x) {
            if done[y] {
                continue;
            }
            let cand = Item {
                weight: weight[x] + edge_weight[e],
                length: length[x] + graph.edge(e).length,
                node: y,
            };
            let cur = Item { weight: weight[y], length: length[y], node: y };
            let better = match cand.key_cmp(&cur) {
                Ordering::Less => true,
                Ordering::Equal => pred[y].map_or(true, |p| (x, e) < p),
                Ordering::Greater => false,
            };
            if better {
                weight[y] = cand.weight;
                length[y] = cand.length;
                pred[y] = Some((x, e));
                heap.push(cand);
            }
        }
    }
    ShortestPathTree { weight, length, pred }
}

pub(crate) fn edge_weights(graph: &MetricGraph, rho: &DensityField) -> Vec<f64> {
    rho.values()
        .iter()
        .zip(graph.edges())
        .map(|(r, e)| r * e.length)
        .collect()
}

/// For every boundary source `s` (ascending), the most violated pair
/// `(s, t)` with `t > s`, provided its slack is below `threshold`.
///
/// Pairs with zero bound are skipped. Ties go to the smaller target.
pub fn per_source_violations(
    graph: &MetricGraph,
    rho: &DensityField,
    bound: &PairBound<'_>,
    threshold: f64,
) -> Result<Vec<Violation>> {
    violations(graph, rho, bound, threshold, 1)
}

/// Like [`per_source_violations`] but keeps up to `per_source` of the most
/// violated targets of every source.
pub(crate) fn violations(
    graph: &MetricGraph,
    rho: &DensityField,
    bound: &PairBound<'_>,
    threshold: f64,
    per_source: usize,
) -> Result<Vec<Violation>> {
    rho.check_graph(graph)?;
    let weights = edge_weights(graph, rho);
    let boundary = graph.boundary_nodes();
    let found: Vec<Result<Vec<Violation>>> = boundary
        .par_iter()
        .enumerate()
        .map(|(i, &s)| {
            from_source(graph, rho, &weights, bound, s, &boundary[i + 1..], threshold, per_source)
        })
        .collect();
    let mut out = Vec::new();
    for item in found {
        out.extend(item?);
    }
    Ok(out)
}

#[allow(clippy::too_many_arguments)]
fn from_source(
    graph: &MetricGraph,
    rho: &DensityField,
    weights: &[f64],
    bound: &PairBound<'_>,
    source: NodeId,
    targets: &[NodeId],
    threshold: f64,
    keep: usize,
) -> Result<Vec<Violation>> {
    let mut bounds = Vec::with_capacity(targets.len());
    for &t in targets {
        let b = bound(source, t);
        if b.is_nan() || b < 0.0 {
            return Err(Error::NegativeBound {
                source_node: source,
                target_node: t,
                bound: b,
            });
        }
        bounds.push(b);
    }
    if bounds.iter().all(|&b| b == 0.0) {
        return Ok(Vec::new());
    }
    // a target settled later has slack at least `w - b`, so the search
    // stops once that bound clears the threshold or the current top `keep`
    let mut order: Vec<(f64, NodeId)> = targets
        .iter()
        .zip(&bounds)
        .filter(|&(_, &b)| b > 0.0)
        .map(|(&t, &b)| (b, t))
        .collect();
    order.sort_by(|x, y| y.0.total_cmp(&x.0).then(x.1.cmp(&y.1)));
    let mut bound_of = vec![f64::NAN; graph.node_count()];
    for &(b, t) in &order {
        bound_of[t] = b;
    }
    let mut settled = vec![false; graph.node_count()];
    let mut next = 0usize;
    let mut best: Vec<f64> = Vec::with_capacity(keep + 1);
    let mut stop = |x: NodeId, w: f64| {
        if !bound_of[x].is_nan() && !settled[x] {
            settled[x] = true;
            let slack = w - bound_of[x];
            let at = best.partition_point(|&s| s <= slack);
            if at < keep {
                best.insert(at, slack);
                best.truncate(keep);
            }
        }
        while next < order.len() && settled[order[next].1] {
            next += 1;
        }
        let Some(&(max_rest, _)) = order.get(next) else {
            return true;
        };
        let floor = w - max_rest;
        floor >= threshold || (best.len() == keep && floor > best[keep - 1])
    };
    let tree = search_until(graph, weights, &[(source, 0.0)], &mut stop);
    let mut ranked: Vec<(f64, NodeId, f64)> = order
        .iter()
        .filter(|&&(_, t)| settled[t])
        .map(|&(b, t)| (tree.weight[t] - b, t, b))
        .collect();
    ranked.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)));
    let mut out = Vec::new();
    for &(_, t, b) in ranked.iter().take(keep) {
        let path = tree.path_to(t).expect("reachable target has a path");
        let slack = integral_unchecked(graph, rho.values(), &path) - b;
        if slack < threshold {
            out.push(Violation { path: path.canonical(), slack, bound: b });
        }
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug)]
struct Label {
    weight: f64,
    length: f64,
    node: NodeId,
    root: NodeId,
    pred: Option<(usize, EdgeId)>,
}

impl Label {
    fn key_cmp(&self, other: &Self) -> Ordering {
        self.weight
            .total_cmp(&other.weight)
            .then(self.length.total_cmp(&other.length))
            .then(self.node.cmp(&other.node))
            .then(self.root.cmp(&other.root))
            .then(self.pred.cmp(&other.pred))
    }
}

impl PartialEq for Label {
    fn eq(&self, other: &Self) -> bool {
        self.key_cmp(other) == Ordering::Equal
    }
}

impl Eq for Label {}

impl PartialOrd for Label {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Label {
    fn cmp(&self, other: &Self) -> Ordering {
        other.key_cmp(self)
    }
}

/// Multi-source search keeping, for every node, the two best labels with
/// distinct roots. The best label at `t` whose root differs from `t` is then
/// a shortest path to `t` from the nearest other root.
fn two_root_search(graph: &MetricGraph, weights: &[f64], roots: &[(NodeId, f64)]) -> (Vec<Label>, Vec<[usize; 2]>) {
    const NONE: usize = usize::MAX;
    let mut settled: Vec<Label> = Vec::new();
    let mut slots = vec![[NONE; 2]; graph.node_count()];
    let mut heap: BinaryHeap<Label> = roots
        .iter()
        .map(|&(r, offset)| Label { weight: offset, length: 0.0, node: r, root: r, pred: None })
        .collect();
    let accepts = |slots: &[usize; 2], settled: &[Label], root: NodeId| {
        slots[1] == NONE && (slots[0] == NONE || settled[slots[0]].root != root)
    };
    while let Some(label) = heap.pop() {
        let y = label.node;
        if !accepts(&slots[y], &settled, label.root) {
            continue;
        }
        let id = settled.len();
        settled.push(label);
        let slot = if slots[y][0] == NONE { 0 } else { 1 };
        slots[y][slot] = id;
        for &(z, e) in graph.neighbors(y) {
            if accepts(&slots[z], &settled, label.root) {
                heap.push(Label {
                    weight: label.weight + weights[e],
                    length: label.length + graph.edge(e).length,
                    node: z,
                    root: label.root,
                    pred: Some((id, e)),
                });
            }
        }
    }
    (settled, slots)
}

fn label_path(settled: &[Label], id: usize) -> Path {
    let mut nodes = vec![settled[id].node];
    let mut edges = Vec::new();
    let mut cur = id;
    while let Some((prev, e)) = settled[cur].pred {
        nodes.push(settled[prev].node);
        edges.push(e);
        cur = prev;
    }
    nodes.reverse();
    edges.reverse();
    Path::from_chain_unchecked(nodes, edges)
}

/// For bounds `c` (when `f` is `None`) or `|f(s) - f(t)|`, one candidate
/// pair `(s, t)` per boundary target `t` whose slack is below `threshold`.
/// Duplicates are removed. The smallest slack among the candidates equals
/// the smallest slack over all pairs whenever the latter is negative.
///
/// Each sign of `f` takes one multi-source search with root offsets
/// `±f(s)`, so the cost does not grow with the number of boundary nodes.
pub(crate) fn nearest_root_violations(
    graph: &MetricGraph,
    rho: &DensityField,
    f: Option<&[f64]>,
    constant: f64,
    threshold: f64,
) -> Result<Vec<Violation>> {
    rho.check_graph(graph)?;
    let weights = edge_weights(graph, rho);
    let boundary = graph.boundary_nodes();
    let bound = |s: NodeId, t: NodeId| match f {
        Some(f) => (f[s] - f[t]).abs(),
        None => constant,
    };
    let signs: &[f64] = if f.is_some() { &[1.0, -1.0] } else { &[0.0] };
    let mut best: Vec<Option<(f64, Path)>> = vec![None; boundary.len()];
    for &sign in signs {
        let offset = |s: NodeId| f.map_or(0.0, |f| sign * f[s]);
        let roots: Vec<(NodeId, f64)> = boundary.iter().map(|&s| (s, offset(s))).collect();
        let (settled, slots) = two_root_search(graph, &weights, &roots);
        for (i, &t) in boundary.iter().enumerate() {
            let Some(id) = slots[t].iter().copied().find(|&id| id != usize::MAX && settled[id].root != t) else {
                continue;
            };
            let path = label_path(&settled, id);
            let b = bound(path.source(), t);
            if b <= 0.0 {
                continue;
            }
            let slack = integral_unchecked(graph, rho.values(), &path) - b;
            if best[i].as_ref().map_or(true, |(s, _)| slack < *s) {
                best[i] = Some((slack, path));
            }
        }
    }
    let mut seen = std::collections::HashSet::new();
    let mut out = Vec::new();
    for (slack, path) in best.into_iter().flatten() {
        if slack < threshold {
            let path = path.canonical();
            let b = bound(path.source(), path.target());
            if seen.insert(path.clone()) {
                out.push(Violation { path, slack, bound: b });
            }
        }
    }
    Ok(out)
}

/// The boundary-to-boundary simple path with the smallest slack
/// `integral(rho, path) - bound(endpoints)`, or `None` when every
/// constraint holds.
///
/// Ties are broken by the smallest `(source, target)` pair.
pub fn separation_oracle(
    graph: &MetricGraph,
    rho: &DensityField,
    bound: &PairBound<'_>,
) -> Result<Option<Violation>> {
    let all = per_source_violations(graph, rho, bound, f64::INFINITY)?;
    let mut best: Option<Violation> = None;
    for v in all {
        if best.as_ref().map_or(true, |b| v.slack < b.slack) {
            best = Some(v);
        }
    }
    Ok(best.filter(|v| v.slack < 0.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::space::graph::{Edge, GraphMeta, Node};

    fn two_edge_path() -> MetricGraph {
        let nodes = (0..3)
            .map(|i| Node { id: i, x: i as f64, y: 0.0, boundary: i != 1 })
            .collect();
        let edges = vec![
            Edge { u: 0, v: 1, length: 1.0, measure: 1.0 },
            Edge { u: 1, v: 2, length: 1.0, measure: 1.0 },
        ];
        MetricGraph::new(nodes, edges, GraphMeta::default()).unwrap()
    }

    #[test]
    fn two_edge_examples() {
        let g = two_edge_path();
        let one = |_: NodeId, _: NodeId| 1.0;
        let rho = DensityField::new(vec![0.2, 0.2]).unwrap();
        let v = separation_oracle(&g, &rho, &one).unwrap().unwrap();
        assert!((v.slack + 0.6).abs() < 1e-15);
        assert_eq!(v.path.nodes(), &[0, 1, 2]);

        let admissible = DensityField::constant(2, 1.0).unwrap();
        assert!(separation_oracle(&g, &admissible, &one).unwrap().is_none());

        let zero = DensityField::zeros(2);
        let v = separation_oracle(&g, &zero, &|_: NodeId, _: NodeId| 3.0).unwrap().unwrap();
        assert_eq!(v.slack, -3.0);
    }

    #[test]
    fn negative_bound_is_rejected() {
        let g = two_edge_path();
        let rho = DensityField::zeros(2);
        let err = separation_oracle(&g, &rho, &|_: NodeId, _: NodeId| -1.0).unwrap_err();
        assert!(matches!(err, Error::NegativeBound { .. }));
    }

    #[test]
    fn zero_density_picks_largest_bound() {
        let nodes = (0..4)
            .map(|i| Node { id: i, x: i as f64, y: 0.0, boundary: true })
            .collect();
        let edges = (0..3)
            .map(|i| Edge { u: i, v: i + 1, length: 1.0, measure: 1.0 })
            .collect();
        let g = MetricGraph::new(nodes, edges, GraphMeta::default()).unwrap();
        let f: [f64; 4] = [0.0, 0.5, 2.0, 1.0];
        let b = move |x: NodeId, y: NodeId| (f[x] - f[y]).abs();
        let v = separation_oracle(&g, &DensityField::zeros(3), &b).unwrap().unwrap();
        assert_eq!(v.slack, -2.0);
        assert_eq!((v.path.source(), v.path.target()), (0, 2));
    }
}
