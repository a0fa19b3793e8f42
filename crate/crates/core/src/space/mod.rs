//! Discrete metric measure spaces, curve integration and its transpose.

mod domain;
mod field;
mod graph;
mod oracle;

pub use domain::{build_domain, comb_area, comb_bar, lshape_masks, DomainSpec};
pub use field::{CurveMeasure, DensityField, EdgeMeasure};
pub use graph::{Edge, EdgeId, GraphMeta, MetricGraph, Node, NodeId, Path};
pub use oracle::{
    per_source_violations, separation_oracle, shortest_path_tree, PairBound, ShortestPathTree,
    Violation,
};

pub(crate) use oracle::search as multi_source_search;
pub(crate) use oracle::nearest_root_violations;

use crate::error::{Error, Result};

/// Curve integral `sum_{e in path} rho(e) l(e)`, summed in path order.
pub fn curve_integral(graph: &MetricGraph, rho: &DensityField, path: &Path) -> Result<f64> {
    rho.check_graph(graph)?;
    check_path(graph, path)?;
    Ok(integral_unchecked(graph, rho.values(), path))
}

pub(crate) fn integral_unchecked(graph: &MetricGraph, rho: &[f64], path: &Path) -> f64 {
    path.edges()
        .iter()
        .map(|&e| rho[e] * graph.edge(e).length)
        .sum()
}

/// Transpose of curve integration: `(A^T eta)(e) = l(e) * sum_{path ∋ e} eta(path)`.
pub fn transpose_measure(graph: &MetricGraph, eta: &CurveMeasure) -> Result<EdgeMeasure> {
    let mut out = vec![0.0; graph.edge_count()];
    for (path, mass) in eta.iter() {
        check_path(graph, path)?;
        for &e in path.edges() {
            out[e] += mass;
        }
    }
    for (v, e) in out.iter_mut().zip(graph.edges()) {
        *v *= e.length;
    }
    Ok(EdgeMeasure(out))
}

/// Dual pairing `sum_e rho(e) m(e)`.
pub fn pairing(rho: &DensityField, measure: &EdgeMeasure) -> f64 {
    rho.values().iter().zip(measure.values()).map(|(r, m)| r * m).sum()
}

pub(crate) fn check_path(graph: &MetricGraph, path: &Path) -> Result<()> {
    let n = graph.node_count();
    let m = graph.edge_count();
    if path.nodes().iter().any(|&v| v >= n) || path.edges().iter().any(|&e| e >= m) {
        return Err(Error::InvalidPath("path does not live on this graph".into()));
    }
    for (i, &e) in path.edges().iter().enumerate() {
        let edge = graph.edge(e);
        let (a, b) = (path.nodes()[i], path.nodes()[i + 1]);
        if !((edge.u == a && edge.v == b) || (edge.u == b && edge.v == a)) {
            return Err(Error::InvalidPath(format!("edge {e} does not join {a} and {b}")));
        }
    }
    Ok(())
}
