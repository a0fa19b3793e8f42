use crate::error::{Error, Result};
use crate::space::{MetricGraph, NodeId, Path};

/// Largest graph accepted by exhaustive path enumeration.
pub const BRUTE_FORCE_NODE_LIMIT: usize = 14;

const PATH_BUDGET: usize = 2_000_000;

/// Every simple path joining two distinct boundary nodes, oriented from the
/// smaller endpoint id, ordered by `(source, target)` and then by
/// depth-first discovery.
pub fn simple_boundary_paths(graph: &MetricGraph) -> Result<Vec<Path>> {
    let n = graph.node_count();
    let mut out = Vec::new();
    let mut on_path = vec![false; n];
    for &s in graph.boundary_nodes() {
        let mut nodes = vec![s];
        let mut edges = Vec::new();
        on_path[s] = true;
        dfs(graph, s, &mut nodes, &mut edges, &mut on_path, &mut out)?;
        on_path[s] = false;
    }
    out.sort_by_key(|p: &Path| (p.source(), p.target()));
    Ok(out)
}

fn dfs(
    graph: &MetricGraph,
    source: NodeId,
    nodes: &mut Vec<NodeId>,
    edges: &mut Vec<usize>,
    on_path: &mut [bool],
    out: &mut Vec<Path>,
) -> Result<()> {
    let x = *nodes.last().expect("nonempty");
    for &(y, e) in graph.neighbors(x) {
        if on_path[y] {
            continue;
        }
        nodes.push(y);
        edges.push(e);
        on_path[y] = true;
        if y > source && graph.is_boundary(y) {
            if out.len() >= PATH_BUDGET {
                return Err(Error::Budget(format!("more than {PATH_BUDGET} simple boundary paths")));
            }
            out.push(Path::from_parts(graph, nodes.clone(), edges.clone())?);
        }
        dfs(graph, source, nodes, edges, on_path, out)?;
        on_path[y] = false;
        nodes.pop();
        edges.pop();
    }
    Ok(())
}
