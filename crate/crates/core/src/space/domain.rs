//! Grid discretizations of planar domains.
//!
//! A domain is described by the set of grid cells it contains. An edge of
//! the grid belongs to the graph when at least one of its two adjacent
//! cells is in the domain, and carries the area of its in-domain half
//! cells: `h^2` in the interior and `h^2 / 2` along the boundary. The total
//! measure of the horizontal edges (and of the vertical ones) is then the
//! area of the domain. A node is a boundary node when some incident cell
//! lies outside the domain.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::space::graph::{Edge, GraphMeta, MetricGraph, Node, NodeId};

/// Domain descriptor accepted by [`build_domain`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum DomainSpec {
    /// `[0, a] x [0, b]`.
    Rectangle { a: f64, b: f64, h: f64 },
    /// Unit square with the bars
    /// `[2^-n - 2^-(n+2), 2^-n] x [0, 1/2]`, `n = 1..=k`, removed.
    Comb { k: usize, h: f64 },
    /// `(-1, 1) x (0, 1)` union `(0, 1) x (-1, 1)`.
    Lshape { h: f64 },
}

impl DomainSpec {
    pub fn h(&self) -> f64 {
        match *self {
            DomainSpec::Rectangle { h, .. } | DomainSpec::Comb { h, .. } | DomainSpec::Lshape { h } => h,
        }
    }
}

/// The `n`-th removed bar of the comb as `(left, right)` x-range; its
/// y-range is `[0, 1/2]`.
pub fn comb_bar(n: usize) -> (f64, f64) {
    let right = 0.5f64.powi(n as i32);
    (right - 0.5f64.powi(n as i32 + 2), right)
}

/// Area of the comb with `k` bars removed.
pub fn comb_area(k: usize) -> f64 {
    1.0 - 0.5 * (1..=k).map(|n| 0.5f64.powi(n as i32 + 2)).sum::<f64>()
}

/// Builds the grid graph of a domain.
pub fn build_domain(spec: &DomainSpec) -> Result<MetricGraph> {
    let h = spec.h();
    if !(h.is_finite() && h > 0.0) {
        return Err(Error::InvalidDomain(format!("grid spacing must be positive, got {h}")));
    }
    match *spec {
        DomainSpec::Rectangle { a, b, h } => {
            if !(a.is_finite() && b.is_finite() && a > 0.0 && b > 0.0) {
                return Err(Error::InvalidDomain(format!(
                    "rectangle sides must be positive, got {a} x {b}"
                )));
            }
            let nx = cells(a, h, "width a")?;
            let ny = cells(b, h, "height b")?;
            let meta = GraphMeta {
                domain: "rectangle".into(),
                h: Some(h),
                a: Some(a),
                b: Some(b),
                k: None,
            };
            grid_graph((0.0, 0.0), h, nx, ny, |_, _| true, meta)
        }
        DomainSpec::Comb { k, h } => {
            let n = cells(1.0, h, "unit side")?;
            let bars: Vec<(f64, f64)> = (1..=k).map(comb_bar).collect();
            for (i, &(l, r)) in bars.iter().enumerate() {
                cells(l, h, &format!("bar {} left side", i + 1))?;
                cells(r - l, h, &format!("bar {} width", i + 1))?;
            }
            let meta = GraphMeta {
                domain: "comb".into(),
                h: Some(h),
                a: None,
                b: None,
                k: Some(k),
            };
            grid_graph(
                (0.0, 0.0),
                h,
                n,
                n,
                |cx, cy| !bars.iter().any(|&(l, r)| cx > l && cx < r && cy < 0.5),
                meta,
            )
        }
        DomainSpec::Lshape { h } => {
            let n = cells(2.0, h, "side")?;
            if n % 2 != 0 {
                return Err(Error::InvalidDomain(format!("spacing {h} does not divide 1")));
            }
            let meta = GraphMeta {
                domain: "lshape".into(),
                h: Some(h),
                a: None,
                b: None,
                k: None,
            };
            grid_graph((-1.0, -1.0), h, n, n, |cx, cy| cx > 0.0 || cy > 0.0, meta)
        }
    }
}

/// Node masks of the closures of `(-1,1)x(0,1)` and `(0,1)x(-1,1)` on an
/// L-shaped graph.
pub fn lshape_masks(graph: &MetricGraph) -> (Vec<bool>, Vec<bool>) {
    let first = graph.nodes().iter().map(|v| v.y >= 0.0).collect();
    let second = graph.nodes().iter().map(|v| v.x >= 0.0).collect();
    (first, second)
}

fn cells(length: f64, h: f64, what: &str) -> Result<usize> {
    let ratio = length / h;
    let n = ratio.round();
    if n < 1.0 || (ratio - n).abs() > 1e-9 * ratio.max(1.0) {
        return Err(Error::InvalidDomain(format!(
            "spacing {h} does not divide the {what} {length}"
        )));
    }
    Ok(n as usize)
}

fn grid_graph(
    origin: (f64, f64),
    h: f64,
    nx: usize,
    ny: usize,
    inside: impl Fn(f64, f64) -> bool,
    meta: GraphMeta,
) -> Result<MetricGraph> {
    let (x0, y0) = origin;
    let cell_in: Vec<bool> = (0..ny)
        .flat_map(|j| (0..nx).map(move |i| (i, j)))
        .map(|(i, j)| inside(x0 + (i as f64 + 0.5) * h, y0 + (j as f64 + 0.5) * h))
        .collect();
    let cell = |i: isize, j: isize| -> bool {
        i >= 0 && j >= 0 && (i as usize) < nx && (j as usize) < ny && cell_in[j as usize * nx + i as usize]
    };

    // (i, j, di, dj, adjacent inside cells)
    let mut grid_edges = Vec::new();
    for j in 0..=ny {
        for i in 0..=nx {
            let (ii, jj) = (i as isize, j as isize);
            if i < nx {
                let m = cell(ii, jj - 1) as usize + cell(ii, jj) as usize;
                if m > 0 {
                    grid_edges.push((i, j, 1, 0, m));
                }
            }
            if j < ny {
                let m = cell(ii - 1, jj) as usize + cell(ii, jj) as usize;
                if m > 0 {
                    grid_edges.push((i, j, 0, 1, m));
                }
            }
        }
    }

    let stride = nx + 1;
    let mut present = vec![false; stride * (ny + 1)];
    for &(i, j, di, dj, _) in &grid_edges {
        present[j * stride + i] = true;
        present[(j + dj) * stride + i + di] = true;
    }
    let mut ids: Vec<Option<NodeId>> = vec![None; present.len()];
    let mut nodes = Vec::new();
    for j in 0..=ny {
        for i in 0..=nx {
            if !present[j * stride + i] {
                continue;
            }
            let (ii, jj) = (i as isize, j as isize);
            let interior =
                cell(ii - 1, jj - 1) && cell(ii, jj - 1) && cell(ii - 1, jj) && cell(ii, jj);
            let id = nodes.len();
            ids[j * stride + i] = Some(id);
            nodes.push(Node {
                id,
                x: x0 + i as f64 * h,
                y: y0 + j as f64 * h,
                boundary: !interior,
            });
        }
    }
    let half_cell = 0.5 * h * h;
    let mut edges: Vec<Edge> = grid_edges
        .iter()
        .map(|&(i, j, di, dj, m)| {
            let u = ids[j * stride + i].expect("edge endpoint present");
            let v = ids[(j + dj) * stride + i + di].expect("edge endpoint present");
            Edge {
                u,
                v,
                length: h,
                measure: m as f64 * half_cell,
            }
        })
        .collect();
    edges.sort_by_key(|e| (e.u, e.v));
    MetricGraph::new(nodes, edges, meta)
}
