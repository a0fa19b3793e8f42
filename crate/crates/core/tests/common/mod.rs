#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use pmodulus::modulus::{simple_boundary_paths, ModulusProblem};
use pmodulus::pharmonic::NodeFunction;
use pmodulus::space::{Edge, GraphMeta, MetricGraph, Node, Path};

pub fn graph(nodes: &[(f64, f64, bool)], edges: &[(usize, usize, f64, f64)]) -> MetricGraph {
    let nodes = nodes
        .iter()
        .enumerate()
        .map(|(id, &(x, y, boundary))| Node { id, x, y, boundary })
        .collect();
    let edges = edges
        .iter()
        .map(|&(u, v, length, measure)| Edge { u, v, length, measure })
        .collect();
    MetricGraph::new(nodes, edges, GraphMeta::default()).unwrap()
}

/// Three nodes in a row, both ends boundary, unit lengths and measures.
pub fn two_edge() -> MetricGraph {
    graph(
        &[(0.0, 0.0, true), (1.0, 0.0, false), (2.0, 0.0, true)],
        &[(0, 1, 1.0, 1.0), (1, 2, 1.0, 1.0)],
    )
}

/// Two unit edges joining the same pair of boundary nodes.
pub fn parallel_edges() -> MetricGraph {
    graph(&[(0.0, 0.0, true), (1.0, 0.0, true)], &[(0, 1, 1.0, 1.0), (0, 1, 1.0, 1.0)])
}

/// Triangle with every node on the boundary.
pub fn triangle() -> MetricGraph {
    graph(
        &[(0.0, 0.0, true), (1.0, 0.0, true), (0.5, 0.8, true)],
        &[(0, 1, 1.0, 1.0), (1, 2, 1.0, 1.0), (0, 2, 1.0, 1.0)],
    )
}

/// Connected graph on `n` nodes: a random spanning tree plus `extra` edges,
/// lengths and measures in `[0.5, 2]`, at least two boundary nodes.
pub fn random_graph(rng: &mut ChaCha8Rng, n: usize, extra: usize) -> MetricGraph {
    let mut nodes: Vec<(f64, f64, bool)> = (0..n)
        .map(|_| (rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0), rng.gen_bool(0.4)))
        .collect();
    nodes[0].2 = true;
    nodes[n - 1].2 = true;
    let mut edges = Vec::new();
    let mut has = std::collections::BTreeSet::new();
    for v in 1..n {
        let u = rng.gen_range(0..v);
        has.insert((u, v));
        edges.push((u, v, rng.gen_range(0.5..2.0), rng.gen_range(0.5..2.0)));
    }
    let mut tries = 0;
    while edges.len() < n - 1 + extra && tries < 1000 {
        tries += 1;
        let u = rng.gen_range(0..n);
        let v = rng.gen_range(0..n);
        let key = (u.min(v), u.max(v));
        if u != v && has.insert(key) {
            edges.push((key.0, key.1, rng.gen_range(0.5..2.0), rng.gen_range(0.5..2.0)));
        }
    }
    graph(&nodes, &edges)
}

pub struct Instance {
    pub name: String,
    pub graph: MetricGraph,
    pub prob: ModulusProblem,
}

fn grid(cols: usize, rows: usize) -> MetricGraph {
    let mut nodes = Vec::new();
    for j in 0..rows {
        for i in 0..cols {
            let boundary = i == 0 || j == 0 || i == cols - 1 || j == rows - 1;
            nodes.push((i as f64, j as f64, boundary));
        }
    }
    let mut edges = Vec::new();
    for j in 0..rows {
        for i in 0..cols {
            let k = i + j * cols;
            if i + 1 < cols {
                edges.push((k, k + 1, 1.0, 1.0));
            }
            if j + 1 < rows {
                edges.push((k, k + cols, 1.0, 1.0));
            }
        }
    }
    graph(&nodes, &edges)
}

/// Small graphs (at most 14 nodes) crossed with `p` in `{1.5, 2, 3}` and
/// a mix of constant and endpoint bounds.
pub fn suite() -> Vec<Instance> {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut graphs: Vec<(String, MetricGraph)> = vec![
        ("two_edge".into(), two_edge()),
        ("parallel".into(), parallel_edges()),
        ("triangle".into(), triangle()),
        ("grid3x3".into(), grid(3, 3)),
        ("grid4x3".into(), grid(4, 3)),
        ("ladder2x6".into(), grid(6, 2)),
    ];
    for (n, extra) in [(8, 4), (10, 5), (12, 4), (14, 3)] {
        graphs.push((format!("random{n}"), random_graph(&mut rng, n, extra)));
    }
    let mut out = Vec::new();
    for (gi, (name, g)) in graphs.into_iter().enumerate() {
        for (pi, p) in [1.5, 2.0, 3.0].into_iter().enumerate() {
            let prob = match (gi + pi) % 3 {
                0 => ModulusProblem::constant(p, 1.0).unwrap(),
                1 => ModulusProblem::endpoint(p, NodeFunction::from_coordinates(&g, |x, _| x).unwrap()).unwrap(),
                _ => {
                    let f: Vec<f64> = (0..g.node_count()).map(|_| rng.gen_range(0.0..1.0)).collect();
                    ModulusProblem::endpoint(p, NodeFunction::new(f).unwrap()).unwrap()
                }
            };
            out.push(Instance { name: format!("{name}/p={p}"), graph: g.clone(), prob });
        }
    }
    out
}

/// Positive-bound members of the full family of `prob` on `g`.
pub fn family(g: &MetricGraph, prob: &ModulusProblem) -> Vec<(Path, f64)> {
    simple_boundary_paths(g)
        .unwrap()
        .into_iter()
        .map(|path| {
            let b = prob.path_bound(&path);
            (path, b)
        })
        .filter(|(_, b)| *b > 0.0)
        .collect()
}

/// Exact minimizer of `sum mu rho^2` subject to `sum_{e in path} l rho >= b`
/// by enumerating active sets; any set whose equality system has
/// nonnegative multipliers and leaves the rest feasible is optimal.
pub fn quadratic_oracle(g: &MetricGraph, family: &[(Path, f64)]) -> Vec<f64> {
    let m = family.len();
    assert!(m <= 16, "active-set enumeration is exponential in the family size");
    let ne = g.edge_count();
    let a = DMatrix::from_fn(m, ne, |i, e| {
        if family[i].0.edges().contains(&e) {
            g.edge(e).length
        } else {
            0.0
        }
    });
    let b = DVector::from_iterator(m, family.iter().map(|(_, b)| *b));
    let inv_mu = DVector::from_iterator(ne, g.edges().iter().map(|e| 1.0 / e.measure));
    let mut best: Option<(f64, Vec<f64>)> = None;
    for mask in 0u32..(1 << m) {
        let active: Vec<usize> = (0..m).filter(|&i| mask & (1 << i) != 0).collect();
        let k = active.len();
        let lambda = if k == 0 {
            DVector::zeros(0)
        } else {
            let gram = DMatrix::from_fn(k, k, |r, c| {
                (0..ne)
                    .map(|e| a[(active[r], e)] * a[(active[c], e)] * inv_mu[e])
                    .sum::<f64>()
                    / 2.0
            });
            let rhs = DVector::from_iterator(k, active.iter().map(|&i| b[i]));
            let Some(sol) = gram.clone().lu().solve(&rhs) else {
                continue;
            };
            if (&gram * &sol - &rhs).amax() > 1e-9 {
                continue;
            }
            sol
        };
        if lambda.iter().any(|&l| l < -1e-12) {
            continue;
        }
        let rho: Vec<f64> = (0..ne)
            .map(|e| {
                let s: f64 = active.iter().zip(lambda.iter()).map(|(&i, l)| l * a[(i, e)]).sum();
                (s * inv_mu[e] / 2.0).max(0.0)
            })
            .collect();
        let feasible = (0..m).all(|i| (0..ne).map(|e| a[(i, e)] * rho[e]).sum::<f64>() >= b[i] - 1e-9);
        if !feasible {
            continue;
        }
        let energy: f64 = g.edges().iter().zip(&rho).map(|(e, r)| e.measure * r * r).sum();
        if best.as_ref().map_or(true, |(v, _)| energy < *v - 1e-12) {
            best = Some((energy, rho));
        }
    }
    best.expect("some active set satisfies the optimality conditions").1
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}
