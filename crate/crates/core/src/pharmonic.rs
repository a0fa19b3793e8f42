//! Discrete p-Dirichlet problem, minimal upper gradients and potentials
//! reconstructed from densities.

use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::space::{DensityField, MetricGraph, NodeId};

/// A real value per node.
#[derive(Clone, Debug, PartialEq)]
pub struct NodeFunction(Vec<f64>);

impl NodeFunction {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!("node function is not finite at node {i}")));
        }
        Ok(Self(values))
    }

    /// Samples `f(x, y)` at every node.
    pub fn from_coordinates(graph: &MetricGraph, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        Self::new(graph.nodes().iter().map(|v| f(v.x, v.y)).collect())
    }

    pub fn constant(nodes: usize, value: f64) -> Result<Self> {
        Self::new(vec![value; nodes])
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn get(&self, node: NodeId) -> f64 {
        self.0[node]
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    fn check_graph(&self, graph: &MetricGraph) -> Result<()> {
        if self.0.len() != graph.node_count() {
            return Err(Error::InvalidArgument(format!(
                "node function has {} entries but the graph has {} nodes",
                self.0.len(),
                graph.node_count()
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct DirichletOptions {
    /// Relative stationarity tolerance.
    pub tol: f64,
    pub max_sweeps: usize,
    /// Over-relaxation factor in `[1, 2)`; a relaxed update is kept only if
    /// it does not increase the local energy.
    pub relaxation: f64,
}

impl DirichletOptions {
    pub fn new(tol: f64) -> Self {
        Self {
            tol,
            max_sweeps: 200_000,
            relaxation: 1.9,
        }
    }
}

#[derive(Clone, Debug)]
pub struct DirichletSolution {
    pub u: NodeFunction,
    pub energy: f64,
    /// Largest absolute energy derivative over interior nodes.
    pub stationarity: f64,
    pub sweeps: usize,
    pub converged: bool,
}

/// `sum_e mu(e) (|u(x) - u(y)| / l(e))^p`.
pub fn dirichlet_energy(graph: &MetricGraph, u: &NodeFunction, p: f64) -> f64 {
    graph
        .edges()
        .iter()
        .map(|e| e.measure * ((u.0[e.u] - u.0[e.v]).abs() / e.length).powf(p))
        .sum()
}

/// Solves the p-Dirichlet problem with default options.
pub fn solve_dirichlet(graph: &MetricGraph, f: &NodeFunction, p: f64, tol: f64) -> Result<DirichletSolution> {
    solve_dirichlet_with(graph, f, p, &DirichletOptions::new(tol))
}

/// Minimizes the p-energy over node functions equal to `f` on the boundary.
///
/// Nonlinear Gauss-Seidel in node-id order: each interior value is moved to
/// the exact minimizer of its local energy, then over-relaxed when that
/// does not increase the local energy and the minimizer is not at a
/// neighbor value. For `p < 2` each sweep also moves clusters of equal
/// interior values as blocks. Stops once the largest interior
/// energy derivative is at most `tol * (1 + energy)`.
pub fn solve_dirichlet_with(
    graph: &MetricGraph,
    f: &NodeFunction,
    p: f64,
    opts: &DirichletOptions,
) -> Result<DirichletSolution> {
    if !(p > 1.0 && p.is_finite()) {
        return Err(Error::InvalidArgument(format!("exponent p must exceed 1, got {p}")));
    }
    if !(opts.tol > 0.0) {
        return Err(Error::InvalidArgument(format!("tolerance must be positive, got {}", opts.tol)));
    }
    f.check_graph(graph)?;
    if graph.boundary_nodes().is_empty() {
        return Err(Error::InvalidArgument("the boundary node set is empty".into()));
    }
    let mut u = initial_guess(graph, f)?;

    // per-node neighbor weights mu / l^p
    let weights: Vec<f64> = graph
        .edges()
        .iter()
        .map(|e| e.measure / e.length.powf(p))
        .collect();
    let interior: Vec<NodeId> = (0..graph.node_count()).filter(|&v| !graph.is_boundary(v)).collect();
    let mut local: Vec<(f64, f64)> = Vec::new();

    let mut sweeps = 0;
    let mut energy = dirichlet_energy(graph, &NodeFunction(u.clone()), p);
    let mut stationarity = max_derivative(graph, &u, &weights, &interior, p);
    let mut converged = stationarity <= opts.tol * (1.0 + energy);
    while !converged && sweeps < opts.max_sweeps {
        for &x in &interior {
            local.clear();
            local.extend(graph.neighbors(x).iter().map(|&(y, e)| (u[y], weights[e])));
            let best = local_minimizer(&local, p, u[x]);
            let relaxed = u[x] + opts.relaxation * (best - u[x]);
            let at_kink = local.iter().any(|&(a, _)| a == best);
            u[x] = if opts.relaxation != 1.0
                && !at_kink
                && local_energy(&local, p, relaxed) <= local_energy(&local, p, u[x])
            {
                relaxed
            } else {
                best
            };
        }
        if p < 2.0 {
            move_clusters(graph, &mut u, &weights, &interior, p, &mut local);
        }
        sweeps += 1;
        energy = dirichlet_energy(graph, &NodeFunction(u.clone()), p);
        stationarity = max_derivative(graph, &u, &weights, &interior, p);
        converged = stationarity <= opts.tol * (1.0 + energy);
    }
    Ok(DirichletSolution {
        u: NodeFunction::new(u)?,
        energy,
        stationarity,
        sweeps,
        converged,
    })
}

/// Moves every connected set of interior nodes with nearly equal values to
/// the common value minimizing the energy of the edges leaving it, when
/// that lowers the energy of all edges touching the set.
fn move_clusters(
    graph: &MetricGraph,
    u: &mut [f64],
    weights: &[f64],
    interior: &[NodeId],
    p: f64,
    local: &mut Vec<(f64, f64)>,
) {
    let n = graph.node_count();
    let mut owner = vec![usize::MAX; n];
    let mut cluster = Vec::new();
    for &x in interior {
        if owner[x] != usize::MAX {
            continue;
        }
        let value = u[x];
        cluster.clear();
        cluster.push(x);
        owner[x] = x;
        let mut i = 0;
        while i < cluster.len() {
            let z = cluster[i];
            i += 1;
            for &(y, _) in graph.neighbors(z) {
                if owner[y] == usize::MAX
                    && !graph.is_boundary(y)
                    && (u[y] - value).abs() <= CLUSTER * (1.0 + u[y].abs() + value.abs())
                {
                    owner[y] = x;
                    cluster.push(y);
                }
            }
        }
        if cluster.len() < 2 {
            continue;
        }
        local.clear();
        let mut before = 0.0;
        for &z in &cluster {
            for &(y, e) in graph.neighbors(z) {
                let edge = weights[e] * (u[z] - u[y]).abs().powf(p);
                if owner[y] == x {
                    before += 0.5 * edge;
                } else {
                    before += edge;
                    local.push((u[y], weights[e]));
                }
            }
        }
        if local.is_empty() {
            continue;
        }
        let best = local_minimizer(local, p, value);
        if local_energy(local, p, best) < before {
            for &z in &cluster {
                u[z] = best;
            }
        }
    }
}

/// Boundary values are copied; interior nodes take the value of the nearest
/// boundary node in hop distance (smallest id on ties).
fn initial_guess(graph: &MetricGraph, f: &NodeFunction) -> Result<Vec<f64>> {
    let n = graph.node_count();
    let mut u = vec![f64::NAN; n];
    let mut queue = VecDeque::new();
    for &b in graph.boundary_nodes() {
        u[b] = f.0[b];
        queue.push_back(b);
    }
    while let Some(x) = queue.pop_front() {
        for &(y, _) in graph.neighbors(x) {
            if u[y].is_nan() {
                u[y] = u[x];
                queue.push_back(y);
            }
        }
    }
    if let Some(v) = u.iter().position(|v| v.is_nan()) {
        return Err(Error::Unreachable(v));
    }
    Ok(u)
}

fn local_energy(local: &[(f64, f64)], p: f64, t: f64) -> f64 {
    local.iter().map(|&(a, w)| w * (t - a).abs().powf(p)).sum()
}

fn local_derivative(local: &[(f64, f64)], p: f64, t: f64) -> f64 {
    // derivative of |s|^p is taken as 0 at s = 0
    local
        .iter()
        .map(|&(a, w)| {
            let d = t - a;
            w * p * d.abs().powf(p - 1.0) * d.signum() * (d != 0.0) as u8 as f64
        })
        .sum()
}

/// Exact minimizer of `sum w |t - a|^p`, by safeguarded Newton iteration
/// inside the bracket `[min a, max a]`.
fn local_minimizer(local: &[(f64, f64)], p: f64, start: f64) -> f64 {
    if p == 2.0 {
        let (num, den) = local.iter().fold((0.0, 0.0), |(n, d), &(a, w)| (n + w * a, d + w));
        return num / den;
    }
    let mut lo = local.iter().map(|l| l.0).fold(f64::INFINITY, f64::min);
    let mut hi = local.iter().map(|l| l.0).fold(f64::NEG_INFINITY, f64::max);
    if hi - lo <= 0.0 {
        return lo;
    }
    let mut t = start.clamp(lo, hi);
    for _ in 0..200 {
        let d = local_derivative(local, p, t);
        if d == 0.0 {
            return t;
        }
        if d > 0.0 {
            hi = t;
        } else {
            lo = t;
        }
        if hi - lo <= 4.0 * f64::EPSILON * hi.abs().max(lo.abs()).max(1e-300) {
            break;
        }
        let curvature: f64 = local
            .iter()
            .map(|&(a, w)| w * p * (p - 1.0) * (t - a).abs().powf(p - 2.0))
            .sum();
        let newton = t - d / curvature;
        t = if curvature.is_finite() && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
    }
    t
}

// differences at this relative size are treated as exact zeros, where the
// derivative of |d|^p is 0; for p < 2 rounding noise would otherwise dominate
const ROUNDING: f64 = 8.0 * f64::EPSILON;

const CLUSTER: f64 = 1e-6;

fn max_derivative(graph: &MetricGraph, u: &[f64], weights: &[f64], interior: &[NodeId], p: f64) -> f64 {
    interior
        .iter()
        .map(|&x| {
            graph
                .neighbors(x)
                .iter()
                .map(|&(y, e)| {
                    let d = u[x] - u[y];
                    if d.abs() <= ROUNDING * (u[x].abs() + u[y].abs()) {
                        0.0
                    } else {
                        weights[e] * p * d.abs().powf(p - 1.0) * d.signum()
                    }
                })
                .sum::<f64>()
                .abs()
        })
        .fold(0.0, f64::max)
}

/// `g(e) = |u(x) - u(y)| / l(e)`: the smallest edge density that is an
/// upper gradient of `u` along every edge.
pub fn minimal_upper_gradient(graph: &MetricGraph, u: &NodeFunction) -> Result<DensityField> {
    u.check_graph(graph)?;
    DensityField::new(
        graph
            .edges()
            .iter()
            .map(|e| (u.0[e.u] - u.0[e.v]).abs() / e.length)
            .collect(),
    )
}

/// `v(x) = min(w(x), max f)` with
/// `w(x) = min over boundary y of f(y) + dist_rho(y, x)`.
///
/// `rho` is an upper gradient of `v` along every edge, and `v = f` on the
/// boundary whenever `rho` is admissible for `|f(x) - f(y)|`.
pub fn potential_from_density(graph: &MetricGraph, rho: &DensityField, f: &NodeFunction) -> Result<NodeFunction> {
    f.check_graph(graph)?;
    let weights: Vec<f64> = rho
        .values()
        .iter()
        .zip(graph.edges())
        .map(|(r, e)| r * e.length)
        .collect();
    if weights.len() != graph.edge_count() {
        return Err(Error::InvalidArgument("density does not match the graph".into()));
    }
    let roots: Vec<(NodeId, f64)> = graph.boundary_nodes().iter().map(|&b| (b, f.0[b])).collect();
    if roots.is_empty() {
        return Err(Error::InvalidArgument("the boundary node set is empty".into()));
    }
    let cap = roots.iter().map(|r| r.1).fold(f64::NEG_INFINITY, f64::max);
    let tree = crate::space::multi_source_search(graph, &weights, &roots);
    let mut v = Vec::with_capacity(graph.node_count());
    for (x, &w) in tree.weight.iter().enumerate() {
        if !w.is_finite() {
            return Err(Error::Unreachable(x));
        }
        v.push(w.min(cap));
    }
    NodeFunction::new(v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::space::{build_domain, DomainSpec, Edge, GraphMeta, Node};

    fn line(n: usize, lengths: f64) -> MetricGraph {
        let nodes = (0..n)
            .map(|i| Node { id: i, x: i as f64, y: 0.0, boundary: i == 0 || i == n - 1 })
            .collect();
        let edges = (0..n - 1)
            .map(|i| Edge { u: i, v: i + 1, length: lengths, measure: 1.0 })
            .collect();
        MetricGraph::new(nodes, edges, GraphMeta::default()).unwrap()
    }

    #[test]
    fn midpoint_of_three_node_path() {
        let g = line(3, 1.0);
        let f = NodeFunction::new(vec![0.0, 7.0, 1.0]).unwrap();
        for p in [1.2, 1.5, 2.0, 3.0, 6.0] {
            let sol = solve_dirichlet(&g, &f, p, 1e-12).unwrap();
            assert!(sol.converged);
            assert!((sol.u.get(1) - 0.5).abs() < 1e-9, "p = {p}: {}", sol.u.get(1));
        }
    }

    #[test]
    fn linear_data_is_stationary_on_rectangles() {
        let g = build_domain(&DomainSpec::Rectangle { a: 2.0, b: 1.0, h: 0.125 }).unwrap();
        let f = NodeFunction::from_coordinates(&g, |x, _| x).unwrap();
        for p in [1.5, 2.0, 3.0] {
            let sol = solve_dirichlet(&g, &f, p, 1e-10).unwrap();
            assert!(sol.converged, "p = {p}");
            for v in g.nodes() {
                assert!((sol.u.get(v.id) - v.x).abs() < 1e-6, "p = {p}, node {}", v.id);
            }
        }
    }

    #[test]
    fn constant_data_gives_constant_solution() {
        let g = build_domain(&DomainSpec::Rectangle { a: 1.0, b: 1.0, h: 0.25 }).unwrap();
        let f = NodeFunction::constant(g.node_count(), 3.5).unwrap();
        let sol = solve_dirichlet(&g, &f, 2.5, 1e-10).unwrap();
        assert!(sol.u.values().iter().all(|&v| v == 3.5));
        assert_eq!(sol.energy, 0.0);
    }

    #[test]
    fn rejects_bad_exponent_and_tolerance() {
        let g = line(3, 1.0);
        let f = NodeFunction::constant(3, 0.0).unwrap();
        assert!(solve_dirichlet(&g, &f, 1.0, 1e-8).is_err());
        assert!(solve_dirichlet(&g, &f, 2.0, 0.0).is_err());
        let no_boundary = MetricGraph::new(
            vec![
                Node { id: 0, x: 0.0, y: 0.0, boundary: false },
                Node { id: 1, x: 1.0, y: 0.0, boundary: false },
            ],
            vec![Edge { u: 0, v: 1, length: 1.0, measure: 1.0 }],
            GraphMeta::default(),
        )
        .unwrap();
        assert!(solve_dirichlet(&no_boundary, &NodeFunction::constant(2, 0.0).unwrap(), 2.0, 1e-8).is_err());
    }

    #[test]
    fn upper_gradient_examples() {
        let g = build_domain(&DomainSpec::Rectangle { a: 1.0, b: 1.0, h: 0.25 }).unwrap();
        let u = NodeFunction::from_coordinates(&g, |x, _| x).unwrap();
        let grad = minimal_upper_gradient(&g, &u).unwrap();
        for (e, &v) in g.edges().iter().zip(grad.values()) {
            let horizontal = g.node(e.u).y == g.node(e.v).y;
            assert_eq!(v, if horizontal { 1.0 } else { 0.0 });
        }
        let c = NodeFunction::constant(g.node_count(), 2.0).unwrap();
        assert!(minimal_upper_gradient(&g, &c).unwrap().values().iter().all(|&v| v == 0.0));

        let single = MetricGraph::new(
            vec![
                Node { id: 0, x: 0.0, y: 0.0, boundary: true },
                Node { id: 1, x: 2.0, y: 0.0, boundary: true },
            ],
            vec![Edge { u: 0, v: 1, length: 2.0, measure: 1.0 }],
            GraphMeta::default(),
        )
        .unwrap();
        let u = NodeFunction::new(vec![0.0, 1.0]).unwrap();
        assert_eq!(minimal_upper_gradient(&single, &u).unwrap().values(), &[0.5]);
    }

    #[test]
    fn potential_examples() {
        let g = line(3, 1.0);
        let f = NodeFunction::new(vec![0.0, 0.0, 1.0]).unwrap();
        let half = DensityField::constant(2, 0.5).unwrap();
        let v = potential_from_density(&g, &half, &f).unwrap();
        assert_eq!(v.values(), &[0.0, 0.5, 1.0]);

        let zero = DensityField::zeros(2);
        let v = potential_from_density(&g, &zero, &f).unwrap();
        assert!(v.values().iter().all(|&x| x == 0.0));

        let huge = DensityField::constant(2, 100.0).unwrap();
        let v = potential_from_density(&g, &huge, &f).unwrap();
        assert_eq!(v.values(), &[0.0, 1.0, 1.0]);
    }
}
