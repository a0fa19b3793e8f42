//! The generalized modulus problem
//!
//! ```text
//! minimize  sum_e mu(e) rho(e)^p
//! subject to  sum_{e in path} rho(e) l(e) >= b(path)  for every path in the family,
//!             rho >= 0
//! ```
//!
//! and its dual over nonnegative measures on paths. The family consists of
//! the simple paths joining two boundary nodes (or an explicit list).
//! [`solve_modulus`] runs cutting planes with dual coordinate ascent and
//! [`solve_modulus_bruteforce`] enumerates the whole family.

mod ascent;
mod enumerate;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pharmonic::NodeFunction;
use crate::space::{
    integral_unchecked, nearest_root_violations, per_source_violations, transpose_measure, CurveMeasure,
    DensityField, MetricGraph, NodeId, Path, Violation,
};

use ascent::Ascent;
pub use enumerate::{simple_boundary_paths, BRUTE_FORCE_NODE_LIMIT};

/// Bounding function of the curve family.
#[derive(Clone, Debug, PartialEq)]
pub enum Bound {
    /// `b(x, y) = c` for every pair of distinct boundary nodes.
    Constant(f64),
    /// `b(x, y) = |f(x) - f(y)|` with `f` read on boundary nodes.
    Endpoint(NodeFunction),
    /// A finite family of paths with individual bounds.
    Explicit(Vec<(Path, f64)>),
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModulusProblem {
    p: f64,
    bound: Bound,
}

impl ModulusProblem {
    pub fn new(p: f64, bound: Bound) -> Result<Self> {
        if !(p > 1.0 && p.is_finite()) {
            return Err(Error::InvalidArgument(format!("exponent p must exceed 1, got {p}")));
        }
        match &bound {
            Bound::Constant(c) if !(c.is_finite() && *c >= 0.0) => {
                return Err(Error::InvalidArgument(format!("constant bound must be nonnegative, got {c}")));
            }
            Bound::Explicit(family) => {
                if let Some((_, b)) = family.iter().find(|(_, b)| !(b.is_finite() && *b >= 0.0)) {
                    return Err(Error::InvalidArgument(format!("path bound must be nonnegative, got {b}")));
                }
            }
            _ => {}
        }
        let bound = match bound {
            Bound::Explicit(family) => Bound::Explicit(family.into_iter().map(|(p, b)| (p.canonical(), b)).collect()),
            other => other,
        };
        Ok(Self { p, bound })
    }

    pub fn constant(p: f64, c: f64) -> Result<Self> {
        Self::new(p, Bound::Constant(c))
    }

    pub fn endpoint(p: f64, f: NodeFunction) -> Result<Self> {
        Self::new(p, Bound::Endpoint(f))
    }

    pub fn explicit(p: f64, family: Vec<(Path, f64)>) -> Result<Self> {
        Self::new(p, Bound::Explicit(family))
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    /// Conjugate exponent `p / (p - 1)`.
    pub fn q(&self) -> f64 {
        self.p / (self.p - 1.0)
    }

    pub fn bound(&self) -> &Bound {
        &self.bound
    }

    /// Same family with every bound multiplied by `c >= 0`.
    pub fn scaled(&self, c: f64) -> Result<Self> {
        let bound = match &self.bound {
            Bound::Constant(b) => Bound::Constant(b * c),
            Bound::Endpoint(f) => Bound::Endpoint(NodeFunction::new(f.values().iter().map(|v| v * c).collect())?),
            Bound::Explicit(family) => Bound::Explicit(family.iter().map(|(p, b)| (p.clone(), b * c)).collect()),
        };
        Self::new(self.p, bound)
    }

    /// Bound for the boundary pair `(x, y)`; `None` for explicit families.
    pub fn pair_bound(&self, x: NodeId, y: NodeId) -> Option<f64> {
        match &self.bound {
            _ if x == y => Some(0.0),
            Bound::Constant(c) => Some(*c),
            Bound::Endpoint(f) => Some((f.get(x) - f.get(y)).abs()),
            Bound::Explicit(_) => None,
        }
    }

    /// Bound attached to `path`: endpoint-based, or looked up in the
    /// explicit family (zero when absent).
    pub fn path_bound(&self, path: &Path) -> f64 {
        match &self.bound {
            Bound::Explicit(family) => {
                let key = path.clone().canonical();
                family
                .iter()
                .filter(|(p, _)| *p == key)
                .map(|(_, b)| *b)
                .fold(0.0, f64::max)
            }
            _ => self.pair_bound(path.source(), path.target()).unwrap_or(0.0),
        }
    }

    pub(crate) fn check_graph(&self, graph: &MetricGraph) -> Result<()> {
        match &self.bound {
            Bound::Endpoint(f) if f.len() != graph.node_count() => Err(Error::InvalidArgument(format!(
                "boundary function has {} entries but the graph has {} nodes",
                f.len(),
                graph.node_count()
            ))),
            Bound::Explicit(family) => {
                for (path, _) in family {
                    crate::space::check_path(graph, path)?;
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    /// `(max b, min positive b)` over the family; `None` when all bounds vanish.
    pub fn bound_range(&self, graph: &MetricGraph) -> Option<(f64, f64)> {
        let values: Vec<f64> = match &self.bound {
            Bound::Explicit(family) => family.iter().map(|(_, b)| *b).collect(),
            _ => {
                let bn = graph.boundary_nodes();
                let mut v = Vec::new();
                for (i, &x) in bn.iter().enumerate() {
                    for &y in &bn[i + 1..] {
                        v.push(self.pair_bound(x, y).unwrap_or(0.0));
                    }
                }
                v
            }
        };
        let positive = values.iter().copied().filter(|&b| b > 0.0);
        let max = positive.clone().fold(f64::NEG_INFINITY, f64::max);
        let min = positive.fold(f64::INFINITY, f64::min);
        (max > 0.0).then_some((max, min))
    }

    /// Smallest slack `integral(rho, path) - b(path)` over the family, with
    /// the path attaining it. `None` when every bound vanishes.
    pub fn worst_slack(&self, graph: &MetricGraph, rho: &DensityField) -> Result<Option<(Path, f64, f64)>> {
        rho.check_graph(graph)?;
        self.check_graph(graph)?;
        match &self.bound {
            Bound::Explicit(family) => {
                let mut best: Option<(Path, f64, f64)> = None;
                for (path, b) in family.iter().filter(|(_, b)| *b > 0.0) {
                    let s = integral_unchecked(graph, rho.values(), path) - b;
                    if best.as_ref().map_or(true, |(_, bs, _)| s < *bs) {
                        best = Some((path.clone(), s, *b));
                    }
                }
                Ok(best)
            }
            bound => {
                let lowest = |all: Vec<Violation>| {
                    all.into_iter().fold(None, |best: Option<Violation>, v| match best {
                        Some(b) if b.slack <= v.slack => Some(b),
                        _ => Some(v),
                    })
                };
                // the nearest-root search is exact only for negative slack
                let fast = match bound {
                    Bound::Endpoint(f) => nearest_root_violations(graph, rho, Some(f.values()), 0.0, 0.0)?,
                    Bound::Constant(c) => nearest_root_violations(graph, rho, None, *c, 0.0)?,
                    Bound::Explicit(_) => unreachable!("handled above"),
                };
                let worst = match lowest(fast) {
                    Some(v) => Some(v),
                    None => {
                        let pair = |x: NodeId, y: NodeId| self.pair_bound(x, y).unwrap_or(0.0);
                        lowest(per_source_violations(graph, rho, &pair, f64::INFINITY)?)
                    }
                };
                Ok(worst.map(|v| (v.path, v.slack, v.bound)))
            }
        }
    }

    /// Family members whose slack is below `threshold`: one per boundary
    /// source for endpoint families, all of them for explicit ones.
    fn violated(&self, graph: &MetricGraph, rho: &DensityField, threshold: f64) -> Result<Vec<(Path, f64)>> {
        match &self.bound {
            Bound::Explicit(family) => Ok(family
                .iter()
                .filter(|(path, b)| *b > 0.0 && integral_unchecked(graph, rho.values(), path) - b < threshold)
                .map(|(p, b)| (p.clone(), *b))
                .collect()),
            _ => {
                let bound = |x: NodeId, y: NodeId| self.pair_bound(x, y).unwrap_or(0.0);
                Ok(per_source_violations(graph, rho, &bound, threshold)?
                    .into_iter()
                    .map(|v| (v.path, v.bound))
                    .collect())
            }
        }
    }
}

/// Residuals recomputed from a density and a curve measure.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Residuals {
    /// `|V - D|`.
    pub gap: f64,
    /// `max(0, -min slack)` over the family.
    pub violation: f64,
    /// Largest `|integral - b| / (1 + b)` over the support of the measure.
    pub slackness: f64,
    /// Largest `|l(e) sum eta / mu(e) - (rho(e) / V)^(p-1)|`.
    pub density: f64,
    /// `L^q(mu)` norm of `d(A^T eta)/d mu`.
    pub barycenter_q_norm: f64,
}

/// Primal minimizer, dual measure and recomputed residuals.
#[derive(Clone, Debug, PartialEq)]
pub struct DualityCertificate {
    pub p: f64,
    pub rho: DensityField,
    pub eta: CurveMeasure,
    /// `V = (sum mu rho^p)^(1/p)`.
    pub value: f64,
    /// `V^p`.
    pub modulus: f64,
    /// `D = sum eta(path) b(path)`.
    pub dual_value: f64,
    pub dual_mass: f64,
    /// `M = V / min positive b`, an upper bound for the dual mass.
    pub mass_bound: Option<f64>,
    pub residuals: Residuals,
    pub converged: bool,
    pub iterations: usize,
    pub oracle_calls: usize,
}

impl DualityCertificate {
    /// Assembles a certificate, recomputing every derived quantity from
    /// `rho` and `eta`.
    pub fn assemble(
        graph: &MetricGraph,
        prob: &ModulusProblem,
        rho: DensityField,
        eta: CurveMeasure,
        converged: bool,
        iterations: usize,
        oracle_calls: usize,
    ) -> Result<Self> {
        let residuals = compute_residuals(graph, prob, &rho, &eta)?;
        let value = rho.p_norm(graph, prob.p());
        let dual_value = eta.iter().map(|(path, m)| m * prob.path_bound(path)).sum();
        let mass_bound = prob.bound_range(graph).map(|(_, min)| value / min);
        Ok(Self {
            p: prob.p(),
            modulus: value.powf(prob.p()),
            value,
            dual_value,
            dual_mass: eta.total_mass(),
            mass_bound,
            rho,
            eta,
            residuals,
            converged,
            iterations,
            oracle_calls,
        })
    }
}

/// `(rho(e) / V)^(p-1)`, taken as zero when `V = 0`.
pub fn normalized_density_power(rho: &DensityField, value: f64, p: f64) -> Vec<f64> {
    rho.values()
        .iter()
        .map(|&r| if value > 0.0 { (r / value).powf(p - 1.0) } else { 0.0 })
        .collect()
}

/// Recomputes all certificate residuals from `(rho, eta)` alone.
pub fn compute_residuals(
    graph: &MetricGraph,
    prob: &ModulusProblem,
    rho: &DensityField,
    eta: &CurveMeasure,
) -> Result<Residuals> {
    let p = prob.p();
    let q = prob.q();
    let value = rho.p_norm(graph, p);
    let dual: f64 = eta.iter().map(|(path, m)| m * prob.path_bound(path)).sum();
    let violation = prob
        .worst_slack(graph, rho)?
        .map_or(0.0, |(_, s, _)| (-s).max(0.0));
    let slackness = eta
        .iter()
        .map(|(path, _)| {
            let b = prob.path_bound(path);
            (integral_unchecked(graph, rho.values(), path) - b).abs() / (1.0 + b)
        })
        .fold(0.0, f64::max);
    let transport = transpose_measure(graph, eta)?;
    let barycenter = transport.density(graph);
    let target = normalized_density_power(rho, value, p);
    let density = barycenter
        .iter()
        .zip(&target)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    let barycenter_q_norm = graph
        .edges()
        .iter()
        .zip(&barycenter)
        .map(|(e, d)| e.measure * d.powf(q))
        .sum::<f64>()
        .powf(1.0 / q);
    Ok(Residuals {
        gap: (value - dual).abs(),
        violation,
        slackness,
        density,
        barycenter_q_norm,
    })
}

/// Options for [`solve_modulus_with`].
#[derive(Clone, Debug)]
pub struct SolverOptions {
    pub tol: f64,
    /// Outer cutting-plane rounds.
    pub max_iter: usize,
    /// Coordinate-ascent sweeps per outer round.
    pub max_sweeps: usize,
}

impl SolverOptions {
    pub fn new(tol: f64, max_iter: usize) -> Self {
        Self {
            tol,
            max_iter,
            max_sweeps: 2_000,
        }
    }
}

const PRUNE_FLOOR: f64 = 1e-12;
const PRUNE_ROUNDS: usize = 3;

/// Cutting-plane solve of the modulus problem.
///
/// Each round runs coordinate ascent on the active path set, then asks the
/// separation oracle for violated paths (one per boundary source) and adds
/// them. Stops when the worst slack is at least `-tol (1 + max b)` and the
/// duality gap is at most `tol (1 + V)`. The dual measure is
/// `eta = lambda / (p V^(p-1))`. Running out of rounds yields a certificate
/// with `converged = false`.
pub fn solve_modulus(graph: &MetricGraph, prob: &ModulusProblem, tol: f64, max_iter: usize) -> Result<DualityCertificate> {
    solve_modulus_with(graph, prob, &SolverOptions::new(tol, max_iter))
}

pub fn solve_modulus_with(graph: &MetricGraph, prob: &ModulusProblem, opts: &SolverOptions) -> Result<DualityCertificate> {
    if !(opts.tol > 0.0) {
        return Err(Error::InvalidArgument(format!("tolerance must be positive, got {}", opts.tol)));
    }
    prob.check_graph(graph)?;
    let Some((max_b, _)) = prob.bound_range(graph) else {
        return zero_certificate(graph, prob);
    };
    let p = prob.p();
    let tol = opts.tol;
    let threshold = -tol * (1.0 + max_b);
    let mut ascent = Ascent::new(graph, p);
    let mut iterations = 0;
    let mut oracle_calls = 0;
    let mut converged = false;

    while iterations < opts.max_iter {
        iterations += 1;
        let inner_ok = run_sweeps(&mut ascent, 0.1 * tol, opts.max_sweeps);
        let rho = ascent.density();
        oracle_calls += 1;
        let violated = prob.violated(graph, &rho, threshold)?;
        let (value, dual) = primal_dual(graph, prob, &ascent, &rho);
        let gap_ok = (value - dual).abs() <= tol * (1.0 + value);
        if violated.is_empty() && inner_ok && gap_ok {
            converged = true;
            break;
        }
        for (path, b) in violated {
            ascent.add(path, b);
        }
        ascent.prune(PRUNE_FLOOR, PRUNE_ROUNDS);
        ascent.refresh_load();
    }
    finish(graph, prob, &ascent, converged, iterations, oracle_calls)
}

/// Exhaustive solve over every simple boundary-to-boundary path; for graphs
/// with at most [`BRUTE_FORCE_NODE_LIMIT`] nodes.
pub fn solve_modulus_bruteforce(graph: &MetricGraph, prob: &ModulusProblem) -> Result<DualityCertificate> {
    if graph.node_count() > BRUTE_FORCE_NODE_LIMIT {
        return Err(Error::Budget(format!(
            "exhaustive enumeration supports at most {BRUTE_FORCE_NODE_LIMIT} nodes, graph has {}",
            graph.node_count()
        )));
    }
    prob.check_graph(graph)?;
    if prob.bound_range(graph).is_none() {
        return zero_certificate(graph, prob);
    }
    let family: Vec<(Path, f64)> = match prob.bound() {
        Bound::Explicit(family) => family.iter().filter(|(_, b)| *b > 0.0).cloned().collect(),
        _ => simple_boundary_paths(graph)?
            .into_iter()
            .map(|path| {
                let b = prob.path_bound(&path);
                (path, b)
            })
            .filter(|(_, b)| *b > 0.0)
            .collect(),
    };
    let mut ascent = Ascent::new(graph, prob.p());
    for (path, b) in family {
        ascent.add(path, b);
    }
    let mut converged = false;
    let mut iterations = 0;
    while iterations < 2_000 {
        iterations += 1;
        // sweep only paths that carry mass or are violated; the full
        // family is rechecked below
        let working: Vec<usize> = (0..ascent.paths.len())
            .filter(|&k| ascent.paths[k].lambda > 0.0 || ascent.residual(k) > 2.5e-12)
            .collect();
        for _ in 0..500 {
            ascent.sweep_subset(&working, 2.5e-12);
            if ascent.max_residual_subset(&working) <= 1e-11 {
                break;
            }
        }
        ascent.refresh_load();
        let rho = ascent.density();
        let (value, dual) = primal_dual(graph, prob, &ascent, &rho);
        if (value - dual).abs() <= 1e-10 * (1.0 + value) && ascent.max_residual() <= 1e-9 {
            converged = true;
            break;
        }
    }
    finish(graph, prob, &ascent, converged, iterations, 0)
}

fn run_sweeps(ascent: &mut Ascent, tol: f64, max_sweeps: usize) -> bool {
    for i in 0..max_sweeps {
        ascent.sweep(0.25 * tol);
        if i % 4 == 3 && ascent.max_residual() <= tol {
            return true;
        }
    }
    ascent.max_residual() <= tol
}

fn primal_dual(graph: &MetricGraph, prob: &ModulusProblem, ascent: &Ascent, rho: &DensityField) -> (f64, f64) {
    let p = prob.p();
    let value = rho.p_norm(graph, p);
    if value == 0.0 {
        return (0.0, 0.0);
    }
    let scale = p * value.powf(p - 1.0);
    let dual = ascent.paths.iter().map(|a| a.lambda * a.bound).sum::<f64>() / scale;
    (value, dual)
}

fn finish(
    graph: &MetricGraph,
    prob: &ModulusProblem,
    ascent: &Ascent,
    converged: bool,
    iterations: usize,
    oracle_calls: usize,
) -> Result<DualityCertificate> {
    let p = prob.p();
    let rho = ascent.density();
    let value = rho.p_norm(graph, p);
    let mut eta = CurveMeasure::new();
    if value > 0.0 {
        let scale = p * value.powf(p - 1.0);
        for a in ascent.paths.iter().filter(|a| a.lambda > 0.0) {
            eta.add(a.path.clone(), a.lambda / scale)?;
        }
    }
    DualityCertificate::assemble(graph, prob, rho, eta, converged, iterations, oracle_calls)
}

fn zero_certificate(graph: &MetricGraph, prob: &ModulusProblem) -> Result<DualityCertificate> {
    DualityCertificate::assemble(
        graph,
        prob,
        DensityField::zeros(graph.edge_count()),
        CurveMeasure::new(),
        true,
        0,
        0,
    )
}

/// Worst constraint of a density against a modulus problem.
#[derive(Clone, Debug, PartialEq)]
pub struct AdmissibilityReport {
    /// Smallest slack over the family; `None` when every bound vanishes.
    pub worst_slack: Option<f64>,
    pub witness: Option<Path>,
    pub witness_bound: Option<f64>,
    pub tolerance: f64,
    /// `worst_slack >= -tolerance`.
    pub pass: bool,
}

pub fn check_admissibility(
    graph: &MetricGraph,
    rho: &DensityField,
    prob: &ModulusProblem,
    tol: f64,
) -> Result<AdmissibilityReport> {
    let worst = prob.worst_slack(graph, rho)?;
    let pass = worst.as_ref().map_or(true, |(_, s, _)| *s >= -tol);
    Ok(match worst {
        Some((path, slack, b)) => AdmissibilityReport {
            worst_slack: Some(slack),
            witness: Some(path),
            witness_bound: Some(b),
            tolerance: tol,
            pass,
        },
        None => AdmissibilityReport {
            worst_slack: None,
            witness: None,
            witness_bound: None,
            tolerance: tol,
            pass,
        },
    })
}
