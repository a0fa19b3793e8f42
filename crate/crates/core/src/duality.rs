//! Verification of duality certificates and extraction of gradient curves.
//!
//! Everything here is recomputed from `(rho, eta)` and the problem data; the
//! numbers a solver stored inside a certificate are only compared against
//! the recomputed ones.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::modulus::{
    compute_residuals, normalized_density_power, solve_modulus_with, DualityCertificate,
    ModulusProblem, SolverOptions,
};
use crate::pharmonic::{minimal_upper_gradient, solve_dirichlet, NodeFunction};
use crate::space::{transpose_measure, DensityField, EdgeId, MetricGraph, Path};

/// Outcome of one named check.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Check {
    pub pass: bool,
    pub residual: f64,
    pub tolerance: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub witness: Option<String>,
}

impl Check {
    /// The witness is kept only for failing checks.
    fn new(residual: f64, tolerance: f64, witness: Option<String>) -> Self {
        let pass = residual <= tolerance;
        Self {
            pass,
            residual,
            tolerance,
            witness: if pass { None } else { witness },
        }
    }
}

/// Per-check results of [`verify_certificate`].
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct VerificationReport {
    pub admissibility: Check,
    pub barycenter: Check,
    pub strong_duality: Check,
    pub complementary_slackness: Check,
    pub density_identity: Check,
    /// Stored `value`, `mod` and `dual_value` against recomputed ones.
    pub stored_values: Check,
}

impl VerificationReport {
    pub fn checks(&self) -> [(&'static str, &Check); 6] {
        [
            ("admissibility", &self.admissibility),
            ("barycenter", &self.barycenter),
            ("strong_duality", &self.strong_duality),
            ("complementary_slackness", &self.complementary_slackness),
            ("density_identity", &self.density_identity),
            ("stored_values", &self.stored_values),
        ]
    }

    pub fn passed(&self) -> bool {
        self.checks().iter().all(|(_, c)| c.pass)
    }

    pub fn failures(&self) -> Vec<&'static str> {
        self.checks()
            .iter()
            .filter(|(_, c)| !c.pass)
            .map(|(name, _)| *name)
            .collect()
    }

    /// One line per check.
    pub fn summary(&self) -> String {
        let mut out = String::new();
        for (name, c) in self.checks() {
            out.push_str(&format!(
                "{:<24} {}  residual {:.3e}  tolerance {:.1e}",
                name,
                if c.pass { "pass" } else { "FAIL" },
                c.residual,
                c.tolerance
            ));
            if let Some(w) = &c.witness {
                out.push_str(&format!("  witness {w}"));
            }
            out.push('\n');
        }
        out
    }
}

fn describe(path: &Path) -> String {
    format!("path {:?}", path.nodes())
}

/// Recomputes and checks admissibility, the barycenter bound, strong
/// duality, complementary slackness, the density identity and the stored
/// scalar values of `cert`.
///
/// Failures are reported in the result. An error is returned only when the
/// certificate does not live on `graph`.
pub fn verify_certificate(
    graph: &MetricGraph,
    prob: &ModulusProblem,
    cert: &DualityCertificate,
    tol: f64,
) -> Result<VerificationReport> {
    let p = prob.p();
    let rho = &cert.rho;
    let r = compute_residuals(graph, prob, rho, &cert.eta)?;
    let value = rho.p_norm(graph, p);
    let dual: f64 = cert.eta.iter().map(|(path, m)| m * prob.path_bound(path)).sum();

    let worst = prob.worst_slack(graph, rho)?;
    let admissibility = match &worst {
        Some((path, slack, _)) if *slack < 0.0 => Check::new(
            -slack,
            tol,
            Some(format!("{} slack {:.3e}", describe(path), slack)),
        ),
        _ => Check::new(0.0, tol, None),
    };

    let barycenter = Check::new((r.barycenter_q_norm - 1.0).max(0.0), tol, None);
    let strong_duality = Check::new((value - dual).abs() / (1.0 + value), tol, None);

    let mut slack_witness = None;
    let mut slackness: f64 = 0.0;
    for (path, _) in cert.eta.iter() {
        let b = prob.path_bound(path);
        let integral = crate::space::integral_unchecked(graph, rho.values(), path);
        let res = (integral - b).abs() / (1.0 + b);
        if res > slackness {
            slackness = res;
            slack_witness = Some(format!("{} integral {integral:.6e} bound {b:.6e}", describe(path)));
        }
    }
    let complementary_slackness = Check::new(slackness, tol, slack_witness);

    let transport = transpose_measure(graph, &cert.eta)?.density(graph);
    let target = normalized_density_power(rho, value, p);
    let mut density: f64 = 0.0;
    let mut density_witness = None;
    for (e, (a, b)) in transport.iter().zip(&target).enumerate() {
        let d = (a - b).abs();
        if d > density {
            density = d;
            density_witness = Some(format!("edge {e}: transport {a:.6e} vs {b:.6e}"));
        }
    }
    let density_identity = Check::new(density, tol, density_witness);

    let stored = [
        ((cert.value - value).abs(), "value"),
        ((cert.modulus - value.powf(p)).abs(), "mod"),
        ((cert.dual_value - dual).abs(), "dual_value"),
        ((cert.p - p).abs(), "p"),
    ];
    let (worst_stored, name) = stored
        .iter()
        .copied()
        .fold((0.0, ""), |acc, x| if x.0 > acc.0 { x } else { acc });
    let stored_values = Check::new(
        worst_stored / (1.0 + value),
        tol,
        (worst_stored > 0.0).then(|| format!("stored {name} differs by {worst_stored:.3e}")),
    );

    Ok(VerificationReport {
        admissibility,
        barycenter,
        strong_duality,
        complementary_slackness,
        density_identity,
        stored_values,
    })
}

/// Largest `integral(g, prefix) - |u(end) - u(start)|` over all prefixes of
/// `path`, including the whole path.
pub fn prefix_defect(graph: &MetricGraph, g: &DensityField, u: &NodeFunction, path: &Path) -> f64 {
    let start = u.get(path.source());
    let mut integral = 0.0;
    let mut worst = f64::NEG_INFINITY;
    for (i, &e) in path.edges().iter().enumerate() {
        integral += g.values()[e] * graph.edge(e).length;
        let end = u.get(path.nodes()[i + 1]);
        worst = worst.max(integral - (end - start).abs());
    }
    worst
}

/// Support paths of `eta` that are gradient curves of `u` up to `tol`:
/// `|u(end) - u(start)| >= integral(g_u, prefix) - tol` for the whole path
/// and every prefix. Returned in path order with their masses.
pub fn extract_gradient_curves(
    graph: &MetricGraph,
    cert: &DualityCertificate,
    u: &NodeFunction,
    tol: f64,
) -> Result<Vec<(Path, f64)>> {
    let g = minimal_upper_gradient(graph, u)?;
    Ok(cert
        .eta
        .iter()
        .filter(|(path, _)| prefix_defect(graph, &g, u, path) <= tol)
        .map(|(path, m)| (path.clone(), m))
        .collect())
}

/// `(sum_path eta(path) * length(path within E), sum_{e in E} (rho(e)/V)^(p-1) mu(e))`.
pub fn coverage_identity(graph: &MetricGraph, cert: &DualityCertificate, edges: &[EdgeId]) -> Result<(f64, f64)> {
    let mut inside = vec![false; graph.edge_count()];
    for &e in edges {
        if e >= graph.edge_count() {
            return Err(Error::InvalidArgument(format!("edge {e} is not in the graph")));
        }
        inside[e] = true;
    }
    let lhs = cert
        .eta
        .iter()
        .map(|(path, m)| {
            m * path
                .edges()
                .iter()
                .filter(|&&e| inside[e])
                .map(|&e| graph.edge(e).length)
                .sum::<f64>()
        })
        .sum();
    let power = normalized_density_power(&cert.rho, cert.rho.p_norm(graph, cert.p), cert.p);
    let rhs = graph
        .edges()
        .iter()
        .zip(&power)
        .zip(&inside)
        .filter(|(_, &keep)| keep)
        .map(|((e, w), _)| w * e.measure)
        .sum();
    Ok((lhs, rhs))
}

/// Edges with `rho(e) > tol` that no support path of `eta` traverses.
pub fn uncovered_edges(cert: &DualityCertificate, tol: f64) -> Vec<EdgeId> {
    let mut covered = vec![false; cert.rho.len()];
    for (path, _) in cert.eta.iter() {
        for &e in path.edges() {
            covered[e] = true;
        }
    }
    cert.rho
        .values()
        .iter()
        .enumerate()
        .filter(|&(e, &r)| r > tol && !covered[e])
        .map(|(e, _)| e)
        .collect()
}

/// Options for [`theorem_one_report_with`].
#[derive(Clone, Debug)]
pub struct PipelineOptions {
    /// Solver tolerance for both the Dirichlet and the modulus problem.
    pub tol: f64,
    pub max_iter: usize,
    /// Tolerance of the gradient-curve, energy and equivalence checks.
    pub identity_tol: f64,
    /// Relative tolerance of the coverage identity.
    pub coverage_tol: f64,
    pub subsets: usize,
    pub seed: u64,
}

impl PipelineOptions {
    pub fn new(tol: f64) -> Self {
        Self {
            tol,
            max_iter: 500,
            identity_tol: (10.0 * tol).max(1e-4),
            coverage_tol: (10.0 * tol).max(1e-6),
            subsets: 100,
            seed: 0,
        }
    }
}

/// End-to-end comparison of the p-Dirichlet solution with the modulus
/// certificate for endpoint bounds `|f(x) - f(y)|`.
#[derive(Clone, Debug, Serialize)]
pub struct TheoremOneReport {
    pub p: f64,
    pub dirichlet_energy: f64,
    pub dirichlet_converged: bool,
    /// `||g_u||_p`.
    pub gradient_norm: f64,
    pub modulus_value: f64,
    pub dual_value: f64,
    pub dual_mass: f64,
    pub modulus_converged: bool,
    pub iterations: usize,
    pub verification: VerificationReport,
    /// `||g_u - rho*||_p / ||rho*||_p`.
    pub equivalence: Check,
    /// `| ||g_u||_p - sum eta |f difference| |`, relative to `1 + V`.
    pub energy_identity: Check,
    pub support_paths: usize,
    pub gradient_curves: Check,
    /// Largest relative coverage defect over random edge subsets.
    pub coverage: Check,
    pub uncovered_edges: Vec<EdgeId>,
    pub edge_coverage: Check,
}

impl TheoremOneReport {
    pub fn passed(&self) -> bool {
        self.dirichlet_converged
            && self.modulus_converged
            && self.verification.passed()
            && self.checks().iter().all(|(_, c)| c.pass)
    }

    pub fn checks(&self) -> [(&'static str, &Check); 5] {
        [
            ("equivalence", &self.equivalence),
            ("energy_identity", &self.energy_identity),
            ("gradient_curves", &self.gradient_curves),
            ("coverage", &self.coverage),
            ("edge_coverage", &self.edge_coverage),
        ]
    }

    pub fn summary(&self) -> String {
        let mut out = format!(
            "p = {}\n||g_u||_p = {:.10}\nmodulus value = {:.10}\ndual value = {:.10}\ndual mass = {:.10}\n\
             dirichlet converged = {}\nmodulus converged = {} ({} rounds)\n",
            self.p,
            self.gradient_norm,
            self.modulus_value,
            self.dual_value,
            self.dual_mass,
            self.dirichlet_converged,
            self.modulus_converged,
            self.iterations
        );
        out.push_str(&self.verification.summary());
        for (name, c) in self.checks() {
            out.push_str(&format!(
                "{:<24} {}  residual {:.3e}  tolerance {:.1e}",
                name,
                if c.pass { "pass" } else { "FAIL" },
                c.residual,
                c.tolerance
            ));
            if let Some(w) = &c.witness {
                out.push_str(&format!("  witness {w}"));
            }
            out.push('\n');
        }
        out
    }
}

pub fn theorem_one_report(graph: &MetricGraph, f: &NodeFunction, p: f64, tol: f64) -> Result<TheoremOneReport> {
    theorem_one_report_with(graph, f, p, &PipelineOptions::new(tol))
}

pub fn theorem_one_report_with(
    graph: &MetricGraph,
    f: &NodeFunction,
    p: f64,
    opts: &PipelineOptions,
) -> Result<TheoremOneReport> {
    let dirichlet = solve_dirichlet(graph, f, p, opts.tol)?;
    let u = &dirichlet.u;
    let g = minimal_upper_gradient(graph, u)?;
    let gradient_norm = g.p_norm(graph, p);

    let prob = ModulusProblem::endpoint(p, f.clone())?;
    let cert = solve_modulus_with(graph, &prob, &SolverOptions::new(opts.tol, opts.max_iter))?;
    let verification = verify_certificate(graph, &prob, &cert, 10.0 * opts.tol)?;

    let diff = DensityField::new(
        g.values()
            .iter()
            .zip(cert.rho.values())
            .map(|(a, b)| (a - b).abs())
            .collect(),
    )?;
    let diff_norm = diff.p_norm(graph, p);
    let relative = if cert.value > 0.0 {
        diff_norm / cert.value
    } else {
        diff_norm
    };
    let equivalence = Check::new(relative, opts.identity_tol, None);

    let pairing: f64 = cert
        .eta
        .iter()
        .map(|(path, m)| m * (f.get(path.source()) - f.get(path.target())).abs())
        .sum();
    let energy_identity = Check::new(
        (gradient_norm - pairing).abs() / (1.0 + cert.value),
        opts.identity_tol,
        None,
    );

    let scale = 1.0 + f.values().iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let curves = extract_gradient_curves(graph, &cert, u, opts.identity_tol * scale)?;
    let missing = cert.eta.len() - curves.len();
    let gradient_curves = Check::new(
        missing as f64,
        0.0,
        (missing > 0).then(|| {
            let kept: std::collections::BTreeSet<&Path> = curves.iter().map(|(p, _)| p).collect();
            let bad = cert.eta.iter().find(|(p, _)| !kept.contains(p)).map(|(p, _)| p.clone());
            format!("{missing} support paths are not gradient curves, e.g. {}", bad.map_or(String::new(), |p| describe(&p)))
        }),
    );

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut worst_coverage: f64 = 0.0;
    let mut coverage_witness = None;
    for i in 0..opts.subsets {
        let keep: f64 = rng.gen();
        let subset: Vec<EdgeId> = (0..graph.edge_count()).filter(|_| rng.gen::<f64>() < keep).collect();
        let (lhs, rhs) = coverage_identity(graph, &cert, &subset)?;
        let defect = (lhs - rhs).abs() / (1.0 + rhs);
        if defect > worst_coverage {
            worst_coverage = defect;
            coverage_witness = Some(format!("subset {i}: {lhs:.6e} vs {rhs:.6e}"));
        }
    }
    let coverage = Check::new(worst_coverage, opts.coverage_tol, coverage_witness);

    let uncovered = uncovered_edges(&cert, opts.tol);
    let edge_coverage = Check::new(
        uncovered.len() as f64,
        0.0,
        uncovered.first().map(|e| format!("edge {e}")),
    );

    Ok(TheoremOneReport {
        p,
        dirichlet_energy: dirichlet.energy,
        dirichlet_converged: dirichlet.converged,
        gradient_norm,
        modulus_value: cert.value,
        dual_value: cert.dual_value,
        dual_mass: cert.dual_mass,
        modulus_converged: cert.converged,
        iterations: cert.iterations,
        verification,
        equivalence,
        energy_identity,
        support_paths: cert.eta.len(),
        gradient_curves,
        coverage,
        uncovered_edges: uncovered,
        edge_coverage,
    })
}
