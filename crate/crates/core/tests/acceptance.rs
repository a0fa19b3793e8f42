//! Acceptance criteria, one test per criterion. Each prints a single
//! `criterion N: PASS|FAIL` line. Tests hold a shared lock so that the
//! runtime limits are measured without interference.

mod common;

use std::io::Write;
use std::sync::Mutex;
use std::time::{Duration, Instant};

use common::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use pmodulus::duality::{coverage_identity, theorem_one_report_with, PipelineOptions, TheoremOneReport};
use pmodulus::modulus::{solve_modulus, solve_modulus_bruteforce, DualityCertificate, ModulusProblem};
use pmodulus::pharmonic::NodeFunction;
use pmodulus::sheaf::{closed_form_energy, sheaf_demo};
use pmodulus::space::{build_domain, comb_area, comb_bar, DomainSpec, EdgeId, MetricGraph};

static SERIAL: Mutex<()> = Mutex::new(());

fn report(n: usize, title: &str, failures: &[String], elapsed: Duration) {
    let status = if failures.is_empty() { "PASS" } else { "FAIL" };
    let mut err = std::io::stderr().lock();
    let _ = writeln!(err, "criterion {n}: {status} {title} ({:.2} s)", elapsed.as_secs_f64());
    for f in failures {
        let _ = writeln!(err, "    {f}");
    }
    assert!(failures.is_empty(), "criterion {n} failed: {failures:?}");
}

fn check(failures: &mut Vec<String>, ok: bool, what: impl Into<String>) {
    if !ok {
        failures.push(what.into());
    }
}

fn within(value: f64, target: f64, rel: f64) -> bool {
    (value - target).abs() <= rel * target.abs()
}

#[test]
fn criterion_1_two_edge_path() {
    let _guard = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let start = Instant::now();
    let g = two_edge();
    let prob = ModulusProblem::constant(2.0, 1.0).unwrap();
    let cert = solve_modulus(&g, &prob, 1e-12, 100).unwrap();
    let elapsed = start.elapsed();
    let s = 0.5f64.sqrt();
    let mut f = Vec::new();
    check(&mut f, cert.converged, "solver did not converge");
    check(&mut f, (cert.modulus - 0.5).abs() <= 1e-8, format!("Mod = {}", cert.modulus));
    check(
        &mut f,
        max_abs_diff(cert.rho.values(), &[0.5, 0.5]) <= 1e-8,
        format!("rho = {:?}", cert.rho.values()),
    );
    check(&mut f, (cert.value - s).abs() <= 1e-8, format!("V = {}", cert.value));
    check(&mut f, (cert.dual_value - s).abs() <= 1e-8, format!("D = {}", cert.dual_value));
    check(&mut f, (cert.dual_mass - s).abs() <= 1e-8, format!("mass = {}", cert.dual_mass));
    check(&mut f, elapsed < Duration::from_millis(100), "runtime over 0.1 s");
    report(1, "two-edge path closed form", &f, elapsed);
}

#[test]
fn criterion_2_oracle_equivalence() {
    let _guard = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let start = Instant::now();
    let suite = suite();
    let mut f = Vec::new();
    check(&mut f, suite.len() >= 20, format!("only {} instances", suite.len()));
    for inst in &suite {
        check(&mut f, inst.graph.node_count() <= 14, format!("{} is too large", inst.name));
        let cut = solve_modulus(&inst.graph, &inst.prob, 1e-10, 1000).unwrap();
        let brute = solve_modulus_bruteforce(&inst.graph, &inst.prob).unwrap();
        check(&mut f, cut.converged && brute.converged, format!("{}: not converged", inst.name));
        check(
            &mut f,
            (cut.value - brute.value).abs() <= 1e-6,
            format!("{}: value {} vs {}", inst.name, cut.value, brute.value),
        );
        let d = max_abs_diff(cut.rho.values(), brute.rho.values());
        check(&mut f, d <= 1e-6, format!("{}: rho differs by {d:e}", inst.name));
    }
    let elapsed = start.elapsed();
    check(&mut f, elapsed < Duration::from_secs(10), "runtime over 10 s");
    report(2, "cutting planes agree with enumeration", &f, elapsed);
}

fn random_small(rng: &mut ChaCha8Rng, p: f64) -> (MetricGraph, ModulusProblem) {
    let n = rng.gen_range(4..=9);
    let extra = rng.gen_range(0..=4);
    let g = random_graph(rng, n, extra);
    let f: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    (g, ModulusProblem::endpoint(p, NodeFunction::new(f).unwrap()).unwrap())
}

#[test]
fn criterion_3_certificate_properties() {
    let _guard = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let start = Instant::now();
    let tol = 1e-8;
    let mut f = Vec::new();
    let mut converged = 0;
    for inst in suite() {
        let cert = solve_modulus(&inst.graph, &inst.prob, tol, 1000).unwrap();
        if !cert.converged {
            continue;
        }
        converged += 1;
        let r = &cert.residuals;
        let name = &inst.name;
        check(&mut f, r.gap <= tol * (1.0 + cert.value), format!("{name}: gap {:e}", r.gap));
        check(&mut f, r.slackness <= tol, format!("{name}: slackness {:e}", r.slackness));
        check(&mut f, r.density <= tol, format!("{name}: density {:e}", r.density));
        check(
            &mut f,
            r.barycenter_q_norm <= 1.0 + tol,
            format!("{name}: barycenter {}", r.barycenter_q_norm),
        );
    }
    check(&mut f, converged > 0, "no instance converged");

    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut bounded = 0;
    for i in 0..50 {
        let p = [1.5, 2.0, 3.0][i % 3];
        let (g, prob) = random_small(&mut rng, p);
        let Some((sup, _)) = prob.bound_range(&g) else {
            continue;
        };
        bounded += 1;
        let m = solve_modulus_bruteforce(&g, &prob).unwrap().modulus;
        let unit = solve_modulus_bruteforce(&g, &ModulusProblem::constant(p, 1.0).unwrap()).unwrap().modulus;
        let slack = sup.powf(p) * unit - m;
        check(&mut f, slack >= -1e-9, format!("instance {i}: bound slack {slack:e}"));

        // drop a random half of the boundary pairs
        let fam = family(&g, &prob);
        let sub: Vec<_> = fam
            .iter()
            .filter(|(path, _)| (path.source() * 31 + path.target() * 17 + i) % 2 == 0)
            .cloned()
            .collect();
        let m_sub = solve_modulus_bruteforce(&g, &ModulusProblem::explicit(p, sub).unwrap()).unwrap().modulus;
        let slack = m - m_sub;
        check(&mut f, slack >= -1e-9, format!("instance {i}: monotonicity slack {slack:e}"));
    }
    check(&mut f, bounded >= 45, format!("only {bounded} nontrivial random instances"));
    report(3, "certificate property suite", &f, start.elapsed());
}

fn rectangle_report(p: f64) -> TheoremOneReport {
    let g = build_domain(&DomainSpec::Rectangle { a: 2.0, b: 1.0, h: 1.0 / 32.0 }).unwrap();
    let f = NodeFunction::from_coordinates(&g, |x, _| x).unwrap();
    theorem_one_report_with(&g, &f, p, &PipelineOptions::new(1e-6)).unwrap()
}

#[test]
fn criterion_4_rectangle() {
    let _guard = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let start = Instant::now();
    let r = rectangle_report(2.0);
    let elapsed = start.elapsed();
    let mut f = Vec::new();
    check(&mut f, r.modulus_converged && r.dirichlet_converged, "solvers did not converge");
    check(
        &mut f,
        within(r.gradient_norm, 2f64.sqrt(), 0.01),
        format!("gradient norm {}", r.gradient_norm),
    );
    check(&mut f, within(r.dual_mass, 0.5f64.sqrt(), 0.02), format!("dual mass {}", r.dual_mass));
    check(
        &mut f,
        r.equivalence.residual <= 1e-3,
        format!("relative gradient error {:e}", r.equivalence.residual),
    );
    check(&mut f, elapsed < Duration::from_secs(60), "runtime over 60 s");
    report(4, "rectangle 2 x 1", &f, elapsed);
}

fn comb_certificate(k: usize, h: f64) -> (MetricGraph, DualityCertificate) {
    let g = build_domain(&DomainSpec::Comb { k, h }).unwrap();
    let f = NodeFunction::from_coordinates(&g, |x, _| x).unwrap();
    let cert = solve_modulus(&g, &ModulusProblem::endpoint(2.0, f).unwrap(), 1e-6, 1000).unwrap();
    (g, cert)
}

/// Horizontal edges of the strip `(left, right) x [0, 1/2]`.
fn strip_edges(g: &MetricGraph, left: f64, right: f64) -> Vec<EdgeId> {
    (0..g.edge_count())
        .filter(|&e| {
            let edge = g.edge(e);
            let (a, b) = (g.node(edge.u), g.node(edge.v));
            let (x, y) = g.midpoint(e);
            a.y == b.y && x > left && x < right && y <= 0.5
        })
        .collect()
}

/// Components of the lower half of the comb between consecutive bars,
/// counted from the right.
fn component(n: usize) -> (f64, f64) {
    let right = if n == 1 { 1.0 } else { comb_bar(n - 1).0 };
    (comb_bar(n).1, right)
}

#[test]
fn criterion_5_comb() {
    let _guard = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let start = Instant::now();
    let h = 1.0 / 64.0;
    let mut f = Vec::new();
    let mut masses = Vec::new();
    for k in 1..=3 {
        let (g, cert) = comb_certificate(k, h);
        check(&mut f, cert.converged, format!("k = {k}: not converged"));
        masses.push(cert.dual_mass);
        if k == 3 {
            let target = 0.5 * comb_area(3).powf(-0.5);
            for n in 1..=3 {
                let (left, right) = component(n);
                let (lhs, rhs) = coverage_identity(&g, &cert, &strip_edges(&g, left, right)).unwrap();
                let mass = lhs / (right - left);
                check(
                    &mut f,
                    within(mass, target, 0.03),
                    format!("component {n}: mass {mass} vs {target}"),
                );
                check(
                    &mut f,
                    (lhs - rhs).abs() <= 0.03 * rhs,
                    format!("component {n}: coverage {lhs} vs {rhs}"),
                );
            }
        }
    }
    check(
        &mut f,
        masses.windows(2).all(|w| w[1] > w[0]),
        format!("total masses {masses:?} are not increasing"),
    );
    let elapsed = start.elapsed();
    check(&mut f, elapsed < Duration::from_secs(120), "runtime over 120 s");
    report(5, "comb truncations", &f, elapsed);
}

#[test]
fn criterion_6_sheaf_counterexample() {
    let _guard = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let start = Instant::now();
    let r = sheaf_demo(2.0, 1.0 / 128.0, 0.25).unwrap();
    let mut f = Vec::new();
    check(&mut f, r.energy_u_union == 3.0, format!("E(u) = {}", r.energy_u_union));
    check(
        &mut f,
        (r.energy_perturbed_union - 2.9375).abs() <= 0.02,
        format!("E(u + phi/4) = {}", r.energy_perturbed_union),
    );
    for (name, min, eu) in [
        ("omega1", &r.minimized_omega1, r.energy_u_omega1),
        ("omega2", &r.minimized_omega2, r.energy_u_omega2),
    ] {
        check(&mut f, min.energy >= 2.0 - 0.02, format!("{name}: minimized {}", min.energy));
        check(&mut f, min.energy >= eu - 0.02, format!("{name}: beats u ({} vs {eu})", min.energy));
    }
    check(
        &mut f,
        r.minimized_union.energy <= 2.94 && r.minimized_union.energy < 3.0 - 0.05,
        format!("union: minimized {}", r.minimized_union.energy),
    );
    for p in [1.5, 2.0, 3.0, 5.0] {
        let d = 1e-4;
        let slope = (closed_form_energy(d, p).unwrap() - closed_form_energy(0.0, p).unwrap()) / d;
        check(&mut f, slope < 0.0, format!("p = {p}: slope {slope}"));
    }
    let elapsed = start.elapsed();
    check(&mut f, elapsed < Duration::from_secs(120), "runtime over 120 s");
    report(6, "failure of minimality on the union", &f, elapsed);
}

fn pipeline_failures(name: &str, r: &TheoremOneReport, f: &mut Vec<String>) {
    check(f, r.modulus_converged, format!("{name}: not converged"));
    check(f, r.verification.passed(), format!("{name}: {}", r.verification.summary()));
    for (check_name, c) in [
        ("energy identity", &r.energy_identity),
        ("gradient curves", &r.gradient_curves),
        ("coverage", &r.coverage),
        ("edge coverage", &r.edge_coverage),
    ] {
        check(
            f,
            c.pass,
            format!("{name}: {check_name} residual {:e} over {:e}", c.residual, c.tolerance),
        );
    }
    check(f, r.uncovered_edges.is_empty(), format!("{name}: uncovered edges {:?}", r.uncovered_edges));
}

#[test]
fn criterion_7_pipeline() {
    let _guard = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let start = Instant::now();
    let mut f = Vec::new();
    for p in [2.0, 3.0] {
        let r = rectangle_report(p);
        check(&mut f, r.coverage.tolerance <= 1e-5, "rectangle coverage tolerance too loose");
        pipeline_failures(&format!("rectangle p = {p}"), &r, &mut f);
    }
    let g = build_domain(&DomainSpec::Comb { k: 2, h: 1.0 / 32.0 }).unwrap();
    let u = NodeFunction::from_coordinates(&g, |x, _| x).unwrap();
    let mut opts = PipelineOptions::new(1e-6);
    opts.coverage_tol = 0.03;
    opts.seed = 11;
    let r = theorem_one_report_with(&g, &u, 2.0, &opts).unwrap();
    pipeline_failures("comb k = 2", &r, &mut f);
    report(7, "duality pipeline identities", &f, start.elapsed());
}
