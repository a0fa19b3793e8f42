//! `pmod`: build domains, solve modulus and Dirichlet problems, verify
//! certificates, run the sheaf counterexample and render figures.

use std::collections::BTreeMap;
use std::fs;
use std::io::{Read, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;
use thiserror::Error;

use pmodulus::duality::{theorem_one_report_with, verify_certificate, Check, PipelineOptions};
use pmodulus::io;
use pmodulus::modulus::{solve_modulus_bruteforce, solve_modulus_with, Bound, ModulusProblem, SolverOptions};
use pmodulus::pharmonic::{solve_dirichlet_with, DirichletOptions, NodeFunction};
use pmodulus::render::{render_svg, Colormap, Style};
use pmodulus::sheaf::{self, CellGrid, MinimizeOptions, Region};
use pmodulus::space::{build_domain, DomainSpec, MetricGraph};

#[derive(Debug, Error)]
enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Lib(#[from] pmodulus::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Parser, Debug)]
#[command(name = "pmod", version, about = "Generalized p-modulus of curve families on metric graphs")]
struct Cli {
    /// Exponent p > 1.
    #[arg(long, global = true, default_value_t = 2.0)]
    p: f64,
    /// Solver tolerance [default: 1e-6 on grids, 1e-8 otherwise].
    #[arg(long, global = true)]
    tol: Option<f64>,
    /// Iteration cap of the solver in use.
    #[arg(long, global = true)]
    max_iter: Option<usize>,
    /// Grid spacing [default: 1/32 for domains, 1/128 for sheaf].
    #[arg(long, global = true)]
    grid_h: Option<f64>,
    /// Output file [default: standard output].
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    format: Format,
    /// Seed of the randomized checks.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
    Text,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum DomainKind {
    Rectangle,
    Comb,
    Lshape,
}

#[derive(Args, Debug)]
struct GraphSource {
    /// Build a grid domain.
    #[arg(long, value_enum, conflicts_with = "graph")]
    domain: Option<DomainKind>,
    /// Rectangle width.
    #[arg(long, default_value_t = 1.0)]
    a: f64,
    /// Rectangle height.
    #[arg(long, default_value_t = 1.0)]
    b: f64,
    /// Number of comb bars.
    #[arg(long, default_value_t = 3)]
    k: usize,
    /// Read a graph JSON file instead (`-` for standard input).
    #[arg(long)]
    graph: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct BoundArgs {
    /// Boundary data: `x`, `y`, `x+y` or `const=<c>`.
    #[arg(long, default_value = "x", conflicts_with = "bf_file")]
    bf: String,
    /// Boundary data as a node function JSON file.
    #[arg(long)]
    bf_file: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Emit the graph JSON of a grid domain.
    Domain {
        #[command(flatten)]
        source: GraphSource,
    },
    /// Solve the p-Dirichlet problem with the given boundary data.
    Dirichlet {
        #[command(flatten)]
        source: GraphSource,
        #[command(flatten)]
        bound: BoundArgs,
    },
    /// Solve the modulus problem and emit its certificate.
    Modulus {
        #[command(flatten)]
        source: GraphSource,
        #[command(flatten)]
        bound: BoundArgs,
        /// Enumerate every boundary-to-boundary path instead of cutting planes.
        #[arg(long)]
        bruteforce: bool,
    },
    /// Recheck a certificate against its graph.
    Verify {
        /// Certificate JSON (`-` for standard input).
        #[arg(long)]
        cert: PathBuf,
        /// Graph JSON (`-` for standard input).
        #[arg(long)]
        graph: PathBuf,
    },
    /// Compare the Dirichlet solution with the modulus certificate.
    Theorem1 {
        #[command(flatten)]
        source: GraphSource,
        #[command(flatten)]
        bound: BoundArgs,
    },
    /// Energies and minimizations of the sheaf counterexample.
    Sheaf {
        /// Perturbation size [default: the minimizer of the closed form].
        #[arg(long)]
        eps: Option<f64>,
        /// Field exported with `--format csv`.
        #[arg(long, value_enum, default_value_t = SheafField::MinimizedUnion)]
        field: SheafField,
    },
    /// Draw a graph, its density and the certificate's curves as SVG.
    Render {
        #[command(flatten)]
        source: GraphSource,
        /// Certificate whose density and curves are drawn.
        #[arg(long)]
        cert: Option<PathBuf>,
        /// Leave the curves out.
        #[arg(long)]
        no_curves: bool,
        #[arg(long, default_value_t = 640)]
        width: u32,
        #[arg(long, default_value_t = 480)]
        height: u32,
        #[arg(long, default_value = "tworamp")]
        colormap: String,
        #[arg(long)]
        title: Option<String>,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum SheafField {
    U,
    Perturbed,
    MinimizedUnion,
}

fn read_input(path: &PathBuf) -> CliResult<String> {
    if path.as_os_str() == "-" {
        let mut s = String::new();
        std::io::stdin().read_to_string(&mut s)?;
        Ok(s)
    } else {
        fs::read_to_string(path).map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))
    }
}

fn load_graph(source: &GraphSource, h: Option<f64>) -> CliResult<MetricGraph> {
    match (&source.graph, source.domain) {
        (Some(path), _) => Ok(io::graph_from_json(&read_input(path)?)?),
        (None, Some(kind)) => {
            let h = h.unwrap_or(1.0 / 32.0);
            let spec = match kind {
                DomainKind::Rectangle => DomainSpec::Rectangle { a: source.a, b: source.b, h },
                DomainKind::Comb => DomainSpec::Comb { k: source.k, h },
                DomainKind::Lshape => DomainSpec::Lshape { h },
            };
            Ok(build_domain(&spec)?)
        }
        (None, None) => Err(CliError::Usage("one of --domain or --graph is required".into())),
    }
}

fn default_tol(graph: &MetricGraph) -> f64 {
    if graph.meta().h.is_some() {
        1e-6
    } else {
        1e-8
    }
}

fn boundary_function(graph: &MetricGraph, expr: &str) -> CliResult<NodeFunction> {
    let f = match expr {
        "x" => NodeFunction::from_coordinates(graph, |x, _| x),
        "y" => NodeFunction::from_coordinates(graph, |_, y| y),
        "x+y" => NodeFunction::from_coordinates(graph, |x, y| x + y),
        other => {
            return Err(CliError::Usage(format!(
                "boundary data {other:?} is not a node function; expected x, y or x+y"
            )))
        }
    };
    Ok(f?)
}

fn load_function(graph: &MetricGraph, args: &BoundArgs) -> CliResult<NodeFunction> {
    match &args.bf_file {
        Some(path) => Ok(io::node_function_from_json(&read_input(path)?, graph.node_count())?),
        None => boundary_function(graph, &args.bf),
    }
}

fn load_problem(graph: &MetricGraph, p: f64, args: &BoundArgs) -> CliResult<ModulusProblem> {
    if args.bf_file.is_none() {
        if let Some(c) = args.bf.strip_prefix("const=") {
            let c: f64 = c
                .parse()
                .map_err(|_| CliError::Usage(format!("cannot parse constant bound {c:?}")))?;
            return Ok(ModulusProblem::new(p, Bound::Constant(c))?);
        }
    }
    Ok(ModulusProblem::endpoint(p, load_function(graph, args)?)?)
}

fn checks_csv<'a>(checks: impl IntoIterator<Item = (&'static str, &'a Check)>) -> String {
    let mut out = String::from("check,pass,residual,tolerance\n");
    for (name, c) in checks {
        out.push_str(&format!("{name},{},{},{}\n", c.pass, c.residual, c.tolerance));
    }
    out
}

fn unsupported(format: Format, command: &str) -> CliError {
    CliError::Usage(format!("--format {format:?} is not supported by {command}").to_lowercase())
}

/// Runs one subcommand; `Ok(false)` means a check failed.
fn run(cli: &Cli) -> CliResult<(String, bool)> {
    let p = cli.p;
    match &cli.command {
        Command::Domain { source } => {
            if source.domain.is_none() {
                return Err(CliError::Usage("domain requires --domain".into()));
            }
            let g = load_graph(source, cli.grid_h)?;
            let text = match cli.format {
                Format::Json => io::graph_to_json(&g)?,
                Format::Text => format!(
                    "{} domain: {} nodes, {} edges, {} boundary nodes, total measure {}\n",
                    g.meta().domain,
                    g.node_count(),
                    g.edge_count(),
                    g.boundary_nodes().len(),
                    g.total_measure()
                ),
                Format::Csv => return Err(unsupported(cli.format, "domain")),
            };
            Ok((text, true))
        }
        Command::Dirichlet { source, bound } => {
            let g = load_graph(source, cli.grid_h)?;
            let f = load_function(&g, bound)?;
            let mut opts = DirichletOptions::new(cli.tol.unwrap_or_else(|| default_tol(&g)));
            if let Some(m) = cli.max_iter {
                opts.max_sweeps = m;
            }
            let sol = solve_dirichlet_with(&g, &f, p, &opts)?;
            let text = match cli.format {
                Format::Json => {
                    let u: BTreeMap<usize, f64> = sol.u.values().iter().copied().enumerate().collect();
                    io::to_json(&json!({
                        "p": p,
                        "energy": sol.energy,
                        "stationarity": sol.stationarity,
                        "sweeps": sol.sweeps,
                        "converged": sol.converged,
                        "u": u,
                    }))?
                }
                Format::Csv => io::node_function_csv(&g, &sol.u)?,
                Format::Text => format!(
                    "p = {p}\nenergy = {:.12}\nstationarity = {:.3e}\nsweeps = {}\nconverged = {}\n",
                    sol.energy, sol.stationarity, sol.sweeps, sol.converged
                ),
            };
            Ok((text, sol.converged))
        }
        Command::Modulus { source, bound, bruteforce } => {
            let g = load_graph(source, cli.grid_h)?;
            let prob = load_problem(&g, p, bound)?;
            let cert = if *bruteforce {
                solve_modulus_bruteforce(&g, &prob)?
            } else {
                let tol = cli.tol.unwrap_or_else(|| default_tol(&g));
                solve_modulus_with(&g, &prob, &SolverOptions::new(tol, cli.max_iter.unwrap_or(500)))?
            };
            let text = match cli.format {
                Format::Json => io::certificate_to_json(&prob, &cert)?,
                Format::Csv => io::edge_field_csv(&g, cert.rho.values())?,
                Format::Text => format!(
                    "p = {}\nvalue = {:.12}\nmod = {:.12}\ndual value = {:.12}\ndual mass = {:.12}\n\
                     support paths = {}\nconverged = {} ({} rounds)\n\
                     residuals: gap {:.3e}, violation {:.3e}, slackness {:.3e}, density {:.3e}, barycenter {:.12}\n",
                    cert.p,
                    cert.value,
                    cert.modulus,
                    cert.dual_value,
                    cert.dual_mass,
                    cert.eta.len(),
                    cert.converged,
                    cert.iterations,
                    cert.residuals.gap,
                    cert.residuals.violation,
                    cert.residuals.slackness,
                    cert.residuals.density,
                    cert.residuals.barycenter_q_norm
                ),
            };
            Ok((text, cert.converged))
        }
        Command::Verify { cert, graph } => {
            if cert.as_os_str() == "-" && graph.as_os_str() == "-" {
                return Err(CliError::Usage("--cert and --graph cannot both read standard input".into()));
            }
            let g = io::graph_from_json(&read_input(graph)?)?;
            let cert_text = read_input(cert)?;
            let tol = cli.tol.unwrap_or_else(|| 10.0 * default_tol(&g));
            let (prob, c) = match io::certificate_from_json(&g, &cert_text) {
                Ok(loaded) => loaded,
                Err(e) => {
                    let failure = Check {
                        pass: false,
                        residual: f64::INFINITY,
                        tolerance: tol,
                        witness: Some(e.to_string()),
                    };
                    let text = match cli.format {
                        Format::Json => io::to_json(&json!({ "certificate_format": failure }))?,
                        Format::Csv => checks_csv([("certificate_format", &failure)]),
                        Format::Text => format!("certificate_format       FAIL  {e}\n"),
                    };
                    return Ok((text, false));
                }
            };
            let report = verify_certificate(&g, &prob, &c, tol)?;
            let text = match cli.format {
                Format::Json => io::to_json(&report)?,
                Format::Csv => checks_csv(report.checks()),
                Format::Text => report.summary(),
            };
            Ok((text, report.passed()))
        }
        Command::Theorem1 { source, bound } => {
            let g = load_graph(source, cli.grid_h)?;
            let f = load_function(&g, bound)?;
            let mut opts = PipelineOptions::new(cli.tol.unwrap_or_else(|| default_tol(&g)));
            if let Some(m) = cli.max_iter {
                opts.max_iter = m;
            }
            opts.seed = cli.seed;
            let report = theorem_one_report_with(&g, &f, p, &opts)?;
            let text = match cli.format {
                Format::Json => io::to_json(&report)?,
                Format::Csv => checks_csv(report.verification.checks().into_iter().chain(report.checks())),
                Format::Text => report.summary(),
            };
            Ok((text, report.passed()))
        }
        Command::Sheaf { eps, field } => {
            let h = cli.grid_h.unwrap_or(1.0 / 128.0);
            let eps = eps.unwrap_or_else(|| sheaf::stationary_epsilon(p));
            let mut opts = MinimizeOptions::default();
            if let Some(m) = cli.max_iter {
                opts.max_iter = m;
            }
            let report = sheaf::sheaf_demo_with(p, h, eps, &opts)?;
            let matches_closed_form = report
                .closed_form
                .map_or(true, |c| (report.energy_perturbed_union - c).abs() <= report.tolerance);
            let ok = report.sheaf_fails && matches_closed_form;
            let text = match cli.format {
                Format::Json => io::to_json(&report)?,
                Format::Text => report.summary(),
                Format::Csv => {
                    let grid = CellGrid::new(h)?;
                    let mask = grid.cell_mask(Region::Union);
                    let values = match field {
                        SheafField::U => grid.sample(|x, y| sheaf::eval_counterexample(x, y).map(|r| r.0))?,
                        SheafField::Perturbed => grid.sample(|x, y| sheaf::perturbed(x, y, eps))?,
                        SheafField::MinimizedUnion => report.minimized_union.v.clone(),
                    };
                    io::grid_field_csv(&sheaf::field_rows(&grid, &values, &mask))
                }
            };
            Ok((text, ok))
        }
        Command::Render { source, cert, no_curves, width, height, colormap, title } => {
            let g = load_graph(source, cli.grid_h)?;
            let colormap: Colormap = colormap.parse().map_err(|e: pmodulus::Error| CliError::Usage(e.to_string()))?;
            let style = Style { width: *width, height: *height, colormap, title: title.clone() };
            let loaded = match cert {
                Some(path) => Some(io::certificate_from_json(&g, &read_input(path)?)?.1),
                None => None,
            };
            let field = loaded.as_ref().map(|c| c.rho.values());
            let curves: Vec<_> = match (&loaded, no_curves) {
                (Some(c), false) => c.eta.iter().map(|(path, m)| (path.clone(), m)).collect(),
                _ => Vec::new(),
            };
            Ok((render_svg(&g, field, &curves, &style)?, true))
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(&cli) {
        Ok((text, ok)) => {
            let written = match &cli.out {
                Some(path) => fs::write(path, &text),
                None => std::io::stdout().lock().write_all(text.as_bytes()),
            };
            if let Err(e) = written {
                eprintln!("error: {e}");
                return ExitCode::from(2);
            }
            if ok {
                ExitCode::SUCCESS
            } else {
                eprintln!("error: one or more checks failed");
                ExitCode::from(1)
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
