//! JSON interchange for graphs, certificates, node functions and reports,
//! plus CSV export.
//!
//! Reals are written in the shortest decimal form that parses back to the
//! same `f64`, so every save/load cycle is lossless.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path as FsPath;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::modulus::{Bound, DualityCertificate, ModulusProblem, Residuals};
use crate::pharmonic::NodeFunction;
use crate::space::{CurveMeasure, DensityField, Edge, EdgeId, GraphMeta, MetricGraph, Node, NodeId, Path};

#[derive(Serialize)]
struct GraphOut<'a> {
    nodes: &'a [Node],
    edges: &'a [Edge],
    meta: &'a GraphMeta,
}

#[derive(Deserialize)]
struct GraphIn {
    nodes: Vec<Node>,
    edges: Vec<Edge>,
    #[serde(default)]
    meta: GraphMeta,
}

fn pretty<T: Serialize + ?Sized>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

/// Serializes any report type as pretty JSON with a trailing newline.
pub fn to_json<T: Serialize + ?Sized>(value: &T) -> Result<String> {
    pretty(value)
}

pub fn graph_to_json(graph: &MetricGraph) -> Result<String> {
    pretty(&GraphOut {
        nodes: graph.nodes(),
        edges: graph.edges(),
        meta: graph.meta(),
    })
}

pub fn graph_from_json(text: &str) -> Result<MetricGraph> {
    let g: GraphIn = serde_json::from_str(text)?;
    MetricGraph::new(g.nodes, g.edges, g.meta)
}

pub fn read_graph(path: impl AsRef<FsPath>) -> Result<MetricGraph> {
    graph_from_json(&fs::read_to_string(path)?)
}

pub fn write_graph(path: impl AsRef<FsPath>, graph: &MetricGraph) -> Result<()> {
    fs::write(path, graph_to_json(graph)?)?;
    Ok(())
}

#[derive(Serialize, Deserialize)]
struct EtaEntry {
    nodes: Vec<NodeId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    edges: Option<Vec<EdgeId>>,
    mass: f64,
}

#[derive(Serialize, Deserialize)]
struct FamilyEntry {
    nodes: Vec<NodeId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    edges: Option<Vec<EdgeId>>,
    bound: f64,
}

#[derive(Clone, Copy, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum BoundKind {
    Constant,
    Endpoint,
    Explicit,
}

/// `kind` selects which of the remaining fields is present.
#[derive(Serialize, Deserialize)]
struct BoundFile {
    kind: BoundKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    value: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    f: Option<BTreeMap<NodeId, f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    family: Option<Vec<FamilyEntry>>,
}

impl BoundFile {
    fn of(kind: BoundKind) -> Self {
        Self { kind, value: None, f: None, family: None }
    }
}

#[derive(Serialize, Deserialize)]
struct CertificateFile {
    p: f64,
    value: f64,
    #[serde(rename = "mod")]
    modulus: f64,
    dual_value: f64,
    dual_mass: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    mass_bound: Option<f64>,
    rho: BTreeMap<EdgeId, f64>,
    eta: Vec<EtaEntry>,
    residuals: Residuals,
    converged: bool,
    iterations: usize,
    #[serde(default)]
    oracle_calls: usize,
    bound: BoundFile,
}

fn path_from_file(graph: &MetricGraph, nodes: Vec<NodeId>, edges: Option<Vec<EdgeId>>) -> Result<Path> {
    match edges {
        Some(edges) => Path::from_parts(graph, nodes, edges),
        None => Path::from_nodes(graph, nodes),
    }
}

fn dense<T>(map: BTreeMap<usize, T>, len: usize, what: &str) -> Result<Vec<T>> {
    if map.len() != len || map.keys().enumerate().any(|(i, &k)| i != k) {
        return Err(Error::InvalidArgument(format!(
            "{what} must have exactly the keys 0..{len}, found {} entries",
            map.len()
        )));
    }
    Ok(map.into_values().collect())
}

/// Certificate together with the bound it was solved for, so the file can
/// be verified on its own against the graph.
pub fn certificate_to_json(prob: &ModulusProblem, cert: &DualityCertificate) -> Result<String> {
    let bound = match prob.bound() {
        Bound::Constant(c) => BoundFile { value: Some(*c), ..BoundFile::of(BoundKind::Constant) },
        Bound::Endpoint(f) => BoundFile {
            f: Some(f.values().iter().copied().enumerate().collect()),
            ..BoundFile::of(BoundKind::Endpoint)
        },
        Bound::Explicit(family) => BoundFile {
            family: Some(
                family
                    .iter()
                    .map(|(path, b)| FamilyEntry {
                        nodes: path.nodes().to_vec(),
                        edges: Some(path.edges().to_vec()),
                        bound: *b,
                    })
                    .collect(),
            ),
            ..BoundFile::of(BoundKind::Explicit)
        },
    };
    let file = CertificateFile {
        p: cert.p,
        value: cert.value,
        modulus: cert.modulus,
        dual_value: cert.dual_value,
        dual_mass: cert.dual_mass,
        mass_bound: cert.mass_bound,
        rho: cert.rho.values().iter().copied().enumerate().collect(),
        eta: cert
            .eta
            .iter()
            .map(|(path, mass)| EtaEntry {
                nodes: path.nodes().to_vec(),
                edges: Some(path.edges().to_vec()),
                mass,
            })
            .collect(),
        residuals: cert.residuals.clone(),
        converged: cert.converged,
        iterations: cert.iterations,
        oracle_calls: cert.oracle_calls,
        bound,
    };
    pretty(&file)
}

/// Reads a certificate exactly as stored; nothing is recomputed, so
/// tampered values surface in verification rather than being repaired.
pub fn certificate_from_json(graph: &MetricGraph, text: &str) -> Result<(ModulusProblem, DualityCertificate)> {
    let file: CertificateFile = serde_json::from_str(text)?;
    let missing = |field: &str| Error::InvalidArgument(format!("bound is missing the field {field:?}"));
    let b = file.bound;
    let bound = match b.kind {
        BoundKind::Constant => Bound::Constant(b.value.ok_or_else(|| missing("value"))?),
        BoundKind::Endpoint => {
            let f = b.f.ok_or_else(|| missing("f"))?;
            Bound::Endpoint(NodeFunction::new(dense(f, graph.node_count(), "endpoint bound")?)?)
        }
        BoundKind::Explicit => Bound::Explicit(
            b.family
                .ok_or_else(|| missing("family"))?
                .into_iter()
                .map(|e| Ok((path_from_file(graph, e.nodes, e.edges)?, e.bound)))
                .collect::<Result<_>>()?,
        ),
    };
    let prob = ModulusProblem::new(file.p, bound)?;
    let rho = DensityField::new(dense(file.rho, graph.edge_count(), "rho")?)?;
    let mut eta = CurveMeasure::new();
    for e in file.eta {
        eta.add(path_from_file(graph, e.nodes, e.edges)?, e.mass)?;
    }
    let cert = DualityCertificate {
        p: file.p,
        rho,
        eta,
        value: file.value,
        modulus: file.modulus,
        dual_value: file.dual_value,
        dual_mass: file.dual_mass,
        mass_bound: file.mass_bound,
        residuals: file.residuals,
        converged: file.converged,
        iterations: file.iterations,
        oracle_calls: file.oracle_calls,
    };
    Ok((prob, cert))
}

/// JSON object mapping node id to value.
pub fn node_function_to_json(f: &NodeFunction) -> Result<String> {
    let map: BTreeMap<NodeId, f64> = f.values().iter().copied().enumerate().collect();
    pretty(&map)
}

pub fn node_function_from_json(text: &str, nodes: usize) -> Result<NodeFunction> {
    let map: BTreeMap<NodeId, f64> = serde_json::from_str(text)?;
    NodeFunction::new(dense(map, nodes, "node function")?)
}

/// CSV with header `id,x,y,value`.
pub fn node_function_csv(graph: &MetricGraph, f: &NodeFunction) -> Result<String> {
    if f.len() != graph.node_count() {
        return Err(Error::InvalidArgument(format!(
            "node function has {} entries but the graph has {} nodes",
            f.len(),
            graph.node_count()
        )));
    }
    let mut out = String::from("id,x,y,value\n");
    for (node, v) in graph.nodes().iter().zip(f.values()) {
        writeln!(out, "{},{},{},{}", node.id, node.x, node.y, v).expect("writing to a string");
    }
    Ok(out)
}

/// CSV with header `id,u,v,value` for an edge field.
pub fn edge_field_csv(graph: &MetricGraph, values: &[f64]) -> Result<String> {
    if values.len() != graph.edge_count() {
        return Err(Error::InvalidArgument(format!(
            "edge field has {} entries but the graph has {} edges",
            values.len(),
            graph.edge_count()
        )));
    }
    let mut out = String::from("id,u,v,value\n");
    for (id, (e, v)) in graph.edges().iter().zip(values).enumerate() {
        writeln!(out, "{id},{},{},{v}", e.u, e.v).expect("writing to a string");
    }
    Ok(out)
}

/// CSV with header `x,y,value`.
pub fn grid_field_csv(rows: &[(f64, f64, f64)]) -> String {
    let mut out = String::from("x,y,value\n");
    for (x, y, v) in rows {
        writeln!(out, "{x},{y},{v}").expect("writing to a string");
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::modulus::solve_modulus;
    use crate::space::{build_domain, DomainSpec};

    fn two_edge() -> MetricGraph {
        let nodes = (0..3)
            .map(|i| Node { id: i, x: i as f64, y: 0.0, boundary: i != 1 })
            .collect();
        let edges = vec![
            Edge { u: 0, v: 1, length: 1.0, measure: 1.0 },
            Edge { u: 1, v: 2, length: 1.0, measure: 1.0 },
        ];
        MetricGraph::new(nodes, edges, GraphMeta { domain: "path".into(), ..GraphMeta::default() }).unwrap()
    }

    #[test]
    fn graph_round_trip_is_byte_identical() {
        let g = build_domain(&DomainSpec::Comb { k: 2, h: 0.0625 }).unwrap();
        let text = graph_to_json(&g).unwrap();
        let back = graph_from_json(&text).unwrap();
        assert_eq!(graph_to_json(&back).unwrap(), text);
        assert_eq!(back.nodes(), g.nodes());
        assert_eq!(back.edges(), g.edges());
    }

    #[test]
    fn graph_json_has_the_documented_keys() {
        let text = graph_to_json(&two_edge()).unwrap();
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(v["nodes"][1]["boundary"], false);
        assert_eq!(v["edges"][0]["length"], 1.0);
        assert_eq!(v["meta"]["domain"], "path");
    }

    #[test]
    fn certificate_round_trip_has_no_drift() {
        let g = two_edge();
        let prob = ModulusProblem::constant(2.0, 1.0).unwrap();
        let cert = solve_modulus(&g, &prob, 1e-10, 100).unwrap();
        let text = certificate_to_json(&prob, &cert).unwrap();
        let (prob2, cert2) = certificate_from_json(&g, &text).unwrap();
        assert_eq!(prob2, prob);
        assert_eq!(cert2, cert);
        assert_eq!(certificate_to_json(&prob2, &cert2).unwrap(), text);
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert!(v["mod"].is_number() && v["rho"]["1"].is_number());
        assert!(v["residuals"]["barycenter_q_norm"].is_number());
    }

    #[test]
    fn endpoint_and_explicit_bounds_round_trip() {
        let g = build_domain(&DomainSpec::Rectangle { a: 1.0, b: 1.0, h: 0.25 }).unwrap();
        let f = NodeFunction::from_coordinates(&g, |x, _| x).unwrap();
        let prob = ModulusProblem::endpoint(3.0, f).unwrap();
        let cert = solve_modulus(&g, &prob, 1e-8, 200).unwrap();
        let text = certificate_to_json(&prob, &cert).unwrap();
        let (prob2, cert2) = certificate_from_json(&g, &text).unwrap();
        assert_eq!((prob2, cert2), (prob, cert));

        let g = two_edge();
        let path = Path::from_nodes(&g, vec![0, 1, 2]).unwrap();
        let prob = ModulusProblem::explicit(2.0, vec![(path, 0.5)]).unwrap();
        let cert = crate::modulus::solve_modulus_bruteforce(&g, &prob).unwrap();
        let text = certificate_to_json(&prob, &cert).unwrap();
        let (prob2, cert2) = certificate_from_json(&g, &text).unwrap();
        assert_eq!((prob2, cert2), (prob, cert));
    }

    #[test]
    fn certificate_paths_are_checked_against_the_graph() {
        let g = two_edge();
        let prob = ModulusProblem::constant(2.0, 1.0).unwrap();
        let cert = solve_modulus(&g, &prob, 1e-10, 100).unwrap();
        let text = certificate_to_json(&prob, &cert).unwrap().replace("\"nodes\": [\n        0,", "\"nodes\": [\n        2,");
        assert!(certificate_from_json(&g, &text).is_err());
    }

    #[test]
    fn node_function_formats() {
        let g = two_edge();
        let f = NodeFunction::new(vec![0.0, 0.5, -1.25]).unwrap();
        let text = node_function_to_json(&f).unwrap();
        assert_eq!(node_function_from_json(&text, 3).unwrap(), f);
        assert!(node_function_from_json(&text, 4).is_err());
        assert_eq!(node_function_csv(&g, &f).unwrap(), "id,x,y,value\n0,0,0,0\n1,1,0,0.5\n2,2,0,-1.25\n");
        assert_eq!(grid_field_csv(&[(0.5, -1.0, 2.0)]), "x,y,value\n0.5,-1,2\n");
    }
}
