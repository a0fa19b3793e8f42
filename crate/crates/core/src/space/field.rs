use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::space::graph::{MetricGraph, Path};

/// Nonnegative value per edge, in units of one over length.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityField(Vec<f64>);

impl DensityField {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some((i, v)) = values.iter().enumerate().find(|(_, v)| !(v.is_finite() && **v >= 0.0)) {
            return Err(Error::InvalidArgument(format!(
                "density must be finite and nonnegative, edge {i} has {v}"
            )));
        }
        Ok(Self(values))
    }

    pub fn zeros(edges: usize) -> Self {
        Self(vec![0.0; edges])
    }

    pub fn constant(edges: usize, value: f64) -> Result<Self> {
        Self::new(vec![value; edges])
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn scaled(&self, factor: f64) -> Result<Self> {
        Self::new(self.0.iter().map(|v| v * factor).collect())
    }

    /// `(sum_e mu(e) rho(e)^p)^(1/p)`.
    pub fn p_norm(&self, graph: &MetricGraph, p: f64) -> f64 {
        self.p_energy(graph, p).powf(1.0 / p)
    }

    /// `sum_e mu(e) rho(e)^p`.
    pub fn p_energy(&self, graph: &MetricGraph, p: f64) -> f64 {
        graph
            .edges()
            .iter()
            .zip(&self.0)
            .map(|(e, r)| e.measure * r.powf(p))
            .sum()
    }

    pub(crate) fn check_graph(&self, graph: &MetricGraph) -> Result<()> {
        if self.0.len() != graph.edge_count() {
            return Err(Error::InvalidArgument(format!(
                "density has {} entries but the graph has {} edges",
                self.0.len(),
                graph.edge_count()
            )));
        }
        Ok(())
    }
}

/// Nonnegative edge measure, in units of length times mass.
#[derive(Clone, Debug, PartialEq)]
pub struct EdgeMeasure(pub(crate) Vec<f64>);

impl EdgeMeasure {
    pub fn values(&self) -> &[f64] {
        &self.0
    }

    /// Density with respect to the edge measure `mu`.
    pub fn density(&self, graph: &MetricGraph) -> Vec<f64> {
        self.0
            .iter()
            .zip(graph.edges())
            .map(|(m, e)| m / e.measure)
            .collect()
    }
}

/// Finitely supported nonnegative mass on paths.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct CurveMeasure {
    masses: BTreeMap<Path, f64>,
}

impl CurveMeasure {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds `mass` to `path`; zero masses are not stored.
    pub fn add(&mut self, path: Path, mass: f64) -> Result<()> {
        if !(mass.is_finite() && mass >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "curve mass must be finite and nonnegative, got {mass}"
            )));
        }
        if mass > 0.0 {
            *self.masses.entry(path).or_insert(0.0) += mass;
        }
        Ok(())
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Path, f64)> {
        self.masses.iter().map(|(p, m)| (p, *m))
    }

    pub fn len(&self) -> usize {
        self.masses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.masses.is_empty()
    }

    pub fn mass(&self, path: &Path) -> f64 {
        self.masses.get(path).copied().unwrap_or(0.0)
    }

    pub fn total_mass(&self) -> f64 {
        self.masses.values().sum()
    }

    /// Keeps only the paths satisfying `keep`.
    pub fn restricted(&self, mut keep: impl FnMut(&Path) -> bool) -> Self {
        Self {
            masses: self
                .masses
                .iter()
                .filter(|(p, _)| keep(p))
                .map(|(p, m)| (p.clone(), *m))
                .collect(),
        }
    }

    /// Multiplies every mass by `factor >= 0`.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        let mut out = Self::new();
        for (p, m) in self.iter() {
            out.add(p.clone(), m * factor)?;
        }
        Ok(out)
    }
}
