//! Dual coordinate ascent on path multipliers.
//!
//! For multipliers `lambda >= 0` on a finite path family the Lagrangian
//! minimizer is `rho(e) = (l(e) L(e) / (p mu(e)))^(1/(p-1))` where
//! `L(e) = sum_{path ∋ e} lambda(path)`. Each coordinate step raises or
//! lowers one multiplier until its path integral meets the bound, or sets
//! it to zero when the constraint is slack at zero.

use std::collections::HashSet;

use crate::space::{DensityField, EdgeId, MetricGraph, Path};

#[derive(Clone, Debug)]
pub(crate) struct ActivePath {
    pub path: Path,
    pub bound: f64,
    pub lambda: f64,
    /// consecutive outer rounds with a negligible multiplier
    pub idle: usize,
}

pub(crate) struct Ascent<'g> {
    graph: &'g MetricGraph,
    coef: Vec<f64>,
    exponent: f64,
    load: Vec<f64>,
    members: HashSet<Path>,
    pub paths: Vec<ActivePath>,
    scratch: Vec<(f64, f64, f64)>,
}

impl<'g> Ascent<'g> {
    pub fn new(graph: &'g MetricGraph, p: f64) -> Self {
        let coef = graph
            .edges()
            .iter()
            .map(|e| e.length / (p * e.measure))
            .collect();
        Self {
            graph,
            coef,
            exponent: 1.0 / (p - 1.0),
            load: vec![0.0; graph.edge_count()],
            members: HashSet::new(),
            paths: Vec::new(),
            scratch: Vec::new(),
        }
    }

    /// Adds a path with zero multiplier; returns false if already present.
    pub fn add(&mut self, path: Path, bound: f64) -> bool {
        if !self.members.insert(path.clone()) {
            return false;
        }
        self.paths.push(ActivePath {
            path,
            bound,
            lambda: 0.0,
            idle: 0,
        });
        true
    }

    #[inline]
    fn power(&self, x: f64) -> f64 {
        let r = self.exponent;
        if r == 1.0 {
            x
        } else if r == 2.0 {
            x * x
        } else if r == 0.5 {
            x.sqrt()
        } else {
            x.powf(r)
        }
    }

    pub fn rho(&self, e: EdgeId) -> f64 {
        self.power(self.coef[e] * self.load[e])
    }

    pub fn density(&self) -> DensityField {
        DensityField::new((0..self.load.len()).map(|e| self.rho(e)).collect())
            .expect("multipliers are nonnegative")
    }

    pub fn integral(&self, k: usize) -> f64 {
        self.paths[k]
            .path
            .edges()
            .iter()
            .map(|&e| self.graph.edge(e).length * self.rho(e))
            .sum()
    }

    /// Constraint residual scaled by `1 + bound`: `|integral - bound|` for
    /// positive multipliers, the violation otherwise.
    pub fn residual(&self, k: usize) -> f64 {
        let a = &self.paths[k];
        let diff = self.integral(k) - a.bound;
        let r = if a.lambda > 0.0 { diff.abs() } else { (-diff).max(0.0) };
        r / (1.0 + a.bound)
    }

    pub fn max_residual(&self) -> f64 {
        (0..self.paths.len()).map(|k| self.residual(k)).fold(0.0, f64::max)
    }

    fn integral_with(&self, t: f64) -> f64 {
        self.scratch
            .iter()
            .map(|&(len, coef, base)| len * self.power(coef * (base + t)))
            .sum()
    }

    /// Exact coordinate maximization for path `k`; returns `|change|`.
    pub fn update(&mut self, k: usize) -> f64 {
        let old = self.paths[k].lambda;
        let bound = self.paths[k].bound;
        let mut scratch = std::mem::take(&mut self.scratch);
        scratch.clear();
        for &e in self.paths[k].path.edges() {
            let base = (self.load[e] - old).max(0.0);
            scratch.push((self.graph.edge(e).length, self.coef[e], base));
        }
        self.scratch = scratch;

        let new = if bound <= 0.0 || self.integral_with(0.0) >= bound {
            0.0
        } else {
            self.solve_coordinate(bound, old)
        };
        if new != old {
            for &e in self.paths[k].path.edges() {
                self.load[e] = (self.load[e] - old + new).max(0.0);
            }
            self.paths[k].lambda = new;
        }
        (new - old).abs()
    }

    /// Root of `integral_with(t) = bound` on `t > 0`: bracket by doubling,
    /// then Illinois-modified regula falsi with bisection safeguard.
    fn solve_coordinate(&self, bound: f64, old: f64) -> f64 {
        let f = |t: f64| self.integral_with(t) - bound;
        // with zero base load the root is explicit and bounds the true root
        let free: f64 = self
            .scratch
            .iter()
            .map(|&(len, coef, _)| len * self.power(coef))
            .sum();
        let mut hi = (bound / free).powf(1.0 / self.exponent).max(old).max(f64::MIN_POSITIVE);
        let mut f_hi = f(hi);
        while f_hi < 0.0 {
            hi *= 2.0;
            f_hi = f(hi);
        }
        let mut lo = 0.0;
        let mut f_lo = f(lo);
        let mut side = 0i8;
        for _ in 0..200 {
            if hi - lo <= 4.0 * f64::EPSILON * hi {
                break;
            }
            let secant = hi - f_hi * (hi - lo) / (f_hi - f_lo);
            let t = if secant > lo && secant < hi { secant } else { 0.5 * (lo + hi) };
            let ft = f(t);
            if ft.abs() <= 1e-13 * (1.0 + bound) {
                return t;
            }
            if ft < 0.0 {
                lo = t;
                f_lo = ft;
                if side == -1 {
                    f_hi *= 0.5;
                }
                side = -1;
            } else {
                hi = t;
                f_hi = ft;
                if side == 1 {
                    f_lo *= 0.5;
                }
                side = 1;
            }
        }
        hi
    }

    /// One Gauss-Seidel pass in insertion order over the paths whose
    /// residual exceeds `skip`; returns the largest change.
    pub fn sweep(&mut self, skip: f64) -> f64 {
        let mut change: f64 = 0.0;
        for k in 0..self.paths.len() {
            if self.residual(k) > skip {
                change = change.max(self.update(k));
            }
        }
        change
    }

    /// As [`Ascent::sweep`] restricted to the listed paths.
    pub fn sweep_subset(&mut self, subset: &[usize], skip: f64) -> f64 {
        let mut change: f64 = 0.0;
        for &k in subset {
            if self.residual(k) > skip {
                change = change.max(self.update(k));
            }
        }
        change
    }

    pub fn max_residual_subset(&self, subset: &[usize]) -> f64 {
        subset.iter().map(|&k| self.residual(k)).fold(0.0, f64::max)
    }

    /// Recomputes edge loads from the multipliers, clearing drift from
    /// incremental updates.
    pub fn refresh_load(&mut self) {
        self.load.iter_mut().for_each(|l| *l = 0.0);
        for a in &self.paths {
            for &e in a.path.edges() {
                self.load[e] += a.lambda;
            }
        }
    }

    /// Drops paths whose multiplier stayed below `floor` for `rounds`
    /// consecutive calls.
    pub fn prune(&mut self, floor: f64, rounds: usize) {
        for a in &mut self.paths {
            if a.lambda < floor {
                a.idle += 1;
            } else {
                a.idle = 0;
            }
        }
        let (keep, drop): (Vec<ActivePath>, Vec<ActivePath>) =
            std::mem::take(&mut self.paths).into_iter().partition(|a| a.idle < rounds);
        for a in drop {
            for &e in a.path.edges() {
                self.load[e] = (self.load[e] - a.lambda).max(0.0);
            }
            self.members.remove(&a.path);
        }
        self.paths = keep;
    }
}
