//! Anisotropic p-energy on a square lattice over `[-1, 1]^2` and the
//! counterexample showing that energy minimality on two overlapping
//! rectangles does not pass to their union.
//!
//! The upper gradient of a function in the plane with the `l1` metric is
//! `max(|d_x f|, |d_y f|)`; on the lattice it is evaluated per cell from
//! forward differences at the lower-left corner.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};

/// `(-1, 1) x (0, 1)`, `(0, 1) x (-1, 1)` or their union.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Region {
    Omega1,
    Omega2,
    Union,
}

impl Region {
    pub const ALL: [Region; 3] = [Region::Omega1, Region::Omega2, Region::Union];

    fn contains_cell(self, cx: f64, cy: f64) -> bool {
        match self {
            Region::Omega1 => cy > 0.0,
            Region::Omega2 => cx > 0.0,
            Region::Union => cy > 0.0 || cx > 0.0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Region::Omega1 => "omega1",
            Region::Omega2 => "omega2",
            Region::Union => "union",
        }
    }
}

/// Node lattice with spacing `h = 1/n` over `[-1, 1]^2`.
///
/// Nodes are indexed row-major, `i + j * side` with `x = -1 + i h` and
/// `y = -1 + j h`; cell `(i, j)` has lower-left corner at node `(i, j)`.
#[derive(Clone, Debug, PartialEq)]
pub struct CellGrid {
    n: usize,
    h: f64,
}

impl CellGrid {
    /// `h` must be `1/n` for an integer `n >= 2`.
    pub fn new(h: f64) -> Result<Self> {
        if !(h > 0.0 && h.is_finite()) {
            return Err(Error::InvalidArgument(format!("grid spacing must be positive, got {h}")));
        }
        let n = (1.0 / h).round();
        if n < 2.0 || ((n * h) - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidArgument(format!("grid spacing {h} must be 1/n with integer n >= 2")));
        }
        let n = n as usize;
        Ok(Self { n, h: 1.0 / n as f64 })
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    /// Cells per unit length.
    pub fn cells_per_unit(&self) -> usize {
        self.n
    }

    /// Nodes per side, `2n + 1`.
    pub fn side(&self) -> usize {
        2 * self.n + 1
    }

    pub fn node_count(&self) -> usize {
        self.side() * self.side()
    }

    pub fn cell_area(&self) -> f64 {
        self.h * self.h
    }

    pub fn index(&self, i: usize, j: usize) -> usize {
        i + j * self.side()
    }

    /// Exact for dyadic spacings.
    pub fn coords(&self, node: usize) -> (f64, f64) {
        let (i, j) = (node % self.side(), node / self.side());
        (self.coord(i), self.coord(j))
    }

    fn coord(&self, i: usize) -> f64 {
        (i as f64 - self.n as f64) * self.h
    }

    /// Membership of cell `(i, j)` at index `i + j * 2n`, decided by its center.
    pub fn cell_mask(&self, region: Region) -> Vec<bool> {
        let cells = 2 * self.n;
        let mut mask = Vec::with_capacity(cells * cells);
        for j in 0..cells {
            for i in 0..cells {
                let cx = self.coord(i) + 0.5 * self.h;
                let cy = self.coord(j) + 0.5 * self.h;
                mask.push(region.contains_cell(cx, cy));
            }
        }
        mask
    }

    /// Nodes touching a masked cell, and the subset whose four incident
    /// cells are all masked.
    pub fn node_classes(&self, mask: &[bool]) -> (Vec<bool>, Vec<bool>) {
        let side = self.side();
        let cells = 2 * self.n;
        let mut touched = vec![false; self.node_count()];
        let mut count = vec![0u8; self.node_count()];
        for j in 0..cells {
            for i in 0..cells {
                if mask[i + j * cells] {
                    for (di, dj) in [(0, 0), (1, 0), (0, 1), (1, 1)] {
                        let v = (i + di) + (j + dj) * side;
                        touched[v] = true;
                        count[v] += 1;
                    }
                }
            }
        }
        let free = count.iter().map(|&c| c == 4).collect();
        (touched, free)
    }

    /// `f(x, y)` at every node touching a masked cell of the union, zero
    /// elsewhere.
    pub fn sample(&self, f: impl Fn(f64, f64) -> Result<f64>) -> Result<Vec<f64>> {
        let (touched, _) = self.node_classes(&self.cell_mask(Region::Union));
        (0..self.node_count())
            .map(|v| {
                if touched[v] {
                    let (x, y) = self.coords(v);
                    f(x, y)
                } else {
                    Ok(0.0)
                }
            })
            .collect()
    }

    fn check_values(&self, v: &[f64], mask: &[bool]) -> Result<()> {
        let cells = 2 * self.n;
        if v.len() != self.node_count() || mask.len() != cells * cells {
            return Err(Error::InvalidArgument(format!(
                "expected {} node values and {} cell flags, got {} and {}",
                self.node_count(),
                cells * cells,
                v.len(),
                mask.len()
            )));
        }
        Ok(())
    }
}

/// `(u(x, y), phi(x, y))` on the closure of the union.
///
/// `u` is `y` for `x < 0`, `x` for `y < 0` and `x + y` otherwise. `phi` takes
/// the first matching case in the order I to IV, each read with closed
/// inequalities, and `0` otherwise. Neighbouring closed cases agree on
/// their common boundary, so `phi` is continuous.
pub fn eval_counterexample(x: f64, y: f64) -> Result<(f64, f64)> {
    let inside = (-1.0..=1.0).contains(&x) && (-1.0..=1.0).contains(&y) && (x >= 0.0 || y >= 0.0);
    if !inside {
        return Err(Error::OutsideDomain(x, y));
    }
    let u = if x < 0.0 {
        y
    } else if y < 0.0 {
        x
    } else {
        x + y
    };
    let s = x + y;
    let phi = if (0.5..=1.0).contains(&s) && x >= 0.0 && y >= 0.0 {
        1.0 - s
    } else if x <= 0.0 && y >= 0.5 && y - x <= 1.0 {
        1.0 + x - y
    } else if y <= 0.0 && x >= 0.5 && x - y <= 1.0 {
        1.0 - x + y
    } else if (0.0..=0.5).contains(&s) && x <= 0.5 && y <= 0.5 {
        s
    } else {
        0.0
    };
    Ok((u, phi))
}

/// `u + eps * phi`.
pub fn perturbed(x: f64, y: f64, eps: f64) -> Result<f64> {
    let (u, phi) = eval_counterexample(x, y)?;
    Ok(u + eps * phi)
}

#[inline]
fn cell_gradient(v: &[f64], side: usize, i: usize, j: usize, h: f64) -> (f64, f64) {
    let v0 = v[i + j * side];
    ((v[i + 1 + j * side] - v0) / h, (v[i + (j + 1) * side] - v0) / h)
}

/// `sum over masked cells of max(|D_x v|, |D_y v|)^p h^2`.
pub fn linfty_energy(grid: &CellGrid, v: &[f64], mask: &[bool], p: f64) -> Result<f64> {
    grid.check_values(v, mask)?;
    if !(p > 1.0 && p.is_finite()) {
        return Err(Error::InvalidArgument(format!("exponent p must exceed 1, got {p}")));
    }
    Ok(energy_unchecked(grid, v, mask, p, None))
}

/// True energy (`smoothing = None`) or the surrogate with
/// `max(a, b) ~ (a^s + b^s)^(1/s)`. Rows are summed in parallel and
/// reduced in row order.
fn energy_unchecked(grid: &CellGrid, v: &[f64], mask: &[bool], p: f64, smoothing: Option<i32>) -> f64 {
    let cells = 2 * grid.n;
    let side = grid.side();
    let h = grid.h;
    let rows: Vec<f64> = (0..cells)
        .into_par_iter()
        .map(|j| {
            let mut sum = 0.0;
            for i in 0..cells {
                if !mask[i + j * cells] {
                    continue;
                }
                let (a, b) = cell_gradient(v, side, i, j, h);
                let m = match smoothing {
                    None => a.abs().max(b.abs()),
                    Some(s) => smooth_max(a.abs(), b.abs(), s).0,
                };
                sum += pow(m, p);
            }
            sum
        })
        .collect();
    rows.iter().sum::<f64>() * grid.cell_area()
}

#[inline]
fn pow(x: f64, p: f64) -> f64 {
    if p == 2.0 {
        x * x
    } else {
        x.powf(p)
    }
}

/// `((a^s + b^s)^(1/s), d/da, d/db)` for `a, b >= 0`.
#[inline]
fn smooth_max(a: f64, b: f64, s: i32) -> (f64, f64, f64) {
    let big = a.max(b);
    if big == 0.0 {
        return (0.0, 0.0, 0.0);
    }
    let (ra, rb) = (a / big, b / big);
    let t = ra.powi(s) + rb.powi(s);
    let root = t.powf(1.0 / s as f64);
    let m = big * root;
    (m, (ra / root).powi(s - 1), (rb / root).powi(s - 1))
}

/// Gradient of the energy (or its surrogate) with respect to free nodes;
/// entries of fixed nodes are zero. For the true energy this is one
/// subgradient.
fn gradient(grid: &CellGrid, v: &[f64], mask: &[bool], free: &[bool], p: f64, smoothing: Option<i32>, out: &mut [f64]) {
    let cells = 2 * grid.n;
    let side = grid.side();
    let h = grid.h;
    out.iter_mut().for_each(|g| *g = 0.0);
    for j in 0..cells {
        for i in 0..cells {
            if !mask[i + j * cells] {
                continue;
            }
            let (a, b) = cell_gradient(v, side, i, j, h);
            let (m, wa, wb) = match smoothing {
                Some(s) => smooth_max(a.abs(), b.abs(), s),
                None => {
                    let (x, y) = (a.abs(), b.abs());
                    if x >= y {
                        (x, 1.0, 0.0)
                    } else {
                        (y, 0.0, 1.0)
                    }
                }
            };
            if m == 0.0 {
                continue;
            }
            let scale = h * p * pow_minus_one(m, p);
            let ga = scale * wa * a.signum();
            let gb = scale * wb * b.signum();
            let v0 = i + j * side;
            out[v0 + 1] += ga;
            out[v0 + side] += gb;
            out[v0] -= ga + gb;
        }
    }
    for (g, &f) in out.iter_mut().zip(free) {
        if !f {
            *g = 0.0;
        }
    }
}

#[inline]
fn pow_minus_one(m: f64, p: f64) -> f64 {
    if p == 2.0 {
        m
    } else {
        m.powf(p - 1.0)
    }
}

/// `2 + (3/8)(1 + eps)^p + (5/8)(1 - eps)^p`, the energy of `u + eps phi`
/// on the union.
pub fn closed_form_energy(eps: f64, p: f64) -> Result<f64> {
    if !(eps.abs() < 0.5) {
        return Err(Error::InvalidArgument(format!("eps must lie in (-1/2, 1/2), got {eps}")));
    }
    if !(p > 1.0 && p.is_finite()) {
        return Err(Error::InvalidArgument(format!("exponent p must exceed 1, got {p}")));
    }
    Ok(2.0 + 0.375 * (1.0 + eps).powf(p) + 0.625 * (1.0 - eps).powf(p))
}

/// Minimizer of [`closed_form_energy`] in `eps`:
/// `(r - 1) / (r + 1)` with `r = (5/3)^(1/(p-1))`.
pub fn stationary_epsilon(p: f64) -> f64 {
    let r = (5.0_f64 / 3.0).powf(1.0 / (p - 1.0));
    (r - 1.0) / (r + 1.0)
}

#[derive(Clone, Debug)]
pub struct MinimizeOptions {
    /// Surrogate exponents, used in order.
    pub smoothing: Vec<i32>,
    /// Stage stops once `max |gradient| / h^2` falls below this.
    pub stationarity: f64,
    /// Iteration cap per stage and level.
    pub max_iter: usize,
    pub polish_steps: usize,
    /// Coarsest cells-per-unit of the warm-start hierarchy; no hierarchy
    /// when at least the grid's own value.
    pub coarsest: usize,
}

impl Default for MinimizeOptions {
    fn default() -> Self {
        Self {
            smoothing: vec![8, 32, 128],
            stationarity: 1e-6,
            max_iter: 400,
            polish_steps: 500,
            coarsest: 8,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Minimized {
    #[serde(skip)]
    pub v: Vec<f64>,
    pub energy: f64,
    /// Every finest-level surrogate stage met the stationarity target.
    pub converged: bool,
    pub iterations: usize,
}

/// Minimizes [`linfty_energy`] over nodes whose four cells are masked; all
/// other entries of `start` stay fixed and `start` is also the initial
/// iterate. The result is the best iterate seen on the true energy, so it
/// never exceeds the energy of `start`.
pub fn minimize_linfty_energy(
    grid: &CellGrid,
    mask: &[bool],
    start: &[f64],
    p: f64,
    opts: &MinimizeOptions,
) -> Result<Minimized> {
    grid.check_values(start, mask)?;
    if !(p > 1.0 && p.is_finite()) {
        return Err(Error::InvalidArgument(format!("exponent p must exceed 1, got {p}")));
    }
    let mut iterations = 0;
    let mut v = start.to_vec();
    if grid.n > opts.coarsest && grid.n % 2 == 0 {
        // solve on the grid with twice the spacing and interpolate
        let coarse = CellGrid::new(2.0 * grid.h)?;
        let coarse_mask = restrict_mask(grid, &coarse, mask);
        let coarse_start = restrict_values(grid, &coarse, start);
        let sub = minimize_linfty_energy(&coarse, &coarse_mask, &coarse_start, p, opts)?;
        iterations += sub.iterations;
        let (_, free) = grid.node_classes(mask);
        prolong_into(&coarse, &sub.v, grid, &free, &mut v);
    }
    let (_, free) = grid.node_classes(mask);

    let start_energy = energy_unchecked(grid, start, mask, p, None);
    let mut best = (start_energy, start.to_vec());
    let consider = |v: &[f64], best: &mut (f64, Vec<f64>)| {
        let e = energy_unchecked(grid, v, mask, p, None);
        if e < best.0 {
            *best = (e, v.to_vec());
        }
    };
    consider(&v, &mut best);

    let mut converged = true;
    for &s in &opts.smoothing {
        let (stage_iters, ok) = accelerated_descent(grid, mask, &free, p, s, &mut v, opts);
        iterations += stage_iters;
        converged &= ok;
        consider(&v, &mut best);
    }
    v = best.1.clone();
    iterations += polish(grid, mask, &free, p, &mut v, &mut best, opts.polish_steps);

    Ok(Minimized {
        energy: best.0,
        v: best.1,
        converged,
        iterations,
    })
}

/// Nesterov-accelerated gradient descent on the surrogate with backtracking
/// and function-value restarts.
fn accelerated_descent(
    grid: &CellGrid,
    mask: &[bool],
    free: &[bool],
    p: f64,
    s: i32,
    v: &mut [f64],
    opts: &MinimizeOptions,
) -> (usize, bool) {
    let n = v.len();
    let tol = opts.stationarity * grid.cell_area();
    let energy = |x: &[f64]| energy_unchecked(grid, x, mask, p, Some(s));
    let mut x = v.to_vec();
    let mut fx = energy(&x);
    let mut y = x.clone();
    let mut fy = fx;
    let mut g = vec![0.0; n];
    let mut cand = vec![0.0; n];
    let mut momentum = 1.0_f64;
    let mut lipschitz = 1.0_f64;
    let mut converged = false;
    let mut iters = 0;
    while iters < opts.max_iter {
        iters += 1;
        gradient(grid, &y, mask, free, p, Some(s), &mut g);
        let gmax = g.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        if gmax <= tol {
            converged = true;
            x.copy_from_slice(&y);
            break;
        }
        let gnorm2: f64 = g.iter().map(|v| v * v).sum();
        let fc = loop {
            for k in 0..n {
                cand[k] = y[k] - g[k] / lipschitz;
            }
            let fc = energy(&cand);
            if fc <= fy - 0.5 * gnorm2 / lipschitz || lipschitz > 1e300 {
                break fc;
            }
            lipschitz *= 2.0;
        };
        if fc > fx {
            // restart from the last accepted point
            momentum = 1.0;
            y.copy_from_slice(&x);
            fy = fx;
            continue;
        }
        let next = 0.5 * (1.0 + (1.0 + 4.0 * momentum * momentum).sqrt());
        let beta = (momentum - 1.0) / next;
        for k in 0..n {
            y[k] = cand[k] + beta * (cand[k] - x[k]);
        }
        x.copy_from_slice(&cand);
        fx = fc;
        fy = energy(&y);
        momentum = next;
        lipschitz *= 0.9;
    }
    v.copy_from_slice(&x);
    (iters, converged)
}

/// Normalized subgradient steps on the true energy with step
/// `0.1 h / sqrt(k + 1)`; tracks the best iterate.
fn polish(
    grid: &CellGrid,
    mask: &[bool],
    free: &[bool],
    p: f64,
    v: &mut [f64],
    best: &mut (f64, Vec<f64>),
    steps: usize,
) -> usize {
    let mut g = vec![0.0; v.len()];
    for k in 0..steps {
        gradient(grid, v, mask, free, p, None, &mut g);
        let norm = g.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
        if norm == 0.0 {
            return k;
        }
        let step = 0.1 * grid.h / ((k + 1) as f64).sqrt() / norm;
        for (x, d) in v.iter_mut().zip(&g) {
            *x -= step * d;
        }
        let e = energy_unchecked(grid, v, mask, p, None);
        if e < best.0 {
            *best = (e, v.to_vec());
        }
    }
    steps
}

fn restrict_mask(fine: &CellGrid, coarse: &CellGrid, mask: &[bool]) -> Vec<bool> {
    let fc = 2 * fine.n;
    let cc = 2 * coarse.n;
    let mut out = Vec::with_capacity(cc * cc);
    for j in 0..cc {
        for i in 0..cc {
            out.push(mask[2 * i + 2 * j * fc]);
        }
    }
    out
}

fn restrict_values(fine: &CellGrid, coarse: &CellGrid, v: &[f64]) -> Vec<f64> {
    let cs = coarse.side();
    let fs = fine.side();
    let mut out = Vec::with_capacity(cs * cs);
    for j in 0..cs {
        for i in 0..cs {
            out.push(v[2 * i + 2 * j * fs]);
        }
    }
    out
}

/// Bilinear interpolation of coarse values onto the free fine nodes.
fn prolong_into(coarse: &CellGrid, cv: &[f64], fine: &CellGrid, free: &[bool], out: &mut [f64]) {
    let cs = coarse.side();
    let fs = fine.side();
    for j in 0..fs {
        for i in 0..fs {
            let k = i + j * fs;
            if !free[k] {
                continue;
            }
            let (i0, j0) = (i / 2, j / 2);
            let (i1, j1) = ((i + 1) / 2, (j + 1) / 2);
            out[k] = 0.25 * (cv[i0 + j0 * cs] + cv[i1 + j0 * cs] + cv[i0 + j1 * cs] + cv[i1 + j1 * cs]);
        }
    }
}

/// Energies of `u` and `u + eps phi` and minimization results on the two
/// rectangles and their union.
#[derive(Clone, Debug, Serialize)]
pub struct SheafReport {
    pub p: f64,
    pub h: f64,
    pub eps: f64,
    pub energy_u_omega1: f64,
    pub energy_u_omega2: f64,
    pub energy_u_union: f64,
    pub energy_perturbed_union: f64,
    /// `None` when `|eps| >= 1/2`.
    pub closed_form: Option<f64>,
    pub minimized_omega1: Minimized,
    pub minimized_omega2: Minimized,
    pub minimized_union: Minimized,
    pub margin: f64,
    pub tolerance: f64,
    /// The union minimization beats `u` by more than `margin` while neither
    /// rectangle minimization beats `u` by more than `tolerance`.
    pub sheaf_fails: bool,
    pub verdict: String,
}

impl SheafReport {
    pub fn summary(&self) -> String {
        let closed = self
            .closed_form
            .map_or_else(|| "n/a".to_string(), |c| format!("{c:.6}"));
        format!(
            "p = {}, h = {}, eps = {}\n\
             E(u): omega1 {:.6}, omega2 {:.6}, union {:.6}\n\
             E(u + eps phi) on union: {:.6} (closed form {})\n\
             minimized: omega1 {:.6}, omega2 {:.6}, union {:.6}\n\
             {}\n",
            self.p,
            self.h,
            self.eps,
            self.energy_u_omega1,
            self.energy_u_omega2,
            self.energy_u_union,
            self.energy_perturbed_union,
            closed,
            self.minimized_omega1.energy,
            self.minimized_omega2.energy,
            self.minimized_union.energy,
            self.verdict
        )
    }
}

pub fn sheaf_demo(p: f64, h: f64, eps: f64) -> Result<SheafReport> {
    sheaf_demo_with(p, h, eps, &MinimizeOptions::default())
}

pub fn sheaf_demo_with(p: f64, h: f64, eps: f64, opts: &MinimizeOptions) -> Result<SheafReport> {
    let grid = CellGrid::new(h)?;
    let u = grid.sample(|x, y| eval_counterexample(x, y).map(|(u, _)| u))?;
    let ue = grid.sample(|x, y| perturbed(x, y, eps))?;
    let masks = Region::ALL.map(|r| grid.cell_mask(r));
    let eu: Vec<f64> = masks
        .iter()
        .map(|m| linfty_energy(&grid, &u, m, p))
        .collect::<Result<_>>()?;
    let energy_perturbed_union = linfty_energy(&grid, &ue, &masks[2], p)?;
    let closed_form = closed_form_energy(eps, p).ok();
    let mins: Vec<Minimized> = masks
        .iter()
        .map(|m| minimize_linfty_energy(&grid, m, &u, p, opts))
        .collect::<Result<_>>()?;
    let margin = 0.05;
    let tolerance = 0.02;
    let rect_hold = mins[0].energy >= eu[0] - tolerance && mins[1].energy >= eu[1] - tolerance;
    let union_beaten = mins[2].energy < eu[2] - margin;
    let sheaf_fails = rect_hold && union_beaten;
    let verdict = if sheaf_fails {
        format!(
            "u is not minimal on the union: {:.6} < {:.6} - {margin}, while no rectangle minimization beats u by more than {tolerance}",
            mins[2].energy, eu[2]
        )
    } else {
        "no failure of minimality in the union was detected".to_string()
    };
    let mut mins = mins.into_iter();
    Ok(SheafReport {
        p,
        h: grid.h,
        eps,
        energy_u_omega1: eu[0],
        energy_u_omega2: eu[1],
        energy_u_union: eu[2],
        energy_perturbed_union,
        closed_form,
        minimized_omega1: mins.next().expect("three regions"),
        minimized_omega2: mins.next().expect("three regions"),
        minimized_union: mins.next().expect("three regions"),
        margin,
        tolerance,
        sheaf_fails,
        verdict,
    })
}

/// `(x, y, value)` for every node touching a masked cell.
pub fn field_rows(grid: &CellGrid, v: &[f64], mask: &[bool]) -> Vec<(f64, f64, f64)> {
    let (touched, _) = grid.node_classes(mask);
    (0..grid.node_count())
        .filter(|&k| touched[k])
        .map(|k| {
            let (x, y) = grid.coords(k);
            (x, y, v[k])
        })
        .collect()
}
