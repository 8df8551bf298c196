//! Effective Lagrangian and Hamiltonian.
//!
//! `L_bar(h)` is estimated along a schedule of integer horizons `n` as
//! `phi(x, x + Phi_{1/n}(h), n, omega) / n`; all directions and horizons for
//! one `(omega, x)` come from a single point-mass dynamic programme. The
//! ω-averaged estimates are convexified and conjugated on grids.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::action::{ActionEngine, ActionTable, IndexBox, Lattice};
use crate::error::{Error, Result};
use crate::media::{sample_environment, EnvironmentSample, Medium, MediumKind, Radial};

/// `Phi_eps(h) = floor(h / eps)` componentwise.
///
/// Quotients within `1e-9` of an integer snap to it, so `Phi_{1/n}(k/n) = k`
/// despite rounding in `k/n`.
pub fn phi_map(epsilon: f64, h: &[f64]) -> Vec<i64> {
    assert!(epsilon > 0.0, "epsilon must be positive");
    h.iter()
        .map(|v| {
            let s = v / epsilon;
            let r = s.round();
            if (s - r).abs() <= 1e-9 * s.abs().max(1.0) {
                r as i64
            } else {
                s.floor() as i64
            }
        })
        .collect()
}

/// Symmetric grid `step * Z^dim` clipped to a square or a disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirectionGrid {
    pub dim: usize,
    pub extent: f64,
    pub step: f64,
    pub round: bool,
    idx: Vec<[i64; 2]>,
}

impl DirectionGrid {
    pub fn square(dim: usize, extent: f64, step: f64) -> Result<Self> {
        Self::build(dim, extent, step, false)
    }

    /// Points with `|h| <= extent`.
    pub fn disk(dim: usize, extent: f64, step: f64) -> Result<Self> {
        Self::build(dim, extent, step, true)
    }

    fn build(dim: usize, extent: f64, step: f64, round: bool) -> Result<Self> {
        if !(1..=2).contains(&dim) {
            return Err(Error::Table(format!("grid dimension {dim} unsupported")));
        }
        if !(step > 0.0 && extent > 0.0) {
            return Err(Error::Table("grid step and extent must be positive".into()));
        }
        let half_f = extent / step;
        let half = half_f.round() as i64;
        if (half_f - half as f64).abs() > 1e-9 * half_f.max(1.0) {
            return Err(Error::Table(format!(
                "grid extent {extent} is not a multiple of the step {step}"
            )));
        }
        let hy = if dim == 2 { half } else { 0 };
        let mut idx = Vec::new();
        for i in -half..=half {
            for j in -hy..=hy {
                if round && i * i + j * j > half * half {
                    continue;
                }
                idx.push([i, j]);
            }
        }
        Ok(Self {
            dim,
            extent,
            step,
            round,
            idx,
        })
    }

    pub fn len(&self) -> usize {
        self.idx.len()
    }

    pub fn is_empty(&self) -> bool {
        self.idx.is_empty()
    }

    /// Integer coordinates of point `k` (in units of `step`).
    pub fn index(&self, k: usize) -> [i64; 2] {
        self.idx[k]
    }

    pub fn point(&self, k: usize) -> Vec<f64> {
        let i = self.idx[k];
        (0..self.dim).map(|a| i[a] as f64 * self.step).collect()
    }

    pub fn points(&self) -> Vec<Vec<f64>> {
        (0..self.len()).map(|k| self.point(k)).collect()
    }

    pub fn find(&self, i: [i64; 2]) -> Option<usize> {
        self.idx.binary_search(&i).ok()
    }

    /// Exact grid point `h`, if any.
    pub fn locate(&self, h: &[f64]) -> Option<usize> {
        let mut i = [0i64; 2];
        for (a, v) in h.iter().enumerate().take(self.dim) {
            let s = v / self.step;
            let r = s.round();
            if (s - r).abs() > 1e-9 * s.abs().max(1.0) {
                return None;
            }
            i[a] = r as i64;
        }
        self.find(i)
    }

    /// Some axis neighbour is missing.
    pub fn is_boundary(&self, k: usize) -> bool {
        let p = self.idx[k];
        (0..self.dim).any(|a| {
            [-1, 1].iter().any(|s| {
                let mut q = p;
                q[a] += s;
                self.find(q).is_none()
            })
        })
    }

    /// Largest Euclidean norm on the grid.
    pub fn max_norm(&self) -> f64 {
        self.idx
            .iter()
            .map(|i| ((i[0] * i[0] + i[1] * i[1]) as f64).sqrt() * self.step)
            .fold(0.0, f64::max)
    }
}

/// Normalized actions `a_j = phi(x, x + Phi_{1/n_j}(h), n_j) / n_j`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SubadditiveSeries {
    pub h: Vec<f64>,
    pub seed: u64,
    pub schedule: Vec<u32>,
    /// Minimum over the base points of the normalized action.
    pub values: Vec<f64>,
    /// Last-horizon value.
    pub limit: f64,
    /// `max_{j >= k-2} |a_j - a_k|`.
    pub spread: f64,
}

impl SubadditiveSeries {
    fn new(h: Vec<f64>, seed: u64, schedule: &[u32], values: Vec<f64>) -> Self {
        let limit = *values.last().expect("nonempty schedule");
        let tail = values.len().saturating_sub(3);
        let spread = values[tail..]
            .iter()
            .map(|v| (v - limit).abs())
            .fold(0.0, f64::max);
        Self {
            h,
            seed,
            schedule: schedule.to_vec(),
            values,
            limit,
            spread,
        }
    }
}

/// Knobs shared by the estimators.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimateOptions {
    /// Base points (unit-cell coordinates, lattice-aligned); the estimate is
    /// the minimum over them. Empty means the origin.
    #[serde(default)]
    pub bases: Vec<Vec<f64>>,
    /// A series is unconverged when its spread exceeds this fraction of its value.
    #[serde(default = "EstimateOptions::default_spread_fraction")]
    pub spread_fraction: f64,
}

impl EstimateOptions {
    fn default_spread_fraction() -> f64 {
        0.1
    }

    fn bases(&self, dim: usize) -> Vec<Vec<f64>> {
        if self.bases.is_empty() {
            vec![vec![0.0; dim]]
        } else {
            self.bases.clone()
        }
    }
}

impl Default for EstimateOptions {
    fn default() -> Self {
        Self {
            bases: Vec::new(),
            spread_fraction: Self::default_spread_fraction(),
        }
    }
}

/// Produces action tables for `(source, horizons)`; lets callers interpose a cache.
pub type TableProvider<'p> =
    dyn Fn(&ActionEngine, [i64; 2], &[usize]) -> Result<Vec<ActionTable>> + Sync + 'p;

fn direct_tables(engine: &ActionEngine, source: [i64; 2], horizons: &[usize]) -> Result<Vec<ActionTable>> {
    engine.action_tables(source, horizons)
}

fn check_schedule(schedule: &[u32]) -> Result<()> {
    if schedule.is_empty() || schedule[0] == 0 || schedule.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Table(format!(
            "schedule {schedule:?} must be positive and strictly increasing"
        )));
    }
    Ok(())
}

/// Lattice with the domain enlarged to hold every cone of the schedule.
pub fn fitted_lattice(lattice: &Lattice, bases: &[Vec<f64>], horizon: f64) -> Lattice {
    let offset = bases
        .iter()
        .flat_map(|b| b.iter().map(|v| v.abs()))
        .fold(0.0, f64::max);
    let need = lattice.required_radius(offset, horizon);
    lattice.with_radius(lattice.radius.max(need.ceil()))
}

/// Lattice box holding every target `b + Phi_{1/n}(h)` for grid `h`.
pub fn target_box(lattice: &Lattice, base: [i64; 2], grid: &DirectionGrid, n: u32) -> IndexBox {
    let m = lattice.cells_per_unit as i64;
    let reach = (grid.extent * n as f64).ceil() as i64 * m + m;
    let ry = if lattice.dim == 2 { reach } else { 0 };
    IndexBox {
        lo: [base[0] - reach, base[1] - ry],
        hi: [base[0] + reach, base[1] + ry],
    }
}

/// One series per grid point for one environment.
pub fn subadditive_estimates(
    medium: &Medium,
    omega: &EnvironmentSample,
    grid: &DirectionGrid,
    schedule: &[u32],
    lattice: &Lattice,
    options: &EstimateOptions,
) -> Result<Vec<SubadditiveSeries>> {
    subadditive_estimates_with(medium, omega, grid, schedule, lattice, options, &direct_tables)
}

pub fn subadditive_estimates_with(
    medium: &Medium,
    omega: &EnvironmentSample,
    grid: &DirectionGrid,
    schedule: &[u32],
    lattice: &Lattice,
    options: &EstimateOptions,
    provider: &TableProvider,
) -> Result<Vec<SubadditiveSeries>> {
    check_schedule(schedule)?;
    if grid.dim != medium.dim() {
        return Err(Error::Dimension {
            expected: medium.dim(),
            found: grid.dim,
        });
    }
    let bases = options.bases(medium.dim());
    let nk = *schedule.last().expect("checked") as f64;
    let lat = fitted_lattice(lattice, &bases, nk);
    // Direction h is reached at speed |h|; keep it strictly inside the cone.
    let hmax = grid.max_norm();
    if hmax >= lat.speed_cap {
        return Err(Error::ConeViolation {
            distance: hmax * nk,
            time: nk,
            required: hmax,
        });
    }
    let engine = ActionEngine::new(medium, omega, &lat)?;
    let m = lat.cells_per_unit as i64;
    let horizons: Vec<usize> = schedule.iter().map(|n| *n as usize * lat.steps_per_unit as usize).collect();
    let mut best = vec![vec![f64::INFINITY; schedule.len()]; grid.len()];
    for b in &bases {
        let bi = lat.index_of(b)?;
        let tables = provider(&engine, bi, &horizons)?;
        for (j, (&n, table)) in schedule.iter().zip(&tables).enumerate() {
            for (k, row) in best.iter_mut().enumerate() {
                let h = grid.point(k);
                let z = phi_map(1.0 / n as f64, &h);
                let target = [bi[0] + z[0] * m, bi[1] + z.get(1).copied().unwrap_or(0) * m];
                let v = table.value(target);
                if v.is_nan() {
                    return Err(Error::Coverage(format!(
                        "action table holds no value at {target:?}"
                    )));
                }
                if !v.is_finite() {
                    return Err(Error::ConeViolation {
                        distance: h.iter().map(|x| x * x).sum::<f64>().sqrt() * n as f64,
                        time: n as f64,
                        required: lat.speed_cap,
                    });
                }
                let a = v / n as f64;
                if a < row[j] {
                    row[j] = a;
                }
            }
        }
    }
    Ok(best
        .into_iter()
        .enumerate()
        .map(|(k, values)| SubadditiveSeries::new(grid.point(k), omega.seed, schedule, values))
        .collect())
}

/// Series for a single direction.
pub fn subadditive_estimate(
    medium: &Medium,
    omega: &EnvironmentSample,
    h: &[f64],
    schedule: &[u32],
    lattice: &Lattice,
    options: &EstimateOptions,
) -> Result<SubadditiveSeries> {
    check_schedule(schedule)?;
    let bases = options.bases(medium.dim());
    let nk = *schedule.last().expect("checked") as f64;
    let lat = fitted_lattice(lattice, &bases, nk);
    let engine = ActionEngine::new(medium, omega, &lat)?;
    let mut values = vec![f64::INFINITY; schedule.len()];
    for b in &bases {
        let bi = lat.index_of(b)?;
        for (j, &n) in schedule.iter().enumerate() {
            let z = phi_map(1.0 / n as f64, h);
            let target: Vec<f64> = (0..medium.dim())
                .map(|a| b[a] + z[a] as f64)
                .collect();
            let src = lat.point_of(bi);
            let v = engine.minimal_action(&src, &target, n as f64)? / n as f64;
            values[j] = values[j].min(v);
        }
    }
    Ok(SubadditiveSeries::new(h.to_vec(), omega.seed, schedule, values))
}

/// Sampled `L_bar`, its convex envelope and (optionally) `H_bar`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EffectiveTable {
    pub medium_id: String,
    pub medium_kind: MediumKind,
    pub grid: DirectionGrid,
    /// Mean over seeds (fixed summation order).
    pub raw: Vec<f64>,
    pub convexified: Vec<f64>,
    /// `per_seed[s][k]`: estimate for seed `s` at grid point `k`.
    pub per_seed: Vec<Vec<f64>>,
    /// `max - min` over seeds.
    pub omega_spread: Vec<f64>,
    /// Largest series spread over seeds.
    pub schedule_spread: Vec<f64>,
    pub unconverged: Vec<usize>,
    pub seeds: Vec<u64>,
    pub schedule: Vec<u32>,
    pub lattice: Lattice,
    pub options: EstimateOptions,
    /// `theta_L`, `Theta_L`: radial bounds inherited from the medium.
    pub lagrangian_lower: Radial,
    pub lagrangian_upper: Radial,
    pub momentum: Option<DirectionGrid>,
    pub hbar: Vec<f64>,
    /// Grid index of the maximizing direction for each momentum.
    pub hbar_argmax: Vec<usize>,
}

pub fn effective_lagrangian_table(
    medium: &Medium,
    grid: &DirectionGrid,
    seeds: &[u64],
    schedule: &[u32],
    lattice: &Lattice,
    options: &EstimateOptions,
) -> Result<EffectiveTable> {
    effective_lagrangian_table_with(medium, grid, seeds, schedule, lattice, options, &direct_tables)
}

pub fn effective_lagrangian_table_with(
    medium: &Medium,
    grid: &DirectionGrid,
    seeds: &[u64],
    schedule: &[u32],
    lattice: &Lattice,
    options: &EstimateOptions,
    provider: &TableProvider,
) -> Result<EffectiveTable> {
    if seeds.is_empty() {
        return Err(Error::Table("at least one seed is required".into()));
    }
    if grid.is_empty() {
        return Err(Error::Table("empty direction grid".into()));
    }
    let (lower, upper) = medium.envelope().lagrangian_bounds()?;
    let series: Vec<Vec<SubadditiveSeries>> = seeds
        .par_iter()
        .map(|s| {
            let w = sample_environment(medium, *s);
            subadditive_estimates_with(medium, &w, grid, schedule, lattice, options, provider)
        })
        .collect::<Result<_>>()?;
    let n = grid.len();
    let ns = seeds.len() as f64;
    let mut raw = vec![0.0; n];
    let mut omega_spread = vec![0.0; n];
    let mut schedule_spread = vec![0.0f64; n];
    let mut unconverged = Vec::new();
    for k in 0..n {
        let mut sum = 0.0;
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        let mut flagged = false;
        for s in &series {
            let e = &s[k];
            sum += e.limit;
            lo = lo.min(e.limit);
            hi = hi.max(e.limit);
            schedule_spread[k] = schedule_spread[k].max(e.spread);
            if e.spread > options.spread_fraction * e.limit.abs() + 1e-9 {
                flagged = true;
            }
        }
        raw[k] = sum / ns;
        omega_spread[k] = hi - lo;
        if flagged {
            unconverged.push(k);
        }
    }
    let convexified = lower_convex_envelope(grid, &raw)?;
    Ok(EffectiveTable {
        medium_id: medium.id().to_string(),
        medium_kind: medium.kind(),
        grid: grid.clone(),
        raw,
        convexified,
        per_seed: series
            .iter()
            .map(|s| s.iter().map(|e| e.limit).collect())
            .collect(),
        omega_spread,
        schedule_spread,
        unconverged,
        seeds: seeds.to_vec(),
        schedule: schedule.to_vec(),
        lattice: lattice.clone(),
        options: options.clone(),
        lagrangian_lower: lower,
        lagrangian_upper: upper,
        momentum: None,
        hbar: Vec::new(),
        hbar_argmax: Vec::new(),
    })
}

/// Lower convex envelope of grid samples, evaluated on the grid.
pub fn lower_convex_envelope(grid: &DirectionGrid, values: &[f64]) -> Result<Vec<f64>> {
    if values.len() != grid.len() {
        return Err(Error::Table("value count differs from the grid".into()));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Table("non-finite value in the table".into()));
    }
    if grid.dim == 1 {
        let xs: Vec<f64> = (0..grid.len()).map(|k| grid.point(k)[0]).collect();
        let hull = lower_hull_1d(&xs, values);
        Ok(xs.iter().map(|x| eval_hull_1d(&hull, *x).expect("grid point inside hull")).collect())
    } else {
        let pts: Vec<[f64; 2]> = (0..grid.len())
            .map(|k| {
                let p = grid.point(k);
                [p[0], p[1]]
            })
            .collect();
        let env = Envelope2d { pts: &pts, f: values };
        Ok((0..grid.len())
            .map(|k| env.eval(pts[k]).unwrap_or(values[k]).min(values[k]))
            .collect())
    }
}

/// Vertices of the lower hull of `(x_i, f_i)`, `x` ascending.
pub fn lower_hull_1d(xs: &[f64], f: &[f64]) -> Vec<(f64, f64)> {
    let mut hull: Vec<(f64, f64)> = Vec::with_capacity(xs.len());
    for (x, y) in xs.iter().zip(f) {
        while hull.len() >= 2 {
            let (x1, y1) = hull[hull.len() - 2];
            let (x2, y2) = hull[hull.len() - 1];
            // Drop the middle point unless it lies strictly below the chord.
            if (x2 - x1) * (y - y1) - (y2 - y1) * (x - x1) <= 0.0 {
                hull.pop();
            } else {
                break;
            }
        }
        hull.push((*x, *y));
    }
    hull
}

fn eval_hull_1d(hull: &[(f64, f64)], x: f64) -> Option<f64> {
    let first = hull.first()?;
    let last = hull.last()?;
    if x < first.0 - 1e-12 || x > last.0 + 1e-12 {
        return None;
    }
    let k = hull.partition_point(|p| p.0 < x);
    if k == 0 {
        return Some(first.1);
    }
    if k == hull.len() {
        return Some(last.1);
    }
    let (x0, y0) = hull[k - 1];
    let (x1, y1) = hull[k];
    if x == x1 {
        return Some(y1);
    }
    let s = (x - x0) / (x1 - x0);
    Some(y0 + s * (y1 - y0))
}

/// Lower convex envelope of scattered 2D samples, evaluated by the linear
/// programme `min sum l_i f_i` subject to `sum l_i p_i = h`, `sum l_i = 1`,
/// `l >= 0` (two-phase simplex with Bland's rule).
struct Envelope2d<'a> {
    pts: &'a [[f64; 2]],
    f: &'a [f64],
}

impl Envelope2d<'_> {
    fn eval(&self, h: [f64; 2]) -> Option<f64> {
        const TOL: f64 = 1e-11;
        let n = self.pts.len();
        let cols = n + 3;
        let mut a = vec![vec![0.0; cols]; 3];
        let mut b = [h[0], h[1], 1.0];
        for j in 0..n {
            a[0][j] = self.pts[j][0];
            a[1][j] = self.pts[j][1];
            a[2][j] = 1.0;
        }
        for r in 0..3 {
            if b[r] < 0.0 {
                b[r] = -b[r];
                for v in a[r].iter_mut().take(n) {
                    *v = -*v;
                }
            }
            a[r][n + r] = 1.0;
        }
        let mut basis = [n, n + 1, n + 2];
        let pivot = |a: &mut Vec<Vec<f64>>, b: &mut [f64; 3], basis: &mut [usize; 3], r: usize, j: usize| {
            let p = a[r][j];
            for v in a[r].iter_mut() {
                *v /= p;
            }
            b[r] /= p;
            for rr in 0..3 {
                if rr != r {
                    let factor = a[rr][j];
                    if factor != 0.0 {
                        for c in 0..cols {
                            a[rr][c] -= factor * a[r][c];
                        }
                        b[rr] -= factor * b[r];
                    }
                }
            }
            basis[r] = j;
        };
        let run = |a: &mut Vec<Vec<f64>>,
                   b: &mut [f64; 3],
                   basis: &mut [usize; 3],
                   cost: &dyn Fn(usize) -> f64,
                   allowed: usize| {
            for _ in 0..100_000 {
                let y: Vec<f64> = (0..3).map(|r| cost(basis[r])).collect();
                let mut enter = None;
                for j in 0..allowed {
                    if basis.contains(&j) {
                        continue;
                    }
                    let rc = cost(j) - (0..3).map(|r| y[r] * a[r][j]).sum::<f64>();
                    if rc < -TOL {
                        enter = Some(j);
                        break;
                    }
                }
                let Some(j) = enter else { return true };
                let mut leave: Option<(usize, f64)> = None;
                for r in 0..3 {
                    if a[r][j] > TOL {
                        let ratio = b[r] / a[r][j];
                        match leave {
                            None => leave = Some((r, ratio)),
                            Some((lr, lv)) => {
                                if ratio < lv - TOL || (ratio <= lv + TOL && basis[r] < basis[lr]) {
                                    leave = Some((r, ratio));
                                }
                            }
                        }
                    }
                }
                let Some((r, _)) = leave else { return false };
                pivot(a, b, basis, r, j);
            }
            false
        };
        let phase1 = |j: usize| if j >= n { 1.0 } else { 0.0 };
        if !run(&mut a, &mut b, &mut basis, &phase1, cols) {
            return None;
        }
        let infeasibility: f64 = (0..3).filter(|r| basis[*r] >= n).map(|r| b[r]).sum();
        if infeasibility > 1e-9 {
            return None;
        }
        for r in 0..3 {
            if basis[r] >= n {
                if let Some(j) = (0..n).find(|j| !basis.contains(j) && a[r][*j].abs() > TOL) {
                    pivot(&mut a, &mut b, &mut basis, r, j);
                }
            }
        }
        let f = self.f;
        let phase2 = |j: usize| if j < n { f[j] } else { 0.0 };
        if !run(&mut a, &mut b, &mut basis, &phase2, n) {
            return None;
        }
        Some((0..3).map(|r| phase2(basis[r]) * b[r]).sum())
    }
}

impl EffectiveTable {
    pub fn dim(&self) -> usize {
        self.grid.dim
    }

    /// Convex piecewise-linear interpolant of the convexified table;
    /// `None` outside the grid.
    pub fn interpolate(&self, h: &[f64]) -> Option<f64> {
        if self.grid.dim == 1 {
            let x = h[0];
            let s = x / self.grid.step;
            let i0 = s.floor() as i64;
            let k0 = self.grid.find([i0, 0])?;
            let frac = s - i0 as f64;
            if frac <= 1e-12 {
                return Some(self.convexified[k0]);
            }
            let k1 = self.grid.find([i0 + 1, 0])?;
            Some(self.convexified[k0] + frac * (self.convexified[k1] - self.convexified[k0]))
        } else {
            if let Some(k) = self.grid.locate(h) {
                return Some(self.convexified[k]);
            }
            let pts: Vec<[f64; 2]> = (0..self.grid.len())
                .map(|k| {
                    let p = self.grid.point(k);
                    [p[0], p[1]]
                })
                .collect();
            Envelope2d {
                pts: &pts,
                f: &self.convexified,
            }
            .eval([h[0], h[1]])
        }
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::new();
        for a in 0..self.grid.dim {
            s.push_str(&format!("h{},", a + 1));
        }
        s.push_str("raw,convexified,omega_spread,schedule_spread\n");
        for k in 0..self.grid.len() {
            for v in self.grid.point(k) {
                s.push_str(&format!("{v},"));
            }
            s.push_str(&format!(
                "{},{},{},{}\n",
                self.raw[k], self.convexified[k], self.omega_spread[k], self.schedule_spread[k]
            ));
        }
        s
    }

    pub fn hbar_csv(&self) -> String {
        let mut s = String::new();
        let Some(mg) = &self.momentum else {
            return s;
        };
        for a in 0..mg.dim {
            s.push_str(&format!("P{},", a + 1));
        }
        s.push_str("H_bar\n");
        for k in 0..mg.len() {
            for v in mg.point(k) {
                s.push_str(&format!("{v},"));
            }
            s.push_str(&format!("{}\n", self.hbar[k]));
        }
        s
    }

    /// `H_bar` at a momentum grid point.
    pub fn hbar_at(&self, p: &[f64]) -> Option<f64> {
        let mg = self.momentum.as_ref()?;
        mg.locate(p).map(|k| self.hbar[k])
    }

    pub fn convexified_at(&self, h: &[f64]) -> Option<f64> {
        self.grid.locate(h).map(|k| self.convexified[k])
    }
}

/// `H_bar(P) = max_h P.h - L_bar(h)` over the direction grid.
pub fn effective_hamiltonian(table: &EffectiveTable, momentum: &DirectionGrid) -> Result<EffectiveTable> {
    if momentum.dim != table.grid.dim {
        return Err(Error::Dimension {
            expected: table.grid.dim,
            found: momentum.dim,
        });
    }
    let hs = table.grid.points();
    let mut hbar = Vec::with_capacity(momentum.len());
    let mut argmax = Vec::with_capacity(momentum.len());
    for k in 0..momentum.len() {
        let p = momentum.point(k);
        let mut best = f64::NEG_INFINITY;
        let mut arg = 0;
        for (i, h) in hs.iter().enumerate() {
            let v = p.iter().zip(h).map(|(a, b)| a * b).sum::<f64>() - table.convexified[i];
            if v > best {
                best = v;
                arg = i;
            }
        }
        if table.grid.is_boundary(arg) {
            return Err(Error::WidenDirectionGrid { momentum: p });
        }
        hbar.push(best);
        argmax.push(arg);
    }
    let mut out = table.clone();
    out.momentum = Some(momentum.clone());
    out.hbar = hbar;
    out.hbar_argmax = argmax;
    Ok(out)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DoubleConjugateReport {
    pub max_error: f64,
    /// Largest pointwise bound, `2 rho R`.
    pub tolerance: f64,
    /// Largest gap over its pointwise bound.
    pub worst_ratio: f64,
    /// Directions whose maximizing momentum is interior to the momentum grid.
    pub checked: usize,
    pub passed: bool,
}

/// Conjugates `H_bar` back over the momentum grid and compares with the
/// convexified table where the maximizing momentum is interior.
///
/// With `s` a subgradient of the interpolated table at `h` and `P_j` the
/// grid momentum nearest to it, `f*(P_j) <= f*(s) + |P_j - s| R` (`R` the
/// largest grid `|h|`), so the gap at `h` is at most `rho (|h| + R)` with
/// `rho = dP sqrt(n) / 2` the covering radius of the momentum grid. The gap
/// vanishes where a grid momentum is itself a subgradient; long nearly
/// linear stretches of `L_bar` are where it approaches the bound.
pub fn double_conjugate_check(table: &EffectiveTable) -> Result<DoubleConjugateReport> {
    let mg = table
        .momentum
        .as_ref()
        .ok_or_else(|| Error::Table("effective Hamiltonian not computed".into()))?;
    let ps = mg.points();
    let rho = mg.step * (table.grid.dim as f64).sqrt() / 2.0;
    let reach = table.grid.max_norm();
    let mut max_error = 0.0f64;
    let mut worst_ratio = 0.0f64;
    let mut within = true;
    let mut checked = 0;
    for k in 0..table.grid.len() {
        let h = table.grid.point(k);
        let mut best = f64::NEG_INFINITY;
        let mut arg = 0;
        for (i, p) in ps.iter().enumerate() {
            let v = p.iter().zip(&h).map(|(a, b)| a * b).sum::<f64>() - table.hbar[i];
            if v > best {
                best = v;
                arg = i;
            }
        }
        if mg.is_boundary(arg) {
            continue;
        }
        checked += 1;
        let gap = table.convexified[k] - best;
        let hn = h.iter().map(|v| v * v).sum::<f64>().sqrt();
        let bound = rho * (hn + reach) + 1e-12;
        max_error = max_error.max(gap.abs());
        worst_ratio = worst_ratio.max(gap.abs() / bound);
        // The double conjugate never exceeds the function.
        within &= gap >= -1e-12 && gap <= bound;
    }
    Ok(DoubleConjugateReport {
        max_error,
        tolerance: rho * 2.0 * reach,
        worst_ratio,
        checked,
        passed: checked > 0 && within,
    })
}

/// `theta_L(|h|) - slack <= L_bar(h) <= Theta_L(|h|) + slack` on the grid.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SandwichReport {
    pub max_lower_violation: f64,
    pub max_upper_violation: f64,
    pub slack: f64,
    pub passed: bool,
}

pub fn envelope_check(table: &EffectiveTable, slack: f64) -> SandwichReport {
    let mut lo = 0.0f64;
    let mut hi = 0.0f64;
    for k in 0..table.grid.len() {
        let r = table.grid.point(k).iter().map(|v| v * v).sum::<f64>().sqrt();
        let v = table.convexified[k];
        lo = lo.max(table.lagrangian_lower.eval(r) - v);
        hi = hi.max(v - table.lagrangian_upper.eval(r));
    }
    SandwichReport {
        max_lower_violation: lo,
        max_upper_violation: hi,
        slack,
        passed: lo <= slack && hi <= slack,
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TwoPointEntry {
    pub epsilon: f64,
    pub action: f64,
    pub limit: f64,
    pub gap: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TwoPointReport {
    pub h: Vec<f64>,
    pub h_prime: Vec<f64>,
    pub t: f64,
    pub entries: Vec<TwoPointEntry>,
}

/// `phi_eps(Phi_eps(h') + x, Phi_eps(h) + x, t)` against `t L_bar((h - h')/t)`.
#[allow(clippy::too_many_arguments)]
pub fn two_point_check(
    medium: &Medium,
    omega: &EnvironmentSample,
    table: &EffectiveTable,
    h: &[f64],
    h_prime: &[f64],
    t: f64,
    epsilons: &[f64],
    lattice: &Lattice,
    base: &[f64],
) -> Result<TwoPointReport> {
    if !(t > 0.0) {
        return Err(Error::Table("two-point check needs t > 0".into()));
    }
    let q: Vec<f64> = h.iter().zip(h_prime).map(|(a, b)| (a - b) / t).collect();
    let limit = t * table
        .interpolate(&q)
        .ok_or_else(|| Error::EnlargeRadius {
            needed: q.iter().map(|v| v * v).sum::<f64>().sqrt(),
        })?;
    let mut entries = Vec::new();
    for &eps in epsilons {
        let zs = phi_map(eps, h_prime);
        let zt = phi_map(eps, h);
        let src: Vec<f64> = base.iter().zip(&zs).map(|(b, z)| b + *z as f64).collect();
        let tgt: Vec<f64> = base.iter().zip(&zt).map(|(b, z)| b + *z as f64).collect();
        let offset = src.iter().map(|v| v.abs()).fold(0.0, f64::max);
        let lat = lattice.with_radius(lattice.radius.max(lattice.required_radius(offset, t / eps).ceil()));
        let engine = ActionEngine::new(medium, omega, &lat)?;
        let action = engine.rescaled_action(eps, &src, &tgt, t)?;
        entries.push(TwoPointEntry {
            epsilon: eps,
            action,
            limit,
            gap: (action - limit).abs(),
        });
    }
    Ok(TwoPointReport {
        h: h.to_vec(),
        h_prime: h_prime.to_vec(),
        t,
        entries,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HomogeneityReport {
    pub lambdas: Vec<f64>,
    /// Largest `|L(lambda h) - lambda^2 L(h)| / (1 + |L(lambda h)|)` per lambda.
    pub defects: Vec<f64>,
    pub max_defect: f64,
    pub pairs: usize,
}

pub fn homogeneity_check(table: &EffectiveTable, lambdas: &[f64]) -> Result<HomogeneityReport> {
    if table.medium_kind != MediumKind::Metric {
        return Err(Error::Table("homogeneity needs a metric medium".into()));
    }
    let mut defects = Vec::with_capacity(lambdas.len());
    let mut pairs = 0;
    for &l in lambdas {
        let mut worst = 0.0f64;
        for k in 0..table.grid.len() {
            let h = table.grid.point(k);
            let lh: Vec<f64> = h.iter().map(|v| l * v).collect();
            if let Some(j) = table.grid.locate(&lh) {
                pairs += 1;
                let a = table.convexified[j];
                let b = l * l * table.convexified[k];
                worst = worst.max((a - b).abs() / (1.0 + a.abs()));
            }
        }
        defects.push(worst);
    }
    let max_defect = defects.iter().copied().fold(0.0, f64::max);
    Ok(HomogeneityReport {
        lambdas: lambdas.to_vec(),
        defects,
        max_defect,
        pairs,
    })
}

/// Midpoint convexity on all grid triples `(h - d, h, h + d)`; returns the
/// largest `f(h) - (f(h-d) + f(h+d)) / 2`.
pub fn midpoint_defect(grid: &DirectionGrid, values: &[f64]) -> f64 {
    let mut worst = f64::NEG_INFINITY;
    for k in 0..grid.len() {
        let c = grid.index(k);
        for j in 0..grid.len() {
            let d = grid.index(j);
            if d <= [0, 0] {
                continue;
            }
            let (Some(a), Some(b)) = (
                grid.find([c[0] - d[0], c[1] - d[1]]),
                grid.find([c[0] + d[0], c[1] + d[1]]),
            ) else {
                continue;
            };
            worst = worst.max(values[k] - 0.5 * (values[a] + values[b]));
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::media::{make_periodic_medium, PeriodicSpec};

    #[test]
    fn phi_map_examples() {
        assert_eq!(phi_map(0.5, &[1.3]), vec![2]);
        assert_eq!(phi_map(0.1, &[0.0, 0.0]), vec![0, 0]);
        assert_eq!(phi_map(1.0 / 16.0, &[0.75]), vec![12]);
        assert_eq!(phi_map(0.1, &[0.3]), vec![3]);
        assert_eq!(phi_map(0.5, &[-0.2]), vec![-1]);
    }

    #[test]
    fn grids_are_symmetric() {
        let g = DirectionGrid::square(2, 1.0, 0.25).unwrap();
        assert_eq!(g.len(), 81);
        let d = DirectionGrid::disk(2, 1.0, 0.25).unwrap();
        for k in 0..d.len() {
            let p = d.point(k);
            let q: Vec<f64> = p.iter().map(|v| -v).collect();
            assert!(d.locate(&q).is_some());
        }
        assert!(d.locate(&[0.0, 0.0]).is_some());
        assert!(d.locate(&[1.0, 1.0]).is_none());
        assert!(DirectionGrid::square(1, 1.0, 0.3).is_err());
        let k = g.locate(&[1.0, 0.0]).unwrap();
        assert!(g.is_boundary(k));
        assert!(!g.is_boundary(g.locate(&[0.0, 0.0]).unwrap()));
    }

    #[test]
    fn envelope_1d_removes_bumps() {
        let g = DirectionGrid::square(1, 1.0, 0.5).unwrap();
        let f = [1.0, 0.8, 0.0, 0.1, 1.0];
        let c = lower_convex_envelope(&g, &f).unwrap();
        assert_eq!(c, vec![1.0, 0.5, 0.0, 0.1, 1.0]);
        assert!(midpoint_defect(&g, &c) <= 0.0);
    }

    #[test]
    fn envelope_2d_matches_brute_force() {
        let g = DirectionGrid::square(2, 1.0, 0.5).unwrap();
        let f: Vec<f64> = (0..g.len())
            .map(|k| {
                let p = g.point(k);
                p[0] * p[0] + 0.5 * p[1] * p[1] + 0.3 * ((7 * k) % 5) as f64 / 5.0
            })
            .collect();
        let c = lower_convex_envelope(&g, &f).unwrap();
        let pts: Vec<Vec<f64>> = g.points();
        // Brute force over all triangles.
        for k in 0..g.len() {
            let h = &pts[k];
            let mut best = f[k];
            let n = g.len();
            for a in 0..n {
                for b in a + 1..n {
                    for cidx in b + 1..n {
                        let (p, q, r) = (&pts[a], &pts[b], &pts[cidx]);
                        let det = (q[0] - p[0]) * (r[1] - p[1]) - (r[0] - p[0]) * (q[1] - p[1]);
                        if det.abs() < 1e-12 {
                            continue;
                        }
                        let l1 = ((h[0] - p[0]) * (r[1] - p[1]) - (r[0] - p[0]) * (h[1] - p[1])) / det;
                        let l2 = ((q[0] - p[0]) * (h[1] - p[1]) - (h[0] - p[0]) * (q[1] - p[1])) / det;
                        let l0 = 1.0 - l1 - l2;
                        if l0 >= -1e-12 && l1 >= -1e-12 && l2 >= -1e-12 {
                            best = best.min(l0 * f[a] + l1 * f[b] + l2 * f[cidx]);
                        }
                    }
                }
            }
            assert!((c[k] - best).abs() < 1e-9, "k={k}: {} vs {best}", c[k]);
        }
        assert!(midpoint_defect(&g, &c) <= 1e-9);
    }

    #[test]
    fn free_table_and_conjugate() {
        let m = make_periodic_medium(PeriodicSpec::free(1)).unwrap();
        let g = DirectionGrid::square(1, 2.0, 0.25).unwrap();
        let l = Lattice::default_1d(3.0, 1.0);
        let t = effective_lagrangian_table(&m, &g, &[0], &[4, 8], &l, &EstimateOptions::default()).unwrap();
        for k in 0..g.len() {
            let h = g.point(k)[0];
            assert!((t.convexified[k] - 0.5 * h * h).abs() <= 0.05 * 0.5 * h * h + 1e-12, "h={h}");
        }
        let mg = DirectionGrid::square(1, 1.5, 0.05).unwrap();
        let t = effective_hamiltonian(&t, &mg).unwrap();
        let p = t.hbar_at(&[1.0]).unwrap();
        assert!((p - 0.5).abs() < 0.025);
        assert!(double_conjugate_check(&t).unwrap().passed);
        let wide = DirectionGrid::square(1, 2.5, 0.05).unwrap();
        assert!(matches!(effective_hamiltonian(&t, &wide), Err(Error::WidenDirectionGrid { .. })));
    }
}
