//! Stable norms of stationary Riemannian metrics.
//!
//! Every metric here is conformal, `g_x(v, v) = c(x)^2 |v|^2`, so the induced
//! Lagrangian is `L(x, v) = c(x)^2 |v|^2` and its conjugate is
//! `H(x, p) = |p|^2 / (4 c(x)^2)`. The stationary ergodic stable norm is
//! `sqrt(L_bar(h))`; for periodic metrics it is compared against
//! `lim l(n h) / n`, with `l` a shortest-path length on a fine lattice graph.

use std::cmp::Reverse;
use std::collections::BinaryHeap;
use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::effective::{DirectionGrid, EffectiveTable};
use crate::error::{Error, Result};
use crate::media::{
    check_non_resonant, wrap_phase, AssumptionCheck, Medium, MediumKind,
    DEFAULT_RESONANCE_HEIGHT,
};

const TAU: f64 = 2.0 * PI;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case", deny_unknown_fields)]
pub enum MetricFamily {
    /// Euclidean metric.
    Flat { dim: usize },
    /// `c(x) = 1 + amplitude * cos(2 pi x_1)`.
    Conformal { dim: usize, amplitude: f64 },
    /// `c(x, omega) = 1 + amplitude * cos(2 pi (omega + alpha . x))`.
    QuasiPeriodicConformal { alpha: Vec<f64>, amplitude: f64 },
}

impl MetricFamily {
    pub fn dim(&self) -> usize {
        match self {
            MetricFamily::Flat { dim } | MetricFamily::Conformal { dim, .. } => *dim,
            MetricFamily::QuasiPeriodicConformal { alpha, .. } => alpha.len(),
        }
    }

    pub fn alpha(&self) -> Option<&[f64]> {
        match self {
            MetricFamily::QuasiPeriodicConformal { alpha, .. } => Some(alpha),
            _ => None,
        }
    }

    fn amplitude(&self) -> f64 {
        match self {
            MetricFamily::Flat { .. } => 0.0,
            MetricFamily::Conformal { amplitude, .. }
            | MetricFamily::QuasiPeriodicConformal { amplitude, .. } => *amplitude,
        }
    }

    /// Conformal factor `c(x, omega)`; `phase` is ignored by periodic families.
    pub fn conformal_factor(&self, x: &[f64], phase: Option<f64>) -> f64 {
        match self {
            MetricFamily::Flat { .. } => 1.0,
            MetricFamily::Conformal { amplitude, .. } => 1.0 + amplitude * (TAU * x[0]).cos(),
            MetricFamily::QuasiPeriodicConformal { alpha, amplitude } => {
                let theta: f64 = phase.unwrap_or(0.0) + alpha.iter().zip(x).map(|(a, x)| a * x).sum::<f64>();
                1.0 + amplitude * (TAU * theta).cos()
            }
        }
    }

    /// Bounds `c_min <= c <= c_max` over all `(x, omega)`.
    pub fn factor_bounds(&self) -> (f64, f64) {
        let a = self.amplitude().abs();
        (1.0 - a, 1.0 + a)
    }

    /// Row-major `n x n` matrix of `g_{omega, x}`.
    pub fn metric(&self, x: &[f64], phase: Option<f64>) -> Vec<f64> {
        let n = self.dim();
        let c = self.conformal_factor(x, phase);
        let mut g = vec![0.0; n * n];
        for k in 0..n {
            g[k * n + k] = c * c;
        }
        g
    }

    fn validate(&self) -> Result<()> {
        let n = self.dim();
        if !(1..=2).contains(&n) {
            return Err(Error::Metric(format!("dimension {n} unsupported")));
        }
        let a = self.amplitude();
        if !a.is_finite() || a.abs() >= 1.0 {
            return Err(Error::Metric(format!(
                "amplitude {a} makes the metric degenerate (|a| must be below 1)"
            )));
        }
        if let Some(alpha) = self.alpha() {
            check_non_resonant(alpha, DEFAULT_RESONANCE_HEIGHT)?;
        }
        Ok(())
    }
}

/// Outcome of the symmetry / positivity, stationarity and sandwich audits.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricAudit {
    pub checks: Vec<AssumptionCheck>,
    pub all_passed: bool,
}

/// Audits the family on `samples` random `(x, v, omega, g)`.
pub fn audit_metric_family(family: &MetricFamily, samples: usize, seed: u64) -> MetricAudit {
    let n = family.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (cmin, cmax) = family.factor_bounds();
    let mut min_eig = f64::INFINITY;
    let mut asym = 0.0f64;
    let mut stat = 0.0f64;
    let mut sandwich = 0.0f64;
    for _ in 0..samples {
        let x: Vec<f64> = (0..n).map(|_| rng.gen_range(-5.0..5.0)).collect();
        let v: Vec<f64> = (0..n).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let phase = family.alpha().map(|_| rng.gen::<f64>());
        let g: Vec<i64> = (0..n).map(|_| rng.gen_range(-5..=5)).collect();
        let m = family.metric(&x, phase);
        for i in 0..n {
            for j in 0..n {
                asym = asym.max((m[i * n + j] - m[j * n + i]).abs());
            }
        }
        // Conformal matrices are diagonal: eigenvalues are the diagonal.
        for i in 0..n {
            min_eig = min_eig.min(m[i * n + i]);
        }
        let xg: Vec<f64> = x.iter().zip(&g).map(|(x, g)| x + *g as f64).collect();
        let shifted = family.alpha().map(|a| {
            wrap_phase(phase.unwrap_or(0.0) + a.iter().zip(&g).map(|(a, g)| a * *g as f64).sum::<f64>())
        });
        let lhs = family.conformal_factor(&xg, phase);
        let rhs = family.conformal_factor(&x, shifted.or(phase));
        stat = stat.max((lhs - rhs).abs());
        let gv: f64 = (0..n)
            .map(|i| (0..n).map(|j| v[i] * m[i * n + j] * v[j]).sum::<f64>())
            .sum();
        let v2: f64 = v.iter().map(|v| v * v).sum();
        sandwich = sandwich
            .max(cmin * cmin * v2 - gv)
            .max(gv - cmax * cmax * v2);
    }
    let checks = vec![
        AssumptionCheck {
            name: "symmetric-positive-definite".into(),
            passed: asym == 0.0 && min_eig > 0.0,
            value: min_eig,
            detail: format!("smallest eigenvalue {min_eig:e}, asymmetry {asym:e}"),
        },
        AssumptionCheck {
            name: "stationarity".into(),
            passed: stat <= 1e-10,
            value: stat,
            detail: format!("max |c(x + g, omega) - c(x, tau_g omega)| = {stat:e}"),
        },
        AssumptionCheck {
            name: "sandwich".into(),
            passed: sandwich <= 1e-12,
            value: sandwich,
            detail: format!("largest envelope violation {sandwich:e}"),
        },
    ];
    let all_passed = checks.iter().all(|c| c.passed);
    MetricAudit { checks, all_passed }
}

/// Medium with `L(x, v, omega) = g_{omega, x}(v, v)`.
pub fn metric_medium(family: MetricFamily) -> Result<Medium> {
    family.validate()?;
    Ok(Medium::metric(family))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NormMethod {
    Ergodic,
    PeriodicOracle,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StableNormTable {
    pub medium_id: String,
    pub method: NormMethod,
    pub dim: usize,
    pub directions: Vec<Vec<f64>>,
    pub values: Vec<f64>,
    pub spread: Vec<f64>,
    /// `c_min`: every norm dominates `c_min |h|`.
    pub lower_factor: f64,
}

impl StableNormTable {
    pub fn value_at(&self, h: &[f64]) -> Option<f64> {
        self.index_of(h).map(|k| self.values[k])
    }

    fn index_of(&self, h: &[f64]) -> Option<usize> {
        self.directions
            .iter()
            .position(|d| d.iter().zip(h).all(|(a, b)| (a - b).abs() < 1e-9))
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::new();
        for k in 0..self.dim {
            s.push_str(&format!("h{},", k + 1));
        }
        s.push_str("norm,method,spread\n");
        let method = match self.method {
            NormMethod::Ergodic => "ergodic",
            NormMethod::PeriodicOracle => "periodic-oracle",
        };
        for (i, d) in self.directions.iter().enumerate() {
            for v in d {
                s.push_str(&format!("{v},"));
            }
            s.push_str(&format!("{},{method},{}\n", self.values[i], self.spread[i]));
        }
        s
    }
}

/// `||h|| = sqrt(convexified L_bar(h))` on the table's grid.
pub fn stationary_stable_norm(table: &EffectiveTable) -> Result<StableNormTable> {
    if table.medium_kind != MediumKind::Metric {
        return Err(Error::Metric("stable norms need a metric medium".into()));
    }
    let mut values = Vec::with_capacity(table.convexified.len());
    for (k, v) in table.convexified.iter().enumerate() {
        if *v < 0.0 {
            return Err(Error::NegativeLagrangian {
                value: *v,
                direction: table.grid.point(k),
            });
        }
        values.push(v.sqrt());
    }
    let spread = table
        .schedule_spread
        .iter()
        .zip(&values)
        .map(|(s, n)| if *n > 0.0 { s / (2.0 * n) } else { s.sqrt() })
        .collect();
    Ok(StableNormTable {
        medium_id: table.medium_id.clone(),
        method: NormMethod::Ergodic,
        dim: table.grid.dim,
        directions: table.grid.points(),
        values,
        spread,
        lower_factor: table.lagrangian_lower.quad.max(0.0).sqrt(),
    })
}

/// Shortest-path estimate of the classical stable norm of an integral class.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PeriodicNormEstimate {
    pub h: Vec<i64>,
    pub schedule: Vec<u32>,
    /// `l(n_j h) / n_j`.
    pub values: Vec<f64>,
    pub limit: f64,
    pub spread: f64,
}

/// Weighted lattice graph over a box: nodes at spacing `1 / resolution`,
/// edges to every node within sup-distance 2.
struct Graph<'a> {
    family: &'a MetricFamily,
    dim: usize,
    dx: f64,
    lo: [i64; 2],
    hi: [i64; 2],
    offsets: Vec<[i64; 2]>,
}

impl Graph<'_> {
    fn index(&self, p: [i64; 2]) -> usize {
        let ny = (self.hi[1] - self.lo[1] + 1) as usize;
        (p[0] - self.lo[0]) as usize * ny + (p[1] - self.lo[1]) as usize
    }

    fn contains(&self, p: [i64; 2]) -> bool {
        (0..2).all(|k| p[k] >= self.lo[k] && p[k] <= self.hi[k])
    }

    fn len(&self) -> usize {
        ((self.hi[0] - self.lo[0] + 1) * (self.hi[1] - self.lo[1] + 1)) as usize
    }

    fn weight(&self, p: [i64; 2], d: [i64; 2]) -> f64 {
        let mid = [
            (p[0] as f64 + 0.5 * d[0] as f64) * self.dx,
            (p[1] as f64 + 0.5 * d[1] as f64) * self.dx,
        ];
        let len = ((d[0] * d[0] + d[1] * d[1]) as f64).sqrt() * self.dx;
        len * self.family.conformal_factor(&mid[..self.dim], None)
    }

    fn shortest(&self, from: [i64; 2], to: [i64; 2]) -> Result<f64> {
        let mut dist = vec![f64::INFINITY; self.len()];
        let mut heap = BinaryHeap::new();
        dist[self.index(from)] = 0.0;
        heap.push(Reverse((Key(0.0), from)));
        while let Some(Reverse((Key(d), p))) = heap.pop() {
            if p == to {
                return Ok(d);
            }
            if d > dist[self.index(p)] {
                continue;
            }
            for off in &self.offsets {
                let q = [p[0] + off[0], p[1] + off[1]];
                if !self.contains(q) {
                    continue;
                }
                let nd = d + self.weight(p, *off);
                let qi = self.index(q);
                if nd < dist[qi] {
                    dist[qi] = nd;
                    heap.push(Reverse((Key(nd), q)));
                }
            }
        }
        Err(Error::Disconnected)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Key(f64);

impl Eq for Key {}

impl PartialOrd for Key {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Key {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.0.total_cmp(&other.0)
    }
}

/// Graph resolution and base-point sampling for [`periodic_stable_norm`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphSpec {
    /// Nodes per unit length.
    pub resolution: u32,
    /// Base points per axis sampled in the unit cell.
    pub base_points: u32,
    /// Unit cells of slack around the straight path.
    #[serde(default = "GraphSpec::default_margin")]
    pub margin: u32,
}

impl GraphSpec {
    fn default_margin() -> u32 {
        1
    }
}

impl Default for GraphSpec {
    fn default() -> Self {
        Self {
            resolution: 16,
            base_points: 4,
            margin: 1,
        }
    }
}

/// `l(n h) / n` along `schedule`, where `l(n h)` is the shortest closed
/// curve in class `n h`: the minimum over sampled base points `y` of the
/// graph distance from `y` to `y + n h`.
pub fn periodic_stable_norm(
    family: &MetricFamily,
    h: &[i64],
    schedule: &[u32],
    spec: &GraphSpec,
) -> Result<PeriodicNormEstimate> {
    if family.alpha().is_some() {
        return Err(Error::Metric(
            "the periodic oracle needs an environment-independent family".into(),
        ));
    }
    family.validate()?;
    let dim = family.dim();
    if h.len() != dim {
        return Err(Error::Dimension {
            expected: dim,
            found: h.len(),
        });
    }
    if schedule.is_empty() || schedule.windows(2).any(|w| w[0] >= w[1]) || schedule[0] == 0 {
        return Err(Error::Metric("schedule must be positive and increasing".into()));
    }
    if spec.resolution < 2 || spec.base_points == 0 {
        return Err(Error::Metric("graph resolution must be at least 2".into()));
    }
    let m = spec.resolution as i64;
    let r2 = if dim == 2 { 2 } else { 0 };
    let mut offsets = Vec::new();
    for a in -2..=2i64 {
        for b in -r2..=r2 {
            if (a, b) != (0, 0) {
                offsets.push([a, b]);
            }
        }
    }
    let bases: Vec<[i64; 2]> = {
        let b = spec.base_points as i64;
        let by = if dim == 2 { b } else { 1 };
        let mut v = Vec::new();
        for i in 0..b {
            for j in 0..by {
                v.push([i * m / b, j * m / b]);
            }
        }
        v
    };
    let mut values = Vec::with_capacity(schedule.len());
    for &n in schedule {
        let n = n as i64;
        let shift = [h[0] * n * m, if dim == 2 { h[1] * n * m } else { 0 }];
        let pad = spec.margin as i64 * m;
        let mut best = f64::INFINITY;
        for b in &bases {
            let end = [b[0] + shift[0], b[1] + shift[1]];
            let mut lo = [b[0].min(end[0]) - pad, b[1].min(end[1]) - pad];
            let mut hi = [b[0].max(end[0]) + pad, b[1].max(end[1]) + pad];
            if dim == 1 {
                lo[1] = 0;
                hi[1] = 0;
            }
            let g = Graph {
                family,
                dim,
                dx: 1.0 / m as f64,
                lo,
                hi,
                offsets: offsets.clone(),
            };
            best = best.min(g.shortest(*b, end)?);
        }
        values.push(best / n as f64);
    }
    let limit = *values.last().expect("nonempty schedule");
    let tail = values.len().saturating_sub(3);
    let spread = values[tail..]
        .iter()
        .map(|v| (v - limit).abs())
        .fold(0.0, f64::max);
    Ok(PeriodicNormEstimate {
        h: h.to_vec(),
        schedule: schedule.to_vec(),
        values,
        limit,
        spread,
    })
}

/// Periodic-oracle table over the integral points of `grid`.
pub fn periodic_norm_table(
    medium: &Medium,
    grid: &DirectionGrid,
    schedule: &[u32],
    spec: &GraphSpec,
) -> Result<StableNormTable> {
    let family = medium
        .metric_family()
        .ok_or_else(|| Error::Metric("stable norms need a metric medium".into()))?;
    let mut directions = Vec::new();
    let mut values = Vec::new();
    let mut spread = Vec::new();
    for h in grid.points() {
        if h.iter().any(|v| (v - v.round()).abs() > 1e-12) {
            continue;
        }
        let hi: Vec<i64> = h.iter().map(|v| v.round() as i64).collect();
        if hi.iter().all(|v| *v == 0) {
            directions.push(h);
            values.push(0.0);
            spread.push(0.0);
            continue;
        }
        let est = periodic_stable_norm(family, &hi, schedule, spec)?;
        directions.push(h);
        values.push(est.limit);
        spread.push(est.spread);
    }
    Ok(StableNormTable {
        medium_id: medium.id().to_string(),
        method: NormMethod::PeriodicOracle,
        dim: medium.dim(),
        directions,
        values,
        spread,
        lower_factor: family.factor_bounds().0,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NormAuditReport {
    /// Largest `(c_min |h| - ||h||) / (c_min |h|)` over `h != 0`.
    pub positivity: f64,
    /// Largest `| ||lambda h|| - |lambda| ||h|| | / (|lambda| ||h||)`.
    pub homogeneity: f64,
    /// Largest `(||a + b|| - ||a|| - ||b||) / (||a|| + ||b||)`.
    pub triangle: f64,
    pub lambdas: Vec<f64>,
    pub pairs_checked: usize,
    pub tolerance: f64,
    pub passed: bool,
}

/// Norm axioms on all in-grid triples.
pub fn norm_audit(table: &StableNormTable, lambdas: &[f64], tolerance: f64) -> NormAuditReport {
    let dirs = &table.directions;
    let vals = &table.values;
    let mut positivity = 0.0f64;
    for (d, v) in dirs.iter().zip(vals) {
        let e = d.iter().map(|x| x * x).sum::<f64>().sqrt();
        if e > 0.0 {
            let lower = table.lower_factor * e;
            let violation = if lower > 0.0 {
                (lower - v) / lower
            } else if *v <= 0.0 {
                1.0
            } else {
                0.0
            };
            positivity = positivity.max(violation);
        }
    }
    let mut homogeneity = 0.0f64;
    for (d, v) in dirs.iter().zip(vals) {
        if *v <= 0.0 {
            continue;
        }
        for &l in lambdas {
            let ld: Vec<f64> = d.iter().map(|x| l * x).collect();
            if let Some(w) = table.value_at(&ld) {
                homogeneity = homogeneity.max((w - l.abs() * v).abs() / (l.abs() * v));
            }
        }
    }
    let mut triangle = 0.0f64;
    let mut pairs = 0usize;
    for (a, va) in dirs.iter().zip(vals) {
        for (b, vb) in dirs.iter().zip(vals) {
            let s: Vec<f64> = a.iter().zip(b).map(|(x, y)| x + y).collect();
            if let Some(vs) = table.value_at(&s) {
                pairs += 1;
                let denom = va + vb;
                if denom > 0.0 {
                    triangle = triangle.max((vs - va - vb) / denom);
                }
            }
        }
    }
    NormAuditReport {
        positivity,
        homogeneity,
        triangle,
        lambdas: lambdas.to_vec(),
        pairs_checked: pairs,
        tolerance,
        passed: positivity <= tolerance && homogeneity <= tolerance && triangle <= tolerance,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::media::{audit_assumptions, AuditConfig};

    #[test]
    fn flat_metric_medium_closed_forms() {
        let m = metric_medium(MetricFamily::Flat { dim: 2 }).unwrap();
        let w = crate::media::sample_environment(&m, 0);
        assert_eq!(m.hamiltonian(&[0.3, 0.1], &[2.0, 0.0], &w), 1.0);
        assert_eq!(m.closed_form_lagrangian(&[0.3, 0.1], &[1.0, 1.0], &w), Some(2.0));
    }

    #[test]
    fn conformal_metric_substitution_and_audit() {
        let fam = MetricFamily::Conformal {
            dim: 2,
            amplitude: 0.5,
        };
        let m = metric_medium(fam.clone()).unwrap();
        let w = crate::media::sample_environment(&m, 0);
        let x = [0.2, 0.7];
        let c = 1.0 + 0.5 * (TAU * 0.2).cos();
        let l = m.closed_form_lagrangian(&x, &[0.3, -0.4], &w).unwrap();
        assert!((l - c * c * 0.25).abs() < 1e-15);
        assert!(audit_metric_family(&fam, 1000, 1).all_passed);
        let r = audit_assumptions(&m, &AuditConfig::default());
        assert!(r.all_passed, "{r:?}");
    }

    #[test]
    fn degenerate_metric_rejected() {
        let fam = MetricFamily::Conformal {
            dim: 1,
            amplitude: 1.0,
        };
        assert!(matches!(metric_medium(fam), Err(Error::Metric(_))));
    }

    #[test]
    fn quasi_periodic_metric_is_stationary() {
        let fam = MetricFamily::QuasiPeriodicConformal {
            alpha: vec![(5f64.sqrt() - 1.0) / 2.0],
            amplitude: 0.4,
        };
        let a = audit_metric_family(&fam, 1000, 5);
        assert!(a.all_passed, "{a:?}");
    }

    #[test]
    fn flat_graph_length_is_euclidean() {
        let fam = MetricFamily::Flat { dim: 2 };
        let e = periodic_stable_norm(&fam, &[1, 0], &[1, 2, 4], &GraphSpec::default()).unwrap();
        assert!((e.limit - 1.0).abs() < 1e-12);
        // (1, 1) is a diagonal king move: exact as well.
        let d = periodic_stable_norm(&fam, &[1, 1], &[2], &GraphSpec::default()).unwrap();
        assert!((d.limit - 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn conformal_lane_gives_half() {
        let fam = MetricFamily::Conformal {
            dim: 2,
            amplitude: 0.5,
        };
        let e = periodic_stable_norm(&fam, &[0, 1], &[2, 4], &GraphSpec::default()).unwrap();
        assert!((e.limit - 0.5).abs() < 0.025, "{e:?}");
    }
}
