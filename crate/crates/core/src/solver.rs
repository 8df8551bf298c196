//! Rescaled and homogenized value functions and the gap between them.
//!
//! Rescaled problems are solved in microscopic coordinates: with
//! `W(y, 0) = u0_eps(y) / eps` marched by the Lax-Oleinik recursion,
//! `u_eps(y, t) = eps * W(y, t / eps)`, and distances are `d_eps = eps |y - y'|`.
//! The homogenized problem uses the Hopf-Lax formula with the tabulated
//! `L_bar`.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::action::{ActionEngine, IndexBox, Lattice};
use crate::effective::{phi_map, EffectiveTable};
use crate::error::{Error, Result};
use crate::media::{EnvironmentSample, Medium, Radial};

const TAU: f64 = 2.0 * PI;

/// Limit datum `v0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case", deny_unknown_fields)]
pub enum DatumShape {
    Zero,
    Constant { value: f64 },
    /// `|h|`.
    Norm,
    /// `min(|h|, cap)`.
    ClampedNorm { cap: f64 },
}

/// `sigma(r) = min(slope * r, cap)`; `cap = inf` for Lipschitz moduli.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Modulus {
    pub slope: f64,
    pub cap: f64,
}

impl Modulus {
    pub fn eval(&self, r: f64) -> f64 {
        (self.slope * r).min(self.cap)
    }

    /// Smallest `A` with `sigma(r) <= A r + delta` for all `r >= 0`.
    pub fn linear_majorant(&self, delta: f64) -> f64 {
        if self.cap <= delta || self.slope == 0.0 {
            0.0
        } else if self.cap.is_infinite() {
            self.slope
        } else {
            self.slope * (1.0 - delta / self.cap)
        }
    }
}

/// Family `u0_eps(y) = v0(eps y) + eps * oscillation * cos(2 pi y_1)` with
/// limit `v0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialDatum {
    pub shape: DatumShape,
    #[serde(default)]
    pub oscillation: f64,
}

impl InitialDatum {
    pub fn new(shape: DatumShape) -> Self {
        Self {
            shape,
            oscillation: 0.0,
        }
    }

    pub fn limit(&self, h: &[f64]) -> f64 {
        let r = || h.iter().map(|v| v * v).sum::<f64>().sqrt();
        match self.shape {
            DatumShape::Zero => 0.0,
            DatumShape::Constant { value } => value,
            DatumShape::Norm => r(),
            DatumShape::ClampedNorm { cap } => r().min(cap),
        }
    }

    /// `u0_eps` at the microscopic point `y`.
    pub fn rescaled(&self, y: &[f64], epsilon: f64) -> f64 {
        let h: Vec<f64> = y.iter().map(|v| epsilon * v).collect();
        let mut v = self.limit(&h);
        if self.oscillation != 0.0 {
            v += epsilon * self.oscillation * (TAU * y[0]).cos();
        }
        v
    }

    /// Modulus of `v0` alone.
    pub fn limit_modulus(&self) -> Modulus {
        match self.shape {
            DatumShape::Zero | DatumShape::Constant { .. } => Modulus { slope: 0.0, cap: 0.0 },
            DatumShape::Norm => Modulus {
                slope: 1.0,
                cap: f64::INFINITY,
            },
            DatumShape::ClampedNorm { cap } => Modulus { slope: 1.0, cap },
        }
    }

    /// Common modulus in `d_eps` for all `eps <= 1`.
    pub fn modulus(&self) -> Modulus {
        let base = self.limit_modulus();
        let a = self.oscillation.abs();
        Modulus {
            slope: base.slope + TAU * a,
            cap: base.cap + 2.0 * a,
        }
    }

    /// Equicontinuity against [`Self::modulus`] on random pairs, and the
    /// `eps Phi_eps` limit bound `|u0_eps(Phi_eps(h)) - v0(h)| <= sigma_v0(eps sqrt(b)) + eps |a|`.
    pub fn audit(&self, dim: usize, epsilons: &[f64], samples: usize, seed: u64) -> DatumAudit {
        let sigma = self.modulus();
        let sv = self.limit_modulus();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut excess = f64::NEG_INFINITY;
        let mut limit_gaps = Vec::with_capacity(epsilons.len());
        let mut limit_ok = true;
        for &eps in epsilons {
            for _ in 0..samples {
                let y: Vec<f64> = (0..dim).map(|_| rng.gen_range(-3.0..3.0) / eps).collect();
                let z: Vec<f64> = y.iter().map(|v| v + rng.gen_range(-2.0..2.0)).collect();
                let d = eps * y.iter().zip(&z).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
                let gap = (self.rescaled(&y, eps) - self.rescaled(&z, eps)).abs();
                excess = excess.max(gap - sigma.eval(d));
            }
            let mut worst = 0.0f64;
            for i in -32..=32 {
                let h: Vec<f64> = (0..dim).map(|k| (i as f64 + 0.37 * k as f64) / 16.0).collect();
                let z = phi_map(eps, &h);
                let y: Vec<f64> = z.iter().map(|v| *v as f64).collect();
                worst = worst.max((self.rescaled(&y, eps) - self.limit(&h)).abs());
            }
            let bound = sv.eval(eps * (dim as f64).sqrt()) + eps * self.oscillation.abs() + 1e-12;
            limit_ok &= worst <= bound;
            limit_gaps.push(worst);
        }
        DatumAudit {
            modulus: sigma,
            max_excess: excess,
            limit_gaps,
            passed: excess <= 1e-12 && limit_ok,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatumAudit {
    pub modulus: Modulus,
    /// Largest `|u0(y) - u0(z)| - sigma(d_eps(y, z))`.
    pub max_excess: f64,
    /// Per-eps `sup_h |u0_eps(Phi_eps(h)) - v0(h)|`.
    pub limit_gaps: Vec<f64>,
    pub passed: bool,
}

/// `sup_{r >= 0} s r - f(r)`.
fn radial_conjugate_at(f: &Radial, s: f64) -> f64 {
    match f.conjugate() {
        Some(c) => c.eval(s.max(0.0)),
        None => f64::INFINITY,
    }
}

/// Minimizer radius
/// `rho(t) = inf_delta ((Theta_L(0) + B_delta) / sqrt(delta)) t + sqrt(delta)`
/// with `sigma(r) <= A_delta r + delta` and
/// `B_delta = max(0, theta_L^*(A_delta + sqrt(delta)))`, over a log grid of
/// `delta`.
pub fn minimizer_radius(sigma: &Modulus, lower: &Radial, upper: &Radial, t: f64) -> f64 {
    if t <= 0.0 {
        return 0.0;
    }
    let mut best = f64::INFINITY;
    for k in -320..=160 {
        let delta = 10f64.powf(k as f64 / 40.0);
        let sd = delta.sqrt();
        let a = sigma.linear_majorant(delta);
        let b = radial_conjugate_at(lower, a + sd).max(0.0);
        let num = (upper.eval(0.0) + b).max(0.0);
        best = best.min(num / sd * t + sd);
    }
    best
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ValueKind {
    Rescaled { epsilon: f64, seed: u64 },
    Homogenized,
}

/// Largest minimizer distance seen up to a time, against `rho(t)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MinimizerCheck {
    pub t: f64,
    pub max_distance: f64,
    pub radius: f64,
}

/// Values on a regular grid (`index * spacing`) at recorded times.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ValueField {
    pub kind: ValueKind,
    pub dim: usize,
    pub times: Vec<f64>,
    /// Microscopic lattice spacing (rescaled) or `h` spacing (homogenized).
    pub spacing: f64,
    pub region: IndexBox,
    /// `values[slice]`, row-major over `region`.
    pub values: Vec<Vec<f64>>,
    pub minimizers: Vec<MinimizerCheck>,
}

impl ValueField {
    pub fn slice_index(&self, t: f64) -> Option<usize> {
        self.times.iter().position(|s| (s - t).abs() <= 1e-9 * t.abs().max(1.0))
    }

    fn offset(&self, i: [i64; 2]) -> Option<usize> {
        if !self.region.contains(i) {
            return None;
        }
        let ny = self.region.hi[1] - self.region.lo[1] + 1;
        Some(((i[0] - self.region.lo[0]) * ny + (i[1] - self.region.lo[1])) as usize)
    }

    pub fn at(&self, slice: usize, i: [i64; 2]) -> Option<f64> {
        self.offset(i).map(|o| self.values[slice][o])
    }

    /// Piecewise-linear (1D) or bilinear (2D) interpolation.
    pub fn interpolate(&self, slice: usize, x: &[f64]) -> Option<f64> {
        let s: Vec<f64> = x.iter().map(|v| v / self.spacing).collect();
        let i0: Vec<i64> = s
            .iter()
            .map(|v| {
                let r = v.round();
                if (v - r).abs() < 1e-9 {
                    r as i64
                } else {
                    v.floor() as i64
                }
            })
            .collect();
        let fr: Vec<f64> = s.iter().zip(&i0).map(|(v, i)| (v - *i as f64).max(0.0)).collect();
        if self.dim == 1 {
            let a = self.at(slice, [i0[0], 0])?;
            if fr[0] < 1e-12 {
                return Some(a);
            }
            let b = self.at(slice, [i0[0] + 1, 0])?;
            Some(a + fr[0] * (b - a))
        } else {
            let mut acc = 0.0;
            for (dx, wx) in [(0, 1.0 - fr[0]), (1, fr[0])] {
                for (dy, wy) in [(0, 1.0 - fr[1]), (1, fr[1])] {
                    let w = wx * wy;
                    if w < 1e-14 {
                        continue;
                    }
                    acc += w * self.at(slice, [i0[0] + dx, i0[1] + dy])?;
                }
            }
            Some(acc)
        }
    }

    pub fn to_csv(&self) -> String {
        let label = match self.kind {
            ValueKind::Rescaled { .. } => "x",
            ValueKind::Homogenized => "h",
        };
        let mut s = String::new();
        for a in 0..self.dim {
            s.push_str(&format!("{label}{},", a + 1));
        }
        s.push_str("t,value\n");
        for (k, t) in self.times.iter().enumerate() {
            for i in self.region.lo[0]..=self.region.hi[0] {
                for j in self.region.lo[1]..=self.region.hi[1] {
                    s.push_str(&format!("{},", i as f64 * self.spacing));
                    if self.dim == 2 {
                        s.push_str(&format!("{},", j as f64 * self.spacing));
                    }
                    s.push_str(&format!("{t},{}\n", self.at(k, [i, j]).expect("in region")));
                }
            }
        }
        s
    }
}

/// Recording plan for a rescaled solve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolvePlan {
    pub epsilon: f64,
    /// Macroscopic times to record (multiples of `eps * dt`, ascending).
    pub times: Vec<f64>,
    /// Macroscopic half-width of the recorded region.
    pub reach: f64,
}

/// `u_eps` on `[-reach, reach]^n` (macroscopic) at the planned times.
///
/// Every Lax-Oleinik step tracks the origin of each minimizing path; an
/// origin farther than `rho(t)` (in `d_eps`) is a hard error.
pub fn solve_rescaled(
    medium: &Medium,
    omega: &EnvironmentSample,
    datum: &InitialDatum,
    plan: &SolvePlan,
    lattice: &Lattice,
) -> Result<ValueField> {
    let eps = plan.epsilon;
    if !(eps > 0.0) {
        return Err(Error::Datum(format!("epsilon must be positive, got {eps}")));
    }
    if plan.times.is_empty() || plan.times.windows(2).any(|w| w[0] >= w[1]) || plan.times[0] < 0.0 {
        return Err(Error::Datum("recorded times must be nonnegative and increasing".into()));
    }
    let (lower, upper) = medium.envelope().lagrangian_bounds()?;
    let sigma = datum.modulus();
    let steps: Vec<usize> = plan
        .times
        .iter()
        .map(|t| lattice.steps_for(t / eps))
        .collect::<Result<_>>()?;
    let total = *steps.last().expect("nonempty");
    let r = lattice.stencil_radius();
    let dx = lattice.dx();
    let m = lattice.cells_per_unit as i64;
    let reach_cells = ((plan.reach / eps).ceil() as i64 + 1) * m;
    let half = reach_cells + total as i64 * r + r;
    let lat = lattice.with_radius(half as f64 * dx);
    if lat.half_cells() < half {
        return Err(Error::Lattice("domain rounding lost cells".into()));
    }
    let engine = ActionEngine::new(medium, omega, &lat)?;
    let dim = lat.dim;
    let ry = if dim == 2 { reach_cells } else { 0 };
    let region = IndexBox {
        lo: [-reach_cells, -ry],
        hi: [reach_cells, ry],
    };
    let mut field = engine.datum(|y| datum.rescaled(y, eps) / eps);
    let mut origin: Vec<u32> = (0..engine.slots() as u32).collect();
    let mut values = Vec::with_capacity(steps.len());
    let mut checks = Vec::with_capacity(steps.len());
    let mut worst = 0.0f64;
    let record = |field: &crate::action::Field| -> Result<Vec<f64>> {
        Ok(field.values_in(region)?.into_iter().map(|v| eps * v).collect())
    };
    let mut next = 0;
    for s in 0..=total {
        if s > 0 {
            let (f, args) = engine.step_tracked(&field)?;
            let b = f.exact_box();
            let mut new_origin = origin.clone();
            let t = s as f64 * lat.dt() * eps;
            let rho = minimizer_radius(&sigma, &lower, &upper, t);
            for i in b.lo[0]..=b.hi[0] {
                for j in b.lo[1]..=b.hi[1] {
                    let slot = engine.slot([i, j]);
                    let pred = engine.predecessor([i, j], args[slot]);
                    let o = origin[engine.slot(pred)];
                    new_origin[slot] = o;
                    let op = engine.slot_coords(o as usize);
                    let d = eps * dx * (((op[0] - i).pow(2) + (op[1] - j).pow(2)) as f64).sqrt();
                    if d > rho + 1e-9 {
                        return Err(Error::MinimizerRadius {
                            distance: d,
                            radius: rho,
                            time: t,
                        });
                    }
                    worst = worst.max(d);
                }
            }
            origin = new_origin;
            field = f;
        }
        while next < steps.len() && steps[next] == s {
            values.push(record(&field)?);
            let t = plan.times[next];
            checks.push(MinimizerCheck {
                t,
                max_distance: worst,
                radius: minimizer_radius(&sigma, &lower, &upper, t),
            });
            next += 1;
        }
    }
    Ok(ValueField {
        kind: ValueKind::Rescaled {
            epsilon: eps,
            seed: omega.seed,
        },
        dim,
        times: plan.times.clone(),
        spacing: dx,
        region,
        values,
        minimizers: checks,
    })
}

/// Grid and search resolution for the Hopf-Lax evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HopfLaxPlan {
    pub times: Vec<f64>,
    /// Half-width of the `h` box.
    pub extent: f64,
    /// Spacing of the `h` grid.
    pub step: f64,
    /// Spacing of the `h'` search grid.
    pub search_step: f64,
}

/// `v(h, t) = min_{h'} v0(h') + t L_bar((h - h') / t)` with `h'` restricted
/// to `|h - h'| <= rho(t)`. Candidates outside the table are discarded when
/// the lower envelope proves them suboptimal; otherwise the table is too
/// small.
pub fn solve_homogenized(table: &EffectiveTable, datum: &InitialDatum, plan: &HopfLaxPlan) -> Result<ValueField> {
    let dim = table.dim();
    let half_f = plan.extent / plan.step;
    let half = half_f.round() as i64;
    if (half_f - half as f64).abs() > 1e-9 * half_f.max(1.0) {
        return Err(Error::Datum("h extent must be a multiple of the step".into()));
    }
    let ratio = plan.step / plan.search_step;
    if (ratio - ratio.round()).abs() > 1e-9 || ratio < 1.0 {
        return Err(Error::Datum("search step must divide the h step".into()));
    }
    let hy = if dim == 2 { half } else { 0 };
    let region = IndexBox {
        lo: [-half, -hy],
        hi: [half, hy],
    };
    let sigma = datum.limit_modulus();
    let lower = table.lagrangian_lower;
    let upper = table.lagrangian_upper;
    let lbar_min = table.convexified.iter().copied().fold(f64::INFINITY, f64::min);
    let mut values = Vec::with_capacity(plan.times.len());
    let mut checks = Vec::new();
    for &t in &plan.times {
        let mut slice = Vec::new();
        let rho = minimizer_radius(&sigma, &lower, &upper, t);
        let nsearch = (rho / plan.search_step).ceil() as i64;
        let nsy = if dim == 2 { nsearch } else { 0 };
        let mut worst = 0.0f64;
        for i in region.lo[0]..=region.hi[0] {
            for j in region.lo[1]..=region.hi[1] {
                let h = [i as f64 * plan.step, j as f64 * plan.step];
                let h = &h[..dim];
                if t == 0.0 {
                    slice.push(datum.limit(h));
                    continue;
                }
                let mut best = f64::INFINITY;
                let mut best_d = 0.0;
                let mut deferred: Vec<(f64, f64)> = Vec::new();
                for a in -nsearch..=nsearch {
                    for b in -nsy..=nsy {
                        let d = [a as f64 * plan.search_step, b as f64 * plan.search_step];
                        let dn = (d[0] * d[0] + d[1] * d[1]).sqrt();
                        if dn > rho + 1e-12 {
                            continue;
                        }
                        let hp: Vec<f64> = (0..dim).map(|k| h[k] - d[k]).collect();
                        let q: Vec<f64> = (0..dim).map(|k| d[k] / t).collect();
                        let v0 = datum.limit(&hp);
                        match table.interpolate(&q) {
                            Some(l) => {
                                let v = v0 + t * l;
                                if v < best {
                                    best = v;
                                    best_d = dn;
                                }
                            }
                            None => deferred.push((v0, dn / t)),
                        }
                    }
                }
                for (v0, qn) in deferred {
                    let bound = v0 + t * lower.eval(qn).max(lbar_min);
                    if bound < best {
                        return Err(Error::EnlargeRadius { needed: qn });
                    }
                }
                worst = worst.max(best_d);
                slice.push(best);
            }
        }
        values.push(slice);
        checks.push(MinimizerCheck {
            t,
            max_distance: worst,
            radius: rho,
        });
    }
    Ok(ValueField {
        kind: ValueKind::Homogenized,
        dim,
        times: plan.times.clone(),
        spacing: plan.step,
        region,
        values,
        minimizers: checks,
    })
}

/// Compact set `K = box x [t0, t1]` and its evaluation grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KSet {
    pub h_lo: Vec<f64>,
    pub h_hi: Vec<f64>,
    pub h_step: f64,
    pub t0: f64,
    pub t1: f64,
    pub t_step: f64,
}

impl KSet {
    fn axis(lo: f64, hi: f64, step: f64) -> Vec<f64> {
        let n = ((hi - lo) / step + 1e-9).floor() as i64;
        (0..=n).map(|i| lo + i as f64 * step).collect()
    }

    pub fn times(&self) -> Vec<f64> {
        Self::axis(self.t0, self.t1, self.t_step)
    }

    pub fn points(&self) -> Vec<Vec<f64>> {
        let xs = Self::axis(self.h_lo[0], self.h_hi[0], self.h_step);
        if self.h_lo.len() == 1 {
            return xs.into_iter().map(|x| vec![x]).collect();
        }
        let ys = Self::axis(self.h_lo[1], self.h_hi[1], self.h_step);
        xs.iter()
            .flat_map(|x| ys.iter().map(move |y| vec![*x, *y]))
            .collect()
    }

    pub fn reach(&self) -> f64 {
        self.h_lo
            .iter()
            .chain(&self.h_hi)
            .map(|v| v.abs())
            .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub epsilon: f64,
    pub seed: u64,
    pub k: KSet,
    pub bases: Vec<Vec<f64>>,
    /// `sup |u_eps(Phi_eps(h) + x, t) - v(h, t)|` over `K` and the bases.
    pub sup_error: f64,
    pub worst_h: Vec<f64>,
    pub worst_t: f64,
    pub worst_base: Vec<f64>,
    /// Same supremum at `t = 0` (datum check), when recorded.
    pub datum_error: Option<f64>,
    pub evaluations: usize,
}

/// Gap between a rescaled and a homogenized field over `K`; `v` is
/// interpolated in `h`, `u_eps` is read at lattice points only.
pub fn convergence_error(u: &ValueField, v: &ValueField, k: &KSet, bases: &[Vec<f64>]) -> Result<ConvergenceReport> {
    let ValueKind::Rescaled { epsilon, seed } = u.kind else {
        return Err(Error::Coverage("first field must be a rescaled solution".into()));
    };
    let m = (1.0 / u.spacing).round() as i64;
    let bases: Vec<Vec<f64>> = if bases.is_empty() {
        vec![vec![0.0; u.dim]]
    } else {
        bases.to_vec()
    };
    let points = k.points();
    let gap_at = |t: f64| -> Result<(f64, Vec<f64>, Vec<f64>, usize)> {
        let su = u
            .slice_index(t)
            .ok_or_else(|| Error::Coverage(format!("u_eps has no slice at t = {t}")))?;
        let sv = v
            .slice_index(t)
            .ok_or_else(|| Error::Coverage(format!("v has no slice at t = {t}")))?;
        let mut worst = (f64::NEG_INFINITY, Vec::new(), Vec::new());
        let mut n = 0;
        for x in &bases {
            let xi: Vec<i64> = x.iter().map(|c| (c * m as f64).round() as i64).collect();
            for h in &points {
                let z = phi_map(epsilon, h);
                let idx = [
                    z[0] * m + xi[0],
                    if u.dim == 2 { z[1] * m + xi[1] } else { 0 },
                ];
                let uv = u.at(su, idx).ok_or_else(|| {
                    Error::Coverage(format!("u_eps not computed at lattice index {idx:?}"))
                })?;
                let vv = v
                    .interpolate(sv, h)
                    .ok_or_else(|| Error::Coverage(format!("v not computed at h = {h:?}")))?;
                let g = (uv - vv).abs();
                n += 1;
                if g > worst.0 {
                    worst = (g, h.clone(), x.clone());
                }
            }
        }
        Ok((worst.0, worst.1, worst.2, n))
    };
    let mut sup = f64::NEG_INFINITY;
    let mut wh = Vec::new();
    let mut wt = 0.0;
    let mut wb = Vec::new();
    let mut evaluations = 0;
    for t in k.times() {
        let (g, h, b, n) = gap_at(t)?;
        evaluations += n;
        if g > sup {
            sup = g;
            wh = h;
            wt = t;
            wb = b;
        }
    }
    let datum_error = match (u.slice_index(0.0), v.slice_index(0.0)) {
        (Some(_), Some(_)) => Some(gap_at(0.0)?.0),
        _ => None,
    };
    Ok(ConvergenceReport {
        epsilon,
        seed,
        k: k.clone(),
        bases,
        sup_error: sup,
        worst_h: wh,
        worst_t: wt,
        worst_base: wb,
        datum_error,
        evaluations,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RegularityEntry {
    pub epsilon: f64,
    /// Largest `|u(y') - u(y)| / d_eps(y, y')` over neighbours, `t >= t0`.
    pub lip_x: f64,
    /// Largest `|u(y, t') - u(y, t)| / |t' - t|` between recorded slices `>= t0`.
    pub lip_t: f64,
    /// Largest neighbour difference over all slices including `t = 0`.
    pub full_modulus: f64,
    /// Largest `|u(y') - u(y)| - sigma(d_eps)` on the `t = 0` slice.
    pub initial_excess: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RegularityReport {
    pub t0: f64,
    pub entries: Vec<RegularityEntry>,
    /// `(max - min) / max` of `lip_x` across fields.
    pub spread: f64,
    pub tolerance: f64,
    pub uniform: bool,
}

/// Equicontinuity of rescaled solutions across `eps`.
pub fn audit_value_regularity(
    fields: &[ValueField],
    datum: &InitialDatum,
    t0: f64,
    tolerance: f64,
) -> Result<RegularityReport> {
    if fields.len() < 2 || !(t0 > 0.0) {
        return Err(Error::Datum("regularity audit needs two fields and t0 > 0".into()));
    }
    let sigma = datum.modulus();
    let mut entries = Vec::new();
    for f in fields {
        let ValueKind::Rescaled { epsilon, .. } = f.kind else {
            return Err(Error::Datum("regularity audit takes rescaled fields".into()));
        };
        let d = epsilon * f.spacing;
        let mut lip_x = 0.0f64;
        let mut lip_t = 0.0f64;
        let mut full = 0.0f64;
        let mut initial_excess = None;
        let r = f.region;
        for (s, t) in f.times.iter().enumerate() {
            let mut local = 0.0f64;
            for i in r.lo[0]..=r.hi[0] {
                for j in r.lo[1]..=r.hi[1] {
                    let a = f.at(s, [i, j]).expect("in region");
                    for n in [[i + 1, j], [i, j + 1]] {
                        if let Some(b) = f.at(s, n) {
                            local = local.max((b - a).abs());
                        }
                    }
                    if *t >= t0 - 1e-12 && s + 1 < f.times.len() {
                        let b = f.at(s + 1, [i, j]).expect("in region");
                        lip_t = lip_t.max((b - a).abs() / (f.times[s + 1] - t));
                    }
                }
            }
            full = full.max(local);
            if *t >= t0 - 1e-12 {
                lip_x = lip_x.max(local / d);
            }
            if *t == 0.0 {
                initial_excess = Some(local - sigma.eval(d));
            }
        }
        entries.push(RegularityEntry {
            epsilon,
            lip_x,
            lip_t,
            full_modulus: full,
            initial_excess,
        });
    }
    let max = entries.iter().map(|e| e.lip_x).fold(0.0, f64::max);
    let min = entries.iter().map(|e| e.lip_x).fold(f64::INFINITY, f64::min);
    let spread = if max > 0.0 { (max - min) / max } else { 0.0 };
    let datum_ok = entries
        .iter()
        .all(|e| e.initial_excess.is_none_or(|x| x <= 1e-12));
    Ok(RegularityReport {
        t0,
        entries,
        spread,
        tolerance,
        uniform: spread <= tolerance && datum_ok,
    })
}
