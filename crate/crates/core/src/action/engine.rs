use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::lattice::{gauss_legendre, IndexBox, Lattice};
use crate::error::{Error, Result};
use crate::media::{EnvironmentSample, Medium};

/// Dense cost tables beyond this many entries are evaluated on the fly.
const DENSE_COST_LIMIT: usize = 20_000_000;

/// Memory layout: the logical domain `[-half, half]^dim` surrounded by a
/// ring of width `pad` (the stencil radius) so stencil reads never leave
/// the array.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct Layout {
    dim: usize,
    half: i64,
    pad: i64,
    sy: usize,
    cy: i64,
    len: usize,
}

impl Layout {
    fn new(dim: usize, half: i64, pad: i64) -> Self {
        let side = (2 * (half + pad) + 1) as usize;
        let (sy, cy) = if dim == 2 { (side, half + pad) } else { (1, 0) };
        Self {
            dim,
            half,
            pad,
            sy,
            cy,
            len: side * sy,
        }
    }

    #[inline]
    fn flat(&self, p: [i64; 2]) -> usize {
        ((p[0] + self.half + self.pad) as usize) * self.sy + (p[1] + self.cy) as usize
    }

    #[inline]
    fn coords(&self, f: usize) -> [i64; 2] {
        [
            (f / self.sy) as i64 - self.half - self.pad,
            (f % self.sy) as i64 - self.cy,
        ]
    }

    fn domain(&self) -> IndexBox {
        IndexBox::cube(self.dim, self.half)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FieldKind {
    /// Point-mass seed: `+inf` outside a tracked support box, exact on the
    /// whole domain.
    Delta,
    /// General initial datum: exact only on a box that shrinks by the
    /// stencil radius every step.
    Datum,
}

/// A time slice of the dynamic programme.
#[derive(Debug, Clone)]
pub struct Field {
    layout: Layout,
    values: Vec<f64>,
    kind: FieldKind,
    exact: IndexBox,
    support: IndexBox,
}

impl Field {
    pub fn kind(&self) -> FieldKind {
        self.kind
    }

    pub fn dim(&self) -> usize {
        self.layout.dim
    }

    /// Box on which values are exact.
    pub fn exact_box(&self) -> IndexBox {
        self.exact
    }

    /// Box outside which every value is `+inf` (delta fields) or unknown.
    pub fn support_box(&self) -> IndexBox {
        self.support
    }

    pub fn domain(&self) -> IndexBox {
        self.layout.domain()
    }

    /// Value at a lattice index, `None` outside the exact region.
    pub fn get(&self, p: [i64; 2]) -> Option<f64> {
        if !self.exact.contains(p) {
            return None;
        }
        Some(self.values[self.layout.flat(p)])
    }

    pub fn value(&self, p: [i64; 2]) -> Result<f64> {
        self.get(p).ok_or_else(|| {
            Error::Coverage(format!(
                "index {p:?} outside the exact region {:?}",
                self.exact
            ))
        })
    }

    /// Row-major values over `b` (must lie in the exact region).
    pub fn values_in(&self, b: IndexBox) -> Result<Vec<f64>> {
        if !b.within(&self.exact) {
            return Err(Error::Coverage(format!(
                "box {b:?} outside the exact region {:?}",
                self.exact
            )));
        }
        let mut out = Vec::new();
        for i in b.lo[0]..=b.hi[0] {
            for j in b.lo[1]..=b.hi[1] {
                out.push(self.values[self.layout.flat([i, j])]);
            }
        }
        Ok(out)
    }

    pub fn add_constant(&self, c: f64) -> Field {
        let mut f = self.clone();
        for v in f.values.iter_mut() {
            *v += c;
        }
        f
    }

    /// Pointwise minimum with another field of the same layout and kind.
    pub fn min_with(&self, other: &Field) -> Field {
        assert_eq!(self.layout, other.layout);
        let mut f = self.clone();
        for (a, b) in f.values.iter_mut().zip(&other.values) {
            if *b < *a {
                *a = *b;
            }
        }
        f.support = IndexBox {
            lo: [
                self.support.lo[0].min(other.support.lo[0]),
                self.support.lo[1].min(other.support.lo[1]),
            ],
            hi: [
                self.support.hi[0].max(other.support.hi[0]),
                self.support.hi[1].max(other.support.hi[1]),
            ],
        };
        f.exact = self.exact.intersect(&other.exact);
        f
    }

    /// Raw storage including the padding ring; equality of two fields'
    /// storage means bitwise-identical results.
    pub fn raw(&self) -> &[f64] {
        &self.values
    }
}

#[derive(Debug, Clone)]
enum Costs {
    /// Indexed by the residue class of the output point.
    Periodic { m: i64, my: i64, table: Vec<f64> },
    /// Indexed by the output point over the logical domain.
    Dense { table: Vec<f64> },
    Lazy,
}

/// Lax-Oleinik stepper bound to one medium, environment and lattice.
#[derive(Debug)]
pub struct ActionEngine<'a> {
    medium: &'a Medium,
    omega: EnvironmentSample,
    lattice: Lattice,
    layout: Layout,
    stencil: Vec<[i64; 2]>,
    offsets: Vec<isize>,
    costs: Costs,
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

/// Minimal actions from one source at one horizon.
#[derive(Debug, Clone)]
pub struct ActionTable {
    pub source: [i64; 2],
    pub horizon_steps: usize,
    pub omega: EnvironmentSample,
    pub medium_id: String,
    pub lattice: Lattice,
    pub field: Field,
}

impl ActionTable {
    pub fn horizon(&self) -> f64 {
        self.horizon_steps as f64 * self.lattice.dt()
    }

    /// `phi(source, target, horizon)`: `+inf` outside the cone, NaN where a
    /// cropped table holds no value.
    pub fn value(&self, target: [i64; 2]) -> f64 {
        match self.field.get(target) {
            Some(v) => v,
            None if self.field.exact == self.field.domain() => f64::INFINITY,
            None => f64::NAN,
        }
    }

    /// Restricts the table to `b`; values outside become unknown.
    pub fn cropped(&self, b: IndexBox) -> ActionTable {
        let mut t = self.clone();
        t.field.exact = t.field.exact.intersect(&b);
        t.field.support = t.field.support.intersect(&b);
        t
    }
}

impl<'a> ActionEngine<'a> {
    pub fn new(medium: &'a Medium, omega: &EnvironmentSample, lattice: &Lattice) -> Result<Self> {
        lattice.validate()?;
        medium.check_sample(omega)?;
        if medium.dim() != lattice.dim {
            return Err(Error::Dimension {
                expected: medium.dim(),
                found: lattice.dim,
            });
        }
        let r = lattice.stencil_radius();
        let reach = lattice.speed_cap * lattice.dt() / lattice.dx();
        let layout = Layout::new(lattice.dim, lattice.half_cells(), r);
        let r2 = if lattice.dim == 2 { r } else { 0 };
        let mut stencil = Vec::new();
        for a in -r..=r {
            for b in -r2..=r2 {
                if ((a * a + b * b) as f64) <= reach * reach + 1e-9 {
                    stencil.push([a, b]);
                }
            }
        }
        if stencil.len() < 2 {
            return Err(Error::Lattice("empty stencil".into()));
        }
        // Ascending predecessor y = x - d: descending d.
        stencil.sort_by(|a, b| b.cmp(a));
        let offsets = stencil
            .iter()
            .map(|d| d[0] as isize * layout.sy as isize + d[1] as isize)
            .collect();
        let (nodes, weights) = gauss_legendre(lattice.quadrature_nodes);
        let mut engine = Self {
            medium,
            omega: omega.clone(),
            lattice: lattice.clone(),
            layout,
            stencil,
            offsets,
            costs: Costs::Lazy,
            nodes,
            weights,
        };
        engine.costs = engine.build_costs();
        Ok(engine)
    }

    pub fn lattice(&self) -> &Lattice {
        &self.lattice
    }

    pub fn omega(&self) -> &EnvironmentSample {
        &self.omega
    }

    pub fn medium(&self) -> &Medium {
        self.medium
    }

    pub fn stencil(&self) -> &[[i64; 2]] {
        &self.stencil
    }

    fn build_costs(&self) -> Costs {
        let s = self.stencil.len();
        let dim = self.lattice.dim;
        if self.medium.is_lattice_periodic() {
            let m = self.lattice.cells_per_unit as i64;
            let my = if dim == 2 { m } else { 1 };
            let mut table = vec![0.0; (m * my) as usize * s];
            table
                .par_chunks_mut(s)
                .enumerate()
                .for_each(|(res, row)| {
                    let x = [res as i64 / my, res as i64 % my];
                    for (k, d) in self.stencil.iter().enumerate() {
                        row[k] = self.segment_cost([x[0] - d[0], x[1] - d[1]], *d);
                    }
                });
            return Costs::Periodic { m, my, table };
        }
        let domain = self.layout.domain();
        let npts = ((domain.hi[0] - domain.lo[0] + 1) * (domain.hi[1] - domain.lo[1] + 1)) as usize;
        if npts * s > DENSE_COST_LIMIT {
            return Costs::Lazy;
        }
        let ny = domain.hi[1] - domain.lo[1] + 1;
        let mut table = vec![0.0; npts * s];
        table.par_chunks_mut(s).enumerate().for_each(|(k, row)| {
            let x = [
                domain.lo[0] + k as i64 / ny,
                domain.lo[1] + k as i64 % ny,
            ];
            for (n, d) in self.stencil.iter().enumerate() {
                row[n] = self.segment_cost([x[0] - d[0], x[1] - d[1]], *d);
            }
        });
        Costs::Dense { table }
    }

    /// Action of the straight segment from lattice point `y` to `y + d`
    /// traversed in one time step.
    ///
    /// Metric media use the optimal reparametrization of the segment,
    /// `(g-length)^2 / dt`; other media integrate `L` at constant velocity.
    pub fn segment_cost(&self, y: [i64; 2], d: [i64; 2]) -> f64 {
        let dx = self.lattice.dx();
        let dt = self.lattice.dt();
        let dim = self.lattice.dim;
        let y = [y[0] as f64 * dx, y[1] as f64 * dx];
        let dv = [d[0] as f64 * dx, d[1] as f64 * dx];
        if let Some(family) = self.medium.metric_family() {
            let len = (dv[0] * dv[0] + dv[1] * dv[1]).sqrt();
            if len == 0.0 {
                return 0.0;
            }
            let mut cbar = 0.0;
            for (s, w) in self.nodes.iter().zip(&self.weights) {
                let p = [y[0] + s * dv[0], y[1] + s * dv[1]];
                cbar += w * family.conformal_factor(&p[..dim], self.omega.phase());
            }
            let l = cbar * len;
            return l * l / dt;
        }
        let q = [dv[0] / dt, dv[1] / dt];
        if d == [0, 0] {
            return dt * self.medium.lagrangian_fast(&y[..dim], &q[..dim], &self.omega);
        }
        let mut acc = 0.0;
        for (s, w) in self.nodes.iter().zip(&self.weights) {
            let p = [y[0] + s * dv[0], y[1] + s * dv[1]];
            acc += w * self.medium.lagrangian_fast(&p[..dim], &q[..dim], &self.omega);
        }
        dt * acc
    }

    #[inline]
    fn cost_row(&self, x: [i64; 2]) -> Option<&[f64]> {
        let s = self.stencil.len();
        match &self.costs {
            Costs::Periodic { m, my, table } => {
                let res = (x[0].rem_euclid(*m) * my + x[1].rem_euclid(*my)) as usize;
                Some(&table[res * s..(res + 1) * s])
            }
            Costs::Dense { table } => {
                let d = self.layout.domain();
                let ny = d.hi[1] - d.lo[1] + 1;
                let k = ((x[0] - d.lo[0]) * ny + (x[1] - d.lo[1])) as usize;
                Some(&table[k * s..(k + 1) * s])
            }
            Costs::Lazy => None,
        }
    }

    /// Point mass at `source`: `0` there, `+inf` elsewhere.
    pub fn delta(&self, source: [i64; 2]) -> Result<Field> {
        let domain = self.layout.domain();
        if !domain.contains(source) {
            return Err(Error::BoundaryContact {
                required: self.required_radius_for(source, 0.0),
            });
        }
        let mut values = vec![f64::INFINITY; self.layout.len];
        values[self.layout.flat(source)] = 0.0;
        Ok(Field {
            layout: self.layout,
            values,
            kind: FieldKind::Delta,
            exact: domain,
            support: IndexBox::point(source),
        })
    }

    /// Initial datum sampled on the whole domain.
    pub fn datum<F: Fn(&[f64]) -> f64 + Sync>(&self, f: F) -> Field {
        let domain = self.layout.domain();
        let dim = self.lattice.dim;
        let dx = self.lattice.dx();
        let layout = self.layout;
        let mut values = vec![f64::NAN; layout.len];
        values.par_iter_mut().enumerate().for_each(|(k, v)| {
            let p = layout.coords(k);
            if domain.contains(p) {
                let x = [p[0] as f64 * dx, p[1] as f64 * dx];
                *v = f(&x[..dim]);
            }
        });
        Field {
            layout,
            values,
            kind: FieldKind::Datum,
            exact: domain,
            support: domain,
        }
    }

    /// Delta-kind field exact on `exact`, `+inf` outside `support`, with
    /// `values` given row-major over `exact ∩ support`.
    pub(crate) fn delta_from_values(
        &self,
        exact: IndexBox,
        support: IndexBox,
        values: &[f64],
    ) -> Result<Field> {
        let domain = self.layout.domain();
        if !exact.within(&domain) || exact.is_empty() {
            return Err(Error::Cache(format!(
                "exact region {exact:?} outside the domain {domain:?}"
            )));
        }
        let stored = exact.intersect(&support);
        let n = if stored.is_empty() {
            0
        } else {
            ((stored.hi[0] - stored.lo[0] + 1) * (stored.hi[1] - stored.lo[1] + 1)) as usize
        };
        if n != values.len() {
            return Err(Error::Cache(format!("expected {n} values, found {}", values.len())));
        }
        let mut data = vec![f64::INFINITY; self.layout.len];
        let mut it = values.iter();
        if !stored.is_empty() {
            for i in stored.lo[0]..=stored.hi[0] {
                for j in stored.lo[1]..=stored.hi[1] {
                    data[self.layout.flat([i, j])] = *it.next().expect("sized above");
                }
            }
        }
        Ok(Field {
            layout: self.layout,
            values: data,
            kind: FieldKind::Delta,
            exact,
            support,
        })
    }

    fn required_radius_for(&self, source: [i64; 2], horizon: f64) -> f64 {
        let off = source[0].abs().max(source[1].abs()) as f64 * self.lattice.dx();
        self.lattice.required_radius(off, horizon)
    }

    fn step_boxes(&self, input: &Field) -> Result<(IndexBox, IndexBox, IndexBox)> {
        let r = self.lattice.stencil_radius();
        let dim = self.lattice.dim;
        let domain = self.layout.domain();
        match input.kind {
            FieldKind::Delta => {
                let grown = input.support.grow(dim, r);
                if !grown.within(&domain) {
                    let extent = (0..dim)
                        .map(|k| grown.lo[k].abs().max(grown.hi[k].abs()))
                        .max()
                        .unwrap_or(0);
                    return Err(Error::BoundaryContact {
                        required: (extent + r) as f64 * self.lattice.dx(),
                    });
                }
                Ok((grown, domain, grown))
            }
            FieldKind::Datum => {
                let shrunk = input.exact.grow(dim, -r);
                if shrunk.is_empty() {
                    return Err(Error::BoundaryContact {
                        required: self.lattice.radius + r as f64 * self.lattice.dx(),
                    });
                }
                Ok((shrunk, shrunk, shrunk))
            }
        }
    }

    #[inline]
    fn relax(&self, input: &[f64], p: [i64; 2]) -> (f64, u32) {
        let f = self.layout.flat(p) as isize;
        let mut best = f64::INFINITY;
        let mut arg = u32::MAX;
        match self.cost_row(p) {
            Some(row) => {
                for (k, (off, c)) in self.offsets.iter().zip(row).enumerate() {
                    let v = input[(f - off) as usize] + c;
                    if v < best {
                        best = v;
                        arg = k as u32;
                    }
                }
            }
            None => {
                for (k, (off, d)) in self.offsets.iter().zip(&self.stencil).enumerate() {
                    let u = input[(f - off) as usize];
                    if u == f64::INFINITY {
                        continue;
                    }
                    let v = u + self.segment_cost([p[0] - d[0], p[1] - d[1]], *d);
                    if v < best {
                        best = v;
                        arg = k as u32;
                    }
                }
            }
        }
        (best, arg)
    }

    /// One Lax-Oleinik step.
    pub fn step(&self, input: &Field) -> Result<Field> {
        Ok(self.step_inner(input, false)?.0)
    }

    /// One step, also returning for every array slot the stencil index of
    /// the minimizing predecessor (`u32::MAX` where nothing was computed).
    pub fn step_tracked(&self, input: &Field) -> Result<(Field, Vec<u32>)> {
        let (f, a) = self.step_inner(input, true)?;
        Ok((f, a.expect("tracked step")))
    }

    fn step_inner(&self, input: &Field, track: bool) -> Result<(Field, Option<Vec<u32>>)> {
        assert_eq!(input.layout, self.layout, "field from a different engine");
        let (out_box, exact, support) = self.step_boxes(input)?;
        let layout = self.layout;
        let fill = match input.kind {
            FieldKind::Delta => f64::INFINITY,
            FieldKind::Datum => f64::NAN,
        };
        let mut values = vec![fill; layout.len];
        let chunk = if layout.dim == 2 { layout.sy } else { 1024 };
        let src = &input.values;
        let mut args = if track {
            Some(vec![u32::MAX; layout.len])
        } else {
            None
        };
        let body = |start: usize, vals: &mut [f64], mut arg: Option<&mut [u32]>| {
            if layout.dim == 2 {
                let row = layout.coords(start)[0];
                if row < out_box.lo[0] || row > out_box.hi[0] {
                    return;
                }
            }
            for (k, v) in vals.iter_mut().enumerate() {
                let p = layout.coords(start + k);
                if !out_box.contains(p) {
                    continue;
                }
                let (best, a) = self.relax(src, p);
                *v = best;
                if let Some(arg) = arg.as_deref_mut() {
                    arg[k] = a;
                }
            }
        };
        match args.as_mut() {
            Some(args) => values
                .par_chunks_mut(chunk)
                .zip(args.par_chunks_mut(chunk))
                .enumerate()
                .for_each(|(ci, (v, a))| body(ci * chunk, v, Some(a))),
            None => values
                .par_chunks_mut(chunk)
                .enumerate()
                .for_each(|(ci, v)| body(ci * chunk, v, None)),
        }
        Ok((
            Field {
                layout,
                values,
                kind: input.kind,
                exact,
                support,
            },
            args,
        ))
    }

    pub fn march(&self, field: &Field, steps: usize) -> Result<Field> {
        let mut f = field.clone();
        for _ in 0..steps {
            f = self.step(&f)?;
        }
        Ok(f)
    }

    /// Flat-array predecessor of `p` under stencil index `arg`.
    pub fn predecessor(&self, p: [i64; 2], arg: u32) -> [i64; 2] {
        let d = self.stencil[arg as usize];
        [p[0] - d[0], p[1] - d[1]]
    }

    pub(crate) fn slot(&self, p: [i64; 2]) -> usize {
        self.layout.flat(p)
    }

    pub(crate) fn slot_coords(&self, f: usize) -> [i64; 2] {
        self.layout.coords(f)
    }

    pub(crate) fn slots(&self) -> usize {
        self.layout.len
    }

    /// Action tables from `source` at each horizon (in steps, ascending).
    pub fn action_tables(&self, source: [i64; 2], horizons: &[usize]) -> Result<Vec<ActionTable>> {
        let mut sorted = horizons.to_vec();
        sorted.sort_unstable();
        let mut field = self.delta(source)?;
        let mut done = 0;
        let mut out = Vec::with_capacity(horizons.len());
        for &h in &sorted {
            while done < h {
                field = self.step(&field)?;
                done += 1;
            }
            out.push(ActionTable {
                source,
                horizon_steps: h,
                omega: self.omega.clone(),
                medium_id: self.medium.id().to_string(),
                lattice: self.lattice.clone(),
                field: field.clone(),
            });
        }
        // restore caller's order
        Ok(horizons
            .iter()
            .map(|h| {
                out.iter()
                    .find(|t| t.horizon_steps == *h)
                    .expect("computed horizon")
                    .clone()
            })
            .collect())
    }

    pub fn action_table(&self, source: [i64; 2], t: f64) -> Result<ActionTable> {
        let steps = self.lattice.steps_for(t)?;
        Ok(self.action_tables(source, &[steps])?.remove(0))
    }

    pub fn minimal_action(&self, source: &[f64], target: &[f64], t: f64) -> Result<f64> {
        let s = self.lattice.index_of(source)?;
        let x = self.lattice.index_of(target)?;
        let distance = source
            .iter()
            .zip(target)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        let steps = self.lattice.steps_for(t)?;
        if steps == 0 {
            return if distance == 0.0 {
                Ok(0.0)
            } else {
                Err(Error::ConeViolation {
                    distance,
                    time: t,
                    required: f64::INFINITY,
                })
            };
        }
        if distance >= self.lattice.speed_cap * t {
            return Err(Error::ConeViolation {
                distance,
                time: t,
                required: distance / t,
            });
        }
        let table = self.action_tables(s, &[steps]).map_err(|e| match e {
            Error::BoundaryContact { .. } => Error::BoundaryContact {
                required: self.required_radius_for(s, t),
            },
            e => e,
        })?;
        Ok(table[0].value(x))
    }

    pub fn rescaled_action(&self, epsilon: f64, source: &[f64], target: &[f64], t: f64) -> Result<f64> {
        let micro = t / epsilon;
        self.lattice.steps_for(micro)?;
        Ok(epsilon * self.minimal_action(source, target, micro)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::media::{make_periodic_medium, sample_environment, PeriodicSpec};

    fn free() -> Medium {
        make_periodic_medium(PeriodicSpec::free(1)).unwrap()
    }

    fn small(dim: usize) -> Lattice {
        Lattice {
            dim,
            cells_per_unit: 10,
            steps_per_unit: 5,
            speed_cap: 2.0,
            radius: 4.0,
            quadrature_nodes: 3,
        }
    }

    #[test]
    fn zero_field_is_fixed() {
        let m = free();
        let w = sample_environment(&m, 0);
        let e = ActionEngine::new(&m, &w, &small(1)).unwrap();
        let f = e.datum(|_| 0.0);
        let g = e.step(&f).unwrap();
        for v in g.values_in(g.exact_box()).unwrap() {
            assert_eq!(v, 0.0);
        }
    }

    #[test]
    fn single_step_from_point_mass() {
        let m = free();
        let w = sample_environment(&m, 0);
        let l = small(1);
        let e = ActionEngine::new(&m, &w, &l).unwrap();
        let f = e.step(&e.delta([0, 0]).unwrap()).unwrap();
        let dt = l.dt();
        for i in -4..=4 {
            let x = i as f64 * l.dx();
            let expected = dt * x * x / (2.0 * dt * dt);
            assert!((f.get([i, 0]).unwrap() - expected).abs() < 1e-14);
        }
        assert_eq!(f.get([5, 0]).unwrap(), f64::INFINITY);
    }

    #[test]
    fn delta_boundary_contact() {
        let m = free();
        let w = sample_environment(&m, 0);
        let e = ActionEngine::new(&m, &w, &small(1)).unwrap();
        let err = e.minimal_action(&[0.0], &[0.5], 3.0).unwrap_err();
        assert!(matches!(err, Error::BoundaryContact { .. }), "{err:?}");
        let err = e.minimal_action(&[0.0], &[3.0], 1.0).unwrap_err();
        assert!(matches!(err, Error::ConeViolation { .. }), "{err:?}");
    }

    #[test]
    fn tie_break_prefers_smallest_predecessor() {
        let m = free();
        let w = sample_environment(&m, 0);
        let e = ActionEngine::new(&m, &w, &small(1)).unwrap();
        // Constant field: every predecessor at distance 0 ties only with itself,
        // but a symmetric V-shaped field ties y = x - 1 and y = x + 1.
        let f = e.datum(|x| if x[0].abs() < 0.05 { 1.0 } else { 0.0 });
        let (_, args) = e.step_tracked(&f).unwrap();
        let p = [0, 0];
        let a = args[e.slot(p)];
        let pred = e.predecessor(p, a);
        assert!(pred[0] < 0, "{pred:?}");
    }

    #[test]
    fn two_dimensional_rest_and_free_motion() {
        let m = make_periodic_medium(PeriodicSpec::free(2)).unwrap();
        let w = sample_environment(&m, 0);
        let l = small(2);
        let e = ActionEngine::new(&m, &w, &l).unwrap();
        assert_eq!(e.minimal_action(&[0.0, 0.0], &[0.0, 0.0], 1.0).unwrap(), 0.0);
        // One stencil offset (1, 2) per step: the straight path is on the lattice.
        let v = e.minimal_action(&[0.0, 0.0], &[0.5, 1.0], 1.0).unwrap();
        assert!((v - 0.625).abs() < 1e-12, "{v}");
    }
}
