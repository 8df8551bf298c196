use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Space-time lattice in unit-cell units: `dx = 1 / cells_per_unit`,
/// `dt = 1 / steps_per_unit`.
///
/// Velocities reachable in one step are multiples of `dx / dt`, so the
/// velocity resolution is `steps_per_unit / cells_per_unit`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Lattice {
    pub dim: usize,
    pub cells_per_unit: u32,
    pub steps_per_unit: u32,
    /// Cone slope `A`: largest speed of a single step.
    pub speed_cap: f64,
    /// Half-width of the spatial box, in unit cells.
    pub radius: f64,
    #[serde(default = "Lattice::default_nodes")]
    pub quadrature_nodes: usize,
}

impl Lattice {
    fn default_nodes() -> usize {
        4
    }

    /// One-dimensional default: `dx = 1/160`, `dt = 1/8` (velocity step 0.05).
    pub fn default_1d(speed_cap: f64, radius: f64) -> Self {
        Self {
            dim: 1,
            cells_per_unit: 160,
            steps_per_unit: 8,
            speed_cap,
            radius,
            quadrature_nodes: 4,
        }
    }

    /// Two-dimensional default: `dx = 1/16`, `dt = 1/4`.
    pub fn default_2d(speed_cap: f64, radius: f64) -> Self {
        Self {
            dim: 2,
            cells_per_unit: 16,
            steps_per_unit: 4,
            speed_cap,
            radius,
            quadrature_nodes: 4,
        }
    }

    pub fn dx(&self) -> f64 {
        1.0 / self.cells_per_unit as f64
    }

    pub fn dt(&self) -> f64 {
        1.0 / self.steps_per_unit as f64
    }

    pub fn stencil_radius(&self) -> i64 {
        (self.speed_cap * self.dt() / self.dx() - 1e-9).ceil() as i64
    }

    pub fn half_cells(&self) -> i64 {
        (self.radius * self.cells_per_unit as f64).round() as i64
    }

    pub fn validate(&self) -> Result<()> {
        if !(1..=2).contains(&self.dim) {
            return Err(Error::Lattice(format!("dimension {} unsupported", self.dim)));
        }
        if self.cells_per_unit == 0 || self.steps_per_unit == 0 {
            return Err(Error::Lattice("cells_per_unit and steps_per_unit must be positive".into()));
        }
        if !(self.speed_cap > 0.0 && self.speed_cap.is_finite()) {
            return Err(Error::Lattice(format!("speed cap {} must be positive", self.speed_cap)));
        }
        if self.speed_cap * self.dt() / self.dx() < 1.0 - 1e-9 {
            return Err(Error::Lattice(
                "empty stencil: A dt / dx must be at least 1 so a step can move".into(),
            ));
        }
        if !(self.radius > 0.0) {
            return Err(Error::Lattice(format!("domain radius {} must be positive", self.radius)));
        }
        if !(1..=5).contains(&self.quadrature_nodes) {
            return Err(Error::Lattice(format!(
                "quadrature nodes {} outside 1..=5",
                self.quadrature_nodes
            )));
        }
        Ok(())
    }

    /// Number of steps in `t`; `t` must be a multiple of `dt`.
    pub fn steps_for(&self, t: f64) -> Result<usize> {
        let s = t * self.steps_per_unit as f64;
        let r = s.round();
        if t < 0.0 || (s - r).abs() > 1e-7 * s.abs().max(1.0) {
            return Err(Error::TimeAlignment { time: t, dt: self.dt() });
        }
        Ok(r as usize)
    }

    /// Lattice index of a point given in unit-cell coordinates.
    pub fn index_of(&self, x: &[f64]) -> Result<[i64; 2]> {
        if x.len() != self.dim {
            return Err(Error::Dimension {
                expected: self.dim,
                found: x.len(),
            });
        }
        let mut idx = [0i64; 2];
        for (k, v) in x.iter().enumerate() {
            let s = v * self.cells_per_unit as f64;
            let r = s.round();
            if (s - r).abs() > 1e-7 * s.abs().max(1.0) {
                return Err(Error::Lattice(format!("{x:?} is not a lattice point")));
            }
            idx[k] = r as i64;
        }
        Ok(idx)
    }

    pub fn point_of(&self, idx: [i64; 2]) -> Vec<f64> {
        (0..self.dim).map(|k| idx[k] as f64 * self.dx()).collect()
    }

    /// Domain radius needed so a cone of slope `A` and height `horizon`
    /// around a source at sup-distance `offset` from the origin stays inside.
    pub fn required_radius(&self, offset: f64, horizon: f64) -> f64 {
        offset + self.speed_cap * horizon + 2.0 * self.stencil_radius() as f64 * self.dx()
    }

    pub fn with_radius(&self, radius: f64) -> Self {
        Self {
            radius,
            ..self.clone()
        }
    }
}

/// Axis-aligned box of lattice indices; the second axis is `[0, 0]` in 1D.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndexBox {
    pub lo: [i64; 2],
    pub hi: [i64; 2],
}

impl IndexBox {
    pub fn point(p: [i64; 2]) -> Self {
        Self { lo: p, hi: p }
    }

    pub fn cube(dim: usize, half: i64) -> Self {
        let h2 = if dim == 2 { half } else { 0 };
        Self {
            lo: [-half, -h2],
            hi: [half, h2],
        }
    }

    pub fn is_empty(&self) -> bool {
        self.lo[0] > self.hi[0] || self.lo[1] > self.hi[1]
    }

    pub fn contains(&self, p: [i64; 2]) -> bool {
        (0..2).all(|k| p[k] >= self.lo[k] && p[k] <= self.hi[k])
    }

    pub fn grow(&self, dim: usize, r: i64) -> Self {
        let r2 = if dim == 2 { r } else { 0 };
        Self {
            lo: [self.lo[0] - r, self.lo[1] - r2],
            hi: [self.hi[0] + r, self.hi[1] + r2],
        }
    }

    pub fn intersect(&self, other: &IndexBox) -> Self {
        Self {
            lo: [self.lo[0].max(other.lo[0]), self.lo[1].max(other.lo[1])],
            hi: [self.hi[0].min(other.hi[0]), self.hi[1].min(other.hi[1])],
        }
    }

    pub fn within(&self, other: &IndexBox) -> bool {
        (0..2).all(|k| self.lo[k] >= other.lo[k] && self.hi[k] <= other.hi[k])
    }
}

/// Gauss-Legendre nodes and weights on `[0, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let (x, w): (&[f64], &[f64]) = match n {
        1 => (&[0.0], &[2.0]),
        2 => (&[-0.577_350_269_189_625_8, 0.577_350_269_189_625_8], &[1.0, 1.0]),
        3 => (
            &[-0.774_596_669_241_483_4, 0.0, 0.774_596_669_241_483_4],
            &[0.555_555_555_555_555_6, 0.888_888_888_888_889, 0.555_555_555_555_555_6],
        ),
        4 => (
            &[
                -0.861_136_311_594_052_6,
                -0.339_981_043_584_856_3,
                0.339_981_043_584_856_3,
                0.861_136_311_594_052_6,
            ],
            &[
                0.347_854_845_137_453_9,
                0.652_145_154_862_546_1,
                0.652_145_154_862_546_1,
                0.347_854_845_137_453_9,
            ],
        ),
        5 => (
            &[
                -0.906_179_845_938_664,
                -0.538_469_310_105_683_1,
                0.0,
                0.538_469_310_105_683_1,
                0.906_179_845_938_664,
            ],
            &[
                0.236_926_885_056_189_1,
                0.478_628_670_499_366_5,
                0.568_888_888_888_888_9,
                0.478_628_670_499_366_5,
                0.236_926_885_056_189_1,
            ],
        ),
        _ => panic!("unsupported Gauss-Legendre order {n}"),
    };
    (
        x.iter().map(|v| 0.5 * (v + 1.0)).collect(),
        w.iter().map(|v| 0.5 * v).collect(),
    )
}
