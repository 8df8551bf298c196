//! Experiment configuration: one strictly parsed TOML document.
//!
//! Unknown keys are rejected, every number is range-checked, and the
//! config hash is the SHA-256 of the canonical JSON form of the parsed
//! document (so formatting and key order do not matter).

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::action::Lattice;
use crate::effective::{DirectionGrid, EstimateOptions};
use crate::error::{Error, Result};
use crate::hash;
use crate::media::{
    make_periodic_medium, make_quasiperiodic_medium_with_height, AuditConfig, Kinetic, Medium, PeriodicSpec,
    Potential, QuasiPeriodicBase, DEFAULT_RESONANCE_HEIGHT,
};
use crate::solver::{DatumShape, InitialDatum, KSet};
use crate::stablenorm::{metric_medium, GraphSpec, MetricFamily};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MediumKindSpec {
    Periodic,
    QuasiPeriodic,
    Metric,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PotentialPreset {
    Zero,
    Cosine,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KineticPreset {
    Quadratic,
    Linear,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MetricPreset {
    Flat,
    Conformal,
    QuasiPeriodicConformal,
}

/// `[medium]`: a preset name plus parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MediumBlock {
    pub kind: MediumKindSpec,
    pub dim: usize,
    #[serde(default)]
    pub potential: Option<PotentialPreset>,
    #[serde(default)]
    pub kinetic: Option<KineticPreset>,
    #[serde(default)]
    pub kinetic_scale: Option<f64>,
    #[serde(default)]
    pub amplitude: Option<f64>,
    #[serde(default)]
    pub alpha: Option<Vec<f64>>,
    #[serde(default)]
    pub resonance_height: Option<u64>,
    #[serde(default)]
    pub family: Option<MetricPreset>,
}

impl MediumBlock {
    fn reject(&self, field: &str, present: bool) -> Result<()> {
        if present {
            return Err(Error::Config(format!(
                "medium.{field} does not apply to kind {:?}",
                self.kind
            )));
        }
        Ok(())
    }

    /// Metric family named by the block (metric kind only).
    pub fn metric_family(&self) -> Result<MetricFamily> {
        let amplitude = self.amplitude.unwrap_or(0.0);
        match self.family {
            Some(MetricPreset::Flat) => Ok(MetricFamily::Flat { dim: self.dim }),
            Some(MetricPreset::Conformal) => Ok(MetricFamily::Conformal {
                dim: self.dim,
                amplitude,
            }),
            Some(MetricPreset::QuasiPeriodicConformal) => Ok(MetricFamily::QuasiPeriodicConformal {
                alpha: self
                    .alpha
                    .clone()
                    .ok_or_else(|| Error::Config("medium.alpha is required for quasi-periodic-conformal".into()))?,
                amplitude,
            }),
            None => Err(Error::Config("medium.family is required for kind metric".into())),
        }
    }

    /// Structural validation (config errors); scientific rejection such as
    /// resonance happens in [`Self::build`].
    pub fn validate(&self) -> Result<()> {
        if !(1..=2).contains(&self.dim) {
            return Err(Error::Config(format!("medium.dim must be 1 or 2, got {}", self.dim)));
        }
        if let Some(a) = self.amplitude {
            if !a.is_finite() {
                return Err(Error::Config("medium.amplitude must be finite".into()));
            }
        }
        if let Some(s) = self.kinetic_scale {
            if !(s.is_finite() && s > 0.0) {
                return Err(Error::Config("medium.kinetic_scale must be positive".into()));
            }
        }
        match self.kind {
            MediumKindSpec::Periodic => {
                self.reject("alpha", self.alpha.is_some())?;
                self.reject("family", self.family.is_some())?;
                self.reject("resonance_height", self.resonance_height.is_some())?;
            }
            MediumKindSpec::QuasiPeriodic => {
                self.reject("potential", self.potential.is_some())?;
                self.reject("kinetic", self.kinetic.is_some())?;
                self.reject("kinetic_scale", self.kinetic_scale.is_some())?;
                self.reject("family", self.family.is_some())?;
                let alpha = self
                    .alpha
                    .as_ref()
                    .ok_or_else(|| Error::Config("medium.alpha is required for kind quasi-periodic".into()))?;
                if alpha.len() != self.dim {
                    return Err(Error::Config(format!(
                        "medium.alpha has {} entries, dim is {}",
                        alpha.len(),
                        self.dim
                    )));
                }
            }
            MediumKindSpec::Metric => {
                self.reject("potential", self.potential.is_some())?;
                self.reject("kinetic", self.kinetic.is_some())?;
                self.reject("kinetic_scale", self.kinetic_scale.is_some())?;
                let fam = self.metric_family()?;
                if fam.dim() != self.dim {
                    return Err(Error::Config("medium.alpha length must equal dim".into()));
                }
            }
        }
        Ok(())
    }

    pub fn build(&self) -> Result<Medium> {
        match self.kind {
            MediumKindSpec::Periodic => {
                let potential = match self.potential.unwrap_or(PotentialPreset::Zero) {
                    PotentialPreset::Zero => Potential::Zero,
                    PotentialPreset::Cosine => Potential::Cosine {
                        amplitude: self.amplitude.unwrap_or(1.0),
                    },
                };
                let scale = self.kinetic_scale.unwrap_or(1.0);
                let kinetic = match self.kinetic.unwrap_or(KineticPreset::Quadratic) {
                    KineticPreset::Quadratic => Kinetic::Quadratic { scale },
                    KineticPreset::Linear => Kinetic::Linear { scale },
                };
                let spec = PeriodicSpec {
                    dim: self.dim,
                    kinetic,
                    potential,
                    shift: 0.0,
                };
                match kinetic {
                    // Admitted so the audit can report which assumption fails.
                    Kinetic::Linear { .. } => Medium::periodic_unchecked(spec),
                    Kinetic::Quadratic { .. } => make_periodic_medium(spec),
                }
            }
            MediumKindSpec::QuasiPeriodic => make_quasiperiodic_medium_with_height(
                QuasiPeriodicBase {
                    amplitude: self.amplitude.unwrap_or(1.0),
                },
                self.alpha.clone().unwrap_or_default(),
                self.resonance_height.unwrap_or(DEFAULT_RESONANCE_HEIGHT),
            ),
            MediumKindSpec::Metric => metric_medium(self.metric_family()?),
        }
    }
}

/// `[lattice]`: the dimension comes from the medium.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LatticeBlock {
    pub cells_per_unit: u32,
    pub steps_per_unit: u32,
    pub speed_cap: f64,
    pub radius: f64,
    #[serde(default = "default_nodes")]
    pub quadrature_nodes: usize,
}

fn default_nodes() -> usize {
    4
}

impl LatticeBlock {
    pub fn lattice(&self, dim: usize) -> Lattice {
        Lattice {
            dim,
            cells_per_unit: self.cells_per_unit,
            steps_per_unit: self.steps_per_unit,
            speed_cap: self.speed_cap,
            radius: self.radius,
            quadrature_nodes: self.quadrature_nodes,
        }
    }
}

/// `[schedule]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleBlock {
    pub horizons: Vec<u32>,
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub epsilons: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GridShape {
    Square,
    Disk,
}

/// `[grids]`: direction grid for `L_bar`, momentum grid for `H_bar`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridsBlock {
    #[serde(default = "default_shape")]
    pub shape: GridShape,
    pub direction_extent: f64,
    pub direction_step: f64,
    pub momentum_extent: f64,
    pub momentum_step: f64,
    /// Base points of the subadditive estimates (unit-cell coordinates).
    #[serde(default)]
    pub bases: Vec<Vec<f64>>,
}

fn default_shape() -> GridShape {
    GridShape::Square
}

impl GridsBlock {
    fn grid(&self, dim: usize, extent: f64, step: f64) -> Result<DirectionGrid> {
        match self.shape {
            GridShape::Square => DirectionGrid::square(dim, extent, step),
            GridShape::Disk => DirectionGrid::disk(dim, extent, step),
        }
    }

    pub fn directions(&self, dim: usize) -> Result<DirectionGrid> {
        self.grid(dim, self.direction_extent, self.direction_step)
    }

    pub fn momenta(&self, dim: usize) -> Result<DirectionGrid> {
        self.grid(dim, self.momentum_extent, self.momentum_step)
    }
}

/// `[tolerances]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TolerancesBlock {
    /// Unconverged-direction flag: series spread over `|value|`.
    #[serde(default = "tol_spread")]
    pub spread_fraction: f64,
    /// Allowed sandwich violation of the effective table.
    #[serde(default = "tol_envelope")]
    pub envelope_slack: f64,
    /// Required `err(eps_last) / err(eps_first)`.
    #[serde(default = "tol_ratio")]
    pub convergence_ratio: f64,
    /// Allowed relative spread of Lipschitz constants across `eps`.
    #[serde(default = "tol_regularity")]
    pub regularity: f64,
    /// Norm-audit, method-agreement and homogeneity tolerance.
    #[serde(default = "tol_norm")]
    pub norm: f64,
}

fn tol_spread() -> f64 {
    0.1
}
fn tol_envelope() -> f64 {
    0.05
}
fn tol_ratio() -> f64 {
    0.5
}
fn tol_regularity() -> f64 {
    0.2
}
fn tol_norm() -> f64 {
    0.05
}

impl Default for TolerancesBlock {
    fn default() -> Self {
        Self {
            spread_fraction: tol_spread(),
            envelope_slack: tol_envelope(),
            convergence_ratio: tol_ratio(),
            regularity: tol_regularity(),
            norm: tol_norm(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DatumPreset {
    Zero,
    Constant,
    Norm,
    ClampedNorm,
}

/// One initial datum in flat form: `{ type = "clamped-norm", cap = 1.0 }`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatumBlock {
    #[serde(rename = "type")]
    pub kind: DatumPreset,
    #[serde(default)]
    pub value: Option<f64>,
    #[serde(default)]
    pub cap: Option<f64>,
    #[serde(default)]
    pub oscillation: f64,
}

impl DatumBlock {
    pub fn datum(&self) -> Result<InitialDatum> {
        let shape = match self.kind {
            DatumPreset::Zero => DatumShape::Zero,
            DatumPreset::Norm => DatumShape::Norm,
            DatumPreset::Constant => DatumShape::Constant {
                value: self
                    .value
                    .ok_or_else(|| Error::Config("converge.data: constant needs `value`".into()))?,
            },
            DatumPreset::ClampedNorm => {
                let cap = self
                    .cap
                    .ok_or_else(|| Error::Config("converge.data: clamped-norm needs `cap`".into()))?;
                if !(cap > 0.0) {
                    return Err(Error::Config("converge.data: cap must be positive".into()));
                }
                DatumShape::ClampedNorm { cap }
            }
        };
        Ok(InitialDatum {
            shape,
            oscillation: self.oscillation,
        })
    }

    pub fn label(&self) -> String {
        match self.kind {
            DatumPreset::Zero => "zero".into(),
            DatumPreset::Constant => format!("constant-{}", self.value.unwrap_or(0.0)),
            DatumPreset::Norm => "norm".into(),
            DatumPreset::ClampedNorm => format!("clamped-norm-{}", self.cap.unwrap_or(0.0)),
        }
    }
}

/// `[converge]`: rescaled-vs-homogenized experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConvergeBlock {
    pub data: Vec<DatumBlock>,
    pub k_lo: Vec<f64>,
    pub k_hi: Vec<f64>,
    pub k_step: f64,
    pub t0: f64,
    pub t1: f64,
    pub t_step: f64,
    /// Base points `x` of the `eps Phi_eps` evaluation.
    #[serde(default)]
    pub bases: Vec<Vec<f64>>,
    /// Spacing of the Hopf-Lax `h'` search grid.
    #[serde(default = "default_search_step")]
    pub search_step: f64,
    /// Cone slope for the rescaled solves (defaults to the lattice's).
    #[serde(default)]
    pub solve_speed_cap: Option<f64>,
    /// Seeds of the rescaled solves (default: the schedule seeds).
    #[serde(default)]
    pub seeds: Option<Vec<u64>>,
}

fn default_search_step() -> f64 {
    1.0 / 64.0
}

impl ConvergeBlock {
    pub fn k_set(&self) -> KSet {
        KSet {
            h_lo: self.k_lo.clone(),
            h_hi: self.k_hi.clone(),
            h_step: self.k_step,
            t0: self.t0,
            t1: self.t1,
            t_step: self.t_step,
        }
    }
}

/// `[stable_norm]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StableNormBlock {
    #[serde(default)]
    pub graph: Option<GraphSpec>,
    /// Schedule `n_j` of the shortest-path oracle.
    pub periodic_schedule: Vec<u32>,
    /// Scalings audited for homogeneity.
    #[serde(default = "default_lambdas")]
    pub lambdas: Vec<f64>,
}

fn default_lambdas() -> Vec<f64> {
    vec![-1.0, 0.5, 2.0]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub medium: MediumBlock,
    #[serde(default)]
    pub audit: Option<AuditConfig>,
    #[serde(default)]
    pub lattice: Option<LatticeBlock>,
    #[serde(default)]
    pub schedule: Option<ScheduleBlock>,
    #[serde(default)]
    pub grids: Option<GridsBlock>,
    #[serde(default)]
    pub tolerances: TolerancesBlock,
    #[serde(default)]
    pub converge: Option<ConvergeBlock>,
    #[serde(default)]
    pub stable_norm: Option<StableNormBlock>,
    #[serde(default)]
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub cache: Option<PathBuf>,
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::Config(format!("{name} must be positive and finite, got {v}")))
    }
}

fn in_unit(name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 && v <= 1.0 {
        Ok(())
    } else {
        Err(Error::Config(format!("{name} must lie in (0, 1], got {v}")))
    }
}

fn dims(name: &str, pts: &[Vec<f64>], dim: usize) -> Result<()> {
    match pts.iter().find(|p| p.len() != dim) {
        Some(p) => Err(Error::Config(format!("{name}: point {p:?} must have {dim} components"))),
        None => Ok(()),
    }
}

fn missing(block: &str) -> Error {
    Error::Config(format!("missing [{block}] block"))
}

impl ExperimentConfig {
    /// Strict parse; errors name the offending key and its line/column.
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn dim(&self) -> usize {
        self.medium.dim
    }

    pub fn validate(&self) -> Result<()> {
        self.medium.validate()?;
        let dim = self.dim();
        if let Some(l) = &self.lattice {
            l.lattice(dim).validate().map_err(|e| Error::Config(format!("lattice: {e}")))?;
        }
        if let Some(s) = &self.schedule {
            if s.horizons.is_empty() || s.horizons[0] == 0 || s.horizons.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::Config(
                    "schedule.horizons must be positive and strictly increasing".into(),
                ));
            }
            if s.seeds.is_empty() {
                return Err(Error::Config("schedule.seeds must not be empty".into()));
            }
            if let Some(eps) = &s.epsilons {
                if eps.is_empty() {
                    return Err(Error::Config("schedule.epsilons must not be empty".into()));
                }
                for e in eps {
                    in_unit("schedule.epsilons", *e)?;
                }
            }
        }
        if let Some(g) = &self.grids {
            positive("grids.direction_extent", g.direction_extent)?;
            positive("grids.direction_step", g.direction_step)?;
            positive("grids.momentum_extent", g.momentum_extent)?;
            positive("grids.momentum_step", g.momentum_step)?;
            dims("grids.bases", &g.bases, dim)?;
            g.directions(dim).map_err(|e| Error::Config(format!("grids: {e}")))?;
            g.momenta(dim).map_err(|e| Error::Config(format!("grids: {e}")))?;
        }
        let t = &self.tolerances;
        in_unit("tolerances.spread_fraction", t.spread_fraction)?;
        positive("tolerances.envelope_slack", t.envelope_slack)?;
        in_unit("tolerances.convergence_ratio", t.convergence_ratio)?;
        in_unit("tolerances.regularity", t.regularity)?;
        in_unit("tolerances.norm", t.norm)?;
        if let Some(c) = &self.converge {
            if c.data.is_empty() {
                return Err(Error::Config("converge.data must not be empty".into()));
            }
            for d in &c.data {
                d.datum()?;
            }
            if c.k_lo.len() != dim || c.k_hi.len() != dim {
                return Err(Error::Config(format!("converge.k_lo and converge.k_hi need {dim} components")));
            }
            if c.k_lo.iter().zip(&c.k_hi).any(|(a, b)| a > b) {
                return Err(Error::Config("converge.k_lo must not exceed converge.k_hi".into()));
            }
            positive("converge.k_step", c.k_step)?;
            positive("converge.t0", c.t0)?;
            positive("converge.t_step", c.t_step)?;
            positive("converge.search_step", c.search_step)?;
            if c.t1 < c.t0 {
                return Err(Error::Config("converge.t1 must be at least converge.t0".into()));
            }
            if let Some(a) = c.solve_speed_cap {
                positive("converge.solve_speed_cap", a)?;
            }
            dims("converge.bases", &c.bases, dim)?;
        }
        if let Some(s) = &self.stable_norm {
            if s.periodic_schedule.is_empty() || s.periodic_schedule.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::Config(
                    "stable_norm.periodic_schedule must be nonempty and increasing".into(),
                ));
            }
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON of the parsed document.
    pub fn hash(&self) -> String {
        hash::content_hash(self)
    }

    pub fn lattice(&self) -> Result<Lattice> {
        Ok(self.lattice.as_ref().ok_or_else(|| missing("lattice"))?.lattice(self.dim()))
    }

    pub fn schedule(&self) -> Result<&ScheduleBlock> {
        self.schedule.as_ref().ok_or_else(|| missing("schedule"))
    }

    pub fn grids(&self) -> Result<&GridsBlock> {
        self.grids.as_ref().ok_or_else(|| missing("grids"))
    }

    pub fn converge(&self) -> Result<&ConvergeBlock> {
        self.converge.as_ref().ok_or_else(|| missing("converge"))
    }

    pub fn epsilons(&self) -> Result<&[f64]> {
        self.schedule()?
            .epsilons
            .as_deref()
            .ok_or_else(|| Error::Config("missing field `schedule.epsilons`".into()))
    }

    pub fn estimate_options(&self) -> Result<EstimateOptions> {
        Ok(EstimateOptions {
            bases: self.grids()?.bases.clone(),
            spread_fraction: self.tolerances.spread_fraction,
        })
    }
}
