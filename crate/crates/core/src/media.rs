//! Stationary ergodic Hamiltonian families on `R^n` with `Z^n` acting by
//! unit translations.
//!
//! A [`Medium`] bundles a Hamiltonian `H(x, p, omega)`, its Lagrangian
//! `L(x, q, omega)` (closed form where available, otherwise a numeric
//! convex conjugate), the environment space with its shift action and a
//! [`CoercivityEnvelope`]. All media are immutable after construction and
//! every evaluator is pure.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hash;
use crate::stablenorm::MetricFamily;

const TAU: f64 = 2.0 * PI;

/// Default integer height up to which non-resonance is checked.
pub const DEFAULT_RESONANCE_HEIGHT: u64 = 1_000_000;

/// Brute-force resonance search in `n >= 2` is quadratic in the height.
const MAX_BRUTE_FORCE_HEIGHT: u64 = 2_000;

/// Element of `Z^b`; the torsion factor is always trivial.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GroupElement {
    pub h: Vec<i64>,
}

impl GroupElement {
    pub fn new(h: Vec<i64>) -> Self {
        Self { h }
    }

    pub fn identity(dim: usize) -> Self {
        Self { h: vec![0; dim] }
    }

    pub fn dim(&self) -> usize {
        self.h.len()
    }

    pub fn compose(&self, other: &GroupElement) -> GroupElement {
        assert_eq!(self.dim(), other.dim());
        GroupElement {
            h: self.h.iter().zip(&other.h).map(|(a, b)| a + b).collect(),
        }
    }

    pub fn inverse(&self) -> GroupElement {
        GroupElement {
            h: self.h.iter().map(|a| -a).collect(),
        }
    }

    /// Unit-cell translation `x + h`.
    pub fn act(&self, x: &[f64]) -> Vec<f64> {
        x.iter().zip(&self.h).map(|(x, h)| x + *h as f64).collect()
    }
}

/// A realization `omega` of the environment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvironmentSample {
    pub medium_id: String,
    /// Empty for singleton environments, `[phase]` for phase environments.
    pub params: Vec<f64>,
    pub seed: u64,
}

impl EnvironmentSample {
    pub fn phase(&self) -> Option<f64> {
        self.params.first().copied()
    }

    /// Digest of the sample's content, used in cache keys.
    pub fn digest(&self) -> [u8; 32] {
        let bytes = serde_json::to_vec(self).expect("serializable sample");
        hash::sha256_bytes(&bytes)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MediumKind {
    Periodic,
    QuasiPeriodic,
    Metric,
}

/// Convex kinetic part `K(p)` of a separable Hamiltonian.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum Kinetic {
    /// `K(p) = scale * |p|^2 / 2`.
    Quadratic { scale: f64 },
    /// `K(p) = scale * |p|`; convex but neither strictly convex nor superlinear.
    Linear { scale: f64 },
}

impl Kinetic {
    pub fn eval(&self, p: &[f64]) -> f64 {
        let n2: f64 = p.iter().map(|v| v * v).sum();
        match *self {
            Kinetic::Quadratic { scale } => 0.5 * scale * n2,
            Kinetic::Linear { scale } => scale * n2.sqrt(),
        }
    }

    pub fn is_superlinear(&self) -> bool {
        matches!(*self, Kinetic::Quadratic { scale } if scale > 0.0)
    }
}

/// 1-periodic potential `V(x)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum Potential {
    Zero,
    /// `V(x) = amplitude * sum_i cos(2 pi x_i)`.
    Cosine { amplitude: f64 },
    /// One-dimensional table of equispaced samples on `[0, period)`,
    /// evaluated by trigonometric interpolation.
    Table { samples: Vec<f64>, period: f64 },
}

/// Trigonometric interpolant of equispaced samples on the unit circle.
#[derive(Debug, Clone)]
struct TrigInterpolant {
    mean: f64,
    cos: Vec<f64>,
    sin: Vec<f64>,
}

impl TrigInterpolant {
    fn new(samples: &[f64]) -> Self {
        let n = samples.len();
        let mean = samples.iter().sum::<f64>() / n as f64;
        let kmax = n / 2;
        let mut cos = Vec::with_capacity(kmax);
        let mut sin = Vec::with_capacity(kmax);
        for k in 1..=kmax {
            let (mut a, mut b) = (0.0, 0.0);
            for (j, v) in samples.iter().enumerate() {
                let arg = TAU * (k * j) as f64 / n as f64;
                a += v * arg.cos();
                b += v * arg.sin();
            }
            let nyquist = n.is_multiple_of(2) && k == kmax;
            let w = if nyquist { 1.0 } else { 2.0 } / n as f64;
            cos.push(a * w);
            sin.push(if nyquist { 0.0 } else { b * w });
        }
        Self { mean, cos, sin }
    }

    fn eval(&self, x: f64) -> f64 {
        let mut v = self.mean;
        for (k, (a, b)) in self.cos.iter().zip(&self.sin).enumerate() {
            let arg = TAU * (k + 1) as f64 * x;
            v += a * arg.cos() + b * arg.sin();
        }
        v
    }
}

#[derive(Debug, Clone)]
enum PotentialEval {
    Zero,
    Cosine(f64),
    Table(TrigInterpolant),
}

impl PotentialEval {
    fn eval(&self, x: &[f64]) -> f64 {
        match self {
            PotentialEval::Zero => 0.0,
            PotentialEval::Cosine(a) => a * x.iter().map(|x| (TAU * x).cos()).sum::<f64>(),
            PotentialEval::Table(t) => t.eval(x[0]),
        }
    }
}

/// Input for [`make_periodic_medium`]: `H(x, p) = K(p) + V(x) + shift`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeriodicSpec {
    pub dim: usize,
    pub kinetic: Kinetic,
    pub potential: Potential,
    #[serde(default)]
    pub shift: f64,
}

impl PeriodicSpec {
    pub fn free(dim: usize) -> Self {
        Self {
            dim,
            kinetic: Kinetic::Quadratic { scale: 1.0 },
            potential: Potential::Zero,
            shift: 0.0,
        }
    }

    pub fn cosine(dim: usize, amplitude: f64) -> Self {
        Self {
            dim,
            kinetic: Kinetic::Quadratic { scale: 1.0 },
            potential: Potential::Cosine { amplitude },
            shift: 0.0,
        }
    }
}

/// Base Hamiltonian on `T^{n+1} x R^{n+1}` for the quasi-periodic
/// construction: `(|p|^2 + p_theta^2) / 2 + amplitude * cos(2 pi x_1) cos(2 pi theta)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuasiPeriodicBase {
    pub amplitude: f64,
}

impl QuasiPeriodicBase {
    pub fn eval(&self, x: &[f64], theta: f64, p: &[f64], p_theta: f64) -> f64 {
        let kin: f64 = p.iter().map(|v| v * v).sum::<f64>() + p_theta * p_theta;
        0.5 * kin + self.amplitude * (TAU * x[0]).cos() * (TAU * theta).cos()
    }
}

/// Canonical description of a medium; its content hash is the medium id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum MediumDescriptor {
    Periodic(PeriodicSpec),
    QuasiPeriodic {
        alpha: Vec<f64>,
        base: QuasiPeriodicBase,
    },
    Metric(MetricFamily),
}

/// Radial profile `quad * max(r - dead, 0)^2 + lin * r + constant` on `r >= 0`.
///
/// The family is closed under convex conjugation on `R^+` as long as at most
/// one of `lin`, `dead` is nonzero and `quad > 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Radial {
    pub quad: f64,
    pub lin: f64,
    pub dead: f64,
    pub constant: f64,
}

impl Radial {
    pub fn quadratic(quad: f64, constant: f64) -> Self {
        Self {
            quad,
            lin: 0.0,
            dead: 0.0,
            constant,
        }
    }

    pub fn eval(&self, r: f64) -> f64 {
        let e = (r - self.dead).max(0.0);
        self.quad * e * e + self.lin * r + self.constant
    }

    pub fn is_superlinear(&self) -> bool {
        self.quad > 0.0
    }

    /// `sup_{r >= 0} s r - f(r)` for `s >= 0`.
    pub fn conjugate(&self) -> Option<Radial> {
        if self.quad <= 0.0 || (self.lin != 0.0 && self.dead != 0.0) {
            return None;
        }
        Some(Radial {
            quad: 0.25 / self.quad,
            lin: self.dead,
            dead: self.lin,
            constant: -self.constant,
        })
    }

    /// Smallest `r` with `f(r) - r * slope >= level`, searched up to `cap`.
    pub fn radius_where_exceeds(&self, slope: f64, level: f64, cap: f64) -> Option<f64> {
        let g = |r: f64| self.eval(r) - r * slope - level;
        if g(0.0) >= 0.0 {
            return Some(0.0);
        }
        let mut hi = 1.0;
        while g(hi) < 0.0 {
            hi *= 2.0;
            if hi > cap {
                return None;
            }
        }
        let mut lo = 0.0;
        for _ in 0..100 {
            let mid = 0.5 * (lo + hi);
            if g(mid) >= 0.0 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        Some(hi)
    }
}

/// Radial bounds `theta(|p|) <= H <= Theta(|p|)` and the Lagrangian bounds
/// `theta_L = Theta^*`, `Theta_L = theta^*`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoercivityEnvelope {
    pub theta_lower: Radial,
    pub theta_upper: Radial,
    pub theta_l_lower: Option<Radial>,
    pub theta_l_upper: Option<Radial>,
}

impl CoercivityEnvelope {
    pub fn new(theta_lower: Radial, theta_upper: Radial) -> Self {
        Self {
            theta_lower,
            theta_upper,
            theta_l_lower: theta_upper.conjugate(),
            theta_l_upper: theta_lower.conjugate(),
        }
    }

    /// Lagrangian envelopes, present for superlinear media.
    pub fn lagrangian_bounds(&self) -> Result<(Radial, Radial)> {
        match (self.theta_l_lower, self.theta_l_upper) {
            (Some(lo), Some(hi)) => Ok((lo, hi)),
            _ => Err(Error::InvalidMedium(
                "coercivity envelope is not superlinear".into(),
            )),
        }
    }
}

#[derive(Debug, Clone)]
enum Model {
    Separable {
        kinetic: Kinetic,
        potential: PotentialEval,
        shift: f64,
    },
    QuasiPeriodic {
        alpha: Vec<f64>,
        base: QuasiPeriodicBase,
    },
    Metric(MetricFamily),
}

#[derive(Debug, Clone)]
pub struct Medium {
    descriptor: MediumDescriptor,
    id: String,
    dim: usize,
    kind: MediumKind,
    model: Model,
    envelope: CoercivityEnvelope,
}

/// Periodic medium `H(x, p) = K(p) + V(x)` with a singleton environment.
pub fn make_periodic_medium(spec: PeriodicSpec) -> Result<Medium> {
    if !spec.kinetic.is_superlinear() {
        return Err(Error::InvalidMedium(format!(
            "kinetic term {:?} is not superlinear",
            spec.kinetic
        )));
    }
    Medium::periodic_unchecked(spec)
}

/// Quasi-periodic medium `H_alpha(x, p, omega) = base(x, omega + alpha.x, p, p.alpha)`.
pub fn make_quasiperiodic_medium(base: QuasiPeriodicBase, alpha: Vec<f64>) -> Result<Medium> {
    make_quasiperiodic_medium_with_height(base, alpha, DEFAULT_RESONANCE_HEIGHT)
}

pub fn make_quasiperiodic_medium_with_height(
    base: QuasiPeriodicBase,
    alpha: Vec<f64>,
    height: u64,
) -> Result<Medium> {
    let dim = alpha.len();
    if !(1..=2).contains(&dim) {
        return Err(Error::InvalidMedium(format!(
            "quasi-periodic media need dimension 1 or 2, got {dim}"
        )));
    }
    if alpha.iter().any(|a| !a.is_finite()) {
        return Err(Error::InvalidMedium("alpha must be finite".into()));
    }
    check_non_resonant(&alpha, height)?;
    let a2: f64 = alpha.iter().map(|a| a * a).sum();
    let amp = base.amplitude.abs();
    let envelope = CoercivityEnvelope::new(
        Radial::quadratic(0.5, -amp),
        Radial::quadratic(0.5 * (1.0 + a2), amp),
    );
    let descriptor = MediumDescriptor::QuasiPeriodic {
        alpha: alpha.clone(),
        base,
    };
    Ok(Medium::assemble(
        descriptor,
        dim,
        MediumKind::QuasiPeriodic,
        Model::QuasiPeriodic { alpha, base },
        envelope,
    ))
}

/// Searches integer vectors `nu` with `(alpha, 1) . nu == 0` up to `height`.
pub fn check_non_resonant(alpha: &[f64], height: u64) -> Result<()> {
    match alpha.len() {
        1 => check_non_resonant_1d(alpha[0], height),
        _ => check_non_resonant_brute(alpha, height.min(MAX_BRUTE_FORCE_HEIGHT)),
    }
}

fn resonance_tol(q: f64, alpha_scale: f64) -> f64 {
    8.0 * f64::EPSILON * q * alpha_scale.max(1.0)
}

// Continued-fraction convergents p/q give the minima of |q alpha - p|.
fn check_non_resonant_1d(alpha: f64, height: u64) -> Result<()> {
    let (mut p_prev, mut p) = (1i64, alpha.floor() as i64);
    let (mut q_prev, mut q) = (0i64, 1i64);
    let mut rest = alpha - alpha.floor();
    loop {
        let residual = q as f64 * alpha - p as f64;
        if residual.abs() <= resonance_tol(q as f64, alpha.abs()) {
            return Err(Error::Resonant {
                nu: vec![q, -p],
                residual,
            });
        }
        if rest.abs() < 1e-300 {
            return Ok(());
        }
        let inv = 1.0 / rest;
        let a = inv.floor();
        rest = inv - a;
        let a = a as i64;
        let (pn, qn) = (a * p + p_prev, a * q + q_prev);
        if qn as u64 > height || qn <= 0 {
            return Ok(());
        }
        (p_prev, p, q_prev, q) = (p, pn, q, qn);
    }
}

fn check_non_resonant_brute(alpha: &[f64], height: u64) -> Result<()> {
    let h = height as i64;
    let scale = alpha.iter().fold(0.0f64, |m, a| m.max(a.abs()));
    let mut nu = vec![0i64; alpha.len()];
    fn rec(
        i: usize,
        h: i64,
        alpha: &[f64],
        scale: f64,
        nu: &mut Vec<i64>,
    ) -> Result<()> {
        if i == alpha.len() {
            if nu.iter().all(|v| *v == 0) {
                return Ok(());
            }
            let dot: f64 = alpha.iter().zip(nu.iter()).map(|(a, v)| a * *v as f64).sum();
            let last = -dot.round();
            let residual = dot + last;
            let norm = nu.iter().map(|v| v.unsigned_abs()).max().unwrap_or(0) as f64;
            if residual.abs() <= resonance_tol(norm.max(1.0), scale) {
                let mut full = nu.clone();
                full.push(last as i64);
                return Err(Error::Resonant { nu: full, residual });
            }
            return Ok(());
        }
        for v in -h..=h {
            nu[i] = v;
            rec(i + 1, h, alpha, scale, nu)?;
        }
        Ok(())
    }
    rec(0, h, alpha, scale, &mut nu)
}

/// Draws `omega ~ P` deterministically from `seed`.
pub fn sample_environment(medium: &Medium, seed: u64) -> EnvironmentSample {
    let params = match medium.phase_alpha() {
        None => Vec::new(),
        Some(_) => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            vec![rng.gen::<f64>()]
        }
    };
    EnvironmentSample {
        medium_id: medium.id().to_string(),
        params,
        seed,
    }
}

/// `tau_g omega`.
pub fn shift_env(
    medium: &Medium,
    g: &GroupElement,
    omega: &EnvironmentSample,
) -> Result<EnvironmentSample> {
    medium.check_sample(omega)?;
    if g.dim() != medium.dim() {
        return Err(Error::Dimension {
            expected: medium.dim(),
            found: g.dim(),
        });
    }
    let params = match (medium.phase_alpha(), omega.phase()) {
        (Some(alpha), Some(phase)) => {
            let drift: f64 = alpha.iter().zip(&g.h).map(|(a, h)| a * *h as f64).sum();
            vec![wrap_phase(phase + drift)]
        }
        _ => omega.params.clone(),
    };
    Ok(EnvironmentSample {
        medium_id: omega.medium_id.clone(),
        params,
        seed: omega.seed,
    })
}

pub(crate) fn wrap_phase(v: f64) -> f64 {
    let r = v.rem_euclid(1.0);
    if r >= 1.0 {
        0.0
    } else {
        r
    }
}

/// Distance on the circle `R / Z`.
pub fn circle_distance(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(1.0);
    d.min(1.0 - d)
}

/// `L(x, q, omega)`: closed form when available, numeric conjugate otherwise.
pub fn eval_l(medium: &Medium, x: &[f64], q: &[f64], omega: &EnvironmentSample) -> Result<f64> {
    medium.check_sample(omega)?;
    match medium.closed_form_lagrangian(x, q, omega) {
        Some(v) => Ok(v),
        None => medium.numeric_lagrangian(x, q, omega, DEFAULT_MOMENTUM_STEP),
    }
}

pub const DEFAULT_MOMENTUM_STEP: f64 = 1e-2;

impl Medium {
    /// Builds a separable periodic medium without the superlinearity check;
    /// used to audit deliberately defective Hamiltonians.
    pub fn periodic_unchecked(spec: PeriodicSpec) -> Result<Medium> {
        let dim = spec.dim;
        if !(1..=2).contains(&dim) {
            return Err(Error::InvalidMedium(format!(
                "periodic media need dimension 1 or 2, got {dim}"
            )));
        }
        let (potential, vmin, vmax) = match &spec.potential {
            Potential::Zero => (PotentialEval::Zero, 0.0, 0.0),
            Potential::Cosine { amplitude } => {
                let m = amplitude.abs() * dim as f64;
                (PotentialEval::Cosine(*amplitude), -m, m)
            }
            Potential::Table { samples, period } => {
                if dim != 1 {
                    return Err(Error::InvalidMedium(
                        "tabulated potentials are one-dimensional".into(),
                    ));
                }
                if (period - 1.0).abs() > 1e-12 {
                    return Err(Error::InvalidMedium(format!(
                        "potential table has period {period}, the lattice period is 1"
                    )));
                }
                if samples.len() < 2 || samples.iter().any(|v| !v.is_finite()) {
                    return Err(Error::InvalidMedium(
                        "potential table needs at least two finite samples".into(),
                    ));
                }
                let t = TrigInterpolant::new(samples);
                let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
                for j in 0..8192 {
                    let v = t.eval(j as f64 / 8192.0);
                    lo = lo.min(v);
                    hi = hi.max(v);
                }
                let pad = 1e-3 * (hi - lo).max(1e-9);
                (PotentialEval::Table(t), lo - pad, hi + pad)
            }
        };
        let (vmin, vmax) = (vmin + spec.shift, vmax + spec.shift);
        let (lower, upper) = match spec.kinetic {
            Kinetic::Quadratic { scale } => (
                Radial::quadratic(0.5 * scale, vmin),
                Radial::quadratic(0.5 * scale, vmax),
            ),
            Kinetic::Linear { scale } => (
                Radial {
                    quad: 0.0,
                    lin: scale,
                    dead: 0.0,
                    constant: vmin,
                },
                Radial {
                    quad: 0.0,
                    lin: scale,
                    dead: 0.0,
                    constant: vmax,
                },
            ),
        };
        let model = Model::Separable {
            kinetic: spec.kinetic,
            potential,
            shift: spec.shift,
        };
        Ok(Medium::assemble(
            MediumDescriptor::Periodic(spec),
            dim,
            MediumKind::Periodic,
            model,
            CoercivityEnvelope::new(lower, upper),
        ))
    }

    pub(crate) fn metric(family: MetricFamily) -> Medium {
        let (cmin, cmax) = family.factor_bounds();
        let envelope = CoercivityEnvelope::new(
            Radial::quadratic(0.25 / (cmax * cmax), 0.0),
            Radial::quadratic(0.25 / (cmin * cmin), 0.0),
        );
        let dim = family.dim();
        Medium::assemble(
            MediumDescriptor::Metric(family.clone()),
            dim,
            MediumKind::Metric,
            Model::Metric(family),
            envelope,
        )
    }

    fn assemble(
        descriptor: MediumDescriptor,
        dim: usize,
        kind: MediumKind,
        model: Model,
        envelope: CoercivityEnvelope,
    ) -> Medium {
        let id = hash::content_hash(&descriptor);
        Medium {
            descriptor,
            id,
            dim,
            kind,
            model,
            envelope,
        }
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn kind(&self) -> MediumKind {
        self.kind
    }

    pub fn descriptor(&self) -> &MediumDescriptor {
        &self.descriptor
    }

    pub fn envelope(&self) -> &CoercivityEnvelope {
        &self.envelope
    }

    pub fn metric_family(&self) -> Option<&MetricFamily> {
        match &self.model {
            Model::Metric(f) => Some(f),
            _ => None,
        }
    }

    /// Lagrangian is positively homogeneous of degree 2 in the velocity.
    pub fn is_quadratic_homogeneous(&self) -> bool {
        matches!(self.model, Model::Metric(_))
    }

    /// Frequency vector of a phase environment; `None` for singletons.
    pub fn phase_alpha(&self) -> Option<&[f64]> {
        match &self.model {
            Model::QuasiPeriodic { alpha, .. } => Some(alpha),
            Model::Metric(f) => f.alpha(),
            Model::Separable { .. } => None,
        }
    }

    /// Environment space is a singleton, so `H` is `Z^n`-periodic in `x`.
    pub fn is_lattice_periodic(&self) -> bool {
        self.phase_alpha().is_none()
    }

    pub fn check_sample(&self, omega: &EnvironmentSample) -> Result<()> {
        if omega.medium_id != self.id {
            return Err(Error::MediumMismatch {
                expected: self.id.clone(),
                found: omega.medium_id.clone(),
            });
        }
        Ok(())
    }

    fn phase_of(&self, omega: &EnvironmentSample) -> f64 {
        omega.phase().unwrap_or(0.0)
    }

    pub fn hamiltonian(&self, x: &[f64], p: &[f64], omega: &EnvironmentSample) -> f64 {
        match &self.model {
            Model::Separable {
                kinetic,
                potential,
                shift,
            } => kinetic.eval(p) + potential.eval(x) + shift,
            Model::QuasiPeriodic { alpha, base } => {
                let theta = self.phase_of(omega) + dot(alpha, x);
                base.eval(x, theta, p, dot(alpha, p))
            }
            Model::Metric(f) => {
                let c = f.conformal_factor(x, omega.phase());
                0.25 * norm2(p) / (c * c)
            }
        }
    }

    /// Closed-form Lagrangian, when the model provides one.
    pub fn closed_form_lagrangian(
        &self,
        x: &[f64],
        q: &[f64],
        omega: &EnvironmentSample,
    ) -> Option<f64> {
        match &self.model {
            Model::Separable {
                kinetic: Kinetic::Quadratic { scale },
                potential,
                shift,
            } => Some(0.5 * norm2(q) / scale - potential.eval(x) - shift),
            Model::Separable { .. } => None,
            Model::QuasiPeriodic { alpha, base } => {
                // (I + alpha alpha^T)^{-1} = I - alpha alpha^T / (1 + |alpha|^2)
                let a2 = norm2(alpha);
                let qa = dot(alpha, q);
                let kin = 0.5 * (norm2(q) - qa * qa / (1.0 + a2));
                let theta = self.phase_of(omega) + dot(alpha, x);
                Some(kin - base.amplitude * (TAU * x[0]).cos() * (TAU * theta).cos())
            }
            Model::Metric(f) => {
                let c = f.conformal_factor(x, omega.phase());
                Some(c * c * norm2(q))
            }
        }
    }

    /// `sup_p p.q - H(x, p, omega)` over a uniform momentum grid whose radius
    /// comes from the coercivity envelope.
    pub fn numeric_lagrangian(
        &self,
        x: &[f64],
        q: &[f64],
        omega: &EnvironmentSample,
        step: f64,
    ) -> Result<f64> {
        let qn = norm2(q).sqrt();
        let level = self.envelope.theta_upper.eval(0.0) + 1.0;
        let radius = self
            .envelope
            .theta_lower
            .radius_where_exceeds(qn, level, 1e4)
            .ok_or(Error::ConjugateBoundary { radius: 1e4 })?;
        let half = ((radius * 1.05) / step).ceil() as i64 + 2;
        let n = self.dim;
        let mut best = f64::NEG_INFINITY;
        let mut best_idx = vec![0i64; n];
        let mut idx = vec![-half; n];
        let mut p = vec![0.0; n];
        loop {
            for k in 0..n {
                p[k] = idx[k] as f64 * step;
            }
            let v = dot(&p, q) - self.hamiltonian(x, &p, omega);
            if v > best {
                best = v;
                best_idx.clone_from(&idx);
            }
            let mut k = 0;
            loop {
                if k == n {
                    if best_idx.iter().any(|i| i.abs() == half) {
                        return Err(Error::ConjugateBoundary {
                            radius: half as f64 * step,
                        });
                    }
                    return Ok(best);
                }
                idx[k] += 1;
                if idx[k] <= half {
                    break;
                }
                idx[k] = -half;
                k += 1;
            }
        }
    }

    /// Lagrangian used by the action engine; every medium built through the
    /// public constructors with a superlinear kinetic term has a closed form.
    pub(crate) fn lagrangian_fast(&self, x: &[f64], q: &[f64], omega: &EnvironmentSample) -> f64 {
        match self.closed_form_lagrangian(x, q, omega) {
            Some(v) => v,
            None => self
                .numeric_lagrangian(x, q, omega, DEFAULT_MOMENTUM_STEP)
                .unwrap_or(f64::INFINITY),
        }
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(a, b)| a * b).sum()
}

pub(crate) fn norm2(a: &[f64]) -> f64 {
    a.iter().map(|v| v * v).sum()
}

/// Sampling budget and tolerances for [`audit_assumptions`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AuditConfig {
    #[serde(default = "AuditConfig::default_samples")]
    pub samples: usize,
    #[serde(default = "AuditConfig::default_seed")]
    pub seed: u64,
    #[serde(default = "AuditConfig::default_stationarity_tol")]
    pub stationarity_tol: f64,
    #[serde(default = "AuditConfig::default_convexity_tol")]
    pub convexity_tol: f64,
    #[serde(default = "AuditConfig::default_momentum_radius")]
    pub momentum_radius: f64,
    #[serde(default = "AuditConfig::default_shift_radius")]
    pub shift_radius: i64,
}

impl AuditConfig {
    fn default_samples() -> usize {
        1000
    }
    fn default_seed() -> u64 {
        7
    }
    fn default_stationarity_tol() -> f64 {
        1e-10
    }
    fn default_convexity_tol() -> f64 {
        1e-9
    }
    fn default_momentum_radius() -> f64 {
        4.0
    }
    fn default_shift_radius() -> i64 {
        5
    }
}

impl Default for AuditConfig {
    fn default() -> Self {
        Self {
            samples: Self::default_samples(),
            seed: Self::default_seed(),
            stationarity_tol: Self::default_stationarity_tol(),
            convexity_tol: Self::default_convexity_tol(),
            momentum_radius: Self::default_momentum_radius(),
            shift_radius: Self::default_shift_radius(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssumptionCheck {
    pub name: String,
    pub passed: bool,
    pub value: f64,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub medium_id: String,
    pub samples: usize,
    pub stationarity_defect: f64,
    pub min_convexity_margin: f64,
    pub coercivity_ok: bool,
    pub checks: Vec<AssumptionCheck>,
    pub all_passed: bool,
}

impl AuditReport {
    pub fn check(&self, name: &str) -> Option<&AssumptionCheck> {
        self.checks.iter().find(|c| c.name == name)
    }
}

/// Samples `(x, p, omega, g)` and checks continuity, regularity, strict
/// convexity, the coercivity sandwich and stationarity.
pub fn audit_assumptions(medium: &Medium, cfg: &AuditConfig) -> AuditReport {
    let n = medium.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let r = cfg.momentum_radius;
    let env = medium.envelope();

    let mut continuity: f64 = 0.0;
    let mut regularity: f64 = 0.0;
    let mut margin = f64::INFINITY;
    let mut sandwich_worst = f64::NEG_INFINITY;
    let mut stationarity: f64 = 0.0;

    let coords = |rng: &mut ChaCha8Rng, lo: f64, hi: f64| -> Vec<f64> {
        (0..n).map(|_| rng.gen_range(lo..hi)).collect()
    };

    for _ in 0..cfg.samples.max(1) {
        let x = coords(&mut rng, -10.0, 10.0);
        let p = coords(&mut rng, -r, r);
        let p2 = coords(&mut rng, -r, r);
        let omega = sample_environment(medium, rng.gen());
        let h = medium.hamiltonian(&x, &p, &omega);

        // (H1): finite-difference modulus in the phase.
        if let Some(phase) = omega.phase() {
            let mut nearby = omega.clone();
            nearby.params[0] = wrap_phase(phase + 1e-7);
            let d = (medium.hamiltonian(&x, &p, &nearby) - h).abs() / 1e-7;
            continuity = continuity.max(d);
        }

        // (H2): second differences at two step sizes must agree.
        for k in 0..n {
            let second = |step: f64, in_p: bool| {
                let mut a = if in_p { p.clone() } else { x.clone() };
                let mut b = a.clone();
                a[k] += step;
                b[k] -= step;
                let (ha, hb) = if in_p {
                    (
                        medium.hamiltonian(&x, &a, &omega),
                        medium.hamiltonian(&x, &b, &omega),
                    )
                } else {
                    (
                        medium.hamiltonian(&a, &p, &omega),
                        medium.hamiltonian(&b, &p, &omega),
                    )
                };
                (ha - 2.0 * h + hb) / (step * step)
            };
            for in_p in [false, true] {
                let coarse = second(2e-4, in_p);
                let fine = second(1e-4, in_p);
                let rel = (coarse - fine).abs() / (1.0 + fine.abs() + h.abs());
                if rel.is_finite() {
                    regularity = regularity.max(rel);
                } else {
                    regularity = f64::INFINITY;
                }
            }
        }

        // (H3): normalized midpoint margin.
        let d2 = norm2(&p.iter().zip(&p2).map(|(a, b)| a - b).collect::<Vec<_>>());
        if d2 > 1e-6 {
            let mid: Vec<f64> = p.iter().zip(&p2).map(|(a, b)| 0.5 * (a + b)).collect();
            let gap = 0.5 * (h + medium.hamiltonian(&x, &p2, &omega))
                - medium.hamiltonian(&x, &mid, &omega);
            margin = margin.min(gap / d2);
            // Collinear same-direction pair: exposes Hamiltonians linear along rays.
            let scaled: Vec<f64> = p.iter().map(|v| 0.5 * v).collect();
            let mid_ray: Vec<f64> = p.iter().map(|v| 0.75 * v).collect();
            let pn2 = norm2(&p) * 0.25;
            if pn2 > 1e-6 {
                let gap_ray = 0.5 * (h + medium.hamiltonian(&x, &scaled, &omega))
                    - medium.hamiltonian(&x, &mid_ray, &omega);
                margin = margin.min(gap_ray / pn2);
            }
        }

        // (H4): theta(|p|) <= H <= Theta(|p|).
        let pn = norm2(&p).sqrt();
        let lo = env.theta_lower.eval(pn) - h;
        let hi = h - env.theta_upper.eval(pn);
        sandwich_worst = sandwich_worst.max(lo).max(hi);

        // (H5): H(x + g, p, omega) = H(x, p, tau_g omega).
        let g = GroupElement::new(
            (0..n)
                .map(|_| rng.gen_range(-cfg.shift_radius..=cfg.shift_radius))
                .collect(),
        );
        let shifted = shift_env(medium, &g, &omega).expect("sample of this medium");
        let lhs = medium.hamiltonian(&g.act(&x), &p, &omega);
        let rhs = medium.hamiltonian(&x, &p, &shifted);
        stationarity = stationarity.max((lhs - rhs).abs());
    }

    let superlinear = env.theta_lower.is_superlinear() && env.theta_upper.is_superlinear();
    let coercivity_ok = superlinear && sandwich_worst <= 1e-12;
    let checks = vec![
        AssumptionCheck {
            name: "H1".into(),
            passed: continuity.is_finite(),
            value: continuity,
            detail: "max phase finite-difference slope".into(),
        },
        AssumptionCheck {
            name: "H2".into(),
            passed: regularity <= 1e-2,
            value: regularity,
            detail: "max relative disagreement of second differences".into(),
        },
        AssumptionCheck {
            name: "H3".into(),
            passed: margin > cfg.convexity_tol,
            value: margin,
            detail: "min normalized midpoint convexity margin".into(),
        },
        AssumptionCheck {
            name: "H4".into(),
            passed: coercivity_ok,
            value: sandwich_worst,
            detail: if superlinear {
                "max violation of the coercivity sandwich".into()
            } else {
                "envelope is not superlinear".into()
            },
        },
        AssumptionCheck {
            name: "H5".into(),
            passed: stationarity <= cfg.stationarity_tol,
            value: stationarity,
            detail: "max stationarity defect".into(),
        },
    ];
    let all_passed = checks.iter().all(|c| c.passed);
    AuditReport {
        medium_id: medium.id().to_string(),
        samples: cfg.samples,
        stationarity_defect: stationarity,
        min_convexity_margin: margin,
        coercivity_ok,
        checks,
        all_passed,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn golden() -> f64 {
        (5f64.sqrt() - 1.0) / 2.0
    }

    fn qp() -> Medium {
        make_quasiperiodic_medium(QuasiPeriodicBase { amplitude: 1.0 }, vec![golden()]).unwrap()
    }

    #[test]
    fn free_medium_closed_forms() {
        let m = make_periodic_medium(PeriodicSpec::free(1)).unwrap();
        let w = sample_environment(&m, 3);
        assert_eq!(m.hamiltonian(&[0.3], &[2.0], &w), 2.0);
        assert_eq!(eval_l(&m, &[0.7], &[1.0], &w).unwrap(), 0.5);
    }

    #[test]
    fn cosine_medium_values() {
        let m = make_periodic_medium(PeriodicSpec::cosine(1, 1.0)).unwrap();
        let w = sample_environment(&m, 0);
        assert_eq!(m.hamiltonian(&[0.0], &[0.0], &w), 1.0);
        assert_eq!(eval_l(&m, &[0.0], &[0.0], &w).unwrap(), -1.0);
        let report = audit_assumptions(&m, &AuditConfig::default());
        assert!(report.stationarity_defect < 1e-12);
        assert!(report.all_passed, "{report:?}");
    }

    #[test]
    fn non_superlinear_kinetic_rejected() {
        let spec = PeriodicSpec {
            dim: 1,
            kinetic: Kinetic::Linear { scale: 1.0 },
            potential: Potential::Zero,
            shift: 0.0,
        };
        assert!(matches!(
            make_periodic_medium(spec),
            Err(Error::InvalidMedium(_))
        ));
    }

    #[test]
    fn linear_kinetic_fails_strict_convexity() {
        let spec = PeriodicSpec {
            dim: 1,
            kinetic: Kinetic::Linear { scale: 1.0 },
            potential: Potential::Cosine { amplitude: 1.0 },
            shift: 0.0,
        };
        let m = Medium::periodic_unchecked(spec).unwrap();
        let report = audit_assumptions(&m, &AuditConfig::default());
        let h3 = report.check("H3").unwrap();
        assert!(!h3.passed);
        assert!(h3.value.abs() < 1e-12);
    }

    #[test]
    fn period_mismatch_rejected() {
        let spec = PeriodicSpec {
            dim: 1,
            kinetic: Kinetic::Quadratic { scale: 1.0 },
            potential: Potential::Table {
                samples: vec![1.0, 0.0, -1.0, 0.0],
                period: 0.5,
            },
            shift: 0.0,
        };
        assert!(matches!(
            make_periodic_medium(spec),
            Err(Error::InvalidMedium(_))
        ));
    }

    #[test]
    fn table_potential_interpolates_cosine() {
        let samples: Vec<f64> = (0..8).map(|j| (TAU * j as f64 / 8.0).cos()).collect();
        let spec = PeriodicSpec {
            dim: 1,
            kinetic: Kinetic::Quadratic { scale: 1.0 },
            potential: Potential::Table {
                samples,
                period: 1.0,
            },
            shift: 0.0,
        };
        let m = make_periodic_medium(spec).unwrap();
        let w = sample_environment(&m, 0);
        for x in [0.0, 0.13, 0.5, 0.77] {
            let h = m.hamiltonian(&[x], &[0.0], &w);
            assert!((h - (TAU * x).cos()).abs() < 1e-12);
        }
    }

    #[test]
    fn quasi_periodic_substitution() {
        let m = qp();
        let a = golden();
        let w = EnvironmentSample {
            medium_id: m.id().into(),
            params: vec![0.3],
            seed: 0,
        };
        let (x, p) = (0.41, -1.3);
        let expected =
            0.5 * p * p * (1.0 + a * a) + (TAU * x).cos() * (TAU * (0.3 + a * x)).cos();
        assert!((m.hamiltonian(&[x], &[p], &w) - expected).abs() < 1e-14);
    }

    #[test]
    fn resonant_alpha_rejected() {
        let err = make_quasiperiodic_medium(QuasiPeriodicBase { amplitude: 1.0 }, vec![0.5])
            .unwrap_err();
        match err {
            Error::Resonant { nu, .. } => assert_eq!(nu, vec![2, -1]),
            e => panic!("unexpected {e:?}"),
        }
        assert!(check_non_resonant(&[golden()], DEFAULT_RESONANCE_HEIGHT).is_ok());
        assert!(check_non_resonant(&[3.0 / 7.0], DEFAULT_RESONANCE_HEIGHT).is_err());
        assert!(check_non_resonant(&[golden(), 0.25], 50).is_err());
        assert!(check_non_resonant(&[golden(), 2f64.sqrt() - 1.0], 50).is_ok());
    }

    #[test]
    fn quasi_periodic_stationarity_identity() {
        let m = qp();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut worst: f64 = 0.0;
        for _ in 0..1000 {
            let x = rng.gen_range(-5.0..5.0);
            let p = rng.gen_range(-3.0..3.0);
            let w = sample_environment(&m, rng.gen());
            let shifted = shift_env(&m, &GroupElement::new(vec![1]), &w).unwrap();
            let d = m.hamiltonian(&[x + 1.0], &[p], &w) - m.hamiltonian(&[x], &[p], &shifted);
            worst = worst.max(d.abs());
        }
        assert!(worst <= 1e-12, "{worst}");
        let report = audit_assumptions(&m, &AuditConfig::default());
        assert!(report.all_passed, "{report:?}");
    }

    #[test]
    fn sampling_is_deterministic_and_uniform() {
        let m = qp();
        assert_eq!(sample_environment(&m, 1), sample_environment(&m, 1));
        let mean: f64 = (0..10_000u64)
            .map(|s| sample_environment(&m, s).phase().unwrap())
            .sum::<f64>()
            / 10_000.0;
        assert!((mean - 0.5).abs() < 0.02, "{mean}");

        let p = make_periodic_medium(PeriodicSpec::free(1)).unwrap();
        assert!(sample_environment(&p, 99).params.is_empty());
    }

    #[test]
    fn shift_examples() {
        // 0.6 = 3/5 resonates at height 5, so audit below it.
        let m =
            make_quasiperiodic_medium_with_height(QuasiPeriodicBase { amplitude: 1.0 }, vec![0.6], 4)
                .unwrap();
        let w = EnvironmentSample {
            medium_id: m.id().into(),
            params: vec![0.7],
            seed: 0,
        };
        let s = shift_env(&m, &GroupElement::new(vec![1]), &w).unwrap();
        assert!((s.phase().unwrap() - 0.3).abs() < 1e-12);

        let p = make_periodic_medium(PeriodicSpec::cosine(1, 1.0)).unwrap();
        let wp = sample_environment(&p, 5);
        assert_eq!(shift_env(&p, &GroupElement::new(vec![3]), &wp).unwrap(), wp);

        let other = sample_environment(&p, 0);
        assert!(matches!(
            shift_env(&m, &GroupElement::new(vec![1]), &other),
            Err(Error::MediumMismatch { .. })
        ));
    }

    #[test]
    fn numeric_conjugate_matches_closed_form() {
        let m = make_periodic_medium(PeriodicSpec::cosine(1, 1.0)).unwrap();
        let w = sample_environment(&m, 0);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut worst: f64 = 0.0;
        for _ in 0..1000 {
            let x = [rng.gen_range(-2.0..2.0)];
            let q = [rng.gen_range(-3.0..3.0)];
            let exact = m.closed_form_lagrangian(&x, &q, &w).unwrap();
            let num = m.numeric_lagrangian(&x, &q, &w, 1e-2).unwrap();
            worst = worst.max((exact - num).abs());
        }
        assert!(worst <= 1e-3, "{worst}");
    }

    #[test]
    fn radial_conjugates() {
        let f = Radial::quadratic(0.5, -1.0);
        let g = f.conjugate().unwrap();
        assert_eq!(g, Radial::quadratic(0.5, 1.0));
        let lin = Radial {
            quad: 1.0,
            lin: 2.0,
            dead: 0.0,
            constant: 0.0,
        };
        let c = lin.conjugate().unwrap();
        // sup_r s r - r^2 - 2 r = max(s - 2, 0)^2 / 4
        assert!((c.eval(4.0) - 1.0).abs() < 1e-15);
        assert_eq!(c.eval(1.0), 0.0);
        assert_eq!(c.conjugate().unwrap(), lin);
    }
}
