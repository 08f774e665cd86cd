//! Uncertain parameters and the box / ellipsoid sets they range over.
//!
//! Every set lives in normalized coordinates `z`, one per parameter, with
//! `u_k = nominal_k + halfwidth_k · z_k` and `halfwidth_k = δ_k · |nominal_k|`
//! unless an absolute halfwidth is given. The box is `|z_k| ≤ 1`, the
//! ellipsoid is `‖z‖₂ ≤ Ω`.
//!
//! Radius and violation probability are linked by `ε = exp(−Ω²/2)`. Some
//! printings of this bound read `exp(−Ω/2)`; that form disagrees with the
//! usual calibration point (Ω = 3.7 ↔ roughly 0.1 %), so the squared radius
//! is used here.

use std::collections::{BTreeMap, HashMap};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expr::{Binding, Symbol};

/// Hard physical limits of a parameter (e.g. an efficiency lies in (0, 1]).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhysicalBounds {
    pub lower: f64,
    pub upper: f64,
    pub lower_open: bool,
    pub upper_open: bool,
}

impl PhysicalBounds {
    pub const UNBOUNDED: Self = Self {
        lower: f64::NEG_INFINITY,
        upper: f64::INFINITY,
        lower_open: true,
        upper_open: true,
    };

    /// (0, ∞)
    pub const POSITIVE: Self = Self {
        lower: 0.0,
        upper: f64::INFINITY,
        lower_open: true,
        upper_open: true,
    };

    /// (0, 1]
    pub const EFFICIENCY: Self = Self {
        lower: 0.0,
        upper: 1.0,
        lower_open: true,
        upper_open: false,
    };

    /// [0, 1)
    pub const RATE: Self = Self {
        lower: 0.0,
        upper: 1.0,
        lower_open: false,
        upper_open: true,
    };

    pub fn admits(&self, v: f64) -> bool {
        let lo = if self.lower_open { v > self.lower } else { v >= self.lower };
        let hi = if self.upper_open { v < self.upper } else { v <= self.upper };
        v.is_finite() && lo && hi
    }

    fn describe(&self) -> String {
        format!(
            "{}{}, {}{}",
            if self.lower_open { "(" } else { "[" },
            self.lower,
            self.upper,
            if self.upper_open { ")" } else { "]" }
        )
    }
}

/// A parameter a model declares uncertain: its symbol, nominal value and
/// hard limits. Sets attach a level to it.
#[derive(Debug, Clone)]
pub struct UncertainParam {
    pub symbol: Symbol,
    pub nominal: f64,
    pub bounds: PhysicalBounds,
}

impl UncertainParam {
    pub fn new(symbol: Symbol, nominal: f64, bounds: PhysicalBounds) -> Self {
        Self { symbol, nominal, bounds }
    }
}

#[derive(Debug, Clone)]
pub struct UncertainSpec {
    pub param: UncertainParam,
    /// Relative uncertainty level δ ≥ 0.
    pub level: f64,
    /// Overrides `level · |nominal|` when present.
    pub abs_halfwidth: Option<f64>,
}

impl UncertainSpec {
    pub fn new(param: UncertainParam, level: f64) -> Result<Self> {
        let spec = Self {
            param,
            level,
            abs_halfwidth: None,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn with_abs_halfwidth(param: UncertainParam, halfwidth: f64) -> Result<Self> {
        let spec = Self {
            param,
            level: 0.0,
            abs_halfwidth: Some(halfwidth),
        };
        spec.validate()?;
        Ok(spec)
    }

    fn validate(&self) -> Result<()> {
        let name = self.param.symbol.name();
        if !self.param.nominal.is_finite() {
            return Err(Error::InvalidSpec(format!("`{name}` has a non-finite nominal value")));
        }
        if !(self.level >= 0.0 && self.level.is_finite()) {
            return Err(Error::InvalidSpec(format!("`{name}` has invalid level {}", self.level)));
        }
        match self.abs_halfwidth {
            Some(h) if !(h >= 0.0 && h.is_finite()) => {
                Err(Error::InvalidSpec(format!("`{name}` has invalid halfwidth {h}")))
            }
            None if self.param.nominal == 0.0 && self.level > 0.0 => Err(Error::InvalidSpec(format!(
                "`{name}` has nominal 0 and needs an absolute halfwidth"
            ))),
            _ => Ok(()),
        }
    }

    pub fn name(&self) -> &str {
        self.param.symbol.name()
    }

    pub fn nominal(&self) -> f64 {
        self.param.nominal
    }

    pub fn halfwidth(&self) -> f64 {
        self.abs_halfwidth.unwrap_or(self.level * self.param.nominal.abs())
    }

    /// Both ends of `nominal ± radius · halfwidth` must be physically admissible.
    fn check_realizable(&self, radius: f64) -> Result<()> {
        let h = radius * self.halfwidth();
        for v in [self.nominal() - h, self.nominal() + h] {
            if !self.param.bounds.admits(v) {
                return Err(Error::InvalidSpec(format!(
                    "`{}` reaches {v}, outside its physical range {}",
                    self.name(),
                    self.param.bounds.describe()
                )));
            }
        }
        Ok(())
    }
}

/// Cartesian product of intervals `nominal ± halfwidth`.
#[derive(Debug, Clone)]
pub struct BoxSet {
    specs: Vec<UncertainSpec>,
}

impl BoxSet {
    pub fn new(specs: Vec<UncertainSpec>) -> Result<Self> {
        check_unique(&specs)?;
        for s in &specs {
            s.check_realizable(1.0)?;
        }
        Ok(Self { specs })
    }
}

/// Ball `‖z‖₂ ≤ Ω` in normalized coordinates. Not intersected with the
/// physical bounds: construction rejects radii that would leave them.
#[derive(Debug, Clone)]
pub struct EllipsoidSet {
    specs: Vec<UncertainSpec>,
    omega: f64,
}

impl EllipsoidSet {
    pub fn new(specs: Vec<UncertainSpec>, omega: f64) -> Result<Self> {
        if !(omega >= 0.0 && omega.is_finite()) {
            return Err(Error::InvalidSpec(format!("ellipsoid radius must be >= 0, got {omega}")));
        }
        check_unique(&specs)?;
        for s in &specs {
            s.check_realizable(omega)?;
        }
        Ok(Self { specs, omega })
    }
}

fn check_unique(specs: &[UncertainSpec]) -> Result<()> {
    let mut seen = std::collections::HashSet::new();
    for s in specs {
        if !seen.insert(s.name()) {
            return Err(Error::InvalidSpec(format!("`{}` specified twice", s.name())));
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SetKind {
    Box,
    Ellipsoid,
}

impl std::str::FromStr for SetKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "box" => Ok(SetKind::Box),
            "ellipsoid" => Ok(SetKind::Ellipsoid),
            other => Err(Error::InvalidArgument(format!(
                "unknown set kind `{other}` (allowed: box, ellipsoid)"
            ))),
        }
    }
}

#[derive(Debug, Clone)]
pub enum UncertaintySet {
    Box(BoxSet),
    Ellipsoid(EllipsoidSet),
}

impl UncertaintySet {
    pub fn specs(&self) -> &[UncertainSpec] {
        match self {
            UncertaintySet::Box(b) => &b.specs,
            UncertaintySet::Ellipsoid(e) => &e.specs,
        }
    }

    pub fn kind(&self) -> SetKind {
        match self {
            UncertaintySet::Box(_) => SetKind::Box,
            UncertaintySet::Ellipsoid(_) => SetKind::Ellipsoid,
        }
    }

    /// Ω for the ellipsoid; the box is reported with radius 1 per axis.
    pub fn radius(&self) -> f64 {
        match self {
            UncertaintySet::Box(_) => 1.0,
            UncertaintySet::Ellipsoid(e) => e.omega,
        }
    }

    pub fn dim(&self) -> usize {
        self.specs().len()
    }

    pub fn index_of(&self) -> HashMap<&str, usize> {
        self.specs().iter().enumerate().map(|(i, s)| (s.name(), i)).collect()
    }

    pub fn spec(&self, name: &str) -> Option<&UncertainSpec> {
        self.specs().iter().find(|s| s.name() == name)
    }

    /// True when every halfwidth (or the radius) is zero.
    pub fn is_singleton(&self) -> bool {
        self.radius() == 0.0 || self.specs().iter().all(|s| s.halfwidth() == 0.0)
    }

    pub fn nominal(&self) -> Binding {
        self.specs().iter().map(|s| (s.name(), s.nominal())).collect()
    }

    pub fn to_physical(&self, z: &[f64]) -> Result<Binding> {
        if z.len() != self.dim() {
            return Err(Error::Dimension {
                expected: self.dim(),
                got: z.len(),
            });
        }
        Ok(self
            .specs()
            .iter()
            .zip(z)
            .map(|(s, &zk)| (s.name(), s.nominal() + s.halfwidth() * zk))
            .collect())
    }

    /// Normalized coordinates of `u`. Axes with zero halfwidth map to 0 at
    /// the nominal value and to ±∞ elsewhere.
    pub fn to_normalized(&self, u: &Binding) -> Result<Vec<f64>> {
        self.specs()
            .iter()
            .map(|s| {
                let v = u
                    .get(s.name())
                    .ok_or_else(|| Error::MissingBinding(s.name().to_string()))?;
                let h = s.halfwidth();
                let d = v - s.nominal();
                Ok(if h > 0.0 {
                    d / h
                } else if d == 0.0 {
                    0.0
                } else {
                    d.signum() * f64::INFINITY
                })
            })
            .collect()
    }

    pub fn contains(&self, u: &Binding) -> Result<bool> {
        let z = self.to_normalized(u)?;
        Ok(self.contains_normalized(&z))
    }

    pub fn contains_normalized(&self, z: &[f64]) -> bool {
        match self {
            UncertaintySet::Box(_) => z.iter().all(|v| v.abs() <= 1.0 + 1e-12),
            UncertaintySet::Ellipsoid(e) => norm2(z) <= e.omega + 1e-12,
        }
    }

    /// A uniform draw in normalized coordinates.
    pub fn sample_normalized<R: Rng + ?Sized>(&self, rng: &mut R, surface: bool) -> Vec<f64> {
        let m = self.dim();
        match self {
            UncertaintySet::Box(_) => (0..m)
                .map(|_| {
                    if surface {
                        if rng.random::<bool>() {
                            1.0
                        } else {
                            -1.0
                        }
                    } else {
                        rng.random_range(-1.0..=1.0)
                    }
                })
                .collect(),
            UncertaintySet::Ellipsoid(e) => {
                if m == 0 {
                    return vec![];
                }
                let mut dir: Vec<f64> = (0..m).map(|_| rng.sample(StandardNormal)).collect();
                let n = norm2(&dir);
                if n == 0.0 {
                    dir[0] = 1.0;
                } else {
                    dir.iter_mut().for_each(|d| *d /= n);
                }
                let radius = if surface {
                    e.omega
                } else {
                    e.omega * rng.random::<f64>().powf(1.0 / m as f64)
                };
                // keep the draw inside the ball despite rounding
                let scale = radius.min(e.omega * (1.0 - 1e-15));
                dir.iter().map(|d| d * scale).collect()
            }
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Binding {
        let z = self.sample_normalized(rng, false);
        self.to_physical(&z).expect("sample has set dimension")
    }

    /// Single draw from a fresh generator seeded with `seed`.
    pub fn sample_seeded(&self, seed: u64) -> Binding {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        self.sample(&mut rng)
    }
}

pub(crate) fn norm2(z: &[f64]) -> f64 {
    z.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Chance of violating a constraint protected by an ellipsoid of radius Ω.
pub fn chance_epsilon(omega: f64) -> Result<f64> {
    if !(omega >= 0.0) || omega.is_nan() {
        return Err(Error::InvalidArgument(format!("radius must be >= 0, got {omega}")));
    }
    Ok((-omega * omega / 2.0).exp())
}

/// Inverse of [`chance_epsilon`].
pub fn omega_for_epsilon(epsilon: f64) -> Result<f64> {
    if !(epsilon > 0.0 && epsilon <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "violation probability must lie in (0, 1], got {epsilon}"
        )));
    }
    Ok((2.0 * (1.0 / epsilon).ln()).sqrt())
}

/// Set description as it appears in config files and on the command line:
/// a kind, a global level, per-symbol overrides and a radius.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SetConfig {
    pub kind: SetKind,
    pub level: f64,
    /// Keyed by symbol name (`E[3]`) or family name (`E`); symbol wins.
    pub per_symbol: BTreeMap<String, f64>,
    pub omega: f64,
}

impl Default for SetConfig {
    fn default() -> Self {
        Self {
            kind: SetKind::Box,
            level: 0.0,
            per_symbol: BTreeMap::new(),
            omega: 0.0,
        }
    }
}

impl SetConfig {
    pub fn boxed(level: f64) -> Self {
        Self {
            kind: SetKind::Box,
            level,
            ..Self::default()
        }
    }

    pub fn ellipsoid(level: f64, omega: f64) -> Self {
        Self {
            kind: SetKind::Ellipsoid,
            level,
            omega,
            ..Self::default()
        }
    }

    /// Only parameters of `family` vary, at `level`; everything else stays nominal.
    pub fn single_family(kind: SetKind, family: &str, level: f64, omega: f64) -> Self {
        let mut per_symbol = BTreeMap::new();
        per_symbol.insert(family.to_string(), level);
        Self {
            kind,
            level: 0.0,
            per_symbol,
            omega,
        }
    }

    pub fn level_for(&self, symbol: &Symbol) -> f64 {
        self.per_symbol
            .get(symbol.name())
            .or_else(|| self.per_symbol.get(symbol.group()))
            .copied()
            .unwrap_or(self.level)
    }

    pub fn build(&self, params: &[UncertainParam]) -> Result<UncertaintySet> {
        for key in self.per_symbol.keys() {
            if !params.iter().any(|p| p.symbol.name() == key || p.symbol.group() == key) {
                return Err(Error::InvalidSpec(format!("no uncertain parameter or family named `{key}`")));
            }
        }
        let specs = params
            .iter()
            .map(|p| UncertainSpec::new(p.clone(), self.level_for(&p.symbol)))
            .collect::<Result<Vec<_>>>()?;
        Ok(match self.kind {
            SetKind::Box => UncertaintySet::Box(BoxSet::new(specs)?),
            SetKind::Ellipsoid => UncertaintySet::Ellipsoid(EllipsoidSet::new(specs, self.omega)?),
        })
    }
}
