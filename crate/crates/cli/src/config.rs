//! Scenario configuration and its validation.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use singlab::distance::DomainBox;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("malformed config: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum ScenarioName {
    Stein,
    Dense,
    Contrast,
    Pointwise,
    Radial,
    HpSweep,
}

impl ScenarioName {
    pub fn as_str(self) -> &'static str {
        match self {
            ScenarioName::Stein => "stein",
            ScenarioName::Dense => "dense",
            ScenarioName::Contrast => "contrast",
            ScenarioName::Pointwise => "pointwise",
            ScenarioName::Radial => "radial",
            ScenarioName::HpSweep => "hp-sweep",
        }
    }

    fn uses_ladder(self) -> bool {
        matches!(self, ScenarioName::Dense | ScenarioName::Contrast | ScenarioName::Pointwise)
    }
}

/// Closed box `[lo, hi]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoxSpec {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl BoxSpec {
    pub fn unit(n: usize) -> Self {
        BoxSpec {
            lo: vec![0.0; n],
            hi: vec![1.0; n],
        }
    }

    pub fn to_domain(&self) -> Result<DomainBox, ConfigError> {
        DomainBox::new(self.lo.clone(), self.hi.clone()).map_err(|e| ConfigError::Invalid(e.to_string()))
    }

    fn overlaps(&self, other: &BoxSpec) -> bool {
        (0..self.lo.len()).all(|a| self.lo[a] < other.hi[a] && other.lo[a] < self.hi[a])
    }

    fn inside(&self, outer: &BoxSpec) -> bool {
        (0..self.lo.len()).all(|a| self.lo[a] >= outer.lo[a] && self.hi[a] <= outer.hi[a])
    }
}

/// `d_k = (N - 4) - 2^-k - offset` for `k = first, ..., first + len - 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LadderSpec {
    #[serde(default = "default_ladder_len")]
    pub len: usize,
    #[serde(default = "default_first_rung")]
    pub first: u32,
    #[serde(default)]
    pub offset: f64,
    /// Explicit values replacing the formula.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dims: Option<Vec<f64>>,
}

impl Default for LadderSpec {
    fn default() -> Self {
        LadderSpec {
            len: default_ladder_len(),
            first: default_first_rung(),
            offset: 0.0,
            dims: None,
        }
    }
}

fn default_ladder_len() -> usize {
    4
}

fn default_first_rung() -> u32 {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "policy", deny_unknown_fields)]
pub enum GammaPolicy {
    /// Midpoint of `(2, (N - d_k) / 2)`.
    Midpoint,
    /// `2 + t ((N - d_k) / 2 - 2)`.
    Fraction { t: f64 },
    Fixed { values: Vec<f64> },
}

/// Sample lattice for singular-dimension maps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LatticeSpec {
    pub spacing: f64,
    /// Axes the lattice varies along; the others sit at `anchor`.
    pub axes: Vec<usize>,
    pub anchor: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SteinSpec {
    #[serde(default = "default_spikes")]
    pub n: usize,
    #[serde(default = "default_stein_gamma")]
    pub gamma: f64,
}

impl Default for SteinSpec {
    fn default() -> Self {
        SteinSpec {
            n: default_spikes(),
            gamma: default_stein_gamma(),
        }
    }
}

fn default_spikes() -> usize {
    50
}

fn default_stein_gamma() -> f64 {
    0.5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RadialSpec {
    #[serde(default = "default_radial_gammas")]
    pub gammas: Vec<f64>,
    #[serde(default = "one")]
    pub amplitude: f64,
    #[serde(default = "one")]
    pub radius: f64,
    #[serde(default = "default_cells")]
    pub cells: usize,
    /// Random ordered pairs for the comparison check.
    #[serde(default = "default_pairs")]
    pub pairs: usize,
}

impl Default for RadialSpec {
    fn default() -> Self {
        RadialSpec {
            gammas: default_radial_gammas(),
            amplitude: 1.0,
            radius: 1.0,
            cells: default_cells(),
            pairs: default_pairs(),
        }
    }
}

fn default_radial_gammas() -> Vec<f64> {
    vec![2.1, 2.25, 2.5]
}

fn one() -> f64 {
    1.0
}

fn default_cells() -> usize {
    1 << 16
}

fn default_pairs() -> usize {
    20
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    #[serde(default = "default_sweep_dim")]
    pub dim: f64,
    #[serde(default = "default_sweep_generation")]
    pub generation: usize,
    #[serde(default = "default_sweep_p")]
    pub p: f64,
    /// Values of `gamma p`.
    #[serde(default = "default_products")]
    pub products: Vec<f64>,
    #[serde(default = "default_budget")]
    pub budget: u64,
}

impl Default for SweepSpec {
    fn default() -> Self {
        SweepSpec {
            dim: default_sweep_dim(),
            generation: default_sweep_generation(),
            p: default_sweep_p(),
            products: default_products(),
            budget: default_budget(),
        }
    }
}

fn default_sweep_dim() -> f64 {
    0.5
}

fn default_sweep_generation() -> usize {
    16
}

fn default_sweep_p() -> f64 {
    1.0
}

fn default_products() -> Vec<f64> {
    vec![0.5, 1.0, 1.25, 1.75, 2.0, 2.5]
}

fn default_budget() -> u64 {
    1 << 18
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub scenario: ScenarioName,
    #[serde(default = "default_ambient")]
    pub ambient: usize,
    /// Unit cube when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub domain: Option<BoxSpec>,
    /// `Omega_r` as a box list.
    #[serde(default)]
    pub regular: Vec<BoxSpec>,
    /// `Omega_s` as a box list.
    #[serde(default)]
    pub singular: Vec<BoxSpec>,
    /// Number `J` of base balls; one per singular lattice point when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub balls: Option<usize>,
    #[serde(default)]
    pub ladder: LadderSpec,
    #[serde(default = "default_gamma")]
    pub gamma: GammaPolicy,
    /// Nodes per axis of grid solves.
    #[serde(default = "default_grid")]
    pub grid: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lattice: Option<LatticeSpec>,
    /// Shrinking radii of the singular-dimension map.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub radii: Option<Vec<f64>>,
    /// Finest Cantor interval relative to its placed extent is `2^-resolution_bits`.
    #[serde(default = "default_resolution_bits")]
    pub resolution_bits: u32,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub stein: SteinSpec,
    #[serde(default)]
    pub radial: RadialSpec,
    #[serde(default)]
    pub sweep: SweepSpec,
}

fn default_ambient() -> usize {
    5
}

fn default_gamma() -> GammaPolicy {
    GammaPolicy::Midpoint
}

fn default_grid() -> usize {
    17
}

fn default_resolution_bits() -> u32 {
    12
}

impl ScenarioConfig {
    /// Defaults for a named scenario, already valid.
    pub fn preset(name: ScenarioName) -> Self {
        let n = 5;
        let half = BoxSpec {
            lo: vec![0.0; n],
            hi: [0.5, 1.0, 1.0, 1.0, 1.0].to_vec(),
        };
        let rest = BoxSpec {
            lo: [0.5, 0.0, 0.0, 0.0, 0.0].to_vec(),
            hi: vec![1.0; n],
        };
        let slice = LatticeSpec {
            spacing: 0.25,
            axes: vec![0, 1],
            anchor: vec![0.5; n],
        };
        let mut c = ScenarioConfig {
            scenario: name,
            ambient: n,
            domain: None,
            regular: Vec::new(),
            singular: Vec::new(),
            balls: None,
            ladder: LadderSpec::default(),
            gamma: GammaPolicy::Midpoint,
            grid: default_grid(),
            lattice: None,
            radii: None,
            resolution_bits: default_resolution_bits(),
            seed: 0,
            output: None,
            stein: SteinSpec::default(),
            radial: RadialSpec::default(),
            sweep: SweepSpec::default(),
        };
        match name {
            ScenarioName::Contrast => {
                c.singular = vec![half];
                c.regular = vec![rest];
                c.ladder.first = 2;
                c.lattice = Some(slice);
                c.radii = Some(vec![0.24, 0.17, 0.12]);
            }
            ScenarioName::Pointwise => {
                c.singular = vec![BoxSpec::unit(n)];
                c.ladder.first = 2;
                c.lattice = Some(slice);
                c.radii = Some(vec![0.24, 0.17, 0.12]);
            }
            ScenarioName::Dense => {
                c.singular = vec![half];
                c.regular = vec![rest];
                c.balls = Some(9);
                c.ladder.len = 9;
                c.ladder.first = 2;
                c.lattice = Some(LatticeSpec {
                    spacing: 0.125,
                    ..slice
                });
            }
            ScenarioName::Stein | ScenarioName::HpSweep => c.ambient = 1,
            ScenarioName::Radial => {}
        }
        if name == ScenarioName::HpSweep {
            c.ambient = 2;
        }
        c
    }

    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let c: ScenarioConfig = serde_json::from_str(text)?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_json(&text)
    }

    pub fn domain_spec(&self) -> BoxSpec {
        self.domain.clone().unwrap_or_else(|| BoxSpec::unit(self.ambient))
    }

    /// `d_1 < ... < d_K`.
    pub fn ladder_dims(&self) -> Vec<f64> {
        if let Some(d) = &self.ladder.dims {
            return d.clone();
        }
        let top = self.ambient as f64 - 4.0;
        let first = self.ladder.first as usize;
        (first..first + self.ladder.len)
            .map(|k| top - 0.5f64.powi(k as i32) - self.ladder.offset)
            .collect()
    }

    /// `gamma_k` for each ladder dimension.
    pub fn gammas(&self, dims: &[f64]) -> Vec<f64> {
        let n = self.ambient as f64;
        match &self.gamma {
            GammaPolicy::Midpoint => dims.iter().map(|d| 0.5 * (2.0 + 0.5 * (n - d))).collect(),
            GammaPolicy::Fraction { t } => dims.iter().map(|d| 2.0 + t * (0.5 * (n - d) - 2.0)).collect(),
            GammaPolicy::Fixed { values } => values.clone(),
        }
    }

    /// Rejects exactly the violations of the integrability window and the
    /// dimension ladder window, quoting the violated inequality.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError::Invalid(m));
        let n = self.ambient;
        if n == 0 {
            return bad("ambient dimension N must be positive".into());
        }
        let domain = self.domain_spec();
        let boxes = std::iter::once(("domain", &domain))
            .chain(self.regular.iter().map(|b| ("regular", b)))
            .chain(self.singular.iter().map(|b| ("singular", b)));
        for (what, b) in boxes {
            if b.lo.len() != n || b.hi.len() != n {
                return bad(format!("{what} box has {} / {} coordinates, N = {n}", b.lo.len(), b.hi.len()));
            }
            if b.lo.iter().zip(&b.hi).any(|(l, h)| !(l < h)) {
                return bad(format!("{what} box needs lo < hi on every axis"));
            }
            if what != "domain" && !b.inside(&domain) {
                return bad(format!("{what} box {:?}..{:?} leaves the domain", b.lo, b.hi));
            }
        }
        for r in &self.regular {
            for s in &self.singular {
                if r.overlaps(s) {
                    return bad(format!(
                        "regions overlap: regular {:?}..{:?} meets singular {:?}..{:?}",
                        r.lo, r.hi, s.lo, s.hi
                    ));
                }
            }
        }
        if let Some(l) = &self.lattice {
            if !(l.spacing > 0.0) || l.anchor.len() != n || l.axes.is_empty() || l.axes.iter().any(|&a| a >= n) {
                return bad(format!("lattice needs spacing > 0, axes below N = {n} and an anchor of length {n}"));
            }
        }
        if let Some(r) = &self.radii {
            if r.is_empty() || r.windows(2).any(|w| !(w[1] < w[0])) || r.iter().any(|v| !(*v > 0.0)) {
                return bad(format!("radii {r:?} must be positive and strictly decreasing"));
            }
        }
        if !(3..=48).contains(&self.grid) {
            return bad(format!("grid = {} nodes per axis must lie in 3..=48", self.grid));
        }
        if !(4..=40).contains(&self.resolution_bits) {
            return bad(format!("resolution_bits = {} must lie in 4..=40", self.resolution_bits));
        }
        match self.scenario {
            s if s.uses_ladder() => self.validate_ladder(),
            ScenarioName::Stein => {
                if n != 1 {
                    return bad(format!("stein lives on an interval, got N = {n}"));
                }
                if self.stein.n < 2 || !(self.stein.gamma > 0.0 && self.stein.gamma < 1.0) {
                    return bad(format!(
                        "stein needs n >= 2 and 0 < gamma < 1, got n = {} and gamma = {}",
                        self.stein.n, self.stein.gamma
                    ));
                }
                Ok(())
            }
            ScenarioName::Radial => {
                let nf = n as f64;
                if n < 3 {
                    return bad(format!("radial needs N >= 3, got {n}"));
                }
                for &g in &self.radial.gammas {
                    if !(g > 2.0 && g < nf) {
                        return bad(format!("gamma = {g} violates 2 < gamma < N = {n}"));
                    }
                }
                if !(self.radial.amplitude > 0.0 && self.radial.radius > 0.0) || self.radial.cells < 16 {
                    return bad("radial needs amplitude > 0, radius > 0 and cells >= 16".into());
                }
                Ok(())
            }
            _ => {
                let s = &self.sweep;
                if !(s.dim > 0.0 && s.dim < 1.0) || !(s.p >= 1.0) || s.products.iter().any(|g| !(*g > 0.0)) {
                    return bad("hp-sweep needs 0 < dim < 1, p >= 1 and positive products".into());
                }
                Ok(())
            }
        }
    }

    fn validate_ladder(&self) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError::Invalid(m));
        let n = self.ambient;
        if n < 5 {
            return bad(format!("N = {n} violates N >= 5"));
        }
        if self.singular.is_empty() {
            return bad("at least one singular box is required".into());
        }
        let nf = n as f64;
        let dims = self.ladder_dims();
        if dims.is_empty() {
            return bad("the dimension ladder is empty".into());
        }
        if self.ladder.first == 0 || self.ladder.first > 52 {
            return bad(format!("ladder.first = {} must lie in 1..=52", self.ladder.first));
        }
        for (k, &d) in dims.iter().enumerate() {
            if !(d > nf - 5.0 && d < nf - 4.0) {
                return bad(format!("d_{} = {d} violates N - 5 < d_k < N - 4 with N = {n}", k + 1));
            }
        }
        if let Some(k) = dims.windows(2).position(|w| !(w[0] < w[1])) {
            return bad(format!("d_{} = {} and d_{} = {} violate d_k < d_(k+1)", k + 1, dims[k], k + 2, dims[k + 1]));
        }
        let gammas = self.gammas(&dims);
        if gammas.len() != dims.len() {
            return bad(format!("{} gamma values for {} ladder dimensions", gammas.len(), dims.len()));
        }
        for (k, (&g, &d)) in gammas.iter().zip(&dims).enumerate() {
            let upper = 0.5 * (nf - d);
            if !(g > 2.0 && g < upper) {
                return bad(format!(
                    "gamma_{} = {g} violates 2 < gamma_k < (N - d_k)/2 = {upper}",
                    k + 1
                ));
            }
        }
        if self.balls == Some(0) {
            return bad("balls = 0; J must be positive".into());
        }
        Ok(())
    }
}
