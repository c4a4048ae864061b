//! Exact Euclidean distances to box unions and sampling of distance shells.

mod quadrature;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::fractal::BoxUnion;
use crate::rng::{block_rng, BLOCK};
use crate::{Error, Result};

pub use quadrature::{far_region_integral, shell_integral, ShellIntegral};

/// Axis-aligned computational domain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "DomainDoc", into = "DomainDoc")]
pub struct DomainBox {
    lo: Vec<f64>,
    hi: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct DomainDoc {
    lo: Vec<f64>,
    hi: Vec<f64>,
}

impl TryFrom<DomainDoc> for DomainBox {
    type Error = Error;
    fn try_from(d: DomainDoc) -> Result<Self> {
        DomainBox::new(d.lo, d.hi)
    }
}

impl From<DomainBox> for DomainDoc {
    fn from(d: DomainBox) -> Self {
        DomainDoc { lo: d.lo, hi: d.hi }
    }
}

impl DomainBox {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.is_empty() || lo.len() != hi.len() {
            return Err(Error::DimensionMismatch(format!(
                "domain corners of length {} and {}",
                lo.len(),
                hi.len()
            )));
        }
        for a in 0..lo.len() {
            if !(lo[a].is_finite() && hi[a].is_finite() && lo[a] < hi[a]) {
                return Err(Error::Domain(format!(
                    "domain axis {a}: [{}, {}] has empty interior",
                    lo[a], hi[a]
                )));
            }
        }
        Ok(DomainBox { lo, hi })
    }

    /// `(0, 1)^n`.
    pub fn unit(n: usize) -> Self {
        DomainBox {
            lo: vec![0.0; n],
            hi: vec![1.0; n],
        }
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn lo(&self) -> &[f64] {
        &self.lo
    }

    pub fn hi(&self) -> &[f64] {
        &self.hi
    }

    pub fn volume(&self) -> f64 {
        self.lo.iter().zip(&self.hi).map(|(l, h)| h - l).product()
    }

    pub fn diameter(&self) -> f64 {
        self.lo
            .iter()
            .zip(&self.hi)
            .map(|(l, h)| (h - l) * (h - l))
            .sum::<f64>()
            .sqrt()
    }

    pub fn center(&self) -> Vec<f64> {
        self.lo.iter().zip(&self.hi).map(|(l, h)| 0.5 * (l + h)).collect()
    }

    /// Membership in the open box.
    pub fn contains(&self, x: &[f64]) -> bool {
        x.iter()
            .zip(self.lo.iter().zip(&self.hi))
            .all(|(v, (l, h))| *l < *v && *v < *h)
    }

    /// Membership in the closed box.
    pub fn contains_closed(&self, x: &[f64]) -> bool {
        x.iter()
            .zip(self.lo.iter().zip(&self.hi))
            .all(|(v, (l, h))| *l <= *v && *v <= *h)
    }

    /// Whether every box of `set` lies in the open domain.
    pub fn contains_set(&self, set: &BoxUnion) -> bool {
        set.dim() == self.dim() && set.boxes().all(|(l, h)| self.contains(l) && self.contains(h))
    }

    pub(crate) fn sample_into<R: Rng>(&self, rng: &mut R, out: &mut [f64]) {
        for (a, v) in out.iter_mut().enumerate() {
            *v = self.lo[a] + (self.hi[a] - self.lo[a]) * rng.random::<f64>();
        }
    }

    pub fn as_union(&self) -> BoxUnion {
        BoxUnion::single(self.lo.clone(), self.hi.clone()).expect("domain box is valid")
    }
}

/// Euclidean distance from `x` to `set`.
pub fn distance(x: &[f64], set: &BoxUnion) -> Result<f64> {
    if set.is_empty() {
        return Err(Error::Domain("distance to an empty set".into()));
    }
    if x.len() != set.dim() {
        return Err(Error::DimensionMismatch(format!(
            "point in R^{} and set in R^{}",
            x.len(),
            set.dim()
        )));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain(format!("non-finite point {x:?}")));
    }
    Ok(set.distance_sq(x).sqrt())
}

/// `{x in Omega : inner <= d(x, A) < outer}`.
#[derive(Debug, Clone, Copy)]
pub struct NeighborhoodShell<'a> {
    pub set: &'a BoxUnion,
    pub inner: f64,
    pub outer: f64,
}

impl<'a> NeighborhoodShell<'a> {
    pub fn new(set: &'a BoxUnion, inner: f64, outer: f64) -> Result<Self> {
        if set.is_empty() {
            return Err(Error::Domain("shell around an empty set".into()));
        }
        if !(inner >= 0.0 && outer > inner) {
            return Err(Error::Domain(format!(
                "shell radii must satisfy 0 <= inner < outer, got [{inner}, {outer})"
            )));
        }
        Ok(NeighborhoodShell { set, inner, outer })
    }

    pub fn contains_distance(&self, d: f64) -> bool {
        self.inner <= d && d < self.outer
    }
}

/// Accepted shell samples in stream order.
#[derive(Debug, Clone, PartialEq)]
pub struct ShellSamples {
    pub dim: usize,
    /// Row-major, `dim` coordinates per sample.
    pub points: Vec<f64>,
    pub distances: Vec<f64>,
    pub attempts: u64,
    /// Accepted over attempted candidates; estimates the shell's share of
    /// the domain volume.
    pub acceptance_rate: f64,
}

impl ShellSamples {
    pub fn len(&self) -> usize {
        self.distances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.distances.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }
}

/// Lowest acceptance rate tolerated by [`shell_sample`].
pub const MIN_ACCEPTANCE: f64 = 1e-6;

/// Attempts made before a low acceptance rate is declared an empty shell.
const VERDICT_ATTEMPTS: u64 = 1 << 22;

/// Blocks drawn per parallel round.
const BLOCKS_PER_ROUND: u64 = 16;

/// Uniform rejection samples from `omega` restricted to `shell`.
///
/// Candidate `i` comes from block `i / BLOCK`, so the returned list depends
/// only on `(seed, count)`.
pub fn shell_sample(
    shell: &NeighborhoodShell<'_>,
    omega: &DomainBox,
    count: usize,
    seed: u64,
) -> Result<ShellSamples> {
    if count == 0 {
        return Err(Error::Domain("sample count must be at least 1".into()));
    }
    if shell.set.dim() != omega.dim() {
        return Err(Error::DimensionMismatch(format!(
            "shell in R^{} and domain in R^{}",
            shell.set.dim(),
            omega.dim()
        )));
    }
    let n = omega.dim();
    shell.set.index();
    let mut points = Vec::with_capacity(count * n);
    let mut distances = Vec::with_capacity(count);
    let mut accepted_total = 0u64;
    let mut attempts = 0u64;
    let mut next_block = 0u64;
    while distances.len() < count {
        let round: Vec<(Vec<f64>, Vec<f64>)> = (next_block..next_block + BLOCKS_PER_ROUND)
            .into_par_iter()
            .map(|b| {
                let mut rng = block_rng(seed, b);
                let mut x = vec![0.0; n];
                let mut pts = Vec::new();
                let mut ds = Vec::new();
                for _ in 0..BLOCK {
                    omega.sample_into(&mut rng, &mut x);
                    let d = shell.set.distance_sq(&x).sqrt();
                    if shell.contains_distance(d) {
                        pts.extend_from_slice(&x);
                        ds.push(d);
                    }
                }
                (pts, ds)
            })
            .collect();
        next_block += BLOCKS_PER_ROUND;
        attempts += BLOCKS_PER_ROUND * BLOCK;
        for (pts, ds) in round {
            accepted_total += ds.len() as u64;
            let take = (count - distances.len()).min(ds.len());
            points.extend_from_slice(&pts[..take * n]);
            distances.extend_from_slice(&ds[..take]);
        }
        let rate = accepted_total as f64 / attempts as f64;
        if attempts >= VERDICT_ATTEMPTS && rate < MIN_ACCEPTANCE {
            return Err(Error::EmptyShell { rate, attempts });
        }
    }
    Ok(ShellSamples {
        dim: n,
        points,
        distances,
        attempts,
        acceptance_rate: accepted_total as f64 / attempts as f64,
    })
}
