//! Singular sets, the pointwise singular-dimension map and its checks.

mod source;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::distance::DomainBox;
use crate::fractal::{
    box_counting_dimension, box_counting_in_ball, default_scale_range, Ball, BoxUnion, DimensionEstimate,
};
use crate::{Error, Result};

pub use source::{lattice_cells, FieldSource, SingularSample, SingularSource, SpikeSource};

/// Box-counting scales per decade used throughout this module.
pub const SCALES_PER_DECADE: usize = 10;
/// Allowed increase of a per-radius estimate as the radius shrinks.
pub const MONOTONE_TOLERANCE: f64 = 0.1;
/// Allowed gap between a union slope and the largest member slope.
pub const STABILITY_TOLERANCE: f64 = 0.1;
/// Default slack of the semicontinuity check.
pub const USC_SLACK: f64 = 0.2;

/// Flags the cells of the lattice of side `spacing` over the source's
/// domain. Exact for constructed sets; fit-based for fields.
pub fn singular_set_estimate(source: &dyn SingularSource, spacing: f64) -> Result<Vec<SingularSample>> {
    source.samples(spacing)
}

/// Box-counting estimate of the centers of the flagged cells of side `spacing` inside
/// `within`, over scales from `2 spacing` up to half the radius.
pub fn dimension_of_flagged(samples: &[SingularSample], spacing: f64, within: &Ball) -> Result<DimensionEstimate> {
    if !samples.iter().any(|s| s.flagged) {
        return Ok(DimensionEstimate::empty());
    }
    let set = source::flagged_centers(samples, within.center.len(), spacing)?;
    let eps_min = 2.0 * spacing;
    let eps_max = (within.radius / 2.0).max(8.0 * eps_min);
    box_counting_in_ball(&set, within, (eps_min, eps_max), SCALES_PER_DECADE)
}

/// Box-counting estimate of `Sing` inside `ball`, or the empty estimate.
pub fn dimension_in_ball(source: &dyn SingularSource, ball: &Ball) -> Result<DimensionEstimate> {
    match source.scale_range(ball) {
        None => Ok(DimensionEstimate::empty()),
        Some(range) => box_counting_in_ball(source.singular_set(), ball, range, SCALES_PER_DECADE),
    }
}

/// Estimates at one point over shrinking radii.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointEstimate {
    pub point: Vec<f64>,
    /// Decreasing.
    pub radii: Vec<f64>,
    /// Slope per radius, clamped to `[0, N]`; 0 for an empty intersection.
    pub estimates: Vec<f64>,
    pub empty: Vec<bool>,
    pub r_squared: Vec<f64>,
    /// Value at the smallest radius.
    pub limit: f64,
    /// Estimate over the map's envelope radius, outside the sequence.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub envelope: Option<f64>,
}

impl PointEstimate {
    /// Pairs `(larger, smaller)` radius index where the estimate grows by
    /// more than `tol` as the radius shrinks.
    pub fn monotonicity_violations(&self, tol: f64) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for i in 0..self.estimates.len() {
            for j in i + 1..self.estimates.len() {
                if self.estimates[j] > self.estimates[i] + tol {
                    out.push((i, j));
                }
            }
        }
        out
    }
}

fn check_radii(source: &dyn SingularSource, radii: &[f64]) -> Result<()> {
    if radii.is_empty() {
        return Err(Error::Input("no radii given".into()));
    }
    if radii.windows(2).any(|w| !(w[1] < w[0])) || radii.iter().any(|r| !(r.is_finite() && *r > 0.0)) {
        return Err(Error::Input(format!("radii {radii:?} must be positive and strictly decreasing")));
    }
    let min_usable = 4.0 * source.resolution();
    let smallest = radii[radii.len() - 1];
    if smallest < min_usable {
        return Err(Error::Unresolvable {
            requested: smallest,
            min_usable,
        });
    }
    Ok(())
}

/// Dimension of `Sing` inside `B_r(a)` for each radius; the limit is the
/// value at the smallest radius.
pub fn sd_at_point(a: &[f64], source: &dyn SingularSource, radii: &[f64]) -> Result<PointEstimate> {
    check_radii(source, radii)?;
    point_estimate(a, source, radii)
}

fn point_estimate(a: &[f64], source: &dyn SingularSource, radii: &[f64]) -> Result<PointEstimate> {
    let n = source.domain().dim();
    if a.len() != n {
        return Err(Error::DimensionMismatch(format!("point in R^{}, source in R^{n}", a.len())));
    }
    let mut estimates = Vec::with_capacity(radii.len());
    let mut empty = Vec::with_capacity(radii.len());
    let mut r_squared = Vec::with_capacity(radii.len());
    for &r in radii {
        let est = dimension_in_ball(source, &Ball::new(a.to_vec(), r))?;
        estimates.push(if est.empty { 0.0 } else { est.slope.clamp(0.0, n as f64) });
        empty.push(est.empty);
        r_squared.push(if est.empty { 1.0 } else { est.r_squared });
    }
    Ok(PointEstimate {
        point: a.to_vec(),
        radii: radii.to_vec(),
        limit: *estimates.last().expect("radii are nonempty"),
        estimates,
        empty,
        r_squared,
        envelope: None,
    })
}

/// Points of the closed domain on a lattice of the given spacing along
/// `axes`, with the remaining coordinates taken from `anchor`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SdLattice {
    pub spacing: f64,
    pub axes: Vec<usize>,
    pub anchor: Vec<f64>,
}

impl SdLattice {
    /// Full lattice over every axis.
    pub fn full(spacing: f64, n: usize) -> Self {
        SdLattice {
            spacing,
            axes: (0..n).collect(),
            anchor: vec![0.0; n],
        }
    }

    pub fn points(&self, source: &dyn SingularSource) -> Result<Vec<Vec<f64>>> {
        self.points_in(source.domain())
    }

    /// Lattice points of the closure of `domain`, in row-major order.
    pub fn points_in(&self, domain: &DomainBox) -> Result<Vec<Vec<f64>>> {
        let n = domain.dim();
        if self.anchor.len() != n || self.axes.iter().any(|&a| a >= n) || self.axes.is_empty() {
            return Err(Error::DimensionMismatch(format!(
                "lattice axes {:?} and anchor of length {} for a domain in R^{n}",
                self.axes,
                self.anchor.len()
            )));
        }
        if !(self.spacing > 0.0) {
            return Err(Error::Domain(format!("lattice spacing {} must be positive", self.spacing)));
        }
        let counts: Vec<usize> = self
            .axes
            .iter()
            .map(|&a| ((domain.hi()[a] - domain.lo()[a]) / self.spacing + 1e-9).floor() as usize + 1)
            .collect();
        let total: usize = counts.iter().product();
        let mut out = Vec::with_capacity(total);
        for k in 0..total {
            let mut p = self.anchor.clone();
            let mut r = k;
            for (j, &a) in self.axes.iter().enumerate().rev() {
                let i = r % counts[j];
                r /= counts[j];
                p[a] = (domain.lo()[a] + i as f64 * self.spacing).min(domain.hi()[a]);
            }
            out.push(p);
        }
        Ok(out)
    }
}

/// `sd` estimates over a lattice.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SdMap {
    pub lattice: SdLattice,
    pub radii: Vec<f64>,
    pub points: Vec<PointEstimate>,
    /// Radius of the per-point envelope estimates, when computed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub envelope_radius: Option<f64>,
}

/// Envelope radius for a lattice of the given spacing: neighbours one
/// diagonal step apart see overlapping balls of the smallest radius.
pub fn envelope_radius(spacing: f64, radii: &[f64]) -> f64 {
    let r_min = radii.iter().copied().fold(f64::INFINITY, f64::min);
    (2.0 * spacing + r_min) * (1.0 + 1e-9)
}

impl SdMap {
    /// Adds the estimate over `B_radius(a)` at every point, so that
    /// [`usc_check`] can compare neighbors farther apart than the radii.
    pub fn with_envelope(mut self, source: &dyn SingularSource, radius: f64) -> Result<Self> {
        let n = source.domain().dim() as f64;
        let values = self
            .points
            .par_iter()
            .map(|p| {
                let est = dimension_in_ball(source, &Ball::new(p.point.clone(), radius))?;
                Ok(if est.empty { 0.0 } else { est.slope.clamp(0.0, n) })
            })
            .collect::<Result<Vec<f64>>>()?;
        for (p, v) in self.points.iter_mut().zip(values) {
            p.envelope = Some(v);
        }
        self.envelope_radius = Some(radius);
        Ok(self)
    }

    pub fn limits(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.limit).collect()
    }
}

/// Runs [`sd_at_point`] over every lattice point.
pub fn sd_map(source: &dyn SingularSource, lattice: &SdLattice, radii: &[f64]) -> Result<SdMap> {
    check_radii(source, radii)?;
    let pts = lattice.points(source)?;
    let points = pts
        .par_iter()
        .map(|p| point_estimate(p, source, radii))
        .collect::<Result<Vec<_>>>()?;
    Ok(SdMap {
        lattice: lattice.clone(),
        radii: radii.to_vec(),
        points,
        envelope_radius: None,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UscViolation {
    pub index: usize,
    pub point: Vec<f64>,
    pub value: f64,
    pub neighbor: usize,
    pub neighbor_value: f64,
    /// Radius of the estimate at `point` the neighbor was compared with.
    pub reference_radius: f64,
    pub magnitude: f64,
}

/// Discrete upper-semicontinuity test in ball-inclusion form.
///
/// For every lattice point `a` and neighbor `b` with `|a - b| <= 2 l`, the
/// limit at `b` is compared with the estimate at `a` over the smallest
/// recorded radius `R >= |a - b| + r_min`, the envelope included, so that
/// `B_{r_min}(b)` lies in `B_R(a)`; without such a radius the limit at `a`
/// is used. A point is
/// reported once, with its largest excess over `slack`.
pub fn usc_check(map: &SdMap, slack: f64) -> Vec<UscViolation> {
    let rho = 2.0 * map.lattice.spacing * (1.0 + 1e-9);
    let r_min = map.radii.last().copied().unwrap_or(0.0);
    let mut out = Vec::new();
    for (i, a) in map.points.iter().enumerate() {
        let mut worst: Option<UscViolation> = None;
        for (j, b) in map.points.iter().enumerate() {
            if i == j {
                continue;
            }
            let dist = a
                .point
                .iter()
                .zip(&b.point)
                .map(|(p, q)| (p - q) * (p - q))
                .sum::<f64>()
                .sqrt();
            if dist > rho {
                continue;
            }
            let need = dist + r_min;
            let recorded = a.radii.iter().copied().zip(a.estimates.iter().copied());
            let envelope = map.envelope_radius.zip(a.envelope);
            let (radius, reference) = recorded
                .chain(envelope)
                .filter(|(r, _)| *r >= need)
                .min_by(|x, y| x.0.total_cmp(&y.0))
                .unwrap_or((r_min, a.limit));
            let magnitude = b.limit - reference;
            if magnitude > slack && worst.as_ref().is_none_or(|w| magnitude > w.magnitude) {
                worst = Some(UscViolation {
                    index: i,
                    point: a.point.clone(),
                    value: reference,
                    neighbor: j,
                    neighbor_value: b.limit,
                    reference_radius: radius,
                    magnitude,
                });
            }
        }
        out.extend(worst);
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    pub scale_range: (f64, f64),
    pub member_slopes: Vec<f64>,
    pub max_member_slope: f64,
    pub union_slope: f64,
    pub difference: f64,
    pub holds: bool,
}

/// Compares the box-count slope of a finite union with the largest slope
/// among its members, all over one common scale range.
pub fn countable_stability_check(sets: &[BoxUnion]) -> Result<StabilityReport> {
    if sets.is_empty() {
        return Err(Error::Input("no sets given".into()));
    }
    let mut lo: f64 = 0.0;
    let mut hi = f64::INFINITY;
    for s in sets {
        let (a, b) = default_scale_range(s);
        // point-like members put no constraint on the range
        let (sl, sh) = s.bounding_box();
        if sl.iter().zip(&sh).any(|(l, h)| h > l) {
            lo = lo.max(a);
            hi = hi.min(b);
        }
    }
    if !hi.is_finite() {
        let (a, b) = default_scale_range(&sets[0]);
        lo = a;
        hi = b;
    }
    if !(lo < hi) {
        return Err(Error::InsufficientScales { usable: 0 });
    }
    let refs: Vec<&BoxUnion> = sets.iter().collect();
    let union = BoxUnion::union(&refs)?;
    let member_slopes = sets
        .iter()
        .map(|s| box_counting_dimension(s, (lo, hi), SCALES_PER_DECADE).map(|e| e.slope))
        .collect::<Result<Vec<_>>>()?;
    let union_slope = box_counting_dimension(&union, (lo, hi), SCALES_PER_DECADE)?.slope;
    let max_member_slope = member_slopes.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let difference = (union_slope - max_member_slope).abs();
    Ok(StabilityReport {
        scale_range: (lo, hi),
        member_slopes,
        max_member_slope,
        union_slope,
        difference,
        holds: difference <= STABILITY_TOLERANCE,
    })
}
