//! Sources of singular sets: constructed right-hand sides, spike sums and
//! sampled fields.

use serde::{Deserialize, Serialize};

use crate::distance::DomainBox;
use crate::fractal::{Ball, BoxUnion};
use crate::poisson::{fit_singularity_order, GridField, MIN_CONFIDENCE};
use crate::rhs::{SingularRhs, SteinFunction};
use crate::{Error, Result};

/// Nodes needed per cell edge before a fit window fits inside it.
const MIN_NODES_PER_CELL: f64 = 8.0;

/// One lattice cell and whether it carries a singularity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SingularSample {
    pub center: Vec<f64>,
    pub flagged: bool,
    /// Fitted or known exponent; below the detection threshold when flagged.
    pub exponent: f64,
    /// `r^2` of the fit; 1 for exactly known sets.
    pub confidence: f64,
}

/// Anything with a singular set that can be cut into lattice cells and
/// box-counted inside balls.
pub trait SingularSource: Sync {
    fn domain(&self) -> &DomainBox;

    /// `Sing` as a finite union of boxes.
    fn singular_set(&self) -> &BoxUnion;

    /// Length below which the singular set carries no more structure.
    fn resolution(&self) -> f64 {
        self.singular_set().resolution().unwrap_or(0.0)
    }

    /// Exponent of the blow-up inside the closed cell `[lo, hi]`, if any.
    fn exponent_in(&self, lo: &[f64], hi: &[f64]) -> f64;

    /// Box-counting scale range for the part of the set inside `ball`, or
    /// `None` when the ball misses the set.
    fn scale_range(&self, ball: &Ball) -> Option<(f64, f64)> {
        let set = self.singular_set();
        if set.is_empty() || set.distance_sq(&ball.center) >= ball.radius * ball.radius {
            return None;
        }
        let (lo, hi) = set.bounding_box();
        let extent = lo.iter().zip(&hi).map(|(l, h)| h - l).fold(0.0, f64::max);
        Some(scale_window(ball.radius, extent, self.resolution(), set.target_dim()))
    }

    /// Flags lattice cells of side `spacing` that meet the singular set.
    fn samples(&self, spacing: f64) -> Result<Vec<SingularSample>> {
        let set = self.singular_set();
        lattice_cells(self.domain(), spacing)?
            .into_iter()
            .map(|(lo, hi)| {
                let flagged = !set.is_empty() && set.meets_cell(&lo, &hi);
                let center = lo.iter().zip(&hi).map(|(l, h)| 0.5 * (l + h)).collect();
                Ok(SingularSample {
                    center,
                    flagged,
                    exponent: if flagged { self.exponent_in(&lo, &hi) } else { 0.0 },
                    confidence: 1.0,
                })
            })
            .collect()
    }
}

/// Centers of the flagged cells as points resolved down to `spacing`.
pub(crate) fn flagged_centers(samples: &[SingularSample], n: usize, spacing: f64) -> Result<BoxUnion> {
    let boxes: Vec<_> = samples
        .iter()
        .filter(|s| s.flagged)
        .map(|s| (s.center.clone(), s.center.clone()))
        .collect();
    Ok(BoxUnion::new(n, boxes)?.with_resolution(spacing))
}

/// Widest span `eps_max / eps_min` of a scale window, in powers of two.
const MAX_SPAN_BITS: f64 = 40.0;

/// `eps_max = min(r, extent) / 4` and `eps_min` at least twice the
/// resolution, spanning at most the range where about `2^20` cells are
/// expected and never more than `2^MAX_SPAN_BITS`.
pub(crate) fn scale_window(radius: f64, extent: f64, resolution: f64, dim: Option<f64>) -> (f64, f64) {
    let top = if extent > 0.0 { radius.min(extent) } else { radius };
    let eps_max = top / 4.0;
    let d = dim.unwrap_or(1.0).max(0.25);
    let span = (20.0 / d).min(MAX_SPAN_BITS);
    let eps_min = (eps_max * 2f64.powf(-span)).max(2.0 * resolution);
    (eps_min.min(eps_max / 10.0), eps_max)
}

/// Half-open cells `[lo + i l, lo + (i + 1) l)` covering the domain, in
/// row-major order.
pub fn lattice_cells(domain: &DomainBox, spacing: f64) -> Result<Vec<(Vec<f64>, Vec<f64>)>> {
    if !(spacing > 0.0) {
        return Err(Error::Domain(format!("lattice spacing {spacing} must be positive")));
    }
    let n = domain.dim();
    let counts: Vec<usize> = (0..n)
        .map(|a| ((domain.hi()[a] - domain.lo()[a]) / spacing - 1e-9).ceil().max(1.0) as usize)
        .collect();
    let total = counts.iter().try_fold(1usize, |acc, &c| acc.checked_mul(c)).filter(|&t| t <= 1 << 24);
    let total = total.ok_or_else(|| Error::Domain(format!("lattice {counts:?} has too many cells")))?;
    let mut out = Vec::with_capacity(total);
    for k in 0..total {
        let mut r = k;
        let mut lo = vec![0.0; n];
        let mut hi = vec![0.0; n];
        for a in (0..n).rev() {
            let i = r % counts[a];
            r /= counts[a];
            lo[a] = domain.lo()[a] + i as f64 * spacing;
            hi[a] = domain.lo()[a] + (i + 1) as f64 * spacing;
        }
        out.push((lo, hi));
    }
    Ok(out)
}

impl SingularSource for SingularRhs {
    fn domain(&self) -> &DomainBox {
        SingularRhs::domain(self)
    }

    fn singular_set(&self) -> &BoxUnion {
        self.union()
    }

    fn resolution(&self) -> f64 {
        self.terms()
            .iter()
            .filter_map(|t| t.set.resolution())
            .fold(0.0, f64::max)
    }

    fn exponent_in(&self, lo: &[f64], hi: &[f64]) -> f64 {
        -self
            .terms()
            .iter()
            .filter(|t| t.set.meets_cell(lo, hi))
            .map(|t| t.gamma)
            .fold(0.0, f64::max)
    }

    /// Uses the smallest extent among the terms meeting the ball, so that
    /// the fit stays below the size of every constructed piece.
    fn scale_range(&self, ball: &Ball) -> Option<(f64, f64)> {
        let r2 = ball.radius * ball.radius;
        let mut extent = f64::INFINITY;
        let mut dim: Option<f64> = None;
        let mut any = false;
        for t in self.terms() {
            if t.set.distance_sq(&ball.center) < r2 {
                any = true;
                let (lo, hi) = t.set.bounding_box();
                let e = lo.iter().zip(&hi).map(|(l, h)| h - l).fold(0.0, f64::max);
                if e > 0.0 {
                    extent = extent.min(e);
                }
                let d = t.set.target_dim().unwrap_or(t.set.dim() as f64);
                dim = Some(dim.map_or(d, |x: f64| x.max(d)));
            }
        }
        if !any {
            return None;
        }
        let extent = if extent.is_finite() { extent } else { 0.0 };
        Some(scale_window(ball.radius, extent, SingularSource::resolution(self), dim))
    }
}

/// [`SteinFunction`] with its spikes as a point set.
#[derive(Debug, Clone)]
pub struct SpikeSource {
    pub function: SteinFunction,
    set: BoxUnion,
}

impl SpikeSource {
    pub fn new(function: SteinFunction) -> Result<Self> {
        let pts = function.singular_points();
        let set = BoxUnion::new(1, pts.iter().map(|&p| (vec![p], vec![p])))?.with_target_dim(0.0);
        Ok(SpikeSource { function, set })
    }
}

impl SingularSource for SpikeSource {
    fn domain(&self) -> &DomainBox {
        &self.function.domain
    }

    fn singular_set(&self) -> &BoxUnion {
        &self.set
    }

    fn exponent_in(&self, _lo: &[f64], _hi: &[f64]) -> f64 {
        -self.function.gamma
    }
}

/// Singular set detected in a sampled field: a lattice cell is flagged when
/// a strict local maximum inside it fits a power law with exponent below the
/// detection threshold and `r^2` at least the confidence floor.
#[derive(Debug, Clone)]
pub struct FieldSource {
    domain: DomainBox,
    spacing: f64,
    samples: Vec<SingularSample>,
    set: BoxUnion,
}

impl FieldSource {
    pub fn detect(u: &GridField, spacing: f64) -> Result<Self> {
        let samples = detect_field(u, spacing)?;
        let set = flagged_centers(&samples, u.grid().dim(), spacing)?;
        Ok(FieldSource {
            domain: u.grid().domain().clone(),
            spacing,
            samples,
            set,
        })
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn detected(&self) -> &[SingularSample] {
        &self.samples
    }
}

impl SingularSource for FieldSource {
    fn domain(&self) -> &DomainBox {
        &self.domain
    }

    fn singular_set(&self) -> &BoxUnion {
        &self.set
    }

    fn exponent_in(&self, lo: &[f64], hi: &[f64]) -> f64 {
        self.samples
            .iter()
            .filter(|s| s.flagged && s.center.iter().zip(lo.iter().zip(hi)).all(|(c, (l, h))| c >= l && c <= h))
            .map(|s| s.exponent)
            .fold(0.0, f64::min)
    }

    fn scale_range(&self, ball: &Ball) -> Option<(f64, f64)> {
        if self.set.is_empty() || self.set.distance_sq(&ball.center) >= ball.radius * ball.radius {
            return None;
        }
        let eps_min = 2.0 * self.spacing;
        Some((eps_min, (ball.radius / 2.0).max(4.0 * eps_min)))
    }

    fn samples(&self, spacing: f64) -> Result<Vec<SingularSample>> {
        if spacing == self.spacing {
            Ok(self.samples.clone())
        } else {
            Err(Error::Input(format!(
                "field detection ran at spacing {}, not {spacing}",
                self.spacing
            )))
        }
    }
}

fn detect_field(u: &GridField, spacing: f64) -> Result<Vec<SingularSample>> {
    let grid = u.grid();
    let n = grid.dim();
    let h = grid.max_spacing();
    if spacing < MIN_NODES_PER_CELL * h {
        return Err(Error::Unresolvable {
            requested: spacing,
            min_usable: MIN_NODES_PER_CELL * h,
        });
    }
    let cells = lattice_cells(grid.domain(), spacing)?;
    let strides = grid.strides();
    let values = u.values();
    // strongest strict local maximum per cell
    let mut best: Vec<Option<usize>> = vec![None; cells.len()];
    let counts: Vec<usize> = (0..n)
        .map(|a| ((grid.domain().hi()[a] - grid.domain().lo()[a]) / spacing - 1e-9).ceil().max(1.0) as usize)
        .collect();
    let mut x = vec![0.0; n];
    for i in 0..grid.len() {
        if grid.is_boundary(i) || !values[i].is_finite() {
            continue;
        }
        let v = values[i];
        let local_max = strides.iter().all(|&s| v > values[i - s] && v > values[i + s]);
        if !local_max {
            continue;
        }
        grid.point(i, &mut x);
        let mut c = 0usize;
        for a in 0..n {
            let k = (((x[a] - grid.domain().lo()[a]) / spacing).floor() as usize).min(counts[a] - 1);
            c = c * counts[a] + k;
        }
        if best[c].is_none_or(|j| values[j] < v) {
            best[c] = Some(i);
        }
    }
    let window = (2.0 * h, spacing);
    let mut out = Vec::with_capacity(cells.len());
    for ((lo, hi), cand) in cells.iter().zip(best) {
        let center: Vec<f64> = lo.iter().zip(hi).map(|(l, h)| 0.5 * (l + h)).collect();
        let mut sample = SingularSample {
            center,
            flagged: false,
            exponent: 0.0,
            confidence: 0.0,
        };
        if let Some(i) = cand {
            grid.point(i, &mut x);
            match fit_singularity_order(u, &x, &BoxUnion::point(&x), window) {
                Ok(fit) => {
                    sample.exponent = fit.exponent;
                    sample.confidence = fit.r_squared;
                    sample.flagged = fit.singular() && fit.r_squared >= MIN_CONFIDENCE;
                }
                Err(Error::InsufficientData(_)) => {}
                Err(e) => return Err(e),
            }
        }
        out.push(sample);
    }
    Ok(out)
}
