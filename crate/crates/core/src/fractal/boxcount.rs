use log::debug;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::bvh::{Bvh, Node};
use super::union::{Ball, BoxUnion};
use crate::regression::fit_line;
use crate::{Error, Result};

/// Allowance added to a measured slope before it is compared with a
/// theoretical dimension bound.
pub const FIT_TOLERANCE: f64 = 0.05;

/// Snapping tolerance in cell units: coordinates this close to a grid line
/// are treated as lying on it. A relative part absorbs the rounding of
/// coordinates built by repeated subdivision.
const SNAP: f64 = 1e-9;
const SNAP_REL: f64 = 64.0 * f64::EPSILON;

/// Hard cap on the cells recorded at one scale.
const MAX_CELLS: usize = 1 << 25;

/// Cell indices stay below this magnitude, where `f64` still resolves unit
/// steps.
const MAX_CELL_INDEX: f64 = (1u64 << 52) as f64;

/// Cells aimed for at the finest automatically chosen scale.
const CELL_BUDGET: f64 = (1u64 << 20) as f64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DimensionEstimate {
    pub slope: f64,
    pub intercept: f64,
    /// Scales entering the fit, ascending.
    pub scales_used: Vec<f64>,
    pub counts: Vec<u64>,
    pub r_squared: f64,
    /// Some requested scales were finer than the set's resolution.
    pub saturated: bool,
    pub excluded_scales: Vec<f64>,
    /// The counted set was empty; the slope is reported as 0.
    pub empty: bool,
}

impl DimensionEstimate {
    pub fn empty() -> Self {
        DimensionEstimate {
            slope: 0.0,
            intercept: 0.0,
            scales_used: Vec::new(),
            counts: Vec::new(),
            r_squared: 1.0,
            saturated: false,
            excluded_scales: Vec::new(),
            empty: true,
        }
    }

    /// `(log(1/eps), log N)` pairs in fit order.
    pub fn log_points(&self) -> Vec<(f64, f64)> {
        self.scales_used
            .iter()
            .zip(&self.counts)
            .map(|(e, &c)| (-e.ln(), (c as f64).ln()))
            .collect()
    }
}

/// Geometric grid from `eps_min` to `eps_max` inclusive, ascending.
pub fn geometric_scales(eps_min: f64, eps_max: f64, per_decade: usize) -> Vec<f64> {
    let decades = (eps_max / eps_min).log10();
    let steps = ((decades * per_decade.max(1) as f64).ceil() as usize).max(1);
    let ratio = (eps_max / eps_min).ln() / steps as f64;
    (0..=steps)
        .map(|i| {
            if i == steps {
                eps_max
            } else {
                eps_min * (ratio * i as f64).exp()
            }
        })
        .collect()
}

/// Scale range suited to `set`: from a quarter of its largest extent down to
/// either twice its resolution or the scale where about 2^20 cells are
/// expected, whichever is coarser.
pub fn default_scale_range(set: &BoxUnion) -> (f64, f64) {
    if set.is_empty() {
        return (1e-3, 1.0);
    }
    let (lo, hi) = set.bounding_box();
    let extent = lo.iter().zip(&hi).map(|(l, h)| h - l).fold(0.0, f64::max);
    if extent <= 0.0 {
        return (1e-3, 1.0);
    }
    let eps_max = extent / 4.0;
    let expected_dim = set.target_dim().unwrap_or(set.dim() as f64).max(0.25);
    let mut eps_min = eps_max * CELL_BUDGET.powf(-1.0 / expected_dim);
    if let Some(r) = set.resolution() {
        eps_min = eps_min.max(2.0 * r);
    }
    (eps_min.min(eps_max / 10.0), eps_max)
}

fn cell_lo(v: f64, eps: f64) -> i64 {
    let t = v / eps;
    (t + SNAP + SNAP_REL * t.abs()).floor() as i64
}

fn cell_hi(v: f64, eps: f64, lower: i64) -> i64 {
    let t = v / eps;
    ((t - SNAP - SNAP_REL * t.abs()).ceil() as i64 - 1).max(lower)
}

enum Keys {
    Packed { shifts: Vec<u32>, base: Vec<i64>, keys: Vec<u128> },
    Wide { keys: Vec<Vec<i64>> },
}

impl Keys {
    fn new(set: &BoxUnion, eps: f64, wide: bool) -> Self {
        let (lo, hi) = set.bounding_box();
        let mut base = Vec::with_capacity(lo.len());
        let mut shifts = Vec::with_capacity(lo.len());
        let mut total = 0u32;
        for a in 0..lo.len() {
            let l = cell_lo(lo[a], eps);
            let h = cell_hi(hi[a], eps, l);
            base.push(l);
            shifts.push(total);
            let span = (h - l) as u64;
            total += 64 - span.leading_zeros();
        }
        if total <= 128 && !wide {
            Keys::Packed {
                shifts,
                base,
                keys: Vec::new(),
            }
        } else {
            Keys::Wide { keys: Vec::new() }
        }
    }

    fn push(&mut self, cell: &[i64]) -> Result<()> {
        let len = match self {
            Keys::Packed { shifts, base, keys } => {
                let mut k = 0u128;
                for a in 0..cell.len() {
                    k |= ((cell[a] - base[a]) as u128) << shifts[a];
                }
                keys.push(k);
                keys.len()
            }
            Keys::Wide { keys } => {
                keys.push(cell.to_vec());
                keys.len()
            }
        };
        if len > MAX_CELLS {
            // duplicates are common when many boxes share cells
            if self.compact() > MAX_CELLS / 2 {
                return Err(Error::Domain(format!(
                    "more than {} cells at a single scale; choose a coarser scale range",
                    MAX_CELLS / 2
                )));
            }
        }
        Ok(())
    }

    fn compact(&mut self) -> usize {
        match self {
            Keys::Packed { keys, .. } => {
                keys.sort_unstable();
                keys.dedup();
                keys.len()
            }
            Keys::Wide { keys } => {
                keys.sort_unstable();
                keys.dedup();
                keys.len()
            }
        }
    }

    fn distinct(mut self) -> u64 {
        self.compact() as u64
    }
}

struct Counter<'a> {
    coords: &'a [f64],
    bvh: &'a Bvh,
    eps: f64,
    ball: Option<&'a Ball>,
    keys: Keys,
}

impl Counter<'_> {
    fn single_cell(&self, lo: &[f64], hi: &[f64], cell: &mut [i64]) -> bool {
        for a in 0..lo.len() {
            let l = cell_lo(lo[a], self.eps);
            if cell_hi(hi[a], self.eps, l) != l {
                return false;
            }
            cell[a] = l;
        }
        true
    }

    fn node_inside_ball(&self, n: u32) -> bool {
        let Some(ball) = self.ball else { return true };
        let (lo, hi) = (self.bvh.node_lo(n), self.bvh.node_hi(n));
        let far: f64 = (0..lo.len())
            .map(|a| {
                let d = (ball.center[a] - lo[a]).abs().max((hi[a] - ball.center[a]).abs());
                d * d
            })
            .sum();
        far < ball.radius * ball.radius
    }

    fn node_misses_ball(&self, n: u32) -> bool {
        let Some(ball) = self.ball else { return false };
        let c = &ball.center;
        super::union::box_box_sq(self.bvh.node_lo(n), self.bvh.node_hi(n), c, c)
            >= ball.radius * ball.radius
    }

    /// Whether the closed box meets cell `cell` inside the ball.
    fn box_meets_cell_in_ball(&self, lo: &[f64], hi: &[f64], cell: &[i64]) -> bool {
        let Some(ball) = self.ball else { return true };
        let mut d2 = 0.0;
        for a in 0..lo.len() {
            let il = lo[a].max(cell[a] as f64 * self.eps);
            let ih = hi[a].min((cell[a] + 1) as f64 * self.eps);
            let x = ball.center[a].clamp(il.min(ih), ih.max(il));
            d2 += (x - ball.center[a]) * (x - ball.center[a]);
        }
        d2 < ball.radius * ball.radius
    }

    fn run(&mut self) -> Result<()> {
        if self.bvh.nodes.is_empty() {
            return Ok(());
        }
        let dim = self.bvh.dim;
        let mut cell = vec![0i64; dim];
        let mut stack = vec![0u32];
        while let Some(n) = stack.pop() {
            if self.node_misses_ball(n) {
                continue;
            }
            let (nlo, nhi) = (self.bvh.node_lo(n), self.bvh.node_hi(n));
            if self.single_cell(nlo, nhi, &mut cell) && self.node_inside_ball(n) {
                self.keys.push(&cell)?;
                continue;
            }
            match self.bvh.nodes[n as usize] {
                Node::Inner { left, right } => {
                    stack.push(right);
                    stack.push(left);
                }
                Node::Leaf { start, end } => {
                    for i in start..end {
                        let b = self.bvh.order[i as usize];
                        let lo = self.bvh.box_lo(self.coords, b);
                        let hi = self.bvh.box_hi(self.coords, b);
                        self.push_box(lo, hi, &mut cell)?;
                    }
                }
            }
        }
        Ok(())
    }

    fn push_box(&mut self, lo: &[f64], hi: &[f64], cell: &mut [i64]) -> Result<()> {
        let dim = lo.len();
        let mut first = vec![0i64; dim];
        let mut last = vec![0i64; dim];
        for a in 0..dim {
            first[a] = cell_lo(lo[a], self.eps);
            last[a] = cell_hi(hi[a], self.eps, first[a]);
        }
        cell.copy_from_slice(&first);
        loop {
            if self.box_meets_cell_in_ball(lo, hi, cell) {
                self.keys.push(cell)?;
            }
            let mut a = 0;
            loop {
                if a == dim {
                    return Ok(());
                }
                if cell[a] < last[a] {
                    cell[a] += 1;
                    break;
                }
                cell[a] = first[a];
                a += 1;
            }
        }
    }
}

fn check_indices(set: &BoxUnion, eps: f64) -> Result<()> {
    let (lo, hi) = set.bounding_box();
    let reach = lo.iter().chain(&hi).fold(0.0f64, |m, v| m.max(v.abs()));
    if reach / eps >= MAX_CELL_INDEX {
        return Err(Error::Domain(format!(
            "mesh size {eps:e} is too fine for coordinates of magnitude {reach:e}"
        )));
    }
    Ok(())
}

/// Number of cells of the mesh `eps * Z^N` (half-open cells) met by `set`,
/// optionally restricted to the part of `set` inside `ball`.
pub fn count_cells(set: &BoxUnion, eps: f64, ball: Option<&Ball>) -> Result<u64> {
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::Domain(format!("mesh size {eps} must be positive")));
    }
    if let Some(b) = ball {
        if b.center.len() != set.dim() {
            return Err(Error::DimensionMismatch(format!(
                "ball in R^{} for a set in R^{}",
                b.center.len(),
                set.dim()
            )));
        }
    }
    if set.is_empty() {
        return Ok(0);
    }
    check_indices(set, eps)?;
    let mut counter = Counter {
        coords: set.coords(),
        bvh: set.index(),
        eps,
        ball,
        keys: Keys::new(set, eps, false),
    };
    counter.run()?;
    Ok(counter.keys.distinct())
}

/// Sorted, distinct indices of the mesh cells met by `set`; cell `k` is
/// `prod_a [k_a eps, (k_a + 1) eps)`.
pub(crate) fn occupied_cells(set: &BoxUnion, eps: f64) -> Result<Vec<Vec<i64>>> {
    if set.is_empty() {
        return Ok(Vec::new());
    }
    check_indices(set, eps)?;
    let mut counter = Counter {
        coords: set.coords(),
        bvh: set.index(),
        eps,
        ball: None,
        keys: Keys::new(set, eps, true),
    };
    counter.run()?;
    counter.keys.compact();
    match counter.keys {
        Keys::Wide { keys } => Ok(keys),
        Keys::Packed { .. } => unreachable!("wide keys requested"),
    }
}

/// Box-counting estimate from a least-squares fit of `log N(eps)` against
/// `log(1/eps)`.
pub fn box_counting_dimension(
    set: &BoxUnion,
    scale_range: (f64, f64),
    scales_per_decade: usize,
) -> Result<DimensionEstimate> {
    if set.is_empty() {
        return Err(Error::Domain("box counting needs a nonempty set".into()));
    }
    estimate(set, None, scale_range, scales_per_decade)
}

/// As [`box_counting_dimension`] for the part of `set` inside `ball`. An
/// empty intersection yields [`DimensionEstimate::empty`].
pub fn box_counting_in_ball(
    set: &BoxUnion,
    ball: &Ball,
    scale_range: (f64, f64),
    scales_per_decade: usize,
) -> Result<DimensionEstimate> {
    if set.is_empty() || set.distance_sq(&ball.center) >= ball.radius * ball.radius {
        return Ok(DimensionEstimate::empty());
    }
    estimate(set, Some(ball), scale_range, scales_per_decade)
}

fn estimate(
    set: &BoxUnion,
    ball: Option<&Ball>,
    (eps_min, eps_max): (f64, f64),
    per_decade: usize,
) -> Result<DimensionEstimate> {
    if !(eps_min > 0.0 && eps_min < eps_max && eps_max.is_finite()) {
        return Err(Error::Domain(format!(
            "scale range ({eps_min}, {eps_max}) must satisfy 0 < min < max"
        )));
    }
    let all = geometric_scales(eps_min, eps_max, per_decade);
    let floor = set.resolution().unwrap_or(0.0);
    let (scales, excluded): (Vec<f64>, Vec<f64>) = all.into_iter().partition(|&e| e >= floor);
    if !excluded.is_empty() {
        debug!(
            "{} scales below resolution {floor:e} excluded from the fit",
            excluded.len()
        );
    }
    if scales.len() < 3 {
        return Err(Error::InsufficientScales {
            usable: scales.len(),
        });
    }
    set.index();
    let counts = scales
        .par_iter()
        .map(|&e| count_cells(set, e, ball))
        .collect::<Result<Vec<u64>>>()?;
    if counts.iter().all(|&c| c == 0) {
        return Ok(DimensionEstimate::empty());
    }
    let xs: Vec<f64> = scales.iter().map(|e| -e.ln()).collect();
    let ys: Vec<f64> = counts.iter().map(|&c| (c.max(1) as f64).ln()).collect();
    let fit = fit_line(&xs, &ys).ok_or(Error::InsufficientScales { usable: scales.len() })?;
    Ok(DimensionEstimate {
        slope: fit.slope,
        intercept: fit.intercept,
        scales_used: scales,
        counts,
        r_squared: fit.r_squared,
        saturated: !excluded.is_empty(),
        excluded_scales: excluded,
        empty: false,
    })
}
