//! Regular node grids over a box and fields sampled on them.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::distance::DomainBox;
use crate::{Error, Result};

/// Largest node count accepted for a single grid.
pub const MAX_NODES: usize = 1 << 27;

/// Nodes `lo + i h` for `i = 0..count` on every axis, boundary included.
/// Storage is row-major: the last axis varies fastest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    domain: DomainBox,
    counts: Vec<usize>,
}

impl Grid {
    pub fn new(domain: DomainBox, counts: Vec<usize>) -> Result<Self> {
        if counts.len() != domain.dim() {
            return Err(Error::DimensionMismatch(format!(
                "{} node counts for a domain in R^{}",
                counts.len(),
                domain.dim()
            )));
        }
        if let Some(a) = counts.iter().position(|&c| c < 3) {
            return Err(Error::Domain(format!("axis {a} has {} nodes; at least 3 required", counts[a])));
        }
        let total = counts
            .iter()
            .try_fold(1usize, |acc, &c| acc.checked_mul(c))
            .filter(|&t| t <= MAX_NODES)
            .ok_or_else(|| Error::Domain(format!("grid {counts:?} exceeds {MAX_NODES} nodes")))?;
        debug_assert!(total > 0);
        Ok(Grid { domain, counts })
    }

    /// `n` nodes on every axis.
    pub fn uniform(domain: DomainBox, n: usize) -> Result<Self> {
        let dim = domain.dim();
        Self::new(domain, vec![n; dim])
    }

    pub fn domain(&self) -> &DomainBox {
        &self.domain
    }

    pub fn dim(&self) -> usize {
        self.counts.len()
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    pub fn len(&self) -> usize {
        self.counts.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn spacing(&self, axis: usize) -> f64 {
        (self.domain.hi()[axis] - self.domain.lo()[axis]) / (self.counts[axis] - 1) as f64
    }

    pub fn spacings(&self) -> Vec<f64> {
        (0..self.dim()).map(|a| self.spacing(a)).collect()
    }

    /// Largest spacing over all axes.
    pub fn max_spacing(&self) -> f64 {
        (0..self.dim()).map(|a| self.spacing(a)).fold(0.0, f64::max)
    }

    pub fn strides(&self) -> Vec<usize> {
        let mut s = vec![1usize; self.dim()];
        for a in (0..self.dim().saturating_sub(1)).rev() {
            s[a] = s[a + 1] * self.counts[a + 1];
        }
        s
    }

    pub fn unravel(&self, mut idx: usize, out: &mut [usize]) {
        for a in (0..self.dim()).rev() {
            out[a] = idx % self.counts[a];
            idx /= self.counts[a];
        }
    }

    pub fn ravel(&self, multi: &[usize]) -> usize {
        multi.iter().zip(&self.counts).fold(0, |acc, (&i, &c)| acc * c + i)
    }

    /// Coordinates of node `idx`.
    pub fn point(&self, idx: usize, out: &mut [f64]) {
        let mut rest = idx;
        for a in (0..self.dim()).rev() {
            let i = rest % self.counts[a];
            rest /= self.counts[a];
            out[a] = self.coordinate(a, i);
        }
    }

    pub fn coordinate(&self, axis: usize, i: usize) -> f64 {
        let (lo, hi) = (self.domain.lo()[axis], self.domain.hi()[axis]);
        if i + 1 == self.counts[axis] {
            hi
        } else {
            lo + i as f64 * self.spacing(axis)
        }
    }

    pub fn is_boundary(&self, idx: usize) -> bool {
        let mut rest = idx;
        for a in (0..self.dim()).rev() {
            let i = rest % self.counts[a];
            rest /= self.counts[a];
            if i == 0 || i + 1 == self.counts[a] {
                return true;
            }
        }
        false
    }

    /// Number of nodes off the boundary.
    pub fn interior_len(&self) -> usize {
        self.counts.iter().map(|c| c - 2).product()
    }
}

/// How a right-hand side is turned into nodal values.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SamplingRule {
    /// Point value at the node. A node where the value is infinite takes the
    /// value half a cell further along the first axis.
    Node,
    /// Mean over `sub^N` midpoints of the cell centered at the node. Up to
    /// `depth` times, a cell whose estimate changes when split into `2^N`
    /// children is replaced by the refined average of those children.
    CellAverage { sub: usize, depth: u32 },
}

/// Relative change below which a refined cell average is accepted.
const REFINE_TOL: f64 = 1e-4;

/// Midpoint-rule mean over the cell `center +- width/2`.
fn midpoint(f: &(dyn Fn(&[f64]) -> f64 + Sync), center: &[f64], width: &[f64], sub: usize, y: &mut [f64]) -> f64 {
    let dim = center.len();
    let total = sub.pow(dim as u32);
    let mut s = 0.0;
    for k in 0..total {
        let mut r = k;
        for a in 0..dim {
            let j = r % sub;
            r /= sub;
            y[a] = center[a] + width[a] * ((j as f64 + 0.5) / sub as f64 - 0.5);
        }
        s += f(y);
    }
    s / total as f64
}

fn cell_average(f: &(dyn Fn(&[f64]) -> f64 + Sync), center: &[f64], width: &[f64], sub: usize, depth: u32, y: &mut [f64]) -> f64 {
    let est = midpoint(f, center, width, sub, y);
    refine(f, center, width, sub, depth, est, y)
}

/// Splits the cell into `2^N` children and recurses into them while their
/// combined estimate moves away from `est`.
fn refine(
    f: &(dyn Fn(&[f64]) -> f64 + Sync),
    center: &[f64],
    width: &[f64],
    sub: usize,
    depth: u32,
    est: f64,
    y: &mut [f64],
) -> f64 {
    if depth == 0 {
        return est;
    }
    let dim = center.len();
    let children = 1usize << dim;
    let half: Vec<f64> = width.iter().map(|w| 0.5 * w).collect();
    let mut centers = vec![0.0; children * dim];
    let mut ests = vec![0.0; children];
    for k in 0..children {
        let c = &mut centers[k * dim..(k + 1) * dim];
        for a in 0..dim {
            let side = if k >> a & 1 == 1 { 0.25 } else { -0.25 };
            c[a] = center[a] + side * width[a];
        }
        ests[k] = midpoint(f, c, &half, sub, y);
    }
    let fine = ests.iter().sum::<f64>() / children as f64;
    if (fine - est).abs() <= REFINE_TOL * fine.abs() {
        return fine;
    }
    let mut s = 0.0;
    for k in 0..children {
        let c = centers[k * dim..(k + 1) * dim].to_vec();
        s += refine(f, &c, &half, sub, depth - 1, ests[k], y);
    }
    s / children as f64
}

/// Values over the nodes of a grid; `+inf` allowed.
#[derive(Debug, Clone, PartialEq)]
pub struct GridField {
    grid: Grid,
    values: Vec<f64>,
}

impl GridField {
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} values for a grid of {} nodes",
                values.len(),
                grid.len()
            )));
        }
        Ok(GridField { grid, values })
    }

    pub fn zeros(grid: Grid) -> Self {
        let n = grid.len();
        GridField {
            grid,
            values: vec![0.0; n],
        }
    }

    /// `f` evaluated at every node.
    pub fn from_fn(grid: Grid, f: &(dyn Fn(&[f64]) -> f64 + Sync)) -> Self {
        let dim = grid.dim();
        let values = (0..grid.len())
            .into_par_iter()
            .map_init(
                || vec![0.0; dim],
                |x, i| {
                    grid.point(i, x);
                    f(x)
                },
            )
            .collect();
        GridField { grid, values }
    }

    /// Samples a right-hand side. Fails if a value stays non-finite after the
    /// sampling rule has been applied.
    pub fn sample(grid: Grid, f: &(dyn Fn(&[f64]) -> f64 + Sync), rule: SamplingRule) -> Result<Self> {
        let dim = grid.dim();
        let h = grid.spacings();
        let values: Vec<f64> = match rule {
            SamplingRule::Node => (0..grid.len())
                .into_par_iter()
                .map_init(
                    || vec![0.0; dim],
                    |x, i| {
                        grid.point(i, x);
                        let v = f(x);
                        if v.is_finite() {
                            v
                        } else {
                            x[0] += 0.5 * h[0];
                            f(x)
                        }
                    },
                )
                .collect(),
            SamplingRule::CellAverage { sub, depth } => {
                if sub == 0 {
                    return Err(Error::Input("cell averaging needs at least one point per axis".into()));
                }
                (0..grid.len())
                    .into_par_iter()
                    .map_init(
                        || (vec![0.0; dim], vec![0.0; dim]),
                        |(x, y), i| {
                            grid.point(i, x);
                            cell_average(f, x, &h, sub, depth, y)
                        },
                    )
                    .collect()
            }
        };
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            let mut x = vec![0.0; dim];
            grid.point(i, &mut x);
            return Err(Error::Domain(format!("right-hand side is not finite near node {x:?}")));
        }
        Ok(GridField { grid, values })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// `alpha * self + beta * other` on the same grid.
    pub fn combine(&self, alpha: f64, other: &GridField, beta: f64) -> Result<GridField> {
        if self.grid != other.grid {
            return Err(Error::DimensionMismatch("fields live on different grids".into()));
        }
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| alpha * a + beta * b)
            .collect();
        Ok(GridField {
            grid: self.grid.clone(),
            values,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn indexing_round_trips() {
        let g = Grid::new(DomainBox::new(vec![0.0, -1.0, 2.0], vec![1.0, 1.0, 3.0]).unwrap(), vec![3, 5, 4]).unwrap();
        let mut m = [0usize; 3];
        for i in 0..g.len() {
            g.unravel(i, &mut m);
            assert_eq!(g.ravel(&m), i);
        }
        assert_eq!(g.strides(), vec![20, 4, 1]);
        let mut x = [0.0; 3];
        g.point(g.ravel(&[1, 4, 3]), &mut x);
        assert_eq!(x, [0.5, 1.0, 3.0]);
        assert_eq!(g.interior_len(), 1 * 3 * 2);
        assert!(g.is_boundary(0) && !g.is_boundary(g.ravel(&[1, 1, 1])));
    }

    #[test]
    fn too_few_nodes_is_rejected() {
        assert!(Grid::uniform(DomainBox::unit(2), 2).is_err());
    }

    #[test]
    fn node_on_singularity_is_offset() {
        let g = Grid::uniform(DomainBox::new(vec![-1.0], vec![1.0]).unwrap(), 5).unwrap();
        let f = GridField::sample(g, &|x: &[f64]| 1.0 / x[0].abs(), SamplingRule::Node).unwrap();
        assert_eq!(f.values()[2], 4.0);
    }

    #[test]
    fn refined_cell_average_approaches_the_integral() {
        // mean of |x|^-1/2 over [-1/2, 1/2] is 2 sqrt 2
        let g = Grid::uniform(DomainBox::new(vec![-1.0], vec![1.0]).unwrap(), 3).unwrap();
        let f = |x: &[f64]| x[0].abs().powf(-0.5);
        let coarse = GridField::sample(g.clone(), &f, SamplingRule::CellAverage { sub: 4, depth: 0 }).unwrap();
        let fine = GridField::sample(g, &f, SamplingRule::CellAverage { sub: 4, depth: 20 }).unwrap();
        let exact = 2.0 * 2f64.sqrt();
        let (ec, ef) = ((coarse.values()[1] - exact).abs(), (fine.values()[1] - exact).abs());
        assert!(ef < 1e-2 * ec && ef < 1e-3, "{ec} {ef}");
    }

    #[test]
    fn cell_average_of_linear_function_is_exact() {
        let g = Grid::uniform(DomainBox::unit(2), 5).unwrap();
        let f = GridField::sample(g.clone(), &|x: &[f64]| 3.0 * x[0] - x[1], SamplingRule::CellAverage { sub: 4, depth: 3 }).unwrap();
        let mut x = [0.0; 2];
        for i in 0..g.len() {
            g.point(i, &mut x);
            assert!((f.values()[i] - (3.0 * x[0] - x[1])).abs() < 1e-14);
        }
    }
}
