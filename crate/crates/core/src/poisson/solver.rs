//! Matrix-free preconditioned conjugate gradients for the `(2N+1)`-point
//! Laplacian with zero Dirichlet data.

use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::grid::{Grid, GridField};
use crate::{Error, Result};

pub const DEFAULT_TOLERANCE: f64 = 1e-10;

/// Fixed chunk length for parallel loops; reductions sum chunk partials in
/// chunk order, so results do not depend on the thread count.
const CHUNK: usize = 4096;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    /// Relative residual `|b - A u| / |b|` at which iteration stops.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            tol: DEFAULT_TOLERANCE,
            max_iter: 20_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub iterations: usize,
    pub residual: f64,
    pub tolerance: f64,
    #[serde(skip)]
    pub wall_time: Duration,
    pub history: Vec<f64>,
}

struct Operator<'a> {
    strides: Vec<usize>,
    inv_h2: Vec<f64>,
    diag: f64,
    active: &'a [bool],
}

impl Operator<'_> {
    /// `out = A u` on active nodes, 0 elsewhere. `u` must vanish off the
    /// active set.
    fn apply(&self, u: &[f64], out: &mut [f64]) {
        out.par_chunks_mut(CHUNK).enumerate().for_each(|(c, chunk)| {
            let base = c * CHUNK;
            for (k, o) in chunk.iter_mut().enumerate() {
                let i = base + k;
                if !self.active[i] {
                    *o = 0.0;
                    continue;
                }
                let mut s = self.diag * u[i];
                for (&st, &w) in self.strides.iter().zip(&self.inv_h2) {
                    s -= w * (u[i - st] + u[i + st]);
                }
                *o = s;
            }
        });
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    let partials: Vec<f64> = a
        .par_chunks(CHUNK)
        .zip(b.par_chunks(CHUNK))
        .map(|(x, y)| x.iter().zip(y).map(|(p, q)| p * q).sum::<f64>())
        .collect();
    partials.iter().sum()
}

/// Solves `-Lap_h u = f` on the interior nodes with `u = 0` on the boundary.
pub fn solve_poisson(f: &GridField, config: &SolverConfig) -> Result<(GridField, SolveReport)> {
    let grid = f.grid();
    let active: Vec<bool> = (0..grid.len()).map(|i| !grid.is_boundary(i)).collect();
    solve_active(f, &active, config)
}

/// As [`solve_poisson`], with unknowns restricted to interior nodes where
/// `mask` is true; all other nodes are held at zero.
pub fn solve_poisson_masked(f: &GridField, mask: &[bool], config: &SolverConfig) -> Result<(GridField, SolveReport)> {
    let grid = f.grid();
    if mask.len() != grid.len() {
        return Err(Error::DimensionMismatch(format!(
            "mask of {} entries for {} nodes",
            mask.len(),
            grid.len()
        )));
    }
    let active: Vec<bool> = (0..grid.len()).map(|i| mask[i] && !grid.is_boundary(i)).collect();
    solve_active(f, &active, config)
}

fn solve_active(f: &GridField, active: &[bool], config: &SolverConfig) -> Result<(GridField, SolveReport)> {
    let start = Instant::now();
    let grid: &Grid = f.grid();
    if !active.iter().any(|&a| a) {
        return Err(Error::Domain("the grid has no interior unknowns".into()));
    }
    if !(config.tol > 0.0) {
        return Err(Error::Input(format!("tolerance {} must be positive", config.tol)));
    }
    let inv_h2: Vec<f64> = grid.spacings().iter().map(|h| 1.0 / (h * h)).collect();
    let op = Operator {
        strides: grid.strides(),
        diag: 2.0 * inv_h2.iter().sum::<f64>(),
        inv_h2,
        active,
    };
    let b: Vec<f64> = f
        .values()
        .iter()
        .zip(active)
        .map(|(&v, &a)| if a { v } else { 0.0 })
        .collect();
    if let Some(i) = b.iter().position(|v| !v.is_finite()) {
        return Err(Error::Domain(format!("right-hand side is not finite at node {i}")));
    }
    let n = b.len();
    let mut u = vec![0.0; n];
    let b_norm = dot(&b, &b).sqrt();
    let finish = |u: Vec<f64>, iterations: usize, residual: f64, history: Vec<f64>| {
        let report = SolveReport {
            iterations,
            residual,
            tolerance: config.tol,
            wall_time: start.elapsed(),
            history,
        };
        Ok((GridField::new(grid.clone(), u).expect("length matches"), report))
    };
    if b_norm == 0.0 {
        return finish(u, 0, 0.0, Vec::new());
    }
    let inv_diag = 1.0 / op.diag;
    let mut r = b;
    let mut z: Vec<f64> = r.iter().map(|v| v * inv_diag).collect();
    let mut p = z.clone();
    let mut ap = vec![0.0; n];
    let mut rz = dot(&r, &z);
    let mut history = Vec::new();
    let mut residual = 1.0;
    for it in 1..=config.max_iter {
        op.apply(&p, &mut ap);
        let pap = dot(&p, &ap);
        if !(pap > 0.0) {
            break;
        }
        let alpha = rz / pap;
        u.par_chunks_mut(CHUNK)
            .zip(r.par_chunks_mut(CHUNK))
            .zip(p.par_chunks(CHUNK).zip(ap.par_chunks(CHUNK)))
            .for_each(|((uc, rc), (pc, apc))| {
                for k in 0..uc.len() {
                    uc[k] += alpha * pc[k];
                    rc[k] -= alpha * apc[k];
                }
            });
        residual = dot(&r, &r).sqrt() / b_norm;
        history.push(residual);
        if residual <= config.tol {
            return finish(u, it, residual, history);
        }
        z.par_iter_mut().zip(r.par_iter()).for_each(|(zi, ri)| *zi = ri * inv_diag);
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        p.par_iter_mut().zip(z.par_iter()).for_each(|(pi, zi)| *pi = zi + beta * *pi);
    }
    Err(Error::NoConvergence {
        iterations: history.len(),
        residual,
        history,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distance::DomainBox;

    fn line(n: usize) -> Grid {
        Grid::uniform(DomainBox::unit(1), n).unwrap()
    }

    #[test]
    fn quadratic_is_reproduced_at_nodes() {
        let g = line(65);
        let f = GridField::from_fn(g.clone(), &|_| 2.0);
        let cfg = SolverConfig { tol: 1e-15, ..SolverConfig::default() };
        let (u, rep) = solve_poisson(&f, &cfg).unwrap();
        let mut x = [0.0];
        for i in 0..g.len() {
            g.point(i, &mut x);
            assert!((u.values()[i] - x[0] * (1.0 - x[0])).abs() < 1e-15, "node {i}");
        }
        assert!(rep.residual <= 1e-15);
    }

    #[test]
    fn zero_source_gives_zero() {
        let g = Grid::uniform(DomainBox::unit(2), 9).unwrap();
        let (u, rep) = solve_poisson(&GridField::zeros(g), &SolverConfig::default()).unwrap();
        assert_eq!(u.max_abs(), 0.0);
        assert_eq!(rep.iterations, 0);
    }

    #[test]
    fn manufactured_solution_converges_at_second_order() {
        use std::f64::consts::PI;
        let exact = |x: &[f64]| (PI * x[0]).sin() * (PI * x[1]).sin();
        let mut errs = Vec::new();
        for n in [17, 33, 65] {
            let g = Grid::uniform(DomainBox::unit(2), n).unwrap();
            let f = GridField::from_fn(g.clone(), &|x| 2.0 * PI * PI * exact(x));
            let (u, _) = solve_poisson(&f, &SolverConfig::default()).unwrap();
            let e = GridField::from_fn(g, &exact);
            errs.push(u.combine(1.0, &e, -1.0).unwrap().max_abs());
        }
        for w in errs.windows(2) {
            assert!((w[0] / w[1]).log2() >= 1.9, "{errs:?}");
        }
    }

    #[test]
    fn results_do_not_depend_on_thread_count() {
        let g = Grid::uniform(DomainBox::unit(3), 21).unwrap();
        let f = GridField::from_fn(g, &|x| 1.0 + x[0] * x[1] - x[2]);
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| solve_poisson(&f, &SolverConfig::default()).unwrap())
        };
        let (a, ra) = run(1);
        let (b, rb) = run(3);
        assert_eq!(a.values(), b.values());
        assert_eq!(ra.history, rb.history);
    }

    #[test]
    fn iteration_cap_reports_history() {
        let g = Grid::uniform(DomainBox::unit(2), 33).unwrap();
        let f = GridField::from_fn(g, &|_| 1.0);
        match solve_poisson(&f, &SolverConfig { tol: 1e-12, max_iter: 3 }) {
            Err(Error::NoConvergence { iterations, history, .. }) => {
                assert_eq!(iterations, 3);
                assert_eq!(history.len(), 3);
            }
            other => panic!("expected non-convergence, got {other:?}"),
        }
    }
}
