//! Monte Carlo integrals of functions of `d(x, A)` over distance shells.
//!
//! Thin shells are sampled from a cover of the set: the mesh cells of size
//! `2 delta` that meet `A`, each grown by `delta` on every side. Every point
//! within `delta` of `A` lies in some grown cell, and a draw is weighted by the
//! inverse of the proposal density, which counts how many grown cells contain
//! it. Thick shells fall back to uniform draws over the domain.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::DomainBox;
use crate::fractal::{occupied_cells, BoxUnion};
use crate::rng::{block_rng, BLOCK};
use crate::{Error, Result};

/// Monte Carlo estimate over `{x in Omega : inner <= d(x, A) < outer}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShellIntegral {
    pub inner: f64,
    pub outer: f64,
    pub volume: f64,
    pub volume_se: f64,
    pub integral: f64,
    pub integral_se: f64,
    pub draws: u64,
    pub accepted: u64,
}

#[derive(Default, Clone, Copy)]
struct Sums {
    f: f64,
    f2: f64,
    v: f64,
    v2: f64,
    accepted: u64,
}

impl Sums {
    fn add(&mut self, o: &Sums) {
        self.f += o.f;
        self.f2 += o.f2;
        self.v += o.v;
        self.v2 += o.v2;
        self.accepted += o.accepted;
    }
}

struct Cover {
    h: f64,
    delta: f64,
    cells: Vec<Vec<i64>>,
}

impl Cover {
    fn new(set: &BoxUnion, delta: f64) -> Result<Self> {
        let h = 2.0 * delta;
        Ok(Cover {
            h,
            delta,
            cells: occupied_cells(set, h)?,
        })
    }

    fn support_volume(&self, n: usize) -> f64 {
        self.cells.len() as f64 * (4.0 * self.delta).powi(n as i32)
    }

    fn draw<R: Rng>(&self, rng: &mut R, x: &mut [f64]) {
        let cell = &self.cells[rng.random_range(0..self.cells.len())];
        for (a, v) in x.iter_mut().enumerate() {
            *v = cell[a] as f64 * self.h - self.delta + 4.0 * self.delta * rng.random::<f64>();
        }
    }

    /// Number of grown cells containing `x`; per axis exactly two cell
    /// indices can qualify.
    fn multiplicity(&self, x: &[f64], key: &mut [i64]) -> usize {
        let n = x.len();
        let mut m = 0;
        for mask in 0..(1usize << n) {
            let mut inside = true;
            for a in 0..n {
                let k = (x[a] / self.h + 0.5).floor() as i64 - (mask >> a & 1) as i64;
                let lo = k as f64 * self.h - self.delta;
                let hi = lo + 4.0 * self.delta;
                if !(lo <= x[a] && x[a] < hi) {
                    inside = false;
                    break;
                }
                key[a] = k;
            }
            if inside && self.cells.binary_search_by(|c| c.as_slice().cmp(key)).is_ok() {
                m += 1;
            }
        }
        m
    }
}

fn run_blocks<F>(draws: u64, seed: u64, block: F) -> Sums
where
    F: Fn(&mut rand_chacha::ChaCha8Rng, u64) -> Sums + Sync,
{
    let blocks = draws.div_ceil(BLOCK);
    let parts: Vec<Sums> = (0..blocks)
        .into_par_iter()
        .map(|b| {
            let n = BLOCK.min(draws - b * BLOCK);
            block(&mut block_rng(seed, b), n)
        })
        .collect();
    let mut total = Sums::default();
    for p in &parts {
        total.add(p);
    }
    total
}

fn mean_and_se(sum: f64, sum2: f64, n: u64) -> (f64, f64) {
    let nf = n as f64;
    let mean = sum / nf;
    let var = if n > 1 {
        ((sum2 / nf - mean * mean) * nf / (nf - 1.0)).max(0.0)
    } else {
        0.0
    };
    (mean, (var / nf).sqrt())
}

/// Estimates `int f(d(x, A)) dx` and the volume over the shell
/// `inner <= d < outer` (an infinite `outer` gives the far region).
pub fn shell_integral(
    set: &BoxUnion,
    omega: &DomainBox,
    inner: f64,
    outer: f64,
    f: &(dyn Fn(f64) -> f64 + Sync),
    draws: u64,
    seed: u64,
) -> Result<ShellIntegral> {
    if set.is_empty() || set.dim() != omega.dim() {
        return Err(Error::DimensionMismatch(format!(
            "set in R^{} ({} boxes) and domain in R^{}",
            set.dim(),
            set.len(),
            omega.dim()
        )));
    }
    if !(inner >= 0.0 && outer > inner) || draws == 0 {
        return Err(Error::Domain(format!(
            "shell [{inner}, {outer}) with {draws} draws"
        )));
    }
    let n = omega.dim();
    set.index();
    let cover = if outer.is_finite() {
        let c = Cover::new(set, outer)?;
        (c.support_volume(n) < omega.volume()).then_some(c)
    } else {
        None
    };
    let accept = |x: &[f64]| -> Option<f64> {
        if !omega.contains_closed(x) {
            return None;
        }
        let d = set.distance_sq(x).sqrt();
        (inner <= d && d < outer).then_some(d)
    };
    let sums = match &cover {
        Some(cover) => {
            let scale = cover.support_volume(n);
            run_blocks(draws, seed, |rng, count| {
                let mut s = Sums::default();
                let mut x = vec![0.0; n];
                let mut key = vec![0i64; n];
                for _ in 0..count {
                    cover.draw(rng, &mut x);
                    if let Some(d) = accept(&x) {
                        let m = cover.multiplicity(&x, &mut key).max(1);
                        let w = scale / m as f64;
                        let wf = w * f(d);
                        s.f += wf;
                        s.f2 += wf * wf;
                        s.v += w;
                        s.v2 += w * w;
                        s.accepted += 1;
                    }
                }
                s
            })
        }
        None => {
            let w = omega.volume();
            run_blocks(draws, seed, |rng, count| {
                let mut s = Sums::default();
                let mut x = vec![0.0; n];
                for _ in 0..count {
                    omega.sample_into(rng, &mut x);
                    if let Some(d) = accept(&x) {
                        let wf = w * f(d);
                        s.f += wf;
                        s.f2 += wf * wf;
                        s.v += w;
                        s.v2 += w * w;
                        s.accepted += 1;
                    }
                }
                s
            })
        }
    };
    let (integral, integral_se) = mean_and_se(sums.f, sums.f2, draws);
    let (volume, volume_se) = mean_and_se(sums.v, sums.v2, draws);
    Ok(ShellIntegral {
        inner,
        outer,
        volume,
        volume_se,
        integral,
        integral_se,
        draws,
        accepted: sums.accepted,
    })
}

/// Integral over `{x in Omega : d(x, A) >= threshold}` from uniform draws.
pub fn far_region_integral(
    set: &BoxUnion,
    omega: &DomainBox,
    threshold: f64,
    f: &(dyn Fn(f64) -> f64 + Sync),
    draws: u64,
    seed: u64,
) -> Result<ShellIntegral> {
    shell_integral(set, omega, threshold, f64::INFINITY, f, draws, seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fractal::cantor_for_dimension;

    #[test]
    fn interval_shell_in_one_dimension() {
        let omega = DomainBox::new(vec![-1.0], vec![1.0]).unwrap();
        let a = BoxUnion::point(&[0.0]);
        // int_{1/16 <= |x| < 1/8} |x|^(-1/2) dx = 4 (8^(-1/2) - 16^(-1/2))
        let exact = 4.0 * (0.125f64.sqrt() - 0.0625f64.sqrt());
        let s = shell_integral(&a, &omega, 0.0625, 0.125, &|d| d.powf(-0.5), 40_000, 5).unwrap();
        assert!((s.volume - 0.125).abs() < 4.0 * s.volume_se.max(1e-12), "{s:?}");
        assert!((s.integral - exact).abs() < 4.0 * s.integral_se.max(1e-12), "{s:?}");
    }

    #[test]
    fn cover_and_uniform_draws_agree() {
        let omega = DomainBox::unit(2);
        let c = cantor_for_dimension(0.5, 8).unwrap().to_union();
        let a = c.map_boxes(2, |l, h, out| {
            out.extend_from_slice(&[0.25 + 0.5 * l[0], 0.5, 0.25 + 0.5 * h[0], 0.5]);
        });
        let f = |d: f64| d.powf(-0.5);
        let thin = shell_integral(&a, &omega, 1.0 / 128.0, 1.0 / 64.0, &f, 200_000, 1).unwrap();
        // uniform draws for the same shell: the far-region routine with a cap
        let total = far_region_integral(&a, &omega, 1.0 / 128.0, &f, 400_000, 2).unwrap();
        let outside = far_region_integral(&a, &omega, 1.0 / 64.0, &f, 400_000, 2).unwrap();
        let uniform = total.integral - outside.integral;
        let se = thin.integral_se + total.integral_se + outside.integral_se;
        assert!((thin.integral - uniform).abs() < 4.0 * se, "{} vs {uniform}", thin.integral);
    }

    #[test]
    fn multiplicity_counts_grown_cells() {
        let a = BoxUnion::point(&[0.5, 0.5]);
        let cover = Cover::new(&a, 0.1).unwrap();
        assert_eq!(cover.cells.len(), 1);
        let mut key = vec![0; 2];
        assert_eq!(cover.multiplicity(&[0.5, 0.5], &mut key), 1);
        assert_eq!(cover.multiplicity(&[0.9, 0.5], &mut key), 0);
    }

    #[test]
    fn results_do_not_depend_on_thread_count() {
        let omega = DomainBox::unit(2);
        let a = BoxUnion::single(vec![0.4, 0.4], vec![0.6, 0.4]).unwrap();
        let f = |d: f64| d.powf(-1.0);
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| shell_integral(&a, &omega, 0.01, 0.02, &f, 50_000, 9).unwrap())
        };
        assert_eq!(run(1), run(3));
    }
}
