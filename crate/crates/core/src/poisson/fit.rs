//! Power-law fits `u ~ C1 d(x, A)^e - C2` with the offset found jointly.

use serde::{Deserialize, Serialize};

use super::grid::GridField;
use crate::fractal::BoxUnion;
use crate::regression::{fit_line, LineFit};
use crate::{Error, Result};

/// Fitted exponents below this count as power blow-up.
pub const DETECTION_THRESHOLD: f64 = -0.05;
/// Fits with `r^2` below this are flagged.
pub const MIN_CONFIDENCE: f64 = 0.8;
/// Smallest number of samples a fit accepts.
pub const MIN_SAMPLES: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExponentFit {
    pub exponent: f64,
    /// `C1`.
    pub amplitude: f64,
    /// `C2`.
    pub offset: f64,
    pub r_squared: f64,
    pub window: (f64, f64),
    pub samples: usize,
    pub low_confidence: bool,
}

impl ExponentFit {
    pub fn singular(&self) -> bool {
        self.exponent < DETECTION_THRESHOLD
    }
}

fn check_window(window: (f64, f64)) -> Result<()> {
    let (lo, hi) = window;
    if !(lo > 0.0 && hi > lo && hi.is_finite()) {
        return Err(Error::Domain(format!("degenerate fit window ({lo}, {hi})")));
    }
    Ok(())
}

fn fit_with_offset(log_rho: &[f64], u: &[f64], c2: f64) -> Option<LineFit> {
    let ys: Vec<f64> = u.iter().map(|v| (v + c2).ln()).collect();
    if ys.iter().any(|y| !y.is_finite()) {
        return None;
    }
    fit_line(log_rho, &ys)
}

/// Fits `log(u + C2)` against `log rho` over the samples whose `rho` lies in
/// `window`, choosing `C2 >= 0` (and `C2 > -min u`) to maximize `r^2`.
pub fn fit_power_law(samples: &[(f64, f64)], window: (f64, f64)) -> Result<ExponentFit> {
    check_window(window)?;
    let (rho, u): (Vec<f64>, Vec<f64>) = samples
        .iter()
        .copied()
        .filter(|&(r, v)| r >= window.0 && r <= window.1 && v.is_finite())
        .unzip();
    if rho.len() < MIN_SAMPLES {
        return Err(Error::InsufficientData(format!(
            "{} samples in window ({}, {}); at least {MIN_SAMPLES} required",
            rho.len(),
            window.0,
            window.1
        )));
    }
    let log_rho: Vec<f64> = rho.iter().map(|r| r.ln()).collect();
    if fit_line(&log_rho, &vec![0.0; rho.len()]).is_none() {
        return Err(Error::InsufficientData("all samples sit at one distance".into()));
    }
    let u_min = u.iter().copied().fold(f64::INFINITY, f64::min);
    let u_max = u.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let scale = u_max.abs().max(u_min.abs()).max(f64::MIN_POSITIVE);
    // C2 = c2_min + s with s >= 0; C2 is never negative
    let c2_min = (-u_min).max(0.0);
    let loss = |c2: f64| -> f64 {
        match fit_with_offset(&log_rho, &u, c2) {
            Some(f) => 1.0 - f.r_squared,
            None => f64::INFINITY,
        }
    };
    let (a, b) = ((scale * 1e-12).ln(), (scale * 1e8).ln());
    const STEPS: usize = 400;
    let grid: Vec<f64> = (0..=STEPS).map(|i| a + (b - a) * i as f64 / STEPS as f64).collect();
    let at = |log_s: f64| c2_min + log_s.exp();
    let mut best = 0;
    let mut best_loss = f64::INFINITY;
    for (i, &g) in grid.iter().enumerate() {
        let l = loss(at(g));
        if l < best_loss {
            best_loss = l;
            best = i;
        }
    }
    let (mut lo, mut hi) = (grid[best.saturating_sub(1)], grid[(best + 1).min(STEPS)]);
    let phi = 0.5 * (5f64.sqrt() - 1.0);
    let mut x1 = hi - phi * (hi - lo);
    let mut x2 = lo + phi * (hi - lo);
    let (mut f1, mut f2) = (loss(at(x1)), loss(at(x2)));
    for _ in 0..80 {
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - phi * (hi - lo);
            f1 = loss(at(x1));
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + phi * (hi - lo);
            f2 = loss(at(x2));
        }
    }
    let mut c2 = at(if f1 <= f2 { x1 } else { x2 });
    if loss(c2) > best_loss {
        c2 = at(grid[best]);
    }
    if u_min > 0.0 && loss(0.0) <= loss(c2) {
        c2 = 0.0;
    }
    let fit = fit_with_offset(&log_rho, &u, c2).ok_or_else(|| Error::Consistency("offset search left the domain of the logarithm".into()))?;
    Ok(ExponentFit {
        exponent: fit.slope,
        amplitude: fit.intercept.exp(),
        offset: c2,
        r_squared: fit.r_squared,
        window,
        samples: rho.len(),
        low_confidence: fit.r_squared < MIN_CONFIDENCE,
    })
}

/// Fits the nodal values of `u` against `d(x, A)` over interior nodes within
/// `2 rho_max` of `a` whose distance to `A` lies in `window`.
pub fn fit_singularity_order(u: &GridField, a: &[f64], set: &BoxUnion, window: (f64, f64)) -> Result<ExponentFit> {
    check_window(window)?;
    let grid = u.grid();
    if a.len() != grid.dim() || set.dim() != grid.dim() {
        return Err(Error::DimensionMismatch("point, set and grid must share a dimension".into()));
    }
    let min_usable = 2.0 * grid.max_spacing();
    if window.0 < min_usable * (1.0 - 1e-12) {
        return Err(Error::Unresolvable {
            requested: window.0,
            min_usable,
        });
    }
    let reach = 2.0 * window.1;
    let mut x = vec![0.0; grid.dim()];
    let mut samples = Vec::new();
    for i in 0..grid.len() {
        if grid.is_boundary(i) {
            continue;
        }
        grid.point(i, &mut x);
        let da: f64 = x.iter().zip(a).map(|(p, q)| (p - q) * (p - q)).sum::<f64>().sqrt();
        if da > reach {
            continue;
        }
        let d = set.distance_sq(&x).sqrt();
        if d >= window.0 && d <= window.1 {
            samples.push((d, u.values()[i]));
        }
    }
    fit_power_law(&samples, window)
}

/// Fits a callable along the `2N` coordinate rays from `a`, at `per_ray`
/// geometrically spaced radii in `window`, against `d(x, A)`.
pub fn fit_singularity_order_fn(
    u: &dyn Fn(&[f64]) -> f64,
    a: &[f64],
    set: &BoxUnion,
    window: (f64, f64),
    per_ray: usize,
) -> Result<ExponentFit> {
    check_window(window)?;
    if a.len() != set.dim() {
        return Err(Error::DimensionMismatch("point and set must share a dimension".into()));
    }
    let n = a.len();
    let mut samples = Vec::with_capacity(2 * n * per_ray);
    let mut x = a.to_vec();
    let ratio = (window.1 / window.0).ln();
    for axis in 0..n {
        for sign in [-1.0, 1.0] {
            for i in 0..per_ray {
                let t = if per_ray > 1 { i as f64 / (per_ray - 1) as f64 } else { 0.0 };
                let rho = window.0 * (ratio * t).exp();
                x.copy_from_slice(a);
                x[axis] += sign * rho;
                let d = set.distance_sq(&x).sqrt();
                samples.push((d, u(&x)));
            }
        }
    }
    fit_power_law(&samples, window)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distance::DomainBox;
    use crate::poisson::grid::Grid;
    use crate::poisson::radial::radial_solution;

    fn geometric(lo: f64, hi: f64, n: usize) -> Vec<f64> {
        (0..n).map(|i| lo * (hi / lo).powf(i as f64 / (n - 1) as f64)).collect()
    }

    #[test]
    fn closed_form_samples_give_the_order() {
        for gamma in [2.1, 2.25, 2.5] {
            let s = radial_solution(5, gamma, 1.0, 1.0).unwrap();
            let samples: Vec<(f64, f64)> = geometric(1e-3, 1e-1, 64).into_iter().map(|r| (r, s.eval(r))).collect();
            let fit = fit_power_law(&samples, (1e-3, 1e-1)).unwrap();
            assert!((fit.exponent + (gamma - 2.0)).abs() < 1e-3, "gamma {gamma}: {fit:?}");
            assert!((fit.offset - s.c2).abs() < 1e-3 * s.c2);
            assert!(fit.singular() && !fit.low_confidence);
        }
    }

    #[test]
    fn pure_power_needs_no_offset() {
        let samples: Vec<(f64, f64)> = geometric(1e-2, 1.0, 32).into_iter().map(|r| (r, 3.0 * r.powf(-2.5))).collect();
        let fit = fit_power_law(&samples, (1e-2, 1.0)).unwrap();
        assert!((fit.exponent + 2.5).abs() < 1e-6, "{fit:?}");
    }

    #[test]
    fn bounded_function_is_not_singular() {
        let a = [0.3, 0.4];
        let u = |x: &[f64]| 1.0 + 0.2 * x[0] - 0.1 * x[1] * x[1] + (3.0 * x[0]).sin() * 0.05;
        let fit = fit_singularity_order_fn(&u, &a, &BoxUnion::point(&a), (1e-3, 1e-1), 16).unwrap();
        assert!(fit.exponent >= -0.05 && !fit.singular(), "{fit:?}");
    }

    #[test]
    fn too_few_samples() {
        let samples = vec![(0.1, 1.0), (0.2, 2.0)];
        assert!(matches!(fit_power_law(&samples, (0.05, 0.5)), Err(Error::InsufficientData(_))));
    }

    #[test]
    fn grid_window_must_be_resolvable() {
        let g = Grid::uniform(DomainBox::unit(2), 11).unwrap();
        let u = GridField::zeros(g);
        let a = [0.5, 0.5];
        match fit_singularity_order(&u, &a, &BoxUnion::point(&a), (0.1, 0.4)) {
            Err(Error::Unresolvable { min_usable, .. }) => assert!((min_usable - 0.2).abs() < 1e-12),
            other => panic!("{other:?}"),
        }
    }
}
