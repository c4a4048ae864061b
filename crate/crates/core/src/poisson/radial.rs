//! Closed-form radial solutions of `-Lap v = C |x|^-g` in a ball.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// `u(rho) = c1 rho^-(g-2) - c2` on `(0, r]`, vanishing at `rho = r`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RadialSolution {
    pub ambient: usize,
    pub gamma: f64,
    pub amplitude: f64,
    pub radius: f64,
    pub c1: f64,
    pub c2: f64,
}

/// `c1 = C / ((g - 2)(N - g))`, `c2 = c1 r^-(g-2)`.
pub fn radial_solution(ambient: usize, gamma: f64, amplitude: f64, radius: f64) -> Result<RadialSolution> {
    if ambient < 3 {
        return Err(Error::Domain(format!("ambient dimension {ambient} < 3")));
    }
    if !(amplitude > 0.0 && radius > 0.0) {
        return Err(Error::Domain(format!(
            "amplitude {amplitude} and radius {radius} must be positive"
        )));
    }
    let n = ambient as f64;
    if !(gamma > 2.0) {
        return Err(Error::Window(format!(
            "gamma = {gamma} violates 2 < gamma: (gamma - 2) in the denominator of c1 is not positive"
        )));
    }
    if !(gamma < n) {
        return Err(Error::Window(format!(
            "gamma = {gamma} violates gamma < N = {ambient}: (N - gamma) in the denominator of c1 is not positive"
        )));
    }
    let c1 = amplitude / ((gamma - 2.0) * (n - gamma));
    Ok(RadialSolution {
        ambient,
        gamma,
        amplitude,
        radius,
        c1,
        c2: c1 * radius.powf(2.0 - gamma),
    })
}

impl RadialSolution {
    /// `g - 2`.
    pub fn order(&self) -> f64 {
        self.gamma - 2.0
    }

    pub fn eval(&self, rho: f64) -> f64 {
        self.c1 * rho.powf(2.0 - self.gamma) - self.c2
    }

    pub fn source(&self, rho: f64) -> f64 {
        self.amplitude * rho.powf(-self.gamma)
    }

    /// Largest `|-(v'' + (N-1) v' / rho) - C rho^-g|` over `rho = rho_lo + i h`
    /// in `[rho_lo, r - h]`, with centered differences of step `h`.
    pub fn fd_residual(&self, h: f64, rho_lo: f64) -> Result<f64> {
        if !(h > 0.0 && rho_lo > h && rho_lo + h < self.radius) {
            return Err(Error::Domain(format!(
                "step {h} and start {rho_lo} do not fit in (0, {})",
                self.radius
            )));
        }
        let nm1 = (self.ambient - 1) as f64;
        let mut worst: f64 = 0.0;
        let mut i = 0usize;
        loop {
            let rho = rho_lo + i as f64 * h;
            if rho > self.radius - h {
                break;
            }
            let (um, u0, up) = (self.eval(rho - h), self.eval(rho), self.eval(rho + h));
            let lap = (up - 2.0 * u0 + um) / (h * h) + nm1 / rho * (up - um) / (2.0 * h);
            worst = worst.max((-lap - self.source(rho)).abs());
            i += 1;
        }
        Ok(worst)
    }
}

/// Cell-centered profile of a radial solve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadialProfile {
    pub rho: Vec<f64>,
    pub u: Vec<f64>,
}

/// Finite-volume solve of `-(rho^(N-1) u')' = C rho^(N-1-g)` on `(0, r)`
/// with `u(r) = 0` and no flux through the origin, on `cells` uniform
/// cells. Source integrals over each cell are exact; face fluxes use
/// differences of neighboring cell values.
pub fn radial_fv_solve(ambient: usize, gamma: f64, amplitude: f64, radius: f64, cells: usize) -> Result<RadialProfile> {
    let n = ambient as f64;
    if ambient < 1 || cells < 2 || !(radius > 0.0) || !(amplitude > 0.0) {
        return Err(Error::Domain("radial solve needs N >= 1, two cells, positive radius and amplitude".into()));
    }
    if !(gamma < n) {
        return Err(Error::Window(format!(
            "gamma = {gamma} violates gamma < N = {ambient}: the source is not integrable at the origin"
        )));
    }
    let dr = radius / cells as f64;
    let face = |i: usize| i as f64 * dr;
    // outward flux through face i equals the source mass inside it
    let flux = |i: usize| amplitude * face(i).powf(n - gamma) / (n - gamma);
    let mut u = vec![0.0; cells];
    u[cells - 1] = flux(cells) * (0.5 * dr) / radius.powf(n - 1.0);
    for i in (1..cells).rev() {
        u[i - 1] = u[i] + flux(i) * dr / face(i).powf(n - 1.0);
    }
    let rho = (0..cells).map(|i| (i as f64 + 0.5) * dr).collect();
    Ok(RadialProfile { rho, u })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constants_for_n5() {
        let s = radial_solution(5, 2.25, 1.0, 1.0).unwrap();
        assert!((s.c1 - 1.0 / (0.25 * 2.75)).abs() < 1e-15);
        assert_eq!(s.c2, s.c1);
        assert_eq!(s.eval(1.0), 0.0);
        let s = radial_solution(5, 2.5, 2.0, 0.5).unwrap();
        assert!(s.eval(0.5).abs() < 1e-15);
    }

    #[test]
    fn window_errors_name_the_inequality() {
        match radial_solution(5, 2.0, 1.0, 1.0) {
            Err(Error::Window(m)) => assert!(m.contains("2 < gamma")),
            other => panic!("{other:?}"),
        }
        match radial_solution(5, 5.0, 1.0, 1.0) {
            Err(Error::Window(m)) => assert!(m.contains("gamma < N")),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn residual_is_second_order() {
        let s = radial_solution(5, 2.25, 1.0, 1.0).unwrap();
        let r1 = s.fd_residual(1e-2, 0.1).unwrap();
        let r2 = s.fd_residual(5e-3, 0.1).unwrap();
        let r3 = s.fd_residual(2.5e-3, 0.1).unwrap();
        for (a, b) in [(r1, r2), (r2, r3)] {
            let order = (a / b).log2();
            assert!((order - 2.0).abs() < 0.2, "order {order}");
        }
    }

    #[test]
    fn finite_volume_profile_tracks_closed_form() {
        let s = radial_solution(5, 2.5, 1.0, 1.0).unwrap();
        let p = radial_fv_solve(5, 2.5, 1.0, 1.0, 1 << 14).unwrap();
        for (rho, u) in p.rho.iter().zip(&p.u) {
            if *rho > 1e-2 {
                assert!((u - s.eval(*rho)).abs() <= 1e-3 * s.eval(*rho).abs().max(1.0), "rho {rho}");
            }
        }
    }
}
