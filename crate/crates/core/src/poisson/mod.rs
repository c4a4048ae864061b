//! `-Lap u = F` with zero Dirichlet data: closed radial forms, grid solves,
//! comparison checks, singularity-order fits and smoothness probes.

mod fit;
mod grid;
mod radial;
mod solver;

use serde::{Deserialize, Serialize};

use crate::distance::DomainBox;
use crate::fractal::BoxUnion;
use crate::{Error, Result};

pub use fit::{
    fit_power_law, fit_singularity_order, fit_singularity_order_fn, ExponentFit, DETECTION_THRESHOLD,
    MIN_CONFIDENCE, MIN_SAMPLES,
};
pub use grid::{Grid, GridField, SamplingRule, MAX_NODES};
pub use radial::{radial_fv_solve, radial_solution, RadialProfile, RadialSolution};
pub use solver::{solve_poisson, solve_poisson_masked, SolveReport, SolverConfig, DEFAULT_TOLERANCE};

/// Outcome of solving two ordered problems.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    /// `max (u1 - u2)` over all nodes.
    pub max_violation: f64,
    /// `10 * tol`.
    pub slack: f64,
    pub holds: bool,
    pub reports: [SolveReport; 2],
}

/// Solves `-Lap u_i = F_i` for `F1 <= F2` and compares the solutions.
pub fn discrete_comparison(f1: &GridField, f2: &GridField, config: &SolverConfig) -> Result<ComparisonReport> {
    if f1.grid() != f2.grid() {
        return Err(Error::DimensionMismatch("right-hand sides live on different grids".into()));
    }
    let grid = f1.grid();
    let offending: Vec<usize> = (0..grid.len())
        .filter(|&i| !grid.is_boundary(i) && !(f1.values()[i] <= f2.values()[i]))
        .collect();
    if !offending.is_empty() {
        let shown: Vec<String> = offending.iter().take(10).map(|i| i.to_string()).collect();
        return Err(Error::Input(format!(
            "F1 > F2 at {} interior nodes (first: {})",
            offending.len(),
            shown.join(", ")
        )));
    }
    let (u1, r1) = solve_poisson(f1, config)?;
    let (u2, r2) = solve_poisson(f2, config)?;
    let max_violation = u1
        .values()
        .iter()
        .zip(u2.values())
        .map(|(a, b)| a - b)
        .fold(f64::NEG_INFINITY, f64::max);
    let slack = 10.0 * config.tol;
    Ok(ComparisonReport {
        max_violation,
        slack,
        holds: max_violation <= slack,
        reports: [r1, r2],
    })
}

/// Largest centered second difference per step size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmoothnessReport {
    /// Steps, coarse to fine.
    pub steps: Vec<f64>,
    pub max_second_difference: Vec<f64>,
    /// `max[i + 1] / max[i]`.
    pub ratios: Vec<f64>,
    pub smooth: bool,
}

/// Successive maxima may grow by at most this factor for a smooth verdict.
pub const SMOOTH_RATIO: f64 = 1.2;

/// Centered second differences `(u(x + s e) - 2u(x) + u(x - s e)) / s^2` over
/// nodes in `region`, for every step `s` (a multiple of the spacing) and
/// axis. `region` must stay at distance at least `delta` from `A`.
pub fn smoothness_probe(
    u: &GridField,
    region: &DomainBox,
    steps: &[f64],
    set: Option<&BoxUnion>,
    delta: f64,
) -> Result<SmoothnessReport> {
    let grid = u.grid();
    let n = grid.dim();
    if region.dim() != n {
        return Err(Error::DimensionMismatch("region and grid differ in dimension".into()));
    }
    if let Some(a) = set {
        if !a.is_empty() {
            let d = a.distance_to_box(region.lo(), region.hi());
            if d < delta {
                return Err(Error::Input(format!(
                    "region is at distance {d} from the singular set, inside the {delta}-neighbourhood"
                )));
            }
        }
    }
    if steps.is_empty() {
        return Err(Error::Input("no step sizes given".into()));
    }
    let h = grid.spacings();
    let mut multiples = Vec::with_capacity(steps.len());
    for &s in steps {
        let m: Vec<usize> = h.iter().map(|hh| (s / hh).round() as usize).collect();
        if m.iter().zip(&h).any(|(&k, hh)| k == 0 || (k as f64 * hh - s).abs() > 1e-9 * s) {
            return Err(Error::Input(format!("step {s} is not a multiple of the grid spacing {h:?}")));
        }
        multiples.push((s, m));
    }
    multiples.sort_by(|a, b| b.0.total_cmp(&a.0));
    let strides = grid.strides();
    let mut multi = vec![0usize; n];
    let mut x = vec![0.0; n];
    let mut maxima = Vec::with_capacity(multiples.len());
    for (s, m) in &multiples {
        let mut best: f64 = 0.0;
        let mut any = false;
        for i in 0..grid.len() {
            grid.point(i, &mut x);
            if !region.contains_closed(&x) {
                continue;
            }
            grid.unravel(i, &mut multi);
            for a in 0..n {
                if multi[a] < m[a] || multi[a] + m[a] >= grid.counts()[a] {
                    continue;
                }
                let off = m[a] * strides[a];
                let v = u.values();
                let d2 = (v[i + off] - 2.0 * v[i] + v[i - off]) / (s * s);
                best = best.max(d2.abs());
                any = true;
            }
        }
        if !any {
            return Err(Error::InsufficientData(format!("no node in the region admits step {s}")));
        }
        maxima.push(best);
    }
    let ratios: Vec<f64> = maxima
        .windows(2)
        .map(|w| if w[0] > 0.0 { w[1] / w[0] } else if w[1] > 0.0 { f64::INFINITY } else { 1.0 })
        .collect();
    let smooth = maxima.iter().all(|m| m.is_finite()) && ratios.iter().all(|&r| r <= SMOOTH_RATIO);
    Ok(SmoothnessReport {
        steps: multiples.into_iter().map(|(s, _)| s).collect(),
        max_second_difference: maxima,
        ratios,
        smooth,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    fn cfg() -> SolverConfig {
        SolverConfig::default()
    }

    #[test]
    fn identical_problems_do_not_separate() {
        let g = Grid::uniform(DomainBox::unit(2), 17).unwrap();
        let f = GridField::from_fn(g, &|x| x[0] + 2.0 * x[1]);
        let r = discrete_comparison(&f, &f, &cfg()).unwrap();
        assert_eq!(r.max_violation, 0.0);
        assert!(r.holds);
    }

    #[test]
    fn zero_below_one_gives_positive_solution() {
        let g = Grid::uniform(DomainBox::unit(2), 17).unwrap();
        let f1 = GridField::zeros(g.clone());
        let f2 = GridField::from_fn(g.clone(), &|_| 1.0);
        let r = discrete_comparison(&f1, &f2, &cfg()).unwrap();
        assert!(r.holds);
        let (u2, _) = solve_poisson(&f2, &cfg()).unwrap();
        for i in 0..g.len() {
            if !g.is_boundary(i) {
                assert!(u2.values()[i] > 0.0);
            }
        }
    }

    /// Dense Gaussian elimination on the 1-D stencil.
    fn direct_1d(f: &[f64], h: f64) -> Vec<f64> {
        let n = f.len() - 2;
        let mut a = vec![vec![0.0; n + 1]; n];
        for i in 0..n {
            a[i][i] = 2.0 / (h * h);
            if i > 0 {
                a[i][i - 1] = -1.0 / (h * h);
            }
            if i + 1 < n {
                a[i][i + 1] = -1.0 / (h * h);
            }
            a[i][n] = f[i + 1];
        }
        for c in 0..n {
            for r in c + 1..n {
                let m = a[r][c] / a[c][c];
                for k in c..=n {
                    a[r][k] -= m * a[c][k];
                }
            }
        }
        let mut x = vec![0.0; n];
        for r in (0..n).rev() {
            let s: f64 = (r + 1..n).map(|k| a[r][k] * x[k]).sum();
            x[r] = (a[r][n] - s) / a[r][r];
        }
        let mut u = vec![0.0];
        u.extend(x);
        u.push(0.0);
        u
    }

    #[test]
    fn spike_raises_the_solution_everywhere() {
        let g = Grid::uniform(DomainBox::unit(1), 9).unwrap();
        let f1 = GridField::from_fn(g.clone(), &|x| (5.0 * x[0]).sin());
        let mut f2 = f1.clone();
        f2.values_mut()[3] += 10.0;
        let r = discrete_comparison(&f1, &f2, &cfg()).unwrap();
        assert!(r.holds);
        let (u1, _) = solve_poisson(&f1, &cfg()).unwrap();
        let (u2, _) = solve_poisson(&f2, &cfg()).unwrap();
        let d1 = direct_1d(f1.values(), 0.125);
        let d2 = direct_1d(f2.values(), 0.125);
        for i in 0..9 {
            assert!((u1.values()[i] - d1[i]).abs() < 1e-9);
            assert!((u2.values()[i] - d2[i]).abs() < 1e-9);
            assert!(d2[i] >= d1[i]);
        }
    }

    #[test]
    fn unordered_sources_are_rejected() {
        let g = Grid::uniform(DomainBox::unit(1), 9).unwrap();
        let f1 = GridField::from_fn(g.clone(), &|_| 1.0);
        let f2 = GridField::zeros(g);
        match discrete_comparison(&f1, &f2, &cfg()) {
            Err(Error::Input(m)) => assert!(m.contains("7 interior nodes")),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn random_ordered_pairs_compare() {
        let g = Grid::uniform(DomainBox::unit(2), 33).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(8);
        for _ in 0..5 {
            let v1: Vec<f64> = (0..g.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
            let v2: Vec<f64> = v1.iter().map(|v| v + rng.random_range(0.0..1.0)).collect();
            let f1 = GridField::new(g.clone(), v1).unwrap();
            let f2 = GridField::new(g.clone(), v2).unwrap();
            let r = discrete_comparison(&f1, &f2, &cfg()).unwrap();
            assert!(r.max_violation <= 1e-9, "{}", r.max_violation);
        }
    }

    #[test]
    fn radial_source_on_a_ball_matches_closed_form() {
        let n = 65;
        let g = Grid::uniform(DomainBox::new(vec![-1.0; 3], vec![1.0; 3]).unwrap(), n).unwrap();
        let h = g.spacing(0);
        let gamma = 2.5;
        let exact = radial_solution(3, gamma, 1.0, 1.0).unwrap();
        let rho = |x: &[f64]| x.iter().map(|v| v * v).sum::<f64>().sqrt();
        let f = GridField::sample(g.clone(), &|x| rho(x).powf(-gamma), SamplingRule::CellAverage { sub: 2, depth: 10 }).unwrap();
        let mask: Vec<bool> = (0..g.len())
            .map(|i| {
                let mut x = [0.0; 3];
                g.point(i, &mut x);
                rho(&x) < 1.0
            })
            .collect();
        let (u, _) = solve_poisson_masked(&f, &mask, &cfg()).unwrap();
        let mut x = [0.0; 3];
        let mut worst: f64 = 0.0;
        for i in 0..g.len() {
            g.point(i, &mut x);
            let r = rho(&x);
            if r >= 10.0 * h && r <= 0.5 {
                let e = exact.eval(r);
                worst = worst.max((u.values()[i] - e).abs() / e);
            }
        }
        assert!(worst < 0.05, "relative error {worst}");
        let fit = fit_singularity_order(&u, &[0.0; 3], &BoxUnion::point(&[0.0; 3]), (2.0 * h, 0.5)).unwrap();
        assert!((fit.exponent + 0.5).abs() < 0.1, "{fit:?}");
    }

    #[test]
    fn regularizing_shift_is_two() {
        for gamma in [2.1, 2.25, 2.5] {
            let p = radial_fv_solve(5, gamma, 1.0, 1.0, 1 << 16).unwrap();
            let sol: Vec<(f64, f64)> = p.rho.iter().copied().zip(p.u.iter().copied()).collect();
            let src: Vec<(f64, f64)> = p.rho.iter().map(|&r| (r, r.powf(-gamma))).collect();
            let fu = fit_power_law(&sol, (1e-3, 1e-1)).unwrap();
            let ff = fit_power_law(&src, (1e-3, 1e-1)).unwrap();
            assert!((fu.exponent + (gamma - 2.0)).abs() < 0.05, "{fu:?}");
            assert!((fu.exponent - ff.exponent - 2.0).abs() < 0.15);
        }
    }

    #[test]
    fn quadratic_has_constant_second_difference() {
        let g = Grid::uniform(DomainBox::unit(1), 33).unwrap();
        let u = GridField::from_fn(g, &|x| x[0] * (1.0 - x[0]));
        let region = DomainBox::new(vec![0.25], vec![0.75]).unwrap();
        let r = smoothness_probe(&u, &region, &[0.125, 0.0625, 0.03125], None, 0.0).unwrap();
        for m in &r.max_second_difference {
            assert!((m - 2.0).abs() < 1e-9);
        }
        assert!(r.smooth);
    }

    #[test]
    fn probe_rejects_regions_near_the_set() {
        let g = Grid::uniform(DomainBox::unit(2), 17).unwrap();
        let u = GridField::zeros(g);
        let region = DomainBox::new(vec![0.1, 0.1], vec![0.3, 0.3]).unwrap();
        let a = BoxUnion::point(&[0.35, 0.2]);
        assert!(matches!(
            smoothness_probe(&u, &region, &[0.125], Some(&a), 0.1),
            Err(Error::Input(_))
        ));
    }

    #[test]
    fn singular_solution_is_smooth_away_from_the_set() {
        let g = Grid::uniform(DomainBox::unit(2), 129).unwrap();
        let a = BoxUnion::point(&[0.25, 0.5]);
        let f = GridField::sample(g, &|x| a.distance_sq(x).powf(-0.4), SamplingRule::Node).unwrap();
        let (u, _) = solve_poisson(&f, &cfg()).unwrap();
        let region = DomainBox::new(vec![0.6, 0.3], vec![0.8, 0.7]).unwrap();
        let r = smoothness_probe(&u, &region, &[0.0625, 0.03125, 0.015625], Some(&a), 0.2).unwrap();
        assert!(r.smooth, "{r:?}");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn nonnegative_sources_give_nonnegative_solutions(seed in any::<u64>()) {
            let g = Grid::uniform(DomainBox::unit(2), 17).unwrap();
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let v: Vec<f64> = (0..g.len()).map(|_| rng.random_range(0.0..2.0)).collect();
            let (u, _) = solve_poisson(&GridField::new(g, v).unwrap(), &cfg()).unwrap();
            prop_assert!(u.values().iter().all(|&x| x >= -DEFAULT_TOLERANCE));
        }

        #[test]
        fn solves_are_linear(seed in any::<u64>(), alpha in -2.0f64..2.0, beta in -2.0f64..2.0) {
            let g = Grid::uniform(DomainBox::unit(2), 17).unwrap();
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let v1: Vec<f64> = (0..g.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
            let v2: Vec<f64> = (0..g.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
            let f1 = GridField::new(g.clone(), v1).unwrap();
            let f2 = GridField::new(g, v2).unwrap();
            let (u1, _) = solve_poisson(&f1, &cfg()).unwrap();
            let (u2, _) = solve_poisson(&f2, &cfg()).unwrap();
            let (u12, _) = solve_poisson(&f1.combine(alpha, &f2, beta).unwrap(), &cfg()).unwrap();
            let lin = u1.combine(alpha, &u2, beta).unwrap();
            let diff = u12.combine(1.0, &lin, -1.0).unwrap().max_abs();
            prop_assert!(diff <= 10.0 * DEFAULT_TOLERANCE, "diff {}", diff);
        }
    }
}
