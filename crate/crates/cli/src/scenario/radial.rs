//! Radial power-law sources: closed form, radial finite volumes, grid solves
//! and the comparison principle.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use singlab::distance::DomainBox;
use singlab::fractal::BoxUnion;
use singlab::poisson::{
    discrete_comparison, fit_power_law, fit_singularity_order, radial_fv_solve, radial_solution, solve_poisson, Grid,
    GridField, SamplingRule, SolverConfig, DEFAULT_TOLERANCE,
};
use singlab::regression::fit_line;
use singlab::rng::derive_seed;

use super::{Recorder, Series};
use crate::config::ScenarioConfig;

const ORDER_TOLERANCE: f64 = 0.2;
const EXPONENT_TOLERANCE: f64 = 0.05;
const SHIFT_TOLERANCE: f64 = 0.15;
/// Fit window relative to the ball radius.
const FIT_WINDOW: (f64, f64) = (1e-3, 1e-1);
/// Mesh sizes relative to the radius for the residual order.
const RESIDUAL_STEPS: [f64; 4] = [1.0 / 64.0, 1.0 / 128.0, 1.0 / 256.0, 1.0 / 512.0];
/// Nodes per axis of the random comparison pairs.
const PAIR_NODES: usize = 65;
/// Truncation levels `min(F, M)` for the grid comparison.
const TRUNCATIONS: [f64; 2] = [10.0, 100.0];

pub(super) fn run(config: &ScenarioConfig, rec: &mut Recorder) {
    let n = config.ambient;
    let spec = &config.radial;
    let (c, r) = (spec.amplitude, spec.radius);
    let window = (FIT_WINDOW.0 * r, FIT_WINDOW.1 * r);
    let mut orders = Vec::new();
    for &gamma in &spec.gammas {
        rec.step(&format!("closed form gamma = {gamma}"), &[4], |rec| {
            let sol = radial_solution(n, gamma, c, r)?;
            let pts: Vec<(f64, f64)> = RESIDUAL_STEPS
                .iter()
                .map(|&s| {
                    let h = s * r;
                    Ok((h.ln(), sol.fd_residual(h, 0.25 * r)?.ln()))
                })
                .collect::<anyhow::Result<_>>()?;
            let (xs, ys): (Vec<f64>, Vec<f64>) = pts.iter().copied().unzip();
            let fit = fit_line(&xs, &ys).ok_or_else(|| anyhow::anyhow!("degenerate residual fit"))?;
            rec.check(
                &format!("gamma = {gamma}: residual order"),
                &[4],
                (fit.slope - 2.0).abs() <= ORDER_TOLERANCE,
                format!("order {:.4} over h/r in [1/512, 1/64]", fit.slope),
            );
            rec.series(Series::log_log(format!("residual_gamma_{gamma}"), &pts, fit.slope, fit.intercept));
            rec.result(&format!("closed_form_{gamma}"), &sol);
            Ok(())
        });
        rec.step(&format!("radial solve gamma = {gamma}"), &[4, 5], |rec| {
            let p = radial_fv_solve(n, gamma, c, r, spec.cells)?;
            let sol: Vec<(f64, f64)> = p.rho.iter().copied().zip(p.u.iter().copied()).collect();
            let src: Vec<(f64, f64)> = p.rho.iter().map(|&x| (x, c * x.powf(-gamma))).collect();
            let fu = fit_power_law(&sol, window)?;
            let ff = fit_power_law(&src, window)?;
            let order = -fu.exponent;
            rec.check(
                &format!("gamma = {gamma}: fitted singularity order"),
                &[4],
                (order - (gamma - 2.0)).abs() <= EXPONENT_TOLERANCE,
                format!("order {order:.4} against gamma - 2 = {:.4}", gamma - 2.0),
            );
            let shift = fu.exponent - ff.exponent;
            rec.check(
                &format!("gamma = {gamma}: regularizing shift"),
                &[5],
                (shift - 2.0).abs() <= SHIFT_TOLERANCE,
                format!("solution exponent {:.4} minus source exponent {:.4} = {shift:.4}", fu.exponent, ff.exponent),
            );
            let logs: Vec<(f64, f64)> = sol
                .iter()
                .filter(|(x, _)| *x >= window.0 && *x <= window.1)
                .map(|&(x, v)| (x.ln(), (v - fu.offset).max(f64::MIN_POSITIVE).ln()))
                .collect();
            rec.series(Series::log_log(format!("exponent_fit_gamma_{gamma}"), &logs, fu.exponent, fu.amplitude.ln()));
            orders.push(serde_json::json!({ "gamma": gamma, "solution": fu, "source": ff, "shift": shift }));
            Ok(())
        });
    }
    rec.result("radial_fits", &orders);

    rec.step("exact one-dimensional solve", &[6], |rec| {
        let g = Grid::uniform(DomainBox::unit(1), PAIR_NODES)?;
        let f = GridField::from_fn(g, &|_| 2.0);
        let cfg = SolverConfig {
            tol: 1e-15,
            ..SolverConfig::default()
        };
        let (u, _) = solve_poisson(&f, &cfg)?;
        let mut x = [0.0];
        let mut worst: f64 = 0.0;
        for i in 0..u.grid().len() {
            u.grid().point(i, &mut x);
            worst = worst.max((u.values()[i] - x[0] * (1.0 - x[0])).abs());
        }
        rec.check(
            "x(1 - x) for F = 2 at the nodes",
            &[6],
            worst <= 1e-13,
            format!("max nodal error {worst:.3e}"),
        );
        Ok(())
    });

    rec.step("random ordered pairs", &[6], |rec| {
        let g = Grid::uniform(DomainBox::unit(2), PAIR_NODES)?;
        let cfg = SolverConfig::default();
        let mut worst = f64::NEG_INFINITY;
        for k in 0..spec.pairs {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, 1000 + k as u64));
            let v1: Vec<f64> = (0..g.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
            let v2: Vec<f64> = v1.iter().map(|v| v + rng.random_range(0.0..1.0)).collect();
            let r = discrete_comparison(&GridField::new(g.clone(), v1)?, &GridField::new(g.clone(), v2)?, &cfg)?;
            worst = worst.max(r.max_violation);
        }
        let bound = 10.0 * DEFAULT_TOLERANCE;
        rec.check(
            "comparison on random ordered pairs",
            &[6],
            worst <= bound,
            format!("max(u1 - u2) = {worst:.3e} over {} pairs on {PAIR_NODES}^2 nodes, bound {bound:e}", spec.pairs),
        );
        Ok(())
    });

    rec.step("grid solves with truncated sources", &[], |rec| {
        let center = vec![0.5; n];
        let a = BoxUnion::point(&center);
        let g = Grid::uniform(DomainBox::unit(n), config.grid)?;
        let gamma = spec.gammas[spec.gammas.len() / 2];
        let rule = SamplingRule::CellAverage { sub: 2, depth: 0 };
        let full = GridField::sample(g.clone(), &|x| c * a.distance_sq(x).powf(-0.5 * gamma), rule)?;
        let mut sources: Vec<GridField> = TRUNCATIONS
            .iter()
            .map(|&m| {
                let v = full.values().iter().map(|&f| f.min(m)).collect();
                GridField::new(g.clone(), v)
            })
            .collect::<singlab::Result<_>>()?;
        sources.push(full);
        let cfg = SolverConfig::default();
        let mut worst = f64::NEG_INFINITY;
        for w in sources.windows(2) {
            worst = worst.max(discrete_comparison(&w[0], &w[1], &cfg)?.max_violation);
        }
        rec.check(
            "truncated sources give ordered solutions",
            &[6],
            worst <= 10.0 * DEFAULT_TOLERANCE,
            format!("max violation {worst:.3e} for min(F, M), M in {TRUNCATIONS:?}, on {}^{n} nodes", config.grid),
        );
        let (u, report) = solve_poisson(sources.last().expect("full source"), &cfg)?;
        let h = g.max_spacing();
        let fit = fit_singularity_order(&u, &center, &a, (2.0 * h, 0.5 - h));
        rec.result(
            "grid_solve",
            &serde_json::json!({
                "nodes_per_axis": config.grid,
                "gamma": gamma,
                "iterations": report.iterations,
                "residual": report.residual,
                "fit": fit.ok(),
            }),
        );
        Ok(())
    });
}
