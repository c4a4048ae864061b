//! Integrability sweep of `d(., A)^-gamma` across the critical exponent.

use std::time::Instant;

use singlab::distance::DomainBox;
use singlab::fractal::{cantor_for_dimension, cantor_grill};
use singlab::regression::fit_line;
use singlab::rhs::{hp_check, HpOptions, NormOptions, Verdict};
use singlab::rng::derive_seed;

use super::{Recorder, Series};
use crate::config::ScenarioConfig;

/// Seconds allowed for one full sweep.
const SWEEP_BUDGET: f64 = 60.0;
/// Allowed gap between the shell-volume slope and `N - dim`.
const SHELL_SLOPE_TOLERANCE: f64 = 0.15;

pub(super) fn run(config: &ScenarioConfig, rec: &mut Recorder) {
    let spec = &config.sweep;
    let n = config.ambient;
    let start = Instant::now();
    let Some(set) = rec.step("cantor set", &[3], |_| {
        let c = cantor_for_dimension(spec.dim, spec.generation)?;
        Ok(cantor_grill(&c, n, 0)?)
    }) else {
        return;
    };
    // A sits on the first axis, well inside the domain
    let domain = match &config.domain {
        Some(b) => b.to_domain().map_err(anyhow::Error::from),
        None => Ok(DomainBox::new(
            std::iter::once(-0.5).chain(std::iter::repeat_n(-1.0, n - 1)).collect(),
            std::iter::once(1.5).chain(std::iter::repeat_n(1.0, n - 1)).collect(),
        )
        .expect("fixed domain is valid")),
    };
    let Some(domain) = rec.step("domain", &[3], |_| domain) else {
        return;
    };
    let critical = n as f64 - spec.dim;
    let mut rows = Vec::new();
    for (i, &product) in spec.products.iter().enumerate() {
        let gamma = product / spec.p;
        let name = format!("gamma p = {product}");
        let opts = HpOptions {
            norm: NormOptions {
                budget: spec.budget,
                seed: derive_seed(config.seed, i as u64),
                depth: None,
            },
            scales_per_decade: 10,
        };
        let Some(report) = rec.step(&name, &[3], |_| Ok(hp_check(&set, gamma, spec.p, &domain, &opts)?)) else {
            continue;
        };
        let expect_decay = product < critical;
        rec.check(
            &format!("{name}: shell contributions {}", if expect_decay { "decay" } else { "do not decay" }),
            &[3],
            report.decaying == expect_decay,
            format!("fitted shell ratio {:.4}, critical gamma p = {critical}", report.ratio),
        );
        let analytic_ok = report.analytic_verdict == Some(if expect_decay { Verdict::Guaranteed } else { Verdict::NotGuaranteed });
        rec.check(
            &format!("{name}: window verdict"),
            &[3],
            analytic_ok,
            format!("{:?} with analytic threshold {:?}", report.analytic_verdict, report.analytic_threshold),
        );
        rec.check(
            &format!("{name}: shell volume slope"),
            &[3],
            (report.shell_slope - critical).abs() <= SHELL_SLOPE_TOLERANCE,
            format!("slope {:.4} against N - dim = {critical}", report.shell_slope),
        );
        if i == 0 {
            let (xs, ys): (Vec<f64>, Vec<f64>) = report.shell_points.iter().copied().unzip();
            if let Some(fit) = fit_line(&xs, &ys) {
                rec.series(Series::log_log("shell_volume", &report.shell_points, fit.slope, fit.intercept));
            }
            rec.series(Series::from_fit("sweep_box_count", &report.dimension));
        }
        rows.push(serde_json::json!({
            "gamma_p": product,
            "gamma": gamma,
            "ratio": report.ratio,
            "decaying": report.decaying,
            "norm": report.norm,
            "shell_slope": report.shell_slope,
            "box_count_slope": report.dimension.slope,
        }));
        rec.result(&format!("integrability_{i}"), &report);
    }
    rec.result("sweep", &rows);
    let elapsed = start.elapsed().as_secs_f64();
    rec.check(
        "sweep runtime",
        &[3],
        elapsed < SWEEP_BUDGET,
        format!("under {SWEEP_BUDGET} s; wall time in timing.json"),
    );
}
