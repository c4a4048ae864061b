//! Partial sums of the dense-spike function on an interval.

use anyhow::Context;
use singlab::poisson::{Grid, GridField, SamplingRule};
use singlab::rhs::stein_dense_function;
use singlab::singdim::{lattice_cells, singular_set_estimate, FieldSource, SingularSample, SingularSource, SpikeSource};

use super::{Recorder, Series, SeriesKind};
use crate::config::ScenarioConfig;

/// Profile samples per spike interval.
const PROFILE_PER_GAP: usize = 200;
/// Nodes of the sampled field; `nodes - 1` shares no factor with 2 or 5, so
/// no node meets a spike at `k / 50`.
const FIELD_NODES: usize = 20_000;
/// Cell side for field detection, coprime with the spike lattice.
const FIELD_CELLS: f64 = 167.0;

/// Width to which exact detection bisects each flagged cell.
const LOCATE_WIDTH: f64 = 1e-12;
/// Allowed gap between a located spike and its lattice point.
const LOCATE_TOLERANCE: f64 = 1e-9;

/// Shrinks `[lo, hi]` onto the point of `set` inside it by bisection.
fn locate(set: &singlab::fractal::BoxUnion, mut lo: f64, mut hi: f64) -> f64 {
    while hi - lo > LOCATE_WIDTH {
        let mid = 0.5 * (lo + hi);
        if set.meets_cell(&[lo], &[mid]) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Indices of the closed cells containing `points`, sorted.
fn expected_cells(cells: &[(Vec<f64>, Vec<f64>)], points: &[f64]) -> Vec<usize> {
    let mut out: Vec<usize> = cells
        .iter()
        .enumerate()
        .filter(|(_, (lo, hi))| points.iter().any(|&p| p >= lo[0] && p <= hi[0]))
        .map(|(i, _)| i)
        .collect();
    out.sort_unstable();
    out
}

fn flagged_indices(samples: &[SingularSample]) -> Vec<usize> {
    samples.iter().enumerate().filter(|(_, s)| s.flagged).map(|(i, _)| i).collect()
}

pub(super) fn run(config: &ScenarioConfig, rec: &mut Recorder) {
    let spec = &config.stein;
    let domain = match config.domain_spec().to_domain() {
        Ok(d) => d,
        Err(e) => {
            rec.step("domain", &[9], |_| -> anyhow::Result<()> { Err(e.into()) });
            return;
        }
    };
    let Some(u) = rec.step("build", &[9], |_| Ok(stein_dense_function(&domain, spec.gamma, spec.n)?)) else {
        return;
    };
    let spikes = u.singular_points();
    let pitch = (domain.hi()[0] - domain.lo()[0]) / spec.n as f64;

    rec.step("exact detection", &[9], |rec| {
        let spacing = config.lattice.as_ref().map_or(pitch / 4.0, |l| l.spacing);
        let source = SpikeSource::new(u.clone())?;
        let samples = singular_set_estimate(&source, spacing)?;
        let cells = lattice_cells(&domain, spacing)?;
        let flagged = flagged_indices(&samples);
        let expected = expected_cells(&cells, &spikes);
        // a spike on a cell face lies in two closed cells, one of them flagged
        let every_spike_hit = spikes.iter().all(|&p| {
            flagged.iter().any(|&i| p >= cells[i].0[0] && p <= cells[i].1[0])
        });
        let ok = flagged.len() == spikes.len() && every_spike_hit && flagged.iter().all(|i| expected.contains(i));
        let located: Vec<f64> = flagged
            .iter()
            .map(|&i| locate(source.singular_set(), cells[i].0[0], cells[i].1[0]))
            .collect();
        let max_gap = located.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max);
        let lattice_error = located
            .iter()
            .zip(1..)
            .map(|(&x, k)| (x - (domain.lo()[0] + k as f64 * pitch)).abs())
            .fold(0.0, f64::max);
        rec.check(
            "spikes flagged exactly",
            &[9],
            ok,
            format!("{} flagged cells of side {spacing} for {} spikes", flagged.len(), spikes.len()),
        );
        rec.check(
            "located spikes sit on the lattice",
            &[9],
            located.len() == spikes.len() && lattice_error <= LOCATE_TOLERANCE,
            format!("{} spikes located, largest distance to k/n {lattice_error:.2e}", located.len()),
        );
        rec.check(
            "gap between detected spikes",
            &[9],
            (max_gap - pitch).abs() <= LOCATE_TOLERANCE,
            format!("largest gap {max_gap:.6} against spike pitch {pitch}"),
        );
        rec.result("exact_detection", &serde_json::json!({ "spacing": spacing, "located": located, "max_gap": max_gap }));
        Ok(())
    });

    rec.step("field detection", &[9], |rec| {
        let grid = Grid::new(domain.clone(), vec![FIELD_NODES])?;
        let field = GridField::sample(grid, &|x: &[f64]| u.eval(x[0]), SamplingRule::Node)
            .context("sampling the spike sum")?;
        let spacing = (domain.hi()[0] - domain.lo()[0]) / FIELD_CELLS;
        let source = FieldSource::detect(&field, spacing)?;
        let cells = lattice_cells(&domain, spacing)?;
        let flagged = flagged_indices(source.detected());
        let expected = expected_cells(&cells, &spikes);
        let exponents: Vec<f64> = flagged.iter().map(|&i| source.detected()[i].exponent).collect();
        let worst = exponents.iter().fold(f64::NEG_INFINITY, |m, &e| m.max(e));
        rec.check(
            "spikes detected from samples",
            &[9],
            flagged == expected,
            format!(
                "{} cells flagged by exponent fits, {} expected; weakest exponent {worst:.3}",
                flagged.len(),
                expected.len()
            ),
        );
        rec.result("field_detection", &serde_json::json!({ "spacing": spacing, "nodes": FIELD_NODES, "exponents": exponents }));
        Ok(())
    });

    rec.step("profile", &[9], |rec| {
        let m = PROFILE_PER_GAP * spec.n;
        let (lo, hi) = (domain.lo()[0], domain.hi()[0]);
        // midpoints never meet a spike
        let rows: Vec<Vec<f64>> = (0..m)
            .map(|i| {
                let x = lo + (hi - lo) * (i as f64 + 0.5) / m as f64;
                vec![x, u.eval(x)]
            })
            .collect();
        let reach = pitch / 4.0;
        let mut bad = Vec::new();
        for &a in &spikes {
            let left: Vec<f64> = rows.iter().filter(|r| r[0] < a && a - r[0] <= reach).map(|r| r[1]).collect();
            let right: Vec<f64> = rows.iter().filter(|r| r[0] > a && r[0] - a <= reach).map(|r| r[1]).collect();
            let rising = left.windows(2).all(|w| w[1] > w[0]);
            let falling = right.windows(2).all(|w| w[1] < w[0]);
            if !(rising && falling) || left.is_empty() || right.is_empty() {
                bad.push(a);
            }
        }
        rec.check(
            "profile blows up monotonically at each spike",
            &[9],
            bad.is_empty(),
            format!("{} spikes checked within {reach} on each side; non-monotone at {bad:?}", spikes.len()),
        );
        rec.series(Series {
            name: "stein_profile".into(),
            kind: SeriesKind::Profile,
            columns: vec!["x".into(), "u".into()],
            rows,
        });
        rec.artifact("stein_profile.csv", "partial sum sampled at cell midpoints");
        Ok(())
    });
}
