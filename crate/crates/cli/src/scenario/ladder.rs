//! Ball bases, Cantor-grill ladders and the scenarios built on them: dense
//! singular sets, maximal contrast and pointwise maximal singularity.

use std::time::Instant;

use anyhow::{bail, Context};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use singlab::distance::DomainBox;
use singlab::fractal::{
    box_counting_dimension, cantor_for_dimension, cantor_grill, default_scale_range, place_with_permutation, Ball,
    BoxUnion,
};
use singlab::poisson::{smoothness_probe, solve_poisson, Grid, GridField, SamplingRule, SolverConfig};
use singlab::rhs::{build_rhs, diagonal_order, lipschitz_bound, BuildOptions, Grade, NormOptions, SingularRhs, Verdict};
use singlab::rng::derive_seed;
use singlab::singdim::{countable_stability_check, envelope_radius, sd_map, usc_check, SdLattice, MONOTONE_TOLERANCE, USC_SLACK};

use super::{Recorder, Series, SeriesKind};
use crate::config::{ScenarioConfig, ScenarioName};

/// Allowed gap between a limit estimate and `N - 4`.
const SD_TOLERANCE: f64 = 0.15;
/// Allowed gap between a union slope and the largest ladder dimension.
const UNION_TOLERANCE: f64 = 0.1;
const CONTRAST_BUDGET: f64 = 600.0;
/// Difference quotients per Lipschitz radius.
const LIPSCHITZ_PAIRS: usize = 10_000;
const LIPSCHITZ_DELTAS: [f64; 2] = [0.1, 0.25];
/// Monte Carlo draws per normalizer.
const NORM_BUDGET: u64 = 1 << 20;
/// Default lattice spacing when none is configured.
const DEFAULT_SPACING: f64 = 0.25;
const DEFAULT_RADII: [f64; 3] = [0.24, 0.17, 0.12];
/// Extra margin keeping pushed ball centers off the region faces.
const PUSH_MARGIN: f64 = 1.01;

/// One ball of the base, with the lattice point it serves when there is one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaseBall {
    pub center: Vec<f64>,
    pub radius: f64,
    pub point: Option<Vec<f64>>,
}

impl BaseBall {
    pub fn ball(&self) -> Ball {
        Ball::new(self.center.clone(), self.radius)
    }
}

fn in_closed(b: &DomainBox, p: &[f64]) -> bool {
    b.contains_closed(p)
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// One ball per point of `points` lying in the closure of a region: the ball
/// sits inside that region and inside `B_reach(point)`. All balls share the
/// largest radius for which this holds at every point.
pub fn ball_base_at_points(points: &[Vec<f64>], regions: &[DomainBox], reach: f64) -> anyhow::Result<Vec<BaseBall>> {
    let push = |p: &[f64], s: &DomainBox, rho: f64| -> Option<Vec<f64>> {
        let m = PUSH_MARGIN * rho;
        (0..p.len())
            .map(|a| {
                let (lo, hi) = (s.lo()[a] + m, s.hi()[a] - m);
                (lo <= hi).then(|| p[a].clamp(lo, hi))
            })
            .collect()
    };
    let served: Vec<(&Vec<f64>, &DomainBox)> = points
        .iter()
        .filter_map(|p| regions.iter().find(|s| in_closed(s, p)).map(|s| (p, s)))
        .collect();
    if served.is_empty() {
        bail!("no lattice point lies in the closure of the singular region");
    }
    let fits = |rho: f64| {
        served
            .iter()
            .all(|(p, s)| push(p, s, rho).is_some_and(|c| dist(&c, p) + rho <= reach * (1.0 - 1e-9)))
    };
    let mut rho = 0.5 * reach;
    while !fits(rho) {
        rho *= 0.95;
        if rho < 1e-6 * reach {
            bail!("no common ball radius fits the singular region near every lattice point");
        }
    }
    Ok(served
        .into_iter()
        .map(|(p, s)| BaseBall {
            center: push(p, s, rho).expect("radius fits"),
            radius: rho,
            point: Some(p.clone()),
        })
        .collect())
}

/// Balls centered on lattices whose pitch halves per level, with radius half
/// the pitch; the lattice varies along `axes`, the other coordinates sit at
/// `anchor` (or the region center when the anchor lies outside). The first
/// `count` balls over all levels and regions.
pub fn ball_base_levels(regions: &[DomainBox], axes: &[usize], anchor: &[f64], count: usize) -> anyhow::Result<Vec<BaseBall>> {
    let mut out = Vec::with_capacity(count);
    for level in 0..24u32 {
        for s in regions {
            let n = s.dim();
            let per = 1usize << level;
            let pitch: Vec<f64> = axes.iter().map(|&a| (s.hi()[a] - s.lo()[a]) / per as f64).collect();
            let mut base: Vec<f64> = (0..n)
                .map(|a| if anchor[a] > s.lo()[a] && anchor[a] < s.hi()[a] { anchor[a] } else { 0.5 * (s.lo()[a] + s.hi()[a]) })
                .collect();
            let mut radius = pitch.iter().fold(f64::INFINITY, |m, &p| m.min(0.5 * p));
            for a in (0..n).filter(|a| !axes.contains(a)) {
                radius = radius.min(base[a] - s.lo()[a]).min(s.hi()[a] - base[a]);
            }
            let total = per.pow(axes.len() as u32);
            for k in 0..total {
                let mut r = k;
                for (j, &a) in axes.iter().enumerate().rev() {
                    let i = r % per;
                    r /= per;
                    base[a] = s.lo()[a] + (i as f64 + 0.5) * pitch[j];
                }
                out.push(BaseBall {
                    center: base.clone(),
                    radius,
                    point: None,
                });
                if out.len() == count {
                    return Ok(out);
                }
            }
        }
    }
    bail!("could not place {count} balls")
}

/// Grill of dimension `d` in R^n placed in `ball`, with `n - 5` thick axes
/// and the Cantor factor along axis `axis`. The generation keeps the finest
/// interval below `2^-bits` of the unit factor.
pub fn ladder_set(d: f64, n: usize, ball: &Ball, bits: u32, axis: usize) -> anyhow::Result<BoxUnion> {
    let thick = n - 5;
    let cd = d - thick as f64;
    let generation = (bits as f64 * cd).ceil().max(1.0) as usize;
    let c = cantor_for_dimension(cd, generation)?;
    let grill = cantor_grill(&c, n, thick)?;
    let perm: Vec<usize> = (0..n).map(|a| (a + axis) % n).collect();
    Ok(place_with_permutation(&grill, ball, perm)?.0)
}

/// Terms of `F` in diagonal order of `(k, j)`.
struct Ladder {
    sets: Vec<BoxUnion>,
    gammas: Vec<f64>,
    labels: Vec<(usize, usize)>,
}

fn build_ladder(
    config: &ScenarioConfig,
    balls: &[BaseBall],
    dims: &[f64],
    gammas: &[f64],
    one_per_ball: bool,
) -> anyhow::Result<Ladder> {
    let n = config.ambient;
    let order: Vec<(usize, usize)> = if one_per_ball {
        (1..=balls.len().min(dims.len())).map(|k| (k, k)).collect()
    } else {
        diagonal_order(dims.len(), balls.len())
    };
    let sets = order
        .par_iter()
        .map(|&(k, j)| ladder_set(dims[k - 1], n, &balls[j - 1].ball(), config.resolution_bits, (k - 1) % n))
        .collect::<anyhow::Result<Vec<_>>>()?;
    Ok(Ladder {
        gammas: order.iter().map(|&(k, _)| gammas[k - 1]).collect(),
        sets,
        labels: order,
    })
}

fn build(config: &ScenarioConfig, domain: &DomainBox, ladder: &Ladder) -> anyhow::Result<SingularRhs> {
    let opts = BuildOptions {
        grade: Grade::Theorem,
        norm: NormOptions {
            budget: NORM_BUDGET,
            seed: config.seed,
            depth: None,
        },
        diagnostics: true,
        scales_per_decade: 10,
        labels: Some(ladder.labels.clone()),
    };
    Ok(build_rhs(&ladder.sets, &ladder.gammas, domain, ladder.sets.len(), &opts)?)
}

/// Coefficient tails, window verdicts and sampled Lipschitz quotients of a
/// built right-hand side.
fn check_rhs(config: &ScenarioConfig, rec: &mut Recorder, f: &SingularRhs) {
    let terms = f.terms();
    let k = terms.len();
    let c_tail: f64 = terms.iter().map(|t| t.c).sum();
    let nc_tail: f64 = terms.iter().map(|t| t.normalized()).sum();
    rec.check(
        "coefficient sums",
        &[8],
        c_tail <= 1.0 && nc_tail <= 1.0,
        format!("sum c_k = {c_tail:.6}, sum c_k / norm_k = {nc_tail:.6} over {k} terms"),
    );
    let mut worst_tail: f64 = 0.0;
    for m in 0..k {
        let tail_c: f64 = terms[m..].iter().map(|t| t.c).sum();
        let tail_n: f64 = terms[m..].iter().map(|t| t.normalized()).sum();
        worst_tail = worst_tail.max(tail_c.max(tail_n) / 0.5f64.powi(m as i32 - 1));
    }
    rec.check(
        "coefficient tails",
        &[8],
        worst_tail <= 1.0,
        format!("largest tail after K terms relative to 2^(1 - K): {worst_tail:.6}"),
    );
    let window_ok = f.diagnostics().iter().all(|r| r.analytic_verdict == Some(Verdict::Guaranteed));
    rec.check(
        "every term inside the integrability window",
        &[],
        window_ok,
        format!("{} terms, analytic thresholds (N - d_k)/2 with p = 2", f.diagnostics().len()),
    );
    rec.step("lipschitz quotients", &[7], |rec| {
        let domain = f.domain();
        let n = domain.dim();
        for (i, &delta) in LIPSCHITZ_DELTAS.iter().enumerate() {
            let bound = lipschitz_bound(f, delta)?;
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, 7000 + i as u64));
            let draw = |rng: &mut ChaCha8Rng| -> Vec<f64> {
                (0..n).map(|a| rng.random_range(domain.lo()[a]..domain.hi()[a])).collect()
            };
            let mut worst: f64 = 0.0;
            let mut taken = 0;
            let mut tries = 0u64;
            while taken < LIPSCHITZ_PAIRS {
                tries += 1;
                if tries > 1000 * LIPSCHITZ_PAIRS as u64 {
                    bail!("too few points farther than {delta} from the singular set");
                }
                let x = draw(&mut rng);
                let y = draw(&mut rng);
                if f.union().distance_sq(&x).sqrt() <= delta || f.union().distance_sq(&y).sqrt() <= delta {
                    continue;
                }
                worst = worst.max((f.value(&x) - f.value(&y)).abs() / dist(&x, &y));
                taken += 1;
            }
            rec.check(
                &format!("difference quotients, delta = {delta}"),
                &[7],
                worst <= bound,
                format!("max quotient {worst:.6e} against bound {bound:.6e} over {LIPSCHITZ_PAIRS} pairs"),
            );
        }
        Ok(())
    });
}

/// Solves on the regular grid and probes smoothness inside each regular
/// box shrunk by a quarter of its width.
fn check_regular_part(config: &ScenarioConfig, rec: &mut Recorder, f: &SingularRhs, regular: &[DomainBox]) {
    if regular.is_empty() {
        return;
    }
    rec.step("grid solve", &[], |rec| {
        let grid = Grid::uniform(f.domain().clone(), config.grid)?;
        let h = grid.max_spacing();
        let field = GridField::sample(grid, &|x| f.value(x), SamplingRule::Node)?;
        let (u, report) = solve_poisson(&field, &SolverConfig::default())?;
        rec.result("grid_solve", &serde_json::json!({ "nodes_per_axis": config.grid, "iterations": report.iterations, "residual": report.residual }));
        for (i, b) in regular.iter().enumerate() {
            let lo: Vec<f64> = (0..b.dim()).map(|a| b.lo()[a] + 0.25 * (b.hi()[a] - b.lo()[a])).collect();
            let hi: Vec<f64> = (0..b.dim()).map(|a| b.hi()[a] - 0.25 * (b.hi()[a] - b.lo()[a])).collect();
            let region = DomainBox::new(lo, hi)?;
            let steps = [2.0 * h, h];
            let delta = steps[0];
            match smoothness_probe(&u, &region, &steps, Some(f.union()), delta) {
                Ok(p) => rec.check(
                    &format!("solution smooth in regular box {}", i + 1),
                    &[],
                    p.smooth,
                    format!("max second differences {:?} at steps {steps:?}", p.max_second_difference),
                ),
                Err(e) => rec.check(&format!("solution smooth in regular box {}", i + 1), &[], false, e.to_string()),
            }
        }
        Ok(())
    });
}

fn regions(boxes: &[crate::config::BoxSpec]) -> anyhow::Result<Vec<DomainBox>> {
    boxes.iter().map(|b| b.to_domain().map_err(anyhow::Error::from)).collect()
}

fn lattice_of(config: &ScenarioConfig) -> SdLattice {
    match &config.lattice {
        Some(l) => SdLattice {
            spacing: l.spacing,
            axes: l.axes.clone(),
            anchor: l.anchor.clone(),
        },
        None => SdLattice::full(DEFAULT_SPACING, config.ambient),
    }
}

/// Maximal contrast (two-valued map) or, with a single region covering the
/// domain, pointwise maximal singularity.
pub(super) fn run_contrast(config: &ScenarioConfig, rec: &mut Recorder) {
    let start = Instant::now();
    let n = config.ambient;
    let target = n as f64 - 4.0;
    let pointwise = config.scenario == ScenarioName::Pointwise;
    let criterion = if pointwise { 11 } else { 10 };
    let Some((domain, singular, regular)) = rec.step("regions", &[criterion], |_| {
        Ok((config.domain_spec().to_domain()?, regions(&config.singular)?, regions(&config.regular)?))
    }) else {
        return;
    };
    let lattice = lattice_of(config);
    let radii = config.radii.clone().unwrap_or_else(|| DEFAULT_RADII.to_vec());
    let r_min = *radii.last().expect("radii are validated nonempty");
    let dims = config.ladder_dims();
    let gammas = config.gammas(&dims);
    let Some(points) = rec.step("lattice", &[criterion], |_| Ok(lattice.points_in(&domain)?)) else {
        return;
    };
    let Some(balls) = rec.step("ball base", &[criterion], |_| {
        let mut b = ball_base_at_points(&points, &singular, r_min)?;
        if let Some(j) = config.balls {
            b.truncate(j);
        }
        Ok(b)
    }) else {
        return;
    };
    rec.result("ball_base", &balls);
    let Some(ladder) = rec.step("sets", &[criterion], |_| build_ladder(config, &balls, &dims, &gammas, false)) else {
        return;
    };
    rec.result(
        "ladder",
        &serde_json::json!({ "dims": dims, "gammas": gammas, "terms": ladder.labels.len(), "ball_radius": balls[0].radius }),
    );

    if !pointwise {
        rec.step("union per ball", &[10], |rec| {
            let k = dims.len();
            let top = dims.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut rows = Vec::new();
            let mut worst: f64 = 0.0;
            let mut stable = true;
            for j in 1..=balls.len() {
                let members: Vec<BoxUnion> = ladder
                    .labels
                    .iter()
                    .zip(&ladder.sets)
                    .filter(|((_, jj), _)| *jj == j)
                    .map(|(_, s)| s.clone())
                    .collect();
                if members.len() != k {
                    continue;
                }
                let report = countable_stability_check(&members)?;
                worst = worst.max((report.union_slope - top).abs());
                stable &= report.holds;
                if j == 1 {
                    let parts: Vec<&BoxUnion> = members.iter().collect();
                    let union = BoxUnion::union(&parts)?;
                    let est = box_counting_dimension(&union, report.scale_range, 10)?;
                    rec.series(Series::from_fit("union_ball_1", &est));
                }
                rows.push(report);
            }
            rec.check(
                "union slope matches the top ladder dimension in every ball",
                &[10],
                worst <= UNION_TOLERANCE && !rows.is_empty(),
                format!("largest |slope - max d_k| = {worst:.4} over {} balls, max d_k = {top}", rows.len()),
            );
            rec.check(
                "union slope matches the largest member slope in every ball",
                &[10],
                stable,
                format!("tolerance {}", singlab::singdim::STABILITY_TOLERANCE),
            );
            rec.result("union_per_ball", &rows);
            Ok(())
        });
    }

    let Some(f) = rec.step("build rhs", &[criterion], |_| build(config, &domain, &ladder)) else {
        return;
    };
    rec.artifact("rhs/rhs.json", "right-hand side with one set document per term");
    rec.artifact("rhs/integrability.csv", "per-term integrability diagnostics");
    check_rhs(config, rec, &f);

    rec.step("sd map", &[criterion], |rec| {
        let envelope = envelope_radius(lattice.spacing, &radii);
        let map = sd_map(&f, &lattice, &radii)?.with_envelope(&f, envelope)?;
        let in_singular = |p: &[f64]| singular.iter().any(|s| in_closed(s, p));
        let mut zero_bad = Vec::new();
        let mut top_bad = Vec::new();
        let mut spread = (f64::INFINITY, f64::NEG_INFINITY);
        let mut monotone = 0;
        for p in &map.points {
            monotone += p.monotonicity_violations(MONOTONE_TOLERANCE).len();
            if in_singular(&p.point) {
                spread = (spread.0.min(p.limit), spread.1.max(p.limit));
                if (p.limit - target).abs() > SD_TOLERANCE {
                    top_bad.push((p.point.clone(), p.limit));
                }
            } else if p.estimates.iter().any(|&e| e != 0.0) {
                zero_bad.push((p.point.clone(), p.estimates.clone()));
            }
        }
        let singular_count = map.points.iter().filter(|p| in_singular(&p.point)).count();
        if !pointwise {
            rec.check(
                "sd = 0 off the closed singular region",
                &[10],
                zero_bad.is_empty(),
                format!("{} points off the region, {} with a nonzero estimate", map.points.len() - singular_count, zero_bad.len()),
            );
        }
        rec.check(
            &format!("sd within {SD_TOLERANCE} of N - 4 on the closed singular region"),
            &[criterion],
            top_bad.is_empty() && singular_count > 0,
            format!("{singular_count} points, limits in [{:.4}, {:.4}], {} outside", spread.0, spread.1, top_bad.len()),
        );
        rec.check(
            "per-radius estimates nonincreasing as r shrinks",
            &[],
            monotone == 0,
            format!("{monotone} increases above {MONOTONE_TOLERANCE}"),
        );
        let violations = usc_check(&map, USC_SLACK);
        rec.check(
            "upper semicontinuity",
            &[criterion],
            violations.is_empty(),
            format!("{} violations with slack {USC_SLACK}, envelope radius {envelope:.4}", violations.len()),
        );
        let rows: Vec<Vec<f64>> = map
            .points
            .iter()
            .map(|p| {
                let mut r: Vec<f64> = lattice.axes.iter().map(|&a| p.point[a]).collect();
                r.push(p.limit);
                r
            })
            .collect();
        let mut columns: Vec<String> = lattice.axes.iter().map(|a| format!("x_{}", a + 1)).collect();
        columns.push("sd".into());
        rec.series(Series {
            name: "sd_map".into(),
            kind: SeriesKind::Heat,
            columns,
            rows,
        });
        rec.result("usc_violations", &violations);
        rec.artifact("sdmap.csv", "per-point estimates over the radii");
        rec.artifact("usc_violations.json", "upper semicontinuity violations");
        rec.payload.sd_map = Some(map);
        rec.payload.violations = violations;
        Ok(())
    });

    check_regular_part(config, rec, &f, &regular);
    rec.payload.rhs = Some(f);
    if !pointwise {
        rec.check(
            "contrast runtime",
            &[10],
            start.elapsed().as_secs_f64() < CONTRAST_BUDGET,
            format!("under {CONTRAST_BUDGET} s; wall time in timing.json"),
        );
    }
}

/// One grill per ball of a base whose pitch halves per level, with
/// dimensions climbing the ladder: a singular set dense in the region at
/// the truncation's resolution.
pub(super) fn run_dense(config: &ScenarioConfig, rec: &mut Recorder) {
    let Some((domain, singular, regular)) = rec.step("regions", &[], |_| {
        Ok((config.domain_spec().to_domain()?, regions(&config.singular)?, regions(&config.regular)?))
    }) else {
        return;
    };
    let lattice = lattice_of(config);
    let dims = config.ladder_dims();
    let gammas = config.gammas(&dims);
    let count = config.balls.unwrap_or(dims.len()).min(dims.len());
    let Some(balls) = rec.step("ball base", &[], |_| ball_base_levels(&singular, &lattice.axes, &lattice.anchor, count)) else {
        return;
    };
    rec.result("ball_base", &balls);
    let Some(ladder) = rec.step("sets", &[], |_| build_ladder(config, &balls, &dims, &gammas, true)) else {
        return;
    };
    rec.step("union dimension", &[], |rec| {
        let parts: Vec<&BoxUnion> = ladder.sets.iter().collect();
        let union = BoxUnion::union(&parts)?;
        let top = dims[..ladder.sets.len()].iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let report = countable_stability_check(&ladder.sets)?;
        rec.check(
            "union slope matches the top ladder dimension",
            &[],
            (report.union_slope - top).abs() <= UNION_TOLERANCE,
            format!("slope {:.4}, max d_k = {top}", report.union_slope),
        );
        let est = box_counting_dimension(&union, default_scale_range(&union), 10)
            .with_context(|| "box counting the union")?;
        rec.series(Series::from_fit("dense_union", &est));
        rec.result("union_dimension", &report);
        Ok(())
    });
    let Some(f) = rec.step("build rhs", &[], |_| build(config, &domain, &ladder)) else {
        return;
    };
    check_rhs(config, rec, &f);
    rec.step("support", &[], |rec| {
        let points = lattice.points_in(&domain)?;
        let inside = f.union().boxes().all(|(lo, hi)| singular.iter().any(|s| s.contains(lo) && s.contains(hi)));
        rec.check(
            "singular set inside the open region",
            &[],
            inside,
            format!("{} boxes", f.union().len()),
        );
        // covering radius of the singular set over the region's lattice points
        let cover = points
            .iter()
            .filter(|p| singular.iter().any(|s| in_closed(s, p)))
            .map(|p| f.union().distance_sq(p).sqrt())
            .fold(0.0, f64::max);
        let pitch = balls.iter().map(|b| 2.0 * b.radius).fold(f64::INFINITY, f64::min);
        let level_bound = pitch * (lattice.axes.len() as f64).sqrt() + lattice.spacing;
        rec.check(
            "singular set comes within the deepest pitch of every region point",
            &[],
            cover <= level_bound,
            format!("covering radius {cover:.4}, bound {level_bound:.4}"),
        );
        rec.result("covering_radius", &cover);
        Ok(())
    });
    check_regular_part(config, rec, &f, &regular);
    rec.artifact("rhs/rhs.json", "right-hand side with one set document per term");
    rec.payload.rhs = Some(f);
}
