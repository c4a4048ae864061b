//! Dyadic-shell estimates of `||d(., A)^-g||_p` and integrability verdicts.

use log::debug;
use serde::{Deserialize, Serialize};

use crate::distance::{far_region_integral, shell_integral, DomainBox, ShellIntegral};
use crate::fractal::{
    box_counting_dimension, default_scale_range, BoxUnion, DimensionEstimate, FIT_TOLERANCE,
};
use crate::regression::fit_line;
use crate::rng::{derive_seed, BLOCK};
use crate::{Error, Result};

/// Deepest shells entering the tail extrapolation.
const TAIL_SHELLS: usize = 6;
/// The innermost shell stays `2^GAP_BITS` resolutions away from the set:
/// closer in, a finite union of boxes shows the dimension of its boxes, not
/// the one it approximates.
const GAP_BITS: i64 = 5;

/// Per-shell ratio below which contributions count as decaying. Exponents
/// within a few hundredths of the critical one cannot be told apart from a
/// divergent integral at desk sample sizes.
pub const DECAY_RATIO: f64 = 0.98;

/// Confidence interval for a positive quantity; `estimate` lies in
/// `[lo, hi]` and `hi` may be infinite.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormInterval {
    pub lo: f64,
    #[serde(with = "crate::io::ext_f64")]
    pub hi: f64,
    pub estimate: f64,
}

impl NormInterval {
    pub fn exact(v: f64) -> Self {
        NormInterval {
            lo: v,
            hi: v,
            estimate: v,
        }
    }

    pub fn contains(&self, v: f64) -> bool {
        self.lo <= v && v <= self.hi
    }

    /// Interval for `self / s`.
    pub fn scaled(&self, s: f64) -> Self {
        NormInterval {
            lo: self.lo / s,
            hi: self.hi / s,
            estimate: self.estimate / s,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormOptions {
    /// Total draws over all strata.
    pub budget: u64,
    pub seed: u64,
    /// Index `J` of the innermost shell `[2^-(J+1), 2^-J)`; chosen from the
    /// set's resolution when absent.
    pub depth: Option<u32>,
}

impl Default for NormOptions {
    fn default() -> Self {
        NormOptions {
            budget: 1 << 18,
            seed: 0,
            depth: None,
        }
    }
}

/// One dyadic shell `2^-(j+1) <= d < 2^-j`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShellContribution {
    pub j: u32,
    #[serde(flatten)]
    pub estimate: ShellIntegral,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LpNormEstimate {
    pub gamma: f64,
    pub p: f64,
    /// Interval for the norm itself (the `p`-th root of the integral).
    pub norm: NormInterval,
    /// Interval for `int d^(-gamma p)`.
    pub integral: NormInterval,
    /// Region `d >= 2^-j0`, sampled uniformly.
    pub far: Option<ShellIntegral>,
    pub shells: Vec<ShellContribution>,
    pub partial: f64,
    pub partial_se: f64,
    /// Fitted ratio of successive shell contributions at depth.
    pub ratio: f64,
    pub decaying: bool,
    #[serde(with = "crate::io::ext_f64")]
    pub tail: f64,
}

fn auto_depth(set: &BoxUnion, j0: u32) -> u32 {
    let mut depth = 30u32;
    if let Some(r) = set.resolution().filter(|r| *r > 0.0) {
        depth = depth.min(((1.0 / r).log2().floor() as i64 - GAP_BITS).max(0) as u32);
    }
    let dim = set.target_dim().unwrap_or(set.dim() as f64).max(0.5);
    let (lo, hi) = set.bounding_box();
    let extent = lo.iter().zip(&hi).map(|(l, h)| h - l).fold(0.0, f64::max);
    if extent > 0.0 {
        // keep the cover near 2^20 cells: (extent / 2^-J)^dim <= 2^20
        let by_cells = (20.0 / dim + extent.log2()).floor().max(0.0) as u32;
        depth = depth.min(by_cells);
    }
    depth.max(j0 + TAIL_SHELLS as u32)
}

/// Estimates `(int_Omega d(x, A)^(-gamma p) dx)^(1/p)`.
///
/// The integral is split into a far region and dyadic shells; the part
/// inside the innermost shell is extrapolated from the geometric decay of
/// the deepest shell contributions.
pub fn lp_norm_estimate(
    set: &BoxUnion,
    gamma: f64,
    p: f64,
    omega: &DomainBox,
    opts: &NormOptions,
) -> Result<LpNormEstimate> {
    if !(p >= 1.0) || !gamma.is_finite() || gamma < 0.0 {
        return Err(Error::Domain(format!(
            "need p >= 1 and gamma >= 0, got p = {p}, gamma = {gamma}"
        )));
    }
    if set.is_empty() {
        return Err(Error::Domain("norm of the distance to an empty set".into()));
    }
    if set.dim() != omega.dim() {
        return Err(Error::DimensionMismatch(format!(
            "set in R^{} and domain in R^{}",
            set.dim(),
            omega.dim()
        )));
    }
    if gamma == 0.0 {
        let v = omega.volume();
        return Ok(LpNormEstimate {
            gamma,
            p,
            norm: NormInterval::exact(v.powf(1.0 / p)),
            integral: NormInterval::exact(v),
            far: None,
            shells: Vec::new(),
            partial: v,
            partial_se: 0.0,
            ratio: 0.0,
            decaying: true,
            tail: 0.0,
        });
    }
    let s = gamma * p;
    let f = move |d: f64| d.powf(-s);
    let j0 = (-omega.diameter().log2()).ceil().max(0.0) as u32;
    let depth = opts.depth.unwrap_or_else(|| auto_depth(set, j0)).max(j0);
    let strata = (depth - j0 + 2) as u64;
    let draws = (opts.budget / strata).max(BLOCK);
    let far = far_region_integral(set, omega, 0.5f64.powi(j0 as i32), &f, draws, derive_seed(opts.seed, 0))?;
    let mut shells = Vec::with_capacity((depth - j0 + 1) as usize);
    for j in j0..=depth {
        let outer = 0.5f64.powi(j as i32);
        let est = shell_integral(set, omega, 0.5 * outer, outer, &f, draws, derive_seed(opts.seed, 1 + j as u64))?;
        shells.push(ShellContribution { j, estimate: est });
    }
    let partial = far.integral + shells.iter().map(|c| c.estimate.integral).sum::<f64>();
    let var = far.integral_se.powi(2) + shells.iter().map(|c| c.estimate.integral_se.powi(2)).sum::<f64>();
    let partial_se = var.sqrt();

    let deep: Vec<&ShellContribution> = shells
        .iter()
        .rev()
        .take(TAIL_SHELLS)
        .filter(|c| c.estimate.integral > 0.0)
        .collect();
    let xs: Vec<f64> = deep.iter().map(|c| c.j as f64).collect();
    let ys: Vec<f64> = deep.iter().map(|c| c.estimate.integral.ln()).collect();
    let (ratio, tail) = match fit_line(&xs, &ys) {
        Some(fit) => {
            let ratio = fit.slope.exp();
            let at_depth = fit.predict(depth as f64).exp();
            let tail = if ratio < DECAY_RATIO {
                at_depth * ratio / (1.0 - ratio)
            } else {
                f64::INFINITY
            };
            (ratio, tail)
        }
        None if deep.is_empty() => (0.0, 0.0),
        None => (f64::NAN, f64::INFINITY),
    };
    let decaying = ratio < DECAY_RATIO;
    debug!("lp norm: gamma {gamma}, p {p}, shells {j0}..={depth}, ratio {ratio:.4}, tail {tail:e}");
    if let Some(td) = set.target_dim() {
        if s < set.dim() as f64 - td - 0.1 && !decaying {
            return Err(Error::Consistency(format!(
                "shell contributions do not decay (ratio {ratio:.4}) although gamma p = {s} < N - dim = {}",
                set.dim() as f64 - td
            )));
        }
    }
    let lo = (partial - 3.0 * partial_se).max(f64::MIN_POSITIVE);
    let hi = partial + 3.0 * partial_se + tail;
    let estimate = if tail.is_finite() { partial + tail } else { partial };
    let integral = NormInterval { lo, hi, estimate };
    let root = |v: f64| v.powf(1.0 / p);
    Ok(LpNormEstimate {
        gamma,
        p,
        norm: NormInterval {
            lo: root(lo),
            hi: root(hi),
            estimate: root(estimate),
        },
        integral,
        far: Some(far),
        shells,
        partial,
        partial_se,
        ratio,
        decaying,
        tail,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    Guaranteed,
    NotGuaranteed,
}

impl Verdict {
    fn from_bound(gamma: f64, threshold: f64) -> Self {
        if gamma < threshold {
            Verdict::Guaranteed
        } else {
            Verdict::NotGuaranteed
        }
    }
}

/// Integrability of `d(., A)^-gamma` in `L^p`, with the theoretical side
/// (box-count dimension) and the empirical side (shell volumes, norm).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntegrabilityReport {
    pub gamma: f64,
    pub p: f64,
    pub ambient: usize,
    pub dimension: DimensionEstimate,
    /// Measured slope plus [`FIT_TOLERANCE`].
    pub dim_upper: f64,
    /// `(N - dim_upper) / p`.
    pub threshold: f64,
    pub verdict: Verdict,
    pub low_confidence: bool,
    /// Same inequality with the set's analytic dimension, when known.
    pub analytic_dim: Option<f64>,
    pub analytic_threshold: Option<f64>,
    pub analytic_verdict: Option<Verdict>,
    /// Slope of `log vol(shell)` against `log delta`; close to `N - dim`.
    pub shell_slope: f64,
    pub shell_slope_r_squared: f64,
    pub expected_shell_slope: f64,
    /// `(log delta, log volume)` pairs used for the shell fit.
    pub shell_points: Vec<(f64, f64)>,
    pub norm: NormInterval,
    pub decaying: bool,
    pub ratio: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HpOptions {
    pub norm: NormOptions,
    pub scales_per_decade: usize,
}

impl Default for HpOptions {
    fn default() -> Self {
        HpOptions {
            norm: NormOptions::default(),
            scales_per_decade: 10,
        }
    }
}

/// Harvey-Polking verdict for `d(., A)^-gamma` in `L^p(Omega)`.
pub fn hp_check(
    set: &BoxUnion,
    gamma: f64,
    p: f64,
    omega: &DomainBox,
    opts: &HpOptions,
) -> Result<IntegrabilityReport> {
    if !omega.contains_set(set) {
        return Err(Error::Domain("the closure of A must lie inside the domain".into()));
    }
    let dimension = box_counting_dimension(set, default_scale_range(set), opts.scales_per_decade)?;
    let norm = lp_norm_estimate(set, gamma, p, omega, &opts.norm)?;
    Ok(assemble_report(set, gamma, p, omega, dimension, &norm))
}

pub(crate) fn assemble_report(
    set: &BoxUnion,
    gamma: f64,
    p: f64,
    omega: &DomainBox,
    dimension: DimensionEstimate,
    norm: &LpNormEstimate,
) -> IntegrabilityReport {
    let n = set.dim() as f64;
    let dim_upper = dimension.slope + FIT_TOLERANCE;
    let threshold = (n - dim_upper) / p;
    let analytic_dim = set.target_dim();
    let analytic_threshold = analytic_dim.map(|d| (n - d) / p);
    let (lo, hi) = set.bounding_box();
    let extent = lo.iter().zip(&hi).map(|(l, h)| h - l).fold(0.0, f64::max);
    let top = if extent > 0.0 { extent / 4.0 } else { f64::INFINITY }.min(omega.diameter() / 8.0);
    let bottom = set.resolution().unwrap_or(0.0) * 2.0;
    let shell_points: Vec<(f64, f64)> = norm
        .shells
        .iter()
        .filter(|c| c.estimate.outer <= top && c.estimate.inner >= bottom && c.estimate.volume > 0.0)
        .map(|c| (c.estimate.outer.ln(), c.estimate.volume.ln()))
        .collect();
    let xs: Vec<f64> = shell_points.iter().map(|p| p.0).collect();
    let ys: Vec<f64> = shell_points.iter().map(|p| p.1).collect();
    let (shell_slope, shell_slope_r_squared) = fit_line(&xs, &ys)
        .map(|f| (f.slope, f.r_squared))
        .unwrap_or((f64::NAN, 0.0));
    IntegrabilityReport {
        gamma,
        p,
        ambient: set.dim(),
        low_confidence: dimension.r_squared < 0.9,
        dim_upper,
        threshold,
        verdict: Verdict::from_bound(gamma, threshold),
        analytic_dim,
        analytic_threshold,
        analytic_verdict: analytic_threshold.map(|t| Verdict::from_bound(gamma, t)),
        shell_slope,
        shell_slope_r_squared,
        expected_shell_slope: n - dimension.slope,
        shell_points,
        norm: norm.norm,
        decaying: norm.decaying,
        ratio: norm.ratio,
        dimension,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fractal::{cantor_for_dimension, cantor_grill, place, Ball};

    fn line() -> DomainBox {
        DomainBox::new(vec![-1.0], vec![1.0]).unwrap()
    }

    #[test]
    fn inverse_square_root_on_the_line() {
        let a = BoxUnion::point(&[0.0]);
        let est = lp_norm_estimate(&a, 0.5, 1.0, &line(), &NormOptions::default()).unwrap();
        assert!(est.decaying);
        assert!(est.norm.contains(4.0), "{:?}", est.norm);
        assert!((est.norm.estimate - 4.0).abs() < 0.2, "{:?}", est.norm);
        assert!(est.norm.hi - est.norm.lo < 0.4, "{:?} tail {} ratio {} shells {}", est.norm, est.tail, est.ratio, est.shells.len());
    }

    #[test]
    fn inverse_distance_diverges_shell_by_shell() {
        let a = BoxUnion::point(&[0.0]);
        let est = lp_norm_estimate(&a, 1.0, 1.0, &line(), &NormOptions::default()).unwrap();
        assert!(!est.decaying);
        assert!(est.norm.hi.is_infinite());
        // each dyadic shell on both sides carries 2 ln 2
        for c in &est.shells {
            let rel = (c.estimate.integral - 2.0 * 2f64.ln()).abs() / (2.0 * 2f64.ln());
            assert!(rel < 0.05, "shell {}: {}", c.j, c.estimate.integral);
        }
    }

    #[test]
    fn zero_exponent_gives_the_volume() {
        let omega = DomainBox::new(vec![0.0, 0.0], vec![2.0, 1.5]).unwrap();
        let a = BoxUnion::point(&[1.0, 1.0]);
        let est = lp_norm_estimate(&a, 0.0, 2.0, &omega, &NormOptions::default()).unwrap();
        assert_eq!(est.norm.estimate, 3f64.sqrt());
        assert_eq!(est.norm.lo, est.norm.hi);
    }

    #[test]
    fn reproducible_for_a_fixed_seed() {
        let a = BoxUnion::point(&[0.2, 0.3]);
        let omega = DomainBox::unit(2);
        let opts = NormOptions { budget: 50_000, seed: 4, depth: Some(12) };
        let x = lp_norm_estimate(&a, 0.7, 2.0, &omega, &opts).unwrap();
        let y = lp_norm_estimate(&a, 0.7, 2.0, &omega, &opts).unwrap();
        assert_eq!(x, y);
    }

    #[test]
    fn point_in_three_dimensions_is_guaranteed() {
        let a = BoxUnion::point(&[0.5, 0.5, 0.5]);
        let r = hp_check(&a, 2.5, 1.0, &DomainBox::unit(3), &HpOptions::default()).unwrap();
        assert_eq!(r.verdict, Verdict::Guaranteed);
        assert!((r.shell_slope - 3.0).abs() < 0.15, "{}", r.shell_slope);
        assert!(r.decaying);
    }

    #[test]
    fn side_face_is_not_guaranteed() {
        let omega = DomainBox::new(vec![-0.5, -0.5, -0.5], vec![1.5, 1.5, 1.5]).unwrap();
        let face = BoxUnion::single(vec![0.0, 0.0, 0.0], vec![0.0, 1.0, 1.0]).unwrap();
        let opts = HpOptions {
            norm: NormOptions { budget: 1 << 16, seed: 1, depth: Some(10) },
            scales_per_decade: 10,
        };
        let r = hp_check(&face, 1.5, 1.0, &omega, &opts).unwrap();
        assert!((r.dimension.slope - 2.0).abs() < 0.05);
        assert_eq!(r.verdict, Verdict::NotGuaranteed);
        assert!(!r.decaying);
    }

    #[test]
    fn grill_window_in_five_dimensions() {
        // grill of dimension N - 4 - 0.2 in R^5: C x [0, 1]^0 with dim 0.8
        let c = cantor_for_dimension(0.8, 14).unwrap();
        let g = cantor_grill(&c, 5, 0).unwrap();
        let (a, _) = place(&g, &Ball::new(vec![0.5; 5], 0.3)).unwrap();
        let omega = DomainBox::unit(5);
        let opts = HpOptions {
            norm: NormOptions { budget: 1 << 15, seed: 2, depth: None },
            scales_per_decade: 8,
        };
        let below = hp_check(&a, 2.0, 2.0, &omega, &opts).unwrap();
        assert!((below.analytic_threshold.unwrap() - 2.1).abs() < 1e-12);
        assert_eq!(below.verdict, Verdict::Guaranteed);
        assert_eq!(below.analytic_verdict, Some(Verdict::Guaranteed));
        let above = hp_check(&a, 2.15, 2.0, &omega, &opts).unwrap();
        assert_eq!(above.verdict, Verdict::NotGuaranteed);
        assert_eq!(above.analytic_verdict, Some(Verdict::NotGuaranteed));
        assert!(!above.decaying);
    }
}
