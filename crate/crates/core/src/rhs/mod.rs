//! Right-hand sides `F(x) = sum_k c_k / ||d(., A_k)^-g_k||_2 * d(x, A_k)^-g_k`.

mod norm;
mod stein;

use log::info;
use serde::{Deserialize, Serialize};

use crate::distance::DomainBox;
use crate::fractal::{box_counting_dimension, default_scale_range, BoxUnion, FIT_TOLERANCE};
use crate::rng::derive_seed;
use crate::{Error, Result};

pub use norm::{
    hp_check, lp_norm_estimate, HpOptions, IntegrabilityReport, LpNormEstimate, NormInterval,
    NormOptions, ShellContribution, Verdict, DECAY_RATIO,
};
pub use stein::{stein_dense_function, SteinFunction};

/// `c_k = 2^-k min(1, lo_k)`, so that both `sum c_k` and `sum c_k / lo_k`
/// have tails at most `2^-K` after `K` terms.
pub fn coefficient_schedule(norms: &[NormInterval]) -> Result<Vec<f64>> {
    norms
        .iter()
        .enumerate()
        .map(|(i, n)| {
            if !(n.lo > 0.0) {
                return Err(Error::Domain(format!(
                    "norm lower bound {} of term {} is not positive",
                    n.lo,
                    i + 1
                )));
            }
            let w = 0.5f64.powi(i as i32 + 1);
            Ok(w * n.lo.min(1.0))
        })
        .collect()
}

/// 1-based pairs `(k, j)` with `k <= k_max`, `j <= j_max`, ordered by
/// anti-diagonal `k + j` and then by `k`.
pub fn diagonal_order(k_max: usize, j_max: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::with_capacity(k_max * j_max);
    for s in 2..=k_max + j_max {
        for k in 1..s {
            let j = s - k;
            if k <= k_max && j <= j_max {
                out.push((k, j));
            }
        }
    }
    out
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RhsTerm {
    pub set: BoxUnion,
    pub gamma: f64,
    /// Raw schedule coefficient.
    pub c: f64,
    /// Estimate of `||d(., A_k)^-g_k||_{L^2(Omega)}`.
    pub norm: NormInterval,
    /// `(k, j)` for double-indexed families.
    pub label: Option<(usize, usize)>,
}

impl RhsTerm {
    /// `c_k / ||d^-g_k||`, using the point estimate of the norm. Since the
    /// estimate is at least the lower bound, this never exceeds `c_k / lo_k`.
    pub fn normalized(&self) -> f64 {
        self.c / self.norm.estimate
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Grade {
    /// Every term satisfies `2 < gamma < (N - dim A_k) / 2`.
    Theorem,
    /// Only `gamma > 0` is required.
    Exploratory,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BuildOptions {
    pub grade: Grade,
    pub norm: NormOptions,
    /// Attach an integrability report per term.
    pub diagnostics: bool,
    pub scales_per_decade: usize,
    pub labels: Option<Vec<(usize, usize)>>,
}

impl Default for BuildOptions {
    fn default() -> Self {
        BuildOptions {
            grade: Grade::Theorem,
            norm: NormOptions::default(),
            diagnostics: true,
            scales_per_decade: 10,
            labels: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SingularRhs {
    domain: DomainBox,
    terms: Vec<RhsTerm>,
    truncation: usize,
    grade: Grade,
    #[serde(skip)]
    union: Option<BoxUnion>,
    diagnostics: Vec<IntegrabilityReport>,
}

impl SingularRhs {
    /// Assembles a right-hand side from terms whose coefficients and norms
    /// are already known.
    pub fn from_terms(domain: DomainBox, terms: Vec<RhsTerm>, truncation: usize, grade: Grade) -> Result<Self> {
        if terms.is_empty() {
            return Err(Error::Domain("a right-hand side needs at least one term".into()));
        }
        for (i, t) in terms.iter().enumerate() {
            if t.set.dim() != domain.dim() {
                return Err(Error::DimensionMismatch(format!(
                    "term {} lives in R^{}, domain in R^{}",
                    i + 1,
                    t.set.dim(),
                    domain.dim()
                )));
            }
            if t.set.is_empty() || !(t.gamma > 0.0) || !(t.c > 0.0) || !(t.norm.lo > 0.0) {
                return Err(Error::Domain(format!(
                    "term {}: need a nonempty set, gamma > 0, c > 0 and a positive norm bound",
                    i + 1
                )));
            }
        }
        let mut rhs = SingularRhs {
            domain,
            truncation: truncation.clamp(1, terms.len()),
            terms,
            grade,
            union: None,
            diagnostics: Vec::new(),
        };
        rhs.rebuild_union()?;
        Ok(rhs)
    }

    fn rebuild_union(&mut self) -> Result<()> {
        let parts: Vec<&BoxUnion> = self.terms.iter().map(|t| &t.set).collect();
        self.union = Some(BoxUnion::union(&parts)?);
        Ok(())
    }

    /// Restores the cached union after deserialization.
    pub fn restored(mut self) -> Result<Self> {
        self.rebuild_union()?;
        Ok(self)
    }

    pub fn domain(&self) -> &DomainBox {
        &self.domain
    }

    pub fn terms(&self) -> &[RhsTerm] {
        &self.terms
    }

    pub fn truncation(&self) -> usize {
        self.truncation
    }

    pub fn grade(&self) -> Grade {
        self.grade
    }

    pub fn dim(&self) -> usize {
        self.domain.dim()
    }

    /// `A = union of all A_k`.
    pub fn union(&self) -> &BoxUnion {
        self.union.as_ref().expect("union is built on construction")
    }

    pub fn diagnostics(&self) -> &[IntegrabilityReport] {
        &self.diagnostics
    }

    /// `sup_k gamma_k`.
    pub fn gamma_bar(&self) -> f64 {
        self.terms.iter().map(|t| t.gamma).fold(0.0, f64::max)
    }

    /// `sum_k c~_k` over all stored terms.
    pub fn normalized_sum(&self) -> f64 {
        self.terms.iter().map(RhsTerm::normalized).sum()
    }

    /// `sum_{k > K} c~_k` over the stored terms.
    pub fn tail_sum(&self, k: usize) -> f64 {
        self.terms.iter().skip(k).map(RhsTerm::normalized).sum()
    }

    /// Sum of all stored terms; `+inf` on `A`.
    pub fn value(&self, x: &[f64]) -> f64 {
        eval_rhs(self, x, self.terms.len()).0
    }
}

/// Checks `2 < gamma < (N - dim) / 2`; `term` is 1-based and only used in
/// the message.
pub fn check_window(n: usize, dim: f64, gamma: f64, term: usize) -> Result<()> {
    if !(gamma > 2.0) {
        return Err(Error::Window(format!(
            "term {term}: gamma = {gamma} violates 2 < gamma"
        )));
    }
    let upper = 0.5 * (n as f64 - dim);
    if !(gamma < upper) {
        return Err(Error::Window(format!(
            "term {term}: gamma = {gamma} violates gamma < (N - dim_B A)/2 = ({n} - {dim})/2 = {upper}"
        )));
    }
    Ok(())
}

/// Builds `F` from sets and exponents: estimates every normalizer, applies
/// the coefficient schedule and, for theorem-grade requests, enforces the
/// integrability window with each set's analytic dimension (or its measured
/// box-count slope plus the fit tolerance when no analytic value is known).
pub fn build_rhs(
    sets: &[BoxUnion],
    exponents: &[f64],
    omega: &DomainBox,
    truncation: usize,
    opts: &BuildOptions,
) -> Result<SingularRhs> {
    if sets.is_empty() || sets.len() != exponents.len() {
        return Err(Error::Input(format!(
            "{} sets and {} exponents",
            sets.len(),
            exponents.len()
        )));
    }
    if let Some(labels) = &opts.labels {
        if labels.len() != sets.len() {
            return Err(Error::Input(format!("{} labels for {} sets", labels.len(), sets.len())));
        }
    }
    let n = omega.dim();
    for (i, (set, &gamma)) in sets.iter().zip(exponents).enumerate() {
        if set.dim() != n {
            return Err(Error::DimensionMismatch(format!(
                "set {} in R^{}, domain in R^{n}",
                i + 1,
                set.dim()
            )));
        }
        if !omega.contains_set(set) {
            return Err(Error::Domain(format!("the closure of set {} is not inside the domain", i + 1)));
        }
        match opts.grade {
            Grade::Theorem => {
                let dim = match set.target_dim() {
                    Some(d) => d,
                    None => {
                        box_counting_dimension(set, default_scale_range(set), opts.scales_per_decade)?.slope
                            + FIT_TOLERANCE
                    }
                };
                check_window(n, dim, gamma, i + 1)?;
            }
            Grade::Exploratory => {
                if !(gamma > 0.0) {
                    return Err(Error::Window(format!("term {}: gamma = {gamma} violates gamma > 0", i + 1)));
                }
            }
        }
    }
    let mut estimates = Vec::with_capacity(sets.len());
    for (i, (set, &gamma)) in sets.iter().zip(exponents).enumerate() {
        let norm_opts = NormOptions {
            seed: derive_seed(opts.norm.seed, i as u64 + 1),
            ..opts.norm
        };
        let est = lp_norm_estimate(set, gamma, 2.0, omega, &norm_opts)?;
        info!(
            "term {}: gamma {gamma}, norm in [{:.4e}, {:.4e}]",
            i + 1,
            est.norm.lo,
            est.norm.hi
        );
        estimates.push(est);
    }
    let norms: Vec<NormInterval> = estimates.iter().map(|e| e.norm).collect();
    let coeffs = coefficient_schedule(&norms)?;
    let terms: Vec<RhsTerm> = sets
        .iter()
        .zip(exponents)
        .zip(coeffs.iter().zip(&norms))
        .enumerate()
        .map(|(i, ((set, &gamma), (&c, &norm)))| RhsTerm {
            set: set.clone(),
            gamma,
            c,
            norm,
            label: opts.labels.as_ref().map(|l| l[i]),
        })
        .collect();
    let mut rhs = SingularRhs::from_terms(omega.clone(), terms, truncation, opts.grade)?;
    if opts.diagnostics {
        for (set, est) in sets.iter().zip(&estimates) {
            let dim = box_counting_dimension(set, default_scale_range(set), opts.scales_per_decade)?;
            rhs.diagnostics
                .push(norm::assemble_report(set, est.gamma, 2.0, omega, dim, est));
        }
    }
    Ok(rhs)
}

/// Partial sum of the first `k` normalized terms at `x`, with the bound
/// `(sum_{i > k} c~_i) max(1, d(x, A)^-gamma_bar)` on the rest. On `A` the
/// value is `+inf` and the bound 0.
pub fn eval_rhs(f: &SingularRhs, x: &[f64], k: usize) -> (f64, f64) {
    let d_all = f.union().distance_sq(x).sqrt();
    if d_all == 0.0 {
        return (f64::INFINITY, 0.0);
    }
    let k = k.min(f.terms.len());
    let mut s = 0.0;
    for t in &f.terms[..k] {
        let d = t.set.distance_sq(x).sqrt();
        s += t.normalized() * d.powf(-t.gamma);
    }
    let tail = f.tail_sum(k) * d_all.powf(-f.gamma_bar()).max(1.0);
    (s, tail)
}

/// `L(delta) = gamma_bar min(1, delta)^(-gamma_bar - 1) sum_k c~_k`, a
/// Lipschitz constant for `F` on `{x in Omega : d(x, A) > delta}`.
pub fn lipschitz_bound(f: &SingularRhs, delta: f64) -> Result<f64> {
    let diam = f.domain.diameter();
    if !(delta > 0.0 && delta < diam) {
        return Err(Error::Domain(format!(
            "delta = {delta} must lie in (0, diam(Omega)) = (0, {diam})"
        )));
    }
    let g = f.gamma_bar();
    Ok(g * delta.min(1.0).powf(-g - 1.0) * f.normalized_sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fractal::{cantor_for_dimension, cantor_grill, place, Ball};
    use num_bigint::BigInt;
    use num_rational::BigRational;
    use num_traits::{One, Zero};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    fn interval(v: f64) -> NormInterval {
        NormInterval::exact(v)
    }

    fn term(set: BoxUnion, gamma: f64, c: f64, norm: f64) -> RhsTerm {
        RhsTerm {
            set,
            gamma,
            c,
            norm: interval(norm),
            label: None,
        }
    }

    #[test]
    fn schedule_with_large_norms_is_geometric() {
        let norms = vec![interval(3.0); 10];
        let c = coefficient_schedule(&norms).unwrap();
        for (k, ck) in c.iter().enumerate() {
            assert_eq!(*ck, 0.5f64.powi(k as i32 + 1));
        }
        assert_eq!(c.iter().sum::<f64>(), 1.0 - 0.5f64.powi(10));
    }

    #[test]
    fn schedule_scales_small_norms() {
        let c = coefficient_schedule(&[interval(0.5)]).unwrap();
        assert_eq!(c[0], 0.25);
        let bad = NormInterval { lo: 0.0, hi: 1.0, estimate: 0.5 };
        assert!(matches!(coefficient_schedule(&[bad]), Err(Error::Domain(_))));
    }

    fn exact(v: f64) -> BigRational {
        BigRational::from_float(v).unwrap()
    }

    #[test]
    fn schedule_tails_in_exact_arithmetic() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(17);
        let len = 64;
        let norms: Vec<NormInterval> = (0..len)
            .map(|_| {
                let lo = 10f64.powf(rng.random_range(-6.0..3.0));
                NormInterval { lo, hi: 2.0 * lo, estimate: 1.5 * lo }
            })
            .collect();
        let c = coefficient_schedule(&norms).unwrap();
        let two = BigRational::from_integer(BigInt::from(2));
        for k in 0..len {
            let pow = two.pow(-(k as i32 + 1));
            let cap = if exact(norms[k].lo) < BigRational::one() { &pow * exact(norms[k].lo) } else { pow.clone() };
            assert!(exact(c[k]) <= cap && exact(c[k]) > BigRational::zero());
        }
        for big_k in 1..=40usize {
            let bound = two.pow(1 - big_k as i32);
            let mut t1 = BigRational::zero();
            let mut t2 = BigRational::zero();
            for k in big_k..len {
                t1 += exact(c[k]);
                t2 += exact(c[k]) / exact(norms[k].lo);
            }
            assert!(t1 <= bound && t2 <= bound, "K = {big_k}");
        }
    }

    #[test]
    fn diagonal_enumeration() {
        assert_eq!(
            diagonal_order(2, 3),
            vec![(1, 1), (1, 2), (2, 1), (1, 3), (2, 2), (2, 3)]
        );
        assert_eq!(diagonal_order(4, 4).len(), 16);
    }

    fn one_term_point() -> SingularRhs {
        let omega = DomainBox::new(vec![-4.0, -4.0], vec![4.0, 4.0]).unwrap();
        let a = BoxUnion::point(&[0.0, 0.0]);
        SingularRhs::from_terms(omega, vec![term(a, 3.0, 0.5, 2.0)], 1, Grade::Exploratory).unwrap()
    }

    #[test]
    fn one_term_evaluation() {
        let f = one_term_point();
        let (v, tail) = eval_rhs(&f, &[2.0, 0.0], 1);
        assert_eq!(v, 0.25 * 0.125);
        assert_eq!(tail, 0.0);
        assert_eq!(eval_rhs(&f, &[0.0, 0.0], 1), (f64::INFINITY, 0.0));
    }

    #[test]
    fn tail_at_unit_distance_is_the_coefficient_tail() {
        let omega = DomainBox::new(vec![-3.0], vec![3.0]).unwrap();
        let terms = (0..5)
            .map(|k| term(BoxUnion::point(&[0.1 * k as f64]), 2.0 + 0.1 * k as f64, 0.5f64.powi(k + 1), 1.0))
            .collect();
        let f = SingularRhs::from_terms(omega, terms, 5, Grade::Exploratory).unwrap();
        // nearest point of A is 0.4, at distance 1
        let (_, tail) = eval_rhs(&f, &[1.4], 2);
        assert!((tail - f.tail_sum(2)).abs() < 1e-15);
        assert_eq!(f.tail_sum(2), 0.125 + 0.0625 + 0.03125);
    }

    #[test]
    fn lipschitz_closed_forms() {
        let omega = DomainBox::new(vec![-4.0, -4.0], vec![4.0, 4.0]).unwrap();
        let a = BoxUnion::point(&[0.0, 0.0]);
        let f = SingularRhs::from_terms(omega, vec![term(a, 3.0, 1.0, 1.0)], 1, Grade::Exploratory).unwrap();
        assert_eq!(lipschitz_bound(&f, 0.5).unwrap(), 48.0);
        assert_eq!(lipschitz_bound(&f, 2.0).unwrap(), 3.0);
        assert!(lipschitz_bound(&f, 0.0).is_err());
        assert!(lipschitz_bound(&f, 20.0).is_err());
    }

    #[test]
    fn sampled_difference_quotients_respect_the_bound() {
        let omega = DomainBox::unit(2);
        let c = cantor_for_dimension(0.5, 6).unwrap();
        let g = cantor_grill(&c, 2, 0).unwrap();
        let (a1, _) = place(&g, &Ball::new(vec![0.3, 0.3], 0.2)).unwrap();
        let a2 = BoxUnion::point(&[0.7, 0.6]);
        let f = SingularRhs::from_terms(
            omega.clone(),
            vec![term(a1, 1.5, 0.5, 1.7), term(a2, 0.8, 0.25, 0.9)],
            2,
            Grade::Exploratory,
        )
        .unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for delta in [0.1, 0.25] {
            let l = lipschitz_bound(&f, delta).unwrap();
            let mut n = 0;
            while n < 10_000 {
                let x = [rng.random::<f64>(), rng.random::<f64>()];
                let y = [rng.random::<f64>(), rng.random::<f64>()];
                if f.union().distance_sq(&x).sqrt() <= delta || f.union().distance_sq(&y).sqrt() <= delta {
                    continue;
                }
                let q = (f.value(&x) - f.value(&y)).abs() / ((x[0] - y[0]).hypot(x[1] - y[1]));
                assert!(q <= l, "quotient {q} exceeds {l}");
                n += 1;
            }
        }
    }

    #[test]
    fn window_violations_are_named() {
        let omega = DomainBox::unit(5);
        let c = cantor_for_dimension(0.8, 10).unwrap();
        let (a, _) = place(&cantor_grill(&c, 5, 0).unwrap(), &Ball::new(vec![0.5; 5], 0.2)).unwrap();
        let opts = BuildOptions { diagnostics: false, ..BuildOptions::default() };
        match build_rhs(&[a.clone()], &[2.2], &omega, 1, &opts) {
            Err(Error::Window(msg)) => assert!(msg.contains("gamma < (N - dim_B A)/2"), "{msg}"),
            other => panic!("expected window error, got {other:?}"),
        }
        match build_rhs(&[a], &[1.9], &omega, 1, &opts) {
            Err(Error::Window(msg)) => assert!(msg.contains("2 < gamma"), "{msg}"),
            other => panic!("expected window error, got {other:?}"),
        }
    }

    #[test]
    fn theorem_grade_single_term() {
        let omega = DomainBox::unit(5);
        let c = cantor_for_dimension(0.6, 10).unwrap();
        let (a, _) = place(&cantor_grill(&c, 5, 0).unwrap(), &Ball::new(vec![0.5; 5], 0.2)).unwrap();
        let opts = BuildOptions {
            norm: NormOptions { budget: 1 << 15, seed: 5, depth: None },
            ..BuildOptions::default()
        };
        let f = build_rhs(&[a], &[2.1], &omega, 1, &opts).unwrap();
        let t = &f.terms()[0];
        assert_eq!(t.c, 0.5 * t.norm.lo.min(1.0));
        assert!(f.normalized_sum() <= 0.5);
        assert_eq!(f.diagnostics().len(), 1);
        assert_eq!(f.diagnostics()[0].verdict, Verdict::Guaranteed);
        let x = [0.9; 5];
        let d = t.set.distance_sq(&x).sqrt();
        assert!((f.value(&x) - t.normalized() * d.powf(-2.1)).abs() < 1e-12);
        // normalizing by the estimate leaves a term of unit L^2 norm
        let again = lp_norm_estimate(
            &t.set,
            2.1,
            2.0,
            &omega,
            &NormOptions { budget: 1 << 15, seed: 99, depth: None },
        )
        .unwrap();
        assert!(again.norm.scaled(t.norm.estimate).contains(1.0), "{:?}", again.norm.scaled(t.norm.estimate));
    }

    #[test]
    fn normalized_sum_with_large_norms_is_below_one() {
        let omega = DomainBox::unit(1);
        let terms: Vec<RhsTerm> = (0..8)
            .map(|k| term(BoxUnion::point(&[0.1 + 0.1 * k as f64]), 0.3, 0.5f64.powi(k + 1), 1.0 + k as f64))
            .collect();
        let f = SingularRhs::from_terms(omega, terms, 8, Grade::Exploratory).unwrap();
        assert!(f.normalized_sum() <= 1.0);
    }

    proptest! {
        #[test]
        fn mean_value_inequality(u in 0.5f64..4.0, v in 0.5f64..4.0, alpha in -5.0f64..-0.1) {
            let lhs = (u.powf(alpha) - v.powf(alpha)).abs();
            let rhs = alpha.abs() * u.powf(alpha - 1.0).max(v.powf(alpha - 1.0)) * (u - v).abs();
            prop_assert!(lhs <= rhs + 1e-12);
        }

        #[test]
        fn truncation_consistency(x in prop::collection::vec(-3.0f64..3.0, 1), k in 1usize..5, extra in 1usize..4) {
            let omega = DomainBox::new(vec![-3.0], vec![3.0]).unwrap();
            let terms = (0..8)
                .map(|i| term(BoxUnion::point(&[-1.0 + 0.3 * i as f64]), 0.5 + 0.2 * i as f64, 0.5f64.powi(i + 1), 0.7 + 0.1 * i as f64))
                .collect();
            let f = SingularRhs::from_terms(omega, terms, 8, Grade::Exploratory).unwrap();
            let (a, tail) = eval_rhs(&f, &x, k);
            let (b, _) = eval_rhs(&f, &x, k + extra);
            if a.is_finite() {
                prop_assert!((b - a).abs() <= tail * (1.0 + 1e-12));
            }
        }
    }
}
