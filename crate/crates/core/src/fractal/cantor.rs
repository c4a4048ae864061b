use serde::{Deserialize, Serialize};

use super::union::{BoxUnion, SetKind, SetMeta};
use crate::{Error, Result};

/// Shortest interval length we are willing to build: below this, interval
/// endpoints in [0, 1] stop being distinguishable in f64.
const MIN_INTERVAL_LENGTH: f64 = 64.0 * f64::EPSILON;

/// Upper limit on the number of intervals held in memory.
const MAX_GENERATION: usize = 24;

/// Contraction ratios `lambda_n`, one per generation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatioSchedule {
    ratios: Vec<f64>,
}

impl RatioSchedule {
    pub fn new(ratios: Vec<f64>) -> Result<Self> {
        if ratios.is_empty() {
            return Err(Error::Domain("ratio schedule needs at least one generation".into()));
        }
        if let Some((n, r)) = ratios
            .iter()
            .enumerate()
            .find(|(_, r)| !(**r > 0.0 && **r < 0.5))
        {
            return Err(Error::Domain(format!(
                "ratio {r} at generation {} is outside (0, 1/2)",
                n + 1
            )));
        }
        Ok(RatioSchedule { ratios })
    }

    /// Constant ratio `2^(-1/d)`, whose limit set has dimension `d`.
    pub fn uniform_for_dimension(d: f64, generations: usize) -> Result<Self> {
        if !(d > 0.0 && d < 1.0) {
            return Err(Error::Domain(format!("target dimension {d} is outside (0, 1)")));
        }
        Self::new(vec![uniform_ratio(d); generations.max(1)])
    }

    pub fn ratios(&self) -> &[f64] {
        &self.ratios
    }

    pub fn len(&self) -> usize {
        self.ratios.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ratios.is_empty()
    }
}

pub(crate) fn uniform_ratio(d: f64) -> f64 {
    (-std::f64::consts::LN_2 / d).exp()
}

/// Finite-generation realization of a two-children Cantor construction on
/// [0, 1].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneralizedCantorSet {
    schedule: RatioSchedule,
    generation: usize,
    intervals: Vec<[f64; 2]>,
    target_dim: f64,
}

impl GeneralizedCantorSet {
    /// Builds all `schedule.len()` generations.
    pub fn from_schedule(schedule: RatioSchedule) -> Result<Self> {
        let generation = schedule.len();
        let mut length = 1.0;
        for (g, r) in schedule.ratios.iter().enumerate() {
            length *= r;
            if length < MIN_INTERVAL_LENGTH {
                return Err(Error::Precision {
                    requested: generation,
                    max_safe: g,
                });
            }
        }
        if generation > MAX_GENERATION {
            return Err(Error::Precision {
                requested: generation,
                max_safe: MAX_GENERATION,
            });
        }
        let mut intervals = vec![[0.0, 1.0]];
        let mut parent_len = 1.0;
        for &r in &schedule.ratios {
            let child = parent_len * r;
            let mut next = Vec::with_capacity(intervals.len() * 2);
            for [a, b] in intervals {
                next.push([a, a + child]);
                next.push([b - child, b]);
            }
            intervals = next;
            parent_len = child;
        }
        let log_len: f64 = schedule.ratios.iter().map(|r| r.ln()).sum();
        let target_dim = generation as f64 * std::f64::consts::LN_2 / -log_len;
        Ok(GeneralizedCantorSet {
            schedule,
            generation,
            intervals,
            target_dim,
        })
    }

    pub fn schedule(&self) -> &RatioSchedule {
        &self.schedule
    }

    pub fn generation(&self) -> usize {
        self.generation
    }

    pub fn intervals(&self) -> &[[f64; 2]] {
        &self.intervals
    }

    /// Dimension of the limit set (exact for uniform schedules).
    pub fn target_dim(&self) -> f64 {
        self.target_dim
    }

    /// Common length of the generation-g intervals, which also bounds the
    /// Hausdorff distance to the limit set.
    pub fn interval_length(&self) -> f64 {
        self.schedule.ratios.iter().product()
    }

    pub fn hausdorff_bound(&self) -> f64 {
        self.interval_length()
    }

    /// The set as a union of intervals in R^1.
    pub fn to_union(&self) -> BoxUnion {
        let coords: Vec<f64> = self.intervals.iter().flat_map(|iv| iv.iter().copied()).collect();
        BoxUnion::from_flat(1, coords)
            .with_target_dim(self.target_dim)
            .with_resolution(self.interval_length())
            .with_meta(self.meta(SetKind::Cantor))
    }

    fn meta(&self, kind: SetKind) -> SetMeta {
        SetMeta {
            kind,
            ratios: Some(self.schedule.ratios.clone()),
            generation: Some(self.generation),
            placement: None,
        }
    }
}

/// Uniform-ratio Cantor set of limit dimension `d`, realized to `generation`.
pub fn cantor_for_dimension(d: f64, generation: usize) -> Result<GeneralizedCantorSet> {
    if generation == 0 {
        return Err(Error::Domain("generation must be at least 1".into()));
    }
    if !(d > 0.0 && d < 1.0) {
        return Err(Error::Domain(format!("target dimension {d} is outside (0, 1)")));
    }
    let lambda = uniform_ratio(d);
    if lambda.powi(generation as i32) < MIN_INTERVAL_LENGTH || generation > MAX_GENERATION {
        let by_length = (MIN_INTERVAL_LENGTH.ln() / lambda.ln()).floor() as usize;
        return Err(Error::Precision {
            requested: generation,
            max_safe: by_length.min(MAX_GENERATION),
        });
    }
    let mut set = GeneralizedCantorSet::from_schedule(RatioSchedule::new(vec![lambda; generation])?)?;
    set.target_dim = d;
    Ok(set)
}

/// `C x [0,1]^m x {0}^(N-1-m)` as boxes in R^N.
pub fn cantor_grill(c: &GeneralizedCantorSet, ambient: usize, thick_axes: usize) -> Result<BoxUnion> {
    if thick_axes + 1 > ambient {
        return Err(Error::DimensionMismatch(format!(
            "grill with {thick_axes} thick axes does not fit in R^{ambient}"
        )));
    }
    let mut coords = Vec::with_capacity(c.intervals.len() * 2 * ambient);
    for &[a, b] in &c.intervals {
        coords.push(a);
        coords.extend(std::iter::repeat_n(0.0, ambient - 1));
        coords.push(b);
        coords.extend(std::iter::repeat_n(1.0, thick_axes));
        coords.extend(std::iter::repeat_n(0.0, ambient - 1 - thick_axes));
    }
    Ok(BoxUnion::from_flat(ambient, coords)
        .with_target_dim(c.target_dim + thick_axes as f64)
        .with_resolution(c.interval_length())
        .with_meta(c.meta(SetKind::Grill)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn middle_thirds_first_generation() {
        let d = 2f64.ln() / 3f64.ln();
        let c = cantor_for_dimension(d, 1).unwrap();
        let iv = c.intervals();
        assert_eq!(iv.len(), 2);
        assert!((iv[0][0] - 0.0).abs() < 1e-15 && (iv[0][1] - 1.0 / 3.0).abs() < 1e-15);
        assert!((iv[1][0] - 2.0 / 3.0).abs() < 1e-15 && (iv[1][1] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn quarter_ratio_lengths() {
        let c = cantor_for_dimension(0.5, 2).unwrap();
        assert_eq!(c.schedule().ratios()[0], 0.25);
        assert_eq!(c.interval_length(), 1.0 / 16.0);
        for [a, b] in c.intervals() {
            assert_eq!(b - a, 1.0 / 16.0);
        }
    }

    #[test]
    fn base_case_is_anchored_at_both_ends() {
        for d in [0.1, 0.3, 0.77, 0.99] {
            let c = cantor_for_dimension(d, 1).unwrap();
            assert_eq!(c.intervals().len(), 2);
            assert_eq!(c.intervals()[0][0], 0.0);
            assert_eq!(c.intervals()[1][1], 1.0);
        }
    }

    #[test]
    fn generations_nest_and_stay_disjoint() {
        let c4 = cantor_for_dimension(0.7, 4).unwrap();
        let c5 = cantor_for_dimension(0.7, 5).unwrap();
        for w in c5.intervals().windows(2) {
            assert!(w[0][1] < w[1][0]);
        }
        for (k, child) in c5.intervals().iter().enumerate() {
            let parent = c4.intervals()[k / 2];
            assert!(child[0] >= parent[0] - 1e-15 && child[1] <= parent[1] + 1e-15);
        }
    }

    #[test]
    fn domain_and_precision_errors() {
        assert!(matches!(cantor_for_dimension(1.0, 3), Err(Error::Domain(_))));
        assert!(matches!(cantor_for_dimension(0.0, 3), Err(Error::Domain(_))));
        match cantor_for_dimension(0.2, 40) {
            Err(Error::Precision { max_safe, .. }) => {
                // lambda = 1/32, so 1/32^9 ~ 2.8e-14 is the last safe length
                assert_eq!(max_safe, 9);
                assert!(cantor_for_dimension(0.2, max_safe).is_ok());
            }
            other => panic!("expected precision error, got {other:?}"),
        }
        assert!(RatioSchedule::new(vec![0.5]).is_err());
    }

    #[test]
    fn grill_shape_and_dimension() {
        let c = cantor_for_dimension(0.5, 3).unwrap();
        let g = cantor_grill(&c, 4, 2).unwrap();
        assert_eq!(g.len(), 8);
        assert_eq!(g.target_dim(), Some(2.5));
        assert_eq!(g.lo(0), &[0.0, 0.0, 0.0, 0.0]);
        assert_eq!(g.hi(0), &[1.0 / 64.0, 1.0, 1.0, 0.0]);
        let flat = cantor_grill(&c, 3, 0).unwrap();
        assert_eq!(flat.target_dim(), Some(0.5));
        assert!(matches!(cantor_grill(&c, 2, 2), Err(Error::DimensionMismatch(_))));
    }
}
