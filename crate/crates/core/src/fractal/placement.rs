use serde::{Deserialize, Serialize};

use super::union::{Ball, BoxUnion, SetKind};
use crate::{Error, Result};

/// Relative clearance between a placed set and the boundary of its ball.
pub const PLACEMENT_MARGIN: f64 = 0.05;

/// `x -> scale * P x + translation`, where `P` sends input axis `a` to output
/// axis `axis_permutation[a]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AffinePlacement {
    pub scale: f64,
    pub translation: Vec<f64>,
    pub axis_permutation: Vec<usize>,
}

impl AffinePlacement {
    pub fn new(scale: f64, translation: Vec<f64>, axis_permutation: Vec<usize>) -> Result<Self> {
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(Error::Domain(format!("placement scale {scale} must be positive")));
        }
        if translation.len() != axis_permutation.len() {
            return Err(Error::DimensionMismatch(format!(
                "translation has {} axes, permutation has {}",
                translation.len(),
                axis_permutation.len()
            )));
        }
        check_permutation(&axis_permutation)?;
        Ok(AffinePlacement {
            scale,
            translation,
            axis_permutation,
        })
    }

    pub fn identity(dim: usize) -> Self {
        AffinePlacement {
            scale: 1.0,
            translation: vec![0.0; dim],
            axis_permutation: (0..dim).collect(),
        }
    }

    pub fn dim(&self) -> usize {
        self.translation.len()
    }

    pub fn apply_point(&self, x: &[f64]) -> Vec<f64> {
        let mut y = self.translation.clone();
        for (a, &v) in x.iter().enumerate() {
            let b = self.axis_permutation[a];
            y[b] += self.scale * v;
        }
        y
    }

    /// Image of a union; the resolution scales with the map.
    pub fn apply(&self, set: &BoxUnion) -> Result<BoxUnion> {
        if set.dim() != self.dim() {
            return Err(Error::DimensionMismatch(format!(
                "placement in R^{} applied to a set in R^{}",
                self.dim(),
                set.dim()
            )));
        }
        let n = self.dim();
        let mut out = set.map_boxes(n, |lo, hi, coords| {
            let base = coords.len();
            coords.extend_from_slice(&self.translation);
            coords.extend_from_slice(&self.translation);
            for a in 0..n {
                let b = self.axis_permutation[a];
                coords[base + b] += self.scale * lo[a];
                coords[base + n + b] += self.scale * hi[a];
            }
        });
        if let Some(r) = set.resolution() {
            out = out.with_resolution(r * self.scale);
        }
        let mut meta = set.meta().clone();
        meta.kind = SetKind::Placed;
        meta.placement = Some(self.clone());
        Ok(out.with_meta(meta))
    }
}

fn check_permutation(perm: &[usize]) -> Result<()> {
    let mut seen = vec![false; perm.len()];
    for &p in perm {
        if p >= perm.len() || seen[p] {
            return Err(Error::Domain(format!("{perm:?} is not a permutation")));
        }
        seen[p] = true;
    }
    Ok(())
}

/// Places `set` inside `ball` with the largest scale that keeps every point
/// within `(1 - PLACEMENT_MARGIN) * radius` of the center.
pub fn place(set: &BoxUnion, ball: &Ball) -> Result<(BoxUnion, AffinePlacement)> {
    place_with_permutation(set, ball, (0..set.dim()).collect())
}

/// As [`place`], after permuting the axes of `set`.
pub fn place_with_permutation(
    set: &BoxUnion,
    ball: &Ball,
    axis_permutation: Vec<usize>,
) -> Result<(BoxUnion, AffinePlacement)> {
    if set.is_empty() {
        return Err(Error::Domain("cannot place an empty set".into()));
    }
    if !(ball.radius > 0.0) {
        return Err(Error::Domain(format!("ball radius {} must be positive", ball.radius)));
    }
    if ball.center.len() != set.dim() || axis_permutation.len() != set.dim() {
        return Err(Error::DimensionMismatch(format!(
            "set in R^{}, ball in R^{}, permutation of {} axes",
            set.dim(),
            ball.center.len(),
            axis_permutation.len()
        )));
    }
    check_permutation(&axis_permutation)?;
    let (lo, hi) = set.bounding_box();
    let half_diag = 0.5 * set.diameter();
    let scale = if half_diag > 0.0 {
        (1.0 - PLACEMENT_MARGIN) * ball.radius / half_diag
    } else {
        1.0
    };
    let mut translation = ball.center.clone();
    for a in 0..set.dim() {
        let mid = 0.5 * (lo[a] + hi[a]);
        translation[axis_permutation[a]] -= scale * mid;
    }
    let placement = AffinePlacement::new(scale, translation, axis_permutation)?;
    let placed = placement.apply(set)?;
    Ok((placed, placement))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fractal::{cantor_for_dimension, cantor_grill};

    fn max_vertex_distance(u: &BoxUnion, c: &[f64]) -> f64 {
        let n = u.dim();
        let mut worst: f64 = 0.0;
        for (lo, hi) in u.boxes() {
            for mask in 0..(1usize << n) {
                let d2: f64 = (0..n)
                    .map(|a| {
                        let v = if mask >> a & 1 == 1 { hi[a] } else { lo[a] };
                        (v - c[a]) * (v - c[a])
                    })
                    .sum();
                worst = worst.max(d2.sqrt());
            }
        }
        worst
    }

    #[test]
    fn unit_cube_into_unit_ball() {
        for n in 1..=5 {
            let cube = BoxUnion::single(vec![0.0; n], vec![1.0; n]).unwrap();
            let ball = Ball::new(vec![0.0; n], 1.0);
            let (placed, p) = place(&cube, &ball).unwrap();
            // half diagonal of the unit cube is sqrt(N)/2
            assert!((p.scale - 1.9 / (n as f64).sqrt()).abs() < 1e-12);
            assert!(max_vertex_distance(&placed, &ball.center) <= 0.95 * (1.0 + 1e-12));
        }
    }

    #[test]
    fn point_is_only_translated() {
        let p = BoxUnion::point(&[0.3, 0.4]);
        let ball = Ball::new(vec![1.0, -1.0], 0.01);
        let (placed, pl) = place(&p, &ball).unwrap();
        assert_eq!(pl.scale, 1.0);
        assert!((placed.lo(0)[0] - 1.0).abs() < 1e-15 && (placed.lo(0)[1] + 1.0).abs() < 1e-15);
    }

    #[test]
    fn grill_into_small_ball() {
        let c = cantor_for_dimension(0.5, 6).unwrap();
        let g = cantor_grill(&c, 3, 1).unwrap();
        let ball = Ball::new(vec![0.5, 0.5, 0.5], 0.1);
        let (placed, _) = place(&g, &ball).unwrap();
        assert!(max_vertex_distance(&placed, &ball.center) <= 0.095 * (1.0 + 1e-12));
        assert_eq!(placed.len(), g.len());
        assert_eq!(placed.target_dim(), g.target_dim());
    }

    #[test]
    fn permutation_moves_the_thin_axis() {
        let c = cantor_for_dimension(0.5, 2).unwrap();
        let g = cantor_grill(&c, 2, 0).unwrap();
        let ball = Ball::new(vec![0.0, 0.0], 1.0);
        let (placed, _) = place_with_permutation(&g, &ball, vec![1, 0]).unwrap();
        for (lo, hi) in placed.boxes() {
            assert!((lo[0] - hi[0]).abs() < 1e-15);
            assert!(hi[1] > lo[1]);
        }
        assert!(place_with_permutation(&g, &ball, vec![0, 0]).is_err());
    }
}
