use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use super::bvh::Bvh;
use super::placement::AffinePlacement;
use crate::{Error, Result};

/// Euclidean ball.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ball {
    pub center: Vec<f64>,
    pub radius: f64,
}

impl Ball {
    pub fn new(center: Vec<f64>, radius: f64) -> Self {
        Ball { center, radius }
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        dist_sq(&self.center, x) < self.radius * self.radius
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SetKind {
    Boxes,
    Cantor,
    Grill,
    Placed,
    Union,
}

/// Provenance carried along with a box union; it is what gets written to the
/// set description documents.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SetMeta {
    pub kind: SetKind,
    pub ratios: Option<Vec<f64>>,
    pub generation: Option<usize>,
    pub placement: Option<AffinePlacement>,
}

impl Default for SetMeta {
    fn default() -> Self {
        SetMeta {
            kind: SetKind::Boxes,
            ratios: None,
            generation: None,
            placement: None,
        }
    }
}

/// Finite union of closed axis-aligned boxes in R^N.
///
/// Boxes are stored flat: box `i` occupies `coords[2*N*i .. 2*N*(i+1)]` with
/// the lower corner first. A bounding-volume hierarchy is built on first use
/// and shared by distance queries and box counting.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(into = "UnionDoc", try_from = "UnionDoc")]
pub struct BoxUnion {
    dim: usize,
    coords: Vec<f64>,
    target_dim: Option<f64>,
    resolution: Option<f64>,
    meta: SetMeta,
    index: OnceLock<Bvh>,
}

impl BoxUnion {
    pub fn new<I>(dim: usize, boxes: I) -> Result<Self>
    where
        I: IntoIterator<Item = (Vec<f64>, Vec<f64>)>,
    {
        if dim == 0 {
            return Err(Error::Domain("box dimension must be positive".into()));
        }
        let mut coords = Vec::new();
        for (k, (lo, hi)) in boxes.into_iter().enumerate() {
            if lo.len() != dim || hi.len() != dim {
                return Err(Error::DimensionMismatch(format!(
                    "box {k} has corners of length {}/{}, expected {dim}",
                    lo.len(),
                    hi.len()
                )));
            }
            for a in 0..dim {
                if !(lo[a].is_finite() && hi[a].is_finite()) || lo[a] > hi[a] {
                    return Err(Error::Domain(format!(
                        "box {k} axis {a}: invalid bounds [{}, {}]",
                        lo[a], hi[a]
                    )));
                }
            }
            coords.extend_from_slice(&lo);
            coords.extend_from_slice(&hi);
        }
        Ok(Self::from_flat(dim, coords))
    }

    pub(crate) fn from_flat(dim: usize, coords: Vec<f64>) -> Self {
        debug_assert_eq!(coords.len() % (2 * dim), 0);
        BoxUnion {
            dim,
            coords,
            target_dim: None,
            resolution: None,
            meta: SetMeta::default(),
            index: OnceLock::new(),
        }
    }

    pub fn point(x: &[f64]) -> Self {
        let mut coords = x.to_vec();
        coords.extend_from_slice(x);
        Self::from_flat(x.len(), coords).with_target_dim(0.0)
    }

    pub fn single(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        Self::new(lo.len(), [(lo, hi)])
    }

    /// Union of several sets. Target dimension is the largest one (when all
    /// are known) and the resolution is the coarsest one.
    pub fn union(parts: &[&BoxUnion]) -> Result<Self> {
        let first = parts
            .first()
            .ok_or_else(|| Error::Domain("union of an empty list".into()))?;
        let dim = first.dim;
        let mut coords = Vec::new();
        let mut target = Some(f64::NEG_INFINITY);
        let mut resolution: Option<f64> = None;
        for p in parts {
            if p.dim != dim {
                return Err(Error::DimensionMismatch(format!(
                    "union of sets in R^{dim} and R^{}",
                    p.dim
                )));
            }
            coords.extend_from_slice(&p.coords);
            target = match (target, p.target_dim) {
                (Some(t), Some(d)) => Some(t.max(d)),
                _ => None,
            };
            if let Some(r) = p.resolution {
                resolution = Some(resolution.map_or(r, |q: f64| q.max(r)));
            }
        }
        let mut u = Self::from_flat(dim, coords);
        u.target_dim = target;
        u.resolution = resolution;
        u.meta.kind = SetKind::Union;
        Ok(u)
    }

    pub fn with_target_dim(mut self, d: f64) -> Self {
        self.target_dim = Some(d);
        self
    }

    pub fn with_resolution(mut self, r: f64) -> Self {
        self.resolution = Some(r);
        self
    }

    pub fn with_meta(mut self, meta: SetMeta) -> Self {
        self.meta = meta;
        self
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.coords.len() / (2 * self.dim)
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    /// Analytic dimension of the limit set this union approximates, if known.
    pub fn target_dim(&self) -> Option<f64> {
        self.target_dim
    }

    /// Size of the smallest constructed feature; below this scale the union no
    /// longer looks like its limit set.
    pub fn resolution(&self) -> Option<f64> {
        self.resolution
    }

    pub fn meta(&self) -> &SetMeta {
        &self.meta
    }

    pub fn lo(&self, i: usize) -> &[f64] {
        let s = 2 * self.dim * i;
        &self.coords[s..s + self.dim]
    }

    pub fn hi(&self, i: usize) -> &[f64] {
        let s = 2 * self.dim * i + self.dim;
        &self.coords[s..s + self.dim]
    }

    pub fn boxes(&self) -> impl Iterator<Item = (&[f64], &[f64])> + '_ {
        self.coords
            .chunks_exact(2 * self.dim)
            .map(move |c| c.split_at(self.dim))
    }

    pub(crate) fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub(crate) fn index(&self) -> &Bvh {
        self.index.get_or_init(|| Bvh::build(self.dim, &self.coords))
    }

    pub fn bounding_box(&self) -> (Vec<f64>, Vec<f64>) {
        let mut lo = vec![f64::INFINITY; self.dim];
        let mut hi = vec![f64::NEG_INFINITY; self.dim];
        for (l, h) in self.boxes() {
            for a in 0..self.dim {
                lo[a] = lo[a].min(l[a]);
                hi[a] = hi[a].max(h[a]);
            }
        }
        (lo, hi)
    }

    /// Diagonal of the bounding box.
    pub fn diameter(&self) -> f64 {
        if self.is_empty() {
            return 0.0;
        }
        let (lo, hi) = self.bounding_box();
        dist_sq(&lo, &hi).sqrt()
    }

    /// Exact squared Euclidean distance from `x` to the union.
    pub fn distance_sq(&self, x: &[f64]) -> f64 {
        self.index().nearest_sq(&self.coords, x, x)
    }

    /// Exact distance between the union and the closed box `[lo, hi]`.
    pub fn distance_to_box(&self, lo: &[f64], hi: &[f64]) -> f64 {
        self.index().nearest_sq(&self.coords, lo, hi).sqrt()
    }

    /// Whether some box meets the half-open cell `[lo, hi)`.
    pub fn meets_cell(&self, lo: &[f64], hi: &[f64]) -> bool {
        self.index().any_meets_cell(&self.coords, lo, hi)
    }

    /// Applies `f` to every box, returning a new union with the same metadata.
    pub(crate) fn map_boxes(&self, dim: usize, f: impl Fn(&[f64], &[f64], &mut Vec<f64>)) -> Self {
        let mut coords = Vec::with_capacity(self.len() * 2 * dim);
        for (l, h) in self.boxes() {
            f(l, h, &mut coords);
        }
        let mut u = Self::from_flat(dim, coords);
        u.target_dim = self.target_dim;
        u.resolution = self.resolution;
        u.meta = self.meta.clone();
        u
    }
}

pub(crate) fn dist_sq(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Squared distance between closed boxes.
pub(crate) fn box_box_sq(alo: &[f64], ahi: &[f64], blo: &[f64], bhi: &[f64]) -> f64 {
    let mut s = 0.0;
    for a in 0..alo.len() {
        let g = (alo[a] - bhi[a]).max(blo[a] - ahi[a]);
        if g > 0.0 {
            s += g * g;
        }
    }
    s
}

#[derive(Serialize, Deserialize)]
struct BoxDoc {
    lo: Vec<f64>,
    hi: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct UnionDoc {
    kind: SetKind,
    dimension: usize,
    ratios: Option<Vec<f64>>,
    generation: Option<usize>,
    boxes: Vec<BoxDoc>,
    target_dim: Option<f64>,
    resolution: Option<f64>,
    placement: Option<AffinePlacement>,
}

impl From<BoxUnion> for UnionDoc {
    fn from(u: BoxUnion) -> Self {
        UnionDoc {
            kind: u.meta.kind,
            dimension: u.dim,
            ratios: u.meta.ratios.clone(),
            generation: u.meta.generation,
            boxes: u
                .boxes()
                .map(|(l, h)| BoxDoc {
                    lo: l.to_vec(),
                    hi: h.to_vec(),
                })
                .collect(),
            target_dim: u.target_dim,
            resolution: u.resolution,
            placement: u.meta.placement.clone(),
        }
    }
}

impl TryFrom<UnionDoc> for BoxUnion {
    type Error = Error;

    fn try_from(doc: UnionDoc) -> Result<Self> {
        let mut u = BoxUnion::new(doc.dimension, doc.boxes.into_iter().map(|b| (b.lo, b.hi)))?;
        u.target_dim = doc.target_dim;
        u.resolution = doc.resolution;
        u.meta = SetMeta {
            kind: doc.kind,
            ratios: doc.ratios,
            generation: doc.generation,
            placement: doc.placement,
        };
        Ok(u)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_inverted_and_mismatched_boxes() {
        assert!(BoxUnion::new(2, [(vec![1.0, 0.0], vec![0.0, 1.0])]).is_err());
        assert!(matches!(
            BoxUnion::new(2, [(vec![0.0], vec![1.0, 1.0])]),
            Err(Error::DimensionMismatch(_))
        ));
    }

    #[test]
    fn bounding_box_and_diameter() {
        let u = BoxUnion::new(
            2,
            [
                (vec![0.0, 0.0], vec![1.0, 1.0]),
                (vec![2.0, 3.0], vec![3.0, 4.0]),
            ],
        )
        .unwrap();
        assert_eq!(u.bounding_box(), (vec![0.0, 0.0], vec![3.0, 4.0]));
        assert_eq!(u.diameter(), 5.0);
    }

    #[test]
    fn json_round_trip_keeps_metadata() {
        let u = BoxUnion::point(&[0.5, 0.25]).with_resolution(1e-3);
        let s = serde_json::to_string(&u).unwrap();
        let v: BoxUnion = serde_json::from_str(&s).unwrap();
        assert_eq!(v.coords(), u.coords());
        assert_eq!(v.target_dim(), Some(0.0));
        assert_eq!(v.resolution(), Some(1e-3));
    }

    #[test]
    fn cell_meeting_is_half_open() {
        let u = BoxUnion::point(&[0.5]);
        assert!(u.meets_cell(&[0.5], &[0.75]));
        assert!(!u.meets_cell(&[0.25], &[0.5]));
    }
}
