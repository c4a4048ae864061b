//! Bounding-volume hierarchy over the boxes of a [`BoxUnion`](super::BoxUnion).

use super::union::box_box_sq;

const LEAF_SIZE: usize = 4;

#[derive(Debug, Clone, Copy)]
pub(crate) enum Node {
    Leaf { start: u32, end: u32 },
    Inner { left: u32, right: u32 },
}

#[derive(Debug, Clone)]
pub(crate) struct Bvh {
    pub dim: usize,
    /// Per node: lower corner then upper corner.
    pub bounds: Vec<f64>,
    pub nodes: Vec<Node>,
    /// Box indices, permuted so that every leaf owns a contiguous range.
    pub order: Vec<u32>,
}

impl Bvh {
    pub fn build(dim: usize, coords: &[f64]) -> Self {
        let n = coords.len() / (2 * dim);
        let mut bvh = Bvh {
            dim,
            bounds: Vec::new(),
            nodes: Vec::new(),
            order: (0..n as u32).collect(),
        };
        if n > 0 {
            bvh.build_range(coords, 0, n);
        }
        bvh
    }

    fn build_range(&mut self, coords: &[f64], start: usize, end: usize) -> u32 {
        let dim = self.dim;
        let mut lo = vec![f64::INFINITY; dim];
        let mut hi = vec![f64::NEG_INFINITY; dim];
        let mut clo = vec![f64::INFINITY; dim];
        let mut chi = vec![f64::NEG_INFINITY; dim];
        for &b in &self.order[start..end] {
            let s = 2 * dim * b as usize;
            for a in 0..dim {
                let (l, h) = (coords[s + a], coords[s + dim + a]);
                lo[a] = lo[a].min(l);
                hi[a] = hi[a].max(h);
                let c = 0.5 * (l + h);
                clo[a] = clo[a].min(c);
                chi[a] = chi[a].max(c);
            }
        }
        let id = self.nodes.len();
        self.bounds.extend_from_slice(&lo);
        self.bounds.extend_from_slice(&hi);
        self.nodes.push(Node::Leaf {
            start: start as u32,
            end: end as u32,
        });
        if end - start <= LEAF_SIZE {
            return id as u32;
        }
        let axis = (0..dim)
            .max_by(|&a, &b| (chi[a] - clo[a]).total_cmp(&(chi[b] - clo[b])))
            .unwrap_or(0);
        let mid = (start + end) / 2;
        let key = |b: &u32| {
            let s = 2 * dim * *b as usize;
            coords[s + axis] + coords[s + dim + axis]
        };
        self.order[start..end].select_nth_unstable_by(mid - start, |x, y| key(x).total_cmp(&key(y)));
        let left = self.build_range(coords, start, mid);
        let right = self.build_range(coords, mid, end);
        self.nodes[id] = Node::Inner { left, right };
        id as u32
    }

    pub fn node_lo(&self, n: u32) -> &[f64] {
        let s = 2 * self.dim * n as usize;
        &self.bounds[s..s + self.dim]
    }

    pub fn node_hi(&self, n: u32) -> &[f64] {
        let s = 2 * self.dim * n as usize + self.dim;
        &self.bounds[s..s + self.dim]
    }

    pub fn box_lo<'a>(&self, coords: &'a [f64], b: u32) -> &'a [f64] {
        let s = 2 * self.dim * b as usize;
        &coords[s..s + self.dim]
    }

    pub fn box_hi<'a>(&self, coords: &'a [f64], b: u32) -> &'a [f64] {
        let s = 2 * self.dim * b as usize + self.dim;
        &coords[s..s + self.dim]
    }

    /// Squared distance from the query box `[qlo, qhi]` to the nearest box.
    /// Infinite for an empty hierarchy.
    pub fn nearest_sq(&self, coords: &[f64], qlo: &[f64], qhi: &[f64]) -> f64 {
        let mut best = f64::INFINITY;
        if self.nodes.is_empty() {
            return best;
        }
        let mut stack: Vec<(u32, f64)> = Vec::with_capacity(64);
        stack.push((0, box_box_sq(self.node_lo(0), self.node_hi(0), qlo, qhi)));
        while let Some((n, bound)) = stack.pop() {
            if bound >= best {
                continue;
            }
            match self.nodes[n as usize] {
                Node::Leaf { start, end } => {
                    for &b in &self.order[start as usize..end as usize] {
                        let d = box_box_sq(self.box_lo(coords, b), self.box_hi(coords, b), qlo, qhi);
                        if d < best {
                            best = d;
                        }
                    }
                    if best == 0.0 {
                        return 0.0;
                    }
                }
                Node::Inner { left, right } => {
                    let dl = box_box_sq(self.node_lo(left), self.node_hi(left), qlo, qhi);
                    let dr = box_box_sq(self.node_lo(right), self.node_hi(right), qlo, qhi);
                    // nearer child on top of the stack
                    if dl <= dr {
                        stack.push((right, dr));
                        stack.push((left, dl));
                    } else {
                        stack.push((left, dl));
                        stack.push((right, dr));
                    }
                }
            }
        }
        best
    }

    /// Whether some closed box meets the half-open cell `[lo, hi)`.
    pub fn any_meets_cell(&self, coords: &[f64], lo: &[f64], hi: &[f64]) -> bool {
        if self.nodes.is_empty() {
            return false;
        }
        let meets = |blo: &[f64], bhi: &[f64]| (0..self.dim).all(|a| blo[a] < hi[a] && bhi[a] >= lo[a]);
        let mut stack = vec![0u32];
        while let Some(n) = stack.pop() {
            if !meets(self.node_lo(n), self.node_hi(n)) {
                continue;
            }
            match self.nodes[n as usize] {
                Node::Leaf { start, end } => {
                    if self.order[start as usize..end as usize]
                        .iter()
                        .any(|&b| meets(self.box_lo(coords, b), self.box_hi(coords, b)))
                    {
                        return true;
                    }
                }
                Node::Inner { left, right } => {
                    stack.push(left);
                    stack.push(right);
                }
            }
        }
        false
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn brute(coords: &[f64], dim: usize, x: &[f64]) -> f64 {
        coords
            .chunks_exact(2 * dim)
            .map(|c| box_box_sq(&c[..dim], &c[dim..], x, x))
            .fold(f64::INFINITY, f64::min)
    }

    #[test]
    fn nearest_matches_linear_scan() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let dim = 3;
        let mut coords = Vec::new();
        for _ in 0..500 {
            let lo: Vec<f64> = (0..dim).map(|_| rng.random::<f64>()).collect();
            let hi: Vec<f64> = lo.iter().map(|l| l + 0.05 * rng.random::<f64>()).collect();
            coords.extend(lo);
            coords.extend(hi);
        }
        let bvh = Bvh::build(dim, &coords);
        for _ in 0..200 {
            let x: Vec<f64> = (0..dim).map(|_| 1.4 * rng.random::<f64>() - 0.2).collect();
            assert_eq!(bvh.nearest_sq(&coords, &x, &x), brute(&coords, dim, &x));
        }
    }
}
