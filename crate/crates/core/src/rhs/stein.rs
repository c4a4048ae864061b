use serde::{Deserialize, Serialize};

use crate::distance::DomainBox;
use crate::{Error, Result};

/// Partial sum `u_n(x) = sum_{k<n} k^(-1/2) |x - a_k|^(-gamma)` with
/// `a_k = lo + (hi - lo) k / n`: one normalized spike per interior point of
/// an equispaced lattice.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SteinFunction {
    pub domain: DomainBox,
    pub gamma: f64,
    pub n: usize,
}

/// Builds `u_n` on a one-dimensional domain.
pub fn stein_dense_function(domain: &DomainBox, gamma: f64, n: usize) -> Result<SteinFunction> {
    if domain.dim() != 1 {
        return Err(Error::DimensionMismatch(format!(
            "the dense-spike function lives on an interval, got R^{}",
            domain.dim()
        )));
    }
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(Error::Domain(format!("gamma = {gamma} must lie in (0, 1)")));
    }
    if n < 2 {
        return Err(Error::Domain(format!("n = {n} must be at least 2")));
    }
    Ok(SteinFunction {
        domain: domain.clone(),
        gamma,
        n,
    })
}

impl SteinFunction {
    pub fn point(&self, k: usize) -> f64 {
        let (lo, hi) = (self.domain.lo()[0], self.domain.hi()[0]);
        lo + (hi - lo) * k as f64 / self.n as f64
    }

    pub fn coefficient(k: usize) -> f64 {
        1.0 / (k as f64).sqrt()
    }

    /// `a_1 < ... < a_{n-1}`.
    pub fn singular_points(&self) -> Vec<f64> {
        (1..self.n).map(|k| self.point(k)).collect()
    }

    /// `+inf` at every `a_k`.
    pub fn eval(&self, x: f64) -> f64 {
        let mut s = 0.0;
        for k in 1..self.n {
            let d = (x - self.point(k)).abs();
            if d == 0.0 {
                return f64::INFINITY;
            }
            s += Self::coefficient(k) * d.powf(-self.gamma);
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_interior_spike() {
        let u = stein_dense_function(&DomainBox::unit(1), 0.5, 2).unwrap();
        assert_eq!(u.singular_points(), vec![0.5]);
        assert_eq!(u.eval(0.25), 2.0);
        assert_eq!(u.eval(0.5), f64::INFINITY);
    }

    #[test]
    fn spikes_sit_on_the_lattice() {
        let u = stein_dense_function(&DomainBox::unit(1), 0.5, 50).unwrap();
        let pts = u.singular_points();
        assert_eq!(pts.len(), 49);
        for (i, a) in pts.iter().enumerate() {
            assert!((a - (i + 1) as f64 / 50.0).abs() < 1e-15);
            assert!(u.eval(*a).is_infinite());
        }
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(stein_dense_function(&DomainBox::unit(2), 0.5, 5).is_err());
        assert!(stein_dense_function(&DomainBox::unit(1), 1.0, 5).is_err());
        assert!(stein_dense_function(&DomainBox::unit(1), 0.5, 1).is_err());
    }
}
