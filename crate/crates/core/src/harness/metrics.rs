//! Aggregate metrics: steering-vector NMSE, empirical CDFs, mean and
//! standard error.

use crate::error::{Error, Result};
use crate::signal_math::upa_steering;

/// `‖u(ψ) - u(ψ̂)‖² / ‖u(ψ)‖²` for one estimate.
pub fn nmse_single(true_psi: (f64, f64), est: (f64, f64), m_x: usize, m_y: usize) -> Result<f64> {
    let u = upa_steering(true_psi.0, true_psi.1, m_x, m_y)?;
    let v = upa_steering(est.0, est.1, m_x, m_y)?;
    Ok((&u - &v).norm_squared() / u.norm_squared())
}

/// Mean NMSE of a list of estimates of the same phases.
pub fn nmse(true_psi: (f64, f64), estimates: &[(f64, f64)], m_x: usize, m_y: usize) -> Result<f64> {
    if estimates.is_empty() {
        return Err(Error::InvalidDimension("no estimates to score".into()));
    }
    let mut acc = 0.0;
    for &e in estimates {
        acc += nmse_single(true_psi, e, m_x, m_y)?;
    }
    Ok(acc / estimates.len() as f64)
}

/// Sample mean and its standard error (0 for a single sample).
pub fn mean_and_stderr(xs: &[f64]) -> (f64, f64) {
    let n = xs.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

pub fn to_db(x: f64) -> f64 {
    10.0 * x.log10()
}

/// Empirical distribution of a sample.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalCdf {
    sorted: Vec<f64>,
}

pub fn empirical_cdf(samples: &[f64]) -> Result<EmpiricalCdf> {
    if samples.is_empty() {
        return Err(Error::InvalidDimension("empirical CDF of an empty sample".into()));
    }
    if samples.iter().any(|x| x.is_nan()) {
        return Err(Error::Domain("sample contains NaN".into()));
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(EmpiricalCdf { sorted })
}

impl EmpiricalCdf {
    pub fn len(&self) -> usize {
        self.sorted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sorted.is_empty()
    }

    pub fn sorted(&self) -> &[f64] {
        &self.sorted
    }

    /// Fraction of samples `<= x`.
    pub fn probability_at(&self, x: f64) -> f64 {
        self.sorted.partition_point(|&s| s <= x) as f64 / self.sorted.len() as f64
    }

    /// Quantile by linear interpolation between order statistics at
    /// positions `p (n - 1)`.
    pub fn quantile(&self, p: f64) -> f64 {
        let p = p.clamp(0.0, 1.0);
        let h = p * (self.sorted.len() - 1) as f64;
        let lo = h.floor() as usize;
        let hi = (lo + 1).min(self.sorted.len() - 1);
        let (a, b) = (self.sorted[lo], self.sorted[hi]);
        if a == b {
            return a;
        }
        a + (h - lo as f64) * (b - a)
    }

    /// `(value, probability)` at `points` evenly spaced probabilities from 0
    /// to 1. Both columns are nondecreasing.
    pub fn table(&self, points: usize) -> Vec<(f64, f64)> {
        let points = points.max(2);
        (0..points)
            .map(|i| {
                let p = i as f64 / (points - 1) as f64;
                (self.quantile(p), p)
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use crate::Complex64;
    use approx::assert_relative_eq;
    use rand::Rng;

    #[test]
    fn nmse_examples() {
        assert_eq!(nmse((0.3, -0.2), &[(0.3, -0.2)], 4, 5).unwrap(), 0.0);
        assert_eq!(nmse((0.3, -0.2), &[(0.9, 0.1)], 1, 1).unwrap(), 0.0);
        assert!(nmse((0.0, 0.0), &[], 2, 2).is_err());

        // (Δ, 0) offset against direct evaluation of 2 - 2 Re⟨u, û⟩ / M
        let (mx, my, d) = (6, 4, 0.13);
        let mut inner = Complex64::new(0.0, 0.0);
        for kx in 0..mx {
            for _ in 0..my {
                inner += Complex64::from_polar(1.0, std::f64::consts::PI * kx as f64 * d);
            }
        }
        let want = 2.0 - 2.0 * inner.re / (mx * my) as f64;
        assert_relative_eq!(nmse((0.1, 0.5), &[(0.1 + d, 0.5)], mx, my).unwrap(), want, max_relative = 1e-12);
    }

    #[test]
    fn quantile_examples() {
        let c = empirical_cdf(&[4.0, 1.0, 3.0, 2.0]).unwrap();
        assert_eq!(c.quantile(0.5), 2.5);
        assert_eq!(c.quantile(0.0), 1.0);
        assert_eq!(c.quantile(1.0), 4.0);
        assert_eq!(c.probability_at(2.0), 0.5);

        let flat = empirical_cdf(&[3.0; 5]).unwrap();
        assert!(flat.table(11).iter().all(|&(v, _)| v == 3.0));
        assert_eq!(flat.probability_at(2.999), 0.0);
        assert_eq!(flat.probability_at(3.0), 1.0);
        assert!(empirical_cdf(&[]).is_err());
        assert!(empirical_cdf(&[1.0, f64::NAN]).is_err());
    }

    #[test]
    fn exponential_tenth_percentile() {
        let mut rng = seeded(17);
        let xs: Vec<f64> = (0..100_000).map(|_| -(1.0 - rng.random::<f64>()).ln()).collect();
        let q = empirical_cdf(&xs).unwrap().quantile(0.1);
        assert_relative_eq!(q, -(0.9f64).ln(), max_relative = 0.02);
    }

    #[test]
    fn table_is_monotone() {
        let mut rng = seeded(3);
        let xs: Vec<f64> = (0..1000).map(|_| rng.random::<f64>()).collect();
        let t = empirical_cdf(&xs).unwrap().table(201);
        assert_eq!(t.len(), 201);
        assert!(t.windows(2).all(|w| w[1].0 >= w[0].0 && w[1].1 > w[0].1));
        assert_eq!(t[0].1, 0.0);
        assert_eq!(t[200].1, 1.0);
    }

    #[test]
    fn stderr_examples() {
        let (m, s) = mean_and_stderr(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m, 2.5);
        assert_relative_eq!(s, (5.0f64 / 3.0 / 4.0).sqrt(), max_relative = 1e-12);
        assert_eq!(mean_and_stderr(&[7.0]), (7.0, 0.0));
    }
}
