use serde::{Deserialize, Serialize};

use super::{Law, PathModel, SamplePath};
use crate::error::{Error, Result};
use crate::exec::rng_from_seed;

/// Causal moving average `X_i = sum_{j=1}^J a_j xi_{i-j}` of i.i.d. innovations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaSpec {
    /// `a_1, ..., a_J`.
    pub coeffs: Vec<f64>,
    pub innovation: Law,
    /// Declared bound on `sum_{j > J} |a_j|` for the coefficients dropped by
    /// truncation.
    #[serde(default)]
    pub tail_bound: f64,
}

impl MaSpec {
    /// `a_j = ratio^j` truncated at `J`, with the exact geometric tail.
    pub fn geometric(ratio: f64, truncation: usize, innovation: Law) -> Self {
        let coeffs: Vec<f64> = (1..=truncation).map(|j| ratio.powi(j as i32)).collect();
        let tail_bound = ratio.abs().powi(truncation as i32 + 1) / (1.0 - ratio.abs());
        Self {
            coeffs,
            innovation,
            tail_bound,
        }
    }

    pub fn truncation(&self) -> usize {
        self.coeffs.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.coeffs.is_empty() {
            return Err(Error::validation("coeffs", "truncation J must be at least 1"));
        }
        if self.coeffs.iter().any(|a| !a.is_finite()) {
            return Err(Error::validation("coeffs", "non-finite coefficient"));
        }
        if !(self.tail_bound >= 0.0 && self.tail_bound.is_finite()) {
            return Err(Error::validation("tail_bound", "must be finite and non-negative"));
        }
        self.innovation.validate()
    }

    /// Dependence rate `Theta(i) = sum_{j >= i} |a_j|`, using the declared
    /// tail bound beyond the truncation.
    pub fn theta(&self, i: usize) -> f64 {
        let from = i.max(1);
        self.coeffs.iter().skip(from - 1).map(|a| a.abs()).sum::<f64>() + self.tail_bound
    }

    /// Variance of the truncated series.
    pub fn variance(&self) -> f64 {
        self.innovation.variance() * self.coeffs.iter().map(|a| a * a).sum::<f64>()
    }

    pub fn mean(&self) -> f64 {
        self.innovation.mean() * self.coeffs.iter().sum::<f64>()
    }
}

pub fn simulate_ma(spec: &MaSpec, n: usize, seed: u64) -> Result<SamplePath> {
    spec.validate()?;
    if n == 0 {
        return Err(Error::validation("n", "must be at least 1"));
    }
    let j_max = spec.truncation();
    let mut rng = rng_from_seed(seed);
    let xi: Vec<f64> = (0..n + j_max).map(|_| spec.innovation.sample(&mut rng)).collect();
    let values = (0..n)
        .map(|i| {
            let t = i + j_max;
            spec.coeffs.iter().enumerate().map(|(k, a)| a * xi[t - (k + 1)]).sum()
        })
        .collect();
    SamplePath::new(values, 1, seed, format!("ma{j_max}"), 0)
}

impl PathModel for MaSpec {
    fn simulate(&self, n: usize, seed: u64) -> Result<SamplePath> {
        simulate_ma(self, n, seed)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::variance;

    #[test]
    fn degenerate_ma_is_iid_normal() {
        let spec = MaSpec {
            coeffs: vec![1.0, 0.0, 0.0],
            innovation: Law::Normal { mean: 0.0, sd: 1.0 },
            tail_bound: 0.0,
        };
        let p = simulate_ma(&spec, 100_000, 4).unwrap();
        assert!((variance(p.values()) - 1.0).abs() < 0.02);
    }

    #[test]
    fn geometric_uniform_variance() {
        let spec = MaSpec::geometric(0.5, 40, Law::Uniform { lo: -1.0, hi: 1.0 });
        // (1/3) sum_j 4^{-j} = 1/9
        let target = 1.0 / 9.0;
        assert!((spec.variance() - target).abs() < 1e-15);
        let n = 100_000;
        let p = simulate_ma(&spec, n, 8).unwrap();
        // Var of the sample variance for a linear process:
        // 2 sum_h gamma(h)^2 / n plus the fourth-cumulant term.
        let gamma = |h: usize| (1.0 / 3.0) * (1..=40 - h).map(|j| 0.5f64.powi((2 * j + h) as i32)).sum::<f64>();
        let sum_sq: f64 = gamma(0).powi(2) + 2.0 * (1..40).map(|h| gamma(h).powi(2)).sum::<f64>();
        let kappa4 = -2.0 / 15.0 * (1..=40).map(|j| 0.5f64.powi(4 * j)).sum::<f64>();
        let se = ((2.0 * sum_sq + kappa4) / n as f64).sqrt();
        assert!((variance(p.values()) - target).abs() < 3.0 * se, "se {se}");
    }

    #[test]
    fn theta_geometric_tail() {
        let spec = MaSpec::geometric(0.5, 30, Law::Rademacher);
        assert!((spec.theta(3) - 0.25).abs() < 1e-15);
        assert!((spec.theta(1) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn zero_truncation_rejected() {
        let spec = MaSpec {
            coeffs: vec![],
            innovation: Law::Rademacher,
            tail_bound: 0.0,
        };
        assert!(simulate_ma(&spec, 10, 0).is_err());
    }
}
