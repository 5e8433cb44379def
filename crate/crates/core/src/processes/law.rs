use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Marginal law of i.i.d. observations or MA innovations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Law {
    Uniform { lo: f64, hi: f64 },
    Normal { mean: f64, sd: f64 },
    /// +1 or -1 with equal probability.
    Rademacher,
    /// 1 with probability `p`, else 0.
    Bernoulli { p: f64 },
}

impl Law {
    pub fn validate(&self) -> Result<()> {
        match *self {
            Law::Uniform { lo, hi } if !(lo < hi) => Err(Error::validation("law.hi", "must exceed lo")),
            Law::Normal { sd, .. } if !(sd > 0.0) => Err(Error::validation("law.sd", "must be positive")),
            Law::Bernoulli { p } if !(0.0..=1.0).contains(&p) => Err(Error::validation("law.p", "must lie in [0,1]")),
            _ => Ok(()),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            Law::Uniform { lo, hi } => lo + (hi - lo) * rng.random::<f64>(),
            Law::Normal { mean, sd } => {
                let z: f64 = StandardNormal.sample(rng);
                mean + sd * z
            }
            Law::Rademacher => {
                if rng.random::<bool>() {
                    1.0
                } else {
                    -1.0
                }
            }
            Law::Bernoulli { p } => f64::from(u8::from(rng.random::<f64>() < p)),
        }
    }

    pub fn mean(&self) -> f64 {
        match *self {
            Law::Uniform { lo, hi } => 0.5 * (lo + hi),
            Law::Normal { mean, .. } => mean,
            Law::Rademacher => 0.0,
            Law::Bernoulli { p } => p,
        }
    }

    pub fn variance(&self) -> f64 {
        match *self {
            Law::Uniform { lo, hi } => (hi - lo).powi(2) / 12.0,
            Law::Normal { sd, .. } => sd * sd,
            Law::Rademacher => 1.0,
            Law::Bernoulli { p } => p * (1.0 - p),
        }
    }

    /// Distribution function, where it has a closed form.
    pub fn cdf(&self, x: f64) -> Option<f64> {
        match *self {
            Law::Uniform { lo, hi } => Some(((x - lo) / (hi - lo)).clamp(0.0, 1.0)),
            Law::Rademacher => Some(if x < -1.0 {
                0.0
            } else if x < 1.0 {
                0.5
            } else {
                1.0
            }),
            Law::Bernoulli { p } => Some(if x < 0.0 {
                0.0
            } else if x < 1.0 {
                1.0 - p
            } else {
                1.0
            }),
            Law::Normal { .. } => None,
        }
    }
}
