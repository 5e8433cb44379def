//! Data models: finite Markov chains, iterated function systems, moving
//! averages, expanding interval maps and i.i.d. samples, with the
//! model-side conditions that can be checked numerically.

mod chain;
mod expanding;
mod ifs;
mod law;
mod ma;
mod path;

use serde::{Deserialize, Serialize};

pub use chain::{simulate_chain, FiniteChainSpec, IidSpec};
pub use expanding::{expanding_orbit, simulate_expanding_map, ExpandingMap};
pub use ifs::{
    check_contraction_average, check_regularity, default_probe_triples, simulate_ifs, AffineMap, ContractionReport,
    IfsSpec, Metric, ProbFn, ProbeTriple, RegularityReport, DEFAULT_BURN_IN, DEFAULT_PROBES,
};
pub use law::Law;
pub use ma::{simulate_ma, MaSpec};
pub use path::SamplePath;

use crate::error::{Error, Result};

/// Anything that produces a reproducible path from `(n, seed)`.
pub trait PathModel: Sync {
    fn simulate(&self, n: usize, seed: u64) -> Result<SamplePath>;
}

/// Serializable union of the supported data models, as used in config files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelSpec {
    Iid(IidSpec),
    Chain(FiniteChainSpec),
    Ifs(IfsSpec),
    Ma(MaSpec),
    Expanding { map: ExpandingMap },
}

impl ModelSpec {
    pub fn validate(&self) -> Result<()> {
        match self {
            ModelSpec::Iid(s) => s.law.validate(),
            ModelSpec::Chain(_) | ModelSpec::Expanding { .. } => Ok(()),
            ModelSpec::Ifs(s) => s.validate(),
            ModelSpec::Ma(s) => s.validate(),
        }
    }

    pub fn from_toml_str(s: &str) -> Result<Self> {
        let spec: Self = toml::from_str(s).map_err(|e| Error::Parse(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Parse(e.to_string()))
    }
}

impl PathModel for ModelSpec {
    fn simulate(&self, n: usize, seed: u64) -> Result<SamplePath> {
        match self {
            ModelSpec::Iid(s) => s.simulate(n, seed),
            ModelSpec::Chain(s) => s.simulate(n, seed),
            ModelSpec::Ifs(s) => s.simulate(n, seed),
            ModelSpec::Ma(s) => s.simulate(n, seed),
            ModelSpec::Expanding { map } => map.simulate(n, seed),
        }
    }
}

const PRIMES: [u32; 12] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37];

fn radical_inverse(mut i: u64, base: u32) -> f64 {
    let b = f64::from(base);
    let (mut inv, mut f) = (0.0, 1.0 / b);
    while i > 0 {
        inv += f * (i % u64::from(base)) as f64;
        i /= u64::from(base);
        f /= b;
    }
    inv
}

/// First `count` Halton points (indices 1..=count) scaled to a box.
/// Supports up to 12 dimensions.
pub fn halton(count: usize, bounds: &[[f64; 2]]) -> Vec<Vec<f64>> {
    assert!(bounds.len() <= PRIMES.len(), "halton supports at most {} dimensions", PRIMES.len());
    (1..=count as u64)
        .map(|i| {
            bounds
                .iter()
                .zip(PRIMES)
                .map(|([lo, hi], p)| lo + (hi - lo) * radical_inverse(i, p))
                .collect()
        })
        .collect()
}
