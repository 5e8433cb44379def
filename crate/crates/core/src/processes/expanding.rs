use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{PathModel, SamplePath};
use crate::error::{Error, Result};
use crate::exec::rng_from_seed;

const MANTISSA_BITS: usize = 53;

/// Piecewise expanding maps of the unit interval.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExpandingMap {
    /// `x -> 2x mod 1`
    Doubling,
    /// `x -> 1 - |1 - 2x|`
    Tent,
}

impl FromStr for ExpandingMap {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "doubling" => Ok(Self::Doubling),
            "tent" => Ok(Self::Tent),
            other => Err(Error::validation("map_id", format!("unsupported map {other:?}"))),
        }
    }
}

impl ExpandingMap {
    pub fn step(self, x: f64) -> f64 {
        match self {
            ExpandingMap::Doubling => {
                let y = 2.0 * x;
                if y >= 1.0 {
                    y - 1.0
                } else {
                    y
                }
            }
            ExpandingMap::Tent => {
                if x < 0.5 {
                    2.0 * x
                } else {
                    2.0 - 2.0 * x
                }
            }
        }
    }
}

/// Orbit of a Lebesgue-typical point, read off a stream of `n + 53` random
/// bits so binary floating point never collapses it.
///
/// Under the doubling map the k-th iterate has binary digits `b_k, b_{k+1}, ...`.
/// Under the tent map the digits are those bits complemented whenever
/// `b_{k-1} = 1`.
pub fn simulate_expanding_map(map: ExpandingMap, n: usize, seed: u64) -> Result<SamplePath> {
    if n == 0 {
        return Err(Error::validation("n", "must be at least 1"));
    }
    let total = n + MANTISSA_BITS;
    let mut rng = rng_from_seed(seed);
    let words: Vec<u64> = (0..total.div_ceil(64)).map(|_| rng.random()).collect();
    let bit = |i: usize| (words[i / 64] >> (63 - i % 64)) & 1;

    let mask = (1u64 << MANTISSA_BITS) - 1;
    let scale = 1.0 / (1u64 << MANTISSA_BITS) as f64;
    let mut window = (0..MANTISSA_BITS).fold(0u64, |w, i| (w << 1) | bit(i));
    let mut values = Vec::with_capacity(n);
    for k in 0..n {
        let digits = match map {
            ExpandingMap::Doubling => window,
            ExpandingMap::Tent if k > 0 && bit(k - 1) == 1 => !window & mask,
            ExpandingMap::Tent => window,
        };
        values.push(digits as f64 * scale);
        window = ((window << 1) | bit(k + MANTISSA_BITS)) & mask;
    }
    let id = match map {
        ExpandingMap::Doubling => "doubling",
        ExpandingMap::Tent => "tent",
    };
    SamplePath::new(values, 1, seed, id, 0)
}

/// Exact orbit of a given start point in floating point. Dyadic rationals
/// (every float) are eventually fixed, which is the true dynamics.
pub fn expanding_orbit(map: ExpandingMap, x0: f64, n: usize) -> Result<SamplePath> {
    if !(0.0..=1.0).contains(&x0) {
        return Err(Error::validation("x0", "must lie in [0,1]"));
    }
    if n == 0 {
        return Err(Error::validation("n", "must be at least 1"));
    }
    let mut x = x0;
    let values = (0..n)
        .map(|_| {
            let v = x;
            x = map.step(x);
            v
        })
        .collect();
    SamplePath::new(values, 1, 0, "orbit", 0)
}

impl PathModel for ExpandingMap {
    fn simulate(&self, n: usize, seed: u64) -> Result<SamplePath> {
        simulate_expanding_map(*self, n, seed)
    }
}
