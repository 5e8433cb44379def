use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Law, PathModel, SamplePath};
use crate::error::{Error, Result};
use crate::exec::rng_from_seed;

const ROW_SUM_TOL: f64 = 1e-12;
const STATIONARY_TOL: f64 = 1e-10;

/// Finite-state Markov chain with its invariant distribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawChain", into = "RawChain")]
pub struct FiniteChainSpec {
    transition: DMatrix<f64>,
    stationary: DVector<f64>,
}

#[derive(Serialize, Deserialize)]
struct RawChain {
    transition: Vec<Vec<f64>>,
}

impl TryFrom<RawChain> for FiniteChainSpec {
    type Error = Error;
    fn try_from(raw: RawChain) -> Result<Self> {
        FiniteChainSpec::new(raw.transition)
    }
}

impl From<FiniteChainSpec> for RawChain {
    fn from(spec: FiniteChainSpec) -> Self {
        let m = &spec.transition;
        RawChain {
            transition: (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect(),
        }
    }
}

impl FiniteChainSpec {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        let k = rows.len();
        if k == 0 {
            return Err(Error::validation("transition", "no states"));
        }
        if let Some(i) = rows.iter().position(|r| r.len() != k) {
            return Err(Error::validation("transition", format!("row {i} has wrong length")));
        }
        Self::from_matrix(DMatrix::from_fn(k, k, |i, j| rows[i][j]))
    }

    pub fn from_matrix(transition: DMatrix<f64>) -> Result<Self> {
        if !transition.is_square() || transition.nrows() == 0 {
            return Err(Error::validation("transition", "must be a non-empty square matrix"));
        }
        for (i, row) in transition.row_iter().enumerate() {
            if row.iter().any(|&p| !(p >= 0.0) || !p.is_finite()) {
                return Err(Error::validation("transition", format!("row {i} has a negative or non-finite entry")));
            }
            let s: f64 = row.iter().sum();
            if (s - 1.0).abs() > ROW_SUM_TOL {
                return Err(Error::validation("transition", format!("row {i} sums to {s}")));
            }
        }
        let stationary = solve_stationary(&transition)?;
        Ok(Self { transition, stationary })
    }

    /// The chain `[[1-a, a], [b, 1-b]]`.
    pub fn two_state(a: f64, b: f64) -> Result<Self> {
        Self::new(vec![vec![1.0 - a, a], vec![b, 1.0 - b]])
    }

    pub fn states(&self) -> usize {
        self.transition.nrows()
    }

    pub fn transition(&self) -> &DMatrix<f64> {
        &self.transition
    }

    pub fn stationary(&self) -> &DVector<f64> {
        &self.stationary
    }

    /// `nu(f)` for a function given by its values on the states.
    pub fn expectation(&self, f: &[f64]) -> f64 {
        self.stationary.iter().zip(f).map(|(p, v)| p * v).sum()
    }

    /// `f - nu(f)`.
    pub fn center(&self, f: &[f64]) -> Vec<f64> {
        let m = self.expectation(f);
        f.iter().map(|v| v - m).collect()
    }
}

fn solve_stationary(p: &DMatrix<f64>) -> Result<DVector<f64>> {
    let k = p.nrows();
    // (P^T - I) nu = 0 with the last equation replaced by sum(nu) = 1.
    let mut a = p.transpose() - DMatrix::identity(k, k);
    let mut rhs = DVector::zeros(k);
    for j in 0..k {
        a[(k - 1, j)] = 1.0;
    }
    rhs[k - 1] = 1.0;
    // Reducible chains have no unique invariant law; fall back to the Cesaro
    // limit from the uniform start, which is one of them.
    let nu = match a.lu().solve(&rhs) {
        Some(nu) => nu,
        None => cesaro_limit(p),
    };
    let residual = (nu.transpose() * p - nu.transpose()).amax();
    if residual > STATIONARY_TOL || nu.iter().any(|&v| v < -STATIONARY_TOL) {
        return Err(Error::Numeric(format!("no unique stationary vector (residual {residual:e})")));
    }
    Ok(nu.map(|v| v.max(0.0)))
}

fn cesaro_limit(p: &DMatrix<f64>) -> DVector<f64> {
    const STEPS: usize = 20_000;
    let k = p.nrows();
    let mut row = DVector::from_element(k, 1.0 / k as f64).transpose();
    let mut acc = row.clone();
    for _ in 1..STEPS {
        row = &row * p;
        acc += &row;
    }
    (acc / STEPS as f64).transpose()
}

fn cumulative(row: impl Iterator<Item = f64>) -> Vec<f64> {
    let mut acc = 0.0;
    row.map(|p| {
        acc += p;
        acc
    })
    .collect()
}

fn pick(cum: &[f64], u: f64) -> usize {
    cum.iter().position(|&c| u < c).unwrap_or(cum.len() - 1)
}

/// Stationary path `X_0, ..., X_{n-1}` with `X_0 ~ nu`.
pub fn simulate_chain(spec: &FiniteChainSpec, n: usize, seed: u64) -> Result<SamplePath> {
    if n == 0 {
        return Err(Error::validation("n", "must be at least 1"));
    }
    let mut rng = rng_from_seed(seed);
    let start = cumulative(spec.stationary.iter().copied());
    let rows: Vec<Vec<f64>> = spec
        .transition
        .row_iter()
        .map(|r| cumulative(r.iter().copied()))
        .collect();
    let mut state = pick(&start, rng.random());
    let mut values = Vec::with_capacity(n);
    values.push(state as f64);
    for _ in 1..n {
        state = pick(&rows[state], rng.random());
        values.push(state as f64);
    }
    SamplePath::new(values, 1, seed, format!("chain{}", spec.states()), 0)
}

impl PathModel for FiniteChainSpec {
    fn simulate(&self, n: usize, seed: u64) -> Result<SamplePath> {
        simulate_chain(self, n, seed)
    }
}

/// I.i.d. observations from a fixed law.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IidSpec {
    pub law: Law,
}

impl PathModel for IidSpec {
    fn simulate(&self, n: usize, seed: u64) -> Result<SamplePath> {
        if n == 0 {
            return Err(Error::validation("n", "must be at least 1"));
        }
        self.law.validate()?;
        let mut rng = rng_from_seed(seed);
        let values = (0..n).map(|_| self.law.sample(&mut rng)).collect();
        SamplePath::new(values, 1, seed, "iid", 0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_non_stochastic() {
        assert!(FiniteChainSpec::new(vec![vec![0.5, 0.6], vec![0.5, 0.5]]).is_err());
        assert!(FiniteChainSpec::new(vec![vec![1.5, -0.5], vec![0.5, 0.5]]).is_err());
        assert!(FiniteChainSpec::new(vec![vec![1.0]]).is_ok());
    }

    #[test]
    fn stationary_of_two_state() {
        let c = FiniteChainSpec::two_state(0.2, 0.3).unwrap();
        assert!((c.stationary()[0] - 0.6).abs() < 1e-14);
        assert!((c.stationary()[1] - 0.4).abs() < 1e-14);
    }

    #[test]
    fn symmetric_chain_frequencies() {
        let c = FiniteChainSpec::two_state(0.5, 0.5).unwrap();
        let p = simulate_chain(&c, 100_000, 11).unwrap();
        let ones = p.values().iter().filter(|&&v| v == 1.0).count() as f64 / 1e5;
        assert!((ones - 0.5).abs() < 0.01);
    }

    #[test]
    fn identity_chain_is_constant() {
        let c = FiniteChainSpec::new(vec![vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        for seed in 0..5 {
            let p = simulate_chain(&c, 100, seed).unwrap();
            assert!(p.values().iter().all(|&v| v == p.values()[0]));
        }
    }

    #[test]
    fn transition_counts_match_rows() {
        // Multinomial standard errors: each row's counts are Binomial(n_i, p_ij).
        let rows = vec![vec![0.2, 0.5, 0.3], vec![0.1, 0.6, 0.3], vec![0.4, 0.4, 0.2]];
        let c = FiniteChainSpec::new(rows.clone()).unwrap();
        let p = simulate_chain(&c, 1_000_000, 5).unwrap();
        let mut counts = [[0usize; 3]; 3];
        for w in p.values().windows(2) {
            counts[w[0] as usize][w[1] as usize] += 1;
        }
        for i in 0..3 {
            let ni: usize = counts[i].iter().sum();
            for j in 0..3 {
                let phat = counts[i][j] as f64 / ni as f64;
                let se = (rows[i][j] * (1.0 - rows[i][j]) / ni as f64).sqrt();
                assert!((phat - rows[i][j]).abs() < 3.0 * se, "({i},{j}) {phat} vs {}", rows[i][j]);
            }
        }
    }

    #[test]
    fn deterministic_given_seed() {
        let c = FiniteChainSpec::two_state(0.2, 0.3).unwrap();
        assert_eq!(simulate_chain(&c, 500, 3).unwrap(), simulate_chain(&c, 500, 3).unwrap());
        assert_ne!(simulate_chain(&c, 500, 3).unwrap(), simulate_chain(&c, 500, 4).unwrap());
    }
}
