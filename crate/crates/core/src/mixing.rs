//! Multiple-mixing covariances computed exactly on finite chains, fitted
//! bound constants checked on held-out configurations, and the empirical
//! growth of `E[S_n^{2p}]`.

use nalgebra::DVector;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::{derive_seed, Execution};
use crate::processes::{FiniteChainSpec, PathModel};
use crate::spectral;
use crate::stats;

/// Longest index span handled by the exact computation.
pub const MAX_SPAN: usize = 1000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixingConfig {
    pub p: usize,
    /// Split position in `1..=p`: blocks are `i_0..i_{q-1}` and `i_q..i_p`.
    pub q: usize,
    pub indices: Vec<usize>,
    pub f: Vec<f64>,
    pub theta: f64,
    #[serde(default)]
    pub d0: usize,
    pub s: f64,
}

impl MixingConfig {
    pub fn validate(&self, spec: &FiniteChainSpec) -> Result<()> {
        if self.q == 0 || self.q > self.p {
            return Err(Error::validation("q", format!("must lie in 1..={}", self.p)));
        }
        if self.indices.len() != self.p + 1 {
            return Err(Error::validation("indices", format!("expected {} indices", self.p + 1)));
        }
        if self.indices.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::validation("indices", "must be nondecreasing"));
        }
        if self.f.len() != spec.states() {
            return Err(Error::validation("f", "length must equal the number of states"));
        }
        let m = spec.expectation(&self.f);
        if m.abs() > 1e-12 {
            return Err(Error::validation("f", format!("not centered: nu(f) = {m:e}")));
        }
        if self.f.iter().any(|v| v.abs() > 1.0 + 1e-12) {
            return Err(Error::validation("f", "sup norm exceeds 1"));
        }
        if !(0.0..1.0).contains(&self.theta) {
            return Err(Error::validation("theta", "must lie in [0,1)"));
        }
        if self.s < 1.0 {
            return Err(Error::validation("s", "must be at least 1"));
        }
        if self.d0 != 0 {
            return Err(Error::validation("d0", "only d0 = 0 is supported"));
        }
        Ok(())
    }

    pub fn gap(&self) -> usize {
        self.indices[self.q] - self.indices[self.q - 1]
    }

    /// Default exponent `l = p - q + 1`.
    pub fn tail_length(&self) -> usize {
        self.p - self.q + 1
    }
}

/// `E[prod_j f(X_{i_j})]` under the stationary law, by backward products
/// `h <- f * (P^d h)`.
fn stationary_product(spec: &FiniteChainSpec, f: &DVector<f64>, indices: &[usize]) -> f64 {
    let p = spec.transition();
    let mut h = f.clone();
    for w in indices.windows(2).rev() {
        for _ in 0..w[1] - w[0] {
            h = p * h;
        }
        h.component_mul_assign(f);
    }
    spec.stationary().dot(&h)
}

fn l_s_norm(spec: &FiniteChainSpec, f: &[f64], s: f64) -> f64 {
    spec.stationary()
        .iter()
        .zip(f)
        .map(|(w, v)| w * v.abs().powf(s))
        .sum::<f64>()
        .powf(1.0 / s)
}

fn sup_norm(f: &[f64]) -> f64 {
    f.iter().fold(0.0f64, |a, v| a.max(v.abs()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProductCovariance {
    /// `|Cov(f(X_{i_0})...f(X_{i_{q-1}}), f(X_{i_q})...f(X_{i_p}))|`
    pub lhs: f64,
    /// `kappa ||f||_s ||f||_inf^{p-q+1} theta^{i_q - i_{q-1}}`
    pub rhs_bound: f64,
}

/// Exact covariance of the two product blocks. The default bound uses the
/// exact `kappa` of the chain, for which the inequality always holds.
pub fn exact_product_covariance(spec: &FiniteChainSpec, cfg: &MixingConfig) -> Result<ProductCovariance> {
    cfg.validate(spec)?;
    let span = cfg.indices[cfg.p] - cfg.indices[0];
    if span > MAX_SPAN {
        return Err(Error::validation("indices", format!("span {span} exceeds {MAX_SPAN}")));
    }
    let f = DVector::from_column_slice(&cfg.f);
    let all = stationary_product(spec, &f, &cfg.indices);
    let head = stationary_product(spec, &f, &cfg.indices[..cfg.q]);
    let tail = stationary_product(spec, &f, &cfg.indices[cfg.q..]);
    let lhs = (all - head * tail).abs();
    let kappa = spectral::kappa_exact(spec, cfg.theta, 100);
    Ok(ProductCovariance { lhs, rhs_bound: kappa * bound_shape(spec, cfg, cfg.tail_length()) })
}

/// `||f||_s ||f||_inf^l theta^gap`.
fn bound_shape(spec: &FiniteChainSpec, cfg: &MixingConfig, l: usize) -> f64 {
    l_s_norm(spec, &cfg.f, cfg.s) * sup_norm(&cfg.f).powi(l as i32) * cfg.theta.powi(cfg.gap() as i32)
}

/// A chain together with a configuration on it.
#[derive(Debug, Clone)]
pub struct MixingCase {
    pub chain: FiniteChainSpec,
    pub config: MixingConfig,
    pub kappa: f64,
}

impl MixingCase {
    pub fn new(chain: FiniteChainSpec, config: MixingConfig) -> Result<Self> {
        config.validate(&chain)?;
        let kappa = spectral::kappa_exact(&chain, config.theta, 100);
        Ok(Self { chain, config, kappa })
    }

    /// `lhs / (kappa ||f||_s ||f||_inf^l theta^gap)`; zero when `lhs` is at
    /// rounding level.
    pub fn ratio(&self, l: usize) -> Result<f64> {
        let lhs = exact_product_covariance(&self.chain, &self.config)?.lhs;
        let shape = self.kappa * bound_shape(&self.chain, &self.config, l);
        Ok(if lhs <= 1e-15 {
            0.0
        } else if shape == 0.0 {
            f64::INFINITY
        } else {
            lhs / shape
        })
    }
}

/// Random chain with at most `max_states` states, entries bounded below so
/// that it is irreducible and aperiodic.
pub fn random_chain<R: Rng>(rng: &mut R, max_states: usize) -> FiniteChainSpec {
    let k = rng.random_range(2..=max_states.max(2));
    let rows = (0..k)
        .map(|_| {
            let r: Vec<f64> = (0..k).map(|_| rng.random::<f64>() + 0.02).collect();
            let s: f64 = r.iter().sum();
            r.into_iter().map(|v| v / s).collect()
        })
        .collect();
    FiniteChainSpec::new(rows).expect("rows are stochastic by construction")
}

/// Random test case: chain with at most 5 states, `p <= 3`, gaps `<= 20`,
/// `f` a random state vector centered and scaled to `||f||_inf = 1`.
pub fn random_case<R: Rng>(rng: &mut R) -> Result<MixingCase> {
    let chain = random_chain(rng, 5);
    let theta = spectral::ergodicity_rate(&chain, &[])?.theta;
    let p = rng.random_range(1..=3);
    let q = rng.random_range(1..=p);
    let mut indices = vec![0usize];
    for _ in 0..p {
        let last = indices[indices.len() - 1];
        indices.push(last + rng.random_range(0..=20));
    }
    let raw: Vec<f64> = (0..chain.states()).map(|_| rng.random_range(-1.0..1.0)).collect();
    let mut f = chain.center(&raw);
    let norm = sup_norm(&f);
    if norm > 0.0 {
        f.iter_mut().for_each(|v| *v /= norm);
    }
    let s = [1.0, 1.5, 2.0][rng.random_range(0..3)];
    MixingCase::new(chain, MixingConfig { p, q, indices, f, theta, d0: 0, s })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedBound {
    pub c: f64,
    pub l: usize,
    pub training_max_ratio: f64,
}

/// Fits `(C, l)` on training cases: `C` is the smallest power of two at or
/// above the largest training ratio, and `l in {1,2,3}` is the largest
/// exponent that attains the minimal such `C`.
pub fn fit_bound(training: &[MixingCase]) -> Result<FittedBound> {
    let mut best: Option<FittedBound> = None;
    for l in 1..=3 {
        let mut max_ratio = 0.0f64;
        for case in training {
            max_ratio = max_ratio.max(case.ratio(l)?);
        }
        if !max_ratio.is_finite() {
            continue;
        }
        let c = if max_ratio == 0.0 { 1.0 } else { 2f64.powi(max_ratio.log2().ceil() as i32) };
        if best.as_ref().is_none_or(|b| c <= b.c) {
            best = Some(FittedBound { c, l, training_max_ratio: max_ratio });
        }
    }
    best.ok_or_else(|| Error::Numeric("no finite bound fits the training set".into()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixingRow {
    pub states: usize,
    pub p: usize,
    pub q: usize,
    pub gap: usize,
    pub s: f64,
    pub theta: f64,
    pub lhs: f64,
    pub bound: f64,
    pub ratio: f64,
}

/// Evaluates a fitted bound on cases. Returns the table rows and the number
/// of violations.
pub fn evaluate_bound(cases: &[MixingCase], fit: &FittedBound) -> Result<(Vec<MixingRow>, usize)> {
    let mut rows = Vec::with_capacity(cases.len());
    let mut violations = 0;
    for case in cases {
        let lhs = exact_product_covariance(&case.chain, &case.config)?.lhs;
        let bound = fit.c * case.kappa * bound_shape(&case.chain, &case.config, fit.l);
        if lhs > bound * (1.0 + 1e-12) + 1e-15 {
            violations += 1;
        }
        let cfg = &case.config;
        rows.push(MixingRow {
            states: case.chain.states(),
            p: cfg.p,
            q: cfg.q,
            gap: cfg.gap(),
            s: cfg.s,
            theta: cfg.theta,
            lhs,
            bound,
            ratio: if bound > 0.0 { lhs / bound } else { 0.0 },
        });
    }
    Ok((rows, violations))
}

pub fn write_rows_csv<W: std::io::Write>(rows: &[MixingRow], w: W) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    for r in rows {
        wr.serialize(r)?;
    }
    wr.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentReport {
    pub p: usize,
    pub n_grid: Vec<usize>,
    /// Monte Carlo `E[S_n^{2p}]` per grid point.
    pub moments: Vec<f64>,
    pub std_errors: Vec<f64>,
    /// Log-log slope over the top half of the grid.
    pub slope: f64,
    pub slope_se: f64,
    /// `E[S_{n_{j+1}}^{2p}] / E[S_{n_j}^{2p}]`
    pub doubling_ratios: Vec<f64>,
    pub passed: bool,
}

/// Estimates `E[S_n^{2p}]` with `S_n = sum_{i<=n} f(X_i)` over `n_grid`.
/// Each replicate simulates one path of length `max(n_grid)` and reads all
/// grid points off it. `f` should be centered under the stationary law.
pub fn moment_bound_check<M, F>(
    model: &M,
    f: F,
    p: usize,
    n_grid: &[usize],
    reps: usize,
    seed: u64,
    exec: Execution,
) -> Result<MomentReport>
where
    M: PathModel + ?Sized,
    F: Fn(&[f64]) -> f64 + Sync,
{
    if !(1..=2).contains(&p) {
        return Err(Error::validation("p", "must be 1 or 2"));
    }
    if reps < 100 {
        return Err(Error::validation("reps", "at least 100 replications required"));
    }
    if n_grid.len() < 2 || n_grid[0] == 0 || n_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::validation("n_grid", "needs at least two increasing positive sizes"));
    }
    let n_max = n_grid[n_grid.len() - 1];
    let per_rep: Vec<Vec<f64>> = exec.try_map_indexed(reps, |r| {
        let path = model.simulate(n_max, derive_seed(seed, "moment", r as u64))?;
        let mut out = Vec::with_capacity(n_grid.len());
        let mut s = 0.0;
        let mut next = 0;
        for (i, y) in path.points().enumerate() {
            s += f(y);
            if i + 1 == n_grid[next] {
                out.push(s.powi(2 * p as i32));
                next += 1;
            }
        }
        Ok::<_, Error>(out)
    })?;
    let mut moments = Vec::with_capacity(n_grid.len());
    let mut std_errors = Vec::with_capacity(n_grid.len());
    for j in 0..n_grid.len() {
        let col: Vec<f64> = per_rep.iter().map(|r| r[j]).collect();
        moments.push(stats::mean(&col));
        std_errors.push((stats::variance(&col) / reps as f64).sqrt());
    }
    let doubling_ratios = moments.windows(2).map(|w| w[1] / w[0]).collect();
    let (slope, slope_se) = if moments.iter().all(|m| *m == 0.0) {
        (0.0, 0.0)
    } else {
        let top = n_grid.len() / 2;
        let x: Vec<f64> = n_grid[top..].iter().map(|n| (*n as f64).ln()).collect();
        let y: Vec<f64> = moments[top..].iter().map(|m| m.ln()).collect();
        let (_, b, se) = stats::linear_fit(&x, &y);
        (b, se)
    };
    let passed = slope.is_finite() && slope <= p as f64 + 0.1;
    Ok(MomentReport { p, n_grid: n_grid.to_vec(), moments, std_errors, slope, slope_se, doubling_ratios, passed })
}

/// `E[S_n^4]` for i.i.d. centered Bernoulli(1/2) summands (`+-1/2`).
pub fn bernoulli_fourth_moment(n: usize) -> f64 {
    let n = n as f64;
    3.0 * (n * n - n) / 16.0 + n / 16.0
}
