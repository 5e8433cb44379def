//! Long-run covariance kernels, the Kiefer-process covariance on a finite
//! grid, Gaussian sampling of `sup |K(f,t) - t K(f,1)|` and critical values.

use std::io::Write;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::empirical::FunctionClass;
use crate::error::{Error, Result};
use crate::exec::{derive_seed, rng_from_seed, Execution};
use crate::processes::{FiniteChainSpec, Law, SamplePath};
use crate::spectral;
use crate::stats;

const DEFAULT_JITTER: f64 = 1e-10;
const MAX_JITTER: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Estimator {
    TruncatedSum,
    Bartlett,
    AnalyticIid,
    SpectralChain,
}

/// `Gamma(f, g)` on a finite function grid.
#[derive(Debug, Clone, PartialEq)]
pub struct LongRunKernel {
    pub gamma: DMatrix<f64>,
    pub truncation: usize,
    pub estimator: Estimator,
    /// Sum of the negative eigenvalue magnitudes removed to make `gamma` PSD.
    pub clipped: f64,
}

impl LongRunKernel {
    pub fn size(&self) -> usize {
        self.gamma.nrows()
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        write_matrix_csv(&self.gamma, w)
    }
}

/// Writes a matrix as CSV with header `row,col,value`.
pub fn write_matrix_csv<W: Write>(m: &DMatrix<f64>, w: W) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["row", "col", "value"])?;
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            wr.write_record([i.to_string(), j.to_string(), format!("{:?}", m[(i, j)])])?;
        }
    }
    wr.flush()?;
    Ok(())
}

/// Symmetrizes and clips negative eigenvalues at zero. Returns the clipped
/// magnitude.
fn make_psd(mut g: DMatrix<f64>) -> (DMatrix<f64>, f64) {
    g = (&g + g.transpose()) * 0.5;
    let eig = SymmetricEigen::new(g.clone());
    let clipped: f64 = eig.eigenvalues.iter().filter(|v| **v < 0.0).map(|v| -v).sum();
    if clipped == 0.0 {
        return (g, 0.0);
    }
    let d = eig.eigenvalues.map(|v| v.max(0.0));
    let r = &eig.eigenvectors * DMatrix::from_diagonal(&d) * eig.eigenvectors.transpose();
    ((&r + r.transpose()) * 0.5, clipped)
}

/// Truncation lag: `2 log n / log(1/theta)` with flat weights when a
/// spectral `theta` is available, otherwise Bartlett weights with bandwidth
/// `n^{1/3}`.
pub fn default_truncation(n: usize, theta: Option<f64>) -> (usize, Estimator) {
    match theta {
        Some(th) if th > 0.0 && th < 1.0 => {
            (((2.0 * (n as f64).ln()) / (1.0 / th).ln()).ceil() as usize, Estimator::TruncatedSum)
        }
        Some(_) => (0, Estimator::TruncatedSum),
        None => ((n as f64).cbrt().ceil() as usize, Estimator::Bartlett),
    }
}

/// Sample estimate
/// `Gamma(f,g) = C_0(f,g) + sum_{k=1}^{L} w_k (C_k(f,g) + C_k(g,f))`
/// with `C_k(f,g)` the lag-`k` cross-covariance of `f(X_i)` and
/// `g(X_{i+k})`, pooled over paths and centered at the pooled means.
/// `weights` is `TruncatedSum` (flat) or `Bartlett` (`1 - k/(L+1)`).
pub fn estimate_longrun_kernel(
    paths: &[SamplePath],
    fc: &FunctionClass,
    lag: usize,
    weights: Estimator,
) -> Result<LongRunKernel> {
    if paths.is_empty() {
        return Err(Error::validation("paths", "at least one path required"));
    }
    if !matches!(weights, Estimator::TruncatedSum | Estimator::Bartlett) {
        return Err(Error::validation("estimator", "sample estimate uses truncated_sum or bartlett weights"));
    }
    let n_min = paths.iter().map(SamplePath::len).min().unwrap_or(0);
    if 10 * lag > n_min {
        return Err(Error::validation("truncation", format!("L = {lag} needs paths of length >= {}", 10 * lag)));
    }
    let m = fc.len();
    let cols: Vec<DMatrix<f64>> = paths
        .iter()
        .map(|p| DMatrix::from_fn(m, p.len(), |j, i| fc.eval(j, p.point(i))))
        .collect();
    let total: usize = paths.iter().map(SamplePath::len).sum();
    let mut means = DVector::zeros(m);
    for c in &cols {
        means += c.column_sum();
    }
    means /= total as f64;
    let centered: Vec<DMatrix<f64>> = cols
        .into_iter()
        .map(|mut c| {
            for mut col in c.column_iter_mut() {
                col -= &means;
            }
            c
        })
        .collect();
    let lag_cov = |k: usize| -> DMatrix<f64> {
        let mut acc = DMatrix::zeros(m, m);
        for c in &centered {
            let n = c.ncols();
            acc.gemm(1.0, &c.columns(0, n - k), &c.columns(k, n - k).transpose(), 1.0);
        }
        acc / total as f64
    };
    let mut gamma = lag_cov(0);
    for k in 1..=lag {
        let w = match weights {
            Estimator::Bartlett => 1.0 - k as f64 / (lag as f64 + 1.0),
            _ => 1.0,
        };
        let c = lag_cov(k);
        gamma += (&c + c.transpose()) * w;
    }
    let (gamma, clipped) = make_psd(gamma);
    Ok(LongRunKernel { gamma, truncation: lag, estimator: weights, clipped })
}

/// i.i.d. kernel of half-line indicators `1{y <= x_a}`:
/// `F(min(x_a, x_b)) - F(x_a) F(x_b)`.
pub fn analytic_iid_kernel(law: &Law, points: &[f64]) -> Result<LongRunKernel> {
    let cdf: Vec<f64> = points
        .iter()
        .map(|&x| law.cdf(x).ok_or_else(|| Error::validation("law", "no closed-form distribution function")))
        .collect::<Result<_>>()?;
    let m = points.len();
    let gamma = DMatrix::from_fn(m, m, |a, b| cdf[a].min(cdf[b]) - cdf[a] * cdf[b]);
    Ok(LongRunKernel { gamma, truncation: 0, estimator: Estimator::AnalyticIid, clipped: 0.0 })
}

/// Interval points of an interval-indicator class.
pub fn interval_points(fc: &FunctionClass) -> Result<Vec<f64>> {
    fc.members
        .iter()
        .map(|m| match m {
            crate::empirical::Member::Interval { x } => Ok(*x),
            _ => Err(Error::validation("class", "expected interval indicators")),
        })
        .collect()
}

/// Exact kernel of a finite chain via the fundamental matrix; each class
/// member is evaluated at the state labels `0, 1, ...`.
pub fn spectral_chain_kernel(spec: &FiniteChainSpec, fc: &FunctionClass) -> Result<LongRunKernel> {
    let d = spectral::fundamental_matrix(spec)?;
    let fs: Vec<Vec<f64>> = (0..fc.len())
        .map(|j| (0..spec.states()).map(|x| fc.eval(j, &[x as f64])).collect())
        .collect();
    let m = fs.len();
    let mut gamma = DMatrix::zeros(m, m);
    for a in 0..m {
        for b in a..m {
            let v = spectral::long_run_covariance(spec, &d, &fs[a], &fs[b]);
            gamma[(a, b)] = v;
            gamma[(b, a)] = v;
        }
    }
    let (gamma, clipped) = make_psd(gamma);
    Ok(LongRunKernel { gamma, truncation: 0, estimator: Estimator::SpectralChain, clipped })
}

fn validate_t_grid(t_grid: &[f64]) -> Result<()> {
    if t_grid.is_empty() {
        return Err(Error::validation("t_grid", "empty"));
    }
    if t_grid.iter().any(|t| !(0.0..=1.0).contains(t)) || t_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::validation("t_grid", "must be strictly increasing in [0,1]"));
    }
    Ok(())
}

#[derive(Debug, Clone)]
enum Factor {
    /// Cholesky factor of `cov + jitter I`, index `(a, i) -> a * |t| + i`.
    Dense { cov: DMatrix<f64>, lower: DMatrix<f64> },
    /// `Gamma^{1/2}`; the field is built from independent time increments.
    Separable { root: DMatrix<f64> },
}

/// Gaussian field with covariance `min(s, t) Gamma(f, g)` on a grid.
#[derive(Debug, Clone)]
pub struct KieferModel {
    pub t_grid: Vec<f64>,
    pub n_functions: usize,
    pub jitter: f64,
    factor: Factor,
}

/// Dense covariance over the product grid with entries
/// `min(t_i, t_j) Gamma(f_a, f_b)`.
pub fn kiefer_covariance(kernel: &LongRunKernel, t_grid: &[f64]) -> DMatrix<f64> {
    let (m, nt) = (kernel.size(), t_grid.len());
    DMatrix::from_fn(m * nt, m * nt, |r, c| {
        let (a, i) = (r / nt, r % nt);
        let (b, j) = (c / nt, c % nt);
        t_grid[i].min(t_grid[j]) * kernel.gamma[(a, b)]
    })
}

/// Factorizes the dense Kiefer covariance. Jitter starts at `jitter`
/// (default `1e-10`) and doubles up to `1e-6`.
pub fn build_kiefer(kernel: &LongRunKernel, t_grid: &[f64], jitter: Option<f64>) -> Result<KieferModel> {
    validate_t_grid(t_grid)?;
    let cov = kiefer_covariance(kernel, t_grid);
    let dim = cov.nrows();
    let mut eps = jitter.unwrap_or(DEFAULT_JITTER);
    if !(eps > 0.0) {
        return Err(Error::validation("jitter", "must be positive"));
    }
    loop {
        let mut shifted = cov.clone();
        for i in 0..dim {
            shifted[(i, i)] += eps;
        }
        if let Some(ch) = shifted.cholesky() {
            return Ok(KieferModel {
                t_grid: t_grid.to_vec(),
                n_functions: kernel.size(),
                jitter: eps,
                factor: Factor::Dense { cov, lower: ch.unpack() },
            });
        }
        if eps * 2.0 > MAX_JITTER {
            let min_eigenvalue = cov.symmetric_eigenvalues().min();
            return Err(Error::Factorization { jitter: eps, min_eigenvalue });
        }
        eps *= 2.0;
    }
}

impl KieferModel {
    /// Increment-based model for fine time grids: only `Gamma` is factored
    /// (through its symmetric square root), so memory is `O(|F|^2)`.
    pub fn separable(kernel: &LongRunKernel, t_grid: &[f64]) -> Result<Self> {
        validate_t_grid(t_grid)?;
        let eig = SymmetricEigen::new(kernel.gamma.clone());
        let min_eigenvalue = eig.eigenvalues.min();
        let scale = eig.eigenvalues.amax().max(1.0);
        if min_eigenvalue < -1e-10 * scale {
            return Err(Error::Factorization { jitter: 0.0, min_eigenvalue });
        }
        let d = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
        let root = &eig.eigenvectors * DMatrix::from_diagonal(&d) * eig.eigenvectors.transpose();
        Ok(Self {
            t_grid: t_grid.to_vec(),
            n_functions: kernel.size(),
            jitter: 0.0,
            factor: Factor::Separable { root },
        })
    }

    pub fn covariance(&self) -> Option<&DMatrix<f64>> {
        match &self.factor {
            Factor::Dense { cov, .. } => Some(cov),
            Factor::Separable { .. } => None,
        }
    }

    pub fn lower_factor(&self) -> Option<&DMatrix<f64>> {
        match &self.factor {
            Factor::Dense { lower, .. } => Some(lower),
            Factor::Separable { .. } => None,
        }
    }

    /// One draw of `K` on the grid: `field[(a, i)] = K(f_a, t_i)`.
    pub fn sample_field(&self, seed: u64) -> DMatrix<f64> {
        let mut rng = rng_from_seed(seed);
        let (m, nt) = (self.n_functions, self.t_grid.len());
        match &self.factor {
            Factor::Dense { lower, .. } => {
                let z = DVector::from_fn(m * nt, |_, _| StandardNormal.sample(&mut rng));
                let k = lower * z;
                DMatrix::from_fn(m, nt, |a, i| k[a * nt + i])
            }
            Factor::Separable { root } => {
                let z = DMatrix::from_fn(m, nt, |_, _| StandardNormal.sample(&mut rng));
                let mut inc = root * z;
                let mut prev_t = 0.0;
                let mut acc = DVector::zeros(m);
                for (i, &t) in self.t_grid.iter().enumerate() {
                    let step = (t - prev_t).sqrt();
                    prev_t = t;
                    let mut col = inc.column_mut(i);
                    col *= step;
                    acc += &col;
                    col.copy_from(&acc);
                }
                inc
            }
        }
    }

    /// `K(f, t) - t K(f, 1)` for one draw. Requires `t = 1` in the grid.
    pub fn sample_bridge(&self, seed: u64) -> Result<DMatrix<f64>> {
        let last = self.t_grid.len() - 1;
        if self.t_grid[last] != 1.0 {
            return Err(Error::validation("t_grid", "must contain t = 1"));
        }
        let mut k = self.sample_field(seed);
        for mut row in k.row_iter_mut() {
            let end = row[last];
            for (v, t) in row.iter_mut().zip(&self.t_grid) {
                *v -= t * end;
            }
            row[last] = 0.0;
        }
        Ok(k)
    }
}

/// `sup_{f,t} |K(f,t) - t K(f,1)|` over the grid for `draws` independent
/// draws. Draw `r` uses a seed derived from `(seed, r)`, so the result does
/// not depend on scheduling.
pub fn sample_sup_bridge(model: &KieferModel, draws: usize, seed: u64, exec: Execution) -> Result<Vec<f64>> {
    if model.t_grid.last() != Some(&1.0) {
        return Err(Error::validation("t_grid", "must contain t = 1"));
    }
    exec.try_map_indexed(draws, |r| {
        let b = model.sample_bridge(derive_seed(seed, "kiefer", r as u64))?;
        Ok(b.amax())
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantileRecord {
    pub alpha: f64,
    pub q: f64,
    pub mc_se: f64,
    /// `"<functions>x<times>"`
    pub grid: String,
    pub draws: usize,
}

/// Upper `alpha` critical value (type-7 quantile at `1 - alpha`) and its
/// Monte Carlo standard error: half the spread of the order statistics one
/// binomial standard deviation either side.
pub fn critical_value(draws: &[f64], alpha: f64) -> Result<(f64, f64)> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::validation("alpha", format!("{alpha} outside (0,1)")));
    }
    if draws.is_empty() {
        return Err(Error::validation("draws", "empty"));
    }
    let sorted = stats::sorted(draws);
    let p = 1.0 - alpha;
    let q = stats::quantile_sorted(&sorted, p);
    let n = sorted.len() as f64;
    let sd = (p * (1.0 - p) / n).sqrt();
    let lo = stats::quantile_sorted(&sorted, (p - sd).max(0.0));
    let hi = stats::quantile_sorted(&sorted, (p + sd).min(1.0));
    Ok((q, (hi - lo) / 2.0))
}

pub fn quantile_records(draws: &[f64], alphas: &[f64], grid: &str) -> Result<Vec<QuantileRecord>> {
    alphas
        .iter()
        .map(|&alpha| {
            let (q, mc_se) = critical_value(draws, alpha)?;
            Ok(QuantileRecord { alpha, q, mc_se, grid: grid.to_string(), draws: draws.len() })
        })
        .collect()
}
