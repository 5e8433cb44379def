//! Transfer-operator quantities for finite-state chains: perturbed operators,
//! leading eigenvalues, asymptotic variances, ergodicity constants and
//! covariance decay.

use nalgebra::{Complex, DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::processes::{FiniteChainSpec, SamplePath};

pub type C64 = Complex<f64>;

/// Moduli below this count as zero when reading off `theta`.
const ZERO_MODULUS: f64 = 1e-12;
/// Minimal separation `|lambda_1| - |lambda_2|` for a dominant eigenvalue.
const GAP_THRESHOLD: f64 = 1e-8;
const CENTERING_TOL: f64 = 1e-12;

/// `P_{f,t}`: entries `P(x, y) e^{i t f(y)}`.
#[derive(Debug, Clone)]
pub struct PerturbedOperator {
    pub base: FiniteChainSpec,
    pub f: Vec<f64>,
    pub t: f64,
    pub matrix: DMatrix<C64>,
}

pub fn perturbed_operator(spec: &FiniteChainSpec, f: &[f64], t: f64) -> Result<PerturbedOperator> {
    check_len(spec, f, "f")?;
    let p = spec.transition();
    let phase: Vec<C64> = f.iter().map(|v| C64::from_polar(1.0, t * v)).collect();
    let matrix = DMatrix::from_fn(p.nrows(), p.ncols(), |x, y| {
        if t == 0.0 {
            C64::new(p[(x, y)], 0.0)
        } else {
            phase[y] * p[(x, y)]
        }
    });
    Ok(PerturbedOperator { base: spec.clone(), f: f.to_vec(), t, matrix })
}

fn check_len(spec: &FiniteChainSpec, f: &[f64], field: &str) -> Result<()> {
    if f.len() != spec.states() {
        return Err(Error::validation(
            field,
            format!("length {} does not match {} states", f.len(), spec.states()),
        ));
    }
    Ok(())
}

/// Eigenvalues sorted by decreasing modulus.
pub fn eigenvalues_by_modulus(m: &DMatrix<C64>) -> Result<Vec<C64>> {
    let ev = m
        .clone()
        .eigenvalues()
        .ok_or_else(|| Error::Numeric("Schur decomposition did not converge".into()))?;
    let mut ev: Vec<C64> = ev.iter().copied().collect();
    ev.sort_by(|a, b| b.norm().total_cmp(&a.norm()));
    Ok(ev)
}

fn real_eigenvalues_by_modulus(p: &DMatrix<f64>) -> Result<Vec<C64>> {
    eigenvalues_by_modulus(&p.map(|v| C64::new(v, 0.0)))
}

/// Dominant eigenvalue with convergence diagnostics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LeadingEigen {
    pub lambda: C64,
    /// `|lambda_2|` from the full spectrum.
    pub second_modulus: f64,
    /// `||M v - lambda v|| / ||v||` at termination.
    pub residual: f64,
    pub iterations: usize,
}

/// Dominant eigenvalue of `P_{f,t}` by complex power iteration, after a
/// Schur-based check that it is separated from the rest of the spectrum.
pub fn leading_eigen(op: &PerturbedOperator) -> Result<LeadingEigen> {
    let m = &op.matrix;
    let ev = eigenvalues_by_modulus(m)?;
    let l1 = ev[0].norm();
    let l2 = ev.get(1).map_or(0.0, |z| z.norm());
    if l1 - l2 <= GAP_THRESHOLD {
        return Err(Error::GapCollapse { lambda1: l1, lambda2: l2 });
    }
    let k = m.nrows();
    let mut v = DVector::from_element(k, C64::new(1.0, 0.0));
    let mut lambda = ev[0];
    let mut residual = f64::INFINITY;
    let max_iter = 1_000_000;
    for it in 1..=max_iter {
        let w = m * &v;
        let vv = v.dotc(&v);
        lambda = v.dotc(&w) / vv;
        residual = (&w - &v * lambda).norm() / vv.re.sqrt();
        if residual <= 1e-15 * lambda.norm().max(1.0) || it == max_iter {
            return finish(lambda, l2, residual, it, ev[0]);
        }
        let nw = w.norm();
        if nw == 0.0 {
            break;
        }
        v = w / C64::new(nw, 0.0);
    }
    finish(lambda, l2, residual, max_iter, ev[0])
}

fn finish(lambda: C64, l2: f64, residual: f64, iterations: usize, schur: C64) -> Result<LeadingEigen> {
    // Power iteration stalls at rounding level; accept once it agrees with
    // the Schur value to the required relative accuracy.
    if residual > 1e-12 && (lambda - schur).norm() > 1e-10 * schur.norm().max(1e-300) {
        return Err(Error::Numeric(format!(
            "power iteration did not converge: residual {residual:e} after {iterations} steps"
        )));
    }
    Ok(LeadingEigen { lambda, second_modulus: l2, residual, iterations })
}

pub fn h_grid_default() -> Vec<f64> {
    vec![0.1, 0.05, 0.025, 0.0125]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EigenVariance {
    pub sigma2: f64,
    pub h_grid: Vec<f64>,
    /// `2 (1 - Re lambda_h) / h^2`
    pub raw: Vec<f64>,
    /// `|lambda_h - 1 + h^2 sigma2 / 2| / h^2`
    pub taylor_residual: Vec<f64>,
    /// `max_h |Im lambda_h| / h`; the drift `nu(f)` of a centered `f` is 0,
    /// so this is `O(h^2)`.
    pub max_drift: f64,
}

/// `sigma_f^2` from the curvature of the leading eigenvalue at `t = 0`,
/// extrapolated to `h -> 0` in powers of `h^2`.
pub fn sigma2_from_eigen(spec: &FiniteChainSpec, f: &[f64], h_grid: &[f64]) -> Result<EigenVariance> {
    check_len(spec, f, "f")?;
    require_centered(spec, f)?;
    if h_grid.is_empty() || h_grid.iter().any(|h| !(*h > 0.0 && *h <= 0.1)) {
        return Err(Error::validation("h_grid", "values must lie in (0, 0.1]"));
    }
    let mut lambdas = Vec::with_capacity(h_grid.len());
    for &h in h_grid {
        lambdas.push(leading_eigen(&perturbed_operator(spec, f, h)?)?.lambda);
    }
    let raw: Vec<f64> = h_grid.iter().zip(&lambdas).map(|(h, l)| 2.0 * (1.0 - l.re) / (h * h)).collect();
    let x: Vec<f64> = h_grid.iter().map(|h| h * h).collect();
    let sigma2 = neville_at_zero(&x, &raw);
    let taylor_residual = h_grid
        .iter()
        .zip(&lambdas)
        .map(|(h, l)| (l - C64::new(1.0 - h * h * sigma2 / 2.0, 0.0)).norm() / (h * h))
        .collect();
    let max_drift = h_grid.iter().zip(&lambdas).fold(0.0f64, |a, (h, l)| a.max(l.im.abs() / h));
    Ok(EigenVariance { sigma2, h_grid: h_grid.to_vec(), raw, taylor_residual, max_drift })
}

fn require_centered(spec: &FiniteChainSpec, f: &[f64]) -> Result<()> {
    let m = spec.expectation(f);
    if m.abs() > CENTERING_TOL {
        return Err(Error::validation("f", format!("not centered: nu(f) = {m:e}")));
    }
    Ok(())
}

/// Value at 0 of the interpolating polynomial through `(x_i, y_i)`.
fn neville_at_zero(x: &[f64], y: &[f64]) -> f64 {
    let mut p = y.to_vec();
    let n = x.len();
    for m in 1..n {
        for i in 0..n - m {
            p[i] = (x[i + m] * p[i] - x[i] * p[i + 1]) / (x[i + m] - x[i]);
        }
    }
    p[0]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesVariance {
    pub sigma2: f64,
    pub terms: usize,
    /// Bound on the neglected tail `2 sum_{k > L} |Cov_k|`.
    pub tail_bound: f64,
}

/// `Cov(g(X_0), f(X_k))` for `k = 0..=kmax` under the stationary law.
/// Iterates `P^k f` and re-centers at every step, so the geometric decay is
/// not swamped by the drift of `nu(f)`.
pub fn lag_covariances(spec: &FiniteChainSpec, f: &[f64], g: &[f64], kmax: usize) -> Vec<f64> {
    let p = spec.transition();
    let nu = spec.stationary();
    let mut v = DVector::from_column_slice(&spec.center(f));
    let gc = spec.center(g);
    let mut out = Vec::with_capacity(kmax + 1);
    for k in 0..=kmax {
        if k > 0 {
            v = p * &v;
            let m = nu.dot(&v);
            v.add_scalar_mut(-m);
        }
        out.push(nu.iter().zip(&gc).zip(v.iter()).map(|((w, a), b)| w * a * b).sum());
    }
    out
}

/// `sigma_f^2 = nu(f^2) + 2 sum_{k=1}^{L} Cov(f(X_0), f(X_k))`.
pub fn sigma2_from_series(spec: &FiniteChainSpec, f: &[f64], terms: usize) -> Result<SeriesVariance> {
    check_len(spec, f, "f")?;
    require_centered(spec, f)?;
    let cov = lag_covariances(spec, f, f, terms);
    let sigma2 = cov[0] + 2.0 * cov[1..].iter().sum::<f64>();
    let erg = ergodicity_rate(spec, &[])?;
    let l1: f64 = spec.stationary().iter().zip(f).map(|(w, v)| w * v.abs()).sum();
    let sup = sup_norm(f);
    let tail_bound = if erg.theta == 0.0 {
        0.0
    } else {
        2.0 * l1 * erg.kappa * sup * erg.theta.powi(terms as i32 + 1) / (1.0 - erg.theta)
    };
    Ok(SeriesVariance { sigma2, terms, tail_bound })
}

/// Number of series terms after which `theta^L` falls below `1e-17`.
pub fn default_series_terms(theta: f64) -> usize {
    if theta <= ZERO_MODULUS {
        1
    } else {
        ((1e-17f64.ln() / theta.ln()).ceil() as usize + 1).clamp(1, 1_000_000)
    }
}

/// `D = (I - P + Pi)^{-1}`, so that `sum_k P^k g = D g` for `nu(g) = 0`.
pub fn fundamental_matrix(spec: &FiniteChainSpec) -> Result<DMatrix<f64>> {
    let k = spec.states();
    let p = spec.transition();
    let nu = spec.stationary();
    let pi = DMatrix::from_fn(k, k, |_, y| nu[y]);
    (DMatrix::identity(k, k) - p + pi)
        .try_inverse()
        .ok_or_else(|| Error::Numeric("I - P + Pi is singular (chain not ergodic)".into()))
}

/// Exact `Gamma(f, g)` via the fundamental matrix:
/// `nu(f D g) + nu(g D f) - nu(f g)` on centered `f, g`.
pub fn long_run_covariance(spec: &FiniteChainSpec, d: &DMatrix<f64>, f: &[f64], g: &[f64]) -> f64 {
    let nu = spec.stationary();
    let fc = DVector::from_column_slice(&spec.center(f));
    let gc = DVector::from_column_slice(&spec.center(g));
    let df = d * &fc;
    let dg = d * &gc;
    let mut acc = 0.0;
    for x in 0..spec.states() {
        acc += nu[x] * (fc[x] * dg[x] + gc[x] * df[x] - fc[x] * gc[x]);
    }
    acc
}

fn sup_norm(f: &[f64]) -> f64 {
    f.iter().fold(0.0f64, |a, v| a.max(v.abs()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ergodicity {
    pub kappa: f64,
    pub theta: f64,
}

/// Probe vectors: the state indicators plus an alternating sign vector.
pub fn default_probes(states: usize) -> Vec<Vec<f64>> {
    let mut probes: Vec<Vec<f64>> = (0..states)
        .map(|i| (0..states).map(|j| f64::from(u8::from(i == j))).collect())
        .collect();
    probes.push((0..states).map(|j| if j % 2 == 0 { 1.0 } else { -1.0 }).collect());
    probes
}

/// `theta = |lambda_2|` and `kappa = max ||P^n f - nu(f)||_inf / (||f||_inf theta^n)`
/// over probes and `n <= 100`. An empty probe list uses the exact operator
/// norm of `P^n - Pi` instead.
pub fn ergodicity_rate(spec: &FiniteChainSpec, probes: &[Vec<f64>]) -> Result<Ergodicity> {
    let ev = real_eigenvalues_by_modulus(spec.transition())?;
    let mut theta = ev.get(1).map_or(0.0, |z| z.norm());
    if theta >= 1.0 - 1e-10 {
        return Err(Error::validation(
            "transition",
            format!("|lambda_2| = {theta}: chain is periodic or reducible"),
        ));
    }
    if theta < ZERO_MODULUS {
        theta = 0.0;
    }
    let kappa = if probes.is_empty() {
        kappa_exact(spec, theta, 100)
    } else {
        let mut kappa = 0.0f64;
        for f in probes {
            check_len(spec, f, "probes")?;
            let norm = sup_norm(f);
            if norm == 0.0 {
                continue;
            }
            // Iterating the centered vector keeps P^n f - nu(f) accurate to
            // relative rounding instead of absolute.
            let nu = spec.stationary();
            let mut v = DVector::from_column_slice(&spec.center(f));
            for n in 0..=100 {
                if n > 0 {
                    v = spec.transition() * &v;
                    let m = nu.dot(&v);
                    v.add_scalar_mut(-m);
                }
                let dev = v.amax();
                kappa = kappa.max(ratio(dev, norm, theta, n));
            }
        }
        kappa
    };
    Ok(Ergodicity { kappa, theta })
}

/// `dev / (scale theta^n)`. With `theta = 0` rounding-level deviations count
/// as zero.
fn ratio(dev: f64, scale: f64, theta: f64, n: usize) -> f64 {
    let denom = scale * theta.powi(n as i32);
    if denom > 0.0 {
        dev / denom
    } else if dev <= 1e-13 * scale {
        0.0
    } else {
        f64::INFINITY
    }
}

/// `max_{n <= nmax} ||P^n - Pi||_{inf -> inf} / theta^n`, using
/// `P^n - Pi = (P - Pi)^n` for `n >= 1`.
pub fn kappa_exact(spec: &FiniteChainSpec, theta: f64, nmax: usize) -> f64 {
    let k = spec.states();
    let nu = spec.stationary();
    let pi = DMatrix::from_fn(k, k, |_, y| nu[y]);
    let r = spec.transition() - &pi;
    let mut d = DMatrix::<f64>::identity(k, k) - &pi;
    let mut kappa = 0.0f64;
    for n in 0..=nmax {
        if n > 1 {
            d = &d * &r;
        } else if n == 1 {
            d = r.clone();
        }
        let norm = d.row_iter().map(|r| r.iter().map(|v| v.abs()).sum::<f64>()).fold(0.0, f64::max);
        kappa = kappa.max(ratio(norm, 1.0, theta, n));
    }
    kappa
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayRow {
    pub k: usize,
    pub cov: f64,
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayReport {
    pub rows: Vec<DecayRow>,
    pub theta: f64,
    /// Exact `kappa`; the ratios can never exceed it.
    pub kappa: f64,
    /// Fitted constant: the largest ratio.
    pub c_fit: f64,
    /// Largest ratio over `k >= 5`.
    pub c_tail: f64,
    pub passed: bool,
}

impl DecayReport {
    /// `(max - min) / max` of the ratios over `k >= from`.
    pub fn relative_spread(&self, from: usize) -> f64 {
        let r: Vec<f64> = self.rows.iter().filter(|r| r.k >= from).map(|r| r.ratio).collect();
        let hi = r.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lo = r.iter().copied().fold(f64::INFINITY, f64::min);
        if hi == 0.0 {
            0.0
        } else {
            (hi - lo) / hi
        }
    }

    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        for row in &self.rows {
            wr.serialize(row)?;
        }
        wr.flush()?;
        Ok(())
    }
}

/// Ratios `|Cov(g(X_0), f(X_k))| / (||g||_s ||f||_inf theta^k)` for
/// `k <= kmax`, with `||g||_s` taken under the stationary law.
pub fn covariance_decay_check(spec: &FiniteChainSpec, f: &[f64], g: &[f64], s: f64, kmax: usize) -> Result<DecayReport> {
    check_len(spec, f, "f")?;
    check_len(spec, g, "g")?;
    if s < 1.0 {
        return Err(Error::validation("s", "must be at least 1"));
    }
    let erg = ergodicity_rate(spec, &[])?;
    let g_s = spec
        .stationary()
        .iter()
        .zip(g)
        .map(|(w, v)| w * v.abs().powf(s))
        .sum::<f64>()
        .powf(1.0 / s);
    let scale = g_s * sup_norm(f);
    let covs = lag_covariances(spec, f, g, kmax);
    let rows: Vec<DecayRow> = covs
        .iter()
        .enumerate()
        .map(|(k, &cov)| DecayRow {
            k,
            cov,
            ratio: if scale == 0.0 { 0.0 } else { ratio(cov.abs(), scale, erg.theta, k) },
        })
        .collect();
    let c_fit = rows.iter().map(|r| r.ratio).fold(0.0, f64::max);
    let c_tail = rows.iter().filter(|r| r.k >= 5).map(|r| r.ratio).fold(0.0, f64::max);
    let passed = c_fit.is_finite() && c_fit <= erg.kappa * (1.0 + 1e-9) + 1e-12;
    Ok(DecayReport { rows, theta: erg.theta, kappa: erg.kappa, c_fit, c_tail, passed })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComplexValue {
    pub re: f64,
    pub im: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralReport {
    pub lambda: ComplexValue,
    /// `|lambda_1| - |lambda_2|` of `P_{f,t}`.
    pub gap: f64,
    pub sigma2: f64,
    pub theta: f64,
    pub kappa: f64,
}

/// Leading eigenvalue and gap of `P_{f,t}` together with `sigma_f^2` of the
/// centered `f` and the ergodicity constants of the chain.
pub fn spectral_report(spec: &FiniteChainSpec, f: &[f64], t: f64) -> Result<SpectralReport> {
    let lead = leading_eigen(&perturbed_operator(spec, f, t)?)?;
    let erg = ergodicity_rate(spec, &[])?;
    let fc = spec.center(f);
    let sigma2 = sigma2_from_series(spec, &fc, default_series_terms(erg.theta))?.sigma2;
    Ok(SpectralReport {
        lambda: ComplexValue { re: lead.lambda.re, im: lead.lambda.im },
        gap: lead.lambda.norm() - lead.second_modulus,
        sigma2,
        theta: erg.theta,
        kappa: erg.kappa,
    })
}

/// `S_n(f, g, s) = sum_{i <= [ns]} f(X_i) + sum_{i > [ns]} g(X_i)` on a path of
/// state labels.
pub fn two_block_sum(path: &SamplePath, f: &[f64], g: &[f64], s: f64) -> f64 {
    let split = crate::empirical::floor_nt(path.len(), s);
    path.points()
        .enumerate()
        .map(|(i, y)| {
            let x = y[0] as usize;
            if i < split {
                f[x]
            } else {
                g[x]
            }
        })
        .sum()
}
