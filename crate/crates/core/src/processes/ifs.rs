use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{halton, PathModel, SamplePath};
use crate::error::{Error, Result};
use crate::exec::rng_from_seed;

const PROB_SUM_TOL: f64 = 1e-12;
pub const DEFAULT_BURN_IN: usize = 1000;
pub const DEFAULT_PROBES: usize = 1000;

/// `x -> A x + b` on `R^d`, with `A` stored row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AffineMap {
    pub linear: Vec<f64>,
    pub offset: Vec<f64>,
}

impl AffineMap {
    /// One-dimensional `x -> scale * x + shift`.
    pub fn scalar(scale: f64, shift: f64) -> Self {
        Self {
            linear: vec![scale],
            offset: vec![shift],
        }
    }

    pub fn dim(&self) -> usize {
        self.offset.len()
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let d = self.dim();
        (0..d)
            .map(|i| self.offset[i] + (0..d).map(|j| self.linear[i * d + j] * x[j]).sum::<f64>())
            .collect()
    }
}

/// Lipschitz selection probability `p_i(x)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ProbFn {
    Constant { value: f64 },
    /// `intercept + slope . x`
    Affine { intercept: f64, slope: Vec<f64> },
}

impl ProbFn {
    pub fn eval(&self, x: &[f64]) -> f64 {
        match self {
            ProbFn::Constant { value } => *value,
            ProbFn::Affine { intercept, slope } => intercept + slope.iter().zip(x).map(|(a, b)| a * b).sum::<f64>(),
        }
    }

    /// Lipschitz constant with respect to `metric`.
    pub fn lipschitz(&self, metric: Metric) -> f64 {
        match self {
            ProbFn::Constant { .. } => 0.0,
            // Dual norms: Euclidean is self-dual, max-metric pairs with l1.
            ProbFn::Affine { slope, .. } => match metric {
                Metric::Euclidean => slope.iter().map(|s| s * s).sum::<f64>().sqrt(),
                Metric::Max => slope.iter().map(|s| s.abs()).sum(),
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    #[default]
    Euclidean,
    Max,
}

impl Metric {
    pub fn distance(self, x: &[f64], y: &[f64]) -> f64 {
        let diffs = x.iter().zip(y).map(|(a, b)| (a - b).abs());
        match self {
            Metric::Euclidean => diffs.map(|d| d * d).sum::<f64>().sqrt(),
            Metric::Max => diffs.fold(0.0, f64::max),
        }
    }
}

/// Iterated function system with place-dependent probabilities.
///
/// `domain` is the box used for probing the probability functions and the
/// contraction conditions, and for drawing the start point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IfsSpec {
    pub maps: Vec<AffineMap>,
    pub probs: Vec<ProbFn>,
    #[serde(default)]
    pub metric: Metric,
    pub domain: Vec<[f64; 2]>,
    #[serde(default = "default_burn_in")]
    pub burn_in: usize,
}

fn default_burn_in() -> usize {
    DEFAULT_BURN_IN
}

impl IfsSpec {
    pub fn dim(&self) -> usize {
        self.domain.len()
    }

    /// Checks shapes and that the probabilities form a distribution at
    /// `DEFAULT_PROBES` Halton points of the domain.
    pub fn validate(&self) -> Result<()> {
        if self.maps.is_empty() {
            return Err(Error::validation("maps", "empty map list"));
        }
        if self.maps.len() != self.probs.len() {
            return Err(Error::validation("probs", "one probability function per map required"));
        }
        let d = self.dim();
        if d == 0 || self.domain.iter().any(|[lo, hi]| !(lo < hi)) {
            return Err(Error::validation("domain", "needs at least one interval with lo < hi"));
        }
        for (i, m) in self.maps.iter().enumerate() {
            if m.dim() != d || m.linear.len() != d * d {
                return Err(Error::validation(format!("maps[{i}]"), "dimension mismatch"));
            }
        }
        for x in halton(DEFAULT_PROBES, &self.domain) {
            let mut sum = 0.0;
            for (i, p) in self.probs.iter().enumerate() {
                let v = p.eval(&x);
                if !(-PROB_SUM_TOL..=1.0 + PROB_SUM_TOL).contains(&v) {
                    return Err(Error::validation(format!("probs[{i}]"), format!("value {v} outside [0,1] at {x:?}")));
                }
                sum += v;
            }
            if (sum - 1.0).abs() > PROB_SUM_TOL {
                return Err(Error::validation("probs", format!("sum {sum} != 1 at {x:?}")));
            }
        }
        Ok(())
    }

    fn choose<R: Rng>(&self, x: &[f64], rng: &mut R) -> usize {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for (i, p) in self.probs.iter().enumerate() {
            acc += p.eval(x);
            if u < acc {
                return i;
            }
        }
        self.probs.len() - 1
    }
}

/// Runs the chain from a seeded uniform start in the domain, discards
/// `burn_in` steps and records the next `n` states.
pub fn simulate_ifs(spec: &IfsSpec, n: usize, burn_in: usize, seed: u64) -> Result<SamplePath> {
    spec.validate()?;
    if n == 0 {
        return Err(Error::validation("n", "must be at least 1"));
    }
    let mut rng = rng_from_seed(seed);
    let mut x: Vec<f64> = spec.domain.iter().map(|[lo, hi]| lo + (hi - lo) * rng.random::<f64>()).collect();
    for _ in 0..burn_in {
        let i = spec.choose(&x, &mut rng);
        x = spec.maps[i].apply(&x);
    }
    let mut values = Vec::with_capacity(n * spec.dim());
    for _ in 0..n {
        let i = spec.choose(&x, &mut rng);
        x = spec.maps[i].apply(&x);
        values.extend_from_slice(&x);
    }
    SamplePath::new(values, spec.dim(), seed, format!("ifs{}", spec.maps.len()), burn_in)
}

impl PathModel for IfsSpec {
    fn simulate(&self, n: usize, seed: u64) -> Result<SamplePath> {
        simulate_ifs(self, n, self.burn_in, seed)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContractionReport {
    /// Largest observed `sum_i d(T_i x, T_i y) p_i(z) / d(x, y)`.
    pub rho: f64,
    /// True when `rho >= 1`, i.e. contraction on average fails at some probe.
    pub violated: bool,
    pub evaluated: usize,
    /// Probes with `x == y`, which carry no information.
    pub skipped: usize,
}

pub type ProbeTriple = (Vec<f64>, Vec<f64>, Vec<f64>);

pub fn check_contraction_average(spec: &IfsSpec, probes: &[ProbeTriple]) -> ContractionReport {
    let mut rho = 0.0f64;
    let mut skipped = 0;
    for (x, y, z) in probes {
        let dxy = spec.metric.distance(x, y);
        if dxy == 0.0 {
            skipped += 1;
            continue;
        }
        let s: f64 = spec
            .maps
            .iter()
            .zip(&spec.probs)
            .map(|(t, p)| spec.metric.distance(&t.apply(x), &t.apply(y)) * p.eval(z))
            .sum();
        rho = rho.max(s / dxy);
    }
    ContractionReport {
        rho,
        violated: rho >= 1.0,
        evaluated: probes.len() - skipped,
        skipped,
    }
}

/// `count` probe triples from a Halton sequence over `domain^3`.
pub fn default_probe_triples(spec: &IfsSpec, count: usize) -> Vec<ProbeTriple> {
    let d = spec.dim();
    let boxes: Vec<[f64; 2]> = spec.domain.iter().cycle().take(3 * d).copied().collect();
    halton(count, &boxes)
        .into_iter()
        .map(|p| (p[..d].to_vec(), p[d..2 * d].to_vec(), p[2 * d..].to_vec()))
        .collect()
}

/// Probe estimates of the suprema in the regularity conditions on the maps
/// and probabilities. These are lower estimates of the true suprema over the
/// probe set, never proofs.
#[derive(Debug, Clone, PartialEq)]
pub struct RegularityReport {
    /// `sup sum_i d(T_i y, T_i z) / d(y, z) p_i(x)`
    pub h0: f64,
    /// `sup sum_i d(T_i y, x0) / (1 + d(y, x0)) p_i(x)`
    pub h1: f64,
    /// `sup_x sum_i d(T_i x, x0) / (1 + d(x, x0)) Lip(p_i)`
    pub h2: f64,
    pub probes: usize,
}

pub fn check_regularity(spec: &IfsSpec, probes: &[ProbeTriple], x0: &[f64]) -> RegularityReport {
    let m = spec.metric;
    let lips: Vec<f64> = spec.probs.iter().map(|p| p.lipschitz(m)).collect();
    let (mut h0, mut h1, mut h2) = (0.0f64, 0.0f64, 0.0f64);
    for (x, y, z) in probes {
        let dyz = m.distance(y, z);
        if dyz > 0.0 {
            let s: f64 = spec
                .maps
                .iter()
                .zip(&spec.probs)
                .map(|(t, p)| m.distance(&t.apply(y), &t.apply(z)) / dyz * p.eval(x))
                .sum();
            h0 = h0.max(s);
        }
        let s1: f64 = spec
            .maps
            .iter()
            .zip(&spec.probs)
            .map(|(t, p)| m.distance(&t.apply(y), x0) / (1.0 + m.distance(y, x0)) * p.eval(x))
            .sum();
        h1 = h1.max(s1);
        let s2: f64 = spec
            .maps
            .iter()
            .zip(&lips)
            .map(|(t, l)| m.distance(&t.apply(x), x0) / (1.0 + m.distance(x, x0)) * l)
            .sum();
        h2 = h2.max(s2);
    }
    RegularityReport {
        h0,
        h1,
        h2,
        probes: probes.len(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::{ks_one_sample, mean};

    pub(crate) fn halving(p0: ProbFn, p1: ProbFn) -> IfsSpec {
        IfsSpec {
            maps: vec![AffineMap::scalar(0.5, 0.0), AffineMap::scalar(0.5, 0.5)],
            probs: vec![p0, p1],
            metric: Metric::Euclidean,
            domain: vec![[0.0, 1.0]],
            burn_in: DEFAULT_BURN_IN,
        }
    }

    fn fair() -> IfsSpec {
        halving(ProbFn::Constant { value: 0.5 }, ProbFn::Constant { value: 0.5 })
    }

    #[test]
    fn halving_system_is_uniform() {
        let path = simulate_ifs(&fair(), 100_000, 1000, 9).unwrap();
        let d = ks_one_sample(path.values(), |x| x.clamp(0.0, 1.0));
        assert!(d < 0.02, "ks {d}");
    }

    #[test]
    fn single_contraction_goes_to_zero() {
        let spec = IfsSpec {
            maps: vec![AffineMap::scalar(0.5, 0.0)],
            probs: vec![ProbFn::Constant { value: 1.0 }],
            metric: Metric::Euclidean,
            domain: vec![[0.0, 1.0]],
            burn_in: 0,
        };
        let path = simulate_ifs(&spec, 60, 0, 1).unwrap();
        let x0 = path.values()[0] * 2.0;
        for (k, &x) in path.values().iter().enumerate() {
            assert!(x.abs() <= x0.abs() * 0.5f64.powi(k as i32 + 1) * (1.0 + 1e-15));
        }
    }

    #[test]
    fn empty_maps_rejected() {
        let mut spec = fair();
        spec.maps.clear();
        spec.probs.clear();
        assert!(simulate_ifs(&spec, 10, 0, 0).is_err());
    }

    #[test]
    fn probabilities_must_sum_to_one() {
        let spec = halving(ProbFn::Constant { value: 0.5 }, ProbFn::Constant { value: 0.6 });
        assert!(spec.validate().is_err());
    }

    #[test]
    fn place_dependent_mean_matches_brute_force() {
        let spec = halving(
            ProbFn::Affine { intercept: 1.0 / 3.0, slope: vec![1.0 / 3.0] },
            ProbFn::Affine { intercept: 2.0 / 3.0, slope: vec![-1.0 / 3.0] },
        );
        spec.validate().unwrap();
        let n = 200_000;
        let path = simulate_ifs(&spec, n, 1000, 21).unwrap();

        // Independent straightforward simulator with its own generator.
        let mut rng = rng_from_seed(987_654);
        let mut x = 0.3f64;
        let long = 2_000_000;
        let mut oracle = Vec::with_capacity(long);
        for _ in 0..long + 1000 {
            let p0 = (1.0 + x) / 3.0;
            x = if rng.random::<f64>() < p0 { 0.5 * x } else { 0.5 * x + 0.5 };
            oracle.push(x);
        }
        let oracle = &oracle[1000..];

        // Batch-means standard error for the dependent path.
        let batches: Vec<f64> = path.values().chunks(2000).map(mean).collect();
        let se = (crate::stats::variance(&batches) / batches.len() as f64).sqrt();
        let diff = (mean(path.values()) - mean(oracle)).abs();
        assert!(diff < 3.0 * se * (1.0 + (n as f64 / long as f64)).sqrt(), "diff {diff} se {se}");
    }

    #[test]
    fn contraction_rates() {
        let probes = default_probe_triples(&fair(), 200);
        let r = check_contraction_average(&fair(), &probes);
        assert!((r.rho - 0.5).abs() < 1e-12 && !r.violated);

        let nine = IfsSpec {
            maps: vec![AffineMap::scalar(0.9, 0.0), AffineMap::scalar(0.9, 0.1)],
            ..fair()
        };
        let r = check_contraction_average(&nine, &probes);
        assert!((r.rho - 0.9).abs() < 1e-12);

        let expand = IfsSpec {
            maps: vec![AffineMap::scalar(2.0, 0.0)],
            probs: vec![ProbFn::Constant { value: 1.0 }],
            ..fair()
        };
        let r = check_contraction_average(&expand, &probes);
        assert!((r.rho - 2.0).abs() < 1e-12 && r.violated);
    }

    #[test]
    fn coincident_probe_is_skipped() {
        let r = check_contraction_average(&fair(), &[(vec![0.3], vec![0.3], vec![0.1])]);
        assert_eq!((r.skipped, r.evaluated), (1, 0));
    }

    #[test]
    fn regularity_of_halving_system() {
        let spec = halving(
            ProbFn::Affine { intercept: 1.0 / 3.0, slope: vec![1.0 / 3.0] },
            ProbFn::Affine { intercept: 2.0 / 3.0, slope: vec![-1.0 / 3.0] },
        );
        let probes = default_probe_triples(&spec, 500);
        let r = check_regularity(&spec, &probes, &[0.0]);
        assert!((r.h0 - 0.5).abs() < 1e-12);
        assert!(r.h1 <= 1.0 && r.h2.is_finite());
    }
}
