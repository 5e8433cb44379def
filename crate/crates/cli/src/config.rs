//! Experiment configuration (TOML).

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use seqclt::bracketing::{BracketClass, Measure, Psi};
use seqclt::empirical::FunctionClass;
use seqclt::processes::ModelSpec;
use seqclt::{Error, Result};

/// Indexing class over which `T_n` and the Kiefer field are computed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ClassSpec {
    IntervalIndicators {
        points: usize,
        #[serde(default)]
        lo: f64,
        #[serde(default = "one")]
        hi: f64,
    },
    RectangleIndicators {
        points: usize,
        dim: usize,
        #[serde(default)]
        lo: f64,
        #[serde(default = "one")]
        hi: f64,
    },
    EllipsoidIndicators {
        members: Vec<EllipseSpec>,
    },
    HolderSmoothed {
        points: usize,
        width: f64,
        #[serde(default)]
        lo: f64,
        #[serde(default = "one")]
        hi: f64,
    },
    /// One vector of values per function, indexed by chain state.
    StateFunctions {
        values: Vec<Vec<f64>>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EllipseSpec {
    pub center: Vec<f64>,
    pub radii: Vec<f64>,
}

fn one() -> f64 {
    1.0
}

impl Default for ClassSpec {
    fn default() -> Self {
        ClassSpec::IntervalIndicators { points: 50, lo: 0.0, hi: 1.0 }
    }
}

impl ClassSpec {
    pub fn build(&self) -> FunctionClass {
        match self {
            ClassSpec::IntervalIndicators { points, lo, hi } => FunctionClass::interval_grid(*points, *lo, *hi),
            ClassSpec::RectangleIndicators { points, dim, lo, hi } => FunctionClass::rectangle_grid(*points, *dim, *lo, *hi),
            ClassSpec::EllipsoidIndicators { members } => {
                FunctionClass::ellipsoids(members.iter().map(|e| (e.center.clone(), e.radii.clone())).collect())
            }
            ClassSpec::HolderSmoothed { points, width, lo, hi } => FunctionClass::ramp_grid(*points, *lo, *hi, *width),
            ClassSpec::StateFunctions { values } => FunctionClass::state_functions(values.clone()),
        }
    }

    fn validate(&self) -> Result<()> {
        let range = |lo: f64, hi: f64| {
            if lo < hi {
                Ok(())
            } else {
                Err(invalid("class.hi", "must exceed class.lo"))
            }
        };
        match self {
            ClassSpec::IntervalIndicators { points, lo, hi } => {
                positive(*points, "class.points")?;
                range(*lo, *hi)
            }
            ClassSpec::RectangleIndicators { points, dim, lo, hi } => {
                positive(*points, "class.points")?;
                positive(*dim, "class.dim")?;
                range(*lo, *hi)
            }
            ClassSpec::HolderSmoothed { points, width, lo, hi } => {
                positive(*points, "class.points")?;
                if !(*width > 0.0) {
                    return Err(invalid("class.width", "must be positive"));
                }
                range(*lo, *hi)
            }
            ClassSpec::EllipsoidIndicators { members } => {
                if members.is_empty() {
                    return Err(invalid("class.members", "empty"));
                }
                for (i, m) in members.iter().enumerate() {
                    if m.center.len() != m.radii.len() || m.radii.iter().any(|r| !(*r > 0.0)) {
                        return Err(invalid(&format!("class.members[{i}]"), "radii must be positive, one per coordinate"));
                    }
                }
                Ok(())
            }
            ClassSpec::StateFunctions { values } => {
                if values.is_empty() {
                    return Err(invalid("class.values", "empty"));
                }
                Ok(())
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelChoice {
    /// Analytic for i.i.d. interval classes, spectral for chains, estimated
    /// otherwise.
    #[default]
    Auto,
    Analytic,
    Spectral,
    Estimated,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sampler {
    /// Dense Cholesky up to 3000 grid cells, separable beyond.
    #[default]
    Auto,
    Dense,
    Separable,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KieferSection {
    pub kernel: KernelChoice,
    pub sampler: Sampler,
    /// Time grid `j / t_points`, `j = 1..=t_points`.
    pub t_points: usize,
    pub draws: usize,
    pub alphas: Vec<f64>,
    /// Truncation lag for estimated kernels; default from the data model.
    pub lag: Option<usize>,
    /// Paths simulated for an estimated kernel.
    pub estimation_paths: usize,
}

impl Default for KieferSection {
    fn default() -> Self {
        Self {
            kernel: KernelChoice::Auto,
            sampler: Sampler::Auto,
            t_points: 50,
            draws: 5000,
            alphas: vec![0.1, 0.05, 0.01],
            lag: None,
            estimation_paths: 20,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TestSection {
    /// Mean shift added to observations after `floor(n * shift_at)`.
    pub shift: f64,
    pub shift_at: f64,
}

impl Default for TestSection {
    fn default() -> Self {
        Self { shift: 0.0, shift_at: 0.5 }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisSection {
    pub spectral: bool,
    pub mixing: bool,
    pub bracketing: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpectralSection {
    /// Function on states; defaults to the indicator of the last state.
    pub f: Option<Vec<f64>>,
    pub t: f64,
    pub kmax: usize,
    pub s: f64,
}

impl Default for SpectralSection {
    fn default() -> Self {
        Self { f: None, t: 0.1, kmax: 50, s: 2.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MixingSection {
    pub train: usize,
    pub holdout: usize,
    pub moment_p: usize,
    pub n_grid: Vec<usize>,
    pub moment_reps: usize,
}

impl Default for MixingSection {
    fn default() -> Self {
        Self { train: 100, holdout: 100, moment_p: 2, n_grid: (8..=14).map(|e| 1 << e).collect(), moment_reps: 500 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EntropySection {
    pub class: BracketClass,
    pub measure: Measure,
    pub levels: usize,
    pub s: f64,
    pub r: f64,
    pub psi: Psi,
}

impl Default for EntropySection {
    fn default() -> Self {
        Self {
            class: BracketClass::Intervals,
            measure: Measure::uniform_unit(1),
            levels: 10,
            s: 1.0,
            r: 1.0,
            psi: Psi::Exponential { c: 2.0, gamma: 2.0 },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Master seed; every random stream is derived from it.
    pub seed: Option<u64>,
    pub n: usize,
    #[serde(default = "default_reps")]
    pub reps: usize,
    pub model: ModelSpec,
    #[serde(default)]
    pub class: ClassSpec,
    #[serde(default)]
    pub kiefer: KieferSection,
    #[serde(default)]
    pub test: TestSection,
    #[serde(default)]
    pub analysis: AnalysisSection,
    #[serde(default)]
    pub spectral: SpectralSection,
    #[serde(default)]
    pub mixing: MixingSection,
    #[serde(default)]
    pub entropy: EntropySection,
    pub out: Option<PathBuf>,
    pub workers: Option<usize>,
}

fn default_reps() -> usize {
    200
}

fn invalid(field: &str, reason: impl Into<String>) -> Error {
    Error::Validation { field: field.to_string(), reason: reason.into() }
}

fn positive(v: usize, field: &str) -> Result<()> {
    if v == 0 {
        Err(invalid(field, "must be at least 1"))
    } else {
        Ok(())
    }
}

/// Flag values that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub workers: Option<usize>,
    pub out: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn load(path: &Path, overrides: &Overrides) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut cfg = Self::from_toml_str(&text)?;
        cfg.apply(overrides);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn apply(&mut self, o: &Overrides) {
        if o.seed.is_some() {
            self.seed = o.seed;
        }
        if o.workers.is_some() {
            self.workers = o.workers;
        }
        if o.out.is_some() {
            self.out = o.out.clone();
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed.expect("validated configs carry a seed")
    }

    pub fn validate(&self) -> Result<()> {
        if self.seed.is_none() {
            return Err(invalid("seed", "required; set it in the config or pass --seed"));
        }
        if self.n < 2 {
            return Err(invalid("n", "must be at least 2"));
        }
        positive(self.reps, "reps")?;
        if let Some(w) = self.workers {
            positive(w, "workers")?;
        }
        self.model.validate().map_err(|e| match e {
            Error::Validation { field, reason } => invalid(&format!("model.{field}"), reason),
            other => other,
        })?;
        self.class.validate()?;
        let k = &self.kiefer;
        positive(k.t_points, "kiefer.t_points")?;
        positive(k.draws, "kiefer.draws")?;
        positive(k.estimation_paths, "kiefer.estimation_paths")?;
        if k.alphas.is_empty() || k.alphas.iter().any(|a| !(*a > 0.0 && *a < 1.0)) {
            return Err(invalid("kiefer.alphas", "need at least one level in (0,1)"));
        }
        if !(0.0..=1.0).contains(&self.test.shift_at) {
            return Err(invalid("test.shift_at", "must lie in [0,1]"));
        }
        if !self.test.shift.is_finite() {
            return Err(invalid("test.shift", "must be finite"));
        }
        let m = &self.mixing;
        positive(m.train, "mixing.train")?;
        positive(m.holdout, "mixing.holdout")?;
        if !(1..=2).contains(&m.moment_p) {
            return Err(invalid("mixing.moment_p", "must be 1 or 2"));
        }
        if m.moment_reps < 100 {
            return Err(invalid("mixing.moment_reps", "at least 100 replications required"));
        }
        if m.n_grid.len() < 2 || m.n_grid[0] == 0 || m.n_grid.windows(2).any(|w| w[1] <= w[0]) {
            return Err(invalid("mixing.n_grid", "needs at least two increasing positive sizes"));
        }
        if self.entropy.levels < 8 {
            return Err(invalid("entropy.levels", "at least 8 dyadic levels required"));
        }
        if !(self.entropy.s >= 1.0) {
            return Err(invalid("entropy.s", "must be at least 1"));
        }
        if !(self.spectral.s >= 1.0) {
            return Err(invalid("spectral.s", "must be at least 1"));
        }
        Ok(())
    }

    pub fn out_dir(&self) -> PathBuf {
        self.out.clone().unwrap_or_else(|| PathBuf::from("results"))
    }

    /// SHA-256 of the canonical JSON form of the effective configuration,
    /// ignoring the output directory and worker count (they do not affect
    /// results).
    pub fn hash(&self) -> String {
        let mut canonical = self.clone();
        canonical.out = None;
        canonical.workers = None;
        let bytes = serde_json::to_vec(&canonical).expect("configs serialize");
        hex(&Sha256::digest(bytes))
    }
}

pub fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}
