//! Subcommand pipelines. Each writes into a [`Staging`] and returns the lines
//! to print on success.

use std::path::Path;

use serde::Serialize;

use seqclt::bracketing::{bracketing_number, entropy_condition_check};
use seqclt::empirical::{cusum_statistic, CusumResult, FunctionClass};
use seqclt::exec::{derive_seed, rng_from_seed};
use seqclt::kiefer::{
    analytic_iid_kernel, build_kiefer, default_truncation, estimate_longrun_kernel, interval_points, quantile_records,
    sample_sup_bridge, spectral_chain_kernel, KieferModel, LongRunKernel, QuantileRecord,
};
use seqclt::mixing::{evaluate_bound, fit_bound, moment_bound_check, random_case, write_rows_csv};
use seqclt::processes::{FiniteChainSpec, Law, ModelSpec, PathModel, SamplePath};
use seqclt::spectral::{covariance_decay_check, ergodicity_rate, h_grid_default, sigma2_from_eigen, spectral_report};
use seqclt::{Error, Execution, Result};

use crate::config::{ExperimentConfig, KernelChoice, Sampler};
use crate::output::Staging;

const EXEC: Execution = Execution::Parallel;
const DENSE_LIMIT: usize = 3000;

fn invalid(field: &str, reason: impl Into<String>) -> Error {
    Error::Validation { field: field.to_string(), reason: reason.into() }
}

/// The observed path for `simulate` and `test`: stream `path`, replicate 0.
fn primary_path(cfg: &ExperimentConfig) -> Result<SamplePath> {
    cfg.model.simulate(cfg.n, derive_seed(cfg.seed(), "path", 0))
}

fn shifted(cfg: &ExperimentConfig, path: SamplePath) -> SamplePath {
    if cfg.test.shift == 0.0 {
        path
    } else {
        path.with_mean_shift(cfg.test.shift_at, cfg.test.shift)
    }
}

fn chain(cfg: &ExperimentConfig) -> Option<&FiniteChainSpec> {
    match &cfg.model {
        ModelSpec::Chain(spec) => Some(spec),
        _ => None,
    }
}

fn iid_law(cfg: &ExperimentConfig) -> Option<Law> {
    match &cfg.model {
        ModelSpec::Iid(spec) => Some(spec.law),
        _ => None,
    }
}

pub fn longrun_kernel(cfg: &ExperimentConfig, fc: &FunctionClass) -> Result<LongRunKernel> {
    let analytic = || -> Result<LongRunKernel> {
        let law = iid_law(cfg).ok_or_else(|| invalid("kiefer.kernel", "analytic kernel needs an i.i.d. model"))?;
        let points = interval_points(fc).map_err(|_| invalid("kiefer.kernel", "analytic kernel needs interval indicators"))?;
        analytic_iid_kernel(&law, &points)
    };
    let spectral = || -> Result<LongRunKernel> {
        let spec = chain(cfg).ok_or_else(|| invalid("kiefer.kernel", "spectral kernel needs a chain model"))?;
        spectral_chain_kernel(spec, fc)
    };
    match cfg.kiefer.kernel {
        KernelChoice::Analytic => analytic(),
        KernelChoice::Spectral => spectral(),
        KernelChoice::Estimated => estimated_kernel(cfg, fc),
        KernelChoice::Auto => {
            if chain(cfg).is_some() {
                spectral()
            } else {
                analytic().or_else(|_| estimated_kernel(cfg, fc))
            }
        }
    }
}

fn estimated_kernel(cfg: &ExperimentConfig, fc: &FunctionClass) -> Result<LongRunKernel> {
    let theta = match chain(cfg) {
        Some(spec) => Some(ergodicity_rate(spec, &[])?.theta),
        None => None,
    };
    let (default_lag, estimator) = default_truncation(cfg.n, theta);
    let lag = cfg.kiefer.lag.unwrap_or(default_lag);
    let paths = EXEC.try_map_indexed(cfg.kiefer.estimation_paths, |r| {
        cfg.model.simulate(cfg.n, derive_seed(cfg.seed(), "estimate", r as u64))
    })?;
    estimate_longrun_kernel(&paths, fc, lag, estimator)
}

pub struct CriticalValues {
    pub kernel: LongRunKernel,
    pub records: Vec<QuantileRecord>,
}

pub fn critical_values(cfg: &ExperimentConfig, fc: &FunctionClass) -> Result<CriticalValues> {
    let kernel = longrun_kernel(cfg, fc)?;
    let m = cfg.kiefer.t_points;
    let t_grid: Vec<f64> = (1..=m).map(|j| j as f64 / m as f64).collect();
    let dense = match cfg.kiefer.sampler {
        Sampler::Dense => true,
        Sampler::Separable => false,
        Sampler::Auto => kernel.size() * m <= DENSE_LIMIT,
    };
    let model = if dense { build_kiefer(&kernel, &t_grid, None)? } else { KieferModel::separable(&kernel, &t_grid)? };
    let draws = sample_sup_bridge(&model, cfg.kiefer.draws, derive_seed(cfg.seed(), "critical-values", 0), EXEC)?;
    let grid = format!("{}x{}", kernel.size(), m);
    let records = quantile_records(&draws, &cfg.kiefer.alphas, &grid)?;
    Ok(CriticalValues { kernel, records })
}

pub fn simulate(cfg: &ExperimentConfig, st: &mut Staging) -> Result<Vec<String>> {
    let path = shifted(cfg, primary_path(cfg)?);
    st.write_with("path.csv", |w| path.write_csv(w))?;
    Ok(vec![format!("simulated {} observations of {}", path.len(), path.model_id)])
}

#[derive(Serialize)]
struct Decision {
    alpha: f64,
    critical_value: f64,
    reject: bool,
}

#[derive(Serialize)]
struct TestRecord {
    #[serde(flatten)]
    statistic: CusumResult,
    decisions: Vec<Decision>,
}

pub fn test(cfg: &ExperimentConfig, input: Option<&Path>, st: &mut Staging) -> Result<Vec<String>> {
    let path = match input {
        Some(p) => SamplePath::read_csv(std::fs::File::open(p)?)?,
        None => shifted(cfg, primary_path(cfg)?),
    };
    let fc = cfg.class.build();
    let stat = cusum_statistic(&path, &fc, EXEC);
    let cv = critical_values(cfg, &fc)?;
    let mut lines = vec![format!("T_n = {:.6} (n = {}, argmax k = {}, f = {})", stat.t_n, stat.n, stat.argmax_k, stat.argmax_f)];
    let decisions: Vec<Decision> = cv
        .records
        .iter()
        .map(|r| Decision { alpha: r.alpha, critical_value: r.q, reject: stat.t_n > r.q })
        .collect();
    for d in &decisions {
        let verdict = if d.reject { "reject H0 (change point)" } else { "accept H0 (stationary)" };
        lines.push(format!("alpha = {:<5} critical value {:.6}: {verdict}", d.alpha, d.critical_value));
    }
    st.write_json("tn.json", &TestRecord { statistic: stat, decisions })?;
    st.write_json("kiefer_quantiles.json", &cv.records)?;
    st.write_with("kernel.csv", |w| cv.kernel.write_csv(w))?;
    Ok(lines)
}

pub fn critical_values_cmd(cfg: &ExperimentConfig, st: &mut Staging) -> Result<Vec<String>> {
    let cv = critical_values(cfg, &cfg.class.build())?;
    st.write_json("kiefer_quantiles.json", &cv.records)?;
    st.write_with("kernel.csv", |w| cv.kernel.write_csv(w))?;
    Ok(cv
        .records
        .iter()
        .map(|r| format!("alpha = {:<5} q = {:.6} (mc se {:.6}, grid {}, {} draws)", r.alpha, r.q, r.mc_se, r.grid, r.draws))
        .collect())
}

#[derive(Serialize)]
struct SpectralRecord {
    #[serde(flatten)]
    report: seqclt::spectral::SpectralReport,
    t: f64,
    f: Vec<f64>,
    sigma2_eigen: f64,
    taylor_residual: Vec<f64>,
    decay_constant: f64,
    decay_passed: bool,
}

pub fn spectral(cfg: &ExperimentConfig, st: &mut Staging) -> Result<Vec<String>> {
    let spec = chain(cfg).ok_or_else(|| invalid("model.kind", "spectral analysis needs a chain model"))?;
    let k = spec.states();
    let f = cfg.spectral.f.clone().unwrap_or_else(|| (0..k).map(|x| f64::from(u8::from(x + 1 == k))).collect());
    if f.len() != k {
        return Err(invalid("spectral.f", format!("expected {k} values, one per state")));
    }
    let report = spectral_report(spec, &f, cfg.spectral.t)?;
    let fc = spec.center(&f);
    let eigen = sigma2_from_eigen(spec, &fc, &h_grid_default())?;
    let decay = covariance_decay_check(spec, &fc, &fc, cfg.spectral.s, cfg.spectral.kmax)?;
    st.write_with("decay.csv", |w| decay.write_csv(w))?;
    let lines = vec![
        format!("theta = {:.6}, kappa = {:.6}", report.theta, report.kappa),
        format!(
            "lambda(t = {}) = {:.10} {:+.10}i, gap {:.6}",
            cfg.spectral.t, report.lambda.re, report.lambda.im, report.gap
        ),
        format!("sigma2: series {:.8}, eigenvalue {:.8}", report.sigma2, eigen.sigma2),
        format!("covariance decay constant {:.6} (bounded by kappa: {})", decay.c_fit, decay.passed),
    ];
    st.write_json(
        "spectral.json",
        &SpectralRecord {
            report,
            t: cfg.spectral.t,
            f,
            sigma2_eigen: eigen.sigma2,
            taylor_residual: eigen.taylor_residual,
            decay_constant: decay.c_fit,
            decay_passed: decay.passed,
        },
    )?;
    Ok(lines)
}

#[derive(Serialize)]
struct MixingRecord {
    fit: seqclt::mixing::FittedBound,
    holdout: usize,
    violations: usize,
    moment: Option<seqclt::mixing::MomentReport>,
    moment_note: Option<String>,
}

/// Centered observable for the moment check, when the model's mean is known.
fn moment_observable(cfg: &ExperimentConfig) -> Option<Box<dyn Fn(&[f64]) -> f64 + Sync>> {
    match &cfg.model {
        ModelSpec::Iid(s) => {
            let m = s.law.mean();
            Some(Box::new(move |y| y[0] - m))
        }
        ModelSpec::Ma(s) => {
            let m = s.mean();
            Some(Box::new(move |y| y[0] - m))
        }
        ModelSpec::Chain(spec) => {
            let k = spec.states();
            let raw = cfg.spectral.f.clone().unwrap_or_else(|| (0..k).map(|x| f64::from(u8::from(x + 1 == k))).collect());
            let f = spec.center(&raw);
            Some(Box::new(move |y| f[y[0] as usize]))
        }
        _ => None,
    }
}

pub fn verify_mixing(cfg: &ExperimentConfig, st: &mut Staging) -> Result<Vec<String>> {
    let m = &cfg.mixing;
    let mut rng = rng_from_seed(derive_seed(cfg.seed(), "mixing", 0));
    let cases = (0..m.train + m.holdout).map(|_| random_case(&mut rng)).collect::<Result<Vec<_>>>()?;
    let (train, hold) = cases.split_at(m.train);
    let fit = fit_bound(train)?;
    let (rows, violations) = evaluate_bound(hold, &fit)?;
    st.write_with("mixing.csv", |w| write_rows_csv(&rows, w))?;
    let mut lines = vec![format!(
        "fitted C = {}, l = {} on {} configurations; {violations} violations on {} held out",
        fit.c, fit.l, m.train, m.holdout
    )];
    let (moment, moment_note) = match moment_observable(cfg) {
        Some(f) => {
            let r = moment_bound_check(&cfg.model, f, m.moment_p, &m.n_grid, m.moment_reps, derive_seed(cfg.seed(), "moment", 0), EXEC)?;
            lines.push(format!(
                "E S_n^{}: log-log slope {:.3} +- {:.3} (passes: {})",
                2 * m.moment_p,
                r.slope,
                r.slope_se,
                r.passed
            ));
            (Some(r), None)
        }
        None => {
            let note = "moment check skipped: no closed-form mean for this model".to_string();
            lines.push(note.clone());
            (None, Some(note))
        }
    };
    st.write_json("mixing.json", &MixingRecord { fit, holdout: m.holdout, violations, moment, moment_note })?;
    Ok(lines)
}

pub fn verify_entropy(cfg: &ExperimentConfig, st: &mut Staging) -> Result<Vec<String>> {
    let e = &cfg.entropy;
    let profile = bracketing_number(&e.class, &e.measure, e.levels, e.s, e.psi, e.r, EXEC)?;
    let verdict = entropy_condition_check(&profile)?;
    st.write_with("entropy.csv", |w| profile.write_csv(w))?;
    st.write_json("entropy_verdict.json", &verdict)?;
    Ok(vec![
        format!("N_q (constructive upper bounds) = {:?}", profile.counts),
        format!(
            "tail ratio {:.4} (band {:.4} .. {:.4}): {}",
            verdict.tail_ratio,
            verdict.band[0],
            verdict.band[1],
            if verdict.summable { "summable" } else { "not summable" }
        ),
    ])
}

pub fn run(cfg: &ExperimentConfig, st: &mut Staging) -> Result<Vec<String>> {
    let fc = cfg.class.build();
    let stats = EXEC.try_map_indexed(cfg.reps, |r| {
        let path = cfg.model.simulate(cfg.n, derive_seed(cfg.seed(), "replicate", r as u64))?;
        Ok::<_, Error>(cusum_statistic(&shifted(cfg, path), &fc, Execution::Sequential))
    })?;
    let cv = critical_values(cfg, &fc)?;
    st.write_with("tn_draws.csv", |w| {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["rep", "T_n", "argmax_k"])?;
        for (r, s) in stats.iter().enumerate() {
            wr.write_record([r.to_string(), format!("{:?}", s.t_n), s.argmax_k.to_string()])?;
        }
        wr.flush()?;
        Ok(())
    })?;
    st.write_json("kiefer_quantiles.json", &cv.records)?;
    let mut lines = vec![format!("{} replications of T_n at n = {}", cfg.reps, cfg.n)];
    for rec in &cv.records {
        let rate = stats.iter().filter(|s| s.t_n > rec.q).count() as f64 / cfg.reps as f64;
        lines.push(format!("alpha = {:<5} critical value {:.6}: rejection rate {rate:.4}", rec.alpha, rec.q));
    }
    if cfg.analysis.spectral {
        lines.extend(spectral(cfg, st)?);
    }
    if cfg.analysis.mixing {
        lines.extend(verify_mixing(cfg, st)?);
    }
    if cfg.analysis.bracketing {
        lines.extend(verify_entropy(cfg, st)?);
    }
    Ok(lines)
}
