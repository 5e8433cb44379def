use seqclt::empirical::{cusum_exact_intervals, cusum_statistic, FunctionClass};
use seqclt::exec::derive_seed;
use seqclt::kiefer::{
    analytic_iid_kernel, build_kiefer, default_truncation, estimate_longrun_kernel, interval_points,
    sample_sup_bridge, spectral_chain_kernel, Estimator, KieferModel,
};
use seqclt::processes::{FiniteChainSpec, IidSpec, Law, PathModel};
use seqclt::Execution;

const UNIFORM: Law = Law::Uniform { lo: 0.0, hi: 1.0 };

fn max_abs_diff(a: &nalgebra::DMatrix<f64>, b: &nalgebra::DMatrix<f64>) -> f64 {
    (a - b).abs().max()
}

#[test]
fn iid_kernel_estimate_is_consistent() {
    let fc = FunctionClass::intervals(vec![0.25, 0.5, 0.75]);
    let exact = analytic_iid_kernel(&UNIFORM, &interval_points(&fc).unwrap()).unwrap();
    let model = IidSpec { law: UNIFORM };
    for r in 0..20 {
        let path = model.simulate(100_000, derive_seed(5, "gamma", r)).unwrap();
        let est = estimate_longrun_kernel(&[path], &fc, 0, Estimator::TruncatedSum).unwrap();
        let err = max_abs_diff(&est.gamma, &exact.gamma);
        assert!(err <= 0.02, "replication {r}: error {err}");
    }
}

#[test]
fn chain_kernel_estimate_matches_spectral_kernel() {
    let spec = FiniteChainSpec::two_state(0.25, 0.25).unwrap();
    let fc = FunctionClass::state_functions(vec![vec![0.0, 1.0], vec![1.0, 0.0]]);
    let exact = spectral_chain_kernel(&spec, &fc).unwrap();
    let n = 100_000;
    let (lag, weights) = default_truncation(n, Some(0.5));
    let paths: Vec<_> = (0..4).map(|r| spec.simulate(n, derive_seed(9, "gamma", r)).unwrap()).collect();
    let est = estimate_longrun_kernel(&paths, &fc, lag, weights).unwrap();
    let err = max_abs_diff(&est.gamma, &exact.gamma);
    assert!(err <= 0.05 * exact.gamma.abs().max(), "error {err}");
}

#[test]
fn grid_statistic_approaches_exact_supremum_from_below() {
    let model = IidSpec { law: UNIFORM };
    let path = model.simulate(400, 17).unwrap();
    let exact = cusum_exact_intervals(&path).t_n;
    // Dyadic grids are nested, so the grid supremum is monotone in the level.
    let mut prev = 0.0;
    for q in [2, 4, 6, 8] {
        let m = 1usize << q;
        let grid = FunctionClass::intervals((1..m).map(|j| j as f64 / m as f64).collect());
        let t = cusum_statistic(&path, &grid, Execution::Sequential).t_n;
        assert!(t <= exact + 1e-12);
        assert!(t >= prev - 1e-12);
        prev = t;
    }
    let fine = cusum_statistic(&path, &FunctionClass::interval_grid(4000, 0.0, 1.0), Execution::Sequential).t_n;
    assert!(exact - fine < 0.02, "{exact} vs {fine}");
}

#[test]
fn execution_modes_agree_bitwise() {
    let fc = FunctionClass::interval_grid(10, 0.0, 1.0);
    let kernel = analytic_iid_kernel(&UNIFORM, &interval_points(&fc).unwrap()).unwrap();
    let t: Vec<f64> = (1..=10).map(|j| j as f64 / 10.0).collect();
    let dense = build_kiefer(&kernel, &t, None).unwrap();
    let sep = KieferModel::separable(&kernel, &t).unwrap();
    for model in [&dense, &sep] {
        let a = sample_sup_bridge(model, 64, 3, Execution::Sequential).unwrap();
        let b = sample_sup_bridge(model, 64, 3, Execution::Parallel).unwrap();
        assert_eq!(a, b);
    }
    let path = IidSpec { law: UNIFORM }.simulate(500, 1).unwrap();
    assert_eq!(
        cusum_statistic(&path, &fc, Execution::Sequential),
        cusum_statistic(&path, &fc, Execution::Parallel)
    );
}
