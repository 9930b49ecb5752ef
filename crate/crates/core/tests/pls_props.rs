mod common;

use healthscope_core::ingest::CovariateTable;
use healthscope_core::linalg::rank;
use healthscope_core::pls::{
    component_limit, permutation_inference, run_rq2_rq3, simpls_fit, ComponentChoice, ModelConfig, PermutationOptions,
    PERM_TIE_RTOL,
};
use healthscope_core::stats::{zscore, DataMatrix};
use healthscope_core::Error;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::Rng;

fn gram_off_diagonal_ratio(t: &DMatrix<f64>) -> f64 {
    let g = t.transpose() * t;
    let mut worst: f64 = 0.0;
    for i in 0..g.nrows() {
        for j in 0..g.ncols() {
            if i != j {
                worst = worst.max(g[(i, j)].abs() / (g[(i, i)] * g[(j, j)]).sqrt());
            }
        }
    }
    worst
}

fn r2(y: &DVector<f64>, fitted: &DVector<f64>) -> f64 {
    let mean = y.mean();
    let sst: f64 = y.iter().map(|v| (v - mean).powi(2)).sum();
    1.0 - (y - fitted).norm_squared() / sst
}

fn random_problem(seed: u64, n: usize, p: usize) -> (DMatrix<f64>, DVector<f64>) {
    let mut rng = common::rng(seed);
    let mut x = common::normal_matrix(&mut rng, n, p);
    // correlated columns make the problem less trivial
    for j in 1..p {
        let prev = x.column(j - 1).into_owned();
        x.column_mut(j).axpy(0.6, &prev, 1.0);
    }
    let beta = common::normal_vector(&mut rng, p);
    let y = &x * beta + common::normal_vector(&mut rng, n) * rng.random_range(0.1..2.0);
    (x, y)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn scores_are_orthogonal(seed in any::<u64>(), n in 12usize..80, p in 2usize..10) {
        let (x, y) = random_problem(seed, n, p);
        let m = simpls_fit(&x, &y, p.min(n - 1)).unwrap();
        prop_assert!(m.n_components <= rank(&x));
        prop_assert!(gram_off_diagonal_ratio(&m.x_scores) < 1e-8);
    }

    #[test]
    fn training_r2_never_decreases(seed in any::<u64>(), n in 12usize..60, p in 2usize..8) {
        let (x, y) = random_problem(seed, n, p);
        let mut last = f64::NEG_INFINITY;
        for k in 1..=component_limit(&x) {
            let m = simpls_fit(&x, &y, k).unwrap();
            let value = r2(&y, &m.predict(&x));
            prop_assert!(value >= last - 1e-10, "k {}: {} < {}", k, value, last);
            last = value;
        }
    }

    #[test]
    fn full_rank_fit_equals_ols(seed in any::<u64>(), n in 12usize..100, p in 1usize..10) {
        let (x, y) = random_problem(seed, n, p);
        let m = simpls_fit(&x, &y, p).unwrap();
        let diff = common::max_rel_diff(&m.predict(&x), &common::ols_fitted(&x, &y));
        prop_assert!(diff < 1e-8, "relative difference {}", diff);
    }

    #[test]
    fn standardized_predictions_ignore_column_scale(
        seed in any::<u64>(),
        col in 0usize..5,
        scale in prop_oneof![-100.0f64..-0.01, 0.01f64..100.0],
        k in 1usize..4,
    ) {
        let (x, y) = random_problem(seed, 40, 5);
        let fit = |x: DMatrix<f64>| {
            let z = zscore(&DataMatrix::anonymous(x).unwrap()).unwrap();
            simpls_fit(z.values(), &y, k).unwrap().predict(z.values())
        };
        let base = fit(x.clone());
        let mut scaled = x;
        scaled.column_mut(col).scale_mut(scale);
        prop_assert!(common::max_rel_diff(&base, &fit(scaled)) < 1e-9);
    }
}

#[test]
fn permutation_inference_is_schedule_independent() {
    let (x, y) = random_problem(5, 60, 6);
    let data = DataMatrix::anonymous(x).unwrap();
    let opts = PermutationOptions {
        n_perm: 400,
        seed: 17,
        corrected: false,
    };
    let run = |threads| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| permutation_inference(&data, y.as_slice(), 2, &opts).unwrap())
    };
    let one = run(1);
    for threads in [3, 8] {
        let other = run(threads);
        for name in data.columns() {
            assert_eq!(one.p_values[name].to_bits(), other.p_values[name].to_bits());
            assert_eq!(one.std_errs[name].to_bits(), other.std_errs[name].to_bits());
            assert_eq!(one.coeffs[name].to_bits(), other.coeffs[name].to_bits());
        }
    }
    for p in one.p_values.values() {
        assert!((0.0..=1.0).contains(p));
    }
    assert_eq!(one.p_values.keys().collect::<Vec<_>>(), data.columns().iter().collect::<Vec<_>>());
}

/// Calls `visit` with every permutation of `0..n` (Heap's algorithm).
fn for_each_permutation(n: usize, mut visit: impl FnMut(&[usize])) {
    let mut perm: Vec<usize> = (0..n).collect();
    let mut c = vec![0; n];
    visit(&perm);
    let mut i = 0;
    while i < n {
        if c[i] < i {
            if i % 2 == 0 {
                perm.swap(0, i);
            } else {
                perm.swap(c[i], i);
            }
            visit(&perm);
            c[i] += 1;
            i = 0;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
}

#[test]
fn sampled_p_values_match_exhaustive_enumeration() {
    for (seed, n, p) in [(1u64, 6usize, 2usize), (2, 5, 2), (3, 6, 3), (4, 4, 1)] {
        let mut rng = common::rng(seed);
        let x = common::normal_matrix(&mut rng, n, p);
        let y = x.column(0) * 0.8 + common::normal_vector(&mut rng, n);
        let k = 1;
        let observed = simpls_fit(&x, &y, k).unwrap().coefficients;
        let mut exceed = vec![0usize; p];
        let mut total = 0usize;
        for_each_permutation(n, |perm| {
            let yp = DVector::from_iterator(n, perm.iter().map(|&i| y[i]));
            let c = simpls_fit(&x, &yp, k).unwrap().coefficients;
            for j in 0..p {
                if c[j].abs() >= observed[j].abs() * (1.0 - PERM_TIE_RTOL) {
                    exceed[j] += 1;
                }
            }
            total += 1;
        });
        let factorial: usize = (1..=n).product();
        assert_eq!(total, factorial);
        let fit = permutation_inference(
            &DataMatrix::anonymous(x).unwrap(),
            y.as_slice(),
            k,
            &PermutationOptions {
                n_perm: 720 * 50,
                seed,
                corrected: false,
            },
        )
        .unwrap();
        for (j, &count) in exceed.iter().enumerate() {
            let exact = count as f64 / total as f64;
            let sampled = fit.p_values[&format!("x{j}")];
            assert!((sampled - exact).abs() <= 0.02, "n {n} column {j}: {sampled} vs {exact}");
        }
    }
}

fn covariate_table(x: &DMatrix<f64>) -> CovariateTable {
    CovariateTable {
        names: (0..x.ncols()).map(|j| format!("c{j}")).collect(),
        rows: (0..x.nrows())
            .map(|i| (format!("{:05}", i + 1), x.row(i).iter().map(|&v| Some(v)).collect()))
            .collect(),
    }
}

#[test]
fn planted_driver_is_singled_out() {
    let mut rng = common::rng(99);
    let (n, p) = (120, 6);
    let x = common::normal_matrix(&mut rng, n, p);
    let y = x.column(2) * 0.8 + common::normal_vector(&mut rng, n);
    let scores = (0..n).map(|i| (format!("{:05}", i + 1), y[i])).collect();
    let config = ModelConfig {
        components: ComponentChoice::Fixed(1),
        permutation: PermutationOptions {
            n_perm: 1000,
            seed: 4,
            corrected: false,
        },
        min_counties: 30,
    };
    let report = run_rq2_rq3(&scores, &covariate_table(&x), &config).unwrap();
    let p_values = &report.fit.p_values;
    assert!(p_values["c2"] < 0.01, "{p_values:?}");
    let others = p_values.iter().filter(|(k, _)| *k != "c2");
    assert!(others.clone().all(|(_, &v)| v > 0.01), "{p_values:?}");
}

#[test]
fn constant_dependent_is_degenerate() {
    let mut rng = common::rng(1);
    let x = common::normal_matrix(&mut rng, 40, 3);
    let scores = (0..40).map(|i| (format!("{:05}", i + 1), 0.25)).collect();
    let err = run_rq2_rq3(&scores, &covariate_table(&x), &ModelConfig::default()).unwrap_err();
    assert!(matches!(err, Error::Degenerate(_)), "{err}");
}

#[test]
fn too_few_counties_is_a_contract_error() {
    let mut rng = common::rng(2);
    let x = common::normal_matrix(&mut rng, 20, 3);
    let scores = (0..20).map(|i| (format!("{:05}", i + 1), rng.random::<f64>())).collect();
    let err = run_rq2_rq3(&scores, &covariate_table(&x), &ModelConfig::default()).unwrap_err();
    assert!(matches!(err, Error::Contract(_)), "{err}");
}
