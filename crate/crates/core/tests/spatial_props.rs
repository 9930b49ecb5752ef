mod common;

use std::collections::BTreeMap;

use healthscope_core::ingest::{County, CountySet, Polygon};
use healthscope_core::spatial::{
    build_weights, build_weights_with_fallback, morans_i, MoranOptions, SpatialWeights, WeightScheme,
};
use proptest::prelude::*;
use rand::Rng;
use rand_distr::StandardNormal;

fn cell(fips: String, x0: f64, y0: f64, side: f64) -> County {
    County::new(
        fips,
        "c",
        "ZZ",
        vec![Polygon {
            outer: vec![[x0, y0], [x0 + side, y0], [x0 + side, y0 + side], [x0, y0 + side], [x0, y0]],
            holes: vec![],
        }],
    )
    .unwrap()
}

/// `rows × cols` grid of 0.5° cells, skipping cells where `present` is false.
fn grid(rows: usize, cols: usize, present: impl Fn(usize, usize) -> bool) -> CountySet {
    let mut counties = Vec::new();
    for r in 0..rows {
        for c in 0..cols {
            if present(r, c) {
                let fips = format!("{:05}", r * cols + c + 1);
                counties.push(cell(fips, -90.0 + 0.5 * c as f64, 33.0 + 0.5 * r as f64, 0.5));
            }
        }
    }
    CountySet::new(counties).unwrap()
}

fn random_values(ids: &[String], seed: u64) -> BTreeMap<String, f64> {
    let mut rng = common::rng(seed);
    ids.iter().map(|id| (id.clone(), rng.sample(StandardNormal))).collect()
}

fn check_rows(w: &SpatialWeights) -> Result<(), TestCaseError> {
    for (i, (nb, wt)) in w.neighbors.iter().zip(&w.weights).enumerate() {
        prop_assert!(!nb.contains(&i), "self neighbor at {}", i);
        prop_assert_eq!(nb.len(), wt.len());
        if !nb.is_empty() {
            prop_assert!((wt.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }
    Ok(())
}

fn opts(seed: u64, n_perm: usize) -> MoranOptions {
    MoranOptions {
        n_perm,
        seed,
        ..MoranOptions::default()
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn weights_are_row_standardized_and_queen_is_symmetric(
        mask in prop::collection::vec(prop::bool::weighted(0.8), 36),
        k in 1usize..6,
    ) {
        let set = grid(6, 6, |r, c| mask[r * 6 + c]);
        prop_assume!(set.len() >= 7);
        for scheme in [WeightScheme::QueenContiguity, WeightScheme::RookContiguity] {
            let w = build_weights(&set, scheme).unwrap();
            check_rows(&w)?;
            for (i, nb) in w.neighbors.iter().enumerate() {
                for &j in nb {
                    prop_assert!(w.neighbors[j].contains(&i), "asymmetric {} {}", i, j);
                }
            }
        }
        let knn = build_weights(&set, WeightScheme::KNearestCentroid(k)).unwrap();
        check_rows(&knn)?;
        prop_assert!(knn.neighbors.iter().all(|nb| nb.len() == k.min(set.len() - 1)));
        let filled = build_weights_with_fallback(&set, WeightScheme::QueenContiguity, Some(k)).unwrap();
        check_rows(&filled)?;
        prop_assert!(filled.isolates().is_empty());
    }

    #[test]
    fn moran_is_affine_invariant(
        seed in any::<u64>(),
        a in prop_oneof![-20.0f64..-0.05, 0.05f64..20.0],
        b in -100.0f64..100.0,
    ) {
        let set = grid(7, 7, |_, _| true);
        let w = build_weights(&set, WeightScheme::QueenContiguity).unwrap();
        let values = random_values(&w.ids, seed);
        let moved: BTreeMap<String, f64> = values.iter().map(|(k, v)| (k.clone(), a * v + b)).collect();
        let base = morans_i(&values, &w, &opts(seed, 99)).unwrap();
        let other = morans_i(&moved, &w, &opts(seed, 99)).unwrap();
        prop_assert!((base.i - other.i).abs() <= 1e-12 * base.i.abs().max(1e-3), "{} vs {}", base.i, other.i);
        prop_assert_eq!(base.p_value, other.p_value);
        prop_assert!(base.p_value > 0.0 && base.p_value <= 1.0);
        prop_assert_eq!(base.n_used, 49 - base.n_islands_dropped);
    }

    #[test]
    fn moran_stays_within_unit_interval(seed in any::<u64>(), rook in any::<bool>()) {
        let set = grid(5, 8, |_, _| true);
        let scheme = if rook { WeightScheme::RookContiguity } else { WeightScheme::QueenContiguity };
        let w = build_weights(&set, scheme).unwrap();
        let r = morans_i(&random_values(&w.ids, seed), &w, &opts(seed, 99)).unwrap();
        prop_assert!(r.i.abs() <= 1.0 + 1e-12);
    }
}

#[test]
fn moran_is_reproducible_across_thread_counts() {
    let set = grid(10, 10, |_, _| true);
    let w = build_weights(&set, WeightScheme::QueenContiguity).unwrap();
    let values = random_values(&w.ids, 3);
    let run = |threads| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| morans_i(&values, &w, &opts(42, 999)).unwrap())
    };
    let one = run(1);
    for threads in [2, 7] {
        let other = run(threads);
        assert_eq!(one.i.to_bits(), other.i.to_bits());
        assert_eq!(one.p_value.to_bits(), other.p_value.to_bits());
        assert_eq!(one.perm_sd.to_bits(), other.perm_sd.to_bits());
    }
}

/// Kolmogorov-Smirnov distance from Uniform(0, 1).
fn ks_distance(samples: &[f64]) -> f64 {
    let mut s = samples.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len() as f64;
    s.iter()
        .enumerate()
        .map(|(i, &u)| ((i as f64 + 1.0) / n - u).max(u - i as f64 / n))
        .fold(0.0, f64::max)
}

#[test]
fn null_p_values_are_uniform() {
    let set = grid(8, 8, |_, _| true);
    let w = build_weights(&set, WeightScheme::QueenContiguity).unwrap();
    let trials = 200;
    let p: Vec<f64> = (0..trials)
        .map(|t| morans_i(&random_values(&w.ids, 1000 + t), &w, &opts(t, 499)).unwrap().p_value)
        .collect();
    // asymptotic one-sample critical value at alpha = 0.01
    let critical = 1.628 / (trials as f64).sqrt();
    let d = ks_distance(&p);
    assert!(d < critical, "KS distance {d} exceeds {critical}");
}

#[test]
fn analytical_variance_matches_permutation_spread() {
    let set = grid(12, 12, |_, _| true);
    let w = build_weights(&set, WeightScheme::RookContiguity).unwrap();
    let r = morans_i(
        &random_values(&w.ids, 9),
        &w,
        &MoranOptions {
            analytical: true,
            ..opts(1, 4999)
        },
    )
    .unwrap();
    let analytical = r.analytical.unwrap();
    // randomization and normality variances agree to O(1/n) for Gaussian data
    let ratio = analytical.variance.sqrt() / r.perm_sd;
    assert!((0.9..1.1).contains(&ratio), "sd ratio {ratio}");
    assert!((r.perm_mean - r.expected_i).abs() < 4.0 * r.perm_sd / (4999f64).sqrt());
}
