#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn normal_matrix(rng: &mut ChaCha8Rng, n: usize, p: usize) -> DMatrix<f64> {
    DMatrix::from_fn(n, p, |_, _| rng.sample(StandardNormal))
}

pub fn normal_vector(rng: &mut ChaCha8Rng, n: usize) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.sample(StandardNormal))
}

/// Least-squares fitted values with an intercept, via the normal equations
/// solved by Cholesky.
pub fn ols_fitted(x: &DMatrix<f64>, y: &DVector<f64>) -> DVector<f64> {
    let a = with_intercept(x);
    let beta = normal_equations(&a, y);
    &a * beta
}

pub fn with_intercept(x: &DMatrix<f64>) -> DMatrix<f64> {
    let mut a = DMatrix::from_element(x.nrows(), x.ncols() + 1, 1.0);
    a.view_mut((0, 1), (x.nrows(), x.ncols())).copy_from(x);
    a
}

pub fn normal_equations(a: &DMatrix<f64>, y: &DVector<f64>) -> DVector<f64> {
    let ata = a.transpose() * a;
    let aty = a.transpose() * y;
    ata.cholesky().expect("full-rank design").solve(&aty)
}

pub fn max_rel_diff(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    let scale = a.amax().max(b.amax()).max(1.0);
    (a - b).amax() / scale
}
