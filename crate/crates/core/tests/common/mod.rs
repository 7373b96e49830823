#![allow(dead_code)]

use gbclust::data::{ExpressionMatrix, Matrix};
use gbclust::distributions::{Domain, RngStream, StreamRng};

pub fn rng(seed: u64) -> StreamRng {
    RngStream::new(seed).rng()
}

pub fn stream(seed: u64, domain: Domain, index: u64) -> RngStream {
    RngStream::new(seed).child(domain, index)
}

/// Sample mean and its standard error.
pub fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, (v / n).sqrt())
}

/// Mean and batch-means standard error for an autocorrelated series.
pub fn batch_mean_se(xs: &[f64], batches: usize) -> (f64, f64) {
    let size = xs.len() / batches;
    let means: Vec<f64> = xs.chunks_exact(size).map(|c| c.iter().sum::<f64>() / size as f64).collect();
    let (m, se) = mean_se(&means);
    (m, se)
}

pub fn sample_variance(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0)
}

#[track_caller]
pub fn assert_within_se(what: &str, estimate: f64, se: f64, target: f64, k: f64) {
    assert!(
        (estimate - target).abs() <= k * se,
        "{what}: estimate {estimate} vs {target} (se {se}, |z| = {:.2})",
        (estimate - target).abs() / se
    );
}

/// Checks the mean and the variance of `draws` against closed-form values at
/// `k` standard errors. The variance SE uses the sample fourth moment.
#[track_caller]
pub fn assert_moments(what: &str, draws: &[f64], mean: f64, var: f64, k: f64) {
    let (m, se) = mean_se(draws);
    assert_within_se(&format!("{what} mean"), m, se, mean, k);
    let n = draws.len() as f64;
    let sq: Vec<f64> = draws.iter().map(|x| (x - m).powi(2)).collect();
    let (v, v_se) = mean_se(&sq);
    assert_within_se(&format!("{what} variance"), v * n / (n - 1.0), v_se, var, k);
}

pub fn expression(rows: &[Vec<f64>]) -> ExpressionMatrix {
    ExpressionMatrix::with_default_ids(Matrix::from_rows(rows).unwrap()).unwrap()
}
