//! Seeded sampling for every distribution used by the sampler and simulator.
//!
//! Randomness is organised as a tree of substreams. A stream is identified by
//! the master seed and the path of `(domain, index)` pairs leading to it; the
//! path is folded into a 64-bit key with a keyed mixing function, and the key
//! seeds a ChaCha8 generator. Two consumers that derive the same path always
//! see the same numbers, regardless of which thread gets there first.
//!
//! Inverse-gamma variates use the shape–rate convention: density
//! ∝ x^{−(a+1)} e^{−b/x}, mean b/(a−1).

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, Poisson, StandardNormal};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DistError {
    #[error("{dist}: invalid parameter `{field}` = {value}")]
    InvalidParameter {
        dist: &'static str,
        field: &'static str,
        value: f64,
    },
    #[error("every categorical log-weight is -inf or NaN")]
    AllWeightsNegInfinity,
    #[error("matrix is not symmetric positive definite")]
    NotPositiveDefinite,
    #[error("inverse Wishart needs dof > d - 1 (dof {dof}, d {dim})")]
    InvalidDof { dof: f64, dim: usize },
}

/// Top-level partition of the random-number tree.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u64)]
pub enum Domain {
    Init = 1,
    Iteration = 2,
    Step = 3,
    Gene = 4,
    Sample = 5,
    Chain = 6,
    Replicate = 7,
    ClusterSizes = 8,
    Module = 9,
    Subtype = 10,
    Confounder = 11,
    Noise = 12,
    Outcome = 13,
    Attempt = 14,
    Partition = 15,
    SweepPoint = 16,
}

/// The generator behind every stream.
pub type StreamRng = ChaCha8Rng;

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Identifies one reproducible substream.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RngStream {
    master_seed: u64,
    key: u64,
    depth: u32,
}

impl RngStream {
    pub fn new(master_seed: u64) -> Self {
        Self {
            master_seed,
            key: splitmix64(master_seed ^ 0x5EED_0F_C1A5_7E25),
            depth: 0,
        }
    }

    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }

    /// Number of `(domain, index)` steps below the root.
    pub fn depth(&self) -> u32 {
        self.depth
    }

    /// Derives the substream at `self / (domain, index)`.
    #[inline]
    pub fn child(&self, domain: Domain, index: u64) -> Self {
        let a = splitmix64(self.key ^ (domain as u64).wrapping_mul(0xD6E8_FEB8_6659_FD93));
        let key = splitmix64(a ^ splitmix64(index.wrapping_add(0xA076_1D64_78BD_642F)));
        Self {
            master_seed: self.master_seed,
            key,
            depth: self.depth + 1,
        }
    }

    /// A 64-bit seed for a nested computation that takes its own master
    /// seed (a chain per K, a replicate dataset).
    pub fn derived_seed(&self) -> u64 {
        splitmix64(self.key ^ 0x0DE7_1BED_5EED_0001)
    }

    /// A fresh generator positioned at the start of this stream.
    pub fn rng(&self) -> StreamRng {
        let mut seed = [0u8; 32];
        let mut s = self.key;
        for chunk in seed.chunks_exact_mut(8) {
            s = splitmix64(s);
            chunk.copy_from_slice(&s.to_le_bytes());
        }
        ChaCha8Rng::from_seed(seed)
    }
}

/// The scalar families needed by the model and the simulator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ScalarDist {
    Normal { mean: f64, var: f64 },
    Beta { a: f64, b: f64 },
    InverseGamma { shape: f64, rate: f64 },
    Bernoulli { q: f64 },
    Poisson { lambda: f64 },
    Uniform { lo: f64, hi: f64 },
}

pub fn sample_scalar<R: Rng + ?Sized>(dist: ScalarDist, rng: &mut R) -> Result<f64, DistError> {
    match dist {
        ScalarDist::Normal { mean, var } => normal(rng, mean, var),
        ScalarDist::Beta { a, b } => beta(rng, a, b),
        ScalarDist::InverseGamma { shape, rate } => inverse_gamma(rng, shape, rate),
        ScalarDist::Bernoulli { q } => bernoulli(rng, q).map(|b| if b { 1.0 } else { 0.0 }),
        ScalarDist::Poisson { lambda } => poisson(rng, lambda).map(|v| v as f64),
        ScalarDist::Uniform { lo, hi } => uniform(rng, lo, hi),
    }
}

fn check(dist: &'static str, field: &'static str, value: f64, ok: bool) -> Result<(), DistError> {
    if ok {
        Ok(())
    } else {
        Err(DistError::InvalidParameter { dist, field, value })
    }
}

#[inline]
pub fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}

pub fn normal<R: Rng + ?Sized>(rng: &mut R, mean: f64, var: f64) -> Result<f64, DistError> {
    check("normal", "mean", mean, mean.is_finite())?;
    check("normal", "var", var, var.is_finite() && var > 0.0)?;
    Ok(mean + var.sqrt() * standard_normal(rng))
}

/// Log of a Gamma(shape, 1) variate. Small shapes are handled through
/// Gamma(a) = Gamma(a + 1) · U^{1/a} so the result never underflows to
/// log(0).
pub fn log_gamma_variate<R: Rng + ?Sized>(rng: &mut R, shape: f64) -> Result<f64, DistError> {
    check("gamma", "shape", shape, shape.is_finite() && shape > 0.0)?;
    if shape >= 1.0 {
        let g = Gamma::new(shape, 1.0).expect("validated shape");
        let x: f64 = g.sample(rng);
        if x > 0.0 {
            return Ok(x.ln());
        }
    }
    let g = Gamma::new(shape + 1.0, 1.0).expect("validated shape");
    let x: f64 = g.sample(rng);
    let u: f64 = rng.random::<f64>();
    // random::<f64>() is in [0, 1); map to (0, 1].
    let u = 1.0 - u;
    Ok(x.ln() + u.ln() / shape)
}

pub fn gamma<R: Rng + ?Sized>(rng: &mut R, shape: f64, rate: f64) -> Result<f64, DistError> {
    check("gamma", "rate", rate, rate.is_finite() && rate > 0.0)?;
    Ok((log_gamma_variate(rng, shape)? - rate.ln()).exp())
}

/// Inverse-gamma draw with shape `shape` and rate `rate`. The result is
/// clamped to the positive normal range so that extremely diffuse priors
/// cannot produce 0 or ∞.
pub fn inverse_gamma<R: Rng + ?Sized>(rng: &mut R, shape: f64, rate: f64) -> Result<f64, DistError> {
    check("inverse_gamma", "shape", shape, shape.is_finite() && shape > 0.0)?;
    check("inverse_gamma", "rate", rate, rate.is_finite() && rate > 0.0)?;
    let log_x = rate.ln() - log_gamma_variate(rng, shape)?;
    Ok(log_x.exp().clamp(f64::MIN_POSITIVE, f64::MAX))
}

pub fn beta<R: Rng + ?Sized>(rng: &mut R, a: f64, b: f64) -> Result<f64, DistError> {
    check("beta", "a", a, a.is_finite() && a > 0.0)?;
    check("beta", "b", b, b.is_finite() && b > 0.0)?;
    let la = log_gamma_variate(rng, a)?;
    let lb = log_gamma_variate(rng, b)?;
    // x = Ga / (Ga + Gb) = 1 / (1 + exp(lb − la))
    Ok(1.0 / (1.0 + (lb - la).exp()))
}

pub fn bernoulli<R: Rng + ?Sized>(rng: &mut R, q: f64) -> Result<bool, DistError> {
    check("bernoulli", "q", q, (0.0..=1.0).contains(&q))?;
    Ok(rng.random::<f64>() < q)
}

pub fn poisson<R: Rng + ?Sized>(rng: &mut R, lambda: f64) -> Result<u64, DistError> {
    check("poisson", "lambda", lambda, lambda.is_finite() && lambda > 0.0)?;
    let d = Poisson::new(lambda).expect("validated lambda");
    let x: f64 = d.sample(rng);
    Ok(x as u64)
}

pub fn uniform<R: Rng + ?Sized>(rng: &mut R, lo: f64, hi: f64) -> Result<f64, DistError> {
    check("uniform", "lo", lo, lo.is_finite())?;
    check("uniform", "hi", hi, hi.is_finite() && hi > lo)?;
    Ok(lo + (hi - lo) * rng.random::<f64>())
}

/// Uniform over the symmetric union (−hi, −lo) ∪ (lo, hi), used for module
/// fold changes.
pub fn uniform_two_sided<R: Rng + ?Sized>(rng: &mut R, lo: f64, hi: f64) -> Result<f64, DistError> {
    check("uniform_two_sided", "lo", lo, lo.is_finite() && lo >= 0.0)?;
    check("uniform_two_sided", "hi", hi, hi.is_finite() && hi > lo)?;
    let magnitude = uniform(rng, lo, hi)?;
    Ok(if rng.random::<bool>() { magnitude } else { -magnitude })
}

/// Dirichlet draw, computed from log-gamma variates and normalised with a
/// max shift so that tiny concentrations cannot produce 0/0.
pub fn dirichlet<R: Rng + ?Sized>(rng: &mut R, alpha: &[f64]) -> Result<Vec<f64>, DistError> {
    if alpha.is_empty() {
        return Err(DistError::InvalidParameter {
            dist: "dirichlet",
            field: "alpha",
            value: 0.0,
        });
    }
    let mut logs = Vec::with_capacity(alpha.len());
    for &a in alpha {
        check("dirichlet", "alpha", a, a.is_finite() && a > 0.0)?;
        logs.push(log_gamma_variate(rng, a)?);
    }
    let max = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = logs.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = out.iter().sum();
    for v in &mut out {
        *v /= total;
    }
    Ok(out)
}

/// `log Σ exp(x)` with the usual max shift. Returns −∞ for an empty or
/// all-(−∞) input.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY || max.is_nan() {
        return max;
    }
    max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// Draws a 0-based index with probability ∝ exp(log_weights). Non-finite
/// entries other than −∞ are treated as −∞.
pub fn categorical_log<R: Rng + ?Sized>(rng: &mut R, log_weights: &[f64]) -> Result<usize, DistError> {
    let max = log_weights
        .iter()
        .copied()
        .filter(|w| w.is_finite())
        .fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return Err(DistError::AllWeightsNegInfinity);
    }
    let weight = |w: f64| if w.is_finite() { (w - max).exp() } else { 0.0 };
    let total: f64 = log_weights.iter().map(|&w| weight(w)).sum();
    let target = rng.random::<f64>() * total;
    let mut acc = 0.0;
    let mut last = 0;
    for (k, &w) in log_weights.iter().enumerate() {
        let wk = weight(w);
        if wk > 0.0 {
            acc += wk;
            last = k;
            if target < acc {
                return Ok(k);
            }
        }
    }
    Ok(last)
}

/// Multivariate normal with a pre-factored covariance.
#[derive(Debug, Clone)]
pub struct MvNormal {
    mean: DVector<f64>,
    chol_lower: DMatrix<f64>,
}

impl MvNormal {
    pub fn new(mean: &[f64], cov: &DMatrix<f64>) -> Result<Self, DistError> {
        let d = mean.len();
        if cov.nrows() != d || cov.ncols() != d || !is_symmetric(cov, 1e-10) {
            return Err(DistError::NotPositiveDefinite);
        }
        let chol = cov
            .clone()
            .cholesky()
            .ok_or(DistError::NotPositiveDefinite)?;
        Ok(Self {
            mean: DVector::from_column_slice(mean),
            chol_lower: chol.l(),
        })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let d = self.dim();
        let z = DVector::from_fn(d, |_, _| standard_normal(rng));
        (&self.mean + &self.chol_lower * z).as_slice().to_vec()
    }
}

pub fn mvn<R: Rng + ?Sized>(rng: &mut R, mean: &[f64], cov: &DMatrix<f64>) -> Result<Vec<f64>, DistError> {
    Ok(MvNormal::new(mean, cov)?.sample(rng))
}

fn is_symmetric(m: &DMatrix<f64>, tol: f64) -> bool {
    let d = m.nrows();
    (0..d).all(|i| (0..i).all(|j| (m[(i, j)] - m[(j, i)]).abs() <= tol))
}

/// Inverse-Wishart draw W⁻¹(scale, dof), mean scale/(dof − d − 1).
///
/// Draws W ~ Wishart(scale⁻¹, dof) by the Bartlett decomposition
/// W = L A Aᵀ Lᵀ (L the Cholesky factor of scale⁻¹, A lower triangular with
/// χ² diagonal and standard normal sub-diagonal) and returns W⁻¹.
pub fn inverse_wishart<R: Rng + ?Sized>(
    rng: &mut R,
    scale: &DMatrix<f64>,
    dof: f64,
) -> Result<DMatrix<f64>, DistError> {
    let d = scale.nrows();
    if scale.ncols() != d || d == 0 || !is_symmetric(scale, 1e-10) {
        return Err(DistError::NotPositiveDefinite);
    }
    if !(dof.is_finite() && dof > d as f64 - 1.0) {
        return Err(DistError::InvalidDof { dof, dim: d });
    }
    let scale_inv = scale
        .clone()
        .cholesky()
        .ok_or(DistError::NotPositiveDefinite)?
        .inverse();
    let l = scale_inv
        .cholesky()
        .ok_or(DistError::NotPositiveDefinite)?
        .l();
    let mut a = DMatrix::<f64>::zeros(d, d);
    for i in 0..d {
        // χ²(dof − i) with 0-based i
        let chi2 = 2.0 * gamma(rng, (dof - i as f64) / 2.0, 1.0)?;
        a[(i, i)] = chi2.sqrt();
        for j in 0..i {
            a[(i, j)] = standard_normal(rng);
        }
    }
    let la = &l * &a;
    let w = &la * la.transpose();
    let mut iw = w
        .cholesky()
        .ok_or(DistError::NotPositiveDefinite)?
        .inverse();
    symmetrize(&mut iw);
    Ok(iw)
}

fn symmetrize(m: &mut DMatrix<f64>) {
    let d = m.nrows();
    for i in 0..d {
        for j in 0..i {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

/// Log density of N(mean, var) at `x`.
#[inline]
pub fn log_normal_pdf(x: f64, mean: f64, var: f64) -> f64 {
    const LN_2PI: f64 = 1.837_877_066_409_345_5;
    let d = x - mean;
    -0.5 * (LN_2PI + var.ln() + d * d / var)
}

/// Log density of the shape–rate inverse gamma at `x`.
pub fn log_inverse_gamma_pdf(x: f64, shape: f64, rate: f64) -> f64 {
    shape * rate.ln() - ln_gamma(shape) - (shape + 1.0) * x.ln() - rate / x
}

/// Log density of Beta(a, b) at `x`.
pub fn log_beta_pdf(x: f64, a: f64, b: f64) -> f64 {
    (a - 1.0) * x.ln() + (b - 1.0) * (1.0 - x).ln() - (ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b))
}

/// Log density of a symmetric-or-not Dirichlet at `x`.
pub fn log_dirichlet_pdf(x: &[f64], alpha: &[f64]) -> f64 {
    let a0: f64 = alpha.iter().sum();
    let norm = ln_gamma(a0) - alpha.iter().map(|&a| ln_gamma(a)).sum::<f64>();
    norm + x
        .iter()
        .zip(alpha)
        .map(|(&xi, &ai)| (ai - 1.0) * xi.ln())
        .sum::<f64>()
}

/// ln Γ(x) for x > 0 (Lanczos, g = 7, n = 9; relative error ~1e-15).
pub fn ln_gamma(x: f64) -> f64 {
    const G: f64 = 7.0;
    const COEF: [f64; 9] = [
        0.999_999_999_999_809_9,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        // reflection
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut acc = COEF[0];
    let t = x + G + 0.5;
    for (i, &c) in COEF.iter().enumerate().skip(1) {
        acc += c / (x + i as f64);
    }
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + acc.ln()
}
