//! Gibbs sampler for the outcome-guided sparse Gaussian mixture.
//!
//! One iteration updates, in this order:
//!
//! 1. p      ~ Beta(a_p + ΣL, b_p + G − ΣL)
//! 2. τ²_μ0  ~ InvΓ(a + (K/2)·#{L=0}, b + ½ Σ_{L=0,k} μ²)
//! 3. τ²_μ1  ~ InvΓ(a + (K/2)·#{L=1}, b + ½ Σ_{L=1,k} μ²)
//! 4. τ²_U0  ~ InvΓ(a + ½·#{L=0},     b + ½ Σ_{L=0} U²)          (guided only)
//! 5. τ²_U1  ~ InvΓ(a + ½·#{L=1},     b + ½ Σ_{L=1} (U − 1)²)    (guided only)
//! 6. L_g    ~ Bern(σ(logit p + Σ_k log-density ratio of μ_gk + U term))
//! 7. π      ~ Dir(c + n_1, …, c + n_K)
//! 8. Z_i    ~ Cat(∝ π_k exp{−Σ_g (X_gi − μ_gk)² / 2σ²_g})
//! 9. μ_gk   ~ N(τ² S_gk / (τ² n_k + σ²_g), τ² σ²_g / (τ² n_k + σ²_g))
//! 10. σ²_g  ~ InvΓ(a_σ + n/2, b_σ + ½ Σ_i (X_gi − μ_{g,Z_i})²)
//!
//! Steps 6, 8, 9 and 10 are conditionally independent across genes (or
//! samples) and run in parallel; each index draws from its own substream so
//! the result does not depend on the thread count.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{mean, sample_variance, DataError, ExpressionMatrix, Hyperparameters, Matrix, ModelState};
use crate::distributions::{
    self as dist, log_beta_pdf, log_dirichlet_pdf, log_inverse_gamma_pdf, log_normal_pdf, DistError,
    Domain, RngStream,
};
use crate::trace::{IterationDiagnostics, PosteriorTrace};

#[derive(Debug, Error)]
pub enum SamplerError {
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Distribution(#[from] DistError),
    #[error("guidance vector has {found} entries, expression matrix has {expected} genes")]
    GuidanceLength { expected: usize, found: usize },
    #[error("guided sampling needs a guidance vector (and unguided sampling must not get one)")]
    GuidanceMismatch,
    #[error("thinning interval must be at least 1")]
    InvalidThin,
    #[error("expression matrix must be standardised before sampling")]
    NotStandardized,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GibbsConfig {
    pub hyper: Hyperparameters,
    pub seed: u64,
    /// `false` runs the unguided baseline: steps 4–5 are skipped and the U
    /// factor is dropped from step 6.
    pub guided: bool,
    pub thin: usize,
    /// Keep every retained draw in memory, not only the summaries.
    pub keep_draws: bool,
    #[serde(default)]
    pub init: InitScheme,
    #[serde(default)]
    pub selection: SelectionUpdate,
}

/// How step 6 draws L_g.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionUpdate {
    /// L_g is drawn with μ_g· integrated out, then μ_g· given the new L_g.
    #[default]
    Blocked,
    /// L_g is drawn given the current μ_g·.
    Conditional,
}

/// How the starting state is drawn.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitScheme {
    /// L_g ~ Bern(U_g); genes starting in the spike get μ_g· = 0, the rest
    /// their initial cluster means. Same as `Uniform` without guidance.
    #[default]
    GuidanceWeighted,
    /// L_g ~ Bern(½) and every μ_gk at its initial cluster mean.
    Uniform,
}

impl Default for GibbsConfig {
    fn default() -> Self {
        Self {
            hyper: Hyperparameters::default(),
            seed: 1,
            guided: true,
            thin: 1,
            keep_draws: false,
            init: InitScheme::default(),
            selection: SelectionUpdate::default(),
        }
    }
}

impl GibbsConfig {
    pub fn validate(&self) -> Result<(), SamplerError> {
        self.hyper.validate()?;
        if self.thin == 0 {
            return Err(SamplerError::InvalidThin);
        }
        Ok(())
    }

    /// Number of draws the trace will hold.
    pub fn n_kept(&self) -> usize {
        self.hyper.n_retained().div_ceil(self.thin)
    }
}

/// Which prior-mixture variance to update.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Tau2 {
    Mu0,
    Mu1,
    U0,
    U1,
}

/// Step indices used to derive per-step random substreams.
mod step {
    pub const P: u64 = 1;
    pub const TAU_MU0: u64 = 2;
    pub const TAU_MU1: u64 = 3;
    pub const TAU_U0: u64 = 4;
    pub const TAU_U1: u64 = 5;
    pub const SELECTION: u64 = 6;
    pub const PI: u64 = 7;
    pub const ASSIGN: u64 = 8;
    pub const MEANS: u64 = 9;
    pub const VARIANCES: u64 = 10;
}

fn prior_mean_or_one(a: f64, b: f64) -> f64 {
    if a > 1.0 {
        b / (a - 1.0)
    } else {
        1.0
    }
}

/// Initial state: uniform random labels, L_g as set by [`InitScheme`],
/// p = 0.5, uniform π, per-cluster sample means (0 for empty clusters),
/// per-gene sample variances, and each τ² at its prior mean (1 when the prior
/// mean does not exist).
pub fn initialize_state(
    expr: &ExpressionMatrix,
    u: Option<&[f64]>,
    cfg: &GibbsConfig,
) -> Result<ModelState, SamplerError> {
    cfg.validate()?;
    if let Some(u) = u {
        if u.len() != expr.n_genes() {
            return Err(SamplerError::GuidanceLength {
                expected: expr.n_genes(),
                found: u.len(),
            });
        }
    }
    let h = &cfg.hyper;
    let k = h.k;
    let (g_count, n) = (expr.n_genes(), expr.n_samples());
    let init = RngStream::new(cfg.seed).child(Domain::Init, 0);

    let mut rng = init.child(Domain::Sample, 0).rng();
    let z: Vec<usize> = (0..n).map(|_| rand::Rng::random_range(&mut rng, 0..k)).collect();
    let mut rng = init.child(Domain::Gene, 0).rng();
    let selected: Vec<bool> = match (cfg.init, u) {
        (InitScheme::GuidanceWeighted, Some(u)) => u
            .iter()
            .map(|&ug| rand::Rng::random::<f64>(&mut rng) < ug)
            .collect(),
        _ => (0..g_count).map(|_| rand::Rng::random::<bool>(&mut rng)).collect(),
    };
    let spike_at_zero = cfg.init == InitScheme::GuidanceWeighted && u.is_some();

    let mut sizes = vec![0usize; k];
    for &zi in &z {
        sizes[zi] += 1;
    }
    let mut mu = Matrix::zeros(g_count, k);
    let mut sigma2 = Vec::with_capacity(g_count);
    for g in 0..g_count {
        let x = expr.gene(g);
        let mut sums = vec![0.0; k];
        for (&xi, &zi) in x.iter().zip(&z) {
            sums[zi] += xi;
        }
        for c in 0..k {
            if sizes[c] > 0 && (selected[g] || !spike_at_zero) {
                mu.set(g, c, sums[c] / sizes[c] as f64);
            }
        }
        let v = sample_variance(x);
        sigma2.push(if v > 0.0 { v } else { 1.0 });
    }

    let state = ModelState {
        pi: vec![1.0 / k as f64; k],
        mu,
        sigma2,
        selected,
        z,
        p: 0.5,
        tau2_mu0: prior_mean_or_one(h.a_tau_mu0, h.b_tau_mu0),
        tau2_mu1: prior_mean_or_one(h.a_tau_mu1, h.b_tau_mu1),
        tau2_u0: prior_mean_or_one(h.a_tau_u0, h.b_tau_u0),
        tau2_u1: prior_mean_or_one(h.a_tau_u1, h.b_tau_u1),
    };
    state.validate()?;
    Ok(state)
}

/// Beta parameters of the full conditional of p.
pub fn p_conditional(state: &ModelState, h: &Hyperparameters) -> (f64, f64) {
    let sel = state.n_selected() as f64;
    let g = state.n_genes() as f64;
    (h.a_p + sel, h.b_p + g - sel)
}

/// Step 1.
pub fn update_p(state: &mut ModelState, h: &Hyperparameters, stream: &RngStream) -> Result<(), SamplerError> {
    let (a, b) = p_conditional(state, h);
    let p = dist::beta(&mut stream.rng(), a, b)?;
    // Keep p strictly inside (0, 1) so logit(p) stays finite.
    state.p = p.clamp(f64::EPSILON, 1.0 - f64::EPSILON);
    Ok(())
}

/// Inverse-gamma (shape, rate) of the full conditional of one τ².
pub fn tau2_conditional(
    state: &ModelState,
    u: Option<&[f64]>,
    h: &Hyperparameters,
    which: Tau2,
) -> (f64, f64) {
    let k = state.k() as f64;
    match which {
        Tau2::Mu0 | Tau2::Mu1 => {
            let want = which == Tau2::Mu1;
            let (mut count, mut ss) = (0usize, 0.0);
            for g in 0..state.n_genes() {
                if state.selected[g] == want {
                    count += 1;
                    ss += state.mu.row(g).iter().map(|m| m * m).sum::<f64>();
                }
            }
            let (a, b) = if want {
                (h.a_tau_mu1, h.b_tau_mu1)
            } else {
                (h.a_tau_mu0, h.b_tau_mu0)
            };
            (a + 0.5 * k * count as f64, b + 0.5 * ss)
        }
        Tau2::U0 | Tau2::U1 => {
            let want = which == Tau2::U1;
            let centre = if want { 1.0 } else { 0.0 };
            let (mut count, mut ss) = (0usize, 0.0);
            if let Some(u) = u {
                for (g, &ug) in u.iter().enumerate() {
                    if state.selected[g] == want {
                        count += 1;
                        ss += (ug - centre) * (ug - centre);
                    }
                }
            }
            let (a, b) = if want {
                (h.a_tau_u1, h.b_tau_u1)
            } else {
                (h.a_tau_u0, h.b_tau_u0)
            };
            (a + 0.5 * count as f64, b + 0.5 * ss)
        }
    }
}

/// Steps 2–5.
pub fn update_tau2(
    state: &mut ModelState,
    u: Option<&[f64]>,
    h: &Hyperparameters,
    which: Tau2,
    stream: &RngStream,
) -> Result<(), SamplerError> {
    let (shape, rate) = tau2_conditional(state, u, h, which);
    let v = dist::inverse_gamma(&mut stream.rng(), shape, rate)?;
    match which {
        Tau2::Mu0 => state.tau2_mu0 = v,
        Tau2::Mu1 => state.tau2_mu1 = v,
        Tau2::U0 => state.tau2_u0 = v,
        Tau2::U1 => state.tau2_u1 = v,
    }
    Ok(())
}

/// Log-odds of L_g = 1 given everything else. `u_g` is `None` for the
/// unguided model.
pub fn selection_log_odds(state: &ModelState, g: usize, u_g: Option<f64>) -> f64 {
    let mut lo = state.p.ln() - (1.0 - state.p).ln();
    for &m in state.mu.row(g) {
        lo += log_normal_pdf(m, 0.0, state.tau2_mu1) - log_normal_pdf(m, 0.0, state.tau2_mu0);
    }
    if let Some(ug) = u_g {
        lo += log_normal_pdf(ug, 1.0, state.tau2_u1) - log_normal_pdf(ug, 0.0, state.tau2_u0);
    }
    lo
}

/// log ∫ Π_{i∈k} N(x_i; μ, σ²) N(μ; 0, τ²) dμ up to terms free of τ², for
/// a cluster of size `n_k` with sum `s`.
fn log_cluster_marginal(tau2: f64, sigma2: f64, s: f64, n_k: usize) -> f64 {
    let r = tau2 * n_k as f64 / sigma2;
    -0.5 * r.ln_1p() + 0.5 * tau2 * s * s / (sigma2 * (sigma2 + tau2 * n_k as f64))
}

/// Log-odds of L_g = 1 with μ_g· integrated out, given the per-cluster sums
/// `sums` and sizes `sizes` of gene g.
pub fn blocked_selection_log_odds(state: &ModelState, g: usize, sums: &[f64], sizes: &[usize], u_g: Option<f64>) -> f64 {
    let mut lo = state.p.ln() - (1.0 - state.p).ln();
    let s2 = state.sigma2[g];
    for (&s, &n) in sums.iter().zip(sizes) {
        lo += log_cluster_marginal(state.tau2_mu1, s2, s, n) - log_cluster_marginal(state.tau2_mu0, s2, s, n);
    }
    if let Some(ug) = u_g {
        lo += log_normal_pdf(ug, 1.0, state.tau2_u1) - log_normal_pdf(ug, 0.0, state.tau2_u0);
    }
    lo
}

/// Stable logistic function.
#[inline]
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Probability that L_g = 1 under the full conditional.
pub fn selection_probability(state: &ModelState, g: usize, u_g: Option<f64>) -> f64 {
    sigmoid(selection_log_odds(state, g, u_g))
}

/// Step 6. `u` is `None` for the unguided model.
pub fn update_gene_selection(state: &mut ModelState, u: Option<&[f64]>, stream: &RngStream) {
    let st: &ModelState = state;
    let new: Vec<bool> = (0..st.n_genes())
        .into_par_iter()
        .map(|g| {
            let q = selection_probability(st, g, u.map(|u| u[g]));
            let draw: f64 = rand::Rng::random(&mut stream.child(Domain::Gene, g as u64).rng());
            draw < q
        })
        .collect();
    state.selected = new;
}

/// Step 6 as a block: L_g from its conditional with μ_g· integrated out,
/// then μ_g· from its full conditional given the new L_g.
pub fn update_selection_and_means(
    state: &mut ModelState,
    expr: &ExpressionMatrix,
    u: Option<&[f64]>,
    stream: &RngStream,
) -> Result<(), SamplerError> {
    let k = state.k();
    let sizes = state.cluster_sizes();
    let ind = cluster_indicators(&state.z, k);
    let st: &ModelState = state;
    let draws: Vec<(bool, Vec<f64>)> = (0..st.n_genes())
        .into_par_iter()
        .map(|g| -> Result<(bool, Vec<f64>), DistError> {
            let x = expr.gene(g);
            let sums: Vec<f64> = ind.iter().map(|row| dot(x, row)).collect();
            let q = sigmoid(blocked_selection_log_odds(st, g, &sums, &sizes, u.map(|u| u[g])));
            let mut rng = stream.child(Domain::Gene, g as u64).rng();
            let on = rand::Rng::random::<f64>(&mut rng) < q;
            let tau2 = if on { st.tau2_mu1 } else { st.tau2_mu0 };
            let mu = sums
                .iter()
                .zip(&sizes)
                .map(|(&s, &n)| {
                    let (m, v) = mean_conditional(tau2, st.sigma2[g], s, n);
                    dist::normal(&mut rng, m, v)
                })
                .collect::<Result<_, _>>()?;
            Ok((on, mu))
        })
        .collect::<Result<_, _>>()?;
    for (g, (on, mu)) in draws.into_iter().enumerate() {
        state.selected[g] = on;
        state.mu.row_mut(g).copy_from_slice(&mu);
    }
    Ok(())
}

/// Dirichlet parameters of the full conditional of π.
pub fn pi_conditional(state: &ModelState, h: &Hyperparameters) -> Vec<f64> {
    state.cluster_sizes().iter().map(|&n| h.c + n as f64).collect()
}

/// Step 7.
pub fn update_pi(state: &mut ModelState, h: &Hyperparameters, stream: &RngStream) -> Result<(), SamplerError> {
    let alpha = pi_conditional(state, h);
    let mut pi = dist::dirichlet(&mut stream.rng(), &alpha)?;
    // A component can underflow to 0 for tiny concentrations; keep π on the
    // open simplex.
    if pi.iter().any(|&v| !(v > 0.0)) {
        for v in &mut pi {
            *v = v.max(f64::MIN_POSITIVE);
        }
        let s: f64 = pi.iter().sum();
        for v in &mut pi {
            *v /= s;
        }
    }
    state.pi = pi;
    Ok(())
}

const SAMPLE_BLOCK: usize = 128;

/// n × K matrix of unnormalised log assignment weights
/// log π_k − Σ_g (X_gi − μ_gk)² / (2σ²_g).
pub fn assignment_log_weights(state: &ModelState, expr: &ExpressionMatrix) -> Matrix {
    mixture_log_weights(expr, &state.pi, &state.mu, &state.sigma2)
}

/// [`assignment_log_weights`] for arbitrary mixture parameters.
pub fn mixture_log_weights(expr: &ExpressionMatrix, pi: &[f64], mu: &Matrix, sigma2: &[f64]) -> Matrix {
    let (n, k, g_count) = (expr.n_samples(), pi.len(), expr.n_genes());
    let inv2s: Vec<f64> = sigma2.iter().map(|s| 0.5 / s).collect();
    let log_pi: Vec<f64> = pi.iter().map(|p| p.ln()).collect();
    let starts: Vec<usize> = (0..n).step_by(SAMPLE_BLOCK).collect();
    // cluster-major accumulators keep the inner loop contiguous
    let blocks: Vec<Vec<f64>> = starts
        .par_iter()
        .map(|&start| {
            let width = SAMPLE_BLOCK.min(n - start);
            let mut acc = vec![0.0; k * width];
            for g in 0..g_count {
                let x = &expr.gene(g)[start..start + width];
                let w = inv2s[g];
                for (row, &m) in acc.chunks_exact_mut(width).zip(mu.row(g)) {
                    for (a, &xi) in row.iter_mut().zip(x) {
                        let d = xi - m;
                        *a -= d * d * w;
                    }
                }
            }
            acc
        })
        .collect();
    let mut out = Matrix::zeros(n, k);
    for (&start, acc) in starts.iter().zip(&blocks) {
        let width = acc.len() / k;
        for (c, row) in acc.chunks_exact(width).enumerate() {
            for (j, &a) in row.iter().enumerate() {
                out.set(start + j, c, a + log_pi[c]);
            }
        }
    }
    out
}

/// Step 8.
pub fn update_assignments(
    state: &mut ModelState,
    expr: &ExpressionMatrix,
    stream: &RngStream,
) -> Result<(), SamplerError> {
    let weights = assignment_log_weights(state, expr);
    let z: Result<Vec<usize>, DistError> = (0..expr.n_samples())
        .into_par_iter()
        .map(|i| dist::categorical_log(&mut stream.child(Domain::Sample, i as u64).rng(), weights.row(i)))
        .collect();
    state.z = z?;
    Ok(())
}

/// Four-lane dot product.
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0; 4];
    let (ca, cb) = (a.chunks_exact(4), b.chunks_exact(4));
    let tail: f64 = ca.remainder().iter().zip(cb.remainder()).map(|(x, y)| x * y).sum();
    for (x, y) in ca.zip(cb) {
        for l in 0..4 {
            acc[l] += x[l] * y[l];
        }
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// One 0/1 indicator row per cluster.
fn cluster_indicators(z: &[usize], k: usize) -> Vec<Vec<f64>> {
    let mut ind = vec![vec![0.0; z.len()]; k];
    for (i, &zi) in z.iter().enumerate() {
        ind[zi][i] = 1.0;
    }
    ind
}

/// Normal (mean, variance) of the full conditional of μ_gk given the
/// cluster sum `s` and size `n_k`.
pub fn mean_conditional(tau2: f64, sigma2: f64, s: f64, n_k: usize) -> (f64, f64) {
    let denom = tau2 * n_k as f64 + sigma2;
    (tau2 * s / denom, tau2 * sigma2 / denom)
}

/// Step 9.
pub fn update_means(
    state: &mut ModelState,
    expr: &ExpressionMatrix,
    stream: &RngStream,
) -> Result<(), SamplerError> {
    let k = state.k();
    let sizes = state.cluster_sizes();
    let (z, sigma2, selected) = (&state.z, &state.sigma2, &state.selected);
    let (t0, t1) = (state.tau2_mu0, state.tau2_mu1);
    let ind = cluster_indicators(z, k);
    state
        .mu
        .as_mut_slice()
        .par_chunks_mut(k)
        .enumerate()
        .try_for_each(|(g, row)| -> Result<(), DistError> {
            let x = expr.gene(g);
            let tau2 = if selected[g] { t1 } else { t0 };
            let mut rng = stream.child(Domain::Gene, g as u64).rng();
            for c in 0..k {
                let (m, v) = mean_conditional(tau2, sigma2[g], dot(x, &ind[c]), sizes[c]);
                row[c] = dist::normal(&mut rng, m, v)?;
            }
            Ok(())
        })?;
    Ok(())
}

/// Residual sum of squares Σ_i (X_gi − μ_{g,Z_i})².
fn residual_ss(x: &[f64], mu: &[f64], z: &[usize]) -> f64 {
    let mut acc = [0.0; 4];
    let (cx, cz) = (x.chunks_exact(4), z.chunks_exact(4));
    let tail: f64 = cx.remainder().iter().zip(cz.remainder()).map(|(&xi, &zi)| (xi - mu[zi]).powi(2)).sum();
    for (xs, zs) in cx.zip(cz) {
        for l in 0..4 {
            let d = xs[l] - mu[zs[l]];
            acc[l] += d * d;
        }
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// Inverse-gamma (shape, rate) of the full conditional of σ²_g.
pub fn variance_conditional(state: &ModelState, expr: &ExpressionMatrix, h: &Hyperparameters, g: usize) -> (f64, f64) {
    let rss = residual_ss(expr.gene(g), state.mu.row(g), &state.z);
    (h.a_sigma + 0.5 * expr.n_samples() as f64, h.b_sigma + 0.5 * rss)
}

/// Step 10. Returns the per-gene residual sums of squares at the new state,
/// which the log-posterior reuses.
pub fn update_variances(
    state: &mut ModelState,
    expr: &ExpressionMatrix,
    h: &Hyperparameters,
    stream: &RngStream,
) -> Result<Vec<f64>, SamplerError> {
    let shape = h.a_sigma + 0.5 * expr.n_samples() as f64;
    let (mu, z) = (&state.mu, &state.z);
    let drawn: Result<Vec<(f64, f64)>, DistError> = (0..expr.n_genes())
        .into_par_iter()
        .map(|g| {
            let rss = residual_ss(expr.gene(g), mu.row(g), z);
            let mut rng = stream.child(Domain::Gene, g as u64).rng();
            dist::inverse_gamma(&mut rng, shape, h.b_sigma + 0.5 * rss).map(|s| (s, rss))
        })
        .collect();
    let drawn = drawn?;
    state.sigma2 = drawn.iter().map(|d| d.0).collect();
    Ok(drawn.into_iter().map(|d| d.1).collect())
}

/// Log of the full joint density (data, guidance, priors) at `state`,
/// normalising constants included. `rss` may carry precomputed residual sums
/// of squares.
pub fn log_posterior(
    state: &ModelState,
    expr: &ExpressionMatrix,
    u: Option<&[f64]>,
    h: &Hyperparameters,
    rss: Option<&[f64]>,
) -> f64 {
    let n = expr.n_samples() as f64;
    let k = state.k();
    const LN_2PI: f64 = 1.837_877_066_409_345_5;

    let mut lp: f64 = state.z.iter().map(|&z| state.pi[z].ln()).sum();
    for g in 0..state.n_genes() {
        let r = match rss {
            Some(r) => r[g],
            None => residual_ss(expr.gene(g), state.mu.row(g), &state.z),
        };
        let s2 = state.sigma2[g];
        lp += -0.5 * n * (LN_2PI + s2.ln()) - 0.5 * r / s2;

        let tau = if state.selected[g] { state.tau2_mu1 } else { state.tau2_mu0 };
        lp += state.mu.row(g).iter().map(|&m| log_normal_pdf(m, 0.0, tau)).sum::<f64>();
        if let Some(u) = u {
            lp += if state.selected[g] {
                log_normal_pdf(u[g], 1.0, state.tau2_u1)
            } else {
                log_normal_pdf(u[g], 0.0, state.tau2_u0)
            };
        }
        lp += log_inverse_gamma_pdf(s2, h.a_sigma, h.b_sigma);
        lp += if state.selected[g] { state.p.ln() } else { (1.0 - state.p).ln() };
    }
    lp += log_beta_pdf(state.p, h.a_p, h.b_p);
    if k > 1 {
        lp += log_dirichlet_pdf(&state.pi, &vec![h.c; k]);
    }
    lp += log_inverse_gamma_pdf(state.tau2_mu1, h.a_tau_mu1, h.b_tau_mu1);
    lp += log_inverse_gamma_pdf(state.tau2_mu0, h.a_tau_mu0, h.b_tau_mu0);
    if u.is_some() {
        lp += log_inverse_gamma_pdf(state.tau2_u1, h.a_tau_u1, h.b_tau_u1);
        lp += log_inverse_gamma_pdf(state.tau2_u0, h.a_tau_u0, h.b_tau_u0);
    }
    lp
}

/// One full iteration in the fixed update order. Returns the per-gene
/// residual sums of squares from step 10.
pub fn gibbs_sweep(
    state: &mut ModelState,
    expr: &ExpressionMatrix,
    u: Option<&[f64]>,
    h: &Hyperparameters,
    selection: SelectionUpdate,
    iteration: &RngStream,
) -> Result<Vec<f64>, SamplerError> {
    let s = |i| iteration.child(Domain::Step, i);
    update_p(state, h, &s(step::P))?;
    update_tau2(state, u, h, Tau2::Mu0, &s(step::TAU_MU0))?;
    update_tau2(state, u, h, Tau2::Mu1, &s(step::TAU_MU1))?;
    if u.is_some() {
        update_tau2(state, u, h, Tau2::U0, &s(step::TAU_U0))?;
        update_tau2(state, u, h, Tau2::U1, &s(step::TAU_U1))?;
    }
    match selection {
        SelectionUpdate::Blocked => update_selection_and_means(state, expr, u, &s(step::SELECTION))?,
        SelectionUpdate::Conditional => update_gene_selection(state, u, &s(step::SELECTION)),
    }
    update_pi(state, h, &s(step::PI))?;
    update_assignments(state, expr, &s(step::ASSIGN))?;
    update_means(state, expr, &s(step::MEANS))?;
    update_variances(state, expr, h, &s(step::VARIANCES))
}

/// Runs the full chain: N_T iterations, the first N_B discarded, every
/// `thin`-th later draw recorded.
pub fn run_gibbs(
    expr: &ExpressionMatrix,
    u: Option<&[f64]>,
    cfg: &GibbsConfig,
) -> Result<PosteriorTrace, SamplerError> {
    run_gibbs_with_state(expr, u, cfg).map(|(trace, _)| trace)
}

/// As [`run_gibbs`], also returning the final state.
pub fn run_gibbs_with_state(
    expr: &ExpressionMatrix,
    u: Option<&[f64]>,
    cfg: &GibbsConfig,
) -> Result<(PosteriorTrace, ModelState), SamplerError> {
    cfg.validate()?;
    if cfg.guided != u.is_some() {
        return Err(SamplerError::GuidanceMismatch);
    }
    if !expr.is_standardized() {
        return Err(SamplerError::NotStandardized);
    }
    let h = &cfg.hyper;
    let mut state = initialize_state(expr, u, cfg)?;
    let mut trace = PosteriorTrace::new(expr.n_genes(), expr.n_samples(), h.k, cfg.guided, cfg.keep_draws);
    trace.diagnostics.reserve(h.n_total);
    let root = RngStream::new(cfg.seed);
    let report_every = (h.n_total / 10).max(1);

    for t in 0..h.n_total {
        let rss = gibbs_sweep(&mut state, expr, u, h, cfg.selection, &root.child(Domain::Iteration, t as u64))?;
        let lp = log_posterior(&state, expr, u, h, Some(&rss));
        trace.diagnostics.push(IterationDiagnostics {
            iteration: t + 1,
            log_posterior: lp,
            p: state.p,
            tau2_mu0: state.tau2_mu0,
            tau2_mu1: state.tau2_mu1,
            tau2_u0: cfg.guided.then_some(state.tau2_u0),
            tau2_u1: cfg.guided.then_some(state.tau2_u1),
            n_selected: state.n_selected(),
        });
        if t >= h.n_burnin && (t - h.n_burnin) % cfg.thin == 0 {
            trace.record(&state);
        }
        if (t + 1) % report_every == 0 {
            log::debug!(
                "iteration {}/{}: log-posterior {:.3}, selected {}, cluster sizes {:?}",
                t + 1,
                h.n_total,
                lp,
                state.n_selected(),
                state.cluster_sizes()
            );
        }
    }
    Ok((trace, state))
}

/// Gene-wise means, used by tests and diagnostics.
pub fn gene_means(expr: &ExpressionMatrix) -> Vec<f64> {
    (0..expr.n_genes()).map(|g| mean(expr.gene(g))).collect()
}
