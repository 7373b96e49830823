//! Post-sampling decisions: local FDR gene selection, MAP cluster labels,
//! BIC and the choice of K.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{ExpressionMatrix, Matrix};
use crate::distributions::{log_sum_exp, Domain, RngStream};
use crate::sampler::{mixture_log_weights, run_gibbs, GibbsConfig, SamplerError};
use crate::trace::PosteriorTrace;

#[derive(Debug, Error)]
pub enum InferenceError {
    #[error("posterior trace holds no retained draws")]
    EmptyTrace,
    #[error("top-m selection asks for {m} genes but only {genes} exist")]
    TooManyGenes { m: usize, genes: usize },
    #[error("FDR threshold must lie in (0, 1), got {0}")]
    InvalidThreshold(f64),
    #[error("K range is empty")]
    EmptyKRange,
    #[error("trace dimensions do not match the expression matrix")]
    ShapeMismatch,
    #[error("chain for K = {k} failed: {source}")]
    Chain {
        k: usize,
        #[source]
        source: SamplerError,
    },
}

/// P_g = 1 − fraction of retained draws with L_g = 1.
pub fn local_fdr(trace: &PosteriorTrace) -> Result<Vec<f64>, InferenceError> {
    if trace.is_empty() {
        return Err(InferenceError::EmptyTrace);
    }
    let n = trace.n_retained() as f64;
    Ok(trace.inclusion_counts().iter().map(|&c| 1.0 - c as f64 / n).collect())
}

/// Expected FDR of the set {g: P_g ≤ η}: the mean P_g over that set. `None`
/// when no gene passes.
pub fn fdr_at_threshold(p: &[f64], eta: f64) -> Option<f64> {
    let (sum, count) = p
        .iter()
        .filter(|&&v| v <= eta)
        .fold((0.0, 0usize), |(s, c), &v| (s + v, c + 1));
    (count > 0).then(|| sum / count as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode", content = "value")]
pub enum SelectionMode {
    /// Keep every gene with P_g ≤ η.
    ByFdr(f64),
    /// Keep the m genes with the smallest P_g, ties broken by gene index.
    TopM(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneDecision {
    pub local_fdr: Vec<f64>,
    /// Selected gene indices (0-based), ascending.
    pub selected: Vec<usize>,
    pub eta: f64,
    /// `None` for an empty selection.
    pub achieved_fdr: Option<f64>,
}

impl GeneDecision {
    pub fn flags(&self) -> Vec<bool> {
        let mut f = vec![false; self.local_fdr.len()];
        for &g in &self.selected {
            f[g] = true;
        }
        f
    }
}

pub fn select_genes(p: &[f64], mode: SelectionMode) -> Result<GeneDecision, InferenceError> {
    match mode {
        SelectionMode::ByFdr(eta) => {
            if !(eta > 0.0 && eta < 1.0) {
                return Err(InferenceError::InvalidThreshold(eta));
            }
            let selected: Vec<usize> = (0..p.len()).filter(|&g| p[g] <= eta).collect();
            Ok(GeneDecision {
                local_fdr: p.to_vec(),
                selected,
                eta,
                achieved_fdr: fdr_at_threshold(p, eta),
            })
        }
        SelectionMode::TopM(m) => {
            if m > p.len() {
                return Err(InferenceError::TooManyGenes { m, genes: p.len() });
            }
            let mut order: Vec<usize> = (0..p.len()).collect();
            order.sort_by(|&a, &b| p[a].total_cmp(&p[b]).then(a.cmp(&b)));
            let mut selected = order[..m].to_vec();
            selected.sort_unstable();
            let eta = order[..m].last().map_or(0.0, |&g| p[g]);
            let achieved_fdr = (m > 0).then(|| selected.iter().map(|&g| p[g]).sum::<f64>() / m as f64);
            Ok(GeneDecision {
                local_fdr: p.to_vec(),
                selected,
                eta,
                achieved_fdr,
            })
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterDecision {
    /// n × K posterior membership frequencies.
    pub soft: Matrix,
    /// 1-based MAP labels.
    pub labels: Vec<usize>,
}

/// Index of the largest entry, first one on ties.
fn argmax_first(row: &[f64]) -> usize {
    let mut best = 0;
    for (k, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = k;
        }
    }
    best
}

pub fn cluster_decision(trace: &PosteriorTrace) -> Result<ClusterDecision, InferenceError> {
    if trace.is_empty() {
        return Err(InferenceError::EmptyTrace);
    }
    let soft = trace.cluster_frequencies();
    let labels = (0..soft.rows()).map(|i| argmax_first(soft.row(i)) + 1).collect();
    Ok(ClusterDecision { soft, labels })
}

/// Renumbers clusters so that larger clusters get smaller labels (ties by
/// smallest member index); empty clusters go last. Columns of `soft` are
/// permuted to match.
pub fn canonical_relabel(d: &ClusterDecision) -> ClusterDecision {
    let k = d.soft.cols();
    let mut size = vec![0usize; k];
    let mut first = vec![usize::MAX; k];
    for (i, &l) in d.labels.iter().enumerate() {
        size[l - 1] += 1;
        first[l - 1] = first[l - 1].min(i);
    }
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| size[b].cmp(&size[a]).then(first[a].cmp(&first[b])).then(a.cmp(&b)));
    let mut new_of = vec![0; k];
    for (new, &old) in order.iter().enumerate() {
        new_of[old] = new;
    }
    let mut soft = Matrix::zeros(d.soft.rows(), k);
    for i in 0..d.soft.rows() {
        for (old, &v) in d.soft.row(i).iter().enumerate() {
            soft.set(i, new_of[old], v);
        }
    }
    let labels = d.labels.iter().map(|&l| new_of[l - 1] + 1).collect();
    ClusterDecision { soft, labels }
}

/// Log-penalty base for BIC.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BicPenalty {
    /// K·G·log G.
    #[default]
    LogGenes,
    /// K·G·log n, the conventional form.
    LogSamples,
}

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Σ_i log Σ_k π_k Π_g N(X_gi; μ_gk, σ²_g).
pub fn mixture_log_likelihood(expr: &ExpressionMatrix, pi: &[f64], mu: &Matrix, sigma2: &[f64]) -> f64 {
    let w = mixture_log_weights(expr, pi, mu, sigma2);
    let norm: f64 = sigma2.iter().map(|s| -0.5 * (LN_2PI + s.ln())).sum();
    (0..w.rows()).map(|i| log_sum_exp(w.row(i)) + norm).sum()
}

pub fn bic_penalty(k: usize, n_genes: usize, n_samples: usize, penalty: BicPenalty) -> f64 {
    let base = match penalty {
        BicPenalty::LogGenes => n_genes,
        BicPenalty::LogSamples => n_samples,
    };
    (k * n_genes) as f64 * (base as f64).ln()
}

/// BIC with posterior-mean plug-ins for π, μ and σ².
pub fn bic(expr: &ExpressionMatrix, trace: &PosteriorTrace, penalty: BicPenalty) -> Result<f64, InferenceError> {
    if trace.is_empty() {
        return Err(InferenceError::EmptyTrace);
    }
    if trace.n_genes() != expr.n_genes() || trace.n_samples() != expr.n_samples() {
        return Err(InferenceError::ShapeMismatch);
    }
    let ll = mixture_log_likelihood(expr, &trace.mean_pi(), &trace.mean_mu(), &trace.mean_sigma2());
    Ok(-2.0 * ll + bic_penalty(trace.k(), expr.n_genes(), expr.n_samples(), penalty))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KSelection {
    pub best_k: usize,
    /// (K, BIC) in the order of the requested range.
    pub curve: Vec<(usize, f64)>,
}

/// Seed of the chain fitted for `k` under master seed `seed`.
pub fn chain_seed(seed: u64, k: usize) -> u64 {
    RngStream::new(seed).child(Domain::Chain, k as u64).derived_seed()
}

/// Fits one chain per K (concurrently) and returns the K with the smallest
/// BIC, first one on ties.
pub fn select_k(
    expr: &ExpressionMatrix,
    u: Option<&[f64]>,
    template: &GibbsConfig,
    k_range: &[usize],
    penalty: BicPenalty,
) -> Result<KSelection, InferenceError> {
    if k_range.is_empty() {
        return Err(InferenceError::EmptyKRange);
    }
    let curve: Result<Vec<(usize, f64)>, InferenceError> = k_range
        .par_iter()
        .map(|&k| {
            let mut cfg = template.clone();
            cfg.hyper.k = k;
            cfg.seed = chain_seed(template.seed, k);
            cfg.keep_draws = false;
            let trace = run_gibbs(expr, u, &cfg).map_err(|source| InferenceError::Chain { k, source })?;
            Ok((k, bic(expr, &trace, penalty)?))
        })
        .collect();
    let curve = curve?;
    let best = curve
        .iter()
        .fold(curve[0], |best, &c| if c.1 < best.1 { c } else { best });
    Ok(KSelection { best_k: best.0, curve })
}
