//! Retained post-burn-in draws, kept as streaming summaries and optionally in
//! full.

use serde::{Deserialize, Serialize};

use crate::data::{Matrix, ModelState};

/// Scalar diagnostics recorded at the end of every iteration, burn-in
/// included.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationDiagnostics {
    pub iteration: usize,
    pub log_posterior: f64,
    pub p: f64,
    pub tau2_mu0: f64,
    pub tau2_mu1: f64,
    /// `None` for unguided chains.
    pub tau2_u0: Option<f64>,
    pub tau2_u1: Option<f64>,
    pub n_selected: usize,
}

/// One full retained draw.
#[derive(Debug, Clone, PartialEq)]
pub struct Draw {
    pub selected: Vec<bool>,
    pub z: Vec<usize>,
    pub pi: Vec<f64>,
    pub mu: Matrix,
    pub sigma2: Vec<f64>,
    pub p: f64,
    pub tau2: [f64; 4],
}

impl From<&ModelState> for Draw {
    fn from(s: &ModelState) -> Self {
        Self {
            selected: s.selected.clone(),
            z: s.z.clone(),
            pi: s.pi.clone(),
            mu: s.mu.clone(),
            sigma2: s.sigma2.clone(),
            p: s.p,
            tau2: [s.tau2_mu0, s.tau2_mu1, s.tau2_u0, s.tau2_u1],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorTrace {
    n_genes: usize,
    n_samples: usize,
    k: usize,
    guided: bool,
    n_retained: usize,
    inclusion_counts: Vec<u64>,
    /// n × K counts of Z_i = k.
    cluster_counts: Vec<u64>,
    sum_pi: Vec<f64>,
    sum_mu: Vec<f64>,
    sum_sigma2: Vec<f64>,
    sum_p: f64,
    sum_tau2: [f64; 4],
    pub diagnostics: Vec<IterationDiagnostics>,
    pub draws: Option<Vec<Draw>>,
}

impl PosteriorTrace {
    pub fn new(n_genes: usize, n_samples: usize, k: usize, guided: bool, keep_draws: bool) -> Self {
        Self {
            n_genes,
            n_samples,
            k,
            guided,
            n_retained: 0,
            inclusion_counts: vec![0; n_genes],
            cluster_counts: vec![0; n_samples * k],
            sum_pi: vec![0.0; k],
            sum_mu: vec![0.0; n_genes * k],
            sum_sigma2: vec![0.0; n_genes],
            sum_p: 0.0,
            sum_tau2: [0.0; 4],
            diagnostics: Vec::new(),
            draws: keep_draws.then(Vec::new),
        }
    }

    /// Adds one retained draw to the summaries.
    pub fn record(&mut self, s: &ModelState) {
        debug_assert_eq!(s.n_genes(), self.n_genes);
        debug_assert_eq!(s.k(), self.k);
        self.n_retained += 1;
        for (c, &l) in self.inclusion_counts.iter_mut().zip(&s.selected) {
            *c += l as u64;
        }
        for (i, &z) in s.z.iter().enumerate() {
            self.cluster_counts[i * self.k + z] += 1;
        }
        for (a, b) in self.sum_pi.iter_mut().zip(&s.pi) {
            *a += b;
        }
        for (a, b) in self.sum_mu.iter_mut().zip(s.mu.as_slice()) {
            *a += b;
        }
        for (a, b) in self.sum_sigma2.iter_mut().zip(&s.sigma2) {
            *a += b;
        }
        self.sum_p += s.p;
        for (a, b) in self
            .sum_tau2
            .iter_mut()
            .zip([s.tau2_mu0, s.tau2_mu1, s.tau2_u0, s.tau2_u1])
        {
            *a += b;
        }
        if let Some(d) = self.draws.as_mut() {
            d.push(Draw::from(s));
        }
    }

    pub fn n_retained(&self) -> usize {
        self.n_retained
    }

    pub fn is_empty(&self) -> bool {
        self.n_retained == 0
    }

    pub fn n_genes(&self) -> usize {
        self.n_genes
    }

    pub fn n_samples(&self) -> usize {
        self.n_samples
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn guided(&self) -> bool {
        self.guided
    }

    pub fn inclusion_counts(&self) -> &[u64] {
        &self.inclusion_counts
    }

    /// Fraction of retained draws with L_g = 1.
    pub fn inclusion_frequency(&self) -> Vec<f64> {
        let n = self.n_retained.max(1) as f64;
        self.inclusion_counts.iter().map(|&c| c as f64 / n).collect()
    }

    /// n × K matrix of cluster membership frequencies.
    pub fn cluster_frequencies(&self) -> Matrix {
        let n = self.n_retained.max(1) as f64;
        let data = self.cluster_counts.iter().map(|&c| c as f64 / n).collect();
        Matrix::from_vec(self.n_samples, self.k, data).expect("shape")
    }

    pub fn cluster_counts(&self) -> &[u64] {
        &self.cluster_counts
    }

    fn scale(&self, v: &[f64]) -> Vec<f64> {
        let n = self.n_retained.max(1) as f64;
        v.iter().map(|x| x / n).collect()
    }

    pub fn mean_pi(&self) -> Vec<f64> {
        self.scale(&self.sum_pi)
    }

    /// G × K posterior mean of the cluster means.
    pub fn mean_mu(&self) -> Matrix {
        Matrix::from_vec(self.n_genes, self.k, self.scale(&self.sum_mu)).expect("shape")
    }

    pub fn mean_sigma2(&self) -> Vec<f64> {
        self.scale(&self.sum_sigma2)
    }

    pub fn mean_p(&self) -> f64 {
        self.sum_p / self.n_retained.max(1) as f64
    }

    /// Posterior means of (τ²_μ0, τ²_μ1, τ²_U0, τ²_U1).
    pub fn mean_tau2(&self) -> [f64; 4] {
        let n = self.n_retained.max(1) as f64;
        self.sum_tau2.map(|v| v / n)
    }
}
