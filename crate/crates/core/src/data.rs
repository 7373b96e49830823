//! Domain data model shared by the sampler, guidance and simulation code.
//!
//! Expression values are stored gene-major: row `g` holds the `n` sample
//! values of gene `g` contiguously, because every Gibbs step walks genes in
//! the outer loop and samples in the inner loop.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DataError {
    #[error("gene `{gene}` (row {index}) has zero variance")]
    ZeroVarianceGene { gene: String, index: usize },
    #[error("non-finite value at row {row}, column {col}")]
    NonFiniteInput { row: usize, col: usize },
    #[error("matrix needs at least {min_rows} row(s) and {min_cols} column(s), got {rows}x{cols}")]
    TooSmall {
        rows: usize,
        cols: usize,
        min_rows: usize,
        min_cols: usize,
    },
    #[error("{what}: expected {expected}, found {found}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("filter fraction must lie in [0, 1), got {0}")]
    InvalidFraction(f64),
    #[error("filtering removed every gene")]
    EmptyResult,
    #[error("invalid outcome: {0}")]
    InvalidOutcome(String),
    #[error("invalid hyperparameter `{name}` = {value}")]
    InvalidHyperparameter { name: &'static str, value: f64 },
    #[error("invalid model state: {0}")]
    InvalidState(String),
}

/// Dense row-major matrix of `f64`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self, DataError> {
        if data.len() != rows * cols {
            return Err(DataError::DimensionMismatch {
                what: "matrix buffer length",
                expected: rows * cols,
                found: data.len(),
            });
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, DataError> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for row in rows {
            if row.len() != cols {
                return Err(DataError::DimensionMismatch {
                    what: "row length",
                    expected: cols,
                    found: row.len(),
                });
            }
            data.extend_from_slice(row);
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data,
        })
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn row_chunks_mut(&mut self) -> std::slice::ChunksExactMut<'_, f64> {
        self.data.chunks_exact_mut(self.cols.max(1))
    }

    /// Copy of the selected rows, in the given order.
    pub fn select_rows(&self, idx: &[usize]) -> Matrix {
        let mut data = Vec::with_capacity(idx.len() * self.cols);
        for &r in idx {
            data.extend_from_slice(self.row(r));
        }
        Matrix {
            rows: idx.len(),
            cols: self.cols,
            data,
        }
    }
}

/// Genes-by-samples expression values with identifiers.
#[derive(Debug, Clone, PartialEq)]
pub struct ExpressionMatrix {
    values: Matrix,
    gene_ids: Vec<String>,
    sample_ids: Vec<String>,
    standardized: bool,
}

impl ExpressionMatrix {
    /// Validates shape (G ≥ 1, n ≥ 2), identifier counts and finiteness.
    pub fn new(
        values: Matrix,
        gene_ids: Vec<String>,
        sample_ids: Vec<String>,
    ) -> Result<Self, DataError> {
        if values.rows() < 1 || values.cols() < 2 {
            return Err(DataError::TooSmall {
                rows: values.rows(),
                cols: values.cols(),
                min_rows: 1,
                min_cols: 2,
            });
        }
        if gene_ids.len() != values.rows() {
            return Err(DataError::DimensionMismatch {
                what: "gene identifiers",
                expected: values.rows(),
                found: gene_ids.len(),
            });
        }
        if sample_ids.len() != values.cols() {
            return Err(DataError::DimensionMismatch {
                what: "sample identifiers",
                expected: values.cols(),
                found: sample_ids.len(),
            });
        }
        if let Some(pos) = values.as_slice().iter().position(|v| !v.is_finite()) {
            return Err(DataError::NonFiniteInput {
                row: pos / values.cols(),
                col: pos % values.cols(),
            });
        }
        Ok(Self {
            values,
            gene_ids,
            sample_ids,
            standardized: false,
        })
    }

    /// Builds a matrix with generated identifiers `g1..gG` and `s1..sn`.
    pub fn with_default_ids(values: Matrix) -> Result<Self, DataError> {
        let genes = (1..=values.rows()).map(|g| format!("g{g}")).collect();
        let samples = (1..=values.cols()).map(|i| format!("s{i}")).collect();
        Self::new(values, genes, samples)
    }

    pub fn n_genes(&self) -> usize {
        self.values.rows()
    }

    pub fn n_samples(&self) -> usize {
        self.values.cols()
    }

    pub fn values(&self) -> &Matrix {
        &self.values
    }

    pub fn gene(&self, g: usize) -> &[f64] {
        self.values.row(g)
    }

    pub fn gene_ids(&self) -> &[String] {
        &self.gene_ids
    }

    pub fn sample_ids(&self) -> &[String] {
        &self.sample_ids
    }

    pub fn is_standardized(&self) -> bool {
        self.standardized
    }

    /// Restricts to the given genes, preserving their order.
    pub fn subset_genes(&self, idx: &[usize]) -> ExpressionMatrix {
        ExpressionMatrix {
            values: self.values.select_rows(idx),
            gene_ids: idx.iter().map(|&g| self.gene_ids[g].clone()).collect(),
            sample_ids: self.sample_ids.clone(),
            standardized: self.standardized,
        }
    }
}

pub(crate) fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample variance with the n−1 divisor.
pub(crate) fn sample_variance(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() as f64 - 1.0)
}

/// Centers every gene to mean 0 and scales it to unit sample standard
/// deviation (n−1 divisor).
pub fn standardize_genes(raw: &ExpressionMatrix) -> Result<ExpressionMatrix, DataError> {
    let mut out = raw.clone();
    for (g, row) in out.values.row_chunks_mut().enumerate() {
        let m = mean(row);
        for v in row.iter_mut() {
            *v -= m;
        }
        // Second centering pass removes the rounding residue of the first.
        let m2 = mean(row);
        let ss: f64 = row.iter().map(|v| (v - m2) * (v - m2)).sum();
        let sd = (ss / (row.len() as f64 - 1.0)).sqrt();
        if !(sd > f64::EPSILON * (1.0 + m.abs())) {
            return Err(DataError::ZeroVarianceGene {
                gene: raw.gene_ids[g].clone(),
                index: g,
            });
        }
        for v in row.iter_mut() {
            *v = (*v - m2) / sd;
        }
    }
    out.standardized = true;
    Ok(out)
}

/// Keeps the `ceil((1 − fraction)·G)` genes with the highest mean
/// expression, in their original order. Ties at the cutoff favour the lower
/// row index.
pub fn filter_low_expression(
    raw: &ExpressionMatrix,
    fraction: f64,
) -> Result<ExpressionMatrix, DataError> {
    if !(0.0..1.0).contains(&fraction) {
        return Err(DataError::InvalidFraction(fraction));
    }
    let g = raw.n_genes();
    let keep = ((1.0 - fraction) * g as f64).ceil() as usize;
    if keep == 0 {
        return Err(DataError::EmptyResult);
    }
    let means: Vec<f64> = (0..g).map(|r| mean(raw.gene(r))).collect();
    let mut order: Vec<usize> = (0..g).collect();
    // Stable sort: equal means keep ascending row order.
    order.sort_by(|&a, &b| means[b].total_cmp(&means[a]));
    let mut kept: Vec<usize> = order[..keep.min(g)].to_vec();
    kept.sort_unstable();
    Ok(raw.subset_genes(&kept))
}

/// A clinical outcome measured on the same samples as the expression matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ClinicalOutcome {
    Continuous { y: Vec<f64> },
    Binary { y: Vec<u8> },
    Ordinal { y: Vec<u32> },
    Survival { time: Vec<f64>, event: Vec<bool> },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutcomeKind {
    Continuous,
    Binary,
    Ordinal,
    Survival,
}

impl std::str::FromStr for OutcomeKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "continuous" => Ok(Self::Continuous),
            "binary" => Ok(Self::Binary),
            "ordinal" => Ok(Self::Ordinal),
            "survival" => Ok(Self::Survival),
            other => Err(format!("unknown outcome kind `{other}`")),
        }
    }
}

impl std::fmt::Display for OutcomeKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Continuous => "continuous",
            Self::Binary => "binary",
            Self::Ordinal => "ordinal",
            Self::Survival => "survival",
        })
    }
}

impl ClinicalOutcome {
    pub fn kind(&self) -> OutcomeKind {
        match self {
            Self::Continuous { .. } => OutcomeKind::Continuous,
            Self::Binary { .. } => OutcomeKind::Binary,
            Self::Ordinal { .. } => OutcomeKind::Ordinal,
            Self::Survival { .. } => OutcomeKind::Survival,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            Self::Continuous { y } => y.len(),
            Self::Binary { y } => y.len(),
            Self::Ordinal { y } => y.len(),
            Self::Survival { time, .. } => time.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Checks the per-kind invariants and that the outcome covers `n` samples.
    pub fn validate(&self, n: usize) -> Result<(), DataError> {
        if self.len() != n {
            return Err(DataError::DimensionMismatch {
                what: "outcome length",
                expected: n,
                found: self.len(),
            });
        }
        match self {
            Self::Continuous { y } => {
                if y.iter().any(|v| !v.is_finite()) {
                    return Err(DataError::InvalidOutcome("non-finite continuous value".into()));
                }
            }
            Self::Binary { y } => {
                if y.iter().any(|&v| v > 1) {
                    return Err(DataError::InvalidOutcome("binary values must be 0 or 1".into()));
                }
                let ones = y.iter().filter(|&&v| v == 1).count();
                if ones == 0 || ones == y.len() {
                    return Err(DataError::InvalidOutcome(
                        "binary outcome needs both classes".into(),
                    ));
                }
            }
            Self::Ordinal { y } => {
                let mut levels = y.clone();
                levels.sort_unstable();
                levels.dedup();
                if levels.len() < 2 {
                    return Err(DataError::InvalidOutcome(
                        "ordinal outcome needs at least two levels".into(),
                    ));
                }
            }
            Self::Survival { time, event } => {
                if event.len() != time.len() {
                    return Err(DataError::DimensionMismatch {
                        what: "survival event indicators",
                        expected: time.len(),
                        found: event.len(),
                    });
                }
                if time.iter().any(|t| !(t.is_finite() && *t > 0.0)) {
                    return Err(DataError::InvalidOutcome(
                        "survival times must be finite and positive".into(),
                    ));
                }
            }
        }
        Ok(())
    }
}

/// Prior hyperparameters and chain length.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hyperparameters {
    pub c: f64,
    pub a_p: f64,
    pub b_p: f64,
    pub a_sigma: f64,
    pub b_sigma: f64,
    pub a_tau_mu0: f64,
    pub b_tau_mu0: f64,
    pub a_tau_mu1: f64,
    pub b_tau_mu1: f64,
    pub a_tau_u0: f64,
    pub b_tau_u0: f64,
    pub a_tau_u1: f64,
    pub b_tau_u1: f64,
    pub k: usize,
    pub n_total: usize,
    pub n_burnin: usize,
}

impl Default for Hyperparameters {
    fn default() -> Self {
        Self {
            c: 1.0,
            a_p: 1.0,
            b_p: 1.0,
            a_sigma: 0.001,
            b_sigma: 0.001,
            a_tau_mu0: 2.0,
            b_tau_mu0: 0.005,
            a_tau_mu1: 4.0,
            b_tau_mu1: 450.0,
            a_tau_u0: 0.001,
            b_tau_u0: 0.001,
            a_tau_u1: 0.001,
            b_tau_u1: 0.001,
            k: 3,
            n_total: 1000,
            n_burnin: 500,
        }
    }
}

impl Hyperparameters {
    pub fn validate(&self) -> Result<(), DataError> {
        let positive = [
            ("c", self.c),
            ("a_p", self.a_p),
            ("b_p", self.b_p),
            ("a_sigma", self.a_sigma),
            ("b_sigma", self.b_sigma),
            ("a_tau_mu0", self.a_tau_mu0),
            ("b_tau_mu0", self.b_tau_mu0),
            ("a_tau_mu1", self.a_tau_mu1),
            ("b_tau_mu1", self.b_tau_mu1),
            ("a_tau_u0", self.a_tau_u0),
            ("b_tau_u0", self.b_tau_u0),
            ("a_tau_u1", self.a_tau_u1),
            ("b_tau_u1", self.b_tau_u1),
        ];
        for (name, value) in positive {
            if !(value.is_finite() && value > 0.0) {
                return Err(DataError::InvalidHyperparameter { name, value });
            }
        }
        // K = 1 is tolerated so BIC curves can include the one-cluster model.
        if self.k < 1 {
            return Err(DataError::InvalidHyperparameter {
                name: "k",
                value: self.k as f64,
            });
        }
        if self.n_burnin >= self.n_total {
            return Err(DataError::InvalidHyperparameter {
                name: "n_burnin",
                value: self.n_burnin as f64,
            });
        }
        Ok(())
    }

    /// Number of post-burn-in iterations.
    pub fn n_retained(&self) -> usize {
        self.n_total - self.n_burnin
    }
}

/// All sampled parameters of one chain. Cluster labels are 0-based
/// internally; reported labels are 1-based.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelState {
    pub pi: Vec<f64>,
    /// G × K cluster means.
    pub mu: Matrix,
    pub sigma2: Vec<f64>,
    pub selected: Vec<bool>,
    pub z: Vec<usize>,
    pub p: f64,
    pub tau2_mu0: f64,
    pub tau2_mu1: f64,
    pub tau2_u0: f64,
    pub tau2_u1: f64,
}

impl ModelState {
    pub fn k(&self) -> usize {
        self.pi.len()
    }

    pub fn n_genes(&self) -> usize {
        self.sigma2.len()
    }

    pub fn n_samples(&self) -> usize {
        self.z.len()
    }

    pub fn n_selected(&self) -> usize {
        self.selected.iter().filter(|&&l| l).count()
    }

    pub fn cluster_sizes(&self) -> Vec<usize> {
        let mut counts = vec![0; self.k()];
        for &z in &self.z {
            counts[z] += 1;
        }
        counts
    }

    pub fn validate(&self) -> Result<(), DataError> {
        let k = self.k();
        if k == 0 {
            return Err(DataError::InvalidState("empty proportion vector".into()));
        }
        let total: f64 = self.pi.iter().sum();
        if (total - 1.0).abs() > 1e-12 || self.pi.iter().any(|&v| !(v > 0.0)) {
            return Err(DataError::InvalidState(format!(
                "pi is not on the open simplex (sum {total})"
            )));
        }
        if self.mu.rows() != self.n_genes() || self.mu.cols() != k {
            return Err(DataError::InvalidState("mu has the wrong shape".into()));
        }
        if self.selected.len() != self.n_genes() {
            return Err(DataError::InvalidState("selection vector has the wrong length".into()));
        }
        if self.sigma2.iter().any(|&v| !(v > 0.0 && v.is_finite())) {
            return Err(DataError::InvalidState("non-positive gene variance".into()));
        }
        for (name, v) in [
            ("tau2_mu0", self.tau2_mu0),
            ("tau2_mu1", self.tau2_mu1),
            ("tau2_u0", self.tau2_u0),
            ("tau2_u1", self.tau2_u1),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(DataError::InvalidState(format!("{name} = {v} is not positive")));
            }
        }
        if !(self.p > 0.0 && self.p < 1.0) {
            return Err(DataError::InvalidState(format!("p = {} outside (0, 1)", self.p)));
        }
        if let Some(&bad) = self.z.iter().find(|&&z| z >= k) {
            return Err(DataError::InvalidState(format!("label {bad} out of range")));
        }
        Ok(())
    }
}
