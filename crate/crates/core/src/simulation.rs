//! Synthetic benchmark: disease subtypes defined by correlated intrinsic gene
//! modules, a noisy continuous outcome tied to the subtypes, confounder
//! partitions driving their own gene modules, and unstructured noise genes.
//!
//! Output is raw (not standardised) expression; gene order is intrinsic,
//! confounder, noise.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{DataError, ExpressionMatrix, Matrix};
use crate::distributions::{self as dist, DistError, Domain, MvNormal, RngStream};

#[derive(Debug, Error)]
pub enum SimulationError {
    #[error(transparent)]
    Distribution(#[from] DistError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error("invalid simulation setting `{name}`: {reason}")]
    InvalidConfig { name: &'static str, reason: String },
    #[error("a subtype drew zero subjects in {attempts} attempts")]
    DegenerateClusterSizes { attempts: usize },
    #[error("module covariance not positive definite after {attempts} attempts")]
    NotPositiveDefinite { attempts: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimulationConfig {
    pub k: usize,
    pub subjects_per_cluster_mean: f64,
    pub n_modules: usize,
    pub module_size_mean: f64,
    pub n_confounders: usize,
    pub modules_per_confounder: usize,
    pub n_noise: usize,
    /// Template noise around α·θ.
    pub sigma0: f64,
    /// Biological variation around the template.
    pub sigma1: f64,
    /// Outcome noise.
    pub sigma2: f64,
    /// Noise-gene standard deviation.
    pub sigma3: f64,
    pub fold_change_lo: f64,
    pub fold_change_hi: f64,
    pub wishart_nu: f64,
    /// φ = mix·I + (1 − mix)·J.
    pub wishart_phi_mix: f64,
    pub noise_mean_lo: f64,
    pub noise_mean_hi: f64,
    pub seed: u64,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        Self {
            k: 3,
            subjects_per_cluster_mean: 100.0,
            n_modules: 20,
            module_size_mean: 20.0,
            n_confounders: 4,
            modules_per_confounder: 20,
            n_noise: 3000,
            sigma0: 1.0,
            sigma1: 3.0,
            sigma2: 6.0,
            sigma3: 1.0,
            fold_change_lo: 0.2,
            fold_change_hi: 2.0,
            wishart_nu: 60.0,
            wishart_phi_mix: 0.5,
            noise_mean_lo: 4.0,
            noise_mean_hi: 8.0,
            seed: 1,
        }
    }
}

/// Baseline level of (1-based) subtype `k`: θ_k = 2 + 2k.
pub fn baseline(k: usize) -> f64 {
    2.0 + 2.0 * k as f64
}

impl SimulationConfig {
    pub fn validate(&self) -> Result<(), SimulationError> {
        let bad = |name, reason: &str| {
            Err(SimulationError::InvalidConfig {
                name,
                reason: reason.to_string(),
            })
        };
        if self.k < 1 {
            return bad("k", "must be at least 1");
        }
        if self.n_modules < 1 {
            return bad("n_modules", "must be at least 1");
        }
        for (name, v) in [
            ("subjects_per_cluster_mean", self.subjects_per_cluster_mean),
            ("module_size_mean", self.module_size_mean),
            ("sigma0", self.sigma0),
            ("sigma1", self.sigma1),
            ("sigma2", self.sigma2),
            ("sigma3", self.sigma3),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return bad(name, "must be positive");
            }
        }
        if !(self.fold_change_lo >= 0.0 && self.fold_change_hi > self.fold_change_lo) {
            return bad("fold_change_hi", "need 0 <= lo < hi");
        }
        if !(self.noise_mean_hi > self.noise_mean_lo) {
            return bad("noise_mean_hi", "need lo < hi");
        }
        if !(self.wishart_phi_mix > 0.0 && self.wishart_phi_mix <= 1.0) {
            return bad("wishart_phi_mix", "must lie in (0, 1]");
        }
        if !(self.wishart_nu.is_finite() && self.wishart_nu > 0.0) {
            return bad("wishart_nu", "must be positive");
        }
        Ok(())
    }

    /// Number of genes the configuration yields on average.
    pub fn expected_genes(&self) -> f64 {
        (self.n_modules + self.n_confounders * self.modules_per_confounder) as f64 * self.module_size_mean
            + self.n_noise as f64
    }
}

/// Ground truth recorded alongside a simulated dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Truth {
    /// 0-based indices of intrinsic genes.
    pub intrinsic: Vec<usize>,
    /// 0-based indices of genes driven by each confounder.
    pub confounder_genes: Vec<Vec<usize>>,
    /// 0-based indices of noise genes.
    pub noise: Vec<usize>,
    /// Disease subtype per sample, 1..K.
    pub disease_labels: Vec<usize>,
    /// Per confounder, subclass per sample, 1..K.
    pub confounder_labels: Vec<Vec<usize>>,
    pub intrinsic_module_sizes: Vec<usize>,
}

impl Truth {
    pub fn n_genes(&self) -> usize {
        self.intrinsic.len() + self.confounder_genes.iter().map(Vec::len).sum::<usize>() + self.noise.len()
    }

    /// Per-gene intrinsic flags.
    pub fn intrinsic_flags(&self) -> Vec<bool> {
        let mut f = vec![false; self.n_genes()];
        for &g in &self.intrinsic {
            f[g] = true;
        }
        f
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedDataset {
    pub expr: ExpressionMatrix,
    pub outcome: Vec<f64>,
    pub truth: Truth,
}

fn phi_matrix(d: usize, mix: f64) -> DMatrix<f64> {
    DMatrix::from_fn(d, d, |i, j| if i == j { 1.0 } else { 1.0 - mix })
}

/// Draws Σ' ~ W⁻¹(φ, ν) and rescales it to unit diagonal,
/// Σ = D^{-1/2} Σ' D^{-1/2}. Draws that are not numerically positive definite
/// are retried on a fresh substream, up to five times.
pub fn sample_module_correlation(
    size: usize,
    cfg: &SimulationConfig,
    stream: &RngStream,
) -> Result<DMatrix<f64>, SimulationError> {
    module_correlation(size, cfg, stream).map(|(corr, _)| corr)
}

fn module_correlation(
    size: usize,
    cfg: &SimulationConfig,
    stream: &RngStream,
) -> Result<(DMatrix<f64>, MvNormal), SimulationError> {
    const ATTEMPTS: usize = 5;
    let phi = phi_matrix(size, cfg.wishart_phi_mix);
    for attempt in 0..ATTEMPTS {
        let mut rng = stream.child(Domain::Attempt, attempt as u64).rng();
        let raw = match dist::inverse_wishart(&mut rng, &phi, cfg.wishart_nu) {
            Ok(m) => m,
            Err(DistError::NotPositiveDefinite) => continue,
            Err(e) => return Err(e.into()),
        };
        let d: Vec<f64> = (0..size).map(|i| raw[(i, i)].sqrt()).collect();
        let mut corr = DMatrix::from_fn(size, size, |i, j| raw[(i, j)] / (d[i] * d[j]));
        for i in 0..size {
            corr[(i, i)] = 1.0;
        }
        if let Ok(mvn) = MvNormal::new(&vec![0.0; size], &corr) {
            return Ok((corr, mvn));
        }
    }
    Err(SimulationError::NotPositiveDefinite { attempts: ATTEMPTS })
}

/// Generates one correlated module: `size` genes × N samples.
///
/// `templates[k]` is the template level μ_k of cluster `k` (0-based) and
/// `labels[i]` the 0-based cluster of sample `i`. Each cluster gets its own
/// correlation matrix; each sample draws a subject-level shift
/// X' ~ N(μ_k, σ₁²) and then the gene vector ~ MVN(X'·1, Σ_k).
pub fn simulate_correlated_module(
    templates: &[f64],
    size: usize,
    labels: &[usize],
    cfg: &SimulationConfig,
    stream: &RngStream,
) -> Result<Matrix, SimulationError> {
    if size == 0 {
        return Err(SimulationError::InvalidConfig {
            name: "module size",
            reason: "must be at least 1".into(),
        });
    }
    if !(cfg.wishart_nu > size as f64 - 1.0) {
        return Err(DistError::InvalidDof {
            dof: cfg.wishart_nu,
            dim: size,
        }
        .into());
    }
    let mvns: Vec<MvNormal> = (0..templates.len())
        .map(|k| module_correlation(size, cfg, &stream.child(Domain::Subtype, k as u64)).map(|(_, m)| m))
        .collect::<Result<_, _>>()?;
    let n = labels.len();
    let mut block = Matrix::zeros(size, n);
    for (i, &k) in labels.iter().enumerate() {
        let mut rng = stream.child(Domain::Sample, i as u64).rng();
        let shift = dist::normal(&mut rng, templates[k], cfg.sigma1 * cfg.sigma1)?;
        let v = mvns[k].sample(&mut rng);
        for (g, vg) in v.into_iter().enumerate() {
            block.set(g, i, shift + vg);
        }
    }
    Ok(block)
}

fn module_size(cfg: &SimulationConfig, stream: &RngStream) -> Result<usize, SimulationError> {
    let mut rng = stream.rng();
    // A zero-gene module is meaningless; redraw.
    for _ in 0..1000 {
        let s = dist::poisson(&mut rng, cfg.module_size_mean)? as usize;
        if s > 0 {
            if !(cfg.wishart_nu > s as f64 - 1.0) {
                return Err(SimulationError::InvalidConfig {
                    name: "wishart_nu",
                    reason: format!("module of {s} genes needs dof > {}", s - 1),
                });
            }
            return Ok(s);
        }
    }
    Err(SimulationError::InvalidConfig {
        name: "module_size_mean",
        reason: "module sizes kept drawing zero".into(),
    })
}

/// Template levels μ_k = α·θ_k + N(0, σ₀²) for one module.
fn module_templates(k: usize, cfg: &SimulationConfig, stream: &RngStream) -> Result<Vec<f64>, SimulationError> {
    let mut rng = stream.rng();
    let alpha = dist::uniform_two_sided(&mut rng, cfg.fold_change_lo, cfg.fold_change_hi)?;
    (1..=k)
        .map(|c| Ok(alpha * baseline(c) + cfg.sigma0 * dist::standard_normal(&mut rng)))
        .collect()
}

struct ModuleSpec {
    stream: RngStream,
    size: usize,
    /// index into `partitions` (0 = disease, v + 1 = confounder v)
    partition: usize,
}

/// Generates the full benchmark dataset.
pub fn simulate_dataset(cfg: &SimulationConfig) -> Result<SimulatedDataset, SimulationError> {
    cfg.validate()?;
    let root = RngStream::new(cfg.seed);
    let k = cfg.k;

    // (a1) subtype sizes
    const SIZE_ATTEMPTS: usize = 10;
    let mut sizes = None;
    for attempt in 0..SIZE_ATTEMPTS {
        let mut rng = root.child(Domain::ClusterSizes, attempt as u64).rng();
        let draw: Vec<usize> = (0..k)
            .map(|_| dist::poisson(&mut rng, cfg.subjects_per_cluster_mean).map(|v| v as usize))
            .collect::<Result<_, _>>()?;
        if draw.iter().all(|&s| s > 0) {
            sizes = Some(draw);
            break;
        }
    }
    let sizes = sizes.ok_or(SimulationError::DegenerateClusterSizes {
        attempts: SIZE_ATTEMPTS,
    })?;
    let disease: Vec<usize> = sizes
        .iter()
        .enumerate()
        .flat_map(|(c, &s)| std::iter::repeat_n(c, s))
        .collect();
    let n = disease.len();
    if n < 2 {
        return Err(SimulationError::DegenerateClusterSizes {
            attempts: SIZE_ATTEMPTS,
        });
    }

    // (c2) confounder partitions, uniform over K subclasses
    let confounder_parts: Vec<Vec<usize>> = (0..cfg.n_confounders)
        .map(|v| {
            let mut rng = root.child(Domain::Confounder, v as u64).child(Domain::Partition, 0).rng();
            (0..n).map(|_| rand::Rng::random_range(&mut rng, 0..k)).collect()
        })
        .collect();
    let mut partitions = vec![disease.clone()];
    partitions.extend(confounder_parts.iter().cloned());

    // (a2, c1) module layout
    let mut specs = Vec::new();
    for m in 0..cfg.n_modules {
        let stream = root.child(Domain::Module, m as u64);
        specs.push(ModuleSpec {
            size: module_size(cfg, &stream.child(Domain::Init, 0))?,
            stream,
            partition: 0,
        });
    }
    for v in 0..cfg.n_confounders {
        for r in 0..cfg.modules_per_confounder {
            let stream = root.child(Domain::Confounder, v as u64).child(Domain::Module, r as u64);
            specs.push(ModuleSpec {
                size: module_size(cfg, &stream.child(Domain::Init, 0))?,
                stream,
                partition: v + 1,
            });
        }
    }

    // (a3–a6, c3–c5) module blocks
    let blocks: Vec<Matrix> = specs
        .par_iter()
        .map(|spec| {
            let templates = module_templates(k, cfg, &spec.stream.child(Domain::Init, 1))?;
            simulate_correlated_module(
                &templates,
                spec.size,
                &partitions[spec.partition],
                cfg,
                &spec.stream.child(Domain::Sample, 0),
            )
        })
        .collect::<Result<_, _>>()?;

    // (d) noise genes
    let noise_rows: Vec<Vec<f64>> = (0..cfg.n_noise)
        .into_par_iter()
        .map(|g| {
            let mut rng = root.child(Domain::Noise, g as u64).rng();
            let centre = dist::uniform(&mut rng, cfg.noise_mean_lo, cfg.noise_mean_hi)?;
            (0..n)
                .map(|_| Ok(centre + cfg.sigma3 * dist::standard_normal(&mut rng)))
                .collect::<Result<Vec<f64>, SimulationError>>()
        })
        .collect::<Result<_, _>>()?;

    // (b1) outcome
    let mut rng = root.child(Domain::Outcome, 0).rng();
    let outcome: Vec<f64> = disease
        .iter()
        .map(|&c| dist::normal(&mut rng, baseline(c + 1), cfg.sigma2 * cfg.sigma2))
        .collect::<Result<_, _>>()?;

    // assembly
    let total = blocks.iter().map(Matrix::rows).sum::<usize>() + noise_rows.len();
    let mut data = Vec::with_capacity(total * n);
    let mut intrinsic = Vec::new();
    let mut confounder_genes = vec![Vec::new(); cfg.n_confounders];
    let mut intrinsic_module_sizes = Vec::new();
    let mut row = 0usize;
    for (spec, block) in specs.iter().zip(&blocks) {
        data.extend_from_slice(block.as_slice());
        let idx = row..row + block.rows();
        if spec.partition == 0 {
            intrinsic.extend(idx);
            intrinsic_module_sizes.push(block.rows());
        } else {
            confounder_genes[spec.partition - 1].extend(idx);
        }
        row += block.rows();
    }
    let noise: Vec<usize> = (row..row + noise_rows.len()).collect();
    for r in &noise_rows {
        data.extend_from_slice(r);
    }
    let values = Matrix::from_vec(total, n, data)?;
    let gene_ids = (1..=total).map(|g| format!("gene{g}")).collect();
    let sample_ids = (1..=n).map(|i| format!("sample{i}")).collect();
    let expr = ExpressionMatrix::new(values, gene_ids, sample_ids)?;

    Ok(SimulatedDataset {
        expr,
        outcome,
        truth: Truth {
            intrinsic,
            confounder_genes,
            noise,
            disease_labels: disease.iter().map(|c| c + 1).collect(),
            confounder_labels: confounder_parts
                .iter()
                .map(|p| p.iter().map(|c| c + 1).collect())
                .collect(),
            intrinsic_module_sizes,
        },
    })
}
