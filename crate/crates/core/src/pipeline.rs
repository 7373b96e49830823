//! End-to-end commands shared by the command-line tool and the examples:
//! simulate, compute guidance, fit, choose K, evaluate and sweep.

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{ConfigError, RunConfig, SweepAxis};
use crate::data::{standardize_genes, ClinicalOutcome, DataError, ExpressionMatrix, Matrix};
use crate::guidance::{compute_guidance_with, GuidanceError, GuidanceVector};
use crate::inference::{
    bic, canonical_relabel, cluster_decision, local_fdr, select_genes, select_k, ClusterDecision, GeneDecision,
    InferenceError, KSelection,
};
use crate::io::{self, Decisions, IoError};
use crate::metrics::{
    adjusted_rand_index, gene_selection_auc, jaccard_index, silhouette_mean, EvaluationReport, MetricsError,
};
use crate::sampler::{run_gibbs, SamplerError};
use crate::simulation::{simulate_dataset, SimulatedDataset, SimulationError, Truth};
use crate::trace::PosteriorTrace;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Io(#[from] IoError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Guidance(#[from] GuidanceError),
    #[error(transparent)]
    Sampler(#[from] SamplerError),
    #[error(transparent)]
    Inference(#[from] InferenceError),
    #[error(transparent)]
    Simulation(#[from] SimulationError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

fn sampler_code(e: &SamplerError) -> i32 {
    match e {
        SamplerError::Distribution(_) => 3,
        _ => 2,
    }
}

impl PipelineError {
    /// Process exit status: 1 usage, 2 data or validation, 3 numerical.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Usage(_) | Self::Config(_) => 1,
            Self::Io(_) | Self::Data(_) | Self::Metrics(_) => 2,
            Self::Guidance(e) => match e {
                GuidanceError::NonConvergence { .. }
                | GuidanceError::SeparationDetected { .. }
                | GuidanceError::DegenerateRange => 3,
                _ => 2,
            },
            Self::Sampler(e) => sampler_code(e),
            Self::Inference(e) => match e {
                InferenceError::Chain { source, .. } => sampler_code(source),
                _ => 2,
            },
            Self::Simulation(e) => match e {
                SimulationError::InvalidConfig { .. } | SimulationError::Data(_) => 2,
                _ => 3,
            },
        }
    }
}

/// Where the guidance term comes from.
#[derive(Debug, Clone, PartialEq)]
pub enum GuidanceSource {
    None,
    /// Computed per gene from this outcome.
    Outcome(ClinicalOutcome),
    /// Precomputed values aligned to the input genes.
    Values(Vec<f64>),
}

/// Optional low-expression filter followed by per-gene standardisation.
pub fn prepare_expression(raw: &ExpressionMatrix, cfg: &RunConfig) -> Result<ExpressionMatrix, PipelineError> {
    let kept = if cfg.filter_fraction > 0.0 {
        crate::data::filter_low_expression(raw, cfg.filter_fraction)?
    } else {
        raw.clone()
    };
    Ok(standardize_genes(&kept)?)
}

/// Values for the genes of `expr`, looked up by identifier in `source_ids`.
fn align_by_id(values: &[f64], source_ids: &[String], expr: &ExpressionMatrix) -> Result<Vec<f64>, PipelineError> {
    if values.len() != source_ids.len() {
        return Err(DataError::DimensionMismatch {
            what: "guidance values",
            expected: source_ids.len(),
            found: values.len(),
        }
        .into());
    }
    let index: HashMap<&str, usize> = source_ids.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();
    expr.gene_ids()
        .iter()
        .map(|id| {
            index
                .get(id.as_str())
                .map(|&i| values[i])
                .ok_or_else(|| PipelineError::Usage(format!("no guidance value for gene `{id}`")))
        })
        .collect()
}

/// Guidance for the genes of `expr` (already standardised).
pub fn guidance_for(
    expr: &ExpressionMatrix,
    raw_gene_ids: &[String],
    source: &GuidanceSource,
    cfg: &RunConfig,
) -> Result<Option<GuidanceVector>, PipelineError> {
    if !cfg.guided {
        return Ok(None);
    }
    match source {
        GuidanceSource::None => Err(PipelineError::Usage(
            "a guided fit needs a clinical outcome or a guidance file (or pass --no-guidance)".into(),
        )),
        GuidanceSource::Outcome(o) => {
            if o.kind() != cfg.outcome_kind {
                log::warn!("outcome is {} but outcome_kind is {}", o.kind(), cfg.outcome_kind);
            }
            Ok(Some(compute_guidance_with(expr, o, cfg.guidance_measure)?))
        }
        GuidanceSource::Values(v) => {
            let u = align_by_id(v, raw_gene_ids, expr)?;
            Ok(Some(GuidanceVector::from_values(u, cfg.outcome_kind)))
        }
    }
}

/// Result of one fit.
#[derive(Debug, Clone)]
pub struct FitResult {
    /// Standardised matrix the chain ran on.
    pub expr: ExpressionMatrix,
    pub guidance: Option<GuidanceVector>,
    pub trace: PosteriorTrace,
    pub genes: GeneDecision,
    /// Canonically relabelled cluster decision.
    pub clusters: ClusterDecision,
    pub bic: f64,
}

impl FitResult {
    pub fn decisions(&self, cfg: &RunConfig) -> Decisions {
        Decisions::new(
            self.trace.k(),
            self.trace.guided(),
            cfg.selection(),
            &self.genes,
            &self.clusters,
            self.bic,
            self.expr.gene_ids(),
            self.expr.sample_ids(),
        )
    }
}

/// Standardise, compute or align guidance, run the chain and make the
/// decisions.
pub fn fit(raw: &ExpressionMatrix, source: &GuidanceSource, cfg: &RunConfig) -> Result<FitResult, PipelineError> {
    let expr = prepare_expression(raw, cfg)?;
    fit_prepared(expr, raw.gene_ids(), source, cfg)
}

/// [`fit`] on an already standardised matrix.
pub fn fit_prepared(
    expr: ExpressionMatrix,
    raw_gene_ids: &[String],
    source: &GuidanceSource,
    cfg: &RunConfig,
) -> Result<FitResult, PipelineError> {
    let guidance = guidance_for(&expr, raw_gene_ids, source, cfg)?;
    let gibbs = cfg.gibbs();
    let trace = run_gibbs(&expr, guidance.as_ref().map(|g| &g.u[..]), &gibbs)?;
    let p = local_fdr(&trace)?;
    let genes = select_genes(&p, cfg.selection())?;
    let clusters = canonical_relabel(&cluster_decision(&trace)?);
    let bic = bic(&expr, &trace, cfg.bic_penalty)?;
    Ok(FitResult {
        expr,
        guidance,
        trace,
        genes,
        clusters,
        bic,
    })
}

/// Writes a fit directory: `decisions.json`, `labels.tsv`,
/// `selected_genes.txt`, `guidance.tsv` when guidance was used, and the
/// trace under `trace/`.
pub fn write_fit(dir: &Path, result: &FitResult, cfg: &RunConfig) -> Result<Decisions, PipelineError> {
    let decisions = result.decisions(cfg);
    io::write_json(&dir.join("decisions.json"), &decisions)?;
    io::write_labels(&dir.join("labels.tsv"), result.expr.sample_ids(), &result.clusters.labels)?;
    let mut genes = decisions.selected_ids().join("\n");
    if !genes.is_empty() {
        genes.push('\n');
    }
    io::write_text(&dir.join("selected_genes.txt"), &genes)?;
    if let Some(g) = &result.guidance {
        io::write_guidance(&dir.join("guidance.tsv"), result.expr.gene_ids(), &g.u)?;
    }
    io::write_trace_dir(&dir.join("trace"), &result.trace, result.expr.gene_ids(), result.expr.sample_ids())?;
    Ok(decisions)
}

/// Ground truth as stored in `truth.json`: the index-based truth plus the
/// identifiers needed to match it against a fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthFile {
    pub sample_ids: Vec<String>,
    pub intrinsic_genes: Vec<String>,
    pub disease_labels: Vec<usize>,
    pub truth: Truth,
}

impl TruthFile {
    pub fn new(ds: &SimulatedDataset) -> Self {
        let ids = ds.expr.gene_ids();
        Self {
            sample_ids: ds.expr.sample_ids().to_vec(),
            intrinsic_genes: ds.truth.intrinsic.iter().map(|&g| ids[g].clone()).collect(),
            disease_labels: ds.truth.disease_labels.clone(),
            truth: ds.truth.clone(),
        }
    }
}

pub fn simulate(cfg: &RunConfig) -> Result<SimulatedDataset, PipelineError> {
    Ok(simulate_dataset(&cfg.simulation())?)
}

/// Writes `expression.tsv`, `outcome.tsv` and `truth.json`.
pub fn write_simulation(dir: &Path, ds: &SimulatedDataset) -> Result<(), PipelineError> {
    io::write_expression(&dir.join("expression.tsv"), &ds.expr)?;
    io::write_outcome(
        &dir.join("outcome.tsv"),
        ds.expr.sample_ids(),
        &ClinicalOutcome::Continuous { y: ds.outcome.clone() },
    )?;
    io::write_json(&dir.join("truth.json"), &TruthFile::new(ds))?;
    Ok(())
}

/// Reference against which a fit is scored.
#[derive(Debug, Clone, Copy)]
pub enum Reference<'a> {
    Truth(&'a TruthFile),
    /// Externally supplied labels aligned to the fit's samples (real data).
    Labels(&'a [usize]),
    None,
}

fn labels_by_id(ids: &[String], labels: &[usize], wanted: &[String]) -> Result<Vec<usize>, PipelineError> {
    let map: HashMap<&str, usize> = ids.iter().map(String::as_str).zip(labels.iter().copied()).collect();
    wanted
        .iter()
        .map(|id| {
            map.get(id.as_str())
                .copied()
                .ok_or_else(|| PipelineError::Usage(format!("reference has no label for sample `{id}`")))
        })
        .collect()
}

/// Scores a fit. ARI needs reference labels; Jaccard and AUC need the true
/// intrinsic set; silhouette needs the expression matrix (it is computed on
/// the standardised selected genes).
pub fn evaluate(
    decisions: &Decisions,
    reference: Reference<'_>,
    expr: Option<&ExpressionMatrix>,
) -> Result<EvaluationReport, PipelineError> {
    let labels = decisions.labels();
    let sample_ids: Vec<String> = decisions.samples.iter().map(|s| s.id.clone()).collect();
    let mut report = EvaluationReport {
        n_selected: decisions.n_selected,
        ..Default::default()
    };
    match reference {
        Reference::Truth(t) => {
            let truth_labels = labels_by_id(&t.sample_ids, &t.disease_labels, &sample_ids)?;
            report.ari = Some(adjusted_rand_index(&labels, &truth_labels)?);
            let intrinsic: std::collections::HashSet<&str> = t.intrinsic_genes.iter().map(String::as_str).collect();
            let flags: Vec<bool> = decisions.genes.iter().map(|g| intrinsic.contains(g.id.as_str())).collect();
            let truth_set: Vec<usize> = (0..flags.len()).filter(|&g| flags[g]).collect();
            report.jaccard = match jaccard_index(&decisions.selected(), &truth_set) {
                Ok(j) => Some(j),
                Err(MetricsError::BothEmpty) => None,
                Err(e) => return Err(e.into()),
            };
            report.auc = Some(gene_selection_auc(&decisions.local_fdr(), &flags)?);
        }
        Reference::Labels(l) => {
            report.ari = Some(adjusted_rand_index(&labels, l)?);
        }
        Reference::None => {}
    }
    if let Some(expr) = expr {
        report.silhouette_mean = silhouette_on_selected(decisions, expr)?;
    }
    Ok(report)
}

/// Mean silhouette of the fit's labels over its selected genes; `None` when
/// no gene is selected or only one cluster is occupied.
pub fn silhouette_on_selected(decisions: &Decisions, expr: &ExpressionMatrix) -> Result<Option<f64>, PipelineError> {
    let std = if expr.is_standardized() {
        expr.clone()
    } else {
        standardize_genes(expr)?
    };
    let index: HashMap<&str, usize> = std.gene_ids().iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();
    let rows: Vec<usize> = decisions
        .selected_ids()
        .iter()
        .map(|id| {
            index
                .get(id.as_str())
                .copied()
                .ok_or_else(|| PipelineError::Usage(format!("selected gene `{id}` missing from the expression file")))
        })
        .collect::<Result<_, _>>()?;
    if rows.is_empty() {
        return Ok(None);
    }
    let sample_ids: Vec<String> = decisions.samples.iter().map(|s| s.id.clone()).collect();
    let labels = labels_by_id(&sample_ids, &decisions.labels(), std.sample_ids())?;
    let sub: Matrix = std.values().select_rows(&rows);
    match silhouette_mean(&sub, &labels) {
        Ok(s) => Ok(Some(s)),
        Err(MetricsError::SingleCluster) => Ok(None),
        Err(e) => Err(e.into()),
    }
}

/// BIC over the configured K range.
pub fn choose_k(raw: &ExpressionMatrix, source: &GuidanceSource, cfg: &RunConfig) -> Result<KSelection, PipelineError> {
    let expr = prepare_expression(raw, cfg)?;
    let guidance = guidance_for(&expr, raw.gene_ids(), source, cfg)?;
    let range = cfg.k_range();
    if range.is_empty() {
        return Err(PipelineError::Usage("k_min exceeds k_max".into()));
    }
    Ok(select_k(
        &expr,
        guidance.as_ref().map(|g| &g.u[..]),
        &cfg.gibbs(),
        &range,
        cfg.bic_penalty,
    )?)
}

/// One row of a sensitivity sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub axis: SweepAxis,
    pub value: f64,
    pub report: EvaluationReport,
}

pub const SWEEP_TSV_HEADER: &str = "axis\tvalue\tari\tjaccard\tauc\tsilhouette_mean\tn_selected";

impl SweepRow {
    pub fn tsv_row(&self) -> String {
        format!("{}\t{}\t{}", self.axis.name(), io::fmt_f64(self.value), self.report.tsv_row())
    }
}

/// Fits and scores the data once per grid point of the configured axis,
/// with the same seed throughout. Guidance is computed once.
pub fn sweep(
    raw: &ExpressionMatrix,
    source: &GuidanceSource,
    reference: Reference<'_>,
    cfg: &RunConfig,
) -> Result<Vec<SweepRow>, PipelineError> {
    let expr = prepare_expression(raw, cfg)?;
    let guidance = guidance_for(&expr, raw.gene_ids(), source, cfg)?;
    let fixed = match &guidance {
        Some(g) => GuidanceSource::Values(g.u.clone()),
        None => GuidanceSource::None,
    };
    let mut rows = Vec::new();
    for value in cfg.sweep_grid() {
        let mut point = cfg.clone();
        let mut h = point.hyperparameters();
        cfg.sweep_axis.set(&mut h, value);
        point.a_tau_mu0 = h.a_tau_mu0;
        point.b_tau_mu0 = h.b_tau_mu0;
        point.a_tau_mu1 = h.a_tau_mu1;
        point.b_tau_mu1 = h.b_tau_mu1;
        let result = fit_prepared(expr.clone(), expr.gene_ids(), &fixed, &point)?;
        let report = evaluate(&result.decisions(&point), reference, None)?;
        log::info!("{} = {value}: {}", cfg.sweep_axis.name(), report.tsv_row());
        rows.push(SweepRow {
            axis: cfg.sweep_axis,
            value,
            report,
        });
    }
    Ok(rows)
}

pub fn sweep_tsv(rows: &[SweepRow]) -> String {
    let mut out = String::from(SWEEP_TSV_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&r.tsv_row());
        out.push('\n');
    }
    out
}
