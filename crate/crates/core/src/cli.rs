//! Command-line front end.
//!
//! ```text
//! gbclust [--config FILE] [--set KEY=VALUE]... [flags] <command> ...
//! ```
//!
//! Every command resolves its configuration (flags over file over defaults)
//! and writes it as `config.txt` into its output location before doing any
//! work. Exit status: 0 success, 1 usage, 2 data or validation, 3 numerical.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::config::{RunConfig, SweepAxis};
use crate::data::{ClinicalOutcome, ExpressionMatrix, OutcomeKind};
use crate::io::{self, Decisions};
use crate::metrics::{aggregate_reports, EvaluationReport};
use crate::pipeline::{self, GuidanceSource, PipelineError, Reference, TruthFile};

#[derive(Debug, Parser)]
#[command(name = "gbclust", version, about = "Outcome-guided sparse Bayesian clustering")]
pub struct Cli {
    #[command(flatten)]
    pub overrides: Overrides,
    #[command(subcommand)]
    pub command: Command,
}

/// Flags that override the configuration file.
#[derive(Debug, Args, Default)]
pub struct Overrides {
    /// Flat `key = value` configuration file.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Set any configuration key; repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Replicate index; derives the effective seed from --seed.
    #[arg(long, global = true)]
    pub replicate: Option<u64>,
    /// Number of clusters (and simulated subtypes).
    #[arg(long, global = true)]
    pub k: Option<usize>,
    /// Total Gibbs iterations.
    #[arg(long, global = true)]
    pub nt: Option<usize>,
    /// Burn-in iterations.
    #[arg(long, global = true)]
    pub nb: Option<usize>,
    /// Select genes with local FDR at most this value.
    #[arg(long, global = true)]
    pub fdr: Option<f64>,
    /// Select exactly this many genes instead.
    #[arg(long = "top-m", global = true)]
    pub top_m: Option<usize>,
    /// Fit the unguided baseline.
    #[arg(long = "no-guidance", global = true)]
    pub no_guidance: bool,
    #[arg(long = "outcome-kind", global = true, value_parser = parse_from_str::<OutcomeKind>)]
    pub outcome_kind: Option<OutcomeKind>,
    #[arg(long = "sweep-axis", global = true, value_parser = parse_from_str::<SweepAxis>)]
    pub sweep_axis: Option<SweepAxis>,
    /// Biological variation of simulated subjects.
    #[arg(long, global = true)]
    pub sigma1: Option<f64>,
}

fn parse_from_str<T: std::str::FromStr<Err = String>>(s: &str) -> Result<T, String> {
    s.parse()
}

/// Input data: either a directory written by `simulate` or explicit files.
#[derive(Debug, Args, Clone, Default)]
pub struct DataArgs {
    /// Directory holding expression.tsv, outcome.tsv and truth.json.
    #[arg(long, value_name = "DIR")]
    pub data: Option<PathBuf>,
    /// Genes × samples expression table.
    #[arg(long, value_name = "FILE")]
    pub expression: Option<PathBuf>,
    /// Clinical table with a sample id column.
    #[arg(long, value_name = "FILE")]
    pub clinical: Option<PathBuf>,
    /// Precomputed guidance (gene_id, u).
    #[arg(long, value_name = "FILE")]
    pub guidance: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate a benchmark dataset.
    Simulate {
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
    },
    /// Compute the per-gene guidance term.
    Guidance {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
    },
    /// Run the sampler and write decisions and trace summaries.
    Fit {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
    },
    /// Choose K by BIC over k_min..=k_max.
    SelectK {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
    },
    /// Score one or more fit directories; several are aggregated.
    Evaluate {
        /// Fit output directory; repeatable.
        #[arg(long = "fit", value_name = "DIR", required = true)]
        fits: Vec<PathBuf>,
        /// truth.json from `simulate`.
        #[arg(long, value_name = "FILE")]
        truth: Option<PathBuf>,
        /// Reference labels (sample_id, label) for real data.
        #[arg(long = "reference-labels", value_name = "FILE")]
        reference_labels: Option<PathBuf>,
        /// Expression table, for silhouette widths.
        #[arg(long, value_name = "FILE")]
        expression: Option<PathBuf>,
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
    },
    /// Vary one prior hyperparameter over a grid on fixed data.
    Sweep {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long, value_name = "FILE")]
        truth: Option<PathBuf>,
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
    },
}

impl Overrides {
    /// Defaults, then the file, then `--set`, then dedicated flags.
    pub fn resolve(&self) -> Result<RunConfig, PipelineError> {
        let mut cfg = RunConfig::default();
        if let Some(path) = &self.config {
            let text = fs::read_to_string(path)
                .map_err(|e| PipelineError::Usage(format!("{}: {e}", path.display())))?;
            cfg.apply_text(&text)?;
        }
        for kv in &self.set {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| PipelineError::Usage(format!("--set expects KEY=VALUE, got `{kv}`")))?;
            cfg.set(k.trim(), v.trim())?;
        }
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(v) = self.replicate {
            cfg.replicate = v;
        }
        if let Some(v) = self.k {
            cfg.k = v;
        }
        if let Some(v) = self.nt {
            cfg.nt = v;
        }
        if let Some(v) = self.nb {
            cfg.nb = v;
        }
        if let Some(v) = self.fdr {
            cfg.fdr = v;
            cfg.top_m = 0;
        }
        if let Some(v) = self.top_m {
            cfg.top_m = v;
        }
        if self.no_guidance {
            cfg.guided = false;
        }
        if let Some(v) = self.outcome_kind {
            cfg.outcome_kind = v;
        }
        if let Some(v) = self.sweep_axis {
            cfg.sweep_axis = v;
        }
        if let Some(v) = self.sigma1 {
            cfg.sigma1 = v;
        }
        Ok(cfg)
    }
}

struct Loaded {
    raw: ExpressionMatrix,
    source: GuidanceSource,
    truth: Option<TruthFile>,
}

fn load(data: &DataArgs, cfg: &RunConfig, need_guidance: bool) -> Result<Loaded, PipelineError> {
    let dir_file = |name: &str| data.data.as_ref().map(|d| d.join(name));
    let expression = data
        .expression
        .clone()
        .or_else(|| dir_file("expression.tsv"))
        .ok_or_else(|| PipelineError::Usage("pass --expression or --data".into()))?;
    let raw = io::read_expression(&expression)?;
    let truth = match dir_file("truth.json") {
        Some(p) if p.exists() => Some(io::read_json::<TruthFile>(&p)?),
        _ => None,
    };
    let source = if !need_guidance {
        GuidanceSource::None
    } else if let Some(g) = &data.guidance {
        GuidanceSource::Values(io::read_guidance(g, raw.gene_ids())?)
    } else if let Some(c) = data.clinical.clone().or_else(|| dir_file("outcome.tsv")) {
        let outcome = io::read_outcome(&c, cfg.outcome_kind, &cfg.clinical_columns(), raw.sample_ids())?;
        GuidanceSource::Outcome(outcome)
    } else {
        GuidanceSource::None
    };
    Ok(Loaded { raw, source, truth })
}

fn write_config(dir: &Path, cfg: &RunConfig) -> Result<(), PipelineError> {
    io::write_text(&dir.join("config.txt"), &cfg.to_text())?;
    Ok(())
}

fn write_report(dir: &Path, name: &str, report: &EvaluationReport) -> Result<(), PipelineError> {
    io::write_json(&dir.join(format!("{name}.json")), report)?;
    io::write_text(
        &dir.join(format!("{name}.tsv")),
        &format!("{}\n{}\n", EvaluationReport::TSV_HEADER, report.tsv_row()),
    )?;
    Ok(())
}

fn run_command(command: &Command, cfg: &RunConfig) -> Result<(), PipelineError> {
    match command {
        Command::Simulate { out } => {
            write_config(out, cfg)?;
            let ds = pipeline::simulate(cfg)?;
            pipeline::write_simulation(out, &ds)?;
            log::info!("simulated {} genes × {} samples into {}", ds.expr.n_genes(), ds.expr.n_samples(), out.display());
        }
        Command::Guidance { data, out } => {
            write_config(out, cfg)?;
            let loaded = load(data, cfg, true)?;
            let outcome: ClinicalOutcome = match loaded.source {
                GuidanceSource::Outcome(o) => o,
                _ => return Err(PipelineError::Usage("guidance needs --clinical or --data".into())),
            };
            let expr = pipeline::prepare_expression(&loaded.raw, cfg)?;
            let g = crate::guidance::compute_guidance_with(&expr, &outcome, cfg.guidance_measure)?;
            io::write_guidance(&out.join("guidance.tsv"), expr.gene_ids(), &g.u)?;
            if !g.failed.is_empty() {
                let ids: Vec<&str> = g.failed.iter().map(|&i| expr.gene_ids()[i].as_str()).collect();
                io::write_text(&out.join("failed_genes.txt"), &(ids.join("\n") + "\n"))?;
            }
        }
        Command::Fit { data, out } => {
            write_config(out, cfg)?;
            let loaded = load(data, cfg, cfg.guided)?;
            let result = pipeline::fit(&loaded.raw, &loaded.source, cfg)?;
            let decisions = pipeline::write_fit(out, &result, cfg)?;
            log::info!(
                "{} genes selected (eta {}), cluster sizes {:?}",
                decisions.n_selected,
                decisions.eta,
                cluster_sizes(&decisions)
            );
        }
        Command::SelectK { data, out } => {
            write_config(out, cfg)?;
            let loaded = load(data, cfg, cfg.guided)?;
            let sel = pipeline::choose_k(&loaded.raw, &loaded.source, cfg)?;
            let mut tsv = String::from("k\tbic\n");
            for (k, b) in &sel.curve {
                tsv.push_str(&format!("{k}\t{}\n", io::fmt_f64(*b)));
            }
            io::write_text(&out.join("bic.tsv"), &tsv)?;
            io::write_json(&out.join("select_k.json"), &sel)?;
            println!("{}", sel.best_k);
        }
        Command::Evaluate {
            fits,
            truth,
            reference_labels,
            expression,
            out,
        } => {
            write_config(out, cfg)?;
            let truth = truth.as_ref().map(|p| io::read_json::<TruthFile>(p)).transpose()?;
            let expr = expression.as_ref().map(|p| io::read_expression(p)).transpose()?;
            if truth.is_none() {
                log::warn!("no truth file: only reference-label ARI and silhouette are reported");
            }
            let mut reports = Vec::new();
            for (b, dir) in fits.iter().enumerate() {
                let decisions: Decisions = io::read_json(&dir.join("decisions.json"))?;
                let reference_vec;
                let reference = match (&truth, reference_labels) {
                    (Some(t), _) => Reference::Truth(t),
                    (None, Some(p)) => {
                        let ids: Vec<String> = decisions.samples.iter().map(|s| s.id.clone()).collect();
                        reference_vec = io::read_labels(p, &ids)?;
                        Reference::Labels(&reference_vec)
                    }
                    (None, None) => Reference::None,
                };
                let report = pipeline::evaluate(&decisions, reference, expr.as_ref())?;
                let name = if fits.len() == 1 {
                    "report".to_string()
                } else {
                    format!("report_{:03}", b + 1)
                };
                write_report(out, &name, &report)?;
                reports.push(report);
            }
            if reports.len() > 1 {
                let mut tsv = format!("fit\t{}\n", EvaluationReport::TSV_HEADER);
                for (dir, r) in fits.iter().zip(&reports) {
                    tsv.push_str(&format!("{}\t{}\n", dir.display(), r.tsv_row()));
                }
                io::write_text(&out.join("reports.tsv"), &tsv)?;
                io::write_json(&out.join("aggregate.json"), &aggregate_reports(&reports))?;
            }
        }
        Command::Sweep { data, truth, out } => {
            write_config(out, cfg)?;
            let loaded = load(data, cfg, cfg.guided)?;
            let truth = match (truth, loaded.truth) {
                (Some(p), _) => Some(io::read_json::<TruthFile>(p)?),
                (None, t) => t,
            };
            let reference = truth.as_ref().map_or(Reference::None, Reference::Truth);
            let rows = pipeline::sweep(&loaded.raw, &loaded.source, reference, cfg)?;
            io::write_text(&out.join("sweep.tsv"), &pipeline::sweep_tsv(&rows))?;
        }
    }
    Ok(())
}

fn cluster_sizes(d: &Decisions) -> Vec<usize> {
    let mut sizes = vec![0; d.k];
    for s in &d.samples {
        sizes[s.label - 1] += 1;
    }
    sizes
}

/// Parses `args` (program name first), runs the command and returns the
/// exit status.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    let result = cli
        .overrides
        .resolve()
        .and_then(|cfg| run_command(&cli.command, &cfg));
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
