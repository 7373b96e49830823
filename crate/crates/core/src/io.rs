//! File formats: expression and clinical tables, guidance vectors, truth,
//! labels, trace directories and decisions.
//!
//! Tables are tab-separated unless the file name ends in `.csv`. Floats are
//! written in shortest round-trip form, so write → read is lossless and
//! output bytes depend only on the values.

use std::collections::HashMap;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{ClinicalOutcome, DataError, ExpressionMatrix, Matrix, OutcomeKind};
use crate::inference::{ClusterDecision, GeneDecision, KSelection, SelectionMode};
use crate::trace::PosteriorTrace;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("{path}, line {line}: {message}")]
    Parse { path: PathBuf, line: u64, message: String },
    #[error("{path}: {source}")]
    Data {
        path: PathBuf,
        #[source]
        source: DataError,
    },
}

impl IoError {
    fn io(path: &Path, source: std::io::Error) -> Self {
        Self::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    fn csv(path: &Path, source: csv::Error) -> Self {
        Self::Csv {
            path: path.to_path_buf(),
            source,
        }
    }

    fn json(path: &Path, source: serde_json::Error) -> Self {
        Self::Json {
            path: path.to_path_buf(),
            source,
        }
    }

    fn parse(path: &Path, line: u64, message: impl Into<String>) -> Self {
        Self::Parse {
            path: path.to_path_buf(),
            line,
            message: message.into(),
        }
    }

    fn data(path: &Path, source: DataError) -> Self {
        Self::Data {
            path: path.to_path_buf(),
            source,
        }
    }
}

fn delimiter(path: &Path) -> u8 {
    match path.extension().and_then(|e| e.to_str()) {
        Some(e) if e.eq_ignore_ascii_case("csv") => b',',
        _ => b'\t',
    }
}

fn reader(path: &Path) -> Result<csv::Reader<File>, IoError> {
    let file = File::open(path).map_err(|e| IoError::io(path, e))?;
    Ok(csv::ReaderBuilder::new()
        .delimiter(delimiter(path))
        .has_headers(true)
        .from_reader(file))
}

fn writer(path: &Path) -> Result<csv::Writer<BufWriter<File>>, IoError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| IoError::io(dir, e))?;
    }
    let file = File::create(path).map_err(|e| IoError::io(path, e))?;
    Ok(csv::WriterBuilder::new()
        .delimiter(delimiter(path))
        .from_writer(BufWriter::new(file)))
}

fn line_of(record: &csv::StringRecord) -> u64 {
    record.position().map_or(0, |p| p.line())
}

fn is_missing(field: &str) -> bool {
    matches!(field.trim(), "" | "NA" | "na" | "NaN" | "nan" | "null" | "NULL")
}

fn parse_f64(path: &Path, record: &csv::StringRecord, col: usize, what: &str) -> Result<f64, IoError> {
    let field = record.get(col).unwrap_or("");
    if is_missing(field) {
        return Err(IoError::parse(path, line_of(record), format!("missing {what} in column {}", col + 1)));
    }
    field
        .trim()
        .parse::<f64>()
        .map_err(|_| IoError::parse(path, line_of(record), format!("cannot parse {what} `{field}`")))
}

pub(crate) fn fmt_f64(v: f64) -> String {
    format!("{v}")
}

/// Reads a genes × samples table: a header row of sample identifiers (its
/// first cell is ignored) and one row per gene starting with the gene
/// identifier. Missing values are rejected.
pub fn read_expression(path: &Path) -> Result<ExpressionMatrix, IoError> {
    let mut rdr = reader(path)?;
    let header = rdr.headers().map_err(|e| IoError::csv(path, e))?.clone();
    let samples: Vec<String> = header.iter().skip(1).map(|s| s.trim().to_string()).collect();
    let mut genes = Vec::new();
    let mut values = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| IoError::csv(path, e))?;
        if record.len() != samples.len() + 1 {
            return Err(IoError::parse(
                path,
                line_of(&record),
                format!("expected {} fields, found {}", samples.len() + 1, record.len()),
            ));
        }
        genes.push(record[0].trim().to_string());
        for c in 1..record.len() {
            values.push(parse_f64(path, &record, c, "expression value")?);
        }
    }
    let m = Matrix::from_vec(genes.len(), samples.len(), values).map_err(|e| IoError::data(path, e))?;
    ExpressionMatrix::new(m, genes, samples).map_err(|e| IoError::data(path, e))
}

pub fn write_expression(path: &Path, expr: &ExpressionMatrix) -> Result<(), IoError> {
    let mut w = writer(path)?;
    let mut header = vec!["gene_id".to_string()];
    header.extend(expr.sample_ids().iter().cloned());
    w.write_record(&header).map_err(|e| IoError::csv(path, e))?;
    for (g, id) in expr.gene_ids().iter().enumerate() {
        let mut row = vec![id.clone()];
        row.extend(expr.gene(g).iter().map(|&v| fmt_f64(v)));
        w.write_record(&row).map_err(|e| IoError::csv(path, e))?;
    }
    w.flush().map_err(|e| IoError::io(path, e))
}

/// Column layout of a clinical file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClinicalColumns {
    /// Outcome column for continuous, binary and ordinal outcomes.
    pub outcome: String,
    pub time: String,
    pub event: String,
}

impl Default for ClinicalColumns {
    fn default() -> Self {
        Self {
            outcome: "y".into(),
            time: "time".into(),
            event: "event".into(),
        }
    }
}

fn parse_flag(path: &Path, record: &csv::StringRecord, col: usize) -> Result<bool, IoError> {
    match record.get(col).map(str::trim) {
        Some("1") | Some("true") | Some("TRUE") => Ok(true),
        Some("0") | Some("false") | Some("FALSE") => Ok(false),
        Some(other) => Err(IoError::parse(path, line_of(record), format!("event indicator `{other}` is not 0/1"))),
        None => Err(IoError::parse(path, line_of(record), "missing event indicator")),
    }
}

fn parse_level(path: &Path, record: &csv::StringRecord, col: usize) -> Result<u32, IoError> {
    let field = record.get(col).unwrap_or("").trim();
    if is_missing(field) {
        return Err(IoError::parse(path, line_of(record), "missing outcome value"));
    }
    field
        .parse::<u32>()
        .map_err(|_| IoError::parse(path, line_of(record), format!("`{field}` is not a non-negative integer level")))
}

/// Reads a clinical table (first column sample identifier, then named
/// variables) and aligns it to `sample_ids`. Every expression sample must be
/// present; extra rows are ignored.
pub fn read_outcome(
    path: &Path,
    kind: OutcomeKind,
    columns: &ClinicalColumns,
    sample_ids: &[String],
) -> Result<ClinicalOutcome, IoError> {
    let mut rdr = reader(path)?;
    let header = rdr.headers().map_err(|e| IoError::csv(path, e))?.clone();
    let find = |name: &str| {
        header
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| IoError::parse(path, 1, format!("no column named `{name}`")))
    };
    let (c1, c2) = match kind {
        OutcomeKind::Survival => (find(&columns.time)?, find(&columns.event)?),
        _ => (find(&columns.outcome)?, 0),
    };
    let mut rows: HashMap<String, csv::StringRecord> = HashMap::new();
    for record in rdr.records() {
        let record = record.map_err(|e| IoError::csv(path, e))?;
        let id = record.get(0).unwrap_or("").trim().to_string();
        if rows.insert(id.clone(), record).is_some() {
            return Err(IoError::parse(path, 0, format!("sample `{id}` appears twice")));
        }
    }
    let mut ordered = Vec::with_capacity(sample_ids.len());
    for id in sample_ids {
        ordered.push(
            rows.get(id)
                .ok_or_else(|| IoError::parse(path, 0, format!("no clinical row for sample `{id}`")))?,
        );
    }
    let outcome = match kind {
        OutcomeKind::Continuous => ClinicalOutcome::Continuous {
            y: ordered.iter().map(|r| parse_f64(path, r, c1, "outcome")).collect::<Result<_, _>>()?,
        },
        OutcomeKind::Binary => ClinicalOutcome::Binary {
            y: ordered
                .iter()
                .map(|r| match parse_level(path, r, c1)? {
                    v @ (0 | 1) => Ok(v as u8),
                    v => Err(IoError::parse(path, line_of(r), format!("binary value {v} is not 0/1"))),
                })
                .collect::<Result<_, _>>()?,
        },
        OutcomeKind::Ordinal => ClinicalOutcome::Ordinal {
            y: ordered.iter().map(|r| parse_level(path, r, c1)).collect::<Result<_, _>>()?,
        },
        OutcomeKind::Survival => ClinicalOutcome::Survival {
            time: ordered
                .iter()
                .map(|r| parse_f64(path, r, c1, "survival time"))
                .collect::<Result<_, _>>()?,
            event: ordered.iter().map(|r| parse_flag(path, r, c2)).collect::<Result<_, _>>()?,
        },
    };
    outcome.validate(sample_ids.len()).map_err(|e| IoError::data(path, e))?;
    Ok(outcome)
}

pub fn write_outcome(path: &Path, sample_ids: &[String], outcome: &ClinicalOutcome) -> Result<(), IoError> {
    let mut w = writer(path)?;
    let rows: Vec<Vec<String>> = match outcome {
        ClinicalOutcome::Continuous { y } => y.iter().map(|v| vec![fmt_f64(*v)]).collect(),
        ClinicalOutcome::Binary { y } => y.iter().map(|v| vec![v.to_string()]).collect(),
        ClinicalOutcome::Ordinal { y } => y.iter().map(|v| vec![v.to_string()]).collect(),
        ClinicalOutcome::Survival { time, event } => time
            .iter()
            .zip(event)
            .map(|(t, e)| vec![fmt_f64(*t), (*e as u8).to_string()])
            .collect(),
    };
    let header: &[&str] = match outcome.kind() {
        OutcomeKind::Survival => &["sample_id", "time", "event"],
        _ => &["sample_id", "y"],
    };
    w.write_record(header).map_err(|e| IoError::csv(path, e))?;
    for (id, row) in sample_ids.iter().zip(rows) {
        let mut rec = vec![id.clone()];
        rec.extend(row);
        w.write_record(&rec).map_err(|e| IoError::csv(path, e))?;
    }
    w.flush().map_err(|e| IoError::io(path, e))
}

/// Writes `gene_id  u` rows.
pub fn write_guidance(path: &Path, gene_ids: &[String], u: &[f64]) -> Result<(), IoError> {
    let mut w = writer(path)?;
    w.write_record(["gene_id", "u"]).map_err(|e| IoError::csv(path, e))?;
    for (id, v) in gene_ids.iter().zip(u) {
        w.write_record([id.as_str(), &fmt_f64(*v)]).map_err(|e| IoError::csv(path, e))?;
    }
    w.flush().map_err(|e| IoError::io(path, e))
}

/// Reads a guidance file and aligns it to `gene_ids`.
pub fn read_guidance(path: &Path, gene_ids: &[String]) -> Result<Vec<f64>, IoError> {
    let mut rdr = reader(path)?;
    let mut by_id = HashMap::new();
    for record in rdr.records() {
        let record = record.map_err(|e| IoError::csv(path, e))?;
        let v = parse_f64(path, &record, 1, "guidance value")?;
        if !(0.0..=1.0).contains(&v) {
            return Err(IoError::parse(path, line_of(&record), format!("guidance value {v} outside [0, 1]")));
        }
        by_id.insert(record[0].trim().to_string(), v);
    }
    gene_ids
        .iter()
        .map(|id| {
            by_id
                .get(id)
                .copied()
                .ok_or_else(|| IoError::parse(path, 0, format!("no guidance value for gene `{id}`")))
        })
        .collect()
}

/// Writes `sample_id  label` rows.
pub fn write_labels(path: &Path, sample_ids: &[String], labels: &[usize]) -> Result<(), IoError> {
    let mut w = writer(path)?;
    w.write_record(["sample_id", "label"]).map_err(|e| IoError::csv(path, e))?;
    for (id, l) in sample_ids.iter().zip(labels) {
        w.write_record([id.as_str(), &l.to_string()]).map_err(|e| IoError::csv(path, e))?;
    }
    w.flush().map_err(|e| IoError::io(path, e))
}

/// Reads a label table and aligns it to `sample_ids`.
pub fn read_labels(path: &Path, sample_ids: &[String]) -> Result<Vec<usize>, IoError> {
    let mut rdr = reader(path)?;
    let mut by_id = HashMap::new();
    for record in rdr.records() {
        let record = record.map_err(|e| IoError::csv(path, e))?;
        let field = record.get(1).unwrap_or("").trim();
        let l: usize = field
            .parse()
            .map_err(|_| IoError::parse(path, line_of(&record), format!("label `{field}` is not an integer")))?;
        by_id.insert(record[0].trim().to_string(), l);
    }
    sample_ids
        .iter()
        .map(|id| {
            by_id
                .get(id)
                .copied()
                .ok_or_else(|| IoError::parse(path, 0, format!("no label for sample `{id}`")))
        })
        .collect()
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<(), IoError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| IoError::io(dir, e))?;
    }
    let mut text = serde_json::to_string_pretty(value).map_err(|e| IoError::json(path, e))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| IoError::io(path, e))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, IoError> {
    let text = fs::read_to_string(path).map_err(|e| IoError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| IoError::json(path, e))
}

pub fn write_text(path: &Path, text: &str) -> Result<(), IoError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| IoError::io(dir, e))?;
    }
    fs::write(path, text).map_err(|e| IoError::io(path, e))
}

/// Posterior summaries written to `summaries.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceSummaries {
    pub n_retained: usize,
    pub k: usize,
    pub guided: bool,
    pub gene_ids: Vec<String>,
    pub sample_ids: Vec<String>,
    pub inclusion_frequency: Vec<f64>,
    /// n rows of K membership frequencies.
    pub cluster_frequencies: Vec<Vec<f64>>,
    pub mean_pi: Vec<f64>,
    /// G rows of K posterior mean cluster means.
    pub mean_mu: Vec<Vec<f64>>,
    pub mean_sigma2: Vec<f64>,
    pub mean_p: f64,
    pub mean_tau2_mu0: f64,
    pub mean_tau2_mu1: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub mean_tau2_u0: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub mean_tau2_u1: Option<f64>,
}

fn matrix_rows(m: &Matrix) -> Vec<Vec<f64>> {
    (0..m.rows()).map(|r| m.row(r).to_vec()).collect()
}

impl TraceSummaries {
    pub fn from_trace(trace: &PosteriorTrace, gene_ids: &[String], sample_ids: &[String]) -> Self {
        let tau = trace.mean_tau2();
        let guided = trace.guided();
        Self {
            n_retained: trace.n_retained(),
            k: trace.k(),
            guided,
            gene_ids: gene_ids.to_vec(),
            sample_ids: sample_ids.to_vec(),
            inclusion_frequency: trace.inclusion_frequency(),
            cluster_frequencies: matrix_rows(&trace.cluster_frequencies()),
            mean_pi: trace.mean_pi(),
            mean_mu: matrix_rows(&trace.mean_mu()),
            mean_sigma2: trace.mean_sigma2(),
            mean_p: trace.mean_p(),
            mean_tau2_mu0: tau[0],
            mean_tau2_mu1: tau[1],
            mean_tau2_u0: guided.then_some(tau[2]),
            mean_tau2_u1: guided.then_some(tau[3]),
        }
    }
}

/// Shapes of the arrays in `draws.bin`, stored one after another per draw.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DrawsLayout {
    pub n_draws: usize,
    pub n_genes: usize,
    pub n_samples: usize,
    pub k: usize,
    /// Per draw, in order: name and shape of each block (row-major).
    pub blocks: Vec<(String, Vec<usize>)>,
    pub dtype: String,
}

/// Writes a trace directory: `summaries.json`, `diagnostics.tsv` and, when
/// the trace kept full draws, `draws.bin` with its `draws.json` sidecar.
pub fn write_trace_dir(
    dir: &Path,
    trace: &PosteriorTrace,
    gene_ids: &[String],
    sample_ids: &[String],
) -> Result<(), IoError> {
    fs::create_dir_all(dir).map_err(|e| IoError::io(dir, e))?;
    write_json(&dir.join("summaries.json"), &TraceSummaries::from_trace(trace, gene_ids, sample_ids))?;

    let path = dir.join("diagnostics.tsv");
    let mut w = writer(&path)?;
    let guided = trace.guided();
    let mut header = vec!["iteration", "log_posterior", "p", "tau2_mu0", "tau2_mu1"];
    if guided {
        header.extend(["tau2_u0", "tau2_u1"]);
    }
    header.push("n_selected");
    w.write_record(&header).map_err(|e| IoError::csv(&path, e))?;
    for d in &trace.diagnostics {
        let mut row = vec![
            d.iteration.to_string(),
            fmt_f64(d.log_posterior),
            fmt_f64(d.p),
            fmt_f64(d.tau2_mu0),
            fmt_f64(d.tau2_mu1),
        ];
        if guided {
            row.push(d.tau2_u0.map_or_else(String::new, fmt_f64));
            row.push(d.tau2_u1.map_or_else(String::new, fmt_f64));
        }
        row.push(d.n_selected.to_string());
        w.write_record(&row).map_err(|e| IoError::csv(&path, e))?;
    }
    w.flush().map_err(|e| IoError::io(&path, e))?;

    if let Some(draws) = &trace.draws {
        let (g, n, k) = (trace.n_genes(), trace.n_samples(), trace.k());
        let path = dir.join("draws.bin");
        let file = File::create(&path).map_err(|e| IoError::io(&path, e))?;
        let mut out = BufWriter::new(file);
        let mut put = |v: f64| out.write_all(&v.to_le_bytes());
        for d in draws {
            let res: std::io::Result<()> = (|| {
                for &l in &d.selected {
                    put(l as u8 as f64)?;
                }
                for &z in &d.z {
                    put(z as f64 + 1.0)?;
                }
                for &v in d.pi.iter().chain(d.mu.as_slice()).chain(&d.sigma2) {
                    put(v)?;
                }
                put(d.p)?;
                for &t in &d.tau2 {
                    put(t)?;
                }
                Ok(())
            })();
            res.map_err(|e| IoError::io(&path, e))?;
        }
        out.flush().map_err(|e| IoError::io(&path, e))?;
        let layout = DrawsLayout {
            n_draws: draws.len(),
            n_genes: g,
            n_samples: n,
            k,
            blocks: vec![
                ("selected".into(), vec![g]),
                ("z".into(), vec![n]),
                ("pi".into(), vec![k]),
                ("mu".into(), vec![g, k]),
                ("sigma2".into(), vec![g]),
                ("p".into(), vec![1]),
                ("tau2_mu0_mu1_u0_u1".into(), vec![4]),
            ],
            dtype: "f64 little-endian".into(),
        };
        write_json(&dir.join("draws.json"), &layout)?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneRecord {
    pub id: String,
    pub local_fdr: f64,
    pub selected: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub id: String,
    pub label: usize,
    pub soft: Vec<f64>,
}

/// Everything a fit decides, as written to `decisions.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Decisions {
    pub k: usize,
    pub guided: bool,
    pub selection: SelectionMode,
    pub eta: f64,
    pub achieved_fdr: Option<f64>,
    pub n_selected: usize,
    pub bic: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub bic_curve: Option<KSelection>,
    pub genes: Vec<GeneRecord>,
    pub samples: Vec<SampleRecord>,
}

impl Decisions {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        k: usize,
        guided: bool,
        selection: SelectionMode,
        genes: &GeneDecision,
        clusters: &ClusterDecision,
        bic: f64,
        gene_ids: &[String],
        sample_ids: &[String],
    ) -> Self {
        let flags = genes.flags();
        Self {
            k,
            guided,
            selection,
            eta: genes.eta,
            achieved_fdr: genes.achieved_fdr,
            n_selected: genes.selected.len(),
            bic,
            bic_curve: None,
            genes: gene_ids
                .iter()
                .zip(&genes.local_fdr)
                .zip(flags)
                .map(|((id, &p), s)| GeneRecord {
                    id: id.clone(),
                    local_fdr: p,
                    selected: s,
                })
                .collect(),
            samples: sample_ids
                .iter()
                .enumerate()
                .map(|(i, id)| SampleRecord {
                    id: id.clone(),
                    label: clusters.labels[i],
                    soft: clusters.soft.row(i).to_vec(),
                })
                .collect(),
        }
    }

    pub fn labels(&self) -> Vec<usize> {
        self.samples.iter().map(|s| s.label).collect()
    }

    pub fn local_fdr(&self) -> Vec<f64> {
        self.genes.iter().map(|g| g.local_fdr).collect()
    }

    /// 0-based indices of selected genes.
    pub fn selected(&self) -> Vec<usize> {
        (0..self.genes.len()).filter(|&g| self.genes[g].selected).collect()
    }

    pub fn selected_ids(&self) -> Vec<String> {
        self.genes.iter().filter(|g| g.selected).map(|g| g.id.clone()).collect()
    }
}
