//! Evaluation metrics: adjusted Rand index, Jaccard index, gene-selection
//! ROC AUC and mean silhouette width.

use std::collections::{BTreeSet, HashMap};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::Matrix;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("label vectors differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("need at least two samples")]
    TooFewSamples,
    #[error("both gene sets are empty")]
    BothEmpty,
    #[error("truth contains a single class")]
    SingleClassTruth,
    #[error("silhouette needs at least two clusters")]
    SingleCluster,
}

fn comb2(x: u64) -> f64 {
    (x * x.saturating_sub(1)) as f64 / 2.0
}

/// Adjusted Rand index under the permutation model. Labels are arbitrary
/// integers. Two trivially identical partitions (denominator 0) score 1.
pub fn adjusted_rand_index(a: &[usize], b: &[usize]) -> Result<f64, MetricsError> {
    if a.len() != b.len() {
        return Err(MetricsError::LengthMismatch(a.len(), b.len()));
    }
    if a.len() < 2 {
        return Err(MetricsError::TooFewSamples);
    }
    let mut table: HashMap<(usize, usize), u64> = HashMap::new();
    let mut rows: HashMap<usize, u64> = HashMap::new();
    let mut cols: HashMap<usize, u64> = HashMap::new();
    for (&x, &y) in a.iter().zip(b) {
        *table.entry((x, y)).or_default() += 1;
        *rows.entry(x).or_default() += 1;
        *cols.entry(y).or_default() += 1;
    }
    let index: f64 = table.values().map(|&c| comb2(c)).sum();
    let sum_a: f64 = rows.values().map(|&c| comb2(c)).sum();
    let sum_b: f64 = cols.values().map(|&c| comb2(c)).sum();
    let total = comb2(a.len() as u64);
    let expected = sum_a * sum_b / total;
    let max = 0.5 * (sum_a + sum_b);
    let denom = max - expected;
    if denom == 0.0 {
        return Ok(1.0);
    }
    Ok((index - expected) / denom)
}

/// |s1 ∩ s2| / |s1 ∪ s2|.
pub fn jaccard_index(s1: &[usize], s2: &[usize]) -> Result<f64, MetricsError> {
    let a: BTreeSet<usize> = s1.iter().copied().collect();
    let b: BTreeSet<usize> = s2.iter().copied().collect();
    let union = a.union(&b).count();
    if union == 0 {
        return Err(MetricsError::BothEmpty);
    }
    Ok(a.intersection(&b).count() as f64 / union as f64)
}

/// Area under the ROC curve for recovering intrinsic genes, scoring gene g
/// by 1 − P_g. Equals the Mann–Whitney probability that a random intrinsic
/// gene outscores a random non-intrinsic one, ties counting ½.
pub fn gene_selection_auc(local_fdr: &[f64], truth: &[bool]) -> Result<f64, MetricsError> {
    if local_fdr.len() != truth.len() {
        return Err(MetricsError::LengthMismatch(local_fdr.len(), truth.len()));
    }
    let n_pos = truth.iter().filter(|&&t| t).count() as u64;
    let n_neg = truth.len() as u64 - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(MetricsError::SingleClassTruth);
    }
    let mut order: Vec<usize> = (0..truth.len()).collect();
    let score = |g: usize| 1.0 - local_fdr[g];
    order.sort_by(|&x, &y| score(x).total_cmp(&score(y)));
    // Twice the Mann–Whitney U, kept integral.
    let mut twice_u: u64 = 0;
    let mut neg_below: u64 = 0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        let (mut pos, mut neg) = (0u64, 0u64);
        while j < order.len() && score(order[j]) == score(order[i]) {
            if truth[order[j]] {
                pos += 1;
            } else {
                neg += 1;
            }
            j += 1;
        }
        twice_u += 2 * pos * neg_below + pos * neg;
        neg_below += neg;
        i = j;
    }
    Ok(twice_u as f64 / (2 * n_pos * n_neg) as f64)
}

/// Mean silhouette width with Euclidean distances between samples.
///
/// `expr` is features × samples (e.g. selected genes × n). Samples in
/// singleton clusters score 0.
pub fn silhouette_mean(expr: &Matrix, labels: &[usize]) -> Result<f64, MetricsError> {
    let n = expr.cols();
    if labels.len() != n {
        return Err(MetricsError::LengthMismatch(labels.len(), n));
    }
    let mut ids: Vec<usize> = labels.to_vec();
    ids.sort_unstable();
    ids.dedup();
    if ids.len() < 2 {
        return Err(MetricsError::SingleCluster);
    }
    let cluster: Vec<usize> = labels.iter().map(|l| ids.binary_search(l).unwrap()).collect();
    let c = ids.len();
    let mut sizes = vec![0usize; c];
    for &k in &cluster {
        sizes[k] += 1;
    }
    // sample-major copy for contiguous distance loops
    let m = expr.rows();
    let mut samples = vec![0.0; n * m];
    for g in 0..m {
        for (i, &v) in expr.row(g).iter().enumerate() {
            samples[i * m + g] = v;
        }
    }
    let sample = |i: usize| &samples[i * m..(i + 1) * m];
    let widths: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|i| {
            let own = cluster[i];
            if sizes[own] == 1 {
                return 0.0;
            }
            let mut sums = vec![0.0; c];
            let xi = sample(i);
            for j in 0..n {
                if j == i {
                    continue;
                }
                let d2: f64 = xi.iter().zip(sample(j)).map(|(a, b)| (a - b) * (a - b)).sum();
                sums[cluster[j]] += d2.sqrt();
            }
            let a = sums[own] / (sizes[own] - 1) as f64;
            let b = (0..c)
                .filter(|&k| k != own)
                .map(|k| sums[k] / sizes[k] as f64)
                .fold(f64::INFINITY, f64::min);
            let denom = a.max(b);
            if denom > 0.0 {
                (b - a) / denom
            } else {
                0.0
            }
        })
        .collect();
    Ok(widths.iter().sum::<f64>() / n as f64)
}

/// Per-run evaluation. Metrics that need ground truth are absent for real
/// data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct EvaluationReport {
    pub ari: Option<f64>,
    pub jaccard: Option<f64>,
    pub auc: Option<f64>,
    pub silhouette_mean: Option<f64>,
    pub n_selected: usize,
}

impl EvaluationReport {
    pub const TSV_HEADER: &'static str = "ari\tjaccard\tauc\tsilhouette_mean\tn_selected";

    pub fn tsv_row(&self) -> String {
        let f = |v: Option<f64>| v.map_or_else(|| "NA".to_string(), |x| x.to_string());
        format!(
            "{}\t{}\t{}\t{}\t{}",
            f(self.ari),
            f(self.jaccard),
            f(self.auc),
            f(self.silhouette_mean),
            self.n_selected
        )
    }
}

/// Mean and standard error of one metric across replicates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanSe {
    pub mean: f64,
    pub se: f64,
    pub n: usize,
}

/// Mean and standard error (sample sd / √B) of the present values.
pub fn mean_se(values: &[f64]) -> Option<MeanSe> {
    let n = values.len();
    if n == 0 {
        return None;
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let se = if n > 1 {
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n as f64 - 1.0);
        (var / n as f64).sqrt()
    } else {
        0.0
    };
    Some(MeanSe { mean, se, n })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateReport {
    pub replicates: usize,
    pub ari: Option<MeanSe>,
    pub jaccard: Option<MeanSe>,
    pub auc: Option<MeanSe>,
    pub silhouette_mean: Option<MeanSe>,
}

pub fn aggregate_reports(reports: &[EvaluationReport]) -> AggregateReport {
    let col = |f: fn(&EvaluationReport) -> Option<f64>| -> Option<MeanSe> {
        let v: Vec<f64> = reports.iter().filter_map(f).collect();
        mean_se(&v)
    };
    AggregateReport {
        replicates: reports.len(),
        ari: col(|r| r.ari),
        jaccard: col(|r| r.jaccard),
        auc: col(|r| r.auc),
        silhouette_mean: col(|r| r.silhouette_mean),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ari_examples() {
        assert_eq!(adjusted_rand_index(&[1, 1, 2, 2], &[1, 1, 2, 2]).unwrap(), 1.0);
        assert!((adjusted_rand_index(&[1, 1, 2, 2], &[1, 2, 1, 2]).unwrap() + 0.5).abs() < 1e-12);
        assert_eq!(adjusted_rand_index(&[1, 1, 2, 2], &[7, 7, 3, 3]).unwrap(), 1.0);
        assert_eq!(adjusted_rand_index(&[0, 0, 0], &[5, 5, 5]).unwrap(), 1.0);
        assert_eq!(adjusted_rand_index(&[1], &[1]), Err(MetricsError::TooFewSamples));
        assert_eq!(adjusted_rand_index(&[1, 2], &[1]), Err(MetricsError::LengthMismatch(2, 1)));
    }

    #[test]
    fn jaccard_examples() {
        assert_eq!(jaccard_index(&[1, 2], &[2, 1]).unwrap(), 1.0);
        assert_eq!(jaccard_index(&[1], &[2]).unwrap(), 0.0);
        assert_eq!(jaccard_index(&[0, 1, 2], &[1, 2, 3]).unwrap(), 0.5);
        assert_eq!(jaccard_index(&[], &[]), Err(MetricsError::BothEmpty));
    }

    #[test]
    fn auc_examples() {
        let truth = [true, true, false, false];
        assert_eq!(gene_selection_auc(&[0.0, 0.1, 0.5, 0.9], &truth).unwrap(), 1.0);
        assert_eq!(gene_selection_auc(&[0.3; 4], &truth).unwrap(), 0.5);
        assert_eq!(gene_selection_auc(&[0.1; 2], &[true, true]), Err(MetricsError::SingleClassTruth));
    }

    #[test]
    fn silhouette_small_cases() {
        // two points per cluster on a line: {0, 1} and {10, 11}
        let m = Matrix::from_rows(&[vec![0.0, 1.0, 10.0, 11.0]]).unwrap();
        let s = silhouette_mean(&m, &[1, 1, 2, 2]).unwrap();
        // a = 1; b = mean distance to other cluster
        let b = [10.5, 9.5, 9.5, 10.5];
        let oracle = b.iter().map(|b| (b - 1.0) / b).sum::<f64>() / 4.0;
        assert!((s - oracle).abs() < 1e-12);
        // middle point equidistant from its partner and the other cluster
        let m = Matrix::from_rows(&[vec![0.0, 1.0, 2.0]]).unwrap();
        let s = silhouette_mean(&m, &[1, 1, 2]).unwrap();
        // sample 2: a = 1, b = 1 → 0; sample 1: a = 1, b = 2 → 0.5; singleton → 0
        assert!((s - 0.5 / 3.0).abs() < 1e-12);
        assert_eq!(silhouette_mean(&m, &[1, 1, 1]), Err(MetricsError::SingleCluster));
    }

    #[test]
    fn aggregation_mean_and_se() {
        let reports: Vec<EvaluationReport> = [0.9, 1.0, 0.8]
            .iter()
            .map(|&a| EvaluationReport {
                ari: Some(a),
                ..Default::default()
            })
            .collect();
        let agg = aggregate_reports(&reports);
        let ari = agg.ari.unwrap();
        assert!((ari.mean - 0.9).abs() < 1e-12);
        // sd = 0.1, se = 0.1/√3
        assert!((ari.se - 0.1 / 3f64.sqrt()).abs() < 1e-12);
        assert!(agg.jaccard.is_none());
    }
}
