//! Per-gene guidance from a clinical outcome.
//!
//! Each gene is regressed on the outcome with a univariate model matching the
//! outcome type (linear, logistic, proportional odds, Cox). The fit quality is
//! summarised as R² (linear) or the Cox–Snell pseudo-R²
//! `1 − exp((2/n)(ℓ₀ − ℓ_g))`, and the G values are rescaled to [0, 1] by a
//! min–max map.

pub mod cox;
pub mod glm;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{ClinicalOutcome, DataError, ExpressionMatrix, OutcomeKind};

pub use cox::{fit_cox, CoxFit};
pub use glm::{fit_logistic, fit_proportional_odds, GlmFit};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GuidanceError {
    #[error("predictor is constant")]
    ConstantPredictor,
    #[error("need at least {needed} samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },
    #[error("outcome has a single class")]
    SingleClass,
    #[error("complete or quasi-complete separation (pseudo-R² at last stable iterate {capped_r2})")]
    SeparationDetected { capped_r2: f64 },
    #[error("fit did not converge in {iterations} iterations")]
    NonConvergence { iterations: usize },
    #[error("survival outcome has no events")]
    NoEvents,
    #[error("raw guidance values span less than 1e-12; cannot rescale")]
    DegenerateRange,
    #[error("gene `{gene}`: {source}")]
    Gene {
        gene: String,
        #[source]
        source: Box<GuidanceError>,
    },
    #[error(transparent)]
    Data(#[from] DataError),
}

/// Cox–Snell pseudo-R² from null and fitted log-likelihoods, clamped to
/// [0, 1).
pub fn pseudo_r2(loglik_null: f64, loglik: f64, n: usize) -> f64 {
    let v = -((2.0 / n as f64) * (loglik_null - loglik)).exp_m1();
    v.max(0.0)
}

/// How a continuous outcome is turned into guidance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GuidanceMeasure {
    /// R² (or pseudo-R²) followed by min–max rescaling.
    #[default]
    AdjustedR2,
    /// |Pearson correlation|, used as-is (continuous outcomes only).
    AbsCorrelation,
}

impl std::str::FromStr for GuidanceMeasure {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "adjusted_r2" | "r2" => Ok(Self::AdjustedR2),
            "abs_correlation" | "abs_rho" => Ok(Self::AbsCorrelation),
            other => Err(format!("unknown guidance measure `{other}`")),
        }
    }
}

impl std::fmt::Display for GuidanceMeasure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::AdjustedR2 => "adjusted_r2",
            Self::AbsCorrelation => "abs_correlation",
        })
    }
}

/// Guidance term U_g for every gene.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GuidanceVector {
    pub u: Vec<f64>,
    pub raw_r2: Vec<f64>,
    pub outcome_kind: OutcomeKind,
    /// Genes whose fit failed and were assigned raw value 0.
    #[serde(default)]
    pub failed: Vec<usize>,
}

impl GuidanceVector {
    /// Wraps precomputed values in [0, 1] (e.g. loaded from a file).
    pub fn from_values(u: Vec<f64>, outcome_kind: OutcomeKind) -> Self {
        Self {
            raw_r2: u.clone(),
            u,
            outcome_kind,
            failed: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.u.len()
    }

    pub fn is_empty(&self) -> bool {
        self.u.is_empty()
    }
}

fn pearson(x: &[f64], y: &[f64]) -> Result<f64, GuidanceError> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (&a, &b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if !(sxx > 0.0) {
        return Err(GuidanceError::ConstantPredictor);
    }
    if !(syy > 0.0) {
        return Ok(0.0);
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// OLS R² of `y` on `(1, x)`, i.e. the squared Pearson correlation.
pub fn guidance_continuous(x: &[f64], y: &[f64]) -> Result<f64, GuidanceError> {
    if x.len() < 3 {
        return Err(GuidanceError::TooFewSamples {
            needed: 3,
            got: x.len(),
        });
    }
    let r = pearson(x, y)?;
    Ok(r * r)
}

/// |Pearson correlation| between `x` and `y`.
pub fn abs_correlation(x: &[f64], y: &[f64]) -> Result<f64, GuidanceError> {
    pearson(x, y).map(f64::abs)
}

/// Pseudo-R² from a logistic (binary) or proportional-odds (ordinal) fit.
pub fn guidance_glm(x: &[f64], outcome: &ClinicalOutcome) -> Result<f64, GuidanceError> {
    let n = x.len();
    let fit = match outcome {
        ClinicalOutcome::Binary { y } => fit_logistic(x, y)?,
        ClinicalOutcome::Ordinal { y } => fit_proportional_odds(x, y)?,
        other => {
            return Err(DataError::InvalidOutcome(format!(
                "GLM guidance needs a binary or ordinal outcome, got {}",
                other.kind()
            ))
            .into())
        }
    };
    Ok(fit.pseudo_r2(n))
}

/// Pseudo-R² from a univariate Cox fit.
pub fn guidance_survival(x: &[f64], time: &[f64], event: &[bool]) -> Result<f64, GuidanceError> {
    Ok(fit_cox(x, time, event)?.pseudo_r2(x.len()))
}

/// Min–max rescaling of raw (pseudo-)R² values onto [0, 1].
pub fn adjust_pseudo_r2(raw: &[f64]) -> Result<Vec<f64>, GuidanceError> {
    let min = raw.iter().copied().fold(f64::INFINITY, f64::min);
    let max = raw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let range = max - min;
    if raw.len() < 2 || !(range >= 1e-12) {
        return Err(GuidanceError::DegenerateRange);
    }
    Ok(raw.iter().map(|&r| ((r - min) / range).clamp(0.0, 1.0)).collect())
}

fn gene_value(
    x: &[f64],
    outcome: &ClinicalOutcome,
    measure: GuidanceMeasure,
) -> Result<f64, GuidanceError> {
    match (outcome, measure) {
        (ClinicalOutcome::Continuous { y }, GuidanceMeasure::AdjustedR2) => guidance_continuous(x, y),
        (ClinicalOutcome::Continuous { y }, GuidanceMeasure::AbsCorrelation) => abs_correlation(x, y),
        (ClinicalOutcome::Binary { .. } | ClinicalOutcome::Ordinal { .. }, _) => guidance_glm(x, outcome),
        (ClinicalOutcome::Survival { time, event }, _) => guidance_survival(x, time, event),
    }
}

/// Computes U_g for every gene with the default (adjusted R²) measure.
pub fn compute_guidance(
    expr: &ExpressionMatrix,
    outcome: &ClinicalOutcome,
) -> Result<GuidanceVector, GuidanceError> {
    compute_guidance_with(expr, outcome, GuidanceMeasure::AdjustedR2)
}

/// Computes U_g for every gene. A gene whose fit fails gets raw value 0 and a
/// logged warning; separation keeps the pseudo-R² of the last stable iterate.
pub fn compute_guidance_with(
    expr: &ExpressionMatrix,
    outcome: &ClinicalOutcome,
    measure: GuidanceMeasure,
) -> Result<GuidanceVector, GuidanceError> {
    outcome.validate(expr.n_samples())?;
    if matches!(outcome, ClinicalOutcome::Survival { event, .. } if !event.iter().any(|&e| e)) {
        return Err(GuidanceError::NoEvents);
    }
    let results: Vec<Result<f64, GuidanceError>> = (0..expr.n_genes())
        .into_par_iter()
        .map(|g| gene_value(expr.gene(g), outcome, measure))
        .collect();
    let mut raw = Vec::with_capacity(results.len());
    let mut failed = Vec::new();
    for (g, r) in results.into_iter().enumerate() {
        match r {
            Ok(v) => raw.push(v),
            Err(GuidanceError::SeparationDetected { capped_r2 }) => {
                log::warn!(
                    "gene {}: separation in guidance fit; using pseudo-R² {capped_r2:.4} from the last stable iterate",
                    expr.gene_ids()[g]
                );
                raw.push(capped_r2);
            }
            Err(e) => {
                log::warn!("gene {}: guidance fit failed ({e}); using 0", expr.gene_ids()[g]);
                failed.push(g);
                raw.push(0.0);
            }
        }
    }
    let u = match measure {
        GuidanceMeasure::AbsCorrelation if outcome.kind() == OutcomeKind::Continuous => raw.clone(),
        _ => adjust_pseudo_r2(&raw)?,
    };
    Ok(GuidanceVector {
        u,
        raw_r2: raw,
        outcome_kind: outcome.kind(),
        failed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Matrix;

    #[test]
    fn perfect_and_null_fits() {
        let x = [1.0, 2.0, 3.0, 4.0];
        let y: Vec<f64> = x.iter().map(|v| 2.0 * v).collect();
        assert!((guidance_continuous(&x, &y).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(guidance_continuous(&x, &[1.0; 4]).unwrap(), 0.0);
        assert_eq!(
            guidance_continuous(&[1.0; 4], &y),
            Err(GuidanceError::ConstantPredictor)
        );
    }

    #[test]
    fn hand_computed_r2() {
        // x = (1,2,3,4), y = (1,2,2,4): Sxy = 4.5, Sxx = 5, Syy = 4.75
        let r2 = guidance_continuous(&[1.0, 2.0, 3.0, 4.0], &[1.0, 2.0, 2.0, 4.0]).unwrap();
        let oracle = 4.5f64 * 4.5 / (5.0 * 4.75);
        assert!((r2 - oracle).abs() < 1e-12);
        assert!((r2 - 0.8526).abs() < 1e-3);
    }

    #[test]
    fn adjust_examples() {
        let a = adjust_pseudo_r2(&[0.1, 0.3, 0.5]).unwrap();
        for (v, e) in a.iter().zip([0.0, 0.5, 1.0]) {
            assert!((v - e).abs() < 1e-12);
        }
        let b = adjust_pseudo_r2(&[0.16, 0.40, 0.28]).unwrap();
        for (v, e) in b.iter().zip([0.0, 1.0, 0.5]) {
            assert!((v - e).abs() < 1e-12);
        }
        assert_eq!(adjust_pseudo_r2(&[0.2, 0.2]), Err(GuidanceError::DegenerateRange));
        assert_eq!(adjust_pseudo_r2(&[0.2]), Err(GuidanceError::DegenerateRange));
    }

    #[test]
    fn identical_genes_are_degenerate() {
        let y = vec![1.0, 3.0, 2.0, 5.0];
        let m = Matrix::from_rows(&[y.clone(), y.clone(), y.clone()]).unwrap();
        let e = ExpressionMatrix::with_default_ids(m).unwrap();
        let r = compute_guidance(&e, &ClinicalOutcome::Continuous { y });
        assert_eq!(r, Err(GuidanceError::DegenerateRange));
    }

    #[test]
    fn failed_gene_falls_back_to_zero() {
        let m = Matrix::from_rows(&[
            vec![1.0, 2.0, 3.0, 4.0],
            vec![5.0, 5.0, 5.0, 5.0],
            vec![1.0, 3.0, 2.0, 4.0],
        ])
        .unwrap();
        let e = ExpressionMatrix::with_default_ids(m).unwrap();
        let y = vec![1.0, 2.0, 2.0, 4.0];
        let gv = compute_guidance(&e, &ClinicalOutcome::Continuous { y }).unwrap();
        assert_eq!(gv.failed, vec![1]);
        assert_eq!(gv.raw_r2[1], 0.0);
        assert_eq!(gv.u[1], 0.0);
        assert_eq!(gv.u[0], 1.0);
    }

    #[test]
    fn pseudo_r2_is_zero_at_null() {
        assert_eq!(pseudo_r2(-3.2, -3.2, 10), 0.0);
        assert!(pseudo_r2(-10.0, -5.0, 10) > 0.0);
    }
}
