//! Run configuration shared by every command, with a flat `key = value` file
//! form.
//!
//! Precedence is command-line flags, then the config file, then defaults.
//! The resolved configuration is written next to every output so a run can be
//! repeated from it; writing and re-reading it is lossless.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

use crate::data::{Hyperparameters, OutcomeKind};
use crate::distributions::{Domain, RngStream};
use crate::guidance::GuidanceMeasure;
use crate::inference::{BicPenalty, SelectionMode};
use crate::io::ClinicalColumns;
use crate::sampler::{GibbsConfig, InitScheme, SelectionUpdate};
use crate::simulation::SimulationConfig;

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: expected `key = value`")]
    Syntax { line: usize },
    #[error("unknown configuration key `{0}`")]
    UnknownKey(String),
    #[error("invalid value `{value}` for `{key}`: {reason}")]
    InvalidValue { key: String, value: String, reason: String },
}

/// The hyperparameter varied by a sensitivity sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    ATauMu0,
    BTauMu0,
    ATauMu1,
    BTauMu1,
}

impl SweepAxis {
    pub const ALL: [SweepAxis; 4] = [Self::ATauMu0, Self::BTauMu0, Self::ATauMu1, Self::BTauMu1];

    pub fn name(self) -> &'static str {
        match self {
            Self::ATauMu0 => "a_tau_mu0",
            Self::BTauMu0 => "b_tau_mu0",
            Self::ATauMu1 => "a_tau_mu1",
            Self::BTauMu1 => "b_tau_mu1",
        }
    }

    /// Default grid range.
    pub fn default_range(self) -> (f64, f64) {
        match self {
            Self::ATauMu0 => (1.1, 2.0),
            Self::BTauMu0 => (0.0005, 0.005),
            Self::ATauMu1 => (1.5, 6.0),
            Self::BTauMu1 => (50.0, 500.0),
        }
    }

    pub fn set(self, h: &mut Hyperparameters, v: f64) {
        match self {
            Self::ATauMu0 => h.a_tau_mu0 = v,
            Self::BTauMu0 => h.b_tau_mu0 = v,
            Self::ATauMu1 => h.a_tau_mu1 = v,
            Self::BTauMu1 => h.b_tau_mu1 = v,
        }
    }
}

impl std::str::FromStr for SweepAxis {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| format!("unknown sweep axis `{s}` (expected a_tau_mu0, b_tau_mu0, a_tau_mu1 or b_tau_mu1)"))
    }
}

/// `points` evenly spaced values from `lo` to `hi`, both endpoints exact.
pub fn linear_grid(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    match points {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..points)
            .map(|i| {
                if i == points - 1 {
                    hi
                } else {
                    lo + (hi - lo) * i as f64 / (points - 1) as f64
                }
            })
            .collect(),
    }
}

/// Every tunable of every command. Field names are the config-file keys.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    /// When nonzero, the effective seed is derived from (seed, replicate).
    pub replicate: u64,

    pub k: usize,
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
    pub nt: usize,
    pub nb: usize,
    pub thin: usize,
    pub keep_draws: bool,
    pub init: InitScheme,
    pub selection: SelectionUpdate,

    pub guided: bool,
    pub guidance_measure: GuidanceMeasure,
    pub outcome_kind: OutcomeKind,
    pub outcome_column: String,
    pub time_column: String,
    pub event_column: String,
    /// Fraction of lowest-mean genes dropped before standardising.
    pub filter_fraction: f64,

    pub fdr: f64,
    /// When nonzero, select exactly this many genes instead of thresholding.
    pub top_m: usize,
    pub bic_penalty: BicPenalty,
    pub k_min: usize,
    pub k_max: usize,

    pub sweep_axis: SweepAxis,
    pub sweep_points: usize,
    pub sweep_lo: Option<f64>,
    pub sweep_hi: Option<f64>,

    pub subjects_per_cluster_mean: f64,
    pub n_modules: usize,
    pub module_size_mean: f64,
    pub n_confounders: usize,
    pub modules_per_confounder: usize,
    pub n_noise: usize,
    pub sigma0: f64,
    pub sigma1: f64,
    pub sigma2: f64,
    pub sigma3: f64,
    pub fold_change_lo: f64,
    pub fold_change_hi: f64,
    pub wishart_nu: f64,
    pub wishart_phi_mix: f64,
    pub noise_mean_lo: f64,
    pub noise_mean_hi: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        let h = Hyperparameters::default();
        let s = SimulationConfig::default();
        let cols = ClinicalColumns::default();
        Self {
            seed: 1,
            replicate: 0,
            k: h.k,
            c: h.c,
            a_p: h.a_p,
            b_p: h.b_p,
            a_sigma: h.a_sigma,
            b_sigma: h.b_sigma,
            a_tau_mu0: h.a_tau_mu0,
            b_tau_mu0: h.b_tau_mu0,
            a_tau_mu1: h.a_tau_mu1,
            b_tau_mu1: h.b_tau_mu1,
            a_tau_u0: h.a_tau_u0,
            b_tau_u0: h.b_tau_u0,
            a_tau_u1: h.a_tau_u1,
            b_tau_u1: h.b_tau_u1,
            nt: h.n_total,
            nb: h.n_burnin,
            thin: 1,
            keep_draws: false,
            init: InitScheme::default(),
            selection: SelectionUpdate::default(),
            guided: true,
            guidance_measure: GuidanceMeasure::default(),
            outcome_kind: OutcomeKind::Continuous,
            outcome_column: cols.outcome,
            time_column: cols.time,
            event_column: cols.event,
            filter_fraction: 0.0,
            fdr: 0.001,
            top_m: 0,
            bic_penalty: BicPenalty::default(),
            k_min: 2,
            k_max: 6,
            sweep_axis: SweepAxis::ATauMu0,
            sweep_points: 10,
            sweep_lo: None,
            sweep_hi: None,
            subjects_per_cluster_mean: s.subjects_per_cluster_mean,
            n_modules: s.n_modules,
            module_size_mean: s.module_size_mean,
            n_confounders: s.n_confounders,
            modules_per_confounder: s.modules_per_confounder,
            n_noise: s.n_noise,
            sigma0: s.sigma0,
            sigma1: s.sigma1,
            sigma2: s.sigma2,
            sigma3: s.sigma3,
            fold_change_lo: s.fold_change_lo,
            fold_change_hi: s.fold_change_hi,
            wishart_nu: s.wishart_nu,
            wishart_phi_mix: s.wishart_phi_mix,
            noise_mean_lo: s.noise_mean_lo,
            noise_mean_hi: s.noise_mean_hi,
        }
    }
}

/// Seed of replicate `b` (1-based) under master seed `seed`.
pub fn replicate_seed(seed: u64, b: u64) -> u64 {
    RngStream::new(seed).child(Domain::Replicate, b).derived_seed()
}

fn value_to_text(v: &Value) -> String {
    match v {
        Value::Null => "none".into(),
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

fn invalid(key: &str, value: &str, reason: impl Into<String>) -> ConfigError {
    ConfigError::InvalidValue {
        key: key.into(),
        value: value.into(),
        reason: reason.into(),
    }
}

/// Parses `text` as the same JSON type as `template`.
fn text_to_value(key: &str, text: &str, template: &Value) -> Result<Value, ConfigError> {
    let number = |t: &str| -> Result<Value, ConfigError> {
        let f: f64 = t.parse().map_err(|_| invalid(key, t, "not a number"))?;
        serde_json::Number::from_f64(f)
            .map(Value::Number)
            .ok_or_else(|| invalid(key, t, "not finite"))
    };
    match template {
        Value::Bool(_) => text
            .parse::<bool>()
            .map(Value::Bool)
            .map_err(|_| invalid(key, text, "expected true or false")),
        Value::Number(n) if n.is_u64() => text
            .parse::<u64>()
            .map(Value::from)
            .map_err(|_| invalid(key, text, "expected a non-negative integer")),
        Value::Number(_) => number(text),
        Value::String(_) => Ok(Value::String(text.to_string())),
        Value::Null if text == "none" => Ok(Value::Null),
        Value::Null => number(text),
        _ => Err(invalid(key, text, "unsupported value")),
    }
}

impl RunConfig {
    fn as_map(&self) -> Map<String, Value> {
        match serde_json::to_value(self).expect("config serialises") {
            Value::Object(m) => m,
            _ => unreachable!("config serialises to an object"),
        }
    }

    /// Sets one key from its textual form.
    pub fn set(&mut self, key: &str, text: &str) -> Result<(), ConfigError> {
        let mut map = self.as_map();
        let template = map.get(key).ok_or_else(|| ConfigError::UnknownKey(key.into()))?;
        let v = text_to_value(key, text.trim(), template)?;
        map.insert(key.to_string(), v);
        *self = serde_json::from_value(Value::Object(map)).map_err(|e| invalid(key, text, e.to_string()))?;
        Ok(())
    }

    /// Applies every `key = value` line of `text`. Blank lines and lines
    /// starting with `#` are skipped.
    pub fn apply_text(&mut self, text: &str) -> Result<(), ConfigError> {
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or(ConfigError::Syntax { line: i + 1 })?;
            self.set(key.trim(), value.trim())?;
        }
        Ok(())
    }

    pub fn from_text(text: &str) -> Result<Self, ConfigError> {
        let mut c = Self::default();
        c.apply_text(text)?;
        Ok(c)
    }

    /// The flat file form, one sorted `key = value` line per field.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (k, v) in self.as_map() {
            let _ = writeln!(out, "{k} = {}", value_to_text(&v));
        }
        out
    }

    pub fn effective_seed(&self) -> u64 {
        if self.replicate == 0 {
            self.seed
        } else {
            replicate_seed(self.seed, self.replicate)
        }
    }

    pub fn hyperparameters(&self) -> Hyperparameters {
        Hyperparameters {
            c: self.c,
            a_p: self.a_p,
            b_p: self.b_p,
            a_sigma: self.a_sigma,
            b_sigma: self.b_sigma,
            a_tau_mu0: self.a_tau_mu0,
            b_tau_mu0: self.b_tau_mu0,
            a_tau_mu1: self.a_tau_mu1,
            b_tau_mu1: self.b_tau_mu1,
            a_tau_u0: self.a_tau_u0,
            b_tau_u0: self.b_tau_u0,
            a_tau_u1: self.a_tau_u1,
            b_tau_u1: self.b_tau_u1,
            k: self.k,
            n_total: self.nt,
            n_burnin: self.nb,
        }
    }

    pub fn gibbs(&self) -> GibbsConfig {
        GibbsConfig {
            hyper: self.hyperparameters(),
            seed: self.effective_seed(),
            guided: self.guided,
            thin: self.thin,
            keep_draws: self.keep_draws,
            init: self.init,
            selection: self.selection,
        }
    }

    pub fn simulation(&self) -> SimulationConfig {
        SimulationConfig {
            k: self.k,
            subjects_per_cluster_mean: self.subjects_per_cluster_mean,
            n_modules: self.n_modules,
            module_size_mean: self.module_size_mean,
            n_confounders: self.n_confounders,
            modules_per_confounder: self.modules_per_confounder,
            n_noise: self.n_noise,
            sigma0: self.sigma0,
            sigma1: self.sigma1,
            sigma2: self.sigma2,
            sigma3: self.sigma3,
            fold_change_lo: self.fold_change_lo,
            fold_change_hi: self.fold_change_hi,
            wishart_nu: self.wishart_nu,
            wishart_phi_mix: self.wishart_phi_mix,
            noise_mean_lo: self.noise_mean_lo,
            noise_mean_hi: self.noise_mean_hi,
            seed: self.effective_seed(),
        }
    }

    pub fn selection(&self) -> SelectionMode {
        if self.top_m > 0 {
            SelectionMode::TopM(self.top_m)
        } else {
            SelectionMode::ByFdr(self.fdr)
        }
    }

    pub fn clinical_columns(&self) -> ClinicalColumns {
        ClinicalColumns {
            outcome: self.outcome_column.clone(),
            time: self.time_column.clone(),
            event: self.event_column.clone(),
        }
    }

    pub fn k_range(&self) -> Vec<usize> {
        (self.k_min..=self.k_max).collect()
    }

    /// Grid of the configured sweep axis.
    pub fn sweep_grid(&self) -> Vec<f64> {
        let (lo, hi) = self.sweep_axis.default_range();
        linear_grid(self.sweep_lo.unwrap_or(lo), self.sweep_hi.unwrap_or(hi), self.sweep_points)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn text_round_trip_is_lossless() {
        let mut c = RunConfig::default();
        c.set("sigma1", "5").unwrap();
        c.set("b_tau_mu0", "0.1").unwrap();
        c.set("sweep_lo", "0.30000000000000004").unwrap();
        c.set("no_such", "1").unwrap_err();
        c.set("outcome_kind", "survival").unwrap();
        c.set("init", "uniform").unwrap();
        c.set("selection", "conditional").unwrap();
        let text = c.to_text();
        assert!(text.contains("sigma1 = 5.0\n"));
        assert!(text.contains("sweep_hi = none\n"));
        assert_eq!(RunConfig::from_text(&text).unwrap(), c);
        assert_eq!(RunConfig::from_text(&RunConfig::default().to_text()).unwrap(), RunConfig::default());
    }

    #[test]
    fn bad_lines_are_reported() {
        assert_eq!(RunConfig::from_text("seed 3"), Err(ConfigError::Syntax { line: 1 }));
        assert!(matches!(
            RunConfig::from_text("# comment\n\nnt = -4"),
            Err(ConfigError::InvalidValue { .. })
        ));
        assert!(matches!(RunConfig::from_text("guided = yes"), Err(ConfigError::InvalidValue { .. })));
    }

    #[test]
    fn default_grids_have_ten_exact_points() {
        for axis in SweepAxis::ALL {
            let c = RunConfig {
                sweep_axis: axis,
                ..Default::default()
            };
            let g = c.sweep_grid();
            let (lo, hi) = axis.default_range();
            assert_eq!(g.len(), 10);
            assert_eq!(g[0], lo);
            assert_eq!(g[9], hi);
            assert!(g.windows(2).all(|w| w[1] > w[0]));
        }
        assert!((linear_grid(1.1, 2.0, 10)[1] - 1.2).abs() < 1e-12);
    }

    #[test]
    fn defaults_match_model_defaults() {
        let c = RunConfig::default();
        assert_eq!(c.hyperparameters(), Hyperparameters::default());
        assert_eq!(c.simulation(), SimulationConfig::default());
        assert_eq!(c.selection(), SelectionMode::ByFdr(0.001));
        assert_eq!(c.k_range(), vec![2, 3, 4, 5, 6]);
    }
}
