//! Univariate Cox proportional-hazards fit on the Breslow partial
//! likelihood.

use super::{pseudo_r2, GuidanceError};

const MAX_ITER: usize = 50;
const GRAD_TOL: f64 = 1e-8;
/// Newton steps shorter than this count as converged.
const STEP_TOL: f64 = 1e-10;
const MAX_HALVINGS: usize = 10;
/// A standardised log hazard ratio beyond this means the partial likelihood
/// is monotone (β̂ = ±∞).
const DIVERGENCE_BOUND: f64 = 15.0;

#[derive(Debug, Clone, PartialEq)]
pub struct CoxFit {
    pub beta: f64,
    pub loglik_null: f64,
    pub loglik: f64,
    pub gradient: f64,
    pub iterations: usize,
}

impl CoxFit {
    pub fn pseudo_r2(&self, n: usize) -> f64 {
        pseudo_r2(self.loglik_null, self.loglik, n)
    }
}

/// Data sorted by descending time, with the covariate centred.
struct RiskSets {
    x: Vec<f64>,
    event: Vec<bool>,
    /// `tie_end[i]`: one past the last index whose time equals `time[i]`.
    /// With descending order, the risk set of `i` is `0..tie_end[i]`.
    tie_end: Vec<usize>,
}

impl RiskSets {
    fn new(x: &[f64], time: &[f64], event: &[bool]) -> Self {
        let mut order: Vec<usize> = (0..x.len()).collect();
        order.sort_by(|&a, &b| time[b].total_cmp(&time[a]));
        let centre = x.iter().sum::<f64>() / x.len() as f64;
        let xs: Vec<f64> = order.iter().map(|&i| x[i] - centre).collect();
        let ts: Vec<f64> = order.iter().map(|&i| time[i]).collect();
        let ev: Vec<bool> = order.iter().map(|&i| event[i]).collect();
        let n = xs.len();
        let mut tie_end = vec![n; n];
        let mut i = n;
        while i > 0 {
            let mut start = i - 1;
            while start > 0 && ts[start - 1] == ts[i - 1] {
                start -= 1;
            }
            for t in tie_end.iter_mut().take(i).skip(start) {
                *t = i;
            }
            i = start;
        }
        Self {
            x: xs,
            event: ev,
            tie_end,
        }
    }

    /// (log-likelihood, score, information) at `beta`.
    fn evaluate(&self, beta: f64) -> (f64, f64, f64) {
        let n = self.x.len();
        // Stabilise exp(βx) by the largest linear predictor.
        let shift = self
            .x
            .iter()
            .map(|&v| beta * v)
            .fold(f64::NEG_INFINITY, f64::max);
        let mut s0 = vec![0.0; n + 1];
        let mut s1 = vec![0.0; n + 1];
        let mut s2 = vec![0.0; n + 1];
        for i in 0..n {
            let w = (beta * self.x[i] - shift).exp();
            s0[i + 1] = s0[i] + w;
            s1[i + 1] = s1[i] + w * self.x[i];
            s2[i + 1] = s2[i] + w * self.x[i] * self.x[i];
        }
        let (mut ll, mut score, mut info) = (0.0, 0.0, 0.0);
        for i in 0..n {
            if !self.event[i] {
                continue;
            }
            let e = self.tie_end[i];
            let (a0, a1, a2) = (s0[e], s1[e], s2[e]);
            let xbar = a1 / a0;
            ll += beta * self.x[i] - shift - a0.ln();
            score += self.x[i] - xbar;
            info += a2 / a0 - xbar * xbar;
        }
        (ll, score, info)
    }
}

/// Newton–Raphson on β with step halving. The log-likelihood is invariant to
/// centring the covariate, which is done internally for stability.
pub fn fit_cox(x: &[f64], time: &[f64], event: &[bool]) -> Result<CoxFit, GuidanceError> {
    if !event.iter().any(|&e| e) {
        return Err(GuidanceError::NoEvents);
    }
    let rs = RiskSets::new(x, time, event);
    let sd = (rs.x.iter().map(|v| v * v).sum::<f64>() / rs.x.len() as f64).sqrt();
    let (loglik_null, mut score, mut info) = rs.evaluate(0.0);
    let mut beta = 0.0;
    let mut ll = loglik_null;
    for iter in 0..=MAX_ITER {
        if score.abs() < GRAD_TOL || (info > 0.0 && (score / info).abs() < STEP_TOL) {
            return Ok(CoxFit {
                beta,
                loglik_null,
                loglik: ll,
                gradient: score,
                iterations: iter,
            });
        }
        if iter == MAX_ITER || !(info > 0.0) {
            break;
        }
        let step = score / info;
        let mut t = 1.0;
        let mut moved = false;
        for _ in 0..=MAX_HALVINGS {
            let cand = beta + t * step;
            let (ll_new, s_new, i_new) = rs.evaluate(cand);
            if ll_new >= ll - 1e-12 * (1.0 + ll.abs()) {
                beta = cand;
                ll = ll_new.max(ll);
                score = s_new;
                info = i_new;
                moved = true;
                break;
            }
            t *= 0.5;
        }
        if !moved || (beta * sd).abs() > DIVERGENCE_BOUND {
            break;
        }
    }
    Err(GuidanceError::NonConvergence {
        iterations: MAX_ITER,
    })
}
