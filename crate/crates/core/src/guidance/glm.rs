//! Univariate logistic and proportional-odds (cumulative logit) fits by
//! Newton–Raphson with step halving.

use nalgebra::{DMatrix, DVector};

use super::{pseudo_r2, GuidanceError};

const MAX_ITER: usize = 100;
const MAX_HALVINGS: usize = 30;
const GRAD_TOL: f64 = 1e-9;
/// Coefficients beyond this magnitude indicate (quasi-)separation.
pub const SEPARATION_BOUND: f64 = 15.0;

#[inline]
fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// log σ(z), stable for large |z|.
#[inline]
fn log_sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        -(-z).exp().ln_1p()
    } else {
        z - z.exp().ln_1p()
    }
}

/// Result of a univariate GLM fit.
#[derive(Debug, Clone, PartialEq)]
pub struct GlmFit {
    pub loglik_null: f64,
    pub loglik: f64,
    pub slope: f64,
    pub iterations: usize,
}

impl GlmFit {
    pub fn pseudo_r2(&self, n: usize) -> f64 {
        pseudo_r2(self.loglik_null, self.loglik, n)
    }
}

/// Logistic regression of `y ∈ {0,1}` on `(1, x)`.
pub fn fit_logistic(x: &[f64], y: &[u8]) -> Result<GlmFit, GuidanceError> {
    let n = x.len();
    let ones = y.iter().filter(|&&v| v == 1).count();
    if ones == 0 || ones == n {
        return Err(GuidanceError::SingleClass);
    }
    let p0 = ones as f64 / n as f64;
    let loglik_null = ones as f64 * p0.ln() + (n - ones) as f64 * (1.0 - p0).ln();

    let loglik = |b0: f64, b1: f64| -> f64 {
        x.iter()
            .zip(y)
            .map(|(&xi, &yi)| {
                let eta = b0 + b1 * xi;
                if yi == 1 {
                    log_sigmoid(eta)
                } else {
                    log_sigmoid(-eta)
                }
            })
            .sum()
    };

    let mut beta = [(p0 / (1.0 - p0)).ln(), 0.0];
    let mut ll = loglik(beta[0], beta[1]);
    for iter in 1..=MAX_ITER {
        let (mut g0, mut g1, mut h00, mut h01, mut h11) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for (&xi, &yi) in x.iter().zip(y) {
            let mu = sigmoid(beta[0] + beta[1] * xi);
            let r = yi as f64 - mu;
            let w = mu * (1.0 - mu);
            g0 += r;
            g1 += r * xi;
            h00 += w;
            h01 += w * xi;
            h11 += w * xi * xi;
        }
        if g0.abs().max(g1.abs()) < GRAD_TOL {
            return finish_logistic(loglik_null, ll, beta, iter);
        }
        let det = h00 * h11 - h01 * h01;
        if !(det > 0.0) {
            return Err(GuidanceError::NonConvergence { iterations: iter });
        }
        let step = [(h11 * g0 - h01 * g1) / det, (h00 * g1 - h01 * g0) / det];
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..MAX_HALVINGS {
            let cand = [beta[0] + t * step[0], beta[1] + t * step[1]];
            let ll_new = loglik(cand[0], cand[1]);
            if ll_new >= ll - 1e-12 * (1.0 + ll.abs()) {
                beta = cand;
                ll = ll_new.max(ll);
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if beta[1].abs() > SEPARATION_BOUND {
            return Err(GuidanceError::SeparationDetected {
                capped_r2: pseudo_r2(loglik_null, ll, n),
            });
        }
        if !accepted || (t * step[0]).abs().max((t * step[1]).abs()) < 1e-14 {
            return finish_logistic(loglik_null, ll, beta, iter);
        }
    }
    Err(GuidanceError::NonConvergence {
        iterations: MAX_ITER,
    })
}

fn finish_logistic(
    loglik_null: f64,
    loglik: f64,
    beta: [f64; 2],
    iterations: usize,
) -> Result<GlmFit, GuidanceError> {
    Ok(GlmFit {
        loglik_null,
        loglik: loglik.max(loglik_null),
        slope: beta[1],
        iterations,
    })
}

/// Proportional-odds model P(Y ≤ j) = σ(θ_j − βx) for ordered levels.
/// Levels are the distinct values of `y` in ascending order.
pub fn fit_proportional_odds(x: &[f64], y: &[u32]) -> Result<GlmFit, GuidanceError> {
    let n = x.len();
    let mut levels = y.to_vec();
    levels.sort_unstable();
    levels.dedup();
    let j = levels.len();
    if j < 2 {
        return Err(GuidanceError::SingleClass);
    }
    let cat: Vec<usize> = y
        .iter()
        .map(|v| levels.binary_search(v).expect("level present"))
        .collect();
    let mut counts = vec![0usize; j];
    for &c in &cat {
        counts[c] += 1;
    }
    let loglik_null: f64 = counts
        .iter()
        .map(|&c| c as f64 * (c as f64 / n as f64).ln())
        .sum();

    // Parameters: θ_0 < … < θ_{J−2}, then β.
    let dim = j;
    let mut params = DVector::<f64>::zeros(dim);
    let mut cum = 0usize;
    for l in 0..j - 1 {
        cum += counts[l];
        let q = cum as f64 / n as f64;
        params[l] = (q / (1.0 - q)).ln();
    }

    let loglik = |p: &DVector<f64>| -> Option<f64> {
        for l in 1..j - 1 {
            if p[l] <= p[l - 1] {
                return None;
            }
        }
        let beta = p[j - 1];
        let mut ll = 0.0;
        for (&xi, &c) in x.iter().zip(&cat) {
            let eta = beta * xi;
            let prob = category_prob(p, j, c, eta);
            if !(prob > 0.0) {
                return Some(f64::NEG_INFINITY);
            }
            ll += prob.ln();
        }
        Some(ll)
    };

    let mut ll = loglik(&params).expect("ordered start");
    for iter in 1..=MAX_ITER {
        let (grad, hess) = po_derivatives(&params, j, x, &cat);
        if grad.amax() < GRAD_TOL {
            return Ok(GlmFit {
                loglik_null,
                loglik: ll.max(loglik_null),
                slope: params[j - 1],
                iterations: iter,
            });
        }
        let neg_h = -hess;
        let step = match neg_h.clone().cholesky() {
            Some(ch) => ch.solve(&grad),
            None => match neg_h.lu().solve(&grad) {
                Some(s) => s,
                None => return Err(GuidanceError::NonConvergence { iterations: iter }),
            },
        };
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..MAX_HALVINGS {
            let cand = &params + &step * t;
            if let Some(ll_new) = loglik(&cand) {
                if ll_new >= ll - 1e-12 * (1.0 + ll.abs()) {
                    params = cand;
                    ll = ll_new.max(ll);
                    accepted = true;
                    break;
                }
            }
            t *= 0.5;
        }
        if params[j - 1].abs() > SEPARATION_BOUND {
            return Err(GuidanceError::SeparationDetected {
                capped_r2: pseudo_r2(loglik_null, ll, n),
            });
        }
        if !accepted || (step.amax() * t) < 1e-14 {
            return Ok(GlmFit {
                loglik_null,
                loglik: ll.max(loglik_null),
                slope: params[j - 1],
                iterations: iter,
            });
        }
    }
    Err(GuidanceError::NonConvergence {
        iterations: MAX_ITER,
    })
}

#[inline]
fn upper_cdf(p: &DVector<f64>, j: usize, c: usize, eta: f64) -> (f64, f64) {
    // returns (F(θ_c − η), f(θ_c − η)) with θ_{J−1} = +∞
    if c >= j - 1 {
        (1.0, 0.0)
    } else {
        let s = sigmoid(p[c] - eta);
        (s, s * (1.0 - s))
    }
}

#[inline]
fn lower_cdf(p: &DVector<f64>, c: usize, eta: f64) -> (f64, f64) {
    // (F(θ_{c−1} − η), f(θ_{c−1} − η)) with θ_{−1} = −∞
    if c == 0 {
        (0.0, 0.0)
    } else {
        let s = sigmoid(p[c - 1] - eta);
        (s, s * (1.0 - s))
    }
}

fn category_prob(p: &DVector<f64>, j: usize, c: usize, eta: f64) -> f64 {
    let (fu, _) = upper_cdf(p, j, c, eta);
    let (fl, _) = lower_cdf(p, c, eta);
    fu - fl
}

/// Gradient and Hessian of the proportional-odds log-likelihood.
fn po_derivatives(
    p: &DVector<f64>,
    j: usize,
    x: &[f64],
    cat: &[usize],
) -> (DVector<f64>, DMatrix<f64>) {
    let dim = j;
    let bi = j - 1;
    let mut grad = DVector::zeros(dim);
    let mut hess = DMatrix::zeros(dim, dim);
    for (&xi, &c) in x.iter().zip(cat) {
        let eta = p[bi] * xi;
        let (fu, du) = upper_cdf(p, j, c, eta);
        let (fl, dl) = lower_cdf(p, c, eta);
        let prob = fu - fl;
        // f'(z) = f(z)(1 − 2F(z))
        let d2u = du * (1.0 - 2.0 * fu);
        let d2l = dl * (1.0 - 2.0 * fl);

        // First derivatives of prob, as sparse (index, value) pairs.
        let mut dp: Vec<(usize, f64)> = Vec::with_capacity(3);
        if c < j - 1 {
            dp.push((c, du));
        }
        if c > 0 {
            dp.push((c - 1, -dl));
        }
        dp.push((bi, -xi * (du - dl)));

        for &(a, va) in &dp {
            grad[a] += va / prob;
            for &(b, vb) in &dp {
                hess[(a, b)] -= va * vb / (prob * prob);
            }
        }
        // Second derivatives of prob.
        if c < j - 1 {
            hess[(c, c)] += d2u / prob;
            hess[(c, bi)] += -xi * d2u / prob;
            hess[(bi, c)] += -xi * d2u / prob;
        }
        if c > 0 {
            hess[(c - 1, c - 1)] += -d2l / prob;
            hess[(c - 1, bi)] += xi * d2l / prob;
            hess[(bi, c - 1)] += xi * d2l / prob;
        }
        hess[(bi, bi)] += xi * xi * (d2u - d2l) / prob;
    }
    (grad, hess)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn logistic_no_effect_gives_zero() {
        // x balanced within each class: slope is exactly 0 at the optimum
        let x = [1.0, 2.0, 1.0, 2.0];
        let y = [0, 0, 1, 1];
        let fit = fit_logistic(&x, &y).unwrap();
        assert!(fit.slope.abs() < 1e-8);
        assert!(fit.pseudo_r2(4).abs() < 1e-12);
    }

    #[test]
    fn logistic_separation_is_reported() {
        let x = [1.0, 2.0, 3.0, 4.0];
        let y = [0, 0, 1, 1];
        assert!(matches!(
            fit_logistic(&x, &y),
            Err(GuidanceError::SeparationDetected { .. })
        ));
    }

    #[test]
    fn two_level_ordinal_matches_logistic() {
        let x = [0.3, -1.2, 0.8, 2.0, -0.5, 1.1, 0.0, -2.2, 0.4, 1.6];
        let yb = [0u8, 0, 1, 1, 0, 0, 1, 0, 1, 1];
        let yo: Vec<u32> = yb.iter().map(|&v| v as u32 + 3).collect();
        let lg = fit_logistic(&x, &yb).unwrap();
        let po = fit_proportional_odds(&x, &yo).unwrap();
        assert!((lg.pseudo_r2(10) - po.pseudo_r2(10)).abs() < 1e-10);
        assert!((lg.slope - po.slope).abs() < 1e-6);
    }

    #[test]
    fn ordinal_gradient_vanishes_at_optimum() {
        let x = [0.3, -1.2, 0.8, 2.0, -0.5, 1.1, 0.0, -2.2, 0.4, 1.6, 0.9, -0.1];
        let y = [1u32, 0, 2, 2, 0, 1, 1, 0, 2, 1, 0, 2];
        let fit = fit_proportional_odds(&x, &y).unwrap();
        assert!(fit.loglik >= fit.loglik_null);
        assert!(fit.slope > 0.0);
    }
}
