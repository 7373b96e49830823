//! Joint-distribution check of the whole sweep on a tiny model (G=5, n=10,
//! K=2): moments from independent prior-predictive draws must match those of
//! the chain that alternates "simulate data given θ" with "one Gibbs sweep
//! given data".

mod common;

use common::{batch_mean_se, mean_se};
use gbclust::data::{ExpressionMatrix, Hyperparameters, Matrix, ModelState};
use gbclust::distributions::{self as dist, Domain, RngStream, StreamRng};
use gbclust::sampler::{gibbs_sweep, SelectionUpdate};

const G: usize = 5;
const N: usize = 10;
const K: usize = 2;
const ROUNDS: usize = 10_000;

fn hyper() -> Hyperparameters {
    Hyperparameters {
        c: 1.0,
        a_p: 2.0,
        b_p: 2.0,
        a_sigma: 5.0,
        b_sigma: 4.0,
        a_tau_mu0: 5.0,
        b_tau_mu0: 0.2,
        a_tau_mu1: 5.0,
        b_tau_mu1: 8.0,
        a_tau_u0: 5.0,
        b_tau_u0: 0.2,
        a_tau_u1: 5.0,
        b_tau_u1: 0.4,
        k: K,
        n_total: 1,
        n_burnin: 0,
    }
}

fn prior_draw(h: &Hyperparameters, r: &mut StreamRng) -> ModelState {
    let p = dist::beta(r, h.a_p, h.b_p).unwrap();
    let tau2_mu0 = dist::inverse_gamma(r, h.a_tau_mu0, h.b_tau_mu0).unwrap();
    let tau2_mu1 = dist::inverse_gamma(r, h.a_tau_mu1, h.b_tau_mu1).unwrap();
    let tau2_u0 = dist::inverse_gamma(r, h.a_tau_u0, h.b_tau_u0).unwrap();
    let tau2_u1 = dist::inverse_gamma(r, h.a_tau_u1, h.b_tau_u1).unwrap();
    let selected: Vec<bool> = (0..G).map(|_| dist::bernoulli(r, p).unwrap()).collect();
    let mut mu = Matrix::zeros(G, K);
    for g in 0..G {
        let t = if selected[g] { tau2_mu1 } else { tau2_mu0 };
        for k in 0..K {
            mu.set(g, k, dist::normal(r, 0.0, t).unwrap());
        }
    }
    let sigma2 = (0..G).map(|_| dist::inverse_gamma(r, h.a_sigma, h.b_sigma).unwrap()).collect();
    let pi = dist::dirichlet(r, &[h.c; K]).unwrap();
    let log_pi: Vec<f64> = pi.iter().map(|v| v.ln()).collect();
    let z = (0..N).map(|_| dist::categorical_log(r, &log_pi).unwrap()).collect();
    ModelState {
        pi,
        mu,
        sigma2,
        selected,
        z,
        p,
        tau2_mu0,
        tau2_mu1,
        tau2_u0,
        tau2_u1,
    }
}

fn simulate_data(s: &ModelState, r: &mut StreamRng) -> (ExpressionMatrix, Vec<f64>) {
    let mut x = Matrix::zeros(G, N);
    for g in 0..G {
        for i in 0..N {
            x.set(g, i, dist::normal(r, s.mu.get(g, s.z[i]), s.sigma2[g]).unwrap());
        }
    }
    let u = (0..G)
        .map(|g| {
            if s.selected[g] {
                dist::normal(r, 1.0, s.tau2_u1).unwrap()
            } else {
                dist::normal(r, 0.0, s.tau2_u0).unwrap()
            }
        })
        .collect();
    (ExpressionMatrix::with_default_ids(x).unwrap(), u)
}

const NAMES: [&str; 12] = [
    "p",
    "p^2",
    "tau2_mu0",
    "tau2_mu1",
    "tau2_u0",
    "tau2_u1",
    "pi_1",
    "selected fraction",
    "mean mu^2",
    "mean sigma2",
    "Z_1 == Z_2",
    "standardised residual SS",
];

fn statistics(s: &ModelState, x: &ExpressionMatrix, guided: bool) -> Vec<f64> {
    let mean_mu2 = s.mu.as_slice().iter().map(|m| m * m).sum::<f64>() / (G * K) as f64;
    let mut resid = 0.0;
    for g in 0..G {
        for i in 0..N {
            resid += (x.gene(g)[i] - s.mu.get(g, s.z[i])).powi(2) / s.sigma2[g];
        }
    }
    vec![
        s.p,
        s.p * s.p,
        s.tau2_mu0,
        s.tau2_mu1,
        if guided { s.tau2_u0 } else { 0.0 },
        if guided { s.tau2_u1 } else { 0.0 },
        s.pi[0],
        s.n_selected() as f64 / G as f64,
        mean_mu2,
        s.sigma2.iter().sum::<f64>() / G as f64,
        f64::from(u8::from(s.z[0] == s.z[1])),
        resid,
    ]
}

fn check(guided: bool, selection: SelectionUpdate, seed: u64) {
    let h = hyper();
    let root = RngStream::new(seed);

    let mut forward = vec![Vec::with_capacity(ROUNDS); NAMES.len()];
    let mut r = root.child(Domain::Replicate, 0).rng();
    for _ in 0..ROUNDS {
        let s = prior_draw(&h, &mut r);
        let (x, _) = simulate_data(&s, &mut r);
        for (acc, v) in forward.iter_mut().zip(statistics(&s, &x, guided)) {
            acc.push(v);
        }
    }

    let mut chain = vec![Vec::with_capacity(ROUNDS); NAMES.len()];
    let mut r = root.child(Domain::Replicate, 1).rng();
    let mut s = prior_draw(&h, &mut r);
    for t in 0..ROUNDS {
        let (x, u) = simulate_data(&s, &mut r);
        for (acc, v) in chain.iter_mut().zip(statistics(&s, &x, guided)) {
            acc.push(v);
        }
        let u = guided.then_some(&u[..]);
        gibbs_sweep(&mut s, &x, u, &h, selection, &root.child(Domain::Iteration, t as u64)).unwrap();
    }

    let mut failures = Vec::new();
    for (j, name) in NAMES.iter().enumerate() {
        let (m_f, se_f) = mean_se(&forward[j]);
        let (m_c, se_c) = batch_mean_se(&chain[j], 50);
        let se = (se_f * se_f + se_c * se_c).sqrt();
        if se == 0.0 {
            continue;
        }
        let z = (m_f - m_c) / se;
        if z.abs() > 4.0 {
            failures.push(format!("{name}: forward {m_f:.5} vs chain {m_c:.5} (z = {z:.2})"));
        }
    }
    assert!(failures.is_empty(), "{}", failures.join("\n"));
}

#[test]
pub fn guided_sweep_leaves_the_joint_distribution_invariant() {
    check(true, SelectionUpdate::Blocked, 2024);
}

#[test]
pub fn unguided_sweep_leaves_the_joint_distribution_invariant() {
    check(false, SelectionUpdate::Blocked, 2025);
}

#[test]
pub fn conditional_selection_sweep_leaves_the_joint_distribution_invariant() {
    check(true, SelectionUpdate::Conditional, 2026);
    check(false, SelectionUpdate::Conditional, 2027);
}
