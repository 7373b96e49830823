mod common;

use common::mean_se;
use gbclust::data::{standardize_genes, ExpressionMatrix, Matrix, ModelState};
use gbclust::distributions::{self as dist, Domain, RngStream};
use gbclust::inference::cluster_decision;
use gbclust::metrics::adjusted_rand_index;
use gbclust::sampler::{
    initialize_state, run_gibbs, update_assignments, update_gene_selection, update_means, update_p, update_pi,
    update_tau2, update_variances, GibbsConfig, Tau2,
};
use gbclust::trace::PosteriorTrace;

/// `informative` genes shifted by ±`shift` between two equal halves of the
/// samples, the rest pure noise.
fn two_cluster_fixture(genes: usize, informative: usize, n: usize, shift: f64, seed: u64) -> (ExpressionMatrix, Vec<usize>) {
    let mut r = RngStream::new(seed).rng();
    let truth: Vec<usize> = (0..n).map(|i| 1 + usize::from(i >= n / 2)).collect();
    let mut x = Matrix::zeros(genes, n);
    for g in 0..genes {
        for i in 0..n {
            let m = if g < informative {
                if truth[i] == 1 {
                    -shift
                } else {
                    shift
                }
            } else {
                0.0
            };
            x.set(g, i, dist::normal(&mut r, m, 1.0).unwrap());
        }
    }
    (standardize_genes(&ExpressionMatrix::with_default_ids(x).unwrap()).unwrap(), truth)
}

fn config(seed: u64, k: usize, nt: usize, nb: usize, guided: bool) -> GibbsConfig {
    let mut cfg = GibbsConfig {
        seed,
        guided,
        ..Default::default()
    };
    cfg.hyper.k = k;
    cfg.hyper.n_total = nt;
    cfg.hyper.n_burnin = nb;
    cfg
}

#[test]
fn separated_two_cluster_fixture_is_recovered_over_fifty_seeds() {
    let (expr, truth) = two_cluster_fixture(40, 10, 100, 2.0, 77);
    let mut perfect = 0;
    for seed in 0..50 {
        let trace = run_gibbs(&expr, None, &config(seed, 2, 200, 100, false)).unwrap();
        let labels = cluster_decision(&trace).unwrap().labels;
        if adjusted_rand_index(&labels, &truth).unwrap() == 1.0 {
            perfect += 1;
        }
    }
    assert!(perfect as f64 >= 0.99 * 50.0, "ARI = 1 in only {perfect} of 50 runs");
}

/// The guided model with U ≡ 0.5 and τ²_U0 = τ²_U1 held fixed contributes a
/// zero guidance term to step 6, so it must target the unguided posterior.
fn neutral_guided_chain(expr: &ExpressionMatrix, cfg: &GibbsConfig) -> PosteriorTrace {
    let h = &cfg.hyper;
    let u = vec![0.5; expr.n_genes()];
    let mut state: ModelState = initialize_state(expr, None, &GibbsConfig { guided: false, ..cfg.clone() }).unwrap();
    state.tau2_u0 = 0.3;
    state.tau2_u1 = 0.3;
    let mut trace = PosteriorTrace::new(expr.n_genes(), expr.n_samples(), h.k, true, false);
    let root = RngStream::new(cfg.seed ^ 0x5A5A);
    for t in 0..h.n_total {
        let it = root.child(Domain::Iteration, t as u64);
        let s = |i| it.child(Domain::Step, i);
        update_p(&mut state, h, &s(1)).unwrap();
        update_tau2(&mut state, Some(&u), h, Tau2::Mu0, &s(2)).unwrap();
        update_tau2(&mut state, Some(&u), h, Tau2::Mu1, &s(3)).unwrap();
        update_gene_selection(&mut state, Some(&u), &s(6));
        update_pi(&mut state, h, &s(7)).unwrap();
        update_assignments(&mut state, expr, &s(8)).unwrap();
        update_means(&mut state, expr, &s(9)).unwrap();
        update_variances(&mut state, expr, h, &s(10)).unwrap();
        if t >= h.n_burnin {
            trace.record(&state);
        }
    }
    trace
}

#[test]
fn unguided_chain_equals_guided_chain_with_neutral_guidance() {
    let (expr, _) = two_cluster_fixture(20, 6, 30, 0.9, 5);
    let chains = 8;
    let (mut plain, mut neutral) = (Vec::new(), Vec::new());
    for c in 0..chains {
        let cfg = config(100 + c, 2, 1500, 300, false);
        plain.push(run_gibbs(&expr, None, &cfg).unwrap().inclusion_frequency());
        neutral.push(neutral_guided_chain(&expr, &cfg).inclusion_frequency());
    }
    for g in 0..20 {
        let a: Vec<f64> = plain.iter().map(|f| f[g]).collect();
        let b: Vec<f64> = neutral.iter().map(|f| f[g]).collect();
        let ((ma, sa), (mb, sb)) = (mean_se(&a), mean_se(&b));
        let tol = (4.0 * (sa * sa + sb * sb).sqrt()).max(0.03);
        assert!((ma - mb).abs() <= tol, "gene {g}: unguided {ma:.3} vs neutral guided {mb:.3} (tol {tol:.3})");
    }
}

#[test]
fn chain_output_does_not_depend_on_thread_count() {
    let (expr, _) = two_cluster_fixture(300, 30, 60, 1.0, 9);
    let u: Vec<f64> = (0..300).map(|g| if g < 30 { 0.8 } else { (g % 10) as f64 / 20.0 }).collect();
    let mut cfg = config(4, 3, 60, 20, true);
    cfg.keep_draws = true;
    let run = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| run_gibbs(&expr, Some(&u), &cfg).unwrap())
    };
    let one = run(1);
    let four = run(4);
    assert_eq!(one.draws, four.draws);
    assert_eq!(one.diagnostics, four.diagnostics);
    assert_eq!(one.inclusion_frequency(), four.inclusion_frequency());
}

#[test]
fn initial_state_is_reproducible_and_has_unit_variances() {
    let (expr, _) = two_cluster_fixture(50, 5, 300, 1.0, 3);
    let cfg = config(8, 3, 10, 5, false);
    let a = initialize_state(&expr, None, &cfg).unwrap();
    let b = initialize_state(&expr, None, &cfg).unwrap();
    assert_eq!(a, b);
    assert!(a.sigma2.iter().all(|s| (s - 1.0).abs() < 1e-10));
    assert!(a.cluster_sizes().iter().all(|&n| n > 0));
}

#[test]
fn default_iteration_counts_retain_five_hundred_draws() {
    let (expr, _) = two_cluster_fixture(10, 3, 12, 1.0, 1);
    let trace = run_gibbs(&expr, None, &config(1, 2, 1000, 500, false)).unwrap();
    assert_eq!(trace.n_retained(), 500);
    assert_eq!(trace.diagnostics.len(), 1000);
}
