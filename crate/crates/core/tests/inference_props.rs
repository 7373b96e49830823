mod common;

use common::{expression, rng};
use gbclust::data::{standardize_genes, Matrix, ModelState};
use gbclust::distributions as dist;
use gbclust::inference::{
    bic, bic_penalty, cluster_decision, fdr_at_threshold, local_fdr, mixture_log_likelihood, select_genes, select_k,
    BicPenalty, InferenceError, SelectionMode,
};
use gbclust::sampler::GibbsConfig;
use gbclust::trace::PosteriorTrace;
use proptest::prelude::*;

fn state(selected: Vec<bool>, z: Vec<usize>, k: usize) -> ModelState {
    let g = selected.len();
    ModelState {
        pi: vec![1.0 / k as f64; k],
        mu: Matrix::zeros(g, k),
        sigma2: vec![1.0; g],
        selected,
        z,
        p: 0.5,
        tau2_mu0: 1.0,
        tau2_mu1: 1.0,
        tau2_u0: 1.0,
        tau2_u1: 1.0,
    }
}

#[test]
fn local_fdr_is_one_minus_inclusion_frequency() {
    let draws = [[true, false, true], [true, false, false], [true, true, false], [true, false, false]];
    let mut t = PosteriorTrace::new(3, 2, 2, false, false);
    for d in draws {
        t.record(&state(d.to_vec(), vec![0, 1], 2));
    }
    assert_eq!(local_fdr(&t).unwrap(), vec![0.0, 0.75, 0.75]);
    assert!(matches!(local_fdr(&PosteriorTrace::new(3, 2, 2, false, false)), Err(InferenceError::EmptyTrace)));
}

#[test]
fn cluster_labels_take_the_most_frequent_cluster_first_on_ties() {
    let mut t = PosteriorTrace::new(1, 3, 3, false, false);
    for z in [[0, 2, 1], [1, 2, 1], [1, 2, 0], [0, 2, 2]] {
        t.record(&state(vec![true], z.to_vec(), 3));
    }
    let d = cluster_decision(&t).unwrap();
    assert_eq!(d.labels, vec![1, 3, 2]);
    assert_eq!(d.soft.row(1), &[0.0, 0.0, 1.0]);
}

#[test]
fn mixture_log_likelihood_matches_direct_density_sum() {
    let rows = vec![vec![0.3, -1.2, 2.0, 0.1], vec![1.0, 0.5, -0.4, -1.1]];
    let expr = expression(&rows);
    let pi = [0.3, 0.7];
    let mu = Matrix::from_rows(&[vec![-0.5, 1.0], vec![0.2, -0.3]]).unwrap();
    let sigma2 = [0.8, 1.7];
    let normal = |x: f64, m: f64, v: f64| (-(x - m) * (x - m) / (2.0 * v)).exp() / (2.0 * std::f64::consts::PI * v).sqrt();
    let mut oracle = 0.0;
    for i in 0..4 {
        let mix: f64 = (0..2)
            .map(|k| pi[k] * (0..2).map(|g| normal(rows[g][i], mu.get(g, k), sigma2[g])).product::<f64>())
            .sum();
        oracle += mix.ln();
    }
    assert!((mixture_log_likelihood(&expr, &pi, &mu, &sigma2) - oracle).abs() < 1e-12);
}

#[test]
fn bic_penalty_values() {
    assert!((bic_penalty(3, 100, 50, BicPenalty::LogGenes) - 300.0 * 100f64.ln()).abs() < 1e-9);
    assert!((bic_penalty(3, 100, 50, BicPenalty::LogSamples) - 300.0 * 50f64.ln()).abs() < 1e-9);
}

#[test]
fn bic_uses_posterior_mean_plug_ins() {
    let expr = expression(&[vec![0.0, 1.0, -1.0]]);
    let mut t = PosteriorTrace::new(1, 3, 1, false, false);
    let mut s = state(vec![true], vec![0; 3], 1);
    s.sigma2 = vec![0.5];
    t.record(&s);
    s.sigma2 = vec![1.5];
    t.record(&s);
    // one cluster at mean 0 with σ² = 1
    let ll = -1.5 * (2.0 * std::f64::consts::PI).ln() - 1.0;
    let got = bic(&expr, &t, BicPenalty::LogGenes).unwrap();
    assert!((got - (-2.0 * ll + 0.0)).abs() < 1e-12);
}

#[test]
fn better_fitting_means_have_higher_likelihood() {
    let mut r = rng(3);
    let x: Vec<f64> = (0..40).map(|i| if i < 20 { -2.0 } else { 2.0 } + 0.3 * dist::standard_normal(&mut r)).collect();
    let expr = expression(&[x]);
    let ll = |m: f64| {
        let mu = Matrix::from_rows(&[vec![-m, m]]).unwrap();
        mixture_log_likelihood(&expr, &[0.5, 0.5], &mu, &[0.1])
    };
    let values: Vec<f64> = [0.0, 0.5, 1.0, 1.5, 2.0].iter().map(|&m| ll(m)).collect();
    assert!(values.windows(2).all(|w| w[1] > w[0]), "{values:?}");
}

#[test]
fn select_k_returns_one_bic_per_requested_k() {
    let mut r = rng(11);
    let rows: Vec<Vec<f64>> = (0..8)
        .map(|g| (0..30).map(|i| if g < 3 && i < 15 { 2.0 } else { 0.0 } + dist::standard_normal(&mut r)).collect())
        .collect();
    let expr = standardize_genes(&expression(&rows)).unwrap();
    let mut cfg = GibbsConfig { seed: 5, guided: false, ..Default::default() };
    cfg.hyper.n_total = 40;
    cfg.hyper.n_burnin = 20;
    let one = select_k(&expr, None, &cfg, &[2], BicPenalty::LogGenes).unwrap();
    assert_eq!(one.best_k, 2);
    assert_eq!(one.curve.len(), 1);
    let many = select_k(&expr, None, &cfg, &[4, 2, 3], BicPenalty::LogGenes).unwrap();
    assert_eq!(many.curve.iter().map(|c| c.0).collect::<Vec<_>>(), vec![4, 2, 3]);
    let min = many.curve.iter().map(|c| c.1).fold(f64::INFINITY, f64::min);
    assert_eq!(many.curve.iter().find(|c| c.1 == min).unwrap().0, many.best_k);
    assert_eq!(many.curve[1], one.curve[0]);
    assert!(matches!(select_k(&expr, None, &cfg, &[], BicPenalty::LogGenes), Err(InferenceError::EmptyKRange)));
}

proptest! {
    #[test]
    fn expected_fdr_is_nondecreasing_in_the_threshold(
        p in prop::collection::vec(0.0f64..1.0, 1..60),
        mut etas in prop::collection::vec(0.0f64..1.0, 2..10),
    ) {
        etas.sort_by(f64::total_cmp);
        let fdrs: Vec<f64> = etas.iter().filter_map(|&e| fdr_at_threshold(&p, e)).collect();
        prop_assert!(fdrs.windows(2).all(|w| w[1] >= w[0] - 1e-15));
        prop_assert!(fdrs.iter().all(|&f| f <= etas[etas.len() - 1]));
    }

    #[test]
    fn top_m_reproduces_fdr_selection_on_distinct_values(
        p in prop::collection::btree_set(0u32..1_000_000, 1..60),
        eta in 0.001f64..0.999,
    ) {
        let p: Vec<f64> = p.into_iter().rev().map(|v| v as f64 / 1e6).collect();
        let by_fdr = select_genes(&p, SelectionMode::ByFdr(eta)).unwrap();
        let top = select_genes(&p, SelectionMode::TopM(by_fdr.selected.len())).unwrap();
        prop_assert_eq!(&top.selected, &by_fdr.selected);
        prop_assert_eq!(top.achieved_fdr, by_fdr.achieved_fdr);
    }

    #[test]
    fn selection_does_not_depend_on_gene_order(
        p in prop::collection::vec(0.0f64..1.0, 1..40),
        seed in any::<u64>(),
        eta in 0.01f64..0.99,
    ) {
        let mut perm: Vec<usize> = (0..p.len()).collect();
        let mut r = rng(seed);
        for i in (1..perm.len()).rev() {
            perm.swap(i, rand::Rng::random_range(&mut r, 0..=i));
        }
        let permuted: Vec<f64> = perm.iter().map(|&g| p[g]).collect();
        let a = select_genes(&p, SelectionMode::ByFdr(eta)).unwrap();
        let b = select_genes(&permuted, SelectionMode::ByFdr(eta)).unwrap();
        let mut mapped: Vec<usize> = b.selected.iter().map(|&j| perm[j]).collect();
        mapped.sort_unstable();
        prop_assert_eq!(mapped, a.selected);
        match (a.achieved_fdr, b.achieved_fdr) {
            (Some(x), Some(y)) => prop_assert!((x - y).abs() < 1e-12),
            (x, y) => prop_assert_eq!(x, y),
        }
    }

    #[test]
    fn invalid_thresholds_and_oversized_top_m_are_rejected(p in prop::collection::vec(0.0f64..1.0, 1..20)) {
        for eta in [0.0, 1.0, -0.5, f64::NAN] {
            prop_assert!(matches!(select_genes(&p, SelectionMode::ByFdr(eta)), Err(InferenceError::InvalidThreshold(_))));
        }
        let too_many = select_genes(&p, SelectionMode::TopM(p.len() + 1));
        prop_assert!(matches!(too_many, Err(InferenceError::TooManyGenes { .. })), "expected TooManyGenes");
    }
}
