//! End-to-end acceptance checks. Each criterion writes one
//! `acceptance criterion N: PASS|FAIL` line to stderr (bypassing the test
//! harness capture) before asserting.

mod common;
#[path = "getting_it_right.rs"]
mod joint;
#[path = "sampler_conditionals.rs"]
mod conditionals;

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::sync::OnceLock;

use gbclust::config::{RunConfig, SweepAxis};
use gbclust::data::ClinicalOutcome;
use gbclust::inference::{bic_penalty, BicPenalty};
use gbclust::metrics::EvaluationReport;
use gbclust::pipeline::{
    choose_k, evaluate, fit, simulate, sweep, write_fit, write_simulation, GuidanceSource, Reference, TruthFile,
};
use gbclust::simulation::SimulatedDataset;
use rand::Rng;
use tempfile::TempDir;

const REPLICATES: u64 = 10;
const MASTER_SEED: u64 = 2024;

fn report(criterion: u32, pass: bool, detail: &str) {
    let verdict = if pass { "PASS" } else { "FAIL" };
    let mut err = std::io::stderr().lock();
    let _ = writeln!(err, "acceptance criterion {criterion}: {verdict} | {detail}");
}

fn replicate_config(sigma1: f64, b: u64) -> RunConfig {
    RunConfig {
        sigma1,
        seed: MASTER_SEED,
        replicate: b,
        ..Default::default()
    }
}

fn outcome(ds: &SimulatedDataset) -> GuidanceSource {
    GuidanceSource::Outcome(ClinicalOutcome::Continuous { y: ds.outcome.clone() })
}

struct Runs {
    guided: Vec<EvaluationReport>,
    unguided: Vec<EvaluationReport>,
}

fn mean(reports: &[EvaluationReport], f: impl Fn(&EvaluationReport) -> Option<f64>) -> f64 {
    reports.iter().map(|r| f(r).unwrap_or(0.0)).sum::<f64>() / reports.len() as f64
}

impl Runs {
    fn summary(&self) -> [f64; 5] {
        [
            mean(&self.guided, |r| r.ari),
            mean(&self.guided, |r| r.jaccard),
            mean(&self.guided, |r| r.auc),
            mean(&self.unguided, |r| r.ari),
            mean(&self.unguided, |r| r.auc),
        ]
    }
}

fn compute_runs(sigma1: f64) -> Runs {
    let (mut guided, mut unguided) = (Vec::new(), Vec::new());
    for b in 1..=REPLICATES {
        let cfg = replicate_config(sigma1, b);
        let ds = simulate(&cfg).unwrap();
        let truth = TruthFile::new(&ds);
        let source = outcome(&ds);
        for (is_guided, out) in [(true, &mut guided), (false, &mut unguided)] {
            let run = RunConfig { guided: is_guided, ..cfg.clone() };
            let res = fit(&ds.expr, &source, &run).unwrap();
            out.push(evaluate(&res.decisions(&run), Reference::Truth(&truth), None).unwrap());
        }
    }
    Runs { guided, unguided }
}

fn runs(sigma1: f64) -> &'static Runs {
    static CELLS: [OnceLock<Runs>; 3] = [OnceLock::new(), OnceLock::new(), OnceLock::new()];
    let i = match sigma1 {
        1.0 => 0,
        3.0 => 1,
        5.0 => 2,
        _ => unreachable!(),
    };
    CELLS[i].get_or_init(|| compute_runs(sigma1))
}

#[test]
fn criterion_1_guided_recovery_at_low_noise() {
    let [ari, jaccard, auc, ..] = runs(1.0).summary();
    let pass = ari >= 0.93 && jaccard >= 0.75 && auc >= 0.95;
    report(
        1,
        pass,
        &format!("guided mean ARI {ari:.3} (≥ 0.93), Jaccard {jaccard:.3} (≥ 0.75), AUC {auc:.3} (≥ 0.95), B = {REPLICATES}"),
    );
    assert!(pass);
}

#[test]
fn criterion_2_guidance_ablation_gap() {
    let [g_ari, .., u_ari, u_auc] = runs(1.0).summary();
    let gap = g_ari - u_ari;
    let pass = u_ari <= 0.5 && u_auc <= 0.75 && gap >= 0.3;
    report(
        2,
        pass,
        &format!("unguided mean ARI {u_ari:.3} (≤ 0.5), AUC {u_auc:.3} (≤ 0.75), guided − unguided ARI {gap:.3} (≥ 0.3)"),
    );
    assert!(pass);
}

#[test]
fn criterion_3_bic_selects_three_clusters() {
    let mut hits = 0;
    let mut log_n_hits = 0;
    let mut picks = Vec::new();
    for b in 1..=REPLICATES {
        let cfg = RunConfig {
            k_min: 2,
            k_max: 6,
            bic_penalty: BicPenalty::LogGenes,
            ..replicate_config(1.0, b)
        };
        let ds = simulate(&cfg).unwrap();
        let sel = choose_k(&ds.expr, &outcome(&ds), &cfg).unwrap();
        let (g, n) = (ds.expr.n_genes(), ds.expr.n_samples());
        // same chains under the log n penalty
        let log_n_best = sel
            .curve
            .iter()
            .map(|&(k, v)| {
                let shifted = v - bic_penalty(k, g, n, BicPenalty::LogGenes) + bic_penalty(k, g, n, BicPenalty::LogSamples);
                (k, shifted)
            })
            .fold((0, f64::INFINITY), |best, c| if c.1 < best.1 { c } else { best })
            .0;
        hits += usize::from(sel.best_k == 3);
        log_n_hits += usize::from(log_n_best == 3);
        let margin = |k: usize| sel.curve.iter().find(|c| c.0 == k).unwrap().1;
        picks.push(format!("{}(Δ23 {:+.0})", sel.best_k, margin(2) - margin(3)));
    }
    let pass = hits >= 8;
    report(
        3,
        pass,
        &format!(
            "K = 3 chosen in {hits}/{REPLICATES} replicates (≥ 8) under K·G·log G; picks {}; informational: K·G·log n penalty picks K = 3 in {log_n_hits}/{REPLICATES}",
            picks.join(" ")
        ),
    );
    assert!(pass);
}

/// At most one increase between adjacent levels, of at most `slack`.
fn nonincreasing_with_one_slip(values: &[f64], slack: f64) -> bool {
    let rises: Vec<f64> = values.windows(2).map(|w| w[1] - w[0]).filter(|&d| d > 0.0).collect();
    rises.is_empty() || (rises.len() == 1 && rises[0] <= slack)
}

#[test]
fn criterion_4_degradation_with_biological_noise() {
    let levels = [1.0, 3.0, 5.0];
    let all: Vec<&Runs> = levels.iter().map(|&s| runs(s)).collect();
    let g_ari: Vec<f64> = all.iter().map(|r| mean(&r.guided, |x| x.ari)).collect();
    let g_jac: Vec<f64> = all.iter().map(|r| mean(&r.guided, |x| x.jaccard)).collect();
    let u_ari: Vec<f64> = all.iter().map(|r| mean(&r.unguided, |x| x.ari)).collect();
    let u_jac: Vec<f64> = all.iter().map(|r| mean(&r.unguided, |x| x.jaccard)).collect();
    let trend = nonincreasing_with_one_slip(&g_ari, 0.05) && nonincreasing_with_one_slip(&g_jac, 0.05);
    let dominance = (0..3).all(|i| g_ari[i] >= u_ari[i] && g_jac[i] >= u_jac[i]);
    let pass = trend && dominance;
    let fmt = |v: &[f64]| v.iter().map(|x| format!("{x:.3}")).collect::<Vec<_>>().join("/");
    report(
        4,
        pass,
        &format!(
            "σ1 = 1/3/5: guided ARI {} Jaccard {}; unguided ARI {} Jaccard {}; B = {REPLICATES}",
            fmt(&g_ari),
            fmt(&g_jac),
            fmt(&u_ari),
            fmt(&u_jac)
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_5_hyperparameter_sensitivity_is_flat() {
    let base = replicate_config(1.0, 1);
    let ds = simulate(&base).unwrap();
    let truth = TruthFile::new(&ds);
    let source = outcome(&ds);
    let mut ranges = Vec::new();
    let mut pass = true;
    for axis in [SweepAxis::ATauMu0, SweepAxis::BTauMu0, SweepAxis::ATauMu1, SweepAxis::BTauMu1] {
        let cfg = RunConfig {
            sweep_axis: axis,
            sweep_points: 10,
            ..base.clone()
        };
        let rows = sweep(&ds.expr, &source, Reference::Truth(&truth), &cfg).unwrap();
        assert_eq!(rows.len(), 10);
        let aris: Vec<f64> = rows.iter().map(|r| r.report.ari.unwrap()).collect();
        let spread = aris.iter().cloned().fold(f64::MIN, f64::max) - aris.iter().cloned().fold(f64::MAX, f64::min);
        pass &= spread <= 0.10;
        ranges.push(format!("{} {spread:.3}", axis.name()));
    }
    report(5, pass, &format!("ARI max − min over 10 grid points (≤ 0.10): {}", ranges.join(", ")));
    assert!(pass);
}

fn run_checks(checks: &[(&str, fn())]) -> Vec<String> {
    checks
        .iter()
        .filter(|(_, f)| catch_unwind(AssertUnwindSafe(f)).is_err())
        .map(|(name, _)| name.to_string())
        .collect()
}

#[test]
fn criterion_6_sampler_correctness() {
    let checks: &[(&str, fn())] = &[
        ("step 1", conditionals::step1_p_is_beta),
        ("steps 2-5", conditionals::steps2_to_5_variances_are_inverse_gamma),
        ("slab example", conditionals::slab_example_with_one_selected_gene),
        ("step 6", conditionals::step6_selection_frequencies_match_bernoulli),
        ("step 6 unguided", conditionals::step6_unguided_drops_the_guidance_factor),
        ("step 6 dominance", conditionals::step6_dominant_guidance_forces_selection),
        ("blocked step 6 log-odds", conditionals::blocked_step6_log_odds_match_quadrature),
        ("blocked step 6 draws", conditionals::blocked_step6_draws_selection_then_means),
        ("step 7", conditionals::step7_pi_is_dirichlet),
        ("step 8", conditionals::step8_assignment_frequencies_match_enumeration),
        ("step 8 symmetry", conditionals::step8_identical_means_give_even_odds),
        ("step 8 dominance", conditionals::step8_dominant_cluster_always_wins),
        ("step 9", conditionals::step9_means_are_conjugate_normal),
        ("step 9 empty cluster", conditionals::step9_empty_cluster_draws_from_the_prior),
        ("step 10", conditionals::step10_variances_are_inverse_gamma),
        ("joint guided", joint::guided_sweep_leaves_the_joint_distribution_invariant),
        ("joint unguided", joint::unguided_sweep_leaves_the_joint_distribution_invariant),
        ("joint conditional step 6", joint::conditional_selection_sweep_leaves_the_joint_distribution_invariant),
    ];
    let mut failed = run_checks(checks);

    let mut r = common::rng(606);
    let mut worst = 0.0f64;
    let mut cases = 0;
    while cases < 1000 {
        let mu: Vec<f64> = (0..3).map(|_| r.random_range(-3.0..3.0)).collect();
        if let Some(e) = conditionals::step6_log_domain_error(
            r.random_range(0.01..0.99),
            &mu,
            r.random_range(0.005..2.0),
            r.random_range(0.05..50.0),
            r.random_range(0.01..2.0),
            r.random_range(0.01..2.0),
            r.random_range(0.0..1.0),
        ) {
            worst = worst.max(e);
            cases += 1;
        }
    }
    if worst >= 1e-10 {
        failed.push("step 6 log domain".into());
    }
    let pass = failed.is_empty();
    report(
        6,
        pass,
        &format!(
            "{} conditional/joint checks, failed: {:?}; step-6 log-domain max error {worst:.2e} over {cases} cases (< 1e-10)",
            checks.len(),
            failed
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_7_metric_oracles() {
    let checks: &[(&str, fn())] = &[
        ("ARI", metric_oracles::ari_matches_pair_counting),
        ("Jaccard", metric_oracles::jaccard_matches_set_membership),
        ("AUC", metric_oracles::auc_matches_threshold_sweep),
        ("silhouette", metric_oracles::silhouette_matches_direct_definition),
    ];
    let failed = run_checks(checks);
    let pass = failed.is_empty();
    report(7, pass, &format!("100 brute-force instances per metric within 1e-12, failed: {failed:?}"));
    assert!(pass);
}

fn collect_files(root: &Path, dir: &Path, out: &mut BTreeMap<String, Vec<u8>>) {
    for entry in fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        if path.is_dir() {
            collect_files(root, &path, out);
        } else {
            let rel = path.strip_prefix(root).unwrap().display().to_string();
            out.insert(rel, fs::read(&path).unwrap());
        }
    }
}

fn tree(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut files = BTreeMap::new();
    collect_files(dir, dir, &mut files);
    files
}

fn cli(args: &[&str], threads: usize) -> bool {
    Command::new(env!("CARGO_BIN_EXE_gbclust"))
        .env("RAYON_NUM_THREADS", threads.to_string())
        .args(args)
        .status()
        .unwrap()
        .success()
}

#[test]
fn criterion_8_determinism() {
    let tmp = TempDir::new().unwrap();
    let cfg = RunConfig {
        nt: 100,
        nb: 50,
        keep_draws: true,
        ..replicate_config(1.0, 3)
    };
    let library_run = |threads: usize| {
        let dir = tmp.path().join(format!("lib{threads}"));
        rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap().install(|| {
            let ds = simulate(&cfg).unwrap();
            write_simulation(&dir.join("data"), &ds).unwrap();
            let res = fit(&ds.expr, &outcome(&ds), &cfg).unwrap();
            write_fit(&dir.join("fit"), &res, &cfg).unwrap();
        });
        tree(&dir)
    };
    let lib = [library_run(1), library_run(4), library_run(4)];

    let cli_run = |threads: usize| {
        let dir = tmp.path().join(format!("cli{threads}"));
        let (data, out) = (dir.join("data"), dir.join("fit"));
        let common_args = ["--seed", "11", "--nt", "100", "--nb", "50", "--set", "n_noise=500"];
        let sim: Vec<&str> = common_args.iter().copied().chain(["simulate", "--out", data.to_str().unwrap()]).collect();
        let fit: Vec<&str> = common_args
            .iter()
            .copied()
            .chain(["fit", "--data", data.to_str().unwrap(), "--out", out.to_str().unwrap()])
            .collect();
        assert!(cli(&sim, threads) && cli(&fit, threads));
        tree(&dir)
    };
    let bin = [cli_run(1), cli_run(3)];

    let pass = lib[0] == lib[1] && lib[1] == lib[2] && bin[0] == bin[1] && !lib[0].is_empty();
    report(
        8,
        pass,
        &format!(
            "{} library output files and {} CLI output files byte-identical across reruns with 1, 3 and 4 threads",
            lib[0].len(),
            bin[0].len()
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_9_large_top_m_fit_with_reference_labels() {
    let tmp = TempDir::new().unwrap();
    let p = |x: &Path| x.to_str().unwrap().to_string();
    let (data, out, eval) = (tmp.path().join("data"), tmp.path().join("fit"), tmp.path().join("eval"));
    let sim_ok = cli(&["--seed", "9", "--set", "n_noise=10000", "simulate", "--out", &p(&data)], 1);
    let fit_ok = sim_ok && cli(&["--seed", "9", "--top-m", "400", "fit", "--data", &p(&data), "--out", &p(&out)], 1);

    // reference labels supplied as a plain table, as for real data
    let truth: TruthFile = serde_json::from_str(&fs::read_to_string(data.join("truth.json")).unwrap()).unwrap();
    let labels = tmp.path().join("reference.tsv");
    let mut table = String::from("sample_id\tlabel\n");
    for (id, l) in truth.sample_ids.iter().zip(&truth.disease_labels) {
        table.push_str(&format!("{id}\t{l}\n"));
    }
    fs::write(&labels, table).unwrap();
    let eval_ok = fit_ok
        && cli(
            &[
                "evaluate",
                "--fit",
                &p(&out),
                "--reference-labels",
                &p(&labels),
                "--expression",
                &p(&data.join("expression.tsv")),
                "--out",
                &p(&eval),
            ],
            1,
        );
    let genes = fs::read_to_string(data.join("expression.tsv")).map_or(0, |s| s.lines().count() - 1);
    let selected = fs::read_to_string(out.join("selected_genes.txt")).map_or(0, |s| s.lines().count());
    let r: Option<EvaluationReport> = fs::read_to_string(eval.join("report.json"))
        .ok()
        .and_then(|s| serde_json::from_str(&s).ok());
    let (ari, sil) = r.as_ref().map_or((None, None), |r| (r.ari, r.silhouette_mean));
    let pass = eval_ok && genes >= 11_000 && selected == 400 && ari.is_some() && sil.is_some() && out.join("labels.tsv").exists();
    report(
        9,
        pass,
        &format!(
            "{genes} genes, {selected} selected genes listed, ARI vs reference labels {}, mean silhouette {}",
            ari.map_or("NA".into(), |v| format!("{v:.3}")),
            sil.map_or("NA".into(), |v| format!("{v:.3}"))
        ),
    );
    assert!(pass);
}
