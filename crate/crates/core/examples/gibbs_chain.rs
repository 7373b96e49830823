//! Driving the sampler directly: run a short chain, inspect the per-iteration
//! diagnostics and the posterior summaries.

use gbclust::data::{standardize_genes, ClinicalOutcome};
use gbclust::guidance::compute_guidance;
use gbclust::inference::{cluster_decision, local_fdr, select_genes, SelectionMode};
use gbclust::sampler::{run_gibbs, GibbsConfig};
use gbclust::simulation::{simulate_dataset, SimulationConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let ds = simulate_dataset(&SimulationConfig {
        sigma1: 1.0,
        n_noise: 500,
        seed: 4,
        ..Default::default()
    })?;
    let expr = standardize_genes(&ds.expr)?;
    let g = compute_guidance(&expr, &ClinicalOutcome::Continuous { y: ds.outcome.clone() })?;

    let mut cfg = GibbsConfig {
        seed: 4,
        ..Default::default()
    };
    cfg.hyper.n_total = 200;
    cfg.hyper.n_burnin = 100;
    let trace = run_gibbs(&expr, Some(&g.u), &cfg)?;

    println!("iter  log-posterior   p       selected");
    for d in trace.diagnostics.iter().step_by(20) {
        println!("{:<5} {:<15.1} {:<7.4} {}", d.iteration, d.log_posterior, d.p, d.n_selected);
    }

    let p = local_fdr(&trace)?;
    let top = select_genes(&p, SelectionMode::TopM(10))?;
    println!("ten most confident genes: {:?}", top.selected);
    let clusters = cluster_decision(&trace)?;
    let certain = (0..clusters.soft.rows())
        .filter(|&i| clusters.soft.row(i).iter().any(|&f| f > 0.95))
        .count();
    println!("{certain} of {} samples assigned with frequency above 0.95", clusters.labels.len());
    Ok(())
}
