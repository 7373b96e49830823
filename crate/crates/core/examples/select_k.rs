//! Choose the number of clusters by BIC, with both penalty variants.
//!
//! cargo run --release --example select_k [-- --full]

use gbclust::config::RunConfig;
use gbclust::data::ClinicalOutcome;
use gbclust::inference::BicPenalty;
use gbclust::pipeline::{choose_k, simulate, GuidanceSource};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let full = std::env::args().any(|a| a == "--full");
    let mut cfg = RunConfig {
        sigma1: 1.0,
        seed: 3,
        k_min: 2,
        k_max: 5,
        ..Default::default()
    };
    if !full {
        cfg.n_noise = 1000;
        cfg.nt = 200;
        cfg.nb = 100;
    }
    let ds = simulate(&cfg)?;
    let source = GuidanceSource::Outcome(ClinicalOutcome::Continuous { y: ds.outcome.clone() });
    for penalty in [BicPenalty::LogGenes, BicPenalty::LogSamples] {
        let sel = choose_k(&ds.expr, &source, &RunConfig { bic_penalty: penalty, ..cfg.clone() })?;
        println!("{penalty:?}: best K = {}", sel.best_k);
        for (k, b) in &sel.curve {
            println!("  K={k}  BIC {b:.1}");
        }
    }
    Ok(())
}
