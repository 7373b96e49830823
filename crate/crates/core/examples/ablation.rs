//! Guided versus unguided fits on the same data, over several noise levels.
//!
//! cargo run --release --example ablation [-- --full]

use gbclust::config::RunConfig;
use gbclust::data::ClinicalOutcome;
use gbclust::pipeline::{evaluate, fit, simulate, GuidanceSource, Reference, TruthFile};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let full = std::env::args().any(|a| a == "--full");
    println!("sigma1  guided  ARI    Jaccard  AUC    selected");
    for sigma1 in [1.0, 3.0, 5.0] {
        let mut cfg = RunConfig {
            sigma1,
            seed: 5,
            ..Default::default()
        };
        if !full {
            cfg.n_noise = 1000;
            cfg.nt = 300;
            cfg.nb = 150;
        }
        let ds = simulate(&cfg)?;
        let truth = TruthFile::new(&ds);
        let source = GuidanceSource::Outcome(ClinicalOutcome::Continuous { y: ds.outcome.clone() });
        for guided in [true, false] {
            let run = RunConfig { guided, ..cfg.clone() };
            let res = fit(&ds.expr, &source, &run)?;
            let r = evaluate(&res.decisions(&run), Reference::Truth(&truth), None)?;
            println!(
                "{sigma1:<7} {guided:<7} {:<6.3} {:<8} {:<6.3} {}",
                r.ari.unwrap_or(f64::NAN),
                r.jaccard.map_or("NA".into(), |j| format!("{j:.3}")),
                r.auc.unwrap_or(f64::NAN),
                r.n_selected
            );
        }
    }
    Ok(())
}
