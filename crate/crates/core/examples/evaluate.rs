//! Scoring a fit without ground truth: silhouette on the selected genes,
//! agreement with external labels, and replicate aggregation.

use gbclust::config::RunConfig;
use gbclust::data::ClinicalOutcome;
use gbclust::metrics::aggregate_reports;
use gbclust::pipeline::{evaluate, fit, simulate, GuidanceSource, Reference};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut reports = Vec::new();
    for replicate in 0..3 {
        let cfg = RunConfig {
            sigma1: 1.0,
            seed: 21,
            replicate,
            n_noise: 800,
            nt: 200,
            nb: 100,
            top_m: 150,
            ..Default::default()
        };
        let ds = simulate(&cfg)?;
        let source = GuidanceSource::Outcome(ClinicalOutcome::Continuous { y: ds.outcome.clone() });
        let res = fit(&ds.expr, &source, &cfg)?;
        // the true subtypes stand in for externally supplied labels
        let r = evaluate(&res.decisions(&cfg), Reference::Labels(&ds.truth.disease_labels), Some(&ds.expr))?;
        println!("replicate {replicate}: {}", r.tsv_row());
        reports.push(r);
    }
    let agg = aggregate_reports(&reports);
    println!("{}", serde_json::to_string_pretty(&agg)?);
    Ok(())
}
