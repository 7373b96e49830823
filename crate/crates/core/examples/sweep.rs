//! Sensitivity of the fit to one spike-and-slab hyperparameter.
//!
//! cargo run --release --example sweep [-- AXIS]   (a_tau_mu0, b_tau_mu0, a_tau_mu1, b_tau_mu1)

use gbclust::config::{RunConfig, SweepAxis};
use gbclust::data::ClinicalOutcome;
use gbclust::pipeline::{simulate, sweep, sweep_tsv, GuidanceSource, Reference, TruthFile};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let axis: SweepAxis = match std::env::args().nth(1) {
        Some(a) => a.parse()?,
        None => SweepAxis::BTauMu1,
    };
    let cfg = RunConfig {
        sigma1: 1.0,
        seed: 9,
        n_noise: 800,
        nt: 200,
        nb: 100,
        sweep_axis: axis,
        sweep_points: 5,
        ..Default::default()
    };
    let ds = simulate(&cfg)?;
    let truth = TruthFile::new(&ds);
    let source = GuidanceSource::Outcome(ClinicalOutcome::Continuous { y: ds.outcome.clone() });
    let rows = sweep(&ds.expr, &source, Reference::Truth(&truth), &cfg)?;
    print!("{}", sweep_tsv(&rows));
    let aris: Vec<f64> = rows.iter().filter_map(|r| r.report.ari).collect();
    let spread = aris.iter().cloned().fold(f64::MIN, f64::max) - aris.iter().cloned().fold(f64::MAX, f64::min);
    println!("ARI range over the grid: {spread:.3}");
    Ok(())
}
