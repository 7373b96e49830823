//! Guidance for each supported outcome type on one simulated matrix.
//!
//! The simulated outcome is continuous; binary, ordinal and survival
//! versions are derived from it so the four regressions can be compared.

use gbclust::data::{standardize_genes, ClinicalOutcome};
use gbclust::guidance::compute_guidance;
use gbclust::simulation::{simulate_dataset, SimulationConfig};

fn mean_over(u: &[f64], idx: &[usize]) -> f64 {
    idx.iter().map(|&g| u[g]).sum::<f64>() / idx.len() as f64
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let ds = simulate_dataset(&SimulationConfig {
        sigma1: 1.0,
        n_noise: 1000,
        seed: 11,
        ..Default::default()
    })?;
    let expr = standardize_genes(&ds.expr)?;
    let y = &ds.outcome;

    let mut sorted = y.clone();
    sorted.sort_by(f64::total_cmp);
    let q = |p: f64| sorted[((sorted.len() - 1) as f64 * p) as usize];
    let (t1, t2, med) = (q(1.0 / 3.0), q(2.0 / 3.0), q(0.5));
    let spread = sorted[sorted.len() - 1] - sorted[0];

    let outcomes = [
        ("continuous", ClinicalOutcome::Continuous { y: y.clone() }),
        ("binary", ClinicalOutcome::Binary { y: y.iter().map(|&v| u8::from(v > med)).collect() }),
        (
            "ordinal",
            ClinicalOutcome::Ordinal {
                y: y.iter().map(|&v| u32::from(v > t1) + u32::from(v > t2)).collect(),
            },
        ),
        (
            "survival",
            ClinicalOutcome::Survival {
                // higher outcome, shorter survival; every fifth subject censored
                time: y.iter().enumerate().map(|(i, &v)| (-2.0 * v / spread).exp() * (1.0 + (i % 7) as f64 / 7.0)).collect(),
                event: (0..y.len()).map(|i| i % 5 != 0).collect(),
            },
        ),
    ];

    let noise = &ds.truth.noise;
    let confounders: Vec<usize> = ds.truth.confounder_genes.concat();
    println!("{:<11} {:>9} {:>11} {:>7} {:>7}", "outcome", "intrinsic", "confounder", "noise", "failed");
    for (name, outcome) in &outcomes {
        let g = compute_guidance(&expr, outcome)?;
        println!(
            "{name:<11} {:>9.3} {:>11.3} {:>7.3} {:>7}",
            mean_over(&g.u, &ds.truth.intrinsic),
            mean_over(&g.u, &confounders),
            mean_over(&g.u, noise),
            g.failed.len()
        );
    }
    Ok(())
}
