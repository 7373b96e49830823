//! Outcome-guided fit on simulated data: gene selection by local FDR,
//! cluster labels and the agreement with the truth.
//!
//! cargo run --release --example guided_fit [-- --full]

use gbclust::config::RunConfig;
use gbclust::metrics::{adjusted_rand_index, gene_selection_auc, jaccard_index};
use gbclust::pipeline::{fit, simulate, GuidanceSource};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let full = std::env::args().any(|a| a == "--full");
    let mut cfg = RunConfig {
        sigma1: 1.0,
        seed: 2,
        ..Default::default()
    };
    if !full {
        cfg.n_noise = 1000;
        cfg.nt = 300;
        cfg.nb = 150;
    }
    let ds = simulate(&cfg)?;
    let source = GuidanceSource::Outcome(gbclust::data::ClinicalOutcome::Continuous { y: ds.outcome.clone() });
    let res = fit(&ds.expr, &source, &cfg)?;

    let t = &res.trace;
    println!("retained draws {}  K {}", t.n_retained(), t.k());
    println!("mean p {:.4}  mean pi {:?}", t.mean_p(), t.mean_pi());
    let [t0, t1, u0, u1] = t.mean_tau2();
    println!("tau2 mu0 {t0:.5}  mu1 {t1:.3}  U0 {u0:.4}  U1 {u1:.3}");
    println!(
        "selected {} genes at eta {:.4} (achieved FDR {:?})",
        res.genes.selected.len(),
        res.genes.eta,
        res.genes.achieved_fdr
    );

    let ari = adjusted_rand_index(&res.clusters.labels, &ds.truth.disease_labels)?;
    let jac = jaccard_index(&res.genes.selected, &ds.truth.intrinsic)?;
    let auc = gene_selection_auc(&res.genes.local_fdr, &ds.truth.intrinsic_flags())?;
    println!("ARI {ari:.3}  Jaccard {jac:.3}  AUC {auc:.3}  BIC {:.1}", res.bic);
    Ok(())
}
