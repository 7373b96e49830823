//! Simulate a dataset with intrinsic modules, confounders and noise genes.
//!
//! cargo run --release --example simulate [-- OUT_DIR]

use gbclust::config::RunConfig;
use gbclust::pipeline::{simulate, write_simulation};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let cfg = RunConfig {
        sigma1: 1.0,
        seed: 7,
        ..Default::default()
    };
    let ds = simulate(&cfg)?;
    let t = &ds.truth;
    println!("genes {}  samples {}", ds.expr.n_genes(), ds.expr.n_samples());
    println!("intrinsic {} in {} modules", t.intrinsic.len(), t.intrinsic_module_sizes.len());
    for (c, genes) in t.confounder_genes.iter().enumerate() {
        println!("confounder {} drives {} genes", c + 1, genes.len());
    }
    println!("noise {}", t.noise.len());
    let mut sizes = vec![0usize; cfg.k];
    for &l in &t.disease_labels {
        sizes[l - 1] += 1;
    }
    println!("subtype sizes {sizes:?}");

    if let Some(dir) = std::env::args().nth(1) {
        let dir = std::path::PathBuf::from(dir);
        std::fs::create_dir_all(&dir)?;
        write_simulation(&dir, &ds)?;
        println!("wrote {}", dir.display());
    }
    Ok(())
}
