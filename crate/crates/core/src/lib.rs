//! Outcome-guided sparse Bayesian clustering of gene expression data.
//!
//! Samples are clustered with a Gaussian mixture whose cluster means carry a
//! spike-and-slab prior, so that only a sparse set of "intrinsic" genes
//! drives the partition. A per-gene guidance term derived from a clinical
//! outcome enters the gene-selection prior and steers the sampler towards
//! outcome-related subtypes. Everything is fitted by Gibbs sampling.
//!
//! Module map:
//!
//! - [`data`]: expression matrices, outcomes, hyperparameters, model state
//! - [`distributions`]: seeded substreams and samplers
//! - [`guidance`]: per-gene (pseudo-)R² guidance from clinical outcomes
//! - [`sampler`]: the Gibbs engine
//! - [`inference`]: local FDR, gene selection, cluster assignment, BIC
//! - [`simulation`]: synthetic benchmark generator
//! - [`metrics`]: ARI, Jaccard, selection AUC, silhouette
//! - [`io`], [`config`] and [`pipeline`]: file formats, run configuration
//!   and the end-to-end commands behind [`cli`]

pub mod cli;
pub mod config;
pub mod data;
pub mod distributions;
pub mod guidance;
pub mod inference;
pub mod io;
pub mod metrics;
pub mod pipeline;
pub mod sampler;
pub mod simulation;
pub mod trace;
