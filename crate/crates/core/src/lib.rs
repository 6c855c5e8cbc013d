//! Emotion recognition in conversation with speaker-aware context packing.
//!
//! The crate covers the whole workflow: corpus loading ([`corpus`]), a
//! byte-level BPE tokenizer ([`tokenizer`]), packing of past and future
//! utterances around the one being classified ([`seqbuilder`]), a
//! from-scratch transformer encoder ([`model`]), fine-tuning with warmup and
//! best-validation selection ([`training`]), weighted-f1 evaluation and
//! ablation grids ([`evaluation`]), attention reports ([`attnreport`]), and
//! an experiment runner ([`pipeline`]) behind the `erc` command ([`cli`]).

pub mod attnreport;
pub mod cli;
pub mod corpus;
pub mod error;
pub mod evaluation;
pub mod model;
pub mod pipeline;
pub mod seqbuilder;
pub mod tokenizer;
pub mod training;

pub use error::{Error, Result};

/// Environment variable capping the number of worker threads.
pub const NUM_THREADS_ENV: &str = "ERC_NUM_THREADS";

/// Sizes the global worker pool from `ERC_NUM_THREADS` when set. Returns the
/// number of threads in use. Only the first call in a process has an effect.
pub fn configure_threads() -> Result<usize> {
    if let Ok(raw) = std::env::var(NUM_THREADS_ENV) {
        let n: usize = raw.trim().parse().ok().filter(|&n| n > 0).ok_or_else(|| {
            Error::Config(format!(
                "{NUM_THREADS_ENV} must be a positive integer, got {raw:?}"
            ))
        })?;
        // a pool that already exists keeps its size
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global();
    }
    Ok(rayon::current_num_threads())
}
