//! Spliced extreme-value model: a finite gamma mixture for the bulk of a
//! positive-valued sample, a generalised Pareto distribution (GPD) above a
//! threshold, and a threshold that lives on the observed order statistics.
//!
//! The crate is `no_std` (with `alloc`). It contains the densities and
//! samplers ([`distributions`]), the threshold and parameter priors
//! ([`priors`]), the likelihood and joint posterior ([`inference`]), and a
//! Metropolis-within-Gibbs sampler with diagnostics ([`sampler`]).
//! File formats, multi-chain orchestration and the CLI live in the
//! `gpdthresh` crate.

#![no_std]
#![forbid(unsafe_code)]
// `!(x > 0.0)` is how NaN gets rejected along with non-positive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod distributions;
mod error;
pub mod inference;
pub mod priors;
pub mod quadrature;
pub mod sample;
pub mod sampler;
pub mod special;

pub use distributions::{BulkMixture, GammaComponent, GpdParams, SpliceModel};
pub use error::{Error, Result};
pub use inference::{log_likelihood, log_posterior, ModelState};
pub use priors::{HyperPriors, ThresholdPriorKind, ThresholdPriorSpec};
pub use sample::OrderedSample;
pub use sampler::{
    gelman_rubin, run_chain, summarize, ChainConfig, ParamSummary, PosteriorSamples,
    SummaryStats,
};
