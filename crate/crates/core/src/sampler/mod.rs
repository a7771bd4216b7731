//! Metropolis-within-Gibbs sampling of (γ, ξ, σ, k), chain storage,
//! convergence diagnostics and posterior summaries.

mod diagnostics;
mod kernel;

use alloc::string::String;
use alloc::vec::Vec;
use alloc::{format, vec};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::inference::ModelState;
use crate::priors::{HyperPriors, ThresholdPriorSpec};
use crate::sample::OrderedSample;
use crate::{Error, Result};

pub use diagnostics::{
    gelman_rubin, quantile_sorted, summarize, summarize_chains, ParamSummary, SummaryStats,
    ThresholdMass,
};
pub use kernel::{discrete_mh_step, Sampler};

/// Acceptance rate the step sizes are tuned towards during burn-in.
pub const TARGET_ACCEPTANCE: f64 = 0.3;

/// Random-walk proposal scales.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepSizes {
    pub log_sigma: f64,
    pub xi: f64,
    pub log_mean: f64,
    pub log_shape: f64,
    /// Scale of the additive log-ratio walk on the weights.
    pub weights: f64,
}

impl Default for StepSizes {
    fn default() -> Self {
        Self { log_sigma: 0.1, xi: 0.1, log_mean: 0.1, log_shape: 0.1, weights: 0.1 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChainConfig {
    pub iterations: usize,
    pub burn_in: usize,
    pub seed: u64,
    /// Number of gamma components r in the bulk mixture.
    pub components: usize,
    pub steps: StepSizes,
    /// Largest jump of the threshold index in one proposal.
    pub k_step: usize,
    /// Robbins–Monro tuning of the step sizes during burn-in.
    pub adapt: bool,
}

impl Default for ChainConfig {
    fn default() -> Self {
        Self {
            iterations: 20_000,
            burn_in: 10_000,
            seed: 0,
            components: 2,
            steps: StepSizes::default(),
            k_step: 5,
            adapt: true,
        }
    }
}

impl ChainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.burn_in >= self.iterations {
            return Err(Error::InvalidParameter(format!(
                "burn-in ({}) must be smaller than iterations ({})",
                self.burn_in, self.iterations
            )));
        }
        let s = &self.steps;
        if [s.log_sigma, s.xi, s.log_mean, s.log_shape, s.weights]
            .iter()
            .any(|v| !(*v > 0.0 && v.is_finite()))
        {
            return Err(Error::InvalidParameter("step sizes must be positive".into()));
        }
        if self.k_step == 0 {
            return Err(Error::InvalidParameter("k_step must be at least 1".into()));
        }
        if self.components == 0 {
            return Err(Error::InvalidParameter("need at least one mixture component".into()));
        }
        Ok(())
    }
}

/// One stored post-burn-in iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct Draw {
    pub state: ModelState,
    /// x^(k) for the stored k.
    pub threshold: f64,
    pub log_posterior: f64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlockAcceptance {
    pub block: String,
    pub accepted: u64,
    pub proposed: u64,
}

impl BlockAcceptance {
    pub fn rate(&self) -> f64 {
        if self.proposed == 0 {
            0.0
        } else {
            self.accepted as f64 / self.proposed as f64
        }
    }
}

/// Post-burn-in chain with per-block acceptance counts (also post-burn-in)
/// and the configuration that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorSamples {
    pub draws: Vec<Draw>,
    pub acceptance: Vec<BlockAcceptance>,
    pub config: ChainConfig,
    /// Step sizes in force after burn-in adaptation.
    pub tuned_steps: Vec<(String, f64)>,
}

impl PosteriorSamples {
    pub fn len(&self) -> usize {
        self.draws.len()
    }

    pub fn is_empty(&self) -> bool {
        self.draws.is_empty()
    }

    /// Names of the scalar parameters in trace order: means, shapes, weights,
    /// then threshold, ξ and σ.
    pub fn parameter_names(components: usize) -> Vec<String> {
        let mut names = Vec::with_capacity(3 * components + 3);
        for prefix in ["alpha", "beta", "omega"] {
            for j in 1..=components {
                names.push(format!("{prefix}{j}"));
            }
        }
        names.extend(["theta", "xi", "sigma"].map(String::from));
        names
    }

    /// Per-parameter traces, named as in [`PosteriorSamples::parameter_names`].
    pub fn traces(&self) -> Vec<(String, Vec<f64>)> {
        let r = self.config.components;
        let names = Self::parameter_names(r);
        let mut columns: Vec<Vec<f64>> = vec![Vec::with_capacity(self.draws.len()); names.len()];
        for d in &self.draws {
            let comps = d.state.bulk.components();
            for j in 0..r {
                columns[j].push(comps[j].mean());
                columns[r + j].push(comps[j].shape());
                columns[2 * r + j].push(d.state.bulk.weights()[j]);
            }
            columns[3 * r].push(d.threshold);
            columns[3 * r + 1].push(d.state.xi);
            columns[3 * r + 2].push(d.state.sigma);
        }
        names.into_iter().zip(columns).collect()
    }
}

/// Runs one chain: each iteration updates the bulk block, then (ξ, σ), then
/// the threshold index. Deterministic given `config.seed`.
pub fn run_chain(
    sample: &OrderedSample,
    spec: &ThresholdPriorSpec,
    hyp: &HyperPriors,
    config: &ChainConfig,
) -> Result<PosteriorSamples> {
    config.validate()?;
    hyp.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut sampler = Sampler::initialise(sample, spec, hyp, config)?;
    let keep = config.iterations - config.burn_in;
    let mut draws = Vec::with_capacity(keep);
    for iter in 0..config.iterations {
        if iter == config.burn_in {
            sampler.end_burn_in();
        }
        sampler.step_bulk(&mut rng);
        sampler.step_gpd(&mut rng);
        sampler.step_threshold(&mut rng);
        if iter >= config.burn_in {
            let state = sampler.state();
            draws.push(Draw {
                threshold: sample.order_stat(state.k),
                log_posterior: sampler.log_posterior(),
                state,
            });
        }
    }
    Ok(PosteriorSamples {
        draws,
        acceptance: sampler.acceptance(),
        config: *config,
        tuned_steps: sampler.step_sizes(),
    })
}
