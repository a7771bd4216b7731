//! Multi-chain fits: independent chains in parallel, pooled summaries and
//! Gelman–Rubin per scalar.

use gpdthresh_core::priors::threshold_log_masses;
use gpdthresh_core::sampler::summarize_chains;
use gpdthresh_core::{
    gelman_rubin, run_chain, ChainConfig, Error as CoreError, HyperPriors, OrderedSample,
    PosteriorSamples, SummaryStats, ThresholdPriorSpec,
};
use rayon::prelude::*;

use crate::report::{CurvePoint, FitRecord, PriorCurve};
use crate::Result;

pub const DEFAULT_CHAINS: usize = 4;

/// SplitMix64 finaliser.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Deterministic child seed from a master seed and a path of counters, e.g.
/// `(cell, replication, stream)`. Distinct paths give unrelated seeds.
pub fn derive_seed(master: u64, path: &[u64]) -> u64 {
    path.iter().fold(mix(master), |acc, &c| mix(acc ^ mix(c)))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    pub prior: ThresholdPriorSpec,
    pub hyper: HyperPriors,
    /// `chain.seed` is the master seed; chain `i` runs with
    /// `derive_seed(chain.seed, [i])`.
    pub chain: ChainConfig,
    pub chains: usize,
}

impl FitOptions {
    pub fn new(prior: ThresholdPriorSpec) -> Self {
        Self { prior, hyper: HyperPriors::default(), chain: ChainConfig::default(), chains: DEFAULT_CHAINS }
    }

    pub fn chain_seeds(&self) -> Vec<u64> {
        (0..self.chains as u64).map(|i| derive_seed(self.chain.seed, &[i])).collect()
    }
}

#[derive(Debug, Clone)]
pub struct FitOutcome {
    pub options: FitOptions,
    pub seeds: Vec<u64>,
    pub chains: Vec<PosteriorSamples>,
    pub summary: SummaryStats,
    /// `None` for a scalar that is constant within every chain.
    pub rhat: Vec<(String, Option<f64>)>,
}

/// Runs `options.chains` chains (in parallel) and pools them.
pub fn fit(sample: &OrderedSample, options: &FitOptions) -> Result<FitOutcome> {
    if options.chains == 0 {
        return Err(crate::Error::Usage("need at least one chain".into()));
    }
    let seeds = options.chain_seeds();
    let chains = seeds
        .par_iter()
        .map(|&seed| {
            let config = ChainConfig { seed, ..options.chain };
            run_chain(sample, &options.prior, &options.hyper, &config)
        })
        .collect::<Result<Vec<_>, _>>()?;
    let summary = summarize_chains(&chains)?;
    let rhat = if chains.len() < 2 {
        Vec::new()
    } else {
        rhat_all(&chains)?
    };
    Ok(FitOutcome { options: *options, seeds, chains, summary, rhat })
}

fn rhat_all(chains: &[PosteriorSamples]) -> Result<Vec<(String, Option<f64>)>> {
    let traces: Vec<Vec<(String, Vec<f64>)>> = chains.iter().map(|c| c.traces()).collect();
    let mut out = Vec::new();
    for (j, (name, _)) in traces[0].iter().enumerate() {
        let refs: Vec<&[f64]> = traces.iter().map(|t| t[j].1.as_slice()).collect();
        let v = match gelman_rubin(&refs) {
            Ok(v) => Some(v),
            Err(CoreError::DegenerateVariance(_)) => None,
            Err(e) => return Err(e.into()),
        };
        out.push((name.clone(), v));
    }
    Ok(out)
}

impl FitOutcome {
    pub fn max_rhat(&self) -> Option<f64> {
        self.rhat.iter().filter_map(|(_, v)| *v).reduce(f64::max)
    }

    /// Posterior means of the mixture weights.
    pub fn weight_means(&self) -> Vec<f64> {
        let r = self.options.chain.components;
        (1..=r)
            .map(|j| self.summary.get(&format!("omega{j}")).map_or(f64::NAN, |p| p.mean))
            .collect()
    }

    pub fn record(&self, label: &str, prior_curve: Option<PriorCurve>) -> FitRecord {
        FitRecord {
            label: label.to_string(),
            prior: self.options.prior,
            components: self.options.chain.components,
            chain_seeds: self.seeds.clone(),
            params: self.summary.params.clone(),
            rhat: self.rhat.clone(),
            acceptance: self.chains.iter().map(|c| c.acceptance.clone()).collect(),
            tuned_steps: self.chains.iter().map(|c| c.tuned_steps.clone()).collect(),
            threshold_posterior: self.summary.threshold_posterior.clone(),
            prior_curve,
        }
    }
}

/// Threshold prior masses over the support at fixed (ξ, σ).
pub fn prior_curve(sample: &OrderedSample, prior: &ThresholdPriorSpec, xi: f64, sigma: f64) -> Result<PriorCurve> {
    let masses = threshold_log_masses(sample, prior, xi, sigma)?;
    let points = masses
        .log_masses
        .iter()
        .enumerate()
        .map(|(i, &log_mass)| {
            let k = masses.lo + i;
            CurvePoint { k, value: sample.order_stat(k), log_mass }
        })
        .collect();
    Ok(PriorCurve { kind: prior.kind, xi, sigma, points })
}
