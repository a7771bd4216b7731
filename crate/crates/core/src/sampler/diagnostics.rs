use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;
use alloc::format;

use libm::{floor, sqrt};

use super::PosteriorSamples;
use crate::{Error, Result};

/// Empirical quantile of sorted data by linear interpolation: with
/// `h = (m − 1)·p`, `q = y[⌊h⌋] + (h − ⌊h⌋)(y[⌊h⌋ + 1] − y[⌊h⌋])`.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    match sorted.len() {
        0 => f64::NAN,
        1 => sorted[0],
        m => {
            let h = (m - 1) as f64 * p.clamp(0.0, 1.0);
            let lo = floor(h) as usize;
            if lo + 1 >= m {
                return sorted[m - 1];
            }
            sorted[lo] + (h - lo as f64) * (sorted[lo + 1] - sorted[lo])
        }
    }
}

/// Potential scale reduction factor
/// `R̂ = sqrt(((n − 1)/n · W + B/n) / W)` for `m ≥ 2` chains of equal length
/// `n ≥ 2`, with `W` the mean within-chain variance and `B/n` the variance
/// of the chain means (both with `n − 1`, resp. `m − 1`, denominators).
pub fn gelman_rubin(chains: &[&[f64]]) -> Result<f64> {
    if chains.len() < 2 {
        return Err(Error::InvalidParameter("need at least two chains".into()));
    }
    let n = chains[0].len();
    if n < 2 || chains.iter().any(|c| c.len() != n) {
        return Err(Error::InvalidParameter(format!(
            "chains must have equal length of at least 2 (lengths {:?})",
            chains.iter().map(|c| c.len()).collect::<Vec<_>>()
        )));
    }
    let means: Vec<f64> = chains.iter().map(|c| mean(c)).collect();
    let within = chains
        .iter()
        .zip(&means)
        .map(|(c, m)| c.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n as f64 - 1.0))
        .sum::<f64>()
        / chains.len() as f64;
    if !(within > 0.0) {
        return Err(Error::DegenerateVariance("within-chain variance is zero".into()));
    }
    let grand = mean(&means);
    let between_over_n = means.iter().map(|m| (m - grand) * (m - grand)).sum::<f64>()
        / (chains.len() as f64 - 1.0);
    let nf = n as f64;
    Ok(sqrt(((nf - 1.0) / nf * within + between_over_n) / within))
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamSummary {
    pub name: String,
    pub mean: f64,
    pub median: f64,
    /// 2.5% quantile.
    pub lower: f64,
    /// 97.5% quantile.
    pub upper: f64,
}

impl ParamSummary {
    pub fn from_trace(name: &str, trace: &[f64]) -> Result<Self> {
        if trace.is_empty() {
            return Err(Error::EmptySamples);
        }
        let mut sorted = trace.to_vec();
        sorted.sort_by(f64::total_cmp);
        Ok(Self {
            name: name.into(),
            mean: mean(trace),
            median: quantile_sorted(&sorted, 0.5),
            lower: quantile_sorted(&sorted, 0.025),
            upper: quantile_sorted(&sorted, 0.975),
        })
    }

    /// Whether `value` lies in the closed 95% interval.
    pub fn covers(&self, value: f64) -> bool {
        self.lower <= value && value <= self.upper
    }
}

/// Posterior probability of one candidate threshold.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThresholdMass {
    pub k: usize,
    pub value: f64,
    pub probability: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryStats {
    pub params: Vec<ParamSummary>,
    /// Posterior over the visited order statistics, ordered by `k`.
    pub threshold_posterior: Vec<ThresholdMass>,
}

impl SummaryStats {
    pub fn get(&self, name: &str) -> Option<&ParamSummary> {
        self.params.iter().find(|p| p.name == name)
    }
}

/// Mean, median and equal-tailed 95% interval for every scalar parameter of
/// one chain. The threshold is summarised on its values x^(k).
pub fn summarize(samples: &PosteriorSamples) -> Result<SummaryStats> {
    summarize_chains(core::slice::from_ref(samples))
}

/// As [`summarize`], pooling the draws of several chains.
pub fn summarize_chains(chains: &[PosteriorSamples]) -> Result<SummaryStats> {
    let total: usize = chains.iter().map(|c| c.len()).sum();
    if total == 0 {
        return Err(Error::EmptySamples);
    }
    let r = chains[0].config.components;
    if chains.iter().any(|c| c.config.components != r) {
        return Err(Error::InvalidParameter("chains have different mixture orders".into()));
    }
    let names = PosteriorSamples::parameter_names(r);
    let mut pooled: Vec<Vec<f64>> = alloc::vec![Vec::with_capacity(total); names.len()];
    let mut counts: BTreeMap<usize, (f64, u64)> = BTreeMap::new();
    for chain in chains {
        for (i, (_, trace)) in chain.traces().into_iter().enumerate() {
            pooled[i].extend(trace);
        }
        for d in &chain.draws {
            counts.entry(d.state.k).or_insert((d.threshold, 0)).1 += 1;
        }
    }
    let params = names
        .iter()
        .zip(&pooled)
        .map(|(n, t)| ParamSummary::from_trace(n, t))
        .collect::<Result<Vec<_>>>()?;
    let threshold_posterior = counts
        .into_iter()
        .map(|(k, (value, c))| ThresholdMass { k, value, probability: c as f64 / total as f64 })
        .collect();
    Ok(SummaryStats { params, threshold_posterior })
}
