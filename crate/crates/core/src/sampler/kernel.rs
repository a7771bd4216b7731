use alloc::string::String;
use alloc::vec::Vec;
use alloc::{format, vec};

use libm::{exp, log};
use rand::Rng;
use rand_distr::StandardNormal;

use super::{BlockAcceptance, ChainConfig, TARGET_ACCEPTANCE};
use crate::distributions::{bulk_log_sf_raw, BulkEvaluator, BulkMixture, GammaComponent};
use crate::inference::{gpd_sum, ModelState};
use crate::priors::{
    bulk_hyper_log_prior_raw, jeffreys_log_prior, kl_adjacent_gpd, HyperPriors, ThresholdPriorKind,
    ThresholdPriorSpec,
};
use crate::sample::OrderedSample;
use crate::special::{log_expm1, log_sum_exp};
use crate::{Error, Result};

const MIN_SCALE: f64 = 1e-5;
const MAX_SCALE: f64 = 10.0;

/// One Metropolis step on an integer index: the proposal is uniform on
/// `{k − k_step, …, k + k_step} \ {k}`, and proposals outside `lo..=hi` are
/// rejected, which keeps the kernel symmetric.
///
/// Returns the new index and its log target (unchanged on rejection) and
/// whether the move was accepted.
pub fn discrete_mh_step<R, F>(
    k: usize,
    current_log_target: f64,
    lo: usize,
    hi: usize,
    k_step: usize,
    mut log_target: F,
    rng: &mut R,
) -> (usize, f64, bool)
where
    R: Rng + ?Sized,
    F: FnMut(usize) -> f64,
{
    let pick = rng.random_range(0..2 * k_step);
    let offset = if pick < k_step { pick as isize - k_step as isize } else { (pick - k_step + 1) as isize };
    let proposal = k as isize + offset;
    if proposal < lo as isize || proposal > hi as isize {
        return (k, current_log_target, false);
    }
    let proposal = proposal as usize;
    let candidate = log_target(proposal);
    if accept(candidate - current_log_target, rng) {
        (proposal, candidate, true)
    } else {
        (k, current_log_target, false)
    }
}

#[inline]
fn accept<R: Rng + ?Sized>(log_ratio: f64, rng: &mut R) -> bool {
    if log_ratio >= 0.0 {
        return true;
    }
    // NaN falls through to rejection
    log(rng.random::<f64>()) < log_ratio
}

#[inline]
fn normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.sample(StandardNormal)
}

#[derive(Debug, Clone)]
struct Block {
    name: String,
    base: f64,
    multiplier: f64,
    updates: u64,
    accepted: u64,
    proposed: u64,
}

impl Block {
    fn new(name: String, base: f64) -> Self {
        Self { name, base, multiplier: 1.0, updates: 0, accepted: 0, proposed: 0 }
    }

    fn step(&self) -> f64 {
        self.base * self.multiplier
    }
}

/// Metropolis-within-Gibbs sampler holding the current state together with
/// cached pieces of the log posterior:
///
/// ```text
/// log π = Σ_{j<k} log h(x^(j)) + (n − k + 1) log S(x^(k))
///       + Σ_{j≥k} log g(x^(j)) + log π(k | ξ, σ) + log π(ξ, σ) + log π(γ)
/// ```
///
/// Bulk moves recompute the prefix sums of `log h`; (ξ, σ) moves recompute the
/// GPD sum and, for the loss-based prior, all threshold weights and their
/// normaliser; threshold moves touch only the terms indexed by `k`.
#[derive(Debug, Clone)]
pub struct Sampler<'a> {
    sample: &'a OrderedSample,
    kind: ThresholdPriorKind,
    lo: usize,
    hi: usize,
    hyp: HyperPriors,
    k_step: usize,
    sigma_step: f64,

    weights: Vec<f64>,
    comps: Vec<GammaComponent>,
    xi: f64,
    sigma: f64,
    k: usize,

    prefix: Vec<f64>,
    scratch: Vec<f64>,
    log_sf: f64,
    gpd: f64,
    kl_weights: Vec<f64>,
    kl_scratch: Vec<f64>,
    log_z: f64,
    jeffreys: f64,
    hyper: f64,

    blocks: Vec<Block>,
    adapting: bool,
}

impl<'a> Sampler<'a> {
    /// Default starting point: threshold at the 90% empirical quantile,
    /// ξ = 0.1, σ = standard deviation of the excesses, component means at
    /// equally spaced quantiles of the sub-threshold data, shapes 2, equal
    /// weights.
    pub fn initialise(
        sample: &'a OrderedSample,
        spec: &ThresholdPriorSpec,
        hyp: &HyperPriors,
        config: &ChainConfig,
    ) -> Result<Self> {
        let (lo, hi) = spec.support(sample.len())?;
        let mut k = sample.quantile_index(0.9).clamp(lo, hi);
        if spec.kind == ThresholdPriorKind::KullbackLeibler {
            // a tied order statistic has zero prior mass; take the nearest untied one
            k = (0..=(hi - lo))
                .flat_map(|d| [k.checked_sub(d), Some(k + d)])
                .flatten()
                .find(|&c| c >= lo && c <= hi && sample.spacing(c) > 0.0)
                .ok_or(Error::DegeneratePrior)?;
        }
        let xs = sample.sorted();
        let excess: Vec<f64> = xs[k - 1..].iter().map(|x| x - xs[k - 1]).collect();
        let mut sigma = std_dev(&excess);
        if !(sigma > 0.0) {
            sigma = std_dev(xs);
        }
        if !(sigma > 0.0) {
            return Err(Error::Initialization("sample has no spread".into()));
        }

        let r = config.components;
        let bulk = BulkMixture::new(vec![1.0 / r as f64; r], initial_components(r, &xs[..k - 1]))?;
        let state = ModelState { bulk, xi: 0.1, sigma, k };
        Self::from_state(sample, spec, hyp, config, &state)
    }

    /// Sampler starting from an explicit state.
    pub fn from_state(
        sample: &'a OrderedSample,
        spec: &ThresholdPriorSpec,
        hyp: &HyperPriors,
        config: &ChainConfig,
        state: &ModelState,
    ) -> Result<Self> {
        let (lo, hi) = spec.support(sample.len())?;
        if state.k < lo || state.k > hi {
            return Err(Error::Initialization(format!("k = {} outside {lo}..={hi}", state.k)));
        }
        let r = state.bulk.order();
        let steps = &config.steps;
        let mut blocks = Vec::with_capacity(2 * r + 3);
        for j in 1..=r {
            blocks.push(Block::new(format!("alpha{j}"), steps.log_mean));
        }
        for j in 1..=r {
            blocks.push(Block::new(format!("beta{j}"), steps.log_shape));
        }
        blocks.push(Block::new("weights".into(), steps.weights));
        blocks.push(Block::new("gpd".into(), steps.xi));
        blocks.push(Block::new("threshold".into(), config.k_step as f64));

        let mut s = Self {
            sample,
            kind: spec.kind,
            lo,
            hi,
            hyp: *hyp,
            k_step: config.k_step,
            sigma_step: steps.log_sigma,
            weights: state.bulk.weights().to_vec(),
            comps: state.bulk.components().to_vec(),
            xi: state.xi,
            sigma: state.sigma,
            k: state.k,
            prefix: vec![0.0; hi],
            scratch: vec![0.0; hi],
            log_sf: 0.0,
            gpd: 0.0,
            kl_weights: Vec::new(),
            kl_scratch: Vec::new(),
            log_z: 0.0,
            jeffreys: 0.0,
            hyper: 0.0,
            blocks,
            adapting: config.adapt,
        };
        s.jeffreys = jeffreys_log_prior(s.xi, s.sigma);
        if s.kind == ThresholdPriorKind::KullbackLeibler && !(s.xi > 0.0) {
            return Err(Error::Initialization("the loss-based prior needs xi > 0".into()));
        }
        s.hyper = bulk_hyper_log_prior_raw(&s.weights, &s.comps, &s.hyp);
        let mut prefix = core::mem::take(&mut s.prefix);
        s.fill_prefix(&s.weights, &s.comps, &mut prefix);
        s.prefix = prefix;
        s.log_sf = bulk_log_sf_raw(sample.order_stat(s.k), &s.weights, &s.comps);
        s.gpd = gpd_sum(sample, s.xi, s.sigma, s.k);
        match s.kind {
            ThresholdPriorKind::UniformOnOrderStats => s.log_z = log((hi - lo + 1) as f64),
            ThresholdPriorKind::KullbackLeibler => {
                let mut w = Vec::new();
                s.log_z = s.fill_kl_weights(s.xi, s.sigma, &mut w);
                s.kl_weights = w;
                if s.log_z == f64::NEG_INFINITY {
                    return Err(Error::DegeneratePrior);
                }
            }
        }
        let total = s.log_posterior();
        if !total.is_finite() {
            return Err(Error::Initialization(format!("log posterior at the start is {total}")));
        }
        Ok(s)
    }

    /// Cached unnormalised log posterior of the current state.
    pub fn log_posterior(&self) -> f64 {
        self.bulk_part(&self.prefix, self.log_sf, self.k)
            + self.gpd
            + self.threshold_log_mass(self.k)
            + self.jeffreys
            + self.hyper
    }

    pub fn state(&self) -> ModelState {
        ModelState {
            // weights and means were validated on acceptance
            bulk: BulkMixture::new(self.weights.clone(), self.comps.clone())
                .expect("sampler keeps a valid mixture"),
            xi: self.xi,
            sigma: self.sigma,
            k: self.k,
        }
    }

    /// Freezes step sizes and resets the acceptance counters.
    pub fn end_burn_in(&mut self) {
        self.adapting = false;
        for b in &mut self.blocks {
            b.accepted = 0;
            b.proposed = 0;
        }
    }

    pub fn acceptance(&self) -> Vec<BlockAcceptance> {
        let r = self.comps.len();
        self.blocks
            .iter()
            .enumerate()
            .filter(|(i, _)| r > 1 || *i != 2 * r)
            .map(|(_, b)| BlockAcceptance { block: b.name.clone(), accepted: b.accepted, proposed: b.proposed })
            .collect()
    }

    pub fn step_sizes(&self) -> Vec<(String, f64)> {
        let r = self.comps.len();
        let mut out: Vec<(String, f64)> = self.blocks[..2 * r]
            .iter()
            .map(|b| (b.name.clone(), b.step()))
            .collect();
        if r > 1 {
            out.push(("weights".into(), self.blocks[2 * r].step()));
        }
        let gpd = &self.blocks[2 * r + 1];
        out.push(("xi".into(), gpd.step()));
        out.push(("log_sigma".into(), self.sigma_step * gpd.multiplier));
        out
    }

    fn record(&mut self, block: usize, accepted: bool) {
        let adaptable = self.adapting && block != self.blocks.len() - 1;
        let b = &mut self.blocks[block];
        b.proposed += 1;
        if accepted {
            b.accepted += 1;
        }
        if adaptable {
            let gain = libm::pow(b.updates as f64 + 1.0, -0.6);
            let signal = if accepted { 1.0 } else { 0.0 } - TARGET_ACCEPTANCE;
            b.multiplier = (b.multiplier * exp(gain * signal)).clamp(MIN_SCALE, MAX_SCALE);
            b.updates += 1;
        }
    }

    #[inline]
    fn bulk_part(&self, prefix: &[f64], log_sf: f64, k: usize) -> f64 {
        prefix[k - 1] + (self.sample.len() - k + 1) as f64 * log_sf
    }

    #[inline]
    fn threshold_log_mass(&self, k: usize) -> f64 {
        match self.kind {
            ThresholdPriorKind::UniformOnOrderStats => -self.log_z,
            ThresholdPriorKind::KullbackLeibler => self.kl_weights[k - self.lo] - self.log_z,
        }
    }

    fn fill_prefix(&self, weights: &[f64], comps: &[GammaComponent], out: &mut [f64]) {
        let eval = BulkEvaluator::new(weights, comps);
        let xs = self.sample.sorted();
        let ln_xs = self.sample.ln_sorted();
        let mut acc = 0.0;
        out[0] = 0.0;
        for i in 0..out.len() - 1 {
            acc += eval.log_density(xs[i], ln_xs[i]);
            out[i + 1] = acc;
        }
    }

    /// Fills `out` with `ln(e^{KL_k} − 1)` over the support; returns `ln Z`.
    fn fill_kl_weights(&self, xi: f64, sigma: f64, out: &mut Vec<f64>) -> f64 {
        out.clear();
        for k in self.lo..=self.hi {
            let c = xi * self.sample.spacing(k) / sigma;
            let kl = kl_adjacent_gpd(xi, c).unwrap_or(f64::NAN);
            out.push(log_expm1(kl));
        }
        log_sum_exp(out)
    }

    /// Tries a candidate bulk; accepts with the MH ratio plus `log_jacobian`.
    fn try_bulk<R: Rng + ?Sized>(
        &mut self,
        weights: &[f64],
        comps: &[GammaComponent],
        log_jacobian: f64,
        rng: &mut R,
    ) -> bool {
        let hyper = bulk_hyper_log_prior_raw(weights, comps, &self.hyp);
        if hyper == f64::NEG_INFINITY {
            return false;
        }
        let mut scratch = core::mem::take(&mut self.scratch);
        self.fill_prefix(weights, comps, &mut scratch);
        let log_sf = bulk_log_sf_raw(self.sample.order_stat(self.k), weights, comps);
        let new = self.bulk_part(&scratch, log_sf, self.k) + hyper;
        let old = self.bulk_part(&self.prefix, self.log_sf, self.k) + self.hyper;
        let ok = accept(new - old + log_jacobian, rng);
        if ok {
            self.scratch = core::mem::replace(&mut self.prefix, scratch);
            self.log_sf = log_sf;
            self.hyper = hyper;
        } else {
            self.scratch = scratch;
        }
        ok
    }

    /// Random walks on each log mean (rejecting order violations), each log
    /// shape, and an additive log-ratio walk on the weights.
    pub fn step_bulk<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        let r = self.comps.len();
        for j in 0..r {
            let step = self.blocks[j].step();
            let old = self.comps[j];
            let factor = exp(step * normal(rng));
            let ok = match GammaComponent::new(old.mean() * factor, old.shape()) {
                Ok(c) => {
                    let mut comps = self.comps.clone();
                    comps[j] = c;
                    let weights = self.weights.clone();
                    let ok = self.try_bulk(&weights, &comps, log(factor), rng);
                    if ok {
                        self.comps = comps;
                    }
                    ok
                }
                Err(_) => false,
            };
            self.record(j, ok);
        }
        for j in 0..r {
            let step = self.blocks[r + j].step();
            let old = self.comps[j];
            let factor = exp(step * normal(rng));
            let ok = match GammaComponent::new(old.mean(), old.shape() * factor) {
                Ok(c) => {
                    let mut comps = self.comps.clone();
                    comps[j] = c;
                    let weights = self.weights.clone();
                    let ok = self.try_bulk(&weights, &comps, log(factor), rng);
                    if ok {
                        self.comps = comps;
                    }
                    ok
                }
                Err(_) => false,
            };
            self.record(r + j, ok);
        }
        if r > 1 {
            let step = self.blocks[2 * r].step();
            let last = log(self.weights[r - 1]);
            let mut logits: Vec<f64> =
                self.weights[..r - 1].iter().map(|w| log(*w) - last + step * normal(rng)).collect();
            logits.push(0.0);
            let lse = log_sum_exp(&logits);
            let weights: Vec<f64> = logits.iter().map(|z| exp(z - lse)).collect();
            let valid = weights.iter().all(|w| *w > 0.0);
            let ok = valid && {
                let jac = weights.iter().map(|w| log(*w)).sum::<f64>()
                    - self.weights.iter().map(|w| log(*w)).sum::<f64>();
                let comps = self.comps.clone();
                let ok = self.try_bulk(&weights, &comps, jac, rng);
                if ok {
                    self.weights = weights;
                }
                ok
            };
            self.record(2 * r, ok);
        }
    }

    /// Joint random walk on (ξ, log σ).
    pub fn step_gpd<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        let block = 2 * self.comps.len() + 1;
        let mult = self.blocks[block].multiplier;
        let xi = self.xi + mult * self.blocks[block].base * normal(rng);
        let sigma_factor = exp(mult * self.sigma_step * normal(rng));
        let sigma = self.sigma * sigma_factor;
        let ok = self.try_gpd(xi, sigma, log(sigma_factor), rng);
        self.record(block, ok);
    }

    fn try_gpd<R: Rng + ?Sized>(&mut self, xi: f64, sigma: f64, log_jacobian: f64, rng: &mut R) -> bool {
        if self.kind == ThresholdPriorKind::KullbackLeibler && !(xi > 0.0) {
            return false;
        }
        let jeffreys = jeffreys_log_prior(xi, sigma);
        if jeffreys == f64::NEG_INFINITY {
            return false;
        }
        let gpd = gpd_sum(self.sample, xi, sigma, self.k);
        let (mass, log_z) = match self.kind {
            ThresholdPriorKind::UniformOnOrderStats => (-self.log_z, self.log_z),
            ThresholdPriorKind::KullbackLeibler => {
                let mut w = core::mem::take(&mut self.kl_scratch);
                let log_z = self.fill_kl_weights(xi, sigma, &mut w);
                let mass = w[self.k - self.lo] - log_z;
                self.kl_scratch = w;
                (mass, log_z)
            }
        };
        let new = gpd + mass + jeffreys;
        let old = self.gpd + self.threshold_log_mass(self.k) + self.jeffreys;
        let ok = accept(new - old + log_jacobian, rng);
        if ok {
            self.xi = xi;
            self.sigma = sigma;
            self.gpd = gpd;
            self.jeffreys = jeffreys;
            self.log_z = log_z;
            if self.kind == ThresholdPriorKind::KullbackLeibler {
                core::mem::swap(&mut self.kl_weights, &mut self.kl_scratch);
            }
        }
        ok
    }

    /// Metropolis move of the threshold index (see [`discrete_mh_step`]).
    pub fn step_threshold<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        let block = self.blocks.len() - 1;
        if self.lo == self.hi {
            self.record(block, false);
            return;
        }
        let current = self.k_dependent(self.k, self.log_sf, self.gpd);
        let mut candidate = (0.0, 0.0);
        let (k, _, ok) = discrete_mh_step(
            self.k,
            current,
            self.lo,
            self.hi,
            self.k_step,
            |k| {
                let log_sf = bulk_log_sf_raw(self.sample.order_stat(k), &self.weights, &self.comps);
                let gpd = gpd_sum(self.sample, self.xi, self.sigma, k);
                candidate = (log_sf, gpd);
                self.k_dependent(k, log_sf, gpd)
            },
            rng,
        );
        if ok {
            self.k = k;
            self.log_sf = candidate.0;
            self.gpd = candidate.1;
        }
        self.record(block, ok);
    }

    fn k_dependent(&self, k: usize, log_sf: f64, gpd: f64) -> f64 {
        self.bulk_part(&self.prefix, log_sf, k) + gpd + self.threshold_log_mass(k)
    }
}

/// Means at the `j/(r+1)` quantiles of `below`, nudged to be strictly
/// increasing; shapes 2.
fn initial_components(r: usize, below: &[f64]) -> Vec<GammaComponent> {
    let mut prev = 0.0f64;
    (1..=r)
        .map(|j| {
            let mut m = super::quantile_sorted(below, j as f64 / (r + 1) as f64);
            if m <= prev {
                m = if prev > 0.0 { prev * 1.01 } else { 1e-3 };
            }
            prev = m;
            GammaComponent::new(m, 2.0).expect("positive mean")
        })
        .collect()
}

fn std_dev(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    libm::sqrt(xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0))
}
