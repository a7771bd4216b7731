//! Likelihood of the spliced model with the threshold on an order statistic,
//! and the unnormalised joint log posterior.

use libm::log;

use crate::distributions::{gpd_log_density_raw, BulkMixture};
use crate::priors::{
    bulk_hyper_log_prior, jeffreys_log_prior, threshold_log_masses, HyperPriors, ThresholdPriorKind,
    ThresholdPriorSpec,
};
use crate::sample::OrderedSample;

/// Full parameter vector: bulk mixture γ, GPD shape ξ and scale σ, and the
/// 1-based index `k` of the order statistic used as threshold.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelState {
    pub bulk: BulkMixture,
    pub xi: f64,
    pub sigma: f64,
    pub k: usize,
}

impl ModelState {
    /// Threshold value x^(k).
    pub fn threshold(&self, sample: &OrderedSample) -> f64 {
        sample.order_stat(self.k)
    }
}

/// `Σ_{j<k} log h(x^(j)) + Σ_{j≥k} {log[1 − H(x^(k))] + log g(x^(j) | ξ, σ, x^(k))}`.
///
/// The bulk terms use the untruncated mixture density. Returns `-inf` when a
/// tail point is outside the GPD support, or when `k` is not in `2..=n`.
pub fn log_likelihood(sample: &OrderedSample, state: &ModelState) -> f64 {
    let n = sample.len();
    let k = state.k;
    if k < 2 || k > n || !(state.sigma > 0.0) {
        return f64::NEG_INFINITY;
    }
    let eval = state.bulk.evaluator();
    let xs = sample.sorted();
    let ln_xs = sample.ln_sorted();
    let bulk: f64 = (0..k - 1).map(|i| eval.log_density(xs[i], ln_xs[i])).sum();
    tail_log_likelihood(sample, &state.bulk, state.xi, state.sigma, k) + bulk
}

/// The `j ≥ k` part of the likelihood.
pub(crate) fn tail_log_likelihood(
    sample: &OrderedSample,
    bulk: &BulkMixture,
    xi: f64,
    sigma: f64,
    k: usize,
) -> f64 {
    let theta = sample.order_stat(k);
    let count = (sample.len() - k + 1) as f64;
    let log_sf = crate::distributions::bulk_log_sf_raw(theta, bulk.weights(), bulk.components());
    count * log_sf + gpd_sum(sample, xi, sigma, k)
}

/// `Σ_{j≥k} log g(x^(j) | ξ, σ, x^(k))`.
pub(crate) fn gpd_sum(sample: &OrderedSample, xi: f64, sigma: f64, k: usize) -> f64 {
    let xs = sample.sorted();
    let theta = xs[k - 1];
    if libm::fabs(xi) < crate::distributions::XI_ZERO_TOL || xi < 0.0 {
        return xs[k - 1..].iter().map(|&x| gpd_log_density_raw(x, xi, sigma, theta)).sum();
    }
    // ξ > 0: support is unbounded above, so only the log1p terms remain.
    let a = xi / sigma;
    let s: f64 = xs[k - 1..].iter().map(|&x| libm::log1p(a * (x - theta))).sum();
    -((xs.len() - k + 1) as f64) * log(sigma) - (1.0 + 1.0 / xi) * s
}

/// Log likelihood plus the threshold log mass (normalised, so the loss-based
/// prior carries its ξ,σ-dependent normaliser), the Jeffreys prior and the
/// bulk hyperprior. Any impossible component yields `-inf`.
pub fn log_posterior(
    sample: &OrderedSample,
    state: &ModelState,
    spec: &ThresholdPriorSpec,
    hyp: &HyperPriors,
) -> f64 {
    let jeffreys = jeffreys_log_prior(state.xi, state.sigma);
    if jeffreys == f64::NEG_INFINITY {
        return jeffreys;
    }
    if spec.kind == ThresholdPriorKind::KullbackLeibler && !(state.xi > 0.0) {
        return f64::NEG_INFINITY;
    }
    let mass = match threshold_log_masses(sample, spec, state.xi, state.sigma) {
        Ok(m) => m.log_mass(state.k),
        Err(_) => return f64::NEG_INFINITY,
    };
    if mass == f64::NEG_INFINITY {
        return mass;
    }
    let hyper = bulk_hyper_log_prior(&state.bulk, hyp);
    if hyper == f64::NEG_INFINITY {
        return hyper;
    }
    let ll = log_likelihood(sample, state);
    ll + mass + jeffreys + hyper
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distributions::{
        bulk_cdf, bulk_log_density, gpd_log_density, GammaComponent, GpdParams,
    };
    use alloc::vec;
    use alloc::vec::Vec;
    use approx::assert_relative_eq;

    fn exp_bulk(mean: f64) -> BulkMixture {
        BulkMixture::single(GammaComponent::new(mean, 1.0).unwrap())
    }

    #[test]
    fn hand_computed_three_points() {
        let s = OrderedSample::new(vec![10.0, 1.0, 2.0]).unwrap();
        let state = ModelState { bulk: exp_bulk(2.0), xi: 0.3, sigma: 1.7, k: 3 };
        // exponential with mean 2: log h(x) = −log 2 − x/2, 1 − H(x) = e^{−x/2}
        let expected = (-log(2.0) - 0.5) + (-log(2.0) - 1.0) + (-5.0) + (-log(1.7));
        assert_relative_eq!(log_likelihood(&s, &state), expected, max_relative = 1e-14);
    }

    #[test]
    fn zero_excess_at_top() {
        let s = OrderedSample::new(vec![0.4, 1.1, 2.5, 3.0]).unwrap();
        let bulk = exp_bulk(1.5);
        let state = ModelState { bulk: bulk.clone(), xi: 0.7, sigma: 0.9, k: 4 };
        let bulk_part: f64 = [0.4, 1.1, 2.5].iter().map(|&x| bulk_log_density(x, &bulk).unwrap()).sum();
        let expected = bulk_part - log(0.9) + libm::log1p(-bulk_cdf(3.0, &bulk).unwrap());
        assert_relative_eq!(log_likelihood(&s, &state), expected, max_relative = 1e-13);
    }

    #[test]
    fn order_statistic_maximises_excess_contribution() {
        // moving θ down inside (x^(k−1), x^(k)) never increases the GPD factor
        let s = OrderedSample::new(vec![1.0, 2.0, 3.0, 4.5, 7.0, 12.0]).unwrap();
        let (xi, sigma, k) = (0.4, 2.0, 4);
        let at = |theta: f64| -> f64 {
            s.sorted()[k - 1..]
                .iter()
                .map(|&x| gpd_log_density(x, &GpdParams::new(xi, sigma, theta).unwrap()))
                .sum()
        };
        let top = at(s.order_stat(k));
        let (lo, hi) = (s.order_stat(k - 1), s.order_stat(k));
        for i in 1..100 {
            let theta = lo + (hi - lo) * i as f64 / 100.0;
            assert!(at(theta) <= top);
        }
    }

    #[test]
    fn negative_shape_support() {
        let s = OrderedSample::new(vec![1.0, 2.0, 3.0, 10.0]).unwrap();
        // θ = x^(3) = 3, upper endpoint 3 + 1/0.4 = 5.5 < 10
        let state = ModelState { bulk: exp_bulk(2.0), xi: -0.4, sigma: 1.0, k: 3 };
        assert_eq!(log_likelihood(&s, &state), f64::NEG_INFINITY);
        let state = ModelState { xi: 0.4, ..state };
        assert!(log_likelihood(&s, &state).is_finite());
    }

    #[test]
    fn permutation_invariant() {
        let a = OrderedSample::new(vec![3.0, 1.0, 7.0, 2.0, 5.0]).unwrap();
        let b = OrderedSample::new(vec![7.0, 5.0, 3.0, 2.0, 1.0]).unwrap();
        let state = ModelState { bulk: exp_bulk(2.0), xi: 0.2, sigma: 1.3, k: 4 };
        assert_eq!(log_likelihood(&a, &state), log_likelihood(&b, &state));
    }

    #[test]
    fn posterior_is_sum_of_parts() {
        let s = OrderedSample::new(vec![0.3, 0.9, 1.4, 2.2, 3.9, 8.0, 15.0]).unwrap();
        let hyp = HyperPriors::default();
        let state = ModelState { bulk: exp_bulk(2.0), xi: 0.5, sigma: 2.0, k: 5 };
        for spec in [ThresholdPriorSpec::uniform(), ThresholdPriorSpec::kl()] {
            let masses = threshold_log_masses(&s, &spec, 0.5, 2.0).unwrap();
            let expected = log_likelihood(&s, &state)
                + masses.log_mass(5)
                + jeffreys_log_prior(0.5, 2.0)
                + bulk_hyper_log_prior(&state.bulk, &hyp);
            assert_relative_eq!(log_posterior(&s, &state, &spec, &hyp), expected, max_relative = 1e-14);
        }
    }

    #[test]
    fn impossible_components_propagate() {
        let s = OrderedSample::new(vec![1.0, 2.0, 3.0, 10.0]).unwrap();
        let hyp = HyperPriors::default();
        let state = ModelState { bulk: exp_bulk(2.0), xi: -0.6, sigma: 1.0, k: 3 };
        assert_eq!(log_posterior(&s, &state, &ThresholdPriorSpec::uniform(), &hyp), f64::NEG_INFINITY);
        let state = ModelState { xi: -0.1, ..state };
        assert_eq!(log_posterior(&s, &state, &ThresholdPriorSpec::kl(), &hyp), f64::NEG_INFINITY);
        let state = ModelState { xi: 0.3, k: 1, ..state };
        assert_eq!(log_posterior(&s, &state, &ThresholdPriorSpec::uniform(), &hyp), f64::NEG_INFINITY);
    }

    #[test]
    fn uniform_posterior_differences_are_likelihood_differences() {
        let s = OrderedSample::new(vec![0.3, 0.9, 1.4, 2.2, 3.9, 8.0, 15.0]).unwrap();
        let hyp = HyperPriors::default();
        let spec = ThresholdPriorSpec::uniform();
        let states: Vec<ModelState> =
            (2..=7).map(|k| ModelState { bulk: exp_bulk(2.0), xi: 0.5, sigma: 2.0, k }).collect();
        for w in states.windows(2) {
            let dp = log_posterior(&s, &w[1], &spec, &hyp) - log_posterior(&s, &w[0], &spec, &hyp);
            let dl = log_likelihood(&s, &w[1]) - log_likelihood(&s, &w[0]);
            assert!((dp - dl).abs() < 1e-12);
        }
    }
}
