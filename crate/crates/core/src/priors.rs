//! Threshold priors over the order statistics, the Jeffreys prior for the GPD
//! parameters, and the hyperpriors on the bulk mixture.
//!
//! The loss-based threshold prior puts mass on x^(k) proportional to
//! `exp{KL(g(·|ξ,σ,x^(k)) ‖ g(·|ξ,σ,x^(k−1)))} − 1`. The divergence between
//! two GPDs that share (ξ, σ) and whose thresholds differ by δ depends only on
//! ξ and `c = ξδ/σ`:
//!
//! ```text
//! KL = (1 + ξ)/ξ · (E[log(U^{−ξ} + c)] − ξ) = (1 + ξ)/ξ · ∫₀¹ log(1 + c·u^ξ) du
//! ```
//!
//! The second form has a bounded integrand on (0, 1) and is what gets
//! integrated; a convergent alternating series takes over for small `c`.

use alloc::vec::Vec;
use alloc::{format, vec};

use libm::{fabs, log, log1p, pow};

use crate::distributions::{means_increasing, BulkMixture, GammaComponent};
use crate::quadrature::integrate;
use crate::sample::OrderedSample;
use crate::special::{ln_gamma, log_expm1, log_sum_exp};
use crate::{Error, Result};

pub use crate::special::log_expm1 as stable_log_expm1;

/// Absolute tolerance on the divergence.
pub const KL_ABS_TOL: f64 = 1e-10;

/// Largest `c` evaluated with the power series instead of quadrature.
const SERIES_MAX_C: f64 = 0.25;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ThresholdPriorKind {
    /// Equal mass on every candidate order statistic.
    UniformOnOrderStats,
    /// Loss-based prior from the divergence to the next lower threshold.
    KullbackLeibler,
}

impl ThresholdPriorKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::UniformOnOrderStats => "uniform",
            Self::KullbackLeibler => "kl",
        }
    }
}

impl core::str::FromStr for ThresholdPriorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uniform" => Ok(Self::UniformOnOrderStats),
            "kl" => Ok(Self::KullbackLeibler),
            other => Err(Error::InvalidParameter(format!("unknown threshold prior '{other}'"))),
        }
    }
}

/// Fewest observations the default support keeps at or above the threshold.
///
/// The observation sitting exactly at θ = x^(k) has zero excess and adds a
/// factor 1/σ to the likelihood. With m tail points and the Jeffreys prior the
/// posterior then behaves like σ^((m−1)/ξ − 2) as σ → 0, which is not
/// integrable once ξ ≥ m − 1 — for every ξ when k = n. Chains that reach the
/// top order statistics collapse σ towards zero. Ten tail points move that
/// region out to ξ ≥ 9.
pub const MIN_TAIL: usize = 10;

/// Which threshold prior to use and its support `{support_lo, …, support_hi}`
/// of 1-based order-statistic indices. `support_hi = None` means
/// `n − MIN_TAIL + 1` for samples of at least `2 · MIN_TAIL` points and `n`
/// for smaller ones; `Some(n)` gives the full range.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ThresholdPriorSpec {
    pub kind: ThresholdPriorKind,
    pub support_lo: usize,
    pub support_hi: Option<usize>,
}

impl ThresholdPriorSpec {
    pub fn uniform() -> Self {
        Self { kind: ThresholdPriorKind::UniformOnOrderStats, support_lo: 2, support_hi: None }
    }

    pub fn kl() -> Self {
        Self { kind: ThresholdPriorKind::KullbackLeibler, support_lo: 2, support_hi: None }
    }

    /// Resolves the support against a sample of size `n`.
    pub fn support(&self, n: usize) -> Result<(usize, usize)> {
        let hi = self.support_hi.unwrap_or(if n >= 2 * MIN_TAIL { n + 1 - MIN_TAIL } else { n });
        if !(2 <= self.support_lo && self.support_lo <= hi && hi <= n) {
            return Err(Error::InvalidParameter(format!(
                "threshold support {}..={} invalid for n = {}",
                self.support_lo, hi, n
            )));
        }
        Ok((self.support_lo, hi))
    }
}

/// Normalised log prior masses over the threshold support.
#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdMasses {
    /// Index of the first entry of `log_masses`.
    pub lo: usize,
    pub log_masses: Vec<f64>,
    /// Log normalising constant: `ln Σ_k (e^{KL_k} − 1)` for the loss-based
    /// prior, `ln(count)` for the uniform prior.
    pub log_z: f64,
}

impl ThresholdMasses {
    pub fn hi(&self) -> usize {
        self.lo + self.log_masses.len() - 1
    }

    /// Log mass at `k`; `-inf` outside the support.
    pub fn log_mass(&self, k: usize) -> f64 {
        if k < self.lo || k > self.hi() {
            f64::NEG_INFINITY
        } else {
            self.log_masses[k - self.lo]
        }
    }
}

/// KL divergence from the GPD with threshold x^(k) to the one with threshold
/// x^(k−1), for shape `xi > 0` and reduced spacing `c = ξ(x^(k) − x^(k−1))/σ`.
pub fn kl_adjacent_gpd(xi: f64, c: f64) -> Result<f64> {
    if !(xi > 0.0 && xi.is_finite()) {
        return Err(Error::Domain(format!(
            "the loss-based prior needs a positive shape, got xi = {xi}"
        )));
    }
    if !(c >= 0.0 && c.is_finite()) {
        return Err(Error::Domain(format!("reduced spacing must be non-negative, got {c}")));
    }
    if c == 0.0 {
        return Ok(0.0);
    }
    let factor = (1.0 + xi) / xi;
    let integral = if c <= SERIES_MAX_C {
        log1p_power_series(xi, c)
    } else {
        log1p_power_quadrature(xi, c)?
    };
    Ok(factor * integral)
}

/// `∫₀¹ log(1 + c u^ξ) du = Σ_{m≥1} (−1)^{m+1} c^m / (m (mξ + 1))` for `c < 1`.
fn log1p_power_series(xi: f64, c: f64) -> f64 {
    let mut sum = 0.0;
    let mut power = 1.0;
    for m in 1..200 {
        power *= c;
        let mf = m as f64;
        let term = power / (mf * (mf * xi + 1.0));
        if m % 2 == 1 {
            sum += term;
        } else {
            sum -= term;
        }
        if term < 1e-17 * sum {
            break;
        }
    }
    sum
}

fn log1p_power_quadrature(xi: f64, c: f64) -> Result<f64> {
    let abs_tol = KL_ABS_TOL * xi / (1.0 + xi);
    integrate(|u| log1p(c * pow(u, xi)), 0.0, 1.0, abs_tol, 1e-13).map(|r| r.value)
}

/// Unnormalised log weights `ln(e^{KL_k} − 1)` for `k` in `lo..=hi`.
pub fn kl_log_weights(sample: &OrderedSample, lo: usize, hi: usize, xi: f64, sigma: f64) -> Result<Vec<f64>> {
    if !(sigma > 0.0) {
        return Err(Error::Domain(format!("sigma must be positive, got {sigma}")));
    }
    (lo..=hi)
        .map(|k| {
            let c = xi * sample.spacing(k) / sigma;
            kl_adjacent_gpd(xi, c).map(log_expm1)
        })
        .collect()
}

/// Normalised log prior masses on the threshold index.
pub fn threshold_log_masses(
    sample: &OrderedSample,
    spec: &ThresholdPriorSpec,
    xi: f64,
    sigma: f64,
) -> Result<ThresholdMasses> {
    let (lo, hi) = spec.support(sample.len())?;
    match spec.kind {
        ThresholdPriorKind::UniformOnOrderStats => {
            let count = hi - lo + 1;
            let log_z = log(count as f64);
            Ok(ThresholdMasses { lo, log_masses: vec![-log_z; count], log_z })
        }
        ThresholdPriorKind::KullbackLeibler => {
            let mut w = kl_log_weights(sample, lo, hi, xi, sigma)?;
            let log_z = log_sum_exp(&w);
            if log_z == f64::NEG_INFINITY {
                return Err(Error::DegeneratePrior);
            }
            for v in &mut w {
                *v -= log_z;
            }
            Ok(ThresholdMasses { lo, log_masses: w, log_z })
        }
    }
}

/// Jeffreys independent prior `σ⁻¹(1 + ξ)⁻¹(1 + 2ξ)^{−1/2}` on its support
/// `ξ > −0.5, σ > 0`; `-inf` elsewhere.
pub fn jeffreys_log_prior(xi: f64, sigma: f64) -> f64 {
    if !(xi > -0.5 && sigma > 0.0) || !xi.is_finite() || !sigma.is_finite() {
        return f64::NEG_INFINITY;
    }
    -log(sigma) - log1p(xi) - 0.5 * log1p(2.0 * xi)
}

/// Hyperpriors on the bulk mixture: inverse-gamma on each mean, gamma on each
/// shape, symmetric Dirichlet on the weights.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HyperPriors {
    pub mean_shape: f64,
    pub mean_scale: f64,
    pub shape_shape: f64,
    pub shape_rate: f64,
    pub weight_concentration: f64,
}

impl Default for HyperPriors {
    fn default() -> Self {
        Self {
            mean_shape: 2.1,
            mean_scale: 5.5,
            shape_shape: 6.0,
            shape_rate: 0.5,
            weight_concentration: 1.0,
        }
    }
}

impl HyperPriors {
    pub fn validate(&self) -> Result<()> {
        let all = [
            self.mean_shape,
            self.mean_scale,
            self.shape_shape,
            self.shape_rate,
            self.weight_concentration,
        ];
        if all.iter().all(|v| *v > 0.0 && v.is_finite()) {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!("hyperparameters must be positive: {self:?}")))
        }
    }
}

pub fn inverse_gamma_log_density(x: f64, shape: f64, scale: f64) -> f64 {
    if !(x > 0.0) {
        return f64::NEG_INFINITY;
    }
    shape * log(scale) - ln_gamma(shape) - (shape + 1.0) * log(x) - scale / x
}

pub fn gamma_log_density(x: f64, shape: f64, rate: f64) -> f64 {
    if !(x > 0.0) {
        return f64::NEG_INFINITY;
    }
    shape * log(rate) - ln_gamma(shape) + (shape - 1.0) * log(x) - rate * x
}

/// Log density of the bulk hyperprior at a mixture.
pub fn bulk_hyper_log_prior(m: &BulkMixture, h: &HyperPriors) -> f64 {
    bulk_hyper_log_prior_raw(m.weights(), m.components(), h)
}

/// As [`bulk_hyper_log_prior`] on unvalidated parameters: `-inf` when the
/// means are not strictly increasing or a weight leaves the simplex.
pub fn bulk_hyper_log_prior_raw(weights: &[f64], components: &[GammaComponent], h: &HyperPriors) -> f64 {
    if !means_increasing(components) || weights.len() != components.len() {
        return f64::NEG_INFINITY;
    }
    if weights.iter().any(|w| !(*w > 0.0)) || fabs(weights.iter().sum::<f64>() - 1.0) > 1e-9 {
        return f64::NEG_INFINITY;
    }
    let mut total = 0.0;
    for c in components {
        total += inverse_gamma_log_density(c.mean(), h.mean_shape, h.mean_scale);
        total += gamma_log_density(c.shape(), h.shape_shape, h.shape_rate);
    }
    let r = weights.len() as f64;
    let a = h.weight_concentration;
    total += ln_gamma(r * a) - r * ln_gamma(a);
    if a != 1.0 {
        total += (a - 1.0) * weights.iter().map(|w| log(*w)).sum::<f64>();
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use libm::exp;
    use proptest::prelude::*;

    fn sample(values: &[f64]) -> OrderedSample {
        OrderedSample::new(values.to_vec()).unwrap()
    }

    #[test]
    fn kl_zero_and_monotone() {
        assert_eq!(kl_adjacent_gpd(0.4, 0.0).unwrap(), 0.0);
        let a = kl_adjacent_gpd(0.4, 0.1).unwrap();
        let b = kl_adjacent_gpd(0.4, 0.2).unwrap();
        assert!(b > a && a > 0.0);
        assert!(matches!(kl_adjacent_gpd(0.0, 0.1), Err(Error::Domain(_))));
        assert!(matches!(kl_adjacent_gpd(-0.2, 0.1), Err(Error::Domain(_))));
        assert!(kl_adjacent_gpd(0.4, -0.1).is_err());
    }

    #[test]
    fn series_and_quadrature_agree() {
        for &xi in &[0.05, 0.4, 1.0, 3.0] {
            for &c in &[1e-6, 0.01, 0.1, 0.25, 0.6] {
                let series = log1p_power_series(xi, c);
                let quad = log1p_power_quadrature(xi, c).unwrap();
                assert!((series - quad).abs() < 1e-11, "xi {xi} c {c}: {series} vs {quad}");
            }
        }
    }

    #[test]
    fn kl_closed_form_at_unit_shape() {
        // ξ = 1: ∫ log(1 + cu) du = ((1 + c) log(1 + c) − c)/c
        for &c in &[0.05, 0.5, 3.0, 40.0] {
            let expected = 2.0 * ((1.0 + c) * log1p(c) - c) / c;
            assert_relative_eq!(kl_adjacent_gpd(1.0, c).unwrap(), expected, epsilon = 1e-10);
        }
    }

    #[test]
    fn kl_direct_integral_oracle() {
        // KL written as the expectation of the log ratio under the GPD with
        // the higher threshold; substitute x = θ + σ(t^{-ξ} − 1)/ξ
        let (xi, sigma, delta) = (0.4, 2.0, 0.5);
        let c = xi * delta / sigma;
        let integrand = |t: f64| {
            let y = libm::pow(t, -xi);
            (1.0 + xi) / xi * (log(y + c) - log(y))
        };
        let r = integrate(integrand, 0.0, 1.0, 1e-12, 0.0).unwrap();
        assert_relative_eq!(kl_adjacent_gpd(xi, c).unwrap(), r.value, epsilon = 1e-10);
    }

    #[test]
    fn jeffreys_examples() {
        assert_eq!(jeffreys_log_prior(0.0, 1.0), 0.0);
        assert_eq!(jeffreys_log_prior(-0.6, 1.0), f64::NEG_INFINITY);
        assert_eq!(jeffreys_log_prior(-0.5, 1.0), f64::NEG_INFINITY);
        assert_eq!(jeffreys_log_prior(0.3, 0.0), f64::NEG_INFINITY);
        let v = jeffreys_log_prior(0.5, 2.0);
        assert_relative_eq!(v, -(log(2.0) + log(1.5) + 0.5 * log(2.0)), max_relative = 1e-15);
        assert!((v + 1.4452).abs() < 1e-4);
    }

    #[test]
    fn uniform_masses_are_equal() {
        let s = sample(&[1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0, 10.0, 11.0]);
        let m = threshold_log_masses(&s, &ThresholdPriorSpec::uniform(), 0.3, 1.0).unwrap();
        assert_eq!(m.lo, 2);
        assert_eq!(m.hi(), 11);
        for v in &m.log_masses {
            assert_relative_eq!(exp(*v), 0.1, max_relative = 1e-14);
        }
        assert_eq!(m.log_mass(1), f64::NEG_INFINITY);
    }

    #[test]
    fn tied_order_statistic_gets_zero_mass() {
        let s = sample(&[0.5, 1.0, 2.0, 2.0, 3.5, 6.0]);
        let m = threshold_log_masses(&s, &ThresholdPriorSpec::kl(), 0.4, 1.0).unwrap();
        // x^(3) = x^(4): mass at k = 4 is zero, at k = 3 positive
        assert_eq!(m.log_mass(4), f64::NEG_INFINITY);
        assert!(m.log_mass(3).is_finite());
        assert!(log_sum_exp(&m.log_masses).abs() < 1e-10);
    }

    #[test]
    fn all_ties_is_degenerate() {
        let s = sample(&[2.0, 2.0, 2.0, 2.0]);
        assert_eq!(
            threshold_log_masses(&s, &ThresholdPriorSpec::kl(), 0.4, 1.0),
            Err(Error::DegeneratePrior)
        );
    }

    #[test]
    fn kl_prior_needs_positive_shape() {
        let s = sample(&[1.0, 2.0, 4.0]);
        assert!(threshold_log_masses(&s, &ThresholdPriorSpec::kl(), -0.1, 1.0).is_err());
        assert!(threshold_log_masses(&s, &ThresholdPriorSpec::uniform(), -0.1, 1.0).is_ok());
    }

    #[test]
    fn growing_gaps_give_growing_mass() {
        // evenly spaced bulk, then spacings that grow in the tail
        let mut v: Vec<f64> = (1..=50).map(|i| i as f64 * 0.1).collect();
        let mut x = 5.0;
        for i in 1..=20 {
            x += 0.1 * (1.0 + 0.3 * i as f64);
            v.push(x);
        }
        let s = sample(&v);
        let full = ThresholdPriorSpec { support_hi: Some(v.len()), ..ThresholdPriorSpec::kl() };
        let m = threshold_log_masses(&s, &full, 0.4, 2.0).unwrap();
        for k in m.lo..m.hi() {
            assert!(m.log_mass(k + 1) >= m.log_mass(k) - 1e-12, "k = {k}");
        }
        // flat over the evenly spaced part
        assert!((m.log_mass(10) - m.log_mass(40)).abs() < 1e-12);
        assert!(m.log_mass(70) > m.log_mass(40) + 0.5);
    }

    #[test]
    fn support_validation() {
        let spec = ThresholdPriorSpec { kind: ThresholdPriorKind::UniformOnOrderStats, support_lo: 1, support_hi: None };
        assert!(spec.support(5).is_err());
        let spec = ThresholdPriorSpec { support_lo: 3, support_hi: Some(6), ..ThresholdPriorSpec::uniform() };
        assert!(spec.support(5).is_err());
        assert_eq!(spec.support(6).unwrap(), (3, 6));
        assert_eq!(ThresholdPriorSpec::kl().support(1000).unwrap(), (2, 991));
        assert_eq!(ThresholdPriorSpec::kl().support(19).unwrap(), (2, 19));
        let full = ThresholdPriorSpec { support_hi: Some(1000), ..ThresholdPriorSpec::kl() };
        assert_eq!(full.support(1000).unwrap(), (2, 1000));
    }

    #[test]
    fn hyperprior_examples() {
        let h = HyperPriors::default();
        let c = GammaComponent::new(4.0, 2.0).unwrap();
        let m = BulkMixture::single(c);
        // textbook densities: IG(2.1, 5.5) at 4 and Gamma(shape 6, rate 0.5) at 2
        let ig = 2.1 * log(5.5) - libm::lgamma(2.1) - 3.1 * log(4.0) - 5.5 / 4.0;
        let ga = 6.0 * log(0.5) - libm::lgamma(6.0) + 5.0 * log(2.0) - 1.0;
        assert!((bulk_hyper_log_prior(&m, &h) - (ig + ga)).abs() < 1e-12);

        let a = GammaComponent::new(2.0, 4.0).unwrap();
        let b = GammaComponent::new(8.0, 8.0).unwrap();
        assert_eq!(bulk_hyper_log_prior_raw(&[0.5, 0.5], &[b, a], &h), f64::NEG_INFINITY);
        let ordered = bulk_hyper_log_prior_raw(&[0.3, 0.7], &[a, b], &h);
        let flat = bulk_hyper_log_prior_raw(&[0.6, 0.4], &[a, b], &h);
        // Dirichlet(1, 1) is flat on the simplex
        assert_eq!(ordered, flat);
    }

    proptest! {
        #[test]
        fn kl_nonnegative_increasing(xi in 0.01f64..5.0, c in 0.0f64..20.0, dc in 1e-3f64..5.0) {
            let a = kl_adjacent_gpd(xi, c).unwrap();
            let b = kl_adjacent_gpd(xi, c + dc).unwrap();
            prop_assert!(a >= 0.0);
            prop_assert!(b > a);
        }

        #[test]
        fn jeffreys_finite_iff_support(xi in -2.0f64..5.0, sigma in -1.0f64..5.0) {
            let v = jeffreys_log_prior(xi, sigma);
            prop_assert_eq!(v.is_finite(), xi > -0.5 && sigma > 0.0);
        }

        #[test]
        fn masses_normalise(seed in 0u64..1000, xi in 0.05f64..3.0, sigma in 0.2f64..5.0) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let v: Vec<f64> = (0..40).map(|_| 0.01 + rng.random::<f64>() * 10.0).collect();
            let s = sample(&v);
            for spec in [ThresholdPriorSpec::kl(), ThresholdPriorSpec::uniform()] {
                let m = threshold_log_masses(&s, &spec, xi, sigma).unwrap();
                prop_assert!(log_sum_exp(&m.log_masses).abs() < 1e-10);
            }
        }

        #[test]
        fn kl_masses_scale_invariant(seed in 0u64..1000, xi in 0.05f64..3.0, sigma in 0.2f64..5.0, scale in 0.01f64..100.0) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let v: Vec<f64> = (0..30).map(|_| 0.01 + rng.random::<f64>() * 10.0).collect();
            let s = sample(&v);
            let scaled = sample(&v.iter().map(|x| x * scale).collect::<Vec<_>>());
            let a = threshold_log_masses(&s, &ThresholdPriorSpec::kl(), xi, sigma).unwrap();
            let b = threshold_log_masses(&scaled, &ThresholdPriorSpec::kl(), xi, sigma * scale).unwrap();
            for (x, y) in a.log_masses.iter().zip(&b.log_masses) {
                prop_assert!((exp(*x) - exp(*y)).abs() < 1e-10);
            }
        }
    }
}
