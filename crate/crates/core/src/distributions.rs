//! Densities, distribution functions and samplers for the GPD, the
//! mean–shape gamma, the bulk gamma mixture and the spliced model.

use alloc::vec::Vec;
use alloc::{format, vec};

use libm::{exp, expm1, fabs, log, log1p};
use rand::Rng;
use rand_distr::{Distribution, Gamma};

use crate::special::{gamma_p_q, ln_gamma, ln_gamma_q, log_sum_exp};
use crate::{Error, Result};

/// Below this |ξ| the GPD is evaluated through its exponential limit.
pub const XI_ZERO_TOL: f64 = 1e-10;

/// Maximum deviation of mixture weights from the unit sum.
pub const WEIGHT_SUM_TOL: f64 = 1e-12;

/// Generalised Pareto distribution with shape ξ, scale σ and threshold θ.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GpdParams {
    xi: f64,
    sigma: f64,
    threshold: f64,
}

impl GpdParams {
    pub fn new(xi: f64, sigma: f64, threshold: f64) -> Result<Self> {
        if !xi.is_finite() {
            return Err(Error::InvalidParameter(format!("xi must be finite, got {xi}")));
        }
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::InvalidParameter(format!("sigma must be positive, got {sigma}")));
        }
        if !(threshold > 0.0 && threshold.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "threshold must be positive, got {threshold}"
            )));
        }
        Ok(Self { xi, sigma, threshold })
    }

    pub fn xi(&self) -> f64 {
        self.xi
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    /// Upper end of the support: θ − σ/ξ for ξ < 0, otherwise +∞.
    pub fn upper_endpoint(&self) -> f64 {
        if self.xi < -XI_ZERO_TOL {
            self.threshold - self.sigma / self.xi
        } else {
            f64::INFINITY
        }
    }
}

/// `log g(x | ξ, σ, θ)`; `-inf` outside the support.
#[inline]
pub fn gpd_log_density(x: f64, p: &GpdParams) -> f64 {
    gpd_log_density_raw(x, p.xi, p.sigma, p.threshold)
}

#[inline]
pub(crate) fn gpd_log_density_raw(x: f64, xi: f64, sigma: f64, threshold: f64) -> f64 {
    if !(x >= threshold) {
        return f64::NEG_INFINITY;
    }
    let z = (x - threshold) / sigma;
    if fabs(xi) < XI_ZERO_TOL {
        return -log(sigma) - z;
    }
    let t = xi * z;
    if t <= -1.0 {
        return f64::NEG_INFINITY;
    }
    -log(sigma) - (1.0 + 1.0 / xi) * log1p(t)
}

/// `G(x | ξ, σ, θ)`.
pub fn gpd_cdf(x: f64, p: &GpdParams) -> f64 {
    if x <= p.threshold {
        return 0.0;
    }
    let z = (x - p.threshold) / p.sigma;
    if fabs(p.xi) < XI_ZERO_TOL {
        return -expm1(-z);
    }
    let t = p.xi * z;
    if t <= -1.0 {
        return 1.0;
    }
    -expm1(-log1p(t) / p.xi)
}

/// Quantile function of the GPD for `prob` in `[0, 1)`.
pub fn gpd_quantile(prob: f64, p: &GpdParams) -> f64 {
    excess_from_survival(1.0 - prob, p.xi, p.sigma) + p.threshold
}

/// Excess `σ(s^{−ξ} − 1)/ξ` whose survival probability is `s`.
#[inline]
fn excess_from_survival(s: f64, xi: f64, sigma: f64) -> f64 {
    let ln_s = log(s);
    if fabs(xi) < XI_ZERO_TOL {
        -sigma * ln_s
    } else {
        sigma * expm1(-xi * ln_s) / xi
    }
}

/// `n` independent GPD draws by quantile inversion.
pub fn gpd_sample<R: Rng + ?Sized>(n: usize, p: &GpdParams, rng: &mut R) -> Vec<f64> {
    (0..n).map(|_| draw_gpd(p, rng)).collect()
}

#[inline]
fn draw_gpd<R: Rng + ?Sized>(p: &GpdParams, rng: &mut R) -> f64 {
    // 1 - U lies in (0, 1], so the log is finite.
    let s = 1.0 - rng.random::<f64>();
    p.threshold + excess_from_survival(s, p.xi, p.sigma)
}

/// Gamma density component parametrised by its mean α and shape β
/// (shape β, rate β/α in the usual parametrisation).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GammaComponent {
    mean: f64,
    shape: f64,
}

impl GammaComponent {
    pub fn new(mean: f64, shape: f64) -> Result<Self> {
        if !(mean > 0.0 && mean.is_finite()) {
            return Err(Error::InvalidParameter(format!("gamma mean must be positive, got {mean}")));
        }
        if !(shape > 0.0 && shape.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "gamma shape must be positive, got {shape}"
            )));
        }
        Ok(Self { mean, shape })
    }

    /// Builds the component from the shape–rate parametrisation.
    pub fn from_shape_rate(shape: f64, rate: f64) -> Result<Self> {
        Self::new(shape / rate, shape)
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn shape(&self) -> f64 {
        self.shape
    }

    pub fn rate(&self) -> f64 {
        self.shape / self.mean
    }

    /// `β ln(β/α) − ln Γ(β)`
    #[inline]
    fn log_norm(&self) -> f64 {
        self.shape * log(self.rate()) - ln_gamma(self.shape)
    }

    fn cdf_sf(&self, x: f64) -> (f64, f64) {
        gamma_p_q(self.shape, x * self.rate())
    }
}

/// `log f(x | α, β) = β log(β/α) − log Γ(β) + (β − 1) log x − xβ/α`.
pub fn gamma_ms_log_density(x: f64, c: &GammaComponent) -> Result<f64> {
    check_positive(x)?;
    Ok(c.log_norm() + (c.shape - 1.0) * log(x) - x * c.rate())
}

fn check_positive(x: f64) -> Result<()> {
    if x > 0.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!("x must be positive, got {x}")))
    }
}

/// Finite gamma mixture with strictly increasing component means.
#[derive(Debug, Clone, PartialEq)]
pub struct BulkMixture {
    weights: Vec<f64>,
    components: Vec<GammaComponent>,
}

impl BulkMixture {
    pub fn new(weights: Vec<f64>, components: Vec<GammaComponent>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::InvalidParameter("mixture needs at least one component".into()));
        }
        if weights.len() != components.len() {
            return Err(Error::InvalidParameter(format!(
                "{} weights for {} components",
                weights.len(),
                components.len()
            )));
        }
        if weights.iter().any(|w| !(*w > 0.0 && w.is_finite())) {
            return Err(Error::InvalidParameter("mixture weights must be positive".into()));
        }
        let total: f64 = weights.iter().sum();
        if fabs(total - 1.0) > WEIGHT_SUM_TOL {
            return Err(Error::InvalidParameter(format!("mixture weights sum to {total}, not 1")));
        }
        if !means_increasing(&components) {
            return Err(Error::InvalidParameter(
                "component means must be strictly increasing".into(),
            ));
        }
        Ok(Self { weights, components })
    }

    /// Single-component mixture.
    pub fn single(component: GammaComponent) -> Self {
        Self { weights: vec![1.0], components: vec![component] }
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn components(&self) -> &[GammaComponent] {
        &self.components
    }

    /// Number of components r.
    pub fn order(&self) -> usize {
        self.components.len()
    }

    pub(crate) fn evaluator(&self) -> BulkEvaluator {
        BulkEvaluator::new(&self.weights, &self.components)
    }

    /// One draw from the mixture.
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut chosen = self.components.len() - 1;
        for (j, w) in self.weights.iter().enumerate() {
            acc += w;
            if u < acc {
                chosen = j;
                break;
            }
        }
        let c = &self.components[chosen];
        // Parameters were validated at construction.
        Gamma::new(c.shape, c.mean / c.shape).expect("valid gamma").sample(rng)
    }
}

pub(crate) fn means_increasing(components: &[GammaComponent]) -> bool {
    components.windows(2).all(|w| w[0].mean < w[1].mean)
}

/// Per-component constants of `log ω_j f_j(x)` so the mixture density costs
/// a handful of flops per point and component.
#[derive(Debug, Clone)]
pub(crate) struct BulkEvaluator {
    terms: Vec<(f64, f64, f64)>,
}

impl BulkEvaluator {
    pub(crate) fn new(weights: &[f64], components: &[GammaComponent]) -> Self {
        let terms = weights
            .iter()
            .zip(components)
            .map(|(w, c)| (log(*w) + c.log_norm(), c.shape - 1.0, c.rate()))
            .collect();
        Self { terms }
    }

    /// `log h(x)` given `x` and `ln x`.
    #[inline]
    pub(crate) fn log_density(&self, x: f64, ln_x: f64) -> f64 {
        if self.terms.len() == 1 {
            let (c, a, b) = self.terms[0];
            return c + a * ln_x - b * x;
        }
        let mut max = f64::NEG_INFINITY;
        // Mixtures beyond a few components are unusual; avoid allocation.
        let mut buf = [0.0f64; 16];
        if self.terms.len() > buf.len() {
            let v: Vec<f64> = self.terms.iter().map(|&(c, a, b)| c + a * ln_x - b * x).collect();
            return log_sum_exp(&v);
        }
        for (slot, &(c, a, b)) in buf.iter_mut().zip(&self.terms) {
            *slot = c + a * ln_x - b * x;
            if *slot > max {
                max = *slot;
            }
        }
        if max == f64::NEG_INFINITY {
            return max;
        }
        let sum: f64 = buf[..self.terms.len()].iter().map(|v| exp(v - max)).sum();
        max + log(sum)
    }
}

/// `log h(x | γ) = log Σ ω_j f_j(x)`.
pub fn bulk_log_density(x: f64, m: &BulkMixture) -> Result<f64> {
    check_positive(x)?;
    Ok(m.evaluator().log_density(x, log(x)))
}

/// `H(x | γ) = Σ ω_j F_j(x)`.
pub fn bulk_cdf(x: f64, m: &BulkMixture) -> Result<f64> {
    check_positive(x)?;
    Ok(m.weights.iter().zip(&m.components).map(|(w, c)| w * c.cdf_sf(x).0).sum())
}

/// `log(1 − H(x | γ))` through the upper incomplete gamma functions, so it
/// stays accurate where `H` is within rounding of 1.
pub fn bulk_log_sf(x: f64, m: &BulkMixture) -> Result<f64> {
    check_positive(x)?;
    Ok(bulk_log_sf_raw(x, &m.weights, &m.components))
}

pub(crate) fn bulk_log_sf_raw(x: f64, weights: &[f64], components: &[GammaComponent]) -> f64 {
    if components.len() == 1 {
        let c = &components[0];
        return ln_gamma_q(c.shape, x * c.rate());
    }
    let mut buf = [0.0f64; 16];
    let terms: Vec<f64>;
    let slice: &[f64] = if components.len() <= buf.len() {
        for (slot, (w, c)) in buf.iter_mut().zip(weights.iter().zip(components)) {
            *slot = log(*w) + ln_gamma_q(c.shape, x * c.rate());
        }
        &buf[..components.len()]
    } else {
        terms = weights
            .iter()
            .zip(components)
            .map(|(w, c)| log(*w) + ln_gamma_q(c.shape, x * c.rate()))
            .collect();
        &terms
    };
    log_sum_exp(slice)
}

/// Bulk gamma mixture below θ, GPD above.
#[derive(Debug, Clone, PartialEq)]
pub struct SpliceModel {
    bulk: BulkMixture,
    gpd: GpdParams,
    log_tail_mass: f64,
}

impl SpliceModel {
    pub fn new(bulk: BulkMixture, gpd: GpdParams) -> Result<Self> {
        let theta = gpd.threshold;
        let log_tail_mass = bulk_log_sf(theta, &bulk)?;
        let below = bulk_cdf(theta, &bulk)?;
        if !(below > 0.0 && log_tail_mass > f64::NEG_INFINITY) {
            return Err(Error::InvalidParameter(format!(
                "bulk mass below the threshold must lie in (0, 1); H({theta}) = {below}"
            )));
        }
        Ok(Self { bulk, gpd, log_tail_mass })
    }

    pub fn bulk(&self) -> &BulkMixture {
        &self.bulk
    }

    pub fn gpd(&self) -> &GpdParams {
        &self.gpd
    }

    /// ω = H(θ | γ), the probability of falling below the threshold.
    pub fn bulk_mass(&self) -> f64 {
        -expm1(self.log_tail_mass)
    }
}

/// `log f(x)`: bulk density below θ, `[1 − H(θ)] g(x)` at and above θ.
pub fn splice_log_density(x: f64, s: &SpliceModel) -> Result<f64> {
    check_positive(x)?;
    if x < s.gpd.threshold {
        bulk_log_density(x, &s.bulk)
    } else {
        Ok(s.log_tail_mass + gpd_log_density(x, &s.gpd))
    }
}

/// Distribution function of the spliced model.
pub fn splice_cdf(x: f64, s: &SpliceModel) -> Result<f64> {
    check_positive(x)?;
    if x < s.gpd.threshold {
        bulk_cdf(x, &s.bulk)
    } else {
        let tail = exp(s.log_tail_mass);
        Ok(1.0 - tail + tail * gpd_cdf(x, &s.gpd))
    }
}

/// Composition sampler: a bulk draw is kept when it falls below θ and is
/// otherwise replaced by a GPD draw.
pub fn splice_sample<R: Rng + ?Sized>(n: usize, s: &SpliceModel, rng: &mut R) -> Vec<f64> {
    (0..n)
        .map(|_| {
            let y = s.bulk.draw(rng);
            if y < s.gpd.threshold {
                y
            } else {
                draw_gpd(&s.gpd, rng)
            }
        })
        .collect()
}
