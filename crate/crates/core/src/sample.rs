use alloc::vec::Vec;
use alloc::{format, string::String};

use crate::{Error, Result};

/// A positive-valued sample held alongside its order statistics.
///
/// Order statistics are addressed with 1-based indices, so `order_stat(k)`
/// is x^(k) and the candidate thresholds are `k = 2..=n`.
#[derive(Debug, Clone, PartialEq)]
pub struct OrderedSample {
    values: Vec<f64>,
    sorted: Vec<f64>,
    ln_sorted: Vec<f64>,
}

impl OrderedSample {
    /// Smallest sample that leaves one bulk point below at least one candidate
    /// threshold.
    pub const MIN_LEN: usize = 3;

    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.len() < Self::MIN_LEN {
            return Err(Error::InvalidSample(format!(
                "need at least {} observations, got {}",
                Self::MIN_LEN,
                values.len()
            )));
        }
        let bad: Vec<String> = values
            .iter()
            .enumerate()
            .filter(|(_, v)| !(v.is_finite() && **v > 0.0))
            .take(10)
            .map(|(i, v)| format!("#{i}={v}"))
            .collect();
        if !bad.is_empty() {
            return Err(Error::InvalidSample(format!(
                "observations must be finite and positive: {}",
                bad.join(", ")
            )));
        }
        let mut sorted = values.clone();
        sorted.sort_by(f64::total_cmp);
        let ln_sorted = sorted.iter().map(|&x| libm::log(x)).collect();
        Ok(Self { values, sorted, ln_sorted })
    }

    /// Observations in their original order.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Order statistics x^(1) ≤ … ≤ x^(n).
    pub fn sorted(&self) -> &[f64] {
        &self.sorted
    }

    pub(crate) fn ln_sorted(&self) -> &[f64] {
        &self.ln_sorted
    }

    pub fn len(&self) -> usize {
        self.sorted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sorted.is_empty()
    }

    /// x^(k), 1-based. Panics if `k` is outside `1..=n`.
    #[inline]
    pub fn order_stat(&self, k: usize) -> f64 {
        self.sorted[k - 1]
    }

    /// Spacing x^(k) − x^(k−1) for `k` in `2..=n`.
    #[inline]
    pub fn spacing(&self, k: usize) -> f64 {
        self.sorted[k - 1] - self.sorted[k - 2]
    }

    /// Empirical quantile by linear interpolation between order statistics:
    /// with `h = (n − 1)·p`, returns `x_(⌊h⌋) + (h − ⌊h⌋)(x_(⌊h⌋+1) − x_(⌊h⌋))`
    /// on 0-based sorted values.
    pub fn quantile(&self, p: f64) -> f64 {
        crate::sampler::quantile_sorted(&self.sorted, p)
    }

    /// 1-based index of the order statistic nearest the `p` quantile.
    pub fn quantile_index(&self, p: f64) -> usize {
        let h = (self.len() - 1) as f64 * p.clamp(0.0, 1.0);
        libm::round(h) as usize + 1
    }
}
