//! Run settings and the key-value config file.
//!
//! A config file holds `key = value` lines; `#` starts a comment line and
//! blank lines are ignored. Lists (the `grid.*` keys and `priors`) are
//! separated by spaces or commas. Settings are resolved as defaults, then
//! the file, then command-line flags.
//!
//! | key | meaning |
//! |-----|---------|
//! | `iterations`, `burn_in`, `components`, `k_step`, `adapt` | chain settings |
//! | `step.log_sigma`, `step.xi`, `step.log_mean`, `step.log_shape`, `step.weights` | initial proposal scales |
//! | `seed` | master seed |
//! | `chains` | chains per fit |
//! | `prior`, `support_lo`, `support_hi` | threshold prior and its support |
//! | `hyper.mean_shape`, `hyper.mean_scale`, `hyper.shape_shape`, `hyper.shape_rate`, `hyper.weight_concentration` | bulk hyperpriors |
//! | `grid.xi`, `grid.sigma`, `grid.theta`, `grid.n`, `replications`, `priors` | study grid |
//! | `n`, `data_seed` | synthetic sample size and data seed |

use std::path::Path;
use std::str::FromStr;

use gpdthresh_core::{ChainConfig, HyperPriors, ThresholdPriorKind, ThresholdPriorSpec};

use crate::experiments::StudyGrid;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Settings {
    pub chain: ChainConfig,
    pub chains: usize,
    /// `None` means draw one from system entropy at run time.
    pub seed: Option<u64>,
    pub prior: ThresholdPriorSpec,
    pub hyper: HyperPriors,
    pub grid: StudyGrid,
    pub n: usize,
    pub data_seed: Option<u64>,
}

impl Default for Settings {
    fn default() -> Self {
        Self {
            chain: ChainConfig::default(),
            chains: crate::fit::DEFAULT_CHAINS,
            seed: None,
            prior: ThresholdPriorSpec::kl(),
            hyper: HyperPriors::default(),
            grid: StudyGrid::default(),
            n: 1000,
            data_seed: None,
        }
    }
}

impl Settings {
    /// Applies one `key = value` setting.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let bad = || Error::Usage(format!("invalid value for {key}: {value:?}"));
        fn num<T: FromStr>(v: &str, bad: impl Fn() -> Error) -> Result<T> {
            v.trim().parse().map_err(|_| bad())
        }
        fn list<T: FromStr>(v: &str, bad: impl Fn() -> Error) -> Result<Vec<T>> {
            v.split(|c: char| c == ',' || c.is_whitespace())
                .filter(|s| !s.is_empty())
                .map(|s| s.parse().map_err(|_| bad()))
                .collect()
        }
        match key {
            "iterations" => self.chain.iterations = num(value, bad)?,
            "burn_in" => self.chain.burn_in = num(value, bad)?,
            "components" => self.chain.components = num(value, bad)?,
            "k_step" => self.chain.k_step = num(value, bad)?,
            "adapt" => self.chain.adapt = num(value, bad)?,
            "step.log_sigma" => self.chain.steps.log_sigma = num(value, bad)?,
            "step.xi" => self.chain.steps.xi = num(value, bad)?,
            "step.log_mean" => self.chain.steps.log_mean = num(value, bad)?,
            "step.log_shape" => self.chain.steps.log_shape = num(value, bad)?,
            "step.weights" => self.chain.steps.weights = num(value, bad)?,
            "seed" => self.seed = Some(num(value, bad)?),
            "chains" => self.chains = num(value, bad)?,
            "prior" => self.prior.kind = num(value, bad)?,
            "support_lo" => self.prior.support_lo = num(value, bad)?,
            "support_hi" => {
                self.prior.support_hi = match value.trim() {
                    "none" => None,
                    v => Some(num(v, bad)?),
                }
            }
            "hyper.mean_shape" => self.hyper.mean_shape = num(value, bad)?,
            "hyper.mean_scale" => self.hyper.mean_scale = num(value, bad)?,
            "hyper.shape_shape" => self.hyper.shape_shape = num(value, bad)?,
            "hyper.shape_rate" => self.hyper.shape_rate = num(value, bad)?,
            "hyper.weight_concentration" => self.hyper.weight_concentration = num(value, bad)?,
            "grid.xi" => self.grid.xi_values = list(value, bad)?,
            "grid.sigma" => self.grid.sigma_values = list(value, bad)?,
            "grid.theta" => self.grid.theta_values = list(value, bad)?,
            "grid.n" => self.grid.n_values = list(value, bad)?,
            "replications" => self.grid.replications = num(value, bad)?,
            "priors" => self.grid.priors = list::<ThresholdPriorKind>(value, bad)?,
            "n" => self.n = num(value, bad)?,
            "data_seed" => self.data_seed = Some(num(value, bad)?),
            _ => return Err(Error::Usage(format!("unknown setting {key:?}"))),
        }
        Ok(())
    }

    pub fn apply_text(&mut self, text: &str, origin: &Path) -> Result<()> {
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let at = |msg: String| Error::Usage(format!("{}:{}: {msg}", origin.display(), i + 1));
            let (k, v) = line.split_once('=').ok_or_else(|| at(format!("expected key = value, found {line:?}")))?;
            self.set(k.trim(), v.trim()).map_err(|e| at(e.to_string()))?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| Error::Read { path: path.to_path_buf(), source })?;
        self.apply_text(&text, path)
    }

    /// Chain settings with the master seed filled in.
    pub fn chain_with_seed(&self, seed: u64) -> ChainConfig {
        ChainConfig { seed, ..self.chain }
    }
}
