//! Command-line front end. [`run`] parses arguments, dispatches and maps
//! errors to exit codes: 0 success, 1 runtime failure, 2 usage error,
//! 3 data error.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, CommandFactory, Parser, Subcommand};
use gpdthresh_core::{OrderedSample, ThresholdPriorKind};

use crate::config::Settings;
use crate::experiments::{
    generate, reference_model, run_frequentist_study, run_recovery_study, select_mixture_order,
    write_study, RecoveryConfig,
};
use crate::fit::{fit, prior_curve, FitOptions};
use crate::io::{
    fmt_f64, nasdaq_increments, read_column, read_series, row_count_warning, write_chain,
    write_values, write_with, ColumnSelector, SeriesFile,
};
use crate::report::{write_report, RunReport};
use crate::{Error, Result};

#[derive(Debug, Parser)]
#[command(name = "gpdthresh", version, about = "Bayesian threshold estimation for a gamma-mixture bulk with a GPD tail")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit the spliced model to a data file and write a run report.
    Fit(FitArgs),
    /// Repeated-sampling study of threshold coverage and MSE over a grid.
    Study(StudyArgs),
    /// Fit one synthetic dataset with known parameters under both priors.
    Recovery(RecoveryArgs),
    /// Threshold prior mass over the order statistics of a dataset at fixed (ξ, σ).
    PriorCurve(PriorCurveArgs),
    /// Turn a price series into absolute percentage increments.
    Transform(TransformArgs),
    /// Draw a synthetic sample from the reference spliced model.
    Generate(GenerateArgs),
}

#[derive(Debug, Args)]
pub struct DataArgs {
    /// Input file (delimited text, one observation per row).
    #[arg(long)]
    pub data: PathBuf,
    /// Column to read: zero-based index or header name.
    #[arg(long, default_value = "0")]
    pub column: String,
    /// Field delimiter.
    #[arg(long, default_value_t = ',')]
    pub delimiter: char,
    /// The first row is a header.
    #[arg(long)]
    pub header: bool,
}

impl DataArgs {
    fn series(&self) -> Result<SeriesFile> {
        Ok(SeriesFile {
            path: self.data.clone(),
            column: self.column.parse::<ColumnSelector>().expect("infallible"),
            delimiter: delimiter_byte(self.delimiter)?,
            has_header: self.header,
        })
    }

    fn echo(&self) -> Vec<(String, String)> {
        vec![
            ("path".into(), self.data.display().to_string()),
            ("column".into(), self.column.clone()),
            ("delimiter".into(), format!("{:?}", self.delimiter)),
            ("header".into(), self.header.to_string()),
        ]
    }
}

fn delimiter_byte(c: char) -> Result<u8> {
    u8::try_from(c).map_err(|_| Error::Usage(format!("delimiter {c:?} must be a single-byte character")))
}

#[derive(Debug, Args)]
pub struct ChainArgs {
    /// Config file of `key = value` settings; flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Iterations per chain, burn-in included [default: 20000].
    #[arg(long)]
    pub iterations: Option<usize>,
    /// Burn-in iterations, discarded [default: 10000].
    #[arg(long)]
    pub burn_in: Option<usize>,
    /// Master seed; drawn from system entropy and printed when omitted.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Largest jump of the threshold index per proposal [default: 5].
    #[arg(long)]
    pub k_step: Option<usize>,
    /// Keep the initial step sizes instead of tuning them during burn-in.
    #[arg(long)]
    pub no_adapt: bool,
}

impl ChainArgs {
    fn settings(&self) -> Result<Settings> {
        let mut s = Settings::default();
        if let Some(path) = &self.config {
            s.apply_file(path)?;
        }
        if let Some(v) = self.iterations {
            s.chain.iterations = v;
        }
        if let Some(v) = self.burn_in {
            s.chain.burn_in = v;
        }
        if let Some(v) = self.seed {
            s.seed = Some(v);
        }
        if let Some(v) = self.k_step {
            s.chain.k_step = v;
        }
        if self.no_adapt {
            s.chain.adapt = false;
        }
        Ok(s)
    }
}

#[derive(Debug, Args)]
pub struct PriorArgs {
    /// Threshold prior: `kl` (loss-based) or `uniform`.
    #[arg(long)]
    pub prior: Option<ThresholdPriorKind>,
    /// Smallest candidate threshold index (1-based order statistic) [default: 2].
    #[arg(long)]
    pub support_lo: Option<usize>,
    /// Largest candidate threshold index [default: n − 9, keeping at least 10 tail points; n when n < 20].
    #[arg(long)]
    pub support_hi: Option<usize>,
}

impl PriorArgs {
    fn apply(&self, s: &mut Settings) {
        if let Some(k) = self.prior {
            s.prior.kind = k;
        }
        if let Some(v) = self.support_lo {
            s.prior.support_lo = v;
        }
        if self.support_hi.is_some() {
            s.prior.support_hi = self.support_hi;
        }
    }
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub chain: ChainArgs,
    #[command(flatten)]
    pub prior: PriorArgs,
    /// Number of gamma components in the bulk [default: 2].
    #[arg(long)]
    pub r: Option<usize>,
    /// Independent chains, run in parallel [default: 4].
    #[arg(long)]
    pub chains: Option<usize>,
    /// Fit r = 1..=R components and pick the largest without a collapsed weight.
    #[arg(long, value_name = "R")]
    pub select_order: Option<usize>,
    /// Report path; standard output when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Directory for per-chain dumps (`chain<i>.csv`).
    #[arg(long)]
    pub chain_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct StudyArgs {
    #[command(flatten)]
    pub chain: ChainArgs,
    /// Shape values of the grid, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub xi: Vec<f64>,
    /// Scale values of the grid, comma separated [default: 2].
    #[arg(long, value_delimiter = ',')]
    pub sigma: Vec<f64>,
    /// Threshold values of the grid, comma separated [default: 7,9].
    #[arg(long, value_delimiter = ',')]
    pub theta: Vec<f64>,
    /// Sample sizes of the grid, comma separated [default: 1000,5000].
    #[arg(long, value_delimiter = ',')]
    pub n: Vec<usize>,
    /// Replications per cell [default: 100].
    #[arg(long)]
    pub replications: Option<usize>,
    /// Threshold priors to compare, comma separated [default: kl,uniform].
    #[arg(long, value_delimiter = ',')]
    pub priors: Vec<ThresholdPriorKind>,
    /// Results path; standard output when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RecoveryArgs {
    #[command(flatten)]
    pub chain: ChainArgs,
    /// Sample size [default: 1000].
    #[arg(long)]
    pub n: Option<usize>,
    /// Seed of the synthetic dataset [default: 2016].
    #[arg(long)]
    pub data_seed: Option<u64>,
    /// Independent chains per prior [default: 4].
    #[arg(long)]
    pub chains: Option<usize>,
    /// Report path; standard output when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PriorCurveArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub prior: PriorArgs,
    /// GPD shape.
    #[arg(long)]
    pub xi: f64,
    /// GPD scale.
    #[arg(long)]
    pub sigma: f64,
    /// Output CSV (`k,value,log_mass,mass`); standard output when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TransformArgs {
    /// Price file.
    #[arg(long)]
    pub input: PathBuf,
    /// Column to read: zero-based index or header name.
    #[arg(long, default_value = "0")]
    pub column: String,
    /// Field delimiter.
    #[arg(long, default_value_t = ',')]
    pub delimiter: char,
    /// The first row is a header.
    #[arg(long)]
    pub header: bool,
    /// Output file, one increment per line.
    #[arg(long)]
    pub output: PathBuf,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    /// Sample size.
    #[arg(long, default_value_t = 1000)]
    pub n: usize,
    /// GPD shape.
    #[arg(long, default_value_t = 0.4)]
    pub xi: f64,
    /// GPD scale.
    #[arg(long, default_value_t = 2.0)]
    pub sigma: f64,
    /// Threshold.
    #[arg(long, default_value_t = 9.0)]
    pub theta: f64,
    /// Seed; drawn from system entropy and printed when omitted.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output file, one value per line in draw order.
    #[arg(long)]
    pub out: PathBuf,
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn command() -> clap::Command {
    Cli::command()
}

fn warn(msg: impl std::fmt::Display) {
    eprintln!("warning: {msg}");
}

fn resolve_seed(seed: Option<u64>) -> u64 {
    seed.unwrap_or_else(|| {
        let s = rand::random::<u64>();
        eprintln!("seed: {s}");
        s
    })
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(path) => write_with(path, |w| w.write_all(text.as_bytes())),
        None => {
            let stdout = std::io::stdout();
            let mut lock = stdout.lock();
            lock.write_all(text.as_bytes())
                .map_err(|source| Error::Write { path: PathBuf::from("<stdout>"), source })
        }
    }
}

fn load(data: &DataArgs) -> Result<OrderedSample> {
    let sample = read_series(&data.series()?)?;
    if let Some(w) = row_count_warning(&data.data, sample.len()) {
        warn(w);
    }
    Ok(sample)
}

pub fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Fit(a) => cmd_fit(a),
        Command::Study(a) => cmd_study(a),
        Command::Recovery(a) => cmd_recovery(a),
        Command::PriorCurve(a) => cmd_prior_curve(a),
        Command::Transform(a) => cmd_transform(a),
        Command::Generate(a) => cmd_generate(a),
    }
}

fn cmd_fit(a: FitArgs) -> Result<()> {
    let mut s = a.chain.settings()?;
    a.prior.apply(&mut s);
    if let Some(r) = a.r {
        s.chain.components = r;
    }
    if let Some(c) = a.chains {
        s.chains = c;
    }
    let sample = load(&a.data)?;
    let seed = resolve_seed(s.seed);
    let options = FitOptions { prior: s.prior, hyper: s.hyper, chain: s.chain_with_seed(seed), chains: s.chains };
    options.chain.validate()?;

    let mut report = RunReport {
        command: "fit".into(),
        seed,
        data: a.data.echo(),
        n: sample.len(),
        hyper: s.hyper,
        chain: options.chain,
        chains: s.chains,
        fits: Vec::new(),
        notes: Vec::new(),
    };
    let mut dumps = Vec::new();
    match a.select_order {
        Some(r_max) => {
            let sel = select_mixture_order(&sample, r_max, &options)?;
            for (outcome, (r, w)) in sel.fits.iter().zip(&sel.weights) {
                report.fits.push(outcome.record(&format!("r{r}"), None));
                report.notes.push((
                    format!("weights.r{r}"),
                    w.iter().map(|v| fmt_f64(*v)).collect::<Vec<_>>().join(" "),
                ));
                for (i, c) in outcome.chains.iter().enumerate() {
                    dumps.push((format!("r{r}_chain{i}.csv"), c.clone()));
                }
            }
            report.notes.push(("selected_r".into(), sel.selected.to_string()));
            eprintln!("selected r = {}", sel.selected);
        }
        None => {
            let outcome = fit(&sample, &options)?;
            let xi = outcome.summary.get("xi").map_or(f64::NAN, |p| p.mean);
            let sigma = outcome.summary.get("sigma").map_or(f64::NAN, |p| p.mean);
            // Prior curve at the posterior means, where that point is admissible.
            let curve = prior_curve(&sample, &s.prior, xi, sigma).ok();
            report.fits.push(outcome.record(s.prior.kind.as_str(), curve));
            if let Some(max) = outcome.max_rhat() {
                if max >= 1.1 {
                    warn(format!("largest Gelman-Rubin statistic is {max:.3}; chains may not have converged"));
                }
            }
            for (i, c) in outcome.chains.iter().enumerate() {
                dumps.push((format!("chain{i}.csv"), c.clone()));
            }
        }
    }
    if let Some(dir) = &a.chain_dir {
        std::fs::create_dir_all(dir).map_err(|source| Error::Write { path: dir.clone(), source })?;
        for (name, c) in &dumps {
            write_chain(c, &dir.join(name))?;
        }
    }
    match &a.out {
        Some(p) => write_report(&report, p),
        None => emit(None, &report.to_text()),
    }
}

fn cmd_study(a: StudyArgs) -> Result<()> {
    let mut s = a.chain.settings()?;
    if !a.xi.is_empty() {
        s.grid.xi_values = a.xi;
    }
    if !a.sigma.is_empty() {
        s.grid.sigma_values = a.sigma;
    }
    if !a.theta.is_empty() {
        s.grid.theta_values = a.theta;
    }
    if !a.n.is_empty() {
        s.grid.n_values = a.n;
    }
    if let Some(r) = a.replications {
        s.grid.replications = r;
    }
    if !a.priors.is_empty() {
        s.grid.priors = a.priors;
    }
    let seed = resolve_seed(s.seed);
    let grid = crate::experiments::StudyGrid { hyper: s.hyper, chain: s.chain_with_seed(seed), ..s.grid };
    let result = run_frequentist_study(&grid)?;
    for c in &result.cells {
        let f = |v: Option<f64>| v.map_or("-".to_string(), |v| format!("{v:.4}"));
        eprintln!(
            "xi={} sigma={} theta={} n={} prior={}: coverage={} mse={} failures={}{}",
            c.cell.xi,
            c.cell.sigma,
            c.cell.theta,
            c.cell.n,
            c.prior.as_str(),
            f(c.coverage),
            f(c.mse),
            c.failures,
            if c.flagged { " FLAGGED" } else { "" }
        );
    }
    match &a.out {
        Some(p) => write_study(&result, p),
        None => emit(None, &result.to_text()),
    }
}

fn cmd_recovery(a: RecoveryArgs) -> Result<()> {
    let mut s = a.chain.settings()?;
    if let Some(n) = a.n {
        s.n = n;
    }
    if let Some(v) = a.data_seed {
        s.data_seed = Some(v);
    }
    if let Some(c) = a.chains {
        s.chains = c;
    }
    let seed = resolve_seed(s.seed);
    let defaults = RecoveryConfig::default();
    let config = RecoveryConfig {
        n: s.n,
        data_seed: s.data_seed.unwrap_or(defaults.data_seed),
        hyper: s.hyper,
        chain: s.chain_with_seed(seed),
        chains: s.chains,
    };
    let rec = run_recovery_study(&config)?;
    for (label, outcome) in [("kl", &rec.kl), ("uniform", &rec.uniform)] {
        for (name, truth, inside) in rec.coverage(outcome) {
            let p = outcome.summary.get(&name).expect("summarised");
            eprintln!(
                "{label:8} {name:7} truth {truth:8.4} mean {:8.4} 95% ({:8.4}, {:8.4}){}",
                p.mean,
                p.lower,
                p.upper,
                if inside { "" } else { "  MISSED" }
            );
        }
    }
    let report = rec.to_report();
    match &a.out {
        Some(p) => write_report(&report, p),
        None => emit(None, &report.to_text()),
    }
}

fn cmd_prior_curve(a: PriorCurveArgs) -> Result<()> {
    let mut s = Settings::default();
    a.prior.apply(&mut s);
    let sample = load(&a.data)?;
    let curve = prior_curve(&sample, &s.prior, a.xi, a.sigma)?;
    let mut text = String::from("k,value,log_mass,mass\n");
    for p in &curve.points {
        text.push_str(&format!("{},{},{},{}\n", p.k, fmt_f64(p.value), fmt_f64(p.log_mass), fmt_f64(p.log_mass.exp())));
    }
    emit(a.out.as_deref(), &text)
}

fn cmd_transform(a: TransformArgs) -> Result<()> {
    let file = SeriesFile {
        path: a.input.clone(),
        column: a.column.parse::<ColumnSelector>().expect("infallible"),
        delimiter: delimiter_byte(a.delimiter)?,
        has_header: a.header,
    };
    let prices = read_column(&file)?;
    if let Some(w) = row_count_warning(&a.input, prices.len()) {
        warn(w);
    }
    let inc = nasdaq_increments(&prices)?;
    if !inc.zeros.is_empty() {
        warn(format!(
            "{} zero increment(s) (unchanged prices); ties get no mass under the KL threshold prior",
            inc.zeros.len()
        ));
    }
    write_values(&inc.values, &a.output)
}

fn cmd_generate(a: GenerateArgs) -> Result<()> {
    let model = reference_model(a.xi, a.sigma, a.theta).map_err(|e| Error::Usage(e.to_string()))?;
    if a.n < 3 {
        return Err(Error::Usage("n must be at least 3".into()));
    }
    let seed = resolve_seed(a.seed);
    let sample = generate(&model, a.n, seed)?;
    write_values(sample.values(), &a.out)
}
