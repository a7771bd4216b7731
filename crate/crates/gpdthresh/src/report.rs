//! Versioned key-value report format.
//!
//! A report is UTF-8 text, one `key = value` pair per line, keys in a fixed
//! order. Floats use [`fmt_f64`](crate::io::fmt_f64) (17 significant digits,
//! lowercase scientific; `inf`, `-inf` spelled out), so writing the same
//! report twice gives the same bytes and reading it back is lossless. Lists
//! are written as a count line followed by one line per element. The layout
//! is documented key by key in the README.

use std::collections::VecDeque;
use std::fmt::{Display, Write as _};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use gpdthresh_core::sampler::{BlockAcceptance, StepSizes, ThresholdMass};
use gpdthresh_core::{ChainConfig, HyperPriors, ParamSummary, ThresholdPriorKind, ThresholdPriorSpec};

use crate::io::{fmt_f64, write_with};
use crate::{Error, Result};

pub const REPORT_SCHEMA: &str = "gpdthresh-report/1";

/// Prior mass over candidate thresholds at fixed (ξ, σ).
#[derive(Debug, Clone, PartialEq)]
pub struct PriorCurve {
    pub kind: ThresholdPriorKind,
    pub xi: f64,
    pub sigma: f64,
    pub points: Vec<CurvePoint>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvePoint {
    pub k: usize,
    pub value: f64,
    pub log_mass: f64,
}

/// Results of one multi-chain fit.
#[derive(Debug, Clone, PartialEq)]
pub struct FitRecord {
    pub label: String,
    pub prior: ThresholdPriorSpec,
    pub components: usize,
    pub chain_seeds: Vec<u64>,
    pub params: Vec<ParamSummary>,
    /// Gelman–Rubin per scalar; `None` where the within-chain variance is zero.
    pub rhat: Vec<(String, Option<f64>)>,
    /// Per chain, per block.
    pub acceptance: Vec<Vec<BlockAcceptance>>,
    /// Per chain, step sizes after burn-in.
    pub tuned_steps: Vec<Vec<(String, f64)>>,
    pub threshold_posterior: Vec<ThresholdMass>,
    pub prior_curve: Option<PriorCurve>,
}

impl FitRecord {
    pub fn param(&self, name: &str) -> Option<&ParamSummary> {
        self.params.iter().find(|p| p.name == name)
    }

    pub fn rhat(&self, name: &str) -> Option<f64> {
        self.rhat.iter().find(|(n, _)| n == name).and_then(|(_, v)| *v)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub command: String,
    /// Master seed; per-chain seeds are derived from it and listed per fit.
    pub seed: u64,
    /// Where the data came from (path, column, ... or generator settings).
    pub data: Vec<(String, String)>,
    pub n: usize,
    pub hyper: HyperPriors,
    pub chain: ChainConfig,
    pub chains: usize,
    pub fits: Vec<FitRecord>,
    /// Command-specific extras such as true parameter values.
    pub notes: Vec<(String, String)>,
}

impl RunReport {
    pub fn fit(&self, label: &str) -> Option<&FitRecord> {
        self.fits.iter().find(|f| f.label == label)
    }

    pub fn to_text(&self) -> String {
        let mut w = KvWriter::default();
        w.put("schema", REPORT_SCHEMA);
        w.put("command", &self.command);
        w.put("seed", self.seed);
        w.put("data", self.data.len());
        for (k, v) in &self.data {
            w.put(format!("data.{k}"), v);
        }
        w.put("n", self.n);
        write_hyper(&mut w, &self.hyper);
        write_chain_config(&mut w, "chain", &self.chain);
        w.put("chains", self.chains);
        w.put("fits", self.fits.len());
        for (i, f) in self.fits.iter().enumerate() {
            write_fit(&mut w, &format!("fit.{i}"), f);
        }
        w.put("notes", self.notes.len());
        for (k, v) in &self.notes {
            w.put(format!("note.{k}"), v);
        }
        w.finish()
    }

    pub fn from_text(text: &str, origin: &Path) -> Result<Self> {
        let mut r = KvReader::new(text, origin);
        let schema = r.raw("schema")?;
        if schema != REPORT_SCHEMA {
            return Err(r.error(format!("unsupported schema {schema:?} (expected {REPORT_SCHEMA})")));
        }
        let command = r.raw("command")?;
        let seed = r.parse("seed")?;
        let data = r.pairs("data", "data.")?;
        let n = r.parse("n")?;
        let hyper = read_hyper(&mut r)?;
        let chain = read_chain_config(&mut r, "chain")?;
        let chains = r.parse("chains")?;
        let nfits: usize = r.parse("fits")?;
        let mut fits = Vec::with_capacity(nfits);
        for i in 0..nfits {
            fits.push(read_fit(&mut r, &format!("fit.{i}"))?);
        }
        let notes = r.pairs("notes", "note.")?;
        r.end()?;
        Ok(Self { command, seed, data, n, hyper, chain, chains, fits, notes })
    }
}

pub(crate) fn write_hyper(w: &mut KvWriter, h: &HyperPriors) {
    w.float("hyper.mean_shape", h.mean_shape);
    w.float("hyper.mean_scale", h.mean_scale);
    w.float("hyper.shape_shape", h.shape_shape);
    w.float("hyper.shape_rate", h.shape_rate);
    w.float("hyper.weight_concentration", h.weight_concentration);
}

pub(crate) fn read_hyper(r: &mut KvReader) -> Result<HyperPriors> {
    Ok(HyperPriors {
        mean_shape: r.parse("hyper.mean_shape")?,
        mean_scale: r.parse("hyper.mean_scale")?,
        shape_shape: r.parse("hyper.shape_shape")?,
        shape_rate: r.parse("hyper.shape_rate")?,
        weight_concentration: r.parse("hyper.weight_concentration")?,
    })
}

pub(crate) fn write_chain_config(w: &mut KvWriter, p: &str, c: &ChainConfig) {
    w.put(format!("{p}.iterations"), c.iterations);
    w.put(format!("{p}.burn_in"), c.burn_in);
    w.put(format!("{p}.seed"), c.seed);
    w.put(format!("{p}.components"), c.components);
    w.float(format!("{p}.step.log_sigma"), c.steps.log_sigma);
    w.float(format!("{p}.step.xi"), c.steps.xi);
    w.float(format!("{p}.step.log_mean"), c.steps.log_mean);
    w.float(format!("{p}.step.log_shape"), c.steps.log_shape);
    w.float(format!("{p}.step.weights"), c.steps.weights);
    w.put(format!("{p}.k_step"), c.k_step);
    w.put(format!("{p}.adapt"), c.adapt);
}

pub(crate) fn read_chain_config(r: &mut KvReader, p: &str) -> Result<ChainConfig> {
    Ok(ChainConfig {
        iterations: r.parse(&format!("{p}.iterations"))?,
        burn_in: r.parse(&format!("{p}.burn_in"))?,
        seed: r.parse(&format!("{p}.seed"))?,
        components: r.parse(&format!("{p}.components"))?,
        steps: StepSizes {
            log_sigma: r.parse(&format!("{p}.step.log_sigma"))?,
            xi: r.parse(&format!("{p}.step.xi"))?,
            log_mean: r.parse(&format!("{p}.step.log_mean"))?,
            log_shape: r.parse(&format!("{p}.step.log_shape"))?,
            weights: r.parse(&format!("{p}.step.weights"))?,
        },
        k_step: r.parse(&format!("{p}.k_step"))?,
        adapt: r.parse(&format!("{p}.adapt"))?,
    })
}

fn write_fit(w: &mut KvWriter, p: &str, f: &FitRecord) {
    w.put(format!("{p}.label"), &f.label);
    w.put(format!("{p}.prior"), f.prior.kind.as_str());
    w.put(format!("{p}.support_lo"), f.prior.support_lo);
    w.put(format!("{p}.support_hi"), opt(f.prior.support_hi));
    w.put(format!("{p}.components"), f.components);
    w.put(format!("{p}.chain_seeds"), join(f.chain_seeds.iter()));

    w.put(format!("{p}.params"), f.params.len());
    for s in &f.params {
        w.put(
            format!("{p}.param.{}", s.name),
            join([s.mean, s.median, s.lower, s.upper].map(fmt_f64).iter()),
        );
    }
    w.put(format!("{p}.rhat"), f.rhat.len());
    for (name, v) in &f.rhat {
        w.put(format!("{p}.rhat.{name}"), v.map_or("none".to_string(), fmt_f64));
    }
    w.put(format!("{p}.acceptance"), f.acceptance.len());
    for (c, blocks) in f.acceptance.iter().enumerate() {
        w.put(format!("{p}.acceptance.{c}"), blocks.len());
        for b in blocks {
            w.put(format!("{p}.acceptance.{c}.{}", b.block), format!("{} {}", b.accepted, b.proposed));
        }
    }
    w.put(format!("{p}.steps"), f.tuned_steps.len());
    for (c, steps) in f.tuned_steps.iter().enumerate() {
        w.put(format!("{p}.steps.{c}"), steps.len());
        for (name, v) in steps {
            w.float(format!("{p}.steps.{c}.{name}"), *v);
        }
    }
    w.put(format!("{p}.threshold_posterior"), f.threshold_posterior.len());
    for m in &f.threshold_posterior {
        w.put(
            format!("{p}.threshold_posterior.{}", m.k),
            format!("{} {}", fmt_f64(m.value), fmt_f64(m.probability)),
        );
    }
    match &f.prior_curve {
        None => w.put(format!("{p}.prior_curve"), "none"),
        Some(c) => {
            w.put(format!("{p}.prior_curve"), c.points.len());
            w.put(format!("{p}.prior_curve.prior"), c.kind.as_str());
            w.float(format!("{p}.prior_curve.xi"), c.xi);
            w.float(format!("{p}.prior_curve.sigma"), c.sigma);
            for pt in &c.points {
                w.put(
                    format!("{p}.prior_curve.{}", pt.k),
                    format!("{} {}", fmt_f64(pt.value), fmt_f64(pt.log_mass)),
                );
            }
        }
    }
}

fn read_fit(r: &mut KvReader, p: &str) -> Result<FitRecord> {
    let label = r.raw(&format!("{p}.label"))?;
    let kind: ThresholdPriorKind = r.parse(&format!("{p}.prior"))?;
    let support_lo = r.parse(&format!("{p}.support_lo"))?;
    let support_hi = r.optional(&format!("{p}.support_hi"))?;
    let components = r.parse(&format!("{p}.components"))?;
    let chain_seeds = r.list(&format!("{p}.chain_seeds"))?;

    let np: usize = r.parse(&format!("{p}.params"))?;
    let mut params = Vec::with_capacity(np);
    for _ in 0..np {
        let (name, v) = r.keyed(&format!("{p}.param."))?;
        let v: Vec<f64> = r.split(&v, 4)?;
        params.push(ParamSummary { name, mean: v[0], median: v[1], lower: v[2], upper: v[3] });
    }
    let nr: usize = r.parse(&format!("{p}.rhat"))?;
    let mut rhat = Vec::with_capacity(nr);
    for _ in 0..nr {
        let (name, v) = r.keyed(&format!("{p}.rhat."))?;
        let v = if v == "none" { None } else { Some(r.value(&v)?) };
        rhat.push((name, v));
    }
    let nc: usize = r.parse(&format!("{p}.acceptance"))?;
    let mut acceptance = Vec::with_capacity(nc);
    for c in 0..nc {
        let nb: usize = r.parse(&format!("{p}.acceptance.{c}"))?;
        let mut blocks = Vec::with_capacity(nb);
        for _ in 0..nb {
            let (block, v) = r.keyed(&format!("{p}.acceptance.{c}."))?;
            let v: Vec<u64> = r.split(&v, 2)?;
            blocks.push(BlockAcceptance { block, accepted: v[0], proposed: v[1] });
        }
        acceptance.push(blocks);
    }
    let ns: usize = r.parse(&format!("{p}.steps"))?;
    let mut tuned_steps = Vec::with_capacity(ns);
    for c in 0..ns {
        let m: usize = r.parse(&format!("{p}.steps.{c}"))?;
        let mut steps = Vec::with_capacity(m);
        for _ in 0..m {
            let (name, v) = r.keyed(&format!("{p}.steps.{c}."))?;
            steps.push((name, r.value(&v)?));
        }
        tuned_steps.push(steps);
    }
    let nt: usize = r.parse(&format!("{p}.threshold_posterior"))?;
    let mut threshold_posterior = Vec::with_capacity(nt);
    for _ in 0..nt {
        let (k, v) = r.keyed(&format!("{p}.threshold_posterior."))?;
        let k = r.value(&k)?;
        let v: Vec<f64> = r.split(&v, 2)?;
        threshold_posterior.push(ThresholdMass { k, value: v[0], probability: v[1] });
    }
    let prior_curve = match r.raw(&format!("{p}.prior_curve"))?.as_str() {
        "none" => None,
        count => {
            let count: usize = r.value(count)?;
            let kind = r.parse(&format!("{p}.prior_curve.prior"))?;
            let xi = r.parse(&format!("{p}.prior_curve.xi"))?;
            let sigma = r.parse(&format!("{p}.prior_curve.sigma"))?;
            let mut points = Vec::with_capacity(count);
            for _ in 0..count {
                let (k, v) = r.keyed(&format!("{p}.prior_curve."))?;
                let k = r.value(&k)?;
                let v: Vec<f64> = r.split(&v, 2)?;
                points.push(CurvePoint { k, value: v[0], log_mass: v[1] });
            }
            Some(PriorCurve { kind, xi, sigma, points })
        }
    };
    Ok(FitRecord {
        label,
        prior: ThresholdPriorSpec { kind, support_lo, support_hi },
        components,
        chain_seeds,
        params,
        rhat,
        acceptance,
        tuned_steps,
        threshold_posterior,
        prior_curve,
    })
}

pub fn write_report(report: &RunReport, path: &Path) -> Result<()> {
    let text = report.to_text();
    write_with(path, |w| std::io::Write::write_all(w, text.as_bytes()))
}

pub fn read_report(path: &Path) -> Result<RunReport> {
    let text = std::fs::read_to_string(path)
        .map_err(|source| Error::Read { path: path.to_path_buf(), source })?;
    RunReport::from_text(&text, path)
}

fn opt<T: Display>(v: Option<T>) -> String {
    v.map_or("none".to_string(), |v| v.to_string())
}

fn join<T: Display>(items: impl Iterator<Item = T>) -> String {
    items.map(|v| v.to_string()).collect::<Vec<_>>().join(" ")
}

/// Ordered `key = value` writer. Values are single-line.
#[derive(Default)]
pub(crate) struct KvWriter {
    out: String,
}

impl KvWriter {
    pub(crate) fn put(&mut self, key: impl Display, value: impl Display) {
        let value = value.to_string().replace(['\n', '\r'], " ");
        let _ = writeln!(self.out, "{key} = {value}");
    }

    pub(crate) fn float(&mut self, key: impl Display, value: f64) {
        self.put(key, fmt_f64(value));
    }

    pub(crate) fn finish(self) -> String {
        self.out
    }
}

/// Sequential reader matching [`KvWriter`] output key by key.
pub(crate) struct KvReader {
    lines: VecDeque<(usize, String, String)>,
    path: PathBuf,
    line: usize,
}

impl KvReader {
    pub(crate) fn new(text: &str, path: &Path) -> Self {
        let lines = text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty() && !l.starts_with('#'))
            .map(|(i, l)| match l.split_once(" = ") {
                Some((k, v)) => (i + 1, k.to_string(), v.to_string()),
                None => (i + 1, l.to_string(), String::new()),
            })
            .collect();
        Self { lines, path: path.to_path_buf(), line: 0 }
    }

    pub(crate) fn error(&self, msg: String) -> Error {
        Error::Format { path: self.path.clone(), msg: format!("line {}: {msg}", self.line) }
    }

    fn next(&mut self) -> Result<(String, String)> {
        match self.lines.pop_front() {
            Some((line, k, v)) => {
                self.line = line;
                Ok((k, v))
            }
            None => Err(self.error("unexpected end of file".into())),
        }
    }

    pub(crate) fn raw(&mut self, key: &str) -> Result<String> {
        let (k, v) = self.next()?;
        if k != key {
            return Err(self.error(format!("expected key {key:?}, found {k:?}")));
        }
        Ok(v)
    }

    /// Next entry whose key starts with `prefix`; returns the key suffix.
    pub(crate) fn keyed(&mut self, prefix: &str) -> Result<(String, String)> {
        let (k, v) = self.next()?;
        match k.strip_prefix(prefix) {
            Some(rest) if !rest.is_empty() => Ok((rest.to_string(), v)),
            _ => Err(self.error(format!("expected a key under {prefix:?}, found {k:?}"))),
        }
    }

    pub(crate) fn value<T: FromStr>(&self, s: &str) -> Result<T> {
        s.parse().map_err(|_| self.error(format!("cannot parse {s:?}")))
    }

    pub(crate) fn parse<T: FromStr>(&mut self, key: &str) -> Result<T> {
        let v = self.raw(key)?;
        self.value(&v)
    }

    pub(crate) fn optional<T: FromStr>(&mut self, key: &str) -> Result<Option<T>> {
        let v = self.raw(key)?;
        if v == "none" {
            Ok(None)
        } else {
            self.value(&v).map(Some)
        }
    }

    pub(crate) fn list<T: FromStr>(&mut self, key: &str) -> Result<Vec<T>> {
        let v = self.raw(key)?;
        v.split_whitespace().map(|s| self.value(s)).collect()
    }

    pub(crate) fn split<T: FromStr>(&self, v: &str, len: usize) -> Result<Vec<T>> {
        let out: Vec<T> = v.split_whitespace().map(|s| self.value(s)).collect::<Result<_>>()?;
        if out.len() != len {
            return Err(self.error(format!("expected {len} values, found {}", out.len())));
        }
        Ok(out)
    }

    /// A count line under `key`, then that many entries under `prefix`.
    pub(crate) fn pairs(&mut self, key: &str, prefix: &str) -> Result<Vec<(String, String)>> {
        let n: usize = self.parse(key)?;
        (0..n).map(|_| self.keyed(prefix)).collect()
    }

    pub(crate) fn end(&mut self) -> Result<()> {
        match self.lines.pop_front() {
            None => Ok(()),
            Some((line, k, _)) => {
                self.line = line;
                Err(self.error(format!("unexpected trailing key {k:?}")))
            }
        }
    }
}
