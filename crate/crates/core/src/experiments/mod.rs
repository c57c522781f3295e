//! Seeded, config-driven experiment runners.
//!
//! Every runner returns one [`RunSummary`] per arm. Seeds run in parallel and
//! results are gathered in seed order, so emitted files are byte-stable.

mod sampling;
mod weighting;

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use sampling::{
    run_bateman, run_tbs_sample, run_toy_1d, BatemanExperimentConfig, FunctionName,
    TbsSampleConfig, Toy1dConfig,
};
pub use weighting::{
    run_hyper_grid, run_label_noise, run_vbsw_toy, run_vbsw_weights, HyperGrid, HyperGridConfig,
    LabelNoiseConfig, Task, VbswToyConfig, VbswWeightsConfig,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    Toy1d,
    Bateman,
    VbswToy,
    HyperGrid,
    LabelNoise,
    FeatureVbsw,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Arm {
    Bs,
    Tbs,
    Baseline,
    Vbsw,
}

impl Arm {
    pub fn name(self) -> &'static str {
        match self {
            Arm::Bs => "bs",
            Arm::Tbs => "tbs",
            Arm::Baseline => "baseline",
            Arm::Vbsw => "vbsw",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "bs" => Ok(Arm::Bs),
            "tbs" => Ok(Arm::Tbs),
            "baseline" => Ok(Arm::Baseline),
            "vbsw" => Ok(Arm::Vbsw),
            other => Err(Error::Config(format!("unknown arm {other:?}"))),
        }
    }
}

/// Top-level experiment file; every section has defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: Option<ExperimentKind>,
    pub arm: Option<Arm>,
    pub seeds: Vec<u64>,
    pub out_dir: Option<PathBuf>,
    pub toy1d: Toy1dConfig,
    pub bateman: BatemanExperimentConfig,
    pub vbsw: VbswToyConfig,
    pub hyper_grid: HyperGridConfig,
    pub label_noise: LabelNoiseConfig,
    pub tbs_sample: TbsSampleConfig,
    pub vbsw_weights: VbswWeightsConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            experiment: None,
            arm: None,
            seeds: vec![0],
            out_dir: None,
            toy1d: Toy1dConfig::default(),
            bateman: BatemanExperimentConfig::default(),
            vbsw: VbswToyConfig::default(),
            hyper_grid: HyperGridConfig::default(),
            label_noise: LabelNoiseConfig::default(),
            tbs_sample: TbsSampleConfig::default(),
            vbsw_weights: VbswWeightsConfig::default(),
        }
    }
}

impl ExperimentConfig {
    /// Parses JSON, or TOML when the text is not JSON.
    pub fn parse(text: &str) -> Result<Self> {
        let trimmed = text.trim_start();
        let cfg: Self = if trimmed.starts_with('{') {
            serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?
        } else {
            toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn validate(&self) -> Result<()> {
        validate_seeds(&self.seeds)
    }

    /// Whether `arm` should run under the `arm` filter.
    pub fn runs(&self, arm: Arm) -> bool {
        self.arm.is_none_or(|a| a == arm)
    }
}

pub fn validate_seeds(seeds: &[u64]) -> Result<()> {
    if seeds.is_empty() {
        return Err(Error::Config("seed list is empty".into()));
    }
    let mut sorted = seeds.to_vec();
    sorted.sort_unstable();
    if sorted.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::Config("seed list has duplicates".into()));
    }
    Ok(())
}

/// Parses `"3"`, `"0,4,9"` or `"0..40"` (half-open).
pub fn parse_seeds(s: &str) -> Result<Vec<u64>> {
    let bad = || Error::Config(format!("cannot parse seed list {s:?}"));
    let seeds = if let Some((a, b)) = s.split_once("..") {
        let a: u64 = a.trim().parse().map_err(|_| bad())?;
        let b: u64 = b.trim().parse().map_err(|_| bad())?;
        (a..b).collect()
    } else {
        s.split(',')
            .map(|p| p.trim().parse::<u64>().map_err(|_| bad()))
            .collect::<Result<Vec<_>>>()?
    };
    validate_seeds(&seeds)?;
    Ok(seeds)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricStats {
    pub mean: f64,
    pub se: f64,
    /// Normal-approximation half-width `1.96 se`.
    pub ci95: f64,
    pub min: f64,
    pub max: f64,
}

impl MetricStats {
    pub fn from_values(v: &[f64]) -> Self {
        let n = v.len() as f64;
        let mean = v.iter().sum::<f64>() / n;
        let se = if v.len() > 1 {
            let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
            (var / n).sqrt()
        } else {
            0.0
        };
        Self {
            mean,
            se,
            ci95: 1.96 * se,
            min: v.iter().copied().fold(f64::INFINITY, f64::min),
            max: v.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        }
    }
}

/// Metric values of one seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedRecord {
    pub seed: u64,
    pub metrics: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub arm: String,
    pub count: usize,
    pub records: Vec<SeedRecord>,
    pub stats: BTreeMap<String, MetricStats>,
}

impl RunSummary {
    pub fn new(arm: impl Into<String>, records: Vec<SeedRecord>) -> Self {
        let mut names: Vec<String> = Vec::new();
        for r in &records {
            for k in r.metrics.keys() {
                if !names.contains(k) {
                    names.push(k.clone());
                }
            }
        }
        let stats = names
            .into_iter()
            .map(|k| {
                let vals: Vec<f64> = records.iter().filter_map(|r| r.metrics.get(&k).copied()).collect();
                (k, MetricStats::from_values(&vals))
            })
            .collect();
        Self {
            arm: arm.into(),
            count: records.len(),
            records,
            stats,
        }
    }

    pub fn mean(&self, metric: &str) -> Option<f64> {
        self.stats.get(metric).map(|s| s.mean)
    }
}

pub(crate) fn metrics_map(m: &crate::models::Metrics) -> BTreeMap<String, f64> {
    let mut out = BTreeMap::new();
    out.insert("l2".to_string(), m.l2);
    out.insert("l2_root".to_string(), m.l2_root);
    out.insert("linf".to_string(), m.linf);
    out.insert("linf_squared".to_string(), m.linf_squared);
    if let Some(a) = m.accuracy {
        out.insert("accuracy".to_string(), a);
    }
    out
}

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

pub(crate) fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        ensure_dir(parent)?;
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Everything a runner emits: per-arm summaries plus extra named files.
#[derive(Debug, Clone, Default)]
pub struct Outcome {
    pub summaries: Vec<RunSummary>,
    /// File name to contents, written next to the summaries.
    pub files: BTreeMap<String, String>,
    /// Scalar results beyond per-arm metrics (e.g. error gain/loss).
    pub extras: BTreeMap<String, f64>,
}

impl Outcome {
    pub fn summary(&self, arm: Arm) -> Option<&RunSummary> {
        self.summaries.iter().find(|s| s.arm == arm.name())
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        write_summaries(dir, &self.summaries)?;
        for (name, text) in &self.files {
            write_text(&dir.join(name), text)?;
        }
        if !self.extras.is_empty() {
            let json = serde_json::to_string_pretty(&self.extras)?;
            write_text(&dir.join("extras.json"), &(json + "\n"))?;
        }
        Ok(())
    }
}

/// Rows of a dataset as CSV lines prefixed by `prefix` columns.
pub(crate) fn push_dataset_rows(
    out: &mut String,
    prefix: &str,
    ds: &crate::dataset::LabeledDataset,
    n_original: usize,
) {
    for (i, (x, y)) in ds.points().rows().into_iter().zip(ds.labels().rows()).enumerate() {
        let origin = if i < n_original { "original" } else { "added" };
        write!(out, "{prefix},{i},{origin}").expect("string write");
        for v in x.iter().chain(y.iter()) {
            write!(out, ",{v}").expect("string write");
        }
        out.push('\n');
    }
}

/// `per_seed.csv` with one row per (arm, seed) and `summary.json`.
pub fn write_summaries(dir: &Path, summaries: &[RunSummary]) -> Result<()> {
    ensure_dir(dir)?;
    let mut names: Vec<String> = Vec::new();
    for s in summaries {
        for k in s.stats.keys() {
            if !names.contains(k) {
                names.push(k.clone());
            }
        }
    }
    names.sort();
    let mut csv = String::from("arm,seed");
    for n in &names {
        csv.push(',');
        csv.push_str(n);
    }
    csv.push('\n');
    for s in summaries {
        for r in &s.records {
            write!(csv, "{},{}", s.arm, r.seed).expect("string write");
            for n in &names {
                match r.metrics.get(n) {
                    Some(v) => write!(csv, ",{v}").expect("string write"),
                    None => csv.push(','),
                }
            }
            csv.push('\n');
        }
    }
    write_text(&dir.join("per_seed.csv"), &csv)?;
    let json = serde_json::to_string_pretty(summaries)?;
    write_text(&dir.join("summary.json"), &(json + "\n"))
}
