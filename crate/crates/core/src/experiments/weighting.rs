//! Weighting studies: uniform versus VBSW weights, the (m, k) grid and label noise.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::PathBuf;

use ndarray::{Array1, Array2, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{metrics_map, Arm, Outcome, RunSummary, SeedRecord};
use crate::dataset::{
    class_indices, inject_label_noise, load_csv, one_hot, two_moons, CsvOptions, DomainBox,
    DomainSpec, LabeledDataset, WeightedDataset,
};
use crate::error::{Error, Result};
use crate::models::{
    evaluate, train, Activation, HeadFit, Loss, MlpModel, MlpSpec, Optimizer, TrainConfig,
};
use crate::tbs::sub_seed;
use crate::vbsw::{feature_space_vbsw, local_variance, rescale_normalize, VbswConfig};

/// Where the data come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Task {
    DoubleMoon {
        n_train: usize,
        n_test: usize,
        noise: f64,
        /// Seed of the shared test set.
        test_seed: u64,
    },
    /// Inputs then label columns; each seed draws its own split.
    CsvRegression {
        path: PathBuf,
        n_inputs: usize,
        n_outputs: usize,
        train_fraction: f64,
        #[serde(default)]
        has_header: bool,
    },
    /// Inputs then one integer class column.
    CsvClassification {
        path: PathBuf,
        n_inputs: usize,
        num_classes: usize,
        train_fraction: f64,
        #[serde(default)]
        has_header: bool,
    },
}

impl Default for Task {
    fn default() -> Self {
        Task::DoubleMoon {
            n_train: 300,
            n_test: 1000,
            noise: 0.1,
            test_seed: 77_777,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Kind {
    Regression,
    Classes(usize),
}

impl Kind {
    fn output(self) -> Activation {
        match self {
            Kind::Regression => Activation::Identity,
            Kind::Classes(2) => Activation::Sigmoid,
            Kind::Classes(_) => Activation::Softmax,
        }
    }

    fn loss(self) -> Loss {
        match self {
            Kind::Regression => Loss::WeightedMse,
            Kind::Classes(2) => Loss::WeightedBce,
            Kind::Classes(_) => Loss::WeightedCce,
        }
    }

    fn categorical(self) -> Option<usize> {
        match self {
            Kind::Regression => None,
            Kind::Classes(c) => Some(c),
        }
    }

    fn metric(self) -> &'static str {
        match self {
            Kind::Regression => "l2",
            Kind::Classes(_) => "accuracy",
        }
    }
}

/// Loaded once; split per seed.
enum Source {
    Moons {
        n_train: usize,
        noise: f64,
        test: LabeledDataset,
    },
    Table {
        data: LabeledDataset,
        train_fraction: f64,
    },
}

fn standardized_inputs(ds: &LabeledDataset, train_rows: &[usize]) -> Result<LabeledDataset> {
    let x = ds.points();
    let tr = x.select(Axis(0), train_rows);
    let mean = tr.mean_axis(Axis(0)).expect("non-empty");
    let sd = tr.std_axis(Axis(0), 0.0).mapv(|s| if s > 0.0 { s } else { 1.0 });
    let z = (x - &mean) / &sd;
    let dom = DomainBox::infer(&z)?;
    LabeledDataset::new(z, ds.labels().clone(), dom)
}

fn class_labels(ds: &LabeledDataset, num_classes: usize) -> Result<LabeledDataset> {
    let (classes, _) = class_indices(ds.labels(), num_classes)?;
    let labels = if num_classes == 2 {
        Array2::from_shape_fn((classes.len(), 1), |(i, _)| classes[i] as f64)
    } else {
        one_hot(&classes, num_classes)
    };
    ds.with_labels(labels)
}

impl Task {
    fn load(&self) -> Result<(Source, Kind)> {
        match self {
            Task::DoubleMoon {
                n_train,
                n_test,
                noise,
                test_seed,
            } => Ok((
                Source::Moons {
                    n_train: *n_train,
                    noise: *noise,
                    test: two_moons(*n_test, *noise, *test_seed)?,
                },
                Kind::Classes(2),
            )),
            Task::CsvRegression {
                path,
                n_inputs,
                n_outputs,
                train_fraction,
                has_header,
            } => {
                let data = load_csv(path, *n_inputs, *n_outputs, DomainSpec::Infer, CsvOptions {
                    has_header: *has_header,
                })?;
                Ok((
                    Source::Table {
                        data,
                        train_fraction: *train_fraction,
                    },
                    Kind::Regression,
                ))
            }
            Task::CsvClassification {
                path,
                n_inputs,
                num_classes,
                train_fraction,
                has_header,
            } => {
                let raw = load_csv(path, *n_inputs, 1, DomainSpec::Infer, CsvOptions {
                    has_header: *has_header,
                })?;
                Ok((
                    Source::Table {
                        data: class_labels(&raw, *num_classes)?,
                        train_fraction: *train_fraction,
                    },
                    Kind::Classes(*num_classes),
                ))
            }
        }
    }
}

impl Source {
    fn split(&self, seed: u64) -> Result<(LabeledDataset, LabeledDataset)> {
        match self {
            Source::Moons {
                n_train,
                noise,
                test,
            } => Ok((two_moons(*n_train, *noise, sub_seed(seed, 10))?, test.clone())),
            Source::Table {
                data,
                train_fraction,
            } => {
                let n = data.len();
                let n_train = ((n as f64) * train_fraction).round() as usize;
                if n_train == 0 || n_train >= n {
                    return Err(Error::Config("train_fraction leaves an empty split".into()));
                }
                let mut order: Vec<usize> = (0..n).collect();
                use rand::seq::SliceRandom;
                order.shuffle(&mut crate::dataset::rng_from_seed(sub_seed(seed, 11)));
                let (tr, te) = order.split_at(n_train);
                let z = standardized_inputs(data, tr)?;
                Ok((z.select(tr), z.select(te)))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VbswToyConfig {
    pub task: Task,
    pub hidden: Vec<usize>,
    /// `categorical` is filled in from the task when unset.
    pub vbsw: VbswConfig,
    /// `seed` is replaced by the run seed; `loss` follows the task.
    pub train: TrainConfig,
    /// Weights in the trained network's feature space, head retrained.
    pub feature_space: bool,
    pub standardize_features: bool,
    /// Head retraining recipe for classification; defaults to `train`.
    pub head_train: Option<TrainConfig>,
}

impl Default for VbswToyConfig {
    fn default() -> Self {
        Self {
            task: Task::default(),
            hidden: vec![4],
            vbsw: VbswConfig {
                k: 20,
                m: 100.0,
                categorical: None,
            },
            train: TrainConfig {
                optimizer: Optimizer::Sgd,
                learning_rate: 1e-3,
                batch_size: 100,
                epochs: 10000,
                loss: Loss::WeightedBce,
                seed: 0,
            },
            feature_space: false,
            standardize_features: true,
            head_train: None,
        }
    }
}

struct Prepared {
    source: Source,
    kind: Kind,
    vbsw: VbswConfig,
}

impl VbswToyConfig {
    fn prepare(&self) -> Result<Prepared> {
        let (source, kind) = self.task.load()?;
        let mut vbsw = self.vbsw.clone();
        if vbsw.categorical.is_none() {
            vbsw.categorical = kind.categorical();
        }
        Ok(Prepared { source, kind, vbsw })
    }

    fn spec(&self, n_in: usize, n_out: usize, kind: Kind) -> MlpSpec {
        let mut widths = vec![n_in];
        widths.extend_from_slice(&self.hidden);
        widths.push(n_out);
        MlpSpec::new(widths, kind.output())
    }

    fn train_cfg(&self, seed: u64, kind: Kind) -> TrainConfig {
        TrainConfig {
            seed,
            loss: kind.loss(),
            ..self.train.clone()
        }
    }

    fn head_fit(&self, seed: u64, kind: Kind) -> HeadFit {
        match kind {
            Kind::Regression => HeadFit::LeastSquares,
            _ => HeadFit::Gradient {
                cfg: TrainConfig {
                    seed,
                    loss: kind.loss(),
                    ..self.head_train.clone().unwrap_or_else(|| self.train.clone())
                },
                output: kind.output(),
                init: None,
            },
        }
    }
}

/// One seed: baseline model and the VBSW-weighted model with its weights.
struct WeightedRun {
    baseline: BTreeMap<String, f64>,
    vbsw: BTreeMap<String, f64>,
    weights: Array1<f64>,
}

fn uniform_model(
    cfg: &VbswToyConfig,
    prep: &Prepared,
    train_ds: &LabeledDataset,
    seed: u64,
) -> Result<MlpModel> {
    let spec = cfg.spec(train_ds.n_inputs(), train_ds.n_outputs(), prep.kind);
    train(&WeightedDataset::uniform(train_ds.clone()), &spec, &cfg.train_cfg(seed, prep.kind))
}

fn vbsw_model(
    cfg: &VbswToyConfig,
    prep: &Prepared,
    vcfg: &VbswConfig,
    train_ds: &LabeledDataset,
    base: Option<&MlpModel>,
    seed: u64,
) -> Result<(MlpModel, Array1<f64>)> {
    if cfg.feature_space {
        let base = base.ok_or_else(|| Error::arg("feature-space weighting needs a base model"))?;
        let fit = feature_space_vbsw(
            base,
            train_ds,
            vcfg,
            &cfg.head_fit(seed, prep.kind),
            cfg.standardize_features,
        )?;
        return Ok((fit.model, fit.weights));
    }
    let raw = local_variance(train_ds, vcfg.k, vcfg.categorical)?;
    let w = rescale_normalize(&raw, vcfg.m)?;
    let spec = cfg.spec(train_ds.n_inputs(), train_ds.n_outputs(), prep.kind);
    let model = train(
        &WeightedDataset::new(train_ds.clone(), w.clone())?,
        &spec,
        &cfg.train_cfg(seed, prep.kind),
    )?;
    Ok((model, w))
}

fn weights_csv(seeds: &[u64], weights: &[Array1<f64>]) -> String {
    let mut s = String::from("seed,row,weight\n");
    for (seed, w) in seeds.iter().zip(weights) {
        for (i, v) in w.iter().enumerate() {
            writeln!(s, "{seed},{i},{v}").expect("string write");
        }
    }
    s
}

/// Uniform versus VBSW weights; same split and same initialization per seed.
pub fn run_vbsw_toy(cfg: &VbswToyConfig, seeds: &[u64], arm: Option<Arm>) -> Result<Outcome> {
    super::validate_seeds(seeds)?;
    let prep = cfg.prepare()?;
    let want_base = arm.is_none_or(|a| a == Arm::Baseline) || cfg.feature_space;
    let runs: Vec<WeightedRun> = seeds
        .par_iter()
        .map(|&seed| {
            let (train_ds, test) = prep.source.split(seed)?;
            let base = if want_base {
                Some(uniform_model(cfg, &prep, &train_ds, seed)?)
            } else {
                None
            };
            let baseline = match &base {
                Some(m) => metrics_map(&evaluate(m, &test)?),
                None => BTreeMap::new(),
            };
            let (vbsw, weights) = if arm.is_none_or(|a| a == Arm::Vbsw) {
                let (model, w) = vbsw_model(cfg, &prep, &prep.vbsw, &train_ds, base.as_ref(), seed)?;
                (metrics_map(&evaluate(&model, &test)?), w)
            } else {
                (BTreeMap::new(), Array1::zeros(0))
            };
            Ok(WeightedRun {
                baseline,
                vbsw,
                weights,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut out = Outcome::default();
    let records = |pick: fn(&WeightedRun) -> &BTreeMap<String, f64>| -> Vec<SeedRecord> {
        seeds
            .iter()
            .zip(&runs)
            .map(|(&seed, r)| SeedRecord {
                seed,
                metrics: pick(r).clone(),
            })
            .collect()
    };
    if arm.is_none_or(|a| a == Arm::Baseline) {
        out.summaries.push(RunSummary::new("baseline", records(|r| &r.baseline)));
    }
    if arm.is_none_or(|a| a == Arm::Vbsw) {
        out.summaries.push(RunSummary::new("vbsw", records(|r| &r.vbsw)));
        let w: Vec<Array1<f64>> = runs.iter().map(|r| r.weights.clone()).collect();
        out.files.insert("weights.csv".into(), weights_csv(seeds, &w));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HyperGridConfig {
    pub base: VbswToyConfig,
    pub m_min: f64,
    pub m_max: f64,
    pub m_count: usize,
    pub k_min: usize,
    pub k_max: usize,
    pub k_count: usize,
}

impl Default for HyperGridConfig {
    fn default() -> Self {
        Self {
            base: VbswToyConfig::default(),
            m_min: 2.0,
            m_max: 100.0,
            m_count: 20,
            k_min: 10,
            k_max: 50,
            k_count: 20,
        }
    }
}

impl HyperGridConfig {
    pub fn m_values(&self) -> Vec<f64> {
        linspace(self.m_min, self.m_max, self.m_count)
    }

    /// Rounded to integers; duplicates after rounding are dropped.
    pub fn k_values(&self) -> Vec<usize> {
        let mut ks: Vec<usize> = linspace(self.k_min as f64, self.k_max as f64, self.k_count)
            .into_iter()
            .map(|k| k.round() as usize)
            .collect();
        ks.dedup();
        ks
    }
}

fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![a],
        _ => (0..n)
            .map(|i| if i + 1 == n { b } else { a + (b - a) * i as f64 / (n - 1) as f64 })
            .collect(),
    }
}

/// Mean metric per `(m, k)` cell.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HyperGrid {
    pub metric: String,
    pub m: Vec<f64>,
    pub k: Vec<usize>,
    /// Row-major over `(m, k)`.
    pub values: Vec<f64>,
    pub baseline: f64,
}

impl HyperGrid {
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.k.len() + j]
    }

    /// Gnuplot-ready `m,k,value` with a blank line between `m` blocks.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("m,k,value\n");
        for (i, m) in self.m.iter().enumerate() {
            for (j, k) in self.k.iter().enumerate() {
                writeln!(s, "{m},{k},{}", self.get(i, j)).expect("string write");
            }
            s.push('\n');
        }
        s
    }
}

/// The `(m, k)` sweep; the baseline is trained once per seed.
pub fn run_hyper_grid(cfg: &HyperGridConfig, seeds: &[u64]) -> Result<(HyperGrid, Outcome)> {
    super::validate_seeds(seeds)?;
    let base = &cfg.base;
    let prep = base.prepare()?;
    let (ms, ks) = (cfg.m_values(), cfg.k_values());
    if ms.is_empty() || ks.is_empty() {
        return Err(Error::Config("empty hyper-parameter grid".into()));
    }
    let metric = prep.kind.metric();
    type SeedCells = (f64, Vec<f64>);
    let per_seed: Vec<SeedCells> = seeds
        .par_iter()
        .map(|&seed| -> Result<SeedCells> {
            let (train_ds, test) = prep.source.split(seed)?;
            let model = uniform_model(base, &prep, &train_ds, seed)?;
            let b = metrics_map(&evaluate(&model, &test)?)[metric];
            let mut cells = Vec::with_capacity(ms.len() * ks.len());
            for &m in &ms {
                for &k in &ks {
                    let vcfg = VbswConfig { k, m, ..prep.vbsw.clone() };
                    let (vm, _) = vbsw_model(base, &prep, &vcfg, &train_ds, Some(&model), seed)?;
                    cells.push(metrics_map(&evaluate(&vm, &test)?)[metric]);
                }
            }
            Ok((b, cells))
        })
        .collect::<Result<Vec<_>>>()?;
    let n = seeds.len() as f64;
    let mut values = vec![0.0; ms.len() * ks.len()];
    for (_, cells) in &per_seed {
        for (v, c) in values.iter_mut().zip(cells) {
            *v += c / n;
        }
    }
    let grid = HyperGrid {
        metric: metric.to_string(),
        m: ms.clone(),
        k: ks.clone(),
        values,
        baseline: per_seed.iter().map(|(b, _)| b / n).sum(),
    };
    let mut out = Outcome::default();
    let rec = |value: f64, seed: u64| SeedRecord {
        seed,
        metrics: BTreeMap::from([(metric.to_string(), value)]),
    };
    out.summaries.push(RunSummary::new(
        "baseline",
        seeds.iter().zip(&per_seed).map(|(&s, (b, _))| rec(*b, s)).collect(),
    ));
    for (i, m) in ms.iter().enumerate() {
        for (j, k) in ks.iter().enumerate() {
            let idx = i * ks.len() + j;
            out.summaries.push(RunSummary::new(
                format!("vbsw_m{m}_k{k}"),
                seeds.iter().zip(&per_seed).map(|(&s, (_, c))| rec(c[idx], s)).collect(),
            ));
        }
    }
    out.files.insert("grid.csv".into(), grid.to_csv());
    Ok((grid, out))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LabelNoiseConfig {
    pub base: VbswToyConfig,
    pub levels: Vec<f64>,
}

impl Default for LabelNoiseConfig {
    fn default() -> Self {
        Self {
            base: VbswToyConfig {
                feature_space: true,
                ..VbswToyConfig::default()
            },
            levels: vec![0.1, 0.2, 0.3, 0.4],
        }
    }
}

/// Per noise level: base network on corrupted labels versus its
/// feature-space VBSW retrained head, both scored on clean test data.
pub fn run_label_noise(cfg: &LabelNoiseConfig, seeds: &[u64]) -> Result<Outcome> {
    super::validate_seeds(seeds)?;
    let base = VbswToyConfig {
        feature_space: true,
        ..cfg.base.clone()
    };
    let prep = base.prepare()?;
    let Kind::Classes(c) = prep.kind else {
        return Err(Error::Config("label noise needs a classification task".into()));
    };
    let mut out = Outcome::default();
    for &p in &cfg.levels {
        let runs = seeds
            .par_iter()
            .map(|&seed| -> Result<(BTreeMap<String, f64>, BTreeMap<String, f64>)> {
                let (clean, test) = prep.source.split(seed)?;
                let noisy = inject_label_noise(&clean, p, c, sub_seed(seed, 20))?;
                let model = uniform_model(&base, &prep, &noisy, seed)?;
                let (vm, _) = vbsw_model(&base, &prep, &prep.vbsw, &noisy, Some(&model), seed)?;
                Ok((
                    metrics_map(&evaluate(&model, &test)?),
                    metrics_map(&evaluate(&vm, &test)?),
                ))
            })
            .collect::<Result<Vec<_>>>()?;
        let recs = |pick: fn(&(BTreeMap<String, f64>, BTreeMap<String, f64>)) -> &BTreeMap<String, f64>| {
            seeds
                .iter()
                .zip(&runs)
                .map(|(&seed, r)| SeedRecord {
                    seed,
                    metrics: pick(r).clone(),
                })
                .collect::<Vec<_>>()
        };
        out.summaries.push(RunSummary::new(format!("baseline_p{p}"), recs(|r| &r.0)));
        out.summaries.push(RunSummary::new(format!("vbsw_p{p}"), recs(|r| &r.1)));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VbswWeightsConfig {
    pub task: Task,
    /// `categorical` is filled in from the task when unset.
    pub vbsw: VbswConfig,
}

impl Default for VbswWeightsConfig {
    fn default() -> Self {
        Self {
            task: Task::default(),
            vbsw: VbswToyConfig::default().vbsw,
        }
    }
}

/// Weights of each seed's training split, no training.
pub fn run_vbsw_weights(cfg: &VbswWeightsConfig, seeds: &[u64]) -> Result<Outcome> {
    super::validate_seeds(seeds)?;
    let toy = VbswToyConfig {
        task: cfg.task.clone(),
        vbsw: cfg.vbsw.clone(),
        ..VbswToyConfig::default()
    };
    let prep = toy.prepare()?;
    let weights = seeds
        .par_iter()
        .map(|&seed| {
            let (train_ds, _) = prep.source.split(seed)?;
            let raw = local_variance(&train_ds, prep.vbsw.k, prep.vbsw.categorical)?;
            rescale_normalize(&raw, prep.vbsw.m)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut out = Outcome::default();
    let records = seeds
        .iter()
        .zip(&weights)
        .map(|(&seed, w)| {
            let lo = w.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            SeedRecord {
                seed,
                metrics: BTreeMap::from([
                    ("min_weight".to_string(), lo),
                    ("max_weight".to_string(), hi),
                    ("ratio".to_string(), hi / lo),
                ]),
            }
        })
        .collect();
    out.summaries.push(RunSummary::new("vbsw", records));
    out.files.insert("weights.csv".into(), weights_csv(seeds, &weights));
    Ok(out)
}
