//! Sampling studies: BS versus TBS on 1-D toys and on the Bateman system.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{metrics_map, push_dataset_rows, Arm, Outcome, RunSummary, SeedRecord};
use crate::bateman::{
    aeg_ael, error_map, generate_dataset, label_points, BatemanOracle, BatemanParams, ErrorMap,
    Solver,
};
use crate::dataset::{grid_sample, DomainBox, LabeledDataset, WeightedDataset};
use crate::derivatives::OracleFn;
use crate::error::{Error, Result};
use crate::functions::{Cubic, Runge, Tanh};
use crate::models::{evaluate, train, Activation, Loss, MlpModel, MlpSpec, Optimizer, TrainConfig};
use crate::tbs::{
    baseline_augment_from, initial_design, label_with, sub_seed, tbs_augment_from, Augmented,
    InitialDesign, TbsConfig,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FunctionName {
    #[default]
    Runge,
    Tanh,
    Cubic,
    Bateman,
}

fn target(name: FunctionName, steepness: f64) -> (Box<dyn OracleFn>, DomainBox) {
    match name {
        FunctionName::Runge => (Box::new(Runge), Runge::domain()),
        FunctionName::Tanh => (Box::new(Tanh { steepness }), Tanh::domain()),
        FunctionName::Cubic => (Box::new(Cubic), DomainBox::interval(-1.0, 1.0).expect("valid")),
        FunctionName::Bateman => {
            let params = BatemanParams::default();
            let dom = params.domain.clone();
            (Box::new(BatemanOracle { params }), dom)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Toy1dConfig {
    pub function: FunctionName,
    pub steepness: f64,
    pub tbs: TbsConfig,
    pub hidden: Vec<usize>,
    /// `seed` is replaced by the run seed.
    pub train: TrainConfig,
    pub test_points: usize,
}

impl Default for Toy1dConfig {
    fn default() -> Self {
        Self {
            function: FunctionName::Runge,
            steepness: 10.0,
            tbs: TbsConfig {
                n: 8,
                n_prime: 8,
                n_gmm: 3,
                epsilon: 1e-3,
                order: 2,
                initial_design: InitialDesign::Grid,
                // (h/2)^2 for the grid spacing h = 2/7; narrower components
                // just collapse onto the two design points nearest the peak
                reg_floor: Some((1.0f64 / 7.0).powi(2)),
                ..TbsConfig::default()
            },
            hidden: vec![8],
            train: TrainConfig {
                optimizer: Optimizer::adam(),
                learning_rate: 1e-3,
                batch_size: 16,
                epochs: 20000,
                loss: Loss::WeightedMse,
                seed: 0,
            },
            test_points: 1000,
        }
    }
}

fn spec_for(n_in: usize, hidden: &[usize], n_out: usize, output: Activation) -> MlpSpec {
    let mut widths = vec![n_in];
    widths.extend_from_slice(hidden);
    widths.push(n_out);
    MlpSpec::new(widths, output)
}

fn train_eval(
    ds: &LabeledDataset,
    spec: &MlpSpec,
    train_cfg: &TrainConfig,
    test: &LabeledDataset,
) -> Result<(MlpModel, BTreeMap<String, f64>)> {
    let model = train(&WeightedDataset::uniform(ds.clone()), spec, train_cfg)?;
    let m = evaluate(&model, test)?;
    Ok((model, metrics_map(&m)))
}

struct PairedRun {
    seed: u64,
    bs: Option<(BTreeMap<String, f64>, Augmented, Option<MlpModel>)>,
    tbs: Option<(BTreeMap<String, f64>, Augmented, Option<MlpModel>)>,
}

fn assemble(runs: Vec<PairedRun>, filter: Option<Arm>) -> Outcome {
    let mut out = Outcome::default();
    let mut augmented = String::from("seed,arm,row,origin,inputs_then_labels...\n");
    let mut bs_records = Vec::new();
    let mut tbs_records = Vec::new();
    for r in &runs {
        if let Some((m, aug, _)) = &r.bs {
            bs_records.push(SeedRecord {
                seed: r.seed,
                metrics: m.clone(),
            });
            push_dataset_rows(&mut augmented, &format!("{},bs", r.seed), &aug.dataset, aug.n_original);
        }
        if let Some((m, aug, _)) = &r.tbs {
            tbs_records.push(SeedRecord {
                seed: r.seed,
                metrics: m.clone(),
            });
            push_dataset_rows(&mut augmented, &format!("{},tbs", r.seed), &aug.dataset, aug.n_original);
        }
    }
    if filter.is_none_or(|a| a == Arm::Bs) {
        out.summaries.push(RunSummary::new("bs", bs_records));
    }
    if filter.is_none_or(|a| a == Arm::Tbs) {
        out.summaries.push(RunSummary::new("tbs", tbs_records));
    }
    out.files.insert("augmented.csv".into(), augmented);
    out
}

/// BS versus TBS on a 1-D target: same initial grid and same network
/// initialization per seed, equal budgets.
pub fn run_toy_1d(cfg: &Toy1dConfig, seeds: &[u64], arm: Option<Arm>) -> Result<Outcome> {
    super::validate_seeds(seeds)?;
    if !matches!(cfg.function, FunctionName::Runge | FunctionName::Tanh | FunctionName::Cubic) {
        return Err(Error::Config("toy1d function must be runge, tanh or cubic".into()));
    }
    let (f, domain) = target(cfg.function, cfg.steepness);
    let test = label_with(f.as_ref(), grid_sample(&domain, cfg.test_points)?, &domain)?;
    let spec = spec_for(1, &cfg.hidden, 1, Activation::Identity);
    let runs: Vec<PairedRun> = seeds
        .par_iter()
        .map(|&seed| -> Result<PairedRun> {
            let tcfg = TbsConfig {
                seed,
                ..cfg.tbs.clone()
            };
            let train_cfg = TrainConfig {
                seed,
                ..cfg.train.clone()
            };
            let init = initial_design(f.as_ref(), &domain, &tcfg)?;
            let mut run = PairedRun {
                seed,
                bs: None,
                tbs: None,
            };
            if arm.is_none_or(|a| a == Arm::Bs) {
                let aug = baseline_augment_from(f.as_ref(), init.clone(), &tcfg)?;
                let (_, m) = train_eval(&aug.dataset, &spec, &train_cfg, &test)?;
                run.bs = Some((m, aug, None));
            }
            if arm.is_none_or(|a| a == Arm::Tbs) {
                let aug = tbs_augment_from(f.as_ref(), init, &tcfg)?;
                let (_, m) = train_eval(&aug.dataset, &spec, &train_cfg, &test)?;
                run.tbs = Some((m, aug, None));
            }
            Ok(run)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(assemble(runs, arm))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BatemanExperimentConfig {
    pub params: BatemanParams,
    pub n: usize,
    pub n_prime: usize,
    pub solver: Solver,
    pub dt: f64,
    pub epsilon: f64,
    pub order: usize,
    pub n_gmm: usize,
    pub reg_floor: Option<f64>,
    pub hidden: Vec<usize>,
    /// `seed` is replaced by the run seed.
    pub train: TrainConfig,
    pub n_test: usize,
    pub test_seed: u64,
    /// Nodes per `(u0, eta0)` axis of the error maps.
    pub grid: usize,
    /// Time nodes for the max-over-time error.
    pub t_grid: usize,
    /// Switches to the full published budget (very slow).
    pub paper_scale: bool,
}

impl Default for BatemanExperimentConfig {
    fn default() -> Self {
        Self {
            params: BatemanParams::default(),
            n: 2000,
            n_prime: 2000,
            solver: Solver::Analytic,
            dt: 1e-4,
            epsilon: 5e-4,
            order: 2,
            n_gmm: 10,
            reg_floor: None,
            hidden: vec![32, 32],
            train: TrainConfig {
                optimizer: Optimizer::adam(),
                learning_rate: 1e-3,
                batch_size: 4000,
                epochs: 2000,
                loss: Loss::WeightedMse,
                seed: 0,
            },
            n_test: 50000,
            test_seed: 1_000_003,
            grid: 20,
            t_grid: 21,
            paper_scale: false,
        }
    }
}

impl BatemanExperimentConfig {
    fn effective(&self) -> Self {
        if !self.paper_scale {
            return self.clone();
        }
        log::warn!("full-budget Bateman run: 50000 points x 40000 epochs per model");
        Self {
            n: 25000,
            n_prime: 25000,
            train: TrainConfig {
                batch_size: 50000,
                epochs: 40000,
                ..self.train.clone()
            },
            ..self.clone()
        }
    }
}

fn mean_map(maps: &[ErrorMap]) -> Option<ErrorMap> {
    let first = maps.first()?;
    let mut values = vec![0.0; first.values.len()];
    for m in maps {
        for (v, x) in values.iter_mut().zip(&m.values) {
            *v += x / maps.len() as f64;
        }
    }
    Some(ErrorMap {
        values,
        ..first.clone()
    })
}

fn map_csv(m: &ErrorMap) -> String {
    let mut s = String::from("u0,eta0,value\n");
    for (i, a) in m.u0.iter().enumerate() {
        for (j, b) in m.eta0.iter().enumerate() {
            writeln!(s, "{a},{b},{}", m.get(i, j)).expect("string write");
        }
    }
    s
}

/// BS versus TBS surrogates of the Bateman flow map, with error-gain maps.
pub fn run_bateman(cfg: &BatemanExperimentConfig, seeds: &[u64], arm: Option<Arm>) -> Result<Outcome> {
    super::validate_seeds(seeds)?;
    let cfg = cfg.effective();
    let p = &cfg.params;
    let oracle = BatemanOracle { params: p.clone() };
    let test = generate_dataset(p, cfg.n_test, cfg.test_seed, Solver::Analytic, cfg.dt)?;
    let spec = spec_for(3, &cfg.hidden, 2, Activation::Identity);
    let tcfg_base = TbsConfig {
        order: cfg.order,
        epsilon: cfg.epsilon,
        n_gmm: cfg.n_gmm,
        n: cfg.n,
        n_prime: cfg.n_prime,
        reg_floor: cfg.reg_floor,
        ..TbsConfig::default()
    };
    let relabel = |aug: Augmented| -> Result<Augmented> {
        if cfg.solver == Solver::Analytic {
            return Ok(aug);
        }
        let (pts, _, _) = aug.dataset.clone().into_parts();
        Ok(Augmented {
            dataset: label_points(p, pts, cfg.solver, cfg.dt)?,
            ..aug
        })
    };
    let runs: Vec<(PairedRun, Option<ErrorMap>, Option<ErrorMap>)> = seeds
        .par_iter()
        .map(|&seed| {
            let tcfg = TbsConfig {
                seed,
                ..tcfg_base.clone()
            };
            let train_cfg = TrainConfig {
                seed,
                ..cfg.train.clone()
            };
            let init = generate_dataset(p, cfg.n, sub_seed(seed, 1), Solver::Analytic, cfg.dt)?;
            let mut run = PairedRun {
                seed,
                bs: None,
                tbs: None,
            };
            let (mut map_bs, mut map_tbs) = (None, None);
            if arm.is_none_or(|a| a == Arm::Bs) {
                let aug = relabel(baseline_augment_from(&oracle, init.clone(), &tcfg)?)?;
                let (model, m) = train_eval(&aug.dataset, &spec, &train_cfg, &test)?;
                map_bs = Some(error_map(p, |x| model.predict(x), cfg.grid, cfg.t_grid)?);
                run.bs = Some((m, aug, Some(model)));
            }
            if arm.is_none_or(|a| a == Arm::Tbs) {
                let aug = relabel(tbs_augment_from(&oracle, init, &tcfg)?)?;
                let (model, m) = train_eval(&aug.dataset, &spec, &train_cfg, &test)?;
                map_tbs = Some(error_map(p, |x| model.predict(x), cfg.grid, cfg.t_grid)?);
                run.tbs = Some((m, aug, Some(model)));
            }
            Ok((run, map_bs, map_tbs))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut gains = Vec::new();
    let mut bs_maps = Vec::new();
    let mut tbs_maps = Vec::new();
    let mut paired = Vec::new();
    for (run, a, b) in runs {
        if let (Some(a), Some(b)) = (&a, &b) {
            gains.push(aeg_ael(a, b)?);
        }
        bs_maps.extend(a);
        tbs_maps.extend(b);
        paired.push(run);
    }
    let mut out = assemble(paired, arm);
    if !gains.is_empty() {
        let n = gains.len() as f64;
        out.extras.insert("aeg".into(), gains.iter().map(|g| g.0).sum::<f64>() / n);
        out.extras.insert("ael".into(), gains.iter().map(|g| g.1).sum::<f64>() / n);
    }
    if let Some(m) = mean_map(&bs_maps) {
        out.files.insert("error_map_bs.csv".into(), map_csv(&m));
    }
    if let Some(m) = mean_map(&tbs_maps) {
        out.files.insert("error_map_tbs.csv".into(), map_csv(&m));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TbsSampleConfig {
    pub function: FunctionName,
    pub steepness: f64,
    /// `seed` is replaced by the run seed.
    pub tbs: TbsConfig,
}

impl Default for TbsSampleConfig {
    fn default() -> Self {
        Self {
            function: FunctionName::Runge,
            steepness: 10.0,
            tbs: Toy1dConfig::default().tbs,
        }
    }
}

/// Augmented designs only, no training.
pub fn run_tbs_sample(cfg: &TbsSampleConfig, seeds: &[u64], arm: Option<Arm>) -> Result<Outcome> {
    super::validate_seeds(seeds)?;
    let (f, domain) = target(cfg.function, cfg.steepness);
    let runs = seeds
        .par_iter()
        .map(|&seed| {
            let tcfg = TbsConfig {
                seed,
                ..cfg.tbs.clone()
            };
            let init = initial_design(f.as_ref(), &domain, &tcfg)?;
            let describe = |aug: &Augmented| {
                let mut m = BTreeMap::new();
                m.insert("rows".to_string(), aug.dataset.len() as f64);
                m.insert("added".to_string(), (aug.dataset.len() - aug.n_original) as f64);
                m
            };
            let mut run = PairedRun {
                seed,
                bs: None,
                tbs: None,
            };
            if arm.is_none_or(|a| a == Arm::Bs) {
                let aug = baseline_augment_from(f.as_ref(), init.clone(), &tcfg)?;
                run.bs = Some((describe(&aug), aug, None));
            }
            if arm.is_none_or(|a| a == Arm::Tbs) {
                let aug = tbs_augment_from(f.as_ref(), init, &tcfg)?;
                run.tbs = Some((describe(&aug), aug, None));
            }
            Ok(run)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(assemble(runs, arm))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toy_smoke_single_seed() {
        let cfg = Toy1dConfig {
            train: TrainConfig {
                epochs: 50,
                ..Toy1dConfig::default().train
            },
            test_points: 50,
            ..Default::default()
        };
        let out = run_toy_1d(&cfg, &[3], None).unwrap();
        let bs = out.summary(Arm::Bs).unwrap();
        assert_eq!(bs.count, 1);
        assert!(bs.mean("linf").unwrap().is_finite());
        assert_eq!(out.summary(Arm::Tbs).unwrap().count, 1);
        let only = run_toy_1d(&cfg, &[3], Some(Arm::Tbs)).unwrap();
        assert_eq!(only.summaries.len(), 1);
        assert_eq!(only.summaries[0], *out.summary(Arm::Tbs).unwrap());
    }

    #[test]
    fn bateman_smoke() {
        let cfg = BatemanExperimentConfig {
            n: 60,
            n_prime: 60,
            n_gmm: 3,
            hidden: vec![8],
            train: TrainConfig {
                epochs: 20,
                batch_size: 120,
                ..BatemanExperimentConfig::default().train
            },
            n_test: 100,
            grid: 4,
            t_grid: 3,
            ..Default::default()
        };
        let out = run_bateman(&cfg, &[1], None).unwrap();
        assert!(out.extras["aeg"] >= 0.0 && out.extras["ael"] >= 0.0);
        assert!(out.files.contains_key("error_map_tbs.csv"));
    }
}
