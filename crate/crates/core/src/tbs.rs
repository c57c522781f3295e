//! Taylor-based sampling: grow a design where the target's sensitivity is high.
//!
//! Pipeline: initial design, oracle labels, sensitivity scores, a mixture fit
//! to the scores, truncated draws of the new points, oracle labels again.

use std::io::Write;
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::dataset::{grid_sample, uniform_sample, DomainBox, LabeledDataset};
use crate::derivatives::{taylor_sensitivity, OracleFn, SensitivityConfig};
use crate::error::{Error, Result};
use crate::gmm::{
    fit_resampled_em, fit_weighted_em, sample_truncated, EmConfig, GmmModel,
    DEFAULT_MAX_DRAW_FACTOR,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialDesign {
    #[default]
    Uniform,
    Grid,
}

/// Which EM reading turns the scores into a mixture.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MixtureFit {
    #[default]
    Weighted,
    /// Unweighted EM on `draws` score-proportional resamples.
    Resampled { draws: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TbsConfig {
    /// Taylor order.
    pub order: usize,
    pub epsilon: f64,
    pub fd_step: f64,
    pub n_gmm: usize,
    pub n: usize,
    pub n_prime: usize,
    pub seed: u64,
    pub initial_design: InitialDesign,
    /// On a flat target, sample the new points uniformly instead of failing.
    pub lenient: bool,
    pub mixture_fit: MixtureFit,
    /// Covariance floor; defaults to `1e-6 * width^2`.
    pub reg_floor: Option<f64>,
    pub max_iter: usize,
    pub max_draw_factor: usize,
}

impl Default for TbsConfig {
    fn default() -> Self {
        Self {
            order: 2,
            epsilon: 1e-3,
            fd_step: 1e-4,
            n_gmm: 3,
            n: 8,
            n_prime: 8,
            seed: 0,
            initial_design: InitialDesign::Uniform,
            lenient: false,
            mixture_fit: MixtureFit::Weighted,
            reg_floor: None,
            max_iter: 500,
            max_draw_factor: DEFAULT_MAX_DRAW_FACTOR,
        }
    }
}

impl TbsConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::arg("N must be >= 1"));
        }
        if self.n_gmm == 0 {
            return Err(Error::arg("n_gmm must be >= 1"));
        }
        self.sensitivity().validate()
    }

    pub fn sensitivity(&self) -> SensitivityConfig {
        SensitivityConfig {
            order: self.order,
            epsilon: self.epsilon,
            fd_step: self.fd_step,
        }
    }

    fn em(&self, domain: &DomainBox) -> EmConfig {
        let mut em = EmConfig::for_domain(self.n_gmm, domain, sub_seed(self.seed, 2));
        if let Some(r) = self.reg_floor {
            em.reg_floor = r;
        }
        em.max_iter = self.max_iter;
        em
    }
}

/// Independent stream `k` derived from `seed` (splitmix64 finalizer).
pub fn sub_seed(seed: u64, k: u64) -> u64 {
    let mut z = seed ^ k.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476C_E5E4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Labels every row of `points` with the oracle.
pub fn label_with(f: &dyn OracleFn, points: Array2<f64>, domain: &DomainBox) -> Result<LabeledDataset> {
    let mut labels = Array2::zeros((points.nrows(), f.n_outputs()));
    for (i, r) in points.rows().into_iter().enumerate() {
        let y = f.eval(r.as_slice().expect("row-major"));
        if y.len() != f.n_outputs() || y.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical(format!("oracle returned a bad value at row {i}")));
        }
        labels.row_mut(i).assign(&ndarray::ArrayView1::from(&y));
    }
    LabeledDataset::new(points, labels, domain.clone())
}

/// The seeded initial design of `cfg.n` labeled points.
pub fn initial_design(f: &dyn OracleFn, domain: &DomainBox, cfg: &TbsConfig) -> Result<LabeledDataset> {
    cfg.validate()?;
    if f.n_inputs() != domain.dim() {
        return Err(Error::arg("oracle and domain dimensions differ"));
    }
    let pts = match cfg.initial_design {
        InitialDesign::Uniform => uniform_sample(domain, cfg.n, sub_seed(cfg.seed, 1))?,
        InitialDesign::Grid => grid_sample(domain, cfg.n)?,
    };
    label_with(f, pts, domain)
}

/// An augmented design and how it was produced.
#[derive(Debug, Clone)]
pub struct Augmented {
    pub dataset: LabeledDataset,
    /// Rows `0..n_original` are the initial design.
    pub n_original: usize,
    /// Shifted sensitivity scores of the initial design (TBS only).
    pub scores: Option<Vec<f64>>,
    pub mixture: Option<GmmModel>,
}

impl Augmented {
    /// `row,origin` lines, origin `original` or `added`.
    pub fn write_provenance(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        writeln!(f, "row,origin").map_err(|e| Error::io(path, e))?;
        for i in 0..self.dataset.len() {
            let tag = if i < self.n_original { "original" } else { "added" };
            writeln!(f, "{i},{tag}").map_err(|e| Error::io(path, e))?;
        }
        Ok(())
    }
}

pub fn tbs_augment(f: &dyn OracleFn, domain: &DomainBox, cfg: &TbsConfig) -> Result<LabeledDataset> {
    tbs_augment_detailed(f, domain, cfg).map(|a| a.dataset)
}

pub fn tbs_augment_detailed(f: &dyn OracleFn, domain: &DomainBox, cfg: &TbsConfig) -> Result<Augmented> {
    let init = initial_design(f, domain, cfg)?;
    tbs_augment_from(f, init, cfg)
}

/// TBS starting from a given labeled initial design.
pub fn tbs_augment_from(f: &dyn OracleFn, init: LabeledDataset, cfg: &TbsConfig) -> Result<Augmented> {
    cfg.validate()?;
    let domain = init.domain().clone();
    let n_original = init.len();
    if cfg.n_prime == 0 {
        return Ok(Augmented {
            dataset: init,
            n_original,
            scores: None,
            mixture: None,
        });
    }
    let raw = taylor_sensitivity(f, init.points(), &cfg.sensitivity())?;
    if raw.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("non-finite sensitivity score".into()));
    }
    let lo = raw.iter().copied().fold(f64::INFINITY, f64::min);
    let scores: Vec<f64> = raw.iter().map(|v| v - lo).collect();
    let sample_seed = sub_seed(cfg.seed, 3);
    if scores.iter().all(|v| *v == 0.0) {
        if !cfg.lenient {
            return Err(Error::FlatFunction);
        }
        log::warn!("sensitivity is flat on the initial design; adding uniform points");
        let added = label_with(f, uniform_sample(&domain, cfg.n_prime, sample_seed)?, &domain)?;
        return Ok(Augmented {
            dataset: init.concat(&added)?,
            n_original,
            scores: Some(scores),
            mixture: None,
        });
    }
    let em = cfg.em(&domain);
    let mixture = match cfg.mixture_fit {
        MixtureFit::Weighted => fit_weighted_em(init.points(), &scores, &em)?,
        MixtureFit::Resampled { draws } => fit_resampled_em(init.points(), &scores, draws, &em)?,
    };
    let pts = sample_truncated(&mixture, cfg.n_prime, &domain, sample_seed, cfg.max_draw_factor)?;
    let added = label_with(f, pts, &domain)?;
    Ok(Augmented {
        dataset: init.concat(&added)?,
        n_original,
        scores: Some(scores),
        mixture: Some(mixture),
    })
}

/// Matched-budget control: the same initial design plus `n_prime` uniform points.
pub fn baseline_augment(f: &dyn OracleFn, domain: &DomainBox, cfg: &TbsConfig) -> Result<LabeledDataset> {
    let init = initial_design(f, domain, cfg)?;
    baseline_augment_from(f, init, cfg).map(|a| a.dataset)
}

pub fn baseline_augment_from(f: &dyn OracleFn, init: LabeledDataset, cfg: &TbsConfig) -> Result<Augmented> {
    cfg.validate()?;
    let domain = init.domain().clone();
    let n_original = init.len();
    let added = label_with(f, uniform_sample(&domain, cfg.n_prime, sub_seed(cfg.seed, 4))?, &domain)?;
    Ok(Augmented {
        dataset: init.concat(&added)?,
        n_original,
        scores: None,
        mixture: None,
    })
}
