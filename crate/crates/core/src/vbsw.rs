//! Variance-based sample weights from k-nearest-neighbor label variance.

use ndarray::{Array1, Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::dataset::{class_indices, one_hot, LabeledDataset, WeightedDataset};
use crate::error::{Error, Result};
use crate::knn::KnnIndex;
use crate::models::{fit_linear_head, HeadFit, MlpModel};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VbswConfig {
    /// Neighborhood size, the point itself included.
    pub k: usize,
    /// Ratio between the largest and smallest weight.
    pub m: f64,
    /// Number of classes when labels are integer class ids; they are one-hot
    /// encoded before the variance is taken.
    #[serde(default)]
    pub categorical: Option<usize>,
}

impl VbswConfig {
    pub fn new(k: usize, m: f64) -> Self {
        Self {
            k,
            m,
            categorical: None,
        }
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        if self.k < 2 || self.k > n {
            return Err(Error::arg(format!("k = {} must lie in [2, {n}]", self.k)));
        }
        if !(self.m >= 1.0 && self.m.is_finite()) {
            return Err(Error::arg(format!("m = {} must be >= 1", self.m)));
        }
        Ok(())
    }
}

fn encoded_labels(labels: &Array2<f64>, categorical: Option<usize>) -> Result<Array2<f64>> {
    match categorical {
        Some(c) => Ok(one_hot(&class_indices(labels, c)?.0, c)),
        None => Ok(labels.clone()),
    }
}

/// Unbiased variance of the labels over each point's `k` nearest neighbors,
/// summed across label columns.
pub fn local_variance_of(points: &Array2<f64>, labels: &Array2<f64>, k: usize) -> Result<Vec<f64>> {
    let n = points.nrows();
    if labels.nrows() != n {
        return Err(Error::arg("points and labels differ in row count"));
    }
    if k < 2 || k > n {
        return Err(Error::arg(format!("k = {k} must lie in [2, {n}]")));
    }
    let index = KnnIndex::build(points)?;
    let kf = k as f64;
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let row = points.row(i).to_vec();
        let mut ids: Vec<usize> = index.query(&row, k)?.iter().map(|nb| nb.index).collect();
        // exact duplicates with lower indices can crowd the point itself out
        if !ids.contains(&i) {
            ids[k - 1] = i;
        }
        // shifting by the point's own label keeps constant neighborhoods at
        // exactly zero; the (k S2 - S1^2) form is exact on small integers
        let mut total = 0.0;
        for (o, &yref) in labels.row(i).iter().enumerate() {
            let (mut s1, mut s2) = (0.0, 0.0);
            for &j in &ids {
                let d = labels[[j, o]] - yref;
                s1 += d;
                s2 += d * d;
            }
            total += (kf * s2 - s1 * s1).max(0.0);
        }
        out.push(total / (kf * (kf - 1.0)));
    }
    Ok(out)
}

pub fn local_variance(ds: &LabeledDataset, k: usize, categorical: Option<usize>) -> Result<Vec<f64>> {
    let labels = encoded_labels(ds.labels(), categorical)?;
    local_variance_of(ds.points(), &labels, k)
}

/// Affine map of `raw` onto `[1, m]`, then normalized to sum to one.
/// Constant input yields uniform weights.
pub fn rescale_normalize(raw: &[f64], m: f64) -> Result<Array1<f64>> {
    if raw.is_empty() {
        return Err(Error::arg("no values to rescale"));
    }
    if !(m >= 1.0 && m.is_finite()) {
        return Err(Error::arg(format!("m = {m} must be >= 1")));
    }
    if raw.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
        return Err(Error::arg("raw weights must be finite and non-negative"));
    }
    let n = raw.len();
    let lo = raw.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = raw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if hi == lo {
        return Ok(Array1::from_elem(n, 1.0 / n as f64));
    }
    let scaled: Array1<f64> = raw
        .iter()
        .map(|v| 1.0 + (m - 1.0) * (v - lo) / (hi - lo))
        .collect();
    let total = scaled.sum();
    Ok(scaled / total)
}

pub fn vbsw_weights(ds: &LabeledDataset, cfg: &VbswConfig) -> Result<WeightedDataset> {
    cfg.validate(ds.len())?;
    let raw = local_variance(ds, cfg.k, cfg.categorical)?;
    let w = rescale_normalize(&raw, cfg.m)?;
    WeightedDataset::new(ds.clone(), w)
}

/// Column-wise z-scores; constant columns are only centered.
pub fn standardize(x: &Array2<f64>) -> Array2<f64> {
    let mean = x.mean_axis(Axis(0)).expect("non-empty");
    let mut out = x - &mean;
    for mut col in out.columns_mut() {
        let sd = (col.iter().map(|v| v * v).sum::<f64>() / col.len() as f64).sqrt();
        if sd > 0.0 {
            col.mapv_inplace(|v| v / sd);
        }
    }
    out
}

/// Result of retraining a network head on feature-space weights.
#[derive(Debug, Clone)]
pub struct FeatureSpaceFit {
    pub model: MlpModel,
    pub weights: Array1<f64>,
}

/// Computes weights in the base model's feature space and refits its last
/// layer under them; earlier layers stay frozen. Gradient head fits without
/// an explicit start are warm-started from the base head.
pub fn feature_space_vbsw(
    base: &MlpModel,
    ds: &LabeledDataset,
    cfg: &VbswConfig,
    head: &HeadFit,
    standardize_features: bool,
) -> Result<FeatureSpaceFit> {
    cfg.validate(ds.len())?;
    let features = base.feature_extract(ds.points())?;
    let space = if standardize_features {
        standardize(&features)
    } else {
        features.clone()
    };
    let labels = encoded_labels(ds.labels(), cfg.categorical)?;
    let raw = local_variance_of(&space, &labels, cfg.k)?;
    let weights = rescale_normalize(&raw, cfg.m)?;
    let head = match head {
        HeadFit::Gradient { cfg, output, init: None } => HeadFit::Gradient {
            cfg: cfg.clone(),
            output: *output,
            init: base.layers().last().cloned(),
        },
        other => other.clone(),
    };
    let fitted = fit_linear_head(
        &features,
        ds.labels(),
        weights.as_slice().expect("contiguous"),
        &head,
    )?;
    Ok(FeatureSpaceFit {
        model: base.with_head(fitted)?,
        weights,
    })
}
