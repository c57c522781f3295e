//! Weighted Gaussian-mixture density estimation and truncated sampling.
//!
//! EM maximizes the weighted log-likelihood `sum_i w_i log p(x_i)` (weights
//! normalized internally) plus the covariance penalty `-reg/2 * sum_k tr(S_k^-1)`.
//! The penalty makes the covariance update `S_k = C_k + (reg / N_k) I`, so
//! every covariance keeps its eigenvalues above `reg` and the penalized
//! objective is non-decreasing at every iteration. With one component
//! (`N_k = 1`) the update is the weighted sample covariance plus `reg * I`.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::dataset::{rng_from_seed, DomainBox};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CovarianceKind {
    #[default]
    Full,
    Diagonal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EmConfig {
    pub n_components: usize,
    pub max_iter: usize,
    /// Stop once the relative objective improvement drops below this.
    pub tol: f64,
    /// Added to covariance diagonals (scaled by `1 / N_k`, see module docs).
    pub reg_floor: f64,
    pub seed: u64,
    pub covariance: CovarianceKind,
}

impl Default for EmConfig {
    fn default() -> Self {
        Self {
            n_components: 3,
            max_iter: 500,
            tol: 1e-10,
            reg_floor: 1e-6,
            seed: 0,
            covariance: CovarianceKind::Full,
        }
    }
}

impl EmConfig {
    /// Default floor `1e-6 * width^2` for the widest dimension of `domain`.
    pub fn for_domain(n_components: usize, domain: &DomainBox, seed: u64) -> Self {
        let w = domain.widths().into_iter().fold(0.0, f64::max);
        Self {
            n_components,
            reg_floor: 1e-6 * w * w,
            seed,
            ..Self::default()
        }
    }

    fn validate(&self) -> Result<()> {
        if self.n_components == 0 {
            return Err(Error::arg("need at least one mixture component"));
        }
        if !(self.tol > 0.0) {
            return Err(Error::arg("tol must be positive"));
        }
        if !(self.reg_floor > 0.0) {
            return Err(Error::arg("reg_floor must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Component {
    weight: f64,
    mean: Vec<f64>,
    cov: DMatrix<f64>,
    /// Row-major lower Cholesky factor of `cov`.
    chol: Vec<f64>,
    log_norm: f64,
}

impl Component {
    fn new(index: usize, weight: f64, mean: Vec<f64>, cov: DMatrix<f64>) -> Result<Self> {
        let d = mean.len();
        let factor = cov
            .clone()
            .cholesky()
            .ok_or(Error::CovarianceCollapse { component: index })?;
        let l = factor.l();
        let mut chol = vec![0.0; d * d];
        let mut log_det = 0.0;
        for r in 0..d {
            for c in 0..=r {
                chol[r * d + c] = l[(r, c)];
            }
            log_det += 2.0 * l[(r, r)].ln();
        }
        if !log_det.is_finite() {
            return Err(Error::CovarianceCollapse { component: index });
        }
        Ok(Self {
            weight,
            mean,
            cov,
            chol,
            log_norm: -0.5 * (d as f64 * (2.0 * PI).ln() + log_det),
        })
    }

    fn log_density(&self, x: &[f64], buf: &mut [f64]) -> f64 {
        let d = self.mean.len();
        let mut quad = 0.0;
        for r in 0..d {
            let mut v = x[r] - self.mean[r];
            for c in 0..r {
                v -= self.chol[r * d + c] * buf[c];
            }
            v /= self.chol[r * d + r];
            buf[r] = v;
            quad += v * v;
        }
        self.log_norm - 0.5 * quad
    }

    fn trace_inverse(&self) -> f64 {
        self.cov
            .clone()
            .cholesky()
            .map(|c| c.inverse().trace())
            .unwrap_or(f64::INFINITY)
    }
}

/// A fitted mixture. Immutable once built.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GmmJson", into = "GmmJson")]
pub struct GmmModel {
    components: Vec<Component>,
}

#[derive(Serialize, Deserialize)]
struct GmmJson {
    weights: Vec<f64>,
    means: Vec<Vec<f64>>,
    covariances: Vec<Vec<Vec<f64>>>,
}

impl TryFrom<GmmJson> for GmmModel {
    type Error = Error;
    fn try_from(j: GmmJson) -> Result<Self> {
        GmmModel::from_parts(j.weights, j.means, j.covariances)
    }
}

impl From<GmmModel> for GmmJson {
    fn from(m: GmmModel) -> Self {
        GmmJson {
            weights: m.weights(),
            means: m.means(),
            covariances: m.covariances(),
        }
    }
}

impl GmmModel {
    /// Validates weights (sum 1) and covariances (symmetric, positive definite).
    pub fn from_parts(
        weights: Vec<f64>,
        means: Vec<Vec<f64>>,
        covariances: Vec<Vec<Vec<f64>>>,
    ) -> Result<Self> {
        let k = weights.len();
        if k == 0 || means.len() != k || covariances.len() != k {
            return Err(Error::arg("weights, means and covariances must have equal, non-zero length"));
        }
        if weights.iter().any(|w| !(*w >= 0.0)) || (weights.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::arg("component weights must be non-negative and sum to 1"));
        }
        let d = means[0].len();
        let mut components = Vec::with_capacity(k);
        for (i, ((w, m), c)) in weights.into_iter().zip(means).zip(covariances).enumerate() {
            if m.len() != d || c.len() != d || c.iter().any(|r| r.len() != d) {
                return Err(Error::arg(format!("component {i} has inconsistent dimensions")));
            }
            let cov = DMatrix::from_fn(d, d, |r, col| c[r][col]);
            if (&cov - cov.transpose()).abs().max() > 1e-12 * cov.abs().max().max(1.0) {
                return Err(Error::arg(format!("covariance {i} is not symmetric")));
            }
            components.push(Component::new(i, w, m, cov)?);
        }
        Ok(Self { components })
    }

    pub fn n_components(&self) -> usize {
        self.components.len()
    }

    pub fn dim(&self) -> usize {
        self.components[0].mean.len()
    }

    pub fn weights(&self) -> Vec<f64> {
        self.components.iter().map(|c| c.weight).collect()
    }

    pub fn means(&self) -> Vec<Vec<f64>> {
        self.components.iter().map(|c| c.mean.clone()).collect()
    }

    pub fn covariances(&self) -> Vec<Vec<Vec<f64>>> {
        self.components
            .iter()
            .map(|c| {
                (0..c.cov.nrows())
                    .map(|r| (0..c.cov.ncols()).map(|col| c.cov[(r, col)]).collect())
                    .collect()
            })
            .collect()
    }

    /// Smallest eigenvalue over all component covariances.
    pub fn min_eigenvalue(&self) -> f64 {
        self.components
            .iter()
            .map(|c| c.cov.clone().symmetric_eigen().eigenvalues.min())
            .fold(f64::INFINITY, f64::min)
    }

    /// Mixture mean `sum_k pi_k mu_k`.
    pub fn mean(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        for c in &self.components {
            for (o, m) in out.iter_mut().zip(&c.mean) {
                *o += c.weight * m;
            }
        }
        out
    }

    fn log_joint(&self, x: &[f64], out: &mut [f64], buf: &mut [f64]) -> f64 {
        let mut max = f64::NEG_INFINITY;
        for (o, c) in out.iter_mut().zip(&self.components) {
            *o = if c.weight > 0.0 {
                c.weight.ln() + c.log_density(x, buf)
            } else {
                f64::NEG_INFINITY
            };
            max = max.max(*o);
        }
        if max == f64::NEG_INFINITY {
            return max;
        }
        max + out.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
    }

    pub fn log_pdf(&self, x: &[f64]) -> f64 {
        let mut out = vec![0.0; self.n_components()];
        let mut buf = vec![0.0; self.dim()];
        self.log_joint(x, &mut out, &mut buf)
    }

    /// `sum_k pi_k N(x; mu_k, S_k)`
    pub fn pdf(&self, x: &[f64]) -> f64 {
        self.log_pdf(x).exp()
    }

    fn draw<R: Rng>(&self, rng: &mut R, out: &mut [f64], z: &mut [f64]) {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut pick = self.components.len() - 1;
        for (i, c) in self.components.iter().enumerate() {
            acc += c.weight;
            if u < acc {
                pick = i;
                break;
            }
        }
        let c = &self.components[pick];
        let d = c.mean.len();
        for v in z.iter_mut() {
            *v = rng.sample(StandardNormal);
        }
        for r in 0..d {
            let mut v = c.mean[r];
            for col in 0..=r {
                v += c.chol[r * d + col] * z[col];
            }
            out[r] = v;
        }
    }

    /// `n` unrestricted draws.
    pub fn sample(&self, n: usize, seed: u64) -> Array2<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = self.dim();
        let mut out = Array2::zeros((n, d));
        let mut z = vec![0.0; d];
        let mut x = vec![0.0; d];
        for mut row in out.rows_mut() {
            self.draw(&mut rng, &mut x, &mut z);
            row.assign(&ndarray::ArrayView1::from(&x));
        }
        out
    }
}

/// Default draw budget multiplier for [`sample_truncated`].
pub const DEFAULT_MAX_DRAW_FACTOR: usize = 1000;

/// Exactly `n` draws from the mixture conditioned on `domain`, by rejection.
pub fn sample_truncated(
    model: &GmmModel,
    n: usize,
    domain: &DomainBox,
    seed: u64,
    max_draw_factor: usize,
) -> Result<Array2<f64>> {
    if domain.dim() != model.dim() {
        return Err(Error::arg("domain and mixture dimensions differ"));
    }
    let d = model.dim();
    let mut out = Array2::zeros((n, d));
    if n == 0 {
        return Ok(out);
    }
    let budget = max_draw_factor.max(1).saturating_mul(n);
    let mut rng = rng_from_seed(seed);
    let mut z = vec![0.0; d];
    let mut x = vec![0.0; d];
    let mut accepted = 0;
    let mut draws = 0;
    while accepted < n && draws < budget {
        model.draw(&mut rng, &mut x, &mut z);
        draws += 1;
        if domain.contains(&x) {
            out.row_mut(accepted).assign(&ndarray::ArrayView1::from(&x));
            accepted += 1;
        }
    }
    if accepted < n {
        return Err(Error::LowAcceptance {
            requested: n,
            accepted,
            draws,
            rate: accepted as f64 / draws as f64,
        });
    }
    Ok(out)
}

/// Objective values per EM iteration.
#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct EmTrace {
    /// Penalized weighted log-likelihood after each E-step, starting with the
    /// initial model.
    pub objective: Vec<f64>,
    /// Plain weighted log-likelihood alongside.
    pub log_likelihood: Vec<f64>,
    pub converged: bool,
}

fn normalized_weights(points: &Array2<f64>, weights: &[f64], k: usize) -> Result<Vec<f64>> {
    if weights.len() != points.nrows() {
        return Err(Error::arg(format!(
            "{} weights for {} points",
            weights.len(),
            points.nrows()
        )));
    }
    if let Some(i) = weights.iter().position(|w| !(w.is_finite() && *w >= 0.0)) {
        return Err(Error::arg(format!("point weight {i} is {}", weights[i])));
    }
    let total: f64 = weights.iter().sum();
    if total <= 0.0 {
        return Err(Error::arg("all point weights are zero"));
    }
    let positive = weights.iter().filter(|w| **w > 0.0).count();
    if positive < k {
        return Err(Error::arg(format!(
            "{positive} points with positive weight for {k} components"
        )));
    }
    Ok(weights.iter().map(|w| w / total).collect())
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn pick_weighted<R: Rng>(rng: &mut R, scores: &[f64]) -> usize {
    let total: f64 = scores.iter().sum();
    let target = rng.random::<f64>() * total;
    let mut acc = 0.0;
    let mut last = 0;
    for (i, s) in scores.iter().enumerate() {
        if *s > 0.0 {
            last = i;
            acc += s;
            if target < acc {
                return i;
            }
        }
    }
    last
}

/// Weighted k-means++ seeding followed by one M-step on the hard assignment.
pub fn initialize(points: &Array2<f64>, point_weights: &[f64], cfg: &EmConfig) -> Result<GmmModel> {
    cfg.validate()?;
    let w = normalized_weights(points, point_weights, cfg.n_components)?;
    let rows: Vec<Vec<f64>> = points.rows().into_iter().map(|r| r.to_vec()).collect();
    let mut rng = rng_from_seed(cfg.seed);
    let mut centers = vec![pick_weighted(&mut rng, &w)];
    let mut nearest: Vec<f64> = rows.iter().map(|x| sq_dist(x, &rows[centers[0]])).collect();
    while centers.len() < cfg.n_components {
        let scores: Vec<f64> = w.iter().zip(&nearest).map(|(wi, d)| wi * d).collect();
        let next = if scores.iter().any(|s| *s > 0.0) {
            pick_weighted(&mut rng, &scores)
        } else {
            pick_weighted(&mut rng, &w)
        };
        centers.push(next);
        for (n, x) in nearest.iter_mut().zip(&rows) {
            *n = n.min(sq_dist(x, &rows[next]));
        }
    }
    let k = cfg.n_components;
    let mut resp = vec![0.0; rows.len() * k];
    for (i, x) in rows.iter().enumerate() {
        let best = (0..k)
            .min_by(|&a, &b| {
                sq_dist(x, &rows[centers[a]])
                    .partial_cmp(&sq_dist(x, &rows[centers[b]]))
                    .unwrap()
            })
            .expect("k >= 1");
        resp[i * k + best] = 1.0;
    }
    let fallback: Vec<Vec<f64>> = centers.iter().map(|&c| rows[c].clone()).collect();
    m_step(&rows, &w, &resp, cfg, &fallback)
}

const DEAD_SHARE: f64 = 1e-12;

fn m_step(
    rows: &[Vec<f64>],
    w: &[f64],
    resp: &[f64],
    cfg: &EmConfig,
    fallback_means: &[Vec<f64>],
) -> Result<GmmModel> {
    let k = cfg.n_components;
    let d = rows[0].len();
    let mut components = Vec::with_capacity(k);
    let mut mass = vec![0.0; k];
    for (i, wi) in w.iter().enumerate() {
        for j in 0..k {
            mass[j] += wi * resp[i * k + j];
        }
    }
    let total: f64 = mass.iter().sum();
    for j in 0..k {
        let nk = mass[j];
        let mut mean = vec![0.0; d];
        let mut cov = DMatrix::<f64>::zeros(d, d);
        let floor;
        // a component whose share has decayed this far is dead; its MAP
        // floor reg/share would overflow
        let alive = nk > DEAD_SHARE * total;
        if alive {
            for (i, x) in rows.iter().enumerate() {
                let r = w[i] * resp[i * k + j];
                if r > 0.0 {
                    for (m, v) in mean.iter_mut().zip(x) {
                        *m += r * v;
                    }
                }
            }
            mean.iter_mut().for_each(|m| *m /= nk);
            let mut diff = vec![0.0; d];
            for (i, x) in rows.iter().enumerate() {
                let r = w[i] * resp[i * k + j];
                if r == 0.0 {
                    continue;
                }
                for (t, (a, b)) in diff.iter_mut().zip(x.iter().zip(&mean)) {
                    *t = a - b;
                }
                for a in 0..d {
                    for b in 0..d {
                        if cfg.covariance == CovarianceKind::Full || a == b {
                            cov[(a, b)] += r * diff[a] * diff[b];
                        }
                    }
                }
            }
            cov /= nk;
            floor = cfg.reg_floor / (nk / total);
        } else {
            mean.clone_from(&fallback_means[j]);
            floor = cfg.reg_floor;
        }
        cov = (&cov + cov.transpose()) * 0.5;
        for a in 0..d {
            cov[(a, a)] += floor;
        }
        let weight = if alive { nk / total } else { 0.0 };
        components.push(Component::new(j, weight, mean, cov)?);
    }
    Ok(GmmModel { components })
}

struct EStep {
    resp: Vec<f64>,
    log_likelihood: f64,
}

fn e_step(model: &GmmModel, rows: &[Vec<f64>], w: &[f64]) -> Result<EStep> {
    let k = model.n_components();
    let mut resp = vec![0.0; rows.len() * k];
    let mut buf = vec![0.0; model.dim()];
    let mut ll = 0.0;
    for (i, x) in rows.iter().enumerate() {
        let slot = &mut resp[i * k..(i + 1) * k];
        let lp = model.log_joint(x, slot, &mut buf);
        if !lp.is_finite() {
            return Err(Error::Numerical(format!("point {i} has zero mixture density")));
        }
        for v in slot.iter_mut() {
            *v = (*v - lp).exp();
        }
        ll += w[i] * lp;
    }
    Ok(EStep {
        resp,
        log_likelihood: ll,
    })
}

fn penalty(model: &GmmModel, cfg: &EmConfig) -> f64 {
    -0.5 * cfg.reg_floor
        * model
            .components
            .iter()
            .filter(|c| c.weight > 0.0)
            .map(Component::trace_inverse)
            .sum::<f64>()
}

fn rows_of(points: &Array2<f64>) -> Vec<Vec<f64>> {
    points.rows().into_iter().map(|r| r.to_vec()).collect()
}

/// Runs EM from a given starting model.
pub fn fit_weighted_em_from(
    points: &Array2<f64>,
    point_weights: &[f64],
    init: GmmModel,
    cfg: &EmConfig,
) -> Result<(GmmModel, EmTrace)> {
    cfg.validate()?;
    if init.n_components() != cfg.n_components || init.dim() != points.ncols() {
        return Err(Error::arg("initial model does not match config or data"));
    }
    let w = normalized_weights(points, point_weights, cfg.n_components)?;
    let rows = rows_of(points);
    let mut model = init;
    let mut trace = EmTrace::default();
    let mut step = e_step(&model, &rows, &w)?;
    trace.log_likelihood.push(step.log_likelihood);
    trace.objective.push(step.log_likelihood + penalty(&model, cfg));
    for _ in 0..cfg.max_iter {
        let fallback = model.means();
        let next = m_step(&rows, &w, &step.resp, cfg, &fallback)?;
        let next_step = e_step(&next, &rows, &w)?;
        let obj = next_step.log_likelihood + penalty(&next, cfg);
        let prev = *trace.objective.last().expect("seeded");
        trace.log_likelihood.push(next_step.log_likelihood);
        trace.objective.push(obj);
        model = next;
        step = next_step;
        if (obj - prev).abs() <= cfg.tol * prev.abs().max(1e-300) {
            trace.converged = true;
            break;
        }
    }
    Ok((model, trace))
}

/// Weighted EM: each point's statistics count in proportion to its weight.
pub fn fit_weighted_em(
    points: &Array2<f64>,
    point_weights: &[f64],
    cfg: &EmConfig,
) -> Result<GmmModel> {
    fit_weighted_em_traced(points, point_weights, cfg).map(|(m, _)| m)
}

pub fn fit_weighted_em_traced(
    points: &Array2<f64>,
    point_weights: &[f64],
    cfg: &EmConfig,
) -> Result<(GmmModel, EmTrace)> {
    let init = initialize(points, point_weights, cfg)?;
    fit_weighted_em_from(points, point_weights, init, cfg)
}

/// The resampling reading: draw `n_draws` points with probability
/// proportional to their weight, then run unweighted EM on the draws.
pub fn fit_resampled_em(
    points: &Array2<f64>,
    point_weights: &[f64],
    n_draws: usize,
    cfg: &EmConfig,
) -> Result<GmmModel> {
    let w = normalized_weights(points, point_weights, cfg.n_components)?;
    let mut rng = rng_from_seed(cfg.seed ^ 0x5eed_5eed);
    let picks: Vec<usize> = (0..n_draws).map(|_| pick_weighted(&mut rng, &w)).collect();
    let drawn = points.select(ndarray::Axis(0), &picks);
    fit_weighted_em(&drawn, &vec![1.0; n_draws], cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand_distr::{Distribution, Normal};

    fn clusters(seed: u64) -> Array2<f64> {
        let mut rng = rng_from_seed(seed);
        let n = Normal::new(0.0, 0.1).unwrap();
        Array2::from_shape_fn((200, 2), |(i, _)| {
            let c = if i < 100 { -2.0 } else { 3.0 };
            c + n.sample(&mut rng)
        })
    }

    #[test]
    fn single_component_closed_form() {
        let pts = ndarray::arr2(&[[0.0, 1.0], [2.0, 1.0], [1.0, 4.0], [3.0, 2.0]]);
        let w = [1.0, 2.0, 3.0, 4.0];
        let cfg = EmConfig {
            n_components: 1,
            reg_floor: 1e-3,
            ..EmConfig::default()
        };
        let m = fit_weighted_em(&pts, &w, &cfg).unwrap();
        let total: f64 = w.iter().sum();
        let mean: Vec<f64> = (0..2)
            .map(|d| (0..4).map(|i| w[i] * pts[[i, d]]).sum::<f64>() / total)
            .collect();
        for d in 0..2 {
            assert_relative_eq!(m.means()[0][d], mean[d], max_relative = 1e-12);
        }
        for a in 0..2 {
            for b in 0..2 {
                let c: f64 = (0..4)
                    .map(|i| w[i] * (pts[[i, a]] - mean[a]) * (pts[[i, b]] - mean[b]))
                    .sum::<f64>()
                    / total;
                let want = c + if a == b { 1e-3 } else { 0.0 };
                assert_relative_eq!(m.covariances()[0][a][b], want, max_relative = 1e-10);
            }
        }
    }

    #[test]
    fn separated_clusters_are_recovered() {
        let pts = clusters(1);
        let cfg = EmConfig {
            n_components: 2,
            seed: 4,
            ..EmConfig::default()
        };
        let m = fit_weighted_em(&pts, &vec![1.0; 200], &cfg).unwrap();
        let mut centers: Vec<f64> = m.means().iter().map(|v| v[0]).collect();
        centers.sort_by(f64::total_cmp);
        assert!((centers[0] + 2.0).abs() < 0.05 && (centers[1] - 3.0).abs() < 0.05);
        for mu in m.means() {
            assert!((mu[0] - mu[1]).abs() < 0.05);
        }
    }

    #[test]
    fn weight_scaling_is_invisible() {
        let pts = clusters(2);
        let w: Vec<f64> = (0..200).map(|i| 0.1 + (i % 7) as f64).collect();
        let w3: Vec<f64> = w.iter().map(|v| v * 3.0).collect();
        let cfg = EmConfig {
            n_components: 3,
            seed: 9,
            ..EmConfig::default()
        };
        let a = fit_weighted_em(&pts, &w, &cfg).unwrap();
        let b = fit_weighted_em(&pts, &w3, &cfg).unwrap();
        for (x, y) in a.means().iter().flatten().zip(b.means().iter().flatten()) {
            assert_relative_eq!(x, y, max_relative = 1e-9);
        }
    }

    #[test]
    fn zero_weights_rejected() {
        let pts = clusters(3);
        let cfg = EmConfig::default();
        assert!(matches!(
            fit_weighted_em(&pts, &vec![0.0; 200], &cfg),
            Err(Error::Argument(_))
        ));
        let mut w = vec![0.0; 200];
        w[0] = 1.0;
        w[1] = 1.0;
        assert!(fit_weighted_em(&pts, &w, &cfg).is_err());
    }

    #[test]
    fn standard_normal_density() {
        let m = GmmModel::from_parts(vec![1.0], vec![vec![0.0]], vec![vec![vec![1.0]]]).unwrap();
        assert_relative_eq!(m.pdf(&[0.0]), 0.398_942_280_401_432_7, max_relative = 1e-14);
    }

    #[test]
    fn density_integrates_to_one() {
        let m = GmmModel::from_parts(
            vec![0.3, 0.7],
            vec![vec![-1.0, 0.5], vec![1.5, -0.5]],
            vec![
                vec![vec![0.3, 0.1], vec![0.1, 0.2]],
                vec![vec![0.5, -0.2], vec![-0.2, 0.4]],
            ],
        )
        .unwrap();
        // midpoint rule on [-6, 6]^2
        let n = 600;
        let h = 12.0 / n as f64;
        let mut total = 0.0;
        for i in 0..n {
            for j in 0..n {
                let x = -6.0 + (i as f64 + 0.5) * h;
                let y = -6.0 + (j as f64 + 0.5) * h;
                total += m.pdf(&[x, y]) * h * h;
            }
        }
        assert!((total - 1.0).abs() < 1e-3, "{total}");
    }

    #[test]
    fn symmetric_model_has_even_density() {
        let m = GmmModel::from_parts(
            vec![0.5, 0.5],
            vec![vec![-1.0], vec![1.0]],
            vec![vec![vec![0.4]], vec![vec![0.4]]],
        )
        .unwrap();
        for x in [0.1, 0.7, 2.3] {
            assert_relative_eq!(m.pdf(&[x]), m.pdf(&[-x]), max_relative = 1e-12);
        }
    }

    #[test]
    fn truncated_sampling_in_wide_box_matches_mean() {
        let m = GmmModel::from_parts(
            vec![0.25, 0.75],
            vec![vec![-1.0], vec![2.0]],
            vec![vec![vec![0.1]], vec![vec![0.2]]],
        )
        .unwrap();
        let wide = DomainBox::interval(-50.0, 50.0).unwrap();
        let s = sample_truncated(&m, 20_000, &wide, 3, 10).unwrap();
        let mean = s.column(0).mean().unwrap();
        assert!((mean - 1.25).abs() < 0.02, "{mean}");
    }

    #[test]
    fn truncation_respects_box_or_reports_low_acceptance() {
        let m = GmmModel::from_parts(vec![1.0], vec![vec![0.0]], vec![vec![vec![1.0]]]).unwrap();
        let b = DomainBox::interval(0.5, 0.6).unwrap();
        let s = sample_truncated(&m, 200, &b, 0, DEFAULT_MAX_DRAW_FACTOR).unwrap();
        assert!(s.iter().all(|v| (0.5..=0.6).contains(v)));
        let far = DomainBox::interval(40.0, 41.0).unwrap();
        match sample_truncated(&m, 10, &far, 0, 100) {
            Err(Error::LowAcceptance { accepted, draws, .. }) => {
                assert_eq!(accepted, 0);
                assert_eq!(draws, 1000);
            }
            other => panic!("expected low acceptance, got {other:?}"),
        }
    }

    #[test]
    fn json_round_trip() {
        let pts = clusters(5);
        let m = fit_weighted_em(&pts, &vec![1.0; 200], &EmConfig::default()).unwrap();
        let s = serde_json::to_string(&m).unwrap();
        assert!(s.starts_with("{\"weights\":"));
        let back: GmmModel = serde_json::from_str(&s).unwrap();
        assert_eq!(back.weights(), m.weights());
        assert_eq!(back.means(), m.means());
    }

    #[test]
    fn diagonal_mode_has_no_off_diagonals() {
        let pts = clusters(6);
        let cfg = EmConfig {
            n_components: 2,
            covariance: CovarianceKind::Diagonal,
            ..EmConfig::default()
        };
        let m = fit_weighted_em(&pts, &vec![1.0; 200], &cfg).unwrap();
        for c in m.covariances() {
            assert_eq!(c[0][1], 0.0);
        }
    }

    #[test]
    fn resampled_reading_fits() {
        let pts = clusters(7);
        let w: Vec<f64> = (0..200).map(|i| if i < 100 { 1.0 } else { 3.0 }).collect();
        let cfg = EmConfig {
            n_components: 2,
            ..EmConfig::default()
        };
        let m = fit_resampled_em(&pts, &w, 2000, &cfg).unwrap();
        let mut ws = m.weights();
        ws.sort_by(f64::total_cmp);
        assert!((ws[0] - 0.25).abs() < 0.05, "{ws:?}");
    }
}
