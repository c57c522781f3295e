//! Two-state Bateman-type system `u' = v s eta u`, `eta' = v s eta u`.
//!
//! `u - eta` is conserved, so `1 / u` solves a linear ODE and the flow has a
//! closed form; see [`analytic_solve`].

use std::io::Write;
use std::path::Path;

use ndarray::Array2;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{rng_from_seed, DomainBox, LabeledDataset};
use crate::derivatives::{MultiIndex, OracleFn};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatemanParams {
    pub sigma: f64,
    pub v: f64,
    /// Box over `(u0, eta0, t)`.
    pub domain: DomainBox,
}

impl Default for BatemanParams {
    fn default() -> Self {
        Self {
            sigma: -0.45,
            v: 1.0,
            domain: DomainBox::new(vec![0.1, 0.1, 0.0], vec![1.0, 1.0, 10.0]).expect("valid box"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Solver {
    Euler,
    Analytic,
}

fn phi(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else {
        x.exp_m1() / x
    }
}

/// Forward Euler from 0 to `t`; the last step is shortened to land on `t`.
///
/// Both components receive the same increment every step, so only `u` is
/// stepped and `eta` is recovered from the invariant `u - eta = u0 - eta0`.
pub fn euler_solve(p: &BatemanParams, u0: f64, eta0: f64, t: f64, dt: f64) -> Result<(f64, f64)> {
    if !(dt > 0.0) || !(t >= 0.0) {
        return Err(Error::arg("need dt > 0 and t >= 0"));
    }
    if t == 0.0 {
        return Ok((u0, eta0));
    }
    let k = p.v * p.sigma;
    let c = u0 - eta0;
    let mut u = u0;
    let mut elapsed = 0.0;
    let mut step = 0usize;
    while elapsed < t {
        let h = dt.min(t - elapsed);
        let eta = if step == 0 { eta0 } else { u - c };
        u += k * eta * u * h;
        step += 1;
        elapsed = if t - elapsed <= dt { t } else { step as f64 * dt };
        if !u.is_finite() {
            return Err(Error::BlowUp { step });
        }
    }
    Ok((u, u - c))
}

/// Closed-form state at time `t`.
///
/// With `c = u0 - eta0` and `r = c v s`, the denominator
/// `D(t) = exp(r t) / u0 - v s t phi(r t)` gives `u = 1 / D` and `eta = u - c`.
/// A non-positive denominator anywhere on `[0, t]` means the solution has a
/// pole there.
pub fn analytic_solve(p: &BatemanParams, u0: f64, eta0: f64, t: f64) -> Result<(f64, f64)> {
    if !(t >= 0.0) {
        return Err(Error::arg("need t >= 0"));
    }
    if u0 == 0.0 {
        return Ok((0.0, eta0));
    }
    if u0 < 0.0 {
        return Err(Error::arg("closed form needs u0 >= 0"));
    }
    let c = u0 - eta0;
    let k = p.v * p.sigma;
    let r = c * k;
    let denom = |s: f64| (r * s).exp() / u0 - k * s * phi(r * s);
    let d = denom(t);
    if !(d > 0.0) {
        // locate the crossing for the error message
        let (mut lo, mut hi) = (0.0, t);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if denom(mid) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        return Err(Error::Singularity { t: hi });
    }
    // D is monotone between its values at 0 and t unless it dips; check a
    // coarse grid so an excursion through zero is not missed.
    for i in 1..64 {
        let s = t * i as f64 / 64.0;
        if !(denom(s) > 0.0) {
            return Err(Error::Singularity { t: s });
        }
    }
    let u = 1.0 / d;
    Ok((u, u - c))
}

pub fn solve(
    p: &BatemanParams,
    solver: Solver,
    u0: f64,
    eta0: f64,
    t: f64,
    dt: f64,
) -> Result<(f64, f64)> {
    match solver {
        Solver::Euler => euler_solve(p, u0, eta0, t, dt),
        Solver::Analytic => analytic_solve(p, u0, eta0, t),
    }
}

/// `n` uniform draws of `(u0, eta0, t)` labeled with the final state.
pub fn generate_dataset(
    p: &BatemanParams,
    n: usize,
    seed: u64,
    solver: Solver,
    dt: f64,
) -> Result<LabeledDataset> {
    let mut rng = rng_from_seed(seed);
    let dom = &p.domain;
    let points = Array2::from_shape_fn((n, 3), |(_, d)| {
        rng.random_range(dom.lower()[d]..=dom.upper()[d])
    });
    label_points(p, points, solver, dt)
}

/// Labels the given `(u0, eta0, t)` rows.
pub fn label_points(
    p: &BatemanParams,
    points: Array2<f64>,
    solver: Solver,
    dt: f64,
) -> Result<LabeledDataset> {
    let mut labels = Array2::zeros((points.nrows(), 2));
    for (i, r) in points.rows().into_iter().enumerate() {
        let (u, e) = solve(p, solver, r[0], r[1], r[2], dt)?;
        labels[[i, 0]] = u;
        labels[[i, 1]] = e;
    }
    LabeledDataset::new(points, labels, p.domain.clone())
}

/// The system's flow map as an oracle over `(u0, eta0, t)`.
#[derive(Debug, Clone)]
pub struct BatemanOracle {
    pub params: BatemanParams,
}

impl OracleFn for BatemanOracle {
    fn n_inputs(&self) -> usize {
        3
    }
    fn n_outputs(&self) -> usize {
        2
    }
    fn eval(&self, x: &[f64]) -> Vec<f64> {
        match analytic_solve(&self.params, x[0], x[1], x[2].max(0.0)) {
            Ok((u, e)) => vec![u, e],
            Err(_) => vec![f64::NAN, f64::NAN],
        }
    }
    fn analytic_partial(&self, _x: &[f64], _k: &MultiIndex) -> Option<Vec<f64>> {
        None
    }
    fn input_scale(&self, d: usize) -> f64 {
        self.params.domain.width(d)
    }
}

/// Squared-error maps on a `(u0, eta0)` grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorMap {
    pub u0: Vec<f64>,
    pub eta0: Vec<f64>,
    /// Row-major over `(u0, eta0)`.
    pub values: Vec<f64>,
}

impl ErrorMap {
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.eta0.len() + j]
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        writeln!(f, "u0,eta0,value").map_err(|e| Error::io(path, e))?;
        for (i, a) in self.u0.iter().enumerate() {
            for (j, b) in self.eta0.iter().enumerate() {
                writeln!(f, "{a},{b},{}", self.get(i, j)).map_err(|e| Error::io(path, e))?;
            }
        }
        Ok(())
    }
}

/// For each grid cell, the largest squared state error over `t_grid`.
pub fn error_map<F>(
    p: &BatemanParams,
    predict: F,
    grid: usize,
    t_grid: usize,
) -> Result<ErrorMap>
where
    F: Fn(&Array2<f64>) -> Result<Array2<f64>>,
{
    if grid < 2 || t_grid < 2 {
        return Err(Error::arg("error map grids need at least 2 nodes"));
    }
    let dom = &p.domain;
    let axis = |d: usize, n: usize| -> Vec<f64> {
        (0..n)
            .map(|i| if i + 1 == n { dom.upper()[d] } else { dom.lower()[d] + dom.width(d) * i as f64 / (n - 1) as f64 })
            .collect()
    };
    let (us, es, ts) = (axis(0, grid), axis(1, grid), axis(2, t_grid));
    let rows = grid * grid * t_grid;
    let mut pts = Array2::zeros((rows, 3));
    let mut r = 0;
    for a in &us {
        for b in &es {
            for t in &ts {
                pts[[r, 0]] = *a;
                pts[[r, 1]] = *b;
                pts[[r, 2]] = *t;
                r += 1;
            }
        }
    }
    let truth = label_points(p, pts.clone(), Solver::Analytic, 0.0)?;
    let pred = predict(&pts)?;
    let mut values = vec![0.0f64; grid * grid];
    for (r, (pr, tr)) in pred.rows().into_iter().zip(truth.labels().rows()).enumerate() {
        let e: f64 = pr.iter().zip(tr).map(|(a, b)| (a - b) * (a - b)).sum();
        let cell = r / t_grid;
        values[cell] = values[cell].max(e);
    }
    Ok(ErrorMap {
        u0: us,
        eta0: es,
        values,
    })
}

/// With `Z = G_bs - G_tbs` per grid cell: the grid means of the positive part
/// (gain) and of the magnitude of the negative part (loss).
pub fn aeg_ael(g_bs: &ErrorMap, g_tbs: &ErrorMap) -> Result<(f64, f64)> {
    if g_bs.u0 != g_tbs.u0 || g_bs.eta0 != g_tbs.eta0 || g_bs.values.len() != g_tbs.values.len() {
        return Err(Error::arg("error maps are on different grids"));
    }
    let (mut gain, mut loss) = (0.0, 0.0);
    for (a, b) in g_bs.values.iter().zip(&g_tbs.values) {
        let z = a - b;
        if z > 0.0 {
            gain += z;
        } else {
            loss -= z;
        }
    }
    let n = g_bs.values.len() as f64;
    Ok((gain / n, loss / n))
}
