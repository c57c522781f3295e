//! Partial derivatives, the Taylor sensitivity metric and the 1-D
//! generalization-bound diagnostic.
//!
//! The sensitivity of `f` at `x` for order `n` and perturbation `eps` is
//!
//! ```text
//! D(x) = sum over 1 <= |k| <= n of eps^|k| * (d^k f(x))^2 / k!
//! ```
//!
//! summed over output dimensions. Partials come from the oracle when it
//! provides them analytically, otherwise from central differences (orders 1
//! and 2 only).

use ndarray::{Array2, ArrayView1};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::DomainBox;
use crate::error::{Error, Result};

/// Multi-index `k = (k_1, ..., k_d)` of a partial derivative.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct MultiIndex(Vec<usize>);

impl MultiIndex {
    pub fn new(k: Vec<usize>) -> Self {
        Self(k)
    }

    /// `k = e_d` in dimension `dims`.
    pub fn unit(dims: usize, d: usize) -> Self {
        let mut k = vec![0; dims];
        k[d] = 1;
        Self(k)
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }

    pub fn dims(&self) -> usize {
        self.0.len()
    }

    /// `|k|`
    pub fn order(&self) -> usize {
        self.0.iter().sum()
    }

    /// `k! = k_1! * ... * k_d!`
    pub fn factorial(&self) -> f64 {
        self.0
            .iter()
            .map(|&k| (1..=k).map(|i| i as f64).product::<f64>())
            .product()
    }

    /// `eps^k` for the isotropic perturbation `eps * (1, ..., 1)`.
    pub fn eps_power(&self, eps: f64) -> f64 {
        eps.powi(self.order() as i32)
    }
}

/// All multi-indices with `1 <= |k| <= n`, graded by order and, within an
/// order, in decreasing lexicographic order: `(1,0), (0,1), (2,0), (1,1), (0,2)`.
pub fn enumerate_multi_indices(n_inputs: usize, order: usize) -> Vec<MultiIndex> {
    fn compositions(total: usize, slots: usize, prefix: &mut Vec<usize>, out: &mut Vec<MultiIndex>) {
        if slots == 1 {
            prefix.push(total);
            out.push(MultiIndex(prefix.clone()));
            prefix.pop();
            return;
        }
        for first in (0..=total).rev() {
            prefix.push(first);
            compositions(total - first, slots - 1, prefix, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    if n_inputs == 0 {
        return out;
    }
    for deg in 1..=order {
        compositions(deg, n_inputs, &mut Vec::with_capacity(n_inputs), &mut out);
    }
    out
}

/// A deterministic target function `f: R^n_i -> R^n_o`.
pub trait OracleFn: Send + Sync {
    fn n_inputs(&self) -> usize;

    fn n_outputs(&self) -> usize;

    fn eval(&self, x: &[f64]) -> Vec<f64>;

    /// Exact `d^k f(x)` when available.
    fn analytic_partial(&self, _x: &[f64], _k: &MultiIndex) -> Option<Vec<f64>> {
        None
    }

    /// Characteristic length of input `d`; finite-difference steps are
    /// `fd_step * input_scale(d)`.
    fn input_scale(&self, _d: usize) -> f64 {
        1.0
    }
}

/// Wraps a closure as an oracle without analytic partials.
pub struct FnOracle<F> {
    n_inputs: usize,
    n_outputs: usize,
    scales: Vec<f64>,
    f: F,
}

impl<F> FnOracle<F>
where
    F: Fn(&[f64]) -> Vec<f64> + Send + Sync,
{
    pub fn new(n_inputs: usize, n_outputs: usize, f: F) -> Self {
        Self {
            n_inputs,
            n_outputs,
            scales: vec![1.0; n_inputs],
            f,
        }
    }

    /// Uses the domain widths as finite-difference scales.
    pub fn with_domain(mut self, domain: &DomainBox) -> Self {
        self.scales = domain.widths();
        self
    }
}

impl<F> OracleFn for FnOracle<F>
where
    F: Fn(&[f64]) -> Vec<f64> + Send + Sync,
{
    fn n_inputs(&self) -> usize {
        self.n_inputs
    }
    fn n_outputs(&self) -> usize {
        self.n_outputs
    }
    fn eval(&self, x: &[f64]) -> Vec<f64> {
        (self.f)(x)
    }
    fn input_scale(&self, d: usize) -> f64 {
        self.scales[d]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SensitivityConfig {
    /// Taylor order `n >= 1`.
    pub order: usize,
    pub epsilon: f64,
    /// Relative finite-difference step.
    pub fd_step: f64,
}

impl Default for SensitivityConfig {
    fn default() -> Self {
        Self {
            order: 2,
            epsilon: 1e-3,
            fd_step: 1e-4,
        }
    }
}

impl SensitivityConfig {
    pub fn validate(&self) -> Result<()> {
        if self.order < 1 {
            return Err(Error::arg("Taylor order must be >= 1"));
        }
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(Error::arg("epsilon must be positive"));
        }
        if !(self.fd_step > 0.0 && self.fd_step.is_finite()) {
            return Err(Error::arg("fd_step must be positive"));
        }
        Ok(())
    }
}

fn shifted(x: &[f64], moves: &[(usize, f64)]) -> Vec<f64> {
    let mut y = x.to_vec();
    for &(d, delta) in moves {
        y[d] += delta;
    }
    y
}

fn combine(terms: &[(f64, Vec<f64>)], scale: f64) -> Vec<f64> {
    let n = terms[0].1.len();
    (0..n)
        .map(|o| terms.iter().map(|(c, v)| c * v[o]).sum::<f64>() * scale)
        .collect()
}

/// `d^k f(x)`: analytic when the oracle provides it, else central differences
/// with per-dimension steps `h`.
pub fn partial_derivative(
    f: &dyn OracleFn,
    x: &[f64],
    k: &MultiIndex,
    h: &[f64],
) -> Result<Vec<f64>> {
    if k.dims() != x.len() || h.len() != x.len() {
        return Err(Error::arg("multi-index, point and steps must share a dimension"));
    }
    if let Some(v) = f.analytic_partial(x, k) {
        return Ok(v);
    }
    let active: Vec<(usize, usize)> = k
        .as_slice()
        .iter()
        .enumerate()
        .filter(|(_, &p)| p > 0)
        .map(|(d, &p)| (d, p))
        .collect();
    match (k.order(), active.as_slice()) {
        (0, _) => Ok(f.eval(x)),
        (1, [(d, _)]) => {
            let hd = h[*d];
            let terms = [
                (1.0, f.eval(&shifted(x, &[(*d, hd)]))),
                (-1.0, f.eval(&shifted(x, &[(*d, -hd)]))),
            ];
            Ok(combine(&terms, 1.0 / (2.0 * hd)))
        }
        (2, [(d, 2)]) => {
            let hd = h[*d];
            let terms = [
                (1.0, f.eval(&shifted(x, &[(*d, hd)]))),
                (-2.0, f.eval(x)),
                (1.0, f.eval(&shifted(x, &[(*d, -hd)]))),
            ];
            Ok(combine(&terms, 1.0 / (hd * hd)))
        }
        (2, [(d, 1), (e, 1)]) => {
            let (hd, he) = (h[*d], h[*e]);
            let terms = [
                (1.0, f.eval(&shifted(x, &[(*d, hd), (*e, he)]))),
                (-1.0, f.eval(&shifted(x, &[(*d, hd), (*e, -he)]))),
                (-1.0, f.eval(&shifted(x, &[(*d, -hd), (*e, he)]))),
                (1.0, f.eval(&shifted(x, &[(*d, -hd), (*e, -he)]))),
            ];
            Ok(combine(&terms, 1.0 / (4.0 * hd * he)))
        }
        (order, _) => Err(Error::UnsupportedOrder { order }),
    }
}

fn fd_steps(f: &dyn OracleFn, rel: f64) -> Vec<f64> {
    (0..f.n_inputs()).map(|d| rel * f.input_scale(d)).collect()
}

/// Sensitivity of every row of `xs`, summed across outputs.
pub fn taylor_sensitivity(
    f: &dyn OracleFn,
    xs: &Array2<f64>,
    cfg: &SensitivityConfig,
) -> Result<Vec<f64>> {
    cfg.validate()?;
    if xs.ncols() != f.n_inputs() {
        return Err(Error::arg(format!(
            "points have {} columns, oracle expects {}",
            xs.ncols(),
            f.n_inputs()
        )));
    }
    let indices = enumerate_multi_indices(f.n_inputs(), cfg.order);
    let coeffs: Vec<f64> = indices
        .iter()
        .map(|k| k.eps_power(cfg.epsilon) / k.factorial())
        .collect();
    let h = fd_steps(f, cfg.fd_step);
    let rows: Vec<ArrayView1<f64>> = xs.rows().into_iter().collect();
    rows.par_iter()
        .map(|row| {
            let x = row.to_vec();
            let mut total = 0.0;
            for (k, c) in indices.iter().zip(&coeffs) {
                let d = partial_derivative(f, &x, k, &h)?;
                total += c * d.iter().map(|v| v * v).sum::<f64>();
            }
            Ok(total)
        })
        .collect()
}

/// `eps * |g|^2 + 0.5 * eps^2 * |H|_F^2`, the order-2 sensitivity in matrix form.
pub fn sensitivity_closed_form_order2(
    gradient: &[f64],
    hessian: &Array2<f64>,
    epsilon: f64,
) -> Result<f64> {
    if !hessian.is_square() {
        return Err(Error::arg(format!(
            "hessian must be square, got {}x{}",
            hessian.nrows(),
            hessian.ncols()
        )));
    }
    if hessian.nrows() != gradient.len() {
        return Err(Error::arg("hessian and gradient dimensions differ"));
    }
    let g2: f64 = gradient.iter().map(|v| v * v).sum();
    let h2: f64 = hessian.iter().map(|v| v * v).sum();
    Ok(epsilon * g2 + 0.5 * epsilon * epsilon * h2)
}

/// Sample variance of each output of `f(x + e)`, `e ~ N(0, eps I)`.
pub fn perturbation_variance(
    f: &dyn OracleFn,
    x: &[f64],
    epsilon: f64,
    draws: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    if draws < 2 {
        return Err(Error::arg("need at least two draws"));
    }
    let normal = Normal::new(0.0, epsilon.sqrt()).map_err(|e| Error::arg(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_o = f.n_outputs();
    let mut mean = vec![0.0; n_o];
    let mut m2 = vec![0.0; n_o];
    let mut y = x.to_vec();
    for i in 0..draws {
        for (yd, xd) in y.iter_mut().zip(x) {
            *yd = xd + normal.sample(&mut rng);
        }
        let v = f.eval(&y);
        let count = (i + 1) as f64;
        for o in 0..n_o {
            let delta = v[o] - mean[o];
            mean[o] += delta / count;
            m2[o] += delta * (v[o] - mean[o]);
        }
    }
    Ok(m2.into_iter().map(|s| s / (draws - 1) as f64).collect())
}

/// Lengths of the Voronoi cells of sorted 1-D points, closed by the domain edges.
pub fn voronoi_lengths_1d(xs: &[f64], domain: &DomainBox) -> Result<Vec<f64>> {
    if domain.dim() != 1 {
        return Err(Error::arg("expected a 1-D domain"));
    }
    if xs.is_empty() {
        return Err(Error::arg("need at least one point"));
    }
    if xs.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::arg("points must be sorted strictly ascending"));
    }
    if !xs.iter().all(|x| domain.contains(&[*x])) {
        return Err(Error::arg("points must lie inside the domain"));
    }
    let (lo, hi) = (domain.lower()[0], domain.upper()[0]);
    let n = xs.len();
    Ok((0..n)
        .map(|i| {
            let left = if i == 0 { lo } else { 0.5 * (xs[i - 1] + xs[i]) };
            let right = if i + 1 == n { hi } else { 0.5 * (xs[i] + xs[i + 1]) };
            right - left
        })
        .collect())
}

/// `sum_i (|f'(x_i)| + K)^2 |S_i|^3 / 3` over the Voronoi cells `S_i`.
pub fn gb_bound_1d(
    f: &dyn OracleFn,
    xs: &[f64],
    domain: &DomainBox,
    lipschitz: f64,
    fd_step: f64,
) -> Result<f64> {
    if f.n_inputs() != 1 || f.n_outputs() != 1 {
        return Err(Error::arg("gb_bound_1d expects a scalar function of one variable"));
    }
    if !(lipschitz >= 0.0) {
        return Err(Error::arg("Lipschitz constant must be non-negative"));
    }
    let cells = voronoi_lengths_1d(xs, domain)?;
    let k = MultiIndex::unit(1, 0);
    let h = [fd_step * domain.width(0)];
    let mut total = 0.0;
    for (x, len) in xs.iter().zip(cells) {
        let slope = partial_derivative(f, &[*x], &k, &h)?[0].abs();
        total += (slope + lipschitz).powi(2) * len.powi(3) / 3.0;
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::functions::{Cubic, Polynomial};
    use approx::assert_relative_eq;

    fn is_idx(v: &[MultiIndex], want: &[&[usize]]) -> bool {
        v.len() == want.len() && v.iter().zip(want).all(|(a, b)| a.as_slice() == *b)
    }

    fn binom(n: usize, k: usize) -> usize {
        (0..k).fold(1, |acc, i| acc * (n - i) / (i + 1))
    }

    #[test]
    fn multi_index_enumeration() {
        assert!(is_idx(&enumerate_multi_indices(1, 2), &[&[1], &[2]]));
        assert!(is_idx(
            &enumerate_multi_indices(2, 2),
            &[&[1, 0], &[0, 1], &[2, 0], &[1, 1], &[0, 2]]
        ));
        assert_eq!(enumerate_multi_indices(3, 2).len(), 9);
        for d in 1..5 {
            for n in 1..5 {
                let v = enumerate_multi_indices(d, n);
                assert_eq!(v.len(), binom(d + n, n) - 1);
                let set: std::collections::HashSet<_> = v.iter().cloned().collect();
                assert_eq!(set.len(), v.len());
            }
        }
    }

    #[test]
    fn multi_index_factorial_and_power() {
        let k = MultiIndex::new(vec![2, 0, 3]);
        assert_eq!(k.order(), 5);
        assert_eq!(k.factorial(), 12.0);
        assert_relative_eq!(k.eps_power(0.1), 1e-5, max_relative = 1e-12);
    }

    #[test]
    fn fd_matches_analytic_square() {
        let f = FnOracle::new(1, 1, |x: &[f64]| vec![x[0] * x[0]]);
        let d = partial_derivative(&f, &[1.0], &MultiIndex::new(vec![1]), &[1e-4]).unwrap();
        assert_relative_eq!(d[0], 2.0, max_relative = 1e-8);
    }

    #[test]
    fn fd_constant_is_exactly_zero() {
        let f = FnOracle::new(2, 1, |_: &[f64]| vec![0.37]);
        for k in enumerate_multi_indices(2, 2) {
            let d = partial_derivative(&f, &[0.3, -0.8], &k, &[1e-4, 1e-4]).unwrap();
            assert_eq!(d[0], 0.0);
        }
    }

    #[test]
    fn fd_cross_derivative() {
        let f = FnOracle::new(2, 1, |x: &[f64]| vec![x[0] * x[1]]);
        let d = partial_derivative(&f, &[0.7, -1.3], &MultiIndex::new(vec![1, 1]), &[1e-4, 1e-4])
            .unwrap();
        assert_relative_eq!(d[0], 1.0, max_relative = 1e-7);
    }

    #[test]
    fn fd_rejects_third_order() {
        let f = FnOracle::new(1, 1, |x: &[f64]| vec![x[0].sin()]);
        let err = partial_derivative(&f, &[0.0], &MultiIndex::new(vec![3]), &[1e-3]).unwrap_err();
        assert!(matches!(err, Error::UnsupportedOrder { order: 3 }));
    }

    #[test]
    fn fd_convergence_order_is_two() {
        // smooth test function with known first and second derivatives
        let f = FnOracle::new(1, 1, |x: &[f64]| vec![(1.3 * x[0]).sin() + 0.2 * x[0].powi(3)]);
        let x: f64 = 0.4;
        let d1 = 1.3 * (1.3 * x).cos() + 0.6 * x * x;
        let d2 = -1.69 * (1.3 * x).sin() + 1.2 * x;
        for (k, exact) in [(1usize, d1), (2, d2)] {
            let err = |h: f64| {
                (partial_derivative(&f, &[x], &MultiIndex::new(vec![k]), &[h]).unwrap()[0] - exact)
                    .abs()
            };
            let hs = [0.08, 0.04, 0.02, 0.01];
            for w in hs.windows(2) {
                let p = (err(w[0]) / err(w[1])).log2();
                assert!(p >= 1.9, "order {k}: observed {p}");
            }
        }
    }

    #[test]
    fn sensitivity_hand_value() {
        let f = FnOracle::new(1, 1, |x: &[f64]| vec![x[0] * x[0]]);
        let xs = Array2::from_elem((1, 1), 1.0);
        let cfg = SensitivityConfig {
            order: 2,
            epsilon: 1e-3,
            fd_step: 1e-4,
        };
        let s = taylor_sensitivity(&f, &xs, &cfg).unwrap();
        assert_relative_eq!(s[0], 4.002e-3, max_relative = 1e-7);
        let g = sensitivity_closed_form_order2(&[2.0], &Array2::from_elem((1, 1), 2.0), 1e-3)
            .unwrap();
        assert_relative_eq!(g, 4.002e-3, max_relative = 1e-15);
    }

    #[test]
    fn sensitivity_of_constant_is_zero() {
        let f = FnOracle::new(2, 2, |_: &[f64]| vec![1.0, -4.0]);
        let xs = Array2::from_shape_fn((5, 2), |(i, j)| (i + j) as f64 * 0.1);
        let s = taylor_sensitivity(&f, &xs, &SensitivityConfig::default()).unwrap();
        assert!(s.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn closed_form_rejects_non_square() {
        assert!(sensitivity_closed_form_order2(&[1.0, 2.0], &Array2::zeros((2, 3)), 0.1).is_err());
        assert_eq!(
            sensitivity_closed_form_order2(&[0.0], &Array2::zeros((1, 1)), 0.1).unwrap(),
            0.0
        );
    }

    #[test]
    fn closed_form_equals_multi_index_sum_3d() {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let p = Polynomial::random_quadratic(3, &mut rng);
        let x: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
        let (g, h) = p.gradient_hessian(&x);
        let xs = Array2::from_shape_vec((1, 3), x).unwrap();
        let eps = 0.05;
        let cfg = SensitivityConfig {
            order: 2,
            epsilon: eps,
            fd_step: 1e-4,
        };
        let a = taylor_sensitivity(&p, &xs, &cfg).unwrap()[0];
        let b = sensitivity_closed_form_order2(&g, &h, eps).unwrap();
        assert_relative_eq!(a, b, max_relative = 1e-12);
    }

    #[test]
    fn gb_bound_examples() {
        let unit = DomainBox::interval(0.0, 1.0).unwrap();
        let flat = FnOracle::new(1, 1, |_: &[f64]| vec![2.0]);
        assert_eq!(gb_bound_1d(&flat, &[0.2, 0.5], &unit, 0.0, 1e-4).unwrap(), 0.0);
        let line = FnOracle::new(1, 1, |x: &[f64]| vec![x[0]]);
        let b = gb_bound_1d(&line, &[0.4], &unit, 0.0, 1e-4).unwrap();
        assert_relative_eq!(b, 1.0 / 3.0, max_relative = 1e-9);
        assert!(gb_bound_1d(&line, &[0.5, 0.2], &unit, 0.0, 1e-4).is_err());
    }

    #[test]
    fn gb_bound_decreases_with_density() {
        let dom = DomainBox::interval(-1.0, 1.0).unwrap();
        let grid = |n: usize| -> Vec<f64> {
            (0..n).map(|i| -1.0 + 2.0 * (i as f64 + 0.5) / n as f64).collect()
        };
        let b8 = gb_bound_1d(&Cubic, &grid(8), &dom, 0.0, 1e-4).unwrap();
        let b16 = gb_bound_1d(&Cubic, &grid(16), &dom, 0.0, 1e-4).unwrap();
        assert!(b16 < b8);
    }
}
