//! Built-in target functions with analytic partials.

use ndarray::Array2;
use rand::Rng;

use crate::dataset::DomainBox;
use crate::derivatives::{MultiIndex, OracleFn};

/// `f(x) = 1 / (1 + 25 x^2)` on `[-1, 1]`.
#[derive(Debug, Clone, Copy, Default)]
pub struct Runge;

impl Runge {
    pub fn domain() -> DomainBox {
        DomainBox::interval(-1.0, 1.0).expect("valid interval")
    }
}

impl OracleFn for Runge {
    fn n_inputs(&self) -> usize {
        1
    }
    fn n_outputs(&self) -> usize {
        1
    }
    fn eval(&self, x: &[f64]) -> Vec<f64> {
        vec![1.0 / (1.0 + 25.0 * x[0] * x[0])]
    }
    fn analytic_partial(&self, x: &[f64], k: &MultiIndex) -> Option<Vec<f64>> {
        let x = x[0];
        let u = 1.0 + 25.0 * x * x;
        match k.order() {
            0 => Some(vec![1.0 / u]),
            1 => Some(vec![-50.0 * x / (u * u)]),
            2 => Some(vec![(3750.0 * x * x - 50.0) / (u * u * u)]),
            _ => None,
        }
    }
    fn input_scale(&self, _d: usize) -> f64 {
        2.0
    }
}

/// `f(x) = tanh(a x)` on `[-1, 1]`.
#[derive(Debug, Clone, Copy)]
pub struct Tanh {
    pub steepness: f64,
}

impl Default for Tanh {
    fn default() -> Self {
        Self { steepness: 10.0 }
    }
}

impl Tanh {
    pub fn domain() -> DomainBox {
        DomainBox::interval(-1.0, 1.0).expect("valid interval")
    }
}

impl OracleFn for Tanh {
    fn n_inputs(&self) -> usize {
        1
    }
    fn n_outputs(&self) -> usize {
        1
    }
    fn eval(&self, x: &[f64]) -> Vec<f64> {
        vec![(self.steepness * x[0]).tanh()]
    }
    fn analytic_partial(&self, x: &[f64], k: &MultiIndex) -> Option<Vec<f64>> {
        let a = self.steepness;
        let t = (a * x[0]).tanh();
        let sech2 = 1.0 - t * t;
        match k.order() {
            0 => Some(vec![t]),
            1 => Some(vec![a * sech2]),
            2 => Some(vec![-2.0 * a * a * t * sech2]),
            3 => Some(vec![2.0 * a.powi(3) * sech2 * (3.0 * t * t - 1.0)]),
            _ => None,
        }
    }
    fn input_scale(&self, _d: usize) -> f64 {
        2.0
    }
}

/// `f(x) = x^3` on `[-1, 1]`.
#[derive(Debug, Clone, Copy, Default)]
pub struct Cubic;

impl OracleFn for Cubic {
    fn n_inputs(&self) -> usize {
        1
    }
    fn n_outputs(&self) -> usize {
        1
    }
    fn eval(&self, x: &[f64]) -> Vec<f64> {
        vec![x[0].powi(3)]
    }
    fn analytic_partial(&self, x: &[f64], k: &MultiIndex) -> Option<Vec<f64>> {
        let x = x[0];
        Some(vec![match k.order() {
            0 => x.powi(3),
            1 => 3.0 * x * x,
            2 => 6.0 * x,
            3 => 6.0,
            _ => 0.0,
        }])
    }
    fn input_scale(&self, _d: usize) -> f64 {
        2.0
    }
}

/// Scalar multivariate polynomial `sum_j c_j * prod_d x_d^{e_jd}` with exact
/// partials of every order.
#[derive(Debug, Clone, PartialEq)]
pub struct Polynomial {
    dims: usize,
    terms: Vec<(f64, Vec<u32>)>,
}

impl Polynomial {
    pub fn new(dims: usize, terms: Vec<(f64, Vec<u32>)>) -> Self {
        assert!(terms.iter().all(|(_, e)| e.len() == dims), "exponent width mismatch");
        Self { dims, terms }
    }

    /// `c + g.x + 0.5 x^T H x` with standard-normal-ish random coefficients.
    pub fn random_quadratic<R: Rng>(dims: usize, rng: &mut R) -> Self {
        let mut terms = vec![(rng.random_range(-1.0..1.0), vec![0; dims])];
        for d in 0..dims {
            let mut e = vec![0; dims];
            e[d] = 1;
            terms.push((rng.random_range(-2.0..2.0), e));
        }
        for d in 0..dims {
            for j in d..dims {
                let mut e = vec![0; dims];
                e[d] += 1;
                e[j] += 1;
                terms.push((rng.random_range(-2.0..2.0), e));
            }
        }
        Self::new(dims, terms)
    }

    /// Random polynomial of total degree at most `degree` with `n_terms` monomials.
    pub fn random<R: Rng>(dims: usize, degree: u32, n_terms: usize, rng: &mut R) -> Self {
        let terms = (0..n_terms)
            .map(|_| {
                let mut e = vec![0u32; dims];
                let deg = rng.random_range(0..=degree);
                for _ in 0..deg {
                    e[rng.random_range(0..dims)] += 1;
                }
                (rng.random_range(-2.0..2.0), e)
            })
            .collect();
        Self::new(dims, terms)
    }

    fn partial(&self, x: &[f64], k: &[usize]) -> f64 {
        self.terms
            .iter()
            .map(|(c, e)| {
                let mut v = *c;
                for d in 0..self.dims {
                    let (p, kd) = (e[d] as usize, k[d]);
                    if kd > p {
                        return 0.0;
                    }
                    let falling: f64 = ((p - kd + 1)..=p).map(|i| i as f64).product();
                    v *= falling * x[d].powi((p - kd) as i32);
                }
                v
            })
            .sum()
    }

    /// Exact gradient and Hessian at `x`.
    pub fn gradient_hessian(&self, x: &[f64]) -> (Vec<f64>, Array2<f64>) {
        let n = self.dims;
        let grad = (0..n)
            .map(|d| {
                let mut k = vec![0; n];
                k[d] = 1;
                self.partial(x, &k)
            })
            .collect();
        let hess = Array2::from_shape_fn((n, n), |(a, b)| {
            let mut k = vec![0; n];
            k[a] += 1;
            k[b] += 1;
            self.partial(x, &k)
        });
        (grad, hess)
    }
}

impl OracleFn for Polynomial {
    fn n_inputs(&self) -> usize {
        self.dims
    }
    fn n_outputs(&self) -> usize {
        1
    }
    fn eval(&self, x: &[f64]) -> Vec<f64> {
        vec![self.partial(x, &vec![0; self.dims])]
    }
    fn analytic_partial(&self, x: &[f64], k: &MultiIndex) -> Option<Vec<f64>> {
        Some(vec![self.partial(x, k.as_slice())])
    }
}
