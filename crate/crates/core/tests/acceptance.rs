//! End-to-end acceptance checks, one line per criterion.
//!
//! Run with `cargo test --release --test acceptance`; pass criterion numbers
//! (`-- 2 5 9`) to run a subset. Criteria listed in `KNOWN_FAILURES` still
//! print FAIL but do not fail the process.

mod common;

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use ndarray::{Array2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use locvar::bateman::{analytic_solve, euler_solve, BatemanParams};
use locvar::dataset::{uniform_sample, DomainBox};
use locvar::derivatives::{
    gb_bound_1d, perturbation_variance, sensitivity_closed_form_order2, taylor_sensitivity,
    voronoi_lengths_1d, FnOracle, SensitivityConfig,
};
use locvar::experiments::{
    run_bateman, run_toy_1d, run_vbsw_toy, Arm, BatemanExperimentConfig, FunctionName, Outcome,
    Toy1dConfig, VbswToyConfig,
};
use locvar::functions::{Cubic, Polynomial};
use locvar::gmm::{
    fit_weighted_em_from, fit_weighted_em_traced, initialize, sample_truncated, EmConfig, GmmModel,
    DEFAULT_MAX_DRAW_FACTOR,
};
use locvar::models::{
    train_from_exact, Activation, Loss, MlpModel, MlpSpec, Optimizer, TrainConfig,
};
use locvar::vbsw::{local_variance_of, rescale_normalize, vbsw_weights, VbswConfig};

/// Criteria expected to fail at the specified budgets; see the project notes.
const KNOWN_FAILURES: &[(usize, &str)] = &[
    (6, "VBSW at lr 1e-3 undertrains the weighted arm"),
    (8, "desk-scale Bateman run; solver checks must still pass"),
];

struct Verdict {
    pass: bool,
    detail: String,
    /// Parts of the criterion that are not covered by a known failure.
    hard_fail: bool,
}

impl Verdict {
    fn new(pass: bool, detail: String) -> Self {
        Self { pass, detail, hard_fail: false }
    }

    /// A failure that a known-failure entry does not excuse.
    fn broken(detail: String) -> Self {
        Self { pass: false, detail, hard_fail: true }
    }
}

type Check = fn() -> Verdict;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn mean_of(out: &Outcome, arm: Arm, metric: &str) -> f64 {
    out.summary(arm)
        .and_then(|s| s.mean(metric))
        .unwrap_or(f64::NAN)
}

fn c1_toy_1d() -> Verdict {
    let seeds: Vec<u64> = (0..40).collect();
    let mut parts = Vec::new();
    let mut ok = true;
    let mut best_ratio = f64::INFINITY;
    for function in [FunctionName::Runge, FunctionName::Tanh] {
        let cfg = Toy1dConfig {
            function,
            ..Toy1dConfig::default()
        };
        let out = match run_toy_1d(&cfg, &seeds, None) {
            Ok(o) => o,
            Err(e) => return Verdict::new(false, format!("{function:?}: {e}")),
        };
        let (bs, tbs) = (mean_of(&out, Arm::Bs, "linf"), mean_of(&out, Arm::Tbs, "linf"));
        ok &= tbs < bs;
        best_ratio = best_ratio.min(tbs / bs);
        let mut part = format!("{function:?} linf bs {bs:.3e} tbs {tbs:.3e}");
        if function == FunctionName::Tanh {
            let (b2, t2) = (mean_of(&out, Arm::Bs, "l2"), mean_of(&out, Arm::Tbs, "l2"));
            ok &= t2 <= b2;
            part.push_str(&format!(", l2 bs {b2:.3e} tbs {t2:.3e}"));
        }
        parts.push(part);
    }
    ok &= best_ratio <= 0.9;
    parts.push(format!("best ratio {best_ratio:.3}"));
    Verdict::new(ok, parts.join("; "))
}

fn c2_perturbation_variance() -> Verdict {
    let mut r = rng(2);
    let mut worst: f64 = 0.0;
    for case in 0..5 {
        let dims = 1 + case % 3;
        let f = Polynomial::random_quadratic(dims, &mut r);
        let x: Vec<f64> = (0..dims).map(|_| r.random_range(-1.0..1.0)).collect();
        let eps = 0.05;
        let (g, h) = f.gradient_hessian(&x);
        let closed = sensitivity_closed_form_order2(&g, &h, eps).expect("square hessian");
        let mc = perturbation_variance(&f, &x, eps, 1_000_000, 100 + case as u64).expect("draws")[0];
        worst = worst.max((mc - closed).abs() / closed);
    }
    Verdict::new(worst < 0.02, format!("worst relative gap {worst:.2e} over 5 quadratics"))
}

fn c3_taylor_identity() -> Verdict {
    let mut r = rng(3);
    let cfg = SensitivityConfig {
        order: 2,
        epsilon: 0.01,
        fd_step: 1e-4,
    };
    let mut worst: f64 = 0.0;
    for case in 0..20 {
        let dims = 1 + case % 3;
        let f = Polynomial::random(dims, 4, 6, &mut r);
        let dom = DomainBox::new(vec![-1.0; dims], vec![1.0; dims]).expect("box");
        let xs = uniform_sample(&dom, 10, case as u64).expect("sample");
        let s = taylor_sensitivity(&f, &xs, &cfg).expect("sensitivity");
        for (row, v) in xs.rows().into_iter().zip(s) {
            let (g, h) = f.gradient_hessian(&row.to_vec());
            let closed = sensitivity_closed_form_order2(&g, &h, cfg.epsilon).expect("closed");
            let rel = if closed == 0.0 { v.abs() } else { (v - closed).abs() / closed.abs() };
            worst = worst.max(rel);
        }
    }
    Verdict::new(worst < 1e-10, format!("worst relative gap {worst:.2e} over 20 polynomials"))
}

fn clustered(r: &mut ChaCha8Rng, n: usize, dims: usize, k: usize) -> Array2<f64> {
    let centers: Vec<Vec<f64>> = (0..k)
        .map(|_| (0..dims).map(|_| r.random_range(-3.0..3.0)).collect())
        .collect();
    Array2::from_shape_fn((n, dims), |(i, d)| {
        let u: f64 = r.random_range(-1.0..1.0);
        let v: f64 = r.random_range(-1.0..1.0);
        centers[i % k][d] + 0.6 * (u + v)
    })
}

/// One EM iteration written from the textbook formulas, unregularized.
fn textbook_em_step(x: &Array2<f64>, model: &GmmModel) -> (Vec<f64>, Vec<Vec<f64>>, Vec<DMatrix<f64>>) {
    let (n, d) = x.dim();
    let k = model.n_components();
    let (w, mu, cov) = (model.weights(), model.means(), model.covariances());
    let mut resp = vec![vec![0.0; k]; n];
    for (i, row) in x.rows().into_iter().enumerate() {
        let logs: Vec<f64> = (0..k)
            .map(|c| {
                let s = DMatrix::from_fn(d, d, |a, b| cov[c][a][b]);
                let diff = DVector::from_fn(d, |a, _| row[a] - mu[c][a]);
                let quad = (diff.transpose() * s.clone().try_inverse().expect("invertible") * &diff)[0];
                w[c].ln()
                    - 0.5 * (d as f64 * (2.0 * std::f64::consts::PI).ln() + s.determinant().ln() + quad)
            })
            .collect();
        let top = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let z: f64 = logs.iter().map(|l| (l - top).exp()).sum();
        for c in 0..k {
            resp[i][c] = (logs[c] - top).exp() / z;
        }
    }
    let mut weights = Vec::new();
    let mut means = Vec::new();
    let mut covs = Vec::new();
    for c in 0..k {
        let nk: f64 = resp.iter().map(|r| r[c]).sum();
        let m: Vec<f64> = (0..d)
            .map(|a| x.column(a).iter().zip(&resp).map(|(v, r)| r[c] * v).sum::<f64>() / nk)
            .collect();
        let mut s = DMatrix::zeros(d, d);
        for (row, r) in x.rows().into_iter().zip(&resp) {
            let diff = DVector::from_fn(d, |a, _| row[a] - m[a]);
            s += r[c] * &diff * diff.transpose();
        }
        weights.push(nk / n as f64);
        means.push(m);
        covs.push(s / nk);
    }
    (weights, means, covs)
}

fn c4_weighted_em() -> Verdict {
    let mut r = rng(4);
    let mut worst_obj_drop: f64 = 0.0;
    let mut worst_ll_drop: f64 = 0.0;
    let mut outside = 0usize;
    for case in 0..100u64 {
        let dims = 1 + (case % 3) as usize;
        let k = 1 + (case % 4) as usize;
        let x = clustered(&mut r, 120, dims, k);
        let w: Vec<f64> = (0..120).map(|_| r.random_range(0.1..1.0)).collect();
        let cfg = EmConfig {
            n_components: k,
            max_iter: 300,
            tol: 1e-12,
            // the penalty trades a little likelihood for the floor; keep it negligible
            reg_floor: 1e-10,
            seed: case,
            ..EmConfig::default()
        };
        let (model, trace) = match fit_weighted_em_traced(&x, &w, &cfg) {
            Ok(t) => t,
            Err(e) => return Verdict::new(false, format!("case {case}: {e}")),
        };
        for pair in trace.objective.windows(2) {
            worst_obj_drop = worst_obj_drop.max((pair[0] - pair[1]) / pair[0].abs().max(1.0));
        }
        for pair in trace.log_likelihood.windows(2) {
            worst_ll_drop = worst_ll_drop.max((pair[0] - pair[1]) / pair[0].abs().max(1.0));
        }
        // the middle 60% of the data's bounding box on every axis
        let (mut lo, mut hi) = (Vec::new(), Vec::new());
        for c in x.columns() {
            let a = c.iter().copied().fold(f64::INFINITY, f64::min);
            let b = c.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            lo.push(a + 0.2 * (b - a));
            hi.push(b - 0.2 * (b - a));
        }
        let bx = DomainBox::new(lo, hi).expect("box");
        match sample_truncated(&model, 500, &bx, case, DEFAULT_MAX_DRAW_FACTOR) {
            Ok(s) => outside += s.rows().into_iter().filter(|p| !bx.contains(&p.to_vec())).count(),
            Err(e) => return Verdict::new(false, format!("case {case} truncated sampling: {e}")),
        }
    }

    // uniform weights against the textbook iteration, step by step
    let mut worst_traj: f64 = 0.0;
    for case in 0..10u64 {
        let dims = 1 + (case % 3) as usize;
        let k = 2 + (case % 3) as usize;
        let x = clustered(&mut r, 90, dims, k);
        let ones = vec![1.0; 90];
        let cfg = EmConfig {
            n_components: k,
            max_iter: 1,
            tol: 1e-300,
            reg_floor: 1e-12,
            seed: case,
            ..EmConfig::default()
        };
        let mut model = initialize(&x, &ones, &cfg).expect("init");
        for _ in 0..20 {
            let (tw, tm, tc) = textbook_em_step(&x, &model);
            model = fit_weighted_em_from(&x, &ones, model, &cfg).expect("em").0;
            let (w, m, c) = (model.weights(), model.means(), model.covariances());
            for j in 0..k {
                worst_traj = worst_traj.max((w[j] - tw[j]).abs());
                for a in 0..dims {
                    worst_traj = worst_traj.max((m[j][a] - tm[j][a]).abs());
                    for b in 0..dims {
                        worst_traj = worst_traj.max((c[j][a][b] - tc[j][(a, b)]).abs());
                    }
                }
            }
        }
    }
    let ok = worst_obj_drop <= 1e-9 && worst_ll_drop <= 1e-9 && outside == 0 && worst_traj < 1e-8;
    Verdict::new(
        ok,
        format!(
            "worst drop objective {worst_obj_drop:.1e} loglik {worst_ll_drop:.1e}; \
             textbook gap {worst_traj:.1e}; {outside} truncated draws outside"
        ),
    )
}

fn c5_vbsw_exact() -> Verdict {
    let col = |v: &[f64]| Array2::from_shape_vec((v.len(), 1), v.to_vec()).expect("column");
    let line = |n: usize| Array2::from_shape_fn((n, 1), |(i, _)| i as f64);
    let mut fails = Vec::new();
    let constant = local_variance_of(&line(5), &col(&[0.3; 5]), 3).expect("lv");
    if constant.iter().any(|v| *v != 0.0) {
        fails.push("constant");
    }
    let three = local_variance_of(&line(3), &col(&[0.0, 0.0, 1.0]), 3).expect("lv");
    if three.iter().any(|v| *v != 1.0 / 3.0) {
        fails.push("{0,0,1}");
    }
    let pair = local_variance_of(&line(2), &ndarray::arr2(&[[1.0, 0.0], [0.0, 1.0]]), 2).expect("lv");
    if pair != vec![1.0, 1.0] {
        fails.push("one-hot pair");
    }

    // postconditions where every quantity is representable
    for (raw, m) in [
        (vec![0.0, 1.0, 4.0], 5.0),
        (vec![0.0, 4.0, 2.0, 2.0], 3.0),
        (vec![0.5, 0.25, 0.75, 0.5, 0.5, 0.25, 0.75, 0.5], 3.0),
    ] {
        let w = rescale_normalize(&raw, m).expect("rescale");
        let hi = w.iter().copied().fold(0.0, f64::max);
        let lo = w.iter().copied().fold(1.0, f64::min);
        if hi / lo != m || w.sum() != 1.0 {
            fails.push("rescale");
        }
    }
    // and to round-off on arbitrary input
    let mut r = rng(5);
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let raw: Vec<f64> = (0..40).map(|_| r.random_range(0.0..3.0)).collect();
        let m = r.random_range(1.5..200.0);
        let w = rescale_normalize(&raw, m).expect("rescale");
        let hi = w.iter().copied().fold(0.0, f64::max);
        let lo = w.iter().copied().fold(1.0, f64::min);
        worst = worst.max((hi / lo - m).abs() / m).max((w.sum() - 1.0).abs());
    }
    if worst > 1e-13 {
        fails.push("rescale round-off");
    }

    let dom = DomainBox::new(vec![0.0; 2], vec![1.0; 2]).expect("box");
    let x = uniform_sample(&dom, 150, 5).expect("sample");
    let y = x
        .map_axis(Axis(1), |p| ((5.0 * p[0]).cos() * p[1] * 512.0).round() / 512.0)
        .insert_axis(Axis(1));
    let ds = locvar::dataset::LabeledDataset::new(x, y, dom).expect("dataset");
    let cfg = VbswConfig::new(12, 40.0);
    let base = vbsw_weights(&ds, &cfg).expect("weights");
    for (a, b) in [(2.0, -1.0), (-0.25, 3.0), (8.0, 64.0)] {
        let mapped = ds.with_labels(ds.labels().mapv(|v| a * v + b)).expect("labels");
        if vbsw_weights(&mapped, &cfg).expect("weights").weights() != base.weights() {
            fails.push("affine invariance");
        }
    }
    let detail = if fails.is_empty() {
        format!("hand cases, rescale and affine invariance exact; random rescale gap {worst:.1e}")
    } else {
        format!("failed: {}", fails.join(", "))
    };
    Verdict::new(fails.is_empty(), detail)
}

fn c6_double_moon() -> Verdict {
    let seeds: Vec<u64> = (0..50).collect();
    let out = match run_vbsw_toy(&VbswToyConfig::default(), &seeds, None) {
        Ok(o) => o,
        Err(e) => return Verdict::broken(e.to_string()),
    };
    let (b, v) = (mean_of(&out, Arm::Baseline, "accuracy"), mean_of(&out, Arm::Vbsw, "accuracy"));
    let gain_pp = 100.0 * (v - b);
    Verdict::new(
        gain_pp >= 1.0,
        format!("accuracy baseline {:.2}% vbsw {:.2}%, gain {gain_pp:+.2} pp", 100.0 * b, 100.0 * v),
    )
}

fn c7_gradient_check() -> Verdict {
    let mut r = rng(7);
    let mut worst: f64 = 0.0;
    for case in 0..10 {
        let n_in = r.random_range(1..4);
        let mut widths = vec![n_in];
        for _ in 0..r.random_range(1..3) {
            widths.push(r.random_range(2..6));
        }
        for loss in [Loss::WeightedMse, Loss::WeightedBce, Loss::WeightedCce] {
            let (n_out, act) = match loss {
                Loss::WeightedMse => (2, Activation::Identity),
                Loss::WeightedBce => (1, Activation::Sigmoid),
                Loss::WeightedCce => (3, Activation::Softmax),
            };
            let mut w = widths.clone();
            w.push(n_out);
            let mut model = MlpModel::init(&MlpSpec::new(w, act), case).expect("init");
            // random biases too: zero biases put dead-layer rows exactly on a relu kink
            let random: Vec<f64> = (0..model.n_params()).map(|_| r.random_range(-1.0..1.0)).collect();
            model.set_params_flat(&random).expect("params");
            let rows = 7;
            let x = Array2::from_shape_fn((rows, n_in), |_| r.random_range(-1.5..1.5));
            let y = Array2::from_shape_fn((rows, n_out), |(i, j)| match loss {
                Loss::WeightedMse => r.random_range(-1.0..1.0),
                Loss::WeightedBce => f64::from(u8::from(i % 2 == 0)),
                Loss::WeightedCce => f64::from(u8::from(i % n_out == j)),
            });
            let raw: Vec<f64> = (0..rows).map(|_| r.random_range(0.2..1.0)).collect();
            let total: f64 = raw.iter().sum();
            let weights: Vec<f64> = raw.iter().map(|v| v / total).collect();
            let (_, g) = model.loss_and_gradient(&x, &y, &weights, loss).expect("gradient");
            let g = g.flatten();
            let p = model.params_flat();
            let mut fd = vec![0.0; p.len()];
            for i in 0..p.len() {
                let h = 1e-6 * p[i].abs().max(1.0);
                let mut q = p.clone();
                q[i] = p[i] + h;
                model.set_params_flat(&q).expect("params");
                let up = model.loss_and_gradient(&x, &y, &weights, loss).expect("loss").0;
                q[i] = p[i] - h;
                model.set_params_flat(&q).expect("params");
                let down = model.loss_and_gradient(&x, &y, &weights, loss).expect("loss").0;
                fd[i] = (up - down) / (2.0 * h);
            }
            model.set_params_flat(&p).expect("params");
            let diff: f64 = g.iter().zip(&fd).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            let scale = g.iter().map(|v| v * v).sum::<f64>().sqrt().max(fd.iter().map(|v| v * v).sum::<f64>().sqrt());
            worst = worst.max(if scale > 0.0 { diff / scale } else { diff });
        }
    }
    Verdict::new(worst < 1e-5, format!("worst relative error {worst:.2e} over 10 nets x 3 losses"))
}

fn c8_bateman() -> Verdict {
    let p = BatemanParams::default();
    let (u0, eta0, t) = (0.8, 0.3, 10.0);
    let exact = analytic_solve(&p, u0, eta0, t).expect("closed form").0;
    let dts = [1e-2, 5e-3, 2.5e-3, 1.25e-3];
    let errs: Vec<f64> = dts
        .iter()
        .map(|&dt| (euler_solve(&p, u0, eta0, t, dt).expect("euler").0 - exact).abs())
        .collect();
    let orders: Vec<f64> = errs.windows(2).map(|e| (e[0] / e[1]).log2()).collect();
    let order_ok = orders.iter().all(|o| (0.8..=1.2).contains(o));

    let mut agree: f64 = 0.0;
    let mut conserved = true;
    for &a in &[0.1, 0.55, 1.0] {
        for &b in &[0.1, 0.55, 1.0] {
            let (ue, ee) = euler_solve(&p, a, b, 10.0, 1e-6).expect("euler");
            let (ua, ea) = analytic_solve(&p, a, b, 10.0).expect("closed form");
            agree = agree.max((ue - ua).abs()).max((ee - ea).abs());
            conserved &= ee == ue - (a - b) && ea == ua - (a - b);
        }
    }
    let solvers_ok = order_ok && agree < 1e-6 && conserved;

    let seeds: Vec<u64> = (0..10).collect();
    let (desk_ok, desk) = match run_bateman(&BatemanExperimentConfig::default(), &seeds, None) {
        Ok(out) => {
            let (bs, tbs) = (mean_of(&out, Arm::Bs, "linf"), mean_of(&out, Arm::Tbs, "linf"));
            let (aeg, ael) = (out.extras["aeg"], out.extras["ael"]);
            (
                tbs < bs && aeg > ael,
                format!("desk linf bs {bs:.3e} tbs {tbs:.3e}, aeg {aeg:.2e} ael {ael:.2e}"),
            )
        }
        Err(e) => return Verdict::broken(format!("desk run: {e}")),
    };
    let orders_s: Vec<String> = orders.iter().map(|o| format!("{o:.3}")).collect();
    Verdict {
        pass: solvers_ok && desk_ok,
        detail: format!(
            "euler orders [{}], max gap at dt=1e-6 {agree:.1e}, conservation {}; {desk}",
            orders_s.join(", "),
            if conserved { "exact" } else { "broken" }
        ),
        hard_fail: !solvers_ok,
    }
}

fn c9_duplication() -> Verdict {
    let mut r = rng(9);
    let mut steps = 0;
    for case in 0..5u64 {
        let n = r.random_range(3..7);
        let p = r.random_range(3..6);
        let total = 1usize << p;
        // every row at least once, the rest spread at random
        let mut counts = vec![1usize; n];
        for _ in n..total {
            counts[r.random_range(0..n)] += 1;
        }
        let n_in = r.random_range(1..4);
        let hidden = r.random_range(2..6);
        let (spec, loss) = if case % 2 == 0 {
            (MlpSpec::new(vec![n_in, hidden, 1], Activation::Identity), Loss::WeightedMse)
        } else {
            (MlpSpec::new(vec![n_in, hidden, 1], Activation::Sigmoid), Loss::WeightedBce)
        };
        let x = Array2::from_shape_fn((n, n_in), |_| r.random_range(-1.0..1.0));
        let y = Array2::from_shape_fn((n, 1), |(i, _)| match loss {
            Loss::WeightedBce => f64::from(u8::from(i % 2 == 0)),
            _ => r.random_range(-1.0..1.0),
        });
        let m = total as f64;
        let w: Vec<f64> = counts.iter().map(|&c| c as f64 / m).collect();
        let rows: Vec<usize> = (0..n).flat_map(|i| std::iter::repeat_n(i, counts[i])).collect();
        let (xd, yd) = (x.select(Axis(0), &rows), y.select(Axis(0), &rows));
        let wd = vec![1.0 / m; total];
        let cfg = |batch| TrainConfig {
            optimizer: Optimizer::Sgd,
            learning_rate: 0.1,
            batch_size: batch,
            epochs: 1,
            loss,
            seed: case,
        };
        let mut a = MlpModel::init(&spec, case).expect("init");
        let mut b = a.clone();
        for step in 0..25 {
            a = train_from_exact(a, &x, &y, &w, &cfg(n)).expect("weighted").0;
            b = train_from_exact(b, &xd, &yd, &wd, &cfg(total)).expect("duplicated").0;
            if a.params_flat() != b.params_flat() {
                return Verdict::new(false, format!("case {case} diverges at step {step}"));
            }
            steps += 1;
        }
    }
    Verdict::new(true, format!("parameters identical after each of {steps} steps over 5 cases"))
}

fn c10_gb_bound() -> Verdict {
    let domain = DomainBox::interval(-1.0, 1.0).expect("interval");
    let flat = FnOracle::new(1, 1, |_: &[f64]| vec![2.5]);
    let zero = gb_bound_1d(&flat, &[-0.5, 0.1, 0.7], &domain, 0.0, 1e-5).expect("bound");
    let mut r = rng(10);
    let mut decreasing = true;
    for _ in 0..10 {
        let mut xs: Vec<f64> = (0..r.random_range(2..8)).map(|_| r.random_range(-0.99..0.99)).collect();
        xs.sort_by(f64::total_cmp);
        xs.dedup();
        let k = r.random_range(0.0..4.0);
        let before = gb_bound_1d(&Cubic, &xs, &domain, k, 1e-5).expect("bound");
        let cells = voronoi_lengths_1d(&xs, &domain).expect("cells");
        let i = (0..cells.len()).max_by(|&a, &b| cells[a].total_cmp(&cells[b])).expect("cell");
        let lo = if i == 0 { -1.0 } else { 0.5 * (xs[i - 1] + xs[i]) };
        let hi = if i + 1 == xs.len() { 1.0 } else { 0.5 * (xs[i] + xs[i + 1]) };
        let x = if xs[i] - lo > hi - xs[i] { 0.5 * (lo + xs[i]) } else { 0.5 * (xs[i] + hi) };
        xs.push(x);
        xs.sort_by(f64::total_cmp);
        let after = gb_bound_1d(&Cubic, &xs, &domain, k, 1e-5).expect("bound");
        decreasing &= after < before;
    }
    Verdict::new(
        zero == 0.0 && decreasing,
        format!("constant bound {zero:e}; splits strictly decrease: {decreasing}"),
    )
}

fn c11_determinism() -> Verdict {
    let dir = tempfile::tempdir().expect("tempdir");
    let config = dir.path().join("tiny.toml");
    std::fs::write(&config, common::TINY_CONFIG).expect("write config");
    let mut differing = Vec::new();
    for sub in common::SUBCOMMANDS {
        let mut runs = Vec::new();
        for rep in 0..2 {
            let out = dir.path().join(format!("{sub}-{rep}"));
            let status = common::run_cli(&[
                sub,
                "--config",
                config.to_str().expect("utf-8 path"),
                "--seeds",
                "0,1",
                "--out",
                out.to_str().expect("utf-8 path"),
            ]);
            if !status.status.success() {
                return Verdict::new(false, format!("{sub} exited with {}", status.status));
            }
            runs.push(common::csv_files(&out));
        }
        if runs[0] != runs[1] || runs[0].is_empty() {
            differing.push(sub);
        }
    }
    Verdict::new(
        differing.is_empty(),
        if differing.is_empty() {
            "all 7 subcommands rerun byte-identical".into()
        } else {
            format!("differing outputs: {}", differing.join(", "))
        },
    )
}

fn main() {
    let checks: [(usize, &str, Check); 11] = [
        (1, "toy 1-D TBS vs BS", c1_toy_1d),
        (2, "perturbation variance oracle", c2_perturbation_variance),
        (3, "Taylor sensitivity closed form", c3_taylor_identity),
        (4, "weighted EM", c4_weighted_em),
        (5, "VBSW exactness", c5_vbsw_exact),
        (6, "VBSW double moon", c6_double_moon),
        (7, "gradient check", c7_gradient_check),
        (8, "Bateman solvers and desk run", c8_bateman),
        (9, "weighted vs duplicated training", c9_duplication),
        (10, "gb_bound_1d sanity", c10_gb_bound),
        (11, "CLI determinism", c11_determinism),
    ];
    let wanted: Vec<usize> = std::env::args()
        .skip(1)
        .filter_map(|a| a.parse().ok())
        .collect();
    let mut unexpected = 0;
    for (id, name, check) in checks {
        if !wanted.is_empty() && !wanted.contains(&id) {
            continue;
        }
        let start = Instant::now();
        let v = check();
        let secs = start.elapsed().as_secs_f64();
        let known = KNOWN_FAILURES.iter().find(|(k, _)| *k == id);
        let tag = match (v.pass, known) {
            (true, _) => "PASS",
            (false, Some(_)) if !v.hard_fail => "FAIL (known)",
            (false, _) => "FAIL",
        };
        println!("criterion {id:>2}: {tag:<12} {name} ({secs:.1}s): {}", v.detail);
        if let (false, Some((_, why))) = (v.pass, known) {
            println!("              known failure: {why}");
        }
        if !v.pass && (known.is_none() || v.hard_fail) {
            unexpected += 1;
        }
    }
    if unexpected > 0 {
        eprintln!("{unexpected} unexpected acceptance failure(s)");
        std::process::exit(1);
    }
}
