//! Weighted EM on a 2-D point cloud, then rejection sampling inside a box.

use locvar::dataset::{uniform_sample, DomainBox};
use locvar::gmm::{fit_weighted_em_traced, sample_truncated, EmConfig};

fn main() -> locvar::error::Result<()> {
    let domain = DomainBox::new(vec![0.0, 0.0], vec![1.0, 1.0])?;
    let points = uniform_sample(&domain, 500, 3)?;
    // weight points by closeness to two corners
    let weights: Vec<f64> = points
        .rows()
        .into_iter()
        .map(|r| (-20.0 * (r[0] * r[0] + r[1] * r[1])).exp() + (-20.0 * ((1.0 - r[0]).powi(2) + (1.0 - r[1]).powi(2))).exp())
        .collect();
    let cfg = EmConfig {
        n_components: 2,
        ..EmConfig::for_domain(2, &domain, 11)
    };
    let (model, trace) = fit_weighted_em_traced(&points, &weights, &cfg)?;
    println!("EM iterations: {}, converged: {}", trace.objective.len() - 1, trace.converged);
    for (w, mu) in model.weights().iter().zip(model.means()) {
        println!("weight {w:.3} mean ({:.3}, {:.3})", mu[0], mu[1]);
    }
    let draws = sample_truncated(&model, 1000, &domain, 5, 1000)?;
    let inside = draws.rows().into_iter().all(|r| domain.contains(r.as_slice().unwrap()));
    println!("1000 truncated draws, all inside the box: {inside}");
    Ok(())
}
