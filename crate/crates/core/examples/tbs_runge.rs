//! Taylor based sampling on the Runge function: where the added points land
//! compared with uniform ones.

use locvar::dataset::grid_sample;
use locvar::functions::Runge;
use locvar::tbs::{baseline_augment_from, label_with, tbs_augment_from, InitialDesign, TbsConfig};

fn main() -> locvar::error::Result<()> {
    let domain = Runge::domain();
    let cfg = TbsConfig {
        n: 8,
        n_prime: 200,
        n_gmm: 3,
        epsilon: 1e-3,
        initial_design: InitialDesign::Grid,
        reg_floor: Some((1.0f64 / 7.0).powi(2)),
        seed: 1,
        ..TbsConfig::default()
    };
    let init = label_with(&Runge, grid_sample(&domain, cfg.n)?, &domain)?;
    let tbs = tbs_augment_from(&Runge, init.clone(), &cfg)?;
    let bs = baseline_augment_from(&Runge, init, &cfg)?;
    let central = |a: &locvar::tbs::Augmented| {
        let added = a.dataset.points().column(0).iter().skip(a.n_original).copied().collect::<Vec<_>>();
        added.iter().filter(|x| x.abs() < 0.3).count() as f64 / added.len() as f64
    };
    println!("added points with |x| < 0.3: tbs {:.2}, uniform {:.2}", central(&tbs), central(&bs));
    if let Some(m) = &tbs.mixture {
        for (w, mu) in m.weights().iter().zip(m.means()) {
            println!("component weight {w:.3} mean {:+.3}", mu[0]);
        }
    }
    Ok(())
}
