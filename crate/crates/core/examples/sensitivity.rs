//! Taylor sensitivity of the Runge function on a grid, next to the
//! Monte Carlo variance it approximates.

use locvar::dataset::grid_sample;
use locvar::derivatives::{perturbation_variance, taylor_sensitivity, SensitivityConfig};
use locvar::functions::Runge;

fn main() -> locvar::error::Result<()> {
    let domain = Runge::domain();
    let xs = grid_sample(&domain, 9)?;
    let cfg = SensitivityConfig {
        epsilon: 1e-3,
        ..SensitivityConfig::default()
    };
    let scores = taylor_sensitivity(&Runge, &xs, &cfg)?;
    println!("{:>8} {:>12} {:>12}", "x", "Df^2", "MC var");
    for (x, s) in xs.column(0).iter().zip(&scores) {
        let mc = perturbation_variance(&Runge, &[*x], cfg.epsilon, 200_000, 7)?;
        println!("{x:>8.3} {s:>12.4e} {:>12.4e}", mc[0]);
    }
    Ok(())
}
