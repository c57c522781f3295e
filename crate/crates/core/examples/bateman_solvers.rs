//! Closed-form versus explicit Euler on the one-species Bateman system,
//! with the observed convergence order.

use locvar::bateman::{analytic_solve, euler_solve, BatemanParams};

fn main() -> locvar::error::Result<()> {
    let p = BatemanParams::default();
    let (u0, eta0, t) = (0.8, 0.3, 10.0);
    let (ua, ea) = analytic_solve(&p, u0, eta0, t)?;
    println!("closed form at t={t}: u = {ua:.10}, eta = {ea:.10}");
    let mut prev: Option<f64> = None;
    for dt in [1e-2, 5e-3, 2.5e-3, 1.25e-3] {
        let (ue, ee) = euler_solve(&p, u0, eta0, t, dt)?;
        let err = (ue - ua).abs().max((ee - ea).abs());
        let order = prev.map(|e| (e / err).log2());
        match order {
            Some(o) => println!("dt {dt:.2e}: error {err:.3e}, order {o:.3}"),
            None => println!("dt {dt:.2e}: error {err:.3e}"),
        }
        println!("    u - eta = {:.16} (initial {:.16})", ue - ee, u0 - eta0);
        prev = Some(err);
    }
    Ok(())
}
