//! Local-variance weights on the double moon and a baseline versus weighted
//! training comparison over a few seeds.

use locvar::experiments::{run_vbsw_toy, VbswToyConfig};

fn main() -> locvar::error::Result<()> {
    let cfg = VbswToyConfig::default();
    let out = run_vbsw_toy(&cfg, &[0, 1, 2], None)?;
    for s in &out.summaries {
        let acc = &s.stats["accuracy"];
        println!("{:<9} accuracy {:.4} +- {:.4} (best {:.4})", s.arm, acc.mean, acc.ci95, acc.max);
    }
    let weights = &out.files["weights.csv"];
    let heavy = weights.lines().skip(1).filter(|l| l.starts_with("0,")).filter_map(|l| l.rsplit(',').next()?.parse::<f64>().ok());
    let w: Vec<f64> = heavy.collect();
    let lo = w.iter().copied().fold(f64::INFINITY, f64::min);
    println!("seed 0: {} of {} points above the minimum weight", w.iter().filter(|v| **v > lo).count(), w.len());
    Ok(())
}
