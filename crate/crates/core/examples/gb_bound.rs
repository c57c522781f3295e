//! The 1-D generalization bound for f(x) = x^3 as a design is refined by
//! splitting its largest cell.

use locvar::dataset::DomainBox;
use locvar::derivatives::{gb_bound_1d, voronoi_lengths_1d};
use locvar::functions::Cubic;

fn main() -> locvar::error::Result<()> {
    let domain = DomainBox::interval(-1.0, 1.0)?;
    let mut xs = vec![-0.9, -0.2, 0.5];
    for _ in 0..6 {
        let bound = gb_bound_1d(&Cubic, &xs, &domain, 3.0, 1e-5)?;
        println!("{} points: bound {bound:.5e}", xs.len());
        let cells = voronoi_lengths_1d(&xs, &domain)?;
        let (i, _) = cells.iter().enumerate().fold((0, 0.0), |b, (i, c)| if *c > b.1 { (i, *c) } else { b });
        // insert a point at the far edge midpoint of the widest cell
        let lo = if i == 0 { -1.0 } else { 0.5 * (xs[i - 1] + xs[i]) };
        let hi = if i + 1 == xs.len() { 1.0 } else { 0.5 * (xs[i] + xs[i + 1]) };
        let x = if xs[i] - lo > hi - xs[i] { 0.5 * (lo + xs[i]) } else { 0.5 * (xs[i] + hi) };
        xs.push(x);
        xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    }
    Ok(())
}
