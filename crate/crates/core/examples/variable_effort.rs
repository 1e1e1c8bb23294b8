//! Harvesting a fraction of the stock, with a cost on the fraction. The
//! optimal effort is V-shaped in the population level.

use std::path::Path;

use regime_harvest::config::ExperimentConfig;
use regime_harvest::solver::classify_policy;

fn main() -> regime_harvest::Result<()> {
    let cfg = ExperimentConfig::load(&Path::new(env!("CARGO_MANIFEST_DIR")).join("configs/fig6.cfg"))?;
    let exp = cfg.build()?;
    let sol = exp.solve()?;
    let shapes = classify_policy(&sol.policy, &exp.controls);
    println!("policy shape per regime: {:?}", shapes.iter().map(|s| s.name()).collect::<Vec<_>>());
    println!("V(0, ·) = ({}, {})", sol.values.get(0, 0, 0), sol.values.get(0, 0, 1));

    let grid = *sol.policy.space().population();
    let line = sol.policy.line(0, 0);
    let (imin, umin) = line.iter().copied().enumerate().fold((0, f64::INFINITY), |a, (i, u)| if u < a.1 { (i, u) } else { a });
    println!("regime 1 effort is lowest ({umin}) at x = {:.2}", grid.point(imin));
    for x in [0.02, 0.1, 0.25, 0.5, 1.0, 2.0, 3.0, 4.0] {
        println!("x = {x:>4}: effort u = {:>6.2}, harvest u·x = {:>7.3}", sol.policy.nearest(0.0, x, 0), sol.policy.nearest(0.0, x, 0) * x);
    }
    Ok(())
}
