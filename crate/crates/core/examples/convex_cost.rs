//! Quadratic harvesting cost smooths the threshold policy. The favourable
//! regime stocks harder at low population and harvests harder above it.

use std::path::Path;

use regime_harvest::config::ExperimentConfig;
use regime_harvest::solver::{classify_policy, hjb_residual};

fn main() -> regime_harvest::Result<()> {
    let cfg = ExperimentConfig::load(&Path::new(env!("CARGO_MANIFEST_DIR")).join("configs/fig2.cfg"))?;
    let exp = cfg.build()?;
    let sol = exp.solve()?;

    println!("{}", cfg.header());
    for (k, shape) in classify_policy(&sol.policy, &exp.controls).iter().enumerate() {
        println!("regime {}: {}", k + 1, shape.name());
    }
    println!("{:>5} {:>9} {:>9} {:>7} {:>7}", "x", "V(x,1)", "V(x,2)", "u(x,1)", "u(x,2)");
    for x in [0.0, 0.1, 0.2, 0.4, 0.8, 1.2, 2.0, 3.0] {
        println!(
            "{x:>5.2} {:>9.4} {:>9.4} {:>7.2} {:>7.2}",
            sol.values.nearest(0.0, x, 0),
            sol.values.nearest(0.0, x, 1),
            sol.policy.nearest(0.0, x, 0),
            sol.policy.nearest(0.0, x, 1)
        );
    }

    let residual = hjb_residual(&sol.values, &exp.model, &exp.gen, &exp.pc, &exp.controls, exp.delta);
    println!("HJB residual on [0.5, 3.5]: {:.3e}", residual.max_abs_between(0.5, 3.5));
    Ok(())
}
