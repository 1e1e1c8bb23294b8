//! A logistic price premium φ on top of the unit price. Each column is the
//! regime-1 policy at one population level as the premium rises.

use std::path::Path;

use regime_harvest::config::ExperimentConfig;

fn main() -> regime_harvest::Result<()> {
    let cfg = ExperimentConfig::load(&Path::new(env!("CARGO_MANIFEST_DIR")).join("configs/fig7.cfg"))?;
    let sol = cfg.build()?.solve()?;
    println!("{} sweeps, {} nodes", sol.report.iterations, sol.values.space().node_count());

    let xs = [0.1, 0.2, 0.4, 0.8, 1.5, 3.0];
    print!("{:>6}", "φ \\ x");
    for x in xs {
        print!("{x:>7}");
    }
    println!();
    for phi in [0.0, 0.04, 0.1, 0.2, 0.3, 0.4] {
        print!("{phi:>6.2}");
        for x in xs {
            print!("{:>7.2}", sol.policy.nearest(phi, x, 0));
        }
        println!();
    }
    Ok(())
}
