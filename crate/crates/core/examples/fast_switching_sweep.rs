//! As the switching rate grows, the value function approaches the one of
//! the averaged single-regime model.

use std::path::Path;

use regime_harvest::cli::sup_gap;
use regime_harvest::config::ExperimentConfig;

fn main() -> regime_harvest::Result<()> {
    let cfg = ExperimentConfig::load(&Path::new(env!("CARGO_MANIFEST_DIR")).join("configs/fig3.cfg"))?;
    let limit = cfg.with_override("dynamics.switching_rate", f64::INFINITY.into())?.build()?.solve()?;

    for q in [0.0, 0.01, 0.1, 1.0, 10.0, 100.0] {
        let sol = cfg.with_override("dynamics.switching_rate", q.into())?.build()?.solve()?;
        println!(
            "q = {q:>6}: sup |V_q − V_avg| = {:.4e}   V(1, ·) = ({:.4}, {:.4})",
            sup_gap(&sol.values, &limit.values)?,
            sol.values.nearest(0.0, 1.0, 0),
            sol.values.nearest(0.0, 1.0, 1)
        );
    }
    println!("averaged model:           V(1) = {:.4}", limit.values.nearest(0.0, 1.0, 0));
    Ok(())
}
