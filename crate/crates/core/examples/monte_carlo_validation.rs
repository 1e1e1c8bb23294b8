//! Simulates the computed policy and two constant policies from the starting
//! states of `configs/fig1.cfg`, next to the chain value at h and its extrapolation.
//! Pass a path count as the first argument (default 500).

use std::path::Path;

use regime_harvest::config::ExperimentConfig;
use regime_harvest::montecarlo::{ConstantControl, SimConfig};

fn main() -> regime_harvest::Result<()> {
    let paths = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(500);
    let cfg = ExperimentConfig::load(&Path::new(env!("CARGO_MANIFEST_DIR")).join("configs/fig1.cfg"))?;
    let exp = cfg.build()?;
    let sol = exp.solve()?;
    let fine = cfg.with_override("kernel.h", 0.01.into())?.build()?.solve()?;
    let sim = exp.simulator()?;
    let mc = cfg.montecarlo.clone().unwrap_or_default();
    let sim_cfg = SimConfig { paths, ..mc.config() };

    for &(x0, regime) in &mc.starts {
        let k = regime - 1;
        let v = sol.values.nearest(0.0, x0, k);
        let extrapolated = 2.0 * fine.values.nearest(0.0, x0, k) - v;
        let est = sim.estimate_value(&sol.policy, x0, 0.0, k, &sim_cfg)?;
        println!(
            "({x0}, {regime}): J = {:.3} ± {:.3}   V_h = {v:.3}   2V_h/2 − V_h = {extrapolated:.3}   agrees with V_h: {}",
            est.mean,
            est.std_error,
            est.agrees_with(v, 0.05)
        );
        for u in [0.0, exp.controls.max()] {
            let other = sim.estimate_value(&ConstantControl(u), x0, 0.0, k, &sim_cfg)?;
            println!("    u ≡ {u}: {:.3} ± {:.3}, dominated: {}", other.mean, other.std_error, est.dominates(&other));
        }
    }
    Ok(())
}
