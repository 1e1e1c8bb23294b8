//! The policy shape under different harvesting costs, and for two other
//! growth laws with quadratic cost.

use std::path::Path;

use regime_harvest::config::ExperimentConfig;
use regime_harvest::solver::classify_policy;

fn main() -> regime_harvest::Result<()> {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("configs");
    for name in ["fig1", "cost_abs", "cost_sqrt", "cost_log", "fig2", "gompertz", "nisbet"] {
        let cfg = ExperimentConfig::load(&dir.join(format!("{name}.cfg")))?;
        let exp = cfg.build()?;
        let sol = exp.solve()?;
        let shapes: Vec<String> = classify_policy(&sol.policy, &exp.controls)
            .iter()
            .map(|s| match s.threshold() {
                Some(t) => format!("{} at {t}", s.name()),
                None => s.name().to_string(),
            })
            .collect();
        println!(
            "{:<14} {:<19} cost {:<10} V(1, 1) = {:>8.4}  {}",
            cfg.name(),
            exp.model.name(),
            exp.pc.cost().name(),
            sol.values.nearest(0.0, 1.0, 0),
            shapes.join(" / ")
        );
    }
    Ok(())
}
