//! Seasonal growth and seasonal cost on the time cylinder. Grids are coarser
//! than the bundled configs so the example runs in a few seconds.

use std::path::Path;

use regime_harvest::config::ExperimentConfig;

fn main() -> regime_harvest::Result<()> {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("configs");
    for name in ["fig4", "fig8"] {
        let cfg = ExperimentConfig::load(&dir.join(format!("{name}.cfg")))?
            .with_override("kernel.h", 0.1.into())?
            .with_override("kernel.h1", (1.0 / 1000.0).into())?;
        let sol = cfg.build()?.solve()?;
        println!("{name} ({}): {} period sweeps", cfg.economics.cost, sol.report.iterations);
        for t in [0.0, 0.125, 0.25, 0.375, 0.5, 0.625, 0.75, 0.875] {
            let row: Vec<String> = [0.2, 0.5, 1.0, 1.5].iter().map(|&x| format!("{:>6.2}", sol.policy.nearest(t, x, 0))).collect();
            println!("  t = {t:.3}: u*(t, x, 1) at x = 0.2, 0.5, 1, 1.5 → {}", row.join(""));
        }
    }

    // A step that violates the stability bound is refused before solving.
    let too_coarse = ExperimentConfig::load(&dir.join("fig4.cfg"))?.with_override("kernel.h1", 0.0025.into())?;
    if let Err(e) = too_coarse.build()?.kernel() {
        println!("h1 = 0.0025 rejected: {e}");
    }
    Ok(())
}
