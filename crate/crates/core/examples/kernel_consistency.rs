//! Exhaustive local-consistency checks for the four chain builders, and
//! the first-order decay of the variance error.

use std::path::Path;

use regime_harvest::config::ExperimentConfig;

fn main() -> regime_harvest::Result<()> {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("configs");
    for name in ["fig1", "fig6", "fig7", "fig4"] {
        let cfg = ExperimentConfig::load(&dir.join(format!("{name}.cfg")))?;
        for scale in [1.0, 0.5] {
            let mut cfg = cfg.with_override("kernel.h", (cfg.kernel.h * scale).into())?;
            if let Some(h1) = cfg.kernel.h1 {
                cfg = cfg.with_override("kernel.h1", (h1 * scale * scale).into())?;
            }
            let report = cfg.build()?.check(1e-12)?;
            println!(
                "{:<17} h = {:<6} rows {:>9}  row sum {:.1e}  mean {:.1e}  variance {:.4} ({:.0}% of bound)  {}",
                report.formulation.as_str(),
                report.h,
                report.rows_checked,
                report.max_row_sum_error,
                report.max_first_moment_error,
                report.max_variance_error,
                100.0 * report.max_variance_ratio,
                if report.passed() { "ok" } else { "VIOLATED" }
            );
        }
    }
    Ok(())
}
