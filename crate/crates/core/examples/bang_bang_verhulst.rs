//! Linear reward on the two-regime Verhulst model gives a threshold policy:
//! stock at full rate below a regime-dependent level, harvest at full rate
//! above it.

use regime_harvest::dynamics::{catalog, ModelParams, SwitchingGenerator};
use regime_harvest::economics::{catalog_cost, CostParams, HarvestMode, PriceCostSpec};
use regime_harvest::grid::{ControlSet, Grid1D};
use regime_harvest::kernel::build_baseline;
use regime_harvest::solver::{classify_policy, value_iteration, SolverOptions};

fn main() -> regime_harvest::Result<()> {
    let model = catalog("verhulst", &ModelParams { mu: vec![3.0, 2.0], ..Default::default() })?;
    let gen = SwitchingGenerator::symmetric(0.1)?;
    let controls = ControlSet::from_range(-2.0, 3.0, 0.01)?;
    let kernel = build_baseline(&model, &gen, Grid1D::new(0.02, 4.0)?, controls.clone())?;
    let pc = PriceCostSpec::constant_price(vec![1.0], catalog_cost("zero", &CostParams::default())?, HarvestMode::Absolute);

    let sol = value_iteration(&kernel, &pc, 0.02, &SolverOptions::default())?;
    println!(
        "converged in {} sweeps ({} policy evaluations), sup change {:.2e}, {:.2?}",
        sol.report.iterations, sol.report.policy_evaluations, sol.report.final_sup_change, sol.report.wall_time
    );
    for (k, shape) in classify_policy(&sol.policy, &controls).iter().enumerate() {
        println!("regime {}: {shape:?}", k + 1);
    }
    for x in [0.0, 0.5, 1.0, 2.0, 4.0] {
        println!(
            "x = {x:.1}: V = ({:.4}, {:.4})  u* = ({}, {})",
            sol.values.nearest(0.0, x, 0),
            sol.values.nearest(0.0, x, 1),
            sol.policy.nearest(0.0, x, 0),
            sol.policy.nearest(0.0, x, 1)
        );
    }
    Ok(())
}
