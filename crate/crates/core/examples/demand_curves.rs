//! A price that falls with the quantity sold removes the incentive to
//! harvest at full rate, even with free harvesting.

use regime_harvest::dynamics::{catalog, ModelParams, SwitchingGenerator};
use regime_harvest::economics::{catalog_cost, demand_price, CostParams, DemandForm, HarvestMode, PriceCostSpec};
use regime_harvest::grid::{ControlSet, Grid1D};
use regime_harvest::kernel::build_baseline;
use regime_harvest::solver::{classify_policy, value_iteration, SolverOptions};

fn main() -> regime_harvest::Result<()> {
    let model = catalog("verhulst", &ModelParams { mu: vec![2.5], ..Default::default() })?;
    let controls = ControlSet::from_range(-2.0, 3.0, 0.01)?;
    let kernel = build_baseline(&model, &SwitchingGenerator::single(), Grid1D::new(0.02, 4.0)?, controls.clone())?;
    let forms = [
        ("linear 1 − u/4", DemandForm::Linear { k1: 1.0, k2: 0.25, cap: 10.0 }),
        ("iso-elastic (1 + u/3)^−1", DemandForm::NormalizedIsoElastic { k2: 3.0, elasticity: -1.0, cap: 10.0 }),
    ];

    for (label, form) in forms {
        let prices: Vec<String> = [-1.0, 0.0, 1.0, 2.0, 3.0].iter().map(|&u| format!("{:.3}", demand_price(&form, u))).collect();
        println!("{label}: P(u) at u = −1, 0, 1, 2, 3 → {}", prices.join(", "));
        let pc = PriceCostSpec::demand(form, catalog_cost("zero", &CostParams::default())?, HarvestMode::Absolute);
        let sol = value_iteration(&kernel, &pc, 0.02, &SolverOptions::default())?;
        let shape = classify_policy(&sol.policy, &controls)[0];
        let sample: Vec<String> = [0.25, 0.5, 1.0, 1.5, 2.0, 3.0]
            .iter()
            .map(|&x| format!("{:.2}", sol.policy.nearest(0.0, x, 0)))
            .collect();
        println!("  policy is {}; u*(x) at x = 0.25, 0.5, 1, 1.5, 2, 3 → {}", shape.name(), sample.join(", "));
    }
    Ok(())
}
