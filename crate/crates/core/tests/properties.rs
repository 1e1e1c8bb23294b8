use proptest::prelude::*;

use regime_harvest::dynamics::{catalog, ModelParams, SwitchingGenerator};
use regime_harvest::grid::{ControlSet, Grid1D, NodeCoords};
use regime_harvest::kernel::{build_baseline, build_variable_effort, TransitionKernel};
use regime_harvest::solver::{value_iteration_with, Solution, SolverOptions};

fn kernel(mu: f64, sigma: f64, q: f64, h: f64) -> TransitionKernel {
    let model = catalog(
        "verhulst",
        &ModelParams { mu: vec![mu, mu / 2.0], sigma: Some(vec![sigma]), ..Default::default() },
    )
    .unwrap();
    let gen = SwitchingGenerator::symmetric(q).unwrap();
    let controls = ControlSet::from_range(-1.0, 2.0, 0.5).unwrap();
    build_baseline(&model, &gen, Grid1D::new(h, 2.0).unwrap(), controls).unwrap()
}

fn solve(k: &TransitionKernel, reward: impl Fn(&NodeCoords, f64) -> Option<f64> + Sync) -> Solution {
    let opts = SolverOptions { tolerance: 1e-11, ..Default::default() };
    value_iteration_with(k, &reward, 0.05, &opts).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn admissible_rows_are_distributions(
        mu in 0.5..4.0_f64,
        sigma in 0.0..1.5_f64,
        q in 0.0..5.0_f64,
        h in prop::sample::select(vec![0.05, 0.1, 0.25]),
        effort in any::<bool>(),
    ) {
        let model = catalog("verhulst", &ModelParams { mu: vec![mu, 1.0], sigma: Some(vec![sigma]), ..Default::default() }).unwrap();
        let gen = SwitchingGenerator::symmetric(q).unwrap();
        let controls = ControlSet::from_range(-2.0, 3.0, 0.25).unwrap();
        let grid = Grid1D::new(h, 4.0).unwrap();
        let k = if effort {
            build_variable_effort(&model, &gen, grid, controls).unwrap()
        } else {
            build_baseline(&model, &gen, grid, controls).unwrap()
        };
        for node in 0..k.node_count() {
            for c in 0..k.controls().len() {
                if !k.is_admissible(node, c) {
                    continue;
                }
                let row = k.row(node, c);
                prop_assert!(row.dt > 0.0);
                prop_assert!(row.probs.iter().all(|&p| (0.0..=1.0).contains(&p)));
                prop_assert!((row.probs.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn larger_rewards_give_larger_values(
        mu in 1.0..3.0_f64,
        a in -1.0..2.0_f64,
        b in 0.0..1.0_f64,
        bump in 0.0..0.5_f64,
    ) {
        let k = kernel(mu, 1.0, 0.2, 0.25);
        let low = solve(&k, |_: &NodeCoords, u: f64| Some(a * u - b * u * u));
        let high = solve(&k, |c: &NodeCoords, u: f64| Some(a * u - b * u * u + bump * c.x));
        for (l, h) in low.values.values().iter().zip(high.values.values()) {
            prop_assert!(h - l >= -1e-8, "{h} < {l}");
        }
    }

    #[test]
    fn values_scale_with_the_reward(
        mu in 1.0..3.0_f64,
        a in -1.0..2.0_f64,
        lambda in 0.1..10.0_f64,
    ) {
        let k = kernel(mu, 0.8, 0.5, 0.25);
        let base = solve(&k, |_: &NodeCoords, u: f64| Some(a * u - 0.5 * u * u));
        let scaled = solve(&k, |_: &NodeCoords, u: f64| Some(lambda * (a * u - 0.5 * u * u)));
        let scale = base.values.sup_norm().max(1.0);
        for (v, w) in base.values.values().iter().zip(scaled.values.values()) {
            prop_assert!((lambda * v - w).abs() <= 1e-7 * lambda * scale, "{} vs {w}", lambda * v);
        }
        prop_assert_eq!(base.policy.indices(), scaled.policy.indices());
    }
}
