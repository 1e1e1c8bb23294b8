//! Growth rates, the stationary law of the environment and the averaged
//! model for the two-regime Verhulst set-up.

use regime_harvest::dynamics::{
    averaged_model, catalog, persistence_criterion, stationary_distribution, stochastic_growth_rate, ModelParams,
    SwitchingGenerator,
};

fn main() -> regime_harvest::Result<()> {
    let model = catalog("verhulst", &ModelParams { mu: vec![3.0, 2.0], ..Default::default() })?;
    let gen = SwitchingGenerator::new(vec![vec![-0.1, 0.1], vec![0.3, -0.3]])?;

    for k in 0..model.regimes() {
        println!("regime {}: r = μ − σ²/2 = {:.3}", k + 1, stochastic_growth_rate(&model, k)?);
    }
    let nu = stationary_distribution(&gen)?;
    println!("stationary distribution ν = {nu:.4?}");
    println!("persistence criterion Σ ν_k r(k) = {:.4}", persistence_criterion(&model, &gen)?);

    // Infinitely fast switching replaces the drift by its ν-average.
    let avg = averaged_model(&model, &gen)?;
    for x in [0.5, 1.0, 1.5] {
        let mixed: f64 = (0..2).map(|k| nu[k] * model.drift(0.0, x, k)).sum();
        println!("x = {x}: averaged drift {:.4} (direct mix {mixed:.4})", avg.drift(0.0, x, 0));
    }
    Ok(())
}
