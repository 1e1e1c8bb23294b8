use serde::Serialize;

use super::{Policy, ValueFunction};
use crate::dynamics::{ModelSpec, SwitchingGenerator};
use crate::economics::{HarvestMode, PriceCostSpec};
use crate::grid::{ControlSet, StateSpace};

/// Shape of a one-dimensional policy `x ↦ u*(x, α)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "shape", rename_all = "snake_case")]
pub enum PolicyShape {
    /// Extreme controls only, switching once. A single lattice point at the
    /// switch may carry an intermediate value (the chain holds the population
    /// there with `u = b(x)`). `threshold` is the population level where the
    /// policy leaves its initial extreme.
    BangBang { threshold: Option<f64> },
    MonotoneStep { nondecreasing: bool },
    MonotoneContinuous { nondecreasing: bool },
    NonMonotone,
}

impl PolicyShape {
    pub fn is_bang_bang(&self) -> bool {
        matches!(self, PolicyShape::BangBang { .. })
    }

    pub fn threshold(&self) -> Option<f64> {
        match self {
            PolicyShape::BangBang { threshold } => *threshold,
            _ => None,
        }
    }

    pub fn is_monotone(&self) -> bool {
        !matches!(self, PolicyShape::NonMonotone)
    }

    pub fn name(&self) -> &'static str {
        match self {
            PolicyShape::BangBang { .. } => "bang_bang",
            PolicyShape::MonotoneStep { .. } => "monotone_step",
            PolicyShape::MonotoneContinuous { .. } => "monotone_continuous",
            PolicyShape::NonMonotone => "non_monotone",
        }
    }
}

/// Jumps larger than this fraction of the control range make a monotone
/// policy a step function.
const STEP_FRACTION: f64 = 0.1;

/// Classifies each regime's policy along the population axis.
pub fn classify_policy(policy: &Policy, controls: &ControlSet) -> Vec<PolicyShape> {
    let regimes = policy.space().regimes();
    (0..regimes).map(|k| classify_line(&policy.line(0, k), controls, policy.space())).collect()
}

fn classify_line(u: &[f64], controls: &ControlSet, space: &StateSpace) -> PolicyShape {
    let (lo, hi) = (controls.min(), controls.max());
    let up = u.windows(2).all(|w| w[1] >= w[0]);
    let down = u.windows(2).all(|w| w[1] <= w[0]);
    if !(up || down) {
        return PolicyShape::NonMonotone;
    }
    let intermediate = u.iter().filter(|&&v| v != lo && v != hi).count();
    if intermediate <= 1 && u.len() > intermediate {
        let threshold = u.iter().position(|&v| v != u[0]).map(|i| space.population().point(i));
        return PolicyShape::BangBang { threshold };
    }
    let jump = u.windows(2).map(|w| (w[1] - w[0]).abs()).fold(0.0, f64::max);
    if jump <= STEP_FRACTION * (hi - lo) {
        PolicyShape::MonotoneContinuous { nondecreasing: up }
    } else {
        PolicyShape::MonotoneStep { nondecreasing: up }
    }
}

/// HJB bracket at interior lattice points, indexed `[regime][i − 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct HjbResidual {
    pub x: Vec<f64>,
    pub residual: Vec<Vec<f64>>,
}

impl HjbResidual {
    /// `max |residual|` over points with `x` in `[from, to]`.
    pub fn max_abs_between(&self, from: f64, to: f64) -> f64 {
        let mut sup: f64 = 0.0;
        for r in &self.residual {
            for (x, v) in self.x.iter().zip(r) {
                if *x >= from && *x <= to {
                    sup = sup.max(v.abs());
                }
            }
        }
        sup
    }
}

/// `max_u [V′(b − u) + ½σ²V″ + Σ_k q_{αk} V(x, k) + p − δV]` with central
/// differences, for a time-homogeneous one-dimensional value function.
pub fn hjb_residual(
    value: &ValueFunction,
    model: &ModelSpec,
    gen: &SwitchingGenerator,
    pc: &PriceCostSpec,
    controls: &ControlSet,
    delta: f64,
) -> HjbResidual {
    let space = value.space();
    let grid = space.population();
    let h = grid.h();
    let m = space.regimes();
    let n = grid.len();
    let xs: Vec<f64> = (1..n.saturating_sub(1)).map(|i| grid.point(i)).collect();
    let residual = (0..m)
        .map(|k| {
            (1..n.saturating_sub(1))
                .map(|i| {
                    let x = grid.point(i);
                    let v = value.get(0, i, k);
                    let d1 = (value.get(0, i + 1, k) - value.get(0, i - 1, k)) / (2.0 * h);
                    let d2 = (value.get(0, i + 1, k) - 2.0 * v + value.get(0, i - 1, k)) / (h * h);
                    let b = model.drift(0.0, x, k);
                    let s2 = model.diffusion(0.0, x, k).powi(2);
                    let switching: f64 = (0..m).map(|l| gen.rate(k, l) * value.get(0, i, l)).sum();
                    let base = 0.5 * s2 * d2 + switching - delta * v;
                    controls
                        .values()
                        .iter()
                        .filter(|&&u| pc.cost().admits(u))
                        .map(|&u| {
                            let u_eff = match pc.mode() {
                                HarvestMode::Absolute => u,
                                HarvestMode::VariableEffort => u * x,
                            };
                            d1 * (b - u_eff) + pc.evaluate(0.0, x, k, u) + base
                        })
                        .fold(f64::NEG_INFINITY, f64::max)
                })
                .collect()
        })
        .collect();
    HjbResidual { x: xs, residual }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{catalog, ModelParams};
    use crate::economics::{catalog_cost, CostParams};
    use crate::grid::Grid1D;

    fn line(h: f64) -> StateSpace {
        StateSpace::Line { grid: Grid1D::new(h, 1.0).unwrap(), regimes: 1 }
    }

    fn policy(values: &[f64], controls: &ControlSet) -> Policy {
        let idx = values.iter().map(|v| controls.values().iter().position(|c| c == v).unwrap()).collect();
        Policy::new(line(1.0 / (values.len() - 1) as f64), controls.values().to_vec(), idx)
    }

    #[test]
    fn shapes() {
        let u = ControlSet::from_range(-2.0, 3.0, 0.25).unwrap();
        let bb = classify_policy(&policy(&[-2.0, -2.0, 3.0, 3.0, 3.0], &u), &u);
        assert_eq!(bb, vec![PolicyShape::BangBang { threshold: Some(0.5) }]);
        let smooth = classify_policy(&policy(&[-0.5, -0.25, 0.0, 0.25, 0.5], &u), &u);
        assert_eq!(smooth, vec![PolicyShape::MonotoneContinuous { nondecreasing: true }]);
        let held = classify_policy(&policy(&[-2.0, -2.0, 1.0, 3.0, 3.0], &u), &u);
        assert_eq!(held, vec![PolicyShape::BangBang { threshold: Some(0.5) }]);
        let step = classify_policy(&policy(&[0.0, 0.0, 2.0, 2.0, 2.0], &u), &u);
        assert_eq!(step, vec![PolicyShape::MonotoneStep { nondecreasing: true }]);
        let vee = classify_policy(&policy(&[0.5, 0.25, 0.0, 0.25, 0.5], &u), &u);
        assert_eq!(vee, vec![PolicyShape::NonMonotone]);
        let twice = classify_policy(&policy(&[-2.0, 3.0, -2.0, 3.0, 3.0], &u), &u);
        assert_eq!(twice, vec![PolicyShape::NonMonotone]);
    }

    #[test]
    fn residual_of_constants() {
        let model = catalog("verhulst", &ModelParams { mu: vec![3.0], ..Default::default() }).unwrap();
        let gen = SwitchingGenerator::single();
        let zero = PriceCostSpec::constant_price(
            vec![0.0],
            catalog_cost("zero", &CostParams::default()).unwrap(),
            HarvestMode::Absolute,
        );
        let controls = ControlSet::new(vec![0.0]).unwrap();
        let space = line(0.1);
        let r0 = hjb_residual(&ValueFunction::new(space, vec![0.0; 11]), &model, &gen, &zero, &controls, 0.02);
        assert!(r0.residual[0].iter().all(|&v| v == 0.0));
        let rc = hjb_residual(&ValueFunction::new(space, vec![5.0; 11]), &model, &gen, &zero, &controls, 0.02);
        assert!(rc.residual[0].iter().all(|&v| (v + 0.1).abs() < 1e-12));
    }
}
