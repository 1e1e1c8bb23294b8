//! Discounted dynamic programming on the approximating chains.

mod banded;
mod diagnostics;
mod output;
mod periodic;

pub use diagnostics::{classify_policy, hjb_residual, HjbResidual, PolicyShape};
pub use output::write_solution_csv;
pub use periodic::solve_periodic;

use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::economics::{HarvestMode, PriceCostSpec};
use crate::error::{Error, Result};
use crate::grid::{NodeCoords, StateSpace};
use crate::kernel::{describe, Formulation, TransitionKernel};
use banded::BandMatrix;

/// Candidates within this relative distance of the best value count as
/// ties and are resolved by control preference.
pub const TIE_EPSILON: f64 = 1e-12;

/// Reward rate `p` at a node under a control; `None` marks the control as
/// inadmissible there.
pub type RewardFn<'a> = dyn Fn(&NodeCoords, f64) -> Option<f64> + Sync + 'a;

/// How the fixed point of the Bellman operator is reached.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Acceleration {
    /// Plain synchronous sweeps `V_{n+1} = T(V_n)`.
    None,
    /// After each sweep, replace `V` by the exact value of the greedy
    /// policy. Stopping still uses the sweep residual `sup |T(V) − V|`.
    #[default]
    PolicyEvaluation,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverOptions {
    pub tolerance: f64,
    pub max_iterations: usize,
    pub acceleration: Acceleration,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self { tolerance: 1e-8, max_iterations: 1_000_000, acceleration: Acceleration::PolicyEvaluation }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValueFunction {
    space: StateSpace,
    values: Vec<f64>,
}

impl ValueFunction {
    pub fn new(space: StateSpace, values: Vec<f64>) -> Self {
        assert_eq!(values.len(), space.node_count());
        Self { space, values }
    }

    pub fn space(&self) -> &StateSpace {
        &self.space
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn at(&self, node: usize) -> f64 {
        self.values[node]
    }

    /// Value at (first-axis index, population index, regime).
    pub fn get(&self, j: usize, i: usize, k: usize) -> f64 {
        self.values[self.space.node(j, i, k)]
    }

    /// Value at the lattice point nearest to the given state.
    pub fn nearest(&self, axis1: f64, x: f64, regime: usize) -> f64 {
        self.values[self.space.nearest(axis1, x, regime)]
    }

    /// Values along the population axis for a fixed first-axis index and
    /// regime.
    pub fn line(&self, j: usize, k: usize) -> Vec<f64> {
        (0..self.space.population().len()).map(|i| self.get(j, i, k)).collect()
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |a, v| a.max(v.abs()))
    }

    /// `sup |self − other|` over a common state space.
    pub fn sup_distance(&self, other: &ValueFunction) -> f64 {
        assert_eq!(self.values.len(), other.values.len());
        self.values.iter().zip(&other.values).fold(0.0, |a, (x, y)| a.max((x - y).abs()))
    }
}

/// Maximizing control per node, stored as indices into the control set.
#[derive(Debug, Clone, PartialEq)]
pub struct Policy {
    space: StateSpace,
    controls: Vec<f64>,
    choice: Vec<usize>,
}

impl Policy {
    pub fn new(space: StateSpace, controls: Vec<f64>, choice: Vec<usize>) -> Self {
        assert_eq!(choice.len(), space.node_count());
        Self { space, controls, choice }
    }

    pub fn space(&self) -> &StateSpace {
        &self.space
    }

    pub fn control_values(&self) -> &[f64] {
        &self.controls
    }

    pub fn indices(&self) -> &[usize] {
        &self.choice
    }

    pub fn at(&self, node: usize) -> f64 {
        self.controls[self.choice[node]]
    }

    pub fn get(&self, j: usize, i: usize, k: usize) -> f64 {
        self.at(self.space.node(j, i, k))
    }

    pub fn nearest(&self, axis1: f64, x: f64, regime: usize) -> f64 {
        self.at(self.space.nearest(axis1, x, regime))
    }

    pub fn line(&self, j: usize, k: usize) -> Vec<f64> {
        (0..self.space.population().len()).map(|i| self.get(j, i, k)).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolveReport {
    /// Bellman sweeps (outer period sweeps for the periodic solver).
    pub iterations: usize,
    pub policy_evaluations: usize,
    pub final_sup_change: f64,
    pub tolerance: f64,
    pub acceleration: Acceleration,
    #[serde(with = "secs")]
    pub wall_time: Duration,
    /// Sup change after each sweep.
    pub history: Vec<f64>,
}

mod secs {
    use serde::Serializer;
    use std::time::Duration;

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_f64(d.as_secs_f64())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub values: ValueFunction,
    pub policy: Policy,
    pub report: SolveReport,
}

/// Reward rate of a price-cost spec for a given formulation. On the price
/// plane the price state adds `φ·u` (or `φ·x·u` under variable effort);
/// on the time cylinder the first coordinate is the time.
pub fn pricecost_reward(formulation: Formulation, pc: &PriceCostSpec) -> impl Fn(&NodeCoords, f64) -> Option<f64> + Sync + '_ {
    move |c: &NodeCoords, u: f64| {
        let t = if formulation == Formulation::Periodic { c.axis1.unwrap_or(0.0) } else { 0.0 };
        let base = pc.try_evaluate(t, c.x, c.regime, u).ok()?;
        if formulation == Formulation::StochasticPrice {
            let phi = c.axis1.unwrap_or(0.0);
            let extra = match pc.mode() {
                HarvestMode::Absolute => phi * u,
                HarvestMode::VariableEffort => phi * c.x * u,
            };
            Some(base + extra)
        } else {
            Some(base)
        }
    }
}

/// Value iteration for a price-cost spec.
pub fn value_iteration(kernel: &TransitionKernel, pc: &PriceCostSpec, delta: f64, opts: &SolverOptions) -> Result<Solution> {
    let reward = pricecost_reward(kernel.formulation(), pc);
    value_iteration_with(kernel, &reward, delta, opts)
}

/// Picks the preferred control among those within [`TIE_EPSILON`] of the
/// best candidate value.
#[inline]
pub(crate) fn select(candidates: &[f64], preference: &[usize]) -> Option<(usize, f64)> {
    let best = candidates.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if best == f64::NEG_INFINITY {
        return None;
    }
    let floor = best - TIE_EPSILON * best.abs().max(1.0);
    preference.iter().map(|&c| (c, candidates[c])).find(|&(_, v)| v >= floor)
}

struct Prepared {
    /// `e^{−δΔt}` per row; negative marks an inadmissible row.
    discount: Vec<f64>,
    /// `p·Δt` per row.
    reward: Vec<f64>,
}

fn prepare(kernel: &TransitionKernel, reward: &RewardFn<'_>, delta: f64) -> Result<Prepared> {
    let nc = kernel.controls().len();
    let n = kernel.node_count();
    let mut discount = vec![-1.0; n * nc];
    let mut gain = vec![0.0; n * nc];
    let failures: Vec<Error> = discount
        .par_chunks_mut(nc)
        .zip(gain.par_chunks_mut(nc))
        .enumerate()
        .filter_map(|(node, (disc, gain))| {
            let coords = kernel.coords(node);
            let mut any = false;
            for c in 0..nc {
                if !kernel.is_admissible(node, c) {
                    continue;
                }
                let dt = kernel.row(node, c).dt;
                if !(dt > 0.0 && dt.is_finite()) {
                    return Some(Error::NonContraction(format!("Δt = {dt} at {}", describe(kernel.space(), node))));
                }
                let Some(p) = reward(&coords, kernel.controls().get(c)) else { continue };
                if !p.is_finite() {
                    return Some(Error::InvalidParams(format!(
                        "reward is not finite at {} with u = {}",
                        describe(kernel.space(), node),
                        kernel.controls().get(c)
                    )));
                }
                disc[c] = (-delta * dt).exp();
                gain[c] = p * dt;
                any = true;
            }
            (!any).then(|| Error::EmptyAdmissibleSet { state: describe(kernel.space(), node) })
        })
        .collect();
    match failures.into_iter().next() {
        Some(e) => Err(e),
        None => Ok(Prepared { discount, reward: gain }),
    }
}

/// One synchronous Bellman sweep. Returns `sup |T(V) − V|`.
fn sweep(kernel: &TransitionKernel, prep: &Prepared, v: &[f64], out: &mut [f64], choice: &mut [usize]) -> f64 {
    let nc = kernel.controls().len();
    let preference = kernel.controls().preference();
    out.par_iter_mut()
        .zip(choice.par_iter_mut())
        .enumerate()
        .with_min_len(64)
        .map_init(
            || vec![f64::NEG_INFINITY; nc],
            |cand, (node, (slot, pick))| {
                for c in 0..nc {
                    let r = node * nc + c;
                    cand[c] = if prep.discount[r] < 0.0 {
                        f64::NEG_INFINITY
                    } else {
                        prep.reward[r] + prep.discount[r] * kernel.row(node, c).expect(v)
                    };
                }
                let (c, val) = select(cand, preference).expect("admissible control");
                *slot = val;
                *pick = c;
                (val - v[node]).abs()
            },
        )
        .reduce(|| 0.0, f64::max)
}

/// Bandwidths of the kernel's nonzero pattern over admissible rows.
fn bandwidth(kernel: &TransitionKernel) -> (usize, usize) {
    let (mut lower, mut upper) = (0, 0);
    for node in 0..kernel.node_count() {
        for c in 0..kernel.controls().len() {
            if !kernel.is_admissible(node, c) {
                continue;
            }
            let row = kernel.row(node, c);
            for (&t, &p) in row.targets.iter().zip(row.probs) {
                if p != 0.0 {
                    let t = t as usize;
                    lower = lower.max(node.saturating_sub(t));
                    upper = upper.max(t.saturating_sub(node));
                }
            }
        }
    }
    (lower, upper)
}

/// Exact value of a stationary policy by solving `(I − D P) V = r`.
fn evaluate_policy(kernel: &TransitionKernel, prep: &Prepared, choice: &[usize], matrix: &mut BandMatrix) -> Option<Vec<f64>> {
    let nc = kernel.controls().len();
    matrix.clear();
    let mut rhs = vec![0.0; kernel.node_count()];
    for (node, &c) in choice.iter().enumerate() {
        let r = node * nc + c;
        matrix.add(node, node, 1.0);
        let row = kernel.row(node, c);
        for (&t, &p) in row.targets.iter().zip(row.probs) {
            if p != 0.0 {
                matrix.add(node, t as usize, -prep.discount[r] * p);
            }
        }
        rhs[node] = prep.reward[r];
    }
    if !matrix.factor() {
        return None;
    }
    matrix.solve(&mut rhs);
    rhs.iter().all(|v| v.is_finite()).then_some(rhs)
}

/// Band storage above this many entries disables policy evaluation.
const MAX_BAND_ENTRIES: usize = 400_000_000;

/// Discounted value iteration from `V₀ ≡ 0` with an arbitrary reward rate.
///
/// Each sweep computes `T(V)(s) = max_u [p Δt + e^{−δΔt} Σ q V]` for every
/// node from the previous iterate. The loop stops once
/// `sup |T(V) − V| ≤ tolerance` and returns `T(V)` with its maximizers.
pub fn value_iteration_with(
    kernel: &TransitionKernel,
    reward: &RewardFn<'_>,
    delta: f64,
    opts: &SolverOptions,
) -> Result<Solution> {
    if !(delta > 0.0 && delta.is_finite()) {
        return Err(Error::InvalidParams(format!("discount rate must be positive, got {delta}")));
    }
    let start = Instant::now();
    let prep = prepare(kernel, reward, delta)?;
    let n = kernel.node_count();
    let space = *kernel.space();

    let mut matrix = match opts.acceleration {
        Acceleration::PolicyEvaluation => {
            let (lower, upper) = bandwidth(kernel);
            let entries = n.saturating_mul(lower + upper + 1);
            (entries <= MAX_BAND_ENTRIES).then(|| BandMatrix::zeros(n, lower, upper))
        }
        Acceleration::None => None,
    };

    let mut v = vec![0.0; n];
    let mut next = vec![0.0; n];
    let mut choice = vec![kernel.controls().zero_index(); n];
    let mut evaluated: Option<Vec<usize>> = None;
    let mut history = Vec::new();
    let mut evaluations = 0;

    loop {
        let change = sweep(kernel, &prep, &v, &mut next, &mut choice);
        history.push(change);
        let report = |history: &Vec<f64>| SolveReport {
            iterations: history.len(),
            policy_evaluations: evaluations,
            final_sup_change: change,
            tolerance: opts.tolerance,
            acceleration: opts.acceleration,
            wall_time: start.elapsed(),
            history: history.clone(),
        };
        if !change.is_finite() {
            return Err(Error::NonContraction(format!("sweep {} produced a non-finite change", history.len())));
        }
        if change <= opts.tolerance {
            return Ok(Solution {
                values: ValueFunction::new(space, next),
                policy: Policy::new(space, kernel.controls().values().to_vec(), choice),
                report: report(&history),
            });
        }
        if history.len() >= opts.max_iterations {
            let partial = Solution {
                values: ValueFunction::new(space, next),
                policy: Policy::new(space, kernel.controls().values().to_vec(), choice),
                report: report(&history),
            };
            return Err(Error::MaxIterations { iterations: history.len(), sup_change: change, partial: Box::new(partial) });
        }

        let stale = evaluated.as_deref() == Some(choice.as_slice());
        match matrix.as_mut() {
            Some(m) if !stale => match evaluate_policy(kernel, &prep, &choice, m) {
                Some(exact) => {
                    v = exact;
                    evaluations += 1;
                    evaluated = Some(choice.clone());
                }
                None => {
                    matrix = None;
                    std::mem::swap(&mut v, &mut next);
                }
            },
            _ => std::mem::swap(&mut v, &mut next),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{ControlSet, Grid1D};

    fn synthetic(dt: f64) -> TransitionKernel {
        let grid = Grid1D::new(1.0, 3.0).unwrap();
        let space = StateSpace::Line { grid, regimes: 1 };
        let controls = ControlSet::new(vec![-1.0, 0.0, 1.0]).unwrap();
        let rows = (0..4)
            .map(|i: usize| {
                (0..3)
                    .map(|c| {
                        let target = (i as i64 + c as i64 - 1).clamp(0, 3) as usize;
                        Some((dt, vec![(target, 0.5), (i, 0.5)]))
                    })
                    .collect()
            })
            .collect();
        TransitionKernel::from_rows(Formulation::Baseline, space, controls, rows).unwrap()
    }

    #[test]
    fn constant_reward_matches_geometric_series() {
        let dt = 0.1;
        let (c, delta): (f64, f64) = (1.5, 0.02);
        let exact = c * dt / (1.0 - (-delta * dt).exp());
        for acceleration in [Acceleration::PolicyEvaluation, Acceleration::None] {
            let opts = SolverOptions { tolerance: 1e-12, acceleration, ..Default::default() };
            let sol = value_iteration_with(&synthetic(dt), &|_, _| Some(c), delta, &opts).unwrap();
            for &v in sol.values.values() {
                assert!((v - exact).abs() < 1e-8, "{acceleration:?}: {v} vs {exact}");
            }
            assert!(sol.policy.indices().iter().all(|&i| sol.policy.control_values()[i] == 0.0));
        }
    }

    #[test]
    fn zero_reward_gives_zero_value() {
        let sol = value_iteration_with(&synthetic(0.1), &|_, _| Some(0.0), 0.02, &SolverOptions::default()).unwrap();
        assert!(sol.values.values().iter().all(|&v| v == 0.0));
        assert_eq!(sol.report.iterations, 1);
    }

    #[test]
    fn ties_prefer_small_controls() {
        let cand = [1.0, 1.0, 0.5, 1.0];
        assert_eq!(select(&cand, &[2, 1, 3, 0]), Some((1, 1.0)));
        assert_eq!(select(&[f64::NEG_INFINITY; 2], &[0, 1]), None);
    }

    #[test]
    fn iteration_cap_returns_partial_result() {
        let opts = SolverOptions { tolerance: 1e-14, max_iterations: 3, acceleration: Acceleration::None };
        match value_iteration_with(&synthetic(0.1), &|_, u| Some(u), 0.02, &opts) {
            Err(Error::MaxIterations { iterations, partial, .. }) => {
                assert_eq!(iterations, 3);
                assert_eq!(partial.report.history.len(), 3);
            }
            other => panic!("expected MaxIterations, got {other:?}"),
        }
    }
}
