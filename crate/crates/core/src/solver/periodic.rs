use std::time::Instant;

use rayon::prelude::*;

use super::{select, Acceleration, Policy, RewardFn, Solution, SolveReport, SolverOptions, ValueFunction};
use crate::error::{Error, Result};
use crate::kernel::{describe, PeriodicKernel};

/// Current-value function on the time cylinder.
///
/// One outer iteration sweeps backward from `γ = T − h₁` to `0`, taking the
/// slice at `γ = T` to be the current guess for `γ = 0`. The outer map is a
/// contraction with factor `ρ = e^{−δT}`. With acceleration enabled the new
/// `γ = 0` slice is shifted by `ρ/(1−ρ)` times the midrange of the last
/// change, which removes the slowly decaying constant component.
pub fn solve_periodic(kernel: &PeriodicKernel, reward: &RewardFn<'_>, delta: f64, opts: &SolverOptions) -> Result<Solution> {
    if !(delta > 0.0 && delta.is_finite()) {
        return Err(Error::InvalidParams(format!("discount rate must be positive, got {delta}")));
    }
    let start = Instant::now();
    let slices = kernel.slices();
    let width = kernel.slice_len();
    let nc = kernel.controls().len();
    let h1 = kernel.dt();
    let period = h1 * slices as f64;
    let rho = (-delta * period).exp();
    let step_discount = (-delta * h1).exp();
    let space = *kernel.space();
    let preference = kernel.controls().preference();

    let mut values = vec![0.0; slices * width];
    let mut choice = vec![0usize; slices * width];
    let mut head = vec![0.0; width];
    let mut history = Vec::new();

    let backward = |head: &[f64], values: &mut [f64], choice: &mut [usize]| -> Result<()> {
        for s in (0..slices).rev() {
            let (before, after) = values.split_at_mut((s + 1) * width);
            let next: &[f64] = if s + 1 == slices { head } else { &after[..width] };
            let slot = &mut before[s * width..];
            let picks = &mut choice[s * width..(s + 1) * width];
            let failed = slot
                .par_iter_mut()
                .zip(picks.par_iter_mut())
                .enumerate()
                .with_min_len(16)
                .map_init(
                    || vec![f64::NEG_INFINITY; nc],
                    |cand, (offset, (slot, pick))| {
                        let node = s * width + offset;
                        let coords = space.coords(node);
                        for c in 0..nc {
                            cand[c] = match kernel.row(node, c) {
                                Some(row) => match reward(&coords, kernel.controls().get(c)) {
                                    Some(p) => p * h1 + step_discount * kernel.expect(node, &row, next),
                                    None => f64::NEG_INFINITY,
                                },
                                None => f64::NEG_INFINITY,
                            };
                        }
                        match select(cand, preference) {
                            Some((c, v)) => {
                                *slot = v;
                                *pick = c;
                                None
                            }
                            None => Some(node),
                        }
                    },
                )
                .find_any(Option::is_some)
                .flatten();
            if let Some(node) = failed {
                return Err(Error::EmptyAdmissibleSet { state: describe(&space, node) });
            }
        }
        Ok(())
    };

    loop {
        backward(&head, &mut values, &mut choice)?;
        let (mut lo, mut hi, mut sup) = (f64::INFINITY, f64::NEG_INFINITY, 0.0f64);
        for (new, old) in values[..width].iter().zip(&head) {
            let d = new - old;
            lo = lo.min(d);
            hi = hi.max(d);
            sup = sup.max(d.abs());
        }
        history.push(sup);
        if !sup.is_finite() {
            return Err(Error::NonContraction(format!("outer sweep {} produced a non-finite change", history.len())));
        }
        let report = SolveReport {
            iterations: history.len(),
            policy_evaluations: 0,
            final_sup_change: sup,
            tolerance: opts.tolerance,
            acceleration: opts.acceleration,
            wall_time: start.elapsed(),
            history: history.clone(),
        };
        if sup <= opts.tolerance {
            return Ok(Solution {
                values: ValueFunction::new(space, values),
                policy: Policy::new(space, kernel.controls().values().to_vec(), choice),
                report,
            });
        }
        if history.len() >= opts.max_iterations {
            let partial = Solution {
                values: ValueFunction::new(space, values),
                policy: Policy::new(space, kernel.controls().values().to_vec(), choice),
                report,
            };
            return Err(Error::MaxIterations { iterations: history.len(), sup_change: sup, partial: Box::new(partial) });
        }
        let shift = match opts.acceleration {
            Acceleration::PolicyEvaluation => rho / (1.0 - rho) * 0.5 * (lo + hi),
            Acceleration::None => 0.0,
        };
        for (h, new) in head.iter_mut().zip(&values[..width]) {
            *h = new + shift;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{ModelSpec, SwitchingGenerator};
    use crate::grid::{ControlSet, Grid2D};
    use std::sync::Arc;

    fn still_kernel() -> PeriodicKernel {
        let model = ModelSpec::new("still", 2, Arc::new(|_, _, _| 0.0), Arc::new(|_, _, _| 0.0));
        let gen = SwitchingGenerator::symmetric(0.5).unwrap();
        let grid = Grid2D::periodic(0.05, 1.0, 0.5, 2.0).unwrap();
        PeriodicKernel::new(&model, &gen, grid, ControlSet::new(vec![0.0]).unwrap()).unwrap()
    }

    #[test]
    fn zero_reward_gives_zero_value() {
        let sol = solve_periodic(&still_kernel(), &|_, _| Some(0.0), 0.02, &SolverOptions::default()).unwrap();
        assert!(sol.values.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn constant_reward_is_a_perpetuity() {
        let delta = 0.1;
        let exact = 0.05 / (1.0 - (-delta * 0.05f64).exp());
        for acceleration in [Acceleration::PolicyEvaluation, Acceleration::None] {
            let opts = SolverOptions { tolerance: 1e-10, acceleration, ..Default::default() };
            let sol = solve_periodic(&still_kernel(), &|_, _| Some(1.0), delta, &opts).unwrap();
            for &v in sol.values.values() {
                assert!((v - exact).abs() < 1e-7, "{v} vs {exact}");
            }
        }
    }

    #[test]
    fn plain_outer_sweeps_contract_at_the_discount_rate() {
        let delta = 0.5;
        let opts = SolverOptions { tolerance: 1e-9, acceleration: Acceleration::None, ..Default::default() };
        let sol = solve_periodic(&still_kernel(), &|c, _| Some(c.x), delta, &opts).unwrap();
        let h = &sol.report.history;
        let rho = (-delta * 1.0f64).exp();
        for w in h.windows(2).skip(1) {
            assert!((w[1] / w[0] - rho).abs() < 1e-6);
        }
    }
}
