use serde::Serialize;

use super::{describe, Formulation, PeriodicKernel, TransitionKernel};
use crate::dynamics::{ModelSpec, PriceDynamicsSpec, SwitchingGenerator};
use crate::grid::{ControlSet, StateSpace};

/// Uniform access to explicit rows of either kernel type.
pub trait ChainRows {
    fn formulation(&self) -> Formulation;
    fn space(&self) -> &StateSpace;
    fn controls(&self) -> &ControlSet;
    /// `(Δtʰ, [(target, probability)])`, `None` for inadmissible rows.
    fn entries(&self, node: usize, c: usize) -> Option<(f64, Vec<(usize, f64)>)>;
}

impl ChainRows for TransitionKernel {
    fn formulation(&self) -> Formulation {
        TransitionKernel::formulation(self)
    }

    fn space(&self) -> &StateSpace {
        TransitionKernel::space(self)
    }

    fn controls(&self) -> &ControlSet {
        TransitionKernel::controls(self)
    }

    fn entries(&self, node: usize, c: usize) -> Option<(f64, Vec<(usize, f64)>)> {
        if !self.is_admissible(node, c) {
            return None;
        }
        let row = self.row(node, c);
        let entries = row
            .targets
            .iter()
            .zip(row.probs)
            .filter(|(_, &p)| p != 0.0)
            .map(|(&t, &p)| (t as usize, p))
            .collect();
        Some((row.dt, entries))
    }
}

impl ChainRows for PeriodicKernel {
    fn formulation(&self) -> Formulation {
        Formulation::Periodic
    }

    fn space(&self) -> &StateSpace {
        PeriodicKernel::space(self)
    }

    fn controls(&self) -> &ControlSet {
        PeriodicKernel::controls(self)
    }

    fn entries(&self, node: usize, c: usize) -> Option<(f64, Vec<(usize, f64)>)> {
        PeriodicKernel::entries(self, node, c).map(|e| (self.dt(), e))
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Violation {
    pub state: String,
    pub control: f64,
    pub kind: &'static str,
    pub error: f64,
    pub bound: f64,
}

/// Outcome of an exhaustive row-by-row moment check.
#[derive(Debug, Clone, Serialize)]
pub struct ConsistencyReport {
    pub formulation: Formulation,
    /// Population mesh.
    pub h: f64,
    pub rows_checked: usize,
    pub max_row_sum_error: f64,
    pub max_first_moment_error: f64,
    /// `max |Var[ΔX] − σ²Δtʰ| / Δtʰ`.
    pub max_variance_error: f64,
    /// Largest variance error as a fraction of its bound.
    pub max_variance_ratio: f64,
    pub max_switch_error: f64,
    pub violation_count: usize,
    /// The first violations found, at most 50.
    pub violations: Vec<Violation>,
}

impl ConsistencyReport {
    pub fn passed(&self) -> bool {
        self.violation_count == 0
    }
}

/// Compares every admissible row's conditional moments with the diffusion.
///
/// Rows touching a reflecting edge are skipped, since the reflection
/// deliberately breaks the moment identities there. `price` is needed only
/// for the price-plane kernel.
pub fn consistency_check<K: ChainRows>(
    kernel: &K,
    model: &ModelSpec,
    gen: &SwitchingGenerator,
    price: Option<&PriceDynamicsSpec>,
    tolerance: f64,
) -> ConsistencyReport {
    let space = kernel.space();
    let formulation = kernel.formulation();
    let h = space.population().h();
    let last_x = space.population().len() - 1;
    let mut report = ConsistencyReport {
        formulation,
        h,
        rows_checked: 0,
        max_row_sum_error: 0.0,
        max_first_moment_error: 0.0,
        max_variance_error: 0.0,
        max_variance_ratio: 0.0,
        max_switch_error: 0.0,
        violation_count: 0,
        violations: Vec::new(),
    };
    let flag = |report: &mut ConsistencyReport, node: usize, u: f64, kind: &'static str, error: f64, bound: f64| {
        report.violation_count += 1;
        if report.violations.len() < 50 {
            report.violations.push(Violation { state: describe(space, node), control: u, kind, error, bound });
        }
    };

    for node in 0..space.node_count() {
        let (j, i, k) = space.indices(node);
        let here = space.coords(node);
        let reflecting = i == last_x
            || (formulation == Formulation::StochasticPrice && (j == 0 || j + 1 == space.first_len()));
        let t = if formulation == Formulation::Periodic { here.axis1.unwrap_or(0.0) } else { 0.0 };
        let b = model.drift(t, here.x, k);
        let s2 = model.diffusion(t, here.x, k).powi(2);
        let q_kk = gen.exit_rate(k);

        for c in 0..kernel.controls().len() {
            let u = kernel.controls().get(c);
            let Some((dt, entries)) = kernel.entries(node, c) else { continue };
            report.rows_checked += 1;

            let sum: f64 = entries.iter().map(|e| e.1).sum();
            let sum_err = (sum - 1.0).abs();
            report.max_row_sum_error = report.max_row_sum_error.max(sum_err);
            if sum_err > tolerance || entries.iter().any(|e| !(0.0..=1.0).contains(&e.1)) {
                flag(&mut report, node, u, "row_sum", sum_err, tolerance);
            }
            if reflecting {
                continue;
            }

            let u_eff = if formulation == Formulation::VariableEffort { u * here.x } else { u };
            let d = b - u_eff;
            let (mut m1, mut m2, mut p1, mut p2) = (0.0, 0.0, 0.0, 0.0);
            let mut switch = vec![0.0; gen.regimes()];
            for &(target, p) in &entries {
                let there = space.coords(target);
                let dx = there.x - here.x;
                m1 += p * dx;
                m2 += p * dx * dx;
                if formulation == Formulation::StochasticPrice {
                    let dphi = there.axis1.unwrap_or(0.0) - here.axis1.unwrap_or(0.0);
                    p1 += p * dphi;
                    p2 += p * dphi * dphi;
                }
                if there.regime != k {
                    switch[there.regime] += p;
                }
            }

            let first = (m1 - d * dt).abs();
            report.max_first_moment_error = report.max_first_moment_error.max(first);
            if first > tolerance {
                flag(&mut report, node, u, "first_moment", first, tolerance);
            }
            let var_err = (m2 - m1 * m1 - s2 * dt).abs();
            let bound = h * (d.abs() + h * q_kk + 1.0) * dt;
            report.max_variance_error = report.max_variance_error.max(var_err / dt);
            report.max_variance_ratio = report.max_variance_ratio.max(var_err / bound);
            if var_err > bound + tolerance {
                flag(&mut report, node, u, "variance", var_err, bound);
            }

            if let (Formulation::StochasticPrice, Some(price)) = (formulation, price) {
                let phi = here.axis1.unwrap_or(0.0);
                let b0 = price.drift(phi, k);
                let s0 = price.diffusion(phi, k).powi(2);
                let first = (p1 - b0 * dt).abs();
                report.max_first_moment_error = report.max_first_moment_error.max(first);
                if first > tolerance {
                    flag(&mut report, node, u, "price_first_moment", first, tolerance);
                }
                let var_err = (p2 - p1 * p1 - s0 * dt).abs();
                let bound = h * (b0.abs() + h * q_kk + 1.0) * dt;
                if var_err > bound + tolerance {
                    flag(&mut report, node, u, "price_variance", var_err, bound);
                }
            }

            for (l, &p) in switch.iter().enumerate() {
                if l == k {
                    continue;
                }
                let err = (p - gen.rate(k, l) * dt).abs();
                report.max_switch_error = report.max_switch_error.max(err);
                if err > tolerance {
                    flag(&mut report, node, u, "switch", err, tolerance);
                }
            }
        }
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{catalog, ModelParams};
    use crate::grid::{Grid1D, Grid2D};
    use crate::kernel::{build_baseline, build_stochastic_price, build_variable_effort};

    fn verhulst() -> ModelSpec {
        catalog("verhulst", &ModelParams { mu: vec![3.0, 2.0], ..Default::default() }).unwrap()
    }

    #[test]
    fn baseline_kernel_is_consistent() {
        let gen = SwitchingGenerator::symmetric(0.1).unwrap();
        let controls = ControlSet::from_range(-2.0, 3.0, 0.25).unwrap();
        let k = build_baseline(&verhulst(), &gen, Grid1D::new(0.1, 4.0).unwrap(), controls).unwrap();
        let report = consistency_check(&k, &verhulst(), &gen, None, 1e-12);
        assert!(report.passed(), "{:?}", report.violations);
        assert!(report.max_first_moment_error <= 1e-12);
    }

    #[test]
    fn variance_error_is_first_order() {
        let gen = SwitchingGenerator::symmetric(0.1).unwrap();
        let controls = ControlSet::from_range(-2.0, 3.0, 0.25).unwrap();
        let err = |h| {
            let k = build_variable_effort(&verhulst(), &gen, Grid1D::new(h, 4.0).unwrap(), controls.clone()).unwrap();
            consistency_check(&k, &verhulst(), &gen, None, 1e-12).max_variance_error
        };
        let ratio = err(0.05) / err(0.1);
        assert!((0.4..=0.6).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn price_kernel_is_consistent() {
        let gen = SwitchingGenerator::symmetric(0.1).unwrap();
        let controls = ControlSet::from_range(-1.0, 1.0, 0.5).unwrap();
        let price = PriceDynamicsSpec::logistic(1.0, 0.4, 0.5).unwrap();
        let plane = Grid2D::price(0.05, 0.4, 2.0).unwrap();
        let k = build_stochastic_price(&verhulst(), &gen, &price, plane, controls).unwrap();
        let report = consistency_check(&k, &verhulst(), &gen, Some(&price), 1e-12);
        assert!(report.passed(), "{:?}", report.violations);
    }
}
