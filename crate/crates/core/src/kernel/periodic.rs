use crate::dynamics::{ModelSpec, SwitchingGenerator};
use crate::error::{Error, Result};
use crate::grid::{ControlSet, Grid2D, StateSpace};

/// Probabilities of one explicit-scheme row. Regime switches carry
/// `h₁·q_kl` and are read from the generator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PeriodicRow {
    pub up: f64,
    pub down: f64,
    pub stay: f64,
}

/// Explicit scheme on the time-population cylinder. Every step advances
/// time by `h₁` (wrapping at `T`) and lasts exactly `h₁`.
///
/// Coefficients are tabulated per node; rows are formed on demand.
#[derive(Debug, Clone)]
pub struct PeriodicKernel {
    space: StateSpace,
    grid: Grid2D,
    controls: ControlSet,
    generator: SwitchingGenerator,
    drift: Vec<f64>,
    variance: Vec<f64>,
}

impl PeriodicKernel {
    /// Tabulates the coefficients and verifies that every admissible row has
    /// a nonnegative self-probability.
    pub fn new(model: &ModelSpec, gen: &SwitchingGenerator, grid: Grid2D, controls: ControlSet) -> Result<Self> {
        if !grid.is_periodic() {
            return Err(Error::InvalidGrid("periodic kernel needs a time-population lattice".into()));
        }
        if model.regimes() != gen.regimes() {
            return Err(Error::InvalidParams(format!(
                "model has {} regimes but the generator has {}",
                model.regimes(),
                gen.regimes()
            )));
        }
        if let Some(p) = model.period() {
            if (p - grid.first_upper()).abs() > 1e-12 * p {
                return Err(Error::InvalidGrid(format!(
                    "time axis length {} differs from the model period {p}",
                    grid.first_upper()
                )));
            }
        }
        let m = gen.regimes();
        let space = StateSpace::TimeCylinder { grid, regimes: m };
        let n = space.node_count();
        let mut drift = Vec::with_capacity(n);
        let mut variance = Vec::with_capacity(n);
        for node in 0..n {
            let (s, i, k) = space.indices(node);
            let (t, x) = (grid.first_point(s), grid.population().point(i));
            drift.push(model.drift(t, x, k));
            variance.push(model.diffusion(t, x, k).powi(2));
        }
        let kernel = Self { space, grid, controls, generator: gen.clone(), drift, variance };
        kernel.check_cfl()?;
        Ok(kernel)
    }

    /// Total leaving rate `(σ²/2 + (b−u)^±h₂)/h₂²` summed over both moves
    /// plus the regime exit rate, over admissible rows.
    fn check_cfl(&self) -> Result<()> {
        let h1 = self.grid.first_step();
        let h2 = self.grid.population().h();
        let mut worst: Option<(f64, usize, usize)> = None;
        for node in 0..self.space.node_count() {
            let (_, i, k) = self.space.indices(node);
            for c in 0..self.controls.len() {
                let u = self.controls.get(c);
                let d = self.drift[node] - u;
                if i == 0 && self.variance[node] / 2.0 + (-d).max(0.0) * h2 > 0.0 {
                    continue;
                }
                let rate = (self.variance[node] + h2 * d.abs()) / (h2 * h2) + self.generator.exit_rate(k);
                if worst.is_none_or(|(r, _, _)| rate > r) {
                    worst = Some((rate, node, c));
                }
            }
        }
        if let Some((rate, node, c)) = worst {
            if h1 * rate > 1.0 + 1e-12 {
                let coords = self.space.coords(node);
                return Err(Error::CflViolation {
                    gamma: coords.axis1.unwrap_or(0.0),
                    x: coords.x,
                    regime: coords.regime + 1,
                    u: self.controls.get(c),
                    self_probability: 1.0 - h1 * rate,
                    max_h1: 1.0 / rate,
                });
            }
        }
        Ok(())
    }

    pub fn space(&self) -> &StateSpace {
        &self.space
    }

    pub fn grid(&self) -> &Grid2D {
        &self.grid
    }

    pub fn controls(&self) -> &ControlSet {
        &self.controls
    }

    pub fn generator(&self) -> &SwitchingGenerator {
        &self.generator
    }

    pub fn node_count(&self) -> usize {
        self.space.node_count()
    }

    /// Number of time slices `T/h₁`.
    pub fn slices(&self) -> usize {
        self.grid.first_len()
    }

    /// Nodes per time slice.
    pub fn slice_len(&self) -> usize {
        self.grid.population().len() * self.generator.regimes()
    }

    /// `Δtʰ ≡ h₁`.
    pub fn dt(&self) -> f64 {
        self.grid.first_step()
    }

    /// Drift `b(γ, x, α)` tabulated at a node.
    pub fn drift_at(&self, node: usize) -> f64 {
        self.drift[node]
    }

    /// `σ²(γ, x, α)` tabulated at a node.
    pub fn variance_at(&self, node: usize) -> f64 {
        self.variance[node]
    }

    /// The row for `(node, control)`, or `None` when the control would push
    /// mass below `x = 0`.
    #[inline]
    pub fn row(&self, node: usize, c: usize) -> Option<PeriodicRow> {
        let (_, i, k) = self.space.indices(node);
        let h1 = self.grid.first_step();
        let h2 = self.grid.population().h();
        let scale = h1 / (h2 * h2);
        let half = self.variance[node] / 2.0;
        let d = self.drift[node] - self.controls.get(c);
        let up = (half + d.max(0.0) * h2) * scale;
        let down = (half + (-d).max(0.0) * h2) * scale;
        if i == 0 && down > 0.0 {
            return None;
        }
        let mut stay = 1.0 - up - down - h1 * self.generator.exit_rate(k);
        let up = if i + 1 == self.grid.population().len() {
            stay += up;
            0.0
        } else {
            up
        };
        Some(PeriodicRow { up, down, stay })
    }

    /// `Σ q(·, y) W(y)` where `next` holds the following time slice indexed
    /// by `i·m + k`.
    #[inline]
    pub fn expect(&self, node: usize, row: &PeriodicRow, next: &[f64]) -> f64 {
        let m = self.generator.regimes();
        let (_, i, k) = self.space.indices(node);
        let h1 = self.grid.first_step();
        let here = i * m + k;
        let mut acc = row.stay * next[here];
        if row.up > 0.0 {
            acc += row.up * next[here + m];
        }
        if row.down > 0.0 {
            acc += row.down * next[here - m];
        }
        for l in (0..m).filter(|&l| l != k) {
            let q = self.generator.rate(k, l);
            if q > 0.0 {
                acc += h1 * q * next[i * m + l];
            }
        }
        acc
    }

    /// Row as explicit `(target node, probability)` pairs, zero entries
    /// omitted.
    pub fn entries(&self, node: usize, c: usize) -> Option<Vec<(usize, f64)>> {
        let row = self.row(node, c)?;
        let (s, i, k) = self.space.indices(node);
        let next = (s + 1) % self.slices();
        let h1 = self.grid.first_step();
        let mut out = vec![(self.space.node(next, i, k), row.stay)];
        if row.up > 0.0 {
            out.push((self.space.node(next, i + 1, k), row.up));
        }
        if row.down > 0.0 {
            out.push((self.space.node(next, i - 1, k), row.down));
        }
        for l in (0..self.generator.regimes()).filter(|&l| l != k) {
            let q = self.generator.rate(k, l);
            if q > 0.0 {
                out.push((self.space.node(next, i, l), h1 * q));
            }
        }
        Some(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{catalog, ModelParams};
    use std::sync::Arc;

    fn seasonal() -> ModelSpec {
        catalog("seasonal_verhulst", &ModelParams { mu: vec![3.0, 2.0], ..Default::default() }).unwrap()
    }

    #[test]
    fn hand_computed_up_probability() {
        let gen = SwitchingGenerator::symmetric(0.1).unwrap();
        let grid = Grid2D::periodic(1.0 / 4000.0, 1.0, 0.02, 1.2).unwrap();
        let controls = ControlSet::new(vec![0.0]).unwrap();
        let k = PeriodicKernel::new(&seasonal(), &gen, grid, controls).unwrap();
        let node = k.space().node(0, 50, 0);
        let row = k.row(node, 0).unwrap();
        assert!((row.up - 0.325).abs() < 1e-12);
        let total: f64 = k.entries(node, 0).unwrap().iter().map(|e| e.1).sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn motionless_chain_stays_put() {
        let model = ModelSpec::new("still", 1, Arc::new(|_, x, _| x), Arc::new(|_, _, _| 0.0));
        let grid = Grid2D::periodic(0.25, 1.0, 0.5, 2.0).unwrap();
        let controls = ControlSet::new(vec![0.0, 1.0]).unwrap();
        let k = PeriodicKernel::new(&model, &SwitchingGenerator::single(), grid, controls).unwrap();
        let node = k.space().node(1, 2, 0);
        let row = k.row(node, 1).unwrap();
        assert_eq!((row.up, row.down, row.stay), (0.0, 0.0, 1.0));
        assert_eq!(k.entries(node, 1).unwrap(), vec![(k.space().node(2, 2, 0), 1.0)]);
    }

    #[test]
    fn time_wraps_after_one_period() {
        let gen = SwitchingGenerator::symmetric(0.1).unwrap();
        let grid = Grid2D::periodic(0.25, 1.0, 0.5, 2.0).unwrap();
        let controls = ControlSet::new(vec![0.0]).unwrap();
        let model = ModelSpec::new("still", 2, Arc::new(|_, _, _| 0.0), Arc::new(|_, _, _| 0.0));
        let k = PeriodicKernel::new(&model, &gen, grid, controls).unwrap();
        let last = k.space().node(3, 1, 0);
        for (t, _) in k.entries(last, 0).unwrap() {
            assert_eq!(k.space().indices(t).0, 0);
        }
    }

    #[test]
    fn oversized_time_step_is_rejected() {
        let gen = SwitchingGenerator::symmetric(0.1).unwrap();
        let grid = Grid2D::periodic(1.0 / 400.0, 1.0, 0.05, 2.0).unwrap();
        let controls = ControlSet::from_range(-1.0, 2.0, 0.05).unwrap();
        match PeriodicKernel::new(&seasonal(), &gen, grid, controls) {
            Err(Error::CflViolation { self_probability, max_h1, .. }) => {
                assert!(self_probability < 0.0);
                assert!(max_h1 < 1.0 / 400.0);
            }
            other => panic!("expected CFL violation, got {other:?}"),
        }
    }
}
