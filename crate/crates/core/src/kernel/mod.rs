//! Locally consistent controlled Markov chains on the state lattices.
//!
//! A [`TransitionKernel`] stores one fixed-width row per (node, control):
//! the interpolation interval `Δtʰ` and a handful of `(target, probability)`
//! pairs. The periodic scheme has too many rows to store at the step sizes it
//! needs, so [`PeriodicKernel`] evaluates its rows on demand instead.

mod consistency;
mod dump;
mod periodic;

pub use consistency::{consistency_check, ChainRows, ConsistencyReport, Violation};
pub use dump::write_kernel_dump;
pub use periodic::{PeriodicKernel, PeriodicRow};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{ModelSpec, PriceDynamicsSpec, SwitchingGenerator};
use crate::error::{Error, Result};
use crate::grid::{ControlSet, Grid1D, Grid2D, NodeCoords, StateSpace};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Formulation {
    Baseline,
    VariableEffort,
    StochasticPrice,
    Periodic,
}

impl Formulation {
    pub fn as_str(self) -> &'static str {
        match self {
            Formulation::Baseline => "baseline",
            Formulation::VariableEffort => "variable_effort",
            Formulation::StochasticPrice => "stochastic_price",
            Formulation::Periodic => "periodic",
        }
    }
}

impl std::fmt::Display for Formulation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A borrowed view of one kernel row.
#[derive(Debug, Clone, Copy)]
pub struct Row<'a> {
    pub dt: f64,
    pub targets: &'a [u32],
    pub probs: &'a [f64],
}

impl Row<'_> {
    /// `Σ q(·, y) f(y)`.
    #[inline]
    pub fn expect(&self, f: &[f64]) -> f64 {
        self.targets.iter().zip(self.probs).map(|(&t, &p)| p * f[t as usize]).sum()
    }
}

/// Materialized transition kernel.
#[derive(Debug, Clone)]
pub struct TransitionKernel {
    formulation: Formulation,
    space: StateSpace,
    controls: ControlSet,
    width: usize,
    dt: Vec<f64>,
    admissible: Vec<bool>,
    targets: Vec<u32>,
    probs: Vec<f64>,
}

/// Scratch row handed to the row builders.
struct RowBuf<'a> {
    node: usize,
    targets: &'a mut [u32],
    probs: &'a mut [f64],
    len: usize,
}

impl RowBuf<'_> {
    fn push(&mut self, target: usize, prob: f64) {
        self.targets[self.len] = target as u32;
        self.probs[self.len] = prob;
        self.len += 1;
    }

    /// Pads the unused tail with zero-probability self loops.
    fn finish(&mut self) {
        while self.len < self.targets.len() {
            let node = self.node;
            self.push(node, 0.0);
        }
    }
}

impl TransitionKernel {
    fn assemble<F>(formulation: Formulation, space: StateSpace, controls: ControlSet, width: usize, fill: F) -> Result<Self>
    where
        F: Fn(&mut RowBuf<'_>, usize, usize, f64) -> Option<f64> + Sync,
    {
        let nodes = space.node_count();
        let nc = controls.len();
        if nodes > u32::MAX as usize {
            return Err(Error::InvalidGrid(format!("{nodes} nodes exceed the kernel's index range")));
        }
        let rows = nodes * nc;
        let mut dt = vec![0.0; rows];
        let mut admissible = vec![false; rows];
        let mut targets = vec![0u32; rows * width];
        let mut probs = vec![0.0; rows * width];

        dt.par_chunks_mut(nc)
            .zip(admissible.par_chunks_mut(nc))
            .zip(targets.par_chunks_mut(nc * width).zip(probs.par_chunks_mut(nc * width)))
            .enumerate()
            .for_each(|(node, ((dt, adm), (tg, pr)))| {
                for c in 0..nc {
                    let mut buf = RowBuf {
                        node,
                        targets: &mut tg[c * width..(c + 1) * width],
                        probs: &mut pr[c * width..(c + 1) * width],
                        len: 0,
                    };
                    match fill(&mut buf, node, c, controls.get(c)) {
                        Some(step) => {
                            buf.finish();
                            dt[c] = step;
                            adm[c] = true;
                        }
                        None => {
                            buf.len = 0;
                            buf.push(node, 1.0);
                            buf.finish();
                        }
                    }
                }
            });

        for node in 0..nodes {
            if !admissible[node * nc..(node + 1) * nc].iter().any(|&a| a) {
                return Err(Error::EmptyAdmissibleSet { state: describe(&space, node) });
            }
        }
        Ok(Self { formulation, space, controls, width, dt, admissible, targets, probs })
    }

    /// Kernel from explicit rows, for synthetic chains. `rows[node][c]` is
    /// `None` for an inadmissible control or `Some((Δt, [(target, prob)]))`.
    pub fn from_rows(
        formulation: Formulation,
        space: StateSpace,
        controls: ControlSet,
        rows: Vec<Vec<Option<(f64, Vec<(usize, f64)>)>>>,
    ) -> Result<Self> {
        let nodes = space.node_count();
        if rows.len() != nodes || rows.iter().any(|r| r.len() != controls.len()) {
            return Err(Error::InvalidGrid("row table does not match state space and controls".into()));
        }
        let width = rows.iter().flatten().flatten().map(|(_, e)| e.len()).max().unwrap_or(1).max(1);
        for (node, row) in rows.iter().enumerate() {
            for (dt, entries) in row.iter().flatten() {
                if !(*dt > 0.0) {
                    return Err(Error::NonContraction(format!("Δt = {dt} at {}", describe(&space, node))));
                }
                if entries.iter().any(|&(t, p)| t >= nodes || !(0.0..=1.0).contains(&p)) {
                    return Err(Error::InvalidGrid(format!("bad transition at {}", describe(&space, node))));
                }
            }
        }
        Self::assemble(formulation, space, controls, width, |buf, node, c, _| {
            let (dt, entries) = rows[node][c].as_ref()?;
            for &(t, p) in entries {
                buf.push(t, p);
            }
            Some(*dt)
        })
    }

    pub fn formulation(&self) -> Formulation {
        self.formulation
    }

    pub fn space(&self) -> &StateSpace {
        &self.space
    }

    pub fn controls(&self) -> &ControlSet {
        &self.controls
    }

    pub fn node_count(&self) -> usize {
        self.space.node_count()
    }

    /// Maximum number of entries in a row.
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn is_admissible(&self, node: usize, c: usize) -> bool {
        self.admissible[node * self.controls.len() + c]
    }

    #[inline]
    pub fn row(&self, node: usize, c: usize) -> Row<'_> {
        let r = node * self.controls.len() + c;
        let span = r * self.width..(r + 1) * self.width;
        Row { dt: self.dt[r], targets: &self.targets[span.clone()], probs: &self.probs[span] }
    }

    pub fn coords(&self, node: usize) -> NodeCoords {
        self.space.coords(node)
    }

    /// Drops the controls rejected by `keep` from every state's admissible
    /// set.
    pub fn restrict_controls(&mut self, keep: impl Fn(f64) -> bool) -> Result<()> {
        let nc = self.controls.len();
        for c in 0..nc {
            if !keep(self.controls.get(c)) {
                for node in 0..self.node_count() {
                    self.admissible[node * nc + c] = false;
                }
            }
        }
        for node in 0..self.node_count() {
            if !self.admissible[node * nc..(node + 1) * nc].iter().any(|&a| a) {
                return Err(Error::EmptyAdmissibleSet { state: describe(&self.space, node) });
            }
        }
        Ok(())
    }
}

pub(crate) fn describe(space: &StateSpace, node: usize) -> String {
    let c = space.coords(node);
    match c.axis1 {
        Some(a) => format!("(axis1={a}, x={}, regime={})", c.x, c.regime + 1),
        None => format!("(x={}, regime={})", c.x, c.regime + 1),
    }
}

fn check_regimes(model: &ModelSpec, gen: &SwitchingGenerator) -> Result<()> {
    if model.regimes() != gen.regimes() {
        return Err(Error::InvalidParams(format!(
            "model has {} regimes but the generator has {}",
            model.regimes(),
            gen.regimes()
        )));
    }
    Ok(())
}

fn require_homogeneous(model: &ModelSpec) -> Result<()> {
    if model.period().is_some() {
        return Err(Error::InvalidParams(format!(
            "model `{}` is periodic; use the periodic kernel",
            model.name()
        )));
    }
    Ok(())
}

/// Shared one-dimensional row: population moves, regime switches and the
/// self loop. `effective` maps `(x, u)` to the control's drift reduction.
fn line_builder(
    model: &ModelSpec,
    gen: &SwitchingGenerator,
    grid: Grid1D,
    controls: ControlSet,
    formulation: Formulation,
    effective: fn(f64, f64) -> f64,
) -> Result<TransitionKernel> {
    check_regimes(model, gen)?;
    require_homogeneous(model)?;
    let m = gen.regimes();
    let space = StateSpace::Line { grid, regimes: m };
    let h = grid.h();
    let last = grid.len() - 1;
    TransitionKernel::assemble(formulation, space, controls, 2 + m, |buf, node, _, u| {
        let (_, i, k) = space.indices(node);
        let x = grid.point(i);
        let b = model.drift(0.0, x, k);
        let s2 = model.diffusion(0.0, x, k).powi(2);
        let d = b - effective(x, u);
        let q_h = s2 + h * d.abs() + h * h * gen.exit_rate(k) + h;
        let up = (s2 / 2.0 + d.max(0.0) * h) / q_h;
        let down = (s2 / 2.0 + (-d).max(0.0) * h) / q_h;
        let mut stay = h / q_h;
        if i == 0 && down > 0.0 {
            return None;
        }
        if i == last {
            stay += up;
        } else {
            buf.push(space.node(0, i + 1, k), up);
        }
        if i > 0 {
            buf.push(space.node(0, i - 1, k), down);
        }
        for l in (0..m).filter(|&l| l != k) {
            buf.push(space.node(0, i, l), h * h * gen.rate(k, l) / q_h);
        }
        buf.push(node, stay);
        Some(h * h / q_h)
    })
}

/// Kernel for `dX = (b(X, α) − u) dt + σ(X, α) dw`.
pub fn build_baseline(
    model: &ModelSpec,
    gen: &SwitchingGenerator,
    grid: Grid1D,
    controls: ControlSet,
) -> Result<TransitionKernel> {
    line_builder(model, gen, grid, controls, Formulation::Baseline, |_, u| u)
}

/// Kernel for `dX = (b(X, α) − uX) dt + σ(X, α) dw`.
pub fn build_variable_effort(
    model: &ModelSpec,
    gen: &SwitchingGenerator,
    grid: Grid1D,
    controls: ControlSet,
) -> Result<TransitionKernel> {
    line_builder(model, gen, grid, controls, Formulation::VariableEffort, |x, u| u * x)
}

/// Kernel on the price-population plane. Both axes share the mesh `h`.
pub fn build_stochastic_price(
    model: &ModelSpec,
    gen: &SwitchingGenerator,
    price: &PriceDynamicsSpec,
    grid: Grid2D,
    controls: ControlSet,
) -> Result<TransitionKernel> {
    check_regimes(model, gen)?;
    require_homogeneous(model)?;
    if grid.is_periodic() || (grid.first_step() - grid.population().h()).abs() > 1e-12 {
        return Err(Error::InvalidGrid("price lattice needs a common mesh on both axes".into()));
    }
    let m = gen.regimes();
    let space = StateSpace::PricePlane { grid, regimes: m };
    let h = grid.population().h();
    let last_x = grid.population().len() - 1;
    let last_phi = grid.first_len() - 1;
    TransitionKernel::assemble(Formulation::StochasticPrice, space, controls, 4 + m, |buf, node, _, u| {
        let (j, i, k) = space.indices(node);
        let x = grid.population().point(i);
        let phi = grid.first_point(j);
        let b = model.drift(0.0, x, k);
        let s2 = model.diffusion(0.0, x, k).powi(2);
        let b0 = price.drift(phi, k);
        let s0 = price.diffusion(phi, k).powi(2);
        let d = b - u;
        let q_h = s2 + h * d.abs() + s0 + h * b0.abs() + h * h * gen.exit_rate(k) + h;
        let up = (s2 / 2.0 + d.max(0.0) * h) / q_h;
        let down = (s2 / 2.0 + (-d).max(0.0) * h) / q_h;
        let phi_up = (s0 / 2.0 + b0.max(0.0) * h) / q_h;
        let phi_down = (s0 / 2.0 + (-b0).max(0.0) * h) / q_h;
        let mut stay = h / q_h;
        if i == 0 && down > 0.0 {
            return None;
        }
        if i == last_x {
            stay += up;
        } else {
            buf.push(space.node(j, i + 1, k), up);
        }
        if i > 0 {
            buf.push(space.node(j, i - 1, k), down);
        }
        if j == last_phi {
            stay += phi_up;
        } else {
            buf.push(space.node(j + 1, i, k), phi_up);
        }
        if j == 0 {
            stay += phi_down;
        } else {
            buf.push(space.node(j - 1, i, k), phi_down);
        }
        for l in (0..m).filter(|&l| l != k) {
            buf.push(space.node(j, i, l), h * h * gen.rate(k, l) / q_h);
        }
        buf.push(node, stay);
        Some(h * h / q_h)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{catalog, ModelParams};
    use std::sync::Arc;

    fn verhulst() -> ModelSpec {
        catalog("verhulst", &ModelParams { mu: vec![3.0, 2.0], ..Default::default() }).unwrap()
    }

    fn entries(k: &TransitionKernel, node: usize, c: usize) -> Vec<(usize, f64)> {
        let row = k.row(node, c);
        row.targets.iter().zip(row.probs).filter(|(_, &p)| p > 0.0).map(|(&t, &p)| (t as usize, p)).collect()
    }

    fn prob_to(k: &TransitionKernel, node: usize, c: usize, target: usize) -> f64 {
        entries(k, node, c).iter().filter(|(t, _)| *t == target).map(|(_, p)| p).sum()
    }

    #[test]
    fn baseline_row_matches_hand_computation() {
        let gen = SwitchingGenerator::symmetric(0.1).unwrap();
        let grid = Grid1D::new(0.1, 4.0).unwrap();
        let controls = ControlSet::new(vec![0.0, 1.0]).unwrap();
        let k = build_baseline(&verhulst(), &gen, grid, controls).unwrap();
        let node = k.space().node(0, 10, 0);
        let row = k.row(node, 0);
        assert!((row.dt - 0.01 / 1.201).abs() < 1e-15);
        let up = prob_to(&k, node, 0, k.space().node(0, 11, 0));
        assert!((up - 0.6 / 1.201).abs() < 1e-15);
        assert!((up - 0.499584).abs() < 1e-6);
        let total: f64 = row.probs.iter().sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn drift_matched_control_has_no_spatial_moves() {
        let model = ModelSpec::new("flat", 1, Arc::new(|_, x, _| x), Arc::new(|_, _, _| 0.0));
        let grid = Grid1D::new(0.5, 2.0).unwrap();
        let controls = ControlSet::new(vec![0.0, 1.0]).unwrap();
        let k = build_baseline(&model, &SwitchingGenerator::single(), grid, controls).unwrap();
        let node = k.space().node(0, 2, 0);
        assert_eq!(entries(&k, node, 1), vec![(node, 1.0)]);
    }

    #[test]
    fn lower_boundary_excludes_harvesting() {
        let gen = SwitchingGenerator::symmetric(0.1).unwrap();
        let grid = Grid1D::new(0.1, 1.0).unwrap();
        let controls = ControlSet::new(vec![-1.0, 0.0, 1.0]).unwrap();
        let k = build_baseline(&verhulst(), &gen, grid, controls).unwrap();
        assert!(k.is_admissible(0, 0));
        assert!(k.is_admissible(0, 1));
        assert!(!k.is_admissible(0, 2));
        assert!(k.is_admissible(2, 2));
    }

    #[test]
    fn upper_boundary_reflects() {
        let gen = SwitchingGenerator::symmetric(0.1).unwrap();
        let grid = Grid1D::new(0.1, 1.0).unwrap();
        let controls = ControlSet::new(vec![-1.0, 0.0]).unwrap();
        let k = build_baseline(&verhulst(), &gen, grid, controls).unwrap();
        let top = k.space().node(0, 10, 0);
        for (t, _) in entries(&k, top, 0) {
            assert!(t < k.node_count());
        }
        let total: f64 = k.row(top, 0).probs.iter().sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn variable_effort_identities() {
        let gen = SwitchingGenerator::symmetric(0.1).unwrap();
        let grid = Grid1D::new(0.1, 4.0).unwrap();
        let controls = ControlSet::new(vec![0.0, 0.5, 1.0]).unwrap();
        let ve = build_variable_effort(&verhulst(), &gen, grid, controls.clone()).unwrap();
        let base = build_baseline(&verhulst(), &gen, grid, controls).unwrap();
        let at = |i| ve.space().node(0, i, 0);
        for c in 0..3 {
            assert_eq!(entries(&ve, at(0), c), entries(&ve, at(0), 0));
            assert_eq!(entries(&ve, at(10), c), entries(&base, at(10), c));
        }
        assert_eq!(entries(&ve, at(20), 1), entries(&base, at(20), 2));
        assert_eq!(ve.row(at(20), 1).dt, base.row(at(20), 2).dt);
    }

    #[test]
    fn frozen_price_reduces_to_baseline() {
        let gen = SwitchingGenerator::symmetric(0.1).unwrap();
        let controls = ControlSet::new(vec![-1.0, 0.0, 1.0]).unwrap();
        let frozen = PriceDynamicsSpec::new(Arc::new(|_, _| 0.0), Arc::new(|_, _| 0.0), 0.4).unwrap();
        let plane = Grid2D::price(0.1, 0.4, 2.0).unwrap();
        let sp = build_stochastic_price(&verhulst(), &gen, &frozen, plane, controls.clone()).unwrap();
        let base = build_baseline(&verhulst(), &gen, Grid1D::new(0.1, 2.0).unwrap(), controls).unwrap();
        for i in 0..=20 {
            for k in 0..2 {
                for c in 0..3 {
                    let a = sp.row(sp.space().node(2, i, k), c);
                    let b = base.row(base.space().node(0, i, k), c);
                    assert_eq!(a.dt, b.dt);
                    assert_eq!(sp.is_admissible(sp.space().node(2, i, k), c), base.is_admissible(base.space().node(0, i, k), c));
                }
            }
        }
    }

    #[test]
    fn price_moves_follow_logistic_coefficients() {
        let gen = SwitchingGenerator::symmetric(0.1).unwrap();
        let controls = ControlSet::new(vec![0.0]).unwrap();
        let price = PriceDynamicsSpec::logistic(1.0, 0.4, 0.5).unwrap();
        let h = 0.1;
        let plane = Grid2D::price(h, 0.4, 2.0).unwrap();
        let k = build_stochastic_price(&verhulst(), &gen, &price, plane, controls).unwrap();
        let sp = *k.space();
        let node = sp.node(2, 10, 0);
        let q_h = 1.0 + h * 1.0 + 0.02f64.powi(2) + h * 0.04 + h * h * 0.1 + h;
        let phi_up = prob_to(&k, node, 0, sp.node(3, 10, 0));
        assert!((phi_up - (0.0002 + 0.04 * h) / q_h).abs() < 1e-15);
        let floor = sp.node(0, 10, 0);
        assert_eq!(prob_to(&k, floor, 0, sp.node(1, 10, 0)), 0.0);
    }
}
