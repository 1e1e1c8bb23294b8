//! State lattices, control sets and the flat node numbering shared by
//! kernels, solvers and output writers.

use crate::error::{Error, Result};

fn intervals(step: f64, upper: f64, what: &str) -> Result<usize> {
    if !(step > 0.0 && step.is_finite()) || !(upper > 0.0 && upper.is_finite()) {
        return Err(Error::InvalidGrid(format!("{what}: step {step} and bound {upper} must be positive")));
    }
    let n = (upper / step).round();
    if n < 1.0 || (n * step - upper).abs() > 1e-9 * upper {
        return Err(Error::InvalidGrid(format!("{what}: bound {upper} is not a multiple of step {step}")));
    }
    Ok(n as usize)
}

/// `{0, h, 2h, …, B}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid1D {
    h: f64,
    upper: f64,
    intervals: usize,
}

impl Grid1D {
    pub fn new(h: f64, upper: f64) -> Result<Self> {
        let intervals = intervals(h, upper, "population axis")?;
        Ok(Self { h, upper, intervals })
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn upper(&self) -> f64 {
        self.upper
    }

    /// Number of lattice points, `B/h + 1`.
    pub fn len(&self) -> usize {
        self.intervals + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    #[inline]
    pub fn point(&self, i: usize) -> f64 {
        i as f64 * self.h
    }

    pub fn points(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.len()).map(|i| self.point(i))
    }

    /// Index of the lattice point closest to `x`, clamped to the grid.
    #[inline]
    pub fn nearest(&self, x: f64) -> usize {
        // Truncating `r + 0.5` rounds half up for r ≥ 0 without a libm call.
        let r = x / self.h + 0.5;
        if r > 0.0 {
            (r as usize).min(self.intervals)
        } else {
            0
        }
    }
}

/// A second lattice axis: price `φ ∈ [0, φ_max]` or time `γ ∈ [0, T)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid2D {
    first_step: f64,
    first_upper: f64,
    first_intervals: usize,
    periodic: bool,
    population: Grid1D,
}

impl Grid2D {
    /// Price-population lattice `(k₁h, k₂h)` with a common mesh.
    pub fn price(h: f64, phi_max: f64, upper: f64) -> Result<Self> {
        Ok(Self {
            first_step: h,
            first_upper: phi_max,
            first_intervals: intervals(h, phi_max, "price axis")?,
            periodic: false,
            population: Grid1D::new(h, upper)?,
        })
    }

    /// Time-population lattice; time wraps modulo `period`, which must be a
    /// multiple of `h1`.
    pub fn periodic(h1: f64, period: f64, h2: f64, upper: f64) -> Result<Self> {
        Ok(Self {
            first_step: h1,
            first_upper: period,
            first_intervals: intervals(h1, period, "time axis")?,
            periodic: true,
            population: Grid1D::new(h2, upper)?,
        })
    }

    pub fn first_step(&self) -> f64 {
        self.first_step
    }

    pub fn first_upper(&self) -> f64 {
        self.first_upper
    }

    /// Points on the first axis; the periodic axis omits `γ = T`.
    pub fn first_len(&self) -> usize {
        if self.periodic {
            self.first_intervals
        } else {
            self.first_intervals + 1
        }
    }

    #[inline]
    pub fn first_point(&self, j: usize) -> f64 {
        j as f64 * self.first_step
    }

    /// Closest first-axis index; wraps for the periodic axis.
    pub fn first_nearest(&self, v: f64) -> usize {
        if self.periodic {
            let n = self.first_intervals as f64;
            let j = (v.rem_euclid(self.first_upper) / self.first_step).round();
            (j % n) as usize
        } else {
            let r = v / self.first_step + 0.5;
            if r > 0.0 {
                (r as usize).min(self.first_intervals)
            } else {
                0
            }
        }
    }

    pub fn is_periodic(&self) -> bool {
        self.periodic
    }

    pub fn population(&self) -> &Grid1D {
        &self.population
    }
}

/// Finite control set containing `0`, sorted ascending.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlSet {
    values: Vec<f64>,
    /// Indices ordered by increasing `|u|`, then increasing `u`.
    preference: Vec<usize>,
}

impl ControlSet {
    pub fn new(mut values: Vec<f64>) -> Result<Self> {
        if values.iter().any(|u| !u.is_finite()) {
            return Err(Error::InvalidControls("controls must be finite".into()));
        }
        values.sort_by(f64::total_cmp);
        values.dedup();
        if !values.contains(&0.0) {
            return Err(Error::InvalidControls("control set must contain 0".into()));
        }
        let mut preference: Vec<usize> = (0..values.len()).collect();
        preference.sort_by(|&a, &b| {
            values[a]
                .abs()
                .total_cmp(&values[b].abs())
                .then(values[a].total_cmp(&values[b]))
        });
        Ok(Self { values, preference })
    }

    /// `{k·step : min ≤ k·step ≤ max}`.
    pub fn from_range(min: f64, max: f64, step: f64) -> Result<Self> {
        if !(step > 0.0) || !(min <= 0.0 && max >= 0.0) {
            return Err(Error::InvalidControls(format!(
                "need step > 0 and min ≤ 0 ≤ max, got [{min}, {max}] step {step}"
            )));
        }
        let lo = (min / step - 1e-9).ceil() as i64;
        let hi = (max / step + 1e-9).floor() as i64;
        Self::new((lo..=hi).map(|k| k as f64 * step).collect())
    }

    /// `{k/500 : −1000 ≤ k ≤ 1500}`, i.e. `[−2, 3]`.
    pub fn standard() -> Self {
        Self::new((-1000..=1500).map(|k| k as f64 / 500.0).collect()).expect("contains zero")
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    #[inline]
    pub fn get(&self, i: usize) -> f64 {
        self.values[i]
    }

    pub fn min(&self) -> f64 {
        self.values[0]
    }

    pub fn max(&self) -> f64 {
        self.values[self.values.len() - 1]
    }

    pub fn zero_index(&self) -> usize {
        self.preference[0]
    }

    /// Tie-breaking order used by the solvers.
    pub fn preference(&self) -> &[usize] {
        &self.preference
    }

    /// Smallest gap between neighbouring controls.
    pub fn resolution(&self) -> f64 {
        self.values.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min)
    }
}

/// Coordinates of a lattice node.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NodeCoords {
    /// Price `φ` or time `γ`; absent on one-dimensional spaces.
    pub axis1: Option<f64>,
    pub x: f64,
    pub regime: usize,
}

/// Flat node numbering.
///
/// * `Line`: `i·m + k`
/// * `PricePlane`: `(i·n_φ + j)·m + k`, population outermost so the
///   policy-evaluation matrix stays narrowly banded
/// * `TimeCylinder`: `(s·n_x + i)·m + k`
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StateSpace {
    Line { grid: Grid1D, regimes: usize },
    PricePlane { grid: Grid2D, regimes: usize },
    TimeCylinder { grid: Grid2D, regimes: usize },
}

impl StateSpace {
    pub fn regimes(&self) -> usize {
        match *self {
            StateSpace::Line { regimes, .. }
            | StateSpace::PricePlane { regimes, .. }
            | StateSpace::TimeCylinder { regimes, .. } => regimes,
        }
    }

    pub fn population(&self) -> &Grid1D {
        match self {
            StateSpace::Line { grid, .. } => grid,
            StateSpace::PricePlane { grid, .. } | StateSpace::TimeCylinder { grid, .. } => grid.population(),
        }
    }

    /// First-axis point count; 1 on a line.
    pub fn first_len(&self) -> usize {
        match self {
            StateSpace::Line { .. } => 1,
            StateSpace::PricePlane { grid, .. } | StateSpace::TimeCylinder { grid, .. } => grid.first_len(),
        }
    }

    pub fn node_count(&self) -> usize {
        self.first_len() * self.population().len() * self.regimes()
    }

    /// Node index from (first-axis index, population index, regime).
    #[inline]
    pub fn node(&self, j: usize, i: usize, k: usize) -> usize {
        let m = self.regimes();
        match self {
            StateSpace::Line { .. } => i * m + k,
            StateSpace::PricePlane { grid, .. } => (i * grid.first_len() + j) * m + k,
            StateSpace::TimeCylinder { grid, .. } => (j * grid.population().len() + i) * m + k,
        }
    }

    /// Inverse of [`Self::node`].
    #[inline]
    pub fn indices(&self, node: usize) -> (usize, usize, usize) {
        let m = self.regimes();
        let (rest, k) = (node / m, node % m);
        match self {
            StateSpace::Line { .. } => (0, rest, k),
            StateSpace::PricePlane { grid, .. } => {
                let n1 = grid.first_len();
                (rest % n1, rest / n1, k)
            }
            StateSpace::TimeCylinder { grid, .. } => {
                let nx = grid.population().len();
                (rest / nx, rest % nx, k)
            }
        }
    }

    pub fn coords(&self, node: usize) -> NodeCoords {
        let (j, i, k) = self.indices(node);
        let axis1 = match self {
            StateSpace::Line { .. } => None,
            StateSpace::PricePlane { grid, .. } | StateSpace::TimeCylinder { grid, .. } => Some(grid.first_point(j)),
        };
        NodeCoords { axis1, x: self.population().point(i), regime: k }
    }

    /// Nearest node to a continuous state.
    pub fn nearest(&self, axis1: f64, x: f64, regime: usize) -> usize {
        let i = self.population().nearest(x);
        let j = match self {
            StateSpace::Line { .. } => 0,
            StateSpace::PricePlane { grid, .. } | StateSpace::TimeCylinder { grid, .. } => grid.first_nearest(axis1),
        };
        self.node(j, i, regime)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_points() {
        let g = Grid1D::new(0.02, 4.0).unwrap();
        assert_eq!(g.len(), 201);
        assert_eq!(g.point(0), 0.0);
        assert!((g.point(200) - 4.0).abs() < 1e-12);
        assert_eq!(g.nearest(1.009), 50);
        assert_eq!(g.nearest(-1.0), 0);
        assert_eq!(g.nearest(9.0), 200);
        assert!(Grid1D::new(0.03, 4.0).is_err());
        assert!(Grid1D::new(0.0, 4.0).is_err());
    }

    #[test]
    fn standard_controls() {
        let u = ControlSet::standard();
        assert_eq!(u.len(), 2501);
        assert_eq!(u.min(), -2.0);
        assert_eq!(u.max(), 3.0);
        assert_eq!(u.get(u.zero_index()), 0.0);
        let r = ControlSet::from_range(-2.0, 3.0, 0.01).unwrap();
        assert_eq!(r.len(), 501);
        assert!(ControlSet::new(vec![1.0, 2.0]).is_err());
    }

    #[test]
    fn preference_prefers_inaction() {
        let u = ControlSet::new(vec![-1.0, -0.5, 0.0, 0.5, 1.0]).unwrap();
        let order: Vec<f64> = u.preference().iter().map(|&i| u.get(i)).collect();
        assert_eq!(order, vec![0.0, -0.5, 0.5, -1.0, 1.0]);
    }

    #[test]
    fn node_numbering_round_trips() {
        let spaces = [
            StateSpace::Line { grid: Grid1D::new(0.5, 2.0).unwrap(), regimes: 2 },
            StateSpace::PricePlane { grid: Grid2D::price(0.1, 0.4, 1.0).unwrap(), regimes: 2 },
            StateSpace::TimeCylinder { grid: Grid2D::periodic(0.25, 1.0, 0.5, 2.0).unwrap(), regimes: 3 },
        ];
        for space in &spaces {
            for node in 0..space.node_count() {
                let (j, i, k) = space.indices(node);
                assert_eq!(space.node(j, i, k), node);
            }
        }
        assert_eq!(spaces[1].node_count(), 5 * 11 * 2);
        assert_eq!(spaces[2].node_count(), 4 * 5 * 3);
    }

    #[test]
    fn periodic_axis_wraps() {
        let g = Grid2D::periodic(0.25, 1.0, 0.5, 2.0).unwrap();
        assert_eq!(g.first_len(), 4);
        assert_eq!(g.first_nearest(1.0), 0);
        assert_eq!(g.first_nearest(1.26), 1);
        assert_eq!(g.first_nearest(0.9), 0);
        assert!(Grid2D::periodic(0.3, 1.0, 0.5, 2.0).is_err());
    }
}
