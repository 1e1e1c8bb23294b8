//! Euler–Maruyama simulation of the controlled regime-switching diffusion.
//!
//! Paths are independent. Path `n` draws from its own ChaCha stream
//! `(seed, n)`, so estimates do not depend on how the work is scheduled.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Exp1, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{ModelSpec, PriceDynamicsSpec, SwitchingGenerator};
use crate::economics::{HarvestMode, PriceCostSpec};
use crate::error::{Error, Result};
use crate::grid::StateSpace;
use crate::solver::Policy;

/// A feedback control `u(t, φ, x, α)`.
pub trait ControlLaw: Sync {
    fn control(&self, t: f64, phi: f64, x: f64, regime: usize) -> f64;
    /// Every value the law can return, used for the tail bound.
    fn values(&self) -> Vec<f64>;
}

impl ControlLaw for Policy {
    #[inline]
    fn control(&self, t: f64, phi: f64, x: f64, regime: usize) -> f64 {
        match self.space() {
            StateSpace::Line { .. } => self.nearest(0.0, x, regime),
            StateSpace::PricePlane { .. } => self.nearest(phi, x, regime),
            StateSpace::TimeCylinder { .. } => self.nearest(t, x, regime),
        }
    }

    fn values(&self) -> Vec<f64> {
        self.control_values().to_vec()
    }
}

/// `u ≡ c`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstantControl(pub f64);

impl ControlLaw for ConstantControl {
    fn control(&self, _: f64, _: f64, _: f64, _: usize) -> f64 {
        self.0
    }

    fn values(&self) -> Vec<f64> {
        vec![self.0]
    }
}

/// `below` while `x < level`, `above` otherwise.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThresholdControl {
    pub level: f64,
    pub below: f64,
    pub above: f64,
}

impl ControlLaw for ThresholdControl {
    fn control(&self, _: f64, _: f64, x: f64, _: usize) -> f64 {
        if x < self.level {
            self.below
        } else {
            self.above
        }
    }

    fn values(&self) -> Vec<f64> {
        vec![self.below, self.above]
    }
}

/// A constant or threshold law chosen at run time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AnyControl {
    Constant(ConstantControl),
    Threshold(ThresholdControl),
}

impl ControlLaw for AnyControl {
    #[inline]
    fn control(&self, t: f64, phi: f64, x: f64, regime: usize) -> f64 {
        match self {
            AnyControl::Constant(c) => c.control(t, phi, x, regime),
            AnyControl::Threshold(c) => c.control(t, phi, x, regime),
        }
    }

    fn values(&self) -> Vec<f64> {
        match self {
            AnyControl::Constant(c) => c.values(),
            AnyControl::Threshold(c) => c.values(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub paths: usize,
    pub dt: f64,
    pub horizon: f64,
    pub seed: u64,
    /// Steps between recorded trace points.
    pub trace_stride: usize,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self { paths: 10_000, dt: 1e-3, horizon: 600.0, seed: 0, trace_stride: 1000 }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.paths == 0 {
            return Err(Error::InvalidParams("paths must be positive".into()));
        }
        if !(self.dt > 0.0 && self.horizon >= self.dt && self.horizon.is_finite()) {
            return Err(Error::InvalidParams(format!(
                "need 0 < dt <= horizon < inf, got dt={} horizon={}",
                self.dt, self.horizon
            )));
        }
        if self.trace_stride == 0 {
            return Err(Error::InvalidParams("trace_stride must be positive".into()));
        }
        Ok(())
    }

    fn steps(&self) -> usize {
        (self.horizon / self.dt).round() as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TracePoint {
    pub t: f64,
    pub phi: f64,
    pub x: f64,
    /// Zero-based.
    pub regime: usize,
    pub u: f64,
    pub payoff: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PathOutcome {
    /// `Σ e^{−δt} p dt` up to the horizon.
    pub payoff: f64,
    /// Time spent in each regime.
    pub occupation: Vec<f64>,
    pub trace: Vec<TracePoint>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MCEstimate {
    pub mean: f64,
    pub std_error: f64,
    /// `‖p‖∞ e^{−δH}/δ`, the largest possible contribution after the horizon.
    pub tail_bound: f64,
    pub paths: usize,
    pub dt: f64,
    pub horizon: f64,
}

impl MCEstimate {
    /// Whether `value` lies within `3·SE + tail + slack` of the mean.
    pub fn agrees_with(&self, value: f64, slack: f64) -> bool {
        (self.mean - value).abs() <= 3.0 * self.std_error + self.tail_bound + slack
    }

    /// `self ≥ other − 3·sqrt(SE₁² + SE₂²)`.
    pub fn dominates(&self, other: &MCEstimate) -> bool {
        self.mean >= other.mean - 3.0 * self.std_error.hypot(other.std_error)
    }
}

/// The controlled system to simulate.
#[derive(Debug, Clone, Copy)]
pub struct Simulator<'a> {
    model: &'a ModelSpec,
    gen: &'a SwitchingGenerator,
    pc: &'a PriceCostSpec,
    price: Option<&'a PriceDynamicsSpec>,
    delta: f64,
    upper: f64,
}

impl<'a> Simulator<'a> {
    /// The population is confined to `[0, upper]`.
    pub fn new(
        model: &'a ModelSpec,
        gen: &'a SwitchingGenerator,
        pc: &'a PriceCostSpec,
        delta: f64,
        upper: f64,
    ) -> Result<Self> {
        if model.regimes() != gen.regimes() {
            return Err(Error::InvalidParams(format!(
                "model has {} regimes but the generator has {}",
                model.regimes(),
                gen.regimes()
            )));
        }
        if !(delta > 0.0) {
            return Err(Error::InvalidParams(format!("discount rate must be positive, got {delta}")));
        }
        if !(upper > 0.0) {
            return Err(Error::InvalidParams(format!("upper bound must be positive, got {upper}")));
        }
        Ok(Self { model, gen, pc, price: None, delta, upper })
    }

    /// Adds a stochastic price state; the reward gains `φ·u` (`φ·x·u` under
    /// variable effort).
    pub fn with_price(mut self, price: &'a PriceDynamicsSpec) -> Self {
        self.price = Some(price);
        self
    }

    fn check_start(&self, x0: f64, regime: usize) -> Result<()> {
        if !(0.0..=self.upper).contains(&x0) {
            return Err(Error::InvalidParams(format!("x0={x0} outside [0, {}]", self.upper)));
        }
        if regime >= self.gen.regimes() {
            return Err(Error::InvalidParams(format!("regime {regime} out of range")));
        }
        Ok(())
    }

    fn next_jump<R: Rng>(&self, from: f64, regime: usize, rng: &mut R) -> f64 {
        let rate = self.gen.exit_rate(regime);
        if rate > 0.0 {
            let e: f64 = rng.sample(Exp1);
            from + e / rate
        } else {
            f64::INFINITY
        }
    }

    fn jump_target<R: Rng>(&self, regime: usize, rng: &mut R) -> usize {
        let mut r = rng.gen::<f64>() * self.gen.exit_rate(regime);
        let mut last = regime;
        for l in (0..self.gen.regimes()).filter(|&l| l != regime) {
            let q = self.gen.rate(regime, l);
            if q > 0.0 {
                last = l;
                if r < q {
                    return l;
                }
                r -= q;
            }
        }
        last
    }

    /// One discounted path from `(x0, α0)` (and `φ0` when a price state is
    /// present). A harvest at the extinct state is cut back to the drift
    /// there, matching the chain, which forbids leaving `x = 0` downward.
    pub fn simulate_path<L: ControlLaw + ?Sized, R: Rng>(
        &self,
        law: &L,
        x0: f64,
        phi0: f64,
        regime0: usize,
        cfg: &SimConfig,
        rng: &mut R,
        record: bool,
    ) -> Result<PathOutcome> {
        self.check_start(x0, regime0)?;
        cfg.validate()?;
        let dt = cfg.dt;
        let sqrt_dt = dt.sqrt();
        let decay = (-self.delta * dt).exp();
        let phi_max = self.price.map_or(0.0, |p| p.phi_max());

        let (mut t, mut x, mut phi, mut k) = (0.0, x0, phi0.clamp(0.0, phi_max), regime0);
        let mut jump = self.next_jump(0.0, k, rng);
        let mut discount = 1.0;
        let mut payoff = 0.0;
        let mut occupation = vec![0.0; self.gen.regimes()];
        let mut trace = Vec::new();

        for step in 0..cfg.steps() {
            let mut u = law.control(t, phi, x, k);
            let b = self.model.drift(t, x, k);
            if x <= 0.0 {
                u = u.min(b);
            }
            let (u_eff, mut p) = match self.pc.mode() {
                HarvestMode::Absolute => (u, self.pc.evaluate(t, x, k, u)),
                HarvestMode::VariableEffort => (u * x, self.pc.evaluate(t, x, k, u)),
            };
            if self.price.is_some() {
                p += phi * u_eff;
            }
            if record && step % cfg.trace_stride == 0 {
                trace.push(TracePoint { t, phi, x, regime: k, u, payoff });
            }
            payoff += discount * p * dt;
            occupation[k] += dt;

            let s = self.model.diffusion(t, x, k);
            let z: f64 = rng.sample(StandardNormal);
            x = (x + (b - u_eff) * dt + s * sqrt_dt * z).clamp(0.0, self.upper);
            if let Some(price) = self.price {
                let z0: f64 = rng.sample(StandardNormal);
                let drift = price.drift(phi, k);
                let noise = price.diffusion(phi, k);
                phi = (phi + drift * dt + noise * sqrt_dt * z0).clamp(0.0, phi_max);
            }
            t += dt;
            discount *= decay;
            while jump <= t {
                k = self.jump_target(k, rng);
                jump = self.next_jump(jump, k, rng);
            }
        }
        if record {
            trace.push(TracePoint { t, phi, x, regime: k, u: law.control(t, phi, x, k), payoff });
        }
        Ok(PathOutcome { payoff, occupation, trace })
    }

    /// Mean discounted payoff over `cfg.paths` independent paths.
    pub fn estimate_value<L: ControlLaw + ?Sized>(
        &self,
        law: &L,
        x0: f64,
        phi0: f64,
        regime0: usize,
        cfg: &SimConfig,
    ) -> Result<MCEstimate> {
        self.check_start(x0, regime0)?;
        cfg.validate()?;
        let payoffs: Vec<f64> = (0..cfg.paths)
            .into_par_iter()
            .map(|n| {
                let mut rng = path_rng(cfg.seed, n);
                self.simulate_path(law, x0, phi0, regime0, cfg, &mut rng, false).map(|o| o.payoff)
            })
            .collect::<Result<_>>()?;
        let n = payoffs.len() as f64;
        let mean = payoffs.iter().sum::<f64>() / n;
        let std_error = if payoffs.len() > 1 {
            let var = payoffs.iter().map(|p| (p - mean).powi(2)).sum::<f64>() / (n - 1.0);
            (var / n).sqrt()
        } else {
            0.0
        };
        Ok(MCEstimate {
            mean,
            std_error,
            tail_bound: self.tail_bound(law, cfg.horizon),
            paths: cfg.paths,
            dt: cfg.dt,
            horizon: cfg.horizon,
        })
    }

    /// `‖p‖∞ e^{−δH}/δ` over the controls the law can produce.
    pub fn tail_bound<L: ControlLaw + ?Sized>(&self, law: &L, horizon: f64) -> f64 {
        let controls = law.values();
        let mut sup = self.pc.sup_norm(self.upper, self.gen.regimes(), &controls);
        if let Some(price) = self.price {
            let reach = match self.pc.mode() {
                HarvestMode::Absolute => 1.0,
                HarvestMode::VariableEffort => self.upper,
            };
            sup += price.phi_max() * reach * controls.iter().fold(0.0_f64, |a, u| a.max(u.abs()));
        }
        sup * (-self.delta * horizon).exp() / self.delta
    }
}

/// The generator for path `n` under `seed`.
pub fn path_rng(seed: u64, n: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(n as u64);
    rng
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{catalog, ModelParams};
    use crate::economics::{catalog_cost, CostParams};
    use std::sync::Arc;

    fn zero_cost(price: f64) -> PriceCostSpec {
        PriceCostSpec::constant_price(
            vec![price],
            catalog_cost("zero", &CostParams::default()).unwrap(),
            HarvestMode::Absolute,
        )
    }

    #[test]
    fn deterministic_logistic_path() {
        let model = catalog("verhulst", &ModelParams { mu: vec![1.0], kappa: Some(vec![1.0]), sigma: Some(vec![0.0]), ..Default::default() }).unwrap();
        let gen = SwitchingGenerator::single();
        let pc = zero_cost(1.0);
        let sim = Simulator::new(&model, &gen, &pc, 0.02, 4.0).unwrap();
        let cfg = SimConfig { paths: 1, dt: 1e-4, horizon: 1.0, seed: 3, trace_stride: 10_000 };
        let out = sim.simulate_path(&ConstantControl(0.0), 0.5, 0.0, 0, &cfg, &mut path_rng(3, 0), true).unwrap();
        let exact = 1.0 / (1.0 + (-1.0_f64).exp());
        let last = out.trace.last().unwrap();
        assert!((last.x - exact).abs() < 1e-4, "{} vs {exact}", last.x);
    }

    #[test]
    fn extinct_state_is_absorbing() {
        let model = catalog("verhulst", &ModelParams { mu: vec![3.0, 2.0], ..Default::default() }).unwrap();
        let gen = SwitchingGenerator::symmetric(0.1).unwrap();
        let pc = zero_cost(1.0);
        let sim = Simulator::new(&model, &gen, &pc, 0.02, 4.0).unwrap();
        let cfg = SimConfig { paths: 4, dt: 1e-2, horizon: 50.0, seed: 1, trace_stride: 100 };
        let est = sim.estimate_value(&ConstantControl(3.0), 0.0, 0.0, 0, &cfg).unwrap();
        assert_eq!(est.mean, 0.0);
        assert_eq!(est.std_error, 0.0);
    }

    #[test]
    fn unit_reward_integrates_the_discount() {
        let model = catalog("verhulst", &ModelParams { mu: vec![3.0, 2.0], ..Default::default() }).unwrap();
        let gen = SwitchingGenerator::symmetric(1.0).unwrap();
        let pc = PriceCostSpec::new(
            Arc::new(|_, _, _, _| 0.0),
            crate::economics::CostFunction::new("minus_one", Arc::new(|_, _, _, _| -1.0)),
            HarvestMode::Absolute,
        );
        let sim = Simulator::new(&model, &gen, &pc, 0.02, 4.0).unwrap();
        let cfg = SimConfig { paths: 3, dt: 1e-2, horizon: 100.0, seed: 9, trace_stride: 100 };
        let est = sim.estimate_value(&ConstantControl(0.0), 1.0, 0.0, 1, &cfg).unwrap();
        let exact = (1.0 - (-0.02_f64 * 100.0).exp()) / 0.02;
        assert!((est.mean - exact).abs() < 0.01 * 0.5, "{} vs {exact}", est.mean);
        assert!(est.std_error < 1e-12);
    }

    #[test]
    fn seeded_runs_repeat_exactly() {
        let model = catalog("verhulst", &ModelParams { mu: vec![3.0, 2.0], ..Default::default() }).unwrap();
        let gen = SwitchingGenerator::symmetric(0.5).unwrap();
        let pc = zero_cost(1.0);
        let sim = Simulator::new(&model, &gen, &pc, 0.02, 4.0).unwrap();
        let law = ThresholdControl { level: 0.6, below: -1.0, above: 1.0 };
        let cfg = SimConfig { paths: 16, dt: 1e-2, horizon: 20.0, seed: 42, trace_stride: 100 };
        let a = sim.estimate_value(&law, 1.0, 0.0, 0, &cfg).unwrap();
        let b = sim.estimate_value(&law, 1.0, 0.0, 0, &cfg).unwrap();
        assert_eq!(a, b);
        let c = sim.estimate_value(&law, 1.0, 0.0, 0, &SimConfig { seed: 43, ..cfg }).unwrap();
        assert_ne!(a.mean, c.mean);
    }

    #[test]
    fn occupation_follows_the_stationary_law() {
        let model = catalog("verhulst", &ModelParams { mu: vec![3.0, 2.0], ..Default::default() }).unwrap();
        let gen = SwitchingGenerator::new(vec![vec![-1.0, 1.0], vec![3.0, -3.0]]).unwrap();
        let pc = zero_cost(0.0);
        let sim = Simulator::new(&model, &gen, &pc, 0.02, 4.0).unwrap();
        let cfg = SimConfig { paths: 1, dt: 1e-2, horizon: 5000.0, seed: 5, trace_stride: 1000 };
        let out = sim.simulate_path(&ConstantControl(0.0), 1.0, 0.0, 0, &cfg, &mut path_rng(5, 0), false).unwrap();
        let share = out.occupation[0] / cfg.horizon;
        assert!((share - 0.75).abs() < 0.03, "share {share}");
    }
}
