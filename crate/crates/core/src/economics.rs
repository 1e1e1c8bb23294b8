//! Price-cost functions `p(t, x, α, u)`.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Evaluator `(t, x, regime, u) -> value`.
pub type ControlFn = Arc<dyn Fn(f64, f64, usize, f64) -> f64 + Send + Sync>;

/// Whether the control is an absolute rate `U` or an effort with harvest
/// rate `U·X`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HarvestMode {
    Absolute,
    VariableEffort,
}

/// A cost `C(t, x, α, u)`, with an optional exclusive lower bound on `u`
/// outside of which it is undefined.
#[derive(Clone)]
pub struct CostFunction {
    name: String,
    eval: ControlFn,
    lower_limit: Option<f64>,
}

impl fmt::Debug for CostFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CostFunction")
            .field("name", &self.name)
            .field("lower_limit", &self.lower_limit)
            .finish_non_exhaustive()
    }
}

impl CostFunction {
    pub fn new(name: impl Into<String>, eval: ControlFn) -> Self {
        Self { name: name.into(), eval, lower_limit: None }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn admits(&self, u: f64) -> bool {
        self.lower_limit.is_none_or(|lo| u > lo)
    }

    #[inline]
    pub fn eval(&self, t: f64, x: f64, regime: usize, u: f64) -> f64 {
        (self.eval)(t, x, regime, u)
    }

    pub fn try_eval(&self, t: f64, x: f64, regime: usize, u: f64) -> Result<f64> {
        if !self.admits(u) {
            return Err(Error::DomainError { cost: self.name.clone(), u });
        }
        Ok(self.eval(t, x, regime, u))
    }
}

/// Parameters for [`catalog_cost`].
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostParams {
    /// Multiplier of the cost shape; the quadratic default is `1/2`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scale: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub period: Option<f64>,
}

/// Catalog costs:
///
/// | name | `C(t, u)` |
/// |------|-----------|
/// | `zero` | `0` |
/// | `quadratic` | `s·u²`, `s = 1/2` by default |
/// | `sqrt_abs` | `s·√|u|` |
/// | `log1p` | `s·ln(1 + u/3)`, defined for `u > −3` |
/// | `abs` | `s·|u|` |
/// | `seasonal_quadratic` | `(1 + sin(2πt/T))·s·u²` |
pub fn catalog_cost(name: &str, params: &CostParams) -> Result<CostFunction> {
    let default_scale = if name.contains("quadratic") { 0.5 } else { 1.0 };
    let s = params.scale.unwrap_or(default_scale);
    if !s.is_finite() {
        return Err(Error::InvalidParams(format!("cost scale must be finite, got {s}")));
    }
    let eval: ControlFn = match name {
        "zero" => Arc::new(|_, _, _, _| 0.0),
        "quadratic" => Arc::new(move |_, _, _, u| s * u * u),
        "sqrt_abs" => Arc::new(move |_, _, _, u| s * u.abs().sqrt()),
        "abs" => Arc::new(move |_, _, _, u| s * u.abs()),
        "log1p" => {
            return Ok(CostFunction {
                name: name.into(),
                eval: Arc::new(move |_, _, _, u| s * (u / 3.0).ln_1p()),
                lower_limit: Some(-3.0),
            })
        }
        "seasonal_quadratic" => {
            let period = params.period.unwrap_or(1.0);
            if !(period > 0.0) {
                return Err(Error::InvalidParams(format!("period must be positive, got {period}")));
            }
            let omega = 2.0 * PI / period;
            Arc::new(move |t, _, _, u| (1.0 + (omega * t).sin()) * s * u * u)
        }
        other => return Err(Error::UnknownCost(other.to_string())),
    };
    Ok(CostFunction::new(name, eval))
}

/// Per-unit price as a function of the supplied quantity `u`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DemandForm {
    Constant { price: f64 },
    /// `κ₁ − κ₂u`, clamped to `[0, cap]`.
    Linear { k1: f64, k2: f64, cap: f64 },
    /// `κ₁|κ₂ + u|^{1/ε}`, capped at `cap`.
    IsoElastic { k1: f64, k2: f64, elasticity: f64, cap: f64 },
    /// `|1 + u/κ₂|^{1/ε}`, capped at `cap`.
    NormalizedIsoElastic { k2: f64, elasticity: f64, cap: f64 },
}

impl DemandForm {
    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            DemandForm::Constant { price } => price.is_finite() && price >= 0.0,
            DemandForm::Linear { k1, k2, cap } => k1 > 0.0 && k2 > 0.0 && cap > 0.0,
            DemandForm::IsoElastic { k1, k2, elasticity, cap } => {
                k1 > 0.0 && k2 > 0.0 && elasticity < 0.0 && cap > 0.0
            }
            DemandForm::NormalizedIsoElastic { k2, elasticity, cap } => k2 > 0.0 && elasticity < 0.0 && cap > 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParams(format!("invalid demand form {self:?}")))
        }
    }
}

pub fn demand_price(form: &DemandForm, u: f64) -> f64 {
    match *form {
        DemandForm::Constant { price } => price,
        DemandForm::Linear { k1, k2, cap } => {
            let p = k1 - k2 * u;
            if p >= cap {
                cap
            } else if p > 0.0 {
                p
            } else {
                0.0
            }
        }
        DemandForm::IsoElastic { k1, k2, elasticity, cap } => (k1 * (k2 + u).abs().powf(1.0 / elasticity)).min(cap),
        DemandForm::NormalizedIsoElastic { k2, elasticity, cap } => {
            (1.0 + u / k2).abs().powf(1.0 / elasticity).min(cap)
        }
    }
}

/// `p = P·u − C` (absolute) or `p = P·x·u − C` (variable effort).
#[derive(Clone)]
pub struct PriceCostSpec {
    price: ControlFn,
    cost: CostFunction,
    mode: HarvestMode,
    period: Option<f64>,
}

impl fmt::Debug for PriceCostSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PriceCostSpec")
            .field("cost", &self.cost)
            .field("mode", &self.mode)
            .field("period", &self.period)
            .finish_non_exhaustive()
    }
}

impl PriceCostSpec {
    pub fn new(price: ControlFn, cost: CostFunction, mode: HarvestMode) -> Self {
        Self { price, cost, mode, period: None }
    }

    /// Regime-wise constant price; a single entry applies to all regimes.
    pub fn constant_price(prices: Vec<f64>, cost: CostFunction, mode: HarvestMode) -> Self {
        let price: ControlFn = if prices.len() == 1 {
            let p = prices[0];
            Arc::new(move |_, _, _, _| p)
        } else {
            Arc::new(move |_, _, k, _| prices[k])
        };
        Self::new(price, cost, mode)
    }

    pub fn demand(form: DemandForm, cost: CostFunction, mode: HarvestMode) -> Self {
        Self::new(Arc::new(move |_, _, _, u| demand_price(&form, u)), cost, mode)
    }

    pub fn with_period(mut self, period: f64) -> Self {
        self.period = Some(period);
        self
    }

    pub fn mode(&self) -> HarvestMode {
        self.mode
    }

    pub fn period(&self) -> Option<f64> {
        self.period
    }

    pub fn cost(&self) -> &CostFunction {
        &self.cost
    }

    #[inline]
    pub fn price(&self, t: f64, x: f64, regime: usize, u: f64) -> f64 {
        (self.price)(t, x, regime, u)
    }

    /// The price-cost rate. Outside the cost's domain this is whatever the
    /// cost formula yields (NaN for `log1p`); see [`Self::try_evaluate`].
    #[inline]
    pub fn evaluate(&self, t: f64, x: f64, regime: usize, u: f64) -> f64 {
        let revenue = match self.mode {
            HarvestMode::Absolute => self.price(t, x, regime, u) * u,
            HarvestMode::VariableEffort => self.price(t, x, regime, u) * x * u,
        };
        revenue - self.cost.eval(t, x, regime, u)
    }

    pub fn try_evaluate(&self, t: f64, x: f64, regime: usize, u: f64) -> Result<f64> {
        if !self.cost.admits(u) {
            return Err(Error::DomainError { cost: self.cost.name.clone(), u });
        }
        Ok(self.evaluate(t, x, regime, u))
    }

    /// Sampled `sup |p|` over `x ∈ [0, upper]`, all regimes, the given
    /// controls and, for periodic specs, a period's worth of times.
    pub fn sup_norm(&self, upper: f64, regimes: usize, controls: &[f64]) -> f64 {
        let times: Vec<f64> = match self.period {
            Some(p) => (0..64).map(|i| p * i as f64 / 64.0).collect(),
            None => vec![0.0],
        };
        let mut sup: f64 = 0.0;
        for &t in &times {
            for i in 0..=64 {
                let x = upper * i as f64 / 64.0;
                for k in 0..regimes {
                    for &u in controls.iter().filter(|u| self.cost.admits(**u)) {
                        sup = sup.max(self.evaluate(t, x, k, u).abs());
                    }
                }
            }
        }
        sup
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn constant(cost: &str) -> PriceCostSpec {
        PriceCostSpec::constant_price(
            vec![1.0],
            catalog_cost(cost, &CostParams::default()).unwrap(),
            HarvestMode::Absolute,
        )
    }

    #[test]
    fn evaluate_examples() {
        assert_eq!(constant("zero").evaluate(0.0, 2.0, 1, 1.5), 1.5);
        assert_eq!(constant("quadratic").evaluate(0.0, 1.0, 0, 1.0), 0.5);
        let effort = PriceCostSpec::constant_price(
            vec![1.0],
            catalog_cost("quadratic", &CostParams { scale: Some(1.0), period: None }).unwrap(),
            HarvestMode::VariableEffort,
        );
        assert_eq!(effort.evaluate(0.0, 2.0, 0, 0.5), 0.75);
    }

    #[test]
    fn linear_in_u_without_cost() {
        let spec = PriceCostSpec::constant_price(
            vec![1.75],
            catalog_cost("zero", &CostParams::default()).unwrap(),
            HarvestMode::Absolute,
        );
        for u in [-2.0, -0.3, 0.0, 0.7, 3.0] {
            assert_eq!(spec.evaluate(0.0, 1.0, 0, u), 1.75 * u);
        }
    }

    #[test]
    fn demand_examples() {
        let linear = DemandForm::Linear { k1: 1.0, k2: 0.25, cap: 10.0 };
        assert_eq!(demand_price(&linear, 0.0), 1.0);
        assert_eq!(demand_price(&linear, 8.0), 0.0);
        assert_eq!(demand_price(&linear, -100.0), 10.0);

        let generic = DemandForm::IsoElastic { k1: 1.0, k2: 3.0, elasticity: -1.0, cap: 10.0 };
        assert!((demand_price(&generic, 0.0) - 1.0 / 3.0).abs() < 1e-15);
        let normalized = DemandForm::NormalizedIsoElastic { k2: 3.0, elasticity: -1.0, cap: 10.0 };
        assert_eq!(demand_price(&normalized, 0.0), 1.0);
        assert!((demand_price(&normalized, 3.0) - 0.5).abs() < 1e-15);
        // |1 + u/3|^{-1} blows up at u = −3 and is capped.
        assert_eq!(demand_price(&normalized, -3.0), 10.0);
    }

    #[test]
    fn demand_is_bounded_and_nonincreasing() {
        let forms = [
            DemandForm::Linear { k1: 1.0, k2: 0.25, cap: 10.0 },
            DemandForm::NormalizedIsoElastic { k2: 3.0, elasticity: -1.0, cap: 10.0 },
            DemandForm::IsoElastic { k1: 2.0, k2: 3.0, elasticity: -0.5, cap: 5.0 },
        ];
        for form in &forms {
            let mut prev = f64::INFINITY;
            for i in 0..=600 {
                let u = -2.0 + i as f64 * 0.01;
                let p = demand_price(form, u);
                assert!((0.0..=10.0).contains(&p));
                assert!(p <= prev + 1e-15, "{form:?} increases at u={u}");
                prev = p;
            }
        }
    }

    #[test]
    fn linear_revenue_is_concave() {
        let linear = DemandForm::Linear { k1: 1.0, k2: 0.25, cap: 10.0 };
        let step = 0.01;
        let rev: Vec<f64> = (0..=400)
            .map(|i| {
                let u = i as f64 * step;
                demand_price(&linear, u) * u
            })
            .collect();
        for w in rev.windows(3) {
            assert!(w[0] - 2.0 * w[1] + w[2] <= 1e-12);
        }
    }

    #[test]
    fn catalog_costs() {
        let p = CostParams::default();
        assert_eq!(catalog_cost("quadratic", &p).unwrap().eval(0.0, 1.0, 0, -2.0), 2.0);
        for name in ["zero", "quadratic", "sqrt_abs", "log1p", "abs", "seasonal_quadratic"] {
            let c = catalog_cost(name, &p).unwrap();
            for t in [0.0, 0.25, 0.6] {
                assert_eq!(c.eval(t, 1.3, 0, 0.0), 0.0, "{name}");
            }
        }
        let seasonal = catalog_cost("seasonal_quadratic", &p).unwrap();
        assert!((seasonal.eval(0.25, 0.0, 0, 1.0) - 1.0).abs() < 1e-15);
        assert!((seasonal.eval(0.25, 0.0, 0, 1.0) - seasonal.eval(1.25, 0.0, 0, 1.0)).abs() < 1e-12);
        assert!(matches!(catalog_cost("cubic", &p), Err(Error::UnknownCost(_))));
    }

    #[test]
    fn log1p_domain() {
        let c = catalog_cost("log1p", &CostParams::default()).unwrap();
        assert!(matches!(c.try_eval(0.0, 1.0, 0, -3.0), Err(Error::DomainError { .. })));
        assert!(matches!(c.try_eval(0.0, 1.0, 0, -4.0), Err(Error::DomainError { .. })));
        assert!((c.try_eval(0.0, 1.0, 0, 3.0).unwrap() - 2f64.ln()).abs() < 1e-15);
        let spec = PriceCostSpec::constant_price(vec![1.0], c, HarvestMode::Absolute);
        assert!(spec.try_evaluate(0.0, 1.0, 0, -3.5).is_err());
    }

    #[test]
    fn seasonal_spec_is_periodic() {
        let spec = PriceCostSpec::constant_price(
            vec![1.0],
            catalog_cost("seasonal_quadratic", &CostParams::default()).unwrap(),
            HarvestMode::Absolute,
        )
        .with_period(1.0);
        for i in 0..50 {
            let t = i as f64 * 0.0731;
            for u in [-1.0, 0.35, 2.0] {
                let a = spec.evaluate(t, 1.0, 0, u);
                let b = spec.evaluate(t + 1.0, 1.0, 0, u);
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn sup_norm_covers_controls() {
        let controls: Vec<f64> = (-4..=6).map(|k| k as f64 * 0.5).collect();
        assert_eq!(constant("zero").sup_norm(4.0, 2, &controls), 3.0);
        // max |u − u²/2| on [−2, 3] is at u = −2.
        assert_eq!(constant("quadratic").sup_norm(4.0, 2, &controls), 4.0);
    }
}
