//! Experiment files.
//!
//! An experiment is a TOML document:
//!
//! ```toml
//! name = "fig1"
//! formulation = "baseline"
//! delta = 0.02
//!
//! [dynamics]
//! model = "verhulst"
//! switching_rate = 0.1
//! [dynamics.params]
//! mu = [3.0, 2.0]
//!
//! [economics]
//! price = [1.0]
//! cost = "zero"
//!
//! [kernel]
//! h = 0.02
//! upper = 4.0
//! [kernel.controls]
//! step = 0.01
//! ```
//!
//! `delta` has no default. The generator is given either as
//! `switching_rate` (all off-diagonal rates equal; `inf` selects the
//! fast-switching averaged model) or as a full `generator` matrix.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dynamics::{averaged_model, catalog, ModelParams, ModelSpec, PriceDynamicsSpec, SwitchingGenerator};
use crate::economics::{catalog_cost, CostParams, DemandForm, HarvestMode, PriceCostSpec};
use crate::error::{Error, Result};
use crate::grid::{ControlSet, Grid1D, Grid2D};
use crate::kernel::{
    build_baseline, build_stochastic_price, build_variable_effort, consistency_check, ConsistencyReport,
    Formulation, PeriodicKernel, TransitionKernel,
};
use crate::montecarlo::{SimConfig, Simulator};
use crate::solver::{pricecost_reward, solve_periodic, value_iteration, Solution, SolverOptions};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub formulation: Formulation,
    pub delta: f64,
    pub dynamics: DynamicsSection,
    pub economics: EconomicsSection,
    pub kernel: KernelSection,
    #[serde(default)]
    pub solver: SolverOptions,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub montecarlo: Option<MonteCarloSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSection>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DynamicsSection {
    pub model: String,
    #[serde(default)]
    pub params: ModelParams,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub switching_rate: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generator: Option<Vec<Vec<f64>>>,
    /// Logistic price dynamics, stochastic-price formulation only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub price: Option<PriceSection>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriceSection {
    pub rate: f64,
    pub level: f64,
    pub noise: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EconomicsSection {
    #[serde(default = "absolute")]
    pub mode: HarvestMode,
    /// Regime-wise constant prices; one entry applies to every regime.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub price: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub demand: Option<DemandForm>,
    pub cost: String,
    #[serde(default)]
    pub cost_params: CostParams,
}

fn absolute() -> HarvestMode {
    HarvestMode::Absolute
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelSection {
    /// Population mesh (`h₂` on the time cylinder).
    pub h: f64,
    #[serde(default = "default_upper")]
    pub upper: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phi_max: Option<f64>,
    /// Time step of the periodic formulation.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h1: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub period: Option<f64>,
    #[serde(default)]
    pub controls: ControlsSection,
}

fn default_upper() -> f64 {
    4.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ControlsSection {
    pub min: f64,
    pub max: f64,
    pub step: f64,
}

impl Default for ControlsSection {
    fn default() -> Self {
        Self { min: -2.0, max: 3.0, step: 1.0 / 500.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MonteCarloSection {
    pub paths: usize,
    pub dt: f64,
    pub horizon: f64,
    pub seed: u64,
    pub trace_stride: usize,
    /// Starting states `[x0, regime]`, regimes numbered from 1.
    pub starts: Vec<(f64, usize)>,
    pub phi0: f64,
    /// Alternative laws simulated next to the computed policy:
    /// `"zero"`, `"max"`, `"min"`, `"constant:<u>"` or `"threshold:<x>"`.
    pub alternatives: Vec<String>,
    /// Write the first path of each start as a trace file.
    pub trace: bool,
}

impl Default for MonteCarloSection {
    fn default() -> Self {
        let sim = SimConfig::default();
        Self {
            paths: sim.paths,
            dt: sim.dt,
            horizon: sim.horizon,
            seed: sim.seed,
            trace_stride: sim.trace_stride,
            starts: Vec::new(),
            phi0: 0.0,
            alternatives: Vec::new(),
            trace: false,
        }
    }
}

impl MonteCarloSection {
    pub fn config(&self) -> SimConfig {
        SimConfig {
            paths: self.paths,
            dt: self.dt,
            horizon: self.horizon,
            seed: self.seed,
            trace_stride: self.trace_stride,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    /// Dotted path of the swept entry, e.g. `dynamics.switching_rate`.
    pub parameter: String,
    pub values: Vec<f64>,
}

impl ExperimentConfig {
    /// Parses and validates a document. Errors name the offending line.
    pub fn parse(src: &str) -> Result<Self> {
        let value: toml::Value = toml::from_str(src).map_err(|e| Error::Config(e.to_string()))?;
        Self::from_value(value, Some(src))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let src = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&src).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    /// Deserializes and validates a TOML tree. `src`, when given, is used
    /// to locate semantic errors.
    pub fn from_value(value: toml::Value, src: Option<&str>) -> Result<Self> {
        let text = match src {
            Some(s) => s.to_string(),
            None => toml::to_string(&value).map_err(|e| Error::Config(e.to_string()))?,
        };
        let cfg: Self = toml::from_str(&text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate().map_err(|e| locate(e, &text))?;
        Ok(cfg)
    }

    pub fn to_value(&self) -> toml::Value {
        toml::Value::try_from(self).expect("config serializes")
    }

    /// Returns a copy with the dotted `path` set to `value`.
    pub fn with_override(&self, path: &str, value: toml::Value) -> Result<Self> {
        let mut tree = self.to_value();
        set_path(&mut tree, path, value)?;
        Self::from_value(tree, None)
    }

    /// SHA-256 of the canonical serialization.
    pub fn hash(&self) -> String {
        let canonical = toml::to_string(self).expect("config serializes");
        let digest = Sha256::digest(canonical.as_bytes());
        let mut hex = String::with_capacity(64);
        for b in digest {
            let _ = write!(hex, "{b:02x}");
        }
        hex
    }

    pub fn name(&self) -> &str {
        self.name.as_deref().unwrap_or("experiment")
    }

    /// Comment line written at the top of every output file.
    pub fn header(&self) -> String {
        format!("# name={} formulation={} config_hash={}", self.name(), self.formulation, self.hash())
    }

    fn validate(&self) -> Result<()> {
        if !(self.delta > 0.0 && self.delta.is_finite()) {
            return Err(field("delta", format!("must be positive, got {}", self.delta)));
        }
        if !(self.solver.tolerance > 0.0) {
            return Err(field("tolerance", "must be positive".into()));
        }
        match (&self.dynamics.switching_rate, &self.dynamics.generator) {
            (Some(_), Some(_)) => {
                return Err(field("generator", "give either switching_rate or generator, not both".into()))
            }
            (Some(q), None) if !(*q >= 0.0) => {
                return Err(field("switching_rate", format!("must be nonnegative, got {q}")))
            }
            _ => {}
        }
        match (&self.economics.price, &self.economics.demand) {
            (Some(_), Some(_)) => return Err(field("demand", "give either price or demand, not both".into())),
            (None, None) => return Err(field("economics", "needs a price list or a demand table".into())),
            _ => {}
        }
        if self.formulation == Formulation::StochasticPrice && self.dynamics.price.is_none() {
            return Err(field("dynamics", "stochastic_price needs a [dynamics.price] table".into()));
        }
        if self.formulation == Formulation::Periodic && self.kernel.h1.is_none() {
            return Err(field("h", "periodic formulation needs kernel.h1".into()));
        }
        if let Some(mc) = &self.montecarlo {
            mc.config().validate().map_err(|e| field("montecarlo", e.to_string()))?;
            for alt in &mc.alternatives {
                parse_alternative(alt, -1.0, 1.0).map_err(|e| field("alternatives", e.to_string()))?;
            }
        }
        self.build().map(|_| ())
    }

    /// Assembles the model, economics and lattice.
    pub fn build(&self) -> Result<Experiment> {
        let model = catalog(&self.dynamics.model, &self.dynamics.params)
            .map_err(|e| field("model", e.to_string()))?;
        let m = model.regimes();
        let (model, gen) = match (&self.dynamics.generator, self.dynamics.switching_rate) {
            (Some(rows), _) => {
                let gen = SwitchingGenerator::new(rows.clone()).map_err(|e| field("generator", e.to_string()))?;
                (model, gen)
            }
            (None, Some(q)) if q.is_infinite() => {
                let full = uniform_generator(m, 1.0)?;
                let avg = averaged_model(&model, &full).map_err(|e| field("switching_rate", e.to_string()))?;
                (avg, SwitchingGenerator::single())
            }
            (None, q) => (model, uniform_generator(m, q.unwrap_or(0.0))?),
        };
        if gen.regimes() != model.regimes() {
            return Err(field(
                "generator",
                format!("has {} regimes but the model has {}", gen.regimes(), model.regimes()),
            ));
        }
        let model = match (self.formulation, model.period()) {
            (Formulation::Periodic, None) => model.with_period(self.kernel.period.unwrap_or(1.0))?,
            _ => model,
        };

        let cost_period = self.economics.cost_params.period.or(self.kernel.period);
        let cost_params = CostParams { period: cost_period, ..self.economics.cost_params.clone() };
        let cost = catalog_cost(&self.economics.cost, &cost_params).map_err(|e| field("cost", e.to_string()))?;
        let mut pc = match (&self.economics.price, self.economics.demand) {
            (Some(prices), _) => {
                if prices.len() != 1 && prices.len() != model.regimes() {
                    return Err(field(
                        "price",
                        format!("has {} entries, expected 1 or {}", prices.len(), model.regimes()),
                    ));
                }
                PriceCostSpec::constant_price(prices.clone(), cost, self.economics.mode)
            }
            (None, Some(form)) => {
                form.validate().map_err(|e| field("demand", e.to_string()))?;
                PriceCostSpec::demand(form, cost, self.economics.mode)
            }
            (None, None) => unreachable!("checked by validate"),
        };
        let expects_effort = self.formulation == Formulation::VariableEffort;
        if expects_effort != (self.economics.mode == HarvestMode::VariableEffort) {
            return Err(field(
                "mode",
                format!("{} formulation needs mode = {:?}", self.formulation, if expects_effort { "variable_effort" } else { "absolute" }),
            ));
        }
        if self.formulation == Formulation::Periodic {
            pc = pc.with_period(model.period().unwrap_or(1.0));
        }

        let price = match self.dynamics.price {
            Some(p) if self.formulation == Formulation::StochasticPrice => {
                Some(PriceDynamicsSpec::logistic(p.rate, p.level, p.noise).map_err(|e| field("price", e.to_string()))?)
            }
            _ => None,
        };
        let k = &self.kernel;
        let controls =
            ControlSet::from_range(k.controls.min, k.controls.max, k.controls.step).map_err(|e| field("controls", e.to_string()))?;
        let lattice = match self.formulation {
            Formulation::Baseline | Formulation::VariableEffort => {
                Lattice::Line(Grid1D::new(k.h, k.upper).map_err(|e| field("h", e.to_string()))?)
            }
            Formulation::StochasticPrice => {
                let phi_max = k.phi_max.or(price.as_ref().map(PriceDynamicsSpec::phi_max)).unwrap_or(1.0);
                Lattice::Plane(Grid2D::price(k.h, phi_max, k.upper).map_err(|e| field("h", e.to_string()))?)
            }
            Formulation::Periodic => {
                let period = model.period().unwrap_or(1.0);
                let h1 = k.h1.unwrap_or(period / 4000.0);
                Lattice::Plane(Grid2D::periodic(h1, period, k.h, k.upper).map_err(|e| field("h1", e.to_string()))?)
            }
        };
        model.validate(k.upper).map_err(|e| field("model", e.to_string()))?;
        Ok(Experiment {
            formulation: self.formulation,
            model,
            gen,
            pc,
            price,
            lattice,
            controls,
            delta: self.delta,
            solver: self.solver,
        })
    }
}

/// `q` between every pair of distinct regimes.
fn uniform_generator(m: usize, q: f64) -> Result<SwitchingGenerator> {
    let rows = (0..m)
        .map(|i| (0..m).map(|j| if i == j { -(m as f64 - 1.0) * q } else { q }).collect())
        .collect();
    SwitchingGenerator::new(rows).map_err(|e| field("switching_rate", e.to_string()))
}

/// Semantic error attached to a config key; [`locate`] adds the line.
fn field(key: &str, msg: String) -> Error {
    Error::Config(format!("`{key}`: {msg}"))
}

fn locate(err: Error, src: &str) -> Error {
    let Error::Config(msg) = &err else { return err };
    let Some(key) = msg.strip_prefix('`').and_then(|m| m.split('`').next()) else { return err };
    let line = src.lines().position(|l| {
        let t = l.trim_start();
        t.starts_with(key) && t[key.len()..].trim_start().starts_with('=')
            || t.trim_start_matches('[').trim_end_matches(']').rsplit('.').next() == Some(key)
    });
    match line {
        Some(n) => Error::Config(format!("line {}: {msg}", n + 1)),
        None => err,
    }
}

fn set_path(tree: &mut toml::Value, path: &str, value: toml::Value) -> Result<()> {
    let mut node = tree;
    let parts: Vec<&str> = path.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        let table = node
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("`{path}`: `{}` is not a table", parts[..i].join("."))))?;
        if i + 1 == parts.len() {
            table.insert(part.to_string(), value);
            return Ok(());
        }
        node = table.entry(part.to_string()).or_insert_with(|| toml::Value::Table(Default::default()));
    }
    Err(Error::Config(format!("empty parameter path `{path}`")))
}

/// Parses an alternative control law name against the control range.
pub fn parse_alternative(name: &str, min: f64, max: f64) -> Result<crate::montecarlo::AnyControl> {
    use crate::montecarlo::{AnyControl, ConstantControl, ThresholdControl};
    let bad = || Error::Config(format!("unknown alternative policy `{name}`"));
    Ok(match name {
        "zero" => AnyControl::Constant(ConstantControl(0.0)),
        "max" => AnyControl::Constant(ConstantControl(max)),
        "min" => AnyControl::Constant(ConstantControl(min)),
        _ => match name.split_once(':') {
            Some(("constant", v)) => AnyControl::Constant(ConstantControl(v.parse().map_err(|_| bad())?)),
            Some(("threshold", v)) => {
                AnyControl::Threshold(ThresholdControl { level: v.parse().map_err(|_| bad())?, below: min, above: max })
            }
            _ => return Err(bad()),
        },
    })
}

#[derive(Debug, Clone, Copy)]
pub enum Lattice {
    Line(Grid1D),
    Plane(Grid2D),
}

impl Lattice {
    pub fn population(&self) -> &Grid1D {
        match self {
            Lattice::Line(g) => g,
            Lattice::Plane(g) => g.population(),
        }
    }
}

/// Either kernel type.
#[derive(Debug, Clone)]
pub enum AnyKernel {
    Materialized(TransitionKernel),
    Periodic(PeriodicKernel),
}

/// A validated, fully assembled experiment.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub formulation: Formulation,
    pub model: ModelSpec,
    pub gen: SwitchingGenerator,
    pub pc: PriceCostSpec,
    pub price: Option<PriceDynamicsSpec>,
    pub lattice: Lattice,
    pub controls: ControlSet,
    pub delta: f64,
    pub solver: SolverOptions,
}

impl Experiment {
    pub fn kernel(&self) -> Result<AnyKernel> {
        let controls = self.controls.clone();
        Ok(match (self.formulation, self.lattice) {
            (Formulation::Baseline, Lattice::Line(g)) => {
                AnyKernel::Materialized(build_baseline(&self.model, &self.gen, g, controls)?)
            }
            (Formulation::VariableEffort, Lattice::Line(g)) => {
                AnyKernel::Materialized(build_variable_effort(&self.model, &self.gen, g, controls)?)
            }
            (Formulation::StochasticPrice, Lattice::Plane(g)) => {
                let price = self.price.as_ref().expect("built with price dynamics");
                AnyKernel::Materialized(build_stochastic_price(&self.model, &self.gen, price, g, controls)?)
            }
            (Formulation::Periodic, Lattice::Plane(g)) => {
                AnyKernel::Periodic(PeriodicKernel::new(&self.model, &self.gen, g, controls)?)
            }
            _ => unreachable!("lattice matches formulation"),
        })
    }

    pub fn solve(&self) -> Result<Solution> {
        match self.kernel()? {
            AnyKernel::Materialized(k) => value_iteration(&k, &self.pc, self.delta, &self.solver),
            AnyKernel::Periodic(k) => {
                let reward = pricecost_reward(Formulation::Periodic, &self.pc);
                solve_periodic(&k, &reward, self.delta, &self.solver)
            }
        }
    }

    /// Exhaustive local-consistency check with the given tolerance.
    pub fn check(&self, tolerance: f64) -> Result<ConsistencyReport> {
        Ok(match self.kernel()? {
            AnyKernel::Materialized(k) => consistency_check(&k, &self.model, &self.gen, self.price.as_ref(), tolerance),
            AnyKernel::Periodic(k) => consistency_check(&k, &self.model, &self.gen, None, tolerance),
        })
    }

    pub fn simulator(&self) -> Result<Simulator<'_>> {
        let sim = Simulator::new(&self.model, &self.gen, &self.pc, self.delta, self.lattice.population().upper())?;
        Ok(match &self.price {
            Some(p) => sim.with_price(p),
            None => sim,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const FIG1: &str = r#"
name = "fig1"
formulation = "baseline"
delta = 0.02

[dynamics]
model = "verhulst"
switching_rate = 0.1
[dynamics.params]
mu = [3.0, 2.0]

[economics]
price = [1.0]
cost = "zero"

[kernel]
h = 0.1
upper = 4.0
[kernel.controls]
step = 0.5
"#;

    #[test]
    fn parses_and_builds() {
        let cfg = ExperimentConfig::parse(FIG1).unwrap();
        let exp = cfg.build().unwrap();
        assert_eq!(exp.gen.regimes(), 2);
        assert_eq!(exp.controls.len(), 11);
        assert_eq!(cfg.hash(), ExperimentConfig::parse(FIG1).unwrap().hash());
    }

    #[test]
    fn missing_delta_is_reported() {
        let src = FIG1.replace("delta = 0.02\n", "");
        match ExperimentConfig::parse(&src) {
            Err(Error::Config(msg)) => assert!(msg.contains("delta"), "{msg}"),
            other => panic!("expected config error, got {other:?}"),
        }
    }

    #[test]
    fn semantic_errors_name_the_line() {
        let src = FIG1.replace("model = \"verhulst\"", "model = \"bogus\"");
        match ExperimentConfig::parse(&src) {
            Err(Error::Config(msg)) => assert!(msg.starts_with("line 7:"), "{msg}"),
            other => panic!("expected config error, got {other:?}"),
        }
    }

    #[test]
    fn overrides_change_the_hash() {
        let cfg = ExperimentConfig::parse(FIG1).unwrap();
        let other = cfg.with_override("dynamics.switching_rate", toml::Value::Float(1.0)).unwrap();
        assert_eq!(other.dynamics.switching_rate, Some(1.0));
        assert_ne!(cfg.hash(), other.hash());
    }

    #[test]
    fn infinite_rate_selects_the_averaged_model() {
        let cfg = ExperimentConfig::parse(FIG1).unwrap();
        let avg = cfg.with_override("dynamics.switching_rate", toml::Value::Float(f64::INFINITY)).unwrap();
        let exp = avg.build().unwrap();
        assert_eq!(exp.gen.regimes(), 1);
        assert!((exp.model.drift(0.0, 1.0, 0) - 0.5).abs() < 1e-12);
    }
}
