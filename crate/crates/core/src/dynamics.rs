//! Population dynamics with Markovian regime switching.
//!
//! A model is a pair of evaluators `b(t, x, k)` and `σ(t, x, k)` for the
//! controlled diffusion `dX = (b(t, X, α) − U) dt + σ(t, X, α) dw`, where
//! `α` is a continuous-time Markov chain on `{0, …, m0 − 1}` with generator
//! [`SwitchingGenerator`]. Regimes are zero-based in code; file outputs
//! number them from 1.

use std::collections::VecDeque;
use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Evaluator `(t, x, regime) -> value`.
pub type CoefficientFn = Arc<dyn Fn(f64, f64, usize) -> f64 + Send + Sync>;

/// Evaluator `(φ, regime) -> value` for the price process.
pub type PriceCoefficientFn = Arc<dyn Fn(f64, usize) -> f64 + Send + Sync>;

/// Rate matrix `Q = (q_ij)` of the regime process.
#[derive(Debug, Clone, PartialEq)]
pub struct SwitchingGenerator {
    regimes: usize,
    rates: Vec<f64>,
}

impl SwitchingGenerator {
    /// Builds a generator from its rows. Off-diagonal entries must be
    /// nonnegative; the diagonal is reset to minus the off-diagonal row sum
    /// after checking that the supplied rows sum to zero.
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        let m = rows.len();
        if m == 0 {
            return Err(Error::InvalidGenerator("no regimes".into()));
        }
        let mut rates = Vec::with_capacity(m * m);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != m {
                return Err(Error::InvalidGenerator(format!(
                    "row {} has {} entries, expected {m}",
                    i + 1,
                    row.len()
                )));
            }
            let mut off = 0.0;
            let mut scale: f64 = 1.0;
            for (j, &q) in row.iter().enumerate() {
                if !q.is_finite() {
                    return Err(Error::InvalidGenerator(format!("q[{}][{}] is not finite", i + 1, j + 1)));
                }
                scale = scale.max(q.abs());
                if i != j {
                    if q < 0.0 {
                        return Err(Error::InvalidGenerator(format!(
                            "off-diagonal q[{}][{}] = {q} is negative",
                            i + 1,
                            j + 1
                        )));
                    }
                    off += q;
                }
            }
            if (row[i] + off).abs() > 1e-9 * scale {
                return Err(Error::InvalidGenerator(format!("row {} sums to {}", i + 1, row[i] + off)));
            }
            for (j, &q) in row.iter().enumerate() {
                rates.push(if i == j { -off } else { q });
            }
        }
        Ok(Self { regimes: m, rates })
    }

    /// The no-switching generator `Q = [0]`.
    pub fn single() -> Self {
        Self { regimes: 1, rates: vec![0.0] }
    }

    /// Two regimes with `q12 = q21 = rate`.
    pub fn symmetric(rate: f64) -> Result<Self> {
        Self::new(vec![vec![-rate, rate], vec![rate, -rate]])
    }

    /// `m` regimes that never switch.
    pub fn frozen(m: usize) -> Result<Self> {
        Self::new(vec![vec![0.0; m]; m])
    }

    pub fn regimes(&self) -> usize {
        self.regimes
    }

    pub fn rate(&self, from: usize, to: usize) -> f64 {
        self.rates[from * self.regimes + to]
    }

    /// `−q_kk`, the rate of leaving regime `k`.
    pub fn exit_rate(&self, k: usize) -> f64 {
        -self.rate(k, k)
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.rates.chunks(self.regimes).map(<[f64]>::to_vec).collect()
    }

    /// True when every regime can reach every other through positive rates.
    pub fn is_irreducible(&self) -> bool {
        let m = self.regimes;
        let reach = |forward: bool| {
            let mut seen = vec![false; m];
            let mut queue = VecDeque::from([0]);
            seen[0] = true;
            while let Some(i) = queue.pop_front() {
                for j in 0..m {
                    let q = if forward { self.rate(i, j) } else { self.rate(j, i) };
                    if i != j && q > 0.0 && !seen[j] {
                        seen[j] = true;
                        queue.push_back(j);
                    }
                }
            }
            seen.into_iter().all(|s| s)
        };
        reach(true) && reach(false)
    }
}

/// Stationary distribution `ν` with `νQ = 0`, `Σν = 1`.
///
/// Solves `Qᵀν = 0` with the last equation replaced by the normalization.
pub fn stationary_distribution(gen: &SwitchingGenerator) -> Result<Vec<f64>> {
    if !gen.is_irreducible() {
        return Err(Error::ReducibleGenerator);
    }
    let m = gen.regimes();
    if m == 1 {
        return Ok(vec![1.0]);
    }
    let mut a = DMatrix::from_fn(m, m, |i, j| gen.rate(j, i));
    for j in 0..m {
        a[(m - 1, j)] = 1.0;
    }
    let mut rhs = DVector::zeros(m);
    rhs[m - 1] = 1.0;
    let nu = a.lu().solve(&rhs).ok_or(Error::ReducibleGenerator)?;
    let total: f64 = nu.iter().sum();
    Ok(nu.iter().map(|v| v / total).collect())
}

/// Regime-wise per-capita parameters of a logistic model:
/// `b = x(μ − κx)`, `σ(x) = σ·x`.
#[derive(Debug, Clone, PartialEq)]
pub struct PerCapita {
    pub mu: Vec<f64>,
    pub kappa: Vec<f64>,
    pub sigma: Vec<f64>,
}

/// Drift and diffusion of the uncontrolled population.
#[derive(Clone)]
pub struct ModelSpec {
    name: String,
    regimes: usize,
    drift: CoefficientFn,
    diffusion: CoefficientFn,
    period: Option<f64>,
    per_capita: Option<PerCapita>,
}

impl fmt::Debug for ModelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ModelSpec")
            .field("name", &self.name)
            .field("regimes", &self.regimes)
            .field("period", &self.period)
            .field("per_capita", &self.per_capita)
            .finish_non_exhaustive()
    }
}

impl ModelSpec {
    /// Wraps user evaluators. Call [`ModelSpec::validate`] before use if the
    /// evaluators are not known to vanish at `x = 0`.
    pub fn new(name: impl Into<String>, regimes: usize, drift: CoefficientFn, diffusion: CoefficientFn) -> Self {
        Self {
            name: name.into(),
            regimes,
            drift,
            diffusion,
            period: None,
            per_capita: None,
        }
    }

    pub fn with_period(mut self, period: f64) -> Result<Self> {
        if !(period > 0.0 && period.is_finite()) {
            return Err(Error::InvalidParams(format!("period must be positive, got {period}")));
        }
        self.period = Some(period);
        Ok(self)
    }

    /// Drops the period, for models whose coefficients do not depend on t.
    pub fn without_period(mut self) -> Self {
        self.period = None;
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn regimes(&self) -> usize {
        self.regimes
    }

    pub fn period(&self) -> Option<f64> {
        self.period
    }

    pub fn per_capita(&self) -> Option<&PerCapita> {
        self.per_capita.as_ref()
    }

    #[inline]
    pub fn drift(&self, t: f64, x: f64, regime: usize) -> f64 {
        (self.drift)(t, x, regime)
    }

    #[inline]
    pub fn diffusion(&self, t: f64, x: f64, regime: usize) -> f64 {
        (self.diffusion)(t, x, regime)
    }

    /// Checks the sampled invariants on `[0, upper]`: coefficients vanish at
    /// zero, diffusion is nonnegative, and periodic models repeat after `T`.
    pub fn validate(&self, upper: f64) -> Result<()> {
        let period = self.period.unwrap_or(1.0);
        let times: Vec<f64> = (0..8).map(|i| period * i as f64 / 8.0).collect();
        for k in 0..self.regimes {
            for &t in &times {
                let (b0, s0) = (self.drift(t, 0.0, k), self.diffusion(t, 0.0, k));
                if b0 != 0.0 || s0 != 0.0 {
                    return Err(Error::InvalidParams(format!(
                        "{}: extinction must be absorbing, got b(t={t}, 0, {k}) = {b0}, σ = {s0}",
                        self.name
                    )));
                }
                for i in 0..=32 {
                    let x = upper * i as f64 / 32.0;
                    let s = self.diffusion(t, x, k);
                    if !(s >= 0.0) || !self.drift(t, x, k).is_finite() {
                        return Err(Error::InvalidParams(format!(
                            "{}: invalid coefficients at t={t}, x={x}, regime {k}",
                            self.name
                        )));
                    }
                    if let Some(p) = self.period {
                        let db = (self.drift(t, x, k) - self.drift(t + p, x, k)).abs();
                        let ds = (self.diffusion(t, x, k) - self.diffusion(t + p, x, k)).abs();
                        let scale = 1.0 + self.drift(t, x, k).abs() + s;
                        if db > 1e-12 * scale || ds > 1e-12 * scale {
                            return Err(Error::InvalidParams(format!(
                                "{}: coefficients are not {p}-periodic at t={t}, x={x}",
                                self.name
                            )));
                        }
                    }
                }
            }
        }
        Ok(())
    }
}

/// Stochastic growth rate `r(k) = μ(k) − σ²(k)/2` of a per-capita model.
pub fn stochastic_growth_rate(model: &ModelSpec, regime: usize) -> Result<f64> {
    let pc = model
        .per_capita
        .as_ref()
        .ok_or_else(|| Error::NotPerCapitaModel(model.name.clone()))?;
    if regime >= model.regimes {
        return Err(Error::InvalidParams(format!("regime {regime} out of range")));
    }
    Ok(pc.mu[regime] - pc.sigma[regime] * pc.sigma[regime] / 2.0)
}

/// `Σ_k ν_k r(k)`; positive means the unharvested population persists.
pub fn persistence_criterion(model: &ModelSpec, gen: &SwitchingGenerator) -> Result<f64> {
    let nu = stationary_distribution(gen)?;
    check_regimes(model, gen)?;
    let mut r = 0.0;
    for (k, w) in nu.iter().enumerate() {
        r += w * stochastic_growth_rate(model, k)?;
    }
    Ok(r)
}

/// Fast-switching limit: a single-regime model with `b̄ = Σ ν_k b(·, k)` and
/// `σ̄ = sqrt(Σ ν_k σ²(·, k))`.
pub fn averaged_model(model: &ModelSpec, gen: &SwitchingGenerator) -> Result<ModelSpec> {
    if model.period.is_some() {
        return Err(Error::InvalidParams("averaging needs a time-homogeneous model".into()));
    }
    check_regimes(model, gen)?;
    let nu = stationary_distribution(gen)?;
    let per_capita = model.per_capita.as_ref().map(|pc| {
        let avg = |v: &[f64]| v.iter().zip(&nu).map(|(a, w)| a * w).sum::<f64>();
        let var: f64 = pc.sigma.iter().zip(&nu).map(|(s, w)| s * s * w).sum();
        PerCapita {
            mu: vec![avg(&pc.mu)],
            kappa: vec![avg(&pc.kappa)],
            sigma: vec![var.sqrt()],
        }
    });
    let (drift, diffusion) = (model.drift.clone(), model.diffusion.clone());
    let (nu_b, nu_s) = (nu.clone(), nu);
    Ok(ModelSpec {
        name: format!("{}-averaged", model.name),
        regimes: 1,
        drift: Arc::new(move |t, x, _| nu_b.iter().enumerate().map(|(k, w)| w * drift(t, x, k)).sum()),
        diffusion: Arc::new(move |t, x, _| {
            nu_s.iter()
                .enumerate()
                .map(|(k, w)| {
                    let s = diffusion(t, x, k);
                    w * s * s
                })
                .sum::<f64>()
                .sqrt()
        }),
        period: None,
        per_capita,
    })
}

fn check_regimes(model: &ModelSpec, gen: &SwitchingGenerator) -> Result<()> {
    if model.regimes != gen.regimes() {
        return Err(Error::InvalidParams(format!(
            "model has {} regimes, generator has {}",
            model.regimes,
            gen.regimes()
        )));
    }
    Ok(())
}

/// Named parameter bag for [`catalog`]. Vectors are regime-wise; a single
/// entry is broadcast to every regime.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelParams {
    /// Growth rates. The longest regime-wise vector sets the regime count.
    #[serde(default)]
    pub mu: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kappa: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma: Option<Vec<f64>>,
    /// Gompertz carrying capacity.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub capacity: Option<f64>,
    /// Nisbet–Gurney linear death rate.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub death: Option<f64>,
    /// Seasonal forcing amplitude.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub amplitude: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub period: Option<f64>,
    /// Sign of the seasonal sine term, `+1` or `−1`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sine_sign: Option<f64>,
    /// Custom per-capita drift polynomial per regime:
    /// `b(x, k) = x · Σ_j c[k][j] x^j`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub drift_poly: Option<Vec<Vec<f64>>>,
}

fn broadcast(name: &str, v: Option<&Vec<f64>>, default: f64, m: usize) -> Result<Vec<f64>> {
    match v {
        None => Ok(vec![default; m]),
        Some(v) if v.len() == 1 => Ok(vec![v[0]; m]),
        Some(v) if v.len() == m => Ok(v.clone()),
        Some(v) => Err(Error::InvalidParams(format!(
            "{name} has {} entries, expected 1 or {m}",
            v.len()
        ))),
    }
}

/// Builds one of the catalog models: `verhulst`, `gompertz`,
/// `nisbet_gurney`, `seasonal_verhulst` or `custom`. All of them use the
/// per-capita noise `σ(x, k) = σ_k x`.
pub fn catalog(name: &str, params: &ModelParams) -> Result<ModelSpec> {
    if !matches!(name, "verhulst" | "gompertz" | "nisbet_gurney" | "seasonal_verhulst" | "custom") {
        return Err(Error::UnknownModel(name.to_string()));
    }
    let lengths = [
        params.mu.len(),
        params.kappa.as_ref().map_or(0, Vec::len),
        params.sigma.as_ref().map_or(0, Vec::len),
        params.drift_poly.as_ref().map_or(0, Vec::len),
    ];
    let m = lengths.into_iter().max().unwrap_or(0);
    if m == 0 || (params.mu.is_empty() && params.drift_poly.is_none()) {
        return Err(Error::InvalidParams("mu must list at least one regime".into()));
    }
    let mu = if params.mu.is_empty() { vec![0.0; m] } else { broadcast("mu", Some(&params.mu), 0.0, m)? };
    let sigma = broadcast("sigma", params.sigma.as_ref(), 1.0, m)?;
    if let Some(s) = sigma.iter().find(|s| !(**s >= 0.0)) {
        return Err(Error::InvalidParams(format!("sigma must be nonnegative, got {s}")));
    }
    let sig = sigma.clone();
    let diffusion: CoefficientFn = Arc::new(move |_, x, k| sig[k] * x);

    let model = match name {
        "verhulst" => {
            let kappa = broadcast("kappa", params.kappa.as_ref(), 2.0, m)?;
            let (mu_c, kappa_c) = (mu.clone(), kappa.clone());
            let mut model = ModelSpec::new(
                "verhulst",
                m,
                Arc::new(move |_, x, k| x * (mu_c[k] - kappa_c[k] * x)),
                diffusion,
            );
            model.per_capita = Some(PerCapita { mu, kappa, sigma });
            model
        }
        "gompertz" => {
            let capacity = params.capacity.unwrap_or(2.0);
            if !(capacity > 0.0) {
                return Err(Error::InvalidParams("gompertz capacity must be positive".into()));
            }
            ModelSpec::new(
                "gompertz",
                m,
                Arc::new(move |_, x, k| if x > 0.0 { mu[k] * x * (capacity / x).ln() } else { 0.0 }),
                diffusion,
            )
        }
        "nisbet_gurney" => {
            let death = params.death.unwrap_or(1.0);
            ModelSpec::new(
                "nisbet_gurney",
                m,
                Arc::new(move |_, x, k| mu[k] * x * (-x).exp() - death * x),
                diffusion,
            )
        }
        "seasonal_verhulst" => {
            let kappa = broadcast("kappa", params.kappa.as_ref(), 2.0, m)?;
            let amplitude = params.amplitude.unwrap_or(1.0);
            let period = params.period.unwrap_or(1.0);
            let sign = params.sine_sign.unwrap_or(1.0);
            if sign != 1.0 && sign != -1.0 {
                return Err(Error::InvalidParams(format!("sine_sign must be ±1, got {sign}")));
            }
            let omega = 2.0 * PI / period;
            ModelSpec::new(
                "seasonal_verhulst",
                m,
                Arc::new(move |t, x, k| x * (mu[k] + sign * amplitude * (omega * t).sin() - kappa[k] * x)),
                diffusion,
            )
            .with_period(period)?
        }
        "custom" => {
            let poly = params
                .drift_poly
                .clone()
                .ok_or_else(|| Error::InvalidParams("custom model needs drift_poly".into()))?;
            ModelSpec::new(
                "custom",
                m,
                Arc::new(move |_, x, k| x * poly[k].iter().rev().fold(0.0, |acc, c| acc * x + c)),
                diffusion,
            )
        }
        other => return Err(Error::UnknownModel(other.to_string())),
    };
    Ok(model)
}

/// Coefficients of the price SDE `dΦ = b₀(Φ, α) dt + σ₀(Φ, α) dw₀` on
/// `[0, phi_max]`.
#[derive(Clone)]
pub struct PriceDynamicsSpec {
    drift: PriceCoefficientFn,
    diffusion: PriceCoefficientFn,
    phi_max: f64,
}

impl fmt::Debug for PriceDynamicsSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PriceDynamicsSpec").field("phi_max", &self.phi_max).finish_non_exhaustive()
    }
}

impl PriceDynamicsSpec {
    pub fn new(drift: PriceCoefficientFn, diffusion: PriceCoefficientFn, phi_max: f64) -> Result<Self> {
        if !(phi_max > 0.0) {
            return Err(Error::InvalidParams(format!("phi_max must be positive, got {phi_max}")));
        }
        Ok(Self { drift, diffusion, phi_max })
    }

    /// `b₀ = r Φ(L − Φ)`, `σ₀ = s Φ(L − Φ)` on `[0, L]`.
    pub fn logistic(rate: f64, level: f64, noise: f64) -> Result<Self> {
        Self::new(
            Arc::new(move |phi, _| rate * phi * (level - phi)),
            Arc::new(move |phi, _| (noise * phi * (level - phi)).abs()),
            level,
        )
    }

    #[inline]
    pub fn drift(&self, phi: f64, regime: usize) -> f64 {
        (self.drift)(phi, regime)
    }

    #[inline]
    pub fn diffusion(&self, phi: f64, regime: usize) -> f64 {
        (self.diffusion)(phi, regime)
    }

    pub fn phi_max(&self) -> f64 {
        self.phi_max
    }
}
