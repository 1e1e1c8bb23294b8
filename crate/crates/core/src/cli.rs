//! File-producing front ends used by the `regime-harvest` binary.
//!
//! Every function validates its inputs completely before creating the
//! output directory, so a rejected configuration leaves no files behind.

use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::config::{parse_alternative, AnyKernel, ExperimentConfig};
use crate::error::{Error, Result};
use crate::grid::StateSpace;
use crate::kernel::{write_kernel_dump, ConsistencyReport};
use crate::montecarlo::{path_rng, MCEstimate};
use crate::solver::{classify_policy, write_solution_csv, Policy, Solution, ValueFunction};

/// Overrides shared by all subcommands.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub grid_h: Option<f64>,
}

/// Loads a config file and applies command-line overrides.
pub fn load_config(path: &Path, overrides: &Overrides) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::load(path)?;
    if let Some(h) = overrides.grid_h {
        cfg = cfg.with_override("kernel.h", toml::Value::Float(h))?;
    }
    if let Some(seed) = overrides.seed {
        let seed = i64::try_from(seed).map_err(|_| Error::Config(format!("seed {seed} is too large")))?;
        cfg = cfg.with_override("montecarlo.seed", toml::Value::Integer(seed))?;
    }
    Ok(cfg)
}

fn create(out: &Path, file: &str) -> Result<(PathBuf, BufWriter<File>)> {
    fs::create_dir_all(out)?;
    let path = out.join(file);
    let f = File::create(&path)?;
    Ok((path, BufWriter::new(f)))
}

#[derive(Debug)]
pub struct SolveOutcome {
    pub solution: Solution,
    pub files: Vec<PathBuf>,
}

/// Solves the experiment and writes `<name>.csv` (values and policy) and
/// `<name>_report.csv`.
pub fn run_solve(cfg: &ExperimentConfig, out: &Path) -> Result<SolveOutcome> {
    let exp = cfg.build()?;
    let solution = exp.solve()?;
    let header = cfg.header();
    let (csv, mut w) = create(out, &format!("{}.csv", cfg.name()))?;
    write_solution_csv(&solution, &header, &mut w)?;
    w.flush()?;

    let (report, mut w) = create(out, &format!("{}_report.csv", cfg.name()))?;
    writeln!(w, "{header}")?;
    writeln!(w, "key,value")?;
    let r = &solution.report;
    writeln!(w, "iterations,{}", r.iterations)?;
    writeln!(w, "policy_evaluations,{}", r.policy_evaluations)?;
    writeln!(w, "final_sup_change,{:e}", r.final_sup_change)?;
    writeln!(w, "tolerance,{:e}", r.tolerance)?;
    writeln!(w, "acceleration,{}", serde_name(&r.acceleration))?;
    if let StateSpace::Line { .. } = solution.policy.space() {
        for (k, shape) in classify_policy(&solution.policy, &exp.controls).iter().enumerate() {
            writeln!(w, "shape_regime_{},{}", k + 1, shape.name())?;
            if let Some(t) = shape.threshold() {
                writeln!(w, "threshold_regime_{},{t}", k + 1)?;
            }
        }
    }
    w.flush()?;
    Ok(SolveOutcome { solution, files: vec![csv, report] })
}

fn serde_name<T: Serialize>(v: &T) -> String {
    toml::Value::try_from(v).ok().and_then(|v| v.as_str().map(str::to_string)).unwrap_or_default()
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepEntry {
    pub value: f64,
    pub iterations: usize,
    /// Sup distance to the previous entry's value function.
    pub gap_to_previous: Option<f64>,
    /// Sup distance to the last entry's value function.
    pub gap_to_last: Option<f64>,
    pub file: PathBuf,
}

/// `sup |a − b|`. A single-regime function is compared with every regime of
/// the other.
pub fn sup_gap(a: &ValueFunction, b: &ValueFunction) -> Result<f64> {
    let (sa, sb) = (a.space(), b.space());
    if sa.population().len() != sb.population().len() || sa.first_len() != sb.first_len() {
        return Err(Error::InvalidGrid("value functions live on different lattices".into()));
    }
    let (ma, mb) = (sa.regimes(), sb.regimes());
    if ma != mb && ma != 1 && mb != 1 {
        return Err(Error::InvalidGrid(format!("cannot compare {ma} regimes with {mb}")));
    }
    let mut sup: f64 = 0.0;
    for j in 0..sa.first_len() {
        for i in 0..sa.population().len() {
            for k in 0..ma.max(mb) {
                let va = a.get(j, i, k.min(ma - 1));
                let vb = b.get(j, i, k.min(mb - 1));
                sup = sup.max((va - vb).abs());
            }
        }
    }
    Ok(sup)
}

/// One solve per value of `parameter` (a dotted config path), plus
/// `<name>_sweep.csv` with sup gaps between consecutive value functions and
/// to the last one. An infinite switching rate selects the averaged model.
pub fn run_sweep(cfg: &ExperimentConfig, parameter: &str, values: &[f64], out: &Path) -> Result<Vec<SweepEntry>> {
    if values.is_empty() {
        return Err(Error::Config("sweep needs at least one value".into()));
    }
    let configs: Vec<ExperimentConfig> = values
        .iter()
        .map(|&v| cfg.with_override(parameter, toml::Value::Float(v)))
        .collect::<Result<_>>()?;
    let mut solutions = Vec::with_capacity(values.len());
    let mut files = Vec::with_capacity(values.len());
    let key = parameter.rsplit('.').next().unwrap_or(parameter);
    for (c, &v) in configs.iter().zip(values) {
        let named = ExperimentConfig { name: Some(format!("{}_{key}_{v}", cfg.name())), ..c.clone() };
        let outcome = run_solve(&named, out)?;
        files.push(outcome.files[0].clone());
        solutions.push(outcome.solution);
    }
    let last = solutions.last().expect("nonempty");
    let mut entries = Vec::with_capacity(values.len());
    for (n, sol) in solutions.iter().enumerate() {
        entries.push(SweepEntry {
            value: values[n],
            iterations: sol.report.iterations,
            gap_to_previous: if n > 0 { Some(sup_gap(&sol.values, &solutions[n - 1].values)?) } else { None },
            gap_to_last: if n + 1 < solutions.len() { Some(sup_gap(&sol.values, &last.values)?) } else { None },
            file: files[n].clone(),
        });
    }
    let (_, mut w) = create(out, &format!("{}_sweep.csv", cfg.name()))?;
    writeln!(w, "{} sweep={parameter}", cfg.header())?;
    writeln!(w, "value,iterations,gap_to_previous,gap_to_last,file")?;
    let opt = |g: Option<f64>| g.map(|g| format!("{g:.12e}")).unwrap_or_default();
    for e in &entries {
        let file = e.file.file_name().map(|f| f.to_string_lossy().into_owned()).unwrap_or_default();
        writeln!(w, "{},{},{},{},{file}", e.value, e.iterations, opt(e.gap_to_previous), opt(e.gap_to_last))?;
    }
    w.flush()?;
    Ok(entries)
}

/// Reads a solution CSV written by [`run_solve`] back onto the lattice of
/// `cfg`.
pub fn read_solution(cfg: &ExperimentConfig, path: &Path) -> Result<(ValueFunction, Policy)> {
    let exp = cfg.build()?;
    let space = match exp.kernel()? {
        AnyKernel::Materialized(k) => *k.space(),
        AnyKernel::Periodic(k) => *k.space(),
    };
    let controls = exp.controls.values().to_vec();
    let n = space.node_count();
    let mut values = vec![f64::NAN; n];
    let mut choice = vec![usize::MAX; n];
    let reader = BufReader::new(File::open(path)?);
    let planar = !matches!(space, StateSpace::Line { .. });
    let bad = |line: usize, what: &str| Error::Config(format!("{}:{line}: {what}", path.display()));
    for (no, line) in reader.lines().enumerate() {
        let line = line?;
        if line.starts_with('#') || line.starts_with("x,") || line.starts_with("axis1,") || line.trim().is_empty() {
            continue;
        }
        let fields: Vec<f64> = line
            .split(',')
            .map(|f| f.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| bad(no + 1, "expected numbers"))?;
        let (axis1, rest) = if planar { (fields.first().copied(), &fields[1.min(fields.len())..]) } else { (None, &fields[..]) };
        if rest.len() != 4 {
            return Err(bad(no + 1, "wrong number of columns"));
        }
        let (x, regime, v, u) = (rest[0], rest[1] as usize, rest[2], rest[3]);
        if regime == 0 || regime > space.regimes() {
            return Err(bad(no + 1, "regime out of range"));
        }
        let node = space.nearest(axis1.unwrap_or(0.0), x, regime - 1);
        let c = controls
            .iter()
            .enumerate()
            .min_by(|a, b| (a.1 - u).abs().total_cmp(&(b.1 - u).abs()))
            .map(|(i, _)| i)
            .expect("nonempty controls");
        values[node] = v;
        choice[node] = c;
    }
    if choice.contains(&usize::MAX) {
        return Err(Error::Config(format!("{} does not cover the configured lattice", path.display())));
    }
    Ok((ValueFunction::new(space, values), Policy::new(space, controls, choice)))
}

#[derive(Debug, Clone, Serialize)]
pub struct SimulationRow {
    pub x0: f64,
    /// Numbered from 1.
    pub regime: usize,
    pub phi0: f64,
    pub law: String,
    pub estimate: MCEstimate,
    pub value: f64,
    /// For the computed policy: `|Ĵ − Vʰ| ≤ 3·SE + tail + slack`. For an
    /// alternative: the computed policy's estimate dominates it.
    pub pass: bool,
}

/// Monte Carlo estimates of the computed policy (read from `policy`, or
/// solved afresh) and of any configured alternatives, written to
/// `<name>_mc.csv`.
pub fn run_simulate(cfg: &ExperimentConfig, policy: Option<&Path>, slack: f64, out: &Path) -> Result<Vec<SimulationRow>> {
    let mc = cfg
        .montecarlo
        .clone()
        .ok_or_else(|| Error::Config("simulate needs a [montecarlo] section".into()))?;
    if mc.starts.is_empty() {
        return Err(Error::Config("`starts`: montecarlo needs at least one start".into()));
    }
    let exp = cfg.build()?;
    let (min, max) = (exp.controls.min(), exp.controls.max());
    let alternatives = mc
        .alternatives
        .iter()
        .map(|a| parse_alternative(a, min, max).map(|law| (a.clone(), law)))
        .collect::<Result<Vec<_>>>()?;
    for &(x0, regime) in &mc.starts {
        if regime == 0 || regime > exp.gen.regimes() || !(0.0..=exp.lattice.population().upper()).contains(&x0) {
            return Err(Error::Config(format!("`starts`: invalid start ({x0}, {regime})")));
        }
    }
    let (values, policy) = match policy {
        Some(path) => read_solution(cfg, path)?,
        None => {
            let s = exp.solve()?;
            (s.values, s.policy)
        }
    };
    let sim = exp.simulator()?;
    let sim_cfg = mc.config();
    let header = cfg.header();
    let mut rows = Vec::new();
    for (n, &(x0, regime)) in mc.starts.iter().enumerate() {
        let k = regime - 1;
        let value = values.nearest(mc.phi0, x0, k);
        let own = sim.estimate_value(&policy, x0, mc.phi0, k, &sim_cfg)?;
        rows.push(SimulationRow {
            x0,
            regime,
            phi0: mc.phi0,
            law: "policy".into(),
            estimate: own,
            value,
            pass: own.agrees_with(value, slack),
        });
        for (name, law) in &alternatives {
            let est = sim.estimate_value(law, x0, mc.phi0, k, &sim_cfg)?;
            rows.push(SimulationRow {
                x0,
                regime,
                phi0: mc.phi0,
                law: name.clone(),
                estimate: est,
                value,
                pass: own.dominates(&est),
            });
        }
        if mc.trace {
            let outcome = sim.simulate_path(&policy, x0, mc.phi0, k, &sim_cfg, &mut path_rng(sim_cfg.seed, 0), true)?;
            let (_, mut w) = create(out, &format!("{}_trace_{}.csv", cfg.name(), n + 1))?;
            writeln!(w, "{header}")?;
            writeln!(w, "t,phi,x,regime,u,payoff")?;
            for p in &outcome.trace {
                writeln!(w, "{},{},{},{},{},{:.12e}", p.t, p.phi, p.x, p.regime + 1, p.u, p.payoff)?;
            }
            w.flush()?;
        }
    }
    let (_, mut w) = create(out, &format!("{}_mc.csv", cfg.name()))?;
    writeln!(w, "{header}")?;
    writeln!(w, "x0,regime,phi0,law,mean,std_error,tail_bound,paths,dt,horizon,V_h,pass")?;
    for r in &rows {
        let e = &r.estimate;
        writeln!(
            w,
            "{},{},{},{},{:.12e},{:.12e},{:.6e},{},{},{},{:.12e},{}",
            r.x0, r.regime, r.phi0, r.law, e.mean, e.std_error, e.tail_bound, e.paths, e.dt, e.horizon, r.value, r.pass
        )?;
    }
    w.flush()?;
    Ok(rows)
}

/// Exhaustive consistency check written to `<name>_check.csv`.
pub fn run_check(cfg: &ExperimentConfig, tolerance: f64, out: &Path) -> Result<ConsistencyReport> {
    let exp = cfg.build()?;
    let report = exp.check(tolerance)?;
    let (_, mut w) = create(out, &format!("{}_check.csv", cfg.name()))?;
    writeln!(w, "{}", cfg.header())?;
    writeln!(w, "key,value")?;
    writeln!(w, "passed,{}", report.passed())?;
    writeln!(w, "h,{}", report.h)?;
    writeln!(w, "rows_checked,{}", report.rows_checked)?;
    writeln!(w, "max_row_sum_error,{:e}", report.max_row_sum_error)?;
    writeln!(w, "max_first_moment_error,{:e}", report.max_first_moment_error)?;
    writeln!(w, "max_variance_error,{:e}", report.max_variance_error)?;
    writeln!(w, "max_variance_ratio,{:e}", report.max_variance_ratio)?;
    writeln!(w, "max_switch_error,{:e}", report.max_switch_error)?;
    writeln!(w, "violation_count,{}", report.violation_count)?;
    for v in &report.violations {
        writeln!(w, "violation,\"{} u={} {} error={:e} bound={:e}\"", v.state, v.control, v.kind, v.error, v.bound)?;
    }
    w.flush()?;
    Ok(report)
}

/// Writes every admissible row to `<name>_kernel.csv`.
pub fn run_dump_kernel(cfg: &ExperimentConfig, out: &Path) -> Result<PathBuf> {
    let exp = cfg.build()?;
    let kernel = exp.kernel()?;
    let (path, mut w) = create(out, &format!("{}_kernel.csv", cfg.name()))?;
    match &kernel {
        AnyKernel::Materialized(k) => write_kernel_dump(k, &cfg.header(), &mut w)?,
        AnyKernel::Periodic(k) => write_kernel_dump(k, &cfg.header(), &mut w)?,
    }
    w.flush()?;
    Ok(path)
}
