//! Experiment configs: `[section]` headers followed by `key = value` lines.
//! `#` starts a comment. Lists are comma-separated. The full schema is in
//! `docs/config.md`.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use pgcsim_core::paths::{DriftConvention, ExtremaMode, TimeGrid};
use pgcsim_core::{Horizon, ModelParams, ValidationMode};

use crate::error::{RunError, RunResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExperimentKind {
    ClosedForm,
    EstimateConstants,
    SolveBackward,
    VerifyFoc,
    FreeRiderSweep,
    ConvergenceStudy,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 6] = [
        ExperimentKind::ClosedForm,
        ExperimentKind::EstimateConstants,
        ExperimentKind::SolveBackward,
        ExperimentKind::VerifyFoc,
        ExperimentKind::FreeRiderSweep,
        ExperimentKind::ConvergenceStudy,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::ClosedForm => "closed_form",
            ExperimentKind::EstimateConstants => "estimate_constants",
            ExperimentKind::SolveBackward => "solve_backward",
            ExperimentKind::VerifyFoc => "verify_foc",
            ExperimentKind::FreeRiderSweep => "free_rider_sweep",
            ExperimentKind::ConvergenceStudy => "convergence_study",
        }
    }
}

impl FromStr for ExperimentKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        Self::ALL.into_iter().find(|k| k.name() == s).ok_or_else(|| format!("unknown experiment kind `{s}`"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridConfig {
    pub t_max: f64,
    pub n_steps: usize,
    pub convention: DriftConvention,
    pub extrema: ExtremaMode,
}

impl GridConfig {
    pub fn grid(&self) -> TimeGrid {
        TimeGrid::new(self.t_max, self.n_steps).expect("validated at parse time")
    }

    pub fn dt(&self) -> f64 {
        self.t_max / self.n_steps as f64
    }
}

pub fn convention_name(c: DriftConvention) -> &'static str {
    match c {
        DriftConvention::RawExponential => "raw_exponential",
        DriftConvention::Martingale => "martingale",
    }
}

pub fn extrema_name(e: ExtremaMode) -> &'static str {
    match e {
        ExtremaMode::Bridge => "bridge",
        ExtremaMode::Grid => "grid",
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SweepAxes {
    pub n: Vec<usize>,
    pub sigma: Vec<f64>,
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
    /// Also estimate the ratio by Monte Carlo at every point.
    pub monte_carlo: bool,
}

impl SweepAxes {
    pub fn is_empty(&self) -> bool {
        self.n.is_empty() && self.sigma.is_empty() && self.alpha.is_empty() && self.beta.is_empty()
    }

    /// Every combination of the axes applied to `base`; `alpha` varies
    /// slowest and `n` fastest. Missing axes keep the base value.
    pub fn points(&self, base: &ModelParams) -> Vec<ModelParams> {
        let or = |v: &Vec<f64>, d: f64| if v.is_empty() { vec![d] } else { v.clone() };
        let ns = if self.n.is_empty() { vec![base.n_agents] } else { self.n.clone() };
        let mut out = Vec::new();
        for a in or(&self.alpha, base.alpha) {
            for b in or(&self.beta, base.beta) {
                for s in or(&self.sigma, base.sigma_x) {
                    for &n in &ns {
                        let mut p = ModelParams::symmetric(n, base.wealth, a, b, base.discount_rate, s, base.sigma_c);
                        p.horizon = base.horizon;
                        if n == base.n_agents {
                            p.weights = base.weights.clone();
                        }
                        out.push(p);
                    }
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolverModes {
    Planner,
    Nash,
    Both,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub steps: usize,
    /// Lattice horizon; defaults to the grid's.
    pub t_max: Option<f64>,
    pub modes: SolverModes,
    pub m_step: f64,
    pub m_points: usize,
    pub overshoot: bool,
    pub tol: f64,
    pub calibrate: bool,
    pub calibration_tol: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        let d = pgcsim_core::solver::SolverOptions::default();
        Self {
            steps: 500,
            t_max: None,
            modes: SolverModes::Both,
            m_step: d.m_step,
            m_points: d.m_points,
            overshoot: d.overshoot,
            tol: d.tol,
            calibrate: true,
            calibration_tol: 1e-6,
        }
    }
}

impl SolverConfig {
    pub fn options(&self) -> pgcsim_core::solver::SolverOptions {
        pgcsim_core::solver::SolverOptions {
            m_step: self.m_step,
            m_points: self.m_points,
            overshoot: self.overshoot,
            tol: self.tol,
            ..Default::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PolicyKind {
    ClosedFormPlanner,
    ClosedFormNash,
    SolverPlanner,
    SolverNash,
    /// Closed-form planner policy with contributions scaled by 1.1.
    InflatedPlanner,
    /// Closed-form planner consumption with no contributions at all.
    ZeroContribution,
}

impl PolicyKind {
    pub const ALL: [PolicyKind; 6] = [
        PolicyKind::ClosedFormPlanner,
        PolicyKind::ClosedFormNash,
        PolicyKind::SolverPlanner,
        PolicyKind::SolverNash,
        PolicyKind::InflatedPlanner,
        PolicyKind::ZeroContribution,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PolicyKind::ClosedFormPlanner => "closed_form_planner",
            PolicyKind::ClosedFormNash => "closed_form_nash",
            PolicyKind::SolverPlanner => "solver_planner",
            PolicyKind::SolverNash => "solver_nash",
            PolicyKind::InflatedPlanner => "inflated_planner",
            PolicyKind::ZeroContribution => "zero_contribution",
        }
    }

    pub fn is_game(self) -> bool {
        matches!(self, PolicyKind::ClosedFormNash | PolicyKind::SolverNash)
    }
}

impl FromStr for PolicyKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        Self::ALL.into_iter().find(|k| k.name() == s).ok_or_else(|| format!("unknown policy `{s}`"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConstantsSource {
    Analytic,
    MonteCarlo,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FocConfig {
    pub policies: Vec<PolicyKind>,
    pub constants: ConstantsSource,
    /// Paths used for Monte Carlo constants.
    pub constants_paths: usize,
    pub scan_times: Vec<f64>,
    pub prefixes: usize,
    pub suffixes: usize,
    pub agent: usize,
    pub n_sigma: f64,
    pub binding_tol: f64,
}

impl Default for FocConfig {
    fn default() -> Self {
        Self {
            policies: vec![PolicyKind::ClosedFormPlanner, PolicyKind::ClosedFormNash],
            constants: ConstantsSource::MonteCarlo,
            constants_paths: 4000,
            scan_times: vec![0.0, 1.0, 5.0, 10.0, 20.0, 40.0],
            prefixes: 32,
            suffixes: 32,
            agent: 0,
            n_sigma: 3.0,
            binding_tol: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceConfig {
    /// Number of time steps sizes, halving from the grid's `dt`.
    pub dt_levels: usize,
    /// Number of path counts, quadrupling from `n_paths`.
    pub path_levels: usize,
    /// Lattice sizes for the solver-versus-ansatz rows.
    pub lattice_steps: Vec<usize>,
    /// Lattice horizon in units of `1 / r`.
    pub lattice_horizon: f64,
}

impl Default for ConvergenceConfig {
    fn default() -> Self {
        Self { dt_levels: 6, path_levels: 3, lattice_steps: vec![50, 100, 200, 400], lattice_horizon: 20.0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    pub model: ModelParams,
    pub grid: GridConfig,
    pub n_paths: usize,
    pub master_seed: u64,
    pub sweep: SweepAxes,
    pub output: PathBuf,
    pub emit_plots: bool,
    pub gate: bool,
    pub solver: SolverConfig,
    pub foc: FocConfig,
    pub convergence: ConvergenceConfig,
}

/// One `key = value` entry with its line number.
#[derive(Debug, Clone)]
struct Entry {
    value: String,
    line: usize,
}

/// Sections of `key = value` entries, in file order.
#[derive(Debug, Default)]
struct Document {
    sections: BTreeMap<String, BTreeMap<String, Entry>>,
}

fn config_err(msg: impl Into<String>) -> RunError {
    RunError::Config(msg.into())
}

impl Document {
    fn parse(text: &str) -> RunResult<Self> {
        let mut doc = Document::default();
        let mut current: Option<String> = None;
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('[') {
                let name = rest
                    .strip_suffix(']')
                    .ok_or_else(|| config_err(format!("line {line_no}: unterminated section header")))?
                    .trim();
                if !SECTIONS.contains(&name) {
                    return Err(config_err(format!("line {line_no}: unknown section [{name}]")));
                }
                if doc.sections.contains_key(name) {
                    return Err(config_err(format!("line {line_no}: section [{name}] repeated")));
                }
                doc.sections.insert(name.to_string(), BTreeMap::new());
                current = Some(name.to_string());
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| config_err(format!("line {line_no}: expected `key = value`")))?;
            let section = current
                .as_ref()
                .ok_or_else(|| config_err(format!("line {line_no}: entry outside any section")))?;
            let key = key.trim();
            let table = doc.sections.get_mut(section).expect("section inserted above");
            if table.insert(key.to_string(), Entry { value: value.trim().to_string(), line: line_no }).is_some() {
                return Err(config_err(format!("line {line_no}: key `{key}` repeated in [{section}]")));
            }
        }
        Ok(doc)
    }

    fn section(&mut self, name: &str) -> Section {
        Section { name: name.to_string(), entries: self.sections.remove(name).unwrap_or_default() }
    }
}

const SECTIONS: [&str; 7] = ["experiment", "model", "grid", "sweep", "solver", "foc", "convergence"];

/// Typed access to one section; every key must be consumed.
struct Section {
    name: String,
    entries: BTreeMap<String, Entry>,
}

impl Section {
    fn take<T: FromStr>(&mut self, key: &str) -> RunResult<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        match self.entries.remove(key) {
            None => Ok(None),
            Some(e) => e.value.parse::<T>().map(Some).map_err(|err| {
                config_err(format!("line {}: [{}] {key} = `{}`: {err}", e.line, self.name, e.value))
            }),
        }
    }

    fn or<T: FromStr>(&mut self, key: &str, default: T) -> RunResult<T>
    where
        T::Err: std::fmt::Display,
    {
        Ok(self.take(key)?.unwrap_or(default))
    }

    fn required<T: FromStr>(&mut self, key: &str) -> RunResult<T>
    where
        T::Err: std::fmt::Display,
    {
        self.take(key)?.ok_or_else(|| config_err(format!("[{}] is missing `{key}`", self.name)))
    }

    fn list<T: FromStr>(&mut self, key: &str) -> RunResult<Option<Vec<T>>>
    where
        T::Err: std::fmt::Display,
    {
        let Some(e) = self.entries.remove(key) else { return Ok(None) };
        e.value
            .split(',')
            .map(|s| s.trim())
            .filter(|s| !s.is_empty())
            .map(|s| {
                s.parse::<T>().map_err(|err| config_err(format!("line {}: [{}] {key}: `{s}`: {err}", e.line, self.name)))
            })
            .collect::<RunResult<Vec<T>>>()
            .map(Some)
    }

    fn finish(self) -> RunResult<()> {
        match self.entries.iter().next() {
            Some((k, e)) => Err(config_err(format!("line {}: unknown key `{k}` in [{}]", e.line, self.name))),
            None => Ok(()),
        }
    }
}

fn parse_bool(s: &str) -> Result<bool, String> {
    match s {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err("expected true or false".into()),
    }
}

struct Flag(bool);

impl FromStr for Flag {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        parse_bool(s).map(Flag)
    }
}

struct Conv(DriftConvention);

impl FromStr for Conv {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "raw_exponential" | "raw" => Ok(Conv(DriftConvention::RawExponential)),
            "martingale" => Ok(Conv(DriftConvention::Martingale)),
            _ => Err("expected raw_exponential or martingale".into()),
        }
    }
}

struct Extrema(ExtremaMode);

impl FromStr for Extrema {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "bridge" => Ok(Extrema(ExtremaMode::Bridge)),
            "grid" => Ok(Extrema(ExtremaMode::Grid)),
            _ => Err("expected bridge or grid".into()),
        }
    }
}

struct HorizonValue(Horizon);

impl FromStr for HorizonValue {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        if s == "inf" || s == "infinite" {
            return Ok(HorizonValue(Horizon::Infinite));
        }
        s.parse::<f64>().map(|t| HorizonValue(Horizon::Finite(t))).map_err(|e| e.to_string())
    }
}

struct Modes(SolverModes);

impl FromStr for Modes {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "planner" => Ok(Modes(SolverModes::Planner)),
            "nash" => Ok(Modes(SolverModes::Nash)),
            "both" => Ok(Modes(SolverModes::Both)),
            _ => Err("expected planner, nash or both".into()),
        }
    }
}

struct Source(ConstantsSource);

impl FromStr for Source {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "analytic" => Ok(Source(ConstantsSource::Analytic)),
            "mc" | "monte_carlo" => Ok(Source(ConstantsSource::MonteCarlo)),
            _ => Err("expected analytic or mc".into()),
        }
    }
}

impl ExperimentConfig {
    pub fn from_file(path: &Path) -> RunResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| config_err(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// Parses and validates a config. Syntax and schema problems are
    /// config errors; parameters the model rejects are validation errors.
    pub fn parse(text: &str) -> RunResult<Self> {
        let mut doc = Document::parse(text)?;

        let mut s = doc.section("experiment");
        let kind: ExperimentKind = s.required("kind")?;
        let master_seed = s.or("seed", 1u64)?;
        let n_paths = s.or("n_paths", 10_000usize)?;
        let output = PathBuf::from(s.or("output", String::from("out"))?);
        let emit_plots = s.or("emit_plots", Flag(false))?.0;
        let gate = s.or("gate", Flag(false))?.0;
        s.finish()?;
        if n_paths == 0 {
            return Err(config_err("[experiment] n_paths must be at least 1"));
        }

        let mut s = doc.section("model");
        let n_agents = s.or("n_agents", 2usize)?;
        let wealth = s.or("wealth", 1.0)?;
        let alpha = s.or("alpha", 0.3)?;
        let beta = s.or("beta", 0.3)?;
        let discount_rate = s.or("discount_rate", 0.05)?;
        let sigma_x = s.or("sigma_x", 0.2)?;
        let sigma_c = s.or("sigma_c", 0.0)?;
        let weights: Option<Vec<f64>> = s.list("weights")?;
        let horizon = s.or("horizon", HorizonValue(Horizon::Infinite))?.0;
        s.finish()?;
        let mut model = ModelParams::symmetric(n_agents, wealth, alpha, beta, discount_rate, sigma_x, sigma_c);
        if let Some(w) = weights {
            model = model.with_weights(w);
        }
        model = model.with_horizon(horizon);

        let mut s = doc.section("grid");
        let t_max = s.or("t_max", 200.0)?;
        let dt: Option<f64> = s.take("dt")?;
        let n_steps: Option<usize> = s.take("n_steps")?;
        let convention = s.or("convention", Conv(DriftConvention::RawExponential))?.0;
        let extrema = s.or("extrema", Extrema(ExtremaMode::Bridge))?.0;
        s.finish()?;
        let grid = match (dt, n_steps) {
            (Some(_), Some(_)) => return Err(config_err("[grid] takes either dt or n_steps, not both")),
            (Some(dt), None) => TimeGrid::with_dt(t_max, dt),
            (None, Some(n)) => TimeGrid::new(t_max, n),
            (None, None) => TimeGrid::with_dt(t_max, 0.1),
        }
        .map_err(|e| config_err(format!("[grid] {e}")))?;
        let grid = GridConfig { t_max, n_steps: grid.n_steps(), convention, extrema };

        let mut s = doc.section("sweep");
        let sweep = SweepAxes {
            n: s.list("n")?.unwrap_or_default(),
            sigma: s.list("sigma")?.unwrap_or_default(),
            alpha: s.list("alpha")?.unwrap_or_default(),
            beta: s.list("beta")?.unwrap_or_default(),
            monte_carlo: s.or("monte_carlo", Flag(false))?.0,
        };
        s.finish()?;

        let mut s = doc.section("solver");
        let d = SolverConfig::default();
        let solver = SolverConfig {
            steps: s.or("steps", d.steps)?,
            t_max: s.take("t_max")?,
            modes: s.or("mode", Modes(d.modes))?.0,
            m_step: s.or("m_step", d.m_step)?,
            m_points: s.or("m_points", d.m_points)?,
            overshoot: s.or("overshoot", Flag(d.overshoot))?.0,
            tol: s.or("tol", d.tol)?,
            calibrate: s.or("calibrate", Flag(d.calibrate))?.0,
            calibration_tol: s.or("calibration_tol", d.calibration_tol)?,
        };
        s.finish()?;

        let mut s = doc.section("foc");
        let d = FocConfig::default();
        let foc = FocConfig {
            policies: s.list("policies")?.unwrap_or(d.policies),
            constants: s.or("constants", Source(d.constants))?.0,
            constants_paths: s.or("constants_paths", d.constants_paths)?,
            scan_times: s.list("scan_times")?.unwrap_or(d.scan_times),
            prefixes: s.or("prefixes", d.prefixes)?,
            suffixes: s.or("suffixes", d.suffixes)?,
            agent: s.or("agent", d.agent)?,
            n_sigma: s.or("n_sigma", d.n_sigma)?,
            binding_tol: s.or("binding_tol", d.binding_tol)?,
        };
        s.finish()?;

        let mut s = doc.section("convergence");
        let d = ConvergenceConfig::default();
        let convergence = ConvergenceConfig {
            dt_levels: s.or("dt_levels", d.dt_levels)?,
            path_levels: s.or("path_levels", d.path_levels)?,
            lattice_steps: s.list("lattice_steps")?.unwrap_or(d.lattice_steps),
            lattice_horizon: s.or("lattice_horizon", d.lattice_horizon)?,
        };
        s.finish()?;

        let cfg = ExperimentConfig {
            kind,
            model,
            grid,
            n_paths,
            master_seed,
            sweep,
            output,
            emit_plots,
            gate,
            solver,
            foc,
            convergence,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// The same config run as another experiment kind.
    pub fn with_kind(mut self, kind: ExperimentKind) -> RunResult<Self> {
        self.kind = kind;
        self.validate()?;
        Ok(self)
    }

    fn validate(&self) -> RunResult<()> {
        if self.kind == ExperimentKind::FreeRiderSweep && self.sweep.is_empty() {
            return Err(config_err("free_rider_sweep needs at least one nonempty [sweep] axis"));
        }
        if self.kind == ExperimentKind::ConvergenceStudy && (self.convergence.dt_levels < 2 || self.convergence.path_levels < 2) {
            return Err(config_err("[convergence] needs at least two dt levels and two path levels"));
        }
        self.model.check(ValidationMode::General)?;
        for p in self.sweep.points(&self.model) {
            p.check(ValidationMode::General)?;
        }
        Ok(())
    }

    /// Short description of the run for the log.
    pub fn summary(&self) -> String {
        format!(
            "{} (seed {}, {} paths, dt {}, t_max {})",
            self.kind.name(),
            self.master_seed,
            self.n_paths,
            self.grid.dt(),
            self.grid.t_max
        )
    }
}
