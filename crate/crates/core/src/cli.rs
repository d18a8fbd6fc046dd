//! JSON-configured experiments and the `linflow` command line.
//!
//! Exit codes: 0 success, 1 configuration or precondition error, 2 numerical
//! divergence, 3 a reproduced example missed its verdict.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::affine::{normalize_system, CaseLabel, LinearSystem};
use crate::analysis::{self, Coherence, LimitPrediction, LtiReport};
use crate::error::{Error, Result};
use crate::fixtures;
use crate::flows::{FlowKind, FlowSpec, NetworkState};
use crate::graphsig::{self, ConnectivityReport, GraphSignal, Segment, SignalMode, WeightedDigraph};
use crate::numkit::{dist, Matrix};
use crate::sim::{self, IntegratorConfig, MonitorRefs, Trajectory};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_DIVERGED: i32 = 2;
pub const EXIT_VERDICT: i32 = 3;

/// Tolerance for "node states reached the predicted point".
pub const LIMIT_TOL: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemConfig {
    pub h: Vec<Vec<f64>>,
    pub z: Vec<f64>,
    /// Rescale rows to unit norm (default true).
    #[serde(default = "yes")]
    pub normalize: bool,
}

fn yes() -> bool {
    true
}

fn unit_duration() -> f64 {
    1.0
}

/// One graph of the schedule, given either as a dense `weights[i][j] = a_ij`
/// matrix (arc `j → i`) or as `[from, to, weight]` arcs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SegmentConfig {
    #[serde(default = "unit_duration")]
    pub duration: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub arcs: Option<Vec<(usize, usize, f64)>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphConfig {
    pub nodes: usize,
    #[serde(default = "periodic")]
    pub mode: SignalMode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a_star: Option<f64>,
    pub segments: Vec<SegmentConfig>,
}

fn periodic() -> SignalMode {
    SignalMode::Periodic
}

impl GraphConfig {
    pub fn fixed_arcs(nodes: usize, arcs: Vec<(usize, usize, f64)>) -> Self {
        Self {
            nodes,
            mode: SignalMode::Periodic,
            a_star: None,
            segments: vec![SegmentConfig {
                duration: 1.0,
                weights: None,
                arcs: Some(arcs),
            }],
        }
    }

    pub fn from_graph(graph: &WeightedDigraph) -> Self {
        let n = graph.node_count();
        let mut arcs = Vec::new();
        for to in 0..n {
            for from in 0..n {
                let w = graph.weight(to, from);
                if w > 0.0 {
                    arcs.push((from, to, w));
                }
            }
        }
        Self::fixed_arcs(n, arcs)
    }

    pub fn build(&self) -> Result<GraphSignal> {
        let segments = self
            .segments
            .iter()
            .enumerate()
            .map(|(k, s)| {
                let graph = match (&s.weights, &s.arcs) {
                    (Some(w), None) => WeightedDigraph::from_weights(w),
                    (None, Some(a)) => WeightedDigraph::from_arcs(self.nodes, a),
                    _ => Err(Error::InvalidConfig(format!(
                        "graph.segments[{k}]: give exactly one of `weights` or `arcs`"
                    ))),
                }
                .map_err(|e| Error::InvalidConfig(format!("graph.segments[{k}]: {e}")))?;
                if graph.node_count() != self.nodes {
                    return Err(Error::InvalidConfig(format!(
                        "graph.segments[{k}] has {} nodes, graph.nodes is {}",
                        graph.node_count(),
                        self.nodes
                    )));
                }
                Ok(Segment {
                    duration: s.duration,
                    graph,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        GraphSignal::new(segments, self.mode, self.a_star)
    }
}

/// Which optional monitors to record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MonitorConfig {
    /// Derive references (an exact solution, the predicted limit, `y⋆`) from the system.
    #[serde(default = "yes")]
    pub auto: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub y_sharp: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub limit: Option<Vec<f64>>,
}

impl Default for MonitorConfig {
    fn default() -> Self {
        Self {
            auto: true,
            y_sharp: None,
            limit: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub system: SystemConfig,
    /// Row indices (0-based) held by each node; defaults to one row per node.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub groups: Option<Vec<Vec<usize>>>,
    pub graph: GraphConfig,
    pub flow: FlowKind,
    pub integrator: IntegratorConfig,
    pub initial: Vec<Vec<f64>>,
    #[serde(default)]
    pub monitors: MonitorConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
}

/// A validated, ready-to-run experiment.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub name: String,
    pub system: LinearSystem,
    pub spec: FlowSpec,
    pub signal: GraphSignal,
    pub x0: NetworkState,
    pub integrator: IntegratorConfig,
    pub refs: MonitorRefs,
    pub prediction: Option<LimitPrediction>,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::InvalidConfig(format!("config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::InvalidConfig(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn system(&self) -> Result<LinearSystem> {
        let h = Matrix::from_rows(&self.system.h)
            .map_err(|e| Error::InvalidConfig(format!("system.h: {e}")))?;
        if self.system.normalize {
            normalize_system(&h, &self.system.z)
        } else {
            LinearSystem::new_raw(h, self.system.z.clone())
        }
        .map_err(|e| Error::InvalidConfig(format!("system: {e}")))
    }

    pub fn build(&self) -> Result<Experiment> {
        let system = self.system()?;
        let patches = match &self.groups {
            Some(g) => system.grouped_patches(g),
            None => Ok(system.row_patches()),
        }
        .map_err(|e| Error::InvalidConfig(format!("groups: {e}")))?;
        let signal = self.graph.build()?;
        if signal.node_count() != patches.len() {
            return Err(Error::InvalidConfig(format!(
                "graph has {} nodes but the system is split over {} nodes",
                signal.node_count(),
                patches.len()
            )));
        }
        let spec = FlowSpec::new(self.flow, patches).map_err(|e| Error::InvalidConfig(format!("flow: {e}")))?;
        if self.initial.len() != spec.node_count() || self.initial.iter().any(|x| x.len() != spec.dim()) {
            return Err(Error::InvalidConfig(format!(
                "initial must hold {} states of length {}",
                spec.node_count(),
                spec.dim()
            )));
        }
        let x0 = NetworkState::from_nodes(0.0, &self.initial)
            .map_err(|e| Error::InvalidConfig(format!("initial: {e}")))?;
        let t0 = self.integrator.start_time(Some(self.flow));
        self.integrator.validate(t0)?;

        let mut refs = MonitorRefs {
            system: Some(system.clone()),
            ..MonitorRefs::default()
        };
        let mut prediction = None;
        if self.monitors.auto {
            refs.intersection = system.intersection_patch();
            if refs.intersection.is_some() {
                refs.y_sharp = system.particular_solution().ok();
                let start = if self.integrator.project_initial {
                    x0.projected_onto(spec.patches())
                } else {
                    x0.clone()
                };
                prediction = predict_for_signal(&system, &start, &signal);
                refs.limit = prediction.as_ref().map(|p| p.limit.clone());
            } else {
                refs.y_star = system.least_squares_solution().ok();
            }
            if let FlowKind::ConsensusProjection { gain, gamma, normalized: true } = self.flow {
                if gamma == 1.0 && self.groups.is_none() {
                    refs.potential_gain = Some(gain);
                }
            }
        }
        if let Some(y) = &self.monitors.y_sharp {
            check_len("monitors.y_sharp", y, spec.dim())?;
            refs.y_sharp = Some(y.clone());
        }
        if let Some(y) = &self.monitors.limit {
            check_len("monitors.limit", y, spec.dim())?;
            refs.limit = Some(y.clone());
        }
        Ok(Experiment {
            name: self.name.clone().unwrap_or_else(|| "experiment".into()),
            system,
            spec,
            signal,
            x0,
            integrator: self.integrator.clone(),
            refs,
            prediction,
        })
    }
}

fn check_len(field: &str, y: &[f64], m: usize) -> Result<()> {
    if y.len() == m {
        Ok(())
    } else {
        Err(Error::InvalidConfig(format!("{field} has length {}, expected {m}", y.len())))
    }
}

/// The limit formula that applies to this signal, if any.
pub fn predict_for_signal(sys: &LinearSystem, x0: &NetworkState, signal: &GraphSignal) -> Option<LimitPrediction> {
    if signal.is_balanced() {
        let union_connected = graph_union(signal).is_strongly_connected();
        if union_connected {
            return analysis::predict_limit_balanced(sys, x0).ok();
        }
    }
    if signal.is_fixed() {
        return analysis::predict_limit_fixed(sys, x0, signal.graph_at(0.0)).ok();
    }
    None
}

fn graph_union(signal: &GraphSignal) -> WeightedDigraph {
    let n = signal.node_count();
    let mut rows = vec![vec![0.0; n]; n];
    for s in signal.segments() {
        for (i, row) in rows.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                *v += s.graph.weight(i, j);
            }
        }
    }
    WeightedDigraph::from_weights(&rows).expect("sum of valid graphs")
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Verdict {
    pub name: String,
    pub value: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl Verdict {
    pub fn at_most(name: &str, value: f64, tolerance: f64) -> Self {
        Self {
            name: name.into(),
            value,
            tolerance,
            pass: value <= tolerance,
        }
    }

    pub fn holds(name: &str, ok: bool) -> Self {
        Self {
            name: name.into(),
            value: if ok { 1.0 } else { 0.0 },
            tolerance: 1.0,
            pass: ok,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSummary {
    pub name: String,
    pub flow: String,
    pub case: CaseLabel,
    pub t_end: f64,
    pub steps: usize,
    pub final_states: Vec<Vec<f64>>,
    pub final_monitors: BTreeMap<String, Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub prediction: Option<LimitPrediction>,
    pub verdicts: Vec<Verdict>,
    pub wall_time_s: f64,
}

impl RunSummary {
    pub fn passed(&self) -> bool {
        self.verdicts.iter().all(|v| v.pass)
    }
}

/// Runs an experiment and collects the standard verdicts.
pub fn run_experiment(exp: &Experiment) -> Result<(Trajectory, RunSummary)> {
    let clock = Instant::now();
    let traj = sim::simulate(&exp.spec, &exp.signal, &exp.x0, &exp.integrator, &exp.refs)?;
    let mut verdicts = Vec::new();
    if let Some(y) = &exp.refs.limit {
        let worst = (0..traj.nodes).map(|i| dist(traj.final_node(i), y)).fold(0.0, f64::max);
        verdicts.push(Verdict::at_most("limit_distance", worst, LIMIT_TOL));
    }
    if let Some(f) = traj.monitor("f_sharp") {
        let ok = sim::is_non_increasing(&f.series(), sim::MONOTONE_SLACK);
        verdicts.push(Verdict::holds("f_sharp_non_increasing", ok));
    }
    let summary = RunSummary {
        name: exp.name.clone(),
        flow: exp.spec.kind().name().into(),
        case: exp.system.case_label(),
        t_end: *traj.times.last().expect("at least one sample"),
        steps: traj.steps,
        final_states: traj.final_state().to_nodes(),
        final_monitors: traj
            .monitors
            .iter()
            .map(|(k, m)| (k.clone(), m.last().to_vec()))
            .collect(),
        prediction: exp.prediction.clone(),
        verdicts,
        wall_time_s: clock.elapsed().as_secs_f64(),
    };
    Ok((traj, summary))
}

/// `t,node,coord_0,…` with one line per node and sample.
pub fn trajectory_csv(traj: &Trajectory) -> String {
    let mut out = String::from("t,node");
    for k in 0..traj.dim {
        let _ = write!(out, ",coord_{k}");
    }
    out.push('\n');
    for (s, t) in traj.times.iter().enumerate() {
        for i in 0..traj.nodes {
            let _ = write!(out, "{t},{i}");
            for v in traj.node_at(s, i) {
                let _ = write!(out, ",{v}");
            }
            out.push('\n');
        }
    }
    out
}

/// `t,<columns>` for one monitor.
pub fn monitor_csv(traj: &Trajectory, name: &str) -> Option<String> {
    let m = traj.monitor(name)?;
    let mut out = String::from("t");
    for c in &m.columns {
        let _ = write!(out, ",{c}");
    }
    out.push('\n');
    for (t, row) in traj.times.iter().zip(&m.values) {
        let _ = write!(out, "{t}");
        for v in row {
            let _ = write!(out, ",{v}");
        }
        out.push('\n');
    }
    Some(out)
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| io_error(dir, e))?;
    }
    fs::write(path, contents).map_err(|e| io_error(path, e))
}

fn io_error(path: &Path, e: std::io::Error) -> Error {
    Error::InvalidConfig(format!("cannot write {}: {e}", path.display()))
}

/// Writes `<prefix>trajectory.csv` and `<prefix>monitor_<name>.csv` into `dir`.
pub fn write_trajectory(dir: &Path, prefix: &str, traj: &Trajectory) -> Result<Vec<PathBuf>> {
    let mut written = Vec::new();
    let p = dir.join(format!("{prefix}trajectory.csv"));
    write_file(&p, &trajectory_csv(traj))?;
    written.push(p);
    for name in traj.monitors.keys() {
        let p = dir.join(format!("{prefix}monitor_{name}.csv"));
        write_file(&p, &monitor_csv(traj, name).expect("key exists"))?;
        written.push(p);
    }
    Ok(written)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    write_file(path, &(serde_json::to_string_pretty(value).expect("serializable") + "\n"))
}

#[derive(Parser, Debug)]
#[command(name = "linflow", version, about = "Distributed continuous-time flows for z = Hy")]
pub struct Cli {
    /// Output directory (overrides the config's `output_dir`).
    #[arg(long, global = true, env = "LINFLOW_OUT")]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Run the experiment described by a JSON config.
    Simulate { config: PathBuf },
    /// Re-run one of the three built-in examples and check its verdicts.
    Reproduce {
        #[arg(value_parser = clap::value_parser!(u8).range(1..=3))]
        example: u8,
    },
    /// Report joint connectivity of the config's graph signal as JSON.
    CheckGraph {
        config: PathBuf,
        /// Window length.
        #[arg(long = "T", default_value_t = 1.0)]
        window: f64,
        #[arg(long, default_value_t = 0.5)]
        delta: f64,
        #[arg(long, default_value_t = 10.0)]
        horizon: f64,
    },
    /// Print limit predictions or the equilibrium analysis as JSON.
    Analyze {
        config: PathBuf,
        /// Gains for the equilibrium sweep, e.g. `1,5,100`.
        #[arg(long, value_delimiter = ',')]
        k_sweep: Option<Vec<f64>>,
        /// Force a limit formula instead of choosing from the graph.
        #[arg(long, value_enum)]
        limit: Option<LimitRequest>,
    },
}

#[derive(clap::ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum LimitRequest {
    Balanced,
    Fixed,
}

fn output_dir(cli_out: &Option<PathBuf>, cfg: Option<&ExperimentConfig>) -> PathBuf {
    cli_out
        .clone()
        .or_else(|| cfg.and_then(|c| c.output_dir.clone()))
        .unwrap_or_else(|| PathBuf::from("linflow-out"))
}

pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::NonFiniteState { .. } => EXIT_DIVERGED,
        _ => EXIT_CONFIG,
    }
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match run(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn run(cli: &Cli) -> Result<i32> {
    match &cli.command {
        Command::Simulate { config } => cmd_simulate(config, &cli.out),
        Command::Reproduce { example } => cmd_reproduce(*example, &cli.out),
        Command::CheckGraph {
            config,
            window,
            delta,
            horizon,
        } => {
            let report = cmd_check_graph(config, *window, *delta, *horizon)?;
            println!("{}", serde_json::to_string_pretty(&report).expect("serializable"));
            Ok(EXIT_OK)
        }
        Command::Analyze { config, k_sweep, limit } => {
            let report = cmd_analyze(config, k_sweep.as_deref(), *limit)?;
            println!("{}", serde_json::to_string_pretty(&report).expect("serializable"));
            Ok(EXIT_OK)
        }
    }
}

pub fn cmd_simulate(config: &Path, out: &Option<PathBuf>) -> Result<i32> {
    let cfg = ExperimentConfig::load(config)?;
    let exp = cfg.build()?;
    let (traj, summary) = run_experiment(&exp)?;
    let dir = output_dir(out, Some(&cfg));
    write_trajectory(&dir, "", &traj)?;
    write_json(&dir.join("summary.json"), &summary)?;
    println!("{}: {} samples written to {}", summary.name, traj.len(), dir.display());
    Ok(EXIT_OK)
}

/// Graph section of a full experiment config, or a bare graph config.
pub fn load_graph(config: &Path) -> Result<GraphSignal> {
    let text = fs::read_to_string(config)
        .map_err(|e| Error::InvalidConfig(format!("cannot read {}: {e}", config.display())))?;
    let value: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| Error::InvalidConfig(format!("config: {e}")))?;
    let graph = value.get("graph").cloned().unwrap_or(value);
    let graph: GraphConfig =
        serde_json::from_value(graph).map_err(|e| Error::InvalidConfig(format!("graph: {e}")))?;
    graph.build()
}

pub fn cmd_check_graph(config: &Path, window: f64, delta: f64, horizon: f64) -> Result<ConnectivityReport> {
    let signal = load_graph(config)?;
    graphsig::check_ujsc(&signal, window, delta, horizon)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AnalysisReport {
    pub case: CaseLabel,
    pub chi_star: Coherence,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub prediction: Option<LimitPrediction>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub equilibrium: Vec<LtiReport>,
}

pub fn cmd_analyze(config: &Path, k_sweep: Option<&[f64]>, limit: Option<LimitRequest>) -> Result<AnalysisReport> {
    let cfg = ExperimentConfig::load(config)?;
    let exp = cfg.build()?;
    let sys = &exp.system;
    let case = sys.case_label();
    let x0 = if exp.integrator.project_initial {
        exp.x0.projected_onto(exp.spec.patches())
    } else {
        exp.x0.clone()
    };
    let need_exact = |what: &str| {
        Error::PreconditionViolated(format!(
            "Case I/II required: the {what} limit formula needs an exact solution, system is {case:?}"
        ))
    };
    let prediction = match limit {
        Some(LimitRequest::Balanced) => {
            if !case.is_exact() {
                return Err(need_exact("balanced"));
            }
            if !exp.signal.is_balanced() {
                return Err(Error::PreconditionViolated("the balanced limit formula needs a balanced graph signal".into()));
            }
            Some(analysis::predict_limit_balanced(sys, &x0)?)
        }
        Some(LimitRequest::Fixed) => {
            if !case.is_exact() {
                return Err(need_exact("fixed-graph"));
            }
            if !exp.signal.is_fixed() {
                return Err(Error::PreconditionViolated("the fixed-graph limit formula needs a fixed graph".into()));
            }
            Some(analysis::predict_limit_fixed(sys, &x0, exp.signal.graph_at(0.0))?)
        }
        None if case.is_exact() => predict_for_signal(sys, &x0, &exp.signal),
        None => None,
    };
    let graph = exp.signal.graph_at(0.0);
    let mut equilibrium = Vec::new();
    let wants_sweep = k_sweep.is_some() || !case.is_exact();
    if wants_sweep && exp.signal.is_fixed() && graph.has_symmetric_weights() && cfg.groups.is_none() {
        let gains = match (k_sweep, exp.spec.kind()) {
            (Some(k), _) => k.to_vec(),
            (None, FlowKind::ConsensusProjection { gain, .. }) => vec![gain],
            (None, _) => vec![1.0],
        };
        equilibrium = analysis::gain_sweep(sys, graph, &gains)?;
    } else if k_sweep.is_some() {
        return Err(Error::PreconditionViolated(
            "the gain sweep needs a fixed graph with symmetric weights and one row per node".into(),
        ));
    }
    Ok(AnalysisReport {
        case,
        chi_star: analysis::chi_star(sys),
        prediction,
        equilibrium,
    })
}

/// Built-in configuration of example 1 or 2 with the given flow.
pub fn example_config(example: u8, flow: FlowKind) -> ExperimentConfig {
    let (sys, x0) = match example {
        1 => (fixtures::example1_system(), fixtures::example1_initial()),
        2 => (fixtures::example2_system(), fixtures::example2_initial()),
        _ => (fixtures::example3_system(), fixtures::example3_initial()),
    };
    let graph = if example == 3 { fixtures::four_cycle() } else { fixtures::three_cycle() };
    ExperimentConfig {
        name: Some(format!("example{example}_{}", flow.name())),
        system: SystemConfig {
            h: sys.h().to_rows(),
            z: sys.z().to_vec(),
            normalize: true,
        },
        groups: None,
        graph: GraphConfig::from_graph(&graph),
        flow,
        integrator: IntegratorConfig::new(1e-3, 40.0).with_stride(100),
        initial: x0,
        monitors: MonitorConfig::default(),
        output_dir: None,
    }
}

/// Horizon of the example 3 runs; long enough for every gain to settle
/// below the LTI cross-check tolerance.
pub const EXAMPLE3_T_END: f64 = 40.0;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReproduceReport {
    pub example: u8,
    pub runs: Vec<RunSummary>,
    pub verdicts: Vec<Verdict>,
}

impl ReproduceReport {
    pub fn passed(&self) -> bool {
        self.verdicts.iter().all(|v| v.pass) && self.runs.iter().all(RunSummary::passed)
    }
}

/// Runs a built-in example, writing its curves into `dir` when given.
pub fn reproduce(example: u8, dir: Option<&Path>) -> Result<ReproduceReport> {
    match example {
        1 | 2 => reproduce_exact(example, dir),
        3 => reproduce_least_squares(dir),
        _ => Err(Error::InvalidConfig(format!("unknown example {example}"))),
    }
}

fn reproduce_exact(example: u8, dir: Option<&Path>) -> Result<ReproduceReport> {
    let target: Vec<f64> = if example == 1 {
        fixtures::EXAMPLE1_SOLUTION.to_vec()
    } else {
        fixtures::EXAMPLE2_LIMIT.to_vec()
    };
    let mut runs = Vec::new();
    let mut verdicts = Vec::new();
    for flow in [FlowKind::consensus_projection(1.0), FlowKind::ProjectionConsensus] {
        let cfg = example_config(example, flow);
        let exp = cfg.build()?;
        let (traj, summary) = run_experiment(&exp)?;
        let worst = (0..traj.nodes).map(|i| dist(traj.final_node(i), &target)).fold(0.0, f64::max);
        verdicts.push(Verdict::at_most(&format!("{}_final_distance", flow.name()), worst, LIMIT_TOL));
        if example == 2 {
            let r = traj.monitor("limit_distance").map_or(f64::INFINITY, |m| {
                m.last().iter().copied().fold(0.0, f64::max)
            });
            verdicts.push(Verdict::at_most(&format!("{}_r_i_final", flow.name()), r, LIMIT_TOL));
        }
        if let Some(d) = dir {
            write_trajectory(d, &format!("{}_", flow.name()), &traj)?;
        }
        runs.push(summary);
    }
    Ok(ReproduceReport { example, runs, verdicts })
}

fn reproduce_least_squares(dir: Option<&Path>) -> Result<ReproduceReport> {
    let sys = fixtures::example3_system();
    let graph = fixtures::four_cycle();
    let gains = fixtures::EXAMPLE3_GAINS;
    let mut runs = Vec::new();
    let mut finals = Vec::new();
    let mut energy: Vec<Vec<f64>> = Vec::new();
    let mut times = Vec::new();
    let mut lti_err: f64 = 0.0;
    let reports = analysis::gain_sweep(&sys, &graph, &gains)?;
    for (&k, report) in gains.iter().zip(&reports) {
        let mut cfg = example_config(3, FlowKind::consensus_projection(k));
        cfg.integrator = IntegratorConfig::new(1e-3, EXAMPLE3_T_END).with_stride(100);
        let exp = cfg.build()?;
        let (traj, summary) = run_experiment(&exp)?;
        let e = traj.monitor("energy").expect("y_star is known").series();
        finals.push(*e.last().expect("nonempty"));
        for i in 0..traj.nodes {
            lti_err = lti_err.max(dist(traj.final_node(i), &report.equilibrium[i]));
        }
        times = traj.times.clone();
        energy.push(e);
        if let Some(d) = dir {
            write_trajectory(d, &format!("k{k}_"), &traj)?;
        }
        runs.push(summary);
    }
    if let Some(d) = dir {
        let mut csv = String::from("t");
        for k in gains {
            let _ = write!(csv, ",E_{k}");
        }
        csv.push('\n');
        for (s, t) in times.iter().enumerate() {
            let _ = write!(csv, "{t}");
            for e in &energy {
                let _ = write!(csv, ",{}", e[s]);
            }
            csv.push('\n');
        }
        write_file(&d.join("energy.csv"), &csv)?;
        write_json(&d.join("equilibrium.json"), &reports)?;
    }
    let decreasing = finals.windows(2).all(|w| w[1] < w[0]);
    let gaps_decreasing = reports.windows(2).all(|w| w[1].gap < w[0].gap);
    let verdicts = vec![
        Verdict::holds("energy_decreasing_in_gain", decreasing),
        Verdict::at_most("equilibrium_match", lti_err, 1e-6),
        Verdict::holds("gap_decreasing_in_gain", gaps_decreasing),
    ];
    // The f_sharp/limit verdicts do not apply without an exact solution.
    Ok(ReproduceReport {
        example: 3,
        runs,
        verdicts,
    })
}

pub fn cmd_reproduce(example: u8, out: &Option<PathBuf>) -> Result<i32> {
    let dir = output_dir(out, None).join(format!("example{example}"));
    let report = reproduce(example, Some(&dir))?;
    write_json(&dir.join("summary.json"), &report)?;
    for v in &report.verdicts {
        println!(
            "{} {} = {:e} (tolerance {:e})",
            if v.pass { "PASS" } else { "FAIL" },
            v.name,
            v.value,
            v.tolerance
        );
    }
    Ok(if report.passed() { EXIT_OK } else { EXIT_VERDICT })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_round_trip() {
        for ex in [1, 2, 3] {
            let cfg = example_config(ex, FlowKind::ProjectionConsensus);
            let back = ExperimentConfig::from_json(&cfg.to_json()).unwrap();
            assert_eq!(cfg, back);
        }
    }

    #[test]
    fn minimal_config_defaults() {
        let text = r#"{
            "system": {"h": [[1, 0], [0, 1]], "z": [1, 2]},
            "graph": {"nodes": 2, "segments": [{"weights": [[0, 1], [1, 0]]}]},
            "flow": {"kind": "consensus_projection", "gain": 2},
            "integrator": {"step": 0.01, "t_end": 1},
            "initial": [[0, 0], [0, 0]]
        }"#;
        let cfg = ExperimentConfig::from_json(text).unwrap();
        assert!(cfg.system.normalize && cfg.monitors.auto);
        assert_eq!(cfg.integrator.sample_stride, 1);
        let exp = cfg.build().unwrap();
        assert_eq!(exp.refs.y_sharp.as_deref(), Some(&[1.0, 2.0][..]));
        assert_eq!(exp.refs.potential_gain, Some(2.0));
    }

    #[test]
    fn zero_row_is_named() {
        let mut cfg = example_config(1, FlowKind::ProjectionConsensus);
        cfg.system.h[1] = vec![0.0, 0.0];
        let err = cfg.build().unwrap_err();
        assert!(err.to_string().contains("row 1"), "{err}");
    }

    #[test]
    fn validation_errors() {
        let base = example_config(1, FlowKind::ProjectionConsensus);
        let mut c = base.clone();
        c.integrator.step = -1e-3;
        assert!(matches!(c.build(), Err(Error::InvalidConfig(_))));
        let mut c = base.clone();
        c.initial.pop();
        assert!(matches!(c.build(), Err(Error::InvalidConfig(_))));
        let mut c = base.clone();
        c.graph.nodes = 4;
        assert!(matches!(c.build(), Err(Error::InvalidConfig(_))));
        let mut c = base.clone();
        c.groups = Some(vec![vec![0, 1], vec![1, 5], vec![2]]);
        assert!(matches!(c.build(), Err(Error::InvalidConfig(_))));
        let mut c = base;
        c.graph.segments[0].weights = Some(vec![vec![0.0; 3]; 3]);
        assert!(matches!(c.build(), Err(Error::InvalidConfig(_))));
        assert!(ExperimentConfig::from_json("{\"system\": 1}").is_err());
    }

    #[test]
    fn overlapping_groups_are_accepted() {
        let mut c = example_config(1, FlowKind::ProjectionConsensus);
        c.groups = Some(vec![vec![0, 1], vec![1, 2], vec![2, 0]]);
        let exp = c.build().unwrap();
        assert!(exp.spec.patches().iter().all(|p| p.codim() == 2));
    }

    #[test]
    fn predictions_follow_the_graph() {
        let exp = example_config(2, FlowKind::consensus_projection(1.0)).build().unwrap();
        let p = exp.prediction.unwrap();
        assert!(dist(&p.limit, &fixtures::EXAMPLE2_LIMIT) < 1e-12);
        let exp = example_config(3, FlowKind::consensus_projection(1.0)).build().unwrap();
        assert!(exp.prediction.is_none() && exp.refs.y_star.is_some());
    }

    #[test]
    fn csv_layout() {
        let exp = example_config(1, FlowKind::ProjectionConsensus).build().unwrap();
        let mut exp = exp;
        exp.integrator = IntegratorConfig::new(0.1, 0.2);
        let (traj, _) = run_experiment(&exp).unwrap();
        let csv = trajectory_csv(&traj);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "t,node,coord_0,coord_1");
        assert_eq!(lines[1], "0,0,-2,-1");
        assert_eq!(lines.len(), 1 + 3 * 3);
        let m = monitor_csv(&traj, "plane_distance").unwrap();
        assert!(m.starts_with("t,node_0,node_1,node_2\n"));
        assert!(monitor_csv(&traj, "missing").is_none());
    }
}
