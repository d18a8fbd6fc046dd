//! Fixed-step RK4 integration over piecewise-constant graph signals, plus the
//! diagnostic time series recorded along a run.
//!
//! Each interval between consecutive graph switches is split into equal steps
//! no longer than the configured step, so no step straddles a switch and the
//! right-hand side is smooth within every step.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::affine::{AffinePatch, LinearSystem};
use crate::error::{Error, Result};
use crate::flows::{self, FlowKind, FlowSpec, NetworkState};
use crate::graphsig::{GraphSignal, WeightedDigraph};
use crate::numkit::{self, dist, norm};

/// States beyond this magnitude abort the run.
pub const DIVERGENCE_BOUND: f64 = 1e12;

/// Per-sample slack allowed when checking that a series is non-increasing.
pub const MONOTONE_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntegratorConfig {
    pub step: f64,
    pub t_end: f64,
    /// Record every `sample_stride`-th step (the final state is always recorded).
    #[serde(default = "default_stride")]
    pub sample_stride: usize,
    /// Start time; defaults to 0, or 1 for the 1/t flow.
    #[serde(default)]
    pub t0: Option<f64>,
    /// Project every `x_i(0)` onto its own constraint set before starting.
    #[serde(default)]
    pub project_initial: bool,
}

fn default_stride() -> usize {
    1
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self {
            step: 1e-3,
            t_end: 10.0,
            sample_stride: 1,
            t0: None,
            project_initial: false,
        }
    }
}

impl IntegratorConfig {
    pub fn new(step: f64, t_end: f64) -> Self {
        Self {
            step,
            t_end,
            ..Self::default()
        }
    }

    pub fn with_stride(mut self, stride: usize) -> Self {
        self.sample_stride = stride;
        self
    }

    pub fn projected(mut self) -> Self {
        self.project_initial = true;
        self
    }

    pub fn starting_at(mut self, t0: f64) -> Self {
        self.t0 = Some(t0);
        self
    }

    pub fn start_time(&self, kind: Option<FlowKind>) -> f64 {
        self.t0.unwrap_or(match kind {
            Some(FlowKind::ConsensusProjectionDecay { .. }) => 1.0,
            _ => 0.0,
        })
    }

    pub fn validate(&self, t0: f64) -> Result<()> {
        if !(self.step > 0.0 && self.step.is_finite()) {
            return Err(Error::InvalidConfig(format!("step must be positive, got {}", self.step)));
        }
        if !(self.t_end.is_finite() && self.t_end > t0) {
            return Err(Error::InvalidConfig(format!(
                "t_end ({}) must exceed the start time ({t0})",
                self.t_end
            )));
        }
        if !(t0.is_finite() && t0 >= 0.0) {
            return Err(Error::InvalidConfig(format!("start time must be nonnegative, got {t0}")));
        }
        if self.sample_stride == 0 {
            return Err(Error::InvalidConfig("sample_stride must be at least 1".into()));
        }
        Ok(())
    }
}

/// Integrates `ẋ = f(graph, t, x)` with classical RK4, calling `sample` at the
/// start, every `stride` steps and at the end.
pub fn integrate<F, S>(
    signal: &GraphSignal,
    x0: &[f64],
    t0: f64,
    cfg: &IntegratorConfig,
    mut f: F,
    mut sample: S,
) -> Result<usize>
where
    F: FnMut(&WeightedDigraph, f64, &[f64], &mut [f64]) -> Result<()>,
    S: FnMut(f64, &[f64]),
{
    cfg.validate(t0)?;
    let n = x0.len();
    let mut x = x0.to_vec();
    let mut k1 = vec![0.0; n];
    let mut k2 = vec![0.0; n];
    let mut k3 = vec![0.0; n];
    let mut k4 = vec![0.0; n];
    let mut tmp = vec![0.0; n];

    let mut breaks = signal.switches_between(t0, cfg.t_end);
    breaks.push(cfg.t_end);

    sample(t0, &x);
    let mut steps = 0usize;
    let mut last_sampled = true;
    let mut a = t0;
    for b in breaks {
        let graph = signal.graph_at(a);
        let len = b - a;
        let count = ((len / cfg.step) - 1e-9).ceil().max(1.0) as usize;
        let h = len / count as f64;
        for s in 0..count {
            let t = a + s as f64 * h;
            f(graph, t, &x, &mut k1)?;
            for i in 0..n {
                tmp[i] = x[i] + 0.5 * h * k1[i];
            }
            f(graph, t + 0.5 * h, &tmp, &mut k2)?;
            for i in 0..n {
                tmp[i] = x[i] + 0.5 * h * k2[i];
            }
            f(graph, t + 0.5 * h, &tmp, &mut k3)?;
            for i in 0..n {
                tmp[i] = x[i] + h * k3[i];
            }
            f(graph, t + h, &tmp, &mut k4)?;
            for i in 0..n {
                x[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
            }
            let t_next = if s + 1 == count { b } else { a + (s + 1) as f64 * h };
            if !numkit::all_finite(&x) || numkit::norm_inf(&x) > DIVERGENCE_BOUND {
                return Err(Error::NonFiniteState { t: t_next });
            }
            steps += 1;
            last_sampled = steps.is_multiple_of(cfg.sample_stride);
            if last_sampled {
                sample(t_next, &x);
            }
        }
        a = b;
    }
    if !last_sampled {
        sample(cfg.t_end, &x);
    }
    Ok(steps)
}

/// A named, possibly multi-column time series aligned with `Trajectory::times`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Monitor {
    pub columns: Vec<String>,
    pub values: Vec<Vec<f64>>,
}

impl Monitor {
    pub fn scalar(name: &str, values: Vec<f64>) -> Self {
        Self {
            columns: vec![name.to_string()],
            values: values.into_iter().map(|v| vec![v]).collect(),
        }
    }

    /// First column as a plain series.
    pub fn series(&self) -> Vec<f64> {
        self.values.iter().map(|row| row[0]).collect()
    }

    pub fn last(&self) -> &[f64] {
        self.values.last().map_or(&[], Vec::as_slice)
    }
}

/// Sampled node states plus monitor series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub nodes: usize,
    pub dim: usize,
    pub times: Vec<f64>,
    /// Flat node-major states, one per sample.
    pub states: Vec<Vec<f64>>,
    pub monitors: BTreeMap<String, Monitor>,
    pub steps: usize,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn state(&self, k: usize) -> NetworkState {
        NetworkState::new(self.times[k], self.nodes, self.dim, self.states[k].clone())
            .expect("recorded states are finite")
    }

    pub fn final_state(&self) -> NetworkState {
        self.state(self.len() - 1)
    }

    pub fn node_at(&self, k: usize, i: usize) -> &[f64] {
        &self.states[k][i * self.dim..(i + 1) * self.dim]
    }

    pub fn final_node(&self, i: usize) -> &[f64] {
        self.node_at(self.len() - 1, i)
    }

    pub fn monitor(&self, name: &str) -> Option<&Monitor> {
        self.monitors.get(name)
    }

    fn per_sample<T>(&self, mut f: impl FnMut(&[f64]) -> T) -> Vec<T> {
        self.states.iter().map(|x| f(x)).collect()
    }
}

/// Reference points that enable the optional monitors.
#[derive(Debug, Clone, Default)]
pub struct MonitorRefs {
    /// An exact solution; enables `f_sharp`.
    pub y_sharp: Option<Vec<f64>>,
    /// The full solution set; enables `dist_to_solution_set` and, with `y_sharp`, `h_sharp`.
    pub intersection: Option<AffinePatch>,
    /// Least-squares solution; enables `energy` (`Σ‖x_i − y⋆‖²`).
    pub y_star: Option<Vec<f64>>,
    /// Predicted common limit; enables `limit_distance` (`‖x_i − y♭‖` per node).
    pub limit: Option<Vec<f64>>,
    /// Enables `ls_objective` evaluated at the node average.
    pub system: Option<LinearSystem>,
    /// Consensus gain for the `potential` monitor; only used on fixed symmetric graphs.
    pub potential_gain: Option<f64>,
}

/// Integrates a flow and evaluates the standard monitors at every sample.
pub fn simulate(
    spec: &FlowSpec,
    signal: &GraphSignal,
    x0: &NetworkState,
    cfg: &IntegratorConfig,
    refs: &MonitorRefs,
) -> Result<Trajectory> {
    if signal.node_count() != spec.node_count() {
        return Err(Error::DimensionMismatch(format!(
            "graph signal has {} nodes, flow has {}",
            signal.node_count(),
            spec.node_count()
        )));
    }
    if x0.node_count() != spec.node_count() || x0.dim() != spec.dim() {
        return Err(Error::DimensionMismatch(format!(
            "initial state is {} nodes in R^{}, flow expects {} nodes in R^{}",
            x0.node_count(),
            x0.dim(),
            spec.node_count(),
            spec.dim()
        )));
    }
    let start = if cfg.project_initial {
        x0.projected_onto(spec.patches())
    } else {
        x0.clone()
    };
    let t0 = cfg.start_time(Some(spec.kind()));
    let mut traj = Trajectory {
        nodes: spec.node_count(),
        dim: spec.dim(),
        times: Vec::new(),
        states: Vec::new(),
        monitors: BTreeMap::new(),
        steps: 0,
    };
    traj.steps = integrate(
        signal,
        start.as_slice(),
        t0,
        cfg,
        |g, t, x, out| flows::rhs_into(spec, g, t, x, out),
        |t, x| {
            traj.times.push(t);
            traj.states.push(x.to_vec());
        },
    )?;
    attach_monitors(&mut traj, spec, signal, refs);
    Ok(traj)
}

fn attach_monitors(traj: &mut Trajectory, spec: &FlowSpec, signal: &GraphSignal, refs: &MonitorRefs) {
    let mut out = BTreeMap::new();
    let mut add = |name: &str, m: Monitor| {
        out.insert(name.to_string(), m);
    };
    add("disagreement", Monitor::scalar("disagreement", monitor_disagreement(traj)));
    add(
        "average",
        Monitor {
            columns: (0..traj.dim).map(|k| format!("avg_{k}")).collect(),
            values: monitor_average(traj),
        },
    );
    add(
        "plane_distance",
        Monitor {
            columns: (0..traj.nodes).map(|i| format!("node_{i}")).collect(),
            values: monitor_patch_distance(traj, spec.patches()),
        },
    );
    if let Some(y) = &refs.y_sharp {
        add("f_sharp", Monitor::scalar("f_sharp", monitor_f_sharp(traj, y)));
        if let Some(set) = &refs.intersection {
            let radius = initial_radius(traj, y);
            add("h_sharp", Monitor::scalar("h_sharp", monitor_h_sharp(traj, set, y, radius)));
        }
    }
    if let Some(set) = &refs.intersection {
        add(
            "dist_to_solution_set",
            Monitor::scalar("dist_to_solution_set", monitor_set_distance(traj, set)),
        );
    }
    if let Some(y) = &refs.y_star {
        add("energy", Monitor::scalar("energy", monitor_energy(traj, y)));
    }
    if let Some(y) = &refs.limit {
        add(
            "limit_distance",
            Monitor {
                columns: (0..traj.nodes).map(|i| format!("node_{i}")).collect(),
                values: monitor_limit_distance(traj, y),
            },
        );
    }
    if let Some(sys) = &refs.system {
        let values = monitor_average(traj)
            .iter()
            .map(|avg| crate::analysis::ls_objective(sys, avg).value)
            .collect();
        add("ls_objective", Monitor::scalar("ls_objective", values));
    }
    if let Some(gain) = refs.potential_gain {
        let graph = signal.graph_at(0.0);
        if signal.is_fixed() && graph.has_symmetric_weights() {
            let values = traj.per_sample(|x| crate::analysis::potential_value(spec.patches(), graph, gain, x));
            add("potential", Monitor::scalar("potential", values));
        }
    }
    traj.monitors = out;
}

fn nodes_of<'a>(x: &'a [f64], dim: usize) -> impl Iterator<Item = &'a [f64]> + 'a {
    x.chunks(dim)
}

/// `max_i ½‖x_i(t) − y♯‖²`
pub fn monitor_f_sharp(traj: &Trajectory, y_sharp: &[f64]) -> Vec<f64> {
    traj.per_sample(|x| {
        nodes_of(x, traj.dim)
            .map(|xi| 0.5 * dist(xi, y_sharp).powi(2))
            .fold(0.0, f64::max)
    })
}

/// Projection onto `A ∩ {y : ‖y − center‖ ≤ radius}` where `center ∈ A`.
pub fn project_truncated(set: &AffinePatch, center: &[f64], radius: f64, y: &[f64]) -> Vec<f64> {
    let p = set.project(y);
    let off = numkit::sub(&p, center);
    let r = norm(&off);
    if r <= radius {
        p
    } else {
        numkit::add(center, &numkit::scale(&off, radius / r))
    }
}

/// `max_i ‖x_i(0) − y♯‖`: the truncation radius used by [`monitor_h_sharp`] in [`simulate`].
pub fn initial_radius(traj: &Trajectory, y_sharp: &[f64]) -> f64 {
    nodes_of(&traj.states[0], traj.dim)
        .map(|xi| dist(xi, y_sharp))
        .fold(0.0, f64::max)
}

/// `max_i ½ dist(x_i(t), A♯)²` with `A♯` the solution set truncated to the ball
/// of `radius` around `y♯`.
pub fn monitor_h_sharp(traj: &Trajectory, set: &AffinePatch, y_sharp: &[f64], radius: f64) -> Vec<f64> {
    traj.per_sample(|x| {
        nodes_of(x, traj.dim)
            .map(|xi| 0.5 * dist(xi, &project_truncated(set, y_sharp, radius, xi)).powi(2))
            .fold(0.0, f64::max)
    })
}

/// `max_{i,j} ‖x_i(t) − x_j(t)‖`
pub fn monitor_disagreement(traj: &Trajectory) -> Vec<f64> {
    traj.per_sample(|x| {
        let nodes: Vec<&[f64]> = nodes_of(x, traj.dim).collect();
        let mut worst: f64 = 0.0;
        for i in 0..nodes.len() {
            for j in (i + 1)..nodes.len() {
                worst = worst.max(dist(nodes[i], nodes[j]));
            }
        }
        worst
    })
}

/// `Σ_i x_i(t) / N`
pub fn monitor_average(traj: &Trajectory) -> Vec<Vec<f64>> {
    traj.per_sample(|x| {
        let mut avg = vec![0.0; traj.dim];
        for xi in nodes_of(x, traj.dim) {
            numkit::axpy(1.0 / traj.nodes as f64, xi, &mut avg);
        }
        avg
    })
}

/// Per-node distance to the node's own constraint set.
pub fn monitor_patch_distance(traj: &Trajectory, patches: &[AffinePatch]) -> Vec<Vec<f64>> {
    traj.per_sample(|x| {
        nodes_of(x, traj.dim)
            .zip(patches)
            .map(|(xi, p)| p.distance(xi))
            .collect()
    })
}

/// `max_i dist(x_i(t), A)`
pub fn monitor_set_distance(traj: &Trajectory, set: &AffinePatch) -> Vec<f64> {
    traj.per_sample(|x| nodes_of(x, traj.dim).map(|xi| set.distance(xi)).fold(0.0, f64::max))
}

/// `Σ_i ‖x_i(t) − y⋆‖²`
pub fn monitor_energy(traj: &Trajectory, y_star: &[f64]) -> Vec<f64> {
    traj.per_sample(|x| nodes_of(x, traj.dim).map(|xi| dist(xi, y_star).powi(2)).sum())
}

/// `‖x_i(t) − y‖` for every node.
pub fn monitor_limit_distance(traj: &Trajectory, y: &[f64]) -> Vec<Vec<f64>> {
    traj.per_sample(|x| nodes_of(x, traj.dim).map(|xi| dist(xi, y)).collect())
}

/// Largest increase between consecutive samples (≤ 0 for a non-increasing series).
pub fn max_increase(series: &[f64]) -> f64 {
    series
        .windows(2)
        .map(|w| w[1] - w[0])
        .fold(f64::NEG_INFINITY, f64::max)
}

pub fn is_non_increasing(series: &[f64], slack: f64) -> bool {
    series.len() < 2 || max_increase(series) <= slack
}

/// Integrates scalar consensus `q̇_i = K Σ a_ij (q_j − q_i) + w_i` with constant `w`.
pub fn simulate_disturbed_consensus(
    gain: f64,
    signal: &GraphSignal,
    q0: &[f64],
    disturbance: &[f64],
    cfg: &IntegratorConfig,
) -> Result<Trajectory> {
    let mut traj = Trajectory {
        nodes: q0.len(),
        dim: 1,
        times: Vec::new(),
        states: Vec::new(),
        monitors: BTreeMap::new(),
        steps: 0,
    };
    let t0 = cfg.start_time(None);
    traj.steps = integrate(
        signal,
        q0,
        t0,
        cfg,
        |g, _t, q, out| {
            let d = flows::rhs_disturbed_consensus(gain, g, q, disturbance)?;
            out.copy_from_slice(&d);
            Ok(())
        },
        |t, q| {
            traj.times.push(t);
            traj.states.push(q.to_vec());
        },
    )?;
    let dis = monitor_disagreement(&traj);
    traj.monitors.insert("disagreement".into(), Monitor::scalar("disagreement", dis));
    Ok(traj)
}
