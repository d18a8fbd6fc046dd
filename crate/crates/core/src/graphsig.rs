//! Time-varying weighted digraphs given as piecewise-constant schedules.
//!
//! Weight convention: `weight(i, j)` is `a_ij`, the weight with which node `i`
//! listens to node `j`, i.e. the arc `j → i`. Node `i`'s neighbor set is every
//! `j` with `a_ij > 0`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numkit::{self, Matrix};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightedDigraph {
    n: usize,
    weights: Vec<f64>,
}

impl WeightedDigraph {
    pub fn empty(n: usize) -> Self {
        Self {
            n,
            weights: vec![0.0; n * n],
        }
    }

    /// `rows[i][j] = a_ij`. The diagonal must be zero and weights nonnegative.
    pub fn from_weights<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let n = rows.len();
        let mut g = Self::empty(n);
        for (i, row) in rows.iter().enumerate() {
            let row = row.as_ref();
            if row.len() != n {
                return Err(Error::InvalidSignal(format!(
                    "weight row {i} has {} entries, expected {n}",
                    row.len()
                )));
            }
            for (j, &w) in row.iter().enumerate() {
                g.set_weight(i, j, w)?;
            }
        }
        Ok(g)
    }

    /// Arcs `from → to` with the given weight.
    pub fn from_arcs(n: usize, arcs: &[(usize, usize, f64)]) -> Result<Self> {
        let mut g = Self::empty(n);
        for &(from, to, w) in arcs {
            if from >= n || to >= n {
                return Err(Error::InvalidSignal(format!(
                    "arc {from}->{to} out of range for {n} nodes"
                )));
            }
            g.set_weight(to, from, w)?;
        }
        Ok(g)
    }

    /// Directed cycle `0 → 1 → … → n−1 → 0`.
    pub fn directed_cycle(n: usize, w: f64) -> Self {
        let arcs: Vec<_> = (0..n).map(|i| (i, (i + 1) % n, w)).collect();
        Self::from_arcs(n, &arcs).expect("valid cycle")
    }

    /// Undirected cycle with symmetric weights.
    pub fn undirected_cycle(n: usize, w: f64) -> Self {
        let mut arcs = Vec::new();
        for i in 0..n {
            let j = (i + 1) % n;
            arcs.push((i, j, w));
            arcs.push((j, i, w));
        }
        Self::from_arcs(n, &arcs).expect("valid cycle")
    }

    pub fn complete(n: usize, w: f64) -> Self {
        let mut g = Self::empty(n);
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    g.weights[i * n + j] = w;
                }
            }
        }
        g
    }

    fn set_weight(&mut self, i: usize, j: usize, w: f64) -> Result<()> {
        if !w.is_finite() || w < 0.0 {
            return Err(Error::InvalidSignal(format!(
                "weight a[{i}][{j}] = {w} must be finite and nonnegative"
            )));
        }
        if i == j && w != 0.0 {
            return Err(Error::InvalidSignal(format!("self-loop weight a[{i}][{i}] = {w}")));
        }
        self.weights[i * self.n + j] = w;
        Ok(())
    }

    pub fn node_count(&self) -> usize {
        self.n
    }

    /// `a_ij`: weight of arc `j → i`.
    pub fn weight(&self, i: usize, j: usize) -> f64 {
        self.weights[i * self.n + j]
    }

    pub fn has_arc(&self, from: usize, to: usize) -> bool {
        self.weight(to, from) > 0.0
    }

    pub fn max_weight(&self) -> f64 {
        numkit::norm_inf(&self.weights)
    }

    pub fn min_positive_weight(&self) -> Option<f64> {
        self.weights
            .iter()
            .copied()
            .filter(|w| *w > 0.0)
            .reduce(f64::min)
    }

    /// `(j, a_ij)` for every in-neighbor `j` of `i`.
    pub fn in_neighbors(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.weights[i * self.n..(i + 1) * self.n]
            .iter()
            .copied()
            .enumerate()
            .filter(|(_, w)| *w > 0.0)
    }

    pub fn in_weight(&self, i: usize) -> f64 {
        (0..self.n).map(|j| self.weight(i, j)).sum()
    }

    pub fn out_weight(&self, j: usize) -> f64 {
        (0..self.n).map(|i| self.weight(i, j)).sum()
    }

    pub fn weight_rows(&self) -> Vec<Vec<f64>> {
        (0..self.n)
            .map(|i| self.weights[i * self.n..(i + 1) * self.n].to_vec())
            .collect()
    }

    /// Arc presence is symmetric (weights may differ).
    pub fn is_bidirectional(&self) -> bool {
        (0..self.n).all(|i| (0..self.n).all(|j| self.has_arc(i, j) == self.has_arc(j, i)))
    }

    pub fn has_symmetric_weights(&self) -> bool {
        (0..self.n).all(|i| (0..i).all(|j| (self.weight(i, j) - self.weight(j, i)).abs() <= 1e-12))
    }

    pub fn is_strongly_connected(&self) -> bool {
        let arcs: Vec<(usize, usize)> = (0..self.n)
            .flat_map(|to| (0..self.n).map(move |from| (from, to)))
            .filter(|&(from, to)| self.has_arc(from, to))
            .collect();
        strongly_connected(self.n, &arcs)
    }

    /// Connectivity of the underlying undirected graph.
    pub fn is_weakly_connected(&self) -> bool {
        let mut arcs = Vec::new();
        for i in 0..self.n {
            for j in 0..self.n {
                if self.has_arc(j, i) {
                    arcs.push((j, i));
                    arcs.push((i, j));
                }
            }
        }
        strongly_connected(self.n, &arcs)
    }
}

fn reachable_count(n: usize, adj: &[Vec<usize>]) -> usize {
    let mut seen = vec![false; n];
    let mut stack = vec![0];
    seen[0] = true;
    let mut count = 1;
    while let Some(u) = stack.pop() {
        for &v in &adj[u] {
            if !seen[v] {
                seen[v] = true;
                count += 1;
                stack.push(v);
            }
        }
    }
    count
}

/// Depth-first reachability from node 0 in both arc directions.
fn strongly_connected(n: usize, arcs: &[(usize, usize)]) -> bool {
    if n <= 1 {
        return true;
    }
    let mut fwd = vec![Vec::new(); n];
    let mut rev = vec![Vec::new(); n];
    for &(a, b) in arcs {
        fwd[a].push(b);
        rev[b].push(a);
    }
    reachable_count(n, &fwd) == n && reachable_count(n, &rev) == n
}

pub fn check_balanced(graph: &WeightedDigraph) -> bool {
    (0..graph.node_count()).all(|i| (graph.in_weight(i) - graph.out_weight(i)).abs() <= 1e-12)
}

/// `L = D − A` with `A_ij = a_ij` and `D = diag(Σ_j a_ij)`.
pub fn laplacian(graph: &WeightedDigraph) -> Matrix {
    let n = graph.node_count();
    let mut l = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            if i != j {
                l[(i, j)] = -graph.weight(i, j);
            }
        }
        l[(i, i)] = graph.in_weight(i);
    }
    l
}

/// Positive `w` with `w^T L = 0` and `Σ w_i = 1`.
pub fn left_eigenvector(graph: &WeightedDigraph) -> Result<Vec<f64>> {
    if !graph.is_strongly_connected() {
        return Err(Error::NotStronglyConnected);
    }
    let n = graph.node_count();
    let lt = laplacian(graph).transpose();
    // L^T has a one-dimensional null space; swap its last equation for Σ w = 1.
    let mut a = lt;
    for j in 0..n {
        a[(n - 1, j)] = 1.0;
    }
    let mut rhs = vec![0.0; n];
    rhs[n - 1] = 1.0;
    numkit::solve_linear(&a, &rhs)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SignalMode {
    /// Repeats the segment list forever.
    Periodic,
    /// Keeps the last segment's graph after the schedule ends.
    HoldLast,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub duration: f64,
    pub graph: WeightedDigraph,
}

/// Piecewise-constant graph schedule `σ(t)`; right-continuous at switches.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GraphSignal {
    segments: Vec<Segment>,
    mode: SignalMode,
    a_star: f64,
    /// `starts[k]` is the start of segment k within one pass of the schedule.
    #[serde(skip_serializing)]
    starts: Vec<f64>,
}

impl GraphSignal {
    /// `a_star` defaults to the largest weight in the schedule.
    pub fn new(segments: Vec<Segment>, mode: SignalMode, a_star: Option<f64>) -> Result<Self> {
        let first = segments
            .first()
            .ok_or_else(|| Error::InvalidSignal("graph signal needs at least one segment".into()))?;
        let n = first.graph.node_count();
        let mut max_w: f64 = 0.0;
        for (k, seg) in segments.iter().enumerate() {
            if !(seg.duration.is_finite() && seg.duration > 0.0) {
                return Err(Error::InvalidSignal(format!(
                    "segment {k} has non-positive duration {}",
                    seg.duration
                )));
            }
            if seg.graph.node_count() != n {
                return Err(Error::InvalidSignal(format!(
                    "segment {k} has {} nodes, expected {n}",
                    seg.graph.node_count()
                )));
            }
            max_w = max_w.max(seg.graph.max_weight());
        }
        let a_star = a_star.unwrap_or(if max_w > 0.0 { max_w } else { 1.0 });
        if !(a_star > 0.0) || max_w > a_star {
            return Err(Error::InvalidSignal(format!(
                "weight bound a* = {a_star} violated by weight {max_w}"
            )));
        }
        let mut sig = Self {
            segments,
            mode,
            a_star,
            starts: Vec::new(),
        };
        sig.rebuild_starts();
        Ok(sig)
    }

    pub fn fixed(graph: WeightedDigraph) -> Self {
        Self::new(
            vec![Segment {
                duration: 1.0,
                graph,
            }],
            SignalMode::HoldLast,
            None,
        )
        .expect("a single graph is a valid signal")
    }

    fn rebuild_starts(&mut self) {
        let mut acc = 0.0;
        self.starts = self
            .segments
            .iter()
            .map(|s| {
                let start = acc;
                acc += s.duration;
                start
            })
            .collect();
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn mode(&self) -> SignalMode {
        self.mode
    }

    pub fn a_star(&self) -> f64 {
        self.a_star
    }

    pub fn node_count(&self) -> usize {
        self.segments[0].graph.node_count()
    }

    /// Length of one pass through the schedule.
    pub fn period(&self) -> f64 {
        self.segments.iter().map(|s| s.duration).sum()
    }

    /// True when the graph never changes.
    pub fn is_fixed(&self) -> bool {
        self.segments.windows(2).all(|w| w[0].graph == w[1].graph)
    }

    /// Index of the segment active at `t` (right-continuous).
    fn segment_index(&self, t: f64) -> usize {
        let period = self.period();
        let local = match self.mode {
            SignalMode::Periodic => t.rem_euclid(period),
            SignalMode::HoldLast => {
                if t >= period {
                    return self.segments.len() - 1;
                }
                t
            }
        };
        match self.starts.partition_point(|&s| s <= local) {
            0 => 0,
            k => k - 1,
        }
    }

    pub fn graph_at(&self, t: f64) -> &WeightedDigraph {
        &self.segments[self.segment_index(t.max(0.0))].graph
    }

    /// The first switch instant strictly after `t`, if any.
    pub fn next_switch_after(&self, t: f64) -> Option<f64> {
        if self.segments.len() == 1 {
            return None;
        }
        let period = self.period();
        match self.mode {
            SignalMode::HoldLast => {
                self.starts.iter().skip(1).copied().find(|&b| b > t)
            }
            SignalMode::Periodic => {
                let cycle = (t / period).floor();
                let base = cycle * period;
                self.starts
                    .iter()
                    .skip(1)
                    .map(|s| base + s)
                    .chain(std::iter::once(base + period))
                    .find(|&b| b > t)
            }
        }
    }

    /// All switch instants in the open interval `(t0, t1)`.
    pub fn switches_between(&self, t0: f64, t1: f64) -> Vec<f64> {
        let mut out = Vec::new();
        let mut t = t0;
        while let Some(b) = self.next_switch_after(t) {
            if b >= t1 {
                break;
            }
            out.push(b);
            t = b;
        }
        out
    }

    /// `∫_0^t a_ij(s) ds` for `t ≥ 0`.
    fn cumulative_weight(&self, i: usize, j: usize, t: f64) -> f64 {
        let one_pass = |upto: f64| -> f64 {
            let mut acc = 0.0;
            for (seg, &start) in self.segments.iter().zip(&self.starts) {
                if start >= upto {
                    break;
                }
                let overlap = (start + seg.duration).min(upto) - start;
                acc += seg.graph.weight(i, j) * overlap;
            }
            acc
        };
        let period = self.period();
        match self.mode {
            SignalMode::Periodic => {
                let cycles = (t / period).floor();
                cycles * one_pass(period) + one_pass(t - cycles * period)
            }
            SignalMode::HoldLast => {
                if t <= period {
                    one_pass(t)
                } else {
                    let last = self.segments.last().expect("nonempty").graph.weight(i, j);
                    one_pass(period) + last * (t - period)
                }
            }
        }
    }

    pub fn delta_arc_integral(&self, i: usize, j: usize, t1: f64, t2: f64) -> f64 {
        self.cumulative_weight(i, j, t2) - self.cumulative_weight(i, j, t1)
    }

    /// Digraph of the δ-arcs over `[t1, t2)`.
    pub fn delta_arc_graph(&self, delta: f64, t1: f64, t2: f64) -> WeightedDigraph {
        let n = self.node_count();
        let mut g = WeightedDigraph::empty(n);
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    let integral = self.delta_arc_integral(i, j, t1, t2);
                    if integral >= delta {
                        g.weights[i * n + j] = integral;
                    }
                }
            }
        }
        g
    }

    pub fn is_balanced(&self) -> bool {
        self.segments.iter().all(|s| check_balanced(&s.graph))
    }

    /// Segment boundaries `t` with `0 ≤ t < horizon` (including 0).
    fn boundaries_until(&self, horizon: f64) -> Vec<f64> {
        let mut out = vec![0.0];
        out.extend(self.switches_between(0.0, horizon));
        out
    }
}

pub fn graph_at(signal: &GraphSignal, t: f64) -> &WeightedDigraph {
    signal.graph_at(t)
}

pub fn delta_arc_integral(signal: &GraphSignal, i: usize, j: usize, t1: f64, t2: f64) -> f64 {
    signal.delta_arc_integral(i, j, t1, t2)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowDetail {
    pub start: f64,
    pub strongly_connected: bool,
    pub delta_arcs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConnectivityReport {
    pub delta: f64,
    pub window: f64,
    pub horizon: f64,
    /// Every window `[s, s+T)` has strongly connected δ-arcs.
    pub ujsc: bool,
    /// Bidirectional at all times and every tail `[s, ∞)` has connected δ-arcs.
    pub bijc: bool,
    pub balanced: bool,
    pub windows: Vec<WindowDetail>,
}

/// Checks δ-uniform joint strong connectivity over window starts in `[0, horizon)`.
///
/// The δ-arc integrals are piecewise linear in the window start `s`, with
/// breakpoints where `s` or `s + T` meets a switch, so checking those
/// breakpoints is exhaustive. Periodic signals only need one period of starts.
pub fn check_ujsc(signal: &GraphSignal, window: f64, delta: f64, horizon: f64) -> Result<ConnectivityReport> {
    if !(window > 0.0 && delta > 0.0 && horizon > 0.0) {
        return Err(Error::PreconditionViolated(format!(
            "window ({window}), delta ({delta}) and horizon ({horizon}) must be positive"
        )));
    }
    let limit = match signal.mode() {
        SignalMode::Periodic => signal.period(),
        SignalMode::HoldLast => horizon,
    };
    let mut starts: Vec<f64> = Vec::new();
    for b in signal.boundaries_until(limit + window) {
        if b < limit {
            starts.push(b);
        }
        if b - window >= 0.0 && b - window < limit {
            starts.push(b - window);
        }
    }
    starts.sort_by(f64::total_cmp);
    starts.dedup_by(|a, b| (*a - *b).abs() <= 1e-12);

    let windows: Vec<WindowDetail> = starts
        .iter()
        .map(|&s| {
            let g = signal.delta_arc_graph(delta, s, s + window);
            let delta_arcs = g.weights.iter().filter(|w| **w > 0.0).count();
            WindowDetail {
                start: s,
                strongly_connected: g.is_strongly_connected(),
                delta_arcs,
            }
        })
        .collect();
    let ujsc = windows.iter().all(|w| w.strongly_connected);
    Ok(ConnectivityReport {
        delta,
        window,
        horizon,
        ujsc,
        bijc: check_bijc(signal),
        balanced: signal.is_balanced(),
        windows,
    })
}

/// δ-bidirectional infinite joint connectivity.
///
/// For piecewise-constant schedules every arc that is active on a set of
/// infinite length has an infinite integral, so the δ-arcs of each tail are
/// exactly the arcs that recur forever: the union over one period (Periodic)
/// or the final segment (HoldLast). This makes the check exact for any δ.
pub fn check_bijc(signal: &GraphSignal) -> bool {
    if !signal.segments().iter().all(|s| s.graph.is_bidirectional()) {
        return false;
    }
    let n = signal.node_count();
    let mut tail = WeightedDigraph::empty(n);
    let recurring: Vec<&Segment> = match signal.mode() {
        SignalMode::Periodic => signal.segments().iter().collect(),
        SignalMode::HoldLast => vec![signal.segments().last().expect("nonempty")],
    };
    for seg in recurring {
        for i in 0..n {
            for j in 0..n {
                tail.weights[i * n + j] += seg.graph.weight(i, j);
            }
        }
    }
    tail.is_weakly_connected()
}
