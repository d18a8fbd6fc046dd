//! Closed-form predictions: consensus limits, the linear time-invariant
//! equilibrium on fixed undirected graphs, potentials and coherence.

use serde::{Deserialize, Serialize};

use crate::affine::{AffinePatch, LinearSystem};
use crate::error::{Error, Result};
use crate::flows::NetworkState;
use crate::graphsig::{self, WeightedDigraph};
use crate::numkit::{self, dist, dot, norm, Matrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LimitMethod {
    BalancedAverage,
    LeftEigenvector,
}

/// Predicted common limit of all node states.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LimitPrediction {
    pub limit: Vec<f64>,
    pub method: LimitMethod,
    pub weights: Vec<f64>,
    pub initial: Vec<Vec<f64>>,
}

fn weighted_projection_limit(
    sys: &LinearSystem,
    x0: &NetworkState,
    weights: Vec<f64>,
    method: LimitMethod,
) -> Result<LimitPrediction> {
    let set = sys.intersection_patch().ok_or(Error::EmptyIntersection)?;
    if x0.dim() != sys.dim() || weights.len() != x0.node_count() {
        return Err(Error::DimensionMismatch(format!(
            "{} initial states in R^{} for a system in R^{} with {} weights",
            x0.node_count(),
            x0.dim(),
            sys.dim(),
            weights.len()
        )));
    }
    let mut limit = vec![0.0; sys.dim()];
    for (i, w) in weights.iter().enumerate() {
        numkit::axpy(*w, &set.project(x0.node(i)), &mut limit);
    }
    Ok(LimitPrediction {
        limit,
        method,
        weights,
        initial: x0.to_nodes(),
    })
}

/// `Σ_i P_A(x_i(0)) / N`, the limit under balanced connective signals.
pub fn predict_limit_balanced(sys: &LinearSystem, x0: &NetworkState) -> Result<LimitPrediction> {
    let n = x0.node_count();
    weighted_projection_limit(sys, x0, vec![1.0 / n as f64; n], LimitMethod::BalancedAverage)
}

/// `Σ_i w_i P_A(x_i(0))` with `w^T L = 0`, the limit on a fixed strongly connected graph.
pub fn predict_limit_fixed(sys: &LinearSystem, x0: &NetworkState, graph: &WeightedDigraph) -> Result<LimitPrediction> {
    if sys.intersection_patch().is_none() {
        return Err(Error::EmptyIntersection);
    }
    let w = graphsig::left_eigenvector(graph)?;
    weighted_projection_limit(sys, x0, w, LimitMethod::LeftEigenvector)
}

/// Stacked system `ẋ = −M x + b` of the consensus + projection flow (unit
/// projection gain) on a fixed graph: `M = K (L ⊗ I) + diag(Q_i^T Q_i)`,
/// `b_i = Q_i^T d_i`.
pub fn lti_system(patches: &[AffinePatch], graph: &WeightedDigraph, gain: f64) -> Result<(Matrix, Vec<f64>)> {
    let n = graph.node_count();
    if patches.len() != n {
        return Err(Error::DimensionMismatch(format!("{} patches for {n} nodes", patches.len())));
    }
    let m = patches.first().map_or(0, AffinePatch::dim);
    let mut mat = graphsig::laplacian(graph).kron_identity(m).scaled(gain);
    let mut b = vec![0.0; n * m];
    for (i, p) in patches.iter().enumerate() {
        if p.dim() != m {
            return Err(Error::DimensionMismatch("patches live in different spaces".into()));
        }
        for (q, d) in p.basis().iter().zip(p.basis_offsets()) {
            for r in 0..m {
                for c in 0..m {
                    mat[(i * m + r, i * m + c)] += q[r] * q[c];
                }
                b[i * m + r] += d * q[r];
            }
        }
    }
    Ok((mat, b))
}

/// Exact solution `x(t) = v + e^{−M t}(x(0) − v)` of the fixed-graph system,
/// valid whenever `M` is nonsingular.
pub fn lti_closed_form(
    patches: &[AffinePatch],
    graph: &WeightedDigraph,
    gain: f64,
    x0: &[f64],
    t: f64,
) -> Result<Vec<f64>> {
    let (mat, b) = lti_system(patches, graph, gain)?;
    let v = numkit::solve_linear(&mat, &b)?;
    let e = numkit::matrix_exponential_apply(&mat.scaled(-1.0), &numkit::sub(x0, &v), t)?;
    Ok(numkit::add(&v, &e))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LtiReport {
    pub gain: f64,
    pub matrix: Matrix,
    pub offset: Vec<f64>,
    /// Equilibrium `v_i(K)` per node.
    pub equilibrium: Vec<Vec<f64>>,
    pub v_ave: Vec<f64>,
    pub y_star: Vec<f64>,
    pub lambda_min: f64,
    /// Algebraic connectivity of the graph.
    pub lambda2: f64,
    /// `Σ_i ‖v_i − v_ave‖`
    pub spread: f64,
    /// `‖v_ave − y⋆‖`
    pub gap: f64,
}

/// Equilibrium analysis of the consensus + projection flow on a fixed graph
/// with symmetric weights.
pub fn lti_analysis(sys: &LinearSystem, graph: &WeightedDigraph, gain: f64) -> Result<LtiReport> {
    if !graph.has_symmetric_weights() {
        return Err(Error::PreconditionViolated(
            "equilibrium analysis needs a bidirectional graph with symmetric weights".into(),
        ));
    }
    if !(gain > 0.0 && gain.is_finite()) {
        return Err(Error::InvalidConfig(format!("gain must be positive, got {gain}")));
    }
    let n = graph.node_count();
    let m = sys.dim();
    let (matrix, offset) = lti_system(&sys.row_patches(), graph, gain)?;
    let lambda_min = numkit::symmetric_eigen(&matrix)?.values[0];
    if lambda_min <= 1e-12 {
        return Err(Error::NotPositiveDefinite { lambda_min });
    }
    let v = numkit::solve_linear(&matrix, &offset)?;
    let equilibrium: Vec<Vec<f64>> = v.chunks(m).map(<[f64]>::to_vec).collect();
    let mut v_ave = vec![0.0; m];
    for vi in &equilibrium {
        numkit::axpy(1.0 / n as f64, vi, &mut v_ave);
    }
    let spread = equilibrium.iter().map(|vi| dist(vi, &v_ave)).sum();
    let y_star = sys.least_squares_solution()?;
    let gap = dist(&v_ave, &y_star);
    let lap = numkit::symmetric_eigen(&graphsig::laplacian(graph))?;
    let lambda2 = lap.values.get(1).copied().unwrap_or(0.0);
    Ok(LtiReport {
        gain,
        matrix,
        offset,
        equilibrium,
        v_ave,
        y_star,
        lambda_min,
        lambda2,
        spread,
        gap,
    })
}

/// `D_K(x) = ½ Σ_i dist(x_i, A_i)² + (K/2) Σ_{i<j} a_ij ‖x_j − x_i‖²` on a flat state.
///
/// Its negative gradient is the consensus + projection right-hand side when
/// the weights are symmetric.
pub fn potential_value(patches: &[AffinePatch], graph: &WeightedDigraph, gain: f64, x: &[f64]) -> f64 {
    let n = graph.node_count();
    let m = x.len() / n.max(1);
    let node = |i: usize| &x[i * m..(i + 1) * m];
    let mut own = 0.0;
    for (i, p) in patches.iter().enumerate() {
        own += p.distance(node(i)).powi(2);
    }
    let mut pair = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            let a = graph.weight(i, j);
            if a > 0.0 {
                pair += a * dist(node(i), node(j)).powi(2);
            }
        }
    }
    0.5 * own + 0.5 * gain * pair
}

pub fn potential_dk(sys: &LinearSystem, graph: &WeightedDigraph, gain: f64, state: &NetworkState) -> Result<f64> {
    if !graph.has_symmetric_weights() {
        return Err(Error::PreconditionViolated("the potential needs symmetric weights".into()));
    }
    if state.node_count() != graph.node_count() || state.dim() != sys.dim() || sys.rows() != graph.node_count() {
        return Err(Error::DimensionMismatch("state, graph and system sizes differ".into()));
    }
    Ok(potential_value(&sys.row_patches(), graph, gain, state.as_slice()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Coherence {
    pub value: f64,
    /// Set when two rows share a normal line, in which case `value` is 1.
    pub repeated_normals: bool,
}

/// Largest squared cosine between pairs of row normals.
pub fn chi_star(sys: &LinearSystem) -> Coherence {
    let h = sys.h();
    let mut value: f64 = 0.0;
    let mut repeated = false;
    for i in 0..h.rows() {
        for j in (i + 1)..h.rows() {
            let (a, b) = (h.row(i), h.row(j));
            let c2 = dot(a, b).powi(2) / (dot(a, a) * dot(b, b));
            if c2 >= 1.0 - 1e-12 {
                repeated = true;
            } else {
                value = value.max(c2);
            }
        }
    }
    if repeated {
        value = 1.0;
    }
    Coherence {
        value,
        repeated_normals: repeated,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LsObjective {
    /// `‖z − H y‖²`
    pub value: f64,
    /// `Σ_i dist(y, A_i)²`
    pub plane_sum: f64,
    pub identity_holds: bool,
}

pub fn ls_objective(sys: &LinearSystem, y: &[f64]) -> LsObjective {
    let r = numkit::sub(sys.z(), &sys.h().matvec(y));
    let value = dot(&r, &r);
    let plane_sum: f64 = sys.planes().iter().map(|p| p.distance(y).powi(2)).sum();
    LsObjective {
        value,
        plane_sum,
        identity_holds: (value - plane_sum).abs() <= 1e-10 * value.max(1.0),
    }
}

/// Reports across several gains, in the order given.
pub fn gain_sweep(sys: &LinearSystem, graph: &WeightedDigraph, gains: &[f64]) -> Result<Vec<LtiReport>> {
    gains.iter().map(|&k| lti_analysis(sys, graph, k)).collect()
}

/// Norm of the largest node deviation from the mean, for scalar consensus runs.
pub fn scalar_spread(q: &[f64]) -> f64 {
    let hi = q.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lo = q.iter().copied().fold(f64::INFINITY, f64::min);
    hi - lo
}

/// Steady-state disagreement `max_ij |q_i − q_j|` of `q̇ = −K L q + w` on a
/// fixed connected undirected graph: `q = L⁺ (w − mean(w)) / K` up to a
/// common drift.
pub fn disturbed_steady_spread(graph: &WeightedDigraph, gain: f64, w: &[f64]) -> Result<f64> {
    let n = graph.node_count();
    let mean = w.iter().sum::<f64>() / n as f64;
    let centered: Vec<f64> = w.iter().map(|v| v - mean).collect();
    // Pin the drift by replacing the last equation with Σ q = 0.
    let mut a = graphsig::laplacian(graph).scaled(gain);
    let mut rhs = centered;
    for j in 0..n {
        a[(n - 1, j)] = 1.0;
    }
    rhs[n - 1] = 0.0;
    let q = numkit::solve_linear(&a, &rhs)?;
    Ok(scalar_spread(&q))
}

pub fn max_norm(vs: &[Vec<f64>]) -> f64 {
    vs.iter().map(|v| norm(v)).fold(0.0, f64::max)
}
