//! Right-hand sides of the distributed flows.

use serde::{Deserialize, Serialize};

use crate::affine::AffinePatch;
use crate::error::{Error, Result};
use crate::graphsig::WeightedDigraph;
use crate::numkit::{self, dot};

/// Which flow to integrate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FlowKind {
    /// `K Σ a_ij (x_j − x_i) + γ (P_i(x_i) − x_i)`.
    ///
    /// With `normalized = false` the projection term is replaced by the raw
    /// gradient `−Σ_k h_k (h_k^T x_i − z_k)` over the node's rows.
    ConsensusProjection {
        gain: f64,
        #[serde(default = "default_gamma")]
        gamma: f64,
        #[serde(default = "default_true")]
        normalized: bool,
    },
    /// `Σ a_ij (P_i(x_j) − P_i(x_i))`
    ProjectionConsensus,
    /// Projection consensus plus `P_i(x_i) − x_i`.
    ProjectionConsensusAugmented,
    /// `K Σ a_ij (x_j − x_i) + (1/t)(P_i(x_i) − x_i)`, singular at `t = 0`.
    ConsensusProjectionDecay { gain: f64 },
}

fn default_gamma() -> f64 {
    1.0
}

fn default_true() -> bool {
    true
}

impl FlowKind {
    pub fn consensus_projection(gain: f64) -> Self {
        FlowKind::ConsensusProjection {
            gain,
            gamma: 1.0,
            normalized: true,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            FlowKind::ConsensusProjection { .. } => "consensus_projection",
            FlowKind::ProjectionConsensus => "projection_consensus",
            FlowKind::ProjectionConsensusAugmented => "projection_consensus_augmented",
            FlowKind::ConsensusProjectionDecay { .. } => "consensus_projection_decay",
        }
    }

    fn validate(&self) -> Result<()> {
        let bad = |what: &str, v: f64| {
            Err(Error::PreconditionViolated(format!("{what} must be positive, got {v}")))
        };
        match *self {
            FlowKind::ConsensusProjection { gain, gamma, .. } => {
                if !(gain > 0.0 && gain.is_finite()) {
                    return bad("gain K", gain);
                }
                if !(gamma > 0.0 && gamma.is_finite()) {
                    return bad("gamma", gamma);
                }
            }
            FlowKind::ConsensusProjectionDecay { gain } => {
                if !(gain > 0.0 && gain.is_finite()) {
                    return bad("gain K", gain);
                }
            }
            FlowKind::ProjectionConsensus | FlowKind::ProjectionConsensusAugmented => {}
        }
        Ok(())
    }
}

/// A flow kind together with every node's constraint set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowSpec {
    kind: FlowKind,
    patches: Vec<AffinePatch>,
}

impl FlowSpec {
    pub fn new(kind: FlowKind, patches: Vec<AffinePatch>) -> Result<Self> {
        kind.validate()?;
        let m = patches
            .first()
            .ok_or_else(|| Error::PreconditionViolated("flow needs at least one node".into()))?
            .dim();
        if let Some((i, p)) = patches.iter().enumerate().find(|(_, p)| p.dim() != m) {
            return Err(Error::DimensionMismatch(format!(
                "node {i} constraints live in R^{}, expected R^{m}",
                p.dim()
            )));
        }
        Ok(Self { kind, patches })
    }

    pub fn kind(&self) -> FlowKind {
        self.kind
    }

    pub fn patches(&self) -> &[AffinePatch] {
        &self.patches
    }

    pub fn node_count(&self) -> usize {
        self.patches.len()
    }

    pub fn dim(&self) -> usize {
        self.patches[0].dim()
    }
}

/// Stacked node states `x = (x_1, …, x_N)` at time `t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkState {
    pub t: f64,
    nodes: usize,
    dim: usize,
    data: Vec<f64>,
}

impl NetworkState {
    pub fn new(t: f64, nodes: usize, dim: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != nodes * dim {
            return Err(Error::DimensionMismatch(format!(
                "{} state entries for {nodes} nodes in R^{dim}",
                data.len()
            )));
        }
        if !numkit::all_finite(&data) {
            return Err(Error::NonFinite("network state".into()));
        }
        Ok(Self { t, nodes, dim, data })
    }

    pub fn from_nodes<R: AsRef<[f64]>>(t: f64, nodes: &[R]) -> Result<Self> {
        let dim = nodes.first().map_or(0, |n| n.as_ref().len());
        let mut data = Vec::with_capacity(nodes.len() * dim);
        for (i, n) in nodes.iter().enumerate() {
            if n.as_ref().len() != dim {
                return Err(Error::DimensionMismatch(format!(
                    "node {i} state has dimension {}, expected {dim}",
                    n.as_ref().len()
                )));
            }
            data.extend_from_slice(n.as_ref());
        }
        Self::new(t, nodes.len(), dim, data)
    }

    /// Every node at the same point.
    pub fn consensus(t: f64, nodes: usize, point: &[f64]) -> Self {
        let data = point.iter().copied().cycle().take(nodes * point.len()).collect();
        Self {
            t,
            nodes,
            dim: point.len(),
            data,
        }
    }

    pub fn node_count(&self) -> usize {
        self.nodes
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn node(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn to_nodes(&self) -> Vec<Vec<f64>> {
        (0..self.nodes).map(|i| self.node(i).to_vec()).collect()
    }

    /// Each node projected onto its own constraint set.
    pub fn projected_onto(&self, patches: &[AffinePatch]) -> Self {
        let data = (0..self.nodes)
            .flat_map(|i| patches[i].project(self.node(i)))
            .collect();
        Self { data, ..self.clone() }
    }
}

fn check_dims(spec: &FlowSpec, graph: &WeightedDigraph, len: usize) -> Result<()> {
    let n = spec.node_count();
    if graph.node_count() != n {
        return Err(Error::DimensionMismatch(format!(
            "graph has {} nodes, flow has {n}",
            graph.node_count()
        )));
    }
    if len != n * spec.dim() {
        return Err(Error::DimensionMismatch(format!(
            "state has {len} entries, expected {n} x {}",
            spec.dim()
        )));
    }
    Ok(())
}

/// `Σ_j a_ij (x_j − x_i)` for node `i` of the flat state `x`.
fn consensus_term(graph: &WeightedDigraph, x: &[f64], m: usize, i: usize, out: &mut [f64]) {
    out.iter_mut().for_each(|v| *v = 0.0);
    let xi = &x[i * m..(i + 1) * m];
    for (j, a) in graph.in_neighbors(i) {
        let xj = &x[j * m..(j + 1) * m];
        for k in 0..m {
            out[k] += a * (xj[k] - xi[k]);
        }
    }
}

/// Writes the stacked derivative of `x` (flat, node-major) into `out`.
pub fn rhs_into(spec: &FlowSpec, graph: &WeightedDigraph, t: f64, x: &[f64], out: &mut [f64]) -> Result<()> {
    check_dims(spec, graph, x.len())?;
    if out.len() != x.len() {
        return Err(Error::DimensionMismatch("output buffer length".into()));
    }
    let m = spec.dim();
    let mut cons = vec![0.0; m];
    for (i, patch) in spec.patches.iter().enumerate() {
        let xi = &x[i * m..(i + 1) * m];
        consensus_term(graph, x, m, i, &mut cons);
        let dxi = &mut out[i * m..(i + 1) * m];
        match spec.kind {
            FlowKind::ConsensusProjection {
                gain,
                gamma,
                normalized: true,
            } => {
                let p = patch.project(xi);
                for k in 0..m {
                    dxi[k] = gain * cons[k] + gamma * (p[k] - xi[k]);
                }
            }
            FlowKind::ConsensusProjection {
                gain,
                gamma,
                normalized: false,
            } => {
                for k in 0..m {
                    dxi[k] = gain * cons[k];
                }
                for (h, z) in patch.raw_rows() {
                    let r = dot(h, xi) - z;
                    numkit::axpy(-gamma * r, h, dxi);
                }
            }
            FlowKind::ProjectionConsensus => {
                // Σ a_ij (P(x_j) − P(x_i)) = (I − Q^T Q) Σ a_ij (x_j − x_i)
                dxi.copy_from_slice(&patch.project_direction(&cons));
            }
            FlowKind::ProjectionConsensusAugmented => {
                let d = patch.project_direction(&cons);
                let p = patch.project(xi);
                for k in 0..m {
                    dxi[k] = d[k] + p[k] - xi[k];
                }
            }
            FlowKind::ConsensusProjectionDecay { gain } => {
                if t <= 0.0 {
                    return Err(Error::TimeZeroDecay);
                }
                let p = patch.project(xi);
                for k in 0..m {
                    dxi[k] = gain * cons[k] + (p[k] - xi[k]) / t;
                }
            }
        }
    }
    Ok(())
}

/// Stacked derivative at `state`.
pub fn rhs(spec: &FlowSpec, graph: &WeightedDigraph, state: &NetworkState) -> Result<Vec<f64>> {
    let mut out = vec![0.0; state.as_slice().len()];
    rhs_into(spec, graph, state.t, state.as_slice(), &mut out)?;
    Ok(out)
}

/// Scalar consensus with an additive disturbance: `K Σ a_ij (q_j − q_i) + w_i`.
pub fn rhs_disturbed_consensus(gain: f64, graph: &WeightedDigraph, q: &[f64], w: &[f64]) -> Result<Vec<f64>> {
    let n = graph.node_count();
    if q.len() != n || w.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "graph has {n} nodes, q has {}, w has {}",
            q.len(),
            w.len()
        )));
    }
    Ok((0..n)
        .map(|i| {
            let cons: f64 = graph.in_neighbors(i).map(|(j, a)| a * (q[j] - q[i])).sum();
            gain * cons + w[i]
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::affine::{AffinePatch, Hyperplane};
    use crate::fixtures;
    use crate::numkit::{dist, norm};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn all_kinds() -> Vec<FlowKind> {
        vec![
            FlowKind::consensus_projection(1.0),
            FlowKind::ConsensusProjection {
                gain: 3.0,
                gamma: 0.4,
                normalized: true,
            },
            FlowKind::ConsensusProjection {
                gain: 2.0,
                gamma: 1.0,
                normalized: false,
            },
            FlowKind::ProjectionConsensus,
            FlowKind::ProjectionConsensusAugmented,
            FlowKind::ConsensusProjectionDecay { gain: 1.0 },
        ]
    }

    #[test]
    fn equilibrium_at_common_solution() {
        let sys = fixtures::example1_system();
        let graph = fixtures::three_cycle();
        let state = NetworkState::consensus(1.0, 3, &fixtures::EXAMPLE1_SOLUTION);
        for kind in all_kinds() {
            let spec = FlowSpec::new(kind, sys.row_patches()).unwrap();
            let d = rhs(&spec, &graph, &state).unwrap();
            assert!(norm(&d) < 1e-15, "{kind:?}: {d:?}");
        }
        // Example 2: any point of the solution line is an equilibrium.
        let sys = fixtures::example2_system();
        let state = NetworkState::consensus(2.0, 3, &[0.0, 1.0, -7.5]);
        for kind in all_kinds() {
            let spec = FlowSpec::new(kind, sys.row_patches()).unwrap();
            assert!(norm(&rhs(&spec, &graph, &state).unwrap()) < 1e-14);
        }
    }

    #[test]
    fn isolated_node_only_projects() {
        let sys = fixtures::example1_system();
        let spec = FlowSpec::new(FlowKind::consensus_projection(1.0), sys.row_patches()).unwrap();
        let graph = WeightedDigraph::from_arcs(3, &[(0, 1, 1.0)]).unwrap();
        let state = NetworkState::from_nodes(0.0, &fixtures::example1_initial()).unwrap();
        let d = rhs(&spec, &graph, &state).unwrap();
        let x0 = state.node(0);
        let want = numkit::sub(&sys.plane(0).project(x0), x0);
        assert!(dist(&d[0..2], &want) < 1e-15);
    }

    #[test]
    fn example1_first_node_derivative() {
        let sys = fixtures::example1_system();
        let state = NetworkState::from_nodes(0.0, &fixtures::example1_initial()).unwrap();
        // Hand check: h_1^T x_1 = (2 − 1)/√2 = z_1, so x_1 already sits on its plane.
        let s = std::f64::consts::FRAC_1_SQRT_2;
        assert!((dot(&[-s, s], state.node(0)) - s).abs() < 1e-15);
        let spec = FlowSpec::new(FlowKind::consensus_projection(1.0), sys.row_patches()).unwrap();
        let d = rhs(&spec, &fixtures::three_cycle(), &state).unwrap();
        // Node 0's sole in-neighbor on the cycle 0→1→2→0 is node 2 = (4, −3).
        let want = [4.0 - (-2.0), -3.0 - (-1.0)];
        assert!(dist(&d[0..2], &want) < 1e-14);
    }

    #[test]
    fn decay_flow_rejects_time_zero() {
        let sys = fixtures::example1_system();
        let spec = FlowSpec::new(FlowKind::ConsensusProjectionDecay { gain: 1.0 }, sys.row_patches()).unwrap();
        let state = NetworkState::from_nodes(0.0, &fixtures::example1_initial()).unwrap();
        assert_eq!(rhs(&spec, &fixtures::three_cycle(), &state), Err(Error::TimeZeroDecay));
    }

    #[test]
    fn dimension_errors() {
        let sys = fixtures::example1_system();
        let spec = FlowSpec::new(FlowKind::ProjectionConsensus, sys.row_patches()).unwrap();
        let state = NetworkState::from_nodes(0.0, &[[0.0, 0.0], [1.0, 1.0]]).unwrap();
        assert!(matches!(
            rhs(&spec, &fixtures::three_cycle(), &state),
            Err(Error::DimensionMismatch(_))
        ));
        assert!(FlowSpec::new(FlowKind::consensus_projection(0.0), sys.row_patches()).is_err());
    }

    fn random_setup(rng: &mut ChaCha8Rng) -> (FlowSpec, WeightedDigraph, Vec<f64>) {
        let n = rng.gen_range(2..6);
        let m = rng.gen_range(2..5);
        let planes: Vec<AffinePatch> = (0..n)
            .map(|_| {
                let h: Vec<f64> = (0..m).map(|_| rng.gen_range(-1.0..1.0)).collect();
                let plane = Hyperplane::from_raw(&h, rng.gen_range(-2.0..2.0)).unwrap();
                AffinePatch::from_hyperplane(&plane)
            })
            .collect();
        let mut g = WeightedDigraph::empty(n);
        let mut arcs = Vec::new();
        for i in 0..n {
            for j in 0..n {
                if i != j && rng.gen_bool(0.6) {
                    arcs.push((j, i, rng.gen_range(0.1..2.0)));
                }
            }
        }
        if !arcs.is_empty() {
            g = WeightedDigraph::from_arcs(n, &arcs).unwrap();
        }
        let x: Vec<f64> = (0..n * m).map(|_| rng.gen_range(-3.0..3.0)).collect();
        (FlowSpec::new(FlowKind::ProjectionConsensus, planes).unwrap(), g, x)
    }

    #[test]
    fn projection_consensus_matches_literal_and_affine_rewrite() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..100 {
            let (spec, g, x) = random_setup(&mut rng);
            let m = spec.dim();
            let mut d = vec![0.0; x.len()];
            rhs_into(&spec, &g, 0.0, &x, &mut d).unwrap();
            for (i, p) in spec.patches().iter().enumerate() {
                let xi = &x[i * m..(i + 1) * m];
                let mut literal = vec![0.0; m];
                let mut cons = vec![0.0; m];
                for (j, a) in g.in_neighbors(i) {
                    let xj = &x[j * m..(j + 1) * m];
                    numkit::axpy(a, &numkit::sub(&p.project(xj), &p.project(xi)), &mut literal);
                    numkit::axpy(a, &numkit::sub(xj, xi), &mut cons);
                }
                // P(y) − P(0) is the linear part of P.
                let mut rewrite = p.project(&cons);
                numkit::axpy(-1.0, &p.project(&vec![0.0; m]), &mut rewrite);
                let got = &d[i * m..(i + 1) * m];
                assert!(dist(got, &literal) < 1e-10);
                assert!(dist(got, &rewrite) < 1e-10);
            }
        }
    }

    #[test]
    fn projection_consensus_keeps_states_on_planes() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..100 {
            let (spec, g, x) = random_setup(&mut rng);
            let m = spec.dim();
            let on_planes: Vec<f64> = (0..spec.node_count())
                .flat_map(|i| spec.patches()[i].project(&x[i * m..(i + 1) * m]))
                .collect();
            let mut d = vec![0.0; x.len()];
            rhs_into(&spec, &g, 0.0, &on_planes, &mut d).unwrap();
            for (i, p) in spec.patches().iter().enumerate() {
                let h = &p.basis()[0];
                assert!(dot(h, &d[i * m..(i + 1) * m]).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn unnormalized_flow_equals_normalized_after_scaling() {
        // Row scaled by c: −h h^T x terms scale by c², so gamma = 1/c² matches.
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let c = 3.0;
        let raw = AffinePatch::new(vec![(vec![-s * c, s * c], s * c)]).unwrap();
        let unit = AffinePatch::new(vec![(vec![-s, s], s)]).unwrap();
        let g = WeightedDigraph::empty(1);
        let x = [0.7, -1.2];
        let a = FlowSpec::new(
            FlowKind::ConsensusProjection { gain: 1.0, gamma: 1.0 / (c * c), normalized: false },
            vec![raw],
        )
        .unwrap();
        let b = FlowSpec::new(FlowKind::consensus_projection(1.0), vec![unit]).unwrap();
        let mut da = [0.0; 2];
        let mut db = [0.0; 2];
        rhs_into(&a, &g, 0.0, &x, &mut da).unwrap();
        rhs_into(&b, &g, 0.0, &x, &mut db).unwrap();
        assert!(dist(&da, &db) < 1e-14);
    }

    #[test]
    fn disturbed_consensus_examples() {
        let g = WeightedDigraph::complete(3, 1.0);
        assert_eq!(rhs_disturbed_consensus(2.0, &g, &[1.0; 3], &[0.0; 3]).unwrap(), vec![0.0; 3]);
        let g2 = WeightedDigraph::complete(2, 1.0);
        assert_eq!(rhs_disturbed_consensus(1.0, &g2, &[0.0, 1.0], &[0.0, 0.0]).unwrap(), vec![1.0, -1.0]);
        assert!(rhs_disturbed_consensus(1.0, &g2, &[0.0], &[0.0, 0.0]).is_err());
    }
}
