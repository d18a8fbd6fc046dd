//! Random instance generators shared by the integration tests.
#![allow(dead_code)]

use linflow::affine::{normalize_system, LinearSystem};
use linflow::graphsig::{GraphSignal, Segment, SignalMode, WeightedDigraph};
use linflow::numkit::{norm, Matrix};
use rand::seq::SliceRandom;
use rand::Rng;

pub fn random_vec<R: Rng>(rng: &mut R, m: usize, r: f64) -> Vec<f64> {
    (0..m).map(|_| rng.gen_range(-r..r)).collect()
}

/// A consistent system `z = H y♯` with `n` rows in `R^m`, rows normalized.
pub fn random_exact_system<R: Rng>(rng: &mut R, n: usize, m: usize) -> (LinearSystem, Vec<f64>) {
    let y = random_vec(rng, m, 2.0);
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|_| loop {
            let h = random_vec(rng, m, 1.0);
            if norm(&h) > 0.2 {
                break h;
            }
        })
        .collect();
    let z: Vec<f64> = rows.iter().map(|h| h.iter().zip(&y).map(|(a, b)| a * b).sum()).collect();
    let sys = normalize_system(&Matrix::from_rows(&rows).unwrap(), &z).unwrap();
    (sys, y)
}

/// Periodic signal whose segments split a random Hamiltonian cycle (plus
/// a few extra arcs); no single segment needs to be strongly connected.
pub fn random_cycle_signal<R: Rng>(rng: &mut R, n: usize) -> GraphSignal {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let pieces = rng.gen_range(1..=3usize).min(n);
    let mut arcs: Vec<Vec<(usize, usize, f64)>> = vec![Vec::new(); pieces];
    for k in 0..n {
        let from = order[k];
        let to = order[(k + 1) % n];
        arcs[k % pieces].push((from, to, rng.gen_range(0.5..1.5)));
    }
    for seg in arcs.iter_mut() {
        for from in 0..n {
            for to in 0..n {
                if from != to && rng.gen_bool(0.15) && !seg.iter().any(|a| a.0 == from && a.1 == to) {
                    seg.push((from, to, rng.gen_range(0.2..1.0)));
                }
            }
        }
    }
    let segments = arcs
        .into_iter()
        .map(|a| Segment {
            duration: rng.gen_range(0.2..1.0),
            graph: WeightedDigraph::from_arcs(n, &a).unwrap(),
        })
        .collect();
    GraphSignal::new(segments, SignalMode::Periodic, None).unwrap()
}
