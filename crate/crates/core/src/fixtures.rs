//! Data of the three reference experiments.
//!
//! Example 1's source lists its third normal under the name `h_1`; it is
//! `h_3 = (1/√2, 1/√2)`. Example 3's source names every offset after the
//! first `z_3`; the offsets are `(1/√2, 1/√2, −1/√2, −1/√2)` in node order,
//! which is the only assignment consistent with the stated least-squares
//! solution `(0, 0)`.

use crate::affine::{normalize_system, LinearSystem};
use crate::graphsig::WeightedDigraph;
use crate::numkit::Matrix;

const S: f64 = std::f64::consts::FRAC_1_SQRT_2;

/// Three unit rows in the plane meeting at `(0, 1)`.
pub fn example1_system() -> LinearSystem {
    let h = Matrix::from_rows(&[[-S, S], [0.0, 1.0], [S, S]]).expect("static data");
    normalize_system(&h, &[S, 1.0, S]).expect("static data")
}

pub fn example1_initial() -> Vec<Vec<f64>> {
    vec![vec![-2.0, -1.0], vec![5.0, 1.0], vec![4.0, -3.0]]
}

pub const EXAMPLE1_SOLUTION: [f64; 2] = [0.0, 1.0];

/// Example 1's rows lifted to R³; the solution set is the line `{(0, 1, t)}`.
pub fn example2_system() -> LinearSystem {
    let h = Matrix::from_rows(&[[-S, S, 0.0], [0.0, 1.0, 0.0], [S, S, 0.0]]).expect("static data");
    normalize_system(&h, &[S, 1.0, S]).expect("static data")
}

pub fn example2_initial() -> Vec<Vec<f64>> {
    vec![vec![1.0, 2.0, 3.0], vec![-1.0, 1.0, 2.0], vec![1.0, 0.0, 1.0]]
}

/// Average of the initial projections onto `{(0, 1, t)}`.
pub const EXAMPLE2_LIMIT: [f64; 3] = [0.0, 1.0, 2.0];

/// Four rows with no common solution; least-squares solution `(0, 0)`.
pub fn example3_system() -> LinearSystem {
    let h = Matrix::from_rows(&[[-S, S], [S, S], [-S, S], [S, S]]).expect("static data");
    normalize_system(&h, &[S, S, -S, -S]).expect("static data")
}

pub fn example3_initial() -> Vec<Vec<f64>> {
    vec![vec![0.0, 1.0], vec![1.0, 0.0], vec![2.0, 1.0], vec![-1.0, 0.0]]
}

pub const EXAMPLE3_LS_SOLUTION: [f64; 2] = [0.0, 0.0];

pub const EXAMPLE3_GAINS: [f64; 3] = [1.0, 5.0, 100.0];

/// Unit-weight directed 3-cycle used by Examples 1 and 2.
pub fn three_cycle() -> WeightedDigraph {
    WeightedDigraph::directed_cycle(3, 1.0)
}

/// Unit-weight undirected 4-cycle used by Example 3.
pub fn four_cycle() -> WeightedDigraph {
    WeightedDigraph::undirected_cycle(4, 1.0)
}
