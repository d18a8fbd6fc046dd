//! Continuous-time distributed flows for the linear algebraic equation `z = H y`.
//!
//! Every network node holds one row (or a group of rows) of `(H, z)` together
//! with a state vector `x_i`. Two families of flows drive the node states
//! towards a common solution:
//!
//! - *consensus + projection*: `ẋ_i = K Σ a_ij (x_j − x_i) + P_i(x_i) − x_i`
//! - *projection consensus*: `ẋ_i = Σ a_ij (P_i(x_j) − P_i(x_i))`
//!
//! where `P_i` is the orthogonal projector onto node `i`'s affine constraint set.
//! The crate provides the projectors ([`affine`]), time-varying weighted
//! digraphs and their connectivity checks ([`graphsig`]), the flow right-hand
//! sides ([`flows`]), a switch-aligned RK4 simulator with Lyapunov monitors
//! ([`sim`]), closed-form limit and least-squares analyses ([`analysis`]) and a
//! JSON-driven command line front end ([`cli`]).

pub mod affine;
pub mod analysis;
pub mod cli;
pub mod error;
pub mod fixtures;
pub mod flows;
pub mod graphsig;
pub mod numkit;
pub mod sim;

pub use error::{Error, Result};
