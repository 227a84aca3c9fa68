//! Consensus-based federated learning in a discretized function space.
//!
//! Devices connected by a multi-hop graph minimize a shared convex loss
//! functional by alternating local subgradient steps with neighbor
//! consensus. This crate holds the algorithmic core:
//!
//! - [`graph`]: ring-lattice and scale-free topologies plus the Laplacian
//!   spectral quantities (`λ₂`, `Δ`, `κ₂`) every convergence bound uses.
//! - [`funcspace`]: the weighted-grid `L²(μ)` space, federated functions,
//!   and matrix-on-function algebra.
//! - [`meta`]: the function-space consensus subgradient algorithm together
//!   with executable forms of its disagreement and optimality bounds.
//! - [`nn`]: small from-scratch MLPs with exact backpropagation.
//! - [`cmfd`]: distillation-based aggregation (no parameter exchange) and
//!   the parameter-averaging baseline, plus a two-parameter toy model.
//! - [`data`]: dataset synthesis, IDX codec, non-IID partitioning, and
//!   measure construction.
//! - [`experiment`]: the synchronous round runner and metric accounting.
//!
//! The crate is `no_std`-compatible (`alloc` required): disable the `std`
//! feature and enable `libm`. Everything is deterministic given seeds;
//! results are independent of worker-thread count by construction (see
//! [`exec::ParallelFor`]).

#![cfg_attr(not(feature = "std"), no_std)]
// Indexed loops mirror the matrix algebra they implement.
#![allow(clippy::needless_range_loop)]

#[cfg(all(not(feature = "std"), not(feature = "libm")))]
compile_error!("fedspace-core requires either the `std` or the `libm` feature");

extern crate alloc;

pub mod cmfd;
pub mod data;
pub mod exec;
pub mod experiment;
mod float;
pub mod funcspace;
pub mod graph;
pub mod linalg;
pub mod meta;
pub mod nn;
pub mod rng;
pub mod sum;
