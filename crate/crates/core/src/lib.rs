// SPDX-License-Identifier: Apache-2.0

//! Two-party secure inference for layered CNN classifiers.
//!
//! A model owner and a data owner jointly evaluate a computation graph over
//! additive secret shares in `Z_{2^k}`. Neither side sees the other's
//! secret: the model owner never learns the input or the logits, and the
//! data owner only ever holds a weight-free copy of the graph.
//!
//! Module map:
//!
//! * [`ring`]: fixed-point encoding and exact ring arithmetic
//! * [`graph`]: graph manifest, weight stripping, plaintext evaluators
//! * [`sharing`]: secret sharing, correlated randomness, additively
//!   homomorphic encryption
//! * [`protocols`]: online two-party protocols and full-graph evaluation
//! * [`net`]: framed wire protocol, handshake, sessions and statistics
//! * [`eval`]: AUROC, bootstrap intervals, two-sample K-S, Brier scores and
//!   equivalence reports

pub mod error;
pub mod eval;
pub mod graph;
pub mod net;
pub mod protocols;
pub mod ring;
pub mod sharing;

pub use error::{Error, Result};
