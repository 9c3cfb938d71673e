//! Diakoptic quantum computation simulator.
//!
//! Parts of a quantum mechanism are described on independent tensor factors and
//! glued back together by *Connections*: projectors that keep the joint state in
//! a constraint subspace while marginal schedules drive individual parts. The
//! crate provides
//!
//! * [`hilbert`]: dense states, operators, projectors and partial traces over
//!   labeled tensor-product bases,
//! * [`connection`]: the two-qubit NOT Connection, its closed-form evolution and
//!   propagator,
//! * [`evolver`]: the step-by-step constrained evolution engine,
//! * [`network`]: reversible Boolean networks, their satisfiability procedure and
//!   an exhaustive oracle,
//! * [`fock`]: the two-fermion, four-mode realization of a Connection.

pub mod connection;
pub mod error;
pub mod evolver;
pub mod fock;
pub mod hilbert;
pub mod network;

pub use error::{Error, Result};

/// Complex scalar used throughout.
pub type C64 = num_complex::Complex64;
