//! Variational preparation of thermal states with adaptively grown ansätze.
//!
//! A visible register is purified by an equal-sized hidden register; the
//! reduced state of the visible qubits is trained against a Gibbs target
//! under one of three losses, and the ansatz is grown one Pauli rotation at
//! a time from an operator pool.

pub mod adapt;
pub mod ansatz;
pub mod error;
pub mod harness;
pub mod linalg;
pub mod losses;
pub mod model;
pub mod optim;
pub mod pauli;
pub mod states;

pub use adapt::{adapt_run, vqe_run, AdaptConfig, AdaptTermination, AdaptTrace};
pub use ansatz::Ansatz;
pub use error::{Error, Result};
pub use harness::{DecayFit, Experiment, ExperimentSpec};
pub use linalg::ComplexMatrix;
pub use losses::{LossContext, LossKind};
pub use model::{ProblemInstance, TwoLocalHamiltonian};
pub use optim::{minimize, OptimOptions, OptimResult};
pub use pauli::{Axis, OperatorPool, PauliString};
pub use states::{DensityOperator, Statevector};
