//! Simulation of a finite-dimensional atom repeatedly interacting with a
//! sliced radiation field, with state collapse onto spectral projections
//! of the reduced state and Born-rule branch selection.
//!
//! The crate is organised bottom-up:
//!
//! * [`matcore`] dense complex matrices, validated newtypes and a clustered
//!   Hermitian eigendecomposition;
//! * [`kraus`] Kraus families extracted from an interaction unitary;
//! * [`evolve`] the pre-collapse quantum Markov chain and a dense
//!   tensor-network oracle on a truncated field chain;
//! * [`collapse`] actual events, Born sampling and stochastic trajectories;
//! * [`models`] measurement-type interactions, coupling regimes, the
//!   detector and thermal-environment scenarios;
//! * [`histories`] branch trees, history probabilities and their
//!   consistency.

pub mod collapse;
pub mod error;
pub mod evolve;
pub mod histories;
pub mod kraus;
pub mod matcore;
pub mod models;

pub use error::{EthError, Result};
