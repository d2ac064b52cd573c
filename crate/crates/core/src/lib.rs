//! Winner-take-all spiking network of neurons with nonlinear dendrites,
//! trained by spike-timing driven rewiring of binary synapses.
//!
//! The crate covers stimulus generation ([`spike`]), the simulator
//! ([`dynamics`]), the learning rule ([`plasticity`]), parameter selection
//! ([`autotune`]), trial orchestration ([`harness`]) and fabrication
//! mismatch ([`mismatch`]).

// `!(x > 0.0)` is used on purpose throughout: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod autotune;
pub mod config;
pub mod dynamics;
pub mod error;
pub mod harness;
pub mod kernel;
pub mod mismatch;
pub mod plasticity;
pub mod rng;
pub mod spike;
pub mod wiring;

pub use autotune::TuneResult;
pub use config::{ExperimentConfig, SweepAxis, TrialConfig};
pub use dynamics::{simulate_pattern, EventLog, Network, NeuronConfig, SimOptions};
pub use error::{Error, Result};
pub use harness::{run_trial, run_trials, FailureMode, Model, Representation, TrialResult};
pub use kernel::{InhibitionParams, KernelParams};
pub use mismatch::{MismatchInstance, MismatchSpec, Nonideality};
pub use spike::{PatternTemplate, SpikeTrain};
pub use wiring::{Geometry, Wiring};
