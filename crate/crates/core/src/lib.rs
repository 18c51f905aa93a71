//! Simulation and neural-network tomography of noisy discrete-time quantum walks.
//!
//! The crate covers the full pipeline: evolving the walker's density matrix
//! ([`walk`]), measuring it in the interferometric basis family
//! ([`measurement`]), reconstructing it with a neural density operator
//! ([`ndo`], [`training`]) or a maximum-likelihood baseline ([`maxlik`]), and
//! scoring the result ([`metrics`]).

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod linalg;
pub mod maxlik;
pub mod measurement;
pub mod metrics;
pub mod ndo;
pub mod scenario;
pub mod state;
pub mod training;
pub mod walk;

pub use error::{Error, Result};
pub use linalg::{CMatrix, C64};
pub use measurement::{generate_dataset, load_dataset, save_dataset, MeasurementDataset};
pub use ndo::NdoParams;
pub use state::DensityMatrix;
pub use training::{optimize, FitData, OptimizerKind, TrainConfig, TrainReport};
pub use walk::{evolve, NoiseModel, WalkConfig};
