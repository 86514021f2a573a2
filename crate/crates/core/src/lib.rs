//! Sparse additive Gaussian-process emulation of perturbed-parameter ensembles.
//!
//! An emulator is a sum of zero-mean GP means over one, two or three
//! parameters, each with fixed hyperparameters and fitted to the residual of
//! the terms before it. [`selection::run_selection`] chooses the terms,
//! [`emulator::final_train`] refits them on all training rows and
//! [`diagnostics::explained_variability`] attributes the evaluation RMSE
//! decrease to each term.

pub mod artifact;
pub mod data;
pub mod diagnostics;
pub mod emulator;
pub mod error;
pub mod gp;
pub mod pipeline;
pub mod selection;

pub use error::{Result, SageError};
