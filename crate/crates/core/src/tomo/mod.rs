//! Two-qubit state tomography from 16 coincidence counts.
//!
//! [`counts_from_phase_settings`] turns the slot tables of four
//! interferometer settings into a [`MeasurementRecord`];
//! [`mle_reconstruct`] finds the maximum-likelihood state and
//! [`bootstrap_errors`] attaches Monte-Carlo error bars.

mod bootstrap;
mod linear;
mod mle;
mod record;

use thiserror::Error;

use crate::quantum::StateError;

pub use bootstrap::{
    bootstrap_errors, reconstruct_with_errors, BootstrapOptions, BootstrapSummary, MeanStd,
    LOW_PRECISION_REPLICAS, MAX_DROPPED_FRACTION,
};
pub use linear::{linear_inversion, linear_inversion_from_values, project_to_physical};
pub use mle::{mle_reconstruct, Metric, MleOptions, OptimizerDiagnostics, TomographyResult};
pub use record::{
    counts_from_phase_settings, interferometer_phases, label_phases, MeasurementRecord,
    Normalization, PhaseSettingCounts, RecordEntry, SettingNormalization,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TomoError {
    #[error("invalid measurement record: {0}")]
    InvalidRecord(String),
    #[error("phase setting {0} is missing")]
    MissingSetting(String),
    #[error("all counts are zero")]
    AllZeroCounts,
    #[error("at least 2 bootstrap replicas are needed, got {0}")]
    TooFewReplicas(usize),
    #[error("{dropped} of {requested} bootstrap replicas failed")]
    BootstrapFailed { dropped: usize, requested: usize },
    #[error(transparent)]
    State(#[from] StateError),
}
