//! Time-tag analysis: gating, coincidence counting and the derived
//! source figures of merit.
//!
//! [`Analyzer`] folds a time-ordered tag stream into additive [`Counts`].
//! Counts from independent chunks merge, so long runs are analysed block by
//! block in parallel with [`analyze_simulation`].

mod engine;
mod estimators;
pub mod fit;
mod gates;

use rayon::prelude::*;
use thiserror::Error;

pub use engine::{
    Analysis, Analyzer, AnalyzerSettings, CoincidenceHistogram, Counts, Diagnostics, PeriodJoint,
    SinglesHistograms,
};
pub use estimators::{car, klyshko, max_visibility_from_car, Estimate, RateReport};
pub use fit::{
    fit_fringe, linear_fit, power_series_fit, FringeFit, FringePoint, FringeScan, LinearFit,
    PowerPoint, PowerSeriesFit, PowerSeriesOptions, Weighting,
};
pub use gates::GateConfig;

use crate::sim::Simulator;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalysisError {
    #[error("tag {index} at {timestamp_ps} ps precedes the previous tag at {previous_ps} ps")]
    Unsorted {
        index: u64,
        previous_ps: u64,
        timestamp_ps: u64,
    },
    #[error("no trigger events in the stream")]
    NoTriggers,
    #[error("invalid gates: {0}")]
    Gates(String),
    #[error("{0} rate is zero")]
    UndefinedRate(&'static str),
    #[error("{0}")]
    InvalidInput(String),
    #[error("fit needs at least {needed} distinct points, got {got}")]
    InsufficientPoints { needed: usize, got: usize },
    #[error("fit abscissae are degenerate")]
    DegenerateAbscissae,
    #[error("phase scan leaves a gap of {max_gap_rad:.3} rad")]
    InsufficientPhaseCoverage { max_gap_rad: f64 },
}

/// Analyses every block of a simulation in parallel and merges the counts.
///
/// Neighbouring-period pairs straddling block boundaries are not counted,
/// which only affects the accidental diagnostics.
pub fn analyze_simulation(sim: &Simulator, settings: &AnalyzerSettings) -> Result<Analysis, AnalysisError> {
    let counts = analyze_counts(sim, settings)?;
    Analysis::from_counts(counts, settings)
}

pub fn analyze_counts(sim: &Simulator, settings: &AnalyzerSettings) -> Result<Counts, AnalysisError> {
    let empty = Analyzer::new(settings.clone())?.into_counts();
    (0..sim.n_blocks())
        .into_par_iter()
        .map(|b| {
            let block = sim.block(b);
            let mut a = Analyzer::new(settings.clone())?;
            a.extend(block.tags())?;
            Ok(a.into_counts())
        })
        .try_reduce(
            || empty.clone(),
            |mut x, y| {
                x.merge(&y)?;
                Ok(x)
            },
        )
}
