//! Run files: one TOML document per run, every physical key named with its
//! unit.
//!
//! ```toml
//! mode = "time-bin"
//!
//! [experiment]
//! rep_rate_hz = 76.2e6
//! bin_delay_s = 3e-9
//! mean_pairs_per_pulse = 3.8e-4
//! eta_signal = 0.0412
//! eta_idler = 0.0377
//! duration_s = 1.0
//!
//! [analysis]
//! histogram_bin_s = 10e-12
//!
//! [tomography]
//! replicas = 200
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};
use timebin_core::coinc::AnalyzerSettings;
use timebin_core::sim::{ExperimentConfig, SourceMode};
use timebin_core::tomo::Normalization;

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunFile {
    /// Defaults to time-bin for `simulate`; `analyze` falls back to the tag
    /// file header.
    #[serde(default)]
    pub mode: Option<SourceMode>,
    pub experiment: ExperimentConfig,
    #[serde(default)]
    pub analysis: AnalysisSection,
    #[serde(default)]
    pub tomography: TomographySection,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisSection {
    pub histogram_bin_s: Option<f64>,
    pub accidental_periods: Option<usize>,
    /// Replaces the gate width taken from `experiment.gate_width_s`.
    pub gate_width_s: Option<f64>,
}

impl AnalysisSection {
    pub fn settings(&self, config: &ExperimentConfig, mode: SourceMode) -> AnalyzerSettings {
        let mut cfg = config.clone();
        if let Some(w) = self.gate_width_s {
            cfg.gate_width_s = w;
        }
        let mut s = AnalyzerSettings::for_experiment(&cfg, mode);
        if let Some(b) = self.histogram_bin_s {
            s.histogram_bin_s = b;
        }
        if let Some(k) = self.accidental_periods {
            s.accidental_periods = k;
        }
        s
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TomographySection {
    pub replicas: Option<usize>,
    pub max_iterations: Option<usize>,
    pub normalization: Option<Normalization>,
}

impl RunFile {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| CliError::Usage(format!("config {}: {e}", path.display())))
    }

    pub fn parse(text: &str) -> Result<Self, String> {
        let run: RunFile = toml::from_str(text).map_err(|e| e.message().to_string())?;
        run.experiment.validate().map_err(|e| e.to_string())?;
        Ok(run)
    }
}
