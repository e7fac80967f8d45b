use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Invalid experiment configuration, naming the offending field.
#[derive(Debug, Clone, PartialEq, Error)]
#[error("invalid `{field}`: {reason}")]
pub struct ConfigError {
    pub field: &'static str,
    pub reason: String,
}

impl ConfigError {
    fn new(field: &'static str, reason: impl Into<String>) -> Self {
        Self {
            field,
            reason: reason.into(),
        }
    }
}

/// Source, interferometer, detector and noise parameters of one run.
///
/// Key names carry their units so a config file reads unambiguously.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub rep_rate_hz: f64,
    /// Delay between early and late time bins.
    pub bin_delay_s: f64,
    /// Fixed offset between a trigger and the earliest photon slot.
    #[serde(default = "default_latency")]
    pub detector_latency_s: f64,
    /// Mean number of pairs per pump pulse, summed over both time bins.
    pub mean_pairs_per_pulse: f64,
    #[serde(default)]
    pub pump_power_w: f64,
    pub eta_signal: f64,
    pub eta_idler: f64,
    #[serde(default)]
    pub dark_rate_signal_hz: f64,
    #[serde(default)]
    pub dark_rate_idler_hz: f64,
    #[serde(default)]
    pub phi_p_rad: f64,
    #[serde(default)]
    pub phi_s_rad: f64,
    #[serde(default)]
    pub phi_i_rad: f64,
    /// Two-photon interference contrast `V₀` set by mode overlap.
    #[serde(default = "one")]
    pub interference_visibility: f64,
    /// Standard deviation of the Gaussian detection jitter.
    #[serde(default = "default_jitter")]
    pub jitter_s: f64,
    /// Coincidence gate width the run is designed for.
    #[serde(default = "default_gate")]
    pub gate_width_s: f64,
    pub duration_s: f64,
    #[serde(default)]
    pub rng_seed: u64,
}

fn default_latency() -> f64 {
    1e-9
}

fn one() -> f64 {
    1.0
}

fn default_jitter() -> f64 {
    50e-12
}

fn default_gate() -> f64 {
    0.5e-9
}

impl Default for ExperimentConfig {
    /// 76.2 MHz pump, 3 ns bin separation, efficiencies and dark rates of a
    /// typical waveguide source with superconducting detectors.
    fn default() -> Self {
        Self {
            rep_rate_hz: 76.2e6,
            bin_delay_s: 3e-9,
            detector_latency_s: default_latency(),
            mean_pairs_per_pulse: 3.8e-4,
            pump_power_w: 60e-6,
            eta_signal: 0.0412,
            eta_idler: 0.0377,
            dark_rate_signal_hz: 360.0,
            dark_rate_idler_hz: 390.0,
            phi_p_rad: 0.0,
            phi_s_rad: 0.0,
            phi_i_rad: 0.0,
            interference_visibility: 0.902,
            jitter_s: default_jitter(),
            gate_width_s: default_gate(),
            duration_s: 1.0,
            rng_seed: 0,
        }
    }
}

impl ExperimentConfig {
    pub fn period_s(&self) -> f64 {
        1.0 / self.rep_rate_hz
    }

    pub fn n_pulses(&self) -> u64 {
        (self.duration_s * self.rep_rate_hz).round() as u64
    }

    /// Sets the pump power and the pair number `μ = k·P` it produces.
    pub fn at_pump_power(mut self, power_w: f64, pairs_per_pulse_per_watt: f64) -> Self {
        self.pump_power_w = power_w;
        self.mean_pairs_per_pulse = pairs_per_pulse_per_watt * power_w;
        self
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let positive = [
            ("rep_rate_hz", self.rep_rate_hz),
            ("bin_delay_s", self.bin_delay_s),
            ("gate_width_s", self.gate_width_s),
        ];
        for (field, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(ConfigError::new(field, format!("must be positive, got {v}")));
            }
        }
        let non_negative = [
            ("detector_latency_s", self.detector_latency_s),
            ("mean_pairs_per_pulse", self.mean_pairs_per_pulse),
            ("pump_power_w", self.pump_power_w),
            ("dark_rate_signal_hz", self.dark_rate_signal_hz),
            ("dark_rate_idler_hz", self.dark_rate_idler_hz),
            ("jitter_s", self.jitter_s),
            ("duration_s", self.duration_s),
        ];
        for (field, v) in non_negative {
            if !(v.is_finite() && v >= 0.0) {
                return Err(ConfigError::new(
                    field,
                    format!("must be finite and non-negative, got {v}"),
                ));
            }
        }
        let unit = [
            ("eta_signal", self.eta_signal),
            ("eta_idler", self.eta_idler),
            ("interference_visibility", self.interference_visibility),
        ];
        for (field, v) in unit {
            if !(0.0..=1.0).contains(&v) {
                return Err(ConfigError::new(field, format!("must lie in [0, 1], got {v}")));
            }
        }
        for (field, v) in [
            ("phi_p_rad", self.phi_p_rad),
            ("phi_s_rad", self.phi_s_rad),
            ("phi_i_rad", self.phi_i_rad),
        ] {
            if !v.is_finite() {
                return Err(ConfigError::new(field, "must be finite"));
            }
        }
        if self.mean_pairs_per_pulse > 50.0 {
            return Err(ConfigError::new(
                "mean_pairs_per_pulse",
                format!("{} pairs per pulse is outside the simulated regime", self.mean_pairs_per_pulse),
            ));
        }
        let period = self.period_s();
        if 2.0 * self.bin_delay_s + self.gate_width_s >= period {
            return Err(ConfigError::new(
                "bin_delay_s",
                format!(
                    "2*bin_delay + gate width = {:e} s must be below the pulse period {:e} s",
                    2.0 * self.bin_delay_s + self.gate_width_s,
                    period
                ),
            ));
        }
        let last_slot = self.detector_latency_s + 2.0 * self.bin_delay_s + self.gate_width_s;
        if last_slot >= period {
            return Err(ConfigError::new(
                "detector_latency_s",
                format!("latest slot at {last_slot:e} s would spill into the next pulse period"),
            ));
        }
        if self.bin_delay_s <= self.gate_width_s {
            return Err(ConfigError::new(
                "gate_width_s",
                "gates for adjacent slots would overlap",
            ));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_is_valid() {
        ExperimentConfig::default().validate().unwrap();
    }

    #[test]
    fn overlapping_periods_rejected() {
        let cfg = ExperimentConfig {
            bin_delay_s: 6.5e-9,
            ..Default::default()
        };
        assert_eq!(cfg.validate().unwrap_err().field, "bin_delay_s");
    }

    #[test]
    fn field_names_in_errors() {
        let cfg = ExperimentConfig {
            eta_idler: 1.5,
            ..Default::default()
        };
        let err = cfg.validate().unwrap_err();
        assert_eq!(err.field, "eta_idler");
        assert!(err.to_string().contains("eta_idler"));

        let cfg = ExperimentConfig {
            dark_rate_signal_hz: -1.0,
            ..Default::default()
        };
        assert_eq!(cfg.validate().unwrap_err().field, "dark_rate_signal_hz");
    }

    #[test]
    fn pump_power_scaling() {
        let cfg = ExperimentConfig::default().at_pump_power(100e-6, 6.0);
        assert!((cfg.mean_pairs_per_pulse - 6e-4).abs() < 1e-15);
        assert_eq!(cfg.pump_power_w, 100e-6);
    }

    #[test]
    fn missing_field_named_by_serde() {
        let err = serde_json::from_str::<ExperimentConfig>(r#"{"rep_rate_hz": 1e6}"#).unwrap_err();
        assert!(err.to_string().contains("bin_delay_s"));
    }
}
