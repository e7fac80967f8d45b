use serde::{Deserialize, Serialize};

use super::AnalysisError;
use crate::sim::{ExperimentConfig, SourceMode};

/// Detection gates relative to the trigger, one per expected photon slot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GateConfig {
    pub gate_width_s: f64,
    /// Slot centres for the signal channel, in seconds after the trigger.
    pub signal_offsets_s: Vec<f64>,
    pub idler_offsets_s: Vec<f64>,
}

impl GateConfig {
    pub fn new(
        gate_width_s: f64,
        signal_offsets_s: Vec<f64>,
        idler_offsets_s: Vec<f64>,
    ) -> Result<Self, AnalysisError> {
        let g = Self {
            gate_width_s,
            signal_offsets_s,
            idler_offsets_s,
        };
        g.validate()?;
        Ok(g)
    }

    /// Gates centred on the slots the simulator places photons in.
    pub fn for_experiment(config: &ExperimentConfig, mode: SourceMode) -> Self {
        let offsets: Vec<f64> = (0..mode.n_slots())
            .map(|k| config.detector_latency_s + k as f64 * config.bin_delay_s)
            .collect();
        Self {
            gate_width_s: config.gate_width_s,
            signal_offsets_s: offsets.clone(),
            idler_offsets_s: offsets,
        }
    }

    pub fn n_slots(&self) -> usize {
        self.signal_offsets_s.len()
    }

    /// Fraction of a pulse period covered by one channel's gates.
    pub fn duty_cycle(&self, period_s: f64) -> f64 {
        self.n_slots() as f64 * self.gate_width_s / period_s
    }

    pub fn validate(&self) -> Result<(), AnalysisError> {
        let bad = |msg: String| Err(AnalysisError::Gates(msg));
        if !(self.gate_width_s.is_finite() && self.gate_width_s > 0.0) {
            return bad(format!("gate width must be positive, got {}", self.gate_width_s));
        }
        if self.signal_offsets_s.is_empty() {
            return bad("at least one gate per channel is required".into());
        }
        if self.signal_offsets_s.len() != self.idler_offsets_s.len() {
            return bad("signal and idler need the same number of gates".into());
        }
        for (name, offsets) in [("signal", &self.signal_offsets_s), ("idler", &self.idler_offsets_s)] {
            if offsets.iter().any(|o| !o.is_finite() || *o < self.gate_width_s / 2.0) {
                return bad(format!("{name} gate offsets must be finite and start after the trigger"));
            }
            if offsets.windows(2).any(|w| w[1] - w[0] <= self.gate_width_s) {
                return bad(format!("{name} gates overlap or are out of order"));
            }
        }
        Ok(())
    }

    /// `[lo, hi]` windows in picoseconds for one channel.
    pub(crate) fn windows_ps(&self, signal: bool) -> Vec<(u64, u64)> {
        let offsets = if signal {
            &self.signal_offsets_s
        } else {
            &self.idler_offsets_s
        };
        let half = self.gate_width_s / 2.0;
        offsets
            .iter()
            .map(|o| {
                let lo = ((o - half) * 1e12).round().max(0.0) as u64;
                let hi = ((o + half) * 1e12).round() as u64;
                (lo, hi)
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn experiment_gates_follow_slots() {
        let cfg = ExperimentConfig::default();
        let g = GateConfig::for_experiment(&cfg, SourceMode::TimeBin);
        assert_eq!(g.n_slots(), 3);
        g.validate().unwrap();
        let w = g.windows_ps(true);
        assert_eq!(w[0], (750, 1250));
        assert_eq!(w[2], (6750, 7250));
        let single = GateConfig::for_experiment(&cfg, SourceMode::SingleBin);
        assert_eq!(single.n_slots(), 1);
    }

    #[test]
    fn overlapping_gates_rejected() {
        assert!(GateConfig::new(1e-9, vec![2e-9, 2.5e-9], vec![2e-9, 4e-9]).is_err());
        assert!(GateConfig::new(1e-9, vec![2e-9], vec![2e-9, 4e-9]).is_err());
        assert!(GateConfig::new(0.0, vec![2e-9], vec![2e-9]).is_err());
        assert!(GateConfig::new(0.5e-9, vec![2e-9, 5e-9], vec![2e-9, 5e-9]).is_ok());
    }
}
