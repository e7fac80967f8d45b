//! Detection-slot probabilities of one photon pair behind three unbalanced
//! interferometers.
//!
//! Each photon leaves its analysis interferometer through the monitored
//! port in one of three slots relative to the trigger: 0 (early pump, short
//! arm), 1 (early/long or late/short, indistinguishable) and 2 (late pump,
//! long arm). Only the joint central slot `(1, 1)` carries two-photon
//! interference.

use serde::{Deserialize, Serialize};

pub const N_SLOTS: usize = 3;
pub const CENTRAL_SLOT: usize = 1;

/// Unnormalized joint slot weights for the monitored ports.
///
/// The total joint mass is below one: the remainder corresponds to one or
/// both photons leaving through the unmonitored output ports.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JointSlotDistribution {
    /// `joint[signal_slot][idler_slot]`.
    pub joint: [[f64; N_SLOTS]; N_SLOTS],
    /// Per-photon slot probabilities at the monitored port.
    pub marginal: [f64; N_SLOTS],
}

/// Joint slot distribution for interferometer phases and mode-overlap
/// visibility `v0 ∈ [0, 1]`.
///
/// Satellite slots get 1/32 each, the central slot
/// `(1 − v0·cos(φs + φi − φp))/16`, and the non-overlapping slots `(0, 2)`
/// and `(2, 0)` are exactly zero.
pub fn joint_slot_distribution(phi_p: f64, phi_s: f64, phi_i: f64, v0: f64) -> JointSlotDistribution {
    assert!((0.0..=1.0).contains(&v0), "visibility {v0} outside [0, 1]");
    let sat = 1.0 / 32.0;
    let central = (1.0 - v0 * (phi_s + phi_i - phi_p).cos()) / 16.0;
    JointSlotDistribution {
        joint: [[sat, sat, 0.0], [sat, central, sat], [0.0, sat, sat]],
        marginal: [1.0 / 8.0, 1.0 / 4.0, 1.0 / 8.0],
    }
}

impl JointSlotDistribution {
    pub fn joint_mass(&self) -> f64 {
        self.joint.iter().flatten().sum()
    }

    /// Full outcome table including the unmonitored port as index
    /// `N_SLOTS`; sums to one.
    pub(crate) fn outcome_table(&self) -> [[f64; N_SLOTS + 1]; N_SLOTS + 1] {
        let lost = N_SLOTS;
        let mut t = [[0.0; N_SLOTS + 1]; N_SLOTS + 1];
        for a in 0..N_SLOTS {
            for b in 0..N_SLOTS {
                t[a][b] = self.joint[a][b];
            }
        }
        for k in 0..N_SLOTS {
            let row: f64 = self.joint[k].iter().sum();
            let col: f64 = (0..N_SLOTS).map(|a| self.joint[a][k]).sum();
            t[k][lost] = (self.marginal[k] - row).max(0.0);
            t[lost][k] = (self.marginal[k] - col).max(0.0);
        }
        let used: f64 = t.iter().flatten().sum();
        t[lost][lost] = (1.0 - used).max(0.0);
        t
    }
}
