//! Monte-Carlo time-tag generator for a pulsed pair source.
//!
//! The pump is split into early and late pulses by an unbalanced
//! interferometer, pairs are drawn per pulse from a Poisson distribution,
//! each photon passes an analysis interferometer with the same imbalance,
//! and detection adds loss, Gaussian jitter and dark counts.

mod config;
mod generator;
mod slots;

use std::fmt;

use serde::{Deserialize, Serialize};

pub use config::{ConfigError, ExperimentConfig};
pub use generator::{simulate, simulate_no_pump_interferometer, Block, BlockTags, SourceMode, Simulator, TagStream};
pub use slots::{joint_slot_distribution, JointSlotDistribution, CENTRAL_SLOT, N_SLOTS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
#[repr(u8)]
pub enum Channel {
    Trigger = 0,
    Signal = 1,
    Idler = 2,
}

impl Channel {
    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(Channel::Trigger),
            1 => Some(Channel::Signal),
            2 => Some(Channel::Idler),
            _ => None,
        }
    }
}

impl fmt::Display for Channel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Channel::Trigger => "trigger",
            Channel::Signal => "signal",
            Channel::Idler => "idler",
        };
        f.write_str(s)
    }
}

/// One detection event. Ordering is by timestamp, then channel, so a
/// trigger sorts ahead of a photon with the same timestamp.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TimeTag {
    pub timestamp_ps: u64,
    pub channel: Channel,
}

impl TimeTag {
    pub fn new(channel: Channel, timestamp_ps: u64) -> Self {
        Self {
            timestamp_ps,
            channel,
        }
    }
}
