use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Geometric, Normal, Poisson};
use serde::{Deserialize, Serialize};

use super::slots::{joint_slot_distribution, N_SLOTS};
use super::{Channel, ConfigError, ExperimentConfig, TimeTag};

/// Whether the pump passes the time-bin interferometers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SourceMode {
    /// One pump pulse per period, no analysis interferometers: a single
    /// coincidence peak per pulse.
    SingleBin,
    /// Early/late pump pulses and analysis interferometers on both photons.
    TimeBin,
}

impl SourceMode {
    pub fn n_slots(self) -> usize {
        match self {
            SourceMode::SingleBin => 1,
            SourceMode::TimeBin => N_SLOTS,
        }
    }
}

/// Time-bin mode: pump interferometer, analysis interferometers on both
/// arms, losses and dark counts.
pub fn simulate(config: &ExperimentConfig) -> Result<Simulator, ConfigError> {
    Simulator::new(config.clone(), SourceMode::TimeBin)
}

/// Single-bin mode used for rate, Klyshko and CAR characterization.
pub fn simulate_no_pump_interferometer(config: &ExperimentConfig) -> Result<Simulator, ConfigError> {
    Simulator::new(config.clone(), SourceMode::SingleBin)
}

/// Outcome of one photon: a monitored slot or the unmonitored port.
type Outcome = Option<u8>;

/// Deterministic, block-partitioned time-tag source.
///
/// Pulses are grouped into fixed blocks of [`Simulator::BLOCK_PULSES`];
/// block `b` draws from a ChaCha stream `(seed, b)`, so any block can be
/// generated independently and the full stream does not depend on how the
/// blocks are scheduled.
#[derive(Debug, Clone)]
pub struct Simulator {
    config: ExperimentConfig,
    mode: SourceMode,
    period_ps: f64,
    n_pulses: u64,
    latency_ps: f64,
    bin_delay_ps: f64,
    jitter: Option<Normal<f64>>,
    /// Cumulative probabilities of the (signal, idler) outcome pairs.
    outcomes: Vec<(f64, Outcome, Outcome)>,
}

impl Simulator {
    pub const BLOCK_PULSES: u64 = 1 << 18;

    pub fn new(config: ExperimentConfig, mode: SourceMode) -> Result<Self, ConfigError> {
        config.validate()?;
        let outcomes = match mode {
            SourceMode::SingleBin => vec![(1.0, Some(0), Some(0))],
            SourceMode::TimeBin => {
                let dist = joint_slot_distribution(
                    config.phi_p_rad,
                    config.phi_s_rad,
                    config.phi_i_rad,
                    config.interference_visibility,
                );
                let table = dist.outcome_table();
                let slot = |k: usize| (k < N_SLOTS).then_some(k as u8);
                let mut acc = 0.0;
                let mut cdf = Vec::with_capacity(16);
                for (a, row) in table.iter().enumerate() {
                    for (b, &p) in row.iter().enumerate() {
                        if p > 0.0 {
                            acc += p;
                            cdf.push((acc, slot(a), slot(b)));
                        }
                    }
                }
                if let Some(last) = cdf.last_mut() {
                    last.0 = f64::INFINITY;
                }
                cdf
            }
        };
        let jitter_ps = config.jitter_s * 1e12;
        Ok(Self {
            period_ps: 1e12 / config.rep_rate_hz,
            n_pulses: config.n_pulses(),
            latency_ps: config.detector_latency_s * 1e12,
            bin_delay_ps: config.bin_delay_s * 1e12,
            jitter: (jitter_ps > 0.0).then(|| Normal::new(0.0, jitter_ps).expect("finite jitter")),
            outcomes,
            config,
            mode,
        })
    }

    pub fn config(&self) -> &ExperimentConfig {
        &self.config
    }

    pub fn mode(&self) -> SourceMode {
        self.mode
    }

    pub fn n_pulses(&self) -> u64 {
        self.n_pulses
    }

    pub fn n_blocks(&self) -> u64 {
        self.n_pulses.div_ceil(Self::BLOCK_PULSES)
    }

    pub fn pulse_time_ps(&self, pulse: u64) -> u64 {
        pulse_time(self.period_ps, pulse)
    }

    /// All tags of block `index`, photons and darks drawn from the block's
    /// own random stream.
    pub fn block(&self, index: u64) -> Block {
        let first = index * Self::BLOCK_PULSES;
        let end = (first + Self::BLOCK_PULSES).min(self.n_pulses);
        let mut rng = ChaCha8Rng::seed_from_u64(self.config.rng_seed);
        rng.set_stream(index);
        let mut events = Vec::new();
        if first < end {
            self.pairs(&mut rng, first, end, &mut events);
            self.darks(&mut rng, first, end, &mut events);
            events.sort_unstable();
        }
        Block {
            first_pulse: first,
            end_pulse: end.max(first),
            period_ps: self.period_ps,
            events,
        }
    }

    /// The full run as a time-ordered iterator.
    pub fn stream(&self) -> TagStream<'_> {
        TagStream {
            sim: self,
            next_block: 0,
            current: None,
        }
    }

    fn pairs(&self, rng: &mut ChaCha8Rng, first: u64, end: u64, out: &mut Vec<TimeTag>) {
        let mu = self.config.mean_pairs_per_pulse;
        if mu <= 0.0 {
            return;
        }
        let p_any = -(-mu).exp_m1();
        let skip = Geometric::new(p_any).expect("probability in (0, 1]");
        let mut pulse = first;
        loop {
            pulse = pulse.saturating_add(skip.sample(rng));
            if pulse >= end {
                break;
            }
            let n = zero_truncated_poisson(rng, mu);
            for _ in 0..n {
                let (s, i) = self.draw_outcome(rng);
                if let Some(slot) = s {
                    if rng.random::<f64>() < self.config.eta_signal {
                        out.push(self.photon(rng, Channel::Signal, pulse, slot));
                    }
                }
                if let Some(slot) = i {
                    if rng.random::<f64>() < self.config.eta_idler {
                        out.push(self.photon(rng, Channel::Idler, pulse, slot));
                    }
                }
            }
            pulse += 1;
        }
    }

    fn draw_outcome(&self, rng: &mut ChaCha8Rng) -> (Outcome, Outcome) {
        if self.outcomes.len() == 1 {
            let (_, s, i) = self.outcomes[0];
            return (s, i);
        }
        let u: f64 = rng.random();
        let (_, s, i) = *self
            .outcomes
            .iter()
            .find(|(c, _, _)| u < *c)
            .expect("cdf ends at infinity");
        (s, i)
    }

    fn photon(&self, rng: &mut ChaCha8Rng, channel: Channel, pulse: u64, slot: u8) -> TimeTag {
        let start = self.pulse_time_ps(pulse);
        let next = self.pulse_time_ps(pulse + 1);
        let jitter = self.jitter.map_or(0.0, |n| n.sample(rng));
        let offset = (self.latency_ps + slot as f64 * self.bin_delay_ps + jitter).round();
        let t = (start as f64 + offset).clamp(start as f64, (next - 1) as f64);
        TimeTag::new(channel, t as u64)
    }

    fn darks(&self, rng: &mut ChaCha8Rng, first: u64, end: u64, out: &mut Vec<TimeTag>) {
        let t0 = self.pulse_time_ps(first);
        let t1 = self.pulse_time_ps(end);
        if t1 <= t0 {
            return;
        }
        let span_s = (t1 - t0) as f64 * 1e-12;
        for (channel, rate) in [
            (Channel::Signal, self.config.dark_rate_signal_hz),
            (Channel::Idler, self.config.dark_rate_idler_hz),
        ] {
            let lambda = rate * span_s;
            if lambda <= 0.0 {
                continue;
            }
            let n = Poisson::new(lambda).expect("positive mean").sample(rng) as u64;
            out.extend((0..n).map(|_| TimeTag::new(channel, rng.random_range(t0..t1))));
        }
    }
}

fn pulse_time(period_ps: f64, pulse: u64) -> u64 {
    (pulse as f64 * period_ps).round() as u64
}

/// Pair number conditioned on at least one pair, by inversion.
fn zero_truncated_poisson(rng: &mut ChaCha8Rng, mu: f64) -> u32 {
    let target = rng.random::<f64>() * -(-mu).exp_m1();
    let mut pmf = (-mu).exp();
    let mut acc = 0.0;
    let mut k = 0u32;
    loop {
        k += 1;
        pmf *= mu / k as f64;
        acc += pmf;
        if acc >= target || k >= 10_000 {
            return k;
        }
    }
}

/// Photon and dark events of a contiguous pulse range; triggers are
/// synthesized on iteration.
#[derive(Debug, Clone)]
pub struct Block {
    pub first_pulse: u64,
    pub end_pulse: u64,
    period_ps: f64,
    /// Non-trigger events, sorted.
    pub events: Vec<TimeTag>,
}

impl Block {
    pub fn tags(&self) -> BlockTags<'_> {
        BlockTags {
            block: self,
            pulse: self.first_pulse,
            event: 0,
        }
    }

    pub fn n_tags(&self) -> usize {
        (self.end_pulse - self.first_pulse) as usize + self.events.len()
    }
}

/// Time-ordered merge of a block's triggers and events.
#[derive(Debug, Clone)]
pub struct BlockTags<'a> {
    block: &'a Block,
    pulse: u64,
    event: usize,
}

impl Iterator for BlockTags<'_> {
    type Item = TimeTag;

    #[inline]
    fn next(&mut self) -> Option<TimeTag> {
        let b = self.block;
        let event = b.events.get(self.event);
        if self.pulse < b.end_pulse {
            let t = pulse_time(b.period_ps, self.pulse);
            match event {
                Some(e) if e.timestamp_ps < t => {
                    self.event += 1;
                    Some(*e)
                }
                _ => {
                    self.pulse += 1;
                    Some(TimeTag::new(Channel::Trigger, t))
                }
            }
        } else {
            self.event += 1;
            event.copied()
        }
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let n = (self.block.end_pulse - self.pulse) as usize + self.block.events.len() - self.event;
        (n, Some(n))
    }
}

/// Sequential iterator over all blocks of a run.
#[derive(Debug)]
pub struct TagStream<'a> {
    sim: &'a Simulator,
    next_block: u64,
    current: Option<(Block, u64, usize)>,
}

impl Iterator for TagStream<'_> {
    type Item = TimeTag;

    fn next(&mut self) -> Option<TimeTag> {
        loop {
            if let Some((block, pulse, event)) = &mut self.current {
                let mut it = BlockTags {
                    block,
                    pulse: *pulse,
                    event: *event,
                };
                if let Some(tag) = it.next() {
                    *pulse = it.pulse;
                    *event = it.event;
                    return Some(tag);
                }
            }
            if self.next_block >= self.sim.n_blocks() {
                return None;
            }
            let block = self.sim.block(self.next_block);
            self.next_block += 1;
            let start = block.first_pulse;
            self.current = Some((block, start, 0));
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quiet(mu: f64) -> ExperimentConfig {
        ExperimentConfig {
            mean_pairs_per_pulse: mu,
            eta_signal: 1.0,
            eta_idler: 1.0,
            dark_rate_signal_hz: 0.0,
            dark_rate_idler_hz: 0.0,
            duration_s: 2e-3,
            rng_seed: 7,
            ..Default::default()
        }
    }

    #[test]
    fn no_pairs_no_darks_only_triggers() {
        let sim = simulate(&quiet(0.0)).unwrap();
        let tags: Vec<_> = sim.stream().collect();
        assert_eq!(tags.len() as u64, sim.n_pulses());
        assert!(tags.iter().all(|t| t.channel == Channel::Trigger));
    }

    #[test]
    fn stream_is_sorted_with_one_trigger_per_period() {
        let mut cfg = quiet(0.05);
        cfg.dark_rate_signal_hz = 2e5;
        cfg.dark_rate_idler_hz = 1e5;
        let sim = simulate(&cfg).unwrap();
        let tags: Vec<_> = sim.stream().collect();
        assert!(tags.windows(2).all(|w| w[0] <= w[1]));
        let triggers: Vec<u64> = tags
            .iter()
            .filter(|t| t.channel == Channel::Trigger)
            .map(|t| t.timestamp_ps)
            .collect();
        assert_eq!(triggers.len() as u64, sim.n_pulses());
        for (k, t) in triggers.iter().enumerate() {
            assert_eq!(*t, sim.pulse_time_ps(k as u64));
        }
    }

    #[test]
    fn identical_seed_identical_stream() {
        let cfg = quiet(0.02);
        let a: Vec<_> = simulate(&cfg).unwrap().stream().collect();
        let b: Vec<_> = simulate(&cfg).unwrap().stream().collect();
        assert_eq!(a, b);
        let mut other = cfg.clone();
        other.rng_seed += 1;
        let c: Vec<_> = simulate(&other).unwrap().stream().collect();
        assert_ne!(a, c);
    }

    #[test]
    fn blocks_concatenate_to_stream() {
        let cfg = ExperimentConfig {
            duration_s: 8e-3,
            ..quiet(0.01)
        };
        let sim = simulate(&cfg).unwrap();
        assert!(sim.n_blocks() > 1);
        let from_blocks: Vec<_> = (0..sim.n_blocks())
            .rev()
            .map(|b| sim.block(b))
            .collect::<Vec<_>>()
            .into_iter()
            .rev()
            .flat_map(|b| b.tags().collect::<Vec<_>>())
            .collect();
        let streamed: Vec<_> = sim.stream().collect();
        assert_eq!(from_blocks, streamed);
    }

    #[test]
    fn single_bin_photons_share_one_slot() {
        let sim = simulate_no_pump_interferometer(&quiet(0.05)).unwrap();
        let latency = sim.config().detector_latency_s * 1e12;
        let mut trigger = 0u64;
        for tag in sim.stream() {
            match tag.channel {
                Channel::Trigger => trigger = tag.timestamp_ps,
                _ => {
                    let rel = (tag.timestamp_ps - trigger) as f64;
                    assert!((rel - latency).abs() < 400.0, "rel={rel}");
                }
            }
        }
    }

    #[test]
    fn rejects_invalid_config_before_output() {
        let cfg = ExperimentConfig {
            eta_signal: -0.1,
            ..Default::default()
        };
        assert_eq!(simulate(&cfg).unwrap_err().field, "eta_signal");
    }

    #[test]
    fn truncated_poisson_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mu = 0.7;
        let n = 200_000;
        let mean = (0..n).map(|_| zero_truncated_poisson(&mut rng, mu) as f64).sum::<f64>() / n as f64;
        let expected = mu / -(-mu).exp_m1();
        assert!((mean - expected).abs() < 0.01, "{mean} vs {expected}");
    }
}
