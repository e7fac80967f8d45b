use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::{AnalysisError, Estimate, GateConfig, RateReport};
use crate::sim::{Channel, ExperimentConfig, SourceMode, TimeTag};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalyzerSettings {
    pub gates: GateConfig,
    /// Bin width of the trigger-referenced singles histograms.
    pub histogram_bin_s: f64,
    /// Events later than this after their trigger go to the overflow count.
    pub histogram_span_s: f64,
    /// Neighbouring pulse periods paired for accidental diagnostics.
    pub accidental_periods: usize,
    /// Overrides the duration inferred from the trigger train.
    pub duration_s: Option<f64>,
}

impl AnalyzerSettings {
    pub fn new(gates: GateConfig) -> Self {
        Self {
            gates,
            histogram_bin_s: 10e-12,
            histogram_span_s: 20e-9,
            accidental_periods: 1,
            duration_s: None,
        }
    }

    pub fn for_experiment(config: &ExperimentConfig, mode: SourceMode) -> Self {
        Self {
            histogram_span_s: config.period_s(),
            ..Self::new(GateConfig::for_experiment(config, mode))
        }
    }

    fn validate(&self) -> Result<(), AnalysisError> {
        self.gates.validate()?;
        if !(self.histogram_bin_s >= 1e-12 && self.histogram_span_s > self.histogram_bin_s) {
            return Err(AnalysisError::InvalidInput(format!(
                "histogram bin {} s / span {} s not usable",
                self.histogram_bin_s, self.histogram_span_s
            )));
        }
        Ok(())
    }
}

/// Additive counters of an analysis pass. Two `Counts` from consecutive
/// chunks that each start at a trigger merge into the counts of the whole
/// stream, except for neighbouring-period pairs straddling the boundary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Counts {
    pub n_slots: usize,
    pub accidental_periods: usize,
    pub histogram_bin_ps: u64,
    pub triggers: u64,
    pub first_trigger_ps: Option<u64>,
    pub last_trigger_ps: Option<u64>,
    /// Ungated counts, `[signal, idler]`.
    pub raw: [u64; 2],
    /// Gated counts per slot, `[signal, idler]`.
    pub gated: [Vec<u64>; 2],
    pub histograms: [Vec<u64>; 2],
    pub histogram_overflow: [u64; 2],
    pub before_first_trigger: u64,
    /// Joint slot counts, one flattened `n_slots × n_slots` matrix per
    /// period offset `-accidental_periods..=accidental_periods`.
    pub joint: Vec<Vec<u64>>,
}

impl Counts {
    fn new(settings: &AnalyzerSettings) -> Self {
        let n = settings.gates.n_slots();
        let bin_ps = (settings.histogram_bin_s * 1e12).round() as u64;
        let n_bins = (settings.histogram_span_s * 1e12 / bin_ps as f64).ceil() as usize;
        Self {
            n_slots: n,
            accidental_periods: settings.accidental_periods,
            histogram_bin_ps: bin_ps,
            triggers: 0,
            first_trigger_ps: None,
            last_trigger_ps: None,
            raw: [0; 2],
            gated: [vec![0; n], vec![0; n]],
            histograms: [vec![0; n_bins], vec![0; n_bins]],
            histogram_overflow: [0; 2],
            before_first_trigger: 0,
            joint: vec![vec![0; n * n]; 2 * settings.accidental_periods + 1],
        }
    }

    pub fn merge(&mut self, other: &Counts) -> Result<(), AnalysisError> {
        if self.n_slots != other.n_slots
            || self.accidental_periods != other.accidental_periods
            || self.histogram_bin_ps != other.histogram_bin_ps
            || self.histograms[0].len() != other.histograms[0].len()
        {
            return Err(AnalysisError::InvalidInput("merging counts with different settings".into()));
        }
        self.triggers += other.triggers;
        self.first_trigger_ps = min_opt(self.first_trigger_ps, other.first_trigger_ps);
        self.last_trigger_ps = self.last_trigger_ps.max(other.last_trigger_ps);
        self.before_first_trigger += other.before_first_trigger;
        for ch in 0..2 {
            self.raw[ch] += other.raw[ch];
            self.histogram_overflow[ch] += other.histogram_overflow[ch];
            add_into(&mut self.gated[ch], &other.gated[ch]);
            add_into(&mut self.histograms[ch], &other.histograms[ch]);
        }
        for (a, b) in self.joint.iter_mut().zip(&other.joint) {
            add_into(a, b);
        }
        Ok(())
    }

    fn joint_at(&self, period_offset: i64, a: usize, b: usize) -> u64 {
        let idx = (period_offset + self.accidental_periods as i64) as usize;
        self.joint[idx][a * self.n_slots + b]
    }
}

fn min_opt(a: Option<u64>, b: Option<u64>) -> Option<u64> {
    match (a, b) {
        (Some(x), Some(y)) => Some(x.min(y)),
        (x, None) => x,
        (None, y) => y,
    }
}

fn add_into(dst: &mut [u64], src: &[u64]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

/// Streaming fold over a time-ordered tag stream.
///
/// Each photon is referenced to the latest preceding trigger; photons
/// before the first trigger are dropped and counted. Coincidences pair
/// gated signal and idler events of the same pulse period, plus the
/// neighbouring periods for accidental diagnostics.
#[derive(Debug, Clone)]
pub struct Analyzer {
    settings: AnalyzerSettings,
    windows: [Vec<(u64, u64)>; 2],
    counts: Counts,
    last_timestamp: Option<u64>,
    seen: u64,
    trigger: Option<u64>,
    pending: [Vec<u8>; 2],
    history: VecDeque<(u64, Vec<u8>, Vec<u8>)>,
}

impl Analyzer {
    pub fn new(settings: AnalyzerSettings) -> Result<Self, AnalysisError> {
        settings.validate()?;
        Ok(Self {
            windows: [settings.gates.windows_ps(true), settings.gates.windows_ps(false)],
            counts: Counts::new(&settings),
            settings,
            last_timestamp: None,
            seen: 0,
            trigger: None,
            pending: [Vec::new(), Vec::new()],
            history: VecDeque::new(),
        })
    }

    pub fn settings(&self) -> &AnalyzerSettings {
        &self.settings
    }

    #[inline]
    pub fn push(&mut self, tag: TimeTag) -> Result<(), AnalysisError> {
        let t = tag.timestamp_ps;
        if let Some(prev) = self.last_timestamp {
            if t < prev {
                return Err(AnalysisError::Unsorted {
                    index: self.seen,
                    previous_ps: prev,
                    timestamp_ps: t,
                });
            }
        }
        self.last_timestamp = Some(t);
        self.seen += 1;
        match tag.channel {
            Channel::Trigger => {
                self.close_pulse();
                self.trigger = Some(t);
                let c = &mut self.counts;
                c.triggers += 1;
                c.first_trigger_ps.get_or_insert(t);
                c.last_trigger_ps = Some(t);
            }
            Channel::Signal => self.photon(0, t),
            Channel::Idler => self.photon(1, t),
        }
        Ok(())
    }

    pub fn extend<I: IntoIterator<Item = TimeTag>>(&mut self, tags: I) -> Result<(), AnalysisError> {
        tags.into_iter().try_for_each(|t| self.push(t))
    }

    #[inline]
    fn photon(&mut self, ch: usize, t: u64) {
        self.counts.raw[ch] += 1;
        let Some(trigger) = self.trigger else {
            self.counts.before_first_trigger += 1;
            return;
        };
        let rel = t - trigger;
        let bin = (rel / self.counts.histogram_bin_ps) as usize;
        match self.counts.histograms[ch].get_mut(bin) {
            Some(c) => *c += 1,
            None => self.counts.histogram_overflow[ch] += 1,
        }
        if let Some(slot) = self.windows[ch].iter().position(|&(lo, hi)| rel >= lo && rel <= hi) {
            self.counts.gated[ch][slot] += 1;
            self.pending[ch].push(slot as u8);
        }
    }

    fn close_pulse(&mut self) {
        if self.pending[0].is_empty() && self.pending[1].is_empty() {
            return;
        }
        let pulse = self.counts.triggers.saturating_sub(1);
        let n = self.counts.n_slots;
        let m_max = self.settings.accidental_periods;
        let [sig, idl] = &self.pending;
        let joint = &mut self.counts.joint;
        for &a in sig {
            for &b in idl {
                joint[m_max][a as usize * n + b as usize] += 1;
            }
        }
        while let Some((k, _, _)) = self.history.front() {
            if pulse - k > m_max as u64 {
                self.history.pop_front();
            } else {
                break;
            }
        }
        for (k, sig_old, idl_old) in &self.history {
            let m = (pulse - k) as usize;
            for &a in sig {
                for &b in idl_old {
                    joint[m_max - m][a as usize * n + b as usize] += 1;
                }
            }
            for &a in sig_old {
                for &b in idl {
                    joint[m_max + m][a as usize * n + b as usize] += 1;
                }
            }
        }
        if m_max > 0 {
            self.history.push_back((pulse, sig.clone(), idl.clone()));
        }
        self.pending[0].clear();
        self.pending[1].clear();
    }

    /// Closes the open pulse period and returns the raw counters.
    pub fn into_counts(mut self) -> Counts {
        self.close_pulse();
        self.counts
    }

    pub fn finish(self) -> Result<Analysis, AnalysisError> {
        let settings = self.settings.clone();
        Analysis::from_counts(self.into_counts(), &settings)
    }
}

/// Joint slot counts keyed by pulse-period offset between idler and signal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoincidenceHistogram {
    pub n_slots: usize,
    pub periods: Vec<PeriodJoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeriodJoint {
    /// Idler pulse index minus signal pulse index.
    pub period_offset: i64,
    /// `joint[signal_slot][idler_slot]`.
    pub joint: Vec<Vec<u64>>,
}

impl CoincidenceHistogram {
    fn from_counts(c: &Counts) -> Self {
        let m = c.accidental_periods as i64;
        let periods = (-m..=m)
            .map(|offset| PeriodJoint {
                period_offset: offset,
                joint: (0..c.n_slots)
                    .map(|a| (0..c.n_slots).map(|b| c.joint_at(offset, a, b)).collect())
                    .collect(),
            })
            .collect();
        Self {
            n_slots: c.n_slots,
            periods,
        }
    }

    pub fn joint(&self, period_offset: i64) -> Option<&Vec<Vec<u64>>> {
        self.periods
            .iter()
            .find(|p| p.period_offset == period_offset)
            .map(|p| &p.joint)
    }

    /// Same-pulse joint slot counts.
    pub fn same_pulse(&self) -> &Vec<Vec<u64>> {
        self.joint(0).expect("offset 0 always present")
    }

    pub fn central_slot(&self) -> usize {
        self.n_slots / 2
    }

    /// Coincidences in the central joint slot of the same pulse.
    pub fn central(&self) -> u64 {
        let c = self.central_slot();
        self.same_pulse()[c][c]
    }

    /// Counts by slot delay `idler − signal`, from `-(n−1)` to `n−1`.
    pub fn delay_histogram(&self, period_offset: i64) -> Vec<(i64, u64)> {
        let n = self.n_slots as i64;
        let Some(joint) = self.joint(period_offset) else {
            return Vec::new();
        };
        (-(n - 1)..n)
            .map(|d| {
                let total = (0..n)
                    .filter(|a| (0..n).contains(&(a + d)))
                    .map(|a| joint[a as usize][(a + d) as usize])
                    .sum();
                (d, total)
            })
            .collect()
    }

    pub fn total(&self, period_offset: i64) -> u64 {
        self.joint(period_offset)
            .map_or(0, |j| j.iter().flatten().sum())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SinglesHistograms {
    pub bin_width_s: f64,
    pub signal: Vec<u64>,
    pub idler: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub events_before_first_trigger: u64,
    pub histogram_overflow: [u64; 2],
}

/// Observables of one analysed stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Analysis {
    pub rates: RateReport,
    pub raw_signal_rate: Estimate,
    pub raw_idler_rate: Estimate,
    /// Gated singles per slot, `signal` and `idler`.
    pub gated_signal_slots: Vec<u64>,
    pub gated_idler_slots: Vec<u64>,
    pub coincidences: CoincidenceHistogram,
    /// Central-slot coincidences between neighbouring pulse periods,
    /// averaged over the offsets analysed.
    pub accidental_rate: Option<Estimate>,
    pub histograms: SinglesHistograms,
    pub diagnostics: Diagnostics,
}

impl Analysis {
    pub fn from_counts(c: Counts, settings: &AnalyzerSettings) -> Result<Self, AnalysisError> {
        if c.triggers == 0 {
            return Err(AnalysisError::NoTriggers);
        }
        let duration = match settings.duration_s {
            Some(d) if d > 0.0 => d,
            Some(d) => return Err(AnalysisError::InvalidInput(format!("duration {d} s"))),
            None => {
                let (first, last) = (c.first_trigger_ps.unwrap(), c.last_trigger_ps.unwrap());
                if c.triggers < 2 || last == first {
                    return Err(AnalysisError::InvalidInput(
                        "at least two triggers are needed to infer the duration".into(),
                    ));
                }
                (last - first) as f64 * 1e-12 * c.triggers as f64 / (c.triggers - 1) as f64
            }
        };
        let coincidences = CoincidenceHistogram::from_counts(&c);
        let gated_s: u64 = c.gated[0].iter().sum();
        let gated_i: u64 = c.gated[1].iter().sum();
        let rates = RateReport::from_counts(duration, c.triggers, gated_s, gated_i, coincidences.central());
        let accidental_rate = (c.accidental_periods > 0).then(|| {
            let cs = coincidences.central_slot();
            let sum: u64 = coincidences
                .periods
                .iter()
                .filter(|p| p.period_offset != 0)
                .map(|p| p.joint[cs][cs])
                .sum();
            let k = 2.0 * c.accidental_periods as f64;
            Estimate::new(sum as f64 / k / duration, (sum as f64).sqrt() / k / duration)
        });
        Ok(Self {
            rates,
            raw_signal_rate: Estimate::poisson(c.raw[0], duration),
            raw_idler_rate: Estimate::poisson(c.raw[1], duration),
            gated_signal_slots: c.gated[0].clone(),
            gated_idler_slots: c.gated[1].clone(),
            coincidences,
            accidental_rate,
            histograms: SinglesHistograms {
                bin_width_s: c.histogram_bin_ps as f64 * 1e-12,
                signal: c.histograms[0].clone(),
                idler: c.histograms[1].clone(),
            },
            diagnostics: Diagnostics {
                events_before_first_trigger: c.before_first_trigger,
                histogram_overflow: c.histogram_overflow,
            },
        })
    }
}
