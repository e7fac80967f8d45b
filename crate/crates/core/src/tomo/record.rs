use std::collections::BTreeSet;
use std::f64::consts::{FRAC_PI_2, PI, TAU};

use rand::Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use super::TomoError;
use crate::quantum::{born_probability, measurement_operator, Basis, Complex4x4, DensityMatrix2Q};
use crate::sim::{CENTRAL_SLOT, N_SLOTS};

/// One projective setting and the coincidences counted for it.
///
/// The expected count is `N · integration_time_s · exposure · tr(ρ M)` with
/// a normalization `N` shared by all entries.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RecordEntry {
    pub signal: Basis,
    pub idler: Basis,
    pub count: u64,
    pub integration_time_s: f64,
    /// Relative collection weight of this entry, 1 for a plain projective
    /// measurement.
    #[serde(default = "unit")]
    pub exposure: f64,
}

fn unit() -> f64 {
    1.0
}

impl RecordEntry {
    pub fn new(signal: Basis, idler: Basis, count: u64, integration_time_s: f64) -> Self {
        Self {
            signal,
            idler,
            count,
            integration_time_s,
            exposure: 1.0,
        }
    }

    pub fn operator(&self) -> Complex4x4 {
        measurement_operator(&self.signal.projector(), &self.idler.projector())
    }

    /// Weight multiplying `N · tr(ρ M)` in the expected count.
    pub fn weight(&self) -> f64 {
        self.integration_time_s * self.exposure
    }
}

/// Relative normalization of one phase setting, kept for provenance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SettingNormalization {
    pub signal_phase_rad: f64,
    pub idler_phase_rad: f64,
    pub integration_time_s: f64,
    pub normalization: f64,
}

/// The 16 basis-pair counts of a two-qubit tomography run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RecordJson", into = "RecordJson")]
pub struct MeasurementRecord {
    entries: Vec<RecordEntry>,
    provenance: String,
    settings: Vec<SettingNormalization>,
}

#[derive(Serialize, Deserialize)]
struct RecordJson {
    entries: Vec<RecordEntry>,
    #[serde(default)]
    provenance: String,
    #[serde(default)]
    settings: Vec<SettingNormalization>,
}

impl TryFrom<RecordJson> for MeasurementRecord {
    type Error = TomoError;

    fn try_from(r: RecordJson) -> Result<Self, TomoError> {
        Ok(Self::new(r.entries, r.provenance)?.with_settings(r.settings))
    }
}

impl From<MeasurementRecord> for RecordJson {
    fn from(r: MeasurementRecord) -> Self {
        Self {
            entries: r.entries,
            provenance: r.provenance,
            settings: r.settings,
        }
    }
}

impl MeasurementRecord {
    pub fn new(entries: Vec<RecordEntry>, provenance: impl Into<String>) -> Result<Self, TomoError> {
        if entries.len() != 16 {
            return Err(TomoError::InvalidRecord(format!(
                "expected 16 entries, got {}",
                entries.len()
            )));
        }
        let pairs: BTreeSet<(Basis, Basis)> = entries.iter().map(|e| (e.signal, e.idler)).collect();
        if pairs.len() != 16 {
            return Err(TomoError::InvalidRecord("basis combinations repeat".into()));
        }
        for e in &entries {
            if !(e.integration_time_s.is_finite() && e.integration_time_s > 0.0) {
                return Err(TomoError::InvalidRecord(format!(
                    "{}{}: integration time must be positive",
                    e.signal, e.idler
                )));
            }
            if !(e.exposure.is_finite() && e.exposure > 0.0) {
                return Err(TomoError::InvalidRecord(format!(
                    "{}{}: exposure must be positive",
                    e.signal, e.idler
                )));
            }
        }
        Ok(Self {
            entries,
            provenance: provenance.into(),
            settings: Vec::new(),
        })
    }

    pub fn with_settings(mut self, settings: Vec<SettingNormalization>) -> Self {
        self.settings = settings;
        self
    }

    /// Counts rounded from `n · tr(ρ M)` for every basis pair.
    pub fn from_state(rho: &DensityMatrix2Q, n: f64) -> Self {
        Self::from_fn(rho, |p| (n * p).round() as u64, "expected counts")
    }

    /// Poisson-sampled counts with means `n · tr(ρ M)`.
    pub fn sample<R: Rng + ?Sized>(rho: &DensityMatrix2Q, n: f64, rng: &mut R) -> Self {
        Self::from_fn(rho, |p| poisson(n * p, rng), "Poisson sample")
    }

    fn from_fn(rho: &DensityMatrix2Q, mut count: impl FnMut(f64) -> u64, note: &str) -> Self {
        let mut entries = Vec::with_capacity(16);
        for s in Basis::ALL {
            for i in Basis::ALL {
                let p = born_probability(rho, &measurement_operator(&s.projector(), &i.projector()));
                entries.push(RecordEntry::new(s, i, count(p.max(0.0)), 1.0));
            }
        }
        Self::new(entries, note).expect("complete basis grid")
    }

    pub fn entries(&self) -> &[RecordEntry] {
        &self.entries
    }

    pub fn provenance(&self) -> &str {
        &self.provenance
    }

    pub fn settings(&self) -> &[SettingNormalization] {
        &self.settings
    }

    pub fn total_counts(&self) -> u64 {
        self.entries.iter().map(|e| e.count).sum()
    }

    pub fn count(&self, signal: Basis, idler: Basis) -> u64 {
        self.entries
            .iter()
            .find(|e| e.signal == signal && e.idler == idler)
            .map(|e| e.count)
            .expect("record holds every basis pair")
    }

    /// Same record with the roles of signal and idler exchanged.
    pub fn swapped(&self) -> Self {
        let entries = self
            .entries
            .iter()
            .map(|e| RecordEntry {
                signal: e.idler,
                idler: e.signal,
                ..*e
            })
            .collect();
        let settings = self
            .settings
            .iter()
            .map(|s| SettingNormalization {
                signal_phase_rad: s.idler_phase_rad,
                idler_phase_rad: s.signal_phase_rad,
                ..*s
            })
            .collect();
        Self {
            entries,
            provenance: self.provenance.clone(),
            settings,
        }
    }

    /// Record with every count replaced by a Poisson draw around it.
    pub fn resample<R: Rng + ?Sized>(&self, rng: &mut R) -> Self {
        let entries = self
            .entries
            .iter()
            .map(|e| RecordEntry {
                count: poisson(e.count as f64, rng),
                ..*e
            })
            .collect();
        Self {
            entries,
            provenance: self.provenance.clone(),
            settings: self.settings.clone(),
        }
    }
}

fn poisson<R: Rng + ?Sized>(mean: f64, rng: &mut R) -> u64 {
    if mean > 0.0 {
        Poisson::new(mean).expect("positive mean").sample(rng) as u64
    } else {
        0
    }
}

/// Same-pulse joint slot counts of one phase setting.
///
/// Phases are those of the analysis projectors: 0 selects `X+` and π/2
/// selects `Y+` in the central slot. Use [`label_phases`] to convert from
/// interferometer phases.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseSettingCounts {
    pub signal_phase_rad: f64,
    pub idler_phase_rad: f64,
    /// `joint[signal_slot][idler_slot]` for slots 0 (early), 1 (central)
    /// and 2 (late).
    pub joint: Vec<Vec<u64>>,
    pub integration_time_s: f64,
}

/// Projector phases measured by analysis interferometers at `(φs, φi)`.
///
/// The monitored signal port adds π to the long arm, so `θs = φs + π` and
/// `θi = φi`.
pub fn label_phases(phi_s: f64, phi_i: f64) -> (f64, f64) {
    ((phi_s + PI).rem_euclid(TAU), phi_i.rem_euclid(TAU))
}

/// Interferometer phases `(φs, φi)` that realise projector phases
/// `(θs, θi)`.
pub fn interferometer_phases(theta_s: f64, theta_i: f64) -> (f64, f64) {
    ((theta_s - PI).rem_euclid(TAU), theta_i.rem_euclid(TAU))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Normalization {
    /// One normalization for all four settings.
    #[default]
    Shared,
    /// Each setting scaled by its phase-independent satellite rate.
    PerSetting,
}

const SETTING_PHASES: [(f64, f64); 4] = [(0.0, 0.0), (0.0, FRAC_PI_2), (FRAC_PI_2, 0.0), (FRAC_PI_2, FRAC_PI_2)];

fn setting_name(s: usize) -> String {
    let (a, b) = SETTING_PHASES[s];
    format!("({}°, {}°)", a.to_degrees().round(), b.to_degrees().round())
}

fn superposition(theta: f64) -> Basis {
    if theta == 0.0 {
        Basis::XPlus
    } else {
        Basis::YPlus
    }
}

/// Builds the 16-entry record from four phase settings.
///
/// Per photon the three slots act as weighted projectors: slot 0 onto `Z0`
/// (weight 1/4), slot 2 onto `Z1` (1/4) and the central slot onto the
/// superposition selected by the phase (1/2). Hence
///
/// - time-time entries sum the corner slots of all four settings,
/// - mixed entries sum the edge slots of the two settings sharing the
///   superposition phase,
/// - superposition-superposition entries take the central slot of one
///   setting.
///
/// Every entry ends up with the same nominal exposure of 1/4 of the total
/// pair rate; [`Normalization::PerSetting`] rescales the contributions of
/// each setting by its measured satellite rate.
pub fn counts_from_phase_settings(
    settings: &[PhaseSettingCounts],
    normalization: Normalization,
) -> Result<MeasurementRecord, TomoError> {
    let close = |a: f64, b: f64| {
        let d = (a - b).rem_euclid(TAU);
        d < 1e-6 || TAU - d < 1e-6
    };
    let mut slot: [Option<&PhaseSettingCounts>; 4] = [None; 4];
    for s in settings {
        if s.joint.len() != N_SLOTS || s.joint.iter().any(|r| r.len() != N_SLOTS) {
            return Err(TomoError::InvalidRecord(format!(
                "setting needs a {N_SLOTS}×{N_SLOTS} slot table"
            )));
        }
        if !(s.integration_time_s.is_finite() && s.integration_time_s > 0.0) {
            return Err(TomoError::InvalidRecord("integration time must be positive".into()));
        }
        let k = SETTING_PHASES
            .iter()
            .position(|&(a, b)| close(s.signal_phase_rad, a) && close(s.idler_phase_rad, b))
            .ok_or_else(|| {
                TomoError::InvalidRecord(format!(
                    "phase setting ({:.4}, {:.4}) rad is not one of the four tomography settings",
                    s.signal_phase_rad, s.idler_phase_rad
                ))
            })?;
        if slot[k].replace(s).is_some() {
            return Err(TomoError::InvalidRecord(format!("setting {} given twice", setting_name(k))));
        }
    }
    let mut present = [&settings[0]; 4];
    for (k, s) in slot.iter().enumerate() {
        present[k] = s.ok_or_else(|| TomoError::MissingSetting(setting_name(k)))?;
    }

    let satellite_rate = |s: &PhaseSettingCounts| {
        let total: u64 = (0..N_SLOTS)
            .flat_map(|a| (0..N_SLOTS).map(move |b| (a, b)))
            .filter(|&ab| ab != (CENTRAL_SLOT, CENTRAL_SLOT))
            .map(|(a, b)| s.joint[a][b])
            .sum();
        total as f64 / s.integration_time_s
    };
    let nu: [f64; 4] = match normalization {
        Normalization::Shared => [1.0; 4],
        Normalization::PerSetting => {
            let rates = present.map(satellite_rate);
            let mean = rates.iter().sum::<f64>() / 4.0;
            if rates.iter().any(|r| *r <= 0.0) {
                return Err(TomoError::InvalidRecord(
                    "per-setting normalization needs satellite counts in every setting".into(),
                ));
            }
            rates.map(|r| r / mean)
        }
    };

    // slot index → (projector, weight) for a projector phase
    let proj = |slot: usize, theta: f64| match slot {
        0 => (Basis::Z0, 0.25),
        2 => (Basis::Z1, 0.25),
        _ => (superposition(theta), 0.5),
    };
    let mut acc: std::collections::BTreeMap<(Basis, Basis), (u64, f64, f64)> = Default::default();
    for (k, s) in present.iter().enumerate() {
        let (ts, ti) = SETTING_PHASES[k];
        for a in 0..N_SLOTS {
            for b in 0..N_SLOTS {
                let (bs, ws) = proj(a, ts);
                let (bi, wi) = proj(b, ti);
                let e = acc.entry((bs, bi)).or_insert((0, 0.0, 0.0));
                e.0 += s.joint[a][b];
                e.1 += s.integration_time_s;
                e.2 += nu[k] * ws * wi * s.integration_time_s;
            }
        }
    }
    let entries = acc
        .into_iter()
        .map(|((s, i), (count, time, weighted))| RecordEntry {
            signal: s,
            idler: i,
            count,
            integration_time_s: time,
            exposure: weighted / time,
        })
        .collect();
    let settings_info = (0..4)
        .map(|k| SettingNormalization {
            signal_phase_rad: SETTING_PHASES[k].0,
            idler_phase_rad: SETTING_PHASES[k].1,
            integration_time_s: present[k].integration_time_s,
            normalization: nu[k],
        })
        .collect();
    let note = match normalization {
        Normalization::Shared => "four phase settings, shared normalization",
        Normalization::PerSetting => "four phase settings, per-setting normalization from satellites",
    };
    Ok(MeasurementRecord::new(entries, note)?.with_settings(settings_info))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quantum::bell_phi_plus;
    use crate::sim::joint_slot_distribution;

    fn expected_setting(theta_s: f64, theta_i: f64, n: f64) -> PhaseSettingCounts {
        let (phi_s, phi_i) = interferometer_phases(theta_s, theta_i);
        let d = joint_slot_distribution(0.0, phi_s, phi_i, 1.0);
        PhaseSettingCounts {
            signal_phase_rad: theta_s,
            idler_phase_rad: theta_i,
            joint: d.joint.iter().map(|r| r.iter().map(|p| (p * n).round() as u64).collect()).collect(),
            integration_time_s: 1.0,
        }
    }

    fn all_settings(n: f64) -> Vec<PhaseSettingCounts> {
        SETTING_PHASES.iter().map(|&(a, b)| expected_setting(a, b, n)).collect()
    }

    #[test]
    fn label_and_interferometer_phases_invert() {
        for (a, b) in [(0.0, 0.0), (1.0, 2.0), (5.0, 0.3)] {
            let (ps, pi) = interferometer_phases(a, b);
            let (ts, ti) = label_phases(ps, pi);
            assert!((ts - a).abs() < 1e-12 && (ti - b).abs() < 1e-12);
        }
    }

    #[test]
    fn settings_reproduce_born_counts() {
        // the slot model at any phase equals 1/4 · tr(ρ M) for Φ⁺ per entry
        let n = 1.6e7;
        let rec = counts_from_phase_settings(&all_settings(n), Normalization::Shared).unwrap();
        let rho = DensityMatrix2Q::from_pure(&bell_phi_plus());
        for e in rec.entries() {
            let p = born_probability(&rho, &e.operator());
            let expected = n * e.weight() * p;
            assert!(
                (e.count as f64 - expected).abs() <= 2.0,
                "{}{}: {} vs {}",
                e.signal,
                e.idler,
                e.count,
                expected
            );
            assert!((e.weight() - 0.25).abs() < 1e-15);
        }
        assert_eq!(rec.count(Basis::Z0, Basis::Z1), 0);
        assert_eq!(rec.count(Basis::Z1, Basis::Z0), 0);
    }

    #[test]
    fn missing_setting_named() {
        let mut s = all_settings(1e4);
        s.remove(1);
        let err = counts_from_phase_settings(&s, Normalization::Shared).unwrap_err();
        assert_eq!(err, TomoError::MissingSetting("(0°, 90°)".into()));
    }

    #[test]
    fn incomplete_slot_table_rejected() {
        let mut s = all_settings(1e4);
        s[2].joint.pop();
        assert!(counts_from_phase_settings(&s, Normalization::Shared).is_err());
    }

    #[test]
    fn per_setting_normalization_tracks_satellites() {
        let mut s = all_settings(1e6);
        for row in &mut s[3].joint {
            for c in row.iter_mut() {
                *c *= 2;
            }
        }
        let rec = counts_from_phase_settings(&s, Normalization::PerSetting).unwrap();
        let nu: Vec<f64> = rec.settings().iter().map(|x| x.normalization).collect();
        assert!((nu[3] / nu[0] - 2.0).abs() < 1e-3);
        let yy = rec.entries().iter().find(|e| e.signal == Basis::YPlus && e.idler == Basis::YPlus).unwrap();
        assert!((yy.exposure / 0.25 - nu[3]).abs() < 1e-12);
    }

    #[test]
    fn record_validation() {
        let rho = DensityMatrix2Q::maximally_mixed();
        let rec = MeasurementRecord::from_state(&rho, 100.0);
        let mut entries = rec.entries().to_vec();
        entries[3] = entries[2];
        assert!(MeasurementRecord::new(entries, "").is_err());
        assert!(MeasurementRecord::new(rec.entries()[..15].to_vec(), "").is_err());
        let json = serde_json::to_string(&rec).unwrap();
        assert!(json.contains("\"X+\""));
        let back: MeasurementRecord = serde_json::from_str(&json).unwrap();
        assert_eq!(back, rec);
        let bad = json.replace("\"integration_time_s\":1.0", "\"integration_time_s\":-1.0");
        assert!(serde_json::from_str::<MeasurementRecord>(&bad).is_err());
    }
}
