use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::mle::{mle_reconstruct, MleOptions, TomographyResult};
use super::{MeasurementRecord, TomoError};

/// Replica counts below this are reported as low precision.
pub const LOW_PRECISION_REPLICAS: usize = 30;
/// Dropping more than this fraction of replicas flags the summary.
pub const MAX_DROPPED_FRACTION: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BootstrapOptions {
    pub n_replicas: usize,
    pub seed: u64,
    pub mle: MleOptions,
}

impl Default for BootstrapOptions {
    fn default() -> Self {
        Self {
            n_replicas: 200,
            seed: 0,
            mle: MleOptions::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

impl MeanStd {
    fn of(values: &[f64]) -> Self {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = if values.len() > 1 {
            values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)
        } else {
            0.0
        };
        Self { mean, std: var.sqrt() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapSummary {
    pub seed: u64,
    pub requested: usize,
    pub used: usize,
    /// Replicas whose optimizer did not converge or whose record was empty.
    pub dropped: usize,
    pub too_many_dropped: bool,
    pub low_precision: bool,
    pub concurrence: MeanStd,
    pub fidelity: MeanStd,
    pub chsh_lower: MeanStd,
    pub chsh_upper: MeanStd,
    /// Spread of `|ρ_ij|` over the replicas.
    pub abs_rho_std: [[f64; 4]; 4],
}

impl BootstrapSummary {
    pub fn flagged(&self) -> bool {
        self.too_many_dropped || self.low_precision
    }
}

/// Parametric bootstrap: every count is redrawn as Poisson around its
/// observed value and the state re-estimated. Replica `k` draws from the
/// ChaCha8 stream `k` of `seed`, so results do not depend on scheduling.
pub fn bootstrap_errors(record: &MeasurementRecord, options: &BootstrapOptions) -> Result<BootstrapSummary, TomoError> {
    if options.n_replicas < 2 {
        return Err(TomoError::TooFewReplicas(options.n_replicas));
    }
    let replicas: Vec<Option<TomographyResult>> = (0..options.n_replicas)
        .into_par_iter()
        .map(|k| {
            let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
            rng.set_stream(k as u64);
            let r = record.resample(&mut rng);
            mle_reconstruct(&r, &options.mle).ok().filter(|res| res.converged())
        })
        .collect();
    let good: Vec<&TomographyResult> = replicas.iter().flatten().collect();
    let dropped = options.n_replicas - good.len();
    if good.len() < 2 {
        return Err(TomoError::BootstrapFailed {
            dropped,
            requested: options.n_replicas,
        });
    }
    let pick = |f: fn(&TomographyResult) -> f64| MeanStd::of(&good.iter().map(|r| f(r)).collect::<Vec<_>>());
    let abs: Vec<[[f64; 4]; 4]> = good.iter().map(|r| r.rho.abs_entries()).collect();
    let abs_rho_std = std::array::from_fn(|i| {
        std::array::from_fn(|j| MeanStd::of(&abs.iter().map(|a| a[i][j]).collect::<Vec<_>>()).std)
    });
    Ok(BootstrapSummary {
        seed: options.seed,
        requested: options.n_replicas,
        used: good.len(),
        dropped,
        too_many_dropped: dropped as f64 > MAX_DROPPED_FRACTION * options.n_replicas as f64,
        low_precision: good.len() < LOW_PRECISION_REPLICAS,
        concurrence: pick(|r| r.concurrence.value),
        fidelity: pick(|r| r.fidelity.value),
        chsh_lower: pick(|r| r.chsh_lower.value),
        chsh_upper: pick(|r| r.chsh_upper.value),
        abs_rho_std,
    })
}

/// Point estimate with bootstrap errors attached.
pub fn reconstruct_with_errors(
    record: &MeasurementRecord,
    options: &BootstrapOptions,
) -> Result<TomographyResult, TomoError> {
    let result = mle_reconstruct(record, &options.mle)?;
    let summary = bootstrap_errors(record, options)?;
    Ok(result.with_bootstrap(summary))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quantum::{bell_phi_plus, DensityMatrix2Q};

    fn bell_record(n: f64) -> MeasurementRecord {
        MeasurementRecord::from_state(&DensityMatrix2Q::from_pure(&bell_phi_plus()), n)
    }

    #[test]
    fn two_replicas_are_flagged() {
        let opts = BootstrapOptions {
            n_replicas: 2,
            ..Default::default()
        };
        let s = bootstrap_errors(&bell_record(1e4), &opts).unwrap();
        assert!(s.low_precision && s.flagged());
        let one = BootstrapOptions {
            n_replicas: 1,
            ..Default::default()
        };
        assert_eq!(bootstrap_errors(&bell_record(1e4), &one), Err(TomoError::TooFewReplicas(1)));
    }

    #[test]
    fn reproducible_for_fixed_seed() {
        let opts = BootstrapOptions {
            n_replicas: 8,
            seed: 42,
            ..Default::default()
        };
        let rec = bell_record(1e4);
        assert_eq!(bootstrap_errors(&rec, &opts).unwrap(), bootstrap_errors(&rec, &opts).unwrap());
    }

    #[test]
    fn attaches_monte_carlo_spread() {
        let opts = BootstrapOptions {
            n_replicas: 40,
            seed: 1,
            ..Default::default()
        };
        let r = reconstruct_with_errors(&bell_record(1e6), &opts).unwrap();
        let s = r.concurrence.mc_std.unwrap();
        assert!((0.0..0.005).contains(&s), "{s}");
        assert!(!r.bootstrap.as_ref().unwrap().flagged());
    }
}
