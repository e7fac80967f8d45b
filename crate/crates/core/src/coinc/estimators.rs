use serde::{Deserialize, Serialize};

use super::AnalysisError;

/// Value with a one-standard-deviation error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub error: f64,
}

impl Estimate {
    pub fn new(value: f64, error: f64) -> Self {
        Self { value, error }
    }

    pub fn exact(value: f64) -> Self {
        Self { value, error: 0.0 }
    }

    /// Rate of `counts` events in `duration` seconds with Poisson error.
    pub fn poisson(counts: u64, duration: f64) -> Self {
        Self {
            value: counts as f64 / duration,
            error: (counts as f64).sqrt() / duration,
        }
    }

    pub fn relative_error(&self) -> f64 {
        if self.value == 0.0 {
            f64::INFINITY
        } else {
            (self.error / self.value).abs()
        }
    }
}

/// Gated singles, central coincidences and trigger rate of one run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateReport {
    pub duration_s: f64,
    pub singles_signal: Estimate,
    pub singles_idler: Estimate,
    pub coincidence_rate: Estimate,
    pub trigger_rate: Estimate,
}

impl RateReport {
    pub fn from_counts(duration_s: f64, triggers: u64, signal: u64, idler: u64, coincidences: u64) -> Self {
        Self {
            duration_s,
            singles_signal: Estimate::poisson(signal, duration_s),
            singles_idler: Estimate::poisson(idler, duration_s),
            coincidence_rate: Estimate::poisson(coincidences, duration_s),
            trigger_rate: Estimate::poisson(triggers, duration_s),
        }
    }

    /// Rates quoted per second, with Poisson errors for the given
    /// integration time.
    pub fn from_rates(signal: f64, idler: f64, coincidences: f64, trigger: f64, duration_s: f64) -> Self {
        let est = |r: f64| Estimate::new(r, (r * duration_s).sqrt() / duration_s);
        Self {
            duration_s,
            singles_signal: est(signal),
            singles_idler: est(idler),
            coincidence_rate: est(coincidences),
            trigger_rate: est(trigger),
        }
    }
}

/// Coincidences-to-accidentals ratio `R_C·R_t / (R_s·R_i)` with first-order
/// Poisson error propagation.
pub fn car(rates: &RateReport) -> Result<Estimate, AnalysisError> {
    let RateReport {
        singles_signal: s,
        singles_idler: i,
        coincidence_rate: c,
        trigger_rate: t,
        ..
    } = rates;
    for (name, r) in [("signal singles", s), ("idler singles", i), ("trigger", t)] {
        if !(r.value > 0.0) {
            return Err(AnalysisError::UndefinedRate(name));
        }
    }
    let value = c.value * t.value / (s.value * i.value);
    let rel_sq = [s, i, t].iter().map(|e| e.relative_error().powi(2)).sum::<f64>();
    let error = if c.value > 0.0 {
        value * (rel_sq + c.relative_error().powi(2)).sqrt()
    } else {
        c.error * t.value / (s.value * i.value)
    };
    Ok(Estimate::new(value, error))
}

/// Heralding ratios `(η_s, η_i) = (R_C/R_i, R_C/R_s)`.
pub fn klyshko(rates: &RateReport) -> Result<(Estimate, Estimate), AnalysisError> {
    let c = rates.coincidence_rate;
    let ratio = |singles: Estimate, name: &'static str| {
        if !(singles.value > 0.0) {
            return Err(AnalysisError::UndefinedRate(name));
        }
        let value = c.value / singles.value;
        let error = if c.value > 0.0 {
            value * (c.relative_error().powi(2) + singles.relative_error().powi(2)).sqrt()
        } else {
            c.error / singles.value
        };
        Ok(Estimate::new(value, error))
    };
    Ok((
        ratio(rates.singles_idler, "idler singles")?,
        ratio(rates.singles_signal, "signal singles")?,
    ))
}

/// Largest fringe visibility reachable when accidentals are the only
/// imperfection: `(CAR − 1)/(CAR + 1)`.
pub fn max_visibility_from_car(car_value: f64) -> Result<f64, AnalysisError> {
    if car_value.is_nan() || car_value < 1.0 {
        return Err(AnalysisError::InvalidInput(format!("CAR {car_value} below 1")));
    }
    if car_value.is_infinite() {
        return Ok(1.0);
    }
    Ok((car_value - 1.0) / (car_value + 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn car_of_pure_accidentals_is_one() {
        let r = RateReport::from_rates(1000.0, 2000.0, 1000.0 * 2000.0 / 1e6, 1e6, 10.0);
        assert!((car(&r).unwrap().value - 1.0).abs() < 1e-12);
    }

    #[test]
    fn doubling_singles_quarters_car() {
        let a = RateReport::from_rates(1000.0, 800.0, 40.0, 7.6e7, 1.0);
        let b = RateReport::from_rates(2000.0, 1600.0, 40.0, 7.6e7, 1.0);
        let ratio = car(&a).unwrap().value / car(&b).unwrap().value;
        assert!((ratio - 4.0).abs() < 1e-12);
    }

    #[test]
    fn zero_rates_rejected() {
        let r = RateReport::from_rates(0.0, 800.0, 0.0, 7.6e7, 1.0);
        assert!(matches!(car(&r), Err(AnalysisError::UndefinedRate(_))));
        assert!(klyshko(&r).is_err());
        let r = RateReport::from_rates(10.0, 800.0, 1.0, 0.0, 1.0);
        assert!(car(&r).is_err());
    }

    #[test]
    fn car_error_propagation() {
        // relative errors add in quadrature
        let r = RateReport::from_counts(1.0, 1_000_000, 10_000, 10_000, 100);
        let e = car(&r).unwrap();
        let expected_rel = (1e-6 + 2e-4 + 1e-2f64).sqrt();
        assert!((e.error / e.value - expected_rel).abs() < 1e-12);
    }

    #[test]
    fn visibility_ceiling() {
        assert_eq!(max_visibility_from_car(1.0).unwrap(), 0.0);
        assert_eq!(max_visibility_from_car(f64::INFINITY).unwrap(), 1.0);
        assert!((max_visibility_from_car(1e12).unwrap() - 1.0).abs() < 1e-11);
        assert!(max_visibility_from_car(0.5).is_err());
        assert!(max_visibility_from_car(f64::NAN).is_err());
    }

    #[test]
    fn pure_functions_repeatable() {
        let r = RateReport::from_rates(1210.0, 1090.0, 46.0, 76.2e6, 1.0);
        assert_eq!(car(&r).unwrap(), car(&r).unwrap());
        assert_eq!(klyshko(&r).unwrap(), klyshko(&r).unwrap());
    }
}
