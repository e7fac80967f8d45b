//! Least-squares fits of power series and interference fringes.

use std::f64::consts::{PI, TAU};

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use super::{car, klyshko, AnalysisError, Estimate, RateReport};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Weighting {
    /// Ordinary least squares; errors from the residual scatter.
    #[default]
    Unweighted,
    /// Inverse-variance weights from the Poisson errors of each point.
    Poisson,
}

/// Straight-line fit `y = slope·x + intercept`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub slope: Estimate,
    pub intercept: Estimate,
    pub n_points: usize,
}

/// Weighted (`sigma` given) or ordinary least-squares line fit.
pub fn linear_fit(x: &[f64], y: &[f64], sigma: Option<&[f64]>) -> Result<LinearFit, AnalysisError> {
    let n = x.len();
    if n != y.len() || sigma.is_some_and(|s| s.len() != n) {
        return Err(AnalysisError::InvalidInput("mismatched fit inputs".into()));
    }
    if n < 2 {
        return Err(AnalysisError::InsufficientPoints { needed: 2, got: n });
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(AnalysisError::InvalidInput("non-finite fit input".into()));
    }
    let weights: Vec<f64> = match sigma {
        Some(s) => {
            if s.iter().any(|e| !(e.is_finite() && *e > 0.0)) {
                return Err(AnalysisError::InvalidInput("weighted fit needs positive errors".into()));
            }
            s.iter().map(|e| 1.0 / (e * e)).collect()
        }
        None => vec![1.0; n],
    };
    let sw: f64 = weights.iter().sum();
    let xm = weights.iter().zip(x).map(|(w, x)| w * x).sum::<f64>() / sw;
    let ym = weights.iter().zip(y).map(|(w, y)| w * y).sum::<f64>() / sw;
    let sxx: f64 = weights.iter().zip(x).map(|(w, x)| w * (x - xm).powi(2)).sum();
    let sxy: f64 = (0..n).map(|k| weights[k] * (x[k] - xm) * (y[k] - ym)).sum();
    let span = x.iter().fold(0.0f64, |m, v| m.max((v - xm).abs()));
    if sxx <= 1e-24 * sw * xm.abs().max(1.0).powi(2) || span == 0.0 {
        return Err(AnalysisError::DegenerateAbscissae);
    }
    let slope = sxy / sxx;
    let intercept = ym - slope * xm;
    let (var_slope, var_intercept) = match sigma {
        Some(_) => (1.0 / sxx, 1.0 / sw + xm * xm / sxx),
        None => {
            let ssr: f64 = (0..n).map(|k| (y[k] - intercept - slope * x[k]).powi(2)).sum();
            let s2 = if n > 2 { ssr / (n - 2) as f64 } else { 0.0 };
            (s2 / sxx, s2 * (1.0 / n as f64 + xm * xm / sxx))
        }
    };
    Ok(LinearFit {
        slope: Estimate::new(slope, var_slope.sqrt()),
        intercept: Estimate::new(intercept, var_intercept.sqrt()),
        n_points: n,
    })
}

/// Rates measured at one pump power.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerPoint {
    pub pump_power_w: f64,
    pub rates: RateReport,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerSeriesOptions {
    pub weighting: Weighting,
    /// Points below this power are left out of the Klyshko intercept fit,
    /// where background dominates the singles.
    pub klyshko_min_power_w: f64,
}

impl Default for PowerSeriesOptions {
    fn default() -> Self {
        Self {
            weighting: Weighting::Unweighted,
            klyshko_min_power_w: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerSeriesFit {
    /// Coincidence rate against pump power; the slope is the brightness in
    /// counts/s/W.
    pub brightness: LinearFit,
    /// Heralding ratio of the signal arm against pump power; the intercept
    /// is the total collection efficiency.
    pub klyshko_signal: LinearFit,
    pub klyshko_idler: LinearFit,
    /// `ln CAR` against `ln P`; slope −1 for strictly linear rates.
    pub car_loglog: LinearFit,
}

impl PowerSeriesFit {
    pub fn brightness_per_mw(&self) -> Estimate {
        Estimate::new(self.brightness.slope.value * 1e-3, self.brightness.slope.error * 1e-3)
    }
}

pub fn power_series_fit(
    points: &[PowerPoint],
    options: &PowerSeriesOptions,
) -> Result<PowerSeriesFit, AnalysisError> {
    let mut distinct: Vec<f64> = points.iter().map(|p| p.pump_power_w).collect();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    if distinct.len() < 3 {
        return Err(AnalysisError::InsufficientPoints {
            needed: 3,
            got: distinct.len(),
        });
    }
    if points.iter().any(|p| !(p.pump_power_w > 0.0)) {
        return Err(AnalysisError::InvalidInput("pump powers must be positive".into()));
    }
    let weighted = options.weighting == Weighting::Poisson;
    let fit = |x: &[f64], y: &[Estimate]| {
        let v: Vec<f64> = y.iter().map(|e| e.value).collect();
        let s: Vec<f64> = y.iter().map(|e| e.error).collect();
        linear_fit(x, &v, weighted.then_some(s.as_slice()))
    };

    let powers: Vec<f64> = points.iter().map(|p| p.pump_power_w).collect();
    let coinc: Vec<Estimate> = points.iter().map(|p| p.rates.coincidence_rate).collect();
    let brightness = fit(&powers, &coinc)?;

    let kept: Vec<&PowerPoint> = points
        .iter()
        .filter(|p| p.pump_power_w >= options.klyshko_min_power_w)
        .collect();
    let k_powers: Vec<f64> = kept.iter().map(|p| p.pump_power_w).collect();
    let heralds = kept
        .iter()
        .map(|p| klyshko(&p.rates))
        .collect::<Result<Vec<_>, _>>()?;
    let (ks, ki): (Vec<Estimate>, Vec<Estimate>) = heralds.into_iter().unzip();
    let klyshko_signal = fit(&k_powers, &ks)?;
    let klyshko_idler = fit(&k_powers, &ki)?;

    let log_p: Vec<f64> = powers.iter().map(|p| p.ln()).collect();
    let log_car = points
        .iter()
        .map(|p| {
            let c = car(&p.rates)?;
            if !(c.value > 0.0) {
                return Err(AnalysisError::UndefinedRate("coincidences"));
            }
            Ok(Estimate::new(c.value.ln(), c.relative_error()))
        })
        .collect::<Result<Vec<_>, AnalysisError>>()?;
    let car_loglog = fit(&log_p, &log_car)?;

    Ok(PowerSeriesFit {
        brightness,
        klyshko_signal,
        klyshko_idler,
        car_loglog,
    })
}

/// Coincidence count at one interferometer phase setting.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FringePoint {
    pub phase_rad: f64,
    pub counts: u64,
    pub integration_s: f64,
}

/// Phase scan of coincidence counts.
///
/// Requires at least five distinct phases (mod 2π) and no gap wider than
/// a quarter period around the circle, so every quadrant of the fringe is
/// sampled.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FringeScan {
    pub points: Vec<FringePoint>,
}

impl FringeScan {
    pub const MIN_PHASES: usize = 5;
    pub const MAX_GAP_RAD: f64 = PI / 2.0;

    pub fn new(points: Vec<FringePoint>) -> Result<Self, AnalysisError> {
        let scan = Self { points };
        scan.validate()?;
        Ok(scan)
    }

    pub fn validate(&self) -> Result<(), AnalysisError> {
        if self
            .points
            .iter()
            .any(|p| !p.phase_rad.is_finite() || !(p.integration_s > 0.0))
        {
            return Err(AnalysisError::InvalidInput(
                "fringe points need finite phases and positive integration times".into(),
            ));
        }
        let mut phases: Vec<f64> = self.points.iter().map(|p| p.phase_rad.rem_euclid(TAU)).collect();
        phases.sort_by(f64::total_cmp);
        phases.dedup_by(|a, b| (*a - *b).abs() < 1e-9);
        if phases.len() > 1 && (phases[0] + TAU - phases[phases.len() - 1]) < 1e-9 {
            phases.pop();
        }
        if phases.len() < Self::MIN_PHASES {
            return Err(AnalysisError::InsufficientPoints {
                needed: Self::MIN_PHASES,
                got: phases.len(),
            });
        }
        let wrap_gap = phases[0] + TAU - phases[phases.len() - 1];
        let max_gap = phases.windows(2).map(|w| w[1] - w[0]).fold(wrap_gap, f64::max);
        if max_gap > Self::MAX_GAP_RAD + 1e-9 {
            return Err(AnalysisError::InsufficientPhaseCoverage { max_gap_rad: max_gap });
        }
        Ok(())
    }
}

/// Parameters of `R(φ) = A·(1 − V·cos(φ + φ₀))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FringeFit {
    pub visibility: Estimate,
    pub phase_offset: Estimate,
    /// Mean rate `A`, in counts per second.
    pub amplitude: Estimate,
    pub weighting: Weighting,
}

impl FringeFit {
    pub fn model(&self, phase: f64) -> f64 {
        self.amplitude.value * (1.0 - self.visibility.value * (phase + self.phase_offset.value).cos())
    }
}

/// Fits the fringe through the linear model `a + b·cos φ + c·sin φ` and
/// maps to `(A, V, φ₀)` with first-order error propagation.
pub fn fit_fringe(scan: &FringeScan, weighting: Weighting) -> Result<FringeFit, AnalysisError> {
    scan.validate()?;
    let n = scan.points.len();
    let mut xtx = Matrix3::<f64>::zeros();
    let mut xty = Vector3::<f64>::zeros();
    let rows: Vec<(Vector3<f64>, f64, f64)> = scan
        .points
        .iter()
        .map(|p| {
            let x = Vector3::new(1.0, p.phase_rad.cos(), p.phase_rad.sin());
            let y = p.counts as f64 / p.integration_s;
            let var = (p.counts.max(1)) as f64 / (p.integration_s * p.integration_s);
            let w = match weighting {
                Weighting::Unweighted => 1.0,
                Weighting::Poisson => 1.0 / var,
            };
            (x, y, w)
        })
        .collect();
    for (x, y, w) in &rows {
        xtx += x * x.transpose() * *w;
        xty += x * (*y * *w);
    }
    let inv = xtx
        .try_inverse()
        .ok_or(AnalysisError::DegenerateAbscissae)?;
    let beta = inv * xty;
    let cov = match weighting {
        Weighting::Poisson => inv,
        Weighting::Unweighted => {
            let ssr: f64 = rows.iter().map(|(x, y, _)| (y - x.dot(&beta)).powi(2)).sum();
            let s2 = if n > 3 { ssr / (n - 3) as f64 } else { 0.0 };
            inv * s2
        }
    };
    let (a, b, c) = (beta[0], beta[1], beta[2]);
    if !(a > 0.0) {
        return Err(AnalysisError::InvalidInput("fringe mean rate is not positive".into()));
    }
    let r = b.hypot(c);
    let v_raw = r / a;
    let grad_v = if r > 0.0 {
        Vector3::new(-r / (a * a), b / (r * a), c / (r * a))
    } else {
        Vector3::new(0.0, 0.0, 0.0)
    };
    let v_err = if r > 0.0 {
        (grad_v.transpose() * cov * grad_v)[(0, 0)].max(0.0).sqrt()
    } else {
        // visibility at the boundary: use the noise on the modulation depth
        ((cov[(1, 1)] + cov[(2, 2)]) / 2.0).max(0.0).sqrt() / a
    };
    let (phi0, phi_err) = if r > 0.0 {
        let g = Vector3::new(0.0, c / (r * r), -b / (r * r));
        (c.atan2(-b), (g.transpose() * cov * g)[(0, 0)].max(0.0).sqrt())
    } else {
        (0.0, PI)
    };
    Ok(FringeFit {
        visibility: Estimate::new(v_raw.clamp(0.0, 1.0), v_err),
        phase_offset: Estimate::new(phi0, phi_err),
        amplitude: Estimate::new(a, cov[(0, 0)].max(0.0).sqrt()),
        weighting,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn synthetic(v: f64, phi0: f64, a: f64, n: usize) -> FringeScan {
        let points = (0..n)
            .map(|k| {
                let phase = TAU * k as f64 / n as f64;
                FringePoint {
                    phase_rad: phase,
                    counts: (a * (1.0 - v * (phase + phi0).cos())).round() as u64,
                    integration_s: 1.0,
                }
            })
            .collect();
        FringeScan::new(points).unwrap()
    }

    #[test]
    fn exact_line_recovered() {
        let x = [1e-5, 2e-5, 4e-5, 8e-5];
        let y: Vec<f64> = x.iter().map(|p| 750e3 * p).collect();
        let f = linear_fit(&x, &y, None).unwrap();
        assert!((f.slope.value - 750e3).abs() < 1e-6);
        assert!(f.slope.error < 1e-6);
        assert!(f.intercept.value.abs() < 1e-9);
    }

    #[test]
    fn degenerate_abscissae_rejected() {
        assert!(matches!(
            linear_fit(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0], None),
            Err(AnalysisError::DegenerateAbscissae)
        ));
    }

    #[test]
    fn weighted_line_matches_textbook() {
        // y = 2x + 1 with unequal errors: exact data, exact answer
        let x = [0.0, 1.0, 2.0, 3.0];
        let y = [1.0, 3.0, 5.0, 7.0];
        let s = [0.1, 0.2, 0.3, 0.4];
        let f = linear_fit(&x, &y, Some(&s)).unwrap();
        assert!((f.slope.value - 2.0).abs() < 1e-12);
        assert!((f.intercept.value - 1.0).abs() < 1e-12);
        // var(slope) = S / (S Sxx - Sx^2) computed by hand
        let w: Vec<f64> = s.iter().map(|e| 1.0 / (e * e)).collect();
        let sw: f64 = w.iter().sum();
        let sx: f64 = w.iter().zip(&x).map(|(w, x)| w * x).sum();
        let sxx: f64 = w.iter().zip(&x).map(|(w, x)| w * x * x).sum();
        let expected = (sw / (sw * sxx - sx * sx)).sqrt();
        assert!((f.slope.error - expected).abs() < 1e-12);
    }

    #[test]
    fn noiseless_fringe_recovered() {
        let scan = synthetic(0.902, 0.4, 1e6, 12);
        let f = fit_fringe(&scan, Weighting::Unweighted).unwrap();
        assert!((f.visibility.value - 0.902).abs() < 1e-6);
        assert!((f.phase_offset.value - 0.4).abs() < 1e-5);
        assert!((f.amplitude.value - 1e6).abs() < 1.0);
    }

    #[test]
    fn flat_fringe_has_zero_visibility() {
        let scan = synthetic(0.0, 0.0, 5000.0, 8);
        let f = fit_fringe(&scan, Weighting::Poisson).unwrap();
        assert!(f.visibility.value < 1e-12);
    }

    #[test]
    fn visibility_clamped_to_one() {
        let points = (0..8)
            .map(|k| {
                let phase = TAU * k as f64 / 8.0;
                let rate = 100.0 * (1.0 - 1.2 * phase.cos());
                FringePoint {
                    phase_rad: phase,
                    counts: rate.max(0.0) as u64,
                    integration_s: 1.0,
                }
            })
            .collect();
        let f = fit_fringe(&FringeScan::new(points).unwrap(), Weighting::Unweighted).unwrap();
        assert!(f.visibility.value <= 1.0);
    }

    #[test]
    fn coverage_requirements() {
        let pts = |phases: &[f64]| {
            phases
                .iter()
                .map(|&p| FringePoint {
                    phase_rad: p,
                    counts: 10,
                    integration_s: 1.0,
                })
                .collect::<Vec<_>>()
        };
        assert!(matches!(
            FringeScan::new(pts(&[0.0, 1.0, 2.0])),
            Err(AnalysisError::InsufficientPoints { needed: 5, got: 3 })
        ));
        // half a period only
        let half: Vec<f64> = (0..6).map(|k| k as f64 * PI / 5.0).collect();
        assert!(matches!(
            FringeScan::new(pts(&half)),
            Err(AnalysisError::InsufficientPhaseCoverage { .. })
        ));
        // 0 and 2π coincide
        let wrapped: Vec<f64> = (0..=4).map(|k| k as f64 * TAU / 4.0).collect();
        assert!(FringeScan::new(pts(&wrapped)).is_err());
        let five: Vec<f64> = (0..5).map(|k| k as f64 * TAU / 5.0).collect();
        assert!(FringeScan::new(pts(&five)).is_ok());
    }

    #[test]
    fn power_series_needs_three_powers() {
        let r = RateReport::from_rates(1000.0, 1000.0, 40.0, 7.6e7, 1.0);
        let pts = [
            PowerPoint { pump_power_w: 1e-5, rates: r },
            PowerPoint { pump_power_w: 2e-5, rates: r },
            PowerPoint { pump_power_w: 2e-5, rates: r },
        ];
        assert!(matches!(
            power_series_fit(&pts, &PowerSeriesOptions::default()),
            Err(AnalysisError::InsufficientPoints { needed: 3, got: 2 })
        ));
    }

    #[test]
    fn exact_power_series() {
        // R_C = 750/s/mW, singles linear, constant heralding
        let pts: Vec<PowerPoint> = [20e-6, 40e-6, 60e-6, 80e-6]
            .iter()
            .map(|&p| {
                let rc = 750e3 * p;
                PowerPoint {
                    pump_power_w: p,
                    rates: RateReport::from_rates(rc / 0.04, rc / 0.035, rc, 76.2e6, 60.0),
                }
            })
            .collect();
        let f = power_series_fit(&pts, &PowerSeriesOptions::default()).unwrap();
        assert!((f.brightness_per_mw().value - 750.0).abs() < 1e-9);
        assert!(f.brightness.slope.error < 1e-6);
        assert!((f.klyshko_signal.intercept.value - 0.035).abs() < 1e-12);
        assert!((f.klyshko_idler.intercept.value - 0.04).abs() < 1e-12);
        assert!((f.car_loglog.slope.value + 1.0).abs() < 1e-9);
    }

    #[test]
    fn low_power_points_excluded_from_klyshko() {
        let mut pts: Vec<PowerPoint> = [20e-6, 40e-6, 60e-6]
            .iter()
            .map(|&p| {
                let rc = 750e3 * p;
                PowerPoint {
                    pump_power_w: p,
                    rates: RateReport::from_rates(rc / 0.04, rc / 0.04, rc, 76.2e6, 60.0),
                }
            })
            .collect();
        // background-dominated point with a depressed ratio
        pts.push(PowerPoint {
            pump_power_w: 2e-6,
            rates: RateReport::from_rates(3000.0, 3000.0, 1.5, 76.2e6, 60.0),
        });
        let opts = PowerSeriesOptions {
            klyshko_min_power_w: 10e-6,
            ..Default::default()
        };
        let f = power_series_fit(&pts, &opts).unwrap();
        assert_eq!(f.klyshko_signal.n_points, 3);
        assert!((f.klyshko_signal.intercept.value - 0.04).abs() < 1e-12);
        let all = power_series_fit(&pts, &PowerSeriesOptions::default()).unwrap();
        assert!((all.klyshko_signal.intercept.value - 0.04).abs() > 1e-3);
    }
}
