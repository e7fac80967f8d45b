use nalgebra::{SymmetricEigen, Vector4};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::bootstrap::BootstrapSummary;
use super::linear::{linear_inversion, lower_factor, project_to_physical};
use super::{MeasurementRecord, TomoError};
use crate::quantum::{bell_phi_plus, chsh_bounds, concurrence, fidelity_to_pure, Complex4x4, DensityMatrix2Q};

const N_PARAMS: usize = 16;
/// Weight of `I/4` mixed into the initial state so its factor is full rank.
const SEED_MIXING: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MleOptions {
    pub max_iterations: usize,
    /// Stop when the per-count objective improves by less than this...
    pub objective_tol: f64,
    /// ...and its gradient norm is below this.
    pub gradient_tol: f64,
    /// Final stopping rule: norm of the projected-gradient step in `ρ`
    /// space, per count.
    pub stationarity_tol: f64,
}

impl Default for MleOptions {
    fn default() -> Self {
        Self {
            max_iterations: 5000,
            objective_tol: 1e-9,
            gradient_tol: 1e-6,
            stationarity_tol: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerDiagnostics {
    pub iterations: usize,
    pub converged: bool,
    /// Poisson deviance per count, `(1/S)·Σ[n ln(n/μ) − n + μ]`, at the end.
    pub objective: f64,
    pub gradient_norm: f64,
    /// `‖σ − P(σ − ∇f)‖` at the end, with `P` the projection onto the
    /// positive semidefinite cone. Zero exactly at the optimum.
    pub stationarity: f64,
    /// Objective after each accepted step, starting with the seed.
    pub objective_trace: Vec<f64>,
    /// `linear-inversion` or `maximally-mixed`.
    pub initialization: String,
}

/// Point estimate with optional Monte-Carlo mean and spread.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metric {
    pub value: f64,
    pub mc_mean: Option<f64>,
    pub mc_std: Option<f64>,
}

impl Metric {
    fn point(value: f64) -> Self {
        Self {
            value,
            mc_mean: None,
            mc_std: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TomographyResult {
    pub rho: DensityMatrix2Q,
    /// `Σ [n ln μ − μ]` at the optimum.
    pub log_likelihood: f64,
    /// Fitted normalization `N`: expected counts are `N · weight · tr(ρ M)`.
    pub normalization: f64,
    pub concurrence: Metric,
    pub fidelity: Metric,
    pub chsh_lower: Metric,
    pub chsh_upper: Metric,
    pub diagnostics: OptimizerDiagnostics,
    pub bootstrap: Option<BootstrapSummary>,
}

impl TomographyResult {
    pub fn converged(&self) -> bool {
        self.diagnostics.converged
    }

    pub fn with_bootstrap(mut self, summary: BootstrapSummary) -> Self {
        let set = |m: &mut Metric, s: &super::bootstrap::MeanStd| {
            m.mc_mean = Some(s.mean);
            m.mc_std = Some(s.std);
        };
        set(&mut self.concurrence, &summary.concurrence);
        set(&mut self.fidelity, &summary.fidelity);
        set(&mut self.chsh_lower, &summary.chsh_lower);
        set(&mut self.chsh_upper, &summary.chsh_upper);
        self.bootstrap = Some(summary);
        self
    }
}

/// Likelihood over the lower-triangular factor `T` of `σ = S·T†T`, with
/// `S` the total count so the parameters stay of order one.
struct Problem {
    kets: Vec<Vector4<Complex64>>,
    weights: Vec<f64>,
    /// `n_k / S`.
    freq: Vec<f64>,
}

impl Problem {
    fn new(record: &MeasurementRecord) -> Self {
        let total = record.total_counts() as f64;
        let e = record.entries();
        Self {
            kets: e.iter().map(|e| e.signal.ket().kronecker(&e.idler.ket())).collect(),
            weights: e.iter().map(|e| e.weight()).collect(),
            freq: e.iter().map(|e| e.count as f64 / total).collect(),
        }
    }

    fn expected(&self, sigma: &Complex4x4) -> Vec<f64> {
        self.kets
            .iter()
            .zip(&self.weights)
            .map(|(v, w)| w * (v.adjoint() * sigma * v)[(0, 0)].re)
            .collect()
    }

    fn objective(&self, x: &[f64; N_PARAMS]) -> f64 {
        let t = unpack(x);
        self.objective_sigma(&(t.adjoint() * t))
    }

    fn objective_sigma(&self, sigma: &Complex4x4) -> f64 {
        let q = self.expected(sigma);
        let mut f = 0.0;
        for (n, q) in self.freq.iter().zip(&q) {
            if *n > 0.0 {
                if *q <= 0.0 {
                    return f64::INFINITY;
                }
                f += n * (n / q).ln() - n;
            }
            f += q;
        }
        f
    }

    /// `f(to) − f(from)` without cancellation against the full objective.
    fn change(&self, from: &Complex4x4, to: &Complex4x4) -> f64 {
        let q = self.expected(from);
        let dq = self.expected(&(to - from));
        let mut d = 0.0;
        for k in 0..q.len() {
            if self.freq[k] > 0.0 {
                if q[k] + dq[k] <= 0.0 {
                    return f64::INFINITY;
                }
                d -= self.freq[k] * (dq[k] / q[k]).ln_1p();
            }
            d += dq[k];
        }
        d
    }

    /// Gradient of the objective with respect to `σ`.
    fn gamma(&self, sigma: &Complex4x4) -> Complex4x4 {
        let q = self.expected(sigma);
        let mut gamma = Complex4x4::zeros();
        for k in 0..self.kets.len() {
            let d = 1.0 - if self.freq[k] > 0.0 { self.freq[k] / q[k] } else { 0.0 };
            let v = &self.kets[k];
            gamma += v * v.adjoint() * Complex64::new(d * self.weights[k], 0.0);
        }
        gamma
    }

    fn gradient(&self, x: &[f64; N_PARAMS]) -> [f64; N_PARAMS] {
        let t = unpack(x);
        let gamma = self.gamma(&(t.adjoint() * t));
        let m = gamma * t.adjoint();
        let mut g = [0.0; N_PARAMS];
        for (i, gi) in g.iter_mut().enumerate().take(4) {
            *gi = 2.0 * m[(i, i)].re;
        }
        for (p, &(r, c)) in OFF_DIAG.iter().enumerate() {
            g[4 + 2 * p] = 2.0 * m[(c, r)].re;
            g[5 + 2 * p] = -2.0 * m[(c, r)].im;
        }
        g
    }
}

const OFF_DIAG: [(usize, usize); 6] = [(1, 0), (2, 0), (2, 1), (3, 0), (3, 1), (3, 2)];

fn unpack(x: &[f64; N_PARAMS]) -> Complex4x4 {
    let mut t = Complex4x4::zeros();
    for i in 0..4 {
        t[(i, i)] = Complex64::new(x[i], 0.0);
    }
    for (p, &(r, c)) in OFF_DIAG.iter().enumerate() {
        t[(r, c)] = Complex64::new(x[4 + 2 * p], x[5 + 2 * p]);
    }
    t
}

fn pack(t: &Complex4x4) -> [f64; N_PARAMS] {
    let mut x = [0.0; N_PARAMS];
    for i in 0..4 {
        x[i] = t[(i, i)].re;
    }
    for (p, &(r, c)) in OFF_DIAG.iter().enumerate() {
        x[4 + 2 * p] = t[(r, c)].re;
        x[5 + 2 * p] = t[(r, c)].im;
    }
    x
}

fn dot(a: &[f64; N_PARAMS], b: &[f64; N_PARAMS]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64; N_PARAMS]) -> f64 {
    dot(a, a).sqrt()
}

/// Initial factor: physical projection of the linear-inversion estimate,
/// scaled so the expected counts add up to the observed total.
fn seed(record: &MeasurementRecord, problem: &Problem) -> ([f64; N_PARAMS], &'static str) {
    let (rho, label) = match linear_inversion(record) {
        Some(m) => (project_to_physical(&m).into_matrix(), "linear-inversion"),
        None => (DensityMatrix2Q::maximally_mixed().into_matrix(), "maximally-mixed"),
    };
    let mixed = rho * Complex64::new(1.0 - SEED_MIXING, 0.0)
        + Complex4x4::identity() * Complex64::new(SEED_MIXING / 4.0, 0.0);
    let scale = 1.0 / problem.expected(&mixed).iter().sum::<f64>();
    let t = lower_factor(&(mixed * Complex64::new(scale, 0.0))).expect("mixed seed is full rank");
    (pack(&t), label)
}

/// Maximum-likelihood two-qubit state for a complete record.
///
/// Minimizes the Poisson deviance over the 16 real parameters of a
/// lower-triangular `T` with `ρ = T†T / tr(T†T)` using BFGS with
/// backtracking, then finishes with projected-gradient steps on `σ` until
/// the stationarity measure drops below `stationarity_tol`. Both phases
/// share `max_iterations`; a run that exhausts it is returned with
/// `converged = false`.
pub fn mle_reconstruct(record: &MeasurementRecord, options: &MleOptions) -> Result<TomographyResult, TomoError> {
    let total = record.total_counts();
    if total == 0 {
        return Err(TomoError::AllZeroCounts);
    }
    let problem = Problem::new(record);
    let (mut x, init) = seed(record, &problem);
    let mut f = problem.objective(&x);
    let mut g = problem.gradient(&x);
    let mut trace = vec![f];
    let mut h = [[0.0; N_PARAMS]; N_PARAMS];
    let reset = |h: &mut [[f64; N_PARAMS]; N_PARAMS], scale: f64| {
        for (i, row) in h.iter_mut().enumerate() {
            row.fill(0.0);
            row[i] = scale;
        }
    };
    reset(&mut h, 1.0);
    let mut fresh = true;
    let mut converged = norm(&g) < options.gradient_tol;
    let mut iterations = 0;

    while !converged && iterations < options.max_iterations {
        iterations += 1;
        let mut p = [0.0; N_PARAMS];
        for i in 0..N_PARAMS {
            p[i] = -dot(&h[i], &g);
        }
        let mut slope = dot(&g, &p);
        if slope >= 0.0 {
            reset(&mut h, 1.0);
            fresh = true;
            p = g.map(|v| -v);
            slope = dot(&g, &p);
        }
        let mut alpha = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let mut xn = x;
            for i in 0..N_PARAMS {
                xn[i] += alpha * p[i];
            }
            let fnew = problem.objective(&xn);
            if fnew <= f + 1e-4 * alpha * slope {
                accepted = Some((xn, fnew));
                break;
            }
            alpha *= 0.5;
        }
        let Some((xn, fnew)) = accepted else {
            if fresh {
                break;
            }
            reset(&mut h, 1.0);
            fresh = true;
            continue;
        };
        let gn = problem.gradient(&xn);
        let mut s = [0.0; N_PARAMS];
        let mut y = [0.0; N_PARAMS];
        for i in 0..N_PARAMS {
            s[i] = xn[i] - x[i];
            y[i] = gn[i] - g[i];
        }
        let sy = dot(&s, &y);
        if sy > 1e-300 {
            if fresh {
                reset(&mut h, sy / dot(&y, &y));
            }
            bfgs_update(&mut h, &s, &y, sy);
            fresh = false;
        }
        let improvement = f - fnew;
        x = xn;
        f = fnew;
        g = gn;
        trace.push(f);
        converged = improvement < options.objective_tol && norm(&g) < options.gradient_tol;
    }
    let t = unpack(&x);
    let budget = options.max_iterations - iterations;
    let (sigma, f, stationarity, extra) = polish(&problem, t.adjoint() * t, f, budget, options.stationarity_tol, &mut trace);
    iterations += extra;
    let converged = stationarity < options.stationarity_tol;

    let tr = sigma.trace().re;
    let rho = DensityMatrix2Q::new(sigma.unscale(tr)).map_err(TomoError::State)?;
    let s = total as f64;
    let mu: Vec<f64> = problem.expected(&sigma).iter().map(|q| q * s).collect();
    let log_likelihood = record
        .entries()
        .iter()
        .zip(&mu)
        .map(|(e, m)| if e.count > 0 { e.count as f64 * m.ln() - m } else { -m })
        .sum();
    let c = concurrence(&rho);
    let (lo, hi) = chsh_bounds(c).map_err(TomoError::State)?;
    Ok(TomographyResult {
        log_likelihood,
        normalization: s * tr,
        concurrence: Metric::point(c),
        fidelity: Metric::point(fidelity_to_pure(&rho, &bell_phi_plus())),
        chsh_lower: Metric::point(lo),
        chsh_upper: Metric::point(hi),
        rho,
        diagnostics: OptimizerDiagnostics {
            iterations,
            converged,
            objective: f,
            gradient_norm: norm(&g),
            stationarity,
            objective_trace: trace,
            initialization: init.to_string(),
        },
        bootstrap: None,
    })
}

fn project_psd(m: &Complex4x4) -> Complex4x4 {
    let e = SymmetricEigen::new((m + m.adjoint()).unscale(2.0));
    let d = e.eigenvalues.map(|l| Complex64::new(l.max(0.0), 0.0));
    e.eigenvectors * Complex4x4::from_diagonal(&d) * e.eigenvectors.adjoint()
}

fn stationarity(problem: &Problem, sigma: &Complex4x4) -> f64 {
    (sigma - project_psd(&(sigma - problem.gamma(sigma)))).norm()
}

/// Accelerated projected gradient on `σ` itself, started from the factored
/// solution. The factor parametrization converges slowly when the optimum
/// is rank deficient; this finishes the job there. Monotone: a step that
/// does not lower the objective restarts the momentum instead.
fn polish(
    problem: &Problem,
    mut x: Complex4x4,
    mut fx: f64,
    budget: usize,
    tol: f64,
    trace: &mut Vec<f64>,
) -> (Complex4x4, f64, f64, usize) {
    let mut stat = stationarity(problem, &x);
    let mut y = x;
    let mut step = 1.0;
    let mut t = 1.0f64;
    let mut it = 0;
    while stat >= tol && it < budget {
        it += 1;
        let gy = problem.gamma(&y);
        let z = loop {
            let z = project_psd(&(y - gy * Complex64::new(step, 0.0)));
            let d = z - y;
            let model = (gy.adjoint() * d).trace().re + d.norm_squared() / (2.0 * step);
            if problem.change(&y, &z) <= model || step < 1e-20 {
                break z;
            }
            step *= 0.5;
        };
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        let dz = problem.change(&x, &z);
        if dz <= 0.0 {
            let prev = x;
            x = z;
            fx += dz;
            trace.push(fx);
            y = x + (x - prev) * Complex64::new((t - 1.0) / t_next, 0.0);
            t = t_next;
            if !problem.change(&x, &y).is_finite() {
                y = x;
                t = 1.0;
            }
        } else {
            y = x;
            t = 1.0;
        }
        step *= 1.25;
        stat = stationarity(problem, &x);
    }
    (x, fx, stat, it)
}

fn bfgs_update(h: &mut [[f64; N_PARAMS]; N_PARAMS], s: &[f64; N_PARAMS], y: &[f64; N_PARAMS], sy: f64) {
    let rho = 1.0 / sy;
    let mut hy = [0.0; N_PARAMS];
    for i in 0..N_PARAMS {
        hy[i] = dot(&h[i], y);
    }
    let yhy = dot(y, &hy);
    for i in 0..N_PARAMS {
        for j in 0..N_PARAMS {
            h[i][j] += -rho * (hy[i] * s[j] + s[i] * hy[j]) + (rho * rho * yhy + rho) * s[i] * s[j];
        }
    }
}
