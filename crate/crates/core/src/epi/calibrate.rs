use serde::{Deserialize, Serialize};

use super::{nelder_mead, seir_step, Compartments, NelderMeadConfig, SeirParams};
use crate::error::{Error, Result};

/// Minimum number of observed days for a fit.
pub const MIN_CALIBRATION_DAYS: usize = 14;

/// Upper bound of the exposed seed, as a multiple of the initial infectious
/// fraction.
const MAX_E0_RATIO: f64 = 10.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CalibrationConfig {
    pub nelder_mead: NelderMeadConfig,
    /// Extra solver restarts from the incumbent after the multi-start phase.
    pub restarts: usize,
}

impl Default for CalibrationConfig {
    fn default() -> Self {
        CalibrationConfig {
            nelder_mead: NelderMeadConfig {
                f_tolerance: 1e-20,
                x_tolerance: 1e-10,
                max_iter: 4000,
                ..NelderMeadConfig::default()
            },
            restarts: 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationReport {
    pub beta: f64,
    pub alpha: f64,
    pub gamma: f64,
    /// Initial exposed fraction.
    pub e0: f64,
    pub i0: f64,
    pub r0: f64,
    /// Mean squared residual of cumulative confirmed and removed fractions.
    pub loss: f64,
    pub converged: bool,
    pub iterations: usize,
    /// Set when the data cannot identify the rates (no infection dynamics).
    pub degenerate: bool,
}

impl CalibrationReport {
    pub fn params(&self) -> SeirParams {
        SeirParams {
            beta: self.beta,
            alpha: self.alpha,
            gamma: self.gamma,
        }
    }

    pub fn initial_state(&self) -> Compartments {
        Compartments::new(1.0 - self.e0 - self.i0 - self.r0, self.e0, self.i0, self.r0)
    }
}

/// Runs the dynamics for `days` states (the initial state included). With
/// `per_case_rates`, day `t` creates `per_case_rates[t] * S * I` exposures;
/// otherwise transmission is the constant `beta * S * I`.
pub fn simulate_cumulative(
    params: &SeirParams,
    initial: Compartments,
    per_case_rates: Option<&[f64]>,
    days: usize,
) -> Result<Vec<Compartments>> {
    let mut out = Vec::with_capacity(days);
    let mut state = initial;
    for t in 0..days {
        out.push(state);
        if t + 1 < days {
            let r = match per_case_rates {
                Some(rates) => rates[t.min(rates.len() - 1)] / params.beta,
                None => 1.0,
            };
            state = seir_step(&state, params, r)?;
        }
    }
    Ok(out)
}

fn residual_loss(path: &[Compartments], cum_confirmed: &[f64], cum_removed: &[f64]) -> f64 {
    let t = path.len() as f64;
    path.iter()
        .zip(cum_confirmed)
        .zip(cum_removed)
        .map(|((s, c), r)| (s.confirmed() - c).powi(2) + (s.r - r).powi(2))
        .sum::<f64>()
        / t
}

struct Observations<'a> {
    cum_confirmed: &'a [f64],
    cum_removed: &'a [f64],
    i0: f64,
    r0: f64,
    scale: f64,
}

impl<'a> Observations<'a> {
    fn new(cum_confirmed: &'a [f64], cum_removed: &'a [f64]) -> Result<Self> {
        if cum_confirmed.len() != cum_removed.len() {
            return Err(Error::Shape {
                context: "calibration series",
                expected: cum_confirmed.len(),
                actual: cum_removed.len(),
            });
        }
        if cum_confirmed.len() < MIN_CALIBRATION_DAYS {
            return Err(Error::Window {
                needed: MIN_CALIBRATION_DAYS,
                got: cum_confirmed.len(),
            });
        }
        for &v in cum_confirmed.iter().chain(cum_removed) {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Domain(format!(
                    "calibration observations must be population fractions, got {v}"
                )));
            }
        }
        let r0 = cum_removed[0];
        let i0 = (cum_confirmed[0] - r0).max(0.0);
        let scale = cum_confirmed.iter().cloned().fold(0.0, f64::max).max(1e-12);
        Ok(Observations {
            cum_confirmed,
            cum_removed,
            i0,
            r0,
            scale,
        })
    }

    fn constant(&self) -> bool {
        let c0 = self.cum_confirmed[0];
        let r0 = self.cum_removed[0];
        self.cum_confirmed.iter().all(|&c| c == c0) && self.cum_removed.iter().all(|&r| r == r0)
    }

    fn initial(&self, e0: f64) -> Compartments {
        Compartments::new(1.0 - e0 - self.i0 - self.r0, e0, self.i0, self.r0)
    }

    fn loss(&self, params: &SeirParams, e0: f64, rates: Option<&[f64]>) -> f64 {
        match simulate_cumulative(params, self.initial(e0), rates, self.cum_confirmed.len()) {
            Ok(path) => residual_loss(&path, self.cum_confirmed, self.cum_removed),
            Err(_) => f64::INFINITY,
        }
    }
}

fn in_box(beta: f64, alpha: f64, gamma: f64, e0_ratio: f64) -> bool {
    beta > 0.0
        && beta <= 2.0
        && alpha > 0.0
        && alpha <= 1.0
        && gamma > 0.0
        && gamma <= 1.0
        && (0.0..=MAX_E0_RATIO).contains(&e0_ratio)
}

/// Multi-start Nelder-Mead on a scaled objective, then restarts from the
/// incumbent until it stops improving.
fn multistart<F>(objective: F, starts: &[Vec<f64>], config: &CalibrationConfig) -> Result<(Vec<f64>, f64, bool, usize)>
where
    F: Fn(&[f64]) -> f64,
{
    let mut best: Option<(Vec<f64>, f64, bool)> = None;
    let mut iterations = 0;
    for x0 in starts {
        if !objective(x0).is_finite() {
            continue;
        }
        let r = nelder_mead(&objective, x0, &config.nelder_mead)?;
        iterations += r.iterations;
        if best.as_ref().map_or(true, |b| r.fx < b.1) {
            best = Some((r.x, r.fx, r.converged));
        }
    }
    let (mut x, mut fx, mut converged) =
        best.ok_or_else(|| Error::Domain("no feasible calibration starting point".into()))?;
    for _ in 0..config.restarts {
        let r = nelder_mead(&objective, &x, &config.nelder_mead)?;
        iterations += r.iterations;
        let improved = r.fx < fx;
        if r.fx <= fx {
            x = r.x;
            fx = r.fx;
            converged = r.converged;
        }
        if !improved {
            break;
        }
    }
    Ok((x, fx, converged, iterations))
}

/// Fits `(beta, alpha, gamma, E0)` to cumulative confirmed and removed
/// fractions with constant transmission.
pub fn calibrate(cum_confirmed: &[f64], cum_removed: &[f64], config: &CalibrationConfig) -> Result<CalibrationReport> {
    let obs = Observations::new(cum_confirmed, cum_removed)?;
    let i0 = obs.i0;
    let seeded = i0 > 0.0;
    let objective = |x: &[f64]| {
        let e0_ratio = if seeded { x[3] } else { 0.0 };
        if !in_box(x[0], x[1], x[2], e0_ratio) {
            return f64::INFINITY;
        }
        let p = SeirParams {
            beta: x[0],
            alpha: x[1],
            gamma: x[2],
        };
        obs.loss(&p, e0_ratio * i0, None) / (obs.scale * obs.scale)
    };
    let mut starts = Vec::new();
    for &beta in &[0.15, 0.4, 0.9] {
        for &alpha in &[0.1, 0.3, 0.7] {
            for &gamma in &[0.05, 0.15, 0.4] {
                starts.push(vec![beta, alpha, gamma, 1.0]);
            }
        }
    }
    let (x, fx, converged, iterations) = multistart(objective, &starts, config)?;
    let e0 = if seeded { x[3] * i0 } else { 0.0 };
    Ok(CalibrationReport {
        beta: x[0],
        alpha: x[1],
        gamma: x[2],
        e0,
        i0,
        r0: obs.r0,
        loss: fx * obs.scale * obs.scale,
        converged,
        iterations,
        degenerate: obs.constant() || (i0 <= 0.0 && e0 == 0.0),
    })
}

/// Fits `(alpha, gamma, E0)` with transmission driven by known per-case daily
/// rates (`rates[t] * S * I` exposures on day `t`). `beta` is kept as given;
/// it only scales how the rates are expressed.
pub fn calibrate_rate_driven(
    cum_confirmed: &[f64],
    cum_removed: &[f64],
    rates: &[f64],
    beta: f64,
    config: &CalibrationConfig,
) -> Result<CalibrationReport> {
    let obs = Observations::new(cum_confirmed, cum_removed)?;
    if rates.is_empty() || rates.iter().any(|r| !(*r >= 0.0) || !r.is_finite()) {
        return Err(Error::Domain(
            "per-case rates must be nonempty, finite and nonnegative".into(),
        ));
    }
    let i0 = obs.i0;
    let seeded = i0 > 0.0;
    let objective = |x: &[f64]| {
        let e0_ratio = if seeded { x[2] } else { 0.0 };
        if !in_box(beta, x[0], x[1], e0_ratio) {
            return f64::INFINITY;
        }
        let p = SeirParams {
            beta,
            alpha: x[0],
            gamma: x[1],
        };
        obs.loss(&p, e0_ratio * i0, Some(rates)) / (obs.scale * obs.scale)
    };
    let mut starts = Vec::new();
    for &alpha in &[0.1, 0.25, 0.6] {
        for &gamma in &[0.05, 0.15, 0.4] {
            starts.push(vec![alpha, gamma, 1.0]);
        }
    }
    let (x, fx, converged, iterations) = multistart(objective, &starts, config)?;
    let e0 = if seeded { x[2] * i0 } else { 0.0 };
    Ok(CalibrationReport {
        beta,
        alpha: x[0],
        gamma: x[1],
        e0,
        i0,
        r0: obs.r0,
        loss: fx * obs.scale * obs.scale,
        converged,
        iterations,
        degenerate: obs.constant() || (i0 <= 0.0 && e0 == 0.0),
    })
}
