use super::{Compartments, IncubationDist, SeirParams};
use crate::error::{Error, Result};

/// Running active-case count: cumulative confirmed minus recovered minus dead.
/// Negative values (reporting noise) are clipped to zero.
pub fn active_cases(new_confirmed: &[f64], new_recovered: &[f64], new_dead: &[f64]) -> Vec<f64> {
    let mut running = 0.0;
    let mut clipped = 0usize;
    let out = new_confirmed
        .iter()
        .zip(new_recovered)
        .zip(new_dead)
        .map(|((c, r), d)| {
            running += c - r - d;
            if running < 0.0 {
                clipped += 1;
                0.0
            } else {
                running
            }
        })
        .collect();
    if clipped > 0 {
        log::warn!("active case count went negative on {clipped} day(s); clipped to zero");
    }
    out
}

/// New infections on a day with `active` infectious cases and per-case daily
/// infection rate `r_hat`.
pub fn daily_new_infections(active: f64, r_hat: f64) -> f64 {
    if active < 0.0 {
        log::warn!("negative active case count {active}; treating as zero");
        return 0.0;
    }
    active * r_hat
}

/// Training target for the infection-rate model: confirmations are shifted
/// back by the rounded mean incubation period to date the infections, then
/// divided by that day's active cases. The result is `shift` days shorter
/// than the inputs. Days with no active cases carry the previous value.
pub fn infer_true_infection_rate(new_confirmed: &[f64], active: &[f64], dist: &IncubationDist) -> Result<Vec<f64>> {
    if new_confirmed.len() != active.len() {
        return Err(Error::Shape {
            context: "infection-rate inputs",
            expected: new_confirmed.len(),
            actual: active.len(),
        });
    }
    dist.validate()?;
    let shift = dist.mean().round() as usize;
    if new_confirmed.len() <= shift {
        return Err(Error::Window {
            needed: shift + 1,
            got: new_confirmed.len(),
        });
    }
    let mut out = Vec::with_capacity(new_confirmed.len() - shift);
    let mut last = 0.0;
    for t in 0..new_confirmed.len() - shift {
        if active[t] > 0.0 {
            last = (new_confirmed[t + shift] / active[t]).max(0.0);
        }
        out.push(last);
    }
    Ok(out)
}

/// Effective reproduction number `r_t * beta * S / gamma`.
pub fn effective_r(state: &Compartments, params: &SeirParams, r_t: f64) -> f64 {
    r_t * params.beta * state.s / params.gamma
}
