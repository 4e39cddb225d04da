use std::io::Write;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::{Bundle, Exogenous, SimState};
use crate::data::N_MOBILITY;
use crate::epi::{seir_step, Compartments, MAX_INCUBATION_DAYS};
use crate::error::{Error, Result};
use crate::forecast::WINDOW;

/// One simulated day.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub date: NaiveDate,
    pub mobility: [f64; N_MOBILITY],
    /// Percent.
    pub unemployment: f64,
    /// Multiplier on the baseline transmission term.
    pub r: f64,
    /// Compartment fractions at the end of the day.
    pub compartments: Compartments,
    /// Effective reproduction number, from the susceptible share at the start
    /// of the day.
    pub rt: f64,
    /// `(I + R) * population` at the end of the day.
    pub cum_confirmed: f64,
    /// Confirmations reported on the day after incubation.
    pub new_confirmed: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub records: Vec<TrajectoryRecord>,
    pub final_state: SimState,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn column(&self, f: impl Fn(&TrajectoryRecord) -> f64) -> Vec<f64> {
        self.records.iter().map(f).collect()
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["date".to_string()];
        header.extend((0..N_MOBILITY).map(|k| format!("m{k}")));
        header.extend(["u", "r", "S", "E", "I", "R", "Rt", "cum_confirmed", "new_confirmed"].map(String::from));
        w.write_record(&header)?;
        for rec in &self.records {
            let c = rec.compartments;
            let mut row = vec![rec.date.to_string()];
            row.extend(rec.mobility.iter().map(f64::to_string));
            row.extend(
                [
                    rec.unemployment,
                    rec.r,
                    c.s,
                    c.e,
                    c.i,
                    c.r,
                    rec.rt,
                    rec.cum_confirmed,
                    rec.new_confirmed,
                ]
                .iter()
                .map(f64::to_string),
            );
            w.write_record(&row)?;
        }
        w.flush().map_err(|e| Error::io("trajectory csv", e))
    }
}

/// Runs the closed loop for `horizon` days from `init`.
///
/// Each day the mobility model reads the last week of (simulated) cases and
/// unemployment plus the day's policy and protest indices; the unemployment
/// and infection models read the resulting week of mobility; the SEIR state
/// advances with the predicted infection rate; and the day's new infections
/// are spread over future confirmation days with the incubation
/// distribution. Predictions are appended to the histories that feed the
/// next day.
pub fn iterate(bundle: &Bundle, init: &SimState, horizon: usize, exo: &Exogenous) -> Result<Trajectory> {
    init.validate()?;
    bundle.seir.validate()?;
    if exo.policy.len() < horizon || exo.blm.len() < horizon {
        return Err(Error::Range(format!(
            "exogenous paths cover {} days, horizon is {horizon}",
            exo.policy.len().min(exo.blm.len())
        )));
    }
    let pop = bundle.population();
    let demo = bundle.demographics_array();
    let pmf = bundle.incubation.pmf();
    let mut state = init.clone();
    let mut records = Vec::with_capacity(horizon);
    for t in 0..horizon {
        let date = state
            .date
            .succ_opt()
            .ok_or_else(|| Error::Range(format!("no day after {}", state.date)))?;
        let abort = |state: &SimState, source: Error| Error::Aborted {
            date: date.to_string(),
            last: Box::new(state.compartments),
            source: Box::new(source),
        };
        let cases = &state.cases[state.cases.len() - WINDOW..];
        let unemployment: Vec<f64> = state.unemployment[state.unemployment.len() - WINDOW..]
            .iter()
            .map(|u| u - exo.unemployment_shift)
            .collect();
        let m = bundle
            .mobility
            .predict(cases, &unemployment, &demo, &exo.policy[t], exo.blm[t])
            .map_err(|e| abort(&state, e))?;
        state.mobility.push(m);
        let window = &state.mobility[state.mobility.len() - WINDOW..];
        let lag = state.unemployment[state.unemployment.len() - WINDOW];
        let u = bundle
            .unemployment
            .predict(window, &demo, lag)
            .map_err(|e| abort(&state, e))?;
        let rate = bundle.infection.predict(window, &demo).map_err(|e| abort(&state, e))?;
        let r = rate / bundle.seir.beta;
        let before = state.compartments;
        let next = seir_step(&before, &bundle.seir, r).map_err(|e| abort(&state, e))?;
        let infections = rate * before.s * before.i * pop;
        let new_confirmed = state.pending[0];
        state.pending.rotate_left(1);
        state.pending[MAX_INCUBATION_DAYS - 1] = 0.0;
        for (slot, p) in state.pending.iter_mut().zip(&pmf) {
            *slot += infections * p;
        }
        state.compartments = next;
        state.unemployment.push(u);
        state.cases.push(new_confirmed);
        state.date = date;
        records.push(TrajectoryRecord {
            date,
            mobility: m,
            unemployment: u,
            r,
            compartments: next,
            rt: rate * before.s / bundle.seir.gamma,
            cum_confirmed: next.confirmed() * pop,
            new_confirmed,
        });
    }
    Ok(Trajectory {
        records,
        final_state: state,
    })
}
