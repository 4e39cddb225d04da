use serde::{Deserialize, Serialize};

use super::{iterate, Bundle, Exogenous, SimState};
use crate::data::{DailyRecord, Demographics, Panel, N_DEMOGRAPHICS, N_MOBILITY};
use crate::epi::{
    calibrate, calibrate_rate_driven, infer_true_infection_rate, simulate_cumulative, CalibrationConfig,
    CalibrationReport, IncubationDist,
};
use crate::error::{Error, Result};
use crate::forecast::{
    Architecture, InfectionModel, InfectionSample, MobilityModel, MobilitySample, UnemploymentModel,
    UnemploymentSample, WINDOW,
};
use crate::nn::{chronological_split, TrainConfig, TrainReport};

/// Shortest panel joint training accepts: eight weeks.
pub const MIN_TRAIN_DAYS: usize = 56;

/// Modules whose weights stay fixed during joint training.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct Freeze {
    pub mobility: bool,
    pub unemployment: bool,
    pub infection: bool,
}

impl Freeze {
    pub fn all() -> Self {
        Freeze {
            mobility: true,
            unemployment: true,
            infection: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct JointConfig {
    pub architecture: Architecture,
    pub mobility: TrainConfig,
    pub unemployment: TrainConfig,
    pub infection: TrainConfig,
    pub calibration: CalibrationConfig,
    pub incubation: IncubationDist,
    pub max_sweeps: usize,
    /// Sweeps without a validation improvement before stopping.
    pub sweep_patience: usize,
    /// Trailing share of the panel used to validate each sweep in closed loop.
    pub validation_fraction: f64,
    /// Train each module on the other modules' predictions (fitted case
    /// counts, predicted unemployment and mobility) instead of observed inputs.
    pub coupled_inputs: bool,
    /// A sweep whose validation loss exceeds this multiple of the first
    /// sweep's is treated as divergence.
    pub divergence_factor: f64,
    pub freeze: Freeze,
    pub seed: u64,
}

impl Default for JointConfig {
    fn default() -> Self {
        JointConfig {
            architecture: Architecture::default(),
            mobility: TrainConfig::mobility(),
            unemployment: TrainConfig::unemployment(),
            infection: TrainConfig::infection(),
            calibration: CalibrationConfig::default(),
            incubation: IncubationDist::default(),
            max_sweeps: 4,
            sweep_patience: 1,
            validation_fraction: 0.2,
            coupled_inputs: true,
            divergence_factor: 10.0,
            freeze: Freeze::default(),
            seed: 0,
        }
    }
}

impl JointConfig {
    pub fn validate(&self) -> Result<()> {
        self.architecture.validate()?;
        for c in [&self.mobility, &self.unemployment, &self.infection] {
            c.validate()?;
        }
        self.incubation.validate()?;
        if self.max_sweeps == 0 || self.sweep_patience == 0 {
            return Err(Error::Domain("max_sweeps and sweep_patience must be at least 1".into()));
        }
        if !(self.validation_fraction > 0.0 && self.validation_fraction < 1.0) {
            return Err(Error::Domain("validation_fraction must lie in (0, 1)".into()));
        }
        if !(self.divergence_factor > 1.0) {
            return Err(Error::Domain("divergence_factor must exceed 1".into()));
        }
        Ok(())
    }
}

/// Training record of one sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRecord {
    pub validation_loss: f64,
    pub unemployment: Option<TrainReport>,
    pub mobility: Option<Vec<TrainReport>>,
    pub infection: Option<TrainReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointOutcome {
    /// Bundle from the sweep with the lowest validation loss.
    pub bundle: Bundle,
    pub calibration: CalibrationReport,
    pub sweeps: Vec<SweepRecord>,
    pub best_sweep: usize,
}

impl JointOutcome {
    pub fn validation_history(&self) -> Vec<f64> {
        self.sweeps.iter().map(|s| s.validation_loss).collect()
    }
}

/// Observed series of the fitting segment and the targets derived from it.
struct FitData<'a> {
    records: &'a [DailyRecord],
    mobility: Vec<[f64; N_MOBILITY]>,
    unemployment: Vec<f64>,
    cases: Vec<f64>,
    /// Daily confirmations implied by the fitted SEIR path.
    fitted_cases: Vec<f64>,
    /// Infection rate per susceptible-infectious product.
    rates: Vec<f64>,
}

fn mobility_samples(data: &FitData, cases: &[f64], unemployment: &[f64]) -> Vec<MobilitySample> {
    (WINDOW..data.records.len())
        .map(|t| MobilitySample {
            cases: cases[t - WINDOW..t].to_vec(),
            unemployment: unemployment[t - WINDOW..t].to_vec(),
            policy: data.records[t].policy,
            blm: data.records[t].blm,
            target: data.mobility[t],
        })
        .collect()
}

fn unemployment_samples(data: &FitData, mobility: &[[f64; N_MOBILITY]]) -> Vec<UnemploymentSample> {
    (WINDOW..data.records.len())
        .map(|t| UnemploymentSample {
            mobility: mobility[t + 1 - WINDOW..=t].to_vec(),
            lag: data.unemployment[t - WINDOW],
            target: data.unemployment[t],
        })
        .collect()
}

fn infection_samples(data: &FitData, mobility: &[[f64; N_MOBILITY]]) -> Vec<InfectionSample> {
    (WINDOW - 1..data.rates.len())
        .map(|t| InfectionSample {
            mobility: mobility[t + 1 - WINDOW..=t].to_vec(),
            target: data.rates[t],
        })
        .collect()
}

/// One-step-ahead unemployment on observed lags; early days keep observations.
fn predicted_unemployment(
    model: &UnemploymentModel,
    data: &FitData,
    mobility: &[[f64; N_MOBILITY]],
    demo: &[f64; N_DEMOGRAPHICS],
) -> Result<Vec<f64>> {
    let mut out = data.unemployment.clone();
    for t in WINDOW..out.len() {
        out[t] = model.predict(&mobility[t + 1 - WINDOW..=t], demo, data.unemployment[t - WINDOW])?;
    }
    Ok(out)
}

/// One-step-ahead mobility on the given inputs; early days keep observations.
fn predicted_mobility(
    model: &MobilityModel,
    data: &FitData,
    cases: &[f64],
    unemployment: &[f64],
    demo: &[f64; N_DEMOGRAPHICS],
) -> Result<Vec<[f64; N_MOBILITY]>> {
    let mut out = data.mobility.clone();
    for t in WINDOW..out.len() {
        let r = &data.records[t];
        out[t] = model.predict(
            &cases[t - WINDOW..t],
            &unemployment[t - WINDOW..t],
            demo,
            &r.policy,
            r.blm,
        )?;
    }
    Ok(out)
}

/// Closed-loop loss over panel rows `start..`: squared percentage error of
/// cumulative confirmed cases plus squared unemployment error (percentage
/// points), averaged over days.
pub fn closed_loop_loss(bundle: &Bundle, panel: &Panel, start: usize) -> Result<f64> {
    let horizon = panel.len() - start;
    let state = SimState::from_panel(bundle, panel, start)?;
    let traj = iterate(bundle, &state, horizon, &Exogenous::from_panel(panel, start, horizon)?)?;
    let total: f64 = traj
        .records
        .iter()
        .zip(&panel.records[start..])
        .map(|(p, o)| {
            let rel = 100.0 * (p.cum_confirmed - o.cum_confirmed) / o.cum_confirmed.max(1.0);
            rel * rel + (p.unemployment - o.unemployment).powi(2)
        })
        .sum();
    Ok(total / horizon.max(1) as f64)
}

fn seeded(config: &TrainConfig, offset: u64) -> TrainConfig {
    TrainConfig {
        seed: config.seed.wrapping_add(offset),
        ..config.clone()
    }
}

/// Alternating training of the coupled model.
///
/// The SEIR parameters are fitted once to the cumulative counts, first with
/// constant transmission and then driven by the inferred daily infection
/// rates. Each sweep then trains the unemployment model (on predicted
/// mobility once available), the mobility model (on the fitted case counts
/// and predicted unemployment) and the infection model (on predicted
/// mobility), and scores the resulting bundle by running the closed loop over
/// the validation segment. Sweeps warm-start from the previous one and stop
/// once the validation loss fails to improve for `sweep_patience` sweeps.
pub fn joint_train(
    panel: &Panel,
    demographics: &Demographics,
    config: &JointConfig,
    init: Option<&Bundle>,
) -> Result<JointOutcome> {
    config.validate()?;
    demographics.validate()?;
    if panel.len() < MIN_TRAIN_DAYS {
        return Err(Error::Range(format!(
            "joint training needs at least {MIN_TRAIN_DAYS} days, got {}",
            panel.len()
        )));
    }
    let frozen = config.freeze.mobility || config.freeze.unemployment || config.freeze.infection;
    if frozen && init.is_none() {
        return Err(Error::Domain("frozen modules need an initial bundle".into()));
    }
    let (fit, val) = chronological_split(panel.len(), config.validation_fraction)?;
    if val.len() < 2 || fit.len() < 3 * WINDOW {
        return Err(Error::Range("validation or fitting segment too short".into()));
    }
    let pop = demographics.population;
    let demo = demographics.as_array();
    let records = &panel.records[fit.clone()];

    let cum_c: Vec<f64> = records.iter().map(|r| r.cum_confirmed / pop).collect();
    let cum_r: Vec<f64> = records.iter().map(|r| r.cum_removed / pop).collect();
    let cases: Vec<f64> = records.iter().map(|r| r.new_confirmed).collect();
    let active: Vec<f64> = records.iter().map(DailyRecord::active).collect();
    let per_case = infer_true_infection_rate(&cases, &active, &config.incubation)?;
    let rates: Vec<f64> = per_case
        .iter()
        .zip(&cum_c)
        .map(|(r, c)| r / (1.0 - c).max(f64::EPSILON))
        .collect();
    let constant = calibrate(&cum_c, &cum_r, &config.calibration)?;
    let mut driving = rates.clone();
    driving.resize(records.len(), *rates.last().expect("rates nonempty"));
    let calibration = calibrate_rate_driven(&cum_c, &cum_r, &driving, constant.beta, &config.calibration)?;
    let path = simulate_cumulative(
        &calibration.params(),
        calibration.initial_state(),
        Some(&driving),
        records.len(),
    )?;
    let mut fitted_cases = cases.clone();
    for t in 1..path.len() {
        fitted_cases[t] = ((path[t].confirmed() - path[t - 1].confirmed()) * pop).max(0.0);
    }
    let data = FitData {
        records,
        mobility: records.iter().map(|r| r.mobility).collect(),
        unemployment: records.iter().map(|r| r.unemployment).collect(),
        cases,
        fitted_cases,
        rates,
    };

    let mut current = init.cloned();
    let mut predicted_m: Option<Vec<[f64; N_MOBILITY]>> = None;
    let mut sweeps: Vec<SweepRecord> = Vec::new();
    let mut best: Option<(usize, f64, Bundle)> = None;
    let mut stale = 0;
    for sweep in 0..config.max_sweeps {
        let offset = 1000 * sweep as u64;
        let prev = current.as_ref();

        let m_for_u = match (&predicted_m, config.coupled_inputs) {
            (Some(m), true) => m.as_slice(),
            _ => data.mobility.as_slice(),
        };
        let (unemployment, u_report) = if config.freeze.unemployment {
            (prev.expect("checked above").unemployment.clone(), None)
        } else {
            let (m, r) = UnemploymentModel::train(
                &unemployment_samples(&data, m_for_u),
                &demo,
                &config.architecture,
                &seeded(&config.unemployment, offset),
                prev.map(|b| b.unemployment.clone()),
            )?;
            (m, Some(r))
        };

        let (c_in, u_in) = if config.coupled_inputs {
            (
                data.fitted_cases.clone(),
                predicted_unemployment(&unemployment, &data, m_for_u, &demo)?,
            )
        } else {
            (data.cases.clone(), data.unemployment.clone())
        };
        let (mobility, m_reports) = if config.freeze.mobility {
            (prev.expect("checked above").mobility.clone(), None)
        } else {
            let (m, r) = MobilityModel::train(
                &mobility_samples(&data, &c_in, &u_in),
                &demo,
                &config.architecture,
                &seeded(&config.mobility, offset + 100),
                prev.map(|b| b.mobility.clone()),
            )?;
            (m, Some(r))
        };
        let pm = predicted_mobility(&mobility, &data, &c_in, &u_in, &demo)?;

        let m_for_r = if config.coupled_inputs {
            pm.as_slice()
        } else {
            data.mobility.as_slice()
        };
        let (infection, r_report) = if config.freeze.infection {
            (prev.expect("checked above").infection.clone(), None)
        } else {
            let (m, r) = InfectionModel::train(
                &infection_samples(&data, m_for_r),
                &demo,
                &config.architecture,
                &seeded(&config.infection, offset + 200),
                prev.map(|b| b.infection.clone()),
            )?;
            (m, Some(r))
        };
        predicted_m = Some(pm);

        let bundle = Bundle {
            mobility,
            unemployment,
            infection,
            seir: calibration.params(),
            incubation: config.incubation,
            demographics: *demographics,
        };
        let loss = closed_loop_loss(&bundle, panel, val.start).unwrap_or(f64::INFINITY);
        log::info!("joint training sweep {}: validation loss {loss:.6}", sweep + 1);
        sweeps.push(SweepRecord {
            validation_loss: loss,
            unemployment: u_report,
            mobility: m_reports,
            infection: r_report,
        });
        let first = sweeps[0].validation_loss;
        if !loss.is_finite() || (first.is_finite() && loss > config.divergence_factor * first) {
            let history: Vec<String> = sweeps.iter().map(|s| format!("{:.6}", s.validation_loss)).collect();
            return Err(Error::Diverged(format!(
                "validation loss by sweep: [{}]",
                history.join(", ")
            )));
        }
        match &best {
            Some((_, b, _)) if loss >= *b => stale += 1,
            _ => {
                best = Some((sweep, loss, bundle.clone()));
                stale = 0;
            }
        }
        current = Some(bundle);
        if stale >= config.sweep_patience {
            break;
        }
    }
    let (best_sweep, _, bundle) = best.expect("at least one sweep ran");
    Ok(JointOutcome {
        bundle,
        calibration,
        sweeps,
        best_sweep,
    })
}
