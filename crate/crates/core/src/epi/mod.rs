//! Compartment dynamics, calibration, incubation delays and rate inference.

mod calibrate;
mod incubation;
mod nelder_mead;
mod rate;
mod seir;

pub use calibrate::{
    calibrate, calibrate_rate_driven, simulate_cumulative, CalibrationConfig, CalibrationReport, MIN_CALIBRATION_DAYS,
};
pub use incubation::{incubation_map, IncubationDist, IncubationMode, MAX_INCUBATION_DAYS};
pub use nelder_mead::{nelder_mead, NelderMeadConfig, NelderMeadResult};
pub use rate::{active_cases, daily_new_infections, effective_r, infer_true_infection_rate};
pub use seir::{seir_step, Compartments, SeirParams};
