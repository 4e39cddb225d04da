//! The learned components of the coupled model: mobility, unemployment and
//! infection-rate forecasters.
//!
//! Each model keeps the normalization statistics it was trained with, so
//! callers always pass raw values.

mod infection;
mod mobility;
mod unemployment;

pub use infection::{InfectionModel, InfectionObjective, InfectionSample, MIN_TARGET_RATE};
pub use mobility::{check_sign_constraints, MobilityCategory, MobilityModel, MobilityObjective, MobilitySample};
pub use unemployment::{UnemploymentModel, UnemploymentObjective, UnemploymentSample, MAX_RATE};

use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Days of history every recurrent input covers.
pub const WINDOW: usize = 7;

/// Layer sizes shared by the three forecasters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct Architecture {
    /// LSTM hidden units.
    pub hidden: usize,
    /// Width of the demographics layer.
    pub demo_hidden: usize,
    /// Width of the unemployment model's inner layer.
    pub inner_hidden: usize,
}

impl Default for Architecture {
    fn default() -> Self {
        Architecture {
            hidden: 32,
            demo_hidden: 4,
            inner_hidden: 16,
        }
    }
}

impl Architecture {
    pub fn validate(&self) -> Result<()> {
        if self.hidden == 0 || self.demo_hidden == 0 || self.inner_hidden == 0 {
            return Err(Error::Domain(format!("layer sizes must be positive: {self:?}")));
        }
        Ok(())
    }
}

pub(crate) fn check_window(len: usize) -> Result<()> {
    if len == WINDOW {
        Ok(())
    } else {
        Err(Error::Window {
            needed: WINDOW,
            got: len,
        })
    }
}

/// Adds independent N(0, sigma^2) draws to every value.
pub(crate) fn add_noise(rng: &mut ChaCha8Rng, values: &mut [f64], sigma: f64) {
    let normal = Normal::new(0.0, sigma).expect("noise scale is finite and nonnegative");
    for v in values {
        *v += normal.sample(rng);
    }
}

pub(crate) fn noisy_rows(rng: &mut ChaCha8Rng, rows: &[Vec<f64>], sigma: f64) -> Vec<Vec<f64>> {
    rows.iter()
        .map(|r| {
            let mut r = r.clone();
            add_noise(rng, &mut r, sigma);
            r
        })
        .collect()
}
