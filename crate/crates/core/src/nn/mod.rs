//! A small dense/LSTM network engine with hand-written reverse-mode gradients.
//!
//! Tensors are plain `Vec<f64>` in row-major order. Every trainable structure
//! implements [`Parameters`], which is enough for the optimizer, the training
//! loop, checkpointing and finite-difference checking to treat it as a flat
//! parameter vector.

mod adam;
mod checkpoint;
mod dense;
mod gradcheck;
mod lstm;
mod norm;
mod params;
mod train;

pub use adam::Adam;
pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CHECKPOINT_VERSION};
pub use dense::{concat, Activation, Dense};
pub use gradcheck::{grad_check, relative_error, GRAD_CHECK_STEP};
pub use lstm::{Lstm, LstmTrace};
pub use norm::Standardizer;
pub use params::Parameters;
pub use train::{chronological_split, train, LossWeights, Objective, TrainConfig, TrainReport};

use rand::Rng;

use crate::error::{Error, Result};

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^x)` without overflow for large `x`.
pub fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else if x < -30.0 {
        x.exp()
    } else {
        x.exp().ln_1p()
    }
}

/// Inverse of [`softplus`] for `y > 0`.
pub fn softplus_inv(y: f64) -> f64 {
    if y > 30.0 {
        y
    } else {
        y.exp_m1().ln()
    }
}

/// Fails with a numeric error naming `layer` if any value is NaN or infinite.
pub fn ensure_finite(layer: &str, values: &[f64]) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::Numeric {
            layer: layer.to_string(),
        })
    }
}

pub(crate) fn uniform_init<R: Rng + ?Sized>(rng: &mut R, values: &mut [f64], fan_in: usize) {
    let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
    for v in values {
        *v = rng.random_range(-bound..=bound);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn softplus_roundtrip_and_limits() {
        for &y in &[1e-6, 0.01, 0.5, 1.0, 7.0, 40.0] {
            assert!((softplus(softplus_inv(y)) - y).abs() < 1e-12 * y.max(1.0));
        }
        assert_eq!(softplus(100.0), 100.0);
        assert!(softplus(-100.0) > 0.0);
        assert!((softplus(0.0) - 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn sigmoid_is_symmetric() {
        for &x in &[-50.0, -3.0, 0.0, 0.7, 12.0] {
            assert!((sigmoid(x) + sigmoid(-x) - 1.0).abs() < 1e-15);
        }
    }
}
