use std::ops::Range;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Adam, Parameters};
use crate::error::{Error, Result};

/// Relative weights of the fit term and the noise-consistency terms.
///
/// The unemployment loss uses `fit` and `noise`. The mobility loss uses all
/// four: `noise` for perturbed unemployment, `noise_cases` for perturbed case
/// counts and `noise_both` for both at once.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossWeights {
    pub fit: f64,
    pub noise: f64,
    pub noise_cases: f64,
    pub noise_both: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            fit: 1.0,
            noise: 1.0,
            noise_cases: 1.0,
            noise_both: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub weight_decay: f64,
    /// Multiplier applied to the learning rate every `lr_decay_period` epochs.
    pub lr_decay_factor: f64,
    pub lr_decay_period: usize,
    /// Epochs without a validation improvement before stopping.
    pub patience: usize,
    pub early_stopping: bool,
    pub max_epochs: usize,
    /// Input perturbation scale, in standard deviations of the normalized inputs.
    pub noise_sigma: f64,
    pub loss_weights: LossWeights,
    pub validation_fraction: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig::unemployment()
    }
}

impl TrainConfig {
    pub fn unemployment() -> Self {
        TrainConfig {
            learning_rate: 1e-3,
            weight_decay: 5e-6,
            lr_decay_factor: 0.8,
            lr_decay_period: 200,
            patience: 100,
            early_stopping: true,
            max_epochs: 2000,
            noise_sigma: 0.1,
            loss_weights: LossWeights::default(),
            validation_fraction: 0.2,
            seed: 0,
        }
    }

    pub fn mobility() -> Self {
        TrainConfig {
            learning_rate: 8e-4,
            ..Self::unemployment()
        }
    }

    /// Fixed 100 epochs, no early stopping.
    pub fn infection() -> Self {
        TrainConfig {
            learning_rate: 6e-4,
            weight_decay: 5e-5,
            early_stopping: false,
            max_epochs: 100,
            ..Self::unemployment()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::Domain(format!("invalid training config: {msg}")));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        if !(self.weight_decay >= 0.0) {
            return bad("weight_decay must be nonnegative");
        }
        if !(self.lr_decay_factor > 0.0 && self.lr_decay_factor <= 1.0) {
            return bad("lr_decay_factor must lie in (0, 1]");
        }
        if self.lr_decay_period == 0 {
            return bad("lr_decay_period must be at least 1");
        }
        if self.patience == 0 {
            return bad("patience must be at least 1");
        }
        if !(self.validation_fraction > 0.0 && self.validation_fraction < 1.0) {
            return bad("validation_fraction must lie in (0, 1)");
        }
        if !(self.noise_sigma >= 0.0) {
            return bad("noise_sigma must be nonnegative");
        }
        Ok(())
    }

    pub fn learning_rate_at(&self, epoch: usize) -> f64 {
        self.learning_rate * self.lr_decay_factor.powi((epoch / self.lr_decay_period) as i32)
    }
}

/// A training problem over a model type.
pub trait Objective {
    type Model: Parameters + Clone;

    /// Number of training samples.
    fn num_samples(&self) -> usize;

    /// Training loss at `model`, accumulating its gradient into `grads`.
    /// Any noise is drawn from `rng`.
    fn loss_grad(&self, model: &Self::Model, rng: &mut ChaCha8Rng, grads: &mut Self::Model) -> Result<f64>;

    /// Validation loss, or `None` when the problem has no validation split.
    fn validation_loss(&self, model: &Self::Model) -> Result<Option<f64>>;

    /// Called after every optimizer step.
    fn after_step(&self, _model: &mut Self::Model) {}
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub train_loss: Vec<f64>,
    pub val_loss: Vec<f64>,
    pub best_epoch: usize,
    pub stopped_early: bool,
}

/// Full-batch Adam training with step decay and early stopping.
///
/// With a validation split, returns the parameters that achieved the lowest
/// recorded validation loss; without one, returns the final parameters.
pub fn train<O: Objective>(objective: &O, model: O::Model, config: &TrainConfig) -> Result<(O::Model, TrainReport)> {
    config.validate()?;
    if objective.num_samples() < 2 {
        return Err(Error::Domain(format!(
            "training needs at least 2 samples, got {}",
            objective.num_samples()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut model = model;
    let mut flat = model.to_flat();
    let mut adam = Adam::new(flat.len(), config.learning_rate, config.weight_decay);
    let mut report = TrainReport::default();
    let mut best: Option<O::Model> = None;
    let mut best_val = f64::INFINITY;
    let mut stale = 0usize;

    for epoch in 0..config.max_epochs {
        adam.learning_rate = config.learning_rate_at(epoch);
        let mut grads = model.zeros_like();
        let loss = objective.loss_grad(&model, &mut rng, &mut grads)?;
        if !loss.is_finite() {
            return Err(Error::Diverged(format!(
                "non-finite training loss at epoch {epoch} (history {:?})",
                tail(&report.train_loss)
            )));
        }
        report.train_loss.push(loss);
        if let Some(val) = objective.validation_loss(&model)? {
            report.val_loss.push(val);
            if val < best_val {
                best_val = val;
                best = Some(model.clone());
                report.best_epoch = epoch;
                stale = 0;
            } else {
                stale += 1;
                if config.early_stopping && stale >= config.patience {
                    report.stopped_early = true;
                    break;
                }
            }
        } else {
            report.best_epoch = epoch;
        }
        adam.step(&mut flat, &grads.to_flat())?;
        model.load_flat(&flat);
        objective.after_step(&mut model);
        flat = model.to_flat();
    }
    Ok((best.unwrap_or(model), report))
}

fn tail(xs: &[f64]) -> &[f64] {
    &xs[xs.len().saturating_sub(5)..]
}

/// Chronological split of `n` samples: the last `validation_fraction` (at
/// least one sample) validates, the rest trains.
pub fn chronological_split(n: usize, validation_fraction: f64) -> Result<(Range<usize>, Range<usize>)> {
    if n < 2 {
        return Err(Error::Domain(format!(
            "cannot split {n} samples into train and validation"
        )));
    }
    let n_val = ((n as f64 * validation_fraction).round() as usize).clamp(1, n - 1);
    Ok((0..n - n_val, n - n_val..n))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{Activation, Dense};
    use std::cell::Cell;

    /// Least-squares fit of y = 2 x0 - x1 + 0.5 with a linear layer.
    struct LinearRegression {
        xs: Vec<[f64; 2]>,
        val: Vec<[f64; 2]>,
    }

    fn target(x: &[f64; 2]) -> f64 {
        2.0 * x[0] - x[1] + 0.5
    }

    fn mse(model: &Dense, xs: &[[f64; 2]], grads: Option<&mut Dense>) -> f64 {
        let n = xs.len() as f64;
        let mut total = 0.0;
        let mut grads = grads;
        for x in xs {
            let y = model.forward(x).unwrap();
            let e = y[0] - target(x);
            total += e * e / n;
            if let Some(g) = grads.as_deref_mut() {
                model.backward(x, &y, &[2.0 * e / n], g);
            }
        }
        total
    }

    impl Objective for LinearRegression {
        type Model = Dense;
        fn num_samples(&self) -> usize {
            self.xs.len()
        }
        fn loss_grad(&self, model: &Dense, _rng: &mut ChaCha8Rng, grads: &mut Dense) -> Result<f64> {
            Ok(mse(model, &self.xs, Some(grads)))
        }
        fn validation_loss(&self, model: &Dense) -> Result<Option<f64>> {
            Ok(Some(mse(model, &self.val, None)))
        }
    }

    fn grid(n: usize, offset: f64) -> Vec<[f64; 2]> {
        (0..n)
            .map(|k| {
                let t = k as f64 / n as f64 + offset;
                [(7.0 * t).sin(), (3.0 * t).cos()]
            })
            .collect()
    }

    #[test]
    fn module_default_configs_are_valid() {
        for c in [
            TrainConfig::unemployment(),
            TrainConfig::mobility(),
            TrainConfig::infection(),
        ] {
            c.validate().unwrap();
        }
        assert_eq!(TrainConfig::unemployment().learning_rate, 1e-3);
        assert_eq!(TrainConfig::mobility().learning_rate, 8e-4);
        let inf = TrainConfig::infection();
        assert_eq!(
            (inf.learning_rate, inf.weight_decay, inf.max_epochs, inf.early_stopping),
            (6e-4, 5e-5, 100, false)
        );
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let bad = [
            TrainConfig {
                learning_rate: 0.0,
                ..Default::default()
            },
            TrainConfig {
                patience: 0,
                ..Default::default()
            },
            TrainConfig {
                validation_fraction: 1.0,
                ..Default::default()
            },
            TrainConfig {
                noise_sigma: -0.1,
                ..Default::default()
            },
        ];
        for c in bad {
            assert!(c.validate().is_err());
        }
    }

    #[test]
    fn learning_rate_decays_stepwise() {
        let c = TrainConfig::unemployment();
        assert_eq!(c.learning_rate_at(199), 1e-3);
        assert!((c.learning_rate_at(200) - 8e-4).abs() < 1e-18);
        assert!((c.learning_rate_at(400) - 6.4e-4).abs() < 1e-18);
    }

    #[test]
    fn linear_target_is_learned() {
        let problem = LinearRegression {
            xs: grid(40, 0.0),
            val: grid(10, 0.013),
        };
        let config = TrainConfig {
            learning_rate: 0.05,
            max_epochs: 3000,
            weight_decay: 0.0,
            ..TrainConfig::unemployment()
        };
        let model = Dense::zeros(2, 1, Activation::Identity);
        let (trained, report) = train(&problem, model, &config).unwrap();
        let first = report.train_loss[..50].iter().sum::<f64>();
        let last = report.train_loss[report.train_loss.len() - 50..].iter().sum::<f64>();
        assert!(last < first);
        assert!(mse(&trained, &problem.val, None) < 1e-3);
    }

    #[test]
    fn returns_best_checkpoint() {
        let problem = LinearRegression {
            xs: grid(20, 0.0),
            val: grid(5, 0.3),
        };
        let config = TrainConfig {
            learning_rate: 0.5,
            max_epochs: 200,
            ..TrainConfig::unemployment()
        };
        let (trained, report) = train(&problem, Dense::zeros(2, 1, Activation::Identity), &config).unwrap();
        let min = report.val_loss.iter().cloned().fold(f64::INFINITY, f64::min);
        assert_eq!(mse(&trained, &problem.val, None), min);
        assert_eq!(report.val_loss[report.best_epoch], min);
    }

    /// Validation loss improves for `plateau_at` epochs, then stays flat.
    struct Plateau {
        plateau_at: usize,
        calls: Cell<usize>,
    }

    impl Objective for Plateau {
        type Model = Vec<f64>;
        fn num_samples(&self) -> usize {
            10
        }
        fn loss_grad(&self, _m: &Vec<f64>, _rng: &mut ChaCha8Rng, g: &mut Vec<f64>) -> Result<f64> {
            g[0] = 1.0;
            Ok(1.0)
        }
        fn validation_loss(&self, _m: &Vec<f64>) -> Result<Option<f64>> {
            let epoch = self.calls.get();
            self.calls.set(epoch + 1);
            Ok(Some(1.0 / (1 + epoch.min(self.plateau_at)) as f64))
        }
    }

    #[test]
    fn patience_one_stops_right_after_a_plateau() {
        let problem = Plateau {
            plateau_at: 30,
            calls: Cell::new(0),
        };
        let config = TrainConfig {
            patience: 1,
            max_epochs: 500,
            ..TrainConfig::unemployment()
        };
        let (_, report) = train(&problem, vec![0.0], &config).unwrap();
        assert!(report.stopped_early);
        assert!(report.train_loss.len() <= 30 + 2);
        assert_eq!(report.best_epoch, 30);
    }

    #[test]
    fn infection_config_runs_exactly_its_epoch_budget() {
        let problem = Plateau {
            plateau_at: 3,
            calls: Cell::new(0),
        };
        let (_, report) = train(&problem, vec![0.0], &TrainConfig::infection()).unwrap();
        assert_eq!(report.train_loss.len(), 100);
        assert!(!report.stopped_early);
    }

    #[test]
    fn tiny_dataset_is_rejected() {
        struct One;
        impl Objective for One {
            type Model = Vec<f64>;
            fn num_samples(&self) -> usize {
                1
            }
            fn loss_grad(&self, _: &Vec<f64>, _: &mut ChaCha8Rng, _: &mut Vec<f64>) -> Result<f64> {
                Ok(0.0)
            }
            fn validation_loss(&self, _: &Vec<f64>) -> Result<Option<f64>> {
                Ok(None)
            }
        }
        assert!(matches!(
            train(&One, vec![0.0], &TrainConfig::default()),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn split_is_chronological() {
        let (tr, va) = chronological_split(50, 0.2).unwrap();
        assert_eq!((tr, va), (0..40, 40..50));
        let (tr, va) = chronological_split(2, 0.2).unwrap();
        assert_eq!((tr, va), (0..1, 1..2));
    }
}
