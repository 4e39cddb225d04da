use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{check_window, noisy_rows, Architecture};
use crate::data::{N_DEMOGRAPHICS, N_MOBILITY};
use crate::error::{Error, Result};
use crate::nn::{
    chronological_split, concat, ensure_finite, train, Activation, Dense, LossWeights, Lstm, LstmTrace, Objective,
    Parameters, Standardizer, TrainConfig, TrainReport,
};

/// Upper end of the admissible rate, in percent.
pub const MAX_RATE: f64 = 100.0;

/// One training example: the mobility window ending on day `t`, the rate a
/// week earlier and the rate on day `t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnemploymentSample {
    /// Smoothed mobility for days `t-6..=t`.
    pub mobility: Vec<[f64; N_MOBILITY]>,
    /// Rate on day `t-7`, percent.
    pub lag: f64,
    /// Rate on day `t`, percent.
    pub target: f64,
}

/// Mobility LSTM and demographics layer feed an inner layer; the output layer
/// sees the inner features next to the week-lagged rate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnemploymentModel {
    pub lstm: Lstm,
    pub demo: Dense,
    pub inner: Dense,
    pub head: Dense,
    pub mobility_norm: Standardizer,
    pub demo_norm: Standardizer,
    /// Shared by the lagged input and the output.
    pub rate_norm: Standardizer,
}

struct Trace {
    lstm: LstmTrace,
    zd: Vec<f64>,
    d_out: Vec<f64>,
    inner_in: Vec<f64>,
    inner_out: Vec<f64>,
    head_in: Vec<f64>,
    y: f64,
}

impl Parameters for UnemploymentModel {
    fn visit(&self, f: &mut dyn FnMut(&[f64])) {
        self.lstm.visit(f);
        self.demo.visit(f);
        self.inner.visit(f);
        self.head.visit(f);
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut [f64])) {
        self.lstm.visit_mut(f);
        self.demo.visit_mut(f);
        self.inner.visit_mut(f);
        self.head.visit_mut(f);
    }
}

impl UnemploymentModel {
    pub fn zeros(arch: &Architecture) -> Self {
        UnemploymentModel {
            lstm: Lstm::zeros(N_MOBILITY, arch.hidden),
            demo: Dense::zeros(N_DEMOGRAPHICS, arch.demo_hidden, Activation::Tanh),
            inner: Dense::zeros(arch.hidden + arch.demo_hidden, arch.inner_hidden, Activation::Tanh),
            head: Dense::zeros(arch.inner_hidden + 1, 1, Activation::Identity),
            mobility_norm: Standardizer::identity(N_MOBILITY),
            demo_norm: Standardizer::identity(N_DEMOGRAPHICS),
            rate_norm: Standardizer::identity(1),
        }
    }

    pub fn init<R: Rng + ?Sized>(arch: &Architecture, rng: &mut R) -> Self {
        UnemploymentModel {
            lstm: Lstm::init(N_MOBILITY, arch.hidden, rng),
            demo: Dense::init(N_DEMOGRAPHICS, arch.demo_hidden, Activation::Tanh, rng),
            inner: Dense::init(arch.hidden + arch.demo_hidden, arch.inner_hidden, Activation::Tanh, rng),
            head: Dense::init(arch.inner_hidden + 1, 1, Activation::Identity, rng),
            ..Self::zeros(arch)
        }
    }

    /// Fits the input and output statistics on `samples`.
    pub fn fit_normalizers(&mut self, samples: &[UnemploymentSample], demographics: &[f64; N_DEMOGRAPHICS]) {
        self.mobility_norm = Standardizer::fit(
            N_MOBILITY,
            samples.iter().flat_map(|s| s.mobility.iter().map(|r| r.as_slice())),
        );
        self.demo_norm = Standardizer::fit(N_DEMOGRAPHICS, [demographics.as_slice()]);
        let rates: Vec<f64> = samples.iter().flat_map(|s| [s.lag, s.target]).collect();
        self.rate_norm = Standardizer::fit_scalar(&rates);
    }

    fn normalize_window(&self, window: &[[f64; N_MOBILITY]]) -> Result<Vec<Vec<f64>>> {
        check_window(window.len())?;
        Ok(window.iter().map(|r| self.mobility_norm.apply(r)).collect())
    }

    fn forward(&self, zwin: &[Vec<f64>], zd: &[f64], zlag: f64) -> Result<Trace> {
        let (h, lstm) = self.lstm.forward_trace(zwin)?;
        let d_out = self.demo.forward(zd)?;
        let inner_in = concat(&[&h, &d_out]);
        let inner_out = self.inner.forward(&inner_in)?;
        let head_in = concat(&[&inner_out, &[zlag]]);
        let y = self.head.forward(&head_in)?[0];
        ensure_finite("unemployment output", &[y])?;
        Ok(Trace {
            lstm,
            zd: zd.to_vec(),
            d_out,
            inner_in,
            inner_out,
            head_in,
            y,
        })
    }

    fn backward(&self, tr: &Trace, dy: f64, g: &mut Self) {
        let d_head_in = self.head.backward(&tr.head_in, &[tr.y], &[dy], &mut g.head);
        let d_inner_in = self.inner.backward(
            &tr.inner_in,
            &tr.inner_out,
            &d_head_in[..self.inner.n_out],
            &mut g.inner,
        );
        let (dh, dd) = d_inner_in.split_at(self.lstm.hidden);
        self.demo.backward(&tr.zd, &tr.d_out, dd, &mut g.demo);
        self.lstm.backward(&tr.lstm, dh, &mut g.lstm);
    }

    /// Rate on the window's last day, in percent, before clipping.
    pub fn predict_unclipped(
        &self,
        window: &[[f64; N_MOBILITY]],
        demographics: &[f64; N_DEMOGRAPHICS],
        lag: f64,
    ) -> Result<f64> {
        let zwin = self.normalize_window(window)?;
        let zd = self.demo_norm.apply(demographics);
        let y = self.forward(&zwin, &zd, self.rate_norm.apply_one(0, lag))?.y;
        Ok(self.rate_norm.invert_one(0, y))
    }

    /// Rate on the window's last day, in percent, clipped to `[0, MAX_RATE]`.
    pub fn predict(&self, window: &[[f64; N_MOBILITY]], demographics: &[f64; N_DEMOGRAPHICS], lag: f64) -> Result<f64> {
        Ok(self.predict_unclipped(window, demographics, lag)?.clamp(0.0, MAX_RATE))
    }

    /// Trains on chronologically ordered samples. A warm start keeps the
    /// initial model's normalization statistics.
    pub fn train(
        samples: &[UnemploymentSample],
        demographics: &[f64; N_DEMOGRAPHICS],
        arch: &Architecture,
        config: &TrainConfig,
        init: Option<UnemploymentModel>,
    ) -> Result<(UnemploymentModel, TrainReport)> {
        arch.validate()?;
        let (tr, va) = chronological_split(samples.len(), config.validation_fraction)?;
        let model = match init {
            Some(m) => m,
            None => {
                let mut m = Self::init(arch, &mut ChaCha8Rng::seed_from_u64(config.seed));
                m.fit_normalizers(&samples[tr.clone()], demographics);
                m
            }
        };
        let objective = UnemploymentObjective::new(&model, &samples[tr], &samples[va], demographics, config)?;
        train(&objective, model, config)
    }
}

struct Prepared {
    zwin: Vec<Vec<f64>>,
    zlag: f64,
    ztarget: f64,
}

/// Squared error on the rate plus, with noise enabled, the squared gap between
/// predictions on perturbed and clean mobility. Everything is measured in
/// normalized units.
pub struct UnemploymentObjective {
    train: Vec<Prepared>,
    val: Vec<Prepared>,
    zd: Vec<f64>,
    weights: LossWeights,
    noise_sigma: f64,
}

impl UnemploymentObjective {
    pub fn new(
        model: &UnemploymentModel,
        train: &[UnemploymentSample],
        val: &[UnemploymentSample],
        demographics: &[f64; N_DEMOGRAPHICS],
        config: &TrainConfig,
    ) -> Result<Self> {
        let prep = |samples: &[UnemploymentSample]| -> Result<Vec<Prepared>> {
            samples
                .iter()
                .map(|s| {
                    Ok(Prepared {
                        zwin: model.normalize_window(&s.mobility)?,
                        zlag: model.rate_norm.apply_one(0, s.lag),
                        ztarget: model.rate_norm.apply_one(0, s.target),
                    })
                })
                .collect()
        };
        if train.is_empty() {
            return Err(Error::Domain("no unemployment training samples".into()));
        }
        Ok(UnemploymentObjective {
            train: prep(train)?,
            val: prep(val)?,
            zd: model.demo_norm.apply(demographics),
            weights: config.loss_weights,
            noise_sigma: config.noise_sigma,
        })
    }

    fn fit_mse(&self, model: &UnemploymentModel, samples: &[Prepared]) -> Result<f64> {
        let mut total = 0.0;
        for s in samples {
            let e = model.forward(&s.zwin, &self.zd, s.zlag)?.y - s.ztarget;
            total += e * e;
        }
        Ok(total / samples.len() as f64)
    }
}

impl Objective for UnemploymentObjective {
    type Model = UnemploymentModel;

    fn num_samples(&self) -> usize {
        self.train.len() + self.val.len()
    }

    fn loss_grad(&self, model: &UnemploymentModel, rng: &mut ChaCha8Rng, g: &mut UnemploymentModel) -> Result<f64> {
        let n = self.train.len() as f64;
        let noisy = self.noise_sigma > 0.0 && self.weights.noise != 0.0;
        let mut loss = 0.0;
        for s in &self.train {
            let clean = model.forward(&s.zwin, &self.zd, s.zlag)?;
            let e = clean.y - s.ztarget;
            loss += self.weights.fit * e * e / n;
            model.backward(&clean, 2.0 * self.weights.fit * e / n, g);
            if noisy {
                let pert = model.forward(&noisy_rows(rng, &s.zwin, self.noise_sigma), &self.zd, s.zlag)?;
                let d = pert.y - clean.y;
                let k = self.weights.noise;
                loss += k * d * d / n;
                model.backward(&pert, 2.0 * k * d / n, g);
                model.backward(&clean, -2.0 * k * d / n, g);
            }
        }
        Ok(loss)
    }

    fn validation_loss(&self, model: &UnemploymentModel) -> Result<Option<f64>> {
        if self.val.is_empty() {
            return Ok(None);
        }
        self.fit_mse(model, &self.val).map(Some)
    }
}
