use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{check_window, Architecture};
use crate::data::{N_DEMOGRAPHICS, N_MOBILITY};
use crate::error::{Error, Result};
use crate::nn::{
    chronological_split, concat, ensure_finite, sigmoid, softplus, softplus_inv, train, Activation, Dense, Lstm,
    LstmTrace, Objective, Parameters, Standardizer, TrainConfig, TrainReport,
};

/// Targets at or below this rate carry no weight in the relative loss.
pub const MIN_TARGET_RATE: f64 = 1e-8;

/// One training example: the mobility window ending on day `t` and the
/// per-active-case infection rate inferred for day `t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InfectionSample {
    pub mobility: Vec<[f64; N_MOBILITY]>,
    pub target: f64,
}

/// Mobility LSTM and demographics layer feed a linear output passed through
/// softplus, so predicted rates are never negative.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InfectionModel {
    pub lstm: Lstm,
    pub demo: Dense,
    pub head: Dense,
    pub mobility_norm: Standardizer,
    pub demo_norm: Standardizer,
}

struct Trace {
    lstm: LstmTrace,
    zd: Vec<f64>,
    d_out: Vec<f64>,
    head_in: Vec<f64>,
    pre: f64,
    rate: f64,
}

impl Parameters for InfectionModel {
    fn visit(&self, f: &mut dyn FnMut(&[f64])) {
        self.lstm.visit(f);
        self.demo.visit(f);
        self.head.visit(f);
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut [f64])) {
        self.lstm.visit_mut(f);
        self.demo.visit_mut(f);
        self.head.visit_mut(f);
    }
}

impl InfectionModel {
    pub fn zeros(arch: &Architecture) -> Self {
        InfectionModel {
            lstm: Lstm::zeros(N_MOBILITY, arch.hidden),
            demo: Dense::zeros(N_DEMOGRAPHICS, arch.demo_hidden, Activation::Tanh),
            head: Dense::zeros(arch.hidden + arch.demo_hidden, 1, Activation::Identity),
            mobility_norm: Standardizer::identity(N_MOBILITY),
            demo_norm: Standardizer::identity(N_DEMOGRAPHICS),
        }
    }

    pub fn init<R: Rng + ?Sized>(arch: &Architecture, rng: &mut R) -> Self {
        InfectionModel {
            lstm: Lstm::init(N_MOBILITY, arch.hidden, rng),
            demo: Dense::init(N_DEMOGRAPHICS, arch.demo_hidden, Activation::Tanh, rng),
            head: Dense::init(arch.hidden + arch.demo_hidden, 1, Activation::Identity, rng),
            ..Self::zeros(arch)
        }
    }

    pub fn fit_normalizers(&mut self, samples: &[InfectionSample], demographics: &[f64; N_DEMOGRAPHICS]) {
        self.mobility_norm = Standardizer::fit(
            N_MOBILITY,
            samples.iter().flat_map(|s| s.mobility.iter().map(|r| r.as_slice())),
        );
        self.demo_norm = Standardizer::fit(N_DEMOGRAPHICS, [demographics.as_slice()]);
    }

    fn normalize_window(&self, window: &[[f64; N_MOBILITY]]) -> Result<Vec<Vec<f64>>> {
        check_window(window.len())?;
        Ok(window.iter().map(|r| self.mobility_norm.apply(r)).collect())
    }

    fn forward(&self, zwin: &[Vec<f64>], zd: &[f64]) -> Result<Trace> {
        let (h, lstm) = self.lstm.forward_trace(zwin)?;
        let d_out = self.demo.forward(zd)?;
        let head_in = concat(&[&h, &d_out]);
        let pre = self.head.forward(&head_in)?[0];
        ensure_finite("infection output", &[pre])?;
        Ok(Trace {
            lstm,
            zd: zd.to_vec(),
            d_out,
            head_in,
            pre,
            rate: softplus(pre),
        })
    }

    /// `drate` is the loss gradient with respect to the (post-softplus) rate.
    fn backward(&self, tr: &Trace, drate: f64, g: &mut Self) {
        let dpre = drate * sigmoid(tr.pre);
        let d_head_in = self.head.backward(&tr.head_in, &[tr.pre], &[dpre], &mut g.head);
        let (dh, dd) = d_head_in.split_at(self.lstm.hidden);
        self.demo.backward(&tr.zd, &tr.d_out, dd, &mut g.demo);
        self.lstm.backward(&tr.lstm, dh, &mut g.lstm);
    }

    /// Per-active-case daily infection rate on the window's last day.
    pub fn predict(&self, window: &[[f64; N_MOBILITY]], demographics: &[f64; N_DEMOGRAPHICS]) -> Result<f64> {
        let zwin = self.normalize_window(window)?;
        Ok(self.forward(&zwin, &self.demo_norm.apply(demographics))?.rate)
    }

    /// Trains on chronologically ordered samples. A fresh model starts with
    /// its output bias at the mean training target.
    pub fn train(
        samples: &[InfectionSample],
        demographics: &[f64; N_DEMOGRAPHICS],
        arch: &Architecture,
        config: &TrainConfig,
        init: Option<InfectionModel>,
    ) -> Result<(InfectionModel, TrainReport)> {
        arch.validate()?;
        let (tr, va) = chronological_split(samples.len(), config.validation_fraction)?;
        let objective =
            |m: &InfectionModel| InfectionObjective::new(m, &samples[tr.clone()], &samples[va.clone()], demographics);
        let model = match init {
            Some(m) => m,
            None => {
                let mut m = Self::init(arch, &mut ChaCha8Rng::seed_from_u64(config.seed));
                m.fit_normalizers(&samples[tr.clone()], demographics);
                let used: Vec<f64> = samples[tr.clone()]
                    .iter()
                    .map(|s| s.target)
                    .filter(|&r| r > MIN_TARGET_RATE)
                    .collect();
                if let Some(mean) = (!used.is_empty()).then(|| used.iter().sum::<f64>() / used.len() as f64) {
                    m.head.bias[0] = softplus_inv(mean);
                }
                m
            }
        };
        train(&objective(&model)?, model, config)
    }
}

struct Prepared {
    zwin: Vec<Vec<f64>>,
    target: f64,
}

/// Squared error divided by the target, averaged over samples whose target
/// exceeds [`MIN_TARGET_RATE`].
pub struct InfectionObjective {
    train: Vec<Prepared>,
    val: Vec<Prepared>,
    zd: Vec<f64>,
}

impl InfectionObjective {
    pub fn new(
        model: &InfectionModel,
        train: &[InfectionSample],
        val: &[InfectionSample],
        demographics: &[f64; N_DEMOGRAPHICS],
    ) -> Result<Self> {
        let prep = |samples: &[InfectionSample]| -> Result<Vec<Prepared>> {
            samples
                .iter()
                .filter(|s| s.target > MIN_TARGET_RATE)
                .map(|s| {
                    Ok(Prepared {
                        zwin: model.normalize_window(&s.mobility)?,
                        target: s.target,
                    })
                })
                .collect()
        };
        let train = prep(train)?;
        if train.is_empty() {
            return Err(Error::Domain(format!(
                "every infection-rate training target is at or below {MIN_TARGET_RATE}"
            )));
        }
        Ok(InfectionObjective {
            train,
            val: prep(val)?,
            zd: model.demo_norm.apply(demographics),
        })
    }

    fn relative_loss(
        &self,
        model: &InfectionModel,
        samples: &[Prepared],
        mut g: Option<&mut InfectionModel>,
    ) -> Result<f64> {
        let n = samples.len() as f64;
        let mut loss = 0.0;
        for s in samples {
            let tr = model.forward(&s.zwin, &self.zd)?;
            let e = tr.rate - s.target;
            loss += e * e / s.target / n;
            if let Some(g) = g.as_deref_mut() {
                model.backward(&tr, 2.0 * e / s.target / n, g);
            }
        }
        Ok(loss)
    }
}

impl Objective for InfectionObjective {
    type Model = InfectionModel;

    fn num_samples(&self) -> usize {
        self.train.len() + self.val.len()
    }

    fn loss_grad(&self, model: &InfectionModel, _rng: &mut ChaCha8Rng, g: &mut InfectionModel) -> Result<f64> {
        self.relative_loss(model, &self.train, Some(g))
    }

    fn validation_loss(&self, model: &InfectionModel) -> Result<Option<f64>> {
        if self.val.is_empty() {
            return Ok(None);
        }
        self.relative_loss(model, &self.val, None).map(Some)
    }
}
