use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{check_window, noisy_rows, Architecture};
use crate::data::{N_CONTAINMENT, N_DEMOGRAPHICS, N_MOBILITY, N_POLICY, RESIDENTIAL};
use crate::error::{Error, Result};
use crate::nn::{
    chronological_split, concat, ensure_finite, sigmoid, softplus, train, uniform_init, Activation, Dense, LossWeights,
    Lstm, LstmTrace, Objective, Parameters, Standardizer, TrainConfig, TrainReport,
};

const N_OTHER_POLICY: usize = N_POLICY - N_CONTAINMENT;

/// One training example for day `t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MobilitySample {
    /// Daily new confirmed cases for days `t-7..=t-1`.
    pub cases: Vec<f64>,
    /// Unemployment rate (percent) for days `t-7..=t-1`.
    pub unemployment: Vec<f64>,
    /// Policy indicators on day `t`, each in `[0, 1]`.
    pub policy: [f64; N_POLICY],
    /// Protest index on day `t`.
    pub blm: f64,
    /// Smoothed mobility on day `t`.
    pub target: [f64; N_MOBILITY],
}

/// Network for a single mobility category.
///
/// Case and unemployment LSTMs and the demographics layer feed the output
/// layer. Policy and protest inputs enter through linear terms added to its
/// output. Containment-policy weights are `-softplus(theta)` for every
/// category except residential, where they are `+softplus(theta)`; the
/// protest weight is `+softplus(psi)` and exists only for residential.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MobilityCategory {
    pub cases_lstm: Lstm,
    pub unemployment_lstm: Lstm,
    pub demo: Dense,
    pub head: Dense,
    /// Unconstrained parameters behind the containment-policy weights.
    pub containment: Vec<f64>,
    /// Weights of the remaining policy indicators.
    pub other_policy: Vec<f64>,
    /// Parameter behind the protest weight; empty unless residential.
    pub blm: Vec<f64>,
    pub residential: bool,
    pub target_norm: Standardizer,
}

struct Trace {
    cases: LstmTrace,
    unemployment: LstmTrace,
    zd: Vec<f64>,
    d_out: Vec<f64>,
    head_in: Vec<f64>,
    head_out: f64,
    policy: [f64; N_POLICY],
    blm: f64,
    y: f64,
}

impl Parameters for MobilityCategory {
    fn visit(&self, f: &mut dyn FnMut(&[f64])) {
        self.cases_lstm.visit(f);
        self.unemployment_lstm.visit(f);
        self.demo.visit(f);
        self.head.visit(f);
        f(&self.containment);
        f(&self.other_policy);
        f(&self.blm);
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut [f64])) {
        self.cases_lstm.visit_mut(f);
        self.unemployment_lstm.visit_mut(f);
        self.demo.visit_mut(f);
        self.head.visit_mut(f);
        f(&mut self.containment);
        f(&mut self.other_policy);
        f(&mut self.blm);
    }
}

impl MobilityCategory {
    pub fn zeros(arch: &Architecture, residential: bool) -> Self {
        MobilityCategory {
            cases_lstm: Lstm::zeros(1, arch.hidden),
            unemployment_lstm: Lstm::zeros(1, arch.hidden),
            demo: Dense::zeros(N_DEMOGRAPHICS, arch.demo_hidden, Activation::Tanh),
            head: Dense::zeros(2 * arch.hidden + arch.demo_hidden, 1, Activation::Identity),
            containment: vec![0.0; N_CONTAINMENT],
            other_policy: vec![0.0; N_OTHER_POLICY],
            blm: if residential { vec![0.0] } else { Vec::new() },
            residential,
            target_norm: Standardizer::identity(1),
        }
    }

    pub fn init<R: Rng + ?Sized>(arch: &Architecture, residential: bool, rng: &mut R) -> Self {
        let mut c = MobilityCategory {
            cases_lstm: Lstm::init(1, arch.hidden, rng),
            unemployment_lstm: Lstm::init(1, arch.hidden, rng),
            demo: Dense::init(N_DEMOGRAPHICS, arch.demo_hidden, Activation::Tanh, rng),
            head: Dense::init(2 * arch.hidden + arch.demo_hidden, 1, Activation::Identity, rng),
            ..Self::zeros(arch, residential)
        };
        uniform_init(rng, &mut c.containment, N_POLICY);
        uniform_init(rng, &mut c.other_policy, N_POLICY);
        uniform_init(rng, &mut c.blm, 1);
        c
    }

    fn containment_sign(&self) -> f64 {
        if self.residential {
            1.0
        } else {
            -1.0
        }
    }

    /// Effective weight of every policy indicator, in normalized output units.
    pub fn policy_weights(&self) -> [f64; N_POLICY] {
        let sign = self.containment_sign();
        std::array::from_fn(|j| {
            if j < N_CONTAINMENT {
                sign * softplus(self.containment[j])
            } else {
                self.other_policy[j - N_CONTAINMENT]
            }
        })
    }

    /// Effective protest weight; zero for non-residential categories.
    pub fn blm_weight(&self) -> f64 {
        self.blm.first().map_or(0.0, |&p| softplus(p))
    }

    fn forward(
        &self,
        zc: &[Vec<f64>],
        zu: &[Vec<f64>],
        zd: &[f64],
        policy: &[f64; N_POLICY],
        blm: f64,
    ) -> Result<Trace> {
        let (hc, cases) = self.cases_lstm.forward_trace(zc)?;
        let (hu, unemployment) = self.unemployment_lstm.forward_trace(zu)?;
        let d_out = self.demo.forward(zd)?;
        let head_in = concat(&[&hc, &hu, &d_out]);
        let head_out = self.head.forward(&head_in)?[0];
        let linear: f64 = self
            .policy_weights()
            .iter()
            .zip(policy)
            .map(|(w, p)| w * p)
            .sum::<f64>()
            + self.blm_weight() * blm;
        let y = head_out + linear;
        ensure_finite("mobility output", &[y])?;
        Ok(Trace {
            cases,
            unemployment,
            zd: zd.to_vec(),
            d_out,
            head_in,
            head_out,
            policy: *policy,
            blm,
            y,
        })
    }

    fn backward(&self, tr: &Trace, dy: f64, g: &mut Self) {
        let d_head_in = self.head.backward(&tr.head_in, &[tr.head_out], &[dy], &mut g.head);
        let h = self.cases_lstm.hidden;
        self.cases_lstm.backward(&tr.cases, &d_head_in[..h], &mut g.cases_lstm);
        self.unemployment_lstm
            .backward(&tr.unemployment, &d_head_in[h..2 * h], &mut g.unemployment_lstm);
        self.demo.backward(&tr.zd, &tr.d_out, &d_head_in[2 * h..], &mut g.demo);
        let sign = self.containment_sign();
        for j in 0..N_CONTAINMENT {
            g.containment[j] += dy * tr.policy[j] * sign * sigmoid(self.containment[j]);
        }
        for j in 0..N_OTHER_POLICY {
            g.other_policy[j] += dy * tr.policy[N_CONTAINMENT + j];
        }
        if let Some(&psi) = self.blm.first() {
            g.blm[0] += dy * tr.blm * sigmoid(psi);
        }
    }
}

/// The six category networks plus shared input statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MobilityModel {
    pub categories: Vec<MobilityCategory>,
    pub cases_norm: Standardizer,
    pub unemployment_norm: Standardizer,
    pub demo_norm: Standardizer,
}

impl Parameters for MobilityModel {
    fn visit(&self, f: &mut dyn FnMut(&[f64])) {
        self.categories.as_slice().visit(f);
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut [f64])) {
        self.categories.as_mut_slice().visit_mut(f);
    }
}

fn sequence(norm: &Standardizer, values: &[f64]) -> Result<Vec<Vec<f64>>> {
    check_window(values.len())?;
    Ok(values.iter().map(|&v| vec![norm.apply_one(0, v)]).collect())
}

impl MobilityModel {
    fn assemble(categories: Vec<MobilityCategory>) -> Self {
        MobilityModel {
            categories,
            cases_norm: Standardizer::identity(1),
            unemployment_norm: Standardizer::identity(1),
            demo_norm: Standardizer::identity(N_DEMOGRAPHICS),
        }
    }

    pub fn zeros(arch: &Architecture) -> Self {
        Self::assemble(
            (0..N_MOBILITY)
                .map(|i| MobilityCategory::zeros(arch, i == RESIDENTIAL))
                .collect(),
        )
    }

    pub fn init<R: Rng + ?Sized>(arch: &Architecture, rng: &mut R) -> Self {
        Self::assemble(
            (0..N_MOBILITY)
                .map(|i| MobilityCategory::init(arch, i == RESIDENTIAL, rng))
                .collect(),
        )
    }

    pub fn fit_normalizers(&mut self, samples: &[MobilitySample], demographics: &[f64; N_DEMOGRAPHICS]) {
        let cases: Vec<f64> = samples.iter().flat_map(|s| s.cases.iter().copied()).collect();
        let unemployment: Vec<f64> = samples.iter().flat_map(|s| s.unemployment.iter().copied()).collect();
        self.cases_norm = Standardizer::fit_scalar(&cases);
        self.unemployment_norm = Standardizer::fit_scalar(&unemployment);
        self.demo_norm = Standardizer::fit(N_DEMOGRAPHICS, [demographics.as_slice()]);
        for (i, c) in self.categories.iter_mut().enumerate() {
            let targets: Vec<f64> = samples.iter().map(|s| s.target[i]).collect();
            c.target_norm = Standardizer::fit_scalar(&targets);
        }
    }

    /// Effective policy weights of every category.
    pub fn policy_weights(&self) -> Vec<[f64; N_POLICY]> {
        self.categories.iter().map(MobilityCategory::policy_weights).collect()
    }

    /// Smoothed mobility for day `t` given the week of cases and unemployment
    /// before it and that day's policy and protest indices.
    pub fn predict(
        &self,
        cases: &[f64],
        unemployment: &[f64],
        demographics: &[f64; N_DEMOGRAPHICS],
        policy: &[f64; N_POLICY],
        blm: f64,
    ) -> Result<[f64; N_MOBILITY]> {
        let zc = sequence(&self.cases_norm, cases)?;
        let zu = sequence(&self.unemployment_norm, unemployment)?;
        let zd = self.demo_norm.apply(demographics);
        let mut out = [0.0; N_MOBILITY];
        for (o, c) in out.iter_mut().zip(&self.categories) {
            let y = c.forward(&zc, &zu, &zd, policy, blm)?.y;
            *o = c.target_norm.invert_one(0, y);
        }
        Ok(out)
    }

    /// Trains the six categories independently (in parallel) on
    /// chronologically ordered samples. Category `i` uses seed `seed + i`.
    pub fn train(
        samples: &[MobilitySample],
        demographics: &[f64; N_DEMOGRAPHICS],
        arch: &Architecture,
        config: &TrainConfig,
        init: Option<MobilityModel>,
    ) -> Result<(MobilityModel, Vec<TrainReport>)> {
        arch.validate()?;
        let (tr, va) = chronological_split(samples.len(), config.validation_fraction)?;
        let mut model = match init {
            Some(m) => m,
            None => {
                let mut m = Self::init(arch, &mut ChaCha8Rng::seed_from_u64(config.seed));
                m.fit_normalizers(&samples[tr.clone()], demographics);
                m
            }
        };
        let objectives = (0..N_MOBILITY)
            .map(|i| {
                MobilityObjective::new(
                    &model,
                    i,
                    &samples[tr.clone()],
                    &samples[va.clone()],
                    demographics,
                    config,
                )
            })
            .collect::<Result<Vec<_>>>()?;
        let categories = std::mem::take(&mut model.categories);
        let trained: Vec<(MobilityCategory, TrainReport)> = categories
            .into_par_iter()
            .zip(objectives)
            .enumerate()
            .map(|(i, (c, objective))| {
                let cfg = TrainConfig {
                    seed: config.seed.wrapping_add(i as u64),
                    ..config.clone()
                };
                train(&objective, c, &cfg)
            })
            .collect::<Result<_>>()?;
        let (categories, reports) = trained.into_iter().unzip();
        model.categories = categories;
        Ok((model, reports))
    }
}

/// Rejects any policy-weight table whose containment entries have the wrong
/// sign: non-positive for the first five categories, nonnegative for
/// residential.
pub fn check_sign_constraints(weights: &[[f64; N_POLICY]]) -> Result<()> {
    if weights.len() != N_MOBILITY {
        return Err(Error::Shape {
            context: "policy weight table",
            expected: N_MOBILITY,
            actual: weights.len(),
        });
    }
    for (i, row) in weights.iter().enumerate() {
        for (j, &w) in row[..N_CONTAINMENT].iter().enumerate() {
            let ok = if i == RESIDENTIAL { w >= 0.0 } else { w <= 0.0 };
            if !ok {
                return Err(Error::SignConstraint(format!(
                    "category {i}, containment policy C{}: weight {w}",
                    j + 1
                )));
            }
        }
    }
    Ok(())
}

struct Prepared {
    zc: Vec<Vec<f64>>,
    zu: Vec<Vec<f64>>,
    policy: [f64; N_POLICY],
    blm: f64,
    ztarget: f64,
}

/// Loss of one category: squared error plus consistency terms comparing the
/// clean prediction with predictions under perturbed unemployment, perturbed
/// cases, and both.
pub struct MobilityObjective {
    train: Vec<Prepared>,
    val: Vec<Prepared>,
    zd: Vec<f64>,
    weights: LossWeights,
    noise_sigma: f64,
}

impl MobilityObjective {
    pub fn new(
        model: &MobilityModel,
        category: usize,
        train: &[MobilitySample],
        val: &[MobilitySample],
        demographics: &[f64; N_DEMOGRAPHICS],
        config: &TrainConfig,
    ) -> Result<Self> {
        let norm = &model.categories[category].target_norm;
        let prep = |samples: &[MobilitySample]| -> Result<Vec<Prepared>> {
            samples
                .iter()
                .map(|s| {
                    Ok(Prepared {
                        zc: sequence(&model.cases_norm, &s.cases)?,
                        zu: sequence(&model.unemployment_norm, &s.unemployment)?,
                        policy: s.policy,
                        blm: s.blm,
                        ztarget: norm.apply_one(0, s.target[category]),
                    })
                })
                .collect()
        };
        if train.is_empty() {
            return Err(Error::Domain("no mobility training samples".into()));
        }
        Ok(MobilityObjective {
            train: prep(train)?,
            val: prep(val)?,
            zd: model.demo_norm.apply(demographics),
            weights: config.loss_weights,
            noise_sigma: config.noise_sigma,
        })
    }

    fn fit_mse(&self, model: &MobilityCategory, samples: &[Prepared]) -> Result<f64> {
        let mut total = 0.0;
        for s in samples {
            let e = model.forward(&s.zc, &s.zu, &self.zd, &s.policy, s.blm)?.y - s.ztarget;
            total += e * e;
        }
        Ok(total / samples.len() as f64)
    }
}

impl Objective for MobilityObjective {
    type Model = MobilityCategory;

    fn num_samples(&self) -> usize {
        self.train.len() + self.val.len()
    }

    fn loss_grad(&self, model: &MobilityCategory, rng: &mut ChaCha8Rng, g: &mut MobilityCategory) -> Result<f64> {
        let n = self.train.len() as f64;
        let w = &self.weights;
        let noisy = self.noise_sigma > 0.0;
        let mut loss = 0.0;
        for s in &self.train {
            let clean = model.forward(&s.zc, &s.zu, &self.zd, &s.policy, s.blm)?;
            let e = clean.y - s.ztarget;
            loss += w.fit * e * e / n;
            model.backward(&clean, 2.0 * w.fit * e / n, g);
            if !noisy {
                continue;
            }
            // Unemployment, cases, both.
            for (k, perturb_u, perturb_c) in [
                (w.noise, true, false),
                (w.noise_cases, false, true),
                (w.noise_both, true, true),
            ] {
                if k == 0.0 {
                    continue;
                }
                let zu = if perturb_u {
                    noisy_rows(rng, &s.zu, self.noise_sigma)
                } else {
                    s.zu.clone()
                };
                let zc = if perturb_c {
                    noisy_rows(rng, &s.zc, self.noise_sigma)
                } else {
                    s.zc.clone()
                };
                let pert = model.forward(&zc, &zu, &self.zd, &s.policy, s.blm)?;
                let d = pert.y - clean.y;
                loss += k * d * d / n;
                model.backward(&pert, 2.0 * k * d / n, g);
                model.backward(&clean, -2.0 * k * d / n, g);
            }
        }
        Ok(loss)
    }

    fn validation_loss(&self, model: &MobilityCategory) -> Result<Option<f64>> {
        if self.val.is_empty() {
            return Ok(None);
        }
        self.fit_mse(model, &self.val).map(Some)
    }
}
