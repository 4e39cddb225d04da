use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma;

use crate::error::{Error, Result};

/// Incubation delays are truncated to `1..=MAX_INCUBATION_DAYS` whole days.
pub const MAX_INCUBATION_DAYS: usize = 21;

/// Weibull-distributed delay between infection and confirmation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IncubationDist {
    pub shape: f64,
    pub scale: f64,
}

impl Default for IncubationDist {
    /// Shape 2, scale 7.9 days: a mean of about 7 days.
    fn default() -> Self {
        IncubationDist { shape: 2.0, scale: 7.9 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IncubationMode {
    /// Spread each day's infections over the delay distribution.
    Expected,
    /// Draw every infection's delay independently.
    Sampled { seed: u64 },
}

impl IncubationDist {
    pub fn validate(&self) -> Result<()> {
        if self.shape > 0.0 && self.scale > 0.0 && self.shape.is_finite() && self.scale.is_finite() {
            Ok(())
        } else {
            Err(Error::Domain(format!("invalid incubation distribution {self:?}")))
        }
    }

    pub fn cdf(&self, x: f64) -> f64 {
        if x <= 0.0 {
            0.0
        } else {
            -(-(x / self.scale).powf(self.shape)).exp_m1()
        }
    }

    /// Mean of the untruncated continuous distribution.
    pub fn mean(&self) -> f64 {
        self.scale * gamma(1.0 + 1.0 / self.shape)
    }

    /// `pmf()[k - 1]` is the probability of a delay of `k` days: the CDF
    /// difference over `(k - 1, k]`, renormalized over the truncation range.
    pub fn pmf(&self) -> [f64; MAX_INCUBATION_DAYS] {
        let mut p = [0.0; MAX_INCUBATION_DAYS];
        let total = self.cdf(MAX_INCUBATION_DAYS as f64);
        for (k, pk) in p.iter_mut().enumerate() {
            *pk = (self.cdf((k + 1) as f64) - self.cdf(k as f64)) / total;
        }
        p
    }

    /// Mean of the truncated discrete delay.
    pub fn truncated_mean(&self) -> f64 {
        self.pmf().iter().enumerate().map(|(k, p)| (k + 1) as f64 * p).sum()
    }

    /// Inverse-CDF draw restricted to the truncation range, ceiled to whole days.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let upper = self.cdf(MAX_INCUBATION_DAYS as f64);
        let u: f64 = rng.random::<f64>() * upper;
        let x = self.scale * (-(-u).ln_1p()).powf(1.0 / self.shape);
        (x.ceil() as usize).clamp(1, MAX_INCUBATION_DAYS)
    }
}

/// Maps daily infections to daily confirmations. The output has
/// `infections.len() + MAX_INCUBATION_DAYS` entries, so no mass is dropped.
pub fn incubation_map(infections: &[f64], dist: &IncubationDist, mode: IncubationMode) -> Result<Vec<f64>> {
    dist.validate()?;
    if let Some(bad) = infections.iter().find(|v| !(**v >= 0.0) || !v.is_finite()) {
        return Err(Error::Domain(format!(
            "infection counts must be finite and nonnegative, got {bad}"
        )));
    }
    let pmf = dist.pmf();
    let mut out = vec![0.0; infections.len() + MAX_INCUBATION_DAYS];
    match mode {
        IncubationMode::Expected => {
            for (t, &n) in infections.iter().enumerate() {
                for (k, p) in pmf.iter().enumerate() {
                    out[t + k + 1] += n * p;
                }
            }
        }
        IncubationMode::Sampled { seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for (t, &n) in infections.iter().enumerate() {
                // Multinomial split of the day's whole infections via
                // successive conditional binomials.
                let mut remaining = n.round() as u64;
                let mut mass_left = 1.0;
                for (k, &p) in pmf.iter().enumerate() {
                    if remaining == 0 {
                        break;
                    }
                    let q = if k + 1 == MAX_INCUBATION_DAYS {
                        1.0
                    } else {
                        (p / mass_left).clamp(0.0, 1.0)
                    };
                    let draw = Binomial::new(remaining, q)
                        .map_err(|e| Error::Domain(format!("binomial draw: {e}")))?
                        .sample(&mut rng);
                    out[t + k + 1] += draw as f64;
                    remaining -= draw;
                    mass_left -= p;
                }
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_mean_is_about_a_week() {
        let d = IncubationDist::default();
        assert!((d.mean() - 7.0).abs() < 0.05, "{}", d.mean());
        assert_eq!(d.mean().round(), 7.0);
    }

    #[test]
    fn pmf_is_normalized() {
        let p = IncubationDist::default().pmf();
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-14);
        assert!(p.iter().all(|&v| v > 0.0));
    }

    #[test]
    fn zero_infections_give_zero_confirmations() {
        let out = incubation_map(&[0.0; 10], &IncubationDist::default(), IncubationMode::Expected).unwrap();
        assert!(out.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn expected_mode_conserves_mass() {
        let out = incubation_map(&[1000.0], &IncubationDist::default(), IncubationMode::Expected).unwrap();
        assert!((out.iter().sum::<f64>() - 1000.0).abs() < 1e-6);
        assert_eq!(out[0], 0.0);
    }

    #[test]
    fn tight_distribution_is_a_shift() {
        let d = IncubationDist {
            shape: 400.0,
            scale: 7.9,
        };
        let inf = [0.0, 50.0, 10.0, 0.0, 30.0];
        let out = incubation_map(&inf, &d, IncubationMode::Expected).unwrap();
        let shift = d.scale.round() as usize;
        for (t, &n) in inf.iter().enumerate() {
            assert!((out[t + shift] - n).abs() < 1e-6 * n.max(1.0));
        }
    }

    #[test]
    fn sampled_mode_is_reproducible_and_conserves_whole_counts() {
        let d = IncubationDist::default();
        let inf = [120.0, 0.0, 37.0, 1000.0];
        let a = incubation_map(&inf, &d, IncubationMode::Sampled { seed: 42 }).unwrap();
        let b = incubation_map(&inf, &d, IncubationMode::Sampled { seed: 42 }).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.iter().sum::<f64>(), 1157.0);
    }

    #[test]
    fn draws_stay_in_range_and_repeat_under_a_seed() {
        let d = IncubationDist::default();
        let mut r1 = ChaCha8Rng::seed_from_u64(7);
        let mut r2 = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..10_000 {
            let k = d.sample(&mut r1);
            assert!((1..=MAX_INCUBATION_DAYS).contains(&k));
            assert_eq!(k, d.sample(&mut r2));
        }
    }
}
