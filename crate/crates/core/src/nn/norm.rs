use serde::{Deserialize, Serialize};

/// Per-feature z-scoring with statistics frozen at fit time.
///
/// Features with (near) zero spread keep a unit scale so they map to zero
/// rather than blowing up.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

const MIN_STD: f64 = 1e-12;

impl Standardizer {
    pub fn identity(n: usize) -> Self {
        Standardizer {
            mean: vec![0.0; n],
            std: vec![1.0; n],
        }
    }

    /// Fits mean and population standard deviation over `rows`.
    pub fn fit<'a, I>(n: usize, rows: I) -> Self
    where
        I: IntoIterator<Item = &'a [f64]>,
    {
        let mut sum = vec![0.0; n];
        let mut sum_sq = vec![0.0; n];
        let mut count = 0usize;
        let rows: Vec<&[f64]> = rows.into_iter().collect();
        for r in &rows {
            for k in 0..n {
                sum[k] += r[k];
            }
            count += 1;
        }
        if count == 0 {
            return Self::identity(n);
        }
        let mean: Vec<f64> = sum.iter().map(|s| s / count as f64).collect();
        for r in &rows {
            for k in 0..n {
                let d = r[k] - mean[k];
                sum_sq[k] += d * d;
            }
        }
        let std = sum_sq
            .iter()
            .zip(&mean)
            .map(|(s, m)| {
                let sd = (s / count as f64).sqrt();
                if sd <= MIN_STD * m.abs().max(1.0) {
                    1.0
                } else {
                    sd
                }
            })
            .collect();
        Standardizer { mean, std }
    }

    /// Fits a single scalar feature.
    pub fn fit_scalar(values: &[f64]) -> Self {
        Self::fit(1, values.iter().map(std::slice::from_ref))
    }

    pub fn len(&self) -> usize {
        self.mean.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mean.is_empty()
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .enumerate()
            .map(|(k, v)| (v - self.mean[k]) / self.std[k])
            .collect()
    }

    pub fn apply_one(&self, k: usize, v: f64) -> f64 {
        (v - self.mean[k]) / self.std[k]
    }

    pub fn invert_one(&self, k: usize, z: f64) -> f64 {
        self.mean[k] + self.std[k] * z
    }
}
