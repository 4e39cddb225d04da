use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Forecast accuracy against observed values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub mae: f64,
    /// Percent; `None` when some observed value is zero.
    pub mape: Option<f64>,
    pub rmse: f64,
    /// `None` when the observed values have no variance.
    pub r2: Option<f64>,
}

pub fn compute_metrics(pred: &[f64], truth: &[f64]) -> Result<MetricsReport> {
    if pred.len() != truth.len() {
        return Err(Error::Shape {
            context: "metrics inputs",
            expected: truth.len(),
            actual: pred.len(),
        });
    }
    if truth.len() < 2 {
        return Err(Error::Window {
            needed: 2,
            got: truth.len(),
        });
    }
    if pred.iter().chain(truth).any(|v| !v.is_finite()) {
        return Err(Error::Numeric {
            layer: "metrics inputs".into(),
        });
    }
    let n = truth.len() as f64;
    let errors: Vec<f64> = pred.iter().zip(truth).map(|(p, t)| p - t).collect();
    let mae = errors.iter().map(|e| e.abs()).sum::<f64>() / n;
    let sse: f64 = errors.iter().map(|e| e * e).sum();
    let rmse = (sse / n).sqrt();
    let mape = if truth.iter().any(|&t| t == 0.0) {
        None
    } else {
        Some(100.0 * errors.iter().zip(truth).map(|(e, t)| (e / t).abs()).sum::<f64>() / n)
    };
    let mean = truth.iter().sum::<f64>() / n;
    let sst: f64 = truth.iter().map(|t| (t - mean).powi(2)).sum();
    let r2 = (sst > 0.0).then(|| 1.0 - sse / sst);
    Ok(MetricsReport { mae, mape, rmse, r2 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn perfect_forecast() {
        let t = [3.0, 5.0, 8.0];
        let m = compute_metrics(&t, &t).unwrap();
        assert_eq!(
            m,
            MetricsReport {
                mae: 0.0,
                mape: Some(0.0),
                rmse: 0.0,
                r2: Some(1.0)
            }
        );
    }

    #[test]
    fn hand_computed_example() {
        let m = compute_metrics(&[2.0, 2.0, 2.0], &[1.0, 2.0, 3.0]).unwrap();
        assert!((m.mae - 2.0 / 3.0).abs() < 1e-15);
        assert!((m.rmse - (2.0f64 / 3.0).sqrt()).abs() < 1e-15);
        assert!((m.mape.unwrap() - 100.0 * (1.0 + 0.0 + 1.0 / 3.0) / 3.0).abs() < 1e-12);
        assert_eq!(m.r2, Some(0.0));
    }

    #[test]
    fn undefined_cases() {
        let m = compute_metrics(&[1.0, 1.0], &[0.0, 2.0]).unwrap();
        assert_eq!(m.mape, None);
        let m = compute_metrics(&[1.0, 3.0], &[2.0, 2.0]).unwrap();
        assert_eq!(m.r2, None);
        assert!(compute_metrics(&[1.0], &[1.0]).is_err());
        assert!(compute_metrics(&[1.0, 2.0], &[1.0]).is_err());
    }

    proptest! {
        #[test]
        fn report_invariants(pairs in prop::collection::vec((-1e3f64..1e3, 1.0f64..1e3), 2..40)) {
            let (pred, truth): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
            let m = compute_metrics(&pred, &truth).unwrap();
            prop_assert!(m.mae >= 0.0);
            prop_assert!(m.rmse >= m.mae - 1e-12 * m.mae.max(1.0));
            if let Some(r2) = m.r2 {
                prop_assert!(r2 <= 1.0);
            }
        }
    }
}
