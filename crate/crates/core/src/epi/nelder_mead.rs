use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NelderMeadConfig {
    pub reflection: f64,
    pub expansion: f64,
    pub contraction: f64,
    pub shrink: f64,
    /// Stop once the spread of vertex values is at most this ...
    pub f_tolerance: f64,
    /// ... and every vertex lies within this distance (max-norm) of the best.
    pub x_tolerance: f64,
    pub max_iter: usize,
    /// Per-coordinate offsets for the initial simplex. When `None`, 5% of the
    /// coordinate (or 2.5e-4 for zero coordinates).
    pub initial_step: Option<Vec<f64>>,
}

impl Default for NelderMeadConfig {
    fn default() -> Self {
        NelderMeadConfig {
            reflection: 1.0,
            expansion: 2.0,
            contraction: 0.5,
            shrink: 0.5,
            f_tolerance: 1e-12,
            x_tolerance: 1e-8,
            max_iter: 10_000,
            initial_step: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NelderMeadResult {
    pub x: Vec<f64>,
    pub fx: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub converged: bool,
}

/// Derivative-free simplex minimization. NaN objective values are treated as
/// `+inf`, so infeasible regions can be expressed by returning either.
pub fn nelder_mead<F>(mut objective: F, x0: &[f64], config: &NelderMeadConfig) -> Result<NelderMeadResult>
where
    F: FnMut(&[f64]) -> f64,
{
    let n = x0.len();
    if n == 0 {
        return Err(Error::Domain("Nelder-Mead needs at least one dimension".into()));
    }
    let mut evaluations = 0usize;
    let mut eval = |x: &[f64]| {
        evaluations += 1;
        let v = objective(x);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    };
    let f0 = eval(x0);
    if !f0.is_finite() {
        return Err(Error::Domain("objective is not finite at the starting point".into()));
    }

    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n + 1);
    simplex.push((x0.to_vec(), f0));
    for k in 0..n {
        let mut x = x0.to_vec();
        let step = match &config.initial_step {
            Some(steps) => steps[k],
            None if x0[k] != 0.0 => 0.05 * x0[k],
            None => 2.5e-4,
        };
        x[k] += step;
        let f = eval(&x);
        simplex.push((x, f));
    }

    let mut iterations = 0;
    let mut converged = false;
    loop {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let best = simplex[0].1;
        let worst = simplex[n].1;
        let spread = worst - best;
        let diameter = simplex[1..]
            .iter()
            .flat_map(|(x, _)| x.iter().zip(&simplex[0].0).map(|(a, b)| (a - b).abs()))
            .fold(0.0, f64::max);
        if spread <= config.f_tolerance && diameter <= config.x_tolerance {
            converged = true;
            break;
        }
        if iterations >= config.max_iter {
            break;
        }
        iterations += 1;

        let mut centroid = vec![0.0; n];
        for (x, _) in &simplex[..n] {
            for k in 0..n {
                centroid[k] += x[k] / n as f64;
            }
        }
        let along = |t: f64| -> Vec<f64> {
            centroid
                .iter()
                .zip(&simplex[n].0)
                .map(|(c, w)| c + t * (c - w))
                .collect()
        };

        let xr = along(config.reflection);
        let fr = eval(&xr);
        if fr < best {
            let xe = along(config.reflection * config.expansion);
            let fe = eval(&xe);
            simplex[n] = if fe < fr { (xe, fe) } else { (xr, fr) };
            continue;
        }
        if fr < simplex[n - 1].1 {
            simplex[n] = (xr, fr);
            continue;
        }
        let (xc, fc, accept) = if fr < worst {
            let xc = along(config.reflection * config.contraction);
            let fc = eval(&xc);
            let ok = fc <= fr;
            (xc, fc, ok)
        } else {
            let xc = along(-config.contraction);
            let fc = eval(&xc);
            let ok = fc < worst;
            (xc, fc, ok)
        };
        if accept {
            simplex[n] = (xc, fc);
            continue;
        }
        let x_best = simplex[0].0.clone();
        for vertex in simplex.iter_mut().skip(1) {
            for k in 0..n {
                vertex.0[k] = x_best[k] + config.shrink * (vertex.0[k] - x_best[k]);
            }
            vertex.1 = eval(&vertex.0);
        }
    }

    let (x, fx) = simplex.swap_remove(0);
    Ok(NelderMeadResult {
        x,
        fx,
        iterations,
        evaluations,
        converged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_dimensional_quadratic() {
        let r = nelder_mead(|x| (x[0] - 3.0).powi(2), &[0.0], &NelderMeadConfig::default()).unwrap();
        assert!(r.converged);
        assert!((r.x[0] - 3.0).abs() < 1e-6);
    }

    #[test]
    fn four_dimensional_rosenbrock_bowl() {
        // Shifted so the optimum (at `SHIFT + 1`) is off the comparison grid.
        const SHIFT: [f64; 4] = [0.13, -0.07, 0.21, 0.05];
        let rosen = |x: &[f64]| {
            let y: Vec<f64> = x.iter().zip(SHIFT).map(|(a, s)| a - s).collect();
            (0..3)
                .map(|k| 100.0 * (y[k + 1] - y[k] * y[k]).powi(2) + (1.0 - y[k]).powi(2))
                .sum::<f64>()
        };
        let config = NelderMeadConfig {
            max_iter: 20_000,
            ..Default::default()
        };
        let r = nelder_mead(rosen, &[0.5, 0.5, 0.5, 0.5], &config).unwrap();
        assert!(r.converged, "{r:?}");
        assert!(r.iterations < config.max_iter);
        let mut grid_best = f64::INFINITY;
        let ticks: Vec<f64> = (0..=16).map(|k| -2.0 + 0.25 * k as f64).collect();
        for &a in &ticks {
            for &b in &ticks {
                for &c in &ticks {
                    for &d in &ticks {
                        grid_best = grid_best.min(rosen(&[a, b, c, d]));
                    }
                }
            }
        }
        assert!(r.fx < grid_best);
        assert!(r.fx < 1e-8, "{r:?}");
        for (x, s) in r.x.iter().zip(SHIFT) {
            assert!((x - s - 1.0).abs() < 1e-3);
        }
    }

    #[test]
    fn nan_region_never_wins() {
        let f = |x: &[f64]| if x[0] < 1.0 { f64::NAN } else { (x[0] - 0.5).powi(2) };
        let r = nelder_mead(f, &[2.0], &NelderMeadConfig::default()).unwrap();
        assert!(r.fx.is_finite());
        assert!(r.x[0] >= 1.0);
        assert!((r.x[0] - 1.0).abs() < 1e-4);
    }

    #[test]
    fn non_finite_start_is_rejected() {
        assert!(nelder_mead(|_| f64::INFINITY, &[1.0], &NelderMeadConfig::default()).is_err());
    }
}
