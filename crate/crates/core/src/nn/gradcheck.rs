use super::Parameters;
use crate::error::Result;

/// Step of the five-point stencil used by [`grad_check`]. Its truncation error
/// is O(h^4), so a larger step keeps rounding noise low on O(10) losses.
pub const GRAD_CHECK_STEP: f64 = 1e-3;

/// Magnitude below which gradients are compared absolutely rather than
/// relatively; keeps exactly-zero partials from amplifying rounding noise.
const RELATIVE_FLOOR: f64 = 1e-6;

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(RELATIVE_FLOOR)
}

/// Compares every partial in `analytic` against a fourth-order central
/// difference of `loss` around `model` and returns the worst relative error.
pub fn grad_check<M, F>(model: &M, analytic: &M, mut loss: F) -> Result<f64>
where
    M: Parameters + Clone,
    F: FnMut(&M) -> Result<f64>,
{
    let base = model.to_flat();
    let grads = analytic.to_flat();
    assert_eq!(base.len(), grads.len(), "gradient shape differs from model");
    let mut probe = model.clone();
    let mut flat = base.clone();
    let mut worst = 0.0f64;
    let h = GRAD_CHECK_STEP;
    for k in 0..base.len() {
        let mut at = |offset: f64| -> Result<f64> {
            flat[k] = base[k] + offset;
            probe.load_flat(&flat);
            loss(&probe)
        };
        let (p2, p1, m1, m2) = (at(2.0 * h)?, at(h)?, at(-h)?, at(-2.0 * h)?);
        flat[k] = base[k];
        let numeric = (8.0 * (p1 - m1) - (p2 - m2)) / (12.0 * h);
        worst = worst.max(relative_error(grads[k], numeric));
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{Activation, Dense, Lstm};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn linear_loss(l: &Dense, x: &[f64]) -> (f64, Dense) {
        let y = l.forward(x).unwrap();
        let loss = 0.5 * y.iter().map(|v| v * v).sum::<f64>();
        let mut g = l.zeros_like();
        l.backward(x, &y, &y, &mut g);
        (loss, g)
    }

    #[test]
    fn linear_network_is_exact_to_rounding() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let l = Dense::init(4, 3, Activation::Identity, &mut rng);
        let x = [0.9, -1.1, 0.6, 1.4];
        let (_, g) = linear_loss(&l, &x);
        let err = grad_check(&l, &g, |m| Ok(linear_loss(m, &x).0)).unwrap();
        assert!(err < 1e-9, "{err}");
    }

    #[test]
    fn corrupted_gradient_is_detected() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let l = Dense::init(3, 2, Activation::Tanh, &mut rng);
        let x = [0.5, -0.2, 0.8];
        let (_, mut g) = linear_loss(&l, &x);
        g.weights[1] += 0.1;
        let err = grad_check(&l, &g, |m| Ok(linear_loss(m, &x).0)).unwrap();
        assert!(err > 1e-2, "{err}");
    }

    #[test]
    fn lstm_bptt_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let l = Lstm::init(2, 3, &mut rng);
        let seq: Vec<Vec<f64>> = (0..6)
            .map(|t| vec![(t as f64 * 0.7).cos(), 0.2 * t as f64 - 0.5])
            .collect();
        let target = [0.3, -0.2, 0.1];
        let loss = |m: &Lstm| -> Result<f64> {
            let h = m.forward(&seq)?;
            Ok(0.5 * h.iter().zip(&target).map(|(a, b)| (a - b) * (a - b)).sum::<f64>())
        };
        let (h, trace) = l.forward_trace(&seq).unwrap();
        let dh: Vec<f64> = h.iter().zip(&target).map(|(a, b)| a - b).collect();
        let mut g = l.zeros_like();
        l.backward(&trace, &dh, &mut g);
        let err = grad_check(&l, &g, loss).unwrap();
        assert!(err < 1e-6, "{err}");
    }

    #[test]
    fn unused_parameter_has_exactly_zero_gradient() {
        // With a one-step sequence the recurrent weights never see a nonzero
        // hidden state.
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let l = Lstm::init(2, 2, &mut rng);
        let (_, trace) = l.forward_trace(&[vec![0.3, 0.4]]).unwrap();
        let mut g = l.zeros_like();
        l.backward(&trace, &[1.0, -1.0], &mut g);
        assert!(g.w_hh.iter().all(|&v| v == 0.0));
    }
}
