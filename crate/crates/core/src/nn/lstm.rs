use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{sigmoid, uniform_init, Parameters};
use crate::error::{Error, Result};

/// Single-layer unidirectional LSTM returning the last hidden state.
///
/// Gate rows are stacked as input, forget, candidate, output; each block has
/// `hidden` rows. `w_ih` is (4H x n_in), `w_hh` is (4H x H).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lstm {
    pub n_in: usize,
    pub hidden: usize,
    pub w_ih: Vec<f64>,
    pub w_hh: Vec<f64>,
    pub bias: Vec<f64>,
}

/// Per-step activations kept from a forward pass for backpropagation, stored
/// step-major in flat buffers.
#[derive(Debug, Clone)]
pub struct LstmTrace {
    steps: usize,
    xs: Vec<f64>,
    /// Post-nonlinearity gates `[i, f, g, o]`, 4H per step.
    gates: Vec<f64>,
    cs: Vec<f64>,
    hs: Vec<f64>,
}

impl Lstm {
    pub fn zeros(n_in: usize, hidden: usize) -> Self {
        Lstm {
            n_in,
            hidden,
            w_ih: vec![0.0; 4 * hidden * n_in],
            w_hh: vec![0.0; 4 * hidden * hidden],
            bias: vec![0.0; 4 * hidden],
        }
    }

    /// Uniform(-1/sqrt(n_in + H), ..) weights with the forget-gate bias at +1.
    pub fn init<R: Rng + ?Sized>(n_in: usize, hidden: usize, rng: &mut R) -> Self {
        let mut l = Self::zeros(n_in, hidden);
        let fan_in = n_in + hidden;
        uniform_init(rng, &mut l.w_ih, fan_in);
        uniform_init(rng, &mut l.w_hh, fan_in);
        uniform_init(rng, &mut l.bias, fan_in);
        l.bias[hidden..2 * hidden].fill(1.0);
        l
    }

    pub fn forward<S: AsRef<[f64]>>(&self, seq: &[S]) -> Result<Vec<f64>> {
        self.forward_trace(seq).map(|(h, _)| h)
    }

    pub fn forward_trace<S: AsRef<[f64]>>(&self, seq: &[S]) -> Result<(Vec<f64>, LstmTrace)> {
        if seq.is_empty() {
            return Err(Error::Domain("LSTM input sequence is empty".into()));
        }
        let h_n = self.hidden;
        let steps = seq.len();
        let mut trace = LstmTrace {
            steps,
            xs: Vec::with_capacity(steps * self.n_in),
            gates: vec![0.0; steps * 4 * h_n],
            cs: vec![0.0; steps * h_n],
            hs: vec![0.0; (steps + 1) * h_n],
        };
        let mut c_prev = vec![0.0; h_n];
        for (t, x) in seq.iter().enumerate() {
            let x = x.as_ref();
            if x.len() != self.n_in {
                return Err(Error::Shape {
                    context: "lstm step input",
                    expected: self.n_in,
                    actual: x.len(),
                });
            }
            trace.xs.extend_from_slice(x);
            let (done, rest) = trace.hs.split_at_mut((t + 1) * h_n);
            let h_prev = &done[t * h_n..];
            let z = &mut trace.gates[t * 4 * h_n..(t + 1) * 4 * h_n];
            for (r, zr) in z.iter_mut().enumerate() {
                let wi = &self.w_ih[r * self.n_in..(r + 1) * self.n_in];
                let wh = &self.w_hh[r * h_n..(r + 1) * h_n];
                *zr = self.bias[r]
                    + wi.iter().zip(x).map(|(w, v)| w * v).sum::<f64>()
                    + wh.iter().zip(h_prev).map(|(w, v)| w * v).sum::<f64>();
            }
            for k in 0..h_n {
                z[k] = sigmoid(z[k]);
                z[h_n + k] = sigmoid(z[h_n + k]);
                z[2 * h_n + k] = z[2 * h_n + k].tanh();
                z[3 * h_n + k] = sigmoid(z[3 * h_n + k]);
            }
            let c = &mut trace.cs[t * h_n..(t + 1) * h_n];
            let h = &mut rest[..h_n];
            for k in 0..h_n {
                c[k] = z[h_n + k] * c_prev[k] + z[k] * z[2 * h_n + k];
                h[k] = z[3 * h_n + k] * c[k].tanh();
            }
            c_prev.copy_from_slice(c);
        }
        let h_last = trace.hs[steps * h_n..].to_vec();
        Ok((h_last, trace))
    }

    /// Backpropagation through time from a gradient on the last hidden state.
    /// Accumulates into `grads` and returns the input gradients, step-major.
    pub fn backward(&self, trace: &LstmTrace, dh_last: &[f64], grads: &mut Lstm) -> Vec<f64> {
        let h_n = self.hidden;
        let n_in = self.n_in;
        let mut dxs = vec![0.0; trace.steps * n_in];
        let mut dh = dh_last.to_vec();
        let mut dc = vec![0.0; h_n];
        let mut da = vec![0.0; 4 * h_n];
        let zeros = vec![0.0; h_n];
        for t in (0..trace.steps).rev() {
            let gates = &trace.gates[t * 4 * h_n..(t + 1) * 4 * h_n];
            let c = &trace.cs[t * h_n..(t + 1) * h_n];
            let c_prev = if t > 0 {
                &trace.cs[(t - 1) * h_n..t * h_n]
            } else {
                &zeros[..]
            };
            let h_prev = &trace.hs[t * h_n..(t + 1) * h_n];
            for k in 0..h_n {
                let (i, f, g, o) = (gates[k], gates[h_n + k], gates[2 * h_n + k], gates[3 * h_n + k]);
                let tc = c[k].tanh();
                let d_o = dh[k] * tc;
                dc[k] += dh[k] * o * (1.0 - tc * tc);
                let d_i = dc[k] * g;
                let d_g = dc[k] * i;
                let d_f = dc[k] * c_prev[k];
                da[k] = d_i * i * (1.0 - i);
                da[h_n + k] = d_f * f * (1.0 - f);
                da[2 * h_n + k] = d_g * (1.0 - g * g);
                da[3 * h_n + k] = d_o * o * (1.0 - o);
                dc[k] *= f;
            }
            let x = &trace.xs[t * n_in..(t + 1) * n_in];
            let dx = &mut dxs[t * n_in..(t + 1) * n_in];
            dh.fill(0.0);
            for (r, &dar) in da.iter().enumerate() {
                if dar == 0.0 {
                    continue;
                }
                grads.bias[r] += dar;
                let wi = r * n_in;
                for j in 0..n_in {
                    grads.w_ih[wi + j] += dar * x[j];
                    dx[j] += dar * self.w_ih[wi + j];
                }
                let wh = r * h_n;
                for j in 0..h_n {
                    grads.w_hh[wh + j] += dar * h_prev[j];
                    dh[j] += dar * self.w_hh[wh + j];
                }
            }
        }
        dxs
    }
}

impl Parameters for Lstm {
    fn visit(&self, f: &mut dyn FnMut(&[f64])) {
        f(&self.w_ih);
        f(&self.w_hh);
        f(&self.bias);
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut [f64])) {
        f(&mut self.w_ih);
        f(&mut self.w_hh);
        f(&mut self.bias);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// One cell application written out gate by gate.
    fn reference_cell(l: &Lstm, x: &[f64], h: &[f64], c: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let n = l.hidden;
        let pre = |r: usize| {
            l.bias[r]
                + (0..l.n_in).map(|j| l.w_ih[r * l.n_in + j] * x[j]).sum::<f64>()
                + (0..n).map(|j| l.w_hh[r * n + j] * h[j]).sum::<f64>()
        };
        let mut h2 = vec![0.0; n];
        let mut c2 = vec![0.0; n];
        for k in 0..n {
            let i = sigmoid(pre(k));
            let f = sigmoid(pre(n + k));
            let g = pre(2 * n + k).tanh();
            let o = sigmoid(pre(3 * n + k));
            c2[k] = f * c[k] + i * g;
            h2[k] = o * c2[k].tanh();
        }
        (h2, c2)
    }

    #[test]
    fn zero_parameters_give_zero_state() {
        let l = Lstm::zeros(3, 4);
        let seq = vec![vec![1.0, -2.0, 5.0]; 9];
        assert_eq!(l.forward(&seq).unwrap(), vec![0.0; 4]);
    }

    #[test]
    fn single_step_matches_one_cell_from_zero_state() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let l = Lstm::init(2, 3, &mut rng);
        let x = vec![0.4, -0.9];
        let (h_ref, _) = reference_cell(&l, &x, &[0.0; 3], &[0.0; 3]);
        assert_eq!(l.forward(&[x]).unwrap(), h_ref);
    }

    #[test]
    fn multi_step_matches_reference_recurrence() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let l = Lstm::init(2, 3, &mut rng);
        let seq: Vec<Vec<f64>> = (0..7).map(|t| vec![(t as f64).sin(), 0.1 * t as f64]).collect();
        let (mut h, mut c) = (vec![0.0; 3], vec![0.0; 3]);
        for x in &seq {
            let (h2, c2) = reference_cell(&l, x, &h, &c);
            h = h2;
            c = c2;
        }
        let out = l.forward(&seq).unwrap();
        for k in 0..3 {
            assert!((out[k] - h[k]).abs() < 1e-15);
        }
    }

    #[test]
    fn saturated_gates_reach_the_closed_form_limit() {
        // Input gate open, forget gate shut, candidate bias 1, output gate at
        // sigma(0): every step gives c = tanh(1) and h = tanh(tanh(1)) / 2.
        let mut l = Lstm::zeros(1, 1);
        l.bias = vec![40.0, -40.0, 1.0, 0.0];
        let seq = vec![vec![0.3]; 5];
        let (mut h, mut c) = (vec![0.0], vec![0.0]);
        for x in &seq {
            let (h2, c2) = reference_cell(&l, x, &h, &c);
            h = h2;
            c = c2;
        }
        let out = l.forward(&seq).unwrap();
        let limit = sigmoid(0.0) * 1f64.tanh().tanh();
        assert!((out[0] - h[0]).abs() < 1e-15);
        assert!((out[0] - limit).abs() < 1e-12);
    }

    #[test]
    fn empty_sequence_is_a_domain_error() {
        let l = Lstm::zeros(1, 1);
        let seq: Vec<Vec<f64>> = vec![];
        assert!(matches!(l.forward(&seq), Err(Error::Domain(_))));
    }
}
