use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{uniform_init, Parameters};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Identity,
    Tanh,
}

/// Fully connected layer `activation(W x + b)`, `W` stored row-major (out x in).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub n_in: usize,
    pub n_out: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
    pub activation: Activation,
}

impl Dense {
    pub fn zeros(n_in: usize, n_out: usize, activation: Activation) -> Self {
        Dense {
            n_in,
            n_out,
            weights: vec![0.0; n_in * n_out],
            bias: vec![0.0; n_out],
            activation,
        }
    }

    /// Uniform(-1/sqrt(n_in), 1/sqrt(n_in)) weights and biases.
    pub fn init<R: Rng + ?Sized>(n_in: usize, n_out: usize, activation: Activation, rng: &mut R) -> Self {
        let mut layer = Self::zeros(n_in, n_out, activation);
        uniform_init(rng, &mut layer.weights, n_in);
        uniform_init(rng, &mut layer.bias, n_in);
        layer
    }

    /// Builds a layer from explicit rows of `W`.
    pub fn from_rows(rows: &[Vec<f64>], bias: Vec<f64>, activation: Activation) -> Result<Self> {
        let n_out = rows.len();
        if bias.len() != n_out {
            return Err(Error::Shape {
                context: "dense bias",
                expected: n_out,
                actual: bias.len(),
            });
        }
        let n_in = rows.first().map_or(0, Vec::len);
        let mut weights = Vec::with_capacity(n_in * n_out);
        for row in rows {
            if row.len() != n_in {
                return Err(Error::Shape {
                    context: "dense weight row",
                    expected: n_in,
                    actual: row.len(),
                });
            }
            weights.extend_from_slice(row);
        }
        Ok(Dense {
            n_in,
            n_out,
            weights,
            bias,
            activation,
        })
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.n_in {
            return Err(Error::Shape {
                context: "dense input",
                expected: self.n_in,
                actual: x.len(),
            });
        }
        let mut y = self.bias.clone();
        for (o, yo) in y.iter_mut().enumerate() {
            let row = &self.weights[o * self.n_in..(o + 1) * self.n_in];
            *yo += row.iter().zip(x).map(|(w, xi)| w * xi).sum::<f64>();
            if self.activation == Activation::Tanh {
                *yo = yo.tanh();
            }
        }
        Ok(y)
    }

    /// Accumulates parameter gradients into `grads` and returns `dL/dx`.
    /// `y` is this layer's output for input `x`.
    pub fn backward(&self, x: &[f64], y: &[f64], dy: &[f64], grads: &mut Dense) -> Vec<f64> {
        let mut dx = vec![0.0; self.n_in];
        for o in 0..self.n_out {
            let dz = match self.activation {
                Activation::Identity => dy[o],
                Activation::Tanh => dy[o] * (1.0 - y[o] * y[o]),
            };
            if dz == 0.0 {
                continue;
            }
            grads.bias[o] += dz;
            let row = o * self.n_in;
            for i in 0..self.n_in {
                grads.weights[row + i] += dz * x[i];
                dx[i] += dz * self.weights[row + i];
            }
        }
        dx
    }
}

impl Parameters for Dense {
    fn visit(&self, f: &mut dyn FnMut(&[f64])) {
        f(&self.weights);
        f(&self.bias);
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut [f64])) {
        f(&mut self.weights);
        f(&mut self.bias);
    }
}

/// Left-to-right concatenation. Every part is expected to be nonempty.
pub fn concat(parts: &[&[f64]]) -> Vec<f64> {
    debug_assert!(parts.iter().all(|p| !p.is_empty()), "empty concat operand");
    parts.iter().flat_map(|p| p.iter().copied()).collect()
}
