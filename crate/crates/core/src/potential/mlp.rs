//! Dense readout network: `tanh` between layers, linear output.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::scalar::Real;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub n_in: usize,
    pub n_out: usize,
    /// Row-major `n_out × n_in`.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Dense {
    pub fn zeros(n_in: usize, n_out: usize) -> Self {
        Dense { n_in, n_out, weights: vec![0.0; n_in * n_out], bias: vec![0.0; n_out] }
    }

    fn n_params(&self) -> usize {
        self.weights.len() + self.bias.len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub layers: Vec<Dense>,
}

/// Cached forward pass: input plus post-activation outputs of hidden layers.
pub(crate) struct Tape<T> {
    acts: Vec<Vec<T>>,
}

impl Mlp {
    /// Widths `n_in → hidden[0] → … → 1`.
    pub fn new_random<R: Rng + ?Sized>(n_in: usize, hidden: &[usize], rng: &mut R) -> Self {
        let mut sizes = vec![n_in];
        sizes.extend_from_slice(hidden);
        sizes.push(1);
        let layers = sizes
            .windows(2)
            .map(|w| {
                let mut d = Dense::zeros(w[0], w[1]);
                let lim = (3.0 / w[0].max(1) as f64).sqrt();
                for x in d.weights.iter_mut() {
                    *x = rng.random_range(-lim..lim);
                }
                d
            })
            .collect();
        Mlp { layers }
    }

    pub fn n_in(&self) -> usize {
        self.layers[0].n_in
    }

    pub fn n_params(&self) -> usize {
        self.layers.iter().map(Dense::n_params).sum()
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(Error::Config("MLP has no layers".into()));
        }
        for (k, l) in self.layers.iter().enumerate() {
            if l.weights.len() != l.n_in * l.n_out || l.bias.len() != l.n_out {
                return Err(Error::Config(format!("MLP layer {k} has inconsistent shapes")));
            }
            if k > 0 && self.layers[k - 1].n_out != l.n_in {
                return Err(Error::Config(format!("MLP layer {k} input width mismatch")));
            }
        }
        if self.layers.last().unwrap().n_out != 1 {
            return Err(Error::Config("MLP output width must be 1".into()));
        }
        Ok(())
    }

    pub fn params(&self) -> impl Iterator<Item = &f64> {
        self.layers.iter().flat_map(|l| l.weights.iter().chain(l.bias.iter()))
    }

    pub fn params_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.layers.iter_mut().flat_map(|l| l.weights.iter_mut().chain(l.bias.iter_mut()))
    }

    pub fn forward(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.n_in() {
            return Err(Error::Config(format!("MLP expects {} inputs, got {}", self.n_in(), x.len())));
        }
        Ok(self.forward_tape(x).0)
    }

    pub(crate) fn forward_tape<T: Real>(&self, x: &[T]) -> (T, Tape<T>) {
        let mut acts = vec![x.to_vec()];
        let last = self.layers.len() - 1;
        for (k, layer) in self.layers.iter().enumerate() {
            let input = acts.last().unwrap();
            let mut out = Vec::with_capacity(layer.n_out);
            for o in 0..layer.n_out {
                let row = &layer.weights[o * layer.n_in..(o + 1) * layer.n_in];
                let mut z = T::cst(layer.bias[o]);
                for (w, a) in row.iter().zip(input) {
                    z += *a * *w;
                }
                out.push(if k == last { z } else { z.tanh() });
            }
            acts.push(out);
        }
        let y = acts.pop().unwrap()[0];
        (y, Tape { acts })
    }

    /// Back-propagates `dy` (the output adjoint). Returns the input adjoint and,
    /// when `param_grad` is given, accumulates parameter adjoints into it in
    /// [`Mlp::params`] order.
    pub(crate) fn backward<T: Real>(&self, tape: &Tape<T>, dy: T, mut param_grad: Option<&mut [T]>) -> Vec<T> {
        let n_layers = self.layers.len();
        let mut offsets = Vec::with_capacity(n_layers);
        let mut off = 0;
        for l in &self.layers {
            offsets.push(off);
            off += l.n_params();
        }
        let mut delta = vec![dy];
        for k in (0..n_layers).rev() {
            let layer = &self.layers[k];
            let input = &tape.acts[k];
            if let Some(g) = param_grad.as_deref_mut() {
                let base = offsets[k];
                for o in 0..layer.n_out {
                    let row = base + o * layer.n_in;
                    for i in 0..layer.n_in {
                        g[row + i] += delta[o] * input[i];
                    }
                    g[base + layer.weights.len() + o] += delta[o];
                }
            }
            let mut prev = vec![T::zero(); layer.n_in];
            for o in 0..layer.n_out {
                let row = &layer.weights[o * layer.n_in..(o + 1) * layer.n_in];
                for (p, w) in prev.iter_mut().zip(row) {
                    *p += delta[o] * *w;
                }
            }
            if k > 0 {
                // through tanh: d/dz tanh = 1 - a²
                for (p, a) in prev.iter_mut().zip(input) {
                    *p *= T::cst(1.0) - *a * *a;
                }
            }
            delta = prev;
        }
        delta
    }
}
