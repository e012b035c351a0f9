//! Fully connected tanh networks with reverse-mode gradients, and Adam.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub w: DMatrix<f64>,
    pub b: DVector<f64>,
}

/// `tanh` hidden layers, linear output.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub layers: Vec<Dense>,
}

/// Activations kept from a forward pass for backpropagation.
#[derive(Debug, Clone)]
pub struct Trace {
    /// Input to each layer; `inputs[0]` is the network input.
    inputs: Vec<DVector<f64>>,
}

impl Mlp {
    /// Glorot-uniform weights, zero biases. When `out_scale` is set the last
    /// layer's weights are drawn from `±out_scale` instead.
    pub fn new<R: Rng>(sizes: &[usize], out_scale: Option<f64>, rng: &mut R) -> Self {
        assert!(sizes.len() >= 2, "an MLP needs input and output sizes");
        let n = sizes.len() - 1;
        let layers = (0..n)
            .map(|i| {
                let (fan_in, fan_out) = (sizes[i], sizes[i + 1]);
                let bound = match out_scale {
                    Some(s) if i + 1 == n => s,
                    _ => (6.0 / (fan_in + fan_out) as f64).sqrt(),
                };
                Dense {
                    w: DMatrix::from_fn(fan_out, fan_in, |_, _| rng.random_range(-bound..=bound)),
                    b: DVector::zeros(fan_out),
                }
            })
            .collect();
        Self { layers }
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].w.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().unwrap().w.nrows()
    }

    /// Layer sizes from input to output.
    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![self.input_dim()];
        s.extend(self.layers.iter().map(|l| l.w.nrows()));
        s
    }

    pub fn forward(&self, x: &DVector<f64>) -> DVector<f64> {
        self.forward_trace(x).0
    }

    pub fn forward_trace(&self, x: &DVector<f64>) -> (DVector<f64>, Trace) {
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut h = x.clone();
        let last = self.layers.len() - 1;
        for (i, l) in self.layers.iter().enumerate() {
            let mut z = &l.w * &h + &l.b;
            if i < last {
                z.apply(|v| *v = v.tanh());
            }
            inputs.push(h);
            h = z;
        }
        (h, Trace { inputs })
    }

    /// Accumulate `∂(doutᵀy)/∂params` into `grad` (layout of [`Mlp::params`])
    /// and return `∂(doutᵀy)/∂x`.
    pub fn backward(&self, trace: &Trace, dout: &DVector<f64>, grad: &mut [f64]) -> DVector<f64> {
        assert_eq!(grad.len(), self.n_params());
        self.backprop(trace, dout, Some(grad))
    }

    /// `∂(doutᵀy)/∂x` only.
    pub fn input_gradient(&self, trace: &Trace, dout: &DVector<f64>) -> DVector<f64> {
        self.backprop(trace, dout, None)
    }

    fn backprop(&self, trace: &Trace, dout: &DVector<f64>, mut grad: Option<&mut [f64]>) -> DVector<f64> {
        let offsets = self.offsets();
        let mut delta = dout.clone();
        for i in (0..self.layers.len()).rev() {
            let l = &self.layers[i];
            let input = &trace.inputs[i];
            let (r, c) = l.w.shape();
            if let Some(grad) = grad.as_deref_mut() {
                let off = offsets[i];
                // Column-major weights, then biases.
                for col in 0..c {
                    let xi = input[col];
                    if xi != 0.0 {
                        let g = &mut grad[off + col * r..off + (col + 1) * r];
                        for (gr, d) in g.iter_mut().zip(delta.iter()) {
                            *gr += d * xi;
                        }
                    }
                }
                for (gr, d) in grad[off + r * c..off + r * c + r].iter_mut().zip(delta.iter()) {
                    *gr += d;
                }
            }
            let mut back = l.w.tr_mul(&delta);
            if i > 0 {
                // Input of layer i is tanh of the previous pre-activation.
                for (b, a) in back.iter_mut().zip(input.iter()) {
                    *b *= 1.0 - a * a;
                }
            }
            delta = back;
        }
        delta
    }

    fn offsets(&self) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.layers.len());
        let mut acc = 0;
        for l in &self.layers {
            out.push(acc);
            acc += l.w.len() + l.b.len();
        }
        out
    }

    pub fn n_params(&self) -> usize {
        self.layers.iter().map(|l| l.w.len() + l.b.len()).sum()
    }

    /// Flat parameters: per layer, column-major weights then biases.
    pub fn params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n_params());
        for l in &self.layers {
            out.extend_from_slice(l.w.as_slice());
            out.extend_from_slice(l.b.as_slice());
        }
        out
    }

    pub fn set_params(&mut self, p: &[f64]) {
        assert_eq!(p.len(), self.n_params());
        let mut at = 0;
        for l in &mut self.layers {
            let nw = l.w.len();
            l.w.as_mut_slice().copy_from_slice(&p[at..at + nw]);
            at += nw;
            let nb = l.b.len();
            l.b.as_mut_slice().copy_from_slice(&p[at..at + nb]);
            at += nb;
        }
    }

    /// `self ← τ·src + (1 − τ)·self`.
    pub fn polyak(&mut self, src: &Mlp, tau: f64) {
        for (d, s) in self.layers.iter_mut().zip(&src.layers) {
            if tau == 1.0 {
                d.w.copy_from(&s.w);
                d.b.copy_from(&s.b);
            } else {
                d.w.zip_apply(&s.w, |a, b| *a = tau * b + (1.0 - tau) * *a);
                d.b.zip_apply(&s.b, |a, b| *a = tau * b + (1.0 - tau) * *a);
            }
        }
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.w.iter().chain(l.b.iter()).all(|v| v.is_finite()))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    pub fn new(n: usize, lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        assert_eq!(params.len(), self.m.len());
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        for i in 0..params.len() {
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * grad[i];
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * grad[i] * grad[i];
            params[i] -= self.lr * (self.m[i] / c1) / ((self.v[i] / c2).sqrt() + self.eps);
        }
    }

    pub fn step_mlp(&mut self, net: &mut Mlp, grad: &[f64]) {
        let mut p = net.params();
        self.step(&mut p, grad);
        net.set_params(&p);
    }
}
