//! Degradation-token adapter.
//!
//! Maps the 6-d log descriptor `d` to a `D`-dimensional conditioning token:
//!
//! ```text
//! static:   out = LN(MLP(d))
//! dynamic:  out = LN(MLP(d) * (1 + gamma_t) + b_t),  [gamma_t, b_t] = MLP_t(PE(t))
//! MLP(d)   = W2 dropout(silu(W1 d + b1)) + b2           (6 -> 128 -> D)
//! MLP_t(p) = T2 silu(T1 p + c1) + c2                     (128 -> 128 -> 2D)
//! ```
//!
//! LayerNorm parameters are shared by both paths, so a zeroed timestep MLP
//! makes the dynamic token equal the static one bit for bit. With `D = 512`
//! the adapter holds 216,576 parameters.

mod attention;
pub mod io;
mod linear;

pub use attention::{append_token, cross_attention, TokenMatrix};
pub use linear::{silu, silu_grad, Linear};

use crate::error::{invalid, Result};
use crate::rng::Rng;

pub const DESCRIPTOR_DIM: usize = 6;
pub const HIDDEN_DIM: usize = 128;
pub const PE_DIM: usize = 128;
pub const DEFAULT_TOKEN_DIM: usize = 512;
pub const DROPOUT_P: f64 = 0.1;
pub const LN_EPS: f64 = 1e-5;

/// Sinusoidal timestep embedding:
/// `pe[2i] = sin(t / 10000^(2i/dim))`, `pe[2i+1] = cos(t / 10000^(2i/dim))`.
pub fn sinusoidal_pe(t: u32, dim: usize) -> Result<Vec<f64>> {
    if dim == 0 || !dim.is_multiple_of(2) {
        return invalid(format!("embedding dim must be even and positive, got {dim}"));
    }
    let mut pe = vec![0.0; dim];
    for i in 0..dim / 2 {
        let freq = 10000f64.powf((2 * i) as f64 / dim as f64);
        let a = t as f64 / freq;
        pe[2 * i] = a.sin();
        pe[2 * i + 1] = a.cos();
    }
    Ok(pe)
}

/// All learnable parameters of the adapter. A value of this type also
/// serves as the gradient accumulator for itself.
#[derive(Debug, Clone, PartialEq)]
pub struct AdapterWeights {
    pub mlp1: Linear,
    pub mlp2: Linear,
    pub ln_gain: Vec<f64>,
    pub ln_bias: Vec<f64>,
    pub t_mlp1: Linear,
    pub t_mlp2: Linear,
}

impl AdapterWeights {
    /// All-zero weights with unit LayerNorm gain.
    pub fn zeros(token_dim: usize) -> Self {
        let mut w = Self::zero_grad(token_dim);
        w.ln_gain.fill(1.0);
        w
    }

    /// Every entry zero (including the LayerNorm gain); the shape of a
    /// gradient buffer.
    pub fn zero_grad(token_dim: usize) -> Self {
        Self {
            mlp1: Linear::zeros(DESCRIPTOR_DIM, HIDDEN_DIM),
            mlp2: Linear::zeros(HIDDEN_DIM, token_dim),
            ln_gain: vec![0.0; token_dim],
            ln_bias: vec![0.0; token_dim],
            t_mlp1: Linear::zeros(PE_DIM, HIDDEN_DIM),
            t_mlp2: Linear::zeros(HIDDEN_DIM, 2 * token_dim),
        }
    }

    /// Linear layers uniform in `+-1/sqrt(fan_in)`; LayerNorm gain 1, bias 0.
    pub fn init(token_dim: usize, rng: &mut Rng) -> Self {
        Self {
            mlp1: Linear::init(DESCRIPTOR_DIM, HIDDEN_DIM, rng),
            mlp2: Linear::init(HIDDEN_DIM, token_dim, rng),
            ln_gain: vec![1.0; token_dim],
            ln_bias: vec![0.0; token_dim],
            t_mlp1: Linear::init(PE_DIM, HIDDEN_DIM, rng),
            t_mlp2: Linear::init(HIDDEN_DIM, 2 * token_dim, rng),
        }
    }

    pub fn token_dim(&self) -> usize {
        self.ln_gain.len()
    }

    pub fn param_count(&self) -> usize {
        self.mlp1.param_count()
            + self.mlp2.param_count()
            + self.ln_gain.len()
            + self.ln_bias.len()
            + self.t_mlp1.param_count()
            + self.t_mlp2.param_count()
    }

    /// Zeroes the timestep MLP, which turns the dynamic path into the
    /// static one.
    pub fn clear_timestep_mlp(&mut self) {
        let d = self.token_dim();
        self.t_mlp1 = Linear::zeros(PE_DIM, HIDDEN_DIM);
        self.t_mlp2 = Linear::zeros(HIDDEN_DIM, 2 * d);
    }

    /// Named parameter groups in a fixed order, with their shapes.
    pub fn groups(&self) -> Vec<(&'static str, Vec<usize>, &[f64])> {
        vec![
            ("mlp1.weight", vec![HIDDEN_DIM, DESCRIPTOR_DIM], &self.mlp1.weight[..]),
            ("mlp1.bias", vec![HIDDEN_DIM], &self.mlp1.bias[..]),
            ("mlp2.weight", vec![self.mlp2.out_dim, HIDDEN_DIM], &self.mlp2.weight[..]),
            ("mlp2.bias", vec![self.mlp2.out_dim], &self.mlp2.bias[..]),
            ("ln.gain", vec![self.ln_gain.len()], &self.ln_gain[..]),
            ("ln.bias", vec![self.ln_bias.len()], &self.ln_bias[..]),
            ("t_mlp1.weight", vec![HIDDEN_DIM, PE_DIM], &self.t_mlp1.weight[..]),
            ("t_mlp1.bias", vec![HIDDEN_DIM], &self.t_mlp1.bias[..]),
            ("t_mlp2.weight", vec![self.t_mlp2.out_dim, HIDDEN_DIM], &self.t_mlp2.weight[..]),
            ("t_mlp2.bias", vec![self.t_mlp2.out_dim], &self.t_mlp2.bias[..]),
        ]
    }

    /// Mutable views of the groups, same order as [`AdapterWeights::groups`].
    pub fn groups_mut(&mut self) -> Vec<(&'static str, &mut [f64])> {
        vec![
            ("mlp1.weight", &mut self.mlp1.weight[..]),
            ("mlp1.bias", &mut self.mlp1.bias[..]),
            ("mlp2.weight", &mut self.mlp2.weight[..]),
            ("mlp2.bias", &mut self.mlp2.bias[..]),
            ("ln.gain", &mut self.ln_gain[..]),
            ("ln.bias", &mut self.ln_bias[..]),
            ("t_mlp1.weight", &mut self.t_mlp1.weight[..]),
            ("t_mlp1.bias", &mut self.t_mlp1.bias[..]),
            ("t_mlp2.weight", &mut self.t_mlp2.weight[..]),
            ("t_mlp2.bias", &mut self.t_mlp2.bias[..]),
        ]
    }

    /// `self += alpha * other`, group by group.
    pub fn axpy(&mut self, alpha: f64, other: &AdapterWeights) {
        for ((_, dst), (_, _, src)) in self.groups_mut().into_iter().zip(other.groups()) {
            for (d, s) in dst.iter_mut().zip(src) {
                *d += alpha * s;
            }
        }
    }

    fn validate(&self) -> Result<()> {
        let d = self.token_dim();
        let shapes_ok = self.mlp1.in_dim == DESCRIPTOR_DIM
            && self.mlp1.out_dim == HIDDEN_DIM
            && self.mlp2.in_dim == HIDDEN_DIM
            && self.mlp2.out_dim == d
            && self.ln_bias.len() == d
            && self.t_mlp1.in_dim == PE_DIM
            && self.t_mlp1.out_dim == HIDDEN_DIM
            && self.t_mlp2.in_dim == HIDDEN_DIM
            && self.t_mlp2.out_dim == 2 * d;
        if !shapes_ok || d == 0 {
            return invalid("adapter weight shapes are inconsistent");
        }
        Ok(())
    }
}

/// Intermediate values of one forward pass, kept for the backward pass.
#[derive(Debug, Clone)]
pub struct AdapterTrace {
    d: [f64; DESCRIPTOR_DIM],
    h_pre: Vec<f64>,
    /// Per-unit dropout multiplier (0 or 1/(1-p)); `None` when inactive.
    mask: Option<Vec<f64>>,
    h: Vec<f64>,
    m: Vec<f64>,
    timestep: Option<TimestepTrace>,
    xhat: Vec<f64>,
    inv_std: f64,
}

#[derive(Debug, Clone)]
struct TimestepTrace {
    pe: Vec<f64>,
    pre: Vec<f64>,
    hidden: Vec<f64>,
    gamma: Vec<f64>,
}

fn check_inputs(d: &[f64; DESCRIPTOR_DIM], w: &AdapterWeights) -> Result<()> {
    if d.iter().any(|v| !v.is_finite()) {
        return invalid("descriptor contains non-finite values");
    }
    w.validate()
}

/// Forward pass. `timestep = None` gives the static token; `dropout = None`
/// disables dropout.
pub fn forward(
    d: &[f64; DESCRIPTOR_DIM],
    timestep: Option<u32>,
    w: &AdapterWeights,
    dropout: Option<&mut Rng>,
) -> Result<(Vec<f64>, AdapterTrace)> {
    check_inputs(d, w)?;
    let h_pre = w.mlp1.forward(d);
    let mut h: Vec<f64> = h_pre.iter().map(|&x| silu(x)).collect();
    let mask = dropout.map(|rng| {
        let keep = 1.0 / (1.0 - DROPOUT_P);
        let mask: Vec<f64> = (0..h.len())
            .map(|_| if rng.bernoulli(DROPOUT_P) { 0.0 } else { keep })
            .collect();
        for (v, k) in h.iter_mut().zip(&mask) {
            *v *= k;
        }
        mask
    });
    let m = w.mlp2.forward(&h);

    let (v, timestep) = match timestep {
        None => (m.clone(), None),
        Some(t) => {
            let pe = sinusoidal_pe(t, PE_DIM)?;
            let pre = w.t_mlp1.forward(&pe);
            let hidden: Vec<f64> = pre.iter().map(|&x| silu(x)).collect();
            let gb = w.t_mlp2.forward(&hidden);
            let (gamma, shift) = gb.split_at(w.token_dim());
            let v = m
                .iter()
                .zip(gamma)
                .zip(shift)
                .map(|((mi, g), b)| mi * (1.0 + g) + b)
                .collect();
            let gamma = gamma.to_vec();
            (v, Some(TimestepTrace { pe, pre, hidden, gamma }))
        }
    };

    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    let inv_std = 1.0 / (var + LN_EPS).sqrt();
    let xhat: Vec<f64> = v.iter().map(|x| (x - mean) * inv_std).collect();
    let out = xhat
        .iter()
        .zip(&w.ln_gain)
        .zip(&w.ln_bias)
        .map(|((x, g), b)| g * x + b)
        .collect();
    let trace = AdapterTrace {
        d: *d,
        h_pre,
        mask,
        h,
        m,
        timestep,
        xhat,
        inv_std,
    };
    Ok((out, trace))
}

/// `LN(MLP(d))`.
pub fn adapter_static(
    d: &[f64; DESCRIPTOR_DIM],
    w: &AdapterWeights,
    dropout: Option<&mut Rng>,
) -> Result<Vec<f64>> {
    forward(d, None, w, dropout).map(|(o, _)| o)
}

/// `LN(MLP(d) * (1 + gamma_t) + b_t)`.
pub fn adapter_dynamic(
    d: &[f64; DESCRIPTOR_DIM],
    t: u32,
    w: &AdapterWeights,
    dropout: Option<&mut Rng>,
) -> Result<Vec<f64>> {
    forward(d, Some(t), w, dropout).map(|(o, _)| o)
}

/// Reverse-mode gradients of `<out, upstream>` through a recorded forward
/// pass. Accumulates parameter gradients into `grad` and returns the
/// gradient with respect to `d`.
pub fn backward(
    trace: &AdapterTrace,
    w: &AdapterWeights,
    upstream: &[f64],
    grad: &mut AdapterWeights,
) -> Result<[f64; DESCRIPTOR_DIM]> {
    let dim = w.token_dim();
    if upstream.len() != dim {
        return invalid(format!("upstream length {} != token dim {dim}", upstream.len()));
    }
    if upstream.iter().any(|v| !v.is_finite()) {
        return invalid("upstream gradient contains non-finite values");
    }

    // LayerNorm
    let mut dxhat = vec![0.0; dim];
    for i in 0..dim {
        grad.ln_gain[i] += upstream[i] * trace.xhat[i];
        grad.ln_bias[i] += upstream[i];
        dxhat[i] = upstream[i] * w.ln_gain[i];
    }
    let n = dim as f64;
    let mean_g = dxhat.iter().sum::<f64>() / n;
    let mean_gx = dxhat.iter().zip(&trace.xhat).map(|(a, b)| a * b).sum::<f64>() / n;
    let dv: Vec<f64> = dxhat
        .iter()
        .zip(&trace.xhat)
        .map(|(g, x)| trace.inv_std * (g - mean_g - x * mean_gx))
        .collect();

    // scale-and-shift
    let dm = match &trace.timestep {
        None => dv,
        Some(ts) => {
            let mut dgb = vec![0.0; 2 * dim];
            let mut dm = vec![0.0; dim];
            for i in 0..dim {
                dm[i] = dv[i] * (1.0 + ts.gamma[i]);
                dgb[i] = dv[i] * trace.m[i];
                dgb[dim + i] = dv[i];
            }
            let dhidden = w.t_mlp2.backward(&ts.hidden, &dgb, &mut grad.t_mlp2);
            let dpre: Vec<f64> = dhidden
                .iter()
                .zip(&ts.pre)
                .map(|(g, &x)| g * silu_grad(x))
                .collect();
            w.t_mlp1.backward(&ts.pe, &dpre, &mut grad.t_mlp1);
            dm
        }
    };

    let mut dh = w.mlp2.backward(&trace.h, &dm, &mut grad.mlp2);
    if let Some(mask) = &trace.mask {
        for (g, k) in dh.iter_mut().zip(mask) {
            *g *= k;
        }
    }
    let dpre: Vec<f64> = dh
        .iter()
        .zip(&trace.h_pre)
        .map(|(g, &x)| g * silu_grad(x))
        .collect();
    let dd = w.mlp1.backward(&trace.d, &dpre, &mut grad.mlp1);
    Ok(dd.try_into().expect("mlp1 input is 6-d"))
}

/// Gradients of `<adapter(d, t), upstream>` on the deterministic (no
/// dropout) path: parameter gradients and the gradient with respect to `d`.
pub fn adapter_backward(
    d: &[f64; DESCRIPTOR_DIM],
    timestep: Option<u32>,
    w: &AdapterWeights,
    upstream: &[f64],
) -> Result<(AdapterWeights, [f64; DESCRIPTOR_DIM])> {
    let (_, trace) = forward(d, timestep, w, None)?;
    let mut grad = AdapterWeights::zero_grad(w.token_dim());
    let dd = backward(&trace, w, upstream, &mut grad)?;
    Ok((grad, dd))
}
