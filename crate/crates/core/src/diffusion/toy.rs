//! Small convolutional noise predictor standing in for a UNet.
//!
//! ```text
//! h   = conv1(z_t) + b1 + w_time * (t / time_scale) + W_cond token
//! out = conv2(silu(h)) + b2
//! ```
//!
//! Both convolutions are 3x3 with zero padding. The token head has no bias,
//! so an absent token contributes nothing.

use crate::adapter::io::NamedArray;
use crate::adapter::{silu, silu_grad};
use crate::error::{invalid, Result};
use crate::rng::Rng;
use crate::tensor::Tensor;

const K: usize = 3;

#[derive(Debug, Clone, PartialEq)]
pub struct ToyDenoiser {
    pub channels: usize,
    pub hidden: usize,
    pub token_dim: usize,
    pub time_scale: f64,
    /// `[hidden, channels, 3, 3]`
    pub conv1_w: Vec<f64>,
    pub conv1_b: Vec<f64>,
    pub time_w: Vec<f64>,
    /// `[hidden, token_dim]`
    pub cond_w: Vec<f64>,
    /// `[channels, hidden, 3, 3]`
    pub conv2_w: Vec<f64>,
    pub conv2_b: Vec<f64>,
}

impl ToyDenoiser {
    pub fn zeros(channels: usize, hidden: usize, token_dim: usize, time_scale: f64) -> Self {
        Self {
            channels,
            hidden,
            token_dim,
            time_scale,
            conv1_w: vec![0.0; hidden * channels * K * K],
            conv1_b: vec![0.0; hidden],
            time_w: vec![0.0; hidden],
            cond_w: vec![0.0; hidden * token_dim],
            conv2_w: vec![0.0; channels * hidden * K * K],
            conv2_b: vec![0.0; channels],
        }
    }

    /// Uniform `+-1/sqrt(fan_in)` per layer.
    pub fn init(channels: usize, hidden: usize, token_dim: usize, time_scale: f64, rng: &mut Rng) -> Self {
        let mut d = Self::zeros(channels, hidden, token_dim, time_scale);
        let fill = |v: &mut [f64], fan_in: usize, rng: &mut Rng| {
            let b = 1.0 / (fan_in as f64).sqrt();
            v.iter_mut().for_each(|x| *x = rng.uniform_range(-b, b));
        };
        fill(&mut d.conv1_w, channels * K * K, rng);
        fill(&mut d.conv1_b, channels * K * K, rng);
        fill(&mut d.time_w, 1, rng);
        fill(&mut d.cond_w, token_dim, rng);
        fill(&mut d.conv2_w, hidden * K * K, rng);
        fill(&mut d.conv2_b, hidden * K * K, rng);
        d
    }

    /// Gradient buffer with the same layout.
    pub fn zero_grad(&self) -> Self {
        Self::zeros(self.channels, self.hidden, self.token_dim, self.time_scale)
    }

    pub fn param_count(&self) -> usize {
        self.groups().iter().map(|g| g.2.len()).sum()
    }

    pub fn groups(&self) -> Vec<(&'static str, Vec<usize>, &[f64])> {
        let (c, h) = (self.channels, self.hidden);
        vec![
            ("conv1.weight", vec![h, c, K, K], &self.conv1_w[..]),
            ("conv1.bias", vec![h], &self.conv1_b[..]),
            ("time.weight", vec![h], &self.time_w[..]),
            ("cond.weight", vec![h, self.token_dim], &self.cond_w[..]),
            ("conv2.weight", vec![c, h, K, K], &self.conv2_w[..]),
            ("conv2.bias", vec![c], &self.conv2_b[..]),
        ]
    }

    pub fn groups_mut(&mut self) -> Vec<(&'static str, &mut [f64])> {
        vec![
            ("conv1.weight", &mut self.conv1_w[..]),
            ("conv1.bias", &mut self.conv1_b[..]),
            ("time.weight", &mut self.time_w[..]),
            ("cond.weight", &mut self.cond_w[..]),
            ("conv2.weight", &mut self.conv2_w[..]),
            ("conv2.bias", &mut self.conv2_b[..]),
        ]
    }

    pub fn axpy(&mut self, alpha: f64, other: &ToyDenoiser) {
        for ((_, dst), (_, _, src)) in self.groups_mut().into_iter().zip(other.groups()) {
            for (d, s) in dst.iter_mut().zip(src) {
                *d += alpha * s;
            }
        }
    }

    pub fn to_arrays(&self) -> Vec<NamedArray> {
        let mut out: Vec<NamedArray> = self
            .groups()
            .into_iter()
            .map(|(n, s, d)| NamedArray::new(n, s, d.to_vec()))
            .collect();
        out.push(NamedArray::new("time_scale", vec![1], vec![self.time_scale]));
        out
    }

    pub fn from_arrays(arrays: &[NamedArray]) -> Result<Self> {
        let find = |name: &str| {
            arrays
                .iter()
                .find(|a| a.name == name)
                .ok_or_else(|| crate::Error::InvalidArgument(format!("missing array {name}")))
        };
        let c1 = find("conv1.weight")?;
        let cond = find("cond.weight")?;
        let (hidden, channels) = match c1.shape.as_slice() {
            &[h, c, K, K] => (h, c),
            s => return invalid(format!("bad conv1.weight shape {s:?}")),
        };
        let token_dim = match cond.shape.as_slice() {
            &[h, d] if h == hidden => d,
            s => return invalid(format!("bad cond.weight shape {s:?}")),
        };
        let time_scale = find("time_scale")?.data.first().copied().unwrap_or(1.0);
        let mut d = Self::zeros(channels, hidden, token_dim, time_scale);
        let expected: Vec<(&str, Vec<usize>)> =
            d.groups().into_iter().map(|(n, s, _)| (n, s)).collect();
        for ((name, shape), (_, dst)) in expected.into_iter().zip(d.groups_mut()) {
            let a = find(name)?;
            if a.shape != shape {
                return invalid(format!("array {name}: expected {shape:?}, got {:?}", a.shape));
            }
            dst.copy_from_slice(&a.data);
        }
        Ok(d)
    }
}

/// Forward intermediates for the backward pass.
#[derive(Debug, Clone)]
pub struct ToyTrace {
    input: Vec<f64>,
    pre: Vec<f64>,
    act: Vec<f64>,
    time_feature: f64,
    token: Option<Vec<f64>>,
    h: usize,
    w: usize,
}

/// 3x3 zero-padded multi-channel correlation, `[cin, h, w] -> [cout, h, w]`.
fn conv3x3(input: &[f64], cin: usize, cout: usize, h: usize, w: usize, weight: &[f64], out: &mut [f64]) {
    for o in 0..cout {
        for c in 0..cin {
            let kern = &weight[(o * cin + c) * K * K..(o * cin + c + 1) * K * K];
            let src = &input[c * h * w..(c + 1) * h * w];
            let dst = &mut out[o * h * w..(o + 1) * h * w];
            for y in 0..h {
                for x in 0..w {
                    let mut acc = 0.0;
                    for i in 0..K {
                        let sy = y + i;
                        if sy < 1 || sy > h {
                            continue;
                        }
                        for j in 0..K {
                            let sx = x + j;
                            if sx < 1 || sx > w {
                                continue;
                            }
                            acc += kern[i * K + j] * src[(sy - 1) * w + sx - 1];
                        }
                    }
                    dst[y * w + x] += acc;
                }
            }
        }
    }
}

/// Backward of [`conv3x3`]: accumulates the weight gradient and, when
/// `dinput` is given, the input gradient.
#[allow(clippy::too_many_arguments)]
fn conv3x3_backward(
    input: &[f64],
    cin: usize,
    cout: usize,
    h: usize,
    w: usize,
    weight: &[f64],
    gout: &[f64],
    dweight: &mut [f64],
    mut dinput: Option<&mut [f64]>,
) {
    for o in 0..cout {
        for c in 0..cin {
            let base = (o * cin + c) * K * K;
            for y in 0..h {
                for x in 0..w {
                    let g = gout[o * h * w + y * w + x];
                    if g == 0.0 {
                        continue;
                    }
                    for i in 0..K {
                        let sy = y + i;
                        if sy < 1 || sy > h {
                            continue;
                        }
                        for j in 0..K {
                            let sx = x + j;
                            if sx < 1 || sx > w {
                                continue;
                            }
                            let idx = c * h * w + (sy - 1) * w + sx - 1;
                            dweight[base + i * K + j] += g * input[idx];
                            if let Some(di) = dinput.as_deref_mut() {
                                di[idx] += g * weight[base + i * K + j];
                            }
                        }
                    }
                }
            }
        }
    }
}

/// Predicts the noise in `z_t` (`[channels, h, w]`) at timestep `t`.
pub fn toy_forward(
    net: &ToyDenoiser,
    z_t: &Tensor,
    t: usize,
    token: Option<&[f64]>,
) -> Result<(Tensor, ToyTrace)> {
    let (c, h, w) = match z_t.shape() {
        &[c, h, w] => (c, h, w),
        s => return invalid(format!("latent must be C x h x w, got {s:?}")),
    };
    if c != net.channels {
        return invalid(format!("latent has {c} channels, denoiser expects {}", net.channels));
    }
    if let Some(tok) = token {
        if tok.len() != net.token_dim {
            return invalid(format!(
                "token length {} does not match denoiser token dim {}",
                tok.len(),
                net.token_dim
            ));
        }
    }
    let hw = h * w;
    let time_feature = t as f64 / net.time_scale;
    let mut pre = vec![0.0; net.hidden * hw];
    for k in 0..net.hidden {
        let mut bias = net.conv1_b[k] + net.time_w[k] * time_feature;
        if let Some(tok) = token {
            let row = &net.cond_w[k * net.token_dim..(k + 1) * net.token_dim];
            bias += row.iter().zip(tok).map(|(a, b)| a * b).sum::<f64>();
        }
        pre[k * hw..(k + 1) * hw].fill(bias);
    }
    conv3x3(z_t.data(), c, net.hidden, h, w, &net.conv1_w, &mut pre);
    let act: Vec<f64> = pre.iter().map(|&x| silu(x)).collect();
    let mut out = vec![0.0; c * hw];
    for (o, b) in net.conv2_b.iter().enumerate() {
        out[o * hw..(o + 1) * hw].fill(*b);
    }
    conv3x3(&act, net.hidden, c, h, w, &net.conv2_w, &mut out);
    let trace = ToyTrace {
        input: z_t.data().to_vec(),
        pre,
        act,
        time_feature,
        token: token.map(<[f64]>::to_vec),
        h,
        w,
    };
    Ok((Tensor::new(vec![c, h, w], out)?, trace))
}

/// Accumulates parameter gradients of `<out, gout>` into `grad`; returns
/// the token gradient when a token was used.
pub fn toy_backward(
    net: &ToyDenoiser,
    trace: &ToyTrace,
    gout: &[f64],
    grad: &mut ToyDenoiser,
) -> Result<Option<Vec<f64>>> {
    let (h, w) = (trace.h, trace.w);
    let hw = h * w;
    if gout.len() != net.channels * hw {
        return invalid("output gradient has the wrong length");
    }
    for o in 0..net.channels {
        grad.conv2_b[o] += gout[o * hw..(o + 1) * hw].iter().sum::<f64>();
    }
    let mut dact = vec![0.0; net.hidden * hw];
    conv3x3_backward(
        &trace.act,
        net.hidden,
        net.channels,
        h,
        w,
        &net.conv2_w,
        gout,
        &mut grad.conv2_w,
        Some(&mut dact),
    );
    let dpre: Vec<f64> = dact
        .iter()
        .zip(&trace.pre)
        .map(|(g, &x)| g * silu_grad(x))
        .collect();
    conv3x3_backward(
        &trace.input,
        net.channels,
        net.hidden,
        h,
        w,
        &net.conv1_w,
        &dpre,
        &mut grad.conv1_w,
        None,
    );
    let mut dtoken = trace.token.as_ref().map(|_| vec![0.0; net.token_dim]);
    for k in 0..net.hidden {
        let s: f64 = dpre[k * hw..(k + 1) * hw].iter().sum();
        grad.conv1_b[k] += s;
        grad.time_w[k] += s * trace.time_feature;
        if let (Some(tok), Some(dt)) = (&trace.token, dtoken.as_mut()) {
            let row = k * net.token_dim..(k + 1) * net.token_dim;
            for (g, &tv) in grad.cond_w[row.clone()].iter_mut().zip(tok) {
                *g += s * tv;
            }
            for (d, &wv) in dt.iter_mut().zip(&net.cond_w[row]) {
                *d += s * wv;
            }
        }
    }
    Ok(dtoken)
}
