use crate::rng::Rng;

/// Dense affine layer `y = W x + b`, `W` stored row-major as `out x in`.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    pub in_dim: usize,
    pub out_dim: usize,
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Linear {
    pub fn zeros(in_dim: usize, out_dim: usize) -> Self {
        Self {
            in_dim,
            out_dim,
            weight: vec![0.0; in_dim * out_dim],
            bias: vec![0.0; out_dim],
        }
    }

    /// Weights and biases uniform in `(-1/sqrt(in), 1/sqrt(in))`.
    pub fn init(in_dim: usize, out_dim: usize, rng: &mut Rng) -> Self {
        let bound = 1.0 / (in_dim as f64).sqrt();
        let mut l = Self::zeros(in_dim, out_dim);
        for v in l.weight.iter_mut().chain(l.bias.iter_mut()) {
            *v = rng.uniform_range(-bound, bound);
        }
        l
    }

    pub fn param_count(&self) -> usize {
        self.weight.len() + self.bias.len()
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.in_dim);
        self.weight
            .chunks_exact(self.in_dim)
            .zip(&self.bias)
            .map(|(row, b)| b + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>())
            .collect()
    }

    /// Accumulates `dW += g x^T`, `db += g` into `grad` and returns `W^T g`.
    pub fn backward(&self, x: &[f64], g: &[f64], grad: &mut Linear) -> Vec<f64> {
        let mut dx = vec![0.0; self.in_dim];
        for (o, &go) in g.iter().enumerate() {
            grad.bias[o] += go;
            let row = &self.weight[o * self.in_dim..(o + 1) * self.in_dim];
            let grow = &mut grad.weight[o * self.in_dim..(o + 1) * self.in_dim];
            for i in 0..self.in_dim {
                grow[i] += go * x[i];
                dx[i] += go * row[i];
            }
        }
        dx
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

pub fn silu(x: f64) -> f64 {
    x * sigmoid(x)
}

pub fn silu_grad(x: f64) -> f64 {
    let s = sigmoid(x);
    s * (1.0 + x * (1.0 - s))
}
