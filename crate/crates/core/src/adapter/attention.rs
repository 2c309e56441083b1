use crate::error::{invalid, Result};
use crate::tensor::Tensor;

/// `N x D` stack of tokens used as cross-attention keys and values.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenMatrix {
    tokens: Tensor,
}

impl TokenMatrix {
    pub fn new(tokens: Tensor) -> Result<Self> {
        match tokens.shape() {
            &[_, _] => Ok(Self { tokens }),
            s => invalid(format!("token matrix must be 2-D, got {s:?}")),
        }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let d = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != d) {
            return invalid("token rows differ in length");
        }
        Self::new(Tensor::new(vec![rows.len(), d], rows.concat())?)
    }

    pub fn len(&self) -> usize {
        self.tokens.shape()[0]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.tokens.shape()[1]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let d = self.dim();
        &self.tokens.data()[i * d..(i + 1) * d]
    }

    pub fn tensor(&self) -> &Tensor {
        &self.tokens
    }

    /// The first `n` rows as a new matrix.
    pub fn head(&self, n: usize) -> Result<Self> {
        if n == 0 || n > self.len() {
            return invalid(format!("cannot take {n} of {} rows", self.len()));
        }
        let d = self.dim();
        Self::new(Tensor::new(vec![n, d], self.tokens.data()[..n * d].to_vec())?)
    }
}

/// `[tokens; token]`: appends one row along the token axis.
pub fn append_token(tokens: &TokenMatrix, token: &[f64]) -> Result<TokenMatrix> {
    if token.len() != tokens.dim() {
        return invalid(format!(
            "token length {} does not match dim {}",
            token.len(),
            tokens.dim()
        ));
    }
    let mut data = tokens.tensor().data().to_vec();
    data.extend_from_slice(token);
    TokenMatrix::new(Tensor::new(vec![tokens.len() + 1, tokens.dim()], data)?)
}

/// Single-head attention with keys = values = `kv` rows:
/// `softmax(Q KV^T / sqrt(D)) KV`, row-wise softmax with max subtraction.
pub fn cross_attention(queries: &Tensor, kv: &TokenMatrix) -> Result<Tensor> {
    let (m, d) = match queries.shape() {
        &[m, d] => (m, d),
        s => return invalid(format!("queries must be 2-D, got {s:?}")),
    };
    if d != kv.dim() {
        return invalid(format!("query dim {d} does not match token dim {}", kv.dim()));
    }
    let scale = 1.0 / (d as f64).sqrt();
    let mut out = Vec::with_capacity(m * d);
    let mut scores = vec![0.0; kv.len()];
    for q in queries.data().chunks_exact(d) {
        for (j, s) in scores.iter_mut().enumerate() {
            *s = scale * q.iter().zip(kv.row(j)).map(|(a, b)| a * b).sum::<f64>();
        }
        let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut z = 0.0;
        for s in scores.iter_mut() {
            *s = (*s - max).exp();
            z += *s;
        }
        let mut row = vec![0.0; d];
        for (j, s) in scores.iter().enumerate() {
            let p = s / z;
            for (r, v) in row.iter_mut().zip(kv.row(j)) {
                *r += p * v;
            }
        }
        out.extend(row);
    }
    Tensor::new(vec![m, d], out)
}

#[cfg(test)]
#[allow(clippy::needless_range_loop)]
mod tests {
    use super::*;
    use crate::rng::Rng;
    use proptest::prelude::*;

    fn random_rows(n: usize, d: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut r = Rng::new(seed);
        (0..n).map(|_| (0..d).map(|_| r.normal()).collect()).collect()
    }

    #[test]
    fn append_and_recover() {
        let h = TokenMatrix::from_rows(&random_rows(1, 8, 1)).unwrap();
        let t: Vec<f64> = (0..8).map(|i| i as f64).collect();
        let out = append_token(&h, &t).unwrap();
        assert_eq!(out.len(), 2);
        assert_eq!(out.row(0), h.row(0));
        assert_eq!(out.row(1), &t[..]);
        assert_eq!(out.head(1).unwrap(), h);
        assert!(append_token(&h, &t[..7]).is_err());
    }

    #[test]
    fn single_token_is_returned() {
        let v = random_rows(1, 6, 2);
        let kv = TokenMatrix::from_rows(&v).unwrap();
        let q = Tensor::new(vec![3, 6], random_rows(3, 6, 3).concat()).unwrap();
        let out = cross_attention(&q, &kv).unwrap();
        for row in out.data().chunks(6) {
            assert_eq!(row, &v[0][..]);
        }
    }

    #[test]
    fn matches_scalar_oracle() {
        let q = random_rows(2, 4, 5);
        let kv = random_rows(3, 4, 6);
        let got = cross_attention(
            &Tensor::new(vec![2, 4], q.concat()).unwrap(),
            &TokenMatrix::from_rows(&kv).unwrap(),
        )
        .unwrap();
        for i in 0..2 {
            let logits: Vec<f64> = (0..3)
                .map(|j| (0..4).map(|k| q[i][k] * kv[j][k]).sum::<f64>() / 2.0)
                .collect();
            let e: Vec<f64> = logits.iter().map(|l| l.exp()).collect();
            let z: f64 = e.iter().sum();
            for k in 0..4 {
                let want: f64 = (0..3).map(|j| e[j] / z * kv[j][k]).sum();
                assert!((got.data()[i * 4 + k] - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn dimension_mismatch() {
        let kv = TokenMatrix::from_rows(&random_rows(2, 4, 1)).unwrap();
        let q = Tensor::new(vec![1, 3], vec![0.0; 3]).unwrap();
        assert!(cross_attention(&q, &kv).is_err());
    }

    proptest! {
        #[test]
        fn permutation_invariant_and_convex(seed in 0u64..1000, n in 1usize..6, shift in 0usize..6) {
            let d = 8;
            let rows = random_rows(n, d, seed);
            let mut perm = rows.clone();
            perm.rotate_left(shift % n);
            perm.reverse();
            let q = Tensor::new(vec![2, d], random_rows(2, d, seed + 1).concat()).unwrap();
            let a = cross_attention(&q, &TokenMatrix::from_rows(&rows).unwrap()).unwrap();
            let b = cross_attention(&q, &TokenMatrix::from_rows(&perm).unwrap()).unwrap();
            for (x, y) in a.data().iter().zip(b.data()) {
                prop_assert!((x - y).abs() <= 1e-12);
            }
            for row in a.data().chunks(d) {
                for k in 0..d {
                    let lo = rows.iter().map(|r| r[k]).fold(f64::INFINITY, f64::min);
                    let hi = rows.iter().map(|r| r[k]).fold(f64::NEG_INFINITY, f64::max);
                    prop_assert!(row[k] >= lo - 1e-12 && row[k] <= hi + 1e-12);
                }
            }
        }
    }
}
