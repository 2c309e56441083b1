//! Edge-modulated ("spatially asymmetric") training noise.
//!
//! The LR image's Sobel magnitude `E_raw` is min-max normalised to `[0, 1]`
//! at image resolution, then bilinearly resized to the latent grid to give
//! `E`. Training noise becomes `eps' = eps * (1 - lambda * E)`, broadcast over
//! latent channels, and the noised latent is
//! `z_t = sqrt(abar_t) z0 + sqrt(1 - abar_t) eps'`.
//!
//! Only the forward (training) process is affected; there is no sampler
//! hook here.

use serde::Serialize;

use crate::descriptor::{grayscale, sobel_magnitude};
use crate::diffusion::DiffusionSchedule;
use crate::error::{invalid, Result};
use crate::exec::{self, Execution};
use crate::rng::Rng;
use crate::tensor::{bilinear_resize, gaussian, Image, Tensor};

pub const DEFAULT_LAMBDA: f64 = 0.6;
pub const DEFAULT_LATENT_CHANNELS: usize = 4;
/// E levels reported by [`sani_stats`] by default.
pub const STATS_E_LEVELS: [f64; 5] = [0.0, 0.25, 0.5, 0.75, 1.0];
const MC_CHUNK: usize = 1 << 16;

/// Sobel magnitude of the luma plane, replicate padding.
pub fn edge_strength(lr: &Image) -> Result<Tensor> {
    if lr.height() < 3 || lr.width() < 3 {
        return invalid(format!(
            "edge map needs at least 3x3 pixels, got {}x{}",
            lr.height(),
            lr.width()
        ));
    }
    let g = grayscale(lr)?;
    sobel_magnitude(&g.channel(0))
}

/// `(raw - min) / (max - min)`; a flat map becomes all zeros.
pub fn normalize_edge_map(raw: &Tensor) -> Result<Tensor> {
    let (lo, hi) = (raw.min(), raw.max());
    if hi <= lo {
        return Tensor::zeros(raw.shape());
    }
    let span = hi - lo;
    raw.map(|v| ((v - lo) / span).clamp(0.0, 1.0))
}

pub fn to_latent(normalized: &Tensor, h: usize, w: usize) -> Result<Tensor> {
    bilinear_resize(normalized, h, w)
}

/// Edge map at each stage of its construction.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeMap {
    pub raw: Tensor,
    pub normalized: Tensor,
    pub latent: Tensor,
}

impl EdgeMap {
    pub fn compute(lr: &Image, latent_h: usize, latent_w: usize) -> Result<Self> {
        let raw = edge_strength(lr)?;
        let normalized = normalize_edge_map(&raw)?;
        let latent = to_latent(&normalized, latent_h, latent_w)?;
        Ok(Self {
            raw,
            normalized,
            latent,
        })
    }
}

fn check_lambda(lambda: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&lambda) {
        return invalid(format!("lambda must be in [0, 1], got {lambda}"));
    }
    Ok(())
}

fn latent_dims(t: &Tensor, what: &str) -> Result<(usize, usize, usize)> {
    match t.shape() {
        &[c, h, w] => Ok((c, h, w)),
        s => invalid(format!("{what} must be C x h x w, got {s:?}")),
    }
}

/// `eps'[c, y, x] = eps[c, y, x] * (1 - lambda * E[y, x])`.
pub fn modulate_noise(eps: &Tensor, edge: &Tensor, lambda: f64) -> Result<Tensor> {
    check_lambda(lambda)?;
    let (c, h, w) = latent_dims(eps, "noise")?;
    if edge.plane_dims()? != (h, w) {
        return invalid(format!(
            "edge map {:?} does not match latent {h}x{w}",
            edge.shape()
        ));
    }
    if edge.data().iter().any(|e| !(0.0..=1.0).contains(e)) {
        return invalid("edge map values must lie in [0, 1]");
    }
    let scale: Vec<f64> = edge.data().iter().map(|e| 1.0 - lambda * e).collect();
    let data = eps
        .data()
        .chunks_exact(h * w)
        .flat_map(|plane| plane.iter().zip(&scale).map(|(n, s)| n * s))
        .collect();
    Tensor::new(vec![c, h, w], data)
}

/// `z_t = sqrt(abar_t) z0 + sqrt(1 - abar_t) eps'`.
pub fn noisy_latent(
    z0: &Tensor,
    eps_prime: &Tensor,
    t: usize,
    schedule: &DiffusionSchedule,
) -> Result<Tensor> {
    if z0.shape() != eps_prime.shape() {
        return invalid(format!(
            "latent {:?} and noise {:?} differ in shape",
            z0.shape(),
            eps_prime.shape()
        ));
    }
    let ab = schedule.alpha_bar(t)?;
    let (a, b) = (ab.sqrt(), (1.0 - ab).sqrt());
    let data = z0
        .data()
        .iter()
        .zip(eps_prime.data())
        .map(|(z, e)| a * z + b * e)
        .collect();
    Tensor::new(z0.shape().to_vec(), data)
}

/// Running mean / second central moment, mergeable in a fixed order.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Moments {
    pub count: usize,
    pub mean: f64,
    m2: f64,
}

impl Moments {
    pub fn from_slice(v: &[f64]) -> Self {
        let n = v.len();
        let mean = v.iter().sum::<f64>() / n as f64;
        let m2 = v.iter().map(|x| (x - mean) * (x - mean)).sum();
        Self { count: n, mean, m2 }
    }

    /// Chan et al. pairwise combination.
    pub fn merge(self, other: Self) -> Self {
        if self.count == 0 {
            return other;
        }
        let n = self.count + other.count;
        let delta = other.mean - self.mean;
        let mean = self.mean + delta * other.count as f64 / n as f64;
        let m2 = self.m2 + other.m2 + delta * delta * (self.count * other.count) as f64 / n as f64;
        Self { count: n, mean, m2 }
    }

    /// Population variance.
    pub fn variance(&self) -> f64 {
        self.m2 / self.count as f64
    }

    pub fn std(&self) -> f64 {
        self.variance().sqrt()
    }
}

/// Monte-Carlo moments of a single latent pixel `z_t` with edge value `edge`.
///
/// Draws `samples` independent `eps`, modulates and noises them through
/// [`modulate_noise`] and [`noisy_latent`]. Chunk `k` uses
/// `Rng::derive(seed, [k])`, so the result does not depend on `exec`.
#[allow(clippy::too_many_arguments)]
pub fn forward_moments(
    z0: f64,
    edge: f64,
    lambda: f64,
    t: usize,
    schedule: &DiffusionSchedule,
    samples: usize,
    seed: u64,
    exec: Execution,
) -> Result<Moments> {
    if samples == 0 {
        return invalid("need at least one sample");
    }
    schedule.alpha_bar(t)?;
    check_lambda(lambda)?;
    let parts = exec::map_slice(&exec::chunks(samples, MC_CHUNK), exec, |k, &(_, n)| {
        let mut rng = Rng::derive(seed, &[k as u64]);
        let eps = gaussian(&[1, 1, n], &mut rng)?;
        let e = Tensor::full(&[1, n], edge)?;
        let eps_p = modulate_noise(&eps, &e, lambda)?;
        let z = noisy_latent(&Tensor::full(&[1, 1, n], z0)?, &eps_p, t, schedule)?;
        Ok(Moments::from_slice(z.data()))
    });
    parts
        .into_iter()
        .try_fold(Moments::default(), |acc, m| m.map(|m| acc.merge(m)))
}

/// Moments of `eps'` alone at a given edge value.
pub fn modulated_noise_moments(
    edge: f64,
    lambda: f64,
    samples: usize,
    seed: u64,
    exec: Execution,
) -> Result<Moments> {
    if samples == 0 {
        return invalid("need at least one sample");
    }
    check_lambda(lambda)?;
    let parts = exec::map_slice(&exec::chunks(samples, MC_CHUNK), exec, |k, &(_, n)| {
        let mut rng = Rng::derive(seed, &[k as u64]);
        let eps = gaussian(&[1, 1, n], &mut rng)?;
        let e = Tensor::full(&[1, n], edge)?;
        Ok(Moments::from_slice(modulate_noise(&eps, &e, lambda)?.data()))
    });
    parts
        .into_iter()
        .try_fold(Moments::default(), |acc, m| m.map(|m| acc.merge(m)))
}

/// Empirical vs theoretical standard deviation of modulated noise.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SaniStats {
    pub lambda: f64,
    #[serde(rename = "E_levels")]
    pub e_levels: Vec<f64>,
    pub empirical_std: Vec<f64>,
    pub theoretical_std: Vec<f64>,
    pub samples: usize,
    pub seed: u64,
}

/// For every E level, draws `samples` values of `eps'` and reports the
/// sample standard deviation next to `1 - lambda * E`. Level `i` uses base
/// seed `Rng::derive(seed, [i])`.
pub fn sani_stats(
    lambda: f64,
    e_levels: &[f64],
    samples: usize,
    seed: u64,
    exec: Execution,
) -> Result<SaniStats> {
    check_lambda(lambda)?;
    let mut empirical = Vec::with_capacity(e_levels.len());
    for (i, &e) in e_levels.iter().enumerate() {
        let level_seed = Rng::derive(seed, &[i as u64]).seed();
        empirical.push(modulated_noise_moments(e, lambda, samples, level_seed, exec)?.std());
    }
    Ok(SaniStats {
        lambda,
        e_levels: e_levels.to_vec(),
        empirical_std: empirical,
        theoretical_std: e_levels.iter().map(|e| 1.0 - lambda * e).collect(),
        samples,
        seed,
    })
}
