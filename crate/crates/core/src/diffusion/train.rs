//! Toy training loop for the noise-prediction objective.
//!
//! Every step draws a training pair, a timestep `t ~ U[1, T]`, latent noise
//! `eps` and (optionally) a dropout mask, then
//!
//! 1. builds the degradation token from the pair's descriptor
//!    (timestep-modulated when `dynamic_token` is set),
//! 2. modulates the noise with the pair's latent edge map,
//! 3. noises `z0` to `z_t`,
//! 4. predicts the noise with the toy denoiser and takes the MSE against
//!    the modulated noise,
//! 5. applies one plain gradient-descent step to the denoiser and adapter.
//!
//! The draws come from a bank of `bank_size` samples that is replayed in
//! order, epoch after epoch; step `k` uses `Rng::derive(seed, [k % bank])`.
//! With the default bank of 50 the reported first-50 / last-50 window means
//! are the first and last epochs over the same samples.

use serde::Serialize;

use super::toy::{toy_backward, toy_forward, ToyDenoiser};
use super::{make_schedule, training_loss, training_loss_grad, DiffusionSchedule};
use crate::adapter::{self, AdapterWeights};
use crate::degradations::{corpus_image, DegradationRecipe, CORPUS_SIDE, CORPUS_SIZE};
use crate::descriptor::descriptor;
use crate::error::{invalid, Result};
use crate::rng::Rng;
use crate::sani::{modulate_noise, noisy_latent, EdgeMap};
use crate::tensor::{bilinear_resize, gaussian, Image, Tensor};

pub const REPORT_WINDOW: usize = 50;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrainConfig {
    pub steps: usize,
    pub learning_rate: f64,
    pub lambda: f64,
    pub seed: u64,
    /// Condition the denoiser on the degradation token at all.
    pub use_token: bool,
    /// Timestep-modulated token; static token otherwise.
    pub dynamic_token: bool,
    pub adapter_dropout: bool,
    pub token_dim: usize,
    pub latent_channels: usize,
    pub latent_side: usize,
    pub lr_side: usize,
    pub hidden: usize,
    pub bank_size: usize,
    pub schedule_steps: usize,
    pub beta_start: f64,
    pub beta_end: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            steps: 500,
            learning_rate: 1e-3,
            lambda: crate::sani::DEFAULT_LAMBDA,
            seed: 7,
            use_token: true,
            dynamic_token: true,
            adapter_dropout: true,
            token_dim: adapter::DEFAULT_TOKEN_DIM,
            latent_channels: 4,
            latent_side: 8,
            lr_side: 32,
            hidden: 16,
            bank_size: REPORT_WINDOW,
            schedule_steps: super::DEFAULT_STEPS,
            beta_start: super::DEFAULT_BETA_START,
            beta_end: super::DEFAULT_BETA_END,
        }
    }
}

impl TrainConfig {
    fn validate(&self) -> Result<()> {
        if self.steps == 0 {
            return invalid("steps must be positive");
        }
        if self.learning_rate < 0.0 || !self.learning_rate.is_finite() {
            return invalid(format!("learning rate must be >= 0, got {}", self.learning_rate));
        }
        if !(0.0..=1.0).contains(&self.lambda) {
            return invalid(format!("lambda must be in [0, 1], got {}", self.lambda));
        }
        if self.bank_size == 0 || self.hidden == 0 || self.token_dim == 0 {
            return invalid("bank size, hidden width and token dim must be positive");
        }
        if !(1..=4).contains(&self.latent_channels) {
            return invalid("latent channels must be in 1..=4");
        }
        if self.latent_side == 0 || self.lr_side < 9 {
            return invalid("latent side must be positive and LR side at least 9");
        }
        Ok(())
    }

    pub fn schedule(&self) -> Result<DiffusionSchedule> {
        make_schedule(self.schedule_steps, self.beta_start, self.beta_end)
    }
}

/// Clean latent and its degraded low-resolution observation.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainPair {
    /// `[channels, side, side]`, values in `[-1, 1]`.
    pub z0: Tensor,
    pub lr: Image,
}

/// Training pairs from the procedural corpus.
///
/// `z0` is the clean image downscaled to `latent_side` and mapped to
/// `[-1, 1]`, with channels R, G, B, luma (a grayscale image repeats its one
/// plane). The LR image is the same picture under a random degradation
/// recipe, downscaled to `lr_side`.
pub fn toy_corpus(latent_channels: usize, latent_side: usize, lr_side: usize, seed: u64) -> Result<Vec<TrainPair>> {
    (0..CORPUS_SIZE)
        .map(|i| {
            let img = corpus_image(i, CORPUS_SIDE)?;
            let luma = crate::descriptor::grayscale(&img)?.channel(0);
            let planes: Vec<Tensor> = if img.channels() == 3 {
                vec![img.channel(0), img.channel(1), img.channel(2), luma]
            } else {
                vec![luma; 4]
            };
            let mut z = Vec::with_capacity(latent_channels * latent_side * latent_side);
            for p in planes.iter().take(latent_channels) {
                let small = bilinear_resize(p, latent_side, latent_side)?;
                z.extend(small.data().iter().map(|v| 2.0 * v - 1.0));
            }
            let z0 = Tensor::new(vec![latent_channels, latent_side, latent_side], z)?;

            let mut rng = Rng::derive(seed, &[i as u64]);
            let recipe = DegradationRecipe {
                blur_sigma: rng.uniform_range(0.0, 2.0),
                noise_sigma: rng.uniform_range(0.0, 0.1),
                block_strength: rng.uniform_range(0.0, 0.8),
                brightness_shift: rng.uniform_range(-0.1, 0.1),
                contrast_scale: rng.uniform_range(0.8, 1.2),
                seed: rng.next_u64(),
            };
            let degraded = recipe.apply(&img)?;
            let lr = degraded.map_channels(|p| bilinear_resize(p, lr_side, lr_side))?;
            Ok(TrainPair { z0, lr })
        })
        .collect()
}

// Per-pair quantities that depend only on the LR image.
struct Prepared {
    z0: Tensor,
    descriptor: [f64; 6],
    edge: Tensor,
}

fn prepare(corpus: &[TrainPair]) -> Result<Vec<Prepared>> {
    corpus
        .iter()
        .map(|p| {
            let (_, h, w) = match p.z0.shape() {
                &[c, h, w] => (c, h, w),
                s => return invalid(format!("z0 must be C x h x w, got {s:?}")),
            };
            Ok(Prepared {
                z0: p.z0.clone(),
                descriptor: descriptor(&p.lr)?.transformed,
                edge: EdgeMap::compute(&p.lr, h, w)?.latent,
            })
        })
        .collect()
}

/// Initial denoiser and adapter for a configuration.
///
/// The denoiser's first conv is He-uniform (`+-sqrt(6 / fan_in)`) and its
/// output conv starts at zero, so the first prediction is the all-zero one.
pub fn init_models(config: &TrainConfig) -> (ToyDenoiser, Option<AdapterWeights>) {
    let mut rng = Rng::derive(config.seed, &[u64::MAX]);
    let mut net = ToyDenoiser::init(
        config.latent_channels,
        config.hidden,
        config.token_dim,
        config.schedule_steps as f64,
        &mut rng,
    );
    net.conv1_w.iter_mut().for_each(|v| *v *= 6f64.sqrt());
    net.conv2_w.fill(0.0);
    net.conv2_b.fill(0.0);
    let adapter = config
        .use_token
        .then(|| AdapterWeights::init(config.token_dim, &mut rng));
    (net, adapter)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrainSummary {
    pub first50_mean: f64,
    pub last50_mean: f64,
    pub ratio: f64,
    pub config: TrainConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub losses: Vec<f64>,
    pub summary: TrainSummary,
    pub denoiser: ToyDenoiser,
    pub adapter: Option<AdapterWeights>,
}

#[derive(Clone, Copy, PartialEq)]
enum NoisePath {
    EdgeModulated,
    /// Plain DDPM: `eps` goes straight into the forward process.
    Standard,
}

/// Trains the toy denoiser (and adapter) with edge-modulated noise.
pub fn train_toy(corpus: &[TrainPair], config: &TrainConfig) -> Result<TrainReport> {
    run(corpus, config, NoisePath::EdgeModulated)
}

/// Same loop without noise modulation and without a token: standard DDPM
/// noise-prediction training. Reference path for the `lambda = 0` reduction.
pub fn train_toy_standard(corpus: &[TrainPair], config: &TrainConfig) -> Result<TrainReport> {
    let config = TrainConfig {
        use_token: false,
        ..config.clone()
    };
    run(corpus, &config, NoisePath::Standard)
}

fn run(corpus: &[TrainPair], config: &TrainConfig, path: NoisePath) -> Result<TrainReport> {
    if corpus.is_empty() {
        return invalid("training corpus is empty");
    }
    config.validate()?;
    let schedule = config.schedule()?;
    let pairs = prepare(corpus)?;
    for p in &pairs {
        if p.z0.shape()[0] != config.latent_channels {
            return invalid("corpus latent channels do not match the configuration");
        }
    }
    let (mut net, mut adapter) = init_models(config);
    let mut losses = Vec::with_capacity(config.steps);

    for step in 0..config.steps {
        let mut rng = Rng::derive(config.seed, &[(step % config.bank_size) as u64]);
        let pair = &pairs[rng.int_range(0, pairs.len() as u64 - 1) as usize];
        let t = rng.int_range(1, schedule.steps() as u64) as usize;
        let eps = gaussian(pair.z0.shape(), &mut rng)?;

        let token = match &adapter {
            Some(w) => {
                let ts = config.dynamic_token.then_some(t as u32);
                let dropout = config.adapter_dropout.then_some(&mut rng);
                Some(adapter::forward(&pair.descriptor, ts, w, dropout)?)
            }
            None => None,
        };

        let eps_prime = match path {
            NoisePath::EdgeModulated => modulate_noise(&eps, &pair.edge, config.lambda)?,
            NoisePath::Standard => eps,
        };
        let z_t = noisy_latent(&pair.z0, &eps_prime, t, &schedule)?;
        let (pred, trace) = toy_forward(&net, &z_t, t, token.as_ref().map(|(v, _)| &v[..]))?;
        losses.push(training_loss(&pred, &eps_prime)?);

        let gout = training_loss_grad(&pred, &eps_prime);
        let mut gnet = net.zero_grad();
        let dtoken = toy_backward(&net, &trace, &gout, &mut gnet)?;
        if let (Some(w), Some((_, atrace)), Some(dt)) = (adapter.as_mut(), token.as_ref(), dtoken) {
            let mut gad = AdapterWeights::zero_grad(w.token_dim());
            adapter::backward(atrace, w, &dt, &mut gad)?;
            w.axpy(-config.learning_rate, &gad);
        }
        net.axpy(-config.learning_rate, &gnet);
    }

    let window = REPORT_WINDOW.min(losses.len());
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let first = mean(&losses[..window]);
    let last = mean(&losses[losses.len() - window..]);
    Ok(TrainReport {
        summary: TrainSummary {
            first50_mean: first,
            last50_mean: last,
            ratio: last / first,
            config: config.clone(),
        },
        losses,
        denoiser: net,
        adapter,
    })
}

/// Least-squares optimal gain for predicting `eps` as `g * z_t` at a single
/// pixel with unmodulated noise:
/// `g* = E[z_t eps] / E[z_t^2] = sqrt(1 - abar) / (abar z0^2 + 1 - abar)`.
pub fn analytic_gain(z0: f64, t: usize, schedule: &DiffusionSchedule) -> Result<f64> {
    let ab = schedule.alpha_bar(t)?;
    Ok((1.0 - ab).sqrt() / (ab * z0 * z0 + 1.0 - ab))
}

/// Fits the scalar gain `g` in `eps_hat = g * z_t` by SGD on the
/// noise-prediction loss (single pixel, fixed `t`, `lambda = 0`, fresh noise
/// every step). Returns the average of the iterates over the second half of
/// training.
pub fn fit_scalar_gain(
    z0: f64,
    t: usize,
    schedule: &DiffusionSchedule,
    steps: usize,
    learning_rate: f64,
    seed: u64,
) -> Result<f64> {
    if steps < 2 {
        return invalid("need at least two steps");
    }
    let mut rng = Rng::new(seed);
    let z0t = Tensor::full(&[1, 1, 1], z0)?;
    let flat = Tensor::zeros(&[1, 1])?;
    let mut g = 0.0;
    let (mut avg, mut n) = (0.0, 0usize);
    for step in 0..steps {
        let eps = gaussian(&[1, 1, 1], &mut rng)?;
        let eps_p = modulate_noise(&eps, &flat, 0.0)?;
        let zt = noisy_latent(&z0t, &eps_p, t, schedule)?;
        let pred = zt.map(|v| g * v)?;
        let dpred = training_loss_grad(&pred, &eps_p)[0];
        g -= learning_rate * dpred * zt.data()[0];
        if step >= steps / 2 {
            n += 1;
            avg += (g - avg) / n as f64;
        }
    }
    Ok(avg)
}
