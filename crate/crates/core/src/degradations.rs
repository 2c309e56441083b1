//! Synthetic degradations, a procedural image corpus and severity sweeps.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use crate::descriptor::{descriptor, DegradationDescriptor, BLOCK};
use crate::error::{invalid, Error, Result};
use crate::exec::{self, Execution};
use crate::rng::Rng;
use crate::tensor::{conv2d, Image, Padding, Tensor};

/// Normalised 1-D Gaussian taps of radius `ceil(3 sigma)`.
pub fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let r = (3.0 * sigma).ceil() as i64;
    let taps: Vec<f64> = (-r..=r)
        .map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let sum: f64 = taps.iter().sum();
    taps.into_iter().map(|t| t / sum).collect()
}

/// Separable Gaussian blur with replicate padding. `sigma == 0` is the
/// identity.
pub fn gaussian_blur(image: &Image, sigma: f64) -> Result<Image> {
    if sigma < 0.0 || !sigma.is_finite() {
        return invalid(format!("blur sigma must be >= 0, got {sigma}"));
    }
    if sigma == 0.0 {
        return Ok(image.clone());
    }
    let taps = gaussian_kernel(sigma);
    let n = taps.len();
    let row = Tensor::new(vec![1, n], taps.clone())?;
    let col = Tensor::new(vec![n, 1], taps)?;
    image.map_channels(|p| conv2d(&conv2d(p, &row, Padding::Replicate)?, &col, Padding::Replicate))
}

/// Adds i.i.d. `N(0, sigma^2)` noise per sample, then clamps to `[0, 1]`.
pub fn add_awgn(image: &Image, sigma: f64, rng: &mut Rng) -> Result<Image> {
    if sigma < 0.0 || !sigma.is_finite() {
        return invalid(format!("noise sigma must be >= 0, got {sigma}"));
    }
    if sigma == 0.0 {
        return Ok(image.clone());
    }
    let data = image
        .data()
        .iter()
        .map(|&v| (v + sigma * rng.normal()).clamp(0.0, 1.0))
        .collect();
    Image::new(image.height(), image.width(), image.channels(), data)
}

/// Blends each pixel toward the mean of its origin-aligned 8x8 tile:
/// `out = (1 - strength) * image + strength * tile_mean`. Partial tiles at
/// the right/bottom edge average over the pixels they contain.
pub fn blockify(image: &Image, strength: f64) -> Result<Image> {
    if !(0.0..=1.0).contains(&strength) {
        return invalid(format!("block strength must be in [0, 1], got {strength}"));
    }
    if strength == 0.0 {
        return Ok(image.clone());
    }
    image.map_channels(|p| {
        let tiles = tile_means(p)?;
        let (_, w) = p.plane_dims()?;
        let data = p
            .data()
            .iter()
            .enumerate()
            .map(|(i, &v)| {
                let m = tiles.at2(i / w, i % w);
                (1.0 - strength) * v + strength * m
            })
            .collect();
        Tensor::new(p.shape().to_vec(), data)
    })
}

/// Plane where every pixel holds the mean of its 8x8 tile.
fn tile_means(p: &Tensor) -> Result<Tensor> {
    let (h, w) = p.plane_dims()?;
    let mut out = vec![0.0; h * w];
    for ty in (0..h).step_by(BLOCK) {
        for tx in (0..w).step_by(BLOCK) {
            let (y1, x1) = ((ty + BLOCK).min(h), (tx + BLOCK).min(w));
            let mut sum = 0.0;
            for y in ty..y1 {
                for x in tx..x1 {
                    sum += p.at2(y, x);
                }
            }
            let mean = sum / ((y1 - ty) * (x1 - tx)) as f64;
            for y in ty..y1 {
                for x in tx..x1 {
                    out[y * w + x] = mean;
                }
            }
        }
    }
    Tensor::new(vec![h, w], out)
}

/// `clamp(contrast_scale * (image - 0.5) + 0.5 + brightness_shift, 0, 1)`.
pub fn adjust_luminance(image: &Image, brightness_shift: f64, contrast_scale: f64) -> Result<Image> {
    if contrast_scale <= 0.0 || !contrast_scale.is_finite() {
        return invalid(format!("contrast scale must be > 0, got {contrast_scale}"));
    }
    if !(-0.5..=0.5).contains(&brightness_shift) {
        return invalid(format!("brightness shift must be in [-0.5, 0.5], got {brightness_shift}"));
    }
    if brightness_shift == 0.0 && contrast_scale == 1.0 {
        return Ok(image.clone());
    }
    let data = image
        .data()
        .iter()
        .map(|&v| (contrast_scale * (v - 0.5) + 0.5 + brightness_shift).clamp(0.0, 1.0))
        .collect();
    Image::new(image.height(), image.width(), image.channels(), data)
}

/// Full degradation recipe. Applied as blur, noise, blocking, luminance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DegradationRecipe {
    pub blur_sigma: f64,
    pub noise_sigma: f64,
    pub block_strength: f64,
    pub brightness_shift: f64,
    pub contrast_scale: f64,
    pub seed: u64,
}

impl Default for DegradationRecipe {
    fn default() -> Self {
        Self {
            blur_sigma: 0.0,
            noise_sigma: 0.0,
            block_strength: 0.0,
            brightness_shift: 0.0,
            contrast_scale: 1.0,
            seed: 0,
        }
    }
}

impl DegradationRecipe {
    pub fn validate(&self) -> Result<()> {
        let ok = self.blur_sigma >= 0.0
            && self.noise_sigma >= 0.0
            && (0.0..=1.0).contains(&self.block_strength)
            && (-0.5..=0.5).contains(&self.brightness_shift)
            && self.contrast_scale > 0.0
            && [self.blur_sigma, self.noise_sigma, self.contrast_scale]
                .iter()
                .all(|v| v.is_finite());
        if ok {
            Ok(())
        } else {
            invalid(format!("recipe out of range: {self:?}"))
        }
    }

    pub fn apply(&self, image: &Image) -> Result<Image> {
        self.validate()?;
        let mut rng = Rng::new(self.seed);
        let out = gaussian_blur(image, self.blur_sigma)?;
        let out = add_awgn(&out, self.noise_sigma, &mut rng)?;
        let out = blockify(&out, self.block_strength)?;
        adjust_luminance(&out, self.brightness_shift, self.contrast_scale)
    }

    /// Neutral recipe with one axis set to `level`.
    pub fn single_axis(axis: Axis, level: f64, seed: u64) -> Self {
        let mut r = Self {
            seed,
            ..Self::default()
        };
        match axis {
            Axis::Blur => r.blur_sigma = level,
            Axis::Noise => r.noise_sigma = level,
            Axis::Block => r.block_strength = level,
            Axis::Brightness => r.brightness_shift = level,
            Axis::Contrast => r.contrast_scale = level,
        }
        r
    }
}

/// Severity axis of a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    Blur,
    Noise,
    Block,
    Brightness,
    Contrast,
}

impl Axis {
    pub const ALL: [Axis; 5] = [
        Axis::Blur,
        Axis::Noise,
        Axis::Block,
        Axis::Brightness,
        Axis::Contrast,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Axis::Blur => "blur",
            Axis::Noise => "noise",
            Axis::Block => "block",
            Axis::Brightness => "brightness",
            Axis::Contrast => "contrast",
        }
    }

    /// Standard severity levels used by the monotonicity checks.
    pub fn default_levels(self) -> Vec<f64> {
        match self {
            Axis::Blur => vec![0.0, 0.5, 1.0, 1.5, 2.0, 3.0],
            Axis::Noise => vec![0.0, 0.02, 0.05, 0.1, 0.2],
            Axis::Block => vec![0.0, 0.25, 0.5, 0.75, 1.0],
            Axis::Brightness => vec![-0.2, -0.1, 0.0, 0.1, 0.2],
            Axis::Contrast => vec![0.5, 0.75, 1.0, 1.25],
        }
    }
}

impl fmt::Display for Axis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Axis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Axis::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown axis '{s}'")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub image_id: usize,
    pub axis: Axis,
    pub level: f64,
    pub descriptor: DegradationDescriptor,
}

/// Degrades every corpus image at every level along `axis` and extracts
/// descriptors. Rows come out in (image, level) order; the noise stream for
/// `(image i, level j)` is `Rng::derive(base_seed, [i, j])`.
pub fn sweep(
    corpus: &[Image],
    axis: Axis,
    levels: &[f64],
    base_seed: u64,
    exec: Execution,
) -> Result<Vec<SweepRow>> {
    if corpus.is_empty() || levels.is_empty() {
        return invalid("sweep needs a non-empty corpus and level list");
    }
    let n = corpus.len() * levels.len();
    exec::map_indices(n, exec, |k| {
        let (i, j) = (k / levels.len(), k % levels.len());
        let seed = Rng::derive(base_seed, &[i as u64, j as u64]).seed();
        let recipe = DegradationRecipe::single_axis(axis, levels[j], seed);
        let img = recipe.apply(&corpus[i])?;
        Ok(SweepRow {
            image_id: i,
            axis,
            level: levels[j],
            descriptor: descriptor(&img)?,
        })
    })
    .into_iter()
    .collect()
}

pub const SWEEP_CSV_HEADER: [&str; 9] = [
    "image_id", "axis", "level", "d_blur", "d_noise", "d_jpeg", "d_edge", "d_bright", "d_contrast",
];

/// Writes sweep rows as CSV with the log-transformed descriptor values.
pub fn write_sweep_csv<W: Write>(rows: &[SweepRow], out: W) -> std::io::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SWEEP_CSV_HEADER)?;
    for r in rows {
        let mut rec = vec![r.image_id.to_string(), r.axis.to_string(), r.level.to_string()];
        rec.extend(r.descriptor.transformed.iter().map(|v| v.to_string()));
        w.write_record(&rec)?;
    }
    w.flush()
}

pub const CORPUS_SIZE: usize = 20;
pub const CORPUS_SIDE: usize = 64;
const CORPUS_SEED: u64 = 0x00c0_ffee;

/// The fixed 20-image procedural corpus (64x64; even ids grayscale, odd ids
/// RGB). Images cycle through four families: sinusoidal gratings, step-edge
/// shapes, Gaussian-filtered noise textures and mixtures of the three.
pub fn corpus() -> Vec<Image> {
    (0..CORPUS_SIZE)
        .map(|i| corpus_image(i, CORPUS_SIDE).expect("corpus generation is infallible"))
        .collect()
}

/// One procedurally generated corpus image of size `side x side`.
pub fn corpus_image(id: usize, side: usize) -> Result<Image> {
    let mut rng = Rng::derive(CORPUS_SEED, &[id as u64]);
    let channels = if id.is_multiple_of(2) { 1 } else { 3 };
    let base = match id % 4 {
        0 => grating(&mut rng, side),
        1 => steps(&mut rng, side),
        2 => texture(&mut rng, side)?,
        _ => {
            let g = grating(&mut rng, side);
            let s = steps(&mut rng, side);
            let t = texture(&mut rng, side)?;
            g.iter()
                .zip(&s)
                .zip(&t)
                .map(|((a, b), c)| 0.3 * a + 0.4 * b + 0.3 * c)
                .collect()
        }
    };
    let planes = (0..channels)
        .map(|_| {
            // per-channel gain/offset keeps RGB images from being gray
            let gain = rng.uniform_range(0.75, 1.0);
            let offset = rng.uniform_range(0.0, 1.0 - gain);
            Tensor::new(
                vec![side, side],
                base.iter().map(|v| offset + gain * v).collect(),
            )
        })
        .collect::<Result<Vec<_>>>()?;
    Image::from_channels(&planes)
}

// Values in [0, 1].
fn grating(rng: &mut Rng, side: usize) -> Vec<f64> {
    let comps: Vec<(f64, f64, f64, f64)> = (0..2)
        .map(|_| {
            let cycles = rng.uniform_range(2.0, 10.0);
            let theta = rng.uniform_range(0.0, std::f64::consts::PI);
            let phase = rng.uniform_range(0.0, std::f64::consts::TAU);
            let amp = rng.uniform_range(0.5, 1.0);
            (cycles, theta, phase, amp)
        })
        .collect();
    let norm: f64 = comps.iter().map(|c| c.3).sum();
    let mut out = Vec::with_capacity(side * side);
    for y in 0..side {
        for x in 0..side {
            let (u, v) = (x as f64 / side as f64, y as f64 / side as f64);
            let s: f64 = comps
                .iter()
                .map(|&(c, th, ph, a)| {
                    a * (std::f64::consts::TAU * c * (u * th.cos() + v * th.sin()) + ph).sin()
                })
                .sum();
            out.push(0.5 + 0.5 * s / norm);
        }
    }
    out
}

fn steps(rng: &mut Rng, side: usize) -> Vec<f64> {
    let mut out = vec![rng.uniform_range(0.2, 0.8); side * side];
    for _ in 0..4 {
        let level = rng.uniform_range(0.0, 1.0);
        if rng.bernoulli(0.5) {
            // half-plane
            let theta = rng.uniform_range(0.0, std::f64::consts::TAU);
            let off = rng.uniform_range(-0.3, 0.3);
            for y in 0..side {
                for x in 0..side {
                    let (u, v) = (x as f64 / side as f64 - 0.5, y as f64 / side as f64 - 0.5);
                    if u * theta.cos() + v * theta.sin() > off {
                        out[y * side + x] = level;
                    }
                }
            }
        } else {
            // axis-aligned rectangle
            let x0 = rng.int_range(0, side as u64 / 2) as usize;
            let y0 = rng.int_range(0, side as u64 / 2) as usize;
            let x1 = x0 + rng.int_range(8, side as u64 / 2) as usize;
            let y1 = y0 + rng.int_range(8, side as u64 / 2) as usize;
            for y in y0..y1.min(side) {
                for x in x0..x1.min(side) {
                    out[y * side + x] = level;
                }
            }
        }
    }
    out
}

fn texture(rng: &mut Rng, side: usize) -> Result<Vec<f64>> {
    let mut white = vec![0.0; side * side];
    rng.fill_normal(&mut white);
    let sigma = rng.uniform_range(0.8, 2.0);
    let taps = gaussian_kernel(sigma);
    let n = taps.len();
    let plane = Tensor::new(vec![side, side], white)?;
    let f = conv2d(
        &conv2d(&plane, &Tensor::new(vec![1, n], taps.clone())?, Padding::Replicate)?,
        &Tensor::new(vec![n, 1], taps)?,
        Padding::Replicate,
    )?;
    let (lo, hi) = (f.min(), f.max());
    Ok(f.data()
        .iter()
        .map(|v| 0.1 + 0.8 * (v - lo) / (hi - lo))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::descriptor::d_bright_contrast;

    fn ramp(h: usize, w: usize) -> Image {
        Image::gray_from_fn(h, w, |_, x| x as f64 / (w - 1) as f64).unwrap()
    }

    #[test]
    fn neutral_parameters_are_identity() {
        let img = corpus_image(3, 32).unwrap();
        assert_eq!(gaussian_blur(&img, 0.0).unwrap(), img);
        assert_eq!(add_awgn(&img, 0.0, &mut Rng::new(1)).unwrap(), img);
        assert_eq!(blockify(&img, 0.0).unwrap(), img);
        assert_eq!(adjust_luminance(&img, 0.0, 1.0).unwrap(), img);
        assert_eq!(DegradationRecipe::default().apply(&img).unwrap(), img);
    }

    #[test]
    fn invalid_parameters() {
        let img = ramp(8, 8);
        assert!(gaussian_blur(&img, -1.0).is_err());
        assert!(add_awgn(&img, -0.1, &mut Rng::new(0)).is_err());
        assert!(blockify(&img, 1.5).is_err());
        assert!(adjust_luminance(&img, 0.0, 0.0).is_err());
        assert!(adjust_luminance(&img, 0.7, 1.0).is_err());
        assert!("sharpen".parse::<Axis>().is_err());
    }

    #[test]
    fn blur_constant_and_impulse() {
        let c = Image::constant(9, 9, 3, 0.4).unwrap();
        let out = gaussian_blur(&c, 1.7).unwrap();
        assert!(out.data().iter().all(|&v| (v - 0.4).abs() < 1e-15));

        // Impulse at the centre of a 15x15 image; radius 3 stays inside.
        let imp = Image::gray_from_fn(15, 15, |y, x| if (y, x) == (7, 7) { 1.0 } else { 0.0 }).unwrap();
        let out = gaussian_blur(&imp, 1.0).unwrap();
        let raw: Vec<f64> = (-3..=3).map(|i: i32| (-(i * i) as f64 / 2.0).exp()).collect();
        let s: f64 = raw.iter().sum();
        let centre_1d = 1.0 / s;
        assert!((out.data()[7 * 15 + 7] - centre_1d * centre_1d).abs() < 1e-15);
        assert_eq!(gaussian_kernel(1.0).len(), 7);
        assert_eq!(gaussian_kernel(0.5).len(), 5);
    }

    #[test]
    fn awgn_statistics_and_determinism() {
        let img = Image::constant(250, 400, 1, 0.5).unwrap();
        let out = add_awgn(&img, 0.05, &mut Rng::new(9)).unwrap();
        let diff: Vec<f64> = out.data().iter().map(|v| v - 0.5).collect();
        let m = diff.iter().sum::<f64>() / diff.len() as f64;
        let sd = (diff.iter().map(|d| (d - m).powi(2)).sum::<f64>() / diff.len() as f64).sqrt();
        assert!((sd - 0.05).abs() < 0.02 * 0.05, "sd {sd}");
        let again = add_awgn(&img, 0.05, &mut Rng::new(9)).unwrap();
        assert_eq!(out, again);
    }

    #[test]
    fn blockify_tiles() {
        let c = Image::constant(20, 20, 1, 0.3).unwrap();
        let out = blockify(&c, 1.0).unwrap();
        assert!(out.data().iter().all(|&v| (v - 0.3).abs() < 1e-15));

        // Horizontal ramp 20 wide: tiles cover columns 0..8, 8..16, 16..20.
        let r = ramp(10, 20);
        let out = blockify(&r, 1.0).unwrap();
        let col_mean = |a: usize, b: usize| (a..b).map(|x| x as f64 / 19.0).sum::<f64>() / (b - a) as f64;
        for y in 0..10 {
            for x in 0..20 {
                let want = match x {
                    0..=7 => col_mean(0, 8),
                    8..=15 => col_mean(8, 16),
                    _ => col_mean(16, 20),
                };
                assert!((out.data()[y * 20 + x] - want).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn luminance_cases() {
        let c = Image::constant(4, 4, 1, 0.5).unwrap();
        let out = adjust_luminance(&c, 0.2, 1.0).unwrap();
        assert!(out.data().iter().all(|&v| (v - 0.7).abs() < 1e-15));

        let r = ramp(8, 16);
        let (_, sd0) = d_bright_contrast(&r).unwrap();
        let (_, sd1) = d_bright_contrast(&adjust_luminance(&r, 0.0, 0.5).unwrap()).unwrap();
        assert!((sd1 - 0.5 * sd0).abs() < 1e-12);
    }

    #[test]
    fn corpus_is_fixed_and_in_range() {
        let a = corpus();
        let b = corpus();
        assert_eq!(a.len(), CORPUS_SIZE);
        assert_eq!(a, b);
        for (i, img) in a.iter().enumerate() {
            assert_eq!((img.height(), img.width()), (64, 64));
            assert_eq!(img.channels(), if i % 2 == 0 { 1 } else { 3 });
        }
    }

    #[test]
    fn sweep_shape_and_neutral_level() {
        let c: Vec<Image> = (0..3).map(|i| corpus_image(i, 32).unwrap()).collect();
        let rows = sweep(&c, Axis::Blur, &[0.0], 5, Execution::Sequential).unwrap();
        assert_eq!(rows.len(), 3);
        for (r, img) in rows.iter().zip(&c) {
            assert_eq!(r.descriptor, descriptor(img).unwrap());
        }
        let rows = sweep(&c, Axis::Noise, &[0.0, 0.1], 5, Execution::Sequential).unwrap();
        assert_eq!(rows.len(), 6);
        assert!(rows[1].descriptor.noise() > rows[0].descriptor.noise());
        assert!(sweep(&[], Axis::Noise, &[0.0], 5, Execution::Sequential).is_err());
    }

    #[test]
    fn sweep_modes_agree_and_csv_is_stable() {
        let c: Vec<Image> = (0..4).map(|i| corpus_image(i, 32).unwrap()).collect();
        let levels = [0.0, 0.05, 0.1];
        let a = sweep(&c, Axis::Noise, &levels, 11, Execution::Sequential).unwrap();
        let b = sweep(&c, Axis::Noise, &levels, 11, Execution::Parallel).unwrap();
        assert_eq!(a, b);
        let mut out = Vec::new();
        write_sweep_csv(&a, &mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        let mut lines = text.lines();
        assert_eq!(
            lines.next().unwrap(),
            "image_id,axis,level,d_blur,d_noise,d_jpeg,d_edge,d_bright,d_contrast"
        );
        assert_eq!(lines.count(), 12);
    }
}
