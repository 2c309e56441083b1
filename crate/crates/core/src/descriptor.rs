//! Six-statistic degradation descriptor.
//!
//! All statistics are computed on the luma plane
//! `I_g = 0.299 R + 0.587 G + 0.114 B`:
//!
//! | index | name       | definition                                                 |
//! |-------|------------|------------------------------------------------------------|
//! | 0     | `blur`     | `1 / (Var(laplacian(I_g)) + eps)`                          |
//! | 1     | `noise`    | `mean |I_g - avgpool3x3(I_g)|`                             |
//! | 2     | `jpeg`     | `max(0, B - N)` over 8x8 grid boundary/interior neighbours |
//! | 3     | `edge`     | fraction of pixels with Sobel magnitude `> threshold`      |
//! | 4     | `bright`   | mean of `I_g`                                              |
//! | 5     | `contrast` | population standard deviation of `I_g`                     |
//!
//! The transformed descriptor is `ln(1 + raw)` elementwise. Convolutions and
//! pooling use replicate padding.

use serde::Serialize;

use crate::error::{invalid, Result};
use crate::tensor::{self, avg_pool3x3, conv2d, kernels, Image, Padding, Tensor};

pub const LUMA_WEIGHTS: [f64; 3] = [0.299, 0.587, 0.114];
pub const DEFAULT_EPSILON: f64 = 1e-6;
pub const DEFAULT_EDGE_THRESHOLD: f64 = 0.08;
pub const BLOCK: usize = 8;

pub const COMPONENT_NAMES: [&str; 6] = ["blur", "noise", "jpeg", "edge", "bright", "contrast"];

/// Tunable constants of the descriptor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DescriptorParams {
    /// Stabiliser in the blur reciprocal.
    pub epsilon: f64,
    /// Sobel magnitude threshold for the edge density (on `[0, 1]` intensities).
    pub edge_threshold: f64,
}

impl Default for DescriptorParams {
    fn default() -> Self {
        Self {
            epsilon: DEFAULT_EPSILON,
            edge_threshold: DEFAULT_EDGE_THRESHOLD,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DegradationDescriptor {
    /// `[blur, noise, jpeg, edge, bright, contrast]`.
    pub raw: [f64; 6],
    /// `ln(1 + raw)`.
    pub transformed: [f64; 6],
}

impl DegradationDescriptor {
    pub fn from_raw(raw: [f64; 6]) -> Self {
        Self {
            raw,
            transformed: raw.map(f64::ln_1p),
        }
    }

    pub fn blur(&self) -> f64 {
        self.raw[0]
    }
    pub fn noise(&self) -> f64 {
        self.raw[1]
    }
    pub fn jpeg(&self) -> f64 {
        self.raw[2]
    }
    pub fn edge(&self) -> f64 {
        self.raw[3]
    }
    pub fn bright(&self) -> f64 {
        self.raw[4]
    }
    pub fn contrast(&self) -> f64 {
        self.raw[5]
    }
}

/// JSON record for one analysed image. Field order is part of the format.
#[derive(Debug, Clone, Serialize)]
pub struct DescriptorRecord {
    pub raw: [f64; 6],
    pub log1p: [f64; 6],
    pub image: String,
    pub epsilon: f64,
}

impl DescriptorRecord {
    pub fn new(image: impl Into<String>, d: &DegradationDescriptor, params: &DescriptorParams) -> Self {
        Self {
            raw: d.raw,
            log1p: d.transformed,
            image: image.into(),
            epsilon: params.epsilon,
        }
    }

    /// Single-line JSON. Floats are written in shortest round-trip form,
    /// which preserves every bit of the value.
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("record is always serialisable")
    }
}

/// Luma plane of an image. One-channel images pass through unchanged.
pub fn grayscale(image: &Image) -> Result<Image> {
    match image.channels() {
        1 => Ok(image.clone()),
        3 => {
            let [wr, wg, wb] = LUMA_WEIGHTS;
            let data = image
                .data()
                .chunks_exact(3)
                .map(|p| (wr * p[0] + wg * p[1] + wb * p[2]).clamp(0.0, 1.0))
                .collect();
            Image::new(image.height(), image.width(), 1, data)
        }
        c => invalid(format!("unsupported channel count {c}")),
    }
}

fn gray_plane(gray: &Image, min_side: usize, what: &str) -> Result<Tensor> {
    if gray.channels() != 1 {
        return invalid(format!("{what} expects a single-channel image"));
    }
    if gray.height() < min_side || gray.width() < min_side {
        return invalid(format!(
            "{what} needs at least {min_side}x{min_side} pixels, got {}x{}",
            gray.height(),
            gray.width()
        ));
    }
    gray.pixels().clone().reshape(vec![gray.height(), gray.width()])
}

/// Reciprocal Laplacian variance.
pub fn d_blur(gray: &Image, epsilon: f64) -> Result<f64> {
    let plane = gray_plane(gray, 3, "d_blur")?;
    let lap = conv2d(&plane, &kernels::laplacian(), Padding::Replicate)?;
    Ok(1.0 / (lap.variance() + epsilon))
}

/// Mean absolute residual against the 3x3 box mean.
pub fn d_noise(gray: &Image) -> Result<f64> {
    let plane = gray_plane(gray, 1, "d_noise")?;
    let pooled = avg_pool3x3(&plane)?;
    let resid: Vec<f64> = plane
        .data()
        .iter()
        .zip(pooled.data())
        .map(|(a, b)| (a - b).abs())
        .collect();
    Ok(tensor::mean(&resid))
}

/// Blocking strength on the origin-aligned 8x8 grid.
///
/// `B` is the mean absolute difference over neighbour pairs that straddle a
/// grid line (pairs `(k*8 - 1, k*8)` along either axis) and `N` the mean over
/// all other neighbour pairs; the result is `max(0, B - N)`.
pub fn d_jpeg(gray: &Image) -> Result<f64> {
    let plane = gray_plane(gray, BLOCK + 1, "d_jpeg")?;
    let (h, w) = plane.plane_dims()?;
    let (mut b_sum, mut b_n, mut n_sum, mut n_n) = (0.0, 0usize, 0.0, 0usize);
    let mut push = |boundary: bool, d: f64| {
        if boundary {
            b_sum += d;
            b_n += 1;
        } else {
            n_sum += d;
            n_n += 1;
        }
    };
    for y in 0..h {
        for x in 0..w {
            let v = plane.at2(y, x);
            if x + 1 < w {
                push((x + 1) % BLOCK == 0, (plane.at2(y, x + 1) - v).abs());
            }
            if y + 1 < h {
                push((y + 1) % BLOCK == 0, (plane.at2(y + 1, x) - v).abs());
            }
        }
    }
    let boundary = b_sum / b_n as f64;
    let interior = n_sum / n_n as f64;
    Ok((boundary - interior).max(0.0))
}

/// Sobel gradient magnitude of a plane, replicate padding.
///
/// Evaluated as paired differences (`(a - b) + 2 (c - d) + (e - f)`), which
/// is the same correlation as [`kernels::sobel_x`] / [`kernels::sobel_y`]
/// but exactly zero on flat regions.
pub fn sobel_magnitude(plane: &Tensor) -> Result<Tensor> {
    let (h, w) = plane.plane_dims()?;
    let at = |y: isize, x: isize| {
        let y = y.clamp(0, h as isize - 1) as usize;
        let x = x.clamp(0, w as isize - 1) as usize;
        plane.data()[y * w + x]
    };
    let mut mag = Vec::with_capacity(h * w);
    for y in 0..h as isize {
        for x in 0..w as isize {
            let gx = (at(y - 1, x + 1) - at(y - 1, x - 1))
                + 2.0 * (at(y, x + 1) - at(y, x - 1))
                + (at(y + 1, x + 1) - at(y + 1, x - 1));
            let gy = (at(y + 1, x - 1) - at(y - 1, x - 1))
                + 2.0 * (at(y + 1, x) - at(y - 1, x))
                + (at(y + 1, x + 1) - at(y - 1, x + 1));
            mag.push(gx.hypot(gy));
        }
    }
    Tensor::new(vec![h, w], mag)
}

/// Fraction of pixels whose Sobel magnitude strictly exceeds `threshold`.
pub fn d_edge(gray: &Image, threshold: f64) -> Result<f64> {
    let plane = gray_plane(gray, 3, "d_edge")?;
    let mag = sobel_magnitude(&plane)?;
    let count = mag.data().iter().filter(|&&g| g > threshold).count();
    Ok(count as f64 / mag.len() as f64)
}

/// Population mean and standard deviation.
pub fn d_bright_contrast(gray: &Image) -> Result<(f64, f64)> {
    let plane = gray_plane(gray, 1, "d_bright_contrast")?;
    Ok((plane.mean(), plane.variance().sqrt()))
}

pub fn descriptor(image: &Image) -> Result<DegradationDescriptor> {
    descriptor_with(image, &DescriptorParams::default())
}

pub fn descriptor_with(image: &Image, params: &DescriptorParams) -> Result<DegradationDescriptor> {
    let g = grayscale(image)?;
    let (bright, contrast) = d_bright_contrast(&g)?;
    Ok(DegradationDescriptor::from_raw([
        d_blur(&g, params.epsilon)?,
        d_noise(&g)?,
        d_jpeg(&g)?,
        d_edge(&g, params.edge_threshold)?,
        bright,
        contrast,
    ]))
}
