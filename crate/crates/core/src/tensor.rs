//! Dense row-major `f64` arrays and the image primitives built on them.

use crate::error::{invalid, Result};
use crate::rng::Rng;

/// Dense row-major array. Every value is finite.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

fn check_shape(shape: &[usize]) -> Result<usize> {
    if shape.is_empty() || shape.contains(&0) {
        return invalid(format!("shape {shape:?} must have positive extents"));
    }
    Ok(shape.iter().product())
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let n = check_shape(&shape)?;
        if data.len() != n {
            return invalid(format!(
                "data length {} does not match shape {:?}",
                data.len(),
                shape
            ));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return invalid("tensor values must be finite");
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Result<Self> {
        Self::full(shape, 0.0)
    }

    pub fn full(shape: &[usize], value: f64) -> Result<Self> {
        let n = check_shape(shape)?;
        Self::new(shape.to_vec(), vec![value; n])
    }

    /// Builds a 2-D `h x w` tensor from `f(y, x)`.
    pub fn from_fn2(h: usize, w: usize, f: impl Fn(usize, usize) -> f64) -> Result<Self> {
        let mut data = Vec::with_capacity(h * w);
        for y in 0..h {
            for x in 0..w {
                data.push(f(y, x));
            }
        }
        Self::new(vec![h, w], data)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// `(h, w)` of a single plane: rank 2, or rank 3 with one trailing
    /// channel.
    pub fn plane_dims(&self) -> Result<(usize, usize)> {
        match self.shape.as_slice() {
            &[h, w] | &[h, w, 1] => Ok((h, w)),
            s => invalid(format!("expected a single-channel plane, got shape {s:?}")),
        }
    }

    /// Value at `(y, x)` of a single plane.
    #[inline]
    pub fn at2(&self, y: usize, x: usize) -> f64 {
        self.data[y * self.shape[1] + x]
    }

    /// Returns a tensor with the same data and a new shape.
    pub fn reshape(self, shape: Vec<usize>) -> Result<Self> {
        let n = check_shape(&shape)?;
        if n != self.data.len() {
            return invalid(format!("cannot reshape {:?} to {:?}", self.shape, shape));
        }
        Ok(Self {
            shape,
            data: self.data,
        })
    }

    /// Elementwise map. `f` must keep values finite.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::new(self.shape.clone(), self.data.iter().map(|&v| f(v)).collect())
    }

    pub fn min(&self) -> f64 {
        self.data.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn mean(&self) -> f64 {
        mean(&self.data)
    }

    /// Population variance.
    pub fn variance(&self) -> f64 {
        variance(&self.data)
    }
}

/// Mean, accumulated as offsets from the first element so that constant
/// data gives that constant back exactly.
pub(crate) fn mean(v: &[f64]) -> f64 {
    let Some(&pivot) = v.first() else {
        return f64::NAN;
    };
    pivot + v.iter().map(|x| x - pivot).sum::<f64>() / v.len() as f64
}

/// Population variance (two-pass). Exactly zero on constant data.
pub(crate) fn variance(v: &[f64]) -> f64 {
    let m = mean(v);
    v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / v.len() as f64
}

/// Image with `channels` in {1, 3} and every pixel in `[0, 1]`.
///
/// Pixels are stored as an `[H, W, C]` tensor, channel-interleaved.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    height: usize,
    width: usize,
    channels: usize,
    pixels: Tensor,
}

impl Image {
    pub fn new(height: usize, width: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if channels != 1 && channels != 3 {
            return invalid(format!("unsupported channel count {channels}"));
        }
        let pixels = Tensor::new(vec![height, width, channels], data)?;
        if pixels.data.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return invalid("image pixels must lie in [0, 1]");
        }
        Ok(Self {
            height,
            width,
            channels,
            pixels,
        })
    }

    /// Single-channel image from a plane; values must be in `[0, 1]`.
    pub fn from_plane(plane: Tensor) -> Result<Self> {
        let (h, w) = plane.plane_dims()?;
        Self::new(h, w, 1, plane.into_data())
    }

    /// Single-channel image from `f(y, x)`, clamped into `[0, 1]`.
    pub fn gray_from_fn(h: usize, w: usize, f: impl Fn(usize, usize) -> f64) -> Result<Self> {
        Self::from_plane(Tensor::from_fn2(h, w, |y, x| f(y, x).clamp(0.0, 1.0))?)
    }

    pub fn constant(h: usize, w: usize, channels: usize, value: f64) -> Result<Self> {
        Self::new(h, w, channels, vec![value; h * w * channels])
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn pixels(&self) -> &Tensor {
        &self.pixels
    }

    pub fn data(&self) -> &[f64] {
        &self.pixels.data
    }

    /// Extracts channel `c` as an `[H, W]` plane.
    pub fn channel(&self, c: usize) -> Tensor {
        assert!(c < self.channels, "channel {c} out of range");
        let data = self
            .pixels
            .data
            .iter()
            .skip(c)
            .step_by(self.channels)
            .copied()
            .collect();
        Tensor {
            shape: vec![self.height, self.width],
            data,
        }
    }

    /// Reassembles an image from per-channel planes, clamping into `[0, 1]`.
    pub fn from_channels(planes: &[Tensor]) -> Result<Self> {
        let (h, w) = planes
            .first()
            .ok_or_else(|| crate::Error::InvalidArgument("no channels".into()))?
            .plane_dims()?;
        for p in planes {
            if p.plane_dims()? != (h, w) {
                return invalid("channel planes differ in size");
            }
        }
        let c = planes.len();
        let mut data = vec![0.0; h * w * c];
        for (ci, p) in planes.iter().enumerate() {
            for (i, &v) in p.data.iter().enumerate() {
                data[i * c + ci] = v.clamp(0.0, 1.0);
            }
        }
        Self::new(h, w, c, data)
    }

    /// Applies `f` to every channel plane independently.
    pub fn map_channels(&self, mut f: impl FnMut(&Tensor) -> Result<Tensor>) -> Result<Self> {
        let planes = (0..self.channels)
            .map(|c| f(&self.channel(c)))
            .collect::<Result<Vec<_>>>()?;
        Self::from_channels(&planes)
    }
}

/// Border handling for convolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Padding {
    /// Clamp coordinates to the nearest edge pixel.
    Replicate,
    /// Treat out-of-range pixels as zero.
    Zero,
}

/// 2-D correlation (no kernel flip) of a single plane with an odd-sized
/// kernel:
///
/// `out[y, x] = sum_{i, j} k[i, j] * in[y + i - ry, x + j - rx]`
///
/// The output has the same `H x W` as the input.
pub fn conv2d(input: &Tensor, kernel: &Tensor, padding: Padding) -> Result<Tensor> {
    let (h, w) = input.plane_dims()?;
    let (kh, kw) = match kernel.shape() {
        &[kh, kw] => (kh, kw),
        s => return invalid(format!("kernel must be 2-D, got {s:?}")),
    };
    if kh % 2 == 0 || kw % 2 == 0 {
        return invalid(format!("kernel extents {kh}x{kw} must be odd"));
    }
    let (ry, rx) = ((kh / 2) as isize, (kw / 2) as isize);
    let (hi, wi) = (h as isize, w as isize);
    let src = input.data();
    let k = kernel.data();
    let mut out = vec![0.0; h * w];
    for y in 0..hi {
        for x in 0..wi {
            let mut acc = 0.0;
            for i in 0..kh as isize {
                let sy = y + i - ry;
                let sy = match padding {
                    Padding::Replicate => sy.clamp(0, hi - 1),
                    Padding::Zero if sy < 0 || sy >= hi => continue,
                    Padding::Zero => sy,
                };
                for j in 0..kw as isize {
                    let sx = x + j - rx;
                    let sx = match padding {
                        Padding::Replicate => sx.clamp(0, wi - 1),
                        Padding::Zero if sx < 0 || sx >= wi => continue,
                        Padding::Zero => sx,
                    };
                    acc += k[(i * kw as isize + j) as usize] * src[(sy * wi + sx) as usize];
                }
            }
            out[(y * wi + x) as usize] = acc;
        }
    }
    Tensor::new(vec![h, w], out)
}

/// Mean of the replicate-padded 3x3 neighbourhood of every pixel.
pub fn avg_pool3x3(input: &Tensor) -> Result<Tensor> {
    let box3 = Tensor::full(&[3, 3], 1.0 / 9.0)?;
    let pooled = conv2d(input, &box3, Padding::Replicate)?;
    // The 1/9 weights can overshoot the input range by an ulp.
    let (lo, hi) = (input.min(), input.max());
    pooled.map(|v| v.clamp(lo, hi))
}

/// Bilinear resize of a single plane with half-pixel-centre alignment.
///
/// Output pixel `(y, x)` samples the source at
/// `sy = (y + 0.5) * H / out_h - 0.5`, clamped to `[0, H - 1]` (likewise for
/// `x`). A source extent of 1 reproduces that row/column everywhere.
pub fn bilinear_resize(input: &Tensor, out_h: usize, out_w: usize) -> Result<Tensor> {
    let (h, w) = input.plane_dims()?;
    if out_h == 0 || out_w == 0 {
        return invalid("target extents must be positive");
    }
    if (h, w) == (out_h, out_w) {
        return Tensor::new(vec![h, w], input.data().to_vec());
    }
    let axis = |dst: usize, src_len: usize, dst_len: usize| -> (usize, usize, f64) {
        let s = ((dst as f64 + 0.5) * src_len as f64 / dst_len as f64 - 0.5)
            .clamp(0.0, (src_len - 1) as f64);
        let i0 = s.floor() as usize;
        let i1 = (i0 + 1).min(src_len - 1);
        (i0, i1, s - i0 as f64)
    };
    let xs: Vec<_> = (0..out_w).map(|x| axis(x, w, out_w)).collect();
    let (lo, hi) = (input.min(), input.max());
    let mut out = Vec::with_capacity(out_h * out_w);
    for y in 0..out_h {
        let (y0, y1, fy) = axis(y, h, out_h);
        for &(x0, x1, fx) in &xs {
            let top = input.at2(y0, x0) * (1.0 - fx) + input.at2(y0, x1) * fx;
            let bot = input.at2(y1, x0) * (1.0 - fx) + input.at2(y1, x1) * fx;
            out.push((top * (1.0 - fy) + bot * fy).clamp(lo, hi));
        }
    }
    Tensor::new(vec![out_h, out_w], out)
}

/// I.i.d. standard normal samples.
pub fn gaussian(shape: &[usize], rng: &mut Rng) -> Result<Tensor> {
    let n = check_shape(shape)?;
    let mut data = vec![0.0; n];
    rng.fill_normal(&mut data);
    Tensor::new(shape.to_vec(), data)
}

pub mod kernels {
    //! Fixed 3x3 stencils.

    use super::Tensor;

    pub fn sobel_x() -> Tensor {
        Tensor::new(
            vec![3, 3],
            vec![-1.0, 0.0, 1.0, -2.0, 0.0, 2.0, -1.0, 0.0, 1.0],
        )
        .unwrap()
    }

    pub fn sobel_y() -> Tensor {
        Tensor::new(
            vec![3, 3],
            vec![-1.0, -2.0, -1.0, 0.0, 0.0, 0.0, 1.0, 2.0, 1.0],
        )
        .unwrap()
    }

    /// 4-neighbour Laplacian.
    pub fn laplacian() -> Tensor {
        Tensor::new(
            vec![3, 3],
            vec![0.0, 1.0, 0.0, 1.0, -4.0, 1.0, 0.0, 1.0, 0.0],
        )
        .unwrap()
    }
}
