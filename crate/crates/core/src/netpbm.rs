//! Binary PGM (P5) and PPM (P6) images, 8 bits per sample.
//!
//! Samples map to `[0, 1]` as `v / maxval` (so `v / 255` for ordinary
//! files); writing quantises with `round(v * 255)`.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::Image;

fn format_err(path: &Path, msg: impl Into<String>) -> Error {
    Error::Format {
        path: path.to_path_buf(),
        msg: msg.into(),
    }
}

/// Reads a P5 or P6 file.
pub fn read(path: impl AsRef<Path>) -> Result<Image> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    decode(&bytes).map_err(|msg| format_err(path, msg))
}

/// Decodes an in-memory P5/P6 file.
pub fn decode(bytes: &[u8]) -> std::result::Result<Image, String> {
    let channels = match bytes.get(..2) {
        Some(b"P5") => 1,
        Some(b"P6") => 3,
        _ => return Err("expected P5 or P6 magic".into()),
    };
    let mut pos = 2;
    let mut fields = [0usize; 3];
    for field in &mut fields {
        // whitespace and comments
        loop {
            match bytes.get(pos) {
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|&b| b != b'\n') {
                        pos += 1;
                    }
                }
                _ => break,
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(|b| b.is_ascii_digit()) {
            pos += 1;
        }
        if start == pos {
            return Err("truncated header".into());
        }
        *field = std::str::from_utf8(&bytes[start..pos])
            .unwrap()
            .parse()
            .map_err(|_| "header value out of range".to_string())?;
    }
    // exactly one whitespace byte before the raster
    if !bytes.get(pos).is_some_and(|b| b.is_ascii_whitespace()) {
        return Err("missing whitespace after header".into());
    }
    pos += 1;
    let [width, height, maxval] = fields;
    if width == 0 || height == 0 {
        return Err("zero image dimension".into());
    }
    if maxval == 0 || maxval > 255 {
        return Err(format!("unsupported maxval {maxval}; only 8-bit files are supported"));
    }
    let n = width * height * channels;
    let raster = bytes
        .get(pos..pos + n)
        .ok_or_else(|| format!("raster truncated: expected {n} bytes"))?;
    let scale = maxval as f64;
    let data = raster
        .iter()
        .map(|&v| (v as f64 / scale).min(1.0))
        .collect();
    Image::new(height, width, channels, data).map_err(|e| e.to_string())
}

/// Encodes an image as P5 (one channel) or P6 (three channels).
pub fn encode(image: &Image) -> Vec<u8> {
    let magic = if image.channels() == 1 { "P5" } else { "P6" };
    let mut out = format!("{magic}\n{} {}\n255\n", image.width(), image.height()).into_bytes();
    out.extend(image.data().iter().map(|&v| (v * 255.0).round() as u8));
    out
}

pub fn write(path: impl AsRef<Path>, image: &Image) -> Result<()> {
    let path = path.as_ref();
    let io = |source| Error::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut f = fs::File::create(path).map_err(io)?;
    f.write_all(&encode(image)).map_err(io)
}
