//! Binary weight file.
//!
//! ```text
//! "DTIA" | version: u32 | D: u32 | array*          adapter section
//! ["TOYD" | array*]                                optional toy-denoiser section
//! array := name_len: u32 | name: utf-8 | rank: u32 | extents: u32 * rank | f64 * prod(extents)
//! ```
//!
//! All integers and floats are little-endian. Arrays run until end of file
//! or until the four bytes `TOYD`; a name length can never spell `TOYD`
//! because names are capped at 255 bytes.

use std::path::Path;

use super::AdapterWeights;
use crate::error::{invalid, Error, Result};

pub const MAGIC: &[u8; 4] = b"DTIA";
pub const TOY_MAGIC: &[u8; 4] = b"TOYD";
pub const VERSION: u32 = 1;
const MAX_NAME: usize = 255;

#[derive(Debug, Clone, PartialEq)]
pub struct NamedArray {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl NamedArray {
    pub fn new(name: impl Into<String>, shape: Vec<usize>, data: Vec<f64>) -> Self {
        Self {
            name: name.into(),
            shape,
            data,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeightFile {
    pub token_dim: u32,
    pub adapter: Vec<NamedArray>,
    pub toy: Option<Vec<NamedArray>>,
}

fn put_u32(out: &mut Vec<u8>, v: usize) {
    out.extend_from_slice(&(v as u32).to_le_bytes());
}

fn put_arrays(out: &mut Vec<u8>, arrays: &[NamedArray]) -> Result<()> {
    for a in arrays {
        if a.name.is_empty() || a.name.len() > MAX_NAME {
            return invalid(format!("array name '{}' must be 1..=255 bytes", a.name));
        }
        if a.shape.iter().product::<usize>() != a.data.len() {
            return invalid(format!("array '{}' shape does not match data", a.name));
        }
        put_u32(out, a.name.len());
        out.extend_from_slice(a.name.as_bytes());
        put_u32(out, a.shape.len());
        for &e in &a.shape {
            put_u32(out, e);
        }
        for v in &a.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(())
}

impl WeightFile {
    pub fn encode(&self) -> Result<Vec<u8>> {
        let mut out = MAGIC.to_vec();
        put_u32(&mut out, VERSION as usize);
        put_u32(&mut out, self.token_dim as usize);
        put_arrays(&mut out, &self.adapter)?;
        if let Some(toy) = &self.toy {
            out.extend_from_slice(TOY_MAGIC);
            put_arrays(&mut out, toy)?;
        }
        Ok(out)
    }

    pub fn decode(bytes: &[u8]) -> std::result::Result<Self, String> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err("missing DTIA magic".into());
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(format!("unsupported format version {version}"));
        }
        let token_dim = r.u32()?;
        let adapter = r.arrays()?;
        let toy = if r.at_end() {
            None
        } else {
            r.take(4)?; // TOYD, checked by arrays()
            Some(r.arrays()?)
        };
        if !r.at_end() {
            return Err("trailing bytes".into());
        }
        Ok(Self {
            token_dim,
            adapter,
            toy,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.encode()?).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::decode(&bytes).map_err(|msg| Error::Format {
            path: path.to_path_buf(),
            msg,
        })
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn at_end(&self) -> bool {
        self.pos == self.bytes.len()
    }

    fn take(&mut self, n: usize) -> std::result::Result<&'a [u8], String> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| "unexpected end of file".to_string())?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> std::result::Result<u32, String> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    // Reads arrays until EOF or the TOYD marker (not consumed).
    fn arrays(&mut self) -> std::result::Result<Vec<NamedArray>, String> {
        let mut out = Vec::new();
        while !self.at_end() && self.bytes[self.pos..].get(..4) != Some(&TOY_MAGIC[..]) {
            let len = self.u32()? as usize;
            if len == 0 || len > MAX_NAME {
                return Err(format!("bad array name length {len}"));
            }
            let name = std::str::from_utf8(self.take(len)?)
                .map_err(|_| "array name is not utf-8".to_string())?
                .to_string();
            let rank = self.u32()? as usize;
            if rank > 8 {
                return Err(format!("array '{name}' has unsupported rank {rank}"));
            }
            let shape = (0..rank)
                .map(|_| self.u32().map(|e| e as usize))
                .collect::<std::result::Result<Vec<_>, _>>()?;
            let n: usize = shape.iter().product();
            let raw = self.take(n.checked_mul(8).ok_or("array too large")?)?;
            let data = raw
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect();
            out.push(NamedArray { name, shape, data });
        }
        Ok(out)
    }
}

impl AdapterWeights {
    pub fn to_arrays(&self) -> Vec<NamedArray> {
        self.groups()
            .into_iter()
            .map(|(name, shape, data)| NamedArray::new(name, shape, data.to_vec()))
            .collect()
    }

    pub fn from_arrays(token_dim: usize, arrays: &[NamedArray]) -> Result<Self> {
        let mut w = Self::zero_grad(token_dim);
        let expected: Vec<(&str, Vec<usize>)> = w
            .groups()
            .into_iter()
            .map(|(n, s, _)| (n, s))
            .collect();
        if arrays.len() != expected.len() {
            return invalid(format!(
                "expected {} adapter arrays, found {}",
                expected.len(),
                arrays.len()
            ));
        }
        for ((name, shape), ((_, dst), a)) in expected
            .into_iter()
            .zip(w.groups_mut().into_iter().zip(arrays))
        {
            if a.name != name || a.shape != shape {
                return invalid(format!(
                    "expected array {name} {shape:?}, found {} {:?}",
                    a.name, a.shape
                ));
            }
            if a.data.iter().any(|v| !v.is_finite()) {
                return invalid(format!("array {name} has non-finite values"));
            }
            dst.copy_from_slice(&a.data);
        }
        Ok(w)
    }
}
