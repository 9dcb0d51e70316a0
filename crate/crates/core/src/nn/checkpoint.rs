//! Named-array checkpoint container.
//!
//! Layout (all integers little-endian):
//! `"MBNN"`, version `u16`, array count `u32`, then per array: name length
//! `u32`, UTF-8 name, rank `u32`, `rank` dims as `u32`, row-major `f32` data.

use std::io::{Read, Write};
use std::path::Path;

use super::activation::Activation;
use super::mlp::{Dense, Mlp};
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"MBNN";
const VERSION: u16 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct NamedArray {
    pub name: String,
    pub dims: Vec<u32>,
    pub data: Vec<f32>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Checkpoint {
    arrays: Vec<NamedArray>,
}

impl Checkpoint {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn arrays(&self) -> &[NamedArray] {
        &self.arrays
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.arrays.iter().map(|a| a.name.as_str())
    }

    /// Stores `values` narrowed to `f32`. Replaces an existing array of the same name.
    pub fn insert(&mut self, name: impl Into<String>, dims: &[usize], values: &[f64]) -> Result<()> {
        let name = name.into();
        let count: usize = dims.iter().product();
        if count != values.len() {
            return Err(Error::Usage(format!(
                "array `{name}`: dims {dims:?} hold {count} values, got {}",
                values.len()
            )));
        }
        let arr = NamedArray {
            name,
            dims: dims.iter().map(|&d| d as u32).collect(),
            data: values.iter().map(|&v| v as f32).collect(),
        };
        match self.arrays.iter_mut().find(|a| a.name == arr.name) {
            Some(slot) => *slot = arr,
            None => self.arrays.push(arr),
        }
        Ok(())
    }

    pub fn get(&self, name: &str) -> Result<&NamedArray> {
        self.arrays
            .iter()
            .find(|a| a.name == name)
            .ok_or_else(|| Error::Format(format!("checkpoint has no array `{name}`")))
    }

    pub fn contains(&self, name: &str) -> bool {
        self.arrays.iter().any(|a| a.name == name)
    }

    /// Values widened back to `f64`, checked against the expected dims.
    pub fn get_f64(&self, name: &str, dims: &[usize]) -> Result<Vec<f64>> {
        let a = self.get(name)?;
        let have: Vec<usize> = a.dims.iter().map(|&d| d as usize).collect();
        if have != dims {
            return Err(Error::Format(format!(
                "array `{name}` has dims {have:?}, expected {dims:?}"
            )));
        }
        Ok(a.data.iter().map(|&v| v as f64).collect())
    }

    pub fn insert_mlp(&mut self, prefix: &str, net: &Mlp) -> Result<()> {
        for (j, l) in net.layers.iter().enumerate() {
            self.insert(format!("{prefix}/layer{j}/W"), &[l.in_dim, l.out_dim], &l.weight)?;
            self.insert(format!("{prefix}/layer{j}/b"), &[l.out_dim], &l.bias)?;
        }
        Ok(())
    }

    /// Reads a network with the given layer sizes and hidden activation.
    pub fn get_mlp(&self, prefix: &str, sizes: &[usize], activation: Activation) -> Result<Mlp> {
        let layers = sizes
            .windows(2)
            .enumerate()
            .map(|(j, w)| {
                Ok(Dense {
                    in_dim: w[0],
                    out_dim: w[1],
                    weight: self.get_f64(&format!("{prefix}/layer{j}/W"), &[w[0], w[1]])?,
                    bias: self.get_f64(&format!("{prefix}/layer{j}/b"), &[w[1]])?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let hidden = layers.len().saturating_sub(1);
        Mlp::from_layers(layers, vec![activation; hidden])
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(self.arrays.len() as u32).to_le_bytes());
        for a in &self.arrays {
            out.extend_from_slice(&(a.name.len() as u32).to_le_bytes());
            out.extend_from_slice(a.name.as_bytes());
            out.extend_from_slice(&(a.dims.len() as u32).to_le_bytes());
            for d in &a.dims {
                out.extend_from_slice(&d.to_le_bytes());
            }
            for v in &a.data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(Error::Format("bad magic, not a checkpoint".into()));
        }
        let version = u16::from_le_bytes(r.take(2)?.try_into().unwrap());
        if version != VERSION {
            return Err(Error::Format(format!("unsupported checkpoint version {version}")));
        }
        let count = r.u32()?;
        let mut arrays = Vec::with_capacity(count.min(1 << 16) as usize);
        for _ in 0..count {
            let len = r.u32()? as usize;
            let name = std::str::from_utf8(r.take(len)?)
                .map_err(|_| Error::Format("array name is not UTF-8".into()))?
                .to_string();
            let rank = r.u32()? as usize;
            let dims = (0..rank).map(|_| r.u32()).collect::<Result<Vec<_>>>()?;
            let n = dims.iter().try_fold(1usize, |acc, &d| acc.checked_mul(d as usize));
            let n = n.ok_or_else(|| Error::Format(format!("array `{name}` is too large")))?;
            let raw = r.take(n.checked_mul(4).ok_or_else(|| Error::Format("overflow".into()))?)?;
            let data = raw
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                .collect();
            arrays.push(NamedArray { name, dims, data });
        }
        if r.pos != bytes.len() {
            return Err(Error::Format("trailing bytes after last array".into()));
        }
        Ok(Checkpoint { arrays })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(&self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut bytes = Vec::new();
        std::fs::File::open(path)
            .and_then(|mut f| f.read_to_end(&mut bytes))
            .map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Format("truncated checkpoint".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}

/// Rounds every value through `f32`, the precision checkpoints store.
pub fn round_to_f32(values: &mut [f64]) {
    for v in values {
        *v = *v as f32 as f64;
    }
}
