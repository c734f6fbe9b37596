//! Flat binary container for stacks of dense layers.
//!
//! ```text
//! "SFNN" | version: u16 | layer count: u16 |
//!   per layer: activation tag u8 | in u32 | out u32 | in*out f64 weights | out f64 bias
//! ```
//!
//! All integers and reals are little-endian.

use super::layer::{Activation, DenseLayer};
use super::tensor::Tensor;
use crate::{Error, Result};

pub const MAGIC: &[u8; 4] = b"SFNN";
pub const VERSION: u16 = 1;

pub fn encode_layers(layers: &[DenseLayer]) -> Result<Vec<u8>> {
    let count = u16::try_from(layers.len())
        .map_err(|_| Error::Model(format!("too many layers: {}", layers.len())))?;
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&count.to_le_bytes());
    for layer in layers {
        let dim = |d: usize| u32::try_from(d).map_err(|_| Error::Model(format!("layer dimension {d} too large")));
        out.push(layer.activation().tag());
        out.extend_from_slice(&dim(layer.inputs())?.to_le_bytes());
        out.extend_from_slice(&dim(layer.outputs())?.to_le_bytes());
        for v in layer.weights().data().iter().chain(layer.bias().data()) {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len()).ok_or_else(|| {
            Error::Model(format!("truncated at byte {} (needed {n} more)", self.pos))
        })?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn reals(&mut self, n: usize) -> Result<Vec<f64>> {
        let bytes = self.take(n.checked_mul(8).ok_or_else(|| Error::Model("size overflow".into()))?)?;
        Ok(bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }
}

/// Decodes a container, returning the layers and the number of bytes consumed.
pub fn decode_layers_prefix(buf: &[u8]) -> Result<(Vec<DenseLayer>, usize)> {
    let mut r = Reader { buf, pos: 0 };
    if r.take(4)? != MAGIC {
        return Err(Error::Model("bad magic, expected SFNN".into()));
    }
    let version = r.u16()?;
    if version != VERSION {
        return Err(Error::Model(format!("unsupported container version {version}")));
    }
    let count = r.u16()?;
    let mut layers = Vec::with_capacity(count as usize);
    for i in 0..count {
        let tag = r.u8()?;
        let activation = Activation::from_tag(tag)
            .ok_or_else(|| Error::Model(format!("layer {i}: unknown activation tag {tag}")))?;
        let inputs = r.u32()? as usize;
        let outputs = r.u32()? as usize;
        if inputs == 0 || outputs == 0 {
            return Err(Error::Model(format!("layer {i}: zero dimension")));
        }
        let weights = Tensor::new(vec![inputs, outputs], r.reals(inputs * outputs)?)?;
        let bias = Tensor::new(vec![outputs], r.reals(outputs)?)?;
        layers.push(DenseLayer::new(weights, bias, activation)?);
    }
    Ok((layers, r.pos))
}

pub fn decode_layers(buf: &[u8]) -> Result<Vec<DenseLayer>> {
    let (layers, used) = decode_layers_prefix(buf)?;
    if used != buf.len() {
        return Err(Error::Model(format!("{} trailing bytes after container", buf.len() - used)));
    }
    Ok(layers)
}
