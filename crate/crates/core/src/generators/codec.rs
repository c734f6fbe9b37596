//! Bytes <-> tanh range. `b -> b / 127.5 - 1`, decoded by rounding and clamping.

use crate::nn::Tensor;
use crate::{Error, Result};

pub fn encode_byte(b: u8) -> f64 {
    b as f64 / 127.5 - 1.0
}

pub fn decode_byte(v: f64) -> u8 {
    if v.is_nan() {
        return 0;
    }
    ((v + 1.0) * 127.5).round().clamp(0.0, 255.0) as u8
}

/// Encodes `data` truncated or zero-padded to `len` values.
pub fn encode_bytes(data: &[u8], len: usize) -> Result<Tensor> {
    if len == 0 {
        return Err(Error::usage("encode length must be positive"));
    }
    let values = (0..len)
        .map(|i| encode_byte(data.get(i).copied().unwrap_or(0)))
        .collect();
    Tensor::new(vec![len], values)
}

pub fn decode_bytes(values: &[f64]) -> Vec<u8> {
    values.iter().map(|&v| decode_byte(v)).collect()
}
