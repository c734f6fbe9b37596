//! Model files: one strategy tag byte followed by an `SFNN` container.
//!
//! GAN files hold `[generator hidden, generator out, discriminator hidden,
//! discriminator out]`; LSTM files hold `[cell, dense, softmax]`.

use std::fs;
use std::path::Path;

use super::gan::GanModel;
use super::lstm::{LstmConfig, LstmModel};
use crate::nn::{decode_layers, encode_layers};
use crate::{Error, Result};

pub const TAG_GAN: u8 = b'G';
pub const TAG_LSTM: u8 = b'L';

#[derive(Debug, Clone)]
pub enum StoredModel {
    Gan(GanModel),
    Lstm(LstmModel),
}

impl StoredModel {
    pub fn encode(&self) -> Result<Vec<u8>> {
        let (tag, layers) = match self {
            StoredModel::Gan(m) => (TAG_GAN, m.layers()),
            StoredModel::Lstm(m) => (TAG_LSTM, m.layers()),
        };
        let mut out = vec![tag];
        out.extend(encode_layers(&layers)?);
        Ok(out)
    }

    /// LSTM window and generation cap are not stored; defaults apply.
    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let (&tag, rest) = bytes
            .split_first()
            .ok_or_else(|| Error::Model("empty model file".into()))?;
        let layers = decode_layers(rest)?;
        match tag {
            TAG_GAN => Ok(StoredModel::Gan(GanModel::from_layers(layers)?)),
            TAG_LSTM => {
                let d = LstmConfig::default();
                Ok(StoredModel::Lstm(LstmModel::from_layers(layers, d.window, d.max_gen_len)?))
            }
            other => Err(Error::Model(format!("unknown strategy tag {other:#04x}"))),
        }
    }
}

pub fn save_model(path: impl AsRef<Path>, model: &StoredModel) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, model.encode()?).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: impl AsRef<Path>) -> Result<StoredModel> {
    let path = path.as_ref();
    StoredModel::decode(&fs::read(path).map_err(|e| Error::io(path, e))?)
}
