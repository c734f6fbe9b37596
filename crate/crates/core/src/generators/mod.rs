//! Synthetic seed generation: a GAN over fixed-length byte vectors, a
//! next-byte LSTM, and two random baselines.

pub mod codec;
pub mod gan;
pub mod lstm;
pub mod model_file;
pub mod random;

pub use codec::{decode_byte, decode_bytes, encode_byte, encode_bytes};
pub use gan::{gan_generate, train_gan, GanConfig, GanModel};
pub use lstm::{lstm_generate, train_lstm, LstmConfig, LstmModel};
pub use model_file::{load_model, save_model, StoredModel};
pub use random::{random_from_corpus, random_urandom, Entropy};

use std::path::Path;
use std::time::Duration;

use crate::corpus::{write_corpus, CorpusDir, SeedFile};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Strategy {
    Gan,
    Lstm,
    RandCorpus,
    RandUrandom,
}

impl Strategy {
    pub const ALL: [Strategy; 4] = [
        Strategy::Gan,
        Strategy::Lstm,
        Strategy::RandCorpus,
        Strategy::RandUrandom,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::Gan => "gan",
            Strategy::Lstm => "lstm",
            Strategy::RandCorpus => "rand_corpus",
            Strategy::RandUrandom => "rand_urandom",
        }
    }

    /// Whether the strategy learns from (or samples) the training corpus.
    pub fn uses_corpus(self) -> bool {
        !matches!(self, Strategy::RandUrandom)
    }
}

impl std::fmt::Display for Strategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Strategy::ALL
            .into_iter()
            .find(|st| st.name() == s)
            .ok_or_else(|| Error::usage(format!("unknown strategy `{s}` (gan, lstm, rand_corpus, rand_urandom)")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticBatch {
    pub strategy: Strategy,
    pub seeds: Vec<Vec<u8>>,
    pub generation_time: Duration,
    pub model_train_time: Duration,
}

impl SyntheticBatch {
    /// Seed files tagged with the strategy name, ids in batch order.
    pub fn to_seed_files(&self) -> Vec<SeedFile> {
        self.seeds
            .iter()
            .enumerate()
            .map(|(i, s)| SeedFile::new(s.clone(), i as u32, self.strategy.name(), i as u64, 0))
            .collect()
    }

    pub fn write_to(&self, dir: impl AsRef<Path>) -> Result<CorpusDir> {
        write_corpus(dir, &self.to_seed_files())
    }
}

/// Concatenation of all seed payloads in order.
pub(crate) fn concat_corpus(corpus: &[SeedFile]) -> Vec<u8> {
    corpus.iter().flat_map(|s| s.data.iter().copied()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn strategy_names_round_trip() {
        for s in Strategy::ALL {
            assert_eq!(s.name().parse::<Strategy>().unwrap(), s);
        }
        assert!("rand".parse::<Strategy>().is_err());
    }
}
