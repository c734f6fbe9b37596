use std::time::{Duration, Instant};

use rand::rngs::OsRng;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{concat_corpus, Strategy, SyntheticBatch};
use crate::corpus::SeedFile;
use crate::{Error, Result};

/// Byte source for [`random_urandom`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Entropy {
    Seeded(u64),
    /// Operating-system entropy; not reproducible.
    Os,
}

/// `n` seeds of `len` bytes, each byte drawn uniformly from the multiset of
/// all corpus bytes.
pub fn random_from_corpus(corpus: &[SeedFile], n: usize, len: usize, rng_seed: u64) -> Result<SyntheticBatch> {
    let pool = concat_corpus(corpus);
    if pool.is_empty() {
        return Err(Error::usage("random_from_corpus needs a non-empty corpus"));
    }
    check_sizes(n, len)?;
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let seeds = (0..n)
        .map(|_| (0..len).map(|_| pool[rng.gen_range(0..pool.len())]).collect())
        .collect();
    Ok(SyntheticBatch {
        strategy: Strategy::RandCorpus,
        seeds,
        generation_time: start.elapsed(),
        model_train_time: Duration::ZERO,
    })
}

/// `n` seeds of `len` uniformly random bytes.
pub fn random_urandom(n: usize, len: usize, entropy: Entropy) -> Result<SyntheticBatch> {
    check_sizes(n, len)?;
    let start = Instant::now();
    let fill = |rng: &mut dyn RngCore| -> Vec<Vec<u8>> {
        (0..n)
            .map(|_| {
                let mut v = vec![0u8; len];
                rng.fill_bytes(&mut v);
                v
            })
            .collect()
    };
    let seeds = match entropy {
        Entropy::Seeded(seed) => fill(&mut ChaCha8Rng::seed_from_u64(seed)),
        Entropy::Os => fill(&mut OsRng),
    };
    Ok(SyntheticBatch {
        strategy: Strategy::RandUrandom,
        seeds,
        generation_time: start.elapsed(),
        model_train_time: Duration::ZERO,
    })
}

fn check_sizes(n: usize, len: usize) -> Result<()> {
    if n == 0 || len == 0 {
        return Err(Error::usage("sample count and length must be positive"));
    }
    Ok(())
}
