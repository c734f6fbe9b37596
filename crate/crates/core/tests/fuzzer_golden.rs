use std::time::Duration;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use reseed_core::fuzzer::{havoc, replay_audit, FuzzConfig, FuzzerState, Origin};
use reseed_core::generators::{Strategy, SyntheticBatch};
use reseed_core::target::lookup;

const MKEY_GOLDEN_ENTRIES: usize = 43;

fn state(seed: u64) -> FuzzerState {
    FuzzerState::new(FuzzConfig {
        rng_seed: seed,
        ..FuzzConfig::default()
    })
    .unwrap()
}

#[test]
fn mkey_seed_discovery_count_is_frozen() {
    let target = lookup("minikey").unwrap();
    let mut f = state(2024);
    f.add_initial_seeds(&target, &[b"MKEY".to_vec()]).unwrap();
    let new = f.fuzz_loop(&target, 50_000).unwrap();
    assert_eq!(new.len(), MKEY_GOLDEN_ENTRIES);
    assert!(replay_audit(f.queue(), &target, f.config().edge_budget).unwrap().is_empty());
}

#[test]
fn reinitializing_twice_admits_the_batch_twice() {
    let target = lookup("minikey").unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let batch = SyntheticBatch {
        strategy: Strategy::Gan,
        seeds: (0..200).map(|_| (0..16).map(|_| rng.gen()).collect()).collect(),
        generation_time: Duration::ZERO,
        model_train_time: Duration::ZERO,
    };
    let mut f = state(3);
    f.add_initial_seeds(&target, &[b"MKEY".to_vec()]).unwrap();
    f.fuzz_loop(&target, 1000).unwrap();
    let before = f.queue().len();
    f.reinitialize(&target, &batch).unwrap();
    assert_eq!(f.queue().len(), before + 200);
    f.reinitialize(&target, &batch).unwrap();
    assert_eq!(f.queue().len(), before + 400);
    let synthetic: Vec<_> = f.queue()[before..].iter().collect();
    assert!(synthetic.iter().all(|e| e.origin == Origin::Synthetic(Strategy::Gan)));
    assert_eq!(synthetic[0].data, synthetic[200].data);
    assert_ne!(synthetic[0].id, synthetic[200].id);
    let empty = SyntheticBatch {
        seeds: Vec::new(),
        ..batch
    };
    assert!(f.reinitialize(&target, &empty).unwrap_err().is_usage());
}

#[test]
fn havoc_rarely_returns_its_input() {
    let mut rng = ChaCha8Rng::seed_from_u64(64);
    let seed: Vec<u8> = (0..64).map(|_| rng.gen()).collect();
    let mut unchanged = 0;
    for _ in 0..10_000 {
        let out = havoc(&seed, None, 8, 4096, &mut rng);
        assert!((1..=4096).contains(&out.len()));
        unchanged += (out == seed) as usize;
    }
    assert!(unchanged < 100, "{unchanged} unchanged");
}
