use std::collections::BTreeSet;

use proptest::collection::vec;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use reseed_core::corpus::{self, dedup_by_length, dedup_content, write_corpus, SeedFile};
use reseed_core::experiment::{matches_printed, ExperimentPlan};
use reseed_core::fuzzer::{deterministic_count, deterministic_mutant, havoc};
use reseed_core::generators::lstm::temperature_distribution;
use reseed_core::generators::{decode_bytes, encode_bytes, random_from_corpus};
use reseed_core::target::{lookup, CoverageMap, Outcome, Trace};

fn seeds_from(payloads: Vec<(u16, Vec<u8>)>) -> Vec<SeedFile> {
    payloads
        .into_iter()
        .enumerate()
        .map(|(i, (w, d))| SeedFile::new(d, i as u32, "prop", i as u64, w % 4))
        .collect()
}

fn small_payloads() -> impl Strategy<Value = Vec<(u16, Vec<u8>)>> {
    // A tiny alphabet so duplicates are common.
    vec((0u16..4, vec(prop_oneof![Just(b'M'), Just(b'K'), Just(b'E'), Just(b'Y'), Just(1u8)], 1..8)), 0..40)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn codec_round_trips_any_bytes(data in vec(any::<u8>(), 1..64)) {
        let t = encode_bytes(&data, data.len()).unwrap();
        prop_assert!(t.data().iter().all(|v| (-1.0..=1.0).contains(v)));
        prop_assert_eq!(decode_bytes(t.data()), data);
    }

    #[test]
    fn dedup_content_is_idempotent_and_duplicate_free(p in small_payloads()) {
        let seeds = seeds_from(p);
        let once = dedup_content(&seeds);
        let contents: BTreeSet<&[u8]> = once.seeds.iter().map(|s| s.data.as_slice()).collect();
        prop_assert_eq!(contents.len(), once.seeds.len());
        prop_assert_eq!(once.seeds.len() + once.removed, seeds.len());
        let twice = dedup_content(&once.seeds);
        prop_assert_eq!(twice.removed, 0);
        prop_assert_eq!(&twice.seeds, &once.seeds);
    }

    #[test]
    fn dedup_chain_holds(p in small_payloads()) {
        let target = lookup("minikey").unwrap();
        let seeds = seeds_from(p);
        let by_content = dedup_content(&seeds);
        let by_length = dedup_by_length(&seeds, &target).unwrap();
        let lengths: Vec<u64> = by_length.seeds.iter().map(|s| s.trace_length.unwrap()).collect();
        prop_assert!(lengths.windows(2).all(|w| w[0] < w[1]));
        prop_assert!(by_length.seeds.len() <= by_content.seeds.len());
        prop_assert!(by_content.seeds.len() <= seeds.len());
    }

    #[test]
    fn corpus_round_trips(p in vec((0u16..3, vec(any::<u8>(), 1..64)), 0..20), lens in vec(proptest::option::of(0u64..1000), 20)) {
        let mut seeds = seeds_from(p);
        for (s, l) in seeds.iter_mut().zip(lens) {
            s.trace_length = l;
        }
        let dir = tempfile::tempdir().unwrap();
        write_corpus(dir.path().join("c"), &seeds).unwrap();
        prop_assert_eq!(corpus::load(dir.path().join("c")).unwrap(), seeds);
    }

    #[test]
    fn havoc_respects_length_bounds(data in vec(any::<u8>(), 1..300), partner in proptest::option::of(vec(any::<u8>(), 1..300)), seed: u64, max_len in 1usize..512) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data: Vec<u8> = data.into_iter().take(max_len).collect();
        for _ in 0..16 {
            let out = havoc(&data, partner.as_deref(), 8, max_len, &mut rng);
            prop_assert!(!out.is_empty() && out.len() <= max_len);
        }
    }

    #[test]
    fn deterministic_stage_is_exhaustive_and_length_preserving(data in vec(any::<u8>(), 1..6)) {
        let n = deterministic_count(data.len());
        for k in 0..n {
            let (_, m) = deterministic_mutant(&data, k).unwrap();
            prop_assert_eq!(m.len(), data.len());
        }
        prop_assert!(deterministic_mutant(&data, n).is_none());
    }

    #[test]
    fn coverage_replay_is_never_novel(edges in vec(0u32..5000, 0..200)) {
        let t = Trace { edges, outcome: Outcome::Ok };
        let mut map = CoverageMap::new();
        let first = map.update(&t);
        prop_assert_eq!(first, !t.edges.is_empty());
        prop_assert!(!map.update(&t));
        let mut other = CoverageMap::new();
        other.merge(&map);
        prop_assert_eq!(other, map);
    }

    #[test]
    fn temperature_distribution_is_a_distribution(logits in vec(-20.0f64..20.0, 1..50), t in 1e-6f64..10.0) {
        let p = temperature_distribution(&logits, t);
        prop_assert!(p.iter().all(|&v| (0.0..=1.0).contains(&v)));
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn printed_values_match_themselves(v in 0.0f64..1e4, decimals in 0usize..5) {
        let printed = format!("{:.*}", decimals, v);
        prop_assert!(matches_printed(v, &printed));
    }

    #[test]
    fn rand_corpus_draws_only_corpus_bytes(p in vec((0u16..2, vec(0u8..16, 1..10)), 1..10), n in 1usize..20, len in 1usize..40, seed: u64) {
        let seeds = seeds_from(p);
        let pool: BTreeSet<u8> = seeds.iter().flat_map(|s| s.data.iter().copied()).collect();
        let batch = random_from_corpus(&seeds, n, len, seed).unwrap();
        prop_assert_eq!(batch.seeds.len(), n);
        prop_assert!(batch.seeds.iter().all(|s| s.len() == len && s.iter().all(|b| pool.contains(b))));
    }

    #[test]
    fn plan_text_round_trips(execs in 1u64..1_000_000, workers in 1usize..8, samples in 1usize..5000, seed: u64) {
        let mut plan = ExperimentPlan::new("minikey");
        plan.phase1_execs = execs;
        plan.workers = workers;
        plan.samples = samples;
        plan.rng_seed = seed;
        prop_assert_eq!(ExperimentPlan::parse(&plan.to_text()).unwrap(), plan);
    }
}
