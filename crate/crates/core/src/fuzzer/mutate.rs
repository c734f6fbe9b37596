//! Deterministic stage enumeration and havoc mutation.

use rand::Rng;

pub const ARITH_MAX: u8 = 35;
pub const INTERESTING_8: [u8; 9] = [0, 1, 16, 32, 64, 100, 127, 128, 255];
/// `-1` and `65535` coincide in 16 bits and appear once.
pub const INTERESTING_16: [u16; 8] = [0, 1, 0xFFFF, 255, 256, 512, 1000, 32767];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DetStage {
    BitFlip(u8),
    ByteFlip(u8),
    Arith8,
    Arith16,
    Interesting8,
    Interesting16,
}

const STAGES: [DetStage; 10] = [
    DetStage::BitFlip(1),
    DetStage::BitFlip(2),
    DetStage::BitFlip(4),
    DetStage::ByteFlip(1),
    DetStage::ByteFlip(2),
    DetStage::ByteFlip(4),
    DetStage::Arith8,
    DetStage::Arith16,
    DetStage::Interesting8,
    DetStage::Interesting16,
];

impl DetStage {
    /// Number of mutants this stage yields for an input of `len` bytes.
    pub fn count(self, len: usize) -> usize {
        let arith = 2 * ARITH_MAX as usize;
        match self {
            DetStage::BitFlip(w) => (8 * len + 1).saturating_sub(w as usize),
            DetStage::ByteFlip(w) => (len + 1).saturating_sub(w as usize),
            DetStage::Arith8 => len * arith,
            DetStage::Arith16 => len.saturating_sub(1) * arith,
            DetStage::Interesting8 => len * INTERESTING_8.len(),
            DetStage::Interesting16 => len.saturating_sub(1) * INTERESTING_16.len(),
        }
    }

    /// Byte positions touched by mutant `k` of this stage.
    fn span(self, k: usize) -> std::ops::Range<usize> {
        match self {
            DetStage::BitFlip(w) => k / 8..(k + w as usize - 1) / 8 + 1,
            DetStage::ByteFlip(w) => k..k + w as usize,
            DetStage::Arith8 => {
                let p = arith_delta(k).0;
                p..p + 1
            }
            DetStage::Arith16 => {
                let p = arith_delta(k).0;
                p..p + 2
            }
            DetStage::Interesting8 => {
                let p = k / INTERESTING_8.len();
                p..p + 1
            }
            DetStage::Interesting16 => {
                let p = k / INTERESTING_16.len();
                p..p + 2
            }
        }
    }

    /// Stages after the single-byte flips consult the effector map.
    pub fn uses_effector_map(self) -> bool {
        !matches!(self, DetStage::BitFlip(_) | DetStage::ByteFlip(1))
    }

    fn apply(self, out: &mut [u8], k: usize) {
        match self {
            DetStage::BitFlip(w) => {
                for bit in k..k + w as usize {
                    out[bit / 8] ^= 0x80 >> (bit % 8);
                }
            }
            DetStage::ByteFlip(w) => {
                for b in &mut out[k..k + w as usize] {
                    *b ^= 0xFF;
                }
            }
            DetStage::Arith8 => {
                let (pos, delta) = arith_delta(k);
                out[pos] = out[pos].wrapping_add(delta as u8);
            }
            DetStage::Arith16 => {
                let (pos, delta) = arith_delta(k);
                let v = u16::from_le_bytes([out[pos], out[pos + 1]]).wrapping_add(delta as u16);
                out[pos..pos + 2].copy_from_slice(&v.to_le_bytes());
            }
            DetStage::Interesting8 => {
                out[k / INTERESTING_8.len()] = INTERESTING_8[k % INTERESTING_8.len()];
            }
            DetStage::Interesting16 => {
                let pos = k / INTERESTING_16.len();
                out[pos..pos + 2].copy_from_slice(&INTERESTING_16[k % INTERESTING_16.len()].to_le_bytes());
            }
        }
    }
}

/// Position and signed delta (`+1..=35` then `-1..=-35`) for arith index `k`.
fn arith_delta(k: usize) -> (usize, i32) {
    let per = 2 * ARITH_MAX as usize;
    let (pos, r) = (k / per, (k % per) as i32);
    let delta = if r < ARITH_MAX as i32 { r + 1 } else { -(r - ARITH_MAX as i32 + 1) };
    (pos, delta)
}

/// Total deterministic mutants for an input of `len` bytes.
pub fn deterministic_count(len: usize) -> usize {
    STAGES.iter().map(|s| s.count(len)).sum()
}

/// Stage and touched byte range of the `k`-th deterministic mutant for an
/// input of `len` bytes.
pub fn deterministic_site(len: usize, mut k: usize) -> Option<(DetStage, std::ops::Range<usize>)> {
    for stage in STAGES {
        let n = stage.count(len);
        if k < n {
            return Some((stage, stage.span(k)));
        }
        k -= n;
    }
    None
}

/// The `k`-th deterministic mutant of `data`, or `None` past the end.
pub fn deterministic_mutant(data: &[u8], mut k: usize) -> Option<(DetStage, Vec<u8>)> {
    for stage in STAGES {
        let n = stage.count(data.len());
        if k < n {
            let mut out = data.to_vec();
            stage.apply(&mut out, k);
            return Some((stage, out));
        }
        k -= n;
    }
    None
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HavocOp {
    FlipBit,
    Interesting8,
    Interesting16,
    Arith8,
    Arith16,
    RandomByte,
    DeleteBlock,
    InsertBlock,
    OverwriteBlock,
    DuplicateBlock,
}

const HAVOC_OPS: [HavocOp; 10] = [
    HavocOp::FlipBit,
    HavocOp::Interesting8,
    HavocOp::Interesting16,
    HavocOp::Arith8,
    HavocOp::Arith16,
    HavocOp::RandomByte,
    HavocOp::DeleteBlock,
    HavocOp::InsertBlock,
    HavocOp::OverwriteBlock,
    HavocOp::DuplicateBlock,
];

fn block_len<R: Rng>(rng: &mut R, limit: usize) -> usize {
    // Mostly short blocks, occasionally long ones.
    let cap = match rng.gen_range(0..4) {
        0..=1 => 8,
        2 => 32,
        _ => 256,
    };
    rng.gen_range(1..=cap.min(limit).max(1))
}

fn apply_havoc<R: Rng>(op: HavocOp, data: &mut Vec<u8>, max_len: usize, rng: &mut R) {
    let len = data.len();
    match op {
        HavocOp::FlipBit => {
            let bit = rng.gen_range(0..len * 8);
            data[bit / 8] ^= 0x80 >> (bit % 8);
        }
        HavocOp::Interesting8 => {
            let pos = rng.gen_range(0..len);
            data[pos] = INTERESTING_8[rng.gen_range(0..INTERESTING_8.len())];
        }
        HavocOp::Interesting16 if len >= 2 => {
            let pos = rng.gen_range(0..len - 1);
            let v = INTERESTING_16[rng.gen_range(0..INTERESTING_16.len())];
            data[pos..pos + 2].copy_from_slice(&v.to_le_bytes());
        }
        HavocOp::Arith8 => {
            let pos = rng.gen_range(0..len);
            let delta = rng.gen_range(1..=ARITH_MAX);
            data[pos] = if rng.gen() { data[pos].wrapping_add(delta) } else { data[pos].wrapping_sub(delta) };
        }
        HavocOp::Arith16 if len >= 2 => {
            let pos = rng.gen_range(0..len - 1);
            let delta = rng.gen_range(1..=ARITH_MAX as u16);
            let v = u16::from_le_bytes([data[pos], data[pos + 1]]);
            let v = if rng.gen() { v.wrapping_add(delta) } else { v.wrapping_sub(delta) };
            data[pos..pos + 2].copy_from_slice(&v.to_le_bytes());
        }
        HavocOp::RandomByte => {
            let pos = rng.gen_range(0..len);
            data[pos] ^= rng.gen_range(1..=255u8);
        }
        HavocOp::DeleteBlock if len >= 2 => {
            let n = block_len(rng, len - 1);
            let pos = rng.gen_range(0..=len - n);
            data.drain(pos..pos + n);
        }
        HavocOp::InsertBlock if len < max_len => {
            let n = block_len(rng, max_len - len);
            let pos = rng.gen_range(0..=len);
            let block: Vec<u8> = if rng.gen() {
                vec![rng.gen(); n]
            } else {
                (0..n).map(|_| rng.gen()).collect()
            };
            data.splice(pos..pos, block);
        }
        HavocOp::OverwriteBlock => {
            let n = block_len(rng, len);
            let pos = rng.gen_range(0..=len - n);
            let fill: u8 = rng.gen();
            data[pos..pos + n].fill(fill);
        }
        HavocOp::DuplicateBlock if len < max_len => {
            let n = block_len(rng, len.min(max_len - len));
            let from = rng.gen_range(0..=len - n);
            let to = rng.gen_range(0..=len);
            let block = data[from..from + n].to_vec();
            data.splice(to..to, block);
        }
        // Length preconditions not met: fall back to a bit flip.
        _ => apply_havoc(HavocOp::FlipBit, data, max_len, rng),
    }
}

/// Splices `data` with `other`: the head of one and the tail of the other.
pub fn splice<R: Rng>(data: &[u8], other: &[u8], max_len: usize, rng: &mut R) -> Vec<u8> {
    let cut_a = rng.gen_range(0..=data.len());
    let cut_b = rng.gen_range(0..=other.len());
    let mut out: Vec<u8> = data[..cut_a].iter().chain(&other[cut_b..]).copied().collect();
    if out.is_empty() {
        out.push(data[0]);
    }
    out.truncate(max_len);
    out
}

/// A stack of `1..=stack_max` havoc operations. With a `partner`, one in
/// sixteen stacks starts by splicing with it.
pub fn havoc<R: Rng>(data: &[u8], partner: Option<&[u8]>, stack_max: usize, max_len: usize, rng: &mut R) -> Vec<u8> {
    assert!(!data.is_empty(), "havoc needs a non-empty input");
    let max_len = max_len.max(1);
    let mut out = match partner {
        Some(p) if !p.is_empty() && rng.gen_ratio(1, 16) => splice(data, p, max_len, rng),
        _ => {
            let mut d = data.to_vec();
            d.truncate(max_len);
            d
        }
    };
    let ops = rng.gen_range(1..=stack_max.max(1));
    for _ in 0..ops {
        let op = HAVOC_OPS[rng.gen_range(0..HAVOC_OPS.len())];
        apply_havoc(op, &mut out, max_len, rng);
    }
    debug_assert!(!out.is_empty() && out.len() <= max_len);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn bitflip_is_msb_first() {
        let (stage, out) = deterministic_mutant(&[0x00], 0).unwrap();
        assert_eq!(stage, DetStage::BitFlip(1));
        assert_eq!(out, vec![0x80]);
        assert_eq!(deterministic_mutant(&[0x00], 7).unwrap().1, vec![0x01]);
        // Two-bit flips follow the single-bit ones.
        assert_eq!(deterministic_mutant(&[0x00], 8).unwrap(), (DetStage::BitFlip(2), vec![0xC0]));
    }

    #[test]
    fn arith8_wraps() {
        let first_arith: usize = STAGES[..6].iter().map(|s| s.count(1)).sum();
        let (stage, out) = deterministic_mutant(&[0xFF], first_arith).unwrap();
        assert_eq!(stage, DetStage::Arith8);
        assert_eq!(out, vec![0x00]);
        let (_, out) = deterministic_mutant(&[0x00], first_arith + ARITH_MAX as usize).unwrap();
        assert_eq!(out, vec![0xFF]);
    }

    #[test]
    fn enumeration_is_exhaustive_and_ends() {
        let data = b"MKEY\x01";
        let n = deterministic_count(data.len());
        // 40 + 39 + 37 + 5 + 4 + 2 + 350 + 280 + 45 + 32
        assert_eq!(n, 834);
        for k in 0..n {
            let (_, m) = deterministic_mutant(data, k).unwrap();
            assert_eq!(m.len(), data.len());
        }
        assert!(deterministic_mutant(data, n).is_none());
        assert_eq!(deterministic_count(1), 8 + 7 + 5 + 1 + 70 + 9);
    }

    #[test]
    fn sites_cover_the_changed_bytes() {
        let data = b"\x10\x20\x30\x40\x50\x60";
        for k in 0..deterministic_count(data.len()) {
            let (stage, m) = deterministic_mutant(data, k).unwrap();
            let (s2, span) = deterministic_site(data.len(), k).unwrap();
            assert_eq!(stage, s2);
            for (i, (a, b)) in data.iter().zip(&m).enumerate() {
                if a != b {
                    assert!(span.contains(&i), "k={k} changed byte {i} outside {span:?}");
                }
            }
        }
    }

    #[test]
    fn interesting16_little_endian() {
        let data = [0u8; 2];
        let base: usize = STAGES[..9].iter().map(|s| s.count(2)).sum();
        let (stage, out) = deterministic_mutant(&data, base + 4).unwrap();
        assert_eq!(stage, DetStage::Interesting16);
        assert_eq!(out, 256u16.to_le_bytes());
    }

    #[test]
    fn havoc_lengths_stay_in_bounds() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let seed: Vec<u8> = (0..64).collect();
        let partner = vec![7u8; 300];
        let mut unchanged = 0;
        for i in 0..10_000 {
            let p = (i % 2 == 0).then_some(partner.as_slice());
            let out = havoc(&seed, p, 8, 4096, &mut rng);
            assert!((1..=4096).contains(&out.len()));
            unchanged += (out == seed) as usize;
        }
        assert!(unchanged < 100, "{unchanged} unchanged outputs");
    }

    #[test]
    fn havoc_on_single_byte_and_tight_cap() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..5_000 {
            let out = havoc(b"0", Some(b"Z"), 8, 4, &mut rng);
            assert!((1..=4).contains(&out.len()));
        }
    }
}
