use std::collections::HashMap;

use super::SeedFile;
use crate::target::TargetProgram;
use crate::Result;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dedup {
    pub seeds: Vec<SeedFile>,
    pub removed: usize,
}

/// Drops byte-identical seeds, keeping the lowest `(worker, id)` of each
/// group at its original position.
pub fn dedup_content(seeds: &[SeedFile]) -> Dedup {
    let mut best: HashMap<&[u8], usize> = HashMap::with_capacity(seeds.len());
    for (i, s) in seeds.iter().enumerate() {
        best.entry(s.data.as_slice())
            .and_modify(|j| {
                if s.key() < seeds[*j].key() {
                    *j = i;
                }
            })
            .or_insert(i);
    }
    let kept: Vec<SeedFile> = seeds
        .iter()
        .enumerate()
        .filter(|(i, s)| best[s.data.as_slice()] == *i)
        .map(|(_, s)| s.clone())
        .collect();
    Dedup {
        removed: seeds.len() - kept.len(),
        seeds: kept,
    }
}

/// Executes `target` on every seed that has no recorded trace length.
pub fn fill_trace_lengths(seeds: &mut [SeedFile], target: &TargetProgram) -> Result<()> {
    for s in seeds.iter_mut().filter(|s| s.trace_length.is_none()) {
        s.trace_length = Some(target.trace_length(&s.data)?);
    }
    Ok(())
}

/// Keeps one seed per distinct trace length (lowest `(worker, id)`), sorted
/// by length. `removed` counts the length collisions.
pub fn dedup_by_length(seeds: &[SeedFile], target: &TargetProgram) -> Result<Dedup> {
    let mut filled = seeds.to_vec();
    fill_trace_lengths(&mut filled, target)?;
    let mut best: HashMap<u64, SeedFile> = HashMap::new();
    for s in filled {
        let len = s.trace_length.expect("filled above");
        match best.get(&len) {
            Some(cur) if cur.key() <= s.key() => {}
            _ => {
                best.insert(len, s);
            }
        }
    }
    let mut kept: Vec<SeedFile> = best.into_values().collect();
    kept.sort_by_key(|s| s.trace_length);
    Ok(Dedup {
        removed: seeds.len() - kept.len(),
        seeds: kept,
    })
}
