//! Coverage-guided mutational fuzzing.
//!
//! Each call to [`FuzzerState::fuzz_loop`] performs exactly `budget`
//! executions. Queue entries are selected round-robin; an entry's first
//! selection runs its deterministic stage (resumable across calls), after
//! which each selection spends `havoc_rounds` executions on havoc.

pub mod mutate;
mod workers;

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::SeedFile;
use crate::generators::{Strategy, SyntheticBatch};
use crate::target::{CoverageMap, Outcome, TargetProgram, DEFAULT_EDGE_BUDGET};
use crate::{Error, Result};

pub use mutate::{deterministic_count, deterministic_mutant, deterministic_site, havoc, DetStage};
pub use workers::{run_workers, WorkerReport, WorkerSpec, PROGRESS_LOG};

/// Seed used when no initial corpus is given.
pub const DEFAULT_SEED: &[u8] = b"0";

#[derive(Debug, Clone, PartialEq)]
pub struct FuzzConfig {
    pub edge_budget: u64,
    pub max_input_len: usize,
    pub havoc_rounds: usize,
    pub havoc_stack_max: usize,
    pub deterministic: bool,
    pub allow_default_seed: bool,
    pub rng_seed: u64,
}

impl Default for FuzzConfig {
    fn default() -> Self {
        Self {
            edge_budget: DEFAULT_EDGE_BUDGET,
            max_input_len: 4096,
            havoc_rounds: 256,
            havoc_stack_max: 8,
            deterministic: true,
            allow_default_seed: true,
            rng_seed: 0,
        }
    }
}

impl FuzzConfig {
    fn validate(&self) -> Result<()> {
        if self.edge_budget == 0 || self.max_input_len == 0 || self.havoc_rounds == 0 || self.havoc_stack_max == 0 {
            return Err(Error::usage(
                "edge_budget, max_input_len, havoc_rounds and havoc_stack_max must be positive",
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Origin {
    Initial,
    Mutation,
    Synthetic(Strategy),
}

impl fmt::Display for Origin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Origin::Initial => f.write_str("initial"),
            Origin::Mutation => f.write_str("mutation"),
            Origin::Synthetic(s) => write!(f, "synthetic:{s}"),
        }
    }
}

impl FromStr for Origin {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "initial" => Ok(Origin::Initial),
            "mutation" => Ok(Origin::Mutation),
            _ => match s.strip_prefix("synthetic:") {
                Some(rest) => Ok(Origin::Synthetic(rest.parse()?)),
                None => Err(Error::usage(format!("unknown origin `{s}`"))),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QueueEntry {
    pub id: u32,
    pub data: Vec<u8>,
    pub discovered_at: u64,
    pub parent: Option<u32>,
    pub origin: Origin,
    pub trace_length: u64,
    /// Whether the run set a new coverage bit when it was admitted.
    pub novel: bool,
    pub outcome: Outcome,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CrashRecord {
    pub data: Vec<u8>,
    pub discovered_at: u64,
    pub parent: Option<u32>,
    pub trace_length: u64,
}

/// Deterministic-stage progress of one entry. `effective[i]` is set when
/// flipping byte `i` changed the trace; later stages skip bytes without
/// effect. First and last bytes always count.
#[derive(Debug, Clone)]
struct DetState {
    next: usize,
    effective: Vec<bool>,
    sealed: bool,
}

impl DetState {
    fn new(len: usize) -> Self {
        let mut effective = vec![false; len];
        effective[0] = true;
        effective[len - 1] = true;
        Self {
            next: 0,
            effective,
            sealed: false,
        }
    }

    /// Past 90% effective bytes, treat all as effective.
    fn seal(&mut self) {
        if !self.sealed {
            let n = self.effective.iter().filter(|&&e| e).count();
            if n * 10 >= self.effective.len() * 9 {
                self.effective.fill(true);
            }
            self.sealed = true;
        }
    }
}

struct Run {
    novel: bool,
    outcome: Outcome,
    trace_length: u64,
    hash: u64,
}

/// FNV-1a over edges and outcome.
fn trace_hash(edges: &[u32], outcome: Outcome) -> u64 {
    let mut h = 0xcbf2_9ce4_8422_2325u64;
    for &e in edges {
        for b in e.to_le_bytes() {
            h = (h ^ b as u64).wrapping_mul(0x100_0000_01b3);
        }
    }
    (h ^ outcome as u64).wrapping_mul(0x100_0000_01b3)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Stage {
    Deterministic,
    Havoc(usize),
}

pub struct FuzzerState {
    config: FuzzConfig,
    queue: Vec<QueueEntry>,
    coverage: CoverageMap,
    crash_coverage: CoverageMap,
    crashes: Vec<CrashRecord>,
    rng: ChaCha8Rng,
    exec_count: u64,
    cursor: usize,
    stage: Stage,
    det: Vec<Option<DetState>>,
    hashes: Vec<u64>,
    /// Byte whose flip is being measured for the effector map.
    probe: Option<usize>,
    progress_log: Option<Box<dyn Write + Send>>,
}

impl fmt::Debug for FuzzerState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FuzzerState")
            .field("queue", &self.queue.len())
            .field("exec_count", &self.exec_count)
            .field("crashes", &self.crashes.len())
            .finish()
    }
}

impl FuzzerState {
    pub fn new(config: FuzzConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            rng: ChaCha8Rng::seed_from_u64(config.rng_seed),
            config,
            queue: Vec::new(),
            coverage: CoverageMap::new(),
            crash_coverage: CoverageMap::new(),
            crashes: Vec::new(),
            exec_count: 0,
            cursor: 0,
            stage: Stage::Deterministic,
            det: Vec::new(),
            hashes: Vec::new(),
            probe: None,
            progress_log: None,
        })
    }

    /// Writes one TSV line per admission:
    /// `exec_count, id, origin, trace_length, novel`.
    pub fn set_progress_log(&mut self, sink: Box<dyn Write + Send>) {
        self.progress_log = Some(sink);
    }

    pub fn config(&self) -> &FuzzConfig {
        &self.config
    }

    pub fn queue(&self) -> &[QueueEntry] {
        &self.queue
    }

    pub fn coverage(&self) -> &CoverageMap {
        &self.coverage
    }

    pub fn crashes(&self) -> &[CrashRecord] {
        &self.crashes
    }

    pub fn exec_count(&self) -> u64 {
        self.exec_count
    }

    /// Executes and admits each seed unconditionally. An empty list falls
    /// back to [`DEFAULT_SEED`] when the config allows it.
    pub fn add_initial_seeds(&mut self, target: &TargetProgram, seeds: &[Vec<u8>]) -> Result<()> {
        let defaults = [DEFAULT_SEED.to_vec()];
        let seeds = if seeds.is_empty() {
            if !self.config.allow_default_seed {
                return Err(Error::usage("no initial seeds and the default seed is disabled"));
            }
            &defaults[..]
        } else {
            seeds
        };
        for s in seeds {
            self.admit_unconditionally(target, s, Origin::Initial)?;
        }
        Ok(())
    }

    /// Injects a synthetic batch: every seed is executed once and queued
    /// regardless of novelty. Existing entries stay.
    pub fn reinitialize(&mut self, target: &TargetProgram, batch: &SyntheticBatch) -> Result<usize> {
        if batch.seeds.is_empty() {
            return Err(Error::usage("cannot reinitialize from an empty batch"));
        }
        let mut novel = 0;
        for s in &batch.seeds {
            novel += self.admit_unconditionally(target, s, Origin::Synthetic(batch.strategy))? as usize;
        }
        log::info!(
            "reinitialized with {} {} seeds ({} coverage-novel)",
            batch.seeds.len(),
            batch.strategy,
            novel
        );
        Ok(novel)
    }

    fn admit_unconditionally(&mut self, target: &TargetProgram, data: &[u8], origin: Origin) -> Result<bool> {
        if data.is_empty() {
            return Err(Error::usage(format!("{origin} seed is empty")));
        }
        let mut data = data.to_vec();
        data.truncate(self.config.max_input_len);
        let run = self.run_one(target, &data, None)?;
        let novel = run.novel;
        self.push_entry(data, None, origin, run)?;
        Ok(novel)
    }

    /// Runs `budget` executions of mutated inputs. Returns the ids admitted.
    pub fn fuzz_loop(&mut self, target: &TargetProgram, budget: u64) -> Result<Vec<u32>> {
        if budget == 0 {
            return Ok(Vec::new());
        }
        if self.queue.is_empty() {
            if !self.config.allow_default_seed {
                return Err(Error::usage("fuzzing needs a non-empty queue"));
            }
            self.add_initial_seeds(target, &[])?;
        }
        let first_new = self.queue.len();
        let mut done = 0u64;
        while done < budget {
            let Some(candidate) = self.next_candidate() else {
                continue;
            };
            let cur = self.cursor;
            let parent = self.queue[cur].id;
            let run = self.run_one(target, &candidate, Some(parent))?;
            done += 1;
            if let Some(pos) = self.probe.take() {
                if run.hash != self.hashes[cur] {
                    if let Some(d) = self.det[cur].as_mut() {
                        d.effective[pos] = true;
                    }
                }
            }
            if run.novel {
                self.push_entry(candidate, Some(parent), Origin::Mutation, run)?;
            }
        }
        Ok(self.queue[first_new..].iter().map(|e| e.id).collect())
    }

    /// Advances the schedule; `None` means the selection moved on without
    /// producing an input.
    fn next_candidate(&mut self) -> Option<Vec<u8>> {
        let cur = self.cursor;
        match self.stage {
            Stage::Deterministic if self.config.deterministic => {
                let data = &self.queue[cur].data;
                let det = self.det[cur].as_mut().expect("deterministic stage on finished entry");
                loop {
                    let k = det.next;
                    let Some((stage, span)) = deterministic_site(data.len(), k) else {
                        self.det[cur] = None;
                        self.stage = Stage::Havoc(self.config.havoc_rounds);
                        return None;
                    };
                    det.next += 1;
                    if stage.uses_effector_map() {
                        det.seal();
                        if !det.effective[span.clone()].iter().any(|&e| e) {
                            continue;
                        }
                    } else if stage == DetStage::ByteFlip(1) {
                        self.probe = Some(span.start);
                    }
                    return deterministic_mutant(data, k).map(|(_, m)| m);
                }
            }
            Stage::Deterministic => {
                self.det[cur] = None;
                self.stage = Stage::Havoc(self.config.havoc_rounds);
                None
            }
            Stage::Havoc(0) => {
                self.cursor = (cur + 1) % self.queue.len();
                self.stage = if self.det[self.cursor].is_some() {
                    Stage::Deterministic
                } else {
                    Stage::Havoc(self.config.havoc_rounds)
                };
                None
            }
            Stage::Havoc(left) => {
                self.stage = Stage::Havoc(left - 1);
                let partner = if self.queue.len() >= 2 {
                    let mut j = self.rng.gen_range(0..self.queue.len() - 1);
                    if j >= cur {
                        j += 1;
                    }
                    Some(j)
                } else {
                    None
                };
                let partner = partner.map(|j| self.queue[j].data.as_slice());
                Some(havoc(
                    &self.queue[cur].data,
                    partner,
                    self.config.havoc_stack_max,
                    self.config.max_input_len,
                    &mut self.rng,
                ))
            }
        }
    }

    fn run_one(&mut self, target: &TargetProgram, data: &[u8], parent: Option<u32>) -> Result<Run> {
        let res = target.execute(data, self.config.edge_budget)?;
        self.exec_count += 1;
        let novel = self.coverage.update(&res.trace);
        if res.trace.outcome == Outcome::Crash && self.crash_coverage.update(&res.trace) {
            log::debug!("unique crash at exec {} (parent {:?})", self.exec_count, parent);
            self.crashes.push(CrashRecord {
                data: data.to_vec(),
                discovered_at: self.exec_count,
                parent,
                trace_length: res.trace_length,
            });
        }
        Ok(Run {
            novel,
            outcome: res.trace.outcome,
            trace_length: res.trace_length,
            hash: trace_hash(&res.trace.edges, res.trace.outcome),
        })
    }

    fn push_entry(&mut self, data: Vec<u8>, parent: Option<u32>, origin: Origin, run: Run) -> Result<()> {
        let Run {
            novel,
            outcome,
            trace_length,
            hash,
        } = run;
        let id = u32::try_from(self.queue.len()).map_err(|_| Error::contract("queue id space exhausted"))?;
        if let Some(log) = self.progress_log.as_mut() {
            writeln!(log, "{}\t{}\t{}\t{}\t{}", self.exec_count, id, origin, trace_length, novel as u8)
                .map_err(|e| Error::io("progress log", e))?;
        }
        self.queue.push(QueueEntry {
            id,
            data,
            discovered_at: self.exec_count,
            parent,
            origin,
            trace_length,
            novel,
            outcome,
        });
        self.det.push(Some(DetState::new(self.queue[id as usize].data.len())));
        self.hashes.push(hash);
        Ok(())
    }

    pub fn flush_log(&mut self) -> Result<()> {
        if let Some(log) = self.progress_log.as_mut() {
            log.flush().map_err(|e| Error::io("progress log", e))?;
        }
        Ok(())
    }

    pub fn to_seed_files(&self, worker: u16) -> Vec<SeedFile> {
        self.queue.iter().map(|e| entry_to_seed(e, worker)).collect()
    }

    pub fn crash_seed_files(&self, worker: u16) -> Vec<SeedFile> {
        self.crashes
            .iter()
            .enumerate()
            .map(|(i, c)| SeedFile {
                data: c.data.clone(),
                id: i as u32,
                origin: "crash".into(),
                discovered_at: c.discovered_at,
                worker,
                trace_length: Some(c.trace_length),
            })
            .collect()
    }
}

pub fn entry_to_seed(e: &QueueEntry, worker: u16) -> SeedFile {
    SeedFile {
        data: e.data.clone(),
        id: e.id,
        origin: e.origin.to_string(),
        discovered_at: e.discovered_at,
        worker,
        trace_length: Some(e.trace_length),
    }
}

/// A mutation-origin entry that was not novel when replayed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AuditFailure {
    pub id: u32,
    pub reason: String,
}

/// Replays the queue in id order against a fresh map. Every mutation-origin
/// entry must set a new bit at its position, and recorded trace lengths and
/// admission times must agree with the replay.
pub fn replay_audit(queue: &[QueueEntry], target: &TargetProgram, edge_budget: u64) -> Result<Vec<AuditFailure>> {
    let mut map = CoverageMap::new();
    let mut failures = Vec::new();
    let mut last_time = None;
    for (pos, e) in queue.iter().enumerate() {
        let res = target.execute(&e.data, edge_budget)?;
        let novel = map.update(&res.trace);
        let mut fail = |reason: String| failures.push(AuditFailure { id: e.id, reason });
        if e.id as usize != pos {
            fail(format!("id {} at position {pos}", e.id));
        }
        if e.origin == Origin::Mutation && !novel {
            fail("mutation entry not coverage-novel on replay".into());
        }
        if e.novel != novel {
            fail(format!("recorded novel={} but replay gives {novel}", e.novel));
        }
        if res.trace_length != e.trace_length {
            fail(format!("trace length {} recorded, {} on replay", e.trace_length, res.trace_length));
        }
        if last_time.is_some_and(|t| e.discovered_at <= t) {
            fail("discovered_at not strictly increasing".into());
        }
        last_time = Some(e.discovered_at);
    }
    Ok(failures)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::target::lookup;

    fn minikey() -> TargetProgram {
        lookup("minikey").unwrap()
    }

    fn state(seed: u64) -> FuzzerState {
        FuzzerState::new(FuzzConfig {
            rng_seed: seed,
            ..FuzzConfig::default()
        })
        .unwrap()
    }

    #[test]
    fn origin_round_trip() {
        for o in [
            Origin::Initial,
            Origin::Mutation,
            Origin::Synthetic(Strategy::Gan),
            Origin::Synthetic(Strategy::RandUrandom),
        ] {
            assert_eq!(o.to_string().parse::<Origin>().unwrap(), o);
        }
        assert_eq!(Origin::Synthetic(Strategy::Lstm).to_string(), "synthetic:lstm");
        assert!("synthetic:nope".parse::<Origin>().is_err());
    }

    #[test]
    fn zero_budget_is_a_no_op() {
        let t = minikey();
        let mut s = state(1);
        s.add_initial_seeds(&t, &[b"MKEY".to_vec()]).unwrap();
        let before = s.queue().to_vec();
        assert!(s.fuzz_loop(&t, 0).unwrap().is_empty());
        assert_eq!(s.queue(), &before[..]);
        assert_eq!(s.exec_count(), 1);
    }

    #[test]
    fn default_seed_and_its_absence() {
        let t = minikey();
        let mut s = state(1);
        s.add_initial_seeds(&t, &[]).unwrap();
        assert_eq!(s.queue()[0].data, DEFAULT_SEED);

        let mut strict = FuzzerState::new(FuzzConfig {
            allow_default_seed: false,
            ..FuzzConfig::default()
        })
        .unwrap();
        assert!(matches!(strict.fuzz_loop(&t, 10), Err(Error::Usage(_))));
        assert!(matches!(strict.add_initial_seeds(&t, &[]), Err(Error::Usage(_))));
    }

    #[test]
    fn budget_is_exact_and_split_runs_match() {
        let t = minikey();
        let mut a = state(42);
        a.add_initial_seeds(&t, &[b"MKEY".to_vec()]).unwrap();
        a.fuzz_loop(&t, 5_000).unwrap();
        assert_eq!(a.exec_count(), 5_001);

        let mut b = state(42);
        b.add_initial_seeds(&t, &[b"MKEY".to_vec()]).unwrap();
        b.fuzz_loop(&t, 1_234).unwrap();
        b.fuzz_loop(&t, 3_766).unwrap();
        assert_eq!(a.queue(), b.queue());
    }

    #[test]
    fn admissions_pass_replay_audit() {
        let t = minikey();
        let mut s = state(7);
        s.add_initial_seeds(&t, &[b"MKEY".to_vec()]).unwrap();
        s.fuzz_loop(&t, 20_000).unwrap();
        assert!(s.queue().len() > 5);
        assert!(replay_audit(s.queue(), &t, s.config().edge_budget).unwrap().is_empty());
    }

    #[test]
    fn reinit_admits_every_seed() {
        let t = minikey();
        let mut s = state(3);
        s.add_initial_seeds(&t, &[b"MKEY".to_vec()]).unwrap();
        let batch = SyntheticBatch {
            strategy: Strategy::Gan,
            seeds: vec![b"MKEY".to_vec(); 200],
            generation_time: Default::default(),
            model_train_time: Default::default(),
        };
        assert_eq!(s.reinitialize(&t, &batch).unwrap(), 0);
        assert_eq!(s.queue().len(), 201);
        s.reinitialize(&t, &batch).unwrap();
        assert_eq!(s.queue().len(), 401);
        assert_eq!(s.queue()[400].id, 400);
        assert_eq!(s.queue()[400].origin, Origin::Synthetic(Strategy::Gan));

        let empty = SyntheticBatch { seeds: vec![], ..batch };
        assert!(matches!(s.reinitialize(&t, &empty), Err(Error::Usage(_))));
    }

    #[test]
    fn progress_log_lines() {
        use std::sync::{Arc, Mutex};
        #[derive(Clone, Default)]
        struct Sink(Arc<Mutex<Vec<u8>>>);
        impl Write for Sink {
            fn write(&mut self, b: &[u8]) -> std::io::Result<usize> {
                self.0.lock().unwrap().extend_from_slice(b);
                Ok(b.len())
            }
            fn flush(&mut self) -> std::io::Result<()> {
                Ok(())
            }
        }
        let t = minikey();
        let sink = Sink::default();
        let mut s = state(1);
        s.set_progress_log(Box::new(sink.clone()));
        s.add_initial_seeds(&t, &[b"MK".to_vec()]).unwrap();
        s.fuzz_loop(&t, 2_000).unwrap();
        let text = String::from_utf8(sink.0.lock().unwrap().clone()).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), s.queue().len());
        assert_eq!(lines[0], "1\t0\tinitial\t5\t1");
        assert!(lines[1..].iter().all(|l| l.split('\t').nth(2) == Some("mutation")));
    }
}
