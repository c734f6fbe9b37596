//! Independent fuzzing workers, one thread each.

use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::thread;

use super::{FuzzConfig, FuzzerState};
use crate::corpus::write_corpus;
use crate::target::TargetProgram;
use crate::{Error, Result};

pub const PROGRESS_LOG: &str = "progress.log";
pub const CRASH_DIR: &str = "crashes";

/// Shared settings; each worker `i` uses `rng_seeds[i]`.
#[derive(Debug, Clone)]
pub struct WorkerSpec {
    pub target: TargetProgram,
    pub config: FuzzConfig,
    pub exec_budget: u64,
    pub initial_seeds: Vec<Vec<u8>>,
    pub rng_seeds: Vec<u64>,
}

#[derive(Debug, Clone)]
pub struct WorkerReport {
    pub worker: u16,
    pub dir: PathBuf,
    pub queue_len: usize,
    pub crashes: usize,
    pub exec_count: u64,
}

pub fn worker_dir(root: &Path, worker: u16) -> PathBuf {
    root.join(format!("worker-{worker:02}"))
}

/// Runs `n` workers in parallel and writes `worker-NN/` corpus directories
/// (with `progress.log` and a `crashes/` corpus) under `out_root`.
pub fn run_workers(n: usize, spec: &WorkerSpec, out_root: &Path) -> Result<Vec<WorkerReport>> {
    if n == 0 {
        return Err(Error::usage("need at least one worker"));
    }
    if spec.rng_seeds.len() != n {
        return Err(Error::usage(format!("{n} workers but {} rng seeds", spec.rng_seeds.len())));
    }
    if n > u16::MAX as usize {
        return Err(Error::usage("too many workers"));
    }
    let results: Vec<Result<WorkerReport>> = thread::scope(|scope| {
        let handles: Vec<_> = (0..n)
            .map(|i| scope.spawn(move || run_one(i as u16, spec, out_root)))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().unwrap_or_else(|_| Err(Error::contract("worker thread panicked"))))
            .collect()
    });
    results.into_iter().collect()
}

fn run_one(worker: u16, spec: &WorkerSpec, root: &Path) -> Result<WorkerReport> {
    let dir = worker_dir(root, worker);
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let mut state = FuzzerState::new(FuzzConfig {
        rng_seed: spec.rng_seeds[worker as usize],
        ..spec.config.clone()
    })?;
    let log_path = dir.join(PROGRESS_LOG);
    let log = File::create(&log_path).map_err(|e| Error::io(&log_path, e))?;
    state.set_progress_log(Box::new(BufWriter::new(log)));
    state.add_initial_seeds(&spec.target, &spec.initial_seeds)?;
    state.fuzz_loop(&spec.target, spec.exec_budget)?;
    state.flush_log()?;
    write_corpus(&dir, &state.to_seed_files(worker))?;
    if !state.crashes().is_empty() {
        write_corpus(dir.join(CRASH_DIR), &state.crash_seed_files(worker))?;
    }
    log::info!(
        "worker {worker:02}: {} entries, {} unique crashes, {} execs",
        state.queue().len(),
        state.crashes().len(),
        state.exec_count()
    );
    Ok(WorkerReport {
        worker,
        dir,
        queue_len: state.queue().len(),
        crashes: state.crashes().len(),
        exec_count: state.exec_count(),
    })
}
