//! End-to-end protocol: fuzz, merge, train, generate, reinitialize, fuzz
//! again, report.
//!
//! Run directory layout:
//!
//! ```text
//! phase1/worker-NN/   per-worker corpora
//! phase1/merged/      union after content dedup, with trace lengths
//! models/             gan.model, lstm.model
//! synthetic/<s>/      generated batches, with trace lengths
//! phase2/<arm>/       final phase-2 queue and progress.log
//! report/             plan.cfg, tables.tsv, tables.txt, timing.tsv
//! ```
//!
//! The tables depend only on virtual time, so [`report_from_run_dir`]
//! reproduces them exactly. Wall-clock figures go to `timing.tsv`.

pub mod plan;
pub mod report;

use std::collections::BTreeSet;
use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use sha2::{Digest, Sha256};

use crate::corpus::{self, fill_trace_lengths, write_corpus, SeedFile};
use crate::fuzzer::{run_workers, FuzzConfig, FuzzerState, WorkerSpec, PROGRESS_LOG};
use crate::generators::gan::default_output_len;
use crate::generators::{
    gan_generate, lstm_generate, random_from_corpus, random_urandom, save_model, train_gan, train_lstm, Entropy,
    GanModel, LstmModel, StoredModel, Strategy, SyntheticBatch,
};
use crate::target::{lookup, TargetProgram};
use crate::{Error, Result};

pub use plan::{Arm, ExperimentPlan, LengthStats, ReinitMode};
pub use report::{
    compute_report, discounted_rate, matches_printed, mean_length_ratio, relative_rate, Cost, ExperimentReport,
    RateBasis, RateMetric, StrategyReport,
};

pub const PLAN_FILE: &str = "plan.cfg";
pub const CORPUS_ROW: &str = "afl_seed";

#[derive(Debug, Clone)]
pub struct ExperimentOutcome {
    pub run_dir: PathBuf,
    pub report: ExperimentReport,
    /// `(stage, wall time)` in execution order.
    pub timing: Vec<(String, Duration)>,
    pub content_duplicates: usize,
}

/// Independent, reproducible seed for a named component.
pub fn derive_seed(base: u64, label: &str) -> u64 {
    let digest = Sha256::new().chain_update(base.to_le_bytes()).chain_update(label.as_bytes()).finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("digest has 32 bytes"))
}

fn stage<T>(name: &str, f: impl FnOnce() -> Result<T>) -> Result<T> {
    log::info!("stage {name}");
    f().map_err(|e| Error::Stage {
        stage: name.to_string(),
        source: Box::new(e),
    })
}

fn mkdir(p: &Path) -> Result<()> {
    fs::create_dir_all(p).map_err(|e| Error::io(p, e))
}

fn write(p: &Path, text: &str) -> Result<()> {
    fs::write(p, text).map_err(|e| Error::io(p, e))
}

fn analysed(batch: &SyntheticBatch, target: &TargetProgram) -> Result<Vec<SeedFile>> {
    let mut seeds = batch.to_seed_files();
    fill_trace_lengths(&mut seeds, target)?;
    Ok(seeds)
}

fn fuzz_config(plan: &ExperimentPlan, label: &str) -> FuzzConfig {
    FuzzConfig {
        rng_seed: derive_seed(plan.rng_seed, label),
        ..plan.fuzz.clone()
    }
}

/// Runs every stage of `plan`, writing artifacts under `run_dir`.
pub fn run_experiment(plan: &ExperimentPlan, run_dir: &Path) -> Result<ExperimentOutcome> {
    plan.validate()?;
    let target = lookup(&plan.target)?;
    let mut timing = Vec::new();
    let mut timed = |name: &str, t: Instant| timing.push((name.to_string(), t.elapsed()));

    let report_dir = run_dir.join("report");
    stage("setup", || {
        mkdir(&report_dir)?;
        write(&report_dir.join(PLAN_FILE), &plan.to_text())
    })?;

    // Phase 1: independent workers from the default seed.
    let t = Instant::now();
    let phase1 = run_dir.join("phase1");
    let workers = stage("phase1", || {
        let spec = WorkerSpec {
            target,
            config: plan.fuzz.clone(),
            exec_budget: plan.phase1_execs,
            initial_seeds: Vec::new(),
            rng_seeds: (0..plan.workers).map(|i| derive_seed(plan.rng_seed, &format!("phase1-{i}"))).collect(),
        };
        run_workers(plan.workers, &spec, &phase1)
    })?;
    timed("phase1", t);

    let t = Instant::now();
    let merged_dir = phase1.join("merged");
    let (corpus, content_duplicates) = stage("merge", || {
        let dirs: Vec<&Path> = workers.iter().map(|w| w.dir.as_path()).collect();
        let merged = corpus::merge(&dirs, &merged_dir)?;
        let mut seeds = merged.corpus.into_seeds();
        fill_trace_lengths(&mut seeds, &target)?;
        corpus::rewrite_manifest(&merged_dir, &seeds)?;
        Ok((seeds, merged.content_duplicates))
    })?;
    timed("merge", t);
    log::info!("phase 1 corpus: {} seeds ({} content duplicates removed)", corpus.len(), content_duplicates);

    let wants = |s: Strategy| plan.strategies.contains(&Arm::Generated(s));
    let models = run_dir.join("models");
    stage("setup", || mkdir(&models))?;

    let mut gan: Option<GanModel> = None;
    if wants(Strategy::Gan) {
        let t = Instant::now();
        gan = Some(stage("train/gan", || {
            let mut cfg = plan.gan.clone();
            cfg.rng_seed = derive_seed(plan.rng_seed, "gan");
            let m = train_gan(&corpus, &cfg)?;
            save_model(models.join("gan.model"), &StoredModel::Gan(m.clone()))?;
            Ok(m)
        })?);
        timed("train/gan", t);
    }
    let mut lstm: Option<LstmModel> = None;
    if wants(Strategy::Lstm) {
        let t = Instant::now();
        lstm = Some(stage("train/lstm", || {
            let mut cfg = plan.lstm.clone();
            cfg.rng_seed = derive_seed(plan.rng_seed, "lstm");
            let m = train_lstm(&corpus, &cfg)?;
            save_model(models.join("lstm.model"), &StoredModel::Lstm(m.clone()))?;
            Ok(m)
        })?);
        timed("train/lstm", t);
    }

    let sample_len = gan
        .as_ref()
        .map_or_else(|| plan.gan.output_len.unwrap_or_else(|| default_output_len(&corpus)), |m| m.output_len);
    let mut batches = Vec::new();
    for arm in &plan.strategies {
        let Arm::Generated(s) = *arm else { continue };
        let name = format!("generate/{s}");
        let t = Instant::now();
        let batch = stage(&name, || {
            let seed = derive_seed(plan.rng_seed, &format!("sample-{s}"));
            let batch = match s {
                Strategy::Gan => gan_generate(gan.as_ref().expect("trained above"), plan.samples, seed)?,
                Strategy::Lstm => {
                    lstm_generate(lstm.as_ref().expect("trained above"), plan.samples, plan.temperature, &corpus, seed)?
                }
                Strategy::RandCorpus => random_from_corpus(&corpus, plan.samples, sample_len, seed)?,
                Strategy::RandUrandom => random_urandom(plan.samples, sample_len, Entropy::Seeded(seed))?,
            };
            write_corpus(run_dir.join("synthetic").join(s.name()), &analysed(&batch, &target)?)?;
            Ok(batch)
        })?;
        timed(&name, t);
        batches.push(batch);
    }

    // Phase 2: one fuzzer per arm.
    let initial: Vec<Vec<u8>> = corpus.iter().map(|s| s.data.clone()).collect();
    for arm in &plan.strategies {
        let name = format!("phase2/{arm}");
        let t = Instant::now();
        stage(&name, || {
            let dir = run_dir.join("phase2").join(arm.name());
            mkdir(&dir)?;
            let mut state = FuzzerState::new(fuzz_config(plan, &format!("phase2-{arm}")))?;
            let log_path = dir.join(PROGRESS_LOG);
            let log = File::create(&log_path).map_err(|e| Error::io(&log_path, e))?;
            state.set_progress_log(Box::new(BufWriter::new(log)));
            match arm {
                Arm::Control => state.add_initial_seeds(&target, &initial)?,
                Arm::Generated(s) => {
                    if plan.reinit_mode == ReinitMode::Augment {
                        state.add_initial_seeds(&target, &initial)?;
                    }
                    let batch = batches.iter().find(|b| b.strategy == *s).expect("generated above");
                    state.reinitialize(&target, batch)?;
                }
            }
            state.fuzz_loop(&target, plan.phase2_execs)?;
            state.flush_log()?;
            write_corpus(&dir, &state.to_seed_files(0))?;
            Ok(())
        })?;
        timed(&name, t);
    }

    let report = stage("report", || {
        let report = report_from_run_dir(run_dir)?;
        write(&report_dir.join("tables.tsv"), &report.to_tsv())?;
        write(&report_dir.join("tables.txt"), &report.to_text())?;
        Ok(report)
    })?;
    let mut tsv = String::from("stage\twall_secs\n");
    for (name, d) in &timing {
        tsv.push_str(&format!("{name}\t{:.3}\n", d.as_secs_f64()));
    }
    write(&report_dir.join("timing.tsv"), &tsv)?;

    Ok(ExperimentOutcome {
        run_dir: run_dir.to_path_buf(),
        report,
        timing,
        content_duplicates,
    })
}

fn missing_lengths(seeds: &mut [SeedFile], target: &TargetProgram) -> Result<()> {
    if seeds.iter().any(|s| s.trace_length.is_none()) {
        fill_trace_lengths(seeds, target)?;
    }
    Ok(())
}

/// Rebuilds the report tables from a finished run directory.
pub fn report_from_run_dir(run_dir: &Path) -> Result<ExperimentReport> {
    let plan_path = run_dir.join("report").join(PLAN_FILE);
    let text = fs::read_to_string(&plan_path).map_err(|e| Error::io(&plan_path, e))?;
    let plan = ExperimentPlan::parse(&text)?;
    let target = lookup(&plan.target)?;

    let mut corpus = corpus::load(run_dir.join("phase1").join("merged"))?;
    missing_lengths(&mut corpus, &target)?;
    let training: BTreeSet<u64> = corpus.iter().filter_map(|s| s.trace_length).collect();
    let phase1_cost = Cost {
        execs: plan.phase1_execs * plan.workers as u64,
        ..Cost::default()
    };
    let mut corpus_rows = vec![compute_report(CORPUS_ROW, &corpus, &BTreeSet::new(), phase1_cost, plan.length_stats)?];
    for arm in &plan.strategies {
        let Arm::Generated(s) = arm else { continue };
        let mut seeds = corpus::load(run_dir.join("synthetic").join(s.name()))?;
        missing_lengths(&mut seeds, &target)?;
        corpus_rows.push(compute_report(
            format!("{s}_seed"),
            &seeds,
            &training,
            Cost::default(),
            plan.length_stats,
        )?);
    }

    let mut phase2_rows = Vec::new();
    for arm in &plan.strategies {
        let mut found: Vec<SeedFile> = corpus::load(run_dir.join("phase2").join(arm.name()))?
            .into_iter()
            .filter(|s| s.origin == "mutation")
            .collect();
        missing_lengths(&mut found, &target)?;
        let cost = Cost {
            execs: plan.phase2_execs,
            ..Cost::default()
        };
        let row = if found.is_empty() {
            None
        } else {
            Some(compute_report(arm.name(), &found, &training, cost, plan.length_stats)?)
        };
        phase2_rows.push((*arm, row));
    }
    Ok(ExperimentReport {
        corpus_rows,
        phase2_rows,
        baseline: plan.baseline,
    })
}
