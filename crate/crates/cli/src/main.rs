//! `reseed`: fuzz, train seed generators, generate, dedup, merge, report and
//! run whole experiments.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 usage error.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use reseed_core::corpus::{self, dedup_by_length, dedup_content, fill_trace_lengths, write_corpus, SeedFile};
use reseed_core::experiment::{report_from_run_dir, run_experiment, ExperimentPlan};
use reseed_core::fuzzer::{run_workers, FuzzConfig, WorkerSpec};
use reseed_core::generators::{
    gan_generate, load_model, lstm_generate, random_from_corpus, random_urandom, save_model, train_gan, train_lstm,
    Entropy, GanConfig, LstmConfig, StoredModel, Strategy,
};
use reseed_core::target::{lookup, DEFAULT_EDGE_BUDGET};
use reseed_core::{Error, Result};

/// Setting this to `os` makes `rand_urandom` draw from OS entropy instead
/// of `--rng-seed`.
const ENTROPY_ENV: &str = "RESEED_URANDOM_ENTROPY";

#[derive(Parser, Debug)]
#[command(name = "reseed", version, about = "Coverage-guided fuzzing with learned seed reinitialization")]
struct Cli {
    /// Diagnostic verbosity on stderr.
    #[arg(long, global = true, value_enum, default_value_t = LogLevel::Info)]
    log_level: LogLevel,

    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum LogLevel {
    Error,
    Warn,
    Info,
    Debug,
    Trace,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Fuzz a target and write the queue as a corpus directory.
    Fuzz(FuzzArgs),
    /// Train a GAN or LSTM on a corpus and save the model.
    Train(TrainArgs),
    /// Generate a synthetic seed batch into a corpus directory.
    Generate(GenerateArgs),
    /// Remove duplicate seeds by content or by trace length.
    Dedup(DedupArgs),
    /// Merge corpus directories, dropping content duplicates.
    Merge(MergeArgs),
    /// Recompute the report tables of a finished experiment run.
    Report(ReportArgs),
    /// Run a full experiment plan.
    Experiment(ExperimentArgs),
}

#[derive(Args, Debug)]
struct FuzzArgs {
    #[arg(long)]
    target: String,
    /// Output directory (a corpus, or `worker-NN/` corpora when --workers > 1).
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long, default_value_t = 100_000)]
    execs: u64,
    /// Worker i uses rng seed `rng_seed + i`.
    #[arg(long, default_value_t = 0)]
    rng_seed: u64,
    #[arg(long, default_value_t = 1)]
    workers: usize,
    /// Initial seeds: a corpus directory or a directory of raw files.
    #[arg(long)]
    seeds: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_EDGE_BUDGET)]
    edge_budget: u64,
    #[arg(long, default_value_t = 4096)]
    max_input_len: usize,
    #[arg(long, default_value_t = 256)]
    havoc_rounds: usize,
    #[arg(long, default_value_t = 8)]
    havoc_stack_max: usize,
    /// Skip the deterministic stage.
    #[arg(long)]
    no_deterministic: bool,
    #[arg(long)]
    force: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum ModelKind {
    Gan,
    Lstm,
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[arg(long, value_enum)]
    strategy: ModelKind,
    #[arg(long)]
    corpus: PathBuf,
    /// Output model file.
    #[arg(long)]
    model: PathBuf,
    #[arg(long, default_value_t = 0)]
    rng_seed: u64,
    /// Defaults: 300 (gan), 20 (lstm).
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long, default_value_t = 64)]
    batch_size: usize,
    #[arg(long, default_value_t = 32)]
    latent_dim: usize,
    /// GAN output length; default is the median seed length clamped to [16, 256].
    #[arg(long)]
    output_len: Option<usize>,
    #[arg(long, default_value_t = 0.01)]
    generator_lr: f64,
    #[arg(long, default_value_t = 0.0002)]
    discriminator_lr: f64,
    #[arg(long, default_value_t = 0.0)]
    lr_decay: f64,
    #[arg(long, default_value_t = 128)]
    hidden_width: usize,
    #[arg(long, default_value_t = 128)]
    dense_width: usize,
    #[arg(long, default_value_t = 20)]
    window: usize,
    #[arg(long, default_value_t = 3)]
    stride: usize,
    /// Cap on LSTM training windows.
    #[arg(long)]
    max_windows: Option<usize>,
    #[arg(long, default_value_t = 0.001)]
    lstm_lr: f64,
    #[arg(long)]
    force: bool,
}

#[derive(Args, Debug)]
struct GenerateArgs {
    #[arg(long)]
    strategy: String,
    /// Model file (gan, lstm).
    #[arg(long)]
    model: Option<PathBuf>,
    /// Training corpus (lstm priming, rand_corpus sampling).
    #[arg(long)]
    corpus: Option<PathBuf>,
    #[arg(long)]
    n: usize,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    rng_seed: u64,
    /// Random-seed length; default is the corpus median clamped to [16, 256].
    #[arg(long)]
    len: Option<usize>,
    #[arg(long, default_value_t = 1.0)]
    temperature: f64,
    /// LSTM priming window.
    #[arg(long, default_value_t = 20)]
    window: usize,
    #[arg(long, default_value_t = 40)]
    max_gen_len: usize,
    /// Record trace lengths against this target in the manifest.
    #[arg(long)]
    target: Option<String>,
    #[arg(long)]
    force: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum DedupMode {
    Content,
    Length,
}

#[derive(Args, Debug)]
struct DedupArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value_t = DedupMode::Content)]
    mode: DedupMode,
    /// Needed for length mode when trace lengths are missing.
    #[arg(long)]
    target: Option<String>,
    #[arg(long)]
    force: bool,
}

#[derive(Args, Debug)]
struct MergeArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(required = true)]
    dirs: Vec<PathBuf>,
    #[arg(long)]
    force: bool,
}

#[derive(Args, Debug)]
struct ReportArgs {
    /// Run directory of a finished experiment.
    #[arg(long)]
    run: PathBuf,
    /// Print tab-separated tables instead of aligned text.
    #[arg(long)]
    tsv: bool,
}

#[derive(Args, Debug)]
struct ExperimentArgs {
    #[arg(long)]
    plan: PathBuf,
    /// Default: run/<timestamp>.
    #[arg(long)]
    run_dir: Option<PathBuf>,
    #[arg(long)]
    force: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::new()
        .filter_level(match cli.log_level {
            LogLevel::Error => log::LevelFilter::Error,
            LogLevel::Warn => log::LevelFilter::Warn,
            LogLevel::Info => log::LevelFilter::Info,
            LogLevel::Debug => log::LevelFilter::Debug,
            LogLevel::Trace => log::LevelFilter::Trace,
        })
        .init();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            let mut source = std::error::Error::source(&e);
            while let Some(s) = source {
                eprintln!("  caused by: {s}");
                source = s.source();
            }
            if e.is_usage() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}

fn run(cmd: Command) -> Result<()> {
    match cmd {
        Command::Fuzz(a) => fuzz(a),
        Command::Train(a) => train(a),
        Command::Generate(a) => generate(a),
        Command::Dedup(a) => dedup(a),
        Command::Merge(a) => merge(a),
        Command::Report(a) => report(a),
        Command::Experiment(a) => experiment(a),
    }
}

fn io_err(path: &Path, e: std::io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source: e,
    }
}

/// Refuses an existing output unless forced, in which case it is removed.
fn claim_output(path: &Path, force: bool) -> Result<()> {
    if !path.exists() {
        return Ok(());
    }
    if !force {
        return Err(Error::Usage(format!("{} already exists (use --force to replace it)", path.display())));
    }
    log::warn!("--force: removing {}", path.display());
    if path.is_dir() {
        fs::remove_dir_all(path).map_err(|e| io_err(path, e))
    } else {
        fs::remove_file(path).map_err(|e| io_err(path, e))
    }
}

fn require_dir(path: &Path) -> Result<()> {
    if path.is_dir() {
        Ok(())
    } else {
        Err(Error::Usage(format!("{} is not a directory", path.display())))
    }
}

fn load_corpus(path: &Path) -> Result<Vec<SeedFile>> {
    require_dir(path)?;
    let seeds = corpus::load(path)?;
    if seeds.is_empty() {
        return Err(Error::Usage(format!("corpus {} is empty", path.display())));
    }
    Ok(seeds)
}

/// A corpus directory if it has a manifest, otherwise every regular file.
fn load_raw_seeds(path: &Path) -> Result<Vec<Vec<u8>>> {
    require_dir(path)?;
    if path.join(corpus::MANIFEST).is_file() {
        return Ok(corpus::load(path)?.into_iter().map(|s| s.data).collect());
    }
    let mut files: Vec<PathBuf> = fs::read_dir(path)
        .map_err(|e| io_err(path, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file())
        .collect();
    files.sort();
    let mut seeds = Vec::new();
    for f in files {
        let data = fs::read(&f).map_err(|e| io_err(&f, e))?;
        if data.is_empty() {
            log::warn!("skipping empty seed file {}", f.display());
        } else {
            seeds.push(data);
        }
    }
    Ok(seeds)
}

fn fuzz(a: FuzzArgs) -> Result<()> {
    let target = lookup(&a.target)?;
    let initial = match &a.seeds {
        Some(p) => load_raw_seeds(p)?,
        None => Vec::new(),
    };
    claim_output(&a.corpus, a.force)?;
    let spec = WorkerSpec {
        target,
        config: FuzzConfig {
            edge_budget: a.edge_budget,
            max_input_len: a.max_input_len,
            havoc_rounds: a.havoc_rounds,
            havoc_stack_max: a.havoc_stack_max,
            deterministic: !a.no_deterministic,
            ..FuzzConfig::default()
        },
        exec_budget: a.execs,
        initial_seeds: initial,
        rng_seeds: (0..a.workers as u64).map(|i| a.rng_seed.wrapping_add(i)).collect(),
    };
    if a.workers == 1 {
        // A single worker writes its corpus directly into the output.
        let tmp = a.corpus.join(".worker");
        let reports = run_workers(1, &spec, &tmp)?;
        let dir = &reports[0].dir;
        for entry in fs::read_dir(dir).map_err(|e| io_err(dir, e))? {
            let entry = entry.map_err(|e| io_err(dir, e))?;
            let to = a.corpus.join(entry.file_name());
            fs::rename(entry.path(), &to).map_err(|e| io_err(&to, e))?;
        }
        fs::remove_dir_all(&tmp).map_err(|e| io_err(&tmp, e))?;
        println!(
            "{} entries, {} unique crashes, {} execs -> {}",
            reports[0].queue_len,
            reports[0].crashes,
            reports[0].exec_count,
            a.corpus.display()
        );
    } else {
        for r in run_workers(a.workers, &spec, &a.corpus)? {
            println!(
                "worker {:02}: {} entries, {} unique crashes, {} execs -> {}",
                r.worker,
                r.queue_len,
                r.crashes,
                r.exec_count,
                r.dir.display()
            );
        }
    }
    Ok(())
}

fn train(a: TrainArgs) -> Result<()> {
    let seeds = load_corpus(&a.corpus)?;
    claim_output(&a.model, a.force)?;
    let model = match a.strategy {
        ModelKind::Gan => {
            let cfg = GanConfig {
                latent_dim: a.latent_dim,
                output_len: a.output_len,
                epochs: a.epochs.unwrap_or(300),
                batch_size: a.batch_size,
                generator_lr: a.generator_lr,
                discriminator_lr: a.discriminator_lr,
                lr_decay: a.lr_decay,
                rng_seed: a.rng_seed,
            };
            let m = train_gan(&seeds, &cfg)?;
            println!(
                "gan: output_len {}, final losses d={:.4} g={:.4}, {:.1}s",
                m.output_len,
                m.history.discriminator_loss.last().copied().unwrap_or(f64::NAN),
                m.history.generator_loss.last().copied().unwrap_or(f64::NAN),
                m.train_time.as_secs_f64()
            );
            StoredModel::Gan(m)
        }
        ModelKind::Lstm => {
            let cfg = LstmConfig {
                hidden_width: a.hidden_width,
                dense_width: a.dense_width,
                window: a.window,
                stride: a.stride,
                epochs: a.epochs.unwrap_or(20),
                batch_size: a.batch_size,
                learning_rate: a.lstm_lr,
                max_windows: a.max_windows,
                rng_seed: a.rng_seed,
                ..LstmConfig::default()
            };
            let m = train_lstm(&seeds, &cfg)?;
            println!(
                "lstm: final loss {:.4}, {:.1}s",
                m.loss_history.last().copied().unwrap_or(f64::NAN),
                m.train_time.as_secs_f64()
            );
            StoredModel::Lstm(m)
        }
    };
    save_model(&a.model, &model)
}

fn urandom_entropy(seed: u64) -> Result<Entropy> {
    match std::env::var(ENTROPY_ENV) {
        Ok(v) if v == "os" => {
            log::warn!("{ENTROPY_ENV}=os: rand_urandom draws from OS entropy; output is not reproducible");
            Ok(Entropy::Os)
        }
        Ok(v) => Err(Error::Usage(format!("{ENTROPY_ENV} must be `os`, got `{v}`"))),
        Err(_) => Ok(Entropy::Seeded(seed)),
    }
}

fn generate(a: GenerateArgs) -> Result<()> {
    let strategy: Strategy = a.strategy.parse()?;
    let target = a.target.as_deref().map(lookup).transpose()?;
    let corpus = match &a.corpus {
        Some(p) => Some(load_corpus(p)?),
        None => None,
    };
    let need_corpus = || {
        corpus
            .as_deref()
            .ok_or_else(|| Error::Usage(format!("--corpus is required for {strategy}")))
    };
    let model = match strategy {
        Strategy::Gan | Strategy::Lstm => {
            let path = a
                .model
                .as_ref()
                .ok_or_else(|| Error::Usage(format!("--model is required for {strategy}")))?;
            Some(load_model(path)?)
        }
        _ => None,
    };
    let rand_len = || -> Result<usize> {
        match (a.len, corpus.as_deref()) {
            (Some(l), _) => Ok(l),
            (None, Some(c)) => Ok(reseed_core::generators::gan::default_output_len(c)),
            (None, None) => Err(Error::Usage(format!("{strategy} needs --len or --corpus"))),
        }
    };
    claim_output(&a.out, a.force)?;
    let batch = match (strategy, model) {
        (Strategy::Gan, Some(StoredModel::Gan(m))) => gan_generate(&m, a.n, a.rng_seed)?,
        (Strategy::Lstm, Some(StoredModel::Lstm(mut m))) => {
            m.window = a.window;
            m.max_gen_len = a.max_gen_len;
            lstm_generate(&m, a.n, a.temperature, need_corpus()?, a.rng_seed)?
        }
        (Strategy::RandCorpus, _) => random_from_corpus(need_corpus()?, a.n, rand_len()?, a.rng_seed)?,
        (Strategy::RandUrandom, _) => random_urandom(a.n, rand_len()?, urandom_entropy(a.rng_seed)?)?,
        _ => return Err(Error::Usage(format!("model file does not hold a {strategy} model"))),
    };
    let mut seeds = batch.to_seed_files();
    if let Some(t) = &target {
        fill_trace_lengths(&mut seeds, t)?;
    }
    write_corpus(&a.out, &seeds)?;
    println!("{} {} seeds -> {}", seeds.len(), strategy, a.out.display());
    Ok(())
}

fn dedup(a: DedupArgs) -> Result<()> {
    let mut seeds = corpus::load({
        require_dir(&a.corpus)?;
        &a.corpus
    })?;
    let target = a.target.as_deref().map(lookup).transpose()?;
    claim_output(&a.out, a.force)?;
    let result = match a.mode {
        DedupMode::Content => dedup_content(&seeds),
        DedupMode::Length => {
            if seeds.iter().any(|s| s.trace_length.is_none()) {
                let t = target.ok_or_else(|| Error::Usage("length dedup needs --target for unanalysed seeds".into()))?;
                fill_trace_lengths(&mut seeds, &t)?;
            }
            let t = target.unwrap_or(lookup("minikey")?);
            dedup_by_length(&seeds, &t)?
        }
    };
    write_corpus(&a.out, &result.seeds)?;
    println!("{} in, {} kept, {} removed", seeds.len(), result.seeds.len(), result.removed);
    Ok(())
}

fn merge(a: MergeArgs) -> Result<()> {
    for d in &a.dirs {
        require_dir(d)?;
    }
    claim_output(&a.out, a.force)?;
    let merged = corpus::merge(&a.dirs, &a.out)?;
    println!(
        "{} seeds, {} content duplicates removed -> {}",
        merged.corpus.len(),
        merged.content_duplicates,
        a.out.display()
    );
    Ok(())
}

fn report(a: ReportArgs) -> Result<()> {
    require_dir(&a.run)?;
    let r = report_from_run_dir(&a.run)?;
    print!("{}", if a.tsv { r.to_tsv() } else { r.to_text() });
    Ok(())
}

fn experiment(a: ExperimentArgs) -> Result<()> {
    let text = fs::read_to_string(&a.plan).map_err(|e| io_err(&a.plan, e))?;
    let plan = ExperimentPlan::parse(&text)?;
    let run_dir = a
        .run_dir
        .unwrap_or_else(|| Path::new("run").join(chrono::Local::now().format("%Y%m%d-%H%M%S").to_string()));
    claim_output(&run_dir, a.force)?;
    let outcome = run_experiment(&plan, &run_dir)?;
    print!("{}", outcome.report.to_text());
    println!("\nartifacts: {}", outcome.run_dir.display());
    for (stage, d) in &outcome.timing {
        log::info!("{stage}: {:.2}s", d.as_secs_f64());
    }
    Ok(())
}
