//! Flat `key = value` experiment plans.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use crate::fuzzer::FuzzConfig;
use crate::generators::{GanConfig, LstmConfig, Strategy};
use crate::{Error, Result};

/// A phase-2 arm: keep fuzzing the phase-1 corpus, or reinitialize from a
/// generator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Arm {
    Control,
    Generated(Strategy),
}

impl Arm {
    pub fn name(self) -> &'static str {
        match self {
            Arm::Control => "afl",
            Arm::Generated(s) => s.name(),
        }
    }
}

impl fmt::Display for Arm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Arm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "afl" {
            Ok(Arm::Control)
        } else {
            Ok(Arm::Generated(s.parse()?))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReinitMode {
    /// Phase 2 starts from the synthetic seeds alone.
    Fresh,
    /// Synthetic seeds are added to the phase-1 corpus.
    Augment,
}

impl fmt::Display for ReinitMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ReinitMode::Fresh => "fresh",
            ReinitMode::Augment => "augment",
        })
    }
}

impl FromStr for ReinitMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fresh" => Ok(ReinitMode::Fresh),
            "augment" => Ok(ReinitMode::Augment),
            _ => Err(Error::usage(format!("reinit_mode must be fresh or augment, got `{s}`"))),
        }
    }
}

/// Which lengths feed the mean and deviation columns.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LengthStats {
    /// One representative per distinct length.
    Unique,
    AllSeeds,
}

impl fmt::Display for LengthStats {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LengthStats::Unique => "unique",
            LengthStats::AllSeeds => "all",
        })
    }
}

impl FromStr for LengthStats {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "unique" => Ok(LengthStats::Unique),
            "all" => Ok(LengthStats::AllSeeds),
            _ => Err(Error::usage(format!("length_stats must be unique or all, got `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentPlan {
    pub target: String,
    pub phase1_execs: u64,
    pub workers: usize,
    pub strategies: Vec<Arm>,
    pub samples: usize,
    pub phase2_execs: u64,
    pub reinit_mode: ReinitMode,
    pub rng_seed: u64,
    pub baseline: Arm,
    pub length_stats: LengthStats,
    pub fuzz: FuzzConfig,
    pub gan: GanConfig,
    pub lstm: LstmConfig,
    pub temperature: f64,
}

impl ExperimentPlan {
    pub fn new(target: impl Into<String>) -> Self {
        Self {
            target: target.into(),
            phase1_execs: 200_000,
            workers: 2,
            strategies: vec![
                Arm::Control,
                Arm::Generated(Strategy::RandUrandom),
                Arm::Generated(Strategy::RandCorpus),
                Arm::Generated(Strategy::Lstm),
                Arm::Generated(Strategy::Gan),
            ],
            samples: 500,
            phase2_execs: 100_000,
            reinit_mode: ReinitMode::Fresh,
            rng_seed: 1,
            baseline: Arm::Generated(Strategy::RandUrandom),
            length_stats: LengthStats::Unique,
            fuzz: FuzzConfig::default(),
            gan: GanConfig::default(),
            lstm: LstmConfig {
                max_windows: Some(1024),
                ..LstmConfig::default()
            },
            temperature: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.target.is_empty() {
            return Err(Error::usage("plan key `target` is empty"));
        }
        if self.phase1_execs == 0 || self.phase2_execs == 0 {
            return Err(Error::usage("phase1_execs and phase2_execs must be positive"));
        }
        if self.workers == 0 || self.samples == 0 {
            return Err(Error::usage("workers and samples must be positive"));
        }
        if self.strategies.is_empty() {
            return Err(Error::usage("plan lists no strategies"));
        }
        let unique: BTreeSet<_> = self.strategies.iter().collect();
        if unique.len() != self.strategies.len() {
            return Err(Error::usage("plan lists a strategy twice"));
        }
        if !(self.temperature > 0.0) {
            return Err(Error::usage("lstm_temperature must be positive"));
        }
        crate::target::lookup(&self.target)?;
        Ok(())
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut pairs = Vec::new();
        let mut seen = BTreeSet::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::usage(format!("plan line {}: expected `key = value`", n + 1)))?;
            let (k, v) = (k.trim(), v.trim());
            if !seen.insert(k.to_string()) {
                return Err(Error::usage(format!("plan key `{k}` given twice")));
            }
            pairs.push((n + 1, k.to_string(), v.to_string()));
        }
        let target = pairs
            .iter()
            .find(|(_, k, _)| k == "target")
            .map(|(_, _, v)| v.clone())
            .ok_or_else(|| Error::usage("plan is missing required key `target`"))?;
        let mut plan = ExperimentPlan::new(target);
        for (line, k, v) in &pairs {
            plan.set(k, v)
                .map_err(|e| Error::usage(format!("plan line {line}, key `{k}`: {}", strip_usage(&e))))?;
        }
        plan.validate()?;
        Ok(plan)
    }

    fn set(&mut self, key: &str, v: &str) -> Result<()> {
        match key {
            "target" => self.target = v.to_string(),
            "phase1_execs" => self.phase1_execs = num(v)?,
            "workers" => self.workers = num(v)?,
            "strategies" => {
                self.strategies = v
                    .split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(str::parse)
                    .collect::<Result<_>>()?
            }
            "samples" => self.samples = num(v)?,
            "phase2_execs" => self.phase2_execs = num(v)?,
            "reinit_mode" => self.reinit_mode = v.parse()?,
            "rng_seed" => self.rng_seed = num(v)?,
            "baseline" => self.baseline = v.parse()?,
            "length_stats" => self.length_stats = v.parse()?,
            "edge_budget" => self.fuzz.edge_budget = num(v)?,
            "max_input_len" => self.fuzz.max_input_len = num(v)?,
            "havoc_rounds" => self.fuzz.havoc_rounds = num(v)?,
            "havoc_stack_max" => self.fuzz.havoc_stack_max = num(v)?,
            "deterministic" => self.fuzz.deterministic = flag(v)?,
            "gan_latent_dim" => self.gan.latent_dim = num(v)?,
            "gan_output_len" => self.gan.output_len = auto(v)?,
            "gan_epochs" => self.gan.epochs = num(v)?,
            "gan_batch_size" => self.gan.batch_size = num(v)?,
            "gan_generator_lr" => self.gan.generator_lr = num(v)?,
            "gan_discriminator_lr" => self.gan.discriminator_lr = num(v)?,
            "gan_lr_decay" => self.gan.lr_decay = num(v)?,
            "lstm_hidden_width" => self.lstm.hidden_width = num(v)?,
            "lstm_dense_width" => self.lstm.dense_width = num(v)?,
            "lstm_window" => self.lstm.window = num(v)?,
            "lstm_stride" => self.lstm.stride = num(v)?,
            "lstm_epochs" => self.lstm.epochs = num(v)?,
            "lstm_batch_size" => self.lstm.batch_size = num(v)?,
            "lstm_lr" => self.lstm.learning_rate = num(v)?,
            "lstm_max_windows" => self.lstm.max_windows = auto(v)?,
            "lstm_max_gen_len" => self.lstm.max_gen_len = num(v)?,
            "lstm_temperature" => self.temperature = num(v)?,
            _ => return Err(Error::usage(format!("unknown plan key `{key}`"))),
        }
        Ok(())
    }

    /// Every key with its effective value; parses back to the same plan.
    pub fn to_text(&self) -> String {
        let opt = |o: Option<usize>| o.map_or("auto".to_string(), |v| v.to_string());
        let strategies: Vec<&str> = self.strategies.iter().map(|a| a.name()).collect();
        let rows: Vec<(&str, String)> = vec![
            ("target", self.target.clone()),
            ("phase1_execs", self.phase1_execs.to_string()),
            ("workers", self.workers.to_string()),
            ("strategies", strategies.join(",")),
            ("samples", self.samples.to_string()),
            ("phase2_execs", self.phase2_execs.to_string()),
            ("reinit_mode", self.reinit_mode.to_string()),
            ("rng_seed", self.rng_seed.to_string()),
            ("baseline", self.baseline.to_string()),
            ("length_stats", self.length_stats.to_string()),
            ("edge_budget", self.fuzz.edge_budget.to_string()),
            ("max_input_len", self.fuzz.max_input_len.to_string()),
            ("havoc_rounds", self.fuzz.havoc_rounds.to_string()),
            ("havoc_stack_max", self.fuzz.havoc_stack_max.to_string()),
            ("deterministic", self.fuzz.deterministic.to_string()),
            ("gan_latent_dim", self.gan.latent_dim.to_string()),
            ("gan_output_len", opt(self.gan.output_len)),
            ("gan_epochs", self.gan.epochs.to_string()),
            ("gan_batch_size", self.gan.batch_size.to_string()),
            ("gan_generator_lr", self.gan.generator_lr.to_string()),
            ("gan_discriminator_lr", self.gan.discriminator_lr.to_string()),
            ("gan_lr_decay", self.gan.lr_decay.to_string()),
            ("lstm_hidden_width", self.lstm.hidden_width.to_string()),
            ("lstm_dense_width", self.lstm.dense_width.to_string()),
            ("lstm_window", self.lstm.window.to_string()),
            ("lstm_stride", self.lstm.stride.to_string()),
            ("lstm_epochs", self.lstm.epochs.to_string()),
            ("lstm_batch_size", self.lstm.batch_size.to_string()),
            ("lstm_lr", self.lstm.learning_rate.to_string()),
            ("lstm_max_windows", opt(self.lstm.max_windows)),
            ("lstm_max_gen_len", self.lstm.max_gen_len.to_string()),
            ("lstm_temperature", self.temperature.to_string()),
        ];
        rows.into_iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }
}

fn strip_usage(e: &Error) -> String {
    match e {
        Error::Usage(m) => m.clone(),
        other => other.to_string(),
    }
}

fn num<T: FromStr>(v: &str) -> Result<T> {
    v.parse().map_err(|_| Error::usage(format!("invalid number `{v}`")))
}

fn flag(v: &str) -> Result<bool> {
    match v {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(Error::usage(format!("invalid boolean `{v}`"))),
    }
}

fn auto(v: &str) -> Result<Option<usize>> {
    if v == "auto" {
        Ok(None)
    } else {
        num(v).map(Some)
    }
}
