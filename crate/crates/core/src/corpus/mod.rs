//! On-disk seed corpora.
//!
//! ```text
//! <dir>/manifest.tsv                         header + one row per seed
//! <dir>/queue/worker-NN/id-%06u,src-%s,time-%020u
//! ```
//!
//! Manifest columns: `worker id origin discovered_at trace_length sha256`,
//! tab separated, `trace_length` empty when unknown. Manifest rows and payload
//! files must agree one to one and every payload must match its hash.

mod dedup;

pub use dedup::{dedup_by_length, dedup_content, fill_trace_lengths, Dedup};

use std::collections::HashSet;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::{Error, Result};

pub const MANIFEST: &str = "manifest.tsv";
pub const QUEUE_DIR: &str = "queue";
const HEADER: &str = "worker\tid\torigin\tdiscovered_at\ttrace_length\tsha256";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SeedFile {
    pub data: Vec<u8>,
    pub id: u32,
    pub origin: String,
    pub discovered_at: u64,
    pub worker: u16,
    pub trace_length: Option<u64>,
}

impl SeedFile {
    pub fn new(data: Vec<u8>, id: u32, origin: impl Into<String>, discovered_at: u64, worker: u16) -> Self {
        Self {
            data,
            id,
            origin: origin.into(),
            discovered_at,
            worker,
            trace_length: None,
        }
    }

    pub fn key(&self) -> (u16, u32) {
        (self.worker, self.id)
    }

    pub fn file_name(&self) -> String {
        format!("id-{:06},src-{},time-{:020}", self.id, self.origin, self.discovered_at)
    }

    /// Payload location relative to the corpus root.
    pub fn relative_path(&self) -> PathBuf {
        Path::new(QUEUE_DIR)
            .join(format!("worker-{:02}", self.worker))
            .join(self.file_name())
    }

    pub fn sha256(&self) -> String {
        sha256_hex(&self.data)
    }

    fn validate(&self) -> Result<()> {
        if self.data.is_empty() {
            return Err(Error::usage(format!("seed {:?} has no data", self.key())));
        }
        if self.origin.is_empty()
            || self
                .origin
                .chars()
                .any(|c| c == ',' || c == '/' || c == '\\' || c.is_whitespace() || c.is_control())
        {
            return Err(Error::usage(format!("invalid seed origin {:?}", self.origin)));
        }
        Ok(())
    }

    fn manifest_row(&self) -> String {
        format!(
            "{}\t{}\t{}\t{}\t{}\t{}\n",
            self.worker,
            self.id,
            self.origin,
            self.discovered_at,
            self.trace_length.map(|l| l.to_string()).unwrap_or_default(),
            self.sha256()
        )
    }
}

pub fn sha256_hex(data: &[u8]) -> String {
    hex::encode(Sha256::digest(data))
}

/// An open corpus directory with a single writer.
#[derive(Debug)]
pub struct CorpusDir {
    path: PathBuf,
    seeds: Vec<SeedFile>,
    keys: HashSet<(u16, u32)>,
}

impl CorpusDir {
    /// Creates an empty corpus. Fails if the directory already holds one.
    pub fn create(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref().to_path_buf();
        let manifest = path.join(MANIFEST);
        if manifest.exists() {
            return Err(Error::usage(format!("{} already contains a corpus", path.display())));
        }
        fs::create_dir_all(path.join(QUEUE_DIR)).map_err(|e| Error::io(&path, e))?;
        fs::write(&manifest, format!("{HEADER}\n")).map_err(|e| Error::io(&manifest, e))?;
        Ok(Self {
            path,
            seeds: Vec::new(),
            keys: HashSet::new(),
        })
    }

    /// Opens and fully verifies an existing corpus.
    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref().to_path_buf();
        let seeds = load(&path)?;
        let keys = seeds.iter().map(SeedFile::key).collect();
        Ok(Self { path, seeds, keys })
    }

    pub fn open_or_create(path: impl AsRef<Path>) -> Result<Self> {
        if path.as_ref().join(MANIFEST).exists() {
            Self::open(path)
        } else {
            Self::create(path)
        }
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn seeds(&self) -> &[SeedFile] {
        &self.seeds
    }

    pub fn into_seeds(self) -> Vec<SeedFile> {
        self.seeds
    }

    pub fn len(&self) -> usize {
        self.seeds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.seeds.is_empty()
    }

    pub fn save(&mut self, seed: &SeedFile) -> Result<()> {
        seed.validate()?;
        if self.keys.contains(&seed.key()) {
            return Err(Error::usage(format!(
                "seed (worker {}, id {}) already present in {}",
                seed.worker,
                seed.id,
                self.path.display()
            )));
        }
        let payload = self.path.join(seed.relative_path());
        if let Some(parent) = payload.parent() {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        fs::write(&payload, &seed.data).map_err(|e| Error::io(&payload, e))?;
        let manifest = self.path.join(MANIFEST);
        let mut f = fs::OpenOptions::new()
            .append(true)
            .open(&manifest)
            .map_err(|e| Error::io(&manifest, e))?;
        f.write_all(seed.manifest_row().as_bytes())
            .map_err(|e| Error::io(&manifest, e))?;
        self.keys.insert(seed.key());
        self.seeds.push(seed.clone());
        Ok(())
    }
}

/// Writes `seeds` as a new corpus at `dir`.
pub fn write_corpus(dir: impl AsRef<Path>, seeds: &[SeedFile]) -> Result<CorpusDir> {
    let mut corpus = CorpusDir::create(dir)?;
    for s in seeds {
        corpus.save(s)?;
    }
    Ok(corpus)
}

/// Rewrites the manifest of an existing corpus, e.g. after trace lengths were filled in.
/// The seed set itself must be unchanged.
pub fn rewrite_manifest(dir: impl AsRef<Path>, seeds: &[SeedFile]) -> Result<()> {
    let dir = dir.as_ref();
    let current = load(dir)?;
    let mut a: Vec<_> = current.iter().map(|s| (s.key(), s.sha256())).collect();
    let mut b: Vec<_> = seeds.iter().map(|s| (s.key(), s.sha256())).collect();
    a.sort();
    b.sort();
    if a != b {
        return Err(Error::usage(format!(
            "rewrite_manifest: seed set differs from {}",
            dir.display()
        )));
    }
    let mut text = format!("{HEADER}\n");
    for s in seeds {
        text.push_str(&s.manifest_row());
    }
    let manifest = dir.join(MANIFEST);
    let tmp = dir.join(format!("{MANIFEST}.tmp"));
    fs::write(&tmp, text).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, &manifest).map_err(|e| Error::io(&manifest, e))
}

/// Loads and verifies every seed in `dir`. A directory without a manifest
/// and without payloads is an empty corpus.
pub fn load(dir: impl AsRef<Path>) -> Result<Vec<SeedFile>> {
    let dir = dir.as_ref();
    let manifest = dir.join(MANIFEST);
    let corrupt = |path: &Path, reason: String| Error::Corruption {
        path: path.to_path_buf(),
        reason,
    };

    let on_disk = payload_files(dir)?;
    if !manifest.exists() {
        if let Some(stray) = on_disk.iter().next() {
            return Err(corrupt(stray, "payload without a manifest".into()));
        }
        return Ok(Vec::new());
    }
    let text = fs::read_to_string(&manifest).map_err(|e| Error::io(&manifest, e))?;
    let mut lines = text.lines();
    if lines.next() != Some(HEADER) {
        return Err(corrupt(&manifest, "missing or malformed header".into()));
    }

    let mut seeds = Vec::new();
    let mut keys = HashSet::new();
    let mut referenced = HashSet::new();
    for (n, line) in lines.enumerate() {
        let row = n + 2;
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 6 {
            return Err(corrupt(&manifest, format!("line {row}: expected 6 columns, got {}", cols.len())));
        }
        let bad = |what: &str| corrupt(&manifest, format!("line {row}: bad {what}"));
        let worker: u16 = cols[0].parse().map_err(|_| bad("worker"))?;
        let id: u32 = cols[1].parse().map_err(|_| bad("id"))?;
        let origin = cols[2].to_string();
        let discovered_at: u64 = cols[3].parse().map_err(|_| bad("discovered_at"))?;
        let trace_length = match cols[4] {
            "" => None,
            s => Some(s.parse().map_err(|_| bad("trace_length"))?),
        };
        let hash = cols[5];
        let mut seed = SeedFile {
            data: Vec::new(),
            id,
            origin,
            discovered_at,
            worker,
            trace_length,
        };
        if !keys.insert(seed.key()) {
            return Err(corrupt(&manifest, format!("line {row}: duplicate (worker {worker}, id {id})")));
        }
        let payload = dir.join(seed.relative_path());
        seed.data = fs::read(&payload).map_err(|e| corrupt(&payload, format!("unreadable payload: {e}")))?;
        if seed.sha256() != hash {
            return Err(corrupt(&payload, "payload does not match manifest hash".into()));
        }
        if seed.data.is_empty() {
            return Err(corrupt(&payload, "empty payload".into()));
        }
        referenced.insert(payload);
        seeds.push(seed);
    }
    if let Some(stray) = on_disk.iter().find(|p| !referenced.contains(*p)) {
        return Err(corrupt(stray, "payload not listed in manifest".into()));
    }
    Ok(seeds)
}

fn payload_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let queue = dir.join(QUEUE_DIR);
    let mut out = Vec::new();
    if !queue.exists() {
        return Ok(out);
    }
    let mut stack = vec![queue];
    while let Some(d) = stack.pop() {
        for entry in fs::read_dir(&d).map_err(|e| Error::io(&d, e))? {
            let entry = entry.map_err(|e| Error::io(&d, e))?;
            let p = entry.path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push(p);
            }
        }
    }
    out.sort();
    Ok(out)
}

/// Result of [`merge`].
#[derive(Debug)]
pub struct Merged {
    pub corpus: CorpusDir,
    pub content_duplicates: usize,
}

/// Unions several corpora (ordered by `(worker, id)`), removes content
/// duplicates and writes the result to `out`.
pub fn merge(dirs: &[impl AsRef<Path>], out: impl AsRef<Path>) -> Result<Merged> {
    if dirs.is_empty() {
        return Err(Error::usage("merge needs at least one corpus directory"));
    }
    let mut all = Vec::new();
    for d in dirs {
        all.extend(load(d)?);
    }
    all.sort_by_key(SeedFile::key);
    let Dedup { seeds, removed } = dedup_content(&all);
    if let Some(w) = seeds.windows(2).find(|w| w[0].key() == w[1].key()) {
        return Err(Error::usage(format!(
            "cannot merge: two different seeds share (worker {}, id {})",
            w[0].worker, w[0].id
        )));
    }
    let corpus = write_corpus(out, &seeds)?;
    Ok(Merged {
        corpus,
        content_duplicates: removed,
    })
}
