//! Append-only JSONL caches enabling offline replay.
//!
//! Every live backend response that feeds a report is written to disk and
//! flushed before it is used (write-ahead), so a warm cache replays a run
//! with zero backend calls. Two files live in the cache directory:
//! `samples.jsonl` for generation responses and `nli.jsonl` for entailment
//! responses. Corrupt lines are surfaced with their line numbers; valid
//! lines around them stay readable.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::backends::{EntailmentBackend, NliResult};
use crate::error::Result;
use crate::types::{Condition, DecodingParams};

/// Sample-cache file name inside a cache directory.
pub const SAMPLES_FILE: &str = "samples.jsonl";
/// NLI-cache file name inside a cache directory.
pub const NLI_FILE: &str = "nli.jsonl";

/// A line the cache could not parse.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CorruptLine {
    pub line: usize,
    pub message: String,
}

fn now_epoch_secs() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

/// One cached generation response.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleCacheEntry {
    pub record_id: String,
    pub condition: Condition,
    pub prompt_fingerprint: String,
    pub decoding: DecodingParams,
    pub answers: Vec<String>,
    pub backend: String,
    pub timestamp: u64,
}

impl SampleCacheEntry {
    pub fn new(
        record_id: &str,
        condition: Condition,
        prompt_fingerprint: &str,
        decoding: &DecodingParams,
        answers: Vec<String>,
        backend: &str,
    ) -> Self {
        Self {
            record_id: record_id.into(),
            condition,
            prompt_fingerprint: prompt_fingerprint.into(),
            decoding: decoding.clone(),
            answers,
            backend: backend.into(),
            timestamp: now_epoch_secs(),
        }
    }

    fn key(&self) -> String {
        sample_key(
            &self.record_id,
            self.condition,
            &self.prompt_fingerprint,
            &self.decoding,
            &self.backend,
        )
    }
}

/// Canonical lookup key. Temperature enters via its bit pattern so equality
/// is exact.
pub fn sample_key(
    record_id: &str,
    condition: Condition,
    prompt_fingerprint: &str,
    decoding: &DecodingParams,
    backend: &str,
) -> String {
    format!(
        "{record_id}\u{1}{}\u{1}{prompt_fingerprint}\u{1}{:x}\u{1}{}\u{1}{:?}\u{1}{backend}",
        condition.as_str(),
        decoding.temperature.to_bits(),
        decoding.max_tokens,
        decoding.seed,
    )
}

struct JsonlFile {
    path: PathBuf,
    writer: Mutex<Option<File>>,
}

impl JsonlFile {
    fn read_lines<T: serde::de::DeserializeOwned>(path: &Path) -> Result<(Vec<T>, Vec<CorruptLine>)> {
        let mut entries = Vec::new();
        let mut corrupt = Vec::new();
        if !path.exists() {
            return Ok((entries, corrupt));
        }
        let file = File::open(path)?;
        for (idx, line) in BufReader::new(file).lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            match serde_json::from_str::<T>(&line) {
                Ok(e) => entries.push(e),
                Err(e) => {
                    let c = CorruptLine {
                        line: idx + 1,
                        message: e.to_string(),
                    };
                    log::warn!("cache corrupt at {}:{}: {}", path.display(), c.line, c.message);
                    corrupt.push(c);
                }
            }
        }
        Ok((entries, corrupt))
    }

    /// Appends one line and flushes to disk before returning. Takes an
    /// advisory exclusive lock on first write so two writers cannot
    /// interleave partial lines.
    fn append_line(&self, line: &str) -> Result<()> {
        let mut guard = self.writer.lock().unwrap();
        if guard.is_none() {
            if let Some(parent) = self.path.parent() {
                std::fs::create_dir_all(parent)?;
            }
            let file = OpenOptions::new().create(true).append(true).open(&self.path)?;
            #[cfg(unix)]
            {
                use std::os::unix::io::AsRawFd;
                // Best-effort advisory lock; held for the cache's lifetime.
                unsafe {
                    libc::flock(file.as_raw_fd(), libc::LOCK_EX);
                }
            }
            *guard = Some(file);
        }
        let file = guard.as_mut().unwrap();
        file.write_all(line.as_bytes())?;
        file.write_all(b"\n")?;
        file.flush()?;
        file.sync_data()?;
        Ok(())
    }
}

/// Write-ahead cache of generation responses.
pub struct SampleCache {
    file: JsonlFile,
    entries: Mutex<Vec<SampleCacheEntry>>,
    index: Mutex<HashMap<String, usize>>,
    corrupt: Vec<CorruptLine>,
}

impl SampleCache {
    /// Opens (or lazily creates) the cache at `path`. An absent file is an
    /// empty cache.
    pub fn open(path: &Path) -> Result<Self> {
        let (entries, corrupt) = JsonlFile::read_lines::<SampleCacheEntry>(path)?;
        let mut index = HashMap::new();
        for (i, entry) in entries.iter().enumerate() {
            // First entry matching a key wins.
            index.entry(entry.key()).or_insert(i);
        }
        Ok(Self {
            file: JsonlFile {
                path: path.to_path_buf(),
                writer: Mutex::new(None),
            },
            entries: Mutex::new(entries),
            index: Mutex::new(index),
            corrupt,
        })
    }

    pub fn len(&self) -> usize {
        self.entries.lock().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn corrupt_lines(&self) -> &[CorruptLine] {
        &self.corrupt
    }

    /// First entry matching the full key, if any.
    pub fn lookup(
        &self,
        record_id: &str,
        condition: Condition,
        prompt_fingerprint: &str,
        decoding: &DecodingParams,
        backend: &str,
    ) -> Option<Vec<String>> {
        let key = sample_key(record_id, condition, prompt_fingerprint, decoding, backend);
        let index = self.index.lock().unwrap();
        let entries = self.entries.lock().unwrap();
        index.get(&key).map(|&i| entries[i].answers.clone())
    }

    /// Appends an entry, flushing it to disk before it becomes visible to
    /// lookups (write-ahead).
    pub fn append(&self, entry: SampleCacheEntry) -> Result<()> {
        let line = serde_json::to_string(&entry).expect("cache entries serialize");
        self.file.append_line(&line)?;
        let mut entries = self.entries.lock().unwrap();
        let mut index = self.index.lock().unwrap();
        let key = entry.key();
        entries.push(entry);
        index.entry(key).or_insert(entries.len() - 1);
        Ok(())
    }
}

/// One cached NLI response. Texts are stored as fingerprints: lookup is
/// exact-key, so the raw strings are not needed for replay.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NliCacheEntry {
    pub premise_fingerprint: String,
    pub hypothesis_fingerprint: String,
    pub backend: String,
    pub entail: f64,
    pub neutral: f64,
    pub contradict: f64,
    pub timestamp: u64,
}

impl NliCacheEntry {
    fn key(&self) -> String {
        format!(
            "{}\u{1}{}\u{1}{}",
            self.premise_fingerprint, self.hypothesis_fingerprint, self.backend
        )
    }
}

/// Write-ahead cache of NLI responses.
pub struct NliCache {
    file: JsonlFile,
    entries: Mutex<Vec<NliCacheEntry>>,
    index: Mutex<HashMap<String, usize>>,
    corrupt: Vec<CorruptLine>,
}

impl NliCache {
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn open(path: &Path) -> Result<Self> {
        let (entries, corrupt) = JsonlFile::read_lines::<NliCacheEntry>(path)?;
        let mut index = HashMap::new();
        for (i, entry) in entries.iter().enumerate() {
            index.entry(entry.key()).or_insert(i);
        }
        Ok(Self {
            file: JsonlFile {
                path: path.to_path_buf(),
                writer: Mutex::new(None),
            },
            entries: Mutex::new(entries),
            index: Mutex::new(index),
            corrupt,
        })
    }

    pub fn len(&self) -> usize {
        self.entries.lock().unwrap().len()
    }

    pub fn corrupt_lines(&self) -> &[CorruptLine] {
        &self.corrupt
    }

    fn lookup(&self, key: &str) -> Option<NliResult> {
        let index = self.index.lock().unwrap();
        let entries = self.entries.lock().unwrap();
        index.get(key).map(|&i| {
            let e = &entries[i];
            NliResult {
                entail: e.entail,
                neutral: e.neutral,
                contradict: e.contradict,
            }
        })
    }

    fn append(&self, entry: NliCacheEntry) -> Result<()> {
        let line = serde_json::to_string(&entry).expect("cache entries serialize");
        self.file.append_line(&line)?;
        let mut entries = self.entries.lock().unwrap();
        let mut index = self.index.lock().unwrap();
        let key = entry.key();
        entries.push(entry);
        index.entry(key).or_insert(entries.len() - 1);
        Ok(())
    }
}

/// Entailment backend wrapper that serves hits from an [`NliCache`] and
/// writes misses through before returning them.
pub struct CachedEntailmentBackend {
    inner: Arc<dyn EntailmentBackend>,
    cache: Arc<NliCache>,
}

impl CachedEntailmentBackend {
    pub fn new(inner: Arc<dyn EntailmentBackend>, cache: Arc<NliCache>) -> Self {
        Self { inner, cache }
    }
}

impl EntailmentBackend for CachedEntailmentBackend {
    fn entailment_probs(&self, premise: &str, hypothesis: &str) -> Result<NliResult> {
        let premise_fp = crate::pipeline::prompt_fingerprint(premise);
        let hypothesis_fp = crate::pipeline::prompt_fingerprint(hypothesis);
        let backend = self.inner.identity();
        let key = format!("{premise_fp}\u{1}{hypothesis_fp}\u{1}{backend}");
        if let Some(hit) = self.cache.lookup(&key) {
            return Ok(hit);
        }
        let result = self.inner.entailment_probs(premise, hypothesis)?;
        self.cache.append(NliCacheEntry {
            premise_fingerprint: premise_fp,
            hypothesis_fingerprint: hypothesis_fp,
            backend,
            entail: result.entail,
            neutral: result.neutral,
            contradict: result.contradict,
            timestamp: now_epoch_secs(),
        })?;
        Ok(result)
    }

    fn identity(&self) -> String {
        self.inner.identity()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backends::mock::EqualityNli;
    use tempfile::tempdir;

    fn entry(record_id: &str, answers: Vec<&str>) -> SampleCacheEntry {
        SampleCacheEntry::new(
            record_id,
            Condition::WithContext,
            "fp",
            &DecodingParams::default(),
            answers.into_iter().map(String::from).collect(),
            "mock:test",
        )
    }

    #[test]
    fn append_then_lookup_round_trips() {
        let dir = tempdir().unwrap();
        let cache = SampleCache::open(&dir.path().join(SAMPLES_FILE)).unwrap();
        cache.append(entry("r1", vec!["A", "B"])).unwrap();
        let hit = cache
            .lookup("r1", Condition::WithContext, "fp", &DecodingParams::default(), "mock:test")
            .unwrap();
        assert_eq!(hit, vec!["A", "B"]);
    }

    #[test]
    fn absent_key_returns_none() {
        let dir = tempdir().unwrap();
        let cache = SampleCache::open(&dir.path().join(SAMPLES_FILE)).unwrap();
        assert!(cache
            .lookup("missing", Condition::WithContext, "fp", &DecodingParams::default(), "b")
            .is_none());
    }

    #[test]
    fn first_matching_entry_wins() {
        let dir = tempdir().unwrap();
        let cache = SampleCache::open(&dir.path().join(SAMPLES_FILE)).unwrap();
        cache.append(entry("r1", vec!["first"])).unwrap();
        cache.append(entry("r1", vec!["second"])).unwrap();
        let hit = cache
            .lookup("r1", Condition::WithContext, "fp", &DecodingParams::default(), "mock:test")
            .unwrap();
        assert_eq!(hit, vec!["first"]);
    }

    #[test]
    fn reopened_cache_serves_previous_entries() {
        let dir = tempdir().unwrap();
        let path = dir.path().join(SAMPLES_FILE);
        {
            let cache = SampleCache::open(&path).unwrap();
            cache.append(entry("r1", vec!["A"])).unwrap();
        }
        let cache = SampleCache::open(&path).unwrap();
        assert_eq!(cache.len(), 1);
        let hit = cache
            .lookup("r1", Condition::WithContext, "fp", &DecodingParams::default(), "mock:test")
            .unwrap();
        assert_eq!(hit, vec!["A"]);
    }

    #[test]
    fn corrupt_line_reported_rest_readable() {
        let dir = tempdir().unwrap();
        let path = dir.path().join(SAMPLES_FILE);
        {
            let cache = SampleCache::open(&path).unwrap();
            cache.append(entry("r1", vec!["A"])).unwrap();
            cache.append(entry("r2", vec!["B"])).unwrap();
        }
        // Corrupt the middle by inserting garbage between valid lines.
        let text = std::fs::read_to_string(&path).unwrap();
        let mut lines: Vec<&str> = text.lines().collect();
        lines.insert(1, "{{{ not json");
        std::fs::write(&path, lines.join("\n")).unwrap();

        let cache = SampleCache::open(&path).unwrap();
        assert_eq!(cache.len(), 2);
        assert_eq!(cache.corrupt_lines().len(), 1);
        assert_eq!(cache.corrupt_lines()[0].line, 2);
        assert!(cache
            .lookup("r2", Condition::WithContext, "fp", &DecodingParams::default(), "mock:test")
            .is_some());
    }

    #[test]
    fn differing_decoding_params_miss() {
        let dir = tempdir().unwrap();
        let cache = SampleCache::open(&dir.path().join(SAMPLES_FILE)).unwrap();
        cache.append(entry("r1", vec!["A"])).unwrap();
        let other = DecodingParams {
            temperature: 0.7,
            ..DecodingParams::default()
        };
        assert!(cache
            .lookup("r1", Condition::WithContext, "fp", &other, "mock:test")
            .is_none());
    }

    #[test]
    fn nli_cache_serves_hits_without_backend_calls() {
        let dir = tempdir().unwrap();
        let nli_cache = Arc::new(NliCache::open(&dir.path().join(NLI_FILE)).unwrap());
        let inner = Arc::new(EqualityNli::new());
        let cached = CachedEntailmentBackend::new(inner.clone(), nli_cache.clone());

        let first = cached.entailment_probs("a", "a").unwrap();
        assert_eq!(inner.calls(), 1);
        let second = cached.entailment_probs("a", "a").unwrap();
        assert_eq!(inner.calls(), 1, "second call must hit the cache");
        assert_eq!(first, second);
        assert_eq!(nli_cache.len(), 1);
    }

    #[test]
    fn cache_entry_round_trips_through_serde() {
        let e = entry("id-1", vec!["x", "y"]);
        let line = serde_json::to_string(&e).unwrap();
        let back: SampleCacheEntry = serde_json::from_str(&line).unwrap();
        assert_eq!(e, back);
    }
}
