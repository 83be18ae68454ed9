//! Append-only cache store with a latest-wins index per (library, link).
//!
//! Layout: `<root>/<library>/entries.jsonl` holds the published records;
//! `<root>/<library>/provenance.jsonl` holds one line per entry line, in the
//! same order, with what staleness checks and audits need. One writer at a
//! time; readers see the index as of the last completed write.

use std::collections::BTreeMap;
use std::fs::{self, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::{Mutex, RwLock};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use super::{check_staleness, CacheEntry, CacheError, Staleness};
use crate::corpus::Corpus;

pub const ENTRIES_FILE: &str = "entries.jsonl";
pub const PROVENANCE_FILE: &str = "provenance.jsonl";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub link: String,
    pub time: DateTime<Utc>,
    pub source_hash: String,
}

type Index = BTreeMap<String, BTreeMap<String, CacheEntry>>;

#[derive(Debug, Default)]
pub struct CacheStore {
    root: Option<PathBuf>,
    index: RwLock<Index>,
    writer: Mutex<()>,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CacheError + '_ {
    move |source| CacheError::Io { path: path.display().to_string(), source }
}

fn valid_library(name: &str) -> Result<(), CacheError> {
    let ok = !name.is_empty()
        && name != "."
        && name != ".."
        && name.chars().all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.'));
    if ok {
        Ok(())
    } else {
        Err(CacheError::InvalidLibrary(name.to_string()))
    }
}

fn read_lines<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>, CacheError> {
    if !path.exists() {
        return Ok(Vec::new());
    }
    let file = fs::File::open(path).map_err(io_err(path))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        let value = serde_json::from_str(&line).map_err(|e| CacheError::Corrupt {
            path: path.display().to_string(),
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push(value);
    }
    Ok(out)
}

impl CacheStore {
    /// A store that keeps nothing on disk.
    pub fn in_memory() -> CacheStore {
        CacheStore::default()
    }

    /// Open or create a store rooted at `root`, replaying every log.
    pub fn open(root: impl Into<PathBuf>) -> Result<CacheStore, CacheError> {
        let root = root.into();
        fs::create_dir_all(&root).map_err(io_err(&root))?;
        let mut index = Index::new();
        let mut dirs: Vec<_> = fs::read_dir(&root)
            .map_err(io_err(&root))?
            .filter_map(|e| e.ok())
            .filter(|e| e.path().is_dir())
            .collect();
        dirs.sort_by_key(|e| e.file_name());
        for dir in dirs {
            let library = dir.file_name().to_string_lossy().into_owned();
            if valid_library(&library).is_err() {
                continue;
            }
            let entries_path = dir.path().join(ENTRIES_FILE);
            let entries: Vec<CacheEntry> = read_lines(&entries_path)?;
            let provenance: Vec<Provenance> = read_lines(&dir.path().join(PROVENANCE_FILE))?;
            if entries.len() != provenance.len() {
                return Err(CacheError::Corrupt {
                    path: entries_path.display().to_string(),
                    line: entries.len().min(provenance.len()) + 1,
                    message: format!("{} entries but {} provenance records", entries.len(), provenance.len()),
                });
            }
            let lib = index.entry(library.clone()).or_default();
            for (i, (mut entry, prov)) in entries.into_iter().zip(provenance).enumerate() {
                if prov.link != entry.link || prov.time != entry.time {
                    return Err(CacheError::Corrupt {
                        path: entries_path.display().to_string(),
                        line: i + 1,
                        message: "provenance does not match entry".into(),
                    });
                }
                entry.library = library.clone();
                entry.source_hash = prov.source_hash;
                lib.insert(entry.link.clone(), entry);
            }
        }
        Ok(CacheStore { root: Some(root), index: RwLock::new(index), writer: Mutex::new(()) })
    }

    pub fn root(&self) -> Option<&Path> {
        self.root.as_deref()
    }

    /// Append an entry; it supersedes earlier entries for its link. An entry
    /// identical to the current one is not appended again. Returns whether
    /// the log grew.
    pub fn put(&self, entry: CacheEntry) -> Result<bool, CacheError> {
        valid_library(&entry.library)?;
        let _guard = self.writer.lock().expect("cache writer poisoned");
        if self.get(&entry.library, &entry.link).as_ref() == Some(&entry) {
            return Ok(false);
        }
        if let Some(root) = &self.root {
            let dir = root.join(&entry.library);
            fs::create_dir_all(&dir).map_err(io_err(&dir))?;
            let prov = Provenance { link: entry.link.clone(), time: entry.time, source_hash: entry.source_hash.clone() };
            append(&dir.join(ENTRIES_FILE), &entry)?;
            append(&dir.join(PROVENANCE_FILE), &prov)?;
        }
        let mut index = self.index.write().expect("cache index poisoned");
        index.entry(entry.library.clone()).or_default().insert(entry.link.clone(), entry);
        Ok(true)
    }

    pub fn get(&self, library: &str, link: &str) -> Option<CacheEntry> {
        self.index.read().expect("cache index poisoned").get(library)?.get(link).cloned()
    }

    /// Current entries of a library, ordered by link.
    pub fn entries(&self, library: &str) -> Vec<CacheEntry> {
        let index = self.index.read().expect("cache index poisoned");
        index.get(library).map(|l| l.values().cloned().collect()).unwrap_or_default()
    }

    pub fn libraries(&self) -> Vec<String> {
        self.index.read().expect("cache index poisoned").keys().cloned().collect()
    }

    pub fn len(&self) -> usize {
        self.index.read().expect("cache index poisoned").values().map(BTreeMap::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Rectified content for `(url, library)`, else the corpus original.
    pub fn serve(&self, corpus: &Corpus, url: &str, library: &str) -> Result<String, CacheError> {
        if let Some(entry) = self.get(library, url) {
            return Ok(entry.content);
        }
        corpus.page(url).map(|p| p.raw_content.clone()).ok_or_else(|| CacheError::UnknownUrl(url.to_string()))
    }

    /// Entries whose page in `live` no longer matches the repaired version.
    /// Entries for pages absent from `live` are left alone.
    pub fn stale_entries(&self, live: &Corpus) -> Vec<CacheEntry> {
        let index = self.index.read().expect("cache index poisoned");
        index
            .values()
            .flat_map(BTreeMap::values)
            .filter(|e| live.page(&e.link).is_some_and(|p| check_staleness(e, p) == Staleness::Stale))
            .cloned()
            .collect()
    }
}

fn append<T: Serialize>(path: &Path, record: &T) -> Result<(), CacheError> {
    let mut line = serde_json::to_string(record).expect("cache records serialize");
    line.push('\n');
    let mut file = OpenOptions::new().create(true).append(true).open(path).map_err(io_err(path))?;
    file.write_all(line.as_bytes()).map_err(io_err(path))
}
