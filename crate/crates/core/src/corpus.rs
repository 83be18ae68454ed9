//! Tasks, fetched pages and generation records, with JSON Lines persistence.
//!
//! A corpus directory holds `corpus.json` (manifest), `tasks.jsonl`,
//! `pages.jsonl` and `generations.jsonl`. A loaded [`Corpus`] is validated
//! and immutable; every cross-reference resolves.

use std::collections::{HashMap, HashSet};
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::extraction::{extract_snippets, CodeSnippet};
use crate::lang::SubjectLanguage;
use crate::oracle::{Evaluator, FailureClass, OracleError};

pub const SCHEMA_VERSION: u32 = 1;

pub const MANIFEST_FILE: &str = "corpus.json";
pub const TASKS_FILE: &str = "tasks.jsonl";
pub const PAGES_FILE: &str = "pages.jsonl";
pub const GENERATIONS_FILE: &str = "generations.jsonl";

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: malformed record: {message}")]
    Malformed { path: PathBuf, line: usize, message: String },
    #[error("duplicate task_id {0:?}")]
    DuplicateTask(String),
    #[error("duplicate page url {0:?}")]
    DuplicatePage(String),
    #[error("generation references unknown task_id {0:?}")]
    DanglingTask(String),
    #[error("generation for task {task_id:?} references unknown url {url:?}")]
    DanglingUrl { task_id: String, url: String },
    #[error("invalid record: {0}")]
    Invalid(String),
    #[error("unsupported schema_version {0}")]
    SchemaVersion(u32),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Comparison {
    #[default]
    Equality,
    Approx { epsilon: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestCase {
    /// A call expression, e.g. `add(1, 2)`.
    pub input_literal: String,
    pub expected_literal: String,
    #[serde(default)]
    pub comparison: Comparison,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Task {
    pub task_id: String,
    pub description: String,
    pub canonical_solution: String,
    pub test_suite: Vec<TestCase>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub domain_tag: Option<String>,
}

impl Task {
    /// Function name and arity the tests call, taken from the first test.
    pub fn entry_point(&self) -> Option<(String, usize)> {
        self.test_suite.first().and_then(|t| crate::lang::call_target(&t.input_literal))
    }

    /// Cache-library partition key.
    pub fn library(&self) -> &str {
        self.domain_tag.as_deref().unwrap_or(crate::cache::DEFAULT_LIBRARY)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WebPageRecord {
    pub url: String,
    pub title: String,
    pub fetched_at: DateTime<Utc>,
    pub raw_content: String,
    #[serde(default)]
    pub snippets: Vec<CodeSnippet>,
}

impl WebPageRecord {
    /// Fill `snippets` from `raw_content`.
    pub fn extract(&mut self) {
        self.snippets = extract_snippets(&self.url, &self.raw_content);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Setting {
    Baseline,
    WebAugmented,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    Fail,
    NotYetEvaluated,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenerationRecord {
    pub task_id: String,
    pub setting: Setting,
    pub run_index: u32,
    pub code: String,
    #[serde(default)]
    pub retrieved_urls: Vec<String>,
    pub verdict: Verdict,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub subject_language: SubjectLanguage,
    pub schema_version: u32,
}

impl Default for Manifest {
    fn default() -> Self {
        Manifest { subject_language: SubjectLanguage::Python, schema_version: SCHEMA_VERSION }
    }
}

#[derive(Debug, Clone, Default)]
pub struct Corpus {
    manifest: Manifest,
    tasks: Vec<Task>,
    pages: Vec<WebPageRecord>,
    generations: Vec<GenerationRecord>,
    task_index: HashMap<String, usize>,
    page_index: HashMap<String, usize>,
}

impl PartialEq for Corpus {
    fn eq(&self, other: &Self) -> bool {
        self.manifest == other.manifest
            && self.tasks == other.tasks
            && self.pages == other.pages
            && self.generations == other.generations
    }
}

impl Corpus {
    /// Validate and index. Fails on the first violated invariant.
    pub fn new(
        manifest: Manifest,
        tasks: Vec<Task>,
        pages: Vec<WebPageRecord>,
        generations: Vec<GenerationRecord>,
    ) -> Result<Corpus, CorpusError> {
        if manifest.schema_version != SCHEMA_VERSION {
            return Err(CorpusError::SchemaVersion(manifest.schema_version));
        }
        let mut task_index = HashMap::with_capacity(tasks.len());
        for (i, t) in tasks.iter().enumerate() {
            validate_task(t)?;
            if task_index.insert(t.task_id.clone(), i).is_some() {
                return Err(CorpusError::DuplicateTask(t.task_id.clone()));
            }
        }
        let now = Utc::now();
        let mut page_index = HashMap::with_capacity(pages.len());
        for (i, p) in pages.iter().enumerate() {
            validate_page(p, now)?;
            if page_index.insert(p.url.clone(), i).is_some() {
                return Err(CorpusError::DuplicatePage(p.url.clone()));
            }
        }
        let mut runs = HashSet::new();
        for g in &generations {
            if !task_index.contains_key(&g.task_id) {
                return Err(CorpusError::DanglingTask(g.task_id.clone()));
            }
            if g.setting == Setting::Baseline && !g.retrieved_urls.is_empty() {
                return Err(CorpusError::Invalid(format!(
                    "baseline generation {} run {} has retrieved_urls",
                    g.task_id, g.run_index
                )));
            }
            if !runs.insert((g.task_id.as_str(), g.setting, g.run_index)) {
                return Err(CorpusError::Invalid(format!(
                    "duplicate run_index {} for task {} ({:?})",
                    g.run_index, g.task_id, g.setting
                )));
            }
            if let Some(url) = g.retrieved_urls.iter().find(|u| !page_index.contains_key(*u)) {
                return Err(CorpusError::DanglingUrl { task_id: g.task_id.clone(), url: url.clone() });
            }
        }
        Ok(Corpus { manifest, tasks, pages, generations, task_index, page_index })
    }

    pub fn manifest(&self) -> Manifest {
        self.manifest
    }

    pub fn tasks(&self) -> &[Task] {
        &self.tasks
    }

    pub fn pages(&self) -> &[WebPageRecord] {
        &self.pages
    }

    pub fn generations(&self) -> &[GenerationRecord] {
        &self.generations
    }

    pub fn task(&self, task_id: &str) -> Option<&Task> {
        self.task_index.get(task_id).map(|&i| &self.tasks[i])
    }

    pub fn page(&self, url: &str) -> Option<&WebPageRecord> {
        self.page_index.get(url).map(|&i| &self.pages[i])
    }

    /// A new corpus with the given generation records.
    pub fn with_generations(&self, generations: Vec<GenerationRecord>) -> Result<Corpus, CorpusError> {
        Corpus::new(self.manifest, self.tasks.clone(), self.pages.clone(), generations)
    }

    /// A new corpus whose pages have their snippets extracted.
    pub fn extracted(&self) -> Corpus {
        let mut out = self.clone();
        out.pages.par_iter_mut().for_each(WebPageRecord::extract);
        out
    }

    /// Latest `fetched_at` over all pages.
    pub fn newest_fetch(&self) -> Option<DateTime<Utc>> {
        self.pages.iter().map(|p| p.fetched_at).max()
    }
}

fn validate_task(t: &Task) -> Result<(), CorpusError> {
    if t.task_id.trim().is_empty() {
        return Err(CorpusError::Invalid("empty task_id".into()));
    }
    if t.test_suite.is_empty() {
        return Err(CorpusError::Invalid(format!("task {} has an empty test_suite", t.task_id)));
    }
    for tc in &t.test_suite {
        if let Comparison::Approx { epsilon } = tc.comparison {
            if !(epsilon > 0.0 && epsilon.is_finite()) {
                return Err(CorpusError::Invalid(format!(
                    "task {} has approx comparison with epsilon {epsilon}",
                    t.task_id
                )));
            }
        }
    }
    Ok(())
}

fn validate_page(p: &WebPageRecord, now: DateTime<Utc>) -> Result<(), CorpusError> {
    match url::Url::parse(&p.url) {
        Ok(u) if u.has_host() || u.scheme() == "file" => {}
        _ => return Err(CorpusError::Invalid(format!("page url {:?} is not an absolute URL", p.url))),
    }
    if p.fetched_at > now {
        return Err(CorpusError::Invalid(format!("page {} fetched_at is in the future", p.url)));
    }
    Ok(())
}

pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, CorpusError> {
    let file = fs::File::open(path).map_err(|source| CorpusError::Io { path: path.into(), source })?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|source| CorpusError::Io { path: path.into(), source })?;
        if line.trim().is_empty() {
            continue;
        }
        let rec = serde_json::from_str(&line).map_err(|e| CorpusError::Malformed {
            path: path.into(),
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push(rec);
    }
    Ok(out)
}

pub fn write_jsonl<'a, T: Serialize + 'a>(path: &Path, records: impl IntoIterator<Item = &'a T>) -> Result<(), CorpusError> {
    let io = |source| CorpusError::Io { path: path.into(), source };
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(io)?;
    }
    let mut w = BufWriter::new(fs::File::create(path).map_err(io)?);
    for r in records {
        serde_json::to_writer(&mut w, r).map_err(|e| io(e.into()))?;
        w.write_all(b"\n").map_err(io)?;
    }
    w.flush().map_err(io)
}

/// Load and validate a corpus from its three record files. The manifest
/// defaults when absent.
pub fn load_corpus(tasks_path: &Path, pages_path: &Path, generations_path: &Path) -> Result<Corpus, CorpusError> {
    let manifest_path = tasks_path.with_file_name(MANIFEST_FILE);
    let manifest = if manifest_path.exists() {
        let text = fs::read_to_string(&manifest_path).map_err(|source| CorpusError::Io { path: manifest_path.clone(), source })?;
        serde_json::from_str(&text).map_err(|e| CorpusError::Malformed { path: manifest_path, line: 1, message: e.to_string() })?
    } else {
        Manifest::default()
    };
    Corpus::new(manifest, read_jsonl(tasks_path)?, read_jsonl(pages_path)?, read_jsonl(generations_path)?)
}

/// Load from a directory laid out by [`save_corpus`]. A missing
/// generations file reads as empty.
pub fn load_corpus_dir(dir: &Path) -> Result<Corpus, CorpusError> {
    let gens = dir.join(GENERATIONS_FILE);
    if !gens.exists() {
        fs::write(&gens, "").map_err(|source| CorpusError::Io { path: gens.clone(), source })?;
    }
    load_corpus(&dir.join(TASKS_FILE), &dir.join(PAGES_FILE), &gens)
}

pub fn save_corpus(corpus: &Corpus, dir: &Path) -> Result<(), CorpusError> {
    let io = |source| CorpusError::Io { path: dir.into(), source };
    fs::create_dir_all(dir).map_err(io)?;
    let manifest = serde_json::to_string_pretty(&corpus.manifest).expect("manifest serializes");
    fs::write(dir.join(MANIFEST_FILE), manifest + "\n").map_err(io)?;
    write_jsonl(&dir.join(TASKS_FILE), &corpus.tasks)?;
    write_jsonl(&dir.join(PAGES_FILE), &corpus.pages)?;
    write_jsonl(&dir.join(GENERATIONS_FILE), &corpus.generations)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CanonicalFailure {
    pub task_id: String,
    pub failure: FailureClass,
    pub detail: String,
}

/// Tasks whose canonical solution fails its own test suite.
pub fn verify_canonical(corpus: &Corpus, oracle: &dyn Evaluator) -> Result<Vec<CanonicalFailure>, OracleError> {
    let results: Vec<Result<Option<CanonicalFailure>, OracleError>> = corpus
        .tasks
        .par_iter()
        .map(|t| {
            let r = oracle.evaluate(&t.canonical_solution, t)?;
            Ok(r.failure_class().map(|failure| CanonicalFailure {
                task_id: t.task_id.clone(),
                failure,
                detail: r.first_failure_detail().unwrap_or_default(),
            }))
        })
        .collect();
    let mut out = Vec::new();
    for r in results {
        out.extend(r?);
    }
    Ok(out)
}
