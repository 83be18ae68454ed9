//! Repair phase and the rectified-content store.
//!
//! Implementation-incorrect pages get their offending snippet replaced by
//! the task's verified canonical solution. Misaligned pages keep their code
//! and gain a metadata comment block directly above it. Entries live in an
//! append-only log per library; the newest entry per link wins.

mod metadata;
mod store;

use std::collections::BTreeSet;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Corpus, CorpusError, Setting, Task, WebPageRecord};
use crate::debugging::{adapt_to_entry_point, EipClass, EipDiagnosis};
use crate::extraction::{content_hash, escape_markup, CodeSnippet, SnippetOrigin};
use crate::lang::SubjectLanguage;
use crate::oracle::{Evaluator, OracleError};
use crate::sii::{task_verdicts, Outcome, SiiError};

pub use metadata::{parse_metadata, MetadataBlock, METADATA_BEGIN, METADATA_END};
pub use store::{CacheStore, Provenance};

pub const DEFAULT_LIBRARY: &str = "default";

#[derive(Debug, Error)]
pub enum CacheError {
    #[error("cache I/O on {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{path}:{line}: {message}")]
    Corrupt { path: String, line: usize, message: String },
    #[error("invalid cache library name {0:?}")]
    InvalidLibrary(String),
    #[error("canonical solution of {task_id} fails the oracle: {detail}")]
    CanonicalFails { task_id: String, detail: String },
    #[error("page {url} changed since diagnosis; refetch and re-diagnose")]
    StalePage { url: String },
    #[error("diagnosis of {url} has no use conditions")]
    MissingUseConditions { url: String },
    #[error("diagnosis of {url} is {found:?}, expected {expected:?}")]
    WrongClass { url: String, expected: EipClass, found: EipClass },
    #[error("diagnosis is for {diag_url}, page is {page_url}")]
    PageMismatch { diag_url: String, page_url: String },
    #[error("repair time {time} precedes page fetch {fetched_at}")]
    TimeBeforeFetch { time: DateTime<Utc>, fetched_at: DateTime<Utc> },
    #[error("url {0} is neither cached nor in the corpus")]
    UnknownUrl(String),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error(transparent)]
    Sii(#[from] SiiError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DiagnosisTag {
    #[serde(rename = "Implementation Incorrectness")]
    ImplementationIncorrectness,
    #[serde(rename = "Specification Misalignment")]
    SpecificationMisalignment,
}

/// A rectified page. Serializes to exactly the published record fields;
/// `library` and `source_hash` live in the store layout and sidecar.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CacheEntry {
    pub title: String,
    pub link: String,
    pub snippet: String,
    pub diagnosis: DiagnosisTag,
    pub time: DateTime<Utc>,
    pub content: String,
    pub source_fetched_at: DateTime<Utc>,
    #[serde(skip)]
    pub library: String,
    /// Hash of the page content that was repaired.
    #[serde(skip)]
    pub source_hash: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Staleness {
    Fresh,
    Stale,
}

pub fn check_staleness(entry: &CacheEntry, live_page: &WebPageRecord) -> Staleness {
    if content_hash(&live_page.raw_content) == entry.source_hash {
        Staleness::Fresh
    } else {
        Staleness::Stale
    }
}

/// The diagnosed snippet, checked against the page bytes it was taken from.
fn located_snippet(diag: &EipDiagnosis, page: &WebPageRecord) -> Result<CodeSnippet, CacheError> {
    if diag.url != page.url {
        return Err(CacheError::PageMismatch { diag_url: diag.url.clone(), page_url: page.url.clone() });
    }
    let (s, e) = diag.snippet_range;
    let text = page.raw_content.get(s..e).filter(|t| content_hash(t) == diag.snippet_hash);
    let Some(text) = text else {
        return Err(CacheError::StalePage { url: page.url.clone() });
    };
    let origin = page
        .snippets
        .iter()
        .find(|sn| sn.char_range == diag.snippet_range)
        .map(|sn| sn.origin)
        .unwrap_or(if text.contains('<') || text.contains('&') { SnippetOrigin::Markup } else { SnippetOrigin::Fence });
    Ok(CodeSnippet {
        snippet_id: diag.snippet_id.clone(),
        url: page.url.clone(),
        text: text.to_string(),
        language_hint: None,
        char_range: diag.snippet_range,
        origin,
    })
}

fn check_class(diag: &EipDiagnosis, expected: EipClass) -> Result<(), CacheError> {
    if diag.class != expected {
        return Err(CacheError::WrongClass { url: diag.url.clone(), expected, found: diag.class });
    }
    Ok(())
}

fn check_time(page: &WebPageRecord, time: DateTime<Utc>) -> Result<(), CacheError> {
    if time < page.fetched_at {
        return Err(CacheError::TimeBeforeFetch { time, fetched_at: page.fetched_at });
    }
    Ok(())
}

fn encode_for(origin: SnippetOrigin, text: &str) -> String {
    match origin {
        SnippetOrigin::Markup => escape_markup(text),
        SnippetOrigin::Fence => text.to_string(),
    }
}

/// Replace the offending snippet with the verified canonical solution.
/// Only the snippet's byte range changes. Not persisted; see
/// [`CacheStore::put`].
pub fn repair_implementation(
    diag: &EipDiagnosis,
    page: &WebPageRecord,
    task: &Task,
    oracle: &dyn Evaluator,
    time: DateTime<Utc>,
) -> Result<CacheEntry, CacheError> {
    check_class(diag, EipClass::ImplIncorrect)?;
    check_time(page, time)?;
    let snippet = located_snippet(diag, page)?;
    let verdict = oracle.evaluate(&adapt_to_entry_point(&task.canonical_solution, task), task)?;
    if !verdict.passed() {
        return Err(CacheError::CanonicalFails {
            task_id: task.task_id.clone(),
            detail: verdict.first_failure_detail().unwrap_or_default().to_string(),
        });
    }

    // keep the region's framing newlines so the surrounding markup is untouched
    let body = task.canonical_solution.trim_matches('\n');
    let lead = if snippet.text.starts_with('\n') { "\n" } else { "" };
    let trail = if snippet.text.ends_with('\n') { "\n" } else { "" };
    let replacement = format!("{lead}{}{trail}", encode_for(snippet.origin, body));
    let (s, e) = snippet.char_range;
    let content = format!("{}{}{}", &page.raw_content[..s], replacement, &page.raw_content[e..]);

    Ok(CacheEntry {
        title: page.title.clone(),
        link: page.url.clone(),
        snippet: snippet.code(),
        diagnosis: DiagnosisTag::ImplementationIncorrectness,
        time,
        content,
        source_fetched_at: page.fetched_at,
        library: task.library().to_string(),
        source_hash: content_hash(&page.raw_content),
    })
}

/// Insert a metadata block immediately above the misaligned snippet's code.
/// Insert-only: removing the block yields the original content.
pub fn annotate_misalignment(
    diag: &EipDiagnosis,
    page: &WebPageRecord,
    library: &str,
    language: SubjectLanguage,
    time: DateTime<Utc>,
) -> Result<CacheEntry, CacheError> {
    check_class(diag, EipClass::SpecMisalignment)?;
    if diag.alignment.use_conditions.trim().is_empty() {
        return Err(CacheError::MissingUseConditions { url: diag.url.clone() });
    }
    check_time(page, time)?;
    let snippet = located_snippet(diag, page)?;
    let code = snippet.code();
    let block = MetadataBlock::describe(&page.title, &diag.alignment, &code);

    let indent: String = code
        .lines()
        .find(|l| !l.trim().is_empty())
        .map(|l| l.chars().take_while(|c| c.is_whitespace()).collect())
        .unwrap_or_default();
    let rendered = encode_for(snippet.origin, &block.render(language, &indent));
    let at = snippet.char_range.0 + usize::from(snippet.text.starts_with('\n'));
    let content = format!("{}{}{}", &page.raw_content[..at], rendered, &page.raw_content[at..]);

    Ok(CacheEntry {
        title: page.title.clone(),
        link: page.url.clone(),
        snippet: code,
        diagnosis: DiagnosisTag::SpecificationMisalignment,
        time,
        content,
        source_fetched_at: page.fetched_at,
        library: library.to_string(),
        source_hash: content_hash(&page.raw_content),
    })
}

/// A page as a generator sees it after serving.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ServedPage {
    pub url: String,
    pub title: String,
    pub content: String,
}

/// Produces a solution for a task from the pages it retrieved.
pub trait Regenerator: Sync {
    fn regenerate(&self, task: &Task, pages: &[ServedPage]) -> String;
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuditRecord {
    pub task_id: String,
    pub before: Outcome,
    pub after: Outcome,
}

impl AuditRecord {
    pub fn is_regression(&self) -> bool {
        self.before == Outcome::Correct && self.after == Outcome::Incorrect
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegressionReport {
    pub link: String,
    pub library: String,
    pub tasks: Vec<AuditRecord>,
    pub regressions: usize,
}

/// Regenerate every task of the entry's library that retrieved the entry's
/// link and was correct in the web-augmented setting, serving `entry` for
/// its link and the store for all other pages.
pub fn audit_side_effects(
    entry: &CacheEntry,
    store: &CacheStore,
    corpus: &Corpus,
    regenerator: &dyn Regenerator,
    oracle: &dyn Evaluator,
) -> Result<RegressionReport, CacheError> {
    let web: Vec<_> = corpus.generations().iter().filter(|g| g.setting == Setting::WebAugmented).cloned().collect();
    let correct: BTreeSet<String> = task_verdicts(&web)?
        .into_iter()
        .filter(|v| v.outcome == Outcome::Correct)
        .map(|v| v.task_id)
        .collect();

    let mut tasks = Vec::new();
    for task_id in &correct {
        let task = corpus.task(task_id).expect("validated corpus");
        if task.library() != entry.library {
            continue;
        }
        let Some(generation) = web
            .iter()
            .filter(|g| &g.task_id == task_id && g.retrieved_urls.contains(&entry.link))
            .min_by_key(|g| g.run_index)
        else {
            continue;
        };
        let pages = generation
            .retrieved_urls
            .iter()
            .map(|url| {
                let page = corpus.page(url).ok_or_else(|| CacheError::UnknownUrl(url.clone()))?;
                let content =
                    if *url == entry.link { entry.content.clone() } else { store.serve(corpus, url, &entry.library)? };
                Ok(ServedPage { url: url.clone(), title: page.title.clone(), content })
            })
            .collect::<Result<Vec<_>, CacheError>>()?;
        let code = regenerator.regenerate(task, &pages);
        let after = if oracle.evaluate(&code, task)?.passed() { Outcome::Correct } else { Outcome::Incorrect };
        tasks.push(AuditRecord { task_id: task_id.clone(), before: Outcome::Correct, after });
    }
    let regressions = tasks.iter().filter(|t| t.is_regression()).count();
    Ok(RegressionReport { link: entry.link.clone(), library: entry.library.clone(), tasks, regressions })
}
