//! Debugging phase: which retrieved pages did the erroneous output use, and
//! why is each used page harmful.
//!
//! Utilization is decided per page from its best snippet (combined
//! similarity) and its best single lines (token LCS ratio). Only utilized
//! pages are diagnosed. Diagnosis runs the alignment check first; the
//! correctness check runs only for aligned pages.

use chrono::{DateTime, Utc};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::corpus::{Corpus, Task, WebPageRecord};
use crate::extraction::{code_lines, content_hash, prose_window, split_lines, CodeLine, CodeSnippet};
use crate::gateway::{AgentRequest, Gateway, GatewayError, Message};
use crate::lang::{dedent, rebind_entry_point};
use crate::oracle::{Evaluator, FailureClass, OracleError};
use crate::sii::SiiCase;
use crate::similarity::{lcs_ratio, CodeProfile, SimilarityConfig, SimilarityError, SimilarityVector, TokenStream, Weights};

pub const SUMMARY_SCHEMA: &str = "page_requirements.v1";
pub const ALIGNMENT_SCHEMA: &str = "alignment_verdict.v1";
pub const PROMPT_VERSION: &str = "v1";

const SYSTEM_PROMPT: &str = include_str!("prompts/system.v1.txt");
const SUMMARY_PROMPT: &str = include_str!("prompts/summary.v1.txt");
const ALIGNMENT_PROMPT: &str = include_str!("prompts/alignment.v1.txt");
const RETRY_PROMPT: &str = include_str!("prompts/retry.v1.txt");

#[derive(Debug, Error)]
pub enum DebugError {
    #[error("page {0} is not in the corpus")]
    MissingPage(String),
    #[error("task {0} is not in the corpus")]
    MissingTask(String),
    #[error("{schema_id}: no schema-valid reply after {attempts} attempts: {message}")]
    Schema { schema_id: String, attempts: u32, message: String },
    #[error("inconsistent diagnosis inputs: {0}")]
    Inconsistent(String),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error(transparent)]
    Similarity(#[from] SimilarityError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DebugConfig {
    pub snippet_threshold: f64,
    pub line_threshold: f64,
    /// Lines with fewer significant tokens never trigger line-level matches.
    pub min_line_tokens: usize,
    /// Bytes of page text on each side of a snippet given to the agent.
    pub context_window: usize,
    /// Total attempts per agent stage.
    pub retry_budget: u32,
    pub similarity: SimilarityConfig,
}

impl Default for DebugConfig {
    fn default() -> Self {
        DebugConfig {
            snippet_threshold: 0.60,
            line_threshold: 0.85,
            min_line_tokens: 4,
            context_window: 600,
            retry_budget: 2,
            similarity: SimilarityConfig::default(),
        }
    }
}

impl DebugConfig {
    pub fn validate(&self) -> Result<(), DebugError> {
        self.similarity.validate()?;
        let unit = |x: f64| (0.0..=1.0).contains(&x);
        if !unit(self.snippet_threshold) || !unit(self.line_threshold) {
            return Err(DebugError::Inconsistent("thresholds must lie in [0, 1]".into()));
        }
        if self.retry_budget == 0 {
            return Err(DebugError::Inconsistent("retry_budget must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LineMatch {
    pub line: CodeLine,
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PageUtilization {
    pub url: String,
    pub best: Option<SimilarityVector<f64>>,
    pub best_snippet_id: Option<String>,
    /// Lines at or above the line threshold, best first.
    pub matched_lines: Vec<LineMatch>,
    pub utilized: bool,
}

impl PageUtilization {
    /// Snippet to diagnose: the best snippet when it clears the snippet
    /// threshold, otherwise the owner of the best matching line.
    pub fn diagnosed_snippet(&self, snippet_threshold: f64) -> Option<&str> {
        if !self.utilized {
            return None;
        }
        match (&self.best, &self.best_snippet_id) {
            (Some(v), Some(id)) if v.combined >= snippet_threshold => Some(id),
            _ => self.matched_lines.first().map(|m| m.line.snippet_id.as_str()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UtilizationReport {
    pub task_id: String,
    pub pages: Vec<PageUtilization>,
}

/// Similarity of every retrieved page to the erroneous output.
pub fn detect_utilized_snippets(case: &SiiCase, corpus: &Corpus, cfg: &DebugConfig) -> Result<UtilizationReport, DebugError> {
    let height = cfg.similarity.subtree_height;
    let weights = cfg.similarity.weights;
    let output = CodeProfile::new(&case.erroneous_code, height);
    let output_lines: Vec<Vec<String>> = code_lines(&dedent(&case.erroneous_code))
        .into_iter()
        .map(|(_, l)| TokenStream::from_source(&l).texts().into_iter().map(String::from).collect())
        .collect();

    let mut seen = std::collections::HashSet::new();
    let mut pages = Vec::new();
    for url in case.retrieved_urls.iter().filter(|u| seen.insert(u.as_str())) {
        let page = corpus.page(url).ok_or_else(|| DebugError::MissingPage(url.clone()))?;
        pages.push(page_utilization(page, &output, &output_lines, &weights, cfg)?);
    }
    Ok(UtilizationReport { task_id: case.task_id.clone(), pages })
}

fn page_utilization(
    page: &WebPageRecord,
    output: &CodeProfile,
    output_lines: &[Vec<String>],
    weights: &Weights<f64>,
    cfg: &DebugConfig,
) -> Result<PageUtilization, DebugError> {
    let mut best: Option<(SimilarityVector<f64>, &str)> = None;
    let mut matched = Vec::new();
    for snippet in &page.snippets {
        let profile = CodeProfile::new(&snippet.code(), cfg.similarity.subtree_height);
        let v = profile.compare(output, weights)?;
        if best.as_ref().is_none_or(|(b, _)| v.combined > b.combined) {
            best = Some((v, &snippet.snippet_id));
        }
        for line in split_lines(snippet) {
            let stream = TokenStream::from_source(&line.text);
            let toks = stream.texts();
            if toks.len() < cfg.min_line_tokens {
                continue;
            }
            let ratio = output_lines
                .iter()
                .map(|o| lcs_ratio::<f64>(&toks, &o.iter().map(String::as_str).collect::<Vec<_>>()))
                .fold(0.0, f64::max);
            if ratio >= cfg.line_threshold {
                matched.push(LineMatch { line, ratio });
            }
        }
    }
    // stable: equal ratios keep page order
    matched.sort_by(|a, b| b.ratio.total_cmp(&a.ratio));
    let snippet_hit = best.as_ref().is_some_and(|(v, _)| v.combined >= cfg.snippet_threshold);
    Ok(PageUtilization {
        url: page.url.clone(),
        utilized: snippet_hit || !matched.is_empty(),
        best_snippet_id: best.as_ref().map(|(_, id)| id.to_string()),
        best: best.map(|(v, _)| v),
        matched_lines: matched,
    })
}

/// What the agent sees of a page: the snippet and the text around it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PagePayload {
    pub url: String,
    pub title: String,
    pub text_before: String,
    pub code: String,
    pub text_after: String,
}

impl PagePayload {
    pub fn new(page: &WebPageRecord, snippet: &CodeSnippet, window: usize) -> Self {
        let (text_before, text_after) = prose_window(&page.raw_content, snippet.char_range, window);
        PagePayload { url: page.url.clone(), title: page.title.clone(), text_before, code: snippet.code(), text_after }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskPayload {
    pub task_id: String,
    pub description: String,
    pub canonical_solution: String,
    /// `input == expected` lines.
    pub tests: Vec<String>,
}

impl TaskPayload {
    pub fn new(task: &Task) -> Self {
        TaskPayload {
            task_id: task.task_id.clone(),
            description: task.description.clone(),
            canonical_solution: task.canonical_solution.clone(),
            tests: task.test_suite.iter().map(|t| format!("{} == {}", t.input_literal, t.expected_literal)).collect(),
        }
    }
}

fn with_payload<T: Serialize>(prompt: &str, payload: &T) -> String {
    let json = serde_json::to_string_pretty(payload).expect("payload serializes");
    format!("{}\n```json\n{json}\n```", prompt.trim_end())
}

/// The last fenced JSON block of a message, decoded.
pub fn extract_payload<T: DeserializeOwned>(message: &str) -> Option<T> {
    let start = message.rfind("```json\n")? + "```json\n".len();
    let end = start + message[start..].find("\n```")?;
    serde_json::from_str(&message[start..end]).ok()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AlignmentVerdict {
    pub equivalence: bool,
    pub use_conditions: String,
    pub rationale: String,
    /// Task-independent requirement summary of the page.
    pub page_summary: String,
}

/// Run one agent stage, retrying schema-invalid replies. Returns the
/// conversation extended with the accepted reply.
fn run_stage(
    gateway: &Gateway,
    mut conversation: Vec<Message>,
    schema_id: &str,
    budget: u32,
    extra_check: impl Fn(&Value) -> Result<(), String>,
) -> Result<(Vec<Message>, Value), DebugError> {
    let mut last = String::new();
    for _ in 0..budget {
        let req = AgentRequest::new(conversation.clone(), schema_id)?;
        let (raw, problem) = match gateway.complete(&req) {
            Ok(reply) => {
                let parsed = reply.parsed.expect("gateway returns parsed replies");
                match extra_check(&parsed) {
                    Ok(()) => {
                        conversation.push(Message::assistant(reply.raw_text));
                        return Ok((conversation, parsed));
                    }
                    Err(problem) => (reply.raw_text, problem),
                }
            }
            Err(GatewayError::Validation { raw_text, message, .. }) => (raw_text, message),
            Err(e) => return Err(e.into()),
        };
        conversation.push(Message::assistant(raw));
        conversation.push(Message::user(RETRY_PROMPT.trim_end().replace("{error}", &problem)));
        last = problem;
    }
    Err(DebugError::Schema { schema_id: schema_id.into(), attempts: budget, message: last })
}

/// Two-stage alignment check. Stage one sees only the page, so its
/// summary is identical for every task that retrieves the page.
pub fn check_specification_alignment(
    page: &PagePayload,
    task: &Task,
    gateway: &Gateway,
    retry_budget: u32,
) -> Result<AlignmentVerdict, DebugError> {
    let stage1 = vec![Message::system(SYSTEM_PROMPT.trim_end()), Message::user(with_payload(SUMMARY_PROMPT, page))];
    let (mut conversation, summary) = run_stage(gateway, stage1, SUMMARY_SCHEMA, retry_budget, |_| Ok(()))?;
    conversation.push(Message::user(with_payload(ALIGNMENT_PROMPT, &TaskPayload::new(task))));
    let (_, verdict) = run_stage(gateway, conversation, ALIGNMENT_SCHEMA, retry_budget, |v| {
        let equivalent = v["Equivalence"].as_bool().unwrap_or(true);
        let conditions = v["WebPageProblemUseConditions"].as_str().unwrap_or("");
        if !equivalent && conditions.trim().is_empty() {
            Err("WebPageProblemUseConditions must be non-empty when Equivalence is false".into())
        } else {
            Ok(())
        }
    })?;
    let text = |v: &Value, k: &str| v[k].as_str().unwrap_or_default().to_string();
    Ok(AlignmentVerdict {
        equivalence: verdict["Equivalence"].as_bool().expect("validated"),
        use_conditions: text(&verdict, "WebPageProblemUseConditions"),
        rationale: text(&verdict, "Rationale"),
        page_summary: text(&summary, "WebPageProblem"),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorrectnessStatus {
    Correct,
    Incorrect,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorrectnessVerdict {
    pub status: CorrectnessStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure_class: Option<FailureClass>,
}

/// Snippet source prepared for execution under the task's entry point.
pub fn adapt_to_entry_point(code: &str, task: &Task) -> String {
    let code = dedent(code);
    match task.entry_point() {
        Some((entry, arity)) => rebind_entry_point(&code, &entry, Some(arity)),
        None => code,
    }
}

pub fn check_implementation_correctness(code: &str, task: &Task, oracle: &dyn Evaluator) -> Result<CorrectnessVerdict, DebugError> {
    let result = oracle.evaluate(&adapt_to_entry_point(code, task), task)?;
    Ok(match result.failure_class() {
        None => CorrectnessVerdict { status: CorrectnessStatus::Correct, failure_class: None },
        Some(c) => CorrectnessVerdict { status: CorrectnessStatus::Incorrect, failure_class: Some(c) },
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EipClass {
    NotEip,
    SpecMisalignment,
    ImplIncorrect,
}

impl EipClass {
    pub fn is_eip(self) -> bool {
        self != EipClass::NotEip
    }
}

pub fn classify_eip(alignment: &AlignmentVerdict, correctness: Option<&CorrectnessVerdict>) -> Result<EipClass, DebugError> {
    match (alignment.equivalence, correctness) {
        (false, None) => Ok(EipClass::SpecMisalignment),
        (false, Some(_)) => Err(DebugError::Inconsistent("misaligned page must not carry a correctness verdict".into())),
        (true, None) => Err(DebugError::Inconsistent("aligned page needs a correctness verdict".into())),
        (true, Some(c)) => Ok(match c.status {
            CorrectnessStatus::Correct => EipClass::NotEip,
            CorrectnessStatus::Incorrect => EipClass::ImplIncorrect,
        }),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EipDiagnosis {
    pub task_id: String,
    pub url: String,
    pub snippet_id: String,
    /// Byte range of the snippet in the page version diagnosed.
    pub snippet_range: (usize, usize),
    /// Hash of the snippet's raw text in that version.
    pub snippet_hash: String,
    pub class: EipClass,
    pub alignment: AlignmentVerdict,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub correctness: Option<CorrectnessVerdict>,
    pub diagnosed_at: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseDiagnosis {
    pub utilization: UtilizationReport,
    pub diagnoses: Vec<EipDiagnosis>,
}

/// Diagnose one utilized page of a case.
pub fn diagnose_page(
    page: &WebPageRecord,
    snippet: &CodeSnippet,
    task: &Task,
    cfg: &DebugConfig,
    gateway: &Gateway,
    oracle: &dyn Evaluator,
    diagnosed_at: DateTime<Utc>,
) -> Result<EipDiagnosis, DebugError> {
    let payload = PagePayload::new(page, snippet, cfg.context_window);
    let alignment = check_specification_alignment(&payload, task, gateway, cfg.retry_budget)?;
    let correctness = if alignment.equivalence {
        Some(check_implementation_correctness(&payload.code, task, oracle)?)
    } else {
        None
    };
    let class = classify_eip(&alignment, correctness.as_ref())?;
    Ok(EipDiagnosis {
        task_id: task.task_id.clone(),
        url: page.url.clone(),
        snippet_id: snippet.snippet_id.clone(),
        snippet_range: snippet.char_range,
        snippet_hash: content_hash(&snippet.text),
        class,
        alignment,
        correctness,
        diagnosed_at,
    })
}

/// Utilization detection followed by diagnosis of every utilized page.
pub fn debug_case(
    case: &SiiCase,
    corpus: &Corpus,
    cfg: &DebugConfig,
    gateway: &Gateway,
    oracle: &dyn Evaluator,
    diagnosed_at: DateTime<Utc>,
) -> Result<CaseDiagnosis, DebugError> {
    let task = corpus.task(&case.task_id).ok_or_else(|| DebugError::MissingTask(case.task_id.clone()))?;
    let utilization = detect_utilized_snippets(case, corpus, cfg)?;
    let mut diagnoses = Vec::new();
    for pu in &utilization.pages {
        let Some(snippet_id) = pu.diagnosed_snippet(cfg.snippet_threshold) else { continue };
        let page = corpus.page(&pu.url).ok_or_else(|| DebugError::MissingPage(pu.url.clone()))?;
        let snippet = page
            .snippets
            .iter()
            .find(|s| s.snippet_id == snippet_id)
            .expect("utilization refers to the page's own snippets");
        diagnoses.push(diagnose_page(page, snippet, task, cfg, gateway, oracle, diagnosed_at)?);
    }
    Ok(CaseDiagnosis { utilization, diagnoses })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn aligned(eq: bool, cond: &str) -> AlignmentVerdict {
        AlignmentVerdict { equivalence: eq, use_conditions: cond.into(), rationale: String::new(), page_summary: String::new() }
    }

    #[test]
    fn classification_table() {
        let ok = CorrectnessVerdict { status: CorrectnessStatus::Correct, failure_class: None };
        let bad = CorrectnessVerdict { status: CorrectnessStatus::Incorrect, failure_class: Some(FailureClass::WrongOutput) };
        assert_eq!(classify_eip(&aligned(false, "other"), None).unwrap(), EipClass::SpecMisalignment);
        assert_eq!(classify_eip(&aligned(true, ""), Some(&bad)).unwrap(), EipClass::ImplIncorrect);
        assert_eq!(classify_eip(&aligned(true, ""), Some(&ok)).unwrap(), EipClass::NotEip);
        assert!(classify_eip(&aligned(false, "x"), Some(&ok)).is_err());
        assert!(classify_eip(&aligned(true, ""), None).is_err());
    }

    #[test]
    fn payload_round_trip() {
        let p = PagePayload {
            url: "https://a.example/".into(),
            title: "t".into(),
            text_before: "```json\nnot this".into(),
            code: "x = 1\n".into(),
            text_after: String::new(),
        };
        let msg = with_payload(SUMMARY_PROMPT, &p);
        assert_eq!(extract_payload::<PagePayload>(&msg), Some(p));
    }

    #[test]
    fn prompts_are_non_empty() {
        for p in [SYSTEM_PROMPT, SUMMARY_PROMPT, ALIGNMENT_PROMPT] {
            assert!(p.len() > 100);
        }
        assert!(RETRY_PROMPT.contains("{error}"));
        assert!(ALIGNMENT_PROMPT.contains("WebPageProblemUseConditions"));
    }
}
