//! End-to-end driver: detect, debug, repair, verify, audit, report.
//!
//! Stages run in order and each writes its artifacts before the next
//! starts. All timestamps derive from `as_of`, so identical inputs give
//! byte-identical outputs.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::path::Path;

use chrono::{DateTime, Utc};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::copy_model::CopyModel;
use super::synth::SynthLabels;
use crate::cache::{
    annotate_misalignment, audit_side_effects, repair_implementation, CacheEntry, CacheError, CacheStore,
    DiagnosisTag, RegressionReport, Regenerator, ServedPage,
};
use crate::corpus::{save_corpus, write_jsonl, Corpus, Setting};
use crate::debugging::{debug_case, CaseDiagnosis, DebugConfig, EipClass, EipDiagnosis, UtilizationReport};
use crate::extraction::{escape_markup, SnippetOrigin};
use crate::gateway::Gateway;
use crate::lang::{choose_entry_function, dedent};
use crate::metrics::{score_detection, score_diagnosis, score_repair, Rate, ScoreReport};
use crate::oracle::Evaluator;
use crate::sii::{
    collect_sii_cases, compute_metrics, evaluate_generations, task_verdicts, transitions, Outcome, SiiCase, StudyMetrics,
    TaskVerdict,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Ingest,
    Detect,
    Debug,
    Repair,
    Audit,
    Report,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Stage::Ingest => "ingest",
            Stage::Detect => "detect",
            Stage::Debug => "debug",
            Stage::Repair => "repair",
            Stage::Audit => "audit",
            Stage::Report => "report",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Error)]
#[error("{stage} stage failed: {source}")]
pub struct StageError {
    pub stage: Stage,
    #[source]
    pub source: Box<dyn std::error::Error + Send + Sync>,
}

impl StageError {
    pub fn new(stage: Stage, source: impl Into<Box<dyn std::error::Error + Send + Sync>>) -> StageError {
        StageError { stage, source: source.into() }
    }
}

fn at<E: Into<Box<dyn std::error::Error + Send + Sync>>>(stage: Stage) -> impl FnOnce(E) -> StageError {
    move |e| StageError::new(stage, e)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    /// Runs per setting to evaluate; all when unset.
    pub runs: Option<u32>,
    pub debug: DebugConfig,
    /// Clock for diagnoses and repairs; the newest page fetch when unset.
    pub as_of: Option<DateTime<Utc>>,
    pub copy_bias: f64,
    pub seed: u64,
    /// Also audit a deliberately corrupted repair.
    pub sabotage: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig { runs: None, debug: DebugConfig::default(), as_of: None, copy_bias: 1.0, seed: 7, sabotage: false }
    }
}

#[derive(Debug, Clone)]
pub struct DetectOutput {
    /// Corpus with evaluated generations.
    pub corpus: Corpus,
    pub verdicts: Vec<TaskVerdict>,
    pub metrics: StudyMetrics<f64>,
    pub cases: Vec<SiiCase>,
}

pub fn stage_detect(corpus: &Corpus, oracle: &dyn Evaluator, runs: Option<u32>) -> Result<DetectOutput, StageError> {
    let generations = evaluate_generations(corpus, oracle, runs).map_err(at(Stage::Detect))?;
    let corpus = corpus.with_generations(generations).map_err(at(Stage::Detect))?;
    let verdicts = task_verdicts(corpus.generations()).map_err(at(Stage::Detect))?;
    let transitions = transitions(&verdicts).map_err(at(Stage::Detect))?;
    let metrics = compute_metrics(&transitions, &verdicts);
    let cases = collect_sii_cases(corpus.generations(), &transitions);
    Ok(DetectOutput { corpus, verdicts, metrics, cases })
}

/// Debug every case in parallel; output order follows `cases`.
pub fn stage_debug(
    corpus: &Corpus,
    cases: &[SiiCase],
    cfg: &DebugConfig,
    gateway: &Gateway,
    oracle: &dyn Evaluator,
    as_of: DateTime<Utc>,
) -> Result<Vec<CaseDiagnosis>, StageError> {
    cfg.validate().map_err(at(Stage::Debug))?;
    cases
        .par_iter()
        .map(|c| debug_case(c, corpus, cfg, gateway, oracle, as_of).map_err(at(Stage::Debug)))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "status", content = "reason")]
pub enum RepairStatus {
    Repaired,
    /// Same repair already stored.
    Unchanged,
    /// Link already repaired earlier in this run.
    Duplicate,
    Refused(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RepairOutcome {
    pub task_id: String,
    pub url: String,
    pub library: String,
    pub diagnosis: DiagnosisTag,
    #[serde(flatten)]
    pub status: RepairStatus,
}

/// Repair or annotate every EIP diagnosis; the first diagnosis of a link
/// in a library wins. Refusals are recorded, not fatal.
pub fn stage_repair(
    corpus: &Corpus,
    diagnoses: &[EipDiagnosis],
    store: &CacheStore,
    oracle: &dyn Evaluator,
    as_of: DateTime<Utc>,
) -> Result<(Vec<RepairOutcome>, Vec<CacheEntry>), StageError> {
    let mut done = BTreeSet::new();
    let mut outcomes = Vec::new();
    let mut entries = Vec::new();
    for d in diagnoses.iter().filter(|d| d.class.is_eip()) {
        let task = corpus.task(&d.task_id).ok_or_else(|| StageError::new(Stage::Repair, format!("unknown task {}", d.task_id)))?;
        let page = corpus.page(&d.url).ok_or_else(|| StageError::new(Stage::Repair, format!("unknown page {}", d.url)))?;
        let library = task.library().to_string();
        let diagnosis = match d.class {
            EipClass::ImplIncorrect => DiagnosisTag::ImplementationIncorrectness,
            _ => DiagnosisTag::SpecificationMisalignment,
        };
        let mut outcome = RepairOutcome { task_id: d.task_id.clone(), url: d.url.clone(), library: library.clone(), diagnosis, status: RepairStatus::Duplicate };
        if !done.insert((library.clone(), d.url.clone())) {
            outcomes.push(outcome);
            continue;
        }
        let entry = match d.class {
            EipClass::ImplIncorrect => repair_implementation(d, page, task, oracle, as_of),
            _ => annotate_misalignment(d, page, &library, corpus.manifest().subject_language, as_of),
        };
        outcome.status = match entry {
            Ok(entry) => {
                let grew = store.put(entry.clone()).map_err(at(Stage::Repair))?;
                entries.push(entry);
                if grew { RepairStatus::Repaired } else { RepairStatus::Unchanged }
            }
            Err(e @ (CacheError::Io { .. } | CacheError::Oracle(_))) => return Err(StageError::new(Stage::Repair, e)),
            Err(e) => {
                log::warn!("repair of {} refused: {e}", d.url);
                RepairStatus::Refused(e.to_string())
            }
        };
        outcomes.push(outcome);
    }
    Ok((outcomes, entries))
}

/// Retrieved pages of a generation as served from the store.
pub fn served_pages(corpus: &Corpus, store: &CacheStore, urls: &[String], library: &str) -> Result<Vec<ServedPage>, CacheError> {
    urls.iter()
        .map(|u| {
            let page = corpus.page(u).ok_or_else(|| CacheError::UnknownUrl(u.clone()))?;
            Ok(ServedPage { url: u.clone(), title: page.title.clone(), content: store.serve(corpus, u, library)? })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RepairCheck {
    pub task_id: String,
    pub passed: bool,
}

/// Regenerate every case with at least one EIP diagnosis over served pages.
pub fn verify_repairs(
    corpus: &Corpus,
    cases: &[SiiCase],
    diagnoses: &[EipDiagnosis],
    store: &CacheStore,
    model: &dyn Regenerator,
    oracle: &dyn Evaluator,
) -> Result<Vec<RepairCheck>, StageError> {
    let affected: BTreeSet<&str> = diagnoses.iter().filter(|d| d.class.is_eip()).map(|d| d.task_id.as_str()).collect();
    cases
        .iter()
        .filter(|c| affected.contains(c.task_id.as_str()))
        .map(|c| {
            let task = corpus.task(&c.task_id).expect("validated corpus");
            let pages = served_pages(corpus, store, &c.retrieved_urls, task.library()).map_err(at(Stage::Repair))?;
            let code = model.regenerate(task, &pages);
            let passed = oracle.evaluate(&code, task).map_err(at(Stage::Repair))?.passed();
            Ok(RepairCheck { task_id: c.task_id.clone(), passed })
        })
        .collect()
}

/// A corrupted repair of a page that some correct task copies from: its
/// first function is replaced by one that raises.
pub fn sabotaged_entry(corpus: &Corpus, as_of: DateTime<Utc>) -> Option<CacheEntry> {
    let web: Vec<_> = corpus.generations().iter().filter(|g| g.setting == Setting::WebAugmented).cloned().collect();
    let verdicts = task_verdicts(&web).ok()?;
    let target = verdicts
        .iter()
        .filter(|v| v.outcome == Outcome::Correct)
        .filter_map(|v| {
            let g = web.iter().filter(|g| g.task_id == v.task_id).min_by_key(|g| g.run_index)?;
            Some((g.retrieved_urls.first()?.clone(), corpus.task(&v.task_id)?.library().to_string()))
        })
        .min()?;
    let page = corpus.page(&target.0)?;
    let snippet = page.snippets.iter().find(|s| choose_entry_function(&dedent(&s.code()), "", None).is_some())?;
    let f = choose_entry_function(&dedent(&snippet.code()), "", None)?;
    let broken = format!("def {}(*args, **kwargs):\n    raise RuntimeError(\"corrupted repair\")\n", f.name);
    let encoded = match snippet.origin {
        SnippetOrigin::Markup => escape_markup(&broken),
        SnippetOrigin::Fence => broken,
    };
    let (s, e) = snippet.char_range;
    Some(CacheEntry {
        title: page.title.clone(),
        link: page.url.clone(),
        snippet: snippet.code(),
        diagnosis: DiagnosisTag::ImplementationIncorrectness,
        time: as_of,
        content: format!("{}{}{}", &page.raw_content[..s], encoded, &page.raw_content[e..]),
        source_fetched_at: page.fetched_at,
        library: target.1,
        source_hash: crate::extraction::content_hash(&page.raw_content),
    })
}

/// Detection and diagnosis scores against synthetic ground truth.
pub fn score_against_labels(
    cases: &[SiiCase],
    diagnoses: &[EipDiagnosis],
    labels: &SynthLabels,
    repair_checks: &[RepairCheck],
) -> Result<ScoreReport, StageError> {
    let universe: BTreeSet<(String, String)> =
        cases.iter().flat_map(|c| c.retrieved_urls.iter().map(|u| (c.task_id.clone(), u.clone()))).collect();
    let truth = |t: &str, u: &str| labels.truth(t, u).unwrap_or(EipClass::NotEip);
    let positives: BTreeSet<(String, String)> = universe.iter().filter(|(t, u)| truth(t, u).is_eip()).cloned().collect();
    let predicted: BTreeMap<(String, String), EipClass> = diagnoses
        .iter()
        .filter(|d| d.class.is_eip())
        .map(|d| ((d.task_id.clone(), d.url.clone()), d.class))
        .collect();
    let predicted_set: BTreeSet<_> = predicted.keys().cloned().collect();
    let detection = score_detection(&predicted_set, &positives, &universe).map_err(at(Stage::Report))?;
    let records: Vec<(String, String)> = predicted
        .iter()
        .filter(|(k, _)| positives.contains(*k))
        .map(|((t, u), class)| (class_name(*class), class_name(truth(t, u))))
        .collect();
    let passes: Vec<bool> = repair_checks.iter().map(|r| r.passed).collect();
    Ok(ScoreReport {
        detection,
        diagnosis: score_diagnosis(&records),
        repair_rate: score_repair(&passes),
        repair_cases: passes.len() as u64,
    })
}

pub fn class_name(c: EipClass) -> String {
    match c {
        EipClass::NotEip => "not_eip",
        EipClass::SpecMisalignment => "spec_misalignment",
        EipClass::ImplIncorrect => "impl_incorrect",
    }
    .to_string()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineReport {
    pub study: StudyMetrics<f64>,
    pub sii_cases: usize,
    pub utilized_pages: usize,
    pub diagnoses: BTreeMap<String, u64>,
    pub repairs: usize,
    pub repair_refusals: usize,
    pub repair: Rate<f64>,
    pub repair_cases: u64,
    pub audited_tasks: usize,
    pub regressions: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scores: Option<ScoreReport>,
}

impl PipelineReport {
    pub fn render_table(&self) -> String {
        let mut out = format!(
            "{:<36} {:>10}\n{:-<36} {:->10}\n",
            "Study", "Value", "", ""
        );
        let mut row = |k: &str, v: String| out.push_str(&format!("{k:<36} {v:>10}\n"));
        row("New errors (E)", self.study.e.to_string());
        row("New correct (C)", self.study.c.to_string());
        row("NIR", self.study.nir.percent());
        row("Pass@1 baseline", self.study.pass_at_1_baseline.percent());
        row("Pass@1 web", self.study.pass_at_1_web.percent());
        row("SII cases", self.sii_cases.to_string());
        row("Utilized pages", self.utilized_pages.to_string());
        for (class, n) in &self.diagnoses {
            row(&format!("Diagnosed {class}"), n.to_string());
        }
        row("Cache entries written", self.repairs.to_string());
        row("Repairs refused", self.repair_refusals.to_string());
        row(&format!("Repair rate (n={})", self.repair_cases), self.repair.percent());
        row("Audited tasks", self.audited_tasks.to_string());
        row("Regressions", self.regressions.to_string());
        if let Some(s) = &self.scores {
            out.push('\n');
            out.push_str(&s.render_table());
        }
        out
    }
}

/// Everything a pipeline run produced.
#[derive(Debug, Clone)]
pub struct PipelineRun {
    pub detect: DetectOutput,
    pub utilization: Vec<UtilizationReport>,
    pub diagnoses: Vec<EipDiagnosis>,
    pub repairs: Vec<RepairOutcome>,
    pub repair_checks: Vec<RepairCheck>,
    pub audits: Vec<RegressionReport>,
    pub report: PipelineReport,
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), std::io::Error> {
    let mut text = serde_json::to_string_pretty(value).expect("artifacts serialize");
    text.push('\n');
    fs::write(path, text)
}

/// Artifact file names under the output directory.
pub mod artifacts {
    pub const VERDICTS: &str = "verdicts.jsonl";
    pub const METRICS: &str = "metrics.json";
    pub const SII_CASES: &str = "sii_cases.jsonl";
    pub const UTILIZATION: &str = "utilization.jsonl";
    pub const DIAGNOSES: &str = "diagnoses.jsonl";
    pub const CACHE_DIR: &str = "cache";
    pub const REPAIRS: &str = "repairs.jsonl";
    pub const REPAIR_CHECKS: &str = "repair_checks.jsonl";
    pub const AUDIT: &str = "audit.jsonl";
    pub const REPORT: &str = "report.json";
    pub const REPORT_TABLE: &str = "report.txt";
}

/// Run every stage over `corpus`, writing artifacts into `out_dir`.
pub fn run_pipeline(
    corpus: &Corpus,
    labels: Option<&SynthLabels>,
    cfg: &PipelineConfig,
    gateway: &Gateway,
    oracle: &dyn Evaluator,
    out_dir: &Path,
) -> Result<PipelineRun, StageError> {
    use artifacts::*;
    fs::create_dir_all(out_dir).map_err(at(Stage::Ingest))?;
    let corpus = corpus.extracted();
    let failures = crate::corpus::verify_canonical(&corpus, oracle).map_err(at(Stage::Ingest))?;
    for f in &failures {
        log::warn!("canonical solution of {} fails its tests: {}", f.task_id, f.detail);
    }
    let as_of = cfg
        .as_of
        .or_else(|| corpus.newest_fetch())
        .ok_or_else(|| StageError::new(Stage::Ingest, "corpus has no pages and no as_of was given"))?;

    let detect = stage_detect(&corpus, oracle, cfg.runs)?;

    write_jsonl(&out_dir.join(VERDICTS), &detect.verdicts).map_err(at(Stage::Detect))?;
    write_json(&out_dir.join(METRICS), &detect.metrics).map_err(at(Stage::Detect))?;
    write_jsonl(&out_dir.join(SII_CASES), &detect.cases).map_err(at(Stage::Detect))?;

    let debugged = stage_debug(&detect.corpus, &detect.cases, &cfg.debug, gateway, oracle, as_of)?;
    let utilization: Vec<UtilizationReport> = debugged.iter().map(|d| d.utilization.clone()).collect();
    let diagnoses: Vec<EipDiagnosis> = debugged.into_iter().flat_map(|d| d.diagnoses).collect();
    write_jsonl(&out_dir.join(UTILIZATION), &utilization).map_err(at(Stage::Debug))?;
    write_jsonl(&out_dir.join(DIAGNOSES), &diagnoses).map_err(at(Stage::Debug))?;

    let store = CacheStore::open(out_dir.join(CACHE_DIR)).map_err(at(Stage::Repair))?;
    let (repairs, entries) = stage_repair(&detect.corpus, &diagnoses, &store, oracle, as_of)?;
    let model = CopyModel::new(cfg.copy_bias, cfg.seed);
    let repair_checks = verify_repairs(&detect.corpus, &detect.cases, &diagnoses, &store, &model, oracle)?;
    write_jsonl(&out_dir.join(REPAIRS), &repairs).map_err(at(Stage::Repair))?;
    write_jsonl(&out_dir.join(REPAIR_CHECKS), &repair_checks).map_err(at(Stage::Repair))?;

    let mut to_audit = entries;
    if cfg.sabotage {
        match sabotaged_entry(&detect.corpus, as_of) {
            Some(e) => to_audit.push(e),
            None => log::warn!("no page is copied by a correct task; nothing to sabotage"),
        }
    }
    let audits = to_audit
        .iter()
        .map(|e| audit_side_effects(e, &store, &detect.corpus, &model, oracle).map_err(at(Stage::Audit)))
        .collect::<Result<Vec<_>, _>>()?;
    write_jsonl(&out_dir.join(AUDIT), &audits).map_err(at(Stage::Audit))?;

    let scores = labels
        .map(|l| score_against_labels(&detect.cases, &diagnoses, l, &repair_checks))
        .transpose()?;
    let mut by_class = BTreeMap::new();
    for d in &diagnoses {
        *by_class.entry(class_name(d.class)).or_insert(0u64) += 1;
    }
    let passes: Vec<bool> = repair_checks.iter().map(|r| r.passed).collect();
    let report = PipelineReport {
        study: detect.metrics,
        sii_cases: detect.cases.len(),
        utilized_pages: utilization.iter().flat_map(|u| &u.pages).filter(|p| p.utilized).count(),
        diagnoses: by_class,
        repairs: repairs.iter().filter(|r| matches!(r.status, RepairStatus::Repaired | RepairStatus::Unchanged)).count(),
        repair_refusals: repairs.iter().filter(|r| matches!(r.status, RepairStatus::Refused(_))).count(),
        repair: score_repair(&passes),
        repair_cases: passes.len() as u64,
        audited_tasks: audits.iter().map(|a| a.tasks.len()).sum(),
        regressions: audits.iter().map(|a| a.regressions).sum(),
        scores,
    };
    write_json(&out_dir.join(REPORT), &report).map_err(at(Stage::Report))?;
    fs::write(out_dir.join(REPORT_TABLE), report.render_table()).map_err(at(Stage::Report))?;

    Ok(PipelineRun { detect, utilization, diagnoses, repairs, repair_checks, audits, report })
}

/// Write a synthetic corpus and its labels into `dir`.
pub fn save_synth(corpus: &Corpus, labels: &SynthLabels, dir: &Path) -> Result<(), StageError> {
    save_corpus(corpus, dir).map_err(at(Stage::Ingest))?;
    write_json(&dir.join(super::LABELS_FILE), labels).map_err(at(Stage::Ingest))
}
