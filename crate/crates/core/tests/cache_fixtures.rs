mod common;

use std::sync::Arc;

use sherlock_core::cache::{
    annotate_misalignment, audit_side_effects, check_staleness, parse_metadata, repair_implementation, CacheError,
    CacheStore, DiagnosisTag, Regenerator, ServedPage, Staleness, DEFAULT_LIBRARY, METADATA_BEGIN, METADATA_END,
};
use sherlock_core::corpus::{Corpus, Manifest, Setting, Task, WebPageRecord};
use sherlock_core::debugging::{debug_case, DebugConfig, EipDiagnosis};
use sherlock_core::extraction::escape_markup;
use sherlock_core::gateway::{AgentRequest, Gateway};
use sherlock_core::harness::{refresh_stale, CopyModel};
use sherlock_core::lang::SubjectLanguage;
use sherlock_core::sii::{collect_sii_cases, evaluate_generations, task_verdicts, transitions, Outcome};

use common::*;

fn diagnose<F>(corpus: &Corpus, task_id: &str, code: &str, url: &str, reply: F) -> EipDiagnosis
where
    F: Fn(&AgentRequest, usize) -> String + Send + Sync + 'static,
{
    let gateway = Gateway::new(Box::new(ScriptedAgent::new(reply)));
    let d = debug_case(&case(task_id, code, &[url]), corpus, &DebugConfig::default(), &gateway, &oracle(), at(60)).unwrap();
    d.diagnoses.into_iter().next().expect("one diagnosis")
}

fn top_k_diagnosis(corpus: &Corpus) -> EipDiagnosis {
    diagnose(corpus, "fixture/top_k", TOP_K_FLAWED, TOP_K_URL, aligned_reply)
}

fn same_chars_diagnosis(corpus: &Corpus) -> EipDiagnosis {
    diagnose(corpus, "fixture/same_chars", SAME_CHARS_COUNTED, SAME_CHARS_URL, misaligned_reply)
}

fn annotate(d: &EipDiagnosis, page: &WebPageRecord, minutes: i64) -> Result<sherlock_core::cache::CacheEntry, CacheError> {
    annotate_misalignment(d, page, DEFAULT_LIBRARY, SubjectLanguage::Python, at(minutes))
}

#[test]
fn flawed_implementation_is_replaced_by_the_canonical() {
    let corpus = fixture_corpus();
    let page = corpus.page(TOP_K_URL).unwrap();
    let d = top_k_diagnosis(&corpus);
    let entry = repair_implementation(&d, page, corpus.task("fixture/top_k").unwrap(), &oracle(), at(60)).unwrap();

    assert_eq!(entry.diagnosis, DiagnosisTag::ImplementationIncorrectness);
    assert_eq!(entry.title, "python - Efficient way to find top K products given two lists");
    assert_eq!(entry.snippet, TOP_K_FLAWED);
    assert!(entry.time >= entry.source_fetched_at);

    let (s, e) = d.snippet_range;
    let (before, after) = (&page.raw_content[..s], &page.raw_content[e..]);
    assert!(entry.content.starts_with(before) && entry.content.ends_with(after));
    let middle = &entry.content[s..entry.content.len() - after.len()];
    assert_eq!(middle, escape_markup(TOP_K_CANONICAL));
}

#[test]
fn published_record_has_exactly_the_documented_fields() {
    let corpus = fixture_corpus();
    let dir = tempfile::tempdir().unwrap();
    let store = CacheStore::open(dir.path()).unwrap();
    let d = top_k_diagnosis(&corpus);
    let entry = repair_implementation(&d, corpus.page(TOP_K_URL).unwrap(), corpus.task("fixture/top_k").unwrap(), &oracle(), at(60)).unwrap();
    assert!(store.put(entry.clone()).unwrap());
    assert!(!store.put(entry.clone()).unwrap(), "identical entry appended twice");

    let text = std::fs::read_to_string(dir.path().join(DEFAULT_LIBRARY).join("entries.jsonl")).unwrap();
    assert_eq!(text.lines().count(), 1);
    let record: serde_json::Map<String, serde_json::Value> = serde_json::from_str(text.lines().next().unwrap()).unwrap();
    let mut keys: Vec<&str> = record.keys().map(String::as_str).collect();
    keys.sort();
    assert_eq!(keys, ["content", "diagnosis", "link", "snippet", "source_fetched_at", "time", "title"]);
    assert_eq!(record["diagnosis"], "Implementation Incorrectness");

    let reopened = CacheStore::open(dir.path()).unwrap();
    assert_eq!(reopened.get(DEFAULT_LIBRARY, TOP_K_URL), Some(entry));
}

#[test]
fn failing_canonical_refuses_the_repair() {
    let corpus = fixture_corpus();
    let d = top_k_diagnosis(&corpus);
    let mut task = corpus.task("fixture/top_k").unwrap().clone();
    task.canonical_solution = "def top_k_products(a, b, k):\n    return [0]\n".into();
    let err = repair_implementation(&d, corpus.page(TOP_K_URL).unwrap(), &task, &oracle(), at(60)).unwrap_err();
    assert!(matches!(err, CacheError::CanonicalFails { .. }), "{err}");
}

#[test]
fn upstream_edit_makes_the_repair_stale() {
    let corpus = fixture_corpus();
    let d = top_k_diagnosis(&corpus);
    let mut edited = corpus.page(TOP_K_URL).unwrap().clone();
    edited.raw_content = edited.raw_content.replacen("I need", "We need", 1);
    let err = repair_implementation(&d, &edited, corpus.task("fixture/top_k").unwrap(), &oracle(), at(60)).unwrap_err();
    assert!(matches!(err, CacheError::StalePage { .. }), "{err}");
}

#[test]
fn misaligned_page_gets_metadata_and_keeps_its_code() {
    let corpus = fixture_corpus();
    let page = corpus.page(SAME_CHARS_URL).unwrap();
    let d = same_chars_diagnosis(&corpus);
    let entry = annotate(&d, page, 60).unwrap();
    assert_eq!(entry.diagnosis, DiagnosisTag::SpecificationMisalignment);

    let begin = entry.content.find(&format!("# {METADATA_BEGIN}")).unwrap();
    let end = entry.content.find(&format!("# {METADATA_END}\n")).unwrap() + METADATA_END.len() + 3;
    let stripped = format!("{}{}", &entry.content[..begin], &entry.content[end..]);
    assert_eq!(stripped, page.raw_content, "annotation must only insert");

    let annotated = corpus_with(page, &entry.content);
    let block = parse_metadata(&annotated.snippets[0].code()).expect("metadata travels with the snippet");
    assert_eq!(block.use_conditions, d.alignment.use_conditions);
    assert!(block.use_conditions.contains("repeated characters"));

    let again = annotate(&d, page, 90).unwrap();
    assert_eq!(again.content, entry.content);
    assert_ne!(again.time, entry.time);
}

fn corpus_with(page: &WebPageRecord, content: &str) -> WebPageRecord {
    let mut p = page.clone();
    p.raw_content = content.to_string();
    p.extract();
    p
}

#[test]
fn annotation_needs_use_conditions() {
    let corpus = fixture_corpus();
    let mut d = same_chars_diagnosis(&corpus);
    d.alignment.use_conditions = "  ".into();
    let err = annotate(&d, corpus.page(SAME_CHARS_URL).unwrap(), 60).unwrap_err();
    assert!(matches!(err, CacheError::MissingUseConditions { .. }), "{err}");
}

#[test]
fn wrong_class_is_rejected() {
    let corpus = fixture_corpus();
    let d = same_chars_diagnosis(&corpus);
    let task = corpus.task("fixture/same_chars").unwrap();
    let err = repair_implementation(&d, corpus.page(SAME_CHARS_URL).unwrap(), task, &oracle(), at(60)).unwrap_err();
    assert!(matches!(err, CacheError::WrongClass { .. }), "{err}");
}

#[test]
fn serving_respects_repairs_and_library_isolation() {
    let corpus = fixture_corpus();
    let store = CacheStore::in_memory();
    let d = top_k_diagnosis(&corpus);
    let entry = repair_implementation(&d, corpus.page(TOP_K_URL).unwrap(), corpus.task("fixture/top_k").unwrap(), &oracle(), at(60)).unwrap();
    store.put(entry.clone()).unwrap();

    assert_eq!(store.serve(&corpus, TOP_K_URL, DEFAULT_LIBRARY).unwrap(), entry.content);
    assert_eq!(store.serve(&corpus, SAME_CHARS_URL, DEFAULT_LIBRARY).unwrap(), corpus.page(SAME_CHARS_URL).unwrap().raw_content);
    assert_eq!(store.serve(&corpus, TOP_K_URL, "numerics").unwrap(), corpus.page(TOP_K_URL).unwrap().raw_content);
    assert!(matches!(store.serve(&corpus, "https://nowhere.example/x", DEFAULT_LIBRARY), Err(CacheError::UnknownUrl(_))));
}

#[test]
fn staleness_tracks_the_page_hash() {
    let corpus = fixture_corpus();
    let page = corpus.page(SAME_CHARS_URL).unwrap();
    let entry = annotate(&same_chars_diagnosis(&corpus), page, 60).unwrap();
    assert_eq!(check_staleness(&entry, page), Staleness::Fresh);
    let mut live = page.clone();
    live.raw_content.push(' ');
    assert_eq!(check_staleness(&entry, &live), Staleness::Stale);
}

#[test]
fn repaired_pages_fix_the_triggering_task() {
    let corpus = fixture_corpus();
    let oracle = oracle();
    let store = CacheStore::in_memory();
    let model = CopyModel::new(1.0, 7);
    let repairs = [
        ("fixture/top_k", TOP_K_URL, repair_implementation(&top_k_diagnosis(&corpus), corpus.page(TOP_K_URL).unwrap(), corpus.task("fixture/top_k").unwrap(), &oracle, at(60)).unwrap()),
        ("fixture/same_chars", SAME_CHARS_URL, annotate(&same_chars_diagnosis(&corpus), corpus.page(SAME_CHARS_URL).unwrap(), 60).unwrap()),
    ];
    for (task_id, url, entry) in repairs {
        let task = corpus.task(task_id).unwrap();
        let page = corpus.page(url).unwrap();
        let original = [ServedPage { url: url.into(), title: page.title.clone(), content: page.raw_content.clone() }];
        assert!(!oracle.evaluate_passes(&model.regenerate(task, &original), task), "{task_id} should fail before repair");
        store.put(entry).unwrap();
        let served = [ServedPage { url: url.into(), title: page.title.clone(), content: store.serve(&corpus, url, DEFAULT_LIBRARY).unwrap() }];
        assert!(oracle.evaluate_passes(&model.regenerate(task, &served), task), "{task_id} should pass after repair");
    }
}

trait Passes {
    fn evaluate_passes(&self, code: &str, task: &Task) -> bool;
}

impl<E: sherlock_core::oracle::Evaluator> Passes for E {
    fn evaluate_passes(&self, code: &str, task: &Task) -> bool {
        self.evaluate(code, task).unwrap().passed()
    }
}

/// One page retrieved by three tasks of the same problem; the first
/// generation copies a flawed snippet, the other two are correct.
fn shared_page_corpus() -> Corpus {
    let url = "https://qa.example.org/questions/4004";
    let md = format!(
        "# Same characters\n\n```python\n{SAME_CHARS_CANONICAL}```\n\nA variant I found elsewhere:\n\n```python\n{SAME_CHARS_COUNTED}```\n"
    );
    let base = same_chars_task();
    let tasks: Vec<Task> = (0..3).map(|i| Task { task_id: format!("shared/{i}"), ..base.clone() }).collect();
    let mut gens = Vec::new();
    for (i, t) in tasks.iter().enumerate() {
        let web = if i == 0 { SAME_CHARS_COUNTED } else { SAME_CHARS_CANONICAL };
        gens.push(generation(&t.task_id, Setting::Baseline, 0, SAME_CHARS_CANONICAL, &[]));
        gens.push(generation(&t.task_id, Setting::WebAugmented, 0, web, &[url]));
    }
    let corpus = Corpus::new(Manifest::default(), tasks, vec![page(url, "Same characters", &md, 0)], gens).unwrap();
    let evaluated = evaluate_generations(&corpus, &oracle(), None).unwrap();
    corpus.with_generations(evaluated).unwrap()
}

#[test]
fn audit_covers_exactly_the_correct_tasks_and_finds_no_regression() {
    let corpus = shared_page_corpus();
    let oracle = oracle();
    let url = "https://qa.example.org/questions/4004";
    let d = diagnose(&corpus, "shared/0", SAME_CHARS_COUNTED, url, misaligned_reply);
    let entry = annotate(&d, corpus.page(url).unwrap(), 60).unwrap();
    let report = audit_side_effects(&entry, &CacheStore::in_memory(), &corpus, &CopyModel::new(1.0, 7), &oracle).unwrap();
    let ids: Vec<&str> = report.tasks.iter().map(|t| t.task_id.as_str()).collect();
    assert_eq!(ids, ["shared/1", "shared/2"]);
    assert!(report.tasks.iter().all(|t| t.before == Outcome::Correct));
    assert_eq!(report.regressions, 0);
}

#[test]
fn corrupted_repair_is_caught_by_the_audit() {
    let corpus = shared_page_corpus();
    let url = "https://qa.example.org/questions/4004";
    let d = diagnose(&corpus, "shared/0", SAME_CHARS_COUNTED, url, misaligned_reply);
    let mut entry = annotate(&d, corpus.page(url).unwrap(), 60).unwrap();
    entry.content = entry.content.replace("return set(s0) == set(s1)", "raise RuntimeError('corrupted')");
    let report = audit_side_effects(&entry, &CacheStore::in_memory(), &corpus, &CopyModel::new(1.0, 7), &oracle()).unwrap();
    assert!(report.regressions >= 1);
}

#[test]
fn stale_entry_is_refreshed_through_debugging() {
    let corpus = fixture_corpus();
    let oracle = oracle();
    let store = CacheStore::in_memory();
    let old = annotate(&same_chars_diagnosis(&corpus), corpus.page(SAME_CHARS_URL).unwrap(), 60).unwrap();
    store.put(old.clone()).unwrap();

    let mut pages: Vec<WebPageRecord> = corpus.pages().to_vec();
    let live = pages.iter_mut().find(|p| p.url == SAME_CHARS_URL).unwrap();
    live.raw_content = live.raw_content.replace("Sorting makes", "Sorting the letters makes");
    live.fetched_at = at(30);
    live.extract();
    let live = Corpus::new(Manifest::default(), corpus.tasks().to_vec(), pages, corpus.generations().to_vec()).unwrap();
    assert_eq!(store.stale_entries(&live).len(), 1);

    let evaluated = live.with_generations(evaluate_generations(&live, &oracle, None).unwrap()).unwrap();
    let verdicts = task_verdicts(evaluated.generations()).unwrap();
    let cases = collect_sii_cases(evaluated.generations(), &transitions(&verdicts).unwrap());
    let gateway = Gateway::new(Box::new(Arc::new(ScriptedAgent::new(misaligned_reply))));
    let outcomes = refresh_stale(&store, &live, &cases, &DebugConfig::default(), &gateway, &oracle, at(120)).unwrap();

    assert_eq!(outcomes.len(), 1);
    assert_eq!(outcomes[0].refreshed, Some(DiagnosisTag::SpecificationMisalignment));
    let fresh = store.get(DEFAULT_LIBRARY, SAME_CHARS_URL).unwrap();
    assert_eq!(fresh.time, at(120));
    assert_eq!(fresh.source_fetched_at, at(30));
    assert!(fresh.content.contains("Sorting the letters makes"));
    assert!(store.stale_entries(&live).is_empty());
}
