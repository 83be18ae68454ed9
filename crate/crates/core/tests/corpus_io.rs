mod common;

use chrono::{TimeZone, Utc};
use proptest::prelude::*;
use sherlock_core::corpus::{
    load_corpus, load_corpus_dir, save_corpus, verify_canonical, Comparison, Corpus, CorpusError, GenerationRecord,
    Manifest, Setting, Task, TestCase, Verdict, WebPageRecord, GENERATIONS_FILE, PAGES_FILE, TASKS_FILE,
};
use sherlock_core::oracle::{FailureClass, MemoEvaluator, OracleConfig, PythonOracle};

use common::*;

fn arb_task(id: usize) -> impl Strategy<Value = Task> {
    ("[a-z ]{0,40}", "[a-z_]{1,8}", prop::collection::vec((0i32..100, 0i32..100), 1..4), prop::option::of("[a-z]{1,6}"), any::<bool>())
        .prop_map(move |(description, name, tests, domain_tag, approx)| Task {
            task_id: format!("t/{id}"),
            description,
            canonical_solution: format!("def {name}(x):\n    return x\n"),
            test_suite: tests
                .into_iter()
                .map(|(i, e)| TestCase {
                    input_literal: format!("{name}({i})"),
                    expected_literal: e.to_string(),
                    comparison: if approx { Comparison::Approx { epsilon: 1e-6 } } else { Comparison::Equality },
                })
                .collect(),
            domain_tag,
        })
}

fn arb_page(id: usize) -> impl Strategy<Value = WebPageRecord> {
    ("[ -~]{0,80}", 0i64..1_000_000, any::<bool>()).prop_map(move |(text, secs, fenced)| {
        let raw = if fenced { format!("{text}\n```python\nx = {secs}\n```\n") } else { format!("<p>{text}</p><pre>y = {secs}</pre>") };
        let mut p = WebPageRecord {
            url: format!("https://example.org/p/{id}"),
            title: text.chars().take(10).collect(),
            fetched_at: Utc.timestamp_opt(1_600_000_000 + secs, 0).unwrap(),
            raw_content: raw,
            snippets: vec![],
        };
        p.extract();
        p
    })
}

fn arb_corpus() -> impl Strategy<Value = Corpus> {
    (1usize..4, 1usize..4).prop_flat_map(|(nt, np)| {
        let tasks: Vec<_> = (0..nt).map(arb_task).collect();
        let pages: Vec<_> = (0..np).map(arb_page).collect();
        let gens = prop::collection::vec((0..nt, any::<bool>(), 0..np, prop::sample::select(vec![Verdict::Pass, Verdict::Fail, Verdict::NotYetEvaluated])), 0..10);
        (tasks, pages, gens).prop_map(|(tasks, pages, raw)| {
            let gens: Vec<GenerationRecord> = raw
                .into_iter()
                .enumerate()
                .map(|(i, (t, web, p, verdict))| GenerationRecord {
                    task_id: format!("t/{t}"),
                    setting: if web { Setting::WebAugmented } else { Setting::Baseline },
                    run_index: i as u32,
                    code: format!("x = {i}\n"),
                    retrieved_urls: if web { vec![format!("https://example.org/p/{p}")] } else { vec![] },
                    verdict,
                })
                .collect();
            Corpus::new(Manifest::default(), tasks, pages, gens).unwrap()
        })
    })
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 64, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn save_then_load_is_identity(corpus in arb_corpus()) {
        let dir = tempfile::tempdir().unwrap();
        save_corpus(&corpus, dir.path()).unwrap();
        prop_assert_eq!(load_corpus_dir(dir.path()).unwrap(), corpus);
    }
}

fn write(dir: &std::path::Path, name: &str, lines: &[String]) -> std::path::PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, lines.iter().map(|l| format!("{l}\n")).collect::<String>()).unwrap();
    path
}

fn json<T: serde::Serialize>(items: &[T]) -> Vec<String> {
    items.iter().map(|i| serde_json::to_string(i).unwrap()).collect()
}

#[test]
fn load_preserves_counts() {
    let dir = tempfile::tempdir().unwrap();
    let tasks = [top_k_task(), same_chars_task()];
    let pages = [top_k_page(), same_chars_page(), page("https://example.org/extra", "Extra", "<p>nothing</p>", 0)];
    let mut gens = Vec::new();
    for t in &tasks {
        for run in 0..3 {
            gens.push(generation(&t.task_id, Setting::Baseline, run, "x = 1\n", &[]));
            gens.push(generation(&t.task_id, Setting::WebAugmented, run, "x = 1\n", &[TOP_K_URL, SAME_CHARS_URL]));
        }
    }
    let corpus = load_corpus(&write(dir.path(), TASKS_FILE, &json(&tasks)), &write(dir.path(), PAGES_FILE, &json(&pages)), &write(dir.path(), GENERATIONS_FILE, &json(&gens)))
        .unwrap();
    assert_eq!((corpus.tasks().len(), corpus.pages().len(), corpus.generations().len()), (2, 3, 12));

    let empty = load_corpus(&dir.path().join(TASKS_FILE), &dir.path().join(PAGES_FILE), &write(dir.path(), "none.jsonl", &[])).unwrap();
    assert!(empty.generations().is_empty());
}

#[test]
fn dangling_task_reference_names_the_id() {
    let dir = tempfile::tempdir().unwrap();
    let gens = [generation("ghost/1", Setting::Baseline, 0, "x = 1\n", &[])];
    let err = load_corpus(&write(dir.path(), TASKS_FILE, &json(&[top_k_task()])), &write(dir.path(), PAGES_FILE, &[]), &write(dir.path(), GENERATIONS_FILE, &json(&gens)))
        .unwrap_err();
    assert!(matches!(&err, CorpusError::DanglingTask(id) if id == "ghost/1"), "{err}");
}

#[test]
fn malformed_record_reports_its_line() {
    let dir = tempfile::tempdir().unwrap();
    let mut lines = json(&[top_k_task()]);
    lines.push("{\"task_id\": ".into());
    let err = load_corpus(&write(dir.path(), TASKS_FILE, &lines), &write(dir.path(), PAGES_FILE, &[]), &write(dir.path(), GENERATIONS_FILE, &[])).unwrap_err();
    assert!(err.to_string().contains(":2"), "{err}");
}

#[test]
fn canonical_self_check() {
    let oracle = oracle();
    let good = Corpus::new(Manifest::default(), vec![top_k_task(), same_chars_task()], vec![], vec![]).unwrap();
    assert!(verify_canonical(&good, &oracle).unwrap().is_empty());

    let wrong = task("bad/const", "Add one.", "def inc(x):\n    return 42\n", &[("inc(1)", "2")]);
    let corpus = Corpus::new(Manifest::default(), vec![top_k_task(), wrong], vec![], vec![]).unwrap();
    let failures = verify_canonical(&corpus, &oracle).unwrap();
    assert_eq!(failures.len(), 1);
    assert_eq!((failures[0].task_id.as_str(), failures[0].failure), ("bad/const", FailureClass::WrongOutput));
}

#[test]
fn spinning_canonical_times_out() {
    let oracle = MemoEvaluator::new(PythonOracle::new(OracleConfig { timeout_secs: 5.0, ..OracleConfig::default() }).unwrap());
    let spin = task("bad/spin", "Never returns.", "def spin(x):\n    while True:\n        x += 1\n", &[("spin(1)", "2")]);
    let corpus = Corpus::new(Manifest::default(), vec![spin], vec![], vec![]).unwrap();
    let started = std::time::Instant::now();
    let failures = verify_canonical(&corpus, &oracle).unwrap();
    assert_eq!(failures.len(), 1);
    assert_eq!(failures[0].failure, FailureClass::Timeout);
    assert!(failures[0].detail.to_lowercase().contains("timeout") || failures[0].detail.to_lowercase().contains("timed out"), "{}", failures[0].detail);
    assert!(started.elapsed().as_secs_f64() < 15.0);
}
