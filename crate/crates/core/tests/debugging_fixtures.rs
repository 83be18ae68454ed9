mod common;

use std::sync::Arc;

use sherlock_core::corpus::{Corpus, Manifest};
use sherlock_core::debugging::{
    check_implementation_correctness, check_specification_alignment, debug_case, detect_utilized_snippets,
    CorrectnessStatus, DebugConfig, DebugError, EipClass, PagePayload, SUMMARY_SCHEMA,
};
use sherlock_core::gateway::{AgentRequest, Gateway};
use sherlock_core::oracle::FailureClass;

use common::*;

fn gateway<F>(agent: &Arc<ScriptedAgent<F>>) -> Gateway
where
    F: Fn(&AgentRequest, usize) -> String + Send + Sync + 'static,
{
    Gateway::new(Box::new(agent.clone()))
}

#[test]
fn verbatim_copy_is_utilized_with_full_similarity() {
    let corpus = fixture_corpus();
    let report = detect_utilized_snippets(&case("fixture/top_k", TOP_K_FLAWED, &[TOP_K_URL]), &corpus, &DebugConfig::default()).unwrap();
    let p = &report.pages[0];
    assert!(p.utilized);
    assert_eq!(p.best.unwrap().combined, 1.0);
}

#[test]
fn page_without_snippets_is_never_utilized() {
    let prose = page("https://blog.example.com/post/1", "Musings", "<p>No code here, only opinions.</p>", 0);
    let corpus = Corpus::new(Manifest::default(), vec![top_k_task()], vec![prose], vec![]).unwrap();
    let report =
        detect_utilized_snippets(&case("fixture/top_k", TOP_K_FLAWED, &["https://blog.example.com/post/1"]), &corpus, &DebugConfig::default())
            .unwrap();
    assert!(report.pages.iter().all(|p| !p.utilized && p.best.is_none()));
}

#[test]
fn renamed_copy_is_utilized_through_structure() {
    let original = "def scale(values, factor, offset):\n    shifted = [value + offset for value in values]\n    scaled = [item * factor for item in shifted]\n    return scaled\n";
    let renamed = "def scale(xs, m, c):\n    ys = [x + c for x in xs]\n    zs = [y * m for y in ys]\n    return zs\n";
    let url = "https://snippets.example.com/questions/3003";
    let md = format!("Shift, then scale:\n\n```python\n{original}```\n");
    let task = task("fixture/scale", "Shift every value by offset, then multiply by factor.", original, &[("scale([1], 2, 3)", "[8]")]);
    let corpus = Corpus::new(Manifest::default(), vec![task], vec![page(url, "Scaling a list", &md, 0)], vec![]).unwrap();
    let cfg = DebugConfig::default();
    let report = detect_utilized_snippets(&case("fixture/scale", renamed, &[url]), &corpus, &cfg).unwrap();
    let best = report.pages[0].best.unwrap();
    assert!(best.text < cfg.snippet_threshold, "text ratio {}", best.text);
    assert_eq!((best.keyword, best.tree, best.dataflow), (1.0, 1.0, 1.0));
    assert!(report.pages[0].utilized);
}

#[test]
fn misaligned_page_is_flagged_by_the_agent() {
    let page = same_chars_page();
    let payload = PagePayload::new(&page, &page.snippets[0], 600);
    let agent = Arc::new(ScriptedAgent::new(misaligned_reply));
    let v = check_specification_alignment(&payload, &same_chars_task(), &gateway(&agent), 2).unwrap();
    assert!(!v.equivalence);
    assert!(v.use_conditions.contains("repeated characters"));
    assert!(v.page_summary.contains("anagrams"));
    assert_eq!(agent.calls(), 2);
}

#[test]
fn identical_problem_is_aligned() {
    let page = top_k_page();
    let payload = PagePayload::new(&page, &page.snippets[0], 600);
    let agent = Arc::new(ScriptedAgent::new(aligned_reply));
    let v = check_specification_alignment(&payload, &top_k_task(), &gateway(&agent), 2).unwrap();
    assert!(v.equivalence);
}

#[test]
fn missing_key_exhausts_the_retry_budget() {
    let page = top_k_page();
    let payload = PagePayload::new(&page, &page.snippets[0], 600);
    let agent = Arc::new(ScriptedAgent::new(|req: &AgentRequest, _| {
        if req.schema_id == SUMMARY_SCHEMA {
            r#"{"WebPageProblem": "top k"}"#.to_string()
        } else {
            r#"{"WebPageProblemUseConditions": "", "Rationale": "forgot the verdict"}"#.to_string()
        }
    }));
    let err = check_specification_alignment(&payload, &top_k_task(), &gateway(&agent), 2).unwrap_err();
    match err {
        DebugError::Schema { attempts, .. } => assert_eq!(attempts, 2),
        other => panic!("expected schema error, got {other}"),
    }
    assert_eq!(agent.calls(), 3);
}

#[test]
fn correctness_against_the_oracle() {
    let oracle = oracle();
    let task = top_k_task();
    let ok = check_implementation_correctness(TOP_K_CANONICAL, &task, &oracle).unwrap();
    assert_eq!(ok.status, CorrectnessStatus::Correct);
    let bad = check_implementation_correctness(TOP_K_FLAWED, &task, &oracle).unwrap();
    assert_eq!((bad.status, bad.failure_class), (CorrectnessStatus::Incorrect, Some(FailureClass::WrongOutput)));
    let broken = check_implementation_correctness("def top_k_products(a, b, k)\n    return []\n", &task, &oracle).unwrap();
    assert_eq!(broken.failure_class, Some(FailureClass::ParseError));
}

#[test]
fn both_eip_kinds_are_diagnosed_end_to_end() {
    let corpus = fixture_corpus();
    let oracle = oracle();
    let cfg = DebugConfig::default();

    let agent = Arc::new(ScriptedAgent::new(aligned_reply));
    let d = debug_case(&case("fixture/top_k", TOP_K_FLAWED, &[TOP_K_URL]), &corpus, &cfg, &gateway(&agent), &oracle, at(60)).unwrap();
    assert_eq!(d.diagnoses.len(), 1);
    assert_eq!(d.diagnoses[0].class, EipClass::ImplIncorrect);
    assert_eq!(d.diagnoses[0].correctness.unwrap().failure_class, Some(FailureClass::WrongOutput));

    let agent = Arc::new(ScriptedAgent::new(misaligned_reply));
    let d = debug_case(&case("fixture/same_chars", SAME_CHARS_COUNTED, &[SAME_CHARS_URL]), &corpus, &cfg, &gateway(&agent), &oracle, at(60))
        .unwrap();
    assert_eq!(d.diagnoses[0].class, EipClass::SpecMisalignment);
    assert!(d.diagnoses[0].correctness.is_none());
}

#[test]
fn unutilized_pages_cost_no_agent_or_oracle_calls() {
    let corpus = fixture_corpus();
    let agent = Arc::new(ScriptedAgent::new(aligned_reply));
    let oracle = oracle();
    let unrelated = "def shout(msg):\n    print(msg.upper() + '!')\n";
    let d = debug_case(&case("fixture/top_k", unrelated, &[TOP_K_URL, SAME_CHARS_URL]), &corpus, &DebugConfig::default(), &gateway(&agent), &oracle, at(60))
        .unwrap();
    assert!(d.utilization.pages.iter().all(|p| !p.utilized));
    assert!(d.diagnoses.is_empty());
    assert_eq!(agent.calls(), 0);
    assert_eq!(oracle.cached(), 0);
}
