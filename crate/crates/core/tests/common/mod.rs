#![allow(dead_code)]

pub mod mock;
pub mod program;

use std::sync::atomic::{AtomicUsize, Ordering};

use chrono::{DateTime, TimeZone, Utc};
use sherlock_core::corpus::{Comparison, Corpus, GenerationRecord, Manifest, Setting, Task, TestCase, Verdict, WebPageRecord};
use sherlock_core::gateway::{AgentRequest, ChatAgent, GatewayError};
use sherlock_core::oracle::{MemoEvaluator, OracleConfig, PythonOracle};
use sherlock_core::sii::SiiCase;

pub fn oracle() -> MemoEvaluator<PythonOracle> {
    MemoEvaluator::new(PythonOracle::new(OracleConfig::default()).expect("python3 available"))
}

pub fn at(minutes: i64) -> DateTime<Utc> {
    Utc.with_ymd_and_hms(2025, 3, 1, 0, 0, 0).unwrap() + chrono::Duration::minutes(minutes)
}

pub fn task(id: &str, description: &str, canonical: &str, tests: &[(&str, &str)]) -> Task {
    Task {
        task_id: id.into(),
        description: description.into(),
        canonical_solution: canonical.into(),
        test_suite: tests
            .iter()
            .map(|(i, e)| TestCase { input_literal: (*i).into(), expected_literal: (*e).into(), comparison: Comparison::Equality })
            .collect(),
        domain_tag: None,
    }
}

pub fn page(url: &str, title: &str, raw: &str, minutes: i64) -> WebPageRecord {
    let mut p = WebPageRecord { url: url.into(), title: title.into(), fetched_at: at(minutes), raw_content: raw.into(), snippets: Vec::new() };
    p.extract();
    p
}

pub const TOP_K_CANONICAL: &str = "def top_k_products(a, b, k):\n    products = sorted((x * y for x in a for y in b), reverse=True)\n    return products[:k]\n";

/// Ignores negative factors, so products of two negatives are lost.
pub const TOP_K_FLAWED: &str = "def top_k_products(a, b, k):\n    products = [x * y for x in a for y in b if x > 0 and y > 0]\n    products.sort(reverse=True)\n    return products[:k]\n";

pub fn top_k_task() -> Task {
    task(
        "fixture/top_k",
        "Given two lists of integers a and b and an integer k, return the k largest products x * y with x from a and y from b, in descending order. Lists may contain negative numbers.",
        TOP_K_CANONICAL,
        &[("top_k_products([1, 2], [3, 4], 2)", "[8, 6]"), ("top_k_products([-5, 1], [-4, 2], 1)", "[20]")],
    )
}

pub const TOP_K_URL: &str = "https://qa.example.org/questions/1001";

pub fn top_k_page() -> WebPageRecord {
    let html = format!(
        "<html><head><title>python - Efficient way to find top K products given two lists</title></head><body>\n\
         <p>I need the K largest pairwise products of two lists. This is what I use:</p>\n\
         <pre><code>{}</code></pre>\n<p>It is fast enough for lists of a few thousand items.</p>\n</body></html>\n",
        sherlock_core::extraction::escape_markup(TOP_K_FLAWED)
    );
    page(TOP_K_URL, "python - Efficient way to find top K products given two lists", &html, 0)
}

pub const SAME_CHARS_CANONICAL: &str = "def same_chars(s0, s1):\n    return set(s0) == set(s1)\n";
pub const SAME_CHARS_COUNTED: &str = "def same_chars(s0, s1):\n    return sorted(s0) == sorted(s1)\n";

pub fn same_chars_task() -> Task {
    task(
        "fixture/same_chars",
        "Check if two words have the same characters, ignoring how often each character occurs.",
        SAME_CHARS_CANONICAL,
        &[("same_chars('abcd', 'dddcba')", "True"), ("same_chars('abc', 'abd')", "False")],
    )
}

pub const SAME_CHARS_URL: &str = "https://forum.example.net/questions/2002";

pub fn same_chars_page() -> WebPageRecord {
    let md = format!(
        "# Check if two words have the same characters\n\n\
         Two words match only when every character occurs equally often in both, so repeated characters count.\n\n\
         ```python\n{SAME_CHARS_COUNTED}```\n\nSorting makes the comparison independent of order.\n"
    );
    page(SAME_CHARS_URL, "Check if two words have the same characters", &md, 5)
}

/// Corpus holding one SII case per page fixture, with 3 runs each.
pub fn fixture_corpus() -> Corpus {
    let tasks = vec![top_k_task(), same_chars_task()];
    let pages = vec![top_k_page(), same_chars_page()];
    let mut gens = Vec::new();
    for (t, url, web) in [(&tasks[0], TOP_K_URL, TOP_K_FLAWED), (&tasks[1], SAME_CHARS_URL, SAME_CHARS_COUNTED)] {
        for run in 0..3 {
            gens.push(generation(&t.task_id, Setting::Baseline, run, &t.canonical_solution, &[]));
            gens.push(generation(&t.task_id, Setting::WebAugmented, run, web, &[url]));
        }
    }
    Corpus::new(Manifest::default(), tasks, pages, gens).unwrap()
}

pub fn generation(task_id: &str, setting: Setting, run: u32, code: &str, urls: &[&str]) -> GenerationRecord {
    GenerationRecord {
        task_id: task_id.into(),
        setting,
        run_index: run,
        code: code.into(),
        retrieved_urls: urls.iter().map(|u| u.to_string()).collect(),
        verdict: Verdict::NotYetEvaluated,
    }
}

pub fn case(task_id: &str, code: &str, urls: &[&str]) -> SiiCase {
    SiiCase { task_id: task_id.into(), run_index: 0, erroneous_code: code.into(), retrieved_urls: urls.iter().map(|u| u.to_string()).collect() }
}

/// Agent answering from a closure over the request, counting calls.
pub struct ScriptedAgent<F> {
    reply: F,
    pub calls: AtomicUsize,
}

impl<F> ScriptedAgent<F> {
    pub fn new(reply: F) -> Self {
        ScriptedAgent { reply, calls: AtomicUsize::new(0) }
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

impl<F> ChatAgent for ScriptedAgent<F>
where
    F: Fn(&AgentRequest, usize) -> String + Send + Sync,
{
    fn complete_raw(&self, req: &AgentRequest) -> Result<String, GatewayError> {
        let n = self.calls.fetch_add(1, Ordering::SeqCst);
        Ok((self.reply)(req, n))
    }
}

/// Replies for a page that solves the task's problem.
pub fn aligned_reply(req: &AgentRequest, _: usize) -> String {
    if req.schema_id == sherlock_core::debugging::SUMMARY_SCHEMA {
        r#"{"WebPageProblem": "the same problem"}"#.into()
    } else {
        r#"{"WebPageProblemUseConditions": "", "Equivalence": true, "Rationale": "same problem"}"#.into()
    }
}

/// Replies for a page whose problem counts repeated characters.
pub fn misaligned_reply(req: &AgentRequest, _: usize) -> String {
    if req.schema_id == sherlock_core::debugging::SUMMARY_SCHEMA {
        r#"{"WebPageProblem": "Decide whether two words are anagrams, counting repeated characters."}"#.into()
    } else {
        r#"{"WebPageProblemUseConditions": "Only when repeated characters must occur equally often in both words.", "Equivalence": false, "Rationale": "The page counts repeated characters; the task ignores multiplicity."}"#.into()
    }
}
