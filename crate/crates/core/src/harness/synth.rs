//! Seeded synthetic corpus with injected error-inducing pages.
//!
//! Layout: tasks are instances of [`FAMILIES`]; each task (or, with
//! `tasks_per_page > 1`, each group of same-family tasks) owns
//! `n_pages_per_task` pages that embed the family's canonical solution.
//! Injected pages are either mutated (implementation incorrect, verified
//! to fail a test) or swapped with another family's prose and code
//! (misaligned, verified to fail a test).

use std::collections::{BTreeMap, HashMap, HashSet};

use chrono::{DateTime, Duration, TimeZone, Utc};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::copy_model::CopyModel;
use super::mutation::{mutation_sites, MutationKind};
use super::templates::{family, Family, FAMILIES};
use crate::cache::{Regenerator, ServedPage};
use crate::corpus::{Comparison, Corpus, CorpusError, GenerationRecord, Manifest, Setting, Task, TestCase, Verdict, WebPageRecord};
use crate::debugging::{adapt_to_entry_point, EipClass};
use crate::extraction::escape_markup;
use crate::oracle::{Evaluator, OracleError};

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid synth config: {0}")]
    Config(String),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub seed: u64,
    pub n_tasks: usize,
    pub n_pages_per_task: usize,
    /// Per-page injection probability; ignored when `eip_count` is set.
    pub eip_rate: f64,
    /// Exact number of injections, at most one per page group.
    pub eip_count: Option<usize>,
    pub misalignment_fraction: f64,
    pub mutations: Vec<MutationKind>,
    /// Tasks sharing one set of pages.
    pub tasks_per_page: usize,
    pub n_runs: u32,
    pub copy_bias: f64,
    /// Candidate variants tried per injection before giving up.
    pub max_attempts: usize,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            seed: 7,
            n_tasks: 40,
            n_pages_per_task: 3,
            eip_rate: 0.1,
            eip_count: None,
            misalignment_fraction: 0.88,
            mutations: MutationKind::ALL.to_vec(),
            tasks_per_page: 1,
            n_runs: 3,
            copy_bias: 1.0,
            max_attempts: 8,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<(), SynthError> {
        let unit = |x: f64| (0.0..=1.0).contains(&x);
        let err = |m: &str| Err(SynthError::Config(m.into()));
        if !unit(self.eip_rate) || !unit(self.misalignment_fraction) || !unit(self.copy_bias) {
            return err("eip_rate, misalignment_fraction and copy_bias must lie in [0, 1]");
        }
        if self.n_pages_per_task == 0 || self.tasks_per_page == 0 || self.n_runs == 0 {
            return err("n_pages_per_task, tasks_per_page and n_runs must be at least 1");
        }
        if self.mutations.is_empty() {
            return err("at least one mutation kind must be enabled");
        }
        if self.max_attempts == 0 {
            return err("max_attempts must be at least 1");
        }
        if let Some(m) = self.eip_count.filter(|&m| m > self.n_groups()) {
            return Err(SynthError::Config(format!("eip_count {m} exceeds the {} page groups", self.n_groups())));
        }
        Ok(())
    }

    fn n_groups(&self) -> usize {
        self.n_tasks.div_ceil(self.tasks_per_page)
    }
}

/// Ground truth for one page.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PageLabel {
    pub url: String,
    pub class: EipClass,
    /// Family of the tasks that retrieve the page.
    pub family: String,
    /// Family whose problem the page actually presents.
    pub content_family: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mutation: Option<MutationKind>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SynthLabels {
    /// task id to family name.
    pub tasks: BTreeMap<String, String>,
    pub pages: Vec<PageLabel>,
}

impl SynthLabels {
    pub fn page(&self, url: &str) -> Option<&PageLabel> {
        self.pages.iter().find(|p| p.url == url)
    }

    /// True class of `url` for `task_id`, when both are labeled.
    pub fn truth(&self, task_id: &str, url: &str) -> Option<EipClass> {
        let task_family = self.tasks.get(task_id)?;
        let page = self.page(url)?;
        Some(if &page.family == task_family { page.class } else { EipClass::SpecMisalignment })
    }

    pub fn injected(&self) -> impl Iterator<Item = &PageLabel> {
        self.pages.iter().filter(|p| p.class.is_eip())
    }
}

#[derive(Debug, Clone)]
pub struct SynthCorpus {
    pub corpus: Corpus,
    pub labels: SynthLabels,
    /// Groups whose injection could not be realized.
    pub skipped: Vec<String>,
}

const HOSTS: &[&str] = &["qa.example.org", "forum.example.net", "snippets.example.com", "docs.example.io"];
const LEAD_INS: &[&str] = &[
    "Here is a straightforward way to do it:",
    "This version is short and easy to read:",
    "You can solve it with a single function:",
    "The following works for the cases described above:",
];
const TRAILERS: &[&str] = &[
    "It runs in time proportional to the input size for typical inputs.",
    "Tested with a handful of small examples.",
    "Edge cases such as empty input are handled as well.",
    "Feel free to adapt the names to your code base.",
];

fn to_task(f: &Family, index: usize) -> Task {
    Task {
        task_id: format!("synth/{index:04}"),
        description: f.description.to_string(),
        canonical_solution: f.code.to_string(),
        test_suite: f
            .tests
            .iter()
            .map(|(args, expected)| TestCase {
                input_literal: format!("{}({args})", f.name),
                expected_literal: expected.to_string(),
                comparison: Comparison::Equality,
            })
            .collect(),
        domain_tag: None,
    }
}

/// What a page presents: its problem and its code.
struct PageBody<'a> {
    family: &'a Family,
    code: String,
}

fn render_page(rng: &mut ChaCha8Rng, body: &PageBody<'_>) -> (String, String) {
    let f = body.family;
    let title = format!("python - {}", f.title);
    let lead = LEAD_INS[rng.random_range(0..LEAD_INS.len())];
    let trailer = TRAILERS[rng.random_range(0..TRAILERS.len())];
    let (args, expected) = f.tests[rng.random_range(0..f.tests.len())];
    let example = format!(">>> {}({args})\n{expected}\n", f.name);
    let with_example = rng.random_bool(0.5);
    let raw = if rng.random_bool(0.8) {
        let example_block = if with_example {
            format!("<p>Example:</p>\n<pre>{}</pre>\n", escape_markup(&example))
        } else {
            String::new()
        };
        format!(
            "<!DOCTYPE html>\n<html><head><title>{t}</title></head>\n<body>\n<div class=\"question\">\n<h1>{t}</h1>\n<p>{d}</p>\n</div>\n<div class=\"answer\">\n<p>{lead}</p>\n<pre><code class=\"language-python\">{code}</code></pre>\n{example_block}<p>{trailer}</p>\n</div>\n</body></html>\n",
            t = escape_markup(&title),
            d = escape_markup(f.description),
            code = escape_markup(&body.code),
        )
    } else {
        let example_block = if with_example { format!("Example:\n\n```\n{example}```\n\n") } else { String::new() };
        format!(
            "# {}\n\n{}\n\n{lead}\n\n```python\n{}```\n\n{example_block}{trailer}\n",
            f.title, f.description, body.code
        )
    };
    (title, raw)
}

struct Verifier<'a> {
    oracle: &'a dyn Evaluator,
    memo: HashMap<(String, String), bool>,
}

impl Verifier<'_> {
    /// Whether `code`, bound to the task's entry point the way a copying
    /// generator would bind it, fails at least one test of `task`.
    fn fails(&mut self, code: &str, task: &Task, family: &str) -> Result<bool, OracleError> {
        let key = (family.to_string(), code.to_string());
        if let Some(&v) = self.memo.get(&key) {
            return Ok(v);
        }
        let v = !self.oracle.evaluate(&adapt_to_entry_point(code, task), task)?.passed();
        self.memo.insert(key, v);
        Ok(v)
    }
}

enum Injection {
    Clean,
    Mutated(MutationKind, String),
    Swapped(&'static Family),
}

fn inject(
    cfg: &SynthConfig,
    rng: &mut ChaCha8Rng,
    verifier: &mut Verifier<'_>,
    fam: &'static Family,
    task: &Task,
    misaligned: bool,
) -> Result<Injection, OracleError> {
    if misaligned {
        let mut donors: Vec<&'static Family> = FAMILIES.iter().filter(|d| d.name != fam.name).collect();
        donors.shuffle(rng);
        if let Some(s) = fam.sibling.and_then(family) {
            donors.retain(|d| d.name != s.name);
            donors.insert(0, s);
        }
        for donor in donors.into_iter().take(cfg.max_attempts) {
            if verifier.fails(donor.code, task, fam.name)? {
                return Ok(Injection::Swapped(donor));
            }
        }
    } else {
        let mut sites = mutation_sites(fam.code, &cfg.mutations);
        sites.shuffle(rng);
        for site in sites.into_iter().take(cfg.max_attempts) {
            let mutant = site.apply(fam.code);
            if verifier.fails(&mutant, task, fam.name)? {
                return Ok(Injection::Mutated(site.kind, mutant));
            }
        }
    }
    Ok(Injection::Clean)
}

pub fn synth_corpus(cfg: &SynthConfig, oracle: &dyn Evaluator) -> Result<SynthCorpus, SynthError> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut verifier = Verifier { oracle, memo: HashMap::new() };
    let offset = rng.random_range(0..FAMILIES.len());
    let n_groups = cfg.n_groups();
    let group_family = |g: usize| &FAMILIES[(g + offset) % FAMILIES.len()];

    // group of each task: consecutive tasks share pages in shared layouts
    let tasks: Vec<(usize, Task)> = (0..cfg.n_tasks)
        .map(|i| {
            let g = i / cfg.tasks_per_page;
            (g, to_task(group_family(g), i))
        })
        .collect();

    // (group, slot) -> misaligned?
    let mut planned: BTreeMap<(usize, usize), bool> = BTreeMap::new();
    let mut exact_order: Vec<usize> = Vec::new();
    let mut exact_classes: Vec<bool> = Vec::new();
    match cfg.eip_count {
        Some(m) => {
            let n_mis = (m as f64 * cfg.misalignment_fraction).round() as usize;
            exact_classes = (0..m).map(|i| i < n_mis).collect();
            exact_classes.shuffle(&mut rng);
            exact_order = (0..n_groups).collect();
            exact_order.shuffle(&mut rng);
        }
        None => {
            for g in 0..n_groups {
                for slot in 0..cfg.n_pages_per_task {
                    if rng.random_bool(cfg.eip_rate) {
                        planned.insert((g, slot), rng.random_bool(cfg.misalignment_fraction));
                    }
                }
            }
        }
    }

    let first_task = |g: usize| &tasks[g * cfg.tasks_per_page].1;
    let mut injections: BTreeMap<(usize, usize), Injection> = BTreeMap::new();
    let mut skipped = Vec::new();
    if cfg.eip_count.is_some() {
        let mut groups = exact_order.into_iter();
        for misaligned in exact_classes {
            loop {
                let Some(g) = groups.next() else {
                    log::warn!("ran out of page groups while injecting");
                    break;
                };
                match inject(cfg, &mut rng, &mut verifier, group_family(g), first_task(g), misaligned)? {
                    Injection::Clean => skipped.push(first_task(g).task_id.clone()),
                    inj => {
                        injections.insert((g, 0), inj);
                        break;
                    }
                }
            }
        }
    } else {
        for (&(g, slot), &misaligned) in &planned {
            match inject(cfg, &mut rng, &mut verifier, group_family(g), first_task(g), misaligned)? {
                Injection::Clean => skipped.push(first_task(g).task_id.clone()),
                inj => {
                    injections.insert((g, slot), inj);
                }
            }
        }
    }
    for t in &skipped {
        log::warn!("no failing variant found for {t}; its pages stay clean");
    }

    let base: DateTime<Utc> = Utc.with_ymd_and_hms(2025, 3, 1, 0, 0, 0).unwrap();
    let mut used_urls = HashSet::new();
    let mut pages = Vec::new();
    let mut labels = SynthLabels::default();
    // group -> page urls by slot
    let mut group_pages: Vec<Vec<String>> = Vec::with_capacity(n_groups);
    for g in 0..n_groups {
        let fam = group_family(g);
        let mut urls = Vec::new();
        for slot in 0..cfg.n_pages_per_task {
            let (body, class, mutation) = match injections.get(&(g, slot)) {
                Some(Injection::Mutated(kind, code)) => {
                    (PageBody { family: fam, code: code.clone() }, EipClass::ImplIncorrect, Some(*kind))
                }
                Some(Injection::Swapped(donor)) => {
                    (PageBody { family: donor, code: donor.code.to_string() }, EipClass::SpecMisalignment, None)
                }
                _ => (PageBody { family: fam, code: fam.code.to_string() }, EipClass::NotEip, None),
            };
            let url = loop {
                let host = HOSTS[rng.random_range(0..HOSTS.len())];
                let id: u32 = rng.random_range(100_000..1_000_000);
                let u = format!("https://{host}/questions/{id}");
                if used_urls.insert(u.clone()) {
                    break u;
                }
            };
            let (title, raw_content) = render_page(&mut rng, &body);
            let fetched_at = base + Duration::minutes((pages.len() * 7) as i64);
            labels.pages.push(PageLabel {
                url: url.clone(),
                class,
                family: fam.name.into(),
                content_family: body.family.name.into(),
                mutation,
            });
            pages.push(WebPageRecord { url: url.clone(), title, fetched_at, raw_content, snippets: Vec::new() });
            urls.push(url);
        }
        group_pages.push(urls);
    }

    let model = CopyModel::new(cfg.copy_bias, cfg.seed);
    let by_url: HashMap<&str, &WebPageRecord> = pages.iter().map(|p| (p.url.as_str(), p)).collect();
    let eip_url: HashSet<String> = labels.injected().map(|p| p.url.clone()).collect();
    for (g, task) in &tasks {
        labels.tasks.insert(task.task_id.clone(), group_family(*g).name.into());
    }
    let mut generations = Vec::new();
    for (i, (g, task)) in tasks.iter().enumerate() {
        let mut order = group_pages[*g].clone();
        if cfg.tasks_per_page > 1 {
            let shift = i % cfg.tasks_per_page % order.len();
            order.rotate_left(shift);
        } else {
            // injected pages rank first
            order.sort_by_key(|u| !eip_url.contains(u));
        }
        let served: Vec<ServedPage> = order
            .iter()
            .map(|u| {
                let p = by_url[u.as_str()];
                ServedPage { url: p.url.clone(), title: p.title.clone(), content: p.raw_content.clone() }
            })
            .collect();
        let web_code = model.regenerate(task, &served);
        for run in 0..cfg.n_runs {
            generations.push(GenerationRecord {
                task_id: task.task_id.clone(),
                setting: Setting::Baseline,
                run_index: run,
                code: task.canonical_solution.clone(),
                retrieved_urls: Vec::new(),
                verdict: Verdict::NotYetEvaluated,
            });
            generations.push(GenerationRecord {
                task_id: task.task_id.clone(),
                setting: Setting::WebAugmented,
                run_index: run,
                code: web_code.clone(),
                retrieved_urls: order.clone(),
                verdict: Verdict::NotYetEvaluated,
            });
        }
    }

    let tasks = tasks.into_iter().map(|(_, t)| t).collect();
    let corpus = Corpus::new(Manifest::default(), tasks, pages, generations)?;
    Ok(SynthCorpus { corpus, labels, skipped })
}
