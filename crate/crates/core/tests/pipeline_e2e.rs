mod common;

use std::path::Path;

use sherlock_core::cache::CacheStore;
use sherlock_core::debugging::EipClass;
use sherlock_core::gateway::Gateway;
use sherlock_core::harness::pipeline::{artifacts, RepairStatus};
use sherlock_core::harness::{run_pipeline, synth_corpus, PipelineConfig, PipelineRun, SynthConfig, SyntheticAgent};
use sherlock_core::oracle::Evaluator;

use common::oracle;

fn run(cfg: &SynthConfig, pipeline: &PipelineConfig, out: &Path, oracle: &dyn Evaluator) -> PipelineRun {
    let s = synth_corpus(cfg, oracle).unwrap();
    let gateway = Gateway::new(Box::new(SyntheticAgent::new(&s.labels)));
    run_pipeline(&s.corpus, Some(&s.labels), pipeline, &gateway, oracle, out).unwrap()
}

#[test]
fn clean_corpus_has_no_cases_and_an_empty_cache() {
    let out = tempfile::tempdir().unwrap();
    let cfg = SynthConfig { n_tasks: 8, eip_rate: 0.0, ..SynthConfig::default() };
    let r = run(&cfg, &PipelineConfig::default(), out.path(), &oracle());
    assert_eq!(r.report.sii_cases, 0);
    assert!(r.diagnoses.is_empty());
    assert_eq!(r.report.regressions, 0);
    assert!(CacheStore::open(out.path().join(artifacts::CACHE_DIR)).unwrap().is_empty());
}

#[test]
fn one_flawed_page_yields_one_repair() {
    let out = tempfile::tempdir().unwrap();
    let cfg = SynthConfig { n_tasks: 6, eip_count: Some(1), misalignment_fraction: 0.0, ..SynthConfig::default() };
    let r = run(&cfg, &PipelineConfig::default(), out.path(), &oracle());
    assert_eq!(r.report.sii_cases, 1);
    // clean pages holding the canonical code are utilized too, and cleared
    assert_eq!(r.report.diagnoses.get("impl_incorrect"), Some(&1));
    assert_eq!(r.diagnoses.iter().filter(|d| d.class != EipClass::NotEip).count(), 1);
    assert_eq!(r.repairs.len(), 1);
    assert!(matches!(r.repairs[0].status, RepairStatus::Repaired));
    let store = CacheStore::open(out.path().join(artifacts::CACHE_DIR)).unwrap();
    assert_eq!(store.len(), 1);
    assert!(r.repair_checks.iter().all(|c| c.passed));
    let scores = r.report.scores.unwrap();
    assert_eq!((scores.detection.counts.tp, scores.detection.counts.fp, scores.detection.counts.fn_), (1, 0, 0));
    for name in [artifacts::REPORT, artifacts::REPORT_TABLE, artifacts::DIAGNOSES, artifacts::AUDIT] {
        assert!(out.path().join(name).is_file(), "{name} missing");
    }
}

#[test]
fn misalignment_is_annotated_not_rewritten() {
    let out = tempfile::tempdir().unwrap();
    let cfg = SynthConfig { n_tasks: 6, eip_count: Some(1), misalignment_fraction: 1.0, ..SynthConfig::default() };
    let r = run(&cfg, &PipelineConfig::default(), out.path(), &oracle());
    assert_eq!(r.report.diagnoses.get("spec_misalignment"), Some(&1));
    let store = CacheStore::open(out.path().join(artifacts::CACHE_DIR)).unwrap();
    let entry = store.entries(&store.libraries()[0]).remove(0);
    assert!(entry.content.contains(sherlock_core::cache::METADATA_BEGIN));
    assert!(r.repair_checks.iter().all(|c| c.passed));
}

#[test]
fn sabotage_is_caught_by_the_audit() {
    let out = tempfile::tempdir().unwrap();
    let cfg = SynthConfig { n_tasks: 12, tasks_per_page: 3, eip_count: Some(2), ..SynthConfig::default() };
    let oracle = oracle();
    let honest = run(&cfg, &PipelineConfig::default(), out.path(), &oracle);
    assert_eq!(honest.report.regressions, 0);
    let out = tempfile::tempdir().unwrap();
    let sabotaged = run(&cfg, &PipelineConfig { sabotage: true, ..PipelineConfig::default() }, out.path(), &oracle);
    assert!(sabotaged.report.regressions >= 1);
}

#[test]
fn reruns_are_byte_identical() {
    let cfg = SynthConfig { n_tasks: 10, eip_rate: 0.3, ..SynthConfig::default() };
    let oracle = oracle();
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    for d in &dirs {
        run(&cfg, &PipelineConfig::default(), d.path(), &oracle);
    }
    for name in [artifacts::DIAGNOSES, artifacts::REPORT, artifacts::REPAIRS, artifacts::AUDIT] {
        let a = std::fs::read(dirs[0].path().join(name)).unwrap();
        let b = std::fs::read(dirs[1].path().join(name)).unwrap();
        assert!(a == b, "{name} differs");
    }
}
