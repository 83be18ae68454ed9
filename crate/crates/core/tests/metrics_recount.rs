//! Formula outputs against a brute-force recount over raw records.

use std::collections::BTreeSet;

use num_rational::Rational64;
use proptest::prelude::*;
use sherlock_core::corpus::Setting;
use sherlock_core::metrics::{f1_from, score_detection, score_diagnosis, score_repair};
use sherlock_core::sii::{compute_metrics, decide_task_verdict, nir, transitions, Outcome, RunVerdict, TaskVerdict, TransitionKind};

type Q = Rational64;

/// Labeled items: (predicted, actually positive).
fn arb_confusion() -> impl Strategy<Value = Vec<(bool, bool)>> {
    prop::collection::vec((any::<bool>(), any::<bool>()), 0..60)
}

fn recount(items: &[(bool, bool)]) -> (u64, u64, u64) {
    let mut tp = 0;
    let mut fp = 0;
    let mut fn_ = 0;
    for &(p, a) in items {
        match (p, a) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            (false, false) => {}
        }
    }
    (tp, fp, fn_)
}

fn sets(items: &[(bool, bool)]) -> (BTreeSet<usize>, BTreeSet<usize>, BTreeSet<usize>) {
    let predicted = items.iter().enumerate().filter(|(_, x)| x.0).map(|(i, _)| i).collect();
    let positives = items.iter().enumerate().filter(|(_, x)| x.1).map(|(i, _)| i).collect();
    (predicted, positives, (0..items.len()).collect())
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 1000, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn detection_matches_recount(items in arb_confusion()) {
        let (tp, fp, fn_) = recount(&items);
        let (predicted, positives, universe) = sets(&items);
        let s = score_detection::<Q, _>(&predicted, &positives, &universe).unwrap();
        prop_assert_eq!((s.counts.tp, s.counts.fp, s.counts.fn_), (tp, fp, fn_));
        prop_assert_eq!(s.counts.tn, items.len() as u64 - tp - fp - fn_);
        let ratio = |n: u64, d: u64| if d == 0 { Q::from_integer(0) } else { Q::new(n as i64, d as i64) };
        prop_assert_eq!(s.precision.value, ratio(tp, tp + fp));
        prop_assert_eq!(s.recall.value, ratio(tp, tp + fn_));
        prop_assert_eq!(s.precision.undefined, tp + fp == 0);
        let p = s.precision.value;
        let r = s.recall.value;
        let f1 = if p + r == Q::from_integer(0) { Q::from_integer(0) } else { Q::from_integer(2) * p * r / (p + r) };
        prop_assert_eq!(s.f1.value, f1);
        prop_assert_eq!(f1_from(p, r).value, f1);
    }

    #[test]
    fn diagnosis_and_repair_match_recount(records in prop::collection::vec((0u8..2, 0u8..2), 0..60), passes in prop::collection::vec(any::<bool>(), 0..60)) {
        let s = score_diagnosis::<Q, u8>(&records);
        for class in 0u8..2 {
            let total = records.iter().filter(|r| r.1 == class).count() as u64;
            let correct = records.iter().filter(|r| r.1 == class && r.0 == class).count() as u64;
            match s.per_class.get(&class) {
                Some(c) => prop_assert_eq!((c.correct, c.total), (correct, total)),
                None => prop_assert_eq!(total, 0),
            }
        }
        let correct = records.iter().filter(|r| r.0 == r.1).count() as i64;
        if !records.is_empty() {
            prop_assert_eq!(s.weighted.value, Q::new(correct, records.len() as i64));
        }
        let rate = score_repair::<Q>(&passes);
        if !passes.is_empty() {
            prop_assert_eq!(rate.value, Q::new(passes.iter().filter(|&&p| p).count() as i64, passes.len() as i64));
        } else {
            prop_assert!(rate.undefined);
        }
    }

    #[test]
    fn scores_are_permutation_invariant(items in arb_confusion(), seed in any::<u64>()) {
        use rand::seq::SliceRandom;
        use rand::SeedableRng;
        let mut shuffled = items.clone();
        shuffled.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
        let records: Vec<(bool, bool)> = items.clone();
        let a = score_diagnosis::<Q, bool>(&records);
        let b = score_diagnosis::<Q, bool>(&shuffled);
        prop_assert_eq!(a, b);
        prop_assert_eq!(recount(&items), recount(&shuffled));
    }

    #[test]
    fn transitions_partition_tasks(pairs in prop::collection::vec((prop::collection::vec(any::<bool>(), 1..4), prop::collection::vec(any::<bool>(), 1..4)), 0..40)) {
        let mut verdicts = Vec::new();
        for (i, (base, web)) in pairs.iter().enumerate() {
            for (setting, runs) in [(Setting::Baseline, base), (Setting::WebAugmented, web)] {
                let run_verdicts: Vec<RunVerdict> = runs.iter().map(|&p| if p { RunVerdict::Pass } else { RunVerdict::Fail }).collect();
                verdicts.push(TaskVerdict { task_id: format!("t{i:03}"), setting, outcome: decide_task_verdict(&run_verdicts).unwrap(), run_verdicts });
            }
        }
        let ts = transitions(&verdicts).unwrap();
        prop_assert_eq!(ts.len(), pairs.len());
        let m = compute_metrics::<Q>(&ts, &verdicts);
        let count = |k| ts.iter().filter(|t| t.kind == k).count() as u64;
        prop_assert_eq!(count(TransitionKind::NewError) + count(TransitionKind::NewCorrect) + count(TransitionKind::StableCorrect) + count(TransitionKind::StableIncorrect), pairs.len() as u64);
        let all = |rs: &Vec<bool>| rs.iter().all(|&p| p);
        let e = pairs.iter().filter(|(b, w)| all(b) && !all(w)).count() as u64;
        let c = pairs.iter().filter(|(b, w)| !all(b) && all(w)).count() as u64;
        prop_assert_eq!((m.e, m.c), (e, c));
        prop_assert_eq!(m.nir, nir::<Q>(e, c));
    }

    #[test]
    fn task_verdict_ignores_run_order(mut runs in prop::collection::vec(any::<bool>(), 1..8)) {
        let as_verdicts = |rs: &[bool]| rs.iter().map(|&p| if p { RunVerdict::Pass } else { RunVerdict::Fail }).collect::<Vec<_>>();
        let before = decide_task_verdict(&as_verdicts(&runs));
        runs.reverse();
        prop_assert_eq!(before, decide_task_verdict(&as_verdicts(&runs)));
        prop_assert_eq!(before == Some(Outcome::Correct), runs.iter().all(|&p| p));
    }
}

#[test]
fn float_and_exact_scalars_agree_on_published_rates() {
    for (n, d) in [(206u64, 220u64), (188, 205), (32, 37), (220, 242), (17, 23), (25, 32)] {
        assert_eq!(score_repair::<f64>(&vec_of(n, d)).percent(), score_repair::<Q>(&vec_of(n, d)).percent());
        assert_eq!(score_repair::<f32>(&vec_of(n, d)).percent(), score_repair::<Q>(&vec_of(n, d)).percent());
    }
}

fn vec_of(n: u64, d: u64) -> Vec<bool> {
    (0..d).map(|i| i < n).collect()
}
