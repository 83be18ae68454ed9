//! Detection, diagnosis and repair scores.
//!
//! Zero denominators yield 0 with `undefined = true`. Percentages are
//! rounded half away from zero to two decimals.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::score::Score;

/// A ratio together with its zero-denominator flag.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rate<S> {
    pub value: S,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub undefined: bool,
}

impl<S: Score> Rate<S> {
    pub fn of(num: u64, den: u64) -> Rate<S> {
        if den == 0 {
            Rate { value: S::zero(), undefined: true }
        } else {
            Rate { value: S::ratio(num, den), undefined: false }
        }
    }

    pub fn percent(&self) -> String {
        self.value.percent()
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
}

impl ConfusionCounts {
    pub fn precision<S: Score>(&self) -> Rate<S> {
        Rate::of(self.tp, self.tp + self.fp)
    }

    pub fn recall<S: Score>(&self) -> Rate<S> {
        Rate::of(self.tp, self.tp + self.fn_)
    }

    /// `2PR / (P + R)` computed exactly as `2tp / (2tp + fp + fn)`.
    pub fn f1<S: Score>(&self) -> Rate<S> {
        Rate::of(2 * self.tp, 2 * self.tp + self.fp + self.fn_)
    }
}

/// `2PR / (P + R)`; 0 and undefined when `P + R = 0`.
pub fn f1_from<S: Score>(precision: S, recall: S) -> Rate<S> {
    let sum = precision + recall;
    if sum == S::zero() {
        Rate { value: S::zero(), undefined: true }
    } else {
        Rate { value: (S::from_count(2) * precision * recall) / sum, undefined: false }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectionScore<S> {
    pub counts: ConfusionCounts,
    pub precision: Rate<S>,
    pub recall: Rate<S>,
    pub f1: Rate<S>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{0} predicted item(s) fall outside the labeled universe")]
pub struct OutsideUniverse(pub usize);

/// Confusion counts by set algebra over a labeled universe.
pub fn score_detection<S: Score, K: Ord>(
    predicted: &BTreeSet<K>,
    positives: &BTreeSet<K>,
    universe: &BTreeSet<K>,
) -> Result<DetectionScore<S>, OutsideUniverse> {
    let outside = predicted.difference(universe).count() + positives.difference(universe).count();
    if outside > 0 {
        return Err(OutsideUniverse(outside));
    }
    let tp = predicted.intersection(positives).count() as u64;
    let fp = predicted.len() as u64 - tp;
    let fn_ = positives.len() as u64 - tp;
    let tn = universe.len() as u64 - tp - fp - fn_;
    let counts = ConfusionCounts { tp, fp, fn_, tn };
    Ok(DetectionScore { counts, precision: counts.precision(), recall: counts.recall(), f1: counts.f1() })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassAccuracy<S> {
    pub correct: u64,
    pub total: u64,
    pub accuracy: Rate<S>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosisScore<K: Ord, S> {
    pub per_class: BTreeMap<K, ClassAccuracy<S>>,
    /// `Σ correctᵢ / Σ totalᵢ`.
    pub weighted: Rate<S>,
}

/// Accuracy per true class over `(predicted, truth)` pairs.
pub fn score_diagnosis<S: Score, K: Ord + Clone>(records: &[(K, K)]) -> DiagnosisScore<K, S> {
    let mut tallies: BTreeMap<K, (u64, u64)> = BTreeMap::new();
    for (pred, truth) in records {
        let e = tallies.entry(truth.clone()).or_default();
        e.1 += 1;
        if pred == truth {
            e.0 += 1;
        }
    }
    DiagnosisScore::from_tallies(tallies)
}

impl<K: Ord, S: Score> DiagnosisScore<K, S> {
    /// From `class → (correct, total)` counts.
    pub fn from_tallies(tallies: BTreeMap<K, (u64, u64)>) -> Self {
        let (c, t) = tallies.values().fold((0, 0), |(c, t), &(ci, ti)| (c + ci, t + ti));
        let per_class = tallies
            .into_iter()
            .map(|(k, (correct, total))| (k, ClassAccuracy { correct, total, accuracy: Rate::of(correct, total) }))
            .collect();
        DiagnosisScore { per_class, weighted: Rate::of(c, t) }
    }
}

/// Fraction of cases whose post-repair verdict passes.
pub fn score_repair<S: Score>(post_repair_pass: &[bool]) -> Rate<S> {
    let ok = post_repair_pass.iter().filter(|&&p| p).count() as u64;
    Rate::of(ok, post_repair_pass.len() as u64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    pub detection: DetectionScore<f64>,
    pub diagnosis: DiagnosisScore<String, f64>,
    pub repair_rate: Rate<f64>,
    pub repair_cases: u64,
}

impl ScoreReport {
    /// Plain-text table in the layout of the published result tables.
    pub fn render_table(&self) -> String {
        let d = &self.detection;
        let mut out = String::new();
        let _ = writeln!(out, "{:<36} {:>10}", "Metric", "Value");
        let _ = writeln!(out, "{:-<36} {:->10}", "", "");
        let row = |out: &mut String, name: &str, r: &Rate<f64>| {
            let v = if r.undefined { "undefined".to_string() } else { r.percent() };
            let _ = writeln!(out, "{name:<36} {v:>10}");
        };
        let _ = writeln!(out, "{:<36} {:>10}", "TP / FP / FN", format!("{}/{}/{}", d.counts.tp, d.counts.fp, d.counts.fn_));
        row(&mut out, "Precision", &d.precision);
        row(&mut out, "Recall", &d.recall);
        row(&mut out, "F1", &d.f1);
        for (class, acc) in &self.diagnosis.per_class {
            row(&mut out, &format!("Diagnosis {class} ({}/{})", acc.correct, acc.total), &acc.accuracy);
        }
        row(&mut out, "Diagnosis (weighted)", &self.diagnosis.weighted);
        row(&mut out, &format!("Repair rate (n={})", self.repair_cases), &self.repair_rate);
        out
    }
}
