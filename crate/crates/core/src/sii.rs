//! Search-induced issue detection: baseline vs. web-augmented task verdicts,
//! transition classes, and the study metrics (E, C, NIR, Pass@1).

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Corpus, GenerationRecord, Setting, Verdict};
use crate::metrics::Rate;
use crate::oracle::{Evaluator, OracleError};
use crate::score::Score;

#[derive(Debug, Error)]
pub enum SiiError {
    #[error("task {0} has no runs")]
    EmptyRuns(String),
    #[error("task {task_id} is missing its {setting:?} verdict")]
    MissingVerdict { task_id: String, setting: Setting },
    #[error("generation {task_id} run {run_index} has not been evaluated")]
    Unevaluated { task_id: String, run_index: u32 },
    #[error(transparent)]
    Oracle(#[from] OracleError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Correct,
    Incorrect,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunVerdict {
    Pass,
    Fail,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskVerdict {
    pub task_id: String,
    pub setting: Setting,
    pub outcome: Outcome,
    pub run_verdicts: Vec<RunVerdict>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransitionKind {
    NewError,
    NewCorrect,
    StableCorrect,
    StableIncorrect,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransitionRecord {
    pub task_id: String,
    pub kind: TransitionKind,
}

/// `E / C`, or NA when no task became correct.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Nir<S> {
    Value(S),
    Na,
}

impl<S: Score> Nir<S> {
    pub fn percent(&self) -> String {
        match self {
            Nir::Value(v) => v.percent(),
            Nir::Na => "NA".into(),
        }
    }
}

impl<S: Serialize> Serialize for Nir<S> {
    fn serialize<Ser: serde::Serializer>(&self, s: Ser) -> Result<Ser::Ok, Ser::Error> {
        match self {
            Nir::Value(v) => v.serialize(s),
            Nir::Na => s.serialize_str("NA"),
        }
    }
}

impl<'de> Deserialize<'de> for Nir<f64> {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Str(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(v) => Ok(Nir::Value(v)),
            Raw::Str(s) if s == "NA" => Ok(Nir::Na),
            Raw::Str(s) => Err(serde::de::Error::custom(format!("expected a number or \"NA\", got {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "S: Serialize", deserialize = "Nir<S>: Deserialize<'de>, Rate<S>: Deserialize<'de>"))]
pub struct StudyMetrics<S> {
    #[serde(rename = "E")]
    pub e: u64,
    #[serde(rename = "C")]
    pub c: u64,
    pub nir: Nir<S>,
    pub pass_at_1_baseline: Rate<S>,
    pub pass_at_1_web: Rate<S>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SiiCase {
    pub task_id: String,
    /// Lowest-index failing web-augmented run.
    pub run_index: u32,
    pub erroneous_code: String,
    pub retrieved_urls: Vec<String>,
}

/// Correct iff every run passes.
pub fn decide_task_verdict(runs: &[RunVerdict]) -> Option<Outcome> {
    if runs.is_empty() {
        return None;
    }
    Some(if runs.iter().all(|&r| r == RunVerdict::Pass) { Outcome::Correct } else { Outcome::Incorrect })
}

pub fn classify_transition(baseline: Outcome, web: Outcome) -> TransitionKind {
    match (baseline, web) {
        (Outcome::Correct, Outcome::Incorrect) => TransitionKind::NewError,
        (Outcome::Incorrect, Outcome::Correct) => TransitionKind::NewCorrect,
        (Outcome::Correct, Outcome::Correct) => TransitionKind::StableCorrect,
        (Outcome::Incorrect, Outcome::Incorrect) => TransitionKind::StableIncorrect,
    }
}

/// NIR and counts from E and C alone.
pub fn nir<S: Score>(e: u64, c: u64) -> Nir<S> {
    if c == 0 {
        Nir::Na
    } else {
        Nir::Value(S::ratio(e, c))
    }
}

pub fn compute_metrics<S: Score>(transitions: &[TransitionRecord], verdicts: &[TaskVerdict]) -> StudyMetrics<S> {
    let count = |k| transitions.iter().filter(|t| t.kind == k).count() as u64;
    let (e, c) = (count(TransitionKind::NewError), count(TransitionKind::NewCorrect));
    let pass_at_1 = |setting| {
        let runs = verdicts.iter().filter(|v| v.setting == setting).flat_map(|v| &v.run_verdicts);
        let (pass, total) = runs.fold((0u64, 0u64), |(p, t), r| (p + u64::from(*r == RunVerdict::Pass), t + 1));
        Rate::of(pass, total)
    };
    StudyMetrics {
        e,
        c,
        nir: nir(e, c),
        pass_at_1_baseline: pass_at_1(Setting::Baseline),
        pass_at_1_web: pass_at_1(Setting::WebAugmented),
    }
}

/// Fill in `verdict` for every generation with `run_index < runs`.
/// Records beyond the run budget are dropped.
pub fn evaluate_generations(
    corpus: &Corpus,
    oracle: &dyn Evaluator,
    runs: Option<u32>,
) -> Result<Vec<GenerationRecord>, SiiError> {
    corpus
        .generations()
        .par_iter()
        .filter(|g| runs.is_none_or(|r| g.run_index < r))
        .map(|g| {
            let task = corpus.task(&g.task_id).expect("validated corpus");
            let mut g = g.clone();
            if g.verdict == Verdict::NotYetEvaluated {
                let passed = oracle.evaluate(&g.code, task)?.passed();
                g.verdict = if passed { Verdict::Pass } else { Verdict::Fail };
            }
            Ok(g)
        })
        .collect()
}

/// Per-(task, setting) verdicts, ordered by task id then setting.
pub fn task_verdicts(generations: &[GenerationRecord]) -> Result<Vec<TaskVerdict>, SiiError> {
    let mut grouped: BTreeMap<(&str, Setting), Vec<&GenerationRecord>> = BTreeMap::new();
    for g in generations {
        grouped.entry((&g.task_id, g.setting)).or_default().push(g);
    }
    grouped
        .into_iter()
        .map(|((task_id, setting), mut gens)| {
            gens.sort_by_key(|g| g.run_index);
            let run_verdicts = gens
                .iter()
                .map(|g| match g.verdict {
                    Verdict::Pass => Ok(RunVerdict::Pass),
                    Verdict::Fail => Ok(RunVerdict::Fail),
                    Verdict::NotYetEvaluated => {
                        Err(SiiError::Unevaluated { task_id: g.task_id.clone(), run_index: g.run_index })
                    }
                })
                .collect::<Result<Vec<_>, _>>()?;
            let outcome = decide_task_verdict(&run_verdicts).ok_or_else(|| SiiError::EmptyRuns(task_id.into()))?;
            Ok(TaskVerdict { task_id: task_id.into(), setting, outcome, run_verdicts })
        })
        .collect()
}

/// One transition per task that has verdicts in both settings.
pub fn transitions(verdicts: &[TaskVerdict]) -> Result<Vec<TransitionRecord>, SiiError> {
    let mut by_task: BTreeMap<&str, (Option<Outcome>, Option<Outcome>)> = BTreeMap::new();
    for v in verdicts {
        let e = by_task.entry(&v.task_id).or_default();
        match v.setting {
            Setting::Baseline => e.0 = Some(v.outcome),
            Setting::WebAugmented => e.1 = Some(v.outcome),
        }
    }
    by_task
        .into_iter()
        .map(|(task_id, pair)| match pair {
            (Some(b), Some(w)) => Ok(TransitionRecord { task_id: task_id.into(), kind: classify_transition(b, w) }),
            (None, _) => Err(SiiError::MissingVerdict { task_id: task_id.into(), setting: Setting::Baseline }),
            (_, None) => Err(SiiError::MissingVerdict { task_id: task_id.into(), setting: Setting::WebAugmented }),
        })
        .collect()
}

/// One case per new-error task, carrying its first failing web run.
pub fn collect_sii_cases(generations: &[GenerationRecord], transitions: &[TransitionRecord]) -> Vec<SiiCase> {
    transitions
        .iter()
        .filter(|t| t.kind == TransitionKind::NewError)
        .filter_map(|t| {
            generations
                .iter()
                .filter(|g| g.task_id == t.task_id && g.setting == Setting::WebAugmented && g.verdict == Verdict::Fail)
                .min_by_key(|g| g.run_index)
                .map(|g| SiiCase {
                    task_id: g.task_id.clone(),
                    run_index: g.run_index,
                    erroneous_code: g.code.clone(),
                    retrieved_urls: g.retrieved_urls.clone(),
                })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_rational::Rational64;
    use RunVerdict::{Fail, Pass};

    #[test]
    fn all_runs_must_pass() {
        assert_eq!(decide_task_verdict(&[Pass, Pass, Pass]), Some(Outcome::Correct));
        assert_eq!(decide_task_verdict(&[Pass, Fail, Pass]), Some(Outcome::Incorrect));
        assert_eq!(decide_task_verdict(&[Fail]), Some(Outcome::Incorrect));
        assert_eq!(decide_task_verdict(&[]), None);
    }

    #[test]
    fn transitions_by_pair() {
        use Outcome::*;
        assert_eq!(classify_transition(Correct, Incorrect), TransitionKind::NewError);
        assert_eq!(classify_transition(Incorrect, Correct), TransitionKind::NewCorrect);
        assert_eq!(classify_transition(Correct, Correct), TransitionKind::StableCorrect);
        assert_eq!(classify_transition(Incorrect, Incorrect), TransitionKind::StableIncorrect);
    }

    #[test]
    fn nir_values() {
        assert_eq!(nir::<Rational64>(17, 23).percent(), "73.91%");
        assert_eq!(nir::<Rational64>(15, 15).percent(), "100.00%");
        assert_eq!(nir::<Rational64>(4, 0), Nir::Na);
        assert_eq!(serde_json::to_string(&nir::<f64>(4, 0)).unwrap(), "\"NA\"");
    }

    fn gen(task: &str, setting: Setting, run: u32, verdict: Verdict) -> GenerationRecord {
        GenerationRecord {
            task_id: task.into(),
            setting,
            run_index: run,
            code: format!("# {task} {run}"),
            retrieved_urls: if setting == Setting::WebAugmented { vec!["https://x.example/".into()] } else { vec![] },
            verdict,
        }
    }

    #[test]
    fn sii_case_uses_first_failing_run() {
        use Setting::*;
        let gens = vec![
            gen("t", Baseline, 0, Verdict::Pass),
            gen("t", WebAugmented, 2, Verdict::Fail),
            gen("t", WebAugmented, 0, Verdict::Pass),
            gen("t", WebAugmented, 1, Verdict::Fail),
            gen("u", Baseline, 0, Verdict::Pass),
            gen("u", WebAugmented, 0, Verdict::Pass),
        ];
        let v = task_verdicts(&gens).unwrap();
        let tr = transitions(&v).unwrap();
        assert_eq!(tr.len(), 2);
        let cases = collect_sii_cases(&gens, &tr);
        assert_eq!(cases.len(), 1);
        assert_eq!(cases[0].run_index, 1);
        assert_eq!(cases[0].erroneous_code, "# t 1");
        let m = compute_metrics::<Rational64>(&tr, &v);
        assert_eq!((m.e, m.c), (1, 0));
        assert_eq!(m.nir, Nir::Na);
        assert_eq!(m.pass_at_1_web.value, Rational64::new(2, 4));
    }

    #[test]
    fn missing_setting_is_an_error() {
        let v = task_verdicts(&[gen("t", Setting::Baseline, 0, Verdict::Pass)]).unwrap();
        assert!(matches!(transitions(&v), Err(SiiError::MissingVerdict { .. })));
    }
}
