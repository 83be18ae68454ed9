//! Correctness evaluator: runs candidate code against a task's tests.
//!
//! Each test runs in a fresh interpreter process (`-I -S -B`, empty
//! environment) inside its own temporary directory, with socket creation
//! patched to fail. The candidate's stdout/stderr are captured in-process
//! and truncated to [`OUTPUT_LIMIT`] bytes.

use std::collections::HashMap;
use std::fs;
use std::io::Read;
use std::path::PathBuf;
use std::process::{Command, Stdio};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;
use wait_timeout::ChildExt;

use crate::corpus::{Comparison, Task};

pub const OUTPUT_LIMIT: usize = 8 * 1024;

const RUNNER: &str = include_str!("runner.py");

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("sandbox setup failed: {0}")]
    Sandbox(#[from] std::io::Error),
    #[error("interpreter {0:?} could not be started: {1}")]
    Runtime(PathBuf, std::io::Error),
    #[error("invalid oracle config: {0}")]
    Config(String),
    #[error("task {0} has an empty test suite")]
    EmptySuite(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestOutcome {
    Pass,
    Fail,
    Error,
    Timeout,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureClass {
    WrongOutput,
    RuntimeError,
    ParseError,
    Timeout,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub outcome: TestOutcome,
    pub wall_time_ms: f64,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub output: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExecutionResult {
    /// One entry per test, unless `parse_error` short-circuited the run.
    pub tests: Vec<TestResult>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parse_error: Option<String>,
}

impl ExecutionResult {
    pub fn passed(&self) -> bool {
        self.parse_error.is_none() && self.tests.iter().all(|t| t.outcome == TestOutcome::Pass)
    }

    /// Class of the first failing test; `None` when everything passed.
    pub fn failure_class(&self) -> Option<FailureClass> {
        if self.parse_error.is_some() {
            return Some(FailureClass::ParseError);
        }
        self.tests.iter().find_map(|t| match t.outcome {
            TestOutcome::Pass => None,
            TestOutcome::Fail => Some(FailureClass::WrongOutput),
            TestOutcome::Error => Some(FailureClass::RuntimeError),
            TestOutcome::Timeout => Some(FailureClass::Timeout),
        })
    }

    pub fn first_failure_detail(&self) -> Option<String> {
        if let Some(p) = &self.parse_error {
            return Some(p.clone());
        }
        self.tests
            .iter()
            .enumerate()
            .find(|(_, t)| t.outcome != TestOutcome::Pass)
            .map(|(i, t)| format!("test {i}: {:?}: {}", t.outcome, t.detail.as_deref().unwrap_or("")))
    }

    pub fn pass_count(&self) -> usize {
        self.tests.iter().filter(|t| t.outcome == TestOutcome::Pass).count()
    }
}

/// Black-box pass/fail judge for candidate code.
pub trait Evaluator: Send + Sync {
    fn evaluate(&self, code: &str, task: &Task) -> Result<ExecutionResult, OracleError>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OracleConfig {
    pub timeout_secs: f64,
    pub max_workers: usize,
    pub subject_language_runtime: PathBuf,
    /// Tolerance used by [`PythonOracle::evaluate_approx`].
    pub approx_epsilon: f64,
}

impl Default for OracleConfig {
    fn default() -> Self {
        OracleConfig {
            timeout_secs: 5.0,
            max_workers: 1,
            subject_language_runtime: PathBuf::from("python3"),
            approx_epsilon: 1e-9,
        }
    }
}

impl OracleConfig {
    pub fn validate(&self) -> Result<(), OracleError> {
        if !(self.timeout_secs > 0.0 && self.timeout_secs.is_finite()) {
            return Err(OracleError::Config(format!("timeout_secs must be positive, got {}", self.timeout_secs)));
        }
        if !(self.approx_epsilon > 0.0 && self.approx_epsilon.is_finite()) {
            return Err(OracleError::Config(format!("approx_epsilon must be positive, got {}", self.approx_epsilon)));
        }
        if self.max_workers == 0 {
            return Err(OracleError::Config("max_workers must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct PythonOracle {
    config: OracleConfig,
}

#[derive(Deserialize)]
struct RunnerReport {
    status: String,
    #[serde(default)]
    detail: Option<String>,
    #[serde(default)]
    output: String,
}

#[derive(Serialize)]
struct RunnerSpec<'a> {
    input: &'a str,
    expected: &'a str,
    epsilon: Option<f64>,
}

enum SingleRun {
    Test(TestResult),
    ParseError(String),
}

impl PythonOracle {
    pub fn new(config: OracleConfig) -> Result<Self, OracleError> {
        config.validate()?;
        Ok(PythonOracle { config })
    }

    pub fn config(&self) -> &OracleConfig {
        &self.config
    }

    /// Like [`Evaluator::evaluate`] but every test compares with the
    /// configured tolerance.
    pub fn evaluate_approx(&self, code: &str, task: &Task) -> Result<ExecutionResult, OracleError> {
        self.run_suite(code, task, Some(self.config.approx_epsilon))
    }

    fn run_suite(&self, code: &str, task: &Task, force_eps: Option<f64>) -> Result<ExecutionResult, OracleError> {
        if task.test_suite.is_empty() {
            return Err(OracleError::EmptySuite(task.task_id.clone()));
        }
        let mut tests = Vec::with_capacity(task.test_suite.len());
        for tc in &task.test_suite {
            let epsilon = force_eps.or(match tc.comparison {
                Comparison::Equality => None,
                Comparison::Approx { epsilon } => Some(epsilon),
            });
            let spec = RunnerSpec { input: &tc.input_literal, expected: &tc.expected_literal, epsilon };
            match self.run_one(code, &spec)? {
                SingleRun::Test(t) => tests.push(t),
                SingleRun::ParseError(detail) => {
                    return Ok(ExecutionResult { tests: Vec::new(), parse_error: Some(detail) });
                }
            }
        }
        Ok(ExecutionResult { tests, parse_error: None })
    }

    fn run_one(&self, code: &str, spec: &RunnerSpec<'_>) -> Result<SingleRun, OracleError> {
        let dir = tempfile::Builder::new().prefix("sherlock-oracle-").tempdir()?;
        let root = dir.path();
        fs::write(root.join("runner.py"), RUNNER)?;
        fs::write(root.join("candidate.py"), code)?;
        fs::write(root.join("spec.json"), serde_json::to_vec(spec).expect("spec serializes"))?;
        let stdout = fs::File::create(root.join("stdout.txt"))?;
        let stderr = fs::File::create(root.join("stderr.txt"))?;

        let started = Instant::now();
        let mut child = Command::new(&self.config.subject_language_runtime)
            .args(["-I", "-S", "-B", "runner.py", "spec.json", "result.json"])
            .current_dir(root)
            .env_clear()
            .env("PYTHONHASHSEED", "0")
            .env("PYTHONIOENCODING", "utf-8")
            .stdin(Stdio::null())
            .stdout(stdout)
            .stderr(stderr)
            .spawn()
            .map_err(|e| OracleError::Runtime(self.config.subject_language_runtime.clone(), e))?;
        let limit = Duration::from_secs_f64(self.config.timeout_secs);
        let status = child.wait_timeout(limit)?;
        let wall_time_ms = started.elapsed().as_secs_f64() * 1000.0;

        let Some(status) = status else {
            let _ = child.kill();
            let _ = child.wait();
            return Ok(SingleRun::Test(TestResult {
                outcome: TestOutcome::Timeout,
                wall_time_ms,
                output: read_limited(&root.join("stdout.txt")),
                detail: Some(format!("exceeded {} s", self.config.timeout_secs)),
            }));
        };

        let report: Option<RunnerReport> = fs::read(root.join("result.json"))
            .ok()
            .and_then(|b| serde_json::from_slice(&b).ok());
        let output = |extra: &str| {
            let mut out = extra.to_string();
            out.push_str(&read_limited(&root.join("stdout.txt")));
            out.push_str(&read_limited(&root.join("stderr.txt")));
            truncate(out)
        };
        Ok(match report {
            Some(r) if r.status == "parse_error" => SingleRun::ParseError(r.detail.unwrap_or_default()),
            Some(r) => {
                let outcome = match r.status.as_str() {
                    "pass" => TestOutcome::Pass,
                    "wrong_output" => TestOutcome::Fail,
                    _ => TestOutcome::Error,
                };
                SingleRun::Test(TestResult { outcome, wall_time_ms, output: output(&r.output), detail: r.detail })
            }
            None => SingleRun::Test(TestResult {
                outcome: TestOutcome::Error,
                wall_time_ms,
                output: output(""),
                detail: Some(format!("interpreter exited with {status} before reporting")),
            }),
        })
    }
}

impl Evaluator for PythonOracle {
    fn evaluate(&self, code: &str, task: &Task) -> Result<ExecutionResult, OracleError> {
        self.run_suite(code, task, None)
    }
}

fn read_limited(path: &std::path::Path) -> String {
    let mut buf = Vec::new();
    if let Ok(f) = fs::File::open(path) {
        let _ = f.take(OUTPUT_LIMIT as u64).read_to_end(&mut buf);
    }
    String::from_utf8_lossy(&buf).into_owned()
}

fn truncate(mut s: String) -> String {
    if s.len() > OUTPUT_LIMIT {
        let mut cut = OUTPUT_LIMIT;
        while !s.is_char_boundary(cut) {
            cut -= 1;
        }
        s.truncate(cut);
    }
    s
}

/// Memoizes another evaluator on `(task_id, sha256(code))`. Sound for
/// deterministic candidates, which is what the pipeline feeds it.
pub struct MemoEvaluator<E> {
    inner: E,
    cache: Mutex<HashMap<(String, [u8; 32]), ExecutionResult>>,
}

impl<E: Evaluator> MemoEvaluator<E> {
    pub fn new(inner: E) -> Self {
        MemoEvaluator { inner, cache: Mutex::new(HashMap::new()) }
    }

    pub fn inner(&self) -> &E {
        &self.inner
    }

    pub fn cached(&self) -> usize {
        self.cache.lock().expect("memo lock").len()
    }
}

impl<E: Evaluator> Evaluator for MemoEvaluator<E> {
    fn evaluate(&self, code: &str, task: &Task) -> Result<ExecutionResult, OracleError> {
        let key = (task.task_id.clone(), Sha256::digest(code.as_bytes()).into());
        if let Some(hit) = self.cache.lock().expect("memo lock").get(&key) {
            return Ok(hit.clone());
        }
        let result = self.inner.evaluate(code, task)?;
        self.cache.lock().expect("memo lock").insert(key, result.clone());
        Ok(result)
    }
}

impl<E: Evaluator + ?Sized> Evaluator for &E {
    fn evaluate(&self, code: &str, task: &Task) -> Result<ExecutionResult, OracleError> {
        (**self).evaluate(code, task)
    }
}

impl<E: Evaluator + ?Sized> Evaluator for std::sync::Arc<E> {
    fn evaluate(&self, code: &str, task: &Task) -> Result<ExecutionResult, OracleError> {
        (**self).evaluate(code, task)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::TestCase;

    fn task(tests: &[(&str, &str)]) -> Task {
        Task {
            task_id: "t".into(),
            description: String::new(),
            canonical_solution: String::new(),
            test_suite: tests
                .iter()
                .map(|(i, e)| TestCase { input_literal: i.to_string(), expected_literal: e.to_string(), comparison: Comparison::Equality })
                .collect(),
            domain_tag: None,
        }
    }

    fn oracle() -> PythonOracle {
        PythonOracle::new(OracleConfig { timeout_secs: 2.0, ..Default::default() }).unwrap()
    }

    #[test]
    fn classifies_outcomes() {
        let t = task(&[("add(1, 2)", "3"), ("add(-1, 1)", "0"), ("add(2, 2)", "4")]);
        let o = oracle();
        let r = o.evaluate("def add(a, b):\n    return a + b\n", &t).unwrap();
        assert!(r.passed());
        assert_eq!(r.tests.len(), 3);

        let r = o.evaluate("def add(a, b):\n    return a + b + 1\n", &t).unwrap();
        assert_eq!(r.failure_class(), Some(FailureClass::WrongOutput));

        let r = o.evaluate("def add(a, b):\n    return a +\n", &t).unwrap();
        assert_eq!(r.failure_class(), Some(FailureClass::ParseError));
        assert!(r.tests.is_empty());

        let r = o.evaluate("def add(a, b):\n    raise ValueError('no')\n", &t).unwrap();
        assert_eq!(r.failure_class(), Some(FailureClass::RuntimeError));
        assert!(r.tests[0].detail.as_deref().unwrap().contains("ValueError"));
    }

    #[test]
    fn output_is_captured_and_network_blocked() {
        let t = task(&[("f()", "True")]);
        let code = "import socket\ndef f():\n    print('hello')\n    try:\n        socket.create_connection(('example.com', 80))\n    except PermissionError:\n        return True\n    return False\n";
        let r = oracle().evaluate(code, &t).unwrap();
        assert!(r.passed(), "{r:?}");
        assert!(r.tests[0].output.contains("hello"));
    }

    #[test]
    fn tests_do_not_share_files() {
        let t = task(&[("f()", "False"), ("f()", "False")]);
        let code = "import os\ndef f():\n    seen = os.path.exists('marker')\n    open('marker', 'w').close()\n    return seen\n";
        assert!(oracle().evaluate(code, &t).unwrap().passed());
    }

    #[test]
    fn approx_comparison() {
        let t = task(&[("f()", "0.3")]);
        let o = oracle();
        assert!(!o.evaluate("def f():\n    return 0.1 + 0.2\n", &t).unwrap().passed());
        assert!(o.evaluate_approx("def f():\n    return 0.1 + 0.2\n", &t).unwrap().passed());
        assert!(!o.evaluate_approx("def f():\n    return 0.31\n", &t).unwrap().passed());
        assert!(PythonOracle::new(OracleConfig { approx_epsilon: 0.0, ..Default::default() }).is_err());
    }

    #[test]
    fn output_truncated() {
        let t = task(&[("f()", "1")]);
        let r = oracle().evaluate("def f():\n    print('x' * 100000)\n    return 1\n", &t).unwrap();
        assert!(r.tests[0].output.len() <= OUTPUT_LIMIT);
    }

    #[test]
    fn memo_skips_reruns() {
        let t = task(&[("f()", "1")]);
        let m = MemoEvaluator::new(oracle());
        let a = m.evaluate("def f():\n    return 1\n", &t).unwrap();
        let b = m.evaluate("def f():\n    return 1\n", &t).unwrap();
        assert_eq!(a.passed(), b.passed());
        assert_eq!(m.cached(), 1);
    }
}
