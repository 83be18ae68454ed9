//! Synthetic corpora, the copy-model regenerator, the synthetic agent, the
//! pipeline driver and its configuration.

pub mod agent;
pub mod copy_model;
pub mod mutation;
pub mod pipeline;
pub mod synth;
pub mod templates;

use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use agent::SyntheticAgent;
pub use copy_model::CopyModel;
pub use mutation::MutationKind;
pub use pipeline::{run_pipeline, PipelineConfig, PipelineReport, PipelineRun, Stage, StageError};
pub use synth::{synth_corpus, PageLabel, SynthConfig, SynthCorpus, SynthLabels};

use crate::cache::{annotate_misalignment, repair_implementation, CacheEntry, CacheError, CacheStore, DiagnosisTag};
use crate::corpus::Corpus;
use crate::debugging::{debug_case, DebugConfig, DebugError, EipClass};
use crate::gateway::{EndpointConfig, Gateway, GatewayError, LiveAgent, RecordingAgent, ReplayAgent, TRANSCRIPT_FILE};
use crate::oracle::{Evaluator, OracleConfig};
use crate::sii::SiiCase;

pub const LABELS_FILE: &str = "labels.json";
pub const CONFIG_FILE: &str = "sherlock.toml";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AgentMode {
    Live,
    Replay,
    Record,
    #[default]
    Synthetic,
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

/// Contents of `sherlock.toml`. Every key is optional.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SherlockConfig {
    pub seed: u64,
    pub workers: usize,
    pub agent_mode: AgentMode,
    /// Transcript for record and replay modes; `<out>/agent_transcript.jsonl`
    /// when unset.
    pub transcript: Option<PathBuf>,
    pub runs: Option<u32>,
    pub as_of: Option<DateTime<Utc>>,
    pub copy_bias: f64,
    pub sabotage: bool,
    pub synth: SynthConfig,
    pub debug: DebugConfig,
    pub oracle: OracleConfig,
    pub endpoint: EndpointConfig,
}

impl Default for SherlockConfig {
    fn default() -> Self {
        SherlockConfig {
            seed: 7,
            workers: 1,
            agent_mode: AgentMode::Synthetic,
            transcript: None,
            runs: None,
            as_of: None,
            copy_bias: 1.0,
            sabotage: false,
            synth: SynthConfig::default(),
            debug: DebugConfig::default(),
            oracle: OracleConfig::default(),
            endpoint: EndpointConfig::default(),
        }
    }
}

impl SherlockConfig {
    pub fn load(path: &Path) -> Result<SherlockConfig, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.into(), source })?;
        let cfg: SherlockConfig =
            toml::from_str(&text).map_err(|e| ConfigError::Parse { path: path.into(), message: e.to_string() })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |e: &dyn std::fmt::Display| ConfigError::Invalid(e.to_string());
        self.synth.validate().map_err(|e| invalid(&e))?;
        self.debug.validate().map_err(|e| invalid(&e))?;
        self.oracle.validate().map_err(|e| invalid(&e))?;
        if !(0.0..=1.0).contains(&self.copy_bias) {
            return Err(ConfigError::Invalid("copy_bias must lie in [0, 1]".into()));
        }
        if self.workers == 0 {
            return Err(ConfigError::Invalid("workers must be at least 1".into()));
        }
        Ok(())
    }

    pub fn pipeline(&self) -> PipelineConfig {
        PipelineConfig {
            runs: self.runs,
            debug: self.debug.clone(),
            as_of: self.as_of,
            copy_bias: self.copy_bias,
            seed: self.seed,
            sabotage: self.sabotage,
        }
    }

    pub fn transcript_path(&self, out_dir: &Path) -> PathBuf {
        self.transcript.clone().unwrap_or_else(|| out_dir.join(TRANSCRIPT_FILE))
    }
}

pub fn load_labels(dir: &Path) -> Result<Option<SynthLabels>, ConfigError> {
    let path = dir.join(LABELS_FILE);
    if !path.exists() {
        return Ok(None);
    }
    let text = std::fs::read_to_string(&path).map_err(|source| ConfigError::Io { path: path.clone(), source })?;
    serde_json::from_str(&text).map(Some).map_err(|e| ConfigError::Parse { path, message: e.to_string() })
}

/// The agent for a mode. Synthetic mode needs ground-truth labels.
pub fn build_gateway(
    mode: AgentMode,
    endpoint: &EndpointConfig,
    labels: Option<&SynthLabels>,
    transcript: &Path,
) -> Result<Gateway, GatewayError> {
    Ok(match mode {
        AgentMode::Synthetic => {
            let labels = labels.ok_or_else(|| GatewayError::Config(format!("synthetic mode needs {LABELS_FILE} next to the corpus")))?;
            Gateway::new(Box::new(SyntheticAgent::new(labels)))
        }
        AgentMode::Replay => Gateway::new(Box::new(ReplayAgent::load(transcript)?)),
        AgentMode::Record => Gateway::new(Box::new(RecordingAgent::new(LiveAgent::new(endpoint.clone())?, transcript))),
        AgentMode::Live => Gateway::new(Box::new(LiveAgent::new(endpoint.clone())?)),
    })
}

#[derive(Debug, Error)]
pub enum RefreshError {
    #[error(transparent)]
    Debug(#[from] DebugError),
    #[error(transparent)]
    Cache(#[from] CacheError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RefreshOutcome {
    pub link: String,
    pub library: String,
    pub previous: DiagnosisTag,
    /// Tag of the refreshed entry; `None` when the live page no longer
    /// yields an EIP diagnosis and the old entry stays in place.
    pub refreshed: Option<DiagnosisTag>,
}

/// Re-validate stale entries against the live corpus: re-run debugging for
/// the cases that retrieved each stale link and store a fresh repair when
/// the page is still diagnosed as harmful.
#[allow(clippy::too_many_arguments)]
pub fn refresh_stale(
    store: &CacheStore,
    live: &Corpus,
    cases: &[SiiCase],
    cfg: &DebugConfig,
    gateway: &Gateway,
    oracle: &dyn Evaluator,
    now: DateTime<Utc>,
) -> Result<Vec<RefreshOutcome>, RefreshError> {
    let live = live.extracted();
    let mut out = Vec::new();
    for stale in store.stale_entries(&live) {
        let mut refreshed = None;
        for case in cases.iter().filter(|c| c.retrieved_urls.contains(&stale.link)) {
            let Some(task) = live.task(&case.task_id).filter(|t| t.library() == stale.library) else { continue };
            let diagnosed = debug_case(case, &live, cfg, gateway, oracle, now)?;
            let Some(d) = diagnosed.diagnoses.iter().find(|d| d.url == stale.link && d.class.is_eip()) else { continue };
            let page = live.page(&d.url).expect("diagnosed pages exist");
            let entry: CacheEntry = match d.class {
                EipClass::ImplIncorrect => repair_implementation(d, page, task, oracle, now)?,
                _ => annotate_misalignment(d, page, &stale.library, live.manifest().subject_language, now)?,
            };
            refreshed = Some(entry.diagnosis);
            store.put(entry)?;
            break;
        }
        out.push(RefreshOutcome { link: stale.link, library: stale.library, previous: stale.diagnosis, refreshed });
    }
    Ok(out)
}
