use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};

use sherlock_core::cache::{check_staleness, CacheStore, DEFAULT_LIBRARY};
use sherlock_core::corpus::{load_corpus_dir, read_jsonl, verify_canonical, write_jsonl, Corpus};
use sherlock_core::debugging::EipDiagnosis;
use sherlock_core::gateway::Gateway;
use sherlock_core::harness::pipeline::{
    self, artifacts, save_synth, stage_debug, stage_detect, stage_repair, PipelineReport, RepairStatus,
};
use sherlock_core::harness::{
    build_gateway, load_labels, run_pipeline, synth_corpus, AgentMode, CopyModel, SherlockConfig, SynthLabels,
    CONFIG_FILE,
};
use sherlock_core::oracle::{MemoEvaluator, PythonOracle};
use sherlock_core::sii::{SiiCase, StudyMetrics};

/// Exit code for invalid input or configuration.
const EXIT_INVALID: u8 = 2;
/// Exit code for a stage that failed on valid input.
const EXIT_STAGE: u8 = 3;

#[derive(Parser, Debug)]
#[command(name = "sherlock", version, about = "Find, diagnose and repair web pages that break retrieval-augmented code generation")]
struct Cli {
    /// TOML configuration; `sherlock.toml` in the working directory is used when present.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[arg(long, global = true, value_enum)]
    agent_mode: Option<Mode>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Mode {
    Live,
    Replay,
    Record,
    Synthetic,
}

impl From<Mode> for AgentMode {
    fn from(m: Mode) -> AgentMode {
        match m {
            Mode::Live => AgentMode::Live,
            Mode::Replay => AgentMode::Replay,
            Mode::Record => AgentMode::Record,
            Mode::Synthetic => AgentMode::Synthetic,
        }
    }
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic corpus with injected harmful pages and its labels.
    Synth(SynthArgs),
    /// Load and validate a corpus, extract snippets and self-check canonical solutions.
    Ingest {
        #[arg(long)]
        corpus: PathBuf,
    },
    /// Evaluate generations and collect cases where retrieval introduced an error.
    Detect {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        runs: Option<u32>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Locate utilized snippets and diagnose the pages of each case.
    Debug {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        case_file: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Repair or annotate diagnosed pages into the cache.
    Repair {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        diagnoses: PathBuf,
        #[arg(long, default_value = "out/cache")]
        cache: PathBuf,
    },
    /// Print what the cache serves for a link and whether the entry is stale.
    ServeCheck {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        url: String,
        #[arg(long, default_value = "out/cache")]
        cache: PathBuf,
        #[arg(long, default_value = DEFAULT_LIBRARY)]
        library: String,
    },
    /// Regenerate correct tasks over every cached repair and count regressions.
    Audit {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long, default_value = "out/cache")]
        cache: PathBuf,
        #[arg(long)]
        runs: Option<u32>,
    },
    /// Print the report table of a finished run.
    Report {
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Run every stage; synthesizes a corpus first when none is given.
    RunAll {
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        #[arg(long)]
        runs: Option<u32>,
        /// Also audit a deliberately corrupted repair.
        #[arg(long)]
        sabotage: bool,
    },
}

#[derive(Args, Debug)]
struct SynthArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    tasks: Option<usize>,
    #[arg(long)]
    pages_per_task: Option<usize>,
    #[arg(long)]
    eip_rate: Option<f64>,
    #[arg(long)]
    eip_count: Option<usize>,
    #[arg(long)]
    tasks_per_page: Option<usize>,
}

/// Failure with the exit code it maps to.
struct Failure {
    code: u8,
    error: anyhow::Error,
}

fn invalid(error: impl Into<anyhow::Error>) -> Failure {
    Failure { code: EXIT_INVALID, error: error.into() }
}

fn stage(error: impl Into<anyhow::Error>) -> Failure {
    Failure { code: EXIT_STAGE, error: error.into() }
}

type Outcome = Result<(), Failure>;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}

fn load_config(cli: &Cli) -> Result<SherlockConfig, Failure> {
    let mut cfg = match &cli.config {
        Some(path) => SherlockConfig::load(path).map_err(invalid)?,
        None if Path::new(CONFIG_FILE).exists() => SherlockConfig::load(Path::new(CONFIG_FILE)).map_err(invalid)?,
        None => SherlockConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
        cfg.synth.seed = seed;
    }
    if let Some(w) = cli.workers {
        cfg.workers = w;
    }
    if let Some(m) = cli.agent_mode {
        cfg.agent_mode = m.into();
    }
    cfg.validate().map_err(invalid)?;
    Ok(cfg)
}

struct Env {
    cfg: SherlockConfig,
    oracle: MemoEvaluator<PythonOracle>,
}

impl Env {
    fn gateway(&self, labels: Option<&SynthLabels>, out: &Path) -> Result<Gateway, Failure> {
        build_gateway(self.cfg.agent_mode, &self.cfg.endpoint, labels, &self.cfg.transcript_path(out)).map_err(invalid)
    }
}

fn load(dir: &Path) -> Result<(Corpus, Option<SynthLabels>), Failure> {
    let corpus = load_corpus_dir(dir).map_err(invalid)?;
    let labels = load_labels(dir).map_err(invalid)?;
    Ok((corpus.extracted(), labels))
}

fn run(cli: Cli) -> Outcome {
    let cfg = load_config(&cli)?;
    rayon::ThreadPoolBuilder::new().num_threads(cfg.workers).build_global().map_err(stage)?;
    let oracle = MemoEvaluator::new(PythonOracle::new(cfg.oracle.clone()).map_err(invalid)?);
    let env = Env { cfg, oracle };
    match cli.command {
        Command::Synth(args) => synth(&env, args),
        Command::Ingest { corpus } => ingest(&env, &corpus),
        Command::Detect { corpus, runs, out } => detect(&env, &corpus, runs, &out),
        Command::Debug { corpus, case_file, out } => debug(&env, &corpus, &case_file, &out),
        Command::Repair { corpus, diagnoses, cache } => repair(&env, &corpus, &diagnoses, &cache),
        Command::ServeCheck { corpus, url, cache, library } => serve_check(&corpus, &url, &cache, &library),
        Command::Audit { corpus, cache, runs } => audit(&env, &corpus, &cache, runs),
        Command::Report { out } => report(&out),
        Command::RunAll { corpus, out, runs, sabotage } => run_all(&env, corpus, &out, runs, sabotage),
    }
}

fn synth(env: &Env, args: SynthArgs) -> Outcome {
    let mut cfg = env.cfg.synth.clone();
    cfg.n_tasks = args.tasks.unwrap_or(cfg.n_tasks);
    cfg.n_pages_per_task = args.pages_per_task.unwrap_or(cfg.n_pages_per_task);
    cfg.eip_rate = args.eip_rate.unwrap_or(cfg.eip_rate);
    cfg.eip_count = args.eip_count.or(cfg.eip_count);
    cfg.tasks_per_page = args.tasks_per_page.unwrap_or(cfg.tasks_per_page);
    cfg.validate().map_err(invalid)?;
    let synth = synth_corpus(&cfg, &env.oracle).map_err(stage)?;
    save_synth(&synth.corpus, &synth.labels, &args.out).map_err(stage)?;
    println!(
        "{} tasks, {} pages, {} injected ({} skipped) -> {}",
        synth.corpus.tasks().len(),
        synth.corpus.pages().len(),
        synth.labels.injected().count(),
        synth.skipped.len(),
        args.out.display()
    );
    Ok(())
}

fn ingest(env: &Env, dir: &Path) -> Outcome {
    let (corpus, _) = load(dir)?;
    let failures = verify_canonical(&corpus, &env.oracle).map_err(stage)?;
    let snippets: usize = corpus.pages().iter().map(|p| p.snippets.len()).sum();
    println!(
        "{} tasks, {} pages ({} snippets), {} generations",
        corpus.tasks().len(),
        corpus.pages().len(),
        snippets,
        corpus.generations().len()
    );
    for f in &failures {
        println!("canonical fails: {} ({})", f.task_id, f.detail);
    }
    if failures.is_empty() {
        Ok(())
    } else {
        Err(invalid(anyhow!("{} canonical solutions fail their tests", failures.len())))
    }
}

fn detect(env: &Env, dir: &Path, runs: Option<u32>, out: &Path) -> Outcome {
    let (corpus, _) = load(dir)?;
    std::fs::create_dir_all(out).map_err(stage)?;
    let d = stage_detect(&corpus, &env.oracle, runs.or(env.cfg.runs)).map_err(stage)?;
    write_jsonl(&out.join(artifacts::VERDICTS), &d.verdicts).map_err(stage)?;
    write_json(&out.join(artifacts::METRICS), &d.metrics)?;
    write_jsonl(&out.join(artifacts::SII_CASES), &d.cases).map_err(stage)?;
    print_study(&d.metrics);
    println!("SII cases: {}", d.cases.len());
    Ok(())
}

fn debug(env: &Env, dir: &Path, case_file: &Path, out: &Path) -> Outcome {
    let (corpus, labels) = load(dir)?;
    let cases: Vec<SiiCase> = read_jsonl(case_file).map_err(invalid)?;
    let gateway = env.gateway(labels.as_ref(), out)?;
    std::fs::create_dir_all(out).map_err(stage)?;
    let as_of = as_of(env, &corpus)?;
    let debugged = stage_debug(&corpus, &cases, &env.cfg.debug, &gateway, &env.oracle, as_of).map_err(stage)?;
    let utilization: Vec<_> = debugged.iter().map(|d| d.utilization.clone()).collect();
    let diagnoses: Vec<EipDiagnosis> = debugged.into_iter().flat_map(|d| d.diagnoses).collect();
    write_jsonl(&out.join(artifacts::UTILIZATION), &utilization).map_err(stage)?;
    write_jsonl(&out.join(artifacts::DIAGNOSES), &diagnoses).map_err(stage)?;
    for d in &diagnoses {
        println!("{}\t{}\t{}", d.task_id, d.url, pipeline::class_name(d.class));
    }
    Ok(())
}

fn repair(env: &Env, dir: &Path, diagnoses: &Path, cache: &Path) -> Outcome {
    let (corpus, _) = load(dir)?;
    let diagnoses: Vec<EipDiagnosis> = read_jsonl(diagnoses).map_err(invalid)?;
    let store = CacheStore::open(cache).map_err(stage)?;
    let as_of = as_of(env, &corpus)?;
    let (outcomes, _) = stage_repair(&corpus, &diagnoses, &store, &env.oracle, as_of).map_err(stage)?;
    for o in &outcomes {
        let status = match &o.status {
            RepairStatus::Repaired => "repaired".to_string(),
            RepairStatus::Unchanged => "unchanged".to_string(),
            RepairStatus::Duplicate => "duplicate".to_string(),
            RepairStatus::Refused(why) => format!("refused: {why}"),
        };
        println!("{}\t{}\t{}", o.library, o.url, status);
    }
    Ok(())
}

fn serve_check(dir: &Path, url: &str, cache: &Path, library: &str) -> Outcome {
    let (corpus, _) = load(dir)?;
    let store = CacheStore::open(cache).map_err(stage)?;
    let page = corpus.page(url).ok_or_else(|| invalid(anyhow!("unknown url {url}")))?;
    match store.get(library, url) {
        Some(entry) => {
            println!("cached: {:?} at {}", entry.diagnosis, entry.time.to_rfc3339());
            println!("staleness: {:?}", check_staleness(&entry, page));
        }
        None => println!("not cached; serving the original page"),
    }
    let content = store.serve(&corpus, url, library).map_err(stage)?;
    println!("{content}");
    Ok(())
}

fn audit(env: &Env, dir: &Path, cache: &Path, runs: Option<u32>) -> Outcome {
    let (corpus, _) = load(dir)?;
    let store = CacheStore::open(cache).map_err(stage)?;
    let d = stage_detect(&corpus, &env.oracle, runs.or(env.cfg.runs)).map_err(stage)?;
    let model = CopyModel::new(env.cfg.copy_bias, env.cfg.seed);
    let mut regressions = 0;
    for library in store.libraries() {
        for entry in store.entries(&library) {
            let r = sherlock_core::cache::audit_side_effects(&entry, &store, &d.corpus, &model, &env.oracle)
                .map_err(stage)?;
            println!("{}\t{}\t{} tasks\t{} regressions", r.library, r.link, r.tasks.len(), r.regressions);
            regressions += r.regressions;
        }
    }
    if regressions > 0 {
        return Err(stage(anyhow!("{regressions} regressions")));
    }
    Ok(())
}

fn report(out: &Path) -> Outcome {
    let path = out.join(artifacts::REPORT);
    if path.exists() {
        let report: PipelineReport = read_json(&path)?;
        print!("{}", report.render_table());
        return Ok(());
    }
    let metrics: StudyMetrics<f64> = read_json(&out.join(artifacts::METRICS))?;
    print_study(&metrics);
    Ok(())
}

fn run_all(env: &Env, corpus_dir: Option<PathBuf>, out: &Path, runs: Option<u32>, sabotage: bool) -> Outcome {
    let (corpus, labels) = match corpus_dir {
        Some(dir) => load(&dir)?,
        None => {
            let synth = synth_corpus(&env.cfg.synth, &env.oracle).map_err(stage)?;
            let dir = out.join("corpus");
            save_synth(&synth.corpus, &synth.labels, &dir).map_err(stage)?;
            (synth.corpus.extracted(), Some(synth.labels))
        }
    };
    let gateway = env.gateway(labels.as_ref(), out)?;
    let mut cfg = env.cfg.pipeline();
    cfg.runs = runs.or(cfg.runs);
    cfg.sabotage |= sabotage;
    let run = run_pipeline(&corpus, labels.as_ref(), &cfg, &gateway, &env.oracle, out).map_err(stage)?;
    print!("{}", run.report.render_table());
    // artifacts are written first so a failed audit can be inspected
    match run.report.regressions {
        0 => Ok(()),
        n => Err(stage(anyhow!("audit found {n} regressions"))),
    }
}

fn as_of(env: &Env, corpus: &Corpus) -> Result<chrono::DateTime<chrono::Utc>, Failure> {
    env.cfg.as_of.or_else(|| corpus.newest_fetch()).ok_or_else(|| invalid(anyhow!("corpus has no pages and no as_of was given")))
}

fn print_study(m: &StudyMetrics<f64>) {
    println!("{:<20} {:>10}", "New correct (C)", m.c);
    println!("{:<20} {:>10}", "New errors (E)", m.e);
    println!("{:<20} {:>10}", "NIR", m.nir.percent());
    println!("{:<20} {:>10}", "Pass@1 baseline", m.pass_at_1_baseline.percent());
    println!("{:<20} {:>10}", "Pass@1 web", m.pass_at_1_web.percent());
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Outcome {
    let mut text = serde_json::to_string_pretty(value).map_err(stage)?;
    text.push('\n');
    std::fs::write(path, text).with_context(|| path.display().to_string()).map_err(stage)
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, Failure> {
    let text = std::fs::read_to_string(path).with_context(|| path.display().to_string()).map_err(invalid)?;
    serde_json::from_str(&text).with_context(|| path.display().to_string()).map_err(invalid)
}
