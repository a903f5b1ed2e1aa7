//! Command implementations. Each returns the process exit status or a
//! classified failure.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::sync::atomic::AtomicBool;
use std::sync::Arc;

use anyhow::{anyhow, Context};
use serde::{Deserialize, Serialize};

use proofloom::dataset::{self, Episode, LoadError, LoadOptions, QA_FILE};
use proofloom::eval::{self, AggregateReport, Partition, TreeJudgments, TreeScore};
use proofloom::harness::{self, AnswerVerdict, BatchConfig, RunReport};
use proofloom::providers::Session;
use proofloom::search::{self, trace_to_jsonl};
use proofloom::synthetic::{self, SuiteSpec};
use proofloom::tree::{self, EntailmentTree, Hypothesis, QaPair};

use crate::config::{EngineArgs, EngineConfig};

/// Stable process exit statuses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Exit {
    Ok = 0,
    Config = 1,
    Io = 2,
    Incomplete = 3,
    Provider = 4,
}

#[derive(Debug)]
pub struct Failure {
    pub exit: Exit,
    pub error: anyhow::Error,
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:#}", self.error)
    }
}

pub type Outcome = Result<Exit, Failure>;

pub trait Classify<T> {
    fn or_exit(self, exit: Exit) -> Result<T, Failure>;
}

impl<T, E: Into<anyhow::Error>> Classify<T> for Result<T, E> {
    fn or_exit(self, exit: Exit) -> Result<T, Failure> {
        self.map_err(|e| Failure {
            exit,
            error: e.into(),
        })
    }
}

fn fail<T>(exit: Exit, error: anyhow::Error) -> Result<T, Failure> {
    Err(Failure { exit, error })
}

fn load_exit(e: &LoadError) -> Exit {
    if e.is_io() {
        Exit::Io
    } else {
        Exit::Config
    }
}

fn load_episode(path: &Path) -> Result<Episode, Failure> {
    if !path.is_dir() {
        return fail(Exit::Io, anyhow!("episode directory {} not found", path.display()));
    }
    dataset::load_episode(path).map_err(|e| Failure {
        exit: load_exit(&e),
        error: e.into(),
    })
}

/// A dataset directory, or a single episode directory.
fn load_episodes(path: &Path) -> Result<Vec<Episode>, Failure> {
    if !path.is_dir() {
        return fail(Exit::Io, anyhow!("dataset directory {} not found", path.display()));
    }
    if path.join(QA_FILE).exists() {
        return Ok(vec![load_episode(path)?]);
    }
    dataset::load_dataset(path, LoadOptions::default()).map_err(|e| Failure {
        exit: load_exit(&e),
        error: e.into(),
    })
}

fn engine(args: &EngineArgs) -> Result<EngineConfig, Failure> {
    EngineConfig::resolve(args).or_exit(Exit::Config)
}

fn write_file(path: &Path, text: &str) -> Result<(), Failure> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)
            .with_context(|| format!("creating {}", parent.display()))
            .or_exit(Exit::Io)?;
    }
    fs::write(path, text)
        .with_context(|| format!("writing {}", path.display()))
        .or_exit(Exit::Io)
}

pub struct ProveArgs {
    pub episode: PathBuf,
    pub question: String,
    pub answer: String,
    pub hypothesis: Option<String>,
    pub out: Option<PathBuf>,
    pub trace: Option<PathBuf>,
}

pub fn prove(engine_args: &EngineArgs, a: ProveArgs) -> Outcome {
    let cfg = engine(engine_args)?;
    if a.question.trim().is_empty() || a.answer.trim().is_empty() {
        return fail(Exit::Config, anyhow!("question and answer must be non-empty"));
    }
    let episode = load_episode(&a.episode)?;
    let client = cfg.client(&a.episode).or_exit(Exit::Config)?;
    let qa = QaPair {
        question: a.question.clone(),
        answer: a.answer.clone(),
    };
    let hypothesis = match a.hypothesis {
        Some(text) => Hypothesis::root(text, qa),
        None => {
            let session = Session::new(&client, None);
            let mut options = harness::hypothesize_answers(&session, &a.question, std::slice::from_ref(&a.answer))
                .or_exit(Exit::Provider)?;
            let option = options.remove(0);
            if option.flagged {
                return fail(Exit::Provider, anyhow!("the answer could not be restated as a hypothesis"));
            }
            option.hypothesis
        }
    };
    let outcome = search::prove(&client, &episode, hypothesis, &cfg.search_config()).map_err(|e| {
        if let Some(path) = &a.trace {
            let _ = fs::write(path, trace_to_jsonl(&e.trace));
        }
        Failure {
            exit: Exit::Provider,
            error: e.source.into(),
        }
    })?;
    let doc = tree::serialize(&outcome.tree);
    match &a.out {
        Some(path) => write_file(path, &doc)?,
        None => println!("{doc}"),
    }
    if let Some(path) = &a.trace {
        write_file(path, &trace_to_jsonl(&outcome.trace))?;
    }
    let complete = tree::is_complete(&outcome.tree);
    eprintln!(
        "{} tree, {} nodes, completeness {:.2}, {} provider calls{}",
        if complete { "complete" } else { "incomplete" },
        outcome.stats.node_count,
        outcome.stats.completeness,
        outcome.call_counts.total(),
        if outcome.budget_exhausted { " (budget exhausted)" } else { "" }
    );
    Ok(if complete { Exit::Ok } else { Exit::Incomplete })
}

pub struct AnswerArgs {
    pub episode: PathBuf,
    pub index: Option<usize>,
    pub qid: Option<String>,
    pub out: Option<PathBuf>,
}

fn render_verdict(v: &AnswerVerdict) -> String {
    let mut out = format!("{}: {}\n", v.qid, v.qa_item.question);
    for o in &v.per_answer {
        let mark = if o.index == v.chosen_index { '*' } else { ' ' };
        out.push_str(&format!(
            "{mark} ({}) {:<40} complete={:<5} completeness={:.2} score={:.2} evidence={}\n",
            o.index + 1,
            v.qa_item.answers[o.index],
            o.complete,
            o.stats.completeness,
            o.stats.mean_leaf_score,
            o.evidence.as_str()
        ));
    }
    out.push_str(&format!(
        "chosen: ({}) {} [{:?}]",
        v.chosen_index + 1,
        v.qa_item.answers[v.chosen_index],
        v.decision_basis
    ));
    if let Some(c) = v.correct {
        out.push_str(if c { " correct" } else { " incorrect" });
    }
    out
}

pub fn answer(engine_args: &EngineArgs, a: AnswerArgs) -> Outcome {
    let cfg = engine(engine_args)?;
    let episode = load_episode(&a.episode)?;
    let n = match (&a.qid, a.index) {
        (Some(qid), _) => (0..episode.qa_items.len())
            .find(|&n| &episode.qid(n) == qid)
            .ok_or_else(|| anyhow!("no question {qid} in {}", episode.clip_id))
            .or_exit(Exit::Config)?,
        (None, i) => i.unwrap_or(0),
    };
    if n >= episode.qa_items.len() {
        return fail(Exit::Config, anyhow!("{} has {} questions", episode.clip_id, episode.qa_items.len()));
    }
    let client = cfg.client(&a.episode).or_exit(Exit::Config)?;
    let result = harness::answer_question(&client, &episode, n, &cfg.search_config())
        .map_err(|e| anyhow!("{}: {}", e.qid, e.error))
        .or_exit(Exit::Provider)?;
    if let Some(dir) = &a.out {
        for (opt, outcome) in result.outcomes.iter().enumerate() {
            write_file(
                &dir.join(format!("{}_{opt}.json", result.verdict.qid)),
                &tree::serialize(&outcome.tree),
            )?;
        }
        let verdict = serde_json::to_string_pretty(&result.verdict).or_exit(Exit::Io)?;
        write_file(&dir.join("verdict.json"), &verdict)?;
    }
    println!("{}", render_verdict(&result.verdict));
    Ok(Exit::Ok)
}

pub struct BatchArgs {
    pub dataset: PathBuf,
    pub run_dir: PathBuf,
    pub run_id: Option<String>,
    pub limit: Option<usize>,
    pub seed: u64,
    pub trace: bool,
}

pub fn batch(engine_args: &EngineArgs, a: BatchArgs, cancel: Arc<AtomicBool>) -> Outcome {
    let cfg = engine(engine_args)?;
    let episodes = load_episodes(&a.dataset)?;
    let client = cfg.client(&a.dataset).or_exit(Exit::Config)?;
    let batch_cfg = BatchConfig {
        search: cfg.search_config(),
        workers: cfg.workers,
        limit: a.limit,
        seed: a.seed,
        trace: a.trace,
    };
    let run_id = a.run_id.clone().unwrap_or_else(|| {
        a.run_dir
            .file_name()
            .map_or("run".into(), |n| n.to_string_lossy().into_owned())
    });
    fs::create_dir_all(&a.run_dir)
        .with_context(|| format!("creating {}", a.run_dir.display()))
        .or_exit(Exit::Io)?;
    // The resolved engine plus the sampling inputs, enough to rerun the batch.
    let snapshot = serde_json::json!({ "engine": cfg, "limit": a.limit, "seed": a.seed });
    let snapshot = serde_json::to_string_pretty(&snapshot).or_exit(Exit::Io)?;
    write_file(&a.run_dir.join("config.json"), &snapshot)?;
    let out = harness::run_batch(&client, &episodes, &batch_cfg, &run_id, Some(&a.run_dir), &cancel)
        .with_context(|| format!("writing run {}", a.run_dir.display()))
        .or_exit(Exit::Io)?;
    print!("{}", out.report.render());
    if out.report.answered == 0 && out.report.errored > 0 {
        return fail(Exit::Provider, anyhow!("every question failed; see errors.jsonl"));
    }
    Ok(Exit::Ok)
}

fn read_verdicts(run_dir: &Path) -> Result<Vec<AnswerVerdict>, Failure> {
    let path = run_dir.join("verdicts.jsonl");
    let text = fs::read_to_string(&path)
        .with_context(|| format!("reading {}", path.display()))
        .or_exit(Exit::Io)?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).with_context(|| format!("parsing {}", path.display())))
        .collect::<anyhow::Result<_>>()
        .or_exit(Exit::Config)
}

/// Trees of a run, keyed `<qid>_<option>`, with their episodes. By default
/// only the chosen option of each question.
fn run_trees(run_dir: &Path, episodes: &[Episode], all: bool) -> Result<Vec<(String, EntailmentTree, usize)>, Failure> {
    let by_clip: BTreeMap<&str, usize> = episodes
        .iter()
        .enumerate()
        .map(|(i, e)| (e.clip_id.as_str(), i))
        .collect();
    let mut out = Vec::new();
    for v in read_verdicts(run_dir)? {
        let e = *by_clip
            .get(v.qa_item.clip_id.as_str())
            .ok_or_else(|| anyhow!("clip {} is not in the dataset", v.qa_item.clip_id))
            .or_exit(Exit::Config)?;
        let options: Vec<usize> = if all {
            (0..v.per_answer.len()).collect()
        } else {
            vec![v.chosen_index]
        };
        for opt in options {
            let id = format!("{}_{opt}", v.qid);
            let path = run_dir.join("trees").join(format!("{id}.json"));
            let text = fs::read_to_string(&path)
                .with_context(|| format!("reading {}", path.display()))
                .or_exit(Exit::Io)?;
            let t = tree::deserialize(&text)
                .with_context(|| format!("tree {}", path.display()))
                .or_exit(Exit::Config)?;
            out.push((id, t, e));
        }
    }
    Ok(out)
}

pub struct ScoreArgs {
    pub run_dir: PathBuf,
    pub dataset: PathBuf,
    pub partition: Partition,
    pub all: bool,
    pub judgments: Option<PathBuf>,
}

#[derive(Serialize, Deserialize)]
struct ScoreRow {
    tree_id: String,
    partition: String,
    coverage: f64,
    #[serde(flatten)]
    score: TreeScore,
}

pub fn score_trees(engine_args: &EngineArgs, a: ScoreArgs) -> Outcome {
    let cfg = engine(engine_args)?;
    if !a.run_dir.is_dir() {
        return fail(Exit::Io, anyhow!("run directory {} not found", a.run_dir.display()));
    }
    let episodes = load_episodes(&a.dataset)?;
    let trees = run_trees(&a.run_dir, &episodes, a.all)?;
    let judged: Vec<(String, TreeJudgments)> = match &a.judgments {
        Some(path) => {
            let text = fs::read_to_string(path)
                .with_context(|| format!("reading {}", path.display()))
                .or_exit(Exit::Io)?;
            let mut imported: BTreeMap<String, TreeJudgments> =
                serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display())).or_exit(Exit::Config)?;
            trees
                .iter()
                .filter_map(|(id, ..)| imported.remove(id).map(|j| (id.clone(), j)))
                .collect()
        }
        None => {
            let client = cfg.client(&a.dataset).or_exit(Exit::Config)?;
            let items: Vec<(String, &EntailmentTree, &Episode)> =
                trees.iter().map(|(id, t, e)| (id.clone(), t, &episodes[*e])).collect();
            eval::judge_many(&client, &items)
                .into_iter()
                .map(|(id, r)| r.map(|j| (id, j)))
                .collect::<Result<_, _>>()
                .or_exit(Exit::Provider)?
        }
    };
    let keys: BTreeMap<&str, String> = trees
        .iter()
        .map(|(id, t, _)| (id.as_str(), eval::partition_key(t, a.partition)))
        .collect();
    let mut rows = Vec::new();
    for (id, j) in &judged {
        match eval::score(&j.judgments, j.judge) {
            Ok(score) => rows.push(ScoreRow {
                tree_id: id.clone(),
                partition: keys[id.as_str()].clone(),
                coverage: j.coverage(),
                score,
            }),
            Err(e) => tracing::warn!(tree = %id, error = %e, "tree not scored"),
        }
    }
    let report: AggregateReport =
        eval::aggregate(&rows.iter().map(|r| (r.partition.clone(), r.score.clone())).collect::<Vec<_>>());
    let mut lines = String::new();
    for r in &rows {
        lines.push_str(&serde_json::to_string(r).or_exit(Exit::Io)?);
        lines.push('\n');
    }
    write_file(&a.run_dir.join("scores.jsonl"), &lines)?;
    write_file(
        &a.run_dir.join("aggregate.json"),
        &serde_json::to_string_pretty(&report).or_exit(Exit::Io)?,
    )?;
    print!("{}", report.render());
    if rows.is_empty() {
        return fail(Exit::Config, anyhow!("no tree could be scored"));
    }
    Ok(Exit::Ok)
}

pub struct ExportArgs {
    pub run_dir: PathBuf,
    pub dataset: PathBuf,
    pub out: PathBuf,
    pub all: bool,
}

pub fn export_annotations(a: ExportArgs) -> Outcome {
    let episodes = load_episodes(&a.dataset)?;
    let trees = run_trees(&a.run_dir, &episodes, a.all)?;
    let items: Vec<(String, &EntailmentTree, &Episode)> =
        trees.iter().map(|(id, t, e)| (id.clone(), t, &episodes[*e])).collect();
    let counts = eval::export_annotations(&items, &a.out).or_exit(Exit::Io)?;
    for (kind, n) in counts {
        println!("{:<28} {n}", kind.file_name());
    }
    Ok(Exit::Ok)
}

pub struct ImportArgs {
    pub tasks: PathBuf,
    pub answers: Vec<PathBuf>,
    pub out: PathBuf,
}

pub fn import_annotations(a: ImportArgs) -> Outcome {
    let tasks = eval::read_tasks(&a.tasks).or_exit(Exit::Io)?;
    if tasks.is_empty() {
        return fail(Exit::Io, anyhow!("no annotation tasks under {}", a.tasks.display()));
    }
    let answers = eval::read_answers(&a.answers).map_err(|e| Failure {
        exit: if matches!(e, eval::EvalError::Io { .. }) { Exit::Io } else { Exit::Config },
        error: e.into(),
    })?;
    let imported = eval::import_annotations(&tasks, &answers).or_exit(Exit::Config)?;
    let missing: usize = imported.values().map(|j| j.missing.len()).sum();
    write_file(&a.out, &serde_json::to_string_pretty(&imported).or_exit(Exit::Io)?)?;
    println!(
        "imported {} answers for {} trees ({missing} nodes unanswered)",
        answers.len(),
        imported.len()
    );
    Ok(Exit::Ok)
}

pub fn report(run_dir: &Path) -> Outcome {
    let path = run_dir.join("report.json");
    let text = fs::read_to_string(&path)
        .with_context(|| format!("no run report at {}", path.display()))
        .or_exit(Exit::Io)?;
    let report: RunReport = serde_json::from_str(&text)
        .with_context(|| format!("parsing {}", path.display()))
        .or_exit(Exit::Config)?;
    print!("{}", report.render());
    let aggregate = run_dir.join("aggregate.json");
    if aggregate.exists() {
        let text = fs::read_to_string(&aggregate).or_exit(Exit::Io)?;
        let agg: AggregateReport = serde_json::from_str(&text).or_exit(Exit::Config)?;
        print!("\n{}", agg.render());
    }
    Ok(Exit::Ok)
}

pub fn generate_suite(dir: &Path, episodes: usize, seed: u64) -> Outcome {
    let suite = synthetic::generate(SuiteSpec { episodes, seed });
    synthetic::write_suite(dir, &suite)
        .with_context(|| format!("writing suite to {}", dir.display()))
        .or_exit(Exit::Io)?;
    let mut out = std::io::stdout().lock();
    let _ = writeln!(out, "wrote {episodes} episodes to {}", dir.display());
    Ok(Exit::Ok)
}
