//! Tree quality: per-node critic judgments, the composition score, human
//! annotation export/import, and partitioned aggregation.
//!
//! Four qualia are judged. Acceptability (1 to 5, leaves) asks whether a
//! leaf hypothesis is true given its evidence. Relevance and distinctness
//! (0/1 per child, branches) ask whether each child pertains to its parent
//! and adds something its sibling does not. Sufficiency (0/1, branches) asks
//! whether the children jointly cover the parent. The composition score is
//! `S = (a + s + 0.5·(d + r)) / 3` over the normalized means, renormalized
//! over the qualia a tree defines.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::{self, Write as _};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::dataset::{render_lines, Episode};
use crate::decomposer::lint_sentence;
use crate::providers::{parse, ModelClient, ProviderError, Session, TemplateName};
use crate::tree::{evidence_mix, EntailmentTree, Evidence, EvidenceItem, EvidenceMix, NodePath, Side};

pub const WEIGHT_A: f64 = 1.0;
pub const WEIGHT_S: f64 = 1.0;
pub const WEIGHT_D: f64 = 0.5;
pub const WEIGHT_R: f64 = 0.5;

/// Acceptability rubric shown to annotators, indexed by score − 1.
pub const ACCEPTABILITY_RUBRIC: [&str; 5] = [
    "Sentence is contradicted by the screenshot or dialogue.",
    "Sentence is unlikely to be true based on the screenshot or dialogue.",
    "Sentence is purely ambiguous given the screenshot or dialogue.",
    "Sentence is likely to be true based on the screenshot or dialogue.",
    "Sentence is directly suggested or shown by the screenshot or dialogue.",
];

/// Printed with every aggregate table.
pub const AGGREGATION_NOTE: &str = "S is computed per tree and then averaged (mean S). \
Applying the formula to the averaged qualia instead (S of means) generally gives a \
different number; both are shown.";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Judge {
    LlmCritic,
    HumanImport,
}

/// Judgments for one node. Only fields defined for the node kind are set:
/// acceptability on proven leaves, the pair and triplet scores on branches.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeJudgment {
    pub node_path: NodePath,
    pub malformed: bool,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub acceptability: Option<u8>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub relevance: Option<[u8; 2]>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub distinct: Option<[u8; 2]>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub sufficiency: Option<u8>,
}

impl NodeJudgment {
    fn empty(node_path: NodePath, malformed: bool) -> Self {
        Self {
            node_path,
            malformed,
            acceptability: None,
            relevance: None,
            distinct: None,
            sufficiency: None,
        }
    }

    fn is_empty(&self) -> bool {
        self.acceptability.is_none()
            && self.relevance.is_none()
            && self.distinct.is_none()
            && self.sufficiency.is_none()
    }
}

/// All judgments for a tree plus how many were expected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeJudgments {
    pub judge: Judge,
    pub judgments: Vec<NodeJudgment>,
    /// Judgeable nodes: proven leaves and branches.
    pub expected: usize,
    /// Nodes whose critic output could not be used.
    pub missing: Vec<NodePath>,
}

impl TreeJudgments {
    pub fn coverage(&self) -> f64 {
        if self.expected == 0 {
            1.0
        } else {
            (self.expected - self.missing.len()) as f64 / self.expected as f64
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeScore {
    pub a: Option<f64>,
    pub r: Option<f64>,
    pub d: Option<f64>,
    pub s: Option<f64>,
    #[serde(rename = "S")]
    pub composite: f64,
    pub judge: Judge,
}

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("no judged nodes to score")]
    Empty,
    #[error(transparent)]
    Provider(#[from] ProviderError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Record {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("annotation import rejected: {}", .0.join("; "))]
    Rejected(Vec<String>),
}

/// Maps acceptability 1..=5 onto [0, 1].
pub fn normalize_acceptability(x: u8) -> f64 {
    (f64::from(x) - 1.0) / 4.0
}

/// `S` from whichever qualia are defined, weights renormalized.
pub fn composition(a: Option<f64>, s: Option<f64>, d: Option<f64>, r: Option<f64>) -> Option<f64> {
    let parts = [(a, WEIGHT_A), (s, WEIGHT_S), (d, WEIGHT_D), (r, WEIGHT_R)];
    let weight: f64 = parts.iter().filter(|(q, _)| q.is_some()).map(|(_, w)| w).sum();
    (weight > 0.0).then(|| {
        parts
            .iter()
            .filter_map(|(q, w)| q.map(|q| q * w))
            .sum::<f64>()
            / weight
    })
}

fn mean(values: impl IntoIterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values
        .into_iter()
        .fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

/// Means of the normalized qualia and their composition. A malformed leaf
/// contributes 0 to acceptability.
pub fn score(judgments: &[NodeJudgment], judge: Judge) -> Result<TreeScore, EvalError> {
    if judgments.iter().all(NodeJudgment::is_empty) {
        return Err(EvalError::Empty);
    }
    let a = mean(judgments.iter().filter_map(|j| {
        j.acceptability
            .map(|x| if j.malformed { 0.0 } else { normalize_acceptability(x) })
    }));
    let pairs = |f: fn(&NodeJudgment) -> Option<[u8; 2]>| {
        mean(
            judgments
                .iter()
                .filter_map(f)
                .flatten()
                .map(f64::from),
        )
    };
    let r = pairs(|j| j.relevance);
    let d = pairs(|j| j.distinct);
    let s = mean(judgments.iter().filter_map(|j| j.sufficiency).map(f64::from));
    Ok(TreeScore {
        a,
        r,
        d,
        s,
        composite: composition(a, s, d, r).expect("some quale is defined"),
        judge,
    })
}

fn malformed(text: &str) -> bool {
    lint_sentence(text).is_err()
}

fn first_score(text: &str) -> Option<u8> {
    text.split(|c: char| !c.is_ascii_digit())
        .find(|t| !t.is_empty())
        .and_then(|t| t.parse().ok())
        .filter(|x| (1..=5).contains(x))
}

fn dialogue_for(item: &EvidenceItem, episode: &Episode) -> String {
    match item {
        EvidenceItem::DialogueInference { source_lines, .. } => render_lines(
            source_lines
                .iter()
                .filter_map(|&i| episode.transcript.get(i)),
        ),
        EvidenceItem::VideoFrame { .. } => String::new(),
    }
}

fn judge_leaf(
    session: &Session<'_>,
    statement: &str,
    item: &EvidenceItem,
    episode: &Episode,
) -> Result<Option<u8>, ProviderError> {
    let response = match item {
        EvidenceItem::DialogueInference { .. } => session.generate(
            TemplateName::CriticDialogueAcceptability,
            &crate::providers::bindings([
                ("dialogue", dialogue_for(item, episode)),
                ("statements", parse::numbered_list(&[statement])),
            ]),
            None,
        ),
        EvidenceItem::VideoFrame { frame_id, .. } => {
            let frame = episode.frame(frame_id).ok_or_else(|| {
                ProviderError::Input(format!("frame {frame_id} is not in the episode"))
            })?;
            session.generate(
                TemplateName::CriticVisualAcceptability,
                &crate::providers::bindings([("statement", statement.to_string())]),
                Some(frame),
            )
        }
    };
    match response {
        Ok(g) => Ok(first_score(&g.into_text())),
        Err(ProviderError::Parse { .. }) => Ok(None),
        Err(e) => Err(e),
    }
}

/// Reads one decomposition-critic line:
/// `(n) RELEVANCY: (x, y), DISTINCTNESS: ((x, y), SUFFICIENCY: (z)`.
/// The distinctness group may open with one parenthesis or two.
pub fn parse_decomposition_judgment(line: &str) -> Option<(usize, [u8; 2], [u8; 2], u8)> {
    let (n, rest) = parse::numbered(line)?;
    let upper = rest.to_ascii_uppercase();
    let field = |name: &str| -> Option<Vec<u8>> {
        let start = upper.find(name)? + name.len();
        let tail = upper[start..].trim_start().strip_prefix(':')?;
        let tail = tail.trim_start().trim_start_matches('(');
        let end = tail.find(')')?;
        tail[..end]
            .split(',')
            .map(|t| t.trim().parse::<u8>().ok().filter(|&v| v <= 1))
            .collect()
    };
    let rel = field("RELEVANCY")?;
    let dis = field("DISTINCTNESS")?;
    let suf = field("SUFFICIENCY")?;
    match (rel.as_slice(), dis.as_slice(), suf.as_slice()) {
        ([r1, r2], [d1, d2], [s]) => Some((n, [*r1, *r2], [*d1, *d2], *s)),
        _ => None,
    }
}

/// Critic judgments for every proven leaf and every branch. Leaves get one
/// acceptability call each, matched to their evidence kind; all branches
/// share one decomposition-critic call. Null leaves are not judged.
pub fn judge_tree(
    session: &Session<'_>,
    tree: &EntailmentTree,
    episode: &Episode,
) -> Result<TreeJudgments, ProviderError> {
    let nodes = tree.walk();
    let mut judgments = Vec::new();
    let mut missing = Vec::new();
    let mut expected = 0;
    let mut branches: Vec<(NodePath, &str, &str, &str)> = Vec::new();

    for (path, node) in &nodes {
        let text = node.hypothesis.text.as_str();
        let mut j = NodeJudgment::empty(path.clone(), malformed(text));
        match &node.evidence {
            Evidence::NullLeaf => {}
            Evidence::Leaf(items) => {
                expected += 1;
                let mut scores = Vec::new();
                for item in items {
                    scores.push(judge_leaf(session, text, item, episode)?);
                }
                match scores.iter().copied().collect::<Option<Vec<u8>>>() {
                    Some(s) if !s.is_empty() => j.acceptability = s.into_iter().max(),
                    _ => missing.push(path.clone()),
                }
            }
            Evidence::Branch(l, r) => {
                expected += 1;
                branches.push((path.clone(), text, &l.hypothesis.text, &r.hypothesis.text));
            }
        }
        judgments.push(j);
    }

    if !branches.is_empty() {
        let block = branches
            .iter()
            .enumerate()
            .map(|(i, (_, h, p1, p2))| format!("({}) H: {h} & P1: {p1} & P2: {p2}", i + 1))
            .collect::<Vec<_>>()
            .join("\n");
        let lines = match session.generate(
            TemplateName::CriticDecomposition,
            &crate::providers::bindings([("decompositions", block)]),
            None,
        ) {
            Ok(g) => g.into_list(),
            Err(ProviderError::Parse { .. }) => Vec::new(),
            Err(e) => return Err(e),
        };
        let parsed: BTreeMap<usize, ([u8; 2], [u8; 2], u8)> = lines
            .iter()
            .filter_map(|l| parse_decomposition_judgment(l))
            .map(|(n, r, d, s)| (n, (r, d, s)))
            .collect();
        for (i, (path, ..)) in branches.iter().enumerate() {
            let j = judgments
                .iter_mut()
                .find(|j| &j.node_path == path)
                .expect("every node has a judgment");
            match parsed.get(&(i + 1)) {
                Some(&(r, d, s)) => {
                    j.relevance = Some(r);
                    j.distinct = Some(d);
                    j.sufficiency = Some(s);
                }
                None => missing.push(path.clone()),
            }
        }
    }
    Ok(TreeJudgments {
        judge: Judge::LlmCritic,
        judgments,
        expected,
        missing,
    })
}

/// Judges many trees in parallel, each with its own session.
pub fn judge_many(
    client: &ModelClient,
    trees: &[(String, &EntailmentTree, &Episode)],
) -> Vec<(String, Result<TreeJudgments, ProviderError>)> {
    trees
        .par_iter()
        .map(|(id, tree, episode)| {
            let session = Session::new(client, None);
            (id.clone(), judge_tree(&session, tree, episode))
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TaskKind {
    LeafAcceptability,
    PairRelevance,
    TripletDistinctSufficient,
}

impl TaskKind {
    pub const ALL: [TaskKind; 3] = [
        TaskKind::LeafAcceptability,
        TaskKind::PairRelevance,
        TaskKind::TripletDistinctSufficient,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TaskKind::LeafAcceptability => "leaf-acceptability",
            TaskKind::PairRelevance => "pair-relevance",
            TaskKind::TripletDistinctSufficient => "triplet-distinct-sufficient",
        }
    }

    pub fn file_name(self) -> String {
        format!("{}.jsonl", self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnnotationTask {
    pub task_id: String,
    pub task_kind: TaskKind,
    pub tree_id: String,
    pub node_path: NodePath,
    pub payload: Value,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub rubric: Option<Vec<String>>,
}

fn evidence_payload(item: &EvidenceItem, episode: &Episode) -> Value {
    match item {
        EvidenceItem::DialogueInference {
            inference_text,
            source_lines,
            ..
        } => json!({
            "kind": "dialogue",
            "inference": inference_text,
            "source_lines": source_lines,
            "dialogue": dialogue_for(item, episode),
        }),
        EvidenceItem::VideoFrame {
            frame_id,
            timestamp_s,
            ..
        } => json!({
            "kind": "frame",
            "frame_id": frame_id,
            "timestamp_s": timestamp_s,
            "path": episode.frame(frame_id).map(|f| f.path.display().to_string()),
        }),
    }
}

/// Annotation tasks for one tree: an acceptability task per proven leaf,
/// and per branch two relevance pairs and one distinctness/sufficiency
/// triplet. Ids are `<tree_id>:<node path>:<suffix>`.
pub fn annotation_tasks(tree_id: &str, tree: &EntailmentTree, episode: &Episode) -> Vec<AnnotationTask> {
    let mut tasks = Vec::new();
    for (path, node) in tree.walk() {
        let id = |suffix: &str| format!("{tree_id}:{path}:{suffix}");
        match &node.evidence {
            Evidence::NullLeaf => {}
            Evidence::Leaf(items) => tasks.push(AnnotationTask {
                task_id: id("acceptability"),
                task_kind: TaskKind::LeafAcceptability,
                tree_id: tree_id.to_string(),
                node_path: path.clone(),
                payload: json!({
                    "hypothesis": node.hypothesis.text,
                    "evidence": items.iter().map(|i| evidence_payload(i, episode)).collect::<Vec<_>>(),
                }),
                rubric: Some(ACCEPTABILITY_RUBRIC.iter().map(|s| s.to_string()).collect()),
            }),
            Evidence::Branch(l, r) => {
                for (side, child) in [(Side::L, l), (Side::R, r)] {
                    tasks.push(AnnotationTask {
                        task_id: id(&format!("relevance-{side:?}")),
                        task_kind: TaskKind::PairRelevance,
                        tree_id: tree_id.to_string(),
                        node_path: path.clone(),
                        payload: json!({
                            "parent": node.hypothesis.text,
                            "child": child.hypothesis.text,
                            "side": format!("{side:?}"),
                        }),
                        rubric: None,
                    });
                }
                tasks.push(AnnotationTask {
                    task_id: id("triplet"),
                    task_kind: TaskKind::TripletDistinctSufficient,
                    tree_id: tree_id.to_string(),
                    node_path: path.clone(),
                    payload: json!({
                        "parent": node.hypothesis.text,
                        "left": l.hypothesis.text,
                        "right": r.hypothesis.text,
                    }),
                    rubric: None,
                });
            }
        }
    }
    tasks
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> EvalError + '_ {
    move |source| EvalError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Writes one JSON-lines file per task kind into `dir`. Returns the number
/// of tasks of each kind.
pub fn export_annotations(
    trees: &[(String, &EntailmentTree, &Episode)],
    dir: &Path,
) -> Result<BTreeMap<TaskKind, usize>, EvalError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut by_kind: BTreeMap<TaskKind, Vec<AnnotationTask>> =
        TaskKind::ALL.iter().map(|k| (*k, Vec::new())).collect();
    for (id, tree, episode) in trees {
        for task in annotation_tasks(id, tree, episode) {
            by_kind.get_mut(&task.task_kind).expect("all kinds").push(task);
        }
    }
    let mut counts = BTreeMap::new();
    for (kind, tasks) in by_kind {
        let path = dir.join(kind.file_name());
        let mut f = io::BufWriter::new(fs::File::create(&path).map_err(io_err(&path))?);
        for t in &tasks {
            let line = serde_json::to_string(t).expect("tasks serialize");
            writeln!(f, "{line}").map_err(io_err(&path))?;
        }
        f.flush().map_err(io_err(&path))?;
        counts.insert(kind, tasks.len());
    }
    Ok(counts)
}

fn read_jsonl<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>, EvalError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(n, l)| {
            serde_json::from_str(l).map_err(|e| EvalError::Record {
                path: path.to_path_buf(),
                line: n + 1,
                message: e.to_string(),
            })
        })
        .collect()
}

/// Reads the task files written by [`export_annotations`].
pub fn read_tasks(dir: &Path) -> Result<Vec<AnnotationTask>, EvalError> {
    let mut tasks = Vec::new();
    for kind in TaskKind::ALL {
        let path = dir.join(kind.file_name());
        if path.exists() {
            tasks.extend(read_jsonl::<AnnotationTask>(&path)?);
        }
    }
    Ok(tasks)
}

/// One annotator answer. Acceptability and relevance tasks use `score`;
/// triplet tasks use `distinct` and `sufficiency`. `malformed` may accompany
/// any answer.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnnotationAnswer {
    pub task_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score: Option<u8>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub distinct: Option<[u8; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sufficiency: Option<u8>,
    #[serde(default)]
    pub malformed: bool,
}

fn binary(v: Option<u8>) -> bool {
    v.is_some_and(|v| v <= 1)
}

/// Maps answers back onto node judgments, keyed by tree id. Every answer
/// must name an exported task and carry in-range values; otherwise the whole
/// import is rejected with the list of offenders.
pub fn import_annotations(
    tasks: &[AnnotationTask],
    answers: &[AnnotationAnswer],
) -> Result<BTreeMap<String, TreeJudgments>, EvalError> {
    let index: BTreeMap<&str, &AnnotationTask> = tasks.iter().map(|t| (t.task_id.as_str(), t)).collect();
    let mut problems = Vec::new();
    let mut judged: BTreeMap<String, BTreeMap<NodePath, NodeJudgment>> = BTreeMap::new();
    let mut expected: BTreeMap<String, BTreeSet<NodePath>> = BTreeMap::new();
    for t in tasks {
        expected
            .entry(t.tree_id.clone())
            .or_default()
            .insert(t.node_path.clone());
    }
    let mut seen = BTreeSet::new();
    for a in answers {
        let Some(task) = index.get(a.task_id.as_str()) else {
            problems.push(format!("unknown task id {:?}", a.task_id));
            continue;
        };
        if !seen.insert(a.task_id.as_str()) {
            problems.push(format!("duplicate answer for {:?}", a.task_id));
            continue;
        }
        let j = judged
            .entry(task.tree_id.clone())
            .or_default()
            .entry(task.node_path.clone())
            .or_insert_with(|| NodeJudgment::empty(task.node_path.clone(), false));
        j.malformed |= a.malformed;
        match task.task_kind {
            TaskKind::LeafAcceptability => match a.score {
                Some(x @ 1..=5) => j.acceptability = Some(x),
                other => problems.push(format!("{}: acceptability {other:?} is not in 1..=5", a.task_id)),
            },
            TaskKind::PairRelevance => {
                if !binary(a.score) {
                    problems.push(format!("{}: relevance {:?} is not 0 or 1", a.task_id, a.score));
                    continue;
                }
                let side = if a.task_id.ends_with("relevance-L") { 0 } else { 1 };
                let mut r = j.relevance.unwrap_or([0, 0]);
                r[side] = a.score.expect("checked");
                j.relevance = Some(r);
            }
            TaskKind::TripletDistinctSufficient => {
                let ok_d = a.distinct.is_some_and(|d| d.iter().all(|&v| v <= 1));
                if !ok_d || !binary(a.sufficiency) {
                    problems.push(format!(
                        "{}: distinct {:?} / sufficiency {:?} must be 0 or 1",
                        a.task_id, a.distinct, a.sufficiency
                    ));
                    continue;
                }
                j.distinct = a.distinct;
                j.sufficiency = a.sufficiency;
            }
        }
    }
    if !problems.is_empty() {
        return Err(EvalError::Rejected(problems));
    }
    // A relevance pair is only complete once both sides are answered.
    let answered_sides: BTreeSet<&str> = answers.iter().map(|a| a.task_id.as_str()).collect();
    let mut out = BTreeMap::new();
    for (tree_id, nodes) in expected {
        let mut found = judged.remove(&tree_id).unwrap_or_default();
        let mut missing = Vec::new();
        for path in &nodes {
            let prefix = format!("{tree_id}:{path}:");
            let node_tasks: Vec<&AnnotationTask> = tasks
                .iter()
                .filter(|t| t.task_id.starts_with(&prefix))
                .collect();
            let all_answered = node_tasks
                .iter()
                .all(|t| answered_sides.contains(t.task_id.as_str()));
            if !all_answered {
                missing.push(path.clone());
                if let Some(j) = found.get_mut(path) {
                    if node_tasks.iter().any(|t| t.task_kind == TaskKind::PairRelevance
                        && !answered_sides.contains(t.task_id.as_str()))
                    {
                        j.relevance = None;
                    }
                }
            }
        }
        out.insert(
            tree_id,
            TreeJudgments {
                judge: Judge::HumanImport,
                judgments: found.into_values().collect(),
                expected: nodes.len(),
                missing,
            },
        );
    }
    Ok(out)
}

/// Reads answers from JSON-lines files.
pub fn read_answers(paths: &[PathBuf]) -> Result<Vec<AnnotationAnswer>, EvalError> {
    let mut out = Vec::new();
    for p in paths {
        out.extend(read_jsonl::<AnnotationAnswer>(p)?);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Partition {
    /// By the evidence kinds a tree cites.
    Modality,
    /// By node count.
    Complexity,
}

pub fn partition_key(tree: &EntailmentTree, partition: Partition) -> String {
    match partition {
        Partition::Modality => match evidence_mix(tree) {
            EvidenceMix::Dialogue => "text".into(),
            EvidenceMix::Frame => "vision".into(),
            EvidenceMix::Mixed => "multimodal".into(),
            EvidenceMix::None => "none".into(),
        },
        Partition::Complexity => format!("{} nodes", tree.node_count()),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub partition: String,
    pub trees: usize,
    pub a: Option<f64>,
    pub r: Option<f64>,
    pub d: Option<f64>,
    pub s: Option<f64>,
    /// Mean of per-tree S.
    pub mean_s: f64,
    /// The formula applied to this row's mean qualia.
    pub s_of_means: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateReport {
    pub rows: Vec<AggregateRow>,
    pub note: String,
}

fn row(partition: String, scores: &[&TreeScore]) -> AggregateRow {
    let q = |f: fn(&TreeScore) -> Option<f64>| mean(scores.iter().filter_map(|s| f(s)));
    let (a, r, d, s) = (q(|t| t.a), q(|t| t.r), q(|t| t.d), q(|t| t.s));
    AggregateRow {
        partition,
        trees: scores.len(),
        a,
        r,
        d,
        s,
        mean_s: mean(scores.iter().map(|t| t.composite)).unwrap_or(0.0),
        s_of_means: composition(a, s, d, r),
    }
}

/// Mean qualia and mean S per partition, plus an `all` row. Partitions
/// with no trees do not appear.
pub fn aggregate(scores: &[(String, TreeScore)]) -> AggregateReport {
    let mut groups: BTreeMap<&str, Vec<&TreeScore>> = BTreeMap::new();
    for (key, s) in scores {
        groups.entry(key.as_str()).or_default().push(s);
    }
    let mut rows: Vec<AggregateRow> = groups
        .into_iter()
        .map(|(k, v)| row(k.to_string(), &v))
        .collect();
    if !scores.is_empty() {
        rows.push(row("all".into(), &scores.iter().map(|(_, s)| s).collect::<Vec<_>>()));
    }
    AggregateReport {
        rows,
        note: AGGREGATION_NOTE.to_string(),
    }
}

impl AggregateReport {
    pub fn render(&self) -> String {
        let f = |x: Option<f64>| x.map_or("-".to_string(), |v| format!("{:.1}", 100.0 * v));
        let mut out = format!(
            "{:<14} {:>5} {:>6} {:>6} {:>6} {:>6} {:>7} {:>9}\n",
            "partition", "trees", "a", "r", "d", "s", "mean S", "S(means)"
        );
        for r in &self.rows {
            out.push_str(&format!(
                "{:<14} {:>5} {:>6} {:>6} {:>6} {:>6} {:>7} {:>9}\n",
                r.partition,
                r.trees,
                f(r.a),
                f(r.r),
                f(r.d),
                f(r.s),
                f(Some(r.mean_s)),
                f(r.s_of_means)
            ));
        }
        out.push_str(&format!("note: {}\n", self.note));
        out
    }
}
