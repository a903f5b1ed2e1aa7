//! Recursive tree generation.
//!
//! A node first looks for dialogue evidence in the localized window. Failing
//! that it decomposes, while depth allows, and proves both children. If the
//! result is still unproven (a null leaf, or a branch with any null leaf
//! below it) the frames in scope are polled, and a sufficient vote replaces
//! the node's evidence with the best frame. Frame votes are only taken when
//! that fallback is needed.
//!
//! Every decision is logged as a [`TraceEvent`]; [`replay`] rebuilds the
//! tree from the log alone.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{Episode, FrameRef};
use crate::decomposer::{self, DecomposeError};
use crate::evidence_text::{self, InferenceCandidate, LocalizedWindow};
use crate::evidence_visual::{self, DEFAULT_AFFIRMATIVE_FRACTION};
use crate::providers::{CallCounts, ModelClient, ProviderError, Session};
use crate::tree::{
    self, EntailmentTree, Evidence, EvidenceItem, Hypothesis, NodePath, Side, TreeStats,
    DEFAULT_MAX_DEPTH,
};

pub const DEFAULT_BUDGET: usize = 200;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Modality {
    #[serde(alias = "text-only")]
    Text,
    #[serde(alias = "vision-only", alias = "vision")]
    Video,
    #[default]
    Both,
}

impl Modality {
    pub fn uses_text(self) -> bool {
        self != Modality::Video
    }

    pub fn uses_video(self) -> bool {
        self != Modality::Text
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Modality::Text => "text",
            Modality::Video => "video",
            Modality::Both => "both",
        }
    }
}

impl fmt::Display for Modality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Modality {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "text" | "text-only" => Ok(Modality::Text),
            "video" | "vision" | "vision-only" => Ok(Modality::Video),
            "both" => Ok(Modality::Both),
            other => Err(format!("unknown modality {other:?} (text, video or both)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Thresholds {
    /// Minimum passage-rank score for a window to count as found.
    pub localization: f64,
    /// Minimum NLI score for cascade stage 1.
    pub nli: f64,
    /// Yes votes must exceed this fraction of frames in scope.
    pub affirmative_fraction: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self {
            localization: 0.0,
            nli: 0.0,
            affirmative_fraction: DEFAULT_AFFIRMATIVE_FRACTION,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchConfig {
    pub max_depth: usize,
    pub thresholds: Thresholds,
    pub modality: Modality,
    /// Provider calls allowed per proof.
    pub budget: usize,
    pub anonymize: bool,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            max_depth: DEFAULT_MAX_DEPTH,
            thresholds: Thresholds::default(),
            modality: Modality::Both,
            budget: DEFAULT_BUDGET,
            anonymize: false,
        }
    }
}

impl SearchConfig {
    pub fn check(&self) -> Result<(), String> {
        let t = &self.thresholds;
        if ![t.localization, t.nli, t.affirmative_fraction]
            .iter()
            .all(|x| x.is_finite())
        {
            return Err("thresholds must be finite".into());
        }
        if self.budget == 0 {
            return Err("budget must be positive".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NullReason {
    /// The answer option could not be restated as a hypothesis.
    Unstated,
    DepthLimit,
    DecompositionFailed,
    Budget,
}

/// One logged decision.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "kebab-case")]
pub enum TraceEvent {
    Localized {
        window: Option<LocalizedWindow>,
        best_score: Option<f64>,
        frames_in_scope: usize,
    },
    Enter {
        path: NodePath,
        hypothesis: Hypothesis,
    },
    Cascade {
        path: NodePath,
        candidates: Vec<InferenceCandidate>,
        survivors: usize,
    },
    DialogueLeaf {
        path: NodePath,
        item: EvidenceItem,
    },
    Decomposed {
        path: NodePath,
        left: String,
        right: String,
    },
    DecompositionFailed {
        path: NodePath,
        message: String,
    },
    Null {
        path: NodePath,
        reason: NullReason,
    },
    Votes {
        path: NodePath,
        question: String,
        yes: usize,
        total: usize,
        sufficient: bool,
    },
    FrameLeaf {
        path: NodePath,
        item: EvidenceItem,
    },
    BudgetExhausted {
        path: NodePath,
        limit: usize,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProofOutcome {
    pub tree: EntailmentTree,
    pub stats: TreeStats,
    pub call_counts: CallCounts,
    pub trace: Vec<TraceEvent>,
    pub budget_exhausted: bool,
}

/// A hard provider failure, with the decisions logged before it.
#[derive(Debug, Error)]
#[error("proof aborted: {source}")]
pub struct ProofError {
    pub source: ProviderError,
    pub trace: Vec<TraceEvent>,
    pub call_counts: CallCounts,
}

/// `NullLeaf`, or a branch with a null leaf anywhere below it.
pub fn is_null_evidence(evidence: &Evidence) -> bool {
    match evidence {
        Evidence::NullLeaf => true,
        Evidence::Leaf(_) => false,
        Evidence::Branch(l, r) => is_null_evidence(&l.evidence) || is_null_evidence(&r.evidence),
    }
}

struct Search<'s, 'c> {
    session: &'s Session<'c>,
    cfg: SearchConfig,
    window: Option<LocalizedWindow>,
    frames: Vec<FrameRef>,
    trace: Vec<TraceEvent>,
    budget_hit: bool,
}

// Converts a budget error into `Ok(None)` and records it; other errors pass.
fn soft_budget<T>(
    search: &mut Search<'_, '_>,
    path: &NodePath,
    r: Result<T, ProviderError>,
) -> Result<Option<T>, ProviderError> {
    match r {
        Ok(v) => Ok(Some(v)),
        Err(ProviderError::Budget { limit }) => {
            search.budget_hit = true;
            search.trace.push(TraceEvent::BudgetExhausted {
                path: path.clone(),
                limit,
            });
            Ok(None)
        }
        Err(e) => Err(e),
    }
}

impl Search<'_, '_> {
    fn null(&mut self, h: Hypothesis, path: &NodePath, reason: NullReason) -> EntailmentTree {
        self.trace.push(TraceEvent::Null {
            path: path.clone(),
            reason,
        });
        EntailmentTree::null(h, path.depth())
    }

    fn question(h: &Hypothesis) -> String {
        h.interrogative.clone().unwrap_or_else(|| h.text.clone())
    }

    fn text_evidence(&mut self, h: &Hypothesis, path: &NodePath) -> Result<Option<EvidenceItem>, ProviderError> {
        let Some(window) = self.window.clone() else {
            return Ok(None);
        };
        let retrieved = evidence_text::retrieve(self.session, &window, &Self::question(h));
        let Some(mut candidates) = soft_budget(self, path, retrieved)? else {
            return Ok(None);
        };
        let filtered = evidence_text::filter_cascade(
            self.session,
            &mut candidates,
            &h.text,
            &window,
            self.cfg.thresholds.nli,
        );
        let survivors = soft_budget(self, path, filtered)?;
        self.trace.push(TraceEvent::Cascade {
            path: path.clone(),
            candidates,
            survivors: survivors.as_ref().map_or(0, Vec::len),
        });
        match survivors {
            Some(s) if !s.is_empty() => Ok(Some(evidence_text::best(&s, &window)?)),
            _ => Ok(None),
        }
    }

    fn visual_evidence(&mut self, h: &Hypothesis, path: &NodePath) -> Result<Option<EvidenceItem>, ProviderError> {
        let mut question = Self::question(h);
        if self.cfg.anonymize {
            let anonymized = evidence_visual::anonymize(self.session, &question);
            match soft_budget(self, path, anonymized)? {
                Some(a) => question = a.question,
                None => return Ok(None),
            }
        }
        let frames = self.frames.clone();
        let voted = evidence_visual::filter_visual(self.session, &frames, &question);
        let Some(votes) = soft_budget(self, path, voted)? else {
            return Ok(None);
        };
        let fraction = self.cfg.thresholds.affirmative_fraction;
        let sufficient = evidence_visual::sufficient(&votes, fraction);
        self.trace.push(TraceEvent::Votes {
            path: path.clone(),
            question,
            yes: votes.iter().filter(|v| v.is_yes()).count(),
            total: votes.len(),
            sufficient,
        });
        if sufficient {
            Ok(Some(evidence_visual::best_frame(&votes, fraction)?))
        } else {
            Ok(None)
        }
    }

    fn generate(&mut self, h: Hypothesis, path: NodePath) -> Result<EntailmentTree, ProviderError> {
        let depth = path.depth();
        self.trace.push(TraceEvent::Enter {
            path: path.clone(),
            hypothesis: h.clone(),
        });

        let mut node = None;
        if self.cfg.modality.uses_text() && !self.budget_hit {
            if let Some(item) = self.text_evidence(&h, &path)? {
                self.trace.push(TraceEvent::DialogueLeaf {
                    path: path.clone(),
                    item: item.clone(),
                });
                return Ok(EntailmentTree::leaf(h, depth, vec![item]));
            }
        }
        if self.budget_hit {
            node = Some(self.null(h.clone(), &path, NullReason::Budget));
        } else if depth >= self.cfg.max_depth {
            node = Some(self.null(h.clone(), &path, NullReason::DepthLimit));
        }
        let node = match node {
            Some(n) => n,
            None => match decomposer::decompose(self.session, &h) {
                Ok(d) => {
                    self.trace.push(TraceEvent::Decomposed {
                        path: path.clone(),
                        left: d.left.text.clone(),
                        right: d.right.text.clone(),
                    });
                    let left = self.generate(d.left, path.push(Side::L))?;
                    let right = self.generate(d.right, path.push(Side::R))?;
                    EntailmentTree::branch(h.clone(), depth, left, right)
                }
                Err(DecomposeError::Provider(e)) => {
                    soft_budget(self, &path, Err::<(), _>(e))?;
                    self.null(h.clone(), &path, NullReason::Budget)
                }
                Err(e) => {
                    self.trace.push(TraceEvent::DecompositionFailed {
                        path: path.clone(),
                        message: e.to_string(),
                    });
                    self.null(h.clone(), &path, NullReason::DecompositionFailed)
                }
            },
        };

        if is_null_evidence(&node.evidence) && self.cfg.modality.uses_video() && !self.budget_hit {
            if let Some(item) = self.visual_evidence(&h, &path)? {
                self.trace.push(TraceEvent::FrameLeaf {
                    path: path.clone(),
                    item: item.clone(),
                });
                return Ok(EntailmentTree::leaf(h, depth, vec![item]));
            }
        }
        Ok(node)
    }
}

/// Proves `hypothesis` against `episode`. The root hypothesis should carry
/// its question form; one is generated if it does not.
pub fn prove(
    client: &ModelClient,
    episode: &Episode,
    hypothesis: Hypothesis,
    cfg: &SearchConfig,
) -> Result<ProofOutcome, ProofError> {
    let session = Session::new(client, Some(cfg.budget));
    let mut search = Search {
        session: &session,
        cfg: *cfg,
        window: None,
        frames: Vec::new(),
        trace: Vec::new(),
        budget_hit: false,
    };
    let result = run(&mut search, episode, hypothesis);
    let budget_exhausted = search.budget_hit;
    let trace = std::mem::take(&mut search.trace);
    match result {
        Ok(tree) => Ok(ProofOutcome {
            stats: tree::stats(&tree),
            tree,
            call_counts: session.counts(),
            trace,
            budget_exhausted,
        }),
        Err(source) => Err(ProofError {
            source,
            trace,
            call_counts: session.counts(),
        }),
    }
}

fn run(search: &mut Search<'_, '_>, episode: &Episode, mut h: Hypothesis) -> Result<EntailmentTree, ProviderError> {
    let root = NodePath::root();
    if h.interrogative.is_none() {
        match soft_budget(search, &root, decomposer::question_form(search.session, &h.text))? {
            Some(q) => h.interrogative = Some(q),
            None => return Ok(search.null(h, &root, NullReason::Budget)),
        }
    }
    // Vision-only runs never read the transcript, so every frame is in scope.
    if search.cfg.modality.uses_text() {
        let loc = evidence_text::localize(
            search.session,
            episode,
            &h.text,
            search.cfg.thresholds.localization,
        );
        let Some(loc) = soft_budget(search, &root, loc)? else {
            return Ok(search.null(h, &root, NullReason::Budget));
        };
        search.frames = match &loc.window {
            Some(w) => episode.frames_in(w.t0_s, w.t1_s),
            None => episode.frames.clone(),
        };
        search.window = loc.window.clone();
        search.trace.push(TraceEvent::Localized {
            window: loc.window,
            best_score: loc.best_score,
            frames_in_scope: search.frames.len(),
        });
    } else {
        search.frames = episode.frames.clone();
        search.trace.push(TraceEvent::Localized {
            window: None,
            best_score: None,
            frames_in_scope: search.frames.len(),
        });
    }
    search.generate(h, root)
}

/// Rebuilds a tree from its trace. The last evidence decision logged for a
/// node wins, so a frame leaf overrides the branch or null leaf before it.
pub fn replay(trace: &[TraceEvent]) -> Result<EntailmentTree, String> {
    use std::collections::BTreeMap;

    enum Decision {
        Leaf(EvidenceItem),
        Branch,
        Null,
    }
    let mut hypotheses: BTreeMap<NodePath, Hypothesis> = BTreeMap::new();
    let mut decisions: BTreeMap<NodePath, Decision> = BTreeMap::new();
    for event in trace {
        match event {
            TraceEvent::Enter { path, hypothesis } => {
                hypotheses.insert(path.clone(), hypothesis.clone());
            }
            TraceEvent::DialogueLeaf { path, item } | TraceEvent::FrameLeaf { path, item } => {
                decisions.insert(path.clone(), Decision::Leaf(item.clone()));
            }
            TraceEvent::Decomposed { path, .. } => {
                decisions.insert(path.clone(), Decision::Branch);
            }
            TraceEvent::Null { path, .. } => {
                decisions.insert(path.clone(), Decision::Null);
            }
            _ => {}
        }
    }

    fn build(
        path: NodePath,
        hypotheses: &BTreeMap<NodePath, Hypothesis>,
        decisions: &BTreeMap<NodePath, Decision>,
    ) -> Result<EntailmentTree, String> {
        let h = hypotheses
            .get(&path)
            .cloned()
            .ok_or_else(|| format!("no hypothesis logged at {path}"))?;
        let depth = path.depth();
        Ok(match decisions.get(&path) {
            Some(Decision::Leaf(item)) => EntailmentTree::leaf(h, depth, vec![item.clone()]),
            Some(Decision::Null) => EntailmentTree::null(h, depth),
            Some(Decision::Branch) => EntailmentTree::branch(
                h,
                depth,
                build(path.push(Side::L), hypotheses, decisions)?,
                build(path.push(Side::R), hypotheses, decisions)?,
            ),
            None => return Err(format!("no decision logged at {path}")),
        })
    }
    build(NodePath::root(), &hypotheses, &decisions)
}

/// One JSON object per line.
pub fn trace_to_jsonl(trace: &[TraceEvent]) -> String {
    trace
        .iter()
        .map(|e| serde_json::to_string(e).expect("trace events serialize") + "\n")
        .collect()
}
