//! Multiple-choice driver: one hypothesis and one proof per answer option,
//! answer selection, batch runs and accuracy reports.

use std::collections::BTreeMap;
use std::fs;
use std::io::{self, Write as _};
use std::path::Path;
use std::sync::atomic::{AtomicBool, Ordering};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{Episode, QaItem};
use crate::decomposer;
use crate::providers::templates::{HYPOTHESIS_ICL_ANSWERS, HYPOTHESIS_ICL_QUESTIONS};
use crate::providers::{parse, CallCounts, ModelClient, ProviderError, Session, TemplateName};
use crate::search::{self, NullReason, ProofError, ProofOutcome, SearchConfig, TraceEvent};
use crate::tree::{self, is_sentence, EntailmentTree, EvidenceMix, Hypothesis, NodePath, QaPair, TreeStats};

/// A restated answer option.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptionHypothesis {
    pub index: usize,
    pub hypothesis: Hypothesis,
    /// Generation failed; `hypothesis` is a placeholder that is never proven.
    pub flagged: bool,
}

/// The question followed by `(n) answer` lines, numbered from 1.
pub fn question_block(question: &str, answers: &[String]) -> String {
    let mut block = question.trim().to_string();
    for (i, a) in answers.iter().enumerate() {
        block.push_str(&format!("\n({}) {}", i + 1, a.trim()));
    }
    block
}

fn placeholder(index: usize) -> String {
    format!("Answer option {} could not be restated.", index + 1)
}

/// One generation call restates every option; each statement then gets its
/// question form. Options the model skipped or garbled become flagged
/// placeholders.
pub fn hypothesize_answers(
    session: &Session<'_>,
    question: &str,
    answers: &[String],
) -> Result<Vec<OptionHypothesis>, ProviderError> {
    let lines = match session.generate(
        TemplateName::Hypothesis,
        &crate::providers::bindings([
            ("icl_questions", HYPOTHESIS_ICL_QUESTIONS.to_string()),
            ("icl_answers", HYPOTHESIS_ICL_ANSWERS.to_string()),
            ("questions", question_block(question, answers)),
        ]),
        None,
    ) {
        Ok(g) => g.into_list(),
        Err(ProviderError::Parse { .. }) => Vec::new(),
        Err(e) => return Err(e),
    };
    let mut statements: BTreeMap<usize, String> = BTreeMap::new();
    for line in &lines {
        if let Some((n, text)) = parse::numbered(line) {
            let text = parse::unquote(text);
            if n >= 1 && is_sentence(text) {
                statements.entry(n - 1).or_insert_with(|| text.to_string());
            }
        }
    }
    let mut out = Vec::with_capacity(answers.len());
    for (index, answer) in answers.iter().enumerate() {
        let qa = QaPair {
            question: question.to_string(),
            answer: answer.clone(),
        };
        let Some(text) = statements.remove(&index) else {
            tracing::warn!(%question, index, "no hypothesis generated for option");
            out.push(OptionHypothesis {
                index,
                hypothesis: Hypothesis::root(placeholder(index), qa),
                flagged: true,
            });
            continue;
        };
        let mut hypothesis = Hypothesis::root(text.clone(), qa);
        match decomposer::question_form(session, &text) {
            Ok(q) => hypothesis.interrogative = Some(q),
            Err(ProviderError::Parse { .. }) => {}
            Err(e) => return Err(e),
        }
        out.push(OptionHypothesis {
            index,
            hypothesis,
            flagged: false,
        });
    }
    Ok(out)
}

pub fn hypothesize(session: &Session<'_>, qa: &QaItem) -> Result<Vec<OptionHypothesis>, ProviderError> {
    hypothesize_answers(session, &qa.question, &qa.answers)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DecisionBasis {
    UniqueComplete,
    CompletenessTiebreak,
    ScoreTiebreak,
}

fn key(s: &TreeStats) -> (bool, f64, f64) {
    (s.null_leaf_count == 0, s.completeness, s.mean_leaf_score)
}

fn cmp_key(a: &TreeStats, b: &TreeStats) -> std::cmp::Ordering {
    let (ca, pa, sa) = key(a);
    let (cb, pb, sb) = key(b);
    ca.cmp(&cb)
        .then(pa.total_cmp(&pb))
        .then(sa.total_cmp(&sb))
}

/// Maximizes (complete, completeness, mean leaf score) lexicographically;
/// residual ties go to the lowest index.
pub fn select(per_answer: &[TreeStats]) -> (usize, DecisionBasis) {
    assert!(!per_answer.is_empty(), "select needs at least one outcome");
    let mut chosen = 0;
    for (i, s) in per_answer.iter().enumerate().skip(1) {
        if cmp_key(s, &per_answer[chosen]).is_gt() {
            chosen = i;
        }
    }
    let best = &per_answer[chosen];
    let complete = per_answer.iter().filter(|s| s.null_leaf_count == 0).count();
    let basis = if complete == 1 && best.null_leaf_count == 0 {
        DecisionBasis::UniqueComplete
    } else if per_answer
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != chosen)
        .all(|(_, s)| (key(s).0, key(s).1) < (key(best).0, key(best).1))
    {
        DecisionBasis::CompletenessTiebreak
    } else {
        DecisionBasis::ScoreTiebreak
    };
    (chosen, basis)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptionReport {
    pub index: usize,
    pub hypothesis: String,
    pub flagged: bool,
    pub complete: bool,
    pub stats: TreeStats,
    pub evidence: EvidenceMix,
    pub call_counts: CallCounts,
    pub budget_exhausted: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnswerVerdict {
    pub qid: String,
    pub qa_item: QaItem,
    pub chosen_index: usize,
    pub decision_basis: DecisionBasis,
    /// `None` for unlabeled questions.
    pub correct: Option<bool>,
    pub per_answer: Vec<OptionReport>,
    /// Calls spent restating the options.
    pub hypothesis_calls: CallCounts,
}

impl AnswerVerdict {
    pub fn completed(&self) -> bool {
        self.per_answer.iter().any(|o| o.complete)
    }

    pub fn chosen(&self) -> &OptionReport {
        &self.per_answer[self.chosen_index]
    }

    pub fn call_counts(&self) -> CallCounts {
        let mut total = self.hypothesis_calls.clone();
        for o in &self.per_answer {
            total.merge(&o.call_counts);
        }
        total
    }
}

/// A verdict together with the proofs behind it.
#[derive(Debug, Clone)]
pub struct QuestionResult {
    pub verdict: AnswerVerdict,
    pub outcomes: Vec<ProofOutcome>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuestionError {
    pub qid: String,
    pub clip_id: String,
    pub error: String,
    pub trace: Vec<TraceEvent>,
}

fn unstated(h: &Hypothesis) -> ProofOutcome {
    let tree = EntailmentTree::null(h.clone(), 0);
    ProofOutcome {
        stats: tree::stats(&tree),
        tree,
        call_counts: CallCounts::default(),
        trace: vec![
            TraceEvent::Enter {
                path: NodePath::root(),
                hypothesis: h.clone(),
            },
            TraceEvent::Null {
                path: NodePath::root(),
                reason: NullReason::Unstated,
            },
        ],
        budget_exhausted: false,
    }
}

/// Restates and proves every option of question `n` of `episode`, then
/// selects an answer. The option proofs run in parallel.
pub fn answer_question(
    client: &ModelClient,
    episode: &Episode,
    n: usize,
    cfg: &SearchConfig,
) -> Result<QuestionResult, QuestionError> {
    let qa = &episode.qa_items[n];
    let qid = episode.qid(n);
    let fail = |error: String, trace: Vec<TraceEvent>| QuestionError {
        qid: qid.clone(),
        clip_id: episode.clip_id.clone(),
        error,
        trace,
    };
    let session = Session::new(client, None);
    let options = hypothesize(&session, qa).map_err(|e| fail(e.to_string(), Vec::new()))?;
    let outcomes: Vec<ProofOutcome> = options
        .par_iter()
        .map(|o| {
            if o.flagged {
                Ok(unstated(&o.hypothesis))
            } else {
                search::prove(client, episode, o.hypothesis.clone(), cfg)
            }
        })
        .collect::<Result<_, ProofError>>()
        .map_err(|e| fail(e.source.to_string(), e.trace))?;

    let stats: Vec<TreeStats> = outcomes.iter().map(|o| o.stats).collect();
    let (chosen_index, decision_basis) = select(&stats);
    let per_answer = options
        .iter()
        .zip(&outcomes)
        .map(|(o, out)| OptionReport {
            index: o.index,
            hypothesis: o.hypothesis.text.clone(),
            flagged: o.flagged,
            complete: tree::is_complete(&out.tree),
            stats: out.stats,
            evidence: tree::evidence_mix(&out.tree),
            call_counts: out.call_counts.clone(),
            budget_exhausted: out.budget_exhausted,
        })
        .collect();
    Ok(QuestionResult {
        verdict: AnswerVerdict {
            qid,
            qa_item: qa.clone(),
            chosen_index,
            decision_basis,
            correct: qa.gold_index.map(|g| g == chosen_index),
            per_answer,
            hypothesis_calls: session.counts(),
        },
        outcomes,
    })
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Breakdown {
    pub questions: usize,
    pub correct: usize,
    pub accuracy: Option<f64>,
}

/// Accuracy figures for a run.
///
/// Fractions are over labeled answered questions, so
/// `accuracy = accuracy_on_completed · completed_fraction +
/// accuracy_on_uncompleted · (1 − completed_fraction)`. With no labels,
/// `completed_fraction` falls back to all answered questions. A fraction
/// with an empty denominator is `null`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub run_id: String,
    pub modality: String,
    pub max_depth: usize,
    /// Questions selected for the run: `answered + errored + skipped`.
    pub total: usize,
    pub answered: usize,
    pub errored: usize,
    /// Never started because the run was interrupted.
    pub skipped: usize,
    pub labeled: usize,
    pub correct: usize,
    pub completed: usize,
    pub accuracy: Option<f64>,
    pub completed_fraction: Option<f64>,
    pub accuracy_on_completed: Option<f64>,
    pub accuracy_on_uncompleted: Option<f64>,
    /// Keyed by the evidence mix of the chosen answer's tree.
    pub by_evidence: BTreeMap<String, Breakdown>,
    pub call_counts: CallCounts,
    pub interrupted: bool,
}

fn frac(n: usize, d: usize) -> Option<f64> {
    (d > 0).then(|| n as f64 / d as f64)
}

impl RunReport {
    pub fn from_verdicts(
        run_id: &str,
        cfg: &SearchConfig,
        verdicts: &[AnswerVerdict],
        errored: usize,
        skipped: usize,
        interrupted: bool,
    ) -> Self {
        let labeled: Vec<&AnswerVerdict> = verdicts.iter().filter(|v| v.correct.is_some()).collect();
        let is_correct = |v: &AnswerVerdict| v.correct == Some(true);
        let correct = labeled.iter().filter(|v| is_correct(v)).count();
        let (done, undone): (Vec<&AnswerVerdict>, Vec<&AnswerVerdict>) =
            labeled.iter().copied().partition(|v| v.completed());
        let completed_fraction = if labeled.is_empty() {
            frac(verdicts.iter().filter(|v| v.completed()).count(), verdicts.len())
        } else {
            frac(done.len(), labeled.len())
        };
        let mut by_evidence: BTreeMap<String, Breakdown> = BTreeMap::new();
        for v in &labeled {
            let b = by_evidence
                .entry(v.chosen().evidence.as_str().to_string())
                .or_default();
            b.questions += 1;
            b.correct += usize::from(is_correct(v));
        }
        for b in by_evidence.values_mut() {
            b.accuracy = frac(b.correct, b.questions);
        }
        let mut call_counts = CallCounts::default();
        for v in verdicts {
            call_counts.merge(&v.call_counts());
        }
        RunReport {
            run_id: run_id.to_string(),
            modality: cfg.modality.to_string(),
            max_depth: cfg.max_depth,
            total: verdicts.len() + errored + skipped,
            answered: verdicts.len(),
            errored,
            skipped,
            labeled: labeled.len(),
            correct,
            completed: if labeled.is_empty() {
                verdicts.iter().filter(|v| v.completed()).count()
            } else {
                done.len()
            },
            accuracy: frac(correct, labeled.len()),
            completed_fraction,
            accuracy_on_completed: frac(done.iter().filter(|v| is_correct(v)).count(), done.len()),
            accuracy_on_uncompleted: frac(undone.iter().filter(|v| is_correct(v)).count(), undone.len()),
            by_evidence,
            call_counts,
            interrupted,
        }
    }

    /// Aligned plain-text summary.
    pub fn render(&self) -> String {
        let f = |x: Option<f64>| x.map_or("-".to_string(), |v| format!("{v:.3}"));
        let mut out = format!(
            "run {} (modality {}, max depth {})\n\
             questions            {:>6}\n\
             answered             {:>6}\n\
             errored              {:>6}\n\
             skipped              {:>6}\n\
             accuracy             {:>6}\n\
             completed fraction   {:>6}\n\
             acc. on completed    {:>6}\n\
             acc. on uncompleted  {:>6}\n",
            self.run_id,
            self.modality,
            self.max_depth,
            self.total,
            self.answered,
            self.errored,
            self.skipped,
            f(self.accuracy),
            f(self.completed_fraction),
            f(self.accuracy_on_completed),
            f(self.accuracy_on_uncompleted),
        );
        for (mix, b) in &self.by_evidence {
            out.push_str(&format!(
                "  chosen via {mix:<9} {:>6}  accuracy {}\n",
                b.questions,
                f(b.accuracy)
            ));
        }
        if self.interrupted {
            out.push_str("(interrupted: partial results)\n");
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchConfig {
    pub search: SearchConfig,
    pub workers: usize,
    /// Answer at most this many questions, sampled with `seed`.
    pub limit: Option<usize>,
    pub seed: u64,
    /// Persist per-proof traces.
    pub trace: bool,
}

impl Default for BatchConfig {
    fn default() -> Self {
        Self {
            search: SearchConfig::default(),
            workers: 4,
            limit: None,
            seed: 0,
            trace: false,
        }
    }
}

/// Indices of the questions to run: all of them, or `limit` sampled without
/// replacement and kept in dataset order.
pub fn sample_questions(total: usize, limit: Option<usize>, seed: u64) -> Vec<usize> {
    match limit {
        Some(k) if k < total => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut picked = rand::seq::index::sample(&mut rng, total, k).into_vec();
            picked.sort_unstable();
            picked
        }
        _ => (0..total).collect(),
    }
}

pub struct BatchOutcome {
    pub report: RunReport,
    pub verdicts: Vec<AnswerVerdict>,
    pub errors: Vec<QuestionError>,
}

fn write_jsonl<T: Serialize>(path: &Path, rows: &[T]) -> io::Result<()> {
    let mut f = io::BufWriter::new(fs::File::create(path)?);
    for row in rows {
        serde_json::to_writer(&mut f, row)?;
        f.write_all(b"\n")?;
    }
    f.flush()
}

fn persist_question(dir: &Path, result: &QuestionResult, trace: bool) -> io::Result<()> {
    for (opt, outcome) in result.outcomes.iter().enumerate() {
        let stem = format!("{}_{opt}", result.verdict.qid);
        fs::write(
            dir.join("trees").join(format!("{stem}.json")),
            tree::serialize(&outcome.tree),
        )?;
        if trace {
            fs::write(
                dir.join("traces").join(format!("{stem}.jsonl")),
                search::trace_to_jsonl(&outcome.trace),
            )?;
        }
    }
    Ok(())
}

pub fn write_report(dir: &Path, report: &RunReport) -> io::Result<()> {
    let mut text = serde_json::to_string_pretty(report)?;
    text.push('\n');
    fs::write(dir.join("report.json"), text)
}

/// Answers every selected question across `episodes`.
///
/// Questions run on a pool of `cfg.workers` threads. Setting `cancel` stops
/// new questions from starting; those already running finish and the report
/// is marked interrupted. With `run_dir`, trees (and traces) are written
/// under it along with `verdicts.jsonl`, `errors.jsonl` and `report.json`.
pub fn run_batch(
    client: &ModelClient,
    episodes: &[Episode],
    cfg: &BatchConfig,
    run_id: &str,
    run_dir: Option<&Path>,
    cancel: &AtomicBool,
) -> io::Result<BatchOutcome> {
    let all: Vec<(usize, usize)> = episodes
        .iter()
        .enumerate()
        .flat_map(|(e, ep)| (0..ep.qa_items.len()).map(move |q| (e, q)))
        .collect();
    let selected: Vec<(usize, usize)> = sample_questions(all.len(), cfg.limit, cfg.seed)
        .into_iter()
        .map(|i| all[i])
        .collect();
    if let Some(dir) = run_dir {
        fs::create_dir_all(dir.join("trees"))?;
        if cfg.trace {
            fs::create_dir_all(dir.join("traces"))?;
        }
    }

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers.max(1))
        .build()
        .map_err(io::Error::other)?;
    let results: Vec<Option<Result<QuestionResult, QuestionError>>> = pool.install(|| {
        selected
            .par_iter()
            .map(|&(e, q)| {
                if cancel.load(Ordering::SeqCst) {
                    return None;
                }
                let r = answer_question(client, &episodes[e], q, &cfg.search);
                if let (Some(dir), Ok(result)) = (run_dir, &r) {
                    if let Err(err) = persist_question(dir, result, cfg.trace) {
                        tracing::error!(error = %err, qid = %result.verdict.qid, "could not write trees");
                    }
                }
                Some(r)
            })
            .collect()
    });

    let mut verdicts = Vec::new();
    let mut errors = Vec::new();
    let mut skipped = 0;
    for r in results {
        match r {
            None => skipped += 1,
            Some(Ok(result)) => verdicts.push(result.verdict),
            Some(Err(e)) => {
                tracing::warn!(qid = %e.qid, error = %e.error, "question failed");
                errors.push(e);
            }
        }
    }
    let interrupted = cancel.load(Ordering::SeqCst);
    let report = RunReport::from_verdicts(run_id, &cfg.search, &verdicts, errors.len(), skipped, interrupted);
    if let Some(dir) = run_dir {
        write_jsonl(&dir.join("verdicts.jsonl"), &verdicts)?;
        write_jsonl(&dir.join("errors.jsonl"), &errors)?;
        write_report(dir, &report)?;
    }
    Ok(BatchOutcome {
        report,
        verdicts,
        errors,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn stats(complete: bool, completeness: f64, score: f64) -> TreeStats {
        TreeStats {
            node_count: 3,
            leaf_count: 2,
            null_leaf_count: usize::from(!complete),
            completeness,
            mean_leaf_score: score,
        }
    }

    #[test]
    fn select_unique_complete() {
        let s = [
            stats(false, 0.5, 0.9),
            stats(true, 1.0, 0.1),
            stats(false, 0.0, 0.0),
            stats(false, 0.0, 0.0),
            stats(false, 0.0, 0.0),
        ];
        assert_eq!(select(&s), (1, DecisionBasis::UniqueComplete));
    }

    #[test]
    fn select_by_completeness_then_score() {
        let s = [
            stats(false, 0.5, 0.6),
            stats(false, 0.5, 0.9),
            stats(false, 0.0, 0.0),
            stats(false, 0.0, 0.0),
            stats(false, 0.0, 0.0),
        ];
        assert_eq!(select(&s), (1, DecisionBasis::ScoreTiebreak));
        let s = [
            stats(false, 0.0, 0.0),
            stats(false, 0.5, 0.1),
            stats(false, 0.75, 0.0),
            stats(false, 0.0, 0.0),
            stats(false, 0.0, 0.0),
        ];
        assert_eq!(select(&s), (2, DecisionBasis::CompletenessTiebreak));
    }

    #[test]
    fn select_two_complete_uses_score_and_residual_ties_go_low() {
        let s = [
            stats(false, 0.0, 0.0),
            stats(true, 1.0, 0.7),
            stats(true, 1.0, 0.8),
            stats(false, 0.0, 0.0),
            stats(false, 0.0, 0.0),
        ];
        assert_eq!(select(&s), (2, DecisionBasis::ScoreTiebreak));
        let s = vec![stats(false, 0.0, 0.0); 5];
        assert_eq!(select(&s), (0, DecisionBasis::ScoreTiebreak));
    }

    #[test]
    fn question_block_numbers_from_one() {
        let b = question_block("Why?", &["A".into(), "B".into()]);
        assert_eq!(b, "Why?\n(1) A\n(2) B");
    }

    #[test]
    fn sampling_is_seeded_and_ordered() {
        let a = sample_questions(100, Some(10), 7);
        assert_eq!(a, sample_questions(100, Some(10), 7));
        assert_eq!(a.len(), 10);
        assert!(a.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(sample_questions(3, Some(10), 7), vec![0, 1, 2]);
    }

    #[test]
    fn empty_run_report() {
        let r = RunReport::from_verdicts("r", &SearchConfig::default(), &[], 0, 0, false);
        assert_eq!(r.total, 0);
        assert_eq!(r.accuracy, None);
        assert_eq!(r.completed_fraction, None);
    }
}
