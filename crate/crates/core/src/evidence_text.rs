//! Dialogue evidence: window localization, inference retrieval, the
//! three-stage filter cascade and best-survivor selection.

use serde::{Deserialize, Serialize};

use crate::dataset::{self, Episode, WINDOW_LINES};
use crate::providers::{parse, ProviderError, ScoreTask, Session, TemplateName};
use crate::tree::EvidenceItem;

/// The transcript passage chosen for a hypothesis and the time span it
/// hands to visual reasoning.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalizedWindow {
    pub start_index: usize,
    pub line_indices: Vec<usize>,
    /// Rendered lines, one per row.
    pub text: String,
    pub t0_s: f64,
    pub t1_s: f64,
    pub rank_score: f64,
}

/// Result of scoring every window: the argmax (ties to the earliest start)
/// and whether it clears the threshold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Localization {
    pub window: Option<LocalizedWindow>,
    /// Best score seen, even when below the threshold. `None` for an empty
    /// transcript.
    pub best_score: Option<f64>,
}

pub fn localize(
    session: &Session<'_>,
    episode: &Episode,
    query: &str,
    threshold: f64,
) -> Result<Localization, ProviderError> {
    let mut best: Option<LocalizedWindow> = None;
    for start in dataset::window_starts(&episode.transcript, WINDOW_LINES) {
        let passage = dataset::window(&episode.transcript, start, WINDOW_LINES)
            .expect("start comes from window_starts");
        let score = session
            .score_pair(&passage.text, query, ScoreTask::PassageRank)?
            .score;
        if best.as_ref().is_none_or(|b| score > b.rank_score) {
            best = Some(LocalizedWindow {
                start_index: passage.start_index,
                line_indices: passage.line_indices,
                text: passage.text,
                t0_s: passage.t0_s,
                t1_s: passage.t1_s,
                rank_score: score,
            });
        }
    }
    let best_score = best.as_ref().map(|w| w.rank_score);
    Ok(Localization {
        window: best.filter(|w| w.rank_score >= threshold),
        best_score,
    })
}

/// A generated inference and how far it got through the cascade. A stage
/// field is `None` when the candidate never reached that stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InferenceCandidate {
    pub text: String,
    pub nli: Option<f64>,
    pub faithful: Option<bool>,
    pub verified: Option<bool>,
}

impl InferenceCandidate {
    pub fn new(text: impl Into<String>) -> Self {
        Self {
            text: text.into(),
            nli: None,
            faithful: None,
            verified: None,
        }
    }

    /// Whether the candidate survived stages `1..=stage` (stage 0 is the
    /// unfiltered set).
    pub fn survived(&self, stage: usize, nli_threshold: f64) -> bool {
        let passes = [
            true,
            self.nli.is_some_and(|s| s >= nli_threshold),
            self.faithful == Some(true),
            self.verified == Some(true),
        ];
        passes[..=stage.min(3)].iter().all(|&p| p)
    }
}

fn parse_only<T: Default>(result: Result<T, ProviderError>) -> Result<T, ProviderError> {
    match result {
        Err(ProviderError::Parse { template, message }) => {
            tracing::debug!(%template, %message, "treating unparseable response as empty");
            Ok(T::default())
        }
        other => other,
    }
}

/// Inferences generated from the window, conditioned on the question form
/// of the hypothesis. Order is the backend's, duplicates removed.
pub fn retrieve(
    session: &Session<'_>,
    window: &LocalizedWindow,
    question: &str,
) -> Result<Vec<InferenceCandidate>, ProviderError> {
    let map = parse_only(
        session
            .generate(
                TemplateName::Inference,
                &crate::providers::bindings([
                    ("question", question.to_string()),
                    ("dialogue", window.text.clone()),
                ]),
                None,
            )
            .map(|g| g.into_map()),
    )?;
    let mut entries: Vec<(String, String)> = map.into_iter().collect();
    // numeric keys in numeric order
    entries.sort_by_key(|(k, _)| (k.parse::<usize>().unwrap_or(usize::MAX), k.clone()));
    let mut out: Vec<InferenceCandidate> = Vec::new();
    for (_, text) in entries {
        let text = parse::unquote(&text).to_string();
        if !text.is_empty() && !out.iter().any(|c| c.text == text) {
            out.push(InferenceCandidate::new(text));
        }
    }
    Ok(out)
}

// Verdicts from a batched judge keyed "1".."n". Missing or unexpected
// answers fail the candidate.
fn judge(
    session: &Session<'_>,
    template: TemplateName,
    context: (&str, &str),
    statements: &[&str],
    accept: &str,
) -> Result<Vec<bool>, ProviderError> {
    let b = crate::providers::bindings([
        (context.0, context.1.to_string()),
        ("inferences", parse::numbered_list(statements)),
    ]);
    let map = parse_only(session.generate(template, &b, None).map(|g| g.into_map()))?;
    Ok((1..=statements.len())
        .map(|n| {
            map.get(&n.to_string()).is_some_and(|v| {
                parse::unquote(v)
                    .trim_end_matches('.')
                    .eq_ignore_ascii_case(accept)
            })
        })
        .collect())
}

/// Runs NLI, faithfulness and verification in order, annotating each
/// candidate in place. Returns the survivors of all three stages.
pub fn filter_cascade(
    session: &Session<'_>,
    candidates: &mut [InferenceCandidate],
    hypothesis: &str,
    window: &LocalizedWindow,
    nli_threshold: f64,
) -> Result<Vec<InferenceCandidate>, ProviderError> {
    for c in candidates.iter_mut() {
        c.nli = Some(session.score_pair(&c.text, hypothesis, ScoreTask::Nli)?.score);
    }

    let stage1: Vec<usize> = (0..candidates.len())
        .filter(|&i| candidates[i].survived(1, nli_threshold))
        .collect();
    if !stage1.is_empty() {
        let texts: Vec<&str> = stage1.iter().map(|&i| candidates[i].text.as_str()).collect();
        let verdicts = judge(
            session,
            TemplateName::DialogueFaithfulness,
            ("dialogue", &window.text),
            &texts,
            "CORRECT",
        )?;
        for (&i, ok) in stage1.iter().zip(verdicts) {
            candidates[i].faithful = Some(ok);
        }
    }

    let stage2: Vec<usize> = stage1
        .into_iter()
        .filter(|&i| candidates[i].survived(2, nli_threshold))
        .collect();
    if !stage2.is_empty() {
        let texts: Vec<&str> = stage2.iter().map(|&i| candidates[i].text.as_str()).collect();
        let verdicts = judge(
            session,
            TemplateName::HypothesisEntailment,
            ("hypothesis", hypothesis),
            &texts,
            "YES",
        )?;
        for (&i, ok) in stage2.iter().zip(verdicts) {
            candidates[i].verified = Some(ok);
        }
    }

    Ok(candidates
        .iter()
        .filter(|c| c.survived(3, nli_threshold))
        .cloned()
        .collect())
}

/// The survivor with the highest NLI score, ties to the lexicographically
/// smaller text, cited against the window's lines.
pub fn best(
    survivors: &[InferenceCandidate],
    window: &LocalizedWindow,
) -> Result<EvidenceItem, ProviderError> {
    let chosen = survivors
        .iter()
        .filter_map(|c| c.nli.map(|s| (s, c)))
        .max_by(|(sa, a), (sb, b)| sa.total_cmp(sb).then_with(|| b.text.cmp(&a.text)))
        .ok_or_else(|| ProviderError::Precondition("best needs a scored survivor".into()))?;
    Ok(EvidenceItem::DialogueInference {
        inference_text: chosen.1.text.clone(),
        source_lines: window.line_indices.clone(),
        score: chosen.0,
    })
}
