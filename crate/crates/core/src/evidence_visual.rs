//! Visual evidence: one VQA vote per frame, the affirmative-fraction
//! sufficiency rule, best-frame selection and question anonymization.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::FrameRef;
use crate::providers::{ProviderError, Session, TemplateName, VqaAnswer, VqaVerdict};
use crate::tree::EvidenceItem;

pub const DEFAULT_AFFIRMATIVE_FRACTION: f64 = 0.10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameVote {
    pub frame: FrameRef,
    pub verdict: VqaVerdict,
}

impl FrameVote {
    pub fn is_yes(&self) -> bool {
        self.verdict.answer == VqaAnswer::Yes
    }
}

/// Asks `question` of every frame. A frame whose call fails votes
/// not-enough-info; the error surfaces only when every call failed or the
/// budget ran out.
pub fn filter_visual(
    session: &Session<'_>,
    frames: &[FrameRef],
    question: &str,
) -> Result<Vec<FrameVote>, ProviderError> {
    let results: Vec<Result<VqaVerdict, ProviderError>> = frames
        .par_iter()
        .map(|f| session.vqa(f, question))
        .collect();
    if let Some(e) = results
        .iter()
        .find_map(|r| r.as_ref().err().filter(|e| matches!(e, ProviderError::Budget { .. })))
    {
        return Err(e.clone());
    }
    if !results.is_empty() && results.iter().all(Result::is_err) {
        return Err(results.into_iter().find_map(Result::err).expect("non-empty"));
    }
    Ok(frames
        .iter()
        .zip(results)
        .map(|(frame, r)| FrameVote {
            frame: frame.clone(),
            verdict: r.unwrap_or_else(|e| {
                tracing::warn!(frame = %frame.frame_id, error = %e, "frame vote failed");
                VqaVerdict {
                    answer: VqaAnswer::NotEnoughInfo,
                    confidence: 0.0,
                }
            }),
        })
        .collect())
}

/// Strictly more than `fraction` of the votes are yes. No votes is never
/// sufficient.
pub fn sufficient(votes: &[FrameVote], fraction: f64) -> bool {
    if votes.is_empty() {
        return false;
    }
    let yes = votes.iter().filter(|v| v.is_yes()).count();
    yes as f64 / votes.len() as f64 > fraction
}

/// The yes vote with the highest confidence, ties to the earliest frame.
pub fn best_frame(votes: &[FrameVote], fraction: f64) -> Result<EvidenceItem, ProviderError> {
    if !sufficient(votes, fraction) {
        return Err(ProviderError::Precondition(
            "best_frame needs a sufficient vote".into(),
        ));
    }
    let vote = votes
        .iter()
        .filter(|v| v.is_yes())
        .max_by(|a, b| {
            a.verdict
                .confidence
                .total_cmp(&b.verdict.confidence)
                .then_with(|| b.frame.timestamp_s.total_cmp(&a.frame.timestamp_s))
        })
        .expect("sufficiency implies a yes vote");
    Ok(EvidenceItem::VideoFrame {
        frame_id: vote.frame.frame_id.clone(),
        timestamp_s: vote.frame.timestamp_s,
        score: vote.verdict.confidence,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Anonymized {
    pub question: String,
    /// The rewrite failed and the original question was kept.
    pub passed_through: bool,
}

/// Replaces character names with common nouns via the anonymization
/// template. An unusable response keeps the original question.
pub fn anonymize(session: &Session<'_>, question: &str) -> Result<Anonymized, ProviderError> {
    if question.trim().is_empty() {
        return Err(ProviderError::Precondition("empty question".into()));
    }
    let response = session.generate(
        TemplateName::Anonymization,
        &crate::providers::bindings([("questions", format!("q1: {question}"))]),
        None,
    );
    let rewritten = match response {
        Ok(g) => g.into_map().remove("q1").filter(|q| !q.trim().is_empty()),
        Err(ProviderError::Parse { .. }) => None,
        Err(e) => return Err(e),
    };
    Ok(match rewritten {
        Some(q) => Anonymized {
            question: q,
            passed_through: false,
        },
        None => {
            tracing::warn!(%question, "anonymization failed; using the original question");
            Anonymized {
                question: question.to_string(),
                passed_through: true,
            }
        }
    })
}
