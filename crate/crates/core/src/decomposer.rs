//! Splits a hypothesis into two simpler, pronoun-free sub-hypotheses.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::providers::{parse, ProviderError, Session, TemplateName};
use crate::tree::{is_sentence, Hypothesis, Origin};

/// Words that may not open a sub-hypothesis: a reader must understand each
/// child in isolation.
pub const BANNED_SUBJECTS: [&str; 6] = ["he", "she", "they", "it", "this", "that"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Decomposition {
    pub parent: Hypothesis,
    pub left: Hypothesis,
    pub right: Hypothesis,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DecomposeError {
    #[error("decomposition response unusable: {0}")]
    Parse(String),
    #[error("decomposition rejected: {0}")]
    Lint(String),
    #[error(transparent)]
    Provider(#[from] ProviderError),
}

impl DecomposeError {
    /// Parse and lint failures are soft: the node stays unproven. Provider
    /// failures (including an exhausted budget) belong to the caller.
    pub fn is_soft(&self) -> bool {
        !matches!(self, DecomposeError::Provider(_))
    }
}

/// A standalone sentence that does not open with a banned pronoun.
pub fn lint_sentence(text: &str) -> Result<(), String> {
    if !is_sentence(text) {
        return Err(format!("not a complete sentence: {text:?}"));
    }
    let first = text
        .split_whitespace()
        .next()
        .unwrap_or_default()
        .trim_matches(|c: char| !c.is_alphanumeric())
        .to_lowercase();
    if BANNED_SUBJECTS.contains(&first.as_str()) {
        return Err(format!("opens with a pronoun: {text:?}"));
    }
    Ok(())
}

pub fn lint(parent: &str, left: &str, right: &str) -> Result<(), String> {
    lint_sentence(left)?;
    lint_sentence(right)?;
    if left == right {
        return Err("children are identical".into());
    }
    if left == parent || right == parent {
        return Err("a child restates the parent".into());
    }
    Ok(())
}

fn parse_pair(lines: &[String]) -> Result<(String, String), String> {
    let mut found: Vec<(usize, String)> = lines
        .iter()
        .filter_map(|l| parse::numbered(l))
        .map(|(n, s)| (n, parse::unquote(s).to_string()))
        .collect();
    found.sort_by_key(|(n, _)| *n);
    match found.as_slice() {
        [(1, a), (2, b)] => Ok((a.clone(), b.clone())),
        _ => Err(format!("expected items (1) and (2), got {}", lines.join(" | "))),
    }
}

fn attempt(session: &Session<'_>, parent: &Hypothesis) -> Result<(String, String), DecomposeError> {
    let lines = match session.generate(
        TemplateName::Decomposition,
        &crate::providers::bindings([("statement", parent.text.clone())]),
        None,
    ) {
        Ok(g) => g.into_list(),
        Err(ProviderError::Parse { message, .. }) => return Err(DecomposeError::Parse(message)),
        Err(e) => return Err(e.into()),
    };
    let (left, right) = parse_pair(&lines).map_err(DecomposeError::Parse)?;
    lint(&parent.text, &left, &right).map_err(DecomposeError::Lint)?;
    Ok((left, right))
}

/// Question form of a statement via the question-form template.
pub fn question_form(session: &Session<'_>, statement: &str) -> Result<String, ProviderError> {
    let text = session
        .generate(
            TemplateName::QuestionForm,
            &crate::providers::bindings([("statement", statement.to_string())]),
            None,
        )?
        .into_text();
    Ok(parse::unquote(text.lines().next().unwrap_or_default()).to_string())
}

/// One decomposition call, retried once on a parse or lint failure, then
/// question forms for both children.
pub fn decompose(session: &Session<'_>, parent: &Hypothesis) -> Result<Decomposition, DecomposeError> {
    if parent.text.trim().is_empty() {
        return Err(ProviderError::Precondition("empty hypothesis".into()).into());
    }
    let (left, right) = match attempt(session, parent) {
        Err(e) if e.is_soft() => {
            tracing::debug!(error = %e, "retrying decomposition");
            attempt(session, parent)?
        }
        other => other?,
    };
    let mut children = Vec::with_capacity(2);
    for (text, origin) in [
        (left, Origin::DecompositionLeft),
        (right, Origin::DecompositionRight),
    ] {
        let question = match question_form(session, &text) {
            Ok(q) => q,
            Err(ProviderError::Parse { message, .. }) => return Err(DecomposeError::Parse(message)),
            Err(e) => return Err(e.into()),
        };
        children.push(Hypothesis::child(text, origin).with_interrogative(question));
    }
    let right = children.pop().expect("two children");
    let left = children.pop().expect("two children");
    Ok(Decomposition {
        parent: parent.clone(),
        left,
        right,
    })
}
