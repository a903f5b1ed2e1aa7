//! Deterministic oracle backend.
//!
//! An [`OracleWorld`] states the ground truth directly: which inferences each
//! transcript line supports, which sentences each frame shows, which
//! premise/hypothesis pairs entail or contradict, how hypotheses decompose,
//! and how relevant a passage is to a query. [`MockBackend`] answers every
//! template and task from those tables, so the whole engine runs with no
//! network and its behaviour can be checked by enumeration.
//!
//! The simulated models have the failure modes the real pipeline guards
//! against: inference generation hallucinates (the `hallucinations` table)
//! and the NLI scorer is blind to negation, scoring contradicting pairs as
//! entailing. The judges are exact.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::parse;
use super::{
    Backend, CompletionRequest, ProviderError, RawVqa, ScoreRequest, ScoreTask, TemplateName,
    VqaRequest,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RelevanceEntry {
    pub passage: String,
    pub query: String,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HypothesisEntry {
    pub question: String,
    pub answer: String,
    /// `None` makes the mock omit this option from its answer, simulating a
    /// generation failure.
    pub statement: Option<String>,
}

/// Ground truth for the mock backend. Serialized as one JSON document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OracleWorld {
    /// Rendered transcript line (`SPEAKER: text`) → inferences it supports.
    pub dialogue_facts: BTreeMap<String, BTreeSet<String>>,
    /// Frame id → sentences the frame shows.
    pub frame_facts: BTreeMap<String, BTreeSet<String>>,
    /// `(premise, hypothesis)` entailments. Reflexivity is implied.
    pub entails: BTreeSet<(String, String)>,
    /// `(premise, hypothesis)` pairs where the premise negates the hypothesis.
    pub contradicts: BTreeSet<(String, String)>,
    pub decompositions: BTreeMap<String, (String, String)>,
    pub relevance_scores: Vec<RelevanceEntry>,
    /// Passage-rank score for pairs missing from `relevance_scores`.
    pub default_relevance: f64,
    pub hypotheses: Vec<HypothesisEntry>,
    /// Statement → question form. Unlisted statements use
    /// `Is it true that <statement>?`.
    pub questions: BTreeMap<String, String>,
    /// Rendered transcript line → unfaithful sentences the generator emits.
    pub hallucinations: BTreeMap<String, BTreeSet<String>>,
    /// Character name → common noun used by the anonymizer.
    pub names: BTreeMap<String, String>,
    /// VQA confidence per frame (default 1.0).
    pub frame_confidence: BTreeMap<String, f64>,
}

impl Default for OracleWorld {
    fn default() -> Self {
        Self {
            dialogue_facts: BTreeMap::new(),
            frame_facts: BTreeMap::new(),
            entails: BTreeSet::new(),
            contradicts: BTreeSet::new(),
            decompositions: BTreeMap::new(),
            relevance_scores: Vec::new(),
            default_relevance: -1.0,
            hypotheses: Vec::new(),
            questions: BTreeMap::new(),
            hallucinations: BTreeMap::new(),
            names: BTreeMap::new(),
            frame_confidence: BTreeMap::new(),
        }
    }
}

const QUESTION_PREFIX: &str = "Is it true that ";

fn strip_final_punct(s: &str) -> &str {
    s.trim().trim_end_matches(['.', '!', '?'])
}

/// Capitalized, with a final period.
pub fn sentence_case(text: &str) -> String {
    let text = text.trim();
    let mut chars = text.chars();
    let mut out: String = match chars.next() {
        Some(c) => c.to_uppercase().chain(chars).collect(),
        None => return String::new(),
    };
    if !out.ends_with(['.', '!', '?']) {
        out.push('.');
    }
    out
}

impl OracleWorld {
    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("worlds serialize")
    }

    pub fn entails(&self, premise: &str, hypothesis: &str) -> bool {
        premise == hypothesis
            || self
                .entails
                .contains(&(premise.to_string(), hypothesis.to_string()))
    }

    pub fn contradicts(&self, premise: &str, hypothesis: &str) -> bool {
        self.contradicts
            .contains(&(premise.to_string(), hypothesis.to_string()))
    }

    pub fn question_for(&self, statement: &str) -> String {
        self.questions
            .get(statement)
            .cloned()
            .unwrap_or_else(|| format!("{QUESTION_PREFIX}{}?", strip_final_punct(statement)))
    }

    /// Inverse of [`question_for`](Self::question_for).
    pub fn statement_for(&self, question: &str) -> String {
        let question = question.trim();
        if let Some((statement, _)) = self.questions.iter().find(|(_, q)| q.as_str() == question) {
            return statement.clone();
        }
        match question
            .strip_prefix(QUESTION_PREFIX)
            .and_then(|rest| rest.strip_suffix('?'))
        {
            Some(core) => format!("{core}."),
            None => question.to_string(),
        }
    }

    fn lines_of(passage: &str) -> impl Iterator<Item = &str> {
        passage.lines().map(str::trim).filter(|l| !l.is_empty())
    }

    pub fn facts_in(&self, passage: &str) -> BTreeSet<&str> {
        Self::lines_of(passage)
            .filter_map(|line| self.dialogue_facts.get(line))
            .flatten()
            .map(String::as_str)
            .collect()
    }

    fn hallucinations_in(&self, passage: &str) -> BTreeSet<&str> {
        Self::lines_of(passage)
            .filter_map(|line| self.hallucinations.get(line))
            .flatten()
            .map(String::as_str)
            .collect()
    }

    /// Up to five inferences for a passage, conditioned on a question:
    /// facts entailing its statement first, then contradicting facts,
    /// hallucinations, and the remaining facts.
    pub fn inferences(&self, passage: &str, question: &str) -> Vec<String> {
        let target = self.statement_for(question);
        let facts = self.facts_in(passage);
        let hallucinated = self.hallucinations_in(passage);
        let mut ranked: Vec<&str> = Vec::new();
        ranked.extend(facts.iter().filter(|f| self.entails(f, &target)));
        ranked.extend(facts.iter().filter(|f| self.contradicts(f, &target)));
        ranked.extend(hallucinated.iter());
        ranked.extend(facts.iter());
        let mut seen = BTreeSet::new();
        ranked
            .into_iter()
            .filter(|s| seen.insert(*s))
            .take(5)
            .map(str::to_string)
            .collect()
    }

    fn relevance(&self, passage: &str, query: &str) -> f64 {
        self.relevance_scores
            .iter()
            .find(|e| e.passage == passage && e.query == query)
            .map_or(self.default_relevance, |e| e.score)
    }

    fn anonymize(&self, question: &str) -> String {
        let mut out = question.to_string();
        for (name, noun) in &self.names {
            let mut result = String::with_capacity(out.len());
            let mut rest = out.as_str();
            while let Some(at) = rest.find(name.as_str()) {
                let before_ok = rest[..at]
                    .chars()
                    .last()
                    .is_none_or(|c| !c.is_alphanumeric());
                let after_ok = rest[at + name.len()..]
                    .chars()
                    .next()
                    .is_none_or(|c| !c.is_alphanumeric());
                result.push_str(&rest[..at]);
                if before_ok && after_ok {
                    let sentence_start = result.trim_end().is_empty();
                    result.push_str(&if sentence_start {
                        sentence_case(noun).trim_end_matches('.').to_string()
                    } else {
                        noun.clone()
                    });
                } else {
                    result.push_str(name);
                }
                rest = &rest[at + name.len()..];
            }
            result.push_str(rest);
            out = result;
        }
        out
    }

    fn acceptability(&self, premises: impl IntoIterator<Item = impl AsRef<str>>, statement: &str) -> u8 {
        let premises: Vec<_> = premises.into_iter().collect();
        if premises.iter().any(|p| self.entails(p.as_ref(), statement)) {
            5
        } else if premises.iter().any(|p| self.contradicts(p.as_ref(), statement)) {
            1
        } else {
            3
        }
    }
}

const STOPWORDS: &[&str] = &[
    "the", "and", "that", "was", "were", "with", "for", "about", "after", "because", "from",
    "this", "they", "into", "his", "her", "their", "has", "had", "have", "are", "not",
];

fn content_words(s: &str) -> BTreeSet<String> {
    s.split(|c: char| !c.is_alphanumeric())
        .map(str::to_lowercase)
        .filter(|w| w.len() >= 3 && !STOPWORDS.contains(&w.as_str()))
        .collect()
}

/// Mock backend answering from an [`OracleWorld`].
#[derive(Debug, Clone)]
pub struct MockBackend {
    world: OracleWorld,
    hypothesis_table: HashMap<(String, String), Option<String>>,
}

impl MockBackend {
    pub fn new(world: OracleWorld) -> Self {
        let hypothesis_table = world
            .hypotheses
            .iter()
            .map(|e| ((e.question.clone(), e.answer.clone()), e.statement.clone()))
            .collect();
        Self {
            world,
            hypothesis_table,
        }
    }

    pub fn world(&self) -> &OracleWorld {
        &self.world
    }

    fn binding<'r>(request: &'r CompletionRequest, name: &str) -> Result<&'r str, ProviderError> {
        request
            .bindings
            .get(name)
            .map(String::as_str)
            .ok_or_else(|| ProviderError::Precondition(format!("mock needs binding {name:?}")))
    }

    fn statement_for_answer(&self, question: &str, answer: &str) -> Option<String> {
        match self
            .hypothesis_table
            .get(&(question.to_string(), answer.to_string()))
        {
            Some(entry) => entry.clone(),
            None => Some(sentence_case(answer)),
        }
    }

    fn numbered_items(text: &str) -> Vec<(usize, String)> {
        parse::parse_numbered_list(text).into_iter().collect()
    }

    fn json(map: BTreeMap<String, String>) -> String {
        serde_json::to_string(&map).expect("string maps serialize")
    }
}

impl Backend for MockBackend {
    fn id(&self) -> &str {
        "mock"
    }

    fn complete(&self, request: &CompletionRequest) -> Result<String, ProviderError> {
        let world = &self.world;
        let out = match request.template {
            TemplateName::Hypothesis => {
                let block = Self::binding(request, "questions")?;
                let mut lines = block.lines();
                let question = lines.next().unwrap_or_default().trim();
                lines
                    .filter_map(parse::numbered)
                    .filter_map(|(n, answer)| {
                        self.statement_for_answer(question, answer)
                            .map(|s| format!("({n}) {s}"))
                    })
                    .collect::<Vec<_>>()
                    .join("\n")
            }
            TemplateName::QuestionForm => {
                world.question_for(Self::binding(request, "statement")?)
            }
            TemplateName::Decomposition => {
                let statement = Self::binding(request, "statement")?;
                match world.decompositions.get(statement) {
                    Some((a, b)) => format!("(1) \"{a}\"\n(2) \"{b}\""),
                    None => "I cannot break this statement down any further.".to_string(),
                }
            }
            TemplateName::Inference => {
                let inferences = world.inferences(
                    Self::binding(request, "dialogue")?,
                    Self::binding(request, "question")?,
                );
                Self::json(
                    inferences
                        .into_iter()
                        .enumerate()
                        .map(|(i, s)| ((i + 1).to_string(), s))
                        .collect(),
                )
            }
            TemplateName::DialogueFaithfulness => {
                let facts = world.facts_in(Self::binding(request, "dialogue")?);
                Self::json(
                    Self::numbered_items(Self::binding(request, "inferences")?)
                        .into_iter()
                        .map(|(n, s)| {
                            let verdict = if facts.contains(s.as_str()) {
                                "CORRECT"
                            } else {
                                "NOT SUPPORTED"
                            };
                            (n.to_string(), verdict.to_string())
                        })
                        .collect(),
                )
            }
            TemplateName::HypothesisEntailment => {
                let hypothesis = Self::binding(request, "hypothesis")?.trim();
                let complete = crate::tree::is_sentence(hypothesis)
                    && hypothesis.starts_with(|c: char| c.is_uppercase());
                Self::json(
                    Self::numbered_items(Self::binding(request, "inferences")?)
                        .into_iter()
                        .map(|(n, fact)| {
                            let yes = complete && world.entails(&fact, hypothesis);
                            (n.to_string(), if yes { "YES" } else { "NO" }.to_string())
                        })
                        .collect(),
                )
            }
            TemplateName::Anonymization => {
                let block = Self::binding(request, "questions")?;
                Self::json(
                    block
                        .lines()
                        .filter_map(|l| l.split_once(':'))
                        .map(|(k, q)| (k.trim().to_string(), world.anonymize(q.trim())))
                        .collect(),
                )
            }
            TemplateName::CriticDecomposition => {
                let block = Self::binding(request, "decompositions")?;
                let mut lines = Vec::new();
                for (n, rest) in block.lines().filter_map(parse::numbered) {
                    let parts: Vec<&str> = rest.split(" & ").collect();
                    let [h, p1, p2] = parts[..] else { continue };
                    let (Some(h), Some(p1), Some(p2)) = (
                        h.strip_prefix("H: "),
                        p1.strip_prefix("P1: "),
                        p2.strip_prefix("P2: "),
                    ) else {
                        continue;
                    };
                    let listed = world.decompositions.get(h).is_some_and(|(a, b)| {
                        (a == p1 && b == p2) || (a == p2 && b == p1)
                    });
                    let hw = content_words(h);
                    let relevant = |p: &str| {
                        u8::from(listed || !content_words(p).is_disjoint(&hw))
                    };
                    let (d1, d2) = if p1 == p2 {
                        (0, 0)
                    } else {
                        (
                            u8::from(!world.entails(p2, p1)),
                            u8::from(!world.entails(p1, p2)),
                        )
                    };
                    lines.push(format!(
                        "({n}) RELEVANCY: ({}, {}), DISTINCTNESS: (({d1}, {d2}), SUFFICIENCY: ({})",
                        relevant(p1),
                        relevant(p2),
                        u8::from(listed)
                    ));
                }
                lines.join("\n")
            }
            TemplateName::CriticDialogueAcceptability => {
                let facts = world.facts_in(Self::binding(request, "dialogue")?);
                Self::numbered_items(Self::binding(request, "statements")?)
                    .into_iter()
                    .map(|(_, s)| world.acceptability(&facts, &s).to_string())
                    .collect::<Vec<_>>()
                    .join(", ")
            }
            TemplateName::CriticVisualAcceptability => {
                let frame = request.frame.as_ref().ok_or_else(|| {
                    ProviderError::Input("visual critic needs a frame".into())
                })?;
                let shown = world
                    .frame_facts
                    .get(&frame.frame_id)
                    .cloned()
                    .unwrap_or_default();
                world
                    .acceptability(&shown, Self::binding(request, "statement")?.trim())
                    .to_string()
            }
            TemplateName::Vqa => {
                return Err(ProviderError::Precondition(
                    "visual QA goes through the vqa capability".into(),
                ))
            }
        };
        Ok(out)
    }

    fn score(&self, request: &ScoreRequest) -> Result<f64, ProviderError> {
        Ok(match request.task {
            ScoreTask::PassageRank => self.world.relevance(&request.premise, &request.query),
            ScoreTask::Nli => {
                let blind = self.world.entails(&request.premise, &request.query)
                    || self.world.contradicts(&request.premise, &request.query);
                if blind {
                    1.0
                } else {
                    -1.0
                }
            }
        })
    }

    fn vqa(&self, request: &VqaRequest) -> Result<RawVqa, ProviderError> {
        if request.frame.frame_id.is_empty() {
            return Err(ProviderError::Input("frame has no id".into()));
        }
        let statement = self.world.statement_for(&request.question);
        let shown = self.world.frame_facts.get(&request.frame.frame_id);
        let any = |pred: &dyn Fn(&str) -> bool| shown.is_some_and(|s| s.iter().any(|f| pred(f)));
        let confidence = self
            .world
            .frame_confidence
            .get(&request.frame.frame_id)
            .copied()
            .unwrap_or(1.0);
        Ok(if any(&|f| self.world.entails(f, &statement)) {
            RawVqa {
                text: "Yes.".into(),
                confidence,
            }
        } else if any(&|f| self.world.contradicts(f, &statement)) {
            RawVqa {
                text: "No.".into(),
                confidence,
            }
        } else {
            RawVqa {
                text: "NOT ENOUGH INFO".into(),
                confidence: 0.0,
            }
        })
    }
}
