//! Prompt templates.
//!
//! Placeholders are written `{snake_case_name}`. Any other brace text (the
//! JSON format examples inside several prompts) is left untouched.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::ProviderError;

/// Named bindings for a template, ordered so they canonicalize for caching.
pub type Bindings = BTreeMap<String, String>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TemplateName {
    Hypothesis,
    QuestionForm,
    Decomposition,
    Inference,
    DialogueFaithfulness,
    Anonymization,
    HypothesisEntailment,
    Vqa,
    CriticDecomposition,
    CriticDialogueAcceptability,
    CriticVisualAcceptability,
}

impl TemplateName {
    pub const ALL: [TemplateName; 11] = [
        TemplateName::Hypothesis,
        TemplateName::QuestionForm,
        TemplateName::Decomposition,
        TemplateName::Inference,
        TemplateName::DialogueFaithfulness,
        TemplateName::Anonymization,
        TemplateName::HypothesisEntailment,
        TemplateName::Vqa,
        TemplateName::CriticDecomposition,
        TemplateName::CriticDialogueAcceptability,
        TemplateName::CriticVisualAcceptability,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TemplateName::Hypothesis => "hypothesis",
            TemplateName::QuestionForm => "question_form",
            TemplateName::Decomposition => "decomposition",
            TemplateName::Inference => "inference",
            TemplateName::DialogueFaithfulness => "dialogue_faithfulness",
            TemplateName::Anonymization => "anonymization",
            TemplateName::HypothesisEntailment => "hypothesis_entailment",
            TemplateName::Vqa => "vqa",
            TemplateName::CriticDecomposition => "critic_decomposition",
            TemplateName::CriticDialogueAcceptability => "critic_dialogue_acceptability",
            TemplateName::CriticVisualAcceptability => "critic_visual_acceptability",
        }
    }

    pub fn response_format(self) -> ResponseFormat {
        match self {
            TemplateName::Inference
            | TemplateName::DialogueFaithfulness
            | TemplateName::Anonymization
            | TemplateName::HypothesisEntailment => ResponseFormat::JsonMap,
            TemplateName::Hypothesis
            | TemplateName::Decomposition
            | TemplateName::CriticDecomposition => ResponseFormat::LabelList,
            TemplateName::QuestionForm
            | TemplateName::Vqa
            | TemplateName::CriticDialogueAcceptability
            | TemplateName::CriticVisualAcceptability => ResponseFormat::FreeText,
        }
    }

    fn default_text(self) -> &'static str {
        match self {
            TemplateName::Hypothesis => HYPOTHESIS,
            TemplateName::QuestionForm => QUESTION_FORM,
            TemplateName::Decomposition => DECOMPOSITION,
            TemplateName::Inference => INFERENCE,
            TemplateName::DialogueFaithfulness => DIALOGUE_FAITHFULNESS,
            TemplateName::Anonymization => ANONYMIZATION,
            TemplateName::HypothesisEntailment => HYPOTHESIS_ENTAILMENT,
            TemplateName::Vqa => VQA,
            TemplateName::CriticDecomposition => CRITIC_DECOMPOSITION,
            TemplateName::CriticDialogueAcceptability => CRITIC_DIALOGUE_ACCEPTABILITY,
            TemplateName::CriticVisualAcceptability => CRITIC_VISUAL_ACCEPTABILITY,
        }
    }
}

impl fmt::Display for TemplateName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TemplateName {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        TemplateName::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| format!("unknown template {s:?}"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ResponseFormat {
    FreeText,
    JsonMap,
    LabelList,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PromptTemplate {
    pub name: TemplateName,
    pub template_text: String,
    pub response_format: ResponseFormat,
}

impl PromptTemplate {
    pub fn placeholders(&self) -> BTreeSet<String> {
        placeholders(&self.template_text)
    }

    /// Substitutes every placeholder. Fails if any is left unbound.
    pub fn render(&self, bindings: &Bindings) -> Result<String, ProviderError> {
        let missing: Vec<_> = self
            .placeholders()
            .into_iter()
            .filter(|p| !bindings.contains_key(p))
            .collect();
        if !missing.is_empty() {
            return Err(ProviderError::Precondition(format!(
                "template {} has unbound placeholders: {}",
                self.name,
                missing.join(", ")
            )));
        }
        let text = &self.template_text;
        let mut out = String::with_capacity(text.len() + 256);
        let mut rest = text.as_str();
        while let Some(open) = rest.find('{') {
            out.push_str(&rest[..open]);
            let after = &rest[open + 1..];
            match placeholder_at(after) {
                Some(name) => {
                    out.push_str(&bindings[name]);
                    rest = &after[name.len() + 1..];
                }
                None => {
                    out.push('{');
                    rest = after;
                }
            }
        }
        out.push_str(rest);
        Ok(out)
    }
}

fn placeholder_at(s: &str) -> Option<&str> {
    let end = s.find('}')?;
    let name = &s[..end];
    let mut chars = name.chars();
    let first = chars.next()?;
    (first.is_ascii_lowercase() && chars.all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || c == '_'))
        .then_some(name)
}

pub fn placeholders(text: &str) -> BTreeSet<String> {
    let mut out = BTreeSet::new();
    let mut rest = text;
    while let Some(open) = rest.find('{') {
        rest = &rest[open + 1..];
        if let Some(name) = placeholder_at(rest) {
            out.insert(name.to_string());
        }
    }
    out
}

/// The full set of templates the engine dispatches.
#[derive(Debug, Clone)]
pub struct TemplateSet {
    templates: BTreeMap<TemplateName, PromptTemplate>,
}

impl Default for TemplateSet {
    fn default() -> Self {
        let templates = TemplateName::ALL
            .into_iter()
            .map(|name| {
                (
                    name,
                    PromptTemplate {
                        name,
                        template_text: name.default_text().to_string(),
                        response_format: name.response_format(),
                    },
                )
            })
            .collect();
        Self { templates }
    }
}

impl TemplateSet {
    pub fn get(&self, name: TemplateName) -> &PromptTemplate {
        &self.templates[&name]
    }

    /// Replaces template texts from a `{"name": "text"}` JSON document. An
    /// override must keep exactly the placeholders of the text it replaces.
    pub fn with_overrides(mut self, document: &str) -> Result<Self, String> {
        let overrides: BTreeMap<String, String> =
            serde_json::from_str(document).map_err(|e| format!("template overrides: {e}"))?;
        for (key, text) in overrides {
            let name: TemplateName = key.parse()?;
            let template = self.templates.get_mut(&name).expect("all names present");
            let expected = template.placeholders();
            let found = placeholders(&text);
            if expected != found {
                return Err(format!(
                    "override for {name} must use placeholders {expected:?}, found {found:?}"
                ));
            }
            template.template_text = text;
        }
        Ok(self)
    }
}

/// In-context example bound into the hypothesis template.
pub const HYPOTHESIS_ICL_QUESTIONS: &str = "Why did Sheldon leave the apartment?
(1) Sheldon was angry at Leonard.
(2) To buy groceries
(3) Penny asked him to leave
(4) He wanted to go to the comic book store
(5) Because he was late for work";

pub const HYPOTHESIS_ICL_ANSWERS: &str = "(1) Sheldon left the apartment because Sheldon was angry at Leonard.
(2) Sheldon left the apartment to buy groceries.
(3) Sheldon left the apartment because Penny asked Sheldon to leave.
(4) Sheldon left the apartment because Sheldon wanted to go to the comic book store.
(5) Sheldon left the apartment because Sheldon was late for work.";

const HYPOTHESIS: &str = r#"Convert each of the answer options for the following questions into GRAMMATICAL ANSWER SENTENCES. Make sure that they are FULL and COMPLETE sentences, not just words. They should be sentences that you can "prove" by reasoning about the situation.  Proving the sentence should amount to choosing choosing that answer option over the other one(s).

## Input
QUESTION:
{icl_questions}

## Output
{icl_answers}


## Input
QUESTION:
{questions}

## Output
"#;

const QUESTION_FORM: &str = r#"Rewrite the following statement into a "yes" or "no" question, and nothing else.

STATEMENT: "{statement}"
QUESTION: "#;

const DECOMPOSITION: &str = r#"You are a writing system that values clarity above all else. You NEVER uses pronouns like "he", "they", or "it" to ensure that readers can understand your sentences in isolation without additional context.

Your task is to break down the following statement into two, simpler sentences.

STATEMENT: "Lauren closed the door after discussing the party with Kelly."

DECOMPOSITION (USING NO PRONOUNS, INCLUDING "THEY" OR "HE" OR "SHE"):
(1) "Lauren closed the door."
(2) "Lauren discussed the party with Kelly."

STATEMENT: "Jason asked about the brown briefcase because he was concerned that it had been misplaced or stolen."

DECOMPOSITION (USING NO PRONOUNS, INCLUDING "THEY" OR "HE" OR "SHE"):
(1) "Jason asked about the brown briefcase."
(2) "Jason was concerned that the brown briefcase had been misplaced or stolen."

STATEMENT: "{statement}"

DECOMPOSITION (USING NO PRONOUNS, INCLUDING "THEY" OR "HE" OR "SHE"):"#;

const INFERENCE: &str = r#"You are a fact-checking expert that uses evidence to answer questions about a TV show.

For the following question and scene dialogue, write a set of five independent inferences entailed by some part of the scene. The inferences should resemble short, factual statements about the scene and should help to answer the question using component reasoning steps.

Write your facts in JSON format, i.e. {"1": "<answer here>", "2": "<answer here>", ...} and nothing else.

QUESTION: "{question}"

SCENE:
{dialogue}

INFERENCES (5 total):
"#;

const DIALOGUE_FAITHFULNESS: &str = r#"You are an expert social reasoning system that understands the implied meanings of complex conversations between TV show characters. Given social inferences made by other AI systems about transcripts, you score them on whether they are CORRECT or NOT SUPPORTED by the transcript.

Given the following TV show transcript, write whether each of the following statements about the TV show are CORRECT or NOT SUPPORTED. A statement is CORRECT if an average human would agree that it is most likely true based on the transcript, and is NOT SUPPORTED otherwise.

Write your facts in JSON format, i.e. {"1": <"answer here">, "2": <"answer here">, ...} and nothing else.

TRANSCRIPT:
{dialogue}

STATEMENTS:
{inferences}

OUTPUT:
"#;

const ANONYMIZATION: &str = r#"Anonymize the following questions by replacing all the characters' names replaced with "the man", "the woman", "the person", or "the people". Your output should be formatted as a serialized JSON list, i.e. {"q1": "<answer here>", "q2": "<answer here>"}, ..., and nothing else.

SENTENCES:
{questions}

QUESTIONS:
"#;

const HYPOTHESIS_ENTAILMENT: &str = r#"You are a logical reasoning system that determines whether individual facts are enough to prove a hypothesis statement.

For each of the following independent facts, answer "YES" if the fact cannot be true without the hypothesis also being true, and "NO" if the hypothesis can be false even if the fact is true. Always answer "NO" if the hypothesis is not a complete sentence (for example "is sitting.". Write your answers in JSON format, i.e. {"1": "<fact 1 answer here>", "2": "<fact 2 answer here>", ...} and nothing else.

HYPOTHESIS: {hypothesis}

FACTS:
{inferences}

OUTPUT:
"#;

const VQA: &str = r#"From this image, can you answer the question {question}? If so, answer the question, otherwise, answer "NOT ENOUGH INFO"."#;

const CRITIC_DECOMPOSITION: &str = r#"You are a reasoning system that searches for proofs of a hypothesis about a video clip by recursively decomposing it into simpler premises.

Given a hypothesis, you identify entries in a list of possible two-premise decompositions of the hypothesis that are “well-formed”: Proving the premises of a well-formed decomposition would amount to proving the hypothesis through compositional entailment.

You assess decompositions using three metrics: Premise relevancy, premise distinctness, and decomposition sufficiency. Each decomposition should receive two relevancy and distinctness scores, one for each premise, but only one single sufficiency score.

RELEVANCY: Relevancy measures whether a premise contributes information pertaining to the hypothesis. This is measured on a binary scale. Simply, if the premise mentions an entity or idea also mentioned by the hypothesis, the relevancy score is 1. Otherwise, it is 0.

DISTINCTNESS: Distinctness measures whether a premise introduces new information not already entailed by the other premise in the decomposition. This is measured on a binary scale. If the premise only introduces information already entailed by the other premise in the decomposition, the distinctness score is 0. Otherwise, it is 1. If both premises are the same, both receive a score of 0.

SUFFICIENCY: Sufficiency measures whether the two premises cover all the information introduced by the hypothesis. This is also measured on a binary scale. If, when considering both premises, the hypothesis introduces new information not covered by the decompositional premises, the sufficiency score is 0. If the hypothesis does not introduce new information, the sufficiency score is 1.

For the following decompositions, score each decomposition’s relevancy and sufficiency. Decompositions will be presented in the form “(<decomposition number>) H: <hypothesis> & P1: <decomp premise 1> & P2: <decomp premise 2>”. Your answer should be a list of entries taking the form “(<decomposition number>) RELEVANCY: (<premise 1 score>, <premise 2 score>), DISTINCTNESS: ((<premise 1 score>, <premise 2 score>), SUFFICIENCY: (<overall score>)”.

DECOMPOSITIONS:
{decompositions}

JUDGEMENTS (one line per decomposition):
"#;

const CRITIC_DIALOGUE_ACCEPTABILITY: &str = r#"Based on the dialogue from the TV show, how likely is it that the statements below are true? Score the likelihood of each statement on a 1-5 scale, where 1 indicates the dialogue contradicts the statement, 2 indicates the statement is unlikely to be true given the dialogue, 3 indicates the statement is ambiguous given the dialogue, 4 indicates the statement is likely to be true given the dialogue, and 5 indicates that the statement must be true given the dialogue. Write your numerical scores in the same order as the listed statements, separated by commas, and nothing else.

Dialogue:
{dialogue}

Statements:
{statements}"#;

const CRITIC_VISUAL_ACCEPTABILITY: &str = r#"Based on the screenshot from the TV show, how likely is it that the statement below is true? Score the likelihood on a 1-5 scale, where 1 indicates the screenshot contradicts the statement, 2 indicates the statement is unlikely to be true given the screenshot, 3 indicates the statement is ambiguous given the screenshot, 4 indicates the statement is likely to be true given the screenshot, and 5 indicates that the statement must be true given the screenshot. Write your numerical score and nothing else.

Statement: {statement}"#;
