//! Entailment-tree data model.
//!
//! A tree node pairs a [`Hypothesis`] with its [`Evidence`]: cited evidence
//! items (a leaf), two sub-trees whose hypotheses jointly entail it (a
//! branch), or nothing at all (a null leaf, i.e. unproven).
//!
//! Trees are plain immutable values once built. The canonical document form
//! is a single JSON object with sorted keys so serialization is byte-stable.

use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};
use thiserror::Error;

use crate::dataset::Episode;

/// Depth limit used by the search unless configured otherwise. Root sits at
/// depth 0, so trees span at most three levels.
pub const DEFAULT_MAX_DEPTH: usize = 2;

/// Where a hypothesis came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Origin {
    Root,
    DecompositionLeft,
    DecompositionRight,
}

/// The question-answer pair a root hypothesis was derived from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QaPair {
    pub question: String,
    pub answer: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hypothesis {
    pub text: String,
    /// Yes/no question form of the same content, used to condition
    /// inference generation and visual QA.
    pub interrogative: Option<String>,
    pub origin: Origin,
    /// Present exactly on root hypotheses.
    pub qa: Option<QaPair>,
}

impl Hypothesis {
    pub fn root(text: impl Into<String>, qa: QaPair) -> Self {
        Self {
            text: text.into(),
            interrogative: None,
            origin: Origin::Root,
            qa: Some(qa),
        }
    }

    pub fn child(text: impl Into<String>, origin: Origin) -> Self {
        Self {
            text: text.into(),
            interrogative: None,
            origin,
            qa: None,
        }
    }

    pub fn with_interrogative(mut self, question: impl Into<String>) -> Self {
        self.interrogative = Some(question.into());
        self
    }

    /// Checks the text and provenance invariants.
    pub fn check(&self) -> Result<(), String> {
        if !is_sentence(&self.text) {
            return Err(format!(
                "hypothesis {:?} is not a punctuated sentence",
                self.text
            ));
        }
        match (self.origin, &self.qa) {
            (Origin::Root, None) => Err("root hypothesis carries no QA pair".into()),
            (Origin::Root, Some(_)) | (_, None) => Ok(()),
            (_, Some(_)) => Err("only root hypotheses carry a QA pair".into()),
        }
    }
}

/// Non-empty and ending in sentence-final punctuation, allowing a trailing
/// closing quote or bracket.
pub fn is_sentence(text: &str) -> bool {
    let trimmed = text
        .trim()
        .trim_end_matches(['"', '\'', ')', '”', '’']);
    matches!(trimmed.chars().last(), Some('.' | '!' | '?'))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EvidenceKind {
    DialogueInference,
    VideoFrame,
}

/// One atomic, citable unit of evidence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum EvidenceItem {
    DialogueInference {
        inference_text: String,
        source_lines: Vec<usize>,
        score: f64,
    },
    VideoFrame {
        frame_id: String,
        timestamp_s: f64,
        score: f64,
    },
}

impl EvidenceItem {
    pub fn kind(&self) -> EvidenceKind {
        match self {
            EvidenceItem::DialogueInference { .. } => EvidenceKind::DialogueInference,
            EvidenceItem::VideoFrame { .. } => EvidenceKind::VideoFrame,
        }
    }

    /// Filter confidence that selected this item.
    pub fn score(&self) -> f64 {
        match self {
            EvidenceItem::DialogueInference { score, .. } | EvidenceItem::VideoFrame { score, .. } => {
                *score
            }
        }
    }

    /// Equality that ignores the score, which is metadata.
    pub fn same_citation(&self, other: &Self) -> bool {
        match (self, other) {
            (
                EvidenceItem::DialogueInference {
                    inference_text: a,
                    source_lines: la,
                    ..
                },
                EvidenceItem::DialogueInference {
                    inference_text: b,
                    source_lines: lb,
                    ..
                },
            ) => a == b && la == lb,
            (
                EvidenceItem::VideoFrame {
                    frame_id: a,
                    timestamp_s: ta,
                    ..
                },
                EvidenceItem::VideoFrame {
                    frame_id: b,
                    timestamp_s: tb,
                    ..
                },
            ) => a == b && ta == tb,
            _ => false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Evidence {
    /// Non-empty list of cited items.
    Leaf(Vec<EvidenceItem>),
    Branch(Box<EntailmentTree>, Box<EntailmentTree>),
    /// Unproven: the empty evidence set.
    NullLeaf,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EntailmentTree {
    pub hypothesis: Hypothesis,
    pub evidence: Evidence,
    pub depth: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Side {
    L,
    R,
}

/// Position of a node: the sequence of branch sides taken from the root.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodePath(pub Vec<Side>);

impl NodePath {
    pub fn root() -> Self {
        Self(Vec::new())
    }

    pub fn push(&self, side: Side) -> Self {
        let mut sides = self.0.clone();
        sides.push(side);
        Self(sides)
    }

    pub fn depth(&self) -> usize {
        self.0.len()
    }
}

impl fmt::Display for NodePath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("root")?;
        for side in &self.0 {
            f.write_str(match side {
                Side::L => ".L",
                Side::R => ".R",
            })?;
        }
        Ok(())
    }
}

impl std::str::FromStr for NodePath {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let rest = s
            .strip_prefix("root")
            .ok_or_else(|| format!("node path {s:?} must start with 'root'"))?;
        let mut sides = Vec::new();
        for part in rest.split('.').skip(1) {
            sides.push(match part {
                "L" => Side::L,
                "R" => Side::R,
                _ => return Err(format!("bad node path segment {part:?} in {s:?}")),
            });
        }
        if !rest.is_empty() && !rest.starts_with('.') {
            return Err(format!("bad node path {s:?}"));
        }
        Ok(Self(sides))
    }
}

impl Serialize for NodePath {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for NodePath {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Counts gathered from one traversal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TreeStats {
    pub node_count: usize,
    pub leaf_count: usize,
    pub null_leaf_count: usize,
    /// Proven leaves over all leaves.
    pub completeness: f64,
    /// Mean item score over non-null leaves, 0 if there are none.
    pub mean_leaf_score: f64,
}

impl EntailmentTree {
    pub fn leaf(hypothesis: Hypothesis, depth: usize, items: Vec<EvidenceItem>) -> Self {
        debug_assert!(!items.is_empty(), "leaf evidence must be non-empty");
        Self {
            hypothesis,
            evidence: Evidence::Leaf(items),
            depth,
        }
    }

    pub fn null(hypothesis: Hypothesis, depth: usize) -> Self {
        Self {
            hypothesis,
            evidence: Evidence::NullLeaf,
            depth,
        }
    }

    pub fn branch(hypothesis: Hypothesis, depth: usize, left: Self, right: Self) -> Self {
        Self {
            hypothesis,
            evidence: Evidence::Branch(Box::new(left), Box::new(right)),
            depth,
        }
    }

    /// Pre-order walk with node paths.
    pub fn walk(&self) -> Vec<(NodePath, &EntailmentTree)> {
        let mut out = Vec::new();
        let mut stack = vec![(NodePath::root(), self)];
        while let Some((path, node)) = stack.pop() {
            if let Evidence::Branch(left, right) = &node.evidence {
                stack.push((path.push(Side::R), right));
                stack.push((path.push(Side::L), left));
            }
            out.push((path, node));
        }
        out
    }

    pub fn node_count(&self) -> usize {
        match &self.evidence {
            Evidence::Branch(l, r) => 1 + l.node_count() + r.node_count(),
            _ => 1,
        }
    }

    pub fn is_leaf(&self) -> bool {
        !matches!(self.evidence, Evidence::Branch(..))
    }

    /// Every evidence item cited anywhere in the tree.
    pub fn items(&self) -> Vec<&EvidenceItem> {
        self.walk()
            .into_iter()
            .filter_map(|(_, node)| match &node.evidence {
                Evidence::Leaf(items) => Some(items.iter()),
                _ => None,
            })
            .flatten()
            .collect()
    }
}

/// True iff no null leaf is reachable.
pub fn is_complete(tree: &EntailmentTree) -> bool {
    match &tree.evidence {
        Evidence::Leaf(_) => true,
        Evidence::NullLeaf => false,
        Evidence::Branch(l, r) => is_complete(l) && is_complete(r),
    }
}

pub fn stats(tree: &EntailmentTree) -> TreeStats {
    let mut node_count = 0;
    let mut leaf_count = 0;
    let mut null_leaf_count = 0;
    let mut score_sum = 0.0;
    let mut scored = 0usize;
    for (_, node) in tree.walk() {
        node_count += 1;
        match &node.evidence {
            Evidence::Branch(..) => {}
            Evidence::NullLeaf => {
                leaf_count += 1;
                null_leaf_count += 1;
            }
            Evidence::Leaf(items) => {
                leaf_count += 1;
                score_sum += items.iter().map(EvidenceItem::score).sum::<f64>() / items.len() as f64;
                scored += 1;
            }
        }
    }
    TreeStats {
        node_count,
        leaf_count,
        null_leaf_count,
        completeness: (leaf_count - null_leaf_count) as f64 / leaf_count as f64,
        mean_leaf_score: if scored == 0 {
            0.0
        } else {
            score_sum / scored as f64
        },
    }
}

/// Which kinds of evidence a tree cites.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EvidenceMix {
    Dialogue,
    Frame,
    Mixed,
    None,
}

impl EvidenceMix {
    pub fn as_str(self) -> &'static str {
        match self {
            EvidenceMix::Dialogue => "dialogue",
            EvidenceMix::Frame => "frame",
            EvidenceMix::Mixed => "mixed",
            EvidenceMix::None => "none",
        }
    }
}

pub fn evidence_mix(tree: &EntailmentTree) -> EvidenceMix {
    let items = tree.items();
    let dialogue = items.iter().any(|i| i.kind() == EvidenceKind::DialogueInference);
    let frame = items.iter().any(|i| i.kind() == EvidenceKind::VideoFrame);
    match (dialogue, frame) {
        (true, true) => EvidenceMix::Mixed,
        (true, false) => EvidenceMix::Dialogue,
        (false, true) => EvidenceMix::Frame,
        (false, false) => EvidenceMix::None,
    }
}

/// Largest node count a tree of the given depth limit can hold.
pub fn max_nodes(max_depth: usize) -> usize {
    (1usize << (max_depth + 1)) - 1
}

/// Equality on structure and citations; item scores are ignored.
pub fn structurally_eq(a: &EntailmentTree, b: &EntailmentTree) -> bool {
    if a.depth != b.depth || a.hypothesis != b.hypothesis {
        return false;
    }
    match (&a.evidence, &b.evidence) {
        (Evidence::NullLeaf, Evidence::NullLeaf) => true,
        (Evidence::Leaf(x), Evidence::Leaf(y)) => {
            x.len() == y.len() && x.iter().zip(y).all(|(p, q)| p.same_citation(q))
        }
        (Evidence::Branch(al, ar), Evidence::Branch(bl, br)) => {
            structurally_eq(al, bl) && structurally_eq(ar, br)
        }
        _ => false,
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum TreeError {
    #[error("malformed tree document at line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("schema violation at {path}: {message}")]
    Schema { path: String, message: String },
    #[error("invalid tree at {path}: {message}")]
    Invalid { path: NodePath, message: String },
    #[error("unresolved reference at {path}: {message}")]
    Reference { path: NodePath, message: String },
}

/// Structural well-formedness: branch children carry distinct hypotheses,
/// stored depths match positions and stay within `max_depth`, leaves are
/// non-empty and cite at least one line or a frame.
pub fn validate(tree: &EntailmentTree, max_depth: usize) -> Result<(), TreeError> {
    if tree.depth != 0 {
        return Err(TreeError::Invalid {
            path: NodePath::root(),
            message: format!("root depth is {}, expected 0", tree.depth),
        });
    }
    for (path, node) in tree.walk() {
        let invalid = |message: String| TreeError::Invalid {
            path: path.clone(),
            message,
        };
        if node.depth != path.depth() {
            return Err(invalid(format!(
                "stored depth {} does not match position {}",
                node.depth,
                path.depth()
            )));
        }
        if node.depth > max_depth {
            return Err(invalid(format!(
                "depth {} exceeds the limit {max_depth}",
                node.depth
            )));
        }
        if path.depth() == 0 && node.hypothesis.origin != Origin::Root {
            return Err(invalid("root hypothesis must have root origin".into()));
        }
        node.hypothesis.check().map_err(invalid)?;
        match &node.evidence {
            Evidence::Leaf(items) => {
                if items.is_empty() {
                    return Err(invalid("leaf cites no evidence; use a null leaf".into()));
                }
                for item in items {
                    if let EvidenceItem::DialogueInference { source_lines, .. } = item {
                        if source_lines.is_empty() {
                            return Err(invalid("dialogue evidence cites no lines".into()));
                        }
                    }
                }
            }
            Evidence::Branch(l, r) => {
                if l.hypothesis.text == r.hypothesis.text {
                    return Err(invalid("branch children share a hypothesis".into()));
                }
                if l.hypothesis.origin != Origin::DecompositionLeft
                    || r.hypothesis.origin != Origin::DecompositionRight
                {
                    return Err(invalid("branch children have the wrong origins".into()));
                }
            }
            Evidence::NullLeaf => {}
        }
    }
    let count = tree.node_count();
    if count > max_nodes(max_depth) {
        return Err(TreeError::Invalid {
            path: NodePath::root(),
            message: format!("{count} nodes exceeds {}", max_nodes(max_depth)),
        });
    }
    Ok(())
}

/// Checks that every cited frame and line exists in `episode`.
pub fn validate_references(tree: &EntailmentTree, episode: &Episode) -> Result<(), TreeError> {
    for (path, node) in tree.walk() {
        let Evidence::Leaf(items) = &node.evidence else {
            continue;
        };
        for item in items {
            match item {
                EvidenceItem::DialogueInference { source_lines, .. } => {
                    if let Some(bad) = source_lines
                        .iter()
                        .find(|&&i| i >= episode.transcript.len())
                    {
                        return Err(TreeError::Reference {
                            path,
                            message: format!(
                                "line {bad} is outside the {}-line transcript of {}",
                                episode.transcript.len(),
                                episode.clip_id
                            ),
                        });
                    }
                }
                EvidenceItem::VideoFrame { frame_id, .. } => {
                    if episode.frame(frame_id).is_none() {
                        return Err(TreeError::Reference {
                            path,
                            message: format!(
                                "frame {frame_id:?} is not in the manifest of {}",
                                episode.clip_id
                            ),
                        });
                    }
                }
            }
        }
    }
    Ok(())
}

// Canonical document form.

pub fn to_value(tree: &EntailmentTree) -> Value {
    let evidence = match &tree.evidence {
        Evidence::Leaf(items) => json!({
            "kind": "leaf",
            "items": items,
        }),
        Evidence::Branch(l, r) => json!({
            "kind": "branch",
            "children": [to_value(l), to_value(r)],
        }),
        Evidence::NullLeaf => json!({ "kind": "null" }),
    };
    json!({
        "hypothesis": tree.hypothesis,
        "evidence": evidence,
        "depth": tree.depth,
    })
}

/// Canonical, byte-stable document (sorted keys, pretty-printed).
pub fn serialize(tree: &EntailmentTree) -> String {
    // serde_json's map is ordered by key, which canonicalizes field order.
    let mut out = serde_json::to_string_pretty(&to_value(tree)).expect("tree values serialize");
    out.push('\n');
    out
}

pub fn deserialize(document: &str) -> Result<EntailmentTree, TreeError> {
    let value: Value = serde_json::from_str(document).map_err(|e| TreeError::Syntax {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    from_value(&value, "$")
}

pub fn from_value(value: &Value, path: &str) -> Result<EntailmentTree, TreeError> {
    let schema = |path: &str, message: &str| TreeError::Schema {
        path: path.to_string(),
        message: message.to_string(),
    };
    let obj = value
        .as_object()
        .ok_or_else(|| schema(path, "expected a tree object"))?;
    only_keys(obj, &["hypothesis", "evidence", "depth"], path)?;
    let hyp_path = format!("{path}.hypothesis");
    let hypothesis: Hypothesis = serde_json::from_value(
        obj.get("hypothesis")
            .cloned()
            .ok_or_else(|| schema(path, "missing \"hypothesis\""))?,
    )
    .map_err(|e| schema(&hyp_path, &e.to_string()))?;
    let depth = obj
        .get("depth")
        .and_then(Value::as_u64)
        .ok_or_else(|| schema(&format!("{path}.depth"), "expected a non-negative integer"))?
        as usize;
    let ev_path = format!("{path}.evidence");
    let ev = obj
        .get("evidence")
        .and_then(Value::as_object)
        .ok_or_else(|| schema(&ev_path, "expected an evidence object"))?;
    let kind = ev
        .get("kind")
        .and_then(Value::as_str)
        .ok_or_else(|| schema(&format!("{ev_path}.kind"), "expected a string"))?;
    let evidence = match kind {
        "leaf" => {
            only_keys(ev, &["kind", "items"], &ev_path)?;
            let items_path = format!("{ev_path}.items");
            let items: Vec<EvidenceItem> = serde_json::from_value(
                ev.get("items")
                    .cloned()
                    .ok_or_else(|| schema(&ev_path, "missing \"items\""))?,
            )
            .map_err(|e| schema(&items_path, &e.to_string()))?;
            if items.is_empty() {
                return Err(schema(&items_path, "leaf must cite at least one item"));
            }
            Evidence::Leaf(items)
        }
        "branch" => {
            only_keys(ev, &["kind", "children"], &ev_path)?;
            let children_path = format!("{ev_path}.children");
            let children = ev
                .get("children")
                .and_then(Value::as_array)
                .ok_or_else(|| schema(&children_path, "expected an array"))?;
            if children.len() != 2 {
                return Err(schema(
                    &children_path,
                    &format!("branch must have exactly 2 children, found {}", children.len()),
                ));
            }
            let left = from_value(&children[0], &format!("{children_path}[0]"))?;
            let right = from_value(&children[1], &format!("{children_path}[1]"))?;
            Evidence::Branch(Box::new(left), Box::new(right))
        }
        "null" => {
            only_keys(ev, &["kind"], &ev_path)?;
            Evidence::NullLeaf
        }
        other => {
            return Err(schema(
                &format!("{ev_path}.kind"),
                &format!("unknown evidence kind {other:?}"),
            ))
        }
    };
    Ok(EntailmentTree {
        hypothesis,
        evidence,
        depth,
    })
}

fn only_keys(obj: &Map<String, Value>, allowed: &[&str], path: &str) -> Result<(), TreeError> {
    match obj.keys().find(|k| !allowed.contains(&k.as_str())) {
        Some(k) => Err(TreeError::Schema {
            path: path.to_string(),
            message: format!("unexpected field {k:?}"),
        }),
        None => Ok(()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn qa() -> QaPair {
        QaPair {
            question: "Why are they late?".into(),
            answer: "Traffic was bad".into(),
        }
    }

    fn line_item(text: &str, score: f64) -> EvidenceItem {
        EvidenceItem::DialogueInference {
            inference_text: text.into(),
            source_lines: vec![0, 1],
            score,
        }
    }

    fn proven(text: &str, origin: Origin, depth: usize) -> EntailmentTree {
        EntailmentTree::leaf(
            Hypothesis::child(text, origin),
            depth,
            vec![line_item(text, 0.5)],
        )
    }

    fn full_tree() -> EntailmentTree {
        let mid = |tag: &str, origin| {
            EntailmentTree::branch(
                Hypothesis::child(format!("{tag} holds."), origin),
                1,
                proven(&format!("{tag} left holds."), Origin::DecompositionLeft, 2),
                proven(&format!("{tag} right holds."), Origin::DecompositionRight, 2),
            )
        };
        EntailmentTree::branch(
            Hypothesis::root("Everything holds.", qa()),
            0,
            mid("A", Origin::DecompositionLeft),
            mid("B", Origin::DecompositionRight),
        )
    }

    #[test]
    fn completeness_of_simple_shapes() {
        let leaf = EntailmentTree::leaf(
            Hypothesis::root("They are late.", qa()),
            0,
            vec![line_item("x.", 1.0)],
        );
        assert!(is_complete(&leaf));
        assert!(!is_complete(&EntailmentTree::null(
            Hypothesis::root("They are late.", qa()),
            0
        )));
        let half = EntailmentTree::branch(
            Hypothesis::root("They are late.", qa()),
            0,
            proven("Left holds.", Origin::DecompositionLeft, 1),
            EntailmentTree::null(Hypothesis::child("Right holds.", Origin::DecompositionRight), 1),
        );
        assert!(!is_complete(&half));
        let s = stats(&half);
        assert_eq!((s.node_count, s.leaf_count, s.null_leaf_count), (3, 2, 1));
        assert_eq!(s.completeness, 0.5);
        assert_eq!(s.mean_leaf_score, 0.5);
    }

    #[test]
    fn stats_of_full_and_null_trees() {
        let s = stats(&full_tree());
        assert_eq!(s.node_count, 7);
        assert_eq!(s.leaf_count, 4);
        assert_eq!(s.completeness, 1.0);
        assert_eq!(max_nodes(DEFAULT_MAX_DEPTH), 7);

        let s = stats(&EntailmentTree::null(Hypothesis::root("No.", qa()), 0));
        assert_eq!(s.node_count, 1);
        assert_eq!(s.completeness, 0.0);
        assert_eq!(s.mean_leaf_score, 0.0);
    }

    #[test]
    fn validate_accepts_full_tree_and_rejects_deep_one() {
        let tree = full_tree();
        validate(&tree, 2).unwrap();
        assert!(matches!(validate(&tree, 1), Err(TreeError::Invalid { .. })));
    }

    #[test]
    fn validate_rejects_twin_children() {
        let tree = EntailmentTree::branch(
            Hypothesis::root("They are late.", qa()),
            0,
            proven("Same.", Origin::DecompositionLeft, 1),
            proven("Same.", Origin::DecompositionRight, 1),
        );
        let err = validate(&tree, 2).unwrap_err();
        assert!(err.to_string().contains("share a hypothesis"), "{err}");
    }

    #[test]
    fn round_trip_is_byte_stable() {
        let tree = full_tree();
        let doc = serialize(&tree);
        let back = deserialize(&doc).unwrap();
        assert!(structurally_eq(&tree, &back));
        assert_eq!(serialize(&back), doc);
        // keys come out sorted
        let depth_at = doc.find("\"depth\"").unwrap();
        let evidence_at = doc.find("\"evidence\"").unwrap();
        assert!(depth_at < evidence_at);
    }

    #[test]
    fn three_child_branch_is_a_schema_error() {
        let mut value = to_value(&full_tree());
        let child = value["evidence"]["children"][0].clone();
        value["evidence"]["children"]
            .as_array_mut()
            .unwrap()
            .push(child);
        let err = deserialize(&value.to_string()).unwrap_err();
        match err {
            TreeError::Schema { path, message } => {
                assert_eq!(path, "$.evidence.children");
                assert!(message.contains("exactly 2"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn syntax_errors_carry_positions() {
        let err = deserialize("{\n  \"depth\": 0,\n  oops\n}").unwrap_err();
        assert!(matches!(err, TreeError::Syntax { line: 3, .. }), "{err:?}");
    }

    #[test]
    fn scores_do_not_affect_structural_equality() {
        let a = proven("A holds.", Origin::DecompositionLeft, 1);
        let mut b = a.clone();
        if let Evidence::Leaf(items) = &mut b.evidence {
            items[0] = line_item("A holds.", 0.99);
        }
        assert!(structurally_eq(&a, &b));
        assert_ne!(a, b);
    }

    #[test]
    fn node_paths_round_trip_through_strings() {
        let path = NodePath::root().push(Side::L).push(Side::R);
        assert_eq!(path.to_string(), "root.L.R");
        assert_eq!("root.L.R".parse::<NodePath>().unwrap(), path);
        assert_eq!("root".parse::<NodePath>().unwrap(), NodePath::root());
        assert!("rootL".parse::<NodePath>().is_err());
        assert!("leaf.L".parse::<NodePath>().is_err());
    }

    #[test]
    fn sentence_check() {
        assert!(is_sentence("Lauren closed the door."));
        assert!(is_sentence("He said \"stop.\""));
        assert!(!is_sentence("is sitting"));
        assert!(!is_sentence("   "));
    }
}
