use std::sync::Arc;

use proofloom::dataset::{Episode, FrameRef, TranscriptLine};
use proofloom::eval::{self, export_annotations, import_annotations, judge_tree, read_tasks, AnnotationAnswer, Judge, TaskKind};
use proofloom::providers::mock::{MockBackend, OracleWorld};
use proofloom::providers::{ModelClient, Session};
use proofloom::tree::{EntailmentTree, EvidenceItem, Hypothesis, NodePath, Origin, QaPair, Side};

const PARENT: &str = "Ava holds the cup and Ben opens the door.";
const LEFT: &str = "Ava holds the cup.";
const RIGHT: &str = "Ben opens the door.";

fn episode() -> Episode {
    Episode {
        clip_id: "c".into(),
        transcript: vec![TranscriptLine {
            index: 0,
            speaker: Some("ANA".into()),
            text: "Here is your cup.".into(),
            start_s: 0.0,
            end_s: 1.0,
        }],
        frames: vec![FrameRef {
            frame_id: "f0".into(),
            timestamp_s: 0.5,
            path: "f0.jpg".into(),
        }],
        qa_items: vec![],
    }
}

fn world() -> OracleWorld {
    let mut w = OracleWorld::default();
    w.decompositions.insert(PARENT.into(), (LEFT.into(), RIGHT.into()));
    w.dialogue_facts
        .insert("ANA: Here is your cup.".into(), [LEFT.to_string()].into());
    w.frame_facts.insert("f0".into(), ["Ben shuts the door.".to_string()].into());
    w.contradicts.insert(("Ben shuts the door.".into(), RIGHT.into()));
    w
}

fn tree(left: &str, right: &str) -> EntailmentTree {
    let dialogue = EvidenceItem::DialogueInference {
        inference_text: LEFT.into(),
        source_lines: vec![0],
        score: 1.0,
    };
    let frame = EvidenceItem::VideoFrame {
        frame_id: "f0".into(),
        timestamp_s: 0.5,
        score: 1.0,
    };
    EntailmentTree::branch(
        Hypothesis::root(
            PARENT,
            QaPair {
                question: "What happens?".into(),
                answer: "x".into(),
            },
        ),
        0,
        EntailmentTree::leaf(Hypothesis::child(left, Origin::DecompositionLeft), 1, vec![dialogue]),
        EntailmentTree::leaf(Hypothesis::child(right, Origin::DecompositionRight), 1, vec![frame]),
    )
}

#[test]
fn critic_judgments_follow_the_rubric() {
    let client = ModelClient::new(Arc::new(MockBackend::new(world())));
    let session = Session::new(&client, None);
    let tj = judge_tree(&session, &tree(LEFT, RIGHT), &episode()).unwrap();
    assert!(tj.missing.is_empty());
    let at = |p: NodePath| tj.judgments.iter().find(|j| j.node_path == p).unwrap();
    let root = at(NodePath::root());
    assert_eq!((root.relevance, root.distinct, root.sufficiency), (Some([1, 1]), Some([1, 1]), Some(1)));
    assert_eq!(at(NodePath::root().push(Side::L)).acceptability, Some(5));
    // The frame contradicts the right leaf.
    assert_eq!(at(NodePath::root().push(Side::R)).acceptability, Some(1));
    assert_eq!(session.counts().get("generate:critic_decomposition"), 1);

    let same = judge_tree(&session, &tree(LEFT, LEFT), &episode()).unwrap();
    let root = same.judgments.iter().find(|j| j.node_path == NodePath::root()).unwrap();
    assert_eq!(root.distinct, Some([0, 0]));

    let s = eval::score(&tj.judgments, Judge::LlmCritic).unwrap();
    assert_eq!((s.a, s.r, s.d, s.s), (Some(0.5), Some(1.0), Some(1.0), Some(1.0)));
}

#[test]
fn export_import_round_trip_on_disk() {
    let dir = tempfile::tempdir().unwrap();
    let t = tree(LEFT, RIGHT);
    let ep = episode();
    let counts = export_annotations(&[("q0_1".to_string(), &t, &ep)], dir.path()).unwrap();
    assert_eq!(counts[&TaskKind::LeafAcceptability], 2);
    assert_eq!(counts[&TaskKind::PairRelevance], 2);
    assert_eq!(counts[&TaskKind::TripletDistinctSufficient], 1);
    let tasks = read_tasks(dir.path()).unwrap();
    assert_eq!(tasks.len(), 5);

    let answers: Vec<AnnotationAnswer> = tasks
        .iter()
        .map(|task| AnnotationAnswer {
            task_id: task.task_id.clone(),
            score: match task.task_kind {
                TaskKind::LeafAcceptability => Some(5),
                TaskKind::PairRelevance => Some(1),
                TaskKind::TripletDistinctSufficient => None,
            },
            distinct: (task.task_kind == TaskKind::TripletDistinctSufficient).then_some([1, 1]),
            sufficiency: (task.task_kind == TaskKind::TripletDistinctSufficient).then_some(1),
            malformed: false,
        })
        .collect();
    let imported = import_annotations(&tasks, &answers).unwrap();
    let tj = &imported["q0_1"];
    assert_eq!(tj.judgments.len(), 3);
    assert!(tj.missing.is_empty());
    assert_eq!(eval::score(&tj.judgments, Judge::HumanImport).unwrap().composite, 1.0);
}
