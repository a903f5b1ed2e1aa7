mod support;

use std::collections::BTreeSet;
use std::sync::Arc;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use proofloom::dataset::FrameRef;
use proofloom::eval::{self, Judge, NodeJudgment};
use proofloom::evidence_text::localize;
use proofloom::evidence_visual::{sufficient, FrameVote};
use proofloom::providers::mock::MockBackend;
use proofloom::providers::{ModelClient, Session, VqaAnswer, VqaVerdict};
use proofloom::search::{prove, SearchConfig};
use proofloom::tree::{self, Hypothesis, NodePath, QaPair, Side};

use support::{cascade_world, independent_score, oracle_window, random_case, survivors, TEXTS};

fn votes(yes: usize, total: usize) -> Vec<FrameVote> {
    (0..total)
        .map(|i| FrameVote {
            frame: FrameRef {
                frame_id: format!("f{i}"),
                timestamp_s: i as f64,
                path: "f.jpg".into(),
            },
            verdict: VqaVerdict {
                answer: if i < yes { VqaAnswer::Yes } else { VqaAnswer::No },
                confidence: 1.0,
            },
        })
        .collect()
}

#[test]
fn visual_sufficiency_is_a_strict_tenth_for_every_count() {
    assert!(!sufficient(&votes(3, 30), 0.10));
    assert!(sufficient(&votes(4, 30), 0.10));
    for total in 0..=100 {
        for yes in 0..=total {
            // yes / total > 1/10 in exact integer arithmetic.
            let expected = total > 0 && 10 * yes > total;
            assert_eq!(sufficient(&votes(yes, total), 0.10), expected, "{yes}/{total}");
        }
    }
}

#[test]
fn localization_matches_an_exhaustive_scan() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for id in 0..100 {
        let case = random_case(&mut rng, id);
        let client = ModelClient::new(Arc::new(MockBackend::new(case.world.clone())));
        for threshold in [0.0, 0.5] {
            let session = Session::new(&client, None);
            let loc = localize(&session, &case.episode, &case.root, threshold).unwrap();
            assert_eq!(
                loc.window.map(|w| w.start_index),
                oracle_window(&case.world, &case.episode.transcript, &case.root, threshold),
                "case {id} threshold {threshold}"
            );
        }
    }
}

#[test]
fn fuzzed_proofs_keep_structural_invariants() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for id in 0..1000 {
        let case = random_case(&mut rng, id);
        let client = ModelClient::new(Arc::new(MockBackend::new(case.world.clone())));
        let cfg = SearchConfig {
            modality: case.modality,
            ..SearchConfig::default()
        };
        let h = Hypothesis::root(
            case.root.clone(),
            QaPair {
                question: "What happens?".into(),
                answer: case.root.clone(),
            },
        );
        let t = prove(&client, &case.episode, h, &cfg).unwrap().tree;
        tree::validate(&t, 2).unwrap_or_else(|e| panic!("case {id}: {e}"));
        tree::validate_references(&t, &case.episode).unwrap_or_else(|e| panic!("case {id}: {e}"));
        assert!((1..=7).contains(&t.node_count()), "case {id}");
        assert_eq!(tree::deserialize(&tree::serialize(&t)).unwrap(), t, "case {id}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn cascade_survivors_shrink_monotonically(
        bits in proptest::collection::vec(any::<bool>(), 24),
        all in proptest::sample::subsequence(TEXTS.to_vec(), 0..=8),
        keep in proptest::collection::vec(any::<bool>(), 8),
        theta in -1.5f64..1.5,
    ) {
        let (w, window) = cascade_world(&bits);
        let (cands, full) = survivors(&w, &window, &all, theta);
        let stage = |k: usize| -> BTreeSet<String> {
            cands.iter().filter(|c| c.survived(k, theta)).map(|c| c.text.clone()).collect()
        };
        let input: BTreeSet<String> = all.iter().map(|s| s.to_string()).collect();
        prop_assert!(stage(1).is_subset(&input));
        prop_assert!(stage(2).is_subset(&stage(1)));
        prop_assert!(stage(3).is_subset(&stage(2)));
        prop_assert_eq!(&stage(3), &full);

        // A subset of the candidates keeps exactly the survivors it contains.
        let sub: Vec<&str> = all.iter().zip(&keep).filter(|(_, k)| **k).map(|(t, _)| *t).collect();
        let (_, sub_survivors) = survivors(&w, &window, &sub, theta);
        let sub_set: BTreeSet<String> = sub.iter().map(|s| s.to_string()).collect();
        prop_assert_eq!(sub_survivors, full.intersection(&sub_set).cloned().collect::<BTreeSet<_>>());

        // Raising the NLI threshold never adds a survivor.
        let (_, stricter) = survivors(&w, &window, &all, theta + 0.75);
        prop_assert!(stricter.is_subset(&full));
    }
}

fn judgments() -> impl Strategy<Value = Vec<NodeJudgment>> {
    let node = (
        any::<bool>(),
        any::<bool>(),
        1u8..=5,
        [0u8..=1, 0u8..=1],
        [0u8..=1, 0u8..=1],
        0u8..=1,
        0usize..4,
    )
        .prop_map(|(branch, malformed, acc, rel, dis, suf, seed)| {
            let mut path = NodePath::root();
            for i in 0..seed {
                path = path.push(if i % 2 == 0 { Side::L } else { Side::R });
            }
            NodeJudgment {
                node_path: path,
                malformed: malformed && !branch,
                acceptability: (!branch).then_some(acc),
                relevance: branch.then_some(rel),
                distinct: branch.then_some(dis),
                sufficiency: branch.then_some(suf),
            }
        });
    proptest::collection::vec(node, 1..8)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn score_matches_independent_formula(js in judgments()) {
        let got = eval::score(&js, Judge::LlmCritic).unwrap().composite;
        prop_assert!((got - independent_score(&js)).abs() < 1e-9);
    }

    #[test]
    fn composition_is_monotone(
        q in [0.0f64..=1.0, 0.0f64..=1.0, 0.0f64..=1.0, 0.0f64..=1.0],
        which in 0usize..4,
        bump in 0.0f64..=1.0,
    ) {
        let mut hi = q;
        hi[which] = (hi[which] + bump).min(1.0);
        let s = |v: [f64; 4]| eval::composition(Some(v[0]), Some(v[1]), Some(v[2]), Some(v[3])).unwrap();
        prop_assert!(s(hi) >= s(q) - 1e-12);
    }
}

#[test]
fn scoring_unit_points_and_normalization() {
    let node = |acc, bin| NodeJudgment {
        node_path: NodePath::root(),
        malformed: false,
        acceptability: Some(acc),
        relevance: Some([bin, bin]),
        distinct: Some([bin, bin]),
        sufficiency: Some(bin),
    };
    assert_eq!(eval::score(&[node(5, 1)], Judge::LlmCritic).unwrap().composite, 1.0);
    assert_eq!(eval::score(&[node(1, 0)], Judge::LlmCritic).unwrap().composite, 0.0);
    assert_eq!([1, 3, 5].map(eval::normalize_acceptability), [0.0, 0.5, 1.0]);
}
