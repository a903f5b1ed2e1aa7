//! Generated oracle suites: episodes plus the [`OracleWorld`] that makes
//! exactly one answer per question derivable.
//!
//! Every question has five options sharing one subject. Option 0 is a decoy
//! whose depth-2 decomposition is three quarters provable from dialogue, so
//! it outranks any partially proven answer but never completes. The gold
//! option is planted in dialogue, in frames, or split across both. The other
//! options are distractors, some with noise the filters must reject: a
//! contradicting dialogue line, a hallucinated inference, or a contradicting
//! frame.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{write_episode, Episode, FrameRef, QaItem, TranscriptLine, ANSWER_COUNT, INDEX_FILE, WINDOW_LINES};
use crate::providers::mock::{HypothesisEntry, OracleWorld, RelevanceEntry};

/// File name of the world document stored next to a generated dataset.
pub const WORLD_FILE: &str = "oracle_world.json";

pub const LINES_PER_EPISODE: usize = 12;
/// Seconds between consecutive lines and between consecutive frames.
pub const STEP_S: f64 = 2.0;
pub const GOLD_RELEVANCE: f64 = 0.9;
pub const OTHER_RELEVANCE: f64 = 0.5;

/// Where the gold answer's support lives.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Plant {
    Dialogue,
    Frame,
    /// One sub-hypothesis in dialogue, the other in frames.
    Mixed,
}

impl Plant {
    pub const ALL: [Plant; 3] = [Plant::Dialogue, Plant::Frame, Plant::Mixed];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SuiteSpec {
    pub episodes: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedQuestion {
    pub clip_id: String,
    pub plant: Plant,
    pub gold_index: usize,
    /// Whether the gold hypothesis is proven through a decomposition.
    pub decomposed: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Suite {
    pub episodes: Vec<Episode>,
    pub world: OracleWorld,
    pub planted: Vec<PlantedQuestion>,
}

const SUBJECTS: [&str; 12] = [
    "Nadia", "Omar", "Priya", "Tomas", "Greta", "Felix", "Ines", "Rafael", "Yuki", "Bruno",
    "Leona", "Malik",
];
const VERBS: [&str; 12] = [
    "picks up", "hides", "repairs", "paints", "drops", "sells", "wraps", "carries", "opens",
    "borrows", "cleans", "returns",
];
const OBJECTS: [&str; 12] = [
    "the red mug", "the violin case", "a paper map", "the bicycle lamp", "a silver key",
    "the lunch box", "a wool scarf", "the garden hose", "a chess board", "the desk fan",
    "a flower pot", "the camera bag",
];
const FILLER: [&str; 8] = [
    "I told you this would happen.",
    "Can we talk about it later?",
    "That is not what I meant.",
    "Hand me that, would you?",
    "We are running out of time.",
    "Nobody listens to me around here.",
    "Fine, but this is the last time.",
    "Wait, where did everyone go?",
];

struct Builder<'w> {
    world: &'w mut OracleWorld,
    subject: String,
    scene: usize,
}

impl Builder<'_> {
    fn statement(&self, predicate: &str) -> String {
        format!("{} {predicate} in scene {}.", self.subject, self.scene)
    }

    fn decompose(&mut self, parent: &str, left: &str, right: &str) {
        self.world
            .decompositions
            .insert(parent.to_string(), (left.to_string(), right.to_string()));
    }

    fn dialogue(&mut self, line: &str, fact: &str) {
        self.world
            .dialogue_facts
            .entry(line.to_string())
            .or_default()
            .insert(fact.to_string());
    }

    fn frame(&mut self, frame_id: &str, fact: &str) {
        self.world
            .frame_facts
            .entry(frame_id.to_string())
            .or_default()
            .insert(fact.to_string());
    }
}

fn clip_id(n: usize) -> String {
    format!("scene{n:04}")
}

fn episode_skeleton(n: usize, rng: &mut ChaCha8Rng, cast: &[&str]) -> Episode {
    let clip = clip_id(n);
    let transcript = (0..LINES_PER_EPISODE)
        .map(|i| TranscriptLine {
            index: i,
            speaker: Some(cast[i % cast.len()].to_uppercase()),
            text: format!("{} (scene {n}, beat {i})", FILLER[rng.random_range(0..FILLER.len())]),
            start_s: STEP_S * i as f64,
            end_s: STEP_S * i as f64 + 1.5,
        })
        .collect();
    let frames = (0..LINES_PER_EPISODE)
        .map(|i| FrameRef {
            frame_id: format!("{clip}_f{i:02}"),
            timestamp_s: STEP_S * i as f64,
            path: PathBuf::from(format!("f{i:02}.jpg")),
        })
        .collect();
    Episode {
        clip_id: clip,
        transcript,
        frames,
        qa_items: Vec::new(),
    }
}

/// One episode per question; plants cycle dialogue, frame, mixed so each
/// kind covers a third of the suite.
pub fn generate(shape: SuiteSpec) -> Suite {
    let mut rng = ChaCha8Rng::seed_from_u64(shape.seed);
    let mut world = OracleWorld::default();
    let mut episodes = Vec::with_capacity(shape.episodes);
    let mut planted = Vec::with_capacity(shape.episodes);
    let predicates: Vec<String> = VERBS
        .iter()
        .flat_map(|v| OBJECTS.iter().map(move |o| format!("{v} {o}")))
        .collect();

    for n in 0..shape.episodes {
        let plant = Plant::ALL[n % Plant::ALL.len()];
        let subject = SUBJECTS[rng.random_range(0..SUBJECTS.len())];
        let other = SUBJECTS[(SUBJECTS.iter().position(|s| *s == subject).unwrap() + 1) % SUBJECTS.len()];
        let mut episode = episode_skeleton(n, &mut rng, &[subject, other]);
        let start = rng.random_range(0..=LINES_PER_EPISODE - WINDOW_LINES);
        let line = |i: usize| episode.transcript[start + i].render();
        let frame = |i: usize| episode.frames[start + i].frame_id.clone();
        let window_text = crate::dataset::render_lines(&episode.transcript[start..start + WINDOW_LINES]);

        let picks: Vec<&String> = rand::seq::index::sample(&mut rng, predicates.len(), 9)
            .into_iter()
            .map(|i| &predicates[i])
            .collect();
        let mut b = Builder {
            world: &mut world,
            subject: subject.to_string(),
            scene: n,
        };

        // Decoy: D → (D1, D2), D1 → (D11, D12), D2 → (D21, D22); D22 is unsupported.
        let atoms: Vec<&str> = picks[..4].iter().map(|s| s.as_str()).collect();
        let d1_pred = format!("{} and {}", atoms[0], atoms[1]);
        let d2_pred = format!("{} and {}", atoms[2], atoms[3]);
        let decoy_pred = format!("{d1_pred} and also {d2_pred}");
        let (d, d1, d2) = (b.statement(&decoy_pred), b.statement(&d1_pred), b.statement(&d2_pred));
        let leaves: Vec<String> = atoms.iter().map(|a| b.statement(a)).collect();
        b.decompose(&d, &d1, &d2);
        b.decompose(&d1, &leaves[0], &leaves[1]);
        b.decompose(&d2, &leaves[2], &leaves[3]);
        b.dialogue(&line(0), &leaves[0]);
        b.dialogue(&line(2), &leaves[1]);
        b.dialogue(&line(4), &leaves[2]);

        // Gold.
        let decomposed = plant == Plant::Mixed || rng.random_bool(0.5);
        let gold_pred = if decomposed {
            format!("{} and {}", picks[4], picks[5])
        } else {
            picks[4].clone()
        };
        let gold = b.statement(&gold_pred);
        let parts = if decomposed {
            let (g1, g2) = (b.statement(picks[4]), b.statement(picks[5]));
            b.decompose(&gold, &g1, &g2);
            vec![g1, g2]
        } else {
            vec![gold.clone()]
        };
        for (k, part) in parts.iter().enumerate() {
            let in_dialogue = match plant {
                Plant::Dialogue => true,
                Plant::Frame => false,
                Plant::Mixed => k == 0,
            };
            if in_dialogue {
                b.dialogue(&line(1 + 2 * k), part);
            } else {
                for f in [frame(2 + k), frame(4 + k)] {
                    b.frame(&f, part);
                    let confidence = 0.5 + 0.05 * rng.random_range(0..10) as f64;
                    b.world.frame_confidence.insert(f, confidence);
                }
            }
        }

        // Distractors, three of which carry filter-bait noise.
        let distractors: Vec<String> = picks[6..9].iter().map(|p| b.statement(p)).collect();
        let noisy = &distractors[0];
        b.dialogue(&line(3), &format!("No one can confirm that {}", lower_first(noisy)));
        b.world
            .contradicts
            .insert((format!("No one can confirm that {}", lower_first(noisy)), noisy.clone()));
        let hallucinated = format!("Everyone knows that {}", lower_first(&distractors[1]));
        b.world
            .hallucinations
            .entry(line(5))
            .or_default()
            .insert(hallucinated.clone());
        b.world.entails.insert((hallucinated, distractors[1].clone()));
        let ruled_out = format!("The picture rules out that {}", lower_first(&distractors[2]));
        b.frame(&frame(3), &ruled_out);
        b.world.contradicts.insert((ruled_out, distractors[2].clone()));

        // Options: decoy first, gold anywhere after it, distractors elsewhere.
        let gold_index = rng.random_range(1..ANSWER_COUNT);
        let mut rest = distractors.clone();
        rest.shuffle(&mut rng);
        let mut statements = vec![d.clone()];
        let mut preds = vec![decoy_pred.clone()];
        let mut rest_preds: Vec<String> = rest
            .iter()
            .map(|s| s.trim_start_matches(&format!("{subject} ")).trim_end_matches(&format!(" in scene {n}.")).to_string())
            .collect();
        for i in 1..ANSWER_COUNT {
            if i == gold_index {
                statements.push(gold.clone());
                preds.push(gold_pred.clone());
            } else {
                statements.push(rest.remove(0));
                preds.push(rest_preds.remove(0));
            }
        }
        let question = format!("What does {subject} do in scene {n}?");
        for (statement, answer) in statements.iter().zip(&preds) {
            b.world.hypotheses.push(HypothesisEntry {
                question: question.clone(),
                answer: answer.clone(),
                statement: Some(statement.clone()),
            });
            b.world.relevance_scores.push(RelevanceEntry {
                passage: window_text.clone(),
                query: statement.clone(),
                score: if *statement == gold { GOLD_RELEVANCE } else { OTHER_RELEVANCE },
            });
        }
        episode.qa_items.push(QaItem {
            qid: None,
            question,
            answers: preds,
            gold_index: Some(gold_index),
            clip_id: episode.clip_id.clone(),
        });
        planted.push(PlantedQuestion {
            clip_id: episode.clip_id.clone(),
            plant,
            gold_index,
            decomposed,
        });
        episodes.push(episode);
    }
    Suite {
        episodes,
        world,
        planted,
    }
}

fn lower_first(s: &str) -> String {
    let mut chars = s.chars();
    match chars.next() {
        Some(c) => c.to_lowercase().chain(chars).collect(),
        None => String::new(),
    }
}

#[derive(Serialize)]
struct IndexEntry<'a> {
    clip_id: &'a str,
}

/// Writes every episode, an index in generation order, and the world
/// document under `dir`.
pub fn write_suite(dir: &Path, suite: &Suite) -> io::Result<()> {
    fs::create_dir_all(dir)?;
    let mut index = String::new();
    for episode in &suite.episodes {
        write_episode(dir, episode)?;
        index.push_str(&serde_json::to_string(&IndexEntry { clip_id: &episode.clip_id })?);
        index.push('\n');
    }
    fs::write(dir.join(INDEX_FILE), index)?;
    fs::write(dir.join(WORLD_FILE), suite.world.to_json())
}
