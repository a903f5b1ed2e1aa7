//! Random mock worlds and an independent brute-force derivability oracle.
//!
//! The oracle reads the world tables directly and never calls engine code:
//! window choice, frame scope, fact lookup and decomposition validity are
//! all recomputed here from their definitions.

#![allow(dead_code)]

use std::collections::BTreeSet;
use std::sync::Arc;

use proofloom::dataset::{Episode, FrameRef, TranscriptLine};
use proofloom::eval::NodeJudgment;
use proofloom::evidence_text::{filter_cascade, InferenceCandidate, LocalizedWindow};
use proofloom::providers::mock::{MockBackend, OracleWorld, RelevanceEntry};
use proofloom::providers::{ModelClient, Session};
use proofloom::tree::NodePath;
use proofloom::search::Modality;
use rand::seq::IndexedRandom;
use rand::Rng;

pub const WINDOW: usize = 6;
pub const MAX_DEPTH: usize = 2;

const STATEMENTS: [&str; 10] = [
    "Ava holds the cup.",
    "Ben opens the door.",
    "Cleo sits on the couch.",
    "Dev laughs at the joke.",
    "Ava holds the cup and Ben opens the door.",
    "Cleo sits on the couch and Dev laughs at the joke.",
    "Emil reads the letter.",
    "Fay waters the plant.",
    "Emil reads the letter while Fay waters the plant.",
    "Gus wears a hat.",
];

// Children that the decomposition lint must reject.
const BAD_CHILDREN: [&str; 3] = ["It was raining.", "they left early.", "Ava holds the cup"];

/// A random world over a small statement pool with at most 20 planted facts
/// and at most 3 decompositions, plus the episode it describes and a root
/// statement.
pub struct RandomCase {
    pub world: OracleWorld,
    pub episode: Episode,
    pub root: String,
    pub modality: Modality,
}

fn pick<R: Rng>(rng: &mut R) -> String {
    STATEMENTS.choose(rng).unwrap().to_string()
}

fn child<R: Rng>(rng: &mut R) -> String {
    if rng.random_bool(0.15) {
        BAD_CHILDREN.choose(rng).unwrap().to_string()
    } else {
        pick(rng)
    }
}

pub fn random_case(rng: &mut impl Rng, id: usize) -> RandomCase {
    let n_lines = rng.random_range(0..=10);
    let transcript: Vec<TranscriptLine> = (0..n_lines)
        .map(|i| TranscriptLine {
            index: i,
            speaker: Some(["ANA", "BO"][i % 2].to_string()),
            text: format!("Line {i} of case {id}."),
            start_s: 3.0 * i as f64,
            end_s: 3.0 * i as f64 + 2.0,
        })
        .collect();
    let n_frames = rng.random_range(0..=12);
    let mut stamps: Vec<f64> = (0..n_frames).map(|_| 0.5 * rng.random_range(0..70) as f64).collect();
    stamps.sort_by(f64::total_cmp);
    let frames: Vec<FrameRef> = stamps
        .iter()
        .enumerate()
        .map(|(i, &t)| FrameRef {
            frame_id: format!("c{id}_f{i}"),
            timestamp_s: t,
            path: format!("f{i}.jpg").into(),
        })
        .collect();

    let mut world = OracleWorld::default();
    let root = STATEMENTS.choose(rng).unwrap().to_string();

    for _ in 0..rng.random_range(0..=3) {
        let parent = if rng.random_bool(0.5) { root.clone() } else { pick(rng) };
        let (a, b) = (child(rng), child(rng));
        world.decompositions.insert(parent, (a, b));
    }

    let rendered: Vec<String> = transcript.iter().map(|l| l.render()).collect();
    for k in 0..rng.random_range(0..=20) {
        // A fact is either a pool statement or a fresh premise entailing one.
        let target = pick(rng);
        let fact = if rng.random_bool(0.6) {
            target.clone()
        } else {
            let premise = format!("Premise {k} supports a claim.");
            world.entails.insert((premise.clone(), target.clone()));
            premise
        };
        if rng.random_bool(0.3) {
            world.contradicts.insert((fact.clone(), pick(rng)));
        }
        let on_line = rng.random_bool(0.5);
        if on_line && !rendered.is_empty() {
            let line = rendered.choose(rng).unwrap().clone();
            if rng.random_bool(0.15) {
                world.hallucinations.entry(line).or_default().insert(fact);
            } else {
                world.dialogue_facts.entry(line).or_default().insert(fact);
            }
        } else if !frames.is_empty() {
            let f = frames.choose(rng).unwrap().frame_id.clone();
            world.frame_facts.entry(f).or_default().insert(fact);
        }
    }

    let starts = if transcript.is_empty() { 0 } else { transcript.len().saturating_sub(WINDOW) + 1 };
    for s in 0..starts {
        if rng.random_bool(0.6) {
            let end = (s + WINDOW).min(rendered.len());
            world.relevance_scores.push(RelevanceEntry {
                passage: rendered[s..end].join("\n"),
                query: root.clone(),
                score: *[-0.5, 0.0, 0.3, 0.7].choose(rng).unwrap(),
            });
        }
    }

    let modality = *[Modality::Both, Modality::Both, Modality::Text, Modality::Video]
        .choose(rng)
        .unwrap();
    RandomCase {
        world,
        episode: Episode {
            clip_id: format!("case{id}"),
            transcript,
            frames,
            qa_items: Vec::new(),
        },
        root,
        modality,
    }
}

fn entails(w: &OracleWorld, p: &str, h: &str) -> bool {
    p == h || w.entails.contains(&(p.to_string(), h.to_string()))
}

fn render(l: &TranscriptLine) -> String {
    match &l.speaker {
        Some(s) => format!("{s}: {}", l.text),
        None => l.text.clone(),
    }
}

fn relevance(w: &OracleWorld, passage: &str, query: &str) -> f64 {
    w.relevance_scores
        .iter()
        .find(|e| e.passage == passage && e.query == query)
        .map_or(w.default_relevance, |e| e.score)
}

/// Exhaustive window scan: every start, highest score, earliest on ties,
/// kept only at or above the threshold. Returns the first line index.
pub fn oracle_window(w: &OracleWorld, transcript: &[TranscriptLine], query: &str, threshold: f64) -> Option<usize> {
    if transcript.is_empty() {
        return None;
    }
    let rendered: Vec<String> = transcript.iter().map(render).collect();
    let mut scored = Vec::new();
    for s in 0..=rendered.len().saturating_sub(WINDOW) {
        let end = (s + WINDOW).min(rendered.len());
        scored.push((s, relevance(w, &rendered[s..end].join("\n"), query)));
    }
    let best = scored.iter().map(|(_, x)| *x).fold(f64::NEG_INFINITY, f64::max);
    scored
        .into_iter()
        .find(|(_, x)| *x == best)
        .filter(|(_, x)| *x >= threshold)
        .map(|(s, _)| s)
}

fn valid_decomposition(w: &OracleWorld, h: &str) -> Option<(String, String)> {
    let (a, b) = w.decompositions.get(h)?;
    let ok = |s: &str| {
        let first = s.split_whitespace().next().unwrap_or("").to_lowercase();
        s.ends_with(['.', '!', '?']) && !["he", "she", "they", "it", "this", "that"].contains(&first.as_str())
    };
    (ok(a) && ok(b) && a != b && a != h && b != h).then(|| (a.clone(), b.clone()))
}

/// Brute-force derivability with the engine's default thresholds.
pub struct Oracle<'a> {
    world: &'a OracleWorld,
    lines: Vec<String>,
    scope: Vec<String>,
    modality: Modality,
}

impl<'a> Oracle<'a> {
    pub fn new(world: &'a OracleWorld, episode: &Episode, root: &str, modality: Modality) -> Self {
        let window = if modality == Modality::Video {
            None
        } else {
            oracle_window(world, &episode.transcript, root, 0.0)
        };
        let lines: Vec<String> = match window {
            Some(s) => episode.transcript[s..(s + WINDOW).min(episode.transcript.len())]
                .iter()
                .map(render)
                .collect(),
            None => Vec::new(),
        };
        let scope = match window {
            Some(s) => {
                let end = (s + WINDOW).min(episode.transcript.len()) - 1;
                let (t0, t1) = (episode.transcript[s].start_s, episode.transcript[end].end_s);
                episode
                    .frames
                    .iter()
                    .filter(|f| f.timestamp_s >= t0 && f.timestamp_s <= t1)
                    .map(|f| f.frame_id.clone())
                    .collect()
            }
            None => episode.frames.iter().map(|f| f.frame_id.clone()).collect(),
        };
        Self {
            world,
            lines,
            scope,
            modality,
        }
    }

    fn text(&self, h: &str) -> bool {
        self.modality != Modality::Video
            && self
                .lines
                .iter()
                .filter_map(|l| self.world.dialogue_facts.get(l))
                .flatten()
                .any(|f| entails(self.world, f, h))
    }

    fn visual(&self, h: &str) -> bool {
        if self.modality == Modality::Text || self.scope.is_empty() {
            return false;
        }
        let yes = self
            .scope
            .iter()
            .filter(|id| {
                self.world
                    .frame_facts
                    .get(*id)
                    .is_some_and(|fs| fs.iter().any(|f| entails(self.world, f, h)))
            })
            .count();
        yes as f64 / self.scope.len() as f64 > 0.10
    }

    pub fn derivable(&self, h: &str, depth: usize) -> bool {
        self.text(h)
            || (depth < MAX_DEPTH
                && valid_decomposition(self.world, h)
                    .is_some_and(|(a, b)| self.derivable(&a, depth + 1) && self.derivable(&b, depth + 1)))
            || self.visual(h)
    }
}

/// Every distinct fact string in a world.
pub fn fact_count(w: &OracleWorld) -> usize {
    let mut all = BTreeSet::new();
    for set in w.dialogue_facts.values().chain(w.frame_facts.values()).chain(w.hallucinations.values()) {
        all.extend(set.iter().cloned());
    }
    all.len()
}

// Cascade worlds: each of 8 candidate texts may be a dialogue fact, entail
// the hypothesis and contradict it, as set by 24 bits.
pub const HYPOTHESIS: &str = "Ava holds the cup.";
pub const TEXTS: [&str; 8] = [
    "Ava holds the cup.",
    "Ava grips a mug.",
    "Ava drops the cup.",
    "Ben opens the door.",
    "Ava is holding something.",
    "The cup is empty.",
    "Nobody holds the cup.",
    "Ava owns a cup.",
];

pub fn cascade_world(bits: &[bool]) -> (OracleWorld, LocalizedWindow) {
    let lines: Vec<TranscriptLine> = (0..3)
        .map(|i| TranscriptLine {
            index: i,
            speaker: Some("ANA".into()),
            text: format!("Line {i}."),
            start_s: i as f64,
            end_s: i as f64 + 0.5,
        })
        .collect();
    let mut w = OracleWorld::default();
    for (k, text) in TEXTS.iter().enumerate() {
        if bits[3 * k] {
            w.dialogue_facts
                .entry(lines[k % 3].render())
                .or_default()
                .insert(text.to_string());
        }
        if bits[3 * k + 1] {
            w.entails.insert((text.to_string(), HYPOTHESIS.into()));
        }
        if bits[3 * k + 2] {
            w.contradicts.insert((text.to_string(), HYPOTHESIS.into()));
        }
    }
    let window = LocalizedWindow {
        start_index: 0,
        line_indices: vec![0, 1, 2],
        text: lines.iter().map(TranscriptLine::render).collect::<Vec<_>>().join("\n"),
        t0_s: 0.0,
        t1_s: 2.5,
        rank_score: 1.0,
    };
    (w, window)
}

pub fn survivors(w: &OracleWorld, window: &LocalizedWindow, texts: &[&str], theta: f64) -> (Vec<InferenceCandidate>, BTreeSet<String>) {
    let client = ModelClient::new(Arc::new(MockBackend::new(w.clone())));
    let session = Session::new(&client, None);
    let mut cands: Vec<InferenceCandidate> = texts
        .iter()
        .map(|t| InferenceCandidate {
            text: t.to_string(),
            nli: None,
            faithful: None,
            verified: None,
        })
        .collect();
    let s = filter_cascade(&session, &mut cands, HYPOTHESIS, window, theta).unwrap();
    (cands, s.into_iter().map(|c| c.text).collect())
}

// Direct evaluation of the composition formula over the raw judgments.
pub fn independent_score(js: &[NodeJudgment]) -> f64 {
    let mut acc = Vec::new();
    let (mut r, mut d, mut s) = (Vec::new(), Vec::new(), Vec::new());
    for j in js {
        if let Some(x) = j.acceptability {
            acc.push(if j.malformed { 0.0 } else { (x as f64 - 1.0) / 4.0 });
        }
        if let (Some(rel), Some(dis), Some(suf)) = (j.relevance, j.distinct, j.sufficiency) {
            r.extend(rel.map(f64::from));
            d.extend(dis.map(f64::from));
            s.push(suf as f64);
        }
    }
    let avg = |v: &[f64]| (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64);
    let terms = [(avg(&acc), 1.0), (avg(&s), 1.0), (avg(&d), 0.5), (avg(&r), 0.5)];
    let num: f64 = terms.iter().filter_map(|(q, w)| q.map(|q| q * w)).sum();
    let den: f64 = terms.iter().filter(|(q, _)| q.is_some()).map(|(_, w)| w).sum();
    num / den
}

/// Up to 7 random node judgments: branches carry binary qualia, leaves an
/// acceptability in 1..=5 and sometimes a malformed flag.
pub fn random_judgments(rng: &mut impl Rng) -> Vec<NodeJudgment> {
    (0..rng.random_range(1..8))
        .map(|_| {
            let branch = rng.random_bool(0.5);
            let mut bit = || rng.random_range(0..=1u8);
            let pair = [bit(), bit()];
            let dis = [bit(), bit()];
            let suf = bit();
            NodeJudgment {
                node_path: NodePath::root(),
                malformed: !branch && rng.random_bool(0.2),
                acceptability: (!branch).then(|| rng.random_range(1..=5u8)),
                relevance: branch.then_some(pair),
                distinct: branch.then_some(dis),
                sufficiency: branch.then_some(suf),
            }
        })
        .collect()
}
