use std::sync::atomic::AtomicBool;
use std::sync::Arc;

use proofloom::harness::{run_batch, BatchConfig, BatchOutcome};
use proofloom::providers::mock::MockBackend;
use proofloom::providers::ModelClient;
use proofloom::search::{Modality, SearchConfig};
use proofloom::synthetic::{generate, Plant, Suite, SuiteSpec};

fn run(suite: &Suite, modality: Modality) -> BatchOutcome {
    let client = ModelClient::new(Arc::new(MockBackend::new(suite.world.clone())));
    let cfg = BatchConfig {
        search: SearchConfig {
            modality,
            ..SearchConfig::default()
        },
        ..BatchConfig::default()
    };
    run_batch(&client, &suite.episodes, &cfg, "t", None, &AtomicBool::new(false)).unwrap()
}

fn plant_fraction(suite: &Suite, plant: Plant) -> f64 {
    suite.planted.iter().filter(|p| p.plant == plant).count() as f64 / suite.planted.len() as f64
}

#[test]
fn both_modalities_answer_every_planted_question() {
    let suite = generate(SuiteSpec { episodes: 30, seed: 11 });
    let out = run(&suite, Modality::Both);
    assert!(out.errors.is_empty(), "{:?}", out.errors);
    assert_eq!(out.report.accuracy, Some(1.0));
    assert_eq!(out.report.completed_fraction, Some(1.0));
    assert!(out.verdicts.iter().all(|v| !v.chosen().budget_exhausted));
}

#[test]
fn single_modalities_complete_only_their_plants() {
    let suite = generate(SuiteSpec { episodes: 30, seed: 12 });
    let text = run(&suite, Modality::Text).report;
    let video = run(&suite, Modality::Video).report;
    assert_eq!(text.completed_fraction, Some(plant_fraction(&suite, Plant::Dialogue)));
    assert_eq!(video.completed_fraction, Some(plant_fraction(&suite, Plant::Frame)));
    // Without frames the decoy outranks every partially proven gold answer.
    assert_eq!(text.accuracy, Some(plant_fraction(&suite, Plant::Dialogue)));
    assert_eq!(text.call_counts.get("vqa"), 0);
    assert!(text.call_counts.get("generate:inference") > 0 && text.call_counts.get("score:nli") > 0);
    assert!(video.call_counts.get("vqa") > 0);
    assert_eq!(video.call_counts.get("generate:inference"), 0);
    assert_eq!(video.call_counts.get("score:nli"), 0);
}

#[test]
fn a_cancelled_batch_skips_and_reports_interruption() {
    let suite = generate(SuiteSpec { episodes: 6, seed: 13 });
    let client = ModelClient::new(Arc::new(MockBackend::new(suite.world.clone())));
    let dir = tempfile::tempdir().unwrap();
    let out = run_batch(&client, &suite.episodes, &BatchConfig::default(), "t", Some(dir.path()), &AtomicBool::new(true)).unwrap();
    assert!(out.report.interrupted);
    assert_eq!((out.report.answered, out.report.skipped), (0, 6));
    assert!(out.report.render().contains("interrupted"));
    assert!(dir.path().join("report.json").exists());
}
