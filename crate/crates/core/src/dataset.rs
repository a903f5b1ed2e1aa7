//! Episode ingestion.
//!
//! On-disk layout of one clip directory:
//!
//! ```text
//! <clip_id>/transcript.jsonl        one TranscriptLine per line (optional)
//! <clip_id>/frames/manifest.jsonl   one FrameRef per line, paths relative to frames/
//! <clip_id>/qa.jsonl                one QaItem per line
//! ```
//!
//! A dataset is a directory of clip directories, optionally listing the
//! clips to load (in order) in `index.jsonl`.

use std::collections::HashSet;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const TRANSCRIPT_FILE: &str = "transcript.jsonl";
pub const FRAMES_DIR: &str = "frames";
pub const MANIFEST_FILE: &str = "manifest.jsonl";
pub const QA_FILE: &str = "qa.jsonl";
pub const INDEX_FILE: &str = "index.jsonl";

/// Lines per localization window.
pub const WINDOW_LINES: usize = 6;
pub const ANSWER_COUNT: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TranscriptLine {
    pub index: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub speaker: Option<String>,
    pub text: String,
    pub start_s: f64,
    pub end_s: f64,
}

impl TranscriptLine {
    /// `SPEAKER: text`, or just the text when the speaker is unknown.
    pub fn render(&self) -> String {
        match &self.speaker {
            Some(speaker) => format!("{speaker}: {}", self.text),
            None => self.text.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrameRef {
    pub frame_id: String,
    pub timestamp_s: f64,
    /// Image locator. Relative paths in a manifest are resolved against the
    /// frames directory at load time.
    pub path: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QaItem {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub qid: Option<String>,
    pub question: String,
    pub answers: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gold_index: Option<usize>,
    pub clip_id: String,
}

impl QaItem {
    pub fn check(&self) -> Result<(), String> {
        if self.question.trim().is_empty() {
            return Err("empty question".into());
        }
        if self.answers.len() != ANSWER_COUNT {
            return Err(format!(
                "expected {ANSWER_COUNT} answers, found {}",
                self.answers.len()
            ));
        }
        let mut seen = HashSet::new();
        for answer in &self.answers {
            if answer.trim().is_empty() {
                return Err("empty answer option".into());
            }
            if !seen.insert(answer.as_str()) {
                return Err(format!("duplicate answer option {answer:?}"));
            }
        }
        if let Some(gold) = self.gold_index {
            if gold >= ANSWER_COUNT {
                return Err(format!("gold_index {gold} out of range"));
            }
        }
        Ok(())
    }
}

/// A clip with its evidence bank (dialogue lines and frames) and questions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Episode {
    pub clip_id: String,
    pub transcript: Vec<TranscriptLine>,
    pub frames: Vec<FrameRef>,
    pub qa_items: Vec<QaItem>,
}

#[derive(Debug, Error)]
pub enum LoadError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{path}:{line}: {message}")]
    Record {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("{clip_id}: {message}")]
    Invalid { clip_id: String, message: String },
}

impl LoadError {
    pub fn is_io(&self) -> bool {
        matches!(self, LoadError::Io { .. })
    }
}

#[derive(Debug, Error, PartialEq)]
#[error("window start {start} out of range for a {len}-line transcript")]
pub struct WindowError {
    pub start: usize,
    pub len: usize,
}

#[derive(Debug, Clone, Copy)]
pub struct LoadOptions {
    /// Check that every frame path exists at load time. When off, paths are
    /// resolved but checked on first access by whoever reads the image.
    pub verify_frame_paths: bool,
}

impl Default for LoadOptions {
    fn default() -> Self {
        Self {
            verify_frame_paths: true,
        }
    }
}

/// A contiguous run of transcript lines.
#[derive(Debug, Clone, PartialEq)]
pub struct Passage {
    pub start_index: usize,
    pub line_indices: Vec<usize>,
    pub text: String,
    pub t0_s: f64,
    pub t1_s: f64,
}

impl Episode {
    pub fn frame(&self, frame_id: &str) -> Option<&FrameRef> {
        self.frames.iter().find(|f| f.frame_id == frame_id)
    }

    /// Validates the episode invariants.
    pub fn check(&self) -> Result<(), LoadError> {
        let invalid = |message: String| LoadError::Invalid {
            clip_id: self.clip_id.clone(),
            message,
        };
        for (i, line) in self.transcript.iter().enumerate() {
            if line.index != i {
                return Err(invalid(format!(
                    "transcript line {i} has index {}; indices must run 0..n",
                    line.index
                )));
            }
            // NaN times fail this too.
            if line.start_s.partial_cmp(&line.end_s).is_none_or(|o| o.is_gt()) {
                return Err(invalid(format!("transcript line {i} ends before it starts")));
            }
            if i > 0 && line.start_s < self.transcript[i - 1].start_s {
                return Err(invalid(format!("transcript line {i} is out of time order")));
            }
        }
        let mut ids = HashSet::new();
        for (i, frame) in self.frames.iter().enumerate() {
            if !ids.insert(frame.frame_id.as_str()) {
                return Err(invalid(format!("duplicate frame id {:?}", frame.frame_id)));
            }
            if !frame.timestamp_s.is_finite() {
                return Err(invalid(format!("frame {:?} has no finite timestamp", frame.frame_id)));
            }
            if i > 0 && frame.timestamp_s < self.frames[i - 1].timestamp_s {
                return Err(invalid(format!(
                    "frame {:?} timestamp decreases",
                    frame.frame_id
                )));
            }
        }
        for qa in &self.qa_items {
            qa.check()
                .map_err(|m| invalid(format!("question {:?}: {m}", qa.question)))?;
            if qa.clip_id != self.clip_id {
                return Err(invalid(format!(
                    "question {:?} belongs to clip {:?}",
                    qa.question, qa.clip_id
                )));
            }
        }
        Ok(())
    }

    /// Question id: the explicit one, or `<clip_id>_q<n>`.
    pub fn qid(&self, n: usize) -> String {
        self.qa_items[n]
            .qid
            .clone()
            .unwrap_or_else(|| format!("{}_q{n}", self.clip_id))
    }

    /// Frames with timestamps in the closed interval `[t0_s, t1_s]`.
    pub fn frames_in(&self, t0_s: f64, t1_s: f64) -> Vec<FrameRef> {
        self.frames
            .iter()
            .filter(|f| t0_s <= f.timestamp_s && f.timestamp_s <= t1_s)
            .cloned()
            .collect()
    }
}

/// Valid window starts at stride 1. Short transcripts have a single window
/// at 0; an empty transcript has none.
pub fn window_starts(transcript: &[TranscriptLine], length: usize) -> std::ops::Range<usize> {
    if transcript.is_empty() {
        0..0
    } else {
        0..transcript.len().saturating_sub(length) + 1
    }
}

/// Up to `length` consecutive lines starting at `start_index`, one rendered
/// line per row. Time span runs from the first line's start to the last
/// line's end.
pub fn window(
    transcript: &[TranscriptLine],
    start_index: usize,
    length: usize,
) -> Result<Passage, WindowError> {
    if !window_starts(transcript, length).contains(&start_index) {
        return Err(WindowError {
            start: start_index,
            len: transcript.len(),
        });
    }
    let end = (start_index + length).min(transcript.len());
    let lines = &transcript[start_index..end];
    Ok(Passage {
        start_index,
        line_indices: lines.iter().map(|l| l.index).collect(),
        text: render_lines(lines),
        t0_s: lines[0].start_s,
        t1_s: lines[lines.len() - 1].end_s,
    })
}

pub fn render_lines<'a>(lines: impl IntoIterator<Item = &'a TranscriptLine>) -> String {
    lines
        .into_iter()
        .map(TranscriptLine::render)
        .collect::<Vec<_>>()
        .join("\n")
}

fn read_jsonl<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>, LoadError> {
    let text = fs::read_to_string(path).map_err(|source| LoadError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let record = serde_json::from_str(line).map_err(|e| LoadError::Record {
            path: path.to_path_buf(),
            line: n + 1,
            message: e.to_string(),
        })?;
        out.push(record);
    }
    Ok(out)
}

pub fn load_episode(dir: &Path) -> Result<Episode, LoadError> {
    load_episode_with(dir, LoadOptions::default())
}

pub fn load_episode_with(dir: &Path, options: LoadOptions) -> Result<Episode, LoadError> {
    if !dir.is_dir() {
        return Err(LoadError::Io {
            path: dir.to_path_buf(),
            source: io::Error::new(io::ErrorKind::NotFound, "episode directory not found"),
        });
    }
    let clip_id = dir
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();

    let transcript_path = dir.join(TRANSCRIPT_FILE);
    // No transcript is legitimate: the engine falls back to frames only.
    let transcript = if transcript_path.exists() {
        read_jsonl(&transcript_path)?
    } else {
        Vec::new()
    };

    let frames_dir = dir.join(FRAMES_DIR);
    let manifest = frames_dir.join(MANIFEST_FILE);
    let mut frames: Vec<FrameRef> = if manifest.exists() {
        read_jsonl(&manifest)?
    } else {
        Vec::new()
    };
    for (n, frame) in frames.iter_mut().enumerate() {
        if frame.path.is_relative() {
            frame.path = frames_dir.join(&frame.path);
        }
        if options.verify_frame_paths && !frame.path.exists() {
            return Err(LoadError::Record {
                path: manifest.clone(),
                line: n + 1,
                message: format!(
                    "frame {:?} points at missing image {}",
                    frame.frame_id,
                    frame.path.display()
                ),
            });
        }
    }

    let qa_path = dir.join(QA_FILE);
    let qa_items: Vec<QaItem> = if qa_path.exists() {
        read_jsonl(&qa_path)?
    } else {
        Vec::new()
    };
    for (n, qa) in qa_items.iter().enumerate() {
        qa.check().map_err(|message| LoadError::Record {
            path: qa_path.clone(),
            line: n + 1,
            message,
        })?;
    }

    let episode = Episode {
        clip_id,
        transcript,
        frames,
        qa_items,
    };
    episode.check()?;
    Ok(episode)
}

#[derive(Debug, Deserialize)]
struct IndexEntry {
    clip_id: String,
}

/// Loads every clip directory under `dir`, in `index.jsonl` order when the
/// index exists, otherwise sorted by clip id.
pub fn load_dataset(dir: &Path, options: LoadOptions) -> Result<Vec<Episode>, LoadError> {
    let io_err = |source| LoadError::Io {
        path: dir.to_path_buf(),
        source,
    };
    let index = dir.join(INDEX_FILE);
    let clip_ids: Vec<String> = if index.exists() {
        read_jsonl::<IndexEntry>(&index)?
            .into_iter()
            .map(|e| e.clip_id)
            .collect()
    } else {
        let mut ids = Vec::new();
        for entry in fs::read_dir(dir).map_err(io_err)? {
            let entry = entry.map_err(io_err)?;
            if entry.path().join(QA_FILE).exists() {
                ids.push(entry.file_name().to_string_lossy().into_owned());
            }
        }
        ids.sort();
        ids
    };
    let mut seen = HashSet::new();
    let mut episodes = Vec::with_capacity(clip_ids.len());
    for clip_id in clip_ids {
        if !seen.insert(clip_id.clone()) {
            return Err(LoadError::Invalid {
                clip_id,
                message: "clip listed twice".into(),
            });
        }
        episodes.push(load_episode_with(&dir.join(&clip_id), options)?);
    }
    Ok(episodes)
}

fn write_jsonl<T: Serialize>(path: &Path, records: &[T]) -> io::Result<()> {
    let mut out = io::BufWriter::new(fs::File::create(path)?);
    for record in records {
        serde_json::to_writer(&mut out, record)?;
        out.write_all(b"\n")?;
    }
    out.flush()
}

/// Writes `episode` in the on-disk layout under `dataset_dir/<clip_id>`.
/// Frame paths are written relative to the frames directory, and an empty
/// placeholder image is created for any frame whose file is missing.
pub fn write_episode(dataset_dir: &Path, episode: &Episode) -> io::Result<PathBuf> {
    let dir = dataset_dir.join(&episode.clip_id);
    let frames_dir = dir.join(FRAMES_DIR);
    fs::create_dir_all(&frames_dir)?;
    if !episode.transcript.is_empty() {
        write_jsonl(&dir.join(TRANSCRIPT_FILE), &episode.transcript)?;
    }
    let mut frames = Vec::with_capacity(episode.frames.len());
    for frame in &episode.frames {
        let rel = frame
            .path
            .strip_prefix(&frames_dir)
            .unwrap_or(&frame.path)
            .to_path_buf();
        let target = frames_dir.join(&rel);
        if !target.exists() {
            fs::write(&target, b"")?;
        }
        frames.push(FrameRef {
            path: rel,
            ..frame.clone()
        });
    }
    write_jsonl(&frames_dir.join(MANIFEST_FILE), &frames)?;
    write_jsonl(&dir.join(QA_FILE), &episode.qa_items)?;
    Ok(dir)
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn lines(n: usize) -> Vec<TranscriptLine> {
        (0..n)
            .map(|i| TranscriptLine {
                index: i,
                speaker: Some(format!("S{}", i % 2)),
                text: format!("line {i}"),
                start_s: 3.0 * i as f64,
                end_s: 3.0 * i as f64 + 2.0,
            })
            .collect()
    }

    fn frames(n: usize) -> Vec<FrameRef> {
        (0..n)
            .map(|i| FrameRef {
                frame_id: format!("f{i:03}"),
                timestamp_s: i as f64,
                path: format!("f{i:03}.jpg").into(),
            })
            .collect()
    }

    fn qa(answers: usize) -> QaItem {
        QaItem {
            qid: None,
            question: "Why are they late?".into(),
            answers: (0..answers).map(|i| format!("Answer {i}")).collect(),
            gold_index: Some(1),
            clip_id: "clip_a".into(),
        }
    }

    fn episode(n_lines: usize, n_frames: usize) -> Episode {
        Episode {
            clip_id: "clip_a".into(),
            transcript: lines(n_lines),
            frames: frames(n_frames),
            qa_items: vec![qa(5)],
        }
    }

    #[test]
    fn window_counts() {
        assert_eq!(window_starts(&lines(6), 6), 0..1);
        assert_eq!(window_starts(&lines(8), 6), 0..3);
        assert_eq!(window_starts(&lines(3), 6), 0..1);
        assert_eq!(window_starts(&[], 6), 0..0);

        let all = window(&lines(6), 0, 6).unwrap();
        assert_eq!(all.line_indices, (0..6).collect::<Vec<_>>());
        assert_eq!(all.text.lines().next(), Some("S0: line 0"));

        let short = window(&lines(3), 0, 6).unwrap();
        assert_eq!(short.line_indices, vec![0, 1, 2]);
        assert_eq!((short.t0_s, short.t1_s), (0.0, 8.0));

        assert_eq!(
            window(&lines(8), 3, 6),
            Err(WindowError { start: 3, len: 8 })
        );
    }

    #[test]
    fn frame_interval_is_closed() {
        let ep = episode(0, 90);
        assert_eq!(ep.frames_in(0.0, 89.0).len(), 90);
        assert_eq!(ep.frames_in(10.0, 20.0).len(), 11);
        let one = ep.frames_in(42.0, 42.0);
        assert_eq!(one.len(), 1);
        assert_eq!(one[0].frame_id, "f042");
        assert!(ep.frames_in(90.5, 100.0).is_empty());
    }

    #[test]
    fn load_round_trip_with_30_lines_and_90_frames() {
        let dir = tempfile::tempdir().unwrap();
        let ep = episode(30, 90);
        let path = write_episode(dir.path(), &ep).unwrap();
        let loaded = load_episode(&path).unwrap();
        assert_eq!(loaded.transcript.len(), 30);
        assert_eq!(loaded.frames.len(), 90);
        assert_eq!(loaded.qa_items[0].answers.len(), 5);
        assert_eq!(loaded.frames[0].path, path.join("frames/f000.jpg"));
        assert_eq!(load_episode(&path).unwrap(), loaded);
    }

    #[test]
    fn four_answers_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let mut ep = episode(6, 2);
        ep.qa_items = vec![qa(4)];
        let path = write_episode(dir.path(), &ep).unwrap();
        let err = load_episode(&path).unwrap_err();
        assert!(err.to_string().contains("expected 5 answers"), "{err}");
        assert!(err.to_string().contains("qa.jsonl:1"), "{err}");
    }

    #[test]
    fn missing_transcript_gives_empty_transcript() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_episode(dir.path(), &episode(0, 4)).unwrap();
        assert!(!path.join(TRANSCRIPT_FILE).exists());
        let loaded = load_episode(&path).unwrap();
        assert!(loaded.transcript.is_empty());
        assert_eq!(loaded.frames.len(), 4);
    }

    #[test]
    fn malformed_frame_entry_names_the_record() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_episode(dir.path(), &episode(6, 3)).unwrap();
        let manifest = path.join(FRAMES_DIR).join(MANIFEST_FILE);
        let mut text = fs::read_to_string(&manifest).unwrap();
        text.push_str("{\"frame_id\": \"bad\"}\n");
        fs::write(&manifest, text).unwrap();
        let err = load_episode(&path).unwrap_err();
        assert!(err.to_string().contains("manifest.jsonl:4"), "{err}");
    }

    #[test]
    fn missing_image_fails_unless_lazy() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_episode(dir.path(), &episode(6, 3)).unwrap();
        fs::remove_file(path.join("frames/f001.jpg")).unwrap();
        assert!(load_episode(&path).is_err());
        let lazy = load_episode_with(
            &path,
            LoadOptions {
                verify_frame_paths: false,
            },
        )
        .unwrap();
        assert_eq!(lazy.frames.len(), 3);
    }

    #[test]
    fn dataset_index_controls_order() {
        let dir = tempfile::tempdir().unwrap();
        for id in ["b", "a"] {
            let mut ep = episode(6, 1);
            ep.clip_id = id.into();
            ep.qa_items[0].clip_id = id.into();
            write_episode(dir.path(), &ep).unwrap();
        }
        let sorted = load_dataset(dir.path(), LoadOptions::default()).unwrap();
        assert_eq!(sorted[0].clip_id, "a");
        fs::write(
            dir.path().join(INDEX_FILE),
            "{\"clip_id\":\"b\"}\n{\"clip_id\":\"a\"}\n",
        )
        .unwrap();
        let indexed = load_dataset(dir.path(), LoadOptions::default()).unwrap();
        assert_eq!(indexed[0].clip_id, "b");
    }

    #[test]
    fn unordered_transcript_is_invalid() {
        let mut ep = episode(6, 0);
        ep.transcript.swap(1, 2);
        assert!(ep.check().is_err());
    }
}
