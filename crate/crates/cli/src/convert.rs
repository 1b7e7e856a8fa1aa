//! Converters from dataset-native layouts into the canonical JSON-lines
//! format plus a manifest.
//!
//! UT-Kinect layout: per-recording joint files `joints_sXX_eYY.txt` (each
//! line: frame number followed by 60 floats, the x/y/z of 20 joints) either
//! directly under the source directory or in a `joints/` subdirectory, and
//! an `actionLabel.txt` with per-recording sections listing
//! `<action>: <start> <end>` frame ranges (ranges marked NaN are skipped).
//!
//! JHMDB layout: a text export of the puppet annotations,
//! `<root>/<class>/<video>.txt`, one line per frame holding 30 floats
//! (x y for each of the 15 joints). Class names come from the directory
//! names, sorted.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use skelact::{SkeletonFrame, SkeletonSequence};

use crate::error::{HarnessError, Result};
use crate::manifest::{write_dataset, SplitSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SourceFormat {
    Utkinect,
    Jhmdb,
}

/// Canonical UT-Kinect action order (matches the dataset's label file).
pub const UTKINECT_CLASSES: [&str; 10] = [
    "walk",
    "sitDown",
    "standUp",
    "pickUp",
    "carry",
    "throw",
    "push",
    "pull",
    "waveHands",
    "clapHands",
];

pub fn convert_dataset(
    format: SourceFormat,
    src: &Path,
    out: &Path,
    train_fraction: f64,
    seed: u64,
) -> Result<PathBuf> {
    match format {
        SourceFormat::Utkinect => convert_utkinect(src, out, train_fraction, seed),
        SourceFormat::Jhmdb => convert_jhmdb(src, out, train_fraction, seed),
    }
}

fn parse_floats(line: &str) -> Vec<f64> {
    line.split_whitespace()
        .filter_map(|tok| tok.parse::<f64>().ok())
        .collect()
}

/// Frame-number-indexed joint rows of one UT-Kinect recording.
fn read_utkinect_joints(path: &Path) -> Result<BTreeMap<i64, Vec<[f64; 3]>>> {
    let text = std::fs::read_to_string(path)?;
    let mut frames = BTreeMap::new();
    for line in text.lines() {
        let vals = parse_floats(line);
        if vals.is_empty() {
            continue;
        }
        if vals.len() != 61 {
            return Err(HarnessError::UnrecognizedLayout(format!(
                "{}: expected 61 numbers per line (frame + 20 joints), got {}",
                path.display(),
                vals.len()
            )));
        }
        let frame_no = vals[0] as i64;
        let joints: Vec<[f64; 3]> = vals[1..]
            .chunks(3)
            .map(|c| [c[0], c[1], c[2]])
            .collect();
        frames.insert(frame_no, joints);
    }
    Ok(frames)
}

struct LabeledRange {
    recording: String,
    action: String,
    start: i64,
    end: i64,
}

fn read_action_labels(path: &Path) -> Result<Vec<LabeledRange>> {
    let text = std::fs::read_to_string(path).map_err(|_| {
        HarnessError::MissingLabels(format!("cannot read {}", path.display()))
    })?;
    let mut out = Vec::new();
    let mut recording = String::new();
    for raw in text.lines() {
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        if !line.contains(':') {
            recording = line.trim_end_matches(':').to_string();
            continue;
        }
        let (name, range) = line.split_once(':').unwrap();
        let parts: Vec<&str> = range.split_whitespace().collect();
        if parts.len() != 2 {
            continue;
        }
        let (start, end) = match (parts[0].parse::<i64>(), parts[1].parse::<i64>()) {
            (Ok(a), Ok(b)) if a <= b => (a, b),
            _ => continue, // NaN or malformed range: annotation missing
        };
        if recording.is_empty() {
            return Err(HarnessError::UnrecognizedLayout(
                "action range before any recording header".into(),
            ));
        }
        out.push(LabeledRange {
            recording: recording.clone(),
            action: name.trim().to_string(),
            start,
            end,
        });
    }
    Ok(out)
}

fn convert_utkinect(src: &Path, out: &Path, train_fraction: f64, seed: u64) -> Result<PathBuf> {
    let labels_path = ["actionLabel.txt", "actionLabel/actionLabel.txt"]
        .iter()
        .map(|p| src.join(p))
        .find(|p| p.exists())
        .ok_or_else(|| {
            HarnessError::MissingLabels(format!("no actionLabel.txt under {}", src.display()))
        })?;
    let ranges = read_action_labels(&labels_path)?;
    let classes: Vec<String> = UTKINECT_CLASSES.iter().map(|s| s.to_string()).collect();
    let class_of = |name: &str| -> Option<usize> {
        UTKINECT_CLASSES
            .iter()
            .position(|c| c.eq_ignore_ascii_case(name))
    };

    let mut sequences: Vec<(SkeletonSequence, String)> = Vec::new();
    let mut joints_cache: BTreeMap<String, BTreeMap<i64, Vec<[f64; 3]>>> = BTreeMap::new();
    for range in &ranges {
        let Some(label) = class_of(&range.action) else {
            continue;
        };
        if !joints_cache.contains_key(&range.recording) {
            let candidates = [
                src.join(format!("joints/joints_{}.txt", range.recording)),
                src.join(format!("joints_{}.txt", range.recording)),
            ];
            let Some(path) = candidates.iter().find(|p| p.exists()) else {
                continue; // recording without joint data
            };
            joints_cache.insert(range.recording.clone(), read_utkinect_joints(path)?);
        }
        let rows = &joints_cache[&range.recording];
        let frames: Vec<SkeletonFrame> = rows
            .range(range.start..=range.end)
            .enumerate()
            .map(|(i, (_, joints))| SkeletonFrame::new(i as u64, joints.clone()))
            .collect();
        if frames.is_empty() {
            continue;
        }
        let mut seq = SkeletonSequence::new(frames);
        seq.label = Some(label);
        seq.subject = Some(range.recording.clone());
        let name = format!("{}_{}", range.recording, range.action);
        sequences.push((seq, name));
    }
    if sequences.is_empty() {
        return Err(HarnessError::NoSequencesFound(src.to_path_buf()));
    }
    write_dataset(
        out,
        "utkinect20",
        &classes,
        &sequences,
        SplitSpec::Fraction {
            train_fraction,
            seed,
        },
    )
}

fn convert_jhmdb(src: &Path, out: &Path, train_fraction: f64, seed: u64) -> Result<PathBuf> {
    let mut class_dirs: Vec<PathBuf> = std::fs::read_dir(src)?
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| p.is_dir())
        .collect();
    class_dirs.sort();
    let classes: Vec<String> = class_dirs
        .iter()
        .map(|p| p.file_name().unwrap().to_string_lossy().to_string())
        .collect();
    let mut sequences: Vec<(SkeletonSequence, String)> = Vec::new();
    for (label, dir) in class_dirs.iter().enumerate() {
        let mut files: Vec<PathBuf> = std::fs::read_dir(dir)?
            .filter_map(|e| e.ok())
            .map(|e| e.path())
            .filter(|p| p.extension().map(|e| e == "txt" || e == "csv").unwrap_or(false))
            .collect();
        files.sort();
        for file in files {
            let text = std::fs::read_to_string(&file)?;
            let mut frames = Vec::new();
            for (k, line) in text.lines().enumerate() {
                let vals: Vec<f64> = line
                    .split(|c: char| c == ',' || c.is_whitespace())
                    .filter(|t| !t.is_empty())
                    .filter_map(|t| t.parse::<f64>().ok())
                    .collect();
                if vals.is_empty() {
                    continue;
                }
                if vals.len() != 30 {
                    return Err(HarnessError::UnrecognizedLayout(format!(
                        "{}: expected 30 numbers per line (x y for 15 joints), got {}",
                        file.display(),
                        vals.len()
                    )));
                }
                let joints: Vec<[f64; 3]> =
                    vals.chunks(2).map(|c| [c[0], c[1], 0.0]).collect();
                frames.push(SkeletonFrame::new(k as u64, joints));
            }
            if frames.is_empty() {
                continue;
            }
            let mut seq = SkeletonSequence::new(frames);
            seq.label = Some(label);
            let stem = file.file_stem().unwrap().to_string_lossy().to_string();
            let name = format!("{}_{}", classes[label], stem);
            sequences.push((seq, name));
        }
    }
    if sequences.is_empty() {
        return Err(HarnessError::NoSequencesFound(src.to_path_buf()));
    }
    write_dataset(
        out,
        "jhmdb15",
        &classes,
        &sequences,
        SplitSpec::Fraction {
            train_fraction,
            seed,
        },
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::manifest::load_dataset;
    use std::fmt::Write as _;

    /// Fabricate a tiny UT-Kinect-shaped tree: 1 recording, 2 actions.
    fn write_utkinect_fixture(dir: &Path) {
        let joints_dir = dir.join("joints");
        std::fs::create_dir_all(&joints_dir).unwrap();
        let mut joints = String::new();
        for frame in 100..160 {
            write!(joints, "{frame}").unwrap();
            for j in 0..20 {
                write!(
                    joints,
                    " {} {} {}",
                    j as f64 * 0.1,
                    frame as f64 * 0.01,
                    1.5
                )
                .unwrap();
            }
            joints.push('\n');
        }
        std::fs::write(joints_dir.join("joints_s01_e01.txt"), joints).unwrap();
        std::fs::write(
            dir.join("actionLabel.txt"),
            "s01_e01\nwalk: 100 120\nsitDown: 130 150\nstandUp: NaN NaN\n",
        )
        .unwrap();
    }

    #[test]
    fn utkinect_fixture_round_trip() {
        let src = tempfile::tempdir().unwrap();
        let out = tempfile::tempdir().unwrap();
        write_utkinect_fixture(src.path());
        let manifest_path =
            convert_dataset(SourceFormat::Utkinect, src.path(), out.path(), 0.5, 7).unwrap();
        let dataset = load_dataset(&manifest_path).unwrap();
        assert_eq!(dataset.classes.len(), 10);
        let total = dataset.train.len() + dataset.test.len();
        assert_eq!(total, 2); // the NaN range is skipped
        let all: Vec<_> = dataset.train.iter().chain(&dataset.test).collect();
        // walk: frames 100..=120 inclusive
        let walk = all.iter().find(|s| s.label == Some(0)).unwrap();
        assert_eq!(walk.len(), 21);
        assert_eq!(walk.frames[0].joints.len(), 20);
        // 6-decimal canonical encoding preserved the coordinates
        assert!((walk.frames[0].joints[3][0] - 0.3).abs() < 1e-9);
    }

    #[test]
    fn utkinect_empty_dir_fails() {
        let src = tempfile::tempdir().unwrap();
        let out = tempfile::tempdir().unwrap();
        std::fs::write(src.path().join("actionLabel.txt"), "s01_e01\n").unwrap();
        assert!(matches!(
            convert_dataset(SourceFormat::Utkinect, src.path(), out.path(), 0.5, 7),
            Err(HarnessError::NoSequencesFound(_))
        ));
    }

    #[test]
    fn utkinect_missing_labels_reported() {
        let src = tempfile::tempdir().unwrap();
        let out = tempfile::tempdir().unwrap();
        assert!(matches!(
            convert_dataset(SourceFormat::Utkinect, src.path(), out.path(), 0.5, 7),
            Err(HarnessError::MissingLabels(_))
        ));
    }

    fn write_jhmdb_fixture(dir: &Path) {
        for (class, vids) in [("catch", 2), ("golf", 1)] {
            let cdir = dir.join(class);
            std::fs::create_dir_all(&cdir).unwrap();
            for v in 0..vids {
                let mut text = String::new();
                for frame in 0..25 {
                    let coords: Vec<String> = (0..30)
                        .map(|i| format!("{}", frame as f64 + i as f64 * 0.5))
                        .collect();
                    text.push_str(&coords.join(" "));
                    text.push('\n');
                }
                std::fs::write(cdir.join(format!("video_{v}.txt")), text).unwrap();
            }
        }
    }

    #[test]
    fn jhmdb_fixture_round_trip() {
        let src = tempfile::tempdir().unwrap();
        let out = tempfile::tempdir().unwrap();
        write_jhmdb_fixture(src.path());
        let manifest_path =
            convert_dataset(SourceFormat::Jhmdb, src.path(), out.path(), 0.5, 7).unwrap();
        let dataset = load_dataset(&manifest_path).unwrap();
        assert_eq!(dataset.classes, vec!["catch".to_string(), "golf".to_string()]);
        assert_eq!(dataset.train.len() + dataset.test.len(), 3);
        let any = dataset.train.first().or(dataset.test.first()).unwrap();
        assert_eq!(any.frames[0].joints.len(), 15);
        assert_eq!(any.frames[0].joints[0][2], 0.0);
    }

    #[test]
    fn jhmdb_empty_dir_fails() {
        let src = tempfile::tempdir().unwrap();
        let out = tempfile::tempdir().unwrap();
        assert!(matches!(
            convert_dataset(SourceFormat::Jhmdb, src.path(), out.path(), 0.5, 7),
            Err(HarnessError::NoSequencesFound(_))
        ));
    }
}
