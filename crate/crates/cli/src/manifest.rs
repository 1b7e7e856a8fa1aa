//! Dataset manifests: class names, sequence files with labels, and the
//! train/test split specification.

use std::io::BufReader;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use skelact::stream::read_sequence;
use skelact::{SkeletonSequence, Topology};

use crate::error::{HarnessError, Result};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SequenceEntry {
    pub path: String,
    pub label: usize,
    #[serde(default)]
    pub subject: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum SplitSpec {
    /// Stratified seeded split by fraction of each class sent to training.
    Fraction { train_fraction: f64, seed: u64 },
    /// Explicit index lists into `sequences`.
    Explicit { train: Vec<usize>, test: Vec<usize> },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetManifest {
    /// Builtin topology name or a path relative to the manifest.
    pub topology: String,
    pub classes: Vec<String>,
    pub sequences: Vec<SequenceEntry>,
    pub split: SplitSpec,
}

impl DatasetManifest {
    pub fn load(path: &Path) -> Result<DatasetManifest> {
        let text = std::fs::read_to_string(path)?;
        let manifest: DatasetManifest = serde_json::from_str(&text)
            .map_err(|e| HarnessError::Manifest(format!("{}: {e}", path.display())))?;
        manifest.validate()?;
        Ok(manifest)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.validate()?;
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if self.classes.is_empty() {
            return Err(HarnessError::Manifest("no classes declared".into()));
        }
        for entry in &self.sequences {
            if entry.label >= self.classes.len() {
                return Err(HarnessError::Manifest(format!(
                    "label {} out of range for {} classes ({})",
                    entry.label,
                    self.classes.len(),
                    entry.path
                )));
            }
        }
        if let SplitSpec::Explicit { train, test } = &self.split {
            for &i in train.iter().chain(test) {
                if i >= self.sequences.len() {
                    return Err(HarnessError::Manifest(format!(
                        "split index {i} out of range"
                    )));
                }
            }
            if train.iter().any(|i| test.contains(i)) {
                return Err(HarnessError::Manifest(
                    "train and test splits overlap".into(),
                ));
            }
        }
        Ok(())
    }

    /// Resolve the split into (train, test) index lists.
    pub fn resolve_split(&self) -> Result<(Vec<usize>, Vec<usize>)> {
        match &self.split {
            SplitSpec::Explicit { train, test } => Ok((train.clone(), test.clone())),
            SplitSpec::Fraction {
                train_fraction,
                seed,
            } => {
                if !(0.0..=1.0).contains(train_fraction) {
                    return Err(HarnessError::Manifest(format!(
                        "train fraction {train_fraction} out of range"
                    )));
                }
                let mut rng = ChaCha20Rng::seed_from_u64(*seed);
                let mut per_class: Vec<Vec<usize>> = vec![Vec::new(); self.classes.len()];
                for (i, e) in self.sequences.iter().enumerate() {
                    per_class[e.label].push(i);
                }
                let mut train = Vec::new();
                let mut test = Vec::new();
                for mut members in per_class {
                    members.shuffle(&mut rng);
                    let m = members.len();
                    if m == 0 {
                        continue;
                    }
                    let want = (train_fraction * m as f64).round() as usize;
                    let take = if m == 1 {
                        usize::from(*train_fraction >= 0.5)
                    } else {
                        want.clamp(1, m - 1)
                    };
                    train.extend_from_slice(&members[..take]);
                    test.extend_from_slice(&members[take..]);
                }
                train.sort_unstable();
                test.sort_unstable();
                Ok((train, test))
            }
        }
    }

    /// Topology referenced by the manifest, paths taken relative to it.
    pub fn resolve_topology(&self, manifest_path: &Path) -> Result<Topology> {
        let base = manifest_path.parent().unwrap_or(Path::new("."));
        let candidate = base.join(&self.topology);
        let spec = if candidate.exists() {
            candidate.to_string_lossy().to_string()
        } else {
            self.topology.clone()
        };
        Ok(Topology::resolve(&spec)?)
    }
}

/// A manifest with its sequences loaded and split.
pub struct LoadedDataset {
    pub topology: Topology,
    pub classes: Vec<String>,
    pub train: Vec<SkeletonSequence>,
    pub test: Vec<SkeletonSequence>,
}

pub fn load_sequence_file(path: &Path, topology: &Topology) -> Result<SkeletonSequence> {
    let file = std::fs::File::open(path)?;
    let mut seq = read_sequence(BufReader::new(file), topology)?;
    seq.meta = Some(path.display().to_string());
    Ok(seq)
}

/// Load every sequence referenced by the manifest and split it.
pub fn load_dataset(manifest_path: &Path) -> Result<LoadedDataset> {
    let manifest = DatasetManifest::load(manifest_path)?;
    let topology = manifest.resolve_topology(manifest_path)?;
    let base = manifest_path.parent().unwrap_or(Path::new("."));
    let (train_idx, test_idx) = manifest.resolve_split()?;
    let load = |indices: &[usize]| -> Result<Vec<SkeletonSequence>> {
        indices
            .iter()
            .map(|&i| {
                let entry = &manifest.sequences[i];
                let mut seq = load_sequence_file(&base.join(&entry.path), &topology)?;
                seq.label = Some(entry.label);
                seq.subject = entry.subject.clone();
                Ok(seq)
            })
            .collect()
    };
    Ok(LoadedDataset {
        train: load(&train_idx)?,
        test: load(&test_idx)?,
        topology,
        classes: manifest.classes,
    })
}

/// Write sequences plus a manifest under `out_dir` (sequences in a
/// `sequences/` subdirectory). Returns the manifest path.
pub fn write_dataset(
    out_dir: &Path,
    topology_name: &str,
    classes: &[String],
    sequences: &[(SkeletonSequence, String)],
    split: SplitSpec,
) -> Result<PathBuf> {
    let seq_dir = out_dir.join("sequences");
    std::fs::create_dir_all(&seq_dir)?;
    let mut entries = Vec::with_capacity(sequences.len());
    for (seq, name) in sequences {
        let rel = format!("sequences/{name}.jsonl");
        let mut file = std::io::BufWriter::new(std::fs::File::create(out_dir.join(&rel))?);
        skelact::stream::write_sequence(&mut file, seq)?;
        entries.push(SequenceEntry {
            path: rel,
            label: seq.label.ok_or_else(|| {
                HarnessError::MissingLabels(format!("sequence {name} has no label"))
            })?,
            subject: seq.subject.clone(),
        });
    }
    let manifest = DatasetManifest {
        topology: topology_name.to_string(),
        classes: classes.to_vec(),
        sequences: entries,
        split,
    };
    let path = out_dir.join("manifest.json");
    manifest.save(&path)?;
    Ok(path)
}
