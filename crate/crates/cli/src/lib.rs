//! Harness around the recognition library: dataset manifests, converters,
//! synthetic data, and evaluation with the online recognition metrics.

pub mod convert;
pub mod error;
pub mod evalrep;
pub mod manifest;
pub mod synth;

pub use convert::{convert_dataset, SourceFormat};
pub use error::{HarnessError, Result};
pub use evalrep::{eval_offline, eval_online, ConfusionMatrix, EvalMode, EvalReport};
pub use manifest::{load_dataset, DatasetManifest, LoadedDataset, SequenceEntry, SplitSpec};
pub use synth::{generate_synthetic, write_synthetic, SynthConfig};

use skelact::{assemble_sequence_tensor, resample_sequence, FeatureSchema, SequenceFeatureTensor, SkeletonSequence};

/// Resample-and-extract every sequence into a labeled training tensor.
pub fn sequences_to_tensors(
    sequences: &[SkeletonSequence],
    schema: &FeatureSchema,
    n: usize,
) -> Result<Vec<(SequenceFeatureTensor, usize)>> {
    sequences
        .iter()
        .map(|seq| {
            let label = seq.label.ok_or_else(|| {
                HarnessError::MissingLabels(format!(
                    "unlabeled sequence {}",
                    seq.meta.as_deref().unwrap_or("<memory>")
                ))
            })?;
            let resampled = resample_sequence(seq, n)?;
            let tensor = assemble_sequence_tensor(&resampled.frames, schema, n)?;
            Ok((tensor, label))
        })
        .collect()
}
