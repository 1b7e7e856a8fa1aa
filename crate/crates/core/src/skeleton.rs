//! Frames, sequences and the small per-frame utilities shared by every
//! stage of the pipeline.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One timestamped skeleton observation. 2D sources carry z = 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkeletonFrame {
    pub index: u64,
    pub joints: Vec<[f64; 3]>,
}

impl SkeletonFrame {
    pub fn new(index: u64, joints: Vec<[f64; 3]>) -> Self {
        SkeletonFrame { index, joints }
    }
}

/// An ordered run of frames, optionally labeled. Frames parsed from a
/// stream have strictly increasing indices; resampling may repeat frames
/// when stretching a short sequence, in which case indices repeat too.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkeletonSequence {
    pub frames: Vec<SkeletonFrame>,
    pub label: Option<usize>,
    pub subject: Option<String>,
    pub meta: Option<String>,
}

impl SkeletonSequence {
    pub fn new(frames: Vec<SkeletonFrame>) -> Self {
        SkeletonSequence {
            frames,
            label: None,
            subject: None,
            meta: None,
        }
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }
}

/// One record of a live skeleton stream.
#[derive(Debug, Clone, PartialEq)]
pub enum StreamEvent {
    Frame(SkeletonFrame),
    EndOfStream,
}

/// Pick exactly `n` frames at uniformly spaced real-valued positions over
/// `[0, K-1]`, rounding each position to the nearest index with ties toward
/// the lower index. No interpolation: short sequences repeat frames.
pub fn resample_sequence(seq: &SkeletonSequence, n: usize) -> Result<SkeletonSequence> {
    if seq.is_empty() {
        return Err(Error::EmptyInput("resample_sequence needs at least one frame"));
    }
    if n == 0 {
        return Err(Error::InvalidArgument("resample target must be positive".into()));
    }
    let k = seq.len();
    let frames = (0..n)
        .map(|i| {
            let pos = if n == 1 {
                0.0
            } else {
                i as f64 * (k - 1) as f64 / (n - 1) as f64
            };
            // round half down
            let idx = (pos - 0.5).ceil() as usize;
            seq.frames[idx.min(k - 1)].clone()
        })
        .collect();
    Ok(SkeletonSequence {
        frames,
        label: seq.label,
        subject: seq.subject.clone(),
        meta: seq.meta.clone(),
    })
}

/// Subtract the root joint from every joint of the frame. Optional
/// preprocessing (off by default): distances and angles are unaffected,
/// motion channels become root-relative.
pub fn center_on_root(frame: &SkeletonFrame, root_joint: usize) -> SkeletonFrame {
    let root = frame.joints[root_joint];
    SkeletonFrame {
        index: frame.index,
        joints: frame
            .joints
            .iter()
            .map(|g| [g[0] - root[0], g[1] - root[1], g[2] - root[2]])
            .collect(),
    }
}

/// Apply `g -> R g + t` to every joint. `rotation` must be orthonormal with
/// determinant +1 (within 1e-9).
pub fn apply_rigid_transform(
    frame: &SkeletonFrame,
    rotation: &[[f64; 3]; 3],
    translation: &[f64; 3],
) -> Result<SkeletonFrame> {
    if !is_proper_rotation(rotation, 1e-9) {
        return Err(Error::NonOrthonormalRotation);
    }
    let joints = frame
        .joints
        .iter()
        .map(|g| {
            let mut out = [0.0; 3];
            for (r, row) in rotation.iter().enumerate() {
                out[r] = row[0] * g[0] + row[1] * g[1] + row[2] * g[2] + translation[r];
            }
            out
        })
        .collect();
    Ok(SkeletonFrame {
        index: frame.index,
        joints,
    })
}

fn is_proper_rotation(r: &[[f64; 3]; 3], tol: f64) -> bool {
    // R^T R == I
    for i in 0..3 {
        for j in 0..3 {
            let dot: f64 = (0..3).map(|k| r[k][i] * r[k][j]).sum();
            let expect = if i == j { 1.0 } else { 0.0 };
            if (dot - expect).abs() > tol {
                return false;
            }
        }
    }
    let det = r[0][0] * (r[1][1] * r[2][2] - r[1][2] * r[2][1])
        - r[0][1] * (r[1][0] * r[2][2] - r[1][2] * r[2][0])
        + r[0][2] * (r[1][0] * r[2][1] - r[1][1] * r[2][0]);
    (det - 1.0).abs() <= tol
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seq_of(k: usize) -> SkeletonSequence {
        let frames = (0..k)
            .map(|i| SkeletonFrame::new(i as u64, vec![[i as f64, 0.0, 0.0]]))
            .collect();
        SkeletonSequence::new(frames)
    }

    #[test]
    fn resample_32_to_16() {
        let seq = seq_of(32);
        let out = resample_sequence(&seq, 16).unwrap();
        let picked: Vec<u64> = out.frames.iter().map(|f| f.index).collect();
        // round(i * 31 / 15) with ties toward the lower index
        assert_eq!(
            picked,
            vec![0, 2, 4, 6, 8, 10, 12, 14, 17, 19, 21, 23, 25, 27, 29, 31]
        );
    }

    #[test]
    fn resample_ties_round_toward_lower_index() {
        // K=4, n=3: grid positions 0, 1.5, 3 -> the tie picks index 1
        let out = resample_sequence(&seq_of(4), 3).unwrap();
        let picked: Vec<u64> = out.frames.iter().map(|f| f.index).collect();
        assert_eq!(picked, vec![0, 1, 3]);
    }

    #[test]
    fn resample_identity_when_sizes_match() {
        let seq = seq_of(16);
        let out = resample_sequence(&seq, 16).unwrap();
        assert_eq!(out, seq);
    }

    #[test]
    fn resample_repeats_single_frame() {
        let seq = seq_of(1);
        let out = resample_sequence(&seq, 16).unwrap();
        assert_eq!(out.len(), 16);
        assert!(out.frames.iter().all(|f| f == &seq.frames[0]));
    }

    #[test]
    fn rigid_identity_is_noop() {
        let frame = SkeletonFrame::new(0, vec![[1.0, 2.0, 3.0], [0.5, -1.0, 0.0]]);
        let eye = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
        let out = apply_rigid_transform(&frame, &eye, &[0.0; 3]).unwrap();
        assert_eq!(out, frame);
    }

    #[test]
    fn rigid_quarter_turn_about_z() {
        let frame = SkeletonFrame::new(0, vec![[1.0, 0.0, 0.0]]);
        let rot = [[0.0, -1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 1.0]];
        let out = apply_rigid_transform(&frame, &rot, &[0.0; 3]).unwrap();
        let g = out.joints[0];
        assert!((g[0] - 0.0).abs() < 1e-12);
        assert!((g[1] - 1.0).abs() < 1e-12);
        assert!((g[2] - 0.0).abs() < 1e-12);
    }

    #[test]
    fn translation_preserves_pairwise_distances() {
        let frame = SkeletonFrame::new(
            0,
            vec![[1.0, 2.0, 3.0], [4.0, 5.0, 6.0], [-2.0, 0.5, 9.0]],
        );
        let eye = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
        let out = apply_rigid_transform(&frame, &eye, &[5.0, 5.0, 5.0]).unwrap();
        for i in 0..3 {
            for j in (i + 1)..3 {
                let d0 = dist(frame.joints[i], frame.joints[j]);
                let d1 = dist(out.joints[i], out.joints[j]);
                assert!((d0 - d1).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn non_orthonormal_rotation_rejected() {
        let frame = SkeletonFrame::new(0, vec![[1.0, 0.0, 0.0]]);
        let bad = [[2.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
        assert!(matches!(
            apply_rigid_transform(&frame, &bad, &[0.0; 3]),
            Err(Error::NonOrthonormalRotation)
        ));
        // reflection: orthonormal but determinant -1
        let refl = [[-1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
        assert!(matches!(
            apply_rigid_transform(&frame, &refl, &[0.0; 3]),
            Err(Error::NonOrthonormalRotation)
        ));
    }

    fn dist(a: [f64; 3], b: [f64; 3]) -> f64 {
        ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
    }

    #[test]
    fn root_centering_zeroes_the_root() {
        let frame = SkeletonFrame::new(
            3,
            vec![[1.0, 2.0, 3.0], [4.0, 6.0, 8.0], [-1.0, 0.0, 1.0]],
        );
        let centered = center_on_root(&frame, 1);
        assert_eq!(centered.joints[1], [0.0, 0.0, 0.0]);
        assert_eq!(centered.joints[0], [-3.0, -4.0, -5.0]);
        assert_eq!(centered.index, 3);
    }

    proptest::proptest! {
        /// resampling to the original length is the identity
        #[test]
        fn resample_to_same_length_is_identity(k in 1usize..80) {
            let seq = seq_of(k);
            let out = resample_sequence(&seq, k).unwrap();
            proptest::prop_assert_eq!(out, seq);
        }

        /// ceil division: the output length always matches the request
        #[test]
        fn resample_always_returns_n(k in 1usize..40, n in 1usize..40) {
            let out = resample_sequence(&seq_of(k), n).unwrap();
            proptest::prop_assert_eq!(out.len(), n);
            // positions never run backwards
            proptest::prop_assert!(out.frames.windows(2).all(|w| w[0].index <= w[1].index));
        }
    }
}
