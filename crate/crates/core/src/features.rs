//! Per-frame feature extraction and assembly of the fixed-shape classifier
//! input tensor.
//!
//! Channel layout per frame, in schema order:
//! `[JCD | orientations | jl | ll | jp | lp | pp | Y_slow | Y_fast]`.
//! Degenerate geometry yields 0 instead of an error so extraction never
//! halts mid-stream.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{
    distance, joint_line_distance, joint_orientation, joint_plane_distance, line_line_angle,
    line_plane_angle, plane_plane_angle,
};
use crate::schema::FeatureSchema;
use crate::skeleton::SkeletonFrame;

pub const TENSOR_LAYOUT_VERSION: u32 = 1;

/// Fixed-shape `frames x channels` feature block, row-major by frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceFeatureTensor {
    pub frames: usize,
    pub channels: usize,
    pub data: Vec<f64>,
    pub layout_version: u32,
}

impl SequenceFeatureTensor {
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<SequenceFeatureTensor> {
        let frames = rows.len();
        if frames == 0 {
            return Err(Error::EmptyInput("tensor needs at least one frame"));
        }
        let channels = rows[0].len();
        if rows.iter().any(|r| r.len() != channels) {
            return Err(Error::ShapeMismatch("ragged tensor rows".into()));
        }
        Ok(SequenceFeatureTensor {
            frames,
            channels,
            data: rows.into_iter().flatten().collect(),
            layout_version: TENSOR_LAYOUT_VERSION,
        })
    }

    #[inline]
    pub fn at(&self, frame: usize, channel: usize) -> f64 {
        self.data[frame * self.channels + channel]
    }

    pub fn row(&self, frame: usize) -> &[f64] {
        &self.data[frame * self.channels..(frame + 1) * self.channels]
    }

    /// Frame-major CSV dump for debugging.
    pub fn write_csv<W: Write>(&self, writer: &mut W) -> Result<()> {
        for t in 0..self.frames {
            let row: Vec<String> = self.row(t).iter().map(|v| v.to_string()).collect();
            writeln!(writer, "{}", row.join(","))?;
        }
        Ok(())
    }
}

/// Joint collection distances: the lower triangle of the pairwise distance
/// matrix, row-major with row j from the second joint down, so the entry
/// order is (2,1), (3,1), (3,2), (4,1), ...
pub fn jcd(frame: &SkeletonFrame) -> Vec<f64> {
    let j = frame.joints.len();
    let mut out = Vec::with_capacity(j * (j - 1) / 2);
    for row in 1..j {
        for col in 0..row {
            out.push(distance(frame.joints[row], frame.joints[col]));
        }
    }
    out
}

/// Frame-difference motion rows at temporal scale `s`: row k holds the
/// flattened `G[k+s] - G[k]`; the last `s` rows are zero so every output
/// has exactly `frames.len()` rows.
pub fn motion_features(frames: &[SkeletonFrame], scale: usize) -> Result<Vec<Vec<f64>>> {
    if scale == 0 {
        return Err(Error::InvalidArgument("motion scale must be positive".into()));
    }
    let n = frames.len();
    if n < scale + 1 {
        return Err(Error::ShapeMismatch(format!(
            "motion scale {scale} needs at least {} frames, got {n}",
            scale + 1
        )));
    }
    let width = frames[0].joints.len() * 3;
    let mut rows = Vec::with_capacity(n);
    for k in 0..n {
        if k + scale < n {
            let mut row = Vec::with_capacity(width);
            for (a, b) in frames[k + scale].joints.iter().zip(&frames[k].joints) {
                row.push(a[0] - b[0]);
                row.push(a[1] - b[1]);
                row.push(a[2] - b[2]);
            }
            rows.push(row);
        } else {
            rows.push(vec![0.0; width]);
        }
    }
    Ok(rows)
}

/// All geometric channels of one frame, in schema order. Degenerate
/// features come out as 0.
pub fn frame_features(frame: &SkeletonFrame, schema: &FeatureSchema) -> Vec<f64> {
    let g = &frame.joints;
    let mut out = jcd(frame);
    out.reserve(schema.per_frame_dim - out.len());
    for l in &schema.lines {
        match joint_orientation(g[l.a()], g[l.b()]) {
            Ok(u) => out.extend_from_slice(&u),
            Err(_) => out.extend_from_slice(&[0.0; 3]),
        }
    }
    for &(jt, l) in &schema.jl_pairs {
        out.push(joint_line_distance(g[jt], g[l.a()], g[l.b()]).unwrap_or(0.0));
    }
    for &(l1, l2) in &schema.ll_pairs {
        out.push(
            line_line_angle(g[l1.a()], g[l1.b()], g[l2.a()], g[l2.b()]).unwrap_or(0.0),
        );
    }
    for &(jt, p) in &schema.jp_pairs {
        out.push(joint_plane_distance(g[jt], g[p.0[0]], g[p.0[1]], g[p.0[2]]).unwrap_or(0.0));
    }
    for &(l, p) in &schema.lp_pairs {
        out.push(
            line_plane_angle(g[l.a()], g[l.b()], g[p.0[0]], g[p.0[1]], g[p.0[2]])
                .unwrap_or(0.0),
        );
    }
    for &(p1, p2) in &schema.pp_pairs {
        out.push(
            plane_plane_angle(
                g[p1.0[0]],
                g[p1.0[1]],
                g[p1.0[2]],
                g[p2.0[0]],
                g[p2.0[1]],
                g[p2.0[2]],
            )
            .unwrap_or(0.0),
        );
    }
    out
}

/// Assemble the classifier input for exactly `n` frames: geometric channels
/// followed by the slow (s=1) and fast (s=2) motion rows.
pub fn assemble_sequence_tensor(
    frames: &[SkeletonFrame],
    schema: &FeatureSchema,
    n: usize,
) -> Result<SequenceFeatureTensor> {
    if frames.len() != n {
        return Err(Error::ShapeMismatch(format!(
            "expected exactly {n} frames, got {}",
            frames.len()
        )));
    }
    let j = schema.topology.joint_count();
    for f in frames {
        if f.joints.len() != j {
            return Err(Error::JointCountMismatch {
                expected: j,
                got: f.joints.len(),
            });
        }
    }
    let centered: Option<Vec<SkeletonFrame>> = schema.center_root.then(|| {
        frames
            .iter()
            .map(|f| crate::skeleton::center_on_root(f, schema.topology.root_joint))
            .collect()
    });
    let frames: &[SkeletonFrame] = centered.as_deref().unwrap_or(frames);
    let slow = motion_features(frames, 1)?;
    let fast = motion_features(frames, 2)?;
    let rows: Vec<Vec<f64>> = frames
        .iter()
        .enumerate()
        .map(|(k, f)| {
            let mut row = frame_features(f, schema);
            row.extend_from_slice(&slow[k]);
            row.extend_from_slice(&fast[k]);
            row
        })
        .collect();
    let tensor = SequenceFeatureTensor::from_rows(rows)?;
    debug_assert_eq!(tensor.channels, schema.channels_with_motion());
    Ok(tensor)
}
