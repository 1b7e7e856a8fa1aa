//! Synthetic skeleton datasets: per-class parametric joint oscillations on
//! top of a deterministic base pose, with optional white positional noise.
//!
//! In `long_action` mode the class-specific motion is confined to the first
//! third of each sequence; the rest is idle sway whose parameters are
//! shared by all classes, so nothing after the first third carries class
//! information.

use std::f64::consts::TAU;
use std::path::{Path, PathBuf};

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use skelact::{SkeletonFrame, SkeletonSequence, Topology};

use crate::error::Result;
use crate::manifest::{write_dataset, SplitSpec};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SynthConfig {
    pub num_classes: usize,
    pub per_class: usize,
    pub frames_min: usize,
    pub frames_max: usize,
    pub noise: f64,
    pub seed: u64,
    pub long_action: bool,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            num_classes: 5,
            per_class: 40,
            frames_min: 32,
            frames_max: 96,
            noise: 0.05,
            seed: 7,
            long_action: false,
        }
    }
}

pub fn synth_class_names(num_classes: usize) -> Vec<String> {
    (0..num_classes).map(|c| format!("class_{c}")).collect()
}

/// Deterministic rest pose: walk the tree from the root, placing each child
/// one unit from its parent in a direction that cycles around a golden-angle
/// fan (flattened to the plane for 2D topologies).
pub fn base_pose(topology: &Topology) -> Vec<[f64; 3]> {
    let j = topology.joint_count();
    let adj = topology.adjacency();
    let mut pose = vec![[0.0; 3]; j];
    let mut placed = vec![false; j];
    placed[topology.root_joint] = true;
    let mut queue = std::collections::VecDeque::from([topology.root_joint]);
    let mut counter = 0usize;
    while let Some(u) = queue.pop_front() {
        for &v in &adj[u] {
            if placed[v] {
                continue;
            }
            let angle = 2.399_963_229_728_653 * counter as f64;
            let lift = if topology.dim == 3 {
                0.35 * ((counter as f64) * 1.3).sin()
            } else {
                0.0
            };
            let dir = [angle.cos(), angle.sin(), lift];
            let norm = (dir[0] * dir[0] + dir[1] * dir[1] + dir[2] * dir[2]).sqrt();
            pose[v] = [
                pose[u][0] + dir[0] / norm,
                pose[u][1] + dir[1] / norm,
                pose[u][2] + dir[2] / norm,
            ];
            placed[v] = true;
            counter += 1;
            queue.push_back(v);
        }
    }
    pose
}

struct Oscillator {
    omega: f64,
    amplitude: Vec<f64>,
    phase: Vec<f64>,
    direction: Vec<[f64; 3]>,
}

impl Oscillator {
    fn draw(rng: &mut ChaCha20Rng, joints: usize, dim: u8, amp_range: (f64, f64)) -> Oscillator {
        let omega = rng.gen_range(0.15..0.65);
        let amplitude = (0..joints)
            .map(|_| rng.gen_range(amp_range.0..amp_range.1))
            .collect();
        let phase = (0..joints).map(|_| rng.gen_range(0.0..TAU)).collect();
        let direction = (0..joints)
            .map(|_| {
                let theta = rng.gen_range(0.0..TAU);
                let z: f64 = if dim == 3 { rng.gen_range(-0.7..0.7) } else { 0.0 };
                let planar = (1.0 - z * z).sqrt();
                [planar * theta.cos(), planar * theta.sin(), z]
            })
            .collect();
        Oscillator {
            omega,
            amplitude,
            phase,
            direction,
        }
    }

    fn offset(&self, joint: usize, t: f64, phase_shift: f64) -> [f64; 3] {
        let s = self.amplitude[joint] * (self.omega * t + self.phase[joint] + phase_shift).sin();
        [
            s * self.direction[joint][0],
            s * self.direction[joint][1],
            s * self.direction[joint][2],
        ]
    }
}

/// Generate the labeled sequences. Same config and topology: bit-identical
/// output.
pub fn generate_synthetic(
    config: &SynthConfig,
    topology: &Topology,
) -> Result<Vec<SkeletonSequence>> {
    let mut rng = ChaCha20Rng::seed_from_u64(config.seed);
    let j = topology.joint_count();
    let pose = base_pose(topology);
    // class-specific motion is strong; idle sway is weak and shared
    let class_motion: Vec<Oscillator> = (0..config.num_classes)
        .map(|_| Oscillator::draw(&mut rng, j, topology.dim, (0.25, 0.65)))
        .collect();
    let idle = Oscillator::draw(&mut rng, j, topology.dim, (0.02, 0.06));
    let gauss = Normal::new(0.0, 1.0).expect("unit normal");

    let mut sequences = Vec::with_capacity(config.num_classes * config.per_class);
    for class in 0..config.num_classes {
        for _ in 0..config.per_class {
            let frames_len = if config.frames_max > config.frames_min {
                rng.gen_range(config.frames_min..=config.frames_max)
            } else {
                config.frames_min
            };
            let phase_shift = rng.gen_range(0.0..TAU);
            let active_until = if config.long_action {
                (frames_len / 3).max(1)
            } else {
                frames_len
            };
            let frames = (0..frames_len)
                .map(|k| {
                    let t = k as f64;
                    let joints = (0..j)
                        .map(|joint| {
                            let mut g = pose[joint];
                            let sway = idle.offset(joint, t, phase_shift);
                            g[0] += sway[0];
                            g[1] += sway[1];
                            g[2] += sway[2];
                            if k < active_until {
                                let act = class_motion[class].offset(joint, t, phase_shift);
                                g[0] += act[0];
                                g[1] += act[1];
                                g[2] += act[2];
                            }
                            for axis in 0..if topology.dim == 3 { 3 } else { 2 } {
                                g[axis] += config.noise * gauss.sample(&mut rng);
                            }
                            g
                        })
                        .collect();
                    SkeletonFrame::new(k as u64, joints)
                })
                .collect();
            let mut seq = SkeletonSequence::new(frames);
            seq.label = Some(class);
            seq.subject = Some("synth".into());
            sequences.push(seq);
        }
    }
    Ok(sequences)
}

/// Generate and persist a synthetic dataset (sequences + manifest with a
/// stratified fraction split). Returns the manifest path.
pub fn write_synthetic(
    config: &SynthConfig,
    topology: &Topology,
    topology_ref: &str,
    out_dir: &Path,
    train_fraction: f64,
) -> Result<PathBuf> {
    let sequences = generate_synthetic(config, topology)?;
    let named: Vec<(SkeletonSequence, String)> = sequences
        .into_iter()
        .enumerate()
        .map(|(i, s)| {
            let name = format!("class{}_seq{:03}", s.label.unwrap(), i);
            (s, name)
        })
        .collect();
    write_dataset(
        out_dir,
        topology_ref,
        &synth_class_names(config.num_classes),
        &named,
        SplitSpec::Fraction {
            train_fraction,
            seed: config.seed,
        },
    )
}
