//! Feature schema: which lines, planes and combinations feed the per-frame
//! geometric channels.
//!
//! Line selection follows three rules over the topology tree: (1) every
//! adjacency edge, (2) every pair of an end joint with a joint exactly two
//! hops away, (3) every pair of end joints. Planes are exactly the five
//! declared body triples (none in 2D).
//!
//! The pairing policy for the combined features is:
//! - `jl_pairs`: each end joint with each enumerated line not containing it;
//! - `ll_pairs`: all unordered pairs of enumerated lines (optionally capped);
//! - `jp_pairs`: each end joint with each plane not containing it;
//! - `lp_pairs`: each rule-3 line (end-joint pair) with each plane;
//! - `pp_pairs`: all unordered plane pairs.
//!
//! When the topology declares a left/right mirror map and symmetry
//! deduplication is on (the default), every feature list drops the
//! lexicographically larger member of each mirrored feature pair. The full
//! schema serializes to JSON so a trained model's channel layout is
//! reproducible and overridable.

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::topology::Topology;

pub const SCHEMA_LAYOUT_VERSION: u32 = 1;

/// An unordered joint pair, stored with `a < b`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Line(pub [usize; 2]);

impl Line {
    pub fn new(a: usize, b: usize) -> Line {
        Line([a.min(b), a.max(b)])
    }

    pub fn a(&self) -> usize {
        self.0[0]
    }

    pub fn b(&self) -> usize {
        self.0[1]
    }

    pub fn contains(&self, joint: usize) -> bool {
        self.0[0] == joint || self.0[1] == joint
    }
}

/// A body plane, kept in declared vertex order (orientation matters for
/// the signed distance and the normal direction).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Plane(pub [usize; 3]);

impl Plane {
    pub fn contains(&self, joint: usize) -> bool {
        self.0.contains(&joint)
    }

    fn joint_set(&self) -> [usize; 3] {
        let mut s = self.0;
        s.sort_unstable();
        s
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SchemaConfig {
    /// Drop the lexicographically larger of each mirrored feature pair.
    pub dedup_symmetry: bool,
    /// Hard cap on `ll_pairs` after deduplication (they grow quadratically).
    pub max_ll_pairs: Option<usize>,
    /// Subtract the root joint from every frame before extraction.
    pub center_root: bool,
}

impl Default for SchemaConfig {
    fn default() -> Self {
        SchemaConfig {
            dedup_symmetry: true,
            max_ll_pairs: None,
            center_root: false,
        }
    }
}

/// The complete, ordered description of one frame's geometric channels.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FeatureSchema {
    pub layout_version: u32,
    pub topology: Topology,
    /// Root-centering preprocessing recorded with the schema so training
    /// and inference agree.
    #[serde(default)]
    pub center_root: bool,
    pub lines: Vec<Line>,
    pub planes: Vec<Plane>,
    pub jl_pairs: Vec<(usize, Line)>,
    pub ll_pairs: Vec<(Line, Line)>,
    pub jp_pairs: Vec<(usize, Plane)>,
    pub lp_pairs: Vec<(Line, Plane)>,
    pub pp_pairs: Vec<(Plane, Plane)>,
    pub per_frame_dim: usize,
}

impl FeatureSchema {
    /// Channels per frame: JCD lower triangle, 3 orientation components per
    /// line, then one channel per pair.
    pub fn computed_per_frame_dim(&self) -> usize {
        let j = self.topology.joint_count();
        j * (j - 1) / 2
            + 3 * self.lines.len()
            + self.jl_pairs.len()
            + self.ll_pairs.len()
            + self.jp_pairs.len()
            + self.lp_pairs.len()
            + self.pp_pairs.len()
    }

    /// Total channels per frame once the two motion scales are appended.
    pub fn channels_with_motion(&self) -> usize {
        self.per_frame_dim + 6 * self.topology.joint_count()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<FeatureSchema> {
        let schema: FeatureSchema = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        if schema.layout_version != SCHEMA_LAYOUT_VERSION {
            return Err(Error::VersionMismatch {
                found: schema.layout_version,
                supported: SCHEMA_LAYOUT_VERSION,
            });
        }
        if schema.per_frame_dim != schema.computed_per_frame_dim() {
            return Err(Error::ConfigMismatch(format!(
                "schema declares {} channels but its lists imply {}",
                schema.per_frame_dim,
                schema.computed_per_frame_dim()
            )));
        }
        schema.topology.validate()?;
        Ok(schema)
    }
}

/// Enumerate the selected lines: adjacency edges, end-joint two-hop pairs,
/// and end-joint pairs; deduplicated and sorted.
pub fn enumerate_lines(topology: &Topology) -> Vec<Line> {
    let mut set: BTreeSet<Line> = BTreeSet::new();
    for &(a, b) in &topology.edges {
        set.insert(Line::new(a, b));
    }
    for &end in &topology.end_joints {
        for far in topology.two_hop_neighbors(end) {
            set.insert(Line::new(end, far));
        }
    }
    for (i, &a) in topology.end_joints.iter().enumerate() {
        for &b in &topology.end_joints[i + 1..] {
            set.insert(Line::new(a, b));
        }
    }
    set.into_iter().collect()
}

/// The declared body planes; empty for 2D topologies.
pub fn enumerate_planes(topology: &Topology) -> Vec<Plane> {
    topology.plane_triples.iter().map(|&t| Plane(t)).collect()
}

/// Rule-3 lines only (both endpoints are end joints).
fn rule3_lines(topology: &Topology) -> Vec<Line> {
    let ends: BTreeSet<usize> = topology.end_joints.iter().copied().collect();
    enumerate_lines(topology)
        .into_iter()
        .filter(|l| ends.contains(&l.a()) && ends.contains(&l.b()))
        .collect()
}

struct Mirror {
    map: Vec<usize>,
    /// Declared plane for each mirrored joint set, if any.
    planes: Vec<Plane>,
}

impl Mirror {
    fn joint(&self, j: usize) -> usize {
        self.map[j]
    }

    fn line(&self, l: Line) -> Line {
        Line::new(self.map[l.a()], self.map[l.b()])
    }

    /// Mirror a plane onto the declared plane with the mirrored joint set;
    /// None when the plane set is not mirror-closed.
    fn plane(&self, p: Plane) -> Option<Plane> {
        let mut target = [self.map[p.0[0]], self.map[p.0[1]], self.map[p.0[2]]];
        target.sort_unstable();
        self.planes.iter().copied().find(|q| q.joint_set() == target)
    }
}

/// Keep a feature unless its mirror image is also enumerated and strictly
/// lexicographically smaller.
fn dedup<T, F>(items: Vec<T>, mirror_of: F) -> Vec<T>
where
    T: Ord + Copy,
    F: Fn(T) -> Option<T>,
{
    let set: BTreeSet<T> = items.iter().copied().collect();
    items
        .into_iter()
        .filter(|&it| match mirror_of(it) {
            Some(m) => !(set.contains(&m) && m < it),
            None => true,
        })
        .collect()
}

/// Build the deterministic feature schema for a topology under the default
/// pairing policy.
pub fn build_schema(topology: &Topology, config: &SchemaConfig) -> FeatureSchema {
    let lines = enumerate_lines(topology);
    let planes = {
        let mut p = enumerate_planes(topology);
        p.sort_unstable();
        p
    };
    let ends = topology.end_joints.clone();

    let mut jl_pairs: Vec<(usize, Line)> = Vec::new();
    for &g in &ends {
        for &l in &lines {
            if !l.contains(g) {
                jl_pairs.push((g, l));
            }
        }
    }
    jl_pairs.sort_unstable();

    let mut ll_pairs: Vec<(Line, Line)> = Vec::new();
    for (i, &l1) in lines.iter().enumerate() {
        for &l2 in &lines[i + 1..] {
            ll_pairs.push((l1, l2));
        }
    }
    ll_pairs.sort_unstable();

    let mut jp_pairs: Vec<(usize, Plane)> = Vec::new();
    for &g in &ends {
        for &p in &planes {
            if !p.contains(g) {
                jp_pairs.push((g, p));
            }
        }
    }
    jp_pairs.sort_unstable();

    let mut lp_pairs: Vec<(Line, Plane)> = Vec::new();
    for &l in &rule3_lines(topology) {
        for &p in &planes {
            lp_pairs.push((l, p));
        }
    }
    lp_pairs.sort_unstable();

    let mut pp_pairs: Vec<(Plane, Plane)> = Vec::new();
    for (i, &p1) in planes.iter().enumerate() {
        for &p2 in &planes[i + 1..] {
            pp_pairs.push((p1, p2));
        }
    }
    pp_pairs.sort_unstable();

    let mut lines = lines;
    if config.dedup_symmetry {
        if let Some(map) = topology.mirror_map() {
            let mirror = Mirror {
                map,
                planes: planes.clone(),
            };
            lines = dedup(lines, |l| Some(mirror.line(l)));
            jl_pairs = dedup(jl_pairs, |(g, l)| Some((mirror.joint(g), mirror.line(l))));
            ll_pairs = dedup(ll_pairs, |(l1, l2)| {
                let (m1, m2) = (mirror.line(l1), mirror.line(l2));
                Some((m1.min(m2), m1.max(m2)))
            });
            jp_pairs = dedup(jp_pairs, |(g, p)| {
                mirror.plane(p).map(|mp| (mirror.joint(g), mp))
            });
            lp_pairs = dedup(lp_pairs, |(l, p)| {
                mirror.plane(p).map(|mp| (mirror.line(l), mp))
            });
            pp_pairs = dedup(pp_pairs, |(p1, p2)| {
                match (mirror.plane(p1), mirror.plane(p2)) {
                    (Some(m1), Some(m2)) => Some((m1.min(m2), m1.max(m2))),
                    _ => None,
                }
            });
        }
    }
    if let Some(cap) = config.max_ll_pairs {
        ll_pairs.truncate(cap);
    }

    let mut schema = FeatureSchema {
        layout_version: SCHEMA_LAYOUT_VERSION,
        topology: topology.clone(),
        center_root: config.center_root,
        lines,
        planes,
        jl_pairs,
        ll_pairs,
        jp_pairs,
        lp_pairs,
        pp_pairs,
        per_frame_dim: 0,
    };
    schema.per_frame_dim = schema.computed_per_frame_dim();
    schema
}
