//! Named joint layouts: adjacency tree, end joints, body planes and the
//! optional left/right mirror map that drives feature deduplication.

use std::collections::VecDeque;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A skeleton layout. The adjacency `edges` must form a tree over the
/// joints and `end_joints` must be exactly its degree-1 nodes. 3D layouts
/// carry exactly five body planes (torso, both arms, both legs); 2D layouts
/// carry none.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Topology {
    pub name: String,
    /// 2 or 3. 2D joints are carried with z fixed at 0.
    pub dim: u8,
    pub joint_names: Vec<String>,
    pub edges: Vec<(usize, usize)>,
    pub end_joints: Vec<usize>,
    pub root_joint: usize,
    pub plane_triples: Vec<[usize; 3]>,
    /// Left/right joint pairs; joints not listed mirror onto themselves.
    #[serde(default)]
    pub mirror_pairs: Vec<(usize, usize)>,
}

impl Topology {
    pub fn joint_count(&self) -> usize {
        self.joint_names.len()
    }

    /// Resolve a builtin name (`utkinect20`, `jhmdb15`) or fall through to a
    /// topology description file.
    pub fn resolve(name_or_path: &str) -> Result<Topology> {
        match name_or_path {
            "utkinect20" => Ok(utkinect20()),
            "jhmdb15" => Ok(jhmdb15()),
            other => {
                let path = Path::new(other);
                if path.exists() {
                    Topology::load(path)
                } else {
                    Err(Error::UnknownTopology(other.to_string()))
                }
            }
        }
    }

    /// Load and validate a topology description file (JSON).
    pub fn load(path: &Path) -> Result<Topology> {
        let text = std::fs::read_to_string(path)?;
        let topo: Topology = serde_json::from_str(&text)
            .map_err(|e| Error::InvalidTopology(format!("{}: {e}", path.display())))?;
        topo.validate()?;
        Ok(topo)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text)?;
        Ok(())
    }

    /// Check every structural invariant; all constructors go through this.
    pub fn validate(&self) -> Result<()> {
        let j = self.joint_count();
        let fail = |msg: String| Err(Error::InvalidTopology(msg));
        if self.dim != 2 && self.dim != 3 {
            return fail(format!("dim must be 2 or 3, got {}", self.dim));
        }
        if j < 2 {
            return fail(format!("need at least 2 joints, got {j}"));
        }
        if self.edges.len() != j - 1 {
            return fail(format!(
                "adjacency must have J-1 = {} edges, got {}",
                j - 1,
                self.edges.len()
            ));
        }
        let mut degree = vec![0usize; j];
        let mut seen = std::collections::HashSet::new();
        for &(a, b) in &self.edges {
            if a >= j || b >= j {
                return fail(format!("edge ({a},{b}) out of range"));
            }
            if a == b {
                return fail(format!("self-loop at joint {a}"));
            }
            if !seen.insert((a.min(b), a.max(b))) {
                return fail(format!("duplicate edge ({a},{b})"));
            }
            degree[a] += 1;
            degree[b] += 1;
        }
        // J-1 distinct edges + connectivity == tree
        let adj = self.adjacency();
        let mut visited = vec![false; j];
        let mut queue = VecDeque::from([0usize]);
        visited[0] = true;
        let mut count = 1;
        while let Some(u) = queue.pop_front() {
            for &v in &adj[u] {
                if !visited[v] {
                    visited[v] = true;
                    count += 1;
                    queue.push_back(v);
                }
            }
        }
        if count != j {
            return fail("adjacency is not connected".to_string());
        }
        let mut expected_ends: Vec<usize> =
            (0..j).filter(|&i| degree[i] == 1).collect();
        expected_ends.sort_unstable();
        let mut declared = self.end_joints.clone();
        declared.sort_unstable();
        if declared != expected_ends {
            return fail(format!(
                "end_joints {declared:?} must be exactly the degree-1 joints {expected_ends:?}"
            ));
        }
        if expected_ends.len() < 2 {
            return fail("a tree must have at least 2 end joints".to_string());
        }
        if self.root_joint >= j {
            return fail(format!("root joint {} out of range", self.root_joint));
        }
        let expected_planes = if self.dim == 3 { 5 } else { 0 };
        if self.plane_triples.len() != expected_planes {
            return fail(format!(
                "{}D topology must declare {} plane triples, got {}",
                self.dim,
                expected_planes,
                self.plane_triples.len()
            ));
        }
        for t in &self.plane_triples {
            if t[0] >= j || t[1] >= j || t[2] >= j {
                return fail(format!("plane triple {t:?} out of range"));
            }
            if t[0] == t[1] || t[1] == t[2] || t[0] == t[2] {
                return fail(format!("plane triple {t:?} has repeated joints"));
            }
        }
        let mut mirrored = vec![false; j];
        for &(l, r) in &self.mirror_pairs {
            if l >= j || r >= j {
                return fail(format!("mirror pair ({l},{r}) out of range"));
            }
            if l == r {
                return fail(format!("mirror pair ({l},{r}) maps a joint to itself"));
            }
            if mirrored[l] || mirrored[r] {
                return fail(format!("joint in mirror pair ({l},{r}) listed twice"));
            }
            mirrored[l] = true;
            mirrored[r] = true;
        }
        Ok(())
    }

    /// Neighbor lists indexed by joint.
    pub fn adjacency(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.joint_count()];
        for &(a, b) in &self.edges {
            adj[a].push(b);
            adj[b].push(a);
        }
        adj
    }

    /// Joints at tree distance exactly 2 from `joint`.
    pub fn two_hop_neighbors(&self, joint: usize) -> Vec<usize> {
        let adj = self.adjacency();
        let mut out = Vec::new();
        for &mid in &adj[joint] {
            for &far in &adj[mid] {
                if far != joint && !adj[joint].contains(&far) && !out.contains(&far) {
                    out.push(far);
                }
            }
        }
        out.sort_unstable();
        out
    }

    /// Full mirror map (identity on unlisted joints), or None when the
    /// topology declares no mirror pairs.
    pub fn mirror_map(&self) -> Option<Vec<usize>> {
        if self.mirror_pairs.is_empty() {
            return None;
        }
        let mut map: Vec<usize> = (0..self.joint_count()).collect();
        for &(l, r) in &self.mirror_pairs {
            map[l] = r;
            map[r] = l;
        }
        Some(map)
    }
}

/// Build the named builtin topology, or load one from a file path.
pub fn builtin_topology(name: &str) -> Result<Topology> {
    Topology::resolve(name)
}

/// 20-joint 3D layout matching the Kinect-v1 sensor order used by the
/// UT-Kinect recordings.
pub fn utkinect20() -> Topology {
    let joint_names = [
        "hip_center",
        "spine",
        "shoulder_center",
        "head",
        "shoulder_left",
        "elbow_left",
        "wrist_left",
        "hand_left",
        "shoulder_right",
        "elbow_right",
        "wrist_right",
        "hand_right",
        "hip_left",
        "knee_left",
        "ankle_left",
        "foot_left",
        "hip_right",
        "knee_right",
        "ankle_right",
        "foot_right",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    let topo = Topology {
        name: "utkinect20".to_string(),
        dim: 3,
        joint_names,
        edges: vec![
            (0, 1),
            (1, 2),
            (2, 3),
            (2, 4),
            (4, 5),
            (5, 6),
            (6, 7),
            (2, 8),
            (8, 9),
            (9, 10),
            (10, 11),
            (0, 12),
            (12, 13),
            (13, 14),
            (14, 15),
            (0, 16),
            (16, 17),
            (17, 18),
            (18, 19),
        ],
        end_joints: vec![3, 7, 11, 15, 19],
        root_joint: 0,
        // torso, left arm, right arm, left leg, right leg
        plane_triples: vec![
            [0, 4, 8],
            [4, 5, 6],
            [8, 9, 10],
            [12, 13, 14],
            [16, 17, 18],
        ],
        mirror_pairs: vec![
            (4, 8),
            (5, 9),
            (6, 10),
            (7, 11),
            (12, 16),
            (13, 17),
            (14, 18),
            (15, 19),
        ],
    };
    topo.validate().expect("builtin utkinect20 is valid");
    topo
}

/// 15-joint 2D layout matching the JHMDB puppet annotation order.
pub fn jhmdb15() -> Topology {
    let joint_names = [
        "neck",
        "belly",
        "face",
        "shoulder_right",
        "shoulder_left",
        "hip_right",
        "hip_left",
        "elbow_right",
        "elbow_left",
        "knee_right",
        "knee_left",
        "wrist_right",
        "wrist_left",
        "ankle_right",
        "ankle_left",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    let topo = Topology {
        name: "jhmdb15".to_string(),
        dim: 2,
        joint_names,
        edges: vec![
            (0, 1),
            (0, 2),
            (0, 3),
            (0, 4),
            (1, 5),
            (1, 6),
            (3, 7),
            (4, 8),
            (5, 9),
            (6, 10),
            (7, 11),
            (8, 12),
            (9, 13),
            (10, 14),
        ],
        end_joints: vec![2, 11, 12, 13, 14],
        root_joint: 1,
        plane_triples: vec![],
        mirror_pairs: vec![(3, 4), (5, 6), (7, 8), (9, 10), (11, 12), (13, 14)],
    };
    topo.validate().expect("builtin jhmdb15 is valid");
    topo
}
