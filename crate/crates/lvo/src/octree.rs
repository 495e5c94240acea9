//! Probabilistic occupancy octree.
//!
//! Voxels accumulate evidence in log-odds form: an observation with
//! probability `p` adds `logit(p) - logit(prior)`, clamped into
//! `[logit(clamp_min), logit(clamp_max)]`. This is algebraically the
//! recursive odds-product update, but commutative before clamping and cheap
//! to apply. Point clouds carve free space along camera rays (3D DDA
//! traversal) and deposit hits at ray endpoints; endpoint evidence wins over
//! free-space evidence within a single cloud.

use std::collections::HashSet;
use std::io::{BufWriter, Write};
use std::path::Path;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::bytes::ByteReader;
use crate::error::{Error, Result};
use crate::geometry::PointCloud;

/// Sensor model and map parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OctreeConfig {
    /// Voxel edge length in meters.
    pub resolution: f64,
    /// Probability assigned to a voxel containing a measured point.
    pub prob_hit: f64,
    /// Probability assigned to voxels a ray passes through.
    pub prob_miss: f64,
    /// Prior occupancy probability of unobserved space.
    pub prior: f64,
    /// Voxels with probability strictly above this are reported occupied.
    pub occupancy_threshold: f64,
    pub clamp_min: f64,
    pub clamp_max: f64,
    /// Points farther than this from the sensor origin are dropped.
    pub max_range: f64,
}

impl Default for OctreeConfig {
    fn default() -> Self {
        OctreeConfig {
            resolution: 0.5,
            prob_hit: 0.7,
            prob_miss: 0.4,
            prior: 0.5,
            occupancy_threshold: 0.5,
            clamp_min: 0.12,
            clamp_max: 0.97,
            max_range: f64::INFINITY,
        }
    }
}

impl OctreeConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.resolution.is_finite() && self.resolution > 0.0) {
            return Err(Error::invalid(format!(
                "octree resolution must be positive, got {}",
                self.resolution
            )));
        }
        let in_unit = |name: &str, p: f64| {
            if p > 0.0 && p < 1.0 {
                Ok(())
            } else {
                Err(Error::invalid(format!(
                    "{name} must lie strictly inside (0, 1), got {p}"
                )))
            }
        };
        in_unit("prob_hit", self.prob_hit)?;
        in_unit("prob_miss", self.prob_miss)?;
        in_unit("prior", self.prior)?;
        in_unit("occupancy_threshold", self.occupancy_threshold)?;
        in_unit("clamp_min", self.clamp_min)?;
        in_unit("clamp_max", self.clamp_max)?;
        if self.clamp_min > self.prior || self.prior > self.clamp_max {
            return Err(Error::invalid(
                "need clamp_min <= prior <= clamp_max".to_string(),
            ));
        }
        if !(self.max_range > 0.0) {
            return Err(Error::invalid("max_range must be positive"));
        }
        Ok(())
    }
}

pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

pub fn logistic(l: f64) -> f64 {
    1.0 / (1.0 + (-l).exp())
}

/// One clamped log-odds fusion step.
pub fn update_logodds(current: f64, measurement_prob: f64, cfg: &OctreeConfig) -> f64 {
    let updated = current + logit(measurement_prob) - logit(cfg.prior);
    updated.clamp(logit(cfg.clamp_min), logit(cfg.clamp_max))
}

#[derive(Debug, Clone, PartialEq)]
enum Node {
    Inner(Box<[Option<Node>; 8]>),
    Leaf {
        log_odds: f64,
        color_mean: [f64; 3],
        color_count: u64,
    },
}

impl Node {
    fn new_leaf(prior_logodds: f64) -> Node {
        Node::Leaf {
            log_odds: prior_logodds,
            color_mean: [0.0; 3],
            color_count: 0,
        }
    }

    fn new_inner() -> Node {
        Node::Inner(Box::new([const { None }; 8]))
    }
}

/// Hierarchical voxel map over a cubic extent that doubles as needed.
#[derive(Debug, Clone, PartialEq)]
pub struct OccupancyOctree {
    resolution: f64,
    /// Root cube side length is `2^depth` voxels.
    depth: u32,
    /// Voxel coordinates of the root cube's minimum corner.
    base: [i64; 3],
    root: Option<Node>,
}

type VoxelKey = [i64; 3];

impl OccupancyOctree {
    pub fn new(cfg: &OctreeConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(OccupancyOctree {
            resolution: cfg.resolution,
            depth: 0,
            base: [0; 3],
            root: None,
        })
    }

    pub fn resolution(&self) -> f64 {
        self.resolution
    }

    pub fn is_empty(&self) -> bool {
        self.root.is_none()
    }

    fn key_of(&self, p: &Vector3<f64>) -> VoxelKey {
        [
            (p.x / self.resolution).floor() as i64,
            (p.y / self.resolution).floor() as i64,
            (p.z / self.resolution).floor() as i64,
        ]
    }

    fn contains(&self, key: &VoxelKey) -> bool {
        let side = 1i64 << self.depth;
        (0..3).all(|a| key[a] >= self.base[a] && key[a] < self.base[a] + side)
    }

    /// Double the root extent toward `key` until it is covered. The old root
    /// becomes one child of the new, larger root.
    fn grow_to(&mut self, key: &VoxelKey) {
        if self.root.is_none() {
            // Center a fresh unit cube on the first observation.
            self.base = *key;
            self.depth = 0;
            return;
        }
        while !self.contains(key) {
            let side = 1i64 << self.depth;
            let mut new_base = self.base;
            let mut child_idx = 0usize;
            for a in 0..3 {
                if key[a] < self.base[a] {
                    // Extend downward: old cube occupies the upper half.
                    new_base[a] -= side;
                    child_idx |= 1 << a;
                }
            }
            let old_root = self.root.take().unwrap();
            let mut children = Box::new([const { None }; 8]);
            children[child_idx] = Some(old_root);
            self.root = Some(Node::Inner(children));
            self.base = new_base;
            self.depth += 1;
        }
    }

    /// Fetch-or-create the leaf for `key`, which must be inside the extent.
    fn leaf_mut(&mut self, key: &VoxelKey, prior_logodds: f64) -> &mut Node {
        debug_assert!(self.contains(key));
        let rel = [
            key[0] - self.base[0],
            key[1] - self.base[1],
            key[2] - self.base[2],
        ];
        let mut depth = self.depth;
        let mut node = self
            .root
            .get_or_insert_with(|| {
                if depth == 0 {
                    Node::new_leaf(prior_logodds)
                } else {
                    Node::new_inner()
                }
            });
        while depth > 0 {
            let level = depth - 1;
            let idx = (((rel[0] >> level) & 1)
                | (((rel[1] >> level) & 1) << 1)
                | (((rel[2] >> level) & 1) << 2)) as usize;
            let children = match node {
                Node::Inner(c) => c,
                Node::Leaf { .. } => unreachable!("leaf above voxel level"),
            };
            node = children[idx].get_or_insert_with(|| {
                if level == 0 {
                    Node::new_leaf(prior_logodds)
                } else {
                    Node::new_inner()
                }
            });
            depth = level;
        }
        node
    }

    fn leaf(&self, key: &VoxelKey) -> Option<&Node> {
        if self.root.is_none() || !self.contains(key) {
            return None;
        }
        let rel = [
            key[0] - self.base[0],
            key[1] - self.base[1],
            key[2] - self.base[2],
        ];
        let mut node = self.root.as_ref().unwrap();
        let mut depth = self.depth;
        while depth > 0 {
            let level = depth - 1;
            let idx = (((rel[0] >> level) & 1)
                | (((rel[1] >> level) & 1) << 1)
                | (((rel[2] >> level) & 1) << 2)) as usize;
            match node {
                Node::Inner(c) => node = c[idx].as_ref()?,
                Node::Leaf { .. } => unreachable!(),
            }
            depth = level;
        }
        Some(node)
    }

    /// Occupancy probability of the voxel containing `p`, if observed.
    pub fn probability_at(&self, p: &Vector3<f64>) -> Option<f64> {
        match self.leaf(&self.key_of(p))? {
            Node::Leaf { log_odds, .. } => Some(logistic(*log_odds)),
            Node::Inner(_) => None,
        }
    }
}

/// Voxels a segment passes through, excluding the voxel containing `end`
/// (3D DDA / Amanatides-Woo traversal).
fn traverse_ray(
    origin: &Vector3<f64>,
    end: &Vector3<f64>,
    resolution: f64,
    mut visit: impl FnMut(VoxelKey),
) {
    let key_at = |p: &Vector3<f64>| -> VoxelKey {
        [
            (p.x / resolution).floor() as i64,
            (p.y / resolution).floor() as i64,
            (p.z / resolution).floor() as i64,
        ]
    };
    let mut current = key_at(origin);
    let target = key_at(end);
    if current == target {
        return;
    }
    let dir = end - origin;
    let mut step = [0i64; 3];
    let mut t_max = [f64::INFINITY; 3];
    let mut t_delta = [f64::INFINITY; 3];
    for a in 0..3 {
        let d = dir[a];
        if d > 0.0 {
            step[a] = 1;
            let boundary = (current[a] + 1) as f64 * resolution;
            t_max[a] = (boundary - origin[a]) / d;
            t_delta[a] = resolution / d;
        } else if d < 0.0 {
            step[a] = -1;
            let boundary = current[a] as f64 * resolution;
            t_max[a] = (boundary - origin[a]) / d;
            t_delta[a] = resolution / -d;
        }
    }
    // The walk is bounded by the voxel-grid Manhattan distance; the guard
    // protects against pathological floating-point corner cases.
    let mut budget: i64 = (0..3).map(|a| (target[a] - current[a]).abs()).sum::<i64>() + 3;
    while current != target && budget > 0 {
        visit(current);
        let axis = if t_max[0] <= t_max[1] && t_max[0] <= t_max[2] {
            0
        } else if t_max[1] <= t_max[2] {
            1
        } else {
            2
        };
        current[axis] += step[axis];
        t_max[axis] += t_delta[axis];
        budget -= 1;
    }
}

/// Fuse one point cloud observed from `origin`. Hits update endpoint voxels
/// with `prob_hit` (registering point colors as running means); every voxel a
/// ray crosses on the way gets `prob_miss`. Within the cloud each voxel is
/// updated at most once per category and a hit suppresses a miss. Points
/// beyond `max_range` or with non-finite coordinates are rejected.
pub fn insert_point_cloud(
    tree: &mut OccupancyOctree,
    origin: &Vector3<f64>,
    cloud: &PointCloud,
    cfg: &OctreeConfig,
) -> Result<()> {
    cfg.validate()?;
    if cfg.resolution != tree.resolution {
        return Err(Error::invalid(format!(
            "config resolution {} does not match tree resolution {}",
            cfg.resolution, tree.resolution
        )));
    }
    if !origin.iter().all(|v| v.is_finite()) {
        return Err(Error::invalid("sensor origin must be finite"));
    }
    if let Some(colors) = &cloud.colors {
        if colors.len() != cloud.points.len() {
            return Err(Error::shape(format!(
                "{} colors for {} points",
                colors.len(),
                cloud.points.len()
            )));
        }
    }

    let prior_logodds = logit(cfg.prior);
    let mut hit_keys: HashSet<VoxelKey> = HashSet::new();
    let mut hits: Vec<(VoxelKey, Option<[u8; 3]>)> = Vec::new();
    let mut free_keys: HashSet<VoxelKey> = HashSet::new();
    let mut frees: Vec<VoxelKey> = Vec::new();

    for (i, p) in cloud.points.iter().enumerate() {
        if !p.iter().all(|v| v.is_finite()) {
            return Err(Error::invalid(format!("point {i} is not finite")));
        }
        if (p - origin).norm() > cfg.max_range {
            continue;
        }
        let key = tree.key_of(p);
        if hit_keys.insert(key) {
            let color = cloud.colors.as_ref().map(|c| c[i]);
            hits.push((key, color));
        }
        traverse_ray(origin, p, tree.resolution, |k| {
            if free_keys.insert(k) {
                frees.push(k);
            }
        });
    }

    for (key, color) in &hits {
        tree.grow_to(key);
        let leaf = tree.leaf_mut(key, prior_logodds);
        if let Node::Leaf {
            log_odds,
            color_mean,
            color_count,
        } = leaf
        {
            *log_odds = update_logodds(*log_odds, cfg.prob_hit, cfg);
            if let Some(c) = color {
                *color_count += 1;
                let n = *color_count as f64;
                for k in 0..3 {
                    color_mean[k] += (c[k] as f64 - color_mean[k]) / n;
                }
            }
        }
    }
    for key in &frees {
        if hit_keys.contains(key) {
            continue; // endpoint evidence wins within a cloud
        }
        tree.grow_to(key);
        let leaf = tree.leaf_mut(key, prior_logodds);
        if let Node::Leaf { log_odds, .. } = leaf {
            *log_odds = update_logodds(*log_odds, cfg.prob_miss, cfg);
        }
    }
    Ok(())
}

/// One exported voxel: center position, occupancy probability, mean color.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Voxel {
    pub center: Vector3<f64>,
    pub probability: f64,
    pub color: Option<[u8; 3]>,
}

/// Occupied voxels plus the resolution they were extracted at.
#[derive(Debug, Clone, PartialEq)]
pub struct VoxelList {
    pub resolution: f64,
    pub voxels: Vec<Voxel>,
}

/// All leaves with probability strictly above the occupancy threshold,
/// ordered by voxel coordinate for stable output.
pub fn extract_occupied(tree: &OccupancyOctree, cfg: &OctreeConfig) -> Result<VoxelList> {
    cfg.validate()?;
    let mut keyed: Vec<(VoxelKey, Voxel)> = Vec::new();
    if let Some(root) = &tree.root {
        collect_leaves(root, tree.depth, tree.base, cfg, tree.resolution, &mut keyed);
    }
    keyed.sort_by(|a, b| a.0.cmp(&b.0));
    Ok(VoxelList {
        resolution: tree.resolution,
        voxels: keyed.into_iter().map(|(_, v)| v).collect(),
    })
}

fn collect_leaves(
    node: &Node,
    depth: u32,
    base: VoxelKey,
    cfg: &OctreeConfig,
    resolution: f64,
    out: &mut Vec<(VoxelKey, Voxel)>,
) {
    match node {
        Node::Leaf {
            log_odds,
            color_mean,
            color_count,
        } => {
            let p = logistic(*log_odds);
            if p > cfg.occupancy_threshold {
                let center = Vector3::new(
                    (base[0] as f64 + 0.5) * resolution,
                    (base[1] as f64 + 0.5) * resolution,
                    (base[2] as f64 + 0.5) * resolution,
                );
                let color = (*color_count > 0).then(|| {
                    [
                        color_mean[0].round().clamp(0.0, 255.0) as u8,
                        color_mean[1].round().clamp(0.0, 255.0) as u8,
                        color_mean[2].round().clamp(0.0, 255.0) as u8,
                    ]
                });
                out.push((
                    base,
                    Voxel {
                        center,
                        probability: p,
                        color,
                    },
                ));
            }
        }
        Node::Inner(children) => {
            let half = 1i64 << (depth - 1);
            for (idx, child) in children.iter().enumerate() {
                if let Some(child) = child {
                    let child_base = [
                        base[0] + ((idx as i64) & 1) * half,
                        base[1] + ((idx as i64 >> 1) & 1) * half,
                        base[2] + ((idx as i64 >> 2) & 1) * half,
                    ];
                    collect_leaves(child, depth - 1, child_base, cfg, resolution, out);
                }
            }
        }
    }
}

/// Write voxel centers as an ASCII PLY point cloud. Color columns are
/// included when any voxel carries one; colorless voxels then fall back to
/// mid-gray.
pub fn export_ply(voxels: &VoxelList, path: &Path) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let with_color = voxels.voxels.iter().any(|v| v.color.is_some());
    let mut header = String::new();
    header.push_str("ply\nformat ascii 1.0\n");
    header.push_str(&format!("element vertex {}\n", voxels.voxels.len()));
    header.push_str("property float x\nproperty float y\nproperty float z\n");
    if with_color {
        header.push_str("property uchar red\nproperty uchar green\nproperty uchar blue\n");
    }
    header.push_str("end_header\n");
    w.write_all(header.as_bytes()).map_err(|e| Error::io(path, e))?;
    for v in &voxels.voxels {
        let (x, y, z) = (v.center.x as f32, v.center.y as f32, v.center.z as f32);
        let line = if with_color {
            let c = v.color.unwrap_or([127, 127, 127]);
            format!("{} {} {} {} {} {}\n", x, y, z, c[0], c[1], c[2])
        } else {
            format!("{} {} {}\n", x, y, z)
        };
        w.write_all(line.as_bytes()).map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

const OCTREE_MAGIC: &[u8; 8] = b"LVOCTREE";
const OCTREE_VERSION: u32 = 1;

/// Serialize the tree: magic, version, geometry block, then the node stream
/// in preorder. Inner nodes store a child-presence bitmask; leaves store
/// log-odds and the color accumulator. `load_octree` restores it bit-exactly.
pub fn save_octree(tree: &OccupancyOctree, path: &Path) -> Result<()> {
    let mut buf: Vec<u8> = Vec::new();
    buf.extend_from_slice(OCTREE_MAGIC);
    buf.extend_from_slice(&OCTREE_VERSION.to_le_bytes());
    buf.extend_from_slice(&tree.resolution.to_le_bytes());
    buf.extend_from_slice(&tree.depth.to_le_bytes());
    for a in 0..3 {
        buf.extend_from_slice(&tree.base[a].to_le_bytes());
    }
    buf.push(tree.root.is_some() as u8);
    if let Some(root) = &tree.root {
        write_node(root, &mut buf);
    }
    std::fs::write(path, &buf).map_err(|e| Error::io(path, e))
}

fn write_node(node: &Node, buf: &mut Vec<u8>) {
    match node {
        Node::Leaf {
            log_odds,
            color_mean,
            color_count,
        } => {
            buf.push(0);
            buf.extend_from_slice(&log_odds.to_le_bytes());
            for c in color_mean {
                buf.extend_from_slice(&c.to_le_bytes());
            }
            buf.extend_from_slice(&color_count.to_le_bytes());
        }
        Node::Inner(children) => {
            buf.push(1);
            let mut mask = 0u8;
            for (i, c) in children.iter().enumerate() {
                if c.is_some() {
                    mask |= 1 << i;
                }
            }
            buf.push(mask);
            for c in children.iter().flatten() {
                write_node(c, buf);
            }
        }
    }
}

pub fn load_octree(path: &Path) -> Result<OccupancyOctree> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut r = ByteReader::new(&bytes, path);
    let magic = r.take(8)?;
    if magic != OCTREE_MAGIC {
        return Err(Error::parse(format!(
            "{}: not an octree dump (bad magic)",
            path.display()
        )));
    }
    let version = r.u32()?;
    if version != OCTREE_VERSION {
        return Err(Error::parse(format!(
            "{}: unsupported octree dump version {version}",
            path.display()
        )));
    }
    let resolution = r.f64()?;
    if !(resolution.is_finite() && resolution > 0.0) {
        return Err(Error::parse(format!(
            "{}: bad resolution {resolution}",
            path.display()
        )));
    }
    let depth = r.u32()?;
    if depth > 60 {
        return Err(Error::parse(format!(
            "{}: implausible tree depth {depth}",
            path.display()
        )));
    }
    let base = [r.i64()?, r.i64()?, r.i64()?];
    let has_root = r.u8()? != 0;
    let root = if has_root {
        Some(read_node(&mut r, depth)?)
    } else {
        None
    };
    r.expect_end()?;
    Ok(OccupancyOctree {
        resolution,
        depth,
        base,
        root,
    })
}

fn read_node(r: &mut ByteReader, depth: u32) -> Result<Node> {
    match r.u8()? {
        0 => {
            if depth != 0 {
                return Err(r.err("leaf node above the voxel level"));
            }
            let log_odds = r.f64()?;
            let color_mean = [r.f64()?, r.f64()?, r.f64()?];
            let color_count = r.u64()?;
            Ok(Node::Leaf {
                log_odds,
                color_mean,
                color_count,
            })
        }
        1 => {
            if depth == 0 {
                return Err(r.err("inner node at the voxel level"));
            }
            let mask = r.u8()?;
            let mut children = Box::new([const { None }; 8]);
            for (i, slot) in children.iter_mut().enumerate() {
                if mask & (1 << i) != 0 {
                    *slot = Some(read_node(r, depth - 1)?);
                }
            }
            Ok(Node::Inner(children))
        }
        tag => Err(r.err(&format!("unknown node tag {tag}"))),
    }
}
