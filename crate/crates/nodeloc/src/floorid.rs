//! Node database and identification by back-projecting the detected node
//! center onto the floor through a prior pose.

use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::Path;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{backproject_to_floor, CameraIntrinsics, FloorModel, GeometryError, Point2, RigidTransform};

/// Default identification gate, half the nominal node spacing.
pub const DEFAULT_MAX_IDENT_DIST_M: f64 = 0.75;
/// Default odometry age beyond which projected identification is refused.
pub const DEFAULT_AGE_LIMIT_S: f64 = 10.0;
const INDEX_CELL_M: f64 = 1.0;

#[derive(Debug, Error)]
pub enum NodeDbError {
    #[error("duplicate node id {0}")]
    DuplicateId(u32),
    #[error("malformed node table row {row}: {msg}")]
    Malformed { row: usize, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GroundNode {
    pub id: u32,
    pub world_xy_m: Point2,
    pub yaw_rad: f64,
    pub floor_height_m: f64,
}

impl GroundNode {
    pub fn new(id: u32, x: f64, y: f64, yaw_rad: f64) -> Self {
        Self {
            id,
            world_xy_m: Point2::new(x, y),
            yaw_rad,
            floor_height_m: 0.0,
        }
    }

    /// Node frame to world: origin at the node center on the floor, z up.
    pub fn world_pose(&self) -> RigidTransform {
        RigidTransform::from_yaw(
            self.yaw_rad,
            Vector3::new(self.world_xy_m.x, self.world_xy_m.y, self.floor_height_m),
        )
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct NodeRow {
    id: u32,
    x: f64,
    y: f64,
    yaw: f64,
    #[serde(default)]
    height: Option<f64>,
}

/// Nodes with a uniform-grid spatial index for exact nearest queries.
#[derive(Debug, Clone, Default)]
pub struct NodeDatabase {
    nodes: Vec<GroundNode>,
    by_id: HashMap<u32, usize>,
    cells: HashMap<(i64, i64), Vec<usize>>,
    cell_span: (i64, i64, i64, i64),
}

fn cell_of(p: &Point2) -> (i64, i64) {
    ((p.x / INDEX_CELL_M).floor() as i64, (p.y / INDEX_CELL_M).floor() as i64)
}

impl NodeDatabase {
    pub fn new(nodes: Vec<GroundNode>) -> Result<Self, NodeDbError> {
        let mut db = NodeDatabase::default();
        for n in nodes {
            db.insert(n)?;
        }
        Ok(db)
    }

    fn insert(&mut self, node: GroundNode) -> Result<(), NodeDbError> {
        if self.by_id.contains_key(&node.id) {
            return Err(NodeDbError::DuplicateId(node.id));
        }
        let idx = self.nodes.len();
        let c = cell_of(&node.world_xy_m);
        self.cell_span = if idx == 0 {
            (c.0, c.0, c.1, c.1)
        } else {
            let s = self.cell_span;
            (s.0.min(c.0), s.1.max(c.0), s.2.min(c.1), s.3.max(c.1))
        };
        self.by_id.insert(node.id, idx);
        self.cells.entry(c).or_default().push(idx);
        self.nodes.push(node);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[GroundNode] {
        &self.nodes
    }

    pub fn get(&self, id: u32) -> Option<&GroundNode> {
        self.by_id.get(&id).map(|&i| &self.nodes[i])
    }

    /// Nearest node; equal distances resolve to the smaller id.
    pub fn nearest(&self, p: &Point2) -> Option<(&GroundNode, f64)> {
        if self.nodes.is_empty() {
            return None;
        }
        let (qx, qy) = cell_of(p);
        let s = self.cell_span;
        let max_ring = [qx - s.0, s.1 - qx, qy - s.2, s.3 - qy].into_iter().max().unwrap_or(0).max(0);
        let mut best: Option<(usize, f64)> = None;
        for ring in 0..=max_ring {
            // Cells in this ring are at least (ring - 1) cells away.
            if let Some((_, d)) = best {
                if (ring - 1) as f64 * INDEX_CELL_M > d {
                    break;
                }
            }
            for cx in qx - ring..=qx + ring {
                for cy in qy - ring..=qy + ring {
                    if (cx - qx).abs() != ring && (cy - qy).abs() != ring {
                        continue;
                    }
                    let Some(list) = self.cells.get(&(cx, cy)) else {
                        continue;
                    };
                    for &i in list {
                        let d = (self.nodes[i].world_xy_m - p).norm();
                        let better = match best {
                            None => true,
                            Some((bi, bd)) => d < bd || (d == bd && self.nodes[i].id < self.nodes[bi].id),
                        };
                        if better {
                            best = Some((i, d));
                        }
                    }
                }
            }
        }
        best.map(|(i, d)| (&self.nodes[i], d))
    }

    pub fn from_reader<R: Read>(reader: R) -> Result<Self, NodeDbError> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).comment(Some(b'#')).from_reader(reader);
        let mut db = NodeDatabase::default();
        for (i, rec) in rdr.deserialize::<NodeRow>().enumerate() {
            let row = rec.map_err(|e| NodeDbError::Malformed {
                row: i + 1,
                msg: e.to_string(),
            })?;
            if ![row.x, row.y, row.yaw, row.height.unwrap_or(0.0)].iter().all(|v| v.is_finite()) {
                return Err(NodeDbError::Malformed {
                    row: i + 1,
                    msg: "non-finite value".into(),
                });
            }
            db.insert(GroundNode {
                id: row.id,
                world_xy_m: Point2::new(row.x, row.y),
                yaw_rad: row.yaw,
                floor_height_m: row.height.unwrap_or(0.0),
            })?;
        }
        Ok(db)
    }

    pub fn load(path: &Path) -> Result<Self, NodeDbError> {
        Self::from_reader(std::fs::File::open(path)?)
    }

    pub fn write_to<W: Write>(&self, writer: W) -> Result<(), NodeDbError> {
        let mut w = csv::Writer::from_writer(writer);
        for n in &self.nodes {
            w.serialize(NodeRow {
                id: n.id,
                x: n.world_xy_m.x,
                y: n.world_xy_m.y,
                yaw: n.yaw_rad,
                height: Some(n.floor_height_m),
            })
            .map_err(|e| NodeDbError::Io(std::io::Error::other(e)))?;
        }
        if self.nodes.is_empty() {
            // The csv writer emits headers only with the first record.
            w.write_record(["id", "x", "y", "yaw", "height"])
                .map_err(|e| NodeDbError::Io(std::io::Error::other(e)))?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<(), NodeDbError> {
        self.write_to(std::fs::File::create(path)?)
    }
}

/// Floor point (x, y) under an undistorted pixel for a camera-to-world pose.
pub fn project_node_center(
    c_p: Point2,
    pose: &RigidTransform,
    k: &CameraIntrinsics,
    floor: &FloorModel,
) -> Result<Point2, GeometryError> {
    let p = backproject_to_floor(c_p, pose, k, floor)?;
    Ok(Point2::new(p.x, p.y))
}

/// Nearest node within `max_dist_m`, refused when the prior is stale.
pub fn identify_node<'a>(
    floor_pt: &Point2,
    db: &'a NodeDatabase,
    max_dist_m: f64,
    prior_age_s: f64,
    age_limit_s: f64,
) -> Option<&'a GroundNode> {
    if prior_age_s > age_limit_s {
        return None;
    }
    match db.nearest(floor_pt) {
        Some((n, d)) if d <= max_dist_m => Some(n),
        _ => None,
    }
}
