use crate::floorid::{GroundNode, NodeDatabase};
use crate::geometry::{FloorModel, Point2};
use crate::gridpose::{corner_of, NodeGeometry};
use crate::nodecode::{encode, CodeMatrix, CodePayload, CODE_CELLS};

use super::SimError;

/// Reference intensities at 500 lux.
pub const WHITE_INTENSITY: f64 = 230.0;
pub const DARK_INTENSITY: f64 = 18.0;
pub const OBSTACLE_INTENSITY: f64 = 25.0;
pub const DEFAULT_FLOOR_ALBEDO: f64 = 160.0;
pub const DEFAULT_TEXTURE_AMPLITUDE: f64 = 8.0;

/// Axis-aligned world rectangle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rect {
    pub x_min: f64,
    pub y_min: f64,
    pub x_max: f64,
    pub y_max: f64,
}

impl Rect {
    pub fn new(x_min: f64, y_min: f64, x_max: f64, y_max: f64) -> Self {
        Self {
            x_min,
            y_min,
            x_max,
            y_max,
        }
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        x >= self.x_min && x <= self.x_max && y >= self.y_min && y <= self.y_max
    }
}

/// Warehouse floor: surveyed nodes, plain floor with a faint texture, and
/// dark rectangles standing in for racks and walls.
#[derive(Debug, Clone)]
pub struct Scene {
    pub nodes: NodeDatabase,
    pub geometry: NodeGeometry,
    pub floor: FloorModel,
    /// Floor intensity at 500 lux.
    pub floor_albedo: f64,
    pub texture_amplitude: f64,
    pub texture_seed: u64,
    pub obstacles: Vec<Rect>,
    pub bounds: Rect,
}

impl Scene {
    pub fn new(
        nodes: NodeDatabase,
        geometry: NodeGeometry,
        obstacles: Vec<Rect>,
        bounds: Rect,
    ) -> Result<Self, SimError> {
        let scene = Self {
            nodes,
            geometry,
            floor: FloorModel::default(),
            floor_albedo: DEFAULT_FLOOR_ALBEDO,
            texture_amplitude: DEFAULT_TEXTURE_AMPLITUDE,
            texture_seed: 0x5eed,
            obstacles,
            bounds,
        };
        scene.validate()?;
        Ok(scene)
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if !self.geometry.is_valid() {
            return Err(SimError::InvalidScene("node geometry is inconsistent".into()));
        }
        for n in self.nodes.nodes() {
            if !self.bounds.contains(n.world_xy_m.x, n.world_xy_m.y) {
                return Err(SimError::InvalidScene(format!("node {} lies outside the scene bounds", n.id)));
            }
            if n.id > u16::MAX as u32 {
                return Err(SimError::InvalidScene(format!("node id {} does not fit a code payload", n.id)));
            }
        }
        Ok(())
    }

    /// Two parallel aisles 3 m apart with a node every 1.5 m along each,
    /// separated by a rack row and closed by walls.
    pub fn default_warehouse() -> Self {
        let mut nodes = Vec::new();
        for (aisle, y) in [(0u32, 0.0), (1, 3.0)] {
            for i in 0..11u32 {
                let id = 100 * aisle + i + 1;
                let yaw = (id as f64 * 37.0_f64.to_radians()).rem_euclid(std::f64::consts::TAU);
                nodes.push(GroundNode::new(id, 1.5 * i as f64, y, yaw));
            }
        }
        let obstacles = vec![
            Rect::new(0.5, 1.1, 14.5, 1.9),
            Rect::new(-2.5, -1.6, 17.5, -1.1),
            Rect::new(-2.5, 4.1, 17.5, 4.6),
        ];
        let bounds = Rect::new(-2.5, -1.6, 17.5, 4.6);
        Self::new(
            NodeDatabase::new(nodes).expect("unique ids"),
            NodeGeometry::default(),
            obstacles,
            bounds,
        )
        .expect("default warehouse is valid")
    }

    /// Untextured floor with no nodes and no obstacles.
    pub fn empty() -> Self {
        let mut s = Self::new(
            NodeDatabase::new(Vec::new()).expect("empty database"),
            NodeGeometry::default(),
            Vec::new(),
            Rect::new(-50.0, -50.0, 50.0, 50.0),
        )
        .expect("empty scene is valid");
        s.texture_amplitude = 0.0;
        s
    }

    /// A single node at the origin on a plain floor.
    pub fn single_node(node: GroundNode, geometry: NodeGeometry) -> Result<Self, SimError> {
        let mut s = Self::new(
            NodeDatabase::new(vec![node])?,
            geometry,
            Vec::new(),
            Rect::new(-50.0, -50.0, 50.0, 50.0),
        )?;
        s.texture_amplitude = 0.0;
        Ok(s)
    }

    pub(crate) fn texture(&self, x: f64, y: f64) -> f64 {
        if self.texture_amplitude == 0.0 {
            return 0.0;
        }
        let coarse = value_noise(x / 0.05, y / 0.05, self.texture_seed);
        let fine = value_noise(x / 0.012, y / 0.012, self.texture_seed ^ 0x9e37_79b9);
        self.texture_amplitude * (0.7 * coarse + 0.3 * fine)
    }

    /// Intensity at 500 lux of the floor point `(x, y)`; `art` holds the
    /// nodes that may cover it.
    #[cfg(test)]
    pub(crate) fn intensity(&self, x: f64, y: f64, art: &[NodeArt]) -> f64 {
        self.surface(x, y, art).unwrap_or_else(|| self.floor_albedo + self.texture(x, y))
    }

    /// Intensity of obstacles and node artwork; `None` on bare floor.
    pub(crate) fn surface(&self, x: f64, y: f64, art: &[NodeArt]) -> Option<f64> {
        if self.obstacles.iter().any(|o| o.contains(x, y)) {
            return Some(OBSTACLE_INTENSITY);
        }
        art.iter().find_map(|a| a.intensity(x, y, &self.geometry))
    }
}

/// Per-node drawing data: pose and the three code matrices.
#[derive(Debug, Clone)]
pub(crate) struct NodeArt {
    center: Point2,
    cos: f64,
    sin: f64,
    codes: [CodeMatrix; 4],
}

impl NodeArt {
    pub(crate) fn new(node: &GroundNode) -> Self {
        let codes = std::array::from_fn(|corner| {
            let payload = CodePayload::new(node.id as u16, corner as u8).expect("corner index below 4");
            encode(payload)
        });
        Self {
            center: node.world_xy_m,
            cos: node.yaw_rad.cos(),
            sin: node.yaw_rad.sin(),
            codes,
        }
    }

    fn intensity(&self, x: f64, y: f64, g: &NodeGeometry) -> Option<f64> {
        let (dx, dy) = (x - self.center.x, y - self.center.y);
        if dx * dx + dy * dy > g.disc_radius_m * g.disc_radius_m {
            return None;
        }
        let u = self.cos * dx + self.sin * dy;
        let v = -self.sin * dx + self.cos * dy;
        Some(node_artwork(u, v, g, &self.codes))
    }
}

/// Node artwork in the node frame, inside the white disc.
fn node_artwork(u: f64, v: f64, g: &NodeGeometry, codes: &[CodeMatrix; 4]) -> f64 {
    let c = (u / g.pitch_m + 1.0).round().clamp(0.0, 2.0) as usize;
    let r = (1.0 - v / g.pitch_m).round().clamp(0.0, 2.0) as usize;
    let center = g.label_point((r, c));
    let (du, dv) = (u - center.x, v - center.y);
    let half = 0.5 * g.code_size_m;
    match corner_of((r, c)) {
        Some(k) if k == g.orientation_marker_corner => {
            if du.abs() <= half && dv.abs() <= half {
                DARK_INTENSITY
            } else {
                WHITE_INTENSITY
            }
        }
        Some(k) => {
            if du.abs() > half || dv.abs() > half {
                return WHITE_INTENSITY;
            }
            // Undo the k clockwise quarter turns to read the upright matrix.
            let (mut a, mut b) = (du, dv);
            for _ in 0..k {
                (a, b) = (-b, a);
            }
            let cell = g.code_size_m / CODE_CELLS as f64;
            let col = ((a + half) / cell).floor().clamp(0.0, CODE_CELLS as f64 - 1.0) as usize;
            let row = ((half - b) / cell).floor().clamp(0.0, CODE_CELLS as f64 - 1.0) as usize;
            if codes[k as usize].get(row, col) {
                DARK_INTENSITY
            } else {
                WHITE_INTENSITY
            }
        }
        None => {
            if du * du + dv * dv <= half * half {
                DARK_INTENSITY
            } else {
                WHITE_INTENSITY
            }
        }
    }
}

fn lattice(ix: i64, iy: i64, seed: u64) -> f64 {
    let mut z = seed
        ^ (ix as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15)
        ^ (iy as u64).wrapping_mul(0xc2b2_ae3d_27d4_eb4f);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^= z >> 31;
    (z >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0
}

/// Smooth value noise in [-1, 1] on a unit lattice.
fn value_noise(x: f64, y: f64, seed: u64) -> f64 {
    let (fx, fy) = (x.floor(), y.floor());
    let (ix, iy) = (fx as i64, fy as i64);
    let s = |t: f64| t * t * (3.0 - 2.0 * t);
    let (tx, ty) = (s(x - fx), s(y - fy));
    let a = lattice(ix, iy, seed) * (1.0 - tx) + lattice(ix + 1, iy, seed) * tx;
    let b = lattice(ix, iy + 1, seed) * (1.0 - tx) + lattice(ix + 1, iy + 1, seed) * tx;
    a * (1.0 - ty) + b * ty
}
