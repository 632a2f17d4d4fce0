use std::sync::{Arc, Mutex, OnceLock};

use nalgebra::{Matrix3, Vector3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use crate::floorid::GroundNode;
use crate::geometry::{project_point, CameraIntrinsics, Point2, Point3, RigidTransform};
use crate::imaging::GrayImage;

use super::scene::NodeArt;
use super::trajectory::Trajectory;
use super::{Scene, SimError};

pub const REFERENCE_LUX: f64 = 500.0;
pub const MAX_SUB_EXPOSURES: usize = 64;

/// Photometric and exposure settings for a frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RenderSettings {
    pub illumination_lux: f64,
    /// Fraction of the frame interval the shutter stays open.
    pub motion_blur: f64,
    /// Sensor noise standard deviation at 500 lux, intensity units.
    pub noise_sigma: f64,
    /// Supersampling grid per pixel side.
    pub supersample: usize,
}

impl Default for RenderSettings {
    fn default() -> Self {
        Self {
            illumination_lux: REFERENCE_LUX,
            motion_blur: 0.01,
            noise_sigma: 2.0,
            supersample: 2,
        }
    }
}

impl RenderSettings {
    /// No blur and no noise.
    pub fn clean() -> Self {
        Self {
            motion_blur: 0.0,
            noise_sigma: 0.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if !(self.illumination_lux > 0.0 && self.illumination_lux.is_finite()) {
            return Err(SimError::InvalidSettings("illumination must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.motion_blur) {
            return Err(SimError::InvalidSettings("motion blur fraction must lie in [0, 1]".into()));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(SimError::InvalidSettings("noise sigma must be non-negative".into()));
        }
        if self.supersample == 0 || self.supersample > 8 {
            return Err(SimError::InvalidSettings("supersample must be in 1..=8".into()));
        }
        Ok(())
    }

    /// Intensity gain relative to the 500 lux reference: mean floor level
    /// 60 at 160 lux and 160 at 500 lux, linear in between and beyond.
    pub fn gain(&self) -> f64 {
        let mean = 60.0 + (self.illumination_lux - 160.0) * 100.0 / 340.0;
        mean.max(5.0) / 160.0
    }

    /// Noise grows as light falls.
    pub fn effective_noise_sigma(&self) -> f64 {
        self.noise_sigma * (REFERENCE_LUX / self.illumination_lux).sqrt()
    }
}

type RayTable = Arc<Vec<[f32; 2]>>;

fn ray_cache() -> &'static Mutex<Vec<(CameraIntrinsics, usize, RayTable)>> {
    static CACHE: OnceLock<Mutex<Vec<(CameraIntrinsics, usize, RayTable)>>> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(Vec::new()))
}

/// Undistorted unit-plane coordinates of every supersample of every pixel.
fn ray_table(k: &CameraIntrinsics, ss: usize) -> RayTable {
    let mut cache = ray_cache().lock().unwrap_or_else(|e| e.into_inner());
    if let Some((_, _, t)) = cache.iter().find(|(kk, s, _)| kk == k && *s == ss) {
        return t.clone();
    }
    let (w, h) = (k.width_px, k.height_px);
    let table: Vec<[f32; 2]> = (0..h)
        .into_par_iter()
        .flat_map_iter(|y| {
            let mut row = Vec::with_capacity(w * ss * ss);
            for x in 0..w {
                for sy in 0..ss {
                    for sx in 0..ss {
                        let px = x as f64 + (sx as f64 + 0.5) / ss as f64 - 0.5;
                        let py = y as f64 + (sy as f64 + 0.5) / ss as f64 - 0.5;
                        let xd = (px - k.cx_px) / k.fx_px;
                        let yd = (py - k.cy_px) / k.fy_px;
                        let (xn, yn) = k.undistort_normalized(xd, yd).unwrap_or((xd, yd));
                        row.push([xn as f32, yn as f32]);
                    }
                }
            }
            row
        })
        .collect();
    let table = Arc::new(table);
    if cache.len() >= 4 {
        cache.remove(0);
    }
    cache.push((k.clone(), ss, table.clone()));
    table
}

struct Exposure {
    rotation: Matrix3<f64>,
    origin: Vector3<f64>,
    art: Vec<NodeArt>,
}

fn floor_hit(rotation: &Matrix3<f64>, origin: &Vector3<f64>, ray: [f32; 2], floor: f64) -> Option<(f64, f64)> {
    let d = rotation * Vector3::new(ray[0] as f64, ray[1] as f64, 1.0);
    if d.z >= -1e-12 {
        return None;
    }
    let t = (floor - origin.z) / d.z;
    if t <= 0.0 {
        return None;
    }
    Some((origin.x + t * d.x, origin.y + t * d.y))
}

/// Nodes whose disc may intersect the image footprint of `pose`.
fn nodes_in_view(scene: &Scene, pose: &RigidTransform, probe: &[[f32; 2]]) -> Vec<NodeArt> {
    let floor = scene.floor.height_m;
    let mut lo = Point2::new(f64::INFINITY, f64::INFINITY);
    let mut hi = Point2::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
    for &ray in probe {
        match floor_hit(&pose.rotation, &pose.translation, ray, floor) {
            Some((x, y)) => {
                lo = Point2::new(lo.x.min(x), lo.y.min(y));
                hi = Point2::new(hi.x.max(x), hi.y.max(y));
            }
            None => {
                // Looking at the horizon: every node is a candidate.
                return scene.nodes.nodes().iter().map(NodeArt::new).collect();
            }
        }
    }
    let margin = scene.geometry.disc_radius_m + 0.05;
    scene
        .nodes
        .nodes()
        .iter()
        .filter(|n| {
            let p = n.world_xy_m;
            p.x >= lo.x - margin && p.x <= hi.x + margin && p.y >= lo.y - margin && p.y <= hi.y + margin
        })
        .map(NodeArt::new)
        .collect()
}

/// Renders one frame as the average over sub-exposure poses, then applies
/// illumination gain and sensor noise. The noise depends only on `seed`.
pub fn render_frame(
    scene: &Scene,
    exposure_poses: &[RigidTransform],
    k: &CameraIntrinsics,
    settings: &RenderSettings,
    seed: u64,
) -> Result<GrayImage, SimError> {
    settings.validate()?;
    if exposure_poses.is_empty() {
        return Err(SimError::InvalidSettings("no exposure poses".into()));
    }
    let floor = scene.floor.height_m;
    for p in exposure_poses {
        if p.translation.z <= floor {
            return Err(SimError::CameraBelowFloor(p.translation.z));
        }
    }
    let ss = settings.supersample;
    let table = ray_table(k, ss);
    let (w, h) = (k.width_px, k.height_px);
    let per_px = ss * ss;
    let corner = |x: usize, y: usize| table[(y * w + x) * per_px];
    let probe = [
        corner(0, 0),
        corner(w - 1, 0),
        corner(w - 1, h - 1),
        corner(0, h - 1),
        corner(w / 2, 0),
        corner(w / 2, h - 1),
        corner(0, h / 2),
        corner(w - 1, h / 2),
    ];
    let exposures: Vec<Exposure> = exposure_poses
        .iter()
        .map(|p| Exposure {
            rotation: p.rotation,
            origin: p.translation,
            art: nodes_in_view(scene, p, &probe),
        })
        .collect();
    let samples = (exposures.len() * per_px) as f64;
    let mut radiance = vec![0.0f64; w * h];
    radiance.par_chunks_mut(w).enumerate().for_each(|(y, row)| {
        for (x, out) in row.iter_mut().enumerate() {
            let rays = &table[(y * w + x) * per_px..(y * w + x + 1) * per_px];
            // The floor texture is smooth at pixel scale, so it is evaluated
            // once at the mean of the pixel's bare-floor samples.
            let (mut acc, mut n_floor, mut sx, mut sy) = (0.0, 0usize, 0.0, 0.0);
            for e in &exposures {
                for &ray in rays {
                    if let Some((fx, fy)) = floor_hit(&e.rotation, &e.origin, ray, floor) {
                        match scene.surface(fx, fy, &e.art) {
                            Some(v) => acc += v,
                            None => {
                                n_floor += 1;
                                sx += fx;
                                sy += fy;
                            }
                        }
                    }
                }
            }
            if n_floor > 0 {
                let m = n_floor as f64;
                acc += m * (scene.floor_albedo + scene.texture(sx / m, sy / m));
            }
            *out = acc / samples;
        }
    });
    let gain = settings.gain();
    let sigma = settings.effective_noise_sigma();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let pixels = radiance
        .into_iter()
        .map(|v| {
            let n = if sigma > 0.0 { sigma * normal.sample(&mut rng) } else { 0.0 };
            (gain * v + n).round().clamp(0.0, 255.0) as u8
        })
        .collect();
    Ok(GrayImage::from_raw(w, h, pixels)?)
}

/// Camera poses sampled across the shutter interval centered on `t`.
pub fn exposure_poses(
    trajectory: &Trajectory,
    t: f64,
    k: &CameraIntrinsics,
    settings: &RenderSettings,
) -> Vec<RigidTransform> {
    let open = settings.motion_blur / trajectory.scenario().frame_rate_hz;
    if open <= 0.0 {
        return vec![trajectory.pose_at(t)];
    }
    let a = trajectory.pose_at(t - 0.5 * open);
    let b = trajectory.pose_at(t + 0.5 * open);
    let height = 0.5 * (a.translation.z + b.translation.z);
    let smear_px = (b.translation.xy() - a.translation.xy()).norm() * k.fx_px / height
        + a.angle_to(&b) * k.fx_px;
    let n = (smear_px.ceil() as usize).clamp(1, MAX_SUB_EXPOSURES);
    if n == 1 {
        return vec![trajectory.pose_at(t)];
    }
    (0..n)
        .map(|i| trajectory.pose_at(t - 0.5 * open + open * i as f64 / (n - 1) as f64))
        .collect()
}

/// Node whose whole white disc projects inside the image, if any. Ties go
/// to the node closest to the image center.
pub fn fully_visible_node(scene: &Scene, pose: &RigidTransform, k: &CameraIntrinsics) -> Option<u32> {
    let r = scene.geometry.disc_radius_m;
    let center = Point2::new(k.cx_px, k.cy_px);
    let mut best: Option<(f64, u32)> = None;
    for n in scene.nodes.nodes() {
        let Some(c) = disc_inside(n, r, pose, k, scene) else {
            continue;
        };
        let d = (c - center).norm();
        if best.map_or(true, |(bd, _)| d < bd) {
            best = Some((d, n.id));
        }
    }
    best.map(|b| b.1)
}

fn disc_inside(n: &GroundNode, r: f64, pose: &RigidTransform, k: &CameraIntrinsics, scene: &Scene) -> Option<Point2> {
    let z = n.floor_height_m;
    let (w, h) = (k.width_px as f64, k.height_px as f64);
    let inside = |p: Point2| p.x >= 0.0 && p.y >= 0.0 && p.x <= w - 1.0 && p.y <= h - 1.0;
    let c = project_point(&Point3::new(n.world_xy_m.x, n.world_xy_m.y, z), pose, k).ok()?;
    if !inside(c) {
        return None;
    }
    for i in 0..32 {
        let a = std::f64::consts::TAU * i as f64 / 32.0;
        let (x, y) = (n.world_xy_m.x + r * a.cos(), n.world_xy_m.y + r * a.sin());
        if scene.obstacles.iter().any(|o| o.contains(x, y)) {
            return None;
        }
        let p = project_point(&Point3::new(x, y, z), pose, k).ok()?;
        if !inside(p) {
            return None;
        }
    }
    Some(c)
}

/// Frontal view of a single node from 1 m on a plain floor, without noise
/// or distortion. Serves as the detector's reference image.
pub fn reference_node_image(geometry: &crate::gridpose::NodeGeometry, k: &CameraIntrinsics) -> Result<GrayImage, SimError> {
    let scene = Scene::single_node(GroundNode::new(0, 0.0, 0.0, 0.0), *geometry)?;
    let pose = RigidTransform::from_approx(
        Matrix3::from_diagonal(&Vector3::new(1.0, -1.0, -1.0)),
        Vector3::new(0.0, 0.0, 1.0),
    );
    render_frame(&scene, &[pose], &k.without_distortion(), &RenderSettings::clean(), 0)
}
