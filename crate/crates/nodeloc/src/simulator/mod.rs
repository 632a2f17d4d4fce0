//! Synthetic warehouse: scene description, walking trajectories, a ray-cast
//! floor renderer, drifting odometry and the on-disk dataset format.

mod dataset;
mod odometry;
mod render;
mod scene;
mod trajectory;

use std::path::PathBuf;

use rayon::prelude::*;
use thiserror::Error;

use crate::floorid::NodeDbError;
use crate::geometry::{CameraIntrinsics, GeometryError, PoseSeries};
use crate::imaging::{GrayImage, ImagingError};

pub use dataset::{
    frame_file_name, load_dataset, read_pose_csv, write_dataset, write_pose_csv, Dataset, Manifest, INTRINSICS_FILE,
    MANIFEST_FILE, NODES_FILE, ODOMETRY_FILE, TRUTH_FILE,
};
pub use odometry::{synth_odometry, OdometryNoise, OdometryStream, ODOMETRY_RATE_HZ};
pub use render::{
    exposure_poses, fully_visible_node, reference_node_image, render_frame, RenderSettings, MAX_SUB_EXPOSURES,
    REFERENCE_LUX,
};
pub use scene::{Rect, Scene, DARK_INTENSITY, OBSTACLE_INTENSITY, WHITE_INTENSITY};
pub use trajectory::{generate_trajectory, Scenario, ScenarioKind, Trajectory};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid scene: {0}")]
    InvalidScene(String),
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
    #[error("invalid render settings: {0}")]
    InvalidSettings(String),
    #[error("trajectory leaves the scene at t={t:.2} s ({x:.2}, {y:.2})")]
    OutOfBounds { t: f64, x: f64, y: f64 },
    #[error("camera at height {0:.3} m is not above the floor")]
    CameraBelowFloor(f64),
    #[error("{frames} frames but {truth} truth poses")]
    InconsistentLengths { frames: usize, truth: usize },
    #[error("manifest line {line}: {msg}")]
    Manifest { line: usize, msg: String },
    #[error("csv: {0}")]
    Csv(String),
    #[error("missing dataset file {0}")]
    MissingFile(PathBuf),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Imaging(#[from] ImagingError),
    #[error(transparent)]
    NodeDb(#[from] NodeDbError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// Rendered frames with their ground truth and odometry.
#[derive(Debug, Clone)]
pub struct SimulationRun {
    pub frames: Vec<GrayImage>,
    pub truth: PoseSeries,
    pub odometry: OdometryStream,
}

/// Noise seed of frame `i`, independent of the render order.
pub fn frame_seed(seed: u64, i: usize) -> u64 {
    let mut z = seed ^ (i as u64 + 1).wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Generates the trajectory, renders every frame in parallel and derives
/// the odometry stream, all from one seed.
pub fn simulate(
    scene: &Scene,
    scenario: &Scenario,
    settings: &RenderSettings,
    k: &CameraIntrinsics,
    noise: &OdometryNoise,
    seed: u64,
) -> Result<SimulationRun, SimError> {
    settings.validate()?;
    let truth = generate_trajectory(scenario, scene, seed)?;
    let traj = Trajectory::new(scenario, seed)?;
    let frames = truth
        .samples
        .par_iter()
        .enumerate()
        .map(|(i, (t, _))| render_frame(scene, &exposure_poses(&traj, *t, k, settings), k, settings, frame_seed(seed, i)))
        .collect::<Result<Vec<_>, _>>()?;
    let odometry = if truth.len() >= 2 {
        synth_odometry(&truth, noise, seed)?
    } else {
        OdometryStream { poses: truth.clone() }
    };
    Ok(SimulationRun {
        frames,
        truth,
        odometry,
    })
}

/// Settings recorded in a dataset manifest.
pub fn manifest_for(
    scenario: &Scenario,
    settings: &RenderSettings,
    noise: &OdometryNoise,
    scene: &Scene,
    seed: u64,
) -> Manifest {
    let mut m = Manifest::new();
    m.set("seed", seed);
    m.set("scenario", scenario.kind);
    m.set("duration_s", scenario.duration_s);
    m.set("frame_rate_hz", scenario.frame_rate_hz);
    m.set("camera_height_m", scenario.camera_height_m);
    m.set("illumination_lux", settings.illumination_lux);
    m.set("motion_blur", settings.motion_blur);
    m.set("noise_sigma", settings.noise_sigma);
    m.set("odometry_sigma_pos_m", noise.sigma_pos_m);
    m.set("odometry_sigma_yaw_rad", noise.sigma_yaw_rad);
    m.set("node_pitch_m", scene.geometry.pitch_m);
    m.set("node_code_size_m", scene.geometry.code_size_m);
    m.set("node_disc_radius_m", scene.geometry.disc_radius_m);
    m.set("node_marker_corner", scene.geometry.orientation_marker_corner);
    m
}
