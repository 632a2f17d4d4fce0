//! Frame-by-frame localization: detection, blur gate, correlation blob
//! grid, code decoding, orientation, pose hypotheses, node identity and
//! prior filtering, plus run metrics and CSV output.

mod io;
mod metrics;
mod prior;
mod run;

use std::fmt;
use std::time::{Duration, Instant};

use nalgebra::Vector2;
use thiserror::Error;

use crate::detector::{DetectorConfig, DetectorError, NodeDetector};
use crate::floorid::{identify_node, project_node_center, GroundNode, NodeDatabase};
use crate::geometry::{CameraIntrinsics, Point2, RigidTransform, UndistortMap};
use crate::gridpose::{
    detect_blob_grid, filter_with_prior, four_pose_candidates, refine_centers, resolve_orientation, BlobGrid,
    NodeGeometry, OdometryPrior, OrientationSource, CORNERS,
};
use crate::imaging::{
    correlate, focus_measure, make_double_kernel, morphological_open, normalize_contrast, rescale_signed,
    resize_half, threshold_relative, GrayImage,
};
use crate::nodecode::{decode_roi, DecodeError, DecodeResult};
use crate::simulator::{reference_node_image, SimError};

pub use io::{read_fixes_csv, read_trace_csv, write_fixes_csv, write_trace_csv, FIXES_HEADER, TRACE_HEADER};
pub use metrics::{compute_metrics, MetricsInput, RunMetrics, CORRECT_YAW_TOLERANCE_RAD};
pub use prior::{PriorTracker, ReanchorPolicy};
pub use run::{localize_dataset, localize_frames, RunOutput};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("invalid pipeline configuration: {0}")]
    InvalidConfig(String),
    #[error("image is {got_w}x{got_h}, intrinsics expect {want_w}x{want_h}")]
    ImageSize {
        got_w: usize,
        got_h: usize,
        want_w: usize,
        want_h: usize,
    },
    #[error(transparent)]
    Detector(#[from] DetectorError),
    #[error(transparent)]
    Simulator(#[from] SimError),
    #[error("csv: {0}")]
    Csv(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    /// Blur gate factor on the mean intensity.
    pub alpha: f64,
    /// Correlation kernel size at full resolution and 1 m camera height.
    pub kernel_size_px: usize,
    /// Kernel scales tried in order until a grid is found.
    pub kernel_ladder: Vec<f64>,
    pub threshold_factor: f64,
    pub min_features: usize,
    pub max_keypoints: usize,
    pub merge_dist_px: f64,
    /// Lower bound on the ROI half side; grown to cover the matched features.
    pub roi_half_extent_px: usize,
    pub decode_budget_ms: u64,
    pub decode_enabled: bool,
    pub prior_age_limit_s: f64,
    pub max_ident_dist_m: f64,
    /// Opening radius at half resolution for the base kernel scale.
    pub opening_radius_px: usize,
    pub opening_iterations: usize,
    pub reanchor: ReanchorPolicy,
    pub geometry: NodeGeometry,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            alpha: 0.2,
            kernel_size_px: 61,
            kernel_ladder: vec![1.0, 1.35, 1.7, 0.8],
            threshold_factor: 0.8,
            min_features: 10,
            max_keypoints: 500,
            merge_dist_px: 150.0,
            roi_half_extent_px: 160,
            decode_budget_ms: 50,
            decode_enabled: true,
            prior_age_limit_s: 10.0,
            max_ident_dist_m: 0.75,
            opening_radius_px: 1,
            opening_iterations: 3,
            reanchor: ReanchorPolicy::EveryFix,
            geometry: NodeGeometry::default(),
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |m: String| Err(PipelineError::InvalidConfig(m));
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return bad(format!("alpha must be positive, got {}", self.alpha));
        }
        if self.kernel_size_px < 9 || self.kernel_size_px % 2 == 0 {
            return bad(format!("kernel size must be odd and >= 9, got {}", self.kernel_size_px));
        }
        if self.kernel_ladder.is_empty() || self.kernel_ladder.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
            return bad("kernel ladder needs positive scales".into());
        }
        if !(self.threshold_factor > 0.0 && self.threshold_factor <= 1.0) {
            return bad(format!("threshold factor must be in (0, 1], got {}", self.threshold_factor));
        }
        if self.min_features == 0 || self.max_keypoints == 0 || self.roi_half_extent_px == 0 {
            return bad("feature counts and ROI size must be positive".into());
        }
        if !(self.merge_dist_px > 0.0) {
            return bad("merge distance must be positive".into());
        }
        if self.decode_budget_ms == 0 {
            return bad("decode budget must be positive".into());
        }
        if !(self.prior_age_limit_s > 0.0) || !(self.max_ident_dist_m > 0.0) {
            return bad("prior age limit and identification distance must be positive".into());
        }
        if self.opening_radius_px == 0 || self.opening_iterations == 0 {
            return bad("opening radius and iterations must be positive".into());
        }
        if !self.geometry.is_valid() {
            return bad("node geometry is inconsistent".into());
        }
        Ok(())
    }

    fn detector_config(&self) -> DetectorConfig {
        DetectorConfig {
            max_keypoints: self.max_keypoints,
            min_features: self.min_features,
            merge_dist_px: self.merge_dist_px,
            roi_half_extent_px: self.roi_half_extent_px,
        }
    }
}

/// ROI growth for the second grid search.
pub const ROI_RETRY_GROWTH: f64 = 1.5;
/// Second-pass threshold factor relative to the configured one.
pub const RELAXED_THRESHOLD_RATIO: f64 = 0.8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FixSource {
    Decoded,
    ProjectedId,
}

impl FixSource {
    pub fn as_str(&self) -> &'static str {
        match self {
            FixSource::Decoded => "decoded",
            FixSource::ProjectedId => "projected-id",
        }
    }
}

impl fmt::Display for FixSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LocalizationFix {
    pub timestamp_s: f64,
    /// Camera-to-world pose.
    pub world_pose: RigidTransform,
    pub node_id: u32,
    pub source: FixSource,
    pub chosen_quadrant: u8,
    pub reprojection_residual_px: f64,
    pub filtered: bool,
}

/// One stage outcome in a frame trace.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StageRecord {
    pub stage: &'static str,
    pub status: String,
}

/// Ordered stage outcomes of one frame; the last record is the terminal
/// `result` stage.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameTrace {
    pub timestamp_s: f64,
    pub stages: Vec<StageRecord>,
}

impl FrameTrace {
    fn new(timestamp_s: f64) -> Self {
        Self {
            timestamp_s,
            stages: Vec::new(),
        }
    }

    fn push(&mut self, stage: &'static str, status: impl Into<String>) {
        self.stages.push(StageRecord {
            stage,
            status: status.into(),
        });
    }

    pub fn terminal(&self) -> Option<&StageRecord> {
        self.stages.last().filter(|s| s.stage == RESULT_STAGE)
    }

    pub fn status_of(&self, stage: &str) -> Option<&str> {
        self.stages.iter().find(|s| s.stage == stage).map(|s| s.status.as_str())
    }
}

pub const RESULT_STAGE: &str = "result";

#[derive(Debug, Clone)]
pub struct FrameOutput {
    pub fix: Option<LocalizationFix>,
    pub trace: FrameTrace,
    /// Wall-clock processing time; informational only.
    pub elapsed: Duration,
}

/// Stateful per-camera localizer.
pub struct Localizer {
    config: PipelineConfig,
    k_undistorted: CameraIntrinsics,
    width: usize,
    height: usize,
    undistort: UndistortMap,
    detector: NodeDetector,
    nodes: NodeDatabase,
    last_fix: Option<LocalizationFix>,
}

impl Localizer {
    /// `reference` is a frontal node image; `None` renders one.
    pub fn new(
        config: PipelineConfig,
        k: &CameraIntrinsics,
        nodes: NodeDatabase,
        reference: Option<&GrayImage>,
    ) -> Result<Self, PipelineError> {
        config.validate()?;
        let rendered;
        let reference = match reference {
            Some(r) => r,
            None => {
                rendered = reference_node_image(&config.geometry, k)?;
                &rendered
            }
        };
        let detector = NodeDetector::from_reference_image(reference, config.detector_config())?;
        Ok(Self {
            k_undistorted: k.without_distortion(),
            width: k.width_px,
            height: k.height_px,
            undistort: UndistortMap::new(k),
            detector,
            nodes,
            config,
            last_fix: None,
        })
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.config
    }

    pub fn nodes(&self) -> &NodeDatabase {
        &self.nodes
    }

    pub fn last_fix(&self) -> Option<&LocalizationFix> {
        self.last_fix.as_ref()
    }

    /// Runs every stage on one frame. Stage failures end the frame with a
    /// `no-fix` result; they never propagate.
    pub fn process_frame(
        &mut self,
        img: &GrayImage,
        timestamp_s: f64,
        prior: Option<&OdometryPrior>,
    ) -> Result<FrameOutput, PipelineError> {
        if img.width() != self.width || img.height() != self.height {
            return Err(PipelineError::ImageSize {
                got_w: img.width(),
                got_h: img.height(),
                want_w: self.width,
                want_h: self.height,
            });
        }
        let start = Instant::now();
        let mut trace = FrameTrace::new(timestamp_s);
        let fix = match self.run_stages(img, timestamp_s, prior, &mut trace) {
            Ok(fix) => {
                trace.push(RESULT_STAGE, format!("fix:{}", fix.source));
                self.last_fix = Some(fix.clone());
                Some(fix)
            }
            Err(reason) => {
                trace.push(RESULT_STAGE, format!("no-fix:{reason}"));
                None
            }
        };
        Ok(FrameOutput {
            fix,
            trace,
            elapsed: start.elapsed(),
        })
    }

    fn run_stages(
        &self,
        raw: &GrayImage,
        now: f64,
        prior: Option<&OdometryPrior>,
        trace: &mut FrameTrace,
    ) -> Result<LocalizationFix, &'static str> {
        let img = self.undistort.apply(raw).map_err(|_| "undistort")?;
        trace.push("undistort", "ok");

        let detection = self.detector.detect(&img);
        let Some(roi) = detection.roi else {
            trace.push("detect", format!("no-roi:{}-matches", detection.matches.len()));
            return Err("no-roi");
        };
        let spread = detection
            .matches
            .positions()
            .iter()
            .map(|p| (p - roi.center_px).norm())
            .filter(|d| *d <= self.config.merge_dist_px)
            .fold(0.0, f64::max);
        let half = (self.config.roi_half_extent_px as f64).max(1.4 * spread).round() as usize;
        let crop_at = |half: usize| {
            img.crop_clamped(
                roi.center_px.x.round() as isize - half as isize,
                roi.center_px.y.round() as isize - half as isize,
                2 * half + 1,
                2 * half + 1,
            )
        };
        let (crop, mut origin) = crop_at(half);
        trace.push("detect", format!("roi:{}-features", roi.feature_count));

        let sharp = match focus_measure(&crop, self.config.alpha) {
            Ok(r) => r.is_sharp,
            Err(_) => false,
        };
        trace.push("blur", if sharp { "sharp" } else { "blurred" });

        // Features may sit on one side of a close node; a wider crop then
        // catches blobs the first one cut off.
        let grid = match self.find_grid(&crop, trace) {
            Some(g) => g,
            None => {
                let (wide, wide_origin) = crop_at((ROI_RETRY_GROWTH * half as f64).round() as usize);
                origin = wide_origin;
                self.find_grid(&wide, trace).ok_or("no-grid")?
            }
        };
        let offset = Vector2::new(origin.0 as f64 + 0.5, origin.1 as f64 + 0.5);
        let coarse = grid.transformed(2.0, offset);
        let grid = refine_centers(&img, &coarse);

        let decoded = if !self.config.decode_enabled {
            trace.push("decode", "disabled");
            None
        } else if !sharp {
            trace.push("decode", "skipped-blur");
            None
        } else {
            match self.decode(&img, &grid) {
                Ok(d) => {
                    trace.push("decode", format!("ok:{}", d.payload.node_id));
                    Some(d)
                }
                Err(DecodeError::Timeout) => {
                    trace.push("decode", "timeout");
                    None
                }
                Err(_) => {
                    trace.push("decode", "failed");
                    None
                }
            }
        };

        let geometry = &self.config.geometry;
        let resolved = match &decoded {
            Some(d) => Some((
                geometry.quadrant_from_code(d.payload.corner_index(), d.orientation_quadrant),
                OrientationSource::DecodedCode,
            )),
            None => resolve_orientation(&img, &grid, geometry).map(|q| (q, OrientationSource::CornerStddev)),
        };
        trace.push(
            "orientation",
            resolved.map_or("unresolved".to_string(), |(q, s)| format!("{}:{q}", s.as_str())),
        );

        let set = match four_pose_candidates(&grid, resolved, geometry, &self.k_undistorted) {
            Ok(s) => s,
            Err(_) => {
                trace.push("pnp", "failed");
                return Err("pnp");
            }
        };
        trace.push("pnp", "ok");

        let fresh_prior = prior.filter(|p| p.is_fresh(now));
        let (node, source) = match &decoded {
            Some(d) => match self.nodes.get(d.payload.node_id as u32) {
                Some(n) => {
                    trace.push("identity", format!("decoded:{}", n.id));
                    (n, FixSource::Decoded)
                }
                None => {
                    trace.push("identity", format!("unknown-node:{}", d.payload.node_id));
                    return Err("unknown-node");
                }
            },
            None => match fresh_prior.and_then(|p| self.project_identity(&grid, p, now)) {
                Some((n, dist)) => {
                    trace.push("identity", format!("projected-id:{}@{dist:.3}", n.id));
                    (n, FixSource::ProjectedId)
                }
                None => {
                    trace.push("identity", "none");
                    return Err("no-identity");
                }
            },
        };

        // A decoded code fixes the orientation; the prior only chooses
        // among hypotheses when the code was not read.
        let filter_prior = if decoded.is_some() { None } else { fresh_prior };
        let selected = filter_with_prior(&set, node, filter_prior, now).ok_or("pnp")?;
        trace.push("filter", if selected.filtered { "prior" } else { "confidence" });
        Ok(LocalizationFix {
            timestamp_s: now,
            world_pose: selected.world_pose,
            node_id: node.id,
            source,
            chosen_quadrant: selected.quadrant,
            reprojection_residual_px: selected.residual_px,
            filtered: selected.filtered,
        })
    }

    /// Correlation chain over the kernel ladder; returns the grid in the
    /// half-resolution ROI.
    fn find_grid(&self, crop: &GrayImage, trace: &mut FrameTrace) -> Option<BlobGrid> {
        let half_img = resize_half(crop).ok()?;
        let cfg = &self.config;
        let mut last_failure = String::from("none");
        for &scale in &cfg.kernel_ladder {
            let k_full = cfg.kernel_size_px as f64 * scale;
            let mut k_half = (k_full / 2.0).round() as usize;
            if k_half % 2 == 0 {
                k_half += 1;
            }
            let k_half = k_half.max(9);
            let radius = ((cfg.opening_radius_px as f64 * scale).round() as usize).max(1);
            let Ok(opened) = morphological_open(&half_img, radius, cfg.opening_iterations) else {
                continue;
            };
            let field = rescale_signed(&normalize_contrast(&opened, 1.0, 99.0));
            let Ok(kernel) = make_double_kernel(k_half) else {
                continue;
            };
            let Ok(response) = correlate(&field, &kernel) else {
                last_failure = format!("roi-too-small@{scale}");
                continue;
            };
            // Codes correlate more weakly than solid discs; a relaxed factor
            // recovers them when the first pass leaves one out.
            for factor in [cfg.threshold_factor, RELAXED_THRESHOLD_RATIO * cfg.threshold_factor] {
                let Ok(mask) = threshold_relative(&response, factor) else {
                    continue;
                };
                match detect_blob_grid(&mask) {
                    Ok(g) => {
                        // Blob pitch is 1.5 blob diameters and the inner kernel
                        // disc is 0.6 kernel sizes, so spacing ≈ 0.9 kernel.
                        let expected = 0.9 * k_full / 2.0;
                        let ratio = g.mean_spacing_px / expected;
                        if (0.7..=1.4).contains(&ratio) {
                            trace.push("grid", format!("ok@{scale}/{factor:.2}"));
                            return Some(g);
                        }
                        last_failure = format!("spacing-mismatch@{scale}");
                    }
                    Err(e) => last_failure = format!("{}@{scale}", grid_failure_tag(&e)),
                }
            }
        }
        trace.push("grid", last_failure);
        None
    }

    fn decode(&self, img: &GrayImage, grid: &BlobGrid) -> Result<DecodeResult, DecodeError> {
        let h = grid.homography().ok_or(DecodeError::NoValidCode)?;
        let g = &self.config.geometry;
        let s = 0.5 * g.code_size_m / g.pitch_m;
        let quads: Vec<[Point2; 4]> = CORNERS
            .iter()
            .map(|&(r, c)| {
                let (x, y) = (c as f64, r as f64);
                [(x - s, y - s), (x + s, y - s), (x + s, y + s), (x - s, y + s)].map(|(u, v)| h.apply(&Point2::new(u, v)))
            })
            .collect();
        let budget = Duration::from_millis(self.config.decode_budget_ms);
        let start = Instant::now();
        let mut last = DecodeError::NoValidCode;
        for (k, quad) in quads.iter().enumerate() {
            let Some(left) = budget.checked_sub(start.elapsed()) else {
                return Err(DecodeError::Timeout);
            };
            match decode_roi(img, std::slice::from_ref(quad), left) {
                // A code read at canonical corner k must appear turned k quarter turns.
                Ok(d) if d.orientation_quadrant as usize == k => {
                    return Ok(DecodeResult { quad_index: k, ..d });
                }
                Ok(_) => {}
                Err(e) => last = e,
            }
        }
        Err(match last {
            DecodeError::Timeout => DecodeError::Timeout,
            _ => DecodeError::NoValidCode,
        })
    }

    /// Nearest node to the back-projected grid center, with the distance
    /// between the two.
    fn project_identity(&self, grid: &BlobGrid, prior: &OdometryPrior, now: f64) -> Option<(&GroundNode, f64)> {
        let floor = crate::geometry::FloorModel::default();
        let pt = project_node_center(grid.center((1, 1)), &prior.pose, &self.k_undistorted, &floor).ok()?;
        let node = identify_node(&pt, &self.nodes, self.config.max_ident_dist_m, now - prior.timestamp_s, prior.age_limit_s)?;
        Some((node, (node.world_xy_m - pt).norm()))
    }
}

fn grid_failure_tag(e: &crate::gridpose::GridError) -> &'static str {
    match e {
        crate::gridpose::GridError::InsufficientBlobs(_) => "insufficient-blobs",
        crate::gridpose::GridError::NotAGrid { .. } => "not-a-grid",
    }
}
