//! Node detection: oriented corners, binary descriptors, reference
//! matching, clustering of matches and ROI selection.

mod brief;
mod cluster;
mod fast;
mod pattern;

use thiserror::Error;

use crate::geometry::Point2;
use crate::imaging::GrayImage;

pub use brief::{describe, BinaryDescriptor, Describer, DESCRIBE_MARGIN};
pub use cluster::{cluster_matches, select_roi, Cluster, Roi};
pub use fast::{detect_keypoints, detect_keypoints_with_threshold, ARC_LENGTH, SEGMENT_THRESHOLD};

/// Largest Hamming distance accepted for a match.
pub const MAX_MATCH_DISTANCE: u32 = 64;
/// Nearest/second-nearest distance ratio bound.
pub const MATCH_RATIO: f64 = 0.8;
/// Reference descriptors closer than this to an already kept one are
/// dropped. Repeated structure (code cells, identical blobs) otherwise
/// makes every match fail the ratio test against its own twin.
pub const REFERENCE_DEDUP_DISTANCE: u32 = 30;
/// Upper bound on cluster count.
pub const K_MAX: usize = 3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DetectorError {
    #[error("descriptor patch at ({x:.1}, {y:.1}) leaves the image")]
    PatchOutOfBounds { x: f64, y: f64 },
    #[error("reference image yields only {0} describable keypoints")]
    WeakReference(usize),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Keypoint {
    pub x_px: f64,
    pub y_px: f64,
    /// In `[0, 2π)`.
    pub orientation_rad: f64,
    pub score: f64,
}

impl Keypoint {
    pub fn position(&self) -> Point2 {
        Point2::new(self.x_px, self.y_px)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Match {
    pub ref_index: usize,
    pub keypoint: Keypoint,
    pub distance: u32,
}

/// Accepted matches, one per live keypoint at most.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MatchSet {
    pub matches: Vec<Match>,
}

impl MatchSet {
    pub fn len(&self) -> usize {
        self.matches.len()
    }

    pub fn is_empty(&self) -> bool {
        self.matches.is_empty()
    }

    pub fn positions(&self) -> Vec<Point2> {
        self.matches.iter().map(|m| m.keypoint.position()).collect()
    }
}

/// Nearest-reference matching with an absolute gate and a ratio test.
/// A single reference descriptor has no second-nearest, so only the
/// absolute gate applies.
pub fn match_reference(reference: &[BinaryDescriptor], live: &[(Keypoint, BinaryDescriptor)]) -> MatchSet {
    let mut matches = Vec::new();
    for (kp, d) in live {
        let (mut best, mut second, mut idx) = (u32::MAX, u32::MAX, 0);
        for (i, r) in reference.iter().enumerate() {
            let h = d.hamming(r);
            if h < best {
                second = best;
                best = h;
                idx = i;
            } else if h < second {
                second = h;
            }
        }
        if best > MAX_MATCH_DISTANCE {
            continue;
        }
        if second != u32::MAX && best as f64 > MATCH_RATIO * second as f64 {
            continue;
        }
        matches.push(Match {
            ref_index: idx,
            keypoint: *kp,
            distance: best,
        });
    }
    MatchSet { matches }
}

/// Keypoints of `img` that can be described, with their descriptors.
pub fn extract_features(img: &GrayImage, max_keypoints: usize) -> Vec<(Keypoint, BinaryDescriptor)> {
    let describer = Describer::new(img);
    detect_keypoints(img, max_keypoints)
        .into_iter()
        .filter_map(|kp| describer.describe(&kp).ok().map(|d| (kp, d)))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectorConfig {
    pub max_keypoints: usize,
    pub min_features: usize,
    pub merge_dist_px: f64,
    pub roi_half_extent_px: usize,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self {
            max_keypoints: 500,
            min_features: 10,
            merge_dist_px: 150.0,
            roi_half_extent_px: 160,
        }
    }
}

/// Outcome of one detection pass, kept for tracing.
#[derive(Debug, Clone)]
pub struct Detection {
    pub matches: MatchSet,
    pub clusters: Vec<Cluster>,
    pub roi: Option<Roi>,
}

/// Reference descriptors computed once from a node image.
#[derive(Debug, Clone)]
pub struct NodeDetector {
    reference: Vec<BinaryDescriptor>,
    config: DetectorConfig,
}

impl NodeDetector {
    pub fn from_reference_image(reference: &GrayImage, config: DetectorConfig) -> Result<Self, DetectorError> {
        let feats = extract_features(reference, config.max_keypoints);
        if feats.len() < 4 {
            return Err(DetectorError::WeakReference(feats.len()));
        }
        let mut reference: Vec<BinaryDescriptor> = Vec::new();
        for (_, d) in feats {
            if reference.iter().all(|r| r.hamming(&d) > REFERENCE_DEDUP_DISTANCE) {
                reference.push(d);
            }
        }
        Ok(Self { reference, config })
    }

    pub fn reference(&self) -> &[BinaryDescriptor] {
        &self.reference
    }

    pub fn config(&self) -> &DetectorConfig {
        &self.config
    }

    pub fn detect(&self, img: &GrayImage) -> Detection {
        let live = extract_features(img, self.config.max_keypoints);
        let matches = match_reference(&self.reference, &live);
        let clusters = cluster_matches(&matches.positions(), K_MAX, self.config.merge_dist_px);
        let roi = select_roi(img, &clusters, self.config.min_features, self.config.roi_half_extent_px);
        Detection { matches, clusters, roi }
    }
}
