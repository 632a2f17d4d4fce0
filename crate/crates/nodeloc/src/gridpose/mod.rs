//! Pose from a node's 3×3 blob grid: grid extraction, orientation,
//! planar PnP, the four rotation hypotheses and prior-based selection.
//!
//! Node frame: origin at the node center on the floor, z up. Grid label
//! `(r, c)` sits at `x = (c - 1)·pitch`, `y = (1 - r)·pitch`, so label row 0
//! is on the +y side. Label corners are numbered clockwise seen from above:
//! 0 = (0,0), 1 = (0,2), 2 = (2,2), 3 = (2,0). The code at corner `i` is
//! drawn turned `i` quarter turns clockwise from upright.

mod candidates;
mod grid;
mod orientation;
mod pnp;
mod refine;

use thiserror::Error;

use crate::geometry::Point3;
use crate::nodecode::{code_hull_centroid, CODE_CELLS};

pub use candidates::{
    filter_with_prior, four_pose_candidates, CandidateOutcome, PRIOR_YAW_GATE_RAD, OdometryPrior, OrientationSource, PoseCandidateSet,
    SelectedPose,
};
pub use grid::{detect_blob_grid, BlobGrid};
pub use orientation::{corner_stddevs, resolve_orientation, DOMINANCE_RATIO, PATCH_FACTOR};
pub use pnp::{reprojection_rms, solve_pnp, PnpSolution};
pub use refine::refine_centers;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GridError {
    #[error("found {0} blobs, need 9")]
    InsufficientBlobs(usize),
    #[error("blob layout is not a 3x3 grid (residual {residual_px:.2} px, spacing {spacing_px:.2} px)")]
    NotAGrid { residual_px: f64, spacing_px: f64 },
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PnpError {
    #[error("need at least 4 correspondences, got {0}")]
    TooFewPoints(usize),
    #[error("object and image point counts differ")]
    CountMismatch,
    #[error("degenerate point configuration")]
    Degenerate,
    #[error("no quadrant hypothesis produced a pose")]
    AllCandidatesFailed,
}

/// Clockwise corner cycle on the 3×3 label grid.
pub const CORNERS: [(usize, usize); 4] = [(0, 0), (0, 2), (2, 2), (2, 0)];

/// Quarter turn clockwise (seen from above) of a grid label; maps corner
/// `i` to corner `i + 1`.
pub fn rotate_label((r, c): (usize, usize)) -> (usize, usize) {
    (c, 2 - r)
}

pub fn rotate_label_by(label: (usize, usize), quarter_turns: u8) -> (usize, usize) {
    (0..quarter_turns % 4).fold(label, |l, _| rotate_label(l))
}

pub fn corner_of(label: (usize, usize)) -> Option<u8> {
    CORNERS.iter().position(|&c| c == label).map(|i| i as u8)
}

/// Physical node layout.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NodeGeometry {
    /// Blob center spacing.
    pub pitch_m: f64,
    /// Side of an identity code and diameter of a solid disc blob.
    pub code_size_m: f64,
    /// Radius of the white node disc carrying the grid.
    pub disc_radius_m: f64,
    /// Label corner holding the solid orientation marker.
    pub orientation_marker_corner: u8,
    /// Place code correspondences at the code hull centroid instead of the
    /// label point.
    pub compensate_code_centroid: bool,
}

impl Default for NodeGeometry {
    fn default() -> Self {
        Self {
            pitch_m: 0.09,
            code_size_m: 0.06,
            disc_radius_m: 0.2,
            orientation_marker_corner: 0,
            compensate_code_centroid: true,
        }
    }
}

impl NodeGeometry {
    pub fn is_valid(&self) -> bool {
        self.pitch_m > self.code_size_m
            && self.code_size_m > 0.0
            && self.disc_radius_m > std::f64::consts::SQRT_2 * (self.pitch_m + self.code_size_m / 2.0)
            && self.orientation_marker_corner < 4
    }

    /// Node-frame position of a grid label.
    pub fn label_point(&self, (r, c): (usize, usize)) -> Point3 {
        Point3::new((c as f64 - 1.0) * self.pitch_m, (1.0 - r as f64) * self.pitch_m, 0.0)
    }

    /// Expected hull centroid of the blob at `label`. A code's hull misses
    /// half of its light outer corner cell, which moves the centroid
    /// slightly off the label point.
    pub fn blob_point(&self, label: (usize, usize)) -> Point3 {
        let p = self.label_point(label);
        match corner_of(label) {
            Some(k) if self.compensate_code_centroid && k != self.orientation_marker_corner => {
                let cell = self.code_size_m / CODE_CELLS as f64;
                let (mut x, mut y) = code_hull_centroid();
                for _ in 0..k {
                    (x, y) = (y, -x);
                }
                Point3::new(p.x + x * cell, p.y + y * cell, 0.0)
            }
            _ => p,
        }
    }

    /// Label seen at canonical grid position `g` when the marker sits at
    /// canonical corner `q`.
    pub fn label_for(&self, g: (usize, usize), q: u8) -> (usize, usize) {
        rotate_label_by(g, (4 + self.orientation_marker_corner - q % 4) % 4)
    }

    /// Hypothesis implied by a code with corner index `corner` read at
    /// orientation `quadrant` relative to the canonical grid.
    pub fn quadrant_from_code(&self, corner: u8, quadrant: u8) -> u8 {
        (4 + quadrant % 4 - corner % 4 + self.orientation_marker_corner) % 4
    }
}
