use crate::floorid::GroundNode;
use crate::geometry::{CameraIntrinsics, Point2, Point3, RigidTransform};

use super::{solve_pnp, BlobGrid, NodeGeometry, PnpError, PnpSolution, CORNERS};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OrientationSource {
    CornerStddev,
    DecodedCode,
    Unresolved,
}

impl OrientationSource {
    pub fn as_str(&self) -> &'static str {
        match self {
            OrientationSource::CornerStddev => "corner-stddev",
            OrientationSource::DecodedCode => "decoded-code",
            OrientationSource::Unresolved => "unresolved",
        }
    }
}

pub type CandidateOutcome = Result<PnpSolution, PnpError>;

/// Camera poses in the node frame, one per hypothesis `q` = canonical
/// corner of the orientation marker.
#[derive(Debug, Clone, PartialEq)]
pub struct PoseCandidateSet {
    pub candidates: [CandidateOutcome; 4],
    pub confidence_order: [u8; 4],
    pub orientation_source: OrientationSource,
}

impl PoseCandidateSet {
    pub fn residual_px(&self, q: u8) -> Option<f64> {
        self.candidates[q as usize].as_ref().ok().map(|s| s.residual_px)
    }
}

/// Object/image correspondences for hypothesis `q`, marker corner excluded.
pub fn correspondences(grid: &BlobGrid, q: u8, geometry: &NodeGeometry) -> (Vec<Point3>, Vec<Point2>) {
    let excluded = CORNERS[q as usize % 4];
    let mut object = Vec::with_capacity(8);
    let mut image = Vec::with_capacity(8);
    for r in 0..3 {
        for c in 0..3 {
            if (r, c) == excluded {
                continue;
            }
            object.push(geometry.blob_point(geometry.label_for((r, c), q)));
            image.push(grid.center((r, c)));
        }
    }
    (object, image)
}

/// Solves all four rotation hypotheses. `resolved` carries the known
/// hypothesis and where it came from; without it candidates are ordered by
/// residual, then index.
pub fn four_pose_candidates(
    grid: &BlobGrid,
    resolved: Option<(u8, OrientationSource)>,
    geometry: &NodeGeometry,
    k: &CameraIntrinsics,
) -> Result<PoseCandidateSet, PnpError> {
    let candidates: [CandidateOutcome; 4] = std::array::from_fn(|q| {
        let (object, image) = correspondences(grid, q as u8, geometry);
        solve_pnp(&object, &image, k)
    });
    if candidates.iter().all(|c| c.is_err()) {
        return Err(PnpError::AllCandidatesFailed);
    }
    let mut order = [0u8, 1, 2, 3];
    let key = |q: u8| candidates[q as usize].as_ref().map(|s| s.residual_px).unwrap_or(f64::INFINITY);
    order.sort_by(|&a, &b| key(a).total_cmp(&key(b)).then(a.cmp(&b)));
    let source = match resolved {
        Some((q, src)) if src != OrientationSource::Unresolved => {
            let q = q % 4;
            let pos = order.iter().position(|&o| o == q).expect("permutation");
            order[..=pos].rotate_right(1);
            src
        }
        _ => OrientationSource::Unresolved,
    };
    Ok(PoseCandidateSet {
        candidates,
        confidence_order: order,
        orientation_source: source,
    })
}

/// World pose from dead reckoning, anchored at the last absolute fix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OdometryPrior {
    /// Time of the last absolute anchor.
    pub timestamp_s: f64,
    pub pose: RigidTransform,
    pub age_limit_s: f64,
}

impl OdometryPrior {
    pub fn is_fresh(&self, now_s: f64) -> bool {
        now_s - self.timestamp_s <= self.age_limit_s
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SelectedPose {
    pub world_pose: RigidTransform,
    pub quadrant: u8,
    pub residual_px: f64,
    /// Chosen by agreement with the prior rather than by confidence order.
    pub filtered: bool,
}

fn yaw_diff(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(std::f64::consts::TAU);
    d.min(std::f64::consts::TAU - d)
}

/// Candidates further than this from the prior heading are set aside
/// unless none is closer.
pub const PRIOR_YAW_GATE_RAD: f64 = std::f64::consts::FRAC_PI_4;

/// Lifts candidates to the world through the node pose and picks the one
/// closest in the plane to a fresh prior, or the most confident otherwise.
pub fn filter_with_prior(
    set: &PoseCandidateSet,
    node: &GroundNode,
    prior: Option<&OdometryPrior>,
    now_s: f64,
) -> Option<SelectedPose> {
    let node_pose = node.world_pose();
    let lifted: Vec<(u8, RigidTransform, f64)> = (0..4u8)
        .filter_map(|q| {
            set.candidates[q as usize]
                .as_ref()
                .ok()
                .map(|s| (q, node_pose.compose(&s.pose), s.residual_px))
        })
        .collect();
    if lifted.is_empty() {
        return None;
    }
    if let Some(p) = prior.filter(|p| p.is_fresh(now_s)) {
        let prior_xy = Point2::new(p.pose.translation.x, p.pose.translation.y);
        let prior_yaw = p.pose.yaw();
        // Hypotheses are a quarter turn apart, so heading separates them even
        // when the camera is over the node center and positions nearly agree.
        let gated: Vec<&(u8, RigidTransform, f64)> =
            lifted.iter().filter(|l| yaw_diff(l.1.yaw(), prior_yaw) <= PRIOR_YAW_GATE_RAD).collect();
        let pool: Vec<&(u8, RigidTransform, f64)> = if gated.is_empty() { lifted.iter().collect() } else { gated };
        let (q, pose, residual) = pool
            .into_iter()
            .min_by(|a, b| {
                let da = (Point2::new(a.1.translation.x, a.1.translation.y) - prior_xy).norm();
                let db = (Point2::new(b.1.translation.x, b.1.translation.y) - prior_xy).norm();
                da.total_cmp(&db)
                    .then(yaw_diff(a.1.yaw(), prior_yaw).total_cmp(&yaw_diff(b.1.yaw(), prior_yaw)))
                    .then(a.0.cmp(&b.0))
            })
            .copied()
            .expect("non-empty");
        return Some(SelectedPose {
            world_pose: pose,
            quadrant: q,
            residual_px: residual,
            filtered: true,
        });
    }
    let q = *set
        .confidence_order
        .iter()
        .find(|&&q| set.candidates[q as usize].is_ok())
        .expect("at least one success");
    let (_, pose, residual) = lifted.into_iter().find(|l| l.0 == q).expect("present");
    Some(SelectedPose {
        world_pose: pose,
        quadrant: q,
        residual_px: residual,
        filtered: false,
    })
}
