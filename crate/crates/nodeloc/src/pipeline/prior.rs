use crate::geometry::RigidTransform;
use crate::gridpose::OdometryPrior;

use super::{FixSource, LocalizationFix};

/// When an absolute fix re-anchors the odometry.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReanchorPolicy {
    EveryFix,
    DecodedOnly,
}

impl ReanchorPolicy {
    pub fn as_str(&self) -> &'static str {
        match self {
            ReanchorPolicy::EveryFix => "every-fix",
            ReanchorPolicy::DecodedOnly => "decoded-only",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "every-fix" => Some(ReanchorPolicy::EveryFix),
            "decoded-only" => Some(ReanchorPolicy::DecodedOnly),
            _ => None,
        }
    }
}

/// Turns relative odometry into a world prior: `prior(t) = offset ∘ odom(t)`
/// with `offset = fix ∘ odom(t_fix)⁻¹` at the last anchor. The odometry
/// starts aligned with the world, so the initial offset is the identity.
#[derive(Debug, Clone)]
pub struct PriorTracker {
    offset: RigidTransform,
    anchor_time_s: f64,
    age_limit_s: f64,
    policy: ReanchorPolicy,
}

impl PriorTracker {
    pub fn new(start_time_s: f64, age_limit_s: f64, policy: ReanchorPolicy) -> Self {
        Self {
            offset: RigidTransform::identity(),
            anchor_time_s: start_time_s,
            age_limit_s,
            policy,
        }
    }

    pub fn prior(&self, odometry_pose: &RigidTransform) -> OdometryPrior {
        OdometryPrior {
            timestamp_s: self.anchor_time_s,
            pose: self.offset.compose(odometry_pose),
            age_limit_s: self.age_limit_s,
        }
    }

    pub fn anchor_time_s(&self) -> f64 {
        self.anchor_time_s
    }

    /// Re-anchors on `fix` if the policy allows; returns whether it did.
    pub fn observe_fix(&mut self, fix: &LocalizationFix, odometry_pose: &RigidTransform) -> bool {
        if self.policy == ReanchorPolicy::DecodedOnly && fix.source != FixSource::Decoded {
            return false;
        }
        self.offset = fix.world_pose.compose(&odometry_pose.inverse()).renormalized();
        self.anchor_time_s = fix.timestamp_s;
        true
    }
}
