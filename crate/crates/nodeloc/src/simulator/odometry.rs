use nalgebra::{Rotation3, Vector3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::geometry::{PoseSeries, RigidTransform};

use super::SimError;

pub const ODOMETRY_RATE_HZ: f64 = 20.0;

/// Random-walk drift magnitudes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OdometryNoise {
    /// Planar position drift, m per √s (split evenly over x and y).
    pub sigma_pos_m: f64,
    /// Heading drift, rad per √s.
    pub sigma_yaw_rad: f64,
}

impl Default for OdometryNoise {
    fn default() -> Self {
        Self {
            sigma_pos_m: 0.02,
            sigma_yaw_rad: 0.005,
        }
    }
}

impl OdometryNoise {
    pub fn none() -> Self {
        Self {
            sigma_pos_m: 0.0,
            sigma_yaw_rad: 0.0,
        }
    }
}

/// Relative pose stream at 20 Hz whose error accumulates from zero.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct OdometryStream {
    pub poses: PoseSeries,
}

impl OdometryStream {
    pub fn at(&self, t: f64) -> Option<RigidTransform> {
        self.poses.at(t)
    }
}

/// Resamples `truth` at 20 Hz and corrupts it with an accumulated random
/// walk in planar position and heading. The heading error turns the
/// camera about the vertical axis and leaves the position untouched.
pub fn synth_odometry(truth: &PoseSeries, noise: &OdometryNoise, seed: u64) -> Result<OdometryStream, SimError> {
    if truth.len() < 2 {
        return Err(SimError::InvalidScenario("odometry needs at least two truth poses".into()));
    }
    let t0 = truth.start_time().expect("non-empty");
    let t1 = truth.end_time().expect("non-empty");
    let dt = 1.0 / ODOMETRY_RATE_HZ;
    let n = ((t1 - t0) / dt + 1e-9).floor() as usize + 1;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(2);
    let unit = Normal::new(0.0, 1.0).expect("unit normal");
    let step_pos = noise.sigma_pos_m / std::f64::consts::SQRT_2 * dt.sqrt();
    let step_yaw = noise.sigma_yaw_rad * dt.sqrt();
    let (mut ex, mut ey, mut eyaw) = (0.0, 0.0, 0.0);
    let mut samples = Vec::with_capacity(n);
    for i in 0..n {
        let t = t0 + i as f64 * dt;
        if i > 0 {
            ex += step_pos * unit.sample(&mut rng);
            ey += step_pos * unit.sample(&mut rng);
            eyaw += step_yaw * unit.sample(&mut rng);
        }
        let p = truth.at(t).expect("inside truth span");
        let rotation = Rotation3::from_axis_angle(&Vector3::z_axis(), eyaw).matrix() * p.rotation;
        let translation = p.translation + Vector3::new(ex, ey, 0.0);
        samples.push((t, RigidTransform::from_approx(rotation, translation)));
    }
    Ok(OdometryStream {
        poses: PoseSeries::new(samples),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn straight_line(duration: f64) -> PoseSeries {
        PoseSeries::new(
            (0..=(duration * 5.0) as usize)
                .map(|i| {
                    let t = i as f64 * 0.2;
                    (t, RigidTransform::from_yaw(0.1 * t, Vector3::new(0.8 * t, 0.0, 1.0)))
                })
                .collect(),
        )
    }

    #[test]
    fn zero_noise_equals_truth() {
        let truth = straight_line(5.0);
        let odo = synth_odometry(&truth, &OdometryNoise::none(), 1).unwrap();
        assert_eq!(odo.poses.len(), 101);
        for (t, p) in &odo.poses.samples {
            let q = truth.at(*t).unwrap();
            assert!((p.translation - q.translation).norm() < 1e-12);
            assert!(p.angle_to(&q) < 1e-9);
        }
    }

    #[test]
    fn anchored_and_deterministic() {
        let truth = straight_line(5.0);
        let a = synth_odometry(&truth, &OdometryNoise::default(), 5).unwrap();
        let b = synth_odometry(&truth, &OdometryNoise::default(), 5).unwrap();
        assert_eq!(a, b);
        let (t, p) = a.poses.samples[0];
        assert_eq!(t, 0.0);
        assert!((p.translation - truth.samples[0].1.translation).norm() < 1e-15);
    }

    #[test]
    fn drift_matches_random_walk_statistics() {
        let truth = straight_line(25.0);
        let noise = OdometryNoise {
            sigma_pos_m: 0.02,
            sigma_yaw_rad: 0.0,
        };
        let mut sq = 0.0;
        for seed in 0..200 {
            let odo = synth_odometry(&truth, &noise, seed).unwrap();
            let (t, p) = *odo.poses.samples.last().unwrap();
            let e = p.translation - truth.at(t).unwrap().translation;
            sq += e.xy().norm_squared();
        }
        let rms = (sq / 200.0).sqrt();
        assert!((rms - 0.1).abs() < 0.03, "rms {rms}");
    }

    #[test]
    fn needs_two_poses() {
        let one = PoseSeries::new(vec![(0.0, RigidTransform::identity())]);
        assert!(synth_odometry(&one, &OdometryNoise::default(), 0).is_err());
    }
}
