//! Pinhole camera with polynomial distortion, rigid transforms, and the
//! pixel → camera ray → floor plane back-projection chain.
//!
//! World frame: z up, floor is the plane `z = h`. Camera poses are stored
//! camera-to-world, so `pose.transform_point(p_camera)` yields world points.

use std::fmt;
use std::str::FromStr;

use nalgebra::{Matrix3, Rotation3, UnitQuaternion, Vector3};
use thiserror::Error;

use crate::imaging::GrayImage;

pub type Point2 = nalgebra::Point2<f64>;
pub type Point3 = nalgebra::Point3<f64>;

const UNDISTORT_MAX_ITERS: usize = 20;
const UNDISTORT_TOL_PX: f64 = 0.05;
const ROTATION_TOL: f64 = 1e-9;
const RAY_PARALLEL_TOL: f64 = 1e-9;
const MIN_DEPTH: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("invalid intrinsics: {0}")]
    InvalidIntrinsics(String),
    #[error("rotation is not orthonormal with determinant +1")]
    InvalidRotation,
    #[error("undistortion did not converge at ({x:.2}, {y:.2}) px: residual {residual:.3} px")]
    NonConvergence { x: f64, y: f64, residual: f64 },
    #[error("image is {got_w}x{got_h}, intrinsics expect {want_w}x{want_h}")]
    DimensionMismatch {
        got_w: usize,
        got_h: usize,
        want_w: usize,
        want_h: usize,
    },
    #[error("ray is parallel to the floor plane")]
    DegenerateGeometry,
    #[error("point is behind the camera (depth {0:.3e})")]
    BehindCamera(f64),
    #[error("intrinsics file line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

/// Pinhole intrinsics with three radial and two tangential coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct CameraIntrinsics {
    pub fx_px: f64,
    pub fy_px: f64,
    pub cx_px: f64,
    pub cy_px: f64,
    pub radial_coeffs: [f64; 3],
    pub tangential_coeffs: [f64; 2],
    pub width_px: usize,
    pub height_px: usize,
}

impl CameraIntrinsics {
    pub fn new(
        fx_px: f64,
        fy_px: f64,
        cx_px: f64,
        cy_px: f64,
        radial_coeffs: [f64; 3],
        tangential_coeffs: [f64; 2],
        width_px: usize,
        height_px: usize,
    ) -> Result<Self, GeometryError> {
        let k = Self {
            fx_px,
            fy_px,
            cx_px,
            cy_px,
            radial_coeffs,
            tangential_coeffs,
            width_px,
            height_px,
        };
        k.validate()?;
        Ok(k)
    }

    /// Ideal pinhole with no distortion.
    pub fn pinhole(fx: f64, fy: f64, cx: f64, cy: f64, width: usize, height: usize) -> Result<Self, GeometryError> {
        Self::new(fx, fy, cx, cy, [0.0; 3], [0.0; 2], width, height)
    }

    /// The simulator's default lens: 600 px focal length on a 640×480 sensor
    /// with mild barrel distortion.
    pub fn default_lens() -> Self {
        Self::new(600.0, 600.0, 319.5, 239.5, [-0.05, 0.01, 0.0], [0.0, 0.0], 640, 480)
            .expect("default lens is valid")
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        let finite = [self.fx_px, self.fy_px, self.cx_px, self.cy_px]
            .iter()
            .chain(self.radial_coeffs.iter())
            .chain(self.tangential_coeffs.iter())
            .all(|v| v.is_finite());
        if !finite {
            return Err(GeometryError::InvalidIntrinsics("non-finite value".into()));
        }
        if self.fx_px <= 0.0 || self.fy_px <= 0.0 {
            return Err(GeometryError::InvalidIntrinsics("focal lengths must be positive".into()));
        }
        if self.width_px == 0 || self.height_px == 0 {
            return Err(GeometryError::InvalidIntrinsics("zero sensor size".into()));
        }
        if !(0.0..self.width_px as f64).contains(&self.cx_px)
            || !(0.0..self.height_px as f64).contains(&self.cy_px)
        {
            return Err(GeometryError::InvalidIntrinsics("principal point outside sensor".into()));
        }
        Ok(())
    }

    /// Same projection with the distortion coefficients dropped; the model
    /// of images already passed through [`undistort_image`].
    pub fn without_distortion(&self) -> Self {
        Self {
            radial_coeffs: [0.0; 3],
            tangential_coeffs: [0.0; 2],
            ..*self
        }
    }

    pub fn has_distortion(&self) -> bool {
        self.radial_coeffs.iter().chain(self.tangential_coeffs.iter()).any(|&c| c != 0.0)
    }

    /// Applies the distortion polynomial to normalized image coordinates.
    pub fn distort_normalized(&self, x: f64, y: f64) -> (f64, f64) {
        let [k1, k2, k3] = self.radial_coeffs;
        let [p1, p2] = self.tangential_coeffs;
        let r2 = x * x + y * y;
        let radial = 1.0 + r2 * (k1 + r2 * (k2 + r2 * k3));
        let xd = x * radial + 2.0 * p1 * x * y + p2 * (r2 + 2.0 * x * x);
        let yd = y * radial + p1 * (r2 + 2.0 * y * y) + 2.0 * p2 * x * y;
        (xd, yd)
    }

    /// Forward distortion of an ideal pinhole pixel into the raw sensor image.
    pub fn distort_pixel(&self, p: Point2) -> Point2 {
        let (x, y) = self.pixel_to_normalized(p);
        let (xd, yd) = self.distort_normalized(x, y);
        self.normalized_to_pixel(xd, yd)
    }

    fn pixel_to_normalized(&self, p: Point2) -> (f64, f64) {
        ((p.x - self.cx_px) / self.fx_px, (p.y - self.cy_px) / self.fy_px)
    }

    fn normalized_to_pixel(&self, x: f64, y: f64) -> Point2 {
        Point2::new(x * self.fx_px + self.cx_px, y * self.fy_px + self.cy_px)
    }

    /// Undistorts normalized coordinates by fixed-point iteration.
    pub fn undistort_normalized(&self, xd: f64, yd: f64) -> Option<(f64, f64)> {
        let [k1, k2, k3] = self.radial_coeffs;
        let [p1, p2] = self.tangential_coeffs;
        let (mut x, mut y) = (xd, yd);
        for _ in 0..UNDISTORT_MAX_ITERS {
            let r2 = x * x + y * y;
            let radial = 1.0 + r2 * (k1 + r2 * (k2 + r2 * k3));
            if radial.abs() < 1e-12 || !radial.is_finite() {
                return None;
            }
            let dx = 2.0 * p1 * x * y + p2 * (r2 + 2.0 * x * x);
            let dy = p1 * (r2 + 2.0 * y * y) + 2.0 * p2 * x * y;
            x = (xd - dx) / radial;
            y = (yd - dy) / radial;
        }
        (x.is_finite() && y.is_finite()).then_some((x, y))
    }

    pub fn write_kv(&self) -> String {
        let [k1, k2, k3] = self.radial_coeffs;
        let [p1, p2] = self.tangential_coeffs;
        format!(
            "fx={}\nfy={}\ncx={}\ncy={}\nk1={}\nk2={}\nk3={}\np1={}\np2={}\nwidth={}\nheight={}\n",
            self.fx_px, self.fy_px, self.cx_px, self.cy_px, k1, k2, k3, p1, p2, self.width_px, self.height_px
        )
    }
}

impl FromStr for CameraIntrinsics {
    type Err = GeometryError;

    /// Parses `key=value` lines (also `key: value` or `key value`); `#` starts a comment.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        const KEYS: [&str; 11] = ["fx", "fy", "cx", "cy", "k1", "k2", "k3", "p1", "p2", "width", "height"];
        let mut values: [Option<f64>; 11] = [None; 11];
        for (i, raw) in s.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let parse_err = |msg: String| GeometryError::Parse { line: i + 1, msg };
            let (key, value) = line
                .split_once('=')
                .or_else(|| line.split_once(':'))
                .or_else(|| line.split_once(char::is_whitespace))
                .ok_or_else(|| parse_err(format!("expected key=value, got {line:?}")))?;
            let key = key.trim();
            let slot = KEYS
                .iter()
                .position(|k| *k == key)
                .ok_or_else(|| parse_err(format!("unknown key {key:?}")))?;
            if values[slot].is_some() {
                return Err(parse_err(format!("duplicate key {key:?}")));
            }
            let v: f64 = value
                .trim()
                .parse()
                .map_err(|_| parse_err(format!("bad number {:?}", value.trim())))?;
            values[slot] = Some(v);
        }
        let get = |idx: usize| {
            values[idx].ok_or_else(|| GeometryError::Parse {
                line: 0,
                msg: format!("missing key {:?}", KEYS[idx]),
            })
        };
        let dim = |idx: usize| -> Result<usize, GeometryError> {
            let v = get(idx)?;
            if v < 1.0 || v.fract() != 0.0 {
                return Err(GeometryError::InvalidIntrinsics(format!("{} must be a positive integer", KEYS[idx])));
            }
            Ok(v as usize)
        };
        CameraIntrinsics::new(
            get(0)?,
            get(1)?,
            get(2)?,
            get(3)?,
            [get(4)?, get(5)?, get(6)?],
            [get(7)?, get(8)?],
            dim(9)?,
            dim(10)?,
        )
    }
}

/// Floor plane `z = height_m` in the world frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FloorModel {
    pub height_m: f64,
}

impl FloorModel {
    pub fn new(height_m: f64) -> Self {
        assert!(height_m.is_finite(), "floor height must be finite");
        Self { height_m }
    }
}

impl Default for FloorModel {
    fn default() -> Self {
        Self { height_m: 0.0 }
    }
}

/// Rotation plus translation. Used camera-to-world for poses.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidTransform {
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

impl RigidTransform {
    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self, GeometryError> {
        if !is_rotation(&rotation) || !translation.iter().all(|v| v.is_finite()) {
            return Err(GeometryError::InvalidRotation);
        }
        Ok(Self { rotation, translation })
    }

    /// Projects `rotation` onto SO(3) before building the transform.
    pub fn from_approx(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Self {
        Self {
            rotation: orthonormalize(&rotation),
            translation,
        }
    }

    pub fn from_quaternion(q: UnitQuaternion<f64>, translation: Vector3<f64>) -> Self {
        Self {
            rotation: *q.to_rotation_matrix().matrix(),
            translation,
        }
    }

    pub fn from_yaw(yaw_rad: f64, translation: Vector3<f64>) -> Self {
        Self {
            rotation: *Rotation3::from_axis_angle(&Vector3::z_axis(), yaw_rad).matrix(),
            translation,
        }
    }

    pub fn quaternion(&self) -> UnitQuaternion<f64> {
        UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(self.rotation))
    }

    pub fn transform_point(&self, p: &Point3) -> Point3 {
        Point3::from(self.rotation * p.coords + self.translation)
    }

    pub fn transform_vector(&self, v: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * v
    }

    /// `self ∘ other`: applies `other` first.
    pub fn compose(&self, other: &RigidTransform) -> RigidTransform {
        RigidTransform {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    pub fn inverse(&self) -> RigidTransform {
        let rt = self.rotation.transpose();
        RigidTransform {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }

    /// Origin of the transformed frame, e.g. the camera center for a camera-to-world pose.
    pub fn origin(&self) -> Point3 {
        Point3::from(self.translation)
    }

    /// Heading of the frame's x axis projected on the world xy plane.
    pub fn yaw(&self) -> f64 {
        self.rotation[(1, 0)].atan2(self.rotation[(0, 0)])
    }

    pub fn renormalized(&self) -> RigidTransform {
        RigidTransform::from_approx(self.rotation, self.translation)
    }

    /// Rotation angle of `self⁻¹ ∘ other` in radians.
    pub fn angle_to(&self, other: &RigidTransform) -> f64 {
        let rel = self.rotation.transpose() * other.rotation;
        let c = ((rel.trace() - 1.0) / 2.0).clamp(-1.0, 1.0);
        c.acos()
    }
}

impl Default for RigidTransform {
    fn default() -> Self {
        Self::identity()
    }
}

impl fmt::Display for RigidTransform {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let q = self.quaternion();
        write!(
            f,
            "t=({:.4}, {:.4}, {:.4}) q=({:.5}, {:.5}, {:.5}, {:.5})",
            self.translation.x, self.translation.y, self.translation.z, q.w, q.i, q.j, q.k
        )
    }
}

pub fn is_rotation(m: &Matrix3<f64>) -> bool {
    let should_be_identity = m.transpose() * m;
    let ortho = (should_be_identity - Matrix3::identity()).iter().all(|v| v.abs() <= ROTATION_TOL);
    ortho && (m.determinant() - 1.0).abs() <= ROTATION_TOL
}

/// Nearest rotation matrix in the Frobenius sense.
pub fn orthonormalize(m: &Matrix3<f64>) -> Matrix3<f64> {
    let svd = m.svd(true, true);
    let u = svd.u.expect("u requested");
    let v_t = svd.v_t.expect("v_t requested");
    let mut r = u * v_t;
    if r.determinant() < 0.0 {
        let mut u_fixed = u;
        u_fixed.column_mut(2).neg_mut();
        r = u_fixed * v_t;
    }
    r
}

/// Removes lens distortion from a raw sensor pixel.
pub fn undistort_pixel(p: Point2, k: &CameraIntrinsics) -> Result<Point2, GeometryError> {
    if !k.has_distortion() {
        return Ok(p);
    }
    let xd = (p.x - k.cx_px) / k.fx_px;
    let yd = (p.y - k.cy_px) / k.fy_px;
    let fail = |residual| GeometryError::NonConvergence { x: p.x, y: p.y, residual };
    let (x, y) = k.undistort_normalized(xd, yd).ok_or(fail(f64::INFINITY))?;
    let ideal = k.normalized_to_pixel(x, y);
    let back = k.distort_pixel(ideal);
    let residual = (back - p).norm();
    if !(residual <= UNDISTORT_TOL_PX) {
        return Err(fail(residual));
    }
    Ok(ideal)
}

/// Precomputed source coordinates for undistorting many frames with one lens.
#[derive(Debug, Clone)]
pub struct UndistortMap {
    width: usize,
    height: usize,
    // Per output pixel: source (x, y) in the raw image.
    source: Vec<(f32, f32)>,
    identity: bool,
}

impl UndistortMap {
    pub fn new(k: &CameraIntrinsics) -> Self {
        let (w, h) = (k.width_px, k.height_px);
        let mut source = Vec::with_capacity(w * h);
        for v in 0..h {
            for u in 0..w {
                let s = k.distort_pixel(Point2::new(u as f64, v as f64));
                source.push((s.x as f32, s.y as f32));
            }
        }
        Self {
            width: w,
            height: h,
            source,
            identity: !k.has_distortion(),
        }
    }

    pub fn apply(&self, img: &GrayImage) -> Result<GrayImage, GeometryError> {
        if img.width() != self.width || img.height() != self.height {
            return Err(GeometryError::DimensionMismatch {
                got_w: img.width(),
                got_h: img.height(),
                want_w: self.width,
                want_h: self.height,
            });
        }
        if self.identity {
            return Ok(img.clone());
        }
        let mut out = GrayImage::new(self.width, self.height);
        for (dst, &(sx, sy)) in out.pixels_mut().iter_mut().zip(&self.source) {
            *dst = match img.sample_bilinear(sx as f64, sy as f64) {
                Some(v) => v.round().clamp(0.0, 255.0) as u8,
                None => 0,
            };
        }
        Ok(out)
    }
}

/// Resamples a raw sensor image onto the ideal pinhole grid of `k`.
pub fn undistort_image(img: &GrayImage, k: &CameraIntrinsics) -> Result<GrayImage, GeometryError> {
    UndistortMap::new(k).apply(img)
}

/// Ray through an undistorted pixel, intersected with the camera-frame plane z = 1.
pub fn pixel_to_unit_plane(c_p: Point2, k: &CameraIntrinsics) -> Point3 {
    Point3::new((c_p.x - k.cx_px) / k.fx_px, (c_p.y - k.cy_px) / k.fy_px, 1.0)
}

pub fn camera_to_world(p_c: &Point3, w_t_c: &RigidTransform) -> Point3 {
    w_t_c.transform_point(p_c)
}

/// Intersects the line through the camera center `c_0` and `c_w` with the floor.
pub fn intersect_floor(c_w: &Point3, c_0: &Point3, floor: &FloorModel) -> Result<Point3, GeometryError> {
    let dz = c_0.z - c_w.z;
    if dz.abs() <= RAY_PARALLEL_TOL {
        return Err(GeometryError::DegenerateGeometry);
    }
    let t = (floor.height_m - c_0.z) / dz;
    Ok(Point3::new(
        c_0.x + t * (c_0.x - c_w.x),
        c_0.y + t * (c_0.y - c_w.y),
        floor.height_m,
    ))
}

/// Pinhole projection of a world point (no distortion).
pub fn project_point(p_w: &Point3, w_t_c: &RigidTransform, k: &CameraIntrinsics) -> Result<Point2, GeometryError> {
    let p_c = w_t_c.inverse().transform_point(p_w);
    project_camera_point(&p_c, k)
}

pub fn project_camera_point(p_c: &Point3, k: &CameraIntrinsics) -> Result<Point2, GeometryError> {
    if !(p_c.z > MIN_DEPTH) {
        return Err(GeometryError::BehindCamera(p_c.z));
    }
    Ok(Point2::new(
        k.fx_px * p_c.x / p_c.z + k.cx_px,
        k.fy_px * p_c.y / p_c.z + k.cy_px,
    ))
}

/// Full back-projection of an undistorted pixel onto the floor.
pub fn backproject_to_floor(
    c_p: Point2,
    w_t_c: &RigidTransform,
    k: &CameraIntrinsics,
    floor: &FloorModel,
) -> Result<Point3, GeometryError> {
    let c_c = pixel_to_unit_plane(c_p, k);
    let c_w = camera_to_world(&c_c, w_t_c);
    intersect_floor(&c_w, &w_t_c.origin(), floor)
}

/// Convex hull in counter-clockwise order (y up), collinear points dropped.
pub fn convex_hull(points: &[Point2]) -> Vec<Point2> {
    let mut pts: Vec<Point2> = points.to_vec();
    pts.sort_by(|a, b| a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y)));
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let cross = |o: &Point2, a: &Point2, b: &Point2| (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x);
    let mut hull: Vec<Point2> = Vec::with_capacity(2 * pts.len());
    for pass in 0..2 {
        let start = hull.len();
        let iter: Box<dyn Iterator<Item = &Point2>> = if pass == 0 { Box::new(pts.iter()) } else { Box::new(pts.iter().rev()) };
        for p in iter {
            while hull.len() >= start + 2 && cross(&hull[hull.len() - 2], &hull[hull.len() - 1], p) <= 0.0 {
                hull.pop();
            }
            hull.push(*p);
        }
        hull.pop();
    }
    hull
}

/// Area centroid of a simple polygon; `None` when the area vanishes.
pub fn polygon_centroid(poly: &[Point2]) -> Option<Point2> {
    let n = poly.len();
    let (mut a, mut cx, mut cy) = (0.0, 0.0, 0.0);
    for i in 0..n {
        let (p, q) = (poly[i], poly[(i + 1) % n]);
        let w = p.x * q.y - q.x * p.y;
        a += w;
        cx += (p.x + q.x) * w;
        cy += (p.y + q.y) * w;
    }
    (a.abs() > 1e-12).then(|| Point2::new(cx / (3.0 * a), cy / (3.0 * a)))
}

/// Linear in position, spherical in rotation; `alpha` in [0, 1].
pub fn interpolate_pose(a: &RigidTransform, b: &RigidTransform, alpha: f64) -> RigidTransform {
    let q = a.quaternion().slerp(&b.quaternion(), alpha);
    RigidTransform::from_quaternion(q, a.translation.lerp(&b.translation, alpha))
}

/// Time-stamped poses sorted by time.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PoseSeries {
    pub samples: Vec<(f64, RigidTransform)>,
}

impl PoseSeries {
    pub fn new(samples: Vec<(f64, RigidTransform)>) -> Self {
        Self { samples }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn start_time(&self) -> Option<f64> {
        self.samples.first().map(|s| s.0)
    }

    pub fn end_time(&self) -> Option<f64> {
        self.samples.last().map(|s| s.0)
    }

    /// Interpolated pose; `None` outside the covered time span.
    pub fn at(&self, t: f64) -> Option<RigidTransform> {
        let first = self.samples.first()?;
        let last = self.samples.last()?;
        if t < first.0 - 1e-9 || t > last.0 + 1e-9 {
            return None;
        }
        let i = self.samples.partition_point(|s| s.0 <= t);
        if i == 0 {
            return Some(first.1);
        }
        if i >= self.samples.len() {
            return Some(last.1);
        }
        let (t0, p0) = self.samples[i - 1];
        let (t1, p1) = self.samples[i];
        let alpha = if t1 > t0 { (t - t0) / (t1 - t0) } else { 0.0 };
        Some(interpolate_pose(&p0, &p1, alpha))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn lens(k1: f64) -> CameraIntrinsics {
        CameraIntrinsics::new(600.0, 600.0, 320.0, 240.0, [k1, 0.0, 0.0], [0.0, 0.0], 640, 480).unwrap()
    }

    /// Camera looking straight down from `height` with yaw `psi`.
    fn down_pose(x: f64, y: f64, height: f64, psi: f64) -> RigidTransform {
        let fwd = Vector3::new(psi.cos(), psi.sin(), 0.0);
        let right = Vector3::new(psi.sin(), -psi.cos(), 0.0);
        let down = Vector3::new(0.0, 0.0, -1.0);
        let r = Matrix3::from_columns(&[fwd, right, down]);
        RigidTransform::new(r, Vector3::new(x, y, height)).unwrap()
    }

    #[test]
    fn principal_point_is_distortion_fixed_point() {
        let k = CameraIntrinsics::new(600.0, 590.0, 310.0, 250.0, [-0.2, 0.05, 0.01], [0.001, -0.002], 640, 480)
            .unwrap();
        let p = undistort_pixel(Point2::new(310.0, 250.0), &k).unwrap();
        assert_relative_eq!(p.x, 310.0, epsilon = 1e-12);
        assert_relative_eq!(p.y, 250.0, epsilon = 1e-12);
    }

    #[test]
    fn zero_coefficients_are_identity() {
        let k = lens(0.0);
        let p = undistort_pixel(Point2::new(100.0, 200.0), &k).unwrap();
        assert_eq!(p, Point2::new(100.0, 200.0));
    }

    #[test]
    fn undistort_inverts_forward_model() {
        let k = lens(-0.1);
        let ideal = Point2::new(400.0, 300.0);
        let raw = k.distort_pixel(ideal);
        let back = undistort_pixel(raw, &k).unwrap();
        assert!((back - ideal).norm() < 0.05, "{back:?}");
    }

    #[test]
    fn undistort_reports_non_convergence() {
        let k = CameraIntrinsics::new(100.0, 100.0, 50.0, 50.0, [5.0, 5.0, 5.0], [0.0, 0.0], 100, 100).unwrap();
        assert!(matches!(
            undistort_pixel(Point2::new(99.0, 99.0), &k),
            Err(GeometryError::NonConvergence { .. })
        ));
    }

    #[test]
    fn undistort_full_sensor_sweep() {
        for &k1 in &[-0.3, -0.1, 0.1, 0.3] {
            let k = lens(k1);
            for v in (0..480).step_by(20) {
                for u in (0..640).step_by(20) {
                    let p = Point2::new(u as f64, v as f64);
                    let ideal = undistort_pixel(p, &k).unwrap();
                    assert!((k.distort_pixel(ideal) - p).norm() < 0.05);
                }
            }
        }
    }

    #[test]
    fn undistort_image_zero_coeffs_is_exact_copy() {
        let k = lens(0.0);
        let mut img = GrayImage::new(640, 480);
        for (i, p) in img.pixels_mut().iter_mut().enumerate() {
            *p = (i * 7 % 251) as u8;
        }
        assert_eq!(undistort_image(&img, &k).unwrap(), img);
    }

    #[test]
    fn undistort_image_constant_stays_constant_inside() {
        let k = lens(-0.1);
        let img = GrayImage::filled(640, 480, 77);
        let out = undistort_image(&img, &k).unwrap();
        for v in 100..380 {
            for u in 100..540 {
                assert_eq!(out.get(u, v), 77);
            }
        }
    }

    #[test]
    fn undistort_image_straightens_grid_lines() {
        // Render a distorted image of vertical and horizontal lines by sampling the
        // ideal pattern at the undistorted location of every raw pixel.
        let k = lens(-0.1);
        let lines_x = [80.0, 200.0, 320.0, 440.0, 560.0];
        let lines_y = [60.0, 160.0, 240.0, 320.0, 420.0];
        let mut raw = GrayImage::filled(640, 480, 255);
        for v in 0..480 {
            for u in 0..640 {
                let ideal = undistort_pixel(Point2::new(u as f64, v as f64), &k).unwrap();
                let on_line = lines_x.iter().any(|&lx| (ideal.x - lx).abs() < 1.0)
                    || lines_y.iter().any(|&ly| (ideal.y - ly).abs() < 1.0);
                if on_line {
                    raw.set(u, v, 0);
                }
            }
        }
        let out = undistort_image(&raw, &k).unwrap();
        // Every dark pixel in the interior should sit within 1 px of an ideal line.
        let mut worst: f64 = 0.0;
        for v in 20..460 {
            for u in 20..620 {
                if out.get(u, v) < 64 {
                    let dx = lines_x.iter().map(|&lx| (u as f64 - lx).abs()).fold(f64::MAX, f64::min);
                    let dy = lines_y.iter().map(|&ly| (v as f64 - ly).abs()).fold(f64::MAX, f64::min);
                    worst = worst.max(dx.min(dy));
                }
            }
        }
        assert!(worst < 1.0 + 0.5, "max deviation {worst}");
    }

    #[test]
    fn undistort_image_dimension_mismatch() {
        let k = lens(0.0);
        assert!(matches!(
            undistort_image(&GrayImage::new(10, 10), &k),
            Err(GeometryError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn unit_plane_examples() {
        let k = CameraIntrinsics::pinhole(600.0, 500.0, 320.0, 240.0, 640, 480).unwrap();
        assert_eq!(pixel_to_unit_plane(Point2::new(320.0, 240.0), &k), Point3::new(0.0, 0.0, 1.0));
        assert_eq!(pixel_to_unit_plane(Point2::new(920.0, 240.0), &k), Point3::new(1.0, 0.0, 1.0));
        assert_eq!(pixel_to_unit_plane(Point2::new(20.0, 740.0), &k), Point3::new(-0.5, 1.0, 1.0));
    }

    #[test]
    fn camera_to_world_examples() {
        let p = Point3::new(0.3, -0.2, 1.5);
        assert_eq!(camera_to_world(&p, &RigidTransform::identity()), p);
        let t = RigidTransform::new(Matrix3::identity(), Vector3::new(1.0, 2.0, 3.0)).unwrap();
        assert_eq!(camera_to_world(&Point3::new(0.0, 0.0, 1.0), &t), Point3::new(1.0, 2.0, 4.0));
        // 90° yaw: x axis → y axis; composed by hand.
        let r = Matrix3::new(0.0, -1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0);
        let t = RigidTransform::new(r, Vector3::new(5.0, 0.0, 1.0)).unwrap();
        let out = camera_to_world(&Point3::new(1.0, 0.0, 0.0), &t);
        assert_relative_eq!(out, Point3::new(5.0, 1.0, 1.0), epsilon = 1e-15);
    }

    #[test]
    fn intersect_floor_examples() {
        let floor = FloorModel::new(0.0);
        let c = intersect_floor(&Point3::new(2.0, 3.0, 0.5), &Point3::new(2.0, 3.0, 1.0), &floor).unwrap();
        assert_eq!(c, Point3::new(2.0, 3.0, 0.0));
        let c_0 = Point3::new(0.0, 0.0, 2.0);
        let c_w = Point3::new(1.0, 0.0, 1.0);
        let c = intersect_floor(&c_w, &c_0, &floor).unwrap();
        assert_relative_eq!(c, Point3::new(2.0, 0.0, 0.0));
        // Collinear with c_0 → c_w.
        let d1 = c_w - c_0;
        let d2 = c - c_0;
        assert_relative_eq!(d1.cross(&d2).norm(), 0.0);
        assert!(matches!(
            intersect_floor(&Point3::new(1.0, 0.0, 2.0), &c_0, &floor),
            Err(GeometryError::DegenerateGeometry)
        ));
    }

    #[test]
    fn project_point_on_axis_hits_principal_point() {
        let k = lens(0.0);
        let pose = down_pose(1.0, 2.0, 1.2, 0.7);
        let p = project_point(&Point3::new(1.0, 2.0, 0.0), &pose, &k).unwrap();
        assert_relative_eq!(p, Point2::new(320.0, 240.0), epsilon = 1e-9);
        assert!(matches!(
            project_point(&Point3::new(1.0, 2.0, 2.0), &pose, &k),
            Err(GeometryError::BehindCamera(_))
        ));
    }

    #[test]
    fn project_then_unit_plane_recovers_camera_point() {
        let k = lens(0.0);
        let pose = down_pose(0.0, 0.0, 1.0, 0.3);
        let p_w = Point3::new(0.2, -0.1, 0.0);
        let px = project_point(&p_w, &pose, &k).unwrap();
        let p_c = pose.inverse().transform_point(&p_w);
        let ray = pixel_to_unit_plane(px, &k);
        assert_relative_eq!(ray * p_c.z, p_c, epsilon = 1e-9);
    }

    #[test]
    fn randomized_floor_round_trip() {
        let k = lens(0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let floor = FloorModel::new(0.0);
        let mut checked = 0;
        while checked < 1000 {
            let pose = down_pose(
                rng.gen_range(-5.0..5.0),
                rng.gen_range(-5.0..5.0),
                rng.gen_range(0.4..2.0),
                rng.gen_range(-3.1..3.1),
            );
            let tilt = Rotation3::from_euler_angles(rng.gen_range(-0.3..0.3), rng.gen_range(-0.3..0.3), 0.0);
            let pose = RigidTransform::new(pose.rotation * tilt.matrix(), pose.translation).unwrap();
            let p = Point3::new(
                pose.translation.x + rng.gen_range(-1.0..1.0),
                pose.translation.y + rng.gen_range(-1.0..1.0),
                0.0,
            );
            let Ok(px) = project_point(&p, &pose, &k) else { continue };
            let back = backproject_to_floor(px, &pose, &k, &floor).unwrap();
            assert!((back - p).norm() < 1e-6);
            checked += 1;
        }
    }

    #[test]
    fn intrinsics_text_round_trip() {
        let k = CameraIntrinsics::default_lens();
        let parsed: CameraIntrinsics = k.write_kv().parse().unwrap();
        assert_eq!(parsed, k);
        let err = "fx=1\nfy=oops\n".parse::<CameraIntrinsics>().unwrap_err();
        assert_eq!(err, GeometryError::Parse { line: 2, msg: "bad number \"oops\"".into() });
        assert!("fx=600\n".parse::<CameraIntrinsics>().is_err());
    }

    #[test]
    fn intrinsics_invariants_enforced() {
        assert!(CameraIntrinsics::pinhole(0.0, 1.0, 1.0, 1.0, 10, 10).is_err());
        assert!(CameraIntrinsics::pinhole(1.0, 1.0, 10.0, 1.0, 10, 10).is_err());
    }

    fn arb_rotation() -> impl Strategy<Value = Matrix3<f64>> {
        (-3.0..3.0f64, -1.5..1.5f64, -3.0..3.0f64)
            .prop_map(|(r, p, y)| *Rotation3::from_euler_angles(r, p, y).matrix())
    }

    fn arb_transform() -> impl Strategy<Value = RigidTransform> {
        (arb_rotation(), -10.0..10.0f64, -10.0..10.0f64, -10.0..10.0f64)
            .prop_map(|(r, x, y, z)| RigidTransform::new(r, Vector3::new(x, y, z)).unwrap())
    }

    proptest! {
        #[test]
        fn composition_is_associative(a in arb_transform(), b in arb_transform(), c in arb_transform()) {
            let l = a.compose(&b).compose(&c);
            let r = a.compose(&b.compose(&c));
            prop_assert!((l.rotation - r.rotation).abs().max() < 1e-9);
            prop_assert!((l.translation - r.translation).abs().max() < 1e-9);
        }

        #[test]
        fn inverse_composes_to_identity(a in arb_transform()) {
            let id = a.inverse().compose(&a);
            prop_assert!((id.rotation - Matrix3::identity()).abs().max() < 1e-9);
            prop_assert!(id.translation.abs().max() < 1e-9);
        }

        #[test]
        fn floor_intersection_lies_on_plane(
            x0 in -5.0..5.0f64, y0 in -5.0..5.0f64, z0 in 0.1..3.0f64,
            dx in -1.0..1.0f64, dy in -1.0..1.0f64, dz in 0.01..1.0f64, h in -1.0..0.05f64,
        ) {
            let c0 = Point3::new(x0, y0, z0);
            let cw = Point3::new(x0 + dx, y0 + dy, z0 - dz);
            let f = intersect_floor(&cw, &c0, &FloorModel::new(h)).unwrap();
            prop_assert!((f.z - h).abs() < 1e-12);
        }

        #[test]
        fn undistort_inverts_distort(u in 0.0..640.0f64, v in 0.0..480.0f64, k1 in -0.3..0.3f64) {
            let k = lens(k1);
            let p = Point2::new(u, v);
            let ideal = undistort_pixel(p, &k).unwrap();
            prop_assert!((k.distort_pixel(ideal) - p).norm() < 0.05);
        }
    }

    #[test]
    fn hull_of_square_with_interior_points() {
        let pts = [(0.0, 0.0), (2.0, 0.0), (2.0, 2.0), (0.0, 2.0), (1.0, 1.0), (1.0, 0.0), (0.5, 1.5)]
            .map(|(x, y)| Point2::new(x, y));
        let h = convex_hull(&pts);
        assert_eq!(h.len(), 4);
        let c = polygon_centroid(&h).unwrap();
        assert!((c - Point2::new(1.0, 1.0)).norm() < 1e-12);
    }

    #[test]
    fn triangle_centroid() {
        let tri = [Point2::new(0.0, 0.0), Point2::new(3.0, 0.0), Point2::new(0.0, 3.0)];
        let c = polygon_centroid(&convex_hull(&tri)).unwrap();
        assert!((c - Point2::new(1.0, 1.0)).norm() < 1e-12);
        assert!(polygon_centroid(&[Point2::new(0.0, 0.0), Point2::new(1.0, 1.0)]).is_none());
    }

}
