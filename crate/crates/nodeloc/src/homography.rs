//! Plane-to-plane projective maps estimated by normalized DLT.

use nalgebra::{Matrix3, SMatrix, SymmetricEigen, Vector3};

use crate::geometry::Point2;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Homography(pub Matrix3<f64>);

/// Similarity that moves the centroid to the origin and sets the mean
/// distance from it to √2.
fn normalizer(pts: &[Point2]) -> Option<Matrix3<f64>> {
    let n = pts.len() as f64;
    let (cx, cy) = pts.iter().fold((0.0, 0.0), |a, p| (a.0 + p.x / n, a.1 + p.y / n));
    let mean_d = pts.iter().map(|p| ((p.x - cx).powi(2) + (p.y - cy).powi(2)).sqrt()).sum::<f64>() / n;
    if mean_d < 1e-12 {
        return None;
    }
    let s = std::f64::consts::SQRT_2 / mean_d;
    Some(Matrix3::new(s, 0.0, -s * cx, 0.0, s, -s * cy, 0.0, 0.0, 1.0))
}

impl Homography {
    /// Least-squares fit mapping `src[i]` to `dst[i]`; needs 4 or more
    /// pairs in general position.
    pub fn estimate(src: &[Point2], dst: &[Point2]) -> Option<Homography> {
        if src.len() != dst.len() || src.len() < 4 {
            return None;
        }
        let ts = normalizer(src)?;
        let td = normalizer(dst)?;
        let mut ata = SMatrix::<f64, 9, 9>::zeros();
        for (s, d) in src.iter().zip(dst) {
            let a = ts * Vector3::new(s.x, s.y, 1.0);
            let b = td * Vector3::new(d.x, d.y, 1.0);
            let (x, y, w) = (a.x, a.y, a.z);
            let (u, v, t) = (b.x, b.y, b.z);
            let r1 = [0.0, 0.0, 0.0, -t * x, -t * y, -t * w, v * x, v * y, v * w];
            let r2 = [t * x, t * y, t * w, 0.0, 0.0, 0.0, -u * x, -u * y, -u * w];
            for r in [r1, r2] {
                for i in 0..9 {
                    for j in 0..9 {
                        ata[(i, j)] += r[i] * r[j];
                    }
                }
            }
        }
        let eig = SymmetricEigen::new(ata);
        let (imin, _) = eig
            .eigenvalues
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(b.1))?;
        let h = eig.eigenvectors.column(imin);
        let hn = Matrix3::new(h[0], h[1], h[2], h[3], h[4], h[5], h[6], h[7], h[8]);
        let m = td.try_inverse()? * hn * ts;
        let scale = m[(2, 2)];
        let m = if scale.abs() > 1e-12 { m / scale } else { m / m.norm() };
        if !m.iter().all(|v| v.is_finite()) {
            return None;
        }
        Some(Homography(m))
    }

    /// Maps the unit square corners (0,0), (1,0), (1,1), (0,1) to `quad`.
    pub fn from_unit_square(quad: &[Point2; 4]) -> Option<Homography> {
        let unit = [
            Point2::new(0.0, 0.0),
            Point2::new(1.0, 0.0),
            Point2::new(1.0, 1.0),
            Point2::new(0.0, 1.0),
        ];
        Homography::estimate(&unit, quad)
    }

    pub fn apply(&self, p: &Point2) -> Point2 {
        let v = self.0 * Vector3::new(p.x, p.y, 1.0);
        Point2::new(v.x / v.z, v.y / v.z)
    }

    pub fn inverse(&self) -> Option<Homography> {
        self.0.try_inverse().map(Homography)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn recovers_known_map() {
        let h = Homography(Matrix3::new(1.2, 0.1, 30.0, -0.05, 0.9, 12.0, 1e-4, -2e-4, 1.0));
        let src: Vec<Point2> = (0..9).map(|i| Point2::new((i % 3) as f64 * 50.0, (i / 3) as f64 * 40.0)).collect();
        let dst: Vec<Point2> = src.iter().map(|p| h.apply(p)).collect();
        let est = Homography::estimate(&src, &dst).unwrap();
        for p in &src {
            assert!((est.apply(p) - h.apply(p)).norm() < 1e-8);
        }
        let inv = est.inverse().unwrap();
        assert!((inv.apply(&dst[4]) - src[4]).norm() < 1e-8);
    }

    #[test]
    fn unit_square_corners_land_on_quad() {
        let quad = [
            Point2::new(10.0, 10.0),
            Point2::new(50.0, 12.0),
            Point2::new(48.0, 55.0),
            Point2::new(8.0, 50.0),
        ];
        let h = Homography::from_unit_square(&quad).unwrap();
        assert!((h.apply(&Point2::new(1.0, 1.0)) - quad[2]).norm() < 1e-9);
        assert!((h.apply(&Point2::new(0.0, 1.0)) - quad[3]).norm() < 1e-9);
    }

    #[test]
    fn degenerate_input_is_rejected() {
        let p = vec![Point2::new(1.0, 1.0); 4];
        assert!(Homography::estimate(&p, &p).is_none());
    }
}
