use nalgebra::{Matrix3, Vector2, Vector3};

use crate::geometry::Point2;
use crate::homography::Homography;
use crate::imaging::{connected_components, GrayImage};

use super::GridError;

const AREA_BAND: (f64, f64) = (0.25, 4.0);
const MAX_RESIDUAL_FRACTION: f64 = 0.15;
const MIN_SEPARATION_FRACTION: f64 = 0.5;

/// Nine blob centers in canonical row-major order. The canonical frame is
/// one of the four rotations of the node's label frame; which one is left
/// to orientation resolution.
#[derive(Debug, Clone, PartialEq)]
pub struct BlobGrid {
    pub centers_px: [Point2; 9],
    pub mean_spacing_px: f64,
    /// RMS distance of the centers from the fitted affine grid.
    pub residual_px: f64,
}

impl BlobGrid {
    pub fn center(&self, (r, c): (usize, usize)) -> Point2 {
        self.centers_px[r * 3 + c]
    }

    /// Maps every center through `p · scale + offset`.
    pub fn transformed(&self, scale: f64, offset: Vector2<f64>) -> BlobGrid {
        BlobGrid {
            centers_px: self.centers_px.map(|p| Point2::from(p.coords * scale + offset)),
            mean_spacing_px: self.mean_spacing_px * scale,
            residual_px: self.residual_px * scale,
        }
    }

    /// Projective map from grid coordinates (column, row) in `[0, 2]` to pixels.
    pub fn homography(&self) -> Option<Homography> {
        let grid: Vec<Point2> = (0..9).map(|i| Point2::new((i % 3) as f64, (i / 3) as f64)).collect();
        Homography::estimate(&grid, &self.centers_px)
    }

    pub fn min_separation_px(&self) -> f64 {
        let mut best = f64::INFINITY;
        for i in 0..9 {
            for j in i + 1..9 {
                best = best.min((self.centers_px[i] - self.centers_px[j]).norm());
            }
        }
        best
    }
}

/// Least-squares affine grid `p = o + col·a + row·b` over `(col, row, p)`.
fn fit_affine(samples: &[(f64, f64, Point2)]) -> Option<(Vector2<f64>, Vector2<f64>, Vector2<f64>, f64)> {
    let mut ata = Matrix3::<f64>::zeros();
    let mut atx = Vector3::<f64>::zeros();
    let mut aty = Vector3::<f64>::zeros();
    for &(c, r, p) in samples {
        let row = Vector3::new(1.0, c, r);
        ata += row * row.transpose();
        atx += row * p.x;
        aty += row * p.y;
    }
    let inv = ata.try_inverse()?;
    let sx = inv * atx;
    let sy = inv * aty;
    let o = Vector2::new(sx[0], sy[0]);
    let a = Vector2::new(sx[1], sy[1]);
    let b = Vector2::new(sx[2], sy[2]);
    let sq: f64 = samples
        .iter()
        .map(|&(c, r, p)| (p.coords - (o + a * c + b * r)).norm_squared())
        .sum();
    Some((o, a, b, (sq / samples.len() as f64).sqrt()))
}

/// Fits a 3×3 grid with `center` as the middle blob and its 8 nearest
/// neighbours around it.
fn fit_around(points: &[Point2], center: usize) -> Option<BlobGrid> {
    let c0 = points[center];
    let mut others: Vec<usize> = (0..points.len()).filter(|&i| i != center).collect();
    others.sort_by(|&i, &j| {
        (points[i] - c0)
            .norm_squared()
            .total_cmp(&(points[j] - c0).norm_squared())
            .then(i.cmp(&j))
    });
    others.truncate(8);
    if others.len() < 8 {
        return None;
    }
    // Column axis toward the nearest neighbour; row axis a quarter turn
    // clockwise in image coordinates (y down), so cross(a, b) > 0.
    let a = points[others[0]] - c0;
    let b = Vector2::new(-a.y, a.x);
    let (aa, bb) = (a.norm_squared(), b.norm_squared());
    if aa < 1e-9 {
        return None;
    }
    let mut slots: [Option<Point2>; 9] = [None; 9];
    slots[4] = Some(c0);
    for &i in &others {
        let d = points[i] - c0;
        let col = (d.dot(&a) / aa).round();
        let row = (d.dot(&b) / bb).round();
        if col.abs() > 1.0 || row.abs() > 1.0 {
            return None;
        }
        let idx = ((row + 1.0) * 3.0 + col + 1.0) as usize;
        if slots[idx].is_some() {
            return None;
        }
        slots[idx] = Some(points[i]);
    }
    let centers: [Point2; 9] = std::array::from_fn(|i| slots[i].expect("all slots filled"));
    let samples: Vec<(f64, f64, Point2)> = (0..9).map(|i| ((i % 3) as f64, (i / 3) as f64, centers[i])).collect();
    let (_, fa, fb, residual) = fit_affine(&samples)?;
    Some(BlobGrid {
        centers_px: centers,
        mean_spacing_px: 0.5 * (fa.norm() + fb.norm()),
        residual_px: residual,
    })
}

/// Extracts the 3×3 blob grid from a binary mask of correlation peaks.
pub fn detect_blob_grid(mask: &GrayImage) -> Result<BlobGrid, GridError> {
    let labeling = connected_components(mask);
    let mut areas: Vec<usize> = labeling.components.iter().map(|c| c.area).collect();
    if areas.len() < 9 {
        return Err(GridError::InsufficientBlobs(areas.len()));
    }
    areas.sort_unstable();
    let median = areas[areas.len() / 2] as f64;
    let points: Vec<Point2> = labeling
        .components
        .iter()
        .filter(|c| {
            let r = c.area as f64 / median;
            r >= AREA_BAND.0 && r <= AREA_BAND.1
        })
        .map(|c| Point2::new(c.centroid.0, c.centroid.1))
        .collect();
    if points.len() < 9 {
        return Err(GridError::InsufficientBlobs(points.len()));
    }
    let mut best: Option<BlobGrid> = None;
    let mut worst_seen: Option<(f64, f64)> = None;
    for center in 0..points.len() {
        let Some(g) = fit_around(&points, center) else {
            continue;
        };
        let ok = g.residual_px <= MAX_RESIDUAL_FRACTION * g.mean_spacing_px
            && g.min_separation_px() >= MIN_SEPARATION_FRACTION * g.mean_spacing_px;
        if !ok {
            worst_seen.get_or_insert((g.residual_px, g.mean_spacing_px));
            continue;
        }
        if best.as_ref().map_or(true, |b| g.residual_px < b.residual_px) {
            best = Some(g);
        }
    }
    best.ok_or_else(|| {
        let (residual_px, spacing_px) = worst_seen.unwrap_or((f64::INFINITY, 0.0));
        GridError::NotAGrid {
            residual_px,
            spacing_px,
        }
    })
}
