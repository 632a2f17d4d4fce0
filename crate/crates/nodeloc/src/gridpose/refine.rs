use crate::geometry::{convex_hull, polygon_centroid, Point2};
use crate::imaging::GrayImage;

use super::BlobGrid;

const WINDOW_FRACTION: f64 = 0.5;
const ITERATIONS: usize = 3;
const MIN_CONTRAST: f64 = 12.0;

fn percentile(sorted: &[u8], p: f64) -> f64 {
    sorted[((sorted.len() - 1) as f64 * p).round() as usize] as f64
}

/// Sub-pixel blob centers: the area centroid of the convex hull of the
/// mid-contrast iso-line inside a disc of half a grid spacing. The hull of
/// a code is its outer square regardless of the payload, so codes, discs
/// and the solid marker are all handled the same way.
pub fn refine_centers(img: &GrayImage, grid: &BlobGrid) -> BlobGrid {
    let half = WINDOW_FRACTION * grid.mean_spacing_px;
    let centers = grid.centers_px.map(|c| refine_one(img, c, half).unwrap_or(c));
    BlobGrid {
        centers_px: centers,
        ..grid.clone()
    }
}

fn refine_one(img: &GrayImage, coarse: Point2, half: f64) -> Option<Point2> {
    let mut c = coarse;
    for _ in 0..ITERATIONS {
        let next = hull_center(img, c, half)?;
        let step = (next - c).norm();
        c = next;
        if step < 1e-3 {
            break;
        }
    }
    ((c - coarse).norm() <= 0.5 * half).then_some(c)
}

fn hull_center(img: &GrayImage, c: Point2, half: f64) -> Option<Point2> {
    let (w, h) = (img.width() as isize, img.height() as isize);
    let xa = (c.x - half).floor() as isize;
    let ya = (c.y - half).floor() as isize;
    let xb = (c.x + half).ceil() as isize;
    let yb = (c.y + half).ceil() as isize;
    if xa < 0 || ya < 0 || xb >= w || yb >= h {
        return None;
    }
    let inside = |x: isize, y: isize| (x as f64 - c.x).powi(2) + (y as f64 - c.y).powi(2) <= half * half;
    let mut values = Vec::new();
    for y in ya..=yb {
        for x in xa..=xb {
            if inside(x, y) {
                values.push(img.get(x as usize, y as usize));
            }
        }
    }
    if values.len() < 9 {
        return None;
    }
    values.sort_unstable();
    let dark = percentile(&values, 0.05);
    let white = percentile(&values, 0.95);
    if white - dark < MIN_CONTRAST {
        return None;
    }
    let level = 0.5 * (dark + white);
    // Linearly interpolated crossings of the level between 4-neighbours.
    let mut crossings = Vec::new();
    for y in ya..=yb {
        for x in xa..=xb {
            if !inside(x, y) {
                continue;
            }
            let v = img.get(x as usize, y as usize) as f64;
            for (dx, dy) in [(1, 0), (0, 1)] {
                let (nx, ny) = (x + dx, y + dy);
                if !inside(nx, ny) {
                    continue;
                }
                let u = img.get(nx as usize, ny as usize) as f64;
                if (v < level) != (u < level) {
                    let t = (level - v) / (u - v);
                    crossings.push(Point2::new(x as f64 + t * dx as f64, y as f64 + t * dy as f64));
                }
            }
        }
    }
    polygon_centroid(&convex_hull(&crossings))
}
