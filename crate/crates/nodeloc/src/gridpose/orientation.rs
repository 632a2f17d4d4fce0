use crate::imaging::GrayImage;

use super::{BlobGrid, NodeGeometry, CORNERS};

/// Patch side relative to the projected code size. Kept below 1 so the
/// patch stays inside the blob and the surrounding white disc does not
/// dilute the contrast between the solid marker and the codes.
pub const PATCH_FACTOR: f64 = 0.6;
/// The lowest corner deviation must be below this fraction of the second lowest.
pub const DOMINANCE_RATIO: f64 = 0.6;

fn patch_stddev(img: &GrayImage, cx: f64, cy: f64, half: f64) -> Option<f64> {
    let x0 = (cx - half).round().max(0.0) as usize;
    let y0 = (cy - half).round().max(0.0) as usize;
    let x1 = ((cx + half).round() as isize).min(img.width() as isize - 1);
    let y1 = ((cy + half).round() as isize).min(img.height() as isize - 1);
    if x1 < x0 as isize || y1 < y0 as isize {
        return None;
    }
    let (mut n, mut s, mut s2) = (0.0, 0.0, 0.0);
    for y in y0..=y1 as usize {
        for x in x0..=x1 as usize {
            let v = img.get(x, y) as f64;
            n += 1.0;
            s += v;
            s2 += v * v;
        }
    }
    let mean = s / n;
    Some((s2 / n - mean * mean).max(0.0).sqrt())
}

/// Intensity standard deviation around each canonical corner blob.
pub fn corner_stddevs(roi: &GrayImage, grid: &BlobGrid, geometry: &NodeGeometry) -> Option<[f64; 4]> {
    let code_px = geometry.code_size_m / geometry.pitch_m * grid.mean_spacing_px;
    let half = 0.5 * PATCH_FACTOR * code_px;
    let mut out = [0.0; 4];
    for (i, &corner) in CORNERS.iter().enumerate() {
        let c = grid.center(corner);
        out[i] = patch_stddev(roi, c.x, c.y, half)?;
    }
    Some(out)
}

/// Canonical corner holding the solid marker, or `None` when no corner is
/// clearly the most uniform. `roi` is the image before opening.
pub fn resolve_orientation(roi: &GrayImage, grid: &BlobGrid, geometry: &NodeGeometry) -> Option<u8> {
    let sd = corner_stddevs(roi, grid, geometry)?;
    let mut order = [0usize, 1, 2, 3];
    order.sort_by(|&a, &b| sd[a].total_cmp(&sd[b]).then(a.cmp(&b)));
    if sd[order[0]] < DOMINANCE_RATIO * sd[order[1]] {
        Some(order[0] as u8)
    } else {
        None
    }
}
