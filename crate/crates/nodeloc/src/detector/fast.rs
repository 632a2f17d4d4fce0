use std::f64::consts::TAU;

use crate::imaging::GrayImage;

use super::Keypoint;

/// Intensity difference a circle pixel needs to count as brighter/darker.
pub const SEGMENT_THRESHOLD: i16 = 20;
/// Contiguous arc length required on the 16-pixel circle.
pub const ARC_LENGTH: usize = 9;
const ORIENTATION_RADIUS: isize = 7;
const MIN_SIZE: usize = 32;

/// Bresenham circle of radius 3, clockwise from 12 o'clock.
pub(crate) const CIRCLE: [(isize, isize); 16] = [
    (0, -3),
    (1, -3),
    (2, -2),
    (3, -1),
    (3, 0),
    (3, 1),
    (2, 2),
    (1, 3),
    (0, 3),
    (-1, 3),
    (-2, 2),
    (-3, 1),
    (-3, 0),
    (-3, -1),
    (-2, -2),
    (-1, -3),
];

fn longest_run(flags: u32) -> usize {
    // Doubled so runs wrapping past index 15 are seen whole.
    let doubled = flags | (flags << 16);
    let (mut best, mut run) = (0, 0);
    for i in 0..32 {
        if doubled & (1 << i) != 0 {
            run += 1;
            best = best.max(run);
        } else {
            run = 0;
        }
    }
    best.min(16)
}

/// Segment-test corner score at `(x, y)`, or `None` if not a corner.
/// Caller guarantees a 3 px margin.
pub(crate) fn segment_score(img: &GrayImage, x: usize, y: usize, threshold: i16) -> Option<u32> {
    let center = img.get(x, y) as i16;
    let (mut bright, mut dark) = (0u32, 0u32);
    let (mut bright_sum, mut dark_sum) = (0u32, 0u32);
    for (i, &(dx, dy)) in CIRCLE.iter().enumerate() {
        let v = img.get((x as isize + dx) as usize, (y as isize + dy) as usize) as i16;
        if v > center + threshold {
            bright |= 1 << i;
            bright_sum += (v - center - threshold) as u32;
        } else if v < center - threshold {
            dark |= 1 << i;
            dark_sum += (center - threshold - v) as u32;
        }
    }
    let b = longest_run(bright) >= ARC_LENGTH;
    let d = longest_run(dark) >= ARC_LENGTH;
    match (b, d) {
        (false, false) => None,
        (true, false) => Some(bright_sum),
        (false, true) => Some(dark_sum),
        (true, true) => Some(bright_sum.max(dark_sum)),
    }
}

/// Intensity-centroid orientation in `[0, 2π)` over a disc of radius 7.
pub(crate) fn intensity_centroid_angle(img: &GrayImage, x: usize, y: usize) -> f64 {
    let (mut m10, mut m01) = (0i64, 0i64);
    let r = ORIENTATION_RADIUS;
    for dy in -r..=r {
        for dx in -r..=r {
            if dx * dx + dy * dy > r * r {
                continue;
            }
            let v = img.get_clamped(x as isize + dx, y as isize + dy) as i64;
            m10 += dx as i64 * v;
            m01 += dy as i64 * v;
        }
    }
    let a = (m01 as f64).atan2(m10 as f64);
    let a = if a < 0.0 { a + TAU } else { a };
    if a >= TAU {
        0.0
    } else {
        a
    }
}

/// Segment-test corners with 3×3 non-maximal suppression, strongest first.
pub fn detect_keypoints(img: &GrayImage, max_count: usize) -> Vec<Keypoint> {
    detect_keypoints_with_threshold(img, max_count, SEGMENT_THRESHOLD)
}

pub fn detect_keypoints_with_threshold(img: &GrayImage, max_count: usize, threshold: i16) -> Vec<Keypoint> {
    let (w, h) = (img.width(), img.height());
    if w < MIN_SIZE || h < MIN_SIZE {
        return Vec::new();
    }
    let mut scores = vec![0u32; w * h];
    for y in 3..h - 3 {
        for x in 3..w - 3 {
            if let Some(s) = segment_score(img, x, y, threshold) {
                // Zero is reserved for "not a corner".
                scores[y * w + x] = s + 1;
            }
        }
    }
    let mut kps = Vec::new();
    for y in 3..h - 3 {
        for x in 3..w - 3 {
            let s = scores[y * w + x];
            if s == 0 {
                continue;
            }
            let mut is_max = true;
            'nbr: for dy in -1isize..=1 {
                for dx in -1isize..=1 {
                    if dx == 0 && dy == 0 {
                        continue;
                    }
                    let n = scores[(y as isize + dy) as usize * w + (x as isize + dx) as usize];
                    // Earlier raster neighbours win ties.
                    let earlier = dy < 0 || (dy == 0 && dx < 0);
                    if n > s || (earlier && n == s) {
                        is_max = false;
                        break 'nbr;
                    }
                }
            }
            if is_max {
                kps.push(Keypoint {
                    x_px: x as f64,
                    y_px: y as f64,
                    orientation_rad: intensity_centroid_angle(img, x, y),
                    score: (s - 1) as f64,
                });
            }
        }
    }
    kps.sort_by(|a, b| {
        b.score
            .total_cmp(&a.score)
            .then(a.y_px.total_cmp(&b.y_px))
            .then(a.x_px.total_cmp(&b.x_px))
    });
    kps.truncate(max_count);
    kps
}
