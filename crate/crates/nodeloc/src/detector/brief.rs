use crate::imaging::GrayImage;

use super::pattern::PATTERN;
use super::{DetectorError, Keypoint};

/// Distance from the keypoint to the image border needed for description:
/// rotated pattern radius (13 px, rounded) plus the 5×5 smoothing window.
pub const DESCRIBE_MARGIN: usize = 16;

/// 256 binary intensity comparisons.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct BinaryDescriptor(pub [u64; 4]);

impl BinaryDescriptor {
    pub const BITS: u32 = 256;

    pub fn hamming(&self, other: &BinaryDescriptor) -> u32 {
        self.0.iter().zip(&other.0).map(|(a, b)| (a ^ b).count_ones()).sum()
    }

    pub fn bit(&self, i: usize) -> bool {
        self.0[i / 64] >> (i % 64) & 1 == 1
    }

    pub fn complement(&self) -> BinaryDescriptor {
        BinaryDescriptor(self.0.map(|w| !w))
    }
}

impl std::fmt::Debug for BinaryDescriptor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "BinaryDescriptor({:016x}{:016x}{:016x}{:016x})", self.0[3], self.0[2], self.0[1], self.0[0])
    }
}

/// Integral image for 5×5 box sums, so smoothing is exact integer arithmetic.
pub struct Describer {
    width: usize,
    height: usize,
    integral: Vec<u32>,
}

impl Describer {
    pub fn new(img: &GrayImage) -> Self {
        let (w, h) = (img.width(), img.height());
        let mut integral = vec![0u32; (w + 1) * (h + 1)];
        for y in 0..h {
            let mut row = 0u32;
            for x in 0..w {
                row += img.get(x, y) as u32;
                integral[(y + 1) * (w + 1) + x + 1] = integral[y * (w + 1) + x + 1] + row;
            }
        }
        Self {
            width: w,
            height: h,
            integral,
        }
    }

    #[inline]
    fn box5(&self, x: usize, y: usize) -> u32 {
        let w1 = self.width + 1;
        let (x0, y0, x1, y1) = (x - 2, y - 2, x + 3, y + 3);
        self.integral[y1 * w1 + x1] + self.integral[y0 * w1 + x0]
            - self.integral[y0 * w1 + x1]
            - self.integral[y1 * w1 + x0]
    }

    pub fn can_describe(&self, kp: &Keypoint) -> bool {
        let (x, y) = (kp.x_px.round(), kp.y_px.round());
        x >= DESCRIBE_MARGIN as f64
            && y >= DESCRIBE_MARGIN as f64
            && x + (DESCRIBE_MARGIN as f64) < self.width as f64
            && y + (DESCRIBE_MARGIN as f64) < self.height as f64
    }

    pub fn describe(&self, kp: &Keypoint) -> Result<BinaryDescriptor, DetectorError> {
        if !self.can_describe(kp) {
            return Err(DetectorError::PatchOutOfBounds {
                x: kp.x_px,
                y: kp.y_px,
            });
        }
        let (cx, cy) = (kp.x_px.round() as isize, kp.y_px.round() as isize);
        let (s, c) = kp.orientation_rad.sin_cos();
        let rot = |px: i8, py: i8| {
            let (px, py) = (px as f64, py as f64);
            let rx = (c * px - s * py).round() as isize;
            let ry = (s * px + c * py).round() as isize;
            ((cx + rx) as usize, (cy + ry) as usize)
        };
        let mut bits = [0u64; 4];
        for (i, p) in PATTERN.iter().enumerate() {
            let (ax, ay) = rot(p[0], p[1]);
            let (bx, by) = rot(p[2], p[3]);
            if self.box5(ax, ay) < self.box5(bx, by) {
                bits[i / 64] |= 1 << (i % 64);
            }
        }
        Ok(BinaryDescriptor(bits))
    }
}

/// Oriented binary descriptor of one keypoint, after 5×5 box smoothing.
pub fn describe(img: &GrayImage, kp: &Keypoint) -> Result<BinaryDescriptor, DetectorError> {
    Describer::new(img).describe(kp)
}
