//! Raster buffers and the image operations of the node-localization chain.

mod components;
mod filters;
pub mod pgm;

use thiserror::Error;

pub use components::{connected_components, Component, Labeling};
pub use filters::{
    box_blur, correlate, focus_measure, gaussian_blur, laplacian, make_double_kernel, morphological_open,
    normalize_contrast, rescale_signed, resize_half, threshold_relative, FocusReport, DEFAULT_ALPHA,
};

#[derive(Debug, Error)]
pub enum ImagingError {
    #[error("image is {width}x{height}, need at least {min_width}x{min_height}")]
    TooSmall {
        width: usize,
        height: usize,
        min_width: usize,
        min_height: usize,
    },
    #[error("buffer holds {got} values, expected {expected}")]
    BufferSize { got: usize, expected: usize },
    #[error("invalid kernel: {0}")]
    InvalidKernel(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("malformed PGM: {0}")]
    Pgm(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// 8-bit grayscale image, row-major.
#[derive(Clone, PartialEq, Eq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    pixels: Vec<u8>,
}

impl std::fmt::Debug for GrayImage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "GrayImage({}x{})", self.width, self.height)
    }
}

impl GrayImage {
    /// Black image. Panics on zero dimensions.
    pub fn new(width: usize, height: usize) -> Self {
        Self::filled(width, height, 0)
    }

    pub fn filled(width: usize, height: usize, value: u8) -> Self {
        assert!(width >= 1 && height >= 1, "image dimensions must be at least 1x1");
        Self {
            width,
            height,
            pixels: vec![value; width * height],
        }
    }

    pub fn from_raw(width: usize, height: usize, pixels: Vec<u8>) -> Result<Self, ImagingError> {
        if width == 0 || height == 0 {
            return Err(ImagingError::TooSmall {
                width,
                height,
                min_width: 1,
                min_height: 1,
            });
        }
        if pixels.len() != width * height {
            return Err(ImagingError::BufferSize {
                got: pixels.len(),
                expected: width * height,
            });
        }
        Ok(Self { width, height, pixels })
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> u8) -> Self {
        let mut img = Self::new(width, height);
        for y in 0..height {
            for x in 0..width {
                img.pixels[y * width + x] = f(x, y);
            }
        }
        img
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn pixels_mut(&mut self) -> &mut [u8] {
        &mut self.pixels
    }

    pub fn into_raw(self) -> Vec<u8> {
        self.pixels
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.pixels[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: u8) {
        self.pixels[y * self.width + x] = v;
    }

    /// Pixel with coordinates clamped to the image (edge replication).
    #[inline]
    pub fn get_clamped(&self, x: isize, y: isize) -> u8 {
        let xc = x.clamp(0, self.width as isize - 1) as usize;
        let yc = y.clamp(0, self.height as isize - 1) as usize;
        self.pixels[yc * self.width + xc]
    }

    /// Bilinear interpolation; `None` outside `[0, w-1] × [0, h-1]`.
    pub fn sample_bilinear(&self, x: f64, y: f64) -> Option<f64> {
        const EPS: f64 = 1e-6;
        let max_x = (self.width - 1) as f64;
        let max_y = (self.height - 1) as f64;
        if !(x >= -EPS && y >= -EPS && x <= max_x + EPS && y <= max_y + EPS) {
            return None;
        }
        let x = x.clamp(0.0, max_x);
        let y = y.clamp(0.0, max_y);
        let x0 = (x.floor() as usize).min(self.width.saturating_sub(2));
        let y0 = (y.floor() as usize).min(self.height.saturating_sub(2));
        let x1 = (x0 + 1).min(self.width - 1);
        let y1 = (y0 + 1).min(self.height - 1);
        let fx = x - x0 as f64;
        let fy = y - y0 as f64;
        let p = |xx: usize, yy: usize| self.pixels[yy * self.width + xx] as f64;
        let top = p(x0, y0) * (1.0 - fx) + p(x1, y0) * fx;
        let bottom = p(x0, y1) * (1.0 - fx) + p(x1, y1) * fx;
        Some(top * (1.0 - fy) + bottom * fy)
    }

    pub fn mean(&self) -> f64 {
        self.pixels.iter().map(|&p| p as f64).sum::<f64>() / self.pixels.len() as f64
    }

    /// Crops the rectangle `[x0, x0+w) × [y0, y0+h)` clamped to the image.
    /// Returns the crop and its actual top-left corner.
    pub fn crop_clamped(&self, x0: isize, y0: isize, w: usize, h: usize) -> (GrayImage, (usize, usize)) {
        let xa = x0.clamp(0, self.width as isize - 1) as usize;
        let ya = y0.clamp(0, self.height as isize - 1) as usize;
        let xb = ((x0 + w as isize).clamp(1, self.width as isize) as usize).max(xa + 1);
        let yb = ((y0 + h as isize).clamp(1, self.height as isize) as usize).max(ya + 1);
        let mut out = GrayImage::new(xb - xa, yb - ya);
        for y in ya..yb {
            let src = &self.pixels[y * self.width + xa..y * self.width + xb];
            out.pixels[(y - ya) * out.width..(y - ya + 1) * out.width].copy_from_slice(src);
        }
        (out, (xa, ya))
    }

    pub fn inverted(&self) -> GrayImage {
        GrayImage {
            width: self.width,
            height: self.height,
            pixels: self.pixels.iter().map(|&p| 255 - p).collect(),
        }
    }

    pub fn to_field(&self) -> ScalarField {
        ScalarField {
            width: self.width,
            height: self.height,
            values: self.pixels.iter().map(|&p| p as f64).collect(),
        }
    }
}

/// Real-valued raster, row-major. Values are finite except where an
/// operation documents a sentinel (correlation margins use `-inf`).
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    width: usize,
    height: usize,
    values: Vec<f64>,
}

impl ScalarField {
    pub fn new(width: usize, height: usize, values: Vec<f64>) -> Result<Self, ImagingError> {
        if values.len() != width * height {
            return Err(ImagingError::BufferSize {
                got: values.len(),
                expected: width * height,
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(ImagingError::InvalidParameter("scalar field values must be finite".into()));
        }
        Ok(Self { width, height, values })
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            values: vec![0.0; width * height],
        }
    }

    pub(crate) fn from_vec_unchecked(width: usize, height: usize, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), width * height);
        Self { width, height, values }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.values[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: f64) {
        self.values[y * self.width + x] = v;
    }

    /// Largest finite value, if any.
    pub fn max_finite(&self) -> Option<f64> {
        self.values.iter().copied().filter(|v| v.is_finite()).fold(None, |acc, v| match acc {
            Some(m) if m >= v => Some(m),
            _ => Some(v),
        })
    }

    pub fn scaled(&self, s: f64) -> ScalarField {
        ScalarField {
            width: self.width,
            height: self.height,
            values: self.values.iter().map(|v| v * s).collect(),
        }
    }
}

/// Correlation kernel with odd dimensions.
#[derive(Debug, Clone, PartialEq)]
pub struct Kernel {
    width: usize,
    height: usize,
    weights: Vec<f64>,
}

impl Kernel {
    pub fn new(width: usize, height: usize, weights: Vec<f64>) -> Result<Self, ImagingError> {
        if width % 2 == 0 || height % 2 == 0 {
            return Err(ImagingError::InvalidKernel(format!("dimensions {width}x{height} must be odd")));
        }
        if weights.len() != width * height {
            return Err(ImagingError::BufferSize {
                got: weights.len(),
                expected: width * height,
            });
        }
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(ImagingError::InvalidKernel("non-finite weight".into()));
        }
        Ok(Self { width, height, weights })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.weights[y * self.width + x]
    }
}
