use super::{GrayImage, ImagingError, Kernel, ScalarField};

/// Blur-gate scale factor between mean intensity and the focus threshold.
pub const DEFAULT_ALPHA: f64 = 0.2;

// Sobel smoothing taps; derivative taps are [-1, 0, 1]. The 1/8 factor keeps
// the derivative in intensity-per-pixel units.
const SOBEL_SMOOTH: [f64; 3] = [1.0, 2.0, 1.0];
const SOBEL_NORM: f64 = 0.125;

fn require_min(w: usize, h: usize, min: usize) -> Result<(), ImagingError> {
    if w < min || h < min {
        return Err(ImagingError::TooSmall {
            width: w,
            height: h,
            min_width: min,
            min_height: min,
        });
    }
    Ok(())
}

#[derive(Clone, Copy)]
enum Axis {
    X,
    Y,
}

/// One Sobel first-derivative pass with edge replication.
fn sobel_pass(src: &[f64], w: usize, h: usize, axis: Axis) -> Vec<f64> {
    let at = |x: isize, y: isize| {
        let xc = x.clamp(0, w as isize - 1) as usize;
        let yc = y.clamp(0, h as isize - 1) as usize;
        src[yc * w + xc]
    };
    let mut out = vec![0.0; w * h];
    for y in 0..h as isize {
        for x in 0..w as isize {
            let mut acc = 0.0;
            for (k, s) in SOBEL_SMOOTH.iter().enumerate() {
                let o = k as isize - 1;
                acc += match axis {
                    Axis::X => s * (at(x + 1, y + o) - at(x - 1, y + o)),
                    Axis::Y => s * (at(x + o, y + 1) - at(x + o, y - 1)),
                };
            }
            out[y as usize * w + x as usize] = acc * SOBEL_NORM;
        }
    }
    out
}

/// Sum of second derivatives, each obtained by applying the Sobel
/// derivative twice along its axis.
pub fn laplacian(img: &GrayImage) -> Result<ScalarField, ImagingError> {
    let (w, h) = (img.width(), img.height());
    require_min(w, h, 3)?;
    let base: Vec<f64> = img.pixels().iter().map(|&p| p as f64).collect();
    let dxx = sobel_pass(&sobel_pass(&base, w, h, Axis::X), w, h, Axis::X);
    let dyy = sobel_pass(&sobel_pass(&base, w, h, Axis::Y), w, h, Axis::Y);
    let values = dxx.iter().zip(&dyy).map(|(a, b)| a + b).collect();
    Ok(ScalarField::from_vec_unchecked(w, h, values))
}

/// Outcome of the blur gate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FocusReport {
    /// Population variance of the Laplacian.
    pub focus_measure: f64,
    pub mean_intensity: f64,
    pub threshold: f64,
    pub is_sharp: bool,
}

pub fn focus_measure(img: &GrayImage, alpha: f64) -> Result<FocusReport, ImagingError> {
    let lap = laplacian(img)?;
    let n = lap.values().len() as f64;
    let mean = lap.values().iter().sum::<f64>() / n;
    let var = lap.values().iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let mean_intensity = img.mean();
    let threshold = alpha * mean_intensity;
    Ok(FocusReport {
        focus_measure: var,
        mean_intensity,
        threshold,
        is_sharp: var > threshold,
    })
}

fn disc_offsets(radius: usize) -> Vec<(isize, isize)> {
    let r = radius as isize;
    let mut offs = Vec::new();
    for dy in -r..=r {
        for dx in -r..=r {
            if dx * dx + dy * dy <= r * r {
                offs.push((dx, dy));
            }
        }
    }
    offs
}

fn rank_filter(img: &GrayImage, offsets: &[(isize, isize)], take_min: bool) -> GrayImage {
    let (w, h) = (img.width() as isize, img.height() as isize);
    let src = img.pixels();
    let mut out = img.clone();
    let dst = out.pixels_mut();
    for y in 0..h {
        for x in 0..w {
            let mut acc = if take_min { u8::MAX } else { u8::MIN };
            for &(dx, dy) in offsets {
                let (xx, yy) = (x + dx, y + dy);
                if xx < 0 || yy < 0 || xx >= w || yy >= h {
                    continue;
                }
                let v = src[(yy * w + xx) as usize];
                acc = if take_min { acc.min(v) } else { acc.max(v) };
            }
            dst[(y * w + x) as usize] = acc;
        }
    }
    out
}

/// Grayscale opening with a disc structuring element: `iterations` erosions
/// followed by as many dilations. Bright details narrower than the
/// effective element vanish, so printed codes fill in as dark blobs.
pub fn morphological_open(img: &GrayImage, radius: usize, iterations: usize) -> Result<GrayImage, ImagingError> {
    if radius < 1 {
        return Err(ImagingError::InvalidParameter("opening radius must be >= 1".into()));
    }
    let offsets = disc_offsets(radius);
    let mut cur = img.clone();
    for _ in 0..iterations {
        cur = rank_filter(&cur, &offsets, true);
    }
    for _ in 0..iterations {
        cur = rank_filter(&cur, &offsets, false);
    }
    Ok(cur)
}

/// Maps intensities onto [-0.5, 0.5]: black → -0.5, white → +0.5.
pub fn rescale_signed(img: &GrayImage) -> ScalarField {
    let values = img.pixels().iter().map(|&p| p as f64 / 255.0 - 0.5).collect();
    ScalarField::from_vec_unchecked(img.width(), img.height(), values)
}

/// Linear stretch so the given low/high percentiles map to 0 and 255.
pub fn normalize_contrast(img: &GrayImage, low_pct: f64, high_pct: f64) -> GrayImage {
    let mut hist = [0usize; 256];
    for &p in img.pixels() {
        hist[p as usize] += 1;
    }
    let n = img.pixels().len();
    let quantile = |q: f64| {
        let target = ((q / 100.0) * n as f64).floor() as usize;
        let mut acc = 0;
        for (v, &c) in hist.iter().enumerate() {
            acc += c;
            if acc > target {
                return v;
            }
        }
        255
    };
    let lo = quantile(low_pct) as f64;
    let hi = quantile(high_pct) as f64;
    if hi <= lo {
        return img.clone();
    }
    let scale = 255.0 / (hi - lo);
    let pixels = img
        .pixels()
        .iter()
        .map(|&p| ((p as f64 - lo) * scale).round().clamp(0.0, 255.0) as u8)
        .collect();
    GrayImage::from_raw(img.width(), img.height(), pixels).expect("same dimensions")
}

/// Matched filter for a dark disc inside a bright ring.
///
/// Inner disc (diameter 0.6·size) weighs -0.5, the annulus between
/// diameters 0.75·size and size weighs +0.5, the ring in between is 0.
/// Against [`rescale_signed`] data the response peaks where a dark blob
/// sits in a bright surround.
pub fn make_double_kernel(size_px: usize) -> Result<Kernel, ImagingError> {
    if size_px < 9 || size_px % 2 == 0 {
        return Err(ImagingError::InvalidKernel(format!(
            "double kernel size must be odd and >= 9, got {size_px}"
        )));
    }
    let c = (size_px / 2) as f64;
    let s = size_px as f64;
    let (r_inner, r_gap, r_outer) = (0.3 * s, 0.375 * s, 0.5 * s);
    let mut weights = Vec::with_capacity(size_px * size_px);
    for y in 0..size_px {
        for x in 0..size_px {
            let d = ((x as f64 - c).powi(2) + (y as f64 - c).powi(2)).sqrt();
            weights.push(if d <= r_inner {
                -0.5
            } else if d >= r_gap && d <= r_outer {
                0.5
            } else {
                0.0
            });
        }
    }
    Kernel::new(size_px, size_px, weights)
}

/// Dense valid-region cross-correlation. Pixels closer than half a kernel
/// to the border are set to `-inf` so they never win a maximum.
pub fn correlate(field: &ScalarField, kernel: &Kernel) -> Result<ScalarField, ImagingError> {
    let (w, h) = (field.width(), field.height());
    let (kw, kh) = (kernel.width(), kernel.height());
    if w < kw || h < kh {
        return Err(ImagingError::TooSmall {
            width: w,
            height: h,
            min_width: kw,
            min_height: kh,
        });
    }
    let (hw, hh) = (kw / 2, kh / 2);
    // Nonzero taps in row-major kernel order.
    let taps: Vec<(usize, usize, f64)> = (0..kh)
        .flat_map(|j| (0..kw).map(move |i| (i, j)))
        .map(|(i, j)| (i, j, kernel.get(i, j)))
        .filter(|t| t.2 != 0.0)
        .collect();
    let src = field.values();
    let mut out = vec![f64::NEG_INFINITY; w * h];
    for y in hh..h - hh {
        let top = y - hh;
        for x in hw..w - hw {
            let left = x - hw;
            let mut acc = 0.0;
            for &(i, j, k) in &taps {
                acc += k * src[(top + j) * w + left + i];
            }
            out[y * w + x] = acc;
        }
    }
    Ok(ScalarField::from_vec_unchecked(w, h, out))
}

/// Binary mask (0/255) of values at or above `factor` times the global maximum.
pub fn threshold_relative(field: &ScalarField, factor: f64) -> Result<GrayImage, ImagingError> {
    if !(factor > 0.0 && factor <= 1.0) {
        return Err(ImagingError::InvalidParameter(format!("threshold factor {factor} not in (0, 1]")));
    }
    let mut mask = GrayImage::new(field.width(), field.height());
    let Some(max) = field.max_finite() else {
        return Ok(mask);
    };
    if max <= 0.0 {
        return Ok(mask);
    }
    let cut = factor * max;
    for (m, &v) in mask.pixels_mut().iter_mut().zip(field.values()) {
        if v >= cut {
            *m = 255;
        }
    }
    Ok(mask)
}

/// 2×2 box downsample, rounding half up.
pub fn resize_half(img: &GrayImage) -> Result<GrayImage, ImagingError> {
    require_min(img.width(), img.height(), 2)?;
    let (w, h) = (img.width() / 2, img.height() / 2);
    Ok(GrayImage::from_fn(w, h, |x, y| {
        let s = img.get(2 * x, 2 * y) as u32
            + img.get(2 * x + 1, 2 * y) as u32
            + img.get(2 * x, 2 * y + 1) as u32
            + img.get(2 * x + 1, 2 * y + 1) as u32;
        ((s + 2) / 4) as u8
    }))
}

fn separable(img: &GrayImage, taps: &[f64]) -> GrayImage {
    let r = (taps.len() / 2) as isize;
    let (w, h) = (img.width(), img.height());
    let mut tmp = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (k, t) in taps.iter().enumerate() {
                acc += t * img.get_clamped(x as isize + k as isize - r, y as isize) as f64;
            }
            tmp[y * w + x] = acc;
        }
    }
    GrayImage::from_fn(w, h, |x, y| {
        let mut acc = 0.0;
        for (k, t) in taps.iter().enumerate() {
            let yy = (y as isize + k as isize - r).clamp(0, h as isize - 1) as usize;
            acc += t * tmp[yy * w + x];
        }
        acc.round().clamp(0.0, 255.0) as u8
    })
}

/// Separable Gaussian blur with edge replication; `sigma <= 0` copies.
pub fn gaussian_blur(img: &GrayImage, sigma: f64) -> GrayImage {
    if sigma <= 0.0 {
        return img.clone();
    }
    let r = (3.0 * sigma).ceil() as isize;
    let mut taps: Vec<f64> = (-r..=r).map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp()).collect();
    let sum: f64 = taps.iter().sum();
    taps.iter_mut().for_each(|t| *t /= sum);
    separable(img, &taps)
}

/// Mean filter over a (2r+1)² window with edge replication.
pub fn box_blur(img: &GrayImage, radius: usize) -> GrayImage {
    let n = 2 * radius + 1;
    separable(img, &vec![1.0 / n as f64; n])
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Replicate-padded dense 3×3 convolution, written out longhand.
    fn dense_conv3(src: &[f64], w: usize, h: usize, k: [[f64; 3]; 3]) -> Vec<f64> {
        let mut out = vec![0.0; w * h];
        for y in 0..h {
            for x in 0..w {
                let mut acc = 0.0;
                for ky in 0..3 {
                    for kx in 0..3 {
                        let sx = (x as isize + kx as isize - 1).clamp(0, w as isize - 1) as usize;
                        let sy = (y as isize + ky as isize - 1).clamp(0, h as isize - 1) as usize;
                        acc += k[ky][kx] * src[sy * w + sx];
                    }
                }
                out[y * w + x] = acc;
            }
        }
        out
    }

    const SX: [[f64; 3]; 3] = [[-0.125, 0.0, 0.125], [-0.25, 0.0, 0.25], [-0.125, 0.0, 0.125]];
    const SY: [[f64; 3]; 3] = [[-0.125, -0.25, -0.125], [0.0, 0.0, 0.0], [0.125, 0.25, 0.125]];

    fn oracle_laplacian(img: &GrayImage) -> Vec<f64> {
        let (w, h) = (img.width(), img.height());
        let base: Vec<f64> = img.pixels().iter().map(|&p| p as f64).collect();
        let xx = dense_conv3(&dense_conv3(&base, w, h, SX), w, h, SX);
        let yy = dense_conv3(&dense_conv3(&base, w, h, SY), w, h, SY);
        xx.iter().zip(&yy).map(|(a, b)| a + b).collect()
    }

    fn oracle_variance(v: &[f64]) -> f64 {
        let n = v.len() as f64;
        let m = v.iter().sum::<f64>() / n;
        v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n
    }

    #[test]
    fn laplacian_of_constant_is_zero() {
        let lap = laplacian(&GrayImage::filled(12, 9, 128)).unwrap();
        assert!(lap.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn laplacian_of_ramp_vanishes_inside() {
        let img = GrayImage::from_fn(20, 10, |x, _| (x * 10) as u8);
        let lap = laplacian(&img).unwrap();
        for y in 2..8 {
            for x in 2..18 {
                assert_eq!(lap.get(x, y), 0.0);
            }
        }
    }

    #[test]
    fn laplacian_matches_dense_oracle_on_impulse() {
        let mut img = GrayImage::new(5, 5);
        img.set(2, 2, 255);
        assert_eq!(laplacian(&img).unwrap().values(), oracle_laplacian(&img).as_slice());
    }

    #[test]
    fn laplacian_matches_dense_oracle_on_random_images() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let img = GrayImage::from_fn(16, 16, |_, _| rng.gen());
            assert_eq!(laplacian(&img).unwrap().values(), oracle_laplacian(&img).as_slice());
        }
    }

    #[test]
    fn laplacian_rejects_tiny_images() {
        assert!(matches!(laplacian(&GrayImage::new(2, 5)), Err(ImagingError::TooSmall { .. })));
    }

    #[test]
    fn focus_of_constant_image_is_not_sharp() {
        let r = focus_measure(&GrayImage::filled(32, 32, 90), DEFAULT_ALPHA).unwrap();
        assert_eq!(r.focus_measure, 0.0);
        assert!(!r.is_sharp);
        assert!((r.threshold - 18.0).abs() < 1e-12);
    }

    #[test]
    fn focus_of_checkerboard_matches_oracle_and_drops_with_blur() {
        // A 1 px checkerboard is annihilated by the Sobel derivative in the
        // interior; its focus comes from edge replication and shrinks with size.
        let board = GrayImage::from_fn(16, 16, |x, y| if (x + y) % 2 == 0 { 0 } else { 255 });
        let r = focus_measure(&board, DEFAULT_ALPHA).unwrap();
        let expected = oracle_variance(&oracle_laplacian(&board));
        assert!((r.focus_measure - expected).abs() <= 1e-9 * expected.max(1.0));
        assert!(r.is_sharp, "{r:?}");
        let blurred = focus_measure(&gaussian_blur(&board, 3.0), DEFAULT_ALPHA).unwrap();
        assert!(blurred.focus_measure < r.focus_measure);
    }

    #[test]
    fn opening_examples() {
        let flat = GrayImage::filled(9, 9, 100);
        assert_eq!(morphological_open(&flat, 2, 3).unwrap(), flat);
        let mut speck = GrayImage::new(9, 9);
        speck.set(4, 4, 255);
        assert!(morphological_open(&speck, 1, 1).unwrap().pixels().iter().all(|&p| p == 0));
        assert!(morphological_open(&flat, 0, 1).is_err());
    }

    #[test]
    fn opening_is_stable_on_binary_inputs() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..10 {
            let img = GrayImage::from_fn(40, 40, |_, _| if rng.gen_bool(0.6) { 255 } else { 0 });
            let once = morphological_open(&img, 1, 3).unwrap();
            let twice = morphological_open(&once, 1, 3).unwrap();
            assert_eq!(once, twice);
        }
    }

    #[test]
    fn rescale_examples() {
        let img = GrayImage::from_raw(3, 1, vec![0, 255, 128]).unwrap();
        let f = rescale_signed(&img);
        assert_eq!(f.get(0, 0), -0.5);
        assert_eq!(f.get(1, 0), 0.5);
        assert!((f.get(2, 0) - 0.00196078431372549).abs() < 1e-15);
    }

    #[test]
    fn double_kernel_layout() {
        let k = make_double_kernel(9).unwrap();
        assert_eq!(k.get(4, 4), -0.5);
        for &(x, y) in &[(0, 0), (8, 0), (0, 8), (8, 8)] {
            assert!(k.get(x, y) == 0.0 || k.get(x, y) == 0.5);
        }
        assert!(k.weights().iter().map(|w| w.abs()).sum::<f64>() > 0.0);
        assert!(make_double_kernel(61).is_ok());
        assert!(make_double_kernel(7).is_err());
        assert!(make_double_kernel(10).is_err());
    }

    fn nested_loop_oracle(f: &ScalarField, k: &Kernel) -> Vec<f64> {
        let (w, h) = (f.width(), f.height());
        let (hw, hh) = (k.width() / 2, k.height() / 2);
        let mut out = vec![f64::NEG_INFINITY; w * h];
        for y in 0..h {
            for x in 0..w {
                if x < hw || y < hh || x + hw >= w || y + hh >= h {
                    continue;
                }
                let mut acc = 0.0;
                for j in 0..k.height() {
                    for i in 0..k.width() {
                        acc += k.get(i, j) * f.get(x + i - hw, y + j - hh);
                    }
                }
                out[y * w + x] = acc;
            }
        }
        out
    }

    #[test]
    fn correlate_matches_nested_loop_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for size in [9usize, 15, 21] {
            let kernel = make_double_kernel(size).unwrap();
            let w = rng.gen_range(size..=64);
            let h = rng.gen_range(size..=64);
            let field = ScalarField::new(w, h, (0..w * h).map(|_| rng.gen_range(-0.5..0.5)).collect()).unwrap();
            let fast = correlate(&field, &kernel).unwrap();
            let slow = nested_loop_oracle(&field, &kernel);
            for (a, b) in fast.values().iter().zip(&slow) {
                assert!(a == b || (a - b).abs() <= 1e-9, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn correlate_zero_field_and_identity_kernel() {
        let k = make_double_kernel(9).unwrap();
        let out = correlate(&ScalarField::zeros(20, 20), &k).unwrap();
        assert!(out.values().iter().all(|&v| v == 0.0 || v == f64::NEG_INFINITY));
        assert_eq!(out.get(10, 10), 0.0);
        let id = Kernel::new(1, 1, vec![1.0]).unwrap();
        let field = ScalarField::new(3, 2, vec![1.0, -2.0, 3.5, 0.0, 7.0, -0.25]).unwrap();
        assert_eq!(correlate(&field, &id).unwrap(), field);
        assert!(correlate(&ScalarField::zeros(5, 5), &k).is_err());
    }

    #[test]
    fn correlate_peaks_on_ideal_target() {
        let size = 21;
        let k = make_double_kernel(size).unwrap();
        let (w, h, cx, cy) = (60usize, 50usize, 27.0, 22.0);
        let vals = (0..w * h)
            .map(|i| {
                let (x, y) = ((i % w) as f64, (i / w) as f64);
                if ((x - cx).powi(2) + (y - cy).powi(2)).sqrt() <= 0.3 * size as f64 {
                    -0.5
                } else {
                    0.5
                }
            })
            .collect();
        let field = ScalarField::new(w, h, vals).unwrap();
        let resp = correlate(&field, &k).unwrap();
        let (mut best, mut arg) = (f64::NEG_INFINITY, 0);
        for (i, &v) in resp.values().iter().enumerate() {
            if v > best {
                best = v;
                arg = i;
            }
        }
        assert_eq!((arg % w, arg / w), (27, 22));
    }

    #[test]
    fn matched_filter_self_response_is_maximal_at_center() {
        let k = make_double_kernel(15).unwrap();
        // Sign-flipped pattern: where the kernel expects dark (-0.5) put -0.5 etc.
        let (w, h) = (45, 45);
        let mut field = ScalarField::zeros(w, h);
        for j in 0..15 {
            for i in 0..15 {
                field.set(15 + i, 15 + j, k.get(i, j));
            }
        }
        let resp = correlate(&field, &k).unwrap();
        let max = resp.max_finite().unwrap();
        assert_eq!(resp.get(22, 22), max);
    }

    #[test]
    fn threshold_examples() {
        let f = ScalarField::new(4, 1, vec![10.0, 8.0, 7.99, -3.0]).unwrap();
        let m = threshold_relative(&f, 0.8).unwrap();
        assert_eq!(m.pixels(), &[255, 255, 0, 0]);
        let neg = ScalarField::new(2, 1, vec![-1.0, -0.1]).unwrap();
        assert!(threshold_relative(&neg, 0.8).unwrap().pixels().iter().all(|&p| p == 0));
        assert!(threshold_relative(&f, 0.0).is_err());
    }

    #[test]
    fn resize_examples() {
        let flat = GrayImage::filled(7, 5, 42);
        let half = resize_half(&flat).unwrap();
        assert_eq!((half.width(), half.height()), (3, 2));
        assert!(half.pixels().iter().all(|&p| p == 42));
        let tiny = GrayImage::from_raw(2, 2, vec![0, 255, 255, 0]).unwrap();
        assert_eq!(resize_half(&tiny).unwrap().pixels(), &[128]);
        let board = GrayImage::from_fn(16, 16, |x, y| if (x + y) % 2 == 0 { 0 } else { 255 });
        assert!(resize_half(&board).unwrap().pixels().iter().all(|&p| p == 128));
    }

    #[test]
    fn gaussian_blur_keeps_constant() {
        let flat = GrayImage::filled(10, 10, 77);
        assert_eq!(gaussian_blur(&flat, 2.0), flat);
    }

    proptest! {
        #[test]
        fn laplacian_is_linear(seed in any::<u64>(), a in -3.0..3.0f64, b in -3.0..3.0f64) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (w, h) = (12usize, 10usize);
            let i1: Vec<f64> = (0..w * h).map(|_| rng.gen_range(0.0..255.0)).collect();
            let i2: Vec<f64> = (0..w * h).map(|_| rng.gen_range(0.0..255.0)).collect();
            let lap = |v: &[f64]| {
                let xx = sobel_pass(&sobel_pass(v, w, h, Axis::X), w, h, Axis::X);
                let yy = sobel_pass(&sobel_pass(v, w, h, Axis::Y), w, h, Axis::Y);
                xx.iter().zip(&yy).map(|(p, q)| p + q).collect::<Vec<_>>()
            };
            let mix: Vec<f64> = i1.iter().zip(&i2).map(|(p, q)| a * p + b * q).collect();
            let (l1, l2, lm) = (lap(&i1), lap(&i2), lap(&mix));
            for y in 2..h - 2 {
                for x in 2..w - 2 {
                    let i = y * w + x;
                    prop_assert!((lm[i] - (a * l1[i] + b * l2[i])).abs() < 1e-6);
                }
            }
        }

        #[test]
        fn threshold_invariant_under_positive_scaling(seed in any::<u64>(), s in 0.01..100.0f64) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let f = ScalarField::new(8, 8, (0..64).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
            // Keep clear of values sitting exactly on the cut after rounding.
            let base = threshold_relative(&f, 0.8).unwrap();
            let scaled = threshold_relative(&f.scaled(s), 0.8).unwrap();
            let max = f.max_finite().unwrap();
            for (i, (p, q)) in base.pixels().iter().zip(scaled.pixels()).enumerate() {
                if (f.values()[i] - 0.8 * max).abs() > 1e-9 {
                    prop_assert_eq!(p, q);
                }
            }
        }
    }
}
