//! Binary portable graymap (P5, maxval 255).

use std::fs;
use std::io::Write;
use std::path::Path;

use super::{GrayImage, ImagingError};

pub fn encode(img: &GrayImage) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", img.width(), img.height()).into_bytes();
    out.extend_from_slice(img.pixels());
    out
}

pub fn decode(bytes: &[u8]) -> Result<GrayImage, ImagingError> {
    let mut pos = 0;
    let mut fields = Vec::with_capacity(4);
    while fields.len() < 4 {
        // Skip whitespace and comments.
        while pos < bytes.len() {
            match bytes[pos] {
                b'#' => {
                    while pos < bytes.len() && bytes[pos] != b'\n' {
                        pos += 1;
                    }
                }
                c if c.is_ascii_whitespace() => pos += 1,
                _ => break,
            }
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() && bytes[pos] != b'#' {
            pos += 1;
        }
        if start == pos {
            return Err(ImagingError::Pgm("truncated header".into()));
        }
        fields.push(std::str::from_utf8(&bytes[start..pos]).map_err(|_| ImagingError::Pgm("non-ascii header".into()))?);
    }
    if fields[0] != "P5" {
        return Err(ImagingError::Pgm(format!("unsupported magic {:?}", fields[0])));
    }
    let num = |s: &str| s.parse::<usize>().map_err(|_| ImagingError::Pgm(format!("bad header number {s:?}")));
    let (w, h, maxval) = (num(fields[1])?, num(fields[2])?, num(fields[3])?);
    if maxval != 255 {
        return Err(ImagingError::Pgm(format!("only maxval 255 is supported, got {maxval}")));
    }
    // Exactly one whitespace byte separates the header from the raster.
    pos += 1;
    let data = bytes
        .get(pos..pos + w * h)
        .ok_or_else(|| ImagingError::Pgm("raster shorter than header dimensions".into()))?;
    GrayImage::from_raw(w, h, data.to_vec())
}

pub fn write(path: impl AsRef<Path>, img: &GrayImage) -> Result<(), ImagingError> {
    let mut f = fs::File::create(path)?;
    f.write_all(&encode(img))?;
    Ok(())
}

pub fn read(path: impl AsRef<Path>) -> Result<GrayImage, ImagingError> {
    decode(&fs::read(path)?)
}
