//! Node identity codes: a 10×10 cell matrix with an L-shaped finder, two
//! timing edges and a CRC-8 protected payload of node id and corner index.

use std::time::{Duration, Instant};

use thiserror::Error;

use crate::geometry::{convex_hull, polygon_centroid, Point2};
use crate::homography::Homography;
use crate::imaging::GrayImage;

/// Cells per side.
pub const CODE_CELLS: usize = 10;
const INTERIOR: usize = CODE_CELLS - 2;
const ID_BITS: usize = 16;
const CORNER_BITS: usize = 2;
const CRC_BITS: usize = 8;
const PAD_BITS: usize = INTERIOR * INTERIOR - ID_BITS - CORNER_BITS - CRC_BITS;
const CRC_POLY: u8 = 0x07;
/// Default decode time budget per ROI.
pub const DEFAULT_BUDGET_MS: u64 = 50;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum DecodeError {
    #[error("decode time budget exhausted")]
    Timeout,
    #[error("no candidate yields a valid code")]
    NoValidCode,
    #[error("corner index {0} out of range")]
    InvalidCorner(u8),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct CodePayload {
    pub node_id: u16,
    corner_index: u8,
}

impl CodePayload {
    pub fn new(node_id: u16, corner_index: u8) -> Result<Self, DecodeError> {
        if corner_index > 3 {
            return Err(DecodeError::InvalidCorner(corner_index));
        }
        Ok(Self { node_id, corner_index })
    }

    pub fn corner_index(&self) -> u8 {
        self.corner_index
    }

    fn data(&self) -> u32 {
        (self.node_id as u32) << CORNER_BITS | self.corner_index as u32
    }
}

/// CRC-8, polynomial 0x07, zero init, no reflection, no final xor.
pub fn crc8(bytes: &[u8]) -> u8 {
    let mut crc = 0u8;
    for &b in bytes {
        crc ^= b;
        for _ in 0..8 {
            crc = if crc & 0x80 != 0 { (crc << 1) ^ CRC_POLY } else { crc << 1 };
        }
    }
    crc
}

fn payload_crc(data: u32) -> u8 {
    crc8(&[(data >> 16) as u8, (data >> 8) as u8, data as u8])
}

/// Cell grid, `true` = dark, indexed `[row][col]` with row 0 on top.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct CodeMatrix(pub [[bool; CODE_CELLS]; CODE_CELLS]);

impl CodeMatrix {
    pub fn get(&self, row: usize, col: usize) -> bool {
        self.0[row][col]
    }

    /// Quarter turn clockwise as seen with row 0 on top.
    pub fn rotated_cw(&self) -> CodeMatrix {
        let n = CODE_CELLS;
        let mut out = [[false; CODE_CELLS]; CODE_CELLS];
        for (i, row) in out.iter_mut().enumerate() {
            for (j, cell) in row.iter_mut().enumerate() {
                *cell = self.0[n - 1 - j][i];
            }
        }
        CodeMatrix(out)
    }

    pub fn rotated_cw_by(&self, quarter_turns: u8) -> CodeMatrix {
        (0..quarter_turns % 4).fold(*self, |m, _| m.rotated_cw())
    }

    /// Finder: left column and bottom row dark. Timing: top row dark on
    /// even columns, right column dark on odd rows.
    fn border_cell(row: usize, col: usize) -> Option<bool> {
        let last = CODE_CELLS - 1;
        if col == 0 || row == last {
            Some(true)
        } else if row == 0 {
            Some(col % 2 == 0)
        } else if col == last {
            Some(row % 2 == 1)
        } else {
            None
        }
    }

    pub fn has_valid_border(&self) -> bool {
        (0..CODE_CELLS).all(|r| {
            (0..CODE_CELLS).all(|c| match Self::border_cell(r, c) {
                Some(v) => self.0[r][c] == v,
                None => true,
            })
        })
    }

    fn interior_bits(&self) -> impl Iterator<Item = bool> + '_ {
        (1..=INTERIOR).flat_map(move |r| (1..=INTERIOR).map(move |c| self.0[r][c]))
    }
}

fn padding_bit(i: usize) -> bool {
    i % 2 == 0
}

pub fn encode(payload: CodePayload) -> CodeMatrix {
    let data = payload.data();
    let crc = payload_crc(data);
    let mut bits = Vec::with_capacity(INTERIOR * INTERIOR);
    for i in (0..ID_BITS + CORNER_BITS).rev() {
        bits.push(data >> i & 1 == 1);
    }
    for i in (0..CRC_BITS).rev() {
        bits.push(crc >> i & 1 == 1);
    }
    bits.extend((0..PAD_BITS).map(padding_bit));
    let mut cells = [[false; CODE_CELLS]; CODE_CELLS];
    for (r, row) in cells.iter_mut().enumerate() {
        for (c, cell) in row.iter_mut().enumerate() {
            *cell = match CodeMatrix::border_cell(r, c) {
                Some(v) => v,
                None => bits[(r - 1) * INTERIOR + (c - 1)],
            };
        }
    }
    CodeMatrix(cells)
}

/// Reads an upright matrix. Every structural and CRC check must pass.
pub fn decode_matrix(m: &CodeMatrix) -> Option<CodePayload> {
    if !m.has_valid_border() {
        return None;
    }
    let bits: Vec<bool> = m.interior_bits().collect();
    let take = |range: std::ops::Range<usize>| range.fold(0u32, |acc, i| acc << 1 | bits[i] as u32);
    let data = take(0..ID_BITS + CORNER_BITS);
    let crc = take(ID_BITS + CORNER_BITS..ID_BITS + CORNER_BITS + CRC_BITS) as u8;
    let pad_start = ID_BITS + CORNER_BITS + CRC_BITS;
    if (0..PAD_BITS).any(|i| bits[pad_start + i] != padding_bit(i)) {
        return None;
    }
    if payload_crc(data) != crc {
        return None;
    }
    Some(CodePayload {
        node_id: (data >> CORNER_BITS) as u16,
        corner_index: (data & 0b11) as u8,
    })
}

/// Tries all four orientations of a sampled matrix. The returned quadrant
/// is the number of clockwise quarter turns applied to the upright code
/// to produce the sample.
pub fn decode_any_rotation(sampled: &CodeMatrix) -> Option<(CodePayload, u8)> {
    let mut m = *sampled;
    for undo in 0..4u8 {
        if let Some(p) = decode_matrix(&m) {
            return Some((p, (4 - undo) % 4));
        }
        m = m.rotated_cw();
    }
    None
}

/// Centroid of the convex hull of a code, in cells from the code center
/// (x right, y up, code upright). The hull spans the whole square except
/// half of the light outer corner cell, whatever the payload.
pub fn code_hull_centroid() -> (f64, f64) {
    let n = CODE_CELLS;
    let mut pts = Vec::new();
    for r in 0..n {
        for c in 0..n {
            if CodeMatrix::border_cell(r, c) == Some(true) {
                let (x, y) = (c as f64 - n as f64 / 2.0, n as f64 / 2.0 - r as f64);
                pts.extend([(x, y), (x + 1.0, y), (x, y - 1.0), (x + 1.0, y - 1.0)].map(|(x, y)| Point2::new(x, y)));
            }
        }
    }
    let c = polygon_centroid(&convex_hull(&pts)).expect("code hull has area");
    (c.x, c.y)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DecodeResult {
    pub payload: CodePayload,
    /// Clockwise quarter turns of the code relative to its candidate quad.
    pub orientation_quadrant: u8,
    /// Index of the candidate quad that decoded.
    pub quad_index: usize,
}

impl DecodeResult {
    pub fn corner_of_node(&self) -> u8 {
        self.payload.corner_index
    }
}

/// Otsu threshold over 8-bit-range samples.
fn otsu(values: &[f64]) -> f64 {
    let mut hist = [0usize; 256];
    for &v in values {
        hist[v.round().clamp(0.0, 255.0) as usize] += 1;
    }
    let total = values.len() as f64;
    let sum_all: f64 = hist.iter().enumerate().map(|(i, &c)| i as f64 * c as f64).sum();
    let (mut w0, mut sum0) = (0.0, 0.0);
    let (mut best, mut best_t) = (-1.0, 127.5);
    for (t, &c) in hist.iter().enumerate() {
        w0 += c as f64;
        sum0 += t as f64 * c as f64;
        let w1 = total - w0;
        if w0 == 0.0 || w1 == 0.0 {
            continue;
        }
        let m0 = sum0 / w0;
        let m1 = (sum_all - sum0) / w1;
        let between = w0 * w1 * (m0 - m1).powi(2);
        if between > best {
            best = between;
            best_t = t as f64 + 0.5;
        }
    }
    best_t
}

/// Perspective-samples a 10×10 cell grid from the quad (corners in unit
/// square order) and binarizes it. `None` if samples fall off the image.
pub fn sample_matrix(roi: &GrayImage, quad: &[Point2; 4]) -> Option<CodeMatrix> {
    let h = Homography::from_unit_square(quad)?;
    let n = CODE_CELLS as f64;
    let mut means = [[0.0f64; CODE_CELLS]; CODE_CELLS];
    let mut samples = Vec::with_capacity(CODE_CELLS * CODE_CELLS * 9);
    for (r, row) in means.iter_mut().enumerate() {
        for (c, mean) in row.iter_mut().enumerate() {
            let mut acc = 0.0;
            for dy in [-0.25, 0.0, 0.25] {
                for dx in [-0.25, 0.0, 0.25] {
                    let u = (c as f64 + 0.5 + dx) / n;
                    let v = (r as f64 + 0.5 + dy) / n;
                    let p = h.apply(&Point2::new(u, v));
                    let s = roi.sample_bilinear(p.x, p.y)?;
                    samples.push(s);
                    acc += s;
                }
            }
            *mean = acc / 9.0;
        }
    }
    let t = otsu(&samples);
    let mut cells = [[false; CODE_CELLS]; CODE_CELLS];
    for r in 0..CODE_CELLS {
        for c in 0..CODE_CELLS {
            cells[r][c] = means[r][c] < t;
        }
    }
    Some(CodeMatrix(cells))
}

/// First candidate quad that decodes in any rotation, within the budget.
pub fn decode_roi(roi: &GrayImage, candidate_quads: &[[Point2; 4]], budget: Duration) -> Result<DecodeResult, DecodeError> {
    let start = Instant::now();
    for (i, quad) in candidate_quads.iter().enumerate() {
        if start.elapsed() >= budget {
            return Err(DecodeError::Timeout);
        }
        let Some(sampled) = sample_matrix(roi, quad) else {
            continue;
        };
        if let Some((payload, q)) = decode_any_rotation(&sampled) {
            return Ok(DecodeResult {
                payload,
                orientation_quadrant: q,
                quad_index: i,
            });
        }
    }
    if start.elapsed() >= budget {
        return Err(DecodeError::Timeout);
    }
    Err(DecodeError::NoValidCode)
}
