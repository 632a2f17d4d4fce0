use std::io::{Read, Write};

use nalgebra::{Quaternion, UnitQuaternion, Vector3};

use crate::geometry::RigidTransform;

use super::{FixSource, FrameTrace, LocalizationFix, PipelineError};

pub const FIXES_HEADER: [&str; 13] = [
    "t", "x", "y", "z", "qw", "qx", "qy", "qz", "node_id", "source", "quadrant", "residual", "filtered",
];
pub const TRACE_HEADER: [&str; 3] = ["t", "stage", "status"];

fn csv_err(e: impl std::fmt::Display) -> PipelineError {
    PipelineError::Csv(e.to_string())
}

pub fn write_fixes_csv<W: Write>(writer: W, fixes: &[LocalizationFix]) -> Result<(), PipelineError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(FIXES_HEADER).map_err(csv_err)?;
    for f in fixes {
        let mut q = f.world_pose.quaternion();
        if q.w < 0.0 {
            q = UnitQuaternion::new_unchecked(-q.into_inner());
        }
        let p = f.world_pose.translation;
        let mut row: Vec<String> = [f.timestamp_s, p.x, p.y, p.z, q.w, q.i, q.j, q.k]
            .iter()
            .map(|v| format!("{v:.9}"))
            .collect();
        row.push(f.node_id.to_string());
        row.push(f.source.as_str().to_string());
        row.push(f.chosen_quadrant.to_string());
        row.push(format!("{:.6}", f.reprojection_residual_px));
        row.push(f.filtered.to_string());
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_fixes_csv<R: Read>(reader: R) -> Result<Vec<LocalizationFix>, PipelineError> {
    let mut r = csv::Reader::from_reader(reader);
    let header = r.headers().map_err(csv_err)?.clone();
    if header.iter().collect::<Vec<_>>() != FIXES_HEADER {
        return Err(PipelineError::Csv(format!("expected header {}", FIXES_HEADER.join(","))));
    }
    let mut out = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec.map_err(csv_err)?;
        let row = i + 1;
        let num = |j: usize| -> Result<f64, PipelineError> {
            rec.get(j)
                .unwrap_or("")
                .trim()
                .parse()
                .map_err(|_| PipelineError::Csv(format!("row {row}: bad number in column {}", FIXES_HEADER[j])))
        };
        let source = match rec.get(9).unwrap_or("") {
            "decoded" => FixSource::Decoded,
            "projected-id" => FixSource::ProjectedId,
            other => return Err(PipelineError::Csv(format!("row {row}: unknown source '{other}'"))),
        };
        let filtered = match rec.get(12).unwrap_or("") {
            "true" => true,
            "false" => false,
            other => return Err(PipelineError::Csv(format!("row {row}: bad filtered flag '{other}'"))),
        };
        let q = UnitQuaternion::from_quaternion(Quaternion::new(num(4)?, num(5)?, num(6)?, num(7)?));
        out.push(LocalizationFix {
            timestamp_s: num(0)?,
            world_pose: RigidTransform::from_quaternion(q, Vector3::new(num(1)?, num(2)?, num(3)?)),
            node_id: num(8)? as u32,
            source,
            chosen_quadrant: num(10)? as u8,
            reprojection_residual_px: num(11)?,
            filtered,
        });
    }
    Ok(out)
}

pub fn write_trace_csv<W: Write>(writer: W, traces: &[FrameTrace]) -> Result<(), PipelineError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(TRACE_HEADER).map_err(csv_err)?;
    for tr in traces {
        for s in &tr.stages {
            w.write_record([format!("{:.9}", tr.timestamp_s).as_str(), s.stage, s.status.as_str()])
                .map_err(csv_err)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Rows of a trace file grouped back into frames by timestamp.
pub fn read_trace_csv<R: Read>(reader: R) -> Result<Vec<(f64, Vec<(String, String)>)>, PipelineError> {
    let mut r = csv::Reader::from_reader(reader);
    let header = r.headers().map_err(csv_err)?.clone();
    if header.iter().collect::<Vec<_>>() != TRACE_HEADER {
        return Err(PipelineError::Csv(format!("expected header {}", TRACE_HEADER.join(","))));
    }
    let mut out: Vec<(f64, Vec<(String, String)>)> = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(csv_err)?;
        let t: f64 = rec.get(0).unwrap_or("").parse().map_err(csv_err)?;
        let pair = (rec.get(1).unwrap_or("").to_string(), rec.get(2).unwrap_or("").to_string());
        match out.last_mut() {
            Some((lt, rows)) if (*lt - t).abs() < 1e-12 && rows.last().map_or(true, |r| r.0 != super::RESULT_STAGE) => {
                rows.push(pair)
            }
            _ => out.push((t, vec![pair])),
        }
    }
    Ok(out)
}
