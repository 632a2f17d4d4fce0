use std::collections::BTreeMap;
use std::fmt::Display;
use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use nalgebra::{Quaternion, UnitQuaternion, Vector3};

use crate::floorid::NodeDatabase;
use crate::geometry::{CameraIntrinsics, PoseSeries, RigidTransform};
use crate::imaging::{pgm, GrayImage};

use super::{OdometryStream, SimError};

pub const TRUTH_FILE: &str = "truth.csv";
pub const ODOMETRY_FILE: &str = "odometry.csv";
pub const NODES_FILE: &str = "nodes.csv";
pub const INTRINSICS_FILE: &str = "intrinsics.txt";
pub const MANIFEST_FILE: &str = "manifest.txt";
const POSE_HEADER: [&str; 8] = ["t", "x", "y", "z", "qw", "qx", "qy", "qz"];

pub fn frame_file_name(i: usize) -> String {
    format!("frame_{i:06}.pgm")
}

/// Ordered `key = value` settings describing how a dataset was made.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Manifest {
    entries: BTreeMap<String, String>,
}

impl Manifest {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set(&mut self, key: &str, value: impl Display) {
        self.entries.insert(key.to_string(), value.to_string());
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    pub fn parse<T: FromStr>(&self, key: &str) -> Result<T, SimError> {
        let raw = self.get(key).ok_or_else(|| SimError::Manifest {
            line: 0,
            msg: format!("missing key '{key}'"),
        })?;
        raw.parse().map_err(|_| SimError::Manifest {
            line: 0,
            msg: format!("cannot parse '{key}' value '{raw}'"),
        })
    }

    pub fn entries(&self) -> impl Iterator<Item = (&str, &str)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v.as_str()))
    }

    pub fn to_text(&self) -> String {
        self.entries.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }

    pub fn from_text(text: &str) -> Result<Self, SimError> {
        let mut m = Self::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| SimError::Manifest {
                line: i + 1,
                msg: "expected 'key = value'".into(),
            })?;
            m.set(k.trim(), v.trim());
        }
        Ok(m)
    }
}

fn canonical_quaternion(p: &RigidTransform) -> UnitQuaternion<f64> {
    let q = p.quaternion();
    if q.w < 0.0 {
        UnitQuaternion::new_unchecked(-q.into_inner())
    } else {
        q
    }
}

pub fn write_pose_csv<W: Write>(writer: W, series: &PoseSeries) -> Result<(), SimError> {
    let mut w = csv::Writer::from_writer(writer);
    let csv_err = |e: csv::Error| SimError::Csv(e.to_string());
    w.write_record(POSE_HEADER).map_err(csv_err)?;
    for (t, p) in &series.samples {
        let q = canonical_quaternion(p);
        let v = [t, &p.translation.x, &p.translation.y, &p.translation.z, &q.w, &q.i, &q.j, &q.k];
        w.write_record(v.iter().map(|x| format!("{x:.9}"))).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_pose_csv<R: Read>(reader: R) -> Result<PoseSeries, SimError> {
    let mut r = csv::Reader::from_reader(reader);
    let header = r.headers().map_err(|e| SimError::Csv(e.to_string()))?.clone();
    if header.iter().collect::<Vec<_>>() != POSE_HEADER {
        return Err(SimError::Csv(format!("expected header {}", POSE_HEADER.join(","))));
    }
    let mut samples = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| SimError::Csv(e.to_string()))?;
        let v: Vec<f64> = rec
            .iter()
            .map(|s| s.trim().parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|e| SimError::Csv(format!("row {}: {e}", i + 1)))?;
        if v.len() != 8 {
            return Err(SimError::Csv(format!("row {}: expected 8 fields", i + 1)));
        }
        let q = UnitQuaternion::from_quaternion(Quaternion::new(v[4], v[5], v[6], v[7]));
        samples.push((v[0], RigidTransform::from_quaternion(q, Vector3::new(v[1], v[2], v[3]))));
    }
    Ok(PoseSeries::new(samples))
}

fn create(path: &Path) -> Result<fs::File, SimError> {
    Ok(fs::File::create(path)?)
}

/// Writes images, truth, odometry, node table, intrinsics and manifest.
/// `truth` holds one pose per frame at the frame timestamps.
pub fn write_dataset(
    dir: &Path,
    frames: &[GrayImage],
    truth: &PoseSeries,
    odometry: &OdometryStream,
    nodes: &NodeDatabase,
    intrinsics: &CameraIntrinsics,
    settings: &Manifest,
) -> Result<Manifest, SimError> {
    if frames.len() != truth.len() {
        return Err(SimError::InconsistentLengths {
            frames: frames.len(),
            truth: truth.len(),
        });
    }
    fs::create_dir_all(dir)?;
    for (i, img) in frames.iter().enumerate() {
        pgm::write(dir.join(frame_file_name(i)), img)?;
    }
    write_pose_csv(create(&dir.join(TRUTH_FILE))?, truth)?;
    write_pose_csv(create(&dir.join(ODOMETRY_FILE))?, &odometry.poses)?;
    nodes.save(&dir.join(NODES_FILE))?;
    fs::write(dir.join(INTRINSICS_FILE), intrinsics.write_kv())?;
    let mut manifest = settings.clone();
    manifest.set("frames", frames.len());
    manifest.set("odometry_samples", odometry.poses.len());
    manifest.set("nodes", nodes.len());
    fs::write(dir.join(MANIFEST_FILE), manifest.to_text())?;
    Ok(manifest)
}

/// A dataset on disk; frames load on demand.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub dir: PathBuf,
    pub truth: PoseSeries,
    pub odometry: OdometryStream,
    pub nodes: NodeDatabase,
    pub intrinsics: CameraIntrinsics,
    pub manifest: Manifest,
}

impl Dataset {
    pub fn frame_count(&self) -> usize {
        self.truth.len()
    }

    pub fn frame_time(&self, i: usize) -> f64 {
        self.truth.samples[i].0
    }

    pub fn frame_path(&self, i: usize) -> PathBuf {
        self.dir.join(frame_file_name(i))
    }

    pub fn load_frame(&self, i: usize) -> Result<GrayImage, SimError> {
        Ok(pgm::read(self.frame_path(i))?)
    }
}

fn open(path: &Path) -> Result<fs::File, SimError> {
    fs::File::open(path).map_err(|_| SimError::MissingFile(path.to_path_buf()))
}

pub fn load_dataset(dir: &Path) -> Result<Dataset, SimError> {
    let manifest_text = fs::read_to_string(dir.join(MANIFEST_FILE)).map_err(|_| SimError::MissingFile(dir.join(MANIFEST_FILE)))?;
    let manifest = Manifest::from_text(&manifest_text)?;
    let truth = read_pose_csv(open(&dir.join(TRUTH_FILE))?)?;
    let odometry = OdometryStream {
        poses: read_pose_csv(open(&dir.join(ODOMETRY_FILE))?)?,
    };
    let nodes = NodeDatabase::from_reader(open(&dir.join(NODES_FILE))?)?;
    let k_text = fs::read_to_string(dir.join(INTRINSICS_FILE)).map_err(|_| SimError::MissingFile(dir.join(INTRINSICS_FILE)))?;
    let intrinsics: CameraIntrinsics = k_text.parse()?;
    let frames: usize = manifest.parse("frames")?;
    if frames != truth.len() {
        return Err(SimError::InconsistentLengths {
            frames,
            truth: truth.len(),
        });
    }
    for i in 0..frames {
        let p = dir.join(frame_file_name(i));
        if !p.is_file() {
            return Err(SimError::MissingFile(p));
        }
    }
    Ok(Dataset {
        dir: dir.to_path_buf(),
        truth,
        odometry,
        nodes,
        intrinsics,
        manifest,
    })
}
