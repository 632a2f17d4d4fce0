use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use nodeloc::floorid::NodeDatabase;
use nodeloc::geometry::{CameraIntrinsics, PoseSeries, RigidTransform};
use nodeloc::gridpose::NodeGeometry;
use nodeloc::pipeline::{
    compute_metrics, localize_dataset, read_fixes_csv, read_trace_csv, write_fixes_csv, write_trace_csv, FixSource,
    LocalizationFix, MetricsInput, PipelineConfig, RunMetrics,
};
use nodeloc::simulator::{
    fully_visible_node, load_dataset, manifest_for, read_pose_csv, simulate, write_dataset, Dataset, Manifest, Rect,
    Scene, MANIFEST_FILE, TRUTH_FILE,
};

use crate::config::ExperimentConfig;
use crate::error::CliError;
use crate::plot::{Chart, Series, Style};

pub const FIXES_FILE: &str = "fixes.csv";
pub const TRACE_FILE: &str = "trace.csv";
/// Wall-clock processing time per frame; the only output that differs
/// between identical runs.
pub const TIMING_FILE: &str = "timing.csv";
pub const METRICS_FILE: &str = "metrics.csv";
pub const SUMMARY_FILE: &str = "summary.csv";
pub const ELAPSED_FILE: &str = "elapsed.csv";
pub const PLOT_X: &str = "x_vs_truth.svg";
pub const PLOT_Y: &str = "y_vs_truth.svg";
pub const PLOT_ERROR: &str = "error.svg";
pub const PLOT_ELAPSED: &str = "elapsed.svg";

/// Planar error budget the evaluation reports against.
pub const ERROR_BUDGET_M: f64 = 0.12;

/// Where a command reads and writes, after applying the CLI overrides.
#[derive(Debug, Clone)]
pub struct Paths {
    pub out: PathBuf,
    pub dataset: PathBuf,
}

impl Paths {
    pub fn resolve(config: &ExperimentConfig, dataset: Option<PathBuf>, out: Option<PathBuf>) -> Self {
        let out = out.unwrap_or_else(|| config.output_dir.clone());
        let dataset = dataset.unwrap_or_else(|| out.join("dataset"));
        Self { out, dataset }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |e| CliError::data(path.display().to_string(), e)
}

fn create(path: &Path) -> Result<BufWriter<fs::File>, CliError> {
    fs::File::create(path).map(BufWriter::new).map_err(io_err(path))
}

fn open(path: &Path) -> Result<fs::File, CliError> {
    fs::File::open(path).map_err(io_err(path))
}

/// Renders the configured scenario and writes it as a dataset. Returns
/// the manifest path.
pub fn cmd_simulate(config: &ExperimentConfig, paths: &Paths) -> Result<PathBuf, CliError> {
    let scene = config.build_scene();
    let k = CameraIntrinsics::default_lens();
    let run = simulate(&scene, &config.scenario, &config.render, &k, &config.odometry, config.seed)
        .map_err(|e| CliError::data("simulation", e))?;
    let settings = manifest_for(&config.scenario, &config.render, &config.odometry, &scene, config.seed);
    write_dataset(&paths.dataset, &run.frames, &run.truth, &run.odometry, &scene.nodes, &k, &settings)
        .map_err(|e| CliError::data(paths.dataset.display().to_string(), e))?;
    Ok(paths.dataset.join(MANIFEST_FILE))
}

fn manifest_geometry(manifest: &Manifest, base: NodeGeometry) -> Result<NodeGeometry, CliError> {
    let mut g = base;
    let read = |key: &str| -> Result<Option<f64>, CliError> {
        match manifest.get(key) {
            None => Ok(None),
            Some(_) => manifest.parse::<f64>(key).map(Some).map_err(|e| CliError::data(MANIFEST_FILE, e)),
        }
    };
    if let Some(v) = read("node_pitch_m")? {
        g.pitch_m = v;
    }
    if let Some(v) = read("node_code_size_m")? {
        g.code_size_m = v;
    }
    if let Some(v) = read("node_disc_radius_m")? {
        g.disc_radius_m = v;
    }
    if let Some(v) = read("node_marker_corner")? {
        if !(0.0..4.0).contains(&v) || v.fract() != 0.0 {
            return Err(CliError::data(MANIFEST_FILE, format!("bad marker corner {v}")));
        }
        g.orientation_marker_corner = v as u8;
    }
    if !g.is_valid() {
        return Err(CliError::data(MANIFEST_FILE, "node geometry is inconsistent"));
    }
    Ok(g)
}

pub struct LocalizeSummary {
    pub frames: usize,
    pub fixes: usize,
    pub decoded: usize,
}

/// Localizes every frame of the dataset, writing fixes, trace and timing.
pub fn cmd_localize(config: &ExperimentConfig, paths: &Paths) -> Result<LocalizeSummary, CliError> {
    let dataset = load_dataset(&paths.dataset).map_err(|e| CliError::data(paths.dataset.display().to_string(), e))?;
    let pipeline = PipelineConfig {
        geometry: manifest_geometry(&dataset.manifest, config.pipeline.geometry)?,
        ..config.pipeline.clone()
    };
    let run = localize_dataset(&dataset, &pipeline, None, config.use_odometry_prior)
        .map_err(|e| CliError::data("localization", e))?;

    fs::create_dir_all(&paths.out).map_err(io_err(&paths.out))?;
    let fixes_path = paths.out.join(FIXES_FILE);
    write_fixes_csv(create(&fixes_path)?, &run.fixes).map_err(|e| CliError::data(FIXES_FILE, e))?;
    let trace_path = paths.out.join(TRACE_FILE);
    write_trace_csv(create(&trace_path)?, &run.traces).map_err(|e| CliError::data(TRACE_FILE, e))?;
    let timing_path = paths.out.join(TIMING_FILE);
    let mut timing = String::from("t,processing_ms\n");
    for (t, ms) in run.frame_times_s.iter().zip(&run.processing_ms) {
        timing.push_str(&format!("{t:.6},{ms:.3}\n"));
    }
    fs::write(&timing_path, timing).map_err(io_err(&timing_path))?;

    Ok(LocalizeSummary {
        frames: run.traces.len(),
        fixes: run.fixes.len(),
        decoded: run.fixes.iter().filter(|f| f.source == FixSource::Decoded).count(),
    })
}

/// Inputs of an evaluation; `fixes` and `truth` default to the run and
/// dataset locations.
#[derive(Debug, Clone)]
pub struct EvaluateInputs {
    pub fixes: PathBuf,
    pub truth: PathBuf,
}

impl EvaluateInputs {
    pub fn resolve(paths: &Paths, fixes: Option<PathBuf>, truth: Option<PathBuf>) -> Self {
        Self {
            fixes: fixes.unwrap_or_else(|| paths.out.join(FIXES_FILE)),
            truth: truth.unwrap_or_else(|| paths.dataset.join(TRUTH_FILE)),
        }
    }
}

fn read_timing(path: &Path) -> Result<Option<Vec<f64>>, CliError> {
    let Ok(text) = fs::read_to_string(path) else {
        return Ok(None);
    };
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate().skip(1) {
        let ms = line
            .split(',')
            .nth(1)
            .and_then(|v| v.trim().parse::<f64>().ok())
            .ok_or_else(|| CliError::data(format!("{}:{}", path.display(), i + 1), "expected t,processing_ms"))?;
        out.push(ms);
    }
    Ok(Some(out))
}

/// Visibility of a full node at each frame, when the dataset is at hand.
fn node_visibility(dataset: &Dataset, frame_times: &[f64], truth: &PoseSeries) -> Option<Vec<bool>> {
    let scene = scene_from_nodes(&dataset.nodes, &dataset.manifest)?;
    frame_times
        .iter()
        .map(|t| truth.at(*t).map(|p| fully_visible_node(&scene, &p, &dataset.intrinsics).is_some()))
        .collect()
}

fn scene_from_nodes(nodes: &NodeDatabase, manifest: &Manifest) -> Option<Scene> {
    let geometry = manifest_geometry(manifest, NodeGeometry::default()).ok()?;
    let (mut lo, mut hi) = ((-1.0f64, -1.0f64), (1.0f64, 1.0f64));
    for n in nodes.nodes() {
        lo = (lo.0.min(n.world_xy_m.x - 1.0), lo.1.min(n.world_xy_m.y - 1.0));
        hi = (hi.0.max(n.world_xy_m.x + 1.0), hi.1.max(n.world_xy_m.y + 1.0));
    }
    Scene::new(nodes.clone(), geometry, Vec::new(), Rect::new(lo.0, lo.1, hi.0, hi.1)).ok()
}

pub struct EvaluateSummary {
    pub metrics: RunMetrics,
    pub evaluated_fixes: usize,
}

/// Compares fixes with truth and writes metric tables and plots to `out`.
pub fn cmd_evaluate(paths: &Paths, inputs: &EvaluateInputs) -> Result<EvaluateSummary, CliError> {
    let fixes = read_fixes_csv(open(&inputs.fixes)?).map_err(|e| CliError::data(inputs.fixes.display().to_string(), e))?;
    let truth = read_pose_csv(open(&inputs.truth)?).map_err(|e| CliError::data(inputs.truth.display().to_string(), e))?;
    if truth.is_empty() {
        return Err(CliError::data(inputs.truth.display().to_string(), "no truth poses"));
    }

    let run_dir = inputs.fixes.parent().unwrap_or_else(|| Path::new("."));
    let trace_path = run_dir.join(TRACE_FILE);
    let frame_times: Vec<f64> = if trace_path.is_file() {
        read_trace_csv(open(&trace_path)?)
            .map_err(|e| CliError::data(trace_path.display().to_string(), e))?
            .into_iter()
            .map(|(t, _)| t)
            .collect()
    } else {
        truth.samples.iter().map(|(t, _)| *t).collect()
    };
    let processing_ms = read_timing(&run_dir.join(TIMING_FILE))?.unwrap_or_default();
    let dataset = load_dataset(&paths.dataset).ok();
    let visibility = dataset.as_ref().and_then(|d| node_visibility(d, &frame_times, &truth));

    let metrics = compute_metrics(
        &fixes,
        &truth,
        &MetricsInput {
            frame_times_s: &frame_times,
            node_visible: visibility.as_deref(),
            processing_ms: &processing_ms,
        },
    );

    fs::create_dir_all(&paths.out).map_err(io_err(&paths.out))?;
    write_metrics_table(&paths.out.join(METRICS_FILE), &fixes, &truth)?;
    let elapsed = elapsed_series(&fixes, &frame_times);
    let mut text = String::from("t,elapsed_s\n");
    for (t, e) in &elapsed {
        text.push_str(&format!("{t:.6},{e:.6}\n"));
    }
    let elapsed_path = paths.out.join(ELAPSED_FILE);
    fs::write(&elapsed_path, text).map_err(io_err(&elapsed_path))?;
    write_summary(&paths.out.join(SUMMARY_FILE), &fixes, &metrics, frame_times.len())?;
    write_plots(&paths.out, &fixes, &truth, &metrics, &elapsed)?;

    Ok(EvaluateSummary {
        evaluated_fixes: metrics.fix_times_s.len(),
        metrics,
    })
}

fn write_metrics_table(path: &Path, fixes: &[LocalizationFix], truth: &PoseSeries) -> Result<(), CliError> {
    let mut text = String::from("t,node_id,source,x,y,truth_x,truth_y,error_m,yaw_error_deg\n");
    for f in fixes {
        let Some(p) = truth.at(f.timestamp_s) else {
            continue;
        };
        let (fx, fy) = (f.world_pose.translation.x, f.world_pose.translation.y);
        let (tx, ty) = (p.translation.x, p.translation.y);
        let err = ((fx - tx).powi(2) + (fy - ty).powi(2)).sqrt();
        let d = (f.world_pose.yaw() - p.yaw()).rem_euclid(std::f64::consts::TAU);
        let yaw_err = d.min(std::f64::consts::TAU - d).to_degrees();
        text.push_str(&format!(
            "{:.6},{},{},{fx:.6},{fy:.6},{tx:.6},{ty:.6},{err:.6},{yaw_err:.3}\n",
            f.timestamp_s, f.node_id, f.source
        ));
    }
    fs::write(path, text).map_err(io_err(path))
}

/// Time since the last fix at each frame; before the first fix, time
/// since the start.
fn elapsed_series(fixes: &[LocalizationFix], frame_times: &[f64]) -> Vec<(f64, f64)> {
    let Some(&start) = frame_times.first() else {
        return Vec::new();
    };
    let mut last = start;
    let mut next = 0;
    frame_times
        .iter()
        .map(|&t| {
            while next < fixes.len() && fixes[next].timestamp_s <= t + 1e-9 {
                last = last.max(fixes[next].timestamp_s);
                next += 1;
            }
            (t, (t - last).max(0.0))
        })
        .collect()
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.6}")).unwrap_or_default()
}

fn write_summary(path: &Path, fixes: &[LocalizationFix], m: &RunMetrics, frames: usize) -> Result<(), CliError> {
    let decoded = fixes.iter().filter(|f| f.source == FixSource::Decoded).count();
    let max_err = m.max_error_m();
    let rows = [
        ("frames", frames.to_string()),
        ("fixes", fixes.len().to_string()),
        ("evaluated_fixes", m.fix_times_s.len().to_string()),
        ("decoded_fixes", decoded.to_string()),
        ("projected_fixes", (fixes.len() - decoded).to_string()),
        ("fix_rate_hz", format!("{:.6}", m.fix_rate_hz)),
        ("mean_error_m", opt(m.mean_error_m())),
        ("p95_error_m", opt(m.error_quantile_m(0.95))),
        ("max_error_m", opt(max_err)),
        ("error_budget_m", format!("{ERROR_BUDGET_M:.6}")),
        ("within_budget", max_err.map(|e| (e <= ERROR_BUDGET_M).to_string()).unwrap_or_default()),
        ("disambiguation_success", format!("{:.6}", m.disambiguation_success)),
        ("max_elapsed_s", opt(m.elapsed_since_fix_s.iter().copied().reduce(f64::max))),
        ("median_processing_ms", opt(m.median_processing_ms())),
    ];
    let mut text = String::from("metric,value\n");
    for (k, v) in rows {
        text.push_str(&format!("{k},{v}\n"));
    }
    fs::write(path, text).map_err(io_err(path))
}

fn write_plots(
    out: &Path,
    fixes: &[LocalizationFix],
    truth: &PoseSeries,
    m: &RunMetrics,
    elapsed: &[(f64, f64)],
) -> Result<(), CliError> {
    let axis = |name: &str, file: &str, pick: fn(&RigidTransform) -> f64| -> Result<(), CliError> {
        let chart = Chart {
            title: format!("{name} position versus ground truth"),
            x_label: "time (s)".into(),
            y_label: format!("{name} (m)"),
            series: vec![
                Series::new(
                    "ground truth",
                    "black",
                    Style::Line,
                    truth.samples.iter().map(|(t, p)| (*t, pick(p))).collect(),
                ),
                Series::new(
                    "node fixes",
                    "crimson",
                    Style::Markers,
                    fixes.iter().map(|f| (f.timestamp_s, pick(&f.world_pose))).collect(),
                ),
            ],
        };
        let path = out.join(file);
        fs::write(&path, chart.to_svg()).map_err(io_err(&path))
    };
    axis("x", PLOT_X, |p| p.translation.x)?;
    axis("y", PLOT_Y, |p| p.translation.y)?;

    let errors: Vec<(f64, f64)> = m.fix_times_s.iter().copied().zip(m.position_errors_m.iter().copied()).collect();
    let (t0, t1) = (truth.start_time().unwrap_or(0.0), truth.end_time().unwrap_or(0.0));
    let chart = Chart {
        title: "Planar position error".into(),
        x_label: "time (s)".into(),
        y_label: "error (m)".into(),
        series: vec![
            Series::new("error", "crimson", Style::Line, errors),
            Series::new("budget", "gray", Style::Dashed, vec![(t0, ERROR_BUDGET_M), (t1, ERROR_BUDGET_M)]),
        ],
    };
    let path = out.join(PLOT_ERROR);
    fs::write(&path, chart.to_svg()).map_err(io_err(&path))?;

    let chart = Chart {
        title: "Time since last fix".into(),
        x_label: "time (s)".into(),
        y_label: "elapsed (s)".into(),
        series: vec![Series::new("elapsed", "steelblue", Style::Line, elapsed.to_vec())],
    };
    let path = out.join(PLOT_ELAPSED);
    fs::write(&path, chart.to_svg()).map_err(io_err(&path))
}
