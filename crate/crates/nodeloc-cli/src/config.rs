//! Experiment configuration: one TOML file with optional sections.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use nodeloc::pipeline::{PipelineConfig, ReanchorPolicy};
use nodeloc::simulator::{OdometryNoise, RenderSettings, Scenario, ScenarioKind, Scene};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SceneKind {
    Warehouse,
    Empty,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    #[serde(default = "default_seed")]
    seed: u64,
    #[serde(default = "default_output_dir")]
    output_dir: PathBuf,
    #[serde(default)]
    scenario: RawScenario,
    #[serde(default)]
    render: RawRender,
    #[serde(default)]
    odometry: RawOdometry,
    #[serde(default)]
    pipeline: RawPipeline,
}

fn default_seed() -> u64 {
    42
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct RawScenario {
    kind: String,
    scene: SceneKind,
    duration_s: f64,
    frame_rate_hz: f64,
    camera_height_m: f64,
    crouch_height_m: f64,
}

impl Default for RawScenario {
    fn default() -> Self {
        let s = Scenario::new(ScenarioKind::SlowWalk, 25.0);
        Self {
            kind: s.kind.as_str().into(),
            scene: SceneKind::Warehouse,
            duration_s: s.duration_s,
            frame_rate_hz: s.frame_rate_hz,
            camera_height_m: s.camera_height_m,
            crouch_height_m: s.crouch_height_m,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct RawRender {
    illumination_lux: f64,
    motion_blur: f64,
    noise_sigma: f64,
    supersample: usize,
}

impl Default for RawRender {
    fn default() -> Self {
        let r = RenderSettings::default();
        Self {
            illumination_lux: r.illumination_lux,
            motion_blur: r.motion_blur,
            noise_sigma: r.noise_sigma,
            supersample: r.supersample,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct RawOdometry {
    sigma_pos_m: f64,
    sigma_yaw_rad: f64,
    use_as_prior: bool,
}

impl Default for RawOdometry {
    fn default() -> Self {
        let n = OdometryNoise::default();
        Self {
            sigma_pos_m: n.sigma_pos_m,
            sigma_yaw_rad: n.sigma_yaw_rad,
            use_as_prior: true,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct RawPipeline {
    alpha: f64,
    kernel_size_px: usize,
    kernel_ladder: Vec<f64>,
    threshold_factor: f64,
    min_features: usize,
    max_keypoints: usize,
    merge_dist_px: f64,
    roi_half_extent_px: usize,
    decode_budget_ms: u64,
    decode_enabled: bool,
    prior_age_limit_s: f64,
    max_ident_dist_m: f64,
    opening_radius_px: usize,
    opening_iterations: usize,
    reanchor: String,
}

impl Default for RawPipeline {
    fn default() -> Self {
        let p = PipelineConfig::default();
        Self {
            alpha: p.alpha,
            kernel_size_px: p.kernel_size_px,
            kernel_ladder: p.kernel_ladder,
            threshold_factor: p.threshold_factor,
            min_features: p.min_features,
            max_keypoints: p.max_keypoints,
            merge_dist_px: p.merge_dist_px,
            roi_half_extent_px: p.roi_half_extent_px,
            decode_budget_ms: p.decode_budget_ms,
            decode_enabled: p.decode_enabled,
            prior_age_limit_s: p.prior_age_limit_s,
            max_ident_dist_m: p.max_ident_dist_m,
            opening_radius_px: p.opening_radius_px,
            opening_iterations: p.opening_iterations,
            reanchor: p.reanchor.as_str().into(),
        }
    }
}

/// A fully validated experiment.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub seed: u64,
    /// Resolved against the directory holding the config file.
    pub output_dir: PathBuf,
    pub scene: SceneKind,
    pub scenario: Scenario,
    pub render: RenderSettings,
    pub odometry: OdometryNoise,
    pub use_odometry_prior: bool,
    pub pipeline: PipelineConfig,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::ConfigRead {
            path: path.to_path_buf(),
            source: e,
        })?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        Self::parse(&text, base).map_err(|(line, msg)| CliError::Config {
            path: path.to_path_buf(),
            line,
            msg,
        })
    }

    /// Parses config text; errors carry a 1-based line number (0 when no
    /// line applies).
    pub fn parse(text: &str, base_dir: &Path) -> Result<Self, (usize, String)> {
        let raw: RawConfig = toml::from_str(text).map_err(|e| {
            let line = e.span().map(|s| line_of(text, s.start)).unwrap_or(0);
            (line, e.message().to_string())
        })?;
        let at = |section: &str, key: &str, msg: String| (locate(text, section, key), msg);

        let kind: ScenarioKind = raw
            .scenario
            .kind
            .parse()
            .map_err(|e: nodeloc::simulator::SimError| at("scenario", "kind", e.to_string()))?;
        let mut scenario = Scenario::new(kind, raw.scenario.duration_s);
        scenario.frame_rate_hz = raw.scenario.frame_rate_hz;
        scenario.camera_height_m = raw.scenario.camera_height_m;
        scenario.crouch_height_m = raw.scenario.crouch_height_m;
        if let Err(e) = scenario.validate() {
            let key = if !(scenario.frame_rate_hz > 0.0 && scenario.frame_rate_hz.is_finite()) {
                "frame_rate_hz"
            } else if !(scenario.duration_s > 0.0 && scenario.duration_s.is_finite()) {
                "duration_s"
            } else if !(scenario.camera_height_m > 0.0) {
                "camera_height_m"
            } else {
                "crouch_height_m"
            };
            return Err(at("scenario", key, e.to_string()));
        }

        let r = &raw.render;
        let render = RenderSettings {
            illumination_lux: r.illumination_lux,
            motion_blur: r.motion_blur,
            noise_sigma: r.noise_sigma,
            supersample: r.supersample,
        };
        if let Err(e) = render.validate() {
            let key = if !(r.illumination_lux > 0.0 && r.illumination_lux.is_finite()) {
                "illumination_lux"
            } else if !(0.0..=1.0).contains(&r.motion_blur) {
                "motion_blur"
            } else if !(r.noise_sigma >= 0.0 && r.noise_sigma.is_finite()) {
                "noise_sigma"
            } else {
                "supersample"
            };
            return Err(at("render", key, e.to_string()));
        }

        let o = &raw.odometry;
        for (key, v) in [("sigma_pos_m", o.sigma_pos_m), ("sigma_yaw_rad", o.sigma_yaw_rad)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(at("odometry", key, format!("{key} must be finite and non-negative, got {v}")));
            }
        }
        let odometry = OdometryNoise {
            sigma_pos_m: o.sigma_pos_m,
            sigma_yaw_rad: o.sigma_yaw_rad,
        };

        let p = raw.pipeline;
        let reanchor = ReanchorPolicy::parse(&p.reanchor).ok_or_else(|| {
            at(
                "pipeline",
                "reanchor",
                format!("unknown reanchor policy '{}', expected every-fix or decoded-only", p.reanchor),
            )
        })?;
        let pipeline = PipelineConfig {
            alpha: p.alpha,
            kernel_size_px: p.kernel_size_px,
            kernel_ladder: p.kernel_ladder,
            threshold_factor: p.threshold_factor,
            min_features: p.min_features,
            max_keypoints: p.max_keypoints,
            merge_dist_px: p.merge_dist_px,
            roi_half_extent_px: p.roi_half_extent_px,
            decode_budget_ms: p.decode_budget_ms,
            decode_enabled: p.decode_enabled,
            prior_age_limit_s: p.prior_age_limit_s,
            max_ident_dist_m: p.max_ident_dist_m,
            opening_radius_px: p.opening_radius_px,
            opening_iterations: p.opening_iterations,
            reanchor,
            ..PipelineConfig::default()
        };
        if let Err(e) = pipeline.validate() {
            let line = locate_section(text, "pipeline");
            return Err((line, e.to_string()));
        }

        let output_dir = if raw.output_dir.is_absolute() {
            raw.output_dir
        } else {
            base_dir.join(raw.output_dir)
        };
        Ok(Self {
            seed: raw.seed,
            output_dir,
            scene: raw.scenario.scene,
            scenario,
            render,
            odometry,
            use_odometry_prior: raw.odometry.use_as_prior,
            pipeline,
        })
    }

    pub fn build_scene(&self) -> Scene {
        match self.scene {
            SceneKind::Warehouse => Scene::default_warehouse(),
            SceneKind::Empty => Scene::empty(),
        }
    }
}

fn line_of(text: &str, byte: usize) -> usize {
    text[..byte.min(text.len())].matches('\n').count() + 1
}

fn section_header(line: &str) -> Option<&str> {
    let l = line.split('#').next()?.trim();
    l.strip_prefix('[')?.strip_suffix(']').map(str::trim)
}

/// Line of the `[section]` header, or 0 when absent.
fn locate_section(text: &str, section: &str) -> usize {
    text.lines()
        .position(|l| section_header(l) == Some(section))
        .map_or(0, |i| i + 1)
}

/// Line where `key` is assigned inside `[section]`; falls back to the
/// section header, then 0.
fn locate(text: &str, section: &str, key: &str) -> usize {
    let mut current: Option<&str> = None;
    for (i, l) in text.lines().enumerate() {
        if let Some(h) = section_header(l) {
            current = Some(h);
            continue;
        }
        if current == Some(section) {
            let lhs = l.split('=').next().unwrap_or("").trim();
            if l.contains('=') && lhs == key {
                return i + 1;
            }
        }
    }
    locate_section(text, section)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<ExperimentConfig, (usize, String)> {
        ExperimentConfig::parse(text, Path::new("/tmp/exp"))
    }

    #[test]
    fn empty_file_gives_defaults() {
        let c = parse("").unwrap();
        assert_eq!(c.seed, 42);
        assert_eq!(c.output_dir, PathBuf::from("/tmp/exp/out"));
        assert_eq!(c.scenario.kind, ScenarioKind::SlowWalk);
        assert_eq!(c.pipeline, PipelineConfig::default());
        assert_eq!(c.render, RenderSettings::default());
        assert!(c.use_odometry_prior);
    }

    #[test]
    fn sections_override_defaults() {
        let c = parse(
            "seed = 7\noutput_dir = \"/data/run\"\n[scenario]\nkind = \"stand\"\nduration_s = 2.0\nscene = \"empty\"\n\
             [render]\nillumination_lux = 160.0\n[pipeline]\nalpha = 10.0\ndecode_enabled = false\nreanchor = \"decoded-only\"\n",
        )
        .unwrap();
        assert_eq!(c.seed, 7);
        assert_eq!(c.output_dir, PathBuf::from("/data/run"));
        assert_eq!(c.scenario.kind, ScenarioKind::Stand);
        assert_eq!(c.scenario.frame_count(), 10);
        assert_eq!(c.scene, SceneKind::Empty);
        assert_eq!(c.render.illumination_lux, 160.0);
        assert_eq!(c.pipeline.alpha, 10.0);
        assert!(!c.pipeline.decode_enabled);
        assert_eq!(c.pipeline.reanchor, ReanchorPolicy::DecodedOnly);
    }

    #[test]
    fn syntax_error_reports_its_line() {
        let (line, _) = parse("seed = 1\n[render]\nillumination_lux = = 3\n").unwrap_err();
        assert_eq!(line, 3);
    }

    #[test]
    fn unknown_key_reports_its_line() {
        let (line, msg) = parse("[scenario]\nkind = \"stand\"\nspeed = 3.0\n").unwrap_err();
        assert_eq!(line, 3);
        assert!(msg.contains("speed"), "{msg}");
    }

    #[test]
    fn wrong_type_reports_its_line() {
        let (line, _) = parse("\n\n[render]\nsupersample = \"many\"\n").unwrap_err();
        assert_eq!(line, 4);
    }

    #[test]
    fn bad_values_point_at_the_key() {
        let (line, msg) = parse("[scenario]\nkind = \"jog\"\n").unwrap_err();
        assert_eq!(line, 2);
        assert!(msg.contains("jog"));
        let (line, _) = parse("[render]\nnoise_sigma = 1.0\nillumination_lux = -5.0\n").unwrap_err();
        assert_eq!(line, 3);
        let (line, _) = parse("seed = 1\n[odometry]\nsigma_yaw_rad = -0.1\n").unwrap_err();
        assert_eq!(line, 3);
        let (line, _) = parse("[pipeline]\nreanchor = \"sometimes\"\n").unwrap_err();
        assert_eq!(line, 2);
        let (line, _) = parse("seed = 3\n\n[pipeline]\nkernel_size_px = 10\n").unwrap_err();
        assert_eq!(line, 3);
    }
}
