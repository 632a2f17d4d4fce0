use crate::imaging::GrayImage;
use crate::simulator::{Dataset, OdometryStream};

use super::{FrameTrace, LocalizationFix, Localizer, PipelineConfig, PipelineError, PriorTracker};

/// Everything a run produces.
#[derive(Debug, Clone, Default)]
pub struct RunOutput {
    pub fixes: Vec<LocalizationFix>,
    pub traces: Vec<FrameTrace>,
    pub frame_times_s: Vec<f64>,
    pub processing_ms: Vec<f64>,
}

/// Runs the localizer over time-ordered frames. With `odometry`, a prior
/// anchored at the start and re-anchored on fixes drives filtering and
/// projected identification.
pub fn localize_frames<I>(
    localizer: &mut Localizer,
    frames: I,
    odometry: Option<&OdometryStream>,
) -> Result<RunOutput, PipelineError>
where
    I: IntoIterator<Item = Result<(f64, GrayImage), PipelineError>>,
{
    let cfg = localizer.config().clone();
    let start = odometry.and_then(|o| o.poses.start_time()).unwrap_or(0.0);
    let mut tracker = PriorTracker::new(start, cfg.prior_age_limit_s, cfg.reanchor);
    let mut out = RunOutput::default();
    for frame in frames {
        let (t, img) = frame?;
        let odo_pose = odometry.and_then(|o| nearest_pose(o, t));
        let prior = odo_pose.map(|p| tracker.prior(&p));
        let result = localizer.process_frame(&img, t, prior.as_ref())?;
        if let (Some(fix), Some(p)) = (&result.fix, odo_pose) {
            tracker.observe_fix(fix, &p);
        }
        out.frame_times_s.push(t);
        out.processing_ms.push(result.elapsed.as_secs_f64() * 1e3);
        out.traces.push(result.trace);
        if let Some(f) = result.fix {
            out.fixes.push(f);
        }
    }
    Ok(out)
}

fn nearest_pose(o: &OdometryStream, t: f64) -> Option<crate::geometry::RigidTransform> {
    let s = &o.poses;
    let (t0, t1) = (s.start_time()?, s.end_time()?);
    s.at(t.clamp(t0, t1))
}

/// Localizes every frame of a dataset on disk.
pub fn localize_dataset(
    dataset: &Dataset,
    config: &PipelineConfig,
    reference: Option<&GrayImage>,
    use_odometry: bool,
) -> Result<RunOutput, PipelineError> {
    let mut localizer = Localizer::new(config.clone(), &dataset.intrinsics, dataset.nodes.clone(), reference)?;
    let frames = (0..dataset.frame_count()).map(|i| {
        let img = dataset.load_frame(i)?;
        Ok((dataset.frame_time(i), img))
    });
    let odometry = (use_odometry && !dataset.odometry.poses.is_empty()).then_some(&dataset.odometry);
    localize_frames(&mut localizer, frames, odometry)
}
