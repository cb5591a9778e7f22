use std::path::{Path, PathBuf};

use truncdiff::filters::resize;
use truncdiff::schedule::{expected_snr_curve, plan_breakpoints, plan_to_text, PlanEntry, ScheduleProfile, SnrCurve};
use truncdiff::Image;

use crate::error::{CliError, Result};
use crate::io::{list_images, read_image, write_atomic};

pub const PLAN_NAME: &str = "plan.txt";

pub fn curve_file_name(resolution: usize) -> String {
    format!("snr_{resolution}.csv")
}

/// One Monte-Carlo curve per resolution. Every image is resized to each
/// resolution and taken to model range first.
pub fn snr_curves(
    dataset: &[Image],
    profile: &ScheduleProfile,
    resolutions: &[usize],
    mc: usize,
    seed: u64,
) -> truncdiff::Result<Vec<SnrCurve>> {
    resolutions
        .iter()
        .map(|&res| {
            let sched = profile.for_resolution(res)?;
            let images = dataset
                .iter()
                .map(|img| resize(&img.to_model_range(), res, res))
                .collect::<truncdiff::Result<Vec<_>>>()?;
            expected_snr_curve(&images, &sched, mc, seed)
        })
        .collect()
}

pub struct SnrOutput {
    pub curve_files: Vec<PathBuf>,
    pub plan: std::result::Result<Vec<PlanEntry>, truncdiff::Error>,
}

pub struct PlanRequest<'a> {
    pub lengths: &'a [usize],
    pub first_t_end: usize,
    pub guard_db: f64,
}

/// Writes `snr_<res>.csv` for each resolution and, when the windows chain,
/// `plan.txt`.
pub fn snr_dir(
    dataset_dir: &Path,
    out_dir: &Path,
    profile: &ScheduleProfile,
    resolutions: &[usize],
    mc: usize,
    seed: u64,
    plan: &PlanRequest,
) -> Result<SnrOutput> {
    if plan.lengths.len() != resolutions.len() {
        return Err(CliError::usage(format!(
            "{} window lengths for {} resolutions",
            plan.lengths.len(),
            resolutions.len()
        )));
    }
    let files = list_images(dataset_dir)?;
    if files.is_empty() {
        return Err(CliError::data(dataset_dir, "dataset is empty"));
    }
    let dataset = files.iter().map(|p| read_image(p)).collect::<Result<Vec<_>>>()?;
    let curves = snr_curves(&dataset, profile, resolutions, mc, seed).map_err(|e| CliError::data(dataset_dir, e))?;
    let mut curve_files = Vec::new();
    for c in &curves {
        let path = out_dir.join(curve_file_name(c.resolution));
        write_atomic(&path, c.to_csv().as_bytes())?;
        curve_files.push(path);
    }
    let planned = plan_breakpoints(&curves, plan.lengths, plan.first_t_end, plan.guard_db);
    if let Ok(entries) = &planned {
        write_atomic(&out_dir.join(PLAN_NAME), plan_to_text(entries).as_bytes())?;
    }
    Ok(SnrOutput {
        curve_files,
        plan: planned,
    })
}
