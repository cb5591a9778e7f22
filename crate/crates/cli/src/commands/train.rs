use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use truncdiff::denoiser::{fit_patch_denoiser, PatchDenoiserModel, PatchFitConfig};
use truncdiff::filters::{lowpass, resize, FilterFactor};
use truncdiff::schedule::VarianceSchedule;
use truncdiff::{Image, SeededRng};

use crate::error::{CliError, Result};
use crate::io::{file_name, list_images, read_image};

/// What the model sees as its condition during fitting.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConditionSource {
    None,
    /// The `.deg` partner resized to the model resolution.
    Degraded,
    /// `Φ_N` of the clean image, standing in for an upsampled earlier stage.
    Lowpass(FilterFactor),
}

#[derive(Debug, Default)]
pub struct PairScan {
    /// Stem, clean file, degraded file.
    pub pairs: Vec<(String, PathBuf, PathBuf)>,
    pub unpaired: Vec<String>,
}

/// Matches `<name>.<ext>` with `<name>.deg.<ext>` (extensions may differ).
pub fn scan_pairs(dir: &Path) -> Result<PairScan> {
    let mut clean: BTreeMap<String, PathBuf> = BTreeMap::new();
    let mut degraded: BTreeMap<String, PathBuf> = BTreeMap::new();
    for path in list_images(dir)? {
        let stem = path.file_stem().map_or_else(String::new, |s| s.to_string_lossy().into_owned());
        match stem.strip_suffix(".deg") {
            Some(base) => degraded.insert(base.to_string(), path),
            None => clean.insert(stem, path),
        };
    }
    let mut scan = PairScan::default();
    for (stem, c) in &clean {
        match degraded.remove(stem) {
            Some(d) => scan.pairs.push((stem.clone(), c.clone(), d)),
            None => scan.unpaired.push(file_name(c)),
        }
    }
    scan.unpaired.extend(degraded.values().map(|p| file_name(p)));
    scan.unpaired.sort();
    Ok(scan)
}

pub struct TrainRequest {
    pub resolution: usize,
    pub condition: ConditionSource,
    pub fit: PatchFitConfig,
    pub seed: u64,
    pub name: String,
}

pub fn load_pairs(scan: &PairScan, resolution: usize, condition: ConditionSource) -> Result<Vec<(Image, Image)>> {
    scan.pairs
        .iter()
        .map(|(_, c, d)| {
            let x0 = resize(&read_image(c)?, resolution, resolution).map_err(|e| CliError::data(c, e))?;
            let cond = match condition {
                ConditionSource::None => x0.clone(),
                ConditionSource::Degraded => {
                    resize(&read_image(d)?, resolution, resolution).map_err(|e| CliError::data(d, e))?
                }
                ConditionSource::Lowpass(f) => lowpass(&x0, f).map_err(|e| CliError::data(c, e))?,
            };
            Ok((x0, cond))
        })
        .collect()
}

pub fn train_dir(dir: &Path, sched: &VarianceSchedule, req: &TrainRequest) -> Result<(PatchDenoiserModel, PairScan)> {
    let scan = scan_pairs(dir)?;
    if scan.pairs.is_empty() {
        let mut msg = "no `<name>` / `<name>.deg` image pairs found".to_string();
        if !scan.unpaired.is_empty() {
            let _ = write!(msg, " (unpaired: {})", scan.unpaired.join(", "));
        }
        return Err(CliError::data(dir, msg));
    }
    let pairs = load_pairs(&scan, req.resolution, req.condition)?;
    let fit = PatchFitConfig {
        conditional: req.condition != ConditionSource::None,
        ..req.fit.clone()
    };
    let mut model = fit_patch_denoiser(&pairs, sched, &fit, &mut SeededRng::new(req.seed))
        .map_err(|e| match e {
            truncdiff::Error::ShapeMismatch { .. } => CliError::data(dir, e),
            other => CliError::Core(other),
        })?;
    model.name = req.name.clone();
    Ok((model, scan))
}

/// Fixed-width per-bucket table of training loss against the zero predictor.
pub fn loss_report(model: &PatchDenoiserModel) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "{:<7}{:>6}{:>6}{:>14}{:>14}{:>10}", "bucket", "t_min", "t_max", "loss", "zero_loss", "rows");
    for (i, b) in model.buckets.iter().enumerate() {
        let _ = writeln!(
            s,
            "{:<7}{:>6}{:>6}{:>14.6e}{:>14.6e}{:>10}",
            i, b.t_min, b.t_max, b.train_loss, b.zero_loss, b.rows
        );
    }
    s
}
