use std::path::{Path, PathBuf};

use rayon::prelude::*;
use truncdiff::pipeline::{restore, Models, PipelineConfig, RestorationTrace};
use truncdiff::rng::item_seed;

use crate::error::{CliError, Result};
use crate::io::{file_name, list_images, read_image, write_atomic, write_image};

/// `out.png` → `out.png.trace.txt`.
pub fn trace_path(output: &Path) -> PathBuf {
    let mut name = output.as_os_str().to_owned();
    name.push(".trace.txt");
    PathBuf::from(name)
}

/// Restores one file, writing the image and its trace beside it.
pub fn restore_file(input: &Path, output: &Path, models: &Models, cfg: &PipelineConfig, seed: u64) -> Result<RestorationTrace> {
    let y = read_image(input)?;
    let (x, trace) = restore(&y, models, cfg, seed).map_err(|e| match e {
        truncdiff::Error::ShapeMismatch { .. } | truncdiff::Error::NotDivisible { .. } => CliError::data(input, e),
        other => CliError::Core(other),
    })?;
    write_image(output, &x)?;
    write_atomic(&trace_path(output), trace.to_text().as_bytes())?;
    Ok(trace)
}

pub struct BatchItem {
    pub name: String,
    pub result: Result<RestorationTrace>,
}

/// Restores every image in `input` into `output` under the same name. Image
/// `i` (file-name order) runs with `item_seed(seed, i)`.
pub fn restore_dir(input: &Path, output: &Path, models: &Models, cfg: &PipelineConfig, seed: u64) -> Result<Vec<BatchItem>> {
    let files = list_images(input)?;
    Ok(files
        .par_iter()
        .enumerate()
        .map(|(i, path)| {
            let name = file_name(path);
            let result = restore_file(path, &output.join(&name), models, cfg, item_seed(seed, i as u64));
            BatchItem { name, result }
        })
        .collect())
}
