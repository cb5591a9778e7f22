pub mod bench;
pub mod degrade;
pub mod eval;
pub mod restore;
pub mod snr;
pub mod synth;
pub mod train;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use truncdiff::denoiser::PatchDenoiserModel;
use truncdiff::pipeline::Models;

use crate::error::{CliError, Result};

/// Runs `f` on a pool of `jobs` threads (0: one per hardware thread).
pub fn with_pool<T: Send>(jobs: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| CliError::usage(format!("cannot start {jobs} worker threads: {e}")))?;
    Ok(pool.install(f))
}

pub fn load_model(path: &Path) -> Result<PatchDenoiserModel> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    PatchDenoiserModel::from_json(&text).map_err(|e| CliError::data(path, e))
}

pub fn load_models(paths: &BTreeMap<String, PathBuf>) -> Result<Models> {
    let mut models = Models::new();
    for (id, path) in paths {
        models.insert_patch(id, load_model(path)?);
    }
    Ok(models)
}

/// Parses `id=path` pairs given on the command line.
pub fn parse_model_args(args: &[String]) -> Result<BTreeMap<String, PathBuf>> {
    args.iter()
        .map(|a| {
            let (id, path) = a
                .split_once('=')
                .ok_or_else(|| CliError::usage(format!("--model expects id=path, got `{a}`")))?;
            if id.is_empty() || path.is_empty() {
                return Err(CliError::usage(format!("--model expects id=path, got `{a}`")));
            }
            Ok((id.to_string(), PathBuf::from(path)))
        })
        .collect()
}
