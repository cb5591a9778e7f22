use std::path::{Path, PathBuf};

use rayon::prelude::*;
use truncdiff::degrade::{synthesize, DegradationConfig};
use truncdiff::rng::{item_seed, SeededRng};

use crate::error::{CliError, Result};
use crate::io::{file_name, list_images, read_image, write_atomic, write_image};

pub const MANIFEST_NAME: &str = "manifest.csv";
pub const MANIFEST_HEADER: [&str; 7] = ["filename", "seed", "blur_kind", "kernel", "sigma", "quality", "r"];

#[derive(Debug, Default)]
pub struct DegradeSummary {
    pub written: usize,
    /// File name and reason, in input order.
    pub failures: Vec<(String, String)>,
    pub manifest: PathBuf,
}

/// Degrades every image in `input` into `output` under the same file name
/// and writes `manifest.csv` beside them. Image `i` (in file-name order)
/// uses the seed `item_seed(seed, i)`.
///
/// A file that cannot be read or written is reported and skipped.
pub fn degrade_dir(input: &Path, output: &Path, cfg: &DegradationConfig, seed: u64) -> Result<DegradeSummary> {
    cfg.validate()?;
    let files = list_images(input)?;
    let rows: Vec<std::result::Result<[String; 7], (String, String)>> = files
        .par_iter()
        .enumerate()
        .map(|(i, path)| {
            let name = file_name(path);
            let s = item_seed(seed, i as u64);
            let run = || -> Result<[String; 7]> {
                let x = read_image(path)?;
                let (y, record) = synthesize(&x, cfg, &mut SeededRng::new(s)).map_err(|e| CliError::data(path, e))?;
                write_image(&output.join(&name), &y)?;
                let [kind, kernel, sigma, quality, r] = record.manifest_fields();
                Ok([name.clone(), s.to_string(), kind, kernel, sigma, quality, r])
            };
            run().map_err(|e| (name.clone(), e.to_string()))
        })
        .collect();

    let mut csv = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
    let manifest = output.join(MANIFEST_NAME);
    let bad = |e: csv::Error| CliError::data(&manifest, e);
    csv.write_record(MANIFEST_HEADER).map_err(bad)?;
    let mut summary = DegradeSummary::default();
    for row in rows {
        match row {
            Ok(r) => {
                csv.write_record(&r).map_err(bad)?;
                summary.written += 1;
            }
            Err(f) => summary.failures.push(f),
        }
    }
    let bytes = csv.into_inner().map_err(|e| CliError::data(&manifest, e))?;
    write_atomic(&manifest, &bytes)?;
    summary.manifest = manifest;
    Ok(summary)
}
