use std::path::Path;

use rayon::prelude::*;
use truncdiff::metrics::{score_pair, ImageScores, MetricReport};

use crate::error::{CliError, Result};
use crate::io::{file_name, list_images, read_image};

pub const EVAL_HEADER: [&str; 4] = ["filename", "psnr_db", "ssim", "mse"];

/// Scores each restored image against the reference with the same file
/// name (or, failing that, the same stem). Unmatched or unreadable files are
/// returned as failures.
pub fn eval_dirs(restored: &Path, reference: &Path) -> Result<(MetricReport, Vec<(String, String)>)> {
    let refs = list_images(reference)?;
    let outs = list_images(restored)?;
    let results: Vec<std::result::Result<ImageScores, (String, String)>> = outs
        .par_iter()
        .map(|path| {
            let name = file_name(path);
            let stem = path.file_stem();
            let partner = refs
                .iter()
                .find(|r| file_name(r) == name)
                .or_else(|| refs.iter().find(|r| r.file_stem() == stem));
            let run = || -> Result<ImageScores> {
                let r = partner.ok_or_else(|| CliError::data(path, "no reference image with this name"))?;
                let a = read_image(path)?;
                let b = read_image(r)?;
                score_pair(&name, &a, &b).map_err(|e| CliError::data(path, e))
            };
            run().map_err(|e| (name.clone(), e.to_string()))
        })
        .collect();
    let mut scores = Vec::new();
    let mut failures = Vec::new();
    for r in results {
        match r {
            Ok(s) => scores.push(s),
            Err(f) => failures.push(f),
        }
    }
    Ok((MetricReport::from_scores(scores), failures))
}

fn cell(v: f64) -> String {
    if v.is_infinite() {
        if v > 0.0 { "inf" } else { "-inf" }.to_string()
    } else {
        format!("{v}")
    }
}

/// Header, one row per image, then a `mean` footer row.
pub fn report_csv(report: &MetricReport) -> String {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
    let _ = w.write_record(EVAL_HEADER);
    for s in &report.images {
        let _ = w.write_record([s.name.clone(), cell(s.psnr_db), cell(s.ssim), cell(s.mse)]);
    }
    let _ = w.write_record([
        "mean".to_string(),
        cell(report.mean_psnr_db),
        cell(report.mean_ssim),
        cell(report.mean_mse),
    ]);
    String::from_utf8(w.into_inner().unwrap_or_default()).unwrap_or_default()
}
