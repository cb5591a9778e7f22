use std::path::{Path, PathBuf};

use truncdiff::degrade::{synthesize, DegradationConfig};
use truncdiff::rng::{item_seed, SeededRng};
use truncdiff::toy::toy_dataset;

use crate::error::{CliError, Result};
use crate::io::write_image;

/// Writes `toy_<i>.png` procedural images and, with a degradation config,
/// their `toy_<i>.deg.png` partners. Item `i`'s degradation draws from
/// `SeededRng::new(item_seed(seed, i)).derive(1)`.
pub fn synth_dir(
    out: &Path,
    count: usize,
    size: usize,
    channels: usize,
    seed: u64,
    degradation: Option<&DegradationConfig>,
) -> Result<Vec<PathBuf>> {
    if count == 0 || size == 0 || !(channels == 1 || channels == 3) {
        return Err(CliError::usage("synth needs count ≥ 1, size ≥ 1 and 1 or 3 channels"));
    }
    let width = (count - 1).to_string().len().max(3);
    let mut written = Vec::with_capacity(count);
    for (i, x) in toy_dataset(count, size, channels, seed).into_iter().enumerate() {
        let stem = format!("toy_{i:0width$}");
        let clean = out.join(format!("{stem}.png"));
        write_image(&clean, &x)?;
        written.push(clean);
        if let Some(cfg) = degradation {
            let mut rng = SeededRng::new(item_seed(seed, i as u64)).derive(1);
            let (y, _) = synthesize(&x, cfg, &mut rng)?;
            let deg = out.join(format!("{stem}.deg.png"));
            write_image(&deg, &y)?;
            written.push(deg);
        }
    }
    Ok(written)
}
