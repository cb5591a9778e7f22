//! `RunConfig`: the TOML document that drives every subcommand.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use truncdiff::degrade::{DegradationConfig, Preset};
use truncdiff::denoiser::PatchFitConfig;
use truncdiff::pipeline::{PipelineConfig, StageKind};
use truncdiff::toy::desk_fit;

use crate::error::{CliError, Result};

/// Seeds above this cannot be written as TOML integers.
pub const MAX_SEED: u64 = i64::MAX as u64;

/// Either a named preset or a full inline configuration, not both.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DegradationSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<Preset>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub custom: Option<DegradationConfig>,
}

impl Default for DegradationSection {
    fn default() -> Self {
        Self {
            preset: Some(Preset::Desk),
            custom: None,
        }
    }
}

impl DegradationSection {
    pub fn resolve(&self) -> std::result::Result<DegradationConfig, String> {
        match (&self.preset, &self.custom) {
            (Some(p), None) => Ok(p.config()),
            (None, Some(c)) => c.validate().map(|_| c.clone()).map_err(|e| e.to_string()),
            (Some(_), Some(_)) => Err("[degradation] takes either `preset` or `custom`, not both".into()),
            (None, None) => Err("[degradation] needs `preset` or `custom`".into()),
        }
    }
}

/// Patch-fit settings per stage role.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitSection {
    pub lrs: PatchFitConfig,
    pub adr: PatchFitConfig,
    pub gdb: PatchFitConfig,
}

impl Default for FitSection {
    fn default() -> Self {
        Self {
            lrs: desk_fit(StageKind::Lrs),
            adr: desk_fit(StageKind::Adr),
            gdb: desk_fit(StageKind::Gdb),
        }
    }
}

impl FitSection {
    pub fn for_kind(&self, kind: StageKind) -> PatchFitConfig {
        match kind {
            StageKind::Lrs => self.lrs.clone(),
            StageKind::Adr => self.adr.clone(),
            StageKind::Gdb => self.gdb.clone(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathsSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub input: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Global seed; `--seed` wins over it, and it wins over `TDR_SEED`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Worker threads for batch commands; 0 means one per hardware thread.
    #[serde(default)]
    pub jobs: usize,
    #[serde(default)]
    pub degradation: DegradationSection,
    #[serde(default = "PipelineConfig::desk")]
    pub pipeline: PipelineConfig,
    #[serde(default)]
    pub fit: FitSection,
    /// Denoiser id to model file. Relative paths resolve against the config file.
    #[serde(default)]
    pub models: BTreeMap<String, PathBuf>,
    #[serde(default)]
    pub paths: PathsSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: None,
            jobs: 0,
            degradation: DegradationSection::default(),
            pipeline: PipelineConfig::desk(),
            fit: FitSection::default(),
            models: BTreeMap::new(),
            paths: PathsSection::default(),
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> std::result::Result<(), String> {
        if self.seed.is_some_and(|s| s > MAX_SEED) {
            return Err(format!("seed must be at most {MAX_SEED}"));
        }
        self.degradation.resolve()?;
        self.pipeline.validate().map_err(|e| format!("[pipeline] {e}"))?;
        Ok(())
    }

    /// Parses and validates. Errors carry line and column where TOML knows them.
    pub fn parse(text: &str) -> std::result::Result<Self, String> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| e.to_string())?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> std::result::Result<String, String> {
        toml::to_string(self).map_err(|e| e.to_string())
    }

    /// Reads `path`; model paths are made relative to its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let mut cfg = Self::parse(&text).map_err(|message| CliError::Config {
            path: path.to_path_buf(),
            message,
        })?;
        if let Some(dir) = path.parent() {
            for p in cfg.models.values_mut() {
                if p.is_relative() {
                    *p = dir.join(&*p);
                }
            }
        }
        Ok(cfg)
    }
}

/// `--seed`, then the config, then `TDR_SEED`, then 0.
pub fn resolve_seed(flag: Option<u64>, config: Option<u64>) -> Result<u64> {
    if let Some(s) = flag.or(config) {
        return Ok(s);
    }
    match std::env::var("TDR_SEED") {
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|_| CliError::usage(format!("TDR_SEED=`{v}` is not an unsigned integer"))),
        Err(_) => Ok(0),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_round_trips() {
        let cfg = RunConfig::default();
        let text = cfg.to_toml().unwrap();
        assert_eq!(RunConfig::parse(&text).unwrap(), cfg);
    }

    #[test]
    fn empty_document_is_the_default() {
        assert_eq!(RunConfig::parse("").unwrap(), RunConfig::default());
    }

    #[test]
    fn unknown_keys_are_located() {
        let err = RunConfig::parse("jobs = 2\n\n[pipeline]\nbogus = 1\n").unwrap_err();
        assert!(err.contains("bogus"), "{err}");
        assert!(err.contains("line 4") || err.contains("4:"), "{err}");
        let err = RunConfig::parse("[fit.adr]\nradius = 2\nwidth = 3\n").unwrap_err();
        assert!(err.contains("width"), "{err}");
    }

    #[test]
    fn degradation_section_is_exclusive() {
        let both = "[degradation]\npreset = \"desk\"\n[degradation.custom]\nblur_prob = 0.5\n";
        assert!(RunConfig::parse(both).is_err());
        let none = "[degradation]\n";
        assert!(RunConfig::parse(none).is_err());
        let named = RunConfig::parse("[degradation]\npreset = \"celeba-test-style\"\n").unwrap();
        assert_eq!(named.degradation.resolve().unwrap(), DegradationConfig::celeba_test_style());
    }

    #[test]
    fn seeds_must_fit_toml_integers() {
        let cfg = RunConfig {
            seed: Some(u64::MAX),
            ..RunConfig::default()
        };
        assert!(cfg.validate().is_err());
    }
}
