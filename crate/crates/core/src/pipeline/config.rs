use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filters::{FilterFactor, Kernel};
use crate::schedule::{PosteriorVariance, ScheduleProfile, TimeWindow};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StageKind {
    Lrs,
    Adr,
    Gdb,
}

impl StageKind {
    pub fn name(self) -> &'static str {
        match self {
            StageKind::Lrs => "lrs",
            StageKind::Adr => "adr",
            StageKind::Gdb => "gdb",
        }
    }
}

impl fmt::Display for StageKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for StageKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lrs" => Ok(StageKind::Lrs),
            "adr" => Ok(StageKind::Adr),
            "gdb" => Ok(StageKind::Gdb),
            other => Err(Error::invalid(format!("unknown stage kind `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StageConfig {
    pub kind: StageKind,
    /// Pixels per side.
    pub resolution: usize,
    pub window: TimeWindow,
    /// LRS: the fixed factor. ADR: the candidate the search starts from
    /// (defaults to the first). GDB: must be absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub filter: Option<FilterFactor>,
    /// ADR only: accept the first candidate whose `L_adr` is at most this.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threshold: Option<f64>,
    /// ADR only, strictly decreasing.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub n_candidates: Vec<FilterFactor>,
    pub denoiser: String,
}

impl StageConfig {
    pub fn lrs(resolution: usize, window: TimeWindow, n0: usize, denoiser: &str) -> Result<Self> {
        Ok(Self {
            kind: StageKind::Lrs,
            resolution,
            window,
            filter: Some(FilterFactor::new(n0)?),
            threshold: None,
            n_candidates: Vec::new(),
            denoiser: denoiser.into(),
        })
    }

    pub fn adr(resolution: usize, window: TimeWindow, candidates: &[usize], threshold: f64, denoiser: &str) -> Result<Self> {
        Ok(Self {
            kind: StageKind::Adr,
            resolution,
            window,
            filter: None,
            threshold: Some(threshold),
            n_candidates: candidates.iter().map(|&n| FilterFactor::new(n)).collect::<Result<_>>()?,
            denoiser: denoiser.into(),
        })
    }

    pub fn gdb(resolution: usize, window: TimeWindow, denoiser: &str) -> Self {
        Self {
            kind: StageKind::Gdb,
            resolution,
            window,
            filter: None,
            threshold: None,
            n_candidates: Vec::new(),
            denoiser: denoiser.into(),
        }
    }

    /// Candidates actually searched, starting at `filter` when it is set.
    pub fn search_order(&self) -> Vec<FilterFactor> {
        match self.filter {
            Some(f) if self.kind == StageKind::Adr => {
                let start = self.n_candidates.iter().position(|&c| c == f).unwrap_or(0);
                self.n_candidates[start..].to_vec()
            }
            _ => self.n_candidates.clone(),
        }
    }

    pub fn validate(&self, steps: usize) -> Result<()> {
        let fail = |msg: String| Err(Error::invalid(format!("{} stage at {} px: {msg}", self.kind, self.resolution)));
        if self.resolution == 0 {
            return fail("resolution must be positive".into());
        }
        if let Err(e) = self.window.validate(Some(steps)) {
            return fail(e.to_string());
        }
        if self.denoiser.is_empty() {
            return fail("denoiser id is empty".into());
        }
        match self.kind {
            StageKind::Lrs => {
                let Some(f) = self.filter else {
                    return fail("LRS needs a filter factor".into());
                };
                if !self.resolution.is_multiple_of(f.get()) {
                    return fail(format!("filter {} does not divide the resolution", f.get()));
                }
                if self.threshold.is_some() || !self.n_candidates.is_empty() {
                    return fail("threshold and candidates apply to ADR only".into());
                }
            }
            StageKind::Adr => {
                match self.threshold {
                    Some(t) if t > 0.0 && t.is_finite() => {}
                    _ => return fail("ADR needs a positive threshold".into()),
                }
                if self.n_candidates.is_empty() {
                    return fail("ADR needs at least one filter candidate".into());
                }
                if self.n_candidates.windows(2).any(|w| w[0] <= w[1]) {
                    return fail("filter candidates must be strictly decreasing".into());
                }
                if let Some(c) = self.n_candidates.iter().find(|c| !self.resolution.is_multiple_of(c.get())) {
                    return fail(format!("candidate {} does not divide the resolution", c.get()));
                }
                if let Some(f) = self.filter {
                    if !self.n_candidates.contains(&f) {
                        return fail(format!("starting filter {} is not a candidate", f.get()));
                    }
                }
            }
            StageKind::Gdb => {
                if self.filter.is_some() || self.threshold.is_some() || !self.n_candidates.is_empty() {
                    return fail("GDB takes no filter, threshold or candidates".into());
                }
            }
        }
        Ok(())
    }
}

/// What the detail-boost stage conditions on.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GdbCondition {
    #[default]
    StageOutput,
    Degraded,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub schedule: ScheduleProfile,
    pub stages: Vec<StageConfig>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub variance: PosteriorVariance,
    #[serde(default)]
    pub kernel: Kernel,
    /// Frequency swapping in the LRS and ADR loops; off only for ablation.
    #[serde(default = "default_true")]
    pub swap: bool,
    #[serde(default)]
    pub gdb_condition: GdbCondition,
}

fn default_true() -> bool {
    true
}

pub const DEFAULT_THRESHOLD: f64 = 2e-3;
pub const DEFAULT_CANDIDATES: [usize; 4] = [8, 4, 2, 1];
/// ADR candidates of the desk ladder. At 32 px the coarse factors leave a
/// 4×4 or 8×8 band, too little for a closed-form prior to fill in.
pub const DESK_CANDIDATES: [usize; 2] = [2, 1];

/// Registry ids used by [`PipelineConfig::desk`].
pub const DESK_LOW_DENOISER: &str = "low";
pub const DESK_MID_DENOISER: &str = "mid";
pub const DESK_HIGH_DENOISER: &str = "high";

impl PipelineConfig {
    /// 16 → 32 → 64 ladder on the 200-step desk schedule: windows of
    /// 10 + 20 + 20 + 3 steps.
    pub fn desk() -> Self {
        let w = |b, e| TimeWindow { t_begin: b, t_end: e };
        Self {
            schedule: ScheduleProfile::desk(),
            stages: vec![
                StageConfig::lrs(16, w(20, 10), 2, DESK_LOW_DENOISER).expect("valid"),
                StageConfig::adr(32, w(30, 10), &DESK_CANDIDATES, DEFAULT_THRESHOLD, DESK_MID_DENOISER)
                    .expect("valid"),
                StageConfig::adr(32, w(30, 10), &DESK_CANDIDATES, DEFAULT_THRESHOLD, DESK_MID_DENOISER)
                    .expect("valid"),
                StageConfig::gdb(64, w(4, 1), DESK_HIGH_DENOISER),
            ],
            seed: 0,
            variance: PosteriorVariance::Beta,
            kernel: Kernel::Bilinear,
            swap: true,
            gdb_condition: GdbCondition::StageOutput,
        }
    }

    /// Full-size ladder on the 1000-step schedule: LRS at 64 px over 100→50,
    /// two ADR passes at 256 px over 193→93 (193 carries the SNR of step 50
    /// at 64 px), GDB at 512 px over 61→1.
    pub fn full_scale() -> Self {
        let w = |b, e| TimeWindow { t_begin: b, t_end: e };
        Self {
            schedule: ScheduleProfile::standard(64),
            stages: vec![
                StageConfig::lrs(64, w(100, 50), 2, DESK_LOW_DENOISER).expect("valid"),
                StageConfig::adr(256, w(193, 93), &DEFAULT_CANDIDATES, DEFAULT_THRESHOLD, DESK_MID_DENOISER)
                    .expect("valid"),
                StageConfig::adr(256, w(193, 93), &DEFAULT_CANDIDATES, DEFAULT_THRESHOLD, DESK_MID_DENOISER)
                    .expect("valid"),
                StageConfig::gdb(512, w(61, 1), DESK_HIGH_DENOISER),
            ],
            ..Self::desk()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let steps = self.schedule.steps;
        self.schedule.base()?;
        let n = self.stages.len();
        if n < 3 {
            return Err(Error::invalid("a pipeline needs LRS, at least one ADR and GDB"));
        }
        for (i, s) in self.stages.iter().enumerate() {
            let expected = match i {
                0 => StageKind::Lrs,
                i if i + 1 == n => StageKind::Gdb,
                _ => StageKind::Adr,
            };
            if s.kind != expected {
                return Err(Error::invalid(format!(
                    "stage {i} is {} but must be {expected}; order is lrs, adr..., gdb",
                    s.kind
                )));
            }
            s.validate(steps)
                .map_err(|e| Error::invalid(format!("stage {i}: {e}")))?;
            if i > 0 && s.resolution < self.stages[i - 1].resolution {
                return Err(Error::invalid(format!(
                    "stage {i}: resolution {} is below the previous stage's {}",
                    s.resolution,
                    self.stages[i - 1].resolution
                )));
            }
        }
        Ok(())
    }

    pub fn final_resolution(&self) -> usize {
        self.stages.last().map_or(0, |s| s.resolution)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StepBudget {
    pub truncated_evals: usize,
    pub full_baseline_evals: usize,
    pub ratio: f64,
}

/// Best-case evaluation count (one attempt per ADR stage) against a full
/// `T`-step chain at the final resolution.
pub fn step_budget(cfg: &PipelineConfig) -> StepBudget {
    let truncated_evals: usize = cfg.stages.iter().map(|s| s.window.len()).sum();
    let full_baseline_evals = cfg.schedule.steps;
    StepBudget {
        truncated_evals,
        full_baseline_evals,
        ratio: full_baseline_evals as f64 / truncated_evals as f64,
    }
}
