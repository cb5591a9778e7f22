//! The three-stage restoration: low-resolution startup (LRS), one or more
//! adaptive degradation removal passes (ADR) and a generative detail boost
//! (GDB), each sampling over a truncated window at its own resolution.

mod config;
mod stages;
mod trace;

use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;

pub use config::{
    step_budget, GdbCondition, PipelineConfig, StageConfig, StageKind, StepBudget, DEFAULT_CANDIDATES,
    DEFAULT_THRESHOLD, DESK_CANDIDATES, DESK_HIGH_DENOISER, DESK_LOW_DENOISER, DESK_MID_DENOISER,
};
pub use stages::{
    adr_stage, compute_l_adr, compute_l_adr_with, full_chain, gdb_stage, lrs_stage, truncated_loop, AdrOutput, LoopOutput,
    Sampler,
};
pub use trace::{Attempt, RestorationTrace, StageTrace, Stitch};

use crate::denoiser::{Denoiser, PatchDenoiserModel};
use crate::error::{Error, Result};
use crate::filters::resize_with;
use crate::image::Image;
use crate::rng::SeededRng;
use crate::schedule::{expected_snr_db, VarianceSchedule};

/// Denoisers by id. Cheap to clone; models are shared read-only.
#[derive(Clone, Default)]
pub struct Models {
    map: BTreeMap<String, Arc<dyn Denoiser>>,
    fingerprints: BTreeMap<String, String>,
}

impl Models {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, id: &str, den: impl Denoiser + 'static) {
        self.map.insert(id.to_string(), Arc::new(den));
        self.fingerprints.remove(id);
    }

    /// Registers a fitted model; [`restore`] checks it against the stage schedule.
    pub fn insert_patch(&mut self, id: &str, model: PatchDenoiserModel) {
        let fp = model.schedule_fingerprint.clone();
        self.map.insert(id.to_string(), Arc::new(model));
        self.fingerprints.insert(id.to_string(), fp);
    }

    pub fn get(&self, id: &str) -> Result<&dyn Denoiser> {
        self.map
            .get(id)
            .map(|d| d.as_ref())
            .ok_or_else(|| Error::UnknownDenoiser(id.to_string()))
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.map.keys().map(String::as_str)
    }

    fn check_schedule(&self, id: &str, sched: &VarianceSchedule) -> Result<()> {
        match self.fingerprints.get(id) {
            Some(fp) if *fp != sched.fingerprint() => Err(Error::ModelFormat(format!(
                "denoiser `{id}` was fitted on a different schedule than its stage uses"
            ))),
            _ => Ok(()),
        }
    }
}

impl std::fmt::Debug for Models {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_set().entries(self.map.keys()).finish()
    }
}

fn stage_err(index: usize, kind: StageKind) -> impl Fn(Error) -> Error {
    move |e| Error::Stage {
        index,
        kind: kind.to_string(),
        source: Box::new(e),
    }
}

/// Restores a degraded display-range image `y` to the final stage resolution.
///
/// Stage `i` draws from `SeededRng::new(seed).derive(i)`. Inputs are resized
/// to each (square) stage resolution with area averaging when shrinking and
/// the configured kernel when enlarging. The result is in display range and
/// not clamped.
pub fn restore(y: &Image, models: &Models, cfg: &PipelineConfig, seed: u64) -> Result<(Image, RestorationTrace)> {
    let (mut outputs, trace) = restore_stages(y, models, cfg, seed)?;
    let out = outputs.pop().expect("validated config has stages");
    Ok((out.to_display_range(), trace))
}

/// Like [`restore`], but returns every stage's hand-over estimate, in model
/// range at that stage's resolution.
pub fn restore_stages(
    y: &Image,
    models: &Models,
    cfg: &PipelineConfig,
    seed: u64,
) -> Result<(Vec<Image>, RestorationTrace)> {
    cfg.validate()?;
    let y_model = y.to_model_range();
    let base = SeededRng::new(seed);
    let mut schedules: HashMap<usize, VarianceSchedule> = HashMap::new();
    for s in &cfg.stages {
        if let std::collections::hash_map::Entry::Vacant(e) = schedules.entry(s.resolution) {
            e.insert(cfg.schedule.for_resolution(s.resolution)?);
        }
    }
    let mut trace = RestorationTrace {
        seed,
        swap: cfg.swap,
        stages: Vec::with_capacity(cfg.stages.len()),
        stitches: Vec::new(),
        total_evaluations: 0,
    };
    let mut outputs: Vec<Image> = Vec::with_capacity(cfg.stages.len());
    for (i, st) in cfg.stages.iter().enumerate() {
        let wrap = stage_err(i, st.kind);
        let sched = &schedules[&st.resolution];
        let sampler = Sampler {
            sched,
            variance: cfg.variance,
            kernel: cfg.kernel,
            swap: cfg.swap,
        };
        let den = models.get(&st.denoiser).map_err(&wrap)?;
        models.check_schedule(&st.denoiser, sched).map_err(&wrap)?;
        let rng = base.derive(i as u64);
        let res = st.resolution;
        let y_here = resize_with(&y_model, res, res, cfg.kernel).map_err(&wrap)?;
        let x_in = match outputs.last() {
            None => y_here.clone(),
            Some(img) => resize_with(img, res, res, cfg.kernel).map_err(&wrap)?,
        };
        if let Some(img) = outputs.last() {
            let j = i - 1;
            let p = &cfg.stages[j];
            trace.stitches.push(Stitch {
                from: j,
                to: i,
                snr_end_db: expected_snr_db(img, p.window.t_end, &schedules[&p.resolution]).map_err(&wrap)?,
                snr_begin_db: expected_snr_db(&x_in, st.window.t_begin, sched).map_err(&wrap)?,
            });
        }
        let mut rec = StageTrace {
            index: i,
            kind: st.kind,
            resolution: res,
            t_begin: st.window.t_begin,
            t_end: st.window.t_end,
            filter: None,
            threshold: st.threshold,
            attempts: Vec::new(),
            exhausted: false,
            steps: 0,
            evaluations: 0,
        };
        let out = match st.kind {
            StageKind::Lrs => {
                let out = lrs_stage(&y_here, st, den, &sampler, &rng).map_err(&wrap)?;
                rec.filter = st.filter.map(|f| f.get());
                rec.evaluations = out.evaluations;
                out
            }
            StageKind::Adr => {
                let a = adr_stage(&y_here, &x_in, st, den, &sampler, &rng).map_err(&wrap)?;
                rec.filter = Some(a.chosen.get());
                rec.attempts = a.attempts;
                rec.exhausted = a.exhausted;
                rec.evaluations = a.evaluations;
                a.output
            }
            StageKind::Gdb => {
                let cond = match cfg.gdb_condition {
                    config::GdbCondition::StageOutput => &x_in,
                    config::GdbCondition::Degraded => &y_here,
                };
                let out = gdb_stage(&x_in, cond, st, den, &sampler, &rng).map_err(&wrap)?;
                rec.evaluations = out.evaluations;
                out
            }
        };
        rec.steps = out.evaluations;
        trace.total_evaluations += rec.evaluations;
        trace.stages.push(rec);
        outputs.push(out.estimate);
    }
    Ok((outputs, trace))
}
