//! Command-line driver for `truncdiff`: degradation, restoration, SNR
//! curves, model fitting, evaluation and benchmarking.

pub mod commands;
pub mod config;
pub mod error;
pub mod io;

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use truncdiff::degrade::Preset;
use truncdiff::filters::FilterFactor;
use truncdiff::pipeline::{PipelineConfig, StageKind};
use truncdiff::schedule::{ScheduleProfile, DEFAULT_MC_SAMPLES, DEFAULT_SNR_GUARD_DB};

use crate::commands::{bench, degrade, eval, load_models, parse_model_args, restore, snr, synth, train, with_pool};
use crate::config::{resolve_seed, RunConfig};
use crate::error::{CliError, Result, Status};
use crate::io::write_atomic;

#[derive(Debug, Parser)]
#[command(name = "truncdiff", version, about = "Truncated multi-resolution diffusion restoration")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// Run configuration (TOML). Defaults apply when omitted.
    #[arg(long, short)]
    pub config: Option<PathBuf>,
    /// Overrides the config seed and `TDR_SEED`.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads; overrides the config (0: all hardware threads).
    #[arg(long)]
    pub jobs: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Degrade a directory of images and write a manifest.
    Degrade {
        input: PathBuf,
        output: PathBuf,
        /// Named preset; overrides the config's [degradation] section.
        #[arg(long)]
        preset: Option<Preset>,
        #[command(flatten)]
        common: Common,
    },
    /// Restore one image, or every image in a directory.
    Restore {
        input: PathBuf,
        output: PathBuf,
        /// `id=path` model files, added to the config's [models].
        #[arg(long = "model", value_name = "ID=PATH")]
        models: Vec<String>,
        #[arg(long)]
        ablate: Option<Ablation>,
        #[command(flatten)]
        common: Common,
    },
    /// Monte-Carlo SNR curves per resolution and a breakpoint plan.
    SnrCurve {
        dataset: PathBuf,
        output: PathBuf,
        /// Comma-separated; defaults to the distinct stage resolutions.
        #[arg(long, value_delimiter = ',')]
        resolutions: Vec<usize>,
        /// Window length per resolution for the plan; 10 each by default.
        #[arg(long, value_delimiter = ',')]
        lengths: Vec<usize>,
        /// `t_end` of the first planned window; defaults to the first stage's.
        #[arg(long)]
        first_t_end: Option<usize>,
        #[arg(long, default_value_t = DEFAULT_MC_SAMPLES)]
        mc: usize,
        #[arg(long, default_value_t = DEFAULT_SNR_GUARD_DB)]
        guard_db: f64,
        #[command(flatten)]
        schedule: ScheduleArgs,
        #[command(flatten)]
        common: Common,
    },
    /// Fit a patch denoiser on `<name>` / `<name>.deg` image pairs.
    Train {
        pairs: PathBuf,
        model_out: PathBuf,
        /// Take resolution, schedule, role and fit settings from this
        /// pipeline denoiser id.
        #[arg(long)]
        denoiser: Option<String>,
        #[arg(long)]
        resolution: Option<usize>,
        #[arg(long)]
        condition: Option<ConditionArg>,
        /// Low-pass factor for `--condition lowpass`.
        #[arg(long, default_value_t = 2)]
        lowpass: usize,
        #[arg(long)]
        radius: Option<usize>,
        #[arg(long)]
        buckets: Option<usize>,
        #[arg(long)]
        lambda: Option<f64>,
        #[arg(long)]
        samples: Option<usize>,
        #[command(flatten)]
        schedule: ScheduleArgs,
        #[command(flatten)]
        common: Common,
    },
    /// PSNR, SSIM and MSE of restored images against references.
    Eval {
        restored: PathBuf,
        reference: PathBuf,
        /// CSV destination; stdout when omitted.
        #[arg(long, short)]
        output: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Evaluation budget and wall time against an untruncated chain.
    Bench {
        #[arg(long, default_value_t = 4)]
        count: usize,
        #[arg(long = "model", value_name = "ID=PATH")]
        models: Vec<String>,
        #[command(flatten)]
        common: Common,
    },
    /// Write procedural toy images, optionally with degraded partners.
    Synth {
        output: PathBuf,
        #[arg(long, default_value_t = 16)]
        count: usize,
        #[arg(long, default_value_t = 64)]
        size: usize,
        #[arg(long, default_value_t = 3)]
        channels: usize,
        /// Also write `<name>.deg.png` using the configured degradation.
        #[arg(long)]
        pairs: bool,
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Ablation {
    /// Turn off frequency swapping in the LRS and ADR loops.
    NoSwap,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ConditionArg {
    None,
    Degraded,
    Lowpass,
}

/// Overrides for the config's schedule profile.
#[derive(Debug, Default, Args)]
pub struct ScheduleArgs {
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub beta_start: Option<f64>,
    #[arg(long)]
    pub beta_end: Option<f64>,
    #[arg(long)]
    pub base_resolution: Option<usize>,
}

impl ScheduleArgs {
    fn apply(&self, mut p: ScheduleProfile) -> ScheduleProfile {
        if let Some(v) = self.steps {
            p.steps = v;
        }
        if let Some(v) = self.beta_start {
            p.beta_start = v;
        }
        if let Some(v) = self.beta_end {
            p.beta_end = v;
        }
        if let Some(v) = self.base_resolution {
            p.base_resolution = v;
        }
        p
    }
}

struct Context {
    cfg: RunConfig,
    seed: u64,
    jobs: usize,
}

fn context(common: &Common) -> Result<Context> {
    let cfg = match &common.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    let seed = resolve_seed(common.seed, cfg.seed)?;
    let jobs = common.jobs.unwrap_or(cfg.jobs);
    Ok(Context { cfg, seed, jobs })
}

fn report_failures(what: &str, failures: &[(String, String)]) -> Status {
    for (name, why) in failures {
        eprintln!("{what} {name}: {why}");
    }
    if failures.is_empty() {
        Status::Success
    } else {
        eprintln!("{} file(s) failed", failures.len());
        Status::Data
    }
}

fn write_or_print(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => write_atomic(p, text.as_bytes()),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

/// Runs one subcommand and returns its exit status.
pub fn run(cli: Cli) -> Result<Status> {
    match cli.command {
        Command::Degrade {
            input,
            output,
            preset,
            common,
        } => {
            let ctx = context(&common)?;
            let deg = match preset {
                Some(p) => p.config(),
                None => ctx.cfg.degradation.resolve().map_err(CliError::usage)?,
            };
            let summary = with_pool(ctx.jobs, || degrade::degrade_dir(&input, &output, &deg, ctx.seed))??;
            if summary.written == 0 && summary.failures.is_empty() {
                eprintln!("warning: no images in {}", input.display());
            }
            println!("degraded {} image(s); manifest {}", summary.written, summary.manifest.display());
            Ok(report_failures("degrade", &summary.failures))
        }
        Command::Restore {
            input,
            output,
            models,
            ablate,
            common,
        } => {
            let ctx = context(&common)?;
            let mut paths = ctx.cfg.models.clone();
            paths.extend(parse_model_args(&models)?);
            let models = load_models(&paths)?;
            let mut pipeline = ctx.cfg.pipeline.clone();
            if ablate == Some(Ablation::NoSwap) {
                pipeline.swap = false;
            }
            if input.is_dir() {
                let items = with_pool(ctx.jobs, || restore::restore_dir(&input, &output, &models, &pipeline, ctx.seed))??;
                if items.is_empty() {
                    eprintln!("warning: no images in {}", input.display());
                }
                let mut failures = Vec::new();
                let mut exhausted = false;
                for item in items {
                    match item.result {
                        Ok(trace) => {
                            println!("{}", item.name);
                            print!("{}", trace.summary_table());
                            exhausted |= trace.any_exhausted();
                        }
                        Err(e) => failures.push((item.name, e.to_string())),
                    }
                }
                let status = report_failures("restore", &failures);
                Ok(if status == Status::Success && exhausted { Status::Degraded } else { status })
            } else {
                let trace = restore::restore_file(&input, &output, &models, &pipeline, ctx.seed)?;
                print!("{}", trace.summary_table());
                Ok(if trace.any_exhausted() { Status::Degraded } else { Status::Success })
            }
        }
        Command::SnrCurve {
            dataset,
            output,
            resolutions,
            lengths,
            first_t_end,
            mc,
            guard_db,
            schedule,
            common,
        } => {
            let ctx = context(&common)?;
            let pipeline = &ctx.cfg.pipeline;
            let profile = schedule.apply(pipeline.schedule.clone());
            let resolutions = if resolutions.is_empty() {
                let mut r: Vec<usize> = pipeline.stages.iter().map(|s| s.resolution).collect();
                r.dedup();
                r
            } else {
                resolutions
            };
            let lengths = if lengths.is_empty() { vec![10; resolutions.len()] } else { lengths };
            let first_t_end = first_t_end.unwrap_or(pipeline.stages[0].window.t_end);
            let req = snr::PlanRequest {
                lengths: &lengths,
                first_t_end,
                guard_db,
            };
            let out = with_pool(ctx.jobs, || snr::snr_dir(&dataset, &output, &profile, &resolutions, mc, ctx.seed, &req))??;
            for f in &out.curve_files {
                println!("wrote {}", f.display());
            }
            match out.plan {
                Ok(plan) => {
                    print!("{}", truncdiff::schedule::plan_to_text(&plan));
                    Ok(Status::Success)
                }
                Err(e) => {
                    eprintln!("no breakpoint plan: {e}");
                    Ok(Status::Data)
                }
            }
        }
        Command::Train {
            pairs,
            model_out,
            denoiser,
            resolution,
            condition,
            lowpass,
            radius,
            buckets,
            lambda,
            samples,
            schedule,
            common,
        } => {
            let ctx = context(&common)?;
            let pipeline = &ctx.cfg.pipeline;
            let profile = schedule.apply(pipeline.schedule.clone());
            let (stage_res, stage_kind) = match &denoiser {
                Some(id) => {
                    let (i, st) = pipeline
                        .stages
                        .iter()
                        .enumerate()
                        .find(|(_, s)| &s.denoiser == id)
                        .ok_or_else(|| CliError::usage(format!("no stage uses denoiser `{id}`")))?;
                    let prev = if i > 0 { pipeline.stages[i - 1].resolution } else { st.resolution };
                    (Some((st.resolution, st.resolution / prev.max(1))), Some(st.kind))
                }
                None => (None, None),
            };
            let resolution = resolution
                .or(stage_res.map(|(r, _)| r))
                .ok_or_else(|| CliError::usage("train needs --resolution or --denoiser"))?;
            let condition = match condition {
                Some(ConditionArg::None) => train::ConditionSource::None,
                Some(ConditionArg::Degraded) => train::ConditionSource::Degraded,
                Some(ConditionArg::Lowpass) => train::ConditionSource::Lowpass(FilterFactor::new(lowpass)?),
                None => match (stage_kind, stage_res) {
                    (Some(StageKind::Gdb), Some((_, step))) => train::ConditionSource::Lowpass(FilterFactor::new(step)?),
                    (Some(_), _) => train::ConditionSource::None,
                    (None, _) => train::ConditionSource::Degraded,
                },
            };
            let mut fit = stage_kind.map_or_else(Default::default, |k| ctx.cfg.fit.for_kind(k));
            if let Some(v) = radius {
                fit.radius = v;
            }
            if let Some(v) = buckets {
                fit.buckets = v;
            }
            if let Some(v) = lambda {
                fit.ridge_lambda = v;
            }
            if let Some(v) = samples {
                fit.samples_per_bucket = v;
            }
            let sched = profile.for_resolution(resolution)?;
            let req = train::TrainRequest {
                resolution,
                condition,
                fit,
                seed: ctx.seed,
                name: denoiser.unwrap_or_else(|| "patch".into()),
            };
            let (model, scan) = with_pool(ctx.jobs, || train::train_dir(&pairs, &sched, &req))??;
            for name in &scan.unpaired {
                eprintln!("skipped unpaired {name}");
            }
            write_atomic(&model_out, model.to_json().as_bytes())?;
            println!("fitted on {} pair(s); wrote {}", scan.pairs.len(), model_out.display());
            print!("{}", train::loss_report(&model));
            Ok(Status::Success)
        }
        Command::Eval {
            restored,
            reference,
            output,
            common,
        } => {
            let ctx = context(&common)?;
            let (report, failures) = with_pool(ctx.jobs, || eval::eval_dirs(&restored, &reference))??;
            write_or_print(output.as_deref(), &eval::report_csv(&report))?;
            Ok(report_failures("eval", &failures))
        }
        Command::Bench { count, models, common } => {
            let ctx = context(&common)?;
            let pipeline: &PipelineConfig = &ctx.cfg.pipeline;
            let mut paths = ctx.cfg.models.clone();
            paths.extend(parse_model_args(&models)?);
            let models = if paths.is_empty() {
                eprintln!("no model files given; fitting toy models");
                bench::toy_models(pipeline, &ctx.cfg.fit, ctx.seed)?
            } else {
                load_models(&paths)?
            };
            let deg = ctx.cfg.degradation.resolve().map_err(CliError::usage)?;
            let batch = bench::toy_batch(pipeline, &deg, count, ctx.seed.wrapping_add(1))?;
            let report = bench::bench(pipeline, &models, &batch, ctx.seed)?;
            print!("{}", report.to_text());
            Ok(Status::Success)
        }
        Command::Synth {
            output,
            count,
            size,
            channels,
            pairs,
            common,
        } => {
            let ctx = context(&common)?;
            let deg = if pairs {
                Some(ctx.cfg.degradation.resolve().map_err(CliError::usage)?)
            } else {
                None
            };
            let written = synth::synth_dir(&output, count, size, channels, ctx.seed, deg.as_ref())?;
            println!("wrote {} file(s) to {}", written.len(), output.display());
            Ok(Status::Success)
        }
    }
}
