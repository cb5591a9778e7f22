use std::fmt::Write as _;

use serde::Serialize;

use crate::error::{Error, Result};

use super::config::StageKind;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Attempt {
    pub n: usize,
    pub l_adr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StageTrace {
    pub index: usize,
    pub kind: StageKind,
    pub resolution: usize,
    pub t_begin: usize,
    pub t_end: usize,
    /// Fixed factor for LRS, the accepted (or best) candidate for ADR.
    pub filter: Option<usize>,
    pub threshold: Option<f64>,
    /// ADR candidates in the order they were run.
    pub attempts: Vec<Attempt>,
    pub exhausted: bool,
    /// Reverse steps of the kept attempt.
    pub steps: usize,
    /// Denoiser calls over all attempts.
    pub evaluations: usize,
}

/// SNR on either side of a hand-over between consecutive stages.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Stitch {
    pub from: usize,
    pub to: usize,
    pub snr_end_db: f64,
    pub snr_begin_db: f64,
}

impl Stitch {
    pub fn gap_db(&self) -> f64 {
        (self.snr_end_db - self.snr_begin_db).abs()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RestorationTrace {
    pub seed: u64,
    pub swap: bool,
    pub stages: Vec<StageTrace>,
    pub stitches: Vec<Stitch>,
    pub total_evaluations: usize,
}

impl RestorationTrace {
    pub fn any_exhausted(&self) -> bool {
        self.stages.iter().any(|s| s.exhausted)
    }

    /// Recomputes the total from the per-stage counters.
    pub fn evaluations_from_stages(&self) -> usize {
        self.stages.iter().map(|s| s.evaluations).sum()
    }

    /// `[run]`, then one `[stage i]` and one `[stitch i-j]` section each, as
    /// `key = value` lines. Floats are written in shortest round-trip form.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "[run]");
        let _ = writeln!(s, "seed = {}", self.seed);
        let _ = writeln!(s, "swap = {}", self.swap);
        let _ = writeln!(s, "stages = {}", self.stages.len());
        let _ = writeln!(s, "total_evaluations = {}", self.total_evaluations);
        for st in &self.stages {
            let _ = writeln!(s, "\n[stage {}]", st.index);
            let _ = writeln!(s, "kind = {}", st.kind);
            let _ = writeln!(s, "resolution = {}", st.resolution);
            let _ = writeln!(s, "t_begin = {}", st.t_begin);
            let _ = writeln!(s, "t_end = {}", st.t_end);
            if let Some(f) = st.filter {
                let _ = writeln!(s, "filter = {f}");
            }
            if let Some(t) = st.threshold {
                let _ = writeln!(s, "threshold = {t:?}");
            }
            if !st.attempts.is_empty() {
                let list: Vec<String> = st.attempts.iter().map(|a| format!("{}:{:?}", a.n, a.l_adr)).collect();
                let _ = writeln!(s, "attempts = {}", list.join(","));
            }
            let _ = writeln!(s, "exhausted = {}", st.exhausted);
            let _ = writeln!(s, "steps = {}", st.steps);
            let _ = writeln!(s, "evaluations = {}", st.evaluations);
        }
        for x in &self.stitches {
            let _ = writeln!(s, "\n[stitch {}-{}]", x.from, x.to);
            let _ = writeln!(s, "snr_end_db = {:?}", x.snr_end_db);
            let _ = writeln!(s, "snr_begin_db = {:?}", x.snr_begin_db);
            let _ = writeln!(s, "gap_db = {:?}", x.gap_db());
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut trace = RestorationTrace {
            seed: 0,
            swap: true,
            stages: Vec::new(),
            stitches: Vec::new(),
            total_evaluations: 0,
        };
        enum Section {
            None,
            Run,
            Stage,
            Stitch,
        }
        let mut section = Section::None;
        for (ln, raw) in text.lines().enumerate() {
            let line = raw.trim();
            let bad = |what: &str| Error::invalid(format!("trace line {}: {what}: `{raw}`", ln + 1));
            if line.is_empty() {
                continue;
            }
            if let Some(head) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                let mut parts = head.split_whitespace();
                match (parts.next(), parts.next()) {
                    (Some("run"), None) => section = Section::Run,
                    (Some("stage"), Some(i)) => {
                        let index = i.parse().map_err(|_| bad("bad stage index"))?;
                        trace.stages.push(StageTrace {
                            index,
                            kind: StageKind::Lrs,
                            resolution: 0,
                            t_begin: 0,
                            t_end: 0,
                            filter: None,
                            threshold: None,
                            attempts: Vec::new(),
                            exhausted: false,
                            steps: 0,
                            evaluations: 0,
                        });
                        section = Section::Stage;
                    }
                    (Some("stitch"), Some(pair)) => {
                        let (a, b) = pair.split_once('-').ok_or_else(|| bad("bad stitch pair"))?;
                        trace.stitches.push(Stitch {
                            from: a.parse().map_err(|_| bad("bad stitch index"))?,
                            to: b.parse().map_err(|_| bad("bad stitch index"))?,
                            snr_end_db: f64::NAN,
                            snr_begin_db: f64::NAN,
                        });
                        section = Section::Stitch;
                    }
                    _ => return Err(bad("unknown section")),
                }
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| bad("expected `key = value`"))?;
            let (k, v) = (k.trim(), v.trim());
            let int = || v.parse::<usize>().map_err(|_| bad("expected an integer"));
            let float = || v.parse::<f64>().map_err(|_| bad("expected a number"));
            let boolean = || v.parse::<bool>().map_err(|_| bad("expected true or false"));
            match section {
                Section::None => return Err(bad("key outside any section")),
                Section::Run => match k {
                    "seed" => trace.seed = v.parse().map_err(|_| bad("expected an integer"))?,
                    "swap" => trace.swap = boolean()?,
                    "stages" => {
                        int()?;
                    }
                    "total_evaluations" => trace.total_evaluations = int()?,
                    _ => return Err(bad("unknown key")),
                },
                Section::Stage => {
                    let st = trace.stages.last_mut().expect("inside a stage section");
                    match k {
                        "kind" => st.kind = v.parse()?,
                        "resolution" => st.resolution = int()?,
                        "t_begin" => st.t_begin = int()?,
                        "t_end" => st.t_end = int()?,
                        "filter" => st.filter = Some(int()?),
                        "threshold" => st.threshold = Some(float()?),
                        "attempts" => {
                            for item in v.split(',') {
                                let (n, l) = item.split_once(':').ok_or_else(|| bad("bad attempt"))?;
                                st.attempts.push(Attempt {
                                    n: n.parse().map_err(|_| bad("bad attempt factor"))?,
                                    l_adr: l.parse().map_err(|_| bad("bad attempt loss"))?,
                                });
                            }
                        }
                        "exhausted" => st.exhausted = boolean()?,
                        "steps" => st.steps = int()?,
                        "evaluations" => st.evaluations = int()?,
                        _ => return Err(bad("unknown key")),
                    }
                }
                Section::Stitch => {
                    let x = trace.stitches.last_mut().expect("inside a stitch section");
                    match k {
                        "snr_end_db" => x.snr_end_db = float()?,
                        "snr_begin_db" => x.snr_begin_db = float()?,
                        "gap_db" => {
                            float()?;
                        }
                        _ => return Err(bad("unknown key")),
                    }
                }
            }
        }
        Ok(trace)
    }

    /// Fixed-width table: stage, kind, resolution, N, final `L_adr`, steps, evaluations.
    pub fn summary_table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{:<6}{:<6}{:>6}{:>5}{:>14}{:>7}{:>7}", "stage", "kind", "res", "N", "L_adr", "steps", "evals");
        for st in &self.stages {
            let n = st.filter.map_or("-".to_string(), |n| n.to_string());
            let l = st
                .attempts
                .iter()
                .find(|a| Some(a.n) == st.filter)
                .map_or("-".to_string(), |a| format!("{:.3e}", a.l_adr));
            let flag = if st.exhausted { " exhausted" } else { "" };
            let _ = writeln!(
                s,
                "{:<6}{:<6}{:>6}{:>5}{:>14}{:>7}{:>7}{flag}",
                st.index, st.kind, st.resolution, n, l, st.steps, st.evaluations
            );
        }
        let _ = writeln!(s, "total evaluations: {}", self.total_evaluations);
        s
    }
}
