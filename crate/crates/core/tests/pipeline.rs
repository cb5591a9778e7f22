use std::sync::OnceLock;

use truncdiff::degrade::{synthesize, DegradationConfig};
use truncdiff::denoiser::{AnalyticGaussianDenoiser, PatchDenoiserModel};
use truncdiff::filters::{resize, FilterFactor};
use truncdiff::metrics::psnr;
use truncdiff::pipeline::{
    compute_l_adr, full_chain, gdb_stage, lrs_stage, restore, restore_stages, step_budget, Models, PipelineConfig,
    Sampler, StageConfig, StageKind,
};
use truncdiff::schedule::{forward_sample, ScheduleProfile, TimeWindow, VarianceSchedule};
use truncdiff::toy::{desk_fit, fit_models_with, toy_dataset};
use truncdiff::{Image, SeededRng, ValueRange};

fn desk_models() -> &'static Models {
    static MODELS: OnceLock<Models> = OnceLock::new();
    MODELS.get_or_init(|| {
        let train = toy_dataset(64, 64, 3, 1);
        fit_models_with(&train, &PipelineConfig::desk(), 2, desk_fit).unwrap()
    })
}

fn degraded_case(i: u64) -> (Image, Image) {
    let x = toy_dataset(1, 64, 3, 500 + i).remove(0);
    let (y, _) = synthesize(&x, &DegradationConfig::desk(), &mut SeededRng::new(900 + i)).unwrap();
    (x, y)
}

fn ff(n: usize) -> FilterFactor {
    FilterFactor::new(n).unwrap()
}

fn random(w: usize, seed: u64) -> Image {
    let mut rng = SeededRng::new(seed);
    Image::from_fn(w, w, 3, ValueRange::Model, |_, _, _| rng.uniform_range(-1.0, 1.0))
}

/// `Φ_2` spelled out: 2×2 block means, then half-pixel bilinear with clamped edges.
fn naive_lowpass2(img: &Image) -> Image {
    let (w, h) = (img.width(), img.height());
    let (sw, sh) = (w / 2, h / 2);
    let mut out = Image::zeros(w, h, img.channels(), img.range());
    let taps = |i: usize, n: usize| {
        let u = ((i as f64 + 0.5) / 2.0 - 0.5).clamp(0.0, (n - 1) as f64);
        let i0 = u.floor() as usize;
        let f = u - i0 as f64;
        (i0, (i0 + 1).min(n - 1), f)
    };
    for c in 0..img.channels() {
        let small = |y: usize, x: usize| {
            (img.get(c, 2 * y, 2 * x)
                + img.get(c, 2 * y, 2 * x + 1)
                + img.get(c, 2 * y + 1, 2 * x)
                + img.get(c, 2 * y + 1, 2 * x + 1))
                / 4.0
        };
        for y in 0..h {
            let (y0, y1, fy) = taps(y, sh);
            for x in 0..w {
                let (x0, x1, fx) = taps(x, sw);
                let v = (1.0 - fy) * ((1.0 - fx) * small(y0, x0) + fx * small(y0, x1))
                    + fy * ((1.0 - fx) * small(y1, x0) + fx * small(y1, x1));
                out.set(c, y, x, v);
            }
        }
    }
    out
}

#[test]
fn l_adr_matches_naive_loops() {
    let (a, b) = (random(16, 1), random(16, 2));
    let (pa, pb) = (naive_lowpass2(&a), naive_lowpass2(&b));
    let mut sum = 0.0;
    for (p, q) in pa.data().iter().zip(pb.data()) {
        sum += (p - q) * (p - q);
    }
    let naive = sum / a.len() as f64;
    assert!((compute_l_adr(&a, &b, ff(2)).unwrap() - naive).abs() < 1e-12);
}

#[test]
fn l_adr_of_constant_offset_is_its_square() {
    let y = random(16, 3);
    let c = 0.125;
    let x = y.map(|v| v + c);
    for n in [1, 2, 4, 8] {
        assert!((compute_l_adr(&x, &y, ff(n)).unwrap() - c * c).abs() < 1e-12);
    }
    let zero = Image::zeros(8, 8, 1, ValueRange::Model);
    let half = Image::filled(8, 8, 1, 0.5, ValueRange::Model);
    assert!((compute_l_adr(&half, &zero, ff(4)).unwrap() - 0.25).abs() < 1e-15);
}

#[test]
fn zero_weight_gdb_is_a_rescaling_chain() {
    let sched = VarianceSchedule::rescaled_linear(200).unwrap();
    let den = PatchDenoiserModel::zeros(&sched, 1, 3, 3, 4).unwrap();
    let x_in = random(8, 4);
    let cond = random(8, 5);
    let cfg = StageConfig::gdb(8, TimeWindow::new(6, 1).unwrap(), "zero");
    let rng = SeededRng::new(11);
    let out = gdb_stage(&x_in, &cond, &cfg, &den, &Sampler::new(&sched), &rng).unwrap();

    // x_T' = √ᾱ x_in + √(1-ᾱ) ε, then x ← x/√α_t + √β_t z for t > 1.
    let mut noise = rng.derive(0);
    let eps = noise.normal_like(&x_in);
    let ab = sched.alpha_bar(6);
    let mut x: Vec<f64> = x_in.data().iter().zip(eps.data()).map(|(a, e)| ab.sqrt() * a + (1.0 - ab).sqrt() * e).collect();
    let mut estimate = x.clone();
    for t in (2..=6).rev() {
        let beta = sched.betas()[t - 1];
        estimate = x.iter().map(|v| v / sched.alpha_bar(t).sqrt()).collect();
        for v in &mut x {
            *v = *v / (1.0 - beta).sqrt() + beta.sqrt() * noise.normal();
        }
    }
    assert_eq!(out.evaluations, 5);
    for (got, want) in out.state.data().iter().zip(&x) {
        assert!((got - want).abs() < 1e-12);
    }
    for (got, want) in out.estimate.data().iter().zip(&estimate) {
        assert!((got - want).abs() < 1e-12);
    }
}

#[test]
fn startup_beats_unconditioned_sampling_on_clean_input() {
    let sched = VarianceSchedule::rescaled_linear(200).unwrap();
    let (mu, s2) = (0.1, 0.2f64);
    let mut wins = 0;
    for i in 0..20 {
        let y = SeededRng::new(i).normal_image(16, 16, 3).scale(s2.sqrt()).map(|v| v + mu);
        let den = AnalyticGaussianDenoiser::new(Image::filled(16, 16, 3, mu, ValueRange::Model), s2, sched.clone()).unwrap();
        let cfg = StageConfig::lrs(16, TimeWindow::new(20, 10).unwrap(), 2, "a").unwrap();
        let sampler = Sampler::new(&sched);
        let rng = SeededRng::new(100 + i);
        let lrs = lrs_stage(&y, &cfg, &den, &sampler, &rng).unwrap();
        let free = full_chain(&y, &den, None, &sampler, &rng).unwrap();
        if psnr(&lrs.estimate, &y, 2.0).unwrap() >= psnr(&free.estimate, &y, 2.0).unwrap() {
            wins += 1;
        }
    }
    assert_eq!(wins, 20);
}

#[test]
fn restore_is_deterministic_and_accounts_for_every_call() {
    let models = desk_models();
    let cfg = PipelineConfig::desk();
    for i in 0..4 {
        let (_, y) = degraded_case(i);
        let (a, ta) = restore(&y, models, &cfg, 7 + i).unwrap();
        let (b, tb) = restore(&y, models, &cfg, 7 + i).unwrap();
        assert_eq!(a, b);
        assert_eq!(ta.to_text(), tb.to_text());
        let mut expected = 0;
        for (st, sc) in ta.stages.iter().zip(&cfg.stages) {
            let attempts = if sc.kind == StageKind::Adr { st.attempts.len() } else { 1 };
            assert_eq!(st.evaluations, sc.window.len() * attempts);
            expected += st.evaluations;
        }
        assert_eq!(ta.total_evaluations, expected);
        assert_eq!(ta.evaluations_from_stages(), expected);
    }
}

#[test]
fn non_exhausted_adr_meets_threshold() {
    let models = desk_models();
    let cfg = PipelineConfig::desk();
    for i in 0..10 {
        let (_, y) = degraded_case(i);
        let (_, trace) = restore(&y, models, &cfg, i).unwrap();
        for st in trace.stages.iter().filter(|s| s.kind == StageKind::Adr && !s.exhausted) {
            assert!(st.attempts.last().unwrap().l_adr <= st.threshold.unwrap());
        }
    }
}

#[test]
fn clean_input_passes_through() {
    let models = desk_models();
    let mut cfg = PipelineConfig::desk();
    for st in cfg.stages.iter_mut().filter(|s| s.kind == StageKind::Adr) {
        st.threshold = Some(1.0);
    }
    for i in 0..5 {
        let x = toy_dataset(1, 64, 3, 700 + i).remove(0);
        let (out, trace) = restore(&x, models, &cfg, i).unwrap();
        assert!(!trace.any_exhausted());
        assert!(psnr(&out, &x, 1.0).unwrap() >= 20.0);
    }
}

#[test]
fn detail_boost_keeps_fidelity() {
    let models = desk_models();
    let cfg = PipelineConfig::desk();
    let n = cfg.stages.len();
    let (mut before, mut after) = (0.0, 0.0);
    let cases = 50;
    for i in 0..cases {
        let (x, y) = degraded_case(i);
        let (outs, _) = restore_stages(&y, models, &cfg, i).unwrap();
        let x_in = resize(&outs[n - 2], 64, 64).unwrap().to_display_range();
        before += psnr(&x_in, &x, 1.0).unwrap();
        after += psnr(&outs[n - 1].to_display_range(), &x, 1.0).unwrap();
    }
    let (before, after) = (before / cases as f64, after / cases as f64);
    assert!(after >= before - 0.5, "{after:.2} dB after vs {before:.2} dB before");
}

#[test]
fn swapping_keeps_the_low_band() {
    let models = desk_models();
    let cfg = PipelineConfig::desk();
    let off = PipelineConfig { swap: false, ..cfg.clone() };
    let last_adr = cfg.stages.len() - 2;
    let res = cfg.stages[last_adr].resolution;
    let cases = 50;
    let mut better = 0;
    for i in 0..cases {
        let (_, y) = degraded_case(i);
        let y_up = resize(&y.to_model_range(), res, res).unwrap();
        let (on_out, trace) = restore_stages(&y, models, &cfg, i).unwrap();
        let (off_out, _) = restore_stages(&y, models, &off, i).unwrap();
        let n = ff(trace.stages[last_adr].filter.unwrap());
        let l_on = compute_l_adr(&on_out[last_adr], &y_up, n).unwrap();
        let l_off = compute_l_adr(&off_out[last_adr], &y_up, n).unwrap();
        if l_on < l_off {
            better += 1;
        }
    }
    assert!(better * 10 >= cases * 9, "{better}/{cases}");
}

#[test]
fn step_budget_examples() {
    let mut single = PipelineConfig::desk();
    single.stages = vec![StageConfig::gdb(64, TimeWindow { t_begin: 200, t_end: 0 }, "x")];
    assert_eq!(step_budget(&single).ratio, 1.0);

    let desk = PipelineConfig::desk();
    let by_hand = 200.0 / (10.0 + 20.0 + 20.0 + 3.0);
    assert_eq!(step_budget(&desk).ratio, by_hand);

    let full = PipelineConfig::full_scale();
    assert_eq!(full.schedule, ScheduleProfile::standard(64));
    let b = step_budget(&full);
    assert_eq!(b.ratio, 1000.0 / 310.0);
    assert!(b.ratio >= 3.0);
}

#[test]
fn forward_sampling_in_stage_uses_first_stream() {
    // The stage's starting point is x_in forward-sampled with the first draw of rng.derive(0).
    let sched = VarianceSchedule::rescaled_linear(200).unwrap();
    let x_in = random(8, 9);
    let rng = SeededRng::new(3);
    let eps = rng.derive(0).normal_like(&x_in);
    let start = forward_sample(&x_in, 4, &eps, &sched).unwrap();
    let den = PatchDenoiserModel::zeros(&sched, 0, 3, 3, 1).unwrap();
    let cfg = StageConfig::gdb(8, TimeWindow::new(4, 3).unwrap(), "zero");
    let out = gdb_stage(&x_in, &x_in, &cfg, &den, &Sampler::new(&sched), &rng).unwrap();
    let rescaled = start.scale(1.0 / sched.alpha_bar(4).sqrt());
    assert!(out.estimate.max_abs_diff(&rescaled).unwrap() < 1e-12);
}
