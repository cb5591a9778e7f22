use proptest::prelude::*;
use truncdiff::filters::resize;
use truncdiff::schedule::{
    expected_snr_curve, forward_sample, match_breakpoint, noise_consistency, snr_db, ScheduleProfile, SnrCurve,
    VarianceSchedule,
};
use truncdiff::toy::toy_dataset;
use truncdiff::{Error, Image, SeededRng, ValueRange};

fn noise(w: usize, seed: u64) -> Image {
    SeededRng::new(seed).normal_image(w, w, 1)
}

#[test]
fn alpha_bar_matches_high_precision_product() {
    // 40-digit cumulative product of (1 - β_i) over the standard 1000-step schedule.
    let s = VarianceSchedule::linear(1000, 1e-4, 0.02).unwrap();
    let oracle = 4.035829765375683e-5;
    assert!((s.alpha_bar(1000) - oracle).abs() / oracle < 1e-9);
}

#[test]
fn two_step_half_schedule() {
    let s = VarianceSchedule::linear(2, 0.5, 0.5).unwrap();
    assert_eq!(s.alpha_bar(2), 0.25);
}

#[test]
fn forward_variance_at_last_step() {
    let s = VarianceSchedule::linear(1000, 1e-4, 0.02).unwrap();
    let t = 1000;
    let ab = s.alpha_bar(t);
    let mut rng = SeededRng::new(5);
    let x0_var = 0.25;
    let draws = 10_000;
    let mut values = Vec::with_capacity(draws);
    for _ in 0..draws {
        let x0 = Image::filled(1, 1, 1, 0.5 * rng.normal(), ValueRange::Model);
        let eps = rng.normal_image(1, 1, 1);
        values.push(forward_sample(&x0, t, &eps, &s).unwrap().data()[0]);
    }
    let (_, var) = truncdiff::numeric::mean_var(&values);
    let expected = ab * x0_var + (1.0 - ab);
    assert!((var - expected).abs() / expected < 0.05, "{var} vs {expected}");
}

#[test]
fn snr_is_exact_for_doubling() {
    let x0 = noise(8, 1);
    let v = snr_db(&x0.scale(2.0), &x0).unwrap();
    assert!((v - 10.0 * 4f64.log10()).abs() < 1e-12);
    let zero = Image::zeros(8, 8, 1, ValueRange::Model);
    assert!(matches!(snr_db(&zero, &zero), Err(Error::Undefined(_))));
}

#[test]
fn curves_are_reproducible_and_ordered_across_resolutions() {
    let profile = ScheduleProfile::desk();
    let small = toy_dataset(4, 16, 1, 3)
        .into_iter()
        .map(|x| x.to_model_range())
        .collect::<Vec<_>>();
    let large: Vec<Image> = small.iter().map(|x| resize(x, 64, 64).unwrap()).collect();
    let s16 = profile.for_resolution(16).unwrap();
    let s64 = profile.for_resolution(64).unwrap();
    let a = expected_snr_curve(&small, &s16, 1, 9).unwrap();
    let b = expected_snr_curve(&small, &s16, 1, 9).unwrap();
    assert_eq!(a, b);
    let c16 = expected_snr_curve(&small, &s16, 4, 9).unwrap();
    let c64 = expected_snr_curve(&large, &s64, 4, 9).unwrap();
    assert_ne!(c16, c64);
    for t in [5, 20, 60] {
        let target = c16.at(t);
        let t64 = match_breakpoint(target, &c64, 3.0).unwrap();
        assert!(t64 > t, "t={t} matched at {t64}");
    }
}

#[test]
fn matched_snr_noise_levels_agree() {
    let profile = ScheduleProfile::desk();
    let small: Vec<Image> = toy_dataset(4, 16, 1, 11).iter().map(Image::to_model_range).collect();
    let large: Vec<Image> = small.iter().map(|x| resize(x, 64, 64).unwrap()).collect();
    let s16 = profile.for_resolution(16).unwrap();
    let s64 = profile.for_resolution(64).unwrap();
    let c16 = expected_snr_curve(&small, &s16, 8, 1).unwrap();
    let c64 = expected_snr_curve(&large, &s64, 8, 1).unwrap();
    for t in [10, 20, 50] {
        let t64 = match_breakpoint(c16.at(t), &c64, 3.0).unwrap();
        let a = noise_consistency(&small[0], &s16, t, 64, 2).unwrap();
        let b = noise_consistency(&large[0], &s64, t64, 4, 2).unwrap();
        assert!((a.variance - b.variance).abs() / a.variance < 0.1, "t={t}: {a:?} vs {b:?}");
    }
}

fn curve(values: Vec<f64>) -> SnrCurve {
    let stderr = vec![0.0; values.len()];
    SnrCurve {
        resolution: 1,
        values,
        stderr,
        mc_samples: 1,
    }
}

fn scan_oracle(target: f64, values: &[f64]) -> usize {
    let mut best = (f64::INFINITY, 0);
    for (i, v) in values.iter().enumerate() {
        let d = (v - target).abs();
        if d < best.0 {
            best = (d, i + 1);
        }
    }
    best.1
}

#[test]
fn breakpoint_examples() {
    let c = curve(vec![30.0, 20.0, 10.0]);
    assert_eq!(match_breakpoint(19.0, &c, 3.0).unwrap(), 2);
    assert_eq!(match_breakpoint(25.0, &c, 3.0).unwrap(), 1);
    assert!(matches!(match_breakpoint(40.0, &c, 3.0), Err(Error::NoComparableSnr { .. })));
    let long = curve((1..=400).map(|t| 50.0 - 0.1 * t as f64).collect());
    assert_eq!(match_breakpoint(long.at(350), &long, 3.0).unwrap(), 350);
}

proptest! {
    #[test]
    fn alpha_bar_strictly_decreases(steps in 2usize..400, start in 1e-5f64..1e-2, span in 0.0f64..0.2) {
        let s = VarianceSchedule::linear(steps, start, (start + span).min(0.5)).unwrap();
        for t in 1..steps {
            prop_assert!(s.alpha_bar(t + 1) < s.alpha_bar(t));
        }
    }

    #[test]
    fn forward_sample_is_homogeneous(seed in any::<u64>(), a in -5.0f64..5.0, t in 1usize..=200) {
        let s = VarianceSchedule::rescaled_linear(200).unwrap();
        let x0 = noise(4, seed);
        let eps = noise(4, seed ^ 1);
        let lhs = forward_sample(&x0.scale(a), t, &eps.scale(a), &s).unwrap();
        let rhs = forward_sample(&x0, t, &eps, &s).unwrap().scale(a);
        prop_assert!(lhs.max_abs_diff(&rhs).unwrap() <= 1e-12);
    }

    #[test]
    fn snr_ignores_common_scale(seed in any::<u64>(), k in prop_oneof![-100.0f64..-0.01, 0.01f64..100.0]) {
        let x0 = noise(4, seed);
        let xt = x0.add(&noise(4, seed ^ 7).scale(0.3)).unwrap();
        let a = snr_db(&xt, &x0).unwrap();
        let b = snr_db(&xt.scale(k), &x0.scale(k)).unwrap();
        prop_assert!((a - b).abs() < 1e-9);
    }

    #[test]
    fn breakpoint_equals_scan(values in prop::collection::vec(-20.0f64..60.0, 1..300), pick in 0.0f64..1.0) {
        let (lo, hi) = values.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &v| (l.min(v), h.max(v)));
        let target = lo + pick * (hi - lo);
        let c = curve(values.clone());
        prop_assert_eq!(match_breakpoint(target, &c, 3.0).unwrap(), scan_oracle(target, &values));
    }
}
