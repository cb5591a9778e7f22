use proptest::prelude::*;
use truncdiff::denoiser::{
    evaluate_loss, fit_patch_denoiser, reverse_step, AnalyticGaussianDenoiser, Denoiser, PatchDenoiserModel,
    PatchFitConfig, TimeBuckets, ZeroDenoiser,
};
use truncdiff::numeric::mean_var;
use truncdiff::schedule::{forward_sample, PosteriorVariance, VarianceSchedule};
use truncdiff::{Image, SeededRng, ValueRange};

fn gaussian_images(count: usize, side: usize, sigma: f64, seed: u64) -> Vec<(Image, Image)> {
    let mut rng = SeededRng::new(seed);
    (0..count)
        .map(|_| {
            let x = rng.normal_image(side, side, 1).scale(sigma).with_range(ValueRange::Model);
            (x.clone(), x)
        })
        .collect()
}

fn smooth_pairs(count: usize, seed: u64) -> Vec<(Image, Image)> {
    truncdiff::toy::toy_dataset(count, 16, 1, seed)
        .into_iter()
        .map(|x| {
            let c = truncdiff::filters::lowpass(&x, truncdiff::filters::FilterFactor::new(2).unwrap()).unwrap();
            (x, c)
        })
        .collect()
}

#[test]
fn scalar_posterior_matches_closed_form() {
    // μ = 0, σ² = 1, ᾱ = 0.5, x_t = 1: E[x0|x_t] = √0.5 and ε̂ = √0.5 (40-digit script).
    let sched = VarianceSchedule::from_betas(vec![0.5, 0.5]).unwrap();
    let mu = Image::zeros(1, 1, 1, ValueRange::Model);
    let den = AnalyticGaussianDenoiser::new(mu, 1.0, sched).unwrap();
    let x = Image::filled(1, 1, 1, 1.0, ValueRange::Model);
    let oracle = 0.7071067811865475;
    assert!((den.posterior_mean(&x, 1).unwrap().data()[0] - oracle).abs() < 1e-15);
    assert!((den.predict_eps(&x, 1, None).unwrap().data()[0] - oracle).abs() < 1e-15);
}

#[test]
fn one_reverse_step_matches_gaussian_transition() {
    let sched = VarianceSchedule::rescaled_linear(200).unwrap();
    let (mu0, s2, t, xt) = (0.2, 0.25, 120, 0.4);
    let den = AnalyticGaussianDenoiser::new(Image::filled(1, 1, 1, mu0, ValueRange::Model), s2, sched.clone()).unwrap();
    let ab = sched.alpha_bar(t);
    let alpha = 1.0 - sched.betas()[t - 1];
    let eps = (1.0 - ab).sqrt() * (xt - ab.sqrt() * mu0) / (ab * s2 + 1.0 - ab);
    let mean = (xt - (1.0 - alpha) / (1.0 - ab).sqrt() * eps) / alpha.sqrt();
    let var = 1.0 - alpha;

    let x = Image::filled(1, 1, 1, xt, ValueRange::Model);
    let mut rng = SeededRng::new(3);
    let n = 100_000;
    let draws: Vec<f64> = (0..n)
        .map(|_| reverse_step(&x, t, &den, None, &sched, PosteriorVariance::Beta, &mut rng).unwrap().data()[0])
        .collect();
    let (m, v) = mean_var(&draws);
    assert!((m - mean).abs() < 3.0 * (var / n as f64).sqrt(), "{m} vs {mean}");
    assert!((v - var).abs() < 3.0 * var * (2.0 / n as f64).sqrt(), "{v} vs {var}");
}

#[test]
fn analytic_denoiser_is_never_beaten() {
    let sched = VarianceSchedule::rescaled_linear(200).unwrap();
    let (mu, s2): (f64, f64) = (0.2, 0.25);
    let pairs: Vec<(Image, Image)> = gaussian_images(64, 8, s2.sqrt(), 4)
        .into_iter()
        .map(|(x, c)| (x.map(|v| v + mu), c))
        .collect();
    let analytic = AnalyticGaussianDenoiser::new(Image::filled(8, 8, 1, mu, ValueRange::Model), s2, sched.clone()).unwrap();
    let fit = PatchFitConfig {
        conditional: false,
        buckets: 8,
        ..PatchFitConfig::default()
    };
    let patch = fit_patch_denoiser(&pairs, &sched, &fit, &mut SeededRng::new(5)).unwrap();
    let zero = ZeroDenoiser::default();
    let buckets = TimeBuckets::uniform(200, 8).unwrap();
    let draws = 400;
    let eval = |d: &dyn Denoiser| evaluate_loss(d, &pairs, &sched, &buckets, draws, &mut SeededRng::new(6)).unwrap();
    let best = eval(&analytic);
    for other in [eval(&patch), eval(&zero)] {
        for (a, o) in best.iter().zip(&other) {
            let se = (a.stderr.powi(2) + o.stderr.powi(2)).sqrt();
            assert!(a.loss <= o.loss + 3.0 * se, "bucket {}: {} vs {}", a.bucket, a.loss, o.loss);
        }
    }
}

#[test]
fn pointwise_fit_recovers_regression_coefficient() {
    let sched = VarianceSchedule::rescaled_linear(200).unwrap();
    let s2: f64 = 0.25;
    let pairs = gaussian_images(32, 32, s2.sqrt(), 7);
    let fit = PatchFitConfig {
        radius: 0,
        buckets: 200,
        ridge_lambda: 0.0,
        samples_per_bucket: 100,
        conditional: false,
    };
    let model = fit_patch_denoiser(&pairs, &sched, &fit, &mut SeededRng::new(8)).unwrap();
    for b in &model.buckets {
        assert_eq!((b.t_min, b.t_max), (b.t_min, b.t_min));
        assert!(b.rows >= 100_000);
        let ab = sched.alpha_bar(b.t_min);
        let oracle = (1.0 - ab).sqrt() / (ab * s2 + 1.0 - ab);
        assert!((b.weights[0] - oracle).abs() / oracle < 0.05, "t={}: {} vs {oracle}", b.t_min, b.weights[0]);
    }
}

#[test]
fn fit_beats_zero_on_every_bucket_held_out() {
    let sched = VarianceSchedule::rescaled_linear(100).unwrap();
    let pairs = smooth_pairs(16, 1);
    let model = fit_patch_denoiser(&pairs, &sched, &PatchFitConfig::default(), &mut SeededRng::new(2)).unwrap();
    for b in &model.buckets {
        assert!(b.train_loss < b.zero_loss);
    }
    let held_out = smooth_pairs(8, 99);
    let buckets = model.time_buckets().unwrap();
    for l in evaluate_loss(&model, &held_out, &sched, &buckets, 16, &mut SeededRng::new(3)).unwrap() {
        assert!(l.loss < l.zero_loss, "{l:?}");
    }
}

#[test]
fn constant_data_is_learnable() {
    let sched = VarianceSchedule::rescaled_linear(50).unwrap();
    let c = Image::filled(8, 8, 1, 0.6, ValueRange::Display);
    let pairs = vec![(c.clone(), c)];
    let fit = PatchFitConfig {
        buckets: 5,
        ..PatchFitConfig::default()
    };
    let model = fit_patch_denoiser(&pairs, &sched, &fit, &mut SeededRng::new(1)).unwrap();
    for b in &model.buckets {
        assert!(b.train_loss < b.zero_loss);
        assert!((b.zero_loss - 1.0).abs() < 0.1);
    }
}

#[test]
fn ridge_limit_approaches_zero_predictor() {
    let sched = VarianceSchedule::rescaled_linear(50).unwrap();
    let pairs = smooth_pairs(8, 4);
    let mut last = 0.0;
    for lambda in [1e-3, 1e-1, 1e1, 1e3, 1e5] {
        let fit = PatchFitConfig {
            buckets: 1,
            ridge_lambda: lambda,
            ..PatchFitConfig::default()
        };
        let m = fit_patch_denoiser(&pairs, &sched, &fit, &mut SeededRng::new(9)).unwrap();
        let b = &m.buckets[0];
        assert!(b.train_loss >= last - 1e-12);
        assert!(b.train_loss <= b.zero_loss + 1e-9);
        last = b.train_loss;
        if lambda == 1e5 {
            assert!((b.zero_loss - b.train_loss) / b.zero_loss < 1e-3);
        }
    }
}

#[test]
fn more_samples_do_not_hurt_held_out_loss() {
    let sched = VarianceSchedule::rescaled_linear(100).unwrap();
    let pairs = smooth_pairs(16, 5);
    let held_out = smooth_pairs(8, 50);
    let buckets = TimeBuckets::uniform(100, 4).unwrap();
    let loss = |spb| {
        let fit = PatchFitConfig {
            buckets: 4,
            samples_per_bucket: spb,
            ..PatchFitConfig::default()
        };
        let m = fit_patch_denoiser(&pairs, &sched, &fit, &mut SeededRng::new(6)).unwrap();
        evaluate_loss(&m, &held_out, &sched, &buckets, 64, &mut SeededRng::new(7)).unwrap()
    };
    let (small, large) = (loss(8), loss(16));
    for (s, l) in small.iter().zip(&large) {
        let se = (s.stderr.powi(2) + l.stderr.powi(2)).sqrt();
        assert!(l.loss <= s.loss + 2.0 * se, "{s:?} vs {l:?}");
    }
}

/// Reflect-101 index, written out independently of the library.
fn mirror(i: isize, n: usize) -> usize {
    let n = n as isize;
    let mut i = i;
    while i < 0 || i >= n {
        i = if i < 0 { -i } else { 2 * (n - 1) - i };
    }
    i as usize
}

#[test]
fn prediction_matches_naive_matmul() {
    let sched = VarianceSchedule::rescaled_linear(60).unwrap();
    let pairs: Vec<(Image, Image)> = truncdiff::toy::toy_dataset(6, 12, 3, 3)
        .into_iter()
        .map(|x| (x.clone(), x.map(|v| 1.0 - v)))
        .collect();
    let fit = PatchFitConfig {
        radius: 1,
        buckets: 3,
        ..PatchFitConfig::default()
    };
    let model = fit_patch_denoiser(&pairs, &sched, &fit, &mut SeededRng::new(4)).unwrap();
    let x0 = pairs[0].0.to_model_range();
    let cond = pairs[0].1.to_model_range();
    let t = 37;
    let x_t = forward_sample(&x0, t, &SeededRng::new(5).normal_like(&x0), &sched).unwrap();
    let got = model.predict_eps(&x_t, t, Some(&cond)).unwrap();

    let bucket = model.buckets.iter().find(|b| b.t_min <= t && t <= b.t_max).unwrap();
    let d = model.features();
    let (w, h) = (12, 12);
    for c in 0..3 {
        for y in 0..h {
            for x in 0..w {
                let mut feats = Vec::with_capacity(d);
                for img in [&x_t, &cond] {
                    for ch in 0..3 {
                        for dy in -1..=1isize {
                            for dx in -1..=1isize {
                                feats.push(img.get(ch, mirror(y as isize + dy, h), mirror(x as isize + dx, w)));
                            }
                        }
                    }
                }
                feats.push(1.0);
                let row = &bucket.weights[c * d..(c + 1) * d];
                let want: f64 = feats.iter().zip(row).map(|(f, w)| f * w).sum();
                assert!((got.get(c, y, x) - want).abs() < 1e-10);
            }
        }
    }
}

#[test]
fn saved_models_predict_identically() {
    let sched = VarianceSchedule::rescaled_linear(40).unwrap();
    let pairs = smooth_pairs(4, 8);
    let model = fit_patch_denoiser(&pairs, &sched, &PatchFitConfig::default(), &mut SeededRng::new(1)).unwrap();
    let back = PatchDenoiserModel::from_json(&model.to_json()).unwrap();
    assert_eq!(back, model);
    let x = SeededRng::new(2).normal_image(16, 16, 1);
    let c = pairs[1].1.to_model_range();
    assert_eq!(model.predict_eps(&x, 20, Some(&c)).unwrap(), back.predict_eps(&x, 20, Some(&c)).unwrap());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn predictions_are_deterministic(seed in any::<u64>(), t in 1usize..=40) {
        let sched = VarianceSchedule::rescaled_linear(40).unwrap();
        let analytic = AnalyticGaussianDenoiser::new(Image::zeros(4, 4, 1, ValueRange::Model), 0.3, sched).unwrap();
        let x = SeededRng::new(seed).normal_image(4, 4, 1);
        prop_assert_eq!(analytic.predict_eps(&x, t, None).unwrap(), analytic.predict_eps(&x, t, None).unwrap());
    }
}
