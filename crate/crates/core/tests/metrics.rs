use proptest::prelude::*;
use truncdiff::metrics::{mse, psnr, ssim, SsimParams};
use truncdiff::{Image, SeededRng, ValueRange};

fn random(w: usize, c: usize, seed: u64) -> Image {
    let mut rng = SeededRng::new(seed);
    Image::from_fn(w, w, c, ValueRange::Display, |_, _, _| rng.uniform())
}

fn naive_psnr(a: &Image, b: &Image) -> f64 {
    let mut s = 0.0;
    for c in 0..a.channels() {
        for y in 0..a.height() {
            for x in 0..a.width() {
                let d = a.get(c, y, x) - b.get(c, y, x);
                s += d * d;
            }
        }
    }
    10.0 * (1.0 / (s / a.len() as f64)).log10()
}

/// Windowed SSIM with an explicit 11×11 Gaussian weight table.
fn naive_ssim(a: &Image, b: &Image) -> f64 {
    let (win, sigma) = (11usize, 1.5f64);
    let (c1, c2) = (0.01f64.powi(2), 0.03f64.powi(2));
    let mut weights = vec![vec![0.0; win]; win];
    let mut total = 0.0;
    for (u, row) in weights.iter_mut().enumerate() {
        for (v, w) in row.iter_mut().enumerate() {
            let (du, dv) = (u as f64 - 5.0, v as f64 - 5.0);
            *w = (-(du * du + dv * dv) / (2.0 * sigma * sigma)).exp();
            total += *w;
        }
    }
    let mut acc = 0.0;
    for c in 0..a.channels() {
        let mut sum = 0.0;
        let mut count = 0;
        for y0 in 0..=a.height() - win {
            for x0 in 0..=a.width() - win {
                let (mut ma, mut mb, mut saa, mut sbb, mut sab) = (0.0, 0.0, 0.0, 0.0, 0.0);
                for u in 0..win {
                    for v in 0..win {
                        let w = weights[u][v] / total;
                        let (p, q) = (a.get(c, y0 + u, x0 + v), b.get(c, y0 + u, x0 + v));
                        ma += w * p;
                        mb += w * q;
                        saa += w * p * p;
                        sbb += w * q * q;
                        sab += w * p * q;
                    }
                }
                let (va, vb, cov) = (saa - ma * ma, sbb - mb * mb, sab - ma * mb);
                sum += ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
                count += 1;
            }
        }
        acc += sum / count as f64;
    }
    acc / a.channels() as f64
}

#[test]
fn psnr_and_ssim_match_reference_loops() {
    for seed in 0..5 {
        let a = random(24, 3, seed);
        let b = a.zip_map(&random(24, 3, seed + 100), |p, q| 0.8 * p + 0.2 * q).unwrap();
        assert!((psnr(&a, &b, 1.0).unwrap() - naive_psnr(&a, &b)).abs() < 1e-10);
        assert!((ssim(&a, &b, &SsimParams::default()).unwrap() - naive_ssim(&a, &b)).abs() < 1e-10);
    }
}

#[test]
fn psnr_of_uniform_offset() {
    let a = random(16, 1, 1).map(|v| 0.8 * v);
    let b = a.map(|v| v + 0.1);
    assert!((mse(&a, &b).unwrap() - 0.01).abs() < 1e-12);
    assert!((psnr(&a, &b, 1.0).unwrap() - 20.0).abs() < 1e-9);
    assert_eq!(psnr(&a, &a, 1.0).unwrap(), f64::INFINITY);
}

#[test]
fn constant_images_reduce_to_luminance_term() {
    let a = Image::filled(16, 16, 1, 0.3, ValueRange::Display);
    let b = Image::filled(16, 16, 1, 0.7, ValueRange::Display);
    // (2·0.21 + C1)/(0.58 + C1) with C1 = 1e-4, evaluated at 40 digits.
    let oracle = 0.7241854852611619;
    assert!((ssim(&a, &b, &SsimParams::default()).unwrap() - oracle).abs() < 1e-12);
}

#[test]
fn structure_matters_more_than_noise_power() {
    let a = random(32, 1, 3).map(|v| 0.25 + 0.5 * v);
    let mean = a.mean();
    // Perturbation anti-correlated with the image content.
    let d = a.map(|v| -0.6 * (v - mean));
    let power = d.sum_sq() / d.len() as f64;
    let noise = SeededRng::new(4).normal_like(&a).scale(power.sqrt());
    let p = SsimParams::default();
    let structured = ssim(&a, &a.add(&d).unwrap(), &p).unwrap();
    let unstructured = ssim(&a, &a.add(&noise).unwrap(), &p).unwrap();
    assert!(structured < unstructured, "{structured} vs {unstructured}");
}

#[test]
fn psnr_falls_along_noise_ladder() {
    let a = random(32, 3, 7);
    let eps = SeededRng::new(8).normal_like(&a);
    let mut last = f64::INFINITY;
    for sigma in [0.001, 0.01, 0.03, 0.1, 0.3] {
        let v = psnr(&a, &a.add(&eps.scale(sigma)).unwrap(), 1.0).unwrap();
        assert!(v < last);
        last = v;
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn metrics_are_symmetric(s1 in any::<u64>(), s2 in any::<u64>()) {
        let (a, b) = (random(16, 3, s1), random(16, 3, s2));
        let p = SsimParams::default();
        prop_assert_eq!(psnr(&a, &b, 1.0).unwrap(), psnr(&b, &a, 1.0).unwrap());
        prop_assert!((ssim(&a, &b, &p).unwrap() - ssim(&b, &a, &p).unwrap()).abs() <= 1e-12);
    }

    #[test]
    fn ssim_of_identical_images_is_one(seed in any::<u64>(), scale in -50.0f64..50.0) {
        let a = random(12, 1, seed).scale(scale);
        prop_assert_eq!(ssim(&a, &a, &SsimParams::default()).unwrap(), 1.0);
    }
}
