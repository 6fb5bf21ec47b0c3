use pnp_sgs::{estimate_sigma, estimate_sigma_with, Image, Shape, Wavelet};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn texture(shape: Shape) -> Image {
    Image::from_fn(shape, |c, i, j| {
        let (x, y) = (i as f64, j as f64);
        0.5 + 0.2 * (x / 5.0 + c as f64).sin() * (y / 7.0).cos() + 0.1 * ((x + y) / 11.0).sin()
    })
}

fn noisy(clean: &Image, sigma: f64, seed: u64) -> Image {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Image::standard_normal(clean.shape(), &mut rng);
    clean.zip_map(&noise, |v, e| v + sigma * e).unwrap()
}

fn mean_estimate(clean: &Image, sigma: f64, wavelet: Wavelet) -> f64 {
    (0..100u64)
        .map(|seed| estimate_sigma_with(&noisy(clean, sigma, seed), wavelet).unwrap().sigma)
        .sum::<f64>()
        / 100.0
}

#[test]
fn recovers_sigma_on_constants_and_texture() {
    let shape = Shape::new(1, 64, 64);
    for clean in [Image::filled(shape, 0.5), texture(shape)] {
        for sigma in [0.05, 0.1, 0.2] {
            for wavelet in [Wavelet::Daubechies8, Wavelet::Daubechies4, Wavelet::Haar] {
                let est = mean_estimate(&clean, sigma, wavelet);
                assert!((est - sigma).abs() / sigma <= 0.15, "{wavelet:?} sigma={sigma}: {est}");
            }
        }
    }
}

#[test]
fn averages_over_channels() {
    let shape = Shape::new(3, 64, 64);
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let sigmas = [0.02, 0.1, 0.3];
    let mut x = Image::filled(shape, 0.5);
    for (c, s) in sigmas.iter().enumerate() {
        let e = Image::standard_normal(Shape::new(1, 64, 64), &mut rng);
        for (v, n) in x.plane_mut(c).iter_mut().zip(e.as_slice()) {
            *v += s * n;
        }
    }
    let est = estimate_sigma(&x).unwrap();
    assert_eq!(est.per_channel.len(), 3);
    for (got, want) in est.per_channel.iter().zip(sigmas) {
        assert!((got - want).abs() / want < 0.15);
    }
    let mean = est.per_channel.iter().sum::<f64>() / 3.0;
    assert!((est.sigma - mean).abs() < 1e-15);
}

#[test]
fn odd_sides_of_a_constant_give_near_zero() {
    for (h, w) in [(9, 9), (17, 32), (31, 5)] {
        let x = Image::filled(Shape::new(2, h, w), 0.25);
        assert!(estimate_sigma(&x).unwrap().sigma < 1e-15);
    }
}

#[test]
fn odd_sides_still_recover_noise() {
    let clean = Image::filled(Shape::new(1, 63, 65), 0.5);
    let est = estimate_sigma(&noisy(&clean, 0.1, 3)).unwrap().sigma;
    assert!((est - 0.1).abs() / 0.1 < 0.15);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn scale_equivariant(seed in any::<u64>(), scale in 0.01f64..100.0, offset in -5.0f64..5.0) {
        let x = noisy(&texture(Shape::new(1, 32, 32)), 0.1, seed);
        let base = estimate_sigma(&x).unwrap().sigma;
        let moved = estimate_sigma(&x.map(|v| scale * v + offset)).unwrap().sigma;
        prop_assert!((moved - scale * base).abs() <= 1e-9 * scale * base.max(1.0));
    }

    #[test]
    fn nonnegative_and_finite(seed in any::<u64>(), h in 2usize..20, w in 2usize..20) {
        let x = noisy(&Image::zeros(Shape::new(1, h, w)), 1.0, seed);
        let s = estimate_sigma(&x).unwrap().sigma;
        prop_assert!(s >= 0.0 && s.is_finite());
    }
}
