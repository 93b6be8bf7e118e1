use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use refcolor_core::colorspace::LabScale;
use refcolor_core::loss::{loss, loss_ab, loss_and_grad, loss_l, loss_lab, loss_rgb};
use refcolor_core::model::Reference;
use refcolor_core::{LossMode, RgbImage};

fn image(seed: u64, w: usize, h: usize, lo: f64, hi: f64) -> RgbImage {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let px = (0..w * h)
        .map(|_| [rng.gen_range(lo..hi), rng.gen_range(lo..hi), rng.gen_range(lo..hi)])
        .collect();
    RgbImage::new(w, h, px).unwrap()
}

#[test]
fn constant_rgb_offset() {
    let z = image(1, 9, 7, 0.0, 0.9);
    let y = z.map(|p| p.map(|v| v + 0.1));
    let l = loss_rgb(&y, &Reference::new(z)).unwrap();
    assert!((l - 0.01).abs() <= 1e-10, "{l}");
}

#[test]
fn raw_and_normalized_scales_differ_by_constants() {
    let y = image(2, 6, 6, 0.0, 1.0);
    let z = Reference::new(image(3, 6, 6, 0.0, 1.0));
    let raw_l = loss_l(&y, &z, LabScale::RAW).unwrap();
    let norm_l = loss_l(&y, &z, LabScale::NORMALIZED).unwrap();
    assert!((raw_l / 1e4 - norm_l).abs() < 1e-12 * raw_l.max(1.0));
    let raw_ab = loss_ab(&y, &z, LabScale::RAW).unwrap();
    let norm_ab = loss_ab(&y, &z, LabScale::NORMALIZED).unwrap();
    assert!((raw_ab / (128.0 * 128.0) - norm_ab).abs() < 1e-12 * raw_ab.max(1.0));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn combined_is_exact_sum(seed in any::<u64>(), w in 1usize..12, h in 1usize..12) {
        let y = image(seed, w, h, 0.0, 1.0);
        let z = Reference::new(image(seed.wrapping_add(1), w, h, 0.0, 1.0));
        for scale in [LabScale::NORMALIZED, LabScale::RAW] {
            let total = loss_lab(&y, &z, scale).unwrap();
            let parts = loss_l(&y, &z, scale).unwrap() + loss_ab(&y, &z, scale).unwrap();
            prop_assert_eq!(total.to_bits(), parts.to_bits());
        }
    }

    #[test]
    fn zero_at_target(seed in any::<u64>(), w in 1usize..12, h in 1usize..12) {
        let z = image(seed, w, h, 0.0, 1.0);
        let r = Reference::new(z.clone());
        for mode in LossMode::ALL {
            let (value, grad) = loss_and_grad(mode, &z, &r, LabScale::NORMALIZED).unwrap();
            prop_assert_eq!(value, 0.0);
            prop_assert!(grad.iter().flatten().all(|g| *g == 0.0));
        }
    }

    #[test]
    fn value_paths_agree(seed in any::<u64>()) {
        let y = image(seed, 5, 4, 0.0, 1.0);
        let z = Reference::new(image(!seed, 5, 4, 0.0, 1.0));
        for mode in LossMode::ALL {
            let a = loss(mode, &y, &z, LabScale::NORMALIZED).unwrap();
            let (b, _) = loss_and_grad(mode, &y, &z, LabScale::NORMALIZED).unwrap();
            prop_assert_eq!(a.to_bits(), b.to_bits());
            prop_assert!(a >= 0.0);
        }
    }
}
