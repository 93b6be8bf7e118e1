//! Analytic parameter gradients against central finite differences.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use refcolor_core::colorspace::LabScale;
use refcolor_core::loss::{loss, loss_and_grad};
use refcolor_core::model::{Arch, Colorizer, ModelState, MonoSequence, Reference};
use refcolor_core::{GrayImage, LossMode, RgbImage};

const STEP: f64 = 1e-4;
const REL_TOL: f64 = 1e-3;
const POINTS: usize = 50;

fn random_rgb(rng: &mut ChaCha8Rng, w: usize, h: usize) -> RgbImage {
    let px = (0..w * h)
        .map(|_| [rng.gen_range(0.05..0.95), rng.gen_range(0.05..0.95), rng.gen_range(0.05..0.95)])
        .collect();
    RgbImage::new(w, h, px).unwrap()
}

fn setup(seed: u64, frames: usize) -> (ModelState, MonoSequence, Reference) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (w, h) = (8, 8);
    let z = Reference::new(random_rgb(&mut rng, w, h));
    let mono = (0..frames)
        .map(|_| {
            let v = (0..w * h).map(|_| rng.gen_range(0.05..0.95)).collect();
            GrayImage::new(w, h, v).unwrap()
        })
        .collect();
    let model = ModelState::init(Arch::TOY, seed).unwrap();
    assert!(model.param_count() <= 10_000);
    (model, MonoSequence::new(mono).unwrap(), z)
}

fn close(analytic: f64, numeric: f64) -> bool {
    let diff = (analytic - numeric).abs();
    diff <= REL_TOL * analytic.abs().max(numeric.abs()) || diff < 1e-9
}

fn check_first_frame(mode: LossMode, seed: u64) {
    let (model, x, z) = setup(seed, 3);
    let scale = LabScale::NORMALIZED;
    let mut objective = |_t: usize, y: &RgbImage| loss_and_grad(mode, y, &z, scale);
    let eval = model.gradient(&x, &z, &[0], &mut objective).unwrap();
    let f = |m: &ModelState| loss(mode, &m.forward_first(&x, &z).unwrap(), &z, scale).unwrap();
    assert!((eval.loss - f(&model)).abs() < 1e-12);

    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabc);
    let mut failures = Vec::new();
    for _ in 0..POINTS {
        let i = rng.gen_range(0..model.param_count());
        let mut plus = model.clone();
        plus.parameters_mut()[i] += STEP;
        let mut minus = model.clone();
        minus.parameters_mut()[i] -= STEP;
        let numeric = (f(&plus) - f(&minus)) / (2.0 * STEP);
        if !close(eval.gradient[i], numeric) {
            failures.push((i, eval.gradient[i], numeric));
        }
    }
    assert!(failures.is_empty(), "{mode:?}: {failures:?}");
}

#[test]
fn lab_gradient_matches_finite_differences() {
    check_first_frame(LossMode::LabCombined, 1);
    check_first_frame(LossMode::LabCombined, 2);
}

#[test]
fn every_loss_mode_gradient_matches() {
    for mode in LossMode::ALL {
        check_first_frame(mode, 3);
    }
}

#[test]
fn all_frame_gradient_matches() {
    let (model, x, z) = setup(4, 3);
    let scale = LabScale::NORMALIZED;
    let targets: Vec<Reference> = (0..3)
        .map(|t| {
            let mut rng = ChaCha8Rng::seed_from_u64(40 + t);
            Reference::new(random_rgb(&mut rng, 8, 8))
        })
        .collect();
    let mut objective =
        |t: usize, y: &RgbImage| loss_and_grad(LossMode::LabCombined, y, &targets[t], scale);
    let eval = model.gradient(&x, &z, &[0, 1, 2], &mut objective).unwrap();
    let f = |m: &ModelState| {
        let out = m.forward(&x, &z).unwrap();
        out.frames()
            .iter()
            .zip(&targets)
            .map(|(y, t)| loss(LossMode::LabCombined, y, t, scale).unwrap())
            .sum::<f64>()
    };
    assert!((eval.loss - f(&model)).abs() < 1e-12);
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for _ in 0..POINTS {
        let i = rng.gen_range(0..model.param_count());
        let mut plus = model.clone();
        plus.parameters_mut()[i] += STEP;
        let mut minus = model.clone();
        minus.parameters_mut()[i] -= STEP;
        let numeric = (f(&plus) - f(&minus)) / (2.0 * STEP);
        assert!(close(eval.gradient[i], numeric), "param {i}: {} vs {numeric}", eval.gradient[i]);
    }
}
