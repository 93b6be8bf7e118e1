//! Acceptance suite. Each test prints one `PASS` / `FAIL` line for its
//! criterion; run with `--nocapture` to see them. The published-numbers suite at
//! the end needs external weights and datasets and prints `SKIP` otherwise.

mod common;

use std::process::Command;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use refcolor::bench::{self, ToyRecipe};
use refcolor::io;
use refcolor_core::colorspace::{lab_to_srgb, srgb_to_lab, LabScale};
use refcolor_core::loss::{loss, loss_ab, loss_and_grad, loss_l, loss_lab, loss_rgb};
use refcolor_core::metrics::{psnr, sequence_metrics, ssim};
use refcolor_core::model::{checkpoint, Arch, Colorizer, ModelState, MonoSequence, Reference};
use refcolor_core::tuner::{colorize_tuned, tune};
use refcolor_core::{Error as CoreError, GrayImage, LossMode, NoClock, RgbImage, TuningConfig};

fn verdict(n: u32, title: &str, ok: bool, detail: &str) {
    println!("{} criterion {n} ({title}): {detail}", if ok { "PASS" } else { "FAIL" });
    assert!(ok, "criterion {n} ({title}) failed: {detail}");
}

fn random_image(rng: &mut ChaCha8Rng, w: usize, h: usize) -> RgbImage {
    let px = (0..w * h).map(|_| [rng.gen(), rng.gen(), rng.gen()]).collect();
    RgbImage::new(w, h, px).unwrap()
}

#[test]
fn criterion_01_color_math() {
    let _g = common::serial();
    let n = 17;
    let mut round_trip: f64 = 0.0;
    for r in 0..n {
        for g in 0..n {
            for b in 0..n {
                let c = [r, g, b].map(|v| v as f64 / (n - 1) as f64);
                let back = lab_to_srgb(srgb_to_lab(c));
                for k in 0..3 {
                    round_trip = round_trip.max((back[k] - c[k]).abs());
                }
            }
        }
    }
    let neutral = (0..=255)
        .map(|i| {
            let lab = srgb_to_lab([f64::from(i) / 255.0; 3]);
            lab[1].abs().max(lab[2].abs())
        })
        .fold(0.0, f64::max);
    let white = srgb_to_lab([1.0; 3]);
    let white_err = (white[0] - 100.0).abs().max(white[1].abs()).max(white[2].abs());
    let ok = round_trip <= 1e-4 && neutral <= 1e-6 && white_err <= 1e-6;
    verdict(
        1,
        "color math",
        ok,
        &format!("round trip {round_trip:.2e} (<= 1e-4), neutral ab {neutral:.2e} (<= 1e-6), white {white_err:.2e} (<= 1e-6)"),
    );
}

/// Window-by-window SSIM, written independently of the library's separable filter.
fn ssim_reference(a: &RgbImage, b: &RgbImage) -> f64 {
    let (h, w) = a.dims();
    let g: Vec<f64> = (0..11).map(|i| (-((i as f64 - 5.0).powi(2)) / 4.5).exp()).collect();
    let gs: f64 = g.iter().sum();
    let (c1, c2) = (1e-4, 9e-4);
    let mut per_channel = Vec::new();
    for c in 0..3 {
        let mut acc = 0.0;
        for y0 in 0..=h - 11 {
            for x0 in 0..=w - 11 {
                let mut s = [0.0; 5];
                for u in 0..11 {
                    for v in 0..11 {
                        let wt = g[u] * g[v] / (gs * gs);
                        let (p, q) = (a.get(y0 + u, x0 + v)[c], b.get(y0 + u, x0 + v)[c]);
                        s[0] += wt * p;
                        s[1] += wt * q;
                        s[2] += wt * p * p;
                        s[3] += wt * q * q;
                        s[4] += wt * p * q;
                    }
                }
                let (va, vb, cv) = (s[2] - s[0] * s[0], s[3] - s[1] * s[1], s[4] - s[0] * s[1]);
                acc += (2.0 * s[0] * s[1] + c1) * (2.0 * cv + c2)
                    / ((s[0] * s[0] + s[1] * s[1] + c1) * (va + vb + c2));
            }
        }
        per_channel.push(acc / ((h - 10) * (w - 10)) as f64);
    }
    per_channel.iter().sum::<f64>() / 3.0
}

fn psnr_reference(a: &RgbImage, b: &RgbImage) -> f64 {
    let mut sum = 0.0;
    for (p, q) in a.pixels().iter().zip(b.pixels()) {
        for c in 0..3 {
            sum += (p[c] - q[c]) * (p[c] - q[c]);
        }
    }
    -10.0 * (sum / (3 * a.len()) as f64).log10()
}

#[test]
fn criterion_02_metrics_oracle() {
    let _g = common::serial();
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let (mut dp, mut ds) = (0.0f64, 0.0f64);
    for _ in 0..20 {
        let (w, h) = (rng.gen_range(11..30), rng.gen_range(11..30));
        let a = random_image(&mut rng, w, h);
        let amp: f64 = rng.gen_range(0.02..0.6);
        let b = a.map(|p| p.map(|v| v));
        let b = RgbImage::new(
            w,
            h,
            b.pixels()
                .iter()
                .map(|p| p.map(|v| (v + amp * rng.gen_range(-1.0..1.0)).clamp(0.0, 1.0)))
                .collect(),
        )
        .unwrap();
        dp = dp.max((psnr(&a, &b).unwrap() - psnr_reference(&a, &b)).abs());
        ds = ds.max((ssim(&a, &b).unwrap() - ssim_reference(&a, &b)).abs());
    }
    let a = random_image(&mut rng, 16, 16);
    let self_psnr = psnr(&a, &a).unwrap();
    let self_ssim = ssim(&a, &a).unwrap();
    let ok = dp <= 1e-6 && ds <= 1e-4 && self_psnr == f64::INFINITY && (self_ssim - 1.0).abs() < 1e-12;
    verdict(
        2,
        "metrics oracle",
        ok,
        &format!("max |dPSNR| {dp:.2e} (<= 1e-6), max |dSSIM| {ds:.2e} (<= 1e-4), psnr(a,a) = {self_psnr}, ssim(a,a) = {self_ssim}"),
    );
}

#[test]
fn criterion_03_loss_identities() {
    let _g = common::serial();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut exact = true;
    let mut zero = true;
    for _ in 0..20 {
        let (w, h) = (rng.gen_range(1..20), rng.gen_range(1..20));
        let y = random_image(&mut rng, w, h);
        let z = Reference::new(random_image(&mut rng, w, h));
        for scale in [LabScale::NORMALIZED, LabScale::RAW] {
            let total = loss_lab(&y, &z, scale).unwrap();
            let parts = loss_l(&y, &z, scale).unwrap() + loss_ab(&y, &z, scale).unwrap();
            exact &= total.to_bits() == parts.to_bits();
        }
        let same = Reference::new(y.clone());
        for mode in LossMode::ALL {
            zero &= loss(mode, &y, &same, LabScale::NORMALIZED).unwrap() == 0.0;
        }
    }
    let z = random_image(&mut rng, 13, 9).map(|p| p.map(|v| v * 0.9));
    let shifted = z.map(|p| p.map(|v| v + 0.1));
    let offset = loss_rgb(&shifted, &Reference::new(z)).unwrap();
    let ok = exact && zero && (offset - 0.01).abs() <= 1e-10;
    verdict(
        3,
        "loss identities",
        ok,
        &format!("lab == l + ab bitwise: {exact}; zero at y1 == z: {zero}; rgb offset loss {offset:.12} (0.01 +- 1e-10)"),
    );
}

#[test]
fn criterion_04_gradient_check() {
    let _g = common::serial();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let (w, h) = (8, 8);
    let z = Reference::new(random_image(&mut rng, w, h));
    let frames = (0..3)
        .map(|_| GrayImage::new(w, h, (0..w * h).map(|_| rng.gen()).collect()).unwrap())
        .collect();
    let x = MonoSequence::new(frames).unwrap();
    let model = ModelState::init(Arch::TOY, 4).unwrap();
    let scale = LabScale::NORMALIZED;
    let mut objective = |_t: usize, y: &RgbImage| loss_and_grad(LossMode::LabCombined, y, &z, scale);
    let eval = model.gradient(&x, &z, &[0], &mut objective).unwrap();
    let f = |m: &ModelState| loss(LossMode::LabCombined, &m.forward_first(&x, &z).unwrap(), &z, scale).unwrap();
    let step = 1e-4;
    let mut worst: f64 = 0.0;
    let mut failures = 0;
    for _ in 0..50 {
        let i = rng.gen_range(0..model.param_count());
        let (mut up, mut dn) = (model.clone(), model.clone());
        up.parameters_mut()[i] += step;
        dn.parameters_mut()[i] -= step;
        let numeric = (f(&up) - f(&dn)) / (2.0 * step);
        let analytic = eval.gradient[i];
        let diff = (analytic - numeric).abs();
        let scale = analytic.abs().max(numeric.abs());
        if diff > 1e-3 * scale && diff > 1e-9 {
            failures += 1;
        }
        if scale > 1e-9 {
            worst = worst.max(diff / scale);
        }
    }
    verdict(
        4,
        "gradient check",
        failures == 0 && model.param_count() <= 10_000,
        &format!(
            "{} params on 8x8, 50 points, worst relative error {worst:.2e} (<= 1e-3), {failures} failures",
            model.param_count()
        ),
    );
}

#[test]
fn criterion_05_tuning_descent() {
    let _g = common::serial();
    let recipe = ToyRecipe::default();
    let state = &common::pretrained().state;
    let clips = recipe.eval_clips().unwrap();
    assert_eq!(clips.len(), 10);
    let cfg = TuningConfig::default();
    let mut descended = 0;
    let mut gains = Vec::new();
    for (i, rec) in clips.iter().enumerate() {
        let (tuned, report) = colorize_tuned(state, &rec.mono, &rec.reference, &cfg, &NoClock).unwrap();
        if report.loss_trace[20] < report.loss_trace[0] {
            descended += 1;
        }
        if i < 3 {
            let base = state.forward(&rec.mono, &rec.reference).unwrap();
            let b = sequence_metrics(base.frames(), rec.truth.frames()).unwrap();
            let t = sequence_metrics(tuned.frames(), rec.truth.frames()).unwrap();
            gains.push((b.excluding_reference.unwrap().psnr, t.excluding_reference.unwrap().psnr));
        }
    }
    let base_mean = gains.iter().map(|g| g.0).sum::<f64>() / 3.0;
    let tuned_mean = gains.iter().map(|g| g.1).sum::<f64>() / 3.0;
    verdict(
        5,
        "tuning descent",
        descended == 10 && tuned_mean > base_mean,
        &format!(
            "loss decreased on {descended}/10 held-out clips; frames 2..T PSNR over 3 clips {base_mean:.3} -> {tuned_mean:.3} dB ({:+.3} dB)",
            tuned_mean - base_mean
        ),
    );
}

#[test]
fn criterion_06_saturation() {
    let _g = common::serial();
    let recipe = ToyRecipe::default();
    let state = &common::pretrained().state;
    let mut deltas = Vec::new();
    for rec in recipe.eval_clips().unwrap().iter().take(3) {
        let r20 = tune(state, &rec.mono, &rec.reference, &TuningConfig::default(), &NoClock).unwrap();
        let r50 = tune(state, &rec.mono, &rec.reference, &TuningConfig::default().with_iterations(50), &NoClock)
            .unwrap();
        deltas.push(r50.psnr_trace[50] - r20.psnr_trace[20]);
    }
    let mean = deltas.iter().map(|d| d.abs()).sum::<f64>() / deltas.len() as f64;
    let per: Vec<String> = deltas.iter().map(|d| format!("{d:+.3}")).collect();
    verdict(
        6,
        "saturation",
        mean <= 0.5,
        &format!("first-frame PSNR change 20 -> 50 iterations: mean |d| {mean:.3} dB (<= 0.5), per clip [{}]", per.join(", ")),
    );
}

#[test]
fn criterion_07_noop_and_immutability() {
    let _g = common::serial();
    let recipe = ToyRecipe::default();
    let state = &common::pretrained().state;
    let rec = recipe.clip(recipe.eval_seeds[0]).unwrap();
    let before: Vec<u64> = state.parameters().iter().map(|v| v.to_bits()).collect();
    let base = state.forward(&rec.mono, &rec.reference).unwrap();
    let zero = TuningConfig::default().with_iterations(0);
    let (out, report) = colorize_tuned(state, &rec.mono, &rec.reference, &zero, &NoClock).unwrap();
    let bits = |s: &refcolor_core::ColorSequence| -> Vec<u64> {
        s.frames().iter().flat_map(|f| f.pixels().iter().flatten().map(|v| v.to_bits())).collect()
    };
    let noop = bits(&out) == bits(&base) && report.loss_trace.len() == 1 && report.final_state == *state;
    let _ = tune(state, &rec.mono, &rec.reference, &TuningConfig::default(), &NoClock).unwrap();
    let after: Vec<u64> = state.parameters().iter().map(|v| v.to_bits()).collect();
    verdict(
        7,
        "no-op and immutability",
        noop && before == after,
        &format!("iterations=0 output bitwise equal to baseline: {noop}; input state bitwise unchanged after 20 iterations: {}", before == after),
    );
}

#[test]
fn criterion_08_determinism() {
    let _g = common::serial();
    let ckpt = &common::pretrained().checkpoint;
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bench.cfg");
    std::fs::write(
        &cfg,
        format!("dataset = toy\ncheckpoint = {}\nseed = 11\niterations = 20\n", ckpt.display()),
    )
    .unwrap();
    let run = |name: &str| {
        let out = dir.path().join(name);
        let status = Command::new(common::bin())
            .args(["bench", "--config"])
            .arg(&cfg)
            .arg("--out")
            .arg(&out)
            .output()
            .unwrap();
        assert!(status.status.success(), "{}", String::from_utf8_lossy(&status.stderr));
        std::fs::read(out.join("report.csv")).unwrap()
    };
    let (a, b) = (run("first"), run("second"));
    verdict(
        8,
        "determinism",
        a == b && !a.is_empty(),
        &format!("two bench runs with seed 11: report.csv {} bytes, identical: {}", a.len(), a == b),
    );
}

#[test]
fn criterion_09_timing() {
    let _g = common::serial();
    let state = &common::pretrained().state;
    let recipe = ToyRecipe::default();
    let groups: Vec<_> = [16usize, 24, 32]
        .iter()
        .map(|&size| {
            let mut r = recipe.clone();
            r.clip.height = size;
            r.clip.width = size;
            let clips = r.eval_seeds.iter().take(2).map(|&s| r.clip(s).unwrap()).collect::<Vec<_>>();
            (format!("{size}x{size}"), clips)
        })
        .collect();
    let rows = bench::timing(state, &groups, &[5, 20], &TuningConfig::default()).unwrap();
    let secs = |g: &str, n: usize| rows.iter().find(|r| r.group == g && r.iterations == n).unwrap().seconds;
    let mut ok = true;
    let mut parts = Vec::new();
    for (g, _) in &groups {
        let ratio = secs(g, 20) / secs(g, 5);
        ok &= (2.5..=4.5).contains(&ratio);
        parts.push(format!("{g} ratio {ratio:.2}"));
    }
    for n in [5, 20] {
        let times: Vec<f64> = groups.iter().map(|(g, _)| secs(g, n)).collect();
        let increasing = times.windows(2).all(|w| w[1] > w[0]);
        ok &= increasing;
        parts.push(format!(
            "{n} it: {} s{}",
            times.iter().map(|t| format!("{t:.3}")).collect::<Vec<_>>().join(" < "),
            if increasing { "" } else { " (not increasing)" }
        ));
    }
    verdict(9, "timing sanity", ok, &parts.join("; "));
}

#[test]
fn criterion_10_checkpoint() {
    let _g = common::serial();
    let dir = tempfile::tempdir().unwrap();
    let state = ModelState::init(Arch::TOY, 10).unwrap();
    let path = dir.path().join("m.ckpt");
    io::save_checkpoint(&path, &state).unwrap();
    let back = io::load_checkpoint(&path).unwrap();
    let lossless = back.arch() == state.arch()
        && back.init_seed() == state.init_seed()
        && back.theta().iter().map(|v| v.to_bits()).eq(state.theta().iter().map(|v| v.to_bits()));

    let bytes = checkpoint::encode(&state);
    let is_parse = |b: &[u8]| matches!(checkpoint::decode(b), Err(CoreError::Parse(_)));
    let truncated = is_parse(&bytes[..bytes.len() / 2]) && is_parse(&bytes[..0]);
    let mut flipped = bytes.clone();
    flipped[200] ^= 0x10;
    let corrupt = is_parse(&flipped);
    let mut magic = bytes.clone();
    magic[0] = b'X';
    let bad_magic = is_parse(&magic);
    let mut version = bytes.clone();
    version[8..12].copy_from_slice(&2u32.to_le_bytes());
    let mismatched = matches!(
        checkpoint::decode(&version),
        Err(CoreError::IncompatibleCheckpoint { expected: 1, found: 2 })
    );
    std::fs::write(&path, &flipped).unwrap();
    let file_corrupt = matches!(
        io::load_checkpoint(&path),
        Err(refcolor::Error::Core(CoreError::Parse(_)))
    );
    let ok = lossless && truncated && corrupt && bad_magic && mismatched && file_corrupt;
    verdict(
        10,
        "checkpoint round trip",
        ok,
        &format!("lossless {lossless}; truncated -> parse error {truncated}; bit flip -> parse error {corrupt}; bad magic {bad_magic}; version 2 -> incompatible {mismatched}; corrupt file {file_corrupt}"),
    );
}

/// Optional: scores with external pretrained weights on the real benchmark
/// folders. Needs `REFCOLOR_EXTERNAL_CHECKPOINT` plus `REFCOLOR_VID4` and
/// `REFCOLOR_SET8` dataset roots.
#[test]
fn published_numbers() {
    let _g = common::serial();
    let vars = ["REFCOLOR_EXTERNAL_CHECKPOINT", "REFCOLOR_VID4", "REFCOLOR_SET8"];
    let values: Vec<Option<String>> = vars.iter().map(|v| std::env::var(v).ok()).collect();
    if values.iter().any(Option::is_none) {
        println!("SKIP published-numbers suite: set {} to run it", vars.join(", "));
        return;
    }
    let state = io::load_checkpoint(values[0].as_deref().unwrap().as_ref()).unwrap();
    let cfg = TuningConfig::default();
    let gray = refcolor_core::colorspace::GrayMode::Rec601;
    let average = |root: &str| {
        let recs = io::load_dataset(root.as_ref(), gray).unwrap();
        let evals = bench::evaluate_all(&state, &recs, &cfg, 1, None).unwrap();
        let n = evals.len() as f64;
        (
            evals.iter().map(|e| e.tuned.psnr).sum::<f64>() / n,
            evals.iter().map(|e| e.tuned.ssim).sum::<f64>() / n,
        )
    };
    let mut ok = true;
    for (name, root, target) in [
        ("Vid4", values[1].as_deref().unwrap(), (27.86, 0.9462)),
        ("Set8", values[2].as_deref().unwrap(), (25.91, 0.9028)),
    ] {
        let (p, s) = average(root);
        let pass = (p - target.0).abs() <= 0.3 && (s - target.1).abs() <= 0.005;
        ok &= pass;
        println!(
            "{} published {name}: tuned {p:.2} dB / {s:.4} (target {} / {} +- 0.3 / 0.005)",
            if pass { "PASS" } else { "FAIL" },
            target.0,
            target.1
        );
    }
    let recs = io::load_dataset(values[1].as_deref().unwrap().as_ref(), gray).unwrap();
    let grid = bench::ablation(&state, &[("Vid4".into(), recs)], &cfg, 1).unwrap();
    let db = |m: LossMode| grid.iter().find(|r| r.loss_mode == m).unwrap().psnr;
    let order = db(LossMode::LabCombined) > db(LossMode::Rgb)
        && db(LossMode::Rgb) > db(LossMode::LabLOnly)
        && db(LossMode::LabLOnly) > db(LossMode::LabAbOnly);
    println!(
        "{} published ablation order on Vid4: full {:.2} > rgb {:.2} > w/o L_ab {:.2} > w/o L_l {:.2}",
        if order { "PASS" } else { "FAIL" },
        db(LossMode::LabCombined),
        db(LossMode::Rgb),
        db(LossMode::LabLOnly),
        db(LossMode::LabAbOnly)
    );
    assert!(ok && order);
}
