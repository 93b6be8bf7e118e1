//! Experiment harness: toy pretraining, baseline-versus-tuned evaluation,
//! iteration sweeps, loss ablations and tuning-time tables.

use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use refcolor_core::metrics::{sequence_metrics, SequenceMetrics};
use refcolor_core::model::{Arch, ColorSequence, Colorizer, ModelState, SequenceRecord};
use refcolor_core::optim::AdamConfig;
use refcolor_core::toy::{make_toy_clip, ToySpec};
use refcolor_core::train::{pretrain, PretrainConfig, PretrainOutcome};
use refcolor_core::tuner::{tune_observed, Clock};
use refcolor_core::{LossMode, TuningConfig, TuningReport};

use crate::error::{Error, Result};
use crate::io;

/// Bumped whenever a default below changes, since regression anchors are
/// tied to these exact values.
pub const RECIPE_VERSION: u32 = 1;

/// The fixed toy pretraining setup.
#[derive(Clone, Debug, PartialEq)]
pub struct ToyRecipe {
    pub arch: Arch,
    /// Clip geometry; the seed field is replaced per clip.
    pub clip: ToySpec,
    pub train_seeds: Vec<u64>,
    pub eval_seeds: Vec<u64>,
    pub epochs: usize,
    pub pretrain_lr: f64,
    pub init_seed: u64,
}

impl Default for ToyRecipe {
    fn default() -> Self {
        Self {
            arch: Arch::TOY,
            clip: ToySpec {
                height: 16,
                width: 16,
                frames: 6,
                ..ToySpec::default()
            },
            train_seeds: vec![1, 2, 3, 4],
            eval_seeds: (100..110).collect(),
            epochs: 600,
            pretrain_lr: 3e-3,
            init_seed: 7,
        }
    }
}

impl ToyRecipe {
    pub fn clip(&self, seed: u64) -> Result<SequenceRecord> {
        Ok(make_toy_clip(&ToySpec {
            seed,
            ..self.clip.clone()
        })?)
    }

    pub fn train_clips(&self) -> Result<Vec<SequenceRecord>> {
        self.train_seeds.iter().map(|&s| self.clip(s)).collect()
    }

    pub fn eval_clips(&self) -> Result<Vec<SequenceRecord>> {
        self.eval_seeds.iter().map(|&s| self.clip(s)).collect()
    }

    /// Pretrains on the training clips; held-out seeds may not overlap.
    pub fn pretrain(&self) -> Result<PretrainOutcome<ModelState>> {
        if let Some(s) = self.train_seeds.iter().find(|s| self.eval_seeds.contains(s)) {
            return Err(Error::Precondition(format!(
                "toy seed {s} is used for both training and evaluation"
            )));
        }
        pretrain_toy(
            &self.arch,
            &self.train_clips()?,
            self.epochs,
            self.pretrain_lr,
            self.init_seed,
        )
    }
}

/// Trains a freshly initialized network on `clips` with the combined LAB
/// loss. `seed` fixes both the initial parameters and the clip order.
pub fn pretrain_toy(
    arch: &Arch,
    clips: &[SequenceRecord],
    epochs: usize,
    lr: f64,
    seed: u64,
) -> Result<PretrainOutcome<ModelState>> {
    let init = ModelState::init(*arch, seed)?;
    let cfg = PretrainConfig {
        epochs,
        adam: AdamConfig::with_lr(lr),
        loss_mode: LossMode::LabCombined,
        seed,
        ..PretrainConfig::default()
    };
    Ok(pretrain(&init, clips, &cfg)?)
}

/// Wall clock backed by [`Instant`].
#[derive(Debug)]
pub struct StdClock(Instant);

impl StdClock {
    pub fn new() -> Self {
        Self(Instant::now())
    }
}

impl Default for StdClock {
    fn default() -> Self {
        Self::new()
    }
}

impl Clock for StdClock {
    fn now(&self) -> f64 {
        self.0.elapsed().as_secs_f64()
    }
}

/// One method on one sequence. `psnr` / `ssim` average frames 2..T (all
/// frames for single-frame clips); the `_all` fields include frame 1.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalRow {
    pub sequence: String,
    pub method: String,
    pub iterations: usize,
    pub psnr: f64,
    pub ssim: f64,
    pub psnr_all: f64,
    pub ssim_all: f64,
    /// Seconds; zero for the baseline.
    pub tuning_time: f64,
}

impl EvalRow {
    fn new(sequence: &str, method: &str, iterations: usize, m: &SequenceMetrics, time: f64) -> Self {
        let rest = m.excluding_reference.unwrap_or(m.all_frames);
        Self {
            sequence: sequence.to_string(),
            method: method.to_string(),
            iterations,
            psnr: rest.psnr,
            ssim: rest.ssim,
            psnr_all: m.all_frames.psnr,
            ssim_all: m.all_frames.ssim,
            tuning_time: time,
        }
    }
}

pub const BASELINE: &str = "baseline";
pub const TUNED: &str = "tuned";

#[derive(Clone, Debug)]
pub struct Evaluation {
    pub baseline: EvalRow,
    pub tuned: EvalRow,
    pub report: TuningReport<ModelState>,
    pub baseline_frames: ColorSequence,
    pub tuned_frames: ColorSequence,
}

fn score(out: &ColorSequence, rec: &SequenceRecord) -> Result<SequenceMetrics> {
    Ok(sequence_metrics(out.frames(), rec.truth.frames())?)
}

/// Baseline and tuned colorizations of one record, scored by the same code.
/// With `frames_out`, PNGs go to `<frames_out>/<sequence>/{baseline,tuned}/`.
pub fn evaluate(
    state: &ModelState,
    rec: &SequenceRecord,
    cfg: &TuningConfig,
    frames_out: Option<&Path>,
) -> Result<Evaluation> {
    let base = state.forward(&rec.mono, &rec.reference)?;
    let clock = StdClock::new();
    let report = refcolor_core::tuner::tune(state, &rec.mono, &rec.reference, cfg, &clock)?;
    let tuned = report.final_state.forward(&rec.mono, &rec.reference)?;
    let baseline_row = EvalRow::new(&rec.name, BASELINE, 0, &score(&base, rec)?, 0.0);
    let tuned_row = EvalRow::new(
        &rec.name,
        TUNED,
        cfg.iterations,
        &score(&tuned, rec)?,
        report.wall_time,
    );
    if let Some(dir) = frames_out {
        io::write_frames(&dir.join(&rec.name).join(BASELINE), base.frames())?;
        io::write_frames(&dir.join(&rec.name).join(TUNED), tuned.frames())?;
    }
    Ok(Evaluation {
        baseline: baseline_row,
        tuned: tuned_row,
        report,
        baseline_frames: base,
        tuned_frames: tuned,
    })
}

/// Runs `job` over `items` on `workers` threads; output order follows input.
pub fn pool_map<T: Sync, R: Send>(
    items: &[T],
    workers: usize,
    job: impl Fn(&T) -> Result<R> + Sync + Send,
) -> Result<Vec<R>> {
    if workers <= 1 {
        return items.iter().map(job).collect();
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Precondition(format!("cannot start worker pool: {e}")))?;
    pool.install(|| items.par_iter().map(job).collect())
}

/// [`evaluate`] over many records; each worker clones its own state.
pub fn evaluate_all(
    state: &ModelState,
    recs: &[SequenceRecord],
    cfg: &TuningConfig,
    workers: usize,
    frames_out: Option<&Path>,
) -> Result<Vec<Evaluation>> {
    pool_map(recs, workers, |rec| {
        let local = state.clone();
        evaluate(&local, rec, cfg, frames_out)
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepPoint {
    pub iterations: usize,
    pub loss: f64,
    pub first_psnr: f64,
    pub psnr: f64,
    pub ssim: f64,
}

/// One tuning run to the largest checkpoint, scoring the whole clip at each
/// listed iteration count.
pub fn iteration_sweep(
    state: &ModelState,
    rec: &SequenceRecord,
    checkpoints: &[usize],
    cfg: &TuningConfig,
) -> Result<Vec<SweepPoint>> {
    if checkpoints.is_empty() || checkpoints.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::Precondition(
            "sweep checkpoints must be a non-empty ascending list".into(),
        ));
    }
    let last = *checkpoints.last().expect("non-empty");
    let cfg = cfg.clone().with_iterations(last);
    let mut snapshots = Vec::new();
    let report = tune_observed(
        state,
        &rec.mono,
        &rec.reference,
        &cfg,
        &refcolor_core::NoClock,
        &mut |i, m: &ModelState| {
            if checkpoints.contains(&i) {
                snapshots.push((i, m.clone()));
            }
            Ok(())
        },
    )?;
    checkpoints
        .iter()
        .map(|&i| {
            let (_, model) = snapshots.iter().find(|(j, _)| *j == i).expect("observed");
            let m = score(&model.forward(&rec.mono, &rec.reference)?, rec)?;
            let rest = m.excluding_reference.unwrap_or(m.all_frames);
            Ok(SweepPoint {
                iterations: i,
                loss: report.loss_trace[i],
                first_psnr: report.psnr_trace[i],
                psnr: rest.psnr,
                ssim: rest.ssim,
            })
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct AblationRow {
    pub dataset: String,
    pub loss_mode: LossMode,
    pub psnr: f64,
    pub ssim: f64,
}

fn mean(v: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = v.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    sum / n as f64
}

/// Tuned dataset averages for every loss mode, same seeds and settings.
pub fn ablation(
    state: &ModelState,
    datasets: &[(String, Vec<SequenceRecord>)],
    base: &TuningConfig,
    workers: usize,
) -> Result<Vec<AblationRow>> {
    let mut rows = Vec::new();
    for (name, recs) in datasets {
        if recs.is_empty() {
            return Err(Error::Precondition(format!("dataset {name} is empty")));
        }
        for mode in LossMode::ALL {
            let cfg = base.clone().with_loss(mode);
            let evals = evaluate_all(state, recs, &cfg, workers, None)?;
            rows.push(AblationRow {
                dataset: name.clone(),
                loss_mode: mode,
                psnr: mean(evals.iter().map(|e| e.tuned.psnr)),
                ssim: mean(evals.iter().map(|e| e.tuned.ssim)),
            });
        }
    }
    Ok(rows)
}

#[derive(Clone, Debug, PartialEq)]
pub struct TimingRow {
    pub group: String,
    pub height: usize,
    pub width: usize,
    pub iterations: usize,
    /// Mean seconds in the optimization loop per sequence.
    pub seconds: f64,
}

/// Groups records by frame size, smallest pixel count first.
pub fn group_by_resolution(recs: Vec<SequenceRecord>) -> Vec<(String, Vec<SequenceRecord>)> {
    let mut groups: Vec<((usize, usize), Vec<SequenceRecord>)> = Vec::new();
    for rec in recs {
        let dims = rec.dims();
        match groups.iter_mut().find(|(d, _)| *d == dims) {
            Some((_, g)) => g.push(rec),
            None => groups.push((dims, vec![rec])),
        }
    }
    groups.sort_by_key(|((h, w), _)| (h * w, *h));
    groups
        .into_iter()
        .map(|((h, w), g)| (format!("{h}x{w}"), g))
        .collect()
}

/// Serial, single-threaded tuning times. Only the optimization loop is
/// timed: no checkpoint loading, decoding or final inference.
/// Each clip is timed this many times and the fastest run kept, which
/// filters out scheduler noise on a loaded machine.
pub const TIMING_REPEATS: usize = 3;

pub fn timing(
    state: &ModelState,
    groups: &[(String, Vec<SequenceRecord>)],
    iterations: &[usize],
    base: &TuningConfig,
) -> Result<Vec<TimingRow>> {
    let mut rows = Vec::new();
    for &n in iterations {
        let cfg = base.clone().with_iterations(n);
        for (label, recs) in groups {
            let first = recs
                .first()
                .ok_or_else(|| Error::Precondition(format!("timing group {label} is empty")))?;
            let (height, width) = first.dims();
            let mut total = 0.0;
            for rec in recs {
                let mut best = f64::INFINITY;
                for _ in 0..TIMING_REPEATS {
                    let clock = StdClock::new();
                    let t = refcolor_core::tuner::tune(state, &rec.mono, &rec.reference, &cfg, &clock)?
                        .wall_time;
                    best = best.min(t);
                }
                total += best;
            }
            rows.push(TimingRow {
                group: label.clone(),
                height,
                width,
                iterations: n,
                seconds: total / recs.len() as f64,
            });
        }
    }
    Ok(rows)
}
