use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use refcolor_core::model::{Colorizer, ModelState, SequenceRecord};
use refcolor_core::tuner::colorize_tuned;

use crate::bench::{self, StdClock};
use crate::config::{describe_keys, Dataset, Settings};
use crate::error::{Error, Result};
use crate::io;
use crate::report::{self, Header};

#[derive(Parser, Debug)]
#[command(
    name = "refcolor",
    version,
    about = "Reference-based video colorization with test-time tuning",
    after_help = "Run `refcolor <command> --help` for the flags and config keys of a command."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Colorize a frame folder from its colorized first frame.
    Colorize(Flags),
    /// Tune a checkpoint on one reference and save the tuned checkpoint.
    Tune(Flags),
    /// Pretrain the toy network on synthetic clips.
    PretrainToy(Flags),
    /// Baseline versus tuned scores on a dataset.
    Bench(Flags),
    /// Tuned scores for every loss mode.
    Ablate(Flags),
    /// Scores after increasing numbers of tuning iterations.
    Sweep(Flags),
    /// Tuning time per sequence, grouped by resolution.
    Timing(Flags),
}

/// Flags override values from `--config`.
#[derive(Args, Debug, Default)]
#[command(after_help = keys_help())]
struct Flags {
    /// Frame folder to colorize [default: none]
    #[arg(long, value_name = "DIR")]
    input: Option<String>,
    /// Colorized first frame (PNG) [default: none]
    #[arg(long, value_name = "PNG")]
    reference: Option<String>,
    /// Model checkpoint [default: none; pretrain-toy writes <out>/toy.ckpt]
    #[arg(long, value_name = "FILE")]
    checkpoint: Option<String>,
    /// Tuning iterations; 0 runs the untuned network [default: 20]
    #[arg(long, value_name = "N")]
    iterations: Option<String>,
    /// Tuning learning rate [default: 0.0001]
    #[arg(long, value_name = "LR")]
    lr: Option<String>,
    /// Tuning objective: lab, lab-l, lab-ab or rgb [default: lab]
    #[arg(long, value_name = "MODE")]
    loss: Option<String>,
    /// Run seed, recorded in reports [default: 0]
    #[arg(long, value_name = "N")]
    seed: Option<String>,
    /// Output directory [default: out]
    #[arg(long, value_name = "DIR")]
    out: Option<String>,
    /// Config file of key = value lines [default: none]
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Sequences evaluated in parallel by bench, ablate and sweep [default: 1]
    #[arg(long, value_name = "N")]
    workers: Option<String>,
}

fn keys_help() -> String {
    format!("Config keys:\n{}", describe_keys())
}

impl Flags {
    fn settings(&self) -> Result<Settings> {
        let mut s = Settings::default();
        if let Some(path) = &self.config {
            s.apply_file(path)?;
        }
        let pairs = [
            ("input", &self.input),
            ("reference", &self.reference),
            ("checkpoint", &self.checkpoint),
            ("iterations", &self.iterations),
            ("lr", &self.lr),
            ("loss", &self.loss),
            ("seed", &self.seed),
            ("out", &self.out),
            ("workers", &self.workers),
        ];
        for (key, value) in pairs {
            if let Some(v) = value {
                s.set(key, v).map_err(|e| {
                    Error::Config(format!("--{key}: {}", e.to_string().trim_start_matches("config: ")))
                })?;
            }
        }
        Ok(s)
    }
}

fn need<'a>(value: &'a Option<PathBuf>, what: &str, command: &str) -> Result<&'a Path> {
    value
        .as_deref()
        .ok_or_else(|| Error::Config(format!("{command} needs --{what} (or `{what} = ...` in the config)")))
}

/// Entry point; returns 0 on success, 1 on usage errors, 2 on runtime errors.
pub fn run<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn dispatch(command: Command) -> Result<()> {
    let (name, flags) = match &command {
        Command::Colorize(f) => ("colorize", f),
        Command::Tune(f) => ("tune", f),
        Command::PretrainToy(f) => ("pretrain-toy", f),
        Command::Bench(f) => ("bench", f),
        Command::Ablate(f) => ("ablate", f),
        Command::Sweep(f) => ("sweep", f),
        Command::Timing(f) => ("timing", f),
    };
    let s = flags.settings()?;
    eprintln!("refcolor {name} with:");
    for line in s.resolved().lines() {
        eprintln!("  {line}");
    }
    match command {
        Command::Colorize(_) => colorize(&s),
        Command::Tune(_) => tune(&s),
        Command::PretrainToy(_) => pretrain_toy(&s),
        Command::Bench(_) => bench_cmd(&s),
        Command::Ablate(_) => ablate(&s),
        Command::Sweep(_) => sweep(&s),
        Command::Timing(_) => timing(&s),
    }
}

struct Inputs {
    state: ModelState,
    mono: refcolor_core::MonoSequence,
    reference: refcolor_core::Reference,
}

fn single_inputs(s: &Settings, command: &str) -> Result<Inputs> {
    let input = need(&s.input, "input", command)?;
    let reference = need(&s.reference, "reference", command)?;
    let checkpoint = need(&s.checkpoint, "checkpoint", command)?;
    let state = io::load_checkpoint(checkpoint)?;
    let mono = io::load_mono(input, s.gray)?;
    let reference = io::load_reference(reference)?;
    refcolor_core::model::check_inputs(&mono, &reference)?;
    Ok(Inputs {
        state,
        mono,
        reference,
    })
}

fn sequence_name(s: &Settings) -> String {
    s.input
        .as_deref()
        .and_then(Path::file_name)
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "input".into())
}

fn colorize(s: &Settings) -> Result<()> {
    let inp = single_inputs(s, "colorize")?;
    let cfg = s.tuning();
    let frames = if cfg.iterations == 0 {
        inp.state.forward(&inp.mono, &inp.reference)?
    } else {
        let (out, report) = colorize_tuned(&inp.state, &inp.mono, &inp.reference, &cfg, &StdClock::new())?;
        let header = Header::from_settings("tuning trace", s);
        report::write_trace(&s.out.join(format!("trace_{}.csv", sequence_name(s))), &header, &report)?;
        eprintln!(
            "tuned {} iterations in {:.2}s, reference PSNR {:.3} -> {:.3} dB",
            cfg.iterations,
            report.wall_time,
            report.psnr_trace[0],
            report.psnr_trace[cfg.iterations]
        );
        out
    };
    let written = io::write_frames(&s.out, frames.frames())?;
    eprintln!("wrote {} frames to {}", written.len(), s.out.display());
    Ok(())
}

fn tune(s: &Settings) -> Result<()> {
    let inp = single_inputs(s, "tune")?;
    let cfg = s.tuning();
    let report = refcolor_core::tuner::tune(&inp.state, &inp.mono, &inp.reference, &cfg, &StdClock::new())?;
    let path = s.out.join("tuned.ckpt");
    io::save_checkpoint(&path, &report.final_state)?;
    let header = Header::from_settings("tuning trace", s);
    report::write_trace(&s.out.join(format!("trace_{}.csv", sequence_name(s))), &header, &report)?;
    eprintln!("wrote {} after {} iterations ({:.2}s)", path.display(), cfg.iterations, report.wall_time);
    Ok(())
}

fn pretrain_toy(s: &Settings) -> Result<()> {
    let outcome = s.toy.pretrain()?;
    let path = s.checkpoint.clone().unwrap_or_else(|| s.out.join("toy.ckpt"));
    io::save_checkpoint(&path, &outcome.state)?;
    let header = Header::from_settings("toy pretraining", s);
    let mut text = String::new();
    for line in &header.lines {
        text.push_str(&format!("# {line}\n"));
    }
    text.push_str(&format!("# recipe version: {}\nepoch,loss\n", bench::RECIPE_VERSION));
    for (i, l) in outcome.epoch_losses.iter().enumerate() {
        text.push_str(&format!("{},{l}\n", i + 1));
    }
    let log = s.out.join("pretrain.csv");
    std::fs::create_dir_all(&s.out).map_err(|e| Error::io(&s.out, e))?;
    std::fs::write(&log, text).map_err(|e| Error::io(&log, e))?;
    if let (Some(first), Some(last)) = (outcome.epoch_losses.first(), outcome.epoch_losses.last()) {
        eprintln!("pretraining loss {first:.5} -> {last:.5}");
    }
    eprintln!("wrote {}", path.display());
    Ok(())
}

/// `(dataset name, records)` for every configured dataset.
fn datasets(s: &Settings) -> Result<Vec<(String, Vec<SequenceRecord>)>> {
    match &s.dataset {
        Dataset::Toy => Ok(vec![("toy".into(), s.toy.eval_clips()?)]),
        Dataset::Folders(roots) => roots
            .iter()
            .map(|r| {
                let name = r
                    .file_name()
                    .map(|n| n.to_string_lossy().into_owned())
                    .unwrap_or_else(|| r.display().to_string());
                Ok((name, io::load_dataset(r, s.gray)?))
            })
            .collect(),
    }
}

fn all_records(s: &Settings) -> Result<Vec<SequenceRecord>> {
    let sets = datasets(s)?;
    let multi = sets.len() > 1;
    Ok(sets
        .into_iter()
        .flat_map(|(name, recs)| {
            recs.into_iter().map(move |mut r| {
                if multi {
                    r.name = format!("{name}/{}", r.name);
                }
                r
            })
        })
        .collect())
}

fn file_safe(name: &str) -> String {
    name.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect()
}

fn checkpoint(s: &Settings, command: &str) -> Result<ModelState> {
    io::load_checkpoint(need(&s.checkpoint, "checkpoint", command)?)
}

fn bench_cmd(s: &Settings) -> Result<()> {
    let state = checkpoint(s, "bench")?;
    let recs = all_records(s)?;
    let cfg = s.tuning();
    let frames = s.write_frames.then(|| s.out.join("frames"));
    let evals = bench::evaluate_all(&state, &recs, &cfg, s.workers, frames.as_deref())?;
    let header = Header::from_settings("benchmark", s);
    let mut rows = Vec::new();
    for (rec, e) in recs.iter().zip(&evals) {
        rows.push(e.baseline.clone());
        rows.push(e.tuned.clone());
        let path = s.out.join(format!("trace_{}.csv", file_safe(&rec.name)));
        report::write_trace(&path, &Header::from_settings(&format!("tuning trace {}", rec.name), s), &e.report)?;
    }
    let mut with_avg = rows.clone();
    with_avg.extend(report::method_averages(&rows));
    report::write_report(&s.out.join("report.csv"), &header, &with_avg)?;
    let table = report::format_table(&header, &rows);
    let txt = s.out.join("report.txt");
    std::fs::write(&txt, &table).map_err(|e| Error::io(&txt, e))?;
    eprint!("{}", table.lines().filter(|l| !l.starts_with('#')).map(|l| format!("{l}\n")).collect::<String>());
    Ok(())
}

fn ablate(s: &Settings) -> Result<()> {
    let state = checkpoint(s, "ablate")?;
    let rows = bench::ablation(&state, &datasets(s)?, &s.tuning(), s.workers)?;
    if rows.is_empty() {
        return Err(Error::Precondition("no datasets to ablate".into()));
    }
    report::write_ablation(&s.out.join("ablation.csv"), &Header::from_settings("loss ablation", s), &rows)?;
    for r in &rows {
        eprintln!("{:<12} {:<18} {:>8.4} {:>7.4}", r.dataset, r.loss_mode.label(), r.psnr, r.ssim);
    }
    Ok(())
}

fn sweep(s: &Settings) -> Result<()> {
    let state = checkpoint(s, "sweep")?;
    let recs = all_records(s)?;
    let cfg = s.tuning();
    let points = bench::pool_map(&recs, s.workers, |rec| {
        Ok((rec.name.clone(), bench::iteration_sweep(&state, rec, &s.sweep, &cfg)?))
    })?;
    report::write_sweep(&s.out.join("sweep.csv"), &Header::from_settings("iteration sweep", s), &points)?;
    for (name, pts) in &points {
        let line: Vec<String> = pts.iter().map(|p| format!("{}:{:.3}", p.iterations, p.psnr)).collect();
        eprintln!("{name}: {}", line.join(" "));
    }
    Ok(())
}

fn timing(s: &Settings) -> Result<()> {
    let state = checkpoint(s, "timing")?;
    let groups = match &s.dataset {
        Dataset::Toy => {
            let mut groups = Vec::new();
            for &size in &s.timing_sizes {
                let mut recipe = s.toy.clone();
                recipe.clip.height = size;
                recipe.clip.width = size;
                let clips = recipe
                    .eval_seeds
                    .iter()
                    .take(s.timing_clips.max(1))
                    .map(|&seed| recipe.clip(seed))
                    .collect::<Result<Vec<_>>>()?;
                groups.push((format!("{size}x{size}"), clips));
            }
            groups
        }
        Dataset::Folders(_) => bench::group_by_resolution(all_records(s)?),
    };
    let rows = bench::timing(&state, &groups, &s.timing_iterations, &s.tuning())?;
    report::write_timing(&s.out.join("timing.csv"), &Header::from_settings("tuning time (seconds per sequence)", s), &rows)?;
    for r in &rows {
        eprintln!("{:>9} {:>4} iterations {:>10.4}s", r.group, r.iterations, r.seconds);
    }
    Ok(())
}
