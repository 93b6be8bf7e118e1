//! Flat `key = value` settings shared by the config file and the flags.
//!
//! Blank lines and lines starting with `#` are ignored. Keys are listed in
//! [`KEYS`]; anything else is rejected. Lists are comma separated.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use refcolor_core::colorspace::GrayMode;
use refcolor_core::model::Arch;
use refcolor_core::LossMode;
use sha2::{Digest, Sha256};

use crate::bench::ToyRecipe;
use crate::error::{Error, Result};

/// Every accepted key with a one-line description.
pub const KEYS: &[(&str, &str)] = &[
    ("dataset", "`toy` or dataset root folders (comma separated), each holding <sequence>/<frame>.png"),
    ("input", "frame folder to colorize (colorize, tune)"),
    ("reference", "colorized first frame, PNG (colorize, tune)"),
    ("checkpoint", "model checkpoint file"),
    ("out", "output directory"),
    ("iterations", "test-time tuning iterations"),
    ("lr", "tuning learning rate"),
    ("loss", "tuning objective: lab, lab-l, lab-ab or rgb"),
    ("seed", "run seed, recorded in every report"),
    ("workers", "parallel sequences during bench"),
    ("gray", "grayscale conversion: rec601 or lightness"),
    ("frozen_layers", "layer names excluded from tuning"),
    ("sweep", "iteration checkpoints for the sweep"),
    ("timing_iterations", "iteration counts timed by `timing`"),
    ("timing_sizes", "toy clip sizes (pixels per side) for `timing` on the toy dataset"),
    ("timing_clips", "toy clips per size for `timing`"),
    ("write_frames", "write colorized PNG frames during bench: true or false"),
    ("toy_arch", "toy network size: toy or standard"),
    ("toy_height", "toy clip height"),
    ("toy_width", "toy clip width"),
    ("toy_frames", "toy clip length"),
    ("toy_motion", "toy shape speed, pixels per frame"),
    ("toy_shapes", "shapes per toy clip"),
    ("toy_palette", "shape colors as hex triplets, e.g. d01f28,1fb43c; empty for random"),
    ("toy_train_seeds", "seeds of the pretraining clips"),
    ("toy_eval_seeds", "seeds of the held-out clips"),
    ("toy_epochs", "pretraining epochs"),
    ("toy_pretrain_lr", "pretraining learning rate"),
    ("toy_init_seed", "seed of the initial parameters"),
];

#[derive(Clone, Debug, PartialEq)]
pub enum Dataset {
    Toy,
    Folders(Vec<PathBuf>),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Settings {
    pub dataset: Dataset,
    pub input: Option<PathBuf>,
    pub reference: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub out: PathBuf,
    pub iterations: usize,
    pub lr: f64,
    pub loss: LossMode,
    pub seed: u64,
    pub workers: usize,
    pub gray: GrayMode,
    pub frozen_layers: Vec<String>,
    pub sweep: Vec<usize>,
    pub timing_iterations: Vec<usize>,
    pub timing_sizes: Vec<usize>,
    pub timing_clips: usize,
    pub write_frames: bool,
    pub toy: ToyRecipe,
}

impl Default for Settings {
    fn default() -> Self {
        Self {
            dataset: Dataset::Toy,
            input: None,
            reference: None,
            checkpoint: None,
            out: PathBuf::from("out"),
            iterations: refcolor_core::tuner::DEFAULT_ITERATIONS,
            lr: refcolor_core::tuner::DEFAULT_LEARNING_RATE,
            loss: LossMode::LabCombined,
            seed: 0,
            workers: 1,
            gray: GrayMode::Rec601,
            frozen_layers: Vec::new(),
            sweep: vec![0, 1, 5, 10, 20, 50],
            timing_iterations: vec![5, 20],
            timing_sizes: vec![16, 24, 32],
            timing_clips: 2,
            write_frames: true,
            toy: ToyRecipe::default(),
        }
    }
}

fn bad(key: &str, value: &str, why: &str) -> Error {
    Error::Config(format!("{key} = {value:?}: {why}"))
}

fn number<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value.parse().map_err(|_| bad(key, value, "not a valid number"))
}

fn list<T: std::str::FromStr>(key: &str, value: &str) -> Result<Vec<T>> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| number(key, s))
        .collect()
}

fn positive(key: &str, value: &str) -> Result<f64> {
    let v: f64 = number(key, value)?;
    if v.is_finite() && v > 0.0 {
        Ok(v)
    } else {
        Err(bad(key, value, "must be positive"))
    }
}

fn hex_color(key: &str, s: &str) -> Result<[u8; 3]> {
    let s = s.trim().trim_start_matches('#');
    if s.len() != 6 || !s.is_ascii() {
        return Err(bad(key, s, "expected six hex digits"));
    }
    let mut out = [0u8; 3];
    for (i, o) in out.iter_mut().enumerate() {
        *o = u8::from_str_radix(&s[2 * i..2 * i + 2], 16).map_err(|_| bad(key, s, "bad hex"))?;
    }
    Ok(out)
}

fn join<T: ToString>(items: &[T]) -> String {
    items.iter().map(ToString::to_string).collect::<Vec<_>>().join(",")
}

impl Settings {
    /// Parses a config file on top of the defaults.
    pub fn from_file(path: &Path) -> Result<Self> {
        let mut s = Self::default();
        s.apply_file(path)?;
        Ok(s)
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        self.apply_str(&text)
            .map_err(|e| Error::Config(format!("{}: {}", path.display(), e.to_string().trim_start_matches("config: "))))
    }

    pub fn apply_str(&mut self, text: &str) -> Result<()> {
        for (n, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", n + 1)))?;
            self.set(key.trim(), value.trim())
                .map_err(|e| Error::Config(format!("line {}: {}", n + 1, e.to_string().trim_start_matches("config: "))))?;
        }
        Ok(())
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let path = || (!value.is_empty()).then(|| PathBuf::from(value));
        match key {
            "dataset" => {
                self.dataset = if value == "toy" {
                    Dataset::Toy
                } else {
                    let roots: Vec<PathBuf> = value
                        .split(',')
                        .map(str::trim)
                        .filter(|s| !s.is_empty())
                        .map(PathBuf::from)
                        .collect();
                    if roots.is_empty() {
                        return Err(bad(key, value, "no dataset given"));
                    }
                    Dataset::Folders(roots)
                }
            }
            "input" => self.input = path(),
            "reference" => self.reference = path(),
            "checkpoint" => self.checkpoint = path(),
            "out" => self.out = PathBuf::from(value),
            "iterations" => self.iterations = number(key, value)?,
            "lr" => self.lr = positive(key, value)?,
            "loss" => {
                self.loss = LossMode::parse(value)
                    .ok_or_else(|| bad(key, value, "expected lab, lab-l, lab-ab or rgb"))?
            }
            "seed" => self.seed = number(key, value)?,
            "workers" => {
                self.workers = number(key, value)?;
                if self.workers == 0 {
                    return Err(bad(key, value, "need at least one worker"));
                }
            }
            "gray" => {
                self.gray = GrayMode::parse(value)
                    .ok_or_else(|| bad(key, value, "expected rec601 or lightness"))?
            }
            "frozen_layers" => {
                self.frozen_layers = value
                    .split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(String::from)
                    .collect()
            }
            "sweep" => {
                let v: Vec<usize> = list(key, value)?;
                if v.is_empty() || v.windows(2).any(|w| w[0] > w[1]) {
                    return Err(bad(key, value, "expected a non-empty ascending list"));
                }
                self.sweep = v;
            }
            "timing_iterations" => self.timing_iterations = list(key, value)?,
            "timing_sizes" => self.timing_sizes = list(key, value)?,
            "timing_clips" => self.timing_clips = number(key, value)?,
            "write_frames" => {
                self.write_frames = value
                    .parse()
                    .map_err(|_| bad(key, value, "expected true or false"))?
            }
            "toy_arch" => {
                self.toy.arch = match value {
                    "toy" => Arch::TOY,
                    "standard" => Arch::STANDARD,
                    _ => return Err(bad(key, value, "expected toy or standard")),
                }
            }
            "toy_height" => self.toy.clip.height = number(key, value)?,
            "toy_width" => self.toy.clip.width = number(key, value)?,
            "toy_frames" => self.toy.clip.frames = number(key, value)?,
            "toy_motion" => self.toy.clip.motion = number(key, value)?,
            "toy_shapes" => self.toy.clip.shapes = number(key, value)?,
            "toy_palette" => {
                self.toy.clip.palette = value
                    .split(',')
                    .filter(|s| !s.trim().is_empty())
                    .map(|s| hex_color(key, s))
                    .collect::<Result<_>>()?
            }
            "toy_train_seeds" => self.toy.train_seeds = list(key, value)?,
            "toy_eval_seeds" => self.toy.eval_seeds = list(key, value)?,
            "toy_epochs" => self.toy.epochs = number(key, value)?,
            "toy_pretrain_lr" => self.toy.pretrain_lr = positive(key, value)?,
            "toy_init_seed" => self.toy.init_seed = number(key, value)?,
            _ => return Err(Error::Config(format!("unknown key {key:?}"))),
        }
        Ok(())
    }

    /// Canonical `key = value` dump, one line per key in [`KEYS`] order.
    pub fn resolved(&self) -> String {
        let opt = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string()).unwrap_or_default();
        let arch = if self.toy.arch == Arch::STANDARD {
            "standard".to_string()
        } else if self.toy.arch == Arch::TOY {
            "toy".to_string()
        } else {
            format!("{:?}", self.toy.arch)
        };
        let palette: Vec<String> = self
            .toy
            .clip
            .palette
            .iter()
            .map(|c| format!("{:02x}{:02x}{:02x}", c[0], c[1], c[2]))
            .collect();
        let values = [
            match &self.dataset {
                Dataset::Toy => "toy".to_string(),
                Dataset::Folders(roots) => roots.iter().map(|r| r.display().to_string()).collect::<Vec<_>>().join(","),
            },
            opt(&self.input),
            opt(&self.reference),
            opt(&self.checkpoint),
            self.out.display().to_string(),
            self.iterations.to_string(),
            self.lr.to_string(),
            self.loss.name().to_string(),
            self.seed.to_string(),
            self.workers.to_string(),
            self.gray.name().to_string(),
            self.frozen_layers.join(","),
            join(&self.sweep),
            join(&self.timing_iterations),
            join(&self.timing_sizes),
            self.timing_clips.to_string(),
            self.write_frames.to_string(),
            arch,
            self.toy.clip.height.to_string(),
            self.toy.clip.width.to_string(),
            self.toy.clip.frames.to_string(),
            self.toy.clip.motion.to_string(),
            self.toy.clip.shapes.to_string(),
            palette.join(","),
            join(&self.toy.train_seeds),
            join(&self.toy.eval_seeds),
            self.toy.epochs.to_string(),
            self.toy.pretrain_lr.to_string(),
            self.toy.init_seed.to_string(),
        ];
        let mut out = String::new();
        for ((key, _), value) in KEYS.iter().zip(values) {
            let _ = writeln!(out, "{key} = {value}");
        }
        out
    }

    /// SHA-256 of [`Settings::resolved`] without the output directory, so the
    /// hash identifies the experiment rather than where it was written.
    pub fn hash(&self) -> String {
        let text: String = self
            .resolved()
            .lines()
            .filter(|l| !l.starts_with("out ="))
            .map(|l| format!("{l}\n"))
            .collect();
        Sha256::digest(text.as_bytes())
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }

    pub fn tuning(&self) -> refcolor_core::TuningConfig {
        refcolor_core::TuningConfig {
            iterations: self.iterations,
            adam: refcolor_core::optim::AdamConfig::with_lr(self.lr),
            loss_mode: self.loss,
            seed: self.seed,
            frozen_layers: self.frozen_layers.clone(),
            ..Default::default()
        }
    }
}

/// Help text listing every key and its default.
pub fn describe_keys() -> String {
    let defaults = Settings::default().resolved();
    let mut out = String::new();
    for ((key, what), line) in KEYS.iter().zip(defaults.lines()) {
        let default = line.split_once(" = ").map(|(_, v)| v).unwrap_or("");
        let _ = writeln!(out, "  {key:<18} {what} [default: {default}]");
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn resolved_round_trips() {
        let mut s = Settings::default();
        s.apply_str("iterations = 7\nloss = lab-ab\n# comment\n\ntoy_palette = d01f28,1fb43c\ndataset = a,b\n")
            .unwrap();
        let mut back = Settings::default();
        back.apply_str(&s.resolved()).unwrap();
        assert_eq!(back, s);
        assert_eq!(s.toy.clip.palette, vec![[0xd0, 0x1f, 0x28], [0x1f, 0xb4, 0x3c]]);
    }

    #[test]
    fn unknown_and_malformed_rejected() {
        let mut s = Settings::default();
        assert!(matches!(s.apply_str("colour = red"), Err(Error::Config(_))));
        assert!(matches!(s.apply_str("iterations"), Err(Error::Config(_))));
        assert!(matches!(s.set("lr", "-1"), Err(Error::Config(_))));
        assert!(matches!(s.set("sweep", "5,1"), Err(Error::Config(_))));
        assert!(matches!(s.set("loss", "l1"), Err(Error::Config(_))));
    }

    #[test]
    fn hash_ignores_output_dir_only() {
        let a = Settings::default();
        let mut b = a.clone();
        b.out = PathBuf::from("elsewhere");
        assert_eq!(a.hash(), b.hash());
        b.seed = 3;
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 64);
    }

    #[test]
    fn every_key_described() {
        assert_eq!(describe_keys().lines().count(), KEYS.len());
        assert_eq!(Settings::default().resolved().lines().count(), KEYS.len());
    }
}
