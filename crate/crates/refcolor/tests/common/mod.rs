//! Shared fixtures. The recipe model is pretrained once per build and cached
//! under the cargo target tmpdir, keyed by the recipe, so test binaries do not
//! each repeat the run.

#![allow(dead_code)]

use std::path::PathBuf;
use std::sync::{Mutex, MutexGuard, OnceLock};

use refcolor::bench::ToyRecipe;
use refcolor::io;
use refcolor_core::model::ModelState;
use sha2::{Digest, Sha256};

pub struct Pretrained {
    pub state: ModelState,
    pub epoch_losses: Vec<f64>,
    pub checkpoint: PathBuf,
}

fn cache_stem(recipe: &ToyRecipe) -> PathBuf {
    let key = format!("{}:{recipe:?}", refcolor::bench::RECIPE_VERSION);
    let digest: String = Sha256::digest(key.as_bytes())[..8]
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect();
    PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join(format!("toy-recipe-{digest}"))
}

fn load_or_train() -> Pretrained {
    let recipe = ToyRecipe::default();
    let stem = cache_stem(&recipe);
    let ckpt = stem.with_extension("ckpt");
    let losses = stem.with_extension("losses");
    if let (Ok(state), Ok(text)) = (io::load_checkpoint(&ckpt), std::fs::read_to_string(&losses)) {
        let epoch_losses: Vec<f64> = text.lines().filter_map(|l| l.parse().ok()).collect();
        if epoch_losses.len() == recipe.epochs {
            return Pretrained {
                state,
                epoch_losses,
                checkpoint: ckpt,
            };
        }
    }
    let started = std::time::Instant::now();
    let out = recipe.pretrain().expect("recipe pretraining");
    eprintln!("pretrained toy recipe in {:.1}s", started.elapsed().as_secs_f64());
    let tmp = stem.with_extension(format!("tmp{}", std::process::id()));
    io::save_checkpoint(&tmp, &out.state).unwrap();
    std::fs::rename(&tmp, &ckpt).unwrap();
    let text: String = out.epoch_losses.iter().map(|l| format!("{l}\n")).collect();
    std::fs::write(&losses, text).unwrap();
    Pretrained {
        state: out.state,
        epoch_losses: out.epoch_losses,
        checkpoint: ckpt,
    }
}

pub fn pretrained() -> &'static Pretrained {
    static CELL: OnceLock<Pretrained> = OnceLock::new();
    CELL.get_or_init(load_or_train)
}

/// Serializes tests inside one binary so timings are not disturbed.
pub fn serial() -> MutexGuard<'static, ()> {
    static LOCK: Mutex<()> = Mutex::new(());
    LOCK.lock().unwrap_or_else(|e| e.into_inner())
}

pub fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_refcolor")
}
