//! PNG frames, frame folders and checkpoint files.

use std::fs;
use std::path::{Path, PathBuf};

use refcolor_core::colorspace::{rgb_to_gray_with, GrayMode};
use refcolor_core::model::checkpoint;
use refcolor_core::model::{ColorSequence, ModelState, MonoSequence, Reference, SequenceRecord};
use refcolor_core::RgbImage;

use crate::error::{Error, Result};

pub fn read_png(path: &Path) -> Result<RgbImage> {
    let decoded = image::open(path).map_err(|e| match e {
        image::ImageError::IoError(source) => Error::io(path, source),
        other => Error::Decode {
            path: path.to_owned(),
            message: other.to_string(),
        },
    })?;
    let rgb = decoded.to_rgb8();
    let (w, h) = rgb.dimensions();
    Ok(RgbImage::from_rgb8(w as usize, h as usize, rgb.as_raw())?)
}

/// Writes an 8-bit RGB PNG, creating parent directories as needed.
pub fn write_png(path: &Path, img: &RgbImage) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let buf = image::RgbImage::from_raw(img.width() as u32, img.height() as u32, img.to_rgb8())
        .expect("buffer length matches dimensions");
    buf.save_with_format(path, image::ImageFormat::Png)
        .map_err(|e| match e {
            image::ImageError::IoError(source) => Error::io(path, source),
            other => Error::Decode {
                path: path.to_owned(),
                message: other.to_string(),
            },
        })
}

/// `*.png` files directly inside `dir`, sorted by file name.
pub fn frame_paths(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut paths = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        let is_png = path
            .extension()
            .and_then(|e| e.to_str())
            .is_some_and(|e| e.eq_ignore_ascii_case("png"));
        if is_png && path.is_file() {
            paths.push(path);
        }
    }
    if paths.is_empty() {
        return Err(Error::NoFrames {
            path: dir.to_owned(),
        });
    }
    paths.sort_by(|a, b| a.file_name().cmp(&b.file_name()));
    Ok(paths)
}

/// All frames of a folder; every frame must share the first one's size.
pub fn load_frames(dir: &Path) -> Result<ColorSequence> {
    let mut frames: Vec<RgbImage> = Vec::new();
    for path in frame_paths(dir)? {
        let img = read_png(&path)?;
        if let Some(first) = frames.first() {
            if first.dims() != img.dims() {
                return Err(Error::MixedDims {
                    path,
                    expected: first.dims(),
                    found: img.dims(),
                });
            }
        }
        frames.push(img);
    }
    Ok(ColorSequence::new(frames)?)
}

/// Monochrome input: color frames are reduced with `mode`.
pub fn load_mono(dir: &Path, mode: GrayMode) -> Result<MonoSequence> {
    let frames = load_frames(dir)?;
    let gray = frames
        .frames()
        .iter()
        .map(|f| rgb_to_gray_with(f, mode))
        .collect();
    Ok(MonoSequence::new(gray)?)
}

pub fn load_reference(path: &Path) -> Result<Reference> {
    Ok(Reference::new(read_png(path)?))
}

/// A ground-truth color folder turned into an evaluation record.
pub fn load_sequence(dir: &Path, mode: GrayMode) -> Result<SequenceRecord> {
    let truth = load_frames(dir)?;
    let name = dir
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "sequence".into());
    let mut rec = SequenceRecord::from_truth(name, truth, mode);
    rec.source = Some(dir.display().to_string());
    Ok(rec)
}

/// Every sub-folder of `root` is one sequence; sequences are sorted by name.
pub fn load_dataset(root: &Path, mode: GrayMode) -> Result<Vec<SequenceRecord>> {
    let mut dirs = Vec::new();
    for entry in fs::read_dir(root).map_err(|e| Error::io(root, e))? {
        let path = entry.map_err(|e| Error::io(root, e))?.path();
        if path.is_dir() {
            dirs.push(path);
        }
    }
    if dirs.is_empty() {
        return Err(Error::NoFrames {
            path: root.to_owned(),
        });
    }
    dirs.sort();
    dirs.iter().map(|d| load_sequence(d, mode)).collect()
}

/// Writes `frame_0000.png`, `frame_0001.png`, ... into `dir`.
pub fn write_frames(dir: &Path, frames: &[RgbImage]) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    frames
        .iter()
        .enumerate()
        .map(|(i, f)| {
            let path = dir.join(format!("frame_{i:04}.png"));
            write_png(&path, f).map(|_| path)
        })
        .collect()
}

pub fn save_checkpoint(path: &Path, state: &ModelState) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, checkpoint::encode(state)).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<ModelState> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(checkpoint::decode(&bytes)?)
}
