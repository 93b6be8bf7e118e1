use std::fs;

use refcolor::io;
use refcolor::Error;
use refcolor_core::colorspace::{rgb_to_gray, GrayMode};
use refcolor_core::toy::{make_toy_clip, ToySpec};
use refcolor_core::RgbImage;

fn solid(w: usize, h: usize, v: u8) -> RgbImage {
    RgbImage::from_rgb8(w, h, &vec![v; w * h * 3]).unwrap()
}

#[test]
fn png_round_trip_is_exact() {
    let dir = tempfile::tempdir().unwrap();
    let clip = make_toy_clip(&ToySpec { seed: 4, ..ToySpec::default() }).unwrap();
    let paths = io::write_frames(&dir.path().join("seq"), clip.truth.frames()).unwrap();
    assert_eq!(paths.len(), clip.truth.len());
    assert!(paths[0].ends_with("frame_0000.png"));
    let back = io::load_frames(&dir.path().join("seq")).unwrap();
    assert_eq!(back, clip.truth);
    let rec = io::load_sequence(&dir.path().join("seq"), GrayMode::Rec601).unwrap();
    assert_eq!(rec.name, "seq");
    assert_eq!(rec.mono, clip.mono);
    assert_eq!(rec.reference, clip.reference);
}

#[test]
fn frames_sorted_by_name() {
    let dir = tempfile::tempdir().unwrap();
    for (name, v) in [("b.png", 20u8), ("a.png", 10), ("c.png", 30)] {
        io::write_png(&dir.path().join(name), &solid(4, 3, v)).unwrap();
    }
    fs::write(dir.path().join("notes.txt"), "skip me").unwrap();
    let names: Vec<_> = io::frame_paths(dir.path())
        .unwrap()
        .iter()
        .map(|p| p.file_name().unwrap().to_string_lossy().into_owned())
        .collect();
    assert_eq!(names, ["a.png", "b.png", "c.png"]);
    let frames = io::load_frames(dir.path()).unwrap();
    let firsts: Vec<u8> = frames.frames().iter().map(|f| f.to_rgb8()[0]).collect();
    assert_eq!(firsts, [10, 20, 30]);
    let mono = io::load_mono(dir.path(), GrayMode::Rec601).unwrap();
    assert_eq!(mono.frames()[1], rgb_to_gray(&frames.frames()[1]));
}

#[test]
fn empty_folder_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    assert!(matches!(io::frame_paths(dir.path()), Err(Error::NoFrames { .. })));
    assert!(matches!(io::load_dataset(dir.path(), GrayMode::Rec601), Err(Error::NoFrames { .. })));
    let missing = dir.path().join("nope");
    let err = io::load_frames(&missing).unwrap_err();
    assert!(matches!(err, Error::Io { .. }));
    assert!(err.to_string().contains("nope"));
}

#[test]
fn mixed_sizes_rejected() {
    let dir = tempfile::tempdir().unwrap();
    io::write_png(&dir.path().join("0.png"), &solid(4, 3, 1)).unwrap();
    io::write_png(&dir.path().join("1.png"), &solid(5, 3, 1)).unwrap();
    match io::load_frames(dir.path()) {
        Err(Error::MixedDims { path, expected, found }) => {
            assert!(path.ends_with("1.png"));
            assert_eq!((expected, found), ((3, 4), (3, 5)));
        }
        other => panic!("expected MixedDims, got {other:?}"),
    }
}

#[test]
fn undecodable_frame_named_in_error() {
    let dir = tempfile::tempdir().unwrap();
    io::write_png(&dir.path().join("0.png"), &solid(4, 3, 1)).unwrap();
    fs::write(dir.path().join("1.png"), b"not a png").unwrap();
    let err = io::load_frames(dir.path()).unwrap_err();
    assert!(matches!(err, Error::Decode { .. }), "{err:?}");
    assert!(err.to_string().contains("1.png"));
    assert_eq!(err.exit_code(), 2);
}

#[test]
fn dataset_sorted_by_folder() {
    let dir = tempfile::tempdir().unwrap();
    for name in ["walk", "city"] {
        io::write_frames(&dir.path().join(name), &[solid(4, 4, 7), solid(4, 4, 9)]).unwrap();
    }
    let recs = io::load_dataset(dir.path(), GrayMode::Rec601).unwrap();
    let names: Vec<_> = recs.iter().map(|r| r.name.as_str()).collect();
    assert_eq!(names, ["city", "walk"]);
}

#[test]
fn checkpoint_file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let state = refcolor_core::model::ModelState::init(refcolor_core::model::Arch::TOY, 3).unwrap();
    let path = dir.path().join("nested/m.ckpt");
    io::save_checkpoint(&path, &state).unwrap();
    assert_eq!(io::load_checkpoint(&path).unwrap(), state);
    fs::write(&path, b"garbage").unwrap();
    assert!(matches!(io::load_checkpoint(&path), Err(Error::Core(_))));
}
