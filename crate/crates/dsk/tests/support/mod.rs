#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use dsk::formats::{write_feature_file, CaptionEntry};
use dsk_core::numerics::Rng;

pub const CAPTIONS: [(&str, [&str; 5]); 3] = [
    (
        "beach/01",
        [
            "a dog runs along the beach",
            "brown dog on wet sand",
            "waves behind a running dog",
            "a puppy playing near the sea",
            "dog at the shore",
        ],
    ),
    (
        "city 02",
        [
            "a red bus in a busy street",
            "traffic at night downtown",
            "people crossing a city road",
            "tall buildings and a bus",
            "a crowded avenue",
        ],
    ),
    (
        "kitchen-03",
        [
            "a bowl of fruit on a table",
            "apples and bananas in a kitchen",
            "a wooden table with fruit",
            "fresh fruit near a window",
            "kitchen counter with a bowl",
        ],
    ),
];

pub fn entries() -> Vec<CaptionEntry> {
    CAPTIONS
        .iter()
        .map(|(id, caps)| CaptionEntry {
            id: id.to_string(),
            captions: caps.iter().map(|c| c.to_string()).collect(),
            uri: Some(format!("https://img.example/{}.jpg", id.replace(' ', "%20"))),
        })
        .collect()
}

/// Writes `captions.jsonl` and `images.dskf` (dim 6) into `dir`.
pub fn write_fixture(dir: &Path) -> (PathBuf, PathBuf) {
    let captions = dir.join("captions.jsonl");
    std::fs::write(&captions, dsk::formats::text::captions_to_jsonl(&entries())).unwrap();
    let images = dir.join("images.dskf");
    let mut rng = Rng::new(5);
    let records: Vec<_> = entries()
        .iter()
        .map(|e| (e.id.clone(), (0..6).map(|_| rng.normal()).collect::<Vec<_>>().into()))
        .collect();
    write_feature_file(&images, 6, &records).unwrap();
    (captions, images)
}

pub fn dsk(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dsk"))
        .args(args)
        .env_remove("RUST_LOG")
        .output()
        .expect("running dsk")
}

pub fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

pub fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

pub fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}
