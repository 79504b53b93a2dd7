#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

pub const TINY_CONFIG: &str = r#"
seed = 3

[model]
width_divisor = 32
noise_dim = 4

[train]
batch_size = 2
total_steps = 4
checkpoint_every = 2
val_pairs = 2

[eval]
n_samples = 2
pairs = 2
bootstrap_resamples = 100
"#;

pub fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_inbetween"))
        .args(args)
        .env_remove("INBETWEEN_OUT_ROOT")
        .output()
        .expect("binary runs")
}

pub fn run_ok(args: &[&str]) -> Output {
    let out = run(args);
    assert!(
        out.status.success(),
        "{args:?} failed with {:?}\n{}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

pub fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// A 16-video synthetic dataset, a tiny config and a trained checkpoint.
pub struct Fixture {
    pub dir: tempfile::TempDir,
    pub config: PathBuf,
    pub data: PathBuf,
    pub run: PathBuf,
    pub checkpoint: PathBuf,
}

pub fn fixture(variant: &str) -> Fixture {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("tiny.toml");
    std::fs::write(&config, TINY_CONFIG).unwrap();
    let data = dir.path().join("data");
    run_ok(&["make-synthetic", "--out", s(&data), "--count", "16", "--length", "20", "--seed", "1"]);
    let run = dir.path().join("run");
    run_ok(&[
        "train", "--config", s(&config), "--dataset", s(&data), "--out", s(&run), "--variant", variant,
    ]);
    let selected: serde_json::Value =
        serde_json::from_slice(&std::fs::read(run.join("selected.json")).unwrap()).unwrap();
    let checkpoint = PathBuf::from(selected["path"].as_str().unwrap());
    Fixture {
        dir,
        config,
        data,
        run,
        checkpoint,
    }
}

pub fn read_json(p: &Path) -> serde_json::Value {
    serde_json::from_slice(&std::fs::read(p).unwrap()).unwrap()
}

pub fn png_size(p: &Path) -> (u32, u32) {
    let decoder = png::Decoder::new(std::io::BufReader::new(std::fs::File::open(p).unwrap()));
    let reader = decoder.read_info().unwrap();
    let info = reader.info();
    (info.width, info.height)
}
