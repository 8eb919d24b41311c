//! Shared helpers for the integration and acceptance suites.

#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

/// Path of the compiled CLI binary.
pub fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_tsgp")
}

pub fn run(args: &[&str]) -> Output {
    Command::new(bin()).args(args).output().expect("binary runs")
}

pub fn stdout_of(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

/// A synthetic two-class task: sinusoids of two different frequencies with
/// random phase and additive Gaussian noise. The classes are cleanly
/// separable in the difference and frequency domains but not by raw value
/// statistics.
pub fn two_sine_rows(n: usize, series_len: usize, seed: u64) -> Vec<(i64, Vec<f64>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, 0.1).unwrap();
    (0..n)
        .map(|i| {
            let class = (i % 2) as i64;
            let cycles = if class == 0 { 2.0 } else { 9.0 };
            let phase = rng.random_range(0.0..std::f64::consts::TAU);
            let values = (0..series_len)
                .map(|t| {
                    let angle = std::f64::consts::TAU * cycles * t as f64 / series_len as f64;
                    (angle + phase).sin() + noise.sample(&mut rng)
                })
                .collect();
            (class + 1, values) // original labels 1/2, remapped on load
        })
        .collect()
}

pub fn write_tsv(path: &Path, rows: &[(i64, Vec<f64>)]) {
    let mut text = String::new();
    for (label, values) in rows {
        text.push_str(&label.to_string());
        for v in values {
            text.push('\t');
            text.push_str(&format!("{v:.15e}"));
        }
        text.push('\n');
    }
    std::fs::write(path, text).expect("write tsv");
}

/// Writes train and test TSVs of the two-sine task; returns their paths.
pub fn two_sine_files(dir: &Path, n_train: usize, n_test: usize, series_len: usize, seed: u64) -> (PathBuf, PathBuf) {
    let train = dir.join("two_sine_TRAIN.tsv");
    let test = dir.join("two_sine_TEST.tsv");
    write_tsv(&train, &two_sine_rows(n_train, series_len, seed));
    write_tsv(&test, &two_sine_rows(n_test, series_len, seed.wrapping_add(1)));
    (train, test)
}

/// Locates one of the UCR archive files the acceptance criteria name.
///
/// Search order: `$UCR_DATA_DIR`, then `crates/tsgp/tests/data/ucr/`. The
/// files are not redistributable through this repository's build
/// environment, so provisioning is a one-time manual step (see README).
pub fn ucr_path(file: &str) -> Result<PathBuf, String> {
    let mut candidates = Vec::new();
    if let Ok(dir) = std::env::var("UCR_DATA_DIR") {
        candidates.push(PathBuf::from(dir).join(file));
    }
    candidates.push(PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/data/ucr").join(file));
    for c in &candidates {
        if c.is_file() {
            return Ok(c.clone());
        }
    }
    Err(format!(
        "UCR data file {file} not found (searched {}). Download the dataset from the UCR Time \
         Series Classification Archive (timeseriesclassification.com) and place the *_TRAIN.tsv \
         and *_TEST.tsv files under crates/tsgp/tests/data/ucr/ or point UCR_DATA_DIR at them.",
        candidates
            .iter()
            .map(|c| c.display().to_string())
            .collect::<Vec<_>>()
            .join(", ")
    ))
}
