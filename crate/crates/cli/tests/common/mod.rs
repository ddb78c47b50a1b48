#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

pub fn og(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_og"))
        .args(args)
        .output()
        .expect("og binary runs")
}

pub fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

pub fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

pub fn path_str(p: &Path) -> &str {
    p.to_str().expect("utf-8 temp path")
}

/// Writes the synthetic bundle for `seed` into `dir/name` via the binary.
pub fn synth_bundle(dir: &Path, name: &str, seed: u64, objects: usize) -> PathBuf {
    let out = dir.join(name);
    let o = og(&[
        "synth",
        "--seed",
        &seed.to_string(),
        "--objects",
        &objects.to_string(),
        "--out",
        path_str(&out),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    out
}

/// Sorted file names and contents of a directory.
pub fn dir_contents(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (
                e.file_name().to_string_lossy().into_owned(),
                std::fs::read(e.path()).unwrap(),
            )
        })
        .collect();
    files.sort();
    files
}
