//! Golden-case runner shared by the golden and acceptance targets.

#![allow(dead_code)]

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

pub fn golden_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden")
}

/// Runs one case in a fresh directory and returns every produced file by name,
/// plus the pseudo-files `exit`, `stdout` and `stderr`.
pub fn run_case(case: &Path) -> BTreeMap<String, Vec<u8>> {
    let work = tempfile::tempdir().unwrap();
    fs::copy(case.join("config.json"), work.path().join("config.json")).unwrap();
    let args = fs::read_to_string(case.join("args")).unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_expomodes"))
        .args(args.split_whitespace())
        .args(["--config", "config.json", "--out", "out"])
        .current_dir(work.path())
        .output()
        .unwrap();
    let mut files = BTreeMap::new();
    files.insert(
        "exit".to_string(),
        format!("{}\n", out.status.code().unwrap()).into_bytes(),
    );
    files.insert("stdout".to_string(), out.stdout);
    files.insert("stderr".to_string(), out.stderr);
    if let Ok(entries) = fs::read_dir(work.path().join("out")) {
        for e in entries {
            let e = e.unwrap();
            files.insert(
                e.file_name().into_string().unwrap(),
                fs::read(e.path()).unwrap(),
            );
        }
    }
    files
}

pub fn cases() -> Vec<PathBuf> {
    let mut v: Vec<PathBuf> = fs::read_dir(golden_dir())
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.is_dir())
        .collect();
    v.sort();
    v
}

pub fn read_expected(case: &Path) -> BTreeMap<String, Vec<u8>> {
    let dir = case.join("expected");
    let mut files = BTreeMap::new();
    for e in fs::read_dir(&dir).unwrap_or_else(|_| panic!("missing {}", dir.display())) {
        let e = e.unwrap();
        files.insert(
            e.file_name().into_string().unwrap(),
            fs::read(e.path()).unwrap(),
        );
    }
    files
}

pub fn write_expected(case: &Path, files: &BTreeMap<String, Vec<u8>>) {
    let dir = case.join("expected");
    let _ = fs::remove_dir_all(&dir);
    fs::create_dir_all(&dir).unwrap();
    for (name, bytes) in files {
        fs::write(dir.join(name), bytes).unwrap();
    }
}
