//! Helpers for running the `ingnn` binary from tests.
#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

pub fn workspace_root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..").canonicalize().expect("workspace root")
}

/// Every `ingnn ...` line inside a ```sh block of the README.
pub fn readme_commands() -> Vec<Vec<String>> {
    let text = std::fs::read_to_string(workspace_root().join("README.md")).expect("README.md");
    let mut in_sh = false;
    let mut out = Vec::new();
    for line in text.lines() {
        let t = line.trim();
        if t.starts_with("```") {
            in_sh = !in_sh && t == "```sh";
            continue;
        }
        if in_sh {
            if let Some(rest) = t.strip_prefix("ingnn ") {
                out.push(rest.split_whitespace().map(str::to_owned).collect());
            }
        }
    }
    out
}

pub fn run(args: &[String], out_dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ingnn"))
        .args(args)
        .current_dir(workspace_root())
        .env("INGNN_OUT_DIR", out_dir)
        .output()
        .expect("spawn ingnn")
}

pub fn snapshot(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut files = BTreeMap::new();
    for entry in std::fs::read_dir(dir).expect("read out dir") {
        let path = entry.expect("entry").path();
        if path.is_file() {
            files.insert(path.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&path).unwrap());
        }
    }
    files
}

/// Runs `args` twice in fresh output directories and compares all outputs.
pub fn run_twice(args: &[String]) -> Result<BTreeMap<String, Vec<u8>>, String> {
    let mut runs = Vec::new();
    for _ in 0..2 {
        let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
        let out = run(args, dir.path());
        if !out.status.success() {
            return Err(format!(
                "`ingnn {}` exited with {:?}: {}",
                args.join(" "),
                out.status.code(),
                String::from_utf8_lossy(&out.stderr)
            ));
        }
        runs.push((out.stdout, snapshot(dir.path())));
    }
    let (b_stdout, b_files) = runs.pop().unwrap();
    let (a_stdout, a_files) = runs.pop().unwrap();
    if a_files.is_empty() {
        return Err(format!("`ingnn {}` wrote no files", args.join(" ")));
    }
    if a_files != b_files {
        return Err(format!("`ingnn {}` produced different files on rerun", args.join(" ")));
    }
    if a_stdout != b_stdout {
        return Err(format!("`ingnn {}` printed different output on rerun", args.join(" ")));
    }
    Ok(a_files)
}
