#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};

use serde_json::Value;
use vpcb::experiment::Manifest;

pub const BIN: &str = env!("CARGO_BIN_EXE_vpcb");

/// Runner line for the PSNR-to-0..100 stand-in quality metric.
pub fn proxy_runner(name: &str, lo: f64, hi: f64) -> String {
    format!(
        "[[runners]]\nname = \"{name}\"\ncommand = \"{BIN} score --ref {{ref}} --dist {{dist}} --runner-out {{out}} --proxy {lo}:{hi} --mask exclude-markers --marker-size 30 --marker-inset 1\"\nmin = 0\nmax = 100\n"
    )
}

/// Small two-clip toy experiment. `extra` is appended verbatim (profiles,
/// runners, ladder sections).
pub fn manifest_text(top: &str, extra: &str) -> String {
    format!(
        r#"output_dir = "out"
seed = 5
reference_codec = "toy"
marker = {{ module_size = 3, inset = 1 }}
{top}

[[clips]]
name = "bar"
clip_id = 1
synthetic = {{ kind = "moving_bar", width = 160, height = 96, frames = 6 }}

[[clips]]
name = "text"
clip_id = 2
synthetic = {{ kind = "text_like", width = 160, height = 96, frames = 6 }}

[[codecs]]
name = "toy"

{extra}"#
    )
}

pub fn write_manifest(dir: &Path, text: &str) -> Manifest {
    fs::create_dir_all(dir).unwrap();
    let path = dir.join("experiment.toml");
    fs::write(&path, text).unwrap();
    Manifest::load(&path).unwrap()
}

/// Store lines with run-dependent fields removed and the output root
/// replaced, so stores from different directories compare equal.
pub fn normalized_store(path: &Path, root: &Path) -> Vec<Value> {
    let root = root.to_string_lossy().into_owned();
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(|l| {
            let mut v: Value = serde_json::from_str(&l.replace(&root, "<root>")).unwrap();
            v.as_object_mut().unwrap().remove("volatile");
            v
        })
        .collect()
}

pub fn files_in(dir: &Path) -> Vec<PathBuf> {
    let mut out: Vec<PathBuf> = fs::read_dir(dir).unwrap().map(|e| e.unwrap().path()).collect();
    out.sort();
    out
}
