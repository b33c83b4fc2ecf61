mod common;

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use common::*;
use serde_json::Value;
use vpcb::media::{generate_synthetic_clip, write_y4m_file, Chroma, FrameFormat, Rational, SynthKind, VideoSpec};
use vpcb::metrics::RunnerOutput;

fn vpcb(args: &[&str]) -> Output {
    Command::new(BIN).args(args).env("RUST_LOG", "error").output().unwrap()
}

fn ok_stdout(args: &[&str]) -> String {
    let out = vpcb(args);
    assert_eq!(out.status.code(), Some(0), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn write_clip(path: &Path, kind: SynthKind, w: usize, h: usize, frames: usize) {
    let spec = VideoSpec::new(FrameFormat::new(w, h, 8, Chroma::Yuv420).unwrap(), Rational::new(30, 1), frames).unwrap();
    write_y4m_file(path, &spec, &generate_synthetic_clip(kind, &spec, 3).unwrap()).unwrap();
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn mark_simulate_align_recovers_trace() {
    let dir = tempfile::tempdir().unwrap();
    let (src, marked, cap, trace) =
        (dir.path().join("src.y4m"), dir.path().join("m.y4m"), dir.path().join("cap.y4m"), dir.path().join("t.json"));
    write_clip(&src, SynthKind::MovingBar, 192, 128, 30);
    ok_stdout(&["mark", "--input", s(&src), "--output", s(&marked), "--clip-id", "12", "--marker-size", "30"]);
    ok_stdout(&[
        "simulate", "--input", s(&marked), "--output", s(&cap), "--noise-sigma", "3", "--seed", "4",
        "--duplicate-prob", "0.15", "--skip-prob", "0.15", "--trace", s(&trace),
    ]);
    let printed: Value =
        serde_json::from_str(&ok_stdout(&["align", "--captured", s(&cap), "--clip-id", "12", "--marker-size", "30"])).unwrap();
    let recovered: Vec<u64> =
        printed["map"]["entries"].as_array().unwrap().iter().map(|e| e["source_index"].as_u64().unwrap()).collect();
    let traced: Value = serde_json::from_str(&fs::read_to_string(&trace).unwrap()).unwrap();
    let traced: Vec<u64> = traced["source_indices"].as_array().unwrap().iter().map(|v| v.as_u64().unwrap()).collect();
    assert_eq!(recovered, traced);
    assert_eq!(printed["summary"]["unreadable"], 0);
    let dups = traced.windows(2).filter(|w| w[0] == w[1]).count() as u64;
    assert_eq!(printed["summary"]["duplicates"].as_u64().unwrap(), dups);
}

#[test]
fn align_with_wrong_clip_id_fails() {
    let dir = tempfile::tempdir().unwrap();
    let (src, marked) = (dir.path().join("src.y4m"), dir.path().join("m.y4m"));
    write_clip(&src, SynthKind::Gradient, 128, 96, 4);
    ok_stdout(&["mark", "--input", s(&src), "--output", s(&marked), "--clip-id", "3", "--marker-size", "30"]);
    let out = vpcb(&["align", "--captured", s(&marked), "--clip-id", "4", "--marker-size", "30"]);
    assert_ne!(out.status.code(), Some(0));
}

#[test]
fn encode_ladder_prints_one_point_per_rate_param() {
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("clip.y4m");
    write_clip(&src, SynthKind::TextLike, 96, 64, 3);
    let work = dir.path().join("work");
    let text = ok_stdout(&["encode-ladder", "--input", s(&src), "--rate-params", "0,20,40", "--work-dir", s(&work)]);
    let points: Vec<Value> = text.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(points.len(), 3);
    let psnr: Vec<f64> = points.iter().map(|p| p["psnr"].as_f64().unwrap()).collect();
    let rate: Vec<f64> = points.iter().map(|p| p["ladder_point"]["bitrate_mbps"].as_f64().unwrap()).collect();
    assert!(psnr[0] >= 99.0, "qp 0 is lossless: {psnr:?}");
    assert!(psnr[1] > psnr[2] && rate[0] > rate[1] && rate[1] > rate[2]);
    assert!(points.iter().all(|p| p["measured_encode_fps"].is_null()));

    let jnd = ok_stdout(&["encode-ladder", "--input", s(&src), "--jnd-points", "3", "--work-dir", s(&work)]);
    assert!((1..=3).contains(&jnd.lines().count()));
}

#[test]
fn score_full_mask_proxy_and_runner_out() {
    let dir = tempfile::tempdir().unwrap();
    let (src, cap, out) = (dir.path().join("a.y4m"), dir.path().join("b.y4m"), dir.path().join("o.json"));
    write_clip(&src, SynthKind::Gradient, 128, 96, 4);
    ok_stdout(&["simulate", "--input", s(&src), "--output", s(&cap), "--target-psnr", "35", "--seed", "1"]);

    let identical: f64 = ok_stdout(&["score", "--ref", s(&src), "--dist", s(&src)]).trim().parse().unwrap();
    assert!(identical >= 99.0);
    let full: f64 = ok_stdout(&["score", "--ref", s(&src), "--dist", s(&cap)]).trim().parse().unwrap();
    assert!((full - 35.0).abs() < 0.5, "{full}");
    let roi: f64 = ok_stdout(&["score", "--ref", s(&src), "--dist", s(&cap), "--mask", "64x48+10+10"]).trim().parse().unwrap();
    assert!((roi - 35.0).abs() < 1.0, "{roi}");

    let proxy: f64 = ok_stdout(&["score", "--ref", s(&src), "--dist", s(&cap), "--proxy", "20:50", "--runner-out", s(&out)])
        .trim()
        .parse()
        .unwrap();
    assert!((proxy - (full - 20.0) / 30.0 * 100.0).abs() < 2.0, "{proxy} vs {full}");
    let wire: RunnerOutput = serde_json::from_str(&fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(wire.frames.len(), 4);
    let mean = wire.frames.iter().map(|f| f.score).sum::<f64>() / 4.0;
    assert!((mean - proxy).abs() < 1e-9);

    // The same binary acting as an external runner.
    let command = format!("{BIN} score --ref {{ref}} --dist {{dist}} --runner-out {{out}} --proxy 20:50");
    let via_runner: f64 =
        ok_stdout(&["score", "--metric", "vmaf", "--command", &command, "--ref", s(&src), "--dist", s(&cap)]).trim().parse().unwrap();
    assert!((via_runner - proxy).abs() < 1e-9);
}

#[test]
fn run_and_report_on_small_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let m = write_manifest(dir.path(), &manifest_text("", "[ladder]\nrate_params = [10, 30]\n"));
    let path = dir.path().join("experiment.toml");
    let summary: Value = serde_json::from_str(&ok_stdout(&["run", "--manifest", s(&path)])).unwrap();
    assert_eq!(summary["evaluated"], 4);
    assert_eq!(summary["failures"].as_array().unwrap().len(), 0);

    let printed: Value = serde_json::from_str(&ok_stdout(&["report", "--manifest", s(&path)])).unwrap();
    assert_eq!(printed.as_array().unwrap().len(), 1);
    let report_dir = m.output_dir().join("report");
    assert!(report_dir.join("direct").is_dir());
    assert!(!files_in(&report_dir.join("direct")).is_empty());

    let again: Value = serde_json::from_str(&ok_stdout(&["run", "--manifest", s(&path)])).unwrap();
    assert_eq!((again["evaluated"].as_u64(), again["skipped"].as_u64()), (Some(0), Some(4)));
}

#[test]
fn exit_codes() {
    assert_eq!(vpcb(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(vpcb(&["score", "--ref", "x.y4m"]).status.code(), Some(1));
    assert_eq!(vpcb(&["--help"]).status.code(), Some(0));

    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    fs::write(&bad, "output_dir = 3\n").unwrap();
    assert_eq!(vpcb(&["run", "--manifest", s(&bad)]).status.code(), Some(1));

    let missing = dir.path().join("missing.y4m");
    assert_eq!(vpcb(&["score", "--ref", s(&missing), "--dist", s(&missing)]).status.code(), Some(3));

    // Every tuple fails: the external encoder does not exist.
    let extra = "[ladder]\nrate_params = [10]\n";
    let text = manifest_text("", extra).replace(
        "[[codecs]]\nname = \"toy\"",
        "[[codecs]]\nname = \"toy\"\nbackend = { type = \"external\", encode = \"/nonexistent/enc {input} {output}\", decode = \"/nonexistent/dec {input} {output}\", extension = \"bin\" }",
    );
    write_manifest(dir.path(), &text);
    assert_eq!(vpcb(&["run", "--manifest", s(&dir.path().join("experiment.toml"))]).status.code(), Some(3));
}
