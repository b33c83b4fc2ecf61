//! Acceptance suite: one PASS/FAIL line per criterion, tolerances pinned
//! below. Runs without the libtest harness so the report is printed under a
//! plain `cargo test`. Exits non-zero on any failure not listed as known.

mod common;

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::process::ExitCode;
use std::time::Instant;

use common::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use vpcb::alignment::{build_alignment_map, EventKind};
use vpcb::analysis::{min_bitrate_at_quality, tabulate_savings, BitrateCell, CurvePoint, RateQualityCurve};
use vpcb::channel::{apply_channel, apply_channel_traced, calibrate_noise_for_floor, ChannelConfig, Jitter};
use vpcb::codec::{
    bitrate_mbps, jnd_ladder_over, measure_encode_fps, toy_decode, toy_encode, Backend, CodecConfig, GopMode, JndParams,
    RateParam, TOY_MAX_QP,
};
use vpcb::experiment::{embed_clip_markers, report_store, run_experiment, ReportOptions, RunMode, Store};
use vpcb::marker::{decode_frame_id, embed_markers, MarkerGeometry, MarkerPayload};
use vpcb::media::{
    generate_synthetic_clip, write_y4m_file, Chroma, ClipDescriptor, FrameBuffer, FrameFormat, Rational, Rect, Role,
    SynthKind, VideoSpec,
};
use vpcb::metrics::{psnr_sequence, run_external_metric, RegionMask, RunnerDecl, PSNR_CAP};
use vpcb::Error;

// 1. Published savings tables.
const RATIO_REL_TOL: f64 = 0.005;
const AVERAGE_ABS_TOL: f64 = 0.05;
const PUBLISHED: &str = include_str!("data/published_bitrates.csv");
/// Printed averages per (codec, GOP table).
const PRINTED_AVERAGES: [(&str, &str, f64); 8] = [
    ("HEVC", "all-intra", 12.42),
    ("AV1", "all-intra", 10.99),
    ("H.264", "all-intra", 11.17),
    ("HAP", "all-intra", 0.65),
    ("Daniel2", "all-intra", 2.28),
    ("HEVC", "single-intra", 57.2),
    ("AV1", "single-intra", 67.8),
    ("H.264", "single-intra", 74.3),
];
/// Cells whose printed bitrate is too coarsely rounded to reproduce the
/// printed ratio: 772.8/4.0 = 193.2 against 195.66, 772.8/6.0 = 128.8
/// against 129.77. The single-intra averages inherit the error.
const KNOWN_RATIO_MISSES: [&str; 2] = ["HEVC/single-intra/2P5D", "H.264/single-intra/2P5D"];
const KNOWN_AVERAGE_MISSES: [&str; 3] = ["HEVC/single-intra", "AV1/single-intra", "H.264/single-intra"];

// 2. PSNR oracle.
const ORACLE_CLIPS: usize = 200;
const ORACLE_TOL_DB: f64 = 1e-9;

// 3. Noise floor.
const FLOOR_TARGET_DB: f64 = 37.0;
const FLOOR_TOL_DB: f64 = 0.2;
const FLOOR_CAPTURES: usize = 50;
const FLOOR_MAX_RANGE_DB: f64 = 0.3;

// 4. Markers.
const MARKER_TRIALS: usize = 10_000;
const MARKER_SIGMA: f64 = 8.0;
const MARKER_MIN_RECOVERY: f64 = 0.999;
const JITTER_RUNS: u64 = 40;

// 6. Hermetic run.
const HERMETIC_FLOOR: f64 = 82.0;

// 7. JND ladder.
const JND_TOL: f64 = 0.5;

// 8. Timing harness.
const TIMING_REL_TOL: f64 = 0.05;

struct Outcome {
    pass: bool,
    /// Failure reproduces the documented, understood shortfall exactly.
    known: bool,
    detail: String,
}

impl Outcome {
    fn check(pass: bool, detail: String) -> Self {
        Outcome { pass, known: false, detail }
    }
}

type Criterion = fn() -> Result<Outcome, Box<dyn std::error::Error>>;

fn main() -> ExitCode {
    let criteria: [(&str, Criterion); 8] = [
        ("published savings tables", c1_published_tables),
        ("PSNR oracle equivalence", c2_psnr_oracle),
        ("capture noise floor", c3_noise_floor),
        ("marker robustness and genlock events", c4_markers),
        ("toy codec rate-distortion", c5_toy_rd),
        ("hermetic end-to-end run", c6_hermetic_run),
        ("JND ladder selection", c7_jnd_ladder),
        ("timing harness and runner protocol", c8_stubs),
    ];
    let mut unexpected = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = f().unwrap_or_else(|e| Outcome::check(false, format!("error: {e}")));
        let status = match (outcome.pass, outcome.known) {
            (true, _) => "PASS",
            (false, true) => "FAIL (known)",
            (false, false) => "FAIL",
        };
        if !outcome.pass && !outcome.known {
            unexpected += 1;
        }
        println!("[{}] {status} {name} ({:.1}s)", i + 1, start.elapsed().as_secs_f64());
        for line in outcome.detail.lines() {
            println!("      {line}");
        }
    }
    if unexpected > 0 {
        println!("{unexpected} criteria failed unexpectedly");
        return ExitCode::FAILURE;
    }
    ExitCode::SUCCESS
}

fn c1_published_tables() -> Result<Outcome, Box<dyn std::error::Error>> {
    let mut cells = Vec::new();
    let mut printed = Vec::new();
    for row in csv::Reader::from_reader(PUBLISHED.as_bytes()).records() {
        let row = row?;
        let cell = BitrateCell {
            codec: row[0].to_string(),
            gop: row[1].to_string(),
            clip: row[2].to_string(),
            min_bitrate_mbps: if row[3].is_empty() { None } else { Some(row[3].parse()?) },
        };
        if !row[4].is_empty() {
            printed.push((cell.codec.clone(), cell.gop.clone(), cell.clip.clone(), row[4].parse::<f64>()?));
        }
        cells.push(cell);
    }

    let mut detail = String::new();
    let (mut ratio_misses, mut average_misses) = (BTreeSet::new(), BTreeSet::new());
    let (mut ratios_checked, mut averages_checked) = (0, 0);
    for table in ["all-intra", "single-intra"] {
        // Intra-only codecs carry no GOP; the single-intra table lists only hybrids.
        let selected: Vec<BitrateCell> = cells
            .iter()
            .filter(|c| c.gop == table || c.gop == "n/a" && (table == "all-intra" || c.codec == "NotchLC"))
            .cloned()
            .collect();
        let result = tabulate_savings(&selected, "NotchLC", "vmaf", 90.0)?;
        for (codec, gop, clip, expected) in printed.iter().filter(|p| p.1 == table || p.1 == "n/a" && table == "all-intra") {
            let row = result.rows.iter().find(|r| &r.codec == codec && &r.gop == gop && &r.clip == clip).ok_or("missing row")?;
            let got = row.ratio.ok_or("missing ratio")?;
            ratios_checked += 1;
            let rel = (got - expected).abs() / expected;
            if rel > RATIO_REL_TOL {
                ratio_misses.insert(format!("{codec}/{table}/{clip}"));
                writeln!(detail, "ratio {codec} {table} {clip}: {got:.2} vs printed {expected:.2} ({:.2}%)", rel * 100.0)?;
            }
        }
        for (codec, _, expected) in PRINTED_AVERAGES.iter().filter(|a| a.1 == table) {
            let avg = result.averages.iter().find(|a| a.codec == *codec).and_then(|a| a.average).ok_or("missing average")?;
            averages_checked += 1;
            if (avg - expected).abs() > AVERAGE_ABS_TOL {
                average_misses.insert(format!("{codec}/{table}"));
                writeln!(detail, "average {codec} {table}: {avg:.3} vs printed {expected}")?;
            }
        }
    }
    let pass = ratio_misses.is_empty() && average_misses.is_empty();
    let known = ratio_misses == BTreeSet::from(KNOWN_RATIO_MISSES.map(String::from))
        && average_misses == BTreeSet::from(KNOWN_AVERAGE_MISSES.map(String::from));
    let head = format!(
        "{}/{ratios_checked} ratios within {:.1}%, {}/{averages_checked} averages within {AVERAGE_ABS_TOL}",
        ratios_checked - ratio_misses.len(),
        RATIO_REL_TOL * 100.0,
        averages_checked - average_misses.len()
    );
    if known {
        detail.push_str("misses are the rounded 2P5D single-intra bitrates (4.0, 6.0 Mb/s)");
    }
    Ok(Outcome { pass, known, detail: format!("{head}\n{detail}").trim_end().to_string() })
}

fn random_frame(rng: &mut ChaCha8Rng, format: FrameFormat) -> FrameBuffer {
    let max = format.max_value();
    let planes = [0, 1, 2].map(|p| (0..format.plane_len(p)).map(|_| rng.random_range(0..=max)).collect());
    FrameBuffer::from_planes(format, planes).unwrap()
}

fn perturb(rng: &mut ChaCha8Rng, frame: &FrameBuffer, amount: i32) -> FrameBuffer {
    let max = frame.format().max_value() as i32;
    let planes = frame.planes().clone().map(|plane| {
        plane.into_iter().map(|v| (v as i32 + rng.random_range(-amount..=amount)).clamp(0, max) as u16).collect()
    });
    FrameBuffer::from_planes(frame.format(), planes).unwrap()
}

/// Brute-force luma PSNR over the samples accepted by `inside`.
fn oracle_psnr(r: &FrameBuffer, d: &FrameBuffer, inside: impl Fn(usize, usize) -> bool) -> f64 {
    let (mut sse, mut n) = (0.0f64, 0.0f64);
    for y in 0..r.height() {
        for x in 0..r.width() {
            if inside(x, y) {
                let e = r.sample(0, x, y) as f64 - d.sample(0, x, y) as f64;
                sse += e * e;
                n += 1.0;
            }
        }
    }
    let peak = ((1u32 << r.format().bit_depth) - 1) as f64;
    if sse == 0.0 {
        PSNR_CAP
    } else {
        (20.0 * peak.log10() - 10.0 * (sse / n).log10()).min(PSNR_CAP)
    }
}

fn c2_psnr_oracle() -> Result<Outcome, Box<dyn std::error::Error>> {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst = 0.0f64;
    let mut capped = 0;
    for clip in 0..ORACLE_CLIPS {
        let depth = if clip % 2 == 0 { 8 } else { 10 };
        let (w, h) = (2 * rng.random_range(4..=32), 2 * rng.random_range(4..=32));
        let format = FrameFormat::new(w, h, depth, Chroma::Yuv420)?;
        let frames = rng.random_range(1..=4);
        let amount = [0, 1, 3, 40, 1023][rng.random_range(0..5)];
        let reference: Vec<FrameBuffer> = (0..frames).map(|_| random_frame(&mut rng, format)).collect();
        let distorted: Vec<FrameBuffer> = reference.iter().map(|f| perturb(&mut rng, f, amount)).collect();

        let rect = if clip % 3 == 0 {
            let (rw, rh) = (rng.random_range(1..=w), rng.random_range(1..=h));
            Some(Rect { x: rng.random_range(0..=w - rw), y: rng.random_range(0..=h - rh), width: rw, height: rh })
        } else {
            None
        };
        let mask = rect.map_or(RegionMask::Full, |rect| RegionMask::Roi { rect });
        let got = psnr_sequence(reference.iter().zip(&distorted), &mask)?.pooled;
        let per_frame: Vec<f64> = reference
            .iter()
            .zip(&distorted)
            .map(|(r, d)| oracle_psnr(r, d, |x, y| rect.is_none_or(|rc| rc.contains(x, y))))
            .collect();
        capped += per_frame.iter().filter(|&&p| p == PSNR_CAP).count();
        let want = per_frame.iter().sum::<f64>() / per_frame.len() as f64;
        worst = worst.max((got - want).abs());
    }
    Ok(Outcome::check(
        worst <= ORACLE_TOL_DB,
        format!("{ORACLE_CLIPS} clips (8/10-bit, full and ROI masks, {capped} capped frames): max |error| {worst:.2e} dB"),
    ))
}

fn c3_noise_floor() -> Result<Outcome, Box<dyn std::error::Error>> {
    let format = FrameFormat::new(256, 256, 8, Chroma::Yuv420)?;
    let clean: Vec<FrameBuffer> = (0..30).map(|_| FrameBuffer::gray(format)).collect();
    let sigma = calibrate_noise_for_floor(FLOOR_TARGET_DB, 8)?;
    let base = ChannelConfig::with_noise(sigma, 37);
    let scores = (0..FLOOR_CAPTURES as u64)
        .map(|i| {
            let capture = apply_channel(&clean, &base.for_capture(i))?;
            Ok(psnr_sequence(clean.iter().zip(&capture), &RegionMask::Full)?.pooled)
        })
        .collect::<vpcb::Result<Vec<f64>>>()?;
    let single = scores[0];
    let max = scores.iter().cloned().fold(f64::MIN, f64::max);
    let min = scores.iter().cloned().fold(f64::MAX, f64::min);
    let range = max - min;

    // Per-frame MSE over n samples has relative spread sqrt(2/n); pooling
    // averages 30 frames; the expected range of 50 normal draws is 4.50 sd.
    let n = (format.width * format.height) as f64;
    let sd = 10.0 / std::f64::consts::LN_10 * (2.0 / n).sqrt() / (clean.len() as f64).sqrt();
    let predicted = 4.50 * sd;
    let pass = (single - FLOOR_TARGET_DB).abs() <= FLOOR_TOL_DB && range < FLOOR_MAX_RANGE_DB;
    Ok(Outcome::check(
        pass,
        format!(
            "sigma {sigma:.3}; single capture {single:.3} dB (target {FLOOR_TARGET_DB}±{FLOOR_TOL_DB})\n\
             {FLOOR_CAPTURES} captures: {min:.3}..{max:.3} dB, range {range:.4} (limit {FLOOR_MAX_RANGE_DB}, predicted ≈{predicted:.4})"
        ),
    ))
}

fn c4_markers() -> Result<Outcome, Box<dyn std::error::Error>> {
    let geometry = MarkerGeometry::from_size(40, 2)?;
    let spec = VideoSpec::new(FrameFormat::new(128, 96, 8, Chroma::Yuv420)?, Rational::new(30, 1), 50)?;
    let backgrounds = generate_synthetic_clip(SynthKind::TextLike, &spec, 4)?;
    let mut rng = ChaCha8Rng::seed_from_u64(4);

    let (mut recovered, mut wrong) = (0usize, 0usize);
    let batch = backgrounds.len();
    for b in 0..MARKER_TRIALS.div_ceil(batch) {
        let payloads: Vec<MarkerPayload> = (0..batch)
            .map(|_| MarkerPayload::new(rng.random(), rng.random_range(0..1 << 24)))
            .collect::<vpcb::Result<_>>()?;
        let marked = backgrounds
            .iter()
            .zip(&payloads)
            .map(|(f, p)| embed_markers(f, p, &geometry))
            .collect::<vpcb::Result<Vec<_>>>()?;
        let noisy = apply_channel(&marked, &ChannelConfig::with_noise(MARKER_SIGMA, 1000 + b as u64))?;
        for (frame, payload) in noisy.iter().zip(&payloads).take(MARKER_TRIALS - b * batch) {
            match decode_frame_id(frame, &geometry) {
                Ok(id) if id.payload == *payload => recovered += 1,
                Ok(_) => wrong += 1,
                Err(_) => {}
            }
        }
    }
    let recovery = recovered as f64 / MARKER_TRIALS as f64;

    // Genlock events against the channel's own trace.
    let clip_spec = spec.with_frame_count(40);
    let source = embed_clip_markers(&generate_synthetic_clip(SynthKind::MovingBar, &clip_spec, 5)?, 9, &geometry, &[])?;
    let (mut injected, mut found, mut false_events, mut clean_events) = (0usize, 0usize, 0usize, 0usize);
    for run in 0..JITTER_RUNS {
        let jitter = Some(Jitter { duplicate_prob: 0.1, skip_prob: 0.1 });
        let cfg = ChannelConfig { noise_sigma: MARKER_SIGMA, jitter, seed: run, ..ChannelConfig::identity() };
        let capture = apply_channel_traced(&source, &cfg)?;
        let map = build_alignment_map(&capture.frames, 9, &geometry)?;
        let mut expected = BTreeSet::new();
        for (i, w) in capture.source_indices.windows(2).enumerate() {
            if w[1] == w[0] {
                expected.insert((i + 1, true));
            } else if w[1] != w[0] + 1 {
                expected.insert((i + 1, false));
            }
        }
        // Keyed by capture index and whether the event is a duplicate.
        let reported: BTreeSet<(usize, bool)> = map
            .events
            .iter()
            .map(|e| (e.captured_index, e.kind == EventKind::Duplicate))
            .collect();
        injected += expected.len();
        found += expected.intersection(&reported).count();
        false_events += reported.difference(&expected).count();

        let quiet = apply_channel(&source, &ChannelConfig::with_noise(MARKER_SIGMA, 500 + run))?;
        clean_events += build_alignment_map(&quiet, 9, &geometry)?.events.len();
    }
    let recall = found as f64 / injected as f64;
    let pass = recovery >= MARKER_MIN_RECOVERY && wrong == 0 && recall == 1.0 && false_events == 0 && clean_events == 0;
    Ok(Outcome::check(
        pass,
        format!(
            "{MARKER_TRIALS} frames at sigma {MARKER_SIGMA}: {:.3}% recovered, {wrong} misread (min {:.1}%)\n\
             {JITTER_RUNS} jittered runs: {found}/{injected} events found, {false_events} spurious; \
             {clean_events} events with jitter off",
            recovery * 100.0,
            MARKER_MIN_RECOVERY * 100.0
        ),
    ))
}

struct RdPoint {
    mbps: f64,
    psnr: f64,
}

fn rd_sweep(frames: &[FrameBuffer], spec: &VideoSpec, gop: GopMode) -> vpcb::Result<Vec<RdPoint>> {
    (0..=TOY_MAX_QP)
        .map(|qp| {
            let data = toy_encode(spec, frames, qp, gop)?;
            let (_, decoded) = toy_decode(&data)?;
            let psnr = psnr_sequence(frames.iter().zip(&decoded), &RegionMask::Full)?.pooled;
            Ok(RdPoint { mbps: bitrate_mbps(data.len() as u64, spec.duration_secs()), psnr })
        })
        .collect()
}

fn curve(points: &[RdPoint]) -> vpcb::Result<RateQualityCurve> {
    let pts: Vec<CurvePoint> = points.iter().map(|p| CurvePoint { bitrate_mbps: p.mbps, quality: p.psnr }).collect();
    RateQualityCurve::from_points("toy", "clip", None, "psnr", &pts)
}

/// Largest ratio of single-intra to all-intra minimum bitrate over every
/// threshold both curves reach.
fn worst_gop_ratio(si: &RateQualityCurve, ai: &RateQualityCurve) -> f64 {
    let top = |c: &RateQualityCurve| c.points.last().map_or(f64::MIN, |p| p.quality);
    let reach = top(si).min(top(ai));
    si.points
        .iter()
        .chain(&ai.points)
        .map(|p| p.quality)
        .filter(|&q| q <= reach)
        .map(|t| min_bitrate_at_quality(si, t).unwrap() / min_bitrate_at_quality(ai, t).unwrap())
        .fold(0.0, f64::max)
}

fn c5_toy_rd() -> Result<Outcome, Box<dyn std::error::Error>> {
    let spec = VideoSpec::new(FrameFormat::new(256, 144, 8, Chroma::Yuv420)?, Rational::new(30, 1), 8)?;
    let mut detail = String::new();
    let mut pass = true;
    for kind in [SynthKind::Noise, SynthKind::MovingBar, SynthKind::TextLike, SynthKind::Gradient] {
        let frames = generate_synthetic_clip(kind, &spec, 21)?;
        let lossless = toy_decode(&toy_encode(&spec, &frames, 0, GopMode::AllIntra)?)?.1 == frames;
        let ai = rd_sweep(&frames, &spec, GopMode::AllIntra)?;
        let si = rd_sweep(&frames, &spec, GopMode::SingleIntra)?;
        let mut line = format!("{kind:?}: qp0 bit-exact {lossless}");
        pass &= lossless;

        if matches!(kind, SynthKind::Noise | SynthKind::MovingBar) {
            for (label, sweep) in [("all-intra", &ai), ("single-intra", &si)] {
                let rate_up = sweep.windows(2).filter(|w| w[1].mbps > w[0].mbps).count();
                let psnr_up = sweep.windows(2).filter(|w| w[1].psnr > w[0].psnr).count();
                pass &= rate_up == 0 && psnr_up == 0;
                write!(line, "; {label} rate rises {rate_up}, PSNR rises {psnr_up}")?;
            }
        }
        if kind == SynthKind::Gradient {
            let not_smaller = ai.iter().zip(&si).filter(|(a, s)| s.mbps >= a.mbps).count();
            pass &= not_smaller == 0;
            write!(line, "; single-intra not smaller at {not_smaller}/64 qp")?;
        }
        let ratio = worst_gop_ratio(&curve(&si)?, &curve(&ai)?);
        if kind == SynthKind::Noise {
            // Independent noise frames give inter prediction nothing to use.
            write!(line, "; worst single/all-intra min-bitrate ratio {ratio:.3} (not asserted)")?;
        } else {
            pass &= ratio <= 1.0 + 1e-12;
            write!(line, "; worst single/all-intra min-bitrate ratio {ratio:.3}")?;
        }
        writeln!(detail, "{line}")?;
    }
    Ok(Outcome::check(pass, detail.trim_end().to_string()))
}

fn curves_are_pareto(store: &Store) -> (usize, usize) {
    let mut bad = 0;
    let curves: Vec<_> = store.records().iter().filter(|r| r.kind == vpcb::experiment::RecordKind::Curve).collect();
    for rec in &curves {
        let pts = rec.payload["curve"]["points"].as_array().cloned().unwrap_or_default();
        let xy: Vec<(f64, f64)> =
            pts.iter().map(|p| (p["bitrate_mbps"].as_f64().unwrap(), p["quality"].as_f64().unwrap())).collect();
        if xy.is_empty() || !xy.windows(2).all(|w| w[1].0 > w[0].0 && w[1].1 > w[0].1) {
            bad += 1;
        }
    }
    (curves.len(), bad)
}

fn report_bytes(store: &Path, out: &Path) -> vpcb::Result<Vec<(String, Vec<u8>)>> {
    report_store(store, out, &ReportOptions::default())?;
    let mut files = Vec::new();
    for ch in files_in(out) {
        for f in files_in(&ch) {
            let name = f.strip_prefix(out).unwrap().to_string_lossy().into_owned();
            files.push((name, fs::read(&f).map_err(|e| Error::Config(e.to_string()))?));
        }
    }
    Ok(files)
}

fn c6_hermetic_run() -> Result<Outcome, Box<dyn std::error::Error>> {
    let dir = tempfile::tempdir()?;
    let top = "channels = [\"direct\", \"identity\", \"noisy\"]\ngop_modes = [\"all-intra\", \"single-intra\"]";
    let extra = format!(
        "[ladder.jnd]\nmetric = \"vmaf\"\nfloor = {HERMETIC_FLOOR}\npoints = 5\n\n\
         [channel_profiles.identity]\n\n\
         [channel_profiles.noisy]\nnoise_sigma = 1.0\njitter = {{ duplicate_prob = 0.1, skip_prob = 0.1 }}\n\n{}",
        proxy_runner("vmaf", 20.0, 50.0)
    );
    let manifest = write_manifest(dir.path(), &manifest_text(top, &extra));
    let first = run_experiment(&manifest, RunMode::All)?;
    let store_path = manifest.store_path();
    let store = Store::open(&store_path)?;
    let (curves, bad_curves) = curves_are_pareto(&store);
    let ladders: Vec<usize> = store
        .records()
        .iter()
        .filter(|r| r.kind == vpcb::experiment::RecordKind::Ladder)
        .map(|r| r.payload["rate_params"].as_array().map_or(0, Vec::len))
        .collect();

    let a = report_bytes(&store_path, &dir.path().join("report-a"))?;
    let b = report_bytes(&store_path, &dir.path().join("report-b"))?;
    let deterministic = !a.is_empty() && a == b;
    let has_csv_svg = a.iter().any(|(n, _)| n.ends_with(".csv")) && a.iter().any(|(n, _)| n.ends_with(".svg"));

    let before = fs::read(&store_path)?;
    let rerun = run_experiment(&manifest, RunMode::All)?;
    let idempotent = rerun.evaluated == 0 && rerun.records_written == 0 && fs::read(&store_path)? == before;

    let pass = first.failures.is_empty()
        && first.evaluated > 0
        && curves > 0
        && bad_curves == 0
        && deterministic
        && has_csv_svg
        && idempotent;
    Ok(Outcome::check(
        pass,
        format!(
            "{} tuples, {} failures; ladder sizes {ladders:?}; {curves} curves, {bad_curves} not Pareto\n\
             report: {} files, CSV and SVG {has_csv_svg}, byte-identical on repeat {deterministic}\n\
             rerun: {} evaluated, {} records written, store unchanged {idempotent}",
            first.evaluated,
            first.failures.len(),
            a.len(),
            rerun.evaluated,
            rerun.records_written
        ),
    ))
}

fn c7_jnd_ladder() -> Result<Outcome, Box<dyn std::error::Error>> {
    let values: Vec<RateParam> = (0..=63).map(RateParam::Int).collect();
    let qp = |p: &RateParam| p.as_int().unwrap() as f64;
    let params = JndParams { step: 6.0, floor: 82.0, points: 5 };
    let ladder = jnd_ladder_over(&values, |p| Ok(100.0 - 0.4 * qp(p)), &params)?;
    let picks: Vec<i64> = ladder.rate_params.iter().map(|p| p.as_int().unwrap()).collect();
    let mut pass = ladder.targets == [100.0, 95.5, 91.0, 86.5, 82.0] && picks == [0, 11, 23, 34, 45];
    let mut detail = format!("linear model: targets {:?} -> qp {picks:?}\n", ladder.targets);

    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut violations = 0;
    let cases = 500;
    for _ in 0..cases {
        let slope = rng.random_range(0.05..2.0);
        let max = rng.random_range(10..=120);
        let params = JndParams { step: rng.random_range(0.5..10.0), floor: 82.0, points: rng.random_range(1..8) };
        let values: Vec<RateParam> = (0..=max).map(RateParam::Int).collect();
        let q = |p: &RateParam| 100.0 - slope * qp(p);
        let l = jnd_ladder_over(&values, |p| Ok(q(p)), &params)?;
        let idx: Vec<i64> = l.rate_params.iter().map(|p| p.as_int().unwrap()).collect();
        let sorted_unique = idx.windows(2).all(|w| w[0] < w[1]);
        // Never more than the tolerance below target. Above target by at most
        // the tolerance, or by one grid step where steps are wider than twice
        // it, or anything once the range is exhausted.
        let above = if slope <= 2.0 * JND_TOL { JND_TOL } else { slope };
        let within = l.rate_params.iter().zip(&l.targets).all(|(p, t)| {
            q(p) >= t - JND_TOL - 1e-9 && (q(p) - t <= above + 1e-9 || p.as_int() == Some(max))
        });
        if !sorted_unique || !within {
            violations += 1;
        }
    }
    pass &= violations == 0;
    write!(detail, "{cases} random monotone models: {violations} with unsorted, repeated or off-target points")?;
    Ok(Outcome::check(pass, detail))
}

fn stub_clip(dir: &Path, frames: usize) -> vpcb::Result<ClipDescriptor> {
    let spec = VideoSpec::new(FrameFormat::new(32, 32, 8, Chroma::Yuv420)?, Rational::new(30, 1), frames)?;
    let path = dir.join("stub.y4m");
    write_y4m_file(&path, &spec, &generate_synthetic_clip(SynthKind::Gradient, &spec, 0)?)?;
    Ok(ClipDescriptor { clip_id: 1, name: "stub".into(), spec, role: Role::Ref, storage_path: path })
}

fn c8_stubs() -> Result<Outcome, Box<dyn std::error::Error>> {
    let dir = tempfile::tempdir()?;
    let clip = stub_clip(dir.path(), 12)?;
    let stub = |encode: &str| {
        CodecConfig::h264(
            Backend::External { encode: encode.into(), decode: "cp {input} {output}".into(), extension: "bin".into() },
            GopMode::AllIntra,
        )
    };
    let mut detail = String::new();
    let mut pass = true;

    let sleep = 0.3;
    let steady = measure_encode_fps(&stub(&format!("sleep {sleep}; cp {{input}} {{output}}")), &clip, &20.into(), 3, false, dir.path())?;
    let expected = 12.0 / sleep;
    let err = (steady - expected).abs() / expected;
    pass &= err <= TIMING_REL_TOL;
    writeln!(detail, "sleep {sleep}s stub: {steady:.2} fps vs {expected:.2} ({:+.2}%)", (steady / expected - 1.0) * 100.0)?;

    // First call sleeps longer; discarding warm-up must hide it.
    let flag = dir.path().join("warm");
    let warm = format!("if [ -e {0} ]; then sleep {sleep}; else touch {0}; sleep 1.5; fi; cp {{input}} {{output}}", flag.display());
    let fps = measure_encode_fps(&stub(&warm), &clip, &20.into(), 2, true, dir.path())?;
    let err_w = (fps - expected).abs() / expected;
    pass &= err_w <= TIMING_REL_TOL;
    writeln!(detail, "warm-up discarded: {fps:.2} fps ({:+.2}%)", (fps / expected - 1.0) * 100.0)?;

    // Runner protocol against shell stubs.
    let (r, d) = (dir.path().join("ref clip.y4m"), dir.path().join("dist.y4m"));
    fs::write(&r, b"x")?;
    fs::write(&d, b"y")?;
    let runner = |cmd: &str| RunnerDecl::new("vmaf", cmd, 0.0, 100.0);
    let good = runner(r#"test -f {ref} && test -f {dist} && printf '{"metric":"vmaf","frames":[{"score":91.5},{"score":88.0}]}' > {out}"#);
    let ok = run_external_metric(&good, &r, &d).map(|q| (q.per_frame, q.pooled));
    let checks = [
        ("well-formed output", matches!(&ok, Ok((pf, p)) if pf == &[91.5, 88.0] && (p - 89.75).abs() < 1e-12)),
        ("non-zero exit", matches!(run_external_metric(&runner("exit 2 # {ref} {dist} {out}"), &r, &d), Err(Error::Runner { .. }))),
        (
            "score out of range",
            matches!(
                run_external_metric(&runner(r#"printf '{"frames":[{"score":101}]}' > {out} # {ref} {dist}"#), &r, &d),
                Err(Error::ScoreRange { .. })
            ),
        ),
        ("malformed output", run_external_metric(&runner("echo nope > {out} # {ref} {dist}"), &r, &d).is_err()),
        ("missing placeholder", matches!(run_external_metric(&runner("true {ref} {dist}"), &r, &d), Err(Error::Config(_)))),
        ("empty frame list", run_external_metric(&runner(r#"printf '{"frames":[]}' > {out} # {ref} {dist}"#), &r, &d).is_err()),
    ];
    let failed: Vec<&str> = checks.iter().filter(|c| !c.1).map(|c| c.0).collect();
    pass &= failed.is_empty();
    write!(detail, "runner protocol: {}/{} stub cases behave", checks.len() - failed.len(), checks.len())?;
    if !failed.is_empty() {
        write!(detail, "; failing: {}", failed.join(", "))?;
    }
    Ok(Outcome::check(pass, detail))
}
