//! Command-line front end. Exit codes: 0 success, 1 usage, 2 partial
//! failure, 3 failure.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use vpcb::alignment::{build_alignment_map, EventKind};
use vpcb::channel::{apply_channel_traced, calibrate_noise_for_floor, ChannelConfig, DisplayGrid, Jitter, Reconstruction};
use vpcb::codec::{self, build_jnd_ladder, Backend, CodecConfig, GopMode, JndParams, RateParam};
use vpcb::experiment::{embed_clip_markers, report_store, run_experiment, Manifest, ReportOptions, RunMode};
use vpcb::marker::MarkerGeometry;
use vpcb::media::{read_y4m_file, write_y4m_file, ClipDescriptor, Rational, Rect, Role, VideoSpec};
use vpcb::metrics::{psnr_sequence, run_external_metric, to_common_format, RegionMask, RunnerDecl, RunnerOutput};
use vpcb::{Error, Result};

#[derive(Parser)]
#[command(name = "vpcb", version, about = "Codec evaluation harness for LED-wall virtual production")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Embed per-frame corner markers into a clip.
    Mark(MarkArgs),
    /// Encode a clip at a list of rate parameters or a JND ladder.
    EncodeLadder(EncodeArgs),
    /// Pass a clip through the simulated display/capture channel.
    Simulate(SimulateArgs),
    /// Decode markers of a captured clip and print the alignment map.
    Align(AlignArgs),
    /// Score a distorted clip against a reference.
    Score(ScoreArgs),
    /// Emit savings tables and plots from a result store.
    Report(ReportArgs),
    /// Run a full experiment manifest.
    Run(RunArgs),
}

#[derive(Args, Clone, Copy)]
struct MarkerOpts {
    /// Marker edge length in pixels (multiple of 10).
    #[arg(long, default_value_t = 90)]
    marker_size: usize,
    #[arg(long, default_value_t = 2)]
    marker_inset: usize,
}

impl MarkerOpts {
    fn geometry(&self) -> Result<MarkerGeometry> {
        MarkerGeometry::from_size(self.marker_size, self.marker_inset)
    }
}

#[derive(Args)]
struct MarkArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    output: PathBuf,
    #[arg(long)]
    clip_id: u16,
    /// Extra marker set at the corners of a zoom region, `WxH+X+Y`.
    #[arg(long)]
    roi: Vec<Rect>,
    #[command(flatten)]
    marker: MarkerOpts,
}

#[derive(Args)]
struct EncodeArgs {
    #[arg(long)]
    input: PathBuf,
    /// Preset: toy, h264, hevc, av1, hap, notchlc, daniel2.
    #[arg(long, default_value = "toy")]
    codec: String,
    /// Encode command template for external presets.
    #[arg(long)]
    encode: Option<String>,
    /// Decode command template for external presets.
    #[arg(long)]
    decode: Option<String>,
    #[arg(long, default_value = "bin")]
    extension: String,
    #[arg(long, default_value = "all-intra")]
    gop: GopMode,
    /// Comma-separated rate parameters; omit to select a JND ladder on PSNR.
    #[arg(long, value_delimiter = ',')]
    rate_params: Vec<String>,
    #[arg(long, default_value_t = 6.0)]
    jnd_step: f64,
    #[arg(long, default_value_t = 30.0)]
    jnd_floor: f64,
    #[arg(long, default_value_t = 5)]
    jnd_points: usize,
    #[arg(long)]
    work_dir: PathBuf,
    /// Repeat each encode this many times to measure encode speed.
    #[arg(long)]
    timing_reps: Option<usize>,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    output: PathBuf,
    /// TOML channel profile; the flags below are ignored when given.
    #[arg(long)]
    profile: Option<PathBuf>,
    #[arg(long, default_value_t = 0.0)]
    noise_sigma: f64,
    /// Calibrate noise for this capture PSNR (dB) instead of `--noise-sigma`.
    #[arg(long)]
    target_psnr: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 0.0)]
    duplicate_prob: f64,
    #[arg(long, default_value_t = 0.0)]
    skip_prob: f64,
    /// Display samples per source sample, `num:den`.
    #[arg(long)]
    scale: Option<Rational>,
    #[arg(long)]
    bilinear: bool,
    #[arg(long)]
    roi: Option<Rect>,
    /// Write the source index of every output frame as JSON.
    #[arg(long)]
    trace: Option<PathBuf>,
}

#[derive(Args)]
struct AlignArgs {
    #[arg(long)]
    captured: PathBuf,
    #[arg(long)]
    clip_id: u16,
    #[command(flatten)]
    marker: MarkerOpts,
}

#[derive(Args)]
struct ScoreArgs {
    /// `psnr` or the name of an external runner given with `--command`.
    #[arg(long, default_value = "psnr")]
    metric: String,
    #[arg(long = "ref")]
    reference: PathBuf,
    #[arg(long)]
    dist: PathBuf,
    /// full, exclude-markers, or a `WxH+X+Y` region.
    #[arg(long, default_value = "full")]
    mask: String,
    /// Runner command template with {ref}, {dist} and {out}.
    #[arg(long)]
    command: Option<String>,
    #[arg(long)]
    min: Option<f64>,
    #[arg(long)]
    max: Option<f64>,
    /// Write per-frame scores in runner wire format.
    #[arg(long)]
    runner_out: Option<PathBuf>,
    /// Map PSNR linearly from LO..HI dB onto 0..100 (stand-in for VMAF).
    #[arg(long, value_name = "LO:HI")]
    proxy: Option<String>,
    #[command(flatten)]
    marker: MarkerOpts,
}

#[derive(Args)]
struct ReportArgs {
    /// Store file; defaults to the one named by `--manifest`.
    #[arg(long)]
    store: Option<PathBuf>,
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Output directory; defaults to `<store dir>/report`.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    threshold: Option<f64>,
    #[arg(long)]
    reference: Option<String>,
    #[arg(long)]
    manifest_hash: Option<String>,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long, default_value = "all")]
    mode: RunMode,
}

fn mark(a: MarkArgs) -> Result<i32> {
    let (spec, frames) = read_y4m_file(&a.input)?;
    let marked = embed_clip_markers(&frames, a.clip_id, &a.marker.geometry()?, &a.roi)?;
    write_y4m_file(&a.output, &spec, &marked)?;
    Ok(0)
}

fn parse_rate_param(s: &str) -> RateParam {
    s.trim().parse::<i64>().map_or_else(|_| RateParam::Label(s.trim().to_string()), RateParam::Int)
}

fn encode_ladder(a: EncodeArgs) -> Result<i32> {
    let (spec, frames) = read_y4m_file(&a.input)?;
    let name = a.input.file_stem().map_or_else(|| "clip".into(), |s| s.to_string_lossy().into_owned());
    let clip = ClipDescriptor { clip_id: 0, name, spec, role: Role::Ref, storage_path: a.input.clone() };
    let external = || -> Result<Backend> {
        match (&a.encode, &a.decode) {
            (Some(e), Some(d)) => Ok(Backend::External { encode: e.clone(), decode: d.clone(), extension: a.extension.clone() }),
            _ => Err(Error::Config(format!("codec {} needs --encode and --decode", a.codec))),
        }
    };
    let config = match a.codec.as_str() {
        "toy" => CodecConfig::toy(Some(a.gop)),
        "h264" => CodecConfig::h264(external()?, a.gop),
        "hevc" => CodecConfig::hevc(external()?, a.gop),
        "av1" => CodecConfig::av1(external()?, a.gop),
        "hap" => CodecConfig::hap(external()?),
        "notchlc" => CodecConfig::notchlc(external()?),
        "daniel2" => CodecConfig::daniel2(external()?),
        other => return Err(Error::Config(format!("unknown codec `{other}`"))),
    };
    let rate_params: Vec<RateParam> = if a.rate_params.is_empty() {
        let params = JndParams { step: a.jnd_step, floor: a.jnd_floor, points: a.jnd_points };
        let quality = |rp: &RateParam| -> Result<f64> {
            let lp = codec::encode(&clip, &config, rp, &a.work_dir)?;
            let (_, decoded) = read_y4m_file(&lp.decoded_clip.storage_path)?;
            Ok(psnr_sequence(frames.iter().zip(&decoded), &RegionMask::Full)?.pooled)
        };
        let ladder = build_jnd_ladder(&config, quality, &params)?;
        for w in &ladder.warnings {
            log::warn!("{w}");
        }
        ladder.rate_params
    } else {
        a.rate_params.iter().map(|s| parse_rate_param(s)).collect()
    };
    for rp in &rate_params {
        let lp = codec::encode(&clip, &config, rp, &a.work_dir)?;
        let (_, decoded) = read_y4m_file(&lp.decoded_clip.storage_path)?;
        let psnr = psnr_sequence(frames.iter().zip(&decoded), &RegionMask::Full)?.pooled;
        let fps = match a.timing_reps {
            Some(reps) => Some(codec::measure_encode_fps(&config, &clip, rp, reps, true, &a.work_dir)?),
            None => None,
        };
        println!("{}", json!({ "ladder_point": lp, "psnr": psnr, "measured_encode_fps": fps }));
    }
    Ok(0)
}

fn simulate(a: SimulateArgs) -> Result<i32> {
    let (spec, frames) = read_y4m_file(&a.input)?;
    let cfg = match &a.profile {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| Error::Config(format!("{}: {e}", p.display())))?;
            toml::from_str::<ChannelConfig>(&text).map_err(|e| Error::Config(e.to_string()))?
        }
        None => {
            let noise_sigma = match a.target_psnr {
                Some(db) => calibrate_noise_for_floor(db, spec.bit_depth)?,
                None => a.noise_sigma,
            };
            let jitter =
                (a.duplicate_prob > 0.0 || a.skip_prob > 0.0).then_some(Jitter { duplicate_prob: a.duplicate_prob, skip_prob: a.skip_prob });
            let reconstruction = if a.bilinear { Reconstruction::Bilinear } else { Reconstruction::Nearest };
            ChannelConfig {
                resample: a.scale.map(|scale| DisplayGrid { scale, reconstruction }),
                noise_sigma,
                jitter,
                seed: a.seed,
                roi: a.roi,
                ..ChannelConfig::default()
            }
        }
    };
    let capture = apply_channel_traced(&frames, &cfg)?;
    let first = capture.frames.first().ok_or_else(|| Error::EmptyInput("channel dropped every frame".into()))?;
    let out_spec = VideoSpec::new(first.format(), spec.frame_rate, capture.frames.len())?;
    write_y4m_file(&a.output, &out_spec, &capture.frames)?;
    if let Some(t) = &a.trace {
        let text = serde_json::to_string(&json!({ "source_indices": capture.source_indices }))?;
        fs::write(t, text).map_err(|e| Error::Config(format!("{}: {e}", t.display())))?;
    }
    Ok(0)
}

fn align(a: AlignArgs) -> Result<i32> {
    let (_, frames) = read_y4m_file(&a.captured)?;
    let map = build_alignment_map(&frames, a.clip_id, &a.marker.geometry()?)?;
    let summary = json!({
        "duplicates": map.count(EventKind::Duplicate),
        "skips": map.count(EventKind::Skip),
        "unreadable": map.count(EventKind::Unreadable),
    });
    println!("{}", serde_json::to_string_pretty(&json!({ "map": map, "summary": summary }))?);
    Ok(0)
}

fn parse_mask(s: &str, marker: &MarkerOpts) -> Result<RegionMask> {
    Ok(match s {
        "full" => RegionMask::Full,
        "exclude-markers" => RegionMask::ExcludeMarkers { geometry: marker.geometry()? },
        roi => RegionMask::Roi { rect: roi.parse()? },
    })
}

fn parse_proxy(s: &str) -> Result<(f64, f64)> {
    let bad = || Error::Config(format!("--proxy expects LO:HI, got `{s}`"));
    let (lo, hi) = s.split_once(':').ok_or_else(bad)?;
    let (lo, hi): (f64, f64) = (lo.parse().map_err(|_| bad())?, hi.parse().map_err(|_| bad())?);
    if lo.partial_cmp(&hi) != Some(std::cmp::Ordering::Less) {
        return Err(bad());
    }
    Ok((lo, hi))
}

fn score(a: ScoreArgs) -> Result<i32> {
    let record = if let Some(command) = &a.command {
        let (dmin, dmax) = RunnerDecl::default_range(&a.metric).unwrap_or((f64::MIN, f64::MAX));
        let runner = RunnerDecl::new(&a.metric, command, a.min.unwrap_or(dmin), a.max.unwrap_or(dmax));
        run_external_metric(&runner, &a.reference, &a.dist)?
    } else if a.metric == "psnr" {
        let (_, r) = read_y4m_file(&a.reference)?;
        let (_, d) = read_y4m_file(&a.dist)?;
        if r.len() != d.len() {
            return Err(Error::Dimension(format!("reference has {} frames, distorted {}", r.len(), d.len())));
        }
        let mask = parse_mask(&a.mask, &a.marker)?;
        if r.first().map(|f| f.format()) == d.first().map(|f| f.format()) {
            psnr_sequence(r.iter().zip(&d), &mask)?
        } else {
            let pairs = r.iter().zip(&d).map(|(x, y)| to_common_format(x, y)).collect::<Result<Vec<_>>>()?;
            psnr_sequence(pairs.iter().map(|(x, y)| (x, y)), &mask)?
        }
    } else {
        return Err(Error::Config(format!("metric {} needs --command", a.metric)));
    };
    let (name, scores): (String, Vec<f64>) = match &a.proxy {
        Some(p) => {
            let (lo, hi) = parse_proxy(p)?;
            let map = |v: f64| ((v - lo) / (hi - lo) * 100.0).clamp(0.0, 100.0);
            ("psnr_proxy".into(), record.per_frame.iter().map(|&v| map(v)).collect())
        }
        None => (record.metric_name.clone(), record.per_frame.clone()),
    };
    let pooled = scores.iter().sum::<f64>() / scores.len() as f64;
    if let Some(out) = &a.runner_out {
        let text = serde_json::to_string(&RunnerOutput::new(&name, &scores))?;
        fs::write(out, text).map_err(|e| Error::Config(format!("{}: {e}", out.display())))?;
    }
    println!("{pooled}");
    Ok(0)
}

fn report(a: ReportArgs) -> Result<i32> {
    let store = match (&a.store, &a.manifest) {
        (Some(s), _) => s.clone(),
        (None, Some(m)) => Manifest::load(m)?.store_path(),
        (None, None) => return Err(Error::Config("report needs --store or --manifest".into())),
    };
    let out = a.out.clone().unwrap_or_else(|| store.parent().unwrap_or(Path::new(".")).join("report"));
    let opts = ReportOptions { manifest_hash: a.manifest_hash, threshold: a.threshold, reference_codec: a.reference };
    let reports = report_store(&store, &out, &opts)?;
    for r in &reports {
        for w in r.tables.iter().flat_map(|t| &t.warnings) {
            log::warn!("{}: {w}", r.channel);
        }
    }
    println!("{}", serde_json::to_string_pretty(&reports.iter().map(|r| json!({ "channel": r.channel, "files": r.files })).collect::<Vec<_>>())?);
    Ok(0)
}

fn run(a: RunArgs) -> Result<i32> {
    let manifest = Manifest::load(&a.manifest)?;
    let summary = run_experiment(&manifest, a.mode)?;
    println!("{}", serde_json::to_string_pretty(&summary)?);
    Ok(summary.exit_code())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Mark(a) => mark(a),
        Command::EncodeLadder(a) => encode_ladder(a),
        Command::Simulate(a) => simulate(a),
        Command::Align(a) => align(a),
        Command::Score(a) => score(a),
        Command::Report(a) => report(a),
        Command::Run(a) => run(a),
    };
    match result {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e {
                Error::Config(_) | Error::Manifest(_) => 1,
                _ => 3,
            })
        }
    }
}

