//! Encoder backends, ladder points and encode timing.

mod ladder;
mod toy;

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Mutex;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::media::{read_y4m_file, write_y4m_file, ClipDescriptor, Rational, Role};
use crate::shell;

pub use ladder::{build_jnd_ladder, jnd_ladder_over, JndLadder, JndParams, BISECTION_TOLERANCE};
pub use toy::{toy_decode, toy_encode, MAX_QP as TOY_MAX_QP};

/// Held for the timed part of every encode so concurrent workers never skew
/// each other's wall-clock measurements.
static TIMING_GATE: Mutex<()> = Mutex::new(());

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GopMode {
    /// Every frame intra coded ("GOP 0").
    AllIntra,
    /// One intra frame at the start ("GOP -1").
    SingleIntra,
    FixedFrames(u32),
    Seconds(f64),
}

impl GopMode {
    pub fn validate(&self) -> Result<()> {
        match *self {
            GopMode::FixedFrames(0) => Err(Error::Config("GOP of 0 frames".into())),
            GopMode::Seconds(s) if !(s > 0.0 && s.is_finite()) => Err(Error::Config(format!("GOP of {s} seconds"))),
            _ => Ok(()),
        }
    }

    /// Distance between intra frames; `None` for a single intra frame.
    pub fn interval_frames(&self, rate: Rational) -> Option<usize> {
        match *self {
            GopMode::AllIntra => Some(1),
            GopMode::SingleIntra => None,
            GopMode::FixedFrames(n) => Some(n.max(1) as usize),
            GopMode::Seconds(s) => Some(((s * rate.as_f64()).round() as usize).max(1)),
        }
    }

    /// Label in the "GOP 0 / GOP -1" convention, used for `{gop}`.
    pub fn short_label(&self) -> String {
        match *self {
            GopMode::AllIntra => "0".into(),
            GopMode::SingleIntra => "-1".into(),
            GopMode::FixedFrames(n) => n.to_string(),
            GopMode::Seconds(s) => format!("{s}s"),
        }
    }
}

impl fmt::Display for GopMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GopMode::AllIntra => f.write_str("all-intra"),
            GopMode::SingleIntra => f.write_str("single-intra"),
            GopMode::FixedFrames(n) => write!(f, "frames:{n}"),
            GopMode::Seconds(s) => write!(f, "seconds:{s}"),
        }
    }
}

impl FromStr for GopMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Config(format!("unknown GOP mode `{s}`"));
        let gop = match s.trim() {
            "all-intra" | "all_intra" | "0" | "gop0" => GopMode::AllIntra,
            "single-intra" | "single_intra" | "-1" => GopMode::SingleIntra,
            other => match other.split_once(':') {
                Some(("frames", n)) => GopMode::FixedFrames(n.parse().map_err(|_| bad())?),
                Some(("seconds", n)) => GopMode::Seconds(n.parse().map_err(|_| bad())?),
                _ => return Err(bad()),
            },
        };
        gop.validate()?;
        Ok(gop)
    }
}

impl Serialize for GopMode {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for GopMode {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// A rate-control setting: integer QP/CQ or a named quality level.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RateParam {
    Int(i64),
    Label(String),
}

impl RateParam {
    pub fn as_int(&self) -> Option<i64> {
        match self {
            RateParam::Int(v) => Some(*v),
            RateParam::Label(_) => None,
        }
    }
}

impl fmt::Display for RateParam {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RateParam::Int(v) => write!(f, "{v}"),
            RateParam::Label(l) => f.write_str(l),
        }
    }
}

impl From<i64> for RateParam {
    fn from(v: i64) -> Self {
        RateParam::Int(v)
    }
}

impl From<&str> for RateParam {
    fn from(v: &str) -> Self {
        RateParam::Label(v.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RateParamKind {
    Qp,
    Cq,
    QualityLevel,
    FixedMode,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RateRange {
    /// Inclusive `[min, max]`.
    Int([i64; 2]),
    Labels(Vec<String>),
}

impl RateRange {
    pub fn contains(&self, p: &RateParam) -> bool {
        match (self, p) {
            (RateRange::Int([lo, hi]), RateParam::Int(v)) => (lo..=hi).contains(&v),
            (RateRange::Labels(ls), RateParam::Label(l)) => ls.contains(l),
            _ => false,
        }
    }

    /// Every admissible value, in declaration order.
    pub fn values(&self) -> Vec<RateParam> {
        match self {
            RateRange::Int([lo, hi]) => (*lo..=*hi).map(RateParam::Int).collect(),
            RateRange::Labels(ls) => ls.iter().map(|l| RateParam::Label(l.clone())).collect(),
        }
    }
}

impl fmt::Display for RateRange {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RateRange::Int([lo, hi]) => write!(f, "{{{lo}..{hi}}}"),
            RateRange::Labels(ls) => write!(f, "{{{}}}", ls.join(", ")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Backend {
    BuiltinToy,
    /// Shell command templates. Encode sees `{input}` (Y4M), `{output}`,
    /// `{qp}`, `{gop}` and `{gop_frames}`; decode sees `{input}` (encoded
    /// file) and `{output}` (Y4M).
    External { encode: String, decode: String, extension: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CodecConfig {
    pub codec_name: String,
    pub backend: Backend,
    pub rate_param_kind: RateParamKind,
    pub rate_param_range: RateRange,
    /// `None` for GOP-free (intermediate) codecs.
    pub gop: Option<GopMode>,
    pub supports_10bit: bool,
}

impl CodecConfig {
    pub fn toy(gop: Option<GopMode>) -> Self {
        CodecConfig {
            codec_name: "toy".into(),
            backend: Backend::BuiltinToy,
            rate_param_kind: RateParamKind::Qp,
            rate_param_range: RateRange::Int([0, TOY_MAX_QP as i64]),
            gop,
            supports_10bit: true,
        }
    }

    fn external(name: &str, backend: Backend, kind: RateParamKind, range: RateRange, gop: Option<GopMode>, ten_bit: bool) -> Self {
        CodecConfig {
            codec_name: name.into(),
            backend,
            rate_param_kind: kind,
            rate_param_range: range,
            gop,
            supports_10bit: ten_bit,
        }
    }

    /// Hardware H.264: QP 11–51, 8-bit only.
    pub fn h264(backend: Backend, gop: GopMode) -> Self {
        Self::external("h264", backend, RateParamKind::Qp, RateRange::Int([11, 51]), Some(gop), false)
    }

    /// Hardware HEVC: QP 11–50.
    pub fn hevc(backend: Backend, gop: GopMode) -> Self {
        Self::external("hevc", backend, RateParamKind::Qp, RateRange::Int([11, 50]), Some(gop), true)
    }

    /// Hardware AV1: QP 15–230.
    pub fn av1(backend: Backend, gop: GopMode) -> Self {
        Self::external("av1", backend, RateParamKind::Qp, RateRange::Int([15, 230]), Some(gop), true)
    }

    /// HAP in its single HAP-Q mode.
    pub fn hap(backend: Backend) -> Self {
        Self::external("hap", backend, RateParamKind::FixedMode, RateRange::Labels(vec!["hap_q".into()]), None, true)
    }

    /// NotchLC constant-quality levels.
    pub fn notchlc(backend: Backend) -> Self {
        let levels = ["good", "excellent", "optimal", "best"].map(String::from).to_vec();
        Self::external("notchlc", backend, RateParamKind::QualityLevel, RateRange::Labels(levels), None, true)
    }

    /// Daniel2 constant quality 20–95.
    pub fn daniel2(backend: Backend) -> Self {
        Self::external("daniel2", backend, RateParamKind::Cq, RateRange::Int([20, 95]), None, true)
    }

    pub fn is_gop_free(&self) -> bool {
        self.gop.is_none()
    }

    pub fn with_gop(&self, gop: Option<GopMode>) -> Self {
        CodecConfig { gop, ..self.clone() }
    }

    pub fn gop_label(&self) -> String {
        self.gop.map_or_else(|| "n/a".to_string(), |g| g.to_string())
    }

    pub fn check_rate_param(&self, p: &RateParam) -> Result<()> {
        if !self.rate_param_range.contains(p) {
            return Err(Error::RateRange {
                codec: self.codec_name.clone(),
                value: p.to_string(),
                range: self.rate_param_range.to_string(),
            });
        }
        Ok(())
    }

    fn check_input(&self, clip: &ClipDescriptor) -> Result<()> {
        if !matches!(clip.role, Role::Ref | Role::Deg) {
            return Err(Error::Config(format!("cannot encode a {} clip", clip.role)));
        }
        if clip.spec.bit_depth > 8 && !self.supports_10bit {
            return Err(Error::UnsupportedDepth { codec: self.codec_name.clone(), bit_depth: clip.spec.bit_depth });
        }
        if let Some(g) = self.gop {
            g.validate()?;
        }
        Ok(())
    }

    fn extension(&self) -> &str {
        match &self.backend {
            Backend::BuiltinToy => "toy",
            Backend::External { extension, .. } => extension,
        }
    }
}

/// Decimal megabits per second.
pub fn bitrate_mbps(size_bytes: u64, duration_secs: f64) -> f64 {
    size_bytes as f64 * 8.0 / duration_secs / 1e6
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LadderPoint {
    pub config: CodecConfig,
    pub rate_param: RateParam,
    pub encoded_path: PathBuf,
    pub encoded_size_bytes: u64,
    pub bitrate_mbps: f64,
    pub encode_seconds: f64,
    pub encode_fps: f64,
    pub decoded_clip: ClipDescriptor,
}

impl LadderPoint {
    pub fn recomputed_bitrate(&self) -> f64 {
        bitrate_mbps(self.encoded_size_bytes, self.decoded_clip.spec.duration_secs())
    }
}

fn artifact_stem(clip: &ClipDescriptor, config: &CodecConfig, p: &RateParam) -> String {
    let gop = config.gop.map_or_else(|| "na".to_string(), |g| g.to_string().replace(':', ""));
    format!("{}.{}.{}.{}", clip.name, config.codec_name, gop, p)
}

/// Run only the encode step and return its wall-clock time.
fn run_encoder(clip: &ClipDescriptor, config: &CodecConfig, p: &RateParam, output: &Path) -> Result<Duration> {
    match &config.backend {
        Backend::BuiltinToy => {
            let qp = p.as_int().filter(|q| (0..=TOY_MAX_QP as i64).contains(q)).ok_or_else(|| Error::RateRange {
                codec: config.codec_name.clone(),
                value: p.to_string(),
                range: format!("{{0..{TOY_MAX_QP}}}"),
            })? as u8;
            let (spec, frames) = read_y4m_file(&clip.storage_path)?;
            let gop = config.gop.unwrap_or(GopMode::AllIntra);
            let _gate = TIMING_GATE.lock().unwrap_or_else(|e| e.into_inner());
            let start = Instant::now();
            let bytes = toy_encode(&spec, &frames, qp, gop)?;
            let elapsed = start.elapsed();
            drop(_gate);
            fs::write(output, bytes).map_err(|e| Error::io(output, e))?;
            Ok(elapsed)
        }
        Backend::External { encode, .. } => {
            let gop = config.gop.unwrap_or(GopMode::AllIntra);
            let gop_frames = gop.interval_frames(clip.spec.frame_rate).unwrap_or(clip.spec.frame_count.max(1));
            let command = shell::render(
                encode,
                &[
                    ("input", &clip.storage_path.to_string_lossy()),
                    ("output", &output.to_string_lossy()),
                    ("qp", &p.to_string()),
                    ("gop", &gop.short_label()),
                    ("gop_frames", &gop_frames.to_string()),
                ],
                &["input", "output"],
            )?;
            let gate = TIMING_GATE.lock().unwrap_or_else(|e| e.into_inner());
            let start = Instant::now();
            let out = shell::run(&command)?;
            let elapsed = start.elapsed();
            drop(gate);
            shell::save_logs(&out, &output.with_extension(format!("{}.encode", config.extension())))?;
            if !out.status.success() {
                return Err(Error::Encode {
                    codec: config.codec_name.clone(),
                    detail: format!("encoder exited with {}: {}", out.status, shell::tail(&out.stderr)),
                });
            }
            Ok(elapsed)
        }
    }
}

fn run_decoder(config: &CodecConfig, encoded: &Path, decoded: &Path) -> Result<()> {
    match &config.backend {
        Backend::BuiltinToy => {
            let data = fs::read(encoded).map_err(|e| Error::io(encoded, e))?;
            let (spec, frames) = toy_decode(&data)?;
            write_y4m_file(decoded, &spec, &frames)
        }
        Backend::External { decode, .. } => {
            let command = shell::render(
                decode,
                &[("input", &encoded.to_string_lossy()), ("output", &decoded.to_string_lossy())],
                &["input", "output"],
            )?;
            let out = shell::run(&command)?;
            shell::save_logs(&out, &encoded.with_extension(format!("{}.decode", config.extension())))?;
            if !out.status.success() {
                return Err(Error::Encode {
                    codec: config.codec_name.clone(),
                    detail: format!("decoder exited with {}: {}", out.status, shell::tail(&out.stderr)),
                });
            }
            Ok(())
        }
    }
}

/// Encode `clip` at one rate parameter, decode it back to Y4M and record size
/// and timing. Artifacts land in `work_dir`.
pub fn encode(clip: &ClipDescriptor, config: &CodecConfig, rate_param: &RateParam, work_dir: &Path) -> Result<LadderPoint> {
    config.check_input(clip)?;
    config.check_rate_param(rate_param)?;
    if clip.spec.frame_count == 0 {
        return Err(Error::EmptyInput(format!("clip {} has no frames", clip.name)));
    }
    fs::create_dir_all(work_dir).map_err(|e| Error::io(work_dir, e))?;
    let stem = artifact_stem(clip, config, rate_param);
    let encoded_path = work_dir.join(format!("{stem}.{}", config.extension()));
    let decoded_path = work_dir.join(format!("{stem}.dec.y4m"));

    let elapsed = run_encoder(clip, config, rate_param, &encoded_path)?;
    let size = fs::metadata(&encoded_path).map_err(|e| Error::io(&encoded_path, e))?.len();
    run_decoder(config, &encoded_path, &decoded_path)?;
    let (dec_spec, _) = read_y4m_file(&decoded_path)?;
    if dec_spec.frame_count != clip.spec.frame_count {
        return Err(Error::Encode {
            codec: config.codec_name.clone(),
            detail: format!("decoded {} frames, source has {}", dec_spec.frame_count, clip.spec.frame_count),
        });
    }
    let secs = elapsed.as_secs_f64().max(1e-9);
    let decoded_clip = clip.derive(Role::DegDec, dec_spec, decoded_path)?;
    Ok(LadderPoint {
        config: config.clone(),
        rate_param: rate_param.clone(),
        encoded_path,
        encoded_size_bytes: size,
        bitrate_mbps: bitrate_mbps(size, clip.spec.duration_secs()),
        encode_seconds: secs,
        encode_fps: clip.spec.frame_count as f64 / secs,
        decoded_clip,
    })
}

/// Mean of `frame_count / wall_time` over repeated encodes. With
/// `discard_warmup` the first repetition is run but not counted.
pub fn measure_encode_fps(
    config: &CodecConfig,
    clip: &ClipDescriptor,
    rate_param: &RateParam,
    repetitions: usize,
    discard_warmup: bool,
    work_dir: &Path,
) -> Result<f64> {
    if repetitions == 0 {
        return Err(Error::Config("repetitions must be at least 1".into()));
    }
    if clip.spec.frame_count == 0 {
        return Err(Error::EmptyInput(format!("clip {} has no frames", clip.name)));
    }
    config.check_input(clip)?;
    config.check_rate_param(rate_param)?;
    fs::create_dir_all(work_dir).map_err(|e| Error::io(work_dir, e))?;
    let out = work_dir.join(format!("{}.timing.{}", artifact_stem(clip, config, rate_param), config.extension()));
    let runs = if discard_warmup { repetitions + 1 } else { repetitions };
    let mut rates = Vec::with_capacity(runs);
    for _ in 0..runs {
        let t = run_encoder(clip, config, rate_param, &out)?;
        rates.push(clip.spec.frame_count as f64 / t.as_secs_f64().max(1e-9));
    }
    let counted = if discard_warmup { &rates[1..] } else { &rates[..] };
    Ok(counted.iter().sum::<f64>() / counted.len() as f64)
}
