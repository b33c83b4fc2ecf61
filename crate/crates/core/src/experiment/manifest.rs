//! Declarative experiment manifests (TOML).

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Deserializer, Serialize};
use sha2::{Digest, Sha256};

use crate::channel::ChannelConfig;
use crate::codec::{Backend, CodecConfig, GopMode, JndParams, RateParam, RateParamKind, RateRange};
use crate::error::{Error, Result};
use crate::marker::MarkerGeometry;
use crate::media::{Chroma, FrameFormat, Rational, SynthKind, VideoSpec};
use crate::metrics::RunnerDecl;

/// Channel label for scoring decoded clips without a capture channel.
pub const DIRECT: &str = "direct";

/// Overrides the manifest's worker count.
pub const WORKERS_ENV: &str = "VPCB_WORKERS";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    /// Relative to the manifest file.
    pub output_dir: PathBuf,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_threshold")]
    pub threshold: f64,
    pub reference_codec: String,
    /// Concurrent tuple workers; results do not depend on it.
    #[serde(default)]
    pub workers: Option<usize>,
    /// Score native luma PSNR in addition to the runners.
    #[serde(default = "default_true")]
    pub psnr: bool,
    #[serde(default)]
    pub marker: MarkerGeometry,
    pub clips: Vec<ClipSource>,
    pub codecs: Vec<CodecEntry>,
    /// Applied to every codec that is not GOP-free.
    #[serde(default = "default_gops")]
    pub gop_modes: Vec<GopMode>,
    pub ladder: LadderSpec,
    /// `"direct"` and/or names from `channel_profiles`.
    #[serde(default = "default_channels", alias = "channel", deserialize_with = "one_or_many")]
    pub channels: Vec<String>,
    #[serde(default)]
    pub channel_profiles: BTreeMap<String, ChannelConfig>,
    #[serde(default)]
    pub runners: Vec<RunnerDecl>,
    /// Directory the manifest was loaded from; relative paths resolve here.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

fn default_threshold() -> f64 {
    crate::analysis::DEFAULT_THRESHOLD
}

fn default_true() -> bool {
    true
}

fn default_gops() -> Vec<GopMode> {
    vec![GopMode::AllIntra]
}

fn default_channels() -> Vec<String> {
    vec![DIRECT.to_string()]
}

fn one_or_many<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Vec<String>, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum OneOrMany {
        One(String),
        Many(Vec<String>),
    }
    Ok(match OneOrMany::deserialize(d)? {
        OneOrMany::One(s) => vec![s],
        OneOrMany::Many(v) => v,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClipSource {
    pub name: String,
    pub clip_id: u16,
    /// Y4M file, relative to the manifest.
    #[serde(default)]
    pub path: Option<PathBuf>,
    #[serde(default)]
    pub synthetic: Option<SyntheticSource>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSource {
    pub kind: SynthKind,
    pub width: usize,
    pub height: usize,
    #[serde(default = "default_depth")]
    pub bit_depth: u8,
    #[serde(default = "default_chroma")]
    pub chroma: Chroma,
    pub frames: usize,
    #[serde(default = "default_fps")]
    pub fps: Rational,
    /// Defaults to a value derived from the manifest seed and clip name.
    #[serde(default)]
    pub seed: Option<u64>,
}

fn default_depth() -> u8 {
    8
}

fn default_chroma() -> Chroma {
    Chroma::Yuv420
}

fn default_fps() -> Rational {
    Rational::new(30, 1)
}

impl SyntheticSource {
    pub fn spec(&self) -> Result<VideoSpec> {
        VideoSpec::new(FrameFormat::new(self.width, self.height, self.bit_depth, self.chroma)?, self.fps, self.frames)
    }
}

/// Codec declaration: a preset name, optionally overridden field by field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CodecEntry {
    pub name: String,
    /// One of toy, h264, hevc, av1, hap, notchlc, daniel2. Defaults to `name`.
    #[serde(default)]
    pub preset: Option<String>,
    #[serde(default)]
    pub backend: Option<Backend>,
    #[serde(default)]
    pub rate_param_kind: Option<RateParamKind>,
    #[serde(default)]
    pub rate_param_range: Option<RateRange>,
    #[serde(default)]
    pub gop_free: Option<bool>,
    #[serde(default)]
    pub supports_10bit: Option<bool>,
    /// Explicit ladder for this codec, overriding the manifest ladder.
    #[serde(default)]
    pub rate_params: Option<Vec<RateParam>>,
}

impl CodecEntry {
    /// Resolve into a configuration template; `gop` is `None` for GOP-free
    /// codecs and `Some(AllIntra)` as a placeholder otherwise.
    pub fn resolve(&self) -> Result<CodecConfig> {
        let preset = self.preset.as_deref().unwrap_or(&self.name);
        let placeholder = Backend::External { encode: String::new(), decode: String::new(), extension: "bin".into() };
        let backend = self.backend.clone();
        let needs_backend = || {
            backend.clone().ok_or_else(|| Error::Config(format!("codec {} needs a backend", self.name)))
        };
        let mut cfg = match preset {
            "toy" => CodecConfig { backend: backend.clone().unwrap_or(Backend::BuiltinToy), ..CodecConfig::toy(Some(GopMode::AllIntra)) },
            "h264" => CodecConfig::h264(needs_backend()?, GopMode::AllIntra),
            "hevc" => CodecConfig::hevc(needs_backend()?, GopMode::AllIntra),
            "av1" => CodecConfig::av1(needs_backend()?, GopMode::AllIntra),
            "hap" => CodecConfig::hap(needs_backend()?),
            "notchlc" => CodecConfig::notchlc(needs_backend()?),
            "daniel2" => CodecConfig::daniel2(needs_backend()?),
            "custom" => {
                let (Some(kind), Some(range)) = (self.rate_param_kind, self.rate_param_range.clone()) else {
                    return Err(Error::Config(format!("custom codec {} needs rate_param_kind and rate_param_range", self.name)));
                };
                CodecConfig {
                    codec_name: self.name.clone(),
                    backend: backend.clone().unwrap_or(placeholder),
                    rate_param_kind: kind,
                    rate_param_range: range,
                    gop: Some(GopMode::AllIntra),
                    supports_10bit: true,
                }
            }
            other => return Err(Error::Config(format!("unknown codec preset `{other}`"))),
        };
        cfg.codec_name = self.name.clone();
        if let Some(k) = self.rate_param_kind {
            cfg.rate_param_kind = k;
        }
        if let Some(r) = &self.rate_param_range {
            cfg.rate_param_range = r.clone();
        }
        if let Some(b) = self.supports_10bit {
            cfg.supports_10bit = b;
        }
        match self.gop_free {
            Some(true) => cfg.gop = None,
            Some(false) if cfg.gop.is_none() => cfg.gop = Some(GopMode::AllIntra),
            _ => {}
        }
        if let Backend::External { encode, decode, .. } = &cfg.backend {
            if encode.is_empty() || decode.is_empty() {
                return Err(Error::Config(format!("codec {} needs encode and decode commands", self.name)));
            }
        }
        Ok(cfg)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct LadderSpec {
    #[serde(default)]
    pub rate_params: Option<Vec<RateParam>>,
    #[serde(default)]
    pub jnd: Option<JndSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JndSpec {
    #[serde(default = "default_step")]
    pub step: f64,
    #[serde(default = "default_floor")]
    pub floor: f64,
    #[serde(default = "default_points")]
    pub points: usize,
    /// `psnr` or a runner name; scored in direct mode.
    pub metric: String,
}

fn default_step() -> f64 {
    JndParams::default().step
}

fn default_floor() -> f64 {
    JndParams::default().floor
}

fn default_points() -> usize {
    JndParams::default().points
}

impl JndSpec {
    pub fn params(&self) -> JndParams {
        JndParams { step: self.step, floor: self.floor, points: self.points }
    }
}

impl Manifest {
    pub fn from_toml(text: &str, base_dir: &Path) -> Result<Self> {
        let mut m: Manifest = toml::from_str(text).map_err(|e| Error::Manifest(e.to_string()))?;
        m.base_dir = base_dir.to_path_buf();
        m.validate()?;
        Ok(m)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::from_toml(&text, &base)
    }

    pub fn resolve_path(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn output_dir(&self) -> PathBuf {
        self.resolve_path(&self.output_dir)
    }

    pub fn store_path(&self) -> PathBuf {
        self.output_dir().join("store.jsonl")
    }

    /// Worker count: `VPCB_WORKERS`, then the manifest, then the host.
    pub fn worker_count(&self) -> usize {
        std::env::var(WORKERS_ENV)
            .ok()
            .and_then(|v| v.trim().parse::<usize>().ok())
            .or(self.workers)
            .or_else(|| std::thread::available_parallelism().ok().map(|n| n.get()))
            .unwrap_or(1)
            .max(1)
    }

    pub fn metric_names(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        if self.psnr {
            out.push("psnr".into());
        }
        out.extend(self.runners.iter().map(|r| r.name.clone()));
        out
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Manifest(msg));
        if self.clips.is_empty() {
            return bad("no clips".into());
        }
        if self.codecs.is_empty() {
            return bad("no codecs".into());
        }
        let mut names = std::collections::BTreeSet::new();
        let mut ids = std::collections::BTreeSet::new();
        for c in &self.clips {
            if !names.insert(&c.name) || !ids.insert(c.clip_id) {
                return bad(format!("duplicate clip name or id: {} ({})", c.name, c.clip_id));
            }
            match (&c.path, &c.synthetic) {
                (Some(_), None) => {}
                (None, Some(s)) => {
                    s.spec()?;
                }
                _ => return bad(format!("clip {} needs exactly one of path or synthetic", c.name)),
            }
        }
        let mut codec_names = std::collections::BTreeSet::new();
        for c in &self.codecs {
            if !codec_names.insert(&c.name) {
                return bad(format!("duplicate codec {}", c.name));
            }
            c.resolve()?;
        }
        if !codec_names.contains(&self.reference_codec) {
            return bad(format!("reference codec {} is not declared", self.reference_codec));
        }
        for g in &self.gop_modes {
            g.validate()?;
        }
        if self.gop_modes.is_empty() {
            return bad("gop_modes is empty".into());
        }
        if self.channels.is_empty() {
            return bad("no channels".into());
        }
        for ch in &self.channels {
            if ch != DIRECT && !self.channel_profiles.contains_key(ch) {
                return bad(format!("channel profile {ch} is not declared"));
            }
        }
        for (name, p) in &self.channel_profiles {
            if name == DIRECT {
                return bad("`direct` is reserved".into());
            }
            p.validate()?;
        }
        let mut runner_names = std::collections::BTreeSet::new();
        for r in &self.runners {
            if r.name == "psnr" || !runner_names.insert(&r.name) {
                return bad(format!("duplicate runner {}", r.name));
            }
            if r.min.partial_cmp(&r.max) != Some(std::cmp::Ordering::Less) {
                return bad(format!("runner {} has empty range", r.name));
            }
        }
        if self.metric_names().is_empty() {
            return bad("no metrics: enable psnr or declare a runner".into());
        }
        match (&self.ladder.rate_params, &self.ladder.jnd) {
            (Some(_), Some(_)) => return bad("ladder has both rate_params and jnd".into()),
            (None, None) if self.codecs.iter().any(|c| c.rate_params.is_none()) => {
                return bad("ladder needs rate_params or jnd".into())
            }
            _ => {}
        }
        if let Some(j) = &self.ladder.jnd {
            j.params().validate()?;
            if !self.metric_names().contains(&j.metric) {
                return bad(format!("JND metric {} is not scored", j.metric));
            }
        }
        if !(self.threshold.is_finite()) {
            return bad("threshold must be finite".into());
        }
        Ok(())
    }

    /// SHA-256 over the canonical JSON form, excluding the worker count.
    pub fn hash(&self) -> String {
        let mut canonical = self.clone();
        canonical.workers = None;
        let bytes = serde_json::to_vec(&canonical).expect("manifest serializes");
        hex::encode(Sha256::digest(&bytes))
    }

    /// Codec configurations to run: one per GOP mode for hybrid codecs, one
    /// for each GOP-free codec.
    pub fn codec_configs(&self) -> Result<Vec<(CodecConfig, Option<Vec<RateParam>>)>> {
        let mut out = Vec::new();
        for entry in &self.codecs {
            let base = entry.resolve()?;
            if base.is_gop_free() {
                out.push((base, entry.rate_params.clone()));
            } else {
                for g in &self.gop_modes {
                    out.push((base.with_gop(Some(*g)), entry.rate_params.clone()));
                }
            }
        }
        Ok(out)
    }
}
