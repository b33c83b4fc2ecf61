//! Simulated display + camera capture chain.
//!
//! Stages run in a fixed order: ROI crop, display-grid resample, color
//! transform, additive Gaussian noise, temporal jitter. Each frame draws its
//! noise from a substream keyed by the seed and its source index, so spatial
//! stages are independent per frame and reproducible.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::media::{convert_format, Chroma, FrameBuffer, FrameFormat, Rational, Rect, TargetFormat};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Reconstruction {
    #[default]
    Nearest,
    Bilinear,
}

/// Resample to a coarser (or finer) display grid and back to the camera grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DisplayGrid {
    /// Display samples per source sample along each axis.
    pub scale: Rational,
    #[serde(default)]
    pub reconstruction: Reconstruction,
}

/// 3×3 matrix on (Y, Cb−½, Cr−½) in unit range, followed by per-channel gamma.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ColorTransform {
    pub matrix: [[f64; 3]; 3],
    pub gamma: [f64; 3],
}

impl Default for ColorTransform {
    fn default() -> Self {
        ColorTransform {
            matrix: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
            gamma: [1.0; 3],
        }
    }
}

impl ColorTransform {
    pub fn is_identity(&self) -> bool {
        *self == ColorTransform::default()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Jitter {
    #[serde(default)]
    pub duplicate_prob: f64,
    #[serde(default)]
    pub skip_prob: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct ChannelConfig {
    #[serde(default)]
    pub resample: Option<DisplayGrid>,
    #[serde(default)]
    pub color: ColorTransform,
    /// Standard deviation in source sample units.
    #[serde(default)]
    pub noise_sigma: f64,
    #[serde(default)]
    pub jitter: Option<Jitter>,
    #[serde(default)]
    pub seed: u64,
    /// Zoom-mode crop, applied first.
    #[serde(default)]
    pub roi: Option<Rect>,
}

impl ChannelConfig {
    pub fn identity() -> Self {
        ChannelConfig::default()
    }

    pub fn with_noise(sigma: f64, seed: u64) -> Self {
        ChannelConfig { noise_sigma: sigma, seed, ..Default::default() }
    }

    pub fn is_identity(&self) -> bool {
        self.resample.is_none()
            && self.color.is_identity()
            && self.noise_sigma == 0.0
            && self.jitter.is_none()
            && self.roi.is_none()
    }

    /// Same profile with an independent random substream for one capture.
    pub fn for_capture(&self, capture_id: u64) -> Self {
        ChannelConfig { seed: rng::derive_seed(self.seed, &[capture_id]), ..self.clone() }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.noise_sigma.is_finite() || self.noise_sigma < 0.0 {
            return Err(Error::Config(format!("noise sigma {}", self.noise_sigma)));
        }
        if self.color.gamma.iter().any(|g| !g.is_finite() || *g <= 0.0) {
            return Err(Error::Config(format!("gamma {:?}", self.color.gamma)));
        }
        if let Some(j) = self.jitter {
            let ok = |p: f64| (0.0..1.0).contains(&p);
            if !ok(j.duplicate_prob) || !ok(j.skip_prob) || j.duplicate_prob + j.skip_prob >= 1.0 {
                return Err(Error::Config(format!(
                    "jitter probabilities duplicate {} + skip {} must lie in [0, 1)",
                    j.duplicate_prob, j.skip_prob
                )));
            }
        }
        Ok(())
    }
}

/// Channel output plus, for each output frame, the input index it shows.
#[derive(Debug, Clone, PartialEq)]
pub struct Capture {
    pub frames: Vec<FrameBuffer>,
    pub source_indices: Vec<usize>,
}

pub fn apply_channel(frames: &[FrameBuffer], cfg: &ChannelConfig) -> Result<Vec<FrameBuffer>> {
    Ok(apply_channel_traced(frames, cfg)?.frames)
}

pub fn apply_channel_traced(frames: &[FrameBuffer], cfg: &ChannelConfig) -> Result<Capture> {
    cfg.validate()?;
    let first = frames.first().ok_or_else(|| Error::EmptyInput("channel input has no frames".into()))?;
    let format = first.format();
    if let Some(i) = frames.iter().position(|f| f.format() != format) {
        return Err(Error::Dimension(format!("frame {i} differs in format from frame 0")));
    }
    if let Some(roi) = cfg.roi {
        roi.check_within(format.width, format.height)?;
    }
    if cfg.is_identity() {
        return Ok(Capture { frames: frames.to_vec(), source_indices: (0..frames.len()).collect() });
    }

    let spatial: Vec<FrameBuffer> = frames
        .par_iter()
        .enumerate()
        .map(|(i, f)| spatial_stages(f, i, cfg))
        .collect::<Result<_>>()?;

    let source_indices = match cfg.jitter {
        Some(j) => jitter_trace(frames.len(), j, cfg.seed),
        None => (0..frames.len()).collect(),
    };
    let frames = source_indices.iter().map(|&i| spatial[i].clone()).collect();
    Ok(Capture { frames, source_indices })
}

fn spatial_stages(frame: &FrameBuffer, index: usize, cfg: &ChannelConfig) -> Result<FrameBuffer> {
    let mut f = match cfg.roi {
        Some(roi) => frame.crop(roi)?,
        None => frame.clone(),
    };
    if let Some(grid) = cfg.resample {
        f = resample(&f, grid)?;
    }
    if !cfg.color.is_identity() {
        f = color_transform(&f, &cfg.color)?;
    }
    if cfg.noise_sigma > 0.0 {
        add_noise(&mut f, cfg.noise_sigma, cfg.seed, index);
    }
    Ok(f)
}

/// One uniform draw per source frame: skip, show twice, or show once.
fn jitter_trace(n: usize, j: Jitter, seed: u64) -> Vec<usize> {
    let mut rng = rng::substream(seed, &[rng::label_key("jitter")]);
    let mut out = Vec::with_capacity(n + n / 8);
    for i in 0..n {
        let u: f64 = rng.random();
        if u < j.skip_prob {
            continue;
        }
        out.push(i);
        if u < j.skip_prob + j.duplicate_prob {
            out.push(i);
        }
    }
    out
}

fn resample(frame: &FrameBuffer, grid: DisplayGrid) -> Result<FrameBuffer> {
    let format = frame.format();
    let scale = grid.scale.as_f64();
    let planes = [0, 1, 2].map(|p| {
        let (w, h) = format.plane_dims(p);
        let dw = ((w as f64 * scale).round() as usize).max(1);
        let dh = ((h as f64 * scale).round() as usize).max(1);
        let display = resize(frame.plane(p), w, h, dw, dh, grid.reconstruction);
        let back = resize(&display, dw, dh, w, h, grid.reconstruction);
        let max = format.max_value() as f64;
        back.into_iter().map(|v| v.round().clamp(0.0, max) as u16).collect()
    });
    FrameBuffer::from_planes(format, planes)
}

fn resize<T: Copy + Into<f64>>(src: &[T], w: usize, h: usize, ow: usize, oh: usize, rec: Reconstruction) -> Vec<f64> {
    let at = |x: usize, y: usize| -> f64 { src[y * w + x].into() };
    let mut out = Vec::with_capacity(ow * oh);
    let (fx, fy) = (w as f64 / ow as f64, h as f64 / oh as f64);
    for oy in 0..oh {
        for ox in 0..ow {
            let sx = (ox as f64 + 0.5) * fx;
            let sy = (oy as f64 + 0.5) * fy;
            let v = match rec {
                Reconstruction::Nearest => {
                    at((sx.floor() as usize).min(w - 1), (sy.floor() as usize).min(h - 1))
                }
                Reconstruction::Bilinear => {
                    let (px, py) = ((sx - 0.5).clamp(0.0, (w - 1) as f64), (sy - 0.5).clamp(0.0, (h - 1) as f64));
                    let (x0, y0) = (px.floor() as usize, py.floor() as usize);
                    let (x1, y1) = ((x0 + 1).min(w - 1), (y0 + 1).min(h - 1));
                    let (tx, ty) = (px - x0 as f64, py - y0 as f64);
                    let top = at(x0, y0) * (1.0 - tx) + at(x1, y0) * tx;
                    let bot = at(x0, y1) * (1.0 - tx) + at(x1, y1) * tx;
                    top * (1.0 - ty) + bot * ty
                }
            };
            out.push(v);
        }
    }
    out
}

fn color_transform(frame: &FrameBuffer, ct: &ColorTransform) -> Result<FrameBuffer> {
    let format = frame.format();
    let full = convert_format(frame, TargetFormat::new(Chroma::Yuv444, format.bit_depth))?;
    let max = format.max_value() as f64;
    let n = full.plane(0).len();
    let mut planes: [Vec<u16>; 3] = [vec![0; n], vec![0; n], vec![0; n]];
    for i in 0..n {
        let v = [
            full.plane(0)[i] as f64 / max,
            full.plane(1)[i] as f64 / max - 0.5,
            full.plane(2)[i] as f64 / max - 0.5,
        ];
        for (c, plane) in planes.iter_mut().enumerate() {
            let row = ct.matrix[c];
            let mut o = row[0] * v[0] + row[1] * v[1] + row[2] * v[2];
            if c > 0 {
                o += 0.5;
            }
            let o = o.clamp(0.0, 1.0).powf(ct.gamma[c]);
            plane[i] = (o * max).round() as u16;
        }
    }
    let out = FrameBuffer::from_planes(FrameFormat { chroma: Chroma::Yuv444, ..format }, planes)?;
    convert_format(&out, TargetFormat::new(format.chroma, format.bit_depth))
}

fn add_noise(frame: &mut FrameBuffer, sigma: f64, seed: u64, index: usize) {
    let mut rng = rng::substream(seed, &[rng::label_key("noise"), index as u64]);
    let normal = Normal::new(0.0, sigma).expect("sigma validated finite and non-negative");
    let max = frame.format().max_value() as f64;
    for p in 0..3 {
        for v in frame.plane_mut(p) {
            let n: f64 = normal.sample(&mut rng);
            *v = (*v as f64 + n).round().clamp(0.0, max) as u16;
        }
    }
}

/// Noise standard deviation whose expected PSNR against the clean input is
/// `target_psnr` dB: `σ = (2^depth − 1) · 10^(−psnr/20)`.
pub fn calibrate_noise_for_floor(target_psnr: f64, bit_depth: u8) -> Result<f64> {
    if target_psnr <= 0.0 || !target_psnr.is_finite() {
        return Err(Error::Config(format!("target PSNR {target_psnr} must be positive")));
    }
    if !matches!(bit_depth, 8 | 10 | 12) {
        return Err(Error::UnsupportedFormat(format!("bit depth {bit_depth}")));
    }
    let peak = ((1u32 << bit_depth) - 1) as f64;
    Ok(peak * 10f64.powf(-target_psnr / 20.0))
}
