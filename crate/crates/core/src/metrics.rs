//! Quality scoring: native luma PSNR, external metric runners and the
//! capture-chain noise floor.
//!
//! All pooling is the arithmetic mean of per-frame scores. A zero-MSE frame
//! scores [`PSNR_CAP`] and PSNR never exceeds it, which keeps pooled means
//! finite.

use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::marker::MarkerGeometry;
use crate::media::{convert_format, Chroma, ClipDescriptor, FrameBuffer, Rect, TargetFormat};
use crate::shell;

pub const PSNR_CAP: f64 = 99.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RegionMask {
    #[default]
    Full,
    /// Everything except the four marker rectangles.
    ExcludeMarkers { geometry: MarkerGeometry },
    Roi { rect: Rect },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Pooling {
    #[default]
    ArithmeticMean,
}

impl Pooling {
    pub fn pool(&self, scores: &[f64]) -> f64 {
        match self {
            Pooling::ArithmeticMean => scores.iter().sum::<f64>() / scores.len() as f64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QualityRecord {
    pub metric_name: String,
    pub per_frame: Vec<f64>,
    pub pooled: f64,
    pub pooling: Pooling,
    /// Reference and distorted clips, when the scores came from stored clips.
    #[serde(default)]
    pub pair: Option<(ClipDescriptor, ClipDescriptor)>,
    pub region_mask: RegionMask,
}

impl QualityRecord {
    pub fn new(metric_name: impl Into<String>, per_frame: Vec<f64>, region_mask: RegionMask) -> Result<Self> {
        if per_frame.is_empty() {
            return Err(Error::EmptyInput("no per-frame scores".into()));
        }
        let pooling = Pooling::ArithmeticMean;
        Ok(QualityRecord {
            metric_name: metric_name.into(),
            pooled: pooling.pool(&per_frame),
            per_frame,
            pooling,
            pair: None,
            region_mask,
        })
    }

    pub fn with_pair(mut self, reference: ClipDescriptor, distorted: ClipDescriptor) -> Self {
        self.pair = Some((reference, distorted));
        self
    }

    /// Recompute the pooled value from `per_frame`.
    pub fn recomputed_pool(&self) -> f64 {
        self.pooling.pool(&self.per_frame)
    }
}

/// Luma sample rectangles that contribute to a masked comparison.
fn mask_accepts(mask: &RegionMask, width: usize, height: usize) -> Result<Box<dyn Fn(usize, usize) -> bool + Sync>> {
    Ok(match *mask {
        RegionMask::Full => Box::new(|_, _| true),
        RegionMask::Roi { rect } => {
            rect.check_within(width, height)?;
            Box::new(move |x, y| rect.contains(x, y))
        }
        RegionMask::ExcludeMarkers { geometry } => {
            let rects = geometry.corners(width, height)?;
            Box::new(move |x, y| !rects.iter().any(|r| r.contains(x, y)))
        }
    })
}

fn psnr_from_mse(mse: f64, peak: f64) -> f64 {
    if mse == 0.0 {
        PSNR_CAP
    } else {
        (10.0 * (peak * peak / mse).log10()).min(PSNR_CAP)
    }
}

/// Luma PSNR over the masked region. Both frames must share one format.
pub fn psnr_frame(reference: &FrameBuffer, distorted: &FrameBuffer, mask: &RegionMask) -> Result<f64> {
    if reference.format() != distorted.format() {
        return Err(Error::Dimension(format!(
            "reference {:?} vs distorted {:?}",
            reference.format(),
            distorted.format()
        )));
    }
    let (w, h) = (reference.width(), reference.height());
    let accept = mask_accepts(mask, w, h)?;
    let (a, b) = (reference.luma(), distorted.luma());
    let mut sse = 0u64;
    let mut count = 0u64;
    for y in 0..h {
        let row = y * w;
        if matches!(mask, RegionMask::Full) {
            sse += a[row..row + w]
                .iter()
                .zip(&b[row..row + w])
                .map(|(&p, &q)| {
                    let d = p as i64 - q as i64;
                    (d * d) as u64
                })
                .sum::<u64>();
            count += w as u64;
            continue;
        }
        for x in 0..w {
            if accept(x, y) {
                let d = a[row + x] as i64 - b[row + x] as i64;
                sse += (d * d) as u64;
                count += 1;
            }
        }
    }
    if count == 0 {
        return Err(Error::Geometry("mask selects no samples".into()));
    }
    let peak = reference.format().max_value() as f64;
    Ok(psnr_from_mse(sse as f64 / count as f64, peak))
}

pub fn psnr_sequence<'a, I>(pairs: I, mask: &RegionMask) -> Result<QualityRecord>
where
    I: IntoIterator<Item = (&'a FrameBuffer, &'a FrameBuffer)>,
{
    let pairs: Vec<_> = pairs.into_iter().collect();
    if pairs.is_empty() {
        return Err(Error::EmptyInput("psnr over zero frame pairs".into()));
    }
    let scores = pairs
        .par_iter()
        .map(|(r, d)| psnr_frame(r, d, mask))
        .collect::<Result<Vec<_>>>()?;
    QualityRecord::new("psnr", scores, *mask)
}

/// Convert both frames to 4:4:4 at the larger of the two bit depths.
pub fn to_common_format(a: &FrameBuffer, b: &FrameBuffer) -> Result<(FrameBuffer, FrameBuffer)> {
    let depth = a.format().bit_depth.max(b.format().bit_depth);
    let target = TargetFormat::new(Chroma::Yuv444, depth);
    Ok((convert_format(a, target)?, convert_format(b, target)?))
}

/// External metric declaration: a command template with `{ref}`, `{dist}` and
/// `{out}` placeholders plus the valid score range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunnerDecl {
    pub name: String,
    pub command: String,
    pub min: f64,
    pub max: f64,
}

impl RunnerDecl {
    pub fn new(name: impl Into<String>, command: impl Into<String>, min: f64, max: f64) -> Self {
        RunnerDecl { name: name.into(), command: command.into(), min, max }
    }

    /// Conventional range for a known metric name.
    pub fn default_range(name: &str) -> Option<(f64, f64)> {
        match name {
            "vmaf" => Some((0.0, 100.0)),
            "cvvdp" => Some((0.0, 10.0)),
            _ => None,
        }
    }
}

/// Wire format written by a runner into `{out}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunnerOutput {
    #[serde(default)]
    pub metric: Option<String>,
    pub frames: Vec<FrameScore>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrameScore {
    pub score: f64,
}

impl RunnerOutput {
    pub fn new(metric: &str, scores: &[f64]) -> Self {
        RunnerOutput {
            metric: Some(metric.to_string()),
            frames: scores.iter().map(|&score| FrameScore { score }).collect(),
        }
    }
}

pub fn run_external_metric(runner: &RunnerDecl, ref_path: &Path, dist_path: &Path) -> Result<QualityRecord> {
    let out = tempfile::Builder::new()
        .prefix(&format!("{}-", runner.name))
        .suffix(".json")
        .tempfile()
        .map_err(|e| Error::io(std::env::temp_dir(), e))?;
    let command = shell::render(
        &runner.command,
        &[
            ("ref", &ref_path.to_string_lossy()),
            ("dist", &dist_path.to_string_lossy()),
            ("out", &out.path().to_string_lossy()),
        ],
        &["ref", "dist", "out"],
    )?;
    let output = shell::run(&command)?;
    if !output.status.success() {
        return Err(Error::Runner { metric: runner.name.clone(), stderr: shell::tail(&output.stderr) });
    }
    let text = fs::read_to_string(out.path()).map_err(|e| Error::io(out.path(), e))?;
    let parsed: RunnerOutput = serde_json::from_str(&text)?;
    let scores: Vec<f64> = parsed.frames.iter().map(|f| f.score).collect();
    if let Some(&bad) = scores.iter().find(|s| !(runner.min..=runner.max).contains(*s)) {
        return Err(Error::ScoreRange { metric: runner.name.clone(), score: bad, min: runner.min, max: runner.max });
    }
    QualityRecord::new(runner.name.clone(), scores, RegionMask::Full)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseFloor {
    pub max: f64,
    pub min: f64,
    pub range: f64,
    pub mean: f64,
    /// Pooled PSNR of each capture.
    pub scores: Vec<f64>,
}

impl NoiseFloor {
    pub fn from_scores(scores: Vec<f64>) -> Result<Self> {
        if scores.is_empty() {
            return Err(Error::EmptyInput("noise floor over zero captures".into()));
        }
        let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let min = scores.iter().cloned().fold(f64::INFINITY, f64::min);
        let mean = scores.iter().sum::<f64>() / scores.len() as f64;
        Ok(NoiseFloor { max, min, range: max - min, mean, scores })
    }
}

/// PSNR of repeated captures of one clip against a reference capture. Inputs
/// are frame-aligned already.
pub fn noise_floor(captures: &[Vec<FrameBuffer>], reference: &[FrameBuffer], mask: &RegionMask) -> Result<NoiseFloor> {
    if captures.len() < 2 {
        return Err(Error::EmptyInput(format!("noise floor needs at least 2 captures, got {}", captures.len())));
    }
    let scores = captures
        .iter()
        .enumerate()
        .map(|(i, cap)| {
            if cap.len() != reference.len() {
                return Err(Error::Dimension(format!(
                    "capture {i} has {} frames, reference has {}",
                    cap.len(),
                    reference.len()
                )));
            }
            Ok(psnr_sequence(reference.iter().zip(cap), mask)?.pooled)
        })
        .collect::<Result<Vec<_>>>()?;
    NoiseFloor::from_scores(scores)
}
