//! Rate-quality curves, threshold bitrates and savings tables.

mod report;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::codec::{GopMode, LadderPoint};
use crate::error::{Error, Result};
use crate::metrics::QualityRecord;

pub use report::{emit_report, render_svg, write_csv, ReportFiles, CSV_HEADER};

/// Default quality threshold for savings tables, on the VMAF scale.
pub const DEFAULT_THRESHOLD: f64 = 90.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub bitrate_mbps: f64,
    pub quality: f64,
}

/// Pareto-filtered rate-quality curve: bitrate strictly increasing and
/// quality strictly increasing along `points`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateQualityCurve {
    pub codec_name: String,
    pub clip_name: String,
    /// `None` for GOP-free codecs.
    pub gop: Option<GopMode>,
    pub metric_name: String,
    pub points: Vec<CurvePoint>,
}

impl RateQualityCurve {
    pub fn from_points(
        codec_name: impl Into<String>,
        clip_name: impl Into<String>,
        gop: Option<GopMode>,
        metric_name: impl Into<String>,
        points: &[CurvePoint],
    ) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::EmptyInput("curve has no points".into()));
        }
        if let Some(p) = points.iter().find(|p| !(p.bitrate_mbps > 0.0 && p.bitrate_mbps.is_finite() && p.quality.is_finite())) {
            return Err(Error::Consistency(format!("invalid curve point {p:?}")));
        }
        Ok(RateQualityCurve {
            codec_name: codec_name.into(),
            clip_name: clip_name.into(),
            gop,
            metric_name: metric_name.into(),
            points: pareto_filter(points),
        })
    }

    pub fn gop_label(&self) -> String {
        gop_label(self.gop)
    }
}

pub(crate) fn gop_label(gop: Option<GopMode>) -> String {
    gop.map_or_else(|| "n/a".to_string(), |g| g.to_string())
}

/// Keep the non-dominated points, sorted by bitrate.
pub fn pareto_filter(points: &[CurvePoint]) -> Vec<CurvePoint> {
    let mut sorted = points.to_vec();
    sorted.sort_by(|a, b| a.bitrate_mbps.total_cmp(&b.bitrate_mbps).then(b.quality.total_cmp(&a.quality)));
    let mut out: Vec<CurvePoint> = Vec::with_capacity(sorted.len());
    for p in sorted {
        if out.last().is_none_or(|best| p.quality > best.quality) {
            out.push(p);
        }
    }
    out
}

/// Assemble one curve from encodes of a single codec, clip, GOP and metric.
pub fn build_curve(records: &[(LadderPoint, QualityRecord)]) -> Result<RateQualityCurve> {
    let (first, first_q) = records.first().ok_or_else(|| Error::EmptyInput("no records for curve".into()))?;
    for (lp, q) in records {
        if q.metric_name != first_q.metric_name {
            return Err(Error::Consistency(format!("mixed metrics {} and {}", first_q.metric_name, q.metric_name)));
        }
        if lp.config.codec_name != first.config.codec_name
            || lp.config.gop != first.config.gop
            || lp.decoded_clip.name != first.decoded_clip.name
        {
            return Err(Error::Consistency(format!(
                "curve mixes {}/{}/{} with {}/{}/{}",
                first.config.codec_name,
                first.decoded_clip.name,
                first.config.gop_label(),
                lp.config.codec_name,
                lp.decoded_clip.name,
                lp.config.gop_label()
            )));
        }
    }
    let points: Vec<CurvePoint> =
        records.iter().map(|(lp, q)| CurvePoint { bitrate_mbps: lp.bitrate_mbps, quality: q.pooled }).collect();
    RateQualityCurve::from_points(
        first.config.codec_name.clone(),
        first.decoded_clip.name.clone(),
        first.config.gop,
        first_q.metric_name.clone(),
        &points,
    )
}

/// Lowest bitrate reaching `threshold`, interpolating quality linearly in
/// log10(bitrate). `None` if no point reaches it.
pub fn min_bitrate_at_quality(curve: &RateQualityCurve, threshold: f64) -> Option<f64> {
    let pts = &curve.points;
    let i = pts.iter().position(|p| p.quality >= threshold)?;
    let hit = pts[i];
    if i == 0 || hit.quality == threshold {
        return Some(hit.bitrate_mbps);
    }
    let lo = pts[i - 1];
    let t = (threshold - lo.quality) / (hit.quality - lo.quality);
    let (l0, l1) = (lo.bitrate_mbps.log10(), hit.bitrate_mbps.log10());
    Some(10f64.powf(l0 + t * (l1 - l0)))
}

/// `reference_min / candidate_min`.
pub fn savings_ratio(reference_min: f64, candidate_min: f64) -> Result<f64> {
    if !(reference_min > 0.0 && candidate_min > 0.0) {
        return Err(Error::Consistency(format!("bitrates must be positive: {reference_min}, {candidate_min}")));
    }
    Ok(reference_min / candidate_min)
}

/// Arithmetic mean of the available ratios.
pub fn average_ratios(ratios: impl IntoIterator<Item = Option<f64>>) -> Option<f64> {
    let (sum, n) = ratios.into_iter().flatten().fold((0.0, 0usize), |(s, n), r| (s + r, n + 1));
    (n > 0).then(|| sum / n as f64)
}

/// Minimum bitrate of one codec on one clip; `None` when unreachable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BitrateCell {
    pub codec: String,
    pub gop: String,
    pub clip: String,
    pub min_bitrate_mbps: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SavingsRow {
    pub codec: String,
    pub gop: String,
    pub clip: String,
    pub min_bitrate_mbps: Option<f64>,
    pub ratio: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SavingsAverage {
    pub codec: String,
    pub gop: String,
    pub average: Option<f64>,
    pub available: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SavingsTable {
    pub reference_codec: String,
    pub metric_name: String,
    pub threshold: f64,
    /// Clips on which the reference reaches the threshold, with its bitrate.
    pub reference_bitrates: BTreeMap<String, f64>,
    pub rows: Vec<SavingsRow>,
    pub averages: Vec<SavingsAverage>,
    pub warnings: Vec<String>,
}

/// Tabulate savings from per-cell minimum bitrates. Rows keep the order of
/// first appearance of each codec and clip.
pub fn tabulate_savings(
    cells: &[BitrateCell],
    reference_codec: &str,
    metric_name: &str,
    threshold: f64,
) -> Result<SavingsTable> {
    let refs: Vec<&BitrateCell> = cells.iter().filter(|c| c.codec == reference_codec).collect();
    if refs.is_empty() {
        return Err(Error::Consistency(format!("reference codec {reference_codec} has no results")));
    }
    let mut clip_order: Vec<&str> = Vec::new();
    let mut codec_order: Vec<(&str, &str)> = Vec::new();
    for c in cells {
        if !clip_order.contains(&c.clip.as_str()) {
            clip_order.push(&c.clip);
        }
        if !codec_order.contains(&(c.codec.as_str(), c.gop.as_str())) {
            codec_order.push((&c.codec, &c.gop));
        }
    }

    let mut warnings = Vec::new();
    let mut reference_bitrates = BTreeMap::new();
    for clip in &clip_order {
        let on_clip: BTreeSet<Option<u64>> =
            refs.iter().filter(|c| c.clip == *clip).map(|c| c.min_bitrate_mbps.map(f64::to_bits)).collect();
        match on_clip.len() {
            0 => warnings.push(format!("clip {clip} excluded: no {reference_codec} result")),
            1 => match on_clip.into_iter().next().flatten() {
                Some(bits) => {
                    reference_bitrates.insert(clip.to_string(), f64::from_bits(bits));
                }
                None => warnings.push(format!("clip {clip} excluded: {reference_codec} does not reach {threshold}")),
            },
            _ => return Err(Error::Consistency(format!("conflicting {reference_codec} results on clip {clip}"))),
        }
    }

    let mut rows = Vec::new();
    let mut averages = Vec::new();
    for (codec, gop) in codec_order {
        let mut ratios = Vec::new();
        for clip in &clip_order {
            let Some(&reference) = reference_bitrates.get(*clip) else { continue };
            let Some(cell) = cells.iter().find(|c| c.codec == codec && c.gop == gop && c.clip == *clip) else {
                continue;
            };
            let ratio = match cell.min_bitrate_mbps {
                Some(b) => Some(savings_ratio(reference, b)?),
                None => None,
            };
            ratios.push(ratio);
            rows.push(SavingsRow {
                codec: codec.to_string(),
                gop: gop.to_string(),
                clip: clip.to_string(),
                min_bitrate_mbps: cell.min_bitrate_mbps,
                ratio,
            });
        }
        averages.push(SavingsAverage {
            codec: codec.to_string(),
            gop: gop.to_string(),
            available: ratios.iter().flatten().count(),
            average: average_ratios(ratios),
        });
    }
    Ok(SavingsTable {
        reference_codec: reference_codec.to_string(),
        metric_name: metric_name.to_string(),
        threshold,
        reference_bitrates,
        rows,
        averages,
        warnings,
    })
}

/// Savings of every curve's codec against `reference_codec` at `threshold`.
/// All curves must share one metric.
pub fn savings_table(curves: &[RateQualityCurve], reference_codec: &str, threshold: f64) -> Result<SavingsTable> {
    let first = curves.first().ok_or_else(|| Error::EmptyInput("no curves for savings table".into()))?;
    if let Some(c) = curves.iter().find(|c| c.metric_name != first.metric_name) {
        return Err(Error::Consistency(format!("mixed metrics {} and {}", first.metric_name, c.metric_name)));
    }
    let cells: Vec<BitrateCell> = curves
        .iter()
        .map(|c| BitrateCell {
            codec: c.codec_name.clone(),
            gop: c.gop_label(),
            clip: c.clip_name.clone(),
            min_bitrate_mbps: min_bitrate_at_quality(c, threshold),
        })
        .collect();
    tabulate_savings(&cells, reference_codec, &first.metric_name, threshold)
}
