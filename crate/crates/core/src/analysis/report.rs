//! CSV, JSON and SVG report emission.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::{RateQualityCurve, SavingsTable};
use crate::error::{Error, Result};

pub const CSV_HEADER: [&str; 7] = ["codec", "clip", "gop", "metric", "threshold", "min_bitrate_mbps", "savings_ratio"];

const PALETTE: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf"];

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ReportFiles {
    pub csv: PathBuf,
    pub json: PathBuf,
    pub svgs: Vec<PathBuf>,
}

fn fmt_opt(v: Option<f64>, precision: usize) -> String {
    v.map_or_else(|| "N/A".to_string(), |v| format!("{v:.precision$}"))
}

/// One row per table cell.
pub fn write_csv<W: std::io::Write>(writer: W, tables: &[SavingsTable]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let csv_err = |e: csv::Error| Error::Consistency(format!("csv: {e}"));
    w.write_record(CSV_HEADER).map_err(csv_err)?;
    for t in tables {
        for r in &t.rows {
            w.write_record([
                r.codec.as_str(),
                &r.clip,
                &r.gop,
                &t.metric_name,
                &format!("{}", t.threshold),
                &fmt_opt(r.min_bitrate_mbps, 4),
                &fmt_opt(r.ratio, 4),
            ])
            .map_err(csv_err)?;
        }
    }
    w.flush()?;
    Ok(())
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn file_token(s: &str) -> String {
    s.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' }).collect()
}

/// Rate-quality plot of several curves: log10 bitrate on x with a labeled
/// tick per decade, quality on y, one polyline per curve.
pub fn render_svg(title: &str, curves: &[&RateQualityCurve]) -> String {
    const W: f64 = 720.0;
    const H: f64 = 440.0;
    const LEFT: f64 = 70.0;
    const RIGHT: f64 = 190.0;
    const TOP: f64 = 40.0;
    const BOTTOM: f64 = 50.0;

    let all = curves.iter().flat_map(|c| c.points.iter());
    let (mut bmin, mut bmax, mut qmin, mut qmax) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
    for p in all {
        bmin = bmin.min(p.bitrate_mbps);
        bmax = bmax.max(p.bitrate_mbps);
        qmin = qmin.min(p.quality);
        qmax = qmax.max(p.quality);
    }
    let d0 = bmin.log10().floor() as i32;
    let d1 = (bmax.log10().ceil() as i32).max(d0 + 1);
    let qpad = ((qmax - qmin) * 0.05).max(0.5);
    let (qlo, qhi) = (qmin - qpad, qmax + qpad);
    let pw = W - LEFT - RIGHT;
    let ph = H - TOP - BOTTOM;
    let x = |b: f64| LEFT + (b.log10() - d0 as f64) / (d1 - d0) as f64 * pw;
    let y = |q: f64| TOP + (qhi - q) / (qhi - qlo) * ph;

    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">"#);
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{:.1}" y="24" font-family="sans-serif" font-size="15" text-anchor="middle">{}</text>"#, LEFT + pw / 2.0, xml_escape(title));
    let _ = writeln!(s, r#"<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#);
    for d in d0..=d1 {
        let xv = LEFT + (d - d0) as f64 / (d1 - d0) as f64 * pw;
        let _ = writeln!(s, r##"<line x1="{xv:.1}" y1="{TOP}" x2="{xv:.1}" y2="{:.1}" stroke="#ddd"/>"##, TOP + ph);
        let label = if d >= 0 { format!("{}", 10f64.powi(d)) } else { format!("{:.*}", (-d) as usize, 10f64.powi(d)) };
        let _ = writeln!(s, r#"<text x="{xv:.1}" y="{:.1}" font-family="sans-serif" font-size="11" text-anchor="middle">{label}</text>"#, TOP + ph + 16.0);
    }
    for k in 0..=4 {
        let q = qlo + (qhi - qlo) * k as f64 / 4.0;
        let yv = y(q);
        let _ = writeln!(s, r##"<line x1="{LEFT}" y1="{yv:.1}" x2="{:.1}" y2="{yv:.1}" stroke="#eee"/>"##, LEFT + pw);
        let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}" font-family="sans-serif" font-size="11" text-anchor="end">{q:.1}</text>"#, LEFT - 6.0, yv + 4.0);
    }
    let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}" font-family="sans-serif" font-size="12" text-anchor="middle">bitrate (Mb/s, log scale)</text>"#, LEFT + pw / 2.0, H - 12.0);
    let metric = curves.first().map_or("quality", |c| c.metric_name.as_str());
    let _ = writeln!(s, r#"<text x="16" y="{:.1}" font-family="sans-serif" font-size="12" text-anchor="middle" transform="rotate(-90 16 {:.1})">{}</text>"#, TOP + ph / 2.0, TOP + ph / 2.0, xml_escape(metric));

    for (i, c) in curves.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let coords: Vec<String> = c.points.iter().map(|p| format!("{:.2},{:.2}", x(p.bitrate_mbps), y(p.quality))).collect();
        let label = xml_escape(&format!("{} ({})", c.codec_name, c.gop_label()));
        let _ = writeln!(s, r#"<polyline data-curve="{label}" fill="none" stroke="{color}" stroke-width="2" points="{}"/>"#, coords.join(" "));
        for p in &c.points {
            let _ = writeln!(s, r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="{color}"/>"#, x(p.bitrate_mbps), y(p.quality));
        }
        let ly = TOP + 14.0 + 18.0 * i as f64;
        let lx = LEFT + pw + 12.0;
        let _ = writeln!(s, r#"<line x1="{lx:.1}" y1="{ly:.1}" x2="{:.1}" y2="{ly:.1}" stroke="{color}" stroke-width="2"/>"#, lx + 20.0);
        let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}" font-family="sans-serif" font-size="11">{label}</text>"#, lx + 26.0, ly + 4.0);
    }
    s.push_str("</svg>\n");
    s
}

#[derive(Serialize)]
struct ReportJson<'a> {
    curves: &'a [RateQualityCurve],
    tables: &'a [SavingsTable],
}

fn write_file(path: &Path, data: &[u8]) -> Result<()> {
    fs::write(path, data).map_err(|e| Error::io(path, e))
}

/// Write `savings.csv`, `report.json` and one SVG per clip and metric into
/// `out_dir`. Output depends only on the inputs.
pub fn emit_report(curves: &[RateQualityCurve], tables: &[SavingsTable], out_dir: &Path) -> Result<ReportFiles> {
    if curves.is_empty() {
        return Err(Error::EmptyInput("no curves to report".into()));
    }
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;

    let csv_path = out_dir.join("savings.csv");
    let mut buf = Vec::new();
    write_csv(&mut buf, tables)?;
    write_file(&csv_path, &buf)?;

    let json_path = out_dir.join("report.json");
    let mut json = serde_json::to_vec_pretty(&ReportJson { curves, tables })?;
    json.push(b'\n');
    write_file(&json_path, &json)?;

    let mut groups: BTreeMap<(&str, &str), Vec<&RateQualityCurve>> = BTreeMap::new();
    for c in curves {
        groups.entry((&c.clip_name, &c.metric_name)).or_default().push(c);
    }
    let mut svgs = Vec::new();
    for ((clip, metric), mut group) in groups {
        group.sort_by(|a, b| (&a.codec_name, a.gop_label()).cmp(&(&b.codec_name, b.gop_label())));
        let path = out_dir.join(format!("rq_{}_{}.svg", file_token(clip), file_token(metric)));
        write_file(&path, render_svg(&format!("{clip}: {metric}"), &group).as_bytes())?;
        svgs.push(path);
    }
    Ok(ReportFiles { csv: csv_path, json: json_path, svgs })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::{savings_table, CurvePoint};

    fn curve(codec: &str, pts: &[(f64, f64)]) -> RateQualityCurve {
        let p: Vec<CurvePoint> = pts.iter().map(|&(b, q)| CurvePoint { bitrate_mbps: b, quality: q }).collect();
        RateQualityCurve::from_points(codec, "clip", None, "vmaf", &p).unwrap()
    }

    #[test]
    fn two_codecs_one_clip() {
        let dir = tempfile::tempdir().unwrap();
        let curves = vec![curve("ref", &[(100.0, 92.0), (300.0, 97.0)]), curve("x", &[(5.0, 85.0), (20.0, 95.0)])];
        let table = savings_table(&curves, "ref", 90.0).unwrap();
        let files = emit_report(&curves, std::slice::from_ref(&table), dir.path()).unwrap();
        let csv = fs::read_to_string(&files.csv).unwrap();
        assert_eq!(csv.lines().count(), 3);
        assert_eq!(csv.lines().next().unwrap(), CSV_HEADER.join(","));
        assert_eq!(files.svgs.len(), 1);
        let svg = fs::read_to_string(&files.svgs[0]).unwrap();
        assert_eq!(svg.matches("<polyline").count(), 2);

        let again = tempfile::tempdir().unwrap();
        let files2 = emit_report(&curves, &[table], again.path()).unwrap();
        assert_eq!(fs::read(&files.csv).unwrap(), fs::read(&files2.csv).unwrap());
        assert_eq!(fs::read(&files.svgs[0]).unwrap(), fs::read(&files2.svgs[0]).unwrap());
    }

    #[test]
    fn na_cells_and_empty_input() {
        let curves = vec![curve("ref", &[(100.0, 92.0)]), curve("x", &[(5.0, 85.0)])];
        let table = savings_table(&curves, "ref", 90.0).unwrap();
        let mut buf = Vec::new();
        write_csv(&mut buf, &[table]).unwrap();
        assert!(String::from_utf8(buf).unwrap().contains("x,clip,n/a,vmaf,90,N/A,N/A"));
        assert!(emit_report(&[], &[], Path::new("/nonexistent")).is_err());
    }
}
