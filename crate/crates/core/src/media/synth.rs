//! Desk-scale synthetic test clips.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{FrameBuffer, FrameFormat, VideoSpec};
use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SynthKind {
    /// Static diagonal ramp.
    Gradient,
    /// Horizontally periodic pattern with a bright bar, translating 2 px per
    /// frame to the right (wrapping).
    MovingBar,
    /// Independent uniform samples per frame.
    Noise,
    /// Seeded glyph grid on saturated chroma bands, scrolling up 1 px per frame.
    TextLike,
}

impl FromStr for SynthKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gradient" => Ok(SynthKind::Gradient),
            "moving_bar" | "moving-bar" => Ok(SynthKind::MovingBar),
            "noise" => Ok(SynthKind::Noise),
            "text_like" | "text-like" => Ok(SynthKind::TextLike),
            _ => Err(Error::Config(format!("unknown synthetic clip kind `{s}`"))),
        }
    }
}

impl fmt::Display for SynthKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SynthKind::Gradient => "gradient",
            SynthKind::MovingBar => "moving_bar",
            SynthKind::Noise => "noise",
            SynthKind::TextLike => "text_like",
        })
    }
}

pub const BAR_SPEED: usize = 2;

pub fn generate_synthetic_clip(kind: SynthKind, spec: &VideoSpec, seed: u64) -> Result<Vec<FrameBuffer>> {
    spec.validate()?;
    let format = spec.format();
    let frames = match kind {
        SynthKind::Gradient => {
            let f = gradient(format);
            vec![f; spec.frame_count]
        }
        SynthKind::MovingBar => (0..spec.frame_count).map(|t| moving_bar(format, t)).collect(),
        SynthKind::Noise => (0..spec.frame_count).map(|t| noise(format, seed, t)).collect(),
        SynthKind::TextLike => {
            let glyphs = GlyphSheet::new(format, seed);
            (0..spec.frame_count).map(|t| glyphs.render(format, t)).collect()
        }
    };
    Ok(frames)
}

fn plane_from_fn(format: FrameFormat, p: usize, f: impl Fn(usize, usize) -> f64) -> Vec<u16> {
    let (w, h) = format.plane_dims(p);
    let max = format.max_value() as f64;
    let mut out = Vec::with_capacity(w * h);
    for y in 0..h {
        for x in 0..w {
            out.push((f(x, y).clamp(0.0, 1.0) * max).round() as u16);
        }
    }
    out
}

fn ramp(i: usize, n: usize) -> f64 {
    if n <= 1 {
        0.0
    } else {
        i as f64 / (n - 1) as f64
    }
}

fn gradient(format: FrameFormat) -> FrameBuffer {
    let planes = [0, 1, 2].map(|p| {
        let (w, h) = format.plane_dims(p);
        match p {
            0 => plane_from_fn(format, p, |x, y| 0.5 * (ramp(x, w) + ramp(y, h))),
            1 => plane_from_fn(format, p, |x, _| 0.25 + 0.5 * ramp(x, w)),
            _ => plane_from_fn(format, p, |_, y| 0.75 - 0.5 * ramp(y, h)),
        }
    });
    FrameBuffer::from_planes(format, planes).expect("generated planes match format")
}

/// Unit-period triangle wave.
fn triangle(u: f64) -> f64 {
    let f = u.rem_euclid(1.0);
    1.0 - (2.0 * f - 1.0).abs()
}

fn moving_bar(format: FrameFormat, t: usize) -> FrameBuffer {
    let width = format.width;
    let bar = (width / 8).max(2);
    let shift = BAR_SPEED * t;
    let planes = [0, 1, 2].map(|p| {
        let (w, h) = format.plane_dims(p);
        let scale = width / w;
        plane_from_fn(format, p, |x, y| {
            // luma-grid column of this sample, translated back to frame 0
            let u = (x * scale + width - shift % width) % width;
            let on_bar = u < bar;
            match p {
                0 if on_bar => 0.92,
                0 => 0.15 + 0.45 * triangle(u as f64 / width as f64) + 0.25 * ramp(y, h),
                1 if on_bar => 0.5,
                1 => 0.35 + 0.3 * triangle(2.0 * u as f64 / width as f64),
                _ if on_bar => 0.5,
                _ => 0.4 + 0.2 * ramp(y, h),
            }
        })
    });
    FrameBuffer::from_planes(format, planes).expect("generated planes match format")
}

fn noise(format: FrameFormat, seed: u64, t: usize) -> FrameBuffer {
    let mut rng = rng::substream(seed, &[rng::label_key("synth-noise"), t as u64]);
    let max = format.max_value();
    let planes = [0, 1, 2].map(|p| (0..format.plane_len(p)).map(|_| rng.random_range(0..=max)).collect());
    FrameBuffer::from_planes(format, planes).expect("generated planes match format")
}

const CELL_W: usize = 8;
const CELL_H: usize = 12;

struct GlyphSheet {
    /// 5×7 bitmaps, one per cell of a tall virtual page.
    cells: Vec<Option<[u8; 7]>>,
    cols: usize,
    rows: usize,
}

impl GlyphSheet {
    fn new(format: FrameFormat, seed: u64) -> Self {
        let mut rng = rng::substream(seed, &[rng::label_key("synth-text")]);
        let cols = format.width.div_ceil(CELL_W);
        let rows = format.height.div_ceil(CELL_H) * 2;
        let cells = (0..cols * rows)
            .map(|_| {
                if rng.random_bool(0.2) {
                    None
                } else {
                    let mut g = [0u8; 7];
                    g.iter_mut().for_each(|r| *r = rng.random_range(0..32u8));
                    Some(g)
                }
            })
            .collect();
        GlyphSheet { cells, cols, rows }
    }

    fn ink(&self, x: usize, y: usize) -> bool {
        let (cx, cy) = (x / CELL_W, (y / CELL_H) % self.rows);
        let (gx, gy) = (x % CELL_W, y % CELL_H);
        if !(1..6).contains(&gx) || !(2..9).contains(&gy) {
            return false;
        }
        match self.cells[cy * self.cols + cx] {
            Some(g) => g[gy - 2] >> (gx - 1) & 1 == 1,
            None => false,
        }
    }

    fn render(&self, format: FrameFormat, t: usize) -> FrameBuffer {
        let planes = [0, 1, 2].map(|p| {
            let (w, _) = format.plane_dims(p);
            let scale = format.width / w;
            plane_from_fn(format, p, |x, y| {
                let (lx, ly) = (x * scale, y * scale + t);
                let band = (ly / (CELL_H * 3)) % 3;
                match p {
                    0 if self.ink(lx, ly) => 0.95,
                    0 => 0.1,
                    1 => [0.9, 0.15, 0.5][band],
                    _ => [0.2, 0.85, 0.9][band],
                }
            })
        });
        FrameBuffer::from_planes(format, planes).expect("generated planes match format")
    }
}
