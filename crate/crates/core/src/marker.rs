//! Corner fiducials carrying clip id and frame index.
//!
//! Each marker is a 10×10 grid of square modules. The outer ring of 36
//! modules alternates black/white (white where row+column is odd) and serves
//! as the level reference. The 8×8 interior carries, row-major and MSB first,
//! the 48-bit codeword `clip_id (16, BE) | frame_index (24, BE) | crc8` and
//! then the CRC byte twice more. White modules are ones.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::media::{Chroma, FrameBuffer, FrameFormat, Rect};

pub const GRID: usize = 10;
const INTERIOR: usize = GRID - 2;
const CODEWORD_BITS: usize = 48;
const REPEAT_BITS: usize = 16;
/// Repetition bits that must agree with the decoded CRC byte.
pub const MIN_REPEAT_MATCHES: usize = 12;
/// Border modules allowed to disagree with the localization pattern.
const MAX_BORDER_ERRORS: usize = 4;

pub const MAX_FRAME_INDEX: u32 = (1 << 24) - 1;

const CRC8_TABLE: [u8; 256] = {
    let mut table = [0u8; 256];
    let mut i = 0;
    while i < 256 {
        let mut c = i as u8;
        let mut b = 0;
        while b < 8 {
            c = if c & 0x80 != 0 { (c << 1) ^ 0x07 } else { c << 1 };
            b += 1;
        }
        table[i] = c;
        i += 1;
    }
    table
};

/// CRC-8, polynomial 0x07, init 0, no reflection, no final xor.
pub fn crc8(bytes: &[u8]) -> u8 {
    bytes.iter().fold(0u8, |crc, &b| CRC8_TABLE[(crc ^ b) as usize])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MarkerPayload {
    clip_id: u16,
    frame_index: u32,
    crc: u8,
}

impl MarkerPayload {
    pub fn new(clip_id: u16, frame_index: u32) -> Result<Self> {
        if frame_index > MAX_FRAME_INDEX {
            return Err(Error::Config(format!("frame index {frame_index} exceeds 24 bits")));
        }
        let mut p = MarkerPayload { clip_id, frame_index, crc: 0 };
        p.crc = crc8(&p.payload_bytes());
        Ok(p)
    }

    pub fn clip_id(&self) -> u16 {
        self.clip_id
    }

    pub fn frame_index(&self) -> u32 {
        self.frame_index
    }

    pub fn crc(&self) -> u8 {
        self.crc
    }

    fn payload_bytes(&self) -> [u8; 5] {
        let c = self.clip_id.to_be_bytes();
        let f = self.frame_index.to_be_bytes();
        [c[0], c[1], f[1], f[2], f[3]]
    }

    /// The 64 interior module bits in layout order.
    pub fn module_bits(&self) -> [bool; INTERIOR * INTERIOR] {
        let p = self.payload_bytes();
        let bytes = [p[0], p[1], p[2], p[3], p[4], self.crc, self.crc, self.crc];
        let mut bits = [false; INTERIOR * INTERIOR];
        for (i, bit) in bits.iter_mut().enumerate() {
            *bit = bytes[i / 8] >> (7 - i % 8) & 1 == 1;
        }
        bits
    }
}

impl fmt::Display for MarkerPayload {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "clip {} frame {} (crc {:#04x})", self.clip_id, self.frame_index, self.crc)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MarkerGeometry {
    /// Pixels per module edge.
    pub module_size: usize,
    /// Distance in pixels from each frame edge.
    pub inset: usize,
}

impl Default for MarkerGeometry {
    fn default() -> Self {
        MarkerGeometry { module_size: 9, inset: 2 }
    }
}

impl MarkerGeometry {
    /// Geometry from a total marker edge length, which must be a multiple of 10.
    pub fn from_size(size: usize, inset: usize) -> Result<Self> {
        if !size.is_multiple_of(GRID) || size / GRID < 3 {
            return Err(Error::Geometry(format!(
                "marker size {size} must be a multiple of {GRID} and at least {}",
                3 * GRID
            )));
        }
        Ok(MarkerGeometry { module_size: size / GRID, inset })
    }

    pub fn size(&self) -> usize {
        self.module_size * GRID
    }

    /// Marker rectangles for a `width`×`height` frame in TL, TR, BL, BR order.
    pub fn corners(&self, width: usize, height: usize) -> Result<[Rect; 4]> {
        self.corners_in(Rect::new(0, 0, width, height))
    }

    /// Marker rectangles placed at the corners of `region`.
    pub fn corners_in(&self, region: Rect) -> Result<[Rect; 4]> {
        let s = self.size();
        let need = 2 * (self.inset + s);
        if self.module_size < 3 {
            return Err(Error::Geometry(format!("module size {} below 3 px", self.module_size)));
        }
        if region.width < need || region.height < need {
            return Err(Error::Geometry(format!(
                "{}x{} region cannot host four {s}px markers with {}px inset",
                region.width, region.height, self.inset
            )));
        }
        let (x0, y0) = (region.x + self.inset, region.y + self.inset);
        let x1 = region.x + region.width - self.inset - s;
        let y1 = region.y + region.height - self.inset - s;
        Ok([
            Rect::new(x0, y0, s, s),
            Rect::new(x1, y0, s, s),
            Rect::new(x0, y1, s, s),
            Rect::new(x1, y1, s, s),
        ])
    }

    /// Fraction of frame area covered by the four markers.
    pub fn area_fraction(&self, width: usize, height: usize) -> f64 {
        4.0 * (self.size() * self.size()) as f64 / (width * height) as f64
    }
}

fn is_border(r: usize, c: usize) -> bool {
    r == 0 || c == 0 || r == GRID - 1 || c == GRID - 1
}

fn border_is_white(r: usize, c: usize) -> bool {
    (r + c) % 2 == 1
}

/// Module states for the whole 10×10 grid, row-major.
fn module_grid(payload: &MarkerPayload) -> [bool; GRID * GRID] {
    let bits = payload.module_bits();
    let mut grid = [false; GRID * GRID];
    for r in 0..GRID {
        for c in 0..GRID {
            grid[r * GRID + c] = if is_border(r, c) {
                border_is_white(r, c)
            } else {
                bits[(r - 1) * INTERIOR + (c - 1)]
            };
        }
    }
    grid
}

/// Render a marker as a standalone 4:4:4 patch with neutral chroma.
pub fn render_marker(payload: &MarkerPayload, geometry: &MarkerGeometry, bit_depth: u8) -> Result<FrameBuffer> {
    let size = geometry.size();
    let format = FrameFormat::new(size, size, bit_depth, Chroma::Yuv444)?;
    let white = format.max_value();
    let grid = module_grid(payload);
    let m = geometry.module_size;
    let luma = (0..size * size)
        .map(|i| if grid[(i / size / m) * GRID + (i % size) / m] { white } else { 0 })
        .collect();
    let mid = format.mid_value();
    FrameBuffer::from_planes(format, [luma, vec![mid; size * size], vec![mid; size * size]])
}

pub fn embed_markers(frame: &FrameBuffer, payload: &MarkerPayload, geometry: &MarkerGeometry) -> Result<FrameBuffer> {
    embed_markers_in(frame, payload, geometry, Rect::new(0, 0, frame.width(), frame.height()))
}

/// Write the four markers at the corners of `region` (luma), neutralising
/// chroma under each footprint. Everything else is left untouched.
pub fn embed_markers_in(
    frame: &FrameBuffer,
    payload: &MarkerPayload,
    geometry: &MarkerGeometry,
    region: Rect,
) -> Result<FrameBuffer> {
    region.check_within(frame.width(), frame.height())?;
    let format = frame.format();
    let rects = geometry.corners_in(region)?;
    let patch = render_marker(payload, geometry, format.bit_depth)?;
    let mid = format.mid_value();
    let mut out = frame.clone();
    let size = geometry.size();
    for rect in rects {
        for y in 0..size {
            for x in 0..size {
                out.set_sample(0, rect.x + x, rect.y + y, patch.luma()[y * size + x]);
            }
        }
        let (cx0, cy0, cx1, cy1) = match format.chroma {
            Chroma::Yuv444 => (rect.x, rect.y, rect.x + size, rect.y + size),
            Chroma::Yuv420 => (rect.x / 2, rect.y / 2, (rect.x + size).div_ceil(2), (rect.y + size).div_ceil(2)),
        };
        for p in 1..3 {
            for y in cy0..cy1 {
                for x in cx0..cx1 {
                    out.set_sample(p, x, y, mid);
                }
            }
        }
    }
    Ok(out)
}

/// Borrowed rectangle of luma samples.
#[derive(Debug, Clone, Copy)]
pub struct LumaRegion<'a> {
    samples: &'a [u16],
    stride: usize,
    rect: Rect,
}

impl<'a> LumaRegion<'a> {
    pub fn new(frame: &'a FrameBuffer, rect: Rect) -> Result<Self> {
        rect.check_within(frame.width(), frame.height())?;
        Ok(LumaRegion { samples: frame.luma(), stride: frame.width(), rect })
    }

    pub fn whole(frame: &'a FrameBuffer) -> Self {
        LumaRegion { samples: frame.luma(), stride: frame.width(), rect: Rect::new(0, 0, frame.width(), frame.height()) }
    }

    fn at(&self, x: usize, y: usize) -> u16 {
        self.samples[(self.rect.y + y) * self.stride + self.rect.x + x]
    }

    /// Mean of the 3×3 block around the center of module (r, c).
    fn module_level(&self, r: usize, c: usize, module: usize) -> f64 {
        let cx = c * module + module / 2;
        let cy = r * module + module / 2;
        let mut sum = 0u32;
        for y in cy - 1..=cy + 1 {
            for x in cx - 1..=cx + 1 {
                sum += self.at(x, y) as u32;
            }
        }
        sum as f64 / 9.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "reason", rename_all = "snake_case")]
pub enum MarkerFailure {
    RegionSize { width: usize, height: usize },
    LowContrast { black: f64, white: f64 },
    BorderMismatch { errors: usize },
    CrcMismatch { expected: u8, found: u8 },
    RepetitionMismatch { matches: usize },
}

impl fmt::Display for MarkerFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MarkerFailure::RegionSize { width, height } => write!(f, "region {width}x{height} does not match geometry"),
            MarkerFailure::LowContrast { black, white } => {
                write!(f, "no contrast (black {black:.1}, white {white:.1})")
            }
            MarkerFailure::BorderMismatch { errors } => write!(f, "{errors} border modules wrong"),
            MarkerFailure::CrcMismatch { expected, found } => {
                write!(f, "crc mismatch (computed {expected:#04x}, read {found:#04x})")
            }
            MarkerFailure::RepetitionMismatch { matches } => {
                write!(f, "crc repetition agrees in {matches}/{REPEAT_BITS} bits")
            }
        }
    }
}

/// Decode one marker whose region exactly covers the marker footprint.
pub fn decode_marker(region: &LumaRegion<'_>, geometry: &MarkerGeometry) -> Result<MarkerPayload, MarkerFailure> {
    let size = geometry.size();
    if region.rect.width != size || region.rect.height != size || geometry.module_size < 3 {
        return Err(MarkerFailure::RegionSize { width: region.rect.width, height: region.rect.height });
    }
    let m = geometry.module_size;
    let mut levels = [0.0f64; GRID * GRID];
    for r in 0..GRID {
        for c in 0..GRID {
            levels[r * GRID + c] = region.module_level(r, c, m);
        }
    }

    let (mut black, mut white, mut nb, mut nw) = (0.0, 0.0, 0, 0);
    for r in 0..GRID {
        for c in 0..GRID {
            if !is_border(r, c) {
                continue;
            }
            if border_is_white(r, c) {
                white += levels[r * GRID + c];
                nw += 1;
            } else {
                black += levels[r * GRID + c];
                nb += 1;
            }
        }
    }
    let (black, white) = (black / nb as f64, white / nw as f64);
    // anything under 1/16 of an 8-bit swing is not a marker
    if white - black < 16.0 {
        return Err(MarkerFailure::LowContrast { black, white });
    }
    let threshold = 0.5 * (black + white);

    let border_errors = (0..GRID * GRID)
        .filter(|&i| is_border(i / GRID, i % GRID))
        .filter(|&i| (levels[i] > threshold) != border_is_white(i / GRID, i % GRID))
        .count();
    if border_errors > MAX_BORDER_ERRORS {
        return Err(MarkerFailure::BorderMismatch { errors: border_errors });
    }

    let mut bits = [false; INTERIOR * INTERIOR];
    for (i, bit) in bits.iter_mut().enumerate() {
        *bit = levels[(i / INTERIOR + 1) * GRID + i % INTERIOR + 1] > threshold;
    }
    let byte = |k: usize| (0..8).fold(0u8, |acc, b| acc << 1 | bits[k * 8 + b] as u8);
    let payload = [byte(0), byte(1), byte(2), byte(3), byte(4)];
    let read_crc = byte(5);
    let expected = crc8(&payload);
    if expected != read_crc {
        return Err(MarkerFailure::CrcMismatch { expected, found: read_crc });
    }
    let matches = (0..REPEAT_BITS)
        .filter(|&i| bits[CODEWORD_BITS + i] == (read_crc >> (7 - i % 8) & 1 == 1))
        .count();
    if matches < MIN_REPEAT_MATCHES {
        return Err(MarkerFailure::RepetitionMismatch { matches });
    }
    Ok(MarkerPayload {
        clip_id: u16::from_be_bytes([payload[0], payload[1]]),
        frame_index: u32::from_be_bytes([0, payload[2], payload[3], payload[4]]),
        crc: read_crc,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameId {
    pub payload: MarkerPayload,
    /// Number of corners that decoded to `payload`.
    pub agreement: usize,
}

/// Per-corner outcome of a failed frame decode.
#[derive(Debug, Clone, PartialEq)]
pub struct Unreadable {
    pub corners: Vec<Result<MarkerPayload, MarkerFailure>>,
}

impl fmt::Display for Unreadable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        const NAMES: [&str; 4] = ["top-left", "top-right", "bottom-left", "bottom-right"];
        let parts: Vec<String> = self
            .corners
            .iter()
            .enumerate()
            .map(|(i, c)| match c {
                Ok(p) => format!("{}: {p}", NAMES.get(i).unwrap_or(&"?")),
                Err(e) => format!("{}: {e}", NAMES.get(i).unwrap_or(&"?")),
            })
            .collect();
        write!(f, "{}", parts.join(", "))
    }
}

impl From<Unreadable> for Error {
    fn from(u: Unreadable) -> Self {
        Error::FrameUnreadable(u.to_string())
    }
}

/// Decode all four corners and return the majority payload. Needs at least
/// two agreeing corners; on a 2–2 split the payload seen first in TL, TR, BL,
/// BR order wins.
pub fn decode_frame_id(frame: &FrameBuffer, geometry: &MarkerGeometry) -> Result<FrameId, Unreadable> {
    let rects = match geometry.corners(frame.width(), frame.height()) {
        Ok(r) => r,
        Err(_) => {
            let fail = Err(MarkerFailure::RegionSize { width: frame.width(), height: frame.height() });
            return Err(Unreadable { corners: vec![fail; 4] });
        }
    };
    let corners: Vec<_> = rects
        .iter()
        .map(|&rect| {
            let region = LumaRegion { samples: frame.luma(), stride: frame.width(), rect };
            decode_marker(&region, geometry)
        })
        .collect();

    let mut best: Option<FrameId> = None;
    for candidate in corners.iter().flatten() {
        let agreement = corners.iter().filter(|c| c.as_ref().ok() == Some(candidate)).count();
        if best.is_none_or(|b| agreement > b.agreement) {
            best = Some(FrameId { payload: *candidate, agreement });
        }
    }
    match best {
        Some(id) if id.agreement >= 2 => Ok(id),
        _ => Err(Unreadable { corners }),
    }
}
