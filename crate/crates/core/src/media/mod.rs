//! Frame and clip representation.
//!
//! Samples are stored one per `u16` regardless of bit depth. Planes are
//! row-major Y, Cb, Cr; chroma planes are half size in both directions for
//! 4:2:0.

mod convert;
mod synth;
mod y4m;

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use convert::{convert_format, TargetFormat};
pub use synth::{generate_synthetic_clip, SynthKind};
pub use y4m::{read_y4m, read_y4m_file, write_y4m, write_y4m_file, Y4mReader};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Chroma {
    #[serde(rename = "420")]
    Yuv420,
    #[serde(rename = "444")]
    Yuv444,
}

impl fmt::Display for Chroma {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Chroma::Yuv420 => "4:2:0",
            Chroma::Yuv444 => "4:4:4",
        })
    }
}

/// Exact ratio such as a frame rate (`30000:1001`). Serialized as `"num:den"`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Rational {
    pub num: u32,
    pub den: u32,
}

impl Rational {
    pub const fn new(num: u32, den: u32) -> Self {
        Rational { num, den }
    }

    pub fn as_f64(self) -> f64 {
        self.num as f64 / self.den as f64
    }
}

impl fmt::Display for Rational {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.num, self.den)
    }
}

impl From<Rational> for String {
    fn from(r: Rational) -> String {
        r.to_string()
    }
}

impl TryFrom<String> for Rational {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl FromStr for Rational {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Config(format!("invalid rational `{s}`"));
        let (n, d) = s.split_once(':').or_else(|| s.split_once('/')).ok_or_else(bad)?;
        let r = Rational::new(n.trim().parse().map_err(|_| bad())?, d.trim().parse().map_err(|_| bad())?);
        if r.num == 0 || r.den == 0 {
            return Err(bad());
        }
        Ok(r)
    }
}

/// Geometry and sample format of a single frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FrameFormat {
    pub width: usize,
    pub height: usize,
    pub bit_depth: u8,
    pub chroma: Chroma,
}

impl FrameFormat {
    pub fn new(width: usize, height: usize, bit_depth: u8, chroma: Chroma) -> Result<Self> {
        let f = FrameFormat { width, height, bit_depth, chroma };
        f.validate()?;
        Ok(f)
    }

    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(Error::Dimension(format!("{}x{} frame", self.width, self.height)));
        }
        if self.chroma == Chroma::Yuv420 && (!self.width.is_multiple_of(2) || !self.height.is_multiple_of(2)) {
            return Err(Error::Dimension(format!(
                "4:2:0 requires even dimensions, got {}x{}",
                self.width, self.height
            )));
        }
        if !matches!(self.bit_depth, 8 | 10 | 12) {
            return Err(Error::UnsupportedFormat(format!("bit depth {}", self.bit_depth)));
        }
        Ok(())
    }

    /// Largest representable sample, `2^bit_depth - 1`.
    pub fn max_value(&self) -> u16 {
        ((1u32 << self.bit_depth) - 1) as u16
    }

    pub fn mid_value(&self) -> u16 {
        1u16 << (self.bit_depth - 1)
    }

    /// Width and height of plane `p` (0 = Y, 1 = Cb, 2 = Cr).
    pub fn plane_dims(&self, p: usize) -> (usize, usize) {
        match (p, self.chroma) {
            (0, _) | (_, Chroma::Yuv444) => (self.width, self.height),
            (_, Chroma::Yuv420) => (self.width / 2, self.height / 2),
        }
    }

    pub fn plane_len(&self, p: usize) -> usize {
        let (w, h) = self.plane_dims(p);
        w * h
    }

    pub fn samples_per_frame(&self) -> usize {
        (0..3).map(|p| self.plane_len(p)).sum()
    }

    pub fn bytes_per_sample(&self) -> usize {
        if self.bit_depth > 8 {
            2
        } else {
            1
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct VideoSpec {
    pub width: usize,
    pub height: usize,
    pub bit_depth: u8,
    pub chroma: Chroma,
    pub frame_rate: Rational,
    pub frame_count: usize,
}

impl VideoSpec {
    pub fn new(format: FrameFormat, frame_rate: Rational, frame_count: usize) -> Result<Self> {
        let spec = VideoSpec {
            width: format.width,
            height: format.height,
            bit_depth: format.bit_depth,
            chroma: format.chroma,
            frame_rate,
            frame_count,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        self.format().validate()?;
        if self.frame_rate.num == 0 || self.frame_rate.den == 0 {
            return Err(Error::Config(format!("frame rate {}", self.frame_rate)));
        }
        Ok(())
    }

    pub fn format(&self) -> FrameFormat {
        FrameFormat {
            width: self.width,
            height: self.height,
            bit_depth: self.bit_depth,
            chroma: self.chroma,
        }
    }

    pub fn with_frame_count(mut self, frame_count: usize) -> Self {
        self.frame_count = frame_count;
        self
    }

    pub fn duration_secs(&self) -> f64 {
        self.frame_count as f64 * self.frame_rate.den as f64 / self.frame_rate.num as f64
    }
}

/// One decoded picture. Immutable by convention once built.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FrameBuffer {
    format: FrameFormat,
    planes: [Vec<u16>; 3],
}

impl FrameBuffer {
    pub fn filled(format: FrameFormat, values: [u16; 3]) -> Self {
        let planes = [0, 1, 2].map(|p| vec![values[p].min(format.max_value()); format.plane_len(p)]);
        FrameBuffer { format, planes }
    }

    /// Mid-gray luma with neutral chroma.
    pub fn gray(format: FrameFormat) -> Self {
        let mid = format.mid_value();
        Self::filled(format, [mid; 3])
    }

    pub fn from_planes(format: FrameFormat, planes: [Vec<u16>; 3]) -> Result<Self> {
        format.validate()?;
        let max = format.max_value();
        for (p, plane) in planes.iter().enumerate() {
            if plane.len() != format.plane_len(p) {
                return Err(Error::Dimension(format!(
                    "plane {p} has {} samples, expected {}",
                    plane.len(),
                    format.plane_len(p)
                )));
            }
            if let Some(v) = plane.iter().find(|&&v| v > max) {
                return Err(Error::Dimension(format!(
                    "sample {v} exceeds {}-bit range in plane {p}",
                    format.bit_depth
                )));
            }
        }
        Ok(FrameBuffer { format, planes })
    }

    pub fn format(&self) -> FrameFormat {
        self.format
    }

    pub fn width(&self) -> usize {
        self.format.width
    }

    pub fn height(&self) -> usize {
        self.format.height
    }

    pub fn plane(&self, p: usize) -> &[u16] {
        &self.planes[p]
    }

    pub fn luma(&self) -> &[u16] {
        &self.planes[0]
    }

    pub fn planes(&self) -> &[Vec<u16>; 3] {
        &self.planes
    }

    pub fn into_planes(self) -> [Vec<u16>; 3] {
        self.planes
    }

    /// Mutable plane access. Callers must keep samples within bit depth.
    pub(crate) fn plane_mut(&mut self, p: usize) -> &mut [u16] {
        &mut self.planes[p]
    }

    pub fn sample(&self, p: usize, x: usize, y: usize) -> u16 {
        let (w, _) = self.format.plane_dims(p);
        self.planes[p][y * w + x]
    }

    pub(crate) fn set_sample(&mut self, p: usize, x: usize, y: usize, v: u16) {
        let (w, _) = self.format.plane_dims(p);
        self.planes[p][y * w + x] = v;
    }

    /// Copy out a rectangle in luma coordinates. For 4:2:0 the rectangle must
    /// be 2-aligned.
    pub fn crop(&self, rect: Rect) -> Result<FrameBuffer> {
        rect.check_within(self.width(), self.height())?;
        if self.format.chroma == Chroma::Yuv420
            && (!rect.x.is_multiple_of(2) || !rect.y.is_multiple_of(2) || !rect.width.is_multiple_of(2) || !rect.height.is_multiple_of(2))
        {
            return Err(Error::Geometry(format!("{rect} is not 2-aligned for 4:2:0")));
        }
        let format = FrameFormat { width: rect.width, height: rect.height, ..self.format };
        let planes = [0, 1, 2].map(|p| {
            let (sx, sy) = match (p, self.format.chroma) {
                (0, _) | (_, Chroma::Yuv444) => (1, 1),
                _ => (2, 2),
            };
            let (src_w, _) = self.format.plane_dims(p);
            let (w, h) = format.plane_dims(p);
            let (x0, y0) = (rect.x / sx, rect.y / sy);
            let src = &self.planes[p];
            let mut out = Vec::with_capacity(w * h);
            for y in 0..h {
                let row = (y0 + y) * src_w + x0;
                out.extend_from_slice(&src[row..row + w]);
            }
            out
        });
        Ok(FrameBuffer { format, planes })
    }
}

/// Axis-aligned rectangle in luma sample coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Rect {
    pub x: usize,
    pub y: usize,
    pub width: usize,
    pub height: usize,
}

impl Rect {
    pub const fn new(x: usize, y: usize, width: usize, height: usize) -> Self {
        Rect { x, y, width, height }
    }

    pub fn contains(&self, x: usize, y: usize) -> bool {
        x >= self.x && x < self.x + self.width && y >= self.y && y < self.y + self.height
    }

    pub fn area(&self) -> usize {
        self.width * self.height
    }

    pub fn intersects(&self, other: &Rect) -> bool {
        self.x < other.x + other.width
            && other.x < self.x + self.width
            && self.y < other.y + other.height
            && other.y < self.y + self.height
    }

    pub fn check_within(&self, width: usize, height: usize) -> Result<()> {
        if self.width == 0 || self.height == 0 || self.x + self.width > width || self.y + self.height > height {
            return Err(Error::Geometry(format!("{self} outside {width}x{height} frame")));
        }
        Ok(())
    }
}

impl fmt::Display for Rect {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}+{}+{}", self.width, self.height, self.x, self.y)
    }
}

/// Parses the `WxH+X+Y` form produced by `Display`.
impl FromStr for Rect {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Parse { token: s.to_string(), reason: "expected WxH+X+Y".into() };
        let (size, rest) = s.split_once('+').ok_or_else(bad)?;
        let (x, y) = rest.split_once('+').ok_or_else(bad)?;
        let (w, h) = size.split_once('x').ok_or_else(bad)?;
        let n = |v: &str| v.trim().parse::<usize>().map_err(|_| bad());
        Ok(Rect::new(n(x)?, n(y)?, n(w)?, n(h)?))
    }
}

/// Position of a clip in the reference → capture chain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Ref,
    Deg,
    DegDec,
    RefCam,
    DegDecCam,
}

impl Role {
    /// Allowed chains: Ref→Deg→DegDec→DegDecCam and Ref→RefCam. Ref→DegDec is
    /// accepted since encode and decode happen in one harness step.
    pub fn can_become(self, next: Role) -> bool {
        matches!(
            (self, next),
            (Role::Ref, Role::Deg)
                | (Role::Ref, Role::DegDec)
                | (Role::Deg, Role::DegDec)
                | (Role::DegDec, Role::DegDecCam)
                | (Role::Ref, Role::RefCam)
        )
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Role::Ref => "ARef",
            Role::Deg => "ADeg",
            Role::DegDec => "ADegDec",
            Role::RefCam => "ARefCam",
            Role::DegDecCam => "ADegDecCam",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClipDescriptor {
    pub clip_id: u16,
    pub name: String,
    pub spec: VideoSpec,
    pub role: Role,
    pub storage_path: PathBuf,
}

impl ClipDescriptor {
    /// Descriptor for a clip one step further down the chain.
    pub fn derive(&self, role: Role, spec: VideoSpec, storage_path: PathBuf) -> Result<ClipDescriptor> {
        if !self.role.can_become(role) {
            return Err(Error::Config(format!("{} cannot become {}", self.role, role)));
        }
        Ok(ClipDescriptor {
            clip_id: self.clip_id,
            name: self.name.clone(),
            spec,
            role,
            storage_path,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plane_dims_follow_chroma() {
        let f = FrameFormat::new(8, 6, 8, Chroma::Yuv420).unwrap();
        assert_eq!(f.plane_dims(0), (8, 6));
        assert_eq!(f.plane_dims(1), (4, 3));
        assert_eq!(f.samples_per_frame(), 48 + 12 + 12);
        let f = FrameFormat::new(8, 6, 10, Chroma::Yuv444).unwrap();
        assert_eq!(f.plane_dims(2), (8, 6));
        assert_eq!(f.max_value(), 1023);
    }

    #[test]
    fn odd_420_rejected() {
        assert!(FrameFormat::new(5, 4, 8, Chroma::Yuv420).is_err());
        assert!(FrameFormat::new(5, 4, 8, Chroma::Yuv444).is_ok());
        assert!(FrameFormat::new(4, 4, 9, Chroma::Yuv444).is_err());
        assert!(FrameFormat::new(0, 4, 8, Chroma::Yuv444).is_err());
    }

    #[test]
    fn from_planes_checks_range() {
        let f = FrameFormat::new(2, 2, 8, Chroma::Yuv444).unwrap();
        let bad = FrameBuffer::from_planes(f, [vec![256, 0, 0, 0], vec![0; 4], vec![0; 4]]);
        assert!(matches!(bad, Err(Error::Dimension(_))));
    }

    #[test]
    fn duration_from_rate() {
        let f = FrameFormat::new(3840, 2160, 8, Chroma::Yuv420).unwrap();
        let spec = VideoSpec::new(f, Rational::new(30, 1), 150).unwrap();
        assert_eq!(spec.duration_secs(), 5.0);
    }

    #[test]
    fn role_chain() {
        assert!(Role::Ref.can_become(Role::Deg));
        assert!(Role::Deg.can_become(Role::DegDec));
        assert!(Role::DegDec.can_become(Role::DegDecCam));
        assert!(Role::Ref.can_become(Role::RefCam));
        assert!(!Role::RefCam.can_become(Role::DegDecCam));
        assert!(!Role::DegDecCam.can_become(Role::Ref));
    }

    #[test]
    fn crop_420() {
        let f = FrameFormat::new(8, 8, 8, Chroma::Yuv420).unwrap();
        let planes = [
            (0..64).map(|v| v as u16).collect(),
            (0..16).map(|v| v as u16).collect(),
            vec![7; 16],
        ];
        let frame = FrameBuffer::from_planes(f, planes).unwrap();
        let c = frame.crop(Rect::new(2, 2, 4, 4)).unwrap();
        assert_eq!(c.luma()[0], 18);
        assert_eq!(c.plane(1), &[5, 6, 9, 10]);
        assert!(frame.crop(Rect::new(1, 0, 4, 4)).is_err());
        assert!(frame.crop(Rect::new(6, 0, 4, 4)).is_err());
    }
}
