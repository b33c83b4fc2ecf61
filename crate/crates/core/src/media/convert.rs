use serde::{Deserialize, Serialize};

use super::{Chroma, FrameBuffer, FrameFormat};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TargetFormat {
    pub chroma: Chroma,
    pub bit_depth: u8,
}

impl TargetFormat {
    pub const fn new(chroma: Chroma, bit_depth: u8) -> Self {
        TargetFormat { chroma, bit_depth }
    }
}

/// Chroma resampling runs first at the source depth, then the depth shift.
///
/// 4:4:4→4:2:0 is a rounded 2×2 box average, 4:2:0→4:4:4 replicates each
/// chroma sample. Depth increases shift left; decreases shift right with
/// rounding and saturate at the new maximum.
pub fn convert_format(frame: &FrameBuffer, target: TargetFormat) -> Result<FrameBuffer> {
    let src = frame.format();
    if !matches!(target.bit_depth, 8 | 10 | 12) {
        return Err(Error::UnsupportedFormat(format!("target bit depth {}", target.bit_depth)));
    }
    if src.chroma == target.chroma && src.bit_depth == target.bit_depth {
        return Ok(frame.clone());
    }
    let mid = FrameFormat { chroma: target.chroma, ..src };
    mid.validate()?;

    let [y, cb, cr] = frame.planes().clone();
    let (cw, ch) = src.plane_dims(1);
    let (cb, cr) = match (src.chroma, target.chroma) {
        (Chroma::Yuv444, Chroma::Yuv420) => (box_down(&cb, cw, ch), box_down(&cr, cw, ch)),
        (Chroma::Yuv420, Chroma::Yuv444) => (replicate_up(&cb, cw, ch), replicate_up(&cr, cw, ch)),
        _ => (cb, cr),
    };

    let out_format = FrameFormat { bit_depth: target.bit_depth, ..mid };
    let planes = [y, cb, cr].map(|p| shift_depth(p, src.bit_depth, target.bit_depth));
    FrameBuffer::from_planes(out_format, planes)
}

fn box_down(plane: &[u16], w: usize, h: usize) -> Vec<u16> {
    let (ow, oh) = (w / 2, h / 2);
    let mut out = Vec::with_capacity(ow * oh);
    for y in 0..oh {
        let r0 = &plane[2 * y * w..];
        let r1 = &plane[(2 * y + 1) * w..];
        for x in 0..ow {
            let sum = r0[2 * x] as u32 + r0[2 * x + 1] as u32 + r1[2 * x] as u32 + r1[2 * x + 1] as u32;
            out.push(((sum + 2) / 4) as u16);
        }
    }
    out
}

fn replicate_up(plane: &[u16], w: usize, h: usize) -> Vec<u16> {
    let mut out = Vec::with_capacity(w * h * 4);
    for row in plane.chunks_exact(w).take(h) {
        let wide: Vec<u16> = row.iter().flat_map(|&v| [v, v]).collect();
        out.extend_from_slice(&wide);
        out.extend_from_slice(&wide);
    }
    out
}

fn shift_depth(mut plane: Vec<u16>, from: u8, to: u8) -> Vec<u16> {
    if to > from {
        let s = to - from;
        plane.iter_mut().for_each(|v| *v <<= s);
    } else if from > to {
        let s = from - to;
        let max = ((1u32 << to) - 1) as u16;
        let half = 1u32 << (s - 1);
        plane.iter_mut().for_each(|v| *v = (((*v as u32 + half) >> s) as u16).min(max));
    }
    plane
}

#[cfg(test)]
mod tests {
    use super::*;

    fn frame(chroma: Chroma, depth: u8, y: u16, c: [u16; 2]) -> FrameBuffer {
        FrameBuffer::filled(FrameFormat::new(4, 4, depth, chroma).unwrap(), [y, c[0], c[1]])
    }

    #[test]
    fn identity_is_bit_exact() {
        let f = FrameFormat::new(4, 4, 8, Chroma::Yuv444).unwrap();
        let planes = [(0..16).collect(), (16..32).collect(), (32..48).collect()];
        let fr = FrameBuffer::from_planes(f, planes).unwrap();
        assert_eq!(convert_format(&fr, TargetFormat::new(Chroma::Yuv444, 8)).unwrap(), fr);
    }

    #[test]
    fn constant_chroma_roundtrip() {
        let fr = frame(Chroma::Yuv444, 8, 17, [90, 200]);
        let down = convert_format(&fr, TargetFormat::new(Chroma::Yuv420, 8)).unwrap();
        assert_eq!(down.plane(1), &[90; 4]);
        let up = convert_format(&down, TargetFormat::new(Chroma::Yuv444, 8)).unwrap();
        assert_eq!(up, fr);
    }

    #[test]
    fn box_average_rounds() {
        let f = FrameFormat::new(2, 2, 8, Chroma::Yuv444).unwrap();
        let fr = FrameBuffer::from_planes(f, [vec![5; 4], vec![0, 1, 1, 0], vec![1, 2, 3, 4]]).unwrap();
        let d = convert_format(&fr, TargetFormat::new(Chroma::Yuv420, 8)).unwrap();
        // (2+2)/4 = 1 ; (10+2)/4 = 3
        assert_eq!(d.plane(1), &[1]);
        assert_eq!(d.plane(2), &[3]);
        assert_eq!(d.luma(), &[5; 4]);
    }

    #[test]
    fn depth_shifts() {
        let fr = frame(Chroma::Yuv420, 8, 200, [128, 255]);
        let up = convert_format(&fr, TargetFormat::new(Chroma::Yuv420, 10)).unwrap();
        assert_eq!(up.luma()[0], 800);
        assert_eq!(up.plane(2)[0], 1020);
        let down = convert_format(&up, TargetFormat::new(Chroma::Yuv420, 8)).unwrap();
        assert_eq!(down, fr);
        let sat = frame(Chroma::Yuv420, 10, 1023, [1022, 2]);
        let d = convert_format(&sat, TargetFormat::new(Chroma::Yuv420, 8)).unwrap();
        assert_eq!(d.luma()[0], 255);
        assert_eq!(d.plane(1)[0], 255);
        assert_eq!(d.plane(2)[0], 1);
    }

    #[test]
    fn unsupported_target() {
        let fr = frame(Chroma::Yuv420, 8, 1, [1, 1]);
        assert!(matches!(
            convert_format(&fr, TargetFormat::new(Chroma::Yuv420, 16)),
            Err(Error::UnsupportedFormat(_))
        ));
    }
}
