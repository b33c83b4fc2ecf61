//! Built-in toy codec so the pipeline runs with no external encoders.
//!
//! Each plane is cut into 8×8 blocks (edges replicated) and transformed with
//! a separable three-level orthonormal Haar pyramid in `f64`, so the squared
//! coefficient error equals the squared pixel error before final rounding.
//! Coefficients are quantized with a step of a quarter code value at qp 0
//! (lossless) that doubles every 8 qp, using position-derived subtractive
//! dither on nonzero levels. Levels are scanned in zigzag order and packed
//! as `(zero run: u8, level: zigzag LEB128)` pairs with a one-byte
//! end-of-block. In inter frames each block is predicted either from
//! the co-located block of the previous reconstruction or from mid-gray,
//! chosen by squared error plus weighted rate.

use std::f64::consts::FRAC_1_SQRT_2;

use super::GopMode;
use crate::error::{Error, Result};
use crate::media::{Chroma, FrameBuffer, FrameFormat, Rational, VideoSpec};

pub const MAX_QP: u8 = 63;
const MAGIC: &[u8; 4] = b"TOY1";
const EOB: u8 = 64;
/// Block prefix in inter frames: predict from mid-gray instead of the
/// previous frame.
const INTRA_BLOCK: u8 = 65;
const N: usize = 8;

const INTRA: u8 = 0;
const INTER: u8 = 1;

const ZIGZAG: [usize; 64] = [
    0, 1, 8, 16, 9, 2, 3, 10, 17, 24, 32, 25, 18, 11, 4, 5, 12, 19, 26, 33, 40, 48, 41, 34, 27, 20, 13, 6, 7, 14, 21,
    28, 35, 42, 49, 56, 57, 50, 43, 36, 29, 22, 15, 23, 30, 37, 44, 51, 58, 59, 52, 45, 38, 31, 39, 46, 53, 60, 61,
    54, 47, 55, 62, 63,
];

/// Orthonormal Haar pyramid on a power-of-two length slice, in place.
/// Output is `[approximation, coarsest detail, ..., finest detail]`.
fn haar_fwd(v: &mut [f64]) {
    let mut tmp = [0f64; N];
    let mut n = v.len();
    while n > 1 {
        for i in 0..n / 2 {
            let (a, b) = (v[2 * i], v[2 * i + 1]);
            tmp[i] = (a + b) * FRAC_1_SQRT_2;
            tmp[n / 2 + i] = (a - b) * FRAC_1_SQRT_2;
        }
        v[..n].copy_from_slice(&tmp[..n]);
        n /= 2;
    }
}

fn haar_inv(v: &mut [f64]) {
    let mut tmp = [0f64; N];
    let mut n = 2;
    while n <= v.len() {
        for i in 0..n / 2 {
            let (l, h) = (v[i], v[n / 2 + i]);
            tmp[2 * i] = (l + h) * FRAC_1_SQRT_2;
            tmp[2 * i + 1] = (l - h) * FRAC_1_SQRT_2;
        }
        v[..n].copy_from_slice(&tmp[..n]);
        n *= 2;
    }
}

fn transform_2d(block: &mut [f64; 64], inverse: bool) {
    let step = if inverse { haar_inv } else { haar_fwd };
    for r in 0..N {
        step(&mut block[r * N..(r + 1) * N]);
    }
    let mut col = [0f64; N];
    for c in 0..N {
        for r in 0..N {
            col[r] = block[r * N + c];
        }
        step(&mut col);
        for r in 0..N {
            block[r * N + c] = col[r];
        }
    }
}

/// Quantizer step in pixel units. A pixel gathers at most 1.914² ≈ 3.66 units
/// of basis magnitude, so coefficient errors up to 1/8 (qp 0) stay below half
/// a code value and intra frames reconstruct exactly.
fn step_size(qp: u8) -> f64 {
    0.25 * 2f64.powf(qp as f64 / 8.0)
}

/// Offset in (−step/2, step/2) for the `k`-th nonzero level of a plane,
/// from the golden-ratio Weyl sequence. Encoder and decoder count nonzero
/// levels identically; the low-discrepancy sequence makes the mean squared
/// error track step²/12 closely even when few coefficients are coded.
fn dither(k: u64, step: f64) -> f64 {
    if step <= step_size(0) {
        return 0.0;
    }
    let u = (k.wrapping_mul(0x9e37_79b9_7f4a_7c15) >> 11) as f64 / (1u64 << 53) as f64;
    (u - 0.5) * step * 0.999
}

/// Round the dithered magnitude to nearest. Level 0 reconstructs to exactly
/// zero and does not consume a dither value.
fn quantize(c: f64, dither: f64, step: f64) -> i32 {
    let q = ((c.abs() + dither) / step).round() as i32;
    if c < 0.0 {
        -q
    } else {
        q
    }
}

fn dequantize(level: i32, dither: f64, step: f64) -> f64 {
    (level.unsigned_abs() as f64 * step - dither) * level.signum() as f64
}

/// Starting point of a plane's dither sequence.
fn plane_key(frame: usize, plane: usize) -> u64 {
    ((frame as u64) << 2 | plane as u64).wrapping_mul(0xbf58_476d_1ce4_e5b9)
}

fn put_varint(out: &mut Vec<u8>, v: i32) {
    let mut z = ((v << 1) ^ (v >> 31)) as u32;
    loop {
        let byte = (z & 0x7f) as u8;
        z >>= 7;
        if z == 0 {
            out.push(byte);
            return;
        }
        out.push(byte | 0x80);
    }
}

struct Cursor<'a> {
    data: &'a [u8],
    pos: usize,
}

impl Cursor<'_> {
    fn err(&self, what: &str) -> Error {
        Error::Parse { token: format!("toy stream @{}", self.pos), reason: what.to_string() }
    }

    fn u8(&mut self) -> Result<u8> {
        let b = *self.data.get(self.pos).ok_or_else(|| self.err("unexpected end of stream"))?;
        self.pos += 1;
        Ok(b)
    }

    fn u32(&mut self) -> Result<u32> {
        let bytes = self.data.get(self.pos..self.pos + 4).ok_or_else(|| self.err("unexpected end of stream"))?;
        self.pos += 4;
        Ok(u32::from_le_bytes(bytes.try_into().expect("4 bytes")))
    }

    fn varint(&mut self) -> Result<i32> {
        let mut z = 0u32;
        for shift in (0..35).step_by(7) {
            let b = self.u8()?;
            z |= ((b & 0x7f) as u32) << shift;
            if b & 0x80 == 0 {
                return Ok((z >> 1) as i32 ^ -((z & 1) as i32));
            }
        }
        Err(self.err("varint too long"))
    }
}

/// Plane geometry in whole blocks.
struct PlaneLayout {
    width: usize,
    height: usize,
    bw: usize,
    bh: usize,
}

impl PlaneLayout {
    fn new(format: &FrameFormat, p: usize) -> Self {
        let (width, height) = format.plane_dims(p);
        PlaneLayout { width, height, bw: width.div_ceil(N), bh: height.div_ceil(N) }
    }

    fn load(&self, plane: &[i32], bx: usize, by: usize) -> [i32; 64] {
        let mut block = [0i32; 64];
        for y in 0..N {
            let sy = (by * N + y).min(self.height - 1);
            for x in 0..N {
                let sx = (bx * N + x).min(self.width - 1);
                block[y * N + x] = plane[sy * self.width + sx];
            }
        }
        block
    }

    fn store(&self, plane: &mut [i32], bx: usize, by: usize, block: &[i32; 64]) {
        for y in 0..N {
            let sy = by * N + y;
            if sy >= self.height {
                break;
            }
            for x in 0..N {
                let sx = bx * N + x;
                if sx < self.width {
                    plane[sy * self.width + sx] = block[y * N + x];
                }
            }
        }
    }
}

fn is_intra(gop: GopMode, index: usize, rate: Rational) -> bool {
    match gop {
        GopMode::AllIntra => true,
        GopMode::SingleIntra => index == 0,
        other => index.is_multiple_of(other.interval_frames(rate).unwrap_or(1)),
    }
}

/// Rate weight in the block mode decision, per bit and per unit step².
/// High-rate theory puts the distortion-rate slope near 2·ln2/12 ≈ 0.116.
const LAMBDA: f64 = 0.116;

struct CodedBlock {
    tokens: Vec<u8>,
    recon: [i32; 64],
    next_key: u64,
    sse: i64,
}

impl CodedBlock {
    fn cost(&self, step: f64, extra_bytes: usize) -> f64 {
        self.sse as f64 + LAMBDA * step * step * 8.0 * (self.tokens.len() + 1 + extra_bytes) as f64
    }
}

fn block_sse(a: &[i32; 64], b: &[i32; 64]) -> i64 {
    a.iter().zip(b).map(|(&s, &r)| ((s - r) as i64).pow(2)).sum()
}

/// Code `source` against `pred`. The block is sent empty (prediction only)
/// unless coding strictly lowers its squared error, which lets inter frames
/// of static content settle.
fn code_block(source: &[i32; 64], pred: &[i32; 64], key: u64, step: f64, max: i32) -> CodedBlock {
    let mut block: [f64; 64] = std::array::from_fn(|i| (source[i] - pred[i]) as f64);
    transform_2d(&mut block, false);
    let mut tokens = Vec::new();
    let mut k = key;
    let mut run = 0u8;
    let mut deq = [0f64; 64];
    for &pos in ZIGZAG.iter() {
        let d = dither(k, step);
        let q = quantize(block[pos], d, step);
        if q == 0 {
            run += 1;
            continue;
        }
        k += 1;
        deq[pos] = dequantize(q, d, step);
        tokens.push(run);
        put_varint(&mut tokens, q);
        run = 0;
    }
    transform_2d(&mut deq, true);
    let recon = std::array::from_fn(|i| (pred[i] + deq[i].round() as i32).clamp(0, max));
    let (coded, empty) = (block_sse(source, &recon), block_sse(source, pred));
    if coded < empty {
        CodedBlock { tokens, recon, next_key: k, sse: coded }
    } else {
        CodedBlock { tokens: Vec::new(), recon: *pred, next_key: key, sse: empty }
    }
}

/// Encode one plane and return its reconstruction. With a previous frame,
/// each block is predicted from the co-located previous block or, flagged
/// by a leading [`INTRA_BLOCK`] byte, from mid-gray, whichever is cheaper in
/// squared error plus weighted rate.
fn code_plane(
    out: &mut Vec<u8>,
    layout: &PlaneLayout,
    source: &[i32],
    previous: Option<&[i32]>,
    key: u64,
    step: f64,
    (mid, max): (i32, i32),
) -> Vec<i32> {
    let mut recon = vec![0i32; source.len()];
    let mut k = key;
    for by in 0..layout.bh {
        for bx in 0..layout.bw {
            let src = layout.load(source, bx, by);
            let intra = code_block(&src, &[mid; 64], k, step, max);
            let (flag, chosen) = match previous {
                None => (false, intra),
                Some(prev) => {
                    let inter = code_block(&src, &layout.load(prev, bx, by), k, step, max);
                    if intra.cost(step, 1) < inter.cost(step, 0) {
                        (true, intra)
                    } else {
                        (false, inter)
                    }
                }
            };
            if flag {
                out.push(INTRA_BLOCK);
            }
            out.extend_from_slice(&chosen.tokens);
            out.push(EOB);
            k = chosen.next_key;
            layout.store(&mut recon, bx, by, &chosen.recon);
        }
    }
    recon
}

fn decode_plane(
    cur: &mut Cursor<'_>,
    layout: &PlaneLayout,
    previous: Option<&[i32]>,
    key: u64,
    step: f64,
    (mid, max): (i32, i32),
) -> Result<Vec<i32>> {
    let mut recon = vec![0i32; layout.width * layout.height];
    let mut k = key;
    for by in 0..layout.bh {
        for bx in 0..layout.bw {
            let mut first = cur.u8()?;
            let pred = match previous {
                Some(prev) if first != INTRA_BLOCK => layout.load(prev, bx, by),
                Some(_) => {
                    first = cur.u8()?;
                    [mid; 64]
                }
                None => [mid; 64],
            };
            let mut block = [0f64; 64];
            let mut idx = 0usize;
            let mut run = first;
            loop {
                if run == EOB {
                    break;
                }
                if run > EOB {
                    return Err(cur.err("bad run byte"));
                }
                idx += run as usize;
                if idx >= 64 {
                    return Err(cur.err("coefficient index past block end"));
                }
                let level = cur.varint()?;
                if level == 0 {
                    return Err(cur.err("zero level"));
                }
                block[ZIGZAG[idx]] = dequantize(level, dither(k, step), step);
                k += 1;
                idx += 1;
                run = cur.u8()?;
            }
            transform_2d(&mut block, true);
            let rec: [i32; 64] = std::array::from_fn(|i| (pred[i] + block[i].round() as i32).clamp(0, max));
            layout.store(&mut recon, bx, by, &rec);
        }
    }
    Ok(recon)
}

fn gop_tag(gop: GopMode) -> (u8, u32) {
    match gop {
        GopMode::AllIntra => (0, 0),
        GopMode::SingleIntra => (1, 0),
        GopMode::FixedFrames(n) => (2, n),
        GopMode::Seconds(s) => (3, (s * 1000.0).round() as u32),
    }
}

fn gop_from_tag(tag: u8, param: u32) -> Option<GopMode> {
    match tag {
        0 => Some(GopMode::AllIntra),
        1 => Some(GopMode::SingleIntra),
        2 => Some(GopMode::FixedFrames(param)),
        3 => Some(GopMode::Seconds(param as f64 / 1000.0)),
        _ => None,
    }
}

pub fn toy_encode(spec: &VideoSpec, frames: &[FrameBuffer], qp: u8, gop: GopMode) -> Result<Vec<u8>> {
    if qp > MAX_QP {
        return Err(Error::RateRange { codec: "toy".into(), value: qp.to_string(), range: format!("0..={MAX_QP}") });
    }
    gop.validate()?;
    let format = spec.format();
    if let Some(i) = frames.iter().position(|f| f.format() != format) {
        return Err(Error::Dimension(format!("frame {i} does not match the clip format")));
    }
    let step = step_size(qp);
    let mid = format.mid_value() as i32;
    let max = format.max_value() as i32;

    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    for v in [format.width as u32, format.height as u32] {
        out.extend(v.to_le_bytes());
    }
    out.push(format.bit_depth);
    out.push(matches!(format.chroma, Chroma::Yuv444) as u8);
    for v in [spec.frame_rate.num, spec.frame_rate.den, frames.len() as u32] {
        out.extend(v.to_le_bytes());
    }
    out.push(qp);
    let (tag, param) = gop_tag(gop);
    out.push(tag);
    out.extend(param.to_le_bytes());

    let layouts: Vec<PlaneLayout> = (0..3).map(|p| PlaneLayout::new(&format, p)).collect();
    let mut previous: Option<[Vec<i32>; 3]> = None;
    for (i, frame) in frames.iter().enumerate() {
        let intra = previous.is_none() || is_intra(gop, i, spec.frame_rate);
        out.push(if intra { INTRA } else { INTER });
        let recon = [0, 1, 2].map(|p| {
            let src: Vec<i32> = frame.plane(p).iter().map(|&v| v as i32).collect();
            let prev = previous.as_ref().filter(|_| !intra).map(|prev| prev[p].as_slice());
            code_plane(&mut out, &layouts[p], &src, prev, plane_key(i, p), step, (mid, max))
        });
        previous = Some(recon);
    }
    Ok(out)
}

pub fn toy_decode(data: &[u8]) -> Result<(VideoSpec, Vec<FrameBuffer>)> {
    let mut cur = Cursor { data, pos: 0 };
    if data.get(..4) != Some(MAGIC.as_slice()) {
        return Err(cur.err("missing TOY1 magic"));
    }
    cur.pos = 4;
    let (width, height) = (cur.u32()? as usize, cur.u32()? as usize);
    let bit_depth = cur.u8()?;
    let chroma = if cur.u8()? == 1 { Chroma::Yuv444 } else { Chroma::Yuv420 };
    let rate = Rational::new(cur.u32()?, cur.u32()?);
    let count = cur.u32()? as usize;
    let qp = cur.u8()?;
    let (tag, param) = (cur.u8()?, cur.u32()?);
    gop_from_tag(tag, param).ok_or_else(|| cur.err("unknown gop tag"))?;
    let format = FrameFormat::new(width, height, bit_depth, chroma)?;
    let spec = VideoSpec::new(format, rate, count)?;
    let step = step_size(qp);
    let mid = format.mid_value() as i32;
    let max = format.max_value() as i32;

    let layouts: Vec<PlaneLayout> = (0..3).map(|p| PlaneLayout::new(&format, p)).collect();
    let mut previous: Option<[Vec<i32>; 3]> = None;
    let mut frames = Vec::with_capacity(count);
    for i in 0..count {
        let kind = cur.u8()?;
        let intra = match kind {
            INTRA => true,
            INTER if previous.is_some() => false,
            _ => return Err(cur.err("bad frame type")),
        };
        let mut recon: [Vec<i32>; 3] = Default::default();
        for p in 0..3 {
            let prev = previous.as_ref().filter(|_| !intra).map(|prev| prev[p].as_slice());
            recon[p] = decode_plane(&mut cur, &layouts[p], prev, plane_key(i, p), step, (mid, max))?;
        }
        let planes = [0, 1, 2].map(|p| recon[p].iter().map(|&v| v as u16).collect());
        frames.push(FrameBuffer::from_planes(format, planes)?);
        previous = Some(recon);
    }
    if cur.pos != data.len() {
        return Err(cur.err("trailing bytes"));
    }
    Ok((spec, frames))
}
