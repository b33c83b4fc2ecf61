//! YUV4MPEG2 container.
//!
//! Supported colorspaces: `C420` (and its `jpeg`/`paldv`/`mpeg2` siting
//! variants), `C444`, `C420p10`, `C444p10`, `C420p12`, `C444p12`. High bit
//! depth samples are little-endian 16-bit words.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{Chroma, FrameBuffer, FrameFormat, Rational, VideoSpec};
use crate::error::{Error, Result};

const SIGNATURE: &str = "YUV4MPEG2";
const FRAME_TAG: &[u8] = b"FRAME";

fn parse_err(token: &str, reason: impl Into<String>) -> Error {
    Error::Parse { token: token.to_string(), reason: reason.into() }
}

fn colorspace_tag(tag: &str) -> Result<(Chroma, u8)> {
    Ok(match tag {
        "420" | "420jpeg" | "420paldv" | "420mpeg2" => (Chroma::Yuv420, 8),
        "444" => (Chroma::Yuv444, 8),
        "420p10" => (Chroma::Yuv420, 10),
        "444p10" => (Chroma::Yuv444, 10),
        "420p12" => (Chroma::Yuv420, 12),
        "444p12" => (Chroma::Yuv444, 12),
        other => return Err(Error::UnsupportedFormat(format!("y4m colorspace C{other}"))),
    })
}

fn tag_for(format: &FrameFormat) -> &'static str {
    match (format.chroma, format.bit_depth) {
        (Chroma::Yuv420, 8) => "420jpeg",
        (Chroma::Yuv444, 8) => "444",
        (Chroma::Yuv420, 10) => "420p10",
        (Chroma::Yuv444, 10) => "444p10",
        (Chroma::Yuv420, _) => "420p12",
        (Chroma::Yuv444, _) => "444p12",
    }
}

fn parse_header(line: &str) -> Result<(FrameFormat, Rational)> {
    let mut tokens = line.split(' ').filter(|t| !t.is_empty());
    match tokens.next() {
        Some(SIGNATURE) => {}
        Some(other) => return Err(parse_err(other, "missing YUV4MPEG2 signature")),
        None => return Err(parse_err("", "empty header")),
    }
    let (mut width, mut height, mut rate) = (None, None, None);
    let mut colorspace = (Chroma::Yuv420, 8);
    for token in tokens {
        let (key, value) = token.split_at(1);
        match key {
            "W" => width = Some(value.parse::<usize>().map_err(|_| parse_err(token, "bad width"))?),
            "H" => height = Some(value.parse::<usize>().map_err(|_| parse_err(token, "bad height"))?),
            "F" => {
                let r: Rational = value.parse().map_err(|_| parse_err(token, "bad frame rate"))?;
                rate = Some(r);
            }
            "C" => colorspace = colorspace_tag(value)?,
            // interlacing, aspect, comments
            "I" | "A" | "X" => {}
            _ => return Err(parse_err(token, "unknown header parameter")),
        }
    }
    let width = width.ok_or_else(|| parse_err("W", "missing width"))?;
    let height = height.ok_or_else(|| parse_err("H", "missing height"))?;
    let rate = rate.ok_or_else(|| parse_err("F", "missing frame rate"))?;
    let format = FrameFormat::new(width, height, colorspace.1, colorspace.0)
        .map_err(|e| parse_err(&format!("W{width} H{height}"), e.to_string()))?;
    Ok((format, rate))
}

/// Streaming frame reader.
pub struct Y4mReader<R> {
    inner: R,
    format: FrameFormat,
    frame_rate: Rational,
    frames_read: usize,
    scratch: Vec<u8>,
}

impl<R: BufRead> Y4mReader<R> {
    pub fn new(mut inner: R) -> Result<Self> {
        let mut line = Vec::new();
        inner.read_until(b'\n', &mut line)?;
        if line.last() != Some(&b'\n') {
            let shown = String::from_utf8_lossy(&line).into_owned();
            return Err(parse_err(shown.split(' ').next().unwrap_or(""), "unterminated header"));
        }
        line.pop();
        let text = std::str::from_utf8(&line).map_err(|_| parse_err("<binary>", "header is not text"))?;
        let (format, frame_rate) = parse_header(text)?;
        Ok(Y4mReader { inner, format, frame_rate, frames_read: 0, scratch: Vec::new() })
    }

    pub fn format(&self) -> FrameFormat {
        self.format
    }

    pub fn frame_rate(&self) -> Rational {
        self.frame_rate
    }

    pub fn next_frame(&mut self) -> Result<Option<FrameBuffer>> {
        let index = self.frames_read;
        let mut line = Vec::new();
        let n = self.inner.read_until(b'\n', &mut line)?;
        if n == 0 {
            return Ok(None);
        }
        if line.last() != Some(&b'\n') {
            return Err(Error::Truncated { frame: index });
        }
        if !line.starts_with(FRAME_TAG) || !matches!(line.get(FRAME_TAG.len()), Some(b' ' | b'\n')) {
            let shown = String::from_utf8_lossy(&line[..line.len() - 1]).into_owned();
            return Err(parse_err(&shown, format!("expected FRAME marker for frame {index}")));
        }

        let bps = self.format.bytes_per_sample();
        let total = self.format.samples_per_frame() * bps;
        self.scratch.resize(total, 0);
        read_full(&mut self.inner, &mut self.scratch).map_err(|e| match e {
            ReadFail::Short => Error::Truncated { frame: index },
            ReadFail::Io(e) => Error::RawIo(e),
        })?;

        let max = self.format.max_value();
        let mut offset = 0;
        let planes = [0, 1, 2].map(|p| {
            let len = self.format.plane_len(p);
            let bytes = &self.scratch[offset..offset + len * bps];
            offset += len * bps;
            if bps == 1 {
                bytes.iter().map(|&b| b as u16).collect::<Vec<_>>()
            } else {
                bytes.chunks_exact(2).map(|c| u16::from_le_bytes([c[0], c[1]])).collect()
            }
        });
        if planes.iter().flatten().any(|&v| v > max) {
            return Err(parse_err(
                &format!("FRAME {index}"),
                format!("sample exceeds {}-bit range", self.format.bit_depth),
            ));
        }
        self.frames_read += 1;
        Ok(Some(FrameBuffer::from_planes(self.format, planes)?))
    }
}

enum ReadFail {
    Short,
    Io(std::io::Error),
}

fn read_full<R: Read>(r: &mut R, buf: &mut [u8]) -> std::result::Result<(), ReadFail> {
    let mut filled = 0;
    while filled < buf.len() {
        match r.read(&mut buf[filled..]) {
            Ok(0) => return Err(ReadFail::Short),
            Ok(n) => filled += n,
            Err(e) if e.kind() == std::io::ErrorKind::Interrupted => {}
            Err(e) => return Err(ReadFail::Io(e)),
        }
    }
    Ok(())
}

impl<R: BufRead> Iterator for Y4mReader<R> {
    type Item = Result<FrameBuffer>;

    fn next(&mut self) -> Option<Self::Item> {
        self.next_frame().transpose()
    }
}

/// Read a whole stream. `frame_count` in the returned spec is the number of
/// FRAME markers found.
pub fn read_y4m<R: BufRead>(source: R) -> Result<(VideoSpec, Vec<FrameBuffer>)> {
    let mut reader = Y4mReader::new(source)?;
    let mut frames = Vec::new();
    while let Some(frame) = reader.next_frame()? {
        frames.push(frame);
    }
    let spec = VideoSpec::new(reader.format, reader.frame_rate, frames.len())?;
    Ok((spec, frames))
}

pub fn read_y4m_file(path: impl AsRef<Path>) -> Result<(VideoSpec, Vec<FrameBuffer>)> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_y4m(BufReader::new(file))
}

pub fn write_y4m<W: Write>(mut out: W, spec: &VideoSpec, frames: &[FrameBuffer]) -> Result<()> {
    let format = spec.format();
    format.validate()?;
    for (i, frame) in frames.iter().enumerate() {
        if frame.format() != format {
            return Err(Error::Dimension(format!(
                "frame {i} is {}x{} {}-bit {}, stream is {}x{} {}-bit {}",
                frame.width(),
                frame.height(),
                frame.format().bit_depth,
                frame.format().chroma,
                format.width,
                format.height,
                format.bit_depth,
                format.chroma
            )));
        }
    }
    writeln!(
        out,
        "{SIGNATURE} W{} H{} F{}:{} Ip A1:1 C{}",
        format.width,
        format.height,
        spec.frame_rate.num,
        spec.frame_rate.den,
        tag_for(&format)
    )?;
    let mut buf = Vec::with_capacity(format.samples_per_frame() * format.bytes_per_sample());
    for frame in frames {
        buf.clear();
        for plane in frame.planes() {
            if format.bit_depth > 8 {
                buf.extend(plane.iter().flat_map(|v| v.to_le_bytes()));
            } else {
                buf.extend(plane.iter().map(|&v| v as u8));
            }
        }
        out.write_all(b"FRAME\n")?;
        out.write_all(&buf)?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_y4m_file(path: impl AsRef<Path>, spec: &VideoSpec, frames: &[FrameBuffer]) -> Result<()> {
    let path = path.as_ref();
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_y4m(BufWriter::new(file), spec, frames)
}
