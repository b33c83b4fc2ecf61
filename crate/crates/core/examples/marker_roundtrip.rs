//! Stamp frame-id markers into a clip, damage one corner, and read the ids
//! back through the corner vote.
//!
//! ```text
//! cargo run --example marker_roundtrip
//! ```

use vpcb::marker::{decode_frame_id, embed_markers, MarkerGeometry, MarkerPayload};
use vpcb::media::{generate_synthetic_clip, Chroma, FrameBuffer, FrameFormat, Rational, Rect, SynthKind, VideoSpec};

fn main() -> vpcb::Result<()> {
    let spec = VideoSpec::new(FrameFormat::new(640, 360, 10, Chroma::Yuv420)?, Rational::new(24, 1), 6)?;
    let frames = generate_synthetic_clip(SynthKind::TextLike, &spec, 3)?;
    let geometry = MarkerGeometry::from_size(60, 2)?;
    println!(
        "marker {}px per corner, {:.2}% of the frame",
        geometry.size(),
        100.0 * geometry.area_fraction(spec.format().width, spec.format().height)
    );

    for (i, frame) in frames.iter().enumerate() {
        let payload = MarkerPayload::new(0x2a, 1000 + i as u32)?;
        let mut marked = embed_markers(frame, &payload, &geometry)?;
        if i % 2 == 1 {
            // Paint over the top-left marker as a light stand or reflection would.
            let [top_left, ..] = geometry.corners(marked.width(), marked.height())?;
            marked = blank(marked, top_left)?;
        }
        match decode_frame_id(&marked, &geometry) {
            Ok(id) => println!(
                "frame {i}: clip {:#x} index {} ({} of 4 corners agree)",
                id.payload.clip_id(),
                id.payload.frame_index(),
                id.agreement
            ),
            Err(e) => println!("frame {i}: unreadable {:?}", e.corners),
        }
    }
    Ok(())
}

fn blank(frame: FrameBuffer, rect: Rect) -> vpcb::Result<FrameBuffer> {
    let (format, width) = (frame.format(), frame.width());
    let mut planes = frame.into_planes();
    for y in rect.y..rect.y + rect.height {
        planes[0][y * width + rect.x..y * width + rect.x + rect.width].fill(0);
    }
    FrameBuffer::from_planes(format, planes)
}
