//! Capture a marked clip through a channel that drops and repeats frames,
//! then recover the frame mapping from the markers alone and compare it with
//! the channel's own trace.
//!
//! ```text
//! cargo run --release --example jitter_alignment
//! ```

use vpcb::alignment::{build_alignment_map, pair_frames, EventKind, PairPolicy};
use vpcb::channel::{apply_channel_traced, ChannelConfig, Jitter};
use vpcb::experiment::embed_clip_markers;
use vpcb::marker::MarkerGeometry;
use vpcb::media::{generate_synthetic_clip, Chroma, FrameFormat, Rational, SynthKind, VideoSpec};
use vpcb::metrics::{psnr_sequence, RegionMask};

const CLIP_ID: u16 = 7;

fn main() -> vpcb::Result<()> {
    let spec = VideoSpec::new(FrameFormat::new(384, 216, 8, Chroma::Yuv420)?, Rational::new(50, 1), 40)?;
    let geometry = MarkerGeometry::from_size(40, 2)?;
    let source = embed_clip_markers(&generate_synthetic_clip(SynthKind::MovingBar, &spec, 1)?, CLIP_ID, &geometry, &[])?;

    let channel = ChannelConfig {
        noise_sigma: 4.0,
        jitter: Some(Jitter { duplicate_prob: 0.08, skip_prob: 0.08 }),
        seed: 99,
        ..ChannelConfig::identity()
    };
    let capture = apply_channel_traced(&source, &channel)?;
    println!("{} source frames, {} captured", source.len(), capture.frames.len());

    let map = build_alignment_map(&capture.frames, CLIP_ID, &geometry)?;
    let recovered: Vec<usize> = map.entries.iter().map(|e| e.source_index as usize).collect();
    println!("trace matches markers: {}", recovered == capture.source_indices);
    for event in &map.events {
        println!("  {:?} at capture {} {:?}", event.kind, event.captured_index, event.detail);
    }
    println!(
        "duplicates {}, skips {}, unreadable {}",
        map.count(EventKind::Duplicate),
        map.count(EventKind::Skip),
        map.count(EventKind::Unreadable)
    );

    // Scoring keeps the first capture of every source frame that survived.
    let pairs = pair_frames(&map, &source, &capture.frames, PairPolicy::FirstOfDup)?;
    let mask = RegionMask::ExcludeMarkers { geometry };
    let quality = psnr_sequence(pairs.iter().copied(), &mask)?;
    println!("{} paired frames, PSNR {:.2} dB", quality.per_frame.len(), quality.pooled);
    Ok(())
}
