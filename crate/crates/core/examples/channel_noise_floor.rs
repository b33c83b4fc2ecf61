//! Calibrate sensor noise for a target PSNR floor, capture the same clip
//! repeatedly, and measure how much captures disagree with each other.
//!
//! ```text
//! cargo run --release --example channel_noise_floor
//! ```

use vpcb::channel::{apply_channel, calibrate_noise_for_floor, ChannelConfig};
use vpcb::media::{generate_synthetic_clip, Chroma, FrameFormat, Rational, SynthKind, VideoSpec};
use vpcb::metrics::{noise_floor, RegionMask};

const TARGET_PSNR: f64 = 40.0;
const CAPTURES: u64 = 12;

fn main() -> vpcb::Result<()> {
    let spec = VideoSpec::new(FrameFormat::new(320, 180, 8, Chroma::Yuv420)?, Rational::new(25, 1), 10)?;
    let clip = generate_synthetic_clip(SynthKind::MovingBar, &spec, 5)?;

    let sigma = calibrate_noise_for_floor(TARGET_PSNR, 8)?;
    println!("sigma {sigma:.3} code values for a {TARGET_PSNR} dB floor");

    let profile = ChannelConfig::with_noise(sigma, 2024);
    let captures: Vec<_> =
        (0..CAPTURES).map(|id| apply_channel(&clip, &profile.for_capture(id))).collect::<vpcb::Result<_>>()?;

    let floor = noise_floor(&captures, &clip, &RegionMask::Full)?;
    for (id, score) in floor.scores.iter().enumerate() {
        println!("capture {id:2}: {score:.3} dB");
    }
    println!("mean {:.3} dB, range {:.3} dB ({:.3}..{:.3})", floor.mean, floor.range, floor.min, floor.max);
    Ok(())
}
