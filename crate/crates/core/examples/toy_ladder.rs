//! Sweep the built-in toy codec over its qp range in both GOP modes, then
//! pick a JND-spaced ladder from the PSNR curve.
//!
//! ```text
//! cargo run --release --example toy_ladder
//! ```

use vpcb::codec::{encode, jnd_ladder_over, CodecConfig, GopMode, JndParams, RateParam};
use vpcb::media::{
    generate_synthetic_clip, read_y4m_file, write_y4m_file, Chroma, ClipDescriptor, FrameFormat, Rational, Role,
    SynthKind, VideoSpec,
};
use vpcb::metrics::{psnr_sequence, RegionMask};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = tempfile::tempdir()?;
    let spec = VideoSpec::new(FrameFormat::new(256, 144, 8, Chroma::Yuv420)?, Rational::new(30, 1), 12)?;
    let frames = generate_synthetic_clip(SynthKind::MovingBar, &spec, 9)?;
    let path = dir.path().join("bar.y4m");
    write_y4m_file(&path, &spec, &frames)?;
    let clip = ClipDescriptor { clip_id: 1, name: "bar".into(), spec, role: Role::Ref, storage_path: path };

    for gop in [GopMode::AllIntra, GopMode::SingleIntra] {
        let config = CodecConfig::toy(Some(gop));
        let score = |rp: &RateParam| -> vpcb::Result<(f64, f64)> {
            let point = encode(&clip, &config, rp, &dir.path().join(gop.short_label()))?;
            let (_, decoded) = read_y4m_file(&point.decoded_clip.storage_path)?;
            let quality = psnr_sequence(frames.iter().zip(&decoded), &RegionMask::Full)?;
            Ok((point.bitrate_mbps, quality.pooled))
        };

        println!("{gop}");
        println!("  {:>3} {:>10} {:>8}", "qp", "Mbps", "PSNR");
        for qp in (0..=48).step_by(8) {
            let (mbps, psnr) = score(&RateParam::Int(qp))?;
            println!("  {qp:>3} {mbps:>10.3} {psnr:>8.2}");
        }

        // qp 0 is lossless and pins PSNR at its cap, so the ladder starts above it.
        let values: Vec<RateParam> = (4..=63).map(RateParam::Int).collect();
        let params = JndParams { step: 3.0, floor: 30.0, points: 5 };
        let ladder = jnd_ladder_over(&values, |rp| score(rp).map(|(_, q)| q), &params)?;
        let picks: Vec<String> = ladder
            .rate_params
            .iter()
            .zip(&ladder.qualities)
            .map(|(rp, q)| format!("qp {rp} ({q:.1} dB)"))
            .collect();
        println!("  ladder: {}", picks.join(", "));
        for w in &ladder.warnings {
            println!("  warning: {w}");
        }
    }
    Ok(())
}
