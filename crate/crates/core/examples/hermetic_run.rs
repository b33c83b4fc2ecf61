//! Run a complete experiment with no external tools: synthetic clips, the
//! built-in toy codec as both an intra-only mezzanine and a hybrid codec,
//! direct and simulated-camera channels, then a savings report.
//!
//! ```text
//! cargo run --release --example hermetic_run [output-dir]
//! ```

use std::path::PathBuf;

use vpcb::experiment::{report_store, run_experiment, Manifest, ReportOptions, RunMode};

const MANIFEST: &str = r#"
output_dir = "out"
seed = 7
threshold = 42.0
reference_codec = "mezzanine"
gop_modes = ["all-intra", "single-intra"]
channels = ["direct", "camera"]

[[clips]]
name = "bar"
clip_id = 1
synthetic = { kind = "moving_bar", width = 320, height = 192, frames = 12 }

[[clips]]
name = "text"
clip_id = 2
synthetic = { kind = "text_like", width = 320, height = 192, frames = 12 }

[[codecs]]
name = "mezzanine"
preset = "toy"
gop_free = true

[[codecs]]
name = "toy"

[ladder]
rate_params = [12, 20, 28, 36, 44]

[channel_profiles.camera]
noise_sigma = 0.5
jitter = { duplicate_prob = 0.05, skip_prob = 0.05 }
"#;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let (_tmp, root) = match std::env::args().nth(1) {
        Some(dir) => (None, PathBuf::from(dir)),
        None => {
            let tmp = tempfile::tempdir()?;
            let root = tmp.path().to_path_buf();
            (Some(tmp), root)
        }
    };
    std::fs::create_dir_all(&root)?;
    let manifest_path = root.join("experiment.toml");
    std::fs::write(&manifest_path, MANIFEST)?;
    let manifest = Manifest::load(&manifest_path)?;

    let summary = run_experiment(&manifest, RunMode::All)?;
    println!(
        "manifest {}: {} tuples evaluated, {} records, {} curves",
        &summary.manifest_hash[..12],
        summary.evaluated,
        summary.records_written,
        summary.curves
    );
    for failure in &summary.failures {
        println!("  failed: {failure:?}");
    }

    let again = run_experiment(&manifest, RunMode::All)?;
    println!("rerun: {} evaluated, {} skipped, {} records", again.evaluated, again.skipped, again.records_written);

    let reports = report_store(&manifest.store_path(), &manifest.output_dir().join("report"), &ReportOptions::default())?;
    for report in &reports {
        println!("\nchannel {}: {}", report.channel, report.files.csv.display());
        print!("{}", std::fs::read_to_string(&report.files.csv)?);
    }
    Ok(())
}
