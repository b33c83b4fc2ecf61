//! Rebuild the published NotchLC-referenced savings tables from their
//! per-clip VMAF-90 bitrates.
//!
//! ```text
//! cargo run --example savings_table
//! ```

use vpcb::analysis::{tabulate_savings, BitrateCell, SavingsTable};

const PUBLISHED: &str = include_str!("../tests/data/published_bitrates.csv");

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut cells = Vec::new();
    for row in csv::Reader::from_reader(PUBLISHED.as_bytes()).records() {
        let row = row?;
        cells.push(BitrateCell {
            codec: row[0].to_string(),
            gop: row[1].to_string(),
            clip: row[2].to_string(),
            min_bitrate_mbps: if row[3].is_empty() { None } else { Some(row[3].parse()?) },
        });
    }

    // Intra-only codecs have no GOP and appear in both tables.
    for gop in ["all-intra", "single-intra"] {
        let selected: Vec<BitrateCell> = cells
            .iter()
            .filter(|c| c.gop == "n/a" && (gop == "all-intra" || c.codec == "NotchLC") || c.gop == gop)
            .cloned()
            .collect();
        let table = tabulate_savings(&selected, "NotchLC", "vmaf", 90.0)?;
        print_table(gop, &table);
    }
    Ok(())
}

fn print_table(gop: &str, table: &SavingsTable) {
    let mut clips: Vec<&String> = Vec::new();
    for row in &table.rows {
        if !clips.contains(&&row.clip) {
            clips.push(&row.clip);
        }
    }
    println!("\n{gop}, savings vs {} at {} {}", table.reference_codec, table.metric_name, table.threshold);
    print!("{:<10}", "codec");
    for clip in &clips {
        print!("{:>26}", format!("{clip} ({:.1})", table.reference_bitrates[*clip]));
    }
    println!("{:>10}", "average");
    for avg in table.averages.iter().filter(|a| a.codec != table.reference_codec) {
        print!("{:<10}", avg.codec);
        for clip in &clips {
            let row = table.rows.iter().find(|r| r.codec == avg.codec && r.gop == avg.gop && &&r.clip == clip);
            let cell = match row.and_then(|r| r.ratio.zip(r.min_bitrate_mbps)) {
                Some((ratio, mbps)) => format!("{ratio:.2}x ({mbps:.1})"),
                None => "N/A".into(),
            };
            print!("{cell:>26}");
        }
        println!("{:>10}", avg.average.map_or("N/A".into(), |a| format!("{a:.2}x")));
    }
}
