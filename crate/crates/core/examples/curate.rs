//! Curates a skewed synthetic pool into an age- and ethnicity-balanced subset
//! and writes the stacked age histogram next to it.
//!
//! ```text
//! cargo run --example curate
//! ```

use fairset::config::PipelineConfig;
use fairset::curation::{curate, CurationConfig};
use fairset::manifest::{group_counts, Record};
use fairset::report::age_histogram_svg;

fn pool() -> Vec<Record> {
    let mut out = Vec::new();
    for (source, scale) in [("web", 3), ("studio", 1)] {
        for age in 18..30u32 {
            for (e, eth) in ["asian", "black", "white"].into_iter().enumerate() {
                for gender in ["f", "m"] {
                    let bias = if eth == "white" { 1 } else { 0 };
                    let n = scale * (1 + bias + (age as usize * 7 + e * 5) % 9);
                    for i in 0..n {
                        out.push(Record {
                            id: format!("{source}-{age}-{eth}-{gender}-{i}"),
                            source: source.into(),
                            age,
                            features: [
                                ("ethnicity".into(), eth.into()),
                                ("gender".into(), gender.into()),
                            ]
                            .into(),
                            path: None,
                        });
                    }
                }
            }
        }
    }
    out
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let pool = pool();
    let config = CurationConfig::new(vec!["ethnicity".into(), "gender".into()], 7);
    let plan = curate(&pool, &config)?;
    let audit = plan.audit();

    println!("pool {} -> selected {}", pool.len(), audit.selected);
    println!("global bounds [{}, {}]", audit.min_sample, audit.max_sample);
    for t in &audit.thresholds {
        println!(
            "  age {:>2}: raw {:>3}  threshold {:>3}",
            t.age, t.raw, t.threshold
        );
    }
    for s in &audit.shortfalls {
        println!("  short {} x {} by {}", s.age, s.state, s.missing);
    }

    let selected: Vec<Record> = plan.selected_records(&pool).into_iter().cloned().collect();
    let svg = age_histogram_svg(
        &group_counts(&selected).for_feature("ethnicity"),
        "ethnicity",
        &PipelineConfig::default().meta("example curate"),
    );
    let path = std::env::temp_dir().join("fairset-curated-ages.svg");
    std::fs::write(&path, svg)?;
    println!("histogram written to {}", path.display());
    Ok(())
}
