//! Derives per-cell augmentation ratios from cell sizes and expands a small
//! manifest into a deterministic transform plan.

use std::collections::BTreeMap;

use fairset::augmentation::{generate_specs, plan_ratios, plan_to_string, AugBounds};
use fairset::manifest::{group_counts, Record};

fn main() -> fairset::Result<()> {
    let mut records = Vec::new();
    for (age, gender, n) in [(20, "f", 1), (20, "m", 4), (21, "f", 2), (21, "m", 4)] {
        for i in 0..n {
            records.push(Record {
                id: format!("{age}{gender}{i}"),
                source: "demo".into(),
                age,
                features: BTreeMap::from([("gender".into(), gender.into())]),
                path: Some(format!("img/{age}{gender}{i}.png")),
            });
        }
    }

    let ratios = plan_ratios(&group_counts(&records).for_feature("gender"))?;
    println!(
        "median {} mean {} max {} -> max_ratio {}",
        ratios.median_num, ratios.mean_num, ratios.max_num, ratios.max_ratio
    );
    for c in &ratios.cells {
        println!(
            "  ({}, {}) count {} ratio {}",
            c.class, c.state, c.count, c.ratio
        );
    }

    let specs = generate_specs(&records, &ratios, "gender", &AugBounds::default(), 99)?;
    println!("{} transforms planned; first three:", specs.len());
    for line in plan_to_string(&specs).lines().take(3) {
        println!("  {line}");
    }
    Ok(())
}
