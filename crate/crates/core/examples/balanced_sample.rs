//! Draws a class- and state-balanced subset from an uneven set of kept
//! augmentations.

use fairset::augmentation::{sample_balanced, AugCandidate};

fn main() {
    let mut kept = Vec::new();
    for (class, state, n) in [
        (20, "f", 2),
        (20, "m", 30),
        (21, "f", 12),
        (21, "m", 9),
        (22, "m", 40),
    ] {
        for i in 0..n {
            kept.push(AugCandidate {
                aug_id: format!("{class}{state}{i}"),
                class,
                state: state.into(),
            });
        }
    }
    let outcome = sample_balanced(&kept, 30, 5);
    println!(
        "budget {} selected {} shortfall {}",
        outcome.budget,
        outcome.selected.len(),
        outcome.shortfall
    );
    for (class, b) in &outcome.class_budgets {
        println!("  class {class}: budget {b}");
    }
    for c in &outcome.cells {
        println!(
            "  ({}, {}): {} of {}",
            c.class, c.state, c.selected, c.available
        );
    }
}
