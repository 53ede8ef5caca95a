//! Distribution-aware augmentation: plan per-cell augmentation ratios,
//! generate and apply transforms, keep augmentations whose LLR falls inside
//! a band of the training LLR distribution, and draw a balanced final set.

mod filter;
mod ratios;
mod sample;
mod transform;

pub use filter::{
    filter_by_llr, parse_decisions, Cutoff, FilterDecision, FilterOutcome, FilterRange, Segment,
};
pub use ratios::{plan_ratios, AugRatioTable, CellRatio};
pub use sample::{sample_balanced, AugCandidate, CellSelection, SampleOutcome};
pub use transform::{
    apply_transform, generate_specs, load_png, save_png, AugBounds, Bound, TransformParams,
    TransformSpec,
};

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

pub fn plan_to_string(specs: &[TransformSpec]) -> String {
    let mut out = String::new();
    for s in specs {
        out.push_str(&serde_json::to_string(s).expect("spec serializes"));
        out.push('\n');
    }
    out
}

pub fn save_plan(path: impl AsRef<Path>, specs: &[TransformSpec]) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, plan_to_string(specs)).map_err(|e| Error::io(path, e))
}

pub fn load_plan(path: impl AsRef<Path>) -> Result<Vec<TransformSpec>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| Error::Parse {
                line: i + 1,
                message: e.to_string(),
            })
        })
        .collect()
}
