//! Resolves LLR ranges against a model's training distribution and shows
//! which augmentation scores each range keeps.

use fairset::augmentation::{filter_by_llr, FilterRange};
use fairset::ood::{GaussianClassModel, LlrScore, OodModel};

fn main() -> fairset::Result<()> {
    let classes = vec![
        GaussianClassModel::new(0, vec![0.0], vec![1.0], 10)?,
        GaussianClassModel::new(1, vec![4.0], vec![1.0], 10)?,
    ];
    // Training LLRs 1..=100 make quantile q equal to 100q.
    let model = OodModel::from_classes(classes, 1, 0.0, (1..=100).map(f64::from).collect())?;

    let scores: Vec<LlrScore> = [-3.0, 2.0, 5.0, 40.0, 95.0, 97.5, 140.0]
        .iter()
        .enumerate()
        .map(|(i, &llr)| LlrScore {
            id: format!("aug{i}"),
            llr,
            predicted_class: 0,
        })
        .collect();

    for range in ["0.00:1.00", "0.05:1.00", "0.05:0.95", "0.00:0.05,0.95:1.00"] {
        let range: FilterRange = range.parse()?;
        let outcome = filter_by_llr(&scores, &model, &range)?;
        let cutoffs: Vec<String> = outcome
            .cutoffs
            .iter()
            .map(|c| format!("[{}, {}]", c.lo, c.hi))
            .collect();
        let kept: Vec<String> = outcome
            .decisions
            .iter()
            .filter(|d| d.kept)
            .map(|d| d.llr.to_string())
            .collect();
        println!(
            "{range:<22} cutoffs {:<24} keeps {}",
            cutoffs.join(" "),
            kept.join(", ")
        );
    }
    Ok(())
}
