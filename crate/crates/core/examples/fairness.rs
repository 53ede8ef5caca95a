//! Scores age predictions for accuracy and per-age group parity.

use fairset::manifest::LabelRange;
use fairset::metrics::{fairness_score, mae, parse_predictions, DEFAULT_T};

const PREDICTIONS: &str = "\
id,actual_age,predicted_age,gender
a,20,20.5,f
b,20,19.8,m
c,30,33.5,f
d,30,30.0,m
e,40,39.0,f
f,40,41.0,m
g,40,40.0,m
";

fn main() -> fairset::Result<()> {
    let preds = parse_predictions(PREDICTIONS, LabelRange::default())?;
    println!("MAE {:.3}", mae(&preds)?);

    let report = fairness_score(&preds, "gender", DEFAULT_T)?;
    println!(
        "fairness {:.3} ({} of {} ages fair)",
        report.score,
        report.fair_ages(),
        report.evaluated_ages
    );
    print!("{}", report.to_csv());
    Ok(())
}
