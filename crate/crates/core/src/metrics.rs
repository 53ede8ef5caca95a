//! Prediction-quality metrics: mean absolute error and the per-age fairness
//! score.
//!
//! For each age, the mean predicted age is taken per state of a sensitive
//! feature. A pair of states is fair at that age when the two means differ by
//! strictly less than `t / 2`; an age is fair when every pair is. The score
//! `p` is the fraction of evaluated ages that are fair.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::manifest::LabelRange;

pub const DEFAULT_T: f64 = 3.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub id: String,
    pub actual_age: u32,
    pub predicted_age: f64,
    pub features: BTreeMap<String, String>,
}

/// Reads a prediction CSV: `id,actual_age,predicted_age` followed by one
/// column per feature.
pub fn load_predictions(path: impl AsRef<Path>, range: LabelRange) -> Result<Vec<Prediction>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_predictions(&text, range)
}

pub fn parse_predictions(text: &str, range: LabelRange) -> Result<Vec<Prediction>> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let header = reader
        .headers()
        .map_err(|e| Error::Parse {
            line: 1,
            message: e.to_string(),
        })?
        .clone();
    let fixed = ["id", "actual_age", "predicted_age"];
    if header.len() < 3 || header.iter().take(3).ne(fixed) {
        return Err(Error::Parse {
            line: 1,
            message: format!("header must start with {}", fixed.join(",")),
        });
    }
    let features: Vec<String> = header.iter().skip(3).map(str::to_string).collect();
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for (i, row) in reader.records().enumerate() {
        let line = i + 2;
        let row = row.map_err(|e| Error::Parse {
            line,
            message: e.to_string(),
        })?;
        let bad = |message: String| Error::Parse { line, message };
        let id = row[0].to_string();
        if id.is_empty() || !seen.insert(id.clone()) {
            return Err(bad(format!("empty or duplicate id {id:?}")));
        }
        let actual: i64 = row[1]
            .parse()
            .map_err(|_| bad(format!("actual_age {:?} is not an integer", &row[1])))?;
        if !range.contains(actual) {
            return Err(Error::AgeOutOfRange {
                line,
                age: actual,
                min: range.min,
                max: range.max,
            });
        }
        let predicted: f64 = row[2]
            .parse()
            .map_err(|_| bad(format!("predicted_age {:?} is not a number", &row[2])))?;
        if !predicted.is_finite() {
            return Err(bad("predicted_age is not finite".into()));
        }
        out.push(Prediction {
            id,
            actual_age: actual as u32,
            predicted_age: predicted,
            features: features
                .iter()
                .cloned()
                .zip(row.iter().skip(3).map(str::to_string))
                .collect(),
        });
    }
    Ok(out)
}

pub fn mae(predictions: &[Prediction]) -> Result<f64> {
    if predictions.is_empty() {
        return Err(Error::data("MAE of an empty prediction set"));
    }
    let total: f64 = predictions
        .iter()
        .map(|p| (p.predicted_age - f64::from(p.actual_age)).abs())
        .sum();
    Ok(total / predictions.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateMean {
    pub age: u32,
    pub state: String,
    pub mean: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgeFairness {
    pub age: u32,
    /// Largest pairwise distance between state means.
    pub max_distance: f64,
    pub fair: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FairnessReport {
    pub t: f64,
    pub feature: String,
    pub states: Vec<String>,
    pub per_age_means: Vec<StateMean>,
    pub per_age: Vec<AgeFairness>,
    pub score: f64,
    pub evaluated_ages: usize,
    pub skipped_ages: Vec<u32>,
}

impl FairnessReport {
    pub fn fair_ages(&self) -> usize {
        self.per_age.iter().filter(|a| a.fair).count()
    }

    /// Flat table: one row per evaluated age with each state's mean.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("age");
        for s in &self.states {
            write!(out, ",mean_{s}").unwrap();
        }
        out.push_str(",max_distance,fair\n");
        for a in &self.per_age {
            write!(out, "{}", a.age).unwrap();
            for s in &self.states {
                let m = self
                    .per_age_means
                    .iter()
                    .find(|m| m.age == a.age && &m.state == s)
                    .map(|m| m.mean)
                    .unwrap_or(f64::NAN);
                write!(out, ",{m}").unwrap();
            }
            writeln!(out, ",{},{}", a.max_distance, u8::from(a.fair)).unwrap();
        }
        out
    }
}

struct AgeMeans {
    states: Vec<String>,
    evaluable: BTreeMap<u32, Vec<(String, f64, usize)>>,
    skipped: Vec<u32>,
}

fn state_means(predictions: &[Prediction], feature: &str) -> Result<AgeMeans> {
    let mut sums: BTreeMap<u32, BTreeMap<&str, (f64, usize)>> = BTreeMap::new();
    let mut states = BTreeSet::new();
    for p in predictions {
        let state = p.features.get(feature).ok_or_else(|| {
            Error::data(format!("prediction {:?} lacks feature {feature:?}", p.id))
        })?;
        states.insert(state.as_str());
        let e = sums
            .entry(p.actual_age)
            .or_default()
            .entry(state)
            .or_insert((0.0, 0));
        e.0 += p.predicted_age;
        e.1 += 1;
    }
    if states.len() < 2 {
        return Err(Error::data(format!(
            "feature {feature:?} needs at least two states, found {}",
            states.len()
        )));
    }
    let mut evaluable = BTreeMap::new();
    let mut skipped = Vec::new();
    for (age, by_state) in sums {
        if by_state.len() < states.len() {
            skipped.push(age);
            continue;
        }
        let means = by_state
            .into_iter()
            .map(|(s, (sum, n))| (s.to_string(), sum / n as f64, n))
            .collect();
        evaluable.insert(age, means);
    }
    if evaluable.is_empty() {
        return Err(Error::data(format!(
            "no age has predictions for every state of {feature:?}"
        )));
    }
    Ok(AgeMeans {
        states: states.into_iter().map(str::to_string).collect(),
        evaluable,
        skipped,
    })
}

fn max_pairwise(means: &[(String, f64, usize)]) -> f64 {
    let mut worst: f64 = 0.0;
    for (i, a) in means.iter().enumerate() {
        for b in &means[i + 1..] {
            worst = worst.max((a.1 - b.1).abs());
        }
    }
    worst
}

/// Largest pairwise distance between per-state mean predictions, per age.
/// Ages lacking any state are left out.
pub fn mean_distance(predictions: &[Prediction], feature: &str) -> Result<BTreeMap<u32, f64>> {
    let means = state_means(predictions, feature)?;
    Ok(means
        .evaluable
        .iter()
        .map(|(&age, m)| (age, max_pairwise(m)))
        .collect())
}

pub fn fairness_score(predictions: &[Prediction], feature: &str, t: f64) -> Result<FairnessReport> {
    if t.is_nan() || t <= 0.0 {
        return Err(Error::config(format!("threshold t = {t} must be positive")));
    }
    let means = state_means(predictions, feature)?;
    let half = t / 2.0;
    let mut per_age = Vec::new();
    let mut per_age_means = Vec::new();
    for (&age, m) in &means.evaluable {
        // Every pair must be strictly closer than t/2.
        let fair = m
            .iter()
            .enumerate()
            .all(|(i, a)| m[i + 1..].iter().all(|b| (a.1 - b.1).abs() < half));
        per_age.push(AgeFairness {
            age,
            max_distance: max_pairwise(m),
            fair,
        });
        per_age_means.extend(m.iter().map(|(state, mean, count)| StateMean {
            age,
            state: state.clone(),
            mean: *mean,
            count: *count,
        }));
    }
    let n = per_age.len();
    let fair = per_age.iter().filter(|a| a.fair).count();
    Ok(FairnessReport {
        t,
        feature: feature.to_string(),
        states: means.states,
        per_age_means,
        per_age,
        score: fair as f64 / n as f64,
        evaluated_ages: n,
        skipped_ages: means.skipped,
    })
}
