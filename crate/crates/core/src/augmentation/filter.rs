use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ood::{LlrScore, OodModel};

/// One `[q_lo, q_hi]` band of the training LLR distribution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub q_lo: f64,
    pub q_hi: f64,
}

/// Union of quantile bands; an augmentation is kept if its LLR falls in any.
///
/// A band starting at quantile 0 has no lower cutoff and one ending at
/// quantile 1 has no upper cutoff, so `0:1` keeps everything, including
/// scores outside the range seen during training.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct FilterRange {
    segments: Vec<Segment>,
}

impl FilterRange {
    pub fn new(mut segments: Vec<Segment>) -> Result<Self> {
        if segments.is_empty() {
            return Err(Error::config("filter range has no segments"));
        }
        for s in &segments {
            if !(0.0 <= s.q_lo && s.q_lo < s.q_hi && s.q_hi <= 1.0) {
                return Err(Error::config(format!(
                    "segment {}:{} must satisfy 0 <= lo < hi <= 1",
                    s.q_lo, s.q_hi
                )));
            }
        }
        segments.sort_by(|a, b| a.q_lo.total_cmp(&b.q_lo));
        if let Some(w) = segments.windows(2).find(|w| w[1].q_lo < w[0].q_hi) {
            return Err(Error::config(format!(
                "segments {}:{} and {}:{} overlap",
                w[0].q_lo, w[0].q_hi, w[1].q_lo, w[1].q_hi
            )));
        }
        Ok(FilterRange { segments })
    }

    pub fn all() -> Self {
        FilterRange {
            segments: vec![Segment {
                q_lo: 0.0,
                q_hi: 1.0,
            }],
        }
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    /// Absolute LLR cutoffs of every segment against `model`'s training scores.
    pub fn resolve(&self, model: &OodModel) -> Result<Vec<Cutoff>> {
        self.segments
            .iter()
            .map(|s| {
                let lo = if s.q_lo == 0.0 {
                    model.train_quantile(0.0)?;
                    f64::NEG_INFINITY
                } else {
                    model.train_quantile(s.q_lo)?
                };
                let hi = if s.q_hi == 1.0 {
                    f64::INFINITY
                } else {
                    model.train_quantile(s.q_hi)?
                };
                Ok(Cutoff {
                    q_lo: s.q_lo,
                    q_hi: s.q_hi,
                    lo,
                    hi,
                })
            })
            .collect()
    }
}

impl fmt::Display for FilterRange {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, s) in self.segments.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{}:{}", fmt_quantile(s.q_lo), fmt_quantile(s.q_hi))?;
        }
        Ok(())
    }
}

// Two decimals when that is exact, otherwise the shortest round-trip form.
fn fmt_quantile(q: f64) -> String {
    let short = format!("{q:.2}");
    if short.parse::<f64>() == Ok(q) {
        short
    } else {
        q.to_string()
    }
}

impl FromStr for FilterRange {
    type Err = Error;

    /// Parses `lo:hi[,lo:hi...]`, e.g. `0.00:0.05,0.95:1.00`.
    fn from_str(s: &str) -> Result<Self> {
        let segments = s
            .split(',')
            .map(|part| {
                let (lo, hi) = part
                    .split_once(':')
                    .ok_or_else(|| Error::config(format!("segment {part:?} is not lo:hi")))?;
                let parse = |v: &str| {
                    v.trim()
                        .parse::<f64>()
                        .map_err(|_| Error::config(format!("bad quantile {v:?} in {part:?}")))
                };
                Ok(Segment {
                    q_lo: parse(lo)?,
                    q_hi: parse(hi)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        FilterRange::new(segments)
    }
}

impl TryFrom<String> for FilterRange {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<FilterRange> for String {
    fn from(r: FilterRange) -> String {
        r.to_string()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cutoff {
    pub q_lo: f64,
    pub q_hi: f64,
    #[serde(with = "crate::report::float_or_inf")]
    pub lo: f64,
    #[serde(with = "crate::report::float_or_inf")]
    pub hi: f64,
}

impl Cutoff {
    pub fn contains(&self, llr: f64) -> bool {
        llr >= self.lo && llr <= self.hi
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilterDecision {
    pub aug_id: String,
    pub llr: f64,
    pub kept: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilterOutcome {
    pub cutoffs: Vec<Cutoff>,
    pub decisions: Vec<FilterDecision>,
}

impl FilterOutcome {
    pub fn kept_ids(&self) -> Vec<&str> {
        self.decisions
            .iter()
            .filter(|d| d.kept)
            .map(|d| d.aug_id.as_str())
            .collect()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("aug_id,llr,kept\n");
        for d in &self.decisions {
            out.push_str(&format!("{},{},{}\n", d.aug_id, d.llr, d.kept));
        }
        out
    }
}

/// Keeps each scored augmentation whose LLR lies inside one of the range's
/// cutoff bands (inclusive at both ends).
pub fn filter_by_llr(
    scores: &[LlrScore],
    model: &OodModel,
    range: &FilterRange,
) -> Result<FilterOutcome> {
    let cutoffs = range.resolve(model)?;
    let decisions = scores
        .iter()
        .map(|s| FilterDecision {
            aug_id: s.id.clone(),
            llr: s.llr,
            kept: cutoffs.iter().any(|c| c.contains(s.llr)),
        })
        .collect();
    Ok(FilterOutcome { cutoffs, decisions })
}

/// Reads back the `aug_id,llr,kept` table written by [`FilterOutcome::to_csv`].
pub fn parse_decisions(text: &str) -> Result<Vec<FilterDecision>> {
    let mut lines = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty());
    match lines.next() {
        Some((_, h)) if h.trim() == "aug_id,llr,kept" => {}
        _ => {
            return Err(Error::Parse {
                line: 1,
                message: "header must be aug_id,llr,kept".into(),
            })
        }
    }
    lines
        .map(|(i, l)| {
            let bad = |message: String| Error::Parse {
                line: i + 1,
                message,
            };
            let mut parts = l.trim().rsplitn(3, ',');
            let (kept, llr, id) = match (parts.next(), parts.next(), parts.next()) {
                (Some(k), Some(v), Some(id)) if !id.is_empty() => (k, v, id),
                _ => return Err(bad(format!("expected aug_id,llr,kept, got {l:?}"))),
            };
            Ok(FilterDecision {
                aug_id: id.to_string(),
                llr: llr.parse().map_err(|_| bad(format!("bad llr {llr:?}")))?,
                kept: kept
                    .parse()
                    .map_err(|_| bad(format!("bad kept flag {kept:?}")))?,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ood::GaussianClassModel;
    use proptest::prelude::*;

    fn model_with_train(train: Vec<f64>) -> OodModel {
        let c = |id, m| GaussianClassModel::new(id, vec![m], vec![1.0], 2).unwrap();
        OodModel::from_classes(vec![c(0, 0.0), c(1, 5.0)], 1, 0.0, train).unwrap()
    }

    fn scores(values: &[f64]) -> Vec<LlrScore> {
        values
            .iter()
            .enumerate()
            .map(|(i, &llr)| LlrScore {
                id: format!("a{i}"),
                llr,
                predicted_class: 0,
            })
            .collect()
    }

    fn kept(range: &str, values: &[f64]) -> Vec<f64> {
        let model = model_with_train((1..=100).map(f64::from).collect());
        let out = filter_by_llr(&scores(values), &model, &range.parse().unwrap()).unwrap();
        out.decisions
            .iter()
            .filter(|d| d.kept)
            .map(|d| d.llr)
            .collect()
    }

    #[test]
    fn parse_and_display() {
        let r: FilterRange = "0.00:0.05,0.95:1.00".parse().unwrap();
        assert_eq!(r.segments().len(), 2);
        assert_eq!(r.to_string(), "0.00:0.05,0.95:1.00");
        assert!("0.5:0.2".parse::<FilterRange>().is_err());
        assert!("0.0:0.6,0.5:1.0".parse::<FilterRange>().is_err());
        assert!("0.0-1.0".parse::<FilterRange>().is_err());
        assert!("0.0:1.5".parse::<FilterRange>().is_err());
        let odd: FilterRange = "0.025:0.975".parse().unwrap();
        assert_eq!(odd.to_string().parse::<FilterRange>().unwrap(), odd);
    }

    #[test]
    fn full_range_keeps_everything() {
        let v = [-50.0, 0.0, 1.0, 50.0, 100.0, 1e6];
        assert_eq!(kept("0.00:1.00", &v), v.to_vec());
    }

    #[test]
    fn lower_five_percent_removed() {
        let v: Vec<f64> = (-2..=103).map(f64::from).collect();
        let k = kept("0.05:1.00", &v);
        assert_eq!(
            k,
            v.iter().copied().filter(|&x| x >= 5.0).collect::<Vec<_>>()
        );
    }

    #[test]
    fn cutoffs_are_reported() {
        let model = model_with_train((1..=100).map(f64::from).collect());
        let r: FilterRange = "0.05:0.95".parse().unwrap();
        let out = filter_by_llr(&scores(&[4.0, 5.0, 95.0, 96.0]), &model, &r).unwrap();
        assert_eq!((out.cutoffs[0].lo, out.cutoffs[0].hi), (5.0, 95.0));
        assert_eq!(out.kept_ids(), vec!["a1", "a2"]);
        assert_eq!(
            out.to_csv(),
            "aug_id,llr,kept\na0,4,false\na1,5,true\na2,95,true\na3,96,false\n"
        );
        assert_eq!(parse_decisions(&out.to_csv()).unwrap(), out.decisions);
        assert!(parse_decisions("id,llr\n").is_err());
        assert!(parse_decisions("aug_id,llr,kept\na,1,maybe\n").is_err());
    }

    #[test]
    fn empty_training_scores_are_an_error() {
        let model = model_with_train(vec![]);
        assert!(filter_by_llr(&scores(&[1.0]), &model, &FilterRange::all()).is_err());
    }

    proptest! {
        #[test]
        fn widening_never_drops(
            train in proptest::collection::vec(-100.0f64..100.0, 1..80),
            values in proptest::collection::vec(-150.0f64..150.0, 1..50),
            lo in 0.0f64..0.5, hi in 0.5f64..1.0, grow_lo in 0.0f64..0.5, grow_hi in 0.0f64..0.5,
        ) {
            let model = model_with_train(train);
            let narrow = FilterRange::new(vec![Segment { q_lo: lo, q_hi: hi }]).unwrap();
            let wide = FilterRange::new(vec![Segment {
                q_lo: (lo - grow_lo).max(0.0),
                q_hi: (hi + grow_hi).min(1.0),
            }]).unwrap();
            let s = scores(&values);
            let a = filter_by_llr(&s, &model, &narrow).unwrap();
            let b = filter_by_llr(&s, &model, &wide).unwrap();
            for (x, y) in a.decisions.iter().zip(&b.decisions) {
                prop_assert!(!x.kept || y.kept);
            }
        }
    }
}
