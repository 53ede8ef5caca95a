//! Balanced multi-source curation.
//!
//! For every age the curated set holds the same number of samples per state
//! of the priority feature, drawn as evenly as possible from every source.
//! The per-age size is the smallest state count at that age, clamped into
//! `[min_sample, max_sample]`, where the bounds come from low/high quantiles
//! of the per-state count distributions over ages.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::manifest::{group_counts, GroupCounts, Record};
use crate::quantile::nearest_rank_quantile;
use crate::sampling::{allocate_ascending, rng_from_seed, stratified_sample};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurationConfig {
    pub q_low: f64,
    pub q_high: f64,
    pub seed: u64,
    pub feature_priority: Vec<String>,
}

impl CurationConfig {
    pub fn new(feature_priority: Vec<String>, seed: u64) -> Self {
        CurationConfig {
            q_low: 0.2,
            q_high: 0.8,
            seed,
            feature_priority,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, q) in [("q_low", self.q_low), ("q_high", self.q_high)] {
            if !(q > 0.0 && q < 1.0) {
                return Err(Error::config(format!("{name} = {q} must lie in (0, 1)")));
            }
        }
        if self.q_low >= self.q_high {
            return Err(Error::config(format!(
                "q_low ({}) must be below q_high ({})",
                self.q_low, self.q_high
            )));
        }
        if self.feature_priority.is_empty() {
            return Err(Error::config("feature_priority is empty"));
        }
        let distinct: BTreeSet<&String> = self.feature_priority.iter().collect();
        if distinct.len() != self.feature_priority.len() {
            return Err(Error::config("feature_priority lists a feature twice"));
        }
        Ok(())
    }

    pub fn primary_feature(&self) -> &str {
        &self.feature_priority[0]
    }
}

/// Per-age curation sizes for one feature.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Thresholds {
    pub feature: String,
    pub states: Vec<String>,
    pub min_sample: usize,
    pub max_sample: usize,
    /// Smallest state count per age, before clamping.
    pub raw: BTreeMap<u32, usize>,
    pub per_age: BTreeMap<u32, usize>,
}

/// Computes per-age thresholds for `feature`.
///
/// Ages are those where any state of the feature occurs; a state absent at
/// some age counts as zero there.
pub fn compute_thresholds(
    counts: &GroupCounts,
    config: &CurationConfig,
    feature: &str,
) -> Result<Thresholds> {
    let by_cell = counts.for_feature(feature);
    if by_cell.is_empty() {
        return Err(Error::data(format!(
            "feature {feature:?} absent from counts"
        )));
    }
    let ages: BTreeSet<u32> = by_cell.keys().map(|(age, _)| *age).collect();
    let states: BTreeSet<&String> = by_cell.keys().map(|(_, s)| s).collect();
    let cell = |age: u32, state: &String| by_cell.get(&(age, state.clone())).copied().unwrap_or(0);

    let mut max_sample = usize::MAX;
    let mut min_sample = 0;
    for state in &states {
        let series: Vec<usize> = ages.iter().map(|&a| cell(a, state)).collect();
        max_sample = max_sample.min(nearest_rank_quantile(&series, config.q_high)?);
        min_sample = min_sample.max(nearest_rank_quantile(&series, config.q_low)?);
    }

    let mut raw = BTreeMap::new();
    let mut per_age = BTreeMap::new();
    for &age in &ages {
        let lowest = states.iter().map(|s| cell(age, s)).min().unwrap_or(0);
        raw.insert(age, lowest);
        // Upper bound wins if the quantile bounds cross.
        per_age.insert(age, max_sample.min(min_sample.max(lowest)));
    }
    Ok(Thresholds {
        feature: feature.to_string(),
        states: states.into_iter().cloned().collect(),
        min_sample,
        max_sample,
        raw,
        per_age,
    })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CurationPlan {
    /// Selected ids in pool order.
    pub selected_ids: Vec<String>,
    /// Counts of the selection over every feature, overall and by source.
    pub counts: GroupCounts,
    pub thresholds: Thresholds,
    /// Ages whose clamped threshold is zero.
    pub dropped_ages: Vec<u32>,
    /// Samples missing from a (age, state) target for lack of pool data.
    pub shortfalls: BTreeMap<(u32, String), usize>,
}

impl CurationPlan {
    pub fn selected_records<'a>(&self, pool: &'a [Record]) -> Vec<&'a Record> {
        let ids: BTreeSet<&str> = self.selected_ids.iter().map(String::as_str).collect();
        pool.iter()
            .filter(|r| ids.contains(r.id.as_str()))
            .collect()
    }

    /// Largest shortfall among the states at `age`.
    pub fn deficit(&self, age: u32) -> usize {
        self.shortfalls
            .iter()
            .filter(|((a, _), _)| *a == age)
            .map(|(_, &n)| n)
            .max()
            .unwrap_or(0)
    }

    pub fn audit(&self) -> CurationAudit {
        CurationAudit {
            feature: self.thresholds.feature.clone(),
            selected: self.selected_ids.len(),
            min_sample: self.thresholds.min_sample,
            max_sample: self.thresholds.max_sample,
            thresholds: self
                .thresholds
                .per_age
                .iter()
                .map(|(&age, &threshold)| AgeThreshold {
                    age,
                    raw: self.thresholds.raw[&age],
                    threshold,
                })
                .collect(),
            dropped_ages: self.dropped_ages.clone(),
            shortfalls: self
                .shortfalls
                .iter()
                .map(|((age, state), &missing)| Shortfall {
                    age: *age,
                    state: state.clone(),
                    missing,
                })
                .collect(),
            group_counts: self
                .counts
                .cells
                .iter()
                .map(|(k, &count)| CellCount {
                    age: k.age,
                    feature: k.feature.clone(),
                    state: k.state.clone(),
                    source: None,
                    count,
                })
                .collect(),
            source_counts: self
                .counts
                .by_source
                .iter()
                .map(|((k, src), &count)| CellCount {
                    age: k.age,
                    feature: k.feature.clone(),
                    state: k.state.clone(),
                    source: Some(src.clone()),
                    count,
                })
                .collect(),
        }
    }
}

/// Serializable summary of a [`CurationPlan`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurationAudit {
    pub feature: String,
    pub selected: usize,
    pub min_sample: usize,
    pub max_sample: usize,
    pub thresholds: Vec<AgeThreshold>,
    pub dropped_ages: Vec<u32>,
    pub shortfalls: Vec<Shortfall>,
    pub group_counts: Vec<CellCount>,
    pub source_counts: Vec<CellCount>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgeThreshold {
    pub age: u32,
    pub raw: usize,
    pub threshold: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Shortfall {
    pub age: u32,
    pub state: String,
    pub missing: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellCount {
    pub age: u32,
    pub feature: String,
    pub state: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<String>,
    pub count: usize,
}

/// Curates a balanced subset of `pool`.
///
/// Within each (age, state) the threshold is split over all sources, visited
/// in ascending order of how many samples they hold for that cell (ties by
/// source name); see [`allocate_ascending`]. Inside one source cell the draw
/// is uniform without replacement, stratified over the states of the
/// remaining priority features.
pub fn curate(pool: &[Record], config: &CurationConfig) -> Result<CurationPlan> {
    config.validate()?;
    let first = pool.first().ok_or_else(|| Error::data("empty pool"))?;
    if let Some(missing) = config
        .feature_priority
        .iter()
        .find(|f| !first.features.contains_key(*f))
    {
        return Err(Error::config(format!(
            "feature {missing:?} absent from the pool"
        )));
    }
    let feature = config.primary_feature();
    let thresholds = compute_thresholds(&group_counts(pool), config, feature)?;
    let sources: BTreeSet<&str> = pool.iter().map(|r| r.source.as_str()).collect();

    let mut cells: BTreeMap<(u32, &str, &str), Vec<usize>> = BTreeMap::new();
    for (idx, r) in pool.iter().enumerate() {
        let state = r.state(feature).expect("schema checked at load");
        cells
            .entry((r.age, state, r.source.as_str()))
            .or_default()
            .push(idx);
    }

    let secondary = &config.feature_priority[1..];
    let stratum = |&idx: &usize| -> Vec<&str> {
        secondary
            .iter()
            .map(|f| pool[idx].state(f).unwrap_or_default())
            .collect()
    };

    let mut rng = rng_from_seed(config.seed);
    let mut chosen: Vec<usize> = Vec::new();
    let mut dropped_ages = Vec::new();
    let mut shortfalls = BTreeMap::new();
    for (&age, &threshold) in &thresholds.per_age {
        if threshold == 0 {
            dropped_ages.push(age);
            continue;
        }
        for state in &thresholds.states {
            let mut by_source: Vec<(&str, &[usize])> = sources
                .iter()
                .map(|&src| {
                    let members = cells
                        .get(&(age, state.as_str(), src))
                        .map_or(&[][..], Vec::as_slice);
                    (src, members)
                })
                .collect();
            by_source.sort_by_key(|(src, members)| (members.len(), *src));
            let available: Vec<usize> = by_source.iter().map(|(_, m)| m.len()).collect();
            let takes = allocate_ascending(&available, threshold);
            for ((_, members), take) in by_source.iter().zip(&takes) {
                chosen.extend(stratified_sample(&mut rng, members, *take, stratum));
            }
            let got: usize = takes.iter().sum();
            if got < threshold {
                shortfalls.insert((age, state.clone()), threshold - got);
            }
        }
    }

    chosen.sort_unstable();
    let selected: Vec<Record> = chosen.iter().map(|&i| pool[i].clone()).collect();
    Ok(CurationPlan {
        selected_ids: selected.iter().map(|r| r.id.clone()).collect(),
        counts: group_counts(&selected),
        thresholds,
        dropped_ages,
        shortfalls,
    })
}
