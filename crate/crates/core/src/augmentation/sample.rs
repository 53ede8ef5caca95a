use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::sampling::{allocate_ascending, rng_from_seed, sample_in_order};

/// A kept augmentation and the cell it balances.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AugCandidate {
    pub aug_id: String,
    pub class: u32,
    pub state: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSelection {
    pub class: u32,
    pub state: String,
    pub available: usize,
    pub selected: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleOutcome {
    pub budget: usize,
    /// Selected augmentation ids, grouped by class then state, each group in
    /// input order.
    pub selected: Vec<String>,
    pub class_budgets: BTreeMap<u32, usize>,
    pub cells: Vec<CellSelection>,
    /// Budget left unspent for lack of kept augmentations.
    pub shortfall: usize,
}

/// Draws a class- and state-balanced subset of at most `budget` augmentations.
///
/// The budget is split evenly over classes (floor; the remainder goes one
/// each to the classes with the most candidates, ties to the smaller class).
/// Within a class, states are visited in ascending order of availability and
/// a state that cannot fill its share passes the rest on to the states after
/// it, as in curation.
pub fn sample_balanced(kept: &[AugCandidate], budget: usize, seed: u64) -> SampleOutcome {
    let mut by_cell: BTreeMap<(u32, &str), Vec<&AugCandidate>> = BTreeMap::new();
    for c in kept {
        by_cell
            .entry((c.class, c.state.as_str()))
            .or_default()
            .push(c);
    }
    let classes: BTreeSet<u32> = kept.iter().map(|c| c.class).collect();
    let states: BTreeSet<&str> = kept.iter().map(|c| c.state.as_str()).collect();

    let mut class_budgets: BTreeMap<u32, usize> = BTreeMap::new();
    if !classes.is_empty() {
        let base = budget / classes.len();
        let extra = budget % classes.len();
        let mut order: Vec<(u32, usize)> = classes
            .iter()
            .map(|&c| (c, kept.iter().filter(|k| k.class == c).count()))
            .collect();
        order.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
        for (rank, (class, _)) in order.iter().enumerate() {
            class_budgets.insert(*class, base + usize::from(rank < extra));
        }
    }

    let mut rng = rng_from_seed(seed);
    let mut selected = Vec::new();
    let mut cells = Vec::new();
    for (&class, &class_budget) in &class_budgets {
        let mut per_state: Vec<(&str, &[&AugCandidate])> = states
            .iter()
            .map(|&s| (s, by_cell.get(&(class, s)).map_or(&[][..], Vec::as_slice)))
            .collect();
        per_state.sort_by_key(|(s, members)| (members.len(), *s));
        let available: Vec<usize> = per_state.iter().map(|(_, m)| m.len()).collect();
        let takes = allocate_ascending(&available, class_budget);
        let mut picked: BTreeMap<&str, Vec<String>> = BTreeMap::new();
        for ((state, members), &take) in per_state.iter().zip(&takes) {
            let chosen = sample_in_order(&mut rng, members, take);
            picked.insert(state, chosen.iter().map(|c| c.aug_id.clone()).collect());
            cells.push(CellSelection {
                class,
                state: state.to_string(),
                available: members.len(),
                selected: take,
            });
        }
        selected.extend(picked.into_values().flatten());
    }
    cells.sort_by(|a, b| (a.class, &a.state).cmp(&(b.class, &b.state)));
    let spent = selected.len();
    SampleOutcome {
        budget,
        selected,
        class_budgets,
        cells,
        shortfall: budget - spent.min(budget),
    }
}
