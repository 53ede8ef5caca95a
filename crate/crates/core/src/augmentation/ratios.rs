use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quantile::nearest_rank_quantile;

/// Augmentation multipliers per (class, state) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugRatioTable {
    pub median_num: usize,
    /// Exact mean cell size; `mean_num` is this rounded to the nearest integer.
    pub mean_exact: f64,
    pub mean_num: usize,
    pub max_num: usize,
    pub max_ratio: usize,
    pub cells: Vec<CellRatio>,
    /// Cells that hold no samples and therefore cannot be augmented.
    pub empty_cells: Vec<(u32, String)>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellRatio {
    pub class: u32,
    pub state: String,
    pub count: usize,
    pub ratio: usize,
}

impl AugRatioTable {
    pub fn ratio(&self, class: u32, state: &str) -> usize {
        self.cells
            .iter()
            .find(|c| c.class == class && c.state == state)
            .map_or(0, |c| c.ratio)
    }
}

fn ceil_div(a: usize, b: usize) -> usize {
    a.div_ceil(b)
}

/// Plans how many augmented copies each sample of a cell receives.
///
/// Median (lower, nearest-rank), mean and maximum are taken over the
/// non-empty cells. `max_ratio = ceil(max / mean)` caps every cell's
/// `ceil(median / count)`.
pub fn plan_ratios(group_counts: &BTreeMap<(u32, String), usize>) -> Result<AugRatioTable> {
    let sizes: Vec<usize> = group_counts.values().copied().filter(|&n| n > 0).collect();
    if sizes.is_empty() {
        return Err(Error::data("every cell is empty; nothing to augment"));
    }
    let median_num = nearest_rank_quantile(&sizes, 0.5)?;
    let mean_exact = sizes.iter().sum::<usize>() as f64 / sizes.len() as f64;
    let mean_num = (mean_exact.round() as usize).max(1);
    let max_num = *sizes.iter().max().expect("non-empty");
    let max_ratio = ceil_div(max_num, mean_num);

    let mut cells = Vec::new();
    let mut empty_cells = Vec::new();
    for ((class, state), &count) in group_counts {
        let ratio = if count == 0 {
            empty_cells.push((*class, state.clone()));
            0
        } else {
            ceil_div(median_num, count).min(max_ratio)
        };
        cells.push(CellRatio {
            class: *class,
            state: state.clone(),
            count,
            ratio,
        });
    }
    Ok(AugRatioTable {
        median_num,
        mean_exact,
        mean_num,
        max_num,
        max_ratio,
        cells,
        empty_cells,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn cells(counts: &[usize]) -> BTreeMap<(u32, String), usize> {
        counts
            .iter()
            .enumerate()
            .map(|(i, &n)| ((i as u32, "s".to_string()), n))
            .collect()
    }

    #[test]
    fn hand_evaluated_fixture() {
        let t = plan_ratios(&cells(&[30, 100, 400])).unwrap();
        assert_eq!(
            (t.median_num, t.mean_num, t.max_num, t.max_ratio),
            (100, 177, 400, 3)
        );
        assert!((t.mean_exact - 530.0 / 3.0).abs() < 1e-12);
        assert_eq!(t.ratio(0, "s"), 3);
        assert_eq!(t.ratio(1, "s"), 1);
        assert_eq!(t.ratio(2, "s"), 1);
    }

    #[test]
    fn uniform_cells_need_no_boost() {
        let t = plan_ratios(&cells(&[7, 7, 7])).unwrap();
        assert!(t.cells.iter().all(|c| c.ratio == 1));
    }

    #[test]
    fn empty_cells() {
        let t = plan_ratios(&cells(&[0, 10, 20])).unwrap();
        assert_eq!(t.ratio(0, "s"), 0);
        assert_eq!(t.empty_cells, vec![(0, "s".to_string())]);
        assert!(plan_ratios(&cells(&[0, 0])).is_err());
    }

    proptest! {
        #[test]
        fn ratios_are_bounded(counts in proptest::collection::vec(0usize..500, 1..30)) {
            prop_assume!(counts.iter().any(|&n| n > 0));
            let t = plan_ratios(&cells(&counts)).unwrap();
            for c in &t.cells {
                if c.count == 0 {
                    prop_assert_eq!(c.ratio, 0);
                } else {
                    prop_assert!(c.ratio >= 1 && c.ratio <= t.max_ratio);
                    if c.count >= t.median_num {
                        prop_assert_eq!(c.ratio, 1);
                    }
                }
            }
        }
    }
}
