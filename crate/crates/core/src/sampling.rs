//! Seeded stream derivation and the allocation/sampling helpers shared by
//! curation and augmentation sampling.

use std::collections::BTreeMap;

use rand::seq::index;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Named random streams split off a single pipeline seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Curate = 1,
    AugmentPlan = 2,
    AugmentSample = 3,
}

/// Derives an independent seed for `stream` from the pipeline seed.
///
/// ChaCha keeps a separate 64-bit stream id next to the key, so each
/// subcommand draws from its own counter space of the same key.
pub fn stream_seed(seed: u64, stream: Stream) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream as u64);
    rng.next_u64()
}

pub fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Splits `target` over cells visited in the given order (callers pass them
/// sorted ascending by availability).
///
/// Every cell starts with `target / n`; the `target % n` leftover units go one
/// each to the last cells. A cell that cannot meet its size gives everything
/// it has, and its shortfall is split evenly over the cells not yet visited,
/// with the division remainder going to the final cell. Shortfall at the
/// final cell is lost. Returns how many to take per cell.
pub fn allocate_ascending(available: &[usize], target: usize) -> Vec<usize> {
    let n = available.len();
    if n == 0 {
        return Vec::new();
    }
    let (base, extra) = (target / n, target % n);
    let mut size: Vec<usize> = (0..n).map(|j| base + usize::from(j >= n - extra)).collect();
    let mut takes = Vec::with_capacity(n);
    for (j, &avail) in available.iter().enumerate() {
        let take = size[j].min(avail);
        let remain = size[j] - take;
        let left = n - j - 1;
        if remain > 0 && left > 0 {
            for s in &mut size[j + 1..] {
                *s += remain / left;
            }
            size[n - 1] += remain % left;
        }
        takes.push(take);
    }
    takes
}

/// Largest-remainder apportionment of `k` over strata of the given sizes.
/// Never assigns more than a stratum holds as long as `k <= sum(sizes)`.
pub fn apportion(sizes: &[usize], k: usize) -> Vec<usize> {
    let total: usize = sizes.iter().sum();
    if total == 0 {
        return vec![0; sizes.len()];
    }
    let k = k.min(total);
    let mut quotas: Vec<usize> = sizes.iter().map(|&n| k * n / total).collect();
    let assigned: usize = quotas.iter().sum();
    let mut order: Vec<usize> = (0..sizes.len()).collect();
    // Stable sort keeps stratum order among equal remainders.
    order.sort_by(|&a, &b| ((k * sizes[b]) % total).cmp(&((k * sizes[a]) % total)));
    for &i in order.iter().take(k - assigned) {
        quotas[i] += 1;
    }
    quotas
}

/// Uniformly samples `k` of `items` without replacement, returning them in
/// their original order.
pub fn sample_in_order<T: Clone, R: Rng + ?Sized>(rng: &mut R, items: &[T], k: usize) -> Vec<T> {
    if k >= items.len() {
        return items.to_vec();
    }
    let mut picked = index::sample(rng, items.len(), k).into_vec();
    picked.sort_unstable();
    picked.into_iter().map(|i| items[i].clone()).collect()
}

/// Samples `k` items, spread proportionally over strata given by `stratum`.
pub fn stratified_sample<T, K, R>(
    rng: &mut R,
    items: &[T],
    k: usize,
    stratum: impl Fn(&T) -> K,
) -> Vec<T>
where
    T: Clone,
    K: Ord,
    R: Rng + ?Sized,
{
    let mut strata: BTreeMap<K, Vec<T>> = BTreeMap::new();
    for item in items {
        strata.entry(stratum(item)).or_default().push(item.clone());
    }
    let sizes: Vec<usize> = strata.values().map(Vec::len).collect();
    let quotas = apportion(&sizes, k);
    strata
        .values()
        .zip(quotas)
        .flat_map(|(members, q)| sample_in_order(rng, members, q))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn short_source_passes_its_remainder_on() {
        // select_size 10 per source, first source only has 1.
        assert_eq!(allocate_ascending(&[1, 100], 20), vec![1, 19]);
    }

    #[test]
    fn leftover_goes_to_the_largest_sources() {
        assert_eq!(allocate_ascending(&[9, 9, 9], 14), vec![4, 5, 5]);
        assert_eq!(allocate_ascending(&[0, 0, 2], 6), vec![0, 0, 2]);
        assert!(allocate_ascending(&[], 6).is_empty());
    }

    #[test]
    fn redistribution_remainder_lands_on_the_final_cell() {
        // sizes [2,2,2,3]; the empty first cell spreads 2 over three cells as
        // 0 each plus a remainder of 2 on the last
        assert_eq!(allocate_ascending(&[0, 10, 10, 10], 9), vec![0, 2, 2, 5]);
        // the final cell cannot absorb the remainder, so one unit is lost
        assert_eq!(allocate_ascending(&[3, 5, 5], 13), vec![3, 4, 5]);
    }

    #[test]
    fn apportion_is_proportional() {
        assert_eq!(apportion(&[3, 3], 4), vec![2, 2]);
        assert_eq!(apportion(&[1, 9], 5), vec![1, 4]);
        assert_eq!(apportion(&[2, 2, 2], 4), vec![2, 1, 1]);
        assert_eq!(apportion(&[0, 0], 3), vec![0, 0]);
    }

    #[test]
    fn streams_differ() {
        assert_ne!(
            stream_seed(7, Stream::Curate),
            stream_seed(7, Stream::AugmentPlan)
        );
        assert_eq!(
            stream_seed(7, Stream::Curate),
            stream_seed(7, Stream::Curate)
        );
    }

    proptest! {
        #[test]
        fn allocation_bounds_and_balance(
            mut avail in proptest::collection::vec(0usize..30, 1..6),
            target in 0usize..120,
        ) {
            avail.sort_unstable();
            let takes = allocate_ascending(&avail, target);
            let total: usize = takes.iter().sum();
            prop_assert!(total <= target.min(avail.iter().sum()));
            for (t, a) in takes.iter().zip(&avail) {
                prop_assert!(t <= a);
            }
            let n = avail.len();
            if avail[0] >= target.div_ceil(n) {
                prop_assert_eq!(total, target);
                let (lo, hi) = (takes.iter().min().unwrap(), takes.iter().max().unwrap());
                prop_assert!(hi - lo <= 1);
                prop_assert!(takes.windows(2).all(|w| w[0] <= w[1]));
            }
            if avail[n - 1] >= target {
                prop_assert_eq!(total, target.min(avail.iter().sum()));
            }
        }

        #[test]
        fn apportion_sums_and_fits(
            sizes in proptest::collection::vec(0usize..20, 1..6),
            k in 0usize..100,
        ) {
            let q = apportion(&sizes, k);
            let total: usize = sizes.iter().sum();
            prop_assert_eq!(q.iter().sum::<usize>(), k.min(total));
            for (qi, si) in q.iter().zip(&sizes) {
                prop_assert!(qi <= si);
            }
        }

        #[test]
        fn samples_are_distinct_members(n in 0usize..50, k in 0usize..60, seed in any::<u64>()) {
            let items: Vec<usize> = (0..n).collect();
            let mut rng = rng_from_seed(seed);
            let s = sample_in_order(&mut rng, &items, k);
            prop_assert_eq!(s.len(), k.min(n));
            prop_assert!(s.windows(2).all(|w| w[0] < w[1]));
        }
    }
}
