use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use num_traits::Float;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Disjoint train/test index sets covering `0..n`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Split {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
    pub seed: u64,
    /// False when a class had fewer than two members and the split fell
    /// back to an unstratified shuffle.
    pub stratified: bool,
}

fn check_ratio(ratio: f64) -> Result<()> {
    if ratio > 0.0 && ratio < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidConfig(alloc::format!("split ratio {ratio} not in (0, 1)")))
    }
}

/// Seeded stratified split. The train size is `round(ratio * n)`; per-class
/// quotas are apportioned by largest remainder so each class lands within
/// one example of its exact share.
pub fn stratified_split<L: Ord + Clone>(labels: &[L], ratio: f64, seed: u64) -> Result<Split> {
    check_ratio(ratio)?;
    let n = labels.len();
    let target = Float::round(ratio * n as f64) as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut by_class: BTreeMap<L, Vec<usize>> = BTreeMap::new();
    for (i, l) in labels.iter().enumerate() {
        by_class.entry(l.clone()).or_default().push(i);
    }

    if by_class.values().any(|v| v.len() < 2) {
        let mut idx: Vec<usize> = (0..n).collect();
        idx.shuffle(&mut rng);
        let mut train = idx[..target].to_vec();
        let mut test = idx[target..].to_vec();
        train.sort_unstable();
        test.sort_unstable();
        return Ok(Split { train, test, seed, stratified: false });
    }

    let classes: Vec<Vec<usize>> = by_class.into_values().collect();
    let exact: Vec<f64> = classes.iter().map(|c| ratio * c.len() as f64).collect();
    let mut quota: Vec<usize> = exact.iter().map(|e| Float::floor(*e) as usize).collect();
    let mut remaining = target - quota.iter().sum::<usize>();
    let mut order: Vec<usize> = (0..classes.len()).collect();
    // largest fractional part first, ties to the lower class
    order.sort_by(|&a, &b| {
        let fa = exact[a] - quota[a] as f64;
        let fb = exact[b] - quota[b] as f64;
        fb.partial_cmp(&fa).unwrap_or(core::cmp::Ordering::Equal).then(a.cmp(&b))
    });
    for &k in order.iter().cycle() {
        if remaining == 0 {
            break;
        }
        if quota[k] < classes[k].len() {
            quota[k] += 1;
            remaining -= 1;
        }
    }

    let mut train = Vec::with_capacity(target);
    let mut test = Vec::with_capacity(n - target);
    for (members, &q) in classes.into_iter().zip(&quota) {
        let mut members = members;
        members.shuffle(&mut rng);
        train.extend_from_slice(&members[..q]);
        test.extend_from_slice(&members[q..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok(Split { train, test, seed, stratified: true })
}

/// Group-aware split: whole groups (patients) go to one side. Groups are
/// shuffled and added to train while they fit under `round(ratio * n)`.
pub fn grouped_split(groups: &[u32], ratio: f64, seed: u64) -> Result<Split> {
    check_ratio(ratio)?;
    let n = groups.len();
    let target = Float::round(ratio * n as f64) as usize;
    let mut members: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
    for (i, g) in groups.iter().enumerate() {
        members.entry(*g).or_default().push(i);
    }
    let mut keys: Vec<u32> = members.keys().copied().collect();
    keys.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for k in keys {
        let m = &members[&k];
        if train.is_empty() || train.len() + m.len() <= target {
            train.extend_from_slice(m);
        } else {
            test.extend_from_slice(m);
        }
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok(Split { train, test, seed, stratified: false })
}
