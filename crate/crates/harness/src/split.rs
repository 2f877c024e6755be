//! Vehicle-wise dataset splitting: all snapshots of a vehicle land in the
//! same split, preventing leakage from temporally correlated frames.

use crate::{HarnessError, Result};
use mmresgnn_core::rng::{rng_from_seed, subseed};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;

const STREAM_SPLIT: u64 = 0x53_504c;

/// Disjoint vehicle-id partition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_vehicle_ids: BTreeSet<u32>,
    pub val_vehicle_ids: BTreeSet<u32>,
    pub test_vehicle_ids: BTreeSet<u32>,
    pub ratios: (f64, f64, f64),
    pub seed: u64,
}

impl SplitSpec {
    /// Probe split mapping every vehicle to train (capacity checks, not a
    /// protocol run): validation falls back to the training set.
    pub fn all_train(ids: impl IntoIterator<Item = u32>) -> Self {
        Self {
            train_vehicle_ids: ids.into_iter().collect(),
            val_vehicle_ids: BTreeSet::new(),
            test_vehicle_ids: BTreeSet::new(),
            ratios: (1.0, 0.0, 0.0),
            seed: 0,
        }
    }

    pub fn is_disjoint_and_exhaustive(&self, all_ids: &BTreeSet<u32>) -> bool {
        let mut union = BTreeSet::new();
        let mut total = 0;
        for set in [
            &self.train_vehicle_ids,
            &self.val_vehicle_ids,
            &self.test_vehicle_ids,
        ] {
            total += set.len();
            union.extend(set.iter().copied());
        }
        total == union.len() && union == *all_ids
    }
}

/// Shuffle vehicle ids by seed and allocate floor(ratio * n) to each split,
/// with the remainder going to train.
pub fn vehicle_wise_split(
    vehicle_ids: &[u32],
    ratios: (f64, f64, f64),
    seed: u64,
) -> Result<SplitSpec> {
    let distinct: BTreeSet<u32> = vehicle_ids.iter().copied().collect();
    if distinct.len() < 3 {
        return Err(HarnessError::TooFewVehicles {
            needed: 3,
            got: distinct.len(),
        });
    }
    let n = distinct.len();
    let mut order: Vec<u32> = distinct.into_iter().collect();
    let mut rng = rng_from_seed(subseed(seed, STREAM_SPLIT));
    order.shuffle(&mut rng);

    let mut n_val = (ratios.1 * n as f64).floor() as usize;
    let mut n_test = (ratios.2 * n as f64).floor() as usize;
    // Small fleets: floor() can empty val/test; every split side must stay
    // nonempty once three vehicles exist.
    if n_val == 0 && ratios.1 > 0.0 {
        n_val = 1;
    }
    if n_test == 0 && ratios.2 > 0.0 {
        n_test = 1;
    }
    // Train takes everything else, including the floor remainder.
    let n_train = n - n_val - n_test;

    let train_vehicle_ids: BTreeSet<u32> = order[..n_train].iter().copied().collect();
    let val_vehicle_ids: BTreeSet<u32> = order[n_train..n_train + n_val].iter().copied().collect();
    let test_vehicle_ids: BTreeSet<u32> = order[n_train + n_val..].iter().copied().collect();
    debug_assert_eq!(test_vehicle_ids.len(), n_test);

    Ok(SplitSpec {
        train_vehicle_ids,
        val_vehicle_ids,
        test_vehicle_ids,
        ratios,
        seed,
    })
}

/// The paper's split ratios.
pub const DEFAULT_RATIOS: (f64, f64, f64) = (0.70, 0.15, 0.15);
