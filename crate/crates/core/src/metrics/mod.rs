//! Dataset characterization metrics: the global overlap coefficient (GOC)
//! and the trajectory-adapted average nearest neighbor ratio (ANN), each
//! computed exactly and by seeded Monte Carlo sampling.

mod ann;
mod goc;

pub use ann::{
    approx_ann, approx_ann_with, exact_ann, flatten, nn_distance_excl, AnnEstimate, AnnResult,
    DoEstimator, NnGrid, PointCloud,
};
pub use goc::{approx_goc, exact_goc, overlap_density, GocEstimate};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricError {
    #[error("dataset has {0} trajectories; at least 2 are required")]
    DegenerateDataset(usize),
    #[error("sample size {n} exceeds population {population}")]
    SampleTooLarge { n: usize, population: usize },
    #[error("invalid approximation parameters: {0}")]
    InvalidParams(String),
    #[error("point extent has zero area")]
    DegenerateExtent,
    #[error("point {0} has no neighbor on another trajectory")]
    NoValidNeighbor(usize),
}

/// Sample size `n` per round, `p` rounds, and the RNG seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ApproxParams {
    pub n: usize,
    pub p: usize,
    pub seed: u64,
}

impl ApproxParams {
    pub fn new(n: usize, p: usize, seed: u64) -> Self {
        ApproxParams { n, p, seed }
    }
}

/// Independent RNG stream for one sampling round. Streams depend only on
/// `(seed, round)`, so rounds may run in any order or in parallel.
pub(crate) fn round_rng(seed: u64, round: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(round as u64);
    rng
}

/// Index of the lower median in ascending order of `values`.
pub(crate) fn lower_median_index(values: &[f64]) -> usize {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]).then(a.cmp(&b)));
    order[(values.len() - 1) / 2]
}
