use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{lower_median_index, round_rng, ApproxParams, MetricError};
use crate::dataset::Dataset;
use crate::geom::Rect;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GocEstimate {
    /// Lower median of `round_values`.
    pub value: f64,
    pub round_values: Vec<f64>,
    pub params: ApproxParams,
}

/// Density `2|E| / (|V|(|V|-1))` of the graph whose nodes are the given
/// boxes and whose edges join overlapping pairs.
pub fn overlap_density(mbrs: &[Rect]) -> f64 {
    let v = mbrs.len();
    if v < 2 {
        return 0.0;
    }
    let mut edges: u64 = 0;
    for (i, a) in mbrs.iter().enumerate() {
        edges += mbrs[i + 1..].iter().filter(|b| a.overlaps(b)).count() as u64;
    }
    2.0 * edges as f64 / (v as f64 * (v as f64 - 1.0))
}

fn dataset_mbrs(ds: &Dataset) -> Vec<Rect> {
    ds.trajectories().iter().map(|t| t.mbr()).collect()
}

pub fn exact_goc(ds: &Dataset) -> Result<f64, MetricError> {
    if ds.len() < 2 {
        return Err(MetricError::DegenerateDataset(ds.len()));
    }
    Ok(overlap_density(&dataset_mbrs(ds)))
}

/// Median over `p` rounds of the overlap density of `n` trajectories drawn
/// without replacement.
pub fn approx_goc(ds: &Dataset, params: ApproxParams) -> Result<GocEstimate, MetricError> {
    let m = ds.len();
    if params.n < 2 {
        return Err(MetricError::InvalidParams(format!(
            "n must be at least 2, got {}",
            params.n
        )));
    }
    if params.p < 1 {
        return Err(MetricError::InvalidParams("p must be at least 1".into()));
    }
    if params.n > m {
        return Err(MetricError::SampleTooLarge {
            n: params.n,
            population: m,
        });
    }
    let mbrs = dataset_mbrs(ds);
    let round_values: Vec<f64> = (0..params.p)
        .into_par_iter()
        .map(|round| {
            let mut rng = round_rng(params.seed, round);
            let sample: Vec<Rect> = rand::seq::index::sample(&mut rng, m, params.n)
                .into_iter()
                .map(|i| mbrs[i])
                .collect();
            overlap_density(&sample)
        })
        .collect();
    let value = round_values[lower_median_index(&round_values)];
    Ok(GocEstimate {
        value,
        round_values,
        params,
    })
}
