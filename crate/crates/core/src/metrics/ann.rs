use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{lower_median_index, round_rng, ApproxParams, MetricError};
use crate::dataset::Dataset;
use crate::geom::{Point, Rect, TrajId};

/// Every trajectory vertex as a point tagged with its owning trajectory.
#[derive(Debug, Clone)]
pub struct PointCloud {
    pub points: Vec<Point>,
    /// Dense owner index per point, into `owner_ids`.
    pub owners: Vec<u32>,
    pub owner_ids: Vec<TrajId>,
    pub extent: Rect,
}

impl PointCloud {
    pub fn n_total(&self) -> usize {
        self.points.len()
    }

    pub fn area(&self) -> f64 {
        self.extent.area()
    }

    /// Expected mean nearest-neighbor distance of `n_total` uniformly
    /// distributed points over the extent.
    pub fn expected_distance(&self) -> f64 {
        0.5 / (self.n_total() as f64 / self.area()).sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnnResult {
    pub d_o: f64,
    pub d_e: f64,
    pub ann: f64,
    pub n_points: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnEstimate {
    /// Values of the median round.
    pub result: AnnResult,
    pub round_values: Vec<f64>,
    pub params: ApproxParams,
}

/// How a round turns its sampled nearest-neighbor distances into `D_O`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum DoEstimator {
    /// Plain mean of the sampled distances.
    #[default]
    SampleMean,
    /// Sample mean multiplied by `n_total / n`.
    PopulationScaled,
}

pub fn flatten(ds: &Dataset) -> Result<PointCloud, MetricError> {
    let extent = ds.extent().ok_or(MetricError::DegenerateDataset(0))?;
    let n = ds.point_count();
    let mut points = Vec::with_capacity(n);
    let mut owners = Vec::with_capacity(n);
    let mut owner_ids = Vec::with_capacity(ds.len());
    for (owner, t) in ds.trajectories().iter().enumerate() {
        owner_ids.push(t.id);
        for p in t.points() {
            points.push(*p);
            owners.push(owner as u32);
        }
    }
    Ok(PointCloud {
        points,
        owners,
        owner_ids,
        extent,
    })
}

/// Distance from point `idx` to the nearest point of a different
/// trajectory, by exhaustive scan.
pub fn nn_distance_excl(idx: usize, cloud: &PointCloud) -> Result<f64, MetricError> {
    let p = cloud.points[idx];
    let owner = cloud.owners[idx];
    cloud
        .points
        .iter()
        .zip(&cloud.owners)
        .filter(|(_, &o)| o != owner)
        .map(|(q, _)| p.distance(q))
        .min_by(f64::total_cmp)
        .ok_or(MetricError::NoValidNeighbor(idx))
}

const MAX_GRID_CELLS: usize = 1 << 26;

/// Uniform grid over the cloud extent for nearest-foreign-neighbor search.
/// Cells default to the expected nearest-neighbor distance on a side.
pub struct NnGrid<'a> {
    cloud: &'a PointCloud,
    cell: f64,
    nx: usize,
    ny: usize,
    /// CSR layout: points of cell `c` are `items[starts[c]..starts[c + 1]]`.
    starts: Vec<u32>,
    items: Vec<u32>,
}

impl<'a> NnGrid<'a> {
    pub fn build(cloud: &'a PointCloud) -> Self {
        let ext = cloud.extent;
        let mut cell = cloud.expected_distance();
        if !(cell.is_finite() && cell > 0.0) {
            cell = ext.width().max(ext.height()).max(1.0);
        }
        let dims = |cell: f64| {
            let nx = ((ext.width() / cell).ceil() as usize).max(1);
            let ny = ((ext.height() / cell).ceil() as usize).max(1);
            (nx, ny)
        };
        let (mut nx, mut ny) = dims(cell);
        while nx.saturating_mul(ny) > MAX_GRID_CELLS {
            cell *= 2.0;
            (nx, ny) = dims(cell);
        }
        let mut grid = NnGrid {
            cloud,
            cell,
            nx,
            ny,
            starts: Vec::new(),
            items: Vec::new(),
        };
        let cell_of: Vec<usize> = cloud
            .points
            .iter()
            .map(|p| {
                let (cx, cy) = grid.cell_coords(p);
                cy * nx + cx
            })
            .collect();
        let mut starts = vec![0u32; nx * ny + 1];
        for &c in &cell_of {
            starts[c + 1] += 1;
        }
        for i in 0..nx * ny {
            starts[i + 1] += starts[i];
        }
        let mut fill = starts.clone();
        let mut items = vec![0u32; cell_of.len()];
        for (i, &c) in cell_of.iter().enumerate() {
            items[fill[c] as usize] = i as u32;
            fill[c] += 1;
        }
        grid.starts = starts;
        grid.items = items;
        grid
    }

    fn cell_coords(&self, p: &Point) -> (usize, usize) {
        let ext = self.cloud.extent;
        let cx = (((p.x - ext.min_x) / self.cell).floor().max(0.0) as usize).min(self.nx - 1);
        let cy = (((p.y - ext.min_y) / self.cell).floor().max(0.0) as usize).min(self.ny - 1);
        (cx, cy)
    }

    fn scan_cell(&self, cx: usize, cy: usize, p: &Point, owner: u32, best: &mut f64) {
        let c = cy * self.nx + cx;
        let (lo, hi) = (self.starts[c] as usize, self.starts[c + 1] as usize);
        for &j in &self.items[lo..hi] {
            let j = j as usize;
            if self.cloud.owners[j] != owner {
                let d = p.distance(&self.cloud.points[j]);
                if d < *best {
                    *best = d;
                }
            }
        }
    }

    /// Ring-expanding search; returns exactly the brute-force minimum.
    pub fn nearest_foreign(&self, idx: usize) -> Result<f64, MetricError> {
        let p = self.cloud.points[idx];
        let owner = self.cloud.owners[idx];
        let (cx, cy) = self.cell_coords(&p);
        let (cx, cy) = (cx as isize, cy as isize);
        let (nx, ny) = (self.nx as isize, self.ny as isize);
        let max_ring = nx.max(ny);
        let mut best = f64::INFINITY;
        for r in 0..=max_ring {
            let (x0, x1, y0, y1) = (cx - r, cx + r, cy - r, cy + r);
            for y in y0.max(0)..=y1.min(ny - 1) {
                if y == y0 || y == y1 {
                    for x in x0.max(0)..=x1.min(nx - 1) {
                        self.scan_cell(x as usize, y as usize, &p, owner, &mut best);
                    }
                } else {
                    if x0 >= 0 {
                        self.scan_cell(x0 as usize, y as usize, &p, owner, &mut best);
                    }
                    if x1 < nx && r > 0 {
                        self.scan_cell(x1 as usize, y as usize, &p, owner, &mut best);
                    }
                }
            }
            // Unscanned cells are at least r whole cells away; the slack
            // absorbs rounding in the cell assignment.
            if best <= r as f64 * self.cell * (1.0 - 1e-9) {
                break;
            }
        }
        if best.is_finite() {
            Ok(best)
        } else {
            Err(MetricError::NoValidNeighbor(idx))
        }
    }
}

fn checked_cloud(ds: &Dataset) -> Result<PointCloud, MetricError> {
    let cloud = flatten(ds)?;
    if cloud.area().is_nan() || cloud.area() <= 0.0 {
        return Err(MetricError::DegenerateExtent);
    }
    Ok(cloud)
}

pub fn exact_ann(ds: &Dataset) -> Result<AnnResult, MetricError> {
    let cloud = checked_cloud(ds)?;
    let grid = NnGrid::build(&cloud);
    let dists: Vec<f64> = (0..cloud.n_total())
        .into_par_iter()
        .map(|i| grid.nearest_foreign(i))
        .collect::<Result<_, _>>()?;
    let d_o = dists.iter().sum::<f64>() / cloud.n_total() as f64;
    let d_e = cloud.expected_distance();
    Ok(AnnResult {
        d_o,
        d_e,
        ann: d_o / d_e,
        n_points: cloud.n_total(),
    })
}

pub fn approx_ann(ds: &Dataset, params: ApproxParams) -> Result<AnnEstimate, MetricError> {
    approx_ann_with(ds, params, DoEstimator::SampleMean)
}

/// Each round samples `n` points without replacement from the whole cloud
/// and searches their neighbors against the whole cloud; the expected
/// distance always uses the full point count and extent.
pub fn approx_ann_with(
    ds: &Dataset,
    params: ApproxParams,
    estimator: DoEstimator,
) -> Result<AnnEstimate, MetricError> {
    if params.n < 1 || params.p < 1 {
        return Err(MetricError::InvalidParams(format!(
            "n and p must be at least 1, got n={} p={}",
            params.n, params.p
        )));
    }
    let cloud = checked_cloud(ds)?;
    let total = cloud.n_total();
    if params.n > total {
        return Err(MetricError::SampleTooLarge {
            n: params.n,
            population: total,
        });
    }
    let grid = NnGrid::build(&cloud);
    let d_e = cloud.expected_distance();
    let rounds: Vec<AnnResult> = (0..params.p)
        .into_par_iter()
        .map(|round| {
            let mut rng = round_rng(params.seed, round);
            let mut sample = rand::seq::index::sample(&mut rng, total, params.n).into_vec();
            // Summation order matches the exact computation.
            sample.sort_unstable();
            let mut sum = 0.0;
            for i in sample {
                sum += grid.nearest_foreign(i)?;
            }
            let mut d_o = sum / params.n as f64;
            if estimator == DoEstimator::PopulationScaled {
                d_o *= total as f64 / params.n as f64;
            }
            Ok(AnnResult {
                d_o,
                d_e,
                ann: d_o / d_e,
                n_points: total,
            })
        })
        .collect::<Result<_, MetricError>>()?;
    let round_values: Vec<f64> = rounds.iter().map(|r| r.ann).collect();
    let result = rounds[lower_median_index(&round_values)];
    Ok(AnnEstimate {
        result,
        round_values,
        params,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::Trajectory;

    fn ds(trajs: Vec<Vec<(f64, f64)>>) -> Dataset {
        let ts = trajs
            .into_iter()
            .enumerate()
            .map(|(i, pts)| {
                Trajectory::new(
                    TrajId(i as u64),
                    pts.into_iter().map(|(x, y)| Point::new(x, y)).collect(),
                )
                .unwrap()
            })
            .collect();
        Dataset::new("t", "test", ts).unwrap()
    }

    fn two_columns() -> Dataset {
        ds(vec![vec![(0., 0.), (0., 0.5)], vec![(1., 0.), (1., 0.5)]])
    }

    /// 10x10 unit grid; each trajectory revisits its own point so every
    /// trajectory sits at a single location.
    fn grid_dataset() -> Dataset {
        ds((0..100)
            .map(|i| {
                let p = ((i % 10) as f64, (i / 10) as f64);
                vec![p, p]
            })
            .collect())
    }

    fn brute_force_nn(cloud: &PointCloud, idx: usize) -> f64 {
        let mut best = f64::INFINITY;
        for j in 0..cloud.points.len() {
            if cloud.owners[j] != cloud.owners[idx] {
                best = best.min(cloud.points[idx].distance(&cloud.points[j]));
            }
        }
        best
    }

    #[test]
    fn flatten_counts_and_owners() {
        let d = ds(vec![
            vec![(0., 0.), (1., 1.), (2., 0.)],
            vec![(0., 1.), (1., 2.), (3., 3.)],
        ]);
        let c = flatten(&d).unwrap();
        assert_eq!(c.n_total(), 6);
        assert_eq!(c.owners, vec![0, 0, 0, 1, 1, 1]);
        assert_eq!(c.extent, Rect::new(0., 0., 3., 3.).unwrap());

        let single = ds(vec![vec![(0., 0.), (1., 1.), (2., 0.)]]);
        let c = flatten(&single).unwrap();
        assert!(c.owners.iter().all(|&o| o == 0));
    }

    #[test]
    fn own_trajectory_points_are_excluded() {
        let c = flatten(&two_columns()).unwrap();
        // (0,0.5) is the closer point but belongs to the same trajectory.
        assert_eq!(nn_distance_excl(0, &c).unwrap(), 1.0);
        assert_eq!(NnGrid::build(&c).nearest_foreign(0).unwrap(), 1.0);

        let coincident = flatten(&ds(vec![
            vec![(0., 0.), (1., 0.)],
            vec![(0., 0.), (0., 1.)],
        ]))
        .unwrap();
        assert_eq!(nn_distance_excl(0, &coincident).unwrap(), 0.0);

        let lone = flatten(&ds(vec![vec![(0., 0.), (1., 1.)]])).unwrap();
        assert_eq!(
            nn_distance_excl(0, &lone),
            Err(MetricError::NoValidNeighbor(0))
        );
    }

    #[test]
    fn exact_ann_two_columns() {
        let r = exact_ann(&two_columns()).unwrap();
        // D_O = 1, A = 0.5, D_E = 0.5 / sqrt(4 / 0.5)
        let d_e = 0.5 / (4.0f64 / 0.5).sqrt();
        assert_eq!(r.d_o, 1.0);
        assert!((r.d_e - d_e).abs() < 1e-15);
        assert!((r.d_e - 0.17678).abs() < 1e-5);
        assert!((r.ann - 5.657).abs() < 1e-3);
        assert_eq!(r.n_points, 4);
    }

    #[test]
    fn exact_ann_unit_grid() {
        let d = grid_dataset();
        let c = flatten(&d).unwrap();
        let brute: f64 =
            (0..c.n_total()).map(|i| brute_force_nn(&c, i)).sum::<f64>() / c.n_total() as f64;
        assert_eq!(brute, 1.0);
        let r = exact_ann(&d).unwrap();
        // The 100 trajectories contribute 200 coincident vertex records.
        assert_eq!(r.d_o, 1.0);
        assert!((r.d_e - 0.5 / (200.0f64 / 81.0).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn single_point_grid_matches_stated_values() {
        // 100 records at unit spacing: D_E = 0.5/sqrt(100/81) = 0.45.
        let c = PointCloud {
            points: (0..100)
                .map(|i| Point::new((i % 10) as f64, (i / 10) as f64))
                .collect(),
            owners: (0..100).collect(),
            owner_ids: (0..100).map(TrajId).collect(),
            extent: Rect::new(0., 0., 9., 9.).unwrap(),
        };
        assert!((c.expected_distance() - 0.45).abs() < 1e-12);
        let grid = NnGrid::build(&c);
        for i in 0..100 {
            assert_eq!(grid.nearest_foreign(i).unwrap(), 1.0);
        }
        assert!((1.0 / c.expected_distance() - 2.2222).abs() < 1e-4);
    }

    #[test]
    fn degenerate_extent() {
        let collinear = ds(vec![vec![(0., 0.), (1., 0.)], vec![(2., 0.), (3., 0.)]]);
        assert_eq!(exact_ann(&collinear), Err(MetricError::DegenerateExtent));
        assert_eq!(
            approx_ann(&collinear, ApproxParams::new(1, 1, 0)).unwrap_err(),
            MetricError::DegenerateExtent
        );
    }

    #[test]
    fn full_sample_equals_exact() {
        let d = ds((0..40)
            .map(|i| {
                let x = (i * 37 % 101) as f64 * 0.1;
                let y = (i * 53 % 89) as f64 * 0.1;
                vec![(x, y), (x + 0.3, y + 0.1), (x + 0.5, y - 0.2)]
            })
            .collect());
        let exact = exact_ann(&d).unwrap();
        let est = approx_ann(&d, ApproxParams::new(120, 1, 5)).unwrap();
        assert_eq!(est.result, exact);
    }

    #[test]
    fn grid_sampling_is_exact_every_round() {
        let d = grid_dataset();
        let exact = exact_ann(&d).unwrap();
        for (n, p) in [(1, 5), (17, 3), (200, 2)] {
            let est = approx_ann(&d, ApproxParams::new(n, p, 42)).unwrap();
            assert!(est.round_values.iter().all(|&v| v == exact.ann));
        }
    }

    #[test]
    fn literal_scaling_multiplies_sample_mean() {
        let d = grid_dataset();
        let plain = approx_ann(&d, ApproxParams::new(50, 3, 1)).unwrap();
        let lit = approx_ann_with(
            &d,
            ApproxParams::new(50, 3, 1),
            DoEstimator::PopulationScaled,
        )
        .unwrap();
        assert!((lit.result.d_o - plain.result.d_o * 4.0).abs() < 1e-12);
    }

    #[test]
    fn approx_errors() {
        let d = two_columns();
        assert!(matches!(
            approx_ann(&d, ApproxParams::new(5, 1, 0)),
            Err(MetricError::SampleTooLarge {
                n: 5,
                population: 4
            })
        ));
        assert!(matches!(
            approx_ann(&d, ApproxParams::new(0, 1, 0)),
            Err(MetricError::InvalidParams(_))
        ));
    }

    #[test]
    fn grid_search_matches_brute_force_on_clustered_cloud() {
        // Tight clusters force multi-ring searches past own-trajectory cells.
        let mut trajs = Vec::new();
        for i in 0..60usize {
            let cx = [0.0, 50.0, 51.0][i % 3];
            let cy = [0.0, 50.0, 7.0][i % 3];
            let off = i as f64 * 0.013;
            trajs.push(vec![
                (cx + off, cy),
                (cx + off, cy + 0.2),
                (cx + 0.1, cy + off),
            ]);
        }
        trajs.push(vec![(100.0, 100.0), (100.0, 101.0)]);
        let d = ds(trajs);
        let c = flatten(&d).unwrap();
        let grid = NnGrid::build(&c);
        for i in 0..c.n_total() {
            assert_eq!(grid.nearest_foreign(i).unwrap(), brute_force_nn(&c, i));
        }
    }

    #[test]
    fn clustered_below_one_dispersed_above() {
        // two tight twin clusters at opposite corners
        let mut clustered = Vec::new();
        for i in 0..20 {
            let base = if i % 2 == 0 { 0.0 } else { 100.0 };
            let e = i as f64 * 0.01;
            clustered.push(vec![(base + e, base), (base + e, base + 0.01)]);
        }
        assert!(exact_ann(&ds(clustered)).unwrap().ann < 1.0);
        let spread: Vec<_> = (0..100)
            .map(|i| {
                let p = ((i % 10) as f64 * 10.0, (i / 10) as f64 * 10.0);
                vec![p, (p.0 + 0.5, p.1)]
            })
            .collect();
        assert!(exact_ann(&ds(spread)).unwrap().ann > 1.0);
    }
}
