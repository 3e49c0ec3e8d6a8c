//! Seeded benchmark configurations: read queries chosen by rejection
//! sampling against a sequential-scan oracle, write plans, and mixed
//! read/write sequences.

use std::f64::consts::TAU;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::datagen::random_walk;
use crate::dataset::Dataset;
use crate::engine::{execute, ContainsMode, QuerySpec};
use crate::geom::{Point, Rect, TrajId, Trajectory};
use crate::index::Backend;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum WorkloadError {
    #[error("no {kind} configuration found after {rejects} rejected draws")]
    Unsatisfiable { kind: &'static str, rejects: usize },
    #[error("invalid workload spec: {0}")]
    InvalidSpec(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReadKind {
    Intersection,
    Contains,
    Knn,
    Proximity,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WriteKind {
    Insert,
    Update,
    Delete,
}

impl ReadKind {
    pub const ALL: [ReadKind; 4] = [
        ReadKind::Intersection,
        ReadKind::Contains,
        ReadKind::Knn,
        ReadKind::Proximity,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ReadKind::Intersection => "intersection",
            ReadKind::Contains => "contains",
            ReadKind::Knn => "knn",
            ReadKind::Proximity => "proximity",
        }
    }
}

impl WriteKind {
    pub const ALL: [WriteKind; 3] = [WriteKind::Insert, WriteKind::Update, WriteKind::Delete];

    pub fn name(self) -> &'static str {
        match self {
            WriteKind::Insert => "insert",
            WriteKind::Update => "update",
            WriteKind::Delete => "delete",
        }
    }
}

/// Workload parameters. Fractions are relative to the dataset bbox.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WorkloadSpec {
    pub configs_per_type: usize,
    pub rect_side_fraction: f64,
    pub knn_k: usize,
    pub proximity_dist_fraction: f64,
    pub contains_mode: ContainsMode,
    pub batch_insert_size: usize,
    pub batch_mutation_fraction: f64,
    /// Mean step of inserted walks and bound on update offsets.
    pub step_fraction: f64,
    pub max_rejects: usize,
    pub mixed_ops: usize,
    pub seed: u64,
}

impl Default for WorkloadSpec {
    fn default() -> Self {
        WorkloadSpec {
            configs_per_type: 50,
            rect_side_fraction: 0.05,
            knn_k: 10,
            proximity_dist_fraction: 0.02,
            contains_mode: ContainsMode::Partial,
            batch_insert_size: 100,
            batch_mutation_fraction: 0.01,
            step_fraction: 0.005,
            max_rejects: 1000,
            mixed_ops: 200,
            seed: 0,
        }
    }
}

impl WorkloadSpec {
    pub fn validate(&self) -> Result<(), WorkloadError> {
        let bad = |m: String| Err(WorkloadError::InvalidSpec(m));
        for (name, v) in [
            ("rect_side_fraction", self.rect_side_fraction),
            ("proximity_dist_fraction", self.proximity_dist_fraction),
            ("batch_mutation_fraction", self.batch_mutation_fraction),
            ("step_fraction", self.step_fraction),
        ] {
            if !(v > 0.0 && v <= 1.0) {
                return bad(format!("{name} {v} must lie in (0, 1]"));
            }
        }
        for (name, v) in [
            ("configs_per_type", self.configs_per_type),
            ("knn_k", self.knn_k),
            ("batch_insert_size", self.batch_insert_size),
            ("max_rejects", self.max_rejects),
            ("mixed_ops", self.mixed_ops),
        ] {
            if v < 1 {
                return bad(format!("{name} must be at least 1"));
            }
        }
        Ok(())
    }
}

/// Read configurations grouped by kind.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReadWorkload {
    pub intersection: Vec<QuerySpec>,
    pub contains: Vec<QuerySpec>,
    pub knn: Vec<QuerySpec>,
    pub proximity: Vec<QuerySpec>,
}

impl ReadWorkload {
    pub fn of_kind(&self, kind: ReadKind) -> &[QuerySpec] {
        match kind {
            ReadKind::Intersection => &self.intersection,
            ReadKind::Contains => &self.contains,
            ReadKind::Knn => &self.knn,
            ReadKind::Proximity => &self.proximity,
        }
    }

    pub fn len(&self) -> usize {
        ReadKind::ALL.iter().map(|k| self.of_kind(*k).len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Write configurations. Each inner vector is one timed operation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WritePlan {
    pub insert_single: Vec<Vec<Trajectory>>,
    pub insert_batch: Vec<Vec<Trajectory>>,
    pub update_single: Vec<Vec<(TrajId, Trajectory)>>,
    pub update_batch: Vec<Vec<(TrajId, Trajectory)>>,
    pub delete_single: Vec<Vec<TrajId>>,
    pub delete_batch: Vec<Vec<TrajId>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MixedOp {
    Read(ReadKind),
    Write(WriteKind),
}

fn kind_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Rect of the configured relative size placed uniformly inside `bbox`.
pub fn sample_rect<R: Rng + ?Sized>(rng: &mut R, bbox: &Rect, side_fraction: f64) -> Rect {
    let (w, h) = (bbox.width() * side_fraction, bbox.height() * side_fraction);
    let x = bbox.min_x + rng.random::<f64>() * (bbox.width() - w);
    let y = bbox.min_y + rng.random::<f64>() * (bbox.height() - h);
    Rect {
        min_x: x,
        min_y: y,
        max_x: (x + w).min(bbox.max_x),
        max_y: (y + h).min(bbox.max_y),
    }
}

fn bbox_of(ds: &Dataset) -> Result<Rect, WorkloadError> {
    ds.extent()
        .ok_or_else(|| WorkloadError::InvalidSpec("dataset is empty".into()))
}

/// Draws `count` distinct configurations, redrawing each up to
/// `max_rejects` times while `accept` refuses it.
fn draw_distinct<T: PartialEq>(
    kind: &'static str,
    count: usize,
    max_rejects: usize,
    mut draw: impl FnMut() -> T,
    mut accept: impl FnMut(&T) -> bool,
) -> Result<Vec<T>, WorkloadError> {
    let mut out: Vec<T> = Vec::with_capacity(count);
    while out.len() < count {
        let mut rejects = 0;
        loop {
            let c = draw();
            if !out.contains(&c) && accept(&c) {
                out.push(c);
                break;
            }
            rejects += 1;
            if rejects > max_rejects {
                return Err(WorkloadError::Unsatisfiable { kind, rejects });
            }
        }
    }
    Ok(out)
}

/// Read configurations for every kind. `oracle` must hold `ds`; only its
/// answers decide rejection, so the result is independent of the backend
/// under test when a sequential scan is passed.
pub fn make_read_configs(
    ds: &Dataset,
    oracle: &Backend,
    spec: &WorkloadSpec,
) -> Result<ReadWorkload, WorkloadError> {
    spec.validate()?;
    let bbox = bbox_of(ds)?;
    let trajs = ds.trajectories();
    let n = spec.configs_per_type;
    let dist = spec.proximity_dist_fraction * bbox.width().max(bbox.height());
    let has_match = |q: &QuerySpec| execute(oracle, q).is_ok_and(|r| !r.ids.is_empty());

    let mut rng = kind_rng(spec.seed, 1);
    let intersection = draw_distinct(
        "intersection",
        n,
        spec.max_rejects,
        || QuerySpec::Intersection {
            target: trajs[rng.random_range(0..trajs.len())].clone(),
        },
        has_match,
    )?;

    let mut rng = kind_rng(spec.seed, 2);
    let contains = draw_distinct(
        "contains",
        n,
        spec.max_rejects,
        || QuerySpec::Contains {
            rect: sample_rect(&mut rng, &bbox, spec.rect_side_fraction),
            mode: spec.contains_mode,
        },
        has_match,
    )?;

    if trajs.len() <= spec.knn_k {
        return Err(WorkloadError::InvalidSpec(format!(
            "knn_k {} needs more than {} trajectories",
            spec.knn_k,
            trajs.len()
        )));
    }
    let mut rng = kind_rng(spec.seed, 3);
    let knn = draw_distinct(
        "knn",
        n,
        spec.max_rejects,
        || QuerySpec::Knn {
            target: trajs[rng.random_range(0..trajs.len())].clone(),
            k: spec.knn_k,
        },
        |_| true,
    )?;

    let mut rng = kind_rng(spec.seed, 4);
    let proximity = draw_distinct(
        "proximity",
        n,
        spec.max_rejects,
        || QuerySpec::Proximity {
            target: trajs[rng.random_range(0..trajs.len())].clone(),
            dist,
        },
        has_match,
    )?;

    Ok(ReadWorkload {
        intersection,
        contains,
        knn,
        proximity,
    })
}

/// Segment count used for generated inserts: the dataset mean, rounded.
pub fn insert_segments(ds: &Dataset) -> usize {
    if ds.is_empty() {
        return 1;
    }
    ((ds.segment_count() as f64 / ds.len() as f64).round() as usize).max(1)
}

/// A random walk starting uniformly inside a sampled query-sized rect.
pub fn random_insert<R: Rng + ?Sized>(
    rng: &mut R,
    id: TrajId,
    bbox: &Rect,
    k: usize,
    spec: &WorkloadSpec,
) -> Trajectory {
    let rect = sample_rect(rng, bbox, spec.rect_side_fraction);
    let start = Point::new(
        rect.min_x + rng.random::<f64>() * rect.width(),
        rect.min_y + rng.random::<f64>() * rect.height(),
    );
    let step = spec.step_fraction * bbox.width();
    Trajectory::new(id, random_walk(start, k, step, bbox, rng)).expect("walks have k+1 points")
}

/// `t` shifted by an offset of uniform length in `[0, step]` and uniform
/// direction.
pub fn jitter_translate<R: Rng + ?Sized>(rng: &mut R, t: &Trajectory, step: f64) -> Trajectory {
    let len = rng.random::<f64>() * step;
    let angle = rng.random::<f64>() * TAU;
    t.translated(len * angle.cos(), len * angle.sin())
}

pub fn batch_mutation_count(ds: &Dataset, spec: &WorkloadSpec) -> usize {
    ((spec.batch_mutation_fraction * ds.len() as f64).ceil() as usize).clamp(1, ds.len().max(1))
}

pub fn make_write_configs(ds: &Dataset, spec: &WorkloadSpec) -> Result<WritePlan, WorkloadError> {
    spec.validate()?;
    let bbox = bbox_of(ds)?;
    let trajs = ds.trajectories();
    let k = insert_segments(ds);
    let step = spec.step_fraction * bbox.width();
    let n = spec.configs_per_type;
    let mut next_id = ds.max_id().map_or(0, |m| m.0 + 1);
    let mut fresh = || {
        let id = TrajId(next_id);
        next_id += 1;
        id
    };

    let mut rng = kind_rng(spec.seed, 11);
    let insert_single = (0..n)
        .map(|_| vec![random_insert(&mut rng, fresh(), &bbox, k, spec)])
        .collect();
    let mut rng = kind_rng(spec.seed, 12);
    let insert_batch = (0..n)
        .map(|_| {
            (0..spec.batch_insert_size)
                .map(|_| random_insert(&mut rng, fresh(), &bbox, k, spec))
                .collect()
        })
        .collect();

    let batch = batch_mutation_count(ds, spec);
    let pick = |rng: &mut ChaCha8Rng, amount: usize| -> Vec<usize> {
        let mut idx = rand::seq::index::sample(rng, trajs.len(), amount).into_vec();
        idx.sort_unstable();
        idx
    };
    let updates = |stream: u64, amount: usize| -> Vec<Vec<(TrajId, Trajectory)>> {
        let mut rng = kind_rng(spec.seed, stream);
        (0..n)
            .map(|_| {
                pick(&mut rng, amount)
                    .into_iter()
                    .map(|i| (trajs[i].id, jitter_translate(&mut rng, &trajs[i], step)))
                    .collect()
            })
            .collect()
    };
    let update_single = updates(13, 1);
    let update_batch = updates(14, batch);
    let deletes = |stream: u64, amount: usize| -> Vec<Vec<TrajId>> {
        let mut rng = kind_rng(spec.seed, stream);
        (0..n)
            .map(|_| {
                pick(&mut rng, amount)
                    .into_iter()
                    .map(|i| trajs[i].id)
                    .collect()
            })
            .collect()
    };
    let delete_single = deletes(15, 1);
    let delete_batch = deletes(16, batch);

    Ok(WritePlan {
        insert_single,
        insert_batch,
        update_single,
        update_batch,
        delete_single,
        delete_batch,
    })
}

/// `total_ops` operations with exactly `round(read_ratio * total_ops)`
/// reads in seeded random order. Reads cycle through the read kinds and
/// writes through the write kinds in order of appearance.
pub fn make_mixed_sequence(
    read_ratio: f64,
    total_ops: usize,
    seed: u64,
) -> Result<Vec<MixedOp>, WorkloadError> {
    if !(0.0..=1.0).contains(&read_ratio) {
        return Err(WorkloadError::InvalidSpec(format!(
            "read ratio {read_ratio} must lie in [0, 1]"
        )));
    }
    let reads = (read_ratio * total_ops as f64).round() as usize;
    let mut is_read: Vec<bool> = (0..total_ops).map(|i| i < reads).collect();
    is_read.shuffle(&mut kind_rng(seed, 21));
    let (mut r, mut w) = (0, 0);
    Ok(is_read
        .into_iter()
        .map(|read| {
            if read {
                r += 1;
                MixedOp::Read(ReadKind::ALL[(r - 1) % ReadKind::ALL.len()])
            } else {
                w += 1;
                MixedOp::Write(WriteKind::ALL[(w - 1) % WriteKind::ALL.len()])
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::{generate, GenKind, GenSpec};
    use crate::index::{BackendConfig, IndexKind, StorageFormat};

    fn setup(m: usize) -> (Dataset, Backend) {
        let ds = generate(&GenSpec::new(GenKind::Skewed, m, 10, 3)).unwrap();
        let oracle = Backend::bulk_load(
            &ds,
            BackendConfig::new(StorageFormat::Whole, IndexKind::SeqScan),
        )
        .unwrap();
        (ds, oracle)
    }

    #[test]
    fn read_configs_are_distinct_nonempty_and_deterministic() {
        let (ds, oracle) = setup(400);
        let spec = WorkloadSpec {
            configs_per_type: 20,
            ..WorkloadSpec::default()
        };
        let w = make_read_configs(&ds, &oracle, &spec).unwrap();
        assert_eq!(w.len(), 80);
        let bbox = ds.extent().unwrap();
        for kind in ReadKind::ALL {
            let qs = w.of_kind(kind);
            for (i, q) in qs.iter().enumerate() {
                assert!(!qs[..i].contains(q));
                if kind != ReadKind::Knn {
                    assert!(!execute(&oracle, q).unwrap().ids.is_empty());
                }
                if let QuerySpec::Contains { rect, .. } = q {
                    assert!(bbox.contains_rect(rect));
                }
            }
        }
        assert_eq!(w, make_read_configs(&ds, &oracle, &spec).unwrap());
    }

    #[test]
    fn unsatisfiable_workload_reported() {
        let (ds, oracle) = setup(30);
        let spec = WorkloadSpec {
            configs_per_type: 31,
            max_rejects: 50,
            ..WorkloadSpec::default()
        };
        assert!(matches!(
            make_read_configs(&ds, &oracle, &spec),
            Err(WorkloadError::Unsatisfiable { .. })
        ));
    }

    #[test]
    fn write_plan_shapes() {
        let (ds, _) = setup(1000);
        let plan = make_write_configs(&ds, &WorkloadSpec::default()).unwrap();
        assert_eq!(plan.insert_single.len(), 50);
        assert!(plan.insert_batch.iter().all(|b| b.len() == 100));
        assert!(plan.delete_batch.iter().all(|b| b.len() == 10));
        assert!(plan.update_batch.iter().all(|b| b.len() == 10));
        assert!(plan.delete_single.iter().all(|b| b.len() == 1));
        let max = ds.max_id().unwrap();
        let inserted: Vec<TrajId> = plan
            .insert_single
            .iter()
            .chain(&plan.insert_batch)
            .flatten()
            .map(|t| t.id)
            .collect();
        assert!(inserted.iter().all(|id| *id > max));
        let step = 0.005 * ds.extent().unwrap().width();
        for (id, t) in plan.update_batch.iter().flatten() {
            let orig = ds.get(*id).unwrap();
            assert_eq!(t.id, *id);
            let d = orig.points()[0].distance(&t.points()[0]);
            assert!(d <= step * (1.0 + 1e-9));
        }
        assert_eq!(
            plan,
            make_write_configs(&ds, &WorkloadSpec::default()).unwrap()
        );
    }

    #[test]
    fn batch_of_one_percent() {
        let (ds, _) = setup(10_000);
        assert_eq!(batch_mutation_count(&ds, &WorkloadSpec::default()), 100);
    }

    #[test]
    fn mixed_sequence_counts() {
        let count = |ops: &[MixedOp]| ops.iter().filter(|o| matches!(o, MixedOp::Read(_))).count();
        assert_eq!(count(&make_mixed_sequence(0.05, 1000, 1).unwrap()), 50);
        let all = make_mixed_sequence(1.0, 37, 1).unwrap();
        assert_eq!(count(&all), 37);
        let half = make_mixed_sequence(0.5, 4, 9).unwrap();
        assert_eq!(count(&half), 2);
        assert_eq!(half.len(), 4);
        assert!(make_mixed_sequence(1.5, 4, 9).is_err());
        assert_eq!(
            make_mixed_sequence(0.5, 100, 3).unwrap(),
            make_mixed_sequence(0.5, 100, 3).unwrap()
        );
    }

    #[test]
    fn spec_round_trips_through_toml_shape() {
        let spec = WorkloadSpec::default();
        let json = serde_json::to_string(&spec).unwrap();
        let back: WorkloadSpec = serde_json::from_str(&json).unwrap();
        assert_eq!(spec, back);
        let partial: WorkloadSpec = serde_json::from_str(r#"{"knn_k": 5}"#).unwrap();
        assert_eq!(partial.knn_k, 5);
        assert_eq!(partial.configs_per_type, 50);
    }
}
