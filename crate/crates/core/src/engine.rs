//! Filter-refine execution of the read queries and the timed write paths.

use std::collections::HashMap;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::{
    rect_relation_counted, trajectory_distance_counted, trajectory_intersects_counted, PairTests,
    Rect, RectRelation, TrajId, Trajectory,
};
use crate::index::{Backend, IndexError, QueryStats};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EngineError {
    #[error("need {needed} other trajectories, store has {available}")]
    InsufficientData { needed: usize, available: usize },
    #[error("invalid query: {0}")]
    InvalidQuery(String),
    #[error(transparent)]
    Index(#[from] IndexError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContainsMode {
    Partial,
    Complete,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum QuerySpec {
    Intersection { target: Trajectory },
    Contains { rect: Rect, mode: ContainsMode },
    Knn { target: Trajectory, k: usize },
    Proximity { target: Trajectory, dist: f64 },
}

impl QuerySpec {
    pub fn kind_name(&self) -> &'static str {
        match self {
            QuerySpec::Intersection { .. } => "intersection",
            QuerySpec::Contains { .. } => "contains",
            QuerySpec::Knn { .. } => "knn",
            QuerySpec::Proximity { .. } => "proximity",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QueryResult {
    /// Ascending ids, or nearest-first for Knn.
    pub ids: Vec<TrajId>,
    /// Exact distances aligned with `ids`; Knn only.
    pub distances: Vec<f64>,
    pub stats: QueryStats,
    pub elapsed: Duration,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WriteResult {
    pub rows: usize,
    pub stats: QueryStats,
    pub elapsed: Duration,
}

fn refine<F>(
    h: &Backend,
    ids: Vec<TrajId>,
    exclude: Option<TrajId>,
    stats: &mut QueryStats,
    mut keep: F,
) -> Vec<TrajId>
where
    F: FnMut(&Trajectory, &mut PairTests) -> bool,
{
    let mut tests = PairTests::default();
    let out = ids
        .into_iter()
        .filter(|&id| Some(id) != exclude)
        .filter(|&id| {
            let t = h.fetch(id, stats).expect("candidate ids are live");
            keep(&t, &mut tests)
        })
        .collect();
    stats.exact_tests += tests.0;
    out
}

fn finish(ids: Vec<TrajId>, stats: QueryStats, start: Instant) -> QueryResult {
    QueryResult {
        ids,
        distances: Vec::new(),
        stats,
        elapsed: start.elapsed(),
    }
}

/// Other stored trajectories whose geometry meets `target`.
pub fn q_intersection(h: &Backend, target: &Trajectory) -> QueryResult {
    let start = Instant::now();
    let mut stats = QueryStats::default();
    let cands = h.candidates_into(&target.mbr(), &mut stats);
    let ids = refine(h, cands, Some(target.id), &mut stats, |t, tests| {
        trajectory_intersects_counted(target, t, tests)
    });
    finish(ids, stats, start)
}

pub fn q_contains(h: &Backend, rect: &Rect, mode: ContainsMode) -> QueryResult {
    let start = Instant::now();
    let mut stats = QueryStats::default();
    let cands = h.candidates_into(rect, &mut stats);
    let ids = refine(h, cands, None, &mut stats, |t, tests| {
        let rel = rect_relation_counted(t, rect, tests);
        match mode {
            ContainsMode::Partial => rel != RectRelation::Outside,
            ContainsMode::Complete => rel == RectRelation::Inside,
        }
    });
    finish(ids, stats, start)
}

/// Other stored trajectories within `dist` of `target`.
pub fn q_proximity(
    h: &Backend,
    target: &Trajectory,
    dist: f64,
) -> Result<QueryResult, EngineError> {
    if !(dist.is_finite() && dist >= 0.0) {
        return Err(EngineError::InvalidQuery(format!(
            "dist {dist} must be finite and >= 0"
        )));
    }
    let start = Instant::now();
    let mut stats = QueryStats::default();
    let cands = h.candidates_into(&target.mbr().inflate(dist), &mut stats);
    let ids = refine(h, cands, Some(target.id), &mut stats, |t, tests| {
        trajectory_distance_counted(target, t, tests) <= dist
    });
    Ok(finish(ids, stats, start))
}

/// The `k` other trajectories nearest to `target`, nearest first, ties by
/// smaller id. The search window around the target MBR starts at half its
/// diagonal and doubles until the k-th refined distance lies inside it.
pub fn q_knn(h: &Backend, target: &Trajectory, k: usize) -> Result<QueryResult, EngineError> {
    if k < 1 {
        return Err(EngineError::InvalidQuery("k must be at least 1".into()));
    }
    let others = h.trajectory_count() - usize::from(h.contains(target.id));
    if others < k {
        return Err(EngineError::InsufficientData {
            needed: k,
            available: others,
        });
    }
    let start = Instant::now();
    let mut stats = QueryStats::default();
    let mbr = target.mbr();
    let mut r = 0.5 * mbr.diagonal();
    if r <= 0.0 {
        r = h.extent().map_or(0.0, |e| e.diagonal()) / 1000.0;
    }
    if r <= 0.0 || !r.is_finite() {
        r = 1.0;
    }
    let mut known: HashMap<TrajId, f64> = HashMap::new();
    let mut tests = PairTests::default();
    loop {
        let cands = h.candidates_into(&mbr.inflate(r), &mut stats);
        for id in cands {
            if id == target.id || known.contains_key(&id) {
                continue;
            }
            let t = h.fetch(id, &mut stats).expect("candidate ids are live");
            known.insert(id, trajectory_distance_counted(target, &t, &mut tests));
        }
        if known.len() >= k {
            let mut dists: Vec<f64> = known.values().copied().collect();
            let (_, kth, _) = dists.select_nth_unstable_by(k - 1, f64::total_cmp);
            if *kth <= r || known.len() == others {
                break;
            }
        }
        r *= 2.0;
    }
    stats.exact_tests += tests.0;
    let mut ranked: Vec<(f64, TrajId)> = known.into_iter().map(|(id, d)| (d, id)).collect();
    ranked.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    ranked.truncate(k);
    Ok(QueryResult {
        ids: ranked.iter().map(|x| x.1).collect(),
        distances: ranked.iter().map(|x| x.0).collect(),
        stats,
        elapsed: start.elapsed(),
    })
}

pub fn execute(h: &Backend, q: &QuerySpec) -> Result<QueryResult, EngineError> {
    match q {
        QuerySpec::Intersection { target } => Ok(q_intersection(h, target)),
        QuerySpec::Contains { rect, mode } => Ok(q_contains(h, rect, *mode)),
        QuerySpec::Knn { target, k } => q_knn(h, target, *k),
        QuerySpec::Proximity { target, dist } => q_proximity(h, target, *dist),
    }
}

/// Inserts in order; timing covers the whole batch.
pub fn w_insert(h: &mut Backend, trajs: &[Trajectory]) -> Result<WriteResult, EngineError> {
    let mut stats = QueryStats::default();
    let start = Instant::now();
    let mut rows = 0;
    for t in trajs {
        rows += h.insert(t.clone(), &mut stats)?;
    }
    Ok(WriteResult {
        rows,
        stats,
        elapsed: start.elapsed(),
    })
}

/// Replaces geometries in order; returns rows rewritten.
pub fn w_update(
    h: &mut Backend,
    pairs: &[(TrajId, Trajectory)],
) -> Result<WriteResult, EngineError> {
    let mut stats = QueryStats::default();
    let start = Instant::now();
    let mut rows = 0;
    for (id, t) in pairs {
        rows += h.update(*id, t.clone(), &mut stats)?;
    }
    Ok(WriteResult {
        rows,
        stats,
        elapsed: start.elapsed(),
    })
}

pub fn w_delete(h: &mut Backend, ids: &[TrajId]) -> Result<WriteResult, EngineError> {
    let mut stats = QueryStats::default();
    let start = Instant::now();
    let mut rows = 0;
    for id in ids {
        rows += h.delete(*id, &mut stats)?;
    }
    Ok(WriteResult {
        rows,
        stats,
        elapsed: start.elapsed(),
    })
}
