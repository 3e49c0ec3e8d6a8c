//! Storage table plus the candidate-producing access paths: R-tree,
//! MX-CIF quadtree, block-range summaries and a plain sequential scan.
//!
//! Rows live in an append-only table; deletes leave tombstones and row ids
//! are never reused, so block ranges follow insertion order.

mod brin;
mod quadtree;
mod rtree;

use std::collections::HashMap;
use std::ops::AddAssign;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use brin::BlockRange;
pub use quadtree::QuadTree;
pub use rtree::RTree;

use crate::dataset::Dataset;
use crate::geom::{segmentize, Point, Rect, Segment, TrajId, Trajectory};

pub type RowId = usize;

/// Hardware-independent work counters for one operation.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryStats {
    pub nodes_visited: u64,
    pub ranges_scanned: u64,
    pub candidates_returned: u64,
    pub exact_tests: u64,
    pub rows_touched: u64,
}

impl AddAssign for QueryStats {
    fn add_assign(&mut self, o: Self) {
        self.nodes_visited += o.nodes_visited;
        self.ranges_scanned += o.ranges_scanned;
        self.candidates_returned += o.candidates_returned;
        self.exact_tests += o.exact_tests;
        self.rows_touched += o.rows_touched;
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum IndexError {
    #[error("trajectory {0} is already stored")]
    DuplicateTrajectory(TrajId),
    #[error("trajectory {0} not found")]
    NotFound(TrajId),
    #[error("invalid backend configuration: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StorageFormat {
    Segmented,
    Whole,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum IndexKind {
    RTree,
    QuadTree,
    #[serde(rename = "brin")]
    BlockRange,
    SeqScan,
}

impl StorageFormat {
    pub const ALL: [StorageFormat; 2] = [StorageFormat::Segmented, StorageFormat::Whole];

    pub fn name(self) -> &'static str {
        match self {
            StorageFormat::Segmented => "segmented",
            StorageFormat::Whole => "whole",
        }
    }
}

impl IndexKind {
    pub const ALL: [IndexKind; 4] = [
        IndexKind::RTree,
        IndexKind::QuadTree,
        IndexKind::BlockRange,
        IndexKind::SeqScan,
    ];

    pub fn name(self) -> &'static str {
        match self {
            IndexKind::RTree => "rtree",
            IndexKind::QuadTree => "quadtree",
            IndexKind::BlockRange => "brin",
            IndexKind::SeqScan => "seqscan",
        }
    }
}

impl std::fmt::Display for StorageFormat {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::fmt::Display for IndexKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for StorageFormat {
    type Err = IndexError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "segmented" | "segment" => Ok(StorageFormat::Segmented),
            "whole" | "trajectory" => Ok(StorageFormat::Whole),
            other => Err(IndexError::InvalidConfig(format!(
                "unknown format `{other}`"
            ))),
        }
    }
}

impl std::str::FromStr for IndexKind {
    type Err = IndexError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace(['-', '_'], "").as_str() {
            "rtree" | "gist" => Ok(IndexKind::RTree),
            "quadtree" | "spgist" => Ok(IndexKind::QuadTree),
            "brin" | "blockrange" => Ok(IndexKind::BlockRange),
            "seqscan" | "none" => Ok(IndexKind::SeqScan),
            other => Err(IndexError::InvalidConfig(format!(
                "unknown index `{other}`"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct BackendConfig {
    pub format: StorageFormat,
    pub index: IndexKind,
    pub rtree_max: usize,
    pub rtree_min: usize,
    pub quad_capacity: usize,
    pub quad_max_depth: u32,
    pub brin_range_size: usize,
}

impl Default for BackendConfig {
    fn default() -> Self {
        BackendConfig {
            format: StorageFormat::Whole,
            index: IndexKind::SeqScan,
            rtree_max: 16,
            rtree_min: 6,
            quad_capacity: 16,
            quad_max_depth: 16,
            brin_range_size: 128,
        }
    }
}

impl BackendConfig {
    pub fn new(format: StorageFormat, index: IndexKind) -> Self {
        BackendConfig {
            format,
            index,
            ..BackendConfig::default()
        }
    }

    pub fn validate(&self) -> Result<(), IndexError> {
        let bad = |m: String| Err(IndexError::InvalidConfig(m));
        if self.rtree_min < 2 || self.rtree_min > self.rtree_max / 2 {
            return bad(format!(
                "rtree_min {} must lie in [2, rtree_max/2 = {}]",
                self.rtree_min,
                self.rtree_max / 2
            ));
        }
        if self.quad_capacity < 1 {
            return bad("quad_capacity must be at least 1".into());
        }
        if self.brin_range_size < 1 {
            return bad("brin_range_size must be at least 1".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum RowGeometry {
    Whole(Trajectory),
    Segment { segment: Segment, seq: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct StoredRow {
    pub row_id: RowId,
    pub traj_id: TrajId,
    pub geometry: RowGeometry,
    pub mbr: Rect,
}

#[derive(Debug, Clone)]
enum Access {
    RTree(RTree),
    QuadTree(QuadTree),
    BlockRange(BlockRange),
    SeqScan,
}

/// A loaded table with one access path. Cloning yields an independent copy.
#[derive(Debug, Clone)]
pub struct Backend {
    cfg: BackendConfig,
    rows: Vec<Option<StoredRow>>,
    live_rows: usize,
    by_traj: HashMap<TrajId, Vec<RowId>>,
    extent: Option<Rect>,
    access: Access,
}

impl Backend {
    /// Stores every trajectory of `ds` in dataset order and builds the index.
    pub fn bulk_load(ds: &Dataset, cfg: BackendConfig) -> Result<Backend, IndexError> {
        cfg.validate()?;
        let access = match cfg.index {
            IndexKind::RTree => Access::RTree(RTree::new(cfg.rtree_max, cfg.rtree_min)),
            IndexKind::QuadTree => {
                let cell = ds.extent().unwrap_or(Rect {
                    min_x: 0.0,
                    min_y: 0.0,
                    max_x: 1.0,
                    max_y: 1.0,
                });
                Access::QuadTree(QuadTree::new(cell, cfg.quad_capacity, cfg.quad_max_depth))
            }
            IndexKind::BlockRange => Access::BlockRange(BlockRange::new(cfg.brin_range_size)),
            IndexKind::SeqScan => Access::SeqScan,
        };
        let mut b = Backend {
            cfg,
            rows: Vec::with_capacity(match cfg.format {
                StorageFormat::Whole => ds.len(),
                StorageFormat::Segmented => ds.segment_count(),
            }),
            live_rows: 0,
            by_traj: HashMap::with_capacity(ds.len()),
            extent: None,
            access,
        };
        let mut stats = QueryStats::default();
        for t in ds.trajectories() {
            b.insert(t.clone(), &mut stats)?;
        }
        Ok(b)
    }

    pub fn config(&self) -> &BackendConfig {
        &self.cfg
    }

    pub fn trajectory_count(&self) -> usize {
        self.by_traj.len()
    }

    pub fn row_count(&self) -> usize {
        self.live_rows
    }

    /// Union of every row ever stored; deletes do not shrink it.
    pub fn extent(&self) -> Option<Rect> {
        self.extent
    }

    pub fn contains(&self, id: TrajId) -> bool {
        self.by_traj.contains_key(&id)
    }

    /// Live trajectory ids, ascending.
    pub fn ids(&self) -> Vec<TrajId> {
        let mut ids: Vec<TrajId> = self.by_traj.keys().copied().collect();
        ids.sort_unstable();
        ids
    }

    pub fn rows(&self) -> impl Iterator<Item = &StoredRow> {
        self.rows.iter().flatten()
    }

    pub fn rtree(&self) -> Option<&RTree> {
        match &self.access {
            Access::RTree(t) => Some(t),
            _ => None,
        }
    }

    pub fn quadtree(&self) -> Option<&QuadTree> {
        match &self.access {
            Access::QuadTree(q) => Some(q),
            _ => None,
        }
    }

    pub fn block_range(&self) -> Option<&BlockRange> {
        match &self.access {
            Access::BlockRange(b) => Some(b),
            _ => None,
        }
    }

    /// Ids of trajectories owning at least one row whose MBR overlaps
    /// `rect`, ascending and deduplicated.
    pub fn candidates_by_rect(&self, rect: &Rect) -> (Vec<TrajId>, QueryStats) {
        let mut stats = QueryStats::default();
        let ids = self.candidates_into(rect, &mut stats);
        (ids, stats)
    }

    /// As [`Backend::candidates_by_rect`], adding to existing counters.
    /// `candidates_returned` counts the distinct owners the access path
    /// hands to the MBR recheck.
    pub fn candidates_into(&self, rect: &Rect, stats: &mut QueryStats) -> Vec<TrajId> {
        let mut emitted: Vec<RowId> = Vec::new();
        match &self.access {
            Access::RTree(t) => t.search(rect, &mut emitted, stats),
            Access::QuadTree(q) => q.search(rect, &mut emitted, stats),
            Access::BlockRange(b) => {
                for range in b.matching_ranges(rect, stats) {
                    let end = range.end.min(self.rows.len());
                    emitted.extend((range.start..end).filter(|&r| self.rows[r].is_some()));
                }
            }
            Access::SeqScan => {
                emitted.extend((0..self.rows.len()).filter(|&r| self.rows[r].is_some()));
            }
        }
        let mut owners: Vec<TrajId> = Vec::new();
        let mut hits: Vec<TrajId> = Vec::new();
        for rid in emitted {
            let row = self.rows[rid].as_ref().expect("index points at live rows");
            stats.rows_touched += 1;
            owners.push(row.traj_id);
            if row.mbr.overlaps(rect) {
                hits.push(row.traj_id);
            }
        }
        owners.sort_unstable();
        owners.dedup();
        stats.candidates_returned += owners.len() as u64;
        hits.sort_unstable();
        hits.dedup();
        hits
    }

    /// Reassembles the stored geometry of `id`, counting fetched rows.
    pub fn fetch(&self, id: TrajId, stats: &mut QueryStats) -> Option<Trajectory> {
        let rids = self.by_traj.get(&id)?;
        stats.rows_touched += rids.len() as u64;
        let mut segs: Vec<(usize, Segment)> = Vec::with_capacity(rids.len());
        for &rid in rids {
            let row = self.rows[rid].as_ref().expect("live row");
            match &row.geometry {
                RowGeometry::Whole(t) => return Some(t.clone()),
                RowGeometry::Segment { segment, seq } => segs.push((*seq, *segment)),
            }
        }
        segs.sort_by_key(|s| s.0);
        let mut pts: Vec<Point> = Vec::with_capacity(segs.len() + 1);
        pts.push(segs[0].1.a);
        pts.extend(segs.iter().map(|s| s.1.b));
        Some(Trajectory::new(id, pts).expect("stored segments form a valid trajectory"))
    }

    /// Appends the rows of `traj`; returns the number of rows written.
    pub fn insert(
        &mut self,
        traj: Trajectory,
        stats: &mut QueryStats,
    ) -> Result<usize, IndexError> {
        if self.by_traj.contains_key(&traj.id) {
            return Err(IndexError::DuplicateTrajectory(traj.id));
        }
        let id = traj.id;
        let new_rows: Vec<(RowGeometry, Rect)> = match self.cfg.format {
            StorageFormat::Whole => {
                let mbr = traj.mbr();
                vec![(RowGeometry::Whole(traj), mbr)]
            }
            StorageFormat::Segmented => segmentize(&traj)
                .into_iter()
                .map(|(segment, seq)| (RowGeometry::Segment { segment, seq }, segment.mbr()))
                .collect(),
        };
        let mut rids = Vec::with_capacity(new_rows.len());
        for (geometry, mbr) in new_rows {
            let row_id = self.rows.len();
            self.rows.push(Some(StoredRow {
                row_id,
                traj_id: id,
                geometry,
                mbr,
            }));
            stats.rows_touched += 1;
            self.extent = Some(self.extent.map_or(mbr, |e| e.union(&mbr)));
            match &mut self.access {
                Access::RTree(t) => t.insert(mbr, row_id, stats),
                Access::QuadTree(q) => q.insert(mbr, row_id, stats),
                Access::BlockRange(b) => b.append(row_id, mbr, stats),
                Access::SeqScan => {}
            }
            rids.push(row_id);
        }
        let n = rids.len();
        self.live_rows += n;
        self.by_traj.insert(id, rids);
        Ok(n)
    }

    /// Removes every row of `id`; returns the number of rows removed.
    pub fn delete(&mut self, id: TrajId, stats: &mut QueryStats) -> Result<usize, IndexError> {
        let rids = self.by_traj.remove(&id).ok_or(IndexError::NotFound(id))?;
        for &rid in &rids {
            let row = self.rows[rid].take().expect("live row");
            stats.rows_touched += 1;
            match &mut self.access {
                Access::RTree(t) => {
                    let found = t.remove(&row.mbr, rid, stats);
                    debug_assert!(found);
                }
                Access::QuadTree(q) => {
                    let found = q.remove(&row.mbr, rid, stats);
                    debug_assert!(found);
                }
                Access::BlockRange(_) | Access::SeqScan => {}
            }
        }
        self.live_rows -= rids.len();
        Ok(rids.len())
    }

    /// Replaces the geometry of `id`, keeping the id; returns rows written.
    pub fn update(
        &mut self,
        id: TrajId,
        geometry: Trajectory,
        stats: &mut QueryStats,
    ) -> Result<usize, IndexError> {
        self.delete(id, stats)?;
        self.insert(geometry.with_id(id), stats)
    }

    /// Rebuilds block-range summaries from live rows. No-op for other indexes.
    pub fn summarize(&mut self, stats: &mut QueryStats) {
        if let Access::BlockRange(b) = &mut self.access {
            b.summarize(&self.rows, stats);
        }
    }
}
