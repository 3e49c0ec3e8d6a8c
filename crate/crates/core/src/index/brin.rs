//! Block-range summaries: one MBR per run of `range_size` consecutive rows.

use std::ops::Range;

use super::{QueryStats, RowId, StoredRow};
use crate::geom::Rect;

#[derive(Debug, Clone)]
pub struct BlockRange {
    range_size: usize,
    /// `None` for ranges without live rows after a summarize.
    summaries: Vec<Option<Rect>>,
}

impl BlockRange {
    pub fn new(range_size: usize) -> Self {
        assert!(range_size >= 1);
        BlockRange {
            range_size,
            summaries: Vec::new(),
        }
    }

    pub fn range_size(&self) -> usize {
        self.range_size
    }

    pub fn range_count(&self) -> usize {
        self.summaries.len()
    }

    pub fn summary(&self, range: usize) -> Option<Rect> {
        self.summaries.get(range).copied().flatten()
    }

    /// Extends the summary of the range holding `row`, opening ranges as
    /// needed. Touches exactly one summary.
    pub fn append(&mut self, row: RowId, mbr: Rect, stats: &mut QueryStats) {
        let range = row / self.range_size;
        if range >= self.summaries.len() {
            self.summaries.resize(range + 1, None);
        }
        let s = &mut self.summaries[range];
        *s = Some(s.map_or(mbr, |r| r.union(&mbr)));
        stats.rows_touched += 1;
    }

    /// Row-id ranges whose summary overlaps `rect`.
    pub fn matching_ranges(&self, rect: &Rect, stats: &mut QueryStats) -> Vec<Range<RowId>> {
        let mut out = Vec::new();
        for (i, s) in self.summaries.iter().enumerate() {
            stats.nodes_visited += 1;
            if s.is_some_and(|s| s.overlaps(rect)) {
                stats.ranges_scanned += 1;
                out.push(i * self.range_size..(i + 1) * self.range_size);
            }
        }
        out
    }

    /// Recomputes every summary as the tight union of its live rows.
    pub fn summarize(&mut self, rows: &[Option<StoredRow>], stats: &mut QueryStats) {
        for (i, s) in self.summaries.iter_mut().enumerate() {
            let start = i * self.range_size;
            let end = (start + self.range_size).min(rows.len());
            *s = rows[start.min(end)..end]
                .iter()
                .flatten()
                .map(|r| r.mbr)
                .reduce(|a, b| a.union(&b));
            stats.rows_touched += (end - start.min(end)) as u64;
            stats.nodes_visited += 1;
        }
    }
}
