//! Guttman R-tree with quadratic split and condense-by-reinsertion delete.
//! Nodes live in an arena; leaf entries point at table row ids.

use super::{QueryStats, RowId};
use crate::geom::Rect;

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Entry {
    pub mbr: Rect,
    /// Child node index for internal nodes, row id for leaves.
    pub child: usize,
}

#[derive(Debug, Clone)]
struct Node {
    /// 0 for leaves.
    level: u32,
    entries: Vec<Entry>,
}

#[derive(Debug, Clone)]
pub struct RTree {
    nodes: Vec<Node>,
    free: Vec<usize>,
    root: usize,
    max_entries: usize,
    min_entries: usize,
    len: usize,
}

impl RTree {
    pub fn new(max_entries: usize, min_entries: usize) -> Self {
        assert!(min_entries >= 2 && min_entries <= max_entries / 2);
        RTree {
            nodes: vec![Node {
                level: 0,
                entries: Vec::new(),
            }],
            free: Vec::new(),
            root: 0,
            max_entries,
            min_entries,
            len: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn height(&self) -> u32 {
        self.nodes[self.root].level + 1
    }

    fn alloc(&mut self, node: Node) -> usize {
        match self.free.pop() {
            Some(i) => {
                self.nodes[i] = node;
                i
            }
            None => {
                self.nodes.push(node);
                self.nodes.len() - 1
            }
        }
    }

    fn release(&mut self, i: usize) {
        self.nodes[i].entries = Vec::new();
        self.free.push(i);
    }

    fn node_mbr(&self, i: usize) -> Rect {
        let e = &self.nodes[i].entries;
        e[1..].iter().fold(e[0].mbr, |r, x| r.union(&x.mbr))
    }

    pub fn insert(&mut self, mbr: Rect, row: RowId, stats: &mut QueryStats) {
        self.insert_at_level(Entry { mbr, child: row }, 0, stats);
        self.len += 1;
    }

    fn insert_at_level(&mut self, entry: Entry, level: u32, stats: &mut QueryStats) {
        if let Some(sibling) = self.insert_rec(self.root, entry, level, stats) {
            let old = self.root;
            let new_level = self.nodes[old].level + 1;
            let entries = vec![
                Entry {
                    mbr: self.node_mbr(old),
                    child: old,
                },
                Entry {
                    mbr: self.node_mbr(sibling),
                    child: sibling,
                },
            ];
            self.root = self.alloc(Node {
                level: new_level,
                entries,
            });
            stats.nodes_visited += 1;
        }
    }

    /// Returns the index of a new sibling when `node` had to split.
    fn insert_rec(
        &mut self,
        node: usize,
        entry: Entry,
        level: u32,
        stats: &mut QueryStats,
    ) -> Option<usize> {
        stats.nodes_visited += 1;
        if self.nodes[node].level == level {
            self.nodes[node].entries.push(entry);
        } else {
            let idx = self.choose_subtree(node, &entry.mbr);
            let child = self.nodes[node].entries[idx].child;
            let split = self.insert_rec(child, entry, level, stats);
            self.nodes[node].entries[idx].mbr = self.node_mbr(child);
            if let Some(s) = split {
                let mbr = self.node_mbr(s);
                self.nodes[node].entries.push(Entry { mbr, child: s });
            }
        }
        if self.nodes[node].entries.len() > self.max_entries {
            let entries = std::mem::take(&mut self.nodes[node].entries);
            let (keep, moved) = quadratic_split(entries, self.min_entries);
            self.nodes[node].entries = keep;
            let level = self.nodes[node].level;
            stats.nodes_visited += 1;
            return Some(self.alloc(Node {
                level,
                entries: moved,
            }));
        }
        None
    }

    /// Least enlargement, ties broken by smaller area, then position.
    fn choose_subtree(&self, node: usize, mbr: &Rect) -> usize {
        let mut best = 0;
        let mut best_key = (f64::INFINITY, f64::INFINITY);
        for (i, e) in self.nodes[node].entries.iter().enumerate() {
            let key = (e.mbr.enlargement(mbr), e.mbr.area());
            if key.0 < best_key.0 || (key.0 == best_key.0 && key.1 < best_key.1) {
                best = i;
                best_key = key;
            }
        }
        best
    }

    /// Removes the leaf entry for `row`, whose box is `mbr`. Underfull nodes
    /// on the path are dissolved and their entries reinserted at their level.
    pub fn remove(&mut self, mbr: &Rect, row: RowId, stats: &mut QueryStats) -> bool {
        let mut orphans = Vec::new();
        if !self.remove_rec(self.root, mbr, row, &mut orphans, stats) {
            return false;
        }
        self.len -= 1;
        orphans.sort_by_key(|e: &(Entry, u32)| std::cmp::Reverse(e.1));
        for (entry, level) in orphans {
            self.insert_at_level(entry, level, stats);
        }
        while self.nodes[self.root].level > 0 && self.nodes[self.root].entries.len() == 1 {
            let old = self.root;
            self.root = self.nodes[old].entries[0].child;
            self.release(old);
        }
        true
    }

    fn remove_rec(
        &mut self,
        node: usize,
        mbr: &Rect,
        row: RowId,
        orphans: &mut Vec<(Entry, u32)>,
        stats: &mut QueryStats,
    ) -> bool {
        stats.nodes_visited += 1;
        if self.nodes[node].level == 0 {
            let entries = &mut self.nodes[node].entries;
            return match entries.iter().position(|e| e.child == row) {
                Some(pos) => {
                    entries.remove(pos);
                    true
                }
                None => false,
            };
        }
        for i in 0..self.nodes[node].entries.len() {
            let e = self.nodes[node].entries[i];
            if !e.mbr.contains_rect(mbr) {
                continue;
            }
            if self.remove_rec(e.child, mbr, row, orphans, stats) {
                if self.nodes[e.child].entries.len() < self.min_entries {
                    let level = self.nodes[e.child].level;
                    let taken = std::mem::take(&mut self.nodes[e.child].entries);
                    orphans.extend(taken.into_iter().map(|x| (x, level)));
                    self.release(e.child);
                    self.nodes[node].entries.remove(i);
                } else {
                    self.nodes[node].entries[i].mbr = self.node_mbr(e.child);
                }
                return true;
            }
        }
        false
    }

    pub fn search(&self, rect: &Rect, out: &mut Vec<RowId>, stats: &mut QueryStats) {
        let mut stack = vec![self.root];
        while let Some(n) = stack.pop() {
            stats.nodes_visited += 1;
            let node = &self.nodes[n];
            for e in &node.entries {
                if e.mbr.overlaps(rect) {
                    if node.level == 0 {
                        out.push(e.child);
                    } else {
                        stack.push(e.child);
                    }
                }
            }
        }
    }

    /// Checks entry bounds, exact parent boxes and uniform leaf depth.
    pub fn check_invariants(&self) -> Result<(), String> {
        let mut leaves = 0;
        self.check_node(self.root, true, &mut leaves)?;
        if leaves != self.len {
            return Err(format!("{} leaf entries but len {}", leaves, self.len));
        }
        Ok(())
    }

    fn check_node(&self, n: usize, is_root: bool, leaves: &mut usize) -> Result<(), String> {
        let node = &self.nodes[n];
        let count = node.entries.len();
        if count > self.max_entries {
            return Err(format!("node {n} overflows with {count} entries"));
        }
        if !is_root && count < self.min_entries {
            return Err(format!("node {n} underflows with {count} entries"));
        }
        if is_root && node.level > 0 && count < 2 {
            return Err(format!("internal root has {count} entries"));
        }
        if node.level == 0 {
            *leaves += count;
            return Ok(());
        }
        for e in &node.entries {
            let child = &self.nodes[e.child];
            if child.level + 1 != node.level {
                return Err(format!("child {} of node {n} at wrong level", e.child));
            }
            if e.mbr != self.node_mbr(e.child) {
                return Err(format!("entry box for child {} is not the union", e.child));
            }
            self.check_node(e.child, false, leaves)?;
        }
        Ok(())
    }
}

/// Guttman's quadratic split of an overflowing entry list into two groups,
/// each with at least `min_entries` entries.
pub(crate) fn quadratic_split(entries: Vec<Entry>, min_entries: usize) -> (Vec<Entry>, Vec<Entry>) {
    let n = entries.len();
    // PickSeeds: the pair wasting the most area when grouped.
    let (mut s1, mut s2, mut worst) = (0, 1, f64::NEG_INFINITY);
    for i in 0..n {
        for j in i + 1..n {
            let (a, b) = (&entries[i].mbr, &entries[j].mbr);
            let waste = a.union(b).area() - a.area() - b.area();
            if waste > worst {
                (s1, s2, worst) = (i, j, waste);
            }
        }
    }
    let mut g1 = vec![entries[s1]];
    let mut g2 = vec![entries[s2]];
    let (mut r1, mut r2) = (entries[s1].mbr, entries[s2].mbr);
    let mut rest: Vec<Entry> = entries
        .into_iter()
        .enumerate()
        .filter(|(i, _)| *i != s1 && *i != s2)
        .map(|(_, e)| e)
        .collect();

    while !rest.is_empty() {
        if g1.len() + rest.len() == min_entries {
            g1.append(&mut rest);
            break;
        }
        if g2.len() + rest.len() == min_entries {
            g2.append(&mut rest);
            break;
        }
        // PickNext: strongest preference for one group.
        let mut pick = 0;
        let mut best_diff = f64::NEG_INFINITY;
        for (i, e) in rest.iter().enumerate() {
            let diff = (r1.enlargement(&e.mbr) - r2.enlargement(&e.mbr)).abs();
            if diff > best_diff {
                pick = i;
                best_diff = diff;
            }
        }
        let e = rest.remove(pick);
        let (d1, d2) = (r1.enlargement(&e.mbr), r2.enlargement(&e.mbr));
        let to_first = if d1 != d2 {
            d1 < d2
        } else if r1.area() != r2.area() {
            r1.area() < r2.area()
        } else {
            g1.len() <= g2.len()
        };
        if to_first {
            r1 = r1.union(&e.mbr);
            g1.push(e);
        } else {
            r2 = r2.union(&e.mbr);
            g2.push(e);
        }
    }
    (g1, g2)
}
