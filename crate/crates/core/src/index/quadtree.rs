//! MX-CIF style quadtree: each box is kept at the deepest cell that fully
//! contains it, so large boxes stay near the root.

use super::{QueryStats, RowId};
use crate::geom::Rect;

#[derive(Debug, Clone)]
struct QNode {
    cell: Rect,
    depth: u32,
    entries: Vec<(Rect, RowId)>,
    children: Option<[usize; 4]>,
}

#[derive(Debug, Clone)]
pub struct QuadTree {
    nodes: Vec<QNode>,
    free: Vec<usize>,
    capacity: usize,
    max_depth: u32,
    len: usize,
}

fn quadrants(c: &Rect) -> [Rect; 4] {
    let (mx, my) = ((c.min_x + c.max_x) / 2.0, (c.min_y + c.max_y) / 2.0);
    [
        Rect {
            min_x: c.min_x,
            min_y: c.min_y,
            max_x: mx,
            max_y: my,
        },
        Rect {
            min_x: mx,
            min_y: c.min_y,
            max_x: c.max_x,
            max_y: my,
        },
        Rect {
            min_x: c.min_x,
            min_y: my,
            max_x: mx,
            max_y: c.max_y,
        },
        Rect {
            min_x: mx,
            min_y: my,
            max_x: c.max_x,
            max_y: c.max_y,
        },
    ]
}

impl QuadTree {
    /// Boxes not contained in `root_cell` are kept at the root.
    pub fn new(root_cell: Rect, capacity: usize, max_depth: u32) -> Self {
        assert!(capacity >= 1);
        QuadTree {
            nodes: vec![QNode {
                cell: root_cell,
                depth: 0,
                entries: Vec::new(),
                children: None,
            }],
            free: Vec::new(),
            capacity,
            max_depth,
            len: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn root_cell(&self) -> Rect {
        self.nodes[0].cell
    }

    /// Number of nodes currently in the tree.
    pub fn node_count(&self) -> usize {
        self.nodes.len() - self.free.len()
    }

    /// Depth at which the entry for `row` is stored.
    pub fn depth_of(&self, mbr: &Rect, row: RowId) -> Option<u32> {
        self.locate(mbr, row)
            .map(|(path, _)| self.nodes[*path.last().unwrap()].depth)
    }

    fn child_for(&self, node: usize, mbr: &Rect) -> Option<usize> {
        let children = self.nodes[node].children?;
        children
            .into_iter()
            .find(|&c| self.nodes[c].cell.contains_rect(mbr))
    }

    fn alloc(&mut self, node: QNode) -> usize {
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

    pub fn insert(&mut self, mbr: Rect, row: RowId, stats: &mut QueryStats) {
        self.len += 1;
        let mut node = 0;
        stats.nodes_visited += 1;
        if !self.nodes[0].cell.contains_rect(&mbr) {
            self.nodes[0].entries.push((mbr, row));
            return;
        }
        while let Some(c) = self.child_for(node, &mbr) {
            node = c;
            stats.nodes_visited += 1;
        }
        self.nodes[node].entries.push((mbr, row));
        self.split_if_needed(node, stats);
    }

    fn split_if_needed(&mut self, node: usize, stats: &mut QueryStats) {
        let n = &self.nodes[node];
        if n.children.is_some() || n.entries.len() <= self.capacity || n.depth >= self.max_depth {
            return;
        }
        let depth = n.depth + 1;
        let cells = quadrants(&n.cell);
        let children = cells.map(|cell| {
            self.alloc(QNode {
                cell,
                depth,
                entries: Vec::new(),
                children: None,
            })
        });
        stats.nodes_visited += 4;
        self.nodes[node].children = Some(children);
        let entries = std::mem::take(&mut self.nodes[node].entries);
        let mut stay = Vec::new();
        for (mbr, row) in entries {
            match self.child_for(node, &mbr) {
                Some(c) => self.nodes[c].entries.push((mbr, row)),
                None => stay.push((mbr, row)),
            }
        }
        self.nodes[node].entries = stay;
        for c in children {
            self.split_if_needed(c, stats);
        }
    }

    /// Path from the root to the node holding `row`, and its entry position.
    fn locate(&self, mbr: &Rect, row: RowId) -> Option<(Vec<usize>, usize)> {
        let mut path = vec![0];
        let mut node = 0;
        loop {
            if let Some(pos) = self.nodes[node].entries.iter().position(|e| e.1 == row) {
                return Some((path, pos));
            }
            if node == 0 && !self.nodes[0].cell.contains_rect(mbr) {
                return None;
            }
            node = self.child_for(node, mbr)?;
            path.push(node);
        }
    }

    pub fn remove(&mut self, mbr: &Rect, row: RowId, stats: &mut QueryStats) -> bool {
        let Some((path, pos)) = self.locate(mbr, row) else {
            return false;
        };
        stats.nodes_visited += path.len() as u64;
        let holder = *path.last().unwrap();
        self.nodes[holder].entries.swap_remove(pos);
        self.len -= 1;
        // Collapse bottom-up while all four children are empty leaves.
        for &n in path.iter().rev() {
            let Some(children) = self.nodes[n].children else {
                continue;
            };
            let all_empty = children
                .iter()
                .all(|&c| self.nodes[c].children.is_none() && self.nodes[c].entries.is_empty());
            if !all_empty {
                break;
            }
            for c in children {
                self.free.push(c);
            }
            self.nodes[n].children = None;
        }
        true
    }

    /// Every entry stored at a node whose cell overlaps `rect`; the root's
    /// entries are always emitted.
    pub fn search(&self, rect: &Rect, out: &mut Vec<RowId>, stats: &mut QueryStats) {
        let mut stack = vec![0];
        while let Some(n) = stack.pop() {
            stats.nodes_visited += 1;
            let node = &self.nodes[n];
            out.extend(node.entries.iter().map(|e| e.1));
            if let Some(children) = node.children {
                stack.extend(
                    children
                        .into_iter()
                        .filter(|&c| self.nodes[c].cell.overlaps(rect)),
                );
            }
        }
    }

    /// Checks that entries sit inside their cells and child cells are the
    /// quadrants of their parent.
    pub fn check_invariants(&self) -> Result<(), String> {
        let mut count = 0;
        let mut stack = vec![0];
        while let Some(n) = stack.pop() {
            let node = &self.nodes[n];
            count += node.entries.len();
            for (mbr, row) in &node.entries {
                if n != 0 && !node.cell.contains_rect(mbr) {
                    return Err(format!("row {row} outside cell of node {n}"));
                }
                if self.child_for(n, mbr).is_some() {
                    return Err(format!("row {row} fits a child of node {n}"));
                }
            }
            if let Some(children) = node.children {
                let q = quadrants(&node.cell);
                for (c, cell) in children.into_iter().zip(q) {
                    if self.nodes[c].cell != cell || self.nodes[c].depth != node.depth + 1 {
                        return Err(format!("child {c} of node {n} is not a quadrant"));
                    }
                    stack.push(c);
                }
            }
        }
        if count != self.len {
            return Err(format!("{count} entries but len {}", self.len));
        }
        Ok(())
    }
}
