//! Planar geometry primitives: points, segments, trajectories and their
//! minimum bounding rectangles.
//!
//! Coordinates are planar Euclidean in the dataset's native units. Segment
//! predicates use exact orientation tests, so touching and collinear overlap
//! are classified consistently regardless of floating-point rounding.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeomError {
    #[error("trajectory {0} has {1} point(s); at least 2 are required")]
    TooFewPoints(TrajId, usize),
    #[error("trajectory {0} has a non-finite coordinate at position {1}")]
    NonFinite(TrajId, usize),
    #[error("invalid rectangle: min ({0}, {1}) exceeds max ({2}, {3})")]
    InvalidRect(f64, f64, f64, f64),
}

/// Identifier of a trajectory, unique within a dataset.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, Default,
)]
#[serde(transparent)]
pub struct TrajId(pub u64);

impl fmt::Display for TrajId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    pub fn distance(&self, other: &Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    pub fn translate(&self, dx: f64, dy: f64) -> Point {
        Point::new(self.x + dx, self.y + dy)
    }

    fn coord(&self) -> robust::Coord<f64> {
        robust::Coord {
            x: self.x,
            y: self.y,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub a: Point,
    pub b: Point,
}

impl Segment {
    pub const fn new(a: Point, b: Point) -> Self {
        Segment { a, b }
    }

    pub fn mbr(&self) -> Rect {
        Rect {
            min_x: self.a.x.min(self.b.x),
            min_y: self.a.y.min(self.b.y),
            max_x: self.a.x.max(self.b.x),
            max_y: self.a.y.max(self.b.y),
        }
    }

    pub fn is_degenerate(&self) -> bool {
        self.a == self.b
    }

    /// Closed-segment intersection, including endpoint touching and
    /// collinear overlap. Zero-length segments behave as points.
    pub fn intersects(&self, other: &Segment) -> bool {
        let (p1, q1, p2, q2) = (self.a, self.b, other.a, other.b);
        let o1 = orientation(p1, q1, p2);
        let o2 = orientation(p1, q1, q2);
        let o3 = orientation(p2, q2, p1);
        let o4 = orientation(p2, q2, q1);

        if o1 != o2 && o3 != o4 {
            return true;
        }
        // A zero orientation means a point is collinear with the other
        // segment's supporting line; it touches iff it lies in that box.
        (o1 == 0 && on_collinear_segment(p1, q1, p2))
            || (o2 == 0 && on_collinear_segment(p1, q1, q2))
            || (o3 == 0 && on_collinear_segment(p2, q2, p1))
            || (o4 == 0 && on_collinear_segment(p2, q2, q1))
    }

    pub fn distance_to_point(&self, p: &Point) -> f64 {
        let dx = self.b.x - self.a.x;
        let dy = self.b.y - self.a.y;
        let len2 = dx * dx + dy * dy;
        if len2 == 0.0 {
            return self.a.distance(p);
        }
        let t = (((p.x - self.a.x) * dx + (p.y - self.a.y) * dy) / len2).clamp(0.0, 1.0);
        let proj = Point::new(self.a.x + t * dx, self.a.y + t * dy);
        proj.distance(p)
    }

    /// Minimum Euclidean distance between two closed segments.
    pub fn distance(&self, other: &Segment) -> f64 {
        if self.intersects(other) {
            return 0.0;
        }
        self.distance_to_point(&other.a)
            .min(self.distance_to_point(&other.b))
            .min(other.distance_to_point(&self.a))
            .min(other.distance_to_point(&self.b))
    }

    /// Whether the closed segment meets the closed rectangle.
    pub fn intersects_rect(&self, rect: &Rect) -> bool {
        if rect.contains_point(&self.a) || rect.contains_point(&self.b) {
            return true;
        }
        if !self.mbr().overlaps(rect) {
            return false;
        }
        let c = rect.corners();
        (0..4).any(|i| self.intersects(&Segment::new(c[i], c[(i + 1) % 4])))
    }
}

/// Sign of the exact orientation of `c` relative to the directed line `a -> b`:
/// 1 counter-clockwise, -1 clockwise, 0 collinear.
fn orientation(a: Point, b: Point, c: Point) -> i8 {
    let det = robust::orient2d(a.coord(), b.coord(), c.coord());
    if det > 0.0 {
        1
    } else if det < 0.0 {
        -1
    } else {
        0
    }
}

// `r` is known collinear with `p`-`q`; check it lies within their box.
fn on_collinear_segment(p: Point, q: Point, r: Point) -> bool {
    r.x >= p.x.min(q.x) && r.x <= p.x.max(q.x) && r.y >= p.y.min(q.y) && r.y <= p.y.max(q.y)
}

/// Axis-aligned rectangle with closed bounds. Zero-area rectangles are valid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub min_x: f64,
    pub min_y: f64,
    pub max_x: f64,
    pub max_y: f64,
}

impl Rect {
    pub fn new(min_x: f64, min_y: f64, max_x: f64, max_y: f64) -> Result<Self, GeomError> {
        if !(min_x <= max_x && min_y <= max_y) {
            return Err(GeomError::InvalidRect(min_x, min_y, max_x, max_y));
        }
        Ok(Rect {
            min_x,
            min_y,
            max_x,
            max_y,
        })
    }

    pub fn from_point(p: Point) -> Self {
        Rect {
            min_x: p.x,
            min_y: p.y,
            max_x: p.x,
            max_y: p.y,
        }
    }

    /// Tightest rectangle around `points`; `None` when empty.
    pub fn from_points<'a>(points: impl IntoIterator<Item = &'a Point>) -> Option<Rect> {
        let mut it = points.into_iter();
        let first = Rect::from_point(*it.next()?);
        Some(it.fold(first, |r, p| r.expand_point(p)))
    }

    pub fn width(&self) -> f64 {
        self.max_x - self.min_x
    }

    pub fn height(&self) -> f64 {
        self.max_y - self.min_y
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn diagonal(&self) -> f64 {
        self.width().hypot(self.height())
    }

    pub fn center(&self) -> Point {
        Point::new(
            0.5 * (self.min_x + self.max_x),
            0.5 * (self.min_y + self.max_y),
        )
    }

    /// Closed-interval overlap on both axes; shared edges count.
    pub fn overlaps(&self, other: &Rect) -> bool {
        self.min_x <= other.max_x
            && other.min_x <= self.max_x
            && self.min_y <= other.max_y
            && other.min_y <= self.max_y
    }

    pub fn contains_rect(&self, other: &Rect) -> bool {
        self.min_x <= other.min_x
            && self.min_y <= other.min_y
            && other.max_x <= self.max_x
            && other.max_y <= self.max_y
    }

    pub fn contains_point(&self, p: &Point) -> bool {
        p.x >= self.min_x && p.x <= self.max_x && p.y >= self.min_y && p.y <= self.max_y
    }

    pub fn union(&self, other: &Rect) -> Rect {
        Rect {
            min_x: self.min_x.min(other.min_x),
            min_y: self.min_y.min(other.min_y),
            max_x: self.max_x.max(other.max_x),
            max_y: self.max_y.max(other.max_y),
        }
    }

    pub fn expand_point(&self, p: &Point) -> Rect {
        Rect {
            min_x: self.min_x.min(p.x),
            min_y: self.min_y.min(p.y),
            max_x: self.max_x.max(p.x),
            max_y: self.max_y.max(p.y),
        }
    }

    /// Grows the rectangle by `d` on every side.
    pub fn inflate(&self, d: f64) -> Rect {
        Rect {
            min_x: self.min_x - d,
            min_y: self.min_y - d,
            max_x: self.max_x + d,
            max_y: self.max_y + d,
        }
    }

    /// Area increase needed to also cover `other`.
    pub fn enlargement(&self, other: &Rect) -> f64 {
        self.union(other).area() - self.area()
    }

    /// Counter-clockwise from the lower-left corner.
    pub fn corners(&self) -> [Point; 4] {
        [
            Point::new(self.min_x, self.min_y),
            Point::new(self.max_x, self.min_y),
            Point::new(self.max_x, self.max_y),
            Point::new(self.min_x, self.max_y),
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RectRelation {
    Outside,
    Partial,
    Inside,
}

/// An identified polyline with at least two points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub id: TrajId,
    points: Vec<Point>,
}

impl Trajectory {
    pub fn new(id: TrajId, points: Vec<Point>) -> Result<Self, GeomError> {
        if points.len() < 2 {
            return Err(GeomError::TooFewPoints(id, points.len()));
        }
        if let Some(pos) = points.iter().position(|p| !p.is_finite()) {
            return Err(GeomError::NonFinite(id, pos));
        }
        Ok(Trajectory { id, points })
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn into_points(self) -> Vec<Point> {
        self.points
    }

    pub fn segment_count(&self) -> usize {
        self.points.len() - 1
    }

    pub fn segments(&self) -> impl Iterator<Item = Segment> + '_ {
        self.points.windows(2).map(|w| Segment::new(w[0], w[1]))
    }

    pub fn mbr(&self) -> Rect {
        mbr_of(self)
    }

    pub fn translated(&self, dx: f64, dy: f64) -> Trajectory {
        Trajectory {
            id: self.id,
            points: self.points.iter().map(|p| p.translate(dx, dy)).collect(),
        }
    }

    pub fn with_id(mut self, id: TrajId) -> Trajectory {
        self.id = id;
        self
    }
}

pub fn mbr_of(traj: &Trajectory) -> Rect {
    Rect::from_points(traj.points()).expect("trajectory has at least two points")
}

pub fn rects_overlap(a: &Rect, b: &Rect) -> bool {
    a.overlaps(b)
}

/// Work counter for segment-pair predicate evaluations.
#[derive(Debug, Default, Clone, Copy)]
pub struct PairTests(pub u64);

pub fn trajectory_intersects(t1: &Trajectory, t2: &Trajectory) -> bool {
    trajectory_intersects_counted(t1, t2, &mut PairTests::default())
}

pub fn trajectory_intersects_counted(
    t1: &Trajectory,
    t2: &Trajectory,
    tests: &mut PairTests,
) -> bool {
    for s1 in t1.segments() {
        let b1 = s1.mbr();
        for s2 in t2.segments() {
            tests.0 += 1;
            if b1.overlaps(&s2.mbr()) && s1.intersects(&s2) {
                return true;
            }
        }
    }
    false
}

pub fn trajectory_distance(t1: &Trajectory, t2: &Trajectory) -> f64 {
    trajectory_distance_counted(t1, t2, &mut PairTests::default())
}

/// Minimum distance over all segment pairs; exactly 0.0 iff the
/// trajectories intersect.
pub fn trajectory_distance_counted(t1: &Trajectory, t2: &Trajectory, tests: &mut PairTests) -> f64 {
    let mut best = f64::INFINITY;
    for s1 in t1.segments() {
        for s2 in t2.segments() {
            tests.0 += 1;
            let d = s1.distance(&s2);
            if d < best {
                best = d;
                if best == 0.0 {
                    return 0.0;
                }
            }
        }
    }
    best
}

pub fn rect_relation(traj: &Trajectory, rect: &Rect) -> RectRelation {
    rect_relation_counted(traj, rect, &mut PairTests::default())
}

/// As [`rect_relation`], counting segment-versus-rect tests.
pub fn rect_relation_counted(
    traj: &Trajectory,
    rect: &Rect,
    tests: &mut PairTests,
) -> RectRelation {
    // A polyline lies in a convex region iff all its vertices do.
    if traj.points().iter().all(|p| rect.contains_point(p)) {
        return RectRelation::Inside;
    }
    if traj.mbr().overlaps(rect)
        && traj.segments().any(|s| {
            tests.0 += 1;
            s.intersects_rect(rect)
        })
    {
        RectRelation::Partial
    } else {
        RectRelation::Outside
    }
}

/// Consecutive segments of the polyline, each tagged with its position.
pub fn segmentize(traj: &Trajectory) -> Vec<(Segment, usize)> {
    traj.segments().enumerate().map(|(i, s)| (s, i)).collect()
}
