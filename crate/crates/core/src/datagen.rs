//! Seeded synthetic trajectory generators: uniformly random, evenly rastered,
//! hotspot-skewed, and hotspot-skewed with inter-hotspot travel.
//!
//! Every trajectory draws from its own RNG stream derived from the spec seed,
//! so output depends only on the spec and is ordered by trajectory index.

use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::Dataset;
use crate::geom::{Point, Rect, TrajId, Trajectory};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GenError {
    #[error("invalid generator parameters: {0}")]
    InvalidParams(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GenKind {
    Random,
    Even,
    Skewed,
    SkewedOverlap,
}

impl GenKind {
    pub const ALL: [GenKind; 4] = [
        GenKind::Random,
        GenKind::Even,
        GenKind::Skewed,
        GenKind::SkewedOverlap,
    ];

    pub fn name(self) -> &'static str {
        match self {
            GenKind::Random => "random",
            GenKind::Even => "even",
            GenKind::Skewed => "skewed",
            GenKind::SkewedOverlap => "skewed_overlap",
        }
    }
}

impl std::str::FromStr for GenKind {
    type Err = GenError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "random" => Ok(GenKind::Random),
            "even" => Ok(GenKind::Even),
            "skewed" => Ok(GenKind::Skewed),
            "skewed_overlap" | "skewedoverlap" => Ok(GenKind::SkewedOverlap),
            other => Err(GenError::InvalidParams(format!("unknown kind `{other}`"))),
        }
    }
}

/// Generator parameters. `step` and `sigma` are fractions of the bbox width.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenSpec {
    pub kind: GenKind,
    pub m: usize,
    pub k: usize,
    pub bbox: Rect,
    pub step: f64,
    pub seed: u64,
    pub hotspots: usize,
    pub sigma: f64,
    pub hotspot_fraction: f64,
    pub travel_fraction: f64,
}

impl Default for GenSpec {
    fn default() -> Self {
        GenSpec {
            kind: GenKind::Random,
            m: 1000,
            k: 10,
            bbox: Rect {
                min_x: 0.0,
                min_y: 0.0,
                max_x: 1.0,
                max_y: 1.0,
            },
            step: 0.005,
            seed: 0,
            hotspots: 10,
            sigma: 0.02,
            hotspot_fraction: 0.9,
            travel_fraction: 0.3,
        }
    }
}

impl GenSpec {
    pub fn new(kind: GenKind, m: usize, k: usize, seed: u64) -> Self {
        GenSpec {
            kind,
            m,
            k,
            seed,
            ..GenSpec::default()
        }
    }

    pub fn validate(&self) -> Result<(), GenError> {
        let bad = |msg: String| Err(GenError::InvalidParams(msg));
        if self.m < 1 {
            return bad("m must be at least 1".into());
        }
        if self.k < 1 {
            return bad("k must be at least 1".into());
        }
        let b = &self.bbox;
        let finite = [b.min_x, b.min_y, b.max_x, b.max_y]
            .iter()
            .all(|v| v.is_finite());
        if !finite || !(b.width() > 0.0 && b.height() > 0.0) {
            return bad(format!("bbox {b:?} must be finite with positive area"));
        }
        if !(self.step.is_finite() && self.step >= 0.0) {
            return bad(format!("step {} must be a non-negative number", self.step));
        }
        if !(self.sigma.is_finite() && self.sigma >= 0.0) {
            return bad(format!(
                "sigma {} must be a non-negative number",
                self.sigma
            ));
        }
        for (name, v) in [
            ("hotspot_fraction", self.hotspot_fraction),
            ("travel_fraction", self.travel_fraction),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return bad(format!("{name} {v} must lie in [0, 1]"));
            }
        }
        if matches!(self.kind, GenKind::Skewed | GenKind::SkewedOverlap) && self.hotspots < 1 {
            return bad("skewed kinds need at least one hotspot".into());
        }
        Ok(())
    }

    pub fn step_length(&self) -> f64 {
        self.step * self.bbox.width()
    }

    pub fn sigma_length(&self) -> f64 {
        self.sigma * self.bbox.width()
    }

    pub fn dataset_name(&self) -> String {
        format!(
            "{}_m{}_k{}_s{}",
            self.kind.name(),
            self.m,
            self.k,
            self.seed
        )
    }
}

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn uniform_in<R: Rng + ?Sized>(rng: &mut R, bbox: &Rect) -> Point {
    Point::new(
        bbox.min_x + rng.random::<f64>() * bbox.width(),
        bbox.min_y + rng.random::<f64>() * bbox.height(),
    )
}

fn clamp_to(p: Point, bbox: &Rect) -> Point {
    Point::new(
        p.x.clamp(bbox.min_x, bbox.max_x),
        p.y.clamp(bbox.min_y, bbox.max_y),
    )
}

fn reflect(mut v: f64, lo: f64, hi: f64) -> f64 {
    for _ in 0..4 {
        if v < lo {
            v = 2.0 * lo - v;
        } else if v > hi {
            v = 2.0 * hi - v;
        } else {
            return v;
        }
    }
    v.clamp(lo, hi)
}

fn gaussian_around<R: Rng + ?Sized>(rng: &mut R, center: Point, sigma: f64, bbox: &Rect) -> Point {
    if sigma == 0.0 {
        return clamp_to(center, bbox);
    }
    let n = Normal::new(0.0, sigma).expect("sigma is finite and positive");
    clamp_to(
        Point::new(center.x + n.sample(rng), center.y + n.sample(rng)),
        bbox,
    )
}

/// `k` steps with uniform heading and length uniform in
/// `[0.5 * step, 1.5 * step]`, reflected at the bbox boundary.
pub fn random_walk<R: Rng + ?Sized>(
    start: Point,
    k: usize,
    step: f64,
    bbox: &Rect,
    rng: &mut R,
) -> Vec<Point> {
    let mut pts = Vec::with_capacity(k + 1);
    let mut cur = start;
    pts.push(cur);
    for _ in 0..k {
        let heading = rng.random::<f64>() * TAU;
        let len = step * (0.5 + rng.random::<f64>());
        cur = Point::new(
            reflect(cur.x + len * heading.cos(), bbox.min_x, bbox.max_x),
            reflect(cur.y + len * heading.sin(), bbox.min_y, bbox.max_y),
        );
        pts.push(cur);
    }
    pts
}

/// Centers of a `ceil(sqrt(m))`-column raster over the bbox, filled row by row.
pub fn raster_starts(m: usize, bbox: &Rect) -> Vec<Point> {
    let cols = (m as f64).sqrt().ceil().max(1.0) as usize;
    let rows = m.div_ceil(cols);
    (0..m)
        .map(|i| {
            let (row, col) = (i / cols, i % cols);
            Point::new(
                bbox.min_x + (col as f64 + 0.5) / cols as f64 * bbox.width(),
                bbox.min_y + (row as f64 + 0.5) / rows as f64 * bbox.height(),
            )
        })
        .collect()
}

/// Hotspot centers, uniform over the inner 80% of the bbox.
pub fn hotspot_centers(spec: &GenSpec) -> Vec<Point> {
    let b = &spec.bbox;
    let inner = Rect {
        min_x: b.min_x + 0.1 * b.width(),
        min_y: b.min_y + 0.1 * b.height(),
        max_x: b.max_x - 0.1 * b.width(),
        max_y: b.max_y - 0.1 * b.height(),
    };
    let mut rng = stream_rng(spec.seed, 0);
    (0..spec.hotspots)
        .map(|_| uniform_in(&mut rng, &inner))
        .collect()
}

fn generate_one(spec: &GenSpec, i: usize, hotspots: &[Point], even: Option<Point>) -> Trajectory {
    let mut rng = stream_rng(spec.seed, i as u64 + 1);
    let bbox = &spec.bbox;
    let step = spec.step_length();
    let sigma = spec.sigma_length();

    let points = match spec.kind {
        GenKind::Random => {
            let start = uniform_in(&mut rng, bbox);
            random_walk(start, spec.k, step, bbox, &mut rng)
        }
        GenKind::Even => {
            let start = even.expect("raster start");
            random_walk(start, spec.k, step, bbox, &mut rng)
        }
        GenKind::Skewed | GenKind::SkewedOverlap => {
            let in_hotspot = rng.random::<f64>() < spec.hotspot_fraction;
            if !in_hotspot {
                let start = uniform_in(&mut rng, bbox);
                random_walk(start, spec.k, step, bbox, &mut rng)
            } else {
                let h = rng.random_range(0..hotspots.len());
                let start = gaussian_around(&mut rng, hotspots[h], sigma, bbox);
                let travels = spec.kind == GenKind::SkewedOverlap
                    && hotspots.len() > 1
                    && rng.random::<f64>() < spec.travel_fraction;
                if travels {
                    let mut target = rng.random_range(0..hotspots.len() - 1);
                    if target >= h {
                        target += 1;
                    }
                    travel_path(start, hotspots[target], spec.k, sigma / 2.0, bbox, &mut rng)
                } else {
                    random_walk(start, spec.k, step, bbox, &mut rng)
                }
            }
        }
    };
    Trajectory::new(TrajId(i as u64), points).expect("generated trajectories are valid")
}

/// `k` segments along the straight line from `start` to `end`, with Gaussian
/// jitter on every point after the first.
fn travel_path<R: Rng + ?Sized>(
    start: Point,
    end: Point,
    k: usize,
    jitter: f64,
    bbox: &Rect,
    rng: &mut R,
) -> Vec<Point> {
    let mut pts = Vec::with_capacity(k + 1);
    pts.push(start);
    for s in 1..=k {
        let t = s as f64 / k as f64;
        let on_line = Point::new(
            start.x + t * (end.x - start.x),
            start.y + t * (end.y - start.y),
        );
        pts.push(gaussian_around(rng, on_line, jitter, bbox));
    }
    pts
}

pub fn generate(spec: &GenSpec) -> Result<Dataset, GenError> {
    spec.validate()?;
    let hotspots = hotspot_centers(spec);
    let raster = (spec.kind == GenKind::Even).then(|| raster_starts(spec.m, &spec.bbox));
    let trajectories: Vec<Trajectory> = (0..spec.m)
        .into_par_iter()
        .map(|i| generate_one(spec, i, &hotspots, raster.as_ref().map(|r| r[i])))
        .collect();
    let ds = Dataset::new(
        spec.dataset_name(),
        format!("generated:{}", spec.kind.name()),
        trajectories,
    )
    .expect("generated ids are unique");
    Ok(ds)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn walk_stays_in_bbox() {
        let bbox = Rect::new(0., 0., 1., 1.).unwrap();
        let mut rng = stream_rng(3, 9);
        for _ in 0..200 {
            let pts = random_walk(Point::new(0.01, 0.99), 10, 0.2, &bbox, &mut rng);
            assert_eq!(pts.len(), 11);
            assert!(pts.iter().all(|p| bbox.contains_point(p)));
        }
    }

    #[test]
    fn walk_is_deterministic_and_zero_step_is_constant() {
        let bbox = Rect::new(0., 0., 1., 1.).unwrap();
        let s = Point::new(0.5, 0.5);
        let a = random_walk(s, 10, 0.01, &bbox, &mut stream_rng(1, 1));
        let b = random_walk(s, 10, 0.01, &bbox, &mut stream_rng(1, 1));
        assert_eq!(a, b);
        let z = random_walk(s, 10, 0.0, &bbox, &mut stream_rng(1, 1));
        assert!(z.iter().all(|p| *p == s));
    }

    #[test]
    fn even_raster_centers() {
        let bbox = Rect::new(0., 0., 1., 1.).unwrap();
        let starts = raster_starts(4, &bbox);
        let expect = [(0.25, 0.25), (0.75, 0.25), (0.25, 0.75), (0.75, 0.75)];
        for (p, (x, y)) in starts.iter().zip(expect) {
            assert_eq!((p.x, p.y), (x, y));
        }
        // 5 -> 3 columns x 2 rows, last row partially filled
        let starts = raster_starts(5, &bbox);
        assert_eq!((starts[3].x, starts[3].y), (0.5 / 3.0, 0.75));

        let mut spec = GenSpec::new(GenKind::Even, 4, 3, 1);
        spec.step = 0.0;
        let ds = generate(&spec).unwrap();
        for (t, (x, y)) in ds.trajectories().iter().zip(expect) {
            assert_eq!(t.points()[0], Point::new(x, y));
        }
    }

    #[test]
    fn every_kind_respects_shape_and_bbox() {
        for kind in GenKind::ALL {
            let mut spec = GenSpec::new(kind, 300, 7, 5);
            spec.bbox = Rect::new(-10., 5., 30., 25.).unwrap();
            let ds = generate(&spec).unwrap();
            assert_eq!(ds.len(), 300);
            assert_eq!(ds.point_count(), 300 * 8);
            for t in ds.trajectories() {
                assert_eq!(t.segment_count(), 7);
                assert!(
                    t.points().iter().all(|p| spec.bbox.contains_point(p)),
                    "{kind:?}"
                );
            }
        }
    }

    #[test]
    fn generation_is_deterministic() {
        for kind in GenKind::ALL {
            let spec = GenSpec::new(kind, 200, 10, 77);
            assert_eq!(generate(&spec).unwrap(), generate(&spec).unwrap());
        }
        let a = generate(&GenSpec::new(GenKind::Random, 50, 10, 1)).unwrap();
        let b = generate(&GenSpec::new(GenKind::Random, 50, 10, 2)).unwrap();
        assert_ne!(a.trajectories(), b.trajectories());
    }

    #[test]
    fn invalid_specs_rejected() {
        let mut s = GenSpec::new(GenKind::Random, 0, 10, 0);
        assert!(generate(&s).is_err());
        s.m = 10;
        s.k = 0;
        assert!(generate(&s).is_err());
        s.k = 10;
        s.hotspot_fraction = 1.5;
        assert!(generate(&s).is_err());
        s.hotspot_fraction = 0.5;
        s.kind = GenKind::Skewed;
        s.hotspots = 0;
        assert!(generate(&s).is_err());
        s.hotspots = 3;
        s.bbox = Rect::new(0., 0., 0., 1.).unwrap();
        assert!(generate(&s).is_err());
    }

    #[test]
    fn kind_parsing() {
        assert_eq!(
            "skewed-overlap".parse::<GenKind>().unwrap(),
            GenKind::SkewedOverlap
        );
        assert_eq!("Even".parse::<GenKind>().unwrap(), GenKind::Even);
        assert!("clustered".parse::<GenKind>().is_err());
    }
}
