use std::collections::BTreeMap;

use proptest::prelude::*;
use trajbench::dataset::{read_trajectory_csv, write_trajectory_csv, Dataset};
use trajbench::engine::{q_contains, q_intersection, q_knn, q_proximity, ContainsMode};
use trajbench::geom::{
    mbr_of, rect_relation, rects_overlap, segmentize, trajectory_distance, trajectory_intersects,
    Point, Rect, RectRelation, TrajId, Trajectory,
};
use trajbench::index::{Backend, BackendConfig, IndexKind, QueryStats, StorageFormat};

fn all_configs() -> Vec<BackendConfig> {
    let mut out = Vec::new();
    for format in StorageFormat::ALL {
        for index in IndexKind::ALL {
            let mut cfg = BackendConfig::new(format, index);
            // Small fan-outs so the trees split and collapse on tiny inputs.
            cfg.rtree_max = 4;
            cfg.rtree_min = 2;
            cfg.quad_capacity = 2;
            cfg.quad_max_depth = 6;
            cfg.brin_range_size = 3;
            out.push(cfg);
        }
    }
    out
}

fn grid_points(max_len: usize) -> impl Strategy<Value = Vec<Point>> {
    prop::collection::vec((0i32..16, 0i32..16), 2..=max_len).prop_map(|v| {
        v.into_iter()
            .map(|(x, y)| Point::new(x as f64, y as f64))
            .collect()
    })
}

fn traj(id: u64, pts: Vec<Point>) -> Trajectory {
    Trajectory::new(TrajId(id), pts).unwrap()
}

fn dataset_from(shapes: Vec<Vec<Point>>) -> Dataset {
    let trajs = shapes
        .into_iter()
        .enumerate()
        .map(|(i, p)| traj(i as u64, p))
        .collect();
    Dataset::new("prop", "proptest", trajs).unwrap()
}

fn grid_rect() -> impl Strategy<Value = Rect> {
    (0i32..18, 0i32..18, 0i32..10, 0i32..10).prop_map(|(x, y, w, h)| {
        let (x, y) = (x as f64 - 1.0, y as f64 - 1.0);
        Rect::new(x, y, x + w as f64, y + h as f64).unwrap()
    })
}

// Exact integer orientation tests, independent of the library predicates.
fn orient(a: (i64, i64), b: (i64, i64), c: (i64, i64)) -> i64 {
    ((b.0 - a.0) * (c.1 - a.1) - (b.1 - a.1) * (c.0 - a.0)).signum()
}

fn on_box(a: (i64, i64), b: (i64, i64), p: (i64, i64)) -> bool {
    a.0.min(b.0) <= p.0 && p.0 <= a.0.max(b.0) && a.1.min(b.1) <= p.1 && p.1 <= a.1.max(b.1)
}

fn int_segments_cross(p1: (i64, i64), q1: (i64, i64), p2: (i64, i64), q2: (i64, i64)) -> bool {
    let (o1, o2) = (orient(p1, q1, p2), orient(p1, q1, q2));
    let (o3, o4) = (orient(p2, q2, p1), orient(p2, q2, q1));
    if o1 != o2 && o3 != o4 {
        return true;
    }
    (o1 == 0 && on_box(p1, q1, p2))
        || (o2 == 0 && on_box(p1, q1, q2))
        || (o3 == 0 && on_box(p2, q2, p1))
        || (o4 == 0 && on_box(p2, q2, q1))
}

fn int_traj_cross(a: &Trajectory, b: &Trajectory) -> bool {
    let ip = |p: &Point| (p.x as i64, p.y as i64);
    a.points().windows(2).any(|s| {
        b.points()
            .windows(2)
            .any(|t| int_segments_cross(ip(&s[0]), ip(&s[1]), ip(&t[0]), ip(&t[1])))
    })
}

fn row_overlap_oracle(
    live: &BTreeMap<u64, Trajectory>,
    format: StorageFormat,
    rect: &Rect,
) -> Vec<TrajId> {
    live.values()
        .filter(|t| match format {
            StorageFormat::Whole => t.mbr().overlaps(rect),
            StorageFormat::Segmented => t.segments().any(|s| s.mbr().overlaps(rect)),
        })
        .map(|t| t.id)
        .collect()
}

fn check_structures(b: &Backend) {
    if let Some(t) = b.rtree() {
        t.check_invariants().unwrap();
    }
    if let Some(q) = b.quadtree() {
        q.check_invariants().unwrap();
    }
    if let Some(br) = b.block_range() {
        let r = br.range_size();
        for row in b.rows() {
            let s = br.summary(row.row_id / r).expect("live row has a summary");
            assert!(
                s.contains_rect(&row.mbr),
                "row {} escapes its range summary",
                row.row_id
            );
        }
    }
}

#[derive(Debug, Clone)]
enum Op {
    Insert(Vec<Point>),
    Update(usize, Vec<Point>),
    Delete(usize),
}

fn op() -> impl Strategy<Value = Op> {
    prop_oneof![
        grid_points(5).prop_map(Op::Insert),
        (any::<usize>(), grid_points(5)).prop_map(|(i, p)| Op::Update(i, p)),
        any::<usize>().prop_map(Op::Delete),
    ]
}

proptest! {
    #[test]
    fn segment_intersection_matches_integer_oracle(a in grid_points(5), b in grid_points(5)) {
        let (ta, tb) = (traj(0, a), traj(1, b));
        prop_assert_eq!(trajectory_intersects(&ta, &tb), int_traj_cross(&ta, &tb));
    }

    #[test]
    fn intersection_implies_mbr_overlap(a in grid_points(6), b in grid_points(6)) {
        let (ta, tb) = (traj(0, a), traj(1, b));
        if trajectory_intersects(&ta, &tb) {
            prop_assert!(rects_overlap(&mbr_of(&ta), &mbr_of(&tb)));
        }
    }

    #[test]
    fn distance_is_symmetric_and_zero_iff_intersecting(a in grid_points(6), b in grid_points(6)) {
        let (ta, tb) = (traj(0, a), traj(1, b));
        let d = trajectory_distance(&ta, &tb);
        prop_assert_eq!(d, trajectory_distance(&tb, &ta));
        prop_assert!(d >= 0.0);
        prop_assert_eq!(d == 0.0, trajectory_intersects(&ta, &tb));
    }

    #[test]
    fn rect_overlap_is_symmetric_and_reflexive(a in grid_rect(), b in grid_rect()) {
        prop_assert_eq!(rects_overlap(&a, &b), rects_overlap(&b, &a));
        prop_assert!(rects_overlap(&a, &a));
    }

    #[test]
    fn mbr_equals_union_of_segment_mbrs(a in grid_points(8)) {
        let t = traj(3, a);
        let segs = segmentize(&t);
        prop_assert_eq!(segs.len(), t.segment_count());
        let u = segs.iter().map(|(s, _)| s.mbr()).reduce(|x, y| x.union(&y)).unwrap();
        prop_assert_eq!(u, mbr_of(&t));
    }

    #[test]
    fn rect_relation_agrees_with_point_and_segment_tests(a in grid_points(5), r in grid_rect()) {
        let t = traj(0, a);
        let inside = t.points().iter().all(|p| r.contains_point(p));
        let touches = t.segments().any(|s| s.intersects_rect(&r));
        let want = if inside {
            RectRelation::Inside
        } else if touches {
            RectRelation::Partial
        } else {
            RectRelation::Outside
        };
        prop_assert_eq!(rect_relation(&t, &r), want);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn candidates_match_scan_after_any_mutations(
        shapes in prop::collection::vec(grid_points(5), 0..20),
        ops in prop::collection::vec(op(), 0..30),
        probes in prop::collection::vec(grid_rect(), 1..6),
    ) {
        let ds = dataset_from(shapes);
        let mut live: BTreeMap<u64, Trajectory> =
            ds.trajectories().iter().map(|t| (t.id.0, t.clone())).collect();
        let mut backends: Vec<Backend> =
            all_configs().into_iter().map(|c| Backend::bulk_load(&ds, c).unwrap()).collect();
        let mut next_id = ds.len() as u64;
        for o in &ops {
            let mut stats = QueryStats::default();
            match o {
                Op::Insert(p) => {
                    let t = traj(next_id, p.clone());
                    next_id += 1;
                    for b in &mut backends {
                        b.insert(t.clone(), &mut stats).unwrap();
                    }
                    live.insert(t.id.0, t);
                }
                Op::Update(i, p) if !live.is_empty() => {
                    let id = *live.keys().nth(i % live.len()).unwrap();
                    let t = traj(id, p.clone());
                    for b in &mut backends {
                        b.update(TrajId(id), t.clone(), &mut stats).unwrap();
                    }
                    live.insert(id, t);
                }
                Op::Delete(i) if !live.is_empty() => {
                    let id = *live.keys().nth(i % live.len()).unwrap();
                    for b in &mut backends {
                        b.delete(TrajId(id), &mut stats).unwrap();
                    }
                    live.remove(&id);
                }
                _ => {}
            }
        }
        for b in &backends {
            check_structures(b);
            prop_assert_eq!(b.trajectory_count(), live.len());
        }
        for rect in &probes {
            for pair in backends.chunks(IndexKind::ALL.len()) {
                let format = pair[0].config().format;
                let want = row_overlap_oracle(&live, format, rect);
                let scan = pair.iter().find(|b| b.config().index == IndexKind::SeqScan).unwrap();
                let (_, scan_stats) = scan.candidates_by_rect(rect);
                for b in pair {
                    let (got, stats) = b.candidates_by_rect(rect);
                    prop_assert_eq!(&got, &want, "{:?}", b.config());
                    prop_assert!(stats.candidates_returned <= b.row_count() as u64);
                    if b.config().index == IndexKind::RTree {
                        prop_assert!(stats.candidates_returned <= scan_stats.candidates_returned);
                    }
                }
            }
        }
    }

    #[test]
    fn summarize_makes_block_summaries_tight(
        shapes in prop::collection::vec(grid_points(4), 1..20),
        deletes in prop::collection::vec(any::<usize>(), 0..10),
    ) {
        let ds = dataset_from(shapes);
        for format in StorageFormat::ALL {
            let mut cfg = BackendConfig::new(format, IndexKind::BlockRange);
            cfg.brin_range_size = 3;
            let mut b = Backend::bulk_load(&ds, cfg).unwrap();
            let mut stats = QueryStats::default();
            for d in &deletes {
                let ids = b.ids();
                if ids.is_empty() {
                    break;
                }
                b.delete(ids[d % ids.len()], &mut stats).unwrap();
            }
            b.summarize(&mut stats);
            let br = b.block_range().unwrap();
            let mut tight: BTreeMap<usize, Rect> = BTreeMap::new();
            for row in b.rows() {
                let e = tight.entry(row.row_id / 3).or_insert(row.mbr);
                *e = e.union(&row.mbr);
            }
            for i in 0..br.range_count() {
                prop_assert_eq!(br.summary(i), tight.get(&i).copied());
            }
        }
    }

    #[test]
    fn queries_match_brute_force_on_every_backend(
        shapes in prop::collection::vec(grid_points(5), 3..18),
        target in grid_points(4),
        rect in grid_rect(),
        dist in 0u32..6,
        k in 1usize..4,
    ) {
        let ds = dataset_from(shapes);
        let target = traj(1_000, target);
        let dist = dist as f64 * 0.75;
        let all = ds.trajectories();
        let inter: Vec<TrajId> =
            all.iter().filter(|t| trajectory_intersects(&target, t)).map(|t| t.id).collect();
        let partial: Vec<TrajId> =
            all.iter().filter(|t| rect_relation(t, &rect) != RectRelation::Outside).map(|t| t.id).collect();
        let complete: Vec<TrajId> =
            all.iter().filter(|t| rect_relation(t, &rect) == RectRelation::Inside).map(|t| t.id).collect();
        let prox: Vec<TrajId> =
            all.iter().filter(|t| trajectory_distance(&target, t) <= dist).map(|t| t.id).collect();
        let mut ranked: Vec<(f64, TrajId)> =
            all.iter().map(|t| (trajectory_distance(&target, t), t.id)).collect();
        ranked.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        ranked.truncate(k);

        for cfg in all_configs() {
            let b = Backend::bulk_load(&ds, cfg).unwrap();
            prop_assert_eq!(&q_intersection(&b, &target).ids, &inter);
            prop_assert_eq!(&q_contains(&b, &rect, ContainsMode::Partial).ids, &partial);
            prop_assert_eq!(&q_contains(&b, &rect, ContainsMode::Complete).ids, &complete);
            prop_assert_eq!(&q_proximity(&b, &target, dist).unwrap().ids, &prox);
            let knn = q_knn(&b, &target, k).unwrap();
            prop_assert_eq!(knn.ids, ranked.iter().map(|r| r.1).collect::<Vec<_>>());
            prop_assert_eq!(knn.distances, ranked.iter().map(|r| r.0).collect::<Vec<_>>());
        }
    }

    #[test]
    fn query_monotonicity(
        shapes in prop::collection::vec(grid_points(5), 6..18),
        target_idx in any::<usize>(),
        rect in grid_rect(),
        grow in 0u32..4,
        d1 in 0u32..5,
        d2 in 0u32..5,
    ) {
        let ds = dataset_from(shapes);
        let target = ds.trajectories()[target_idx % ds.len()].clone();
        let bigger = rect.inflate(grow as f64);
        let (lo, hi) = (d1.min(d2) as f64, d1.max(d2) as f64);
        for cfg in all_configs() {
            let b = Backend::bulk_load(&ds, cfg).unwrap();
            prop_assert_eq!(
                q_proximity(&b, &target, 0.0).unwrap().ids,
                q_intersection(&b, &target).ids
            );
            let small = q_contains(&b, &rect, ContainsMode::Partial).ids;
            let large = q_contains(&b, &bigger, ContainsMode::Partial).ids;
            prop_assert!(small.iter().all(|id| large.contains(id)));
            let near = q_proximity(&b, &target, lo).unwrap().ids;
            let far = q_proximity(&b, &target, hi).unwrap().ids;
            prop_assert!(near.iter().all(|id| far.contains(id)));
            let others = ds.len() - 1;
            let mut prev: Vec<TrajId> = Vec::new();
            for k in 1..=others.min(5) {
                let ids = q_knn(&b, &target, k).unwrap().ids;
                prop_assert!(!ids.contains(&target.id));
                prop_assert_eq!(&ids[..prev.len()], &prev[..]);
                prev = ids;
            }
        }
    }

    #[test]
    fn csv_round_trip(shapes in prop::collection::vec(
        prop::collection::vec((-1e6f64..1e6, -1e6f64..1e6), 2..6), 1..12)) {
        let trajs = shapes
            .into_iter()
            .enumerate()
            .map(|(i, p)| traj(i as u64 * 7 + 3, p.into_iter().map(|(x, y)| Point::new(x, y)).collect()))
            .collect();
        let ds = Dataset::new("rt", "proptest", trajs).unwrap();
        let mut buf = Vec::new();
        write_trajectory_csv(&ds, &mut buf).unwrap();
        let back = read_trajectory_csv(buf.as_slice()).unwrap();
        prop_assert_eq!(back.trajectories(), ds.trajectories());
    }
}
