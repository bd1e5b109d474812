use airtree::{Point, RTree, RTreeConfig, Rect};
use proptest::prelude::*;

mod common;
use common::{brute_force, sorted};

fn point() -> impl Strategy<Value = Point> {
    // A coarse lattice makes duplicates and shared coordinates common.
    prop_oneof![
        (0i32..40, 0i32..40).prop_map(|(x, y)| Point::new(x as f64, y as f64).unwrap()),
        (-1e3f64..1e3, -1e3f64..1e3).prop_map(|(x, y)| Point::new(x, y).unwrap()),
    ]
}

fn config() -> impl Strategy<Value = RTreeConfig> {
    (4usize..=12)
        .prop_flat_map(|max| (Just(max), 2usize..=max.div_ceil(2)))
        .prop_map(|(max, min)| RTreeConfig::new(max, min).unwrap())
}

fn query() -> impl Strategy<Value = Rect> {
    (-50f64..1000.0, -50f64..1000.0, 0f64..400.0, 0f64..400.0).prop_map(|(x, y, w, h)| {
        Rect::new(x - 500.0, y - 500.0, x - 500.0 + w, y - 500.0 + h).unwrap()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn structure_holds_after_inserts(cfg in config(), pts in prop::collection::vec(point(), 1..400)) {
        let tree = RTree::build(cfg, &pts).unwrap();
        prop_assert_eq!(tree.check_invariants(), Ok(()));
        prop_assert_eq!(tree.len(), pts.len());
        let mut stored = tree.points();
        stored.sort_by_key(Point::key);
        prop_assert_eq!(stored, sorted(pts));
    }

    #[test]
    fn search_matches_linear_scan(
        cfg in config(),
        pts in prop::collection::vec(point(), 1..300),
        qs in prop::collection::vec(query(), 1..10),
    ) {
        let tree = RTree::build(cfg, &pts).unwrap();
        for q in &qs {
            let trace = tree.range_query(q).unwrap();
            prop_assert_eq!(sorted(trace.results.clone()), brute_force(&pts, q));
            prop_assert_eq!(tree.count_in(q), trace.results.len());

            // Every visited leaf's box meets the query; true leaves are the
            // visited ones holding at least one answer.
            let leaves = tree.leaf_count().unwrap() as u32;
            let mut expected_visited = Vec::new();
            let mut expected_true = Vec::new();
            for id in 0..leaves {
                if tree.leaf_mbr(id).unwrap().intersects(q) {
                    expected_visited.push(id);
                    if tree.leaf_entries(id).unwrap().iter().any(|p| q.contains_point(p)) {
                        expected_true.push(id);
                    }
                }
            }
            prop_assert_eq!(&trace.visited_leaves, &expected_visited);
            prop_assert_eq!(&trace.true_leaves, &expected_true);
            prop_assert_eq!(trace.leaf_accesses, trace.vn());
            prop_assert!(trace.tn() <= trace.vn());
            if let Some(a) = trace.alpha() {
                prop_assert!((0.0..=1.0).contains(&a));
            }
        }
    }

    #[test]
    fn leaf_ids_are_dense_and_scan_agrees(cfg in config(), pts in prop::collection::vec(point(), 1..300), q in query()) {
        let tree = RTree::build(cfg, &pts).unwrap();
        let n = tree.leaf_count().unwrap();
        let mut ids: Vec<u32> = tree.nodes().iter().filter_map(|node| node.leaf_id).collect();
        ids.sort_unstable();
        prop_assert_eq!(ids, (0..n as u32).collect::<Vec<_>>());
        let total: usize = (0..n as u32).map(|id| tree.leaf_entries(id).unwrap().len()).sum();
        prop_assert_eq!(total, pts.len());

        let trace = tree.range_query(&q).unwrap();
        let mut via_scan = Vec::new();
        for &id in &trace.true_leaves {
            let (found, cost) = tree.scan_leaf(id, &q).unwrap();
            prop_assert_eq!(cost, 1);
            via_scan.extend(found);
        }
        prop_assert_eq!(sorted(via_scan), brute_force(&pts, &q));
    }

    #[test]
    fn building_is_deterministic(cfg in config(), pts in prop::collection::vec(point(), 1..200)) {
        let a = RTree::build(cfg, &pts).unwrap();
        let b = RTree::build(cfg, &pts).unwrap();
        prop_assert_eq!(a.tree_size_bytes(), b.tree_size_bytes());
        prop_assert_eq!(a, b);
    }
}

#[test]
fn points_on_query_boundary_are_included() {
    let pts: Vec<Point> = (0..50)
        .map(|i| Point::new(i as f64, (i % 7) as f64).unwrap())
        .collect();
    let tree = RTree::build(RTreeConfig::new(4, 2).unwrap(), &pts).unwrap();
    let q = Rect::new(10.0, 0.0, 20.0, 6.0).unwrap();
    let trace = tree.range_query(&q).unwrap();
    assert_eq!(trace.results.len(), 11);
    let degenerate = Rect::new(10.0, 3.0, 10.0, 3.0).unwrap();
    assert_eq!(
        tree.range_query(&degenerate).unwrap().results,
        vec![Point::new(10.0, 3.0).unwrap()]
    );
}

#[test]
fn larger_nodes_give_fewer_leaves() {
    use airtree::workload::{synth_points, PointDistribution};
    let ds = synth_points(20_000, PointDistribution::Uniform, 9).unwrap();
    let leaves = |m| {
        RTree::build(RTreeConfig::with_max(m).unwrap(), &ds.points)
            .unwrap()
            .leaf_count()
            .unwrap()
    };
    let (small, large) = (leaves(200), leaves(800));
    assert!(large < small, "M=800 has {large} leaves, M=200 has {small}");
}
