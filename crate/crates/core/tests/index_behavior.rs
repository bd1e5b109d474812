use std::sync::Arc;

use airtree::bench::{self, BenchConfig, Variant};
use airtree::hybrid::{aitree_query, rtree_query, CostModel, HybridIndex, Route};
use airtree::learn::mltree::MlNode;
use airtree::learn::{MlTreeParams, MultiLabelTree};
use airtree::workload::binary_label;
use airtree::{AiTree, Error, QueryPath, Rect};

mod common;
use common::{brute_force, fixture, sorted};

#[test]
fn every_path_is_exact_on_the_training_workload() {
    let fx = fixture(21);
    let cost = CostModel::default();
    for (b, ai) in fx.workload.buckets.iter().zip(&fx.models.aitrees) {
        let ai = ai.as_ref().unwrap();
        assert_eq!(ai.training_fit(), 1.0, "alpha {}", b.target);
        assert!(ai.grid_dim() <= 20);
        assert!(ai.grid().model_count() <= ai.grid_dim() * ai.grid_dim());
        let hybrid =
            HybridIndex::new(ai, &fx.tree, &fx.models.router.forest, fx.cfg.tau, cost).unwrap();
        for q in &b.queries {
            let want = brute_force(&fx.points, &q.rect);
            let out = ai.query(&q.rect).unwrap();
            assert_eq!(out.path, QueryPath::Predicted);
            assert_eq!(out.predicted_leaf_ids, q.true_leaf_ids);
            assert_eq!(out.leaf_accesses, q.tn);
            assert_eq!(sorted(out.results), want);
            assert_eq!(sorted(hybrid.query(&q.rect).unwrap().0), want);
            assert_eq!(sorted(fx.tree.range_query(&q.rect).unwrap().results), want);
        }
    }
}

#[test]
fn query_outside_every_cell_falls_back_on_empty_prediction() {
    let fx = fixture(22);
    let ai = fx.models.aitrees[0].as_ref().unwrap();
    let b = fx.tree.bounds().unwrap();
    let far = Rect::new(b.xmax + 10.0, b.ymax + 10.0, b.xmax + 20.0, b.ymax + 20.0).unwrap();
    let out = ai.query(&far).unwrap();
    assert_eq!(out.path, QueryPath::FallbackEmpty);
    assert!(out.predicted_leaf_ids.is_empty());
    assert!(out.results.is_empty());
    assert_eq!(
        out.leaf_accesses,
        fx.tree.range_query(&far).unwrap().leaf_accesses
    );
}

/// An AI-tree whose every cell predicts `leaves`, regardless of the query.
fn constant_aitree(fx: &common::Fixture, leaves: Vec<u32>) -> AiTree {
    let mut bundle = fx.models.aitrees[0].as_ref().unwrap().to_bundle().unwrap();
    let label_count = bundle.grid.leaf_count;
    for cell in bundle.grid.cells.iter_mut() {
        *cell = Some(MultiLabelTree {
            label_count,
            params: MlTreeParams::default(),
            n_examples: 1,
            nodes: vec![MlNode::Leaf(leaves.clone())],
        });
    }
    AiTree::from_bundle(bundle, fx.tree.clone(), None).unwrap()
}

#[test]
fn predicted_leaf_without_results_triggers_full_search() {
    let fx = fixture(23);
    let q = &fx.workload.buckets[0].queries[0];
    let trace = fx.tree.range_query(&q.rect).unwrap();
    let leaf_count = fx.tree.leaf_count().unwrap() as u32;
    let stray = (0..leaf_count)
        .find(|id| !trace.visited_leaves.contains(id))
        .unwrap();
    let ai = constant_aitree(&fx, vec![stray]);
    let out = ai.query(&q.rect).unwrap();
    assert_eq!(out.path, QueryPath::FallbackMispredict);
    assert_eq!(out.leaf_accesses, 1 + trace.vn());
    assert_eq!(sorted(out.results), brute_force(&fx.points, &q.rect));
}

#[test]
fn bench_rejects_an_index_returning_partial_results() {
    let fx = fixture(24);
    let (bucket, q) = fx
        .workload
        .buckets
        .iter()
        .enumerate()
        .find_map(|(i, b)| b.queries.iter().find(|q| q.tn >= 2).map(|q| (i, q)))
        .unwrap();
    // Predicting only the first true leaf finds results, so no fallback fires.
    let ai = constant_aitree(&fx, vec![q.true_leaf_ids[0]]);
    let mut models = bench::train_models(&fx.cfg, &fx.tree, &fx.workload).unwrap();
    models.aitrees[bucket] = Some(ai);
    let err = bench::run_bench(&fx.cfg, &fx.tree, &fx.workload, &models, None).unwrap_err();
    assert!(matches!(err, Error::Mismatch(_)), "{err}");
}

#[test]
fn misrouting_costs_the_leaf_gap_times_io() {
    let fx = fixture(25);
    let cost = CostModel::default();
    let mut misrouted = 0;
    for (b, ai) in fx.workload.buckets.iter().zip(&fx.models.aitrees) {
        let ai = ai.as_ref().unwrap();
        let hybrid =
            HybridIndex::new(ai, &fx.tree, &fx.models.router.forest, fx.cfg.tau, cost).unwrap();
        for q in &b.queries {
            let d = hybrid.mispredicted_route_cost(&q.rect, q.alpha).unwrap();
            let route = hybrid.route(&q.rect);
            assert_eq!(d.taken.route, route);
            assert_eq!(
                d.correct_route,
                Route::from_label(binary_label(q.alpha, fx.cfg.tau))
            );
            assert_eq!(d.misrouted, d.correct_route != route);
            let gap = (q.vn - q.tn) as i64;
            let expected = if route == Route::Rtree { gap } else { -gap };
            assert_eq!(d.delta_leaf_accesses, expected);
            assert_eq!(d.delta_io_ms, expected as f64 * 13.0);
            misrouted += usize::from(d.misrouted);
        }
    }
    let total = fx.workload.len();
    let acc = 1.0 - misrouted as f64 / total as f64;
    assert!(acc > 0.7, "routing accuracy on the workload {acc}");
}

#[test]
fn router_decisions_are_deterministic() {
    let fx = fixture(26);
    let again = bench::train_router(&fx.cfg, &fx.workload).unwrap();
    assert_eq!(again, fx.models.router);
    let ai = fx.models.aitrees[0].as_ref().unwrap();
    let h = HybridIndex::new(
        ai,
        &fx.tree,
        &fx.models.router.forest,
        fx.cfg.tau,
        CostModel::default(),
    )
    .unwrap();
    for q in fx.workload.all_queries() {
        assert_eq!(h.route(&q.rect), h.route(&q.rect));
        assert_eq!(
            h.route(&q.rect),
            Route::from_label(again.forest.predict(&q.rect.features()))
        );
    }
}

#[test]
fn hybrid_requires_the_shared_tree_and_valid_tau() {
    let fx = fixture(27);
    let ai = fx.models.aitrees[0].as_ref().unwrap();
    let copy = Arc::new((*fx.tree).clone());
    let forest = &fx.models.router.forest;
    assert!(matches!(
        HybridIndex::new(ai, &copy, forest, 0.75, CostModel::default()),
        Err(Error::Config(_))
    ));
    for tau in [0.0, 1.0, f64::NAN] {
        assert!(HybridIndex::new(ai, &fx.tree, forest, tau, CostModel::default()).is_err());
    }
}

#[test]
fn cost_components_add_up_and_io_scales_linearly() {
    let fx = fixture(28);
    let base = bench::run_bench(
        &fx.cfg,
        &fx.tree,
        &fx.workload,
        &fx.models,
        Some(&fx.points),
    )
    .unwrap();
    let doubled_cfg = BenchConfig {
        io_ms_per_leaf: 26.0,
        ..fx.cfg.clone()
    };
    let doubled = bench::run_bench(&doubled_cfg, &fx.tree, &fx.workload, &fx.models, None).unwrap();
    assert_eq!(base.records.len(), fx.workload.len() * 3);
    for (a, b) in base.records.iter().zip(&doubled.records) {
        assert_eq!(a.total_ms, a.predict_ms + a.cpu_ms + a.io_ms);
        assert_eq!(a.io_ms, a.leaf_accesses as f64 * 13.0);
        assert_eq!(a.leaf_accesses, b.leaf_accesses);
        assert_eq!(b.io_ms, 2.0 * a.io_ms);
        if a.variant == Variant::Rtree {
            assert_eq!(a.route, "rtree");
            assert_eq!(a.predict_ms, 0.0);
            assert_eq!(a.leaf_accesses, a.vn);
        }
    }
    // The standalone helpers agree with the logged accounting.
    let q = &fx.workload.buckets[0].queries[0];
    let cost = CostModel::new(13.0).unwrap();
    let (_, r) = rtree_query(&fx.tree, &q.rect, &cost).unwrap();
    let (_, a) = aitree_query(fx.models.aitrees[0].as_ref().unwrap(), &q.rect, &cost).unwrap();
    assert_eq!(r.leaf_accesses, q.vn);
    assert_eq!(a.leaf_accesses, q.tn);
    assert_eq!(a.path, Some(QueryPath::Predicted));
}

#[test]
fn learned_path_reads_fewer_leaves_at_low_overlap() {
    let fx = fixture(29);
    let out = bench::run_bench(&fx.cfg, &fx.tree, &fx.workload, &fx.models, None).unwrap();
    let mean = |alpha: f64, v: Variant| {
        out.aggregates
            .iter()
            .find(|r| r.alpha_target == alpha && r.variant == v)
            .unwrap()
            .mean_leaf_accesses
    };
    assert!(mean(0.1, Variant::Aitree) < 0.2 * mean(0.1, Variant::Rtree));
    assert_eq!(mean(1.0, Variant::Aitree), mean(1.0, Variant::Rtree));
}
