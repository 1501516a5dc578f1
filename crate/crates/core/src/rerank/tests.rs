use std::collections::BTreeMap;

use proptest::prelude::*;

use super::gbdt::{Node, Tree};
use super::*;
use crate::fixtures::{near_station, six_station_city};
use crate::model::{Feedback, FeedbackKind, PresentedRoute, TransportMode};

fn route(eta: f64, transfers: u32, signature: u64) -> RouteSummary {
    RouteSummary {
        eta_s: eta,
        wait_s: 120.0,
        fare: 2.0,
        ticket_available: true,
        in_service: true,
        distance_m: eta * 5.0,
        congestion: 0.1,
        start_walk_m: 80.0,
        end_walk_m: 60.0,
        transfer_walk_m: 0.0,
        on_transport_m: eta * 5.0 - 140.0,
        n_transfers: transfers,
        modes: vec![TransportMode::Bus],
        signature,
    }
}

fn profiles() -> BTreeMap<String, CityProfile> {
    let ds = six_station_city();
    [(ds.city.clone(), CityProfile::from_dataset(&ds))].into_iter().collect()
}

fn ctx(ts: i64) -> TravelContext {
    TravelContext {
        city: "demo".into(),
        timestamp: ts,
        origin: near_station("p1"),
        destination: near_station("p6"),
        weather: None,
    }
}

#[test]
fn pairs_from_feedback_order() {
    // Routes A, B, C.
    assert_eq!(make_pairs(&[None, Some(10), None]), vec![(1, 0), (1, 2)]);
    assert_eq!(make_pairs(&[Some(20), Some(10), None]), vec![(1, 0), (1, 2), (0, 2)]);
    assert!(make_pairs(&[None, None, None]).is_empty());
    // Simultaneous feedback orders neither route over the other.
    assert_eq!(make_pairs(&[Some(5), Some(5), None]), vec![(0, 2), (1, 2)]);
}

proptest! {
    #[test]
    fn emitted_pairs_respect_feedback_time(times in proptest::collection::vec(proptest::option::of(0i64..5), 1..8)) {
        let pairs = make_pairs(&times);
        for &(a, b) in &pairs {
            prop_assert!(a != b);
            let ta = times[a].expect("preferred route has feedback");
            prop_assert!(times[b].is_none_or(|tb| ta < tb));
        }
        // Complete: every such ordered pair is emitted exactly once.
        let mut expected = 0;
        for (i, ti) in times.iter().enumerate() {
            for (j, tj) in times.iter().enumerate() {
                if let Some(ti) = ti {
                    expected += (i != j && tj.is_none_or(|tj| *ti < tj)) as usize;
                }
            }
        }
        prop_assert_eq!(pairs.len(), expected);
    }
}

fn entry(id: usize, ts: i64, routes: Vec<RouteSummary>, feedback: &[(usize, i64)]) -> QueryLogEntry {
    QueryLogEntry {
        query_id: format!("q{id}"),
        city: "demo".into(),
        origin: near_station("p1"),
        destination: near_station("p6"),
        timestamp: ts,
        weather: None,
        presented_routes: routes
            .into_iter()
            .enumerate()
            .map(|(i, summary)| PresentedRoute { route_id: format!("q{id}-r{i}"), summary })
            .collect(),
        feedback: feedback
            .iter()
            .map(|&(r, t)| Feedback { route_id: format!("q{id}-r{r}"), kind: FeedbackKind::Favorite, timestamp: t })
            .collect(),
    }
}

/// Users always pick the fastest route.
fn fastest_log(n: usize) -> Vec<QueryLogEntry> {
    (0..n)
        .map(|i| {
            let etas = [1200.0 + (i * 37 % 500) as f64, 1500.0 + (i * 53 % 700) as f64, 2600.0 - (i * 11 % 300) as f64];
            let routes: Vec<RouteSummary> =
                etas.iter().enumerate().map(|(k, e)| route(*e, (k as u32 + i as u32) % 3, (i * 3 + k) as u64)).collect();
            let best = (0..3).min_by(|&a, &b| etas[a].total_cmp(&etas[b])).unwrap();
            let ts = 1_700_000_000 + i as i64 * 3600;
            if i % 10 == 9 {
                entry(i, ts, routes, &[])
            } else {
                entry(i, ts, routes, &[(best, ts + 60)])
            }
        })
        .collect()
}

#[test]
fn training_set_is_scaled_and_counts_skipped_queries() {
    let set = build_training_set(&fastest_log(40), &profiles());
    assert_eq!(set.skipped, 4);
    assert_eq!(set.queries.len(), 36);
    assert_eq!(set.pairs.len(), 72);
    assert!(set.rows.iter().flatten().all(|v| (0.0..=1.0).contains(v)));
    assert!(set.rows.iter().all(|r| r.len() == set.names.len()));
    for p in &set.pairs {
        let q = &set.queries[p.query];
        assert!(q.contains(&p.preferred) && q.contains(&p.other));
    }
}

#[test]
fn learned_model_ranks_fastest_first_and_survives_a_round_trip() {
    let set = build_training_set(&fastest_log(60), &profiles());
    let params = GbdtParams { n_trees: 40, min_leaf: 3, ..GbdtParams::default() };
    let mut rounds = Vec::new();
    let model = train(&set, &params, |r| rounds.push(*r)).unwrap();
    assert_eq!(rounds.len(), 40);
    assert!(rounds.last().unwrap().loss < rounds[0].loss);
    let offset = set.objective_offset(&params);
    assert!((rounds[0].objective - rounds[0].loss - offset).abs() < 1e-9);

    let list = vec![route(2000.0, 0, 1), route(1300.0, 2, 2), route(2500.0, 1, 3)];
    let out = model.rerank(&ctx(1_700_050_000), &list, profiles().get("demo")).unwrap();
    assert_eq!(out.order[0], 1);
    assert_eq!(model.feature_importance()[0].1, 1.0);

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.bin");
    io::save_model(&path, &model).unwrap();
    let back = io::load_model(&path).unwrap();
    assert_eq!(back, model);
    let again = back.rerank(&ctx(1_700_050_000), &list, profiles().get("demo")).unwrap();
    assert_eq!(again, out);

    let mut bytes = io::encode_model(&model);
    bytes[0] = b'X';
    assert!(matches!(io::decode_model(&bytes), Err(RerankError::Codec(crate::codec::CodecError::BadMagic { .. }))));
}

/// A model whose single tree splits on scaled ETA only.
fn eta_model() -> RankModel {
    let space = FeatureSpace::fit(&profiles(), std::iter::empty());
    let names = space.names();
    let dim = names.len();
    let eta = names.iter().position(|n| n == "eta_s").unwrap();
    let mut max = vec![1.0; dim];
    max[eta] = 3600.0;
    let tree = Tree {
        nodes: vec![
            Node::Split { feature: eta as u32, threshold: 0.5, left: 1, right: 2 },
            Node::Leaf { value: -1.0 },
            Node::Leaf { value: 1.0 },
        ],
    };
    let mut gains = vec![0.0; dim];
    gains[eta] = 4.0;
    RankModel {
        schema_version: SCHEMA_VERSION,
        space,
        names,
        scaler: Scaler { min: vec![0.0; dim], max },
        params: GbdtParams::default(),
        ensemble: Ensemble { dim, beta: 0.1, trees: vec![tree], gains },
    }
}

#[test]
fn planted_eta_model_puts_the_fast_route_first() {
    let m = eta_model();
    let list = vec![route(2400.0, 0, 1), route(1500.0, 1, 2), route(3000.0, 0, 3)];
    // 08:00 UTC, a rush-hour context.
    let out = m.rerank(&ctx(1_700_035_200), &list, None).unwrap();
    assert_eq!(out.order, vec![1, 0, 2]);
    assert_eq!(out.scores[1], 0.05);
    let imp = m.feature_importance();
    assert_eq!(imp[0], ("eta_s".to_string(), 1.0));
    assert!(imp[1..].iter().all(|(_, g)| *g == 0.0));
}

#[test]
fn ties_keep_primary_order_and_singletons_are_unchanged() {
    let m = eta_model();
    let list = vec![route(2400.0, 0, 1), route(2500.0, 1, 2), route(2600.0, 0, 3)];
    assert_eq!(m.rerank(&ctx(0), &list, None).unwrap().order, vec![0, 1, 2]);
    assert_eq!(m.rerank(&ctx(0), &list[..1], None).unwrap().order, vec![0]);
}

#[test]
fn serving_clamps_out_of_range_features() {
    let m = eta_model();
    let list = vec![route(7200.0, 0, 1)];
    let out = m.rerank(&ctx(0), &list, None).unwrap();
    assert!(out.clamped > 0);
    let q = QueryFeatures::new(&ctx(0), &list, None);
    let (v, _) = m.features(&q, &list[0]);
    assert!(v.iter().all(|x| (0.0..=1.0).contains(x)));
}

#[test]
fn wrong_dimension_is_a_schema_mismatch() {
    let m = eta_model();
    assert!(matches!(m.score(&[0.0; 3]), Err(RerankError::SchemaMismatch { found: 3, .. })));
}

#[test]
fn empty_log_cannot_be_trained() {
    let set = build_training_set(&[], &profiles());
    assert!(matches!(train(&set, &GbdtParams::default(), |_| {}), Err(RerankError::NoPairs)));
}
