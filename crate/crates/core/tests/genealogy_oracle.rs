mod common;

use std::collections::BTreeMap;

use commgen::genealogy::{
    emergence_curve, emergence_summary, parent_edges, property_time_series, recent_communities_named,
    GenealogyGraph, GenealogyParams,
};
use commgen::ingest::{build_index, Event};
use commgen::synth::{generate_corpus, two_era_scenario};
use common::*;
use proptest::prelude::*;

#[test]
fn worked_example_recent_communities() {
    let index = build_index(&worked_example_events()).unwrap();
    let c = index.community_id("AskThe_Donald").unwrap();
    let u2 = index.members(c)[1];
    let set = recent_communities_named(&index, "u2", u2.first_post, WINDOW).unwrap();
    let names: Vec<&str> = set.iter().map(|&c| index.community_name(c)).collect();
    assert_eq!(names, vec!["The_Donald", "politics"]);
    assert!(recent_communities_named(&index, "nobody", u2.first_post, WINDOW)
        .unwrap()
        .is_empty());
}

#[test]
fn worked_example_extended_dilutes_weights() {
    let mut events = worked_example_events();
    for i in 11..=20 {
        events.push(Event::new(
            format!("u{i}"),
            "AskThe_Donald",
            1_460_000_000 + i * 60,
            "q",
            "",
            0,
        ));
    }
    let index = build_index(&events).unwrap();
    let c = index.community_id("AskThe_Donald").unwrap();
    let (e10, _) = parent_edges(&index, c, 10, &GenealogyParams::default()).unwrap();
    let (e20, s20) = parent_edges(&index, c, 20, &GenealogyParams::default()).unwrap();
    assert_eq!(e10.len(), e20.len());
    for (a, b) in e10.iter().zip(&e20) {
        assert_eq!(a.parent, b.parent);
        assert_eq!(a.weight / 2.0, b.weight);
    }
    assert_eq!(s20.fraction_new_users, 0.9);
    let curve = emergence_curve(&index, c, &[10, 20], &GenealogyParams::default()).unwrap();
    assert_eq!(curve[0].num_parents, curve[1].num_parents);
}

#[test]
fn too_few_members_is_an_error() {
    let index = build_index(&worked_example_events()).unwrap();
    let c = index.community_id("AskThe_Donald").unwrap();
    assert!(parent_edges(&index, c, 11, &GenealogyParams::default()).is_err());
    let graph = GenealogyGraph::build(&index, &[c], 11, &GenealogyParams::default()).unwrap();
    assert!(graph.stats.is_empty());
}

#[test]
fn two_eras_give_flat_bucket_means() {
    let era = 60 * DAY;
    let k = 10;
    let (events, _) = generate_corpus(&two_era_scenario(3, 6, k, era)).unwrap();
    let index = build_index(&events).unwrap();
    let children: Vec<_> = index
        .communities()
        .filter(|&c| index.community_name(c).starts_with("era"))
        .collect();
    let rows = property_time_series(&index, &children, &[k], &GenealogyParams::default(), era).unwrap();
    let mut by_prop: BTreeMap<&str, Vec<(i64, f64, f64, usize)>> = BTreeMap::new();
    for r in &rows {
        by_prop.entry(r.property.as_str()).or_default().push((
            r.bucket_start,
            r.summary.mean,
            r.summary.se,
            r.summary.n,
        ));
    }
    let expect = |prop: &str, first: f64, second: f64| {
        let v = &by_prop[prop];
        assert_eq!(v.len(), 2, "{prop}");
        for (row, want) in v.iter().zip([first, second]) {
            assert!((row.1 - want).abs() < 1e-12, "{prop}: {row:?}");
            assert!(row.2 < 1e-12, "{prop}: {row:?}");
            assert_eq!(row.3, 6);
        }
        assert_eq!(v[1].0 - v[0].0, era);
    };
    expect("num_parents", 2.0, 5.0);
    expect("max_parent_weight", 0.3, 0.1);
    expect("fraction_new_users", 0.4, 0.5);
    expect("num_parents_w_ge_0.1", 2.0, 5.0);
}

#[test]
fn emergence_rows_cover_every_k() {
    let (events, _) = generate_corpus(&two_era_scenario(9, 4, 20, 40 * DAY)).unwrap();
    let index = build_index(&events).unwrap();
    let children: Vec<_> = index.communities().collect();
    let ks = [5, 10, 20];
    let rows = emergence_summary(&index, &children, &ks, &GenealogyParams::default()).unwrap();
    for &k in &ks {
        let n = rows
            .iter()
            .find(|r| r.k == k && r.property == "num_parents")
            .unwrap()
            .summary
            .n;
        assert_eq!(
            n,
            children.iter().filter(|&&c| index.member_count(c) >= 20).count()
        );
    }
    let np: Vec<f64> = ks
        .iter()
        .map(|&k| {
            rows.iter()
                .find(|r| r.k == k && r.property == "num_parents")
                .unwrap()
                .summary
                .mean
        })
        .collect();
    assert!(np[0] <= np[1] && np[1] <= np[2]);
}

fn random_events() -> impl Strategy<Value = Vec<Event>> {
    prop::collection::vec((0..8u8, 0..5u8, 0..1500i64), 1..70).prop_map(|raw| {
        raw.into_iter()
            .map(|(u, c, h)| {
                Event::new(
                    format!("u{u}"),
                    format!("c{c}"),
                    1_300_000_000 + h * 3600,
                    "",
                    "",
                    0,
                )
            })
            .collect()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn matches_brute_force_scan(events in random_events(), k in 1usize..6, window_days in 1i64..40) {
        let index = build_index(&events).unwrap();
        let window = window_days * DAY;
        let params = GenealogyParams::with_window(window);
        for c in index.communities() {
            let name = index.community_name(c);
            match brute_genealogy(&events, name, k, window) {
                Some(b) => {
                    let (edges, stats) = parent_edges(&index, c, k, &params).unwrap();
                    let got: BTreeMap<String, u32> = edges
                        .iter()
                        .map(|e| (index.community_name(e.parent).to_owned(), e.hits))
                        .collect();
                    prop_assert_eq!(got, b.hits);
                    prop_assert_eq!(stats.new_users, b.new_users);
                }
                None => prop_assert!(parent_edges(&index, c, k, &params).is_err()),
            }
        }
    }

    #[test]
    fn threshold_counts_are_nested(events in random_events(), k in 1usize..6) {
        let index = build_index(&events).unwrap();
        let graph = GenealogyGraph::build(&index, &index.communities().collect::<Vec<_>>(), k, &GenealogyParams::default()).unwrap();
        for s in &graph.stats {
            let counts: Vec<usize> = s.num_parents_weight_at_least.iter().map(|p| p.1).collect();
            prop_assert!(counts[1] <= counts[0] && counts[0] <= s.num_parents);
            prop_assert!(s.max_parent_weight <= 1.0);
            prop_assert_eq!(graph.edges_into(s.child).count(), s.num_parents);
        }
    }
}
