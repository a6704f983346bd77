mod common;

use std::collections::{BTreeMap, BTreeSet, HashMap};

use commgen::early::{
    build_early_dataset, entropy_bits, extract_user_features, match_negative, parent_post_count,
    sample_tuples, EarlyParams, ScopeModels, MAX_MATCH_DISTANCE,
};
use commgen::genealogy::{parent_edges, GenealogyGraph, GenealogyParams};
use commgen::growth::{
    build_growth_dataset, empirical_median_size, extract_growth_features, feature_columns, growth_targets,
    GrowthParams,
};
use commgen::ingest::{build_index, Event};
use commgen::lang::LangParams;
use commgen::synth::{early_member_scenario, generate_corpus, random_plan};
use commgen::text::tokenize;
use common::*;
use proptest::prelude::*;

fn tokens_of(e: &Event) -> Vec<String> {
    tokenize(&e.title).chain(tokenize(&e.body)).collect()
}

fn pop_std(xs: &[f64]) -> f64 {
    let m = xs.iter().sum::<f64>() / xs.len() as f64;
    (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / xs.len() as f64).sqrt()
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn sorted_members<'a>(events: &'a [Event], c: &str) -> Vec<(i64, &'a str)> {
    let mut first: HashMap<&str, i64> = HashMap::new();
    for e in events.iter().filter(|e| e.community_id == c) {
        let t = first.entry(&e.user_id).or_insert(i64::MAX);
        *t = (*t).min(e.timestamp);
    }
    let mut m: Vec<(i64, &str)> = first.into_iter().map(|(u, t)| (t, u)).collect();
    m.sort();
    m
}

fn lang_params() -> LangParams {
    LangParams {
        alpha: 0.01,
        min_unique_members: 1,
        top_parents: 1000,
    }
}

fn window_posts<'a>(events: &'a [Event], c: &'a str, t: i64) -> impl Iterator<Item = &'a Event> + 'a {
    events
        .iter()
        .filter(move |e| e.community_id == c && e.timestamp >= t - WINDOW && e.timestamp < t)
}

/// Growth feature vector recomputed from raw events.
fn growth_oracle(events: &[Event], child: &str, k: usize) -> Option<Vec<f64>> {
    let b = brute_genealogy(events, child, k, WINDOW)?;
    let members = sorted_members(events, child);
    let created = members[0].0;
    let mut f = vec![
        created as f64,
        (members[k - 1].0 - members[0].0) as f64 / (k - 1) as f64,
        b.hits.len() as f64,
    ];
    let weights: Vec<f64> = b.hits.values().map(|&h| f64::from(h) / k as f64).collect();
    for theta in [0.05, 0.1] {
        f.push(weights.iter().filter(|&&w| w >= theta).count() as f64);
    }
    let sizes: Vec<f64> = b
        .hits
        .keys()
        .map(|p| {
            let users: BTreeSet<&str> = window_posts(events, p, created)
                .map(|e| e.user_id.as_str())
                .collect();
            (users.len().max(1) as f64).ln()
        })
        .collect();
    if weights.is_empty() {
        f.extend([0.0; 8]);
    } else {
        let wsum: f64 = weights.iter().sum();
        f.extend([
            weights.iter().copied().fold(0.0, f64::max),
            mean(&weights),
            pop_std(&weights),
        ]);
        f.extend([
            mean(&sizes),
            sizes.iter().copied().fold(f64::INFINITY, f64::min),
            sizes.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            pop_std(&sizes),
            sizes.iter().zip(&weights).map(|(s, w)| s * w).sum::<f64>() / wsum,
        ]);
    }
    let docs: Vec<Vec<String>> = b
        .hits
        .keys()
        .filter(|p| window_posts(events, p, created).next().is_some())
        .map(|p| window_posts(events, p, created).flat_map(tokens_of).collect())
        .collect();
    if docs.len() < 2 {
        f.extend([f64::NAN, f64::NAN, f64::NAN, 1.0]);
    } else {
        let mut d = Vec::new();
        for i in 0..docs.len() {
            for j in i + 1..docs.len() {
                let a: Vec<&str> = docs[i].iter().map(String::as_str).collect();
                let b: Vec<&str> = docs[j].iter().map(String::as_str).collect();
                d.push(js_oracle(&a, &b, 0.01));
            }
        }
        f.extend([mean(&d), d.iter().copied().fold(0.0, f64::max), pop_std(&d), 0.0]);
    }
    f.push(b.new_users as f64 / k as f64);
    Some(f)
}

fn same(a: f64, b: f64) -> bool {
    (a.is_nan() && b.is_nan()) || (a - b).abs() <= 1e-9 * (1.0 + b.abs())
}

#[test]
fn growth_features_match_straight_line_oracle() {
    let k = 10;
    let mut params = GrowthParams::new(k);
    params.lang = lang_params();
    let mut compared = 0;
    for seed in 0..4 {
        let (events, _) = generate_corpus(&random_plan(seed, 12, k)).unwrap();
        let index = build_index(&events).unwrap();
        for c in index.communities() {
            let name = index.community_name(c);
            let Some(want) = growth_oracle(&events, name, k) else {
                continue;
            };
            let (edges, stats) = parent_edges(&index, c, k, &params.genealogy).unwrap();
            let got = extract_growth_features(&index, c, &edges, &stats, &params).unwrap();
            assert_eq!(got.len(), 18);
            for (j, (g, w)) in got.iter().zip(&want).enumerate() {
                assert!(same(*g, *w), "{name} column {j}: {g} vs {w}");
            }
            compared += 1;
        }
    }
    assert!(compared >= 40);
}

#[test]
fn worked_example_growth_features() {
    let index = build_index(&worked_example_events()).unwrap();
    let c = index.community_id("AskThe_Donald").unwrap();
    let params = GrowthParams::new(10);
    let (edges, stats) = parent_edges(&index, c, 10, &params.genealogy).unwrap();
    let f = extract_growth_features(&index, c, &edges, &stats, &params).unwrap();
    let col: BTreeMap<String, f64> = feature_columns(&params.genealogy.thresholds)
        .into_iter()
        .map(|(n, _)| n)
        .zip(f)
        .collect();
    assert_eq!(col["num_parents"], 2.0);
    assert_eq!(col["max_parent_weight"], 0.2);
    assert_eq!(col["fraction_new_users"], 0.8);
    assert_eq!(col["avg_time_gap"], 60.0);
    assert_eq!(col["parent_distance_missing"], 1.0);
    assert!(col["avg_parent_distance"].is_nan());
}

#[test]
fn median_of_many_sizes() {
    let mut rng_state = 7u64;
    let mut events = Vec::new();
    let mut sizes = Vec::new();
    for c in 0..1001 {
        rng_state = rng_state
            .wrapping_mul(6364136223846793005)
            .wrapping_add(1442695040888963407);
        let n = 1 + (rng_state >> 40) as usize % 25;
        sizes.push(n);
        for u in 0..n {
            events.push(Event::new(
                format!("u{u}"),
                format!("c{c:04}"),
                1_000_000 + (c * 100 + u) as i64,
                "",
                "",
                0,
            ));
        }
    }
    let index = build_index(&events).unwrap();
    let all: Vec<_> = index.communities().collect();
    sizes.sort_unstable();
    assert_eq!(empirical_median_size(&index, &all).unwrap(), sizes[500]);
}

#[test]
fn growth_rows_agree_with_direct_lookup() {
    let k = 5;
    for seed in 0..3 {
        let (events, _) = generate_corpus(&random_plan(seed, 15, k)).unwrap();
        let index = build_index(&events).unwrap();
        let children: Vec<_> = index.communities().collect();
        let mut params = GrowthParams::new(k);
        params.base_member = 3;
        let build = build_growth_dataset(&index, &children, &params).unwrap();
        let mut sizes: Vec<usize> = children
            .iter()
            .map(|&c| sorted_members(&events, index.community_name(c)).len())
            .collect();
        sizes.sort_unstable();
        let median = sizes[(sizes.len() - 1) / 2];
        assert_eq!(build.median, median);
        let d = &build.dataset;
        let (wa, lo, hi) = (
            d.column_index("weighted_avg_parent_size").unwrap(),
            d.column_index("min_parent_size").unwrap(),
            d.column_index("max_parent_size").unwrap(),
        );
        let (np, t5, t10) = (
            d.column_index("num_parents").unwrap(),
            d.column_index("num_parents_w_ge_0.05").unwrap(),
            d.column_index("num_parents_w_ge_0.1").unwrap(),
        );
        for row in &d.rows {
            let m = sorted_members(&events, &row.id);
            assert_eq!(row.label, m.len() > median);
            match row.target {
                Some(r) => assert!((r - ((m[median - 1].0 - m[2].0) as f64).ln()).abs() < 1e-12),
                None => assert!(!row.label),
            }
            let f = &row.features;
            assert!(f[lo] - 1e-12 <= f[wa] && f[wa] <= f[hi] + 1e-12);
            assert!(f[t10] <= f[t5] && f[t5] <= f[np]);
        }
        for s in &build.skipped {
            let c = index.community_id(&s.id).unwrap();
            assert!(growth_targets(&index, c, median, 3).is_err() || index.member_count(c) < k);
        }
    }
}

fn negative_scan(
    events: &[Event],
    pos: &str,
    parent: &str,
    child: &str,
    k: usize,
    t: i64,
) -> Option<(String, usize)> {
    let early: BTreeSet<&str> = sorted_members(events, child)
        .iter()
        .take(k)
        .map(|m| m.1)
        .collect();
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for e in events {
        if e.community_id == parent && e.timestamp >= t - WINDOW && e.timestamp < t {
            *counts.entry(&e.user_id).or_default() += 1;
        }
    }
    let target = *counts.get(pos)?;
    let mut best: Option<(String, usize)> = None;
    for (u, n) in counts {
        if early.contains(u) {
            continue;
        }
        let d = n.abs_diff(target);
        if d <= MAX_MATCH_DISTANCE && best.as_ref().is_none_or(|b| d < b.1) {
            best = Some((u.to_owned(), d));
        }
    }
    best
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn nearest_negative_matches_linear_scan(
        counts in prop::collection::vec(0usize..12, 50),
        stale in prop::collection::vec(0usize..3, 50),
        pos_count in 1usize..12,
        k in 1usize..4,
    ) {
        let t = 1_500_000_000;
        let mut events = Vec::new();
        for (i, (&n, &old)) in counts.iter().zip(&stale).enumerate() {
            for j in 0..n {
                events.push(Event::new(format!("cand{i:02}"), "parent", t - 1000 - j as i64, "", "", 0));
            }
            for j in 0..old {
                events.push(Event::new(format!("cand{i:02}"), "parent", t - WINDOW - 1 - j as i64, "", "", 0));
            }
        }
        for j in 0..pos_count {
            events.push(Event::new("pos", "parent", t - 500 - j as i64, "", "", 0));
        }
        events.push(Event::new("pos", "child", t, "", "", 0));
        for i in 1..k {
            events.push(Event::new(format!("cand{:02}", i * 7), "child", t + i as i64, "", "", 0));
        }
        let index = build_index(&events).unwrap();
        let (p, c) = (index.community_id("parent").unwrap(), index.community_id("child").unwrap());
        let pos = index.user_id("pos").unwrap();
        let got = match_negative(&index, pos, p, c, k, t, WINDOW, MAX_MATCH_DISTANCE)
            .map(|(u, d)| (index.user_name(u).to_owned(), d));
        prop_assert_eq!(got, negative_scan(&events, "pos", "parent", "child", k, t));
    }
}

fn star(parents: usize) -> (commgen::ingest::CorpusIndex, GenealogyGraph) {
    let t = 1_500_000_000;
    let mut events: Vec<Event> = (0..parents)
        .map(|i| Event::new("u", format!("p{i}"), t - 1000 + i as i64, "", "", 0))
        .collect();
    events.push(Event::new("u", "child", t, "", "", 0));
    let index = build_index(&events).unwrap();
    let c = index.community_id("child").unwrap();
    let graph = GenealogyGraph::build(&index, &[c], 1, &GenealogyParams::default()).unwrap();
    assert_eq!(graph.edges.len(), parents);
    (index, graph)
}

#[test]
fn sampling_small_graphs_returns_every_edge() {
    let (_, graph) = star(3);
    let got: BTreeSet<_> = sample_tuples(&graph, 10, 1).into_iter().collect();
    let all: BTreeSet<_> = graph.edges.iter().map(|e| (e.parent, e.child)).collect();
    assert_eq!(got, all);
    let (_, graph) = star(5);
    assert_eq!(sample_tuples(&graph, 3, 42), sample_tuples(&graph, 3, 42));
    let two = sample_tuples(&graph, 2, 9);
    assert_eq!(two.len(), 2);
    assert_ne!(two[0], two[1]);
}

#[test]
fn sampling_is_uniform() {
    let (_, graph) = star(5);
    let mut counts: HashMap<_, f64> = HashMap::new();
    let draws = 100_000;
    for seed in 0..draws {
        *counts.entry(sample_tuples(&graph, 1, seed)[0]).or_default() += 1.0;
    }
    let expected = draws as f64 / 5.0;
    let chi2: f64 = counts.values().map(|o| (o - expected).powi(2) / expected).sum();
    assert_eq!(counts.len(), 5);
    assert!(chi2 < 18.47, "chi2 = {chi2}");
}

fn median_f(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

/// Early-member feature vector recomputed from raw events.
fn user_oracle(events: &[Event], user: &str, parent: &str, t: i64) -> Vec<f64> {
    let window: Vec<&Event> = events
        .iter()
        .filter(|e| e.timestamp >= t - WINDOW && e.timestamp < t)
        .collect();
    let mut mine: Vec<&Event> = window.iter().copied().filter(|e| e.user_id == user).collect();
    mine.sort_by_key(|e| e.timestamp);
    let in_parent: Vec<&Event> = mine
        .iter()
        .copied()
        .filter(|e| e.community_id == parent)
        .collect();
    let parent_train: Vec<String> = window
        .iter()
        .filter(|e| e.community_id == parent)
        .flat_map(|e| tokens_of(e))
        .collect();
    let global_train: Vec<String> = window.iter().flat_map(|e| tokens_of(e)).collect();
    let scope = |posts: &[&Event], train: &[String]| -> Vec<f64> {
        let train: Vec<&str> = train.iter().map(String::as_str).collect();
        let n = posts.len();
        let gap = if n < 2 {
            WINDOW as f64
        } else {
            (posts[n - 1].timestamp - posts[0].timestamp) as f64 / (n - 1) as f64
        };
        let fb = if n == 0 {
            0.0
        } else {
            posts
                .iter()
                .map(|p| {
                    let m = median_f(
                        window
                            .iter()
                            .filter(|e| e.community_id == p.community_id)
                            .map(|e| e.feedback as f64)
                            .collect(),
                    );
                    p.feedback as f64 - m
                })
                .sum::<f64>()
                / n as f64
        };
        let all: Vec<String> = posts.iter().flat_map(|e| tokens_of(e)).collect();
        let all: Vec<&str> = all.iter().map(String::as_str).collect();
        let dist = if all.is_empty() {
            f64::NAN
        } else {
            cross_entropy_oracle(&train, &all, 0.01)
        };
        let per: Vec<f64> = posts
            .iter()
            .map(|e| tokens_of(e))
            .filter(|t| !t.is_empty())
            .map(|t| cross_entropy_oracle(&train, &t.iter().map(String::as_str).collect::<Vec<_>>(), 0.01))
            .collect();
        let spread = if per.is_empty() { f64::NAN } else { pop_std(&per) };
        vec![n as f64, gap, fb, dist, spread]
    };
    let mut f = scope(&in_parent, &parent_train);
    f.extend(scope(&mine, &global_train));
    let mut per_comm: BTreeMap<&str, usize> = BTreeMap::new();
    for e in &mine {
        *per_comm.entry(&e.community_id).or_default() += 1;
    }
    let h: f64 = per_comm
        .values()
        .map(|&c| {
            let p = c as f64 / mine.len() as f64;
            -p * p.log2()
        })
        .sum();
    f.push(in_parent.len() as f64 / mine.len() as f64);
    f.push(h.max(0.0));
    f
}

#[test]
fn early_dataset_matches_straight_line_oracle() {
    let k = 10;
    let (events, _) = generate_corpus(&early_member_scenario(5, 8, k)).unwrap();
    let index = build_index(&events).unwrap();
    let children: Vec<_> = index.communities().collect();
    let graph = GenealogyGraph::build(&index, &children, k, &GenealogyParams::default()).unwrap();
    let build = build_early_dataset(&index, &graph, &EarlyParams::new(k, 6, 3)).unwrap();
    assert!(build.pairs.len() >= 10, "{} pairs", build.pairs.len());
    let d = &build.dataset;
    assert_eq!(d.rows.len(), 2 * build.pairs.len());
    assert_eq!(d.rows.iter().filter(|r| r.label).count(), build.pairs.len());
    let frac = d.column_index("fraction_in_parent").unwrap();
    let ent = d.column_index("community_entropy").unwrap();
    for (i, pair) in build.pairs.iter().enumerate() {
        assert!(pair.distance <= MAX_MATCH_DISTANCE);
        let pc = |u| parent_post_count(&index, u, pair.parent, pair.match_time, WINDOW);
        assert_eq!(pc(pair.positive).abs_diff(pc(pair.negative)), pair.distance);
        for (row, user, label) in [
            (&d.rows[2 * i], pair.positive, true),
            (&d.rows[2 * i + 1], pair.negative, false),
        ] {
            assert_eq!(row.label, label);
            assert_eq!(row.pair_id, Some(i as u64));
            assert_eq!(row.id, index.user_name(user));
            let want = user_oracle(
                &events,
                &row.id,
                index.community_name(pair.parent),
                pair.match_time,
            );
            for (j, (g, w)) in row.features.iter().zip(&want).enumerate() {
                assert!(same(*g, *w), "{} column {j}: {g} vs {w}", row.id);
            }
            let f = &row.features;
            assert!(f[frac] > 0.0 && f[frac] <= 1.0);
            let comms = index
                .user_posts_between(user, pair.match_time - WINDOW, pair.match_time)
                .iter()
                .map(|&p| index.post(p).community)
                .collect::<BTreeSet<_>>()
                .len();
            assert!(f[ent] >= 0.0 && f[ent] <= (comms as f64).log2() + 1e-12);
        }
    }
}

#[test]
fn user_without_window_posts_is_undefined() {
    let index = build_index(&worked_example_events()).unwrap();
    let p = index.community_id("The_Donald").unwrap();
    let u = index.user_id("u4").unwrap();
    let t = index.creation_time(index.community_id("AskThe_Donald").unwrap());
    let models = ScopeModels::build(&index, p, t, WINDOW, 0.01).unwrap();
    assert!(extract_user_features(&index, u, p, t, WINDOW, &models).is_err());
    let u1 = index.user_id("u1").unwrap();
    let f = extract_user_features(&index, u1, p, t, WINDOW, &models).unwrap();
    assert_eq!(f.len(), 12);
    assert_eq!(f[10], 1.0);
    assert_eq!(f[11], entropy_bits([1]));
}
