//! Matched positive/negative users for early-member prediction.

use std::collections::{BTreeMap, HashMap};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, Example};
use crate::error::{Error, Result};
use crate::genealogy::{GenealogyGraph, DEFAULT_WINDOW};
use crate::growth::Skipped;
use crate::ingest::{CommunityId, CorpusIndex, PostId, TokenId, UserId};
use crate::lang::{community_interval_lm, global_interval_lm, UnigramLm, DEFAULT_ALPHA};
use crate::stats::population_std;

pub const PARENT: &str = "parent";
pub const GLOBAL: &str = "global";
pub const INTERPLAY: &str = "interplay";
pub const FAMILIES: [&str; 3] = [PARENT, GLOBAL, INTERPLAY];
pub const MAX_MATCH_DISTANCE: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatchedPair {
    pub parent: CommunityId,
    pub child: CommunityId,
    pub positive: UserId,
    pub negative: UserId,
    /// The positive's first post in the child.
    pub match_time: i64,
    pub distance: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EarlyParams {
    pub k: usize,
    pub window: i64,
    pub tuples: usize,
    pub seed: u64,
    pub alpha: f64,
    pub max_distance: usize,
}

impl EarlyParams {
    pub fn new(k: usize, tuples: usize, seed: u64) -> Self {
        EarlyParams {
            k,
            window: DEFAULT_WINDOW,
            tuples,
            seed,
            alpha: DEFAULT_ALPHA,
            max_distance: MAX_MATCH_DISTANCE,
        }
    }
}

/// Up to `n` distinct `(parent, child)` edges drawn uniformly from `graph`.
pub fn sample_tuples(graph: &GenealogyGraph, n: usize, seed: u64) -> Vec<(CommunityId, CommunityId)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let len = graph.edges.len();
    rand::seq::index::sample(&mut rng, len, n.min(len))
        .into_iter()
        .map(|i| (graph.edges[i].parent, graph.edges[i].child))
        .collect()
}

/// Posts of `user` in `parent` during `[t - window, t)`.
pub fn parent_post_count(
    index: &CorpusIndex,
    user: UserId,
    parent: CommunityId,
    t: i64,
    window: i64,
) -> usize {
    index
        .user_posts_between(user, t - window, t)
        .iter()
        .filter(|&&p| index.post(p).community == parent)
        .count()
}

/// First-`k` members of `child` who posted in `parent` during the window
/// before their own first post in the child, with that first post time.
pub fn positives(
    index: &CorpusIndex,
    parent: CommunityId,
    child: CommunityId,
    k: usize,
    window: i64,
) -> Vec<(UserId, i64)> {
    index
        .members(child)
        .iter()
        .take(k)
        .filter(|m| parent_post_count(index, m.user, parent, m.first_post, window) > 0)
        .map(|m| (m.user, m.first_post))
        .collect()
}

/// Nearest user by number of parent posts in `[t - window, t)` among
/// recent parent posters outside the child's first `k` members. Ties go to
/// the smaller user name; `None` when the best distance exceeds
/// `max_distance` or nobody qualifies.
#[allow(clippy::too_many_arguments)]
pub fn match_negative(
    index: &CorpusIndex,
    positive: UserId,
    parent: CommunityId,
    child: CommunityId,
    k: usize,
    t: i64,
    window: i64,
    max_distance: usize,
) -> Option<(UserId, usize)> {
    let early: Vec<UserId> = index.members(child).iter().take(k).map(|m| m.user).collect();
    let mut counts: HashMap<UserId, usize> = HashMap::new();
    for &p in index.community_posts_between(parent, t - window, t) {
        *counts.entry(index.post(p).user).or_default() += 1;
    }
    let target = *counts.get(&positive)?;
    counts
        .into_iter()
        .filter(|(u, _)| !early.contains(u))
        .map(|(u, n)| (u, n.abs_diff(target)))
        .filter(|&(_, d)| d <= max_distance)
        .min_by(|a, b| {
            a.1.cmp(&b.1)
                .then_with(|| index.user_name(a.0).cmp(index.user_name(b.0)))
        })
}

/// Feature names with their families, in column order.
pub fn feature_columns() -> Vec<(String, &'static str)> {
    let mut cols = Vec::new();
    for scope in [PARENT, GLOBAL] {
        for name in [
            "num_posts",
            "avg_time_gap",
            "feedback",
            "lm_distance",
            "lm_distance_std",
        ] {
            cols.push((format!("{scope}_{name}"), scope));
        }
    }
    cols.push(("fraction_in_parent".to_owned(), INTERPLAY));
    cols.push(("community_entropy".to_owned(), INTERPLAY));
    cols
}

/// Base-2 entropy of a count distribution.
pub fn entropy_bits(counts: impl IntoIterator<Item = usize>) -> f64 {
    let counts: Vec<usize> = counts.into_iter().filter(|&c| c > 0).collect();
    let n: usize = counts.iter().sum();
    if n == 0 {
        return 0.0;
    }
    let h: f64 = counts
        .iter()
        .map(|&c| {
            let p = c as f64 / n as f64;
            -p * p.log2()
        })
        .sum();
    h.max(0.0)
}

pub fn median(values: &mut [f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    let n = values.len();
    Some(if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    })
}

/// Language models of one observation interval.
pub struct ScopeModels {
    pub parent: UnigramLm<TokenId>,
    pub global: UnigramLm<TokenId>,
}

impl ScopeModels {
    pub fn build(index: &CorpusIndex, parent: CommunityId, t: i64, window: i64, alpha: f64) -> Result<Self> {
        let parent_lm = community_interval_lm(index, parent, t - window, t, 1, alpha)?
            .unwrap_or(UnigramLm::build(std::iter::empty(), alpha)?);
        Ok(ScopeModels {
            parent: parent_lm,
            global: global_interval_lm(index, t - window, t, alpha)?,
        })
    }
}

fn scope_features(
    index: &CorpusIndex,
    posts: &[PostId],
    lm: &UnigramLm<TokenId>,
    t: i64,
    window: i64,
    medians: &mut BTreeMap<CommunityId, f64>,
) -> Result<[f64; 5]> {
    let n = posts.len();
    let avg_gap = if n < 2 {
        window as f64
    } else {
        (index.post(posts[n - 1]).timestamp - index.post(posts[0]).timestamp) as f64 / (n - 1) as f64
    };
    let mut diffs = Vec::with_capacity(n);
    for &p in posts {
        let post = index.post(p);
        let m = match medians.get(&post.community) {
            Some(&m) => m,
            None => {
                let mut fb: Vec<f64> = index
                    .community_posts_between(post.community, t - window, t)
                    .iter()
                    .map(|&q| index.post(q).feedback as f64)
                    .collect();
                let m = median(&mut fb).unwrap_or(0.0);
                medians.insert(post.community, m);
                m
            }
        };
        diffs.push(post.feedback as f64 - m);
    }
    let feedback = if n == 0 {
        0.0
    } else {
        diffs.iter().sum::<f64>() / n as f64
    };
    let all_tokens = posts.iter().flat_map(|&p| index.post_tokens(index.post(p)));
    let distance = match lm.cross_entropy(all_tokens) {
        Ok(h) => h,
        Err(Error::UndefinedInput(_)) => f64::NAN,
        Err(e) => return Err(e),
    };
    let per_post: Vec<f64> = posts
        .iter()
        .filter_map(|&p| lm.cross_entropy(index.post_tokens(index.post(p))).ok())
        .collect();
    let spread = if per_post.is_empty() {
        f64::NAN
    } else {
        population_std(&per_post)
    };
    Ok([n as f64, avg_gap, feedback, distance, spread])
}

/// Behaviour of `user` over `[t - window, t)` in `parent` and across the
/// whole corpus. Errors with `UndefinedInput` when the user has no posts in
/// the interval.
pub fn extract_user_features(
    index: &CorpusIndex,
    user: UserId,
    parent: CommunityId,
    t: i64,
    window: i64,
    models: &ScopeModels,
) -> Result<Vec<f64>> {
    if window <= 0 {
        return Err(Error::InvalidArgument("window must be positive".into()));
    }
    let global: &[PostId] = index.user_posts_between(user, t - window, t);
    if global.is_empty() {
        return Err(Error::UndefinedInput(format!(
            "{} has no posts in the observation window",
            index.user_name(user)
        )));
    }
    let in_parent: Vec<PostId> = global
        .iter()
        .copied()
        .filter(|&p| index.post(p).community == parent)
        .collect();
    let mut medians = BTreeMap::new();
    let mut f = Vec::with_capacity(12);
    f.extend(scope_features(
        index,
        &in_parent,
        &models.parent,
        t,
        window,
        &mut medians,
    )?);
    f.extend(scope_features(
        index,
        global,
        &models.global,
        t,
        window,
        &mut medians,
    )?);
    let mut per_comm: BTreeMap<CommunityId, usize> = BTreeMap::new();
    for &p in global {
        *per_comm.entry(index.post(p).community).or_default() += 1;
    }
    f.push(in_parent.len() as f64 / global.len() as f64);
    f.push(entropy_bits(per_comm.into_values()));
    Ok(f)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EarlyBuild {
    pub dataset: Dataset,
    pub pairs: Vec<MatchedPair>,
    pub tuples: usize,
    /// Positives without an acceptable match.
    pub unmatched: usize,
    pub skipped: Vec<Skipped>,
}

fn pairs_for_tuple(
    index: &CorpusIndex,
    parent: CommunityId,
    child: CommunityId,
    params: &EarlyParams,
) -> Vec<Option<MatchedPair>> {
    positives(index, parent, child, params.k, params.window)
        .into_iter()
        .map(|(pos, t)| {
            match_negative(
                index,
                pos,
                parent,
                child,
                params.k,
                t,
                params.window,
                params.max_distance,
            )
            .map(|(neg, distance)| MatchedPair {
                parent,
                child,
                positive: pos,
                negative: neg,
                match_time: t,
                distance,
            })
        })
        .collect()
}

type PairRows = std::result::Result<(MatchedPair, Vec<f64>, Vec<f64>), Skipped>;

fn pair_rows(index: &CorpusIndex, pair: MatchedPair, params: &EarlyParams) -> PairRows {
    let run = || -> Result<(Vec<f64>, Vec<f64>)> {
        let models = ScopeModels::build(index, pair.parent, pair.match_time, params.window, params.alpha)?;
        let pos = extract_user_features(
            index,
            pair.positive,
            pair.parent,
            pair.match_time,
            params.window,
            &models,
        )?;
        let neg = extract_user_features(
            index,
            pair.negative,
            pair.parent,
            pair.match_time,
            params.window,
            &models,
        )?;
        Ok((pos, neg))
    };
    run().map(|(p, n)| (pair, p, n)).map_err(|e| Skipped {
        id: format!(
            "{}>{}:{}",
            index.community_name(pair.parent),
            index.community_name(pair.child),
            index.user_name(pair.positive)
        ),
        reason: e.to_string(),
    })
}

/// Samples tuples from `graph`, matches every positive, and extracts
/// features for both sides of each retained pair.
pub fn build_early_dataset(
    index: &CorpusIndex,
    graph: &GenealogyGraph,
    params: &EarlyParams,
) -> Result<EarlyBuild> {
    if graph.edges.is_empty() {
        return Err(Error::InvalidArgument("genealogy graph has no edges".into()));
    }
    if params.k > graph.k {
        return Err(Error::InvalidArgument(format!(
            "k = {} exceeds the graph's k = {}",
            params.k, graph.k
        )));
    }
    let tuples = sample_tuples(graph, params.tuples, params.seed);
    let matched: Vec<Vec<Option<MatchedPair>>> = tuples
        .par_iter()
        .map(|&(p, c)| pairs_for_tuple(index, p, c, params))
        .collect();
    let mut unmatched = 0;
    let mut pairs = Vec::new();
    for m in matched.into_iter().flatten() {
        match m {
            Some(pair) => pairs.push(pair),
            None => unmatched += 1,
        }
    }
    let rows: Vec<PairRows> = pairs
        .par_iter()
        .map(|&pair| pair_rows(index, pair, params))
        .collect();

    let cols = feature_columns();
    let mut dataset = Dataset::new(
        cols.iter().map(|(n, _)| n.clone()).collect(),
        cols.iter().map(|(_, f)| f.to_string()).collect(),
    );
    let mut kept = Vec::new();
    let mut skipped = Vec::new();
    for r in rows {
        match r {
            Ok((pair, pos, neg)) => {
                let id = kept.len() as u64;
                for (user, features, label) in [(pair.positive, pos, true), (pair.negative, neg, false)] {
                    dataset.rows.push(Example {
                        id: index.user_name(user).to_owned(),
                        pair_id: Some(id),
                        features,
                        label,
                        target: None,
                    });
                }
                kept.push(pair);
            }
            Err(s) => skipped.push(s),
        }
    }
    Ok(EarlyBuild {
        dataset,
        pairs: kept,
        tuples: tuples.len(),
        unmatched,
        skipped,
    })
}
