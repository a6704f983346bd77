//! Genealogy edges between communities.
//!
//! A child's parents are the earlier-created communities in which its first
//! `k` members posted during the window before each member's own first post
//! in the child. The weight of an edge is the fraction of those `k` members.

use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{CommunityId, CorpusIndex, UserId};
use crate::stats::{summarize, Summary};

pub const DAY: i64 = 86_400;
pub const DEFAULT_WINDOW: i64 = 30 * DAY;
pub const DEFAULT_THRESHOLDS: [f64; 2] = [0.05, 0.1];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenealogyParams {
    /// Recency window in seconds; activity in `[t - window, t)` counts.
    pub window: i64,
    /// Weight thresholds for the `num_parents_weight_at_least` counts.
    pub thresholds: Vec<f64>,
}

impl Default for GenealogyParams {
    fn default() -> Self {
        GenealogyParams {
            window: DEFAULT_WINDOW,
            thresholds: DEFAULT_THRESHOLDS.to_vec(),
        }
    }
}

impl GenealogyParams {
    pub fn with_window(window: i64) -> Self {
        GenealogyParams {
            window,
            ..Default::default()
        }
    }

    fn validate(&self) -> Result<()> {
        if self.window <= 0 {
            return Err(Error::InvalidArgument("window must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenealogyEdge {
    pub parent: CommunityId,
    pub child: CommunityId,
    /// Number of the first `k` members recently active in `parent`.
    pub hits: u32,
    pub k: u32,
    pub weight: f64,
}

impl GenealogyEdge {
    fn new(parent: CommunityId, child: CommunityId, hits: u32, k: u32) -> Self {
        GenealogyEdge {
            parent,
            child,
            hits,
            k,
            weight: f64::from(hits) / f64::from(k),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParentStats {
    pub child: CommunityId,
    pub k: usize,
    pub num_parents: usize,
    /// `(threshold, number of parents with weight >= threshold)`.
    pub num_parents_weight_at_least: Vec<(f64, usize)>,
    pub max_parent_weight: f64,
    /// Early members with no recent post in any earlier-created community.
    pub new_users: usize,
    pub fraction_new_users: f64,
}

impl ParentStats {
    /// Flattened `(name, value)` view used for aggregation and export.
    pub fn properties(&self) -> Vec<(String, f64)> {
        let mut out = vec![("num_parents".to_owned(), self.num_parents as f64)];
        for (theta, n) in &self.num_parents_weight_at_least {
            out.push((threshold_name(*theta), *n as f64));
        }
        out.push(("max_parent_weight".to_owned(), self.max_parent_weight));
        out.push(("fraction_new_users".to_owned(), self.fraction_new_users));
        out
    }
}

pub fn threshold_name(theta: f64) -> String {
    format!("num_parents_w_ge_{theta}")
}

/// Communities where `user` posted in `[t - window, t)`.
pub fn recent_communities(
    index: &CorpusIndex,
    user: UserId,
    t: i64,
    window: i64,
) -> Result<BTreeSet<CommunityId>> {
    if window <= 0 {
        return Err(Error::InvalidArgument("window must be positive".into()));
    }
    Ok(index
        .user_posts_between(user, t - window, t)
        .iter()
        .map(|&p| index.post(p).community)
        .collect())
}

/// Same as [`recent_communities`], by user name. Unknown users have no
/// recent communities.
pub fn recent_communities_named(
    index: &CorpusIndex,
    user: &str,
    t: i64,
    window: i64,
) -> Result<BTreeSet<CommunityId>> {
    match index.user_id(user) {
        Some(u) => recent_communities(index, u, t, window),
        None if window > 0 => Ok(BTreeSet::new()),
        None => Err(Error::InvalidArgument("window must be positive".into())),
    }
}

/// For each of the first `k` members of `child`, the earlier-created
/// communities they were active in before joining, evaluated at their own
/// first post.
pub fn early_member_parents(
    index: &CorpusIndex,
    child: CommunityId,
    k: usize,
    window: i64,
) -> Result<Vec<BTreeSet<CommunityId>>> {
    if k == 0 {
        return Err(Error::InvalidArgument("k must be at least 1".into()));
    }
    let members = index.members(child);
    if members.len() < k {
        return Err(Error::InsufficientMembers {
            community: index.community_name(child).to_owned(),
            members: members.len(),
            required: k,
        });
    }
    let created = index.creation_time(child);
    members[..k]
        .iter()
        .map(|m| {
            let mut set = recent_communities(index, m.user, m.first_post, window)?;
            set.retain(|&c| index.creation_time(c) < created);
            Ok(set)
        })
        .collect()
}

/// Edges and parent statistics over the first `sets.len()` members.
fn aggregate(
    child: CommunityId,
    sets: &[BTreeSet<CommunityId>],
    thresholds: &[f64],
) -> (Vec<GenealogyEdge>, ParentStats) {
    let k = sets.len();
    let mut hits: BTreeMap<CommunityId, u32> = BTreeMap::new();
    let mut new_users = 0;
    for set in sets {
        if set.is_empty() {
            new_users += 1;
        }
        for &c in set {
            *hits.entry(c).or_default() += 1;
        }
    }
    let edges: Vec<GenealogyEdge> = hits
        .into_iter()
        .map(|(parent, h)| GenealogyEdge::new(parent, child, h, k as u32))
        .collect();
    let max_parent_weight = edges.iter().map(|e| e.weight).fold(0.0, f64::max);
    let num_parents_weight_at_least = thresholds
        .iter()
        .map(|&theta| (theta, edges.iter().filter(|e| e.weight >= theta).count()))
        .collect();
    let stats = ParentStats {
        child,
        k,
        num_parents: edges.len(),
        num_parents_weight_at_least,
        max_parent_weight,
        new_users,
        fraction_new_users: new_users as f64 / k as f64,
    };
    (edges, stats)
}

/// Parent edges of `child` at `k`, sorted by parent id, with the matching
/// statistics. Zero-weight edges are not materialized.
pub fn parent_edges(
    index: &CorpusIndex,
    child: CommunityId,
    k: usize,
    params: &GenealogyParams,
) -> Result<(Vec<GenealogyEdge>, ParentStats)> {
    params.validate()?;
    let sets = early_member_parents(index, child, k, params.window)?;
    Ok(aggregate(child, &sets, &params.thresholds))
}

/// Parent statistics of `child` for every `k` in `ks`. Member recency is
/// computed once, so the prefixes nest exactly.
pub fn emergence_curve(
    index: &CorpusIndex,
    child: CommunityId,
    ks: &[usize],
    params: &GenealogyParams,
) -> Result<Vec<ParentStats>> {
    Ok(emergence_edges(index, child, ks, params)?
        .into_iter()
        .map(|(_, s)| s)
        .collect())
}

pub fn emergence_edges(
    index: &CorpusIndex,
    child: CommunityId,
    ks: &[usize],
    params: &GenealogyParams,
) -> Result<Vec<(Vec<GenealogyEdge>, ParentStats)>> {
    params.validate()?;
    let kmax = ks.iter().copied().max().unwrap_or(0);
    if ks.contains(&0) || kmax == 0 {
        return Err(Error::InvalidArgument("k values must be at least 1".into()));
    }
    let sets = early_member_parents(index, child, kmax, params.window)?;
    Ok(ks
        .iter()
        .map(|&k| aggregate(child, &sets[..k], &params.thresholds))
        .collect())
}

/// Genealogy edges into a set of children at a single `k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenealogyGraph {
    pub k: usize,
    pub window: i64,
    pub edges: Vec<GenealogyEdge>,
    pub stats: Vec<ParentStats>,
}

impl GenealogyGraph {
    /// Builds edges for every child with at least `k` members; smaller
    /// children are left out. Output is ordered by child id regardless of
    /// thread count.
    pub fn build(
        index: &CorpusIndex,
        children: &[CommunityId],
        k: usize,
        params: &GenealogyParams,
    ) -> Result<GenealogyGraph> {
        params.validate()?;
        let mut children: Vec<CommunityId> = children
            .iter()
            .copied()
            .filter(|&c| index.member_count(c) >= k)
            .collect();
        children.sort_unstable();
        children.dedup();
        let per_child: Vec<(Vec<GenealogyEdge>, ParentStats)> = children
            .par_iter()
            .map(|&c| parent_edges(index, c, k, params))
            .collect::<Result<_>>()?;
        let mut edges = Vec::new();
        let mut stats = Vec::with_capacity(per_child.len());
        for (e, s) in per_child {
            edges.extend(e);
            stats.push(s);
        }
        Ok(GenealogyGraph {
            k,
            window: params.window,
            edges,
            stats,
        })
    }

    pub fn edges_into(&self, child: CommunityId) -> impl Iterator<Item = &GenealogyEdge> {
        self.edges.iter().filter(move |e| e.child == child)
    }

    pub fn stats_for(&self, child: CommunityId) -> Option<&ParentStats> {
        self.stats
            .binary_search_by_key(&child, |s| s.child)
            .ok()
            .map(|i| &self.stats[i])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmergenceRow {
    pub k: usize,
    pub property: String,
    pub summary: Summary,
}

/// Mean and standard error of each parent property across `children`, for
/// every `k`. Children with fewer than `max(ks)` members are skipped so that
/// every `k` averages over the same population.
pub fn emergence_summary(
    index: &CorpusIndex,
    children: &[CommunityId],
    ks: &[usize],
    params: &GenealogyParams,
) -> Result<Vec<EmergenceRow>> {
    let kmax = ks.iter().copied().max().unwrap_or(0);
    let curves: Vec<Vec<ParentStats>> = children
        .par_iter()
        .filter(|&&c| index.member_count(c) >= kmax)
        .map(|&c| emergence_curve(index, c, ks, params))
        .collect::<Result<_>>()?;
    let mut rows = Vec::new();
    for (i, &k) in ks.iter().enumerate() {
        let mut by_prop: Vec<(String, Vec<f64>)> = Vec::new();
        for curve in &curves {
            for (j, (name, v)) in curve[i].properties().into_iter().enumerate() {
                if by_prop.len() <= j {
                    by_prop.push((name, Vec::new()));
                }
                by_prop[j].1.push(v);
            }
        }
        for (property, values) in by_prop {
            rows.push(EmergenceRow {
                k,
                property,
                summary: summarize(&values),
            });
        }
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesRow {
    pub k: usize,
    pub bucket_start: i64,
    pub property: String,
    pub summary: Summary,
}

/// Per creation-time bucket means and standard errors of parent properties.
/// Buckets are `[b * bucket, (b + 1) * bucket)` in epoch seconds; empty
/// buckets are omitted.
pub fn property_time_series(
    index: &CorpusIndex,
    children: &[CommunityId],
    ks: &[usize],
    params: &GenealogyParams,
    bucket: i64,
) -> Result<Vec<SeriesRow>> {
    if bucket <= 0 {
        return Err(Error::InvalidArgument("bucket must be positive".into()));
    }
    if children.is_empty() {
        return Err(Error::InvalidArgument("no eligible children".into()));
    }
    let mut rows = Vec::new();
    for &k in ks {
        let graph = GenealogyGraph::build(index, children, k, params)?;
        let mut buckets: BTreeMap<i64, Vec<&ParentStats>> = BTreeMap::new();
        for s in &graph.stats {
            let start = index.creation_time(s.child).div_euclid(bucket) * bucket;
            buckets.entry(start).or_default().push(s);
        }
        for (start, group) in buckets {
            let props: Vec<Vec<(String, f64)>> = group.iter().map(|s| s.properties()).collect();
            for j in 0..props[0].len() {
                let values: Vec<f64> = props.iter().map(|p| p[j].1).collect();
                rows.push(SeriesRow {
                    k,
                    bucket_start: start,
                    property: props[0][j].0.clone(),
                    summary: summarize(&values),
                });
            }
        }
    }
    Ok(rows)
}
