//! Growth labels, rate targets and the four feature families describing a
//! community's origin.

use std::collections::HashSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, Example};
use crate::error::{Error, Result};
use crate::genealogy::{parent_edges, threshold_name, GenealogyEdge, GenealogyParams, ParentStats};
use crate::ingest::{CommunityId, CorpusIndex, DEFAULT_MIN_MEMBERS};
use crate::lang::{parent_language_stats, LangParams};
use crate::stats::{mean, population_std};

pub const TEMPORAL: &str = "temporal";
pub const BASIC_PARENT: &str = "basic_parent";
pub const PARENT_META: &str = "parent_meta";
pub const NEW_USER: &str = "new_user";
pub const FAMILIES: [&str; 4] = [TEMPORAL, BASIC_PARENT, PARENT_META, NEW_USER];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrowthParams {
    pub k: usize,
    pub genealogy: GenealogyParams,
    pub lang: LangParams,
    /// Member rank the growth clock starts from.
    pub base_member: usize,
}

impl GrowthParams {
    pub fn new(k: usize) -> Self {
        GrowthParams {
            k,
            genealogy: GenealogyParams::default(),
            lang: LangParams::default(),
            base_member: DEFAULT_MIN_MEMBERS,
        }
    }
}

/// Lower median of the final member counts of `children`.
pub fn empirical_median_size(index: &CorpusIndex, children: &[CommunityId]) -> Result<usize> {
    if children.is_empty() {
        return Err(Error::InvalidArgument("no eligible communities".into()));
    }
    let mut sizes: Vec<usize> = children.iter().map(|&c| index.member_count(c)).collect();
    sizes.sort_unstable();
    Ok(sizes[(sizes.len() - 1) / 2])
}

/// Whether `child` ends up larger than `median`, and if so the log of the
/// seconds between its `base_member`-th and `median`-th member.
pub fn growth_targets(
    index: &CorpusIndex,
    child: CommunityId,
    median: usize,
    base_member: usize,
) -> Result<(bool, Option<f64>)> {
    let members = index.members(child);
    if base_member == 0 || members.len() < base_member {
        return Err(Error::InsufficientMembers {
            community: index.community_name(child).to_owned(),
            members: members.len(),
            required: base_member.max(1),
        });
    }
    if members.len() <= median {
        return Ok((false, None));
    }
    if median < base_member {
        return Err(Error::InvalidArgument(format!(
            "median size {median} is below the base member rank {base_member}"
        )));
    }
    let gap = members[median - 1].first_post - members[base_member - 1].first_post;
    if gap <= 0 {
        return Err(Error::Integrity(format!(
            "{}: member {median} joined {gap} s after member {base_member}",
            index.community_name(child)
        )));
    }
    Ok((true, Some((gap as f64).ln())))
}

/// Feature names with their families, in column order.
pub fn feature_columns(thresholds: &[f64]) -> Vec<(String, &'static str)> {
    let mut cols = vec![
        ("creation_time".to_owned(), TEMPORAL),
        ("avg_time_gap".to_owned(), TEMPORAL),
        ("num_parents".to_owned(), BASIC_PARENT),
    ];
    cols.extend(thresholds.iter().map(|&t| (threshold_name(t), BASIC_PARENT)));
    for name in ["max_parent_weight", "mean_parent_weight", "std_parent_weight"] {
        cols.push((name.to_owned(), BASIC_PARENT));
    }
    for name in [
        "avg_parent_size",
        "min_parent_size",
        "max_parent_size",
        "std_parent_size",
        "weighted_avg_parent_size",
        "avg_parent_distance",
        "max_parent_distance",
        "std_parent_distance",
        "parent_distance_missing",
    ] {
        cols.push((name.to_owned(), PARENT_META));
    }
    cols.push(("fraction_new_users".to_owned(), NEW_USER));
    cols
}

/// Natural log of the number of distinct users who posted in `c` during
/// `[t - window, t)`. A community with no such activity counts as size one.
pub fn active_size_log(index: &CorpusIndex, c: CommunityId, t: i64, window: i64) -> f64 {
    let users: HashSet<_> = index
        .community_posts_between(c, t - window, t)
        .iter()
        .map(|&p| index.post(p).user)
        .collect();
    (users.len().max(1) as f64).ln()
}

/// Feature vector of `child` given its parent edges and statistics at `k`.
/// Absent language statistics are `NaN`, flagged by the indicator column.
pub fn extract_growth_features(
    index: &CorpusIndex,
    child: CommunityId,
    edges: &[GenealogyEdge],
    stats: &ParentStats,
    params: &GrowthParams,
) -> Result<Vec<f64>> {
    let k = params.k;
    let members = index.members(child);
    if k < 2 || members.len() < k {
        return Err(Error::InsufficientMembers {
            community: index.community_name(child).to_owned(),
            members: members.len(),
            required: k.max(2),
        });
    }
    let created = index.creation_time(child);
    let window = params.genealogy.window;
    let mut f = vec![
        created as f64,
        (members[k - 1].first_post - members[0].first_post) as f64 / (k - 1) as f64,
        stats.num_parents as f64,
    ];
    f.extend(stats.num_parents_weight_at_least.iter().map(|&(_, n)| n as f64));

    let weights: Vec<f64> = edges.iter().map(|e| e.weight).collect();
    let sizes: Vec<f64> = edges
        .iter()
        .map(|e| active_size_log(index, e.parent, created, window))
        .collect();
    if weights.is_empty() {
        f.extend([0.0; 3]);
        f.extend([0.0; 5]);
    } else {
        let wsum: f64 = weights.iter().sum();
        f.extend([stats.max_parent_weight, mean(&weights), population_std(&weights)]);
        f.extend([
            mean(&sizes),
            sizes.iter().copied().fold(f64::INFINITY, f64::min),
            sizes.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            population_std(&sizes),
            sizes.iter().zip(&weights).map(|(s, w)| s * w / wsum).sum(),
        ]);
    }
    match parent_language_stats(index, child, edges, window, &params.lang)? {
        Some(ls) => f.extend([ls.avg, ls.max, ls.std, 0.0]),
        None => f.extend([f64::NAN, f64::NAN, f64::NAN, 1.0]),
    }
    f.push(stats.fraction_new_users);
    Ok(f)
}

/// A child left out of a dataset, with the reason.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Skipped {
    pub id: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrowthBuild {
    pub dataset: Dataset,
    pub median: usize,
    pub skipped: Vec<Skipped>,
}

/// One row per child, with the median taken over all of `children`.
/// Children failing an integrity or size check are skipped and recorded.
pub fn build_growth_dataset(
    index: &CorpusIndex,
    children: &[CommunityId],
    params: &GrowthParams,
) -> Result<GrowthBuild> {
    let median = empirical_median_size(index, children)?;
    let cols = feature_columns(&params.genealogy.thresholds);
    let mut dataset = Dataset::new(
        cols.iter().map(|(n, _)| n.clone()).collect(),
        cols.iter().map(|(_, f)| f.to_string()).collect(),
    );
    let mut sorted = children.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    let rows: Vec<std::result::Result<Example, Skipped>> = sorted
        .par_iter()
        .map(|&c| {
            let row = || -> Result<Example> {
                let (label, target) = growth_targets(index, c, median, params.base_member)?;
                let (edges, stats) = parent_edges(index, c, params.k, &params.genealogy)?;
                let features = extract_growth_features(index, c, &edges, &stats, params)?;
                Ok(Example {
                    id: index.community_name(c).to_owned(),
                    pair_id: None,
                    features,
                    label,
                    target,
                })
            };
            row().map_err(|e| Skipped {
                id: index.community_name(c).to_owned(),
                reason: e.to_string(),
            })
        })
        .collect();
    let mut skipped = Vec::new();
    for r in rows {
        match r {
            Ok(ex) => dataset.rows.push(ex),
            Err(s) => skipped.push(s),
        }
    }
    Ok(GrowthBuild {
        dataset,
        median,
        skipped,
    })
}
