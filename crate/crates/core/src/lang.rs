//! Smoothed unigram language models and the distances built on them.

use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::genealogy::GenealogyEdge;
use crate::ingest::{CommunityId, CorpusIndex, Post, TokenId};

pub const DEFAULT_ALPHA: f64 = 0.01;
pub const DEFAULT_MIN_UNIQUE_MEMBERS: usize = 100;
pub const DEFAULT_TOP_PARENTS: usize = 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LangParams {
    /// Additive smoothing mass per vocabulary entry.
    pub alpha: f64,
    /// Minimum distinct posters for a community LM to exist.
    pub min_unique_members: usize,
    /// Parents considered for pairwise distances.
    pub top_parents: usize,
}

impl Default for LangParams {
    fn default() -> Self {
        LangParams {
            alpha: DEFAULT_ALPHA,
            min_unique_members: DEFAULT_MIN_UNIQUE_MEMBERS,
            top_parents: DEFAULT_TOP_PARENTS,
        }
    }
}

/// Additively smoothed unigram model with one shared bucket for unseen
/// tokens: `p(t) = (count(t) + alpha) / (total + alpha * (V + 1))`.
#[derive(Debug, Clone, PartialEq)]
pub struct UnigramLm<T: Ord> {
    counts: BTreeMap<T, u64>,
    total: u64,
    alpha: f64,
}

impl<T: Ord + Clone> UnigramLm<T> {
    pub fn build(tokens: impl IntoIterator<Item = T>, alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "smoothing mass must be positive, got {alpha}"
            )));
        }
        let mut counts = BTreeMap::new();
        let mut total = 0;
        for t in tokens {
            *counts.entry(t).or_insert(0) += 1;
            total += 1;
        }
        Ok(UnigramLm { counts, total, alpha })
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn vocabulary_size(&self) -> usize {
        self.counts.len()
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn count(&self, token: &T) -> u64 {
        self.counts.get(token).copied().unwrap_or(0)
    }

    fn normalizer(&self) -> f64 {
        self.total as f64 + self.alpha * (self.counts.len() + 1) as f64
    }

    pub fn prob(&self, token: &T) -> f64 {
        match self.counts.get(token) {
            Some(&c) => (c as f64 + self.alpha) / self.normalizer(),
            None => self.unseen_prob(),
        }
    }

    pub fn unseen_prob(&self) -> f64 {
        self.alpha / self.normalizer()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&T, u64)> {
        self.counts.iter().map(|(t, &c)| (t, c))
    }

    /// Mean negative log2-probability of `tokens`, in bits per token.
    pub fn cross_entropy<'a>(&self, tokens: impl IntoIterator<Item = &'a T>) -> Result<f64>
    where
        T: 'a,
    {
        let z = self.normalizer().log2();
        let mut n = 0usize;
        let mut sum = 0.0;
        for t in tokens {
            let c = self.counts.get(t).map_or(0.0, |&c| c as f64);
            sum += z - (c + self.alpha).log2();
            n += 1;
        }
        if n == 0 {
            return Err(Error::UndefinedInput(
                "cross entropy of an empty token sequence".into(),
            ));
        }
        Ok(sum / n as f64)
    }

    /// Tokens by decreasing count.
    pub fn top_tokens(&self, n: usize) -> Vec<(T, u64)> {
        let mut all: Vec<(T, u64)> = self.counts.iter().map(|(t, &c)| (t.clone(), c)).collect();
        all.sort_unstable_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        all.truncate(n);
        all
    }
}

fn js_term(p: f64, m: f64) -> f64 {
    if p > 0.0 {
        p * (p / m).log2()
    } else {
        0.0
    }
}

/// Base-2 Jensen-Shannon divergence between two models.
///
/// Both models are viewed as distributions over the union of their observed
/// vocabularies plus one shared "other" outcome carrying each model's unseen
/// mass; a token outside a model's vocabulary gets probability zero there.
pub fn lm_distance<T: Ord + Clone>(a: &UnigramLm<T>, b: &UnigramLm<T>) -> f64 {
    let (za, zb) = (a.normalizer(), b.normalizer());
    let mut js = 0.0;
    let mut pair = |p: f64, q: f64| {
        let m = 0.5 * (p + q);
        js += 0.5 * (js_term(p, m) + js_term(q, m));
    };
    for (t, &ca) in &a.counts {
        let p = (ca as f64 + a.alpha) / za;
        let q = b.counts.get(t).map_or(0.0, |&cb| (cb as f64 + b.alpha) / zb);
        pair(p, q);
    }
    for (t, &cb) in &b.counts {
        if !a.counts.contains_key(t) {
            pair(0.0, (cb as f64 + b.alpha) / zb);
        }
    }
    pair(a.alpha / za, b.alpha / zb);
    js.clamp(0.0, 1.0)
}

fn unique_posters(posts: impl Iterator<Item = Post>) -> usize {
    posts.map(|p| p.user).collect::<HashSet<_>>().len()
}

/// Language model of a community over `[t0, t1)`, or `None` when fewer than
/// `min_unique_members` distinct users posted there in that interval.
pub fn community_interval_lm(
    index: &CorpusIndex,
    community: CommunityId,
    t0: i64,
    t1: i64,
    min_unique_members: usize,
    alpha: f64,
) -> Result<Option<UnigramLm<TokenId>>> {
    if t0 >= t1 {
        return Err(Error::InvalidRange(format!("empty interval [{t0}, {t1})")));
    }
    let ids = index.community_posts_between(community, t0, t1);
    if unique_posters(ids.iter().map(|&p| *index.post(p))) < min_unique_members {
        return Ok(None);
    }
    let tokens = ids
        .iter()
        .flat_map(|&p| index.post_tokens(index.post(p)).iter().copied());
    UnigramLm::build(tokens, alpha).map(Some)
}

/// Whole-corpus language model over `[t0, t1)`.
pub fn global_interval_lm(index: &CorpusIndex, t0: i64, t1: i64, alpha: f64) -> Result<UnigramLm<TokenId>> {
    if t0 >= t1 {
        return Err(Error::InvalidRange(format!("empty interval [{t0}, {t1})")));
    }
    let tokens = index
        .posts_between(t0, t1)
        .iter()
        .flat_map(|p| index.post_tokens(p).iter().copied());
    UnigramLm::build(tokens, alpha)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LangStats {
    pub avg: f64,
    pub max: f64,
    /// Population standard deviation of the pairwise distances.
    pub std: f64,
    pub parents_used: usize,
}

/// Pairwise distances between the language models of the highest-weight
/// parents of `child`, over the window before its creation.
///
/// Parents are ranked by weight (ties by id); parents without a model are
/// passed over, and at most `top_parents` models are used. `None` when fewer
/// than two parents have a model.
pub fn parent_language_stats(
    index: &CorpusIndex,
    child: CommunityId,
    edges: &[GenealogyEdge],
    window: i64,
    params: &LangParams,
) -> Result<Option<LangStats>> {
    let created = index.creation_time(child);
    let mut ranked: Vec<&GenealogyEdge> = edges.iter().filter(|e| e.child == child).collect();
    ranked.sort_by(|a, b| b.hits.cmp(&a.hits).then(a.parent.cmp(&b.parent)));
    let mut lms = Vec::new();
    for e in ranked {
        if lms.len() == params.top_parents {
            break;
        }
        if let Some(lm) = community_interval_lm(
            index,
            e.parent,
            created - window,
            created,
            params.min_unique_members,
            params.alpha,
        )? {
            lms.push(lm);
        }
    }
    Ok(pairwise_stats(&lms))
}

pub(crate) fn pairwise_stats<T: Ord + Clone>(lms: &[UnigramLm<T>]) -> Option<LangStats> {
    if lms.len() < 2 {
        return None;
    }
    let mut d = Vec::new();
    for i in 0..lms.len() {
        for j in i + 1..lms.len() {
            d.push(lm_distance(&lms[i], &lms[j]));
        }
    }
    let n = d.len() as f64;
    let avg = d.iter().sum::<f64>() / n;
    let max = d.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let std = (d.iter().map(|x| (x - avg).powi(2)).sum::<f64>() / n).sqrt();
    Some(LangStats {
        avg,
        max,
        std,
        parents_used: lms.len(),
    })
}
