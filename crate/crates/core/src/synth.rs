//! Deterministic synthetic corpora with planted genealogy.
//!
//! Every community is created by its first early member. Early members are
//! fresh users whose only activity before joining is a handful of posts in
//! their assigned origin communities inside the recency window, so the
//! genealogy the pipeline should recover is known exactly from bookkeeping.
//!
//! The timeline guarantees that planted posts never disturb another
//! community's early phase: an origin must have finished admitting its early
//! members before the child's recency window opens.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::genealogy::{DAY, DEFAULT_WINDOW};
use crate::ingest::Event;

/// 2010-01-01T00:00:00Z.
pub const DEFAULT_START: i64 = 1_262_304_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommunityPlan {
    pub id: String,
    pub creation_time: i64,
    /// Final member count to aim for; the realized size can be larger when
    /// planted activity from children adds members.
    pub target_size: usize,
    /// Planted parents and the fraction of early members drawn from each.
    pub parents: Vec<(String, f64)>,
    pub new_user_fraction: f64,
    /// Seconds between joins of late single-post members.
    pub growth_gap: i64,
    /// Long-lived members posting steadily after the early phase.
    pub regulars: usize,
    pub topic: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub seed: u64,
    pub window: i64,
    /// Early members per community whose history is planted.
    pub early_members: usize,
    /// Seconds between consecutive early-member joins.
    pub early_gap: i64,
    pub communities: Vec<CommunityPlan>,
    /// Chance that an early member with history is also active in one more
    /// earlier community.
    pub extra_origin_prob: f64,
    /// Inclusive range of posts per origin inside a member's window.
    pub origin_posts: (usize, usize),
    /// Inclusive range of posts per window for regulars.
    pub regular_rate: (usize, usize),
    pub end_time: i64,
    pub tokens_per_post: (usize, usize),
    pub common_tokens: Vec<String>,
    pub common_token_prob: f64,
}

impl SynthConfig {
    /// Length of a community's early phase.
    pub fn early_phase(&self) -> i64 {
        self.early_members as i64 * self.early_gap
    }

    /// Whether `origin` may carry planted activity for `child`.
    fn can_feed(&self, origin: &CommunityPlan, child: &CommunityPlan) -> bool {
        origin.id != child.id
            && origin.creation_time + self.early_phase() <= child.creation_time - self.window
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.window <= 0 || self.early_gap <= 0 || self.early_members == 0 {
            return bad("window, early gap and early member count must be positive".into());
        }
        if self.origin_posts.0 == 0 || self.origin_posts.0 > self.origin_posts.1 {
            return bad("origin post range must be non-empty and start at 1 or more".into());
        }
        if self.regular_rate.0 > self.regular_rate.1 || self.tokens_per_post.0 > self.tokens_per_post.1 {
            return bad("empty rate range".into());
        }
        let by_id: BTreeMap<&str, &CommunityPlan> =
            self.communities.iter().map(|c| (c.id.as_str(), c)).collect();
        if by_id.len() != self.communities.len() {
            return bad("duplicate community id".into());
        }
        for c in &self.communities {
            if c.id.is_empty() || c.topic.is_empty() {
                return bad(format!("community `{}` needs an id and a topic", c.id));
            }
            if c.creation_time <= 0 || c.creation_time + self.early_phase() > self.end_time {
                return bad(format!("community `{}` does not fit the timeline", c.id));
            }
            if c.target_size < self.early_members {
                return bad(format!(
                    "community `{}` target size below the early member count",
                    c.id
                ));
            }
            if !(0.0..=1.0).contains(&c.new_user_fraction) {
                return bad(format!("community `{}` new-user fraction outside [0, 1]", c.id));
            }
            let mut total = c.new_user_fraction;
            let mut quota = quota_of(c.new_user_fraction, self.early_members);
            let mut seen = BTreeSet::new();
            for (p, w) in &c.parents {
                if !(*w > 0.0 && *w <= 1.0) {
                    return bad(format!("weight {w} of {p} -> {} outside (0, 1]", c.id));
                }
                if !seen.insert(p) {
                    return bad(format!("parent `{p}` listed twice for `{}`", c.id));
                }
                let Some(parent) = by_id.get(p.as_str()) else {
                    return bad(format!("unknown parent `{p}` of `{}`", c.id));
                };
                if !self.can_feed(parent, c) {
                    return bad(format!(
                        "parent `{p}` must finish its early phase before the window of `{}` opens",
                        c.id
                    ));
                }
                total += w;
                quota += quota_of(*w, self.early_members);
            }
            if total > 1.0 + 1e-9 || quota > self.early_members {
                return bad(format!(
                    "planted weights plus new-user fraction exceed 1 for `{}`",
                    c.id
                ));
            }
        }
        Ok(())
    }
}

fn quota_of(fraction: f64, k: usize) -> usize {
    (fraction * k as f64).round() as usize
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlantedMember {
    pub user: String,
    pub join_time: i64,
    /// Earlier communities this member was active in before joining.
    pub origins: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthCommunity {
    pub id: String,
    pub creation_time: i64,
    pub early_members: Vec<PlantedMember>,
    pub size: usize,
}

/// What the generator planted, recorded member by member.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub seed: u64,
    pub window: i64,
    pub communities: Vec<TruthCommunity>,
}

/// Planted genealogy of one child at a given `k`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TruthEdges {
    /// Parent id to number of the first `k` members active there.
    pub hits: BTreeMap<String, u32>,
    pub new_users: usize,
}

impl GroundTruth {
    pub fn community(&self, id: &str) -> Option<&TruthCommunity> {
        self.communities.iter().find(|c| c.id == id)
    }

    /// Planted edges for every community with at least `k` planted members.
    pub fn edges_at(&self, k: usize) -> BTreeMap<String, TruthEdges> {
        self.communities
            .iter()
            .filter(|c| c.early_members.len() >= k && k > 0)
            .map(|c| {
                let mut hits = BTreeMap::new();
                let mut new_users = 0;
                for m in &c.early_members[..k] {
                    if m.origins.is_empty() {
                        new_users += 1;
                    }
                    for o in &m.origins {
                        *hits.entry(o.clone()).or_insert(0) += 1;
                    }
                }
                (c.id.clone(), TruthEdges { hits, new_users })
            })
            .collect()
    }
}

struct Builder<'a> {
    cfg: &'a SynthConfig,
    rng: ChaCha8Rng,
    events: Vec<Event>,
    next_user: usize,
}

impl Builder<'_> {
    fn fresh_user(&mut self) -> String {
        self.next_user += 1;
        format!("u{:06}", self.next_user)
    }

    fn range(&mut self, (lo, hi): (usize, usize)) -> usize {
        self.rng.gen_range(lo..=hi)
    }

    fn post(&mut self, user: &str, plan: &CommunityPlan, t: i64) {
        let n = self.range(self.cfg.tokens_per_post);
        let mut words = Vec::with_capacity(n);
        for _ in 0..n {
            let common = !self.cfg.common_tokens.is_empty() && self.rng.gen_bool(self.cfg.common_token_prob);
            let pool = if common {
                &self.cfg.common_tokens
            } else {
                &plan.topic
            };
            words.push(pool[self.rng.gen_range(0..pool.len())].clone());
        }
        let split = words.len().min(3);
        let title = words[..split].join(" ");
        let body = words[split..].join(" ");
        let feedback = self.rng.gen_range(-3..=20);
        self.events
            .push(Event::new(user, plan.id.as_str(), t, title, body, feedback));
    }
}

/// Generates the event stream and the bookkept genealogy for `cfg`.
pub fn generate_corpus(cfg: &SynthConfig) -> Result<(Vec<Event>, GroundTruth)> {
    cfg.validate()?;
    let mut plans: Vec<&CommunityPlan> = cfg.communities.iter().collect();
    plans.sort_by(|a, b| (a.creation_time, &a.id).cmp(&(b.creation_time, &b.id)));
    let mut b = Builder {
        cfg,
        rng: ChaCha8Rng::seed_from_u64(cfg.seed),
        events: Vec::new(),
        next_user: 0,
    };
    let k = cfg.early_members;
    let by_id: BTreeMap<&str, &CommunityPlan> = plans.iter().map(|c| (c.id.as_str(), *c)).collect();
    let mut planters: BTreeMap<&str, BTreeSet<String>> = BTreeMap::new();
    let mut truth = Vec::with_capacity(plans.len());

    for plan in &plans {
        let feeders: Vec<&str> = plans
            .iter()
            .filter(|o| cfg.can_feed(o, plan))
            .map(|o| o.id.as_str())
            .collect();
        let planted: BTreeSet<&str> = plan.parents.iter().map(|(p, _)| p.as_str()).collect();
        let drift_pool: Vec<&str> = feeders.iter().copied().filter(|f| !planted.contains(f)).collect();

        // One origin list per early-member slot, filled by exact quota.
        let mut slots: Vec<Option<BTreeSet<&str>>> = Vec::with_capacity(k);
        for (p, w) in &plan.parents {
            for _ in 0..quota_of(*w, k) {
                slots.push(Some([p.as_str()].into_iter().collect()));
            }
        }
        for _ in 0..quota_of(plan.new_user_fraction, k) {
            slots.push(None);
        }
        while slots.len() < k {
            let pool = if drift_pool.is_empty() {
                &feeders
            } else {
                &drift_pool
            };
            if pool.is_empty() {
                slots.push(None);
            } else {
                let o = pool[b.rng.gen_range(0..pool.len())];
                slots.push(Some([o].into_iter().collect()));
            }
        }
        for slot in slots.iter_mut().flatten() {
            if b.rng.gen_bool(cfg.extra_origin_prob) {
                let spare: Vec<&str> = feeders.iter().copied().filter(|f| !slot.contains(f)).collect();
                if !spare.is_empty() {
                    slot.insert(spare[b.rng.gen_range(0..spare.len())]);
                }
            }
        }
        slots.shuffle(&mut b.rng);

        let mut members = Vec::with_capacity(k);
        for (r, slot) in slots.into_iter().enumerate() {
            let user = b.fresh_user();
            let join = plan.creation_time + r as i64 * cfg.early_gap;
            let origins: Vec<String> = match slot {
                Some(set) => set.into_iter().map(str::to_owned).collect(),
                None => Vec::new(),
            };
            for o in &origins {
                let n = b.range(cfg.origin_posts);
                for _ in 0..n {
                    let delta = b.rng.gen_range(1..=cfg.window);
                    b.post(&user, by_id[o.as_str()], join - delta);
                }
                planters
                    .entry(by_id[o.as_str()].id.as_str())
                    .or_default()
                    .insert(user.clone());
            }
            b.post(&user, plan, join);
            members.push(PlantedMember {
                user,
                join_time: join,
                origins,
            });
        }
        truth.push(TruthCommunity {
            id: plan.id.clone(),
            creation_time: plan.creation_time,
            early_members: members,
            size: 0,
        });
    }

    for (plan, tc) in plans.iter().zip(truth.iter_mut()) {
        let late_start = plan.creation_time + cfg.early_phase();
        for _ in 0..plan.regulars {
            let user = b.fresh_user();
            let join = late_start + b.rng.gen_range(0..cfg.window);
            b.post(&user, plan, join);
            let mut period = join;
            while period < cfg.end_time {
                let n = b.range(cfg.regular_rate);
                let hi = (period + cfg.window).min(cfg.end_time);
                for _ in 0..n {
                    let t = b.rng.gen_range(period..hi).max(join + 1);
                    b.post(&user, plan, t);
                }
                period += cfg.window;
            }
        }
        let planted_in = planters.get(plan.id.as_str()).map_or(0, BTreeSet::len);
        let so_far = k + plan.regulars + planted_in;
        let fillers = plan.target_size.saturating_sub(so_far);
        for i in 0..fillers {
            let user = b.fresh_user();
            let t = late_start + i as i64 * plan.growth_gap;
            b.post(&user, plan, t);
        }
        tc.size = so_far + fillers;
    }

    let mut events = b.events;
    events.sort_by(|a, b| {
        (
            a.timestamp,
            &a.community_id,
            &a.user_id,
            &a.title,
            &a.body,
            a.feedback,
        )
            .cmp(&(
                b.timestamp,
                &b.community_id,
                &b.user_id,
                &b.title,
                &b.body,
                b.feedback,
            ))
    });
    Ok((
        events,
        GroundTruth {
            seed: cfg.seed,
            window: cfg.window,
            communities: truth,
        },
    ))
}

fn topic_for(i: usize, n: usize) -> Vec<String> {
    (0..n).map(|j| format!("topic{i}w{j}")).collect()
}

fn common_tokens() -> Vec<String> {
    ["the", "a", "and", "of", "to", "is"]
        .iter()
        .map(|s| s.to_string())
        .collect()
}

fn base_config(seed: u64, early_members: usize) -> SynthConfig {
    SynthConfig {
        seed,
        window: DEFAULT_WINDOW,
        early_members,
        early_gap: 3600,
        communities: Vec::new(),
        extra_origin_prob: 0.0,
        origin_posts: (1, 3),
        regular_rate: (1, 4),
        end_time: DEFAULT_START,
        tokens_per_post: (3, 8),
        common_tokens: common_tokens(),
        common_token_prob: 0.3,
    }
}

/// Random planted plan of `n` communities, used for oracle comparisons.
pub fn random_plan(seed: u64, n: usize, early_members: usize) -> SynthConfig {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    let mut cfg = base_config(seed, early_members);
    cfg.extra_origin_prob = 0.3;
    cfg.regular_rate = (1, 2);
    let mut t = DEFAULT_START;
    for i in 0..n {
        let id = format!("c{i:02}");
        let feeders: Vec<String> = cfg
            .communities
            .iter()
            .filter(|o| o.creation_time + cfg.early_phase() <= t - cfg.window)
            .map(|o| o.id.clone())
            .collect();
        let new_user_fraction = f64::from(rng.gen_range(0..=3u8)) / 10.0;
        let mut parents = Vec::new();
        let mut budget = 1.0 - new_user_fraction;
        let mut seats = early_members.saturating_sub(quota_of(new_user_fraction, early_members));
        let mut pool = feeders.clone();
        pool.shuffle(&mut rng);
        for p in pool.into_iter().take(rng.gen_range(0..=3)) {
            let w = f64::from(rng.gen_range(1..=4u8)) / 10.0;
            let q = quota_of(w, early_members);
            if w <= budget + 1e-9 && q <= seats {
                budget -= w;
                seats -= q;
                parents.push((p, w));
            }
        }
        cfg.communities.push(CommunityPlan {
            id,
            creation_time: t,
            target_size: early_members + rng.gen_range(0..8),
            parents,
            new_user_fraction,
            growth_gap: 3 * 3600,
            regulars: rng.gen_range(0..=2),
            topic: topic_for(i, 6),
        });
        t += rng.gen_range(5..=20) * DAY;
    }
    cfg.end_time = t + 30 * DAY;
    cfg
}

/// Growth scenario: half the children have one dominant parent and grow past
/// the median size quickly; the other half spread thinly over several parents
/// and stay small.
pub fn growth_scenario(seed: u64, children: usize, early_members: usize, min_members: usize) -> SynthConfig {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x51ed_270b_2f5a_a1c3);
    let mut cfg = base_config(seed, early_members);
    cfg.extra_origin_prob = 0.1;
    let roots = 12;
    for i in 0..roots {
        cfg.communities.push(CommunityPlan {
            id: format!("root{i:02}"),
            creation_time: DEFAULT_START + i as i64 * DAY,
            target_size: early_members + 6,
            parents: Vec::new(),
            new_user_fraction: 1.0,
            growth_gap: 3600,
            regulars: 6,
            topic: topic_for(i, 10),
        });
    }
    let first = DEFAULT_START + roots as i64 * DAY + cfg.early_phase() + cfg.window;
    let mut strong: Vec<bool> = (0..children).map(|i| i < children / 2).collect();
    strong.shuffle(&mut rng);
    let step = 12 * 3600;
    for (i, &is_strong) in strong.iter().enumerate() {
        let mut root_ids: Vec<String> = (0..roots).map(|r| format!("root{r:02}")).collect();
        root_ids.shuffle(&mut rng);
        let (parents, target_size, growth_gap) = if is_strong {
            let w = f64::from(rng.gen_range(4..=6u8)) / 10.0;
            let mut parents = vec![(root_ids[0].clone(), w)];
            if rng.gen_bool(0.5) {
                parents.push((root_ids[1].clone(), 0.1));
            }
            let gap = ((1.2 - w) * 8.0 * 3600.0) as i64 + rng.gen_range(0..3600);
            (parents, min_members + rng.gen_range(20..=40), gap)
        } else {
            let n = rng.gen_range(2..=5);
            let parents = root_ids[..n]
                .iter()
                .map(|r| (r.clone(), if rng.gen_bool(0.3) { 0.2 } else { 0.1 }))
                .collect::<Vec<_>>();
            (parents, min_members + rng.gen_range(1..=10), 12 * 3600)
        };
        let used: f64 = parents.iter().map(|(_, w)| w).sum();
        cfg.communities.push(CommunityPlan {
            id: format!("child{i:03}"),
            creation_time: first + i as i64 * step,
            target_size,
            parents,
            new_user_fraction: ((1.0 - used) * 10.0).round() / 10.0,
            growth_gap,
            regulars: 2,
            topic: topic_for(roots + i, 6),
        });
    }
    cfg.end_time = first + children as i64 * step + 120 * DAY;
    cfg
}

/// Early-member scenario: early members arrive from several communities at
/// once while the regulars of every community stay put.
pub fn early_member_scenario(seed: u64, children: usize, early_members: usize) -> SynthConfig {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x2545_f491_4f6c_dd1d);
    let mut cfg = base_config(seed, early_members);
    cfg.extra_origin_prob = 0.85;
    cfg.origin_posts = (1, 4);
    cfg.regular_rate = (1, 6);
    let roots = 10;
    for i in 0..roots {
        cfg.communities.push(CommunityPlan {
            id: format!("root{i:02}"),
            creation_time: DEFAULT_START + i as i64 * DAY,
            target_size: early_members + 10,
            parents: Vec::new(),
            new_user_fraction: 1.0,
            growth_gap: 3600,
            regulars: 10,
            topic: topic_for(i, 10),
        });
    }
    let first = DEFAULT_START + roots as i64 * DAY + cfg.early_phase() + cfg.window;
    for i in 0..children {
        let mut root_ids: Vec<String> = (0..roots).map(|r| format!("root{r:02}")).collect();
        root_ids.shuffle(&mut rng);
        let parents = vec![(root_ids[0].clone(), 0.4), (root_ids[1].clone(), 0.3)];
        cfg.communities.push(CommunityPlan {
            id: format!("child{i:03}"),
            creation_time: first + i as i64 * 2 * DAY,
            target_size: early_members * 3,
            parents,
            new_user_fraction: 0.1,
            growth_gap: 2 * 3600,
            regulars: 2,
            topic: topic_for(roots + i, 6),
        });
    }
    cfg.end_time = first + children as i64 * 2 * DAY + 120 * DAY;
    cfg
}

/// Two eras of children: the first with two parents at 0.3, the second with
/// five parents at 0.1, each era spanning `era_len` seconds.
pub fn two_era_scenario(seed: u64, per_era: usize, early_members: usize, era_len: i64) -> SynthConfig {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x1405_7b7e_f767_814f);
    let mut cfg = base_config(seed, early_members);
    let roots = 8;
    for i in 0..roots {
        cfg.communities.push(CommunityPlan {
            id: format!("root{i:02}"),
            creation_time: DEFAULT_START + i as i64 * DAY,
            target_size: early_members + 2,
            parents: Vec::new(),
            new_user_fraction: 1.0,
            growth_gap: 3600,
            regulars: 1,
            topic: topic_for(i, 6),
        });
    }
    let start = DEFAULT_START + roots as i64 * DAY + cfg.early_phase() + cfg.window;
    let era_start = start - start.rem_euclid(era_len) + era_len;
    let step = era_len / per_era as i64;
    for era in 0..2 {
        for i in 0..per_era {
            let mut root_ids: Vec<String> = (0..roots).map(|r| format!("root{r:02}")).collect();
            root_ids.shuffle(&mut rng);
            let (n, w, f) = if era == 0 { (2, 0.3, 0.4) } else { (5, 0.1, 0.5) };
            cfg.communities.push(CommunityPlan {
                id: format!("era{era}child{i:03}"),
                creation_time: era_start + era as i64 * era_len + i as i64 * step,
                target_size: early_members + 2,
                parents: root_ids[..n].iter().map(|r| (r.clone(), w)).collect(),
                new_user_fraction: f,
                growth_gap: 3600,
                regulars: 0,
                topic: topic_for(roots + era * per_era + i, 6),
            });
        }
    }
    cfg.end_time = era_start + 2 * era_len + 30 * DAY;
    cfg
}
