//! Event-log parsing and the immutable corpus index.
//!
//! Event files are newline-delimited. The first non-empty line must be the
//! schema header [`EVENTS_HEADER`]; every following line is one post encoded
//! as a JSON array with a fixed field order:
//!
//! ```text
//! #commgen-events v1
//! ["user_id","community_id",1293840000,"title","body text",12]
//! ```
//!
//! Text fields use JSON string escaping, so titles and bodies may contain
//! tabs, quotes and newlines. Lines that fail to decode, or decode to an
//! invalid event, are counted and skipped.

use std::collections::{BTreeSet, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::text::tokenize;

pub const EVENTS_HEADER: &str = "#commgen-events v1";

const CACHE_MAGIC: &[u8; 8] = b"CGINDEX\0";
const CACHE_VERSION: u32 = 1;

/// One post.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Event {
    pub user_id: String,
    pub community_id: String,
    pub timestamp: i64,
    pub title: String,
    pub body: String,
    pub feedback: i64,
}

type Record = (String, String, i64, String, String, i64);

impl Event {
    pub fn new(
        user_id: impl Into<String>,
        community_id: impl Into<String>,
        timestamp: i64,
        title: impl Into<String>,
        body: impl Into<String>,
        feedback: i64,
    ) -> Self {
        Event {
            user_id: user_id.into(),
            community_id: community_id.into(),
            timestamp,
            title: title.into(),
            body: body.into(),
            feedback,
        }
    }

    pub fn is_valid(&self) -> bool {
        self.timestamp > 0 && !self.user_id.is_empty() && !self.community_id.is_empty()
    }

    /// Encodes the event as one record line (without the trailing newline).
    pub fn to_line(&self) -> String {
        let record: (&str, &str, i64, &str, &str, i64) = (
            &self.user_id,
            &self.community_id,
            self.timestamp,
            &self.title,
            &self.body,
            self.feedback,
        );
        serde_json::to_string(&record).expect("tuple of strings and integers always serializes")
    }

    pub fn from_line(line: &str) -> Option<Event> {
        let (user_id, community_id, timestamp, title, body, feedback): Record =
            serde_json::from_str(line).ok()?;
        let event = Event {
            user_id,
            community_id,
            timestamp,
            title,
            body,
            feedback,
        };
        event.is_valid().then_some(event)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParsedEvents {
    pub events: Vec<Event>,
    pub malformed: usize,
}

/// Parses an event stream. Blank lines are ignored; lines that do not decode
/// to a valid [`Event`] are skipped and counted. More than half of the record
/// lines being malformed is treated as a wrong-format input.
pub fn parse_events<R: Read>(reader: R) -> Result<ParsedEvents> {
    let mut lines = Vec::new();
    for line in BufReader::new(reader).lines() {
        let line = line?;
        if !line.trim().is_empty() {
            lines.push(line);
        }
    }
    let mut iter = lines.into_iter();
    match iter.next() {
        Some(header) if header.trim_end() == EVENTS_HEADER => {}
        Some(other) => {
            return Err(Error::Format(format!(
                "expected schema header `{EVENTS_HEADER}`, found `{}`",
                truncate(&other, 60)
            )))
        }
        None => return Err(Error::Format("missing schema header".into())),
    }
    let body: Vec<String> = iter.collect();
    let parsed: Vec<Option<Event>> = body.par_iter().map(|l| Event::from_line(l)).collect();
    let total = parsed.len();
    let events: Vec<Event> = parsed.into_iter().flatten().collect();
    let malformed = total - events.len();
    if malformed * 2 > total {
        return Err(Error::TooManyMalformed { malformed, total });
    }
    Ok(ParsedEvents { events, malformed })
}

pub fn read_events_file(path: &Path) -> Result<ParsedEvents> {
    let file = File::open(path).map_err(|source| Error::IoAt {
        path: path.to_path_buf(),
        source,
    })?;
    parse_events(file)
}

pub fn write_events<W: Write>(mut writer: W, events: &[Event]) -> Result<()> {
    writeln!(writer, "{EVENTS_HEADER}")?;
    for event in events {
        writeln!(writer, "{}", event.to_line())?;
    }
    Ok(())
}

fn truncate(s: &str, n: usize) -> &str {
    match s.char_indices().nth(n) {
        Some((i, _)) => &s[..i],
        None => s,
    }
}

macro_rules! id_type {
    ($name:ident) => {
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
        pub struct $name(pub u32);

        impl $name {
            #[inline]
            pub fn index(self) -> usize {
                self.0 as usize
            }
        }
    };
}

id_type!(UserId);
id_type!(CommunityId);
id_type!(TokenId);
id_type!(PostId);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Post {
    pub user: UserId,
    pub community: CommunityId,
    pub timestamp: i64,
    pub feedback: i64,
    token_start: u32,
    token_end: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Member {
    pub user: UserId,
    pub first_post: i64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommunityInfo {
    pub creation_time: i64,
    pub member_count: usize,
}

/// Queryable view of an event log.
///
/// Identifiers are interned in lexicographic order and posts are stored in a
/// canonical order (timestamp, community, user, text, feedback), so the index
/// does not depend on the order of the input events. Member sequences order
/// users by first post, with same-second ties broken by user id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusIndex {
    users: Vec<String>,
    communities: Vec<String>,
    vocab: Vec<String>,
    posts: Vec<Post>,
    tokens: Vec<TokenId>,
    members: Vec<Vec<Member>>,
    community_posts: Vec<Vec<PostId>>,
    user_posts: Vec<Vec<PostId>>,
    registry: Vec<CommunityInfo>,
    #[serde(skip)]
    user_lookup: HashMap<String, UserId>,
    #[serde(skip)]
    community_lookup: HashMap<String, CommunityId>,
    #[serde(skip)]
    token_lookup: HashMap<String, TokenId>,
}

fn intern<'a>(names: impl Iterator<Item = &'a str>) -> Vec<String> {
    let set: BTreeSet<&str> = names.collect();
    set.into_iter().map(str::to_owned).collect()
}

fn lookup_of<I: Copy>(names: &[String], wrap: impl Fn(u32) -> I) -> HashMap<String, I> {
    names
        .iter()
        .enumerate()
        .map(|(i, n)| (n.clone(), wrap(i as u32)))
        .collect()
}

/// Builds the index from events in any order.
pub fn build_index(events: &[Event]) -> Result<CorpusIndex> {
    if events.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let mut order: Vec<&Event> = events.iter().collect();
    order.par_sort_unstable_by(|a, b| {
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

    let users = intern(order.iter().map(|e| e.user_id.as_str()));
    let communities = intern(order.iter().map(|e| e.community_id.as_str()));
    let user_lookup = lookup_of(&users, UserId);
    let community_lookup = lookup_of(&communities, CommunityId);

    let token_lists: Vec<Vec<String>> = order
        .par_iter()
        .map(|e| tokenize(&e.title).chain(tokenize(&e.body)).collect())
        .collect();
    let vocab = intern(token_lists.iter().flatten().map(String::as_str));
    let token_lookup = lookup_of(&vocab, TokenId);

    let mut posts = Vec::with_capacity(order.len());
    let mut tokens = Vec::new();
    let mut community_posts = vec![Vec::new(); communities.len()];
    let mut user_posts = vec![Vec::new(); users.len()];
    for (i, (event, toks)) in order.iter().zip(&token_lists).enumerate() {
        let user = user_lookup[&event.user_id];
        let community = community_lookup[&event.community_id];
        let token_start = tokens.len() as u32;
        tokens.extend(toks.iter().map(|t| token_lookup[t]));
        posts.push(Post {
            user,
            community,
            timestamp: event.timestamp,
            feedback: event.feedback,
            token_start,
            token_end: tokens.len() as u32,
        });
        let id = PostId(i as u32);
        community_posts[community.index()].push(id);
        user_posts[user.index()].push(id);
    }

    let mut members = Vec::with_capacity(communities.len());
    let mut registry = Vec::with_capacity(communities.len());
    let mut seen = vec![false; users.len()];
    for ids in &community_posts {
        let mut seq = Vec::new();
        for id in ids {
            let post = &posts[id.index()];
            if !std::mem::replace(&mut seen[post.user.index()], true) {
                seq.push(Member {
                    user: post.user,
                    first_post: post.timestamp,
                });
            }
        }
        for m in &seq {
            seen[m.user.index()] = false;
        }
        registry.push(CommunityInfo {
            creation_time: posts[ids[0].index()].timestamp,
            member_count: seq.len(),
        });
        members.push(seq);
    }

    Ok(CorpusIndex {
        users,
        communities,
        vocab,
        posts,
        tokens,
        members,
        community_posts,
        user_posts,
        registry,
        user_lookup,
        community_lookup,
        token_lookup,
    })
}

fn range_by_time(ids: &[PostId], posts: &[Post], t0: i64, t1: i64) -> std::ops::Range<usize> {
    let lo = ids.partition_point(|p| posts[p.index()].timestamp < t0);
    let hi = ids.partition_point(|p| posts[p.index()].timestamp < t1);
    lo..hi.max(lo)
}

impl CorpusIndex {
    pub fn num_users(&self) -> usize {
        self.users.len()
    }

    pub fn num_communities(&self) -> usize {
        self.communities.len()
    }

    pub fn num_posts(&self) -> usize {
        self.posts.len()
    }

    pub fn communities(&self) -> impl Iterator<Item = CommunityId> + '_ {
        (0..self.communities.len() as u32).map(CommunityId)
    }

    pub fn community_id(&self, name: &str) -> Option<CommunityId> {
        self.community_lookup.get(name).copied()
    }

    pub fn require_community(&self, name: &str) -> Result<CommunityId> {
        self.community_id(name)
            .ok_or_else(|| Error::UnknownCommunity(name.to_owned()))
    }

    pub fn community_name(&self, id: CommunityId) -> &str {
        &self.communities[id.index()]
    }

    pub fn user_id(&self, name: &str) -> Option<UserId> {
        self.user_lookup.get(name).copied()
    }

    pub fn user_name(&self, id: UserId) -> &str {
        &self.users[id.index()]
    }

    pub fn token_id(&self, token: &str) -> Option<TokenId> {
        self.token_lookup.get(token).copied()
    }

    pub fn token_str(&self, id: TokenId) -> &str {
        &self.vocab[id.index()]
    }

    pub fn info(&self, c: CommunityId) -> CommunityInfo {
        self.registry[c.index()]
    }

    pub fn creation_time(&self, c: CommunityId) -> i64 {
        self.registry[c.index()].creation_time
    }

    pub fn member_count(&self, c: CommunityId) -> usize {
        self.registry[c.index()].member_count
    }

    /// Members of `c` in joining order.
    pub fn members(&self, c: CommunityId) -> &[Member] {
        &self.members[c.index()]
    }

    pub fn post(&self, id: PostId) -> &Post {
        &self.posts[id.index()]
    }

    pub fn posts(&self) -> &[Post] {
        &self.posts
    }

    pub fn post_tokens(&self, post: &Post) -> &[TokenId] {
        &self.tokens[post.token_start as usize..post.token_end as usize]
    }

    /// All posts of `user`, time-sorted.
    pub fn user_posts(&self, user: UserId) -> &[PostId] {
        &self.user_posts[user.index()]
    }

    /// Posts of `user` with timestamp in `[t0, t1)`.
    pub fn user_posts_between(&self, user: UserId, t0: i64, t1: i64) -> &[PostId] {
        let ids = &self.user_posts[user.index()];
        &ids[range_by_time(ids, &self.posts, t0, t1)]
    }

    /// Posts in community `c` with timestamp in `[t0, t1)`.
    pub fn community_posts_between(&self, c: CommunityId, t0: i64, t1: i64) -> &[PostId] {
        let ids = &self.community_posts[c.index()];
        &ids[range_by_time(ids, &self.posts, t0, t1)]
    }

    pub fn community_posts(&self, c: CommunityId) -> &[PostId] {
        &self.community_posts[c.index()]
    }

    /// Corpus-wide posts with timestamp in `[t0, t1)`.
    pub fn posts_between(&self, t0: i64, t1: i64) -> &[Post] {
        let lo = self.posts.partition_point(|p| p.timestamp < t0);
        let hi = self.posts.partition_point(|p| p.timestamp < t1);
        &self.posts[lo..hi.max(lo)]
    }

    pub fn first_timestamp(&self) -> i64 {
        self.posts[0].timestamp
    }

    pub fn last_timestamp(&self) -> i64 {
        self.posts[self.posts.len() - 1].timestamp
    }

    fn rebuild_lookups(&mut self) {
        self.user_lookup = lookup_of(&self.users, UserId);
        self.community_lookup = lookup_of(&self.communities, CommunityId);
        self.token_lookup = lookup_of(&self.vocab, TokenId);
    }

    pub fn write_cache<W: Write>(&self, mut writer: W) -> Result<()> {
        writer.write_all(CACHE_MAGIC)?;
        writer.write_all(&CACHE_VERSION.to_le_bytes())?;
        bincode::serialize_into(&mut writer, self).map_err(|e| Error::Cache(e.to_string()))?;
        writer.flush()?;
        Ok(())
    }

    pub fn read_cache<R: Read>(mut reader: R) -> Result<CorpusIndex> {
        let mut magic = [0u8; 8];
        reader.read_exact(&mut magic)?;
        if &magic != CACHE_MAGIC {
            return Err(Error::Cache("not an index cache file".into()));
        }
        let mut version = [0u8; 4];
        reader.read_exact(&mut version)?;
        let version = u32::from_le_bytes(version);
        if version != CACHE_VERSION {
            return Err(Error::Cache(format!(
                "cache format version {version}, expected {CACHE_VERSION}"
            )));
        }
        let mut index: CorpusIndex =
            bincode::deserialize_from(reader).map_err(|e| Error::Cache(e.to_string()))?;
        index.rebuild_lookups();
        Ok(index)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|source| Error::IoAt {
            path: path.to_path_buf(),
            source,
        })?;
        self.write_cache(BufWriter::new(file))
    }

    pub fn load(path: &Path) -> Result<CorpusIndex> {
        let file = File::open(path).map_err(|source| Error::IoAt {
            path: path.to_path_buf(),
            source,
        })?;
        Self::read_cache(BufReader::new(file))
    }
}

/// 2008-01-01T00:00:00Z, when user-created communities became possible.
pub const DEFAULT_CREATED_AFTER: i64 = 1_199_145_600;
/// Margin left after the newest eligible child so it can accumulate members.
pub const DEFAULT_ACCUMULATION_MARGIN: i64 = 90 * 86_400;
pub const DEFAULT_MIN_MEMBERS: usize = 100;

/// Which communities are studied as children.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Eligibility {
    pub min_members: usize,
    pub created_after: i64,
    pub created_until: i64,
}

impl Eligibility {
    /// Default thresholds, with the creation window ending three months
    /// before the last event in `index`.
    pub fn for_index(index: &CorpusIndex) -> Self {
        Eligibility {
            min_members: DEFAULT_MIN_MEMBERS,
            created_after: DEFAULT_CREATED_AFTER,
            created_until: index.last_timestamp() - DEFAULT_ACCUMULATION_MARGIN,
        }
    }

    pub fn children(&self, index: &CorpusIndex) -> Result<Vec<CommunityId>> {
        eligible_children(index, self.min_members, self.created_after, self.created_until)
    }
}

/// Communities with strictly more than `min_members` members created in
/// `(created_after, created_until]`, in id order.
pub fn eligible_children(
    index: &CorpusIndex,
    min_members: usize,
    created_after: i64,
    created_until: i64,
) -> Result<Vec<CommunityId>> {
    if min_members < 1 {
        return Err(Error::InvalidArgument("min_members must be at least 1".into()));
    }
    if created_after >= created_until {
        return Err(Error::InvalidRange(format!(
            "created_after {created_after} must precede created_until {created_until}"
        )));
    }
    Ok(index
        .communities()
        .filter(|&c| {
            let info = index.info(c);
            info.member_count > min_members
                && info.creation_time > created_after
                && info.creation_time <= created_until
        })
        .collect())
}
