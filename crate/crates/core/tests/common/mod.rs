#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet, HashMap};

use commgen::ingest::Event;

pub const DAY: i64 = 86_400;
pub const WINDOW: i64 = 30 * DAY;

/// AskThe_Donald with ten members; u1 was recently active in The_Donald, u2
/// in The_Donald and politics, everyone else only long before.
pub fn worked_example_events() -> Vec<Event> {
    let created = 1_460_000_000;
    let mut ev = vec![
        Event::new("old_a", "The_Donald", created - 200 * DAY, "make", "", 5),
        Event::new("old_b", "politics", created - 400 * DAY, "vote", "", 3),
        Event::new("u1", "The_Donald", created - 5 * DAY, "rally", "", 10),
        Event::new("u2", "The_Donald", created - 2 * DAY, "rally", "", 2),
        Event::new("u2", "politics", created - DAY, "debate", "", 7),
        Event::new("u3", "politics", created - 45 * DAY, "debate", "", 1),
        Event::new("u4", "The_Donald", created - 31 * DAY, "old", "", 1),
    ];
    for i in 1..=10 {
        ev.push(Event::new(
            format!("u{i}"),
            "AskThe_Donald",
            created + i64::from(i) * 60,
            "question",
            "",
            1,
        ));
    }
    ev
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BruteEdges {
    pub hits: BTreeMap<String, u32>,
    pub new_users: usize,
}

/// Straight scan over raw events: parents of `child` at `k`.
pub fn brute_genealogy(events: &[Event], child: &str, k: usize, window: i64) -> Option<BruteEdges> {
    let mut created: HashMap<&str, i64> = HashMap::new();
    for e in events {
        let c = created.entry(e.community_id.as_str()).or_insert(i64::MAX);
        *c = (*c).min(e.timestamp);
    }
    let child_created = *created.get(child)?;
    let mut first: HashMap<&str, i64> = HashMap::new();
    for e in events.iter().filter(|e| e.community_id == child) {
        let t = first.entry(e.user_id.as_str()).or_insert(i64::MAX);
        *t = (*t).min(e.timestamp);
    }
    let mut members: Vec<(i64, &str)> = first.into_iter().map(|(u, t)| (t, u)).collect();
    members.sort();
    if members.len() < k {
        return None;
    }
    let mut hits = BTreeMap::new();
    let mut new_users = 0;
    for &(t, u) in &members[..k] {
        let mut set = BTreeSet::new();
        for e in events {
            if e.user_id == u
                && e.timestamp >= t - window
                && e.timestamp < t
                && created[e.community_id.as_str()] < child_created
            {
                set.insert(e.community_id.clone());
            }
        }
        if set.is_empty() {
            new_users += 1;
        }
        for c in set {
            *hits.entry(c).or_insert(0) += 1;
        }
    }
    Some(BruteEdges { hits, new_users })
}

/// Lanczos approximation of ln Γ(x), x > 0.
pub fn ln_gamma(x: f64) -> f64 {
    const G: f64 = 7.0;
    const C: [f64; 9] = [
        0.999_999_999_999_809_9,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut a = C[0];
    let t = x + G + 0.5;
    for (i, c) in C.iter().enumerate().skip(1) {
        a += c / (x + i as f64);
    }
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + a.ln()
}

pub fn t_pdf(x: f64, df: f64) -> f64 {
    let ln_c = ln_gamma((df + 1.0) / 2.0) - ln_gamma(df / 2.0) - 0.5 * (df * std::f64::consts::PI).ln();
    (ln_c - (df + 1.0) / 2.0 * (1.0 + x * x / df).ln()).exp()
}

/// Two-sided tail of Student's t by Simpson integration of the density.
pub fn t_two_sided_simpson(t: f64, df: f64) -> f64 {
    let b = t.abs();
    if b == 0.0 {
        return 1.0;
    }
    let n = 20_000;
    let h = b / n as f64;
    let mut s = t_pdf(0.0, df) + t_pdf(b, df);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        s += w * t_pdf(i as f64 * h, df);
    }
    (1.0 - 2.0 * s * h / 3.0).clamp(0.0, 1.0)
}

fn avg(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn var1(xs: &[f64]) -> f64 {
    let m = avg(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() as f64 - 1.0)
}

/// Welch statistic and two-sided p.
pub fn welch_oracle(a: &[f64], b: &[f64]) -> (f64, f64) {
    let va = var1(a) / a.len() as f64;
    let vb = var1(b) / b.len() as f64;
    let t = (avg(a) - avg(b)) / (va + vb).sqrt();
    let df = (va + vb).powi(2) / (va * va / (a.len() as f64 - 1.0) + vb * vb / (b.len() as f64 - 1.0));
    (t, t_two_sided_simpson(t, df))
}

pub fn pearson_oracle(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let (sx, sy): (f64, f64) = (x.iter().sum(), y.iter().sum());
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
    let sxx: f64 = x.iter().map(|a| a * a).sum();
    let syy: f64 = y.iter().map(|b| b * b).sum();
    let r = (n * sxy - sx * sy) / ((n * sxx - sx * sx).sqrt() * (n * syy - sy * sy).sqrt());
    let t = r * ((n - 2.0) / (1.0 - r * r)).sqrt();
    (r, t_two_sided_simpson(t, n - 2.0))
}

/// Signed-rank statistic and two-sided p by enumerating all sign patterns.
pub fn wilcoxon_enumeration(a: &[f64], b: &[f64]) -> (f64, f64) {
    let d: Vec<f64> = a
        .iter()
        .zip(b)
        .map(|(x, y)| x - y)
        .filter(|v| *v != 0.0)
        .collect();
    let n = d.len();
    let ranks: Vec<f64> = d
        .iter()
        .map(|di| {
            let below = d.iter().filter(|dj| dj.abs() < di.abs()).count() as f64;
            let tied = d.iter().filter(|dj| dj.abs() == di.abs()).count() as f64;
            below + (tied + 1.0) / 2.0
        })
        .collect();
    let w: f64 = d
        .iter()
        .zip(&ranks)
        .filter(|(v, _)| **v > 0.0)
        .map(|(_, r)| r)
        .sum();
    let (mut le, mut ge) = (0u64, 0u64);
    for mask in 0u64..(1 << n) {
        let s: f64 = (0..n).filter(|i| mask >> i & 1 == 1).map(|i| ranks[i]).sum();
        if s <= w + 1e-9 {
            le += 1;
        }
        if s >= w - 1e-9 {
            ge += 1;
        }
    }
    let p = (2.0 * le.min(ge) as f64 / (1u64 << n) as f64).min(1.0);
    (w, p)
}

fn counts<'a>(tokens: &[&'a str]) -> BTreeMap<&'a str, f64> {
    let mut m = BTreeMap::new();
    for t in tokens {
        *m.entry(*t).or_insert(0.0) += 1.0;
    }
    m
}

/// Bits per token of `test` under the smoothed model of `train`.
pub fn cross_entropy_oracle(train: &[&str], test: &[&str], alpha: f64) -> f64 {
    let c = counts(train);
    let z = train.len() as f64 + alpha * (c.len() as f64 + 1.0);
    let mut s = 0.0;
    for t in test {
        let p = (c.get(t).copied().unwrap_or(0.0) + alpha) / z;
        s -= p.log2();
    }
    s / test.len() as f64
}

/// Jensen-Shannon divergence over the joint vocabulary plus the shared
/// unseen outcome.
pub fn js_oracle(a: &[&str], b: &[&str], alpha: f64) -> f64 {
    let (ca, cb) = (counts(a), counts(b));
    let za = a.len() as f64 + alpha * (ca.len() as f64 + 1.0);
    let zb = b.len() as f64 + alpha * (cb.len() as f64 + 1.0);
    let mut outcomes: Vec<(f64, f64)> = Vec::new();
    let vocab: BTreeSet<&str> = ca.keys().chain(cb.keys()).copied().collect();
    for t in vocab {
        let p = ca.get(t).map_or(0.0, |c| (c + alpha) / za);
        let q = cb.get(t).map_or(0.0, |c| (c + alpha) / zb);
        outcomes.push((p, q));
    }
    outcomes.push((alpha / za, alpha / zb));
    let kl = |x: f64, m: f64| if x == 0.0 { 0.0 } else { x * (x / m).log2() };
    outcomes
        .iter()
        .map(|&(p, q)| {
            let m = (p + q) / 2.0;
            0.5 * kl(p, m) + 0.5 * kl(q, m)
        })
        .sum()
}
