//! Significance tests and summary statistics.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal, StudentsT};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Direction {
    Positive,
    Negative,
    Zero,
}

impl Direction {
    fn of(x: f64) -> Self {
        if x > 0.0 {
            Direction::Positive
        } else if x < 0.0 {
            Direction::Negative
        } else {
            Direction::Zero
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub statistic: f64,
    pub p_value: f64,
    /// Bonferroni-corrected p; equals `p_value` until a correction is applied.
    pub corrected_p: f64,
    pub direction: Direction,
}

impl TestResult {
    fn new(statistic: f64, p_value: f64, direction: Direction) -> Self {
        let p_value = p_value.clamp(0.0, 1.0);
        TestResult {
            statistic,
            p_value,
            corrected_p: p_value,
            direction,
        }
    }

    pub fn with_bonferroni(mut self, m: usize) -> Result<Self> {
        self.corrected_p = bonferroni(&[self.p_value], m)?[0];
        Ok(self)
    }

    /// Arrow rendering of the corrected p-value, as in significance tables.
    pub fn arrows(&self) -> String {
        significance_arrows(self.corrected_p, self.direction)
    }
}

pub fn significance_arrows(p: f64, direction: Direction) -> String {
    let n = if p < 0.0001 {
        4
    } else if p < 0.001 {
        3
    } else if p < 0.01 {
        2
    } else if p < 0.05 {
        1
    } else {
        0
    };
    match (n, direction) {
        (0, _) | (_, Direction::Zero) => "------".to_owned(),
        (n, Direction::Positive) => "↑".repeat(n),
        (n, Direction::Negative) => "↓".repeat(n),
    }
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased (n - 1) sample variance.
pub fn sample_variance(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64
}

/// Population (n) standard deviation.
pub fn population_std(xs: &[f64]) -> f64 {
    let m = mean(xs);
    (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / xs.len() as f64).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    /// Sample standard deviation over `sqrt(n)`; zero when `n == 1`.
    pub se: f64,
    pub n: usize,
}

pub fn summarize(values: &[f64]) -> Summary {
    let n = values.len();
    match n {
        0 => Summary {
            mean: f64::NAN,
            se: f64::NAN,
            n,
        },
        1 => Summary {
            mean: values[0],
            se: 0.0,
            n,
        },
        _ => Summary {
            mean: mean(values),
            se: (sample_variance(values) / n as f64).sqrt(),
            n,
        },
    }
}

fn t_two_sided(t: f64, df: f64) -> f64 {
    let dist = StudentsT::new(0.0, 1.0, df).expect("positive degrees of freedom");
    2.0 * dist.sf(t.abs())
}

/// Welch's unequal-variance two-sample t-test, two-sided.
pub fn t_test(a: &[f64], b: &[f64]) -> Result<TestResult> {
    if a.len() < 2 || b.len() < 2 {
        return Err(Error::InvalidArgument(
            "t-test needs at least two values per sample".into(),
        ));
    }
    if a.iter().chain(b).any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("t-test sample".into()));
    }
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let diff = mean(a) - mean(b);
    let (sa, sb) = (sample_variance(a) / na, sample_variance(b) / nb);
    let se2 = sa + sb;
    if se2 == 0.0 {
        return Ok(if diff == 0.0 {
            TestResult::new(0.0, 1.0, Direction::Zero)
        } else {
            TestResult::new(diff.signum() * f64::INFINITY, 0.0, Direction::of(diff))
        });
    }
    let t = diff / se2.sqrt();
    let df = se2 * se2 / (sa * sa / (na - 1.0) + sb * sb / (nb - 1.0));
    Ok(TestResult::new(t, t_two_sided(t, df), Direction::of(t)))
}

/// Pearson correlation with a two-sided p-value from the t transform on
/// `n - 2` degrees of freedom. The statistic is `r`.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<TestResult> {
    if x.len() != y.len() {
        return Err(Error::InvalidArgument("samples differ in length".into()));
    }
    if x.len() < 3 {
        return Err(Error::InvalidArgument(
            "correlation needs at least three pairs".into(),
        ));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("correlation sample".into()));
    }
    let (mx, my) = (mean(x), mean(y));
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::UndefinedInput(
            "correlation with a zero-variance sample".into(),
        ));
    }
    let r = (sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0);
    let n = x.len() as f64;
    let p = if r.abs() == 1.0 {
        0.0
    } else {
        let t = r * ((n - 2.0) / (1.0 - r * r)).sqrt();
        t_two_sided(t, n - 2.0)
    };
    Ok(TestResult::new(r, p, Direction::of(r)))
}

/// Ranks starting at 1, ties receiving the average of their positions.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&i, &j| values[i].total_cmp(&values[j]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &o in &order[i..=j] {
            ranks[o] = avg;
        }
        i = j + 1;
    }
    ranks
}

/// Sample sizes up to this use the exact null distribution.
pub const WILCOXON_EXACT_MAX: usize = 25;

/// Wilcoxon signed-rank test on paired samples, two-sided.
///
/// Zero differences are dropped and tied magnitudes get average ranks. The
/// statistic is the positive rank sum `W+`. Up to [`WILCOXON_EXACT_MAX`]
/// non-zero pairs the p-value comes from the exact permutation distribution
/// of the observed ranks; beyond that from the tie-corrected normal
/// approximation without continuity correction.
pub fn wilcoxon_signed_rank(a: &[f64], b: &[f64]) -> Result<TestResult> {
    if a.len() != b.len() {
        return Err(Error::InvalidArgument("paired samples differ in length".into()));
    }
    if a.iter().chain(b).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("paired sample".into()));
    }
    let diffs: Vec<f64> = a
        .iter()
        .zip(b)
        .map(|(x, y)| x - y)
        .filter(|&d| d != 0.0)
        .collect();
    if diffs.is_empty() && !a.is_empty() {
        return Ok(TestResult::new(0.0, 1.0, Direction::Zero));
    }
    let n = diffs.len();
    if n < 5 {
        return Err(Error::InvalidArgument(format!(
            "signed-rank test needs at least 5 non-zero differences, got {n}"
        )));
    }
    let magnitudes: Vec<f64> = diffs.iter().map(|d| d.abs()).collect();
    let ranks = average_ranks(&magnitudes);
    let w_plus: f64 = diffs
        .iter()
        .zip(&ranks)
        .filter(|(d, _)| **d > 0.0)
        .fold(0.0, |acc, (_, r)| acc + r);
    let nf = n as f64;
    let expected = nf * (nf + 1.0) / 4.0;
    let direction = Direction::of(w_plus - expected);

    let p = if n <= WILCOXON_EXACT_MAX {
        exact_signed_rank_p(&ranks, w_plus)
    } else {
        let mut tie_term = 0.0;
        let mut sorted = magnitudes.clone();
        sorted.sort_by(f64::total_cmp);
        let mut i = 0;
        while i < sorted.len() {
            let mut j = i;
            while j + 1 < sorted.len() && sorted[j + 1] == sorted[i] {
                j += 1;
            }
            let t = (j - i + 1) as f64;
            tie_term += t * t * t - t;
            i = j + 1;
        }
        let var = nf * (nf + 1.0) * (2.0 * nf + 1.0) / 24.0 - tie_term / 48.0;
        let z = (w_plus - expected) / var.sqrt();
        2.0 * Normal::new(0.0, 1.0).expect("standard normal").sf(z.abs())
    };
    Ok(TestResult::new(w_plus, p, direction))
}

/// Two-sided p of `w_plus` under random signs on `ranks`. Ranks are doubled
/// so that average ranks become integers.
fn exact_signed_rank_p(ranks: &[f64], w_plus: f64) -> f64 {
    let doubled: Vec<usize> = ranks.iter().map(|r| (2.0 * r).round() as usize).collect();
    let max: usize = doubled.iter().sum();
    let mut counts = vec![0f64; max + 1];
    counts[0] = 1.0;
    let mut reach = 0;
    for &r in &doubled {
        for s in (0..=reach).rev() {
            if counts[s] > 0.0 {
                counts[s + r] += counts[s];
            }
        }
        reach += r;
    }
    let w = (2.0 * w_plus).round() as usize;
    let total = 2f64.powi(ranks.len() as i32);
    let le: f64 = counts[..=w].iter().sum();
    let ge: f64 = counts[w..].iter().sum();
    (2.0 * le.min(ge) / total).min(1.0)
}

/// Bonferroni correction `min(1, m * p)` for each p-value.
pub fn bonferroni(p_values: &[f64], m: usize) -> Result<Vec<f64>> {
    if m < p_values.len() {
        return Err(Error::InvalidArgument(format!(
            "correction over {m} tests but {} p-values given",
            p_values.len()
        )));
    }
    p_values
        .iter()
        .map(|&p| {
            if (0.0..=1.0).contains(&p) {
                Ok((m as f64 * p).min(1.0))
            } else {
                Err(Error::InvalidArgument(format!("p-value {p} outside [0, 1]")))
            }
        })
        .collect()
}
