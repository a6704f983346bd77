//! Per-feature significance tables and tab-separated writers for every
//! pipeline artifact.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::dataset::{fmt_value, Dataset};
use crate::error::{Error, Result};
use crate::genealogy::{EmergenceRow, GenealogyEdge, ParentStats, SeriesRow};
use crate::ingest::CorpusIndex;
use crate::ml::EvalReport;
use crate::stats::{pearson, t_test, TestResult};

/// Default minimum weight for exported edges.
pub const DEFAULT_EDGE_FILTER: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TestKind {
    /// Welch t-test between positive and negative rows.
    Welch,
    /// Correlation with the rate target.
    Pearson,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignificanceRow {
    pub feature: String,
    pub test: TestKind,
    pub n: usize,
    /// `None` when the test is undefined, e.g. a constant feature.
    pub result: Option<TestResult>,
}

impl SignificanceRow {
    pub fn arrows(&self) -> String {
        self.result.map_or_else(|| "------".to_owned(), |r| r.arrows())
    }
}

fn finish(mut rows: Vec<SignificanceRow>) -> Result<Vec<SignificanceRow>> {
    let m = rows.len();
    for row in &mut rows {
        if let Some(r) = row.result {
            row.result = Some(r.with_bonferroni(m)?);
        }
    }
    Ok(rows)
}

fn defined(r: Result<TestResult>) -> Result<Option<TestResult>> {
    match r {
        Ok(t) => Ok(Some(t)),
        Err(Error::UndefinedInput(_)) | Err(Error::InvalidArgument(_)) => Ok(None),
        Err(e) => Err(e),
    }
}

/// Welch t-test of every feature between label groups, Bonferroni-corrected
/// over the number of features. Missing values are left out.
pub fn label_significance(data: &Dataset) -> Result<Vec<SignificanceRow>> {
    let rows = (0..data.feature_names.len())
        .map(|j| {
            let (mut pos, mut neg) = (Vec::new(), Vec::new());
            for r in &data.rows {
                let v = r.features[j];
                if !v.is_nan() {
                    if r.label {
                        pos.push(v)
                    } else {
                        neg.push(v)
                    }
                }
            }
            Ok(SignificanceRow {
                feature: data.feature_names[j].clone(),
                test: TestKind::Welch,
                n: pos.len() + neg.len(),
                result: defined(t_test(&pos, &neg))?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    finish(rows)
}

/// Pearson correlation of every feature with the rate target over rows that
/// have one.
pub fn target_significance(data: &Dataset) -> Result<Vec<SignificanceRow>> {
    let rows = (0..data.feature_names.len())
        .map(|j| {
            let (mut x, mut y) = (Vec::new(), Vec::new());
            for r in &data.rows {
                if let Some(t) = r.target {
                    if !r.features[j].is_nan() {
                        x.push(r.features[j]);
                        y.push(t);
                    }
                }
            }
            Ok(SignificanceRow {
                feature: data.feature_names[j].clone(),
                test: TestKind::Pearson,
                n: x.len(),
                result: defined(pearson(&x, &y))?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    finish(rows)
}

/// `parent child weight k`, keeping edges with weight above `min_weight`.
pub fn write_edges<W: Write>(
    mut w: W,
    index: &CorpusIndex,
    edges: &[GenealogyEdge],
    min_weight: Option<f64>,
) -> Result<()> {
    writeln!(w, "parent\tchild\tweight\tk")?;
    for e in edges {
        if min_weight.is_none_or(|m| e.weight > m) {
            writeln!(
                w,
                "{}\t{}\t{}\t{}",
                index.community_name(e.parent),
                index.community_name(e.child),
                e.weight,
                e.k
            )?;
        }
    }
    Ok(())
}

pub fn write_parent_stats<W: Write>(mut w: W, index: &CorpusIndex, stats: &[ParentStats]) -> Result<()> {
    let Some(first) = stats.first() else {
        writeln!(w, "child\tk")?;
        return Ok(());
    };
    let names: Vec<String> = first.properties().into_iter().map(|(n, _)| n).collect();
    writeln!(w, "child\tk\t{}", names.join("\t"))?;
    for s in stats {
        let values: Vec<String> = s.properties().into_iter().map(|(_, v)| v.to_string()).collect();
        writeln!(
            w,
            "{}\t{}\t{}",
            index.community_name(s.child),
            s.k,
            values.join("\t")
        )?;
    }
    Ok(())
}

pub fn write_emergence<W: Write>(mut w: W, rows: &[EmergenceRow]) -> Result<()> {
    writeln!(w, "k\tproperty\tmean\tse\tn")?;
    for r in rows {
        let s = r.summary;
        writeln!(
            w,
            "{}\t{}\t{}\t{}\t{}",
            r.k,
            r.property,
            fmt_value(s.mean),
            fmt_value(s.se),
            s.n
        )?;
    }
    Ok(())
}

pub fn write_series<W: Write>(mut w: W, rows: &[SeriesRow]) -> Result<()> {
    writeln!(w, "k\tbucket_start\tproperty\tmean\tse\tn")?;
    for r in rows {
        let s = r.summary;
        writeln!(
            w,
            "{}\t{}\t{}\t{}\t{}\t{}",
            r.k,
            r.bucket_start,
            r.property,
            fmt_value(s.mean),
            fmt_value(s.se),
            s.n
        )?;
    }
    Ok(())
}

/// One line per repeat with split sizes, chosen lambda and test metric.
pub fn write_runs<W: Write>(mut w: W, report: &EvalReport) -> Result<()> {
    writeln!(w, "repeat\ttrain\tval\ttest\tlambda\t{}\tbaseline", report.metric)?;
    for r in &report.runs {
        writeln!(
            w,
            "{}\t{}\t{}\t{}\t{}\t{}\t{}",
            r.repeat, r.train, r.val, r.test, r.lambda, r.metric, r.baseline
        )?;
    }
    Ok(())
}

pub fn write_coefficients<W: Write>(mut w: W, report: &EvalReport) -> Result<()> {
    writeln!(w, "feature\tmean_coefficient")?;
    for (name, c) in report.feature_names.iter().zip(&report.coef_means) {
        writeln!(w, "{name}\t{c}")?;
    }
    Ok(())
}

pub fn write_significance<W: Write>(mut w: W, rows: &[SignificanceRow]) -> Result<()> {
    writeln!(w, "feature\ttest\tn\tstatistic\tp\tcorrected_p\tsignificance")?;
    for r in rows {
        let test = match r.test {
            TestKind::Welch => "welch",
            TestKind::Pearson => "pearson",
        };
        let (stat, p, cp) = r.result.map_or(("NA".into(), "NA".into(), "NA".into()), |t| {
            (
                t.statistic.to_string(),
                t.p_value.to_string(),
                t.corrected_p.to_string(),
            )
        });
        writeln!(
            w,
            "{}\t{test}\t{}\t{stat}\t{p}\t{cp}\t{}",
            r.feature,
            r.n,
            r.arrows()
        )?;
    }
    Ok(())
}

/// Summary line per feature set: metric mean, standard error, baseline and
/// the signed-rank comparison against `reference`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub feature_set: String,
    pub reference: String,
    pub result: Option<TestResult>,
}

pub fn write_summary<W: Write>(
    mut w: W,
    reports: &[(String, EvalReport)],
    comparisons: &[Comparison],
) -> Result<()> {
    writeln!(w, "feature_set\tmetric\tmean\tse\tbaseline\tvs\tstatistic\tp")?;
    for (name, r) in reports {
        let cmp = comparisons.iter().find(|c| &c.feature_set == name);
        let (vs, stat, p) = match cmp {
            Some(Comparison {
                reference,
                result: Some(t),
                ..
            }) => (reference.clone(), t.statistic.to_string(), t.p_value.to_string()),
            Some(c) => (c.reference.clone(), "NA".into(), "NA".into()),
            None => ("NA".into(), "NA".into(), "NA".into()),
        };
        writeln!(
            w,
            "{name}\t{}\t{}\t{}\t{}\t{vs}\t{stat}\t{p}",
            r.metric,
            fmt_value(r.summary.mean),
            fmt_value(r.summary.se),
            fmt_value(r.baseline.mean)
        )?;
    }
    Ok(())
}
