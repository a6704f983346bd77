//! Feature tables shared by both prediction tasks.
//!
//! Tables are tab-separated. A `#families` comment line names the feature
//! family of every feature column, followed by the header row:
//!
//! ```text
//! #families<TAB><TAB>temporal<TAB>temporal ...
//! id<TAB>pair_id<TAB>creation_time<TAB>avg_time_gap ... label<TAB>rate_target
//! ```
//!
//! The `pair_id` column is present only for matched-pair datasets. Missing
//! values are written as `NA`.

use std::io::{BufRead, BufReader, Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Example {
    pub id: String,
    pub pair_id: Option<u64>,
    /// `NaN` marks a missing value, filled in during evaluation.
    pub features: Vec<f64>,
    pub label: bool,
    pub target: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub feature_names: Vec<String>,
    pub families: Vec<String>,
    pub rows: Vec<Example>,
}

impl Dataset {
    pub fn new(feature_names: Vec<String>, families: Vec<String>) -> Self {
        assert_eq!(feature_names.len(), families.len());
        Dataset {
            feature_names,
            families,
            rows: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn is_paired(&self) -> bool {
        self.rows.iter().any(|r| r.pair_id.is_some())
    }

    /// Distinct family names in column order.
    pub fn family_names(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for f in &self.families {
            if !out.contains(f) {
                out.push(f.clone());
            }
        }
        out
    }

    /// Column indices belonging to `families`, or every column for `None`.
    pub fn columns(&self, families: Option<&[&str]>) -> Vec<usize> {
        (0..self.feature_names.len())
            .filter(|&i| families.is_none_or(|fs| fs.contains(&self.families[i].as_str())))
            .collect()
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.feature_names.iter().position(|n| n == name)
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let i = self.column_index(name)?;
        Some(self.rows.iter().map(|r| r.features[i]).collect())
    }

    pub fn write_tsv<W: Write>(&self, mut w: W) -> Result<()> {
        let paired = self.is_paired();
        let lead = if paired { "\t\t" } else { "\t" };
        writeln!(w, "#families{lead}{}", self.families.join("\t"))?;
        let mut header = vec!["id"];
        if paired {
            header.push("pair_id");
        }
        header.extend(self.feature_names.iter().map(String::as_str));
        header.extend(["label", "rate_target"]);
        writeln!(w, "{}", header.join("\t"))?;
        for row in &self.rows {
            if row.id.contains(['\t', '\n', '\r']) {
                return Err(Error::Format(format!("id {:?} contains a separator", row.id)));
            }
            let mut cells = vec![row.id.clone()];
            if paired {
                cells.push(row.pair_id.map_or_else(|| "NA".into(), |p| p.to_string()));
            }
            cells.extend(row.features.iter().map(|&v| fmt_value(v)));
            cells.push(u8::from(row.label).to_string());
            cells.push(row.target.map_or_else(|| "NA".into(), fmt_value));
            writeln!(w, "{}", cells.join("\t"))?;
        }
        Ok(())
    }

    pub fn read_tsv<R: Read>(r: R) -> Result<Dataset> {
        let mut lines = BufReader::new(r).lines();
        let mut next = || -> Result<Option<String>> { lines.next().transpose().map_err(Error::from) };
        let fam_line = next()?.ok_or_else(|| Error::Format("empty dataset file".into()))?;
        let fam_cells: Vec<&str> = fam_line.split('\t').collect();
        if fam_cells.first() != Some(&"#families") {
            return Err(Error::Format("missing #families line".into()));
        }
        let header = next()?.ok_or_else(|| Error::Format("missing header row".into()))?;
        let cols: Vec<&str> = header.split('\t').collect();
        let paired = cols.get(1) == Some(&"pair_id");
        let first = if paired { 2 } else { 1 };
        if cols.len() < first + 2
            || cols[cols.len() - 2] != "label"
            || cols[cols.len() - 1] != "rate_target"
            || fam_cells.len() != cols.len() - 2
        {
            return Err(Error::Format("malformed dataset header".into()));
        }
        let names: Vec<String> = cols[first..cols.len() - 2]
            .iter()
            .map(|s| s.to_string())
            .collect();
        let families: Vec<String> = fam_cells[first..].iter().map(|s| s.to_string()).collect();
        let mut data = Dataset::new(names, families);
        while let Some(line) = next()? {
            if line.is_empty() {
                continue;
            }
            let cells: Vec<&str> = line.split('\t').collect();
            if cells.len() != cols.len() {
                return Err(Error::Format(format!(
                    "row has {} cells, expected {}",
                    cells.len(),
                    cols.len()
                )));
            }
            let pair_id = if paired {
                parse_opt(cells[1])?.map(|v| v as u64)
            } else {
                None
            };
            let features = cells[first..cells.len() - 2]
                .iter()
                .map(|c| Ok(parse_opt(c)?.unwrap_or(f64::NAN)))
                .collect::<Result<Vec<f64>>>()?;
            let label = match cells[cells.len() - 2] {
                "1" => true,
                "0" => false,
                other => return Err(Error::Format(format!("label `{other}` is not 0/1"))),
            };
            data.rows.push(Example {
                id: cells[0].to_owned(),
                pair_id,
                features,
                label,
                target: parse_opt(cells[cells.len() - 1])?,
            });
        }
        Ok(data)
    }
}

pub(crate) fn fmt_value(v: f64) -> String {
    if v.is_nan() {
        "NA".into()
    } else {
        v.to_string()
    }
}

fn parse_opt(s: &str) -> Result<Option<f64>> {
    if s == "NA" {
        return Ok(None);
    }
    s.parse::<f64>()
        .map(Some)
        .map_err(|_| Error::Format(format!("bad number `{s}`")))
}
