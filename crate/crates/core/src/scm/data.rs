use std::collections::BTreeMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::graph::NodeKind;
use crate::error::{Error, Result};

/// Rectangular table of named columns.
///
/// Categorical columns hold label codes `0..K`; when ingested from text the
/// original labels are kept in `labels`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    names: Vec<String>,
    kinds: Vec<NodeKind>,
    columns: Vec<Vec<f64>>,
    labels: Vec<Option<Vec<String>>>,
}

impl Dataset {
    pub fn new(names: Vec<String>, kinds: Vec<NodeKind>, columns: Vec<Vec<f64>>) -> Result<Self> {
        let labels = vec![None; names.len()];
        let d = Dataset {
            names,
            kinds,
            columns,
            labels,
        };
        d.validate()?;
        Ok(d)
    }

    /// Builds from `(name, kind, values)` triples.
    pub fn from_columns<I>(cols: I) -> Result<Self>
    where
        I: IntoIterator<Item = (String, NodeKind, Vec<f64>)>,
    {
        let (mut names, mut kinds, mut columns) = (Vec::new(), Vec::new(), Vec::new());
        for (n, k, c) in cols {
            names.push(n);
            kinds.push(k);
            columns.push(c);
        }
        Self::new(names, kinds, columns)
    }

    fn validate(&self) -> Result<()> {
        if self.names.len() != self.kinds.len() || self.names.len() != self.columns.len() {
            return Err(Error::Data(
                "names, kinds and columns differ in count".into(),
            ));
        }
        let mut seen = std::collections::BTreeSet::new();
        for n in &self.names {
            if !seen.insert(n) {
                return Err(Error::Data(format!("duplicate column '{n}'")));
            }
        }
        let rows = self.columns.first().map_or(0, Vec::len);
        for (i, c) in self.columns.iter().enumerate() {
            let name = &self.names[i];
            if c.len() != rows {
                return Err(Error::Data(format!(
                    "column '{name}' has {} rows, expected {rows}",
                    c.len()
                )));
            }
            if let Some(v) = c.iter().find(|v| !v.is_finite()) {
                return Err(Error::Data(format!("column '{name}' holds non-finite {v}")));
            }
            if self.kinds[i] == NodeKind::Categorical {
                if let Some(v) = c.iter().find(|v| v.fract() != 0.0 || **v < 0.0) {
                    return Err(Error::Data(format!(
                        "categorical column '{name}' holds non-code value {v}"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn n_rows(&self) -> usize {
        self.columns.first().map_or(0, Vec::len)
    }

    pub fn n_cols(&self) -> usize {
        self.columns.len()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn kinds(&self) -> &[NodeKind] {
        &self.kinds
    }

    pub fn position(&self, name: &str) -> Result<usize> {
        self.names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| Error::UnknownNode(name.to_string()))
    }

    pub fn column(&self, name: &str) -> Result<&[f64]> {
        Ok(&self.columns[self.position(name)?])
    }

    pub fn kind_of(&self, name: &str) -> Result<NodeKind> {
        Ok(self.kinds[self.position(name)?])
    }

    pub fn labels(&self, name: &str) -> Result<Option<&[String]>> {
        Ok(self.labels[self.position(name)?].as_deref())
    }

    /// Replaces a column's values (same length, same kind).
    pub fn set_column(&mut self, name: &str, values: Vec<f64>) -> Result<()> {
        let i = self.position(name)?;
        if values.len() != self.n_rows() {
            return Err(Error::dim(
                "replacement column",
                self.n_rows(),
                values.len(),
            ));
        }
        let old = std::mem::replace(&mut self.columns[i], values);
        if let Err(e) = self.validate() {
            self.columns[i] = old;
            return Err(e);
        }
        Ok(())
    }

    /// Appends a column.
    pub fn push_column(&mut self, name: &str, kind: NodeKind, values: Vec<f64>) -> Result<()> {
        self.names.push(name.to_string());
        self.kinds.push(kind);
        self.columns.push(values);
        self.labels.push(None);
        if let Err(e) = self.validate() {
            self.names.pop();
            self.kinds.pop();
            self.columns.pop();
            self.labels.pop();
            return Err(e);
        }
        Ok(())
    }

    pub fn row(&self, r: usize) -> Vec<f64> {
        self.columns.iter().map(|c| c[r]).collect()
    }

    pub fn select_rows(&self, idx: &[usize]) -> Dataset {
        Dataset {
            names: self.names.clone(),
            kinds: self.kinds.clone(),
            columns: self
                .columns
                .iter()
                .map(|c| idx.iter().map(|&i| c[i]).collect())
                .collect(),
            labels: self.labels.clone(),
        }
    }

    /// Keeps only the named columns, in the given order.
    pub fn select_columns(&self, names: &[&str]) -> Result<Dataset> {
        let mut out = Dataset {
            names: Vec::new(),
            kinds: Vec::new(),
            columns: Vec::new(),
            labels: Vec::new(),
        };
        for &n in names {
            let i = self.position(n)?;
            out.names.push(self.names[i].clone());
            out.kinds.push(self.kinds[i]);
            out.columns.push(self.columns[i].clone());
            out.labels.push(self.labels[i].clone());
        }
        Ok(out)
    }

    /// Reads a comma-separated table with a header row.
    ///
    /// Columns named in `kinds` as categorical are label-encoded: values that
    /// all parse as numbers are ordered numerically, otherwise lexically.
    /// Every other column must be numeric.
    pub fn from_csv<R: Read>(reader: R, kinds: &BTreeMap<String, NodeKind>) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(reader);
        let names: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
        for k in kinds.keys() {
            if !names.contains(k) {
                return Err(Error::UnknownNode(k.clone()));
            }
        }
        let mut raw: Vec<Vec<String>> = vec![Vec::new(); names.len()];
        for (line, rec) in rdr.records().enumerate() {
            let rec = rec?;
            if rec.len() != names.len() {
                return Err(Error::Data(format!(
                    "row {} has {} fields, expected {}",
                    line + 1,
                    rec.len(),
                    names.len()
                )));
            }
            for (j, field) in rec.iter().enumerate() {
                if field.is_empty() {
                    return Err(Error::Data(format!(
                        "missing value in column '{}' at row {}",
                        names[j],
                        line + 1
                    )));
                }
                raw[j].push(field.to_string());
            }
        }
        let mut ds = Dataset {
            names: Vec::new(),
            kinds: Vec::new(),
            columns: Vec::new(),
            labels: Vec::new(),
        };
        for (j, name) in names.iter().enumerate() {
            let kind = kinds.get(name).copied().unwrap_or_default();
            let (values, labels) = match kind {
                NodeKind::Continuous => {
                    let v = raw[j]
                        .iter()
                        .enumerate()
                        .map(|(r, s)| {
                            s.parse::<f64>().map_err(|_| {
                                Error::Data(format!(
                                    "column '{name}' row {}: '{s}' is not a number",
                                    r + 1
                                ))
                            })
                        })
                        .collect::<Result<Vec<f64>>>()?;
                    (v, None)
                }
                NodeKind::Categorical => {
                    let (codes, labels) = label_encode(&raw[j]);
                    (codes, Some(labels))
                }
            };
            ds.names.push(name.clone());
            ds.kinds.push(kind);
            ds.columns.push(values);
            ds.labels.push(labels);
        }
        ds.validate()?;
        Ok(ds)
    }

    /// Writes the table with a header row; categorical columns as codes.
    pub fn to_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(&self.names)?;
        for r in 0..self.n_rows() {
            w.write_record(self.columns.iter().map(|c| format_value(c[r])))?;
        }
        w.flush()?;
        Ok(())
    }
}

fn format_value(v: f64) -> String {
    if v.fract() == 0.0 && v.abs() < 1e15 {
        format!("{}", v as i64)
    } else {
        format!("{v}")
    }
}

fn label_encode(values: &[String]) -> (Vec<f64>, Vec<String>) {
    let mut uniq: Vec<&String> = values.iter().collect();
    uniq.sort();
    uniq.dedup();
    let numeric: Option<Vec<f64>> = uniq.iter().map(|s| s.parse::<f64>().ok()).collect();
    if let Some(mut nums) = numeric {
        let mut pairs: Vec<(f64, &String)> = nums.drain(..).zip(uniq.iter().copied()).collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        pairs.dedup_by(|a, b| a.0 == b.0);
        let labels: Vec<String> = pairs.iter().map(|p| p.1.clone()).collect();
        let codes = values
            .iter()
            .map(|s| {
                let v: f64 = s.parse().expect("checked numeric");
                pairs.iter().position(|p| p.0 == v).expect("present") as f64
            })
            .collect();
        return (codes, labels);
    }
    let labels: Vec<String> = uniq.into_iter().cloned().collect();
    let codes = values
        .iter()
        .map(|s| labels.binary_search(s).expect("present") as f64)
        .collect();
    (codes, labels)
}
