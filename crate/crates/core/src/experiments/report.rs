use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, ExperimentId, Protocol};
use crate::counterfactual::Aggregate;
use crate::error::{Error, Result};

/// Named scalar results of one seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedResult {
    pub seed: u64,
    pub values: BTreeMap<String, f64>,
}

/// Labelled numeric table; the first column holds the row labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table {
    pub name: String,
    pub columns: Vec<String>,
    pub rows: Vec<TableRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub label: String,
    pub values: Vec<f64>,
}

impl Table {
    pub fn new(name: &str, columns: &[&str]) -> Self {
        Table {
            name: name.to_string(),
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    /// Appends a row; `values` must match the non-label columns.
    pub fn push(&mut self, label: &str, values: Vec<f64>) {
        debug_assert_eq!(values.len() + 1, self.columns.len());
        self.rows.push(TableRow {
            label: label.to_string(),
            values,
        });
    }
}

/// Verdict on one directional claim of the experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

/// Wall-clock measurements, the only nondeterministic part of a report.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub total_seconds: f64,
    pub per_seed_seconds: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub experiment: ExperimentId,
    pub version: String,
    pub protocol: Protocol,
    pub config: ExperimentConfig,
    pub per_seed: Vec<SeedResult>,
    /// Mean and spread of every per-seed value, keyed like `per_seed`.
    pub aggregates: BTreeMap<String, Aggregate>,
    /// Scores of the seed-averaged prediction (ensemble protocol only).
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub ensemble: BTreeMap<String, f64>,
    pub tables: Vec<Table>,
    pub checks: Vec<Check>,
    pub notes: Vec<String>,
    pub timing: Timing,
}

/// Mean and spread of each key over the seeds, in seed order.
pub fn aggregate_seeds(per_seed: &[SeedResult]) -> Result<BTreeMap<String, Aggregate>> {
    let Some(first) = per_seed.first() else {
        return Ok(BTreeMap::new());
    };
    for s in per_seed {
        if s.values.keys().ne(first.values.keys()) {
            return Err(Error::Data(format!(
                "seed {} reports a different set of values",
                s.seed
            )));
        }
    }
    Ok(first
        .values
        .keys()
        .map(|k| {
            let v: Vec<f64> = per_seed.iter().map(|s| s.values[k]).collect();
            (k.clone(), Aggregate::from_values(&v))
        })
        .collect())
}

fn fmt_num(v: f64) -> String {
    if v == 0.0 {
        "0".into()
    } else if v.abs() >= 1e5 || v.abs() < 1e-3 {
        format!("{v:.3e}")
    } else {
        format!("{v:.4}")
    }
}

impl ExperimentReport {
    /// Aggregate for `key`, failing with the key name when absent.
    pub fn aggregate(&self, key: &str) -> Result<&Aggregate> {
        self.aggregates
            .get(key)
            .ok_or_else(|| Error::Data(format!("report has no value '{key}'")))
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn table(&self, name: &str) -> Option<&Table> {
        self.tables.iter().find(|t| t.name == name)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// JSON with the timing block removed; identical across reruns.
    pub fn canonical_json(&self) -> Result<String> {
        let mut v = serde_json::to_value(self)?;
        if let Some(obj) = v.as_object_mut() {
            obj.remove("timing");
        }
        Ok(serde_json::to_string_pretty(&v)?)
    }

    /// Aggregate table followed by every experiment table, one value per
    /// line: `table,row,column,value`.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["table", "row", "column", "value"])?;
        for (key, agg) in &self.aggregates {
            for (col, v) in [
                ("mean", agg.mean),
                ("std", agg.std),
                ("median", agg.median()),
            ] {
                w.write_record(["aggregates", key, col, &v.to_string()])?;
            }
            for (s, v) in self.per_seed.iter().zip(&agg.per_seed) {
                w.write_record([
                    "aggregates",
                    key,
                    &format!("seed_{}", s.seed),
                    &v.to_string(),
                ])?;
            }
        }
        for (key, v) in &self.ensemble {
            w.write_record(["ensemble", key, "value", &v.to_string()])?;
        }
        for t in &self.tables {
            for r in &t.rows {
                for (c, v) in t.columns.iter().skip(1).zip(&r.values) {
                    w.write_record([t.name.as_str(), &r.label, c, &v.to_string()])?;
                }
            }
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
        String::from_utf8(bytes).map_err(|e| Error::Data(e.to_string()))
    }

    pub fn to_markdown(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "# {} report\n", self.experiment);
        let seeds: Vec<String> = self.config.seeds.iter().map(|x| x.to_string()).collect();
        let _ = writeln!(
            s,
            "Version {}, n = {}, seeds {}, protocol {:?}.\n",
            self.version,
            self.config.n,
            seeds.join(", "),
            self.protocol
        );
        if !self.checks.is_empty() {
            let _ = writeln!(s, "## Checks\n");
            for c in &self.checks {
                let mark = if c.passed { "PASS" } else { "FAIL" };
                let _ = writeln!(s, "- **{mark}** `{}`: {}", c.name, c.detail);
            }
            s.push('\n');
        }
        for t in &self.tables {
            let _ = writeln!(s, "## {}\n", t.name);
            let _ = writeln!(s, "| {} |", t.columns.join(" | "));
            let _ = writeln!(s, "|{}", "---|".repeat(t.columns.len()));
            for r in &t.rows {
                let vals: Vec<String> = r.values.iter().map(|v| fmt_num(*v)).collect();
                let _ = writeln!(s, "| {} | {} |", r.label, vals.join(" | "));
            }
            s.push('\n');
        }
        if !self.ensemble.is_empty() {
            let _ = writeln!(s, "## Ensemble\n\n| value | score |\n|---|---|");
            for (k, v) in &self.ensemble {
                let _ = writeln!(s, "| {k} | {} |", fmt_num(*v));
            }
            s.push('\n');
        }
        let _ = writeln!(
            s,
            "## Per-seed aggregates\n\n| value | mean | std | median |\n|---|---|---|---|"
        );
        for (k, a) in &self.aggregates {
            let _ = writeln!(
                s,
                "| {k} | {} | {} | {} |",
                fmt_num(a.mean),
                fmt_num(a.std),
                fmt_num(a.median())
            );
        }
        if !self.notes.is_empty() {
            let _ = writeln!(s, "\n## Notes\n");
            for n in &self.notes {
                let _ = writeln!(s, "- {n}");
            }
        }
        s
    }

    /// Writes `report.json`, `tables.csv` and `summary.md` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        fs::create_dir_all(dir)?;
        let files = [
            ("report.json", self.to_json()?),
            ("tables.csv", self.to_csv()?),
            ("summary.md", self.to_markdown()),
        ];
        files
            .into_iter()
            .map(|(name, body)| {
                let path = dir.join(name);
                fs::write(&path, body)?;
                Ok(path)
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiments::ExperimentOptions;

    fn report() -> ExperimentReport {
        let per_seed = vec![
            SeedResult {
                seed: 1,
                values: [("a".to_string(), 1.0), ("b".to_string(), 2.0)].into(),
            },
            SeedResult {
                seed: 2,
                values: [("a".to_string(), 3.0), ("b".to_string(), 2.0)].into(),
            },
        ];
        let mut t = Table::new("arms", &["arm", "x"]);
        t.push("full", vec![0.5]);
        ExperimentReport {
            experiment: ExperimentId::Stress,
            version: "0".into(),
            protocol: Protocol::Individual,
            config: ExperimentConfig {
                experiment: ExperimentId::Stress,
                graph: None,
                mechanisms: BTreeMap::new(),
                seeds: vec![1, 2],
                n: 100,
                dataset_path: None,
                output_dir: "x".into(),
                protocol: Protocol::Individual,
                options: ExperimentOptions::default(),
            },
            aggregates: aggregate_seeds(&per_seed).unwrap(),
            per_seed,
            ensemble: BTreeMap::new(),
            tables: vec![t],
            checks: vec![Check {
                name: "c".into(),
                passed: true,
                detail: "ok".into(),
            }],
            notes: vec![],
            timing: Timing {
                total_seconds: 1.5,
                per_seed_seconds: vec![0.7, 0.8],
            },
        }
    }

    #[test]
    fn aggregates_recompute_from_seeds() {
        let r = report();
        let a = r.aggregate("a").unwrap();
        assert_eq!(a.per_seed, vec![1.0, 3.0]);
        assert_eq!(a.mean, 2.0);
        assert_eq!(r.aggregate("b").unwrap().std, 0.0);
        assert!(r.aggregate("zz").is_err());
    }

    #[test]
    fn mismatched_seed_keys_rejected() {
        let mut s = report().per_seed;
        s[1].values.remove("b");
        assert!(aggregate_seeds(&s).is_err());
    }

    #[test]
    fn canonical_json_ignores_timing() {
        let a = report();
        let mut b = report();
        b.timing.total_seconds = 99.0;
        assert_ne!(a.to_json().unwrap(), b.to_json().unwrap());
        assert_eq!(a.canonical_json().unwrap(), b.canonical_json().unwrap());
        let back: ExperimentReport = serde_json::from_str(&a.to_json().unwrap()).unwrap();
        assert_eq!(back.aggregates, a.aggregates);
    }

    #[test]
    fn csv_and_markdown_contents() {
        let r = report();
        let csv = r.to_csv().unwrap();
        assert!(csv.starts_with("table,row,column,value\n"));
        assert!(csv.contains("aggregates,a,mean,2\n"));
        assert!(csv.contains("aggregates,a,seed_2,3\n"));
        assert!(csv.contains("arms,full,x,0.5\n"));
        let md = r.to_markdown();
        assert!(md.contains("**PASS** `c`"));
        assert!(md.contains("| full | 0.5000 |"));
    }

    #[test]
    fn writes_three_files() {
        let dir = tempfile::tempdir().unwrap();
        let files = report().write(dir.path()).unwrap();
        assert_eq!(files.len(), 3);
        for f in files {
            assert!(f.is_file());
        }
    }
}
