//! Check records, experiment reports and plot files.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::Result;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Relation {
    /// `|measured − expected| ≤ tolerance`
    Eq,
    /// `measured ≤ expected + tolerance`
    Le,
    /// `measured ≥ expected − tolerance`
    Ge,
    /// `measured > expected`
    Gt,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub relation: Relation,
    pub measured: f64,
    pub expected: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl Check {
    fn new(name: impl Into<String>, relation: Relation, measured: f64, expected: f64, tolerance: f64) -> Self {
        let pass = match relation {
            Relation::Eq => (measured - expected).abs() <= tolerance,
            Relation::Le => measured <= expected + tolerance,
            Relation::Ge => measured >= expected - tolerance,
            Relation::Gt => measured > expected,
        };
        Self { name: name.into(), relation, measured, expected, tolerance, pass }
    }

    pub fn close(name: impl Into<String>, measured: f64, expected: f64, tolerance: f64) -> Self {
        Self::new(name, Relation::Eq, measured, expected, tolerance)
    }

    pub fn at_most(name: impl Into<String>, measured: f64, bound: f64, slack: f64) -> Self {
        Self::new(name, Relation::Le, measured, bound, slack)
    }

    pub fn at_least(name: impl Into<String>, measured: f64, bound: f64, slack: f64) -> Self {
        Self::new(name, Relation::Ge, measured, bound, slack)
    }

    pub fn greater(name: impl Into<String>, measured: f64, bound: f64) -> Self {
        Self::new(name, Relation::Gt, measured, bound, 0.0)
    }

    /// A yes/no condition recorded as `measured = 1` against `expected = 1`.
    pub fn holds(name: impl Into<String>, ok: bool) -> Self {
        Self::new(name, Relation::Eq, if ok { 1.0 } else { 0.0 }, 1.0, 0.0)
    }
}

/// Columns of a plot file.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Series {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Series {
    pub fn new(columns: &[&str]) -> Self {
        Self { columns: columns.iter().map(|c| c.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<f64>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn to_tsv(&self) -> String {
        let mut out = format!("# {}\n", self.columns.join("\t"));
        for r in &self.rows {
            let cells: Vec<String> = r.iter().map(|v| format!("{v:e}")).collect();
            out.push_str(&cells.join("\t"));
            out.push('\n');
        }
        out
    }
}

/// Checks and sequences produced by one experiment.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Outcome {
    pub checks: Vec<Check>,
    pub series: BTreeMap<String, Series>,
}

impl Outcome {
    pub fn check(&mut self, c: Check) {
        self.checks.push(c);
    }

    pub fn series(&mut self, name: impl Into<String>, s: Series) {
        self.series.insert(name.into(), s);
    }

    pub fn extend(&mut self, other: Outcome) {
        self.checks.extend(other.checks);
        self.series.extend(other.series);
    }

    /// Prefix every check and series name.
    pub fn prefixed(self, prefix: &str) -> Outcome {
        Outcome {
            checks: self
                .checks
                .into_iter()
                .map(|mut c| {
                    c.name = format!("{prefix}.{}", c.name);
                    c
                })
                .collect(),
            series: self.series.into_iter().map(|(k, v)| (format!("{prefix}.{k}"), v)).collect(),
        }
    }
}

pub const TOOL: &str = "confsym";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Serialized result of one CLI run. Field order is the JSON key order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub tool: String,
    pub version: String,
    pub experiment: String,
    pub seed: u64,
    pub config: BTreeMap<String, String>,
    pub pass: bool,
    pub checks: Vec<Check>,
    pub series: BTreeMap<String, Series>,
    /// Wall-clock seconds; excluded from comparisons.
    pub timing_seconds: f64,
}

impl Report {
    pub fn new(experiment: &str, seed: u64, config: BTreeMap<String, String>, outcome: Outcome, timing_seconds: f64) -> Self {
        Self {
            tool: TOOL.into(),
            version: VERSION.into(),
            experiment: experiment.into(),
            seed,
            config,
            pass: outcome.checks.iter().all(|c| c.pass),
            checks: outcome.checks,
            series: outcome.series,
            timing_seconds,
        }
    }

    pub fn failures(&self) -> Vec<&str> {
        self.checks.iter().filter(|c| !c.pass).map(|c| c.name.as_str()).collect()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// JSON with the timing field zeroed, for byte comparison.
    pub fn comparable_json(&self) -> Result<String> {
        let mut r = self.clone();
        r.timing_seconds = 0.0;
        r.to_json()
    }

    /// Writes `<stem>.json` and one `<stem>.<series>.tsv` per sequence into `dir`.
    pub fn write(&self, dir: &Path, stem: &str) -> Result<Vec<PathBuf>> {
        fs::create_dir_all(dir)?;
        let mut written = Vec::new();
        let json = dir.join(format!("{stem}.json"));
        fs::write(&json, self.to_json()? + "\n")?;
        written.push(json);
        for (name, s) in &self.series {
            let path = dir.join(format!("{stem}.{name}.tsv"));
            fs::write(&path, s.to_tsv())?;
            written.push(path);
        }
        Ok(written)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn relations() {
        assert!(Check::close("a", 1.0, 1.05, 0.1).pass);
        assert!(!Check::close("a", 1.0, 1.2, 0.1).pass);
        assert!(Check::at_most("b", 1.04, 1.0, 0.05).pass);
        assert!(!Check::at_most("b", 1.06, 1.0, 0.05).pass);
        assert!(Check::at_least("c", 0.96, 1.0, 0.05).pass);
        assert!(!Check::greater("d", 1.0, 1.0).pass);
        assert!(!Check::close("nan", f64::NAN, 0.0, 1.0).pass);
        assert!(Check::holds("e", true).pass && !Check::holds("e", false).pass);
    }

    #[test]
    fn json_key_order_and_timing() {
        let mut o = Outcome::default();
        o.check(Check::close("x", 1.0, 1.0, 0.0));
        let mut s = Series::new(&["k", "v"]);
        s.push(vec![1.0, 0.5]);
        o.series("seq", s);
        let a = Report::new("demo", 7, BTreeMap::from([("b".into(), "2".into()), ("a".into(), "1".into())]), o.clone(), 1.5);
        let b = Report::new("demo", 7, a.config.clone(), o, 9.0);
        assert_ne!(a.to_json().unwrap(), b.to_json().unwrap());
        assert_eq!(a.comparable_json().unwrap(), b.comparable_json().unwrap());
        let json = a.to_json().unwrap();
        let keys = [
            "\"tool\"",
            "\"version\"",
            "\"experiment\"",
            "\"seed\"",
            "\"config\"",
            "\"pass\"",
            "\"checks\"",
            "\"series\"",
            "\"timing_seconds\"",
        ];
        let pos: Vec<usize> = keys.iter().map(|k| json.find(k).unwrap()).collect();
        assert!(pos.windows(2).all(|w| w[0] < w[1]));
        assert!(json.find("\"a\"").unwrap() < json.find("\"b\"").unwrap());
    }

    #[test]
    fn plot_files() {
        let dir = tempfile::tempdir().unwrap();
        let mut o = Outcome::default();
        let mut s = Series::new(&["k", "rate"]);
        s.push(vec![1.0, 2.0]);
        o.series("entropy", s);
        let r = Report::new("entropy", 1, BTreeMap::new(), o, 0.0);
        let files = r.write(dir.path(), "run").unwrap();
        assert_eq!(files.len(), 2);
        let tsv = fs::read_to_string(dir.path().join("run.entropy.tsv")).unwrap();
        assert_eq!(tsv, "# k\trate\n1e0\t2e0\n");
    }
}
