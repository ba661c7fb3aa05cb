//! Experiment settings: per-experiment default tables, a `key = value` file
//! format and typed lookups.

use std::collections::BTreeMap;
use std::str::FromStr;

use crate::error::{Error, Result};

pub const EXPERIMENTS: [&str; 10] = [
    "conformality",
    "isotropy",
    "entropy",
    "volume-growth",
    "liouville",
    "exactness",
    "action-scaling",
    "escape",
    "lecalvez-curve",
    "reproduce-all",
];

/// Documented defaults, by experiment. Every key an experiment accepts is listed.
pub fn defaults(experiment: &str) -> Result<&'static [(&'static str, &'static str)]> {
    Ok(match experiment {
        "conformality" => &[
            ("system", "torus6"),
            ("seed", "42"),
            ("samples", "10000"),
            ("t", "1"),
            ("dt", "0.001"),
            ("method", "rk4"),
            ("jacobian", "analytic"),
            ("a", "0.5"),
            ("c", "0.3"),
            ("alpha", "1.5"),
            ("field", "zero"),
            ("tolerance", "1e-9"),
        ],
        "isotropy" => &[
            ("system", "mane"),
            ("submanifold", "zero-section"),
            ("seed", "42"),
            ("n", "2"),
            ("resolution", "16"),
            ("alpha", "1.5"),
            ("field", "wavy"),
            ("t", "1"),
            ("dt", "0.001"),
            ("tolerance", "1e-12"),
        ],
        "entropy" => &[
            ("system", "cat"),
            ("seed", "42"),
            ("cells", "32"),
            ("kmax", "12"),
            ("grid", "200000"),
            ("length", "0.5"),
            ("tolerance", "0.15"),
        ],
        "volume-growth" => &[
            ("system", "cat"),
            ("seed", "42"),
            ("direction", "forward"),
            ("measure", "riemannian"),
            ("nmax", "10"),
            ("grid", "4096"),
            ("length", "0.5"),
        ],
        "liouville" => &[("system", "model-map"), ("seed", "42"), ("a", "0.5"), ("c", "0.3"), ("kmax", "60"), ("tolerance", "1e-8")],
        "exactness" => &[
            ("system", "model-map"),
            ("seed", "42"),
            ("a", "0.5"),
            ("c", "0.3"),
            ("alpha", "1.5"),
            ("field", "zero"),
            ("t", "1"),
            ("dt", "0.001"),
            ("tolerance", "1e-10"),
        ],
        "action-scaling" => &[("system", "model-map"), ("seed", "42"), ("a", "0.5,2"), ("amplitude", "1"), ("tolerance", "1e-8")],
        "escape" => &[("system", "model-map"), ("seed", "42"), ("a", "2"), ("c", "0"), ("graph", "0.3"), ("kmax", "20")],
        "lecalvez-curve" => &[
            ("system", "lecalvez"),
            ("seed", "42"),
            ("beta", "1"),
            ("alpha", "1.5"),
            ("A", "2"),
            ("B", "3"),
            ("C", "4"),
            ("D", "5"),
            ("t-max", "40"),
            ("dt", "0.001"),
            ("grid", "400"),
            ("samples", "20"),
        ],
        "reproduce-all" => &[("seed", "42")],
        other => return Err(Error::Usage(format!("unknown experiment {other}; known: {}", EXPERIMENTS.join(", ")))),
    })
}

/// Parses `key = value` lines; `#` starts a comment.
pub fn parse_file(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| Error::Usage(format!("config line {}: expected key = value", i + 1)))?;
        out.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

/// Resolved settings for one experiment run.
#[derive(Clone, Debug, PartialEq)]
pub struct Config {
    experiment: String,
    values: BTreeMap<String, String>,
}

impl Config {
    /// Defaults, then `file` entries, then `flags`; later sources win.
    pub fn resolve(experiment: &str, file: &[(String, String)], flags: &[(String, String)]) -> Result<Self> {
        let table = defaults(experiment)?;
        let mut values: BTreeMap<String, String> = table.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect();
        for (k, v) in file.iter().chain(flags) {
            match values.get_mut(k) {
                Some(slot) => *slot = v.clone(),
                None => {
                    let known: Vec<&str> = table.iter().map(|(k, _)| *k).collect();
                    return Err(Error::Usage(format!("unknown key {k} for {experiment}; known: {}", known.join(", "))));
                }
            }
        }
        Ok(Self { experiment: experiment.into(), values })
    }

    pub fn defaults_for(experiment: &str) -> Result<Self> {
        Self::resolve(experiment, &[], &[])
    }

    /// Copy with some values replaced; keys must already exist.
    pub fn with(&self, overrides: &[(&str, &str)]) -> Result<Self> {
        let flags: Vec<(String, String)> = overrides.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect();
        let mut c = self.clone();
        for (k, v) in flags {
            match c.values.get_mut(&k) {
                Some(slot) => *slot = v,
                None => return Err(Error::Usage(format!("unknown key {k} for {}", self.experiment))),
            }
        }
        Ok(c)
    }

    pub fn experiment(&self) -> &str {
        &self.experiment
    }

    pub fn echo(&self) -> BTreeMap<String, String> {
        self.values.clone()
    }

    pub fn str(&self, key: &str) -> Result<&str> {
        self.values.get(key).map(String::as_str).ok_or_else(|| Error::Usage(format!("missing key {key}")))
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<T> {
        let raw = self.str(key)?;
        raw.parse().map_err(|_| Error::Usage(format!("bad value for {key}: {raw}")))
    }

    pub fn list<T: FromStr>(&self, key: &str) -> Result<Vec<T>> {
        let raw = self.str(key)?;
        raw.split(',').map(|p| p.trim().parse().map_err(|_| Error::Usage(format!("bad entry in {key}: {p}")))).collect()
    }

    pub fn seed(&self) -> Result<u64> {
        self.get("seed")
    }
}
