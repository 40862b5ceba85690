use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::Result;

/// One pass/fail decision.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    /// Acceptance criterion or property the check belongs to.
    pub criterion: String,
    pub value: f64,
    pub bound: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub se: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub p_value: Option<f64>,
    /// A negative control passes when its underlying test rejects.
    pub negative_control: bool,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    /// `|value| ≤ bound`.
    pub fn at_most(name: &str, criterion: &str, value: f64, bound: f64) -> Self {
        Check {
            name: name.into(),
            criterion: criterion.into(),
            value,
            bound,
            se: None,
            p_value: None,
            negative_control: false,
            passed: value.abs() <= bound,
            detail: String::new(),
        }
    }

    /// `|mean - target| ≤ k·SE`.
    pub fn within_se(name: &str, criterion: &str, mean: f64, target: f64, se: f64, k: f64) -> Self {
        Check {
            name: name.into(),
            criterion: criterion.into(),
            value: mean,
            bound: k * se,
            se: Some(se),
            p_value: None,
            negative_control: false,
            passed: (mean - target).abs() <= k * se,
            detail: format!("target {target}, {:.2} SE", (mean - target).abs() / se),
        }
    }

    /// `p > p_min`.
    pub fn p_above(name: &str, criterion: &str, statistic: f64, p: f64, p_min: f64) -> Self {
        Check {
            name: name.into(),
            criterion: criterion.into(),
            value: statistic,
            bound: p_min,
            se: None,
            p_value: Some(p),
            negative_control: false,
            passed: p > p_min,
            detail: String::new(),
        }
    }

    pub fn flag(name: &str, criterion: &str, ok: bool, detail: impl Into<String>) -> Self {
        Check {
            name: name.into(),
            criterion: criterion.into(),
            value: if ok { 1.0 } else { 0.0 },
            bound: 1.0,
            se: None,
            p_value: None,
            negative_control: false,
            passed: ok,
            detail: detail.into(),
        }
    }

    /// Turns a test into its negative control: it passes iff the test fails.
    pub fn as_control(mut self) -> Self {
        self.negative_control = true;
        self.passed = !self.passed;
        self
    }

    pub fn with_detail(mut self, d: impl Into<String>) -> Self {
        self.detail = d.into();
        self
    }
}

/// A named table written as CSV.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Series {
    pub name: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Series {
    pub fn new(name: &str, columns: &[&str]) -> Self {
        Series { name: name.into(), columns: columns.iter().map(|c| c.to_string()).collect(), rows: vec![] }
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(&self.columns)?;
        for r in &self.rows {
            w.write_record(r.iter().map(|x| x.to_string()))?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub experiment: String,
    pub config_hash: String,
    pub seed: u64,
    pub checks: Vec<Check>,
    pub statistics: BTreeMap<String, f64>,
    #[serde(skip)]
    pub series: Vec<Series>,
    pub runtime_seconds: f64,
}

impl Report {
    pub fn new(experiment: &str, config_hash: String, seed: u64) -> Self {
        Report {
            experiment: experiment.into(),
            config_hash,
            seed,
            checks: vec![],
            statistics: BTreeMap::new(),
            series: vec![],
            runtime_seconds: 0.0,
        }
    }

    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn stat(&mut self, key: &str, v: f64) {
        self.statistics.insert(key.into(), v);
    }

    /// JSON without the timing field; identical for identical (config, seed).
    pub fn body_json(&self) -> String {
        let mut v = serde_json::to_value(self).expect("report serializes");
        v.as_object_mut().unwrap().remove("runtime_seconds");
        serde_json::to_string_pretty(&v).unwrap()
    }

    pub fn markdown(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "# {}\n", self.experiment);
        let _ = writeln!(s, "config `{}`, seed {}, {:.1} s\n", &self.config_hash[..12.min(self.config_hash.len())], self.seed, self.runtime_seconds);
        let _ = writeln!(s, "| check | criterion | value | bound | SE | p | result |");
        let _ = writeln!(s, "|---|---|---|---|---|---|---|");
        for c in &self.checks {
            let opt = |x: Option<f64>| x.map(|v| format!("{v:.4e}")).unwrap_or_default();
            let res = match (c.passed, c.negative_control) {
                (true, false) => "PASS",
                (false, false) => "FAIL",
                (true, true) => "PASS (control rejected)",
                (false, true) => "FAIL (control accepted)",
            };
            let _ = writeln!(
                s,
                "| {} | {} | {:.4e} | {:.4e} | {} | {} | {} |",
                c.name,
                c.criterion,
                c.value,
                c.bound,
                opt(c.se),
                opt(c.p_value),
                res
            );
        }
        if !self.statistics.is_empty() {
            let _ = writeln!(s, "\n| statistic | value |\n|---|---|");
            for (k, v) in &self.statistics {
                let _ = writeln!(s, "| {k} | {v:.6e} |");
            }
        }
        s
    }

    /// Writes `report.json`, `summary.md` and one CSV per series into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("report.json"), serde_json::to_string_pretty(self)?)?;
        std::fs::write(dir.join("summary.md"), self.markdown())?;
        for s in &self.series {
            s.write_csv(&dir.join(format!("{}.csv", s.name)))?;
        }
        Ok(())
    }
}
