use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::metrics::{compute_report, MetricsReport};
use super::run::{run_scenario, Termination};
use super::runlog::RunLog;
use super::scenario::Scenario;
use super::HarnessError;
use crate::rng::derive_seed;

/// Parameter grid over dotted scenario keys.
///
/// ```toml
/// seeds = 5
/// [[axis]]
/// key = "sensor.degradation.target_accuracy"
/// values = [1.0, 0.92, 0.85]
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    /// Runs per cell. With one run the cell uses the scenario seed itself.
    #[serde(default = "one")]
    pub seeds: u32,
    #[serde(default)]
    pub axis: Vec<Axis>,
}

fn one() -> u32 {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Axis {
    pub key: String,
    pub values: Vec<toml::Value>,
}

impl SweepSpec {
    pub fn from_toml_str(text: &str) -> Result<Self, HarnessError> {
        let de = toml::Deserializer::parse(text).map_err(|e| HarnessError::config("<grid>", e.to_string()))?;
        let spec: SweepSpec = serde_path_to_error::deserialize(de)
            .map_err(|e| HarnessError::config(e.path().to_string(), e.into_inner().message().to_string()))?;
        if spec.seeds == 0 {
            return Err(HarnessError::config("seeds", "must be at least 1"));
        }
        if let Some(a) = spec.axis.iter().find(|a| a.values.is_empty()) {
            return Err(HarnessError::config(format!("axis.{}", a.key), "axis has no values"));
        }
        Ok(spec)
    }

    /// Every combination of axis values, first axis slowest.
    pub fn cells(&self) -> Vec<Vec<(String, toml::Value)>> {
        let mut cells = vec![Vec::new()];
        for a in &self.axis {
            cells = cells
                .into_iter()
                .flat_map(|c| {
                    a.values.iter().map(move |v| {
                        let mut c = c.clone();
                        c.push((a.key.clone(), v.clone()));
                        c
                    })
                })
                .collect();
        }
        cells
    }

    /// Seed of replicate `k` of every cell. Replicates share seeds across
    /// cells so that cells are compared on paired runs.
    pub fn seed(&self, base: u64, k: u32) -> u64 {
        if self.seeds == 1 {
            base
        } else {
            derive_seed(base, &format!("sweep/{k}"))
        }
    }
}

/// Applies a dotted-key override and re-validates the scenario.
pub fn apply_override(sc: &Scenario, key: &str, value: &toml::Value) -> Result<Scenario, HarnessError> {
    let mut doc = toml::Value::try_from(sc).map_err(|e| HarnessError::config(key, e.to_string()))?;
    let mut node = &mut doc;
    let parts: Vec<&str> = key.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        let table = node.as_table_mut().ok_or_else(|| HarnessError::config(key, format!("`{part}` is not in a table")))?;
        if i + 1 == parts.len() {
            table.insert(part.to_string(), value.clone());
            break;
        }
        node = table.entry(part.to_string()).or_insert_with(|| toml::Value::Table(Default::default()));
    }
    let text = toml::to_string(&doc).map_err(|e| HarnessError::config(key, e.to_string()))?;
    Scenario::from_toml_str(&text)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepCell {
    pub overrides: Vec<(String, toml::Value)>,
    pub reports: Vec<MetricsReport>,
    /// Runs that could not be executed or ended in a component failure.
    pub failures: Vec<String>,
}

impl SweepCell {
    pub fn label(&self) -> String {
        if self.overrides.is_empty() {
            return "(base)".into();
        }
        self.overrides.iter().map(|(k, v)| format!("{k}={v}")).collect::<Vec<_>>().join(" ")
    }

    /// Mean over runs of the per-run mean position error.
    pub fn mean_error(&self) -> Option<f64> {
        let v: Vec<f64> = self.reports.iter().filter_map(|r| r.mean_error).collect();
        (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
    }

    pub fn max_error(&self) -> Option<f64> {
        self.reports.iter().filter_map(|r| r.max_error).reduce(f64::max)
    }

    pub fn mean_lap_time(&self) -> Option<f64> {
        let laps: Vec<f64> = self.reports.iter().flat_map(|r| r.lap_times.iter().copied()).collect();
        (!laps.is_empty()).then(|| laps.iter().sum::<f64>() / laps.len() as f64)
    }

    pub fn mean_accuracy(&self) -> Option<f64> {
        let v: Vec<f64> = self.reports.iter().filter_map(|r| r.mean_accuracy).collect();
        (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
    }

    pub fn crashes(&self) -> usize {
        self.reports.iter().map(|r| r.crashes).sum()
    }

    pub fn divergences(&self) -> usize {
        self.reports.iter().map(|r| r.divergences).sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepTable {
    pub cells: Vec<SweepCell>,
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "".into(), |v| format!("{v:.4}"))
}

impl SweepTable {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("cell,runs,failures,mean_error_m,max_error_m,mean_lap_time_s,mean_accuracy,crashes,divergences\n");
        for c in &self.cells {
            let _ = writeln!(
                s,
                "\"{}\",{},{},{},{},{},{},{},{}",
                c.label().replace('"', "'"),
                c.reports.len(),
                c.failures.len(),
                opt(c.mean_error()),
                opt(c.max_error()),
                opt(c.mean_lap_time()),
                opt(c.mean_accuracy()),
                c.crashes(),
                c.divergences()
            );
        }
        s
    }

    pub fn to_text(&self) -> String {
        let mut s = format!(
            "{:<48} {:>4} {:>4} {:>10} {:>10} {:>9} {:>8} {:>7} {:>5}\n",
            "cell", "runs", "fail", "mean err", "max err", "lap [s]", "acc", "crashes", "div"
        );
        for c in &self.cells {
            let _ = writeln!(
                s,
                "{:<48} {:>4} {:>4} {:>10} {:>10} {:>9} {:>8} {:>7} {:>5}",
                c.label(),
                c.reports.len(),
                c.failures.len(),
                opt(c.mean_error()),
                opt(c.max_error()),
                opt(c.mean_lap_time()),
                opt(c.mean_accuracy()),
                c.crashes(),
                c.divergences()
            );
        }
        s
    }
}

/// Runs every cell of the grid. A failing run is recorded in its cell and the
/// sweep moves on; only an invalid grid aborts.
pub fn run_sweep(base: &Scenario, spec: &SweepSpec) -> Result<SweepTable, HarnessError> {
    let mut cells = Vec::new();
    for overrides in spec.cells() {
        let mut sc = base.clone();
        for (k, v) in &overrides {
            sc = apply_override(&sc, k, v)?;
        }
        let mut cell = SweepCell { overrides, reports: Vec::new(), failures: Vec::new() };
        for k in 0..spec.seeds {
            let run_sc = Scenario { seed: spec.seed(base.seed, k), ..sc.clone() };
            match run_one(&run_sc) {
                Ok((report, None)) => cell.reports.push(report),
                Ok((report, Some(msg))) => {
                    cell.reports.push(report);
                    cell.failures.push(msg);
                }
                Err(e) => cell.failures.push(e.to_string()),
            }
        }
        log::info!("sweep cell {} done", cell.label());
        cells.push(cell);
    }
    Ok(SweepTable { cells })
}

fn run_one(sc: &Scenario) -> Result<(MetricsReport, Option<String>), HarnessError> {
    let prep = sc.prepare()?;
    let mut log = RunLog::default();
    let out = run_scenario(&prep, &mut log)?;
    let report = compute_report(&log, prep.centerline.as_ref(), Some(&prep.map), 1.0)?;
    let failure = match out.termination {
        Termination::Failure(m) => Some(m),
        _ => None,
    };
    Ok((report, failure))
}
