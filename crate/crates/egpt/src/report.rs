//! CSV and JSON report files. Undefined metric cells are written as
//! [`MISSING`] in CSV and `null` in JSON, never as zero.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::path::{Path, PathBuf};

use egpt_core::graphmetrics::MetricsReport;
use egpt_core::synthgen::{Category, EngagementProfile};
use egpt_core::trainer::{LinkScores, SweepRow, TrainReport};
use serde::{Deserialize, Serialize};

use crate::dataset::to_json;
use crate::error::{CliError, Result};

pub const MISSING: &str = "NA";
pub const METRICS_FORMAT: &str = "egpt-metrics/1";

/// Category column order of the published homophily tables.
pub const TABLE_CATEGORIES: [Category; 8] = [
    Category::Education,
    Category::Sports,
    Category::Politics,
    Category::Finance,
    Category::Art,
    Category::Travel,
    Category::Health,
    Category::Entertainment,
];

pub const SWEEP_HEADER: [&str; 9] = [
    "cell",
    "hyperparameters",
    "precision",
    "recall",
    "f1",
    "first_loss",
    "last_loss",
    "seconds",
    "error",
];

pub fn cell(value: Option<f64>) -> String {
    value.map_or_else(|| MISSING.to_string(), |v| v.to_string())
}

fn capitalized(c: Category) -> String {
    let label = c.label();
    label[..1].to_uppercase() + &label[1..]
}

fn csv_writer(path: &Path) -> Result<csv::Writer<File>> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
    }
    let file = File::create(path).map_err(|e| CliError::io(path, e))?;
    Ok(csv::Writer::from_writer(file))
}

fn write_rows(path: &Path, rows: &[Vec<String>]) -> Result<()> {
    let mut w = csv_writer(path)?;
    for r in rows {
        w.write_record(r).map_err(|e| CliError::format(path, e))?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
    }
    fs::write(path, to_json(value)).map_err(|e| CliError::io(path, e))
}

/// JSON form of a [`MetricsReport`], with categories keyed by name.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsDoc {
    pub format: String,
    pub steps: Vec<usize>,
    pub density: Vec<f64>,
    pub triadic_closure: Vec<Option<f64>>,
    pub history: BTreeMap<String, Option<f64>>,
    pub engagement: BTreeMap<String, BTreeMap<String, Option<f64>>>,
    pub demographics: BTreeMap<String, Option<f64>>,
}

impl MetricsDoc {
    pub fn new(r: &MetricsReport) -> Self {
        let by_category = |row: &[Option<f64>; 8]| {
            Category::ALL
                .iter()
                .map(|c| (c.label().to_string(), row[c.index()]))
                .collect::<BTreeMap<_, _>>()
        };
        let d = &r.demographics;
        MetricsDoc {
            format: METRICS_FORMAT.to_string(),
            steps: r.steps.clone(),
            density: r.density.clone(),
            triadic_closure: r.triadic_closure.clone(),
            history: by_category(&r.history),
            engagement: EngagementProfile::KINDS
                .iter()
                .zip(&r.engagement)
                .map(|(k, row)| (k.to_string(), by_category(row)))
                .collect(),
            demographics: [("age", d.age), ("gender", d.gender), ("occupation", d.occupation), ("location", d.location)]
                .into_iter()
                .map(|(k, v)| (k.to_string(), v))
                .collect(),
        }
    }
}

/// Writes `<prefix>_structure.csv`, `<prefix>_history.csv`,
/// `<prefix>_engagement.csv`, `<prefix>_demographics.csv`, and
/// `<prefix>_metrics.json` into `dir`. Returns the paths written.
pub fn write_metrics(dir: &Path, prefix: &str, r: &MetricsReport) -> Result<Vec<PathBuf>> {
    let path = |name: &str| dir.join(format!("{prefix}_{name}"));
    let mut written = Vec::new();

    let mut header = vec![String::new()];
    header.extend(r.steps.iter().map(|t| format!("t{t}")));
    let mut density = vec!["density".to_string()];
    density.extend(r.density.iter().map(|&v| cell(Some(v))));
    let mut closure = vec!["triadic_closure".to_string()];
    closure.extend(r.triadic_closure.iter().map(|&v| cell(v)));
    let p = path("structure.csv");
    write_rows(&p, &[header, density, closure])?;
    written.push(p);

    let categories: Vec<String> = TABLE_CATEGORIES.iter().map(|&c| capitalized(c)).collect();
    let p = path("history.csv");
    let values = TABLE_CATEGORIES.iter().map(|c| cell(r.history[c.index()])).collect();
    write_rows(&p, &[categories.clone(), values])?;
    written.push(p);

    let mut rows = vec![std::iter::once("interaction".to_string()).chain(categories).collect::<Vec<_>>()];
    for (kind, row) in EngagementProfile::KINDS.iter().zip(&r.engagement) {
        let mut line = vec![kind.to_string()];
        line.extend(TABLE_CATEGORIES.iter().map(|c| cell(row[c.index()])));
        rows.push(line);
    }
    let p = path("engagement.csv");
    write_rows(&p, &rows)?;
    written.push(p);

    let d = &r.demographics;
    let p = path("demographics.csv");
    write_rows(
        &p,
        &[
            ["Age", "Gender", "Occupation", "Location"].map(String::from).to_vec(),
            vec![cell(d.age), cell(d.gender), cell(d.occupation), cell(d.location)],
        ],
    )?;
    written.push(p);

    let p = path("metrics.json");
    write_json(&p, &MetricsDoc::new(r))?;
    written.push(p);
    Ok(written)
}

/// Link-prediction rows in the published column order, one per named
/// predictor.
pub fn write_link_scores(path: &Path, rows: &[(String, LinkScores)]) -> Result<()> {
    let mut out = vec![["predictor", "precision", "recall", "f1"].map(String::from).to_vec()];
    for (name, s) in rows {
        out.push(vec![name.clone(), s.precision.to_string(), s.recall.to_string(), s.f1.to_string()]);
    }
    write_rows(path, &out)
}

fn sweep_record(row: &SweepRow) -> Vec<String> {
    let label = row.hyperparams.label();
    match &row.outcome {
        Ok(r) => vec![
            row.cell.to_string(),
            label,
            r.precision.to_string(),
            r.recall.to_string(),
            r.f1.to_string(),
            r.first_loss().to_string(),
            r.last_loss().to_string(),
            cell(r.wall_clock_secs),
            String::new(),
        ],
        Err(e) => {
            let mut v = vec![row.cell.to_string(), label];
            v.extend(std::iter::repeat_n(MISSING.to_string(), 6));
            v.push(e.clone());
            v
        }
    }
}

/// Appends one line per finished sweep cell and flushes it at once, so a
/// killed sweep keeps every completed row.
pub struct SweepLog {
    path: PathBuf,
    writer: csv::Writer<File>,
}

impl SweepLog {
    pub fn create(path: &Path) -> Result<Self> {
        let mut writer = csv_writer(path)?;
        writer.write_record(SWEEP_HEADER).map_err(|e| CliError::format(path, e))?;
        writer.flush().map_err(|e| CliError::io(path, e))?;
        Ok(SweepLog { path: path.to_path_buf(), writer })
    }

    pub fn record(&mut self, row: &SweepRow) -> Result<()> {
        self.writer.write_record(sweep_record(row)).map_err(|e| CliError::format(&self.path, e))?;
        self.writer.flush().map_err(|e| CliError::io(&self.path, e))
    }
}

/// Reads back `(cell, f1)` for every completed row; failed cells give `None`.
pub fn read_sweep_log(path: &Path) -> Result<Vec<(usize, Option<f64>)>> {
    let file = File::open(path).map_err(|e| CliError::io(path, e))?;
    let mut r = csv::Reader::from_reader(file);
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| CliError::format(path, e))?;
        let parse_err = |what: &str| CliError::format(path, format!("bad {what} in sweep row"));
        let cell: usize = rec.get(0).and_then(|s| s.parse().ok()).ok_or_else(|| parse_err("cell"))?;
        let f1 = match rec.get(4) {
            Some(MISSING) => None,
            Some(s) => Some(s.parse::<f64>().map_err(|_| parse_err("f1"))?),
            None => return Err(parse_err("f1")),
        };
        out.push((cell, f1));
    }
    Ok(out)
}

/// Compact one-line summary printed after training.
pub fn train_summary(r: &TrainReport) -> String {
    format!(
        "{}  P {:.4}  R {:.4}  F1 {:.4}  loss {:.4} -> {:.4}",
        r.hyperparams.label(),
        r.precision,
        r.recall,
        r.f1,
        r.first_loss(),
        r.last_loss()
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn missing_cells_are_marked() {
        assert_eq!(cell(None), "NA");
        assert_eq!(cell(Some(0.0)), "0");
        assert_eq!(cell(Some(-0.25)), "-0.25");
    }

    #[test]
    fn table_order_covers_every_category() {
        let mut idx: Vec<usize> = TABLE_CATEGORIES.iter().map(|c| c.index()).collect();
        idx.sort();
        assert_eq!(idx, (0..8).collect::<Vec<_>>());
        assert_eq!(capitalized(Category::Education), "Education");
    }
}
