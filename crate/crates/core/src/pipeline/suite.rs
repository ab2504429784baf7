use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::run::{run_group, RunOptions, RunReport};
use super::spec::{ExperimentSpec, Framework};
use crate::classifiers::ClassifierSpec;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteCell {
    pub framework: Framework,
    pub classifier: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub report: Option<RunReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl SuiteCell {
    /// `mean (+/- 2σ)`, or `ERROR` for a failed cell.
    pub fn text(&self) -> String {
        match &self.report {
            Some(r) => r.cv.summary.to_string(),
            None => "ERROR".to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub version: String,
    pub cells: Vec<SuiteCell>,
}

/// Runs every spec, sharing preprocessing between specs that differ only
/// in their classifier. Failures stay confined to their own cells.
pub fn run_suite(specs: &[ExperimentSpec], opts: &RunOptions) -> SuiteReport {
    let mut groups: Vec<(ExperimentSpec, Vec<(usize, ClassifierSpec)>)> = Vec::new();
    for (i, spec) in specs.iter().enumerate() {
        let key = ExperimentSpec {
            classifier: ClassifierSpec::knn(),
            ..spec.clone()
        };
        match groups.iter_mut().find(|(k, _)| *k == key) {
            Some((_, members)) => members.push((i, spec.classifier.clone())),
            None => groups.push((key, vec![(i, spec.classifier.clone())])),
        }
    }
    let run = |(base, members): &(ExperimentSpec, Vec<(usize, ClassifierSpec)>)| {
        let classifiers: Vec<ClassifierSpec> = members.iter().map(|(_, c)| c.clone()).collect();
        log::info!("running {} with {} classifier(s)", base.framework, classifiers.len());
        members.iter().map(|(i, _)| *i).zip(run_group(base, &classifiers, opts)).collect::<Vec<_>>()
    };
    let results: Vec<_> = match opts.workers {
        Some(1) => groups.iter().map(run).collect(),
        Some(n) => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
            Ok(pool) => pool.install(|| groups.par_iter().map(run).collect()),
            Err(_) => groups.iter().map(run).collect(),
        },
        None => groups.par_iter().map(run).collect(),
    };
    let mut cells: Vec<Option<SuiteCell>> = vec![None; specs.len()];
    for (i, outcome) in results.into_iter().flatten() {
        let (report, error) = match outcome {
            Ok(r) => (Some(r), None),
            Err(e) => (None, Some(e.to_string())),
        };
        cells[i] = Some(SuiteCell {
            framework: specs[i].framework,
            classifier: specs[i].classifier.label().to_string(),
            report,
            error,
        });
    }
    SuiteReport {
        version: crate::VERSION.to_string(),
        cells: cells.into_iter().map(|c| c.expect("every spec belongs to a group")).collect(),
    }
}

impl SuiteReport {
    pub fn failed(&self) -> usize {
        self.cells.iter().filter(|c| c.error.is_some()).count()
    }

    /// Frameworks in grid order and classifier columns in order of first
    /// appearance.
    fn axes(&self) -> (Vec<Framework>, Vec<String>) {
        let rows = Framework::ALL
            .into_iter()
            .filter(|f| self.cells.iter().any(|c| c.framework == *f))
            .collect();
        let mut cols: Vec<String> = Vec::new();
        for c in &self.cells {
            if !cols.contains(&c.classifier) {
                cols.push(c.classifier.clone());
            }
        }
        (rows, cols)
    }

    pub fn cell(&self, framework: Framework, classifier: &str) -> Option<&SuiteCell> {
        self.cells
            .iter()
            .find(|c| c.framework == framework && c.classifier == classifier)
    }

    pub fn mean_f1(&self, framework: Framework, classifier: &str) -> Option<f64> {
        self.cell(framework, classifier)?.report.as_ref().map(|r| r.f1_mean())
    }

    /// Aligned text grid; failed cells read `ERROR` and are listed below.
    pub fn to_text(&self) -> String {
        let (rows, cols) = self.axes();
        let mut table: Vec<Vec<String>> = vec![std::iter::once(String::new()).chain(cols.iter().cloned()).collect()];
        for f in &rows {
            let mut line = vec![f.label().to_string()];
            for c in &cols {
                line.push(self.cell(*f, c).map_or_else(|| "-".to_string(), SuiteCell::text));
            }
            table.push(line);
        }
        let widths: Vec<usize> = (0..=cols.len())
            .map(|j| table.iter().map(|r| r[j].len()).max().unwrap_or(0))
            .collect();
        let mut out = String::new();
        for row in &table {
            let cells: Vec<String> = row
                .iter()
                .zip(&widths)
                .enumerate()
                .map(|(j, (s, w))| if j == 0 { format!("{s:<w$}") } else { format!("{s:>w$}") })
                .collect();
            writeln!(out, "{}", cells.join("  ").trim_end()).unwrap();
        }
        for c in self.cells.iter().filter(|c| c.error.is_some()) {
            writeln!(out, "{} / {}: {}", c.framework, c.classifier, c.error.as_deref().unwrap_or("")).unwrap();
        }
        out
    }

    /// CSV grid with one row per framework; failed cells hold the error.
    pub fn to_csv(&self) -> String {
        let (rows, cols) = self.axes();
        let mut w = csv::Writer::from_writer(Vec::new());
        let header: Vec<&str> = std::iter::once("framework").chain(cols.iter().map(String::as_str)).collect();
        w.write_record(&header).expect("in-memory write");
        for f in rows {
            let mut record = vec![f.label().to_string()];
            for c in &cols {
                record.push(match self.cell(f, c) {
                    Some(SuiteCell { report: Some(r), .. }) => r.cv.summary.to_string(),
                    Some(SuiteCell { error: Some(e), .. }) => format!("ERROR: {e}"),
                    _ => String::new(),
                });
            }
            w.write_record(&record).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 csv")
    }
}
