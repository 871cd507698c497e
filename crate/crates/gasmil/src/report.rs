//! JSON serialization of metric reports and the training-log CSV writer.

use std::fs;
use std::path::Path;

use gasmil_core::metrics::MetricsReport;
use gasmil_core::train::TrainLog;
use serde::Serialize;

use crate::error::{CliError, Result};

/// JSON view of a report. Key names match the training-log CSV columns;
/// undefined kappa/AUC serialize as null.
#[derive(Debug, Clone, Serialize)]
pub struct MetricsReportDoc {
    pub accuracy: f64,
    pub balanced_accuracy: f64,
    pub qwk: Option<f64>,
    pub weighted_f1: f64,
    pub auc: Option<f64>,
    pub confusion: Vec<Vec<u64>>,
}

impl From<&MetricsReport> for MetricsReportDoc {
    fn from(report: &MetricsReport) -> Self {
        MetricsReportDoc {
            accuracy: report.accuracy,
            balanced_accuracy: report.balanced_accuracy,
            qwk: report.qwk,
            weighted_f1: report.weighted_f1,
            auc: report.auc,
            confusion: report.confusion.clone(),
        }
    }
}

pub fn report_to_json(report: &MetricsReport) -> String {
    let mut text = serde_json::to_string_pretty(&MetricsReportDoc::from(report))
        .expect("report serialization cannot fail");
    text.push('\n');
    text
}

pub fn write_train_log(path: &Path, log: &TrainLog) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(CliError::io(parent))?;
    }
    fs::write(path, log.to_csv()).map_err(CliError::io(path))
}
