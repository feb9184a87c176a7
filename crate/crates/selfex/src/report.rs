//! CSV outputs: the experiment report, per-run logs and pre-training loss
//! curves.

use std::path::Path;

use serde::Deserialize;
use selfex_core::finetune::RunLog;
use selfex_core::pretrain::EpochLoss;

use crate::error::{Error, Result};

pub const REPORT_HEADER: [&str; 7] = ["image_id", "T", "psnr", "ssim", "fid", "seconds", "stop_reason"];
pub const RUNLOG_HEADER: [&str; 4] = ["iteration", "loss_rec", "loss_adv", "fid_or_blank"];

/// Aggregate rows use these ids.
pub const MEAN_ID: &str = "mean";
pub const SET_ID: &str = "set";
pub const FAILED: &str = "failed";

#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct ReportRow {
    pub image_id: String,
    #[serde(rename = "T")]
    pub t: Option<usize>,
    pub psnr: Option<f64>,
    pub ssim: Option<f64>,
    pub fid: Option<f64>,
    pub seconds: Option<f64>,
    pub stop_reason: String,
}

fn cell(v: Option<f64>, digits: usize) -> String {
    v.map_or_else(String::new, |v| format!("{v:.digits$}"))
}

impl ReportRow {
    fn record(&self) -> [String; 7] {
        [
            self.image_id.clone(),
            self.t.map_or_else(String::new, |t| t.to_string()),
            cell(self.psnr, 4),
            cell(self.ssim, 6),
            cell(self.fid, 8),
            cell(self.seconds, 3),
            self.stop_reason.clone(),
        ]
    }

    pub fn is_aggregate(&self) -> bool {
        self.image_id == MEAN_ID || self.image_id == SET_ID
    }
}

fn writer(path: &Path) -> Result<csv::Writer<std::fs::File>> {
    csv::Writer::from_path(path).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Invalid(format!("{}: {other:?}", path.display())),
    })
}

pub fn write_report(rows: &[ReportRow], path: &Path) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(REPORT_HEADER)?;
    for row in rows {
        w.write_record(row.record())?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_report(path: &Path) -> Result<Vec<ReportRow>> {
    let mut r = csv::Reader::from_path(path)?;
    let header: Vec<String> = r.headers()?.iter().map(String::from).collect();
    if header != REPORT_HEADER {
        return Err(Error::format(path, format!("unexpected report header {header:?}")));
    }
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}

pub fn write_runlog(log: &RunLog, path: &Path) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(RUNLOG_HEADER)?;
    for e in &log.entries {
        w.write_record([
            e.iteration.to_string(),
            cell(e.loss_rec, 8),
            cell(e.loss_adv, 8),
            cell(e.fid, 8),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_loss_log(log: &[EpochLoss], path: &Path) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["epoch", "loss"])?;
    for e in log {
        w.write_record([e.epoch.to_string(), format!("{:.8}", e.loss)])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
