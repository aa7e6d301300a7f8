//! CSV and Markdown result files.
//!
//! Floats in CSV files use Rust's shortest round-trip formatting, so the
//! values read back are bit-identical to the ones written.

use std::fs;
use std::path::Path;

use denobench_core::train::{EvalReport, TrainHistory};
use serde::{Deserialize, Serialize};

use crate::error::{io_err, BenchError, Result};

/// Method label of the noisy-input baseline rows.
pub const NOISY_METHOD: &str = "Noisy";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub sigma: u16,
    pub method: String,
    pub psnr_mean: f64,
    pub psnr_std: f64,
    pub ssim_mean: f64,
    pub ssim_std: f64,
}

impl SummaryRow {
    pub fn from_report(report: &EvalReport) -> Self {
        Self {
            sigma: report.sigma_raw,
            method: report.method.clone(),
            psnr_mean: report.psnr_stats.mean,
            psnr_std: report.psnr_stats.std,
            ssim_mean: report.ssim_stats.mean,
            ssim_std: report.ssim_stats.std,
        }
    }

    pub fn baseline(report: &EvalReport) -> Self {
        Self {
            sigma: report.sigma_raw,
            method: NOISY_METHOD.into(),
            psnr_mean: report.baseline_psnr_stats.mean,
            psnr_std: report.baseline_psnr_stats.std,
            ssim_mean: report.baseline_ssim_stats.mean,
            ssim_std: report.baseline_ssim_stats.std,
        }
    }
}

/// σ ascending, then method name in byte order.
pub fn sort_rows(rows: &mut [SummaryRow]) {
    rows.sort_by(|a, b| a.sigma.cmp(&b.sigma).then_with(|| a.method.cmp(&b.method)));
}

fn csv_err(path: &Path) -> impl FnOnce(csv::Error) -> BenchError + '_ {
    move |source| BenchError::Csv { path: path.to_path_buf(), source }
}

fn write_records<T: Serialize>(path: &Path, records: impl IntoIterator<Item = T>) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err(path))?;
    for r in records {
        w.serialize(r).map_err(csv_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

pub fn write_summary_csv(path: &Path, rows: &[SummaryRow]) -> Result<()> {
    if rows.is_empty() {
        // The csv writer only emits headers alongside a first record.
        return fs::write(path, "sigma,method,psnr_mean,psnr_std,ssim_mean,ssim_std\n").map_err(io_err(path));
    }
    write_records(path, rows)
}

pub fn read_summary_csv(path: &Path) -> Result<Vec<SummaryRow>> {
    let mut r = csv::Reader::from_path(path).map_err(csv_err(path))?;
    r.deserialize().collect::<std::result::Result<_, _>>().map_err(csv_err(path))
}

/// Markdown table with one row per (σ, method), values to three decimals.
pub fn render_markdown(rows: &[SummaryRow]) -> String {
    let mut out = String::from("| σ | Method | PSNR (dB) | SSIM |\n|---|---|---|---|\n");
    for r in rows {
        out.push_str(&format!(
            "| {} | {} | {:.3} ± {:.3} | {:.3} ± {:.3} |\n",
            r.sigma, r.method, r.psnr_mean, r.psnr_std, r.ssim_mean, r.ssim_std
        ));
    }
    out
}

#[derive(Serialize)]
struct HistoryRecord {
    epoch: usize,
    train_loss: f64,
    val_loss: f64,
    is_best: bool,
}

pub fn write_history_csv(path: &Path, history: &TrainHistory) -> Result<()> {
    write_records(
        path,
        history.epochs.iter().map(|e| HistoryRecord {
            epoch: e.epoch,
            train_loss: e.train_loss,
            val_loss: e.val_loss,
            is_best: e.is_best,
        }),
    )
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImageRecord {
    pub id: String,
    pub psnr: f64,
    pub ssim: f64,
    pub baseline_psnr: f64,
    pub baseline_ssim: f64,
}

pub fn write_per_image_csv(path: &Path, report: &EvalReport) -> Result<()> {
    write_records(
        path,
        (0..report.ids.len()).map(|i| ImageRecord {
            id: report.ids[i].clone(),
            psnr: report.psnr[i],
            ssim: report.ssim[i],
            baseline_psnr: report.baseline_psnr[i],
            baseline_ssim: report.baseline_ssim[i],
        }),
    )
}

pub fn read_per_image_csv(path: &Path) -> Result<Vec<ImageRecord>> {
    let mut r = csv::Reader::from_path(path).map_err(csv_err(path))?;
    r.deserialize().collect::<std::result::Result<_, _>>().map_err(csv_err(path))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(sigma: u16, method: &str, p: f64) -> SummaryRow {
        SummaryRow { sigma, method: method.into(), psnr_mean: p, psnr_std: 1.0, ssim_mean: 0.5, ssim_std: 0.1 }
    }

    #[test]
    fn ordering() {
        let mut rows = vec![row(25, "CADTra", 1.0), row(10, NOISY_METHOD, 1.0), row(10, "DCMIEDNet", 1.0), row(10, "CADTra", 1.0), row(10, "CNN-DAE", 1.0)];
        sort_rows(&mut rows);
        let order: Vec<(u16, &str)> = rows.iter().map(|r| (r.sigma, r.method.as_str())).collect();
        assert_eq!(order, [(10, "CADTra"), (10, "CNN-DAE"), (10, "DCMIEDNet"), (10, "Noisy"), (25, "CADTra")]);
    }

    #[test]
    fn markdown_row_format() {
        let r = SummaryRow {
            sigma: 10,
            method: "CADTra".into(),
            psnr_mean: 31.895,
            psnr_std: 2.431,
            ssim_mean: 0.847,
            ssim_std: 0.061,
        };
        assert!(render_markdown(&[r]).contains("| 10 | CADTra | 31.895 ± 2.431 | 0.847 ± 0.061 |\n"));
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.csv");
        let rows = vec![row(10, "CNN-DAE", 0.1 + 0.2), row(15, "Noisy", f64::INFINITY)];
        write_summary_csv(&path, &rows).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("sigma,method,psnr_mean,psnr_std,ssim_mean,ssim_std\n"));
        assert!(text.contains("0.30000000000000004"));
        assert_eq!(read_summary_csv(&path).unwrap(), rows);
    }
}
