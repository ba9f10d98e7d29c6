use std::fmt::Write;

use serde::{Deserialize, Serialize};

use super::VolumeFit;

/// Collected evaluation metrics of one run.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MetricsReport {
    pub dice: Vec<(u32, f64)>,
    pub mcd: Vec<(u32, f64)>,
    pub mean_abs_jdet_dev: Option<f64>,
    pub neg_jac_fraction: Option<f64>,
    pub endpoint_error: Option<f64>,
    pub volumes: Vec<f64>,
    pub volume_fit: Option<VolumeFit>,
}

/// Column order of [`MetricsReport::csv_row`].
pub const CSV_COLUMNS: [&str; 10] = [
    "dice_mean",
    "mcd_mean",
    "mean_abs_jdet_dev",
    "neg_jac_fraction",
    "endpoint_error",
    "fit_slope",
    "fit_intercept",
    "fit_r",
    "fit_residual_variance",
    "fit_degenerate",
];

fn mean(v: &[(u32, f64)]) -> Option<f64> {
    (!v.is_empty()).then(|| v.iter().map(|x| x.1).sum::<f64>() / v.len() as f64)
}

fn cell(v: Option<f64>) -> String {
    v.map(|x| format!("{x}")).unwrap_or_default()
}

impl MetricsReport {
    /// One `key=value` per line, per-label entries as `dice.<label>`.
    pub fn to_kv(&self) -> String {
        let mut s = String::new();
        for (l, v) in &self.dice {
            writeln!(s, "dice.{l}={v}").unwrap();
        }
        for (l, v) in &self.mcd {
            writeln!(s, "mcd.{l}={v}").unwrap();
        }
        let opt = [
            ("mean_abs_jdet_dev", self.mean_abs_jdet_dev),
            ("neg_jac_fraction", self.neg_jac_fraction),
            ("endpoint_error", self.endpoint_error),
        ];
        for (k, v) in opt {
            if let Some(v) = v {
                writeln!(s, "{k}={v}").unwrap();
            }
        }
        for (i, v) in self.volumes.iter().enumerate() {
            writeln!(s, "volume.{i}={v}").unwrap();
        }
        if let Some(f) = &self.volume_fit {
            writeln!(s, "fit.slope={}", f.slope).unwrap();
            writeln!(s, "fit.intercept={}", f.intercept).unwrap();
            writeln!(s, "fit.r={}", f.r).unwrap();
            writeln!(s, "fit.residual_variance={}", f.residual_variance).unwrap();
            writeln!(s, "fit.degenerate={}", f.degenerate).unwrap();
        }
        s
    }

    pub fn csv_header() -> String {
        CSV_COLUMNS.join(",")
    }

    /// Values in [`CSV_COLUMNS`] order; missing values are empty cells.
    pub fn csv_row(&self) -> String {
        let f = self.volume_fit.as_ref();
        [
            cell(mean(&self.dice)),
            cell(mean(&self.mcd)),
            cell(self.mean_abs_jdet_dev),
            cell(self.neg_jac_fraction),
            cell(self.endpoint_error),
            cell(f.map(|f| f.slope)),
            cell(f.map(|f| f.intercept)),
            cell(f.map(|f| f.r)),
            cell(f.map(|f| f.residual_variance)),
            f.map(|f| f.degenerate.to_string()).unwrap_or_default(),
        ]
        .join(",")
    }
}
