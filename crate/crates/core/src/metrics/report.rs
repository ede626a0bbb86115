use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::stats::{mae_of, ncc_of, nmad_of, rmse_of};
use super::Gathered;
use crate::error::{Error, Result};

/// Accuracy of one predicted DSM over a masked region.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricsReport {
    pub mae_m: f64,
    pub rmse_m: f64,
    pub nmad_m: f64,
    pub ncc: f64,
    pub n_pixels: usize,
    pub mask_dilation_px: usize,
    pub excluded_nodata: usize,
}

/// One row of the published Berlin accuracy table: MAE, RMSE, NMAD in
/// meters and the unitless NCC.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ReferenceRow {
    pub model: &'static str,
    pub values: [f64; 4],
}

pub const REFERENCE_TABLE: [ReferenceRow; 3] = [
    ReferenceRow { model: "Stereo DSM", values: [3.00, 5.97, 1.48, 0.90] },
    ReferenceRow { model: "cGAN", values: [2.01, 4.78, 0.86, 0.92] },
    ReferenceRow { model: "Fused-cGAN", values: [1.79, 4.36, 0.67, 0.94] },
];

impl MetricsReport {
    /// Checks the report invariants. An MAE above the RMSE by no more than
    /// rounding is pulled down to it.
    pub fn new(
        mae_m: f64,
        rmse_m: f64,
        nmad_m: f64,
        ncc: f64,
        n_pixels: usize,
        mask_dilation_px: usize,
        excluded_nodata: usize,
    ) -> Result<Self> {
        if n_pixels == 0 {
            return Err(Error::Evaluation("report over zero pixels".into()));
        }
        if ![mae_m, rmse_m, nmad_m, ncc].iter().all(|v| v.is_finite()) {
            return Err(Error::Evaluation("non-finite metric".into()));
        }
        if mae_m > rmse_m * (1.0 + 1e-12) {
            return Err(Error::Internal(format!("MAE {mae_m} exceeds RMSE {rmse_m}")));
        }
        if !(-1.0..=1.0).contains(&ncc) || nmad_m < 0.0 || mae_m < 0.0 {
            return Err(Error::Internal(format!("metric out of range: NMAD {nmad_m}, NCC {ncc}")));
        }
        Ok(MetricsReport {
            mae_m: mae_m.min(rmse_m),
            rmse_m,
            nmad_m,
            ncc,
            n_pixels,
            mask_dilation_px,
            excluded_nodata,
        })
    }

    pub fn from_gathered(g: &Gathered, dilation_px: usize) -> Result<Self> {
        if g.is_empty() {
            return Err(Error::Evaluation(format!(
                "no valid pixels inside the mask ({} excluded as nodata)",
                g.excluded_nodata
            )));
        }
        let d = g.deltas();
        MetricsReport::new(
            mae_of(&d)?,
            rmse_of(&d)?,
            nmad_of(&d)?,
            ncc_of(&g.pred, &g.gt)?,
            g.len(),
            dilation_px,
            g.excluded_nodata,
        )
    }

    /// A fixture report carrying one published row (pixel counts are zeroed).
    pub fn from_reference(row: &ReferenceRow) -> Self {
        let [mae_m, rmse_m, nmad_m, ncc] = row.values;
        MetricsReport { mae_m, rmse_m, nmad_m, ncc, n_pixels: 0, mask_dilation_px: 3, excluded_nodata: 0 }
    }

    pub fn values(&self) -> [f64; 4] {
        [self.mae_m, self.rmse_m, self.nmad_m, self.ncc]
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plain numeric struct serializes")
    }

    pub fn save_json(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json() + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn load_json(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::json(path, e))
    }
}

const HEADERS: [&str; 4] = ["MAE, m", "RMSE, m", "NMAD, m", "NCC"];

/// Renders labelled reports as a right-aligned table with the columns
/// MAE, RMSE, NMAD, NCC, two decimals each.
pub fn format_table(rows: &[(&str, &MetricsReport)]) -> String {
    let label_w = rows.iter().map(|(l, _)| l.chars().count()).max().unwrap_or(0);
    let cells: Vec<[String; 4]> = rows.iter().map(|(_, r)| r.values().map(|v| format!("{v:.2}"))).collect();
    let widths: Vec<usize> = (0..4)
        .map(|j| cells.iter().map(|c| c[j].len()).chain([HEADERS[j].len()]).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    let line = |out: &mut String, label: &str, cols: [&str; 4]| {
        let _ = write!(out, "{label:<label_w$}");
        for (c, w) in cols.iter().zip(&widths) {
            let _ = write!(out, "  {c:>w$}");
        }
        out.push('\n');
    };
    line(&mut out, "", HEADERS);
    let rule = label_w + widths.iter().map(|w| w + 2).sum::<usize>();
    out.push_str(&"-".repeat(rule));
    out.push('\n');
    for ((label, _), c) in rows.iter().zip(&cells) {
        line(&mut out, label, [&c[0], &c[1], &c[2], &c[3]]);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_table_layout() {
        let reports: Vec<MetricsReport> = REFERENCE_TABLE.iter().map(MetricsReport::from_reference).collect();
        let rows: Vec<(&str, &MetricsReport)> = REFERENCE_TABLE.iter().map(|r| r.model).zip(&reports).collect();
        let expected = [
            "            MAE, m  RMSE, m  NMAD, m   NCC",
            "------------------------------------------",
            "Stereo DSM    3.00     5.97     1.48  0.90",
            "cGAN          2.01     4.78     0.86  0.92",
            "Fused-cGAN    1.79     4.36     0.67  0.94",
            "",
        ]
        .join("\n");
        assert_eq!(format_table(&rows), expected);
    }

    #[test]
    fn json_round_trip_is_exact() {
        let r = MetricsReport::new(0.1 + 0.2, 1.0 / 3.0, 0.7, 0.987654321, 42, 3, 1).unwrap();
        let back: MetricsReport = serde_json::from_str(&r.to_json()).unwrap();
        assert_eq!(back, r);
        let table = format_table(&[("x", &back)]);
        assert!(table.lines().nth(2).unwrap().ends_with("0.30     0.33     0.70  0.99"));
    }

    #[test]
    fn constructor_enforces_invariants() {
        assert!(matches!(MetricsReport::new(2.0, 1.0, 0.0, 0.5, 1, 3, 0), Err(Error::Internal(_))));
        assert!(matches!(MetricsReport::new(1.0, 1.0, 0.0, 0.5, 0, 3, 0), Err(Error::Evaluation(_))));
        assert!(MetricsReport::new(1.0, 1.0, 0.0, 1.5, 1, 3, 0).is_err());
        let nudged = MetricsReport::new(1.0 + 1e-15, 1.0, 0.0, 0.5, 1, 3, 0).unwrap();
        assert!(nudged.mae_m <= nudged.rmse_m);
    }
}
