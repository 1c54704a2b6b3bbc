//! Image quality metrics: PSNR, SSIM, LOE, NIQE and the cross discriminator score.

mod cds;
pub mod filter;
mod fullref;
pub mod ggd;
mod loe;
mod niqe;

pub use cds::{cds, cds_image, logistic};
pub use fullref::{psnr, ssim, PSNR_CAP};
pub use ggd::{fit_aggd, fit_ggd, AggdFit, GgdFit};
pub use loe::loe;
pub use niqe::{fit_niqe_model, niqe_features, niqe_score, NiqeConfig, NiqeModel, NIQE_FEATURES};

use std::fmt::Write as _;

/// Metric columns in output order.
pub const COLUMNS: [&str; 5] = ["psnr", "ssim", "niqe", "loe", "cds"];

/// One image's scores; a column is `None` when it was not computed.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricRow {
    pub name: String,
    pub values: [Option<f64>; 5],
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct MetricReport {
    pub rows: Vec<MetricRow>,
}

impl MetricReport {
    pub fn push(&mut self, row: MetricRow) {
        self.rows.push(row);
    }

    /// Arithmetic mean of each column over the rows that have it.
    pub fn means(&self) -> [Option<f64>; 5] {
        let mut out = [None; 5];
        for (c, slot) in out.iter_mut().enumerate() {
            let vals: Vec<f64> = self.rows.iter().filter_map(|r| r.values[c]).collect();
            if !vals.is_empty() {
                *slot = Some(vals.iter().sum::<f64>() / vals.len() as f64);
            }
        }
        out
    }

    fn active(&self) -> Vec<usize> {
        (0..COLUMNS.len()).filter(|&c| self.rows.iter().any(|r| r.values[c].is_some())).collect()
    }

    fn cell(v: Option<f64>) -> String {
        v.map(|x| format!("{x:.4}")).unwrap_or_default()
    }

    /// CSV with a header and a trailing `mean` row.
    pub fn to_csv(&self) -> String {
        let cols = self.active();
        let mut s = String::from("image");
        for &c in &cols {
            s.push(',');
            s.push_str(COLUMNS[c]);
        }
        s.push('\n');
        let means = self.means();
        let rows = self.rows.iter().map(|r| (r.name.as_str(), &r.values));
        for (name, vals) in rows.chain(std::iter::once(("mean", &means))) {
            s.push_str(name);
            for &c in &cols {
                s.push(',');
                s.push_str(&Self::cell(vals[c]));
            }
            s.push('\n');
        }
        s
    }

    /// Right-aligned plain-text table of the same content.
    pub fn to_text(&self) -> String {
        let cols = self.active();
        let means = self.means();
        let mut table: Vec<Vec<String>> =
            vec![std::iter::once("image".to_string()).chain(cols.iter().map(|&c| COLUMNS[c].to_string())).collect()];
        let rows = self.rows.iter().map(|r| (r.name.as_str(), &r.values));
        for (name, vals) in rows.chain(std::iter::once(("mean", &means))) {
            table.push(std::iter::once(name.to_string()).chain(cols.iter().map(|&c| Self::cell(vals[c]))).collect());
        }
        let widths: Vec<usize> =
            (0..table[0].len()).map(|j| table.iter().map(|r| r[j].len()).max().unwrap_or(0)).collect();
        let mut s = String::new();
        for r in &table {
            for (j, cell) in r.iter().enumerate() {
                if j == 0 {
                    let _ = write!(s, "{cell:<w$}", w = widths[0]);
                } else {
                    let _ = write!(s, "  {cell:>w$}", w = widths[j]);
                }
            }
            s.push('\n');
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn report_mean_and_formats() {
        let mut r = MetricReport::default();
        r.push(MetricRow { name: "a.ppm".into(), values: [Some(20.0), Some(0.5), None, None, None] });
        r.push(MetricRow { name: "b.ppm".into(), values: [Some(30.0), Some(0.7), None, None, None] });
        assert_eq!(r.means()[0], Some(25.0));
        let csv = r.to_csv();
        assert_eq!(csv.lines().next().unwrap(), "image,psnr,ssim");
        assert_eq!(csv.lines().last().unwrap(), "mean,25.0000,0.6000");
        assert_eq!(r.to_text().lines().count(), 4);
    }
}
