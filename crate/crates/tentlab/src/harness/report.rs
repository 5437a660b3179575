//! CSV and JSON emission, log-log exponent fits and the main-theorem ratios.

use std::io::Write;

use serde::{Deserialize, Serialize};

use super::{SweepReport, SweepRow};
use crate::error::{LabError, Result};

pub const CSV_COLUMNS: [&str; 17] = [
    "family",
    "param1",
    "param2",
    "d",
    "B2",
    "normW",
    "normTilde",
    "normPplusTilde",
    "transferRatio",
    "dominationC",
    "reverseHolderR",
    "s1Ratio",
    "s2Ratio",
    "gridR",
    "gridA",
    "truncN",
    "seconds",
];

/// Least-squares line through `(log x, log y)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExponentFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
}

/// Fits `log y = slope log x + intercept`; needs four distinct `x` spanning more than 1%.
pub fn fit_exponent(x: &[f64], y: &[f64]) -> Result<ExponentFit> {
    if x.len() != y.len() {
        return Err(LabError::Fit(format!("{} x values against {} y values", x.len(), y.len())));
    }
    if x.iter().chain(y).any(|v| !(*v > 0.0 && v.is_finite())) {
        return Err(LabError::Fit("log fit needs positive finite data".into()));
    }
    let mut distinct: Vec<f64> = x.to_vec();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * b.abs());
    if distinct.len() < 4 {
        return Err(LabError::Fit(format!("only {} distinct x values, need 4", distinct.len())));
    }
    if distinct[distinct.len() - 1] / distinct[0] < 1.01 {
        return Err(LabError::Fit("degenerate x range (all within 1%)".into()));
    }
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxx: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let syy: f64 = ly.iter().map(|b| (b - my).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r2 = if syy == 0.0 { 1.0 } else { (sxy * sxy) / (sxx * syy) };
    Ok(ExponentFit { slope, intercept, r2 })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MainTheoremRatios {
    /// `max ||P||_{L^2(W)} / B2^2`
    pub max_ratio_b2sq: f64,
    /// `max ||P||_{L^2(W~)} / B2^{3/2}`
    pub max_ratio_b2_32: f64,
    /// `max ||P+||_{L^2(W~)} / B2^{3/2}`
    pub max_ratio_pplus_32: f64,
}

/// Maxima over the successful rows; NaN when there are none.
pub fn verify_main_theorem(report: &SweepReport) -> MainTheoremRatios {
    let max = |f: &dyn Fn(&SweepRow) -> f64| report.ok_rows().map(f).fold(f64::NAN, f64::max);
    MainTheoremRatios {
        max_ratio_b2sq: max(&|r| r.norm_w / r.b2.powi(2)),
        max_ratio_b2_32: max(&|r| r.norm_tilde / r.b2.powf(1.5)),
        max_ratio_pplus_32: max(&|r| r.norm_pplus_tilde / r.b2.powf(1.5)),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepSummary {
    /// Slope of `log ||P||_{L^2(W)}` against `log B2`; null when the fit is degenerate.
    pub fitted_exponent: Option<f64>,
    pub fit_r2: Option<f64>,
    #[serde(rename = "max_ratio_B2sq")]
    pub max_ratio_b2sq: f64,
    #[serde(rename = "max_ratio_B2_32")]
    pub max_ratio_b2_32: f64,
    #[serde(rename = "max_ratio_Pplus_B2_32")]
    pub max_ratio_pplus_32: f64,
    pub max_transfer_ratio: f64,
    /// Slope of `log max S1/||g||^2` against `log B2`.
    pub s1_exponent: Option<f64>,
    /// Slope of `log max S2/||g||^2` against `log B2`.
    pub s2_exponent: Option<f64>,
    pub domination_c: Option<f64>,
    pub domination_violations: Option<usize>,
    pub failures: Vec<String>,
}

impl SweepReport {
    pub fn fit(&self) -> Result<ExponentFit> {
        let (x, y): (Vec<f64>, Vec<f64>) = self.ok_rows().map(|r| (r.b2, r.norm_w)).unzip();
        fit_exponent(&x, &y)
    }

    /// Fits of the square functionals against `B2`; the stored ratios are
    /// divided by `B2` and `B2^2`, so those powers are multiplied back.
    pub fn square_fits(&self) -> (Result<ExponentFit>, Result<ExponentFit>) {
        let fit = |power: i32, ratio: &dyn Fn(&SweepRow) -> f64| {
            let (x, y): (Vec<f64>, Vec<f64>) = self.ok_rows().map(|r| (r.b2, ratio(r) * r.b2.powi(power))).unzip();
            fit_exponent(&x, &y)
        };
        (fit(1, &|r| r.s1_ratio), fit(2, &|r| r.s2_ratio))
    }

    pub fn summary(&self) -> SweepSummary {
        let fit = self.fit().ok();
        let ratios = verify_main_theorem(self);
        let (s1, s2) = self.square_fits();
        SweepSummary {
            fitted_exponent: fit.map(|f| f.slope),
            fit_r2: fit.map(|f| f.r2),
            max_ratio_b2sq: ratios.max_ratio_b2sq,
            max_ratio_b2_32: ratios.max_ratio_b2_32,
            max_ratio_pplus_32: ratios.max_ratio_pplus_32,
            max_transfer_ratio: self.ok_rows().map(|r| r.transfer_ratio).fold(f64::NAN, f64::max),
            s1_exponent: s1.ok().map(|f| f.slope),
            s2_exponent: s2.ok().map(|f| f.slope),
            domination_c: self.domination.as_ref().map(|d| d.constant),
            domination_violations: self.domination.as_ref().map(|d| d.violations),
            failures: self.failures(),
        }
    }

    /// One line per row in the fixed column order.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let io = |e: csv::Error| LabError::Data(format!("writing CSV: {e}"));
        let mut w = csv::Writer::from_writer(out);
        w.write_record(CSV_COLUMNS).map_err(io)?;
        for r in &self.rows {
            let f = |x: f64| x.to_string();
            w.write_record([
                r.family.clone(),
                f(r.param1),
                f(r.param2),
                r.d.to_string(),
                f(r.b2),
                f(r.norm_w),
                f(r.norm_tilde),
                f(r.norm_pplus_tilde),
                f(r.transfer_ratio),
                f(r.domination_c),
                f(r.reverse_holder_r),
                f(r.s1_ratio),
                f(r.s2_ratio),
                r.grid_r.to_string(),
                r.grid_a.to_string(),
                r.trunc_n.to_string(),
                format!("{:.3}", r.seconds),
            ])
            .map_err(io)?;
        }
        w.flush().map_err(|e| LabError::Data(format!("writing CSV: {e}")))
    }

    pub fn summary_json(&self) -> Result<String> {
        serde_json::to_string_pretty(&self.summary()).map_err(|e| LabError::Data(format!("encoding JSON: {e}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn exact_square_law() {
        let x = [1.0, 1.5, 2.0, 3.0, 5.0];
        let y: Vec<f64> = x.iter().map(|v| v * v).collect();
        let fit = fit_exponent(&x, &y).unwrap();
        assert_abs_diff_eq!(fit.slope, 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(fit.intercept, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(fit.r2, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn degenerate_fits() {
        assert!(matches!(fit_exponent(&[1.0; 6], &[1.0; 6]), Err(LabError::Fit(_))));
        assert!(fit_exponent(&[1.0, 1.001, 1.002, 1.003], &[1.0, 2.0, 3.0, 4.0]).is_err());
        assert!(fit_exponent(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).is_err());
        assert!(fit_exponent(&[1.0, 2.0], &[1.0]).is_err());
    }
}
