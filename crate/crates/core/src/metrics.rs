//! Regression metrics per output variable: RMSE, MAE, the correlation-like
//! ratio `R = sqrt(1 - SSE / sum(A^2))`, and the sample Pearson coefficient.
//!
//! `R` and Pearson's `r` are different quantities; both are reported.

use std::fmt;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::dataset::{Column, Dataset, NormalizationSpec};
use crate::error::{check_len, Error, Result};
use crate::trainers::TrainedModel;

/// Actual and predicted values of one variable, equal non-zero length, finite.
#[derive(Debug, Clone, Copy)]
pub struct PairedSeries<'a> {
    actual: &'a [f64],
    predicted: &'a [f64],
}

impl<'a> PairedSeries<'a> {
    pub fn new(actual: &'a [f64], predicted: &'a [f64]) -> Result<Self> {
        check_len("predicted series", actual.len(), predicted.len())?;
        if actual.is_empty() {
            return Err(Error::UndefinedMetric("empty series".into()));
        }
        if !actual.iter().chain(predicted).all(|v| v.is_finite()) {
            return Err(Error::UndefinedMetric(
                "series contains non-finite values".into(),
            ));
        }
        Ok(PairedSeries { actual, predicted })
    }

    pub fn len(&self) -> usize {
        self.actual.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actual.is_empty()
    }

    pub fn actual(&self) -> &'a [f64] {
        self.actual
    }

    pub fn predicted(&self) -> &'a [f64] {
        self.predicted
    }

    fn residuals(&self) -> impl Iterator<Item = f64> + '_ {
        self.actual.iter().zip(self.predicted).map(|(a, p)| a - p)
    }

    fn sse(&self) -> f64 {
        self.residuals().map(|e| e * e).sum()
    }
}

pub fn rmse(s: &PairedSeries) -> f64 {
    (s.sse() / s.len() as f64).sqrt()
}

pub fn mae(s: &PairedSeries) -> f64 {
    s.residuals().map(f64::abs).sum::<f64>() / s.len() as f64
}

/// `R` together with whether its radicand had to be clamped at zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RatioCorrelation {
    pub value: f64,
    pub clamped: bool,
}

/// `sqrt(max(0, 1 - SSE / sum(A^2)))`. The radicand goes negative when the
/// predictions are worse than predicting zero; that case is clamped and
/// flagged.
pub fn r_paper_detailed(s: &PairedSeries) -> Result<RatioCorrelation> {
    let energy: f64 = s.actual.iter().map(|a| a * a).sum();
    if energy == 0.0 {
        return Err(Error::UndefinedMetric(
            "R undefined: actual series is all zero".into(),
        ));
    }
    let radicand = 1.0 - s.sse() / energy;
    let clamped = radicand < 0.0;
    if clamped {
        log::warn!("R radicand {radicand} clamped to 0 (SSE exceeds sum of squared actuals)");
    }
    Ok(RatioCorrelation {
        value: radicand.max(0.0).sqrt(),
        clamped,
    })
}

pub fn r_paper(s: &PairedSeries) -> Result<f64> {
    r_paper_detailed(s).map(|r| r.value)
}

/// Sample Pearson correlation coefficient.
pub fn r_pearson(s: &PairedSeries) -> Result<f64> {
    let n = s.len();
    if n < 2 {
        return Err(Error::UndefinedMetric(format!(
            "Pearson r needs at least 2 points, got {n}"
        )));
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / n as f64;
    let (ma, mp) = (mean(s.actual), mean(s.predicted));
    let (mut sap, mut saa, mut spp) = (0.0, 0.0, 0.0);
    for (a, p) in s.actual.iter().zip(s.predicted) {
        let (da, dp) = (a - ma, p - mp);
        sap += da * dp;
        saa += da * da;
        spp += dp * dp;
    }
    if saa == 0.0 || spp == 0.0 {
        return Err(Error::UndefinedMetric(
            "Pearson r undefined: zero variance".into(),
        ));
    }
    Ok((sap / (saa.sqrt() * spp.sqrt())).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Train,
    Test,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::Train => "train",
            Stage::Test => "test",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputMetrics {
    pub name: String,
    pub rmse: f64,
    pub r_paper: f64,
    pub r_paper_clamped: bool,
    /// `None` when undefined (fewer than two points or zero variance).
    pub r_pearson: Option<f64>,
    pub mae: f64,
}

impl OutputMetrics {
    pub fn compute(name: impl Into<String>, s: &PairedSeries) -> Result<Self> {
        let r = r_paper_detailed(s)?;
        Ok(OutputMetrics {
            name: name.into(),
            rmse: rmse(s),
            r_paper: r.value,
            r_paper_clamped: r.clamped,
            r_pearson: r_pearson(s).ok(),
            mae: mae(s),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub stage: Stage,
    pub outputs: Vec<OutputMetrics>,
}

impl MetricsReport {
    pub fn output(&self, name: &str) -> Option<&OutputMetrics> {
        self.outputs.iter().find(|o| o.name == name)
    }

    /// Unweighted mean of the per-output RMSE values.
    pub fn mean_rmse(&self) -> f64 {
        self.outputs.iter().map(|o| o.rmse).sum::<f64>() / self.outputs.len() as f64
    }

    /// Number of outputs whose `R` radicand was clamped.
    pub fn clamp_count(&self) -> usize {
        self.outputs.iter().filter(|o| o.r_paper_clamped).count()
    }
}

/// Actual and predicted values for one output variable, in original units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputSeries {
    pub name: String,
    pub actual: Vec<f64>,
    pub predicted: Vec<f64>,
}

impl OutputSeries {
    /// `predicted - actual`, row-aligned.
    pub fn deviations(&self) -> Vec<f64> {
        self.predicted
            .iter()
            .zip(&self.actual)
            .map(|(p, a)| p - a)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub report: MetricsReport,
    pub series: Vec<OutputSeries>,
}

/// Predicts the given rows of `dataset`, maps predictions back to original
/// units with `norm`, and computes per-output metrics against the raw targets.
pub fn evaluate(
    model: &TrainedModel,
    dataset: &Dataset,
    indices: &[usize],
    norm: &NormalizationSpec,
    stage: Stage,
) -> Result<Evaluation> {
    check_len(
        "network outputs",
        Column::OUTPUTS.len(),
        model.spec.output_size(),
    )?;
    if indices.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let samples = dataset.select(indices)?;
    let inputs: Vec<Vec<f64>> = samples.iter().map(|s| norm.normalize_inputs(s)).collect();
    let predicted = model.params.predict_batch(&inputs)?;

    let mut series = Vec::with_capacity(Column::OUTPUTS.len());
    let mut outputs = Vec::with_capacity(Column::OUTPUTS.len());
    for (k, &col) in Column::OUTPUTS.iter().enumerate() {
        let actual: Vec<f64> = samples.iter().map(|s| s.get(col)).collect();
        let pred: Vec<f64> = predicted
            .iter()
            .map(|y| norm.denormalize(col, y[k]))
            .collect();
        let pair = PairedSeries::new(&actual, &pred)?;
        outputs.push(OutputMetrics::compute(col.name(), &pair)?);
        series.push(OutputSeries {
            name: col.name().to_string(),
            actual,
            predicted: pred,
        });
    }
    Ok(Evaluation {
        report: MetricsReport { stage, outputs },
        series,
    })
}

/// One row of the model comparison table.
#[derive(Debug, Clone, Copy)]
pub struct TableRow<'a> {
    pub model_no: usize,
    pub method: &'a str,
    pub structure: &'a str,
    pub train: &'a MetricsReport,
    pub test: &'a MetricsReport,
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), |x| x.to_string())
}

/// Writes the comparison table: one row per model, with per-output RMSE and
/// `R` for the training and testing stages, followed by Pearson `r` and MAE
/// columns. Numbers use shortest round-trip formatting.
pub fn write_table<W: Write>(rows: &[TableRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let names: Vec<&str> = Column::OUTPUTS.iter().map(|c| c.name()).collect();
    let mut header = vec!["model".to_string(), "method".into(), "structure".into()];
    for stage in [Stage::Train, Stage::Test] {
        for metric in ["rmse", "r", "r_pearson", "mae"] {
            header.extend(names.iter().map(|n| format!("{stage}_{metric}_{n}")));
        }
    }
    w.write_record(&header)?;

    for row in rows {
        let mut rec = vec![
            row.model_no.to_string(),
            row.method.into(),
            row.structure.into(),
        ];
        for report in [row.train, row.test] {
            let per = |f: &dyn Fn(&OutputMetrics) -> String| -> Vec<String> {
                names
                    .iter()
                    .map(|n| report.output(n).map_or_else(|| "NA".into(), f))
                    .collect()
            };
            rec.extend(per(&|o| o.rmse.to_string()));
            rec.extend(per(&|o| o.r_paper.to_string()));
            rec.extend(per(&|o| fmt_opt(o.r_pearson)));
            rec.extend(per(&|o| o.mae.to_string()));
        }
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io("metrics table", e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ps<'a>(a: &'a [f64], p: &'a [f64]) -> PairedSeries<'a> {
        PairedSeries::new(a, p).unwrap()
    }

    #[test]
    fn rmse_examples() {
        assert_eq!(rmse(&ps(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0])), 0.0);
        assert!((rmse(&ps(&[0.0, 0.0], &[3.0, 4.0])) - 3.535_533_905_932_737_6).abs() < 1e-15);
        assert_eq!(rmse(&ps(&[2.5], &[1.25])), 1.25);
    }

    #[test]
    fn r_paper_examples() {
        assert_eq!(r_paper(&ps(&[1.0, 2.0], &[1.0, 2.0])).unwrap(), 1.0);
        assert_eq!(r_paper(&ps(&[1.0, 1.0], &[0.0, 0.0])).unwrap(), 0.0);
        let r = r_paper(&ps(&[2.0], &[1.0])).unwrap();
        assert!((r - 0.866_025_403_784_438_6).abs() < 1e-15);
        assert!(r_paper(&ps(&[0.0, 0.0], &[1.0, 1.0])).is_err());
    }

    #[test]
    fn r_paper_clamps_negative_radicand() {
        let r = r_paper_detailed(&ps(&[1.0, 1.0], &[5.0, -3.0])).unwrap();
        assert_eq!(r.value, 0.0);
        assert!(r.clamped);
        let r = r_paper_detailed(&ps(&[1.0, 1.0], &[1.1, 0.9])).unwrap();
        assert!(!r.clamped);
    }

    #[test]
    fn r_paper_is_not_shift_invariant() {
        let (a, p) = ([1.0, 2.0, 3.0], [1.5, 2.0, 2.5]);
        let shifted_a: Vec<f64> = a.iter().map(|v| v + 10.0).collect();
        let shifted_p: Vec<f64> = p.iter().map(|v| v + 10.0).collect();
        let r0 = r_paper(&ps(&a, &p)).unwrap();
        let r1 = r_paper(&ps(&shifted_a, &shifted_p)).unwrap();
        assert!((r0 - r1).abs() > 1e-3);
    }

    #[test]
    fn pearson_examples() {
        let a = [1.0, 2.0, 3.0];
        assert!((r_pearson(&ps(&a, &a)).unwrap() - 1.0).abs() < 1e-15);
        let neg = [-1.0, -2.0, -3.0];
        assert!((r_pearson(&ps(&a, &neg)).unwrap() + 1.0).abs() < 1e-15);
        let r = r_pearson(&ps(&a, &[1.0, 2.0, 4.0])).unwrap();
        // 3 / sqrt(2 * 14/3)
        assert!((r - 0.981_980_506_061_965_6).abs() < 1e-15);
        assert!(r_pearson(&ps(&[1.0], &[1.0])).is_err());
        assert!(r_pearson(&ps(&[1.0, 1.0], &[1.0, 2.0])).is_err());
        assert!(r_pearson(&ps(&[1.0, 2.0], &[3.0, 3.0])).is_err());
    }

    #[test]
    fn mae_examples() {
        assert_eq!(mae(&ps(&[4.0, 5.0], &[4.0, 5.0])), 0.0);
        assert_eq!(mae(&ps(&[0.0, 0.0], &[3.0, -3.0])), 3.0);
    }

    #[test]
    fn series_validation() {
        assert!(PairedSeries::new(&[], &[]).is_err());
        assert!(PairedSeries::new(&[1.0], &[1.0, 2.0]).is_err());
        assert!(PairedSeries::new(&[f64::NAN], &[1.0]).is_err());
    }

    #[test]
    fn report_accessors() {
        let a = [1.0, 2.0, 3.0];
        let bs = OutputMetrics::compute("BS", &ps(&a, &[1.0, 2.0, 3.5])).unwrap();
        let pl = OutputMetrics::compute("PL", &ps(&a, &[9.0, 9.0, 9.0])).unwrap();
        assert!(pl.r_pearson.is_none());
        assert!(pl.r_paper_clamped);
        let report = MetricsReport {
            stage: Stage::Test,
            outputs: vec![bs.clone(), pl.clone()],
        };
        assert_eq!(report.clamp_count(), 1);
        assert_eq!(report.mean_rmse(), (bs.rmse + pl.rmse) / 2.0);
        assert_eq!(report.output("PL"), Some(&pl));
    }

    fn series() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
        (2usize..40).prop_flat_map(|n| {
            (
                prop::collection::vec(-100.0f64..100.0, n),
                prop::collection::vec(-100.0f64..100.0, n),
            )
        })
    }

    proptest! {
        #[test]
        fn mae_never_exceeds_rmse((a, p) in series()) {
            let s = ps(&a, &p);
            prop_assert!(mae(&s) <= rmse(&s) * (1.0 + 1e-12) + 1e-12);
        }

        #[test]
        fn shift_invariance((a, p) in series(), shift in -50.0f64..50.0) {
            let sa: Vec<f64> = a.iter().map(|v| v + shift).collect();
            let sp: Vec<f64> = p.iter().map(|v| v + shift).collect();
            let (s0, s1) = (ps(&a, &p), ps(&sa, &sp));
            prop_assert!((rmse(&s0) - rmse(&s1)).abs() <= 1e-9 * (1.0 + rmse(&s0)));
            prop_assert!((mae(&s0) - mae(&s1)).abs() <= 1e-9 * (1.0 + mae(&s0)));
            if let (Ok(r0), Ok(r1)) = (r_pearson(&s0), r_pearson(&s1)) {
                prop_assert!((r0 - r1).abs() <= 1e-8);
            }
        }

        #[test]
        fn pearson_affine_invariance((a, p) in series(), scale in 0.01f64..100.0, offset in -50.0f64..50.0) {
            let q: Vec<f64> = p.iter().map(|v| scale * v + offset).collect();
            if let (Ok(r0), Ok(r1)) = (r_pearson(&ps(&a, &p)), r_pearson(&ps(&a, &q))) {
                prop_assert!((r0 - r1).abs() <= 1e-9);
                prop_assert!((-1.0..=1.0).contains(&r0));
            }
        }
    }
}
