//! Prediction metrics, renewable coverage and a least-squares baseline.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("{metric}: {reason}")]
    Input { metric: &'static str, reason: String },
    #[error("linear fit: {0}")]
    Fit(String),
}

fn input(metric: &'static str, reason: impl Into<String>) -> EvalError {
    EvalError::Input {
        metric,
        reason: reason.into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegressionMetrics {
    pub mae: f64,
    pub rmse: f64,
    pub r2: f64,
    /// mean(ŷ − y): positive when the model over-predicts.
    pub mbe: f64,
}

fn check_pair(metric: &'static str, predicted: &[f64], actual: &[f64], min_len: usize) -> Result<(), EvalError> {
    if predicted.len() != actual.len() {
        return Err(input(
            metric,
            format!("{} predictions for {} observations", predicted.len(), actual.len()),
        ));
    }
    if predicted.len() < min_len {
        return Err(input(metric, format!("needs at least {min_len} samples, got {}", predicted.len())));
    }
    Ok(())
}

pub fn regression_metrics(predicted: &[f64], actual: &[f64]) -> Result<RegressionMetrics, EvalError> {
    check_pair("regression metrics", predicted, actual, 2)?;
    let n = actual.len() as f64;
    let mean_y = actual.iter().sum::<f64>() / n;
    let ss_tot: f64 = actual.iter().map(|y| (y - mean_y).powi(2)).sum();
    if ss_tot == 0.0 {
        return Err(input("r2", "observations are constant"));
    }
    let (mut abs, mut sq, mut bias) = (0.0, 0.0, 0.0);
    for (p, y) in predicted.iter().zip(actual) {
        let e = p - y;
        abs += e.abs();
        sq += e * e;
        bias += e;
    }
    Ok(RegressionMetrics {
        mae: abs / n,
        rmse: (sq / n).sqrt(),
        r2: 1.0 - sq / ss_tot,
        mbe: bias / n,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub tn: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassificationMetrics {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub confusion: Confusion,
    /// Set when precision or recall had an empty denominator and was reported as 0.
    pub degenerate: bool,
}

/// Scores for "high consumption" periods: a value at or above `threshold`
/// counts as high in both series.
pub fn classification_metrics(predicted: &[f64], actual: &[f64], threshold: f64) -> Result<ClassificationMetrics, EvalError> {
    check_pair("classification metrics", predicted, actual, 1)?;
    if !threshold.is_finite() {
        return Err(input("classification metrics", "threshold must be finite"));
    }
    let mut c = Confusion::default();
    for (p, y) in predicted.iter().zip(actual) {
        match (*p >= threshold, *y >= threshold) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, true) => c.fn_ += 1,
            (false, false) => c.tn += 1,
        }
    }
    let ratio = |num: usize, den: usize| if den == 0 { None } else { Some(num as f64 / den as f64) };
    let precision = ratio(c.tp, c.tp + c.fp);
    let recall = ratio(c.tp, c.tp + c.fn_);
    let (p, r) = (precision.unwrap_or(0.0), recall.unwrap_or(0.0));
    let f1 = if p + r > 0.0 { 2.0 * p * r / (p + r) } else { 0.0 };
    Ok(ClassificationMetrics {
        accuracy: (c.tp + c.tn) as f64 / predicted.len() as f64,
        precision: p,
        recall: r,
        f1,
        confusion: c,
        degenerate: precision.is_none() || recall.is_none(),
    })
}

/// Median; mean of the two middle values for even lengths.
pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    Some(if v.len().is_multiple_of(2) { (v[m - 1] + v[m]) / 2.0 } else { v[m] })
}

/// Share of baseline consumption covered by renewable output, percent.
pub fn renewable_coverage(renewable_kwh: f64, baseline_kwh: f64) -> Result<f64, EvalError> {
    if !(baseline_kwh > 0.0) {
        return Err(input("renewable coverage", format!("baseline {baseline_kwh} must be > 0")));
    }
    if !(renewable_kwh >= 0.0) {
        return Err(input("renewable coverage", format!("renewable output {renewable_kwh} must be >= 0")));
    }
    Ok(100.0 * renewable_kwh / baseline_kwh)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoverageRow {
    pub baseline_kwh: f64,
    pub optimized_kwh: f64,
    pub solar_kwh: f64,
    pub wind_kwh: f64,
    pub renewable_kwh: f64,
    pub proposed_pct: f64,
    pub traditional_pct: f64,
}

impl CoverageRow {
    /// Recomputed proposed coverage minus the stored value.
    pub fn coverage_residual(&self) -> Result<f64, EvalError> {
        Ok(renewable_coverage(self.renewable_kwh, self.baseline_kwh)? - self.proposed_pct)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub model: String,
    pub mae: f64,
    pub rmse: f64,
    pub r2: f64,
    pub mbe: f64,
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub n_samples: usize,
}

impl MetricsReport {
    pub fn compute(model: &str, predicted: &[f64], actual: &[f64], threshold: f64) -> Result<Self, EvalError> {
        let reg = regression_metrics(predicted, actual)?;
        let cls = classification_metrics(predicted, actual, threshold)?;
        Ok(MetricsReport {
            model: model.to_owned(),
            mae: reg.mae,
            rmse: reg.rmse,
            r2: reg.r2,
            mbe: reg.mbe,
            accuracy: cls.accuracy,
            precision: cls.precision,
            recall: cls.recall,
            f1: cls.f1,
            n_samples: actual.len(),
        })
    }

    fn values(&self) -> [f64; 8] {
        [
            self.mae,
            self.rmse,
            self.r2,
            self.mbe,
            self.accuracy,
            self.precision,
            self.recall,
            self.f1,
        ]
    }
}

pub const REPORT_HEADER: [&str; 9] = [
    "Model", "MAE", "RMSE", "R2", "MBE", "Accuracy", "Precision", "Recall", "F1",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub threshold: f64,
    pub rows: Vec<MetricsReport>,
}

impl ComparisonReport {
    pub fn to_csv(&self) -> String {
        let mut out = REPORT_HEADER.join(",");
        out.push('\n');
        for r in &self.rows {
            out.push_str(&r.model);
            for v in r.values() {
                let _ = write!(out, ",{v}");
            }
            out.push('\n');
        }
        out
    }

    pub fn to_text(&self) -> String {
        let width = self
            .rows
            .iter()
            .map(|r| r.model.len())
            .chain([REPORT_HEADER[0].len()])
            .max()
            .unwrap_or(5);
        let mut out = format!("{:<width$}", REPORT_HEADER[0]);
        for h in &REPORT_HEADER[1..] {
            let _ = write!(out, " {h:>9}");
        }
        out.push('\n');
        for r in &self.rows {
            let _ = write!(out, "{:<width$}", r.model);
            for v in r.values() {
                let _ = write!(out, " {v:>9.4}");
            }
            out.push('\n');
        }
        let _ = writeln!(out, "(high-consumption threshold {:.4} kWh)", self.threshold);
        out
    }
}

/// One report row per named run, in the given order. The classification
/// threshold defaults to the median of `actual`.
pub fn comparison_report(runs: &[(String, Vec<f64>)], actual: &[f64], threshold: Option<f64>) -> Result<ComparisonReport, EvalError> {
    let threshold = match threshold {
        Some(t) => t,
        None => median(actual).ok_or_else(|| input("comparison report", "no observations"))?,
    };
    let rows = runs
        .iter()
        .map(|(name, pred)| MetricsReport::compute(name, pred, actual, threshold))
        .collect::<Result<_, _>>()?;
    Ok(ComparisonReport { threshold, rows })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub intercept: f64,
    pub coefficients: Vec<f64>,
}

impl LinearModel {
    /// Ordinary least squares with intercept via the normal equations.
    pub fn fit(features: &[Vec<f64>], targets: &[f64]) -> Result<Self, EvalError> {
        let n = features.len();
        if n != targets.len() {
            return Err(EvalError::Fit(format!("{n} rows for {} targets", targets.len())));
        }
        let width = features.first().map_or(0, Vec::len);
        if features.iter().any(|r| r.len() != width) {
            return Err(EvalError::Fit("ragged feature rows".into()));
        }
        if n < width + 1 {
            return Err(EvalError::Fit(format!("{n} samples cannot determine {} parameters", width + 1)));
        }
        let x = DMatrix::from_fn(n, width + 1, |i, j| if j == 0 { 1.0 } else { features[i][j - 1] });
        let y = DVector::from_column_slice(targets);
        let gram = x.transpose() * &x;
        let rhs = x.transpose() * y;
        let max_diag = gram.diagonal().max();
        let chol = gram
            .clone()
            .cholesky()
            .ok_or_else(|| EvalError::Fit("design matrix is rank deficient".into()))?;
        let min_pivot = chol.l().diagonal().map(|d| d * d).min();
        if min_pivot <= 1e-12 * max_diag {
            return Err(EvalError::Fit("design matrix is rank deficient".into()));
        }
        let beta = chol.solve(&rhs);
        Ok(LinearModel {
            intercept: beta[0],
            coefficients: beta.iter().skip(1).copied().collect(),
        })
    }

    pub fn predict(&self, features: &[Vec<f64>]) -> Vec<f64> {
        features
            .iter()
            .map(|r| self.intercept + r.iter().zip(&self.coefficients).map(|(x, b)| x * b).sum::<f64>())
            .collect()
    }
}

/// Seeded shuffle of `0..n` split 80/20 into (train, test).
pub fn train_test_split(n: usize, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_test = ((n as f64) * 0.2).round() as usize;
    let test = idx.split_off(n - n_test);
    (idx, test)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearBaselineFit {
    pub model: LinearModel,
    pub report: MetricsReport,
    pub test_indices: Vec<usize>,
}

/// Fits the baseline on a seeded 80% split and scores it on the rest.
pub fn fit_linear_baseline(features: &[Vec<f64>], targets: &[f64], seed: u64, threshold: Option<f64>) -> Result<LinearBaselineFit, EvalError> {
    if features.len() != targets.len() {
        return Err(EvalError::Fit(format!("{} rows for {} targets", features.len(), targets.len())));
    }
    let (train, test) = train_test_split(features.len(), seed);
    if test.len() < 2 {
        return Err(EvalError::Fit("held-out split needs at least two samples".into()));
    }
    let pick = |ix: &[usize]| -> (Vec<Vec<f64>>, Vec<f64>) {
        (ix.iter().map(|&i| features[i].clone()).collect(), ix.iter().map(|&i| targets[i]).collect())
    };
    let (x_train, y_train) = pick(&train);
    let (x_test, y_test) = pick(&test);
    let model = LinearModel::fit(&x_train, &y_train)?;
    let threshold = threshold.or_else(|| median(&y_test)).expect("test split is non-empty");
    let report = MetricsReport::compute("Linear Regression", &model.predict(&x_test), &y_test, threshold)?;
    Ok(LinearBaselineFit {
        model,
        report,
        test_indices: test,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramBin {
    pub lower: f64,
    pub upper: f64,
    pub count: usize,
}

/// Equal-width histogram over [min, max]; the last bin is closed.
pub fn histogram(values: &[f64], bins: usize) -> Vec<HistogramBin> {
    if values.is_empty() || bins == 0 {
        return Vec::new();
    }
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let width = if hi > lo { (hi - lo) / bins as f64 } else { 1.0 };
    let mut out: Vec<HistogramBin> = (0..bins)
        .map(|b| HistogramBin {
            lower: lo + b as f64 * width,
            upper: lo + (b + 1) as f64 * width,
            count: 0,
        })
        .collect();
    for v in values {
        let b = (((v - lo) / width) as usize).min(bins - 1);
        out[b].count += 1;
    }
    out
}

/// Running sum of absolute errors.
pub fn cumulative_abs_error(errors: &[f64]) -> Vec<f64> {
    errors
        .iter()
        .scan(0.0, |acc, e| {
            *acc += e.abs();
            Some(*acc)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_fit() {
        let y = [1.0, 2.0, 4.0];
        let m = regression_metrics(&y, &y).unwrap();
        assert_eq!((m.mae, m.rmse, m.r2, m.mbe), (0.0, 0.0, 1.0, 0.0));
    }

    #[test]
    fn two_point_hand_values() {
        let m = regression_metrics(&[1.0, 1.0], &[0.0, 2.0]).unwrap();
        assert_eq!((m.mae, m.rmse, m.r2, m.mbe), (1.0, 1.0, 0.0, 0.0));
    }

    #[test]
    fn regression_errors_name_the_metric() {
        let e = regression_metrics(&[1.0, 2.0], &[3.0, 3.0]).unwrap_err();
        assert!(e.to_string().starts_with("r2"), "{e}");
        let e = regression_metrics(&[1.0], &[3.0, 3.0]).unwrap_err();
        assert!(e.to_string().contains("regression"), "{e}");
    }

    #[test]
    fn classification_hand_values() {
        let aligned = classification_metrics(&[0.0, 5.0, 6.0], &[1.0, 7.0, 9.0], 4.0).unwrap();
        assert_eq!((aligned.accuracy, aligned.precision, aligned.recall, aligned.f1), (1.0, 1.0, 1.0, 1.0));

        // TP=2, FP=1, FN=1, TN=2
        let pred = [1.0, 1.0, 1.0, 0.0, 0.0, 0.0];
        let act = [1.0, 1.0, 0.0, 1.0, 0.0, 0.0];
        let m = classification_metrics(&pred, &act, 0.5).unwrap();
        assert_eq!(m.confusion, Confusion { tp: 2, fp: 1, fn_: 1, tn: 2 });
        assert!((m.precision - 2.0 / 3.0).abs() < 1e-15);
        assert!((m.recall - 2.0 / 3.0).abs() < 1e-15);
        assert!((m.f1 - 2.0 / 3.0).abs() < 1e-15);
        assert!((m.accuracy - 4.0 / 6.0).abs() < 1e-15);

        let m = classification_metrics(&[9.0; 4], &[9.0, 9.0, 0.0, 0.0], 5.0).unwrap();
        assert_eq!((m.precision, m.recall), (0.5, 1.0));
        assert!(!m.degenerate);
    }

    #[test]
    fn degenerate_denominators_report_zero() {
        let m = classification_metrics(&[0.0, 0.0], &[0.0, 0.0], 1.0).unwrap();
        assert_eq!((m.precision, m.recall, m.f1), (0.0, 0.0, 0.0));
        assert!(m.degenerate);
        assert!(classification_metrics(&[], &[], 1.0).is_err());
    }

    #[test]
    fn coverage_values() {
        assert!((renewable_coverage(1.269, 14.063).unwrap() - 9.024).abs() < 5e-4);
        assert_eq!(renewable_coverage(0.0, 3.0).unwrap(), 0.0);
        assert!((renewable_coverage(0.459, 7.470).unwrap() - 6.140).abs() < 0.01);
        assert!(renewable_coverage(1.0, 0.0).is_err());
    }

    #[test]
    fn linear_fit_recovers_noiseless_coefficients() {
        let x: Vec<Vec<f64>> = (0..20).map(|i| vec![i as f64 * 0.5, ((i * 7) % 5) as f64]).collect();
        let y: Vec<f64> = x.iter().map(|r| 1.5 + 2.0 * r[0] - 0.75 * r[1]).collect();
        let m = LinearModel::fit(&x, &y).unwrap();
        assert!((m.intercept - 1.5).abs() < 1e-8);
        assert!((m.coefficients[0] - 2.0).abs() < 1e-8);
        assert!((m.coefficients[1] + 0.75).abs() < 1e-8);
        let fit = fit_linear_baseline(&x, &y, 3, None).unwrap();
        assert!((fit.report.r2 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn constant_target_gives_mean_intercept() {
        let x: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64, (i * i) as f64]).collect();
        let y = vec![3.25; 10];
        let m = LinearModel::fit(&x, &y).unwrap();
        assert!((m.intercept - 3.25).abs() < 1e-9);
        assert!(m.coefficients.iter().all(|c| c.abs() < 1e-9));
    }

    #[test]
    fn rank_deficiency_is_reported() {
        let x: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64, 2.0 * i as f64]).collect();
        let y: Vec<f64> = (0..10).map(|i| i as f64).collect();
        assert!(matches!(LinearModel::fit(&x, &y), Err(EvalError::Fit(_))));
    }

    #[test]
    fn report_single_perfect_run() {
        let y = vec![1.0, 2.0, 3.0, 4.0];
        let r = comparison_report(&[("exact".into(), y.clone())], &y, None).unwrap();
        let row = &r.rows[0];
        assert_eq!(
            row.values(),
            [0.0, 0.0, 1.0, 0.0, 1.0, 1.0, 1.0, 1.0]
        );
        assert!(r.to_csv().starts_with("Model,MAE,RMSE,R2,MBE,Accuracy,Precision,Recall,F1\nexact,0,0,1,0,1,1,1,1\n"));
        assert!(r.to_text().contains("exact"));
    }

    #[test]
    fn histogram_counts_sum() {
        let v = [0.1, -0.4, 0.3, 0.3, 2.0, -1.0];
        let h = histogram(&v, 4);
        assert_eq!(h.iter().map(|b| b.count).sum::<usize>(), v.len());
        let c = cumulative_abs_error(&v);
        assert!(c.windows(2).all(|w| w[1] >= w[0]));
    }
}
