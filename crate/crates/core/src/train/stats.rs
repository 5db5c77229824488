use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use super::{Metrics, TrainError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MetricName {
    Accuracy,
    Precision,
    Recall,
    F1,
}

impl MetricName {
    pub const ALL: [MetricName; 4] = [
        MetricName::Accuracy,
        MetricName::Precision,
        MetricName::Recall,
        MetricName::F1,
    ];

    pub fn of(self, m: &Metrics) -> f64 {
        m.values()[self as usize]
    }

    /// Column header used in the CSV table.
    pub fn header(self) -> &'static str {
        match self {
            MetricName::Accuracy => "Accuracy",
            MetricName::Precision => "Precision",
            MetricName::Recall => "Recall",
            MetricName::F1 => "F1-Score",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    /// Sample standard deviation; 0 when only one iteration exists.
    pub std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub per_iteration: Vec<Metrics>,
    pub summary: BTreeMap<MetricName, Summary>,
    /// Standard deviation undefined (one iteration) and reported as 0.
    pub single_iteration: bool,
    pub p_values: BTreeMap<MetricName, Significance>,
}

impl EvalReport {
    /// `"99.14 ± 1.60"` style cell for one metric, in percent.
    pub fn cell(&self, m: MetricName) -> String {
        let s = self.summary[&m];
        format_cell(s.mean, s.std)
    }

    /// Fill `p_values` by comparing against a baseline run over the same splits.
    pub fn compare_to(&mut self, baseline: &EvalReport) -> Result<(), TrainError> {
        for m in MetricName::ALL {
            let ours: Vec<f64> = self.per_iteration.iter().map(|x| m.of(x)).collect();
            let theirs: Vec<f64> = baseline.per_iteration.iter().map(|x| m.of(x)).collect();
            self.p_values.insert(m, paired_significance(&ours, &theirs)?);
        }
        Ok(())
    }
}

pub fn format_cell(mean: f64, std: f64) -> String {
    format!("{:.2} ± {:.2}", 100.0 * mean, 100.0 * std)
}

pub fn aggregate(reports: &[Metrics]) -> Result<EvalReport, TrainError> {
    if reports.is_empty() {
        return Err(TrainError::EmptyReports);
    }
    let r = reports.len();
    let summary = MetricName::ALL
        .iter()
        .map(|&m| {
            let xs: Vec<f64> = reports.iter().map(|x| m.of(x)).collect();
            if xs.iter().all(|&x| x == xs[0]) {
                return (m, Summary { mean: xs[0], std: 0.0 });
            }
            let mean = crate::util::mean(&xs);
            let std = if r > 1 {
                (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (r - 1) as f64).sqrt()
            } else {
                0.0
            };
            (m, Summary { mean, std })
        })
        .collect();
    Ok(EvalReport {
        per_iteration: reports.to_vec(),
        summary,
        single_iteration: r == 1,
        p_values: BTreeMap::new(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Significance {
    pub p_value: f64,
    /// `None` when the variance of the differences is zero.
    pub t_statistic: Option<f64>,
    pub df: usize,
    /// Differences were constant and nonzero, so t is infinite and p is the 0 limit.
    pub degenerate_variance: bool,
}

/// Two-sided paired t-test on per-iteration differences `ours - baseline`.
pub fn paired_significance(ours: &[f64], baseline: &[f64]) -> Result<Significance, TrainError> {
    if ours.len() != baseline.len() {
        return Err(TrainError::LengthMismatch(ours.len(), baseline.len()));
    }
    let n = ours.len();
    let d: Vec<f64> = ours.iter().zip(baseline).map(|(a, b)| a - b).collect();
    let df = n.saturating_sub(1);
    if d.iter().all(|&x| x == 0.0) {
        return Ok(Significance {
            p_value: 1.0,
            t_statistic: Some(0.0),
            df,
            degenerate_variance: false,
        });
    }
    let mean = crate::util::mean(&d);
    let var = if n > 1 {
        d.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / df as f64
    } else {
        0.0
    };
    if var == 0.0 || n < 2 {
        return Ok(Significance {
            p_value: 0.0,
            t_statistic: None,
            df,
            degenerate_variance: true,
        });
    }
    let t = mean / (var / n as f64).sqrt();
    let dist = StudentsT::new(0.0, 1.0, df as f64).expect("df >= 1");
    let p = (2.0 * dist.cdf(-t.abs())).min(1.0);
    Ok(Significance {
        p_value: p,
        t_statistic: Some(t),
        df,
        degenerate_variance: false,
    })
}
