//! Transfer evaluation: per-defense accuracy, aggregate scores and report
//! files.

mod report;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use report::{
    emit_report, evaluate_attack, load_report, read_metrics_csv, transfer_matrix, CurvePoint, Defense, EvalReport,
    MetricRow, ModelScore, ReportBundle, ReportMeta, TransferMatrix,
};

/// Formats a float with 17 significant digits, enough to round-trip any
/// `f64`.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// Fraction of `targets` whose predicted label equals the true label.
pub fn accuracy(predictions: &[usize], true_labels: &[usize], targets: &[usize]) -> Result<f64> {
    if targets.is_empty() {
        return Err(Error::Config("accuracy over an empty target set".into()));
    }
    let mut correct = 0usize;
    for &v in targets {
        let (Some(p), Some(y)) = (predictions.get(v), true_labels.get(v)) else {
            return Err(Error::Dimension(format!("target {v} has no prediction or label")));
        };
        correct += usize::from(p == y);
    }
    Ok(correct as f64 / targets.len() as f64)
}

/// Descending nonnegative weights summing to one, applied to scores sorted
/// in descending order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct MetricWeights {
    w: Vec<f64>,
}

impl MetricWeights {
    pub fn new(w: Vec<f64>) -> Result<Self> {
        if w.is_empty() {
            return Err(Error::Config("metric weights are empty".into()));
        }
        if w.iter().any(|x| !x.is_finite() || *x < 0.0) {
            return Err(Error::Config(format!("metric weights {w:?} must be finite and nonnegative")));
        }
        if w.windows(2).any(|p| p[0] < p[1]) {
            return Err(Error::Config(format!("metric weights {w:?} must be non-increasing")));
        }
        let sum: f64 = w.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!("metric weights sum to {sum}, not 1")));
        }
        Ok(MetricWeights { w })
    }

    pub fn seven_model() -> Self {
        MetricWeights {
            w: vec![0.3, 0.24, 0.18, 0.12, 0.08, 0.05, 0.03],
        }
    }

    pub fn twelve_model() -> Self {
        MetricWeights {
            w: vec![0.24, 0.18, 0.12, 0.1, 0.08, 0.07, 0.06, 0.05, 0.04, 0.03, 0.02, 0.01],
        }
    }

    /// The weights used for three defenses.
    pub fn three_model() -> Self {
        MetricWeights { w: vec![0.5, 0.3, 0.2] }
    }

    pub fn uniform(n: usize) -> Result<Self> {
        MetricWeights::new(vec![1.0 / n as f64; n])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.w
    }

    pub fn len(&self) -> usize {
        self.w.len()
    }

    pub fn is_empty(&self) -> bool {
        self.w.is_empty()
    }
}

impl TryFrom<Vec<f64>> for MetricWeights {
    type Error = Error;

    fn try_from(w: Vec<f64>) -> Result<Self> {
        MetricWeights::new(w)
    }
}

impl From<MetricWeights> for Vec<f64> {
    fn from(m: MetricWeights) -> Self {
        m.w
    }
}

/// How `s_top3` is normalized.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Top3Mode {
    /// Mean of the three largest scores.
    #[default]
    MeanOfTop3,
    /// Sum of the three largest scores divided by the number of models.
    SumOverN,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub s_avg: f64,
    pub s_top3: f64,
    pub s_weighted: f64,
}

/// Average, top-3 and weighted scores. Scores are sorted descending
/// internally, so their input order does not matter.
pub fn aggregate(scores: &[f64], weights: &MetricWeights, top3: Top3Mode) -> Result<Aggregate> {
    if scores.len() != weights.len() {
        return Err(Error::Config(format!(
            "{} scores but {} metric weights",
            scores.len(),
            weights.len()
        )));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::Config(format!("scores {scores:?} are not finite")));
    }
    let mut sorted = scores.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let n = sorted.len() as f64;
    let s_avg = sorted.iter().sum::<f64>() / n;
    let k = sorted.len().min(3);
    let top: f64 = sorted[..k].iter().sum();
    let s_top3 = match top3 {
        Top3Mode::MeanOfTop3 => top / k as f64,
        Top3Mode::SumOverN => top / n,
    };
    let s_weighted = sorted.iter().zip(weights.as_slice()).map(|(s, w)| s * w).sum();
    Ok(Aggregate {
        s_avg,
        s_top3,
        s_weighted,
    })
}
