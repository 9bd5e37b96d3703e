//! Ranking metrics for anomaly scores: AUROC, average precision and
//! recall within the top K, all restricted to a mask (the test split).
//!
//! Anomalies are the positive class. AUROC counts tied (positive, negative)
//! pairs as half correct. Average precision and Rec@K order nodes by
//! descending score and break ties by ascending node index.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct RankedScores {
    scores: Vec<f64>,
    labels: Vec<u8>,
    mask: Vec<bool>,
}

impl RankedScores {
    pub fn new(scores: Vec<f64>, labels: Vec<u8>, mask: Vec<bool>) -> Result<Self> {
        if scores.len() != labels.len() || scores.len() != mask.len() {
            return Err(Error::Shape(format!(
                "scores ({}), labels ({}) and mask ({}) differ in length",
                scores.len(),
                labels.len(),
                mask.len()
            )));
        }
        if scores.iter().any(|s| s.is_nan()) {
            return Err(Error::Precondition("scores contain NaN".into()));
        }
        if labels.iter().any(|&l| l > 1) {
            return Err(Error::Precondition("labels must be 0 or 1".into()));
        }
        Ok(RankedScores { scores, labels, mask })
    }

    /// Every entry inside the mask.
    pub fn unmasked(scores: Vec<f64>, labels: Vec<u8>) -> Result<Self> {
        let n = scores.len();
        Self::new(scores, labels, vec![true; n])
    }

    /// (score, label) of masked entries in descending-score order, ties by index.
    fn ranked(&self) -> Vec<(f64, u8)> {
        let mut idx: Vec<usize> = (0..self.scores.len()).filter(|&i| self.mask[i]).collect();
        idx.sort_by(|&a, &b| self.scores[b].total_cmp(&self.scores[a]).then(a.cmp(&b)));
        idx.into_iter().map(|i| (self.scores[i], self.labels[i])).collect()
    }

    pub fn positives(&self) -> usize {
        (0..self.labels.len())
            .filter(|&i| self.mask[i] && self.labels[i] == 1)
            .count()
    }

    pub fn masked_len(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    fn check_two_classes(&self) -> Result<(usize, usize)> {
        let pos = self.positives();
        let neg = self.masked_len() - pos;
        if pos == 0 || neg == 0 {
            return Err(Error::UndefinedMetric(format!(
                "masked set has {pos} positive and {neg} negative entries; both classes are required"
            )));
        }
        Ok((pos, neg))
    }
}

/// Mann-Whitney form of the area under the ROC curve.
pub fn auroc(r: &RankedScores) -> Result<f64> {
    let (pos, neg) = r.check_two_classes()?;
    let mut items = r.ranked();
    items.reverse(); // ascending score
    // Sum of midranks (1-based) of the positives.
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < items.len() {
        let mut j = i;
        while j + 1 < items.len() && items[j + 1].0 == items[i].0 {
            j += 1;
        }
        let mid = (i + j) as f64 / 2.0 + 1.0;
        let group_pos = items[i..=j].iter().filter(|x| x.1 == 1).count();
        rank_sum += mid * group_pos as f64;
        i = j + 1;
    }
    let u = rank_sum - (pos * (pos + 1)) as f64 / 2.0;
    Ok(u / (pos as f64 * neg as f64))
}

/// Average precision: mean over positives of the precision at its rank.
pub fn auprc(r: &RankedScores) -> Result<f64> {
    let (pos, _) = r.check_two_classes()?;
    let mut hits = 0usize;
    let mut total = 0.0;
    for (rank, (_, label)) in r.ranked().into_iter().enumerate() {
        if label == 1 {
            hits += 1;
            total += hits as f64 / (rank + 1) as f64;
        }
    }
    Ok(total / pos as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TopK {
    /// K = number of positives in the mask.
    Auto,
    Count(usize),
}

/// Fraction of the masked positives found among the top `k` scores.
pub fn rec_at_k(r: &RankedScores, k: TopK) -> Result<f64> {
    let pos = r.positives();
    let k = match k {
        TopK::Auto => pos,
        TopK::Count(k) => k,
    };
    if k == 0 {
        return Err(Error::Config("K must be at least 1".into()));
    }
    if k > r.masked_len() {
        return Err(Error::Config(format!("K = {k} exceeds the {} masked entries", r.masked_len())));
    }
    if pos == 0 {
        return Err(Error::UndefinedMetric("no positives in the masked set".into()));
    }
    let hits = r.ranked().iter().take(k).filter(|x| x.1 == 1).count();
    Ok(hits as f64 / pos as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricTriple {
    pub auroc: f64,
    pub auprc: f64,
    pub rec_at_k: f64,
}

pub fn evaluate(r: &RankedScores) -> Result<MetricTriple> {
    Ok(MetricTriple {
        auroc: auroc(r)?,
        auprc: auprc(r)?,
        rec_at_k: rec_at_k(r, TopK::Auto)?,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    /// Sample standard deviation; 0 for a single value.
    pub sd: f64,
}

impl Summary {
    pub fn of(values: &[f64]) -> Summary {
        let n = values.len();
        if n == 0 {
            return Summary { mean: f64::NAN, sd: f64::NAN };
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let sd = if n < 2 {
            0.0
        } else {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        };
        Summary { mean, sd }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateReport {
    pub per_seed: Vec<MetricTriple>,
    pub auroc: Summary,
    pub auprc: Summary,
    pub rec_at_k: Summary,
}

pub fn aggregate(reports: &[MetricTriple]) -> Result<AggregateReport> {
    if reports.is_empty() {
        return Err(Error::Precondition("nothing to aggregate".into()));
    }
    let col = |f: fn(&MetricTriple) -> f64| reports.iter().map(f).collect::<Vec<_>>();
    Ok(AggregateReport {
        per_seed: reports.to_vec(),
        auroc: Summary::of(&col(|m| m.auroc)),
        auprc: Summary::of(&col(|m| m.auprc)),
        rec_at_k: Summary::of(&col(|m| m.rec_at_k)),
    })
}
