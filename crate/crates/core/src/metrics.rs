//! Downstream agreement metrics: Dice, Spearman, ROC-AUC, balanced accuracy.

use std::collections::BTreeSet;

use crate::error::{Error, Result};

/// Label reserved for pixels that no cluster claimed.
pub const UNCLUSTERED: i32 = -1;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelMask {
    height: usize,
    width: usize,
    labels: Vec<i32>,
}

impl LabelMask {
    pub fn new(height: usize, width: usize, labels: Vec<i32>) -> Result<Self> {
        if labels.len() != height * width {
            return Err(Error::DimensionMismatch(format!(
                "{} labels for a {height}x{width} mask",
                labels.len()
            )));
        }
        Ok(Self {
            height,
            width,
            labels,
        })
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn labels(&self) -> &[i32] {
        &self.labels
    }

    fn check(&self, other: &Self) -> Result<()> {
        if self.dims() != other.dims() {
            return Err(Error::DimensionMismatch(format!(
                "masks {:?} vs {:?}",
                self.dims(),
                other.dims()
            )));
        }
        Ok(())
    }
}

/// `2|A∩B| / (|A|+|B|)` for the pixels labelled `class_id`; 1 when both are empty.
pub fn dice(a: &LabelMask, b: &LabelMask, class_id: i32) -> Result<f64> {
    a.check(b)?;
    let (mut inter, mut na, mut nb) = (0usize, 0usize, 0usize);
    for (&x, &y) in a.labels.iter().zip(&b.labels) {
        let (ia, ib) = (x == class_id, y == class_id);
        na += ia as usize;
        nb += ib as usize;
        inter += (ia && ib) as usize;
    }
    if na + nb == 0 {
        return Ok(1.0);
    }
    Ok(2.0 * inter as f64 / (na + nb) as f64)
}

/// Per-class and mean Dice over every class present in either mask,
/// excluding [`UNCLUSTERED`].
#[derive(Debug, Clone, PartialEq)]
pub struct DiceSummary {
    pub per_class: Vec<(i32, f64)>,
    pub mean: f64,
}

pub fn dice_mean(a: &LabelMask, b: &LabelMask) -> Result<DiceSummary> {
    a.check(b)?;
    let classes: BTreeSet<i32> = a
        .labels
        .iter()
        .chain(&b.labels)
        .copied()
        .filter(|&l| l != UNCLUSTERED)
        .collect();
    if classes.is_empty() {
        return Err(Error::Degenerate("no labelled pixels in either mask".into()));
    }
    let per_class = classes
        .into_iter()
        .map(|c| dice(a, b, c).map(|d| (c, d)))
        .collect::<Result<Vec<_>>>()?;
    let mean = per_class.iter().map(|(_, d)| d).sum::<f64>() / per_class.len() as f64;
    Ok(DiceSummary { per_class, mean })
}

/// Mid-ranks (1-based, ties averaged).
pub fn mid_ranks(x: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_by(|&i, &j| x[i].total_cmp(&x[j]));
    let mut ranks = vec![0.0; x.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && x[order[j + 1]] == x[order[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx).powi(2);
        syy += (b - my).powi(2);
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Spearman rank correlation: Pearson correlation of mid-ranks.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch(format!("{} vs {} values", x.len(), y.len())));
    }
    if x.len() < 3 {
        return Err(Error::Degenerate(format!("need at least 3 pairs, got {}", x.len())));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::Validation("non-finite value".into()));
    }
    pearson(&mid_ranks(x), &mid_ranks(y))
        .ok_or_else(|| Error::Degenerate("rank sequence has zero variance".into()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoredLabels {
    scores: Vec<f64>,
    labels: Vec<bool>,
}

impl ScoredLabels {
    pub fn new(scores: Vec<f64>, labels: Vec<bool>) -> Result<Self> {
        if scores.len() != labels.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} scores vs {} labels",
                scores.len(),
                labels.len()
            )));
        }
        if scores.len() < 2 {
            return Err(Error::Degenerate("need at least two scored samples".into()));
        }
        if scores.iter().any(|s| !s.is_finite()) {
            return Err(Error::Validation("non-finite score".into()));
        }
        Ok(Self { scores, labels })
    }

    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    pub fn labels(&self) -> &[bool] {
        &self.labels
    }
}

/// Probability that a random positive outscores a random negative, ties
/// counted one half (Mann–Whitney U / (n₊ n₋)).
pub fn roc_auc(data: &ScoredLabels) -> Result<f64> {
    let pos = data.labels.iter().filter(|&&l| l).count();
    let neg = data.labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::Degenerate("ROC-AUC needs both classes".into()));
    }
    let ranks = mid_ranks(&data.scores);
    let rank_sum: f64 = ranks
        .iter()
        .zip(&data.labels)
        .filter(|(_, &l)| l)
        .map(|(r, _)| r)
        .sum();
    let (p, n) = (pos as f64, neg as f64);
    let u = rank_sum - p * (p + 1.0) / 2.0;
    Ok(u / (p * n))
}

/// ROC curve points `(false positive rate, true positive rate)` from the
/// strictest threshold down, tied scores stepping together.
pub fn roc_curve(data: &ScoredLabels) -> Result<Vec<(f64, f64)>> {
    let pos = data.labels.iter().filter(|&&l| l).count();
    let neg = data.labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::Degenerate("ROC curve needs both classes".into()));
    }
    let mut order: Vec<usize> = (0..data.scores.len()).collect();
    order.sort_by(|&i, &j| data.scores[j].total_cmp(&data.scores[i]));
    let mut pts = vec![(0.0, 0.0)];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < order.len() {
        let s = data.scores[order[i]];
        while i < order.len() && data.scores[order[i]] == s {
            if data.labels[order[i]] {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        pts.push((fp as f64 / neg as f64, tp as f64 / pos as f64));
    }
    Ok(pts)
}

/// Mean of sensitivity and specificity.
pub fn balanced_accuracy(sensitivity: f64, specificity: f64) -> Result<f64> {
    for (name, v) in [("sensitivity", sensitivity), ("specificity", specificity)] {
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::InvalidParameter(format!("{name} {v} outside [0, 1]")));
        }
    }
    Ok(0.5 * (sensitivity + specificity))
}
