//! Classification metrics at playa-month, playa and regional scale.
//!
//! A probability counts as a positive prediction when `prob >= cutoff`.
//! Metrics that would divide by zero are `None`, never a silent 0.

use serde::{Deserialize, Serialize};

use crate::data::Split;
use crate::model::SequenceSample;
use crate::numeric::{bce_prob, bce_with_logits, sigmoid};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl ConfusionCounts {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }

    pub fn accuracy(&self) -> Option<f64> {
        ratio(self.tp + self.tn, self.total())
    }
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

fn check_pairs(probs: &[f64], labels: &[u8]) -> Result<()> {
    if probs.len() != labels.len() {
        return Err(Error::shape(
            "metrics",
            format!("{} probabilities", probs.len()),
            format!("{} labels", labels.len()),
        ));
    }
    if probs.is_empty() {
        return Err(Error::Data("no scored playa-months".into()));
    }
    if let Some(l) = labels.iter().find(|&&l| l > 1) {
        return Err(Error::Data(format!("label {l} is not binary")));
    }
    Ok(())
}

pub fn confusion_at_cutoff(probs: &[f64], labels: &[u8], cutoff: f64) -> Result<ConfusionCounts> {
    check_pairs(probs, labels)?;
    let mut c = ConfusionCounts::default();
    for (&p, &y) in probs.iter().zip(labels) {
        match (p >= cutoff, y == 1) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, false) => c.tn += 1,
            (false, true) => c.fn_ += 1,
        }
    }
    Ok(c)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrecisionRecallF1 {
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: Option<f64>,
}

/// `p = tp/(tp+fp)`, `r = tp/(tp+fn)`, `f1 = 2pr/(p+r)`.
pub fn precision_recall_f1(c: &ConfusionCounts) -> PrecisionRecallF1 {
    let precision = ratio(c.tp, c.tp + c.fp);
    let recall = ratio(c.tp, c.tp + c.fn_);
    let f1 = match (precision, recall) {
        (Some(p), Some(r)) if p + r > 0.0 => Some(2.0 * p * r / (p + r)),
        _ => None,
    };
    PrecisionRecallF1 {
        precision,
        recall,
        f1,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    pub fpr: f64,
    pub tpr: f64,
    /// Scores `>= threshold` are positive; the first point uses +∞.
    pub threshold: f64,
}

fn class_totals(labels: &[u8]) -> Result<(u64, u64)> {
    let pos = labels.iter().filter(|&&l| l == 1).count() as u64;
    let neg = labels.len() as u64 - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::Data(format!(
            "ROC needs both classes, got {pos} positive and {neg} negative labels"
        )));
    }
    Ok((pos, neg))
}

/// One point per distinct score, thresholds descending, starting at (0, 0).
pub fn roc_curve(probs: &[f64], labels: &[u8]) -> Result<Vec<RocPoint>> {
    check_pairs(probs, labels)?;
    let (pos, neg) = class_totals(labels)?;
    if probs.iter().any(|p| p.is_nan()) {
        return Err(Error::NonFinite("score".into()));
    }
    let mut order: Vec<usize> = (0..probs.len()).collect();
    order.sort_by(|&a, &b| probs[b].total_cmp(&probs[a]));

    let mut points = vec![RocPoint {
        fpr: 0.0,
        tpr: 0.0,
        threshold: f64::INFINITY,
    }];
    let (mut tp, mut fp) = (0u64, 0u64);
    let mut k = 0;
    while k < order.len() {
        let score = probs[order[k]];
        while k < order.len() && probs[order[k]] == score {
            if labels[order[k]] == 1 {
                tp += 1;
            } else {
                fp += 1;
            }
            k += 1;
        }
        points.push(RocPoint {
            fpr: fp as f64 / neg as f64,
            tpr: tp as f64 / pos as f64,
            threshold: score,
        });
    }
    Ok(points)
}

/// Trapezoidal area under a ROC curve.
pub fn auc(points: &[RocPoint]) -> f64 {
    points
        .windows(2)
        .map(|w| (w[1].fpr - w[0].fpr) * (w[1].tpr + w[0].tpr) / 2.0)
        .sum()
}

pub fn roc_auc(probs: &[f64], labels: &[u8]) -> Result<f64> {
    Ok(auc(&roc_curve(probs, labels)?))
}

/// The cutoff on the grid `step, 2·step, … < 1` with the highest F1;
/// ties go to the smallest cutoff. Cutoffs with undefined F1 never win.
pub fn select_cutoff(probs: &[f64], labels: &[u8], grid_step: f64) -> Result<f64> {
    check_pairs(probs, labels)?;
    class_totals(labels)?;
    if !(grid_step > 0.0 && grid_step < 1.0) {
        return Err(Error::Config(format!("grid step must be in (0, 1), got {grid_step}")));
    }
    let n = (1.0 / grid_step).round() as u32;
    let mut best: Option<(f64, f64)> = None;
    for k in 1..n {
        let cutoff = f64::from(k) / f64::from(n);
        let f1 = precision_recall_f1(&confusion_at_cutoff(probs, labels, cutoff)?).f1;
        if let Some(f1) = f1 {
            if best.is_none_or(|(_, b)| f1 > b) {
                best = Some((cutoff, f1));
            }
        }
    }
    best.map(|(c, _)| c)
        .ok_or_else(|| Error::Data("F1 is undefined at every grid cutoff".into()))
}

/// The metric row reported per split.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub split: Split,
    pub cutoff: f64,
    pub n: u64,
    pub accuracy: f64,
    pub bce_loss: f64,
    pub auc: f64,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: Option<f64>,
    pub counts: ConfusionCounts,
}

/// Pooled metrics over playa-months, from logits. Accuracy, precision,
/// recall and F1 use the same cutoff.
pub fn metrics_report(split: Split, logits: &[f64], labels: &[u8], cutoff: f64) -> Result<MetricsReport> {
    let probs: Vec<f64> = logits.iter().map(|&l| sigmoid(l)).collect();
    let counts = confusion_at_cutoff(&probs, labels, cutoff)?;
    let prf = precision_recall_f1(&counts);
    let bce_loss = logits
        .iter()
        .zip(labels)
        .map(|(&l, &y)| bce_with_logits(l, f64::from(y)))
        .sum::<f64>()
        / logits.len() as f64;
    Ok(MetricsReport {
        split,
        cutoff,
        n: counts.total(),
        accuracy: counts.accuracy().unwrap_or(0.0),
        bce_loss,
        auc: roc_auc(&probs, labels)?,
        precision: prf.precision,
        recall: prf.recall,
        f1: prf.f1,
        counts,
    })
}

/// Values and labels of every playa-month tagged `split`, in sample order.
pub fn pooled<'a>(
    samples: &'a [SequenceSample],
    values: &'a [Vec<f64>],
    split: Split,
) -> (Vec<f64>, Vec<u8>) {
    let mut v = Vec::new();
    let mut l = Vec::new();
    for (s, vals) in samples.iter().zip(values) {
        for t in 0..s.len() {
            if s.split_mask[t] == split {
                v.push(vals[t]);
                l.push(s.labels[t]);
            }
        }
    }
    (v, l)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EntityMetrics {
    pub playa_id: String,
    pub months: usize,
    pub bce_loss: f64,
    pub f1: Option<f64>,
}

/// Loss and F1 per playa over its months in `split`. Playas with no months
/// in the split are skipped; F1 is `None` when it cannot be computed (for
/// example a playa that is never wet and never predicted wet).
pub fn per_entity_metrics(
    samples: &[SequenceSample],
    probs: &[Vec<f64>],
    cutoff: f64,
    split: Split,
) -> Result<Vec<EntityMetrics>> {
    if samples.len() != probs.len() {
        return Err(Error::shape(
            "per_entity_metrics",
            format!("{} samples", samples.len()),
            format!("{} probability series", probs.len()),
        ));
    }
    let mut out = Vec::with_capacity(samples.len());
    for (s, p) in samples.iter().zip(probs) {
        if p.len() != s.len() {
            return Err(Error::shape(
                "per_entity_metrics",
                format!("playa {} with {} months", s.playa_id, s.len()),
                format!("{} probabilities", p.len()),
            ));
        }
        let idx: Vec<usize> = (0..s.len()).filter(|&t| s.split_mask[t] == split).collect();
        if idx.is_empty() {
            continue;
        }
        let probs: Vec<f64> = idx.iter().map(|&t| p[t]).collect();
        let labels: Vec<u8> = idx.iter().map(|&t| s.labels[t]).collect();
        let loss = probs
            .iter()
            .zip(&labels)
            .map(|(&q, &y)| bce_prob(q, f64::from(y)))
            .sum::<f64>()
            / idx.len() as f64;
        let counts = confusion_at_cutoff(&probs, &labels, cutoff)?;
        out.push(EntityMetrics {
            playa_id: s.playa_id.clone(),
            months: idx.len(),
            bce_loss: loss,
            f1: precision_recall_f1(&counts).f1,
        });
    }
    Ok(out)
}

/// Per month, the share of playas whose value is `>= cutoff`. Works for
/// probabilities and for 0/1 ground truth alike. `values[playa][month]`.
pub fn regional_fraction(values: &[Vec<f64>], cutoff: f64) -> Result<Vec<f64>> {
    let first = values
        .first()
        .ok_or_else(|| Error::Data("regional fraction of zero playas".into()))?;
    let months = first.len();
    if let Some((i, v)) = values.iter().enumerate().find(|(_, v)| v.len() != months) {
        return Err(Error::Data(format!(
            "ragged coverage: playa {i} has {} months, expected {months}",
            v.len()
        )));
    }
    let n = values.len() as f64;
    Ok((0..months)
        .map(|t| values.iter().filter(|v| v[t] >= cutoff).count() as f64 / n)
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn confusion_cases() {
        let c = confusion_at_cutoff(&[0.3], &[1], 0.3).unwrap();
        assert_eq!(c.tp, 1);
        let c = confusion_at_cutoff(&[1.0, 0.0, 1.0, 0.0], &[1, 0, 1, 0], 0.5).unwrap();
        assert_eq!((c.fp, c.fn_), (0, 0));
        let c = confusion_at_cutoff(&[0.9, 0.2, 0.4], &[1, 1, 0], 0.3).unwrap();
        assert_eq!(c, ConfusionCounts { tp: 1, fp: 1, tn: 0, fn_: 1 });
        assert!(confusion_at_cutoff(&[], &[], 0.3).is_err());
        assert!(confusion_at_cutoff(&[0.1], &[], 0.3).is_err());
    }

    #[test]
    fn prf_cases() {
        let m = precision_recall_f1(&ConfusionCounts { tp: 1, fp: 1, tn: 0, fn_: 1 });
        assert_eq!((m.precision, m.recall, m.f1), (Some(0.5), Some(0.5), Some(0.5)));
        let m = precision_recall_f1(&ConfusionCounts { tp: 4, fp: 0, tn: 9, fn_: 0 });
        assert_eq!((m.precision, m.recall, m.f1), (Some(1.0), Some(1.0), Some(1.0)));
        let m = precision_recall_f1(&ConfusionCounts { tp: 0, fp: 0, tn: 12, fn_: 0 });
        assert_eq!((m.precision, m.recall, m.f1), (None, None, None));
    }

    #[test]
    fn roc_edge_cases() {
        let pts = roc_curve(&[0.9, 0.8, 0.2, 0.1], &[1, 1, 0, 0]).unwrap();
        assert!(pts.iter().any(|p| p.fpr == 0.0 && p.tpr == 1.0));
        assert_eq!(auc(&pts), 1.0);

        let pts = roc_curve(&[0.4; 5], &[1, 0, 1, 0, 0]).unwrap();
        assert_eq!(pts.len(), 2);
        assert_eq!((pts[0].fpr, pts[0].tpr), (0.0, 0.0));
        assert_eq!((pts[1].fpr, pts[1].tpr), (1.0, 1.0));
        assert_eq!(auc(&pts), 0.5);

        assert!(roc_curve(&[0.1, 0.2], &[0, 0]).is_err());
    }

    /// Exhaustive thresholds: every distinct score plus +∞, scored directly.
    fn roc_by_enumeration(probs: &[f64], labels: &[u8]) -> Vec<(f64, f64)> {
        let pos = labels.iter().filter(|&&l| l == 1).count() as f64;
        let neg = labels.len() as f64 - pos;
        let mut thresholds: Vec<f64> = probs.to_vec();
        thresholds.push(f64::INFINITY);
        thresholds.sort_by(|a, b| b.total_cmp(a));
        thresholds.dedup();
        thresholds
            .iter()
            .map(|&th| {
                let tp = probs.iter().zip(labels).filter(|(&p, &l)| p >= th && l == 1).count();
                let fp = probs.iter().zip(labels).filter(|(&p, &l)| p >= th && l == 0).count();
                (fp as f64 / neg, tp as f64 / pos)
            })
            .collect()
    }

    #[test]
    fn roc_matches_threshold_enumeration() {
        let probs = [0.7, 0.2, 0.7, 0.9, 0.4, 0.2];
        let labels = [1, 0, 0, 1, 1, 0];
        let got: Vec<(f64, f64)> = roc_curve(&probs, &labels)
            .unwrap()
            .iter()
            .map(|p| (p.fpr, p.tpr))
            .collect();
        assert_eq!(got, roc_by_enumeration(&probs, &labels));
    }

    #[test]
    fn cutoff_selection() {
        // Perfect probabilities: every cutoff is perfect, the smallest wins.
        let c = select_cutoff(&[1.0, 0.0, 1.0, 0.0], &[1, 0, 1, 0], 0.01).unwrap();
        assert_eq!(c, 0.01);
        assert!(select_cutoff(&[0.2, 0.3], &[0, 0], 0.01).is_err());

        // Positives sit in [0.30, 0.35), negatives below 0.30 except one
        // loud false positive at 0.95. F1 peaks uniquely at 0.30.
        let probs = [0.30, 0.31, 0.33, 0.345, 0.29, 0.2, 0.1, 0.95, 0.05];
        let labels = [1, 1, 1, 1, 0, 0, 0, 0, 0];
        assert_eq!(select_cutoff(&probs, &labels, 0.01).unwrap(), 0.3);
    }

    #[test]
    fn per_entity_fixture() {
        let mk = |id: &str, labels: Vec<u8>| SequenceSample {
            playa_id: id.into(),
            playa_index: 0,
            huc8_index: 0,
            author_index: 0,
            features: crate::numeric::Matrix::zeros(labels.len(), 1),
            split_mask: vec![Split::Train, Split::Test, Split::Test, Split::Test],
            months: (1..=4)
                .map(|m| crate::data::YearMonth::new(2000, m).unwrap())
                .collect(),
            labels,
        };
        let samples = vec![
            mk("dry", vec![1, 0, 0, 0]),
            mk("perfect", vec![0, 1, 0, 1]),
            mk("mixed", vec![0, 1, 1, 0]),
        ];
        let probs = vec![
            vec![0.9, 0.01, 0.02, 0.01],
            vec![0.5, 1.0 - 1e-9, 1e-9, 1.0 - 1e-9],
            vec![0.5, 0.8, 0.2, 0.4],
        ];
        let m = per_entity_metrics(&samples, &probs, 0.3, Split::Test).unwrap();
        assert_eq!(m.len(), 3);
        assert_eq!(m[0].f1, None);
        let dry = -((0.99f64).ln() + (0.98f64).ln() + (0.99f64).ln()) / 3.0;
        assert!((m[0].bce_loss - dry).abs() < 1e-15);
        assert!(m[1].bce_loss < 1e-6);
        assert_eq!(m[1].f1, Some(1.0));
        // mixed: tp=1 (0.8), fn=1 (0.2), fp=1 (0.4) -> f1 = 0.5
        assert_eq!(m[2].f1, Some(0.5));
        let mixed = -((0.8f64).ln() + (0.2f64).ln() + (0.6f64).ln()) / 3.0;
        assert!((m[2].bce_loss - mixed).abs() < 1e-15);
        assert_eq!(m[2].months, 3);
    }

    #[test]
    fn regional_fraction_cases() {
        let all_wet = vec![vec![1.0, 0.0], vec![1.0, 1.0]];
        assert_eq!(regional_fraction(&all_wet, 0.3).unwrap(), vec![1.0, 0.5]);
        assert!(regional_fraction(&[vec![1.0], vec![1.0, 0.0]], 0.3).is_err());
        assert!(regional_fraction(&[], 0.3).is_err());
    }

    #[test]
    fn report_fields() {
        let logits = [3.0, -3.0, 0.5, -0.2];
        let labels = [1, 0, 0, 1];
        let r = metrics_report(Split::Test, &logits, &labels, 0.3).unwrap();
        // sigmoid: 0.95, 0.047, 0.62, 0.45 -> all but the second are positive.
        assert_eq!(r.counts, ConfusionCounts { tp: 2, fp: 1, tn: 1, fn_: 0 });
        assert_eq!(r.accuracy, 0.75);
        assert_eq!(r.auc, 0.75);
        assert_eq!(r.n, 4);
    }

    /// Fraction of positive/negative pairs ranked correctly, ties counting half.
    fn pairwise_auc(probs: &[f64], labels: &[u8]) -> f64 {
        let mut wins = 0.0;
        let mut pairs = 0.0;
        for (i, &pi) in probs.iter().enumerate() {
            for (j, &pj) in probs.iter().enumerate() {
                if labels[i] == 1 && labels[j] == 0 {
                    pairs += 1.0;
                    if pi > pj {
                        wins += 1.0;
                    } else if pi == pj {
                        wins += 0.5;
                    }
                }
            }
        }
        wins / pairs
    }

    fn scored_set() -> impl Strategy<Value = (Vec<f64>, Vec<u8>)> {
        (4usize..120).prop_flat_map(|n| {
            (
                proptest::collection::vec((0u32..20).prop_map(|k| f64::from(k) / 20.0), n),
                proptest::collection::vec(0u8..=1, n),
            )
        })
        .prop_filter("both classes", |(_, l)| l.contains(&0) && l.contains(&1))
    }

    proptest! {
        #[test]
        fn auc_is_the_pairwise_rank_statistic((probs, labels) in scored_set()) {
            let a = roc_auc(&probs, &labels).unwrap();
            prop_assert!((a - pairwise_auc(&probs, &labels)).abs() < 1e-12);
        }

        #[test]
        fn auc_invariant_under_monotone_transform((probs, labels) in scored_set()) {
            let squashed: Vec<f64> = probs.iter().map(|p| (3.0 * p).exp() - 1.0).collect();
            prop_assert_eq!(roc_auc(&probs, &labels).unwrap(), roc_auc(&squashed, &labels).unwrap());
        }

        #[test]
        fn roc_is_monotone((probs, labels) in scored_set()) {
            let pts = roc_curve(&probs, &labels).unwrap();
            for w in pts.windows(2) {
                prop_assert!(w[1].fpr >= w[0].fpr && w[1].tpr >= w[0].tpr);
            }
            let last = pts.last().unwrap();
            prop_assert_eq!((last.fpr, last.tpr), (1.0, 1.0));
        }

        #[test]
        fn f1_closed_form_and_accuracy((probs, labels) in scored_set(), cutoff in 0.01f64..0.99) {
            let c = confusion_at_cutoff(&probs, &labels, cutoff).unwrap();
            prop_assert_eq!(c.total() as usize, probs.len());
            if let Some(f1) = precision_recall_f1(&c).f1 {
                let closed = 2.0 * c.tp as f64 / (2 * c.tp + c.fp + c.fn_) as f64;
                prop_assert!((f1 - closed).abs() < 1e-12);
            }
            let wrong = probs.iter().zip(&labels).filter(|(&p, &l)| (p >= cutoff) != (l == 1)).count();
            let acc = c.accuracy().unwrap();
            prop_assert!((acc - (1.0 - wrong as f64 / probs.len() as f64)).abs() < 1e-12);
        }

        #[test]
        fn truth_fraction_ignores_cutoff(
            labels in proptest::collection::vec(proptest::collection::vec(0u8..=1, 6), 1..8),
            a in 0.01f64..1.0,
            b in 0.01f64..1.0,
        ) {
            let values: Vec<Vec<f64>> = labels.iter().map(|r| r.iter().map(|&l| f64::from(l)).collect()).collect();
            prop_assert_eq!(regional_fraction(&values, a).unwrap(), regional_fraction(&values, b).unwrap());
        }
    }
}
