//! Evaluation metrics for allergen prediction and dataset label statistics.
//!
//! Per-label counts come from [`confusion`]; [`aggregate`] turns a list of
//! per-label counts into macro or micro precision/recall/F1. For a single
//! binary problem, [`binary_summary`] averages over its two classes
//! (allergen present / absent), which is how per-allergen report rows are
//! built: the micro average over the two classes equals accuracy.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{Allergen, LabelSet, ALLERGEN_COUNT};

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("cannot aggregate an empty list of confusion counts")]
    NoLabels,
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("alpha parameters out of range: alpha={alpha}, beta={beta}, gamma={gamma}")]
    AlphaParams { alpha: f64, beta: f64, gamma: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub tn: u64,
    pub fp: u64,
    pub fn_: u64,
}

impl ConfusionCounts {
    pub fn total(&self) -> u64 {
        self.tp + self.tn + self.fp + self.fn_
    }

    /// Counts seen from the negative class.
    pub fn flipped(&self) -> ConfusionCounts {
        ConfusionCounts { tp: self.tn, tn: self.tp, fp: self.fn_, fn_: self.fp }
    }

    pub fn record(&mut self, truth: bool, predicted: bool) {
        match (truth, predicted) {
            (true, true) => self.tp += 1,
            (false, false) => self.tn += 1,
            (false, true) => self.fp += 1,
            (true, false) => self.fn_ += 1,
        }
    }

    pub fn accuracy(&self) -> f64 {
        let total = self.total();
        if total == 0 {
            0.0
        } else {
            (self.tp + self.tn) as f64 / total as f64
        }
    }
}

impl std::ops::AddAssign for ConfusionCounts {
    fn add_assign(&mut self, rhs: Self) {
        self.tp += rhs.tp;
        self.tn += rhs.tn;
        self.fp += rhs.fp;
        self.fn_ += rhs.fn_;
    }
}

impl std::iter::Sum for ConfusionCounts {
    fn sum<I: Iterator<Item = Self>>(iter: I) -> Self {
        let mut acc = ConfusionCounts::default();
        for c in iter {
            acc += c;
        }
        acc
    }
}

/// One example's contribution to each allergen's counts.
pub fn confusion(y_true: LabelSet, y_pred: LabelSet) -> [ConfusionCounts; ALLERGEN_COUNT] {
    let mut out = [ConfusionCounts::default(); ALLERGEN_COUNT];
    for a in Allergen::ALL {
        out[a.index()].record(y_true.contains(a), y_pred.contains(a));
    }
    out
}

/// Accumulates per-allergen counts over a dataset.
pub fn confusion_over<I>(pairs: I) -> [ConfusionCounts; ALLERGEN_COUNT]
where
    I: IntoIterator<Item = (LabelSet, LabelSet)>,
{
    let mut acc = [ConfusionCounts::default(); ALLERGEN_COUNT];
    for (t, p) in pairs {
        for (slot, c) in acc.iter_mut().zip(confusion(t, p)) {
            *slot += c;
        }
    }
    acc
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PrfScores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Set when any ratio was 0/0 and defaulted to 0.
    pub degenerate: bool,
}

fn ratio(num: u64, den: u64) -> (f64, bool) {
    if den == 0 {
        (0.0, true)
    } else {
        (num as f64 / den as f64, false)
    }
}

pub fn precision_recall_f1(c: &ConfusionCounts) -> PrfScores {
    let (precision, dp) = ratio(c.tp, c.tp + c.fp);
    let (recall, dr) = ratio(c.tp, c.tp + c.fn_);
    let sum = precision + recall;
    let (f1, df) = if sum == 0.0 {
        (0.0, true)
    } else {
        (2.0 * precision * recall / sum, false)
    };
    PrfScores { precision, recall, f1, degenerate: dp || dr || df }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Averaging {
    Macro,
    Micro,
}

pub fn aggregate(per_label: &[ConfusionCounts], mode: Averaging) -> Result<PrfScores, MetricsError> {
    if per_label.is_empty() {
        return Err(MetricsError::NoLabels);
    }
    Ok(match mode {
        Averaging::Micro => precision_recall_f1(&per_label.iter().copied().sum()),
        Averaging::Macro => {
            let n = per_label.len() as f64;
            let scores: Vec<PrfScores> = per_label.iter().map(precision_recall_f1).collect();
            PrfScores {
                precision: scores.iter().map(|s| s.precision).sum::<f64>() / n,
                recall: scores.iter().map(|s| s.recall).sum::<f64>() / n,
                f1: scores.iter().map(|s| s.f1).sum::<f64>() / n,
                degenerate: scores.iter().any(|s| s.degenerate),
            }
        }
    })
}

/// Two-class view of one binary problem.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BinarySummary {
    pub counts: ConfusionCounts,
    pub macro_avg: PrfScores,
    pub micro_avg: PrfScores,
    /// Average of the two classes weighted by their true support.
    pub weighted: PrfScores,
}

pub fn binary_summary(c: &ConfusionCounts) -> BinarySummary {
    let classes = [*c, c.flipped()];
    let macro_avg = aggregate(&classes, Averaging::Macro).expect("two classes");
    let micro_avg = aggregate(&classes, Averaging::Micro).expect("two classes");
    let pos = precision_recall_f1(&classes[0]);
    let neg = precision_recall_f1(&classes[1]);
    let support_pos = (c.tp + c.fn_) as f64;
    let support_neg = (c.tn + c.fp) as f64;
    let total = support_pos + support_neg;
    let weighted = if total == 0.0 {
        PrfScores { degenerate: true, ..PrfScores::default() }
    } else {
        let w = |a: f64, b: f64| (a * support_pos + b * support_neg) / total;
        PrfScores {
            precision: w(pos.precision, neg.precision),
            recall: w(pos.recall, neg.recall),
            f1: w(pos.f1, neg.f1),
            degenerate: pos.degenerate || neg.degenerate,
        }
    };
    BinarySummary { counts: *c, macro_avg, micro_avg, weighted }
}

/// Parameters of the alpha evaluation score.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlphaParams {
    /// Forgiveness rate.
    pub alpha: f64,
    /// Weight of false negatives.
    pub beta: f64,
    /// Weight of false positives.
    pub gamma: f64,
}

impl Default for AlphaParams {
    fn default() -> Self {
        AlphaParams { alpha: 7.0, beta: 0.33, gamma: 1.0 }
    }
}

impl AlphaParams {
    pub fn new(alpha: f64, beta: f64, gamma: f64) -> Result<Self, MetricsError> {
        let ok = alpha >= 0.0
            && alpha.is_finite()
            && (0.0..=1.0).contains(&beta)
            && (0.0..=1.0).contains(&gamma);
        if ok {
            Ok(AlphaParams { alpha, beta, gamma })
        } else {
            Err(MetricsError::AlphaParams { alpha, beta, gamma })
        }
    }
}

/// `(1 - (beta*|FN| + gamma*|FP|) / |Y ∪ P|)^alpha` for one example.
///
/// Both sets empty counts as a perfect prediction (1.0). A bracket of zero
/// scores 0 for every alpha, including alpha = 0.
pub fn alpha_score(y_true: LabelSet, y_pred: LabelSet, p: &AlphaParams) -> f64 {
    let union = y_true.union(y_pred).len();
    if union == 0 {
        return 1.0;
    }
    let false_neg = y_true.difference(y_pred).len() as f64;
    let false_pos = y_pred.difference(y_true).len() as f64;
    let bracket = 1.0 - (p.beta * false_neg + p.gamma * false_pos) / union as f64;
    if bracket <= 0.0 {
        0.0
    } else {
        bracket.powf(p.alpha)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlphaSummary {
    pub mean: f64,
    pub examples: usize,
    /// Examples where both the truth and the prediction were empty.
    pub empty_empty: usize,
}

pub fn mean_alpha<I>(pairs: I, p: &AlphaParams) -> AlphaSummary
where
    I: IntoIterator<Item = (LabelSet, LabelSet)>,
{
    let mut sum = 0.0;
    let mut examples = 0;
    let mut empty_empty = 0;
    for (t, pred) in pairs {
        if t.is_empty() && pred.is_empty() {
            empty_empty += 1;
        }
        sum += alpha_score(t, pred, p);
        examples += 1;
    }
    let mean = if examples == 0 { 0.0 } else { sum / examples as f64 };
    AlphaSummary { mean, examples, empty_empty }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DatasetLabelStats {
    pub products: usize,
    pub label_cardinality: f64,
    /// `None` when no product carries any label.
    pub label_density: Option<f64>,
    pub labels_present: LabelSet,
    pub per_allergen: [u64; ALLERGEN_COUNT],
}

pub fn label_stats(dataset: &[LabelSet]) -> Result<DatasetLabelStats, MetricsError> {
    if dataset.is_empty() {
        return Err(MetricsError::EmptyDataset);
    }
    let n = dataset.len() as f64;
    let labels_present = dataset.iter().fold(LabelSet::empty(), |acc, s| acc.union(*s));
    let mut per_allergen = [0u64; ALLERGEN_COUNT];
    for set in dataset {
        for a in set.iter() {
            per_allergen[a.index()] += 1;
        }
    }
    let label_cardinality = dataset.iter().map(|s| s.len() as f64).sum::<f64>() / n;
    let distinct = labels_present.len();
    let label_density = (distinct > 0).then(|| {
        dataset
            .iter()
            .map(|s| s.len() as f64 / distinct as f64)
            .sum::<f64>()
            / n
    });
    Ok(DatasetLabelStats {
        products: dataset.len(),
        label_cardinality,
        label_density,
        labels_present,
        per_allergen,
    })
}

/// Pairwise co-occurrence counts over a fixed label list.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CooccurrenceMatrix {
    pub labels: Vec<String>,
    /// `absolute[i][j]` = items carrying both label i and label j.
    pub absolute: Vec<Vec<u64>>,
    /// Row i divided by `absolute[i][i]`, in percent.
    pub relative_percent: Vec<Vec<f64>>,
    /// Rows whose diagonal is zero; their relative entries are emitted as 0.
    pub undefined_rows: Vec<bool>,
}

impl CooccurrenceMatrix {
    /// Builds the matrices from per-item sets of label indices. Duplicate
    /// indices within one item are counted once.
    pub fn from_index_sets<I, S>(labels: Vec<String>, items: I) -> CooccurrenceMatrix
    where
        I: IntoIterator<Item = S>,
        S: IntoIterator<Item = usize>,
    {
        let k = labels.len();
        let mut absolute = vec![vec![0u64; k]; k];
        for item in items {
            let mut present = vec![false; k];
            for i in item {
                present[i] = true;
            }
            let idx: Vec<usize> = (0..k).filter(|&i| present[i]).collect();
            for &i in &idx {
                for &j in &idx {
                    absolute[i][j] += 1;
                }
            }
        }
        let undefined_rows: Vec<bool> = (0..k).map(|i| absolute[i][i] == 0).collect();
        let relative_percent = (0..k)
            .map(|i| {
                (0..k)
                    .map(|j| {
                        if undefined_rows[i] {
                            0.0
                        } else {
                            100.0 * absolute[i][j] as f64 / absolute[i][i] as f64
                        }
                    })
                    .collect()
            })
            .collect();
        CooccurrenceMatrix { labels, absolute, relative_percent, undefined_rows }
    }

    pub fn diagonal(&self) -> Vec<u64> {
        (0..self.labels.len()).map(|i| self.absolute[i][i]).collect()
    }
}

pub fn allergen_cooccurrence(dataset: &[LabelSet]) -> CooccurrenceMatrix {
    let labels = Allergen::ALL.iter().map(|a| a.name().to_string()).collect();
    CooccurrenceMatrix::from_index_sets(
        labels,
        dataset.iter().map(|s| s.iter().map(Allergen::index)),
    )
}

/// Report row for one binary problem. Counts are `f64` so that rows can be
/// averaged across repeated runs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LabelMetrics {
    pub tp: f64,
    pub tn: f64,
    pub fp: f64,
    pub fn_: f64,
    pub macro_avg: PrfScores,
    pub micro_avg: PrfScores,
    pub weighted: PrfScores,
    /// Mean alpha score with the label sets restricted to this label.
    pub alpha: f64,
}

impl LabelMetrics {
    /// Builds the row from `(truth, predicted)` decisions.
    pub fn from_decisions<I>(decisions: I, p: &AlphaParams) -> LabelMetrics
    where
        I: IntoIterator<Item = (bool, bool)>,
    {
        let mut counts = ConfusionCounts::default();
        let mut alpha_sum = 0.0;
        let single = LabelSet::empty().with(Allergen::Gluten);
        for (t, pred) in decisions {
            counts.record(t, pred);
            let pick = |b: bool| if b { single } else { LabelSet::empty() };
            alpha_sum += alpha_score(pick(t), pick(pred), p);
        }
        let n = counts.total();
        let alpha = if n == 0 { 0.0 } else { alpha_sum / n as f64 };
        Self::from_counts(&counts, alpha)
    }

    pub fn from_counts(c: &ConfusionCounts, alpha: f64) -> LabelMetrics {
        let s = binary_summary(c);
        LabelMetrics {
            tp: c.tp as f64,
            tn: c.tn as f64,
            fp: c.fp as f64,
            fn_: c.fn_ as f64,
            macro_avg: s.macro_avg,
            micro_avg: s.micro_avg,
            weighted: s.weighted,
            alpha,
        }
    }

    /// Field-wise arithmetic mean; degeneracy flags are OR-ed.
    pub fn mean(rows: &[LabelMetrics]) -> Option<LabelMetrics> {
        if rows.is_empty() {
            return None;
        }
        let n = rows.len() as f64;
        let avg = |f: &dyn Fn(&LabelMetrics) -> f64| rows.iter().map(f).sum::<f64>() / n;
        let avg_prf = |f: &dyn Fn(&LabelMetrics) -> PrfScores| mean_prf(rows.iter().map(f));
        Some(LabelMetrics {
            tp: avg(&|r| r.tp),
            tn: avg(&|r| r.tn),
            fp: avg(&|r| r.fp),
            fn_: avg(&|r| r.fn_),
            macro_avg: avg_prf(&|r| r.macro_avg),
            micro_avg: avg_prf(&|r| r.micro_avg),
            weighted: avg_prf(&|r| r.weighted),
            alpha: avg(&|r| r.alpha),
        })
    }
}

fn mean_prf<I: Iterator<Item = PrfScores>>(items: I) -> PrfScores {
    let mut acc = PrfScores::default();
    let mut n = 0.0;
    for s in items {
        acc.precision += s.precision;
        acc.recall += s.recall;
        acc.f1 += s.f1;
        acc.degenerate |= s.degenerate;
        n += 1.0;
    }
    if n > 0.0 {
        acc.precision /= n;
        acc.recall /= n;
        acc.f1 /= n;
    }
    acc
}

/// Held-out evaluation of a multi-label predictor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultilabelEvaluation {
    /// One row per allergen, canonical order.
    pub per_label: Vec<LabelMetrics>,
    /// Over the 14 allergens, positive class only.
    pub macro_avg: PrfScores,
    pub micro_avg: PrfScores,
    /// Mean alpha over examples, on full label sets.
    pub alpha: f64,
    pub examples: usize,
    pub empty_empty: usize,
}

pub fn evaluate_multilabel(pairs: &[(LabelSet, LabelSet)], p: &AlphaParams) -> MultilabelEvaluation {
    let counts = confusion_over(pairs.iter().copied());
    let per_label = Allergen::ALL
        .iter()
        .map(|a| LabelMetrics::from_decisions(pairs.iter().map(|(t, q)| (t.contains(*a), q.contains(*a))), p))
        .collect();
    let alpha = mean_alpha(pairs.iter().copied(), p);
    MultilabelEvaluation {
        per_label,
        macro_avg: aggregate(&counts, Averaging::Macro).expect("14 labels"),
        micro_avg: aggregate(&counts, Averaging::Micro).expect("14 labels"),
        alpha: alpha.mean,
        examples: alpha.examples,
        empty_empty: alpha.empty_empty,
    }
}

impl MultilabelEvaluation {
    /// Arithmetic mean over repeated runs.
    pub fn mean(runs: &[MultilabelEvaluation]) -> Option<MultilabelEvaluation> {
        let first = runs.first()?;
        let n = runs.len() as f64;
        let per_label = (0..first.per_label.len())
            .map(|i| {
                let rows: Vec<LabelMetrics> = runs.iter().map(|r| r.per_label[i]).collect();
                LabelMetrics::mean(&rows).expect("non-empty")
            })
            .collect();
        Some(MultilabelEvaluation {
            per_label,
            macro_avg: mean_prf(runs.iter().map(|r| r.macro_avg)),
            micro_avg: mean_prf(runs.iter().map(|r| r.micro_avg)),
            alpha: runs.iter().map(|r| r.alpha).sum::<f64>() / n,
            examples: first.examples,
            empty_empty: first.empty_empty,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use Allergen::*;

    fn set(items: &[Allergen]) -> LabelSet {
        items.iter().copied().collect()
    }

    #[test]
    fn confusion_single_label() {
        let c = confusion(set(&[Milk]), set(&[Milk]));
        assert_eq!(c[Milk.index()].tp, 1);
        assert_eq!(c.iter().map(|c| c.tn).sum::<u64>(), 13);
        let c = confusion(set(&[Milk]), LabelSet::empty());
        assert_eq!(c[Milk.index()].fn_, 1);
    }

    #[test]
    fn confusion_mixed() {
        let c = confusion(set(&[Milk, Eggs]), set(&[Eggs, Fish]));
        assert_eq!(c[Eggs.index()], ConfusionCounts { tp: 1, ..Default::default() });
        assert_eq!(c[Milk.index()], ConfusionCounts { fn_: 1, ..Default::default() });
        assert_eq!(c[Fish.index()], ConfusionCounts { fp: 1, ..Default::default() });
        for a in Allergen::ALL {
            assert_eq!(c[a.index()].total(), 1);
            if ![Milk, Eggs, Fish].contains(&a) {
                assert_eq!(c[a.index()].tn, 1);
            }
        }
    }

    #[test]
    fn prf_cases() {
        let s = precision_recall_f1(&ConfusionCounts { tp: 1, ..Default::default() });
        assert_eq!((s.precision, s.recall, s.f1, s.degenerate), (1.0, 1.0, 1.0, false));
        let s = precision_recall_f1(&ConfusionCounts::default());
        assert_eq!((s.precision, s.recall, s.f1, s.degenerate), (0.0, 0.0, 0.0, true));
        let s = precision_recall_f1(&ConfusionCounts { tp: 3, fp: 1, fn_: 2, tn: 0 });
        assert!((s.precision - 0.75).abs() < 1e-15);
        assert!((s.recall - 0.6).abs() < 1e-15);
        assert!((s.f1 - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn aggregate_cases() {
        let one = [ConfusionCounts { tp: 3, fp: 1, fn_: 2, tn: 4 }];
        assert_eq!(
            aggregate(&one, Averaging::Macro).unwrap(),
            aggregate(&one, Averaging::Micro).unwrap()
        );
        let two = [
            ConfusionCounts { tp: 1, fp: 1, ..Default::default() },
            ConfusionCounts { tp: 1, ..Default::default() },
        ];
        assert!((aggregate(&two, Averaging::Macro).unwrap().precision - 0.75).abs() < 1e-15);
        assert!((aggregate(&two, Averaging::Micro).unwrap().precision - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(aggregate(&[], Averaging::Micro), Err(MetricsError::NoLabels));
    }

    #[test]
    fn two_class_micro_is_accuracy() {
        // fp total equals fn total over the two classes, so the micro
        // columns coincide.
        let c = ConfusionCounts { tp: 5405, tn: 2466, fp: 42, fn_: 100 };
        let s = binary_summary(&c);
        assert!((s.micro_avg.precision - s.micro_avg.recall).abs() < 1e-15);
        assert!((s.micro_avg.f1 - s.micro_avg.precision).abs() < 1e-15);
        assert!((s.micro_avg.precision - c.accuracy()).abs() < 1e-15);
        assert!((s.weighted.recall - c.accuracy()).abs() < 1e-12);
    }

    #[test]
    fn alpha_formula_cases() {
        let p = AlphaParams::default();
        assert_eq!(alpha_score(set(&[Milk]), set(&[Milk]), &p), 1.0);
        let fn_case = alpha_score(set(&[Milk]), LabelSet::empty(), &p);
        assert!((fn_case - 0.67f64.powi(7)).abs() < 1e-12);
        assert!((fn_case - 0.0606).abs() < 1e-4);
        let fp_case = alpha_score(set(&[Milk]), set(&[Milk, Eggs]), &p);
        assert!((fp_case - 0.0078125).abs() < 1e-12);
        assert_eq!(alpha_score(LabelSet::empty(), LabelSet::empty(), &p), 1.0);
        // all wrong with full weights
        assert_eq!(alpha_score(set(&[Milk]), set(&[Eggs]), &AlphaParams::new(0.0, 1.0, 1.0).unwrap()), 0.0);
    }

    #[test]
    fn alpha_params_validation() {
        assert!(AlphaParams::new(-1.0, 0.3, 1.0).is_err());
        assert!(AlphaParams::new(1.0, 1.3, 1.0).is_err());
        assert!(AlphaParams::new(1.0, 0.3, -0.1).is_err());
    }

    #[test]
    fn mean_alpha_counts_empty_pairs() {
        let pairs = vec![
            (LabelSet::empty(), LabelSet::empty()),
            (set(&[Milk]), set(&[Milk, Eggs])),
        ];
        let s = mean_alpha(pairs, &AlphaParams::default());
        assert_eq!(s.empty_empty, 1);
        assert!((s.mean - (1.0 + 0.0078125) / 2.0).abs() < 1e-15);
    }

    #[test]
    fn label_stats_cases() {
        let s = label_stats(&[set(&[Gluten]), set(&[Gluten, Milk])]).unwrap();
        assert_eq!(s.label_cardinality, 1.5);
        assert_eq!(s.labels_present.len(), 2);
        assert_eq!(s.label_density, Some(0.75));

        let s = label_stats(&[set(&[Milk, Eggs, Fish]); 4]).unwrap();
        assert_eq!((s.label_cardinality, s.label_density), (3.0, Some(1.0)));

        let s = label_stats(&[set(&[Fish])]).unwrap();
        assert_eq!((s.label_cardinality, s.label_density), (1.0, Some(1.0)));

        let s = label_stats(&[LabelSet::empty(); 3]).unwrap();
        assert_eq!(s.label_density, None);
        assert_eq!(s.label_cardinality, 0.0);
        assert_eq!(label_stats(&[]).unwrap_err(), MetricsError::EmptyDataset);
    }

    #[test]
    fn allergen_cooccurrence_single() {
        let m = allergen_cooccurrence(&[set(&[Milk, Fish])]);
        assert_eq!(m.absolute[Milk.index()][Fish.index()], 1);
        assert_eq!(m.absolute[Milk.index()][Milk.index()], 1);
        assert_eq!(m.relative_percent[Milk.index()][Fish.index()], 100.0);
        assert!(m.undefined_rows[Gluten.index()]);
    }

    proptest! {
        #[test]
        fn alpha_in_unit_interval(t in 0u16..(1 << 14), p in 0u16..(1 << 14),
                                  a in 0.0f64..20.0, b in 0.0f64..=1.0, g in 0.0f64..=1.0) {
            let params = AlphaParams::new(a, b, g).unwrap();
            let s = alpha_score(LabelSet::from_bits(t).unwrap(), LabelSet::from_bits(p).unwrap(), &params);
            prop_assert!((0.0..=1.0).contains(&s));
        }

        #[test]
        fn alpha_monotone_in_errors(t in 0u16..(1 << 14), p in 0u16..(1 << 14), k in 0usize..14) {
            // Turning a true positive into a false negative keeps the union
            // fixed and can only lower the score.
            let truth = LabelSet::from_bits(t).unwrap();
            let pred = LabelSet::from_bits(p).unwrap();
            let a = Allergen::from_index(k).unwrap();
            let params = AlphaParams::default();
            if truth.contains(a) && pred.contains(a) {
                let mut worse = pred;
                worse.remove(a);
                prop_assert!(alpha_score(truth, worse, &params) <= alpha_score(truth, pred, &params));
            }
        }

        #[test]
        fn cooccurrence_symmetric(bits in proptest::collection::vec(0u16..(1 << 14), 0..40)) {
            let sets: Vec<LabelSet> = bits.iter().map(|b| LabelSet::from_bits(*b).unwrap()).collect();
            let m = allergen_cooccurrence(&sets);
            for i in 0..14 {
                for j in 0..14 {
                    prop_assert_eq!(m.absolute[i][j], m.absolute[j][i]);
                }
            }
        }
    }
}
