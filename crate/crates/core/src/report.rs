//! CSV and JSON-lines writers for verification findings, dataset statistics
//! and evaluation tables.
//!
//! Metrics are printed with six decimals and counts as integers (or with two
//! decimals when averaged over runs), so equal inputs give equal bytes.

use std::io::Write;

use serde::Serialize;

use crate::metrics::{CooccurrenceMatrix, DatasetLabelStats, LabelMetrics, MultilabelEvaluation, PrfScores};
use crate::model::{Allergen, Nutrient, ProductRecord};
use crate::rules::{ErrorId, Finding};

/// Columns of a per-label evaluation table.
pub const APPENDIX_COLUMNS: [&str; 11] = ["Algo", "Vocab", "TextT", "TP", "TN", "FP", "FN", "Pr", "Re", "F1", "Alpha"];

/// Columns of a macro/micro summary table.
pub const SUMMARY_COLUMNS: [&str; 10] = [
    "Algo", "Voc", "TT", "Pr_macro", "Re_macro", "F1_macro", "Pr_micro", "Re_micro", "F1_micro", "Alpha",
];

/// Row order of the nutrient distribution table.
pub const DISTRIBUTION_NUTRIENTS: [Nutrient; 12] = [
    Nutrient::Fat,
    Nutrient::SaturatedFat,
    Nutrient::Carbohydrate,
    Nutrient::Sugar,
    Nutrient::Protein,
    Nutrient::Salt,
    Nutrient::Fibre,
    Nutrient::Polyols,
    Nutrient::Starch,
    Nutrient::UnsaturatedFat,
    Nutrient::Alcohol,
    Nutrient::OrganicAcid,
];

#[derive(Debug, thiserror::Error)]
pub enum ReportError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Identifies the model configuration a table row belongs to.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RunLabel {
    pub algo: String,
    pub vocab: usize,
    pub text: String,
}

pub fn fmt_metric(v: f64) -> String {
    format!("{v:.6}")
}

pub fn fmt_count(v: f64) -> String {
    if v.fract() == 0.0 {
        format!("{}", v as i64)
    } else {
        format!("{v:.2}")
    }
}

fn csv_writer<W: Write>(w: W) -> csv::Writer<W> {
    csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(w)
}

/// One finding per line.
pub fn write_findings_jsonl<W: Write>(mut w: W, per_product: &[Vec<Finding>]) -> Result<(), ReportError> {
    for f in per_product.iter().flatten() {
        serde_json::to_writer(&mut w, f)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

/// Number of products per error ID (a product counts once per ID).
pub fn error_counts(per_product: &[Vec<Finding>]) -> [u64; 7] {
    let mut counts = [0u64; 7];
    for findings in per_product {
        let mut seen = [false; 7];
        for f in findings {
            seen[f.error_id.index()] = true;
        }
        for (c, s) in counts.iter_mut().zip(seen) {
            *c += s as u64;
        }
    }
    counts
}

pub fn write_findings_summary<W: Write>(w: W, per_product: &[Vec<Finding>]) -> Result<(), ReportError> {
    let counts = error_counts(per_product);
    let mut out = csv_writer(w);
    out.write_record(["error_id", "cause", "products"])?;
    for id in ErrorId::ALL {
        out.write_record([id.code(), id.cause(), &counts[id.index()].to_string()])?;
    }
    out.flush()?;
    Ok(())
}

/// Square matrix with a leading `label` column, absolute counts or row
/// percentages.
pub fn write_matrix_csv<W: Write>(w: W, m: &CooccurrenceMatrix, relative: bool) -> Result<(), ReportError> {
    let mut out = csv_writer(w);
    let mut header = vec!["label".to_string()];
    header.extend(m.labels.iter().cloned());
    out.write_record(&header)?;
    for (i, label) in m.labels.iter().enumerate() {
        let mut row = vec![label.clone()];
        if relative {
            row.extend(m.relative_percent[i].iter().map(|v| format!("{v:.4}")));
        } else {
            row.extend(m.absolute[i].iter().map(u64::to_string));
        }
        out.write_record(&row)?;
    }
    out.flush()?;
    Ok(())
}

fn appendix_record(run: &RunLabel, m: &LabelMetrics) -> Vec<String> {
    vec![
        run.algo.clone(),
        run.vocab.to_string(),
        run.text.clone(),
        fmt_count(m.tp),
        fmt_count(m.tn),
        fmt_count(m.fp),
        fmt_count(m.fn_),
        fmt_metric(m.weighted.precision),
        fmt_metric(m.weighted.recall),
        fmt_metric(m.weighted.f1),
        fmt_metric(m.alpha),
    ]
}

/// Per-label table. Pr/Re/F1 are averaged over the present and absent class,
/// weighted by their support.
pub fn write_appendix_csv<W: Write>(w: W, rows: &[(RunLabel, LabelMetrics)]) -> Result<(), ReportError> {
    let mut out = csv_writer(w);
    out.write_record(APPENDIX_COLUMNS)?;
    for (run, m) in rows {
        out.write_record(appendix_record(run, m))?;
    }
    out.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    /// `None` for tables about a single binary problem.
    pub allergen: Option<String>,
    pub run: RunLabel,
    pub macro_avg: PrfScores,
    pub micro_avg: PrfScores,
    pub alpha: f64,
}

impl SummaryRow {
    /// Row for one binary problem: macro over the two classes, micro equal
    /// to accuracy.
    pub fn binary(allergen: Option<String>, run: RunLabel, m: &LabelMetrics) -> SummaryRow {
        SummaryRow { allergen, run, macro_avg: m.macro_avg, micro_avg: m.micro_avg, alpha: m.alpha }
    }

    /// Per-allergen rows followed by an `All` row over the 14 labels.
    pub fn multilabel(run: &RunLabel, e: &MultilabelEvaluation) -> Vec<SummaryRow> {
        let mut rows: Vec<SummaryRow> = Allergen::ALL
            .iter()
            .zip(&e.per_label)
            .map(|(a, m)| SummaryRow::binary(Some(a.name().to_string()), run.clone(), m))
            .collect();
        rows.push(SummaryRow {
            allergen: Some("All".into()),
            run: run.clone(),
            macro_avg: e.macro_avg,
            micro_avg: e.micro_avg,
            alpha: e.alpha,
        });
        rows
    }
}

/// Macro/micro table; an `Allergen` column is prepended when any row has one.
pub fn write_summary_csv<W: Write>(w: W, rows: &[SummaryRow]) -> Result<(), ReportError> {
    let with_allergen = rows.iter().any(|r| r.allergen.is_some());
    let mut out = csv_writer(w);
    let mut header: Vec<&str> = Vec::new();
    if with_allergen {
        header.push("Allergen");
    }
    header.extend(SUMMARY_COLUMNS);
    out.write_record(&header)?;
    for r in rows {
        let mut rec = Vec::with_capacity(11);
        if with_allergen {
            rec.push(r.allergen.clone().unwrap_or_default());
        }
        rec.extend([r.run.algo.clone(), r.run.vocab.to_string(), r.run.text.clone()]);
        for v in [
            r.macro_avg.precision,
            r.macro_avg.recall,
            r.macro_avg.f1,
            r.micro_avg.precision,
            r.micro_avg.recall,
            r.micro_avg.f1,
            r.alpha,
        ] {
            rec.push(fmt_metric(v));
        }
        out.write_record(&rec)?;
    }
    out.flush()?;
    Ok(())
}

/// Products with a value greater than 0, per energy unit and nutrient.
pub fn nutrient_distribution(products: &[ProductRecord]) -> Vec<(String, u64)> {
    let positive = |v: Option<f64>| v.is_some_and(|x| x > 0.0);
    let mut rows = vec![
        ("ENER_KJ".to_string(), products.iter().filter(|p| positive(p.nutrients.energy_kj)).count() as u64),
        ("ENER_KC".to_string(), products.iter().filter(|p| positive(p.nutrients.energy_kcal)).count() as u64),
    ];
    for n in DISTRIBUTION_NUTRIENTS {
        let c = products.iter().filter(|p| positive(p.nutrients.get(n))).count() as u64;
        rows.push((n.code().to_string(), c));
    }
    rows
}

pub fn write_nutrient_distribution<W: Write>(w: W, products: &[ProductRecord]) -> Result<(), ReportError> {
    let mut out = csv_writer(w);
    out.write_record(["value", "products"])?;
    for (name, c) in nutrient_distribution(products) {
        out.write_record([name, c.to_string()])?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_allergen_distribution<W: Write>(w: W, stats: &DatasetLabelStats) -> Result<(), ReportError> {
    let mut out = csv_writer(w);
    out.write_record(["allergen", "products"])?;
    for a in Allergen::ALL {
        out.write_record([a.name().to_string(), stats.per_allergen[a.index()].to_string()])?;
    }
    out.flush()?;
    Ok(())
}

/// Label cardinality and density; density is empty when no label occurs.
pub fn write_label_stats<W: Write>(w: W, stats: &DatasetLabelStats) -> Result<(), ReportError> {
    let mut out = csv_writer(w);
    out.write_record(["statistic", "value"])?;
    out.write_record(["products".to_string(), stats.products.to_string()])?;
    out.write_record(["distinct_labels".to_string(), stats.labels_present.len().to_string()])?;
    out.write_record(["label_cardinality".to_string(), fmt_metric(stats.label_cardinality)])?;
    out.write_record([
        "label_density".to_string(),
        stats.label_density.map(fmt_metric).unwrap_or_default(),
    ])?;
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::{label_stats, AlphaParams, ConfusionCounts};
    use crate::model::{LabelSet, NutrientPanel};
    use crate::rules::{check_product, RuleConfig};

    fn text<F: FnOnce(&mut Vec<u8>) -> Result<(), ReportError>>(f: F) -> String {
        let mut buf = Vec::new();
        f(&mut buf).unwrap();
        String::from_utf8(buf).unwrap()
    }

    fn run() -> RunLabel {
        RunLabel { algo: "NN".into(), vocab: 9456, text: "BOW".into() }
    }

    #[test]
    fn appendix_header_and_row() {
        let c = ConfusionCounts { tp: 5405, tn: 2466, fp: 42, fn_: 100 };
        let m = LabelMetrics::from_counts(&c, 0.9);
        let out = text(|b| write_appendix_csv(b, &[(run(), m)]));
        let mut lines = out.lines();
        assert_eq!(lines.next().unwrap(), "Algo,Vocab,TextT,TP,TN,FP,FN,Pr,Re,F1,Alpha");
        let row: Vec<&str> = lines.next().unwrap().split(',').collect();
        assert_eq!(&row[..7], &["NN", "9456", "BOW", "5405", "2466", "42", "100"]);
        // support-weighted precision of the two classes
        assert_eq!(&row[7][..5], "0.982");
    }

    #[test]
    fn summary_header_with_and_without_allergen() {
        let m = LabelMetrics::from_counts(&ConfusionCounts { tp: 1, tn: 1, fp: 0, fn_: 0 }, 1.0);
        let plain = text(|b| write_summary_csv(b, &[SummaryRow::binary(None, run(), &m)]));
        assert_eq!(
            plain.lines().next().unwrap(),
            "Algo,Voc,TT,Pr_macro,Re_macro,F1_macro,Pr_micro,Re_micro,F1_micro,Alpha"
        );
        let e = crate::metrics::evaluate_multilabel(&[(LabelSet::empty(), LabelSet::empty())], &AlphaParams::default());
        let rows = SummaryRow::multilabel(&run(), &e);
        assert_eq!(rows.len(), 15);
        let tagged = text(|b| write_summary_csv(b, &rows));
        assert!(tagged.starts_with("Allergen,Algo,Voc,TT,"));
        assert_eq!(tagged.lines().count(), 16);
        assert!(tagged.lines().last().unwrap().starts_with("All,NN,9456,BOW,"));
    }

    #[test]
    fn findings_summary_counts_products() {
        let mut p = ProductRecord::new("1");
        p.nutrients = NutrientPanel::new().with_energy(None, None);
        let f = check_product(&p, &RuleConfig::default());
        let out = text(|b| write_findings_summary(b, &[f.clone(), f]));
        let lines: Vec<&str> = out.lines().collect();
        assert_eq!(lines.len(), 8);
        assert_eq!(lines[0], "error_id,cause,products");
        assert!(lines[1].starts_with("MV_KJ,") && lines[1].ends_with(",2"));
        assert!(lines[2].starts_with("MV_KC,") && lines[2].ends_with(",2"));
    }

    #[test]
    fn nutrient_distribution_counts_positive_only() {
        let mut a = ProductRecord::new("a");
        a.nutrients = NutrientPanel::new().with(Nutrient::Fat, 0.0).with_energy(Some(100.0), Some(24.0));
        let mut b = ProductRecord::new("b");
        b.nutrients = NutrientPanel::new().with(Nutrient::Fat, 2.0).with_energy(None, Some(10.0));
        let c = ProductRecord::new("c");
        let rows = nutrient_distribution(&[a, b, c]);
        let get = |k: &str| rows.iter().find(|r| r.0 == k).unwrap().1;
        assert_eq!(get("ENER_KJ"), 1);
        assert_eq!(get("ENER_KC"), 2);
        assert_eq!(get("FAT"), 1);
        assert_eq!(get("STA"), 0);
    }

    #[test]
    fn label_stats_leaves_density_blank_when_undefined() {
        let stats = label_stats(&[LabelSet::empty()]).unwrap();
        let out = text(|b| write_label_stats(b, &stats));
        assert!(out.contains("label_density,\n"));
    }

    #[test]
    fn count_formatting() {
        assert_eq!(fmt_count(12.0), "12");
        assert_eq!(fmt_count(12.5), "12.50");
    }
}
