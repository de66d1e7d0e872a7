use std::collections::BTreeMap;
use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::Serialize;

use super::pipeline::{BundleModel, TextPipeline};
use super::{
    parse_chain_order, InputArgs, Mode, OutputDir, PredictArgs, RunConfig, RunManifest, StatsArgs, Strategy,
    TrainArgs, VerifyArgs, EXIT_FINDINGS, EXIT_OK,
};
use crate::ingest::{parse_products_file, InputFormat, IngestOutput, MappingTable};
use crate::learners::{predict_proba, train as train_binary};
use crate::metrics::{allergen_cooccurrence, label_stats, LabelMetrics, MultilabelEvaluation};
use crate::model::{Allergen, LabelSet, ProductRecord};
use crate::multilabel::{
    evaluate_binary_relevance, evaluate_chain, run_order_experiment, train_binary_relevance, train_chain,
    MultilabelModel, OrderRun,
};
use crate::report::{
    write_allergen_distribution, write_appendix_csv, write_findings_jsonl, write_findings_summary,
    write_label_stats, write_matrix_csv, write_nutrient_distribution, write_summary_csv, RunLabel, SummaryRow,
};
use crate::rules::{check_all, error_cooccurrence, RuleConfig};
use crate::text::{dictionary_scan, SignalDictionary, SparseVector};

const BUNDLE_DIR: &str = "model";

fn ingest(input: &InputArgs, manifest: &mut RunManifest, out: &mut OutputDir) -> Result<IngestOutput> {
    manifest.add_input("products", &input.products)?;
    manifest.add_input("mapping", &input.mapping)?;
    let mapping = MappingTable::load(&input.mapping).with_context(|| format!("mapping {}", input.mapping.display()))?;
    let format = match input.delimiter {
        Some(d) if d.is_ascii() => InputFormat::Csv { delimiter: d as u8 },
        Some(d) => bail!("delimiter must be an ASCII character, got `{d}`"),
        None => InputFormat::from_path(&input.products),
    };
    let parsed = parse_products_file(&input.products, format, &mapping)
        .with_context(|| format!("products {}", input.products.display()))?;
    if !parsed.issues.is_empty() {
        log::warn!("{} cell issues while reading products (see ingest_issues.jsonl)", parsed.issues.len());
    }
    if !parsed.ignored_columns.is_empty() {
        log::info!("unmapped columns: {}", parsed.ignored_columns.join(", "));
    }
    let mut buf = Vec::new();
    for issue in &parsed.issues {
        serde_json::to_writer(&mut buf, issue)?;
        buf.push(b'\n');
    }
    out.write("ingest_issues.jsonl", &buf)?;
    Ok(parsed)
}

pub(super) fn verify(a: &VerifyArgs, config: &RunConfig, config_path: Option<&Path>) -> Result<i32> {
    let mut manifest = RunManifest::new("verify");
    let mut out = OutputDir::create(&a.input.out_dir)?;
    if let Some(p) = config_path {
        manifest.add_input("config", p)?;
    }
    let rules = match &a.rules_config {
        Some(p) => {
            manifest.add_input("rules_config", p)?;
            let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            serde_json::from_str::<RuleConfig>(&text).with_context(|| format!("parsing {}", p.display()))?
        }
        None => config.rules.clone(),
    };
    rules.validate()?;
    manifest.config = serde_json::to_value(&rules)?;

    let parsed = ingest(&a.input, &mut manifest, &mut out)?;
    let findings = check_all(&parsed.records, &rules);
    let total: usize = findings.iter().map(Vec::len).sum();
    log::info!("{} products checked, {total} findings", parsed.records.len());

    out.write_with("findings.jsonl", |b| write_findings_jsonl(b, &findings))?;
    out.write_with("summary.csv", |b| write_findings_summary(b, &findings))?;
    let matrix = error_cooccurrence(findings.iter().map(Vec::as_slice));
    out.write_with("error_cooccurrence_absolute.csv", |b| write_matrix_csv(b, &matrix, false))?;
    out.write_with("error_cooccurrence_relative.csv", |b| write_matrix_csv(b, &matrix, true))?;
    out.finish(manifest)?;
    Ok(if total == 0 { EXIT_OK } else { EXIT_FINDINGS })
}

pub(super) fn stats(a: &StatsArgs) -> Result<i32> {
    let mut manifest = RunManifest::new("stats");
    let mut out = OutputDir::create(&a.input.out_dir)?;
    let parsed = ingest(&a.input, &mut manifest, &mut out)?;
    if parsed.records.is_empty() {
        bail!("no products in {}", a.input.products.display());
    }
    let labels: Vec<LabelSet> = parsed.records.iter().map(|p| p.declared_allergens).collect();
    let stats = label_stats(&labels)?;
    if stats.label_density.is_none() {
        manifest.notes.push("no allergen labels present; label density is undefined".into());
    }
    out.write_with("nutrient_distribution.csv", |b| write_nutrient_distribution(b, &parsed.records))?;
    out.write_with("allergen_distribution.csv", |b| write_allergen_distribution(b, &stats))?;
    out.write_with("label_stats.csv", |b| write_label_stats(b, &stats))?;
    let m = allergen_cooccurrence(&labels);
    out.write_with("allergen_cooccurrence_absolute.csv", |b| write_matrix_csv(b, &m, false))?;
    out.write_with("allergen_cooccurrence_relative.csv", |b| write_matrix_csv(b, &m, true))?;
    out.finish(manifest)?;
    Ok(EXIT_OK)
}

fn report_name(a: Allergen) -> String {
    format!("metrics/appendix_{}.csv", a.name().to_lowercase())
}

pub(super) fn train(a: &TrainArgs, config: &RunConfig, config_path: Option<&Path>) -> Result<i32> {
    let mut settings = config.train.clone();
    settings.apply(a);
    settings.validate()?;

    let mut manifest = RunManifest::new("train");
    let mut out = OutputDir::create(&a.input.out_dir)?;
    if let Some(p) = config_path {
        manifest.add_input("config", p)?;
    }
    manifest.config = serde_json::to_value(&settings)?;

    let parsed = ingest(&a.input, &mut manifest, &mut out)?;
    let total = parsed.records.len();
    let mut products: Vec<ProductRecord> = parsed.records.into_iter().filter(ProductRecord::has_ingredients).collect();
    if products.len() < total {
        let note = format!("{} products without ingredient text skipped", total - products.len());
        log::warn!("{note}");
        manifest.notes.push(note);
    }
    if products.len() < settings.min_rows {
        bail!(
            "only {} products with ingredient text, at least {} required",
            products.len(),
            settings.min_rows
        );
    }
    // canonical order: results must not depend on row order
    products.sort_by(|x, y| x.gtin.cmp(&y.gtin).then_with(|| x.ingredients_raw.cmp(&y.ingredients_raw)));

    let keys: Vec<u16> = products
        .iter()
        .map(|p| match settings.mode {
            Mode::General => !p.declared_allergens.is_empty() as u16,
            Mode::Specific => p.declared_allergens.bits(),
        })
        .collect();
    let is_test = super::stratified_split(&keys, settings.test_fraction, settings.seed);
    manifest.seeds.insert("split".into(), vec![settings.seed]);
    let mut split_csv = String::from("gtin,partition\n");
    for (p, t) in products.iter().zip(&is_test) {
        split_csv.push_str(&format!("{},{}\n", csv_field(&p.gtin), if *t { "test" } else { "train" }));
    }
    out.write("split.csv", split_csv.as_bytes())?;

    let (train_products, test_products): (Vec<_>, Vec<_>) = products
        .iter()
        .zip(&is_test)
        .partition(|(_, t)| !**t);
    let train_products: Vec<&ProductRecord> = train_products.into_iter().map(|(p, _)| p).collect();
    let test_products: Vec<&ProductRecord> = test_products.into_iter().map(|(p, _)| p).collect();

    let config = TextPipeline::new_config(
        settings.mode,
        settings.strategy,
        settings.text,
        settings.source,
        settings.min_df,
        settings.arch,
        settings.seed,
    );
    let docs: Vec<&str> = train_products.iter().map(|p| p.ingredients_raw.as_str()).collect();
    let pipeline = TextPipeline::fit(config, &docs)?;
    let fp = pipeline.config.vocabulary_fingerprint.clone();
    let vectorize = |ps: &[&ProductRecord]| -> Result<Vec<(SparseVector, LabelSet)>> {
        ps.iter()
            .map(|p| Ok((pipeline.vectorize(&p.ingredients_raw)?, p.declared_allergens)))
            .collect()
    };
    let train_set = vectorize(&train_products)?;
    let test_set = vectorize(&test_products)?;
    log::info!(
        "{} training and {} test products, vocabulary of {}",
        train_set.len(),
        test_set.len(),
        pipeline.vocabulary.len()
    );

    let arch = settings.arch.architecture();
    let run = RunLabel {
        algo: arch.label().into(),
        vocab: pipeline.vocabulary.len(),
        text: settings.text.vector_mode().label().into(),
    };
    let cfg = &settings.learner;

    let model = match settings.mode {
        Mode::General => {
            if settings.strategy == Strategy::Chain {
                manifest.notes.push("general mode is a single binary problem; strategy ignored".into());
            }
            let data: Vec<(SparseVector, bool)> =
                train_set.iter().map(|(x, y)| (x.clone(), !y.is_empty())).collect();
            let mut m = train_binary(&data, cfg, arch)?;
            m.vocabulary_fingerprint = fp.clone();
            if m.is_degenerate() {
                let note = "training labels contain a single class; constant model".to_string();
                log::warn!("{note}");
                manifest.notes.push(note);
            }
            let decisions = test_set
                .iter()
                .map(|(x, y)| Ok((!y.is_empty(), predict_proba(&m, x)? >= 0.5)))
                .collect::<Result<Vec<_>>>()?;
            let metrics = LabelMetrics::from_decisions(decisions, &settings.alpha);
            out.write_with("metrics/appendix_general.csv", |b| write_appendix_csv(b, &[(run.clone(), metrics)]))?;
            out.write_with("metrics/summary.csv", |b| {
                write_summary_csv(b, &[SummaryRow::binary(None, run.clone(), &metrics)])
            })?;
            out.write("metrics/evaluation.json", &(serde_json::to_vec_pretty(&metrics)?))?;
            manifest.seeds.insert("general".into(), vec![m.config.seed]);
            BundleModel::General(m)
        }
        Mode::Specific => {
            let (model, evaluation) = match settings.strategy {
                Strategy::Br => {
                    let m = train_binary_relevance(&train_set, cfg, arch)?;
                    let e = evaluate_binary_relevance(&m, &test_set, &settings.alpha)?;
                    manifest.seeds.insert("binary_relevance".into(), m.seeds());
                    (MultilabelModel::BinaryRelevance(m), e)
                }
                Strategy::Chain => {
                    let strategy = parse_chain_order(&settings.chain_order, settings.seed)?;
                    let orders = strategy.orders()?;
                    let (chain, evaluation, runs) = if orders.len() == 1 {
                        let chain = train_chain(&train_set, cfg, arch, &orders[0])?;
                        let e = evaluate_chain(&chain, &test_set, &settings.alpha)?;
                        let runs = vec![OrderRun { order: orders[0].clone(), train_seed: cfg.seed, evaluation: e.clone() }];
                        (chain, e, runs)
                    } else {
                        let report =
                            run_order_experiment(&train_set, &test_set, cfg, arch, &strategy, &settings.alpha)?;
                        // the bundle keeps the chain of the first drawn order
                        let chain = train_chain(&train_set, cfg, arch, &orders[0])?;
                        manifest
                            .notes
                            .push(format!("metrics averaged over {} orders; bundle holds the first", orders.len()));
                        (chain, report.averaged, report.runs)
                    };
                    manifest.seeds.insert("chain".into(), chain.seeds());
                    if let crate::multilabel::ChainOrderStrategy::RandomPermutations { seed, .. } = strategy {
                        manifest.seeds.insert("permutations".into(), vec![seed]);
                    }
                    out.write("metrics/chain_runs.json", &serde_json::to_vec_pretty(&runs)?)?;
                    (MultilabelModel::Chain(chain), evaluation)
                }
            };
            note_degenerate(&model, &mut manifest);
            write_multilabel_reports(&mut out, &run, &evaluation)?;
            let mut model = model;
            model.set_vocabulary_fingerprint(&fp);
            BundleModel::Multi(model)
        }
    };

    let bundle = out.path(BUNDLE_DIR);
    pipeline.save(&bundle)?;
    model.save(&bundle)?;
    out.record_tree(BUNDLE_DIR)?;
    out.finish(manifest)?;
    Ok(EXIT_OK)
}

fn note_degenerate(model: &MultilabelModel, manifest: &mut RunManifest) {
    let order: Vec<Allergen> = match model {
        MultilabelModel::BinaryRelevance(_) => Allergen::ALL.to_vec(),
        MultilabelModel::Chain(c) => c.order().to_vec(),
    };
    for (a, m) in order.iter().zip(model.models()) {
        if m.is_degenerate() {
            let note = format!("{a}: training labels contain a single class; constant model");
            log::warn!("{note}");
            manifest.notes.push(note);
        }
    }
}

fn write_multilabel_reports(out: &mut OutputDir, run: &RunLabel, e: &MultilabelEvaluation) -> Result<()> {
    for (a, m) in Allergen::ALL.iter().zip(&e.per_label) {
        out.write_with(&report_name(*a), |b| write_appendix_csv(b, &[(run.clone(), *m)]))?;
    }
    out.write_with("metrics/summary.csv", |b| write_summary_csv(b, &SummaryRow::multilabel(run, e)))?;
    out.write("metrics/evaluation.json", &serde_json::to_vec_pretty(e)?)?;
    Ok(())
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Which source asserted an allergen in a hybrid prediction.
pub fn source_tag(by_model: bool, by_dict: bool) -> Option<&'static str> {
    match (by_model, by_dict) {
        (true, true) => Some("model+dict"),
        (true, false) => Some("model"),
        (false, true) => Some("dict"),
        (false, false) => None,
    }
}

/// Union of model and dictionary labels, each tagged with its source(s).
pub fn hybrid_union(model: LabelSet, dict: LabelSet) -> Vec<(Allergen, &'static str)> {
    model
        .union(dict)
        .iter()
        .map(|a| (a, source_tag(model.contains(a), dict.contains(a)).expect("in union")))
        .collect()
}

#[derive(Serialize)]
struct LabelOut {
    allergen: &'static str,
    source: &'static str,
}

#[derive(Serialize)]
struct SpecificOut<'a> {
    gtin: &'a str,
    labels: Vec<LabelOut>,
    probabilities: BTreeMap<&'static str, f64>,
}

#[derive(Serialize)]
struct GeneralOut<'a> {
    gtin: &'a str,
    contains_allergens: bool,
    probability: f64,
    source: Option<&'static str>,
}

pub(super) fn predict(a: &PredictArgs) -> Result<i32> {
    let mut manifest = RunManifest::new("predict");
    let mut out = OutputDir::create(&a.input.out_dir)?;
    let pipeline = TextPipeline::load(&a.model)?;
    let model = BundleModel::load(&a.model, &pipeline.config)?;
    manifest.add_input("bundle_pipeline", &a.model.join(super::pipeline::PIPELINE_FILE))?;
    manifest.config = serde_json::to_value(&pipeline.config)?;

    let dict = match a.dict.as_deref() {
        None => None,
        Some("builtin") => Some(SignalDictionary::builtin()),
        Some(p) => {
            let path = Path::new(p);
            manifest.add_input("dict", path)?;
            Some(SignalDictionary::load(path).with_context(|| format!("dictionary {p}"))?)
        }
    };

    let parsed = ingest(&a.input, &mut manifest, &mut out)?;
    let mut lines = Vec::new();
    let mut skipped = 0;
    for p in &parsed.records {
        if !p.has_ingredients() {
            log::warn!("{}: no ingredient text, skipped", p.gtin);
            manifest.notes.push(format!("{}: no ingredient text, skipped", p.gtin));
            skipped += 1;
            continue;
        }
        let x = pipeline.vectorize(&p.ingredients_raw)?;
        let hits = dict
            .as_ref()
            .map(|d| dictionary_scan(&super::TextSource::FullList.tokens(&p.ingredients_raw), d))
            .unwrap_or_default();
        match &model {
            BundleModel::General(m) => {
                let prob = predict_proba(m, &x)?;
                let by_model = prob >= 0.5;
                let by_dict = !hits.is_empty();
                let rec = GeneralOut {
                    gtin: &p.gtin,
                    contains_allergens: by_model || by_dict,
                    probability: prob,
                    source: source_tag(by_model, by_dict),
                };
                serde_json::to_writer(&mut lines, &rec)?;
            }
            BundleModel::Multi(m) => {
                let pred = m.predict(&x)?;
                let labels = hybrid_union(pred.labels, hits)
                    .into_iter()
                    .map(|(a, source)| LabelOut { allergen: a.name(), source })
                    .collect();
                let probabilities = Allergen::ALL.iter().map(|a| (a.name(), pred.probabilities[a.index()])).collect();
                serde_json::to_writer(&mut lines, &SpecificOut { gtin: &p.gtin, labels, probabilities })?;
            }
        }
        lines.push(b'\n');
    }
    if skipped > 0 {
        log::warn!("{skipped} products skipped");
    }
    out.write("predictions.jsonl", &lines)?;
    out.finish(manifest)?;
    Ok(EXIT_OK)
}
