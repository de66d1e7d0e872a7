mod common;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use ficcheck::model::{Allergen, LabelSet};
use serde_json::Value;

const HEADER: &str = "GTIN,NAME,INGREDIENTS,ALLERGENS,ENER_KJ,ENER_KC,FAT,SFA,CH,SUG,PRO,SAL,FIB\n";

/// Ten per-100g panels; the comment gives the findings each one must raise.
const TEN_PRODUCTS: &str = "\
1,clean,water,,382,91,3,1,10,5,5,0.5,2
2,no kj,water,,,91,3,1,10,5,5,0.5,2
3,no kcal,water,,382,,3,1,10,5,5,0.5,2
4,bad ratio,water,,382,80,3,1,10,5,5,0.5,2
5,energy sum,water,,500,120,3,1,10,5,5,0.5,2
6,fatty acids,water,,382,91,3,4,10,5,5,0.5,2
7,sugar,water,,382,91,3,1,10,12,5,0.5,2
8,over 100g,water,,2270,540,20,5,60,5,30,0,0
9,over max,oil,,4000,950,100,50,0,0,0,0,0
10,clean too,water,,419,99,1,0.2,20,5,2,0.1,1
";
// 1: none   2: MV_KJ   3: MV_KC   4: CE_EN   5: SE_EN   6: VE_FA
// 7: VE_SU  8: VE_IN   9: SE_EN twice (maximum and sum)   10: none

fn ficcheck(args: &[&str]) -> Output {
    Command::new(common::bin()).args(args).output().expect("binary runs")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn write(dir: &Path, name: &str, body: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, body).unwrap();
    p
}

fn run_in(dir: &Path, cmd: &str, products: &Path, out: &str, extra: &[&str]) -> (Output, PathBuf) {
    let mapping = common::write_mapping(dir);
    let out_dir = dir.join(out);
    let mut args = vec![cmd, "--products", s(products), "--mapping", s(&mapping), "--out-dir", s(&out_dir)];
    args.extend_from_slice(extra);
    (ficcheck(&args), out_dir)
}

fn summary_counts(path: &Path) -> BTreeMap<String, u64> {
    let mut r = csv::Reader::from_path(path).unwrap();
    r.records().map(|rec| {
        let rec = rec.unwrap();
        (rec[0].to_string(), rec[2].parse().unwrap())
    })
    .collect()
}

fn read_json(p: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap()
}

fn jsonl(p: &Path) -> Vec<Value> {
    std::fs::read_to_string(p).unwrap().lines().map(|l| serde_json::from_str(l).unwrap()).collect()
}

#[test]
fn verify_clean_input_exits_zero() {
    let tmp = tempfile::tempdir().unwrap();
    let body: String = TEN_PRODUCTS.lines().filter(|l| l.contains("clean")).map(|l| format!("{l}\n")).collect();
    let products = write(tmp.path(), "p.csv", &(HEADER.to_string() + &body));
    let (out, dir) = run_in(tmp.path(), "verify", &products, "out", &[]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(std::fs::read_to_string(dir.join("findings.jsonl")).unwrap(), "");
    assert!(summary_counts(&dir.join("summary.csv")).values().all(|&c| c == 0));
}

#[test]
fn verify_single_missing_kj_exits_one() {
    let tmp = tempfile::tempdir().unwrap();
    let row = TEN_PRODUCTS.lines().nth(1).unwrap();
    let products = write(tmp.path(), "p.csv", &format!("{HEADER}{row}\n"));
    let (out, dir) = run_in(tmp.path(), "verify", &products, "out", &[]);
    assert_eq!(out.status.code(), Some(1));
    let counts = summary_counts(&dir.join("summary.csv"));
    assert_eq!(counts["MV_KJ"], 1);
    assert_eq!(counts.values().sum::<u64>(), 1);
}

#[test]
fn verify_unreadable_input_exits_two() {
    let tmp = tempfile::tempdir().unwrap();
    let (out, _) = run_in(tmp.path(), "verify", &tmp.path().join("missing.csv"), "out", &[]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("error:"));

    let bad_mapping = write(tmp.path(), "bad.json", "{\"GTIN\": \"nutrients.nonsense\"}");
    let products = write(tmp.path(), "p.csv", &format!("{HEADER}{TEN_PRODUCTS}"));
    let out = ficcheck(&[
        "verify",
        "--products",
        s(&products),
        "--mapping",
        s(&bad_mapping),
        "--out-dir",
        s(&tmp.path().join("o2")),
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn verify_ten_products_golden() {
    let tmp = tempfile::tempdir().unwrap();
    let products = write(tmp.path(), "p.csv", &format!("{HEADER}{TEN_PRODUCTS}"));
    let (out, a) = run_in(tmp.path(), "verify", &products, "a", &[]);
    assert_eq!(out.status.code(), Some(1));
    let counts = summary_counts(&a.join("summary.csv"));
    let want: BTreeMap<String, u64> = [
        ("MV_KJ", 1),
        ("MV_KC", 1),
        ("CE_EN", 1),
        ("SE_EN", 2),
        ("VE_FA", 1),
        ("VE_SU", 1),
        ("VE_IN", 1),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_string(), v))
    .collect();
    assert_eq!(counts, want);

    let findings = jsonl(&a.join("findings.jsonl"));
    let per: Vec<(String, String)> = findings
        .iter()
        .map(|f| (f["gtin"].as_str().unwrap().to_string(), f["error_id"].as_str().unwrap().to_string()))
        .collect();
    let want: Vec<(&str, &str)> = vec![
        ("2", "MV_KJ"),
        ("3", "MV_KC"),
        ("4", "CE_EN"),
        ("5", "SE_EN"),
        ("6", "VE_FA"),
        ("7", "VE_SU"),
        ("8", "VE_IN"),
        ("9", "SE_EN"),
        ("9", "SE_EN"),
    ];
    let want: Vec<(String, String)> = want.into_iter().map(|(g, e)| (g.into(), e.into())).collect();
    assert_eq!(per, want);

    // second run is byte-identical apart from the manifest
    let (_, b) = run_in(tmp.path(), "verify", &products, "b", &[]);
    for f in common::list_files(&a) {
        if f.as_os_str() != "run_manifest.json" {
            assert_eq!(std::fs::read(a.join(&f)).unwrap(), std::fs::read(b.join(&f)).unwrap(), "{}", f.display());
        }
    }
    let manifest = read_json(&a.join("run_manifest.json"));
    assert_eq!(manifest["command"], "verify");
    assert!(manifest["outputs"]["findings.jsonl"].is_string());
    assert!(manifest["inputs"].to_string().contains("products"));
}

#[test]
fn verify_respects_rules_config() {
    let tmp = tempfile::tempdir().unwrap();
    let row = TEN_PRODUCTS.lines().nth(4).unwrap();
    let products = write(tmp.path(), "p.csv", &format!("{HEADER}{row}\n"));
    let loose = write(tmp.path(), "rules.json", "{\"energy_sum_rel_tol\": 0.5}");
    let (out, _) = run_in(tmp.path(), "verify", &products, "out", &["--rules-config", s(&loose)]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn stats_counts_positive_values_and_blank_density() {
    let tmp = tempfile::tempdir().unwrap();
    let body = "\
1,a,water,,100,24,0,,1,,,,
2,b,water,,,10,2,,0,,,,
3,c,water,,,,,,,,,,
";
    let products = write(tmp.path(), "p.csv", &format!("{HEADER}{body}"));
    let (out, dir) = run_in(tmp.path(), "stats", &products, "out", &[]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let dist = std::fs::read_to_string(dir.join("nutrient_distribution.csv")).unwrap();
    assert!(dist.starts_with("value,products\nENER_KJ,1\nENER_KC,2\n"), "{dist}");
    assert!(dist.contains("\nFAT,1\n") && dist.contains("\nCH,1\n"), "{dist}");
    let ls = std::fs::read_to_string(dir.join("label_stats.csv")).unwrap();
    assert!(ls.contains("products,3\n") && ls.contains("label_density,\n"), "{ls}");
    let manifest = read_json(&dir.join("run_manifest.json"));
    assert!(manifest["notes"].to_string().contains("undefined"));
}

#[test]
fn stats_allergen_tables() {
    let tmp = tempfile::tempdir().unwrap();
    let items = vec![
        ("tokmilk".to_string(), LabelSet::empty().with(Allergen::Milk)),
        ("tokmilk tokeggs".to_string(), LabelSet::empty().with(Allergen::Milk).with(Allergen::Eggs)),
    ];
    let products = tmp.path().join("p.csv");
    common::write_products_csv(&products, &items);
    let (out, dir) = run_in(tmp.path(), "stats", &products, "out", &[]);
    assert_eq!(out.status.code(), Some(0));
    let ls = std::fs::read_to_string(dir.join("label_stats.csv")).unwrap();
    assert!(ls.contains("label_cardinality,1.500000\n") && ls.contains("label_density,0.750000\n"), "{ls}");
    let dist = std::fs::read_to_string(dir.join("allergen_distribution.csv")).unwrap();
    assert!(dist.contains("Milk,2\n") && dist.contains("Eggs,1\n"));
    assert!(dir.join("allergen_cooccurrence_relative.csv").exists());
}

#[test]
fn train_rejects_too_few_rows() {
    let tmp = tempfile::tempdir().unwrap();
    let products = tmp.path().join("p.csv");
    common::write_products_csv(&products, &common::marker_corpus(20, 1));
    let (out, _) = run_in(tmp.path(), "train", &products, "out", &[]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("50"));
}

#[test]
fn general_mode_train_and_predict() {
    let tmp = tempfile::tempdir().unwrap();
    let products = tmp.path().join("p.csv");
    common::write_products_csv(&products, &common::marker_corpus(200, 2));
    let (out, dir) = run_in(tmp.path(), "train", &products, "g", &["--mode", "general", "--epochs", "10"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    for f in ["split.csv", "metrics/appendix_general.csv", "metrics/summary.csv", "model/general.json"] {
        assert!(dir.join(f).exists(), "{f}");
    }
    let manifest = read_json(&dir.join("run_manifest.json"));
    assert_eq!(manifest["seeds"]["general"], serde_json::json!([42]));

    let model = dir.join("model");
    let (out, pdir) = run_in(tmp.path(), "predict", &products, "pg", &["--model", s(&model)]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let preds = jsonl(&pdir.join("predictions.jsonl"));
    assert_eq!(preds.len(), 200);
    let p = preds[0]["probability"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&p));
    assert_eq!(preds[0]["contains_allergens"].as_bool().unwrap(), p >= 0.5);
}

#[test]
fn specific_binary_relevance_records_fourteen_seeds() {
    let tmp = tempfile::tempdir().unwrap();
    let products = tmp.path().join("p.csv");
    common::write_products_csv(&products, &common::marker_corpus(150, 3));
    let (out, dir) = run_in(tmp.path(), "train", &products, "s", &["--arch", "logistic", "--seed", "7", "--epochs", "5"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let manifest = read_json(&dir.join("run_manifest.json"));
    let seeds: Vec<u64> =
        manifest["seeds"]["binary_relevance"].as_array().unwrap().iter().map(|v| v.as_u64().unwrap()).collect();
    assert_eq!(seeds, (7..21).collect::<Vec<_>>());
    assert_eq!(manifest["seeds"]["split"], serde_json::json!([7]));
    let outputs = manifest["outputs"].as_object().unwrap();
    assert!(outputs.keys().any(|k| k.starts_with("model/")));
    let summary = std::fs::read_to_string(dir.join("metrics/summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 1 + 14 + 1);
    assert!(summary.lines().last().unwrap().starts_with("All,"));
}

#[test]
fn predict_unions_dictionary_hits() {
    let tmp = tempfile::tempdir().unwrap();
    let products = tmp.path().join("p.csv");
    common::write_products_csv(&products, &common::marker_corpus(200, 4));
    let (out, dir) = run_in(tmp.path(), "train", &products, "m", &["--arch", "logistic", "--epochs", "30"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));

    let dict = write(tmp.path(), "dict.json", "{\"tokmilk\": [\"Milk\"], \"zanthe\": [\"Fish\"]}");
    let query = write(
        tmp.path(),
        "q.csv",
        &format!("{HEADER}1,q1,\"tokmilk, water\",,,,,,,,,,\n2,q2,\"zanthe, water\",,,,,,,,,,\n3,q3,,,,,,,,,,,\n"),
    );
    let model = dir.join("model");
    let (out, pdir) = run_in(tmp.path(), "predict", &query, "p", &["--model", s(&model), "--dict", s(&dict)]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let preds = jsonl(&pdir.join("predictions.jsonl"));
    assert_eq!(preds.len(), 2, "product without ingredients is skipped");
    let labels = |i: usize| -> Vec<(String, String)> {
        preds[i]["labels"]
            .as_array()
            .unwrap()
            .iter()
            .map(|l| (l["allergen"].as_str().unwrap().into(), l["source"].as_str().unwrap().into()))
            .collect()
    };
    assert!(labels(0).contains(&("Milk".into(), "model+dict".into())), "{:?}", labels(0));
    // the model may flag Fish on an unknown word too; the dictionary must be credited either way
    let fish = labels(1).into_iter().find(|(a, _)| a == "Fish").expect("dictionary hit kept");
    assert!(fish.1.ends_with("dict"), "{fish:?}");
    assert_eq!(preds[0]["probabilities"].as_object().unwrap().len(), 14);
    let manifest = read_json(&pdir.join("run_manifest.json"));
    assert!(manifest["notes"].to_string().contains("skipped"));
}

#[test]
fn predict_rejects_mismatched_bundle() {
    let tmp = tempfile::tempdir().unwrap();
    let pa = tmp.path().join("a.csv");
    let pb = tmp.path().join("b.csv");
    common::write_products_csv(&pa, &common::marker_corpus(100, 5));
    let mut other = common::marker_corpus(100, 6);
    for (t, _) in &mut other {
        t.push_str(", extraword");
    }
    common::write_products_csv(&pb, &other);
    let flags = ["--arch", "logistic", "--epochs", "2", "--min-rows", "10"];
    let (oa, a) = run_in(tmp.path(), "train", &pa, "a", &flags);
    let (ob, b) = run_in(tmp.path(), "train", &pb, "b", &flags);
    assert_eq!(oa.status.code(), Some(0));
    assert_eq!(ob.status.code(), Some(0));

    // vocabulary swapped under the pipeline
    let broken = tmp.path().join("broken1");
    copy_dir(&a.join("model"), &broken);
    std::fs::copy(b.join("model/vocabulary.json"), broken.join("vocabulary.json")).unwrap();
    let (out, _) = run_in(tmp.path(), "predict", &pa, "p1", &["--model", s(&broken)]);
    assert_eq!(out.status.code(), Some(2));

    // consistent pipeline, models trained on another vocabulary
    let broken = tmp.path().join("broken2");
    copy_dir(&a.join("model"), &broken);
    for f in ["pipeline.json", "vocabulary.json"] {
        std::fs::copy(b.join("model").join(f), broken.join(f)).unwrap();
    }
    let (out, _) = run_in(tmp.path(), "predict", &pa, "p2", &["--model", s(&broken)]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("fingerprint"), "{err}");
}

fn copy_dir(from: &Path, to: &Path) {
    std::fs::create_dir_all(to).unwrap();
    for f in common::list_files(from) {
        std::fs::copy(from.join(&f), to.join(&f)).unwrap();
    }
}

#[test]
fn hybrid_recall_not_below_model_recall() {
    let tmp = tempfile::tempdir().unwrap();
    let products = tmp.path().join("p.csv");
    let items = common::marker_corpus(150, 9);
    common::write_products_csv(&products, &items);
    // a barely trained model leaves room for the dictionary to add hits
    let (out, dir) = run_in(tmp.path(), "train", &products, "m", &["--arch", "logistic", "--epochs", "1"]);
    assert_eq!(out.status.code(), Some(0));
    let entries: Vec<String> =
        Allergen::ALL.iter().map(|a| format!("\"{}\": [\"{}\"]", common::marker(*a), a.name())).collect();
    let dict = write(tmp.path(), "dict.json", &format!("{{{}}}", entries.join(", ")));
    let (out, pdir) =
        run_in(tmp.path(), "predict", &products, "p", &["--model", s(&dir.join("model")), "--dict", s(&dict)]);
    assert_eq!(out.status.code(), Some(0));
    let preds = jsonl(&pdir.join("predictions.jsonl"));
    let (mut positives, mut by_model, mut by_hybrid) = (0, 0, 0);
    for (p, (_, truth)) in preds.iter().zip(&items) {
        for l in p["labels"].as_array().unwrap() {
            let a: Allergen = l["allergen"].as_str().unwrap().parse().unwrap();
            if truth.contains(a) {
                by_hybrid += 1;
                if l["source"].as_str().unwrap().starts_with("model") {
                    by_model += 1;
                }
            }
        }
        positives += truth.len();
    }
    assert!(by_hybrid >= by_model);
    assert_eq!(by_hybrid, positives, "the dictionary finds every marker");
}
