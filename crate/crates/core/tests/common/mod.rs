#![allow(dead_code)]

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use ficcheck::model::{Allergen, LabelSet};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const FILLER: [&str; 24] = [
    "sugar", "water", "salt", "starch", "oil", "vinegar", "pepper", "yeast", "cocoa", "rice", "maize", "potato",
    "tomato", "onion", "garlic", "apple", "lemon", "honey", "malt", "paprika", "carrot", "spinach", "thyme",
    "basil",
];

pub const MAPPING_JSON: &str = r#"{
  "GTIN": "gtin",
  "NAME": "name",
  "INGREDIENTS": "ingredients",
  "ALLERGENS": "allergens",
  "ENER_KJ": "nutrients.energy_kj",
  "ENER_KC": "nutrients.energy_kcal",
  "FAT": "nutrients.FAT",
  "SFA": "nutrients.SFA",
  "CH": "nutrients.CH",
  "SUG": "nutrients.SUG",
  "PRO": "nutrients.PRO",
  "SAL": "nutrients.SAL",
  "FIB": "nutrients.FIB",
  "BASIS": "nutrients.basis"
}
"#;

/// Letters-only token that marks an allergen, e.g. `tokmilk`.
pub fn marker(a: Allergen) -> String {
    format!("tok{}", a.name().to_lowercase())
}

/// Products whose allergens are each implied by their marker token, with
/// per-allergen prevalence between 5 % and 35 %.
pub fn marker_corpus(n: usize, seed: u64) -> Vec<(String, LabelSet)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let mut labels = LabelSet::empty();
            let mut words: Vec<String> = Vec::new();
            for a in Allergen::ALL {
                let p = 0.05 + 0.3 * ((a.index() * 5) % 14) as f64 / 13.0;
                if rng.gen_bool(p) {
                    labels.insert(a);
                    words.push(marker(a));
                }
            }
            for _ in 0..rng.gen_range(2..6) {
                words.push(FILLER[rng.gen_range(0..FILLER.len())].to_string());
            }
            // order of words does not matter for BOW, but keep it varied
            for i in (1..words.len()).rev() {
                let j = rng.gen_range(0..=i);
                words.swap(i, j);
            }
            (words.join(", "), labels)
        })
        .collect()
}

/// Writes a product CSV for `items` with GTINs 1000.. and simple nutrients.
pub fn write_products_csv(path: &Path, items: &[(String, LabelSet)]) {
    let mut s = String::from("GTIN,NAME,INGREDIENTS,ALLERGENS,ENER_KJ,ENER_KC,FAT,CH,PRO\n");
    for (i, (text, labels)) in items.iter().enumerate() {
        let names: Vec<&str> = labels.iter().map(Allergen::name).collect();
        writeln!(
            s,
            "{},Product {i},\"{}\",{},382,91,3,10,5",
            1000 + i,
            text,
            names.join("|")
        )
        .unwrap();
    }
    std::fs::write(path, s).unwrap();
}

pub fn write_mapping(dir: &Path) -> PathBuf {
    let p = dir.join("mapping.json");
    std::fs::write(&p, MAPPING_JSON).unwrap();
    p
}

pub fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_ficcheck")
}

/// All files below `root`, relative paths in sorted order.
pub fn list_files(root: &Path) -> Vec<PathBuf> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let e = e.unwrap();
            if e.file_type().unwrap().is_dir() {
                stack.push(e.path());
            } else {
                out.push(e.path().strip_prefix(root).unwrap().to_path_buf());
            }
        }
    }
    out.sort();
    out
}
