//! Ingredient-list text processing: tokenization, vocabularies, sparse
//! BOW / TF-IDF vectors and the signal-word allergen dictionary.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::model::{Allergen, LabelSet};

#[derive(Debug, Error)]
pub enum TextError {
    #[error("cannot build a vocabulary from an empty corpus")]
    EmptyCorpus,
    #[error("min_df must lie in (0, 1), got {0}")]
    MinDf(f64),
    #[error("idf table was fitted for vocabulary {expected}, not {found}")]
    StatsMismatch { expected: String, found: String },
    #[error("dictionary entry `{token}` names unknown allergen `{allergen}`")]
    DictionaryAllergen { token: String, allergen: String },
    #[error("vocabulary file is inconsistent: {0}")]
    CorruptVocabulary(String),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Lower-cases the text and splits it on every non-letter character, so
/// punctuation and digits act as separators.
pub fn normalize_ingredients(raw: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    let mut current = String::new();
    for c in raw.chars() {
        if c.is_alphabetic() {
            current.extend(c.to_lowercase());
        } else if !current.is_empty() {
            tokens.push(std::mem::take(&mut current));
        }
    }
    if !current.is_empty() {
        tokens.push(current);
    }
    tokens
}

/// Maximal runs of at least two upper-case letters, lower-cased. Allergenic
/// ingredients are often written in capitals; a single leading capital is
/// not a run.
pub fn extract_capitalized(raw: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut run = String::new();
    let mut run_len = 0;
    let mut flush = |run: &mut String, run_len: &mut usize| {
        if *run_len >= 2 {
            out.push(run.to_lowercase());
        }
        run.clear();
        *run_len = 0;
    };
    for c in raw.chars() {
        if c.is_uppercase() {
            run.push(c);
            run_len += 1;
        } else {
            flush(&mut run, &mut run_len);
        }
    }
    flush(&mut run, &mut run_len);
    out
}

/// Tokens kept after document-frequency thresholding, ordered by
/// descending document frequency and then lexicographically.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Vocabulary {
    tokens: Vec<String>,
    doc_freq: Vec<u64>,
    min_df: f64,
    document_count: u64,
    #[serde(skip)]
    index: HashMap<String, usize>,
}

fn min_doc_count(min_df: f64, n: usize) -> u64 {
    // Tolerate representation error such as 0.1 * 30 = 3.0000000000000004.
    ((min_df * n as f64 - 1e-9).ceil() as u64).max(1)
}

pub fn build_vocabulary(corpus: &[Vec<String>], min_df: f64) -> Result<Vocabulary, TextError> {
    if corpus.is_empty() {
        return Err(TextError::EmptyCorpus);
    }
    if !(min_df > 0.0 && min_df < 1.0) {
        return Err(TextError::MinDf(min_df));
    }
    let mut df: HashMap<&str, u64> = HashMap::new();
    for doc in corpus {
        let unique: HashSet<&str> = doc.iter().map(String::as_str).collect();
        for t in unique {
            *df.entry(t).or_insert(0) += 1;
        }
    }
    let need = min_doc_count(min_df, corpus.len());
    let mut kept: Vec<(&str, u64)> = df.into_iter().filter(|&(_, c)| c >= need).collect();
    kept.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    let (tokens, doc_freq) = kept.into_iter().map(|(t, c)| (t.to_string(), c)).unzip();
    Ok(Vocabulary::from_parts(tokens, doc_freq, min_df, corpus.len() as u64))
}

impl Vocabulary {
    fn from_parts(tokens: Vec<String>, doc_freq: Vec<u64>, min_df: f64, document_count: u64) -> Self {
        let index = tokens.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        Vocabulary { tokens, doc_freq, min_df, document_count, index }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn index_of(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn contains(&self, token: &str) -> bool {
        self.index.contains_key(token)
    }

    pub fn doc_freq(&self, index: usize) -> u64 {
        self.doc_freq[index]
    }

    pub fn min_df(&self) -> f64 {
        self.min_df
    }

    pub fn document_count(&self) -> u64 {
        self.document_count
    }

    /// Hex SHA-256 over tokens, frequencies and build parameters. Models
    /// record it so they are never paired with a different vocabulary.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.min_df.to_le_bytes());
        h.update(self.document_count.to_le_bytes());
        for (t, c) in self.tokens.iter().zip(&self.doc_freq) {
            h.update((t.len() as u64).to_le_bytes());
            h.update(t.as_bytes());
            h.update(c.to_le_bytes());
        }
        hex::encode(h.finalize())
    }

    pub fn to_json(&self) -> Result<String, TextError> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Vocabulary, TextError> {
        let raw: Vocabulary = serde_json::from_str(text)?;
        if raw.tokens.len() != raw.doc_freq.len() {
            return Err(TextError::CorruptVocabulary("tokens and doc_freq differ in length".into()));
        }
        let v = Vocabulary::from_parts(raw.tokens, raw.doc_freq, raw.min_df, raw.document_count);
        if v.index.len() != v.tokens.len() {
            return Err(TextError::CorruptVocabulary("duplicate tokens".into()));
        }
        Ok(v)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VectorMode {
    Bow,
    Tfidf,
}

impl VectorMode {
    pub fn label(self) -> &'static str {
        match self {
            VectorMode::Bow => "BOW",
            VectorMode::Tfidf => "TF-IDF",
        }
    }
}

/// Document vector as sorted `(index, weight)` pairs over `dim` features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparseVector {
    dim: usize,
    entries: Vec<(u32, f64)>,
    mode: VectorMode,
}

impl SparseVector {
    /// Builds a vector from arbitrary `(index, weight)` pairs. Duplicate
    /// indices are summed and zero weights dropped.
    pub fn from_pairs(dim: usize, pairs: impl IntoIterator<Item = (usize, f64)>, mode: VectorMode) -> Self {
        let mut acc: BTreeMap<usize, f64> = BTreeMap::new();
        for (i, w) in pairs {
            assert!(i < dim, "index {i} out of bounds for dimension {dim}");
            *acc.entry(i).or_insert(0.0) += w;
        }
        let entries = acc
            .into_iter()
            .filter(|&(_, w)| w != 0.0)
            .map(|(i, w)| (i as u32, w))
            .collect();
        SparseVector { dim, entries, mode }
    }

    pub fn zeros(dim: usize, mode: VectorMode) -> Self {
        SparseVector { dim, entries: Vec::new(), mode }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn mode(&self) -> VectorMode {
        self.mode
    }

    pub fn entries(&self) -> &[(u32, f64)] {
        &self.entries
    }

    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    pub fn get(&self, index: usize) -> f64 {
        self.entries
            .binary_search_by_key(&(index as u32), |e| e.0)
            .map(|k| self.entries[k].1)
            .unwrap_or(0.0)
    }

    pub fn norm(&self) -> f64 {
        self.entries.iter().map(|(_, w)| w * w).sum::<f64>().sqrt()
    }

    pub fn to_dense(&self) -> Vec<f64> {
        let mut d = vec![0.0; self.dim];
        for &(i, w) in &self.entries {
            d[i as usize] = w;
        }
        d
    }

    /// Appends one 0/1 feature per bit after the existing dimensions.
    pub fn augmented(&self, bits: &[bool]) -> SparseVector {
        let mut entries = self.entries.clone();
        for (k, &b) in bits.iter().enumerate() {
            if b {
                entries.push(((self.dim + k) as u32, 1.0));
            }
        }
        SparseVector { dim: self.dim + bits.len(), entries, mode: self.mode }
    }
}

fn term_counts(doc: &[String], v: &Vocabulary) -> BTreeMap<usize, u64> {
    let mut counts = BTreeMap::new();
    for t in doc {
        if let Some(i) = v.index_of(t) {
            *counts.entry(i).or_insert(0) += 1;
        }
    }
    counts
}

/// Raw term counts; out-of-vocabulary tokens are ignored.
pub fn vectorize_bow(doc: &[String], v: &Vocabulary) -> SparseVector {
    let counts = term_counts(doc, v);
    SparseVector {
        dim: v.len(),
        entries: counts.into_iter().map(|(i, c)| (i as u32, c as f64)).collect(),
        mode: VectorMode::Bow,
    }
}

/// Smoothed inverse document frequencies, `ln((1 + N) / (1 + df)) + 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdfTable {
    vocabulary_fingerprint: String,
    idf: Vec<f64>,
}

impl IdfTable {
    /// Uses the document frequencies recorded when the vocabulary was built.
    pub fn from_vocabulary(v: &Vocabulary) -> IdfTable {
        let n = v.document_count() as f64;
        let idf = (0..v.len())
            .map(|i| ((1.0 + n) / (1.0 + v.doc_freq(i) as f64)).ln() + 1.0)
            .collect();
        IdfTable { vocabulary_fingerprint: v.fingerprint(), idf }
    }

    pub fn idf(&self, index: usize) -> f64 {
        self.idf[index]
    }

    pub fn vocabulary_fingerprint(&self) -> &str {
        &self.vocabulary_fingerprint
    }
}

/// Term count times idf, scaled to unit Euclidean norm.
pub fn vectorize_tfidf(doc: &[String], v: &Vocabulary, stats: &IdfTable) -> Result<SparseVector, TextError> {
    let fp = v.fingerprint();
    if stats.vocabulary_fingerprint != fp || stats.idf.len() != v.len() {
        return Err(TextError::StatsMismatch {
            expected: stats.vocabulary_fingerprint.clone(),
            found: fp,
        });
    }
    let mut entries: Vec<(u32, f64)> = term_counts(doc, v)
        .into_iter()
        .map(|(i, c)| (i as u32, c as f64 * stats.idf[i]))
        .collect();
    let norm = entries.iter().map(|(_, w)| w * w).sum::<f64>().sqrt();
    if norm > 0.0 {
        for e in &mut entries {
            e.1 /= norm;
        }
    }
    Ok(SparseVector { dim: v.len(), entries, mode: VectorMode::Tfidf })
}

/// Signal words that point at allergens regardless of the model.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SignalDictionary {
    entries: BTreeMap<String, LabelSet>,
}

const DEFAULT_SIGNALS: &[(&str, Allergen)] = &[
    ("wheat", Allergen::Gluten),
    ("weizen", Allergen::Gluten),
    ("barley", Allergen::Gluten),
    ("gerste", Allergen::Gluten),
    ("rye", Allergen::Gluten),
    ("roggen", Allergen::Gluten),
    ("oats", Allergen::Gluten),
    ("spelt", Allergen::Gluten),
    ("dinkel", Allergen::Gluten),
    ("gluten", Allergen::Gluten),
    ("shrimp", Allergen::Crustaceans),
    ("prawn", Allergen::Crustaceans),
    ("crab", Allergen::Crustaceans),
    ("lobster", Allergen::Crustaceans),
    ("egg", Allergen::Eggs),
    ("eggs", Allergen::Eggs),
    ("ei", Allergen::Eggs),
    ("fish", Allergen::Fish),
    ("salmon", Allergen::Fish),
    ("tuna", Allergen::Fish),
    ("cod", Allergen::Fish),
    ("anchovy", Allergen::Fish),
    ("peanut", Allergen::Peanuts),
    ("peanuts", Allergen::Peanuts),
    ("soy", Allergen::Soybeans),
    ("soya", Allergen::Soybeans),
    ("milk", Allergen::Milk),
    ("milch", Allergen::Milk),
    ("whey", Allergen::Milk),
    ("butter", Allergen::Milk),
    ("cream", Allergen::Milk),
    ("cheese", Allergen::Milk),
    ("lactose", Allergen::Milk),
    ("almond", Allergen::Nuts),
    ("hazelnut", Allergen::Nuts),
    ("walnut", Allergen::Nuts),
    ("cashew", Allergen::Nuts),
    ("pistachio", Allergen::Nuts),
    ("celery", Allergen::Celery),
    ("sellerie", Allergen::Celery),
    ("mustard", Allergen::Mustard),
    ("senf", Allergen::Mustard),
    ("sesame", Allergen::Sesame),
    ("sesam", Allergen::Sesame),
    ("sulphite", Allergen::Sulphur),
    ("sulfite", Allergen::Sulphur),
    ("lupin", Allergen::Lupine),
    ("lupine", Allergen::Lupine),
    ("mussel", Allergen::Molluscs),
    ("squid", Allergen::Molluscs),
    ("oyster", Allergen::Molluscs),
    ("snail", Allergen::Molluscs),
];

impl SignalDictionary {
    /// Small built-in dictionary with obvious signal words per allergen.
    pub fn builtin() -> SignalDictionary {
        let mut d = SignalDictionary::default();
        for &(token, a) in DEFAULT_SIGNALS {
            d.add(token, a);
        }
        d
    }

    pub fn add(&mut self, token: &str, allergen: Allergen) {
        self.entries.entry(token.to_lowercase()).or_default().insert(allergen);
    }

    /// Parses `{"token": ["Milk", "Fish"], ...}`.
    pub fn from_json(text: &str) -> Result<SignalDictionary, TextError> {
        let raw: BTreeMap<String, Vec<String>> = serde_json::from_str(text)?;
        let mut d = SignalDictionary::default();
        for (token, names) in raw {
            for name in names {
                let a = name.parse::<Allergen>().map_err(|_| TextError::DictionaryAllergen {
                    token: token.clone(),
                    allergen: name.clone(),
                })?;
                d.add(&token, a);
            }
        }
        Ok(d)
    }

    pub fn load(path: &Path) -> Result<SignalDictionary, TextError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    /// Extends this dictionary with all entries of `other`.
    pub fn merge(&mut self, other: &SignalDictionary) {
        for (t, set) in &other.entries {
            let slot = self.entries.entry(t.clone()).or_default();
            *slot = slot.union(*set);
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn lookup(&self, token: &str) -> LabelSet {
        self.entries.get(token).copied().unwrap_or_default()
    }
}

/// Union of the allergen sets of all matching tokens.
pub fn dictionary_scan(doc: &[String], dict: &SignalDictionary) -> LabelSet {
    doc.iter().fold(LabelSet::empty(), |acc, t| acc.union(dict.lookup(t)))
}
