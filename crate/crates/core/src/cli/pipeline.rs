//! Text featurization shared by `train` and `predict`, the held-out split
//! and the on-disk model bundle.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use clap::ValueEnum;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{ArchKind, Mode, Strategy, TextKind};
use crate::learners::BinaryModel;
use crate::multilabel::MultilabelModel;
use crate::text::{
    build_vocabulary, extract_capitalized, normalize_ingredients, vectorize_bow, vectorize_tfidf, IdfTable,
    SparseVector, Vocabulary,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum TextSource {
    /// Every word of the ingredient list
    #[value(name = "full_list")]
    FullList,
    /// Only ingredients written in capitals
    #[value(name = "caps_only")]
    CapsOnly,
}

impl TextSource {
    pub fn tokens(self, raw: &str) -> Vec<String> {
        match self {
            TextSource::FullList => normalize_ingredients(raw),
            TextSource::CapsOnly => extract_capitalized(raw),
        }
    }
}

const PIPELINE_FORMAT: &str = "ficcheck-pipeline";
const PIPELINE_VERSION: u32 = 1;
pub const PIPELINE_FILE: &str = "pipeline.json";
pub const VOCABULARY_FILE: &str = "vocabulary.json";
pub const IDF_FILE: &str = "idf.json";
pub const GENERAL_MODEL_FILE: &str = "general.json";

/// How documents were turned into vectors for a bundle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub format: String,
    pub version: u32,
    pub mode: Mode,
    pub strategy: Strategy,
    pub text: TextKind,
    pub source: TextSource,
    pub min_df: f64,
    pub arch: ArchKind,
    pub seed: u64,
    pub vocabulary_fingerprint: String,
}

pub struct TextPipeline {
    pub config: PipelineConfig,
    pub vocabulary: Vocabulary,
    pub idf: Option<IdfTable>,
}

impl TextPipeline {
    /// Fits the vocabulary (and idf table) on the training documents.
    pub fn fit(config: PipelineConfig, train_docs: &[&str]) -> Result<TextPipeline> {
        let corpus: Vec<Vec<String>> = train_docs.iter().map(|d| config.source.tokens(d)).collect();
        let vocabulary = build_vocabulary(&corpus, config.min_df)?;
        if vocabulary.is_empty() {
            bail!("vocabulary is empty at min_df {}", config.min_df);
        }
        let idf = (config.text == TextKind::Tfidf).then(|| IdfTable::from_vocabulary(&vocabulary));
        let config = PipelineConfig { vocabulary_fingerprint: vocabulary.fingerprint(), ..config };
        Ok(TextPipeline { config, vocabulary, idf })
    }

    pub fn new_config(
        mode: Mode,
        strategy: Strategy,
        text: TextKind,
        source: TextSource,
        min_df: f64,
        arch: ArchKind,
        seed: u64,
    ) -> PipelineConfig {
        PipelineConfig {
            format: PIPELINE_FORMAT.into(),
            version: PIPELINE_VERSION,
            mode,
            strategy,
            text,
            source,
            min_df,
            arch,
            seed,
            vocabulary_fingerprint: String::new(),
        }
    }

    pub fn vectorize(&self, raw: &str) -> Result<SparseVector> {
        let tokens = self.config.source.tokens(raw);
        Ok(match &self.idf {
            None => vectorize_bow(&tokens, &self.vocabulary),
            Some(idf) => vectorize_tfidf(&tokens, &self.vocabulary, idf)?,
        })
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        fs::write(dir.join(PIPELINE_FILE), serde_json::to_string_pretty(&self.config)? + "\n")?;
        fs::write(dir.join(VOCABULARY_FILE), self.vocabulary.to_json()? + "\n")?;
        if let Some(idf) = &self.idf {
            fs::write(dir.join(IDF_FILE), serde_json::to_string(idf)? + "\n")?;
        }
        Ok(())
    }

    /// Loads and cross-checks the pipeline files of a bundle.
    pub fn load(dir: &Path) -> Result<TextPipeline> {
        let read = |name: &str| {
            let p = dir.join(name);
            fs::read_to_string(&p).with_context(|| format!("reading {}", p.display()))
        };
        let config: PipelineConfig = serde_json::from_str(&read(PIPELINE_FILE)?)?;
        if config.format != PIPELINE_FORMAT || config.version != PIPELINE_VERSION {
            bail!("unsupported pipeline {} v{}", config.format, config.version);
        }
        let vocabulary = Vocabulary::from_json(&read(VOCABULARY_FILE)?)?;
        let fp = vocabulary.fingerprint();
        if fp != config.vocabulary_fingerprint {
            bail!(
                "vocabulary fingerprint {fp} does not match the pipeline ({})",
                config.vocabulary_fingerprint
            );
        }
        let idf = match config.text {
            TextKind::Bow => None,
            TextKind::Tfidf => {
                let t: IdfTable = serde_json::from_str(&read(IDF_FILE)?)?;
                if t.vocabulary_fingerprint() != fp {
                    bail!("idf table belongs to vocabulary {}", t.vocabulary_fingerprint());
                }
                Some(t)
            }
        };
        Ok(TextPipeline { config, vocabulary, idf })
    }
}

/// Trained predictor of a bundle.
pub enum BundleModel {
    General(BinaryModel),
    Multi(MultilabelModel),
}

impl BundleModel {
    pub fn save(&self, dir: &Path) -> Result<()> {
        match self {
            BundleModel::General(m) => m.save(&dir.join(GENERAL_MODEL_FILE))?,
            BundleModel::Multi(m) => m.save(dir)?,
        }
        Ok(())
    }

    pub fn load(dir: &Path, pipeline: &PipelineConfig) -> Result<BundleModel> {
        let fp = Some(pipeline.vocabulary_fingerprint.as_str());
        Ok(match pipeline.mode {
            Mode::General => BundleModel::General(
                BinaryModel::load(&dir.join(GENERAL_MODEL_FILE), fp).context("loading general model")?,
            ),
            Mode::Specific => BundleModel::Multi(MultilabelModel::load(dir, fp).context("loading model bundle")?),
        })
    }
}

/// Marks roughly `test_fraction` of the items as test (`true`), spread
/// proportionally over the groups of equal key.
///
/// Each group is shuffled with the seeded generator; the groups are then
/// concatenated in key order and every position where the running test
/// quota crosses an integer is taken.
pub fn stratified_split<K: Ord + Clone>(keys: &[K], test_fraction: f64, seed: u64) -> Vec<bool> {
    let mut groups: BTreeMap<K, Vec<usize>> = BTreeMap::new();
    for (i, k) in keys.iter().enumerate() {
        groups.entry(k.clone()).or_default().push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sequence = Vec::with_capacity(keys.len());
    for (_, mut members) in groups {
        members.shuffle(&mut rng);
        sequence.extend(members);
    }
    let mut test = vec![false; keys.len()];
    for (pos, &i) in sequence.iter().enumerate() {
        let before = (pos as f64 * test_fraction).floor();
        let after = ((pos + 1) as f64 * test_fraction).floor();
        test[i] = after > before;
    }
    test
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn split_fraction_and_determinism() {
        let keys: Vec<u8> = (0..100).map(|i| (i % 3) as u8).collect();
        let a = stratified_split(&keys, 0.2, 5);
        assert_eq!(a.iter().filter(|&&t| t).count(), 20);
        assert_eq!(a, stratified_split(&keys, 0.2, 5));
        assert_ne!(a, stratified_split(&keys, 0.2, 6));
        // each group is represented in proportion
        for g in 0..3u8 {
            let n = keys.iter().zip(&a).filter(|(k, t)| **k == g && **t).count();
            assert!((6..=7).contains(&n), "group {g}: {n}");
        }
    }

    #[test]
    fn caps_only_source() {
        assert_eq!(TextSource::CapsOnly.tokens("Sugar, MILK powder, WHEAT"), vec!["milk", "wheat"]);
        assert_eq!(TextSource::FullList.tokens("Sugar, MILK"), vec!["sugar", "milk"]);
    }
}
