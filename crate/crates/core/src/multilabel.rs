//! Multi-label allergen predictors built from binary models: binary
//! relevance (one independent model per allergen) and classifier chains.
//!
//! A chain position `i` sees the document features plus one 0/1 feature per
//! earlier position. Training feeds the true earlier labels, inference the
//! thresholded earlier predictions.

use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::learners::{predict_proba, train, Architecture, BinaryModel, LearnError, TrainConfig};
use crate::metrics::{evaluate_multilabel, AlphaParams, MultilabelEvaluation};
use crate::model::{Allergen, LabelSet, ALLERGEN_COUNT};
use crate::text::SparseVector;

pub const DEFAULT_THRESHOLD: f64 = 0.5;

/// Chain order found by label-dependence optimization on the retail data.
pub const OPTIMIZED_ORDER: [Allergen; ALLERGEN_COUNT] = [
    Allergen::Gluten,
    Allergen::Molluscs,
    Allergen::Crustaceans,
    Allergen::Lupine,
    Allergen::Sesame,
    Allergen::Peanuts,
    Allergen::Sulphur,
    Allergen::Celery,
    Allergen::Eggs,
    Allergen::Nuts,
    Allergen::Milk,
    Allergen::Fish,
    Allergen::Mustard,
    Allergen::Soybeans,
];

#[derive(Debug, Error)]
pub enum MultilabelError {
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error("{allergen} model{}", position.map(|p| format!(" at chain position {p}")).unwrap_or_default())]
    Learner {
        allergen: Allergen,
        position: Option<usize>,
        #[source]
        source: LearnError,
    },
    #[error("bundle was trained for vocabulary fingerprint {bundle}, pipeline uses {pipeline}")]
    Fingerprint { bundle: String, pipeline: String },
    #[error("dimension mismatch: expected {expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("invalid chain order: {0}")]
    InvalidOrder(String),
    #[error("invalid strategy: {0}")]
    InvalidStrategy(String),
    #[error("invalid threshold {0}")]
    InvalidThreshold(f64),
    #[error("model bundle: {0}")]
    Bundle(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub labels: LabelSet,
    /// Canonical allergen order. Allergens a chain does not cover are 0.
    pub probabilities: [f64; ALLERGEN_COUNT],
}

fn check_corpus(corpus: &[(SparseVector, LabelSet)]) -> Result<usize, MultilabelError> {
    let dim = corpus.first().ok_or(MultilabelError::EmptyCorpus)?.0.dim();
    if let Some((x, _)) = corpus.iter().find(|(x, _)| x.dim() != dim) {
        return Err(MultilabelError::DimensionMismatch { expected: dim, found: x.dim() });
    }
    Ok(dim)
}

fn check_threshold(t: f64) -> Result<(), MultilabelError> {
    if t.is_nan() {
        return Err(MultilabelError::InvalidThreshold(t));
    }
    Ok(())
}

fn allergen_seed(base: u64, a: Allergen) -> u64 {
    base.wrapping_add(a.index() as u64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinaryRelevanceModel {
    /// Canonical allergen order.
    pub models: Vec<BinaryModel>,
    pub thresholds: [f64; ALLERGEN_COUNT],
    pub vocabulary_fingerprint: String,
}

impl BinaryRelevanceModel {
    pub fn input_dim(&self) -> usize {
        self.models[0].input_dim
    }

    pub fn set_threshold(&mut self, a: Allergen, t: f64) -> Result<(), MultilabelError> {
        check_threshold(t)?;
        self.thresholds[a.index()] = t;
        Ok(())
    }

    pub fn seeds(&self) -> Vec<u64> {
        self.models.iter().map(|m| m.config.seed).collect()
    }
}

/// One independent model per allergen, trained concurrently. Model `i` uses
/// seed `cfg.seed + i`.
pub fn train_binary_relevance(
    corpus: &[(SparseVector, LabelSet)],
    cfg: &TrainConfig,
    arch: Architecture,
) -> Result<BinaryRelevanceModel, MultilabelError> {
    check_corpus(corpus)?;
    let models = Allergen::ALL
        .par_iter()
        .map(|&a| {
            let data: Vec<(SparseVector, bool)> =
                corpus.iter().map(|(x, y)| (x.clone(), y.contains(a))).collect();
            train(&data, &cfg.with_seed(allergen_seed(cfg.seed, a)), arch)
                .map_err(|source| MultilabelError::Learner { allergen: a, position: None, source })
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(BinaryRelevanceModel {
        models,
        thresholds: [DEFAULT_THRESHOLD; ALLERGEN_COUNT],
        vocabulary_fingerprint: String::new(),
    })
}

pub fn predict_binary_relevance(m: &BinaryRelevanceModel, x: &SparseVector) -> Result<Prediction, MultilabelError> {
    let mut probabilities = [0.0; ALLERGEN_COUNT];
    let mut labels = LabelSet::empty();
    for (i, model) in m.models.iter().enumerate() {
        let p = predict_proba(model, x).map_err(|e| match e {
            LearnError::DimensionMismatch { expected, found } => MultilabelError::DimensionMismatch { expected, found },
            other => MultilabelError::Learner { allergen: Allergen::ALL[i], position: None, source: other },
        })?;
        probabilities[i] = p;
        if p >= m.thresholds[i] {
            labels.insert(Allergen::ALL[i]);
        }
    }
    Ok(Prediction { labels, probabilities })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainModel {
    order: Vec<Allergen>,
    models: Vec<BinaryModel>,
    thresholds: Vec<f64>,
    input_dim: usize,
    pub vocabulary_fingerprint: String,
}

/// Distinct allergens, at least one.
pub fn validate_order(order: &[Allergen]) -> Result<(), MultilabelError> {
    if order.is_empty() {
        return Err(MultilabelError::InvalidOrder("empty".into()));
    }
    let mut seen = LabelSet::empty();
    for &a in order {
        if seen.contains(a) {
            return Err(MultilabelError::InvalidOrder(format!("{a} appears twice")));
        }
        seen.insert(a);
    }
    Ok(())
}

impl ChainModel {
    pub fn order(&self) -> &[Allergen] {
        &self.order
    }

    pub fn models(&self) -> &[BinaryModel] {
        &self.models
    }

    pub fn thresholds(&self) -> &[f64] {
        &self.thresholds
    }

    /// Feature dimension of the documents, without augmentation.
    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn set_threshold(&mut self, a: Allergen, t: f64) -> Result<(), MultilabelError> {
        check_threshold(t)?;
        let pos = self
            .order
            .iter()
            .position(|&o| o == a)
            .ok_or_else(|| MultilabelError::InvalidOrder(format!("{a} is not part of the chain")))?;
        self.thresholds[pos] = t;
        Ok(())
    }

    pub fn seeds(&self) -> Vec<u64> {
        self.models.iter().map(|m| m.config.seed).collect()
    }
}

/// Trains `C_0 .. C_k` for `order`. Position `i` is trained on the document
/// features plus the true labels of `order[..i]`, with seed
/// `cfg.seed + allergen index`, so a one-link chain reproduces the binary
/// relevance model of that allergen.
pub fn train_chain(
    corpus: &[(SparseVector, LabelSet)],
    cfg: &TrainConfig,
    arch: Architecture,
    order: &[Allergen],
) -> Result<ChainModel, MultilabelError> {
    let dim = check_corpus(corpus)?;
    validate_order(order)?;
    // Teacher forcing makes positions independent of each other's models.
    let models = order
        .par_iter()
        .enumerate()
        .map(|(pos, &a)| {
            let data: Vec<(SparseVector, bool)> = corpus
                .iter()
                .map(|(x, y)| {
                    let bits: Vec<bool> = order[..pos].iter().map(|&p| y.contains(p)).collect();
                    (x.augmented(&bits), y.contains(a))
                })
                .collect();
            train(&data, &cfg.with_seed(allergen_seed(cfg.seed, a)), arch)
                .map_err(|source| MultilabelError::Learner { allergen: a, position: Some(pos), source })
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(ChainModel {
        order: order.to_vec(),
        models,
        thresholds: vec![DEFAULT_THRESHOLD; order.len()],
        input_dim: dim,
        vocabulary_fingerprint: String::new(),
    })
}

pub fn predict_chain(m: &ChainModel, x: &SparseVector) -> Result<Prediction, MultilabelError> {
    if x.dim() != m.input_dim {
        return Err(MultilabelError::DimensionMismatch { expected: m.input_dim, found: x.dim() });
    }
    let mut bits = Vec::with_capacity(m.order.len());
    let mut probabilities = [0.0; ALLERGEN_COUNT];
    let mut labels = LabelSet::empty();
    for (pos, (&a, model)) in m.order.iter().zip(&m.models).enumerate() {
        let p = predict_proba(model, &x.augmented(&bits))
            .map_err(|source| MultilabelError::Learner { allergen: a, position: Some(pos), source })?;
        probabilities[a.index()] = p;
        let hit = p >= m.thresholds[pos];
        if hit {
            labels.insert(a);
        }
        bits.push(hit);
    }
    Ok(Prediction { labels, probabilities })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ChainOrderStrategy {
    Given { order: Vec<Allergen> },
    RandomPermutations { count: usize, seed: u64 },
    OptimizedFixed,
}

impl ChainOrderStrategy {
    pub fn orders(&self) -> Result<Vec<Vec<Allergen>>, MultilabelError> {
        match self {
            ChainOrderStrategy::Given { order } => {
                validate_order(order)?;
                Ok(vec![order.clone()])
            }
            ChainOrderStrategy::RandomPermutations { count, seed } => {
                if *count == 0 {
                    return Err(MultilabelError::InvalidStrategy("permutation count must be >= 1".into()));
                }
                let mut rng = ChaCha8Rng::seed_from_u64(*seed);
                Ok((0..*count)
                    .map(|_| {
                        let mut o = Allergen::ALL.to_vec();
                        o.shuffle(&mut rng);
                        o
                    })
                    .collect())
            }
            ChainOrderStrategy::OptimizedFixed => Ok(vec![OPTIMIZED_ORDER.to_vec()]),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            ChainOrderStrategy::Given { .. } => "given",
            ChainOrderStrategy::RandomPermutations { .. } => "random",
            ChainOrderStrategy::OptimizedFixed => "optimized",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrderRun {
    pub order: Vec<Allergen>,
    pub train_seed: u64,
    pub evaluation: MultilabelEvaluation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrderExperimentReport {
    pub strategy: ChainOrderStrategy,
    pub runs: Vec<OrderRun>,
    /// Metric-wise mean over `runs`.
    pub averaged: MultilabelEvaluation,
}

/// Trains and evaluates one chain per order of `strategy`; runs execute
/// concurrently and are averaged per allergen.
pub fn run_order_experiment(
    train_set: &[(SparseVector, LabelSet)],
    test_set: &[(SparseVector, LabelSet)],
    cfg: &TrainConfig,
    arch: Architecture,
    strategy: &ChainOrderStrategy,
    alpha: &AlphaParams,
) -> Result<OrderExperimentReport, MultilabelError> {
    let orders = strategy.orders()?;
    let runs = orders
        .into_par_iter()
        .map(|order| {
            let chain = train_chain(train_set, cfg, arch, &order)?;
            let evaluation = evaluate_chain(&chain, test_set, alpha)?;
            Ok(OrderRun { order, train_seed: cfg.seed, evaluation })
        })
        .collect::<Result<Vec<_>, MultilabelError>>()?;
    let evals: Vec<MultilabelEvaluation> = runs.iter().map(|r| r.evaluation.clone()).collect();
    let averaged = MultilabelEvaluation::mean(&evals).expect("at least one run");
    Ok(OrderExperimentReport { strategy: strategy.clone(), runs, averaged })
}

pub fn evaluate_chain(
    m: &ChainModel,
    test_set: &[(SparseVector, LabelSet)],
    alpha: &AlphaParams,
) -> Result<MultilabelEvaluation, MultilabelError> {
    let pairs = test_set
        .par_iter()
        .map(|(x, y)| predict_chain(m, x).map(|p| (*y, p.labels)))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(evaluate_multilabel(&pairs, alpha))
}

pub fn evaluate_binary_relevance(
    m: &BinaryRelevanceModel,
    test_set: &[(SparseVector, LabelSet)],
    alpha: &AlphaParams,
) -> Result<MultilabelEvaluation, MultilabelError> {
    let pairs = test_set
        .par_iter()
        .map(|(x, y)| predict_binary_relevance(m, x).map(|p| (*y, p.labels)))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(evaluate_multilabel(&pairs, alpha))
}

/// Multi-label predictor as stored on disk.
#[derive(Debug, Clone, PartialEq)]
pub enum MultilabelModel {
    BinaryRelevance(BinaryRelevanceModel),
    Chain(ChainModel),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct BundleManifest {
    format: String,
    version: u32,
    kind: String,
    order: Vec<Allergen>,
    thresholds: Vec<f64>,
    input_dim: usize,
    vocabulary_fingerprint: String,
    models: Vec<String>,
}

const BUNDLE_FORMAT: &str = "ficcheck-multilabel";
const BUNDLE_VERSION: u32 = 1;
const MANIFEST_FILE: &str = "manifest.json";

impl MultilabelModel {
    pub fn predict(&self, x: &SparseVector) -> Result<Prediction, MultilabelError> {
        match self {
            MultilabelModel::BinaryRelevance(m) => predict_binary_relevance(m, x),
            MultilabelModel::Chain(m) => predict_chain(m, x),
        }
    }

    pub fn vocabulary_fingerprint(&self) -> &str {
        match self {
            MultilabelModel::BinaryRelevance(m) => &m.vocabulary_fingerprint,
            MultilabelModel::Chain(m) => &m.vocabulary_fingerprint,
        }
    }

    pub fn set_vocabulary_fingerprint(&mut self, fp: &str) {
        let (target, models) = match self {
            MultilabelModel::BinaryRelevance(m) => (&mut m.vocabulary_fingerprint, &mut m.models),
            MultilabelModel::Chain(m) => (&mut m.vocabulary_fingerprint, &mut m.models),
        };
        *target = fp.to_string();
        for model in models {
            model.vocabulary_fingerprint = fp.to_string();
        }
    }

    pub fn models(&self) -> &[BinaryModel] {
        match self {
            MultilabelModel::BinaryRelevance(m) => &m.models,
            MultilabelModel::Chain(m) => &m.models,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            MultilabelModel::BinaryRelevance(_) => "binary_relevance",
            MultilabelModel::Chain(_) => "chain",
        }
    }

    /// Writes `manifest.json` and one JSON file per binary model into `dir`.
    pub fn save(&self, dir: &Path) -> Result<(), MultilabelError> {
        fs::create_dir_all(dir)?;
        let (order, thresholds, input_dim): (Vec<Allergen>, Vec<f64>, usize) = match self {
            MultilabelModel::BinaryRelevance(m) => (Allergen::ALL.to_vec(), m.thresholds.to_vec(), m.input_dim()),
            MultilabelModel::Chain(m) => (m.order.clone(), m.thresholds.clone(), m.input_dim),
        };
        let mut names = Vec::new();
        for (pos, (a, model)) in order.iter().zip(self.models()).enumerate() {
            let name = format!("model_{pos:02}_{}.json", a.name().to_lowercase());
            model.save(&dir.join(&name)).map_err(|e| MultilabelError::Bundle(e.to_string()))?;
            names.push(name);
        }
        let manifest = BundleManifest {
            format: BUNDLE_FORMAT.into(),
            version: BUNDLE_VERSION,
            kind: self.kind().into(),
            order,
            thresholds,
            input_dim,
            vocabulary_fingerprint: self.vocabulary_fingerprint().to_string(),
            models: names,
        };
        fs::write(dir.join(MANIFEST_FILE), serde_json::to_string_pretty(&manifest)? + "\n")?;
        Ok(())
    }

    /// Loads a bundle, refusing it when `expected_fingerprint` differs from
    /// the one it was trained with.
    pub fn load(dir: &Path, expected_fingerprint: Option<&str>) -> Result<MultilabelModel, MultilabelError> {
        let manifest: BundleManifest = serde_json::from_str(&fs::read_to_string(dir.join(MANIFEST_FILE))?)?;
        if manifest.format != BUNDLE_FORMAT || manifest.version != BUNDLE_VERSION {
            return Err(MultilabelError::Bundle(format!(
                "unsupported bundle {} v{}",
                manifest.format, manifest.version
            )));
        }
        if let Some(fp) = expected_fingerprint {
            if manifest.vocabulary_fingerprint != fp {
                return Err(MultilabelError::Fingerprint {
                    bundle: manifest.vocabulary_fingerprint.clone(),
                    pipeline: fp.to_string(),
                });
            }
        }
        if manifest.models.len() != manifest.order.len() || manifest.thresholds.len() != manifest.order.len() {
            return Err(MultilabelError::Bundle("manifest lists inconsistent model counts".into()));
        }
        validate_order(&manifest.order)?;
        let fp = Some(manifest.vocabulary_fingerprint.as_str());
        let mut models = Vec::with_capacity(manifest.models.len());
        for (pos, name) in manifest.models.iter().enumerate() {
            if name.contains('/') || name.contains('\\') || name.starts_with('.') {
                return Err(MultilabelError::Bundle(format!("bad model file name {name}")));
            }
            let m = BinaryModel::load(&dir.join(name), fp).map_err(|source| MultilabelError::Learner {
                allergen: manifest.order[pos],
                position: Some(pos),
                source,
            })?;
            models.push(m);
        }
        match manifest.kind.as_str() {
            "binary_relevance" => {
                if manifest.order != Allergen::ALL {
                    return Err(MultilabelError::Bundle("binary relevance bundle must list all allergens in order".into()));
                }
                if models.iter().any(|m| m.input_dim != manifest.input_dim) {
                    return Err(MultilabelError::Bundle("model dimensions disagree".into()));
                }
                let mut thresholds = [DEFAULT_THRESHOLD; ALLERGEN_COUNT];
                thresholds.copy_from_slice(&manifest.thresholds);
                Ok(MultilabelModel::BinaryRelevance(BinaryRelevanceModel {
                    models,
                    thresholds,
                    vocabulary_fingerprint: manifest.vocabulary_fingerprint,
                }))
            }
            "chain" => {
                if models.iter().enumerate().any(|(i, m)| m.input_dim != manifest.input_dim + i) {
                    return Err(MultilabelError::Bundle("chain model dimensions do not grow by one per position".into()));
                }
                Ok(MultilabelModel::Chain(ChainModel {
                    order: manifest.order,
                    models,
                    thresholds: manifest.thresholds,
                    input_dim: manifest.input_dim,
                    vocabulary_fingerprint: manifest.vocabulary_fingerprint,
                }))
            }
            other => Err(MultilabelError::Bundle(format!("unknown bundle kind {other}"))),
        }
    }
}
