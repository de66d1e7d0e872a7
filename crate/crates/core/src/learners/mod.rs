//! Binary probabilistic classifiers over sparse document vectors.
//!
//! Two architectures share one implementation: logistic regression is a
//! network without hidden layers, the MLP has hidden layers of 100 and 30
//! ReLU units. Both are trained by mini-batch gradient descent on the
//! (optionally class-weighted) binary cross-entropy.

mod network;

use std::cmp::Ordering;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use network::{bce_with_logit, sigmoid, DenseLayer};
use network::Gradients;

use crate::text::SparseVector;

const MODEL_FORMAT: &str = "ficcheck-binary-model";
const MODEL_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum LearnError {
    #[error("training data is empty")]
    EmptyData,
    #[error("dimension mismatch: expected {expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("sample weights: expected {expected} finite non-negative values, got {found}")]
    Weights { expected: usize, found: usize },
    #[error("non-finite training loss in epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },
    #[error("invalid training configuration: {0}")]
    Config(String),
    #[error("model was trained for vocabulary fingerprint {model}, pipeline uses {pipeline}")]
    FingerprintMismatch { model: String, pipeline: String },
    #[error("model file is invalid: {0}")]
    InvalidModel(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Architecture {
    #[serde(rename = "logistic")]
    Logistic,
    #[serde(rename = "mlp_n_100_30")]
    Mlp,
}

impl Architecture {
    pub fn hidden_sizes(self) -> &'static [usize] {
        match self {
            Architecture::Logistic => &[],
            Architecture::Mlp => &[100, 30],
        }
    }

    /// Short name used in report tables.
    pub fn label(self) -> &'static str {
        match self {
            Architecture::Logistic => "LR",
            Architecture::Mlp => "NN",
        }
    }

    fn layer_shapes(self, input_dim: usize) -> Vec<(usize, usize)> {
        let mut dims = vec![input_dim];
        dims.extend_from_slice(self.hidden_sizes());
        dims.push(1);
        dims.windows(2).map(|w| (w[0], w[1])).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub l2_penalty: f64,
    pub seed: u64,
    /// Weight each class by `N / (2 * class_count)`.
    pub class_weighting: bool,
    /// Stop after this many epochs without validation improvement; a tenth
    /// of the data is held out for validation when set.
    pub early_stop_patience: Option<usize>,
    pub shuffle: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.05,
            epochs: 30,
            batch_size: 32,
            l2_penalty: 1e-5,
            seed: 42,
            class_weighting: true,
            early_stop_patience: None,
            shuffle: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), LearnError> {
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(LearnError::Config(format!("learning_rate must be > 0, got {}", self.learning_rate)));
        }
        if self.epochs == 0 {
            return Err(LearnError::Config("epochs must be >= 1".into()));
        }
        if self.batch_size == 0 {
            return Err(LearnError::Config("batch_size must be >= 1".into()));
        }
        if !(self.l2_penalty.is_finite() && self.l2_penalty >= 0.0) {
            return Err(LearnError::Config(format!("l2_penalty must be >= 0, got {}", self.l2_penalty)));
        }
        if self.early_stop_patience == Some(0) {
            return Err(LearnError::Config("early_stop_patience must be >= 1".into()));
        }
        Ok(())
    }

    pub fn with_seed(&self, seed: u64) -> TrainConfig {
        TrainConfig { seed, ..self.clone() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingSummary {
    /// Weighted mean batch loss per epoch (without the L2 term).
    pub epoch_losses: Vec<f64>,
    pub validation_losses: Vec<f64>,
    pub stopped_early: bool,
    /// Single-class training data: no gradient training, constant prior model.
    pub degenerate: bool,
    pub positives: usize,
    pub negatives: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinaryModel {
    format: String,
    version: u32,
    pub architecture: Architecture,
    pub input_dim: usize,
    layers: Vec<DenseLayer>,
    pub config: TrainConfig,
    pub vocabulary_fingerprint: String,
    pub training: TrainingSummary,
}

fn empty_summary() -> TrainingSummary {
    TrainingSummary {
        epoch_losses: Vec::new(),
        validation_losses: Vec::new(),
        stopped_early: false,
        degenerate: false,
        positives: 0,
        negatives: 0,
    }
}

impl BinaryModel {
    /// Freshly initialized, untrained model; all randomness comes from `seed`.
    pub fn initialize(architecture: Architecture, input_dim: usize, seed: u64) -> BinaryModel {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self::init_with(architecture, input_dim, &mut rng, TrainConfig { seed, ..TrainConfig::default() })
    }

    fn init_with(architecture: Architecture, input_dim: usize, rng: &mut ChaCha8Rng, config: TrainConfig) -> BinaryModel {
        let layers = architecture
            .layer_shapes(input_dim)
            .into_iter()
            .map(|(i, o)| DenseLayer::glorot(i, o, rng))
            .collect();
        BinaryModel {
            format: MODEL_FORMAT.into(),
            version: MODEL_VERSION,
            architecture,
            input_dim,
            layers,
            config,
            vocabulary_fingerprint: String::new(),
            training: empty_summary(),
        }
    }

    /// Model that ignores its input and always predicts `probability`.
    pub fn constant(architecture: Architecture, input_dim: usize, probability: f64) -> BinaryModel {
        let mut layers: Vec<DenseLayer> = architecture
            .layer_shapes(input_dim)
            .into_iter()
            .map(|(i, o)| DenseLayer::zeros(i, o))
            .collect();
        let p = probability.clamp(1e-12, 1.0 - 1e-12);
        layers.last_mut().unwrap().bias[0] = (p / (1.0 - p)).ln();
        BinaryModel {
            format: MODEL_FORMAT.into(),
            version: MODEL_VERSION,
            architecture,
            input_dim,
            layers,
            config: TrainConfig::default(),
            vocabulary_fingerprint: String::new(),
            training: TrainingSummary { degenerate: true, ..empty_summary() },
        }
    }

    pub fn layers(&self) -> &[DenseLayer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [DenseLayer] {
        &mut self.layers
    }

    pub fn is_degenerate(&self) -> bool {
        self.training.degenerate
    }

    pub fn parameter_count(&self) -> usize {
        self.layers.iter().map(DenseLayer::parameter_count).sum()
    }

    /// All weights then biases, layer by layer.
    pub fn parameters(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.parameter_count());
        for l in &self.layers {
            out.extend_from_slice(&l.weights);
            out.extend_from_slice(&l.bias);
        }
        out
    }

    pub fn set_parameters(&mut self, params: &[f64]) {
        assert_eq!(params.len(), self.parameter_count(), "parameter vector length");
        let mut at = 0;
        for l in &mut self.layers {
            let n = l.weights.len();
            l.weights.copy_from_slice(&params[at..at + n]);
            at += n;
            let m = l.bias.len();
            l.bias.copy_from_slice(&params[at..at + m]);
            at += m;
        }
    }

    fn check_dim(&self, x: &SparseVector) -> Result<(), LearnError> {
        if x.dim() != self.input_dim {
            return Err(LearnError::DimensionMismatch { expected: self.input_dim, found: x.dim() });
        }
        Ok(())
    }

    pub fn logit(&self, x: &SparseVector) -> Result<f64, LearnError> {
        self.check_dim(x)?;
        Ok(network::logit(&self.layers, x))
    }

    /// Training objective and its gradient (same order as [`parameters`]):
    /// weighted mean cross-entropy plus `l2 / 2 * ||W||²` over weights only.
    ///
    /// [`parameters`]: BinaryModel::parameters
    pub fn loss_and_gradient(
        &self,
        data: &[(SparseVector, bool)],
        weights: Option<&[f64]>,
        l2: f64,
    ) -> Result<(f64, Vec<f64>), LearnError> {
        for (x, _) in data {
            self.check_dim(x)?;
        }
        let w = resolve_weights(data.len(), weights)?;
        let idx: Vec<usize> = (0..data.len()).collect();
        let mut grads = Gradients::like(&self.layers);
        let loss = batch_gradient(&self.layers, data, &w, &idx, &mut grads);
        let mut reg = 0.0;
        for (l, g) in self.layers.iter().zip(&mut grads.layers) {
            for (wv, gv) in l.weights.iter().zip(&mut g.weights) {
                reg += wv * wv;
                *gv += l2 * wv;
            }
        }
        let mut flat = Vec::with_capacity(self.parameter_count());
        for g in &grads.layers {
            flat.extend_from_slice(&g.weights);
            flat.extend_from_slice(&g.bias);
        }
        Ok((loss + 0.5 * l2 * reg, flat))
    }

    pub fn save(&self, path: &Path) -> Result<(), LearnError> {
        std::fs::write(path, serde_json::to_string(self)?)?;
        Ok(())
    }

    /// Loads a model and refuses it when it was trained for a different
    /// vocabulary.
    pub fn load(path: &Path, expected_fingerprint: Option<&str>) -> Result<BinaryModel, LearnError> {
        let model: BinaryModel = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        model.validate_structure()?;
        if let Some(fp) = expected_fingerprint {
            if model.vocabulary_fingerprint != fp {
                return Err(LearnError::FingerprintMismatch {
                    model: model.vocabulary_fingerprint.clone(),
                    pipeline: fp.to_string(),
                });
            }
        }
        Ok(model)
    }

    fn validate_structure(&self) -> Result<(), LearnError> {
        if self.format != MODEL_FORMAT || self.version != MODEL_VERSION {
            return Err(LearnError::InvalidModel(format!(
                "unsupported format {} v{}",
                self.format, self.version
            )));
        }
        let shapes = self.architecture.layer_shapes(self.input_dim);
        if shapes.len() != self.layers.len() {
            return Err(LearnError::InvalidModel("layer count does not match architecture".into()));
        }
        for ((i, o), l) in shapes.into_iter().zip(&self.layers) {
            if l.inputs != i || l.outputs != o || l.weights.len() != i * o || l.bias.len() != o {
                return Err(LearnError::InvalidModel(format!("layer shape mismatch at {i}x{o}")));
            }
            if l.weights.iter().chain(&l.bias).any(|v| !v.is_finite()) {
                return Err(LearnError::InvalidModel("non-finite weight".into()));
            }
        }
        Ok(())
    }
}

/// Probability of the positive class.
pub fn predict_proba(model: &BinaryModel, x: &SparseVector) -> Result<f64, LearnError> {
    model.logit(x).map(sigmoid)
}

fn resolve_weights(n: usize, weights: Option<&[f64]>) -> Result<Vec<f64>, LearnError> {
    match weights {
        None => Ok(vec![1.0; n]),
        Some(w) if w.len() == n && w.iter().all(|v| v.is_finite() && *v >= 0.0) => Ok(w.to_vec()),
        Some(w) => Err(LearnError::Weights { expected: n, found: w.len() }),
    }
}

/// Accumulates the weighted mean loss gradient over `batch` into `grads`
/// (which must be zeroed) and returns the weighted mean loss.
fn batch_gradient(
    layers: &[DenseLayer],
    data: &[(SparseVector, bool)],
    weights: &[f64],
    batch: &[usize],
    grads: &mut Gradients,
) -> f64 {
    let total: f64 = batch.iter().map(|&i| weights[i]).sum();
    if total <= 0.0 {
        return 0.0;
    }
    let mut loss = 0.0;
    for &i in batch {
        let scale = weights[i] / total;
        if scale == 0.0 {
            continue;
        }
        let (x, y) = &data[i];
        loss += scale * network::accumulate(layers, x, *y, scale, grads);
    }
    loss
}

fn weighted_loss(layers: &[DenseLayer], data: &[(SparseVector, bool)], weights: &[f64], idx: &[usize]) -> f64 {
    let total: f64 = idx.iter().map(|&i| weights[i]).sum();
    if total <= 0.0 {
        return 0.0;
    }
    idx.iter()
        .map(|&i| weights[i] * bce_with_logit(network::logit(layers, &data[i].0), data[i].1))
        .sum::<f64>()
        / total
}

fn compare_examples(a: &(SparseVector, bool), wa: f64, b: &(SparseVector, bool), wb: f64) -> Ordering {
    let ea = a.0.entries();
    let eb = b.0.entries();
    for (x, y) in ea.iter().zip(eb) {
        let ord = x.0.cmp(&y.0).then_with(|| x.1.total_cmp(&y.1));
        if ord != Ordering::Equal {
            return ord;
        }
    }
    ea.len()
        .cmp(&eb.len())
        .then_with(|| a.1.cmp(&b.1))
        .then_with(|| wa.total_cmp(&wb))
}

pub fn train(data: &[(SparseVector, bool)], cfg: &TrainConfig, arch: Architecture) -> Result<BinaryModel, LearnError> {
    train_weighted(data, None, cfg, arch)
}

/// Trains with explicit per-example weights. When `weights` is `None` and
/// `class_weighting` is on, inverse class-frequency weights are used.
///
/// Examples are put into a canonical order first, so the result depends
/// only on the multiset of examples, the configuration and the seed.
pub fn train_weighted(
    data: &[(SparseVector, bool)],
    weights: Option<&[f64]>,
    cfg: &TrainConfig,
    arch: Architecture,
) -> Result<BinaryModel, LearnError> {
    cfg.validate()?;
    let first = data.first().ok_or(LearnError::EmptyData)?;
    let dim = first.0.dim();
    if let Some((x, _)) = data.iter().find(|(x, _)| x.dim() != dim) {
        return Err(LearnError::DimensionMismatch { expected: dim, found: x.dim() });
    }
    let positives = data.iter().filter(|(_, y)| *y).count();
    let negatives = data.len() - positives;

    let sample_weights = match weights {
        Some(_) => resolve_weights(data.len(), weights)?,
        None if cfg.class_weighting && positives > 0 && negatives > 0 => {
            let n = data.len() as f64;
            let wp = n / (2.0 * positives as f64);
            let wn = n / (2.0 * negatives as f64);
            data.iter().map(|(_, y)| if *y { wp } else { wn }).collect()
        }
        None => vec![1.0; data.len()],
    };

    if positives == 0 || negatives == 0 {
        // Smoothed prior stays on the observed side of 0.5.
        let prior = (positives as f64 + 0.5) / (data.len() as f64 + 1.0);
        let mut model = BinaryModel::constant(arch, dim, prior);
        model.config = cfg.clone();
        model.training.positives = positives;
        model.training.negatives = negatives;
        return Ok(model);
    }

    let mut order: Vec<usize> = (0..data.len()).collect();
    order.sort_by(|&a, &b| compare_examples(&data[a], sample_weights[a], &data[b], sample_weights[b]));

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut model = BinaryModel::init_with(arch, dim, &mut rng, cfg.clone());
    model.training.positives = positives;
    model.training.negatives = negatives;

    let (mut train_idx, valid_idx) = match cfg.early_stop_patience {
        Some(_) if data.len() >= 10 => {
            let mut shuffled = order.clone();
            shuffled.shuffle(&mut rng);
            let hold = (data.len() / 10).max(1);
            let valid = shuffled.split_off(data.len() - hold);
            // keep the canonical order inside the training part
            shuffled.sort_by_key(|i| order.iter().position(|o| o == i).unwrap());
            (shuffled, valid)
        }
        _ => (order, Vec::new()),
    };

    let mut grads = Gradients::like(&model.layers);
    let mut best: Option<(f64, Vec<DenseLayer>)> = None;
    let mut since_best = 0;

    for epoch in 0..cfg.epochs {
        if cfg.shuffle {
            train_idx.shuffle(&mut rng);
        }
        let mut epoch_loss = 0.0;
        let mut epoch_weight = 0.0;
        for (b, batch) in train_idx.chunks(cfg.batch_size).enumerate() {
            grads.reset();
            let loss = batch_gradient(&model.layers, data, &sample_weights, batch, &mut grads);
            if !loss.is_finite() {
                return Err(LearnError::NonFiniteLoss { epoch, batch: b });
            }
            let bw: f64 = batch.iter().map(|&i| sample_weights[i]).sum();
            epoch_loss += loss * bw;
            epoch_weight += bw;
            let lr = cfg.learning_rate;
            let l2 = cfg.l2_penalty;
            for (layer, g) in model.layers.iter_mut().zip(&grads.layers) {
                for (w, gw) in layer.weights.iter_mut().zip(&g.weights) {
                    *w -= lr * (gw + l2 * *w);
                }
                for (bias, gb) in layer.bias.iter_mut().zip(&g.bias) {
                    *bias -= lr * gb;
                }
            }
        }
        model
            .training
            .epoch_losses
            .push(if epoch_weight > 0.0 { epoch_loss / epoch_weight } else { 0.0 });

        if let Some(patience) = cfg.early_stop_patience {
            if valid_idx.is_empty() {
                continue;
            }
            let v = weighted_loss(&model.layers, data, &sample_weights, &valid_idx);
            if !v.is_finite() {
                return Err(LearnError::NonFiniteLoss { epoch, batch: usize::MAX });
            }
            model.training.validation_losses.push(v);
            match &best {
                Some((b, _)) if v >= *b - 1e-12 => {
                    since_best += 1;
                    if since_best >= patience {
                        model.training.stopped_early = true;
                        break;
                    }
                }
                _ => {
                    best = Some((v, model.layers.clone()));
                    since_best = 0;
                }
            }
        }
    }
    if model.training.stopped_early {
        if let Some((_, layers)) = best {
            model.layers = layers;
        }
    }
    Ok(model)
}
