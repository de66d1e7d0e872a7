//! Command-line front end: `verify`, `train`, `predict` and `stats`.
//!
//! Exit codes: 0 success, 1 findings were reported (`verify` only), 2 input
//! or configuration error.

mod commands;
mod pipeline;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::learners::{Architecture, TrainConfig};
use crate::metrics::AlphaParams;
use crate::model::Allergen;
use crate::multilabel::ChainOrderStrategy;
use crate::rules::RuleConfig;
use crate::text::VectorMode;

pub use pipeline::{stratified_split, PipelineConfig, TextSource};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FINDINGS: i32 = 1;
pub const EXIT_INPUT: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "ficcheck", version, about = "Nutrient-declaration checks and allergen prediction for product data")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,

    /// JSON run configuration; command-line flags take precedence
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Log progress to standard error
    #[arg(short, long, global = true)]
    pub verbose: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check nutrient declarations and report rule violations
    Verify(VerifyArgs),
    /// Train allergen predictors and evaluate them on a held-out split
    Train(TrainArgs),
    /// Predict allergens with a trained model bundle
    Predict(PredictArgs),
    /// Nutrient and allergen distributions of a product file
    Stats(StatsArgs),
}

#[derive(Debug, Clone, Args)]
pub struct InputArgs {
    /// Product export (CSV, TSV or JSON-lines)
    #[arg(long)]
    pub products: PathBuf,

    /// JSON mapping from export columns to data-model fields
    #[arg(long)]
    pub mapping: PathBuf,

    /// Field delimiter for CSV input (default: from the file extension)
    #[arg(long)]
    pub delimiter: Option<char>,

    /// Directory for reports
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[command(flatten)]
    pub input: InputArgs,

    /// JSON rule configuration
    #[arg(long)]
    pub rules_config: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Any allergen vs. none
    General,
    /// One decision per allergen
    Specific,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    Br,
    Chain,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum TextKind {
    Bow,
    Tfidf,
}

impl TextKind {
    pub fn vector_mode(self) -> VectorMode {
        match self {
            TextKind::Bow => VectorMode::Bow,
            TextKind::Tfidf => VectorMode::Tfidf,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum ArchKind {
    Mlp,
    Logistic,
}

impl ArchKind {
    pub fn architecture(self) -> Architecture {
        match self {
            ArchKind::Mlp => Architecture::Mlp,
            ArchKind::Logistic => Architecture::Logistic,
        }
    }
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub input: InputArgs,

    #[arg(long, value_enum)]
    pub mode: Option<Mode>,

    #[arg(long, value_enum)]
    pub strategy: Option<Strategy>,

    #[arg(long, value_enum)]
    pub text: Option<TextKind>,

    /// Minimum document frequency (fraction of training documents)
    #[arg(long)]
    pub min_df: Option<f64>,

    #[arg(long, value_enum)]
    pub source: Option<TextSource>,

    /// Seed for the split, weight initialization and chain permutations
    #[arg(long)]
    pub seed: Option<u64>,

    #[arg(long, value_enum)]
    pub arch: Option<ArchKind>,

    /// `optimized`, `random:<count>` or a comma-separated allergen list
    #[arg(long)]
    pub chain_order: Option<String>,

    /// Refuse to train on fewer products with ingredient text
    #[arg(long)]
    pub min_rows: Option<usize>,

    /// Training epochs per binary model
    #[arg(long)]
    pub epochs: Option<usize>,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[command(flatten)]
    pub input: InputArgs,

    /// Model bundle directory written by `train`
    #[arg(long)]
    pub model: PathBuf,

    /// Signal-word dictionary (JSON), or `builtin`
    #[arg(long)]
    pub dict: Option<String>,
}

#[derive(Debug, Args)]
pub struct StatsArgs {
    #[command(flatten)]
    pub input: InputArgs,
}

/// Settings of `train`, loadable from the `train` section of `--config`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSettings {
    pub mode: Mode,
    pub strategy: Strategy,
    pub text: TextKind,
    pub source: TextSource,
    pub min_df: f64,
    pub seed: u64,
    pub arch: ArchKind,
    pub chain_order: String,
    pub min_rows: usize,
    pub test_fraction: f64,
    pub learner: TrainConfig,
    pub alpha: AlphaParams,
}

impl Default for TrainSettings {
    fn default() -> Self {
        TrainSettings {
            mode: Mode::Specific,
            strategy: Strategy::Br,
            text: TextKind::Bow,
            source: TextSource::FullList,
            min_df: 0.01,
            seed: 42,
            arch: ArchKind::Mlp,
            chain_order: "optimized".into(),
            min_rows: 50,
            test_fraction: 0.2,
            learner: TrainConfig::default(),
            alpha: AlphaParams::default(),
        }
    }
}

impl TrainSettings {
    fn apply(&mut self, a: &TrainArgs) {
        macro_rules! take {
            ($($f:ident),*) => { $( if let Some(v) = a.$f.clone() { self.$f = v; } )* };
        }
        take!(mode, strategy, text, min_df, source, seed, arch, chain_order, min_rows);
        if let Some(e) = a.epochs {
            self.learner.epochs = e;
        }
        // one seed drives everything
        self.learner.seed = self.seed;
    }

    fn validate(&self) -> Result<()> {
        self.learner.validate()?;
        AlphaParams::new(self.alpha.alpha, self.alpha.beta, self.alpha.gamma)?;
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            bail!("test_fraction must lie in (0, 1), got {}", self.test_fraction);
        }
        if !(self.min_df > 0.0 && self.min_df < 1.0) {
            bail!("min_df must lie in (0, 1), got {}", self.min_df);
        }
        parse_chain_order(&self.chain_order, self.seed)?;
        Ok(())
    }
}

/// `optimized`, `random:<count>` or `Gluten,Milk,...`.
pub fn parse_chain_order(spec: &str, seed: u64) -> Result<ChainOrderStrategy> {
    let spec = spec.trim();
    if spec.eq_ignore_ascii_case("optimized") {
        return Ok(ChainOrderStrategy::OptimizedFixed);
    }
    if let Some(count) = spec.strip_prefix("random:") {
        let count: usize = count.trim().parse().with_context(|| format!("bad permutation count in `{spec}`"))?;
        let s = ChainOrderStrategy::RandomPermutations { count, seed };
        s.orders()?;
        return Ok(s);
    }
    let order = spec
        .split(',')
        .map(|t| t.trim().parse::<Allergen>().map_err(|e| anyhow::anyhow!("{e}")))
        .collect::<Result<Vec<_>>>()?;
    let s = ChainOrderStrategy::Given { order };
    s.orders()?;
    Ok(s)
}

/// Contents of the `--config` file.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub train: TrainSettings,
    pub rules: RuleConfig,
}

impl RunConfig {
    fn load(path: Option<&Path>) -> Result<RunConfig> {
        match path {
            None => Ok(RunConfig::default()),
            Some(p) => {
                let text = fs::read_to_string(p).with_context(|| format!("reading config {}", p.display()))?;
                serde_json::from_str(&text).with_context(|| format!("parsing config {}", p.display()))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputDigest {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

pub fn digest_file(path: &Path) -> Result<InputDigest> {
    let data = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(InputDigest {
        path: path.display().to_string(),
        sha256: hex::encode(Sha256::digest(&data)),
        bytes: data.len() as u64,
    })
}

/// Record of one run, written next to (not inside) its outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub config: serde_json::Value,
    pub inputs: BTreeMap<String, InputDigest>,
    pub seeds: BTreeMap<String, Vec<u64>>,
    /// SHA-256 of every report written, by path relative to the output directory.
    pub outputs: BTreeMap<String, String>,
    pub notes: Vec<String>,
    pub started_at: String,
    pub finished_at: String,
}

pub const MANIFEST_FILE: &str = "run_manifest.json";

impl RunManifest {
    fn new(command: &str) -> RunManifest {
        RunManifest {
            tool: env!("CARGO_PKG_NAME").into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            config: serde_json::Value::Null,
            inputs: BTreeMap::new(),
            seeds: BTreeMap::new(),
            outputs: BTreeMap::new(),
            notes: Vec::new(),
            started_at: chrono::Utc::now().to_rfc3339(),
            finished_at: String::new(),
        }
    }

    fn add_input(&mut self, key: &str, path: &Path) -> Result<()> {
        self.inputs.insert(key.into(), digest_file(path)?);
        Ok(())
    }
}

/// Writes report files below one directory and remembers their digests.
pub(crate) struct OutputDir {
    root: PathBuf,
    written: BTreeMap<String, String>,
}

impl OutputDir {
    fn create(root: &Path) -> Result<OutputDir> {
        fs::create_dir_all(root).with_context(|| format!("creating {}", root.display()))?;
        Ok(OutputDir { root: root.to_path_buf(), written: BTreeMap::new() })
    }

    fn path(&self, rel: &str) -> PathBuf {
        self.root.join(rel)
    }

    fn write(&mut self, rel: &str, bytes: &[u8]) -> Result<()> {
        let p = self.path(rel);
        if let Some(parent) = p.parent() {
            fs::create_dir_all(parent)?;
        }
        fs::write(&p, bytes).with_context(|| format!("writing {}", p.display()))?;
        self.written.insert(rel.into(), hex::encode(Sha256::digest(bytes)));
        Ok(())
    }

    fn write_with<F>(&mut self, rel: &str, f: F) -> Result<()>
    where
        F: FnOnce(&mut Vec<u8>) -> Result<(), crate::report::ReportError>,
    {
        let mut buf = Vec::new();
        f(&mut buf)?;
        self.write(rel, &buf)
    }

    /// Records digests of files produced by other writers (model bundles).
    fn record_tree(&mut self, rel_dir: &str) -> Result<()> {
        let dir = self.path(rel_dir);
        let mut names: Vec<_> = fs::read_dir(&dir)?.collect::<std::io::Result<Vec<_>>>()?;
        names.sort_by_key(|e| e.file_name());
        for e in names {
            if e.file_type()?.is_file() {
                let rel = format!("{rel_dir}/{}", e.file_name().to_string_lossy());
                let data = fs::read(e.path())?;
                self.written.insert(rel, hex::encode(Sha256::digest(&data)));
            }
        }
        Ok(())
    }

    fn finish(self, mut manifest: RunManifest) -> Result<()> {
        manifest.outputs = self.written;
        manifest.finished_at = chrono::Utc::now().to_rfc3339();
        let text = serde_json::to_string_pretty(&manifest)? + "\n";
        fs::write(self.root.join(MANIFEST_FILE), text)?;
        Ok(())
    }
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn run(cli: Cli) -> i32 {
    let result = (|| -> Result<i32> {
        let config = RunConfig::load(cli.config.as_deref())?;
        match &cli.command {
            Command::Verify(a) => commands::verify(a, &config, cli.config.as_deref()),
            Command::Train(a) => commands::train(a, &config, cli.config.as_deref()),
            Command::Predict(a) => commands::predict(a),
            Command::Stats(a) => commands::stats(a),
        }
    })();
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            EXIT_INPUT
        }
    }
}
