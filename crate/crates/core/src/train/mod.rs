//! Semi-supervised training: run configuration, the α schedule, dataset
//! splitting, the epoch loop, evaluation, and checkpointing.
//!
//! Everything downstream of the seed is functional — shuffles and noise
//! streams are derived from `(seed, purpose, epoch, position)` rather than
//! from a mutable generator — so a run resumed from a checkpoint retraces
//! the uninterrupted trajectory bit for bit.

mod checkpoint;
mod runner;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint};
pub use runner::{run, RunArtifacts, RunReport};

use std::fmt;
use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::chem::parse_smiles;
use crate::juncture::decompose;
use crate::model::{
    encode_graph, encode_tree, objective_batch, predict_y, BatchItem, ModelConfig, ModelError,
    ModelState, Prepared,
};
use crate::par;
use crate::props::{LabelTable, NormStats, PropertyKind};
use crate::tensor::{adam_step, AdamState, Tape, Tensor, TensorError};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("dataset too small: {have} molecules where at least {need} are needed")]
    DatasetTooSmall { have: usize, need: usize },
    #[error("invalid config: {reason}")]
    InvalidConfig { reason: String },
    #[error("config parse error at line {line}: {reason}")]
    ConfigParse { line: usize, reason: String },
    #[error("corrupt checkpoint: {reason}")]
    CorruptCheckpoint { reason: String },
    #[error("checkpoint does not match this run: {reason}")]
    VersionMismatch { reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Training mode: `Semole` trains with a constant α from the start,
/// `SemolePretrained` holds α at zero and then ramps it, and
/// `SemoleSupervised` uses labeled molecules only.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum Mode {
    Semole,
    SemolePretrained,
    SemoleSupervised,
}

impl Mode {
    pub fn parse(text: &str) -> Option<Mode> {
        match text {
            "semole" => Some(Mode::Semole),
            "semole_pretrained" => Some(Mode::SemolePretrained),
            "semole_supervised" => Some(Mode::SemoleSupervised),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Mode::Semole => "semole",
            Mode::SemolePretrained => "semole_pretrained",
            Mode::SemoleSupervised => "semole_supervised",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Hyperparameters of one training run. Defaults follow the experimental
/// protocol (batch 16, lr 0.001, latent dim 56); `test_size` and `epochs`
/// are desk-scale defaults.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct RunConfig {
    pub batch_size: usize,
    pub lr: f64,
    pub z_dim: usize,
    pub hidden: usize,
    pub epochs: usize,
    pub alpha_max: f64,
    pub pretrain_epochs: usize,
    pub ramp_epochs: usize,
    pub label_fraction: f64,
    pub seed: u64,
    pub property: PropertyKind,
    pub mode: Mode,
    /// Molecules held out for the test split.
    pub test_size: usize,
    pub mpnn_rounds: usize,
    pub node_cap: usize,
    pub candidate_cap: usize,
}

impl Default for RunConfig {
    fn default() -> RunConfig {
        let model = ModelConfig::default();
        RunConfig {
            batch_size: 16,
            lr: 0.001,
            z_dim: model.z_dim,
            hidden: model.hidden,
            epochs: 30,
            alpha_max: 1.0,
            pretrain_epochs: 10,
            ramp_epochs: 10,
            label_fraction: 0.5,
            seed: 0,
            property: PropertyKind::LogP,
            mode: Mode::SemolePretrained,
            test_size: 200,
            mpnn_rounds: model.mpnn_rounds,
            node_cap: model.node_cap,
            candidate_cap: model.candidate_cap,
        }
    }
}

impl RunConfig {
    /// Applies one `key = value` assignment.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), String> {
        fn num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, String> {
            value
                .parse()
                .map_err(|_| format!("bad value {value:?} for {key}"))
        }
        match key {
            "batch_size" => self.batch_size = num(key, value)?,
            "lr" => self.lr = num(key, value)?,
            "z_dim" => self.z_dim = num(key, value)?,
            "hidden" => self.hidden = num(key, value)?,
            "epochs" => self.epochs = num(key, value)?,
            "alpha_max" => self.alpha_max = num(key, value)?,
            "pretrain_epochs" => self.pretrain_epochs = num(key, value)?,
            "ramp_epochs" => self.ramp_epochs = num(key, value)?,
            "label_fraction" => self.label_fraction = num(key, value)?,
            "seed" => self.seed = num(key, value)?,
            "test_size" => self.test_size = num(key, value)?,
            "mpnn_rounds" => self.mpnn_rounds = num(key, value)?,
            "node_cap" => self.node_cap = num(key, value)?,
            "candidate_cap" => self.candidate_cap = num(key, value)?,
            "property" => {
                self.property = PropertyKind::parse(value)
                    .ok_or_else(|| format!("unknown property {value:?} (molwt|logp|qed)"))?
            }
            "mode" => {
                self.mode = Mode::parse(value).ok_or_else(|| {
                    format!(
                        "unknown mode {value:?} (semole|semole_pretrained|semole_supervised)"
                    )
                })?
            }
            _ => return Err(format!("unknown config key {key:?}")),
        }
        Ok(())
    }

    /// Parses a flat `key = value` config text. Blank lines and lines
    /// starting with `#` are ignored.
    pub fn parse_text(text: &str) -> Result<RunConfig, TrainError> {
        let mut cfg = RunConfig::default();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let trimmed = raw.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let (key, value) = trimmed.split_once('=').ok_or(TrainError::ConfigParse {
                line,
                reason: format!("expected `key = value`, found {trimmed:?}"),
            })?;
            cfg.set(key.trim(), value.trim())
                .map_err(|reason| TrainError::ConfigParse { line, reason })?;
        }
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<RunConfig, TrainError> {
        RunConfig::parse_text(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |reason: String| Err(TrainError::InvalidConfig { reason });
        if self.batch_size == 0 {
            return bad("batch_size must be positive".into());
        }
        if !(self.lr > 0.0) {
            return bad(format!("lr must be positive, got {}", self.lr));
        }
        if self.z_dim == 0 || self.hidden == 0 || self.mpnn_rounds == 0 {
            return bad("z_dim, hidden, and mpnn_rounds must be positive".into());
        }
        if self.epochs == 0 {
            return bad("epochs must be positive".into());
        }
        if self.ramp_epochs == 0 {
            return bad("ramp_epochs must be positive".into());
        }
        if !(self.alpha_max >= 0.0) {
            return bad(format!("alpha_max must be non-negative, got {}", self.alpha_max));
        }
        if !(self.label_fraction > 0.0 && self.label_fraction <= 1.0) {
            return bad(format!(
                "label_fraction must lie in (0, 1], got {}",
                self.label_fraction
            ));
        }
        if self.node_cap == 0 || self.candidate_cap == 0 {
            return bad("node_cap and candidate_cap must be positive".into());
        }
        Ok(())
    }

    pub fn model_config(&self) -> ModelConfig {
        ModelConfig {
            z_dim: self.z_dim,
            hidden: self.hidden,
            mpnn_rounds: self.mpnn_rounds,
            node_cap: self.node_cap,
            candidate_cap: self.candidate_cap,
        }
    }

    /// True when the other config describes the same run apart from how
    /// long it trains (used when resuming from a checkpoint).
    pub fn same_run(&self, other: &RunConfig) -> bool {
        RunConfig { epochs: 0, ..*self } == RunConfig { epochs: 0, ..*other }
    }
}

/// Splitmix-style hash combining the run seed, a stream tag, and a
/// position into an independent stream seed.
pub(crate) fn mix(seed: u64, tag: u64, v: u64) -> u64 {
    let mut x = seed
        ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15)
        ^ v.wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

const TAG_SPLIT: u64 = 1;
const TAG_ORDER: u64 = 2;
const TAG_NOISE: u64 = 3;

/// Supervised-loss weight for a (zero-based) epoch.
///
/// `SemolePretrained` holds α at zero for `pretrain_epochs`, then ramps
/// linearly to `alpha_max` over `ramp_epochs`. The other modes use a
/// constant `alpha_max`.
pub fn alpha_schedule(epoch: usize, cfg: &RunConfig) -> f64 {
    match cfg.mode {
        Mode::Semole | Mode::SemoleSupervised => cfg.alpha_max,
        Mode::SemolePretrained => {
            if epoch < cfg.pretrain_epochs {
                0.0
            } else {
                let ramp = (epoch - cfg.pretrain_epochs + 1) as f64 / cfg.ramp_epochs as f64;
                cfg.alpha_max * ramp.min(1.0)
            }
        }
    }
}

/// Index split of a label table into train/val/test.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Split {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

/// Seeded shuffle split: `test_size` molecules held out for test, 5% of
/// the remainder for validation, the rest for training.
pub fn split_dataset(table: &LabelTable, cfg: &RunConfig) -> Result<Split, TrainError> {
    let n = table.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(mix(cfg.seed, TAG_SPLIT, 0)));

    if n <= cfg.test_size {
        return Err(TrainError::DatasetTooSmall {
            have: n,
            need: cfg.test_size + 2,
        });
    }
    let test: Vec<usize> = order[..cfg.test_size].to_vec();
    let rest = &order[cfg.test_size..];
    let n_val = (rest.len() as f64 * 0.05).round() as usize;
    let val: Vec<usize> = rest[..n_val].to_vec();
    let train: Vec<usize> = rest[n_val..].to_vec();
    if train.is_empty() {
        return Err(TrainError::DatasetTooSmall {
            have: n,
            need: cfg.test_size + n_val + 1,
        });
    }
    debug_assert!(train.iter().all(|i| !test.contains(i) && !val.contains(i)));
    Ok(Split { train, val, test })
}

/// One training molecule, preprocessed once.
pub struct PreparedItem {
    pub prep: Prepared,
    /// Normalized label if the molecule is in the observed subset.
    pub y: Option<f64>,
    pub smiles: String,
}

/// The preprocessed training set. Molecules that fail preparation (labels
/// outside the vocabulary, trees over the node cap) are counted and
/// dropped rather than aborting the run.
pub struct PreparedSet {
    pub items: Vec<PreparedItem>,
    pub skipped: usize,
}

pub fn prepare_training_set(
    state: &ModelState,
    table: &LabelTable,
    indices: &[usize],
) -> PreparedSet {
    let rows: Vec<(String, f64, bool)> = indices
        .iter()
        .map(|&i| {
            let (s, v, observed) = table.entry(i);
            (s.to_string(), v, observed)
        })
        .collect();
    let prepared: Vec<Option<PreparedItem>> = par::map_slice(&rows, |(smiles, v, observed)| {
        let mol = parse_smiles(smiles).ok()?;
        let prep = Prepared::new(state, &mol).ok()?;
        Some(PreparedItem {
            prep,
            y: observed.then_some(*v),
            smiles: smiles.clone(),
        })
    });
    let skipped = prepared.iter().filter(|p| p.is_none()).count();
    PreparedSet {
        items: prepared.into_iter().flatten().collect(),
        skipped,
    }
}

/// Adam states for every parameter tensor plus the learning rate.
pub struct Optimizer {
    states: Vec<AdamState>,
    lr: f64,
}

impl Optimizer {
    pub fn new(state: &ModelState, lr: f64) -> Optimizer {
        Optimizer {
            states: state
                .tensors()
                .iter()
                .map(|t| {
                    let (r, c) = t.shape();
                    AdamState::new(r, c)
                })
                .collect(),
            lr,
        }
    }

    pub fn from_states(states: Vec<AdamState>, lr: f64) -> Optimizer {
        Optimizer { states, lr }
    }

    pub fn states(&self) -> &[AdamState] {
        &self.states
    }

    pub fn step(&mut self, state: &mut ModelState, grads: &[Tensor]) -> Result<(), TensorError> {
        let tensors = state.tensors_mut();
        assert_eq!(tensors.len(), grads.len(), "gradient count mismatch");
        for ((param, grad), adam) in tensors.iter_mut().zip(grads).zip(&mut self.states) {
            adam_step(param, grad, adam, self.lr)?;
        }
        Ok(())
    }
}

/// Aggregated metrics of one epoch.
#[derive(Debug, Clone, Copy)]
pub struct EpochMetrics {
    pub alpha: f64,
    /// Mean batch objective.
    pub objective: f64,
    /// Mean squared supervised error over labeled items.
    pub mse: f64,
    /// Mean KL terms per molecule.
    pub kl_t: f64,
    pub kl_g: f64,
    pub n_batches: usize,
    pub n_labeled: usize,
    pub n_unlabeled: usize,
    /// Teacher-forced decision accuracies.
    pub label_accuracy: f64,
    pub cand_accuracy: f64,
}

/// Runs one epoch: a seeded shuffle of the training items (labeled and
/// unlabeled interleaved in proportion; unlabeled dropped entirely in
/// supervised mode), chunked into mini-batches, each followed by one Adam
/// step.
pub fn train_epoch(
    state: &mut ModelState,
    opt: &mut Optimizer,
    set: &PreparedSet,
    cfg: &RunConfig,
    epoch: usize,
) -> Result<EpochMetrics, TrainError> {
    let alpha = alpha_schedule(epoch, cfg);
    let mut stream: Vec<usize> = (0..set.items.len())
        .filter(|&i| cfg.mode != Mode::SemoleSupervised || set.items[i].y.is_some())
        .collect();
    stream.shuffle(&mut ChaCha8Rng::seed_from_u64(mix(
        cfg.seed,
        TAG_ORDER,
        epoch as u64,
    )));
    if stream.is_empty() {
        return Err(TrainError::DatasetTooSmall { have: 0, need: 1 });
    }

    let mut objective_sum = 0.0;
    let mut mse_weighted = 0.0;
    let mut kl_t_sum = 0.0;
    let mut kl_g_sum = 0.0;
    let mut n_batches = 0;
    let mut n_labeled = 0;
    let mut n_unlabeled = 0;
    let mut label_correct = 0;
    let mut label_total = 0;
    let mut cand_correct = 0;
    let mut cand_total = 0;

    for (b, chunk) in stream.chunks(cfg.batch_size).enumerate() {
        let items: Vec<BatchItem<'_>> = chunk
            .iter()
            .enumerate()
            .map(|(k, &i)| {
                let item = &set.items[i];
                let pos = (b * cfg.batch_size + k) as u64;
                BatchItem {
                    prep: &item.prep,
                    y: item.y,
                    seed: mix(cfg.seed, TAG_NOISE, ((epoch as u64) << 32) | pos),
                }
            })
            .collect();
        let stats = objective_batch(state, &items, alpha)?;
        opt.step(state, &stats.grads)?;

        objective_sum += stats.objective;
        mse_weighted += stats.mse * stats.n_labeled as f64;
        kl_t_sum += stats.kl_t * items.len() as f64;
        kl_g_sum += stats.kl_g * items.len() as f64;
        n_batches += 1;
        n_labeled += stats.n_labeled;
        n_unlabeled += stats.n_unlabeled;
        label_correct += stats.label_correct;
        label_total += stats.n_label_decisions;
        cand_correct += stats.cand_correct;
        cand_total += stats.n_cand_decisions;
    }

    let n_items = (n_labeled + n_unlabeled) as f64;
    Ok(EpochMetrics {
        alpha,
        objective: objective_sum / n_batches as f64,
        mse: if n_labeled > 0 {
            mse_weighted / n_labeled as f64
        } else {
            0.0
        },
        kl_t: kl_t_sum / n_items,
        kl_g: kl_g_sum / n_items,
        n_batches,
        n_labeled,
        n_unlabeled,
        label_accuracy: if label_total > 0 {
            label_correct as f64 / label_total as f64
        } else {
            0.0
        },
        cand_accuracy: if cand_total > 0 {
            cand_correct as f64 / cand_total as f64
        } else {
            0.0
        },
    })
}

/// Property-prediction error over a split.
#[derive(Debug, Clone, Copy)]
pub struct Evaluation {
    /// Mean absolute error in raw property units.
    pub mae: f64,
    /// Molecules evaluated.
    pub n: usize,
    /// Molecules skipped (could not be encoded with this vocabulary).
    pub skipped: usize,
}

/// Denormalized mean absolute error of the property head over the given
/// table rows. Deterministic: prediction uses the posterior means only.
pub fn evaluate_mae(
    state: &ModelState,
    table: &LabelTable,
    indices: &[usize],
    norm: &NormStats,
) -> Evaluation {
    let rows: Vec<(String, f64)> = indices
        .iter()
        .map(|&i| {
            let (s, v, _) = table.entry(i);
            (s.to_string(), v)
        })
        .collect();
    let errors: Vec<Option<f64>> = par::map_slice(&rows, |(smiles, y)| {
        let mol = parse_smiles(smiles).ok()?;
        let tape = Tape::new();
        let bound = state.bind(&tape);
        let enc = encode_graph(&bound, &mol).ok()?;
        let tree = decompose(&mol);
        let h_t = encode_tree(&bound, &tree).ok()?;
        let (mu_y, _) = predict_y(&bound, &h_t, &enc.h_g).ok()?;
        Some((norm.denormalize(mu_y.item()) - norm.denormalize(*y)).abs())
    });
    let mut sum = 0.0;
    let mut n = 0;
    let mut skipped = 0;
    for e in errors {
        match e {
            Some(v) => {
                sum += v;
                n += 1;
            }
            None => skipped += 1,
        }
    }
    Evaluation {
        mae: if n > 0 { sum / n as f64 } else { f64::NAN },
        n,
        skipped,
    }
}

pub const METRICS_HEADER: &str = "epoch,alpha,objective,mse,kl_t,kl_g,val_mae";

/// One row of the metrics log. `epoch` is 1-based in the file.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricsRow {
    pub epoch: usize,
    pub alpha: f64,
    pub objective: f64,
    pub mse: f64,
    pub kl_t: f64,
    pub kl_g: f64,
    pub val_mae: f64,
}

impl MetricsRow {
    pub fn to_csv(&self) -> String {
        format!(
            "{},{},{},{},{},{},{}",
            self.epoch, self.alpha, self.objective, self.mse, self.kl_t, self.kl_g, self.val_mae
        )
    }
}

/// Appends a row to the metrics CSV, writing the header first if the file
/// does not exist yet.
pub fn append_metrics(path: &Path, row: &MetricsRow) -> std::io::Result<()> {
    let mut file = std::fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)?;
    if file.metadata()?.len() == 0 {
        writeln!(file, "{METRICS_HEADER}")?;
    }
    writeln!(file, "{}", row.to_csv())
}

#[cfg(test)]
pub(crate) mod testdata {
    use std::io::Write;

    /// A small labeled corpus: varied acyclic and ring molecules, all
    /// within a shared cluster vocabulary.
    pub const SMILES: &[&str] = &[
        "CCO",
        "CCN",
        "CCC",
        "CC(C)O",
        "CC(C)N",
        "CCOC",
        "CCCO",
        "CC(=O)C",
        "CC(=O)N",
        "CC(=O)O",
        "CCCN",
        "CCCC",
        "COC",
        "CNC",
        "CCOCC",
        "CC(C)C",
        "OCCO",
        "NCCO",
        "NCCN",
        "CCCCO",
    ];

    pub fn write_label_csv(smiles: &[&str]) -> tempfile::NamedTempFile {
        let mut file = tempfile::NamedTempFile::new().unwrap();
        writeln!(file, "smiles").unwrap();
        for s in smiles {
            writeln!(file, "{s}").unwrap();
        }
        file.flush().unwrap();
        file
    }
}
