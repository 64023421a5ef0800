//! Learning-curve experiments over the three training conditions.
//!
//! Seeds for a run are derived from each experiment seed `s` with
//! [`mix_seed`]:
//!
//! * training dialogs: the first `n` dialogs of the stream seeded with
//!   `mix_seed(s, 1)`, so larger training sets extend smaller ones;
//! * held-out dialogs: `mix_seed(s, 2)`, shared by every size and condition;
//! * EM restarts for training size `n`: base seed
//!   `mix_seed(mix_seed(s, 3), n)`, restart `r` uses `mix_seed(base, r)`.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dialog::{
    align_states, evaluate_model, generate_corpus, train_condition, Condition, DialogDomain,
    DialogRecord,
};
use crate::error::{HmmError, Result};
use crate::numeric::mix_seed;
use crate::training::TrainingConfig;

const TRAIN_STREAM: u64 = 1;
const HELDOUT_STREAM: u64 = 2;
const EM_STREAM: u64 = 3;

fn default_min_len() -> usize {
    5
}

fn default_max_len() -> usize {
    20
}

fn default_restarts() -> usize {
    10
}

fn default_conditions() -> Vec<Condition> {
    Condition::ALL.to_vec()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Domain file; relative paths are resolved against the config file.
    pub domain: PathBuf,
    pub training_sizes: Vec<usize>,
    pub heldout_dialogs: usize,
    #[serde(default = "default_restarts")]
    pub em_restarts: usize,
    pub experiment_seeds: Vec<u64>,
    /// `seed` is ignored here; EM seeds come from the experiment seeds.
    #[serde(default)]
    pub training: TrainingConfig,
    #[serde(default)]
    pub output_dir: PathBuf,
    #[serde(default = "default_min_len")]
    pub min_len: usize,
    #[serde(default = "default_max_len")]
    pub max_len: usize,
    #[serde(default = "default_conditions")]
    pub conditions: Vec<Condition>,
}

impl ExperimentConfig {
    pub fn from_json_str(s: &str) -> Result<Self> {
        let config: Self = serde_json::from_str(s)?;
        config.validate()?;
        Ok(config)
    }

    /// Reads a config and resolves `domain` and `output_dir` relative to the
    /// file's directory.
    pub fn read_json(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut config = Self::from_json_str(&std::fs::read_to_string(path)?)?;
        let base = path.parent().unwrap_or(Path::new(""));
        config.domain = base.join(&config.domain);
        config.output_dir = base.join(&config.output_dir);
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(HmmError::InvalidArgument(m.to_string()));
        if self.training_sizes.is_empty() || self.training_sizes[0] == 0 {
            return bad("training_sizes must be non-empty and positive");
        }
        if self.training_sizes.windows(2).any(|w| w[0] >= w[1]) {
            return bad("training_sizes must be strictly increasing");
        }
        if self.heldout_dialogs == 0 {
            return bad("heldout_dialogs must be at least 1");
        }
        if self.em_restarts == 0 {
            return bad("em_restarts must be at least 1");
        }
        if self.experiment_seeds.is_empty() {
            return bad("experiment_seeds must be non-empty");
        }
        if self.min_len == 0 || self.min_len > self.max_len {
            return bad("dialog lengths need 1 <= min_len <= max_len");
        }
        if self.conditions.is_empty() {
            return bad("conditions must be non-empty");
        }
        self.training.validate()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CurveRow {
    pub condition: Condition,
    pub train_dialogs: usize,
    pub seed: u64,
    pub normalized_log_likelihood: Option<f64>,
    pub tracking_accuracy: Option<f64>,
    pub error: Option<String>,
}

pub const CURVE_COLUMNS: [&str; 6] = [
    "condition",
    "train_dialogs",
    "seed",
    "normalized_log_likelihood",
    "tracking_accuracy",
    "error",
];

struct SeedData {
    train: Vec<DialogRecord>,
    heldout: Vec<DialogRecord>,
}

fn run_cell(
    domain: &DialogDomain,
    config: &ExperimentConfig,
    data: &SeedData,
    seed: u64,
    size: usize,
    condition: Condition,
) -> Result<(f64, f64)> {
    let train = &data.train[..size];
    let training = TrainingConfig {
        seed: mix_seed(mix_seed(seed, EM_STREAM), size as u64),
        ..config.training.clone()
    };
    let trained = train_condition(
        condition,
        train,
        domain.space(),
        &training,
        config.em_restarts,
    )?;
    let model = match condition {
        Condition::Em => align_states(&trained.model, train)?,
        _ => trained.model,
    };
    let eval = evaluate_model(&model, &data.heldout)?;
    Ok((eval.normalized_log_likelihood, eval.tracking_accuracy))
}

/// Runs every (condition, training size, seed) cell. Cells run in parallel;
/// rows come back sorted by condition name, size and seed. A failing cell
/// becomes a row with `error` set.
pub fn run_curve(domain: &DialogDomain, config: &ExperimentConfig) -> Result<Vec<CurveRow>> {
    config.validate()?;
    let max_size = *config.training_sizes.last().expect("validated non-empty");
    let data: BTreeMap<u64, SeedData> = config
        .experiment_seeds
        .par_iter()
        .map(|&seed| {
            let train = generate_corpus(
                domain,
                max_size,
                config.min_len,
                config.max_len,
                mix_seed(seed, TRAIN_STREAM),
            )?;
            let heldout = generate_corpus(
                domain,
                config.heldout_dialogs,
                config.min_len,
                config.max_len,
                mix_seed(seed, HELDOUT_STREAM),
            )?;
            Ok((seed, SeedData { train, heldout }))
        })
        .collect::<Result<_>>()?;

    let mut cells = Vec::new();
    for &condition in &config.conditions {
        for &size in &config.training_sizes {
            for &seed in &config.experiment_seeds {
                cells.push((condition, size, seed));
            }
        }
    }
    cells.sort_unstable();
    cells.dedup();

    Ok(cells
        .into_par_iter()
        .map(|(condition, size, seed)| {
            let result = run_cell(domain, config, &data[&seed], seed, size, condition);
            let (nll, acc, error) = match result {
                Ok((nll, acc)) => (Some(nll), Some(acc), None),
                Err(e) => (None, None, Some(e.to_string())),
            };
            CurveRow {
                condition,
                train_dialogs: size,
                seed,
                normalized_log_likelihood: nll,
                tracking_accuracy: acc,
                error,
            }
        })
        .collect())
}

fn format_float(x: Option<f64>) -> String {
    // Display gives the shortest round-trip form and "-inf" for impossible data.
    x.map(|v| v.to_string()).unwrap_or_default()
}

pub fn write_curve_csv<W: Write>(writer: W, rows: &[CurveRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(CURVE_COLUMNS)?;
    for r in rows {
        w.write_record([
            r.condition.as_str().to_string(),
            r.train_dialogs.to_string(),
            r.seed.to_string(),
            format_float(r.normalized_log_likelihood),
            format_float(r.tracking_accuracy),
            r.error.clone().unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Mean held-out normalized log-likelihood per (condition, size), over the
/// rows without errors.
pub fn mean_curve(rows: &[CurveRow]) -> BTreeMap<(Condition, usize), f64> {
    let mut acc: BTreeMap<(Condition, usize), (f64, usize)> = BTreeMap::new();
    for r in rows {
        if let Some(v) = r.normalized_log_likelihood {
            let e = acc.entry((r.condition, r.train_dialogs)).or_default();
            e.0 += v;
            e.1 += 1;
        }
    }
    acc.into_iter()
        .map(|(k, (s, n))| (k, s / n as f64))
        .collect()
}
