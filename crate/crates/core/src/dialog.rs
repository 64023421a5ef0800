//! Synthetic dialog-state-tracking data and the three training conditions.
//!
//! A dialog is a hidden chain of user states drawn from a generating HMM;
//! each turn the recognizer reports a symbol drawn from the confusion row of
//! the true state. The "manual" transcription is the true state sequence,
//! the "automatic" one is the noisy recognizer output.
//!
//! File formats:
//! * corpus: one JSON object per line, `{"true_states": [...], "observed": [...]}`
//! * domain: `{"model": <model file>, "confusion": [[...], ...]}`, where the
//!   model's emission matrix must equal the confusion matrix.

use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{HmmError, Result};
use crate::inference::forward;
use crate::model::{
    HmmModel, ObservationSequence, StatePath, StateSpace, StochasticMatrix, StochasticVector,
};
use crate::numeric::{argmax, compensated_sum, mix_seed, sample_categorical};
use crate::training::{fit, m_step, ExpectedCounts, TrainingConfig, TrainingReport};

/// Noisy recognizer: row `i` is the distribution of the reported symbol
/// when the true user state is `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfusionChannel {
    confusion: StochasticMatrix,
}

impl ConfusionChannel {
    pub fn new(confusion: StochasticMatrix) -> Self {
        Self { confusion }
    }

    pub fn identity(n: usize) -> Self {
        Self::new(StochasticMatrix::identity(n))
    }

    /// Square channel that keeps the true symbol with probability
    /// `1 - error_rate` and otherwise reports one of the other symbols
    /// uniformly.
    pub fn symmetric(n: usize, error_rate: f64) -> Result<Self> {
        if n == 0 || !(0.0..=1.0).contains(&error_rate) || (n == 1 && error_rate > 0.0) {
            return Err(HmmError::InvalidArgument(format!(
                "no symmetric channel with {n} symbols and error rate {error_rate}"
            )));
        }
        let off = if n > 1 {
            error_rate / (n - 1) as f64
        } else {
            0.0
        };
        let rows = (0..n)
            .map(|i| {
                (0..n)
                    .map(|j| if i == j { 1.0 - error_rate } else { off })
                    .collect()
            })
            .collect();
        Ok(Self::new(StochasticMatrix::new(rows)?))
    }

    pub fn confusion(&self) -> &StochasticMatrix {
        &self.confusion
    }

    /// One minus the mean diagonal mass.
    pub fn error_rate(&self) -> f64 {
        let d = self.confusion.num_rows().min(self.confusion.num_cols());
        let diag: f64 = (0..d).map(|i| self.confusion[i][i]).sum();
        1.0 - diag / self.confusion.num_rows() as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DialogDomain {
    space: StateSpace,
    true_model: HmmModel,
    channel: ConfusionChannel,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DomainFile {
    model: HmmModel,
    confusion: Vec<Vec<f64>>,
}

impl DialogDomain {
    pub fn new(true_model: HmmModel, channel: ConfusionChannel) -> Result<Self> {
        let (rows, cols) = (channel.confusion.num_rows(), channel.confusion.num_cols());
        if rows != true_model.num_states() {
            return Err(HmmError::DimensionMismatch {
                what: "confusion rows",
                expected: true_model.num_states(),
                found: rows,
            });
        }
        if cols != true_model.num_symbols() {
            return Err(HmmError::DimensionMismatch {
                what: "confusion columns",
                expected: true_model.num_symbols(),
                found: cols,
            });
        }
        if true_model.emission() != channel.confusion() {
            return Err(HmmError::InvalidArgument(
                "model emission must equal the confusion matrix".into(),
            ));
        }
        Ok(Self {
            space: true_model.space().clone(),
            true_model,
            channel,
        })
    }

    /// Builds the generating model from chain dynamics plus a channel.
    pub fn from_dynamics(
        space: StateSpace,
        initial: Vec<f64>,
        transition: Vec<Vec<f64>>,
        channel: ConfusionChannel,
    ) -> Result<Self> {
        let model = HmmModel::new(space, initial, transition, channel.confusion().to_vecs())?;
        Self::new(model, channel)
    }

    /// Four user states, one symbol per state, 20% symmetric recognition
    /// error, sticky dynamics (0.7 self-transition).
    pub fn default_experiment() -> Self {
        let n = 4;
        let transition = (0..n)
            .map(|i| (0..n).map(|j| if i == j { 0.7 } else { 0.1 }).collect())
            .collect();
        Self::from_dynamics(
            StateSpace::new(n, n).expect("valid space"),
            vec![0.25; n],
            transition,
            ConfusionChannel::symmetric(n, 0.2).expect("valid channel"),
        )
        .expect("default domain is valid")
    }

    pub fn space(&self) -> &StateSpace {
        &self.space
    }

    pub fn true_model(&self) -> &HmmModel {
        &self.true_model
    }

    pub fn channel(&self) -> &ConfusionChannel {
        &self.channel
    }

    pub fn to_json_string(&self) -> String {
        let file = DomainFile {
            model: self.true_model.clone(),
            confusion: self.channel.confusion.to_vecs(),
        };
        serde_json::to_string_pretty(&file).expect("domain serialization cannot fail")
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let file: DomainFile = serde_json::from_str(s)?;
        let confusion = StochasticMatrix::new(file.confusion)?;
        Self::new(file.model, ConfusionChannel::new(confusion))
    }

    pub fn read_json(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json_str(&fs::read_to_string(path)?)
    }

    pub fn write_json(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut s = self.to_json_string();
        s.push('\n');
        fs::write(path, s)?;
        Ok(())
    }
}

/// One dialog: ground-truth user states and what the recognizer reported.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DialogRecord {
    pub true_states: StatePath,
    pub observed: ObservationSequence,
}

impl DialogRecord {
    pub fn new(true_states: StatePath, observed: ObservationSequence) -> Result<Self> {
        if true_states.len() != observed.len() {
            return Err(HmmError::DimensionMismatch {
                what: "dialog length",
                expected: observed.len(),
                found: true_states.len(),
            });
        }
        Ok(Self {
            true_states,
            observed,
        })
    }

    pub fn len(&self) -> usize {
        self.observed.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observed.is_empty()
    }

    pub fn check(&self, space: &StateSpace) -> Result<()> {
        self.true_states.check_range(space.num_states())?;
        self.observed.check_range(space.num_symbols())
    }
}

/// Samples dialogs from the domain. Lengths are uniform on
/// `[min_len, max_len]`. Dialogs are drawn one after another from a single
/// seeded stream, so a smaller corpus with the same seed is a prefix of a
/// larger one.
pub fn generate_corpus(
    domain: &DialogDomain,
    num_dialogs: usize,
    min_len: usize,
    max_len: usize,
    seed: u64,
) -> Result<Vec<DialogRecord>> {
    if min_len == 0 || min_len > max_len {
        return Err(HmmError::InvalidArgument(format!(
            "dialog lengths need 1 <= min_len <= max_len, got [{min_len}, {max_len}]"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let model = &domain.true_model;
    let confusion = domain.channel.confusion();
    let mut corpus = Vec::with_capacity(num_dialogs);
    for _ in 0..num_dialogs {
        let len = rng.random_range(min_len..=max_len);
        let mut states = Vec::with_capacity(len);
        let mut symbols = Vec::with_capacity(len);
        let mut state = sample_categorical(&mut rng, model.initial());
        for k in 0..len {
            if k > 0 {
                state = sample_categorical(&mut rng, &model.transition()[state]);
            }
            states.push(state);
            symbols.push(sample_categorical(&mut rng, &confusion[state]));
        }
        corpus.push(DialogRecord {
            true_states: StatePath::new(states),
            observed: ObservationSequence::new(symbols)?,
        });
    }
    Ok(corpus)
}

/// Fraction of turns where the reported symbol differs from the true state index.
pub fn disagreement_rate(corpus: &[DialogRecord]) -> f64 {
    let (mut differ, mut total) = (0usize, 0usize);
    for d in corpus {
        for (s, y) in d.true_states.states().iter().zip(d.observed.symbols()) {
            differ += usize::from(s != y);
            total += 1;
        }
    }
    if total == 0 {
        0.0
    } else {
        differ as f64 / total as f64
    }
}

/// Tracker output after one turn.
#[derive(Debug, Clone, PartialEq)]
pub struct BeliefState {
    pub distribution: StochasticVector,
    pub turn_index: usize,
}

impl BeliefState {
    /// Most probable hypothesis; ties go to the lowest state index.
    pub fn best_hypothesis(&self) -> usize {
        argmax(&self.distribution)
    }
}

/// Turn-by-turn filtered beliefs `Pr(X_k | Y_1..Y_k)`.
pub fn track_beliefs(model: &HmmModel, observed: &ObservationSequence) -> Result<Vec<BeliefState>> {
    let fwd = forward(model, observed)?;
    Ok(fwd
        .scaled_alpha
        .into_iter()
        .enumerate()
        .map(|(turn_index, row)| BeliefState {
            distribution: StochasticVector::from_vec_unchecked(row),
            turn_index,
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Condition {
    Automatic,
    Em,
    Manual,
}

impl Condition {
    pub const ALL: [Condition; 3] = [Condition::Automatic, Condition::Em, Condition::Manual];

    pub fn as_str(&self) -> &'static str {
        match self {
            Condition::Manual => "manual",
            Condition::Automatic => "automatic",
            Condition::Em => "em",
        }
    }
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Condition {
    type Err = HmmError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "manual" => Ok(Condition::Manual),
            "automatic" => Ok(Condition::Automatic),
            "em" => Ok(Condition::Em),
            other => Err(HmmError::InvalidArgument(format!(
                "unknown condition {other:?} (expected manual, automatic or em)"
            ))),
        }
    }
}

/// Complete-data counts from labelled sequences: initial state, state
/// bigrams and (state, symbol) pairs.
pub fn supervised_counts<'a, I>(space: &StateSpace, labelled: I) -> Result<ExpectedCounts>
where
    I: IntoIterator<Item = (&'a [usize], &'a [usize])>,
{
    let mut c = ExpectedCounts::zeros(space.num_states(), space.num_symbols());
    for (states, symbols) in labelled {
        if states.len() != symbols.len() || states.is_empty() {
            return Err(HmmError::DimensionMismatch {
                what: "labelled sequence length",
                expected: symbols.len(),
                found: states.len(),
            });
        }
        StatePath::new(states.to_vec()).check_range(space.num_states())?;
        ObservationSequence::new(symbols.to_vec())?.check_range(space.num_symbols())?;
        c.initial[states[0]] += 1.0;
        for w in states.windows(2) {
            c.transition[w[0]][w[1]] += 1.0;
        }
        for (&s, &y) in states.iter().zip(symbols) {
            c.emission[s][y] += 1.0;
        }
        c.sequences += 1;
        c.symbols += symbols.len();
    }
    Ok(c)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainedCondition {
    pub model: HmmModel,
    /// EM trace of the selected restart; `None` for the supervised conditions.
    pub report: Option<TrainingReport>,
    /// Index of the selected EM restart.
    pub restart: Option<usize>,
}

/// Trains one of the three compared systems.
///
/// * `manual`: supervised counts from the true states.
/// * `automatic`: supervised counts that treat the recognizer output as the
///   state sequence (needs one symbol per state).
/// * `em`: Baum-Welch on the observed symbols only, from `em_restarts`
///   random initializations; the restart with the highest training
///   log-likelihood wins (ties go to the earlier restart). Restart `r` is
///   initialized with seed `mix_seed(config.seed, r)`.
pub fn train_condition(
    condition: Condition,
    corpus: &[DialogRecord],
    space: &StateSpace,
    config: &TrainingConfig,
    em_restarts: usize,
) -> Result<TrainedCondition> {
    if corpus.is_empty() {
        return Err(HmmError::EmptyCorpus);
    }
    config.validate()?;
    corpus.iter().try_for_each(|d| d.check(space))?;
    match condition {
        Condition::Manual => {
            let counts = supervised_counts(
                space,
                corpus
                    .iter()
                    .map(|d| (d.true_states.states(), d.observed.symbols())),
            )?;
            Ok(supervised(m_step(&counts, space, config)?))
        }
        Condition::Automatic => {
            if space.num_states() != space.num_symbols() {
                return Err(HmmError::DimensionMismatch {
                    what: "automatic condition needs one symbol per state; symbols",
                    expected: space.num_states(),
                    found: space.num_symbols(),
                });
            }
            let counts = supervised_counts(
                space,
                corpus
                    .iter()
                    .map(|d| (d.observed.symbols(), d.observed.symbols())),
            )?;
            Ok(supervised(m_step(&counts, space, config)?))
        }
        Condition::Em => {
            if em_restarts == 0 {
                return Err(HmmError::InvalidArgument(
                    "em_restarts must be at least 1".into(),
                ));
            }
            let observed: Vec<ObservationSequence> =
                corpus.iter().map(|d| d.observed.clone()).collect();
            let reports = (0..em_restarts)
                .into_par_iter()
                .map(|r| {
                    let init = crate::model::random_model(space, mix_seed(config.seed, r as u64));
                    fit(&init, &observed, config)
                })
                .collect::<Result<Vec<_>>>()?;
            let mut best = 0;
            for (r, rep) in reports.iter().enumerate() {
                if rep.final_log_likelihood() > reports[best].final_log_likelihood() {
                    best = r;
                }
            }
            let report = reports.into_iter().nth(best).expect("at least one restart");
            Ok(TrainedCondition {
                model: report.final_model.clone(),
                report: Some(report),
                restart: Some(best),
            })
        }
    }
}

fn supervised(model: HmmModel) -> TrainedCondition {
    TrainedCondition {
        model,
        report: None,
        restart: None,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvaluationResult {
    /// Held-out log-likelihood per turn, in nats. Negative infinity when any
    /// dialog is impossible under the model.
    pub normalized_log_likelihood: f64,
    /// Fraction of turns whose most probable filtered state is the true one.
    /// Turns of impossible dialogs count as misses.
    pub tracking_accuracy: f64,
    /// Number of dialogs with zero probability under the model.
    pub impossible_dialogs: usize,
    pub dialogs: usize,
    pub turns: usize,
}

/// Scores a model on held-out dialogs.
pub fn evaluate_model(model: &HmmModel, heldout: &[DialogRecord]) -> Result<EvaluationResult> {
    if heldout.is_empty() {
        return Err(HmmError::EmptyCorpus);
    }
    heldout.iter().try_for_each(|d| d.check(model.space()))?;
    let per_dialog: Vec<(f64, usize)> = heldout
        .par_iter()
        .map(|d| match forward(model, &d.observed) {
            Ok(f) => {
                let hits = f
                    .scaled_alpha
                    .iter()
                    .zip(d.true_states.states())
                    .filter(|(row, &s)| argmax(row) == s)
                    .count();
                (f.log_likelihood, hits)
            }
            Err(_) => (f64::NEG_INFINITY, 0),
        })
        .collect();
    let turns: usize = heldout.iter().map(DialogRecord::len).sum();
    let total_ll = compensated_sum(per_dialog.iter().map(|p| p.0));
    let hits: usize = per_dialog.iter().map(|p| p.1).sum();
    Ok(EvaluationResult {
        normalized_log_likelihood: total_ll / turns as f64,
        tracking_accuracy: hits as f64 / turns as f64,
        impossible_dialogs: per_dialog
            .iter()
            .filter(|p| p.0 == f64::NEG_INFINITY)
            .count(),
        dialogs: heldout.len(),
        turns,
    })
}

/// Renames the hidden states of an unsupervised model to agree with the
/// labels in `corpus`: state `t` of the result is the learned state whose
/// filtered argmax most often coincides with true state `t`. Exhaustive
/// search over permutations up to 8 states, greedy matching beyond.
pub fn align_states(model: &HmmModel, corpus: &[DialogRecord]) -> Result<HmmModel> {
    let n = model.num_states();
    let mut agreement = vec![vec![0usize; n]; n];
    for d in corpus {
        d.check(model.space())?;
        if let Ok(f) = forward(model, &d.observed) {
            for (row, &t) in f.scaled_alpha.iter().zip(d.true_states.states()) {
                agreement[argmax(row)][t] += 1;
            }
        }
    }
    let order = if n <= 8 {
        best_permutation(&agreement)
    } else {
        greedy_matching(&agreement)
    };
    model.permute_states(&order)
}

/// `order[t]` = learned state assigned to true state `t`, maximizing
/// `sum_t agreement[order[t]][t]`. Permutations are visited in
/// lexicographic order and only a strictly better score replaces the
/// incumbent.
fn best_permutation(agreement: &[Vec<usize>]) -> Vec<usize> {
    fn visit(
        agreement: &[Vec<usize>],
        prefix: &mut Vec<usize>,
        used: &mut [bool],
        score: usize,
        best: &mut (usize, Vec<usize>),
    ) {
        let n = agreement.len();
        if prefix.len() == n {
            if best.1.is_empty() || score > best.0 {
                *best = (score, prefix.clone());
            }
            return;
        }
        let t = prefix.len();
        for s in 0..n {
            if !used[s] {
                used[s] = true;
                prefix.push(s);
                visit(agreement, prefix, used, score + agreement[s][t], best);
                prefix.pop();
                used[s] = false;
            }
        }
    }
    let mut best = (0, Vec::new());
    visit(
        agreement,
        &mut Vec::new(),
        &mut vec![false; agreement.len()],
        0,
        &mut best,
    );
    best.1
}

fn greedy_matching(agreement: &[Vec<usize>]) -> Vec<usize> {
    let n = agreement.len();
    let mut cells: Vec<(usize, usize, usize)> = (0..n)
        .flat_map(|s| (0..n).map(move |t| (agreement[s][t], s, t)))
        .collect();
    cells.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut order = vec![usize::MAX; n];
    let mut taken = vec![false; n];
    for (_, s, t) in cells {
        if order[t] == usize::MAX && !taken[s] {
            order[t] = s;
            taken[s] = true;
        }
    }
    order
}

pub fn write_corpus<W: Write>(mut writer: W, corpus: &[DialogRecord]) -> Result<()> {
    for d in corpus {
        serde_json::to_writer(&mut writer, d)?;
        writer.write_all(b"\n")?;
    }
    writer.flush()?;
    Ok(())
}

/// Reads a line-delimited corpus. Blank lines are skipped; errors carry the
/// 1-based line number.
pub fn read_corpus<R: BufRead>(reader: R) -> Result<Vec<DialogRecord>> {
    let mut corpus = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: DialogRecord = serde_json::from_str(&line).map_err(|e| HmmError::Parse {
            line: i + 1,
            message: e.to_string(),
        })?;
        if record.true_states.len() != record.observed.len() {
            return Err(HmmError::Parse {
                line: i + 1,
                message: format!(
                    "true_states has {} entries but observed has {}",
                    record.true_states.len(),
                    record.observed.len()
                ),
            });
        }
        corpus.push(record);
    }
    Ok(corpus)
}

pub fn read_corpus_file(path: impl AsRef<Path>) -> Result<Vec<DialogRecord>> {
    read_corpus(BufReader::new(fs::File::open(path)?))
}

pub fn write_corpus_file(path: impl AsRef<Path>, corpus: &[DialogRecord]) -> Result<()> {
    write_corpus(std::io::BufWriter::new(fs::File::create(path)?), corpus)
}
