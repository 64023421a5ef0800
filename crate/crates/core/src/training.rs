//! Baum-Welch (EM) training with per-iteration lower-bound diagnostics.
//!
//! Each iteration records three numbers for the new parameters `θ_t`:
//! the corpus log-likelihood `ln L(θ_t)`, the lower bound
//! `l(θ_t | θ_{t-1})` built from the previous posteriors, and the change in
//! log-likelihood. The bound satisfies
//! `ln L(θ_{t-1}) <= l(θ_t | θ_{t-1}) <= ln L(θ_t)`, which is where the
//! monotone ascent of EM comes from.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{HmmError, Result};
use crate::inference::{sequence_stats, Dense, PosteriorMarginals, SequenceStats};
use crate::model::{HmmModel, ObservationSequence, StateSpace, StochasticMatrix, StochasticVector};
use crate::numeric::{compensated_sum, xlogy, CompensatedSum};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingConfig {
    pub max_iterations: usize,
    /// Stop once `|Δ ln L| / (1 + |ln L|)` drops below this.
    pub rel_tolerance: f64,
    /// Pseudo-count added to every expected count before normalizing.
    pub smoothing_epsilon: f64,
    pub seed: u64,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            max_iterations: 200,
            rel_tolerance: 1e-6,
            smoothing_epsilon: 1e-9,
            seed: 0,
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iterations == 0 {
            return Err(HmmError::InvalidArgument(
                "max_iterations must be at least 1".into(),
            ));
        }
        if self.rel_tolerance.is_nan() || self.rel_tolerance <= 0.0 {
            return Err(HmmError::InvalidArgument(
                "rel_tolerance must be positive".into(),
            ));
        }
        if !(self.smoothing_epsilon >= 0.0 && self.smoothing_epsilon.is_finite()) {
            return Err(HmmError::InvalidArgument(
                "smoothing_epsilon must be a finite non-negative number".into(),
            ));
        }
        Ok(())
    }
}

/// Posterior-weighted sufficient statistics of a corpus.
#[derive(Debug, Clone, PartialEq)]
pub struct ExpectedCounts {
    pub initial: Vec<f64>,
    pub transition: Vec<Vec<f64>>,
    pub emission: Vec<Vec<f64>>,
    /// Total `ln Pr(Y | θ)` over the corpus.
    pub log_likelihood: f64,
    /// Entropy of the path posterior, summed over sequences. The E-step
    /// obtains it as `log_likelihood - Q(θ; counts)`.
    pub posterior_entropy: f64,
    pub sequences: usize,
    pub symbols: usize,
}

impl ExpectedCounts {
    pub fn zeros(num_states: usize, num_symbols: usize) -> Self {
        Self {
            initial: vec![0.0; num_states],
            transition: vec![vec![0.0; num_states]; num_states],
            emission: vec![vec![0.0; num_symbols]; num_states],
            log_likelihood: 0.0,
            posterior_entropy: 0.0,
            sequences: 0,
            symbols: 0,
        }
    }

    pub fn num_states(&self) -> usize {
        self.initial.len()
    }

    pub fn num_symbols(&self) -> usize {
        self.emission.first().map_or(0, Vec::len)
    }

    /// Counts contributed by one sequence with known posteriors.
    pub fn from_posteriors(post: &PosteriorMarginals, seq: &ObservationSequence) -> Self {
        let s = post.gamma[0].len();
        let num_symbols = 1 + seq.symbols().iter().copied().max().unwrap_or(0);
        let mut c = Self::zeros(s, num_symbols);
        c.initial.copy_from_slice(&post.gamma[0]);
        for x in &post.xi {
            for (row, xrow) in c.transition.iter_mut().zip(x) {
                for (acc, v) in row.iter_mut().zip(xrow) {
                    *acc += v;
                }
            }
        }
        for (g, &y) in post.gamma.iter().zip(seq.symbols()) {
            for (i, &p) in g.iter().enumerate() {
                c.emission[i][y] += p;
            }
        }
        let mut entropy = CompensatedSum::new();
        for &p in &post.gamma[0] {
            entropy.add(-xlogy(p, p));
        }
        for (k, x) in post.xi.iter().enumerate() {
            for (i, xrow) in x.iter().enumerate() {
                let g = post.gamma[k][i];
                for &p in xrow {
                    if p > 0.0 {
                        entropy.add(-p * (p / g).ln());
                    }
                }
            }
        }
        c.log_likelihood = post.log_likelihood;
        c.posterior_entropy = entropy.value();
        c.sequences = 1;
        c.symbols = seq.len();
        c
    }
}

fn check_corpus(model: &HmmModel, corpus: &[ObservationSequence]) -> Result<()> {
    if corpus.is_empty() {
        return Err(HmmError::EmptyCorpus);
    }
    corpus
        .iter()
        .try_for_each(|s| s.check_range(model.num_symbols()))
}

/// Sums per-sequence statistics in corpus order, so the result does not
/// depend on how the per-sequence work was scheduled.
fn reduce_in_order(
    model: &HmmModel,
    corpus: &[ObservationSequence],
    per_sequence: &[SequenceStats],
) -> ExpectedCounts {
    let s = model.num_states();
    let m = model.num_symbols();
    let mut total = ExpectedCounts::zeros(s, m);
    for st in per_sequence {
        let add = |a: &mut [f64], b: &[f64]| a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
        add(&mut total.initial, &st.initial);
        for (row, chunk) in total.transition.iter_mut().zip(st.transition.chunks(s)) {
            add(row, chunk);
        }
        for (row, chunk) in total.emission.iter_mut().zip(st.emission.chunks(m)) {
            add(row, chunk);
        }
    }
    total.log_likelihood = compensated_sum(per_sequence.iter().map(|c| c.log_likelihood));
    total.posterior_entropy = compensated_sum(per_sequence.iter().map(|c| c.posterior_entropy));
    total.sequences = corpus.len();
    total.symbols = corpus.iter().map(ObservationSequence::len).sum();
    total
}

fn collect_counts<I>(
    model: &HmmModel,
    corpus: &[ObservationSequence],
    results: I,
) -> std::result::Result<ExpectedCounts, (usize, HmmError)>
where
    I: IntoIterator<Item = Result<SequenceStats>>,
{
    let per_sequence = results
        .into_iter()
        .enumerate()
        .map(|(i, r)| r.map_err(|e| (i, e)))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    Ok(reduce_in_order(model, corpus, &per_sequence))
}

/// Fills in the path-posterior entropy from the equality case of Jensen's
/// bound, `H(q_θ) = ln L(θ) - Q(θ; counts_θ)`, which needs O(S² + S·M)
/// logarithms per E-step instead of one per `xi` entry.
/// [`elbo`] computes the entropy term by term instead.
fn with_tight_bound_entropy(model: &HmmModel, mut counts: ExpectedCounts) -> ExpectedCounts {
    counts.posterior_entropy =
        counts.log_likelihood - expected_complete_log_likelihood(model, &counts);
    counts
}

fn degenerate((sequence, err): (usize, HmmError)) -> HmmError {
    match err {
        HmmError::ZeroProbabilitySequence { .. } => HmmError::DegenerateCorpus { sequence },
        other => other,
    }
}

/// E-step: posterior-weighted counts over the corpus. Sequences are
/// processed in parallel.
pub fn e_step(model: &HmmModel, corpus: &[ObservationSequence]) -> Result<ExpectedCounts> {
    check_corpus(model, corpus)?;
    let d = Dense::of(model);
    let results: Vec<Result<SequenceStats>> = corpus
        .par_iter()
        .map(|s| sequence_stats(&d, model.num_symbols(), s.symbols(), false))
        .collect();
    collect_counts(model, corpus, results)
        .map(|c| with_tight_bound_entropy(model, c))
        .map_err(degenerate)
}

/// Single-threaded E-step; produces the same counts as [`e_step`].
pub fn e_step_sequential(
    model: &HmmModel,
    corpus: &[ObservationSequence],
) -> Result<ExpectedCounts> {
    check_corpus(model, corpus)?;
    let d = Dense::of(model);
    let results = corpus
        .iter()
        .map(|s| sequence_stats(&d, model.num_symbols(), s.symbols(), false));
    collect_counts(model, corpus, results)
        .map(|c| with_tight_bound_entropy(model, c))
        .map_err(degenerate)
}

fn normalize_row(
    counts: &[f64],
    epsilon: f64,
    matrix: &'static str,
    row: usize,
) -> Result<Vec<f64>> {
    let total: f64 = counts.iter().sum::<f64>() + counts.len() as f64 * epsilon;
    if total.is_nan() || total <= 0.0 {
        return Err(HmmError::DegenerateRow { matrix, row });
    }
    Ok(counts.iter().map(|c| (c + epsilon) / total).collect())
}

/// M-step: each row becomes `(counts + ε) / (row total + dim · ε)`.
pub fn m_step(
    counts: &ExpectedCounts,
    space: &StateSpace,
    config: &TrainingConfig,
) -> Result<HmmModel> {
    if counts.num_states() != space.num_states() {
        return Err(HmmError::DimensionMismatch {
            what: "expected-count states",
            expected: space.num_states(),
            found: counts.num_states(),
        });
    }
    if counts.num_symbols() != space.num_symbols() {
        return Err(HmmError::DimensionMismatch {
            what: "expected-count symbols",
            expected: space.num_symbols(),
            found: counts.num_symbols(),
        });
    }
    let eps = config.smoothing_epsilon;
    let initial = normalize_row(&counts.initial, eps, "initial", 0)?;
    let transition = counts
        .transition
        .iter()
        .enumerate()
        .map(|(i, r)| normalize_row(r, eps, "transition", i))
        .collect::<Result<Vec<_>>>()?;
    let emission = counts
        .emission
        .iter()
        .enumerate()
        .map(|(i, r)| normalize_row(r, eps, "emission", i))
        .collect::<Result<Vec<_>>>()?;
    let model = HmmModel::from_parts_unchecked(
        space.clone(),
        StochasticVector::from_vec_unchecked(initial),
        StochasticMatrix::from_rows_unchecked(transition),
        StochasticMatrix::from_rows_unchecked(emission),
    );
    debug_assert_eq!(model.validate(), Ok(()));
    Ok(model)
}

/// `E_q[ln Pr(X, Y | model)]` for the posterior `q` summarized by `counts`.
pub fn expected_complete_log_likelihood(model: &HmmModel, counts: &ExpectedCounts) -> f64 {
    let mut acc = CompensatedSum::new();
    for (c, p) in counts.initial.iter().zip(model.initial().iter()) {
        acc.add(xlogy(*c, *p));
    }
    for (crow, prow) in counts.transition.iter().zip(model.transition().rows()) {
        for (c, p) in crow.iter().zip(prow.iter()) {
            acc.add(xlogy(*c, *p));
        }
    }
    for (crow, prow) in counts.emission.iter().zip(model.emission().rows()) {
        for (c, p) in crow.iter().zip(prow.iter()) {
            acc.add(xlogy(*c, *p));
        }
    }
    acc.value()
}

/// Jensen lower bound on `ln Pr(corpus | model_at)` using the path
/// posterior of `posteriors_from`:
/// `E_q[ln Pr(X, Y | model_at)] + H(q)`. Computed from the factored
/// single-step and pairwise posteriors. Equal to the log-likelihood when
/// both models coincide.
pub fn elbo(
    model_at: &HmmModel,
    posteriors_from: &HmmModel,
    corpus: &[ObservationSequence],
) -> Result<f64> {
    if model_at.num_states() != posteriors_from.num_states() {
        return Err(HmmError::DimensionMismatch {
            what: "elbo model states",
            expected: posteriors_from.num_states(),
            found: model_at.num_states(),
        });
    }
    if model_at.num_symbols() != posteriors_from.num_symbols() {
        return Err(HmmError::DimensionMismatch {
            what: "elbo model symbols",
            expected: posteriors_from.num_symbols(),
            found: model_at.num_symbols(),
        });
    }
    check_corpus(posteriors_from, corpus)?;
    let d = Dense::of(posteriors_from);
    let results = corpus
        .iter()
        .map(|s| sequence_stats(&d, posteriors_from.num_symbols(), s.symbols(), true));
    let counts = collect_counts(posteriors_from, corpus, results).map_err(|(_, e)| e)?;
    Ok(expected_complete_log_likelihood(model_at, &counts) + counts.posterior_entropy)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub log_likelihood: f64,
    pub elbo_at_previous: f64,
    pub delta: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Converged,
    MaxIterations,
    Degenerate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingReport {
    pub iterations: Vec<IterationRecord>,
    pub final_model: HmmModel,
    pub stop_reason: StopReason,
    /// Log-likelihood of the starting parameters.
    pub initial_log_likelihood: f64,
    pub sequences: usize,
    pub symbols: usize,
}

impl TrainingReport {
    pub fn final_log_likelihood(&self) -> f64 {
        self.iterations
            .last()
            .map_or(self.initial_log_likelihood, |r| r.log_likelihood)
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialization cannot fail")
    }

    /// Writes the iteration trace as CSV with columns
    /// `iteration,log_likelihood,elbo_at_previous,delta`.
    pub fn write_trace_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        if self.iterations.is_empty() {
            w.write_record(["iteration", "log_likelihood", "elbo_at_previous", "delta"])?;
        }
        for r in &self.iterations {
            w.serialize(r)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// EM from `initial` until the relative improvement falls below
/// `config.rel_tolerance` or `config.max_iterations` updates were made.
///
/// A corpus that is impossible under `initial` is an error. Failures after
/// the first update end training with [`StopReason::Degenerate`] and keep
/// the last good parameters.
pub fn fit(
    initial: &HmmModel,
    corpus: &[ObservationSequence],
    config: &TrainingConfig,
) -> Result<TrainingReport> {
    config.validate()?;
    let space = initial.space().clone();
    let mut model = initial.clone();
    let mut counts = e_step(&model, corpus)?;
    let initial_log_likelihood = counts.log_likelihood;
    let mut iterations = Vec::new();
    let mut stop_reason = StopReason::MaxIterations;

    for t in 1..=config.max_iterations {
        let next = match m_step(&counts, &space, config) {
            Ok(m) => m,
            Err(e @ HmmError::DegenerateRow { .. }) => {
                if t == 1 {
                    return Err(e);
                }
                stop_reason = StopReason::Degenerate;
                break;
            }
            Err(e) => return Err(e),
        };
        let next_counts = match e_step(&next, corpus) {
            Ok(c) => c,
            Err(HmmError::DegenerateCorpus { .. }) => {
                stop_reason = StopReason::Degenerate;
                break;
            }
            Err(e) => return Err(e),
        };
        let elbo_at_previous =
            expected_complete_log_likelihood(&next, &counts) + counts.posterior_entropy;
        let log_likelihood = next_counts.log_likelihood;
        let delta = log_likelihood - counts.log_likelihood;
        iterations.push(IterationRecord {
            iteration: t,
            log_likelihood,
            elbo_at_previous,
            delta,
        });
        model = next;
        counts = next_counts;
        if delta.abs() / (1.0 + log_likelihood.abs()) < config.rel_tolerance {
            stop_reason = StopReason::Converged;
            break;
        }
    }

    Ok(TrainingReport {
        iterations,
        final_model: model,
        stop_reason,
        initial_log_likelihood,
        sequences: counts.sequences,
        symbols: counts.symbols,
    })
}
