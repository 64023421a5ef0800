//! Discrete hidden-Markov-model toolkit: scaled forward-backward inference,
//! Viterbi decoding, Baum-Welch training with lower-bound diagnostics, and a
//! synthetic dialog-state-tracking simulator for learning-curve experiments.

pub mod dialog;
pub mod error;
pub mod experiment;
pub mod inference;
pub mod model;
pub mod numeric;
pub mod training;

pub use dialog::{
    align_states, disagreement_rate, evaluate_model, generate_corpus, read_corpus,
    read_corpus_file, supervised_counts, track_beliefs, train_condition, write_corpus,
    write_corpus_file, BeliefState, Condition, ConfusionChannel, DialogDomain, DialogRecord,
    EvaluationResult, TrainedCondition,
};
pub use error::{HmmError, Result, Violation, ViolationKind};
pub use experiment::{
    mean_curve, run_curve, write_curve_csv, CurveRow, ExperimentConfig, CURVE_COLUMNS,
};
pub use inference::{
    backward, forward, posteriors, posteriors_with_params, sequence_log_likelihood, viterbi_decode,
    PosteriorMarginals, ScaledBackward, ScaledForward, VITERBI_TIE_TOLERANCE,
};
pub use model::{
    random_model, uniform_model, validate_model, HmmModel, ModelParams, ObservationSequence,
    StatePath, StateSpace, StochasticMatrix, StochasticVector,
};
pub use numeric::{mix_seed, splitmix64};
pub use training::{
    e_step, e_step_sequential, elbo, expected_complete_log_likelihood, fit, m_step, ExpectedCounts,
    IterationRecord, StopReason, TrainingConfig, TrainingReport,
};
