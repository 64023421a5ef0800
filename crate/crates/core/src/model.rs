//! HMM parameter containers and the sequence types shared by every other module.
//!
//! Probabilities are kept in linear space here. The model file is a JSON
//! document with the fields `num_states`, `num_symbols`, optional
//! `state_labels` / `symbol_labels`, `initial`, `transition` and `emission`.
//! Floats are written in shortest round-trip form and parsed with correct
//! rounding, so a save/load cycle is bit-exact.

use std::collections::HashSet;
use std::fs;
use std::ops::{Deref, Index};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{HmmError, Result, Violation, ViolationKind};

/// Absolute tolerance on the sum of a probability vector.
pub const STOCHASTIC_TOLERANCE: f64 = 1e-9;

/// Lower end of the uniform draws used by [`random_model`].
pub const RANDOM_INIT_FLOOR: f64 = 1e-3;

/// Sizes (and optional names) of the hidden-state and symbol alphabets.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StateSpace {
    num_states: usize,
    num_symbols: usize,
    state_labels: Option<Vec<String>>,
    symbol_labels: Option<Vec<String>>,
}

impl StateSpace {
    pub fn new(num_states: usize, num_symbols: usize) -> Result<Self> {
        Self::with_labels(num_states, num_symbols, None, None)
    }

    pub fn with_labels(
        num_states: usize,
        num_symbols: usize,
        state_labels: Option<Vec<String>>,
        symbol_labels: Option<Vec<String>>,
    ) -> Result<Self> {
        let space = Self {
            num_states,
            num_symbols,
            state_labels,
            symbol_labels,
        };
        let violations = space.violations();
        if violations.is_empty() {
            Ok(space)
        } else {
            Err(HmmError::InvalidModel(violations))
        }
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_symbols(&self) -> usize {
        self.num_symbols
    }

    pub fn state_labels(&self) -> Option<&[String]> {
        self.state_labels.as_deref()
    }

    pub fn symbol_labels(&self) -> Option<&[String]> {
        self.symbol_labels.as_deref()
    }

    fn violations(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        if self.num_states == 0 {
            out.push(violation("num_states", ViolationKind::ZeroStates));
        }
        if self.num_symbols == 0 {
            out.push(violation("num_symbols", ViolationKind::ZeroSymbols));
        }
        check_labels(
            &mut out,
            "state_labels",
            self.state_labels.as_deref(),
            self.num_states,
        );
        check_labels(
            &mut out,
            "symbol_labels",
            self.symbol_labels.as_deref(),
            self.num_symbols,
        );
        out
    }
}

fn check_labels(out: &mut Vec<Violation>, field: &str, labels: Option<&[String]>, expected: usize) {
    let Some(labels) = labels else { return };
    if labels.len() != expected {
        out.push(violation(
            field,
            ViolationKind::WrongLength {
                expected,
                found: labels.len(),
            },
        ));
    }
    let mut seen = HashSet::new();
    for (i, l) in labels.iter().enumerate() {
        if !seen.insert(l.as_str()) {
            out.push(violation(
                format!("{field}[{i}]"),
                ViolationKind::DuplicateLabel(l.clone()),
            ));
        }
    }
}

fn violation(location: impl Into<String>, kind: ViolationKind) -> Violation {
    Violation {
        location: location.into(),
        kind,
    }
}

fn check_probabilities(out: &mut Vec<Violation>, location: &str, entries: &[f64]) {
    for (j, &p) in entries.iter().enumerate() {
        let at = format!("{location}[{j}]");
        if !p.is_finite() {
            out.push(violation(at, ViolationKind::NotFinite(p)));
        } else if p < 0.0 {
            out.push(violation(at, ViolationKind::NegativeProbability(p)));
        } else if p > 1.0 {
            out.push(violation(at, ViolationKind::ProbabilityAboveOne(p)));
        }
    }
    let sum: f64 = entries.iter().sum();
    if sum.is_finite() && (sum - 1.0).abs() > STOCHASTIC_TOLERANCE {
        out.push(violation(location, ViolationKind::BadRowSum(sum)));
    }
}

/// A probability vector: entries in `[0, 1]` summing to one within
/// [`STOCHASTIC_TOLERANCE`].
#[derive(Debug, Clone, PartialEq)]
pub struct StochasticVector(Vec<f64>);

impl StochasticVector {
    pub fn new(entries: Vec<f64>) -> Result<Self> {
        let mut v = Vec::new();
        if entries.is_empty() {
            v.push(violation(
                "vector",
                ViolationKind::WrongLength {
                    expected: 1,
                    found: 0,
                },
            ));
        }
        check_probabilities(&mut v, "vector", &entries);
        if v.is_empty() {
            Ok(Self(entries))
        } else {
            Err(HmmError::InvalidModel(v))
        }
    }

    pub fn uniform(dimension: usize) -> Self {
        assert!(
            dimension > 0,
            "uniform distribution needs at least one entry"
        );
        Self(vec![1.0 / dimension as f64; dimension])
    }

    /// Rescales non-negative weights to sum to one.
    pub fn normalized(weights: &[f64]) -> Result<Self> {
        let total: f64 = weights.iter().sum();
        if !(total > 0.0 && total.is_finite()) || weights.iter().any(|&w| w < 0.0) {
            return Err(HmmError::InvalidArgument(format!(
                "cannot normalize weights with total {total}"
            )));
        }
        Self::new(weights.iter().map(|w| w / total).collect())
    }

    pub(crate) fn from_vec_unchecked(entries: Vec<f64>) -> Self {
        Self(entries)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl Deref for StochasticVector {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

/// Row-stochastic matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct StochasticMatrix {
    rows: Vec<StochasticVector>,
}

impl StochasticMatrix {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        let mut v = Vec::new();
        check_matrix(
            &mut v,
            "matrix",
            &rows,
            rows.len(),
            rows.first().map_or(0, Vec::len),
        );
        if rows.is_empty() {
            v.push(violation(
                "matrix",
                ViolationKind::WrongLength {
                    expected: 1,
                    found: 0,
                },
            ));
        }
        if v.is_empty() {
            Ok(Self::from_rows_unchecked(rows))
        } else {
            Err(HmmError::InvalidModel(v))
        }
    }

    pub fn uniform(num_rows: usize, num_cols: usize) -> Self {
        Self {
            rows: (0..num_rows)
                .map(|_| StochasticVector::uniform(num_cols))
                .collect(),
        }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_rows_unchecked(
            (0..n)
                .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
                .collect(),
        )
    }

    pub(crate) fn from_rows_unchecked(rows: Vec<Vec<f64>>) -> Self {
        Self {
            rows: rows.into_iter().map(StochasticVector).collect(),
        }
    }

    pub fn rows(&self) -> &[StochasticVector] {
        &self.rows
    }

    pub fn num_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn num_cols(&self) -> usize {
        self.rows.first().map_or(0, |r| r.len())
    }

    pub fn to_vecs(&self) -> Vec<Vec<f64>> {
        self.rows.iter().map(|r| r.0.clone()).collect()
    }
}

impl Index<usize> for StochasticMatrix {
    type Output = [f64];

    fn index(&self, row: usize) -> &[f64] {
        &self.rows[row]
    }
}

fn check_matrix(
    out: &mut Vec<Violation>,
    name: &str,
    rows: &[Vec<f64>],
    n_rows: usize,
    n_cols: usize,
) {
    if rows.len() != n_rows {
        out.push(violation(
            name,
            ViolationKind::WrongLength {
                expected: n_rows,
                found: rows.len(),
            },
        ));
    }
    for (i, row) in rows.iter().enumerate() {
        let location = format!("{name} row {i}");
        if row.len() != n_cols {
            out.push(violation(
                location,
                ViolationKind::WrongLength {
                    expected: n_cols,
                    found: row.len(),
                },
            ));
            continue;
        }
        check_probabilities(out, &location, row);
    }
}

/// Unchecked parameter set, exactly as it appears in a model file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub num_states: usize,
    pub num_symbols: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub state_labels: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub symbol_labels: Option<Vec<String>>,
    pub initial: Vec<f64>,
    pub transition: Vec<Vec<f64>>,
    pub emission: Vec<Vec<f64>>,
}

/// Checks every model invariant. Violations are returned as data, each with
/// its row/index location.
pub fn validate_model(params: &ModelParams) -> std::result::Result<(), Vec<Violation>> {
    let space = StateSpace {
        num_states: params.num_states,
        num_symbols: params.num_symbols,
        state_labels: params.state_labels.clone(),
        symbol_labels: params.symbol_labels.clone(),
    };
    let mut out = space.violations();
    if params.initial.len() != params.num_states {
        out.push(violation(
            "initial",
            ViolationKind::WrongLength {
                expected: params.num_states,
                found: params.initial.len(),
            },
        ));
    } else {
        check_probabilities(&mut out, "initial", &params.initial);
    }
    check_matrix(
        &mut out,
        "transition",
        &params.transition,
        params.num_states,
        params.num_states,
    );
    check_matrix(
        &mut out,
        "emission",
        &params.emission,
        params.num_states,
        params.num_symbols,
    );
    if out.is_empty() {
        Ok(())
    } else {
        Err(out)
    }
}

/// A validated discrete HMM: initial distribution, transition matrix and
/// emission matrix over a [`StateSpace`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ModelParams", into = "ModelParams")]
pub struct HmmModel {
    space: StateSpace,
    initial: StochasticVector,
    transition: StochasticMatrix,
    emission: StochasticMatrix,
}

impl HmmModel {
    pub fn new(
        space: StateSpace,
        initial: Vec<f64>,
        transition: Vec<Vec<f64>>,
        emission: Vec<Vec<f64>>,
    ) -> Result<Self> {
        Self::from_params(ModelParams {
            num_states: space.num_states,
            num_symbols: space.num_symbols,
            state_labels: space.state_labels,
            symbol_labels: space.symbol_labels,
            initial,
            transition,
            emission,
        })
    }

    pub fn from_params(params: ModelParams) -> Result<Self> {
        validate_model(&params).map_err(HmmError::InvalidModel)?;
        Ok(Self {
            space: StateSpace {
                num_states: params.num_states,
                num_symbols: params.num_symbols,
                state_labels: params.state_labels,
                symbol_labels: params.symbol_labels,
            },
            initial: StochasticVector(params.initial),
            transition: StochasticMatrix::from_rows_unchecked(params.transition),
            emission: StochasticMatrix::from_rows_unchecked(params.emission),
        })
    }

    pub(crate) fn from_parts_unchecked(
        space: StateSpace,
        initial: StochasticVector,
        transition: StochasticMatrix,
        emission: StochasticMatrix,
    ) -> Self {
        Self {
            space,
            initial,
            transition,
            emission,
        }
    }

    pub fn to_params(&self) -> ModelParams {
        ModelParams {
            num_states: self.space.num_states,
            num_symbols: self.space.num_symbols,
            state_labels: self.space.state_labels.clone(),
            symbol_labels: self.space.symbol_labels.clone(),
            initial: self.initial.0.clone(),
            transition: self.transition.to_vecs(),
            emission: self.emission.to_vecs(),
        }
    }

    pub fn validate(&self) -> std::result::Result<(), Vec<Violation>> {
        validate_model(&self.to_params())
    }

    pub fn space(&self) -> &StateSpace {
        &self.space
    }

    pub fn num_states(&self) -> usize {
        self.space.num_states
    }

    pub fn num_symbols(&self) -> usize {
        self.space.num_symbols
    }

    pub fn initial(&self) -> &StochasticVector {
        &self.initial
    }

    pub fn transition(&self) -> &StochasticMatrix {
        &self.transition
    }

    pub fn emission(&self) -> &StochasticMatrix {
        &self.emission
    }

    /// Relabels hidden states: state `i` of the result is state
    /// `order[i]` of `self`.
    pub fn permute_states(&self, order: &[usize]) -> Result<Self> {
        let n = self.num_states();
        let mut seen = vec![false; n];
        if order.len() != n
            || order
                .iter()
                .any(|&s| s >= n || std::mem::replace(&mut seen[s], true))
        {
            return Err(HmmError::InvalidArgument(format!(
                "{order:?} is not a permutation of {n} states"
            )));
        }
        let initial = order.iter().map(|&o| self.initial[o]).collect();
        let transition = order
            .iter()
            .map(|&oi| order.iter().map(|&oj| self.transition[oi][oj]).collect())
            .collect();
        let emission = order.iter().map(|&o| self.emission[o].to_vec()).collect();
        let state_labels = self
            .space
            .state_labels
            .as_ref()
            .map(|l| order.iter().map(|&o| l[o].clone()).collect());
        Ok(Self {
            space: StateSpace {
                state_labels,
                ..self.space.clone()
            },
            initial: StochasticVector(initial),
            transition: StochasticMatrix::from_rows_unchecked(transition),
            emission: StochasticMatrix::from_rows_unchecked(emission),
        })
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serialization cannot fail")
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
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

impl TryFrom<ModelParams> for HmmModel {
    type Error = HmmError;

    fn try_from(params: ModelParams) -> Result<Self> {
        Self::from_params(params)
    }
}

impl From<HmmModel> for ModelParams {
    fn from(model: HmmModel) -> Self {
        model.to_params()
    }
}

/// Every distribution in the model is uniform.
pub fn uniform_model(space: &StateSpace) -> HmmModel {
    let n = space.num_states;
    HmmModel {
        space: space.clone(),
        initial: StochasticVector::uniform(n),
        transition: StochasticMatrix::uniform(n, n),
        emission: StochasticMatrix::uniform(n, space.num_symbols),
    }
}

/// Seeded random initialization. Each distribution is a vector of
/// independent uniform(`RANDOM_INIT_FLOOR`, 1) draws, normalized, so every
/// entry is strictly positive. Draw order: initial, transition rows,
/// emission rows.
pub fn random_model(space: &StateSpace, seed: u64) -> HmmModel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draw_row = |len: usize| {
        let w: Vec<f64> = (0..len)
            .map(|_| rng.random_range(RANDOM_INIT_FLOOR..1.0))
            .collect();
        let total: f64 = w.iter().sum();
        w.into_iter().map(|x| x / total).collect::<Vec<f64>>()
    };
    let n = space.num_states;
    let initial = StochasticVector(draw_row(n));
    let transition = StochasticMatrix::from_rows_unchecked((0..n).map(|_| draw_row(n)).collect());
    let emission = StochasticMatrix::from_rows_unchecked(
        (0..n).map(|_| draw_row(space.num_symbols)).collect(),
    );
    HmmModel {
        space: space.clone(),
        initial,
        transition,
        emission,
    }
}

/// One dialog's observed symbols. Never empty.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<usize>", into = "Vec<usize>")]
pub struct ObservationSequence(Vec<usize>);

impl ObservationSequence {
    pub fn new(symbols: Vec<usize>) -> Result<Self> {
        if symbols.is_empty() {
            return Err(HmmError::EmptySequence);
        }
        Ok(Self(symbols))
    }

    pub fn symbols(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn check_range(&self, num_symbols: usize) -> Result<()> {
        match self.0.iter().position(|&s| s >= num_symbols) {
            Some(position) => Err(HmmError::SymbolOutOfRange {
                position,
                symbol: self.0[position],
                num_symbols,
            }),
            None => Ok(()),
        }
    }
}

impl TryFrom<Vec<usize>> for ObservationSequence {
    type Error = HmmError;

    fn try_from(v: Vec<usize>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<ObservationSequence> for Vec<usize> {
    fn from(s: ObservationSequence) -> Self {
        s.0
    }
}

/// A hidden-state trajectory.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct StatePath(Vec<usize>);

impl StatePath {
    pub fn new(states: Vec<usize>) -> Self {
        Self(states)
    }

    pub fn states(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn check_range(&self, num_states: usize) -> Result<()> {
        match self.0.iter().position(|&s| s >= num_states) {
            Some(position) => Err(HmmError::StateOutOfRange {
                position,
                state: self.0[position],
                num_states,
            }),
            None => Ok(()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn params(transition: Vec<Vec<f64>>, emission: Vec<Vec<f64>>) -> ModelParams {
        ModelParams {
            num_states: 2,
            num_symbols: 2,
            state_labels: None,
            symbol_labels: None,
            initial: vec![0.5, 0.5],
            transition,
            emission,
        }
    }

    #[test]
    fn valid_two_state_model() {
        let p = params(
            vec![vec![0.7, 0.3], vec![0.4, 0.6]],
            vec![vec![0.9, 0.1], vec![0.2, 0.8]],
        );
        assert_eq!(validate_model(&p), Ok(()));
    }

    #[test]
    fn reports_bad_row_sum_with_location() {
        let p = params(
            vec![vec![0.5, 0.6], vec![0.4, 0.6]],
            vec![vec![0.9, 0.1], vec![0.2, 0.8]],
        );
        let v = validate_model(&p).unwrap_err();
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].to_string(), "transition row 0 sums to 1.1");
    }

    #[test]
    fn reports_negative_probability() {
        let p = params(
            vec![vec![0.7, 0.3], vec![0.4, 0.6]],
            vec![vec![1.1, -0.1], vec![0.2, 0.8]],
        );
        let v = validate_model(&p).unwrap_err();
        assert!(v.iter().any(|x| x.location == "emission row 0[1]"
            && matches!(x.kind, ViolationKind::NegativeProbability(_))));
        assert!(v
            .iter()
            .any(|x| x.to_string().contains("negative probability")));
    }

    #[test]
    fn reports_dimension_errors() {
        let mut p = params(
            vec![vec![0.7, 0.3]],
            vec![vec![0.9, 0.1], vec![0.2, 0.8, 0.0]],
        );
        p.state_labels = Some(vec!["a".into(), "a".into()]);
        let v = validate_model(&p).unwrap_err();
        assert!(v.iter().any(|x| x.location == "transition"));
        assert!(v.iter().any(|x| x.location == "emission row 1"));
        assert!(v
            .iter()
            .any(|x| matches!(&x.kind, ViolationKind::DuplicateLabel(l) if l == "a")));
    }

    #[test]
    fn duplicate_labels_rejected_at_parse() {
        let json = r#"{"num_states":2,"num_symbols":1,"state_labels":["x","x"],
            "initial":[0.5,0.5],"transition":[[0.5,0.5],[0.5,0.5]],"emission":[[1.0],[1.0]]}"#;
        let err = HmmModel::from_json_str(json).unwrap_err();
        assert!(err.to_string().contains("duplicate label"), "{err}");
    }

    #[test]
    fn uniform_models() {
        let m = uniform_model(&StateSpace::new(2, 2).unwrap());
        assert_eq!(m.initial().as_slice(), &[0.5, 0.5]);
        assert_eq!(m.transition().to_vecs(), vec![vec![0.5, 0.5]; 2]);
        assert_eq!(m.emission().to_vecs(), vec![vec![0.5, 0.5]; 2]);

        let m = uniform_model(&StateSpace::new(1, 3).unwrap());
        assert_eq!(m.initial().as_slice(), &[1.0]);
        assert_eq!(m.transition().to_vecs(), vec![vec![1.0]]);
        assert_eq!(m.emission().to_vecs(), vec![vec![1.0 / 3.0; 3]]);

        let m = uniform_model(&StateSpace::new(4, 2).unwrap());
        assert_eq!(m.validate(), Ok(()));
    }

    #[test]
    fn random_model_is_deterministic_and_valid() {
        let space = StateSpace::new(2, 2).unwrap();
        let a = random_model(&space, 42);
        let b = random_model(&space, 42);
        assert_eq!(a.to_params(), b.to_params());
        assert_ne!(a.to_params(), random_model(&space, 43).to_params());
        assert_eq!(a.validate(), Ok(()));
    }

    #[test]
    fn random_model_strictly_inside_unit_interval() {
        let space = StateSpace::new(3, 4).unwrap();
        let mut min_entry = f64::INFINITY;
        for seed in 0..1000 {
            let p = random_model(&space, seed).to_params();
            for &x in p
                .initial
                .iter()
                .chain(p.transition.iter().flatten())
                .chain(p.emission.iter().flatten())
            {
                assert!(x < 1.0);
                min_entry = min_entry.min(x);
            }
        }
        assert!(min_entry > 0.0);
    }

    #[test]
    fn permute_states_relabels_consistently() {
        let m = random_model(&StateSpace::new(3, 2).unwrap(), 5);
        let p = m.permute_states(&[2, 0, 1]).unwrap();
        assert_eq!(p.initial()[0], m.initial()[2]);
        assert_eq!(p.transition()[0][1], m.transition()[2][0]);
        assert_eq!(p.emission()[1], m.emission()[0]);
        assert!(m.permute_states(&[0, 0, 1]).is_err());
    }

    #[test]
    fn empty_observation_sequence_rejected() {
        assert!(ObservationSequence::new(vec![]).is_err());
        assert!(serde_json::from_str::<ObservationSequence>("[]").is_err());
        let s = ObservationSequence::new(vec![0, 3]).unwrap();
        assert!(matches!(
            s.check_range(3),
            Err(HmmError::SymbolOutOfRange { position: 1, .. })
        ));
    }

    fn space_strategy() -> impl Strategy<Value = (usize, usize, u64)> {
        (1usize..6, 1usize..6, any::<u64>())
    }

    proptest! {
        #[test]
        fn normalized_vectors_are_stochastic(w in prop::collection::vec(0.0f64..1e6, 1..20)) {
            prop_assume!(w.iter().sum::<f64>() > 0.0);
            let v = StochasticVector::normalized(&w).unwrap();
            let s: f64 = v.iter().sum();
            prop_assert!((s - 1.0).abs() <= STOCHASTIC_TOLERANCE);
            prop_assert!(v.iter().all(|&x| (0.0..=1.0).contains(&x)));
        }

        #[test]
        fn constructed_models_validate((n, m, seed) in space_strategy()) {
            let space = StateSpace::new(n, m).unwrap();
            prop_assert_eq!(uniform_model(&space).validate(), Ok(()));
            prop_assert_eq!(random_model(&space, seed).validate(), Ok(()));
        }

        #[test]
        fn json_round_trip_is_bit_exact((n, m, seed) in space_strategy()) {
            let model = random_model(&StateSpace::new(n, m).unwrap(), seed);
            let back = HmmModel::from_json_str(&model.to_json_string()).unwrap();
            let (a, b) = (model.to_params(), back.to_params());
            let bits = |p: &ModelParams| -> Vec<u64> {
                p.initial.iter().chain(p.transition.iter().flatten()).chain(p.emission.iter().flatten())
                    .map(|x| x.to_bits()).collect()
            };
            prop_assert_eq!(bits(&a), bits(&b));
        }
    }
}
