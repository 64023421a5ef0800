//! Forward-backward smoothing, sequence likelihood and Viterbi decoding.
//!
//! The forward and backward passes share one set of per-step scaling
//! factors `c_k` (the forward row sums before renormalization), so every
//! stored row stays O(1) regardless of sequence length and the
//! log-likelihood is `sum_k ln c_k`. Viterbi works in log space.

use crate::error::{HmmError, Result};
use crate::model::{HmmModel, ModelParams, ObservationSequence, StatePath};
use crate::numeric::{compensated_sum, xlogy, CompensatedSum};

/// Relative gap below which two Viterbi log scores count as tied. Paths that
/// tie in exact arithmetic can differ in the last bits once their terms are
/// summed in different orders; the tie-break rule must still see them as tied.
pub const VITERBI_TIE_TOLERANCE: f64 = 1e-12;

/// Whether log score `a` beats `b` by more than the tie tolerance.
fn strictly_better(a: f64, b: f64) -> bool {
    if a == b || !(a.is_finite() && b.is_finite()) {
        return a > b;
    }
    a - b > VITERBI_TIE_TOLERANCE * a.abs().max(b.abs())
}

fn tied(a: f64, b: f64) -> bool {
    !strictly_better(a, b) && !strictly_better(b, a)
}

/// Parameter tables copied into flat, cache-friendly buffers: `a` is
/// row-major `[i * s + j]`, emissions are stored symbol-major so that
/// `b_col(y)[j] = B_j(y)`.
#[derive(Debug, Clone)]
pub(crate) struct Dense {
    s: usize,
    initial: Vec<f64>,
    a: Vec<f64>,
    b_by_symbol: Vec<f64>,
}

impl Dense {
    pub(crate) fn of(model: &HmmModel) -> Self {
        Self::from_tables(
            model.initial(),
            (0..model.num_states()).map(|i| &model.transition()[i]),
            (0..model.num_states()).map(|i| &model.emission()[i]),
            model.num_symbols(),
        )
    }

    fn of_params(p: &ModelParams) -> Self {
        Self::from_tables(
            &p.initial,
            p.transition.iter().map(Vec::as_slice),
            p.emission.iter().map(Vec::as_slice),
            p.num_symbols,
        )
    }

    fn from_tables<'a>(
        initial: &[f64],
        transition: impl Iterator<Item = &'a [f64]>,
        emission: impl Iterator<Item = &'a [f64]>,
        num_symbols: usize,
    ) -> Self {
        let s = initial.len();
        let a: Vec<f64> = transition.flat_map(|r| r.iter().copied()).collect();
        let mut b_by_symbol = vec![0.0; num_symbols * s];
        for (j, row) in emission.enumerate() {
            for (y, &p) in row.iter().enumerate() {
                b_by_symbol[y * s + j] = p;
            }
        }
        Dense {
            s,
            initial: initial.to_vec(),
            a,
            b_by_symbol,
        }
    }

    #[inline]
    fn a_row(&self, i: usize) -> &[f64] {
        &self.a[i * self.s..(i + 1) * self.s]
    }

    #[inline]
    fn b_col(&self, y: usize) -> &[f64] {
        &self.b_by_symbol[y * self.s..(y + 1) * self.s]
    }
}

/// Scaled forward and backward rows of one sequence, stored flat
/// (`[k * s + i]`).
struct Passes {
    alpha: Vec<f64>,
    beta: Vec<f64>,
    factors: Vec<f64>,
}

fn forward_flat(d: &Dense, symbols: &[usize]) -> Result<(Vec<f64>, Vec<f64>)> {
    let s = d.s;
    let n = symbols.len();
    let mut alpha = vec![0.0; n * s];
    let mut factors = Vec::with_capacity(n);
    for (k, &y) in symbols.iter().enumerate() {
        let b = d.b_col(y);
        let (done, rest) = alpha.split_at_mut(k * s);
        let row = &mut rest[..s];
        if k == 0 {
            for j in 0..s {
                row[j] = d.initial[j] * b[j];
            }
        } else {
            let prev = &done[(k - 1) * s..];
            for (i, &p) in prev.iter().enumerate() {
                for (r, &a) in row.iter_mut().zip(d.a_row(i)) {
                    *r += p * a;
                }
            }
            for (r, &bj) in row.iter_mut().zip(b) {
                *r *= bj;
            }
        }
        let c: f64 = row.iter().sum();
        if !(c > 0.0 && c.is_finite()) {
            return Err(HmmError::ZeroProbabilitySequence { step: k + 1 });
        }
        row.iter_mut().for_each(|x| *x /= c);
        factors.push(c);
    }
    Ok((alpha, factors))
}

fn backward_flat(d: &Dense, symbols: &[usize], factors: &[f64]) -> Vec<f64> {
    let s = d.s;
    let n = symbols.len();
    let mut beta = vec![1.0; n * s];
    let mut weighted = vec![0.0; s];
    for k in (0..n.saturating_sub(1)).rev() {
        let b = d.b_col(symbols[k + 1]);
        let c_next = factors[k + 1];
        let (head, tail) = beta.split_at_mut((k + 1) * s);
        for ((w, &bj), &next) in weighted.iter_mut().zip(b).zip(&tail[..s]) {
            *w = bj * next;
        }
        for (i, out) in head[k * s..].iter_mut().enumerate() {
            let mut acc = 0.0;
            for (&a, &w) in d.a_row(i).iter().zip(&weighted) {
                acc += a * w;
            }
            *out = acc / c_next;
        }
    }
    beta
}

fn passes(d: &Dense, symbols: &[usize]) -> Result<Passes> {
    let (alpha, factors) = forward_flat(d, symbols)?;
    let beta = backward_flat(d, symbols, &factors);
    Ok(Passes {
        alpha,
        beta,
        factors,
    })
}

fn log_likelihood_of(factors: &[f64]) -> f64 {
    compensated_sum(factors.iter().map(|c| c.ln()))
}

fn rows(flat: Vec<f64>, s: usize) -> Vec<Vec<f64>> {
    flat.chunks(s).map(<[f64]>::to_vec).collect()
}

/// Smoothed marginal at step `k`, written into `out`.
#[inline]
fn gamma_into(p: &Passes, s: usize, k: usize, out: &mut [f64]) {
    let a = &p.alpha[k * s..(k + 1) * s];
    let b = &p.beta[k * s..(k + 1) * s];
    for ((o, &x), &y) in out.iter_mut().zip(a).zip(b) {
        *o = x * y;
    }
    let z: f64 = out.iter().sum();
    out.iter_mut().for_each(|x| *x /= z);
}

/// Unnormalized pairwise posterior for the transition `k -> k + 1`,
/// written row-major into `out`; returns its total.
#[inline]
fn xi_into(d: &Dense, p: &Passes, symbols: &[usize], k: usize, out: &mut [f64]) -> f64 {
    let s = d.s;
    let b = d.b_col(symbols[k + 1]);
    let beta_next = &p.beta[(k + 1) * s..(k + 2) * s];
    let mut total = 0.0;
    for i in 0..s {
        let a_i = p.alpha[k * s + i];
        let row = &mut out[i * s..(i + 1) * s];
        for (((o, &a), &bj), &bn) in row.iter_mut().zip(d.a_row(i)).zip(b).zip(beta_next) {
            *o = a_i * a * bj * bn;
            total += *o;
        }
    }
    total
}

/// Posterior-weighted statistics of one sequence, in flat layout.
#[derive(Debug, Clone)]
pub(crate) struct SequenceStats {
    pub initial: Vec<f64>,
    /// Row-major `s x s`.
    pub transition: Vec<f64>,
    /// Row-major `s x num_symbols`.
    pub emission: Vec<f64>,
    pub log_likelihood: f64,
    pub posterior_entropy: f64,
}

/// Expected counts of one sequence without materializing the full `xi`
/// tensor. Same formulas and multiplication order as [`posteriors`]. The
/// path-posterior entropy costs a logarithm per `xi` entry and is only
/// computed when `with_entropy` is set; it is NaN otherwise.
pub(crate) fn sequence_stats(
    d: &Dense,
    num_symbols: usize,
    symbols: &[usize],
    with_entropy: bool,
) -> Result<SequenceStats> {
    let s = d.s;
    let p = passes(d, symbols)?;
    let mut initial = vec![0.0; s];
    let mut transition = vec![0.0; s * s];
    let mut emission = vec![0.0; s * num_symbols];
    let mut entropy = CompensatedSum::new();

    let mut gamma = vec![0.0; s];
    let mut xi = vec![0.0; s * s];
    for (k, &y) in symbols.iter().enumerate() {
        gamma_into(&p, s, k, &mut gamma);
        if k == 0 {
            initial.copy_from_slice(&gamma);
            if with_entropy {
                for &g in &gamma {
                    entropy.add(-xlogy(g, g));
                }
            }
        }
        for (i, &g) in gamma.iter().enumerate() {
            emission[i * num_symbols + y] += g;
        }
        if k + 1 < symbols.len() {
            let z = xi_into(d, &p, symbols, k, &mut xi);
            for i in 0..s {
                let g = gamma[i];
                for j in 0..s {
                    let x = xi[i * s + j] / z;
                    transition[i * s + j] += x;
                    if with_entropy && x > 0.0 {
                        entropy.add(-x * (x / g).ln());
                    }
                }
            }
        }
    }
    Ok(SequenceStats {
        initial,
        transition,
        emission,
        log_likelihood: log_likelihood_of(&p.factors),
        posterior_entropy: if with_entropy {
            entropy.value()
        } else {
            f64::NAN
        },
    })
}

/// Output of the scaled forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct ScaledForward {
    /// Row `k` is the filtered distribution `Pr(X_k | Y_1..Y_k)`.
    pub scaled_alpha: Vec<Vec<f64>>,
    /// `c_k`, the row sum before step `k` was renormalized.
    pub scaling_factors: Vec<f64>,
    pub log_likelihood: f64,
}

impl ScaledForward {
    /// Unscaled joint `Pr(X_k = i, Y_1..Y_k)` for row `k` (0-based).
    /// Underflows to zero on long sequences; intended for checks.
    pub fn unscaled_row(&self, k: usize) -> Vec<f64> {
        let log_scale = compensated_sum(self.scaling_factors[..=k].iter().map(|c| c.ln()));
        let scale = log_scale.exp();
        self.scaled_alpha[k].iter().map(|a| a * scale).collect()
    }
}

/// Output of the backward pass, scaled with the forward factors.
#[derive(Debug, Clone, PartialEq)]
pub struct ScaledBackward {
    /// Row `k` is `Pr(Y_{k+1}..Y_N | X_k = i) / (c_{k+1} ... c_N)`; the final row is all ones.
    pub scaled_beta: Vec<Vec<f64>>,
}

impl ScaledBackward {
    /// Unscaled `Pr(Y_{k+1}..Y_N | X_k = i)` for row `k` (0-based).
    pub fn unscaled_row(&self, k: usize, scaling_factors: &[f64]) -> Vec<f64> {
        let log_scale = compensated_sum(scaling_factors[k + 1..].iter().map(|c| c.ln()));
        let scale = log_scale.exp();
        self.scaled_beta[k].iter().map(|b| b * scale).collect()
    }
}

/// Smoothed single-step and pairwise posteriors.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorMarginals {
    /// `gamma[k][i] = Pr(X_k = i | Y)`.
    pub gamma: Vec<Vec<f64>>,
    /// `xi[k][i][j] = Pr(X_k = i, X_{k+1} = j | Y)`, for `k < N - 1`.
    pub xi: Vec<Vec<Vec<f64>>>,
    pub log_likelihood: f64,
}

fn check_sequence(num_symbols: usize, seq: &ObservationSequence) -> Result<()> {
    seq.check_range(num_symbols)
}

fn posteriors_dense(d: &Dense, seq: &ObservationSequence) -> Result<PosteriorMarginals> {
    let symbols = seq.symbols();
    let s = d.s;
    let p = passes(d, symbols)?;
    let gamma = (0..symbols.len())
        .map(|k| {
            let mut row = vec![0.0; s];
            gamma_into(&p, s, k, &mut row);
            row
        })
        .collect();
    let mut flat = vec![0.0; s * s];
    let xi = (0..symbols.len().saturating_sub(1))
        .map(|k| {
            let z = xi_into(d, &p, symbols, k, &mut flat);
            flat.chunks(s)
                .map(|r| r.iter().map(|x| x / z).collect())
                .collect()
        })
        .collect();
    Ok(PosteriorMarginals {
        gamma,
        xi,
        log_likelihood: log_likelihood_of(&p.factors),
    })
}

/// Scaled forward pass. Fails with `ZeroProbabilitySequence` (1-based step)
/// when the observations are impossible under `model`.
pub fn forward(model: &HmmModel, seq: &ObservationSequence) -> Result<ScaledForward> {
    check_sequence(model.num_symbols(), seq)?;
    let (alpha, factors) = forward_flat(&Dense::of(model), seq.symbols())?;
    Ok(ScaledForward {
        scaled_alpha: rows(alpha, model.num_states()),
        log_likelihood: log_likelihood_of(&factors),
        scaling_factors: factors,
    })
}

/// Backward pass using the scaling factors of a forward pass on the same
/// model and sequence.
pub fn backward(
    model: &HmmModel,
    seq: &ObservationSequence,
    scaling_factors: &[f64],
) -> Result<ScaledBackward> {
    check_sequence(model.num_symbols(), seq)?;
    if scaling_factors.len() != seq.len() {
        return Err(HmmError::DimensionMismatch {
            what: "scaling factors",
            expected: seq.len(),
            found: scaling_factors.len(),
        });
    }
    let beta = backward_flat(&Dense::of(model), seq.symbols(), scaling_factors);
    Ok(ScaledBackward {
        scaled_beta: rows(beta, model.num_states()),
    })
}

pub fn posteriors(model: &HmmModel, seq: &ObservationSequence) -> Result<PosteriorMarginals> {
    check_sequence(model.num_symbols(), seq)?;
    posteriors_dense(&Dense::of(model), seq)
}

/// Same as [`posteriors`] but on an unchecked parameter set. Emission rows
/// are used as observation likelihoods and need not sum to one; the
/// initial and transition tables still must be distributions for the result
/// to mean anything.
pub fn posteriors_with_params(
    params: &ModelParams,
    seq: &ObservationSequence,
) -> Result<PosteriorMarginals> {
    check_sequence(params.num_symbols, seq)?;
    posteriors_dense(&Dense::of_params(params), seq)
}

/// `ln Pr(seq | model)`. Impossible sequences, including ones with symbols
/// outside the model's alphabet, give negative infinity.
pub fn sequence_log_likelihood(model: &HmmModel, seq: &ObservationSequence) -> f64 {
    if check_sequence(model.num_symbols(), seq).is_err() {
        return f64::NEG_INFINITY;
    }
    forward_flat(&Dense::of(model), seq.symbols())
        .map_or(f64::NEG_INFINITY, |(_, f)| log_likelihood_of(&f))
}

/// Most probable state path and its log-probability.
///
/// When several paths share the maximal score (up to
/// [`VITERBI_TIE_TOLERANCE`]) the lexicographically smallest one is
/// returned. Each state carries the rank of its best prefix among the
/// current step's prefixes; predecessor and final-state ties are resolved by
/// that rank, which orders candidates the same way as comparing whole paths.
pub fn viterbi_decode(model: &HmmModel, seq: &ObservationSequence) -> Result<(StatePath, f64)> {
    check_sequence(model.num_symbols(), seq)?;
    let d = Dense::of(model);
    let symbols = seq.symbols();
    let s = d.s;
    let n = symbols.len();
    let log_a: Vec<f64> = d.a.iter().map(|p| p.ln()).collect();
    let log_b: Vec<f64> = d.b_by_symbol.iter().map(|p| p.ln()).collect();
    let log_b_col = |y: usize| &log_b[y * s..(y + 1) * s];

    let mut delta: Vec<f64> = (0..s)
        .map(|i| d.initial[i].ln() + log_b_col(symbols[0])[i])
        .collect();
    let mut rank: Vec<usize> = (0..s).collect();
    let mut backpointers = vec![0usize; n.saturating_sub(1) * s];
    let mut first_impossible = delta.iter().all(|d| *d == f64::NEG_INFINITY).then_some(1);
    let mut next = vec![0.0; s];
    let mut order: Vec<usize> = (0..s).collect();
    let mut next_rank = vec![0; s];

    for (k, &y) in symbols.iter().enumerate().skip(1) {
        let back = &mut backpointers[(k - 1) * s..k * s];
        let lb = log_b_col(y);
        for j in 0..s {
            let mut best_i = 0;
            let mut best = delta[0] + log_a[j];
            for i in 1..s {
                let score = delta[i] + log_a[i * s + j];
                if strictly_better(score, best) || (tied(score, best) && rank[i] < rank[best_i]) {
                    best = score;
                    best_i = i;
                }
            }
            next[j] = best + lb[j];
            back[j] = best_i;
        }
        order.sort_by_key(|&j| (rank[back[j]], j));
        for (r, &j) in order.iter().enumerate() {
            next_rank[j] = r;
        }
        if first_impossible.is_none() && next.iter().all(|d| *d == f64::NEG_INFINITY) {
            first_impossible = Some(k + 1);
        }
        std::mem::swap(&mut delta, &mut next);
        std::mem::swap(&mut rank, &mut next_rank);
    }

    if let Some(step) = first_impossible {
        return Err(HmmError::ZeroProbabilitySequence { step });
    }

    let mut last = 0;
    for j in 1..s {
        if strictly_better(delta[j], delta[last])
            || (tied(delta[j], delta[last]) && rank[j] < rank[last])
        {
            last = j;
        }
    }
    let log_prob = delta[last];
    let mut path = vec![0; n];
    path[n - 1] = last;
    for k in (1..n).rev() {
        path[k - 1] = backpointers[(k - 1) * s + path[k]];
    }
    Ok((StatePath::new(path), log_prob))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{random_model, uniform_model, StateSpace};

    fn fixture() -> HmmModel {
        HmmModel::new(
            StateSpace::new(2, 2).unwrap(),
            vec![0.5, 0.5],
            vec![vec![0.7, 0.3], vec![0.4, 0.6]],
            vec![vec![0.9, 0.1], vec![0.2, 0.8]],
        )
        .unwrap()
    }

    fn seq(v: &[usize]) -> ObservationSequence {
        ObservationSequence::new(v.to_vec()).unwrap()
    }

    #[test]
    fn single_state_likelihood_is_power() {
        let m = HmmModel::new(
            StateSpace::new(1, 2).unwrap(),
            vec![1.0],
            vec![vec![1.0]],
            vec![vec![0.3, 0.7]],
        )
        .unwrap();
        let f = forward(&m, &seq(&[1, 1, 1, 1])).unwrap();
        assert!((f.log_likelihood - 4.0 * 0.7f64.ln()).abs() < 1e-14);
        let p = posteriors(&m, &seq(&[0, 1, 0])).unwrap();
        assert!(p.gamma.iter().all(|g| g == &vec![1.0]));
        let (path, _) = viterbi_decode(&m, &seq(&[0, 1, 0])).unwrap();
        assert_eq!(path.states(), &[0, 0, 0]);
    }

    #[test]
    fn impossible_first_symbol() {
        let m = HmmModel::new(
            StateSpace::new(2, 2).unwrap(),
            vec![0.5, 0.5],
            vec![vec![0.5, 0.5], vec![0.5, 0.5]],
            vec![vec![1.0, 0.0], vec![1.0, 0.0]],
        )
        .unwrap();
        assert!(matches!(
            forward(&m, &seq(&[1, 0])),
            Err(HmmError::ZeroProbabilitySequence { step: 1 })
        ));
        assert!(matches!(
            posteriors(&m, &seq(&[0, 1])),
            Err(HmmError::ZeroProbabilitySequence { step: 2 })
        ));
        assert!(matches!(
            viterbi_decode(&m, &seq(&[0, 0, 1])),
            Err(HmmError::ZeroProbabilitySequence { step: 3 })
        ));
        assert_eq!(
            sequence_log_likelihood(&m, &seq(&[0, 1])),
            f64::NEG_INFINITY
        );
    }

    #[test]
    fn deterministic_chain_has_log_likelihood_zero() {
        let m = HmmModel::new(
            StateSpace::new(2, 2).unwrap(),
            vec![1.0, 0.0],
            vec![vec![0.0, 1.0], vec![1.0, 0.0]],
            vec![vec![1.0, 0.0], vec![0.0, 1.0]],
        )
        .unwrap();
        assert_eq!(sequence_log_likelihood(&m, &seq(&[0, 1, 0, 1])), 0.0);
    }

    #[test]
    fn out_of_range_symbol() {
        let m = fixture();
        assert!(matches!(
            forward(&m, &seq(&[0, 2])),
            Err(HmmError::SymbolOutOfRange { position: 1, .. })
        ));
        assert_eq!(sequence_log_likelihood(&m, &seq(&[2])), f64::NEG_INFINITY);
    }

    #[test]
    fn backward_rejects_wrong_factor_count() {
        let m = fixture();
        assert!(matches!(
            backward(&m, &seq(&[0, 1]), &[1.0]),
            Err(HmmError::DimensionMismatch {
                expected: 2,
                found: 1,
                ..
            })
        ));
    }

    #[test]
    fn backward_final_row_is_ones() {
        let m = random_model(&StateSpace::new(3, 3).unwrap(), 4);
        let s = seq(&[0, 2, 1, 1]);
        let f = forward(&m, &s).unwrap();
        let b = backward(&m, &s, &f.scaling_factors).unwrap();
        assert_eq!(b.scaled_beta[3], vec![1.0; 3]);
    }

    #[test]
    fn marginals_are_consistent() {
        let m = random_model(&StateSpace::new(3, 4).unwrap(), 11);
        let s = seq(&[0, 3, 1, 1, 2, 0, 3]);
        let p = posteriors(&m, &s).unwrap();
        for (k, x) in p.xi.iter().enumerate() {
            let total: f64 = x.iter().flatten().sum();
            assert!((total - 1.0).abs() < 1e-9);
            for (i, row) in x.iter().enumerate() {
                let out: f64 = row.iter().sum();
                let inn: f64 = (0..3).map(|r| x[r][i]).sum();
                assert!((out - p.gamma[k][i]).abs() < 1e-9);
                assert!((inn - p.gamma[k + 1][i]).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn uniform_posteriors_are_prior() {
        let m = uniform_model(&StateSpace::new(3, 2).unwrap());
        let p = posteriors(&m, &seq(&[0, 1, 1])).unwrap();
        for g in &p.gamma {
            for &x in g {
                assert!((x - 1.0 / 3.0).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn exact_ties_take_the_lexicographically_smallest_path() {
        // (0,1) and (1,0) tie at 0.3; (0,0) and (1,1) score 0.2. Backtracking
        // greedily from the lowest final state would give (1,0).
        let m = HmmModel::new(
            StateSpace::new(2, 1).unwrap(),
            vec![0.5, 0.5],
            vec![vec![0.4, 0.6], vec![0.6, 0.4]],
            vec![vec![1.0], vec![1.0]],
        )
        .unwrap();
        let (path, lp) = viterbi_decode(&m, &seq(&[0, 0])).unwrap();
        assert_eq!(path.states(), &[0, 1]);
        assert_eq!(lp, 0.5f64.ln() + 0.6f64.ln());

        let u = uniform_model(&StateSpace::new(3, 2).unwrap());
        let (path, _) = viterbi_decode(&u, &seq(&[1, 0, 1, 1])).unwrap();
        assert_eq!(path.states(), &[0, 0, 0, 0]);
    }
}
