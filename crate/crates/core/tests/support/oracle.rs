//! Brute-force reference implementations that enumerate every hidden path.
//! Only usable for tiny instances (num_states^len paths), which is the point:
//! nothing here shares code with the library's dynamic programs.

#![allow(dead_code)]

use dsthmm_core::{
    forward, posteriors, sequence_log_likelihood, splitmix64, viterbi_decode, HmmError, HmmModel,
    ModelParams, ObservationSequence, StateSpace, VITERBI_TIE_TOLERANCE,
};

/// Plain parameter tables, so the oracle can take unnormalized emissions too.
#[derive(Debug, Clone)]
pub struct Tables {
    pub initial: Vec<f64>,
    pub transition: Vec<Vec<f64>>,
    pub emission: Vec<Vec<f64>>,
}

impl Tables {
    pub fn of(model: &HmmModel) -> Self {
        Self::from_params(&model.to_params())
    }

    pub fn from_params(p: &ModelParams) -> Self {
        Tables {
            initial: p.initial.clone(),
            transition: p.transition.clone(),
            emission: p.emission.clone(),
        }
    }

    pub fn num_states(&self) -> usize {
        self.initial.len()
    }
}

/// Calls `visit` with every path of `len` states, in lexicographic order.
pub fn for_each_path(num_states: usize, len: usize, mut visit: impl FnMut(&[usize])) {
    let mut path = vec![0usize; len];
    loop {
        visit(&path);
        let mut k = len;
        loop {
            if k == 0 {
                return;
            }
            k -= 1;
            path[k] += 1;
            if path[k] < num_states {
                break;
            }
            path[k] = 0;
        }
    }
}

pub fn joint_probability(t: &Tables, path: &[usize], seq: &[usize]) -> f64 {
    let mut p = t.initial[path[0]] * t.emission[path[0]][seq[0]];
    for k in 1..seq.len() {
        p *= t.transition[path[k - 1]][path[k]] * t.emission[path[k]][seq[k]];
    }
    p
}

#[derive(Debug, Clone)]
pub struct Marginals {
    pub likelihood: f64,
    /// `gamma[k][i]`; empty when the likelihood is zero.
    pub gamma: Vec<Vec<f64>>,
    /// `xi[k][i][j]` for the transition from turn k to k+1.
    pub xi: Vec<Vec<Vec<f64>>>,
}

pub fn marginals(t: &Tables, seq: &[usize]) -> Marginals {
    let s = t.num_states();
    let n = seq.len();
    let mut likelihood = 0.0;
    let mut gamma = vec![vec![0.0; s]; n];
    let mut xi = vec![vec![vec![0.0; s]; s]; n.saturating_sub(1)];
    for_each_path(s, n, |path| {
        let p = joint_probability(t, path, seq);
        likelihood += p;
        for k in 0..n {
            gamma[k][path[k]] += p;
            if k + 1 < n {
                xi[k][path[k]][path[k + 1]] += p;
            }
        }
    });
    if likelihood == 0.0 {
        return Marginals {
            likelihood,
            gamma: Vec::new(),
            xi: Vec::new(),
        };
    }
    gamma.iter_mut().flatten().for_each(|g| *g /= likelihood);
    xi.iter_mut()
        .flatten()
        .flatten()
        .for_each(|x| *x /= likelihood);
    Marginals {
        likelihood,
        gamma,
        xi,
    }
}

/// Log score of one path, accumulated in the same order as the decoder:
/// `(ln π + ln B)` for the first turn, then `(score + ln A) + ln B`.
pub fn path_log_score(t: &Tables, path: &[usize], seq: &[usize]) -> f64 {
    let mut score = t.initial[path[0]].ln() + t.emission[path[0]][seq[0]].ln();
    for k in 1..seq.len() {
        score = score + t.transition[path[k - 1]][path[k]].ln() + t.emission[path[k]][seq[k]].ln();
    }
    score
}

/// Most probable path; among ties (scores within the decoder's relative tie
/// tolerance) the lexicographically smallest.
/// `Err(step)` names the first 1-based turn at which every prefix is
/// impossible.
pub fn viterbi(t: &Tables, seq: &[usize]) -> Result<(Vec<usize>, f64), usize> {
    let s = t.num_states();
    for k in 1..=seq.len() {
        let mut any = false;
        for_each_path(s, k, |prefix| {
            any |= path_log_score(t, prefix, &seq[..k]) > f64::NEG_INFINITY
        });
        if !any {
            return Err(k);
        }
    }
    let mut best: Option<(Vec<usize>, f64)> = None;
    for_each_path(s, seq.len(), |path| {
        let score = path_log_score(t, path, seq);
        let beats = |b: f64| {
            if score == b || !(score.is_finite() && b.is_finite()) {
                score > b
            } else {
                score - b > VITERBI_TIE_TOLERANCE * score.abs().max(b.abs())
            }
        };
        if best.as_ref().is_none_or(|(_, b)| beats(*b)) {
            best = Some((path.to_vec(), score));
        }
    });
    Ok(best.expect("at least one path"))
}

pub fn log_likelihood(t: &Tables, seq: &[usize]) -> f64 {
    marginals(t, seq).likelihood.ln()
}

/// `|a - b| <= tol * max(|a|, |b|)`, with exact equality required at zero.
pub fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    a == b || (a - b).abs() <= tol * a.abs().max(b.abs())
}

/// Deterministic generator of small random instances. Every third model is
/// "coarse": entries drawn from {0, 1, 2, 3} before normalizing, which
/// produces zeros (impossible sequences) and exact Viterbi ties.
pub struct InstanceGen {
    state: u64,
}

impl InstanceGen {
    pub fn new(seed: u64) -> Self {
        InstanceGen { state: seed }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9E37_79B9_7F4A_7C15);
        splitmix64(self.state)
    }

    pub fn below(&mut self, n: usize) -> usize {
        (self.next_u64() % n as u64) as usize
    }

    fn unit(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 / (1u64 << 53) as f64
    }

    fn row(&mut self, len: usize, coarse: bool) -> Vec<f64> {
        loop {
            let raw: Vec<f64> = (0..len)
                .map(|_| {
                    if coarse {
                        self.below(4) as f64
                    } else {
                        0.01 + self.unit()
                    }
                })
                .collect();
            let total: f64 = raw.iter().sum();
            if total > 0.0 {
                return raw.iter().map(|x| x / total).collect();
            }
        }
    }

    pub fn model(&mut self, max_states: usize, max_symbols: usize) -> HmmModel {
        let s = 1 + self.below(max_states);
        let m = 1 + self.below(max_symbols);
        let coarse = self.below(3) == 0;
        let initial = self.row(s, coarse);
        let transition = (0..s).map(|_| self.row(s, coarse)).collect();
        let emission = (0..s).map(|_| self.row(m, coarse)).collect();
        HmmModel::new(
            StateSpace::new(s, m).unwrap(),
            initial,
            transition,
            emission,
        )
        .unwrap()
    }

    pub fn sequence(&mut self, num_symbols: usize, max_len: usize) -> ObservationSequence {
        let n = 1 + self.below(max_len);
        ObservationSequence::new((0..n).map(|_| self.below(num_symbols)).collect()).unwrap()
    }
}

/// Relative tolerance for likelihoods and marginals.
pub const ORACLE_TOL: f64 = 1e-10;

/// Compares every inference output on one instance; returns a description of
/// the first disagreement.
pub fn check_instance(model: &HmmModel, obs: &ObservationSequence) -> Result<(), String> {
    let t = Tables::of(model);
    let y = obs.symbols();
    let brute = marginals(&t, y);
    let brute_viterbi = viterbi(&t, y);

    if brute.likelihood == 0.0 {
        let step = brute_viterbi
            .as_ref()
            .expect_err("zero likelihood has no best path");
        match forward(model, obs) {
            Err(HmmError::ZeroProbabilitySequence { step: s }) if s == *step => {}
            other => {
                return Err(format!(
                    "forward on impossible sequence: {other:?}, oracle step {step}"
                ))
            }
        }
        match viterbi_decode(model, obs) {
            Err(HmmError::ZeroProbabilitySequence { step: s }) if s == *step => {}
            other => {
                return Err(format!(
                    "viterbi on impossible sequence: {other:?}, oracle step {step}"
                ))
            }
        }
        if sequence_log_likelihood(model, obs) != f64::NEG_INFINITY {
            return Err("impossible sequence has finite log-likelihood".into());
        }
        return Ok(());
    }

    let post = posteriors(model, obs).map_err(|e| e.to_string())?;
    let ll = post.log_likelihood;
    if !rel_close(ll.exp(), brute.likelihood, ORACLE_TOL) {
        return Err(format!(
            "likelihood {} vs oracle {}",
            ll.exp(),
            brute.likelihood
        ));
    }
    for (k, (row, brow)) in post.gamma.iter().zip(&brute.gamma).enumerate() {
        for (i, (g, b)) in row.iter().zip(brow).enumerate() {
            if !rel_close(*g, *b, ORACLE_TOL) {
                return Err(format!("gamma[{k}][{i}] {g} vs oracle {b}"));
            }
        }
    }
    if post.xi.len() != brute.xi.len() {
        return Err("xi length".into());
    }
    for (k, (m, bm)) in post.xi.iter().zip(&brute.xi).enumerate() {
        for i in 0..m.len() {
            for j in 0..m.len() {
                if !rel_close(m[i][j], bm[i][j], ORACLE_TOL) {
                    return Err(format!(
                        "xi[{k}][{i}][{j}] {} vs oracle {}",
                        m[i][j], bm[i][j]
                    ));
                }
            }
        }
    }
    let (path, score) = viterbi_decode(model, obs).map_err(|e| e.to_string())?;
    let (bpath, bscore) = brute_viterbi.map_err(|s| format!("oracle says impossible at {s}"))?;
    if path.states() != bpath.as_slice() || score.to_bits() != bscore.to_bits() {
        return Err(format!(
            "viterbi {:?} {score} vs oracle {bpath:?} {bscore}",
            path.states()
        ));
    }
    Ok(())
}
