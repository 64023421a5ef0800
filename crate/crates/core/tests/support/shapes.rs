//! Corpus shapes shared by the EM property tests.

#![allow(dead_code)]

use dsthmm_core::{
    generate_corpus, mix_seed, random_model, ConfusionChannel, DialogDomain, ObservationSequence,
    StateSpace,
};

#[derive(Debug, Clone, Copy)]
pub struct CorpusShape {
    pub name: &'static str,
    pub num_states: usize,
    pub num_symbols: usize,
    pub dialogs: usize,
    pub min_len: usize,
    pub max_len: usize,
}

pub const SHAPES: [CorpusShape; 3] = [
    CorpusShape {
        name: "one long sequence",
        num_states: 3,
        num_symbols: 4,
        dialogs: 1,
        min_len: 300,
        max_len: 300,
    },
    CorpusShape {
        name: "many short sequences",
        num_states: 2,
        num_symbols: 3,
        dialogs: 40,
        min_len: 1,
        max_len: 4,
    },
    CorpusShape {
        name: "dialog-sized sequences",
        num_states: 4,
        num_symbols: 4,
        dialogs: 30,
        min_len: 5,
        max_len: 20,
    },
];

impl CorpusShape {
    pub fn space(&self) -> StateSpace {
        StateSpace::new(self.num_states, self.num_symbols).unwrap()
    }

    /// Observations sampled from a random generating model.
    pub fn sample(&self, seed: u64) -> Vec<ObservationSequence> {
        let truth = random_model(&self.space(), mix_seed(seed, 11));
        let channel = ConfusionChannel::new(truth.emission().clone());
        let domain = DialogDomain::new(truth, channel).unwrap();
        generate_corpus(
            &domain,
            self.dialogs,
            self.min_len,
            self.max_len,
            mix_seed(seed, 12),
        )
        .unwrap()
        .into_iter()
        .map(|d| d.observed)
        .collect()
    }
}
